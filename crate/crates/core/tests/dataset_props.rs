use std::collections::BTreeMap;

use chrono::{TimeZone, Utc};
use proptest::prelude::*;
use relabel_core::dataset::{derive_version, load_dataset};
use relabel_core::{
    Choice, DatasetVersion, Item, Label, LabelSource, Payload, ReviewDecision, Span, Split, TaskKind,
};

fn item(id: usize, train: bool, class: u8, words: &[u8]) -> Item {
    let text: Vec<String> = words.iter().map(|w| format!("w{w}")).collect();
    Item::new(
        format!("it{id:03}"),
        if train { Split::Train } else { Split::Dev },
        Payload::Text(text.join(" ")),
        Label::Class(format!("c{class}")),
        LabelSource::Human,
    )
}

fn items_strategy() -> impl Strategy<Value = Vec<Item>> {
    prop::collection::vec(
        (any::<bool>(), 0u8..3, prop::collection::vec(0u8..20, 1..6)),
        1..30,
    )
    .prop_map(|raw| {
        raw.into_iter()
            .enumerate()
            .map(|(i, (train, class, words))| item(i, train, class, &words))
            .collect()
    })
}

fn decision(id: &str, round: u32, choice: Choice) -> ReviewDecision {
    ReviewDecision {
        item_id: id.into(),
        round,
        annotator_id: "p".into(),
        choice,
        submitted_at: Utc.timestamp_opt(0, 0).unwrap(),
    }
}

/// One decision per selected train item: keep, accept the reference or
/// write a fresh class.
fn decisions_for(v: &DatasetVersion, picks: &[(usize, u8)]) -> (Vec<ReviewDecision>, BTreeMap<String, Label>) {
    let train: Vec<&Item> = v.train_items().collect();
    let mut seen = BTreeMap::new();
    let mut refs = BTreeMap::new();
    if train.is_empty() {
        return (Vec::new(), refs);
    }
    for &(k, how) in picks {
        let it = train[k % train.len()];
        if seen.contains_key(&it.id) {
            continue;
        }
        let choice = match how % 3 {
            0 => Choice::KeepPrevious,
            1 => {
                refs.insert(it.id.clone(), Label::Class(format!("m{how}")));
                Choice::AcceptModel
            }
            _ => Choice::NewLabel(Label::Class(format!("n{how}"))),
        };
        seen.insert(it.id.clone(), decision(&it.id, v.round() + 1, choice));
    }
    (seen.into_values().collect(), refs)
}

proptest! {
    #[test]
    fn round_trip_is_byte_identical(items in items_strategy()) {
        let v = DatasetVersion::new_root(TaskKind::Classification, items).unwrap();
        let dir = tempfile::tempdir().unwrap();
        v.write_to(dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        prop_assert_eq!(back.items_jsonl(), v.items_jsonl());
        prop_assert_eq!(back.content_hash(), v.content_hash());
        let on_disk = std::fs::read_to_string(dir.path().join("items.jsonl")).unwrap();
        prop_assert_eq!(on_disk, v.items_jsonl());
    }

    #[test]
    fn hash_ignores_item_order(items in items_strategy(), seed in any::<u64>()) {
        let a = DatasetVersion::new_root(TaskKind::Classification, items.clone()).unwrap();
        let mut shuffled = items;
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed as usize ^ i.wrapping_mul(2654435761)) % (i + 1));
        }
        let b = DatasetVersion::new_root(TaskKind::Classification, shuffled).unwrap();
        prop_assert_eq!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn hash_sees_every_field(items in items_strategy(), which in any::<prop::sample::Index>(), field in 0u8..4) {
        let a = DatasetVersion::new_root(TaskKind::Classification, items.clone()).unwrap();
        let mut changed = items;
        let k = which.index(changed.len());
        let it = &mut changed[k];
        match field {
            0 => it.id.push('x'),
            1 => it.split = if it.is_train() { Split::Dev } else { Split::Train },
            2 => it.payload = Payload::Text(format!("{} extra", match &it.payload { Payload::Text(t) => t.clone(), _ => String::new() })),
            _ => {
                it.label = Label::Class("zz".into());
                it.label_history[0].label = Label::Class("zz".into());
            }
        }
        let b = DatasetVersion::new_root(TaskKind::Classification, changed).unwrap();
        prop_assert_ne!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn replaying_decisions_reproduces_the_chain(
        items in items_strategy(),
        rounds in prop::collection::vec(prop::collection::vec((any::<usize>(), any::<u8>()), 0..8), 1..4),
    ) {
        let v0 = DatasetVersion::new_root(TaskKind::Classification, items).unwrap();
        let mut chain = vec![v0.clone()];
        let mut log = Vec::new();
        for picks in &rounds {
            let parent = chain.last().unwrap();
            let (ds, refs) = decisions_for(parent, picks);
            let child = derive_version(parent, &ds, &refs, &[]).unwrap();
            // history never shrinks, dev never changes
            for (p, c) in parent.items().iter().zip(child.items()) {
                prop_assert!(c.label_history.len() >= p.label_history.len());
                if !p.is_train() {
                    prop_assert_eq!(&c.label, &p.label);
                }
            }
            log.push((ds, refs));
            chain.push(child);
        }
        let mut replay = v0;
        for (ds, refs) in &log {
            replay = derive_version(&replay, ds, refs, &[]).unwrap();
        }
        let last = chain.last().unwrap();
        prop_assert_eq!(replay.version_id(), last.version_id());
        prop_assert_eq!(replay.items_jsonl(), last.items_jsonl());
    }

    #[test]
    fn spans_of_one_class_never_overlap_after_validation(
        spans in prop::collection::vec((0usize..8, 1usize..4, 0u8..2), 0..6),
    ) {
        let spans: Vec<Span> = spans.into_iter().map(|(s, len, c)| Span::new(s, s + len, format!("E{c}"))).collect();
        let payload = Payload::Text("a b c d e f g h i j k".into());
        let label = Label::Spans(spans.clone()).normalized();
        if label.validate(TaskKind::Tagging, &payload).is_ok() {
            for a in &spans {
                for b in &spans {
                    if a != b && a.entity_class == b.entity_class {
                        prop_assert!(a.end <= b.start || b.end <= a.start);
                    }
                }
            }
        }
    }
}

#[test]
fn dev_decisions_are_rejected() {
    let v = DatasetVersion::new_root(TaskKind::Classification, vec![item(0, true, 0, &[1]), item(1, false, 0, &[2])]).unwrap();
    let err = derive_version(&v, &[decision("it001", 1, Choice::KeepPrevious)], &BTreeMap::new(), &[]).unwrap_err();
    assert!(matches!(err, relabel_core::Error::DevItem(_)));
}
