//! Task-generic items and labels, immutable dataset versions, content hashing
//! and the `manifest.json` / `items.jsonl` storage layout.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::jsonl;
use crate::review::{Choice, ReviewDecision};
use crate::tokenize::{token_count, TOKENIZER_NAME};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ITEMS_FILE: &str = "items.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classification,
    Tagging,
    Detection,
    Generation,
    Ctr,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::Classification,
        TaskKind::Tagging,
        TaskKind::Detection,
        TaskKind::Generation,
        TaskKind::Ctr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Classification => "classification",
            TaskKind::Tagging => "tagging",
            TaskKind::Detection => "detection",
            TaskKind::Generation => "generation",
            TaskKind::Ctr => "ctr",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown task kind {s:?}")))
    }
}

/// Token range `[start, end)` tagged with an entity class.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub entity_class: String,
}

impl Span {
    pub fn new(start: usize, end: usize, entity_class: impl Into<String>) -> Self {
        Span {
            start,
            end,
            entity_class: entity_class.into(),
        }
    }
}

/// Axis-aligned box in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub object_class: String,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64, object_class: impl Into<String>) -> Self {
        BBox {
            x_min,
            y_min,
            x_max,
            y_max,
            object_class: object_class.into(),
        }
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let coords = [self.x_min, self.y_min, self.x_max, self.y_max];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(format!("box {self:?} has non-finite coordinates"));
        }
        if !(self.x_min < self.x_max && self.y_min < self.y_max) {
            return Err(format!("box {self:?} does not have positive area"));
        }
        Ok(())
    }

    fn canonical_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.object_class
            .cmp(&other.object_class)
            .then(self.x_min.total_cmp(&other.x_min))
            .then(self.y_min.total_cmp(&other.y_min))
            .then(self.x_max.total_cmp(&other.x_max))
            .then(self.y_max.total_cmp(&other.y_max))
    }
}

/// A label (or a label-shaped prediction). The variant is fixed by the task.
///
/// Serialized externally tagged: `{"class":"A"}`, `{"spans":[..]}`,
/// `{"boxes":[..]}`, `{"text":"..."}`, `{"click":1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Class(String),
    Spans(Vec<Span>),
    Boxes(Vec<BBox>),
    Text(String),
    Click(u8),
}

impl Label {
    pub fn task(&self) -> TaskKind {
        match self {
            Label::Class(_) => TaskKind::Classification,
            Label::Spans(_) => TaskKind::Tagging,
            Label::Boxes(_) => TaskKind::Detection,
            Label::Text(_) => TaskKind::Generation,
            Label::Click(_) => TaskKind::Ctr,
        }
    }

    /// Put set-valued labels into canonical order (spans and boxes sorted,
    /// duplicate spans removed).
    pub fn normalize(&mut self) {
        match self {
            Label::Spans(spans) => {
                spans.sort();
                spans.dedup();
            }
            Label::Boxes(boxes) => boxes.sort_by(BBox::canonical_cmp),
            _ => {}
        }
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    /// Check the task invariants. `payload` is needed for span bounds.
    pub fn validate(&self, task: TaskKind, payload: &Payload) -> std::result::Result<(), String> {
        if self.task() != task {
            return Err(format!("{} label on a {task} dataset", self.task()));
        }
        match self {
            Label::Class(name) => {
                if name.is_empty() {
                    return Err("empty class name".into());
                }
            }
            Label::Spans(spans) => {
                let tokens = match payload {
                    Payload::Text(text) => token_count(text),
                    _ => return Err("tagging label requires a text payload".into()),
                };
                let mut by_class: BTreeMap<&str, Vec<&Span>> = BTreeMap::new();
                for span in spans {
                    if !(span.start < span.end && span.end <= tokens) {
                        return Err(format!(
                            "span {}..{} ({}) outside 0..{tokens} or empty",
                            span.start, span.end, span.entity_class
                        ));
                    }
                    by_class.entry(&span.entity_class).or_default().push(span);
                }
                for (class, mut group) in by_class {
                    group.sort();
                    for pair in group.windows(2) {
                        if pair[1].start < pair[0].end {
                            return Err(format!(
                                "overlapping {class} spans {}..{} and {}..{}",
                                pair[0].start, pair[0].end, pair[1].start, pair[1].end
                            ));
                        }
                    }
                }
            }
            Label::Boxes(boxes) => {
                for b in boxes {
                    b.validate()?;
                }
            }
            Label::Text(text) => {
                if token_count(text) == 0 {
                    return Err("generation output has no tokens".into());
                }
            }
            Label::Click(v) => {
                if *v > 1 {
                    return Err(format!("ctr label must be 0 or 1, got {v}"));
                }
            }
        }
        Ok(())
    }
}

/// Task input. Detection payloads are opaque image references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Text(String),
    Image(String),
    Features(BTreeMap<String, f64>),
}

impl Payload {
    fn validate(&self, task: TaskKind) -> std::result::Result<(), String> {
        let ok = matches!(
            (task, self),
            (TaskKind::Classification | TaskKind::Tagging | TaskKind::Generation, Payload::Text(_))
                | (TaskKind::Detection, Payload::Image(_))
                | (TaskKind::Ctr, Payload::Features(_))
        );
        if !ok {
            return Err(format!("payload kind does not match task {task}"));
        }
        if let Payload::Features(map) = self {
            if let Some((k, _)) = map.iter().find(|(_, v)| !v.is_finite()) {
                return Err(format!("feature {k:?} is not finite"));
            }
        }
        Ok(())
    }

    /// Text used for similarity grouping in the review queue.
    pub fn sort_text(&self) -> String {
        match self {
            Payload::Text(t) | Payload::Image(t) => t.clone(),
            Payload::Features(map) => map
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(" "),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSource {
    Human,
    HumanRelabel,
    Import,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub round: u32,
    pub source: LabelSource,
    pub label: Label,
}

/// One labeled item. On disk the keys appear in the order
/// `format, id, split, payload, label, label_history`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub split: Split,
    pub payload: Payload,
    pub label: Label,
    pub label_history: Vec<HistoryEntry>,
}

impl Item {
    /// New item whose history holds a single round-0 entry.
    pub fn new(id: impl Into<String>, split: Split, payload: Payload, label: Label, source: LabelSource) -> Self {
        let label = label.normalized();
        Item {
            id: id.into(),
            split,
            payload,
            label_history: vec![HistoryEntry {
                round: 0,
                source,
                label: label.clone(),
            }],
            label,
        }
    }

    pub fn is_train(&self) -> bool {
        self.split == Split::Train
    }

    fn normalize(&mut self) {
        self.label.normalize();
        for entry in &mut self.label_history {
            entry.label.normalize();
        }
    }

    pub fn validate(&self, task: TaskKind) -> Result<()> {
        let fail = |message: String| Error::InvalidItem {
            item_id: self.id.clone(),
            message,
        };
        if self.id.is_empty() {
            return Err(fail("empty id".into()));
        }
        self.payload.validate(task).map_err(fail)?;
        self.label.validate(task, &self.payload).map_err(fail)?;
        let last = self
            .label_history
            .last()
            .ok_or_else(|| fail("label_history is empty".into()))?;
        if last.label != self.label {
            return Err(fail("label differs from the last label_history entry".into()));
        }
        for pair in self.label_history.windows(2) {
            if pair[1].round < pair[0].round {
                return Err(fail("label_history is not ordered by round".into()));
            }
        }
        for entry in &self.label_history {
            entry.label.validate(task, &self.payload).map_err(fail)?;
        }
        Ok(())
    }

    /// Canonical single-line serialization (the exact `items.jsonl` line).
    pub fn canonical_line(&self) -> String {
        jsonl::to_line(self).expect("items always serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version_id: String,
    pub parent_version: Option<String>,
    pub task: TaskKind,
    pub round: u32,
    pub item_count: usize,
    pub content_hash: String,
    pub tokenizer: String,
}

/// Immutable snapshot of a labeled dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetVersion {
    version_id: String,
    parent_version: Option<String>,
    task: TaskKind,
    round: u32,
    tokenizer: String,
    items: Vec<Item>,
    content_hash: String,
}

/// SHA-256 over the canonical item lines, sorted by id, each terminated by `\n`.
pub fn content_hash(items: &[Item]) -> String {
    let mut sorted: Vec<&Item> = items.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut hasher = Sha256::new();
    for item in sorted {
        hasher.update(item.canonical_line().as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

fn version_id(round: u32, hash: &str) -> String {
    format!("v{round}-{}", &hash[..12])
}

impl DatasetVersion {
    /// Build a round-0 version from freshly imported items.
    pub fn new_root(task: TaskKind, items: Vec<Item>) -> Result<Self> {
        Self::assemble(task, None, 0, items)
    }

    fn assemble(task: TaskKind, parent_version: Option<String>, round: u32, mut items: Vec<Item>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(items.len());
        for item in &mut items {
            item.normalize();
            item.validate(task)?;
            if !seen.insert(item.id.clone()) {
                return Err(Error::DuplicateId(item.id.clone()));
            }
        }
        let hash = content_hash(&items);
        Ok(DatasetVersion {
            version_id: version_id(round, &hash),
            parent_version,
            task,
            round,
            tokenizer: TOKENIZER_NAME.to_owned(),
            items,
            content_hash: hash,
        })
    }

    pub fn version_id(&self) -> &str {
        &self.version_id
    }

    pub fn parent_version(&self) -> Option<&str> {
        self.parent_version.as_deref()
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn tokenizer(&self) -> &str {
        &self.tokenizer
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn content_hash(&self) -> &str {
        &self.content_hash
    }

    pub fn get(&self, id: &str) -> Option<&Item> {
        self.items.iter().find(|i| i.id == id)
    }

    pub fn train_items(&self) -> impl Iterator<Item = &Item> {
        self.items.iter().filter(|i| i.is_train())
    }

    pub fn dev_items(&self) -> impl Iterator<Item = &Item> {
        self.items.iter().filter(|i| !i.is_train())
    }

    pub fn index(&self) -> BTreeMap<&str, &Item> {
        self.items.iter().map(|i| (i.id.as_str(), i)).collect()
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            version_id: self.version_id.clone(),
            parent_version: self.parent_version.clone(),
            task: self.task,
            round: self.round,
            item_count: self.items.len(),
            content_hash: self.content_hash.clone(),
            tokenizer: self.tokenizer.clone(),
        }
    }

    /// Contents of `items.jsonl`, items in dataset order.
    pub fn items_jsonl(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            out.push_str(&item.canonical_line());
            out.push('\n');
        }
        out
    }

    /// Write `manifest.json` and `items.jsonl` into a fresh directory. The
    /// directory is assembled under a temporary name and renamed into place.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        if dir.join(MANIFEST_FILE).exists() {
            let existing = load_dataset(dir)?;
            if existing.content_hash == self.content_hash && existing.version_id == self.version_id {
                return Ok(());
            }
        }
        let tmp = jsonl::tmp_sibling(dir);
        let io = |e| Error::io(format!("write version {}", dir.display()), e);
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(io)?;
        }
        fs::create_dir_all(&tmp).map_err(io)?;
        jsonl::write_atomic(&tmp.join(ITEMS_FILE), self.items_jsonl().as_bytes())?;
        jsonl::write_json(&tmp.join(MANIFEST_FILE), &self.manifest())?;
        if dir.exists() {
            fs::remove_dir_all(dir).map_err(io)?;
        }
        fs::rename(&tmp, dir).map_err(io)
    }
}

/// Load and fully validate a version directory.
pub fn load_dataset(dir: &Path) -> Result<DatasetVersion> {
    let manifest: Manifest = jsonl::read_json(&dir.join(MANIFEST_FILE))?;
    let items: Vec<Item> = jsonl::read_records(&dir.join(ITEMS_FILE))?;
    if items.len() != manifest.item_count {
        return Err(Error::Malformed {
            path: dir.join(MANIFEST_FILE),
            line: 1,
            message: format!(
                "item_count {} but items file has {} records",
                manifest.item_count,
                items.len()
            ),
        });
    }
    if manifest.round == 0 && manifest.parent_version.is_some() {
        return Err(Error::Config("round-0 version must not have a parent".into()));
    }
    if manifest.round > 0 && manifest.parent_version.is_none() {
        return Err(Error::Config(format!(
            "round-{} version {} has no parent",
            manifest.round, manifest.version_id
        )));
    }
    let mut version = DatasetVersion::assemble(manifest.task, manifest.parent_version.clone(), manifest.round, items)?;
    if version.content_hash != manifest.content_hash {
        return Err(Error::HashMismatch {
            expected: manifest.content_hash,
            actual: version.content_hash,
        });
    }
    version.version_id = manifest.version_id;
    version.tokenizer = manifest.tokenizer;
    Ok(version)
}

/// Apply resolved review decisions (and, for ctr, drops) to produce the next
/// version. `model_refs` supplies the model label for `accept_model` choices.
pub fn derive_version(
    parent: &DatasetVersion,
    decisions: &[ReviewDecision],
    model_refs: &BTreeMap<String, Label>,
    drops: &[String],
) -> Result<DatasetVersion> {
    let round = parent.round + 1;
    let index = parent.index();

    let mut updates: BTreeMap<&str, Label> = BTreeMap::new();
    for decision in decisions {
        let item = index
            .get(decision.item_id.as_str())
            .ok_or_else(|| Error::UnknownItem(decision.item_id.clone()))?;
        if !item.is_train() {
            return Err(Error::DevItem(item.id.clone()));
        }
        let label = match &decision.choice {
            Choice::KeepPrevious => item.label.clone(),
            Choice::AcceptModel => model_refs
                .get(&decision.item_id)
                .cloned()
                .ok_or_else(|| Error::InvalidDecision {
                    item_id: decision.item_id.clone(),
                    message: "accept_model without a model reference".into(),
                })?,
            Choice::NewLabel(label) => label.clone(),
        }
        .normalized();
        label
            .validate(parent.task, &item.payload)
            .map_err(|message| Error::InvalidDecision {
                item_id: decision.item_id.clone(),
                message,
            })?;
        if updates.insert(decision.item_id.as_str(), label).is_some() {
            return Err(Error::DuplicateDecision(decision.item_id.clone()));
        }
    }

    let mut dropped = BTreeSet::new();
    for id in drops {
        if parent.task != TaskKind::Ctr {
            return Err(Error::DropNotAllowed(id.clone()));
        }
        let item = index.get(id.as_str()).ok_or_else(|| Error::UnknownItem(id.clone()))?;
        if !item.is_train() {
            return Err(Error::DevItem(id.clone()));
        }
        dropped.insert(id.as_str());
    }

    let items = parent
        .items
        .iter()
        .filter(|item| !dropped.contains(item.id.as_str()))
        .map(|item| {
            let mut item = item.clone();
            if let Some(label) = updates.remove(item.id.as_str()) {
                item.label_history.push(HistoryEntry {
                    round,
                    source: LabelSource::HumanRelabel,
                    label: label.clone(),
                });
                item.label = label;
            }
            item
        })
        .collect();

    DatasetVersion::assemble(parent.task, Some(parent.version_id.clone()), round, items)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDiff {
    pub item_id: String,
    pub old: Label,
    /// `None` when the item was dropped.
    pub new: Option<Label>,
}

/// Items whose label changed (or which were dropped) between `a` and a
/// descendant `b`. Versions are related when they share a task, `b` is not
/// older than `a`, and every item of `b` exists in `a` with the same payload.
pub fn diff_versions(a: &DatasetVersion, b: &DatasetVersion) -> Result<Vec<LabelDiff>> {
    let unrelated = || Error::UnrelatedVersions(a.version_id.clone(), b.version_id.clone());
    if a.task != b.task || b.round < a.round {
        return Err(unrelated());
    }
    let a_index = a.index();
    let b_index = b.index();
    for item in &b.items {
        match a_index.get(item.id.as_str()) {
            Some(old) if old.payload == item.payload && old.split == item.split => {}
            _ => return Err(unrelated()),
        }
    }
    Ok(a.items
        .iter()
        .filter_map(|old| match b_index.get(old.id.as_str()) {
            None => Some(LabelDiff {
                item_id: old.id.clone(),
                old: old.label.clone(),
                new: None,
            }),
            Some(new) if new.label != old.label => Some(LabelDiff {
                item_id: old.id.clone(),
                old: old.label.clone(),
                new: Some(new.label.clone()),
            }),
            Some(_) => None,
        })
        .collect())
}
