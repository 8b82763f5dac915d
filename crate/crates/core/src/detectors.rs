//! Noisy-label judgments: compare model predictions with the current human
//! labels of the train split and flag disagreements.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::dataset::{BBox, DatasetVersion, Item, Label, Payload, Span, TaskKind};
use crate::metrics::{common_token_count, iou, sentence_bleu, BleuConfig};
use crate::tokenize::tokenize;
use crate::{Error, Result};

/// One model output for one item. In `preds.jsonl` the keys are
/// `format, item_id, prediction, score, model_id, round`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub item_id: String,
    #[serde(rename = "prediction")]
    pub value: Label,
    #[serde(default)]
    pub score: Option<f64>,
    pub model_id: String,
    pub round: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenerationMode {
    /// Flag when model output and origin output share no token.
    CommonToken,
    /// Flag when sentence BLEU falls below the threshold.
    Bleu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub task: TaskKind,
    pub iou_threshold: f64,
    pub generation_mode: GenerationMode,
    pub bleu_threshold: f64,
    pub ctr_threshold: f64,
    #[serde(default)]
    pub entity_class_filter: Option<String>,
}

impl DetectorConfig {
    pub fn new(task: TaskKind) -> Self {
        DetectorConfig {
            task,
            iou_threshold: 0.5,
            generation_mode: GenerationMode::CommonToken,
            bleu_threshold: 0.3,
            ctr_threshold: 0.9,
            entity_class_filter: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("iou_threshold", self.iou_threshold),
            ("bleu_threshold", self.bleu_threshold),
            ("ctr_threshold", self.ctr_threshold),
        ] {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {value}")));
            }
        }
        if self.entity_class_filter.is_some() && self.task != TaskKind::Tagging {
            return Err(Error::Config("entity_class_filter only applies to tagging".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowIouPair {
    pub human: BBox,
    pub model: BBox,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FlagReason {
    LabelMismatch {
        predicted: String,
        human: String,
    },
    SpanMismatch {
        entity_classes: Vec<String>,
        missing_spans: Vec<Span>,
        spurious_spans: Vec<Span>,
    },
    BoxMismatch {
        unmatched_human: Vec<BBox>,
        unmatched_model: Vec<BBox>,
        low_iou_pairs: Vec<LowIouPair>,
    },
    GenerationMismatch {
        metric: GenerationMode,
        value: f64,
    },
    CtrDisagreement {
        score: f64,
        label: u8,
        gap: f64,
    },
}

impl FlagReason {
    pub fn kind(&self) -> &'static str {
        match self {
            FlagReason::LabelMismatch { .. } => "label-mismatch",
            FlagReason::SpanMismatch { .. } => "span-mismatch",
            FlagReason::BoxMismatch { .. } => "box-mismatch",
            FlagReason::GenerationMismatch { .. } => "generation-mismatch",
            FlagReason::CtrDisagreement { .. } => "ctr-disagreement",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlagAction {
    Relabel,
    Drop,
}

/// A verdict that one train item is noisy. Keys in `flags-round-N.jsonl`:
/// `format, item_id, round, reason, severity, action`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseFlag {
    pub item_id: String,
    pub round: u32,
    pub reason: FlagReason,
    pub severity: f64,
    pub action: FlagAction,
}

fn check_task(version: &DatasetVersion, expected: TaskKind) -> Result<()> {
    if version.task() != expected {
        return Err(Error::TaskMismatch {
            expected: expected.to_string(),
            found: version.task().to_string(),
        });
    }
    Ok(())
}

fn validate_prediction(task: TaskKind, payload: &Payload, pred: &Prediction) -> Result<()> {
    let invalid = |message: String| Error::InvalidPrediction {
        item_id: pred.item_id.clone(),
        message,
    };
    if let Some(score) = pred.score {
        if !(0.0..=1.0).contains(&score) {
            return Err(invalid(format!("score {score} outside [0, 1]")));
        }
    }
    match &pred.value {
        // a model may legitimately produce an empty sentence
        Label::Text(_) if task == TaskKind::Generation => Ok(()),
        value => value.clone().normalized().validate(task, payload).map_err(invalid),
    }
}

/// Index predictions by item id and check that every train item is covered
/// exactly once.
pub fn index_predictions<'a>(
    version: &DatasetVersion,
    preds: &'a [Prediction],
) -> Result<HashMap<&'a str, &'a Prediction>> {
    let items = version.index();
    let mut index = HashMap::with_capacity(preds.len());
    for pred in preds {
        let item = items
            .get(pred.item_id.as_str())
            .ok_or_else(|| Error::UnknownItem(pred.item_id.clone()))?;
        validate_prediction(version.task(), &item.payload, pred)?;
        if index.insert(pred.item_id.as_str(), pred).is_some() {
            return Err(Error::DuplicatePrediction(pred.item_id.clone()));
        }
    }
    if let Some(missing) = version.train_items().find(|i| !index.contains_key(i.id.as_str())) {
        return Err(Error::MissingPrediction(missing.id.clone()));
    }
    Ok(index)
}

fn relabel(item: &Item, round: u32, reason: FlagReason, severity: f64) -> NoiseFlag {
    NoiseFlag {
        item_id: item.id.clone(),
        round,
        reason,
        severity,
        action: FlagAction::Relabel,
    }
}

/// Flag train items whose predicted class differs from the human class.
pub fn detect_classification(version: &DatasetVersion, preds: &[Prediction]) -> Result<Vec<NoiseFlag>> {
    check_task(version, TaskKind::Classification)?;
    let index = index_predictions(version, preds)?;
    let round = version.round() + 1;
    Ok(version
        .train_items()
        .filter_map(|item| match (&item.label, &index[item.id.as_str()].value) {
            (Label::Class(human), Label::Class(predicted)) if human != predicted => Some(relabel(
                item,
                round,
                FlagReason::LabelMismatch {
                    predicted: predicted.clone(),
                    human: human.clone(),
                },
                1.0,
            )),
            _ => None,
        })
        .collect())
}

fn spans_of(label: &Label) -> &[Span] {
    match label {
        Label::Spans(spans) => spans,
        _ => &[],
    }
}

/// Entity classes present in the current labels or in the predictions.
pub fn entity_classes(version: &DatasetVersion, preds: &[Prediction]) -> BTreeSet<String> {
    version
        .items()
        .iter()
        .map(|i| &i.label)
        .chain(preds.iter().map(|p| &p.value))
        .flat_map(|l| spans_of(l).iter().map(|s| s.entity_class.clone()))
        .collect()
}

fn span_diff(item: &Item, pred: &Prediction, class: &str) -> Option<(Vec<Span>, Vec<Span>)> {
    let gold: BTreeSet<&Span> = spans_of(&item.label).iter().filter(|s| s.entity_class == class).collect();
    let predicted: BTreeSet<&Span> = spans_of(&pred.value).iter().filter(|s| s.entity_class == class).collect();
    if gold == predicted {
        return None;
    }
    Some((
        gold.difference(&predicted).map(|s| (*s).clone()).collect(),
        predicted.difference(&gold).map(|s| (*s).clone()).collect(),
    ))
}

/// Treat one entity class as its own classification problem: flag items
/// whose gold and predicted span sets for that class differ.
pub fn detect_tagging(version: &DatasetVersion, preds: &[Prediction], entity_class: &str) -> Result<Vec<NoiseFlag>> {
    check_task(version, TaskKind::Tagging)?;
    if !entity_classes(version, preds).contains(entity_class) {
        return Err(Error::UnknownEntityClass(entity_class.to_owned()));
    }
    let index = index_predictions(version, preds)?;
    let round = version.round() + 1;
    Ok(version
        .train_items()
        .filter_map(|item| {
            let (missing, spurious) = span_diff(item, index[item.id.as_str()], entity_class)?;
            Some(relabel(
                item,
                round,
                FlagReason::SpanMismatch {
                    entity_classes: vec![entity_class.to_owned()],
                    missing_spans: missing,
                    spurious_spans: spurious,
                },
                1.0,
            ))
        })
        .collect())
}

/// Union of [`detect_tagging`] over every entity class; an item flagged for
/// several classes yields one flag listing all of them.
pub fn detect_tagging_all(version: &DatasetVersion, preds: &[Prediction]) -> Result<Vec<NoiseFlag>> {
    check_task(version, TaskKind::Tagging)?;
    let mut merged: BTreeMap<String, NoiseFlag> = BTreeMap::new();
    for class in entity_classes(version, preds) {
        for flag in detect_tagging(version, preds, &class)? {
            match merged.get_mut(&flag.item_id) {
                None => {
                    merged.insert(flag.item_id.clone(), flag);
                }
                Some(existing) => {
                    if let (
                        FlagReason::SpanMismatch {
                            entity_classes,
                            missing_spans,
                            spurious_spans,
                        },
                        FlagReason::SpanMismatch {
                            entity_classes: c,
                            missing_spans: m,
                            spurious_spans: s,
                        },
                    ) = (&mut existing.reason, flag.reason)
                    {
                        entity_classes.extend(c);
                        missing_spans.extend(m);
                        spurious_spans.extend(s);
                        missing_spans.sort();
                        spurious_spans.sort();
                    }
                }
            }
        }
    }
    // also surfaces a missing-prediction error when there are no classes at all
    let _ = index_predictions(version, preds)?;
    Ok(version
        .train_items()
        .filter_map(|item| merged.remove(&item.id))
        .collect())
}

fn boxes_of(label: &Label) -> &[BBox] {
    match label {
        Label::Boxes(b) => b,
        _ => &[],
    }
}

/// Result of greedily matching one item's model boxes to its human boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxMatching {
    pub matched: Vec<(usize, usize, f64)>,
    pub unmatched_human: Vec<usize>,
    pub unmatched_model: Vec<usize>,
}

/// Per object class, pair boxes in descending IoU order, each box used at
/// most once. Ties go to the lower human index, then the lower model index.
/// Pairs with zero overlap are never matched.
pub fn match_boxes(human: &[BBox], model: &[BBox]) -> BoxMatching {
    let mut candidates = Vec::new();
    for (h, hb) in human.iter().enumerate() {
        for (m, mb) in model.iter().enumerate() {
            if hb.object_class != mb.object_class {
                continue;
            }
            let overlap = iou(hb, mb);
            if overlap > 0.0 {
                candidates.push((h, m, overlap));
            }
        }
    }
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut human_used = vec![false; human.len()];
    let mut model_used = vec![false; model.len()];
    let mut matched = Vec::new();
    for (h, m, overlap) in candidates {
        if !human_used[h] && !model_used[m] {
            human_used[h] = true;
            model_used[m] = true;
            matched.push((h, m, overlap));
        }
    }
    matched.sort_by_key(|&(h, m, _)| (h, m));
    BoxMatching {
        matched,
        unmatched_human: (0..human.len()).filter(|&i| !human_used[i]).collect(),
        unmatched_model: (0..model.len()).filter(|&i| !model_used[i]).collect(),
    }
}

/// Evaluate one item's boxes; `None` when human and model boxes agree.
pub fn judge_boxes(human: &[BBox], model: &[BBox], iou_threshold: f64) -> Option<(FlagReason, f64)> {
    let m = match_boxes(human, model);
    let low: Vec<LowIouPair> = m
        .matched
        .iter()
        .filter(|&&(_, _, overlap)| overlap < iou_threshold)
        .map(|&(h, mi, overlap)| LowIouPair {
            human: human[h].clone(),
            model: model[mi].clone(),
            iou: overlap,
        })
        .collect();
    if m.unmatched_human.is_empty() && m.unmatched_model.is_empty() && low.is_empty() {
        return None;
    }
    let severity = if m.unmatched_human.is_empty() && m.unmatched_model.is_empty() {
        1.0 - m.matched.iter().map(|&(_, _, o)| o).fold(f64::INFINITY, f64::min)
    } else {
        1.0
    };
    Some((
        FlagReason::BoxMismatch {
            unmatched_human: m.unmatched_human.iter().map(|&i| human[i].clone()).collect(),
            unmatched_model: m.unmatched_model.iter().map(|&i| model[i].clone()).collect(),
            low_iou_pairs: low,
        },
        severity,
    ))
}

/// Flag items whose model boxes are far from the human boxes (unmatched
/// boxes on either side, or a matched pair below the IoU threshold).
pub fn detect_boxes(version: &DatasetVersion, preds: &[Prediction], cfg: &DetectorConfig) -> Result<Vec<NoiseFlag>> {
    check_task(version, TaskKind::Detection)?;
    cfg.validate()?;
    let index = index_predictions(version, preds)?;
    let round = version.round() + 1;
    Ok(version
        .train_items()
        .filter_map(|item| {
            let (reason, severity) = judge_boxes(
                boxes_of(&item.label),
                boxes_of(&index[item.id.as_str()].value),
                cfg.iou_threshold,
            )?;
            Some(relabel(item, round, reason, severity))
        })
        .collect())
}

fn text_of(label: &Label) -> &str {
    match label {
        Label::Text(t) => t,
        _ => "",
    }
}

/// Similarity of a generated output to the origin output under `mode`:
/// for common-token, 1 when any token is shared and 0 otherwise.
pub fn generation_similarity(model: &str, origin: &str, mode: GenerationMode) -> Result<f64> {
    let model = tokenize(model);
    let origin = tokenize(origin);
    match mode {
        GenerationMode::CommonToken => Ok(if common_token_count(&model, &origin) > 0 { 1.0 } else { 0.0 }),
        GenerationMode::Bleu => sentence_bleu(&model, &origin, &BleuConfig::default()),
    }
}

pub fn detect_generation(version: &DatasetVersion, preds: &[Prediction], cfg: &DetectorConfig) -> Result<Vec<NoiseFlag>> {
    check_task(version, TaskKind::Generation)?;
    cfg.validate()?;
    let index = index_predictions(version, preds)?;
    let round = version.round() + 1;
    let mut flags = Vec::new();
    for item in version.train_items() {
        let model = text_of(&index[item.id.as_str()].value);
        let origin = text_of(&item.label);
        let (flagged, value, severity) = match cfg.generation_mode {
            GenerationMode::CommonToken => {
                let shared = common_token_count(&tokenize(model), &tokenize(origin));
                (shared == 0, shared as f64, 1.0)
            }
            GenerationMode::Bleu => {
                let bleu = generation_similarity(model, origin, GenerationMode::Bleu)?;
                (bleu < cfg.bleu_threshold, bleu, 1.0 - bleu)
            }
        };
        if flagged {
            flags.push(relabel(
                item,
                round,
                FlagReason::GenerationMismatch {
                    metric: cfg.generation_mode,
                    value,
                },
                severity,
            ));
        }
    }
    Ok(flags)
}

/// Flag (for dropping) items where the predicted score and the 0/1 label are
/// further apart than the threshold.
pub fn detect_ctr(version: &DatasetVersion, preds: &[Prediction], cfg: &DetectorConfig) -> Result<Vec<NoiseFlag>> {
    check_task(version, TaskKind::Ctr)?;
    cfg.validate()?;
    let index = index_predictions(version, preds)?;
    let round = version.round() + 1;
    let mut flags = Vec::new();
    for item in version.train_items() {
        let pred = index[item.id.as_str()];
        let score = pred.score.ok_or_else(|| Error::InvalidPrediction {
            item_id: item.id.clone(),
            message: "ctr prediction without a score".into(),
        })?;
        let Label::Click(label) = item.label else {
            continue;
        };
        let gap = (score - label as f64).abs();
        if gap > cfg.ctr_threshold {
            flags.push(NoiseFlag {
                item_id: item.id.clone(),
                round,
                reason: FlagReason::CtrDisagreement { score, label, gap },
                severity: gap,
                action: FlagAction::Drop,
            });
        }
    }
    Ok(flags)
}

/// Dispatch on the configured task. Tagging without a class filter scans
/// every entity class.
pub fn detect(version: &DatasetVersion, preds: &[Prediction], cfg: &DetectorConfig) -> Result<Vec<NoiseFlag>> {
    cfg.validate()?;
    check_task(version, cfg.task)?;
    match cfg.task {
        TaskKind::Classification => detect_classification(version, preds),
        TaskKind::Tagging => match &cfg.entity_class_filter {
            Some(class) => detect_tagging(version, preds, class),
            None => detect_tagging_all(version, preds),
        },
        TaskKind::Detection => detect_boxes(version, preds, cfg),
        TaskKind::Generation => detect_generation(version, preds, cfg),
        TaskKind::Ctr => detect_ctr(version, preds, cfg),
    }
}
