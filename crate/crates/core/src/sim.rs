//! Synthetic datasets with known truth, controlled label noise, simulated
//! annotators and detection scoring.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::TrainConfig;
use crate::dataset::{BBox, DatasetVersion, Item, Label, LabelSource, Payload, Span, Split, TaskKind};
use crate::detectors::{generation_similarity, judge_boxes, DetectorConfig, GenerationMode, NoiseFlag, Prediction};
use crate::hashing::mix64;
use crate::loop_engine::{PredictionSource, RelabelLoop};
use crate::metrics::Prf1;
use crate::review::{Choice, ReviewDecision, ReviewMode, ReviewTask};
use crate::tokenize::tokenize;
use crate::{Error, Result};

/// Ground-truth label per item id.
pub type Truth = BTreeMap<String, Label>;

pub const CANVAS: f64 = 1000.0;
const TRAIN_FRACTION: f64 = 0.8;
const CTR_FEATURES: usize = 32;
const CTR_SHARPNESS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum NoiseKind {
    UniformClassFlip,
    SpanDrop,
    BoxJitter { max_shift: f64 },
    GenerationReplace,
    CtrFlip,
}

impl NoiseKind {
    pub fn default_for(task: TaskKind) -> Self {
        match task {
            TaskKind::Classification => NoiseKind::UniformClassFlip,
            TaskKind::Tagging => NoiseKind::SpanDrop,
            TaskKind::Detection => NoiseKind::BoxJitter { max_shift: 200.0 },
            TaskKind::Generation => NoiseKind::GenerationReplace,
            TaskKind::Ctr => NoiseKind::CtrFlip,
        }
    }

    fn task(self) -> TaskKind {
        match self {
            NoiseKind::UniformClassFlip => TaskKind::Classification,
            NoiseKind::SpanDrop => TaskKind::Tagging,
            NoiseKind::BoxJitter { .. } => TaskKind::Detection,
            NoiseKind::GenerationReplace => TaskKind::Generation,
            NoiseKind::CtrFlip => TaskKind::Ctr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub rate: f64,
    pub kind: NoiseKind,
    pub seed: u64,
}

/// Shape of generated text documents. Core tokens are drawn from a per-class
/// vocabulary with Zipf-distributed frequencies; filler is shared by all
/// classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextShape {
    pub core_vocab: usize,
    pub core_tokens: usize,
    pub filler_vocab: usize,
    pub filler_tokens: usize,
    pub zipf_exponent: f64,
}

impl TextShape {
    /// Standard fixtures. Tagging draws entity tokens from `core_vocab` per
    /// entity class.
    pub fn for_task(task: TaskKind) -> Self {
        let core_vocab = if task == TaskKind::Tagging { 60 } else { 300 };
        TextShape {
            core_vocab,
            core_tokens: 4,
            filler_vocab: 60,
            filler_tokens: 6,
            zipf_exponent: 1.0,
        }
    }
}

fn zipf(n: usize, s: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|k| (k as f64).powf(-s))).expect("non-empty vocabulary")
}

fn class_name(c: usize) -> String {
    format!("c{c}")
}

fn entity_name(c: usize) -> String {
    format!("E{c}")
}

fn item_id(i: usize) -> String {
    format!("s{i:06}")
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Generate `n` items with labels equal to the returned truth. Items are
/// assigned classes round-robin; the first 80% are train, the rest dev.
/// `classes` counts text classes, entity classes or object classes; ctr
/// items are always binary.
pub fn generate_dataset(task: TaskKind, n: usize, classes: usize, seed: u64) -> Result<(DatasetVersion, Truth)> {
    generate_dataset_with(task, n, classes, seed, TextShape::for_task(task))
}

pub fn generate_dataset_with(
    task: TaskKind,
    n: usize,
    classes: usize,
    seed: u64,
    shape: TextShape,
) -> Result<(DatasetVersion, Truth)> {
    if n < 10 {
        return Err(Error::Config(format!("need at least 10 items, got {n}")));
    }
    if classes < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {classes}")));
    }
    if shape.core_vocab == 0 || shape.filler_vocab == 0 || shape.core_tokens == 0 {
        return Err(Error::Config("text shape needs non-empty vocabularies".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_train = (n as f64 * TRAIN_FRACTION).round() as usize;
    let ctr_weights: Vec<f64> = (0..CTR_FEATURES).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut items = Vec::with_capacity(n);
    let mut truth = Truth::new();
    for i in 0..n {
        let split = if i < n_train { Split::Train } else { Split::Dev };
        let (payload, label) = match task {
            TaskKind::Classification => gen_classification(&mut rng, i % classes, &shape),
            TaskKind::Tagging => gen_tagging(&mut rng, classes, &shape),
            TaskKind::Detection => gen_detection(&mut rng, i, classes),
            TaskKind::Generation => gen_generation(&mut rng, &shape),
            TaskKind::Ctr => gen_ctr(&mut rng, &ctr_weights),
        };
        let id = item_id(i);
        truth.insert(id.clone(), label.clone().normalized());
        items.push(Item::new(id, split, payload, label, LabelSource::Human));
    }
    Ok((DatasetVersion::new_root(task, items)?, truth))
}

fn gen_classification(rng: &mut ChaCha8Rng, class: usize, shape: &TextShape) -> (Payload, Label) {
    let core = zipf(shape.core_vocab, shape.zipf_exponent);
    let mut tokens: Vec<String> = (0..shape.core_tokens)
        .map(|_| format!("k{class}t{}", core.sample(rng)))
        .collect();
    tokens.extend((0..shape.filler_tokens).map(|_| format!("w{}", rng.random_range(0..shape.filler_vocab))));
    tokens.shuffle(rng);
    (Payload::Text(tokens.join(" ")), Label::Class(class_name(class)))
}

/// Filler text with one to three entity mentions of one or two tokens each.
fn gen_tagging(rng: &mut ChaCha8Rng, classes: usize, shape: &TextShape) -> (Payload, Label) {
    let core = zipf(shape.core_vocab, shape.zipf_exponent);
    let mentions = rng.random_range(1..=3);
    let mut tokens: Vec<String> = Vec::new();
    let mut spans = Vec::new();
    for _ in 0..mentions {
        for _ in 0..rng.random_range(1..=2) {
            tokens.push(format!("w{}", rng.random_range(0..shape.filler_vocab)));
        }
        let class = rng.random_range(0..classes);
        let len = rng.random_range(1..=2);
        let start = tokens.len();
        for _ in 0..len {
            tokens.push(format!("e{class}n{}", core.sample(rng)));
        }
        spans.push(Span::new(start, start + len, entity_name(class)));
    }
    tokens.push(format!("w{}", rng.random_range(0..shape.filler_vocab)));
    (Payload::Text(tokens.join(" ")), Label::Spans(spans))
}

fn random_box(rng: &mut ChaCha8Rng, classes: usize) -> BBox {
    let w = rng.random_range(50.0..300.0_f64).round();
    let h = rng.random_range(50.0..300.0_f64).round();
    let x = rng.random_range(0.0..CANVAS - w).round();
    let y = rng.random_range(0.0..CANVAS - h).round();
    BBox::new(x, y, x + w, y + h, format!("o{}", rng.random_range(0..classes)))
}

fn gen_detection(rng: &mut ChaCha8Rng, i: usize, classes: usize) -> (Payload, Label) {
    let boxes = (0..rng.random_range(1..=3)).map(|_| random_box(rng, classes)).collect();
    (Payload::Image(format!("images/{i:06}.png")), Label::Boxes(boxes))
}

/// Source sentence over `s*` tokens; the true output maps each `sK` to `tK`.
fn gen_generation(rng: &mut ChaCha8Rng, shape: &TextShape) -> (Payload, Label) {
    let vocab = zipf(shape.core_vocab, shape.zipf_exponent);
    let ids: Vec<usize> = (0..rng.random_range(5..=10)).map(|_| vocab.sample(rng)).collect();
    let source: Vec<String> = ids.iter().map(|k| format!("s{k}")).collect();
    let output: Vec<String> = ids.iter().map(|k| format!("t{k}")).collect();
    (Payload::Text(source.join(" ")), Label::Text(output.join(" ")))
}

/// Features uniform in [-1, 1]; click drawn from a sigmoid of a planted
/// linear score.
fn gen_ctr(rng: &mut ChaCha8Rng, weights: &[f64]) -> (Payload, Label) {
    let mut features = BTreeMap::new();
    let mut score = 0.0;
    for (k, w) in weights.iter().enumerate() {
        let x = round3(rng.random_range(-1.0..=1.0));
        score += w * x;
        features.insert(format!("x{k}"), x);
    }
    let p = 1.0 / (1.0 + (-CTR_SHARPNESS * score).exp());
    (Payload::Features(features), Label::Click(u8::from(rng.random::<f64>() < p)))
}

/// Corrupt exactly `round(rate * train count)` train items. Returns the noisy
/// root version and the ids of the corrupted items.
pub fn inject_noise(version: &DatasetVersion, truth: &Truth, spec: &NoiseSpec) -> Result<(DatasetVersion, BTreeSet<String>)> {
    if !(0.0..1.0).contains(&spec.rate) {
        return Err(Error::Config(format!("noise rate must lie in [0, 1), got {}", spec.rate)));
    }
    if spec.kind.task() != version.task() {
        return Err(Error::Config(format!("{:?} noise does not apply to {} datasets", spec.kind, version.task())));
    }
    if let NoiseKind::BoxJitter { max_shift } = spec.kind {
        if max_shift.is_nan() || max_shift < 2.0 {
            return Err(Error::Config("box jitter needs a max shift of at least 2 pixels".into()));
        }
    }
    if version.round() != 0 {
        return Err(Error::Config("noise is injected into a root version".into()));
    }
    let classes: Vec<String> = truth
        .values()
        .filter_map(|l| match l {
            Label::Class(c) => Some(c.clone()),
            _ => None,
        })
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut train_ids: Vec<&str> = version.train_items().map(|i| i.id.as_str()).collect();
    let count = (spec.rate * train_ids.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    train_ids.shuffle(&mut rng);
    let mask: BTreeSet<String> = train_ids[..count].iter().map(|s| s.to_string()).collect();

    let mut items = Vec::with_capacity(version.items().len());
    for item in version.items() {
        if !mask.contains(&item.id) {
            items.push(item.clone());
            continue;
        }
        let true_label = truth
            .get(&item.id)
            .ok_or_else(|| Error::UnknownItem(item.id.clone()))?;
        let noisy = corrupt(true_label, spec.kind, &classes, &mut rng)?;
        items.push(Item::new(item.id.clone(), item.split, item.payload.clone(), noisy, LabelSource::Human));
    }
    Ok((DatasetVersion::new_root(version.task(), items)?, mask))
}

fn corrupt(label: &Label, kind: NoiseKind, classes: &[String], rng: &mut ChaCha8Rng) -> Result<Label> {
    let out = match (kind, label) {
        (NoiseKind::UniformClassFlip, Label::Class(c)) => {
            let others: Vec<&String> = classes.iter().filter(|x| *x != c).collect();
            let pick = others
                .choose(rng)
                .ok_or_else(|| Error::Config("class flip needs at least two classes".into()))?;
            Label::Class((*pick).clone())
        }
        (NoiseKind::SpanDrop, Label::Spans(spans)) => {
            if spans.is_empty() {
                return Err(Error::Config("span drop needs an item with spans".into()));
            }
            let drop = rng.random_range(0..spans.len());
            let mut kept = spans.clone();
            kept.remove(drop);
            Label::Spans(kept)
        }
        (NoiseKind::BoxJitter { max_shift }, Label::Boxes(boxes)) => {
            let k = rng.random_range(0..boxes.len());
            let mut out = boxes.clone();
            out[k] = jitter(&boxes[k], max_shift, rng);
            Label::Boxes(out)
        }
        (NoiseKind::GenerationReplace, Label::Text(text)) => {
            let n = tokenize(text).len().max(1);
            let words: Vec<String> = (0..n).map(|_| format!("z{}", rng.random_range(0..1000))).collect();
            Label::Text(words.join(" "))
        }
        (NoiseKind::CtrFlip, Label::Click(v)) => Label::Click(1 - v),
        _ => return Err(Error::Config(format!("{kind:?} noise does not fit label {label:?}"))),
    };
    Ok(out.normalized())
}

/// Shift a box by at least half of `max_shift` along one axis, keeping it on
/// the canvas.
fn jitter(b: &BBox, max_shift: f64, rng: &mut ChaCha8Rng) -> BBox {
    let mag = rng.random_range(max_shift / 2.0..=max_shift).round();
    let (w, h) = (b.x_max - b.x_min, b.y_max - b.y_min);
    let along_x = rng.random::<bool>();
    let (lo, span) = if along_x { (b.x_min, w) } else { (b.y_min, h) };
    let shifted = if lo + span + mag <= CANVAS { lo + mag } else { (lo - mag).max(0.0) };
    let shifted = if shifted == lo { (lo + 1.0).min(CANVAS - span) } else { shifted };
    if along_x {
        BBox::new(shifted, b.y_min, shifted + w, b.y_max, b.object_class.clone())
    } else {
        BBox::new(b.x_min, shifted, b.x_max, shifted + h, b.object_class.clone())
    }
}

/// Annotator that reproduces the truth with probability `accuracy` and
/// otherwise keeps the previous label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimAnnotator {
    pub accuracy: f64,
    pub seed: u64,
}

impl SimAnnotator {
    pub fn annotator_id(&self) -> String {
        format!("sim-{}", self.seed)
    }
}

/// Distance from `label` to `truth`, used when a choice-mode annotator must
/// pick the better of two wrong references.
fn label_distance(label: &Label, truth: &Label) -> f64 {
    match (label, truth) {
        (Label::Spans(a), Label::Spans(b)) => {
            let a: BTreeSet<&Span> = a.iter().collect();
            let b: BTreeSet<&Span> = b.iter().collect();
            a.symmetric_difference(&b).count() as f64
        }
        (Label::Boxes(a), Label::Boxes(b)) => match judge_boxes(b, a, 0.5) {
            None => 0.0,
            Some((_, severity)) => severity,
        },
        (Label::Text(a), Label::Text(b)) => 1.0 - generation_similarity(a, b, GenerationMode::Bleu).unwrap_or(0.0),
        (a, b) => f64::from(u8::from(a != b)),
    }
}

/// Simulated decisions for `queue`, timestamped one second apart from
/// `start` in queue order.
pub fn simulate_annotation(
    queue: &[ReviewTask],
    truth: &Truth,
    annotator: &SimAnnotator,
    start: DateTime<Utc>,
) -> Result<Vec<ReviewDecision>> {
    let round = queue.first().map_or(0, |t| t.round);
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(annotator.seed ^ u64::from(round)));
    let mut out = Vec::with_capacity(queue.len());
    for task in queue {
        let true_label = truth
            .get(&task.item_id)
            .ok_or_else(|| Error::UnknownItem(task.item_id.clone()))?;
        let correct = rng.random::<f64>() < annotator.accuracy;
        let choice = if !correct || task.previous_human_label == *true_label {
            Choice::KeepPrevious
        } else if task.model_reference == *true_label {
            Choice::AcceptModel
        } else if task.mode == ReviewMode::Open {
            Choice::NewLabel(true_label.clone())
        } else if label_distance(&task.model_reference, true_label)
            < label_distance(&task.previous_human_label, true_label)
        {
            Choice::AcceptModel
        } else {
            Choice::KeepPrevious
        };
        out.push(ReviewDecision {
            item_id: task.item_id.clone(),
            round: task.round,
            annotator_id: annotator.annotator_id(),
            choice,
            submitted_at: start + Duration::seconds(task.queue_position as i64),
        });
    }
    Ok(out)
}

/// Precision and recall of the flagged item ids against the noise mask.
pub fn score_detection(flags: &[NoiseFlag], mask: &BTreeSet<String>) -> Prf1 {
    let flagged: BTreeSet<&str> = flags.iter().map(|f| f.item_id.as_str()).collect();
    let tp = flagged.iter().filter(|id| mask.contains(**id)).count();
    Prf1::from_counts(tp, flagged.len() - tp, mask.len() - tp)
}

/// Stand-in for an external model on tasks without a baseline: each item's
/// prediction equals the truth with probability `accuracy` (boxes shifted by
/// a pixel), and is otherwise corrupted like injected noise.
pub fn scripted_predictions(version: &DatasetVersion, truth: &Truth, accuracy: f64, seed: u64) -> Result<Vec<Prediction>> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ u64::from(version.round())));
    let kind = NoiseKind::default_for(version.task());
    let model_id = format!("scripted-{seed}");
    version
        .items()
        .iter()
        .map(|item| {
            let t = truth.get(&item.id).ok_or_else(|| Error::UnknownItem(item.id.clone()))?;
            let value = if rng.random::<f64>() < accuracy {
                match t {
                    Label::Boxes(boxes) => Label::Boxes(boxes.iter().map(|b| jitter(b, 2.0, &mut rng)).collect()),
                    other => other.clone(),
                }
            } else {
                corrupt(t, kind, &[], &mut rng)?
            };
            Ok(Prediction {
                item_id: item.id.clone(),
                value: value.normalized(),
                score: None,
                model_id: model_id.clone(),
                round: version.round() + 1,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub task: TaskKind,
    pub n: usize,
    pub classes: usize,
    pub noise_rate: f64,
    pub noise_kind: NoiseKind,
    pub annotator_accuracy: f64,
    pub rounds: u32,
    pub seed: u64,
    pub review_mode: Option<ReviewMode>,
    pub train: TrainConfig,
    /// Accuracy of scripted predictions for detection and generation.
    pub scripted_accuracy: f64,
    pub shape: TextShape,
}

impl SimConfig {
    pub fn new(task: TaskKind, n: usize, noise_rate: f64, annotator_accuracy: f64, rounds: u32, seed: u64) -> Self {
        SimConfig {
            task,
            n,
            classes: 2,
            noise_rate,
            noise_kind: NoiseKind::default_for(task),
            annotator_accuracy,
            rounds,
            seed,
            review_mode: None,
            train: TrainConfig::for_task(task, seed_for(seed, 2)),
            scripted_accuracy: 0.9,
            shape: TextShape::for_task(task),
        }
    }

    pub fn detector_config(&self) -> DetectorConfig {
        DetectorConfig::new(self.task)
    }
}

/// Independent stream seed `k` derived from a run seed.
pub fn seed_for(seed: u64, k: u64) -> u64 {
    mix64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRound {
    pub round: u32,
    pub flags: usize,
    /// Detection quality against train items whose label differs from truth
    /// at the start of the round.
    pub detection_precision: f64,
    pub detection_recall: f64,
    pub dev_metric: Option<f64>,
    pub dev_metric_after: Option<f64>,
    /// Fraction of originally corrupted items (still present) now equal to
    /// the truth.
    pub restored: f64,
    pub version_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub initial_mask: usize,
    pub rounds: Vec<SimRound>,
}

impl SimReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fmt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
        let csv_err = |e: csv::Error| Error::Config(format!("csv: {e}"));
        w.write_record([
            "round",
            "flags",
            "detection_precision",
            "detection_recall",
            "dev_metric",
            "dev_metric_after",
        ])
        .map_err(csv_err)?;
        for r in &self.rounds {
            w.write_record([
                r.round.to_string(),
                r.flags.to_string(),
                format!("{:.6}", r.detection_precision),
                format!("{:.6}", r.detection_recall),
                fmt(r.dev_metric),
                fmt(r.dev_metric_after),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn noisy_train_ids(version: &DatasetVersion, truth: &Truth) -> BTreeSet<String> {
    version
        .train_items()
        .filter(|i| truth.get(&i.id) != Some(&i.label))
        .map(|i| i.id.clone())
        .collect()
}

/// Run a full simulated loop in a fresh store at `root`.
pub fn run_simulation(root: &Path, cfg: &SimConfig) -> Result<SimReport> {
    if !(0.0..=1.0).contains(&cfg.annotator_accuracy) {
        return Err(Error::Config("annotator accuracy must lie in [0, 1]".into()));
    }
    let (clean, truth) = generate_dataset_with(cfg.task, cfg.n, cfg.classes, cfg.seed, cfg.shape)?;
    let spec = NoiseSpec {
        rate: cfg.noise_rate,
        kind: cfg.noise_kind,
        seed: seed_for(cfg.seed, 1),
    };
    let (noisy, mask) = inject_noise(&clean, &truth, &spec)?;
    let annotator = SimAnnotator {
        accuracy: cfg.annotator_accuracy,
        seed: seed_for(cfg.seed, 3),
    };
    let detector = cfg.detector_config();
    let mut lp = RelabelLoop::init(root, noisy)?;
    if let Some(mode) = cfg.review_mode {
        lp.set_review_mode(mode);
    }
    let epoch = Utc.timestamp_opt(1_700_000_000, 0).single().expect("valid timestamp");
    let mut rounds = Vec::new();
    for _ in 0..cfg.rounds {
        let residual = noisy_train_ids(lp.current_version(), &truth);
        let source = match cfg.task {
            TaskKind::Classification | TaskKind::Tagging | TaskKind::Ctr => PredictionSource::Baseline(cfg.train),
            TaskKind::Detection | TaskKind::Generation => PredictionSource::External(scripted_predictions(
                lp.current_version(),
                &truth,
                cfg.scripted_accuracy,
                seed_for(cfg.seed, 4),
            )?),
        };
        let out = lp.run_round(source, &detector)?;
        let score = score_detection(&out.flags, &residual);
        let start = epoch + Duration::hours(i64::from(out.round));
        let decisions = simulate_annotation(&out.queue, &truth, &annotator, start)?;
        let state = lp.apply_round(&decisions)?;
        let record = state.history.last().expect("round recorded").clone();
        let current = lp.current_version();
        let present: Vec<&String> = mask.iter().filter(|id| current.get(id).is_some()).collect();
        let restored = present
            .iter()
            .filter(|id| current.get(id).map(|i| &i.label) == truth.get(**id))
            .count();
        rounds.push(SimRound {
            round: out.round,
            flags: out.flags.len(),
            detection_precision: score.precision,
            detection_recall: score.recall,
            dev_metric: record.dev_metric,
            dev_metric_after: record.post_dev_metric,
            restored: if present.is_empty() { 1.0 } else { restored as f64 / present.len() as f64 },
            version_id: record.version_id,
        });
    }
    Ok(SimReport {
        config: cfg.clone(),
        initial_mask: mask.len(),
        rounds,
    })
}
