//! Desk-scale stand-in models: multinomial logistic regression trained by SGD
//! over signed hashed features.
//!
//! - classification: token unigrams and bigrams
//! - tagging: per-token window of +-2 tokens, BIO tags per entity class
//! - ctr: the raw feature mapping, single sigmoid output

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetVersion, Item, Label, Payload, Span, TaskKind};
use crate::detectors::Prediction;
use crate::hashing::{fnv1a, mix64};
use crate::jsonl::write_atomic;
use crate::tokenize::tokenize;
use crate::{Error, Result};

pub const FEATURE_BITS: u32 = 18;
pub const FEATURE_DIM: usize = 1 << FEATURE_BITS;
pub const DEFAULT_HASH_SEED: u64 = 0x5eed;

const CHECKPOINT_MAGIC: &[u8; 8] = b"RLBLMODL";
const CHECKPOINT_FORMAT: u32 = 1;
const OUTSIDE: &str = "O";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: u32,
    pub learning_rate: f64,
    pub seed: u64,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            learning_rate: 0.1,
            seed: 0,
            l2: 1e-6,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(seed: u64) -> Self {
        TrainConfig {
            seed,
            ..Self::default()
        }
    }

    /// Defaults tuned per task. Classification features have unit norm and
    /// take a larger step than the token-window and ctr features.
    pub fn for_task(task: TaskKind, seed: u64) -> Self {
        match task {
            // stronger l2 keeps rare tokens from memorizing flipped labels
            TaskKind::Classification => TrainConfig {
                seed,
                learning_rate: 0.2,
                l2: 2e-3,
                ..Self::default()
            },
            _ => Self::with_seed(seed),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.l2.is_nan() || self.l2 < 0.0 {
            return Err(Error::Config("l2 must be non-negative".into()));
        }
        Ok(())
    }
}

type Features = Vec<(u32, f32)>;

struct Example {
    features: Features,
    target: usize,
}

/// Hashed linear model. `weights` holds one block of `dim` weights per output.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub task: TaskKind,
    pub class_names: Vec<String>,
    pub hash_seed: u64,
    pub config: TrainConfig,
    pub dim: usize,
    pub weights: Vec<f32>,
}

fn hashed(name: &str, seed: u64, value: f32) -> (u32, f32) {
    let h = mix64(fnv1a(name.as_bytes()) ^ seed);
    let idx = (h & (FEATURE_DIM as u64 - 1)) as u32;
    let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
    (idx, sign * value)
}

fn text_features(tokens: &[String], seed: u64) -> Features {
    let mut feats = Vec::with_capacity(2 * tokens.len() + 1);
    feats.push(hashed("bias", seed, 1.0));
    for t in tokens {
        feats.push(hashed(&format!("u\u{1f}{t}"), seed, 1.0));
    }
    for w in tokens.windows(2) {
        feats.push(hashed(&format!("b\u{1f}{}\u{1f}{}", w[0], w[1]), seed, 1.0));
    }
    // unit L2 norm, so the step size does not grow with document length
    let scale = 1.0 / (feats.len() as f32).sqrt();
    for f in &mut feats {
        f.1 *= scale;
    }
    feats
}

fn token_features(tokens: &[String], i: usize, seed: u64) -> Features {
    let mut feats = Vec::with_capacity(6);
    feats.push(hashed("bias", seed, 1.0));
    for offset in -2i64..=2 {
        let j = i as i64 + offset;
        let tok = if j < 0 {
            "<s>"
        } else if j as usize >= tokens.len() {
            "</s>"
        } else {
            tokens[j as usize].as_str()
        };
        feats.push(hashed(&format!("w{offset}\u{1f}{tok}"), seed, 1.0));
    }
    feats
}

fn ctr_features(payload: &Payload, seed: u64) -> Features {
    let mut feats = vec![hashed("bias", seed, 1.0)];
    if let Payload::Features(map) = payload {
        feats.extend(map.iter().map(|(k, &v)| hashed(&format!("f\u{1f}{k}"), seed, v as f32)));
    }
    feats
}

fn payload_text(item: &Item) -> &str {
    match &item.payload {
        Payload::Text(t) => t,
        _ => "",
    }
}

fn bio_tags(classes: &[String]) -> Vec<String> {
    let mut tags = vec![OUTSIDE.to_owned()];
    for c in classes {
        tags.push(format!("B-{c}"));
        tags.push(format!("I-{c}"));
    }
    tags
}

fn encode_bio(spans: &[Span], len: usize, tags: &[String]) -> Vec<usize> {
    let mut out = vec![0; len];
    for span in spans {
        let Some(b) = tags.iter().position(|t| t == &format!("B-{}", span.entity_class)) else {
            continue;
        };
        for (k, slot) in out.iter_mut().enumerate().take(span.end.min(len)).skip(span.start) {
            *slot = if k == span.start { b } else { b + 1 };
        }
    }
    out
}

/// Decode a BIO tag sequence into spans. An `I-x` that does not continue an
/// open `x` span starts a new one, so every input decodes.
pub fn decode_bio<S: AsRef<str>>(tags: &[S]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, String)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        let (prefix, class) = match tag.split_once('-') {
            Some((p, c)) if p == "B" || p == "I" => (p, c),
            _ => ("O", ""),
        };
        let continues = prefix == "I" && open.as_ref().is_some_and(|(_, c)| c == class);
        if continues {
            continue;
        }
        if let Some((start, c)) = open.take() {
            spans.push(Span::new(start, i, c));
        }
        if prefix != "O" {
            open = Some((i, class.to_owned()));
        }
    }
    if let Some((start, c)) = open {
        spans.push(Span::new(start, tags.len(), c));
    }
    spans
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl LinearModel {
    fn outputs(&self) -> usize {
        self.weights.len() / self.dim
    }

    fn logits(&self, feats: &[(u32, f32)]) -> Vec<f64> {
        (0..self.outputs())
            .map(|k| {
                let block = &self.weights[k * self.dim..(k + 1) * self.dim];
                feats.iter().map(|&(i, v)| block[i as usize] as f64 * v as f64).sum()
            })
            .collect()
    }

    /// Class probabilities (softmax), or `[P(click)]` for ctr.
    fn probabilities(&self, feats: &[(u32, f32)]) -> Vec<f64> {
        let z = self.logits(feats);
        if z.len() == 1 {
            return vec![sigmoid(z[0])];
        }
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }

    fn argmax(&self, feats: &[(u32, f32)]) -> (usize, f64) {
        let probs = self.probabilities(feats);
        let mut best = 0;
        for (k, p) in probs.iter().enumerate() {
            if *p > probs[best] {
                best = k;
            }
        }
        (best, probs[best])
    }

    fn loss(&self, ex: &Example) -> f64 {
        let probs = self.probabilities(&ex.features);
        let p = if probs.len() == 1 {
            if ex.target == 1 {
                probs[0]
            } else {
                1.0 - probs[0]
            }
        } else {
            probs[ex.target]
        };
        -p.max(1e-15).ln()
    }

    fn sgd_step(&mut self, ex: &Example, lr: f64, l2: f64) {
        let probs = self.probabilities(&ex.features);
        let dim = self.dim;
        for (k, p) in probs.iter().enumerate() {
            let y = if probs.len() == 1 {
                ex.target as f64
            } else if k == ex.target {
                1.0
            } else {
                0.0
            };
            let g = p - y;
            let block = &mut self.weights[k * dim..(k + 1) * dim];
            for &(i, v) in &ex.features {
                let w = &mut block[i as usize];
                *w = (*w as f64 - lr * (g * v as f64 + l2 * *w as f64)) as f32;
            }
        }
    }

    /// Model id recorded in predictions.
    pub fn model_id(&self) -> String {
        format!("baseline-{}-seed{}", self.task, self.config.seed)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(64 + self.weights.len() * 4);
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_FORMAT.to_le_bytes());
        let task_code = TaskKind::ALL.iter().position(|t| *t == self.task).unwrap_or(0) as u8;
        buf.push(task_code);
        buf.extend_from_slice(&self.hash_seed.to_le_bytes());
        buf.extend_from_slice(&self.config.seed.to_le_bytes());
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.outputs() as u32).to_le_bytes());
        buf.extend_from_slice(&self.config.epochs.to_le_bytes());
        buf.extend_from_slice(&self.config.learning_rate.to_le_bytes());
        buf.extend_from_slice(&self.config.l2.to_le_bytes());
        buf.extend_from_slice(&(self.class_names.len() as u32).to_le_bytes());
        for name in &self.class_names {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
        }
        for w in &self.weights {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let format = r.u32()?;
        if format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unsupported format {format}")));
        }
        let task = *TaskKind::ALL
            .get(r.take(1)?[0] as usize)
            .ok_or_else(|| Error::Checkpoint("bad task code".into()))?;
        let hash_seed = r.u64()?;
        let seed = r.u64()?;
        let dim = r.u32()? as usize;
        let outputs = r.u32()? as usize;
        let epochs = r.u32()?;
        let learning_rate = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let l2 = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let n_classes = r.u32()? as usize;
        let mut class_names = Vec::with_capacity(n_classes);
        for _ in 0..n_classes {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?).map_err(|e| Error::Checkpoint(e.to_string()))?;
            class_names.push(name.to_owned());
        }
        if dim == 0 || !dim.is_power_of_two() {
            return Err(Error::Checkpoint(format!("bad feature dimension {dim}")));
        }
        let count = dim
            .checked_mul(outputs)
            .ok_or_else(|| Error::Checkpoint("weight count overflows".into()))?;
        let raw = r.take(count * 4)?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        let weights = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(LinearModel {
            task,
            class_names,
            hash_seed,
            config: TrainConfig {
                epochs,
                learning_rate,
                seed,
                l2,
            },
            dim,
            weights,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Training examples grouped per item (tagging yields one example per token).
fn build_examples(version: &DatasetVersion, class_names: &[String], hash_seed: u64) -> Vec<Vec<Example>> {
    version
        .train_items()
        .map(|item| match (&item.label, version.task()) {
            (Label::Class(c), _) => {
                let target = class_names.iter().position(|n| n == c).unwrap_or(0);
                vec![Example {
                    features: text_features(&tokenize(payload_text(item)), hash_seed),
                    target,
                }]
            }
            (Label::Spans(spans), _) => {
                let tokens = tokenize(payload_text(item));
                let targets = encode_bio(spans, tokens.len(), class_names);
                (0..tokens.len())
                    .map(|i| Example {
                        features: token_features(&tokens, i, hash_seed),
                        target: targets[i],
                    })
                    .collect()
            }
            (Label::Click(v), _) => vec![Example {
                features: ctr_features(&item.payload, hash_seed),
                target: *v as usize,
            }],
            _ => Vec::new(),
        })
        .collect()
}

fn output_names(version: &DatasetVersion) -> Vec<String> {
    match version.task() {
        TaskKind::Classification => version
            .train_items()
            .filter_map(|i| match &i.label {
                Label::Class(c) => Some(c.clone()),
                _ => None,
            })
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
        TaskKind::Tagging => {
            let classes: Vec<String> = version
                .train_items()
                .flat_map(|i| match &i.label {
                    Label::Spans(s) => s.iter().map(|s| s.entity_class.clone()).collect(),
                    _ => Vec::new(),
                })
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            bio_tags(&classes)
        }
        _ => vec!["click".to_owned()],
    }
}

/// Train on the train split. Returns the model and the mean training loss
/// measured after each epoch.
pub fn train_with_losses(version: &DatasetVersion, cfg: &TrainConfig) -> Result<(LinearModel, Vec<f64>)> {
    cfg.validate()?;
    let task = version.task();
    if !matches!(task, TaskKind::Classification | TaskKind::Tagging | TaskKind::Ctr) {
        return Err(Error::Config(format!("no baseline model for {task} datasets")));
    }
    if version.train_items().next().is_none() {
        return Err(Error::Config("train split is empty".into()));
    }
    let class_names = output_names(version);
    let outputs = if task == TaskKind::Ctr { 1 } else { class_names.len() };
    let mut model = LinearModel {
        task,
        class_names,
        hash_seed: DEFAULT_HASH_SEED,
        config: *cfg,
        dim: FEATURE_DIM,
        weights: vec![0.0; outputs * FEATURE_DIM],
    };
    let examples = build_examples(version, &model.class_names, model.hash_seed);
    let n_examples: usize = examples.iter().map(Vec::len).sum::<usize>().max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs as usize);
    for epoch in 0..cfg.epochs {
        // step size decays as lr / (1 + epoch)
        let lr = cfg.learning_rate / f64::from(1 + epoch);
        order.shuffle(&mut rng);
        for &i in &order {
            for ex in &examples[i] {
                model.sgd_step(ex, lr, cfg.l2);
            }
        }
        let total: f64 = examples.iter().flatten().map(|ex| model.loss(ex)).sum();
        losses.push(total / n_examples as f64);
    }
    Ok((model, losses))
}

pub fn train(version: &DatasetVersion, cfg: &TrainConfig) -> Result<LinearModel> {
    train_with_losses(version, cfg).map(|(m, _)| m)
}

/// Predict a label for a single item.
pub fn predict_item(model: &LinearModel, item: &Item) -> (Label, Option<f64>) {
    match model.task {
        TaskKind::Tagging => {
            let tokens = tokenize(payload_text(item));
            let tags: Vec<&str> = (0..tokens.len())
                .map(|i| model.class_names[model.argmax(&token_features(&tokens, i, model.hash_seed)).0].as_str())
                .collect();
            (Label::Spans(decode_bio(&tags)), None)
        }
        TaskKind::Ctr => {
            let p = model.probabilities(&ctr_features(&item.payload, model.hash_seed))[0];
            (Label::Click(u8::from(p >= 0.5)), Some(p))
        }
        _ => {
            let (k, p) = model.argmax(&text_features(&tokenize(payload_text(item)), model.hash_seed));
            (Label::Class(model.class_names[k].clone()), Some(p))
        }
    }
}

/// One prediction per item, train and dev, in dataset order.
pub fn predict(model: &LinearModel, version: &DatasetVersion) -> Result<Vec<Prediction>> {
    if model.task != version.task() {
        return Err(Error::TaskMismatch {
            expected: model.task.to_string(),
            found: version.task().to_string(),
        });
    }
    let model_id = model.model_id();
    Ok(version
        .items()
        .iter()
        .map(|item| {
            let (value, score) = predict_item(model, item);
            Prediction {
                item_id: item.id.clone(),
                value,
                score,
                model_id: model_id.clone(),
                round: version.round() + 1,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{LabelSource, Split};
    use std::collections::BTreeMap;

    /// Class decided by a single token: "alpha*" tokens for A, "beta*" for B.
    fn separable(n: usize) -> DatasetVersion {
        let items = (0..n)
            .map(|i| {
                let (class, word) = if i % 2 == 0 { ("A", "alpha") } else { ("B", "beta") };
                let text = format!("{word}{} filler{} common", i % 7, i % 5);
                Item::new(format!("i{i:03}"), Split::Train, Payload::Text(text), Label::Class(class.into()), LabelSource::Human)
            })
            .collect();
        DatasetVersion::new_root(TaskKind::Classification, items).unwrap()
    }

    #[test]
    fn separable_text_is_fit_exactly() {
        let v = separable(200);
        let (model, losses) = train_with_losses(&v, &TrainConfig::with_seed(1)).unwrap();
        let preds = predict(&model, &v).unwrap();
        for (item, p) in v.items().iter().zip(&preds) {
            assert_eq!(p.value, item.label, "{}", item.id);
        }
        for pair in losses.windows(2) {
            assert!(pair[1] <= pair[0], "loss increased: {losses:?}");
        }
    }

    #[test]
    fn single_token_predicts_its_class() {
        let v = separable(200);
        let model = train(&v, &TrainConfig::with_seed(1)).unwrap();
        let probe = Item::new("p", Split::Dev, Payload::Text("alpha3".into()), Label::Class("A".into()), LabelSource::Human);
        assert_eq!(predict_item(&model, &probe).0, Label::Class("A".into()));
        let probe = Item::new("q", Split::Dev, Payload::Text("beta4".into()), Label::Class("A".into()), LabelSource::Human);
        assert_eq!(predict_item(&model, &probe).0, Label::Class("B".into()));
    }

    #[test]
    fn training_is_deterministic() {
        let v = separable(60);
        let a = train(&v, &TrainConfig::with_seed(9)).unwrap();
        let b = train(&v, &TrainConfig::with_seed(9)).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let c = train(&v, &TrainConfig::with_seed(10)).unwrap();
        assert_ne!(a.weights, c.weights);
    }

    #[test]
    fn rejects_empty_train_and_generation() {
        let items = vec![Item::new("d", Split::Dev, Payload::Text("x".into()), Label::Class("A".into()), LabelSource::Human)];
        let v = DatasetVersion::new_root(TaskKind::Classification, items).unwrap();
        assert!(matches!(train(&v, &TrainConfig::default()), Err(Error::Config(_))));
        let items = vec![Item::new("g", Split::Train, Payload::Text("x".into()), Label::Text("y".into()), LabelSource::Human)];
        let v = DatasetVersion::new_root(TaskKind::Generation, items).unwrap();
        assert!(train(&v, &TrainConfig::default()).is_err());
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(train(&separable(10), &bad).is_err());
    }

    #[test]
    fn three_near_duplicates_follow_the_majority() {
        // two copies labeled A and one labeled B, plus context for both classes
        let mut items: Vec<Item> = ["A", "A", "B"]
            .iter()
            .enumerate()
            .map(|(i, c)| Item::new(format!("dup{i}"), Split::Train, Payload::Text("shared words here".into()), Label::Class((*c).into()), LabelSource::Human))
            .collect();
        items.extend(separable(40).items().iter().cloned());
        let v = DatasetVersion::new_root(TaskKind::Classification, items).unwrap();
        let model = train(&v, &TrainConfig::with_seed(3)).unwrap();
        for i in 0..3 {
            let item = v.get(&format!("dup{i}")).unwrap();
            assert_eq!(predict_item(&model, item).0, Label::Class("A".into()));
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let model = train(&separable(30), &TrainConfig::with_seed(4)).unwrap();
        let bytes = model.to_bytes();
        let back = LinearModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_bytes(), bytes);
        assert!(LinearModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(LinearModel::from_bytes(&bad).is_err());
    }

    #[test]
    fn scaling_weights_keeps_argmax() {
        let v = separable(40);
        let model = train(&v, &TrainConfig::with_seed(2)).unwrap();
        let mut scaled = model.clone();
        for w in &mut scaled.weights {
            *w *= 3.5;
        }
        assert_eq!(
            predict(&model, &v).unwrap().iter().map(|p| &p.value).collect::<Vec<_>>(),
            predict(&scaled, &v).unwrap().iter().map(|p| &p.value).collect::<Vec<_>>()
        );
    }

    #[test]
    fn bio_repair() {
        assert_eq!(decode_bio(&["O", "I-PER", "I-PER", "O"]), vec![Span::new(1, 3, "PER")]);
        assert_eq!(
            decode_bio(&["B-PER", "I-LOC", "B-LOC", "I-LOC"]),
            vec![Span::new(0, 1, "PER"), Span::new(1, 2, "LOC"), Span::new(2, 4, "LOC")]
        );
        assert_eq!(decode_bio(&["B-A", "B-A"]), vec![Span::new(0, 1, "A"), Span::new(1, 2, "A")]);
        assert!(decode_bio::<&str>(&[]).is_empty());
    }

    #[test]
    fn tagger_learns_entity_tokens() {
        let items = (0..80)
            .map(|i| {
                let text = format!("met zed{} in paris{} today", i % 4, i % 3);
                Item::new(
                    format!("t{i}"),
                    Split::Train,
                    Payload::Text(text),
                    Label::Spans(vec![Span::new(1, 2, "PER"), Span::new(3, 4, "LOC")]),
                    LabelSource::Human,
                )
            })
            .collect();
        let v = DatasetVersion::new_root(TaskKind::Tagging, items).unwrap();
        let model = train(&v, &TrainConfig::with_seed(5)).unwrap();
        assert_eq!(model.class_names, vec!["O", "B-LOC", "I-LOC", "B-PER", "I-PER"]);
        let preds = predict(&model, &v).unwrap();
        assert_eq!(preds[0].value, v.items()[0].label);
    }

    #[test]
    fn ctr_scores_are_probabilities() {
        let items = (0..100)
            .map(|i| {
                let x = (i as f64 - 50.0) / 25.0;
                Item::new(
                    format!("c{i}"),
                    Split::Train,
                    Payload::Features(BTreeMap::from([("x".to_string(), x)])),
                    Label::Click(u8::from(x > 0.0)),
                    LabelSource::Human,
                )
            })
            .collect();
        let v = DatasetVersion::new_root(TaskKind::Ctr, items).unwrap();
        let model = train(&v, &TrainConfig::with_seed(0)).unwrap();
        let preds = predict(&model, &v).unwrap();
        assert!(preds.iter().all(|p| p.score.is_some_and(|s| (0.0..=1.0).contains(&s))));
        assert!(preds[99].score.unwrap() > preds[0].score.unwrap());
    }
}
