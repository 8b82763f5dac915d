//! Round orchestration over an on-disk store.
//!
//! Store layout:
//!
//! ```text
//! <root>/state.json
//! <root>/versions/<version_id>/{manifest.json,items.jsonl}
//! <root>/round-N/{preds.jsonl,flags-round-N.jsonl,queue.jsonl,review-log.jsonl,
//!                decisions.jsonl,metrics.json,model.bin,closed}
//! ```
//!
//! A round is opened by [`RelabelLoop::run_round`] (predict, detect, queue)
//! and completed by [`RelabelLoop::apply_round`] (merge decisions into the
//! next version).

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::{self, TrainConfig};
use crate::dataset::{derive_version, load_dataset, DatasetVersion, Label, TaskKind};
use crate::detectors::{self, judge_boxes, DetectorConfig, FlagAction, GenerationMode, NoiseFlag, Prediction};
use crate::jsonl;
use crate::metrics::{accuracy, auc, span_prf1, Prf1};
use crate::review::{ReviewDecision, ReviewMode, ReviewTask};
use crate::{Error, Result};

pub const STATE_FILE: &str = "state.json";
const LOCK_FILE: &str = ".lock";
const VERSIONS_DIR: &str = "versions";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    /// Version produced by this round.
    pub version_id: String,
    pub train_items: usize,
    pub flags_emitted: usize,
    pub decisions_applied: usize,
    pub items_dropped: usize,
    /// Dev metric of the predictions used for detection in this round.
    pub dev_metric: Option<f64>,
    /// Dev metric of the baseline retrained on the produced version.
    pub post_dev_metric: Option<f64>,
    pub detector_config: DetectorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenRound {
    pub round: u32,
    pub train_items: usize,
    pub flags_emitted: usize,
    pub drops: Vec<String>,
    pub dev_metric: Option<f64>,
    pub detector_config: DetectorConfig,
    pub train_config: Option<TrainConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopState {
    pub task: TaskKind,
    pub round: u32,
    pub initial_version: String,
    pub current_version: String,
    pub model_ref: Option<String>,
    pub history: Vec<RoundRecord>,
    pub open_round: Option<OpenRound>,
}

/// Where a round's predictions come from.
#[derive(Debug, Clone)]
pub enum PredictionSource {
    /// Predictions produced by any outside model.
    External(Vec<Prediction>),
    /// Train the built-in baseline on the current version and predict.
    Baseline(TrainConfig),
}

#[derive(Debug, Clone)]
pub struct RoundOutput {
    pub round: u32,
    pub flags: Vec<NoiseFlag>,
    pub queue: Vec<ReviewTask>,
    pub drops: Vec<String>,
    pub dev_metric: Option<f64>,
}

/// Handle on a store directory. A locked handle owns the directory until it
/// is dropped.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    locked: bool,
}

impl Store {
    fn lock(root: &Path) -> Result<Self> {
        let lock = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(_) => Ok(Store {
                root: root.to_path_buf(),
                locked: true,
            }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(root.to_path_buf())),
            Err(e) => Err(Error::io(format!("lock {}", root.display()), e)),
        }
    }

    /// Exclusive handle on an existing store.
    pub fn open(root: &Path) -> Result<Self> {
        if !root.join(STATE_FILE).exists() {
            return Err(Error::io(
                format!("open store {}", root.display()),
                std::io::Error::new(std::io::ErrorKind::NotFound, "no state.json"),
            ));
        }
        Self::lock(root)
    }

    /// Shared handle for read-only inspection; takes no lock.
    pub fn read_only(root: &Path) -> Self {
        Store {
            root: root.to_path_buf(),
            locked: false,
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn version_dir(&self, id: &str) -> PathBuf {
        self.root.join(VERSIONS_DIR).join(id)
    }

    pub fn round_dir(&self, round: u32) -> PathBuf {
        self.root.join(format!("round-{round}"))
    }

    pub fn preds_path(&self, round: u32) -> PathBuf {
        self.round_dir(round).join("preds.jsonl")
    }

    pub fn flags_path(&self, round: u32) -> PathBuf {
        self.round_dir(round).join(format!("flags-round-{round}.jsonl"))
    }

    pub fn queue_path(&self, round: u32) -> PathBuf {
        self.round_dir(round).join("queue.jsonl")
    }

    pub fn review_log_path(&self, round: u32) -> PathBuf {
        self.round_dir(round).join("review-log.jsonl")
    }

    pub fn decisions_path(&self, round: u32) -> PathBuf {
        self.round_dir(round).join("decisions.jsonl")
    }

    pub fn metrics_path(&self, round: u32) -> PathBuf {
        self.round_dir(round).join("metrics.json")
    }

    pub fn model_path(&self, round: u32) -> PathBuf {
        self.round_dir(round).join("model.bin")
    }

    pub fn closed_marker(&self, round: u32) -> PathBuf {
        self.round_dir(round).join("closed")
    }

    pub fn load_version(&self, id: &str) -> Result<DatasetVersion> {
        load_dataset(&self.version_dir(id))
    }

    pub fn save_version(&self, version: &DatasetVersion) -> Result<()> {
        let dir = self.root.join(VERSIONS_DIR);
        fs::create_dir_all(&dir).map_err(|e| Error::io(format!("create {}", dir.display()), e))?;
        version.write_to(&self.version_dir(version.version_id()))
    }

    pub fn load_state(&self) -> Result<LoopState> {
        jsonl::read_json(&self.root.join(STATE_FILE))
    }

    pub fn save_state(&self, state: &LoopState) -> Result<()> {
        jsonl::write_json(&self.root.join(STATE_FILE), state)
    }

    pub fn ensure_round_dir(&self, round: u32) -> Result<PathBuf> {
        let dir = self.round_dir(round);
        fs::create_dir_all(&dir).map_err(|e| Error::io(format!("create {}", dir.display()), e))?;
        Ok(dir)
    }

    pub fn read_queue(&self, round: u32) -> Result<Vec<ReviewTask>> {
        jsonl::read_records(&self.queue_path(round))
    }

    pub fn read_flags(&self, round: u32) -> Result<Vec<NoiseFlag>> {
        jsonl::read_records(&self.flags_path(round))
    }

    pub fn read_decisions(&self, round: u32) -> Result<Vec<ReviewDecision>> {
        jsonl::read_records(&self.decisions_path(round))
    }

    /// Append-only review log written by the review service.
    pub fn read_review_log(&self, round: u32) -> Result<Vec<ReviewDecision>> {
        let path = self.review_log_path(round);
        if !path.exists() {
            return Ok(Vec::new());
        }
        jsonl::read_records(&path)
    }

    pub fn is_closed(&self, round: u32) -> bool {
        self.closed_marker(round).exists()
    }

    pub fn mark_closed(&self, round: u32) -> Result<()> {
        self.ensure_round_dir(round)?;
        jsonl::write_atomic(&self.closed_marker(round), b"")
    }
}

impl Drop for Store {
    fn drop(&mut self) {
        if self.locked {
            let _ = fs::remove_file(self.root.join(LOCK_FILE));
        }
    }
}

/// Dev-split metric of `preds` against the current labels: accuracy
/// (classification), micro span F1 (tagging), AUC (ctr), fraction of items
/// with matching boxes at IoU 0.5 (detection), mean sentence BLEU
/// (generation). `None` when no dev item has a prediction.
pub fn dev_metric(version: &DatasetVersion, preds: &[Prediction]) -> Option<f64> {
    let by_id: BTreeMap<&str, &Prediction> = preds.iter().map(|p| (p.item_id.as_str(), p)).collect();
    let pairs: Vec<(&Label, &Prediction)> = version
        .dev_items()
        .filter_map(|i| by_id.get(i.id.as_str()).map(|p| (&i.label, *p)))
        .collect();
    if pairs.is_empty() {
        return None;
    }
    match version.task() {
        TaskKind::Classification => {
            let (gold, pred): (Vec<&Label>, Vec<&Label>) = pairs.iter().map(|(g, p)| (*g, &p.value)).unzip();
            accuracy(&gold, &pred).ok()
        }
        TaskKind::Tagging => {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for (gold, pred) in &pairs {
                if let (Label::Spans(g), Label::Spans(p)) = (gold, &pred.value) {
                    let s = span_prf1(g, p);
                    tp += s.tp;
                    fp += s.fp;
                    fn_ += s.fn_;
                }
            }
            Some(Prf1::from_counts(tp, fp, fn_).f1)
        }
        TaskKind::Ctr => {
            let labels: Vec<u8> = pairs
                .iter()
                .map(|(g, _)| match g {
                    Label::Click(v) => *v,
                    _ => 0,
                })
                .collect();
            let scores: Vec<f64> = pairs.iter().map(|(_, p)| p.score.unwrap_or(0.0)).collect();
            auc(&labels, &scores).ok()
        }
        TaskKind::Detection => {
            let agree = pairs
                .iter()
                .filter(|(g, p)| match (g, &p.value) {
                    (Label::Boxes(h), Label::Boxes(m)) => judge_boxes(h, m, 0.5).is_none(),
                    _ => false,
                })
                .count();
            Some(agree as f64 / pairs.len() as f64)
        }
        TaskKind::Generation => {
            let total: f64 = pairs
                .iter()
                .map(|(g, p)| match (g, &p.value) {
                    (Label::Text(origin), Label::Text(out)) => {
                        detectors::generation_similarity(out, origin, GenerationMode::Bleu).unwrap_or(0.0)
                    }
                    _ => 0.0,
                })
                .sum();
            Some(total / pairs.len() as f64)
        }
    }
}

/// True when the latest completed round flagged fewer than `epsilon` of the
/// train items, or `max_rounds` rounds have completed.
pub fn should_stop(state: &LoopState, epsilon: f64, max_rounds: u32) -> bool {
    if state.round >= max_rounds {
        return true;
    }
    match state.history.last() {
        Some(last) if last.train_items > 0 => (last.flags_emitted as f64 / last.train_items as f64) < epsilon,
        Some(_) => true,
        None => false,
    }
}

/// Model references (label shown as "model") for every queued item.
pub fn model_references(queue: &[ReviewTask]) -> BTreeMap<String, Label> {
    queue
        .iter()
        .map(|t| (t.item_id.clone(), t.model_reference.clone()))
        .collect()
}

pub struct RelabelLoop {
    store: Store,
    state: LoopState,
    current: DatasetVersion,
    review_mode: Option<ReviewMode>,
    queue_seed: u64,
}

impl RelabelLoop {
    /// Create a store rooted at `root` holding `initial` as round 0.
    /// Re-initializing with the same version is a no-op.
    pub fn init(root: &Path, initial: DatasetVersion) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(format!("create {}", root.display()), e))?;
        let store = Store::lock(root)?;
        if root.join(STATE_FILE).exists() {
            let state = store.load_state()?;
            if state.initial_version != initial.version_id() {
                return Err(Error::Config(format!(
                    "store already initialized with {}",
                    state.initial_version
                )));
            }
            drop(store);
            return Self::open(root);
        }
        if initial.round() != 0 {
            return Err(Error::Config("initial version must be round 0".into()));
        }
        store.save_version(&initial)?;
        let state = LoopState {
            task: initial.task(),
            round: 0,
            initial_version: initial.version_id().to_owned(),
            current_version: initial.version_id().to_owned(),
            model_ref: None,
            history: Vec::new(),
            open_round: None,
        };
        store.save_state(&state)?;
        Ok(RelabelLoop {
            store,
            state,
            current: initial,
            review_mode: None,
            queue_seed: 0,
        })
    }

    pub fn open(root: &Path) -> Result<Self> {
        let store = Store::open(root)?;
        let state = store.load_state()?;
        let current = store.load_version(&state.current_version)?;
        Ok(RelabelLoop {
            store,
            state,
            current,
            review_mode: None,
            queue_seed: 0,
        })
    }

    /// Override the per-task default review mode.
    pub fn set_review_mode(&mut self, mode: ReviewMode) {
        self.review_mode = Some(mode);
    }

    pub fn state(&self) -> &LoopState {
        &self.state
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn current_version(&self) -> &DatasetVersion {
        &self.current
    }

    /// Predict, detect and queue for round `state.round + 1`. Re-running an
    /// open round overwrites its artifacts until a review decision is logged.
    pub fn run_round(&mut self, source: PredictionSource, cfg: &DetectorConfig) -> Result<RoundOutput> {
        cfg.validate()?;
        if cfg.task != self.current.task() {
            return Err(Error::TaskMismatch {
                expected: self.current.task().to_string(),
                found: cfg.task.to_string(),
            });
        }
        let round = self.state.round + 1;
        // logged reviews are never discarded by a re-run
        if !self.store.read_review_log(round)?.is_empty() {
            return Err(Error::Config(format!("round {round} already has logged review decisions")));
        }
        self.store.ensure_round_dir(round)?;

        let (preds, train_config, model_ref) = match source {
            PredictionSource::External(preds) => {
                let model_ref = preds.first().map(|p| p.model_id.clone());
                (preds, None, model_ref)
            }
            PredictionSource::Baseline(tcfg) => {
                let model = baseline::train(&self.current, &tcfg)?;
                model.save(&self.store.model_path(round))?;
                let preds = baseline::predict(&model, &self.current)?;
                (preds, Some(tcfg), Some(format!("round-{round}/model.bin")))
            }
        };

        let flags = detectors::detect(&self.current, &preds, cfg)?;
        let drops: Vec<String> = flags
            .iter()
            .filter(|f| f.action == FlagAction::Drop)
            .map(|f| f.item_id.clone())
            .collect();
        let mode = self
            .review_mode
            .unwrap_or_else(|| ReviewMode::default_for(self.current.task()));
        let queue = crate::review::build_queue(&self.current, &flags, &preds, mode, self.queue_seed)?;
        let dev = dev_metric(&self.current, &preds);

        jsonl::write_records(&self.store.preds_path(round), &preds)?;
        jsonl::write_records(&self.store.flags_path(round), &flags)?;
        jsonl::write_records(&self.store.queue_path(round), &queue)?;
        for stale in [self.store.review_log_path(round), self.store.closed_marker(round)] {
            if stale.exists() {
                fs::remove_file(&stale).map_err(|e| Error::io(format!("remove {}", stale.display()), e))?;
            }
        }

        self.state.model_ref = model_ref;
        self.state.open_round = Some(OpenRound {
            round,
            train_items: self.current.train_items().count(),
            flags_emitted: flags.len(),
            drops: drops.clone(),
            dev_metric: dev,
            detector_config: cfg.clone(),
            train_config,
        });
        self.store.save_state(&self.state)?;
        Ok(RoundOutput {
            round,
            flags,
            queue,
            drops,
            dev_metric: dev,
        })
    }

    /// Merge resolved decisions (and ctr drops) of the open round into the
    /// next dataset version.
    pub fn apply_round(&mut self, decisions: &[ReviewDecision]) -> Result<&LoopState> {
        let open = self.state.open_round.clone().ok_or(Error::NoOpenRound)?;
        let queue = self.store.read_queue(open.round)?;
        let queued: BTreeMap<&str, &ReviewTask> = queue.iter().map(|t| (t.item_id.as_str(), t)).collect();
        for d in decisions {
            if d.round != open.round {
                return Err(Error::StaleRound {
                    requested: d.round,
                    open: Some(open.round),
                });
            }
            if !queued.contains_key(d.item_id.as_str()) {
                return Err(Error::NotQueued {
                    item_id: d.item_id.clone(),
                    round: open.round,
                });
            }
        }
        let next = derive_version(&self.current, decisions, &model_references(&queue), &open.drops)?;
        self.store.save_version(&next)?;
        jsonl::write_records(&self.store.decisions_path(open.round), decisions)?;

        let post_dev_metric = match &open.train_config {
            Some(tcfg) => {
                let model = baseline::train(&next, tcfg)?;
                dev_metric(&next, &baseline::predict(&model, &next)?)
            }
            None => None,
        };
        let record = RoundRecord {
            round: open.round,
            version_id: next.version_id().to_owned(),
            train_items: open.train_items,
            flags_emitted: open.flags_emitted,
            decisions_applied: decisions.len(),
            items_dropped: open.drops.len(),
            dev_metric: open.dev_metric,
            post_dev_metric,
            detector_config: open.detector_config,
        };
        jsonl::write_json(&self.store.metrics_path(open.round), &record)?;
        self.state.history.push(record);
        self.state.round = open.round;
        self.state.current_version = next.version_id().to_owned();
        self.state.open_round = None;
        self.store.save_state(&self.state)?;
        self.current = next;
        Ok(&self.state)
    }
}

/// Rebuild the lineage from the initial version using only the recorded
/// decisions, queues and flags, checking each produced version id.
pub fn replay_lineage(store: &Store) -> Result<DatasetVersion> {
    let state = store.load_state()?;
    let mut version = store.load_version(&state.initial_version)?;
    for record in &state.history {
        let decisions = store.read_decisions(record.round)?;
        let queue = store.read_queue(record.round)?;
        let drops: Vec<String> = store
            .read_flags(record.round)?
            .into_iter()
            .filter(|f| f.action == FlagAction::Drop)
            .map(|f| f.item_id)
            .collect();
        version = derive_version(&version, &decisions, &model_references(&queue), &drops)?;
        if version.version_id() != record.version_id {
            return Err(Error::Config(format!(
                "replay of round {} produced {} but history records {}",
                record.round,
                version.version_id(),
                record.version_id
            )));
        }
    }
    Ok(version)
}
