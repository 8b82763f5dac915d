//! Review queue: tasks shown to annotators with the model output and the
//! previous human label as references, time-boxed leases, the append-only
//! decision log and last-write-wins resolution.

use std::collections::{BTreeMap, HashMap, HashSet};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetVersion, Label, Payload, TaskKind};
use crate::detectors::{FlagAction, FlagReason, NoiseFlag, Prediction};
use crate::metrics::{similarity_sort_key, MINHASH_BANDS};
use crate::{Error, Result};

/// Default lease window.
pub const LEASE_MINUTES: i64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewMode {
    /// Only `keep_previous` or `accept_model`.
    Choice,
    /// Additionally accepts a free-form label.
    Open,
}

impl ReviewMode {
    pub fn default_for(task: TaskKind) -> Self {
        match task {
            TaskKind::Tagging | TaskKind::Generation => ReviewMode::Choice,
            TaskKind::Classification | TaskKind::Detection | TaskKind::Ctr => ReviewMode::Open,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    KeepPrevious,
    AcceptModel,
    NewLabel(Label),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewTask {
    pub item_id: String,
    pub round: u32,
    pub queue_position: usize,
    pub mode: ReviewMode,
    pub payload: Payload,
    pub previous_human_label: Label,
    pub model_reference: Label,
    pub reason: FlagReason,
    pub severity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub item_id: String,
    pub round: u32,
    pub annotator_id: String,
    pub choice: Choice,
    pub submitted_at: DateTime<Utc>,
}

impl ReviewDecision {
    fn same_submission(&self, other: &ReviewDecision) -> bool {
        self.item_id == other.item_id
            && self.round == other.round
            && self.annotator_id == other.annotator_id
            && self.choice == other.choice
    }
}

/// Build the review queue for one round from the relabel flags.
///
/// Tasks are grouped by [`similarity_sort_key`] of the payload and ordered by
/// severity (descending) inside a group; item id breaks remaining ties.
pub fn build_queue(
    version: &DatasetVersion,
    flags: &[NoiseFlag],
    predictions: &[Prediction],
    mode: ReviewMode,
    seed: u64,
) -> Result<Vec<ReviewTask>> {
    let index = version.index();
    let preds: HashMap<&str, &Prediction> = predictions.iter().map(|p| (p.item_id.as_str(), p)).collect();
    let mut keyed = Vec::new();
    for flag in flags.iter().filter(|f| f.action == FlagAction::Relabel) {
        let item = index
            .get(flag.item_id.as_str())
            .ok_or_else(|| Error::UnknownItem(flag.item_id.clone()))?;
        if !item.is_train() {
            return Err(Error::DevItem(item.id.clone()));
        }
        let pred = preds
            .get(flag.item_id.as_str())
            .ok_or_else(|| Error::MissingPrediction(flag.item_id.clone()))?;
        let key = similarity_sort_key(&item.payload.sort_text(), MINHASH_BANDS, seed);
        keyed.push((
            key,
            ReviewTask {
                item_id: item.id.clone(),
                round: flag.round,
                queue_position: 0,
                mode,
                payload: item.payload.clone(),
                previous_human_label: item.label.clone(),
                model_reference: pred.value.clone(),
                reason: flag.reason.clone(),
                severity: flag.severity,
            },
        ));
    }
    keyed.sort_by(|(ka, ta), (kb, tb)| {
        ka.cmp(kb)
            .then(tb.severity.total_cmp(&ta.severity))
            .then(ta.item_id.cmp(&tb.item_id))
    });
    Ok(keyed
        .into_iter()
        .enumerate()
        .map(|(pos, (_, mut task))| {
            task.queue_position = pos;
            task
        })
        .collect())
}

/// One annotator-facing choice for every queued item: last write wins by
/// `submitted_at`, then the lexicographically greatest annotator id.
pub fn resolve_log(log: &[ReviewDecision], order: &[ReviewTask]) -> Vec<ReviewDecision> {
    let mut winners: HashMap<&str, &ReviewDecision> = HashMap::new();
    for d in log {
        winners
            .entry(d.item_id.as_str())
            .and_modify(|best| {
                if (d.submitted_at, &d.annotator_id) > (best.submitted_at, &best.annotator_id) {
                    *best = d;
                }
            })
            .or_insert(d);
    }
    order
        .iter()
        .filter_map(|t| winners.get(t.item_id.as_str()).map(|d| (*d).clone()))
        .collect()
}

#[derive(Debug, Clone)]
struct Lease {
    annotator: String,
    expires_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubmitOutcome {
    Recorded,
    Duplicate,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasonCounts {
    pub queued: usize,
    pub decided: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: u32,
    pub closed: bool,
    pub queued: usize,
    pub leased: usize,
    pub decided: usize,
    pub remaining: usize,
    pub by_reason: BTreeMap<String, ReasonCounts>,
}

/// Live state of one review round.
#[derive(Debug, Clone)]
pub struct ReviewRound {
    round: u32,
    task: TaskKind,
    tasks: Vec<ReviewTask>,
    positions: HashMap<String, usize>,
    leases: HashMap<String, Lease>,
    log: Vec<ReviewDecision>,
    decided: HashSet<String>,
    closed: bool,
    lease_window: Duration,
}

impl ReviewRound {
    /// Tasks for items outside the version's train split are discarded.
    pub fn new(round: u32, version: &DatasetVersion, tasks: Vec<ReviewTask>) -> Self {
        let index = version.index();
        let mut tasks: Vec<ReviewTask> = tasks
            .into_iter()
            .filter(|t| index.get(t.item_id.as_str()).is_some_and(|i| i.is_train()))
            .collect();
        tasks.sort_by_key(|t| t.queue_position);
        let positions = tasks.iter().enumerate().map(|(i, t)| (t.item_id.clone(), i)).collect();
        ReviewRound {
            round,
            task: version.task(),
            tasks,
            positions,
            leases: HashMap::new(),
            log: Vec::new(),
            decided: HashSet::new(),
            closed: false,
            lease_window: Duration::minutes(LEASE_MINUTES),
        }
    }

    pub fn with_lease_window(mut self, window: Duration) -> Self {
        self.lease_window = window;
        self
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn tasks(&self) -> &[ReviewTask] {
        &self.tasks
    }

    pub fn log(&self) -> &[ReviewDecision] {
        &self.log
    }

    pub fn close(&mut self) {
        self.closed = true;
        self.leases.clear();
    }

    fn active_lease(&self, item_id: &str, now: DateTime<Utc>) -> Option<&Lease> {
        self.leases.get(item_id).filter(|l| l.expires_at > now)
    }

    /// Lowest-position task that is neither decided nor under an active
    /// lease. An annotator who still holds a live lease gets that task back.
    pub fn lease_next(&mut self, annotator: &str, now: DateTime<Utc>) -> Result<Option<ReviewTask>> {
        if self.closed {
            return Err(Error::RoundClosed(self.round));
        }
        let held = self.tasks.iter().find(|t| {
            !self.decided.contains(&t.item_id)
                && self.active_lease(&t.item_id, now).is_some_and(|l| l.annotator == annotator)
        });
        if let Some(task) = held {
            return Ok(Some(task.clone()));
        }
        let Some(task) = self
            .tasks
            .iter()
            .find(|t| !self.decided.contains(&t.item_id) && self.active_lease(&t.item_id, now).is_none())
            .cloned()
        else {
            return Ok(None);
        };
        self.leases.insert(
            task.item_id.clone(),
            Lease {
                annotator: annotator.to_owned(),
                expires_at: now + self.lease_window,
            },
        );
        Ok(Some(task))
    }

    /// Check a decision without recording it.
    pub fn check(&self, decision: &ReviewDecision, now: DateTime<Utc>) -> Result<SubmitOutcome> {
        if decision.round != self.round {
            return Err(Error::StaleRound {
                requested: decision.round,
                open: Some(self.round),
            });
        }
        let &pos = self.positions.get(&decision.item_id).ok_or_else(|| Error::NotQueued {
            item_id: decision.item_id.clone(),
            round: self.round,
        })?;
        if self.log.iter().any(|d| d.same_submission(decision)) {
            return Ok(SubmitOutcome::Duplicate);
        }
        if self.closed {
            return Err(Error::RoundClosed(self.round));
        }
        if let Some(lease) = self.active_lease(&decision.item_id, now) {
            if lease.annotator != decision.annotator_id {
                return Err(Error::Leased {
                    item_id: decision.item_id.clone(),
                    holder: lease.annotator.clone(),
                });
            }
        }
        let task = &self.tasks[pos];
        if let Choice::NewLabel(label) = &decision.choice {
            let invalid = |message: String| Error::InvalidDecision {
                item_id: decision.item_id.clone(),
                message,
            };
            if task.mode == ReviewMode::Choice {
                return Err(invalid("free-form labels are not accepted in choice mode".into()));
            }
            label.clone().normalized().validate(self.task, &task.payload).map_err(invalid)?;
        }
        Ok(SubmitOutcome::Recorded)
    }

    /// Record a decision. Identical resubmissions are acknowledged without
    /// being stored twice.
    pub fn submit(&mut self, decision: ReviewDecision, now: DateTime<Utc>) -> Result<SubmitOutcome> {
        let outcome = self.check(&decision, now)?;
        self.release(&decision.item_id, &decision.annotator_id);
        if outcome == SubmitOutcome::Recorded {
            self.decided.insert(decision.item_id.clone());
            self.log.push(decision);
        }
        Ok(outcome)
    }

    /// Replay a previously persisted log entry (no lease checks).
    pub fn restore(&mut self, decision: ReviewDecision) {
        if self.positions.contains_key(&decision.item_id) && !self.log.iter().any(|d| d.same_submission(&decision)) {
            self.decided.insert(decision.item_id.clone());
            self.log.push(decision);
        }
    }

    fn release(&mut self, item_id: &str, annotator: &str) {
        if self.leases.get(item_id).is_some_and(|l| l.annotator == annotator) {
            self.leases.remove(item_id);
        }
    }

    pub fn resolve(&self) -> Result<Vec<ReviewDecision>> {
        if !self.closed {
            return Err(Error::RoundOpen(self.round));
        }
        Ok(resolve_log(&self.log, &self.tasks))
    }

    pub fn stats(&self, now: DateTime<Utc>) -> RoundStats {
        let mut by_reason: BTreeMap<String, ReasonCounts> = BTreeMap::new();
        let mut leased = 0;
        for t in &self.tasks {
            let entry = by_reason.entry(t.reason.kind().to_owned()).or_default();
            entry.queued += 1;
            if self.decided.contains(&t.item_id) {
                entry.decided += 1;
            } else if self.active_lease(&t.item_id, now).is_some() {
                leased += 1;
            }
        }
        let queued = self.tasks.len();
        let decided = self.decided.len();
        RoundStats {
            round: self.round,
            closed: self.closed,
            queued,
            leased,
            decided,
            remaining: queued - decided - leased,
            by_reason,
        }
    }
}

/// All review rounds known to a store. The highest unclosed round is the
/// open one.
#[derive(Debug, Default)]
pub struct ReviewService {
    rounds: BTreeMap<u32, ReviewRound>,
}

impl ReviewService {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_round(&mut self, round: ReviewRound) {
        self.rounds.insert(round.round, round);
    }

    pub fn round(&self, round: u32) -> Result<&ReviewRound> {
        self.rounds.get(&round).ok_or(Error::UnknownRound(round))
    }

    pub fn round_mut(&mut self, round: u32) -> Result<&mut ReviewRound> {
        self.rounds.get_mut(&round).ok_or(Error::UnknownRound(round))
    }

    pub fn open_round(&self) -> Option<u32> {
        self.rounds.values().rev().find(|r| !r.closed).map(|r| r.round)
    }

    pub fn lease_next(&mut self, annotator: &str, now: DateTime<Utc>) -> Result<Option<ReviewTask>> {
        let round = self.open_round().ok_or(Error::NoOpenRound)?;
        self.round_mut(round)?.lease_next(annotator, now)
    }

    pub fn submit(&mut self, decision: ReviewDecision, now: DateTime<Utc>) -> Result<SubmitOutcome> {
        let open = self.open_round();
        let round = self.rounds.get_mut(&decision.round).ok_or(Error::StaleRound {
            requested: decision.round,
            open,
        })?;
        round.submit(decision, now)
    }

    pub fn resolve_decisions(&self, round: u32) -> Result<Vec<ReviewDecision>> {
        self.round(round)?.resolve()
    }

    pub fn round_stats(&self, round: u32, now: DateTime<Utc>) -> Result<RoundStats> {
        Ok(self.round(round)?.stats(now))
    }
}
