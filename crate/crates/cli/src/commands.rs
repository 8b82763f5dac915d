use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use relabel_core::baseline::{self, LinearModel};
use relabel_core::dataset::diff_versions;
use relabel_core::loop_engine::{dev_metric, PredictionSource};
use relabel_core::review::{build_queue, resolve_log};
use relabel_core::sim::{run_simulation, SimConfig};
use relabel_core::{
    jsonl, DatasetVersion, DetectorConfig, Item, Label, LabelSource, Payload, Prediction, RelabelLoop, ReviewDecision,
    Split, Store, TrainConfig,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::{Cli, Command, DetectArgs, Format, SimulateArgs};

/// One line of an `init` input file.
#[derive(Debug, Deserialize)]
struct ImportRow {
    id: String,
    #[serde(default = "train_split")]
    split: Split,
    payload: Payload,
    label: Label,
}

fn train_split() -> Split {
    Split::Train
}

struct Out {
    format: Format,
}

impl Out {
    /// Print `human` or the JSON rendering of `value`.
    fn emit<T: Serialize>(&self, human: impl FnOnce() -> String, value: &T) -> Result<()> {
        match self.format {
            Format::Human => println!("{}", human()),
            Format::Json => println!("{}", serde_json::to_string_pretty(value)?),
        }
        Ok(())
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let out = Out { format: cli.format };
    let store = || -> Result<PathBuf> {
        cli.store
            .clone()
            .ok_or_else(|| anyhow!("no store given: pass --store or set RELABEL_STORE"))
    };
    match cli.command {
        Command::Init { task, ref input } => init(&store()?, task, input, &out),
        Command::Detect(ref args) => detect(&store()?, args, cli.seed, &out),
        Command::Queue { round, mode } => queue(&store()?, round, mode, &out),
        Command::Serve { addr } => serve(&store()?, addr),
        Command::Merge {
            round,
            ref decisions,
            close,
        } => merge(&store()?, round, decisions.as_deref(), close, &out),
        Command::TrainBaseline {
            ref version,
            epochs,
            learning_rate,
        } => train_baseline(&store()?, version.as_deref(), epochs, learning_rate, cli.seed, &out),
        Command::Predict { ref model, ref version } => predict(&store()?, model, version.as_deref()),
        Command::Simulate(ref args) => simulate(&store()?, args, cli.seed, &out),
        Command::Metrics { ref predictions } => metrics(&store()?, predictions.as_deref(), &out),
        Command::Diff { ref from, ref to } => diff(&store()?, from, to, &out),
    }
}

fn init(root: &Path, task: relabel_core::TaskKind, input: &Path, out: &Out) -> Result<()> {
    let rows: Vec<ImportRow> = jsonl::read_records(input)?;
    let items = rows
        .into_iter()
        .map(|r| Item::new(r.id, r.split, r.payload, r.label, LabelSource::Import))
        .collect();
    let version = DatasetVersion::new_root(task, items)?;
    let lp = RelabelLoop::init(root, version)?;
    let v = lp.current_version();
    let summary = json!({
        "version_id": v.version_id(),
        "task": v.task(),
        "round": v.round(),
        "train_items": v.train_items().count(),
        "dev_items": v.dev_items().count(),
    });
    out.emit(
        || {
            format!(
                "initialized {} store at {}\nversion {} (round 0): {} train, {} dev",
                v.task(),
                root.display(),
                v.version_id(),
                v.train_items().count(),
                v.dev_items().count()
            )
        },
        &summary,
    )
}

fn detect(root: &Path, args: &DetectArgs, seed: u64, out: &Out) -> Result<()> {
    let mut lp = RelabelLoop::open(root)?;
    let expected = lp.state().round + 1;
    if args.round != expected {
        return Err(relabel_core::Error::StaleRound {
            requested: args.round,
            open: Some(expected),
        }
        .into());
    }
    let task = lp.state().task;
    let mut cfg = DetectorConfig::new(task);
    if let Some(t) = args.iou_threshold {
        cfg.iou_threshold = t;
    }
    if let Some(m) = args.generation_mode {
        cfg.generation_mode = m;
    }
    if let Some(t) = args.bleu_threshold {
        cfg.bleu_threshold = t;
    }
    if let Some(t) = args.ctr_threshold {
        cfg.ctr_threshold = t;
    }
    cfg.entity_class_filter = args.entity_class.clone();
    if let Some(mode) = args.review_mode {
        lp.set_review_mode(mode);
    }
    let source = match &args.predictions {
        Some(path) => PredictionSource::External(jsonl::read_records::<Prediction>(path)?),
        None => PredictionSource::Baseline(TrainConfig::for_task(task, seed)),
    };
    let result = lp.run_round(source, &cfg)?;
    let summary = json!({
        "round": result.round,
        "flags": result.flags.len(),
        "queued": result.queue.len(),
        "dropped": result.drops.len(),
        "dev_metric": result.dev_metric,
        "flags_path": lp.store().flags_path(result.round),
    });
    out.emit(
        || {
            format!(
                "round {}: {} flagged, {} queued for review, {} to drop; dev metric {}",
                result.round,
                result.flags.len(),
                result.queue.len(),
                result.drops.len(),
                fmt_metric(result.dev_metric)
            )
        },
        &summary,
    )
}

fn queue(root: &Path, round: u32, mode: Option<relabel_core::ReviewMode>, out: &Out) -> Result<()> {
    let tasks = match mode {
        None => Store::read_only(root).read_queue(round)?,
        Some(mode) => {
            let lp = RelabelLoop::open(root)?;
            let store = lp.store();
            if lp.state().open_round.as_ref().map(|o| o.round) != Some(round) {
                return Err(relabel_core::Error::StaleRound {
                    requested: round,
                    open: lp.state().open_round.as_ref().map(|o| o.round),
                }
                .into());
            }
            if !store.read_review_log(round)?.is_empty() {
                bail!("round {round} already has logged decisions; its queue can no longer change");
            }
            let flags = store.read_flags(round)?;
            let preds: Vec<Prediction> = jsonl::read_records(&store.preds_path(round))?;
            let tasks = build_queue(lp.current_version(), &flags, &preds, mode, 0)?;
            jsonl::write_records(&store.queue_path(round), &tasks)?;
            tasks
        }
    };
    out.emit(
        || {
            let mut lines = vec![format!("round {round}: {} tasks", tasks.len())];
            lines.extend(tasks.iter().map(|t| {
                format!("{:>5}  {}  {:?}  severity {:.3}  {}", t.queue_position, t.item_id, t.mode, t.severity, t.reason.kind())
            }));
            lines.join("\n")
        },
        &tasks,
    )
}

fn serve(root: &Path, addr: std::net::SocketAddr) -> Result<()> {
    let state = relabel_server::AppState::load(root, relabel_server::system_clock())?;
    let rt = tokio::runtime::Runtime::new()?;
    eprintln!("serving {} on http://{addr}/api/v1", root.display());
    rt.block_on(relabel_server::serve(addr, state))?;
    Ok(())
}

fn merge(root: &Path, round: u32, decisions: Option<&Path>, close: bool, out: &Out) -> Result<()> {
    let mut lp = RelabelLoop::open(root)?;
    let resolved: Vec<ReviewDecision> = match decisions {
        Some(path) => jsonl::read_records(path)?,
        None => {
            let store = lp.store();
            if !store.is_closed(round) {
                if !close {
                    return Err(relabel_core::Error::RoundOpen(round))
                        .context("close the round through the review API or pass --close");
                }
                store.mark_closed(round)?;
            }
            resolve_log(&store.read_review_log(round)?, &store.read_queue(round)?)
        }
    };
    let open = lp.state().open_round.as_ref().map(|o| o.round);
    if open != Some(round) {
        return Err(relabel_core::Error::StaleRound { requested: round, open }.into());
    }
    let state = lp.apply_round(&resolved)?;
    let record = state.history.last().expect("apply_round records the round");
    out.emit(
        || {
            format!(
                "round {}: applied {} decisions, dropped {} items; new version {}",
                record.round, record.decisions_applied, record.items_dropped, record.version_id
            )
        },
        record,
    )
}

fn resolve_version(store: &Store, state: &relabel_core::LoopState, key: Option<&str>) -> Result<DatasetVersion> {
    let id = match key {
        None | Some("current") => state.current_version.clone(),
        Some("initial") => state.initial_version.clone(),
        Some(k) => match k.parse::<u32>() {
            Ok(0) => state.initial_version.clone(),
            Ok(r) => state
                .history
                .iter()
                .find(|rec| rec.round == r)
                .map(|rec| rec.version_id.clone())
                .ok_or(relabel_core::Error::UnknownRound(r))?,
            Err(_) => k.to_owned(),
        },
    };
    Ok(store.load_version(&id)?)
}

fn train_baseline(
    root: &Path,
    version: Option<&str>,
    epochs: Option<u32>,
    learning_rate: Option<f64>,
    seed: u64,
    out: &Out,
) -> Result<()> {
    let lp = RelabelLoop::open(root)?;
    let v = resolve_version(lp.store(), lp.state(), version)?;
    let mut cfg = TrainConfig::for_task(v.task(), seed);
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = learning_rate {
        cfg.learning_rate = lr;
    }
    let (model, losses) = baseline::train_with_losses(&v, &cfg)?;
    let dir = root.join("models");
    std::fs::create_dir_all(&dir).with_context(|| format!("create {}", dir.display()))?;
    let rel = PathBuf::from("models").join(format!("{}-{}.bin", v.version_id(), model.model_id()));
    model.save(&root.join(&rel))?;
    let dev = dev_metric(&v, &baseline::predict(&model, &v)?);
    let summary = json!({
        "model": rel,
        "model_id": model.model_id(),
        "version_id": v.version_id(),
        "epoch_losses": losses,
        "dev_metric": dev,
    });
    out.emit(
        || {
            format!(
                "trained {} on {} ({} epochs, final loss {:.4}); dev metric {}\nsaved {}",
                model.model_id(),
                v.version_id(),
                cfg.epochs,
                losses.last().copied().unwrap_or(f64::NAN),
                fmt_metric(dev),
                rel.display()
            )
        },
        &summary,
    )
}

fn predict(root: &Path, model: &Path, version: Option<&str>) -> Result<()> {
    let store = Store::read_only(root);
    let state = store.load_state()?;
    let v = resolve_version(&store, &state, version)?;
    let path = if model.is_absolute() { model.to_path_buf() } else { root.join(model) };
    let model = LinearModel::load(&path)?;
    print!("{}", jsonl::render_records(&baseline::predict(&model, &v)?)?);
    Ok(())
}

fn simulate(root: &Path, args: &SimulateArgs, seed: u64, out: &Out) -> Result<()> {
    if root.join(relabel_core::loop_engine::STATE_FILE).exists() {
        bail!("{} already holds a store; simulate needs a fresh directory", root.display());
    }
    let mut cfg = SimConfig::new(args.task, args.n, args.noise, args.annotator_accuracy, args.rounds, seed);
    cfg.classes = args.classes;
    cfg.review_mode = args.review_mode;
    let report = run_simulation(root, &cfg)?;
    let csv = report.to_csv()?;
    jsonl::write_atomic(&root.join("report.csv"), csv.as_bytes())?;
    jsonl::write_json(&root.join("report.json"), &report)?;
    match out.format {
        Format::Human => print!("{csv}"),
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

fn metrics(root: &Path, predictions: Option<&Path>, out: &Out) -> Result<()> {
    let store = Store::read_only(root);
    let state = store.load_state()?;
    if let Some(path) = predictions {
        let v = store.load_version(&state.current_version)?;
        let preds: Vec<Prediction> = jsonl::read_records(path)?;
        let dev = dev_metric(&v, &preds);
        let summary = json!({ "version_id": v.version_id(), "dev_metric": dev });
        return out.emit(|| format!("dev metric on {}: {}", v.version_id(), fmt_metric(dev)), &summary);
    }
    out.emit(
        || {
            let mut lines = vec![format!(
                "{} store, round {}, current version {}",
                state.task, state.round, state.current_version
            )];
            lines.push("round  flags  decisions  dropped  dev_metric  retrained_dev_metric".into());
            for r in &state.history {
                lines.push(format!(
                    "{:>5}  {:>5}  {:>9}  {:>7}  {:>10}  {:>20}",
                    r.round,
                    r.flags_emitted,
                    r.decisions_applied,
                    r.items_dropped,
                    fmt_metric(r.dev_metric),
                    fmt_metric(r.post_dev_metric)
                ));
            }
            if let Some(open) = &state.open_round {
                lines.push(format!(
                    "round {} open: {} flagged, dev metric {}",
                    open.round,
                    open.flags_emitted,
                    fmt_metric(open.dev_metric)
                ));
            }
            lines.join("\n")
        },
        &state,
    )
}

fn diff(root: &Path, from: &str, to: &str, out: &Out) -> Result<()> {
    let store = Store::read_only(root);
    let state = store.load_state()?;
    let a = resolve_version(&store, &state, Some(from))?;
    let b = resolve_version(&store, &state, Some(to))?;
    let changes = diff_versions(&a, &b)?;
    out.emit(
        || {
            let mut lines = vec![format!("{} -> {}: {} changed", a.version_id(), b.version_id(), changes.len())];
            lines.extend(changes.iter().map(|d| match &d.new {
                Some(new) => format!("{}  {}  ->  {}", d.item_id, label_text(&d.old), label_text(new)),
                None => format!("{}  {}  ->  (dropped)", d.item_id, label_text(&d.old)),
            }));
            lines.join("\n")
        },
        &changes,
    )
}

fn label_text(label: &Label) -> String {
    serde_json::to_string(label).unwrap_or_default()
}

fn fmt_metric(m: Option<f64>) -> String {
    m.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}
