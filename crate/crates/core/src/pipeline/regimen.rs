use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::data::{holdout_split, load_dataset, Dataset};
use super::spec::{RegimenSpec, TaskKind};
use super::train::{evaluate_dataset, head_transition, holdout_seed, predict_qa, prepare_stage, train_stage, HeadDecision};
use super::{derive_seed, stable_hash};
use crate::datakit::{build_vocabulary, Vocabulary};
use crate::eval::{evaluate_qa, ForgettingReport, MetricReport, MetricTask};
use crate::model::checkpoint::{load_checkpoint, read_manifest, save_checkpoint, CheckpointMeta, LineageEntry};
use crate::model::{init_encoder, EncoderWeights, Model, TaskHead};
use crate::{Error, Result};

pub const RECORD_FILE: &str = "record.json";
pub const VOCAB_FILE: &str = "vocab.json";
pub const FORGETTING_FILE: &str = "forgetting.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const PREDICTIONS_DIR: &str = "predictions";
/// Per-stage wall times, kept out of `record.json` so records stay
/// byte-identical across reruns.
pub const TIMINGS_FILE: &str = "timings.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// `stage` is 1-based; 0 means the failure happened after training.
    Failed { stage: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// 1-based position in the regimen.
    pub stage: usize,
    pub task: TaskKind,
    pub seed: u64,
    pub samples_used: usize,
    pub held_out: usize,
    pub dropped: usize,
    pub steps: usize,
    pub final_loss: f64,
    pub head: HeadDecision,
    pub freeze: String,
    pub encoder_frozen: bool,
    pub checkpoint_id: String,
    pub parent_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub name: String,
    pub status: RunStatus,
    pub regimen: RegimenSpec,
    pub vocab_size: usize,
    pub init_checkpoint: String,
    pub stages: Vec<StageRecord>,
    /// Zero-shot metrics per evaluation target label.
    pub metrics: BTreeMap<String, MetricReport>,
    pub notes: Vec<String>,
    /// File holding the forgetting matrix, relative to the run directory.
    pub forgetting: Option<String>,
}

impl RunRecord {
    pub fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    pub fn final_checkpoint(&self) -> &str {
        self.stages.last().map(|s| s.checkpoint_id.as_str()).unwrap_or(&self.init_checkpoint)
    }

    /// Mean F1 over evaluation targets.
    pub fn headline_f1(&self) -> Option<f64> {
        if self.metrics.is_empty() {
            return None;
        }
        Some(self.metrics.values().map(|m| m.primary()).sum::<f64>() / self.metrics.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub forgetting_probe: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { forgetting_probe: true }
    }
}

/// Every problem with `spec`; empty when it can run. Reads the datasets it
/// references but writes nothing.
pub fn validate_regimen(spec: &RegimenSpec) -> Vec<String> {
    let mut v = Vec::new();
    if spec.name.trim().is_empty() {
        v.push("regimen name is empty".into());
    }
    if spec.stages.is_empty() {
        v.push("regimen has no stages".into());
    }
    if spec.eval_targets.is_empty() {
        v.push("regimen has no evaluation targets".into());
    }
    if !spec.stages.iter().any(|s| s.task == TaskKind::Qa) {
        v.push("regimen has no QA stage to evaluate with".into());
    }
    if spec.vocab_max_size < Vocabulary::N_RESERVED {
        v.push(format!("vocab_max_size must be at least {}", Vocabulary::N_RESERVED));
    }
    let mut cfg = spec.encoder.clone();
    cfg.vocab_size = cfg.vocab_size.max(Vocabulary::N_RESERVED);
    if let Err(e) = cfg.validate() {
        v.push(e.to_string());
    }
    if cfg.max_positions < 8 {
        v.push("encoder max_positions must be at least 8".into());
    }
    for (i, s) in spec.stages.iter().enumerate() {
        let at = format!("stage {} ({})", i + 1, s.task);
        if s.epochs == 0 {
            v.push(format!("{at}: epochs must be at least 1"));
        }
        if s.max_samples == Some(0) {
            v.push(format!("{at}: max_samples must be at least 1"));
        }
        if s.batch_size == 0 {
            v.push(format!("{at}: batch_size must be at least 1"));
        }
        if !(s.lr.is_finite() && s.lr > 0.0) {
            v.push(format!("{at}: lr must be positive"));
        }
        if !(s.mask_prob > 0.0 && s.mask_prob <= 1.0) {
            v.push(format!("{at}: mask_prob must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&s.holdout_fraction) {
            v.push(format!("{at}: holdout_fraction must lie in [0, 1)"));
        }
        if let Err(e) = s.freeze.validate(spec.encoder.n_layers) {
            v.push(format!("{at}: {e}"));
        }
        if let Err(e) = load_dataset(&s.dataset, Some(s.task)) {
            v.push(format!("{at}: {e}"));
        }
    }
    for t in &spec.eval_targets {
        if let Err(e) = load_dataset(t, Some(TaskKind::Qa)) {
            v.push(format!("evaluation target {t}: {e}"));
        }
    }
    let sources = spec.effective_vocab_sources();
    for s in &spec.vocab_sources {
        if let Err(e) = load_dataset(s, None) {
            v.push(format!("vocabulary source {s}: {e}"));
        }
    }
    for (i, s) in spec.stages.iter().enumerate() {
        if !sources.contains(&s.dataset) {
            v.push(format!("stage {} dataset {} is not a vocabulary source", i + 1, s.dataset));
        }
    }
    v
}

fn sanitize(name: &str) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| if c.is_alphanumeric() || "-_.+/ ".contains(c) { c } else { '_' })
        .collect();
    cleaned
        .split('/')
        .map(|p| match p.trim() {
            "" | "." | ".." => "_".to_string(),
            p => p.replace(' ', "_"),
        })
        .collect::<Vec<_>>()
        .join("/")
}

/// `root/runs/<name>/<key>`, where `key` hashes the full spec so identical
/// specs share a directory.
pub fn run_dir_for(root: &Path, spec: &RegimenSpec) -> PathBuf {
    let bytes = serde_json::to_vec(spec).expect("spec serializes");
    let key = format!("{:016x}", stable_hash(&bytes));
    root.join("runs").join(sanitize(&spec.name)).join(&key[..12])
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializes");
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(&bytes, &e))
}

pub fn read_record(run_dir: &Path) -> Result<RunRecord> {
    read_json(&run_dir.join(RECORD_FILE))
}

/// Saves under `checkpoints/<id>` and returns the id.
fn save_stage_checkpoint(
    run_dir: &Path,
    encoder: &EncoderWeights<f32>,
    head: Option<(&str, &TaskHead<f32>)>,
    meta: CheckpointMeta,
) -> Result<String> {
    let root = run_dir.join(CHECKPOINT_DIR);
    let tmp = root.join(format!(".tmp-{}", meta.label));
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    let heads: Vec<(&str, &TaskHead<f32>)> = head.into_iter().collect();
    let manifest = save_checkpoint(&tmp, encoder, &heads, meta)?;
    let dest = root.join(&manifest.id);
    if dest.exists() {
        std::fs::remove_dir_all(&dest).map_err(|e| Error::io(&dest, e))?;
    }
    std::fs::rename(&tmp, &dest).map_err(|e| Error::io(&dest, e))?;
    Ok(manifest.id)
}

pub fn checkpoint_path(run_dir: &Path, id: &str) -> PathBuf {
    run_dir.join(CHECKPOINT_DIR).join(id)
}

/// Task order recovered by following parent links back from `checkpoint_id`.
pub fn lineage_tasks(run_dir: &Path, checkpoint_id: &str) -> Result<Vec<TaskKind>> {
    let mut out = Vec::new();
    let mut next = Some(checkpoint_id.to_string());
    while let Some(id) = next {
        let m = read_manifest(&checkpoint_path(run_dir, &id))?;
        if let Some(t) = &m.task {
            out.push(TaskKind::parse(t).ok_or_else(|| Error::Missing(format!("unknown task {t:?} in checkpoint {id}")))?);
        }
        next = m.parent;
    }
    out.reverse();
    Ok(out)
}

fn load_vocab(spec: &RegimenSpec) -> Result<Vocabulary> {
    let mut texts = Vec::new();
    for src in spec.effective_vocab_sources() {
        let task = spec.stages.iter().find(|s| s.dataset == src).map(|s| s.task);
        texts.extend(load_dataset(&src, task)?.texts());
    }
    build_vocabulary(texts.iter().map(String::as_str), spec.vocab_max_size)
}

fn stage_seed(spec: &RegimenSpec, index: usize) -> u64 {
    spec.stages[index].seed.unwrap_or_else(|| derive_seed(spec.seed, &[index as u64]))
}

/// Runs every stage in order, chaining checkpoints under `run_dir`, then
/// evaluates zero-shot on each target. A failing stage yields a record
/// marked failed; artifacts written so far stay on disk.
pub fn run_regimen(spec: &RegimenSpec, run_dir: &Path, opts: RunOptions) -> Result<RunRecord> {
    let violations = validate_regimen(spec);
    if !violations.is_empty() {
        return Err(Error::InvalidSpec(violations.join("; ")));
    }
    std::fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let vocab = load_vocab(spec)?;
    write_json(&run_dir.join(VOCAB_FILE), &vocab)?;

    let mut cfg = spec.encoder.clone();
    cfg.vocab_size = vocab.size();
    cfg.seed = derive_seed(spec.seed, &[0x1417]);
    let mut encoder = init_encoder::<f32>(&cfg)?;
    let init_id = save_stage_checkpoint(
        run_dir,
        &encoder,
        None,
        CheckpointMeta {
            label: "init".into(),
            seeds: BTreeMap::from([("init".to_string(), cfg.seed)]),
            ..Default::default()
        },
    )?;

    let mut record = RunRecord {
        name: spec.name.clone(),
        status: RunStatus::Completed,
        regimen: spec.clone(),
        vocab_size: vocab.size(),
        init_checkpoint: init_id.clone(),
        stages: Vec::new(),
        metrics: BTreeMap::new(),
        notes: Vec::new(),
        forgetting: None,
    };
    let mut prev_head: Option<(TaskKind, TaskHead<f32>)> = None;
    let mut parent = init_id;
    let mut lineage: Vec<LineageEntry> = Vec::new();
    let mut timings: Vec<u64> = Vec::new();
    for (k, stage) in spec.stages.iter().enumerate() {
        let started = Instant::now();
        let seed = stage_seed(spec, k);
        let result = (|| -> Result<(StageRecord, TaskHead<f32>)> {
            let data = load_dataset(&stage.dataset, Some(stage.task))?;
            let prep = prepare_stage(stage, &data, seed, &vocab, cfg.max_positions)?;
            let (head, decision) = head_transition(prev_head.take(), stage.task, &prep.labels, cfg.hidden, vocab.size());
            let mut model = Model {
                encoder: encoder.clone(),
                head,
            };
            let summary = train_stage(&mut model, stage, &prep.features, seed)
                .map_err(|e| Error::InvalidSpec(format!("stage {} ({}) aborted: {e}", k + 1, stage.task)))?;
            let id = save_stage_checkpoint(
                run_dir,
                &model.encoder,
                Some((stage.task.slug(), &model.head)),
                CheckpointMeta {
                    label: format!("stage-{}-{}", k + 1, stage.task.slug()),
                    task: Some(stage.task.name().into()),
                    stage_index: Some(k + 1),
                    parent: Some(parent.clone()),
                    lineage: lineage.clone(),
                    seeds: BTreeMap::from([("stage".to_string(), seed)]),
                    metrics: BTreeMap::from([("final_loss".to_string(), summary.final_loss)]),
                },
            )?;
            encoder = model.encoder;
            let rec = StageRecord {
                stage: k + 1,
                task: stage.task,
                seed,
                samples_used: prep.samples_used,
                held_out: prep.held_out.len(),
                dropped: prep.dropped,
                steps: summary.steps,
                final_loss: summary.final_loss,
                head: decision,
                freeze: stage.freeze.label(),
                encoder_frozen: stage.freeze.freezes_encoder(),
                checkpoint_id: id,
                parent_id: parent.clone(),
            };
            Ok((rec, model.head))
        })();
        timings.push(started.elapsed().as_millis() as u64);
        write_json(&run_dir.join(TIMINGS_FILE), &timings)?;
        match result {
            Ok((rec, head)) => {
                lineage.push(LineageEntry {
                    stage_index: k + 1,
                    task: stage.task.name().into(),
                    checkpoint_id: rec.checkpoint_id.clone(),
                });
                parent = rec.checkpoint_id.clone();
                prev_head = Some((stage.task, head));
                record.stages.push(rec);
            }
            Err(e) => {
                record.status = RunStatus::Failed {
                    stage: k + 1,
                    message: e.to_string(),
                };
                write_json(&run_dir.join(RECORD_FILE), &record)?;
                return Ok(record);
            }
        }
    }

    if let Err(e) = final_evaluation(spec, run_dir, &vocab, &encoder, prev_head, &mut record) {
        record.status = RunStatus::Failed {
            stage: 0,
            message: format!("evaluation: {e}"),
        };
        write_json(&run_dir.join(RECORD_FILE), &record)?;
        return Ok(record);
    }
    write_json(&run_dir.join(RECORD_FILE), &record)?;
    if opts.forgetting_probe {
        let report = forgetting_probe(run_dir)?;
        write_json(&run_dir.join(FORGETTING_FILE), &report)?;
        record.forgetting = Some(FORGETTING_FILE.into());
        write_json(&run_dir.join(RECORD_FILE), &record)?;
    }
    Ok(record)
}

fn final_evaluation(
    spec: &RegimenSpec,
    run_dir: &Path,
    vocab: &Vocabulary,
    encoder: &EncoderWeights<f32>,
    last: Option<(TaskKind, TaskHead<f32>)>,
    record: &mut RunRecord,
) -> Result<()> {
    let qa_head = match last {
        Some((TaskKind::Qa, head)) => head,
        _ => {
            let stage = record
                .stages
                .iter()
                .rev()
                .find(|s| s.task == TaskKind::Qa)
                .ok_or_else(|| Error::Missing("no QA stage completed".into()))?;
            let ckpt = load_checkpoint(&checkpoint_path(run_dir, &stage.checkpoint_id))?;
            record.notes.push(format!(
                "non-QA terminal stage: QA head reloaded from stage {} and paired with the final encoder",
                stage.stage
            ));
            ckpt.head(TaskKind::Qa.slug())
                .cloned()
                .ok_or_else(|| Error::Missing(format!("QA head in checkpoint {}", stage.checkpoint_id)))?
        }
    };
    let pred_dir = run_dir.join(PREDICTIONS_DIR);
    std::fs::create_dir_all(&pred_dir).map_err(|e| Error::io(&pred_dir, e))?;
    for target in &spec.eval_targets {
        let Dataset::Qa(examples) = load_dataset(target, Some(TaskKind::Qa))? else {
            unreachable!("loaded as QA");
        };
        let preds = predict_qa(encoder, &qa_head, &examples, vocab)?;
        let label = target.label();
        write_json(&pred_dir.join(format!("{label}.json")), &preds)?;
        record.metrics.insert(label, evaluate_qa(&preds, &examples)?);
    }
    Ok(())
}

/// Evaluates the encoder after every stage `k` against the held-out split
/// of every earlier stage `j ≤ k`, using the head stage `j` trained.
pub fn forgetting_probe(run_dir: &Path) -> Result<ForgettingReport> {
    let record = read_record(run_dir)?;
    let vocab: Vocabulary = read_json(&run_dir.join(VOCAB_FILE))?;
    let spec = &record.regimen;
    let mut held_out = Vec::new();
    let mut checkpoints = Vec::new();
    for s in &record.stages {
        let stage = &spec.stages[s.stage - 1];
        let data = load_dataset(&stage.dataset, Some(stage.task))?;
        held_out.push(holdout_split(&data, stage.holdout_fraction, holdout_seed(s.seed)).1);
        let ckpt = load_checkpoint(&checkpoint_path(run_dir, &s.checkpoint_id)).map_err(|e| {
            Error::Missing(format!("checkpoint for stage {} ({}): {e}", s.stage, s.task))
        })?;
        checkpoints.push(ckpt);
    }
    let mut matrix = Vec::with_capacity(record.stages.len());
    for (k, ck) in checkpoints.iter().enumerate() {
        let mut row = Vec::with_capacity(k + 1);
        for (j, sj) in record.stages.iter().enumerate().take(k + 1) {
            let head = checkpoints[j]
                .head(sj.task.slug())
                .ok_or_else(|| Error::Missing(format!("head for stage {}", sj.stage)))?;
            let data = &held_out[j];
            row.push(if data.is_empty() {
                None
            } else {
                Some(evaluate_dataset(&ck.encoder, head, data, &vocab, derive_seed(sj.seed, &[0xf0]))?.primary())
            });
        }
        matrix.push(row);
    }
    Ok(ForgettingReport {
        stages: record.stages.iter().map(|s| s.task.name().to_string()).collect(),
        metrics: record
            .stages
            .iter()
            .map(|s| match s.task {
                TaskKind::Qa => MetricTask::Qa,
                TaskKind::Ner => MetricTask::Ner,
                TaskKind::Qcls => MetricTask::Qcls,
                TaskKind::Mlm => MetricTask::Mlm,
            })
            .collect(),
        matrix,
    })
}

/// Runs `specs` on up to `workers` threads. Each run writes only under its
/// own directory; results come back in input order.
pub fn run_many(specs: &[RegimenSpec], root: &Path, workers: usize, opts: RunOptions) -> Vec<(PathBuf, Result<RunRecord>)> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<(PathBuf, Result<RunRecord>)>>> = Mutex::new((0..specs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1).min(specs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(spec) = specs.get(i) else { break };
                let dir = run_dir_for(root, spec);
                let r = run_regimen(spec, &dir, opts);
                results.lock().unwrap()[i] = Some((dir, r));
            });
        }
    });
    results.into_inner().unwrap().into_iter().map(|r| r.expect("every spec ran")).collect()
}
