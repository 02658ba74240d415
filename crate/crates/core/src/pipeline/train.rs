use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{holdout_split, subsample_dataset, Dataset};
use super::derive_seed;
use super::spec::{StageSpec, TaskKind};
use crate::datakit::features::{mlm_features, ner_feature, qa_feature, qa_training_features, qcls_features, tag_inventory, Labels};
use crate::datakit::tokenize::char_slice;
use crate::datakit::{tokenize_with_offsets, PackingLimits, QaExample, QclsDataset, TokenizedFeature, Vocabulary};
use crate::eval::{evaluate_ner, evaluate_qa, evaluate_qcls, MetricReport, MetricTask, QaPredictions};
use crate::model::decode::MAX_ANSWER_LEN;
use crate::model::mlm::mask_for_mlm;
use crate::model::optim::AdamConfig;
use crate::model::{
    backward, encode, head_logits, predict_span, Adam, BackwardOptions, Batch, EncoderWeights, Example, Model,
    TaskHead, Target,
};
use crate::{Error, Result};

/// How the head for a stage was obtained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadDecision {
    pub reused: bool,
    pub reason: String,
}

/// Label inventory a stage's head is built over: the tag set for NER, the
/// class names for QCLS, nothing otherwise.
pub fn head_labels(data: &Dataset) -> Vec<String> {
    match data {
        Dataset::Ner(v) => tag_inventory(v),
        Dataset::Qcls(v) => QclsDataset::from_examples(v.clone()).inventory,
        _ => Vec::new(),
    }
}

/// The encoder always carries over. The previous head is reused only when
/// both the task kind and the label inventory match; otherwise a fresh
/// zero-initialized head is built.
pub fn head_transition(
    prev: Option<(TaskKind, TaskHead<f32>)>,
    next: TaskKind,
    labels: &[String],
    hidden: usize,
    vocab_size: usize,
) -> (TaskHead<f32>, HeadDecision) {
    let fresh = |reason: String| {
        (
            TaskHead::zeros(next.head_kind(), hidden, labels.to_vec(), vocab_size),
            HeadDecision { reused: false, reason },
        )
    };
    match prev {
        None => fresh("no previous head".into()),
        Some((task, _)) if task != next => fresh(format!("task kind changed ({task} -> {next})")),
        Some((_, head)) if head.labels != labels || (next == TaskKind::Mlm && head.n_out() != vocab_size) => {
            fresh("inventory mismatch".into())
        }
        Some((_, head)) => (
            head,
            HeadDecision {
                reused: true,
                reason: "same task and inventory".into(),
            },
        ),
    }
}

/// Training inputs for one stage, after the held-out split and subsampling.
pub struct PreparedStage {
    pub labels: Vec<String>,
    pub features: Vec<TokenizedFeature>,
    pub held_out: Dataset,
    pub samples_used: usize,
    pub dropped: usize,
}

pub fn holdout_seed(stage_seed: u64) -> u64 {
    derive_seed(stage_seed, &[0x401d])
}

pub fn prepare_stage(stage: &StageSpec, data: &Dataset, seed: u64, vocab: &Vocabulary, max_len: usize) -> Result<PreparedStage> {
    if data.task() != stage.task {
        return Err(Error::InvalidSpec(format!("{} stage given {} data", stage.task, data.task())));
    }
    let labels = head_labels(data);
    let (train, held_out) = holdout_split(data, stage.holdout_fraction, holdout_seed(seed));
    let train = match stage.max_samples {
        Some(n) => subsample_dataset(&train, n, derive_seed(seed, &[0x5a])),
        None => train,
    };
    let samples_used = train.len();
    let (features, dropped) = build_features(&train, &labels, vocab, max_len);
    if features.is_empty() {
        return Err(Error::Empty(format!(
            "{} stage has no training examples left after truncation ({dropped} dropped)",
            stage.task
        )));
    }
    Ok(PreparedStage {
        labels,
        features,
        held_out,
        samples_used,
        dropped,
    })
}

fn build_features(data: &Dataset, labels: &[String], vocab: &Vocabulary, max_len: usize) -> (Vec<TokenizedFeature>, usize) {
    match data {
        Dataset::Qa(v) => qa_training_features(v, vocab, PackingLimits::new(max_len)),
        Dataset::Ner(v) => (v.iter().map(|e| ner_feature(e, vocab, labels, max_len)).collect(), 0),
        Dataset::Qcls(v) => (qcls_features(&QclsDataset::from_examples(v.clone()), vocab, max_len), 0),
        Dataset::Corpus(c) => {
            let all = mlm_features(c, vocab, max_len);
            let n = all.len();
            let kept: Vec<_> = all.into_iter().filter(|f| !f.context.is_empty()).collect();
            let dropped = n - kept.len();
            (kept, dropped)
        }
    }
}

/// Dynamic masking with at least one supervised position per sequence.
fn masked_inputs(f: &TokenizedFeature, mask_prob: f64, vocab_size: usize, seed: u64) -> Result<(Vec<u32>, Vec<Option<u32>>)> {
    let (mut ids, mut labels) = mask_for_mlm(&f.input_ids, mask_prob, vocab_size, seed)?;
    if labels.iter().all(Option::is_none) {
        let body: Vec<usize> = f.context.clone().filter(|&i| !Vocabulary::is_special(f.input_ids[i])).collect();
        let pick = if body.is_empty() {
            f.context.start + (seed as usize) % f.context.len()
        } else {
            body[(seed as usize) % body.len()]
        };
        labels[pick] = Some(f.input_ids[pick]);
        ids[pick] = Vocabulary::MASK;
    }
    Ok((ids, labels))
}

/// Owned inputs for one training example; `Example` borrows from it.
struct Owned {
    ids: Vec<u32>,
    valid: Vec<bool>,
    mlm: Vec<Option<u32>>,
}

fn example<'a>(f: &'a TokenizedFeature, owned: &'a Owned) -> Example<'a> {
    let target = match &f.labels {
        Labels::Span => {
            let (start, end) = f.answer_span.expect("training features carry spans");
            Target::Span {
                context: &f.context,
                start,
                end,
            }
        }
        Labels::Tags(t) => Target::Tags(t),
        Labels::Class(c) => Target::Class(*c),
        Labels::Masked(_) => Target::Mlm(&owned.mlm),
    };
    Example {
        ids: &owned.ids,
        valid: &owned.valid,
        target,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub steps: usize,
    /// Mean training loss over the final epoch.
    pub final_loss: f64,
}

/// Trains `model` on `features` for the stage's epochs with a fresh Adam
/// under its freeze policy. Deterministic in the incoming model and `seed`.
pub fn train_stage(model: &mut Model<f32>, stage: &StageSpec, features: &[TokenizedFeature], seed: u64) -> Result<TrainSummary> {
    if stage.epochs == 0 || stage.batch_size == 0 {
        return Err(Error::InvalidSpec("epochs and batch_size must be at least 1".into()));
    }
    stage.freeze.validate(model.encoder.config.n_layers)?;
    let vocab_size = model.encoder.config.vocab_size;
    let mut adam = Adam::new(
        AdamConfig {
            lr: stage.lr,
            ..Default::default()
        },
        model,
    );
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut steps = 0usize;
    let mut final_loss = 0.0;
    for epoch in 0..stage.epochs {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1, epoch as u64])));
        let mut total = 0.0f64;
        for chunk in order.chunks(stage.batch_size) {
            let owned: Vec<Owned> = chunk
                .iter()
                .map(|&i| {
                    let f = &features[i];
                    let (ids, mlm) = if matches!(f.labels, Labels::Masked(_)) {
                        masked_inputs(f, stage.mask_prob, vocab_size, derive_seed(seed, &[2, epoch as u64, i as u64]))?
                    } else {
                        (f.input_ids.clone(), Vec::new())
                    };
                    Ok(Owned {
                        valid: vec![true; ids.len()],
                        ids,
                        mlm,
                    })
                })
                .collect::<Result<_>>()?;
            let exs: Vec<Example<'_>> = chunk.iter().zip(&owned).map(|(&i, o)| example(&features[i], o)).collect();
            let opts = BackwardOptions {
                dropout_seed: Some(derive_seed(seed, &[3, steps as u64])),
                loss_scale: 1.0,
            };
            let (loss, grads) = backward(model, &exs, opts)?;
            adam.step(model, &grads, &stage.freeze)?;
            total += loss as f64 * chunk.len() as f64;
            steps += 1;
        }
        final_loss = total / features.len() as f64;
    }
    Ok(TrainSummary { steps, final_loss })
}

fn hidden_states(encoder: &EncoderWeights<f32>, ids: &[u32]) -> Result<Vec<f32>> {
    Ok(encode(encoder, &Batch::pad(&[ids]))?.remove(0))
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Answer text for every example whose context survives packing.
pub fn predict_qa(encoder: &EncoderWeights<f32>, head: &TaskHead<f32>, examples: &[QaExample], vocab: &Vocabulary) -> Result<QaPredictions> {
    let limits = PackingLimits::new(encoder.config.max_positions);
    let mut out = QaPredictions::new();
    for ex in examples {
        let Some(f) = qa_feature(ex, vocab, limits) else {
            continue;
        };
        let hidden = hidden_states(encoder, &f.input_ids)?;
        let logits = head_logits(head, &hidden);
        let start: Vec<f32> = logits.iter().step_by(2).copied().collect();
        let end: Vec<f32> = logits.iter().skip(1).step_by(2).copied().collect();
        let (s, e) = predict_span(&start, &end, &f.context, MAX_ANSWER_LEN)?;
        let (cs, ce) = (s - f.context.start, e - f.context.start);
        let text = char_slice(&ex.context, f.char_offsets[cs].0, f.char_offsets[ce].1).to_string();
        out.insert(ex.id.clone(), text);
    }
    Ok(out)
}

/// Scores `head` on `data` with the task's metric. MLM uses masked-token
/// accuracy under a fixed masking seed.
pub fn evaluate_dataset(encoder: &EncoderWeights<f32>, head: &TaskHead<f32>, data: &Dataset, vocab: &Vocabulary, seed: u64) -> Result<MetricReport> {
    let max_len = encoder.config.max_positions;
    match data {
        Dataset::Qa(v) => evaluate_qa(&predict_qa(encoder, head, v, vocab)?, v),
        Dataset::Ner(v) => {
            let mut preds = Vec::with_capacity(v.len());
            for ex in v {
                let f = ner_feature(ex, vocab, &head.labels, max_len);
                let hidden = hidden_states(encoder, &f.input_ids)?;
                let logits = head_logits(head, &hidden);
                let n = head.n_out();
                let mut tags: Vec<String> = f
                    .context
                    .clone()
                    .map(|t| head.labels[argmax(&logits[t * n..(t + 1) * n])].clone())
                    .collect();
                tags.resize(ex.tags.len(), "O".into());
                preds.push(Some(tags));
            }
            evaluate_ner(&preds, v)
        }
        Dataset::Qcls(v) => {
            let mut preds = Vec::with_capacity(v.len());
            for ex in v {
                let (ids, _) = tokenize_with_offsets(&ex.question, vocab);
                let mut input = vec![Vocabulary::CLS];
                input.extend(ids.into_iter().take(max_len.saturating_sub(2)));
                input.push(Vocabulary::SEP);
                let hidden = hidden_states(encoder, &input)?;
                let logits = head_logits(head, &hidden);
                preds.push(Some(head.labels[argmax(&logits[..head.n_out()])].clone()));
            }
            evaluate_qcls(&preds, v)
        }
        Dataset::Corpus(c) => {
            let feats = mlm_features(c, vocab, max_len);
            let n = head.n_out();
            let (mut correct, mut total) = (0usize, 0usize);
            for (i, f) in feats.iter().enumerate().filter(|(_, f)| !f.context.is_empty()) {
                let (ids, labels) = masked_inputs(f, 0.15, vocab.size(), derive_seed(seed, &[4, i as u64]))?;
                let hidden = hidden_states(encoder, &ids)?;
                let logits = head_logits(head, &hidden);
                for (t, gold) in labels.iter().enumerate() {
                    if let Some(g) = gold {
                        total += 1;
                        correct += usize::from(argmax(&logits[t * n..(t + 1) * n]) == *g as usize);
                    }
                }
            }
            Ok(MetricReport {
                task: MetricTask::Mlm,
                f1: None,
                exact_match: None,
                entity_f1: None,
                accuracy: Some(if total == 0 { 0.0 } else { 100.0 * correct as f64 / total as f64 }),
                n_examples: feats.len(),
                missing: 0,
            })
        }
    }
}
