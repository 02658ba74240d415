use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::model::{EncoderConfig, FreezePolicy, HeadKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TaskKind {
    Mlm,
    Ner,
    Qcls,
    Qa,
}

impl TaskKind {
    pub fn head_kind(self) -> HeadKind {
        match self {
            TaskKind::Mlm => HeadKind::Mlm,
            TaskKind::Ner => HeadKind::TokenCls,
            TaskKind::Qcls => HeadKind::SeqCls,
            TaskKind::Qa => HeadKind::SpanExtract,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Mlm => "MLM",
            TaskKind::Ner => "NER",
            TaskKind::Qcls => "QCLS",
            TaskKind::Qa => "QA",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            TaskKind::Mlm => "mlm",
            TaskKind::Ner => "ner",
            TaskKind::Qcls => "qcls",
            TaskKind::Qa => "qa",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MLM" => Some(TaskKind::Mlm),
            "NER" => Some(TaskKind::Ner),
            "QCLS" => Some(TaskKind::Qcls),
            "QA" => Some(TaskKind::Qa),
            _ => None,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A dataset file, given directly or as a member of a synthetic bundle.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetRef {
    Path(PathBuf),
    Member { bundle: PathBuf, member: String },
}

impl DatasetRef {
    pub fn member(bundle: impl Into<PathBuf>, member: &str) -> Self {
        DatasetRef::Member {
            bundle: bundle.into(),
            member: member.to_string(),
        }
    }

    /// Short name used for metric keys and prediction files.
    pub fn label(&self) -> String {
        match self {
            DatasetRef::Path(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
            DatasetRef::Member { bundle, member } => {
                let b = bundle.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                if b.is_empty() {
                    member.clone()
                } else {
                    format!("{b}.{member}")
                }
            }
        }
    }

    /// Relative paths are taken relative to `base`.
    pub fn resolve(&mut self, base: &Path) {
        let p = match self {
            DatasetRef::Path(p) => p,
            DatasetRef::Member { bundle, .. } => bundle,
        };
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
}

impl fmt::Display for DatasetRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetRef::Path(p) => write!(f, "{}", p.display()),
            DatasetRef::Member { bundle, member } => write!(f, "{}#{member}", bundle.display()),
        }
    }
}

fn default_epochs() -> usize {
    2
}
fn default_lr() -> f64 {
    1e-3
}
fn default_batch() -> usize {
    16
}
fn default_mask_prob() -> f64 {
    0.15
}
fn default_holdout() -> f64 {
    0.1
}

/// One training stage. `D` is the dataset reference; method templates use a
/// role name that a domain binds later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec<D = DatasetRef> {
    pub task: TaskKind,
    pub dataset: D,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_samples: Option<usize>,
    #[serde(default)]
    pub freeze: FreezePolicy,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Overrides the seed derived from the run seed and stage index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Selection probability for masked-LM stages.
    #[serde(default = "default_mask_prob")]
    pub mask_prob: f64,
    /// Share of the stage data kept out of training for the forgetting probe.
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
}

impl<D> StageSpec<D> {
    pub fn new(task: TaskKind, dataset: D) -> Self {
        Self {
            task,
            dataset,
            epochs: default_epochs(),
            max_samples: None,
            freeze: FreezePolicy::None,
            lr: default_lr(),
            batch_size: default_batch(),
            seed: None,
            mask_prob: default_mask_prob(),
            holdout_fraction: default_holdout(),
        }
    }

    pub fn with_dataset<E>(&self, dataset: E) -> StageSpec<E> {
        StageSpec {
            task: self.task,
            dataset,
            epochs: self.epochs,
            max_samples: self.max_samples,
            freeze: self.freeze,
            lr: self.lr,
            batch_size: self.batch_size,
            seed: self.seed,
            mask_prob: self.mask_prob,
            holdout_fraction: self.holdout_fraction,
        }
    }
}

fn default_vocab_max() -> usize {
    8000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimenSpec {
    pub name: String,
    pub stages: Vec<StageSpec>,
    pub eval_targets: Vec<DatasetRef>,
    #[serde(default)]
    pub seed: u64,
    /// Datasets whose text builds the vocabulary. Empty means every stage
    /// dataset.
    #[serde(default)]
    pub vocab_sources: Vec<DatasetRef>,
    #[serde(default = "default_vocab_max")]
    pub vocab_max_size: usize,
    #[serde(default)]
    pub encoder: EncoderConfig,
}

impl RegimenSpec {
    pub fn new(name: &str, stages: Vec<StageSpec>, eval_targets: Vec<DatasetRef>) -> Self {
        Self {
            name: name.to_string(),
            stages,
            eval_targets,
            seed: 0,
            vocab_sources: Vec::new(),
            vocab_max_size: default_vocab_max(),
            encoder: EncoderConfig::default(),
        }
    }

    pub fn effective_vocab_sources(&self) -> Vec<DatasetRef> {
        if !self.vocab_sources.is_empty() {
            return self.vocab_sources.clone();
        }
        let mut out: Vec<DatasetRef> = Vec::new();
        for s in &self.stages {
            if !out.contains(&s.dataset) {
                out.push(s.dataset.clone());
            }
        }
        out
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for s in &mut self.stages {
            s.dataset.resolve(base);
        }
        for d in self.eval_targets.iter_mut().chain(self.vocab_sources.iter_mut()) {
            d.resolve(base);
        }
    }

    pub fn task_order(&self) -> Vec<TaskKind> {
        self.stages.iter().map(|s| s.task).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_defaults_and_unknown_keys() {
        let s: StageSpec = serde_json::from_str(r#"{"task":"NER","dataset":"data/ner.conll"}"#).unwrap();
        assert_eq!((s.epochs, s.max_samples, s.freeze), (2, None, FreezePolicy::None));
        assert_eq!(s.dataset, DatasetRef::Path("data/ner.conll".into()));
        let err = serde_json::from_str::<StageSpec>(r#"{"task":"NER","dataset":"x","epocs":3}"#).unwrap_err();
        assert!(err.to_string().contains("epocs"));
        let m: StageSpec = serde_json::from_str(r#"{"task":"QA","dataset":{"bundle":"b","member":"qa_train"}}"#).unwrap();
        assert_eq!(m.dataset.label(), "b.qa_train");
    }

    #[test]
    fn vocab_sources_default_to_stage_datasets() {
        let a = DatasetRef::Path("a.txt".into());
        let spec = RegimenSpec::new(
            "r",
            vec![StageSpec::new(TaskKind::Mlm, a.clone()), StageSpec::new(TaskKind::Mlm, a.clone())],
            vec![],
        );
        assert_eq!(spec.effective_vocab_sources(), vec![a]);
    }

    #[test]
    fn relative_paths_resolve_against_base() {
        let mut d = DatasetRef::member("bundle", "ner");
        d.resolve(Path::new("/cfg"));
        assert_eq!(d, DatasetRef::member("/cfg/bundle", "ner"));
        let mut abs = DatasetRef::Path("/x/y.json".into());
        abs.resolve(Path::new("/cfg"));
        assert_eq!(abs, DatasetRef::Path("/x/y.json".into()));
    }
}
