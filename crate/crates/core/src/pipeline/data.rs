use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::spec::{DatasetRef, TaskKind};
use crate::datakit::synth::{BundleManifest, MANIFEST_FILE};
use crate::datakit::{
    parse_conll_ner, parse_corpus, parse_qcls_tsv, parse_squad_json, NerExample, QaExample, QclsExample, TextCorpus,
};
use crate::{Error, Result};

/// A parsed dataset of one of the four task formats.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Qa(Vec<QaExample>),
    Ner(Vec<NerExample>),
    Qcls(Vec<QclsExample>),
    Corpus(TextCorpus),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Qa(v) => v.len(),
            Dataset::Ner(v) => v.len(),
            Dataset::Qcls(v) => v.len(),
            Dataset::Corpus(c) => c.documents.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> TaskKind {
        match self {
            Dataset::Qa(_) => TaskKind::Qa,
            Dataset::Ner(_) => TaskKind::Ner,
            Dataset::Qcls(_) => TaskKind::Qcls,
            Dataset::Corpus(_) => TaskKind::Mlm,
        }
    }

    /// Raw text for vocabulary building.
    pub fn texts(&self) -> Vec<String> {
        match self {
            Dataset::Qa(v) => {
                let mut out = Vec::with_capacity(v.len() * 2);
                let mut last_context: Option<&str> = None;
                for ex in v {
                    if last_context != Some(ex.context.as_str()) {
                        out.push(ex.context.clone());
                        last_context = Some(&ex.context);
                    }
                    out.push(ex.question.clone());
                }
                out
            }
            Dataset::Ner(v) => v.iter().map(|e| e.tokens.join(" ")).collect(),
            Dataset::Qcls(v) => v.iter().map(|e| e.question.clone()).collect(),
            Dataset::Corpus(c) => c.documents.clone(),
        }
    }

    fn select(&self, idx: &[usize]) -> Dataset {
        fn pick<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
            idx.iter().map(|&i| v[i].clone()).collect()
        }
        match self {
            Dataset::Qa(v) => Dataset::Qa(pick(v, idx)),
            Dataset::Ner(v) => Dataset::Ner(pick(v, idx)),
            Dataset::Qcls(v) => Dataset::Qcls(pick(v, idx)),
            Dataset::Corpus(c) => Dataset::Corpus(TextCorpus {
                name: c.name.clone(),
                documents: pick(&c.documents, idx),
            }),
        }
    }
}

/// File a reference points at. Bundle members are looked up in the bundle
/// manifest.
pub fn resolve_path(r: &DatasetRef) -> Result<PathBuf> {
    match r {
        DatasetRef::Path(p) => Ok(p.clone()),
        DatasetRef::Member { bundle, member } => {
            let mpath = bundle.join(MANIFEST_FILE);
            let bytes = std::fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?;
            let manifest: BundleManifest = serde_json::from_slice(&bytes).map_err(|e| Error::json(&bytes, &e))?;
            let rel = manifest
                .path_of(member)
                .ok_or_else(|| Error::Missing(format!("bundle {} has no member {member:?}", bundle.display())))?;
            Ok(bundle.join(rel))
        }
    }
}

fn task_from_extension(path: &Path) -> TaskKind {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => TaskKind::Qa,
        Some("conll") => TaskKind::Ner,
        Some("tsv") => TaskKind::Qcls,
        _ => TaskKind::Mlm,
    }
}

/// Parses `r` in the format of `task`, or the format implied by the file
/// extension when `task` is `None`.
pub fn load_dataset(r: &DatasetRef, task: Option<TaskKind>) -> Result<Dataset> {
    let path = resolve_path(r)?;
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let task = task.unwrap_or_else(|| task_from_extension(&path));
    let in_file = |e: Error| Error::InvalidSpec(format!("{} as {task} data: {e}", path.display()));
    let data = match task {
        TaskKind::Qa => Dataset::Qa(parse_squad_json(&bytes).map_err(in_file)?.examples),
        TaskKind::Ner => Dataset::Ner(parse_conll_ner(&bytes).map_err(in_file)?.examples),
        TaskKind::Qcls => Dataset::Qcls(parse_qcls_tsv(&bytes).map_err(in_file)?.examples),
        TaskKind::Mlm => Dataset::Corpus(parse_corpus(&r.label(), &bytes).map_err(in_file)?),
    };
    if data.is_empty() {
        return Err(Error::Empty(format!("{} has no examples", path.display())));
    }
    Ok(data)
}

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Seeded shuffle, then the first `min(n, len)` items.
pub fn subsample<T: Clone>(items: &[T], n: usize, seed: u64) -> Vec<T> {
    permutation(items.len(), seed)
        .into_iter()
        .take(n)
        .map(|i| items[i].clone())
        .collect()
}

pub fn subsample_dataset(data: &Dataset, n: usize, seed: u64) -> Dataset {
    let idx: Vec<usize> = permutation(data.len(), seed).into_iter().take(n).collect();
    data.select(&idx)
}

/// `(train, held_out)`. The held-out part is `round(fraction · len)` items,
/// at least one when the fraction is positive and two or more items exist;
/// training keeps at least one item. Both parts keep the original order.
pub fn holdout_split(data: &Dataset, fraction: f64, seed: u64) -> (Dataset, Dataset) {
    let n = data.len();
    let mut k = (fraction * n as f64).round() as usize;
    if fraction > 0.0 && n >= 2 {
        k = k.max(1);
    }
    k = k.min(n.saturating_sub(1));
    let perm = permutation(n, seed);
    let mut held: Vec<usize> = perm[..k].to_vec();
    let mut train: Vec<usize> = perm[k..].to_vec();
    held.sort_unstable();
    train.sort_unstable();
    (data.select(&train), data.select(&held))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datakit::{generate_synthetic_domain, SyntheticDomainSpec};

    #[test]
    fn subsample_boundaries() {
        let v: Vec<u32> = (0..10).collect();
        let mut all = subsample(&v, 50, 1);
        assert_eq!(all.len(), 10);
        all.sort();
        assert_eq!(all, v);
        let big: Vec<u32> = (0..5000).collect();
        let a = subsample(&big, 1000, 7);
        assert_eq!(a.len(), 1000);
        assert_eq!(a, subsample(&big, 1000, 7));
        assert_ne!(a, subsample(&big, 1000, 8));
    }

    #[test]
    fn prefixes_are_nested() {
        let v: Vec<u32> = (0..100).collect();
        assert_eq!(subsample(&v, 10, 3)[..], subsample(&v, 40, 3)[..10]);
    }

    #[test]
    fn holdout_partitions() {
        let docs: Vec<String> = (0..20).map(|i| format!("doc {i}")).collect();
        let d = Dataset::Corpus(TextCorpus::new("c", docs).unwrap());
        let (train, held) = holdout_split(&d, 0.1, 4);
        assert_eq!((train.len(), held.len()), (18, 2));
        let mut all = train.texts();
        all.extend(held.texts());
        all.sort();
        let mut orig = d.texts();
        orig.sort();
        assert_eq!(all, orig);
        let (t, h) = holdout_split(&d, 0.0, 4);
        assert_eq!((t.len(), h.len()), (20, 0));
    }

    #[test]
    fn loads_bundle_members_and_rejects_wrong_format() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticDomainSpec {
            n_train_ner: 20,
            n_train_qa: 20,
            n_dev_qa: 10,
            n_qcls: 10,
            ..Default::default()
        };
        generate_synthetic_domain(&spec).unwrap().write_to(dir.path()).unwrap();
        let ner = DatasetRef::member(dir.path(), "ner");
        assert_eq!(load_dataset(&ner, Some(TaskKind::Ner)).unwrap().len(), 20);
        assert_eq!(load_dataset(&ner, None).unwrap().task(), TaskKind::Ner);
        assert!(load_dataset(&ner, Some(TaskKind::Qa)).is_err());
        assert!(load_dataset(&DatasetRef::member(dir.path(), "nope"), None).is_err());
        assert!(load_dataset(&DatasetRef::Path(dir.path().join("missing.json")), None).is_err());
    }
}
