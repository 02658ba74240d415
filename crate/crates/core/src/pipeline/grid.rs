use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::spec::{DatasetRef, RegimenSpec, StageSpec, TaskKind};
use super::stable_hash;
use crate::datakit::synth::BUNDLE_FILES;
use crate::model::EncoderConfig;
use crate::{Error, Result};

/// A domain binds dataset roles (`ner`, `qa_train`, `qa_dev`, ...) to files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub name: String,
    pub datasets: BTreeMap<String, DatasetRef>,
}

impl Domain {
    /// All members of a synthetic bundle directory.
    pub fn from_bundle(name: &str, bundle: &Path) -> Self {
        Self {
            name: name.to_string(),
            datasets: BUNDLE_FILES
                .iter()
                .map(|(role, _)| (role.to_string(), DatasetRef::member(bundle, role)))
                .collect(),
        }
    }

    fn get(&self, role: &str) -> Result<DatasetRef> {
        self.datasets
            .get(role)
            .cloned()
            .ok_or_else(|| Error::Missing(format!("domain {} has no dataset for role {role:?}", self.name)))
    }
}

fn default_eval_roles() -> Vec<String> {
    vec!["qa_dev".into()]
}

/// A regimen with dataset roles in place of files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodTemplate {
    pub name: String,
    pub stages: Vec<StageSpec<String>>,
    #[serde(default = "default_eval_roles")]
    pub eval_roles: Vec<String>,
}

impl MethodTemplate {
    pub fn new(name: &str, stages: &[(TaskKind, &str)]) -> Self {
        Self {
            name: name.into(),
            stages: stages.iter().map(|(t, r)| StageSpec::new(*t, r.to_string())).collect(),
            eval_roles: default_eval_roles(),
        }
    }
}

/// Generic QA only, domain MLM then QA, domain NER then QA, and all three.
pub fn canonical_methods() -> Vec<MethodTemplate> {
    use TaskKind::*;
    vec![
        MethodTemplate::new("baseline", &[(Qa, "qa_train")]),
        MethodTemplate::new("DAPT", &[(Mlm, "domain_corpus"), (Qa, "qa_train")]),
        MethodTemplate::new("T+DAPT", &[(Ner, "ner"), (Qa, "qa_train")]),
        MethodTemplate::new("DAPT+T+DAPT", &[(Mlm, "domain_corpus"), (Ner, "ner"), (Qa, "qa_train")]),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridOptions {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default = "default_vocab_max")]
    pub vocab_max_size: usize,
}

fn default_vocab_max() -> usize {
    8000
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            encoder: EncoderConfig::default(),
            vocab_max_size: default_vocab_max(),
        }
    }
}

/// One regimen per (domain, method), named `<method>/<domain>`. Seeds come
/// from the base seed and a stable hash of the name. The vocabulary of each
/// run covers every dataset of its domain, so methods share it.
pub fn enumerate_grid(domains: &[Domain], methods: &[MethodTemplate], opts: &GridOptions) -> Result<Vec<RegimenSpec>> {
    if domains.is_empty() || methods.is_empty() {
        return Err(Error::InvalidSpec("grid needs at least one domain and one method".into()));
    }
    let mut names = BTreeSet::new();
    let mut out = Vec::with_capacity(domains.len() * methods.len());
    for method in methods {
        for domain in domains {
            let name = format!("{}/{}", method.name, domain.name);
            if !names.insert(name.clone()) {
                return Err(Error::InvalidSpec(format!("duplicate regimen name {name:?}")));
            }
            let stages = method
                .stages
                .iter()
                .map(|s| Ok(s.with_dataset(domain.get(&s.dataset)?)))
                .collect::<Result<Vec<_>>>()?;
            let eval_targets = method.eval_roles.iter().map(|r| domain.get(r)).collect::<Result<Vec<_>>>()?;
            out.push(RegimenSpec {
                seed: opts.seed ^ stable_hash(name.as_bytes()),
                vocab_sources: domain.datasets.values().cloned().collect(),
                vocab_max_size: opts.vocab_max_size,
                encoder: opts.encoder.clone(),
                name,
                stages,
                eval_targets,
            });
        }
    }
    Ok(out)
}

/// `(method, domain)` of a grid regimen name.
pub fn grid_coordinates(name: &str) -> Option<(&str, &str)> {
    name.rsplit_once('/')
}
