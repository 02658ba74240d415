//! Run-config files. Parsed strictly: unknown keys are rejected with the
//! JSON path of the offending field.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use stagewise::datakit::synth::BUNDLE_FILES;
use stagewise::model::EncoderConfig;
use stagewise::pipeline::{
    canonical_methods, enumerate_grid, AblationSpec, DatasetRef, Domain, GridOptions, MethodTemplate, RegimenSpec,
};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    /// Results directory; `--out` takes precedence.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Base seed; `--seed` takes precedence.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub workers: Option<usize>,
    /// Replaces the encoder settings of every regimen in the file.
    #[serde(default)]
    pub encoder: Option<EncoderConfig>,
    #[serde(default)]
    pub forgetting_probe: Option<bool>,
    #[serde(default)]
    pub regimen: Option<RegimenSpec>,
    #[serde(default)]
    pub grid: Option<GridBlock>,
    #[serde(default)]
    pub ablation: Option<AblationSpec>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub domains: Vec<DomainEntry>,
    /// Defaults to the four canonical methods.
    #[serde(default)]
    pub methods: Option<Vec<MethodTemplate>>,
    #[serde(default)]
    pub vocab_max_size: Option<usize>,
}

/// A domain given as a synthetic bundle directory, explicit role bindings,
/// or both (explicit bindings win).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainEntry {
    pub name: String,
    #[serde(default)]
    pub bundle: Option<PathBuf>,
    #[serde(default)]
    pub datasets: BTreeMap<String, DatasetRef>,
}

/// Reads JSON from `path`, naming the failing field on error.
pub fn read_strict<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_strict(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn parse_strict<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, String> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            inner.to_string()
        } else {
            format!("at `{path}`: {inner}")
        }
    })
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let mut cfg: Self = read_strict(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    /// Makes every relative path relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let Some(out) = &mut self.out {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        if let Some(r) = &mut self.regimen {
            r.resolve_paths(base);
        }
        if let Some(g) = &mut self.grid {
            for d in &mut g.domains {
                if let Some(b) = &mut d.bundle {
                    if b.is_relative() {
                        *b = base.join(&*b);
                    }
                }
                d.datasets.values_mut().for_each(|r| r.resolve(base));
            }
        }
        if let Some(a) = &mut self.ablation {
            a.base.resolve_paths(base);
            let aux = a.sweep.aux_sets.iter_mut().flatten().flatten();
            let extra = a.extra_cells.iter_mut().filter_map(|c| c.aux.as_mut()).flatten();
            aux.chain(extra).for_each(|s| s.dataset.resolve(base));
        }
    }

    fn apply_overrides(&self, spec: &mut RegimenSpec, seed: Option<u64>) {
        if let Some(s) = seed.or(self.seed) {
            spec.seed = s;
        }
        if let Some(e) = &self.encoder {
            spec.encoder = e.clone();
        }
    }

    /// Regimens for `run`: the single regimen, or every grid cell.
    pub fn run_specs(&self, seed: Option<u64>) -> Result<(Vec<RegimenSpec>, bool), CliError> {
        match (&self.regimen, &self.grid) {
            (Some(_), Some(_)) => Err(CliError::Config("config has both `regimen` and `grid`; give one".into())),
            (None, None) => Err(CliError::Config("config needs a `regimen` or a `grid` block".into())),
            (Some(r), None) => {
                let mut spec = r.clone();
                self.apply_overrides(&mut spec, seed);
                Ok((vec![spec], false))
            }
            (None, Some(g)) => {
                let domains = g.domains.iter().map(DomainEntry::domain).collect::<Vec<_>>();
                let methods = g.methods.clone().unwrap_or_else(canonical_methods);
                let defaults = GridOptions::default();
                let opts = GridOptions {
                    seed: seed.or(self.seed).unwrap_or(defaults.seed),
                    encoder: self.encoder.clone().unwrap_or(defaults.encoder),
                    vocab_max_size: g.vocab_max_size.unwrap_or(defaults.vocab_max_size),
                };
                let specs = enumerate_grid(&domains, &methods, &opts).map_err(|e| CliError::Config(e.to_string()))?;
                Ok((specs, true))
            }
        }
    }

    pub fn ablation_spec(&self, seed: Option<u64>) -> Result<AblationSpec, CliError> {
        let mut a = self
            .ablation
            .clone()
            .ok_or_else(|| CliError::Config("config needs an `ablation` block".into()))?;
        self.apply_overrides(&mut a.base, seed);
        Ok(a)
    }
}

impl DomainEntry {
    pub fn domain(&self) -> Domain {
        let mut datasets: BTreeMap<String, DatasetRef> = match &self.bundle {
            Some(b) => BUNDLE_FILES
                .iter()
                .map(|(role, _)| (role.to_string(), DatasetRef::member(b, role)))
                .collect(),
            None => BTreeMap::new(),
        };
        datasets.extend(self.datasets.clone());
        Domain {
            name: self.name.clone(),
            datasets,
        }
    }
}
