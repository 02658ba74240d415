use std::collections::BTreeSet;
use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use super::spec::{RegimenSpec, StageSpec, TaskKind};
use crate::model::FreezePolicy;
use crate::{Error, Result};

/// Training-sample budget: a count, or `"all"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Budget {
    Count(usize),
    All,
}

impl Budget {
    pub fn max_samples(self) -> Option<usize> {
        match self {
            Budget::Count(n) => Some(n),
            Budget::All => None,
        }
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Count(n) => write!(f, "{n}"),
            Budget::All => f.write_str("All"),
        }
    }
}

impl Serialize for Budget {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Budget::Count(n) => s.serialize_u64(*n as u64),
            Budget::All => s.serialize_str("all"),
        }
    }
}

impl<'de> Deserialize<'de> for Budget {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Budget;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a positive sample count or \"all\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Budget, E> {
                if v == 0 {
                    return Err(E::custom("sample budget must be at least 1"));
                }
                Ok(Budget::Count(v as usize))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Budget, E> {
                if v.eq_ignore_ascii_case("all") {
                    Ok(Budget::All)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Sweep axes. Each present axis must be non-empty; absent axes keep the
/// base regimen's setting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<Budget>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freeze: Option<Vec<FreezePolicy>>,
    /// Task orders; each must be a permutation of the base stages' tasks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orders: Option<Vec<Vec<TaskKind>>>,
    /// Auxiliary stages placed before the target stage, replacing the base
    /// regimen's other stages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux_sets: Option<Vec<Vec<StageSpec>>>,
}

/// One explicit cell, added after the product of the axes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Budget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freeze: Option<FreezePolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<TaskKind>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux: Option<Vec<StageSpec>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationSpec {
    pub base: RegimenSpec,
    #[serde(default)]
    pub sweep: SweepAxes,
    /// 1-based stage that epochs, samples and freeze apply to. Defaults to
    /// the last QA stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_stage: Option<usize>,
    #[serde(default)]
    pub extra_cells: Vec<CellSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub label: String,
    pub cell: CellSpec,
    pub regimen: RegimenSpec,
}

fn axis<T: Clone>(name: &str, values: &Option<Vec<T>>) -> Result<Vec<Option<T>>> {
    match values {
        None => Ok(vec![None]),
        Some(v) if v.is_empty() => Err(Error::InvalidSpec(format!("sweep axis {name} is empty"))),
        Some(v) => Ok(v.iter().cloned().map(Some).collect()),
    }
}

fn task_list(tasks: impl IntoIterator<Item = TaskKind>) -> String {
    tasks.into_iter().map(|t| t.name()).collect::<Vec<_>>().join("+")
}

/// Human-readable cell label, e.g. `2 Epochs, All Samples (Head)`.
pub fn cell_label(cell: &CellSpec) -> String {
    let mut parts = Vec::new();
    match (cell.epochs, cell.samples) {
        (None, None) => {}
        (e, s) => {
            let mut p = Vec::new();
            if let Some(e) = e {
                p.push(format!("{e} Epoch{}", if e == 1 { "" } else { "s" }));
            }
            if let Some(s) = s {
                p.push(format!("{s} Samples"));
            }
            parts.push(p.join(", "));
        }
    }
    let mut label = parts.join("");
    match cell.freeze {
        Some(FreezePolicy::EncoderFrozenHeadOnly) => label.push_str(" (Head)"),
        Some(FreezePolicy::BottomKLayers { k }) => label.push_str(&format!(" (Bottom {k} Frozen)")),
        _ => {}
    }
    let mut extra = Vec::new();
    if let Some(o) = &cell.order {
        extra.push(format!("Order {}", task_list(o.iter().copied())));
    }
    if let Some(a) = &cell.aux {
        extra.push(if a.is_empty() {
            "No Aux".to_string()
        } else {
            format!("Aux {}", task_list(a.iter().map(|s| s.task)))
        });
    }
    let label = label.trim().to_string();
    let mut all: Vec<String> = Vec::new();
    if !label.is_empty() {
        all.push(label);
    }
    all.extend(extra);
    if all.is_empty() {
        "Base".into()
    } else {
        all.join("; ")
    }
}

fn reorder(stages: &[StageSpec], order: &[TaskKind]) -> Result<Vec<StageSpec>> {
    let mut pool: Vec<Option<&StageSpec>> = stages.iter().map(Some).collect();
    let mut out = Vec::with_capacity(order.len());
    for t in order {
        let slot = pool
            .iter_mut()
            .find(|s| s.is_some_and(|s| s.task == *t))
            .ok_or_else(|| Error::InvalidSpec(format!("order {} is not a permutation of the base stages", task_list(order.iter().copied()))))?;
        out.push(slot.take().unwrap().clone());
    }
    if pool.iter().any(Option::is_some) {
        return Err(Error::InvalidSpec(format!(
            "order {} is not a permutation of the base stages",
            task_list(order.iter().copied())
        )));
    }
    Ok(out)
}

fn apply(spec: &AblationSpec, cell: &CellSpec) -> Result<RegimenSpec> {
    let base = &spec.base;
    let default_target = || base.stages.iter().rposition(|s| s.task == TaskKind::Qa);
    let target = match spec.target_stage {
        Some(k) if k >= 1 && k <= base.stages.len() => k - 1,
        Some(k) => return Err(Error::InvalidSpec(format!("target_stage {k} outside the base regimen"))),
        None => default_target().ok_or_else(|| Error::InvalidSpec("base regimen has no QA stage".into()))?,
    };
    let mut target_stage = base.stages[target].clone();
    if let Some(e) = cell.epochs {
        target_stage.epochs = e;
    }
    if let Some(s) = cell.samples {
        target_stage.max_samples = s.max_samples();
    }
    if let Some(f) = cell.freeze {
        target_stage.freeze = f;
    }
    let mut stages = base.stages.clone();
    stages[target] = target_stage.clone();
    if let Some(order) = &cell.order {
        stages = reorder(&stages, order)?;
    }
    if let Some(aux) = &cell.aux {
        stages = aux.clone();
        stages.push(target_stage);
    }
    let mut out = base.clone();
    out.name = format!("{} [{}]", base.name, cell_label(cell));
    out.stages = stages;
    if out.vocab_sources.is_empty() {
        // keep one vocabulary across cells even when aux sets differ
        let mut sources = base.effective_vocab_sources();
        for s in spec.sweep.aux_sets.iter().flatten().flatten().chain(spec.extra_cells.iter().flat_map(|c| c.aux.iter().flatten())) {
            if !sources.contains(&s.dataset) {
                sources.push(s.dataset.clone());
            }
        }
        out.vocab_sources = sources;
    }
    Ok(out)
}

/// Product of the sweep axes followed by the extra cells, one regimen per
/// cell. Cells share the base seed so only the swept factor changes.
pub fn expand_sweep(spec: &AblationSpec) -> Result<Vec<SweepCell>> {
    let epochs = axis("epochs", &spec.sweep.epochs)?;
    let samples = axis("samples", &spec.sweep.samples)?;
    let freeze = axis("freeze", &spec.sweep.freeze)?;
    let orders = axis("orders", &spec.sweep.orders)?;
    let aux = axis("aux_sets", &spec.sweep.aux_sets)?;
    let mut cells = Vec::new();
    for e in &epochs {
        for s in &samples {
            for f in &freeze {
                for o in &orders {
                    for a in &aux {
                        cells.push(CellSpec {
                            epochs: *e,
                            samples: *s,
                            freeze: *f,
                            order: o.clone(),
                            aux: a.clone(),
                        });
                    }
                }
            }
        }
    }
    cells.extend(spec.extra_cells.iter().cloned());
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(cells.len());
    for cell in cells {
        let label = cell_label(&cell);
        if !seen.insert(label.clone()) {
            return Err(Error::InvalidSpec(format!("duplicate sweep cell {label:?}")));
        }
        let regimen = apply(spec, &cell)?;
        out.push(SweepCell { label, cell, regimen });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::spec::DatasetRef;

    fn base() -> RegimenSpec {
        let d = |r: &str| DatasetRef::member("b", r);
        RegimenSpec::new(
            "T+DAPT",
            vec![StageSpec::new(TaskKind::Ner, d("ner")), StageSpec::new(TaskKind::Qa, d("qa_train"))],
            vec![d("qa_dev")],
        )
    }

    #[test]
    fn budget_table_shape() {
        let spec: AblationSpec = serde_json::from_value(serde_json::json!({
            "base": base(),
            "sweep": {"epochs": [1, 2], "samples": [1000, 5000, "all"]},
            "extra_cells": [{"epochs": 2, "samples": "all", "freeze": {"kind": "encoder_frozen_head_only"}}]
        }))
        .unwrap();
        let cells = expand_sweep(&spec).unwrap();
        let labels: Vec<&str> = cells.iter().map(|c| c.label.as_str()).collect();
        assert_eq!(
            labels,
            [
                "1 Epoch, 1000 Samples",
                "1 Epoch, 5000 Samples",
                "1 Epoch, All Samples",
                "2 Epochs, 1000 Samples",
                "2 Epochs, 5000 Samples",
                "2 Epochs, All Samples",
                "2 Epochs, All Samples (Head)"
            ]
        );
        let head = &cells[6].regimen.stages[1];
        assert_eq!((head.epochs, head.max_samples), (2, None));
        assert!(head.freeze.freezes_encoder());
        assert_eq!(cells[0].regimen.stages[1].max_samples, Some(1000));
        assert_eq!(cells[0].regimen.stages[0], base().stages[0]);
        assert!(cells.iter().all(|c| c.regimen.seed == 0));
    }

    #[test]
    fn orders_and_aux_sets() {
        let spec = AblationSpec {
            base: base(),
            sweep: SweepAxes {
                orders: Some(vec![vec![TaskKind::Ner, TaskKind::Qa], vec![TaskKind::Qa, TaskKind::Ner]]),
                ..Default::default()
            },
            target_stage: None,
            extra_cells: vec![],
        };
        let cells = expand_sweep(&spec).unwrap();
        assert_eq!(cells[1].regimen.task_order(), vec![TaskKind::Qa, TaskKind::Ner]);
        let aux = AblationSpec {
            base: base(),
            sweep: SweepAxes {
                aux_sets: Some(vec![vec![], vec![StageSpec::new(TaskKind::Mlm, DatasetRef::member("b", "domain_corpus"))]]),
                ..Default::default()
            },
            target_stage: None,
            extra_cells: vec![],
        };
        let cells = expand_sweep(&aux).unwrap();
        assert_eq!(cells[0].regimen.task_order(), vec![TaskKind::Qa]);
        assert_eq!(cells[1].regimen.task_order(), vec![TaskKind::Mlm, TaskKind::Qa]);
        assert_eq!(cells[0].regimen.vocab_sources, cells[1].regimen.vocab_sources);
    }

    #[test]
    fn empty_axis_and_bad_order_rejected() {
        let mut spec = AblationSpec {
            base: base(),
            sweep: SweepAxes {
                epochs: Some(vec![]),
                ..Default::default()
            },
            target_stage: None,
            extra_cells: vec![],
        };
        assert!(expand_sweep(&spec).is_err());
        spec.sweep = SweepAxes {
            orders: Some(vec![vec![TaskKind::Qa]]),
            ..Default::default()
        };
        assert!(expand_sweep(&spec).is_err());
        assert!(serde_json::from_str::<Budget>("0").is_err());
        assert_eq!(serde_json::from_str::<Budget>("\"all\"").unwrap(), Budget::All);
    }
}
