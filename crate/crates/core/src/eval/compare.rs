use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `(domain, regimen) → score` over a grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    pub cells: BTreeMap<(String, String), f64>,
}

impl ResultsTable {
    pub fn insert(&mut self, domain: &str, regimen: &str, score: f64) {
        self.cells.insert((domain.to_string(), regimen.to_string()), score);
    }

    pub fn get(&self, domain: &str, regimen: &str) -> Option<f64> {
        self.cells.get(&(domain.to_string(), regimen.to_string())).copied()
    }

    pub fn domains(&self) -> BTreeSet<&str> {
        self.cells.keys().map(|(d, _)| d.as_str()).collect()
    }

    pub fn regimens(&self) -> BTreeSet<&str> {
        self.cells.keys().map(|(_, r)| r.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Best {
    pub regimen: String,
    pub score: f64,
    /// Another regimen reached the same score.
    pub tied: bool,
}

/// Highest-scoring regimen per domain; ties go to the lexicographically
/// first regimen name. Every domain must have every regimen.
pub fn best_regimen(table: &ResultsTable) -> Result<BTreeMap<String, Best>> {
    let regimens = table.regimens();
    let mut out = BTreeMap::new();
    for domain in table.domains() {
        let mut best: Option<Best> = None;
        for &regimen in &regimens {
            let score = table
                .get(domain, regimen)
                .ok_or_else(|| Error::Missing(format!("results cell ({domain}, {regimen})")))?;
            match &mut best {
                Some(b) if score == b.score => b.tied = true,
                Some(b) if score < b.score => {}
                _ => {
                    best = Some(Best {
                        regimen: regimen.to_string(),
                        score,
                        tied: false,
                    })
                }
            }
        }
        if let Some(b) = best {
            out.insert(domain.to_string(), b);
        }
    }
    Ok(out)
}
