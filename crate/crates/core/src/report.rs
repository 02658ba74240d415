//! Result tables: building them from run records, marking the best cell per
//! column, and rendering Markdown, CSV and JSON.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::pipeline::{canonical_methods, grid_coordinates, RunRecord};
use crate::{Error, Result};

pub const MISSING: &str = "—";
pub const CSV_DECIMALS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Rows are regimens, columns are domains.
    Grid,
    /// Rows are sweep cells, columns are evaluation targets.
    Sweep,
}

impl Layout {
    pub fn default_decimals(self) -> usize {
        match self {
            Layout::Grid => 1,
            Layout::Sweep => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub cells: Vec<Option<f64>>,
    /// `failed` for runs that did not complete.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
    /// Reference rows (upper bounds) are shown but never marked best.
    #[serde(default)]
    pub reference: bool,
    /// Number of runs averaged into each cell when above one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub title: String,
    pub row_header: String,
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    /// Row index of the largest value in each column, skipping reference
    /// rows. Ties go to the earliest row.
    pub fn best_per_column(&self) -> Vec<Option<usize>> {
        (0..self.columns.len())
            .map(|c| {
                let mut best: Option<(usize, f64)> = None;
                for (r, row) in self.rows.iter().enumerate().filter(|(_, r)| !r.reference) {
                    if let Some(v) = row.cells[c] {
                        if best.is_none_or(|(_, b)| v > b) {
                            best = Some((r, v));
                        }
                    }
                }
                best.map(|(r, _)| r)
            })
            .collect()
    }

    pub fn cell(&self, row: &str, column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|x| x == column)?;
        self.rows.iter().find(|r| r.label == row)?.cells[c]
    }

    fn has_status(&self) -> bool {
        self.rows.iter().any(|r| r.status.is_some())
    }

    pub fn to_markdown(&self, decimals: usize) -> String {
        let best = self.best_per_column();
        let status = self.has_status();
        let mut out = format!("**{}**\n\n| {} |", self.title, self.row_header);
        for c in &self.columns {
            out.push_str(&format!(" {c} |"));
        }
        if status {
            out.push_str(" Status |");
        }
        out.push_str("\n|---|");
        for _ in &self.columns {
            out.push_str("---:|");
        }
        if status {
            out.push_str("---|");
        }
        out.push('\n');
        for (r, row) in self.rows.iter().enumerate() {
            out.push_str(&format!("| {} |", row.label));
            for (c, v) in row.cells.iter().enumerate() {
                let text = match v {
                    None => MISSING.to_string(),
                    Some(v) if best[c] == Some(r) => format!("**{v:.decimals$}**"),
                    Some(v) => format!("{v:.decimals$}"),
                };
                out.push_str(&format!(" {text} |"));
            }
            if status {
                out.push_str(&format!(" {} |", row.status.as_deref().unwrap_or("completed")));
            }
            out.push('\n');
        }
        out
    }

    /// Values at four decimals; missing cells are empty.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![self.row_header.clone()];
        header.extend(self.columns.iter().cloned());
        header.push("status".into());
        w.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            let mut rec = vec![row.label.clone()];
            rec.extend(row.cells.iter().map(|v| v.map(|v| format!("{v:.CSV_DECIMALS$}")).unwrap_or_default()));
            rec.push(row.status.clone().unwrap_or_else(|| "completed".into()));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            #[serde(flatten)]
            table: &'a ReportTable,
            best: BTreeMap<&'a str, Option<&'a str>>,
        }
        let best = self
            .best_per_column()
            .into_iter()
            .zip(&self.columns)
            .map(|(r, c)| (c.as_str(), r.map(|r| self.rows[r].label.as_str())))
            .collect();
        serde_json::to_string_pretty(&Out { table: self, best }).expect("serializes")
    }
}

/// Reads back a table written by [`ReportTable::to_csv`].
pub fn parse_csv(text: &str) -> Result<ReportTable> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .iter()
        .map(String::from)
        .collect();
    if header.len() < 2 || header.last().map(String::as_str) != Some("status") {
        return Err(Error::Parse {
            line: 1,
            message: "expected a label column, value columns and a status column".into(),
        });
    }
    let columns = header[1..header.len() - 1].to_vec();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        let cells = (1..=columns.len())
            .map(|c| match &rec[c] {
                "" => Ok(None),
                s => s.parse::<f64>().map(Some).map_err(|e| Error::Parse {
                    line,
                    message: format!("{s:?}: {e}"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        let status = &rec[columns.len() + 1];
        rows.push(ReportRow {
            label: rec[0].to_string(),
            cells,
            status: (status != "completed").then(|| status.to_string()),
            reference: false,
            runs: None,
        });
    }
    Ok(ReportTable {
        title: String::new(),
        row_header: header[0].clone(),
        columns,
        rows,
    })
}

/// `(row, column)` of a record under `layout`.
fn coordinates(record: &RunRecord, layout: Layout) -> (String, Option<String>) {
    match layout {
        Layout::Grid => match grid_coordinates(&record.name) {
            Some((method, domain)) => (method.to_string(), Some(domain.to_string())),
            None => (record.name.clone(), None),
        },
        Layout::Sweep => {
            let label = record
                .name
                .rsplit_once(" [")
                .and_then(|(_, l)| l.strip_suffix(']'))
                .unwrap_or(&record.name);
            (label.to_string(), None)
        }
    }
}

/// Builds a table from run records. Grid runs named `<method>/<domain>`
/// give one cell each; other runs give one column per evaluation target.
/// Several completed runs on one cell are averaged. Failed runs keep their
/// row with missing cells.
pub fn table_from_records(records: &[RunRecord], layout: Layout) -> Result<ReportTable> {
    if records.is_empty() {
        return Err(Error::Empty("results store has no runs".into()));
    }
    let mut cells: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    let mut row_order: Vec<String> = Vec::new();
    let mut columns: BTreeSet<String> = BTreeSet::new();
    let mut failed: BTreeSet<String> = BTreeSet::new();
    for rec in records {
        let (row, column) = coordinates(rec, layout);
        if !row_order.contains(&row) {
            row_order.push(row.clone());
        }
        let targets: Vec<(String, f64)> = match &column {
            Some(domain) => vec![(domain.clone(), rec.headline_f1().unwrap_or(f64::NAN))],
            None => rec.metrics.iter().map(|(k, m)| (k.clone(), m.primary())).collect(),
        };
        if !rec.is_completed() {
            failed.insert(row.clone());
            if let Some(c) = column {
                columns.insert(c);
            } else {
                columns.extend(rec.regimen.eval_targets.iter().map(|t| t.label()));
            }
            continue;
        }
        for (c, v) in targets {
            columns.insert(c.clone());
            cells.entry((row.clone(), c)).or_default().push(v);
        }
    }
    if layout == Layout::Grid {
        let canon: Vec<String> = canonical_methods().into_iter().map(|m| m.name).collect();
        row_order.sort_by_key(|r| (canon.iter().position(|c| c == r).unwrap_or(usize::MAX), r.clone()));
    }
    let columns: Vec<String> = columns.into_iter().collect();
    let rows = row_order
        .into_iter()
        .map(|label| {
            let vals: Vec<Option<&Vec<f64>>> = columns.iter().map(|c| cells.get(&(label.clone(), c.clone()))).collect();
            let runs = vals.iter().flatten().map(|v| v.len()).max().filter(|&n| n > 1);
            ReportRow {
                cells: vals
                    .into_iter()
                    .map(|v| v.map(|v| v.iter().sum::<f64>() / v.len() as f64))
                    .collect(),
                status: failed.contains(&label).then(|| "failed".to_string()),
                reference: false,
                runs,
                label,
            }
        })
        .collect();
    Ok(ReportTable {
        title: match layout {
            Layout::Grid => "Zero-shot QA F1 by regimen and domain".into(),
            Layout::Sweep => "Zero-shot QA F1 by sweep cell".into(),
        },
        row_header: match layout {
            Layout::Grid => "Regimen".into(),
            Layout::Sweep => "Cell".into(),
        },
        columns,
        rows,
    })
}

fn fixture(title: &str, row_header: &str, columns: &[&str], rows: &[(&str, &[f64], bool)]) -> ReportTable {
    ReportTable {
        title: format!("{title} (published reference results, transcribed; not produced by this tool)"),
        row_header: row_header.into(),
        columns: columns.iter().map(|c| c.to_string()).collect(),
        rows: rows
            .iter()
            .map(|(label, vals, reference)| ReportTable::fixture_row(label, vals, *reference))
            .collect(),
    }
}

impl ReportTable {
    fn fixture_row(label: &str, vals: &[f64], reference: bool) -> ReportRow {
        ReportRow {
            label: label.into(),
            cells: vals.iter().map(|&v| Some(v)).collect(),
            status: None,
            reference,
            runs: None,
        }
    }
}

/// Regimen × domain F1 of the full-scale experiments.
pub fn reference_grid() -> ReportTable {
    fixture(
        "Zero-shot QA F1 by regimen and domain",
        "Retraining procedure",
        &["MoviesQA", "NewsQA", "BioQA", "CovidQA"],
        &[
            ("SQuAD1.1", &[67.1, 57.0, 58.0, 42.0], false),
            ("DAPT + SQuAD1.1", &[60.7, 54.4, 57.8, 47.2], false),
            ("T+DAPT", &[68.0, 56.0, 58.9, 42.7], false),
            ("DAPT + T+DAPT", &[66.4, 54.2, 55.1, 43.1], false),
        ],
    )
}

/// Auxiliary-task ladder on CovidQA; the first row is an upper bound.
pub fn reference_aux_ladder() -> ReportTable {
    fixture(
        "Zero-shot CovidQA F1 by intermediate regimen",
        "Adaptation procedure",
        &["CovidQA"],
        &[
            ("CovidQA (upper bound)", &[52.1416], true),
            ("SQuAD only", &[42.0485], false),
            ("DAPT", &[47.2190], false),
            ("CovidNER", &[42.6584], false),
            ("CovidQCLS", &[42.6300], false),
            ("DAPT+Covid-NER", &[43.0710], false),
            ("DAPT+Covid-QCLS", &[45.8314], false),
            ("DAPT+CovidNER+CovidQCLS", &[43.0854], false),
        ],
    )
}

/// NewsQA F1 by generic-QA fine-tuning budget.
pub fn reference_budget_sweep() -> ReportTable {
    fixture(
        "Zero-shot NewsQA F1 by QA fine-tuning budget",
        "Model",
        &["NewsQA"],
        &[
            ("RoBERTa-Base: 1 Epoch, 1000 Samples", &[19.9953], false),
            ("RoBERTa-Base: 2 Epochs, 1000 Samples", &[35.2666], false),
            ("RoBERTa-Base: 2 Epochs, 5000 Samples", &[47.0090], false),
            ("RoBERTa-Base: 2 Epochs, All Samples", &[56.9803], false),
            ("RoBERTa-Base: 2 Epochs, All Samples (Head)", &[5.5891], false),
            ("NewsRoBERTa (DAPT): 1 Epoch, 1000 Samples", &[17.9025], false),
            ("NewsRoBERTa (DAPT): 2 Epochs, 1000 Samples", &[28.4453], false),
            ("NewsRoBERTa (DAPT): 2 Epochs, 5000 Samples", &[44.1206], false),
        ],
    )
}

/// Converts a table into the `(domain, regimen) → score` form used by
/// [`crate::eval::best_regimen`], skipping reference rows.
pub fn results_table(table: &ReportTable) -> crate::eval::ResultsTable {
    let mut out = crate::eval::ResultsTable::default();
    for row in table.rows.iter().filter(|r| !r.reference) {
        for (c, v) in table.columns.iter().zip(&row.cells) {
            if let Some(v) = v {
                out.insert(c, &row.label, *v);
            }
        }
    }
    out
}
