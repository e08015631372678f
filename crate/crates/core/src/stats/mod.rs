//! Residual aggregation and nested-model F-tests.
//!
//! Each `(subject, experiment)` fit contributes one RSS value per model. The
//! tests compare a 3-parameter model (M1 or M2) against M3, which nests both.
//! Every complex sample carries two independent real residuals, so one
//! experiment of `n` samples leaves `2n - 4` degrees of freedom for M3.

pub mod special;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelKind;

pub use special::{beta_inc, f_cdf, f_critical, f_sf, ln_gamma};

/// False-rejection probability used for every reported test.
pub const SIGNIFICANCE: f64 = 0.05;

/// RSS per `(subject, experiment, model)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RssTable {
    /// Complex samples per experiment.
    pub n: usize,
    cells: BTreeMap<String, f64>,
    #[serde(skip)]
    index: BTreeMap<(String, u32, ModelKind), f64>,
}

fn cell_key(subject: &str, exp: u32, kind: ModelKind) -> String {
    format!("{subject}/{exp}/{kind}")
}

impl RssTable {
    pub fn new(n: usize) -> Self {
        RssTable { n, cells: BTreeMap::new(), index: BTreeMap::new() }
    }

    pub fn insert(&mut self, subject: &str, exp: u32, kind: ModelKind, rss: f64) {
        self.cells.insert(cell_key(subject, exp, kind), rss);
        self.index.insert((subject.to_string(), exp, kind), rss);
    }

    pub fn get(&self, subject: &str, exp: u32, kind: ModelKind) -> Option<f64> {
        self.index.get(&(subject.to_string(), exp, kind)).copied()
    }

    pub fn subjects(&self) -> Vec<String> {
        self.index.keys().map(|(s, _, _)| s.clone()).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn experiments(&self) -> Vec<u32> {
        self.index.keys().map(|(_, e, _)| *e).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Rebuilds the lookup index after deserialization.
    pub fn reindex(&mut self) -> Result<()> {
        self.index.clear();
        for (key, &rss) in &self.cells {
            let mut parts = key.rsplitn(3, '/');
            let kind = match parts.next() {
                Some("M1") => ModelKind::M1,
                Some("M2") => ModelKind::M2,
                Some("M3") => ModelKind::M3,
                _ => return Err(Error::config(format!("bad RSS cell key {key:?}"))),
            };
            let exp = parts
                .next()
                .and_then(|e| e.parse().ok())
                .ok_or_else(|| Error::config(format!("bad RSS cell key {key:?}")))?;
            let subject = parts.next().ok_or_else(|| Error::config(format!("bad RSS cell key {key:?}")))?;
            self.index.insert((subject.to_string(), exp, kind), rss);
        }
        Ok(())
    }

    /// Every subject must have every experiment for all three fitted models.
    pub fn check_complete(&self) -> Result<()> {
        let subjects = self.subjects();
        let exps = self.experiments();
        if subjects.is_empty() {
            return Err(Error::IncompleteGrid("table is empty".into()));
        }
        for s in &subjects {
            for &e in &exps {
                for kind in ModelKind::FITTED {
                    if self.get(s, e, kind).is_none() {
                        return Err(Error::IncompleteGrid(format!("subject {s}, experiment {e}, model {kind}")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scope", content = "id", rename_all = "snake_case")]
pub enum Scope {
    /// One subject, summed over experiments.
    Subject(String),
    /// One experiment, summed over subjects.
    Experiment(u32),
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "M1-vs-M3")]
    M1VsM3,
    #[serde(rename = "M2-vs-M3")]
    M2VsM3,
}

impl Comparison {
    pub const BOTH: [Comparison; 2] = [Comparison::M1VsM3, Comparison::M2VsM3];

    pub fn reduced(&self) -> ModelKind {
        match self {
            Comparison::M1VsM3 => ModelKind::M1,
            Comparison::M2VsM3 => ModelKind::M2,
        }
    }
}

/// Sum of RSS over the cells selected by `scope`.
pub fn aggregate_rss(table: &RssTable, scope: &Scope, kind: ModelKind) -> Result<f64> {
    table.check_complete()?;
    let subjects = table.subjects();
    let exps = table.experiments();
    let (ss, es): (Vec<String>, Vec<u32>) = match scope {
        Scope::Subject(s) => {
            if !subjects.contains(s) {
                return Err(Error::config(format!("unknown subject {s:?}")));
            }
            (vec![s.clone()], exps)
        }
        Scope::Experiment(e) => {
            if !exps.contains(e) {
                return Err(Error::config(format!("unknown experiment {e}")));
            }
            (subjects, vec![*e])
        }
        Scope::All => (subjects, exps),
    };
    let mut total = 0.0;
    for s in &ss {
        for &e in &es {
            total += table
                .get(s, e, kind)
                .ok_or_else(|| Error::IncompleteGrid(format!("subject {s}, experiment {e}, model {kind}")))?;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FTestReport {
    pub scope: Scope,
    pub comparison: Comparison,
    #[serde(rename = "F")]
    pub f: f64,
    pub df: (u32, u32),
    pub rss_reduced: f64,
    pub rss_full: f64,
    #[serde(rename = "F_crit")]
    pub f_crit: f64,
    pub p_value: f64,
    pub significant: bool,
}

/// Degrees of freedom `(units, (2n - 4) units)`, where `units` is the number
/// of experiments pooled into the scope.
pub fn degrees_of_freedom(table: &RssTable, scope: &Scope) -> (u32, u32) {
    let n_sub = table.subjects().len() as u32;
    let n_exp = table.experiments().len() as u32;
    let units = match scope {
        Scope::Subject(_) => n_exp,
        Scope::Experiment(_) => n_sub,
        Scope::All => n_exp * n_sub,
    };
    let per = 2 * table.n as u32 - 4;
    // (4 - 3) * units extra parameters against (2n - 4) * units residual dof;
    // the unit counts cancel in F but are kept in the reported dof.
    (units, per * units)
}

pub fn f_statistic(table: &RssTable, scope: &Scope, comparison: Comparison) -> Result<FTestReport> {
    if table.n < 3 {
        return Err(Error::domain(format!("F-test needs n >= 3 samples per experiment, got {}", table.n)));
    }
    let rss_reduced = aggregate_rss(table, scope, comparison.reduced())?;
    let rss_full = aggregate_rss(table, scope, ModelKind::M3)?;
    if rss_full <= 0.0 {
        return Err(Error::PerfectFit);
    }
    let (d1, d2) = degrees_of_freedom(table, scope);
    let f = ((rss_reduced - rss_full) / rss_full * d2 as f64 / d1 as f64).max(0.0);
    let f_crit = f_critical(SIGNIFICANCE, d1 as f64, d2 as f64)?;
    Ok(FTestReport {
        scope: scope.clone(),
        comparison,
        f,
        df: (d1, d2),
        rss_reduced,
        rss_full,
        f_crit,
        p_value: f_sf(f, d1 as f64, d2 as f64)?,
        significant: f > f_crit,
    })
}

/// Per-subject, per-experiment and pooled tests for both comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FTestSummary {
    pub per_subject: Vec<FTestReport>,
    pub per_experiment: Vec<FTestReport>,
    pub all: Vec<FTestReport>,
}

impl FTestSummary {
    pub fn all_for(&self, comparison: Comparison) -> Option<&FTestReport> {
        self.all.iter().find(|r| r.comparison == comparison)
    }
}

pub fn f_test_summary(table: &RssTable) -> Result<FTestSummary> {
    table.check_complete()?;
    let mut per_subject = Vec::new();
    let mut per_experiment = Vec::new();
    let mut all = Vec::new();
    for cmp in Comparison::BOTH {
        for s in table.subjects() {
            per_subject.push(f_statistic(table, &Scope::Subject(s), cmp)?);
        }
        for e in table.experiments() {
            per_experiment.push(f_statistic(table, &Scope::Experiment(e), cmp)?);
        }
        all.push(f_statistic(table, &Scope::All, cmp)?);
    }
    Ok(FTestSummary { per_subject, per_experiment, all })
}
