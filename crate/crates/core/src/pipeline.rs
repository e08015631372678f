//! Cohort-level glue: identify every experiment of every subject, build the
//! RSS grid, and fit subject and cohort power laws.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelKind, SeaModel};
use crate::protocol::{synthesize_experiment, ExperimentSpec, GroundTruthSubject, PeriodTiming, SeriesMeta, TimeSeries};
use crate::scaling::{fit_power_law, geometric_average, PowerLawRecord, Provenance};
use crate::stats::RssTable;
use crate::sysid::{extract_all, fit_all, phase_shift_stats, FitResult, FrequencySample, PhaseShiftStats};

/// Samples and fits of one experiment of one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentIdentification {
    pub format: String,
    pub subject_id: String,
    pub exp_id: u32,
    pub group: usize,
    pub alpha: f64,
    pub samples: Vec<FrequencySample>,
    /// M1, M2 and M3 in that order.
    pub fits: Vec<FitResult>,
}

impl ExperimentIdentification {
    pub fn fit(&self, kind: ModelKind) -> Option<&FitResult> {
        self.fits.iter().find(|f| f.kind == kind)
    }
}

pub fn identify_time_series(ts: &TimeSeries, meta: &SeriesMeta) -> Result<ExperimentIdentification> {
    let samples = extract_all(ts)?;
    let fits = fit_all(&samples)?;
    Ok(ExperimentIdentification {
        format: crate::FORMAT_VERSION.to_string(),
        subject_id: meta.subject_id.clone(),
        exp_id: meta.exp_id,
        group: meta.group,
        alpha: meta.alpha,
        samples,
        fits,
    })
}

/// Synthesizes and identifies one experiment without keeping the series.
pub fn synth_and_identify(
    spec: &ExperimentSpec,
    subject: &GroundTruthSubject,
    sea: &SeaModel,
    timing: &PeriodTiming,
    dt: f64,
) -> Result<ExperimentIdentification> {
    let ts = synthesize_experiment(spec, subject, sea, timing, dt)?;
    identify_time_series(&ts, &SeriesMeta::for_series(&ts, spec, subject))
}

/// Every protocol experiment for every subject.
pub fn synth_and_identify_cohort(
    protocol: &[ExperimentSpec],
    subjects: &[GroundTruthSubject],
    sea: &SeaModel,
    timing: &PeriodTiming,
    dt: f64,
) -> Result<Vec<ExperimentIdentification>> {
    let mut out = Vec::with_capacity(protocol.len() * subjects.len());
    for subject in subjects {
        for spec in protocol {
            out.push(synth_and_identify(spec, subject, sea, timing, dt)?);
        }
    }
    Ok(out)
}

/// RSS grid over all identified experiments. The per-experiment sample
/// count must agree across the cohort.
pub fn rss_table(ids: &[ExperimentIdentification]) -> Result<RssTable> {
    let n = ids.first().map(|i| i.samples.len()).ok_or_else(|| Error::config("no identified experiments"))?;
    let mut table = RssTable::new(n);
    for id in ids {
        if id.samples.len() != n {
            return Err(Error::config(format!(
                "subject {} experiment {} has {} samples, expected {n}",
                id.subject_id,
                id.exp_id,
                id.samples.len()
            )));
        }
        for fit in &id.fits {
            table.insert(&id.subject_id, id.exp_id, fit.kind, fit.rss);
        }
    }
    table.check_complete()?;
    Ok(table)
}

/// `(K_h, H_h)` of an M2 fit, if both are positive.
fn m2_point(id: &ExperimentIdentification) -> Option<(f64, f64)> {
    id.fit(ModelKind::M2)
        .map(|f| (f.params.k_h, f.params.h_h))
        .filter(|(k, h)| *k > 0.0 && *h > 0.0)
}

/// Power law of one subject from its M2 fits. Fits with non-positive
/// stiffness or damping are left out.
pub fn subject_power_law(ids: &[ExperimentIdentification], subject: &str) -> Result<PowerLawRecord> {
    let mine: Vec<_> = ids.iter().filter(|i| i.subject_id == subject).collect();
    let mut experiments = Vec::new();
    let mut points = Vec::new();
    for id in mine {
        if let Some(p) = m2_point(id) {
            experiments.push(id.exp_id);
            points.push(p);
        }
    }
    let law = fit_power_law(&points)?;
    Ok(PowerLawRecord {
        law,
        provenance: Provenance {
            level: "subject".into(),
            model: "M2".into(),
            subjects: vec![subject.to_string()],
            experiments,
            points,
        },
    })
}

/// Cohort law fitted to the per-experiment geometric averages of the M2
/// `(K_h, H_h)` across subjects.
pub fn cohort_power_law(ids: &[ExperimentIdentification]) -> Result<PowerLawRecord> {
    let mut by_exp: BTreeMap<u32, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut subjects: Vec<String> = Vec::new();
    for id in ids {
        if let Some((k, h)) = m2_point(id) {
            let e = by_exp.entry(id.exp_id).or_default();
            e.0.push(k);
            e.1.push(h);
            if !subjects.contains(&id.subject_id) {
                subjects.push(id.subject_id.clone());
            }
        }
    }
    let mut points = Vec::new();
    for (ks, hs) in by_exp.values() {
        points.push((geometric_average(ks)?, geometric_average(hs)?));
    }
    let law = fit_power_law(&points)?;
    subjects.sort();
    Ok(PowerLawRecord {
        law,
        provenance: Provenance {
            level: "cohort".into(),
            model: "M2".into(),
            subjects,
            experiments: by_exp.keys().copied().collect(),
            points,
        },
    })
}

/// Phase statistics per subject and stiffness group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub subject_id: String,
    /// 1-based group number.
    pub group: usize,
    pub stats: PhaseShiftStats,
}

pub fn phase_table(ids: &[ExperimentIdentification]) -> Result<Vec<PhaseRow>> {
    let mut grouped: BTreeMap<(String, usize), Vec<Vec<FrequencySample>>> = BTreeMap::new();
    for id in ids {
        grouped.entry((id.subject_id.clone(), id.group)).or_default().push(id.samples.clone());
    }
    grouped
        .into_iter()
        .map(|((subject_id, group), exps)| {
            Ok(PhaseRow { subject_id, group: group + 1, stats: phase_shift_stats(&exps)? })
        })
        .collect()
}
