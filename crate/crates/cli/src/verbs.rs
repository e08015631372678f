use std::fs;
use std::path::{Path, PathBuf};

use joint_impedance::fractional::{AmplifierDesign, Controller, LagCascade};
use joint_impedance::loop_analysis::{
    margins, marginal_f_search, no_encirclement_proxy, predicted_amplification, stiffness_grid, stability_sweep,
    write_bode_csv, AmplificationReport, BodeTrace, Margins, OpenLoop, Realization, SearchSkeleton, SweepReport,
};
use joint_impedance::model::{natural_frequencies, CouplingConfig, JointParams, ModelKind};
use joint_impedance::pipeline::{
    cohort_power_law, identify_time_series, phase_table, rss_table, subject_power_law, ExperimentIdentification,
    PhaseRow,
};
use joint_impedance::protocol::{build_protocol_with, synthesize_experiment, SeriesMeta, TimeSeries};
use joint_impedance::scaling::{DampingLaw, PowerLawRecord};
use joint_impedance::stats::{f_test_summary, FTestReport, FTestSummary, RssTable, Scope};
use joint_impedance::{log_grid, Error, Result, FORMAT_VERSION};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

pub struct Ctx {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub format: Format,
    pub subjects: Option<usize>,
}

impl Ctx {
    fn dir(&self, verb: &str) -> Result<PathBuf> {
        let d = self.out.join(verb);
        fs::create_dir_all(&d).map_err(|e| Error::Io { path: d.clone(), source: e })?;
        Ok(d)
    }

    fn upstream(&self, verb: &str, file: &str) -> Result<PathBuf> {
        let p = self.out.join(verb).join(file);
        if !p.is_file() {
            return Err(Error::Config(format!("missing {}: run `jimp {verb}` first", p.display())));
        }
        Ok(p)
    }

    fn csv(&self) -> bool {
        self.format == Format::Csv
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json { path: path.into(), source: e })?;
    fs::write(path, text + "\n").map_err(|e| Error::Io { path: path.into(), source: e })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    serde_json::from_str(&text).map_err(|e| Error::Json { path: path.into(), source: e })
}

/// Shortest round-trip text, in exponent form for very small or large
/// magnitudes.
fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::Io { path: path.into(), source: e })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub seed: u64,
    pub subjects: Vec<String>,
    pub files: Vec<ManifestEntry>,
}

fn hash_file(path: &Path) -> Result<ManifestEntry> {
    let data = fs::read(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    let digest = Sha256::digest(&data);
    Ok(ManifestEntry {
        path: path.file_name().expect("file path").to_string_lossy().into_owned(),
        sha256: hex::encode(digest),
        bytes: data.len() as u64,
    })
}

pub fn synth(ctx: &Ctx) -> Result<()> {
    let dir = ctx.dir("synth")?;
    let subjects = ctx.cfg.subjects(ctx.subjects)?;
    let protocol = build_protocol_with(ctx.cfg.synth.schedule);
    let mut files = Vec::new();
    for subject in &subjects {
        for spec in &protocol {
            let ts = synthesize_experiment(spec, subject, &ctx.cfg.sea, &ctx.cfg.synth.timing, ctx.cfg.synth.dt)?;
            let stem = format!("{}_exp{}", subject.id, spec.exp_id);
            let csv = dir.join(format!("{stem}.csv"));
            let meta = dir.join(format!("{stem}.json"));
            ts.write_csv(&csv)?;
            SeriesMeta::for_series(&ts, spec, subject).write(&meta)?;
            files.push(hash_file(&csv)?);
            files.push(hash_file(&meta)?);
        }
    }
    let truth = dir.join("subjects.json");
    write_json(&truth, &subjects)?;
    files.push(hash_file(&truth)?);
    let manifest = Manifest {
        format: FORMAT_VERSION.into(),
        seed: ctx.cfg.seed,
        subjects: subjects.iter().map(|s| s.id.clone()).collect(),
        files,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    println!("synth: {} subjects x {} experiments -> {}", subjects.len(), protocol.len(), dir.display());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IdentifyIndex {
    format: String,
    experiments: Vec<String>,
}

fn load_identified(ctx: &Ctx) -> Result<Vec<ExperimentIdentification>> {
    let index: IdentifyIndex = read_json(&ctx.upstream("identify", "index.json")?)?;
    index
        .experiments
        .iter()
        .map(|f| read_json(&ctx.upstream("identify", f)?))
        .collect()
}

pub fn identify(ctx: &Ctx) -> Result<()> {
    let manifest: Manifest = read_json(&ctx.upstream("synth", "manifest.json")?)?;
    let dir = ctx.dir("identify")?;
    let mut ids = Vec::new();
    let mut names = Vec::new();
    for entry in manifest.files.iter().filter(|e| e.path.ends_with(".csv")) {
        let stem = entry.path.trim_end_matches(".csv");
        let meta = SeriesMeta::read(&ctx.upstream("synth", &format!("{stem}.json"))?)?;
        let ts = TimeSeries::read_csv(&ctx.upstream("synth", &entry.path)?, &meta)?;
        let id = identify_time_series(&ts, &meta)?;
        let name = format!("{stem}.json");
        write_json(&dir.join(&name), &id)?;
        names.push(name);
        ids.push(id);
    }
    write_json(&dir.join("index.json"), &IdentifyIndex { format: FORMAT_VERSION.into(), experiments: names })?;
    let table = rss_table(&ids)?;
    write_json(&dir.join("rss_table.json"), &table)?;
    if ctx.csv() {
        write_table(&dir.join("fits.csv"), PARAMETER_HEADER, &parameter_rows(&ids))?;
    }
    println!("identify: {} experiments -> {}", ids.len(), dir.display());
    Ok(())
}

const PARAMETER_HEADER: &[&str] = &[
    "subject",
    "exp",
    "model",
    "K_h_Nm_per_rad",
    "H_h_Nm_per_rad",
    "B_h_Nm_s_per_rad",
    "M_h_kg_m2",
    "rss_Nm2_per_rad2",
    "r2",
    "condition",
];

fn parameter_rows(ids: &[ExperimentIdentification]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for id in ids {
        for f in &id.fits {
            rows.push(vec![
                id.subject_id.clone(),
                id.exp_id.to_string(),
                f.kind.to_string(),
                num(f.params.k_h),
                num(f.params.h_h),
                num(f.params.b_h),
                num(f.params.m_h),
                num(f.rss),
                num(f.r2),
                num(f.condition_number),
            ]);
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FTestDoc {
    pub format: String,
    pub n: usize,
    pub summary: FTestSummary,
}

const FTEST_HEADER: &[&str] = &["scope", "id", "comparison", "F", "d1", "d2", "F_crit", "p_value", "significant"];

fn ftest_rows(s: &FTestSummary) -> Vec<Vec<String>> {
    let all = s.per_subject.iter().chain(&s.per_experiment).chain(&s.all);
    all.map(|r: &FTestReport| {
        let (scope, id) = match &r.scope {
            Scope::Subject(s) => ("subject", s.clone()),
            Scope::Experiment(e) => ("experiment", e.to_string()),
            Scope::All => ("all", String::new()),
        };
        vec![
            scope.into(),
            id,
            serde_json::to_value(r.comparison).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            num(r.f),
            r.df.0.to_string(),
            r.df.1.to_string(),
            num(r.f_crit),
            num(r.p_value),
            r.significant.to_string(),
        ]
    })
    .collect()
}

pub fn ftest(ctx: &Ctx) -> Result<()> {
    let mut table: RssTable = read_json(&ctx.upstream("identify", "rss_table.json")?)?;
    table.reindex()?;
    let summary = f_test_summary(&table)?;
    let dir = ctx.dir("ftest")?;
    write_json(&dir.join("ftest.json"), &FTestDoc { format: FORMAT_VERSION.into(), n: table.n, summary: summary.clone() })?;
    if ctx.csv() {
        write_table(&dir.join("ftest.csv"), FTEST_HEADER, &ftest_rows(&summary))?;
    }
    for r in &summary.all {
        println!(
            "ftest: all {:?} F = {:.4} (F_crit = {:.4}, df = {:?}) {}",
            r.comparison,
            r.f,
            r.f_crit,
            r.df,
            if r.significant { "significant" } else { "not significant" }
        );
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawDoc {
    pub format: String,
    pub cohort: PowerLawRecord,
    pub subjects: Vec<PowerLawRecord>,
    /// Range of the positive M2 stiffness estimates, Nm/rad.
    #[serde(rename = "K_range")]
    pub k_range: (f64, f64),
}

const POWERLAW_HEADER: &[&str] = &["level", "subject", "beta0_log10_Nm_per_rad", "beta1", "r2", "points"];

fn powerlaw_rows(doc: &PowerLawDoc) -> Vec<Vec<String>> {
    std::iter::once(&doc.cohort)
        .chain(&doc.subjects)
        .map(|r| {
            vec![
                r.provenance.level.clone(),
                if r.provenance.level == "cohort" { String::new() } else { r.provenance.subjects.join(";") },
                num(r.law.beta0),
                num(r.law.beta1),
                num(r.law.r2),
                r.provenance.points.len().to_string(),
            ]
        })
        .collect()
}

pub fn powerlaw(ctx: &Ctx) -> Result<()> {
    let ids = load_identified(ctx)?;
    let cohort = cohort_power_law(&ids)?;
    let mut subject_ids: Vec<String> = ids.iter().map(|i| i.subject_id.clone()).collect();
    subject_ids.sort();
    subject_ids.dedup();
    let subjects = subject_ids.iter().map(|s| subject_power_law(&ids, s)).collect::<Result<Vec<_>>>()?;
    let ks: Vec<f64> = subjects.iter().flat_map(|r| r.provenance.points.iter().map(|p| p.0)).collect();
    let k_range = (ks.iter().copied().fold(f64::INFINITY, f64::min), ks.iter().copied().fold(0.0, f64::max));
    let doc = PowerLawDoc { format: FORMAT_VERSION.into(), cohort, subjects, k_range };
    let dir = ctx.dir("powerlaw")?;
    write_json(&dir.join("powerlaw.json"), &doc)?;
    if ctx.csv() {
        write_table(&dir.join("powerlaw.csv"), POWERLAW_HEADER, &powerlaw_rows(&doc))?;
    }
    println!(
        "powerlaw: cohort beta0 = {:.4}, beta1 = {:.4}, r2 = {:.4}",
        doc.cohort.law.beta0, doc.cohort.law.beta1, doc.cohort.law.r2
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignAudit {
    /// Largest margin the damping law can fund over the range, deg.
    pub max_margin_deg: f64,
    #[serde(rename = "least_damped_K")]
    pub least_damped_k: f64,
    pub loss_factor_low: f64,
    pub loss_factor_high: f64,
    /// At the nominal stiffness, rad/s.
    pub omega_h: f64,
    pub omega_he: f64,
    /// `|F_cascade| / |F_ideal|` at the nominal crossover.
    pub cascade_gain_error: f64,
    pub cascade_band: (f64, f64),
    pub cascade_order: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignDoc {
    pub format: String,
    pub law: DampingLaw,
    pub design: AmplifierDesign,
    pub cascade: LagCascade,
    pub audit: DesignAudit,
}

pub fn design(ctx: &Ctx) -> Result<()> {
    let d = &ctx.cfg.design;
    let (law, k_range) = match (d.law, d.k_range) {
        (Some(law), Some(r)) => (law, r),
        (law, r) => {
            let doc: PowerLawDoc = read_json(&ctx.upstream("powerlaw", "powerlaw.json")?)?;
            (law.unwrap_or(DampingLaw::Power(doc.cohort.law)), r.unwrap_or(doc.k_range))
        }
    };
    let (k_low, k_high) = k_range;
    let max_margin_deg = joint_impedance::fractional::max_guaranteed_margin(&law, k_low, k_high);
    let design = AmplifierDesign::for_margin(&law, d.m_h, d.m_e, k_low, k_high, d.phi_deg)?;
    let mut cascade = LagCascade::new(design.f, design.k_f, d.cascade)?;
    if d.normalize_cascade {
        cascade = cascade.normalized_at(design.omega_gc_hat);
    }
    let nat = natural_frequencies(
        &JointParams::new(design.k_hat, law.predict_h(design.k_hat), 0.0, d.m_h)?,
        &CouplingConfig::new(d.m_e, 1.0)?,
    );
    let audit = DesignAudit {
        max_margin_deg,
        least_damped_k: law.least_damped_stiffness(k_low, k_high),
        loss_factor_low: law.loss_factor(k_low),
        loss_factor_high: law.loss_factor(k_high),
        omega_h: nat.omega_h,
        omega_he: nat.omega_he,
        cascade_gain_error: cascade.gain_error_at(design.omega_gc_hat),
        cascade_band: cascade.band(),
        cascade_order: cascade.approximate_order(),
        feasible: true,
    };
    let doc = DesignDoc { format: FORMAT_VERSION.into(), law, design, cascade, audit };
    let dir = ctx.dir("design")?;
    write_json(&dir.join("design.json"), &doc)?;
    if ctx.csv() {
        write_table(&dir.join("design.csv"), &["quantity", "value", "unit"], &design_rows(&doc))?;
    }
    println!(
        "design: k_p = {:.4}, f = {:.4}, k_f = {:.4}, K_hat = {:.4} Nm/rad, omega_gc_hat = {:.4} rad/s",
        design.k_p, design.f, design.k_f, design.k_hat, design.omega_gc_hat
    );
    Ok(())
}

fn design_rows(doc: &DesignDoc) -> Vec<Vec<String>> {
    let d = &doc.design;
    let a = &doc.audit;
    [
        ("k_p", d.k_p, "1"),
        ("f", d.f, "1"),
        ("k_f", d.k_f, "(rad/s)^f"),
        ("phi", d.phi_deg, "deg"),
        ("K_low", d.k_low, "Nm/rad"),
        ("K_high", d.k_high, "Nm/rad"),
        ("K_hat", d.k_hat, "Nm/rad"),
        ("omega_gc_hat", d.omega_gc_hat, "rad/s"),
        ("max_margin", a.max_margin_deg, "deg"),
        ("least_damped_K", a.least_damped_k, "Nm/rad"),
        ("omega_h", a.omega_h, "rad/s"),
        ("omega_he", a.omega_he, "rad/s"),
        ("cascade_gain_error", a.cascade_gain_error, "1"),
    ]
    .iter()
    .map(|(q, v, u)| vec![q.to_string(), num(*v), u.to_string()])
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisDoc {
    pub format: String,
    pub sea: joint_impedance::model::SeaModel,
    pub nominal_ideal: Margins,
    pub nominal_cascade: Margins,
    pub sweep_ideal: SweepReport,
    pub sweep_cascade: SweepReport,
    /// No grid frequency with |L| > 1 at or below -180 deg, at both bounds.
    pub no_encirclement: bool,
    /// Marginal order of the cascade over the stiffness grid, if searched.
    pub f_marginal: Option<f64>,
    pub amplification: AmplificationReport,
}

const AMPLIFICATION_HEADER: &[&str] =
    &["omega_rad_s", "ideal_ratio", "ideal_phase_deg", "cascade_ratio", "cascade_phase_deg"];

fn amplification_rows(r: &AmplificationReport) -> Vec<Vec<String>> {
    r.points
        .iter()
        .map(|p| {
            vec![
                num(p.omega),
                num(p.ideal_ratio),
                num(p.ideal_phase_deg),
                num(p.cascade_ratio),
                num(p.cascade_phase_deg),
            ]
        })
        .collect()
}

pub fn analyze(ctx: &Ctx) -> Result<()> {
    let doc: DesignDoc = read_json(&ctx.upstream("design", "design.json")?)?;
    let a = &ctx.cfg.analyze;
    let sea = ctx.cfg.sea;
    let d = doc.design;
    let ideal = d.ideal();
    let cascade = Controller::Cascade(doc.cascade.clone());
    let grid = stiffness_grid(d.k_low, d.k_high, a.sweep_points);

    let nominal = |c: &Controller| -> Result<Margins> { Ok(margins(&OpenLoop::at_stiffness(&d, c, &doc.law, d.k_hat, &sea)?)) };
    let mut no_encirclement = true;
    for k in [d.k_low, d.k_high] {
        no_encirclement &= no_encirclement_proxy(&OpenLoop::at_stiffness(&d, &cascade, &doc.law, k, &sea)?);
    }
    let f_marginal = if a.marginal_search {
        let sk = SearchSkeleton {
            law: doc.law,
            m_h: d.m_h,
            m_e: d.m_e,
            k_low: d.k_low,
            k_high: d.k_high,
            realization: Realization::Cascade(joint_impedance::fractional::CascadeLayout {
                n: doc.cascade.n,
                p1: doc.cascade.p1,
                r_pp: doc.cascade.r_pp,
            }),
            sea,
            k_values: grid.clone(),
        };
        match marginal_f_search(&sk) {
            Ok(f) => Some(f),
            Err(Error::NonConvergence { .. }) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let out = AnalysisDoc {
        format: FORMAT_VERSION.into(),
        sea,
        nominal_ideal: nominal(&ideal)?,
        nominal_cascade: nominal(&cascade)?,
        sweep_ideal: stability_sweep(&d, &ideal, &doc.law, &grid, &sea, a.tolerance_deg)?,
        sweep_cascade: stability_sweep(&d, &cascade, &doc.law, &grid, &sea, a.tolerance_deg)?,
        no_encirclement,
        f_marginal,
        amplification: predicted_amplification(&d, &doc.cascade, &a.probes)?,
    };
    let dir = ctx.dir("analyze")?;
    write_json(&dir.join("analysis.json"), &out)?;

    let omegas = log_grid(1e-2, 1e3, a.bode_points_per_decade.max(1));
    let lp = OpenLoop::at_stiffness(&d, &cascade, &doc.law, d.k_hat, &sea)?;
    let traces = [
        BodeTrace::sample("P", &omegas, |w| lp.plant(w)),
        BodeTrace::sample("F", &omegas, |w| cascade.response(w)),
        BodeTrace::sample("F_ideal", &omegas, |w| ideal.response(w)),
        BodeTrace::sample("L", &omegas, |w| lp.response(w)),
    ];
    write_bode_csv(&traces, &dir.join("bode.csv"))?;
    if ctx.csv() {
        write_table(&dir.join("amplification.csv"), AMPLIFICATION_HEADER, &amplification_rows(&out.amplification))?;
    }
    println!(
        "analyze: cascade min PM {:.2} deg at K = {:.2} Nm/rad ({:?}), certified = {}",
        out.sweep_cascade.worst_pm_deg, out.sweep_cascade.worst_k, out.sweep_cascade.worst_endpoint, out.sweep_cascade.certified
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRow {
    pub subject_id: String,
    pub exp_id: u32,
    pub model: ModelKind,
    pub params: JointParams,
    pub rss: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub phase_shifts: Vec<PhaseRow>,
    pub parameters: Vec<ParameterRow>,
    pub ftest: FTestSummary,
    pub powerlaw: PowerLawDoc,
    pub design: DesignDoc,
    pub analysis: AnalysisDoc,
}

pub fn report(ctx: &Ctx) -> Result<()> {
    let ids = load_identified(ctx)?;
    let ftest: FTestDoc = read_json(&ctx.upstream("ftest", "ftest.json")?)?;
    let powerlaw: PowerLawDoc = read_json(&ctx.upstream("powerlaw", "powerlaw.json")?)?;
    let design: DesignDoc = read_json(&ctx.upstream("design", "design.json")?)?;
    let analysis: AnalysisDoc = read_json(&ctx.upstream("analyze", "analysis.json")?)?;
    let phase_shifts = phase_table(&ids)?;
    let parameters = ids
        .iter()
        .flat_map(|id| {
            id.fits.iter().map(|f| ParameterRow {
                subject_id: id.subject_id.clone(),
                exp_id: id.exp_id,
                model: f.kind,
                params: f.params,
                rss: f.rss,
                r2: f.r2,
            })
        })
        .collect();
    let dir = ctx.dir("report")?;
    let phase_rows: Vec<Vec<String>> = phase_shifts
        .iter()
        .map(|r| {
            vec![
                r.subject_id.clone(),
                r.group.to_string(),
                num(r.stats.mean_deg),
                num(r.stats.stderr_deg),
                r.stats.count.to_string(),
            ]
        })
        .collect();
    write_table(&dir.join("phase_shifts.csv"), &["subject", "group", "mean_deg", "stderr_deg", "count"], &phase_rows)?;
    write_table(&dir.join("parameters.csv"), PARAMETER_HEADER, &parameter_rows(&ids))?;
    write_table(&dir.join("ftest.csv"), FTEST_HEADER, &ftest_rows(&ftest.summary))?;
    write_table(&dir.join("powerlaw.csv"), POWERLAW_HEADER, &powerlaw_rows(&powerlaw))?;
    write_table(&dir.join("design.csv"), &["quantity", "value", "unit"], &design_rows(&design))?;
    write_table(&dir.join("amplification.csv"), AMPLIFICATION_HEADER, &amplification_rows(&analysis.amplification))?;
    let report = Report {
        format: FORMAT_VERSION.into(),
        phase_shifts,
        parameters,
        ftest: ftest.summary,
        powerlaw,
        design,
        analysis,
    };
    write_json(&dir.join("report.json"), &report)?;
    println!("report: -> {}", dir.display());
    Ok(())
}
