//! Open-loop frequency response `L(jw) = k_p F(jw) P(jw)` of the amplified
//! exoskeleton, phase margins, stiffness sweeps and amplification
//! predictions.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fractional::{AmplifierDesign, CascadeLayout, Controller, LagCascade};
use crate::model::{coupled_stiffness, human_stiffness, CouplingConfig, JointParams, ModelKind, SeaModel};
use crate::scaling::DampingLaw;

/// Band searched for gain crossovers, rad/s.
pub const MARGIN_BAND: (f64, f64) = (1e-2, 1e3);
/// Grid density of the crossover search.
pub const MARGIN_POINTS_PER_DECADE: usize = 200;
/// Crossover location tolerance in `log10(omega)`.
pub const CROSSOVER_TOL: f64 = 1e-6;
/// Margins below this count as marginal, deg.
pub const MARGINAL_PM_DEG: f64 = 1.0;
/// Fewest stiffness values accepted by [`stability_sweep`].
pub const MIN_SWEEP_POINTS: usize = 20;

/// Plant from desired torque to cuff torque with the exoskeleton at
/// `alpha = 1`: `P = S_h / S_{h-e} * G_sea`.
pub fn plant_response(
    params: &JointParams,
    kind: ModelKind,
    law: Option<&DampingLaw>,
    m_e: f64,
    sea: &SeaModel,
    omega: f64,
) -> Result<Complex64> {
    let params = resolve(params, kind, law)?;
    let kind = if kind == ModelKind::Reduced { ModelKind::M2 } else { kind };
    let coupling = CouplingConfig::new(m_e, 1.0)?;
    let s_h = human_stiffness(&params, kind, None, omega)?.value;
    let s_he = coupled_stiffness(&params, &coupling, kind, None, omega)?.value;
    Ok(s_h / s_he * sea.response(omega))
}

fn resolve(params: &JointParams, kind: ModelKind, law: Option<&DampingLaw>) -> Result<JointParams> {
    match kind {
        ModelKind::Reduced => {
            let law = law.ok_or_else(|| Error::config("the reduced model needs a damping law"))?;
            Ok(JointParams { h_h: law.predict_h(params.k_h), ..*params })
        }
        _ => Ok(*params),
    }
}

/// Closed amplification loop at one stiffness.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenLoop {
    pub k_p: f64,
    pub controller: Controller,
    /// M2 parameters of the human.
    pub params: JointParams,
    pub m_e: f64,
    pub sea: SeaModel,
}

impl OpenLoop {
    /// Loop for `design` at stiffness `k_h` with `H_h` from `law`.
    pub fn at_stiffness(design: &AmplifierDesign, controller: &Controller, law: &DampingLaw, k_h: f64, sea: &SeaModel) -> Result<Self> {
        let params = JointParams::new(k_h, law.predict_h(k_h), 0.0, design.m_h)?;
        Ok(OpenLoop { k_p: design.k_p, controller: controller.clone(), params, m_e: design.m_e, sea: *sea })
    }

    pub fn plant(&self, omega: f64) -> Complex64 {
        let p = &self.params;
        let s_h = crate::model::stiffness_unchecked(p, ModelKind::M2, p.h_h, omega);
        let s_he = s_h - self.m_e * omega * omega;
        s_h / s_he * self.sea.response(omega)
    }

    pub fn response(&self, omega: f64) -> Complex64 {
        self.k_p * self.controller.response(omega) * self.plant(omega)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Marginal,
    Unstable,
    NoCrossover,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossover {
    /// rad/s
    pub omega: f64,
    pub pm_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub crossovers: Vec<Crossover>,
    /// Smallest margin over all crossovers; `None` without a crossover.
    pub min_pm_deg: Option<f64>,
    pub verdict: Verdict,
    pub multiple: bool,
}

impl Margins {
    /// Minimum margin, with no crossover counting as unbounded.
    pub fn min_pm_or_inf(&self) -> f64 {
        self.min_pm_deg.unwrap_or(f64::INFINITY)
    }
}

/// Unwraps a phase sequence in radians.
pub fn unwrap_phase(phases: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let mut offset = 0.0;
    let two_pi = std::f64::consts::TAU;
    for (i, &p) in phases.iter().enumerate() {
        if i > 0 {
            let prev = phases[i - 1];
            let d = p - prev;
            if d > std::f64::consts::PI {
                offset -= two_pi;
            } else if d < -std::f64::consts::PI {
                offset += two_pi;
            }
        }
        out.push(p + offset);
    }
    out
}

/// Continuous phase of `h` over the search grid, plus the grid itself.
struct Sweep {
    log_w: Vec<f64>,
    values: Vec<Complex64>,
    phase: Vec<f64>,
}

fn sweep(h: &impl Fn(f64) -> Complex64) -> Sweep {
    let omegas = crate::log_grid(MARGIN_BAND.0, MARGIN_BAND.1, MARGIN_POINTS_PER_DECADE);
    let values: Vec<Complex64> = omegas.iter().map(|w| h(*w)).collect();
    let phase = unwrap_phase(&values.iter().map(|v| v.arg()).collect::<Vec<_>>());
    Sweep { log_w: omegas.iter().map(|w| w.log10()).collect(), values, phase }
}

/// Wraps an angle into `(-180, 180]` deg.
fn wrap_deg(a: f64) -> f64 {
    let w = a - 360.0 * (a / 360.0).round();
    if w <= -180.0 {
        w + 360.0
    } else {
        w
    }
}

/// Gain crossovers and phase margins of an arbitrary loop response.
pub fn margins_of(h: impl Fn(f64) -> Complex64) -> Margins {
    let sw = sweep(&h);
    let mut crossovers = Vec::new();
    for i in 0..sw.values.len() - 1 {
        let g0 = sw.values[i].norm().ln();
        let g1 = sw.values[i + 1].norm().ln();
        if (g0 > 0.0) != (g1 > 0.0) {
            let (mut lo, mut hi) = (sw.log_w[i], sw.log_w[i + 1]);
            let above_at_lo = g0 > 0.0;
            while hi - lo > CROSSOVER_TOL {
                let mid = 0.5 * (lo + hi);
                if (h(10f64.powf(mid)).norm().ln() > 0.0) == above_at_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let omega = 10f64.powf(0.5 * (lo + hi));
            let pm_deg = wrap_deg(180.0 + h(omega).arg().to_degrees());
            crossovers.push(Crossover { omega, pm_deg });
        }
    }
    let min_pm_deg = crossovers.iter().map(|c| c.pm_deg).reduce(f64::min);
    let verdict = match min_pm_deg {
        None => Verdict::NoCrossover,
        Some(pm) if pm <= 0.0 => Verdict::Unstable,
        Some(pm) if pm < MARGINAL_PM_DEG => Verdict::Marginal,
        Some(_) => Verdict::Stable,
    };
    let multiple = crossovers.len() > 1;
    Margins { crossovers, min_pm_deg, verdict, multiple }
}

pub fn margins(lp: &OpenLoop) -> Margins {
    margins_of(|w| lp.response(w))
}

/// True when no grid frequency has `|L| > 1` together with a phase at or
/// below `-180 deg`.
pub fn no_encirclement_proxy(lp: &OpenLoop) -> bool {
    let sw = sweep(&|w| lp.response(w));
    !sw.values
        .iter()
        .zip(&sw.phase)
        .any(|(v, p)| v.norm() > 1.0 && p.to_degrees() <= -180.0)
}

/// Log-spaced stiffness values from `k_low` to `k_high` inclusive.
pub fn stiffness_grid(k_low: f64, k_high: f64, n: usize) -> Vec<f64> {
    if n <= 1 || k_high <= k_low {
        return vec![k_low];
    }
    let r = (k_high / k_low).ln();
    let mut out: Vec<f64> = (0..n).map(|i| k_low * (r * i as f64 / (n - 1) as f64).exp()).collect();
    out[n - 1] = k_high;
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorstEndpoint {
    Low,
    High,
    Interior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    #[serde(rename = "K_h")]
    pub k_h: f64,
    pub margins: Margins,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    #[serde(rename = "worst_K")]
    pub worst_k: f64,
    pub worst_pm_deg: f64,
    pub worst_endpoint: WorstEndpoint,
    pub pm_low_deg: f64,
    pub pm_high_deg: f64,
    /// Every point stable with a margin of at least the design's `phi_deg`
    /// minus the supplied tolerance.
    pub certified: bool,
}

/// Margins across a stiffness grid. `tolerance_deg` is the allowance
/// subtracted from the design margin when certifying.
pub fn stability_sweep(
    design: &AmplifierDesign,
    controller: &Controller,
    law: &DampingLaw,
    k_values: &[f64],
    sea: &SeaModel,
    tolerance_deg: f64,
) -> Result<SweepReport> {
    if k_values.len() < MIN_SWEEP_POINTS {
        return Err(Error::domain(format!(
            "stiffness sweep needs at least {MIN_SWEEP_POINTS} points, got {}",
            k_values.len()
        )));
    }
    let mut points = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let lp = OpenLoop::at_stiffness(design, controller, law, k, sea)?;
        points.push(SweepPoint { k_h: k, margins: margins(&lp) });
    }
    let (i_worst, worst) = points
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.margins.min_pm_or_inf().total_cmp(&b.1.margins.min_pm_or_inf()))
        .expect("non-empty");
    let last = points.len() - 1;
    let worst_endpoint = match i_worst {
        0 => WorstEndpoint::Low,
        i if i == last => WorstEndpoint::High,
        _ => WorstEndpoint::Interior,
    };
    let worst_pm_deg = worst.margins.min_pm_or_inf();
    let floor = design.phi_deg - tolerance_deg;
    let certified = points
        .iter()
        .all(|p| p.margins.verdict == Verdict::Stable && p.margins.min_pm_or_inf() >= floor);
    Ok(SweepReport {
        worst_k: worst.k_h,
        worst_pm_deg,
        worst_endpoint,
        pm_low_deg: points[0].margins.min_pm_or_inf(),
        pm_high_deg: points[last].margins.min_pm_or_inf(),
        certified,
        points,
    })
}

/// How the fractional element is realized in a search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Realization {
    Ideal,
    Cascade(CascadeLayout),
}

impl Realization {
    pub fn controller(&self, design: &AmplifierDesign) -> Result<Controller> {
        match self {
            Realization::Ideal => Ok(design.ideal()),
            Realization::Cascade(layout) => Ok(Controller::Cascade(LagCascade::new(design.f, design.k_f, *layout)?)),
        }
    }
}

/// Inputs of the marginal-order search that stay fixed while `f` varies.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSkeleton {
    pub law: DampingLaw,
    pub m_h: f64,
    pub m_e: f64,
    pub k_low: f64,
    pub k_high: f64,
    pub realization: Realization,
    pub sea: SeaModel,
    /// Stiffness values tested at each order.
    pub k_values: Vec<f64>,
}

impl SearchSkeleton {
    pub fn design(&self, f: f64) -> Result<AmplifierDesign> {
        AmplifierDesign::with_order(&self.law, self.m_h, self.m_e, self.k_low, self.k_high, f)
    }

    /// Smallest margin over the tested stiffness values at order `f`.
    pub fn min_pm(&self, f: f64) -> Result<f64> {
        let d = self.design(f)?;
        let c = self.realization.controller(&d)?;
        let mut worst = f64::INFINITY;
        for &k in &self.k_values {
            let lp = OpenLoop::at_stiffness(&d, &c, &self.law, k, &self.sea)?;
            worst = worst.min(margins(&lp).min_pm_or_inf());
        }
        Ok(worst)
    }
}

/// Upper end of the order search.
pub const MAX_SEARCH_ORDER: f64 = 0.99;
/// Order tolerance of the search.
pub const ORDER_TOL: f64 = 1e-3;

/// Emulates raising the order until the loop starts to oscillate: bisects
/// on `f` for a zero minimum margin.
pub fn marginal_f_search(skeleton: &SearchSkeleton) -> Result<f64> {
    if skeleton.min_pm(0.0)? <= 0.0 {
        return Ok(0.0);
    }
    if skeleton.min_pm(MAX_SEARCH_ORDER)? > 0.0 {
        return Err(Error::NonConvergence {
            routine: "marginal order search",
            detail: format!("phase margin stays positive up to f = {MAX_SEARCH_ORDER}; no marginal order"),
        });
    }
    let (mut lo, mut hi) = (0.0, MAX_SEARCH_ORDER);
    while hi - lo > ORDER_TOL {
        let mid = 0.5 * (lo + hi);
        if skeleton.min_pm(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplificationPoint {
    /// rad/s
    pub omega: f64,
    /// `|k_p F(jw)|` with the ideal element.
    pub ideal_ratio: f64,
    pub ideal_phase_deg: f64,
    /// `|k_p F(jw)|` with the lag ladder.
    pub cascade_ratio: f64,
    pub cascade_phase_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplificationReport {
    pub f: f64,
    pub k_p: f64,
    pub k_f: f64,
    pub points: Vec<AmplificationPoint>,
}

/// Default probe frequencies, rad/s.
pub const DEFAULT_PROBES: [f64; 2] = [1.0, 10.0];

/// Commanded ratio `tau_s / tau_c = k_p F(jw)` at the probe frequencies.
pub fn predicted_amplification(design: &AmplifierDesign, cascade: &LagCascade, probes: &[f64]) -> Result<AmplificationReport> {
    let ideal = design.ideal();
    let mut points = Vec::with_capacity(probes.len());
    for &w in probes {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::domain(format!("probe frequency must be positive, got {w}")));
        }
        let i = design.k_p * ideal.response(w);
        let c = design.k_p * cascade.response(w);
        points.push(AmplificationPoint {
            omega: w,
            ideal_ratio: i.norm(),
            ideal_phase_deg: i.arg().to_degrees(),
            cascade_ratio: c.norm(),
            cascade_phase_deg: c.arg().to_degrees(),
        });
    }
    Ok(AmplificationReport { f: design.f, k_p: design.k_p, k_f: design.k_f, points })
}

/// Instantaneous amplification `tau_s / tau_c + 1` on bias-free torques.
/// Samples with `|tau_c|` below `min_tau_c` are `None`.
pub fn realtime_amplification(tau_s: &[f64], tau_c: &[f64], min_tau_c: f64) -> Vec<Option<f64>> {
    tau_s
        .iter()
        .zip(tau_c)
        .map(|(s, c)| (c.abs() >= min_tau_c).then(|| s / c + 1.0))
        .collect()
}

/// One labelled frequency response.
#[derive(Debug, Clone, PartialEq)]
pub struct BodeTrace {
    pub label: String,
    pub omegas: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl BodeTrace {
    pub fn sample(label: &str, omegas: &[f64], h: impl Fn(f64) -> Complex64) -> Self {
        BodeTrace { label: label.to_string(), omegas: omegas.to_vec(), values: omegas.iter().map(|w| h(*w)).collect() }
    }

    pub fn magnitude_db(&self) -> Vec<f64> {
        self.values.iter().map(|v| 20.0 * v.norm().log10()).collect()
    }

    pub fn phase_deg(&self) -> Vec<f64> {
        unwrap_phase(&self.values.iter().map(|v| v.arg()).collect::<Vec<_>>())
            .into_iter()
            .map(f64::to_degrees)
            .collect()
    }
}

/// Writes traces sharing one frequency grid as columns
/// `omega_rad_s, <label>_mag_dB, <label>_phase_deg, ...`.
pub fn write_bode_csv(traces: &[BodeTrace], path: &Path) -> Result<()> {
    let first = traces.first().ok_or_else(|| Error::config("no Bode traces to write"))?;
    if traces.iter().any(|t| t.omegas != first.omegas) {
        return Err(Error::config("Bode traces must share one frequency grid"));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut header = vec!["omega_rad_s".to_string()];
    for t in traces {
        header.push(format!("{}_mag_dB", t.label));
        header.push(format!("{}_phase_deg", t.label));
    }
    let cols: Vec<(Vec<f64>, Vec<f64>)> = traces.iter().map(|t| (t.magnitude_db(), t.phase_deg())).collect();
    let mut out = header.join(",");
    out.push('\n');
    for (i, omega) in first.omegas.iter().enumerate() {
        out.push_str(&omega.to_string());
        for (m, p) in &cols {
            out.push_str(&format!(",{},{}", m[i], p[i]));
        }
        out.push('\n');
    }
    w.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
