//! Frequency-domain identification.
//!
//! Each perturbation period yields one complex sample `S(jw) = tau_c / theta`
//! from sinusoid fits over the steady-state window. Models M1, M2 and M3 are
//! linear in their parameters, so they are fitted by stacking real and
//! imaginary parts into one real least-squares problem.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{human_stiffness, CouplingConfig, ComplexResponse, DampingFlags, JointParams, ModelKind};
use crate::protocol::{PeriodMarker, TimeSeries};

/// Smallest angle phasor magnitude accepted by [`extract_sample`], rad.
pub const DEFAULT_DEGENERATE_THRESHOLD: f64 = 1e-4;

/// Condition number of the column-equilibrated design matrix above which a
/// fit is rejected.
pub const MAX_CONDITION: f64 = 1e10;

/// One complex stiffness sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencySample {
    /// rad/s
    pub omega: f64,
    /// Human dynamic stiffness `tau_c / theta`, Nm/rad.
    #[serde(rename = "S")]
    pub s: Complex64,
    /// Analysis window `(t_start, t_end)`, s.
    pub window: (f64, f64),
}

/// Least-squares fit of `a cos(w t') + b sin(w t') + c` with `t'` measured
/// from the window midpoint. Returns the sine-referenced phasor `b + j a`,
/// so that `x(t') = Im{X e^{j w t'}} + c`.
pub fn fit_phasor(t: &[f64], x: &[f64], omega: f64) -> Result<(Complex64, f64)> {
    if t.len() != x.len() || t.len() < 3 {
        return Err(Error::domain(format!("sinusoid fit needs at least 3 samples, got {}", t.len().min(x.len()))));
    }
    let mid = 0.5 * (t[0] + t[t.len() - 1]);
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for (&ti, &xi) in t.iter().zip(x) {
        let (s, c) = (omega * (ti - mid)).sin_cos();
        let row = Vector3::new(c, s, 1.0);
        ata += row * row.transpose();
        atb += row * xi;
    }
    let sol = ata
        .cholesky()
        .map(|ch| ch.solve(&atb))
        .ok_or(Error::Conditioning { condition: f64::INFINITY })?;
    Ok((Complex64::new(sol[1], sol[0]), sol[2]))
}

/// Phasor ratio over an explicit window.
pub fn extract_sample_in(
    ts: &TimeSeries,
    omega: f64,
    window: (f64, f64),
    threshold: f64,
) -> Result<FrequencySample> {
    let range = ts.index_range(window.0, window.1);
    if range.len() < 3 {
        return Err(Error::config(format!(
            "analysis window [{}, {}] s holds {} samples",
            window.0,
            window.1,
            range.len()
        )));
    }
    let t = &ts.t[range.clone()];
    let (theta, _) = fit_phasor(t, &ts.theta_e[range.clone()], omega)?;
    let (tau, _) = fit_phasor(t, &ts.tau_c[range], omega)?;
    if theta.norm() < threshold {
        return Err(Error::DegenerateExcitation { magnitude: theta.norm(), threshold });
    }
    Ok(FrequencySample { omega, s: tau / theta, window })
}

/// Sample for one period, using the second half of its sinusoid segment.
pub fn extract_sample(ts: &TimeSeries, marker: &PeriodMarker) -> Result<FrequencySample> {
    if !(marker.t_end > marker.t_start) {
        return Err(Error::config(format!("period {} has an empty sinusoid segment", marker.period)));
    }
    extract_sample_in(ts, marker.omega, marker.analysis_window(), DEFAULT_DEGENERATE_THRESHOLD)
}

/// One sample per period marker.
pub fn extract_all(ts: &TimeSeries) -> Result<Vec<FrequencySample>> {
    ts.markers.iter().map(|m| extract_sample(ts, m)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kind: ModelKind,
    /// Fitted parameters as solved, including negative damping if any.
    /// Terms absent from the model are zero.
    pub params: JointParams,
    /// Sum of squared real and imaginary residuals, (Nm/rad)^2.
    pub rss: f64,
    pub r2: f64,
    /// Model minus sample at each frequency.
    pub residuals: Vec<Complex64>,
    /// Condition number of the column-equilibrated design matrix.
    pub condition_number: f64,
    pub flags: DampingFlags,
}

impl FitResult {
    /// Model value at `omega` with the fitted parameters.
    pub fn evaluate(&self, omega: f64) -> Result<ComplexResponse> {
        human_stiffness(&self.params, self.kind, None, omega)
    }
}

/// Column layout of the stacked system: which real unknowns each model has.
fn unknowns(kind: ModelKind) -> Result<&'static [Param]> {
    use Param::*;
    match kind {
        ModelKind::M1 => Ok(&[M, B, K]),
        ModelKind::M2 => Ok(&[M, H, K]),
        ModelKind::M3 => Ok(&[M, B, H, K]),
        ModelKind::Reduced => Err(Error::config(
            "the reduced model has no free damping parameter; fit M2 and apply a power law",
        )),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Param {
    M,
    B,
    H,
    K,
}

impl Param {
    /// Coefficients of this unknown in `(Re S, Im S)` at `omega`.
    fn coefficients(self, omega: f64) -> (f64, f64) {
        match self {
            Param::M => (-omega * omega, 0.0),
            Param::B => (0.0, omega),
            Param::H => (0.0, 1.0),
            Param::K => (1.0, 0.0),
        }
    }
}

/// Unweighted linear least squares of a model on complex samples.
pub fn fit_model(samples: &[FrequencySample], kind: ModelKind) -> Result<FitResult> {
    let cols = unknowns(kind)?;
    let needed = if kind == ModelKind::M3 { 4 } else { 3 };
    if samples.len() < needed {
        return Err(Error::domain(format!("{kind} fit needs at least {needed} samples, got {}", samples.len())));
    }
    let mut omegas: Vec<f64> = samples.iter().map(|s| s.omega).collect();
    if omegas.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::domain("sample frequencies must be positive"));
    }
    omegas.sort_by(f64::total_cmp);
    if omegas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("sample frequencies must be distinct"));
    }

    let n = samples.len();
    let p = cols.len();
    let mut a = DMatrix::<f64>::zeros(2 * n, p);
    let mut y = DVector::<f64>::zeros(2 * n);
    for (k, smp) in samples.iter().enumerate() {
        for (j, c) in cols.iter().enumerate() {
            let (re, im) = c.coefficients(smp.omega);
            a[(2 * k, j)] = re;
            a[(2 * k + 1, j)] = im;
        }
        y[2 * k] = smp.s.re;
        y[2 * k + 1] = smp.s.im;
    }

    // Equilibrate columns so that the conditioning check reflects the
    // frequency layout rather than units.
    let scale: Vec<f64> = (0..p).map(|j| a.column(j).norm()).collect();
    if scale.contains(&0.0) {
        return Err(Error::Conditioning { condition: f64::INFINITY });
    }
    for (j, s) in scale.iter().enumerate() {
        a.column_mut(j).scale_mut(1.0 / s);
    }

    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Conditioning { condition });
    }
    let z = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::NonConvergence { routine: "svd solve", detail: e.to_string() })?;

    let mut params = JointParams { k_h: 0.0, h_h: 0.0, b_h: 0.0, m_h: 0.0 };
    for (j, c) in cols.iter().enumerate() {
        let v = z[j] / scale[j];
        match c {
            Param::M => params.m_h = v,
            Param::B => params.b_h = v,
            Param::H => params.h_h = v,
            Param::K => params.k_h = v,
        }
    }

    let mut residuals = Vec::with_capacity(n);
    let mut rss = 0.0;
    for smp in samples {
        let model = crate::model::stiffness_unchecked(&params, kind, params.h_h, smp.omega);
        let r = model - smp.s;
        rss += r.norm_sqr();
        residuals.push(r);
    }
    let mean = y.mean();
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };

    Ok(FitResult { kind, params, rss, r2, residuals, condition_number: condition, flags: params.damping_flags() })
}

/// Fits M1, M2 and M3 to the same samples.
pub fn fit_all(samples: &[FrequencySample]) -> Result<Vec<FitResult>> {
    ModelKind::FITTED.iter().map(|k| fit_model(samples, *k)).collect()
}

/// Coupled stiffness `S_h - (M_e / alpha) w^2` from fitted parameters.
pub fn recover_coupled(fit: &FitResult, coupling: &CouplingConfig, omega: f64) -> Result<ComplexResponse> {
    let s = fit.evaluate(omega)?;
    Ok(ComplexResponse { omega, value: s.value - coupling.perceived_inertia() * omega * omega })
}

/// Mean phase shift of the stiffness samples and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseShiftStats {
    pub mean_deg: f64,
    pub stderr_deg: f64,
    pub count: usize,
}

/// Number of highest frequencies per experiment left out of the phase
/// statistics, where inertia dominates the response.
pub const PHASE_EXCLUDED_TAIL: usize = 3;

/// Pools the phase of `S` over a group of experiments, using each
/// experiment's lowest frequencies and leaving out its top
/// [`PHASE_EXCLUDED_TAIL`].
pub fn phase_shift_stats(experiments: &[Vec<FrequencySample>]) -> Result<PhaseShiftStats> {
    let mut phases = Vec::new();
    for exp in experiments {
        let mut sorted = exp.clone();
        sorted.sort_by(|a, b| a.omega.total_cmp(&b.omega));
        let keep = sorted.len().saturating_sub(PHASE_EXCLUDED_TAIL);
        phases.extend(sorted[..keep].iter().map(|s| s.s.arg().to_degrees()));
    }
    if phases.is_empty() {
        return Err(Error::domain("phase statistics over an empty group"));
    }
    let n = phases.len() as f64;
    let mean = phases.iter().sum::<f64>() / n;
    let stderr = if phases.len() > 1 {
        let var = phases.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(PhaseShiftStats { mean_deg: mean, stderr_deg: stderr, count: phases.len() })
}
