//! Strength amplification controller `alpha(s) - 1 = k_p F(s)`.
//!
//! The proportional gain places the crossover between the coupled and the
//! free natural frequency. The fractional element `F(s) = k_f s^-f` spends
//! the phase lead that hysteretic damping gives the plant, and is realized
//! as a ladder of first-order lag sections with geometrically spaced poles.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scaling::DampingLaw;

/// Proportional gain and the crossover it produces as a function of
/// stiffness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProportionalRule {
    pub k_p: f64,
    #[serde(rename = "M_h")]
    pub m_h: f64,
    /// `M_h + M_e`
    #[serde(rename = "M_he")]
    pub m_he: f64,
}

impl ProportionalRule {
    /// `sqrt(K_h / sqrt(M_he M_h))`, rad/s.
    pub fn omega_gc(&self, k_h: f64) -> f64 {
        (k_h / (self.m_he * self.m_h).sqrt()).sqrt()
    }
}

/// `k_p = sqrt(M_he / M_h)`.
pub fn design_kp(m_h: f64, m_e: f64) -> Result<ProportionalRule> {
    if !(m_h > 0.0 && m_h.is_finite()) || !(m_e >= 0.0 && m_e.is_finite()) {
        return Err(Error::domain(format!("inertias must be positive, got M_h = {m_h}, M_e = {m_e}")));
    }
    let m_he = m_h + m_e;
    Ok(ProportionalRule { k_p: (m_he / m_h).sqrt(), m_h, m_he })
}

/// Geometric mean of the stiffness bounds.
pub fn nominal_stiffness(k_low: f64, k_high: f64) -> Result<f64> {
    check_range(k_low, k_high)?;
    Ok((k_low * k_high).sqrt())
}

fn check_range(k_low: f64, k_high: f64) -> Result<()> {
    if !(k_low > 0.0 && k_high >= k_low && k_high.is_finite()) {
        return Err(Error::domain(format!("need 0 < K_low <= K_high, got [{k_low}, {k_high}]")));
    }
    Ok(())
}

/// Largest phase margin, in degrees, that hysteretic damping can fund over
/// the stiffness range.
pub fn max_guaranteed_margin(law: &DampingLaw, k_low: f64, k_high: f64) -> f64 {
    let k = law.least_damped_stiffness(k_low, k_high);
    law.loss_factor(k).atan().to_degrees()
}

/// `f = (atan(c_h(K*)) - phi) / 90deg`, where `K*` is the least damped
/// stiffness of the range.
pub fn select_fractional_order(law: &DampingLaw, k_low: f64, k_high: f64, phi_deg: f64) -> Result<f64> {
    check_range(k_low, k_high)?;
    if !(phi_deg >= 0.0 && phi_deg.is_finite()) {
        return Err(Error::domain(format!("phase margin must be non-negative, got {phi_deg}")));
    }
    let max_deg = max_guaranteed_margin(law, k_low, k_high);
    let f = (max_deg - phi_deg) / 90.0;
    if !(f > 0.0) {
        return Err(Error::Infeasible { requested_deg: phi_deg, max_deg });
    }
    Ok(f)
}

/// A complete amplifier design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplifierDesign {
    pub k_p: f64,
    pub f: f64,
    /// `omega_gc_hat^f`, (rad/s)^f.
    pub k_f: f64,
    pub phi_deg: f64,
    #[serde(rename = "K_low")]
    pub k_low: f64,
    #[serde(rename = "K_high")]
    pub k_high: f64,
    #[serde(rename = "K_hat")]
    pub k_hat: f64,
    pub omega_gc_hat: f64,
    #[serde(rename = "M_h")]
    pub m_h: f64,
    #[serde(rename = "M_e")]
    pub m_e: f64,
}

impl AmplifierDesign {
    /// Designs for a guaranteed margin `phi_deg` over `[k_low, k_high]`.
    pub fn for_margin(law: &DampingLaw, m_h: f64, m_e: f64, k_low: f64, k_high: f64, phi_deg: f64) -> Result<Self> {
        let f = select_fractional_order(law, k_low, k_high, phi_deg)?;
        let mut d = Self::with_order(law, m_h, m_e, k_low, k_high, f)?;
        d.phi_deg = phi_deg;
        Ok(d)
    }

    /// Design with an explicitly chosen order. `phi_deg` is the margin the
    /// order leaves over the range, negative if it overspends the lead.
    pub fn with_order(law: &DampingLaw, m_h: f64, m_e: f64, k_low: f64, k_high: f64, f: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&f) {
            return Err(Error::domain(format!("fractional order must be in [0, 1), got {f}")));
        }
        let rule = design_kp(m_h, m_e)?;
        let k_hat = nominal_stiffness(k_low, k_high)?;
        let omega_gc_hat = rule.omega_gc(k_hat);
        Ok(AmplifierDesign {
            k_p: rule.k_p,
            f,
            k_f: omega_gc_hat.powf(f),
            phi_deg: max_guaranteed_margin(law, k_low, k_high) - 90.0 * f,
            k_low,
            k_high,
            k_hat,
            omega_gc_hat,
            m_h,
            m_e,
        })
    }

    /// The ideal fractional element of this design.
    pub fn ideal(&self) -> Controller {
        Controller::Ideal { k_f: self.k_f, f: self.f }
    }

    /// Lag ladder realizing this design with the default layout.
    pub fn cascade(&self) -> Result<LagCascade> {
        LagCascade::new(self.f, self.k_f, CascadeLayout::default())
    }
}

/// Order lowered from an empirically found marginal value by a fixed
/// safety step (`0.12` corresponds to `10.8 deg` of margin).
pub fn backed_off_order(f_marginal: f64, step: f64) -> Result<f64> {
    let f = f_marginal - step;
    if !(f > 0.0) {
        return Err(Error::Infeasible { requested_deg: 90.0 * step, max_deg: 90.0 * f_marginal });
    }
    Ok(f)
}

/// Pole layout of the lag ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeLayout {
    pub n: usize,
    /// First pole, rad/s.
    pub p1: f64,
    /// Pole-to-pole ratio.
    pub r_pp: f64,
}

impl Default for CascadeLayout {
    fn default() -> Self {
        CascadeLayout { n: 5, p1: 1.0, r_pp: 10f64.sqrt() }
    }
}

/// `F(s) = k_f / p_1^f * prod (1 + s/z_i) / (1 + s/p_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagCascade {
    pub f: f64,
    pub k_f: f64,
    pub n: usize,
    pub p1: f64,
    pub r_pp: f64,
    /// `r_pp^f`
    pub r_zp: f64,
    pub poles: Vec<f64>,
    pub zeros: Vec<f64>,
    /// DC gain `k_f / p_1^f`.
    pub dc_gain: f64,
}

impl LagCascade {
    pub fn new(f: f64, k_f: f64, layout: CascadeLayout) -> Result<Self> {
        let CascadeLayout { n, p1, r_pp } = layout;
        if n == 0 {
            return Err(Error::domain("cascade needs at least one section"));
        }
        if !(p1 > 0.0 && p1.is_finite()) {
            return Err(Error::domain(format!("first pole must be positive, got {p1}")));
        }
        if !(r_pp > 1.0 && r_pp.is_finite()) {
            return Err(Error::domain(format!("pole spacing must exceed 1, got {r_pp}")));
        }
        if !(0.0..1.0).contains(&f) {
            return Err(Error::domain(format!(
                "fractional order {f} outside [0, 1): zero spacing r_pp^f would reach the pole spacing"
            )));
        }
        if !(k_f > 0.0 && k_f.is_finite()) {
            return Err(Error::domain(format!("k_f must be positive, got {k_f}")));
        }
        let r_zp = r_pp.powf(f);
        let poles: Vec<f64> = (0..n).map(|i| p1 * r_pp.powi(i as i32)).collect();
        let zeros = poles.iter().map(|p| p * r_zp).collect();
        Ok(LagCascade { f, k_f, n, p1, r_pp, r_zp, poles, zeros, dc_gain: k_f / p1.powf(f) })
    }

    /// `log(r_zp) / log(r_pp)`.
    pub fn approximate_order(&self) -> f64 {
        self.r_zp.ln() / self.r_pp.ln()
    }

    /// `[p_1, z_n]`, rad/s.
    pub fn band(&self) -> (f64, f64) {
        (self.p1, *self.zeros.last().expect("n >= 1"))
    }

    pub fn response(&self, omega: f64) -> Complex64 {
        let s = Complex64::new(0.0, omega);
        self.poles
            .iter()
            .zip(&self.zeros)
            .fold(Complex64::new(self.dc_gain, 0.0), |acc, (p, z)| acc * (1.0 + s / z) / (1.0 + s / p))
    }

    /// Copy rescaled to unit magnitude at `omega`.
    pub fn normalized_at(&self, omega: f64) -> Self {
        let g = self.response(omega).norm();
        let mut c = self.clone();
        c.k_f /= g;
        c.dc_gain /= g;
        c
    }

    /// `|F_cascade(jw)| / |F_ideal(jw)|`.
    pub fn gain_error_at(&self, omega: f64) -> f64 {
        self.response(omega).norm() / (self.k_f * omega.powf(-self.f))
    }

    /// Bilinear (Tustin) discretization at sampling period `ts`, one
    /// biquad-free first-order section per lag, with the DC gain applied to
    /// the first section.
    pub fn discretize(&self, ts: f64) -> Result<Vec<FirstOrderSection>> {
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(Error::domain(format!("sampling period must be positive, got {ts}")));
        }
        let mut out = Vec::with_capacity(self.n);
        for (i, (p, z)) in self.poles.iter().zip(&self.zeros).enumerate() {
            let cz = 2.0 / (ts * z);
            let cp = 2.0 / (ts * p);
            let g = if i == 0 { self.dc_gain } else { 1.0 };
            out.push(FirstOrderSection {
                b0: g * (1.0 + cz) / (1.0 + cp),
                b1: g * (1.0 - cz) / (1.0 + cp),
                a1: (1.0 - cp) / (1.0 + cp),
            });
        }
        Ok(out)
    }
}

/// `y[k] = b0 x[k] + b1 x[k-1] - a1 y[k-1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderSection {
    pub b0: f64,
    pub b1: f64,
    pub a1: f64,
}

impl FirstOrderSection {
    pub fn response(&self, omega: f64, ts: f64) -> Complex64 {
        let zinv = Complex64::from_polar(1.0, -omega * ts);
        (self.b0 + self.b1 * zinv) / (1.0 + self.a1 * zinv)
    }
}

/// Fractional element, ideal or realized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Controller {
    Ideal { k_f: f64, f: f64 },
    Cascade(LagCascade),
}

impl Controller {
    pub fn response(&self, omega: f64) -> Complex64 {
        match self {
            Controller::Ideal { k_f, f } => Complex64::from_polar(k_f * omega.powf(-f), -FRAC_PI_2 * f),
            Controller::Cascade(c) => c.response(omega),
        }
    }

    pub fn order(&self) -> f64 {
        match self {
            Controller::Ideal { f, .. } => *f,
            Controller::Cascade(c) => c.f,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Controller::Ideal { .. } => "ideal",
            Controller::Cascade(_) => "cascade",
        }
    }
}
