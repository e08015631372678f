//! Dynamic stiffness models of the human joint, alone and coupled to the
//! exoskeleton inertia.
//!
//! All models share the form
//!
//! ```text
//! S_h(jw) = (K_h - M_h w^2) + j (B_h w + H_h)
//! ```
//!
//! M1 drops the hysteretic term `H_h`, M2 drops the viscous term `B_h`, M3
//! keeps both, and the reduced model derives `H_h` from `K_h` through a
//! [`PowerLaw`]. The hysteretic term is only defined for `w > 0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scaling::PowerLaw;

/// Impedance parameters of one subject in one condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointParams {
    /// Real stiffness, Nm/rad.
    #[serde(rename = "K_h")]
    pub k_h: f64,
    /// Hysteretic damping, Nm/rad.
    #[serde(rename = "H_h")]
    pub h_h: f64,
    /// Viscous damping, Nm*s/rad.
    #[serde(rename = "B_h")]
    pub b_h: f64,
    /// Inertia, kg*m^2.
    #[serde(rename = "M_h")]
    pub m_h: f64,
}

impl JointParams {
    /// Checked constructor for physically meaningful parameters.
    pub fn new(k_h: f64, h_h: f64, b_h: f64, m_h: f64) -> Result<Self> {
        let p = JointParams { k_h, h_h, b_h, m_h };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.k_h, self.h_h, self.b_h, self.m_h];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("joint parameters must be finite"));
        }
        if self.k_h <= 0.0 {
            return Err(Error::domain(format!("K_h must be positive, got {}", self.k_h)));
        }
        if self.m_h <= 0.0 {
            return Err(Error::domain(format!("M_h must be positive, got {}", self.m_h)));
        }
        if self.h_h < 0.0 || self.b_h < 0.0 {
            return Err(Error::domain(format!(
                "damping must be non-negative, got H_h = {}, B_h = {}",
                self.h_h, self.b_h
            )));
        }
        Ok(())
    }

    /// Fitted parameters may come out with negative damping; these are kept
    /// as-is and flagged here.
    pub fn damping_flags(&self) -> DampingFlags {
        DampingFlags {
            negative_h: self.h_h < 0.0,
            negative_b: self.b_h < 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DampingFlags {
    pub negative_h: bool,
    pub negative_b: bool,
}

impl DampingFlags {
    pub fn any(&self) -> bool {
        self.negative_h || self.negative_b
    }
}

/// Exoskeleton coupling: device inertia and the amplification factor that
/// attenuates it to `M_e / alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingConfig {
    /// Exoskeleton inertia, kg*m^2.
    #[serde(rename = "M_e")]
    pub m_e: f64,
    /// Amplification factor.
    pub alpha: f64,
}

impl CouplingConfig {
    pub fn new(m_e: f64, alpha: f64) -> Result<Self> {
        let c = CouplingConfig { m_e, alpha };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m_e > 0.0 && self.m_e.is_finite()) {
            return Err(Error::domain(format!("M_e must be positive, got {}", self.m_e)));
        }
        if !(self.alpha >= 1.0 && self.alpha.is_finite()) {
            return Err(Error::domain(format!("alpha must be >= 1, got {}", self.alpha)));
        }
        Ok(())
    }

    /// Inertia felt by the subject, `M_e / alpha`.
    pub fn perceived_inertia(&self) -> f64 {
        self.m_e / self.alpha
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    /// Mass, spring and viscous damper.
    M1,
    /// Mass and complex (hysteretic) spring.
    M2,
    /// Mass, complex spring and viscous damper.
    M3,
    /// M2 with `H_h` tied to `K_h` through a power law.
    Reduced,
}

impl ModelKind {
    pub const FITTED: [ModelKind; 3] = [ModelKind::M1, ModelKind::M2, ModelKind::M3];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::M1 => "M1",
            ModelKind::M2 => "M2",
            ModelKind::M3 => "M3",
            ModelKind::Reduced => "Reduced",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Complex dynamic stiffness at one positive frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexResponse {
    /// rad/s
    pub omega: f64,
    /// Nm/rad
    pub value: Complex64,
}

impl ComplexResponse {
    pub fn magnitude(&self) -> f64 {
        self.value.norm()
    }

    pub fn phase_deg(&self) -> f64 {
        self.value.arg().to_degrees()
    }
}

/// Closed force loop of the series elastic actuator as a unity-DC-gain
/// second-order low pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeaModel {
    /// Natural frequency, rad/s.
    pub omega_sea: f64,
    /// Damping ratio.
    pub zeta_sea: f64,
}

impl Default for SeaModel {
    /// 10 Hz force bandwidth with a well-damped inner loop.
    fn default() -> Self {
        SeaModel { omega_sea: 2.0 * PI * 10.0, zeta_sea: 0.7 }
    }
}

impl SeaModel {
    pub fn new(omega_sea: f64, zeta_sea: f64) -> Result<Self> {
        let s = SeaModel { omega_sea, zeta_sea };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_sea > 0.0 && self.omega_sea.is_finite()) {
            return Err(Error::domain(format!("omega_sea must be positive, got {}", self.omega_sea)));
        }
        if !(self.zeta_sea > 0.0 && self.zeta_sea <= 1.0) {
            return Err(Error::domain(format!("zeta_sea must be in (0, 1], got {}", self.zeta_sea)));
        }
        Ok(())
    }

    /// `G(jw) = w_s^2 / (w_s^2 - w^2 + 2 j zeta w_s w)`.
    pub fn response(&self, omega: f64) -> Complex64 {
        let ws2 = self.omega_sea * self.omega_sea;
        let den = Complex64::new(ws2 - omega * omega, 2.0 * self.zeta_sea * self.omega_sea * omega);
        Complex64::new(ws2, 0.0) / den
    }
}

fn check_omega(omega: f64) -> Result<()> {
    if omega > 0.0 && omega.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "hysteretic stiffness is defined for positive frequencies only, got omega = {omega}"
        )))
    }
}

/// Evaluates the model without checking `omega` or parameter invariants.
pub(crate) fn stiffness_unchecked(p: &JointParams, kind: ModelKind, h_h: f64, omega: f64) -> Complex64 {
    let (b, h) = match kind {
        ModelKind::M1 => (p.b_h, 0.0),
        ModelKind::M2 | ModelKind::Reduced => (0.0, h_h),
        ModelKind::M3 => (p.b_h, h_h),
    };
    Complex64::new(p.k_h - p.m_h * omega * omega, b * omega + h)
}

fn hysteretic_term(p: &JointParams, kind: ModelKind, law: Option<&PowerLaw>) -> Result<f64> {
    match kind {
        ModelKind::Reduced => law
            .map(|l| l.predict_h(p.k_h))
            .ok_or_else(|| Error::config("the reduced model needs a power law")),
        _ => Ok(p.h_h),
    }
}

/// Dynamic stiffness of the human alone, `S_h(jw)`.
///
/// For [`ModelKind::Reduced`] the stored `H_h` is ignored and replaced by
/// the power-law prediction at `K_h`.
pub fn human_stiffness(
    params: &JointParams,
    kind: ModelKind,
    law: Option<&PowerLaw>,
    omega: f64,
) -> Result<ComplexResponse> {
    check_omega(omega)?;
    let h = hysteretic_term(params, kind, law)?;
    Ok(ComplexResponse { omega, value: stiffness_unchecked(params, kind, h, omega) })
}

/// Dynamic stiffness of the human coupled to the attenuated exoskeleton
/// inertia, `S_h(jw) - (M_e / alpha) w^2`.
pub fn coupled_stiffness(
    params: &JointParams,
    coupling: &CouplingConfig,
    kind: ModelKind,
    law: Option<&PowerLaw>,
    omega: f64,
) -> Result<ComplexResponse> {
    let human = human_stiffness(params, kind, law, omega)?;
    let inertia = coupling.perceived_inertia() * omega * omega;
    Ok(ComplexResponse { omega, value: human.value - inertia })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaturalFrequencies {
    /// `sqrt(K_h / M_h)`, rad/s.
    pub omega_h: f64,
    /// `sqrt(K_h / (M_h + M_e))`, rad/s.
    pub omega_he: f64,
}

impl NaturalFrequencies {
    /// Geometric mean of the two, where the proportional rule places the
    /// gain crossover.
    pub fn midpoint(&self) -> f64 {
        (self.omega_h * self.omega_he).sqrt()
    }
}

/// Natural frequencies of the free and the exoskeleton-coupled joint
/// (coupling evaluated at `alpha = 1`).
pub fn natural_frequencies(params: &JointParams, coupling: &CouplingConfig) -> NaturalFrequencies {
    NaturalFrequencies {
        omega_h: (params.k_h / params.m_h).sqrt(),
        omega_he: (params.k_h / (params.m_h + coupling.m_e)).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossFactor {
    pub c_h: f64,
    /// Damping ratio, `c_h / 2`.
    pub zeta: f64,
    /// Low-frequency phase, `atan(c_h)` in degrees.
    pub phase_deg: f64,
}

/// Loss factor, damping ratio and low-frequency phase at stiffness `k_h`.
pub fn loss_factor_and_ratio(k_h: f64, law: &PowerLaw) -> Result<LossFactor> {
    if !(k_h > 0.0) {
        return Err(Error::domain(format!("K_h must be positive, got {k_h}")));
    }
    let c_h = law.loss_factor(k_h);
    Ok(LossFactor { c_h, zeta: c_h / 2.0, phase_deg: c_h.atan().to_degrees() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m2_avg() -> JointParams {
        JointParams::new(16.35, 5.80, 0.0, 0.11).unwrap()
    }

    #[test]
    fn m2_low_frequency_value() {
        let s = human_stiffness(&m2_avg(), ModelKind::M2, None, 0.01).unwrap();
        // 16.35 - 0.11e-4 + 5.80j; atan(5.80 / 16.35) = 19.53 deg
        assert!((s.value.re - 16.349989).abs() < 1e-9);
        assert_eq!(s.value.im, 5.80);
        assert!((s.phase_deg() - 19.5316).abs() < 1e-3);
    }

    #[test]
    fn m2_at_natural_frequency_is_pure_imaginary() {
        let p = m2_avg();
        let w = (p.k_h / p.m_h).sqrt();
        let s = human_stiffness(&p, ModelKind::M2, None, w).unwrap();
        assert!(s.value.re.abs() < 1e-12);
        assert!((s.value.im - 5.80).abs() < 1e-15);
    }

    #[test]
    fn m1_phase_vanishes_at_dc() {
        let p = JointParams::new(20.0, 4.0, 0.8, 0.11).unwrap();
        let s = human_stiffness(&p, ModelKind::M1, None, 1e-4).unwrap();
        assert!(s.value.arg().abs() < 1e-3);
        let s2 = human_stiffness(&p, ModelKind::M2, None, 1e-4).unwrap();
        assert!((s2.value.arg() - (4.0f64 / 20.0).atan()).abs() < 1e-3);
    }

    #[test]
    fn rejects_non_positive_omega() {
        for w in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                human_stiffness(&m2_avg(), ModelKind::M2, None, w),
                Err(Error::Domain(_))
            ));
        }
    }

    #[test]
    fn reduced_model_needs_law_and_ignores_stored_h() {
        let p = m2_avg();
        assert!(matches!(
            human_stiffness(&p, ModelKind::Reduced, None, 1.0),
            Err(Error::Config(_))
        ));
        let law = PowerLaw::new(-0.23, 0.90);
        let mut q = p;
        q.h_h = 1234.0;
        let a = human_stiffness(&p, ModelKind::Reduced, Some(&law), 3.0).unwrap();
        let b = human_stiffness(&q, ModelKind::Reduced, Some(&law), 3.0).unwrap();
        assert_eq!(a, b);
        assert!((a.value.im - law.predict_h(16.35)).abs() < 1e-12);
    }

    #[test]
    fn coupled_natural_frequency_zeroes_real_part() {
        let p = JointParams::new(32.96, 0.0, 0.0, 0.11).unwrap();
        let c = CouplingConfig::new(1.01, 1.0).unwrap();
        let w = (32.96f64 / 1.12).sqrt();
        assert!((w - 5.4248).abs() < 1e-4);
        let s = coupled_stiffness(&p, &c, ModelKind::M2, None, w).unwrap();
        assert!(s.value.re.abs() < 1e-12);
    }

    #[test]
    fn coupled_matches_human_at_dc_and_alpha_leaves_imaginary_part() {
        let p = m2_avg();
        let c1 = CouplingConfig::new(1.01, 1.0).unwrap();
        let c4 = CouplingConfig::new(1.01, 4.0).unwrap();
        let w = 1e-5;
        let h = human_stiffness(&p, ModelKind::M2, None, w).unwrap();
        let s = coupled_stiffness(&p, &c1, ModelKind::M2, None, w).unwrap();
        assert!((h.value - s.value).norm() < 1e-9);
        for w in crate::log_grid(1e-2, 1e3, 10) {
            let a = coupled_stiffness(&p, &c1, ModelKind::M3, None, w).unwrap();
            let b = coupled_stiffness(&p, &c4, ModelKind::M3, None, w).unwrap();
            assert_eq!(a.value.im, b.value.im);
        }
    }

    #[test]
    fn natural_frequency_examples() {
        let p = JointParams::new(32.96, 0.0, 0.0, 0.11).unwrap();
        let c = CouplingConfig::new(1.01, 1.0).unwrap();
        let nf = natural_frequencies(&p, &c);
        // sqrt(32.96 / 0.11) = 17.310, sqrt(32.96 / 1.12) = 5.4248
        assert!((nf.omega_h - 17.3098).abs() < 1e-3);
        assert!((nf.omega_he - 5.4248).abs() < 1e-3);

        let tiny = CouplingConfig { m_e: 1e-12, alpha: 1.0 };
        let nf0 = natural_frequencies(&p, &tiny);
        assert!((nf0.omega_he - nf0.omega_h).abs() < 1e-8);

        let q = JointParams { k_h: 4.0 * p.k_h, ..p };
        let nf4 = natural_frequencies(&q, &c);
        assert!((nf4.omega_h - 2.0 * nf.omega_h).abs() < 1e-12);
        assert!((nf4.omega_he - 2.0 * nf.omega_he).abs() < 1e-12);
    }

    #[test]
    fn damping_ratio_trend() {
        let law = PowerLaw::new(-0.23, 0.90);
        let lo = loss_factor_and_ratio(12.40, &law).unwrap();
        let hi = loss_factor_and_ratio(65.12, &law).unwrap();
        assert!((lo.zeta - 0.23).abs() < 0.005, "{}", lo.zeta);
        assert!((hi.zeta - 0.19).abs() < 0.005, "{}", hi.zeta);
        assert!((lo.phase_deg - lo.c_h.atan().to_degrees()).abs() < 1e-12);

        let flat = PowerLaw::new(-0.4, 1.0);
        for k in [1.0, 10.0, 300.0] {
            let lf = loss_factor_and_ratio(k, &flat).unwrap();
            assert!((lf.c_h - 10f64.powf(-0.4)).abs() < 1e-14);
        }
        assert!(loss_factor_and_ratio(0.0, &law).is_err());
    }

    #[test]
    fn sea_examples() {
        let sea = SeaModel::default();
        assert_eq!(sea.response(0.0), Complex64::new(1.0, 0.0));

        let r = sea.response(sea.omega_sea);
        assert!((r.norm() - 1.0 / (2.0 * sea.zeta_sea)).abs() < 1e-12);
        assert!((r.arg().to_degrees() + 90.0).abs() < 1e-9);

        // Hand evaluation at w = 10: den = (3943.84 - 100) + j 879.2,
        // |den| = 3943.11, so |G| = 1.00019 and the phase is -12.88 deg.
        let g = SeaModel::new(62.8, 0.7).unwrap().response(10.0);
        assert!((g.norm() - 1.0002).abs() < 1e-4, "{}", g.norm());
        assert!((g.arg().to_degrees() + 12.9).abs() < 0.05);
    }

    #[test]
    fn param_validation() {
        assert!(JointParams::new(0.0, 1.0, 0.0, 0.1).is_err());
        assert!(JointParams::new(1.0, 1.0, 0.0, 0.0).is_err());
        assert!(JointParams::new(1.0, -1.0, 0.0, 0.1).is_err());
        assert!(CouplingConfig::new(1.0, 0.5).is_err());
        assert!(SeaModel::new(10.0, 1.5).is_err());
        let fitted = JointParams { k_h: 10.0, h_h: -0.2, b_h: 0.1, m_h: 0.1 };
        assert!(fitted.damping_flags().negative_h);
        assert!(!fitted.damping_flags().negative_b);
    }

    #[test]
    fn json_field_names() {
        let v = serde_json::to_value(m2_avg()).unwrap();
        for key in ["K_h", "H_h", "B_h", "M_h"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let c = serde_json::to_value(CouplingConfig::new(1.01, 2.0).unwrap()).unwrap();
        assert!(c.get("M_e").is_some() && c.get("alpha").is_some());
        let s = serde_json::to_value(SeaModel::default()).unwrap();
        assert!(s.get("omega_sea").is_some() && s.get("zeta_sea").is_some());
    }
}
