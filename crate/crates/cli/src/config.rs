use std::path::Path;

use joint_impedance::fractional::CascadeLayout;
use joint_impedance::loop_analysis::DEFAULT_PROBES;
use joint_impedance::model::SeaModel;
use joint_impedance::protocol::{
    reference_cohort, AmplitudeSchedule, GroundTruthSubject, PeriodTiming, DEFAULT_M_E, DEFAULT_M_H,
    DEFAULT_NOISE_ANGLE, DEFAULT_NOISE_TORQUE,
};
use joint_impedance::scaling::DampingLaw;
use joint_impedance::{Error, Result, FORMAT_VERSION};
use serde::{Deserialize, Serialize};

/// Run configuration. Every block is optional; unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub format: String,
    pub seed: u64,
    pub synth: SynthConfig,
    pub sea: SeaModel,
    pub design: DesignConfig,
    pub analyze: AnalyzeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            format: FORMAT_VERSION.to_string(),
            seed: 1,
            synth: SynthConfig::default(),
            sea: SeaModel::default(),
            design: DesignConfig::default(),
            analyze: AnalyzeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Explicit subjects; when empty the built-in cohort is used.
    pub subjects: Vec<GroundTruthSubject>,
    /// How many built-in cohort subjects to use.
    pub cohort_size: usize,
    pub noise_std_torque: f64,
    pub noise_std_angle: f64,
    pub schedule: AmplitudeSchedule,
    pub timing: PeriodTiming,
    /// Sampling interval, s.
    pub dt: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            subjects: Vec::new(),
            cohort_size: 1,
            noise_std_torque: DEFAULT_NOISE_TORQUE,
            noise_std_angle: DEFAULT_NOISE_ANGLE,
            schedule: AmplitudeSchedule::default(),
            timing: PeriodTiming::default(),
            dt: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignConfig {
    /// Guaranteed phase margin, deg.
    pub phi_deg: f64,
    /// Damping law; taken from the `powerlaw` output when absent.
    pub law: Option<DampingLaw>,
    /// `[K_low, K_high]`, Nm/rad; taken from the identified fits when absent.
    pub k_range: Option<(f64, f64)>,
    #[serde(rename = "M_h")]
    pub m_h: f64,
    #[serde(rename = "M_e")]
    pub m_e: f64,
    pub cascade: CascadeLayout,
    /// Rescale the ladder to unit gain at the nominal crossover.
    pub normalize_cascade: bool,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            phi_deg: 10.8,
            law: None,
            k_range: None,
            m_h: DEFAULT_M_H,
            m_e: DEFAULT_M_E,
            cascade: CascadeLayout::default(),
            normalize_cascade: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeConfig {
    pub sweep_points: usize,
    /// Allowance for the ladder's phase error when certifying, deg.
    pub tolerance_deg: f64,
    /// Probe frequencies for the amplification table, rad/s.
    pub probes: Vec<f64>,
    /// Bode output grid density.
    pub bode_points_per_decade: usize,
    /// Run the marginal-order search.
    pub marginal_search: bool,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig {
            sweep_points: 25,
            tolerance_deg: 5.0,
            probes: DEFAULT_PROBES.to_vec(),
            bode_points_per_decade: 50,
            marginal_search: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Json { path: path.into(), source: e })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "config format '{}' is not supported (expected '{FORMAT_VERSION}')",
                self.format
            )));
        }
        self.sea.validate()?;
        self.synth.timing.validate()?;
        if !(self.synth.dt > 0.0 && self.synth.dt <= joint_impedance::protocol::MAX_DT) {
            return Err(Error::Config(format!("synth.dt must be in (0, 1e-3] s, got {}", self.synth.dt)));
        }
        for s in &self.synth.subjects {
            s.validate()?;
        }
        if self.analyze.sweep_points < joint_impedance::loop_analysis::MIN_SWEEP_POINTS {
            return Err(Error::Config(format!(
                "analyze.sweep_points must be at least {}",
                joint_impedance::loop_analysis::MIN_SWEEP_POINTS
            )));
        }
        Ok(())
    }

    /// Subjects to synthesize, with `count` overriding the cohort size.
    pub fn subjects(&self, count: Option<usize>) -> Result<Vec<GroundTruthSubject>> {
        if !self.synth.subjects.is_empty() {
            if count.is_some() {
                return Err(Error::Config("--subjects cannot be combined with explicit synth.subjects".into()));
            }
            return Ok(self.synth.subjects.clone());
        }
        let n = count.unwrap_or(self.synth.cohort_size);
        let all = reference_cohort(self.seed, self.synth.noise_std_torque, self.synth.noise_std_angle);
        if n == 0 || n > all.len() {
            return Err(Error::Config(format!("subject count must be in 1..={}, got {n}", all.len())));
        }
        Ok(all.into_iter().take(n).collect())
    }
}
