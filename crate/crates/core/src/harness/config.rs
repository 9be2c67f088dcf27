//! TOML experiment configuration: one document per study, every knob
//! defaulted to the study's standard setting.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::costs::{PerturbationTarget, RobustnessSpec};
use crate::error::{CrabError, Result};
use crate::optimizer::SimplexConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    /// Two coupled charge qubits driven to three named target states.
    TwoQubit,
    /// Ground-state transfer across the critical point of the collective
    /// spin model.
    LmgTransition,
    /// One-excitation transfer along a chain with a movable parabolic trap.
    ChainTransfer,
    /// Half-chain entanglement-entropy maximization in the collective model.
    LmgEntropy,
    /// Excitation-probability diagnostics of a linear ramp vs. a stored
    /// optimized pulse.
    LinearVsOptimal,
}

impl Study {
    pub fn name(&self) -> &'static str {
        match self {
            Study::TwoQubit => "two-qubit",
            Study::LmgTransition => "lmg-transition",
            Study::ChainTransfer => "chain-transfer",
            Study::LmgEntropy => "lmg-entropy",
            Study::LinearVsOptimal => "linear-vs-optimal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    /// |11>.
    Excited,
    /// Uniform superposition of the four basis states.
    Uniform,
    /// (|00> + |11>) / sqrt(2).
    Bell,
}

impl TargetKind {
    pub fn name(&self) -> &'static str {
        match self {
            TargetKind::Excited => "excited",
            TargetKind::Uniform => "uniform",
            TargetKind::Bell => "bell",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Charging energy of each qubit (two-qubit study).
    pub e_c: f64,
    /// Josephson energy; the default ratio e_j/e_c = -1.
    pub e_j: f64,
    /// System size for the spin models; sweeps override this per point.
    pub n_spins: usize,
    /// y-coupling anisotropy of the collective model.
    pub anisotropy: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { e_c: 1.0, e_j: -1.0, n_spins: 32, anisotropy: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct TimingConfig {
    /// Explicit evolution time; when absent the speed limit is scanned and
    /// `t_qsl_multiple` speed limits are used.
    pub total_time: Option<f64>,
    pub t_qsl_multiple: f64,
    /// Grid resolution of the minimum-gap scan.
    pub gap_scan_points: usize,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self { total_time: None, t_qsl_multiple: 2.0, gap_scan_points: 401 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct AnsatzConfig {
    /// Basis truncations to sweep.
    pub n_components: Vec<usize>,
    /// Frequency rules to sweep: false = principal harmonics 2*pi*k/T,
    /// true = seeded random deviations around them.
    pub randomized_frequencies: Vec<bool>,
    /// Treat the frequencies themselves as optimization variables.
    pub optimize_frequencies: bool,
    /// Start each instance from random amplitudes instead of the bare guess.
    pub random_start: bool,
    pub start_scale: f64,
    /// Constant base guess of the qubit-coupling control.
    pub guess_amplitude: f64,
    /// Initial transverse field of the collective-model ramp (ramps run
    /// field_initial -> 0). The achievable infidelity floor at fixed Nc
    /// rises steeply with this value (the faster the critical point at
    /// field 1 is crossed, the more harmonics the correction needs): at
    /// N = 32, Nc = 3 the floor is ~2e-4 from 1.2 but ~2e-3 from 2 and
    /// ~2e-2 from 10. The default 1.2 starts just above the transition.
    pub field_initial: f64,
    /// Constant trap-strength base guess C of the chain study.
    pub trap_strength: f64,
}

impl Default for AnsatzConfig {
    fn default() -> Self {
        Self {
            n_components: vec![3],
            randomized_frequencies: vec![false],
            optimize_frequencies: false,
            random_start: true,
            start_scale: 0.5,
            guess_amplitude: 1.0,
            field_initial: 1.2,
            trap_strength: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrimaryKind {
    Infidelity,
    FinalEnergy,
    NegEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RobustnessConfig {
    pub n_samples: usize,
    pub epsilon: f64,
    pub target: PerturbationTarget,
    pub seed: u64,
}

impl RobustnessConfig {
    pub fn to_spec(self) -> RobustnessSpec {
        RobustnessSpec {
            n_samples: self.n_samples,
            epsilon: self.epsilon,
            target: self.target,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct CostConfig {
    /// Figure of merit; the study default applies when absent.
    pub primary: Option<PrimaryKind>,
    pub alpha: f64,
    /// One pulse-power weight per control field; empty disables the term.
    pub fluence_weights: Vec<f64>,
    pub robustness: Option<RobustnessConfig>,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self { primary: None, alpha: 1.0, fluence_weights: Vec::new(), robustness: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Global evaluation budget, split evenly across instances.
    pub budget: usize,
    pub n_instances: usize,
    pub initial_step: f64,
    pub f_tolerance: f64,
    pub x_tolerance: f64,
    pub restart_on_collapse: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let s = SimplexConfig::default();
        Self {
            budget: 30_000,
            n_instances: 30,
            initial_step: s.initial_step,
            f_tolerance: s.f_tolerance,
            x_tolerance: s.x_tolerance,
            restart_on_collapse: s.restart_on_collapse,
        }
    }
}

impl OptimizerConfig {
    pub fn simplex(&self) -> SimplexConfig {
        SimplexConfig {
            initial_step: self.initial_step,
            f_tolerance: self.f_tolerance,
            x_tolerance: self.x_tolerance,
            max_evals: self.budget,
            restart_on_collapse: self.restart_on_collapse,
            ..SimplexConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct SweepConfig {
    /// System sizes (spin models). Empty = the single size in [model].
    pub sizes: Vec<usize>,
    /// Evolution times for the entropy study.
    pub times: Vec<f64>,
    /// Chain study only: sweep Nc as a fraction of the chain length
    /// (Nc = round(f * N), at least 1) instead of the absolute
    /// `n-components` list, so sizes are compared at matched Nc / N.
    pub nc_fractions: Vec<f64>,
    /// Target states for the two-qubit study. Empty = all three.
    pub targets: Vec<TargetKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Number of excitation-level columns in the trajectory export.
    pub k_levels: usize,
    /// Record a trajectory row every this many propagation steps.
    pub checkpoint_stride: usize,
    /// Stored optimized-pulse document to diagnose alongside the ramp.
    pub pulse: Option<String>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self { k_levels: 8, checkpoint_stride: 10, pulse: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub study: Study,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    /// Propagation steps; the study default applies when absent.
    #[serde(default)]
    pub n_steps: Option<usize>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub timing: TimingConfig,
    #[serde(default)]
    pub ansatz: AnsatzConfig,
    #[serde(default)]
    pub cost: CostConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

fn default_seed() -> u64 {
    2012
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Sizes to sweep; falls back to the single configured size.
    pub fn sizes(&self) -> Vec<usize> {
        if self.sweep.sizes.is_empty() {
            vec![self.model.n_spins]
        } else {
            self.sweep.sizes.clone()
        }
    }

    pub fn targets(&self) -> Vec<TargetKind> {
        if self.sweep.targets.is_empty() {
            vec![TargetKind::Excited, TargetKind::Uniform, TargetKind::Bell]
        } else {
            self.sweep.targets.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: String| -> CrabError {
            CrabError::Config(format!("{field}: {msg}"))
        };
        if self.ansatz.n_components.is_empty() {
            return Err(fail("ansatz.n-components", "must list at least one truncation".into()));
        }
        for &f in &self.sweep.nc_fractions {
            if !(f > 0.0) {
                return Err(fail("sweep.nc-fractions", format!("fractions must be positive, got {f}")));
            }
        }
        if self.ansatz.randomized_frequencies.is_empty() {
            return Err(fail("ansatz.randomized-frequencies", "must list at least one rule".into()));
        }
        if !(self.ansatz.start_scale >= 0.0) {
            return Err(fail("ansatz.start-scale", format!("must be non-negative, got {}", self.ansatz.start_scale)));
        }
        if self.optimizer.n_instances == 0 {
            return Err(fail("optimizer.n-instances", "must be at least 1".into()));
        }
        if self.optimizer.budget == 0 {
            return Err(fail("optimizer.budget", "must be at least 1".into()));
        }
        if self.timing.gap_scan_points < 2 {
            return Err(fail("timing.gap-scan-points", "needs at least 2 grid points".into()));
        }
        if let Some(t) = self.timing.total_time {
            if !(t > 0.0) {
                return Err(fail("timing.total-time", format!("must be positive, got {t}")));
            }
        }
        if !(self.timing.t_qsl_multiple > 0.0) {
            return Err(fail("timing.t-qsl-multiple", format!("must be positive, got {}", self.timing.t_qsl_multiple)));
        }
        if let Some(n) = self.n_steps {
            if n == 0 {
                return Err(fail("n-steps", "must be at least 1".into()));
            }
        }
        if self.model.n_spins == 0 {
            return Err(fail("model.n-spins", "must be at least 1".into()));
        }
        for &n in &self.sweep.sizes {
            if n == 0 {
                return Err(fail("sweep.sizes", "sizes must be positive".into()));
            }
        }
        match self.study {
            Study::TwoQubit => {
                if !self.sweep.sizes.is_empty() {
                    return Err(fail("sweep.sizes", "not applicable to the two-qubit study".into()));
                }
            }
            Study::ChainTransfer => {
                for &n in &self.sizes() {
                    if n < 2 {
                        return Err(fail("sweep.sizes", format!("chain needs at least 2 spins, got {n}")));
                    }
                }
                if !(self.ansatz.trap_strength > 0.0) {
                    return Err(fail("ansatz.trap-strength", "must be positive for the chain trap".into()));
                }
            }
            Study::LmgTransition | Study::LinearVsOptimal => {
                if !(self.ansatz.field_initial > 0.0) {
                    return Err(fail("ansatz.field-initial", "must be positive".into()));
                }
            }
            Study::LmgEntropy => {
                if self.sweep.times.is_empty() && self.timing.total_time.is_none() {
                    return Err(fail("sweep.times", "entropy study needs times (or timing.total-time)".into()));
                }
                for &n in &self.sizes() {
                    if n % 2 != 0 {
                        return Err(fail("sweep.sizes", format!("half bipartition needs an even size, got {n}")));
                    }
                }
            }
        }
        if self.study == Study::LinearVsOptimal {
            if self.diagnostics.k_levels == 0 {
                return Err(fail("diagnostics.k-levels", "must be at least 1".into()));
            }
            if self.diagnostics.checkpoint_stride == 0 {
                return Err(fail("diagnostics.checkpoint-stride", "must be at least 1".into()));
            }
        }
        if let Some(rob) = &self.cost.robustness {
            if rob.n_samples == 0 {
                return Err(fail("cost.robustness.n-samples", "must be at least 1".into()));
            }
            if !(rob.epsilon >= 0.0) {
                return Err(fail("cost.robustness.epsilon", "must be non-negative".into()));
            }
        }
        Ok(())
    }

    /// Propagation step count for a given total time: explicit config value
    /// or a study-tuned default.
    pub fn resolve_n_steps(&self) -> usize {
        if let Some(n) = self.n_steps {
            return n;
        }
        match self.study {
            Study::TwoQubit => 600,
            Study::LmgTransition => 2000,
            Study::ChainTransfer => 2000,
            Study::LmgEntropy => 1000,
            Study::LinearVsOptimal => 4000,
        }
    }
}
