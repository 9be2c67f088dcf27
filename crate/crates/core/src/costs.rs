//! Cost-function catalogue: infidelity, final energy, negative
//! entanglement entropy, fluence penalties, and the weighted composite
//! objective, plus an uncertainty-averaged variant.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{propagate, PropagationConfig, QuantumState};
use crate::error::{CrabError, Result};
use crate::models::HamiltonianModel;
use crate::observables::{reduced_density_dicke, von_neumann_entropy, DickeBipartition};
use crate::pulse::ControlField;

/// The figure of merit the composite cost weights with alpha.
#[derive(Debug, Clone)]
pub enum PrimaryCost {
    /// 1 - |<psi|target>|^2.
    Infidelity { target: QuantumState },
    /// <psi|H_p|psi>.
    FinalEnergy { hamiltonian: DMatrix<f64> },
    /// -S(psi) over the given bipartition of a Dicke-sector state.
    NegEntropy { bipartition: DickeBipartition },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationTarget {
    InitialState,
    ControlAmplitude,
}

/// Uncertainty model for the averaged cost: `n_samples` draws with
/// magnitude parameter uniform in [-epsilon, epsilon].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RobustnessSpec {
    pub n_samples: usize,
    pub epsilon: f64,
    pub target: PerturbationTarget,
    pub seed: u64,
}

/// Selection and weighting of the cost terms:
/// F = alpha * f + sum_i beta_i * C_i(Gamma_i).
#[derive(Debug, Clone)]
pub struct CostSpec {
    pub primary: PrimaryCost,
    pub alpha: f64,
    /// One fluence weight beta_i per control field; zero disables the term.
    pub fluence_weights: Vec<f64>,
    pub robustness: Option<RobustnessSpec>,
}

impl CostSpec {
    pub fn new(primary: PrimaryCost, alpha: f64, fluence_weights: Vec<f64>) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(CrabError::InvalidArgument(format!("alpha must be positive, got {alpha}")));
        }
        if fluence_weights.iter().any(|b| *b < 0.0) {
            return Err(CrabError::InvalidArgument("fluence weights must be non-negative".into()));
        }
        Ok(Self { primary, alpha, fluence_weights, robustness: None })
    }

    pub fn with_robustness(mut self, robustness: RobustnessSpec) -> Self {
        self.robustness = Some(robustness);
        self
    }
}

/// 1 - |<psi|target>|^2, in [0, 1].
pub fn infidelity(psi: &QuantumState, target: &QuantumState) -> Result<f64> {
    if psi.dim() != target.dim() {
        return Err(CrabError::DimensionMismatch { expected: target.dim(), got: psi.dim() });
    }
    Ok((1.0 - psi.fidelity(target)).clamp(0.0, 1.0))
}

/// Re <psi|H_p|psi>; the imaginary residual must vanish to 1e-10.
pub fn final_energy(psi: &QuantumState, h_p: &DMatrix<f64>) -> Result<f64> {
    if psi.dim() != h_p.nrows() || h_p.nrows() != h_p.ncols() {
        return Err(CrabError::DimensionMismatch { expected: h_p.nrows(), got: psi.dim() });
    }
    let a = psi.amplitudes();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..h_p.nrows() {
        let mut row = Complex64::new(0.0, 0.0);
        for j in 0..h_p.ncols() {
            row += h_p[(i, j)] * a[j];
        }
        acc += a[i].conj() * row;
    }
    if acc.im.abs() > 1e-10 * acc.re.abs().max(1.0) {
        return Err(CrabError::Internal(format!("energy has imaginary residual {:.3e}", acc.im)));
    }
    Ok(acc.re)
}

/// Fluence C = int_0^T |Gamma(t)|^2 dt by composite trapezoid on
/// `n_quadrature` intervals.
pub fn fluence(control: &ControlField, n_quadrature: usize) -> Result<f64> {
    if n_quadrature < 2 {
        return Err(CrabError::InvalidArgument("fluence needs at least 2 quadrature intervals".into()));
    }
    let tt = control.total_time();
    let h = tt / n_quadrature as f64;
    let sq = |t: f64| -> Result<f64> {
        let v = control.eval(t)?;
        Ok(v * v)
    };
    let mut acc = 0.5 * (sq(0.0)? + sq(tt)?);
    for i in 1..n_quadrature {
        acc += sq(i as f64 * h)?;
    }
    Ok(acc * h)
}

/// Value of the primary term f for a final state.
pub fn primary_value(primary: &PrimaryCost, psi: &QuantumState) -> Result<f64> {
    match primary {
        PrimaryCost::Infidelity { target } => infidelity(psi, target),
        PrimaryCost::FinalEnergy { hamiltonian } => final_energy(psi, hamiltonian),
        PrimaryCost::NegEntropy { bipartition } => {
            let rho = reduced_density_dicke(psi, bipartition)?;
            Ok(-von_neumann_entropy(&rho)?)
        }
    }
}

/// F = alpha f + sum_i beta_i C_i for an already-propagated final state.
pub fn composite_cost(
    spec: &CostSpec,
    final_state: &QuantumState,
    controls: &[ControlField],
    fluence_quadrature: usize,
) -> Result<f64> {
    if !spec.fluence_weights.is_empty() && spec.fluence_weights.len() != controls.len() {
        return Err(CrabError::DimensionMismatch {
            expected: controls.len(),
            got: spec.fluence_weights.len(),
        });
    }
    let mut total = spec.alpha * primary_value(&spec.primary, final_state)?;
    for (beta, control) in spec.fluence_weights.iter().zip(controls) {
        if *beta > 0.0 {
            total += beta * fluence(control, fluence_quadrature)?;
        }
    }
    Ok(total)
}

fn perturbed_state(psi0: &QuantumState, angle: f64, rng: &mut ChaCha8Rng) -> Result<QuantumState> {
    let dim = psi0.dim();
    let raw = DVector::from_iterator(
        dim,
        (0..dim).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))),
    );
    // orthogonalize against psi0 and rotate by the sampled angle
    let ov: Complex64 = psi0.amplitudes().iter().zip(raw.iter()).map(|(a, b)| a.conj() * b).sum();
    let orth = raw - psi0.amplitudes() * ov;
    let norm = orth.norm();
    if norm < 1e-12 {
        return Ok(psi0.clone());
    }
    let unit = orth / Complex64::new(norm, 0.0);
    let rotated = psi0.amplitudes() * Complex64::new(angle.cos(), 0.0) + unit * Complex64::new(angle.sin(), 0.0);
    QuantumState::new(rotated)
}

/// Uncertainty-averaged composite cost: the mean of `composite_cost` over
/// seeded perturbations of the initial state or the control amplitudes.
/// Without a robustness spec (or with epsilon = 0 draws) every sample equals
/// the unperturbed cost.
pub fn robust_cost(
    spec: &CostSpec,
    model: &dyn HamiltonianModel,
    controls: &[ControlField],
    psi0: &QuantumState,
    total_time: f64,
    config: &PropagationConfig,
) -> Result<f64> {
    let fluence_quadrature = 4 * config.n_steps;
    let Some(rob) = spec.robustness else {
        let prop = propagate(model, controls, psi0, total_time, config)?;
        return composite_cost(spec, &prop.final_state, controls, fluence_quadrature);
    };
    if rob.n_samples == 0 {
        return Err(CrabError::InvalidArgument("robustness needs n_samples >= 1".into()));
    }
    let mut seeder = ChaCha8Rng::seed_from_u64(rob.seed);
    let mut acc = 0.0;
    for _ in 0..rob.n_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seeder.next_u64());
        let delta: f64 = if rob.epsilon > 0.0 { rng.gen_range(-rob.epsilon..=rob.epsilon) } else { 0.0 };
        let (fields, state): (Vec<ControlField>, QuantumState) = match rob.target {
            PerturbationTarget::ControlAmplitude => {
                (controls.iter().map(|c| c.scaled(1.0 + delta)).collect(), psi0.clone())
            }
            PerturbationTarget::InitialState => (controls.to_vec(), perturbed_state(psi0, delta, &mut rng)?),
        };
        let prop = propagate(model, &fields, &state, total_time, config)?;
        acc += composite_cost(spec, &prop.final_state, &fields, fluence_quadrature)?;
    }
    Ok(acc / rob.n_samples as f64)
}
