//! Time-dependent Schrödinger propagation (hbar = 1) for piecewise-sampled
//! controls, plus instantaneous-spectrum diagnostics.
//!
//! Each step applies the exact exponential of the Hermitian matrix built at
//! the midpoint control values, so the evolution is exactly unitary up to
//! rounding. Models that declare a conserved symmetry sector are propagated
//! inside that sector when the initial state is supported there; the blocks
//! do not mix, so the result is identical.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{CrabError, Result};
use crate::linalg;
use crate::models::HamiltonianModel;
use crate::pulse::ControlField;

/// Complex amplitude vector of unit norm in the model's working basis.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amplitudes: DVector<Complex64>,
}

impl QuantumState {
    /// Wrap an amplitude vector; the Euclidean norm must be 1 within 1e-10.
    pub fn new(amplitudes: DVector<Complex64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(CrabError::InvalidArgument(format!(
                "state norm {norm} deviates from 1 by more than 1e-10"
            )));
        }
        Ok(Self { amplitudes })
    }

    /// Normalize an arbitrary nonzero vector.
    pub fn from_unnormalized(amplitudes: DVector<Complex64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm < 1e-14 {
            return Err(CrabError::InvalidArgument("cannot normalize a (near-)zero vector".into()));
        }
        Ok(Self { amplitudes: amplitudes / Complex64::new(norm, 0.0) })
    }

    /// Computational basis state |index> in the given dimension.
    pub fn basis_state(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(CrabError::DimensionMismatch { expected: dim, got: index });
        }
        let mut v = DVector::zeros(dim);
        v[index] = Complex64::new(1.0, 0.0);
        Ok(Self { amplitudes: v })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// <self|other>.
    pub fn overlap(&self, other: &QuantumState) -> Complex64 {
        self.amplitudes.iter().zip(other.amplitudes.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    /// |<self|other>|^2.
    pub fn fidelity(&self, other: &QuantumState) -> f64 {
        self.overlap(other).norm_sqr()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PropagationConfig {
    pub n_steps: usize,
    /// Record a state every this many steps (the initial state is always the
    /// first checkpoint).
    pub checkpoint_stride: Option<usize>,
}

impl PropagationConfig {
    pub fn new(n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(CrabError::InvalidArgument("n_steps must be at least 1".into()));
        }
        Ok(Self { n_steps, checkpoint_stride: None })
    }

    pub fn with_stride(mut self, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(CrabError::InvalidArgument("checkpoint_stride must be at least 1".into()));
        }
        self.checkpoint_stride = Some(stride);
        Ok(self)
    }
}

/// Default step count: max(2000, ceil(40 T |H|)), with |H| the spectral
/// range at the given control values.
pub fn default_n_steps(model: &dyn HamiltonianModel, initial_controls: &[f64], total_time: f64) -> Result<usize> {
    let evs = linalg::eigvalsh_sorted(model.build(initial_controls)?);
    let range = evs[evs.len() - 1] - evs[0];
    Ok(2000usize.max((40.0 * total_time * range).ceil() as usize))
}

/// Result of a propagation: the final state and any checkpointed trajectory.
#[derive(Debug, Clone)]
pub struct Propagation {
    pub final_state: QuantumState,
    pub checkpoints: Vec<(f64, QuantumState)>,
}

/// Instantaneous excitation probabilities over the eigenlevels of H at a
/// fixed set of control values. Degenerate levels are merged, so an entry
/// may cover a cluster of eigenstates.
#[derive(Debug, Clone)]
pub struct LevelPopulations {
    pub probabilities: Vec<f64>,
    pub total_excitation: f64,
}

// psi <- V exp(-i E dt) V^T psi, with V real orthogonal.
fn apply_exponential(
    values: &DVector<f64>,
    vectors: &DMatrix<f64>,
    dt: f64,
    psi: &mut DVector<Complex64>,
    coeffs: &mut DVector<Complex64>,
) {
    let n = psi.len();
    for k in 0..n {
        let col = vectors.column(k);
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            acc += col[i] * psi[i];
        }
        coeffs[k] = acc * Complex64::from_polar(1.0, -values[k] * dt);
    }
    psi.fill(Complex64::new(0.0, 0.0));
    for k in 0..n {
        let col = vectors.column(k);
        let ck = coeffs[k];
        for i in 0..n {
            psi[i] += col[i] * ck;
        }
    }
}

/// Solve i d/dt |psi> = H[controls(t)] |psi> over [0, total_time] by
/// midpoint piecewise-constant exponentiation.
pub fn propagate(
    model: &dyn HamiltonianModel,
    controls: &[ControlField],
    psi0: &QuantumState,
    total_time: f64,
    config: &PropagationConfig,
) -> Result<Propagation> {
    if controls.len() != model.control_arity() {
        return Err(CrabError::DimensionMismatch {
            expected: model.control_arity(),
            got: controls.len(),
        });
    }
    if psi0.dim() != model.dim() {
        return Err(CrabError::DimensionMismatch { expected: model.dim(), got: psi0.dim() });
    }
    if !(total_time > 0.0) {
        return Err(CrabError::InvalidArgument(format!("total_time must be positive, got {total_time}")));
    }
    for field in controls {
        if (field.total_time() - total_time).abs() > 1e-9 * total_time.max(1.0) {
            return Err(CrabError::InvalidArgument(format!(
                "control field duration {} does not match total_time {total_time}",
                field.total_time()
            )));
        }
    }

    // conserved-sector fast path
    let sector: Option<Vec<usize>> = model.reachable_sector().filter(|idx| {
        let mut in_sector = vec![false; model.dim()];
        for &i in idx {
            in_sector[i] = true;
        }
        let leak: f64 = psi0
            .amplitudes()
            .iter()
            .enumerate()
            .filter(|(i, _)| !in_sector[*i])
            .map(|(_, a)| a.norm_sqr())
            .sum();
        leak < 1e-14
    });

    let n_steps = config.n_steps;
    let dt = total_time / n_steps as f64;
    let dim = sector.as_ref().map_or(model.dim(), |s| s.len());

    let mut psi: DVector<Complex64> = match &sector {
        Some(idx) => DVector::from_iterator(dim, idx.iter().map(|&i| psi0.amplitudes()[i])),
        None => psi0.amplitudes().clone(),
    };
    let mut coeffs = DVector::zeros(dim);
    let mut values = Vec::with_capacity(controls.len());

    let embed = |psi: &DVector<Complex64>| -> Result<QuantumState> {
        let full = match &sector {
            Some(idx) => {
                let mut v = DVector::zeros(model.dim());
                for (k, &i) in idx.iter().enumerate() {
                    v[i] = psi[k];
                }
                v
            }
            None => psi.clone(),
        };
        QuantumState::new(full)
    };

    let mut checkpoints = Vec::new();
    if config.checkpoint_stride.is_some() {
        checkpoints.push((0.0, psi0.clone()));
    }

    for j in 0..n_steps {
        let t_mid = (j as f64 + 0.5) * dt;
        values.clear();
        for field in controls {
            values.push(field.eval(t_mid)?);
        }
        let h = model.build(&values)?;
        linalg::check_hermitian(&h, 1e-12)?;
        let h = match &sector {
            Some(idx) => h.select_rows(idx.iter()).select_columns(idx.iter()),
            None => h,
        };
        let eig = h.symmetric_eigen();
        apply_exponential(&eig.eigenvalues, &eig.eigenvectors, dt, &mut psi, &mut coeffs);
        if let Some(stride) = config.checkpoint_stride {
            if (j + 1) % stride == 0 {
                checkpoints.push(((j + 1) as f64 * dt, embed(&psi)?));
            }
        }
    }

    let norm = psi.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(CrabError::Internal(format!("propagation norm drifted to {norm}")));
    }
    Ok(Propagation { final_state: embed(&psi)?, checkpoints })
}

/// Lowest `k_levels` eigenpairs of H(control_values), eigenvalues ascending,
/// eigenvector phases fixed so the largest-magnitude component is positive.
pub fn instantaneous_spectrum(
    model: &dyn HamiltonianModel,
    control_values: &[f64],
    k_levels: usize,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if k_levels == 0 || k_levels > model.dim() {
        return Err(CrabError::InvalidArgument(format!(
            "k_levels must be in 1..={}, got {k_levels}",
            model.dim()
        )));
    }
    let h = model.build(control_values)?;
    linalg::check_hermitian(&h, 1e-12)?;
    let (values, vectors) = linalg::eigh_sorted(h);
    let dim = model.dim();
    let mut out = DMatrix::zeros(dim, k_levels);
    for k in 0..k_levels {
        let mut v = DVector::from_iterator(dim, vectors.column(k).iter().copied());
        linalg::fix_phase(&mut v);
        out.set_column(k, &v);
    }
    Ok((values.iter().take(k_levels).copied().collect(), out))
}

/// P_i = |<phi_i|psi>|^2 over the instantaneous eigenstates, with
/// populations inside a degenerate cluster (relative tolerance 1e-9) summed;
/// total excitation is 1 - P_ground.
pub fn excitation_probabilities(
    state: &QuantumState,
    model: &dyn HamiltonianModel,
    control_values: &[f64],
    k_levels: usize,
) -> Result<LevelPopulations> {
    if state.dim() != model.dim() {
        return Err(CrabError::DimensionMismatch { expected: model.dim(), got: state.dim() });
    }
    let (values, vectors) = instantaneous_spectrum(model, control_values, k_levels)?;
    let mut probabilities = Vec::new();
    let mut cluster_p = 0.0;
    for k in 0..k_levels {
        let col = vectors.column(k);
        let ov: Complex64 = col.iter().zip(state.amplitudes().iter()).map(|(v, a)| v * a).sum();
        cluster_p += ov.norm_sqr();
        let next_degenerate = k + 1 < k_levels && {
            let scale = values[k].abs().max(values[k + 1].abs()).max(1.0);
            (values[k + 1] - values[k]).abs() <= 1e-9 * scale
        };
        if !next_degenerate {
            probabilities.push(cluster_p);
            cluster_p = 0.0;
        }
    }
    let total_excitation = 1.0 - probabilities[0];
    Ok(LevelPopulations { probabilities, total_excitation })
}

#[derive(Debug, Clone)]
pub struct GapScan {
    pub gap_min: f64,
    pub argmin: Vec<f64>,
}

/// Minimum E_1 - E_0 over the control grid, computed inside the model's
/// reachable symmetry sector; ties keep the first occurrence.
pub fn minimum_gap_scan(model: &dyn HamiltonianModel, control_grid: &[Vec<f64>]) -> Result<GapScan> {
    if control_grid.is_empty() {
        return Err(CrabError::InvalidArgument("gap scan grid must be non-empty".into()));
    }
    let sector = model.reachable_sector();
    let mut best: Option<GapScan> = None;
    for point in control_grid {
        let h = model.build(point)?;
        let h = match &sector {
            Some(idx) => h.select_rows(idx.iter()).select_columns(idx.iter()),
            None => h,
        };
        let evs = linalg::eigvalsh_sorted(h);
        if evs.len() < 2 {
            return Err(CrabError::InvalidArgument("gap needs at least a 2-dimensional sector".into()));
        }
        let gap = evs[1] - evs[0];
        if best.as_ref().map_or(true, |b| gap < b.gap_min) {
            best = Some(GapScan { gap_min: gap, argmin: point.clone() });
        }
    }
    Ok(best.unwrap())
}
