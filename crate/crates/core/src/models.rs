//! Hamiltonian builders for the three study systems, each in its
//! symmetry-restricted working basis.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{minimum_gap_scan, QuantumState};
use crate::error::{CrabError, Result};
use crate::linalg;

/// A family of Hermitian matrices parametrized by instantaneous control
/// values. Builders are pure functions of their inputs.
pub trait HamiltonianModel: Sync {
    /// Dimension of the working basis.
    fn dim(&self) -> usize;
    /// Number of independent control fields.
    fn control_arity(&self) -> usize;
    /// Real symmetric matrix at the given control values.
    fn build(&self, controls: &[f64]) -> Result<DMatrix<f64>>;
    /// Indices of the symmetry sector reachable by the dynamics from the
    /// study's initial state, when the model conserves one.
    fn reachable_sector(&self) -> Option<Vec<usize>> {
        None
    }
}

fn check_arity(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(CrabError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Two capacitively coupled Josephson charge qubits; the qubit-qubit
/// coupling is the single control. Basis ordering |00>, |01>, |10>, |11>.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoQubitJosephson {
    pub e_c: f64,
    pub e_j: f64,
}

impl Default for TwoQubitJosephson {
    fn default() -> Self {
        Self { e_c: 1.0, e_j: -1.0 }
    }
}

impl TwoQubitJosephson {
    /// H = E_C (sz x 1 + 1 x sz) + E_J (sx x 1 + 1 x sx) + G E_C sz x sz.
    pub fn hamiltonian(&self, gamma_ctrl: f64) -> DMatrix<f64> {
        let (ec, ej) = (self.e_c, self.e_j);
        let mut h = DMatrix::zeros(4, 4);
        // sz eigenvalue +1 on |0>, -1 on |1>
        let sz = [1.0, -1.0];
        for b in 0..4usize {
            let (s1, s2) = (sz[b >> 1], sz[b & 1]);
            h[(b, b)] = ec * (s1 + s2) + gamma_ctrl * ec * s1 * s2;
            // sx flips one qubit at a time
            h[(b ^ 2, b)] += ej;
            h[(b ^ 1, b)] += ej;
        }
        h
    }
}

impl HamiltonianModel for TwoQubitJosephson {
    fn dim(&self) -> usize {
        4
    }
    fn control_arity(&self) -> usize {
        1
    }
    fn build(&self, controls: &[f64]) -> Result<DMatrix<f64>> {
        check_arity(1, controls.len())?;
        Ok(self.hamiltonian(controls[0]))
    }
}

/// Lipkin-Meshkov-Glick model in the maximal-spin Dicke sector
/// (S = N/2, basis m = -N/2..N/2, dimension N + 1). The transverse field
/// is the single control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmgDicke {
    pub n_spins: usize,
    pub gamma: f64,
    pub coupling: f64,
}

impl LmgDicke {
    pub fn new(n_spins: usize, gamma: f64) -> Result<Self> {
        if n_spins == 0 {
            return Err(CrabError::InvalidArgument("LMG needs at least one spin".into()));
        }
        Ok(Self { n_spins, gamma, coupling: 1.0 })
    }

    fn spin(&self) -> f64 {
        self.n_spins as f64 / 2.0
    }

    /// m value of basis index i.
    fn m_of(&self, i: usize) -> f64 {
        i as f64 - self.spin()
    }

    /// Sx in the Dicke basis (tridiagonal, real symmetric).
    pub fn spin_x(&self) -> DMatrix<f64> {
        let dim = self.n_spins + 1;
        let s = self.spin();
        let mut sx = DMatrix::zeros(dim, dim);
        for i in 0..dim - 1 {
            let m = self.m_of(i);
            let a = (s * (s + 1.0) - m * (m + 1.0)).sqrt() / 2.0;
            sx[(i + 1, i)] = a;
            sx[(i, i + 1)] = a;
        }
        sx
    }

    /// H = -(J/N)[Sx^2 + gamma Sy^2] - G Sz, with
    /// Sy^2 = S(S+1) - Sz^2 - Sx^2.
    pub fn hamiltonian(&self, gamma_ctrl: f64) -> DMatrix<f64> {
        let dim = self.n_spins + 1;
        let s = self.spin();
        let sx = self.spin_x();
        let sx2 = &sx * &sx;
        let mut h = -(self.coupling / self.n_spins as f64) * (&sx2 * (1.0 - self.gamma));
        for i in 0..dim {
            let m = self.m_of(i);
            h[(i, i)] += -(self.coupling / self.n_spins as f64) * self.gamma * (s * (s + 1.0) - m * m)
                - gamma_ctrl * m;
        }
        h
    }
}

impl HamiltonianModel for LmgDicke {
    fn dim(&self) -> usize {
        self.n_spins + 1
    }
    fn control_arity(&self) -> usize {
        1
    }
    fn build(&self, controls: &[f64]) -> Result<DMatrix<f64>> {
        check_arity(1, controls.len())?;
        Ok(self.hamiltonian(controls[0]))
    }
    /// The interaction couples m to m +- 2 only, so the parity of the index
    /// is conserved; the sector containing the polarized state |m = +N/2>
    /// (index N) is the reachable one.
    fn reachable_sector(&self) -> Option<Vec<usize>> {
        let start = self.n_spins % 2;
        Some((start..=self.n_spins).step_by(2).collect())
    }
}

/// Spin chain with uniform nearest-neighbor exchange and a parabolic
/// magnetic field B_n = C (x_n - d)^2, reduced to the one-excitation
/// sector (dimension N). Controls are (d, C).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinChainTransfer {
    pub n_spins: usize,
    pub coupling: f64,
    pub positions: Vec<f64>,
}

impl SpinChainTransfer {
    /// Unit lattice spacing: x_n = n, n = 1..=N.
    pub fn new(n_spins: usize) -> Result<Self> {
        if n_spins < 2 {
            return Err(CrabError::InvalidArgument("chain needs at least two spins".into()));
        }
        Ok(Self {
            n_spins,
            coupling: 1.0,
            positions: (1..=n_spins).map(|n| n as f64).collect(),
        })
    }

    /// One-excitation sector matrix. The exchange term gives hopping -J
    /// between neighbors plus the path-graph degree on the diagonal; the
    /// field term contributes 2 B_k at the excited site. Constant multiples
    /// of the identity (including the control-dependent sum of all B_n) are
    /// dropped: they only produce a global phase.
    pub fn hamiltonian(&self, d: f64, c: f64) -> DMatrix<f64> {
        let n = self.n_spins;
        let j = self.coupling;
        let mut h = DMatrix::zeros(n, n);
        for k in 0..n {
            let degree = if k == 0 || k == n - 1 { 1.0 } else { 2.0 };
            let x = self.positions[k];
            h[(k, k)] = j * degree + 2.0 * c * (x - d) * (x - d);
            if k + 1 < n {
                h[(k + 1, k)] = -j;
                h[(k, k + 1)] = -j;
            }
        }
        h
    }
}

impl HamiltonianModel for SpinChainTransfer {
    fn dim(&self) -> usize {
        self.n_spins
    }
    fn control_arity(&self) -> usize {
        2
    }
    fn build(&self, controls: &[f64]) -> Result<DMatrix<f64>> {
        check_arity(2, controls.len())?;
        Ok(self.hamiltonian(controls[0], controls[1]))
    }
}

/// Minimum gap along a control path and the derived speed-limit times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemTiming {
    pub gap_min: f64,
    pub t_qsl: f64,
    pub total_time: f64,
}

impl ProblemTiming {
    /// T_QSL = pi / gap; default total time is `multiple` speed limits.
    pub fn from_gap(gap_min: f64, multiple: f64) -> Result<Self> {
        if !(gap_min > 0.0) {
            return Err(CrabError::InvalidArgument(format!("gap must be positive, got {gap_min}")));
        }
        let t_qsl = PI / gap_min;
        let total_time = multiple * t_qsl;
        if !(total_time > 0.0) {
            return Err(CrabError::InvalidArgument(format!("total_time must be positive, got {total_time}")));
        }
        Ok(Self { gap_min, t_qsl, total_time })
    }
}

/// Lowest eigenvector of H(controls), restricted to `sector` when given,
/// with the phase fixed so the largest-magnitude component is positive.
pub fn ground_state(
    model: &dyn HamiltonianModel,
    controls: &[f64],
    sector: Option<&[usize]>,
) -> Result<QuantumState> {
    let h = model.build(controls)?;
    linalg::check_hermitian(&h, 1e-12)?;
    let dim = model.dim();
    let mut full = DVector::zeros(dim);
    match sector {
        Some(idx) => {
            let sub = h.select_rows(idx.iter()).select_columns(idx.iter());
            let (_, vecs) = linalg::eigh_sorted(sub);
            let mut v = DVector::from_iterator(idx.len(), vecs.column(0).iter().copied());
            linalg::fix_phase(&mut v);
            for (k, &i) in idx.iter().enumerate() {
                full[i] = v[k];
            }
        }
        None => {
            let (_, vecs) = linalg::eigh_sorted(h);
            full = DVector::from_iterator(dim, vecs.column(0).iter().copied());
            linalg::fix_phase(&mut full);
        }
    }
    QuantumState::new(full.map(|x| Complex64::new(x, 0.0)))
}

/// Scan the grid for the minimum sector gap and derive T_QSL = pi / gap and
/// the default total time 2 T_QSL.
pub fn quantum_speed_limit(model: &dyn HamiltonianModel, grid: &[Vec<f64>]) -> Result<ProblemTiming> {
    let scan = minimum_gap_scan(model, grid)?;
    ProblemTiming::from_gap(scan.gap_min, 2.0)
}
