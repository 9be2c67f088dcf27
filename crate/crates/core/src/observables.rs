//! Entanglement-entropy machinery: the Dicke-basis bipartite decomposition
//! for collective-spin states, a generic small-system partial trace used as
//! an oracle, and the von Neumann entropy.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::dynamics::QuantumState;
use crate::error::{CrabError, Result};

/// Split of N spins into a block of L and its complement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DickeBipartition {
    pub n_spins: usize,
    pub block_size: usize,
}

impl DickeBipartition {
    pub fn new(n_spins: usize, block_size: usize) -> Result<Self> {
        if block_size == 0 || block_size >= n_spins {
            return Err(CrabError::InvalidArgument(format!(
                "block size must satisfy 1 <= L <= N-1, got L={block_size}, N={n_spins}"
            )));
        }
        Ok(Self { n_spins, block_size })
    }

    /// Equal bipartition L = N/2 (N must be even).
    pub fn half(n_spins: usize) -> Result<Self> {
        if n_spins % 2 != 0 {
            return Err(CrabError::InvalidArgument(format!(
                "equal bipartition needs an even spin count, got {n_spins}"
            )));
        }
        Self::new(n_spins, n_spins / 2)
    }
}

/// Hermitian, unit-trace, positive-semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn new(entries: DMatrix<Complex64>) -> Result<Self> {
        let n = entries.nrows();
        if n != entries.ncols() {
            return Err(CrabError::InvalidArgument("density matrix must be square".into()));
        }
        let trace: Complex64 = (0..n).map(|i| entries[(i, i)]).sum();
        if (trace.re - 1.0).abs() > 1e-10 || trace.im.abs() > 1e-10 {
            return Err(CrabError::InvalidArgument(format!("trace {trace} deviates from 1")));
        }
        let mut herm = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                herm = herm.max((entries[(i, j)] - entries[(j, i)].conj()).norm());
            }
        }
        if herm > 1e-12 {
            return Err(CrabError::InvalidArgument(format!("hermiticity residual {herm:.3e}")));
        }
        let rho = Self { entries };
        let min = rho.eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -1e-10 {
            return Err(CrabError::InvalidArgument(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(rho)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut evs: Vec<f64> = self
            .entries
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        evs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        evs
    }
}

fn log_factorials(up_to: usize) -> Vec<f64> {
    let mut table = vec![0.0; up_to + 1];
    for i in 2..=up_to {
        table[i] = table[i - 1] + (i as f64).ln();
    }
    table
}

/// Schmidt weight p_{l,n} of the Dicke decomposition: the probability that a
/// block of L spins carries l of the n total up spins. Evaluated in
/// log-factorial space; zero outside the admissible range of l.
pub fn dicke_weight(n_spins: usize, block_size: usize, l: usize, n_up: usize) -> Result<f64> {
    let (n, big_l) = (n_spins, block_size);
    if n_up > n {
        return Err(CrabError::InvalidArgument(format!("n must satisfy 0 <= n <= N, got n={n_up}, N={n}")));
    }
    if big_l == 0 || big_l >= n {
        return Err(CrabError::InvalidArgument(format!("block size {big_l} out of range for N={n}")));
    }
    let env = n - big_l;
    if l > big_l || l > n_up || n_up - l > env {
        return Ok(0.0);
    }
    let lf = log_factorials(n);
    let log_p = lf[big_l] + lf[env] + lf[n_up] + lf[n - n_up]
        - lf[l]
        - lf[big_l - l]
        - lf[n_up - l]
        - lf[env - (n_up - l)]
        - lf[n];
    Ok(log_p.exp())
}

/// Reduced density matrix of a block of L spins for a state in the maximal
/// Dicke sector (amplitudes indexed by total up-spin count n = 0..=N):
/// rho[l, l'] = sum_e c_{l+e} conj(c_{l'+e}) sqrt(p_{l,l+e} p_{l',l'+e}).
pub fn reduced_density_dicke(state: &QuantumState, part: &DickeBipartition) -> Result<DensityMatrix> {
    let n = part.n_spins;
    if state.dim() != n + 1 {
        return Err(CrabError::DimensionMismatch { expected: n + 1, got: state.dim() });
    }
    let big_l = part.block_size;
    let env = n - big_l;
    let c = state.amplitudes();
    // sqrt weights, indexed [l][e]
    let mut sq = vec![vec![0.0f64; env + 1]; big_l + 1];
    for (l, row) in sq.iter_mut().enumerate() {
        for (e, w) in row.iter_mut().enumerate() {
            *w = dicke_weight(n, big_l, l, l + e)?.sqrt();
        }
    }
    let mut rho = DMatrix::zeros(big_l + 1, big_l + 1);
    for l in 0..=big_l {
        for lp in 0..=big_l {
            let mut acc = Complex64::new(0.0, 0.0);
            for e in 0..=env {
                acc += c[l + e] * c[lp + e].conj() * (sq[l][e] * sq[lp][e]);
            }
            rho[(l, lp)] = acc;
        }
    }
    DensityMatrix::new(rho)
}

/// Von Neumann entropy in bits: -sum_i lambda_i log2 lambda_i, with
/// eigenvalues below 1e-14 contributing zero.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    let evs = rho.eigenvalues();
    let trace: f64 = evs.iter().sum();
    if (trace - 1.0).abs() > 1e-8 {
        return Err(CrabError::InvalidArgument(format!("eigenvalue sum {trace} deviates from 1")));
    }
    let mut s = 0.0;
    for ev in evs {
        let ev = ev.max(0.0); // clamp -1e-10..0 rounding noise
        if ev > 1e-14 {
            s -= ev * ev.log2();
        }
    }
    Ok(s.max(0.0))
}

/// Exact partial trace of a 2^N pure state over the complement of
/// `block_sites`. Site 0 is the leftmost spin of the ket label, so
/// |10...0> is basis index 2^(N-1). Guarded to N <= 12.
pub fn reduced_density_generic(state: &QuantumState, n_sites: usize, block_sites: &[usize]) -> Result<DensityMatrix> {
    if n_sites > 12 {
        return Err(CrabError::ResourceLimit(format!(
            "generic partial trace supports at most 12 sites, got {n_sites}"
        )));
    }
    if state.dim() != 1 << n_sites {
        return Err(CrabError::DimensionMismatch { expected: 1 << n_sites, got: state.dim() });
    }
    let mut seen = vec![false; n_sites];
    for &s in block_sites {
        if s >= n_sites || seen[s] {
            return Err(CrabError::InvalidArgument(format!("bad block site {s}")));
        }
        seen[s] = true;
    }
    let env_sites: Vec<usize> = (0..n_sites).filter(|s| !seen[*s]).collect();
    let bit = |site: usize| n_sites - 1 - site;
    let assemble = |bits_block: usize, bits_env: usize| -> usize {
        let mut idx = 0usize;
        for (k, &s) in block_sites.iter().enumerate() {
            if bits_block >> (block_sites.len() - 1 - k) & 1 == 1 {
                idx |= 1 << bit(s);
            }
        }
        for (k, &s) in env_sites.iter().enumerate() {
            if bits_env >> (env_sites.len().saturating_sub(1 + k)) & 1 == 1 {
                idx |= 1 << bit(s);
            }
        }
        idx
    };
    let db = 1usize << block_sites.len();
    let de = 1usize << env_sites.len();
    let amps = state.amplitudes();
    let mut rho = DMatrix::zeros(db, db);
    for b in 0..db {
        for bp in 0..db {
            let mut acc = Complex64::new(0.0, 0.0);
            for e in 0..de {
                acc += amps[assemble(b, e)] * amps[assemble(bp, e)].conj();
            }
            rho[(b, bp)] = acc;
        }
    }
    DensityMatrix::new(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dicke_state(amps: Vec<Complex64>) -> QuantumState {
        QuantumState::from_unnormalized(DVector::from_vec(amps)).unwrap()
    }

    fn re(xs: &[f64]) -> Vec<Complex64> {
        xs.iter().map(|x| Complex64::new(*x, 0.0)).collect()
    }

    /// Embed the Dicke state with n up spins into the full 2^N space as the
    /// normalized symmetric superposition.
    fn embed_dicke(n: usize, amps: &DVector<Complex64>) -> QuantumState {
        let mut full = DVector::zeros(1usize << n);
        for b in 0..(1usize << n) {
            let ups = (b as u32).count_ones() as usize;
            let binom: f64 = (0..ups).map(|i| (n - i) as f64 / (i + 1) as f64).product();
            full[b] += amps[ups] / binom.sqrt();
        }
        QuantumState::from_unnormalized(full).unwrap()
    }

    #[test]
    fn singlet_pair_weights() {
        // (|ud> + |du>)/sqrt(2): one up spin shared between two sites
        assert!((dicke_weight(2, 1, 0, 1).unwrap() - 0.5).abs() < 1e-14);
        assert!((dicke_weight(2, 1, 1, 1).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn all_down_weights() {
        assert!((dicke_weight(6, 3, 0, 0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(dicke_weight(6, 3, 1, 0).unwrap(), 0.0);
        assert!(dicke_weight(6, 3, 0, 7).is_err());
    }

    #[test]
    fn weights_normalize_for_all_block_sizes() {
        for n in 2..=30usize {
            for l in 1..n {
                for n_up in 0..=n {
                    let sum: f64 = (0..=l).map(|k| dicke_weight(n, l, k, n_up).unwrap()).sum();
                    assert!((sum - 1.0).abs() < 1e-10, "N={n} L={l} n={n_up}: sum={sum}");
                }
            }
        }
    }

    #[test]
    fn polarized_state_is_unentangled() {
        let n = 8;
        let mut amps = vec![Complex64::new(0.0, 0.0); n + 1];
        amps[n] = Complex64::new(1.0, 0.0);
        let rho = reduced_density_dicke(&dicke_state(amps), &DickeBipartition::half(n).unwrap()).unwrap();
        let s = von_neumann_entropy(&rho).unwrap();
        assert!(s.abs() < 1e-12);
        // rank-1 projector
        let evs = rho.eigenvalues();
        assert!((evs[evs.len() - 1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_spin_triplet_m0_is_maximally_mixed() {
        let rho = reduced_density_dicke(
            &dicke_state(re(&[0.0, 1.0, 0.0])),
            &DickeBipartition::new(2, 1).unwrap(),
        )
        .unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 0.5 } else { 0.0 };
                assert!((rho.entries()[(i, j)].re - expect).abs() < 1e-14);
                assert!(rho.entries()[(i, j)].im.abs() < 1e-14);
            }
        }
        assert!((von_neumann_entropy(&rho).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dicke_path_matches_brute_force_partial_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for n in [4usize, 6, 8] {
            for _ in 0..17 {
                let amps = DVector::from_iterator(
                    n + 1,
                    (0..=n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))),
                );
                let state = QuantumState::from_unnormalized(amps).unwrap();
                for l in [1, n / 2, n - 1] {
                    let part = DickeBipartition::new(n, l).unwrap();
                    let rho_d = reduced_density_dicke(&state, &part).unwrap();
                    let full = embed_dicke(n, state.amplitudes());
                    let block: Vec<usize> = (0..l).collect();
                    let rho_g = reduced_density_generic(&full, n, &block).unwrap();
                    // the generic rho is over bitstrings; project onto symmetric
                    // block states to compare spectra instead of entries
                    let s_d = von_neumann_entropy(&rho_d).unwrap();
                    let s_g = von_neumann_entropy(&rho_g).unwrap();
                    assert!((s_d - s_g).abs() < 1e-8, "N={n} L={l}: {s_d} vs {s_g}");
                }
            }
        }
    }

    #[test]
    fn dicke_entries_match_symmetric_subspace_of_generic_trace() {
        // entrywise check: the generic reduced matrix, expressed in the
        // block's symmetric basis, must equal the Dicke-path matrix
        let n = 6;
        let l = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let amps = DVector::from_iterator(
                n + 1,
                (0..=n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))),
            );
            let state = QuantumState::from_unnormalized(amps).unwrap();
            let part = DickeBipartition::new(n, l).unwrap();
            let rho_d = reduced_density_dicke(&state, &part).unwrap();
            let full = embed_dicke(n, state.amplitudes());
            let rho_g = reduced_density_generic(&full, n, &[0, 1, 2]).unwrap();
            // symmetric basis vectors of the 3-spin block
            let dim_b = 1usize << l;
            let mut sym = DMatrix::<Complex64>::zeros(dim_b, l + 1);
            for b in 0..dim_b {
                let ups = (b as u32).count_ones() as usize;
                let binom: f64 = (0..ups).map(|i| (l - i) as f64 / (i + 1) as f64).product();
                sym[(b, ups)] = Complex64::new(1.0 / binom.sqrt(), 0.0);
            }
            let projected = sym.adjoint() * rho_g.entries() * &sym;
            for i in 0..=l {
                for j in 0..=l {
                    assert!(
                        (projected[(i, j)] - rho_d.entries()[(i, j)]).norm() < 1e-10,
                        "entry ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn entropy_examples() {
        // pure projector
        let rho = DensityMatrix::new(DMatrix::from_row_slice(
            2,
            2,
            &re(&[1.0, 0.0, 0.0, 0.0]),
        ))
        .unwrap();
        assert_eq!(von_neumann_entropy(&rho).unwrap(), 0.0);
        // maximally mixed d = 4
        let rho = DensityMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(re(&[0.25; 4])))).unwrap();
        assert!((von_neumann_entropy(&rho).unwrap() - 2.0).abs() < 1e-12);
        // Bell pair reduced to one qubit
        let bell = QuantumState::from_unnormalized(DVector::from_vec(re(&[1.0, 0.0, 0.0, 1.0]))).unwrap();
        let rho = reduced_density_generic(&bell, 2, &[0]).unwrap();
        assert!((von_neumann_entropy(&rho).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn generic_trace_examples() {
        // product state
        let prod = QuantumState::basis_state(8, 5).unwrap();
        let rho = reduced_density_generic(&prod, 3, &[1]).unwrap();
        assert!(von_neumann_entropy(&rho).unwrap().abs() < 1e-12);
        // GHZ on 4 qubits: every bipartition gives 1 bit
        let mut amps = vec![Complex64::new(0.0, 0.0); 16];
        amps[0] = Complex64::new(1.0, 0.0);
        amps[15] = Complex64::new(1.0, 0.0);
        let ghz = QuantumState::from_unnormalized(DVector::from_vec(amps)).unwrap();
        for block in [vec![0], vec![0, 1], vec![1, 3], vec![0, 2, 3]] {
            let rho = reduced_density_generic(&ghz, 4, &block).unwrap();
            let s = von_neumann_entropy(&rho).unwrap();
            assert!((s - 1.0).abs() < 1e-10, "block {block:?}: {s}");
        }
        // resource guard
        let big = QuantumState::basis_state(1 << 13, 0).unwrap();
        assert!(matches!(
            reduced_density_generic(&big, 13, &[0]),
            Err(CrabError::ResourceLimit(_))
        ));
    }

    #[test]
    fn entropy_symmetry_and_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [4usize, 6, 8] {
            for _ in 0..10 {
                let amps = DVector::from_iterator(
                    n + 1,
                    (0..=n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))),
                );
                let state = QuantumState::from_unnormalized(amps).unwrap();
                for l in 1..n {
                    let s_l = von_neumann_entropy(
                        &reduced_density_dicke(&state, &DickeBipartition::new(n, l).unwrap()).unwrap(),
                    )
                    .unwrap();
                    let s_r = von_neumann_entropy(
                        &reduced_density_dicke(&state, &DickeBipartition::new(n, n - l).unwrap()).unwrap(),
                    )
                    .unwrap();
                    assert!((s_l - s_r).abs() < 1e-10, "N={n} L={l}");
                    assert!(s_l >= 0.0 && s_l <= ((l + 1) as f64).log2() + 1e-12);
                }
            }
        }
    }

    #[test]
    fn density_matrix_validation() {
        // non-unit trace
        let bad = DMatrix::from_diagonal(&DVector::from_vec(re(&[0.7, 0.7])));
        assert!(DensityMatrix::new(bad).is_err());
        // non-hermitian
        let bad = DMatrix::from_row_slice(2, 2, &re(&[0.5, 0.3, -0.3, 0.5]));
        assert!(DensityMatrix::new(bad).is_err());
    }
}
