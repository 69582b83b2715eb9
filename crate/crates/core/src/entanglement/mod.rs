//! Entanglement measures for bipartite states.

mod eof;

pub use eof::{average_entropy, eof_from_generators, eof_optimize, Ensemble, EofOptions, EofResult};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fcs::Fcs;
use crate::linalg::{
    self, hermitian_eig_unchecked, kron, partial_transpose_matrix, pauli_y, trace_norm, von_neumann_entropy,
    DensityMatrix,
};

/// `eta(x) = -x ln x`, with `eta(0) = 0`.
pub fn eta(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -x * x.ln()
    }
}

/// Binary entropy in nats.
pub fn binary_entropy(x: f64) -> f64 {
    eta(x) + eta(1.0 - x)
}

fn require_two_qubits(sigma: &DensityMatrix) -> Result<()> {
    if sigma.dims() != [2, 2] {
        return Err(Error::DimensionMismatch(format!("two-qubit state required, got dims {:?}", sigma.dims())));
    }
    Ok(())
}

/// Wootters concurrence. The square roots of the eigenvalues of
/// `sigma (sy⊗sy) sigma^* (sy⊗sy)` are taken from the Hermitian form
/// `sqrt(sigma) sigma~ sqrt(sigma)`, which has the same spectrum.
pub fn concurrence(sigma: &DensityMatrix) -> Result<f64> {
    require_two_qubits(sigma)?;
    let yy = kron(&pauli_y(), &pauli_y());
    let flipped = &yy * sigma.matrix().conjugate() * &yy;
    let sqrt_sigma = sigma.eigen().map(|w| w.max(0.0).sqrt());
    let r = &sqrt_sigma * flipped * &sqrt_sigma;
    let mut mu: Vec<f64> = hermitian_eig_unchecked(&r).values.iter().map(|w| w.max(0.0).sqrt()).collect();
    mu.sort_by(|a, b| b.total_cmp(a));
    Ok((mu[0] - mu[1] - mu[2] - mu[3]).clamp(0.0, 1.0))
}

/// EoF of a two-qubit state as a function of its concurrence (nats).
pub fn eof_from_concurrence_value(c: f64) -> f64 {
    let c = c.clamp(0.0, 1.0);
    binary_entropy((1.0 + (1.0 - c * c).sqrt()) / 2.0)
}

pub fn eof_from_concurrence(sigma: &DensityMatrix) -> Result<f64> {
    Ok(eof_from_concurrence_value(concurrence(sigma)?))
}

/// Tolerance below which a partial-transpose eigenvalue counts as negative.
pub const TOL_PPT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PptResult {
    pub min_pt_eigenvalue: f64,
    /// `(||sigma^{T_B}||_1 - 1) / 2`
    pub negativity: f64,
    pub is_ppt: bool,
}

/// Partial transpose on the second factor.
pub fn ppt_check(sigma: &DensityMatrix) -> Result<PptResult> {
    if sigma.dims().len() != 2 {
        return Err(Error::DimensionMismatch(format!("bipartite state required, got dims {:?}", sigma.dims())));
    }
    let pt = partial_transpose_matrix(sigma.matrix(), sigma.dims(), 1)?;
    let e = hermitian_eig_unchecked(&pt);
    let min_pt_eigenvalue = e.values[0];
    let norm: f64 = e.values.iter().map(|w| w.abs()).sum();
    let negativity = ((norm - 1.0) / 2.0).max(0.0);
    Ok(PptResult { min_pt_eigenvalue, negativity, is_ppt: min_pt_eigenvalue >= -TOL_PPT })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Separability {
    Separable,
    Entangled,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SeparabilityDecision {
    pub verdict: Separability,
    pub ppt: PptResult,
    pub rank: usize,
}

/// Decides whether the spin-memory state `rho_{A⊗B}` is entangled. Its rank
/// is `b <= max(d, b)`, so a positive partial transpose implies separability.
pub fn memory_separability(fcs: &Fcs) -> Result<SeparabilityDecision> {
    let rab = fcs.memory_state()?;
    let ppt = ppt_check(&rab)?;
    let verdict = if ppt.is_ppt { Separability::Separable } else { Separability::Entangled };
    Ok(SeparabilityDecision { verdict, ppt, rank: rab.rank() })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FannesBound {
    pub bound: f64,
    pub trace_distance: f64,
    /// `false` when `T > 1/e`, outside the range where `eta` is increasing.
    pub monotone_regime: bool,
}

/// `(ln d + 2) T + eta(T)` with `T = ||rho - sigma||_1`.
pub fn fannes_bound(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<FannesBound> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", rho.dim(), sigma.dim())));
    }
    let t = rho.trace_distance(sigma);
    Ok(fannes_bound_at(t, rho.dim()))
}

pub fn fannes_bound_at(trace_distance: f64, dim: usize) -> FannesBound {
    let t = trace_distance;
    FannesBound {
        bound: ((dim as f64).ln() + 2.0) * t + eta(t),
        trace_distance: t,
        monotone_regime: t <= (-1.0f64).exp(),
    }
}

/// Continuity envelope for the EoF in the trace distance `T`.
///
/// Uses the fidelity form `9 delta ln(d_A) + 2 eta~(delta)` with
/// `delta = sqrt(1 - F)`. Since `F >= (1 - T/2)^2`, `delta <= sqrt(T - T^2/4)`,
/// and the envelope is evaluated at that upper value. `eta~` is `eta` capped
/// at its maximum `1/e`, so the envelope is non-decreasing in `T`.
pub fn nielsen_envelope(trace_distance: f64, dim_a: usize) -> f64 {
    let t = trace_distance.clamp(0.0, 2.0);
    let delta = (t - t * t / 4.0).max(0.0).sqrt().min(1.0);
    let inv_e = (-1.0f64).exp();
    let capped = if delta <= inv_e { eta(delta) } else { inv_e };
    9.0 * delta * (dim_a as f64).ln() + 2.0 * capped
}

pub fn nielsen_eof_continuity(sigma: &DensityMatrix, other: &DensityMatrix) -> Result<f64> {
    if sigma.dims() != other.dims() || sigma.dims().len() != 2 {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", sigma.dims(), other.dims())));
    }
    let t = trace_norm(&(sigma.matrix() - other.matrix()));
    Ok(nielsen_envelope(t, sigma.dims()[0]))
}

/// Entropy of the first factor of a bipartite pure or mixed state.
pub fn marginal_entropy(sigma: &DensityMatrix) -> Result<f64> {
    Ok(von_neumann_entropy(&sigma.partial_trace(&[0])?))
}

/// Separable mixture `sum_k p_k rho_k ⊗ tau_k`.
pub fn separable_mixture(terms: &[(f64, DensityMatrix, DensityMatrix)]) -> Result<DensityMatrix> {
    let first = terms.first().ok_or_else(|| Error::InvalidDensityMatrix("empty mixture".into()))?;
    let dims = vec![first.1.dim(), first.2.dim()];
    let n = dims[0] * dims[1];
    let m = terms
        .iter()
        .fold(linalg::ComplexMatrix::zeros(n, n), |acc, (p, a, b)| acc + kron(a.matrix(), b.matrix()) * linalg::re(*p));
    DensityMatrix::new(m, dims)
}
