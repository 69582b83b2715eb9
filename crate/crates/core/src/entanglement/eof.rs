//! Entanglement of formation by optimizing over ensembles.
//!
//! Every pure-state ensemble of `sigma` is `psi_l = sum_j U[l, j] e_j` for an
//! `L x r` isometry `U`, where `e_j = sqrt(w_j) |w_j>` is the eigen-ensemble and
//! `r` the rank. The average marginal entropy
//!
//! ```text
//! f(U) = sum_l p_l S(rho_l / p_l),   rho_l = sum_{j,j'} U[l,j] conj(U[l,j']) T[j,j']
//! ```
//!
//! with `T[j,j'] = Tr_B |e_j><e_j'|` is minimized on the Stiefel manifold of
//! isometries. The Euclidean gradient follows from `d(p S(rho/p)) =
//! -Tr[ln(rho/p) d rho]`; steps are Riemannian steepest descent with Armijo
//! backtracking and a polar retraction. Each restart draws its initial
//! isometry from its own ChaCha stream, so results do not depend on how the
//! restarts are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{
    self, entropy_of_spectrum, hermitian_eig_unchecked, re, ComplexMatrix, ComplexVector, DensityMatrix, C64,
    TOLERANCES,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EofOptions {
    /// Ensemble size `L`; `None` means `r^2`.
    pub ensemble_size: Option<usize>,
    pub restarts: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once the best value improved by less than `tol` over `patience` iterations.
    pub tol: f64,
    pub patience: usize,
}

impl Default for EofOptions {
    fn default() -> Self {
        Self { ensemble_size: None, restarts: 16, seed: 0x5eed, max_iters: 3000, tol: 1e-8, patience: 50 }
    }
}

/// Weighted pure-state decomposition of a density matrix.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub weights: Vec<f64>,
    pub states: Vec<ComplexVector>,
}

impl Ensemble {
    /// Splits unnormalized vectors into weights and unit states, dropping
    /// vectors of negligible weight.
    pub fn from_unnormalized(vectors: &[ComplexVector]) -> Self {
        let mut weights = Vec::new();
        let mut states = Vec::new();
        for v in vectors {
            let w = v.norm_squared();
            if w > 1e-15 {
                weights.push(w);
                states.push(v.unscale(w.sqrt()));
            }
        }
        Self { weights, states }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn density(&self) -> ComplexMatrix {
        let n = self.states.first().map(|s| s.len()).unwrap_or(0);
        self.weights
            .iter()
            .zip(&self.states)
            .fold(ComplexMatrix::zeros(n, n), |acc, (w, s)| acc + linalg::outer(s, s) * re(*w))
    }
}

#[derive(Debug, Clone)]
pub struct EofResult {
    /// Average marginal entropy of the best ensemble found (nats).
    pub value: f64,
    pub ensemble: Ensemble,
    pub restarts_used: usize,
    /// Max minus min of the final values over restarts.
    pub best_restart_spread: f64,
}

/// Reduced-state kernel of the objective: `T[j][j']` reduced to the smaller factor.
struct Objective {
    rank: usize,
    kernel: Vec<ComplexMatrix>,
    generators: Vec<ComplexVector>,
}

const LOG_FLOOR: f64 = 1e-16;

impl Objective {
    fn new(generators: Vec<ComplexVector>, da: usize, db: usize) -> Self {
        let rank = generators.len();
        let reshaped: Vec<ComplexMatrix> = generators
            .iter()
            .map(|g| {
                // row index a, column index b of the composite index a * db + b
                let m = ComplexMatrix::from_row_slice(da, db, g.as_slice());
                if da <= db {
                    m
                } else {
                    m.transpose()
                }
            })
            .collect();
        let mut kernel = Vec::with_capacity(rank * rank);
        for mj in &reshaped {
            for mk in &reshaped {
                kernel.push(mj * mk.adjoint());
            }
        }
        Self { rank, kernel, generators }
    }

    fn reduced(&self, u: &ComplexMatrix, l: usize) -> ComplexMatrix {
        let r = self.rank;
        let n = self.kernel[0].nrows();
        let mut rho = ComplexMatrix::zeros(n, n);
        for j in 0..r {
            let a = u[(l, j)];
            if a == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..r {
                let coef = a * u[(l, k)].conj();
                rho.zip_apply(&self.kernel[j * r + k], |x, t| *x += coef * t);
            }
        }
        rho
    }

    /// Average entropy and, when asked, the Euclidean gradient with respect
    /// to the real inner product `Re Tr(X^dagger Y)`.
    fn evaluate(&self, u: &ComplexMatrix, with_grad: bool) -> (f64, Option<ComplexMatrix>) {
        let r = self.rank;
        let mut value = 0.0;
        let mut grad = with_grad.then(|| ComplexMatrix::zeros(u.nrows(), r));
        for l in 0..u.nrows() {
            let rho = self.reduced(u, l);
            let p = linalg::trace(&rho).re;
            if p <= 1e-300 {
                continue;
            }
            let e = hermitian_eig_unchecked(&rho);
            for &w in &e.values {
                if w > 0.0 {
                    value -= w * (w / p).ln();
                }
            }
            if let Some(g) = grad.as_mut() {
                let log = e.map(|w| -(w / p).max(LOG_FLOOR).ln());
                // Tr[G T[k][j]] for all k, j
                let mut pair = vec![C64::new(0.0, 0.0); r * r];
                for k in 0..r {
                    for j in 0..r {
                        pair[k * r + j] =
                            log.iter().zip(self.kernel[k * r + j].transpose().iter()).map(|(a, b)| a * b).sum();
                    }
                }
                for j in 0..r {
                    let mut acc = C64::new(0.0, 0.0);
                    for k in 0..r {
                        acc += u[(l, k)] * pair[k * r + j];
                    }
                    g[(l, j)] = acc * 2.0;
                }
            }
        }
        (value, grad)
    }

    fn ensemble(&self, u: &ComplexMatrix) -> Ensemble {
        let vectors: Vec<ComplexVector> = (0..u.nrows())
            .map(|l| {
                let mut v = ComplexVector::zeros(self.generators[0].len());
                for j in 0..self.rank {
                    v += &self.generators[j] * u[(l, j)];
                }
                v
            })
            .collect();
        Ensemble::from_unnormalized(&vectors)
    }
}

/// `X (X^dagger X)^{-1/2}`: the closest isometry.
fn polar(x: &ComplexMatrix) -> ComplexMatrix {
    let gram = x.adjoint() * x;
    let e = hermitian_eig_unchecked(&gram);
    let inv_sqrt = e.map(|w| 1.0 / w.max(1e-300).sqrt());
    x * inv_sqrt
}

fn real_inner(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Projection onto the tangent space of the Stiefel manifold at `u`.
fn tangent(u: &ComplexMatrix, g: &ComplexMatrix) -> ComplexMatrix {
    let s = u.adjoint() * g;
    let sym = linalg::hermitize(&s);
    g - u * sym
}

struct RestartOutcome {
    value: f64,
    u: ComplexMatrix,
}

fn descend(obj: &Objective, mut u: ComplexMatrix, opts: &EofOptions) -> RestartOutcome {
    let (mut f, g) = obj.evaluate(&u, true);
    let mut grad = tangent(&u, &g.expect("gradient requested"));
    let mut step = 0.1;
    let mut history = vec![f];
    for _ in 0..opts.max_iters {
        let gnorm2 = real_inner(&grad, &grad);
        if gnorm2 < 1e-24 {
            break;
        }
        let mut accepted = None;
        let mut t = step;
        for _ in 0..60 {
            let cand = polar(&(&u - &grad * re(t)));
            let (fc, _) = obj.evaluate(&cand, false);
            if fc <= f - 1e-4 * t * gnorm2 {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc)) = accepted else { break };
        u = cand;
        f = fc;
        step = (t * 2.0).min(10.0);
        let (_, g) = obj.evaluate(&u, true);
        grad = tangent(&u, &g.expect("gradient requested"));
        history.push(f);
        if history.len() > opts.patience {
            let past = history[history.len() - 1 - opts.patience];
            if past - f < opts.tol {
                break;
            }
        }
    }
    RestartOutcome { value: f.max(0.0), u }
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

/// EoF across the cut `dims[0] | dims[1]` of a state given through
/// generating vectors, `sigma = sum_k |g_k><g_k|`. The generators need not be
/// orthogonal; they are first reduced to the eigen-ensemble.
pub fn eof_from_generators(generators: &[ComplexVector], dims: (usize, usize), opts: &EofOptions) -> Result<EofResult> {
    let (da, db) = dims;
    if generators.is_empty() {
        return Err(Error::InvalidDensityMatrix("empty ensemble".into()));
    }
    if let Some(g) = generators.iter().find(|g| g.len() != da * db) {
        return Err(Error::DimensionMismatch(format!("generator of length {} for dims ({da}, {db})", g.len())));
    }
    let factor = ComplexMatrix::from_columns(generators);
    let gram = factor.adjoint() * &factor;
    let e = hermitian_eig_unchecked(&gram);
    let eigen: Vec<ComplexVector> = e
        .values
        .iter()
        .enumerate()
        .rev()
        .filter(|(_, &w)| w > TOLERANCES.rank)
        .map(|(i, _)| &factor * e.vectors.column(i))
        .collect();
    eof_from_eigen_ensemble(eigen, dims, opts)
}

/// EoF of a bipartite density matrix (must have exactly two factors).
pub fn eof_optimize(sigma: &DensityMatrix, opts: &EofOptions) -> Result<EofResult> {
    if sigma.dims().len() != 2 {
        return Err(Error::DimensionMismatch(format!("EoF needs a bipartite state, got dims {:?}", sigma.dims())));
    }
    let dims = (sigma.dims()[0], sigma.dims()[1]);
    let e = sigma.eigen();
    let eigen: Vec<ComplexVector> = e
        .values
        .iter()
        .enumerate()
        .rev()
        .filter(|(_, &w)| w > TOLERANCES.rank)
        .map(|(i, &w)| e.vectors.column(i) * re(w.sqrt()))
        .collect();
    eof_from_eigen_ensemble(eigen, dims, opts)
}

fn eof_from_eigen_ensemble(eigen: Vec<ComplexVector>, dims: (usize, usize), opts: &EofOptions) -> Result<EofResult> {
    let rank = eigen.len();
    if rank == 0 {
        return Err(Error::InvalidDensityMatrix("state has rank 0".into()));
    }
    let obj = Objective::new(eigen, dims.0, dims.1);
    if rank == 1 {
        let u = ComplexMatrix::identity(1, 1);
        let (value, _) = obj.evaluate(&u, false);
        return Ok(EofResult {
            value: value.max(0.0),
            ensemble: obj.ensemble(&u),
            restarts_used: 0,
            best_restart_spread: 0.0,
        });
    }
    let size = opts.ensemble_size.unwrap_or(rank * rank);
    if size < rank {
        return Err(Error::EnsembleTooSmall { size, rank });
    }
    let restarts = opts.restarts.max(1);
    let outcomes: Vec<RestartOutcome> = (0..restarts)
        .into_par_iter()
        .map(|k| {
            let mut rng = restart_rng(opts.seed, k);
            let start = linalg::random::isometry(size, rank, &mut rng);
            descend(&obj, start, opts)
        })
        .collect();
    let (best, spread) = summarize(&outcomes);
    let u = &outcomes[best].u;
    Ok(EofResult {
        value: outcomes[best].value,
        ensemble: obj.ensemble(u),
        restarts_used: restarts,
        best_restart_spread: spread,
    })
}

fn summarize(outcomes: &[RestartOutcome]) -> (usize, f64) {
    let mut best = 0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (i, o) in outcomes.iter().enumerate() {
        if o.value < lo {
            lo = o.value;
            best = i;
        }
        hi = hi.max(o.value);
    }
    (best, hi - lo)
}

/// Average marginal entropy of an explicit ensemble across `dims.0 | dims.1`.
pub fn average_entropy(ensemble: &Ensemble, dims: (usize, usize)) -> f64 {
    ensemble
        .weights
        .iter()
        .zip(&ensemble.states)
        .map(|(w, s)| {
            let m = ComplexMatrix::from_row_slice(dims.0, dims.1, s.as_slice());
            let red = &m * m.adjoint();
            w * entropy_of_spectrum(&hermitian_eig_unchecked(&red).values)
        })
        .sum()
}
