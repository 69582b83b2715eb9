//! Spectral envelope of the transfer operator and the convergence checks
//! built on it.
//!
//! `||E^^n - E^∞||` is the norm of the superoperator as a map on memory
//! operators equipped with the trace norm. It is estimated by maximizing
//! `||Phi(|psi><psi|)||_1` over unit vectors, which attains the norm for
//! Hermiticity-preserving maps. The constant `c` of the envelope
//! `||E^^n - E^∞|| <= c lambda^n` is therefore a numerical estimate, and every
//! report built from it carries the label "estimated-constant".

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::entanglement::{self, eof_from_generators, eof_optimize, EofOptions};
use crate::error::{Error, Result};
use crate::fcs::{Fcs, TransferOperator};
use crate::linalg::{
    self, hermitian_eig_unchecked, partial_trace_matrix, re, trace, trace_norm, unvectorize, vectorize, ComplexMatrix,
    ComplexVector, DensityMatrix,
};
use crate::models::model_hash;

/// Used when `E^` has no subleading spectrum (`b = 1` or `E^ = E^∞`).
pub const DEFAULT_LAMBDA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeParams {
    pub lambda: f64,
    pub c: f64,
    /// `c b^2 / lambda`
    pub c1: f64,
    pub d: usize,
    pub b: usize,
    /// Smallest `n >= 1` with `2 c1 lambda^n <= 1/e`.
    pub n0: usize,
    pub second_modulus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimateOptions {
    pub samples: usize,
    pub ascent_iters: usize,
    pub seed: u64,
}

impl Default for NormEstimateOptions {
    fn default() -> Self {
        Self { samples: 200, ascent_iters: 50, seed: 0x0a11 }
    }
}

/// `lambda = min(1 - 1e-9, |lambda_2| (1 + margin))`.
pub fn spectral_gap(top: &TransferOperator, margin: f64) -> Result<f64> {
    if !top.is_pure() {
        return Err(Error::NotPure { count: top.peripheral_count() });
    }
    match top.second_modulus() {
        Some(m) if m > 1e-12 => Ok((m * (1.0 + margin)).min(1.0 - 1e-9)),
        _ => Ok(DEFAULT_LAMBDA),
    }
}

fn sign_part(m: &ComplexMatrix) -> ComplexMatrix {
    hermitian_eig_unchecked(m).map(|w| if w >= 0.0 { 1.0 } else { -1.0 })
}

/// Lower estimate of the induced trace norm of a Hermiticity-preserving map
/// given as a `b^2 x b^2` matrix on column-vectorized operators.
///
/// Each sampled pure input is improved by alternating maximization:
/// `S = sign(Phi(psi psi^dagger))`, then `psi` becomes the top eigenvector of
/// `Phi^*(S)`. Every step is non-decreasing in `||Phi(psi psi^dagger)||_1`.
pub fn induced_trace_norm(map: &ComplexMatrix, b: usize, opts: &NormEstimateOptions) -> f64 {
    let dual = map.adjoint();
    let apply = |m: &ComplexMatrix, sup: &ComplexMatrix| unvectorize(&(sup * vectorize(m)), b, b);
    let value = |psi: &ComplexVector| trace_norm(&linalg::hermitize(&apply(&linalg::outer(psi, psi), map)));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: f64 = 0.0;
    let starts = (0..b)
        .map(|k| linalg::basis_vector(b, k))
        .chain((0..opts.samples).map(|_| linalg::random::unit_vector(b, &mut rng)));
    for start in starts.collect::<Vec<_>>() {
        let mut psi = start;
        let mut current = value(&psi);
        for _ in 0..opts.ascent_iters {
            let image = linalg::hermitize(&apply(&linalg::outer(&psi, &psi), map));
            let s = sign_part(&image);
            let lifted = linalg::hermitize(&apply(&s, &dual));
            let e = hermitian_eig_unchecked(&lifted);
            let next = e.vectors.column(b - 1).into_owned();
            let v = value(&next);
            if v <= current * (1.0 + 1e-13) {
                current = current.max(v);
                break;
            }
            psi = next;
            current = v;
        }
        best = best.max(current);
    }
    best
}

/// Estimated `||E^^n - E^∞||` for `n = 1..=n_max`.
pub fn norm_series(fcs: &Fcs, n_max: usize, opts: &NormEstimateOptions) -> Vec<f64> {
    (1..=n_max).map(|n| induced_trace_norm(&fcs.power_minus_limit(n), fcs.b(), opts)).collect()
}

/// `c = max_{1 <= n <= n_max} ||E^^n - E^∞|| / lambda^n`.
pub fn estimate_c(fcs: &Fcs, lambda: f64, n_max: usize, opts: &NormEstimateOptions) -> f64 {
    norm_series(fcs, n_max, opts).iter().enumerate().map(|(i, v)| v / lambda.powi(i as i32 + 1)).fold(0.0, f64::max)
}

fn first_monotone_n(c1: f64, lambda: f64) -> usize {
    let limit = (-1.0f64).exp();
    if 2.0 * c1 * lambda <= limit {
        return 1;
    }
    let guess = ((limit / (2.0 * c1)).ln() / lambda.ln()).ceil().max(1.0) as usize;
    let mut n = guess.saturating_sub(2).max(1);
    while 2.0 * c1 * lambda.powi(n as i32) > limit {
        n += 1;
    }
    n
}

pub fn envelope_params(fcs: &Fcs, margin: f64, n_max: usize, opts: &NormEstimateOptions) -> Result<EnvelopeParams> {
    let top = fcs.transfer();
    let lambda = spectral_gap(top, margin)?;
    let c = estimate_c(fcs, lambda, n_max, opts);
    let b = fcs.b();
    let c1 = c * (b * b) as f64 / lambda;
    Ok(EnvelopeParams {
        lambda,
        c,
        c1,
        d: fcs.d(),
        b,
        n0: first_monotone_n(c1, lambda),
        second_modulus: top.second_modulus().unwrap_or(0.0),
    })
}

/// `(ln d^3 + 4) c1 lambda^n + eta(2 c1 lambda^n)` for `n >= n0`, `+inf` below.
pub fn epsilon_envelope(params: &EnvelopeParams, n: usize) -> f64 {
    if n < params.n0 {
        return f64::INFINITY;
    }
    let x = params.c1 * params.lambda.powi(n as i32);
    (3.0 * (params.d as f64).ln() + 4.0) * x + entanglement::eta(2.0 * x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub slope: f64,
    pub r2: f64,
    pub points: usize,
}

/// Least-squares slope of `ln(value)` against `n`, ignoring values at or below `1e-12`.
pub fn fit_decay_rate(series: &[(f64, f64)]) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = series.iter().filter(|(_, v)| *v > 1e-12).map(|&(n, v)| (n, v.ln())).collect();
    if pts.len() < 3 {
        return Err(Error::TooFewPoints { usable: pts.len() });
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(DecayFit { slope, r2, points: pts.len() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub eof: EofOptions,
    pub tol_opt: f64,
    pub margin: f64,
    pub n_max: usize,
    pub norm: NormEstimateOptions,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            eof: EofOptions::default(),
            tol_opt: 2e-3,
            margin: 0.05,
            n_max: 30,
            norm: NormEstimateOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportMetadata {
    pub model_hash: String,
    pub lambda: f64,
    pub c: f64,
    pub c1: f64,
    pub n0: usize,
    pub seed: u64,
    pub constants: &'static str,
    pub second_modulus: f64,
    pub tol_opt: f64,
}

impl ReportMetadata {
    fn new(fcs: &Fcs, params: &EnvelopeParams, opts: &VerifyOptions) -> Self {
        Self {
            model_hash: model_hash(fcs.model()),
            lambda: params.lambda,
            c: params.c,
            c1: params.c1,
            n0: params.n0,
            seed: opts.eof.seed,
            constants: "estimated-constant",
            second_modulus: params.second_modulus,
            tol_opt: opts.tol_opt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalRow {
    pub n: usize,
    pub eof_memory: f64,
    pub eof_interval: f64,
    pub gap: f64,
    /// `+inf` for `n < n0`.
    pub envelope: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistantRow {
    pub p: usize,
    pub trace_distance: f64,
    pub distance_envelope: f64,
    pub eof_interval: f64,
    pub nielsen_envelope: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport<R> {
    pub rows: Vec<R>,
    pub metadata: ReportMetadata,
}

impl<R> ConvergenceReport<R> {
    pub fn rows(&self) -> &[R] {
        &self.rows
    }
}

impl<R: Serialize> ConvergenceReport<R> {
    /// One header line plus one line per row; `+inf` is written as `inf`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Rows and metadata; non-finite numbers become `null`.
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Entropy-valued columns, rescaled from nats by `factor`.
pub trait EntropyColumns {
    fn rescale(&mut self, factor: f64);
}

impl EntropyColumns for IntervalRow {
    fn rescale(&mut self, factor: f64) {
        self.eof_memory *= factor;
        self.eof_interval *= factor;
        self.gap *= factor;
        self.envelope *= factor;
    }
}

impl EntropyColumns for DistantRow {
    fn rescale(&mut self, factor: f64) {
        self.eof_interval *= factor;
        self.nielsen_envelope *= factor;
    }
}

impl<R: EntropyColumns> ConvergenceReport<R> {
    pub fn in_bits(mut self) -> Self {
        let f = std::f64::consts::LN_2.recip();
        self.rows.iter_mut().for_each(|r| r.rescale(f));
        self
    }
}

impl ConvergenceReport<IntervalRow> {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

impl ConvergenceReport<DistantRow> {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// Generating vectors of `rho_[1,n]` from its factor.
fn interval_generators(fcs: &Fcs, n: usize) -> Result<Vec<ComplexVector>> {
    let f = fcs.interval_factor(n)?;
    Ok(f.column_iter().map(|c| c.into_owned()).collect())
}

/// EoF of `rho_[1,n]` across the cut `1 | [2, n]`.
pub fn eof_interval(fcs: &Fcs, n: usize, opts: &EofOptions) -> Result<f64> {
    if n < 2 {
        return Err(Error::DimensionMismatch("the 1|[2,n] cut needs n >= 2".into()));
    }
    let gens = interval_generators(fcs, n)?;
    let d = fcs.d();
    Ok(eof_from_generators(&gens, (d, d.pow(n as u32 - 1)), opts)?.value)
}

pub fn eof_memory(fcs: &Fcs, opts: &EofOptions) -> Result<f64> {
    Ok(eof_optimize(&fcs.memory_state()?, opts)?.value)
}

/// EoF of `rho_{1,[p,n]}` across `1 | [p, n]`.
pub fn eof_spin_and_distant(fcs: &Fcs, p: usize, n: usize, opts: &EofOptions) -> Result<f64> {
    let f = fcs.spin_and_distant_factor(p, n)?;
    let gens: Vec<ComplexVector> = f.column_iter().map(|c| c.into_owned()).collect();
    let d = fcs.d();
    Ok(eof_from_generators(&gens, (d, d.pow((n - p + 1) as u32)), opts)?.value)
}

pub fn verify_interval_bound(
    fcs: &Fcs,
    n_range: impl IntoIterator<Item = usize>,
    opts: &VerifyOptions,
) -> Result<ConvergenceReport<IntervalRow>> {
    let ns: Vec<usize> = n_range.into_iter().collect();
    let params = envelope_params(fcs, opts.margin, opts.n_max, &opts.norm)?;
    let memory = eof_memory(fcs, &opts.eof)?;
    let mut rows = Vec::with_capacity(ns.len());
    for n in ns {
        let interval = eof_interval(fcs, n, &opts.eof)?;
        let gap = memory - interval;
        let envelope = epsilon_envelope(&params, n);
        let pass = gap >= -opts.tol_opt && gap <= envelope;
        rows.push(IntervalRow { n, eof_memory: memory, eof_interval: interval, gap, envelope, pass });
    }
    Ok(ConvergenceReport { rows, metadata: ReportMetadata::new(fcs, &params, opts) })
}

/// Trace distance `||rho_{1,[p,n]} - rho_1 ⊗ rho_[p,n]||_1`.
pub fn distant_trace_distance(fcs: &Fcs, p: usize, n: usize) -> Result<f64> {
    let joint = fcs.rho_spin_and_distant(p, n)?;
    let reference = fcs.factorized_reference(p, n)?;
    Ok(joint.trace_distance(&reference))
}

pub fn verify_distant_decay(
    fcs: &Fcs,
    p_range: impl IntoIterator<Item = usize>,
    n_offset: usize,
    opts: &VerifyOptions,
) -> Result<ConvergenceReport<DistantRow>> {
    let ps: Vec<usize> = p_range.into_iter().collect();
    let params = envelope_params(fcs, opts.margin, opts.n_max, &opts.norm)?;
    let lambda = params.lambda;
    let mut measured = Vec::with_capacity(ps.len());
    for &p in &ps {
        let n = p + n_offset;
        let td = distant_trace_distance(fcs, p, n)?;
        let eof = eof_spin_and_distant(fcs, p, n, &opts.eof)?;
        measured.push((p, td, eof));
    }
    let c_prime = measured.iter().map(|&(p, td, _)| td / lambda.powi(p as i32 - 2)).fold(0.0, f64::max);
    let rows = measured
        .into_iter()
        .map(|(p, td, eof)| {
            let distance_envelope = c_prime * lambda.powi(p as i32 - 2);
            let nielsen = entanglement::nielsen_envelope(td, fcs.d());
            let pass = td <= distance_envelope * (1.0 + 1e-12) + 1e-15 && eof <= nielsen;
            DistantRow { p, trace_distance: td, distance_envelope, eof_interval: eof, nielsen_envelope: nielsen, pass }
        })
        .collect();
    Ok(ConvergenceReport { rows, metadata: ReportMetadata::new(fcs, &params, opts) })
}

/// One ensemble element of the chain comparing `rho_{A⊗B}` with `rho_[1,n]`.
#[derive(Debug, Clone, Serialize)]
pub struct TauRow {
    pub l: usize,
    pub n: usize,
    /// `Tr psi~_l`
    pub beta: f64,
    /// `Tr phi~^n_l`
    pub alpha: f64,
    /// `||psi~_l - phi~^n_l||_1`
    pub distance: f64,
    /// `b^2 beta_l ||E^^{n-1} - E^∞||`
    pub distance_bound: f64,
    pub entropy_difference: f64,
    pub fannes: entanglement::FannesBound,
    /// `beta_l S(psi_l) - alpha_l S(phi_l)`
    pub epsilon: f64,
    /// `beta_l [(ln d^3 + 4) tau + eta(2 tau)]`, meaningful when `2 tau <= 1/e`.
    pub epsilon_bound: f64,
    pub tau: f64,
}

impl TauRow {
    pub fn distance_ok(&self) -> bool {
        self.distance <= self.distance_bound * (1.0 + 1e-9) + 1e-13
    }

    pub fn fannes_ok(&self) -> bool {
        self.entropy_difference <= self.fannes.bound + 1e-12
    }
}

/// Restrictions to site 1 of the paired ensembles
///
/// ```text
/// Psi_l = sum_{ij} U[l,(ij)] sqrt(mu_j) V^dagger chi_i        (ensemble of rho_{A⊗B})
/// Phi_l = sum_{ij} U[l,(ij)] G_{n,j}^dagger V^dagger chi_i    (ensemble of rho_[1,n])
/// ```
///
/// where `chi_i = sqrt(mu_i) e_i` runs over the eigen-ensemble of the fixed
/// point and `G_{n,j} = V_n (1 ⊗ e_j)`. Both restrictions are assembled from
/// `Tr_B(X_{ii'} (1 ⊗ M))` with `X_{ii'} = V^dagger chi_i chi_i'^dagger V`
/// and `M = E^^{n-1}(e_j' e_j^dagger)` or its limit.
pub fn paired_restrictions(fcs: &Fcs, u: &ComplexMatrix, n: usize) -> Result<Vec<(ComplexMatrix, ComplexMatrix)>> {
    let b = fcs.b();
    let d = fcs.d();
    if u.ncols() != b * b || n < 1 {
        return Err(Error::DimensionMismatch(format!("U must have b^2 = {} columns, got {}", b * b, u.ncols())));
    }
    let chis = fcs.memory_ensemble();
    let xs = fcs.memory_state_vectors();
    let units: Vec<ComplexVector> = chis.iter().map(|(mu, c)| c.unscale(mu.sqrt())).collect();
    let mut moved = vec![ComplexMatrix::zeros(b, b); b * b];
    let mut limit = vec![ComplexMatrix::zeros(b, b); b * b];
    let lim = fcs.limit_matrix();
    for j in 0..b {
        for jp in 0..b {
            let m = linalg::outer(&units[jp], &units[j]);
            moved[j * b + jp] = fcs.apply_e_hat_power(&m, n - 1);
            limit[j * b + jp] = unvectorize(&(&lim * vectorize(&m)), b, b);
        }
    }
    let one = ComplexMatrix::identity(d, d);
    // K[(i i')(j j')] = Tr_B(X_{ii'} (1 ⊗ M_{jj'}))
    let restrict = |x: &ComplexMatrix, m: &ComplexMatrix| -> ComplexMatrix {
        partial_trace_matrix(&(x * linalg::kron(&one, m)), &[d, b], &[0]).expect("dims (d, b)")
    };
    let mut out = Vec::with_capacity(u.nrows());
    for l in 0..u.nrows() {
        let mut psi = ComplexMatrix::zeros(d, d);
        let mut phi = ComplexMatrix::zeros(d, d);
        for i in 0..b {
            for ip in 0..b {
                let x = linalg::outer(&xs[i], &xs[ip]);
                for j in 0..b {
                    for jp in 0..b {
                        let coef = u[(l, i * b + j)] * u[(l, ip * b + jp)].conj();
                        if coef.norm() == 0.0 {
                            continue;
                        }
                        phi += restrict(&x, &moved[j * b + jp]) * coef;
                        psi += restrict(&x, &limit[j * b + jp]) * coef;
                    }
                }
            }
        }
        out.push((linalg::hermitize(&psi), linalg::hermitize(&phi)));
    }
    Ok(out)
}

/// Direct construction of `phi~^n_l` from the `d^n`-dimensional vectors
/// `Phi_l`, used to cross-check [`paired_restrictions`].
pub fn phi_restrictions_direct(fcs: &Fcs, u: &ComplexMatrix, n: usize) -> Result<Vec<ComplexMatrix>> {
    let b = fcs.b();
    let d = fcs.d();
    let chis = fcs.memory_ensemble();
    let units: Vec<ComplexVector> = chis.iter().map(|(mu, c)| c.unscale(mu.sqrt())).collect();
    // columns a*b + beta of the factor hold (1 ⊗ <beta|) V_n^dagger V^dagger chi_a
    let factor = fcs.interval_factor(n)?;
    let dim = factor.nrows();
    let mut out = Vec::with_capacity(u.nrows());
    for l in 0..u.nrows() {
        let mut phi = ComplexVector::zeros(dim);
        for i in 0..b {
            for (j, unit) in units.iter().enumerate() {
                let coef = u[(l, i * b + j)];
                for (beta, w) in unit.iter().enumerate() {
                    phi += factor.column(i * b + beta) * (coef * w.conj());
                }
            }
        }
        let dims = vec![d, dim / d];
        out.push(partial_trace_matrix(&linalg::outer(&phi, &phi), &dims, &[0])?);
    }
    Ok(out)
}

/// Checks each element of the paired ensembles for the distance bound and
/// the entropy continuity bound.
pub fn tau_chain(fcs: &Fcs, u: &ComplexMatrix, n: usize, norm_opts: &NormEstimateOptions) -> Result<Vec<TauRow>> {
    let b = fcs.b();
    let d = fcs.d();
    let op_norm = induced_trace_norm(&fcs.power_minus_limit(n - 1), b, norm_opts);
    let pairs = paired_restrictions(fcs, u, n)?;
    let mut rows = Vec::new();
    for (l, (psi_t, phi_t)) in pairs.into_iter().enumerate() {
        let beta = trace(&psi_t).re;
        let alpha = trace(&phi_t).re;
        if beta <= 1e-14 || alpha <= 1e-14 {
            continue;
        }
        let distance = trace_norm(&(&psi_t - &phi_t));
        let psi = DensityMatrix::new(&psi_t / re(beta), vec![d])?;
        let phi = DensityMatrix::new(&phi_t / re(alpha), vec![d])?;
        let s_psi = linalg::von_neumann_entropy(&psi);
        let s_phi = linalg::von_neumann_entropy(&phi);
        let tau = distance / beta;
        rows.push(TauRow {
            l,
            n,
            beta,
            alpha,
            distance,
            distance_bound: (b * b) as f64 * beta * op_norm,
            entropy_difference: (s_psi - s_phi).abs(),
            fannes: entanglement::fannes_bound(&psi, &phi)?,
            epsilon: beta * s_psi - alpha * s_phi,
            epsilon_bound: beta * ((3.0 * (d as f64).ln() + 4.0) * tau + entanglement::eta(2.0 * tau)),
            tau,
        });
    }
    Ok(rows)
}
