//! Translation-invariant pure finitely correlated states.
//!
//! A model is the isometry `V: C^d ⊗ C^b -> C^b` with `V V^dagger = 1`. The
//! column index of `v` is `k * b + beta'`, spin factor first, so the Kraus
//! slice `V_k` is the contiguous `b x b` block of columns `k*b .. (k+1)*b`.
//!
//! Reduced states are built in factored form: `rho_[1,n] = F F^dagger` where
//! the columns of `F` are `(1 ⊗ <beta|) V_n^dagger V^dagger |chi_a>` over the
//! eigen-ensemble `{chi_a}` of the fixed point. The rank of every interval
//! state is therefore at most `b^2` and the optimizer never needs a dense
//! eigendecomposition of a `d^n`-dimensional matrix.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    self, general_spectrum, hermitian_eig_unchecked, hermitize, max_abs_diff, re, trace, trace_norm, unvectorize,
    vectorize, ComplexMatrix, ComplexVector, DensityMatrix, Spectrum, C64,
};

/// Largest composite dimension `d^n` an interval state may reach.
pub const DIMENSION_CAP: usize = 4096;
/// Eigenvalues of the transfer operator with modulus at least `1 - TOL_PERIPHERAL`
/// count as peripheral.
pub const TOL_PERIPHERAL: f64 = 1e-8;
/// Max abs deviation of `V V^dagger` from the identity accepted by [`Fcs::new`].
pub const TOL_ISOMETRY: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FcsModel {
    d: usize,
    b: usize,
    v: ComplexMatrix,
}

impl FcsModel {
    /// Checks only the shape (`b` rows, `d*b` columns); numeric checks live
    /// in [`validate`].
    pub fn new(d: usize, b: usize, v: ComplexMatrix) -> Result<Self> {
        if d == 0 || b == 0 {
            return Err(Error::DimensionMismatch(format!("d={d}, b={b} must both be positive")));
        }
        if v.nrows() != b || v.ncols() != d * b {
            return Err(Error::DimensionMismatch(format!(
                "v is {}x{}, expected {}x{} for d={}, b={}",
                v.nrows(),
                v.ncols(),
                b,
                d * b,
                d,
                b
            )));
        }
        if !linalg::is_finite(&v) {
            return Err(Error::DimensionMismatch("v has non-finite entries".into()));
        }
        Ok(Self { d, b, v })
    }

    /// Builds `v` from Kraus slices laid side by side.
    pub fn from_slices(slices: &[ComplexMatrix]) -> Result<Self> {
        let d = slices.len();
        let b = slices.first().map(|s| s.nrows()).unwrap_or(0);
        let mut v = ComplexMatrix::zeros(b, d * b);
        for (k, s) in slices.iter().enumerate() {
            if s.shape() != (b, b) {
                return Err(Error::DimensionMismatch(format!("slice {k} is {:?}, expected {b}x{b}", s.shape())));
            }
            v.view_mut((0, k * b), (b, b)).copy_from(s);
        }
        Self::new(d, b, v)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn v(&self) -> &ComplexMatrix {
        &self.v
    }

    /// Max abs entry of `V V^dagger - 1_b`.
    pub fn isometry_deviation(&self) -> f64 {
        max_abs_diff(&(&self.v * self.v.adjoint()), &ComplexMatrix::identity(self.b, self.b))
    }

    /// `E(A ⊗ B) = V (A ⊗ B) V^dagger`.
    pub fn apply_e(&self, a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
        &self.v * linalg::kron(a, b) * self.v.adjoint()
    }
}

#[derive(Debug, Clone)]
pub struct KrausSlices {
    slices: Vec<ComplexMatrix>,
    b: usize,
}

impl KrausSlices {
    pub fn slices(&self) -> &[ComplexMatrix] {
        &self.slices
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn d(&self) -> usize {
        self.slices.len()
    }

    /// Max abs entry of `sum_k V_k V_k^dagger - 1`.
    pub fn unitality_deviation(&self) -> f64 {
        let sum = self.slices.iter().fold(ComplexMatrix::zeros(self.b, self.b), |acc, s| acc + s * s.adjoint());
        max_abs_diff(&sum, &ComplexMatrix::identity(self.b, self.b))
    }
}

pub fn kraus_slices(model: &FcsModel) -> KrausSlices {
    let b = model.b;
    let slices = (0..model.d).map(|k| model.v.columns(k * b, b).into_owned()).collect();
    KrausSlices { slices, b }
}

fn check_memory_shape(slices: &KrausSlices, m: &ComplexMatrix) -> Result<()> {
    if m.shape() != (slices.b, slices.b) {
        return Err(Error::DimensionMismatch(format!(
            "memory operator is {:?}, expected {}x{}",
            m.shape(),
            slices.b,
            slices.b
        )));
    }
    Ok(())
}

/// `E^(B) = sum_k V_k B V_k^dagger`.
pub fn apply_e_hat(slices: &KrausSlices, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_memory_shape(slices, b)?;
    Ok(slices.slices.iter().fold(ComplexMatrix::zeros(slices.b, slices.b), |acc, v| acc + v * b * v.adjoint()))
}

/// Trace dual of `E^`: `X -> sum_k V_k^dagger X V_k`.
pub fn apply_e_hat_dual(slices: &KrausSlices, x: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_memory_shape(slices, x)?;
    Ok(slices.slices.iter().fold(ComplexMatrix::zeros(slices.b, slices.b), |acc, v| acc + v.adjoint() * x * v))
}

/// Matrix of `E^` on column-vectorized memory operators, with its trace dual.
#[derive(Debug, Clone)]
pub struct TransferOperator {
    pub matrix: ComplexMatrix,
    pub dual_matrix: ComplexMatrix,
    pub spectrum: Spectrum,
    b: usize,
}

impl TransferOperator {
    pub fn b(&self) -> usize {
        self.b
    }

    pub fn apply(&self, m: &ComplexMatrix) -> ComplexMatrix {
        unvectorize(&(&self.matrix * vectorize(m)), self.b, self.b)
    }

    pub fn apply_dual(&self, m: &ComplexMatrix) -> ComplexMatrix {
        unvectorize(&(&self.dual_matrix * vectorize(m)), self.b, self.b)
    }

    /// Number of eigenvalues with modulus at least `1 - TOL_PERIPHERAL`.
    pub fn peripheral_count(&self) -> usize {
        self.spectrum.moduli().iter().filter(|&&m| m >= 1.0 - TOL_PERIPHERAL).count()
    }

    pub fn is_pure(&self) -> bool {
        self.peripheral_count() == 1 && (self.spectrum.eigenvalues[0] - re(1.0)).norm() < TOL_PERIPHERAL
    }

    /// Largest modulus among the non-leading eigenvalues, `None` when `b = 1`.
    pub fn second_modulus(&self) -> Option<f64> {
        self.spectrum.moduli().get(1).copied()
    }
}

pub fn transfer_operator(model: &FcsModel) -> Result<TransferOperator> {
    let slices = kraus_slices(model);
    let b = model.b;
    let mut matrix = ComplexMatrix::zeros(b * b, b * b);
    // vec(V B V^dagger) = (conj(V) ⊗ V) vec(B) for column stacking.
    for v in &slices.slices {
        matrix += linalg::kron(&v.conjugate(), v);
    }
    let dual_matrix = matrix.adjoint();
    let spectrum = general_spectrum(&matrix)?;
    Ok(TransferOperator { matrix, dual_matrix, spectrum, b })
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub isometry_ok: bool,
    pub unital_ok: bool,
    pub pure_ok: bool,
    pub isometry_deviation: f64,
    pub unital_deviation: f64,
    pub peripheral_count: usize,
    pub details: String,
}

impl ValidationReport {
    pub fn all_ok(&self) -> bool {
        self.isometry_ok && self.unital_ok && self.pure_ok
    }
}

pub fn validate(model: &FcsModel, tol: f64) -> ValidationReport {
    let slices = kraus_slices(model);
    let isometry_deviation = model.isometry_deviation();
    let unit = ComplexMatrix::identity(model.b, model.b);
    let unital_deviation = apply_e_hat(&slices, &unit).map(|e| max_abs_diff(&e, &unit)).unwrap_or(f64::INFINITY);
    let (peripheral_count, pure_ok, spectrum_note) = match transfer_operator(model) {
        Ok(top) => {
            let moduli = top.spectrum.moduli();
            (top.peripheral_count(), top.is_pure(), format!("leading moduli {:?}", &moduli[..moduli.len().min(4)]))
        }
        Err(e) => (0, false, format!("spectrum failed: {e}")),
    };
    let isometry_ok = isometry_deviation <= tol;
    let unital_ok = unital_deviation <= tol;
    let details = format!(
        "max|VV^dagger - 1| = {isometry_deviation:.3e}; max|E^(1) - 1| = {unital_deviation:.3e}; \
         {peripheral_count} peripheral eigenvalue(s); {spectrum_note}"
    );
    ValidationReport {
        isometry_ok,
        unital_ok,
        pure_ok,
        isometry_deviation,
        unital_deviation,
        peripheral_count,
        details,
    }
}

#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub rho: DensityMatrix,
    pub min_eigenvalue: f64,
}

fn normalize_fixed_point(m: &ComplexMatrix) -> ComplexMatrix {
    let h = hermitize(&(m / trace(m)));
    let t = trace(&h);
    h / t
}

/// Fixed point of the dual transfer operator: null vector of `E^* - 1` from
/// an SVD, cross-checked (and refined if needed) by power iteration.
pub fn fixed_point(top: &TransferOperator, tol: f64) -> Result<FixedPoint> {
    if !top.is_pure() {
        return Err(Error::NotPure { count: top.peripheral_count() });
    }
    let b = top.b;
    let shifted = &top.dual_matrix - ComplexMatrix::identity(b * b, b * b);
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested right singular vectors");
    let (imin, _) =
        svd.singular_values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty spectrum");
    let null: ComplexVector = v_t.row(imin).adjoint();
    let mut rho = normalize_fixed_point(&unvectorize(&null, b, b));
    let residual = |r: &ComplexMatrix| trace_norm(&(top.apply_dual(r) - r));
    let mut res = residual(&rho);
    let mut iters = 0;
    while res > tol && iters < 10_000 {
        rho = normalize_fixed_point(&top.apply_dual(&rho));
        res = residual(&rho);
        iters += 1;
    }
    if res > tol {
        return Err(Error::NoConvergence(format!("fixed point residual {res:.3e} after {iters} iterations")));
    }
    let min_eigenvalue = hermitian_eig_unchecked(&rho).values[0];
    if min_eigenvalue <= 1e-12 {
        return Err(Error::SingularFixedPoint { min_eigenvalue });
    }
    let rho = DensityMatrix::new(rho, vec![b])?;
    Ok(FixedPoint { rho, min_eigenvalue })
}

/// Independent fixed point by iterating the dual map from `1/b`.
pub fn fixed_point_by_iteration(top: &TransferOperator, tol: f64, max_iters: usize) -> Result<ComplexMatrix> {
    let b = top.b;
    let mut rho = ComplexMatrix::identity(b, b).unscale(b as f64);
    for _ in 0..max_iters {
        let next = top.apply_dual(&rho);
        let diff = trace_norm(&(&next - &rho));
        rho = next;
        if diff < tol {
            return Ok(hermitize(&rho));
        }
    }
    Err(Error::NoConvergence(format!("power iteration did not reach {tol:.1e} in {max_iters} steps")))
}

/// Applies `1 ⊗ V^dagger` to vectors on `C^m ⊗ C^b`, producing vectors on
/// `C^m ⊗ C^d ⊗ C^b`.
fn extend_vectors(slices: &KrausSlices, vectors: &[ComplexVector]) -> Vec<ComplexVector> {
    let b = slices.b;
    let d = slices.d();
    vectors
        .iter()
        .map(|old| {
            let m = old.len() / b;
            let mut new = ComplexVector::zeros(m * d * b);
            for p in 0..m {
                let block = old.rows(p * b, b);
                for (k, vk) in slices.slices.iter().enumerate() {
                    let out = vk.adjoint() * block;
                    new.rows_mut((p * d + k) * b, b).copy_from(&out);
                }
            }
            new
        })
        .collect()
}

/// Splits the memory index of each vector into separate columns, i.e. the
/// Kraus factor of `Tr_B`. Column `a * b + beta` holds `(1 ⊗ <beta|) x_a`.
fn trace_memory_factor(b: usize, vectors: &[ComplexVector]) -> ComplexMatrix {
    let m = vectors.first().map(|v| v.len() / b).unwrap_or(0);
    let mut f = ComplexMatrix::zeros(m, vectors.len() * b);
    for (a, x) in vectors.iter().enumerate() {
        for p in 0..m {
            for beta in 0..b {
                f[(p, a * b + beta)] = x[p * b + beta];
            }
        }
    }
    f
}

/// Columns `sqrt(w) e` of the positive part of a Hermitian matrix.
fn positive_factor(m: &ComplexMatrix) -> Vec<ComplexVector> {
    let e = hermitian_eig_unchecked(m);
    e.values.iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(i, &w)| e.vectors.column(i) * re(w.sqrt())).collect()
}

fn checked_power(d: usize, n: usize, cap: usize) -> Result<usize> {
    let dim = u32::try_from(n).ok().and_then(|n| d.checked_pow(n)).unwrap_or(usize::MAX);
    if dim > cap {
        return Err(Error::DimensionCap { dim, cap });
    }
    Ok(dim)
}

/// A validated pure model with its transfer operator and fixed point.
#[derive(Debug, Clone)]
pub struct Fcs {
    model: FcsModel,
    slices: KrausSlices,
    transfer: TransferOperator,
    fixed_point: FixedPoint,
    cap: usize,
}

impl Fcs {
    pub fn new(model: FcsModel) -> Result<Self> {
        let deviation = model.isometry_deviation();
        if deviation > TOL_ISOMETRY {
            return Err(Error::NotIsometry { deviation });
        }
        let slices = kraus_slices(&model);
        let transfer = transfer_operator(&model)?;
        let fixed_point = fixed_point(&transfer, 1e-10)?;
        Ok(Self { model, slices, transfer, fixed_point, cap: DIMENSION_CAP })
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn model(&self) -> &FcsModel {
        &self.model
    }

    pub fn d(&self) -> usize {
        self.model.d
    }

    pub fn b(&self) -> usize {
        self.model.b
    }

    pub fn slices(&self) -> &KrausSlices {
        &self.slices
    }

    pub fn transfer(&self) -> &TransferOperator {
        &self.transfer
    }

    pub fn fixed_point(&self) -> &FixedPoint {
        &self.fixed_point
    }

    pub fn rho(&self) -> &ComplexMatrix {
        self.fixed_point.rho.matrix()
    }

    /// Eigen-ensemble of the fixed point: `chi_a = sqrt(mu_a) e_a`, with the
    /// eigenvalues `mu_a` in descending order.
    pub fn memory_ensemble(&self) -> Vec<(f64, ComplexVector)> {
        let e = self.fixed_point.rho.eigen();
        (0..self.b())
            .rev()
            .map(|i| {
                let mu = e.values[i].max(0.0);
                (mu, e.vectors.column(i) * re(mu.sqrt()))
            })
            .collect()
    }

    /// `V^dagger chi_a` for the memory eigen-ensemble: an ensemble for `rho_{A⊗B}`.
    pub fn memory_state_vectors(&self) -> Vec<ComplexVector> {
        let chis: Vec<ComplexVector> = self.memory_ensemble().into_iter().map(|(_, c)| c).collect();
        extend_vectors(&self.slices, &chis)
    }

    /// `rho_{A⊗B} = V^dagger rho V` on dims `(d, b)`.
    pub fn memory_state(&self) -> Result<DensityMatrix> {
        let v = self.model.v();
        DensityMatrix::new(v.adjoint() * self.rho() * v, vec![self.d(), self.b()])
    }

    /// `F` with `rho_[1,n] = F F^dagger`; `d^n` rows and `b^2` columns.
    pub fn interval_factor(&self, n: usize) -> Result<ComplexMatrix> {
        checked_power(self.d(), n, self.cap)?;
        let mut vectors: Vec<ComplexVector> = self.memory_ensemble().into_iter().map(|(_, c)| c).collect();
        for _ in 0..n {
            vectors = extend_vectors(&self.slices, &vectors);
        }
        Ok(trace_memory_factor(self.b(), &vectors))
    }

    /// State of `n` consecutive spins, dims `(d, ..., d)`.
    pub fn rho_interval(&self, n: usize) -> Result<DensityMatrix> {
        if n == 0 {
            return Err(Error::DimensionMismatch("interval length must be at least 1".into()));
        }
        let f = self.interval_factor(n)?;
        DensityMatrix::new(&f * f.adjoint(), vec![self.d(); n])
    }

    /// `(id_A ⊗ E^*^k)(rho_{A⊗B})`: the spin at site 1 and the memory after
    /// `k` traced-out sites.
    pub fn memory_state_after_gap(&self, k: usize) -> Result<ComplexMatrix> {
        let d = self.d();
        let b = self.b();
        let mut omega = self.memory_state()?.into_matrix();
        for _ in 0..k {
            let mut next = ComplexMatrix::zeros(d * b, d * b);
            for i in 0..d {
                for j in 0..d {
                    let block = omega.view((i * b, j * b), (b, b)).into_owned();
                    let mapped = apply_e_hat_dual(&self.slices, &block)?;
                    next.view_mut((i * b, j * b), (b, b)).copy_from(&mapped);
                }
            }
            omega = next;
        }
        Ok(omega)
    }

    /// Factor of `rho_{1,[p,n]}` (spin 1 with spins `p..=n`).
    pub fn spin_and_distant_factor(&self, p: usize, n: usize) -> Result<ComplexMatrix> {
        if p < 2 || n < p {
            return Err(Error::DimensionMismatch(format!("need 2 <= p <= n, got p={p}, n={n}")));
        }
        checked_power(self.d(), n - p + 2, self.cap)?;
        let omega = self.memory_state_after_gap(p - 2)?;
        let mut vectors = positive_factor(&omega);
        for _ in 0..(n - p + 1) {
            vectors = extend_vectors(&self.slices, &vectors);
        }
        Ok(trace_memory_factor(self.b(), &vectors))
    }

    /// `rho_{1,[p,n]}` on dims `(d, d, ..., d)` with `n - p + 2` factors.
    pub fn rho_spin_and_distant(&self, p: usize, n: usize) -> Result<DensityMatrix> {
        let f = self.spin_and_distant_factor(p, n)?;
        DensityMatrix::new(hermitize(&(&f * f.adjoint())), vec![self.d(); n - p + 2])
    }

    /// `rho_1 ⊗ rho_[p,n]`.
    pub fn factorized_reference(&self, p: usize, n: usize) -> Result<DensityMatrix> {
        if p < 2 || n < p {
            return Err(Error::DimensionMismatch(format!("need 2 <= p <= n, got p={p}, n={n}")));
        }
        checked_power(self.d(), n - p + 2, self.cap)?;
        let single = self.rho_interval(1)?;
        let block = self.rho_interval(n - p + 1)?;
        Ok(single.kron(&block))
    }

    /// Superoperator matrix of `E^∞(B) = Tr(rho B) 1`.
    pub fn limit_matrix(&self) -> ComplexMatrix {
        let b = self.b();
        let unit = vectorize(&ComplexMatrix::identity(b, b));
        // Tr(rho B) = sum_ij rho(j,i) B(i,j) = vec(rho^T) . vec(B)
        let row = vectorize(&self.rho().transpose()).transpose();
        unit * row
    }

    /// `E^^n - E^∞`, computed as `(E^ - E^∞)^n` so that it shrinks with
    /// relative rather than absolute accuracy.
    pub fn power_minus_limit(&self, n: usize) -> ComplexMatrix {
        let base = &self.transfer.matrix - self.limit_matrix();
        let dim = base.nrows();
        let mut out = ComplexMatrix::identity(dim, dim);
        if n == 0 {
            return out - self.limit_matrix();
        }
        for _ in 0..n {
            out = &base * out;
        }
        out
    }

    /// `E^^n(B)` by repeated application.
    pub fn apply_e_hat_power(&self, b: &ComplexMatrix, n: usize) -> ComplexMatrix {
        (0..n).fold(b.clone(), |acc, _| self.transfer.apply(&acc))
    }
}

/// Unnormalized `Tr(rho B)`.
pub fn expectation(rho: &ComplexMatrix, b: &ComplexMatrix) -> C64 {
    trace(&(rho * b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{kron, partial_trace_matrix, random, von_neumann_entropy};
    use crate::models;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn aklt() -> Fcs {
        Fcs::new(models::aklt().model).unwrap()
    }

    #[test]
    fn shape_errors() {
        assert!(FcsModel::new(2, 2, ComplexMatrix::zeros(2, 3)).is_err());
        assert!(FcsModel::new(0, 2, ComplexMatrix::zeros(2, 0)).is_err());
    }

    #[test]
    fn validate_cases() {
        let r = validate(&models::aklt().model, 1e-10);
        assert!(r.all_ok(), "{}", r.details);

        let v = ComplexMatrix::identity(4, 4).rows(0, 2).into_owned();
        let m = FcsModel::new(2, 2, v).unwrap();
        let r = validate(&m, 1e-10);
        assert!(r.isometry_ok && !r.pure_ok);
        assert_eq!(r.peripheral_count, 4);

        let scaled = FcsModel::new(3, 2, models::aklt().model.v() * re(2.0)).unwrap();
        assert!(!validate(&scaled, 1e-10).isometry_ok);
    }

    #[test]
    fn kraus_slices_cases() {
        let m = FcsModel::new(1, 2, ComplexMatrix::identity(2, 2)).unwrap();
        let s = kraus_slices(&m);
        assert_eq!(s.d(), 1);
        assert_eq!(s.slices()[0], *m.v());

        let s = kraus_slices(&models::aklt().model);
        assert_eq!(s.d(), 3);
        assert!(s.unitality_deviation() < 1e-12);
    }

    #[test]
    fn e_hat_agrees_with_isometry_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let model = models::random_model(3, 2, 5).unwrap().model;
        let s = kraus_slices(&model);
        let id = ComplexMatrix::identity(3, 3);
        for _ in 0..10 {
            let b = random::gaussian_complex(2, 2, &mut rng);
            let lhs = apply_e_hat(&s, &b).unwrap();
            let rhs = model.apply_e(&id, &b);
            assert!(max_abs_diff(&lhs, &rhs) < 1e-12);
        }
        assert!(apply_e_hat(&s, &ComplexMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn aklt_e_hat_on_sigma_z() {
        let f = aklt();
        let z = linalg::pauli_z();
        let out = apply_e_hat(f.slices(), &z).unwrap();
        assert!(max_abs_diff(&out, &(z * re(-1.0 / 3.0))) < 1e-14);
        let one = ComplexMatrix::identity(2, 2);
        assert!(max_abs_diff(&apply_e_hat(f.slices(), &one).unwrap(), &one) < 1e-14);
        let back = apply_e_hat_dual(f.slices(), f.rho()).unwrap();
        assert!(max_abs_diff(&back, f.rho()) < 1e-12);
    }

    #[test]
    fn transfer_matrix_matches_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let model = models::random_model(2, 3, 8).unwrap().model;
        let top = transfer_operator(&model).unwrap();
        let s = kraus_slices(&model);
        for _ in 0..10 {
            let b = random::gaussian_complex(3, 3, &mut rng);
            assert!(max_abs_diff(&top.apply(&b), &apply_e_hat(&s, &b).unwrap()) < 1e-12);
            assert!(max_abs_diff(&top.apply_dual(&b), &apply_e_hat_dual(&s, &b).unwrap()) < 1e-12);
            // trace duality: Tr(X^dagger E(B)) = Tr(E*(X)^dagger B)
            let x = random::gaussian_complex(3, 3, &mut rng);
            let l = trace(&(x.adjoint() * top.apply(&b)));
            let r = trace(&(top.apply_dual(&x).adjoint() * &b));
            assert!((l - r).norm() < 1e-12);
            let rho = random::density_matrix(3, 3, &mut rng);
            assert!((trace(&top.apply_dual(&rho)) - re(1.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn trivial_transfer_operator() {
        let m = FcsModel::new(1, 1, ComplexMatrix::from_element(1, 1, re(1.0))).unwrap();
        let top = transfer_operator(&m).unwrap();
        assert_eq!(top.matrix.shape(), (1, 1));
        assert!((top.matrix[(0, 0)] - re(1.0)).norm() < 1e-15);
        let fp = fixed_point(&top, 1e-12).unwrap();
        assert!((fp.rho.matrix()[(0, 0)] - re(1.0)).norm() < 1e-15);
    }

    #[test]
    fn aklt_spectrum_and_fixed_point() {
        let f = aklt();
        let ev = &f.transfer().spectrum.eigenvalues;
        assert!((ev[0] - re(1.0)).norm() < 1e-10);
        for z in &ev[1..] {
            assert!((z - re(-1.0 / 3.0)).norm() < 1e-10, "{z}");
        }
        let half = ComplexMatrix::identity(2, 2) * re(0.5);
        assert!(max_abs_diff(f.rho(), &half) < 1e-10);
        let iter = fixed_point_by_iteration(f.transfer(), 1e-14, 1000).unwrap();
        assert!(max_abs_diff(&iter, &half) < 1e-12);
    }

    #[test]
    fn random_models_have_unique_peripheral_eigenvalue() {
        for seed in 0..20 {
            let model = models::random_model(2, 2, seed).unwrap().model;
            let top = transfer_operator(&model).unwrap();
            assert_eq!(top.peripheral_count(), 1);
            let fp = fixed_point(&top, 1e-10).unwrap();
            let res = trace_norm(&(top.apply_dual(fp.rho.matrix()) - fp.rho.matrix()));
            assert!(res < 1e-10);
        }
    }

    #[test]
    fn not_pure_rejected() {
        let v = ComplexMatrix::identity(4, 4).rows(0, 2).into_owned();
        let top = transfer_operator(&FcsModel::new(2, 2, v).unwrap()).unwrap();
        assert!(matches!(fixed_point(&top, 1e-10), Err(Error::NotPure { .. })));
    }

    #[test]
    fn memory_state_pairing() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let f = Fcs::new(models::random_model(2, 2, 3).unwrap().model).unwrap();
        let rab = f.memory_state().unwrap();
        for _ in 0..10 {
            let a = random::gaussian_complex(2, 2, &mut rng);
            let b = random::gaussian_complex(2, 2, &mut rng);
            let lhs = trace(&(rab.matrix() * kron(&a, &b)));
            let rhs = trace(&(f.rho() * f.model().apply_e(&a, &b)));
            assert!((lhs - rhs).norm() < 1e-10);
        }
        assert!(rab.rank() <= 2);
    }

    #[test]
    fn aklt_memory_state_and_marginal() {
        let f = aklt();
        let rab = f.memory_state().unwrap();
        assert_eq!(rab.dim(), 6);
        assert_eq!(rab.rank(), 2);
        let r1 = f.rho_interval(1).unwrap();
        let third = ComplexMatrix::identity(3, 3) * re(1.0 / 3.0);
        assert!(max_abs_diff(r1.matrix(), &third) < 1e-10);
        assert!((von_neumann_entropy(&r1) - 3f64.ln()).abs() < 1e-10);
        let via_ab = partial_trace_matrix(rab.matrix(), &[3, 2], &[0]).unwrap();
        assert!(max_abs_diff(r1.matrix(), &via_ab) < 1e-12);
    }

    #[test]
    fn interval_marginal_consistency() {
        for f in [aklt(), Fcs::new(models::random_model(2, 2, 1).unwrap().model).unwrap()] {
            for n in 2..=5 {
                let big = f.rho_interval(n).unwrap();
                let small = f.rho_interval(n - 1).unwrap();
                let first: Vec<usize> = (1..n).collect();
                let last: Vec<usize> = (0..n - 1).collect();
                assert!(max_abs_diff(big.partial_trace(&last).unwrap().matrix(), small.matrix()) < 1e-12);
                assert!(max_abs_diff(big.partial_trace(&first).unwrap().matrix(), small.matrix()) < 1e-12);
            }
        }
    }

    #[test]
    fn interval_matches_kraus_product_formula() {
        // <i|rho_n|j> = Tr(K_i^dagger rho K_j), K_i = V_{i1} ... V_{in}
        let f = Fcs::new(models::random_model(2, 3, 4).unwrap().model).unwrap();
        let n = 3;
        let rho_n = f.rho_interval(n).unwrap();
        let d = 2;
        let word = |mut idx: usize| {
            let mut digits = vec![0; n];
            for k in (0..n).rev() {
                digits[k] = idx % d;
                idx /= d;
            }
            digits.iter().fold(ComplexMatrix::identity(3, 3), |acc, &k| acc * &f.slices().slices()[k])
        };
        for i in 0..8 {
            for j in 0..8 {
                let val = trace(&(word(i).adjoint() * f.rho() * word(j)));
                assert!((val - rho_n.matrix()[(i, j)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn product_model_interval_is_pure() {
        let f = Fcs::new(models::product_model(&linalg::basis_vector(2, 0)).unwrap().model).unwrap();
        for n in 1..=4 {
            let r = f.rho_interval(n).unwrap();
            assert!(von_neumann_entropy(&r).abs() < 1e-10);
            assert!((r.matrix()[(0, 0)] - re(1.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn spin_and_distant_matches_partial_trace() {
        for f in [aklt(), Fcs::new(models::random_model(2, 2, 6).unwrap().model).unwrap()] {
            for (p, n) in [(2, 3), (3, 3), (3, 4), (4, 5)] {
                let direct = f.rho_spin_and_distant(p, n).unwrap();
                let full = f.rho_interval(n).unwrap();
                let mut keep = vec![0];
                keep.extend((p - 1)..n);
                let traced = full.partial_trace(&keep).unwrap();
                assert!(max_abs_diff(direct.matrix(), traced.matrix()) < 1e-10, "p={p} n={n}");
            }
        }
    }

    #[test]
    fn factorized_reference_cases() {
        let prod = Fcs::new(models::product_model(&linalg::basis_vector(3, 1)).unwrap().model).unwrap();
        let a = prod.rho_spin_and_distant(3, 4).unwrap();
        let b = prod.factorized_reference(3, 4).unwrap();
        assert!(max_abs_diff(a.matrix(), b.matrix()) < 1e-14);

        let f = aklt();
        let t2 = f.rho_spin_and_distant(2, 2).unwrap().trace_distance(&f.factorized_reference(2, 2).unwrap());
        let t3 = f.rho_spin_and_distant(3, 3).unwrap().trace_distance(&f.factorized_reference(3, 3).unwrap());
        assert!(t3 < t2);
        assert!((trace(f.factorized_reference(3, 3).unwrap().matrix()) - re(1.0)).norm() < 1e-12);
    }

    #[test]
    fn dimension_cap_is_enforced() {
        let f = aklt();
        assert!(matches!(f.rho_interval(8), Err(Error::DimensionCap { dim: 6561, cap: 4096 })));
        let f = aklt().with_cap(27);
        assert!(f.rho_interval(3).is_ok());
        assert!(f.rho_interval(4).is_err());
    }

    #[test]
    fn power_minus_limit_is_difference_of_powers() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let f = Fcs::new(models::random_model(2, 2, 9).unwrap().model).unwrap();
        let b = random::gaussian_complex(2, 2, &mut rng);
        for n in [1, 2, 5, 9] {
            let direct = f.apply_e_hat_power(&b, n) - ComplexMatrix::identity(2, 2) * expectation(f.rho(), &b);
            let via = unvectorize(&(f.power_minus_limit(n) * vectorize(&b)), 2, 2);
            assert!(max_abs_diff(&direct, &via) < 1e-12);
        }
    }
}
