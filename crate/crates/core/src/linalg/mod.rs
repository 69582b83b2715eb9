//! Dense complex linear algebra for small operator spaces.
//!
//! Everything here works on `nalgebra::DMatrix<Complex64>`. Memory and spin
//! dimensions are tiny (at most 8), while interval states reach a few thousand
//! rows, so plain dense kernels are all that is needed.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

mod density;
pub use density::{entropy_of_unnormalized, von_neumann_entropy, DensityDiagnostics, DensityMatrix};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;
pub type ComplexVector = DVector<C64>;

/// Numerical tolerances shared by every module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Max abs deviation of `m - m^dagger` accepted as Hermitian.
    pub herm: f64,
    /// Allowed deviation of a density matrix trace from 1.
    pub trace: f64,
    /// Most negative eigenvalue accepted for a density matrix.
    pub psd: f64,
    /// Residual accepted for eigendecomposition reconstruction.
    pub reconstruction: f64,
    /// Eigenvalues closer than this are counted as degenerate.
    pub degeneracy: f64,
    /// Eigenvalues above this count towards the rank.
    pub rank: f64,
}

pub const TOLERANCES: Tolerances =
    Tolerances { herm: 1e-10, trace: 1e-10, psd: 1e-10, reconstruction: 1e-9, degeneracy: 1e-12, rank: 1e-10 };

impl Default for Tolerances {
    fn default() -> Self {
        TOLERANCES
    }
}

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn from_real_rows(rows: usize, cols: usize, data: &[f64]) -> ComplexMatrix {
    DMatrix::from_row_iterator(rows, cols, data.iter().map(|&x| re(x)))
}

pub fn diag_real(values: &[f64]) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(values.len(), values.len());
    for (i, &v) in values.iter().enumerate() {
        m[(i, i)] = re(v);
    }
    m
}

pub fn pauli_x() -> ComplexMatrix {
    from_real_rows(2, 2, &[0.0, 1.0, 1.0, 0.0])
}

pub fn pauli_y() -> ComplexMatrix {
    DMatrix::from_row_slice(2, 2, &[re(0.0), c(0.0, -1.0), c(0.0, 1.0), re(0.0)])
}

pub fn pauli_z() -> ComplexMatrix {
    from_real_rows(2, 2, &[1.0, 0.0, 0.0, -1.0])
}

pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch in max_abs_diff");
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn hermitian_deviation(m: &ComplexMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    max_abs_diff(m, &m.adjoint())
}

pub fn hermitize(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn trace(m: &ComplexMatrix) -> C64 {
    m.diagonal().iter().sum()
}

pub fn is_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Kronecker product, first factor varying slowest.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

pub fn kron_vec(a: &ComplexVector, b: &ComplexVector) -> ComplexVector {
    a.kronecker(b)
}

/// Outer product `|u><v|`.
pub fn outer(u: &ComplexVector, v: &ComplexVector) -> ComplexMatrix {
    u * v.adjoint()
}

/// Column-stacking vectorization: the entry `(r, c)` lands at `r + rows * c`.
pub fn vectorize(m: &ComplexMatrix) -> ComplexVector {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvectorize(v: &ComplexVector, rows: usize, cols: usize) -> ComplexMatrix {
    assert_eq!(v.len(), rows * cols);
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

/// Offsets of every multi-index over `factors` inside a row-major composite index.
fn composite_offsets(dims: &[usize], factors: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let mut offsets = vec![0usize];
    for &f in factors {
        let mut next = Vec::with_capacity(offsets.len() * dims[f]);
        for &o in &offsets {
            for digit in 0..dims[f] {
                next.push(o + digit * strides[f]);
            }
        }
        offsets = next;
    }
    offsets
}

/// Partial trace of a square matrix over every factor not listed in `keep`.
///
/// `keep` is a set of factor indices; the kept factors stay in their
/// original order.
pub fn partial_trace_matrix(m: &ComplexMatrix, dims: &[usize], keep: &[usize]) -> Result<ComplexMatrix> {
    let total: usize = dims.iter().product();
    if !m.is_square() || m.nrows() != total {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{} but factor dims {:?} multiply to {}",
            m.nrows(),
            m.ncols(),
            dims,
            total
        )));
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if let Some(&bad) = kept.iter().find(|&&k| k >= dims.len()) {
        return Err(Error::IndexOutOfRange { index: bad, factors: dims.len() });
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !kept.contains(k)).collect();
    let keep_off = composite_offsets(dims, &kept);
    let trace_off = composite_offsets(dims, &traced);
    let n = keep_off.len();
    let mut out = ComplexMatrix::zeros(n, n);
    for (i, &ri) in keep_off.iter().enumerate() {
        for (j, &cj) in keep_off.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for &t in &trace_off {
                acc += m[(ri + t, cj + t)];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// Partial transpose of the factor `factor` of a square composite matrix.
pub fn partial_transpose_matrix(m: &ComplexMatrix, dims: &[usize], factor: usize) -> Result<ComplexMatrix> {
    let total: usize = dims.iter().product();
    if !m.is_square() || m.nrows() != total {
        return Err(Error::DimensionMismatch(format!("matrix {}x{} vs dims {:?}", m.nrows(), m.ncols(), dims)));
    }
    if factor >= dims.len() {
        return Err(Error::IndexOutOfRange { index: factor, factors: dims.len() });
    }
    let outer_dim: usize = dims[..factor].iter().product();
    let d = dims[factor];
    let inner: usize = dims[factor + 1..].iter().product();
    let idx = |o: usize, k: usize, i: usize| (o * d + k) * inner + i;
    let mut out = ComplexMatrix::zeros(total, total);
    for o1 in 0..outer_dim {
        for k1 in 0..d {
            for i1 in 0..inner {
                for o2 in 0..outer_dim {
                    for k2 in 0..d {
                        for i2 in 0..inner {
                            out[(idx(o1, k1, i1), idx(o2, k2, i2))] = m[(idx(o1, k2, i1), idx(o2, k1, i2))];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Eigendecomposition of a Hermitian matrix; eigenvalues ascending,
/// eigenvectors as the matching columns of `vectors`.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let q = &self.vectors;
        let lambda = diag_real(&self.values);
        q * lambda * q.adjoint()
    }

    /// Applies `f` to the eigenvalues: `Q f(Lambda) Q^dagger`.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> ComplexMatrix {
        let vals: Vec<f64> = self.values.iter().map(|&x| f(x)).collect();
        &self.vectors * diag_real(&vals) * self.vectors.adjoint()
    }
}

pub fn hermitian_eig(m: &ComplexMatrix) -> Result<HermitianEigen> {
    let dev = hermitian_deviation(m);
    if dev > TOLERANCES.herm {
        return Err(Error::NotHermitian { deviation: dev });
    }
    Ok(hermitian_eig_unchecked(&hermitize(m)))
}

/// Same as [`hermitian_eig`] without the Hermiticity gate. The input is
/// Hermitized before decomposition.
pub fn hermitian_eig_unchecked(m: &ComplexMatrix) -> HermitianEigen {
    let n = m.nrows();
    if n == 0 {
        return HermitianEigen { values: vec![], vectors: ComplexMatrix::zeros(0, 0) };
    }
    let eig = nalgebra::linalg::SymmetricEigen::new(hermitize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    HermitianEigen { values, vectors }
}

/// Eigenvalues of a square (generally non-normal) matrix, descending modulus.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<C64>,
    pub eigenvectors: Option<ComplexMatrix>,
}

impl Spectrum {
    pub fn moduli(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|z| z.norm()).collect()
    }

    /// Eigenvalues grouped into clusters closer than the degeneracy tolerance,
    /// returned as (representative, multiplicity).
    pub fn multiplicities(&self) -> Vec<(C64, usize)> {
        let mut groups: Vec<(C64, usize)> = Vec::new();
        for &z in &self.eigenvalues {
            match groups.iter_mut().find(|(g, _)| (g - z).norm() < TOLERANCES.degeneracy) {
                Some(g) => g.1 += 1,
                None => groups.push((z, 1)),
            }
        }
        groups
    }
}

pub fn general_spectrum(m: &ComplexMatrix) -> Result<Spectrum> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!("spectrum of a {}x{} matrix", m.nrows(), m.ncols())));
    }
    if m.nrows() == 0 {
        return Ok(Spectrum { eigenvalues: vec![], eigenvectors: None });
    }
    // Complex Schur form is upper triangular, so the diagonal is the spectrum.
    let (_, t) = nalgebra::linalg::Schur::new(m.clone()).unpack();
    let mut eigenvalues: Vec<C64> = t.diagonal().iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.re.total_cmp(&a.re)).then(b.im.total_cmp(&a.im)));
    Ok(Spectrum { eigenvalues, eigenvectors: None })
}

pub fn singular_values(m: &ComplexMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return vec![];
    }
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// Schatten 1-norm: the sum of singular values.
pub fn trace_norm(m: &ComplexMatrix) -> f64 {
    if m.is_square() && hermitian_deviation(m) <= 1e-14 * (1.0 + max_abs(m)) {
        return hermitian_eig_unchecked(m).values.iter().map(|x| x.abs()).sum();
    }
    singular_values(m).iter().sum()
}

pub fn operator_norm(m: &ComplexMatrix) -> f64 {
    singular_values(m).iter().copied().fold(0.0, f64::max)
}

/// `-sum p ln p` with `0 ln 0 = 0`; non-positive values are skipped.
pub fn entropy_of_spectrum(values: &[f64]) -> f64 {
    values.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
}

/// Unit vector for a state given by arbitrary (non-zero) amplitudes.
pub fn normalized(v: &ComplexVector) -> ComplexVector {
    v.unscale(v.norm())
}

pub fn basis_vector(dim: usize, k: usize) -> ComplexVector {
    let mut v = ComplexVector::zeros(dim);
    v[k] = re(1.0);
    v
}

/// Rows of `m` made orthonormal by modified Gram-Schmidt (two passes).
pub fn orthonormalize_rows(m: &ComplexMatrix) -> Option<ComplexMatrix> {
    let mut rows: Vec<nalgebra::RowDVector<C64>> = (0..m.nrows()).map(|i| m.row(i).into_owned()).collect();
    for i in 0..rows.len() {
        for _ in 0..2 {
            for j in 0..i {
                let proj = rows[i].dot(&rows[j].conjugate());
                let rj = rows[j].clone();
                rows[i] -= rj * proj;
            }
        }
        let norm = rows[i].norm();
        if norm < 1e-12 {
            return None;
        }
        rows[i] /= re(norm);
    }
    Some(ComplexMatrix::from_rows(&rows))
}

/// Seeded random matrices used by tests, restarts and the model zoo.
pub mod random {
    use super::*;

    pub fn gaussian_complex<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
        DMatrix::from_fn(rows, cols, |_, _| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            c(a, b)
        })
    }

    pub fn gaussian_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> ComplexVector {
        DVector::from_fn(dim, |_, _| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            c(a, b)
        })
    }

    pub fn unit_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> ComplexVector {
        normalized(&gaussian_vector(dim, rng))
    }

    /// Haar-distributed unitary (QR of a Ginibre matrix with phase fix).
    pub fn unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
        let g = gaussian_complex(n, n, rng);
        let qr = g.qr();
        let (mut q, r) = qr.unpack();
        for j in 0..n {
            let d = r[(j, j)];
            let phase = if d.norm() > 0.0 { d / d.norm() } else { re(1.0) };
            let col = q.column(j) * phase;
            q.set_column(j, &col);
        }
        q
    }

    /// Isometry with `rows >= cols` (first columns of a Haar unitary).
    pub fn isometry<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
        assert!(rows >= cols);
        unitary(rows, rng).columns(0, cols).into_owned()
    }

    pub fn hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
        let g = gaussian_complex(n, n, rng);
        hermitize(&g)
    }

    /// Density matrix `G G^dagger / Tr` with `G` of shape `dim x rank`.
    pub fn density_matrix<R: Rng + ?Sized>(dim: usize, rank: usize, rng: &mut R) -> ComplexMatrix {
        let g = gaussian_complex(dim, rank, rng);
        let m = &g * g.adjoint();
        let t = trace(&m);
        m / t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kron_identity_and_diagonal() {
        let i2 = ComplexMatrix::identity(2, 2);
        assert_eq!(kron(&i2, &i2), ComplexMatrix::identity(4, 4));
        let a = diag_real(&[1.0, 2.0]);
        let b = diag_real(&[3.0, 4.0]);
        assert_eq!(kron(&a, &b), diag_real(&[3.0, 4.0, 6.0, 8.0]));
    }

    #[test]
    fn kron_acts_factorwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random::gaussian_complex(2, 2, &mut rng);
        let b = random::gaussian_complex(2, 2, &mut rng);
        let x = random::gaussian_vector(2, &mut rng);
        let y = random::gaussian_vector(2, &mut rng);
        let lhs = kron(&a, &b) * kron_vec(&x, &y);
        let rhs = kron_vec(&(&a * &x), &(&b * &y));
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn partial_trace_of_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random::density_matrix(2, 2, &mut rng);
        let b = random::density_matrix(3, 3, &mut rng);
        let ab = kron(&a, &b);
        let ra = partial_trace_matrix(&ab, &[2, 3], &[0]).unwrap();
        assert!(max_abs_diff(&ra, &a) < 1e-12);
        let rb = partial_trace_matrix(&ab, &[2, 3], &[1]).unwrap();
        assert!(max_abs_diff(&rb, &b) < 1e-12);
        let full = partial_trace_matrix(&ab, &[2, 3], &[]).unwrap();
        assert_eq!(full.shape(), (1, 1));
        assert!((full[(0, 0)] - re(1.0)).norm() < 1e-12);
    }

    #[test]
    fn partial_trace_of_bell_state() {
        let s = 1.0 / 2f64.sqrt();
        let psi = ComplexVector::from_vec(vec![re(s), re(0.0), re(0.0), re(s)]);
        let rho = outer(&psi, &psi);
        let r = partial_trace_matrix(&rho, &[2, 2], &[0]).unwrap();
        assert!(max_abs_diff(&r, &diag_real(&[0.5, 0.5])) < 1e-15);
    }

    #[test]
    fn partial_trace_rejects_bad_index() {
        let m = ComplexMatrix::identity(4, 4);
        assert!(matches!(
            partial_trace_matrix(&m, &[2, 2], &[2]),
            Err(Error::IndexOutOfRange { index: 2, factors: 2 })
        ));
        assert!(partial_trace_matrix(&m, &[2, 3], &[0]).is_err());
    }

    #[test]
    fn partial_trace_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dims = [2, 3, 2, 2];
        let m = random::density_matrix(24, 5, &mut rng);
        let once = partial_trace_matrix(&m, &dims, &[0, 3]).unwrap();
        let step = partial_trace_matrix(&m, &dims, &[0, 2, 3]).unwrap();
        let twice = partial_trace_matrix(&step, &[2, 2, 2], &[0, 2]).unwrap();
        assert!(max_abs_diff(&once, &twice) < 1e-12);
    }

    #[test]
    fn kron_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random::gaussian_complex(2, 3, &mut rng);
        let b = random::gaussian_complex(3, 2, &mut rng);
        let c = random::gaussian_complex(2, 2, &mut rng);
        assert!(max_abs_diff(&kron(&kron(&a, &b), &c), &kron(&a, &kron(&b, &c))) < 1e-14);
    }

    #[test]
    fn hermitian_eig_known_cases() {
        let e = hermitian_eig(&ComplexMatrix::identity(3, 3)).unwrap();
        assert_eq!(e.values.len(), 3);
        assert!(e.values.iter().all(|v| (v - 1.0).abs() < 1e-14));
        let e = hermitian_eig(&pauli_x()).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn hermitian_eig_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random::hermitian(6, &mut rng);
        let e = hermitian_eig(&h).unwrap();
        assert!(max_abs_diff(&e.reconstruct(), &h) < 1e-9);
        let qtq = e.vectors.adjoint() * &e.vectors;
        assert!(max_abs_diff(&qtq, &ComplexMatrix::identity(6, 6)) < 1e-9);
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn hermitian_eig_rejects_non_hermitian() {
        let m = from_real_rows(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(hermitian_eig(&m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn spectrum_of_diagonal_and_rotation() {
        let mut m = ComplexMatrix::zeros(3, 3);
        m[(0, 0)] = re(3.0);
        m[(1, 1)] = c(0.0, 2.0);
        m[(2, 2)] = re(-1.0);
        let s = general_spectrum(&m).unwrap();
        let mods = s.moduli();
        assert!((mods[0] - 3.0).abs() < 1e-12 && (mods[1] - 2.0).abs() < 1e-12 && (mods[2] - 1.0).abs() < 1e-12);

        let t = std::f64::consts::FRAC_PI_3;
        let rot = from_real_rows(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]);
        let s = general_spectrum(&rot).unwrap();
        let want = [C64::from_polar(1.0, t), C64::from_polar(1.0, -t)];
        for w in want {
            assert!(s.eigenvalues.iter().any(|z| (z - w).norm() < 1e-12));
        }
    }

    #[test]
    fn spectrum_sums_to_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = random::gaussian_complex(7, 7, &mut rng);
        let s = general_spectrum(&m).unwrap();
        let sum: C64 = s.eigenvalues.iter().sum();
        assert!((sum - trace(&m)).norm() < 1e-8);
        assert!(s.moduli().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn trace_norm_cases() {
        assert!((trace_norm(&diag_real(&[1.0, -2.0])) - 3.0).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = random::unitary(5, &mut rng);
        assert!((trace_norm(&u) - 5.0).abs() < 1e-10);
        let m = random::gaussian_complex(4, 4, &mut rng);
        let via_eig: f64 = hermitian_eig(&(m.adjoint() * &m)).unwrap().values.iter().map(|x| x.max(0.0).sqrt()).sum();
        assert!((trace_norm(&m) - via_eig).abs() < 1e-10);
        assert!(trace_norm(&m) >= trace(&m).norm());
    }

    #[test]
    fn partial_transpose_of_bell_state() {
        let s = 1.0 / 2f64.sqrt();
        let psi = ComplexVector::from_vec(vec![re(s), re(0.0), re(0.0), re(s)]);
        let pt = partial_transpose_matrix(&outer(&psi, &psi), &[2, 2], 1).unwrap();
        let e = hermitian_eig(&pt).unwrap();
        assert!((e.values[0] + 0.5).abs() < 1e-14);
        // transposing both factors is the full transpose
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = random::gaussian_complex(6, 6, &mut rng);
        let both = partial_transpose_matrix(&partial_transpose_matrix(&m, &[2, 3], 0).unwrap(), &[2, 3], 1).unwrap();
        assert!(max_abs_diff(&both, &m.transpose()) < 1e-15);
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = random::unitary(6, &mut rng);
        assert!(max_abs_diff(&(u.adjoint() * &u), &ComplexMatrix::identity(6, 6)) < 1e-12);
    }
}
