use serde::Serialize;

use super::{
    hermitian_deviation, hermitian_eig_unchecked, hermitize, is_finite, kron, outer, partial_trace_matrix, trace,
    trace_norm, ComplexMatrix, ComplexVector, HermitianEigen, TOLERANCES,
};
use crate::error::{Error, Result};

/// Positive, unit-trace matrix together with its tensor-factor dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
    dims: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DensityDiagnostics {
    pub hermitian_deviation: f64,
    pub trace_deviation: f64,
    pub min_eigenvalue: f64,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity before wrapping.
    pub fn new(matrix: ComplexMatrix, dims: Vec<usize>) -> Result<Self> {
        let diag = Self::diagnose(&matrix, &dims)?;
        if diag.hermitian_deviation > TOLERANCES.herm {
            return Err(Error::InvalidDensityMatrix(format!(
                "not Hermitian (deviation {:.3e})",
                diag.hermitian_deviation
            )));
        }
        if diag.trace_deviation > TOLERANCES.trace {
            return Err(Error::InvalidDensityMatrix(format!("trace deviates from 1 by {:.3e}", diag.trace_deviation)));
        }
        if diag.min_eigenvalue < -TOLERANCES.psd {
            return Err(Error::InvalidDensityMatrix(format!("negative eigenvalue {:.3e}", diag.min_eigenvalue)));
        }
        Ok(Self { matrix: hermitize(&matrix), dims })
    }

    pub fn diagnose(matrix: &ComplexMatrix, dims: &[usize]) -> Result<DensityDiagnostics> {
        let total: usize = dims.iter().product();
        if !matrix.is_square() || matrix.nrows() != total {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix with factor dims {:?}",
                matrix.nrows(),
                matrix.ncols(),
                dims
            )));
        }
        if !is_finite(matrix) {
            return Err(Error::InvalidDensityMatrix("non-finite entries".into()));
        }
        let hermitian_deviation = hermitian_deviation(matrix);
        let trace_deviation = (trace(matrix) - super::re(1.0)).norm();
        let min_eigenvalue = hermitian_eig_unchecked(matrix).values.first().copied().unwrap_or(0.0);
        Ok(DensityDiagnostics { hermitian_deviation, trace_deviation, min_eigenvalue })
    }

    /// `|psi><psi|` for a unit vector.
    pub fn pure(psi: &ComplexVector, dims: Vec<usize>) -> Result<Self> {
        let norm = psi.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::NonUnitVector { norm });
        }
        Self::new(outer(psi, psi), dims)
    }

    pub fn maximally_mixed(dims: Vec<usize>) -> Self {
        let n: usize = dims.iter().product();
        let m = ComplexMatrix::identity(n, n).unscale(n as f64);
        Self { matrix: m, dims }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn eigen(&self) -> HermitianEigen {
        hermitian_eig_unchecked(&self.matrix)
    }

    pub fn rank(&self) -> usize {
        self.eigen().values.iter().filter(|&&v| v > TOLERANCES.rank).count()
    }

    /// Same matrix viewed with a different factorization of its dimension.
    pub fn with_dims(&self, dims: Vec<usize>) -> Result<Self> {
        let total: usize = dims.iter().product();
        if total != self.dim() {
            return Err(Error::DimensionMismatch(format!("dims {:?} do not multiply to {}", dims, self.dim())));
        }
        Ok(Self { matrix: self.matrix.clone(), dims })
    }

    /// Collapses the factors into two groups `[0, split)` and `[split, n)`.
    pub fn bipartition(&self, split: usize) -> Result<Self> {
        if split == 0 || split >= self.dims.len() {
            return Err(Error::IndexOutOfRange { index: split, factors: self.dims.len() });
        }
        let a: usize = self.dims[..split].iter().product();
        let b: usize = self.dims[split..].iter().product();
        self.with_dims(vec![a, b])
    }

    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        let m = partial_trace_matrix(&self.matrix, &self.dims, keep)?;
        let mut kept: Vec<usize> = keep.to_vec();
        kept.sort_unstable();
        kept.dedup();
        let dims = kept.iter().map(|&k| self.dims[k]).collect();
        Ok(Self { matrix: m, dims })
    }

    pub fn kron(&self, other: &Self) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self { matrix: kron(&self.matrix, &other.matrix), dims }
    }

    pub fn trace_distance(&self, other: &Self) -> f64 {
        trace_norm(&(&self.matrix - &other.matrix))
    }
}

/// Von Neumann entropy in nats.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    super::entropy_of_spectrum(&rho.eigen().values)
}

/// Entropy of a positive matrix normalized by its trace; zero matrices give 0.
pub fn entropy_of_unnormalized(m: &ComplexMatrix) -> f64 {
    let t = trace(m).re;
    if t <= 0.0 {
        return 0.0;
    }
    let vals: Vec<f64> = hermitian_eig_unchecked(m).values.iter().map(|v| v / t).collect();
    super::entropy_of_spectrum(&vals)
}

#[cfg(test)]
mod tests {
    use super::super::{diag_real, random};
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn entropy_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let psi = random::unit_vector(4, &mut rng);
        let pure = DensityMatrix::pure(&psi, vec![4]).unwrap();
        assert!(von_neumann_entropy(&pure).abs() < 1e-10);

        let mixed = DensityMatrix::maximally_mixed(vec![5]);
        assert!((von_neumann_entropy(&mixed) - 5f64.ln()).abs() < 1e-12);

        let rho = DensityMatrix::new(diag_real(&[1.0 / 3.0, 2.0 / 3.0]), vec![2]).unwrap();
        let expected = -(1.0 / 3.0) * (1.0f64 / 3.0).ln() - (2.0 / 3.0) * (2.0f64 / 3.0).ln();
        assert!((von_neumann_entropy(&rho) - expected).abs() < 1e-14);
        assert!((expected - (3f64.ln() - (2.0 / 3.0) * 2f64.ln())).abs() < 1e-14);
    }

    #[test]
    fn rejects_invalid_matrices() {
        assert!(DensityMatrix::new(diag_real(&[0.5, 0.6]), vec![2]).is_err());
        assert!(DensityMatrix::new(diag_real(&[1.5, -0.5]), vec![2]).is_err());
        assert!(DensityMatrix::new(diag_real(&[0.5, 0.5]), vec![3]).is_err());
        let mut m = diag_real(&[0.5, 0.5]);
        m[(0, 1)] = super::super::re(0.1);
        assert!(DensityMatrix::new(m, vec![2]).is_err());
    }

    #[test]
    fn entropy_unitarily_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let rho = random::density_matrix(5, 3, &mut rng);
            let u = random::unitary(5, &mut rng);
            let a = DensityMatrix::new(rho.clone(), vec![5]).unwrap();
            let b = DensityMatrix::new(&u * rho * u.adjoint(), vec![5]).unwrap();
            assert!((von_neumann_entropy(&a) - von_neumann_entropy(&b)).abs() < 1e-10);
        }
    }

    #[test]
    fn trace_norm_invariance_and_triangle() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let a = random::gaussian_complex(4, 4, &mut rng);
            let b = random::gaussian_complex(4, 4, &mut rng);
            let c = random::gaussian_complex(4, 4, &mut rng);
            let u = random::unitary(4, &mut rng);
            let v = random::unitary(4, &mut rng);
            assert!((trace_norm(&(&u * &a * &v)) - trace_norm(&a)).abs() < 1e-10);
            assert!(trace_norm(&(&a - &c)) <= trace_norm(&(&a - &b)) + trace_norm(&(&b - &c)) + 1e-12);
        }
    }

    #[test]
    fn partial_trace_keeps_dims() {
        let rho = DensityMatrix::maximally_mixed(vec![2, 3, 4]);
        let r = rho.partial_trace(&[2, 0]).unwrap();
        assert_eq!(r.dims(), &[2, 4]);
        assert!((von_neumann_entropy(&r) - 8f64.ln()).abs() < 1e-12);
    }
}
