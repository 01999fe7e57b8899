//! Dense symmetric eigendecomposition.

use alloc::vec::Vec;

use faer::{Mat, Side};

use crate::circuit::HermitianMatrix;
use crate::{Error, Result};

/// Relative asymmetry tolerated before a matrix is rejected as non-Hermitian.
pub const HERMITIAN_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `values`.
    pub vectors: Mat<f64>,
}

impl SymmetricEigen {
    pub fn new(h: &HermitianMatrix) -> Result<Self> {
        let (asymmetry, scale) = h.asymmetry();
        if asymmetry > HERMITIAN_TOLERANCE * scale {
            return Err(Error::NotHermitian { asymmetry, scale });
        }
        let evd = h
            .as_mat()
            .self_adjoint_eigen(Side::Lower)
            .map_err(|_| Error::EigenFailed)?;
        let s = evd.S().column_vector();
        let u = evd.U();
        let n = h.dim();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
        let values = order.iter().map(|&k| s[k]).collect();
        let vectors = Mat::from_fn(n, n, |i, j| u[(i, order[j])]);
        Ok(SymmetricEigen { values, vectors })
    }
}
