use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2};

use super::sparse::SparseOperator;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_EXACT_N: usize = 5_000;

/// Symmetric eigendecomposition, eigenvalues ascending and eigenvectors as
/// orthonormal columns.
pub fn eig_sym(l: &SparseOperator, max_n: usize) -> Result<(Array1<f64>, Array2<f64>)> {
    if l.rows() != l.cols() {
        return Err(Error::Shape(format!("eig_sym on {}x{} matrix", l.rows(), l.cols())));
    }
    if !l.is_symmetric() {
        return Err(Error::Data("eig_sym requires a symmetric operator".into()));
    }
    eig_sym_dense(&l.to_dense(), max_n)
}

pub fn eig_sym_dense(a: &Array2<f64>, max_n: usize) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if n > max_n {
        return Err(Error::OverCap { n, cap: max_n });
    }
    if n == 0 {
        return Ok((Array1::zeros(0), Array2::zeros((0, 0))));
    }
    let m = DMatrix::from_fn(n, n, |r, c| a[[r, c]]);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = Array1::from_iter(order.iter().map(|&k| eig.eigenvalues[k]));
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, order[c])]);
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("eigendecomposition produced non-finite values".into()));
    }
    Ok((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::Hypergraph;
    use crate::spectral::hypergraph_laplacian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_abs(a: &Array2<f64>) -> f64 {
        a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn two_node_laplacian() {
        let hg = Hypergraph::new(2, vec![vec![0, 1]], None).unwrap();
        let (vals, _) = eig_sym(&hypergraph_laplacian(&hg), 10).unwrap();
        assert!(vals[0].abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_spectrum() {
        let (vals, vecs) = eig_sym(&SparseOperator::identity(5), 10).unwrap();
        assert!(vals.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(max_abs(&(vecs.t().dot(&vecs) - Array2::<f64>::eye(5))) < 1e-12);
    }

    #[test]
    fn random_symmetric_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = Array2::from_shape_fn((50, 50), |_| rng.random_range(-1.0..1.0));
        let a = &r + &r.t();
        let (vals, u) = eig_sym_dense(&a, 100).unwrap();
        assert!(vals.windows(2).into_iter().all(|w| w[0] <= w[1]));
        assert!(max_abs(&(u.t().dot(&u) - Array2::<f64>::eye(50))) < 1e-8);
        let recon = (&u * &vals).dot(&u.t());
        assert!(max_abs(&(recon - &a)) < 1e-6);
    }

    #[test]
    fn over_cap_is_reported() {
        assert!(matches!(
            eig_sym(&SparseOperator::identity(6), 5),
            Err(Error::OverCap { n: 6, cap: 5 })
        ));
        let ns = SparseOperator::from_triplets(2, 2, vec![(0, 1, 1.0)]).unwrap();
        assert!(eig_sym(&ns, 5).is_err());
    }
}
