//! Heat-kernel wavelet transforms `Theta = exp(-s L)` and
//! `Theta' = exp(s L)`, either exactly from an eigendecomposition or as a
//! truncated Chebyshev series in `L`.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2};

use super::sparse::{DenseOperator, LinearOperator};
use crate::error::{Error, Result};

/// Largest admissible `s * lambda_max`; beyond it `exp(s lambda)` loses the
/// inverse identity to rounding.
pub const MAX_SCALE_SPECTRUM: f64 = 30.0;

/// Quadrature nodes for the Chebyshev coefficients.
const COEFF_NODES: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveletMode {
    Exact,
    Chebyshev { order: usize },
}

#[derive(Debug, Clone)]
pub struct WaveletBasis {
    scale: f64,
    mode: WaveletMode,
    eigenvalues: Option<Array1<f64>>,
    forward: Arc<dyn LinearOperator>,
    inverse: Arc<dyn LinearOperator>,
    exact: Option<(Arc<DenseOperator>, Arc<DenseOperator>)>,
}

fn check_scale(s: f64, lambda_max: f64) -> Result<()> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::Config(format!("wavelet scale must be positive, got {s}")));
    }
    if s * lambda_max > MAX_SCALE_SPECTRUM {
        return Err(Error::Config(format!(
            "wavelet scale {s} times spectral bound {lambda_max:.4} exceeds {MAX_SCALE_SPECTRUM}; use a smaller scale"
        )));
    }
    Ok(())
}

/// Exact transforms `U diag(exp(-s lambda)) U^T` and its inverse.
pub fn wavelet_basis(eigenvalues: &Array1<f64>, eigenvectors: &Array2<f64>, s: f64) -> Result<WaveletBasis> {
    let lambda_max = eigenvalues.iter().fold(0.0_f64, |m, v| m.max(*v));
    check_scale(s, lambda_max)?;
    let spectral = |sign: f64| {
        let gains = eigenvalues.mapv(|l| (sign * s * l).exp());
        (eigenvectors * &gains).dot(&eigenvectors.t())
    };
    let theta = Arc::new(DenseOperator(spectral(-1.0)));
    let theta_inv = Arc::new(DenseOperator(spectral(1.0)));
    Ok(WaveletBasis {
        scale: s,
        mode: WaveletMode::Exact,
        eigenvalues: Some(eigenvalues.clone()),
        forward: theta.clone(),
        inverse: theta_inv.clone(),
        exact: Some((theta, theta_inv)),
    })
}

impl WaveletBasis {
    /// Chebyshev-approximated transforms. `lambda_max` bounds the spectrum of
    /// `laplacian`; pass `None` to estimate it by power iteration.
    pub fn chebyshev(
        laplacian: Arc<dyn LinearOperator>,
        s: f64,
        order: usize,
        lambda_max: Option<f64>,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("chebyshev order must be at least 1".into()));
        }
        let lambda_max = lambda_max.unwrap_or_else(|| estimate_lambda_max(laplacian.as_ref(), 200));
        check_scale(s, lambda_max)?;
        let forward = ChebyshevOperator::heat(laplacian.clone(), -s, order, lambda_max);
        let inverse = ChebyshevOperator::heat(laplacian, s, order, lambda_max);
        Ok(Self {
            scale: s,
            mode: WaveletMode::Chebyshev { order },
            eigenvalues: None,
            forward: Arc::new(forward),
            inverse: Arc::new(inverse),
            exact: None,
        })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn mode(&self) -> WaveletMode {
        self.mode
    }

    pub fn n(&self) -> usize {
        self.forward.shape().0
    }

    pub fn eigenvalues(&self) -> Option<&Array1<f64>> {
        self.eigenvalues.as_ref()
    }

    /// `Theta` as an operator.
    pub fn forward(&self) -> Arc<dyn LinearOperator> {
        self.forward.clone()
    }

    /// `Theta'` as an operator.
    pub fn inverse(&self) -> Arc<dyn LinearOperator> {
        self.inverse.clone()
    }

    pub fn theta(&self) -> Option<&Array2<f64>> {
        self.exact.as_ref().map(|(t, _)| &t.0)
    }

    pub fn theta_inv(&self) -> Option<&Array2<f64>> {
        self.exact.as_ref().map(|(_, t)| &t.0)
    }
}

/// `sum_k c_k T_k(2 L / lambda_max - I)` for a spectral function sampled on
/// `[0, lambda_max]`.
#[derive(Debug, Clone)]
pub struct ChebyshevOperator {
    laplacian: Arc<dyn LinearOperator>,
    coeffs: Vec<f64>,
    lambda_max: f64,
}

impl ChebyshevOperator {
    /// Series for `exp(exponent * lambda)`.
    pub fn heat(laplacian: Arc<dyn LinearOperator>, exponent: f64, order: usize, lambda_max: f64) -> Self {
        let coeffs = chebyshev_coefficients(|l| (exponent * l).exp(), order, lambda_max);
        Self {
            laplacian,
            coeffs,
            lambda_max,
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    fn series<F>(&self, x: ArrayView2<'_, f64>, apply_l: F) -> Array2<f64>
    where
        F: Fn(ArrayView2<'_, f64>) -> Array2<f64>,
    {
        let alpha = 2.0 / self.lambda_max;
        // T_1 input map y -> (2/lambda_max) L y - y
        let shifted = |y: ArrayView2<'_, f64>| {
            let mut ly = apply_l(y);
            ly.zip_mut_with(&y, |a, b| *a = alpha * *a - b);
            ly
        };
        let mut out = x.mapv(|v| 0.5 * self.coeffs[0] * v);
        if self.coeffs.len() == 1 {
            return out;
        }
        let mut prev = x.to_owned();
        let mut cur = shifted(x);
        out.scaled_add(self.coeffs[1], &cur);
        for &c in &self.coeffs[2..] {
            let mut next = shifted(cur.view());
            next.zip_mut_with(&prev, |a, b| *a = 2.0 * *a - b);
            out.scaled_add(c, &next);
            prev = cur;
            cur = next;
        }
        out
    }
}

impl LinearOperator for ChebyshevOperator {
    fn shape(&self) -> (usize, usize) {
        self.laplacian.shape()
    }

    fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        self.series(x, |y| self.laplacian.apply(y))
    }

    fn apply_adjoint(&self, g: ArrayView2<'_, f64>) -> Array2<f64> {
        self.series(g, |y| self.laplacian.apply_adjoint(y))
    }
}

/// First `order` Chebyshev coefficients of `f` on `[0, lambda_max]`, with the
/// convention `f ~ c_0/2 + sum_{k>=1} c_k T_k`.
pub fn chebyshev_coefficients<F: Fn(f64) -> f64>(f: F, order: usize, lambda_max: f64) -> Vec<f64> {
    let n = COEFF_NODES.max(2 * order);
    let samples: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let theta = PI * (j as f64 + 0.5) / n as f64;
            let lambda = (theta.cos() + 1.0) * 0.5 * lambda_max;
            (theta, f(lambda))
        })
        .collect();
    (0..order)
        .map(|k| {
            let sum: f64 = samples.iter().map(|(t, fv)| fv * (k as f64 * t).cos()).sum();
            2.0 * sum / n as f64
        })
        .collect()
}

/// `exp(-s L) X` by a `order`-term Chebyshev expansion.
pub fn chebyshev_apply(
    l: Arc<dyn LinearOperator>,
    s: f64,
    order: usize,
    x: ArrayView2<'_, f64>,
    lambda_max: Option<f64>,
) -> Result<Array2<f64>> {
    if order == 0 {
        return Err(Error::Config("chebyshev order must be at least 1".into()));
    }
    l.check_input(x.nrows())?;
    let lambda_max = lambda_max.unwrap_or_else(|| estimate_lambda_max(l.as_ref(), 200));
    let op = ChebyshevOperator::heat(l, -s, order, lambda_max);
    let out = op.apply(x);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("chebyshev expansion produced non-finite values".into()));
    }
    Ok(out)
}

/// Power iteration estimate of the largest eigenvalue of a PSD operator,
/// inflated by 1% so the Chebyshev interval covers the spectrum.
pub fn estimate_lambda_max(l: &dyn LinearOperator, iters: usize) -> f64 {
    let n = l.shape().0;
    if n == 0 {
        return 1.0;
    }
    let mut v = Array2::from_shape_fn((n, 1), |(i, _)| 1.0 + 0.37 * ((i as f64) * 1.3).sin());
    let mut estimate = 0.0;
    for _ in 0..iters {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        v.mapv_inplace(|x| x / norm);
        let w = l.apply(v.view());
        estimate = w.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>();
        v = w;
    }
    (estimate * 1.01).max(1e-12)
}
