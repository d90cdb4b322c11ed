//! Central finite-difference verification of tape gradients.

use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::spectral::SparseOperator;

pub const DEFAULT_EPS: f64 = 1e-5;

/// Floor in the denominator of the per-coordinate relative error.
pub const REL_ERR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// `max |g_ad - g_fd| / (|g_fd| + 1e-8)` over all coordinates.
    pub max_rel_err: f64,
    pub coordinates: usize,
}

/// Compares `backward()` against central differences for every coordinate of
/// every leaf. `f` must rebuild the same scalar function on a fresh tape.
pub fn grad_check<F>(f: F, leaves: &[Array2<f64>], eps: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    grad_check_with_fault(f, leaves, eps, None)
}

pub fn grad_check_with_fault<F>(f: F, leaves: &[Array2<f64>], eps: f64, fault: Option<&'static str>) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if leaves.iter().flat_map(|l| l.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("grad_check leaves must be finite".into()));
    }
    let eval = |values: &[Array2<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.leaf(v.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        Ok(tape.scalar(loss))
    };

    let mut tape = Tape::new();
    if let Some(tag) = fault {
        tape.inject_fault(tag);
    }
    let vars: Vec<Var> = leaves.iter().map(|v| tape.leaf(v.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut work: Vec<Array2<f64>> = leaves.to_vec();
    let mut max_rel_err = 0.0_f64;
    let mut coordinates = 0;
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var);
        for idx in 0..leaves[k].len() {
            let (r, c) = (idx / leaves[k].ncols(), idx % leaves[k].ncols());
            let orig = leaves[k][[r, c]];
            work[k][[r, c]] = orig + eps;
            let plus = eval(&work)?;
            work[k][[r, c]] = orig - eps;
            let minus = eval(&work)?;
            work[k][[r, c]] = orig;
            let fd = (plus - minus) / (2.0 * eps);
            let err = (analytic[[r, c]] - fd).abs() / (fd.abs() + REL_ERR_FLOOR);
            max_rel_err = max_rel_err.max(err);
            coordinates += 1;
        }
    }
    Ok(GradCheck {
        max_rel_err,
        coordinates,
    })
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(lo..hi))
}

/// Projects an op output to a scalar with fixed random weights so every output
/// coordinate contributes a distinct sensitivity.
fn project(t: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let (r, c) = t.value(y).dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = t.leaf(uniform(&mut rng, r, c, 0.5, 1.5));
    let prod = t.elementwise_mul(y, w)?;
    Ok(t.sum(prod))
}

type OpCase = (Vec<Array2<f64>>, Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>);

/// One finite-difference check per differentiable op kind.
pub fn check_all_ops(seed: u64, eps: f64, fault: Option<&'static str>) -> Vec<(&'static str, Result<GradCheck>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = |r: usize, c: usize| uniform(&mut rng, r, c, -1.0, 1.0);
    let sym = {
        let a = m(4, 4);
        SparseOperator::from_dense(&(&a + &a.t()))
    };
    let rect = SparseOperator::from_dense(&m(3, 4));
    let sym = Arc::new(sym);
    let rect = Arc::new(rect);
    // Keep relu inputs away from the kink.
    let relu_in = m(3, 4).mapv(|v| if v.abs() < 0.1 { v + 0.3 } else { v });
    let positive = m(4, 1).mapv(|v| v.abs() + 0.5);
    let idx = Arc::new(vec![2, 0, 2, 1]);

    let cases: Vec<(&'static str, OpCase)> = vec![
        ("matmul", (vec![m(3, 4), m(4, 2)], Box::new(|t, v| { let y = t.matmul(v[0], v[1])?; project(t, y, 1) }))),
        ("matmul_t", (vec![m(3, 4), m(5, 4)], Box::new(|t, v| { let y = t.matmul_t(v[0], v[1])?; project(t, y, 2) }))),
        ("sparse_apply", (vec![m(4, 3)], Box::new(move |t, v| {
            let y = t.sparse_apply(sym.clone(), v[0])?;
            let z = t.sparse_apply(rect.clone(), y)?;
            project(t, z, 3)
        }))),
        ("add", (vec![m(3, 2), m(3, 2)], Box::new(|t, v| { let y = t.add(v[0], v[1])?; project(t, y, 4) }))),
        ("sub", (vec![m(3, 2), m(3, 2)], Box::new(|t, v| { let y = t.sub(v[0], v[1])?; project(t, y, 5) }))),
        ("add_row_bias", (vec![m(3, 2), m(1, 2)], Box::new(|t, v| { let y = t.add_row_bias(v[0], v[1])?; project(t, y, 6) }))),
        ("scale", (vec![m(3, 2)], Box::new(|t, v| { let y = t.scale(v[0], -1.7); project(t, y, 7) }))),
        ("relu", (vec![relu_in], Box::new(|t, v| { let y = t.relu(v[0]); project(t, y, 8) }))),
        ("softplus", (vec![m(3, 4)], Box::new(|t, v| { let y = t.softplus(v[0]); project(t, y, 9) }))),
        ("sigmoid", (vec![m(3, 4)], Box::new(|t, v| { let y = t.sigmoid(v[0]); project(t, y, 22) }))),
        ("layer_norm", (vec![m(3, 5), m(1, 5), m(1, 5)], Box::new(|t, v| { let y = t.layer_norm(v[0], v[1], v[2])?; project(t, y, 10) }))),
        ("concat_rows", (vec![m(2, 3), m(1, 3)], Box::new(|t, v| { let y = t.concat_rows(&[v[0], v[1]])?; project(t, y, 11) }))),
        ("concat_cols", (vec![m(2, 3), m(2, 1)], Box::new(|t, v| { let y = t.concat_cols(&[v[0], v[1]])?; project(t, y, 12) }))),
        ("mean_of", (vec![m(2, 3), m(2, 3), m(2, 3)], Box::new(|t, v| { let y = t.mean_of(v)?; project(t, y, 13) }))),
        ("mean_rows", (vec![m(4, 3)], Box::new(|t, v| { let y = t.mean_rows(v[0])?; project(t, y, 14) }))),
        ("row_dot", (vec![m(3, 4), m(3, 4)], Box::new(|t, v| { let y = t.row_dot(v[0], v[1])?; project(t, y, 15) }))),
        ("l2_normalize_rows", (vec![m(3, 4)], Box::new(|t, v| { let y = t.l2_normalize_rows(v[0]); project(t, y, 16) }))),
        ("log_sigmoid", (vec![m(3, 4)], Box::new(|t, v| { let y = t.log_sigmoid(v[0]); project(t, y, 17) }))),
        ("logsumexp_rows", (vec![m(3, 4)], Box::new(|t, v| { let y = t.logsumexp_rows(v[0])?; project(t, y, 18) }))),
        ("gather_rows", (vec![m(3, 2)], Box::new(move |t, v| { let y = t.gather_rows(v[0], idx.clone())?; project(t, y, 19) }))),
        ("elementwise_mul", (vec![m(3, 2), m(3, 2)], Box::new(|t, v| { let y = t.elementwise_mul(v[0], v[1])?; project(t, y, 20) }))),
        ("scale_rows", (vec![m(4, 3), positive], Box::new(|t, v| { let y = t.scale_rows(v[0], v[1])?; project(t, y, 21) }))),
        ("sum", (vec![m(3, 3)], Box::new(|t, v| { let sq = t.elementwise_mul(v[0], v[0])?; Ok(t.sum(sq)) }))),
    ];
    cases
        .into_iter()
        .map(|(name, (leaves, f))| (name, grad_check_with_fault(f, &leaves, eps, fault)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::OP_KINDS;
    use ndarray::array;

    #[test]
    fn square_at_three() {
        let leaves = [array![[3.0]]];
        let res = grad_check(|t, v| t.elementwise_mul(v[0], v[0]).map(|y| t.sum(y)), &leaves, DEFAULT_EPS).unwrap();
        assert!(res.max_rel_err < 1e-9, "{res:?}");
        let mut t = Tape::new();
        let x = t.leaf(array![[3.0]]);
        let y = t.elementwise_mul(x, x).unwrap();
        let l = t.sum(y);
        assert_eq!(t.backward(l).unwrap().get(x)[[0, 0]], 6.0);
    }

    #[test]
    fn every_op_kind_passes() {
        let results = check_all_ops(7, DEFAULT_EPS, None);
        let names: Vec<_> = results.iter().map(|(n, _)| *n).collect();
        assert_eq!(names, OP_KINDS);
        for (name, res) in results {
            let res = res.unwrap();
            assert!(res.max_rel_err < 1e-6, "{name}: {res:?}");
        }
    }

    #[test]
    fn injected_fault_is_detected() {
        let results = check_all_ops(7, DEFAULT_EPS, Some("layer_norm"));
        for (name, res) in results {
            let err = res.unwrap().max_rel_err;
            if name == "layer_norm" {
                assert!(err > 0.1, "fault not detected: {err}");
            } else {
                assert!(err < 1e-6, "{name}: {err}");
            }
        }
    }

    #[test]
    fn symmetric_sparse_adjoint_on_random_instances() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let a = uniform(&mut rng, 6, 6, -1.0, 1.0);
            let p = Arc::new(SparseOperator::from_dense(&(&a + &a.t())));
            assert!(p.is_symmetric());
            let x = uniform(&mut rng, 6, 3, -1.0, 1.0);
            let res = grad_check(
                move |t, v| {
                    let y = t.sparse_apply(p.clone(), v[0])?;
                    project(t, y, seed)
                },
                &[x],
                DEFAULT_EPS,
            )
            .unwrap();
            assert!(res.max_rel_err < 1e-6);
        }
    }
}
