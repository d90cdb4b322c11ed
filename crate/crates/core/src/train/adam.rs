//! Bias-corrected Adam with per-tensor moment state.

use std::collections::BTreeMap;

use ndarray::{Array2, Zip};

use crate::error::{Error, Result};
use crate::model::ParameterSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: BTreeMap<String, Array2<f64>>,
    pub v: BTreeMap<String, Array2<f64>>,
}

/// One update. All gradients are checked for finiteness before any tensor
/// is touched, so a failed step leaves `params` and `state` unchanged.
pub fn adam_step(
    params: &mut ParameterSet,
    grads: &[(String, Array2<f64>)],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    for (name, g) in grads {
        let p = params
            .get(name)
            .ok_or_else(|| Error::Shape(format!("gradient for unknown parameter `{name}`")))?;
        if p.dim() != g.dim() {
            return Err(Error::Shape(format!("gradient of `{name}` is {:?}, parameter is {:?}", g.dim(), p.dim())));
        }
        if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient ({bad}) for `{name}` at step {}", state.step + 1)));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (name, g) in grads {
        let shape = g.dim();
        let m = state.m.entry(name.clone()).or_insert_with(|| Array2::zeros(shape));
        let v = state.v.entry(name.clone()).or_insert_with(|| Array2::zeros(shape));
        let p = params.get_mut(name).expect("checked above");
        Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= cfg.lr * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn one(name: &str, v: Array2<f64>) -> ParameterSet {
        let mut p = ParameterSet::new();
        p.insert(name, v);
        p
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = one("w", array![[1.0, -2.0]]);
        let before = p.clone();
        let mut s = AdamState::default();
        adam_step(&mut p, &[("w".into(), Array2::zeros((1, 2)))], &mut s, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
        assert!(s.m["w"].iter().chain(s.v["w"].iter()).all(|v| *v == 0.0));
    }

    #[test]
    fn first_step_magnitude() {
        let mut p = one("w", array![[0.0]]);
        let mut s = AdamState::default();
        let cfg = AdamConfig { lr: 0.1, ..Default::default() };
        adam_step(&mut p, &[("w".into(), array![[1.0]])], &mut s, &cfg).unwrap();
        let want = -0.1 / (1.0 + 1e-8);
        assert!((p.get("w").unwrap()[[0, 0]] - want).abs() < 1e-15);
    }

    #[test]
    fn tensors_are_independent() {
        let cfg = AdamConfig { lr: 0.05, ..Default::default() };
        let mut both = one("a", array![[1.0]]);
        both.insert("b", array![[2.0]]);
        let mut only_a = one("a", array![[1.0]]);
        let mut s_both = AdamState::default();
        let mut s_a = AdamState::default();
        for k in 0..5 {
            let ga = array![[0.3 * k as f64 - 0.5]];
            adam_step(&mut both, &[("a".into(), ga.clone()), ("b".into(), array![[9.0]])], &mut s_both, &cfg).unwrap();
            adam_step(&mut only_a, &[("a".into(), ga)], &mut s_a, &cfg).unwrap();
        }
        assert_eq!(both.get("a"), only_a.get("a"));
    }

    #[test]
    fn non_finite_gradient_aborts_untouched() {
        let mut p = one("w", array![[1.0]]);
        let mut s = AdamState::default();
        let err = adam_step(&mut p, &[("w".into(), array![[f64::NAN]])], &mut s, &AdamConfig::default()).unwrap_err();
        assert_eq!(err.exit_code(), 4);
        assert_eq!(s.step, 0);
        assert_eq!(p.get("w").unwrap()[[0, 0]], 1.0);
    }
}
