//! Mini-batch training with validation early stopping.

use std::sync::Arc;

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::losses::{bpr_loss, infonce_cross_view, squared_norm, total_loss, LossWeights};
use super::sampler::{BprBatch, BprSampler};
use crate::autodiff::{Tape, Var};
use crate::config::TrainConfig;
use crate::data::SplitBundle;
use crate::error::{Error, Result};
use crate::eval::evaluate_embeddings;
use crate::model::{forward_full, forward_tape, init_params, Channel, FusedVars, GraphContext, ModelSpec, ParameterSet, TextPair, EMBED_ITEMS, EMBED_USERS};

/// Everything fixed across the epochs of one run.
#[derive(Debug, Clone, Copy)]
pub struct TrainSetup<'a> {
    pub spec: &'a ModelSpec,
    pub graphs: Option<&'a GraphContext>,
    pub text: Option<&'a TextPair>,
    pub split: &'a SplitBundle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub bpr: f64,
    pub ssl: f64,
    pub reg: f64,
    pub val_ndcg: f64,
}

pub const HISTORY_CSV_HEADER: &str = "epoch,bpr,ssl,reg,val_ndcg20";

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from(HISTORY_CSV_HEADER);
    out.push('\n');
    for r in history {
        out.push_str(&format!("{},{:.9},{:.9},{:.9},{:.6}\n", r.epoch, r.bpr, r.ssl, r.reg, r.val_ndcg));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch (the initialisation when no
    /// epoch ran).
    pub params: ParameterSet,
    /// `0` for the initialisation.
    pub best_epoch: usize,
    pub best_val_ndcg: f64,
    pub history: Vec<EpochRecord>,
}

fn unique_sorted(ids: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut v: Vec<usize> = ids.collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// At most `cap` ids drawn without replacement, returned sorted.
fn subsample(ids: Vec<usize>, cap: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if ids.len() <= cap {
        return ids;
    }
    let mut picked: Vec<usize> = sample_indices(rng, ids.len(), cap).into_iter().map(|k| ids[k]).collect();
    picked.sort_unstable();
    picked
}

/// Contrastive term over the given entities, divided by entities times
/// layers so its scale does not grow with the batch.
fn channel_ssl(t: &mut Tape, f: &FusedVars, c: Channel, ids: Vec<usize>, tau: f64) -> Result<Option<Var>> {
    let view = f.view(c);
    let (Some(z), Some(g)) = (&view.hdnn_layers, &view.wavelet_layers) else {
        return Ok(None);
    };
    if ids.is_empty() {
        return Ok(None);
    }
    let layers = z.len().min(g.len());
    let idx = Arc::new(ids);
    let mut zs = Vec::with_capacity(layers);
    let mut gs = Vec::with_capacity(layers);
    for l in 0..layers {
        zs.push(t.gather_rows(z[l], idx.clone())?);
        gs.push(t.gather_rows(g[l], idx.clone())?);
    }
    let sum = infonce_cross_view(t, &zs, &gs, tau)?;
    Ok(Some(t.scale(sum, 1.0 / (idx.len() * layers) as f64)))
}

struct StepLosses {
    bpr: f64,
    ssl: f64,
    reg: f64,
}

fn train_step(
    setup: &TrainSetup<'_>,
    params: &mut ParameterSet,
    adam: &mut AdamState,
    adam_cfg: &AdamConfig,
    cfg: &TrainConfig,
    batch: &BprBatch,
    rng: &mut ChaCha8Rng,
) -> Result<StepLosses> {
    let mut t = Tape::new();
    let f = forward_tape(&mut t, setup.spec, params, setup.graphs, setup.text)?;
    let users = Arc::new(batch.users.clone());
    let pos = Arc::new(batch.pos.clone());
    let neg = Arc::new(batch.neg.clone());
    let eu = t.gather_rows(f.users, users)?;
    let ep = t.gather_rows(f.items, pos)?;
    let en = t.gather_rows(f.items, neg)?;
    let sp = t.row_dot(eu, ep)?;
    let sn = t.row_dot(eu, en)?;
    let bpr = bpr_loss(&mut t, sp, sn)?;

    let zero = t.leaf(ndarray::Array2::zeros((1, 1)));
    let (ssl_u, ssl_i) = if cfg.ssl_weight > 0.0 && setup.spec.has_two_views() {
        let u_ids = subsample(unique_sorted(batch.users.iter().copied()), cfg.ssl_batch, rng);
        let i_ids = subsample(unique_sorted(batch.pos.iter().chain(&batch.neg).copied()), cfg.ssl_batch, rng);
        let su = channel_ssl(&mut t, &f, Channel::Users, u_ids, cfg.temperature)?.unwrap_or(zero);
        let si = channel_ssl(&mut t, &f, Channel::Items, i_ids, cfg.temperature)?.unwrap_or(zero);
        (su, si)
    } else {
        (zero, zero)
    };
    let reg = squared_norm(&mut t, &[f.params[EMBED_USERS], f.params[EMBED_ITEMS]])?;
    let weights = LossWeights {
        ssl: cfg.ssl_weight,
        reg: cfg.reg_weight,
    };
    let loss = total_loss(&mut t, bpr, ssl_u, ssl_i, reg, weights)?;
    if !t.scalar(loss).is_finite() {
        return Err(Error::Numeric(format!("non-finite loss at step {}", adam.step + 1)));
    }
    let out = StepLosses {
        bpr: t.scalar(bpr),
        ssl: t.scalar(ssl_u) + t.scalar(ssl_i),
        reg: t.scalar(reg),
    };
    let grads = t.backward(loss)?.named();
    adam_step(params, &grads, adam, adam_cfg)?;
    Ok(out)
}

/// Validation NDCG at `val_k` for the current parameters.
pub fn validation_ndcg(setup: &TrainSetup<'_>, params: &ParameterSet, val_k: usize) -> Result<f64> {
    let emb = forward_full(setup.spec, params, setup.graphs, setup.text)?;
    let split = setup.split;
    let r = evaluate_embeddings(&emb.users, &emb.items, &split.train, &split.val, &[val_k], "val", 0)?;
    Ok(r.metrics[0].ndcg)
}

/// Trains from a seeded initialisation. One epoch draws
/// `ceil(train pairs / batch_size)` batches.
pub fn train(setup: &TrainSetup<'_>, cfg: &TrainConfig, val_k: usize, seed: u64) -> Result<TrainOutcome> {
    let mut params = init_params(setup.spec, seed)?;
    let init = params.clone();
    if cfg.epochs == 0 {
        return Ok(TrainOutcome {
            params: init,
            best_epoch: 0,
            best_val_ndcg: f64::NEG_INFINITY,
            history: Vec::new(),
        });
    }
    let sampler = BprSampler::new(&setup.split.train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_b9c4);
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: cfg.adam_eps,
    };
    let mut adam = AdamState::default();
    let steps = sampler.n_pairs().div_ceil(cfg.batch_size);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = (init, 0, f64::NEG_INFINITY);
    let mut stale = 0;
    for epoch in 1..=cfg.epochs {
        let (mut bpr, mut ssl, mut reg) = (0.0, 0.0, 0.0);
        for _ in 0..steps {
            let batch = sampler.sample(cfg.batch_size, &mut rng);
            let l = train_step(setup, &mut params, &mut adam, &adam_cfg, cfg, &batch, &mut rng)
                .map_err(|e| match e {
                    Error::Numeric(m) => Error::Numeric(format!("epoch {epoch}: {m}")),
                    other => other,
                })?;
            bpr += l.bpr;
            ssl += l.ssl;
            reg += l.reg;
        }
        let n = steps as f64;
        let val_ndcg = validation_ndcg(setup, &params, val_k)?;
        history.push(EpochRecord {
            epoch,
            bpr: bpr / n,
            ssl: ssl / n,
            reg: reg / n,
            val_ndcg,
        });
        log::debug!("epoch {epoch}: bpr {:.5} val ndcg {:.5}", bpr / n, val_ndcg);
        if val_ndcg > best.2 {
            best = (params.clone(), epoch, val_ndcg);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        params: best.0,
        best_epoch: best.1,
        best_val_ndcg: best.2,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::data::{generate_synthetic_heterophilic, split_interactions, SplitRatios, SynthParams};
    use crate::model::BasisSettings;

    fn fixture() -> (RunConfig, SplitBundle, GraphContext) {
        let params = SynthParams {
            users: 60,
            items: 40,
            per_user: 10,
            ..Default::default()
        };
        let (g, _) = generate_synthetic_heterophilic(&params).unwrap();
        let split = split_interactions(&g, SplitRatios::default(), 1).unwrap();
        let mut cfg = RunConfig::default();
        cfg.model.dim = 8;
        cfg.hdnn.layers = 1;
        cfg.wavelet.layers = 1;
        cfg.train.batch_size = 128;
        cfg.train.epochs = 3;
        cfg.train.lr = 0.01;
        let graphs = GraphContext::build(&split.train, &BasisSettings::from_config(&cfg)).unwrap();
        (cfg, split, graphs)
    }

    #[test]
    fn zero_epochs_returns_initialisation() {
        let (mut cfg, split, graphs) = fixture();
        cfg.train.epochs = 0;
        let spec = ModelSpec::from_config(&cfg, 60, 40, None);
        let setup = TrainSetup {
            spec: &spec,
            graphs: Some(&graphs),
            text: None,
            split: &split,
        };
        let out = train(&setup, &cfg.train, 20, 3).unwrap();
        assert_eq!(out.params, init_params(&spec, 3).unwrap());
        assert!(out.history.is_empty());
    }

    #[test]
    fn deterministic_and_best_is_max() {
        let (cfg, split, graphs) = fixture();
        let spec = ModelSpec::from_config(&cfg, 60, 40, None);
        let setup = TrainSetup {
            spec: &spec,
            graphs: Some(&graphs),
            text: None,
            split: &split,
        };
        let a = train(&setup, &cfg.train, 20, 5).unwrap();
        let b = train(&setup, &cfg.train, 20, 5).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.params, b.params);
        assert_eq!(a.history.len(), 3);
        assert!(a.history.iter().all(|r| r.val_ndcg <= a.best_val_ndcg));
        assert!(a.history.iter().all(|r| r.ssl > 0.0 && r.bpr > 0.0));
    }

    #[test]
    fn subsample_is_sorted_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = subsample((0..100).collect(), 10, &mut rng);
        assert_eq!(s.len(), 10);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(subsample(vec![1, 4], 10, &mut rng), vec![1, 4]);
    }

    #[test]
    fn history_csv_format() {
        let h = [EpochRecord {
            epoch: 1,
            bpr: 0.5,
            ssl: 1.0,
            reg: 2.0,
            val_ndcg: 0.125,
        }];
        assert_eq!(history_csv(&h), "epoch,bpr,ssl,reg,val_ndcg20\n1,0.500000000,1.000000000,2.000000000,0.125000\n");
    }
}
