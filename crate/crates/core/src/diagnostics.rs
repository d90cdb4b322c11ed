//! Finite-difference verification of every differentiable component on toy
//! hypergraphs.

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{check_all_ops, grad_check_with_fault, GradCheck, Tape, Var, DEFAULT_EPS};
use crate::config::{LateFusion, RunConfig, WaveletModeConfig};
use crate::data::{synth_text_embeddings, EntityKind, InteractionGraph};
use crate::encoders::{hdnn_layer, wavelet_layer, Combine, HdnnLayer, LayerNormAffine, Mlp, WaveletLayer};
use crate::error::Result;
use crate::hypergraph::build_user_hypergraph;
use crate::model::{forward_with_vars, init_params, layout, BasisSettings, Channel, GraphContext, ModelSpec, TextPair, EMBED_ITEMS, EMBED_USERS};
use crate::spectral::{LinearOperator, Propagation, WaveletBasis};
use crate::train::{bpr_loss, infonce_cross_view, squared_norm, total_loss, LossWeights};

/// Pass threshold on the maximum relative error.
pub const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub name: String,
    pub max_rel_err: f64,
    pub coordinates: usize,
    pub passed: bool,
    pub error: Option<String>,
}

impl GradReport {
    fn from(name: &str, res: Result<GradCheck>) -> Self {
        match res {
            Ok(g) => Self {
                name: name.to_string(),
                max_rel_err: g.max_rel_err,
                coordinates: g.coordinates,
                passed: g.max_rel_err < GRADCHECK_TOL,
                error: None,
            },
            Err(e) => Self {
                name: name.to_string(),
                max_rel_err: f64::NAN,
                coordinates: 0,
                passed: false,
                error: Some(e.to_string()),
            },
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((r, c), || rng.random_range(-1.0..1.0))
}

fn project(t: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let (r, c) = t.value(y).dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = t.leaf(Array2::from_shape_simple_fn((r, c), || rng.random_range(0.5..1.5)));
    let p = t.elementwise_mul(y, w)?;
    Ok(t.sum(p))
}

/// Five users, four items; every user and item has at least one edge.
pub fn toy_interactions() -> InteractionGraph {
    InteractionGraph::from_pairs(
        5,
        4,
        &[(0, 0), (0, 1), (1, 1), (1, 2), (2, 2), (2, 3), (3, 3), (3, 0), (4, 0), (4, 2)],
    )
    .expect("valid toy")
}

fn hdnn_case(fault: Option<&'static str>) -> GradReport {
    let hg = build_user_hypergraph(&toy_interactions());
    let prop: Arc<dyn LinearOperator> = Arc::new(Propagation::new(&hg));
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (n, d) = (hg.n_nodes(), 3);
    let mut leaves = vec![uniform(&mut rng, n, d)];
    for _ in 0..2 {
        leaves.extend([uniform(&mut rng, d, d), uniform(&mut rng, 1, d), uniform(&mut rng, d, d), uniform(&mut rng, 1, d)]);
    }
    for _ in 0..2 {
        leaves.push(uniform(&mut rng, 1, d).mapv(|v| v + 1.5));
        leaves.push(uniform(&mut rng, 1, d));
    }
    let res = grad_check_with_fault(
        move |t, v| {
            let layer = HdnnLayer {
                mlp1: Mlp { w1: v[1], b1: v[2], w2: v[3], b2: v[4] },
                mlp2: Mlp { w1: v[5], b1: v[6], w2: v[7], b2: v[8] },
                ln1: LayerNormAffine { gain: v[9], bias: v[10] },
                ln2: LayerNormAffine { gain: v[11], bias: v[12] },
            };
            let (x_e, x_v) = hdnn_layer(t, v[0], &prop, &layer)?;
            let a = project(t, x_e, 1)?;
            let b = project(t, x_v, 2)?;
            t.add(a, b)
        },
        &leaves,
        DEFAULT_EPS,
        fault,
    );
    GradReport::from("hdnn_layer", res)
}

fn wavelet_case(name: &str, basis: WaveletBasis, combine: Combine, fault: Option<&'static str>) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let (n, d) = (basis.n(), 3);
    let leaves = vec![uniform(&mut rng, n, d), uniform(&mut rng, n, 1), uniform(&mut rng, d, d)];
    let res = grad_check_with_fault(
        move |t, v| {
            let layer = WaveletLayer { filter_raw: v[1], weight: v[2] };
            let y = wavelet_layer(t, v[0], &basis, &layer, combine)?;
            project(t, y, 3)
        },
        &leaves,
        DEFAULT_EPS,
        fault,
    );
    GradReport::from(name, res)
}

fn toy_bases() -> Result<(WaveletBasis, WaveletBasis)> {
    let hg = build_user_hypergraph(&toy_interactions());
    let prop = Propagation::new(&hg);
    let (vals, vecs) = crate::spectral::eig_sym_dense(&prop.dense_laplacian(), 64)?;
    let exact = crate::spectral::wavelet_basis(&vals, &vecs, 1.0)?;
    let cheb = WaveletBasis::chebyshev(Arc::new(prop.laplacian()), 1.0, 8, Some(1.0))?;
    Ok((exact, cheb))
}

fn infonce_case(fault: Option<&'static str>) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let leaves: Vec<_> = (0..4).map(|_| uniform(&mut rng, 4, 3)).collect();
    let res = grad_check_with_fault(
        |t, v| infonce_cross_view(t, &[v[0], v[1]], &[v[2], v[3]], 0.2),
        &leaves,
        DEFAULT_EPS,
        fault,
    );
    GradReport::from("infonce", res)
}

fn bpr_case(fault: Option<&'static str>) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let leaves = vec![uniform(&mut rng, 6, 1), uniform(&mut rng, 6, 1)];
    let res = grad_check_with_fault(|t, v| bpr_loss(t, v[0], v[1]), &leaves, DEFAULT_EPS, fault);
    GradReport::from("bpr", res)
}

/// Full model with text, both encoders and learned late fusion; loss is BPR
/// plus both contrastive terms plus the embedding penalty.
fn model_case(name: &str, mode: WaveletModeConfig, combine: Combine, fault: Option<&'static str>) -> GradReport {
    let res = (|| {
        let g = toy_interactions();
        let mut cfg = RunConfig::default();
        cfg.model.dim = 3;
        cfg.hdnn.layers = 1;
        cfg.wavelet.layers = 2;
        cfg.wavelet.mode = mode;
        cfg.wavelet.cheb_order = 6;
        cfg.wavelet.combine = combine;
        cfg.fusion.late = LateFusion::LearnedScalar;
        let graphs = GraphContext::build(&g, &BasisSettings::from_config(&cfg))?;
        let text = TextPair {
            users: Arc::new(synth_text_embeddings(5, 2, EntityKind::User, None, 0.0, 1)),
            items: Arc::new(synth_text_embeddings(4, 2, EntityKind::Item, None, 0.0, 1)),
        };
        let spec = ModelSpec::from_config(&cfg, 5, 4, Some((2, 2)));
        let mut params = init_params(&spec, 11)?;
        // Move the logit and filters off their symmetric starting points.
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let names: Vec<String> = layout(&spec).into_iter().map(|(n, _)| n).collect();
        for n in &names {
            if n.contains("filter") || n.contains("late_logit") || n.contains(".b") || n.contains("gain") {
                let p = params.get_mut(n).expect("laid out");
                p.mapv_inplace(|v| v + rng.random_range(-0.3..0.3));
            }
        }
        let leaves: Vec<Array2<f64>> = names.iter().map(|n| params.get(n).expect("laid out").clone()).collect();
        let batch_u = Arc::new(vec![0, 1, 2, 3, 4, 0]);
        let batch_p = Arc::new(vec![0, 1, 2, 3, 0, 1]);
        let batch_n = Arc::new(vec![2, 3, 0, 1, 1, 3]);
        let f = move |t: &mut Tape, v: &[Var]| -> Result<Var> {
            let vars: BTreeMap<String, Var> = names.iter().cloned().zip(v.iter().copied()).collect();
            let out = forward_with_vars(t, &spec, vars.clone(), Some(&graphs), Some(&text))?;
            let eu = t.gather_rows(out.users, batch_u.clone())?;
            let ep = t.gather_rows(out.items, batch_p.clone())?;
            let en = t.gather_rows(out.items, batch_n.clone())?;
            let sp = t.row_dot(eu, ep)?;
            let sn = t.row_dot(eu, en)?;
            let bpr = bpr_loss(t, sp, sn)?;
            let mut ssl = Vec::new();
            for c in Channel::BOTH {
                let view = out.view(c);
                let z = view.hdnn_layers.as_ref().expect("both encoders");
                let w = view.wavelet_layers.as_ref().expect("both encoders");
                let l = z.len().min(w.len());
                ssl.push(infonce_cross_view(t, &z[..l], &w[..l], 0.2)?);
            }
            let reg = squared_norm(t, &[vars[EMBED_USERS], vars[EMBED_ITEMS]])?;
            total_loss(t, bpr, ssl[0], ssl[1], reg, LossWeights { ssl: 0.1, reg: 0.01 })
        };
        grad_check_with_fault(f, &leaves, DEFAULT_EPS, fault)
    })();
    GradReport::from(name, res)
}

/// Every primitive op followed by the composite components and end-to-end
/// losses. `fault` corrupts one op kind's backward rule.
pub fn run_gradcheck(fault: Option<&'static str>) -> Vec<GradReport> {
    let mut out: Vec<GradReport> = check_all_ops(7, DEFAULT_EPS, fault)
        .into_iter()
        .map(|(name, res)| GradReport::from(&format!("op:{name}"), res))
        .collect();
    out.push(hdnn_case(fault));
    match toy_bases() {
        Ok((exact, cheb)) => {
            out.push(wavelet_case("wavelet_layer_exact", exact.clone(), Combine::Add, fault));
            out.push(wavelet_case("wavelet_layer_exact_concat", exact, Combine::Concat, fault));
            out.push(wavelet_case("wavelet_layer_chebyshev", cheb, Combine::Add, fault));
        }
        Err(e) => out.push(GradReport::from("wavelet_layer", Err(e))),
    }
    out.push(infonce_case(fault));
    out.push(bpr_case(fault));
    out.push(model_case("model_total_loss_exact", WaveletModeConfig::Exact, Combine::Add, fault));
    out.push(model_case("model_total_loss_chebyshev", WaveletModeConfig::Chebyshev, Combine::Concat, fault));
    out
}

pub const GRADCHECK_CSV_HEADER: &str = "component,max_rel_err,coordinates,status";

pub fn gradcheck_csv(reports: &[GradReport]) -> String {
    let mut out = format!("{GRADCHECK_CSV_HEADER}\n");
    for r in reports {
        let status = if r.passed { "pass" } else { "FAIL" };
        out.push_str(&format!("{},{:.3e},{},{status}\n", r.name, r.max_rel_err, r.coordinates));
    }
    out
}
