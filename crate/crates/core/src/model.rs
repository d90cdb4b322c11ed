//! Parameters, graph operators and the fused forward pass.
//!
//! Each channel (users on the user hypergraph, items on the item hypergraph)
//! runs both encoders on a structural stream and a projected textual stream
//! with shared weights. The two streams are averaged per encoder, then the
//! two encoders are combined by the late-fusion rule.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::config::{LateFusion, RunConfig, WaveletModeConfig};
use crate::data::{InteractionGraph, TextEmbeddings};
use crate::encoders::{hdnn_encode, wavelet_encode, Combine, EncoderOutput, HdnnLayer, LayerNormAffine, Mlp, WaveletLayer};
use crate::error::{Error, Result};
use crate::hypergraph::{build_item_hypergraph, build_user_hypergraph};
use crate::spectral::{eig_sym_dense, wavelet_basis, LinearOperator, Propagation, WaveletBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Channel {
    Users,
    Items,
}

impl Channel {
    pub const BOTH: [Channel; 2] = [Channel::Users, Channel::Items];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Users => "users",
            Channel::Items => "items",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Both hypergraph encoders with fusion.
    Hypergraph,
    /// Plain embedding table scored by dot product.
    MatrixFactorization,
}

/// Architecture description; everything needed to lay out a [`ParameterSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub n_users: usize,
    pub n_items: usize,
    pub dim: usize,
    /// Width of the user and item text vectors; `None` disables the stream.
    pub text_dims: Option<(usize, usize)>,
    /// `None` when the encoder is disabled.
    pub hdnn_layers: Option<usize>,
    pub wavelet_layers: Option<usize>,
    pub shared_filter: bool,
    pub combine: Combine,
    pub late: LateFusion,
}

impl ModelSpec {
    pub fn from_config(cfg: &RunConfig, n_users: usize, n_items: usize, text_dims: Option<(usize, usize)>) -> Self {
        Self {
            kind: ModelKind::Hypergraph,
            n_users,
            n_items,
            dim: cfg.model.dim,
            text_dims: if cfg.text.enabled { text_dims } else { None },
            hdnn_layers: cfg.hdnn.enabled.then_some(cfg.hdnn.layers),
            wavelet_layers: cfg.wavelet.enabled.then_some(cfg.wavelet.layers),
            shared_filter: cfg.wavelet.shared_filter,
            combine: cfg.wavelet.combine,
            late: cfg.fusion.late,
        }
    }

    pub fn matrix_factorization(n_users: usize, n_items: usize, dim: usize) -> Self {
        Self {
            kind: ModelKind::MatrixFactorization,
            n_users,
            n_items,
            dim,
            text_dims: None,
            hdnn_layers: None,
            wavelet_layers: None,
            shared_filter: false,
            combine: Combine::Add,
            late: LateFusion::Mean,
        }
    }

    pub fn n_nodes(&self, c: Channel) -> usize {
        match c {
            Channel::Users => self.n_users,
            Channel::Items => self.n_items,
        }
    }

    /// Contrastive pairing needs both encoders.
    pub fn has_two_views(&self) -> bool {
        self.kind == ModelKind::Hypergraph && self.hdnn_layers.is_some() && self.wavelet_layers.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("model dimension must be positive".into()));
        }
        if self.kind == ModelKind::Hypergraph && self.hdnn_layers.is_none() && self.wavelet_layers.is_none() {
            return Err(Error::Config("at least one of hdnn and wavelet must be enabled".into()));
        }
        Ok(())
    }
}

/// Named trainable matrices in a deterministic (sorted) order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet {
    tensors: BTreeMap<String, Array2<f64>>,
}

pub const EMBED_USERS: &str = "embed.users";
pub const EMBED_ITEMS: &str = "embed.items";
pub const LATE_LOGIT: &str = "fusion.late_logit";

fn mlp_names(prefix: &str) -> [String; 4] {
    ["w1", "b1", "w2", "b2"].map(|s| format!("{prefix}.{s}"))
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array2<f64>) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array2<f64>> {
        self.tensors.get_mut(name)
    }

    fn require(&self, name: &str) -> Result<&Array2<f64>> {
        self.get(name)
            .ok_or_else(|| Error::Shape(format!("parameter `{name}` missing")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Array2<f64>)> {
        self.tensors.iter()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Checks that every tensor of the `ModelSpec` layout is present with its shape.
    pub fn check_layout(&self, spec: &ModelSpec) -> Result<()> {
        let want = layout(spec);
        for (name, shape) in &want {
            let got = self.require(name)?.dim();
            if got != *shape {
                return Err(Error::Shape(format!("parameter `{name}` is {got:?}, expected {shape:?}")));
            }
        }
        if want.len() != self.len() {
            let extra: Vec<_> = self.tensors.keys().filter(|k| !want.iter().any(|(n, _)| n == *k)).collect();
            return Err(Error::Shape(format!("unexpected parameters {extra:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum InitRule {
    Xavier,
    Zeros,
    /// `1 / sqrt(cols)`: a normalised row then has unit Euclidean norm.
    RowUnitGain,
    /// Pre-softplus value whose softplus is 1.
    UnitSoftplus,
}

/// Every parameter name with its shape and initialiser.
fn layout_with_rules(spec: &ModelSpec) -> Vec<(String, (usize, usize), InitRule)> {
    let d = spec.dim;
    let mut out = vec![
        (EMBED_USERS.to_string(), (spec.n_users, d), InitRule::Xavier),
        (EMBED_ITEMS.to_string(), (spec.n_items, d), InitRule::Xavier),
    ];
    if spec.kind == ModelKind::MatrixFactorization {
        return out;
    }
    if let Some((du, di)) = spec.text_dims {
        out.push(("text_proj.users".into(), (du, d), InitRule::Xavier));
        out.push(("text_proj.items".into(), (di, d), InitRule::Xavier));
    }
    for c in Channel::BOTH {
        if let Some(layers) = spec.hdnn_layers {
            for l in 0..layers {
                for m in ["mlp1", "mlp2"] {
                    let [w1, b1, w2, b2] = mlp_names(&format!("hdnn.{c}.{l}.{m}"));
                    out.push((w1, (d, d), InitRule::Xavier));
                    out.push((b1, (1, d), InitRule::Zeros));
                    out.push((w2, (d, d), InitRule::Xavier));
                    out.push((b2, (1, d), InitRule::Zeros));
                }
                for ln in ["ln1", "ln2"] {
                    out.push((format!("hdnn.{c}.{l}.{ln}.gain"), (1, d), InitRule::RowUnitGain));
                    out.push((format!("hdnn.{c}.{l}.{ln}.bias"), (1, d), InitRule::Zeros));
                }
            }
        }
        if let Some(layers) = spec.wavelet_layers {
            let n = spec.n_nodes(c);
            if spec.shared_filter {
                out.push((format!("wavelet.{c}.filter"), (n, 1), InitRule::UnitSoftplus));
            }
            for l in 0..layers {
                if !spec.shared_filter {
                    out.push((format!("wavelet.{c}.{l}.filter"), (n, 1), InitRule::UnitSoftplus));
                }
                out.push((format!("wavelet.{c}.{l}.weight"), (d, d), InitRule::Xavier));
            }
        }
    }
    if spec.late == LateFusion::LearnedScalar && spec.hdnn_layers.is_some() && spec.wavelet_layers.is_some() {
        out.push((LATE_LOGIT.into(), (1, 1), InitRule::Zeros));
    }
    out
}

pub fn layout(spec: &ModelSpec) -> Vec<(String, (usize, usize))> {
    layout_with_rules(spec).into_iter().map(|(n, s, _)| (n, s)).collect()
}

/// Xavier bound `sqrt(6 / (rows + cols))`.
pub fn xavier_bound(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

/// `ln(e - 1)`, the inverse softplus of 1.
pub fn unit_softplus_raw() -> f64 {
    (std::f64::consts::E - 1.0).ln()
}

/// Deterministic initialisation. Matrices are drawn in name order from one
/// stream, uniformly on the open interval `(-a, a)`.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<ParameterSet> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rules = layout_with_rules(spec);
    rules.sort_by(|a, b| a.0.cmp(&b.0));
    let mut params = ParameterSet::new();
    for (name, (r, c), rule) in rules {
        let value = match rule {
            InitRule::Xavier => {
                let a = xavier_bound(r, c);
                Array2::from_shape_simple_fn((r, c), || {
                    loop {
                        let v = rng.random_range(-a..a);
                        if v != -a {
                            break v;
                        }
                    }
                })
            }
            InitRule::Zeros => Array2::zeros((r, c)),
            InitRule::RowUnitGain => Array2::from_elem((r, c), 1.0 / (c as f64).sqrt()),
            InitRule::UnitSoftplus => Array2::from_elem((r, c), unit_softplus_raw()),
        };
        params.insert(name, value);
    }
    Ok(params)
}

/// Per-channel propagation operator and wavelet basis, built from the train
/// split.
#[derive(Debug, Clone)]
pub struct ChannelGraph {
    pub propagation: Arc<dyn LinearOperator>,
    pub basis: Option<Arc<WaveletBasis>>,
}

#[derive(Debug, Clone)]
pub struct GraphContext {
    pub users: ChannelGraph,
    pub items: ChannelGraph,
}

/// How to construct the wavelet bases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisSettings {
    pub enabled: bool,
    pub scale: f64,
    pub mode: WaveletModeConfig,
    pub cheb_order: usize,
    pub max_exact_n: usize,
}

impl BasisSettings {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            enabled: cfg.wavelet.enabled,
            scale: cfg.wavelet.scale,
            mode: cfg.wavelet.mode,
            cheb_order: cfg.wavelet.cheb_order,
            max_exact_n: cfg.spectral.max_exact_n,
        }
    }
}

fn build_channel(prop: Propagation, settings: &BasisSettings) -> Result<ChannelGraph> {
    let n = prop.n();
    let basis = if settings.enabled {
        let exact = match settings.mode {
            WaveletModeConfig::Exact => true,
            WaveletModeConfig::Chebyshev => false,
            WaveletModeConfig::Auto => n <= settings.max_exact_n,
        };
        let basis = if exact {
            let (vals, vecs) = eig_sym_dense(&prop.dense_laplacian(), settings.max_exact_n)?;
            wavelet_basis(&vals, &vecs, settings.scale)?
        } else {
            // The normalised Laplacian's spectrum lies in [0, 1].
            WaveletBasis::chebyshev(Arc::new(prop.laplacian()), settings.scale, settings.cheb_order, Some(1.0))?
        };
        Some(Arc::new(basis))
    } else {
        None
    };
    Ok(ChannelGraph {
        propagation: Arc::new(prop),
        basis,
    })
}

impl GraphContext {
    pub fn build(train: &InteractionGraph, settings: &BasisSettings) -> Result<Self> {
        let users = build_channel(Propagation::new(&build_user_hypergraph(train)), settings)?;
        let items = build_channel(Propagation::new(&build_item_hypergraph(train)), settings)?;
        Ok(Self { users, items })
    }

    pub fn channel(&self, c: Channel) -> &ChannelGraph {
        match c {
            Channel::Users => &self.users,
            Channel::Items => &self.items,
        }
    }
}

/// Textual side information for both entity types.
#[derive(Debug, Clone)]
pub struct TextPair {
    pub users: Arc<TextEmbeddings>,
    pub items: Arc<TextEmbeddings>,
}

impl TextPair {
    pub fn dims(&self) -> (usize, usize) {
        (self.users.dim(), self.items.dim())
    }

    fn get(&self, c: Channel) -> &Array2<f64> {
        match c {
            Channel::Users => &self.users.matrix,
            Channel::Items => &self.items.matrix,
        }
    }
}

/// Tape handles of one channel's encoders after intermediate fusion.
#[derive(Debug, Clone)]
pub struct ChannelView {
    pub output: Var,
    /// Per-layer fused states of the diffusion encoder, input first.
    pub hdnn_layers: Option<Vec<Var>>,
    pub wavelet_layers: Option<Vec<Var>>,
}

#[derive(Debug, Clone)]
pub struct FusedVars {
    pub users: Var,
    pub items: Var,
    pub user_view: ChannelView,
    pub item_view: ChannelView,
    /// Tape handle of every registered parameter.
    pub params: BTreeMap<String, Var>,
}

impl FusedVars {
    pub fn view(&self, c: Channel) -> &ChannelView {
        match c {
            Channel::Users => &self.user_view,
            Channel::Items => &self.item_view,
        }
    }
}

fn param(vars: &BTreeMap<String, Var>, name: &str) -> Result<Var> {
    vars.get(name)
        .copied()
        .ok_or_else(|| Error::Shape(format!("parameter `{name}` missing")))
}

fn hdnn_layers(vars: &BTreeMap<String, Var>, c: Channel, layers: usize) -> Result<Vec<HdnnLayer>> {
    let mlp = |prefix: String| -> Result<Mlp> {
        let [w1, b1, w2, b2] = mlp_names(&prefix);
        Ok(Mlp {
            w1: param(vars, &w1)?,
            b1: param(vars, &b1)?,
            w2: param(vars, &w2)?,
            b2: param(vars, &b2)?,
        })
    };
    let ln = |prefix: String| -> Result<LayerNormAffine> {
        Ok(LayerNormAffine {
            gain: param(vars, &format!("{prefix}.gain"))?,
            bias: param(vars, &format!("{prefix}.bias"))?,
        })
    };
    (0..layers)
        .map(|l| {
            Ok(HdnnLayer {
                mlp1: mlp(format!("hdnn.{c}.{l}.mlp1"))?,
                mlp2: mlp(format!("hdnn.{c}.{l}.mlp2"))?,
                ln1: ln(format!("hdnn.{c}.{l}.ln1"))?,
                ln2: ln(format!("hdnn.{c}.{l}.ln2"))?,
            })
        })
        .collect()
}

fn wavelet_layers(vars: &BTreeMap<String, Var>, c: Channel, layers: usize, shared: bool) -> Result<Vec<WaveletLayer>> {
    (0..layers)
        .map(|l| {
            let filter = if shared {
                format!("wavelet.{c}.filter")
            } else {
                format!("wavelet.{c}.{l}.filter")
            };
            Ok(WaveletLayer {
                filter_raw: param(vars, &filter)?,
                weight: param(vars, &format!("wavelet.{c}.{l}.weight"))?,
            })
        })
        .collect()
}

/// Averages two encoder runs state by state.
fn fuse_streams(t: &mut Tape, a: EncoderOutput, b: Option<EncoderOutput>) -> Result<EncoderOutput> {
    let Some(b) = b else { return Ok(a) };
    let layers = a
        .layers
        .iter()
        .zip(&b.layers)
        .map(|(x, y)| t.mean_of(&[*x, *y]))
        .collect::<Result<Vec<_>>>()?;
    let output = t.mean_of(&[a.output, b.output])?;
    Ok(EncoderOutput { output, layers })
}

/// `w * a + (1 - w) * b` with `w = sigmoid(logit)` broadcast over rows.
fn convex_mix(t: &mut Tape, logit: Var, a: Var, b: Var) -> Result<Var> {
    let n = t.value(a).nrows();
    let rows = Arc::new(vec![0; n]);
    let w = t.sigmoid(logit);
    let neg = t.scale(logit, -1.0);
    let w_rest = t.sigmoid(neg);
    let w = t.gather_rows(w, rows.clone())?;
    let w_rest = t.gather_rows(w_rest, rows)?;
    let a = t.scale_rows(a, w)?;
    let b = t.scale_rows(b, w_rest)?;
    t.add(a, b)
}

fn channel_forward(
    t: &mut Tape,
    spec: &ModelSpec,
    vars: &BTreeMap<String, Var>,
    c: Channel,
    graph: &ChannelGraph,
    text: Option<&TextPair>,
) -> Result<ChannelView> {
    let structural = param(vars, &format!("embed.{c}"))?;
    let textual = match (spec.text_dims, text) {
        (Some(_), Some(text)) => {
            let raw = text.get(c);
            if raw.nrows() != spec.n_nodes(c) {
                return Err(Error::Shape(format!(
                    "{c} text has {} rows, expected {}",
                    raw.nrows(),
                    spec.n_nodes(c)
                )));
            }
            let raw = t.leaf(raw.clone());
            let proj = param(vars, &format!("text_proj.{c}"))?;
            Some(t.matmul(raw, proj)?)
        }
        _ => None,
    };

    let hdnn = match spec.hdnn_layers {
        Some(layers) => {
            let params = hdnn_layers(vars, c, layers)?;
            let s = hdnn_encode(t, structural, &graph.propagation, &params)?;
            let x = textual.map(|x| hdnn_encode(t, x, &graph.propagation, &params)).transpose()?;
            Some(fuse_streams(t, s, x)?)
        }
        None => None,
    };
    let wavelet = match spec.wavelet_layers {
        Some(layers) => {
            let basis = graph
                .basis
                .as_ref()
                .ok_or_else(|| Error::Config("wavelet encoder enabled but no basis was built".into()))?;
            let params = wavelet_layers(vars, c, layers, spec.shared_filter)?;
            let s = wavelet_encode(t, structural, basis, &params, spec.combine)?;
            let x = textual
                .map(|x| wavelet_encode(t, x, basis, &params, spec.combine))
                .transpose()?;
            Some(fuse_streams(t, s, x)?)
        }
        None => None,
    };

    let output = match (&hdnn, &wavelet) {
        (Some(h), Some(w)) => match spec.late {
            LateFusion::Mean => t.mean_of(&[h.output, w.output])?,
            LateFusion::LearnedScalar => convex_mix(t, param(vars, LATE_LOGIT)?, h.output, w.output)?,
        },
        (Some(h), None) => h.output,
        (None, Some(w)) => w.output,
        (None, None) => return Err(Error::Config("at least one of hdnn and wavelet must be enabled".into())),
    };
    Ok(ChannelView {
        output,
        hdnn_layers: hdnn.map(|h| h.layers),
        wavelet_layers: wavelet.map(|w| w.layers),
    })
}

/// Records the whole model on `t`, registering every parameter by name.
pub fn forward_tape(
    t: &mut Tape,
    spec: &ModelSpec,
    params: &ParameterSet,
    graphs: Option<&GraphContext>,
    text: Option<&TextPair>,
) -> Result<FusedVars> {
    params.check_layout(spec)?;
    let vars: BTreeMap<String, Var> = params
        .iter()
        .map(|(name, value)| (name.clone(), t.param(name.clone(), value.clone())))
        .collect();
    forward_with_vars(t, spec, vars, graphs, text)
}

/// As [`forward_tape`] for parameters already recorded on `t`, keyed by name.
pub fn forward_with_vars(
    t: &mut Tape,
    spec: &ModelSpec,
    vars: BTreeMap<String, Var>,
    graphs: Option<&GraphContext>,
    text: Option<&TextPair>,
) -> Result<FusedVars> {
    let users_embed = param(&vars, EMBED_USERS)?;
    let items_embed = param(&vars, EMBED_ITEMS)?;

    let (user_view, item_view) = match spec.kind {
        ModelKind::MatrixFactorization => {
            let view = |v| ChannelView {
                output: v,
                hdnn_layers: None,
                wavelet_layers: None,
            };
            (view(users_embed), view(items_embed))
        }
        ModelKind::Hypergraph => {
            let graphs = graphs.ok_or_else(|| Error::Config("hypergraph model requires graph operators".into()))?;
            for c in Channel::BOTH {
                let n = graphs.channel(c).propagation.shape().0;
                if n != spec.n_nodes(c) {
                    return Err(Error::Shape(format!("{c} operator has {n} nodes, expected {}", spec.n_nodes(c))));
                }
            }
            let u = channel_forward(t, spec, &vars, Channel::Users, &graphs.users, text)?;
            let i = channel_forward(t, spec, &vars, Channel::Items, &graphs.items, text)?;
            (u, i)
        }
    };
    Ok(FusedVars {
        users: user_view.output,
        items: item_view.output,
        user_view,
        item_view,
        params: vars,
    })
}

/// Per-channel fused per-layer states as plain matrices.
#[derive(Debug, Clone, Default)]
pub struct LayerStates {
    pub hdnn: Vec<Array2<f64>>,
    pub wavelet: Vec<Array2<f64>>,
}

/// Final embeddings plus cached intermediates.
#[derive(Debug, Clone)]
pub struct FusedEmbeddings {
    pub users: Array2<f64>,
    pub items: Array2<f64>,
    pub user_layers: LayerStates,
    pub item_layers: LayerStates,
}

/// Inference forward pass without gradients.
pub fn forward_full(
    spec: &ModelSpec,
    params: &ParameterSet,
    graphs: Option<&GraphContext>,
    text: Option<&TextPair>,
) -> Result<FusedEmbeddings> {
    let mut t = Tape::new();
    let f = forward_tape(&mut t, spec, params, graphs, text)?;
    let states = |view: &ChannelView| LayerStates {
        hdnn: view.hdnn_layers.iter().flatten().map(|v| t.value(*v).clone()).collect(),
        wavelet: view.wavelet_layers.iter().flatten().map(|v| t.value(*v).clone()).collect(),
    };
    let out = FusedEmbeddings {
        users: t.value(f.users).clone(),
        items: t.value(f.items).clone(),
        user_layers: states(&f.user_view),
        item_layers: states(&f.item_view),
    };
    if out.users.iter().chain(out.items.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("forward pass produced non-finite embeddings".into()));
    }
    Ok(out)
}

/// `<e_u, e_i>`.
pub fn score(users: &Array2<f64>, items: &Array2<f64>, u: usize, i: usize) -> Result<f64> {
    if u >= users.nrows() {
        return Err(Error::Data(format!("user id {u} out of range ({} users)", users.nrows())));
    }
    if i >= items.nrows() {
        return Err(Error::Data(format!("item id {i} out of range ({} items)", items.nrows())));
    }
    if users.ncols() != items.ncols() {
        return Err(Error::Shape(format!("embedding widths differ: {} vs {}", users.ncols(), items.ncols())));
    }
    Ok(users.row(u).dot(&items.row(i)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::EntityKind;
    use ndarray::array;

    fn toy() -> InteractionGraph {
        InteractionGraph::from_pairs(4, 4, &[(0, 0), (0, 1), (1, 1), (1, 2), (2, 2), (2, 3), (3, 3), (3, 0), (0, 2)]).unwrap()
    }

    fn cfg() -> RunConfig {
        let mut c = RunConfig::default();
        c.model.dim = 3;
        c.hdnn.layers = 2;
        c.wavelet.layers = 2;
        c
    }

    fn text(seed: u64) -> TextPair {
        TextPair {
            users: Arc::new(crate::data::synth_text_embeddings(4, 5, EntityKind::User, None, 0.0, seed)),
            items: Arc::new(crate::data::synth_text_embeddings(4, 2, EntityKind::Item, None, 0.0, seed)),
        }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let c = cfg();
        let spec = ModelSpec::from_config(&c, 4, 4, Some((5, 2)));
        let a = init_params(&spec, 3).unwrap();
        assert_eq!(a, init_params(&spec, 3).unwrap());
        assert_ne!(a, init_params(&spec, 4).unwrap());
        for (name, (r, cols), rule) in layout_with_rules(&spec) {
            let t = a.get(&name).unwrap();
            assert_eq!(t.dim(), (r, cols));
            match rule {
                InitRule::Xavier => {
                    let bound = xavier_bound(r, cols);
                    assert!(t.iter().all(|v| v.abs() < bound), "{name}");
                }
                InitRule::Zeros => assert!(t.iter().all(|v| *v == 0.0)),
                InitRule::RowUnitGain => assert!(t.iter().all(|v| *v == 1.0 / (cols as f64).sqrt())),
                InitRule::UnitSoftplus => {
                    assert!(t.iter().all(|v| ((1.0 + v.exp()).ln() - 1.0).abs() < 1e-15));
                }
            }
        }
    }

    #[test]
    fn default_dim_is_32() {
        assert_eq!(RunConfig::default().model.dim, 32);
    }

    #[test]
    fn score_cases() {
        let e = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(score(&e, &e, 0, 0).unwrap(), 1.0);
        assert_eq!(score(&e, &e, 0, 1).unwrap(), 0.0);
        assert!(score(&e, &e, 2, 0).is_err());
        assert!(score(&e, &e, 0, 5).is_err());
        let u = array![[0.3, -1.2, 2.5]];
        let i = array![[1.1, 0.4, -0.7]];
        let want = 0.3 * 1.1 + -1.2 * 0.4 + 2.5 * -0.7;
        assert!((score(&u, &i, 0, 0).unwrap() - want).abs() < 1e-12);
        let scaled = u.mapv(|v| v * -2.5);
        assert!((score(&scaled, &i, 0, 0).unwrap() + 2.5 * want).abs() < 1e-12);
    }

    #[test]
    fn late_fusion_is_mean_of_encoders() {
        let c = cfg();
        let g = toy();
        let graphs = GraphContext::build(&g, &BasisSettings::from_config(&c)).unwrap();
        let spec = ModelSpec::from_config(&c, 4, 4, Some((5, 2)));
        let params = init_params(&spec, 1).unwrap();
        let tp = text(2);
        let full = forward_full(&spec, &params, Some(&graphs), Some(&tp)).unwrap();

        // Hand-composed pipeline from the four encoder calls per channel.
        let mut t = Tape::new();
        let vars: BTreeMap<String, Var> = params.iter().map(|(n, v)| (n.clone(), t.leaf(v.clone()))).collect();
        for (c, graph, got) in [
            (Channel::Users, &graphs.users, &full.users),
            (Channel::Items, &graphs.items, &full.items),
        ] {
            let xs = vars[&format!("embed.{c}")];
            let raw = t.leaf(tp.get(c).clone());
            let xt = t.matmul(raw, vars[&format!("text_proj.{c}")]).unwrap();
            let hl = hdnn_layers(&vars, c, 2).unwrap();
            let wl = wavelet_layers(&vars, c, 2, false).unwrap();
            let basis = graph.basis.as_ref().unwrap();
            let hs = hdnn_encode(&mut t, xs, &graph.propagation, &hl).unwrap().output;
            let ht = hdnn_encode(&mut t, xt, &graph.propagation, &hl).unwrap().output;
            let ws = wavelet_encode(&mut t, xs, basis, &wl, Combine::Add).unwrap().output;
            let wt = wavelet_encode(&mut t, xt, basis, &wl, Combine::Add).unwrap().output;
            let h = (t.value(hs) + t.value(ht)) / 2.0;
            let w = (t.value(ws) + t.value(wt)) / 2.0;
            let want = (&h + &w) / 2.0;
            assert!((&want - got).iter().all(|v| v.abs() < 1e-12));
            // Mean is symmetric in its operands.
            assert_eq!((&h + &w) / 2.0, (&w + &h) / 2.0);
        }
    }

    #[test]
    fn identical_streams_fuse_to_either() {
        let mut t = Tape::new();
        let x = t.leaf(array![[1.0, 2.0], [3.0, 4.0]]);
        let a = EncoderOutput { output: x, layers: vec![x] };
        let b = EncoderOutput { output: x, layers: vec![x] };
        let f = fuse_streams(&mut t, a, Some(b)).unwrap();
        assert_eq!(t.value(f.output), t.value(x));
    }

    #[test]
    fn text_disabled_matches_textless_pipeline() {
        let mut c = cfg();
        let g = toy();
        let graphs = GraphContext::build(&g, &BasisSettings::from_config(&c)).unwrap();
        c.text.enabled = false;
        let spec = ModelSpec::from_config(&c, 4, 4, Some((5, 2)));
        assert_eq!(spec.text_dims, None);
        let params = init_params(&spec, 5).unwrap();
        let with_text_given = forward_full(&spec, &params, Some(&graphs), Some(&text(1))).unwrap();
        let without = forward_full(&spec, &params, Some(&graphs), None).unwrap();
        assert_eq!(with_text_given.users, without.users);
        assert_eq!(with_text_given.items, without.items);
    }

    #[test]
    fn learned_scalar_at_zero_logit_equals_mean() {
        let mut c = cfg();
        let g = toy();
        let graphs = GraphContext::build(&g, &BasisSettings::from_config(&c)).unwrap();
        let mean_spec = ModelSpec::from_config(&c, 4, 4, None);
        let mean_params = init_params(&mean_spec, 9).unwrap();
        c.fusion.late = LateFusion::LearnedScalar;
        let spec = ModelSpec::from_config(&c, 4, 4, None);
        let mut params = mean_params.clone();
        params.insert(LATE_LOGIT, Array2::zeros((1, 1)));
        let a = forward_full(&mean_spec, &mean_params, Some(&graphs), None).unwrap();
        let b = forward_full(&spec, &params, Some(&graphs), None).unwrap();
        assert!((&a.users - &b.users).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn single_encoder_routes_directly() {
        let mut c = cfg();
        c.wavelet.enabled = false;
        let g = toy();
        let graphs = GraphContext::build(&g, &BasisSettings::from_config(&c)).unwrap();
        assert!(graphs.users.basis.is_none());
        let spec = ModelSpec::from_config(&c, 4, 4, None);
        assert!(!spec.has_two_views());
        let params = init_params(&spec, 2).unwrap();
        let out = forward_full(&spec, &params, Some(&graphs), None).unwrap();
        assert_eq!(out.user_layers.hdnn.len(), 3);
        assert!(out.user_layers.wavelet.is_empty());
    }

    #[test]
    fn layout_mismatch_is_reported() {
        let spec = ModelSpec::from_config(&cfg(), 4, 4, None);
        let mut params = init_params(&spec, 1).unwrap();
        params.insert(EMBED_USERS, Array2::zeros((5, 3)));
        assert!(matches!(params.check_layout(&spec), Err(Error::Shape(_))));
    }

    #[test]
    fn matrix_factorization_is_identity_encoder() {
        let spec = ModelSpec::matrix_factorization(3, 2, 4);
        let params = init_params(&spec, 1).unwrap();
        assert_eq!(params.len(), 2);
        let out = forward_full(&spec, &params, None, None).unwrap();
        assert_eq!(&out.users, params.get(EMBED_USERS).unwrap());
    }
}
