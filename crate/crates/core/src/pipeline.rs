//! End-to-end runs: dataset preparation, per-seed training and evaluation,
//! baselines and ablation variants.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array2;

use crate::config::RunConfig;
use crate::data::{
    generate_synthetic_heterophilic, load_interactions, load_text_embeddings, split_interactions, synth_text_embeddings,
    EntityKind, InteractionGraph, SplitBundle, SynthLabels,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_embeddings, MetricReport};
use crate::model::{forward_full, BasisSettings, GraphContext, ModelSpec, ParameterSet, TextPair};
use crate::train::{train, TrainOutcome, TrainSetup};

#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: InteractionGraph,
    pub labels: Option<SynthLabels>,
}

/// Loads the configured interaction file or generates the synthetic set.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    match (&cfg.data.interactions, &cfg.data.synth) {
        (Some(path), None) => {
            if !path.exists() {
                return Err(Error::Config(format!("data.interactions: {} does not exist", path.display())));
            }
            Ok(Dataset {
                graph: load_interactions(path)?,
                labels: None,
            })
        }
        (None, Some(p)) => {
            let (graph, labels) = generate_synthetic_heterophilic(p)?;
            Ok(Dataset {
                graph,
                labels: Some(labels),
            })
        }
        (None, None) => Err(Error::Config("no data source: set data.interactions or [data.synth]".into())),
        (Some(_), Some(_)) => Err(Error::Config("data.interactions and data.synth are mutually exclusive".into())),
    }
}

/// Text embeddings from files, label-seeded synthetic vectors for generated
/// data, or `None` for structural-only runs.
pub fn load_text(cfg: &RunConfig, dataset: &Dataset) -> Result<Option<TextPair>> {
    let Some(mut pair) = load_raw_text(cfg, dataset)? else {
        return Ok(None);
    };
    if cfg.text.normalize {
        for t in [&mut pair.users, &mut pair.items] {
            let mut m = (**t).clone();
            for mut row in m.matrix.rows_mut() {
                let norm = row.dot(&row).sqrt();
                if norm > 0.0 {
                    row /= norm;
                }
            }
            *t = Arc::new(m);
        }
    }
    Ok(Some(pair))
}

fn load_raw_text(cfg: &RunConfig, dataset: &Dataset) -> Result<Option<TextPair>> {
    if !cfg.text.enabled {
        return Ok(None);
    }
    let g = &dataset.graph;
    if let (Some(pu), Some(pi)) = (&cfg.text.path_users, &cfg.text.path_items) {
        let users = load_text_embeddings(pu, g.n_users(), EntityKind::User)?;
        let items = load_text_embeddings(pi, g.n_items(), EntityKind::Item)?;
        return Ok(Some(TextPair {
            users: Arc::new(users),
            items: Arc::new(items),
        }));
    }
    match &dataset.labels {
        Some(labels) => {
            let t = &cfg.text;
            let users = synth_text_embeddings(g.n_users(), t.synth_dim, EntityKind::User, Some(&labels.user_group), t.synth_noise, t.synth_seed);
            let items = synth_text_embeddings(g.n_items(), t.synth_dim, EntityKind::Item, Some(&labels.item_genre), t.synth_noise, t.synth_seed);
            Ok(Some(TextPair {
                users: Arc::new(users),
                items: Arc::new(items),
            }))
        }
        None => {
            log::warn!("no text embeddings configured; running structural-only");
            Ok(None)
        }
    }
}

/// Data, split and operators shared by every seed of a configuration.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub cfg: RunConfig,
    pub dataset: Arc<Dataset>,
    pub split: Arc<SplitBundle>,
    pub graphs: Arc<GraphContext>,
    pub text: Option<TextPair>,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let dataset = load_dataset(cfg)?;
    let split = split_interactions(&dataset.graph, cfg.data.split_ratios(), cfg.data.split_seed)?;
    let graphs = GraphContext::build(&split.train, &BasisSettings::from_config(cfg))?;
    let text = load_text(cfg, &dataset)?;
    Ok(Prepared {
        cfg: cfg.clone(),
        dataset: Arc::new(dataset),
        split: Arc::new(split),
        graphs: Arc::new(graphs),
        text,
    })
}

impl Prepared {
    pub fn spec(&self) -> ModelSpec {
        let g = &self.split.train;
        ModelSpec::from_config(&self.cfg, g.n_users(), g.n_items(), self.text.as_ref().map(|t| t.dims()))
    }

    /// Same data under a modified configuration. Operators are rebuilt only
    /// when the data or wavelet settings differ.
    pub fn with_config(&self, cfg: RunConfig) -> Result<Prepared> {
        cfg.validate()?;
        if cfg.data != self.cfg.data {
            return prepare(&cfg);
        }
        let old = BasisSettings::from_config(&self.cfg);
        let new = BasisSettings::from_config(&cfg);
        let reuse = new == old || !new.enabled;
        let graphs = if reuse {
            self.graphs.clone()
        } else {
            Arc::new(GraphContext::build(&self.split.train, &new)?)
        };
        let text = if cfg.text == self.cfg.text {
            self.text.clone()
        } else {
            load_text(&cfg, &self.dataset)?
        };
        Ok(Prepared {
            cfg,
            dataset: self.dataset.clone(),
            split: self.split.clone(),
            graphs,
            text,
        })
    }

    fn setup<'a>(&'a self, spec: &'a ModelSpec) -> TrainSetup<'a> {
        TrainSetup {
            spec,
            graphs: Some(&self.graphs),
            text: self.text.as_ref(),
            split: &self.split,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub spec: ModelSpec,
    pub outcome: TrainOutcome,
    pub users: Array2<f64>,
    pub items: Array2<f64>,
    pub val: MetricReport,
    pub test: MetricReport,
}

fn evaluate_both(split: &SplitBundle, users: &Array2<f64>, items: &Array2<f64>, ks: &[usize], seed: u64) -> Result<(MetricReport, MetricReport)> {
    let val = evaluate_embeddings(users, items, &split.train, &split.val, ks, "val", seed)?;
    let test = evaluate_embeddings(users, items, &split.train, &split.test, ks, "test", seed)?;
    Ok((val, test))
}

/// Trains one seed and evaluates its best checkpoint on val and test.
pub fn run_seed(prep: &Prepared, seed: u64) -> Result<SeedRun> {
    let spec = prep.spec();
    let setup = prep.setup(&spec);
    let outcome = train(&setup, &prep.cfg.train, prep.cfg.eval.val_k, seed)?;
    let emb = forward_full(&spec, &outcome.params, Some(&prep.graphs), prep.text.as_ref())?;
    let (val, test) = evaluate_both(&prep.split, &emb.users, &emb.items, &prep.cfg.eval.ks, seed)?;
    Ok(SeedRun {
        seed,
        spec,
        outcome,
        users: emb.users,
        items: emb.items,
        val,
        test,
    })
}

/// Dot-product embedding model trained by the same loop without graph
/// propagation, text or contrastive term.
pub fn mf_bpr_baseline(prep: &Prepared, seed: u64) -> Result<SeedRun> {
    let g = &prep.split.train;
    let spec = ModelSpec::matrix_factorization(g.n_users(), g.n_items(), prep.cfg.model.dim);
    let setup = TrainSetup {
        spec: &spec,
        graphs: None,
        text: None,
        split: &prep.split,
    };
    let outcome = train(&setup, &prep.cfg.train, prep.cfg.eval.val_k, seed)?;
    let users = param_or_err(&outcome.params, crate::model::EMBED_USERS)?;
    let items = param_or_err(&outcome.params, crate::model::EMBED_ITEMS)?;
    let (val, test) = evaluate_both(&prep.split, &users, &items, &prep.cfg.eval.ks, seed)?;
    Ok(SeedRun {
        seed,
        spec,
        outcome,
        users,
        items,
        val,
        test,
    })
}

fn param_or_err(p: &ParameterSet, name: &str) -> Result<Array2<f64>> {
    p.get(name)
        .cloned()
        .ok_or_else(|| Error::Shape(format!("parameter `{name}` missing")))
}

/// A model component that an ablation can switch off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Component {
    Hdnn,
    Wavelet,
    Fusion,
    Contrastive,
}

impl Component {
    pub const ALL: [Component; 4] = [Component::Hdnn, Component::Wavelet, Component::Fusion, Component::Contrastive];

    pub fn name(self) -> &'static str {
        match self {
            Component::Hdnn => "hdnn",
            Component::Wavelet => "wavelet",
            Component::Fusion => "fusion",
            Component::Contrastive => "contrastive",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Component::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown component `{s}` (expected hdnn, wavelet, fusion or contrastive)")))
    }
}

/// `full`, or `w/o` followed by the disabled components joined with `+`.
pub fn variant_name(disable: &BTreeSet<Component>) -> String {
    if disable.is_empty() {
        "full".into()
    } else {
        let parts: Vec<&str> = disable.iter().map(|c| c.name()).collect();
        format!("w/o {}", parts.join("+"))
    }
}

/// Configuration with the given components switched off.
pub fn ablated_config(cfg: &RunConfig, disable: &BTreeSet<Component>) -> Result<RunConfig> {
    let mut c = cfg.clone();
    for comp in disable {
        match comp {
            Component::Hdnn => c.hdnn.enabled = false,
            Component::Wavelet => c.wavelet.enabled = false,
            Component::Fusion => c.text.enabled = false,
            Component::Contrastive => c.train.ssl_weight = 0.0,
        }
    }
    c.validate()?;
    Ok(c)
}

#[derive(Debug, Clone)]
pub struct VariantResult {
    pub variant: String,
    pub runs: Vec<SeedRun>,
}

/// Trains each variant for every seed. Every variant shares the data,
/// split and seeds of `prep`.
pub fn run_ablation(prep: &Prepared, variants: &[BTreeSet<Component>], seeds: &[u64]) -> Result<Vec<VariantResult>> {
    let configs = variants
        .iter()
        .map(|d| ablated_config(&prep.cfg, d).map(|c| (variant_name(d), c)))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(configs.len());
    for (variant, cfg) in configs {
        let vp = prep.with_config(cfg)?;
        let runs = seeds.iter().map(|&s| run_seed(&vp, s)).collect::<Result<Vec<_>>>()?;
        out.push(VariantResult { variant, runs });
    }
    Ok(out)
}

pub const ABLATION_CSV_HEADER: &str = "variant,split,k,recall,ndcg,n_users,seed";

pub fn ablation_csv(results: &[VariantResult]) -> String {
    let mut out = format!("{ABLATION_CSV_HEADER}\n");
    for v in results {
        for run in &v.runs {
            for row in run.test.csv_rows() {
                out.push_str(&format!("{},{row}\n", v.variant));
            }
        }
    }
    out
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub const SUMMARY_CSV_HEADER: &str = "split,k,recall_mean,recall_std,ndcg_mean,ndcg_std,n_seeds";

/// Per split and cutoff, mean and standard deviation over seeds.
pub fn summary_csv(runs: &[SeedRun]) -> String {
    let mut out = format!("{SUMMARY_CSV_HEADER}\n");
    let Some(first) = runs.first() else { return out };
    for (split, pick) in [("val", 0), ("test", 1)] {
        let report = |r: &SeedRun| if pick == 0 { r.val.clone() } else { r.test.clone() };
        for m in &report(first).metrics {
            let recalls: Vec<f64> = runs.iter().filter_map(|r| report(r).at(m.k)).map(|x| x.recall).collect();
            let ndcgs: Vec<f64> = runs.iter().filter_map(|r| report(r).at(m.k)).map(|x| x.ndcg).collect();
            let (rm, rs) = mean_std(&recalls);
            let (nm, ns) = mean_std(&ndcgs);
            out.push_str(&format!("{split},{},{rm:.6},{rs:.6},{nm:.6},{ns:.6},{}\n", m.k, runs.len()));
        }
    }
    out
}

/// Values of a sweep argument: `a..b` (inclusive integers) or a comma
/// list of TOML literals.
pub fn parse_sweep_values(arg: &str) -> Result<Vec<String>> {
    if let Some((a, b)) = arg.split_once("..") {
        let lo: i64 = a.trim().parse().map_err(|_| Error::Config(format!("bad range start `{a}`")))?;
        let hi: i64 = b.trim().parse().map_err(|_| Error::Config(format!("bad range end `{b}`")))?;
        if lo > hi {
            return Err(Error::Config(format!("empty range {arg}")));
        }
        return Ok((lo..=hi).map(|v| v.to_string()).collect());
    }
    let vals: Vec<String> = arg.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    if vals.is_empty() {
        return Err(Error::Config(format!("no sweep values in `{arg}`")));
    }
    Ok(vals)
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: String,
    pub runs: Vec<SeedRun>,
}

/// Trains every value of `key` for every seed in the configuration.
pub fn run_sweep(base: &RunConfig, key: &str, values: &[String]) -> Result<Vec<SweepPoint>> {
    let configs = values
        .iter()
        .map(|v| {
            let mut c = base.clone();
            c.set(key, v)?;
            Ok((v.clone(), c))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut shared: Option<Prepared> = None;
    let mut out = Vec::with_capacity(configs.len());
    for (value, cfg) in configs {
        let prep = match &shared {
            Some(p) => p.with_config(cfg.clone())?,
            None => prepare(&cfg)?,
        };
        let runs = cfg.train.seeds.iter().map(|&s| run_seed(&prep, s)).collect::<Result<Vec<_>>>()?;
        shared.get_or_insert(prep);
        out.push(SweepPoint { value, runs });
    }
    Ok(out)
}

/// One row per swept value with test-split means over seeds.
pub fn sweep_csv(key: &str, points: &[SweepPoint], ks: &[usize]) -> String {
    let mut out = String::from("param,value,n_seeds");
    for k in ks {
        out.push_str(&format!(",recall@{k},ndcg@{k}"));
    }
    out.push('\n');
    for p in points {
        out.push_str(&format!("{key},{},{}", p.value, p.runs.len()));
        for &k in ks {
            let recalls: Vec<f64> = p.runs.iter().filter_map(|r| r.test.at(k)).map(|m| m.recall).collect();
            let ndcgs: Vec<f64> = p.runs.iter().filter_map(|r| r.test.at(k)).map(|m| m.ndcg).collect();
            out.push_str(&format!(",{:.6},{:.6}", mean_std(&recalls).0, mean_std(&ndcgs).0));
        }
        out.push('\n');
    }
    out
}
