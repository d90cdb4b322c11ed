//! `hyperwave` command-line interface.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use hyperwave::autodiff::OP_KINDS;
use hyperwave::checkpoint::Checkpoint;
use hyperwave::config::RunConfig;
use hyperwave::data::{generate_synthetic_heterophilic, load_interactions, split_interactions, write_interactions, IdMap, Interaction, InteractionGraph, SynthParams};
use hyperwave::diagnostics::{gradcheck_csv, run_gradcheck, GRADCHECK_TOL};
use hyperwave::eval::{evaluate_embeddings, reports_csv};
use hyperwave::pipeline::{
    ablation_csv, load_dataset, parse_sweep_values, prepare, run_ablation, run_seed, run_sweep, summary_csv, sweep_csv, Component,
    SeedRun,
};
use hyperwave::train::history_csv;
use hyperwave::{Error, Result};

const FINAL_USERS: &str = "final.users";
const FINAL_ITEMS: &str = "final.items";

#[derive(Debug, Parser)]
#[command(name = "hyperwave", version, about = "Hypergraph diffusion and wavelet recommender")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model per seed; writes checkpoints, histories and a summary.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated seeds; overrides `train.seeds`.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Output directory; overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// `key=value` overrides applied after loading the config.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Evaluate a checkpoint on the validation and test splits.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Interaction file; defaults to the data source recorded in the checkpoint.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "10,20,40")]
        k: Vec<usize>,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train ablated variants next to the full model.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// Components to switch off: hdnn, wavelet, fusion, contrastive.
        #[arg(long, value_delimiter = ',')]
        disable: Vec<String>,
        /// One variant per listed component (all four when none is listed)
        /// instead of a single variant with all of them off.
        #[arg(long)]
        each: bool,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Retrain over a range of values of one config key.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `key=a..b` (inclusive integers) or `key=v1,v2,...`.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Finite-difference check of every differentiable component.
    Gradcheck {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Corrupt one op's backward rule (self-test of the checker).
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Generate a heterophilic synthetic interaction file.
    Synth {
        #[arg(long, default_value_t = 2000)]
        users: usize,
        #[arg(long, default_value_t = 1000)]
        items: usize,
        #[arg(long, default_value_t = 4)]
        genres: usize,
        #[arg(long, default_value_t = 8)]
        groups: usize,
        #[arg(long, default_value_t = 0.3)]
        cross_rate: f64,
        #[arg(long, default_value_t = 20)]
        per_user: usize,
        #[arg(long, default_value_t = 0.8)]
        skew: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn load_config(path: &Path, seeds: Option<Vec<u64>>, overrides: &[String]) -> Result<RunConfig> {
    if !path.exists() {
        return Err(Error::Config(format!("config file {} does not exist", path.display())));
    }
    let mut cfg = RunConfig::load(path)?;
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{o}` is not KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seeds) = seeds {
        cfg.train.seeds = seeds;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| cfg.output.dir.clone())
}

fn save_run(dir: &Path, cfg: &RunConfig, prep_train: &InteractionGraph, run: &SeedRun) -> Result<()> {
    let seed_dir = dir.join(format!("seed_{}", run.seed));
    let mut matrices: Vec<_> =
        run.outcome.params.iter().map(|(n, m)| (n.clone(), m.clone())).collect();
    matrices.push((FINAL_USERS.into(), run.users.clone()));
    matrices.push((FINAL_ITEMS.into(), run.items.clone()));
    let ckpt = Checkpoint {
        config_toml: cfg.to_toml_string(),
        user_names: prep_train.user_ids().names().to_vec(),
        item_names: prep_train.item_ids().names().to_vec(),
        matrices,
    };
    std::fs::create_dir_all(&seed_dir).map_err(|e| Error::io(format!("creating {}", seed_dir.display()), e))?;
    ckpt.write(&seed_dir.join("checkpoint.bin"))?;
    write_file(&seed_dir.join("history.csv"), &history_csv(&run.outcome.history))?;
    write_file(&seed_dir.join("metrics.csv"), &reports_csv([&run.val, &run.test]))?;
    Ok(())
}

fn cmd_train(config: PathBuf, seeds: Option<Vec<u64>>, out: Option<PathBuf>, overrides: Vec<String>) -> Result<()> {
    let cfg = load_config(&config, seeds, &overrides)?;
    let dir = out_dir(&cfg, out);
    write_file(&dir.join("config.toml"), &cfg.to_toml_string())?;
    let prep = prepare(&cfg)?;
    let mut runs = Vec::new();
    for &seed in &cfg.train.seeds {
        log::info!("training seed {seed}");
        let run = run_seed(&prep, seed)?;
        save_run(&dir, &cfg, &prep.split.train, &run)?;
        log::info!(
            "seed {seed}: best epoch {}, val ndcg@{} {:.4}",
            run.outcome.best_epoch,
            cfg.eval.val_k,
            run.outcome.best_val_ndcg
        );
        runs.push(run);
    }
    write_file(&dir.join("summary.csv"), &summary_csv(&runs))?;
    println!("{}", dir.display());
    Ok(())
}

/// Re-expresses `graph` in the checkpoint's id space.
fn remap(graph: &InteractionGraph, users: &[String], items: &[String]) -> Result<InteractionGraph> {
    let users = Arc::new(IdMap::from_names(users.iter())?);
    let items = Arc::new(IdMap::from_names(items.iter())?);
    let lookup = |map: &IdMap, name: &str, what: &str| {
        map.get(name)
            .ok_or_else(|| Error::Data(format!("{what} `{name}` is not in the checkpoint's id table")))
    };
    let mut out = Vec::with_capacity(graph.len());
    for x in graph.interactions() {
        let u = lookup(&users, graph.user_ids().name(x.user), "user")?;
        let i = lookup(&items, graph.item_ids().name(x.item), "item")?;
        out.push(Interaction {
            user: u,
            item: i,
            timestamp: x.timestamp,
        });
    }
    InteractionGraph::new(users, items, out)
}

fn cmd_eval(checkpoint: PathBuf, data: Option<PathBuf>, k: Vec<usize>, out: Option<PathBuf>) -> Result<()> {
    let ckpt = Checkpoint::read(&checkpoint)?;
    let cfg = RunConfig::from_toml_str(&ckpt.config_toml)
        .map_err(|e| Error::Checkpoint(format!("embedded config unreadable: {e}")))?;
    let graph = match data {
        Some(p) => {
            if !p.exists() {
                return Err(Error::Config(format!("data file {} does not exist", p.display())));
            }
            load_interactions(&p)?
        }
        None => load_dataset(&cfg)?.graph,
    };
    let graph = remap(&graph, &ckpt.user_names, &ckpt.item_names)?;
    let split = split_interactions(&graph, cfg.data.split_ratios(), cfg.data.split_seed)?;
    let users = ckpt.require(FINAL_USERS)?;
    let items = ckpt.require(FINAL_ITEMS)?;
    if users.nrows() != graph.n_users() || items.nrows() != graph.n_items() {
        return Err(Error::Checkpoint(format!(
            "embedding shapes {:?}/{:?} do not match {} users and {} items",
            users.dim(),
            items.dim(),
            graph.n_users(),
            graph.n_items()
        )));
    }
    if k.is_empty() || k.contains(&0) {
        return Err(Error::Config("--k values must be positive".into()));
    }
    let seed = cfg.train.seeds.first().copied().unwrap_or(0);
    let seed = checkpoint
        .parent()
        .and_then(|d| d.file_name())
        .and_then(|n| n.to_str())
        .and_then(|n| n.strip_prefix("seed_"))
        .and_then(|s| s.parse().ok())
        .unwrap_or(seed);
    let val = evaluate_embeddings(users, items, &split.train, &split.val, &k, "val", seed)?;
    let test = evaluate_embeddings(users, items, &split.train, &split.test, &k, "test", seed)?;
    let csv = reports_csv([&val, &test]);
    match out {
        Some(p) => write_file(&p, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn parse_components(names: &[String]) -> Result<BTreeSet<Component>> {
    names.iter().map(|n| n.trim().parse()).collect()
}

fn cmd_ablate(
    config: PathBuf,
    disable: Vec<String>,
    each: bool,
    seeds: Option<Vec<u64>>,
    out: Option<PathBuf>,
    overrides: Vec<String>,
) -> Result<()> {
    let cfg = load_config(&config, seeds, &overrides)?;
    let disable = parse_components(&disable)?;
    let mut variants = vec![BTreeSet::new()];
    if each {
        let list: Vec<Component> = if disable.is_empty() { Component::ALL.to_vec() } else { disable.iter().copied().collect() };
        variants.extend(list.into_iter().map(|c| BTreeSet::from([c])));
    } else if !disable.is_empty() {
        variants.push(disable);
    }
    for v in &variants {
        hyperwave::pipeline::ablated_config(&cfg, v)?;
    }
    let dir = out_dir(&cfg, out);
    write_file(&dir.join("config.toml"), &cfg.to_toml_string())?;
    let prep = prepare(&cfg)?;
    let results = run_ablation(&prep, &variants, &cfg.train.seeds)?;
    write_file(&dir.join("ablation.csv"), &ablation_csv(&results))?;
    println!("{}", dir.join("ablation.csv").display());
    Ok(())
}

fn cmd_sweep(config: PathBuf, param: String, seeds: Option<Vec<u64>>, out: Option<PathBuf>, overrides: Vec<String>) -> Result<()> {
    let cfg = load_config(&config, seeds, &overrides)?;
    let (key, values_arg) = param
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--param `{param}` is not KEY=VALUES")))?;
    let key = key.trim();
    let values = parse_sweep_values(values_arg)?;
    for v in &values {
        cfg.clone().set(key, v)?;
    }
    let dir = out_dir(&cfg, out);
    write_file(&dir.join("config.toml"), &cfg.to_toml_string())?;
    let points = run_sweep(&cfg, key, &values)?;
    let file = dir.join("sweep.csv");
    write_file(&file, &sweep_csv(key, &points, &cfg.eval.ks))?;
    println!("{}", file.display());
    Ok(())
}

fn cmd_gradcheck(out: Option<PathBuf>, inject_fault: Option<String>) -> Result<bool> {
    let fault = match inject_fault {
        Some(name) => Some(
            *OP_KINDS
                .iter()
                .find(|k| **k == name)
                .ok_or_else(|| Error::Config(format!("unknown op kind `{name}`")))?,
        ),
        None => None,
    };
    let reports = run_gradcheck(fault);
    let csv = gradcheck_csv(&reports);
    match out {
        Some(p) => write_file(&p, &csv)?,
        None => print!("{csv}"),
    }
    let failed: Vec<_> = reports.iter().filter(|r| !r.passed).collect();
    for r in &failed {
        eprintln!(
            "FAIL {}: max relative error {:.3e} (tolerance {GRADCHECK_TOL:e}){}",
            r.name,
            r.max_rel_err,
            r.error.as_deref().map(|e| format!(": {e}")).unwrap_or_default()
        );
    }
    Ok(failed.is_empty())
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    users: usize,
    items: usize,
    genres: usize,
    groups: usize,
    cross_rate: f64,
    per_user: usize,
    skew: f64,
    seed: u64,
    out: PathBuf,
) -> Result<()> {
    let params = SynthParams {
        users,
        items,
        user_groups: groups,
        genres,
        cross_rate,
        per_user,
        skew,
        seed,
    };
    let (graph, _) = generate_synthetic_heterophilic(&params)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    write_interactions(&graph, &out)?;
    println!("{} users, {} items, {} interactions -> {}", graph.n_users(), graph.n_items(), graph.len(), out.display());
    Ok(())
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("HYPERWAVE_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("HYPERWAVE_THREADS must be a positive integer, got `{v}`")))?;
        if n == 0 {
            return Err(Error::Config("HYPERWAVE_THREADS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    init_threads()?;
    match cli.command {
        Command::Train { config, seeds, out, overrides } => cmd_train(config, seeds, out, overrides).map(|_| true),
        Command::Eval { checkpoint, data, k, out } => cmd_eval(checkpoint, data, k, out).map(|_| true),
        Command::Ablate { config, disable, each, seeds, out, overrides } => {
            cmd_ablate(config, disable, each, seeds, out, overrides).map(|_| true)
        }
        Command::Sweep { config, param, seeds, out, overrides } => cmd_sweep(config, param, seeds, out, overrides).map(|_| true),
        Command::Gradcheck { out, inject_fault } => cmd_gradcheck(out, inject_fault),
        Command::Synth { users, items, genres, groups, cross_rate, per_user, skew, seed, out } => {
            cmd_synth(users, items, genres, groups, cross_rate, per_user, skew, seed, out).map(|_| true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
