//! Command-line front end. `run` returns the process exit code.
//!
//! Configuration precedence: built-in defaults, then manifest keys, then
//! `--set key=value`, then explicit flags.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use rand::Rng;

use crate::autodiff::save_tensors;
use crate::error::{Error, ErrorClass, Result};
use crate::graph::{load_manifest_dataset, Graph, Manifest};
use crate::hops::{build_group_graph, verify_lemma2};
use crate::linalg::Matrix;
use crate::spectral::verify_lemma1;
use crate::synthetic::{planted_fairness_graph, random_connected_adjacency, rng, PlantedConfig};
use crate::train::{
    ablate, bench_scaling, sweep, sweep_table, BenchConfig, RunResult, SweepParam, TrainConfig,
};

#[derive(Debug, Parser)]
#[command(name = "fairgt", version, about = "Fairness-aware graph transformer toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train with seeded re-split cross-validation and write a run directory
    Train(TrainOpts),
    /// Train every ablation variant under identical splits
    Ablate(TrainOpts),
    /// Sweep t or the number of layers and write a table
    Sweep(SweepOpts),
    /// Check both lemmas on a random graph
    VerifyLemmas(LemmaOpts),
    /// Time encoding and one training epoch on growing synthetic graphs
    Bench(BenchOpts),
    /// Print a summary of a dataset
    Inspect(DataOpts),
}

#[derive(Debug, Args)]
pub struct DataOpts {
    /// Dataset manifest (key=value lines naming node and edge files)
    #[arg(long, value_name = "PATH", conflicts_with = "synthetic")]
    pub manifest: Option<PathBuf>,
    /// Use the planted sensitive-homophily graph with N nodes instead of a manifest
    #[arg(long, value_name = "N")]
    pub synthetic: Option<usize>,
    /// Seed for splits, initialization, dropout and synthetic data
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainOpts {
    #[command(flatten)]
    pub data: DataOpts,
    /// Output directory
    #[arg(long, value_name = "DIR", default_value = "fairgt-out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    /// Number of hops
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Number of structural eigenvectors
    #[arg(long, default_value_t = 5)]
    pub t: usize,
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    #[arg(long, default_value_t = 1)]
    pub heads: usize,
    #[arg(long, default_value_t = 128)]
    pub hidden: usize,
    /// full, no_st, lap_st, no_nf or adj_nf
    #[arg(long, default_value = "full")]
    pub ablation: String,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Run folds one after another (bit-reproducible)
    #[arg(long)]
    pub serial: bool,
    /// Hop normalization: raw or group-mean
    #[arg(long, default_value = "group-mean")]
    pub norm: String,
    /// Any configuration key, e.g. --set lr=0.01 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SweepOpts {
    #[command(flatten)]
    pub train: TrainOpts,
    /// t or L
    #[arg(long, default_value = "t")]
    pub param: String,
    #[arg(long, default_value_t = 1)]
    pub min: usize,
    #[arg(long, default_value_t = 20)]
    pub max: usize,
}

#[derive(Debug, Args)]
pub struct LemmaOpts {
    /// Number of nodes of the random graph
    #[arg(long, default_value_t = 30)]
    pub n: usize,
    /// Largest hop count checked
    #[arg(long, default_value_t = 6)]
    pub kmax: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the report to DIR/lemmas.txt
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchOpts {
    /// Comma-separated node counts
    #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000,8000")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 5)]
    pub t: usize,
    /// Feature columns
    #[arg(long, default_value_t = 8)]
    pub d: usize,
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    /// Repetitions per timing (minimum is kept)
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write DIR/bench.tsv
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Convergence => 4,
        ErrorClass::Runtime => 1,
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    let sub = matches.subcommand().map(|(_, m)| m.clone()).unwrap_or_default();
    match dispatch(cli.command, &sub) {
        Ok(()) => 0,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error: class={} message={message}", e.class().as_str());
            exit_code(e.class())
        }
    }
}

fn dispatch(command: Command, m: &ArgMatches) -> Result<()> {
    match command {
        Command::Train(o) => cmd_train(&o, m),
        Command::Ablate(o) => cmd_ablate(&o, m),
        Command::Sweep(o) => cmd_sweep(&o, m),
        Command::VerifyLemmas(o) => cmd_verify_lemmas(&o),
        Command::Bench(o) => cmd_bench(&o),
        Command::Inspect(o) => cmd_inspect(&o),
    }
}

struct Loaded {
    graph: Graph,
    source: String,
    manifest: Option<Manifest>,
}

fn load(data: &DataOpts, seed: u64) -> Result<Loaded> {
    match (&data.manifest, data.synthetic) {
        (Some(path), _) => {
            let manifest = Manifest::from_file(path)?;
            let graph = load_manifest_dataset(&manifest)?;
            Ok(Loaded { graph, source: format!("manifest:{}", path.display()), manifest: Some(manifest) })
        }
        (None, Some(n)) => {
            let graph = planted_fairness_graph(&PlantedConfig { n, seed, ..Default::default() })?;
            Ok(Loaded { graph, source: format!("synthetic:planted:n={n}:seed={seed}"), manifest: None })
        }
        (None, None) => Err(Error::Config("either --manifest or --synthetic is required".into())),
    }
}

fn explicit(m: &ArgMatches, id: &str) -> bool {
    m.value_source(id) == Some(ValueSource::CommandLine)
}

fn build_config(o: &TrainOpts, m: &ArgMatches, manifest: Option<&Manifest>) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(man) = manifest {
        for (k, v) in &man.overrides {
            cfg.apply(k, v)?;
        }
    }
    for kv in &o.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.apply(k.trim(), v.trim())?;
    }
    let flags: [(&str, &str, String); 10] = [
        ("seed", "seed", o.data.seed.to_string()),
        ("epochs", "epochs", o.epochs.to_string()),
        ("k", "k", o.k.to_string()),
        ("t", "t", o.t.to_string()),
        ("layers", "layers", o.layers.to_string()),
        ("heads", "heads", o.heads.to_string()),
        ("hidden", "hidden", o.hidden.to_string()),
        ("ablation", "ablation", o.ablation.clone()),
        ("folds", "folds", o.folds.to_string()),
        ("norm", "norm", o.norm.clone()),
    ];
    for (id, key, value) in flags {
        if explicit(m, id) {
            cfg.apply(key, &value)?;
        }
    }
    if o.serial {
        cfg.serial = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Loads data and resolves the configuration. The synthetic graph is drawn
/// with the resolved seed.
fn prepare(o: &TrainOpts, m: &ArgMatches) -> Result<(Loaded, TrainConfig)> {
    let manifest = match &o.data.manifest {
        Some(p) => Some(Manifest::from_file(p)?),
        None => None,
    };
    let cfg = build_config(o, m, manifest.as_ref())?;
    let loaded = load(&o.data, cfg.seed)?;
    Ok((loaded, cfg))
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn config_echo(source: &str, cfg: &TrainConfig) -> String {
    format!("source={source}\n{}", cfg.to_kv())
}

fn write_run(dir: &Path, source: &str, run: &RunResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    write(dir, "config.txt", config_echo(source, &run.config))?;
    write(dir, "metrics.log", run.metrics_log())?;
    write(dir, "report.txt", run.to_report_kv())?;
    write(dir, "report.json", run.to_json())?;
    write(dir, "timing.txt", format!("seconds={:.3}\n", run.seconds))?;
    if let Some(f) = run.folds.first() {
        save_tensors(&dir.join("checkpoint.bin"), &f.model.to_checkpoint())?;
    }
    Ok(())
}

fn summary_line(r: &RunResult) -> String {
    format!(
        "{}: accuracy {:.2} ± {:.2}  delta_sp {:.2} ± {:.2}  f1 {:.2}",
        r.config.ablation.as_str(),
        100.0 * r.accuracy.mean,
        100.0 * r.accuracy.std,
        100.0 * r.delta_sp.mean,
        100.0 * r.delta_sp.std,
        100.0 * r.f1.mean
    )
}

fn cmd_train(o: &TrainOpts, m: &ArgMatches) -> Result<()> {
    let (data, cfg) = prepare(o, m)?;
    let run = crate::train::train(&data.graph, &cfg)?;
    write_run(&o.out, &data.source, &run)?;
    for w in &run.warnings {
        eprintln!("warning: {w}");
    }
    println!("{}", summary_line(&run));
    Ok(())
}

fn cmd_ablate(o: &TrainOpts, m: &ArgMatches) -> Result<()> {
    let (data, cfg) = prepare(o, m)?;
    let runs = ablate(&data.graph, &cfg)?;
    let reference: Vec<&str> = runs[0].folds.iter().map(|f| f.split_fingerprint.as_str()).collect();
    for r in &runs[1..] {
        let fps: Vec<&str> = r.folds.iter().map(|f| f.split_fingerprint.as_str()).collect();
        if fps != reference {
            return Err(Error::Precondition(format!("variant {} trained on different splits", r.config.ablation.as_str())));
        }
    }
    fs::create_dir_all(&o.out)?;
    write(&o.out, "config.txt", config_echo(&data.source, &cfg))?;
    let mut table = String::from("variant\taccuracy_mean\taccuracy_std\tdelta_sp_mean\tdelta_sp_std\tf1_mean\tauc_mean\n");
    for r in &runs {
        write_run(&o.out.join(r.config.ablation.as_str()), &data.source, r)?;
        let auc = r.auc.map_or("undefined".into(), |a| format!("{:.2}", 100.0 * a.mean));
        let _ = writeln!(
            table,
            "{}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{auc}",
            r.config.ablation.as_str(),
            100.0 * r.accuracy.mean,
            100.0 * r.accuracy.std,
            100.0 * r.delta_sp.mean,
            100.0 * r.delta_sp.std,
            100.0 * r.f1.mean
        );
        println!("{}", summary_line(r));
    }
    write(&o.out, "ablation.tsv", table)?;
    Ok(())
}

fn cmd_sweep(o: &SweepOpts, m: &ArgMatches) -> Result<()> {
    let param = SweepParam::parse(&o.param)?;
    if o.min > o.max {
        return Err(Error::Config(format!("--min {} exceeds --max {}", o.min, o.max)));
    }
    let (data, cfg) = prepare(&o.train, m)?;
    let rows = sweep(&data.graph, &cfg, param, o.min..=o.max)?;
    let table = sweep_table(param, &rows);
    fs::create_dir_all(&o.train.out)?;
    write(&o.train.out, "config.txt", config_echo(&data.source, &cfg))?;
    write(&o.train.out, &format!("sweep_{}.tsv", param.as_str()), &table)?;
    print!("{table}");
    Ok(())
}

/// Random connected graph with a binary sensitive column (integer valued,
/// as the exact check requires) and a small-integer filler column.
fn lemma_graph(n: usize, r: &mut impl Rng) -> Result<Graph> {
    let p = (4.0 / n as f64).min(1.0);
    let adjacency = random_connected_adjacency(n, p, r)?;
    let mut h = Matrix::zeros(n, 2);
    for i in 0..n {
        h.set(i, 0, r.random_bool(0.5) as u8 as f64);
        h.set(i, 1, r.random_range(-3i32..=3) as f64);
    }
    if (0..n).all(|i| h.get(i, 0) == h.get(0, 0)) {
        h.set(0, 0, 1.0 - h.get(0, 0));
    }
    Graph::new(adjacency, h, 0, vec![None; n])
}

fn cmd_verify_lemmas(o: &LemmaOpts) -> Result<()> {
    if o.n < 3 {
        return Err(Error::Config("--n must be at least 3".into()));
    }
    let mut r = rng(o.seed);
    // Resample until the adjacency has a strict spectral gap.
    let mut attempt = 0;
    let (g, l1) = loop {
        let g = lemma_graph(o.n, &mut r)?;
        match verify_lemma1(&g, o.kmax) {
            Ok(rep) => break (g, rep),
            Err(Error::Precondition(_)) if attempt < 100 => attempt += 1,
            Err(e) => return Err(e),
        }
    };
    let l2 = verify_lemma2(&build_group_graph(&g), g.features(), g.sensitive_index(), o.kmax)?;

    let identity_pass = l1.identity_deviation <= 1e-8;
    let mut s = String::new();
    let _ = writeln!(s, "n={} edges={} seed={} kmax={}", g.n(), g.undirected_edges(), o.seed, o.kmax);
    let _ = writeln!(s, "lemma1.lambda1={:.12}", l1.eigenvalues[0]);
    let _ = writeln!(s, "lemma1.ratio={:.12}", l1.ratio);
    let _ = writeln!(s, "lemma1.limit={:.12}", l1.limit);
    for row in &l1.rows {
        let _ = writeln!(s, "lemma1.k={} direct={:.12} formula={:.12} gap={:.3e}", row.k, row.direct, row.formula, row.gap);
    }
    let _ = writeln!(s, "lemma1.identity_deviation={:.3e}", l1.identity_deviation);
    let _ = writeln!(s, "lemma1.identity_pass={identity_pass}");
    let _ = writeln!(s, "lemma1.c_fit={:.6}", l1.c_fit);
    let _ = writeln!(s, "lemma1.decay_fit_holds={}", l1.decay_fit_holds);
    match l1.envelope {
        Some(c) => {
            let _ = writeln!(s, "lemma1.envelope={c:.6}");
        }
        None => s.push_str("lemma1.envelope=undefined\n"),
    }
    let _ = writeln!(s, "lemma1.envelope_holds={}", l1.envelope_holds);
    let _ = writeln!(s, "lemma2.q={}", l2.q);
    for row in &l2.rows {
        let fe = row.float_exact.map_or("n/a".to_string(), |b| b.to_string());
        let _ = writeln!(s, "lemma2.k={} arithmetic={:?} exact={} float_exact={fe}", row.k, row.arithmetic, row.exact);
    }
    let _ = writeln!(s, "lemma2.pass={}", l2.pass());
    print!("{s}");
    if let Some(dir) = &o.out {
        fs::create_dir_all(dir)?;
        write(dir, "lemmas.txt", &s)?;
    }
    if !identity_pass || !l2.pass() {
        return Err(Error::Precondition("lemma verification failed".into()));
    }
    Ok(())
}

fn cmd_bench(o: &BenchOpts) -> Result<()> {
    let report = bench_scaling(&BenchConfig {
        sizes: o.sizes.clone(),
        d: o.d,
        k: o.k,
        t: o.t,
        d_hidden: o.hidden,
        repeats: o.repeats,
        seed: o.seed,
        ..Default::default()
    })?;
    let table = report.to_table();
    print!("{table}");
    if let Some(dir) = &o.out {
        fs::create_dir_all(dir)?;
        write(dir, "bench.tsv", &table)?;
    }
    Ok(())
}

pub fn inspect_summary(g: &Graph) -> String {
    let mut s = String::new();
    let sens = g.sensitive();
    let labeled = g.labeled_nodes();
    let positives = labeled.iter().filter(|&&i| g.labels()[i] == 1).count();
    let s1 = sens.iter().filter(|&&v| v == 1).count();
    let _ = writeln!(s, "nodes={}", g.n());
    let _ = writeln!(s, "features={}", g.d());
    let _ = writeln!(s, "edges={}", g.undirected_edges());
    let _ = writeln!(s, "self_loops={}", g.adjacency().self_loops());
    let _ = writeln!(s, "components={}", g.connected_components());
    let _ = writeln!(s, "sensitive_column={}", g.feature_names()[g.sensitive_index()]);
    let _ = writeln!(s, "sensitive_groups={} {}", g.n() - s1, s1);
    let _ = writeln!(s, "labeled={} positive={} negative={}", labeled.len(), positives, labeled.len() - positives);
    let _ = writeln!(s, "feature_names={}", g.feature_names().join(","));
    s
}

fn cmd_inspect(o: &DataOpts) -> Result<()> {
    let data = load(o, o.seed)?;
    println!("source={}", data.source);
    print!("{}", inspect_summary(&data.graph));
    if let Some(m) = &data.manifest {
        for (k, v) in &m.overrides {
            println!("override.{k}={v}");
        }
    }
    Ok(())
}
