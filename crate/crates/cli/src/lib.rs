//! `epsc`: synthesize cohorts, extract complexity features, evaluate
//! classifiers and sweep feature subsets.

pub mod config;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use itertools::Itertools;
use rayon::prelude::*;

use epsilon_complexity::classify::{train_forest, Classifier};
use epsilon_complexity::eval::{bootstrap_ci, derive_seed, kfold_cv, oob_eval, render_report, CIReport};
use epsilon_complexity::features::{
    extract_detailed, feature_table_string, order_names, read_feature_table, FeatureConfig,
    OrderFit, ALL_FEATURES,
};
use epsilon_complexity::ingest::{load_record, save_record, DatasetManifest, Label, ManifestEntry};
use epsilon_complexity::signal::{gen_fbm_like, gen_polynomial, gen_weierstrass, Record};
use epsilon_complexity::{Error, FeatureVector};

use crate::config::{ClassifierKind, ConfigError, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "epsc", version, about = "Epsilon-complexity features and two-class evaluation")]
pub struct Cli {
    /// Flat key = value config file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = automatic).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory for per-record spectrum files (extract).
    #[arg(long, global = true)]
    pub spectra: Option<PathBuf>,
    /// Write the effective config here before running.
    #[arg(long, global = true)]
    pub dump_config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic record files and a manifest.
    Synth(SynthArgs),
    /// Compute feature vectors for every manifest entry.
    Extract(ExtractArgs),
    /// OOB, k-fold CV and bootstrap intervals from a feature table.
    Evaluate(EvaluateArgs),
    /// CV accuracy of every feature subset up to a size cap.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Fbm,
    Weierstrass,
    Poly,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "fbm")]
    pub kind: SynthKind,
    /// Two Hurst exponents: class A, class B.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.3, 0.7])]
    pub hurst: Vec<f64>,
    #[arg(long, default_value_t = 40)]
    pub per_class: usize,
    #[arg(long, default_value_t = 7680)]
    pub n: usize,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub a: f64,
    #[arg(long, default_value_t = 3)]
    pub b: u32,
    #[arg(long, default_value_t = 20)]
    pub terms: usize,
    /// Polynomial coefficients, constant term first.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub coeffs: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Feature table output.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub orders: Option<Vec<usize>>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub norm: Option<String>,
    #[arg(long)]
    pub max_degree: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub table: PathBuf,
    /// Delimited report output (`method,metric,point,ci_low,ci_high`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub classifier: Option<String>,
    /// Plain-text summary of a forest trained on the whole table.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["manifest", "table"])))]
pub struct SweepArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub cap: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_at(dir))?;
    }
    fs::write(path, contents).map_err(io_at(path))
}

/// Defaults, then the config file, then global flags.
pub fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(p) = &cli.spectra {
        cfg.spectra = Some(p.clone());
    }
    match &cli.command {
        Command::Synth(a) => {
            if let Some(c) = a.channels {
                cfg.channels = c;
            }
        }
        Command::Extract(a) => {
            if let Some(o) = &a.orders {
                cfg.orders = o.clone();
            }
            if let Some(c) = a.channels {
                cfg.channels = c;
            }
            if let Some(n) = &a.norm {
                cfg.set("norm", n)?;
            }
            if let Some(d) = a.max_degree {
                cfg.max_degree = d;
                cfg.window = cfg.window.max(d + 1);
            }
        }
        Command::Evaluate(a) => {
            if let Some(r) = a.replications {
                cfg.replications = r;
            }
            if let Some(k) = a.folds {
                cfg.folds = k;
            }
            if let Some(t) = a.trees {
                cfg.n_trees = t;
            }
            if let Some(c) = &a.classifier {
                cfg.set("classifier", c)?;
            }
        }
        Command::Sweep(a) => {
            if let Some(c) = a.cap {
                cfg.sweep_cap = c;
            }
            if let Some(k) = a.folds {
                cfg.folds = k;
            }
            if let Some(t) = a.trees {
                cfg.n_trees = t;
            }
            if let Some(c) = a.channels {
                cfg.channels = c;
            }
        }
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> ExitCode {
    match try_run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("epsc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn try_run(cli: &Cli) -> Result<(), CliError> {
    let cfg = effective_config(cli)?;
    if let Some(path) = &cli.dump_config {
        write_file(path, &cfg.dump())?;
    }
    if cfg.threads > 0 {
        // Fails only if a pool already exists; results do not depend on it.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global();
    }
    match &cli.command {
        Command::Synth(a) => cmd_synth(a, &cfg),
        Command::Extract(a) => cmd_extract(a, &cfg),
        Command::Evaluate(a) => cmd_evaluate(a, &cfg),
        Command::Sweep(a) => cmd_sweep(a, &cfg),
    }
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

type Generator = Box<dyn Fn() -> epsilon_complexity::Result<Record> + Sync>;

/// Writes records and `manifest.csv` into `args.out`.
pub fn cmd_synth(args: &SynthArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let labels = cfg.labels().map_err(usage)?;
    let layout = cfg.raw_layout();
    let mut jobs: Vec<(String, Label, Generator)> = Vec::new();
    match args.kind {
        SynthKind::Fbm => {
            if args.hurst.len() != 2 {
                return Err(CliError::Usage("--hurst takes exactly two values".into()));
            }
            if let Some(h) = args.hurst.iter().find(|h| !(**h > 0.0 && **h < 1.0)) {
                return Err(CliError::Usage(format!("hurst {h} not in (0, 1)")));
            }
            if args.n < 2 || cfg.channels == 0 {
                return Err(CliError::Usage("need --n >= 2 and --channels >= 1".into()));
            }
            for (class, (&h, label)) in args.hurst.iter().zip([Label::ClassA, Label::ClassB]).enumerate() {
                for i in 0..args.per_class {
                    let subject = class * args.per_class + i;
                    let seed = derive_seed(cfg.seed, subject as u64);
                    let (n, d) = (args.n, cfg.channels);
                    let id = format!("{}_{i:03}", labels.name(label));
                    jobs.push((id, label, Box::new(move || gen_fbm_like(n, h, seed, d))));
                }
            }
        }
        SynthKind::Weierstrass => {
            gen_weierstrass(args.n, args.a, args.b, args.terms).map_err(usage)?;
            let (n, a, b, t) = (args.n, args.a, args.b, args.terms);
            jobs.push(("weierstrass".into(), Label::ClassA, Box::new(move || gen_weierstrass(n, a, b, t))));
        }
        SynthKind::Poly => {
            if args.coeffs.is_empty() {
                return Err(CliError::Usage("--coeffs is required for --kind poly".into()));
            }
            let coeffs = args.coeffs.clone();
            let n = args.n;
            gen_polynomial(n, coeffs.len() - 1, &coeffs).map_err(usage)?;
            jobs.push((
                "poly".into(),
                Label::ClassA,
                Box::new(move || gen_polynomial(n, coeffs.len() - 1, &coeffs)),
            ));
        }
    }
    fs::create_dir_all(&args.out).map_err(io_at(&args.out))?;
    jobs.par_iter()
        .map(|(id, _, make)| {
            let rec = make()?;
            save_record(&args.out.join(format!("{id}.csv")), &rec, &layout)
        })
        .collect::<epsilon_complexity::Result<Vec<()>>>()?;
    let entries = jobs
        .iter()
        .map(|(id, label, _)| ManifestEntry {
            path: PathBuf::from(format!("{id}.csv")),
            subject_id: id.clone(),
            label: *label,
        })
        .collect();
    let manifest = DatasetManifest::new(entries, cfg.channels.max(1), cfg.sample_rate_hz)?;
    manifest.save(&args.out.join("manifest.csv"), &labels)?;
    eprintln!("wrote {} records to {}", jobs.len(), args.out.display());
    Ok(())
}

fn load_manifest(path: &Path, cfg: &RunConfig) -> Result<DatasetManifest, CliError> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("manifest {} not found", path.display())));
    }
    let labels = cfg.labels().map_err(usage)?;
    Ok(DatasetManifest::load(path, &labels, cfg.channels, cfg.sample_rate_hz)?)
}

/// Loads and extracts every subject; failures are returned alongside the
/// successes, in manifest order.
fn extract_manifest(
    manifest: &DatasetManifest,
    cfg: &RunConfig,
    features: &FeatureConfig,
) -> Vec<Result<(FeatureVector, Vec<OrderFit>), Error>> {
    let layout = cfg.raw_layout();
    manifest
        .entries()
        .par_iter()
        .map(|e| {
            let rec = load_record(&e.path, &layout, manifest.channel_count, manifest.sample_rate_hz)?
                .with_subject_id(e.subject_id.clone());
            extract_detailed(&rec, e.label, features)
        }
        .map_err(|err: Error| Error::Subject {
            id: e.subject_id.clone(),
            source: Box::new(err),
        }))
        .collect()
}

fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else {
        x.to_string()
    }
}

/// Per-order spectrum rows: `S,log_S,eps,log_eps,fit_A,fit_B,r2`.
pub fn spectrum_csv(fit: &OrderFit) -> String {
    let c = &fit.coefficients;
    let mut out = String::from("S,log_S,eps,log_eps,fit_A,fit_B,r2\n");
    for p in &fit.spectrum.points {
        out.push_str(&[
            fmt_num(p.s),
            fmt_num(p.s.ln()),
            fmt_num(p.eps),
            fmt_num(p.eps.ln()),
            fmt_num(c.a),
            fmt_num(c.b),
            fmt_num(c.r_squared),
        ]
        .join(","));
        out.push('\n');
    }
    out
}

pub fn cmd_extract(args: &ExtractArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let manifest = load_manifest(&args.manifest, cfg)?;
    let features = cfg.feature_config().map_err(usage)?;
    let labels = cfg.labels().map_err(usage)?;
    let results = extract_manifest(&manifest, cfg, &features);
    let mut vectors = Vec::new();
    let mut failures = 0usize;
    for r in results {
        match r {
            Ok((v, fits)) => {
                if let Some(dir) = &cfg.spectra {
                    for fit in &fits {
                        let path = dir.join(format!("{}_D{}.csv", v.subject_id, fit.order));
                        write_file(&path, &spectrum_csv(fit))?;
                    }
                }
                vectors.push(v);
            }
            Err(e) => {
                eprintln!("epsc: {e}");
                failures += 1;
            }
        }
    }
    let table = feature_table_string(&vectors, &features.feature_names(), &labels)?;
    write_file(&args.out, &table)?;
    eprintln!(
        "extracted {} of {} subjects into {}",
        vectors.len(),
        manifest.entries().len(),
        args.out.display()
    );
    if failures > 0 && vectors.is_empty() {
        return Err(CliError::Core(Error::Invalid(format!("all {failures} subjects failed"))));
    }
    Ok(())
}

fn load_table(path: &Path, cfg: &RunConfig) -> Result<(Vec<String>, Vec<FeatureVector>), CliError> {
    let labels = cfg.labels().map_err(usage)?;
    let file = fs::File::open(path)
        .map_err(|e| CliError::Usage(format!("cannot open table {}: {e}", path.display())))?;
    Ok(read_feature_table(io::BufReader::new(file), &labels)?)
}

fn classifier(cfg: &RunConfig) -> Box<dyn Classifier> {
    match cfg.classifier {
        ClassifierKind::Forest => Box::new(cfg.forest()),
        ClassifierKind::Knn => Box::new(cfg.knn()),
    }
}

/// Builds the named CI reports `evaluate` prints.
pub fn evaluation_reports(
    vectors: &[FeatureVector],
    cfg: &RunConfig,
) -> Result<Vec<(String, CIReport)>, CliError> {
    let clf = classifier(cfg);
    let cv = cfg.cv();
    let boot = cfg.bootstrap();
    let mut reports = Vec::new();
    if cfg.classifier == ClassifierKind::Forest {
        let forest = cfg.forest();
        let r = bootstrap_ci(vectors, |v, s| oob_eval(v, &forest, s), &boot, cfg.seed)?;
        reports.push((format!("{} OOB", clf.name()), r));
    }
    let r = bootstrap_ci(
        vectors,
        |v, s| kfold_cv(v, clf.as_ref(), &cv, s).map(|o| o.triple),
        &boot,
        cfg.seed,
    )?;
    reports.push((format!("{} {}-fold CV", clf.name(), cv.k), r));
    Ok(reports)
}

pub fn cmd_evaluate(args: &EvaluateArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let (_, vectors) = load_table(&args.table, cfg)?;
    let reports = evaluation_reports(&vectors, cfg)?;
    let rendered = render_report(&reports)?;
    io::stdout()
        .write_all(rendered.text.as_bytes())
        .map_err(io_at(Path::new("<stdout>")))?;
    if let Some(out) = &args.out {
        write_file(out, &rendered.csv)?;
    }
    if let Some(path) = &args.summary {
        let model = train_forest(&vectors, &cfg.forest())?;
        write_file(path, &model.summary().to_string())?;
    }
    Ok(())
}

/// Every subset of `names` of size `1..=cap`, smallest first, each in the
/// order of `names`.
pub fn feature_subsets(names: &[String], cap: usize) -> Vec<Vec<String>> {
    (1..=cap.min(names.len()))
        .flat_map(|k| names.iter().cloned().combinations(k))
        .collect()
}

/// CV accuracy per subset, best first; ties keep enumeration order.
pub fn sweep_subsets(
    vectors: &[FeatureVector],
    names: &[String],
    cfg: &RunConfig,
) -> Result<Vec<(Vec<String>, f64)>, CliError> {
    let clf = classifier(cfg);
    let cv = cfg.cv();
    let mut scored = feature_subsets(names, cfg.sweep_cap)
        .into_iter()
        .map(|subset| {
            let projected = vectors
                .iter()
                .map(|v| v.select(&subset))
                .collect::<epsilon_complexity::Result<Vec<_>>>()?;
            let acc = kfold_cv(&projected, clf.as_ref(), &cv, cfg.seed)?.triple.accuracy;
            Ok((subset, acc))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(scored)
}

pub fn cmd_sweep(args: &SweepArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let (names, vectors) = if let Some(table) = &args.table {
        load_table(table, cfg)?
    } else {
        let manifest = load_manifest(args.manifest.as_deref().unwrap_or(Path::new("")), cfg)?;
        let mut all = cfg.clone();
        all.orders = (0..=4).collect();
        let features = all.feature_config().map_err(usage)?;
        let mut vectors = Vec::new();
        for r in extract_manifest(&manifest, &all, &features) {
            match r {
                Ok((v, _)) => vectors.push(v),
                Err(e) => eprintln!("epsc: {e}"),
            }
        }
        (features.feature_names(), vectors)
    };
    let canonical: Vec<String> = ALL_FEATURES
        .iter()
        .map(|s| s.to_string())
        .filter(|s| names.contains(s))
        .chain(names.iter().filter(|n| !ALL_FEATURES.contains(&n.as_str())).cloned())
        .collect();
    let scored = sweep_subsets(&vectors, &canonical, cfg)?;
    let mut out = String::from("subset,size,cv_accuracy\n");
    for (subset, acc) in &scored {
        out.push_str(&format!("{},{},{:.4}\n", subset.join("+"), subset.len(), acc));
    }
    match &args.out {
        Some(p) => write_file(p, &out)?,
        None => io::stdout()
            .write_all(out.as_bytes())
            .map_err(io_at(Path::new("<stdout>")))?,
    }
    Ok(())
}

/// Feature names for the given difference orders.
pub fn names_for_orders(orders: &[usize]) -> Vec<String> {
    orders
        .iter()
        .flat_map(|&k| {
            let (a, b) = order_names(k);
            [a, b]
        })
        .collect()
}
