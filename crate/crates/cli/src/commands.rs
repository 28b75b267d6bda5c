use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use dlab::datasets::{gen_linear_gaussian_dataset, write_circular_dsprites, CircularSpec};
use dlab::linalg::SymMatrix;
use dlab::lingauss::{optimize_generator, LinearGenerator, Objective, OptimizerConfig, TheoremReport};
use dlab::metrics::{
    dci_disentanglement, dhsic_with, factorvae_metric, DhsicKernel, Encoder, FactorDataset, FactorVaeConfig,
    MetricReport, DCI_DEFAULT_LAMBDA,
};
use dlab::report::{fmt_num, heatmap_svg, CsvTable};
use dlab::rng::derive_seed;
use dlab::selection::{
    model_centrality, noise_ladder_pool, rank_correlation_analysis, subsampled_centrality, udr_select, ModelEntry,
    ModelPool, UdrVariant,
};
use dlab::verify::{checks_table, run_verification, VerifyConfig};

use crate::{AnalyzeArgs, Cli, Command, GenDataArgs, MethodArg, MetricsArgs, ObjectiveArg, OptimizeArgs, SelectArgs};

pub enum Status {
    Success,
    ChecksFailed,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MetricsConfig {
    factorvae: FactorVaeConfig,
    dci_lambda: f64,
    dhsic_kernel: DhsicKernel,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            factorvae: FactorVaeConfig::default(),
            dci_lambda: DCI_DEFAULT_LAMBDA,
            dhsic_kernel: DhsicKernel::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SelectConfig {
    factorvae: FactorVaeConfig,
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    ensure!(path.is_file(), "{what} {} does not exist", path.display());
    Ok(())
}

fn write(out: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    let path = out.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

fn write_table(out: &Path, name: &str, table: &CsvTable) -> Result<PathBuf> {
    write(out, name, table.to_csv_string())
}

pub fn run(cli: &Cli) -> Result<Status> {
    let g = &cli.global;
    ensure!(g.out.is_dir(), "output directory {} does not exist", g.out.display());
    if let Some(c) = &g.config {
        require_file(c, "config file")?;
    }
    if let Some(n) = g.threads {
        ensure!(n >= 1, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let config = g.config.as_deref();
    match &cli.command {
        Command::VerifyTheorems => verify_theorems(config, g.seed, &g.out),
        Command::GenData(args) => {
            ensure!(config.is_none(), "gen-data takes no --config; use its flags");
            gen_data(args, g.seed, &g.out).map(|()| Status::Success)
        }
        Command::Optimize(args) => optimize(args, config, g.seed, &g.out).map(|()| Status::Success),
        Command::Metrics(args) => metrics(args, config, g.seed, &g.out).map(|()| Status::Success),
        Command::Select(args) => select(args, config, g.seed, &g.out).map(|()| Status::Success),
        Command::Analyze(args) => {
            ensure!(config.is_none(), "analyze takes no --config");
            analyze(args, &g.out).map(|()| Status::Success)
        }
    }
}

fn verify_theorems(config: Option<&Path>, seed: u64, out: &Path) -> Result<Status> {
    let cfg: VerifyConfig = load_config(config)?;
    let checks = run_verification(&cfg, seed)?;
    write_table(out, "verify_report.csv", &checks_table(&checks))?;
    let failed = checks.iter().filter(|c| !c.passed()).count();
    println!("{} checks, {} failed", checks.len(), failed);
    for c in checks.iter().filter(|c| !c.passed()) {
        println!(
            "FAIL {} case {} seed {}: {} = {} (threshold {})",
            c.suite.name(),
            c.case,
            c.seed,
            c.name,
            fmt_num(c.value),
            fmt_num(c.threshold)
        );
    }
    Ok(if failed == 0 { Status::Success } else { Status::ChecksFailed })
}

fn diag_sigma(diag: &[f64]) -> Result<SymMatrix> {
    ensure!(!diag.is_empty(), "--sigma-diag needs at least one value");
    ensure!(diag.iter().all(|&v| v > 0.0 && v.is_finite()), "--sigma-diag values must be positive");
    Ok(SymMatrix::from_diagonal(diag))
}

fn sigma_from_args(diag: Option<&[f64]>, csv: Option<&Path>) -> Result<SymMatrix> {
    match (diag, csv) {
        (Some(d), None) => diag_sigma(d),
        (None, Some(p)) => {
            require_file(p, "covariance file")?;
            let text = std::fs::read_to_string(p)?;
            let (_, rows) = dlab::report::read_numeric_csv(&text)?;
            let n = rows.len();
            ensure!(rows.iter().all(|r| r.len() == n), "covariance CSV must be square");
            let flat: Vec<f64> = rows.into_iter().flatten().collect();
            Ok(SymMatrix::new(DMatrix::from_row_slice(n, n, &flat))?)
        }
        (None, None) => bail!("a covariance is required (--sigma-diag or --sigma)"),
        (Some(_), Some(_)) => bail!("give only one of --sigma-diag and --sigma"),
    }
}

fn read_model(path: &Path) -> Result<ModelEntry> {
    require_file(path, "model file")?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    let text = std::fs::read_to_string(path)?;
    ModelEntry::from_json(&text, stem).with_context(|| format!("parsing model {}", path.display()))
}

fn gen_data(args: &GenDataArgs, seed: u64, out: &Path) -> Result<()> {
    if args.circular {
        let n = write_circular_dsprites(&CircularSpec::default(), out)?;
        println!("wrote {n} images and factors.csv to {}", out.display());
    } else if args.linear {
        ensure!(args.samples >= 1, "--samples must be at least 1");
        let gen = match (&args.model, &args.sigma_diag) {
            (Some(m), None) => read_model(m)?.generator,
            (None, Some(d)) => {
                let r = args.r.context("--sigma-diag needs --r")?;
                let gen = LinearGenerator::pca_exact(diag_sigma(d)?, r)?;
                write(out, "generator.json", gen.to_json()?)?;
                gen
            }
            _ => bail!("--linear needs exactly one of --model and --sigma-diag"),
        };
        let ds = gen_linear_gaussian_dataset(&gen, args.samples, seed)?;
        ds.write_dir(out)?;
        println!("wrote {} samples to {}", ds.len(), out.display());
    } else {
        let diag = args.sigma_diag.as_deref().context("--pool needs --sigma-diag")?;
        let r = args.r.context("--pool needs --r")?;
        let levels = args
            .levels
            .clone()
            .unwrap_or_else(|| (0..20).map(|i| f64::from(i) * 0.05).collect());
        let pool = noise_ladder_pool(&diag_sigma(diag)?, r, &levels, seed)?;
        let manifest = pool.write_manifest(out)?;
        println!("wrote {} models, manifest {}", pool.len(), manifest.display());
    }
    Ok(())
}

fn optimize(args: &OptimizeArgs, config: Option<&Path>, seed: u64, out: &Path) -> Result<()> {
    let sigma = sigma_from_args(args.sigma_diag.as_deref(), args.sigma.as_deref())?;
    ensure!(args.restarts >= 1, "--restarts must be at least 1");
    let mut cfg: OptimizerConfig = load_config(config)?;
    if let Some(o) = args.objective {
        cfg.objective = match o {
            ObjectiveArg::Infogan => Objective::Infogan,
            ObjectiveArg::Cr => Objective::CrFrobenius,
            ObjectiveArg::Combined => Objective::Combined,
        };
    }
    let runs = (0..args.restarts as u64)
        .into_par_iter()
        .map(|i| {
            let run_cfg = OptimizerConfig {
                seed: seed.wrapping_add(i),
                ..cfg
            };
            optimize_generator(&sigma, args.r, &run_cfg).map(|(g, rep)| (run_cfg.seed, g, rep))
        })
        .collect::<dlab::Result<Vec<_>>>()?;

    let mut lines = vec![TheoremReport::csv_header(args.r)];
    lines.extend(runs.iter().map(|(s, _, rep)| rep.csv_row(*s, cfg.objective)));
    write(out, "optimize_report.csv", lines.join("\n") + "\n")?;

    let mut best = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.2.objective_value > runs[best].2.objective_value {
            best = i;
        }
    }
    let (best_seed, gen, rep) = &runs[best];
    write(out, "model.json", gen.to_json()?)?;
    println!(
        "objective {} = {} (seed {best_seed}), orthonormality residual {}, truncation residual {}",
        cfg.objective.name(),
        fmt_num(rep.objective_value),
        fmt_num(rep.orthonormality_residual),
        fmt_num(rep.truncation_residual)
    );
    Ok(())
}

fn model_metrics(entry: &ModelEntry, ds: &FactorDataset, cfg: &MetricsConfig, dhsic_rows: usize) -> Result<Vec<MetricReport>> {
    let enc = &entry.encoder;
    ensure!(
        enc.input_dim() == ds.samples().ncols(),
        "model {} expects {}-dimensional samples, dataset has {}",
        entry.label,
        enc.input_dim(),
        ds.samples().ncols()
    );
    let discrete = ds.cardinalities().iter().all(|&c| c > 0);
    let fv = if discrete {
        factorvae_metric(ds, enc, &cfg.factorvae)?
    } else {
        factorvae_metric(&entry.generator, enc, &cfg.factorvae)?
    };
    let dci = dci_disentanglement(ds, enc, cfg.dci_lambda)?;
    let rows = dhsic_rows.min(ds.len());
    let codes = enc.encode_batch(&ds.samples().rows(0, rows).into_owned())?;
    let hsic = MetricReport::new("dhsic", dhsic_with(&codes, cfg.dhsic_kernel)?).with_detail("samples", rows as f64);
    Ok(vec![fv, dci, hsic])
}

fn metrics(args: &MetricsArgs, config: Option<&Path>, seed: u64, out: &Path) -> Result<()> {
    let mut cfg: MetricsConfig = load_config(config)?;
    cfg.factorvae.seed = seed;
    ensure!(args.dhsic_samples >= 2, "--dhsic-samples must be at least 2");
    let entries: Vec<ModelEntry> = match (&args.model, &args.manifest) {
        (Some(m), None) => vec![read_model(m)?],
        (None, Some(m)) => {
            require_file(m, "manifest")?;
            ModelPool::load_manifest(m)?.entries().to_vec()
        }
        _ => bail!("give exactly one of --model and --manifest"),
    };
    let dataset = match &args.dataset {
        Some(dir) => {
            ensure!(dir.is_dir(), "dataset directory {} does not exist", dir.display());
            Some(FactorDataset::read_dir(dir).with_context(|| format!("reading dataset {}", dir.display()))?)
        }
        None => None,
    };

    let mut summary = CsvTable::new(["model", "factorvae", "dci_disentanglement", "dhsic"]);
    for (i, entry) in entries.iter().enumerate() {
        let own;
        let ds = match &dataset {
            Some(ds) => ds,
            None => {
                own = gen_linear_gaussian_dataset(&entry.generator, args.samples, derive_seed(seed, i as u64))?;
                &own
            }
        };
        let reports = model_metrics(entry, ds, &cfg, args.dhsic_samples)?;
        write_table(out, &format!("metrics_{}.csv", entry.label), &MetricReport::csv_table(&reports))?;
        summary.push(std::iter::once(entry.label.clone()).chain(reports.iter().map(|r| fmt_num(r.score))));
        println!(
            "{}: factorvae {}, dci {}, dhsic {}",
            entry.label,
            fmt_num(reports[0].score),
            fmt_num(reports[1].score),
            fmt_num(reports[2].score)
        );
    }
    write_table(out, "metrics_summary.csv", &summary)?;
    Ok(())
}

fn select(args: &SelectArgs, config: Option<&Path>, seed: u64, out: &Path) -> Result<()> {
    require_file(&args.manifest, "manifest")?;
    let mut cfg: SelectConfig = load_config(config)?;
    cfg.factorvae.seed = seed;
    let pool = ModelPool::load_manifest(&args.manifest)?;
    let labels = pool.labels();
    let (matrix, report, title) = match args.method {
        MethodArg::ModelCentrality => {
            let (sim, _) = model_centrality(&pool, &cfg.factorvae)?;
            let report = subsampled_centrality(&sim, args.fraction, args.trials, derive_seed(seed, 1))?;
            write_table(out, "similarity_raw.csv", &sim.to_csv(&labels, &sim.raw))?;
            (sim.sym, report, "ModelCentrality similarity")
        }
        MethodArg::UdrLasso | MethodArg::UdrSpearman => {
            ensure!(args.samples >= 2, "--samples must be at least 2");
            let variant = match args.method {
                MethodArg::UdrLasso => UdrVariant::Lasso { lambda: args.lambda },
                _ => UdrVariant::Spearman,
            };
            let ds = gen_linear_gaussian_dataset(&pool.entries()[0].generator, args.samples, seed)?;
            let (u, report) = udr_select(&pool, ds.samples(), variant)?;
            (u, report, "UDR scores")
        }
    };
    let mut sim_table = CsvTable::new(std::iter::once("model".to_string()).chain(labels.iter().cloned()));
    for i in 0..matrix.nrows() {
        sim_table.push(std::iter::once(labels[i].clone()).chain(matrix.row(i).iter().map(|&v| fmt_num(v))));
    }
    write_table(out, "similarity.csv", &sim_table)?;
    write(out, "similarity_heatmap.svg", heatmap_svg(title, &labels, &matrix))?;
    write_table(out, "selection_scores.csv", &report.to_csv(&labels))?;
    println!(
        "{}: selected {} (score {})",
        report.method.name(),
        labels[report.selected],
        fmt_num(report.scores[report.selected])
    );
    Ok(())
}

const SKIPPED_COLUMNS: [&str; 3] = ["index", "selected", "stderr"];

/// Numeric columns of a headered CSV, in header order.
fn numeric_columns(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    require_file(path, "input")?;
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().context("empty CSV")?.split(',').map(str::trim).collect();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').map(str::trim).collect()).collect();
    ensure!(
        rows.iter().all(|r| r.len() == header.len()),
        "{}: ragged rows",
        path.display()
    );
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("input");
    let mut cols = Vec::new();
    for (j, name) in header.iter().enumerate() {
        if SKIPPED_COLUMNS.contains(name) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rows.iter().map(|r| r[j].parse::<f64>()).collect();
        if let Ok(values) = parsed {
            cols.push((format!("{stem}.{name}"), values));
        }
    }
    Ok(cols)
}

fn analyze(args: &AnalyzeArgs, out: &Path) -> Result<()> {
    let mut metrics = Vec::new();
    for p in &args.inputs {
        metrics.extend(numeric_columns(p).with_context(|| format!("reading {}", p.display()))?);
    }
    ensure!(metrics.len() >= 2, "need at least two numeric columns across the inputs");
    let rows = metrics[0].1.len();
    if let Some((name, v)) = metrics.iter().find(|(_, v)| v.len() != rows) {
        bail!("{name} has {} rows, expected {rows}", v.len());
    }
    let rc = rank_correlation_analysis(&metrics)?;
    write_table(out, "rank_correlation.csv", &rc.to_csv())?;
    write(out, "rank_correlation.svg", heatmap_svg("Spearman rank correlation", &rc.names, &rc.matrix))?;
    println!("{} metrics over {rows} models", rc.names.len());
    Ok(())
}
