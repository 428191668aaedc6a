//! Subcommand implementations. Each writes its outputs and a `config.toml`
//! snapshot of the resolved configuration into the output directory.

use std::fs;
use std::path::Path;
use std::time::Instant;

use log::info;
use shiftnorm::bench::{
    corruption_seed, evaluate_batched, mce as mean_corruption_error, permutation_correlations,
    prediction_report, prediction_tsv, shift_error_scan, sweep as run_sweep, top1_error, BatchSize,
    ErrorTable, ScanResult,
};
use shiftnorm::bounds::{verify_grid, SandwichRow};
use shiftnorm::corrupt::{apply_corruption, CorruptionFamily};
use shiftnorm::metrics::{label_layers, shift_report};
use shiftnorm::nn::Stage;
use shiftnorm::rng::hash2;
use shiftnorm::stats::StatsFile;
use shiftnorm::{Dataset, EvalMode, Network, ShiftMetric};

use crate::config::RunConfig;
use crate::exit::{runtime, usage, CliResult, Context};
use crate::{Common, Source};

/// Trials whose permuted correlation must stay below this in magnitude.
const PERMUTATION_LIMIT: f64 = 0.5;

fn resolve(common: &Common, apply: impl FnOnce(&mut RunConfig)) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn write(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn start(common: &Common, cfg: &RunConfig) -> CliResult<()> {
    fs::create_dir_all(&common.out)
        .map_err(|e| runtime(format!("cannot create {}: {e}", common.out.display())))?;
    write(&common.out, "config.toml", &cfg.to_toml())
}

fn load_model(path: &Path) -> CliResult<Network> {
    Network::load(path).context(format!("loading {}", path.display()))
}

fn load_data(path: &Path, classes: usize) -> CliResult<Dataset> {
    Dataset::load(path, Some(classes)).context(format!("loading {}", path.display()))
}

/// The network and clean evaluation data named by `source`, or trained and
/// generated from the configuration.
fn network_and_data(cfg: &RunConfig, source: &Source) -> CliResult<(Network, Dataset)> {
    let exp = cfg.experiment();
    let net = match &source.model {
        Some(path) => load_model(path)?,
        None => {
            let t = Instant::now();
            let prepared = exp.prepare()?;
            info!("trained default network in {:.2?}", t.elapsed());
            prepared.net
        }
    };
    let data = match &source.data {
        Some(path) => load_data(path, net.classes())?,
        None => exp.datasets()?.1,
    };
    if data.dim() != net.input_dim() {
        return Err(usage(format!(
            "data has {} features but the network expects {}",
            data.dim(),
            net.input_dim()
        )));
    }
    Ok((net, data))
}

pub fn train(common: &Common, epochs: Option<usize>, learning_rate: Option<f64>) -> CliResult<()> {
    let cfg = resolve(common, |c| {
        if let Some(e) = epochs {
            c.train.epochs = e;
        }
        if let Some(lr) = learning_rate {
            c.train.learning_rate = lr;
        }
    })?;
    start(common, &cfg)?;
    let exp = cfg.experiment();
    let (train, test) = exp.datasets()?;
    let mut net = Network::mlp(exp.dim, &exp.hidden, exp.classes, exp.seed)?;
    let log = net.train(&train, &exp.schedule)?;
    let mut csv = String::from("epoch,loss,accuracy\n");
    for e in &log {
        csv.push_str(&format!("{},{},{}\n", e.epoch, e.loss, e.accuracy));
    }
    net.save(&common.out.join("model.json"))?;
    write(&common.out, "train_log.csv", &csv)?;
    train.save(&common.out.join("train.csv"))?;
    test.save(&common.out.join("test.csv"))?;
    let train_acc = 1.0 - top1_error(&net, &train, &EvalMode::SourceStats)?;
    let test_acc = 1.0 - top1_error(&net, &test, &EvalMode::SourceStats)?;
    println!(
        "trained {} epochs: train accuracy {train_acc:.4}, test accuracy {test_acc:.4}",
        log.len()
    );
    Ok(())
}

pub fn adapt(
    common: &Common,
    model: &Path,
    data: &Path,
    pseudo_count: Option<f64>,
    layerwise: bool,
) -> CliResult<()> {
    let cfg = resolve(common, |c| {
        if let Some(p) = pseudo_count {
            c.adapt.pseudo_count = p;
        }
        c.adapt.layerwise |= layerwise;
    })?;
    if cfg.adapt.layerwise && cfg.adapt.pseudo_count != 0.0 {
        return Err(usage(
            "layer-wise adaptation replaces statistics outright; use pseudo_count = 0",
        ));
    }
    start(common, &cfg)?;
    let net = load_model(model)?;
    let target = load_data(data, net.classes())?;
    let adapted = if cfg.adapt.layerwise {
        net.adapt_layerwise(target.features(), &Stage::per_batch_norm(&net))?
    } else {
        let mode = net.adapt_full(target.features(), cfg.adapt.pseudo_count, None)?;
        net.with_adapted_stats(&mode)?
    };
    adapted.save(&common.out.join("model.json"))?;
    let files: Vec<StatsFile> = adapted.source_stats().iter().map(StatsFile::from).collect();
    let stats = serde_json::to_string_pretty(&files).map_err(runtime)?;
    write(&common.out, "stats.json", &(stats + "\n"))?;
    let before = top1_error(&net, &target, &EvalMode::SourceStats)?;
    let after = top1_error(&adapted, &target, &EvalMode::SourceStats)?;
    println!("top-1 error on the target data: {before:.4} before, {after:.4} after adaptation");
    Ok(())
}

fn format_error(e: Option<f64>) -> String {
    e.map_or_else(|| "NA".to_owned(), |v| format!("{v:.6}"))
}

pub fn eval(
    common: &Common,
    source: &Source,
    corruption: Option<(CorruptionFamily, u8)>,
    batch_size: BatchSize,
    pseudo_count: Option<f64>,
) -> CliResult<()> {
    let cfg = resolve(common, |c| {
        if let Some(p) = pseudo_count {
            c.adapt.pseudo_count = p;
        }
    })?;
    start(common, &cfg)?;
    let (net, clean) = network_and_data(&cfg, source)?;
    let (label, data, data_seed) = match corruption {
        Some((family, severity)) => {
            let spec = cfg.corruptions.spec(family, severity).map_err(usage)?;
            let seed = corruption_seed(cfg.seed, &spec);
            (spec.label(), apply_corruption(&clean, &spec, seed), seed)
        }
        None => ("clean".to_owned(), clean, cfg.seed),
    };
    let n = batch_size.resolve(data.len());
    if n > data.len() {
        return Err(usage(format!(
            "batch size {n} exceeds the dataset size {}",
            data.len()
        )));
    }
    let pseudo = cfg.adapt.pseudo_count;
    let source_error = top1_error(&net, &data, &EvalMode::SourceStats)?;
    let adapted_error = evaluate_batched(&net, &data, n, pseudo, hash2(data_seed, n as u64))?;
    let tsv = format!(
        "data\tmode\tbatchsize\tpseudo\terror\n{label}\tsource\tNA\tNA\t{}\n{label}\tadapted\t{batch_size}\t{pseudo}\t{}\n",
        format_error(Some(source_error)),
        format_error(adapted_error)
    );
    write(&common.out, "eval.tsv", &tsv)?;
    print!("{tsv}");
    Ok(())
}

fn scan_with(cfg: &RunConfig, net: &Network, clean: &Dataset) -> CliResult<ScanResult> {
    let t = Instant::now();
    let scan = shift_error_scan(net, clean, &cfg.scan_specs()?, cfg.scan.metric, cfg.seed)?;
    info!("scan finished in {:.2?}", t.elapsed());
    Ok(scan)
}

pub fn sweep(common: &Common, source: &Source, metric: Option<ShiftMetric>) -> CliResult<()> {
    let cfg = resolve(common, |c| {
        if let Some(m) = metric {
            c.scan.metric = m;
        }
    })?;
    start(common, &cfg)?;
    let (net, clean) = network_and_data(&cfg, source)?;
    let t = Instant::now();
    let result = run_sweep(&net, &clean, &cfg.sweep_config()?)?;
    info!(
        "sweep of {} cells finished in {:.2?}",
        result.cells.len(),
        t.elapsed()
    );
    let scan = scan_with(&cfg, &net, &clean)?;
    write(&common.out, "sweep_error.tsv", &result.error_tsv())?;
    write(&common.out, "sweep_mce.tsv", &result.mce_tsv())?;
    write(&common.out, "sweep_cells.tsv", &result.cells_tsv())?;
    write(&common.out, "scan.tsv", &scan.to_tsv())?;
    print!("{}", result.error_tsv());
    Ok(())
}

pub fn scan(common: &Common, source: &Source, metric: Option<ShiftMetric>) -> CliResult<()> {
    let cfg = resolve(common, |c| {
        if let Some(m) = metric {
            c.scan.metric = m;
        }
    })?;
    start(common, &cfg)?;
    let (net, clean) = network_and_data(&cfg, source)?;
    let scan = scan_with(&cfg, &net, &clean)?;
    let perms = permutation_correlations(
        &scan.points,
        cfg.scan.permutations,
        hash2(cfg.seed, 0x5045_524D),
    )?;
    let mut tsv = String::from("trial\tpearson\n");
    for (i, r) in perms.iter().enumerate() {
        tsv.push_str(&format!("{i}\t{r:.6}\n"));
    }
    write(&common.out, "scan.tsv", &scan.to_tsv())?;
    write(&common.out, "permutations.tsv", &tsv)?;
    let below = perms.iter().filter(|r| r.abs() < PERMUTATION_LIMIT).count();
    println!(
        "pearson r = {:.4} ({} metric, {} points); permuted |r| < {PERMUTATION_LIMIT} in {below}/{} trials",
        scan.pearson,
        scan.metric,
        scan.points.len(),
        perms.len()
    );
    Ok(())
}

pub fn predict(
    common: &Common,
    source: &Source,
    holdout: Option<CorruptionFamily>,
    test: Vec<CorruptionFamily>,
    metric: Option<ShiftMetric>,
) -> CliResult<()> {
    let cfg = resolve(common, |c| {
        if let Some(h) = holdout {
            c.predict.holdout = h;
        }
        if !test.is_empty() {
            c.predict.test = test;
        }
        if let Some(m) = metric {
            c.scan.metric = m;
        }
    })?;
    start(common, &cfg)?;
    let (net, clean) = network_and_data(&cfg, source)?;
    let scan = scan_with(&cfg, &net, &clean)?;
    let (_, rows) = prediction_report(&scan, cfg.predict.holdout, &cfg.predict.test)?;
    let tsv = prediction_tsv(&rows);
    write(&common.out, "scan.tsv", &scan.to_tsv())?;
    write(&common.out, "predict.tsv", &tsv)?;
    print!("{tsv}");
    Ok(())
}

pub fn bounds(common: &Common, alpha: Option<f64>, trials: Option<usize>) -> CliResult<()> {
    let cfg = resolve(common, |c| {
        if let Some(a) = alpha {
            c.bounds.grid.alpha = a;
        }
        if let Some(t) = trials {
            c.bounds.trials = t;
        }
    })?;
    start(common, &cfg)?;
    let cells = cfg.bounds.grid.cells();
    let t = Instant::now();
    let rows = verify_grid(&cells, cfg.bounds.trials, cfg.seed)?;
    info!("verified {} cells in {:.2?}", rows.len(), t.elapsed());
    let mut csv = String::from(SandwichRow::CSV_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.csv_line());
        csv.push('\n');
    }
    write(&common.out, "bounds.csv", &csv)?;
    let contained = rows.iter().filter(|r| r.contained).count();
    let rate = contained as f64 / rows.len() as f64;
    println!(
        "containment {contained}/{} cells ({:.1}%), {} trials per cell, alpha {}",
        rows.len(),
        100.0 * rate,
        cfg.bounds.trials,
        cfg.bounds.grid.alpha
    );
    Ok(())
}

pub fn mce(model: &Path, baseline: &Path, out: Option<&Path>) -> CliResult<()> {
    let m = ErrorTable::load(model).context(format!("loading {}", model.display()))?;
    let b = ErrorTable::load(baseline).context(format!("loading {}", baseline.display()))?;
    let value = mean_corruption_error(&m, &b)?;
    let line = format!("{value:.1}\n");
    if let Some(dir) = out {
        fs::create_dir_all(dir)
            .map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
        let snapshot = toml::to_string(&toml::toml! {
            model = (model.display().to_string())
            baseline = (baseline.display().to_string())
        })
        .map_err(runtime)?;
        write(dir, "config.toml", &snapshot)?;
        write(dir, "mce.txt", &line)?;
    }
    print!("{line}");
    Ok(())
}

pub fn metrics(
    common: &Common,
    model: &Path,
    data: &Path,
    metric: Option<ShiftMetric>,
) -> CliResult<()> {
    let cfg = resolve(common, |_| {})?;
    start(common, &cfg)?;
    let net = load_model(model)?;
    let target = load_data(data, net.classes())?;
    let stored = label_layers(&net.source_stats());
    let observed = label_layers(&net.collect_stats(target.features(), &EvalMode::SourceStats)?);
    let chosen = metric.map_or_else(|| ShiftMetric::ALL.to_vec(), |m| vec![m]);
    let mut csv = String::from("layer,metric,value\n");
    for m in chosen {
        let report = shift_report(&stored, &observed, m)?;
        csv.extend(report.to_csv().lines().skip(1).flat_map(|l| [l, "\n"]));
    }
    write(&common.out, "metrics.csv", &csv)?;
    print!("{csv}");
    Ok(())
}
