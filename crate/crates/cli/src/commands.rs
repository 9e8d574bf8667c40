//! Experiment subcommands.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use oe_lab::bench::{
    aggregate, build_split, mean_std, run_experiment, train_model, DataSource, ExperimentConfig, GroupField,
    NetTrainer, Protocol, RunRecord,
};
use oe_lab::data::{subsample_oe, ProtocolSplit, RawDataset, ToyKind};
use oe_lab::evo::{evolve, single_oe_fitness, EvoTrace, Evaluation};
use oe_lab::freq::{prepare_split, FilterKind, FilterSpec};
use oe_lab::losses::Method;
use oe_lab::nn::Tensor;

use crate::config::{CliConfig, DATA_ENV};
use crate::output::{write_csv, write_summary, JsonlWriter, OutputDir, TimingsWriter};
use crate::svg::{line_chart, scatter, PlotSpec, PointKind, ScatterSpec, Series};

pub struct Datasets {
    pub dataset: RawDataset,
    pub oe: RawDataset,
}

impl Datasets {
    pub fn source(&self) -> DataSource<'_> {
        DataSource::Images { dataset: &self.dataset, oe: &self.oe }
    }
}

pub fn load_datasets(cfg: &CliConfig) -> Result<Datasets> {
    let root = cfg.data_root();
    let load = |name: &str| {
        RawDataset::load(&root, name).with_context(|| {
            format!("loading '{name}' under {} (set dataset.root or {DATA_ENV})", root.display())
        })
    };
    Ok(Datasets { dataset: load(cfg.raw("dataset.name"))?, oe: load(cfg.raw("dataset.oe"))? })
}

fn uses_images(cfg: &CliConfig) -> Result<bool> {
    Ok(cfg.get::<Protocol>("protocol")? != Protocol::Toy2d)
}

/// Runs every experiment, streaming records to `records.jsonl` and timings.
fn run_all(
    dir: &OutputDir,
    experiments: &[ExperimentConfig],
    data: Option<&Datasets>,
    threads: usize,
) -> Result<Vec<RunRecord>> {
    let mut jsonl = JsonlWriter::create(dir, "records.jsonl")?;
    let mut timings = TimingsWriter::create(dir)?;
    let mut all = Vec::new();
    for exp in experiments {
        let source = data.map_or(DataSource::Toy, Datasets::source);
        let records = run_experiment(exp, source, threads, |r| {
            jsonl.line(r).map_err(|e| oe_lab::Error::Io(std::io::Error::other(e.to_string())))?;
            timings.record(r).map_err(|e| oe_lab::Error::Io(std::io::Error::other(e.to_string())))?;
            Ok(())
        })?;
        for r in records.iter().filter(|r| r.error.is_some()) {
            eprintln!("run failed (method {}, class {}, seed {}): {}", r.method, r.class, r.seed, r.error.as_deref().unwrap_or(""));
        }
        all.extend(records);
    }
    Ok(all)
}

fn maybe_data(cfg: &CliConfig) -> Result<Option<Datasets>> {
    Ok(if uses_images(cfg)? { Some(load_datasets(cfg)?) } else { None })
}

pub fn cmd_bench(cfg: &CliConfig, out: &Path) -> Result<PathBuf> {
    let dir = OutputDir::create(out, "bench", cfg)?;
    let data = maybe_data(cfg)?;
    let experiments = cfg.methods()?.into_iter().map(|m| cfg.experiment(m)).collect::<Result<Vec<_>>>()?;
    let records = run_all(&dir, &experiments, data.as_ref(), cfg.threads()?)?;
    write_summary(&dir, "summary.csv", &aggregate(&records, &[GroupField::Method]))?;
    Ok(dir.path)
}

/// x coordinate and tick label of each sweep point.
type Axis = Vec<(f64, String)>;

fn curve(
    dir: &OutputDir,
    records: &[RunRecord],
    field: GroupField,
    points: &[String],
    axis: &Axis,
    title: &str,
    x_label: &str,
) -> Result<()> {
    let summaries = aggregate(records, &[GroupField::Method, field]);
    write_summary(dir, "summary.csv", &summaries)?;
    let mut methods: Vec<String> = Vec::new();
    for r in records {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    let series = methods
        .iter()
        .map(|m| {
            let (mean, std) = points
                .iter()
                .map(|p| {
                    summaries
                        .iter()
                        .find(|s| s.fields[0].1 == *m && s.fields[1].1 == *p)
                        .map_or((f64::NAN, 0.0), |s| (s.mean_auc, s.std))
                })
                .unzip();
            Series { name: m.clone(), mean, std }
        })
        .filter(|s: &Series| s.mean.iter().all(|v| v.is_finite()))
        .collect();
    let spec = PlotSpec {
        title: title.into(),
        x_label: x_label.into(),
        y_label: "mean AUC".into(),
        x: axis.iter().map(|a| a.0).collect(),
        x_ticks: axis.iter().map(|a| a.1.clone()).collect(),
        series,
    };
    dir.write("curve.svg", &line_chart(&spec, &dir.comment_block())?)?;
    Ok(())
}

/// Positions optional grid values on an axis; `None` (all / full) lands one
/// unit past the last explicit value.
fn optional_axis(grid: &[Option<usize>], log2: bool, full_label: &str) -> Result<Axis> {
    if grid.iter().rev().skip(1).any(Option::is_none) {
        bail!("the full setting can only be the last sweep grid value");
    }
    let mut axis: Axis = Vec::new();
    for g in grid {
        let (x, label) = match g {
            Some(n) => (if log2 { (*n as f64).log2() } else { *n as f64 }, n.to_string()),
            None => (axis.last().map_or(0.0, |a| a.0 + 1.0), full_label.to_string()),
        };
        if axis.last().is_some_and(|a| a.0 >= x) {
            bail!("sweep grid must be strictly increasing with the full setting last");
        }
        axis.push((x, label));
    }
    Ok(axis)
}

fn point_names(grid: &[Option<usize>]) -> Vec<String> {
    grid.iter().map(|g| g.map_or_else(|| "full".to_string(), |n| n.to_string())).collect()
}

pub fn cmd_sweep_oe(cfg: &CliConfig, out: &Path) -> Result<PathBuf> {
    let dir = OutputDir::create(out, "sweep-oe", cfg)?;
    let grid = cfg.optional_list("sweep.oe_sizes")?;
    let axis = optional_axis(&grid, true, "full")?;
    let data = maybe_data(cfg)?;
    let mut experiments = Vec::new();
    for size in &grid {
        for m in cfg.methods()? {
            experiments.push(ExperimentConfig { oe_size: *size, ..cfg.experiment(m)? });
        }
    }
    let records = run_all(&dir, &experiments, data.as_ref(), cfg.threads()?)?;
    curve(&dir, &records, GroupField::OeSize, &point_names(&grid), &axis, "AUC vs number of OE samples", "log2 OE samples")?;
    Ok(dir.path)
}

pub fn cmd_sweep_diversity(cfg: &CliConfig, out: &Path) -> Result<PathBuf> {
    let dir = OutputDir::create(out, "sweep-diversity", cfg)?;
    let grid = cfg.optional_list("sweep.oe_classes")?;
    let axis = optional_axis(&grid, false, "all")?;
    let data = maybe_data(cfg)?;
    let mut experiments = Vec::new();
    for k in &grid {
        for m in cfg.methods()? {
            experiments.push(ExperimentConfig { oe_classes: *k, ..cfg.experiment(m)? });
        }
    }
    let records = run_all(&dir, &experiments, data.as_ref(), cfg.threads()?)?;
    curve(&dir, &records, GroupField::OeClasses, &point_names(&grid), &axis, "AUC vs number of OE classes", "OE classes")?;
    Ok(dir.path)
}

pub fn cmd_filter_sweep(cfg: &CliConfig, out: &Path) -> Result<PathBuf> {
    let dir = OutputDir::create(out, "filter-sweep", cfg)?;
    let kinds: Vec<FilterKind> = cfg.list("sweep.filter_kinds")?;
    let magnitudes: Vec<usize> = cfg.list("sweep.filter_magnitudes")?;
    if magnitudes.is_empty() || magnitudes.windows(2).any(|w| w[0] >= w[1]) {
        bail!("sweep.filter_magnitudes must be non-empty and strictly increasing");
    }
    let data = maybe_data(cfg)?;
    let mut experiments = Vec::new();
    for &kind in &kinds {
        for &m in &magnitudes {
            for method in cfg.methods()? {
                experiments.push(ExperimentConfig { filter: FilterSpec::new(kind, m), ..cfg.experiment(method)? });
            }
        }
    }
    let records = run_all(&dir, &experiments, data.as_ref(), cfg.threads()?)?;
    let summaries = aggregate(&records, &[GroupField::Method, GroupField::Filter]);
    write_summary(&dir, "summary.csv", &summaries)?;
    let mut series = Vec::new();
    for method in cfg.methods()? {
        for &kind in &kinds {
            let (mean, std) = magnitudes
                .iter()
                .map(|&m| {
                    let point = format!("{}:{m}", kind);
                    summaries
                        .iter()
                        .find(|s| s.fields[0].1 == method.label() && s.fields[1].1 == point)
                        .map_or((f64::NAN, 0.0), |s| (s.mean_auc, s.std))
                })
                .unzip();
            series.push(Series { name: format!("{} {kind}", method.label()), mean, std });
        }
    }
    series.retain(|s| s.mean.iter().all(|v| v.is_finite()));
    let spec = PlotSpec {
        title: "AUC vs filter magnitude".into(),
        x_label: "filter magnitude".into(),
        y_label: "mean AUC".into(),
        x: magnitudes.iter().map(|&m| m as f64).collect(),
        x_ticks: magnitudes.iter().map(|m| m.to_string()).collect(),
        series,
    };
    dir.write("curve.svg", &line_chart(&spec, &dir.comment_block())?)?;
    Ok(dir.path)
}

pub const TOY_COLUMNS: [&str; 6] = ["scenario", "method", "mean_auc", "std", "n", "aucs"];
const TOY_EXTENT: f64 = 7.0;

fn toy_name(kind: ToyKind) -> &'static str {
    match kind {
        ToyKind::Ideal => "ideal",
        ToyKind::Skewed => "skewed",
    }
}

pub fn cmd_toy(cfg: &CliConfig, out: &Path) -> Result<PathBuf> {
    let dir = OutputDir::create(out, "toy", cfg)?;
    let mut toy_cfg = cfg.clone();
    toy_cfg.set("protocol", "toy2d")?;
    let methods = cfg.methods_from("toy.methods")?;
    let scenarios = cfg.toy_scenarios()?;
    let mut experiments = Vec::new();
    for &kind in &scenarios {
        for &m in &methods {
            experiments.push(ExperimentConfig { toy: cfg.toy_settings(kind)?, ..toy_cfg.experiment(m)? });
        }
    }
    let records = run_all(&dir, &experiments, None, cfg.threads()?)?;
    let mut rows = Vec::new();
    for exp in &experiments {
        let hash = exp.hash();
        let aucs: Vec<f64> = records.iter().filter(|r| r.config_hash == hash).filter_map(|r| r.auc).collect();
        let (mean, std) = if aucs.is_empty() { (f64::NAN, f64::NAN) } else { mean_std(&aucs) };
        rows.push(vec![
            toy_name(exp.toy.kind).to_string(),
            exp.method.label(),
            mean.to_string(),
            std.to_string(),
            aucs.len().to_string(),
            serde_json::to_string(&aucs)?,
        ]);
        dir.write(
            &format!("toy_{}_{}.svg", toy_name(exp.toy.kind), exp.method.label()),
            &toy_plot(exp, cfg.get("toy.grid")?, &dir.comment_block())?,
        )?;
    }
    write_csv(&dir, "toy_auc.csv", &TOY_COLUMNS, &rows)?;
    Ok(dir.path)
}

/// Decision landscape of the first seed's model.
fn toy_plot(exp: &ExperimentConfig, grid_size: usize, desc: &str) -> Result<String> {
    if grid_size == 0 {
        bail!("toy.grid must be >= 1");
    }
    let seed = exp.seeds[0];
    let split = build_split(exp, DataSource::Toy, 0, seed)?;
    let report = train_model(&exp.train, &exp.method, &split, seed)?;
    let step = 2.0 * TOY_EXTENT / grid_size as f64;
    let mut cells = Vec::with_capacity(grid_size * grid_size);
    for r in 0..grid_size {
        for c in 0..grid_size {
            cells.push([-TOY_EXTENT + (c as f64 + 0.5) * step, TOY_EXTENT - (r as f64 + 0.5) * step]);
        }
    }
    let grid = report.model.scores(&Tensor::from_rows(&cells)?)?;
    let mut points = Vec::new();
    let mut sets = vec![(&split.train_normal, PointKind::Normal), (&split.oe, PointKind::Outlier)];
    sets.push((&split.test, PointKind::TestNormal));
    for (set, kind) in sets {
        for i in 0..set.len() {
            let p = set.x.row(i);
            let kind = match kind {
                PointKind::TestNormal if set.y[i] == 0 => PointKind::TestAnomaly,
                k => k,
            };
            points.push((p[0], p[1], kind));
        }
    }
    let xy: Vec<[f64; 2]> = points.iter().map(|p| [p.0, p.1]).collect();
    let point_scores = report.model.scores(&Tensor::from_rows(&xy)?)?;
    let title = format!("{} on the {} toy scenario (seed {seed})", exp.method.label(), toy_name(exp.toy.kind));
    scatter(&ScatterSpec { title, points, point_scores, extent: TOY_EXTENT, grid, grid_size }, desc)
}

pub const MANIFEST_COLUMNS: [&str; 10] = [
    "class",
    "method",
    "mode",
    "best_index",
    "best_source_index",
    "best_fitness",
    "worst_index",
    "worst_source_index",
    "worst_fitness",
    "evaluations",
];

/// Everything written per (method, class) search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFile {
    pub header: serde_json::Value,
    pub class: usize,
    pub method: String,
    /// OE dataset index of every pool row.
    pub pool_source_index: Vec<usize>,
    pub fitness_seeds: Vec<u64>,
    pub trace: EvoTrace,
}

impl TraceFile {
    pub fn manifest_row(&self) -> Vec<String> {
        let t = &self.trace;
        let f = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        vec![
            self.class.to_string(),
            self.method.clone(),
            t.params.mode.to_string(),
            t.best.oe_index.to_string(),
            self.pool_source_index[t.best.oe_index].to_string(),
            f(t.best.fitness),
            t.worst.oe_index.to_string(),
            self.pool_source_index[t.worst.oe_index].to_string(),
            f(t.worst.fitness),
            t.evaluations.to_string(),
        ]
    }
}

/// Filtered split whose OE set is the search pool.
fn evo_split(cfg: &CliConfig, exp: &ExperimentConfig, data: Option<&Datasets>, class: usize) -> Result<ProtocolSplit> {
    let seed: u64 = cfg.get("evo.seed")?;
    let source = data.map_or(DataSource::Toy, Datasets::source);
    let unsized_exp = ExperimentConfig { oe_size: None, oe_classes: None, ..exp.clone() };
    let mut split = build_split(&unsized_exp, source, class, seed)?;
    if let Some(n) = exp.oe_size {
        if n < split.oe.len() {
            split.oe = subsample_oe(&split.oe, n, seed)?;
        }
    }
    Ok(prepare_split(&split, exp.filter)?)
}

pub fn cmd_evolve(cfg: &CliConfig, out: &Path) -> Result<PathBuf> {
    let dir = OutputDir::create(out, "evolve", cfg)?;
    let data = maybe_data(cfg)?;
    let params = cfg.evo_params()?;
    let seed: u64 = cfg.get("evo.seed")?;
    let fitness_seeds: Vec<u64> = (0..params.fitness_seeds as u64).collect();
    let mut rows = Vec::new();
    for method in cfg.methods()? {
        if !method.uses_oe() {
            bail!("{} does not train with OE and cannot be searched over", method.label());
        }
        let exp = cfg.experiment(method)?;
        for &class in &exp.classes {
            let split = evo_split(cfg, &exp, data.as_ref(), class)?;
            let trainer = NetTrainer { method, train: exp.train.clone() };
            let fitness = |i: usize| -> oe_lab::Result<Evaluation> {
                single_oe_fitness(&trainer, &split, i, &fitness_seeds)
            };
            let trace = evolve(&split.oe.x, &fitness, &params, seed)
                .with_context(|| format!("searching class {class} with {}", method.label()))?;
            let file = TraceFile {
                header: dir.header_json(),
                class,
                method: method.label(),
                pool_source_index: split.oe.source_index.clone(),
                fitness_seeds: fitness_seeds.clone(),
                trace,
            };
            rows.push(file.manifest_row());
            dir.write(&trace_name(&method, class), &serde_json::to_string_pretty(&file)?)?;
        }
    }
    write_csv(&dir, "manifest.csv", &MANIFEST_COLUMNS, &rows)?;
    Ok(dir.path)
}

pub fn trace_name(method: &Method, class: usize) -> String {
    format!("trace_{}_class{class}.json", method.label())
}

/// Rebuilds manifest rows from trace files.
pub fn manifest_from_traces(paths: &[PathBuf]) -> Result<Vec<Vec<String>>> {
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let file: TraceFile =
                serde_json::from_str(&text).map_err(|e| anyhow!("{}: not a trace file: {e}", p.display()))?;
            Ok(file.manifest_row())
        })
        .collect()
}
