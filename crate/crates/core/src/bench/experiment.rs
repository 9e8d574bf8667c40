use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{
    gen_toy2d, make_leave_one_out, make_one_vs_rest, subsample_oe, subset_oe_classes, ProtocolSplit, RawDataset,
    ToyScenario,
};
use crate::error::{config, Result};
use crate::freq::{prepare_split, FilterSpec};

use super::config::{ExperimentConfig, Protocol};
use super::train::{evaluate, train_model};

/// OE provenance is recorded per run up to this many samples.
pub const MAX_RECORDED_OE_INDICES: usize = 16;

/// Input data of an experiment.
#[derive(Debug, Clone, Copy)]
pub enum DataSource<'a> {
    Images { dataset: &'a RawDataset, oe: &'a RawDataset },
    /// Generated per seed from the config's toy settings.
    Toy,
}

/// Outcome of one (class, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub method: String,
    pub protocol: Protocol,
    pub class: usize,
    pub seed: u64,
    pub oe_size: Option<usize>,
    pub oe_classes: Option<usize>,
    pub filter: FilterSpec,
    /// OE samples actually used for training.
    pub oe_count: usize,
    /// Source indices of the OE samples when there are only a few.
    pub oe_indices: Option<Vec<usize>>,
    pub auc: Option<f64>,
    pub final_loss: Option<f64>,
    pub loss_trace: Vec<f64>,
    pub epochs_run: usize,
    pub saturated: usize,
    pub diverged: bool,
    pub oe_ignored: bool,
    pub error: Option<String>,
    /// Kept out of the serialized record so reruns are byte-identical.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

impl RunRecord {
    fn blank(cfg: &ExperimentConfig, hash: &str, class: usize, seed: u64) -> Self {
        Self {
            config_hash: hash.to_string(),
            method: cfg.method.label(),
            protocol: cfg.protocol,
            class,
            seed,
            oe_size: cfg.oe_size,
            oe_classes: cfg.oe_classes,
            filter: cfg.filter,
            oe_count: 0,
            oe_indices: None,
            auc: None,
            final_loss: None,
            loss_trace: Vec::new(),
            epochs_run: 0,
            saturated: 0,
            diverged: false,
            oe_ignored: cfg.oe_ignored(),
            error: None,
            wall_clock_seconds: 0.0,
        }
    }
}

/// Builds the (unfiltered) split of one run, including OE class and size
/// subsetting drawn from the run seed.
pub fn build_split(cfg: &ExperimentConfig, data: DataSource<'_>, class: usize, seed: u64) -> Result<ProtocolSplit> {
    let mut split = match (cfg.protocol, data) {
        (Protocol::Toy2d, _) => {
            let t = cfg.toy;
            return gen_toy2d(&ToyScenario::new(t.kind, t.n_normal, t.n_oe, t.n_test, seed));
        }
        (Protocol::OneVsRest, DataSource::Images { dataset, oe }) => make_one_vs_rest(dataset, class, oe)?,
        (Protocol::LeaveOneOut, DataSource::Images { dataset, oe }) => make_leave_one_out(dataset, class, oe)?,
        (p, DataSource::Toy) => return Err(config(format!("protocol {p} needs image data"))),
    };
    if !cfg.method.uses_oe() {
        return Ok(split);
    }
    if let Some(k) = cfg.oe_classes {
        split.oe = subset_oe_classes(&split.oe, k, seed)?;
    }
    if let Some(n) = cfg.oe_size {
        if n < split.oe.len() {
            split.oe = subsample_oe(&split.oe, n, seed)?;
        }
    }
    Ok(split)
}

/// Executes one (class, seed) run. Failures land in the record's `error`.
pub fn run_single(cfg: &ExperimentConfig, data: DataSource<'_>, class: usize, seed: u64) -> RunRecord {
    let hash = cfg.hash();
    let start = Instant::now();
    let mut record = RunRecord::blank(cfg, &hash, class, seed);
    if let Err(e) = fill_record(cfg, data, &mut record) {
        record.error = Some(e.to_string());
    }
    record.wall_clock_seconds = start.elapsed().as_secs_f64();
    record
}

fn fill_record(cfg: &ExperimentConfig, data: DataSource<'_>, record: &mut RunRecord) -> Result<()> {
    let split = build_split(cfg, data, record.class, record.seed)?;
    let split = prepare_split(&split, cfg.filter)?;
    if cfg.method.uses_oe() {
        record.oe_count = split.oe.len();
        if split.oe.len() <= MAX_RECORDED_OE_INDICES {
            record.oe_indices = Some(split.oe.source_index.clone());
        }
    }
    let report = train_model(&cfg.train, &cfg.method, &split, record.seed)?;
    record.final_loss = report.final_loss();
    record.epochs_run = report.epochs_run;
    record.saturated = report.saturated;
    record.diverged = report.diverged;
    record.loss_trace = report.loss_trace.clone();
    if !report.diverged {
        record.auc = Some(evaluate(&report.model, &split.test)?.1);
    }
    Ok(())
}

/// Runs `job(i)` for `i in 0..n` on up to `threads` workers and hands results
/// to `emit` strictly in index order, as soon as each prefix is complete.
pub fn ordered_parallel<T, J, E>(n: usize, threads: usize, job: J, mut emit: E) -> Result<()>
where
    T: Send,
    J: Fn(usize) -> T + Sync,
    E: FnMut(usize, T) -> Result<()>,
{
    let threads = threads.clamp(1, n.max(1));
    if threads == 1 {
        return (0..n).try_for_each(|i| emit(i, job(i)));
    }
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel();
        for _ in 0..threads {
            let tx = tx.clone();
            let (next, job) = (&next, &job);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n || tx.send((i, job(i))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut pending = BTreeMap::new();
        let mut cursor = 0;
        for (i, value) in rx {
            pending.insert(i, value);
            while let Some(value) = pending.remove(&cursor) {
                if let Err(e) = emit(cursor, value) {
                    next.store(n, Ordering::SeqCst);
                    return Err(e);
                }
                cursor += 1;
            }
        }
        Ok(())
    })
}

pub fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// One record per (class, seed), ordered class-major. `sink` sees every record
/// as soon as it and all earlier records are done.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    data: DataSource<'_>,
    threads: usize,
    mut sink: impl FnMut(&RunRecord) -> Result<()>,
) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let capped;
    let data = match (data, cfg.train_cap_per_class) {
        (DataSource::Images { dataset, oe }, Some(cap)) => {
            capped = dataset.cap_train_per_class(cap);
            DataSource::Images { dataset: &capped, oe }
        }
        (d, _) => d,
    };
    let jobs: Vec<(usize, u64)> =
        cfg.classes.iter().flat_map(|&c| cfg.seeds.iter().map(move |&s| (c, s))).collect();
    let mut records = Vec::with_capacity(jobs.len());
    ordered_parallel(
        jobs.len(),
        threads,
        |i| run_single(cfg, data, jobs[i].0, jobs[i].1),
        |_, record| {
            sink(&record)?;
            records.push(record);
            Ok(())
        },
    )?;
    Ok(records)
}

/// Record attributes that can form a summary group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupField {
    Method,
    Protocol,
    OeSize,
    OeClasses,
    Filter,
}

impl GroupField {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Method => "method",
            Self::Protocol => "protocol",
            Self::OeSize => "oe_size",
            Self::OeClasses => "oe_classes",
            Self::Filter => "filter",
        }
    }

    pub fn value(&self, r: &RunRecord) -> String {
        let opt = |v: Option<usize>| v.map_or_else(|| "full".to_string(), |n| n.to_string());
        match self {
            Self::Method => r.method.clone(),
            Self::Protocol => r.protocol.to_string(),
            Self::OeSize => opt(r.oe_size),
            Self::OeClasses => opt(r.oe_classes),
            Self::Filter => format!("{}:{}", r.filter.kind, r.filter.magnitude),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// `field=value` pairs joined by `,`.
    pub group: String,
    pub fields: Vec<(String, String)>,
    pub mean_auc: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n: usize,
    pub per_class: BTreeMap<usize, f64>,
    /// Runs of this group without an AUC (diverged or failed).
    pub missing: usize,
}

/// Groups records in order of first appearance; runs without an AUC are
/// counted in `missing` and groups without any AUC are omitted.
pub fn aggregate(records: &[RunRecord], group_by: &[GroupField]) -> Vec<Summary> {
    let mut order: Vec<Vec<(String, String)>> = Vec::new();
    let mut groups: BTreeMap<Vec<(String, String)>, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let key: Vec<(String, String)> = group_by.iter().map(|g| (g.name().to_string(), g.value(r))).collect();
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r);
    }
    order
        .into_iter()
        .filter_map(|key| {
            let members = &groups[&key];
            let aucs: Vec<f64> = members.iter().filter_map(|r| r.auc).collect();
            if aucs.is_empty() {
                return None;
            }
            let (mean, std) = mean_std(&aucs);
            let mut by_class: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            for r in members {
                if let Some(a) = r.auc {
                    by_class.entry(r.class).or_default().push(a);
                }
            }
            Some(Summary {
                group: key.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(","),
                fields: key,
                mean_auc: mean,
                std,
                n: aucs.len(),
                per_class: by_class.into_iter().map(|(c, v)| (c, mean_std(&v).0)).collect(),
                missing: members.len() - aucs.len(),
            })
        })
        .collect()
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
