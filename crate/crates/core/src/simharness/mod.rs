//! Simulation study: seeded samples from analytic models, checkerboard
//! estimates for every φ, per-scenario summaries and boxplots.

mod config;
mod plot;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::checkerboard::{ecbc, resolution};
use crate::error::{Error, Result};
use crate::ingest::{to_pseudo, TiePolicy};
use crate::measures::lambda_phi;
use crate::models::{true_lambda, CopulaModel};

pub use config::{
    ExperimentConfig, DEFAULT_REPLICATIONS, DEFAULT_TRUTH_RESOLUTION, FULL_REPLICATIONS, STUDY_SAMPLE_SIZES,
};

pub const RECORDS_HEADER: [&str; 7] = ["model", "phi", "n", "rep", "N", "estimate", "wall_time_ms"];
pub const SUMMARY_HEADER: [&str; 13] = [
    "model",
    "phi",
    "n",
    "count",
    "mean",
    "sd",
    "min",
    "q25",
    "median",
    "q75",
    "max",
    "true_value",
    "median_abs_error",
];

/// One estimate of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub model: String,
    pub phi: String,
    pub n: usize,
    pub rep: usize,
    pub resolution: usize,
    pub estimate: f64,
    pub wall_time_ms: f64,
    /// Position of (model, phi) in the config, for canonical ordering.
    order: (usize, usize),
}

impl ResultRecord {
    pub fn scenario(&self) -> Scenario {
        Scenario { model: self.model.clone(), phi: self.phi.clone(), n: self.n }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scenario {
    pub model: String,
    pub phi: String,
    pub n: usize,
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} / {} / n={}", self.model, self.phi, self.n)
    }
}

/// A replication that errored or panicked.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskFailure {
    pub model: String,
    pub n: usize,
    pub rep: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub records: Vec<ResultRecord>,
    pub failures: Vec<TaskFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: Scenario,
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    pub true_value: Option<f64>,
    pub median_abs_error: Option<f64>,
}

/// Seed of one replication, independent of scheduling and of the other tasks.
pub fn task_seed(master_seed: u64, model: &str, n: usize, rep: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update((model.len() as u64).to_le_bytes());
    h.update(model.as_bytes());
    h.update((n as u64).to_le_bytes());
    h.update((rep as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Records are sorted by model and φ in config order, then n and replication.
pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    run_with(config, replicate)
}

fn run_with<F>(config: &ExperimentConfig, task: F) -> Result<RunReport>
where
    F: Fn(&ExperimentConfig, usize, usize, usize) -> Result<Vec<ResultRecord>> + Sync,
{
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", config.workers)))?;

    let tasks: Vec<(usize, usize, usize)> = (0..config.models.len())
        .flat_map(|m| config.sample_sizes.iter().flat_map(move |&n| (0..config.replications).map(move |r| (m, n, r))))
        .collect();

    let outcomes: Vec<std::result::Result<Vec<ResultRecord>, TaskFailure>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(m, n, rep)| {
                let model = &config.models[m];
                let failure = |message: String| TaskFailure { model: model.descriptor(), n, rep, message };
                match catch_unwind(AssertUnwindSafe(|| task(config, m, n, rep))) {
                    Ok(Ok(records)) => Ok(records),
                    Ok(Err(e)) => Err(failure(e.to_string())),
                    Err(payload) => Err(failure(panic_message(payload.as_ref()))),
                }
            })
            .collect()
    });

    let mut report = RunReport::default();
    for outcome in outcomes {
        match outcome {
            Ok(records) => report.records.extend(records),
            Err(f) => {
                log::error!("{} n={} rep={}: {}", f.model, f.n, f.rep, f.message);
                report.failures.push(f);
            }
        }
    }
    report.records.sort_by_key(|r| (r.order, r.n, r.rep));
    Ok(report)
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        format!("panic: {s}")
    } else if let Some(s) = payload.downcast_ref::<String>() {
        format!("panic: {s}")
    } else {
        "panic".to_string()
    }
}

/// One sample, one checkerboard, every φ.
fn replicate(config: &ExperimentConfig, m: usize, n: usize, rep: usize) -> Result<Vec<ResultRecord>> {
    let model = &config.models[m];
    let descriptor = model.descriptor();
    let seed = task_seed(config.master_seed, &descriptor, n, rep);
    let sample = model.sample(n, seed)?;
    let n_res = resolution(n, config.s);
    let cb = ecbc(&to_pseudo(&sample, TiePolicy::SeededJitter, seed), n_res)?;
    config
        .phis
        .iter()
        .enumerate()
        .map(|(p, f)| {
            let start = Instant::now();
            let estimate = lambda_phi(&cb, f)?.value;
            let wall_time_ms = if config.timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
            Ok(ResultRecord {
                model: descriptor.clone(),
                phi: f.descriptor(),
                n,
                rep,
                resolution: n_res,
                estimate,
                wall_time_ms,
                order: (m, p),
            })
        })
        .collect()
}

/// Reference values Λ_φ for every (model, φ) of the config, keyed by descriptors.
pub fn truths(config: &ExperimentConfig) -> Result<HashMap<(String, String), f64>> {
    let pairs: Vec<(&CopulaModel, usize)> =
        config.models.iter().flat_map(|m| (0..config.phis.len()).map(move |p| (m, p))).collect();
    let values = pairs
        .par_iter()
        .map(|&(m, p)| {
            let f = &config.phis[p];
            let t = true_lambda(m, f, config.truth_resolution)?;
            if !t.converged {
                log::warn!(
                    "{} / {}: reference value moved by {:e} between resolutions",
                    m,
                    f.descriptor(),
                    t.error_bound
                );
            }
            Ok(((m.descriptor(), f.descriptor()), t.value))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(values.into_iter().collect())
}

/// Type 7 quantile of sorted data.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-scenario statistics; scenarios without a truth get empty truth fields.
pub fn summarize(records: &[ResultRecord], truths: &HashMap<(String, String), f64>) -> Vec<SummaryRow> {
    let mut groups: Vec<(Scenario, (usize, usize), Vec<f64>)> = Vec::new();
    let mut index: HashMap<Scenario, usize> = HashMap::new();
    for r in records {
        let key = r.scenario();
        let i = *index.entry(key.clone()).or_insert_with(|| {
            groups.push((key, r.order, Vec::new()));
            groups.len() - 1
        });
        groups[i].2.push(r.estimate);
    }
    groups.sort_by_key(|g| (g.1, g.0.n));

    groups
        .into_iter()
        .map(|(scenario, _, mut xs)| {
            xs.sort_by(f64::total_cmp);
            let count = xs.len();
            // Welford: identical inputs give exactly that mean and sd = 0.
            let (mut mean, mut m2) = (0.0, 0.0);
            for (k, &x) in xs.iter().enumerate() {
                let delta = x - mean;
                mean += delta / (k + 1) as f64;
                m2 += delta * (x - mean);
            }
            let sd = if count > 1 { (m2 / (count - 1) as f64).sqrt() } else { 0.0 };
            let true_value = truths.get(&(scenario.model.clone(), scenario.phi.clone())).copied();
            let median_abs_error = true_value.map(|t| {
                let mut e: Vec<f64> = xs.iter().map(|x| (x - t).abs()).collect();
                e.sort_by(f64::total_cmp);
                quantile(&e, 0.5)
            });
            SummaryRow {
                count,
                mean,
                sd,
                min: xs[0],
                q25: quantile(&xs, 0.25),
                median: quantile(&xs, 0.5),
                q75: quantile(&xs, 0.75),
                max: xs[count - 1],
                true_value,
                median_abs_error,
                scenario,
            }
        })
        .collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

/// File-name stem for one (model, φ) panel.
pub fn plot_stem(model: &str, phi: &str) -> String {
    let clean = |s: &str| {
        s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect::<String>()
    };
    format!("{}__{}", clean(model), clean(phi))
}

/// Writes `records.csv`, `summary.csv` and one boxplot SVG per (model, φ).
/// Returns the SVG paths.
pub fn emit(records: &[ResultRecord], summaries: &[SummaryRow], out_dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let mut w = csv::Writer::from_path(out_dir.join("records.csv"))?;
    w.write_record(RECORDS_HEADER)?;
    for r in records {
        w.write_record([
            r.model.clone(),
            r.phi.clone(),
            r.n.to_string(),
            r.rep.to_string(),
            r.resolution.to_string(),
            format!("{:?}", r.estimate),
            format!("{:.3}", r.wall_time_ms),
        ])?;
    }
    w.flush().map_err(io_err(out_dir))?;

    let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    let mut w = csv::Writer::from_path(out_dir.join("summary.csv"))?;
    w.write_record(SUMMARY_HEADER)?;
    for s in summaries {
        w.write_record([
            s.scenario.model.clone(),
            s.scenario.phi.clone(),
            s.scenario.n.to_string(),
            s.count.to_string(),
            format!("{:?}", s.mean),
            format!("{:?}", s.sd),
            format!("{:?}", s.min),
            format!("{:?}", s.q25),
            format!("{:?}", s.median),
            format!("{:?}", s.q75),
            format!("{:?}", s.max),
            opt(s.true_value),
            opt(s.median_abs_error),
        ])?;
    }
    w.flush().map_err(io_err(out_dir))?;

    // Panels in first-seen order, boxes per n ascending.
    let mut panels: Vec<(String, String)> = Vec::new();
    let mut data: HashMap<(String, String), BTreeMap<usize, Vec<f64>>> = HashMap::new();
    for r in records {
        let key = (r.model.clone(), r.phi.clone());
        if !data.contains_key(&key) {
            panels.push(key.clone());
        }
        data.entry(key).or_default().entry(r.n).or_default().push(r.estimate);
    }
    let truth: HashMap<(String, String), f64> = summaries
        .iter()
        .filter_map(|s| s.true_value.map(|t| ((s.scenario.model.clone(), s.scenario.phi.clone()), t)))
        .collect();

    let mut paths = Vec::with_capacity(panels.len());
    for key in panels {
        let svg = plot::boxplot_svg(&format!("{} / {}", key.0, key.1), &data[&key], truth.get(&key).copied());
        let path = out_dir.join(format!("{}.svg", plot_stem(&key.0, &key.1)));
        fs::write(&path, svg).map_err(io_err(&path))?;
        paths.push(path);
    }
    Ok(paths)
}
