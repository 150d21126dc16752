//! End-to-end scenario drivers built on [`crate::runtime`].

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{parse_program_named, ProgramDecl};
use crate::runtime::RuntimeError;
use crate::topology::{NodeDoc, NodeLevel, TopologyError};

mod failover;
mod parking;
mod push;
mod selective;
mod turnaround;

pub use failover::{run_failover_scenario, FailoverConfig};
pub use parking::{run_parking_scenario, ParkingConfig};
pub use push::{run_parallel_push, PushConfig};
pub use selective::{run_selective_logging, SelectiveConfig};
pub use turnaround::{run_turnaround, TurnaroundConfig, TurnaroundScenario};

pub const SCENARIOS: [&str; 5] = ["turnaround", "push", "selective", "failover", "parking"];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: Option<f64>,
    pub p50: Option<f64>,
    pub p94: Option<f64>,
    pub p99: Option<f64>,
}

impl Summary {
    pub fn of(samples: &[f64]) -> Summary {
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = (!sorted.is_empty()).then(|| sorted.iter().sum::<f64>() / sorted.len() as f64);
        Summary {
            count: sorted.len(),
            mean,
            p50: percentile_sorted(&sorted, 50.0),
            p94: percentile_sorted(&sorted, 94.0),
            p99: percentile_sorted(&sorted, 99.0),
        }
    }
}

/// Nearest-rank percentile, `p` in (0, 100].
pub fn percentile(samples: &[f64], p: f64) -> Option<f64> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, p)
}

fn percentile_sorted(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Empirical CDF as (latency, fraction <= latency), one point per distinct
/// sample value.
pub fn cdf_points(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, x) in sorted.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = frac,
            _ => out.push((*x, frac)),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub name: String,
    pub seed: u64,
    pub samples: Vec<f64>,
    pub summary: Summary,
    pub cdf: Vec<(f64, f64)>,
    pub trace_hash: String,
    pub extras: BTreeMap<String, f64>,
    #[serde(skip)]
    pub trace_ndjson: String,
}

impl ScenarioResult {
    pub fn new(name: impl Into<String>, seed: u64, samples: Vec<f64>, trace: &crate::topology::SimTrace) -> Self {
        ScenarioResult {
            name: name.into(),
            seed,
            summary: Summary::of(&samples),
            cdf: cdf_points(&samples),
            samples,
            trace_hash: trace.hash(),
            extras: BTreeMap::new(),
            trace_ndjson: trace.to_ndjson(),
        }
    }

    pub fn with_extra(mut self, key: &str, value: f64) -> Self {
        self.extras.insert(key.to_string(), value);
        self
    }

    pub fn mean(&self) -> f64 {
        self.summary.mean.unwrap_or(f64::NAN)
    }
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    name: &'a str,
    seed: u64,
    summary: &'a Summary,
    trace_hash: &'a str,
    extras: &'a BTreeMap<String, f64>,
}

/// Writes `samples.csv`, `summary.json`, `cdf.csv` and `trace.ndjson` into
/// `dir`, creating it if needed.
pub fn emit_results(result: &ScenarioResult, dir: &Path) -> Result<(), ExperimentError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| ExperimentError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;

    let mut samples = String::from("sample_ms\n");
    for s in &result.samples {
        samples.push_str(&format!("{s}\n"));
    }
    let mut cdf = String::from("latency_ms,fraction\n");
    for (x, f) in &result.cdf {
        cdf.push_str(&format!("{x},{f}\n"));
    }
    let summary = serde_json::to_string_pretty(&SummaryFile {
        name: &result.name,
        seed: result.seed,
        summary: &result.summary,
        trace_hash: &result.trace_hash,
        extras: &result.extras,
    })
    .expect("summary serializes");

    for (file, body) in [
        ("samples.csv", samples),
        ("cdf.csv", cdf),
        ("summary.json", summary + "\n"),
        ("trace.ndjson", result.trace_ndjson.clone()),
    ] {
        let p = dir.join(file);
        fs::write(&p, body).map_err(io(&p))?;
    }
    Ok(())
}

/// Runs a scenario by name. `config` is the scenario's JSON config; missing
/// fields take their defaults.
pub fn run_experiment(name: &str, config: Option<&str>, seed_override: Option<u64>) -> Result<Vec<ScenarioResult>, ExperimentError> {
    fn load<T: Default + for<'de> Deserialize<'de>>(config: Option<&str>) -> Result<T, ExperimentError> {
        match config {
            None => Ok(T::default()),
            Some(text) => serde_json::from_str(text).map_err(|e| ExperimentError::InvalidConfig(e.to_string())),
        }
    }
    match name {
        "turnaround" => {
            let mut cfg: TurnaroundConfig = load(config)?;
            cfg.seed = seed_override.unwrap_or(cfg.seed);
            cfg.scenarios.clone().into_iter().map(|s| run_turnaround(s, &cfg)).collect()
        }
        "push" => {
            let mut cfg: PushConfig = load(config)?;
            cfg.seed = seed_override.unwrap_or(cfg.seed);
            cfg.fog_counts.clone().into_iter().map(|f| run_parallel_push(&cfg, f)).collect()
        }
        "selective" => {
            let mut cfg: SelectiveConfig = load(config)?;
            cfg.seed = seed_override.unwrap_or(cfg.seed);
            let (r, b) = run_selective_logging(&cfg)?;
            Ok(vec![r, b])
        }
        "failover" => {
            let mut cfg: FailoverConfig = load(config)?;
            cfg.seed = seed_override.unwrap_or(cfg.seed);
            Ok(vec![run_failover_scenario(&cfg)?])
        }
        "parking" => {
            let mut cfg: ParkingConfig = load(config)?;
            cfg.seed = seed_override.unwrap_or(cfg.seed);
            Ok(vec![run_parking_scenario(&cfg)?])
        }
        other => Err(ExperimentError::UnknownScenario(other.to_string())),
    }
}

fn node(id: impl Into<String>, level: NodeLevel, parent: Option<&str>) -> NodeDoc {
    NodeDoc {
        id: id.into(),
        level,
        parent: parent.map(str::to_string),
        ..Default::default()
    }
}

fn program(name: &str, src: &str) -> ProgramDecl {
    parse_program_named(name, src).expect("built-in scenario program parses")
}

fn require(ok: bool, msg: &str) -> Result<(), ExperimentError> {
    if ok {
        Ok(())
    } else {
        Err(ExperimentError::InvalidConfig(msg.into()))
    }
}
