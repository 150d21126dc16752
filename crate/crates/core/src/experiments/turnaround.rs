use serde::{Deserialize, Serialize};

use super::*;
use crate::dsl::Value;
use crate::runtime::{CallId, Notification, Runtime};
use crate::topology::{LatencyModel, NodeId, Topology, TopologyDoc};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TurnaroundScenario {
    FogOnly,
    FogCloud,
    FogCloudCache,
    CloudOnly,
}

impl TurnaroundScenario {
    pub const ALL: [TurnaroundScenario; 4] = [
        TurnaroundScenario::FogOnly,
        TurnaroundScenario::FogCloud,
        TurnaroundScenario::FogCloudCache,
        TurnaroundScenario::CloudOnly,
    ];

    pub fn parse(s: &str) -> Option<TurnaroundScenario> {
        TurnaroundScenario::ALL
            .into_iter()
            .find(|x| format!("{x:?}").eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TurnaroundConfig {
    pub seed: u64,
    pub latency: LatencyModel,
    pub requests: usize,
    /// Distinct resource keys, requested round-robin.
    pub keys: usize,
    pub devices: usize,
    pub service_ms: f64,
    pub scenarios: Vec<TurnaroundScenario>,
}

impl Default for TurnaroundConfig {
    fn default() -> Self {
        TurnaroundConfig {
            seed: 1,
            latency: LatencyModel::default(),
            requests: 10_000,
            keys: 1,
            devices: 1,
            service_ms: 0.0,
            scenarios: TurnaroundScenario::ALL.to_vec(),
        }
    }
}

const SRC: &str = "jcond {
    fogRun: sys.type == \"fog\";
    cloudRun: sys.type == \"cloud\";
}
jsync {fogRun} string fetchFog(key) {}
jsync {cloudRun} string fetchCloud(key) {}
";

/// Sequential request/response round trips from devices to the resource
/// holder. Each sample is the time from issuing a request to its result
/// reaching the device.
pub fn run_turnaround(scenario: TurnaroundScenario, cfg: &TurnaroundConfig) -> Result<ScenarioResult, ExperimentError> {
    require(cfg.devices >= 1, "devices must be >= 1")?;
    require(cfg.keys >= 1, "keys must be >= 1")?;
    let cloud_only = scenario == TurnaroundScenario::CloudOnly;
    let mut doc = TopologyDoc {
        nodes: vec![node("cloud", NodeLevel::Cloud, None)],
        latency: Some(cfg.latency),
        seed: Some(cfg.seed),
        ..Default::default()
    };
    if !cloud_only {
        doc.nodes.push(node("fog", NodeLevel::Fog, Some("cloud")));
    }
    let parent = if cloud_only { "cloud" } else { "fog" };
    for d in 1..=cfg.devices {
        doc.nodes.push(node(format!("d{d}"), NodeLevel::Device, Some(parent)));
    }
    let topo = Topology::build(&doc)?;
    let nodes: Vec<NodeId> = topo.nodes().iter().map(|n| n.id.clone()).collect();
    let mut rt = Runtime::new(topo)?;
    let app = rt.deploy(program("resource", SRC), &nodes)?;
    rt.register_handler(app, "fetchFog", cfg.service_ms, |c| {
        let key = c.args()[0].clone();
        c.get(&format!("cache:{key}")).cloned().unwrap_or(Value::Str("miss".into()))
    })?;
    rt.register_handler(app, "fetchCloud", cfg.service_ms, |c| Value::Str(format!("data:{}", c.args()[0])))?;

    let fog = NodeId::new("fog");
    let mut samples = Vec::with_capacity(cfg.requests);
    let (mut hits, mut hit_sum) = (0usize, 0.0);
    for i in 0..cfg.requests {
        let device = NodeId::new(format!("d{}", i % cfg.devices + 1));
        let key = format!("k{}", i % cfg.keys);
        let cached = scenario == TurnaroundScenario::FogCloudCache && rt.kv_get(app, &fog, &format!("cache:{key}")).is_some();
        let func = match scenario {
            TurnaroundScenario::FogOnly => "fetchFog",
            TurnaroundScenario::FogCloudCache if cached => "fetchFog",
            _ => "fetchCloud",
        };
        let id = rt.call_up(app, &device, func, vec![Value::Str(key.clone())])?;
        let out = wait_for(&mut rt, id);
        let Some(value) = out.values().first().map(|(_, v)| (*v).clone()) else {
            continue;
        };
        let sample = out.resumed_ms - out.issued_ms;
        samples.push(sample);
        if cached {
            hits += 1;
            hit_sum += sample;
        } else if scenario == TurnaroundScenario::FogCloudCache {
            // the fog keeps what it relayed
            rt.kv_set(app, &fog, &format!("cache:{key}"), value)?;
        }
    }
    let mut res = ScenarioResult::new(format!("turnaround_{scenario:?}"), cfg.seed, samples, rt.trace());
    if scenario == TurnaroundScenario::FogCloudCache {
        res = res
            .with_extra("hits", hits as f64)
            .with_extra("hit_mean_ms", if hits > 0 { hit_sum / hits as f64 } else { f64::NAN });
    }
    Ok(res)
}

pub(super) fn wait_for(rt: &mut Runtime, id: CallId) -> crate::runtime::CallOutcome {
    if let Some(o) = rt.outcome(id) {
        return o.clone();
    }
    while let Some(n) = rt.step() {
        if let Notification::CallDone { outcome } = n {
            if outcome.call == id {
                return outcome;
            }
        }
    }
    rt.outcome(id).cloned().expect("every call finishes by its deadline")
}
