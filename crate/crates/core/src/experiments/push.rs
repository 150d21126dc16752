use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::*;
use crate::dsl::Value;
use crate::runtime::{FlowId, Notification, Runtime};
use crate::topology::{stream_rng, LatencyModel, NodeId, Topology, TopologyDoc};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PushConfig {
    pub seed: u64,
    pub latency: LatencyModel,
    pub devices: usize,
    pub fog_counts: Vec<usize>,
    pub tasks_per_device: usize,
    pub service_ms: f64,
}

impl Default for PushConfig {
    fn default() -> Self {
        PushConfig {
            seed: 1,
            latency: LatencyModel::default(),
            devices: 24,
            fog_counts: vec![2, 4, 8],
            tasks_per_device: 4,
            service_ms: 50.0,
        }
    }
}

const WORKER_SRC: &str = "jdata { double work as logger(fog); }
jasync function train(item, source, t) {}";
const SINK_SRC: &str = "jasync function collect(msg) {}";

/// Devices log work items to their fog, the fog processes them one at a
/// time and hands each result to a co-located secondary app over a flow.
/// A sample is the time from logging an item to its handoff.
pub fn run_parallel_push(cfg: &PushConfig, fogs: usize) -> Result<ScenarioResult, ExperimentError> {
    require(cfg.devices >= 1, "devices must be >= 1")?;
    require(fogs >= 1, "fog count must be >= 1")?;
    require(cfg.tasks_per_device >= 1, "tasks_per_device must be >= 1")?;

    // random but balanced: shuffle the devices, then deal them out
    let mut order: Vec<usize> = (1..=cfg.devices).collect();
    order.shuffle(&mut stream_rng(cfg.seed, "push", "assign"));
    let mut doc = TopologyDoc {
        nodes: vec![node("cloud", NodeLevel::Cloud, None)],
        latency: Some(cfg.latency),
        seed: Some(cfg.seed),
        ..Default::default()
    };
    for f in 1..=fogs {
        doc.nodes.push(node(format!("f{f}"), NodeLevel::Fog, Some("cloud")));
    }
    let mut assigned: Vec<(usize, usize)> = order.iter().enumerate().map(|(k, d)| (*d, k % fogs + 1)).collect();
    assigned.sort();
    for (d, f) in &assigned {
        doc.nodes.push(node(format!("d{d}"), NodeLevel::Device, Some(&format!("f{f}"))));
    }
    let topo = Topology::build(&doc)?;
    let all: Vec<NodeId> = topo.nodes().iter().map(|n| n.id.clone()).collect();
    let fog_ids: Vec<NodeId> = topo.fogs().into_iter().cloned().collect();
    let mut rt = Runtime::new(topo)?;
    let worker = rt.deploy(program("trainer", WORKER_SRC), &all)?;
    let mut sink_nodes = vec![NodeId::new("cloud")];
    sink_nodes.extend(fog_ids.iter().cloned());
    let sink = rt.deploy(program("consumer", SINK_SRC), &sink_nodes)?;
    let flows: BTreeMap<NodeId, FlowId> = rt
        .flow_connect(worker, sink, NodeLevel::Fog)?
        .into_iter()
        .map(|ep| (ep.node, ep.id))
        .collect();

    rt.register_handler(worker, "train", cfg.service_ms, move |c| {
        let created = c.arg_num(2).unwrap_or(0.0);
        let flow = flows[c.node()];
        c.flow_write(flow, created).expect("flow is open on this fog");
        Value::Num(created)
    })?;
    rt.on_logger(worker, "work", "train")?;

    for (d, _) in &assigned {
        let dev = NodeId::new(format!("d{d}"));
        for k in 0..cfg.tasks_per_device {
            rt.logger_write(worker, &dev, "work", Value::Num(k as f64))?;
        }
    }
    let notes = rt.run();
    let mut samples = Vec::new();
    for n in notes {
        if let Notification::FlowMessage { flow, at } = n {
            if let Some(Value::Num(created)) = rt.flow_read(flow)? {
                samples.push(at - created);
            }
        }
    }
    Ok(ScenarioResult::new(format!("push_f{fogs}"), cfg.seed, samples, rt.trace()).with_extra("fogs", fogs as f64))
}
