use rand::Rng;
use serde::{Deserialize, Serialize};

use super::*;
use crate::dsl::Value;
use crate::runtime::{AppId, FlowId, Notification, Runtime};
use crate::topology::{stream_rng, LatencyModel, NodeId, Topology, TopologyDoc};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectiveConfig {
    pub seed: u64,
    pub latency: LatencyModel,
    pub devices: usize,
    pub fogs: usize,
    pub period_ms: f64,
    pub duration_ms: f64,
    pub baseline: (f64, f64),
    pub anomaly_rate: f64,
    pub anomaly_max: f64,
    pub threshold: f64,
    pub batch_interval_ms: f64,
    pub batch_cost_ms: f64,
}

impl Default for SelectiveConfig {
    fn default() -> Self {
        SelectiveConfig {
            seed: 1,
            latency: LatencyModel::default(),
            devices: 24,
            fogs: 1,
            period_ms: 100.0,
            duration_ms: 100_000.0,
            baseline: (60.0, 100.0),
            anomaly_rate: 0.05,
            anomaly_max: 160.0,
            threshold: 100.0,
            batch_interval_ms: 5_000.0,
            batch_cost_ms: 0.1,
        }
    }
}

impl SelectiveConfig {
    fn check(&self) -> Result<(), ExperimentError> {
        require(self.devices >= 1 && self.fogs >= 1, "devices and fogs must be >= 1")?;
        require(self.period_ms > 0.0, "period_ms must be > 0")?;
        require(self.batch_interval_ms > 0.0, "batch_interval_ms must be > 0")?;
        require((0.0..=1.0).contains(&self.anomaly_rate), "anomaly_rate must be in [0, 1]")?;
        require(self.baseline.0 <= self.baseline.1, "baseline must be a range")?;
        require(self.anomaly_max > self.threshold, "anomaly_max must exceed threshold")
    }

    /// Heart-rate samples `(t_ms, bpm)` for one device.
    pub fn stream(&self, device: &str) -> Vec<(f64, f64)> {
        let mut rng = stream_rng(self.seed, device, "heart-rate");
        let phase = rng.gen_range(0.0..self.period_ms);
        let mut out = Vec::new();
        let mut t = phase;
        while t < self.duration_ms {
            let bpm = if rng.gen_bool(self.anomaly_rate) {
                // (threshold, max]
                self.anomaly_max - rng.gen_range(0.0..self.anomaly_max - self.threshold)
            } else {
                rng.gen_range(self.baseline.0..=self.baseline.1)
            };
            out.push((t, bpm));
            t += self.period_ms;
        }
        out
    }
}

const REACTIVE_SRC: &str = "jdata {
    double hr as logger(device);
    double alerts as logger(fog);
}
jasync function filter(v, source, t) {}
jasync function detect(v, source, t) {}";

const BATCH_SRC: &str = "jdata { double hr as logger(fog); }
jasync function drain() {}";

const LISTENER_SRC: &str = "jasync function listen(msg) {}";

struct Setup {
    rt: Runtime,
    app: AppId,
    devices: Vec<NodeId>,
    fogs: Vec<NodeId>,
    flows: BTreeMap<NodeId, FlowId>,
}

fn setup(cfg: &SelectiveConfig, src: &str) -> Result<Setup, ExperimentError> {
    let mut doc = TopologyDoc::three_level(cfg.fogs, 0);
    for d in 0..cfg.devices {
        let f = d % cfg.fogs + 1;
        doc.nodes
            .push(node(format!("d{}", d + 1), NodeLevel::Device, Some(&format!("f{f}"))));
    }
    doc.latency = Some(cfg.latency);
    doc.seed = Some(cfg.seed);
    let topo = Topology::build(&doc)?;
    let all: Vec<NodeId> = topo.nodes().iter().map(|n| n.id.clone()).collect();
    let fogs: Vec<NodeId> = topo.fogs().into_iter().cloned().collect();
    let devices: Vec<NodeId> = topo.devices().into_iter().cloned().collect();
    let mut rt = Runtime::new(topo)?;
    let app = rt.deploy(program("monitor", src), &all)?;
    let mut listener_nodes = vec![NodeId::new("cloud")];
    listener_nodes.extend(fogs.iter().cloned());
    let listener = rt.deploy(program("listener", LISTENER_SRC), &listener_nodes)?;
    let flows = rt
        .flow_connect(app, listener, NodeLevel::Fog)?
        .into_iter()
        .map(|ep| (ep.node, ep.id))
        .collect();
    Ok(Setup {
        rt,
        app,
        devices,
        fogs,
        flows,
    })
}

fn write_streams(cfg: &SelectiveConfig, s: &mut Setup) -> Result<usize, ExperimentError> {
    let mut anomalies = 0;
    for d in s.devices.clone() {
        for (t, bpm) in cfg.stream(d.as_str()) {
            anomalies += usize::from(bpm > cfg.threshold);
            s.rt.logger_write_at(t, s.app, &d, "hr", Value::Num(bpm))?;
        }
    }
    Ok(anomalies)
}

fn collect(s: &mut Setup, notes: Vec<Notification>) -> Result<Vec<f64>, ExperimentError> {
    let mut out = Vec::new();
    for n in notes {
        if let Notification::FlowMessage { flow, .. } = n {
            if let Some(Value::Num(lat)) = s.rt.flow_read(flow)? {
                out.push(lat);
            }
        }
    }
    Ok(out)
}

/// Abnormal-reading detection two ways: devices filter every sample and log
/// only anomalies to the fog, or devices log everything and the fog scans its
/// queue on a fixed interval. Each detection is forwarded to a listener app
/// over a flow; a sample is generation-to-detection time.
pub fn run_selective_logging(cfg: &SelectiveConfig) -> Result<(ScenarioResult, ScenarioResult), ExperimentError> {
    cfg.check()?;
    Ok((reactive(cfg)?, batch(cfg)?))
}

fn reactive(cfg: &SelectiveConfig) -> Result<ScenarioResult, ExperimentError> {
    let mut s = setup(cfg, REACTIVE_SRC)?;
    let threshold = cfg.threshold;
    s.rt.register_handler(s.app, "filter", 0.0, move |c| {
        let v = c.arg_num(0).unwrap_or(0.0);
        if v > threshold {
            c.log("alerts", v).expect("alerts is a fog logger");
        }
        Value::Num(v)
    })?;
    let flows = s.flows.clone();
    s.rt.register_handler(s.app, "detect", 0.0, move |c| {
        let latency = c.now() - c.arg_num(2).unwrap_or(0.0);
        c.flow_write(flows[c.node()], latency).expect("flow is open");
        Value::Num(latency)
    })?;
    s.rt.on_logger(s.app, "hr", "filter")?;
    s.rt.on_logger(s.app, "alerts", "detect")?;
    let anomalies = write_streams(cfg, &mut s)?;
    let notes = s.rt.run();
    let samples = collect(&mut s, notes)?;
    Ok(ScenarioResult::new("selective_reactive", cfg.seed, samples, s.rt.trace()).with_extra("anomalies", anomalies as f64))
}

fn batch(cfg: &SelectiveConfig) -> Result<ScenarioResult, ExperimentError> {
    let mut s = setup(cfg, BATCH_SRC)?;
    let (threshold, cost) = (cfg.threshold, cfg.batch_cost_ms);
    let flows = s.flows.clone();
    s.rt.register_handler(s.app, "drain", 0.0, move |c| {
        let recs = c.records("hr").expect("drain runs on a fog");
        let done = c.get_num("drained").unwrap_or(0.0) as usize;
        let start = c.now();
        let flow = flows[c.node()];
        for (k, r) in recs.iter().skip(done).enumerate() {
            let v = r.value.as_num().unwrap_or(0.0);
            if v > threshold {
                let detected = start + cost * (k + 1) as f64;
                c.flow_write(flow, detected - r.t_ms).expect("flow is open");
            }
        }
        c.set("drained", recs.len() as f64);
        Value::Num((recs.len() - done) as f64)
    })?;
    let anomalies = write_streams(cfg, &mut s)?;
    // one extra interval picks up records still in flight at the end
    let drains = (cfg.duration_ms / cfg.batch_interval_ms).ceil() as u64 + 1;
    for k in 1..=drains {
        s.rt.schedule_timer(k as f64 * cfg.batch_interval_ms, k)?;
    }
    let mut samples = Vec::new();
    while let Some(n) = s.rt.step() {
        match n {
            Notification::Timer { .. } => {
                for f in s.fogs.clone() {
                    s.rt.run_local(s.app, &f, "drain", vec![])?;
                }
            }
            other => samples.extend(collect(&mut s, vec![other])?),
        }
    }
    Ok(ScenarioResult::new("selective_batch", cfg.seed, samples, s.rt.trace()).with_extra("anomalies", anomalies as f64))
}
