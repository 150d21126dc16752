use rand::Rng;
use serde::{Deserialize, Serialize};

use super::*;
use crate::dsl::Value;
use crate::runtime::{Direction, FlowId, Notification, Runtime};
use crate::topology::{stream_rng, LatencyModel, NodeId, Topology, TopologyDoc};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParkingConfig {
    pub seed: u64,
    pub latency: LatencyModel,
    pub zones: usize,
    pub spots_per_zone: usize,
    pub cars_per_zone: usize,
    pub requests_per_car: usize,
    /// Probability that a spot starts out occupied.
    pub initial_occupancy: f64,
    pub service_ms: f64,
    /// Requests are spread uniformly over this window after start-up.
    pub request_window_ms: f64,
}

impl Default for ParkingConfig {
    fn default() -> Self {
        ParkingConfig {
            seed: 1,
            latency: LatencyModel::default(),
            zones: 2,
            spots_per_zone: 10,
            cars_per_zone: 5,
            requests_per_car: 1,
            initial_occupancy: 0.5,
            service_ms: 1.0,
            request_window_ms: 2_000.0,
        }
    }
}

const SENSING_SRC: &str = "jdata { int occupancy as logger(fog); }
jasync function relay(v, source, t) {}";

const ALLOCATING_SRC: &str = "jdata {
    int zoneFree as logger(cloud);
    string escalations as logger(cloud);
}
jasync function update(msg) {}
jasync function allocate(msg) {}
jasync function global(msg, source, t) {}
jasync function deliver(msg) {}";

const CAR_SRC: &str = "jdata { string requests as logger(fog); }
jasync function forward(car, source, t) {}
jasync function reply(msg) {}
jasync function notify(msg) {}";

/// Startup settles sensor state before the first request.
const START_MS: f64 = 100.0;

/// Three apps share each zone fog: Sensing reports spot occupancy, Car
/// carries requests from cars, Allocating matches them. They talk over
/// flows on the fog. A zone with no free spot escalates to the cloud,
/// which suggests the zone with the most free spots it knows of.
///
/// A sample is the time from a car's request to the answer reaching it.
pub fn run_parking_scenario(cfg: &ParkingConfig) -> Result<ScenarioResult, ExperimentError> {
    require(cfg.zones >= 1, "zones must be >= 1")?;
    require((0.0..=1.0).contains(&cfg.initial_occupancy), "initial_occupancy must be in [0, 1]")?;
    require(cfg.request_window_ms >= 0.0, "request_window_ms must be >= 0")?;

    let zone = |z: usize| format!("z{z}");
    let mut doc = TopologyDoc {
        nodes: vec![node("cloud", NodeLevel::Cloud, None)],
        latency: Some(cfg.latency),
        seed: Some(cfg.seed),
        ..Default::default()
    };
    let (mut sensors, mut cars) = (Vec::new(), Vec::new());
    for z in 1..=cfg.zones {
        doc.nodes.push(node(zone(z), NodeLevel::Fog, Some("cloud")));
        for k in 1..=cfg.spots_per_zone {
            let id = format!("s{z}_{k}");
            doc.nodes.push(node(&id, NodeLevel::Device, Some(&zone(z))));
            sensors.push(NodeId::new(id));
        }
        for k in 1..=cfg.cars_per_zone {
            let id = format!("c{z}_{k}");
            doc.nodes.push(node(&id, NodeLevel::Device, Some(&zone(z))));
            cars.push(NodeId::new(id));
        }
    }
    let topo = Topology::build(&doc)?;
    let cloud = NodeId::new("cloud");
    let fogs: Vec<NodeId> = topo.fogs().into_iter().cloned().collect();
    let mut infra = vec![cloud.clone()];
    infra.extend(fogs.iter().cloned());
    let with = |extra: &[NodeId]| {
        let mut v = infra.clone();
        v.extend(extra.iter().cloned());
        v
    };
    let mut rt = Runtime::new(topo)?;
    let sensing = rt.deploy(program("Sensing", SENSING_SRC), &with(&sensors))?;
    let allocating = rt.deploy(program("Allocating", ALLOCATING_SRC), &infra)?;
    let car = rt.deploy(program("Car", CAR_SRC), &with(&cars))?;

    let flows_of = |rt: &mut Runtime, a, b| -> Result<BTreeMap<NodeId, FlowId>, ExperimentError> {
        Ok(rt.flow_connect(a, b, NodeLevel::Fog)?.into_iter().map(|e| (e.node, e.id)).collect())
    };
    let occupancy_flow = flows_of(&mut rt, sensing, allocating)?;
    let request_flow = flows_of(&mut rt, car, allocating)?;
    let answer_flow = flows_of(&mut rt, allocating, car)?;

    // Sensing: forward each occupancy reading to the allocator
    let f = occupancy_flow.clone();
    rt.register_handler(sensing, "relay", 0.0, move |c| {
        let msg = format!("{}={}", text(&c.args()[1]), text(&c.args()[0]));
        c.flow_write(f[c.node()], Value::Str(msg)).expect("flow is open");
        Value::Num(0.0)
    })?;
    rt.on_logger(sensing, "occupancy", "relay")?;

    // Allocating, fog side
    rt.register_handler(allocating, "update", 0.0, |c| {
        let msg = text(&c.args()[0]);
        let (spot, v) = msg.split_once('=').expect("spot=value");
        c.set(&format!("spot:{spot}"), v.parse::<f64>().unwrap_or(1.0));
        let free = free_spots(c).len() as f64;
        c.log("zoneFree", free).expect("zoneFree is a cloud logger");
        Value::Num(free)
    })?;
    for flow in occupancy_flow.values() {
        rt.on_flow(*flow, "update")?;
    }
    let f = answer_flow.clone();
    rt.register_handler(allocating, "allocate", cfg.service_ms, move |c| {
        let msg = text(&c.args()[0]);
        let Some(spot) = free_spots(c).into_iter().next() else {
            let zone = c.node().to_string();
            c.log("escalations", Value::Str(format!("{zone}|{msg}")))
                .expect("escalations is a cloud logger");
            return Value::Str("escalated".into());
        };
        c.set(&format!("spot:{spot}"), 1.0);
        let free = free_spots(c).len() as f64;
        c.log("zoneFree", free).expect("zoneFree is a cloud logger");
        c.flow_write(f[c.node()], Value::Str(format!("{msg}|local|{spot}")))
            .expect("flow is open");
        Value::Str(spot)
    })?;
    for flow in request_flow.values() {
        rt.on_flow(*flow, "allocate")?;
    }
    let f = answer_flow.clone();
    rt.register_handler(allocating, "deliver", 0.0, move |c| {
        let msg = c.args()[0].clone();
        c.flow_write(f[c.node()], msg.clone()).expect("flow is open");
        msg
    })?;

    // Allocating, cloud side: suggest the zone with the most free spots
    rt.register_handler(allocating, "global", cfg.service_ms, |c| {
        let msg = text(&c.args()[0]);
        let (from, rest) = msg.split_once('|').expect("zone|car|t");
        let mut best: Option<(f64, String)> = None;
        for e in c.snapshot("zoneFree").expect("cloud reads zoneFree") {
            if e.source == from {
                continue;
            }
            let taken = c.get_num(&format!("taken:{}", e.source)).unwrap_or(0.0);
            let free = e.value.as_num().unwrap_or(0.0) - taken;
            if free > 0.0 && best.as_ref().is_none_or(|b| free > b.0) {
                best = Some((free, e.source.clone()));
            }
        }
        let answer = match &best {
            Some((_, z)) => {
                let key = format!("taken:{z}");
                let taken = c.get_num(&key).unwrap_or(0.0);
                c.set(&key, taken + 1.0);
                format!("{rest}|remote|{z}")
            }
            None => format!("{rest}|none|-"),
        };
        let target = NodeId::new(from);
        c.call("deliver", vec![Value::Str(answer.clone())], Direction::To(target))
            .expect("requesting zone is below the cloud");
        Value::Str(answer)
    })?;
    rt.on_logger(allocating, "escalations", "global")?;

    // Car
    let f = request_flow.clone();
    rt.register_handler(car, "forward", 0.0, move |c| {
        let msg = format!("{}|{}", text(&c.args()[1]), text(&c.args()[2]));
        c.flow_write(f[c.node()], Value::Str(msg)).expect("flow is open");
        Value::Num(0.0)
    })?;
    rt.on_logger(car, "requests", "forward")?;
    rt.register_handler(car, "reply", 0.0, |c| {
        let msg = c.args()[0].clone();
        let to = NodeId::new(text(&msg).split('|').next().unwrap_or_default());
        c.call("notify", vec![msg.clone()], Direction::To(to))
            .expect("car is below its zone");
        msg
    })?;
    for flow in answer_flow.values() {
        rt.on_flow(*flow, "reply")?;
    }
    rt.register_handler(car, "notify", 0.0, |c| {
        let msg = text(&c.args()[0]);
        let parts: Vec<&str> = msg.split('|').collect();
        let issued: f64 = parts[1].parse().unwrap_or(0.0);
        Value::Str(format!("{}|{}", parts[2], c.now() - issued))
    })?;

    let mut rng = stream_rng(cfg.seed, "parking", "occupancy");
    for s in &sensors {
        let occupied = rng.gen_bool(cfg.initial_occupancy);
        rt.logger_write(sensing, s, "occupancy", Value::Num(f64::from(u8::from(occupied))))?;
    }
    let mut rng = stream_rng(cfg.seed, "parking", "requests");
    for c in &cars {
        for _ in 0..cfg.requests_per_car {
            let t = START_MS + rng.gen_range(0.0..=cfg.request_window_ms);
            rt.logger_write_at(t, car, c, "requests", Value::Str(c.to_string()))?;
        }
    }

    let mut samples = Vec::new();
    let (mut escalated, mut esc_sum, mut local_sum, mut unserved) = (0usize, 0.0, 0.0, 0usize);
    for n in rt.run() {
        if let Notification::Executed { func, value, .. } = n {
            if func != "notify" || value.as_str().is_none() {
                continue;
            }
            let v = text(&value);
            let (kind, lat) = v.split_once('|').expect("kind|latency");
            let lat: f64 = lat.parse().unwrap_or(f64::NAN);
            samples.push(lat);
            match kind {
                "local" => local_sum += lat,
                "none" => {
                    unserved += 1;
                    escalated += 1;
                    esc_sum += lat;
                }
                _ => {
                    escalated += 1;
                    esc_sum += lat;
                }
            }
        }
    }
    let local = samples.len() - escalated;
    let mean_or_nan = |sum: f64, n: usize| if n > 0 { sum / n as f64 } else { f64::NAN };
    let rate = if samples.is_empty() {
        0.0
    } else {
        escalated as f64 / samples.len() as f64
    };
    Ok(ScenarioResult::new("parking", cfg.seed, samples, rt.trace())
        .with_extra("escalation_rate", rate)
        .with_extra("local_mean_ms", mean_or_nan(local_sum, local))
        .with_extra("escalated_mean_ms", mean_or_nan(esc_sum, escalated))
        .with_extra("unserved", unserved as f64))
}

fn free_spots(c: &crate::runtime::Ctx<'_>) -> Vec<String> {
    c.keys("spot:")
        .into_iter()
        .filter(|k| c.get_num(k) == Some(0.0))
        .map(|k| k["spot:".len()..].to_string())
        .collect()
}

fn text(v: &Value) -> String {
    match v {
        Value::Str(s) => s.clone(),
        Value::Num(n) => n.to_string(),
    }
}
