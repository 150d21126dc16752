use serde::{Deserialize, Serialize};

use super::*;
use crate::allocator::{solve_exact, AllocationInstance, FogSpec, InstanceDoc, RouteTarget, RouterState};
use crate::dsl::Value;
use crate::runtime::{AttachPolicy, Attachment, Notification, Runtime};
use crate::topology::{LatencyModel, NodeId, Topology, TopologyDoc};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FailoverConfig {
    pub seed: u64,
    pub latency: LatencyModel,
    pub fogs: usize,
    pub ticks: usize,
    pub tick_ms: f64,
    pub service_ms: f64,
    /// When the primary fog goes down; `None` runs without a failure.
    pub fail_at_ms: Option<f64>,
    pub detect_timeout_ms: f64,
}

impl Default for FailoverConfig {
    fn default() -> Self {
        FailoverConfig {
            seed: 1,
            latency: LatencyModel::default(),
            fogs: 3,
            ticks: 100,
            tick_ms: 20.0,
            service_ms: 1.0,
            fail_at_ms: Some(1000.0),
            detect_timeout_ms: 15.0,
        }
    }
}

const SRC: &str = "jdata {
    int saveState as logger(cloud);
    int progress as logger(fog);
    int recoveryState as broadcaster;
}
jcond {
    fogRun: sys.type == \"fog\";
    cloudRun: sys.type == \"cloud\";
}
jasync function {fogRun} fogCompute() {}
jasync function {cloudRun} cloudCheck(newUpdate, source, t) {}";

const DEVICE: &str = "d1";

/// One device drives a long computation on its fog with periodic ticks. Each
/// tick advances the fog's progress, logs it to the cloud and keeps a fog
/// level copy that is replicated to the fog's shadows. The cloud answers any
/// regression by broadcasting the best progress it has seen. The primary fog
/// is killed mid-run; the device's router detects it and reattaches to a
/// shadow fog, which picks up from its replica or from the broadcast value.
///
/// The single sample is the recovery gap: time from the failure until the
/// new fog's progress is back at the last checkpoint the cloud received.
pub fn run_failover_scenario(cfg: &FailoverConfig) -> Result<ScenarioResult, ExperimentError> {
    require(cfg.fogs >= 2, "failover needs at least two fogs")?;
    require(cfg.ticks >= 1, "ticks must be >= 1")?;
    require(cfg.tick_ms > 0.0, "tick_ms must be > 0")?;

    let fog_ids: Vec<String> = (1..=cfg.fogs).map(|f| format!("f{f}")).collect();
    let (inst, alloc) = placement(&fog_ids)?;
    let mut router = RouterState::from_allocation(&inst, &alloc, "cloud", cfg.detect_timeout_ms);
    let primary = router.primary(DEVICE).expect("device is allocated").to_string();
    let shadows: Vec<String> = router.shadows(DEVICE).unwrap_or_default().to_vec();

    let mut doc = TopologyDoc {
        nodes: vec![node("cloud", NodeLevel::Cloud, None)],
        latency: Some(cfg.latency),
        seed: Some(cfg.seed),
        ..Default::default()
    };
    for f in &fog_ids {
        doc.nodes.push(node(f, NodeLevel::Fog, Some("cloud")));
    }
    doc.nodes.push(node(DEVICE, NodeLevel::Device, Some(&primary)));
    let mut topo = Topology::build(&doc)?;
    if let Some(t) = cfg.fail_at_ms {
        topo.inject_failure(&NodeId::new(&primary), t, None)?;
    }
    let all: Vec<NodeId> = topo.nodes().iter().map(|n| n.id.clone()).collect();
    let mut rt = Runtime::new(topo)?;
    let app = rt.deploy(program("longjob", SRC), &all)?;
    for j in alloc.active_fogs() {
        let sh = alloc.shadows_of(j).into_iter().map(|k| NodeId::new(&inst.fogs[k].id)).collect();
        rt.set_shadows(&NodeId::new(&inst.fogs[j].id), sh)?;
    }

    rt.register_handler(app, "fogCompute", cfg.service_ms, |c| {
        let mut computation = match c.get_num("computation") {
            Some(v) => v,
            None => {
                // first tick here: pick up what a failed primary replicated
                let held = c.records("progress").expect("progress is a fog logger");
                let best = held.iter().filter_map(|r| r.value.as_num()).fold(0.0, f64::max);
                if best > 0.0 {
                    c.set("resumed", best);
                }
                best
            }
        } + 1.0;
        c.log("saveState", computation).expect("saveState is a cloud logger");
        c.log("progress", computation).expect("progress is a fog logger");
        if let Some((_, old)) = c.received("recoveryState") {
            let old = old.as_num().unwrap_or(0.0);
            if old > computation {
                computation = old;
                if c.get("resumed").is_none() {
                    c.set("resumed", old);
                }
            }
        }
        c.set("computation", computation);
        Value::Num(computation)
    })?;
    rt.register_handler(app, "cloudCheck", 0.0, |c| {
        let new_update = c.arg_num(0).unwrap_or(0.0);
        let best = c.get_num("saveStateLog").unwrap_or(0.0);
        if new_update < best {
            c.broadcast("recoveryState", best).expect("cloud may broadcast");
        } else {
            c.set("saveStateLog", new_update);
        }
        Value::Num(best.max(new_update))
    })?;
    rt.on_logger(app, "saveState", "cloudCheck")?;

    let device = NodeId::new(DEVICE);
    rt.attach_device(
        &device,
        AttachPolicy::Allocation {
            primary: NodeId::new(&primary),
            shadows: shadows.iter().map(NodeId::new).collect(),
        },
    )?;
    for i in 0..cfg.ticks {
        rt.schedule_timer(i as f64 * cfg.tick_ms, 2 * i as u64)?;
    }

    let fail_at = cfg.fail_at_ms.unwrap_or(f64::INFINITY);
    let mut held: BTreeMap<u64, Attachment> = BTreeMap::new();
    let mut execs: Vec<(NodeId, f64, f64)> = Vec::new();
    while let Some(n) = rt.step() {
        match n {
            // even tags are ticks, odd tags release a tick delayed by probes
            Notification::Timer { tag, at } if tag % 2 == 0 => {
                let topo = rt.topology().clone();
                let mut oracle = |fog: &str, t: f64| !topo.is_down(&NodeId::new(fog), t);
                let route = router.route_request(DEVICE, at, &mut oracle).expect("device is routed");
                let want = match &route.target {
                    RouteTarget::Fog(f) => Attachment::Fog(NodeId::new(f)),
                    RouteTarget::Cloud(c) => Attachment::Cloud(NodeId::new(c)),
                };
                if route.decided_at_ms > at {
                    held.insert(tag + 1, want);
                    rt.schedule_timer(route.decided_at_ms, tag + 1)?;
                } else {
                    issue(&mut rt, app, &device, &want)?;
                }
            }
            Notification::Timer { tag, .. } => {
                if let Some(want) = held.remove(&tag) {
                    issue(&mut rt, app, &device, &want)?;
                }
            }
            Notification::Executed { node, func, at, value, .. } if func == "fogCompute" => {
                execs.push((node, at, value.as_num().unwrap_or(0.0)));
            }
            _ => {}
        }
    }

    let primary_id = NodeId::new(&primary);
    let checkpoint = rt
        .stored(app, &NodeId::new("cloud"), "saveState", &primary)
        .iter()
        .filter(|r| r.t_ms < fail_at)
        .filter_map(|r| r.value.as_num())
        .fold(0.0, f64::max);
    let progress_at_failure = execs
        .iter()
        .filter(|e| e.0 == primary_id && e.1 < fail_at)
        .map(|e| e.2)
        .fold(0.0, f64::max);
    let after: Vec<&(NodeId, f64, f64)> = execs.iter().filter(|e| e.0 != primary_id && e.1 >= fail_at).collect();
    let new_fog = after.first().map(|e| e.0.clone());
    let resumed_from = new_fog
        .as_ref()
        .and_then(|f| rt.kv_get(app, f, "resumed"))
        .and_then(Value::as_num)
        .unwrap_or(0.0);
    let recovered = after.iter().find(|e| e.2 >= checkpoint);
    let gap = match (cfg.fail_at_ms, recovered) {
        (None, _) => 0.0,
        (Some(t), Some(e)) => e.1 - t,
        (Some(_), None) => f64::NAN,
    };
    // ticks spent on the new fog before it caught up, plus work since the
    // last checkpoint that was never logged
    let wasted = after.iter().take_while(|e| e.2 < checkpoint).count() as f64;
    let recomputed = wasted + (progress_at_failure - resumed_from).max(0.0);
    let lost = lost_records(&rt, app, &fog_ids);
    rt.audit_loggers()
        .map_err(|e| ExperimentError::InvalidConfig(format!("logger audit failed: {e}")))?;

    let new_index = new_fog
        .as_ref()
        .and_then(|f| fog_ids.iter().position(|x| x == f.as_str()))
        .map_or(-1.0, |i| (i + 1) as f64);
    let samples = if gap.is_nan() { Vec::new() } else { vec![gap] };
    Ok(ScenarioResult::new("failover", cfg.seed, samples, rt.trace())
        .with_extra("fail_at_ms", cfg.fail_at_ms.unwrap_or(-1.0))
        .with_extra("checkpoint", checkpoint)
        .with_extra("progress_at_failure", progress_at_failure)
        .with_extra("resumed_from", resumed_from)
        .with_extra("recovery_gap_ms", gap)
        .with_extra("recomputed_units", recomputed)
        .with_extra("new_fog", new_index)
        .with_extra(
            "new_fog_is_shadow",
            f64::from(new_fog.as_ref().is_some_and(|f| shadows.iter().any(|s| s == f.as_str()))),
        )
        .with_extra("lost_records", lost as f64))
}

fn issue(rt: &mut Runtime, app: crate::runtime::AppId, device: &NodeId, want: &Attachment) -> Result<(), ExperimentError> {
    if rt.attachment(device) != Some(want) {
        rt.reattach_on_failure(device)?;
    }
    if rt.is_down(device) {
        return Ok(());
    }
    rt.call_up(app, device, "fogCompute", vec![])?;
    Ok(())
}

/// Progress records some fog wrote that never reached the cloud.
fn lost_records(rt: &Runtime, app: crate::runtime::AppId, fogs: &[String]) -> usize {
    let cloud = NodeId::new("cloud");
    fogs.iter()
        .map(|f| {
            let written = rt.staged(app, "saveState", f).len();
            written - rt.stored(app, &cloud, "saveState", f).len().min(written)
        })
        .sum()
}

/// The device's fog placement: cheapest link to the first fog, shadow update
/// costs rising with fog distance.
fn placement(fogs: &[String]) -> Result<(AllocationInstance, crate::allocator::Allocation), ExperimentError> {
    let n = fogs.len();
    let doc = InstanceDoc {
        devices: vec![DEVICE.to_string()],
        fogs: fogs
            .iter()
            .map(|id| FogSpec {
                id: id.clone(),
                fixed_cost: 10.0,
                capacity: 1,
            })
            .collect(),
        c: vec![(0..n).map(|j| 5.0 + 10.0 * j as f64).collect()],
        u: (0..n)
            .map(|j| (0..n).map(|k| if j == k { 0.0 } else { (j as f64 - k as f64).abs() }).collect())
            .collect(),
    };
    let inst = AllocationInstance::load(doc).map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
    let (alloc, _) = solve_exact(&inst).map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
    Ok((inst, alloc))
}
