use proptest::prelude::*;

use super::*;
use crate::dsl::parse_program_named;
use crate::topology::{LatencyModel, TopologyDoc};

fn nid(s: &str) -> NodeId {
    NodeId::new(s)
}

fn topo(fogs: usize, per_fog: usize) -> Topology {
    let mut doc = TopologyDoc::three_level(fogs, per_fog);
    doc.latency = Some(LatencyModel::deterministic());
    Topology::build(&doc).unwrap()
}

fn prog(src: &str) -> ProgramDecl {
    parse_program_named("app", src).unwrap()
}

fn all_nodes(rt: &Runtime) -> Vec<NodeId> {
    rt.topology().nodes().iter().map(|n| n.id.clone()).collect()
}

fn deploy_all(rt: &mut Runtime, src: &str) -> AppId {
    let nodes = all_nodes(rt);
    rt.deploy(prog(src), &nodes).unwrap()
}

fn done(notes: &[Notification], call: CallId) -> CallOutcome {
    notes
        .iter()
        .find_map(|n| match n {
            Notification::CallDone { outcome } if outcome.call == call => Some(outcome.clone()),
            _ => None,
        })
        .expect("call finished")
}

fn executed_on(notes: &[Notification], func: &str) -> Vec<(NodeId, f64)> {
    notes
        .iter()
        .filter_map(|n| match n {
            Notification::Executed { node, func: f, at, .. } if f == func => Some((node.clone(), *at)),
            _ => None,
        })
        .collect()
}

const SYNC_SRC: &str = "jsync int fname() {}";

#[test]
fn deploy_full_tree_roles() {
    let mut rt = Runtime::new(topo(2, 2)).unwrap();
    let app = deploy_all(&mut rt, SYNC_SRC);
    let tree = rt.app_tree(app).unwrap();
    assert_eq!(tree.root, nid("cloud"));
    assert_eq!(tree.role_label(&nid("cloud")), Some("J"));
    assert_eq!(tree.role_label(&nid("f1")), Some("J"));
    assert_eq!(tree.role_label(&nid("d3")), Some("J+C"));
    assert_eq!(tree.workers().len(), 4);
    assert_eq!(tree.node(&nid("d3")).unwrap().parent, Some(nid("f2")));
}

#[test]
fn deploy_single_device_and_fog_subtree() {
    let mut rt = Runtime::new(topo(2, 2)).unwrap();
    let solo = rt.deploy(prog(SYNC_SRC), &[nid("d1")]).unwrap();
    let t = rt.app_tree(solo).unwrap();
    assert_eq!(t.root, nid("d1"));
    assert_eq!(t.role_label(&nid("d1")), Some("J+C"));

    let under_fog = rt.deploy(prog(SYNC_SRC), &[nid("f1"), nid("d1"), nid("d2")]).unwrap();
    assert_ne!(solo, under_fog);
    let t = rt.app_tree(under_fog).unwrap();
    assert_eq!(t.root, nid("f1"));
    assert_eq!(t.node(&nid("f1")).unwrap().parent, None);
}

#[test]
fn deploy_rejects_bad_subsets() {
    let mut rt = Runtime::new(topo(2, 1)).unwrap();
    assert!(matches!(rt.deploy(prog(SYNC_SRC), &[]), Err(RuntimeError::EmptySubset)));
    assert!(matches!(
        rt.deploy(prog(SYNC_SRC), &[nid("d1"), nid("d2")]),
        Err(RuntimeError::DisconnectedSubset(_))
    ));
    assert!(matches!(
        rt.deploy(prog("jsync function f() {}"), &[nid("d1")]),
        Err(RuntimeError::InvalidProgram(_))
    ));
}

#[test]
fn register_errors() {
    let mut rt = Runtime::new(topo(1, 1)).unwrap();
    let app = deploy_all(&mut rt, SYNC_SRC);
    rt.register_handler(app, "fname", 2.0, |_| Value::Num(1.0)).unwrap();
    assert!(matches!(
        rt.register_handler(app, "ghost", 1.0, |_| Value::Num(0.0)),
        Err(RuntimeError::UnknownFunction(_))
    ));
    assert!(matches!(
        rt.register_handler(app, "fname", 1.0, |_| Value::Num(0.0)),
        Err(RuntimeError::AlreadyBound(_))
    ));
}

#[test]
fn unbound_handler_is_rejected_at_call() {
    let mut rt = Runtime::new(topo(1, 1)).unwrap();
    let app = deploy_all(&mut rt, SYNC_SRC);
    assert!(matches!(
        rt.call_down(app, &nid("f1"), "fname", vec![]),
        Err(RuntimeError::UnboundHandler(_))
    ));
}

#[test]
fn sync_call_resumes_after_round_trip() {
    let mut rt = Runtime::new(topo(1, 2)).unwrap();
    let app = deploy_all(&mut rt, SYNC_SRC);
    rt.register_handler(app, "fname", 2.0, |c| Value::Num(c.rank() as f64)).unwrap();
    let id = rt.call_down(app, &nid("f1"), "fname", vec![]).unwrap();
    let notes = rt.run();
    let out = done(&notes, id);
    assert_eq!(out.status, CallStatus::Complete);
    assert_eq!(out.entries.len(), 2);
    assert!((out.resumed_ms - 12.0).abs() < 1e-9, "{}", out.resumed_ms);
}

#[test]
fn sync_call_with_no_workers_resumes_immediately() {
    let mut rt = Runtime::new(topo(1, 0)).unwrap();
    let app = deploy_all(&mut rt, SYNC_SRC);
    rt.register_handler(app, "fname", 2.0, |_| Value::Num(1.0)).unwrap();
    let id = rt.call_down(app, &nid("f1"), "fname", vec![]).unwrap();
    let out = rt.outcome(id).cloned().expect("finished at issue");
    assert_eq!(out.resumed_ms, 0.0);
    assert!(out.entries.is_empty());
}

#[test]
fn down_device_times_out() {
    let mut t = topo(1, 2);
    t.inject_failure(&nid("d2"), 0.0, None).unwrap();
    let mut rt = Runtime::new(t).unwrap();
    let app = deploy_all(&mut rt, SYNC_SRC);
    rt.register_handler(app, "fname", 2.0, |_| Value::Num(7.0)).unwrap();
    let id = rt.call_down(app, &nid("f1"), "fname", vec![]).unwrap();
    let out = done(&rt.run(), id);
    assert_eq!(out.status, CallStatus::Partial);
    assert_eq!(out.values().len(), 1);
    assert_eq!(out.timeouts(), 1);
    assert_eq!(out.resumed_ms, rt.sync_timeout_ms);
    assert_eq!(rt.sync_timeout_ms, 300.0);
}

#[test]
fn all_down_is_total_timeout() {
    let mut t = topo(1, 1);
    t.inject_failure(&nid("d1"), 0.0, None).unwrap();
    let mut rt = Runtime::new(t).unwrap();
    let app = deploy_all(&mut rt, SYNC_SRC);
    rt.register_handler(app, "fname", 2.0, |_| Value::Num(7.0)).unwrap();
    let id = rt.call_down(app, &nid("f1"), "fname", vec![]).unwrap();
    assert_eq!(done(&rt.run(), id).status, CallStatus::TotalTimeout);
}

#[test]
fn service_time_queues_on_busy_node() {
    let mut rt = Runtime::new(topo(1, 1)).unwrap();
    let app = deploy_all(&mut rt, SYNC_SRC);
    rt.register_handler(app, "fname", 2.0, |_| Value::Num(1.0)).unwrap();
    let a = rt.call_down(app, &nid("f1"), "fname", vec![]).unwrap();
    let b = rt.call_down(app, &nid("f1"), "fname", vec![]).unwrap();
    let notes = rt.run();
    assert_eq!(done(&notes, a).resumed_ms, 12.0);
    assert_eq!(done(&notes, b).resumed_ms, 14.0);
}

#[test]
fn queued_async_work_outlives_the_deadline() {
    let mut rt = Runtime::new(topo(1, 1)).unwrap();
    let app = rt
        .deploy(prog("jasync function work() {}"), &[nid("cloud"), nid("f1"), nid("d1")])
        .unwrap();
    rt.register_handler(app, "work", 100.0, |c| Value::Num(c.now())).unwrap();
    let ids: Vec<_> = (0..5).map(|_| rt.run_local(app, &nid("f1"), "work", vec![]).unwrap()).collect();
    let notes = rt.run();
    for (k, id) in ids.iter().enumerate() {
        let out = done(&notes, *id);
        assert_eq!(out.status, CallStatus::Complete);
        assert_eq!(out.entries[0].result, Ok(Value::Num(100.0 * (k + 1) as f64)));
    }
}

#[test]
fn upward_ctrl2ctrl_is_a_subtree_violation() {
    let mut rt = Runtime::new(topo(2, 1)).unwrap();
    let app = deploy_all(&mut rt, SYNC_SRC);
    rt.register_handler(app, "fname", 1.0, |_| Value::Num(1.0)).unwrap();
    assert!(matches!(
        rt.call_to(app, &nid("f1"), &nid("cloud"), "fname", vec![]),
        Err(RuntimeError::SubtreeViolation { .. })
    ));
    assert!(matches!(
        rt.call_to(app, &nid("f1"), &nid("f2"), "fname", vec![]),
        Err(RuntimeError::SubtreeViolation { .. })
    ));
    let id = rt.call_to(app, &nid("cloud"), &nid("f2"), "fname", vec![]).unwrap();
    let out = done(&rt.run(), id);
    assert_eq!(out.entries[0].node, nid("f2"));
    assert_eq!(out.resumed_ms, 30.0 + 1.0 + 30.0);
}

#[test]
fn worker_to_controller_goes_to_parent() {
    let mut rt = Runtime::new(topo(1, 1)).unwrap();
    let app = deploy_all(&mut rt, SYNC_SRC);
    rt.register_handler(app, "fname", 1.0, |_| Value::Num(1.0)).unwrap();
    let id = rt.call_up(app, &nid("d1"), "fname", vec![]).unwrap();
    let out = done(&rt.run(), id);
    assert_eq!(out.entries[0].node, nid("f1"));
    assert_eq!(out.resumed_ms, 11.0);
}

#[test]
fn device_only_gate_runs_on_every_device() {
    let src = "jcond { deviceOnly: sys.type == \"device\"; } jasync function {deviceOnly} deviceOnly {}";
    let mut rt = Runtime::new(topo(1, 3)).unwrap();
    let app = deploy_all(&mut rt, src);
    rt.register_handler(app, "deviceOnly", 1.0, |_| Value::Num(0.0)).unwrap();
    let id = rt.call_down(app, &nid("cloud"), "deviceOnly", vec![]).unwrap();
    let notes = rt.run();
    let mut ran: Vec<NodeId> = executed_on(&notes, "deviceOnly").into_iter().map(|x| x.0).collect();
    ran.sort();
    assert_eq!(ran, vec![nid("d1"), nid("d2"), nid("d3")]);
    assert_eq!(done(&notes, id).status, CallStatus::Complete);
}

const LOAD_SRC: &str = "jcond { loadCheck: sys.type == \"fog\" && load < 50; cloudRun: sys.type == \"cloud\"; }
jdata { int load as logger; }
jasync function {loadCheck||cloudRun} loadBalanced {}";

#[test]
fn lowest_level_wins() {
    for (load, want) in [(30.0, "f1"), (80.0, "cloud")] {
        let mut rt = Runtime::new(topo(1, 2)).unwrap();
        let app = deploy_all(&mut rt, LOAD_SRC);
        rt.register_handler(app, "loadBalanced", 1.0, |_| Value::Num(0.0)).unwrap();
        rt.logger_write(app, &nid("f1"), "load", Value::Num(load)).unwrap();
        let sel = rt.execution_level(app, &nid("cloud"), "loadBalanced", &Direction::Down).unwrap();
        assert_eq!(
            sel,
            Selection::Run {
                executors: vec![nid(want)],
                blocked: vec![]
            }
        );
        rt.call_down(app, &nid("cloud"), "loadBalanced", vec![]).unwrap();
        let ran = executed_on(&rt.run(), "loadBalanced");
        assert_eq!(ran.len(), 1);
        assert_eq!(ran[0].0, nid(want));
    }
}

#[test]
fn no_data_gate_falls_through_to_cloud() {
    let mut rt = Runtime::new(topo(1, 1)).unwrap();
    let app = deploy_all(&mut rt, LOAD_SRC);
    let sel = rt.execution_level(app, &nid("cloud"), "loadBalanced", &Direction::Down).unwrap();
    assert!(matches!(sel, Selection::Run { ref executors, .. } if executors == &[nid("cloud")]));
}

#[test]
fn all_false_is_none_eligible() {
    let src = "jcond { never: sys.type == \"fog\" && sys.type == \"cloud\"; } jsync {never} int f() {}";
    let mut rt = Runtime::new(topo(1, 1)).unwrap();
    let app = deploy_all(&mut rt, src);
    rt.register_handler(app, "f", 1.0, |_| Value::Num(0.0)).unwrap();
    let id = rt.call_down(app, &nid("cloud"), "f", vec![]).unwrap();
    let out = rt.outcome(id).unwrap();
    assert_eq!(out.status, CallStatus::NoneEligible);
    assert!(rt.trace().iter().any(|r| r.kind == "none-eligible"));
}

#[test]
fn select_level_unit() {
    use crate::dsl::Readiness::*;
    let g = |n: &str, l, r| (nid(n), l, r);
    assert_eq!(
        select_level(&[
            g("d", NodeLevel::Device, Ready(false)),
            g("f", NodeLevel::Fog, Ready(true)),
            g("c", NodeLevel::Cloud, Ready(true)),
        ]),
        Selection::Run {
            executors: vec![nid("f")],
            blocked: vec![]
        }
    );
    assert_eq!(
        select_level(&[g("f", NodeLevel::Fog, Blocked("pe".into())), g("c", NodeLevel::Cloud, Ready(true)),]),
        Selection::Defer("pe".into())
    );
    assert_eq!(select_level(&[g("c", NodeLevel::Cloud, Ready(false))]), Selection::NoneEligible);
}

const LOG_SRC: &str = "jdata { int x as logger(fog); double temp as logger(cloud); double pe as broadcaster; }
jasync function noop() {}";

#[test]
fn device_write_arrives_at_fog_after_one_hop() {
    let mut rt = Runtime::new(topo(1, 1)).unwrap();
    let app = deploy_all(&mut rt, LOG_SRC);
    rt.logger_write_at(3.0, app, &nid("d1"), "x", Value::Num(32.0)).unwrap();
    let notes = rt.run();
    let delivered: Vec<&Record> = notes
        .iter()
        .filter_map(|n| match n {
            Notification::LoggerDelivered { node, record, .. } if node == &nid("f1") => Some(record),
            _ => None,
        })
        .collect();
    assert_eq!(delivered.len(), 1);
    assert_eq!(delivered[0].value, Value::Num(32.0));
    assert_eq!(delivered[0].t_ms, 3.0);
    assert_eq!(delivered[0].arrived_ms, 8.0);
}

#[test]
fn writes_during_downtime_replay_in_order() {
    let mut t = topo(1, 1);
    t.inject_failure(&nid("f1"), 10.0, Some(100.0)).unwrap();
    let mut rt = Runtime::new(t).unwrap();
    let app = deploy_all(&mut rt, LOG_SRC);
    for i in 0..5 {
        rt.logger_write_at(20.0 + 10.0 * i as f64, app, &nid("d1"), "x", Value::Num(i as f64))
            .unwrap();
    }
    rt.run_until(99.0);
    assert!(rt.stored(app, &nid("f1"), "x", "d1").is_empty());
    assert_eq!(rt.unshipped(app, "x", "d1"), 5);
    rt.run();
    let got: Vec<f64> = rt
        .logger_records(app, &nid("f1"), "x")
        .unwrap()
        .iter()
        .map(|r| r.value.as_num().unwrap())
        .collect();
    assert_eq!(got, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    assert!(rt.stored(app, &nid("f1"), "x", "d1").iter().all(|r| r.arrived_ms >= 100.0));
    rt.audit_loggers().unwrap();
}

#[test]
fn in_flight_records_to_a_failing_fog_are_resent() {
    let mut t = topo(1, 1);
    t.inject_failure(&nid("f1"), 2.0, Some(50.0)).unwrap();
    let mut rt = Runtime::new(t).unwrap();
    let app = deploy_all(&mut rt, LOG_SRC);
    rt.logger_write(app, &nid("d1"), "x", Value::Num(1.0)).unwrap();
    rt.run();
    let s = rt.stored(app, &nid("f1"), "x", "d1");
    assert_eq!(s.len(), 1);
    assert_eq!(s[0].arrived_ms, 55.0);
}

#[test]
fn logger_kind_and_level_errors() {
    let mut rt = Runtime::new(topo(1, 1)).unwrap();
    let app = deploy_all(&mut rt, LOG_SRC);
    assert!(matches!(
        rt.logger_write(app, &nid("d1"), "pe", Value::Num(1.0)),
        Err(RuntimeError::KindMismatch(_))
    ));
    assert!(matches!(
        rt.logger_write(app, &nid("d1"), "nope", Value::Num(1.0)),
        Err(RuntimeError::UnknownVariable(_))
    ));
    assert!(matches!(
        rt.logger_write(app, &nid("cloud"), "x", Value::Num(1.0)),
        Err(RuntimeError::LevelViolation(_))
    ));
    assert!(matches!(
        rt.logger_write(app, &nid("d1"), "x", Value::Str("a".into())),
        Err(RuntimeError::TypeMismatch(_))
    ));
    assert!(matches!(
        rt.logger_snapshot(app, &nid("d1"), "temp"),
        Err(RuntimeError::LevelViolation(_))
    ));
    assert!(rt.logger_snapshot(app, &nid("cloud"), "temp").unwrap().is_empty());
}

#[test]
fn snapshot_min_selection() {
    let src = "jdata { double vehicleTemps as logger(fog); double chosen as logger(cloud); }
jasync function pick() {}";
    let mut rt = Runtime::new(topo(1, 3)).unwrap();
    let app = deploy_all(&mut rt, src);
    rt.register_handler(app, "pick", 1.0, |c| {
        let snap = c.snapshot("vehicleTemps").unwrap();
        let min = snap.iter().filter_map(|e| e.value.as_num()).fold(f64::INFINITY, f64::min);
        c.log("chosen", min).unwrap();
        Value::Num(min)
    })
    .unwrap();
    for (d, v) in [("d1", 21.0), ("d2", 19.0), ("d3", 23.0)] {
        rt.logger_write(app, &nid(d), "vehicleTemps", Value::Num(v)).unwrap();
    }
    rt.run();
    let snap = rt.logger_snapshot(app, &nid("f1"), "vehicleTemps").unwrap();
    assert_eq!(snap.len(), 3);
    rt.run_local(app, &nid("f1"), "pick", vec![]).unwrap();
    rt.run();
    let chosen = rt.logger_snapshot(app, &nid("cloud"), "chosen").unwrap();
    assert_eq!(chosen.len(), 1);
    assert_eq!(chosen[0].value, Value::Num(19.0));
    assert_eq!(chosen[0].source, "f1");
}

#[test]
fn tagged_sources_share_a_device() {
    let src = "jdata { double t as logger(device); } jasync function noop() {}";
    let mut rt = Runtime::new(topo(1, 1)).unwrap();
    let app = deploy_all(&mut rt, src);
    rt.logger_write_as(app, &nid("d1"), "s1", "t", Value::Num(1.0)).unwrap();
    rt.logger_write_as(app, &nid("d1"), "s2", "t", Value::Num(2.0)).unwrap();
    rt.run();
    let snap = rt.logger_snapshot(app, &nid("d1"), "t").unwrap();
    let srcs: Vec<&str> = snap.iter().map(|e| e.source.as_str()).collect();
    assert_eq!(srcs, vec!["d1/s1", "d1/s2"]);
}

#[test]
fn logger_hook_runs_at_declared_level() {
    let src = "jdata { double x as logger(fog); } jasync function onX() {}";
    let mut rt = Runtime::new(topo(1, 1)).unwrap();
    let app = deploy_all(&mut rt, src);
    rt.register_handler(app, "onX", 0.0, |c| c.args()[0].clone()).unwrap();
    rt.on_logger(app, "x", "onX").unwrap();
    rt.logger_write(app, &nid("d1"), "x", Value::Num(4.0)).unwrap();
    let ran = executed_on(&rt.run(), "onX");
    assert_eq!(ran, vec![(nid("f1"), 5.0)]);
}

#[test]
fn broadcast_versions_and_delivery() {
    let mut rt = Runtime::new(topo(1, 2)).unwrap();
    let app = deploy_all(&mut rt, LOG_SRC);
    let vs: Vec<u64> = (0..3)
        .map(|i| rt.broadcast(app, &nid("cloud"), "pe", Value::Num(i as f64)).unwrap())
        .collect();
    assert_eq!(vs, vec![1, 2, 3]);
    assert_eq!(rt.broadcast_value(app, &nid("d1"), "pe"), None);
    rt.run();
    assert_eq!(rt.broadcast_value(app, &nid("d1"), "pe"), Some((3, Value::Num(2.0))));
    assert_eq!(rt.broadcast_value(app, &nid("f1"), "pe"), Some((3, Value::Num(2.0))));
}

#[test]
fn stale_version_is_ignored() {
    let mut rt = Runtime::new(topo(1, 1)).unwrap();
    let app = deploy_all(&mut rt, LOG_SRC);
    rt.accept_broadcast(app, "pe", &nid("d1"), 3, Value::Num(3.0));
    rt.accept_broadcast(app, "pe", &nid("d1"), 2, Value::Num(2.0));
    assert_eq!(rt.broadcast_value(app, &nid("d1"), "pe"), Some((3, Value::Num(3.0))));
    assert!(rt.trace().iter().any(|r| r.kind == "bcast-stale"));
}

#[test]
fn broadcast_errors() {
    let mut rt = Runtime::new(topo(1, 1)).unwrap();
    let app = deploy_all(&mut rt, LOG_SRC);
    assert!(matches!(
        rt.broadcast(app, &nid("d1"), "pe", Value::Num(1.0)),
        Err(RuntimeError::OriginViolation(_))
    ));
    assert!(matches!(
        rt.broadcast(app, &nid("cloud"), "x", Value::Num(1.0)),
        Err(RuntimeError::KindMismatch(_))
    ));
}

#[test]
fn blocked_gate_waits_for_broadcast() {
    let src = "jdata { double pe as broadcaster; } jcond { pickpe: pe < sys.rank; } jasync {pickpe} function fname() {}";
    let mut doc = TopologyDoc::three_level(1, 2);
    doc.latency = Some(LatencyModel::deterministic());
    for n in &mut doc.nodes {
        if n.id == "d2" {
            n.rank = Some(5);
        }
    }
    let mut rt = Runtime::new(Topology::build(&doc).unwrap()).unwrap();
    let app = deploy_all(&mut rt, src);
    rt.register_handler(app, "fname", 1.0, |_| Value::Num(0.0)).unwrap();
    assert!(matches!(
        rt.gate_readiness(app, &nid("d2"), "fname").unwrap(),
        crate::dsl::Readiness::Blocked(_)
    ));
    let id = rt.call_down(app, &nid("f1"), "fname", vec![]).unwrap();
    rt.run_until(50.0);
    assert!(rt.outcome(id).is_none());
    rt.broadcast(app, &nid("f1"), "pe", Value::Num(2.0)).unwrap();
    let notes = rt.run();
    let ran = executed_on(&notes, "fname");
    assert_eq!(ran, vec![(nid("d2"), 61.0)]);
    assert_eq!(done(&notes, id).status, CallStatus::Complete);
}

#[test]
fn blocked_gate_times_out_without_data() {
    let src = "jdata { double pe as broadcaster; } jcond { pickpe: pe < sys.rank; } jsync {pickpe} int fname() {}";
    let mut rt = Runtime::new(topo(1, 1)).unwrap();
    let app = deploy_all(&mut rt, src);
    rt.register_handler(app, "fname", 1.0, |_| Value::Num(0.0)).unwrap();
    let id = rt.call_down(app, &nid("f1"), "fname", vec![]).unwrap();
    let out = done(&rt.run(), id);
    assert_eq!(out.status, CallStatus::TotalTimeout);
    assert_eq!(out.resumed_ms, 300.0);
}

#[test]
fn flows_between_apps() {
    let mut rt = Runtime::new(topo(1, 1)).unwrap();
    let phone = rt
        .deploy(
            prog("jdata { double msg as logger(fog); } jasync function relay() {}"),
            &all_nodes(&rt),
        )
        .unwrap();
    let lighting = rt
        .deploy(
            prog("jdata { double level as broadcaster; } jasync function onMsg() {}"),
            &[nid("f1"), nid("d1")],
        )
        .unwrap();
    assert!(matches!(
        rt.flow_connect(phone, phone, NodeLevel::Fog),
        Err(RuntimeError::SameAppViolation)
    ));
    assert!(matches!(
        rt.flow_connect_between(phone, &nid("cloud"), lighting, &nid("f1")),
        Err(RuntimeError::LevelViolation(_))
    ));
    let eps = rt.flow_connect(phone, lighting, NodeLevel::Fog).unwrap();
    assert_eq!(eps.len(), 1);
    let flow = eps[0].id;
    assert_eq!(rt.flow_read(flow).unwrap(), None);

    rt.register_handler(phone, "relay", 0.0, move |c| {
        let v = c.args()[0].clone();
        c.flow_write(flow, v.clone()).unwrap();
        v
    })
    .unwrap();
    rt.on_logger(phone, "msg", "relay").unwrap();
    rt.register_handler(lighting, "onMsg", 0.0, |c| {
        let v = c.args()[0].clone();
        c.broadcast("level", v.clone()).unwrap();
        v
    })
    .unwrap();
    rt.on_flow(flow, "onMsg").unwrap();
    rt.logger_write(phone, &nid("d1"), "msg", Value::Num(0.7)).unwrap();
    rt.run();
    assert_eq!(rt.broadcast_value(lighting, &nid("d1"), "level"), Some((1, Value::Num(0.7))));
    // the phone app's namespace never sees the lighting broadcaster
    assert_eq!(rt.broadcast_value(phone, &nid("d1"), "level"), None);
}

#[test]
fn flow_buffer_is_fifo() {
    let mut rt = Runtime::new(topo(1, 1)).unwrap();
    let a = rt.deploy(prog("jasync function f() {}"), &[nid("f1")]).unwrap();
    let b = rt.deploy(prog("jasync function f() {}"), &[nid("f1")]).unwrap();
    let c = rt.deploy(prog("jasync function f() {}"), &[nid("f1")]).unwrap();
    let ab = rt.flow_connect(a, b, NodeLevel::Fog).unwrap()[0].id;
    let ac = rt.flow_connect(a, c, NodeLevel::Fog).unwrap()[0].id;
    for i in 0..3 {
        rt.flow_write(ab, Value::Num(i as f64)).unwrap();
    }
    rt.flow_write(ac, Value::Num(9.0)).unwrap();
    for i in 0..3 {
        assert_eq!(rt.flow_read(ab).unwrap(), Some(Value::Num(i as f64)));
    }
    assert_eq!(rt.flow_read(ab).unwrap(), None);
    assert_eq!(rt.flow_read(ac).unwrap(), Some(Value::Num(9.0)));
    assert!(matches!(
        rt.flow_connect(a, b, NodeLevel::Cloud),
        Err(RuntimeError::LevelViolation(_))
    ));
}

fn four_fogs() -> Runtime {
    Runtime::new(topo(4, 1)).unwrap()
}

#[test]
fn attach_primary_then_shadows_then_cloud() {
    let mut rt = four_fogs();
    let policy = AttachPolicy::Allocation {
        primary: nid("f1"),
        shadows: vec![nid("f3"), nid("f4")],
    };
    assert_eq!(rt.attach_device(&nid("d1"), policy).unwrap(), Attachment::Fog(nid("f1")));
    rt.inject_failure(&nid("f1"), 10.0, None).unwrap();
    rt.inject_failure(&nid("f3"), 10.0, None).unwrap();
    rt.run_until(20.0);
    assert_eq!(rt.reattach_on_failure(&nid("d1")).unwrap(), Attachment::Fog(nid("f4")));
    rt.inject_failure(&nid("f4"), 30.0, None).unwrap();
    rt.inject_failure(&nid("f2"), 30.0, None).unwrap();
    rt.run_until(40.0);
    assert_eq!(rt.reattach_on_failure(&nid("d1")).unwrap(), Attachment::Cloud(nid("cloud")));
    rt.inject_failure(&nid("cloud"), 50.0, None).unwrap();
    rt.run_until(60.0);
    assert_eq!(rt.reattach_on_failure(&nid("d1")).unwrap(), Attachment::Detached);
    assert!(matches!(
        rt.attach_device(&nid("f1"), AttachPolicy::Static),
        Err(RuntimeError::NotADevice(_))
    ));
}

#[test]
fn detached_writes_stage_and_ship_after_reattach() {
    let mut rt = four_fogs();
    let app = deploy_all(&mut rt, LOG_SRC);
    rt.set_attachment(&nid("d1"), Attachment::Detached).unwrap();
    for i in 0..3 {
        rt.logger_write(app, &nid("d1"), "x", Value::Num(i as f64)).unwrap();
    }
    rt.run();
    assert_eq!(rt.unshipped(app, "x", "d1"), 3);
    rt.attach_device(
        &nid("d1"),
        AttachPolicy::Allocation {
            primary: nid("f2"),
            shadows: vec![],
        },
    )
    .unwrap();
    rt.run();
    assert_eq!(rt.stored(app, &nid("f2"), "x", "d1").len(), 3);
    assert_eq!(rt.unshipped(app, "x", "d1"), 0);
    rt.audit_loggers().unwrap();
}

#[test]
fn shadows_converge_to_primary() {
    let mut rt = four_fogs();
    let app = deploy_all(&mut rt, LOG_SRC);
    rt.set_shadows(&nid("f1"), vec![nid("f2"), nid("f3")]).unwrap();
    rt.inject_failure(&nid("f3"), 0.0, Some(200.0)).unwrap();
    for i in 0..10 {
        rt.logger_write_at(i as f64 * 7.0, app, &nid("d1"), "x", Value::Num(i as f64))
            .unwrap();
    }
    rt.run();
    let primary: Vec<Value> = rt.stored(app, &nid("f1"), "x", "d1").iter().map(|r| r.value.clone()).collect();
    assert_eq!(primary.len(), 10);
    for s in ["f2", "f3"] {
        let copy: Vec<Value> = rt.stored(app, &nid(s), "x", "d1").iter().map(|r| r.value.clone()).collect();
        assert_eq!(copy, primary, "shadow {s}");
    }
    assert!(rt.stored(app, &nid("f3"), "x", "d1")[0].arrived_ms >= 200.0);
    rt.audit_loggers().unwrap();
}

#[test]
fn no_writes_no_replication() {
    let mut rt = four_fogs();
    let _app = deploy_all(&mut rt, LOG_SRC);
    rt.set_shadows(&nid("f1"), vec![nid("f2")]).unwrap();
    rt.run();
    assert!(!rt.trace().iter().any(|r| r.kind.starts_with("repl")));
}

#[test]
fn failure_clears_volatile_state_only() {
    let mut rt = Runtime::new(topo(1, 1)).unwrap();
    let app = deploy_all(&mut rt, LOG_SRC);
    rt.kv_set(app, &nid("f1"), "k", Value::Num(1.0)).unwrap();
    rt.logger_write(app, &nid("f1"), "x", Value::Num(2.0)).unwrap();
    rt.inject_failure(&nid("f1"), 1.0, Some(2.0)).unwrap();
    rt.run();
    assert_eq!(rt.kv_get(app, &nid("f1"), "k"), None);
    assert_eq!(rt.stored(app, &nid("f1"), "x", "f1").len(), 1);
}

#[test]
fn same_seed_same_trace() {
    let run = || {
        let mut doc = TopologyDoc::three_level(2, 2);
        doc.seed = Some(11);
        let mut rt = Runtime::new(Topology::build(&doc).unwrap()).unwrap();
        let app = deploy_all(&mut rt, SYNC_SRC);
        rt.register_handler(app, "fname", 1.0, |_| Value::Num(1.0)).unwrap();
        rt.call_down(app, &nid("cloud"), "fname", vec![]).unwrap();
        rt.run();
        rt.trace().hash()
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn logger_fifo_under_failures(
        writes in prop::collection::vec((0.0f64..400.0, 0usize..4), 1..40),
        windows in prop::collection::vec((0usize..3, 0.0f64..400.0, 1.0f64..150.0), 0..5),
    ) {
        let mut doc = TopologyDoc::three_level(2, 2);
        doc.seed = Some(3);
        let mut t = Topology::build(&doc).unwrap();
        let targets = ["f1", "f2", "cloud"];
        for (who, at, len) in &windows {
            // overlapping windows on one node are rejected; skip those
            let _ = t.inject_failure(&nid(targets[*who]), *at, Some(at + len));
        }
        let mut rt = Runtime::new(t).unwrap();
        let app = deploy_all(&mut rt, LOG_SRC);
        rt.set_shadows(&nid("f1"), vec![nid("f2")]).unwrap();
        let mut writes = writes;
        writes.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut written = BTreeMap::<String, usize>::new();
        for (i, (at, dev)) in writes.iter().enumerate() {
            let d = format!("d{}", dev + 1);
            rt.logger_write_at(*at, app, &nid(&d), "x", Value::Num(i as f64)).unwrap();
            rt.logger_write_at(*at, app, &nid(&d), "temp", Value::Num(i as f64)).unwrap();
            *written.entry(d).or_default() += 1;
        }
        rt.run();
        prop_assert!(rt.audit_loggers().is_ok(), "{:?}", rt.audit_loggers());
        for (d, n) in &written {
            let fog = rt.topology().parent(&nid(d)).unwrap().clone();
            prop_assert_eq!(rt.stored(app, &fog, "x", d).len(), *n);
            prop_assert_eq!(rt.stored(app, &nid("cloud"), "temp", d).len(), *n);
        }
    }

    #[test]
    fn broadcast_reads_never_decrease(
        sends in prop::collection::vec((0.0f64..200.0, 0usize..3), 1..20),
        down in prop::option::of((0usize..2, 0.0f64..200.0, 1.0f64..100.0)),
    ) {
        let mut t = topo(2, 1);
        if let Some((f, at, len)) = down {
            t.inject_failure(&nid(["f1", "f2"][f]), at, Some(at + len)).unwrap();
        }
        t.seed = 9;
        let mut rt = Runtime::new(t).unwrap();
        let app = deploy_all(&mut rt, LOG_SRC);
        let mut sends = sends;
        sends.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut last = BTreeMap::<NodeId, u64>::new();
        for (at, _) in &sends {
            for n in rt.run_until(*at) {
                if let Notification::BroadcastDelivered { node, version, .. } = n {
                    let prev = last.insert(node.clone(), version).unwrap_or(0);
                    prop_assert!(version > prev);
                }
            }
            rt.broadcast(app, &nid("cloud"), "pe", Value::Num(*at)).unwrap();
        }
        for n in rt.run() {
            if let Notification::BroadcastDelivered { node, version, .. } = n {
                let prev = last.insert(node.clone(), version).unwrap_or(0);
                prop_assert!(version > prev);
            }
        }
    }
}
