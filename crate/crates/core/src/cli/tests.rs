use super::*;
use crate::dsl::{parse_program_named, Value};
use crate::runtime::RuntimeError;
use crate::topology::NodeLevel;

fn small_tree() -> Topology {
    Topology::build(&TopologyDoc::three_level(2, 2)).unwrap()
}

fn shell() -> DShell {
    DShell::new(small_tree()).unwrap()
}

fn prog(name: &str) -> crate::dsl::ProgramDecl {
    parse_program_named(name, "jasync function main() {}").unwrap()
}

fn ids(list: &[&str]) -> Vec<NodeId> {
    list.iter().map(|s| NodeId::new(*s)).collect()
}

#[test]
fn single_node_spawn_costs() {
    let mut sh = shell();
    let cold = sh.spawn(prog("a"), &ids(&["f1"]), SpawnMode::Cold).unwrap().startup_ms();
    let warm = sh.spawn(prog("b"), &ids(&["f1"]), SpawnMode::Shell).unwrap().startup_ms();
    assert_eq!(cold, 300.0);
    assert_eq!(warm, 20.0);
}

#[test]
fn whole_tree_spawn_closed_form() {
    let mut sh = shell();
    let all = ids(&["cloud", "f1", "f2", "d1", "d2", "d3", "d4"]);
    let cold = sh.spawn(prog("a"), &all, SpawnMode::Cold).unwrap().clone();
    let warm = sh.spawn(prog("b"), &all, SpawnMode::Shell).unwrap().clone();
    assert_eq!(cold.startup_ms(), 7.0 * 300.0);
    // cloud, then both fogs together, then all devices together
    assert_eq!(warm.startup_ms(), 3.0 * 20.0);
    assert_eq!(warm.started[&NodeId::new("f1")] - warm.spawned_at_ms, 40.0);
    assert_eq!(warm.started[&NodeId::new("f2")] - warm.spawned_at_ms, 40.0);
    assert_ne!(cold.namespace, warm.namespace);
    assert_eq!(sh.now(), 2100.0 + 60.0);
}

#[test]
fn spawn_outside_held_nodes_is_rejected() {
    let held = ids(&["cloud", "f1", "d1"]).into_iter().collect();
    let mut sh = DShell::holding(small_tree(), held).unwrap();
    assert!(matches!(
        sh.spawn(prog("a"), &ids(&["cloud", "f2"]), SpawnMode::Shell),
        Err(ShellError::ResourceViolation(n)) if n == "f2"
    ));
    assert!(sh.spawn(prog("a"), &ids(&["cloud", "f1", "d1"]), SpawnMode::Shell).is_ok());
    assert!(matches!(
        DShell::holding(small_tree(), ids(&["nowhere"]).into_iter().collect()),
        Err(ShellError::ResourceViolation(_))
    ));
}

#[test]
fn job_nodes_stay_inside_the_shell() {
    let held: std::collections::BTreeSet<NodeId> = ids(&["cloud", "f2", "d3", "d4"]).into_iter().collect();
    let mut sh = DShell::holding(small_tree(), held.clone()).unwrap();
    let job = sh.spawn(prog("a"), &ids(&["f2", "d4"]), SpawnMode::Shell).unwrap();
    assert!(job.nodes.iter().all(|n| held.contains(n)));
}

#[test]
fn kill_stops_and_tears_down() {
    let mut sh = shell();
    let id = sh.spawn(prog("a"), &ids(&["cloud", "f1"]), SpawnMode::Shell).unwrap().id;
    let ns = sh.job(id).unwrap().namespace;
    sh.kill(id).unwrap();
    assert_eq!(sh.job(id).unwrap().state, JobState::Stopped);
    assert!(sh.runtime().app_tree(ns).is_err());
    assert!(matches!(sh.kill(id), Err(ShellError::NotRunning(_))));
    assert!(matches!(sh.kill(42), Err(ShellError::UnknownJob(42))));
}

#[test]
fn spawn_on_a_down_node_fails() {
    let mut topo = small_tree();
    topo.inject_failure(&NodeId::new("f1"), 0.0, None).unwrap();
    let mut sh = DShell::new(topo).unwrap();
    let job = sh.spawn(prog("a"), &ids(&["cloud", "f1"]), SpawnMode::Shell).unwrap();
    assert_eq!(job.state, JobState::Failed);
}

#[test]
fn pipe_carries_messages_between_jobs() {
    let mut sh = shell();
    let a = sh
        .spawn(prog("sensing"), &ids(&["cloud", "f1", "d1"]), SpawnMode::Shell)
        .unwrap()
        .id;
    let b = sh.spawn(prog("allocating"), &ids(&["cloud", "f1"]), SpawnMode::Shell).unwrap().id;
    let eps = sh.pipe(a, b, NodeLevel::Fog).unwrap();
    assert_eq!(eps.len(), 1);
    assert_eq!(eps[0].node, NodeId::new("f1"));
    assert_eq!(sh.send(a, Value::Str("free=3".into())).unwrap(), 1);
    assert_eq!(sh.recv(b).unwrap(), vec![Value::Str("free=3".into())]);
    assert!(sh.recv(b).unwrap().is_empty());
}

#[test]
fn pipe_errors() {
    let mut sh = shell();
    let a = sh.spawn(prog("a"), &ids(&["cloud", "f1"]), SpawnMode::Shell).unwrap().id;
    let b = sh.spawn(prog("b"), &ids(&["cloud", "f2"]), SpawnMode::Shell).unwrap().id;
    assert!(matches!(
        sh.pipe(a, a, NodeLevel::Fog),
        Err(ShellError::Runtime(RuntimeError::SameAppViolation))
    ));
    assert!(matches!(
        sh.pipe(a, b, NodeLevel::Fog),
        Err(ShellError::Runtime(RuntimeError::LevelViolation(_)))
    ));
}

#[test]
fn namespaces_do_not_share_data() {
    let src = "jdata { int x as logger(fog); }";
    let mut sh = shell();
    let nodes = ids(&["cloud", "f1", "d1"]);
    let a = sh
        .spawn(parse_program_named("a", src).unwrap(), &nodes, SpawnMode::Shell)
        .unwrap()
        .namespace;
    let b = sh
        .spawn(parse_program_named("b", src).unwrap(), &nodes, SpawnMode::Shell)
        .unwrap()
        .namespace;
    let rt = sh.runtime_mut();
    rt.logger_write(a, &NodeId::new("d1"), "x", Value::Num(1.0)).unwrap();
    rt.run();
    assert_eq!(rt.stored(a, &NodeId::new("f1"), "x", "d1").len(), 1);
    assert!(rt.stored(b, &NodeId::new("f1"), "x", "d1").is_empty());
}

const SCRIPT: &str = "run sensing --on cloud,f1,d1
run allocating --on cloud,f1 --cold
jobs
pipe 1 2 fog
send 1 spot=1
recv 2
tree
bogus
kill 1
jobs
quit
jobs
";

#[test]
fn scripted_session_transcript() {
    let out = shell().run_script(SCRIPT);
    let want = "> run sensing --on cloud,f1,d1
job 1 sensing ns1 Running ready in 60.0 ms
> run allocating --on cloud,f1 --cold
job 2 allocating ns2 Running ready in 600.0 ms
> jobs
1 sensing ns1 Running Shell startup=60.0 nodes=cloud,d1,f1
2 allocating ns2 Running Cold startup=600.0 nodes=cloud,f1
> pipe 1 2 fog
pipe 1 -> 2 at f1
> send 1 spot=1
sent on 1 flow(s)
> recv 2
\"spot=1\"
> tree
cloud [cloud] jobs=1,2
  f1 [fog] jobs=1,2
    d1 [device] jobs=1
    d2 [device] jobs=-
  f2 [fog] jobs=-
    d3 [device] jobs=-
    d4 [device] jobs=-
> bogus
unknown command \"bogus\"
";
    assert!(out.starts_with(want), "{out}");
    assert!(out.ends_with("> kill 1\njob 1 stopped\n> jobs\n1 sensing ns1 Stopped Shell startup=60.0 nodes=cloud,d1,f1\n2 allocating ns2 Running Cold startup=600.0 nodes=cloud,f1\n> quit\n"), "{out}");
    assert_eq!(out, shell().run_script(SCRIPT));
}

#[test]
fn script_errors_do_not_end_the_session() {
    let out = shell().run_script("kill 9\nrun a --on nowhere\njobs\nrun\n");
    assert!(out.contains("error: no job 9"));
    assert!(out.contains("error: nodes not held by this shell: nowhere"));
    assert!(out.contains("error: run <name>"));
}

fn data(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn listing(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("listings").join(name)
}

fn capture(f: impl FnOnce(&mut Vec<u8>, &mut Vec<u8>) -> i32) -> (i32, String, String) {
    let (mut o, mut e) = (Vec::new(), Vec::new());
    let code = f(&mut o, &mut e);
    (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
}

#[test]
fn parse_command_exit_codes() {
    let (code, out, _) = capture(|o, e| cmd_parse(&listing("thermostat.js"), o, e));
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("\"data_decls\""));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.js");
    std::fs::write(&bad, "jdata {\n  int x as logger(fog)\n}").unwrap();
    let (code, _, err) = capture(|o, e| cmd_parse(&bad, o, e));
    assert_eq!(code, EXIT_PARSE);
    assert!(err.starts_with(&format!("{}:3:1", bad.display())), "{err}");
    let (code, _, _) = capture(|o, e| cmd_parse(&dir.path().join("missing.js"), o, e));
    assert_eq!(code, EXIT_RUNTIME);
}

#[test]
fn allocate_command_writes_the_golden_solution() {
    let dir = tempfile::tempdir().unwrap();
    let dest = dir.path().join("sol.json");
    let (code, _, _) = capture(|o, e| cmd_allocate(&data("tables_instance.json"), false, false, Some(&dest), o, e));
    assert_eq!(code, EXIT_OK);
    let doc: SolutionDoc = serde_json::from_str(&std::fs::read_to_string(&dest).unwrap()).unwrap();
    assert_eq!(doc.active, vec!["F1", "F3", "F4"]);
    let (code, out, _) = capture(|o, e| cmd_allocate(&data("tables_instance.json"), true, true, None, o, e));
    assert_eq!(code, EXIT_OK);
    assert!(out.starts_with("device,fog\nD1,F3\nD2,F4\n"), "{out}");
}

#[test]
fn allocate_infeasible_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("inst.json");
    std::fs::write(
        &p,
        r#"{"devices":["a","b"],"fogs":[{"id":"f","fixed_cost":1,"capacity":1}],"c":[[1],[1]],"u":[[0]]}"#,
    )
    .unwrap();
    let (code, _, err) = capture(|o, e| cmd_allocate(&p, false, false, None, o, e));
    assert_eq!(code, EXIT_INFEASIBLE, "{err}");
}

#[test]
fn experiment_command_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"requests": 20, "scenarios": ["FogOnly"]}"#).unwrap();
    let (code, out, err) = capture(|o, e| cmd_experiment("turnaround", Some(&cfg), dir.path(), Some(4), o, e));
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.starts_with("turnaround_FogOnly n=20"), "{out}");
    let sub = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().is_dir())
        .count();
    assert_eq!(sub, 1);
    let (code, _, _) = capture(|o, e| cmd_experiment("nope", None, dir.path(), None, o, e));
    assert_eq!(code, EXIT_PARSE);
}

#[test]
fn dshell_command_replays_a_script() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("s.txt");
    std::fs::write(&script, "run a --on f1\njobs\n").unwrap();
    let (code, out, err) = capture(|o, e| cmd_dshell(&data("small_tree.json"), Some(&script), 20.0, None, Some(9), o, e));
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("job 1 a ns1 Running ready in 20.0 ms"), "{out}");
}
