use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::dsl::{parse_program_named, ParseError, ProgramDecl, Value};
use crate::runtime::{AppId, FlowEndpoint, FlowId, Runtime, RuntimeError};
use crate::topology::{NodeId, NodeLevel, Topology};

pub const DEFAULT_REUSE_COST_MS: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SpawnMode {
    Shell,
    Cold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum JobState {
    Spawning,
    Running,
    Stopped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Job {
    pub id: u32,
    pub app: String,
    pub namespace: AppId,
    pub nodes: Vec<NodeId>,
    pub state: JobState,
    pub mode: SpawnMode,
    pub spawned_at_ms: f64,
    /// When each node reported up.
    pub started: BTreeMap<NodeId, f64>,
}

impl Job {
    /// Time from the spawn request until the last node is up.
    pub fn startup_ms(&self) -> f64 {
        self.started.values().fold(0.0, |a, t| a.max(t - self.spawned_at_ms))
    }
}

#[derive(Debug, Error)]
pub enum ShellError {
    #[error("nodes not held by this shell: {0}")]
    ResourceViolation(String),
    #[error("no job {0}")]
    UnknownJob(u32),
    #[error("job {0} is not running")]
    NotRunning(u32),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("{0}")]
    Usage(String),
}

struct Pipe {
    from: u32,
    to: u32,
    flows: Vec<FlowId>,
}

/// A distributed shell that holds a set of nodes and launches jobs on
/// subsets of them. Spawn times are simulated.
pub struct DShell {
    rt: Runtime,
    held: BTreeSet<NodeId>,
    reuse_ms: f64,
    clock: f64,
    jobs: Vec<Job>,
    pipes: Vec<Pipe>,
}

impl DShell {
    /// A shell holding every node of `topo`.
    pub fn new(topo: Topology) -> Result<DShell, ShellError> {
        let held = topo.nodes().iter().map(|n| n.id.clone()).collect();
        DShell::holding(topo, held)
    }

    pub fn holding(topo: Topology, held: BTreeSet<NodeId>) -> Result<DShell, ShellError> {
        let missing: Vec<&str> = held.iter().filter(|n| !topo.contains(n)).map(NodeId::as_str).collect();
        if !missing.is_empty() {
            return Err(ShellError::ResourceViolation(missing.join(",")));
        }
        Ok(DShell {
            rt: Runtime::new(topo)?,
            held,
            reuse_ms: DEFAULT_REUSE_COST_MS,
            clock: 0.0,
            jobs: Vec::new(),
            pipes: Vec::new(),
        })
    }

    pub fn with_reuse_cost(mut self, ms: f64) -> Self {
        self.reuse_ms = ms;
        self
    }

    pub fn held(&self) -> &BTreeSet<NodeId> {
        &self.held
    }

    pub fn jobs(&self) -> &[Job] {
        &self.jobs
    }

    pub fn job(&self, id: u32) -> Result<&Job, ShellError> {
        self.jobs.iter().find(|j| j.id == id).ok_or(ShellError::UnknownJob(id))
    }

    pub fn now(&self) -> f64 {
        self.clock
    }

    pub fn runtime(&self) -> &Runtime {
        &self.rt
    }

    pub fn runtime_mut(&mut self) -> &mut Runtime {
        &mut self.rt
    }

    /// Launches `program` on `nodes`. Cold mode starts every node one after
    /// another at its full init cost. Shell mode pays the reuse cost per node
    /// and starts sibling subtrees in parallel once their parent is up.
    pub fn spawn(&mut self, program: ProgramDecl, nodes: &[NodeId], mode: SpawnMode) -> Result<&Job, ShellError> {
        let outside: Vec<&str> = nodes.iter().filter(|n| !self.held.contains(n)).map(NodeId::as_str).collect();
        if !outside.is_empty() {
            return Err(ShellError::ResourceViolation(outside.join(",")));
        }
        let name = program.app_name.clone();
        let ns = self.rt.deploy(program, nodes)?;
        let tree = self.rt.app_tree(ns)?.clone();
        let t0 = self.clock;
        let mut started = BTreeMap::new();
        match mode {
            SpawnMode::Cold => {
                let mut t = t0;
                for n in breadth_first(&tree.root, |n| tree_children(&tree.nodes, n)) {
                    t += self.rt.topology().node(&n).map_or(0.0, |s| s.init_cost_ms);
                    started.insert(n, t);
                }
            }
            SpawnMode::Shell => {
                for n in breadth_first(&tree.root, |n| tree_children(&tree.nodes, n)) {
                    let parent_up = tree.nodes[&n].parent.as_ref().map_or(t0, |p| started[p]);
                    started.insert(n, parent_up + self.reuse_ms);
                }
            }
        }
        let down = started.keys().any(|n| self.rt.topology().is_down(n, t0));
        let state = if down {
            self.rt.undeploy(ns)?;
            JobState::Failed
        } else {
            JobState::Running
        };
        let job = Job {
            id: self.jobs.len() as u32 + 1,
            app: name,
            namespace: ns,
            nodes: tree.nodes.keys().cloned().collect(),
            state,
            mode,
            spawned_at_ms: t0,
            started,
        };
        self.clock = t0 + job.startup_ms();
        self.jobs.push(job);
        Ok(self.jobs.last().expect("just pushed"))
    }

    /// Stops a running job and tears down its namespace.
    pub fn kill(&mut self, id: u32) -> Result<(), ShellError> {
        let job = self.running(id)?;
        let ns = job.namespace;
        self.rt.undeploy(ns)?;
        self.jobs.iter_mut().find(|j| j.id == id).expect("checked").state = JobState::Stopped;
        self.pipes.retain(|p| p.from != id && p.to != id);
        Ok(())
    }

    /// Connects `from`'s output to `to` at every shared node of `level`.
    pub fn pipe(&mut self, from: u32, to: u32, level: NodeLevel) -> Result<Vec<FlowEndpoint>, ShellError> {
        let a = self.running(from)?.namespace;
        let b = self.running(to)?.namespace;
        let eps = self.rt.flow_connect(a, b, level)?;
        self.pipes.push(Pipe {
            from,
            to,
            flows: eps.iter().map(|e| e.id).collect(),
        });
        Ok(eps)
    }

    /// Writes `msg` to every pipe leaving job `from`; returns how many flows
    /// carried it.
    pub fn send(&mut self, from: u32, msg: Value) -> Result<usize, ShellError> {
        self.running(from)?;
        let flows: Vec<FlowId> = self.pipes.iter().filter(|p| p.from == from).flat_map(|p| p.flows.clone()).collect();
        for f in &flows {
            self.rt.flow_write(*f, msg.clone())?;
        }
        Ok(flows.len())
    }

    /// Drains everything waiting on the pipes into job `to`.
    pub fn recv(&mut self, to: u32) -> Result<Vec<Value>, ShellError> {
        self.running(to)?;
        let flows: Vec<FlowId> = self.pipes.iter().filter(|p| p.to == to).flat_map(|p| p.flows.clone()).collect();
        let mut out = Vec::new();
        for f in flows {
            while let Some(v) = self.rt.flow_read(f)? {
                out.push(v);
            }
        }
        Ok(out)
    }

    fn running(&self, id: u32) -> Result<&Job, ShellError> {
        let job = self.job(id)?;
        if job.state != JobState::Running {
            return Err(ShellError::NotRunning(id));
        }
        Ok(job)
    }

    /// The held hierarchy, one node per line, with the running jobs on it.
    pub fn tree(&self) -> String {
        let topo = self.rt.topology();
        let mut out = String::new();
        let depth = |n: &NodeId| topo.path_to_root(n).len() - 1;
        let mut stack = vec![topo.cloud().clone()];
        while let Some(n) = stack.pop() {
            let mut kids: Vec<NodeId> = topo.children(&n).into_iter().cloned().collect();
            kids.reverse();
            stack.extend(kids);
            if !self.held.contains(&n) {
                continue;
            }
            let jobs: Vec<String> = self
                .jobs
                .iter()
                .filter(|j| j.state == JobState::Running && j.nodes.contains(&n))
                .map(|j| j.id.to_string())
                .collect();
            let level = topo.level(&n).expect("in topology");
            let _ = writeln!(
                out,
                "{}{} [{}] jobs={}",
                "  ".repeat(depth(&n)),
                n,
                level,
                if jobs.is_empty() { "-".to_string() } else { jobs.join(",") }
            );
        }
        out
    }

    /// Runs one REPL line and returns its output. `Ok(None)` means quit.
    pub fn exec_line(&mut self, line: &str) -> Result<Option<String>, ShellError> {
        let words: Vec<&str> = line.split_whitespace().collect();
        let Some((&cmd, args)) = words.split_first() else {
            return Ok(Some(String::new()));
        };
        let out = match cmd {
            "run" => self.cmd_run(args)?,
            "jobs" => self.cmd_jobs(),
            "kill" => {
                let id = job_arg(args.first())?;
                self.kill(id)?;
                format!("job {id} stopped\n")
            }
            "pipe" => {
                let (a, b) = (job_arg(args.first())?, job_arg(args.get(1))?);
                let level = match args.get(2) {
                    None => NodeLevel::Fog,
                    Some(s) => NodeLevel::parse(s).ok_or_else(|| ShellError::Usage(format!("unknown level {s}")))?,
                };
                let eps = self.pipe(a, b, level)?;
                let at: Vec<&str> = eps.iter().map(|e| e.node.as_str()).collect();
                format!("pipe {a} -> {b} at {}\n", at.join(","))
            }
            "send" => {
                let id = job_arg(args.first())?;
                let n = self.send(id, Value::Str(args[1..].join(" ")))?;
                format!("sent on {n} flow(s)\n")
            }
            "recv" => {
                let id = job_arg(args.first())?;
                let vals = self.recv(id)?;
                vals.iter().map(|v| format!("{v}\n")).collect()
            }
            "tree" => self.tree(),
            "quit" | "exit" => return Ok(None),
            "help" => USAGE.to_string(),
            other => format!("unknown command {other:?}\n{USAGE}"),
        };
        Ok(Some(out))
    }

    /// Replays a script; errors are reported inline and the session goes on.
    pub fn run_script(&mut self, script: &str) -> String {
        let mut out = String::new();
        for line in script.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let _ = writeln!(out, "> {line}");
            match self.exec_line(line) {
                Ok(Some(text)) => out.push_str(&text),
                Ok(None) => break,
                Err(e) => {
                    let _ = writeln!(out, "error: {e}");
                }
            }
        }
        out
    }

    fn cmd_run(&mut self, args: &[&str]) -> Result<String, ShellError> {
        let Some((&name, opts)) = args.split_first() else {
            return Err(ShellError::Usage("run <name> [--cold] [--on n1,n2] [--file path]".into()));
        };
        let mut mode = SpawnMode::Shell;
        let mut nodes: Vec<NodeId> = self.held.iter().cloned().collect();
        let mut src = String::from("jasync function main() {}");
        let mut it = opts.iter();
        while let Some(&o) = it.next() {
            match o {
                "--cold" => mode = SpawnMode::Cold,
                "--shell" => mode = SpawnMode::Shell,
                "--on" => {
                    let list = it.next().ok_or_else(|| ShellError::Usage("--on needs a node list".into()))?;
                    nodes = list.split(',').map(NodeId::new).collect();
                }
                "--file" => {
                    let path = it.next().ok_or_else(|| ShellError::Usage("--file needs a path".into()))?;
                    src = std::fs::read_to_string(path).map_err(|e| ShellError::Usage(format!("{path}: {e}")))?;
                }
                other => return Err(ShellError::Usage(format!("unknown option {other}"))),
            }
        }
        let program = parse_program_named(name, &src)?;
        let job = self.spawn(program, &nodes, mode)?;
        Ok(format!(
            "job {} {} {} {:?} ready in {:.1} ms\n",
            job.id,
            job.app,
            job.namespace,
            job.state,
            job.startup_ms()
        ))
    }

    fn cmd_jobs(&self) -> String {
        let mut out = String::new();
        for j in &self.jobs {
            let nodes: Vec<&str> = j.nodes.iter().map(NodeId::as_str).collect();
            let _ = writeln!(
                out,
                "{} {} {} {:?} {:?} startup={:.1} nodes={}",
                j.id,
                j.app,
                j.namespace,
                j.state,
                j.mode,
                j.startup_ms(),
                nodes.join(",")
            );
        }
        out
    }
}

const USAGE: &str = "commands:
  run <name> [--cold] [--on n1,n2] [--file path]
  jobs
  kill <job>
  pipe <from> <to> [cloud|fog|device]
  send <job> <text>
  recv <job>
  tree
  quit
";

fn job_arg(s: Option<&&str>) -> Result<u32, ShellError> {
    let s = s.ok_or_else(|| ShellError::Usage("missing job id".into()))?;
    s.parse().map_err(|_| ShellError::Usage(format!("bad job id {s}")))
}

fn tree_children(nodes: &BTreeMap<NodeId, crate::runtime::AppNode>, n: &NodeId) -> Vec<NodeId> {
    nodes
        .values()
        .filter(|m| m.parent.as_ref() == Some(n))
        .map(|m| m.id.clone())
        .collect()
}

fn breadth_first(root: &NodeId, children: impl Fn(&NodeId) -> Vec<NodeId>) -> Vec<NodeId> {
    let mut out = vec![root.clone()];
    let mut k = 0;
    while k < out.len() {
        let next = children(&out[k]);
        out.extend(next);
        k += 1;
    }
    out
}
