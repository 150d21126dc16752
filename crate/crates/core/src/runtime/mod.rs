//! Deterministic execution of controller-worker app trees over a topology.
//!
//! A [`Runtime`] owns one simulation: the event queue, trace, per-node RNG
//! substreams and every deployed app. All state changes happen while an
//! event is processed, so two runtimes built from the same inputs produce
//! the same trace.
//!
//! Handlers are host closures bound to declared function names. They see
//! the runtime only through [`Ctx`], and their side effects take place at
//! the simulated instant the invocation completes.

mod app;
mod calls;
mod ctx;
mod data;
mod types;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

pub use app::{AppId, AppNode, AppTree, Role};
pub use calls::{select_level, Selection};
pub use ctx::Ctx;
pub use types::*;

use crate::dsl::{validate_program, EvalError, ProgramDecl, Value};
use crate::topology::{EventQueue, LinkClass, NodeId, NodeLevel, RngStreams, SimTrace, Topology, TopologyError};

/// Service time used when none is given.
pub const DEFAULT_SERVICE_MS: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuntimeError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("deployment subset is empty")]
    EmptySubset,
    #[error("deployment subset is not connected (roots: {0})")]
    DisconnectedSubset(String),
    #[error("program has diagnostics: {0}")]
    InvalidProgram(String),
    #[error("unknown app {0}")]
    UnknownApp(AppId),
    #[error("node {node} is not part of app {app}")]
    NotInApp { app: AppId, node: String },
    #[error("function {0:?} is not declared")]
    UnknownFunction(String),
    #[error("function {0:?} already has a handler")]
    AlreadyBound(String),
    #[error("function {0:?} has no handler")]
    UnboundHandler(String),
    #[error("{caller} cannot call {target}: not in its subtree")]
    SubtreeViolation { caller: String, target: String },
    #[error("level violation: {0}")]
    LevelViolation(String),
    #[error("{0:?} is declared with a different kind")]
    KindMismatch(String),
    #[error("variable {0:?} is not declared")]
    UnknownVariable(String),
    #[error("value type does not match declaration of {0:?}")]
    TypeMismatch(String),
    #[error("{0} may not originate a broadcast")]
    OriginViolation(String),
    #[error("both flow ends belong to the same app")]
    SameAppViolation,
    #[error("unknown flow")]
    UnknownFlow,
    #[error("node {0} is down")]
    NodeDown(String),
    #[error("{0} is not a device")]
    NotADevice(String),
    #[error("missing latency parameters for {0}")]
    MissingLatency(LinkClass),
    #[error("gate evaluation failed: {0}")]
    Gate(#[from] EvalError),
}

pub type Behavior = Box<dyn FnMut(&mut Ctx<'_>) -> Value + Send>;

struct Bound {
    service_ms: f64,
    behavior: Option<Behavior>,
}

#[derive(Default)]
struct NodeData {
    /// Volatile handler state; cleared when the node fails.
    kv: BTreeMap<String, Value>,
    cells: BTreeMap<String, (u64, Value)>,
    /// var -> source -> records, each a prefix of that source's writes.
    logs: BTreeMap<String, BTreeMap<String, Vec<Record>>>,
}

struct AppState {
    tree: AppTree,
    program: ProgramDecl,
    handlers: BTreeMap<String, Bound>,
    logger_hooks: BTreeMap<String, String>,
    broadcast_hooks: BTreeMap<String, String>,
    data: BTreeMap<NodeId, NodeData>,
    versions: BTreeMap<String, u64>,
}

struct DeviceRoute {
    current: Attachment,
    candidates: Vec<NodeId>,
}

type StreamKey = (AppId, String, String);

/// Durable per-source staging plus a go-back-N send cursor.
struct SourceStream {
    origin: NodeId,
    records: Vec<Record>,
    next: usize,
    last_arrival: f64,
    dest: Option<NodeId>,
}

type ReplKey = (AppId, String, NodeId, NodeId);

struct ReplStream {
    items: Vec<(String, u64)>,
    next: usize,
    last_arrival: f64,
}

struct Flow {
    ep: FlowEndpoint,
    buf: VecDeque<Value>,
    hook: Option<String>,
}

struct Exec {
    call: CallId,
    node: NodeId,
    trigger: Trigger,
    arrived: f64,
    /// Dispatched and not yet lost to a failure.
    live: bool,
}

struct Deferred {
    id: u64,
    call: CallId,
    /// `None` defers the whole level selection.
    node: Option<NodeId>,
}

struct CallState {
    app: AppId,
    caller: NodeId,
    func: String,
    args: Vec<Value>,
    direction: Direction,
    sync: bool,
    issued: f64,
    /// exec or deferral id -> node to blame on timeout
    pending: BTreeMap<u64, NodeId>,
    entries: Vec<CallEntry>,
    none_eligible: bool,
    done: bool,
}

enum Ev {
    Timer(u64),
    Fail(NodeId),
    Heal(NodeId),
    Dispatch(u64),
    Arrive(u64),
    Complete(u64),
    Respond(u64, Value),
    Deadline(CallId),
    Write {
        app: AppId,
        node: NodeId,
        source: String,
        var: String,
        value: Value,
    },
    LogArrive {
        key: StreamKey,
        dest: NodeId,
        seq: u64,
    },
    ReplArrive {
        key: ReplKey,
        idx: usize,
    },
    BcastArrive {
        app: AppId,
        var: String,
        node: NodeId,
        version: u64,
        value: Value,
    },
}

pub struct Runtime {
    topo: Topology,
    queue: EventQueue<Ev>,
    trace: SimTrace,
    rng: RngStreams,
    apps: BTreeMap<AppId, AppState>,
    next_app: u32,
    routes: BTreeMap<NodeId, DeviceRoute>,
    shadows: BTreeMap<NodeId, Vec<NodeId>>,
    busy_until: BTreeMap<NodeId, f64>,
    calls: BTreeMap<CallId, CallState>,
    outcomes: BTreeMap<CallId, CallOutcome>,
    next_call: u64,
    execs: BTreeMap<u64, Exec>,
    next_id: u64,
    deferred: Vec<Deferred>,
    flows: Vec<Flow>,
    streams: BTreeMap<StreamKey, SourceStream>,
    repl: BTreeMap<ReplKey, ReplStream>,
    notes: VecDeque<Notification>,
    /// Bound on sync calls and on how long a blocked gate may wait.
    pub sync_timeout_ms: f64,
}

impl Runtime {
    pub fn new(topo: Topology) -> Result<Runtime, RuntimeError> {
        topo.latency.validate()?;
        for n in topo.nodes() {
            if let Some(p) = &n.parent {
                let class = topo.link_class(&n.id, p).expect("tree hops have a class");
                if topo.latency.get(class).is_none() {
                    return Err(RuntimeError::MissingLatency(class));
                }
            }
        }
        let to_cloud = topo.latency.to_cloud.map_or(30.0, |l| l.mean_ms);
        let mut rt = Runtime {
            rng: RngStreams::new(topo.seed),
            queue: EventQueue::new(),
            trace: SimTrace::default(),
            apps: BTreeMap::new(),
            next_app: 1,
            routes: BTreeMap::new(),
            shadows: BTreeMap::new(),
            busy_until: BTreeMap::new(),
            calls: BTreeMap::new(),
            outcomes: BTreeMap::new(),
            next_call: 1,
            execs: BTreeMap::new(),
            next_id: 1,
            deferred: Vec::new(),
            flows: Vec::new(),
            streams: BTreeMap::new(),
            repl: BTreeMap::new(),
            notes: VecDeque::new(),
            sync_timeout_ms: 10.0 * to_cloud,
            topo,
        };
        let windows = rt.topo.failures.windows.clone();
        for w in windows {
            rt.schedule_window(&w.node, w.fail_at_ms, w.heal_at_ms);
        }
        Ok(rt)
    }

    fn schedule_window(&mut self, node: &NodeId, fail: f64, heal: Option<f64>) {
        let now = self.now();
        self.push_event(fail.max(now), Ev::Fail(node.clone()));
        if let Some(h) = heal {
            self.push_event(h.max(now), Ev::Heal(node.clone()));
        }
    }

    fn push_event(&mut self, at: f64, ev: Ev) {
        let at = at.max(self.queue.now());
        self.queue.schedule(at, ev).expect("events are never scheduled in the past");
    }

    pub fn now(&self) -> f64 {
        self.queue.now()
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn trace(&self) -> &SimTrace {
        &self.trace
    }

    pub fn is_down(&self, node: &NodeId) -> bool {
        self.topo.is_down(node, self.now())
    }

    /// Adds a failure window; the node fails at `fail_at_ms` and, if given,
    /// heals at `heal_at_ms`.
    pub fn inject_failure(&mut self, node: &NodeId, fail_at_ms: f64, heal_at_ms: Option<f64>) -> Result<(), RuntimeError> {
        if fail_at_ms < self.now() {
            return Err(TopologyError::PastEvent {
                at_ms: fail_at_ms,
                now_ms: self.now(),
            }
            .into());
        }
        self.topo.inject_failure(node, fail_at_ms, heal_at_ms)?;
        self.schedule_window(node, fail_at_ms, heal_at_ms);
        Ok(())
    }

    fn tr(&mut self, kind: &str, node: &str, detail: impl Into<String>) {
        let t = self.now();
        self.trace.push(t, kind, node, detail);
    }

    // ---- deployment ----

    pub fn deploy(&mut self, program: ProgramDecl, subset: &[NodeId]) -> Result<AppId, RuntimeError> {
        if let Some(d) = validate_program(&program).first() {
            return Err(RuntimeError::InvalidProgram(d.to_string()));
        }
        let ns = AppId(self.next_app);
        let tree = AppTree::build(&self.topo, &program.app_name, ns, subset)?;
        self.next_app += 1;
        let data = tree.nodes.keys().map(|n| (n.clone(), NodeData::default())).collect();
        let nodes: Vec<&str> = tree.nodes.keys().map(NodeId::as_str).collect();
        let detail = format!("app={} name={} root={} nodes={}", ns, program.app_name, tree.root, nodes.join(","));
        let root = tree.root.clone();
        self.apps.insert(
            ns,
            AppState {
                tree,
                program,
                handlers: BTreeMap::new(),
                logger_hooks: BTreeMap::new(),
                broadcast_hooks: BTreeMap::new(),
                data,
                versions: BTreeMap::new(),
            },
        );
        self.tr("deploy", root.as_str(), detail);
        Ok(ns)
    }

    /// Tears down an app and everything in its namespace.
    pub fn undeploy(&mut self, app: AppId) -> Result<(), RuntimeError> {
        let st = self.apps.remove(&app).ok_or(RuntimeError::UnknownApp(app))?;
        self.streams.retain(|k, _| k.0 != app);
        self.repl.retain(|k, _| k.0 != app);
        for f in &mut self.flows {
            if f.ep.source == app || f.ep.sink == app {
                f.buf.clear();
                f.hook = None;
            }
        }
        let dead: BTreeSet<CallId> = self.calls.iter().filter(|(_, c)| c.app == app).map(|(id, _)| *id).collect();
        self.calls.retain(|id, _| !dead.contains(id));
        self.execs.retain(|_, e| !dead.contains(&e.call));
        self.deferred.retain(|d| !dead.contains(&d.call));
        self.tr("teardown", st.tree.root.as_str(), format!("app={app}"));
        Ok(())
    }

    pub fn app_tree(&self, app: AppId) -> Result<&AppTree, RuntimeError> {
        Ok(&self.app(app)?.tree)
    }

    pub fn apps(&self) -> impl Iterator<Item = &AppTree> {
        self.apps.values().map(|a| &a.tree)
    }

    fn app(&self, app: AppId) -> Result<&AppState, RuntimeError> {
        self.apps.get(&app).ok_or(RuntimeError::UnknownApp(app))
    }

    fn app_mut(&mut self, app: AppId) -> Result<&mut AppState, RuntimeError> {
        self.apps.get_mut(&app).ok_or(RuntimeError::UnknownApp(app))
    }

    fn member(&self, app: AppId, node: &NodeId) -> Result<&AppNode, RuntimeError> {
        self.app(app)?.tree.node(node).ok_or_else(|| RuntimeError::NotInApp {
            app,
            node: node.to_string(),
        })
    }

    pub fn register_handler<F>(&mut self, app: AppId, func: &str, service_ms: f64, behavior: F) -> Result<(), RuntimeError>
    where
        F: FnMut(&mut Ctx<'_>) -> Value + Send + 'static,
    {
        let st = self.app_mut(app)?;
        if st.program.func(func).is_none() {
            return Err(RuntimeError::UnknownFunction(func.to_string()));
        }
        if st.handlers.contains_key(func) {
            return Err(RuntimeError::AlreadyBound(func.to_string()));
        }
        st.handlers.insert(
            func.to_string(),
            Bound {
                service_ms: service_ms.max(0.0),
                behavior: Some(Box::new(behavior)),
            },
        );
        Ok(())
    }

    /// Runs `func` locally wherever a record of logger `var` is accepted at
    /// its declared level. Args: value, source, write time.
    pub fn on_logger(&mut self, app: AppId, var: &str, func: &str) -> Result<(), RuntimeError> {
        self.check_hook(app, var, func, false)?;
        self.app_mut(app)?.logger_hooks.insert(var.into(), func.into());
        Ok(())
    }

    /// Runs `func` locally on every node that accepts a new version of
    /// broadcaster `var`. Args: value, version.
    pub fn on_broadcast(&mut self, app: AppId, var: &str, func: &str) -> Result<(), RuntimeError> {
        self.check_hook(app, var, func, true)?;
        self.app_mut(app)?.broadcast_hooks.insert(var.into(), func.into());
        Ok(())
    }

    fn check_hook(&self, app: AppId, var: &str, func: &str, broadcaster: bool) -> Result<(), RuntimeError> {
        let st = self.app(app)?;
        let decl = st.program.data(var).ok_or_else(|| RuntimeError::UnknownVariable(var.into()))?;
        if decl.is_broadcaster() != broadcaster {
            return Err(RuntimeError::KindMismatch(var.into()));
        }
        if !st.handlers.contains_key(func) {
            return Err(RuntimeError::UnboundHandler(func.into()));
        }
        Ok(())
    }

    // ---- stepping ----

    pub fn schedule_timer(&mut self, at: f64, tag: u64) -> Result<(), RuntimeError> {
        self.queue.schedule(at, Ev::Timer(tag))?;
        Ok(())
    }

    /// Processes events until one produces a notification.
    pub fn step(&mut self) -> Option<Notification> {
        loop {
            if let Some(n) = self.notes.pop_front() {
                return Some(n);
            }
            let ev = self.queue.pop()?;
            self.handle(ev.payload);
        }
    }

    /// Processes every event up to and including `t_ms` and returns the
    /// notifications raised, leaving the clock at `t_ms`.
    pub fn run_until(&mut self, t_ms: f64) -> Vec<Notification> {
        let mut out: Vec<Notification> = self.notes.drain(..).collect();
        while let Some(ev) = self.queue.pop_until(t_ms) {
            self.handle(ev.payload);
            out.extend(self.notes.drain(..));
        }
        self.queue.advance_to(t_ms);
        out
    }

    /// Runs until the queue is empty.
    pub fn run(&mut self) -> Vec<Notification> {
        let mut out: Vec<Notification> = self.notes.drain(..).collect();
        while let Some(ev) = self.queue.pop() {
            self.handle(ev.payload);
            out.extend(self.notes.drain(..));
        }
        out
    }

    pub fn outcome(&self, call: CallId) -> Option<&CallOutcome> {
        self.outcomes.get(&call)
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::Timer(tag) => {
                let at = self.now();
                self.notes.push_back(Notification::Timer { tag, at });
            }
            Ev::Fail(node) => self.on_fail(node),
            Ev::Heal(node) => self.on_heal(node),
            Ev::Dispatch(id) => self.dispatch_exec(id),
            Ev::Arrive(id) => self.on_arrive(id),
            Ev::Complete(id) => self.on_complete(id),
            Ev::Respond(id, v) => self.on_respond(id, v),
            Ev::Deadline(call) => self.on_deadline(call),
            Ev::Write {
                app,
                node,
                source,
                var,
                value,
            } => {
                if let Err(e) = self.write_record(app, &node, source, &var, value) {
                    self.tr("log-reject", node.as_str(), format!("var={var} err={e}"));
                }
            }
            Ev::LogArrive { key, dest, seq } => self.on_log_arrive(key, dest, seq),
            Ev::ReplArrive { key, idx } => self.on_repl_arrive(key, idx),
            Ev::BcastArrive {
                app,
                var,
                node,
                version,
                value,
            } => self.accept_broadcast(app, &var, &node, version, value),
        }
    }

    fn on_fail(&mut self, node: NodeId) {
        for st in self.apps.values_mut() {
            if let Some(d) = st.data.get_mut(&node) {
                d.kv.clear();
            }
        }
        self.busy_until.remove(&node);
        self.tr("fail", node.as_str(), "");
        let at = self.now();
        self.notes.push_back(Notification::NodeFailed { node, at });
    }

    fn on_heal(&mut self, node: NodeId) {
        if self.is_down(&node) {
            return;
        }
        self.tr("heal", node.as_str(), "");
        let at = self.now();
        self.notes.push_back(Notification::NodeHealed { node, at });
        self.flush_all();
    }

    // ---- paths ----

    /// Controller parent of `n` inside `app`, honoring device attachments.
    fn eff_parent(&self, app: AppId, n: &NodeId) -> Option<NodeId> {
        let st = self.apps.get(&app)?;
        let node = st.tree.node(n)?;
        if node.level == NodeLevel::Device {
            if let Some(r) = self.routes.get(n) {
                match r.current.node() {
                    None => return None,
                    Some(p) if st.tree.contains(p) => return Some(p.clone()),
                    Some(_) => {}
                }
            }
        }
        node.parent.clone()
    }

    /// `n` first, then its controllers up to the app root.
    fn eff_chain(&self, app: AppId, n: &NodeId) -> Vec<NodeId> {
        let mut out = vec![n.clone()];
        let mut cur = n.clone();
        while let Some(p) = self.eff_parent(app, &cur) {
            if out.contains(&p) {
                break;
            }
            out.push(p.clone());
            cur = p;
        }
        out
    }

    fn eff_children(&self, app: AppId, n: &NodeId) -> Vec<NodeId> {
        let Some(st) = self.apps.get(&app) else {
            return Vec::new();
        };
        st.tree
            .nodes
            .keys()
            .filter(|m| *m != n && self.eff_parent(app, m).as_ref() == Some(n))
            .cloned()
            .collect()
    }

    /// Pre-order subtree of `n` under the current attachments.
    pub fn subtree(&self, app: AppId, n: &NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![n.clone()];
        while let Some(x) = stack.pop() {
            let mut kids = self.eff_children(app, &x);
            kids.reverse();
            out.push(x);
            stack.extend(kids);
        }
        out
    }

    pub fn in_subtree(&self, app: AppId, root: &NodeId, n: &NodeId) -> bool {
        self.eff_chain(app, n).contains(root)
    }

    fn eff_path(&self, app: AppId, a: &NodeId, b: &NodeId) -> Option<Vec<NodeId>> {
        let up_a = self.eff_chain(app, a);
        let up_b = self.eff_chain(app, b);
        let pos_a = up_a.iter().position(|x| up_b.contains(x))?;
        let pos_b = up_b.iter().position(|x| *x == up_a[pos_a]).expect("common node");
        let mut path = up_a[..=pos_a].to_vec();
        path.extend(up_b[..pos_b].iter().rev().cloned());
        Some(path)
    }

    fn path_up(&self, path: &[NodeId]) -> bool {
        let t = self.now();
        path.iter().all(|n| !self.topo.is_down(n, t))
    }

    fn hop(&mut self, a: &NodeId, b: &NodeId) -> f64 {
        let Some(class) = self.topo.link_class(a, b) else {
            return 0.0;
        };
        let rng = self.rng.get(a.as_str(), "link");
        self.topo.latency.sample(class, rng).unwrap_or(0.0)
    }

    fn path_latency(&mut self, path: &[NodeId]) -> f64 {
        let mut total = 0.0;
        for w in path.windows(2) {
            total += self.hop(&w[0], &w[1]);
        }
        total
    }

    // ---- attachment ----

    pub fn attach_device(&mut self, device: &NodeId, policy: AttachPolicy) -> Result<Attachment, RuntimeError> {
        let spec = self.topo.require(device)?;
        if spec.level != NodeLevel::Device {
            return Err(RuntimeError::NotADevice(device.to_string()));
        }
        let parent = spec.parent.clone();
        let candidates = match policy {
            AttachPolicy::Static => parent.into_iter().collect(),
            AttachPolicy::Allocation { primary, shadows } => {
                for n in std::iter::once(&primary).chain(shadows.iter()) {
                    self.topo.require(n)?;
                }
                std::iter::once(primary).chain(shadows).collect()
            }
            AttachPolicy::Random => {
                let now = self.now();
                let mut live: Vec<NodeId> = self
                    .topo
                    .fogs()
                    .into_iter()
                    .filter(|f| !self.topo.is_down(f, now))
                    .cloned()
                    .collect();
                if live.is_empty() {
                    Vec::new()
                } else {
                    use rand::Rng;
                    let pick = self.rng.get(device.as_str(), "attach").gen_range(0..live.len());
                    let chosen = live.remove(pick);
                    std::iter::once(chosen).chain(live).collect()
                }
            }
        };
        let current = self.first_live(&candidates);
        self.routes.insert(
            device.clone(),
            DeviceRoute {
                current: current.clone(),
                candidates,
            },
        );
        self.tr("attach", device.as_str(), format!("to={}", attach_label(&current)));
        self.reship_from(device);
        Ok(current)
    }

    /// Pins a device to a given attachment without any liveness check.
    pub fn set_attachment(&mut self, device: &NodeId, to: Attachment) -> Result<(), RuntimeError> {
        let spec = self.topo.require(device)?;
        if spec.level != NodeLevel::Device {
            return Err(RuntimeError::NotADevice(device.to_string()));
        }
        let candidates = to.node().cloned().into_iter().collect();
        self.tr("attach", device.as_str(), format!("to={}", attach_label(&to)));
        self.routes.insert(device.clone(), DeviceRoute { current: to, candidates });
        self.reship_from(device);
        Ok(())
    }

    fn first_live(&self, candidates: &[NodeId]) -> Attachment {
        let now = self.now();
        if let Some(f) = candidates.iter().find(|f| !self.topo.is_down(f, now)) {
            return match self.topo.level(f) {
                Some(NodeLevel::Cloud) => Attachment::Cloud(f.clone()),
                _ => Attachment::Fog(f.clone()),
            };
        }
        let cloud = self.topo.cloud().clone();
        if !self.topo.is_down(&cloud, now) {
            Attachment::Cloud(cloud)
        } else {
            Attachment::Detached
        }
    }

    /// Moves a device to its first live candidate (primary, then shadows in
    /// order), else the cloud, else leaves it detached.
    pub fn reattach_on_failure(&mut self, device: &NodeId) -> Result<Attachment, RuntimeError> {
        if !self.routes.contains_key(device) {
            self.attach_device(device, AttachPolicy::Static)?;
        }
        let r = &self.routes[device];
        let next = self.first_live(&r.candidates.clone());
        let prev = std::mem::replace(&mut self.routes.get_mut(device).expect("present").current, next.clone());
        self.tr(
            "reattach",
            device.as_str(),
            format!("from={} to={}", attach_label(&prev), attach_label(&next)),
        );
        self.reship_from(device);
        Ok(next)
    }

    pub fn attachment(&self, device: &NodeId) -> Option<&Attachment> {
        self.routes.get(device).map(|r| &r.current)
    }

    /// Declares where a fog's shadow replicas live.
    pub fn set_shadows(&mut self, fog: &NodeId, shadows: Vec<NodeId>) -> Result<(), RuntimeError> {
        self.topo.require(fog)?;
        for s in &shadows {
            self.topo.require(s)?;
        }
        if !shadows.is_empty() && self.topo.latency.fog_fog.is_none() {
            return Err(RuntimeError::MissingLatency(LinkClass::FogToFog));
        }
        self.shadows.insert(fog.clone(), shadows);
        Ok(())
    }

    // ---- volatile state ----

    pub fn kv_get(&self, app: AppId, node: &NodeId, key: &str) -> Option<&Value> {
        self.apps.get(&app)?.data.get(node)?.kv.get(key)
    }

    /// Keys of the volatile store at `node` starting with `prefix`, sorted.
    pub fn kv_keys(&self, app: AppId, node: &NodeId, prefix: &str) -> Vec<String> {
        self.apps
            .get(&app)
            .and_then(|a| a.data.get(node))
            .map(|d| d.kv.keys().filter(|k| k.starts_with(prefix)).cloned().collect())
            .unwrap_or_default()
    }

    pub fn kv_set(&mut self, app: AppId, node: &NodeId, key: &str, value: Value) -> Result<(), RuntimeError> {
        self.member(app, node)?;
        let d = self.app_mut(app)?.data.get_mut(node).expect("member");
        d.kv.insert(key.to_string(), value);
        Ok(())
    }
}

fn attach_label(a: &Attachment) -> String {
    match a {
        Attachment::Fog(n) | Attachment::Cloud(n) => n.to_string(),
        Attachment::Detached => "detached".into(),
    }
}

#[cfg(test)]
mod tests;
