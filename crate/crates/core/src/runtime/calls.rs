use std::collections::BTreeMap;

use super::*;
use crate::dsl::{evaluate_gate, CallKind, EvalContext, GateExpr, Lookup, Readiness};

/// Outcome of the bottom-up placement scan.
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    /// Run on `executors` (all at the chosen level); `blocked` nodes at the
    /// same level wait for data before their gate can be decided.
    Run {
        executors: Vec<NodeId>,
        blocked: Vec<NodeId>,
    },
    /// The lowest level with any undecided gate has no passing node yet.
    Defer(String),
    NoneEligible,
}

/// Scans device, fog, then cloud and stops at the first level where some
/// candidate passes. A level whose gates are all false is skipped; a level
/// with no passes but some blocked gates defers the decision.
pub fn select_level(groups: &[(NodeId, NodeLevel, Readiness)]) -> Selection {
    for level in NodeLevel::BOTTOM_UP {
        let at: Vec<&(NodeId, NodeLevel, Readiness)> = groups.iter().filter(|g| g.1 == level).collect();
        let executors: Vec<NodeId> = at.iter().filter(|g| g.2 == Readiness::Ready(true)).map(|g| g.0.clone()).collect();
        let blocked: Vec<(NodeId, String)> = at
            .iter()
            .filter_map(|g| match &g.2 {
                Readiness::Blocked(v) => Some((g.0.clone(), v.clone())),
                _ => None,
            })
            .collect();
        if !executors.is_empty() {
            return Selection::Run {
                executors,
                blocked: blocked.into_iter().map(|b| b.0).collect(),
            };
        }
        if let Some((_, var)) = blocked.into_iter().next() {
            return Selection::Defer(var);
        }
    }
    Selection::NoneEligible
}

/// Read-only view of one node's context for gate evaluation.
pub(super) struct NodeView<'a> {
    pub rt: &'a Runtime,
    pub app: AppId,
    pub node: &'a NodeId,
}

impl EvalContext for NodeView<'_> {
    fn sys_type(&self) -> NodeLevel {
        self.rt.topo.level(self.node).unwrap_or_default()
    }

    fn sys_rank(&self) -> i64 {
        self.rt.topo.node(self.node).map_or(0, |n| n.rank as i64)
    }

    fn lookup(&self, var: &str) -> Lookup {
        let Some(st) = self.rt.apps.get(&self.app) else {
            return Lookup::Absent;
        };
        let Some(decl) = st.program.data(var) else {
            return Lookup::Absent;
        };
        match decl.logger_level() {
            None => match st.data.get(self.node).and_then(|d| d.cells.get(var)) {
                Some((_, v)) => Lookup::Value(v.clone()),
                None => Lookup::Undelivered,
            },
            // a logger is read where it is stored: this node or the
            // controller above it at the declared level
            Some(level) => {
                let holder = self
                    .rt
                    .eff_chain(self.app, self.node)
                    .into_iter()
                    .find(|n| self.rt.topo.level(n) == Some(level));
                let latest = holder
                    .and_then(|h| st.data.get(&h))
                    .and_then(|d| d.logs.get(var))
                    .and_then(|by_src| {
                        crate::dsl::latest_of_latest(by_src.values().filter_map(|recs| recs.last()).map(|r| (r.t_ms, &r.value))).cloned()
                    });
                match latest {
                    Some(v) => Lookup::Value(v),
                    None => Lookup::NoData,
                }
            }
        }
    }
}

impl Runtime {
    /// Gate state of `func` at `node`; ungated functions are always ready.
    pub fn gate_readiness(&self, app: AppId, node: &NodeId, func: &str) -> Result<Readiness, RuntimeError> {
        let st = self.app(app)?;
        self.member(app, node)?;
        let decl = st.program.func(func).ok_or_else(|| RuntimeError::UnknownFunction(func.into()))?;
        match &decl.gate {
            None => Ok(Readiness::Ready(true)),
            Some(g) => Ok(self.eval_gate(app, node, g)?),
        }
    }

    fn eval_gate(&self, app: AppId, node: &NodeId, gate: &GateExpr) -> Result<Readiness, EvalError> {
        let st = &self.apps[&app];
        evaluate_gate(gate, &st.program, &NodeView { rt: self, app, node })
    }

    fn candidates(&self, app: AppId, caller: &NodeId, dir: &Direction) -> Result<Vec<NodeId>, RuntimeError> {
        match dir {
            Direction::Down => Ok(self.subtree(app, caller)),
            Direction::Up => {
                let chain = self.eff_chain(app, caller);
                if chain.len() > 1 {
                    Ok(chain[1..].to_vec())
                } else {
                    Ok(vec![caller.clone()])
                }
            }
            Direction::To(target) => {
                self.member(app, target)?;
                if !self.in_subtree(app, caller, target) {
                    return Err(RuntimeError::SubtreeViolation {
                        caller: caller.to_string(),
                        target: target.to_string(),
                    });
                }
                Ok(vec![target.clone()])
            }
        }
    }

    /// Where a call would run right now, without issuing it.
    pub fn execution_level(&self, app: AppId, caller: &NodeId, func: &str, dir: &Direction) -> Result<Selection, RuntimeError> {
        self.member(app, caller)?;
        let decl = self
            .app(app)?
            .program
            .func(func)
            .ok_or_else(|| RuntimeError::UnknownFunction(func.into()))?;
        let cands = self.candidates(app, caller, dir)?;
        Ok(self.select(app, &cands, decl.gate.as_ref(), dir))
    }

    fn select(&self, app: AppId, cands: &[NodeId], gate: Option<&GateExpr>, dir: &Direction) -> Selection {
        let Some(gate) = gate else {
            let executors: Vec<NodeId> = match dir {
                Direction::Down => {
                    let tree = &self.apps[&app].tree;
                    cands
                        .iter()
                        .filter(|n| tree.node(n).is_some_and(|x| x.role == Role::ControllerWorker))
                        .cloned()
                        .collect()
                }
                Direction::Up | Direction::To(_) => cands.iter().take(1).cloned().collect(),
            };
            return Selection::Run {
                executors,
                blocked: Vec::new(),
            };
        };
        let groups: Vec<(NodeId, NodeLevel, Readiness)> = cands
            .iter()
            .map(|n| {
                let r = self.eval_gate(app, n, gate).unwrap_or(Readiness::Ready(false));
                (n.clone(), self.topo.level(n).unwrap_or_default(), r)
            })
            .collect();
        select_level(&groups)
    }

    /// Issues a remote call. jsync functions report a [`CallOutcome`] once
    /// every executor has answered or timed out; jasync ones once every
    /// executor has run.
    pub fn call(&mut self, app: AppId, caller: &NodeId, func: &str, args: Vec<Value>, dir: Direction) -> Result<CallId, RuntimeError> {
        self.member(app, caller)?;
        let st = self.app(app)?;
        let decl = st.program.func(func).ok_or_else(|| RuntimeError::UnknownFunction(func.into()))?;
        if !st.handlers.contains_key(func) {
            return Err(RuntimeError::UnboundHandler(func.into()));
        }
        let sync = decl.call_kind == CallKind::Jsync;
        let gate = decl.gate.clone();
        if self.is_down(caller) {
            return Err(RuntimeError::NodeDown(caller.to_string()));
        }
        let cands = self.candidates(app, caller, &dir)?;
        let sel = self.select(app, &cands, gate.as_ref(), &dir);
        let id = self.new_call(app, caller, func, args, dir.clone(), sync);
        let dir_label = match &dir {
            Direction::Down => "down".to_string(),
            Direction::Up => "up".to_string(),
            Direction::To(t) => format!("to:{t}"),
        };
        self.tr(
            "call",
            caller.as_str(),
            format!("call={} app={} func={} dir={} sync={}", id.0, app, func, dir_label, sync),
        );
        self.apply_selection(id, sel, Trigger::Call);
        self.maybe_finish(id);
        Ok(id)
    }

    pub fn call_down(&mut self, app: AppId, caller: &NodeId, func: &str, args: Vec<Value>) -> Result<CallId, RuntimeError> {
        self.call(app, caller, func, args, Direction::Down)
    }

    pub fn call_up(&mut self, app: AppId, caller: &NodeId, func: &str, args: Vec<Value>) -> Result<CallId, RuntimeError> {
        self.call(app, caller, func, args, Direction::Up)
    }

    pub fn call_to(&mut self, app: AppId, caller: &NodeId, target: &NodeId, func: &str, args: Vec<Value>) -> Result<CallId, RuntimeError> {
        self.call(app, caller, func, args, Direction::To(target.clone()))
    }

    /// Runs `func` on `node` itself with no network hops.
    pub fn run_local(&mut self, app: AppId, node: &NodeId, func: &str, args: Vec<Value>) -> Result<CallId, RuntimeError> {
        self.member(app, node)?;
        let st = self.app(app)?;
        st.program.func(func).ok_or_else(|| RuntimeError::UnknownFunction(func.into()))?;
        if !st.handlers.contains_key(func) {
            return Err(RuntimeError::UnboundHandler(func.into()));
        }
        if self.is_down(node) {
            return Err(RuntimeError::NodeDown(node.to_string()));
        }
        Ok(self.local_exec(app, node, func, args, Trigger::Local))
    }

    pub(super) fn local_exec(&mut self, app: AppId, node: &NodeId, func: &str, args: Vec<Value>, trigger: Trigger) -> CallId {
        let st = &self.apps[&app];
        let decl = st.program.func(func).expect("checked by caller");
        let sync = decl.call_kind == CallKind::Jsync;
        let gate = decl.gate.clone();
        let sel = self.select(app, std::slice::from_ref(node), gate.as_ref(), &Direction::To(node.clone()));
        let id = self.new_call(app, node, func, args, Direction::To(node.clone()), sync);
        self.apply_selection(id, sel, trigger);
        self.maybe_finish(id);
        id
    }

    fn new_call(&mut self, app: AppId, caller: &NodeId, func: &str, args: Vec<Value>, direction: Direction, sync: bool) -> CallId {
        let id = CallId(self.next_call);
        self.next_call += 1;
        let now = self.now();
        self.calls.insert(
            id,
            CallState {
                app,
                caller: caller.clone(),
                func: func.to_string(),
                args,
                direction,
                sync,
                issued: now,
                pending: BTreeMap::new(),
                entries: Vec::new(),
                none_eligible: false,
                done: false,
            },
        );
        let deadline = now + self.sync_timeout_ms;
        self.push_event(deadline, Ev::Deadline(id));
        id
    }

    fn apply_selection(&mut self, call: CallId, sel: Selection, trigger: Trigger) {
        match sel {
            Selection::Run { executors, blocked } => {
                for n in executors {
                    let id = self.new_exec(call, n, trigger.clone());
                    self.dispatch_exec(id);
                }
                for n in blocked {
                    self.new_deferral(call, Some(n));
                }
            }
            Selection::Defer(var) => {
                let caller = self.calls[&call].caller.clone();
                self.tr("defer", caller.as_str(), format!("call={} on={}", call.0, var));
                self.new_deferral(call, None);
            }
            Selection::NoneEligible => {
                let cs = self.calls.get_mut(&call).expect("live call");
                cs.none_eligible = true;
                let (caller, func) = (cs.caller.clone(), cs.func.clone());
                self.tr("none-eligible", caller.as_str(), format!("call={} func={}", call.0, func));
            }
        }
    }

    fn new_exec(&mut self, call: CallId, node: NodeId, trigger: Trigger) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.calls.get_mut(&call).expect("live call").pending.insert(id, node.clone());
        self.execs.insert(
            id,
            Exec {
                call,
                node,
                trigger,
                arrived: f64::NAN,
                live: false,
            },
        );
        id
    }

    fn new_deferral(&mut self, call: CallId, node: Option<NodeId>) {
        let id = self.next_id;
        self.next_id += 1;
        let cs = self.calls.get_mut(&call).expect("live call");
        let blame = node.clone().unwrap_or_else(|| cs.caller.clone());
        cs.pending.insert(id, blame);
        if let Some(n) = &node {
            let detail = format!("call={} func={}", call.0, cs.func);
            self.tr("blocked", n.as_str(), detail);
        }
        self.deferred.push(Deferred { id, call, node });
    }

    /// Sends an invocation toward its executor, or holds it while the path is
    /// down and the call's deadline allows.
    pub(super) fn dispatch_exec(&mut self, id: u64) {
        let Some(exec) = self.execs.get(&id) else {
            return;
        };
        let Some(cs) = self.calls.get(&exec.call) else {
            self.execs.remove(&id);
            return;
        };
        let (app, caller, node, call) = (cs.app, cs.caller.clone(), exec.node.clone(), exec.call);
        let deadline = cs.issued + self.sync_timeout_ms;
        let Some(path) = self.eff_path(app, &caller, &node) else {
            self.tr("hold", node.as_str(), format!("call={} reason=unreachable", call.0));
            return;
        };
        if self.path_up(&path) {
            let lat = self.path_latency(&path);
            self.tr("dispatch", node.as_str(), format!("call={} from={} lat={:.6}", call.0, caller, lat));
            if let Some(e) = self.execs.get_mut(&id) {
                e.live = true;
            }
            self.push_event(self.now() + lat, Ev::Arrive(id));
            return;
        }
        let now = self.now();
        let heal = path
            .iter()
            .map(|n| self.topo.failures.up_at_or_after(n, now))
            .try_fold(now, |acc, h| h.map(|h| acc.max(h)));
        match heal {
            Some(h) if h <= deadline => {
                self.tr("hold", node.as_str(), format!("call={} until={h}", call.0));
                self.push_event(h, Ev::Dispatch(id));
            }
            _ => self.tr("hold", node.as_str(), format!("call={} reason=down", call.0)),
        }
    }

    pub(super) fn on_arrive(&mut self, id: u64) {
        let now = self.now();
        let Some(exec) = self.execs.get_mut(&id) else {
            return;
        };
        let node = exec.node.clone();
        if self.topo.is_down(&node, now) {
            exec.live = false;
            let call = exec.call;
            self.tr("lost", node.as_str(), format!("call={} at=arrival", call.0));
            return;
        }
        exec.arrived = now;
        let call = exec.call;
        let Some(cs) = self.calls.get(&call) else {
            return;
        };
        let service = self
            .apps
            .get(&cs.app)
            .and_then(|a| a.handlers.get(&cs.func))
            .map_or(0.0, |b| b.service_ms);
        let start = self.busy_until.get(&node).copied().unwrap_or(0.0).max(now);
        let end = start + service;
        self.busy_until.insert(node, end);
        self.push_event(end, Ev::Complete(id));
    }

    pub(super) fn on_complete(&mut self, id: u64) {
        let now = self.now();
        let Some(exec) = self.execs.get(&id) else {
            return;
        };
        let (node, call, trigger, arrived) = (exec.node.clone(), exec.call, exec.trigger.clone(), exec.arrived);
        if !self.topo.failures.up_during(&node, arrived, now) {
            if let Some(e) = self.execs.get_mut(&id) {
                e.live = false;
            }
            self.tr("lost", node.as_str(), format!("call={} at=execution", call.0));
            return;
        }
        let Some(cs) = self.calls.get(&call) else {
            self.execs.remove(&id);
            return;
        };
        let (app, caller, func, args, sync) = (cs.app, cs.caller.clone(), cs.func.clone(), cs.args.clone(), cs.sync);
        let inv = Invocation {
            call,
            app,
            node: node.clone(),
            func: func.clone(),
            args,
            caller: caller.clone(),
            trigger,
        };
        let behavior = self
            .apps
            .get_mut(&app)
            .and_then(|a| a.handlers.get_mut(&func))
            .and_then(|b| b.behavior.take());
        let value = match behavior {
            Some(mut f) => {
                let v = f(&mut Ctx::new(self, inv));
                if let Some(b) = self.apps.get_mut(&app).and_then(|a| a.handlers.get_mut(&func)) {
                    b.behavior = Some(f);
                }
                v
            }
            None => Value::Num(0.0),
        };
        self.tr(
            "exec",
            node.as_str(),
            format!("call={} app={} func={} value={}", call.0, app, func, value),
        );
        self.notes.push_back(Notification::Executed {
            call,
            app,
            node: node.clone(),
            func,
            at: now,
            value: value.clone(),
        });
        if !self.calls.contains_key(&call) {
            // the handler tore the app down
            self.execs.remove(&id);
            return;
        }
        if sync {
            match self.eff_path(app, &node, &caller) {
                Some(path) if self.path_up(&path) => {
                    let lat = self.path_latency(&path);
                    self.push_event(now + lat, Ev::Respond(id, value));
                }
                _ => self.tr("lost", node.as_str(), format!("call={} at=response", call.0)),
            }
        } else {
            self.execs.remove(&id);
            self.resolve(call, id, Ok(value));
        }
    }

    pub(super) fn on_respond(&mut self, id: u64, value: Value) {
        let Some(exec) = self.execs.remove(&id) else {
            return;
        };
        if let Some(cs) = self.calls.get(&exec.call) {
            if self.topo.is_down(&cs.caller, self.now()) {
                let caller = cs.caller.clone();
                self.tr("lost", caller.as_str(), format!("call={} at=caller", exec.call.0));
                self.execs.insert(id, exec);
                return;
            }
        }
        self.resolve(exec.call, id, Ok(value));
    }

    fn resolve(&mut self, call: CallId, id: u64, result: Result<Value, CallFailure>) {
        let Some(cs) = self.calls.get_mut(&call) else {
            return;
        };
        if let Some(node) = cs.pending.remove(&id) {
            cs.entries.push(CallEntry { node, result });
        }
        self.maybe_finish(call);
    }

    fn drop_pending(&mut self, call: CallId, id: u64) {
        if let Some(cs) = self.calls.get_mut(&call) {
            cs.pending.remove(&id);
        }
        self.maybe_finish(call);
    }

    fn maybe_finish(&mut self, call: CallId) {
        let Some(cs) = self.calls.get(&call) else {
            return;
        };
        if cs.done || !cs.pending.is_empty() {
            return;
        }
        let cs = self.calls.remove(&call).expect("present");
        let failed = cs.entries.iter().filter(|e| e.result.is_err()).count();
        let status = if cs.entries.is_empty() && cs.none_eligible {
            CallStatus::NoneEligible
        } else if failed > 0 && failed == cs.entries.len() {
            CallStatus::TotalTimeout
        } else if failed > 0 {
            CallStatus::Partial
        } else {
            CallStatus::Complete
        };
        let outcome = CallOutcome {
            call,
            issued_ms: cs.issued,
            resumed_ms: self.now(),
            status,
            entries: cs.entries,
        };
        if cs.sync {
            self.tr(
                "resume",
                cs.caller.as_str(),
                format!("call={} status={:?} results={}", call.0, status, outcome.entries.len()),
            );
        }
        self.execs.retain(|_, e| e.call != call);
        self.deferred.retain(|d| d.call != call);
        self.outcomes.insert(call, outcome.clone());
        self.notes.push_back(Notification::CallDone { outcome });
    }

    pub(super) fn on_deadline(&mut self, call: CallId) {
        let Some(cs) = self.calls.get_mut(&call) else {
            return;
        };
        if cs.done {
            return;
        }
        // async work already on its way still runs; only the caller's wait ends
        let sync = cs.sync;
        let execs = &self.execs;
        let (keep, expired): (BTreeMap<_, _>, BTreeMap<_, _>) = std::mem::take(&mut cs.pending)
            .into_iter()
            .partition(|(id, _)| !sync && execs.get(id).is_some_and(|e| e.live));
        cs.pending = keep;
        self.deferred.retain(|d| !expired.contains_key(&d.id));
        for (_, node) in expired {
            cs.entries.push(CallEntry {
                node,
                result: Err(CallFailure::Timeout),
            });
        }
        let caller = cs.caller.clone();
        self.tr("timeout", caller.as_str(), format!("call={}", call.0));
        self.maybe_finish(call);
    }

    /// Re-evaluates every deferred gate; called after data arrives anywhere.
    pub(super) fn retry_deferred(&mut self) {
        if self.deferred.is_empty() {
            return;
        }
        let list = std::mem::take(&mut self.deferred);
        let mut keep = Vec::new();
        for d in list {
            let Some(cs) = self.calls.get(&d.call) else {
                continue;
            };
            let (app, func, caller, dir) = (cs.app, cs.func.clone(), cs.caller.clone(), cs.direction.clone());
            let Some(gate) = self.apps.get(&app).and_then(|a| a.program.func(&func)).and_then(|f| f.gate.clone()) else {
                continue;
            };
            match &d.node {
                Some(n) => match self.eval_gate(app, n, &gate).unwrap_or(Readiness::Ready(false)) {
                    Readiness::Blocked(_) => keep.push(d),
                    Readiness::Ready(true) => {
                        self.calls.get_mut(&d.call).expect("live").pending.remove(&d.id);
                        let id = self.new_exec(d.call, n.clone(), Trigger::Call);
                        self.dispatch_exec(id);
                    }
                    Readiness::Ready(false) => self.drop_pending(d.call, d.id),
                },
                None => {
                    let cands = match self.candidates(app, &caller, &dir) {
                        Ok(c) => c,
                        Err(_) => {
                            self.drop_pending(d.call, d.id);
                            continue;
                        }
                    };
                    match self.select(app, &cands, Some(&gate), &dir) {
                        Selection::Defer(_) => keep.push(d),
                        sel => {
                            self.calls.get_mut(&d.call).expect("live").pending.remove(&d.id);
                            self.apply_selection(d.call, sel, Trigger::Call);
                            self.maybe_finish(d.call);
                        }
                    }
                }
            }
        }
        keep.append(&mut self.deferred);
        self.deferred = keep;
    }
}
