use super::*;
use crate::dsl::DataDecl;

impl Runtime {
    fn logger_decl(&self, app: AppId, var: &str) -> Result<(DataDecl, NodeLevel), RuntimeError> {
        let decl = self
            .app(app)?
            .program
            .data(var)
            .ok_or_else(|| RuntimeError::UnknownVariable(var.into()))?
            .clone();
        let level = decl.logger_level().ok_or_else(|| RuntimeError::KindMismatch(var.into()))?;
        Ok((decl, level))
    }

    /// Appends `value` to logger `var` as written by `node` now.
    pub fn logger_write(&mut self, app: AppId, node: &NodeId, var: &str, value: Value) -> Result<(), RuntimeError> {
        self.write_record(app, node, node.to_string(), var, value)
    }

    /// Like [`Runtime::logger_write`] for one of several sources hosted on
    /// the same node (e.g. sensors wired to one device).
    pub fn logger_write_as(&mut self, app: AppId, node: &NodeId, tag: &str, var: &str, value: Value) -> Result<(), RuntimeError> {
        self.write_record(app, node, format!("{node}/{tag}"), var, value)
    }

    /// Schedules a write for a later instant. Declaration errors are
    /// reported now; a write from a node that is down then is traced and
    /// dropped.
    pub fn logger_write_at(&mut self, t_ms: f64, app: AppId, node: &NodeId, var: &str, value: Value) -> Result<(), RuntimeError> {
        self.check_write(app, node, var, &value)?;
        self.queue.schedule(
            t_ms,
            Ev::Write {
                app,
                node: node.clone(),
                source: node.to_string(),
                var: var.into(),
                value,
            },
        )?;
        Ok(())
    }

    fn check_write(&self, app: AppId, node: &NodeId, var: &str, value: &Value) -> Result<NodeLevel, RuntimeError> {
        let member = self.member(app, node)?;
        let (decl, level) = self.logger_decl(app, var)?;
        if member.level.height() > level.height() {
            return Err(RuntimeError::LevelViolation(format!(
                "{node} ({}) is above the {level} level of {var:?}",
                member.level
            )));
        }
        if decl.scalar_type.value_type() != value.value_type() {
            return Err(RuntimeError::TypeMismatch(var.into()));
        }
        Ok(level)
    }

    pub(super) fn write_record(&mut self, app: AppId, node: &NodeId, source: String, var: &str, value: Value) -> Result<(), RuntimeError> {
        self.check_write(app, node, var, &value)?;
        if self.is_down(node) {
            return Err(RuntimeError::NodeDown(node.to_string()));
        }
        let now = self.now();
        let key: StreamKey = (app, var.to_string(), source.clone());
        let stream = self.streams.entry(key.clone()).or_insert_with(|| SourceStream {
            origin: node.clone(),
            records: Vec::new(),
            next: 0,
            last_arrival: 0.0,
            dest: None,
        });
        stream.origin = node.clone();
        let seq = stream.records.len() as u64 + 1;
        self.tr(
            "log-write",
            node.as_str(),
            format!("app={app} var={var} src={source} seq={seq} value={value}"),
        );
        self.streams.get_mut(&key).expect("inserted").records.push(Record {
            source,
            seq,
            t_ms: now,
            value,
            arrived_ms: now,
        });
        self.ship(&key);
        Ok(())
    }

    fn logger_dest(&self, app: AppId, origin: &NodeId, level: NodeLevel) -> Option<NodeId> {
        self.eff_chain(app, origin).into_iter().find(|n| self.topo.level(n) == Some(level))
    }

    fn store_len(&self, app: AppId, node: &NodeId, var: &str, source: &str) -> usize {
        self.stored(app, node, var, source).len()
    }

    /// Records from `source` held at `node`, in sequence order.
    pub fn stored(&self, app: AppId, node: &NodeId, var: &str, source: &str) -> &[Record] {
        self.apps
            .get(&app)
            .and_then(|a| a.data.get(node))
            .and_then(|d| d.logs.get(var))
            .and_then(|m| m.get(source))
            .map_or(&[], Vec::as_slice)
    }

    /// Every record `source` has written, shipped or not.
    pub fn staged(&self, app: AppId, var: &str, source: &str) -> &[Record] {
        self.streams
            .get(&(app, var.to_string(), source.to_string()))
            .map_or(&[], |s| s.records.as_slice())
    }

    /// Records of `source` not yet held at its current destination.
    pub fn unshipped(&self, app: AppId, var: &str, source: &str) -> usize {
        let Some(s) = self.streams.get(&(app, var.to_string(), source.to_string())) else {
            return 0;
        };
        let held = s.dest.as_ref().map_or(0, |d| self.store_len(app, d, var, source));
        s.records.len() - held.min(s.records.len())
    }

    /// Ships as many staged records as the path allows. Arrivals are kept in
    /// send order per source.
    fn ship(&mut self, key: &StreamKey) {
        let (app, var, source) = key.clone();
        let Ok((_, level)) = self.logger_decl(app, &var) else {
            return;
        };
        let Some(stream) = self.streams.get(key) else {
            return;
        };
        let origin = stream.origin.clone();
        let dest = self.logger_dest(app, &origin, level);
        if dest != stream.dest {
            let held = dest.as_ref().map_or(0, |d| self.store_len(app, d, &var, &source));
            let s = self.streams.get_mut(key).expect("present");
            s.dest = dest.clone();
            s.next = held.min(s.records.len());
        }
        let Some(dest) = dest else {
            return;
        };
        if dest == origin {
            if self.is_down(&origin) {
                return;
            }
            loop {
                let s = &self.streams[key];
                if s.next >= s.records.len() {
                    break;
                }
                let mut rec = s.records[s.next].clone();
                self.streams.get_mut(key).expect("present").next += 1;
                rec.arrived_ms = self.now();
                if rec.seq as usize == self.store_len(app, &dest, &var, &source) + 1 {
                    self.accept_record(app, &var, &dest, rec, true);
                }
            }
            return;
        }
        let Some(path) = self.eff_path(app, &origin, &dest) else {
            return;
        };
        loop {
            let s = &self.streams[key];
            if s.next >= s.records.len() || !self.path_up(&path) {
                break;
            }
            let lat = self.path_latency(&path);
            let s = self.streams.get_mut(key).expect("present");
            let arrival = (self.queue.now() + lat).max(s.last_arrival);
            s.last_arrival = arrival;
            s.next += 1;
            let seq = s.next as u64;
            self.push_event(
                arrival,
                Ev::LogArrive {
                    key: key.clone(),
                    dest: dest.clone(),
                    seq,
                },
            );
        }
    }

    pub(super) fn on_log_arrive(&mut self, key: StreamKey, dest: NodeId, seq: u64) {
        let (app, var, source) = key.clone();
        let Some(stream) = self.streams.get(&key) else {
            return;
        };
        let current = stream.dest.as_ref() == Some(&dest);
        let rec = stream.records.get(seq as usize - 1).cloned();
        let held = self.store_len(app, &dest, &var, &source);
        if self.is_down(&dest) {
            self.tr("log-nack", dest.as_str(), format!("app={app} var={var} src={source} seq={seq}"));
            if current {
                let s = self.streams.get_mut(&key).expect("present");
                s.next = s.next.min(held);
            }
            return;
        }
        if seq as usize == held + 1 {
            let Some(mut rec) = rec else {
                return;
            };
            rec.arrived_ms = self.now();
            self.accept_record(app, &var, &dest, rec, true);
        } else if (seq as usize) <= held {
            self.tr("log-dup", dest.as_str(), format!("app={app} var={var} src={source} seq={seq}"));
        } else {
            self.tr("log-gap", dest.as_str(), format!("app={app} var={var} src={source} seq={seq}"));
        }
    }

    fn accept_record(&mut self, app: AppId, var: &str, node: &NodeId, rec: Record, direct: bool) {
        let kind = if direct { "log-deliver" } else { "repl-deliver" };
        self.tr(
            kind,
            node.as_str(),
            format!("app={app} var={var} src={} seq={} value={}", rec.source, rec.seq, rec.value),
        );
        let Some(st) = self.apps.get_mut(&app) else {
            return;
        };
        let d = st.data.entry(node.clone()).or_default();
        d.logs
            .entry(var.to_string())
            .or_default()
            .entry(rec.source.clone())
            .or_default()
            .push(rec.clone());
        let hook = st.logger_hooks.get(var).cloned();
        self.notes.push_back(Notification::LoggerDelivered {
            app,
            var: var.to_string(),
            node: node.clone(),
            record: rec.clone(),
        });
        if direct {
            self.replicate(app, var, node, &rec.source, rec.seq);
            if let Some(func) = hook {
                let trigger = Trigger::Logger {
                    var: var.to_string(),
                    source: rec.source.clone(),
                    seq: rec.seq,
                };
                let args = vec![rec.value.clone(), Value::Str(rec.source.clone()), Value::Num(rec.t_ms)];
                self.local_exec(app, node, &func, args, trigger);
            }
        }
        self.retry_deferred();
    }

    fn replicate(&mut self, app: AppId, var: &str, primary: &NodeId, source: &str, seq: u64) {
        if self.topo.level(primary) != Some(NodeLevel::Fog) {
            return;
        }
        let Some(shadows) = self.shadows.get(primary).cloned() else {
            return;
        };
        for s in shadows {
            if !self.apps[&app].tree.contains(&s) {
                continue;
            }
            let key: ReplKey = (app, var.to_string(), primary.clone(), s);
            self.repl
                .entry(key.clone())
                .or_insert_with(|| ReplStream {
                    items: Vec::new(),
                    next: 0,
                    last_arrival: 0.0,
                })
                .items
                .push((source.to_string(), seq));
            self.ship_repl(&key);
        }
    }

    fn ship_repl(&mut self, key: &ReplKey) {
        let (_, _, primary, shadow) = key.clone();
        loop {
            let Some(r) = self.repl.get(key) else {
                return;
            };
            if r.next >= r.items.len() || self.is_down(&primary) || self.is_down(&shadow) {
                return;
            }
            let lat = self.hop(&primary, &shadow);
            let r = self.repl.get_mut(key).expect("present");
            let arrival = (self.queue.now() + lat).max(r.last_arrival);
            r.last_arrival = arrival;
            let idx = r.next;
            r.next += 1;
            self.push_event(arrival, Ev::ReplArrive { key: key.clone(), idx });
        }
    }

    pub(super) fn on_repl_arrive(&mut self, key: ReplKey, idx: usize) {
        let (app, var, primary, shadow) = key.clone();
        let Some(r) = self.repl.get(&key) else {
            return;
        };
        if self.is_down(&shadow) {
            // resume from the first item the shadow does not hold yet
            let first_missing = r
                .items
                .iter()
                .position(|(src, seq)| self.store_len(app, &shadow, &var, src) < *seq as usize)
                .unwrap_or(r.items.len());
            let r = self.repl.get_mut(&key).expect("present");
            r.next = r.next.min(first_missing);
            self.tr("repl-nack", shadow.as_str(), format!("app={app} var={var} from={primary}"));
            return;
        }
        let (source, seq) = r.items[idx].clone();
        let held = self.store_len(app, &shadow, &var, &source);
        if seq as usize != held + 1 {
            return;
        }
        let Some(mut rec) = self.stored(app, &primary, &var, &source).get(seq as usize - 1).cloned() else {
            return;
        };
        rec.arrived_ms = self.now();
        self.accept_record(app, &var, &shadow, rec, false);
    }

    /// Retries every stream with unshipped data.
    pub(super) fn flush_all(&mut self) {
        let keys: Vec<StreamKey> = self.streams.keys().cloned().collect();
        for k in keys {
            self.ship(&k);
        }
        let keys: Vec<ReplKey> = self.repl.keys().cloned().collect();
        for k in keys {
            self.ship_repl(&k);
        }
    }

    pub(super) fn reship_from(&mut self, origin: &NodeId) {
        let keys: Vec<StreamKey> = self
            .streams
            .iter()
            .filter(|(_, s)| &s.origin == origin)
            .map(|(k, _)| k.clone())
            .collect();
        for k in keys {
            self.ship(&k);
        }
    }

    fn check_read_level(&self, app: AppId, node: &NodeId, var: &str) -> Result<(), RuntimeError> {
        let member = self.member(app, node)?;
        let (_, level) = self.logger_decl(app, var)?;
        if member.level != level {
            return Err(RuntimeError::LevelViolation(format!(
                "{var:?} is readable at the {level} level, not from {node} ({})",
                member.level
            )));
        }
        Ok(())
    }

    /// Latest record per source held at `node`, sorted by source.
    pub fn logger_snapshot(&self, app: AppId, node: &NodeId, var: &str) -> Result<Vec<SnapshotEntry>, RuntimeError> {
        self.check_read_level(app, node, var)?;
        let Some(by_src) = self.apps[&app].data.get(node).and_then(|d| d.logs.get(var)) else {
            return Ok(Vec::new());
        };
        Ok(by_src
            .iter()
            .filter_map(|(src, recs)| {
                recs.last().map(|r| SnapshotEntry {
                    source: src.clone(),
                    value: r.value.clone(),
                    t_ms: r.t_ms,
                })
            })
            .collect())
    }

    /// Every record held at `node`, in arrival order.
    pub fn logger_records(&self, app: AppId, node: &NodeId, var: &str) -> Result<Vec<Record>, RuntimeError> {
        self.check_read_level(app, node, var)?;
        let mut out: Vec<Record> = self.apps[&app]
            .data
            .get(node)
            .and_then(|d| d.logs.get(var))
            .map(|m| m.values().flatten().cloned().collect())
            .unwrap_or_default();
        out.sort_by(|a, b| {
            a.arrived_ms
                .total_cmp(&b.arrived_ms)
                .then_with(|| a.source.cmp(&b.source))
                .then(a.seq.cmp(&b.seq))
        });
        Ok(out)
    }

    /// Checks that every stored copy of every source is an exact prefix of
    /// what the source wrote.
    pub fn audit_loggers(&self) -> Result<(), String> {
        for (app_id, st) in &self.apps {
            for (node, d) in &st.data {
                for (var, by_src) in &d.logs {
                    for (src, recs) in by_src {
                        let written = self.staged(*app_id, var, src);
                        if recs.len() > written.len() {
                            return Err(format!(
                                "{node} holds {} records of {src}/{var}, only {} written",
                                recs.len(),
                                written.len()
                            ));
                        }
                        for (i, (got, want)) in recs.iter().zip(written).enumerate() {
                            if got.seq != i as u64 + 1 || got.seq != want.seq || got.value != want.value || got.t_ms != want.t_ms {
                                return Err(format!("{node}: {src}/{var} diverges at position {i}"));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    // ---- broadcasters ----

    pub fn broadcast(&mut self, app: AppId, origin: &NodeId, var: &str, value: Value) -> Result<u64, RuntimeError> {
        let member = self.member(app, origin)?.clone();
        let decl = self
            .app(app)?
            .program
            .data(var)
            .ok_or_else(|| RuntimeError::UnknownVariable(var.into()))?;
        if !decl.is_broadcaster() {
            return Err(RuntimeError::KindMismatch(var.into()));
        }
        if decl.scalar_type.value_type() != value.value_type() {
            return Err(RuntimeError::TypeMismatch(var.into()));
        }
        if member.level == NodeLevel::Device {
            return Err(RuntimeError::OriginViolation(origin.to_string()));
        }
        if self.is_down(origin) {
            return Err(RuntimeError::NodeDown(origin.to_string()));
        }
        let st = self.app_mut(app)?;
        let version = st.versions.get(var).copied().unwrap_or(0) + 1;
        st.versions.insert(var.to_string(), version);
        self.tr(
            "broadcast",
            origin.as_str(),
            format!("app={app} var={var} version={version} value={value}"),
        );
        self.accept_broadcast(app, var, origin, version, value.clone());

        let now = self.now();
        let mut stack = vec![(origin.clone(), now)];
        while let Some((n, t)) = stack.pop() {
            for c in self.eff_children(app, &n) {
                let at = t + self.hop(&n, &c);
                self.push_event(
                    at,
                    Ev::BcastArrive {
                        app,
                        var: var.to_string(),
                        node: c.clone(),
                        version,
                        value: value.clone(),
                    },
                );
                if !self.topo.is_down(&c, at) {
                    stack.push((c, at));
                }
            }
        }
        Ok(version)
    }

    pub(super) fn accept_broadcast(&mut self, app: AppId, var: &str, node: &NodeId, version: u64, value: Value) {
        if self.is_down(node) {
            self.tr("bcast-drop", node.as_str(), format!("app={app} var={var} version={version}"));
            return;
        }
        let Some(st) = self.apps.get_mut(&app) else {
            return;
        };
        let d = st.data.entry(node.clone()).or_default();
        let current = d.cells.get(var).map_or(0, |c| c.0);
        if version <= current {
            self.tr(
                "bcast-stale",
                node.as_str(),
                format!("app={app} var={var} version={version} kept={current}"),
            );
            return;
        }
        d.cells.insert(var.to_string(), (version, value.clone()));
        let hook = st.broadcast_hooks.get(var).cloned();
        self.tr("bcast-deliver", node.as_str(), format!("app={app} var={var} version={version}"));
        let at = self.now();
        self.notes.push_back(Notification::BroadcastDelivered {
            app,
            var: var.to_string(),
            node: node.clone(),
            version,
            at,
        });
        if let Some(func) = hook {
            let trigger = Trigger::Broadcast {
                var: var.to_string(),
                version,
            };
            self.local_exec(app, node, &func, vec![value, Value::Num(version as f64)], trigger);
        }
        self.retry_deferred();
    }

    pub fn broadcast_value(&self, app: AppId, node: &NodeId, var: &str) -> Option<(u64, Value)> {
        self.apps.get(&app)?.data.get(node)?.cells.get(var).cloned()
    }

    // ---- flows ----

    /// One endpoint per node both apps share at `level`.
    pub fn flow_connect(&mut self, source: AppId, sink: AppId, level: NodeLevel) -> Result<Vec<FlowEndpoint>, RuntimeError> {
        if source == sink {
            return Err(RuntimeError::SameAppViolation);
        }
        let a = &self.app(source)?.tree;
        let b = &self.app(sink)?.tree;
        let shared: Vec<NodeId> = a.at_level(level).into_iter().filter(|n| b.contains(n)).cloned().collect();
        if shared.is_empty() {
            return Err(RuntimeError::LevelViolation(format!("{source} and {sink} share no {level} node")));
        }
        Ok(shared.into_iter().map(|n| self.open_flow(source, sink, n)).collect())
    }

    /// A flow between two specific controllers; they must be the same node.
    pub fn flow_connect_between(
        &mut self,
        source: AppId,
        at_source: &NodeId,
        sink: AppId,
        at_sink: &NodeId,
    ) -> Result<FlowEndpoint, RuntimeError> {
        if source == sink {
            return Err(RuntimeError::SameAppViolation);
        }
        let la = self.member(source, at_source)?.level;
        let lb = self.member(sink, at_sink)?.level;
        if la != lb {
            return Err(RuntimeError::LevelViolation(format!("{at_source} is {la}, {at_sink} is {lb}")));
        }
        if at_source != at_sink {
            return Err(RuntimeError::LevelViolation(format!(
                "{at_source} and {at_sink} are not co-located"
            )));
        }
        Ok(self.open_flow(source, sink, at_source.clone()))
    }

    fn open_flow(&mut self, source: AppId, sink: AppId, node: NodeId) -> FlowEndpoint {
        let ep = FlowEndpoint {
            id: FlowId(self.flows.len() as u32),
            source,
            sink,
            node,
        };
        self.tr(
            "flow-open",
            ep.node.as_str(),
            format!("flow={} src={} sink={}", ep.id.0, source, sink),
        );
        self.flows.push(Flow {
            ep: ep.clone(),
            buf: VecDeque::new(),
            hook: None,
        });
        ep
    }

    pub fn flow_endpoint(&self, flow: FlowId) -> Option<&FlowEndpoint> {
        self.flows.get(flow.0 as usize).map(|f| &f.ep)
    }

    /// Delivers each message on `flow` to `func` in the sink app instead of
    /// buffering it.
    pub fn on_flow(&mut self, flow: FlowId, func: &str) -> Result<(), RuntimeError> {
        let sink = self.flows.get(flow.0 as usize).ok_or(RuntimeError::UnknownFlow)?.ep.sink;
        let st = self.app(sink)?;
        st.program.func(func).ok_or_else(|| RuntimeError::UnknownFunction(func.into()))?;
        if !st.handlers.contains_key(func) {
            return Err(RuntimeError::UnboundHandler(func.into()));
        }
        self.flows[flow.0 as usize].hook = Some(func.to_string());
        Ok(())
    }

    pub fn flow_write(&mut self, flow: FlowId, msg: Value) -> Result<(), RuntimeError> {
        let f = self.flows.get(flow.0 as usize).ok_or(RuntimeError::UnknownFlow)?;
        let ep = f.ep.clone();
        if !self.apps.contains_key(&ep.source) || !self.apps.contains_key(&ep.sink) {
            return Err(RuntimeError::UnknownFlow);
        }
        if self.is_down(&ep.node) {
            return Err(RuntimeError::NodeDown(ep.node.to_string()));
        }
        self.tr(
            "flow",
            ep.node.as_str(),
            format!("flow={} src={} sink={} value={}", flow.0, ep.source, ep.sink, msg),
        );
        let at = self.now();
        self.notes.push_back(Notification::FlowMessage { flow, at });
        match self.flows[flow.0 as usize].hook.clone() {
            Some(func) => {
                self.local_exec(ep.sink, &ep.node, &func, vec![msg], Trigger::Flow { flow });
            }
            None => self.flows[flow.0 as usize].buf.push_back(msg),
        }
        Ok(())
    }

    pub fn flow_read(&mut self, flow: FlowId) -> Result<Option<Value>, RuntimeError> {
        let f = self.flows.get_mut(flow.0 as usize).ok_or(RuntimeError::UnknownFlow)?;
        Ok(f.buf.pop_front())
    }
}
