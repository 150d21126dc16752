use super::*;

/// A handler's window onto the runtime while it executes on one node.
pub struct Ctx<'a> {
    rt: &'a mut Runtime,
    inv: Invocation,
}

impl<'a> Ctx<'a> {
    pub(super) fn new(rt: &'a mut Runtime, inv: Invocation) -> Self {
        Ctx { rt, inv }
    }

    pub fn invocation(&self) -> &Invocation {
        &self.inv
    }

    pub fn now(&self) -> f64 {
        self.rt.now()
    }

    pub fn node(&self) -> &NodeId {
        &self.inv.node
    }

    pub fn app(&self) -> AppId {
        self.inv.app
    }

    pub fn args(&self) -> &[Value] {
        &self.inv.args
    }

    pub fn arg_num(&self, i: usize) -> Option<f64> {
        self.inv.args.get(i).and_then(Value::as_num)
    }

    pub fn level(&self) -> NodeLevel {
        self.rt.topo.level(&self.inv.node).unwrap_or_default()
    }

    pub fn rank(&self) -> u32 {
        self.rt.topo.node(&self.inv.node).map_or(0, |n| n.rank)
    }

    /// Volatile per-node state of this app.
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.rt.kv_get(self.inv.app, &self.inv.node, key)
    }

    pub fn get_num(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(Value::as_num)
    }

    pub fn keys(&self, prefix: &str) -> Vec<String> {
        self.rt.kv_keys(self.inv.app, &self.inv.node, prefix)
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        let (app, node) = (self.inv.app, self.inv.node.clone());
        self.rt.kv_set(app, &node, key, value.into()).expect("executing node is a member");
    }

    pub fn log(&mut self, var: &str, value: impl Into<Value>) -> Result<(), RuntimeError> {
        let (app, node) = (self.inv.app, self.inv.node.clone());
        self.rt.logger_write(app, &node, var, value.into())
    }

    pub fn log_as(&mut self, tag: &str, var: &str, value: impl Into<Value>) -> Result<(), RuntimeError> {
        let (app, node) = (self.inv.app, self.inv.node.clone());
        self.rt.logger_write_as(app, &node, tag, var, value.into())
    }

    pub fn snapshot(&self, var: &str) -> Result<Vec<SnapshotEntry>, RuntimeError> {
        self.rt.logger_snapshot(self.inv.app, &self.inv.node, var)
    }

    pub fn records(&self, var: &str) -> Result<Vec<Record>, RuntimeError> {
        self.rt.logger_records(self.inv.app, &self.inv.node, var)
    }

    pub fn broadcast(&mut self, var: &str, value: impl Into<Value>) -> Result<u64, RuntimeError> {
        let (app, node) = (self.inv.app, self.inv.node.clone());
        self.rt.broadcast(app, &node, var, value.into())
    }

    /// Highest broadcaster version delivered here, with its value.
    pub fn received(&self, var: &str) -> Option<(u64, Value)> {
        self.rt.broadcast_value(self.inv.app, &self.inv.node, var)
    }

    pub fn flow_write(&mut self, flow: FlowId, value: impl Into<Value>) -> Result<(), RuntimeError> {
        self.rt.flow_write(flow, value.into())
    }

    pub fn flow_read(&mut self, flow: FlowId) -> Result<Option<Value>, RuntimeError> {
        self.rt.flow_read(flow)
    }

    pub fn call(&mut self, func: &str, args: Vec<Value>, dir: Direction) -> Result<CallId, RuntimeError> {
        let (app, node) = (self.inv.app, self.inv.node.clone());
        self.rt.call(app, &node, func, args, dir)
    }

    pub fn trace(&mut self, kind: &str, detail: impl Into<String>) {
        let node = self.inv.node.clone();
        self.rt.tr(kind, node.as_str(), detail);
    }
}
