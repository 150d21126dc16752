use serde::Serialize;

use super::AppId;
use crate::dsl::Value;
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CallId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct FlowId(pub u32);

/// Which way a remote call travels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Direction {
    /// Ctrl2Wrk: to workers (or gated executors) underneath the caller.
    Down,
    /// Wrk2Ctrl: to the caller's controllers above it.
    Up,
    /// Ctrl2Ctrl: to one controller inside the caller's subtree.
    To(NodeId),
}

/// One logger record. `seq` is 1-based per source.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub source: String,
    pub seq: u64,
    pub t_ms: f64,
    pub value: Value,
    /// Arrival time at the node holding this copy.
    pub arrived_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapshotEntry {
    pub source: String,
    pub value: Value,
    pub t_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Attachment {
    Fog(NodeId),
    Cloud(NodeId),
    Detached,
}

impl Attachment {
    pub fn node(&self) -> Option<&NodeId> {
        match self {
            Attachment::Fog(n) | Attachment::Cloud(n) => Some(n),
            Attachment::Detached => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum AttachPolicy {
    /// The topology parent.
    Static,
    /// Allocator output: primary fog first, then shadows in routing order.
    Allocation { primary: NodeId, shadows: Vec<NodeId> },
    /// A uniformly random live fog.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Trigger {
    Call,
    Local,
    Logger { var: String, source: String, seq: u64 },
    Broadcast { var: String, version: u64 },
    Flow { flow: FlowId },
}

/// What a handler sees about the invocation it serves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Invocation {
    pub call: CallId,
    pub app: AppId,
    pub node: NodeId,
    pub func: String,
    pub args: Vec<Value>,
    pub caller: NodeId,
    pub trigger: Trigger,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CallFailure {
    /// Executor down, unreachable, or still blocked when the timeout hit.
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CallEntry {
    pub node: NodeId,
    pub result: Result<Value, CallFailure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CallStatus {
    Complete,
    /// Some executors timed out.
    Partial,
    /// Every executor timed out; whatever partial results exist are attached.
    TotalTimeout,
    /// No node passed the gate.
    NoneEligible,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CallOutcome {
    pub call: CallId,
    pub issued_ms: f64,
    pub resumed_ms: f64,
    pub status: CallStatus,
    pub entries: Vec<CallEntry>,
}

impl CallOutcome {
    pub fn values(&self) -> Vec<(&NodeId, &Value)> {
        self.entries
            .iter()
            .filter_map(|e| e.result.as_ref().ok().map(|v| (&e.node, v)))
            .collect()
    }

    pub fn timeouts(&self) -> usize {
        self.entries.iter().filter(|e| e.result.is_err()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowEndpoint {
    pub id: FlowId,
    pub source: AppId,
    pub sink: AppId,
    pub node: NodeId,
}

/// Observable happenings, in event order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Notification {
    Timer {
        tag: u64,
        at: f64,
    },
    Executed {
        call: CallId,
        app: AppId,
        node: NodeId,
        func: String,
        at: f64,
        value: Value,
    },
    CallDone {
        outcome: CallOutcome,
    },
    LoggerDelivered {
        app: AppId,
        var: String,
        node: NodeId,
        record: Record,
    },
    BroadcastDelivered {
        app: AppId,
        var: String,
        node: NodeId,
        version: u64,
        at: f64,
    },
    FlowMessage {
        flow: FlowId,
        at: f64,
    },
    NodeFailed {
        node: NodeId,
        at: f64,
    },
    NodeHealed {
        node: NodeId,
        at: f64,
    },
}
