//! Cloud/fog/device node graph, link latency model, failure schedule and the
//! deterministic event clock that every simulation in this crate runs on.
//!
//! A topology is a tree: exactly one cloud at the root, fogs parented to the
//! cloud, devices parented to a fog or directly to the cloud. Link latencies
//! are drawn per hop from a clamped normal distribution whose parameters are
//! configured per link class. All randomness comes from substreams derived
//! from one master seed by hashing `(seed, node, purpose)`, so adding a node
//! never perturbs the draws seen by other nodes.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("duplicate node id {0:?}")]
    DuplicateId(String),
    #[error("node {node:?} references unknown parent {parent:?}")]
    DanglingParent { node: String, parent: String },
    #[error("device {0:?} is parented to another device")]
    DeviceParentedToDevice(String),
    #[error("node {node:?} has an invalid parent: {reason}")]
    InvalidParent { node: String, reason: &'static str },
    #[error("topology must declare exactly one cloud node, found {0}")]
    CloudCount(usize),
    #[error("fog {0:?} must have capacity >= 1")]
    FogCapacity(String),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("link class {0} is not configured")]
    UnknownLinkClass(LinkClass),
    #[error("invalid latency parameters for {class}: {reason}")]
    InvalidLatency { class: LinkClass, reason: &'static str },
    #[error("failure window for {node:?} must satisfy fail_at < heal_at ({fail_at_ms} >= {heal_at_ms})")]
    InvalidWindow { node: String, fail_at_ms: f64, heal_at_ms: f64 },
    #[error("cannot schedule an event at {at_ms} ms before the current clock {now_ms} ms")]
    PastEvent { at_ms: f64, now_ms: f64 },
    #[error("malformed topology document: {0}")]
    Document(String),
}

/// Node identifier, unique across a topology.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

impl PartialEq<str> for NodeId {
    fn eq(&self, other: &str) -> bool {
        self.0 == other
    }
}

impl PartialEq<&str> for NodeId {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[derive(Default)]
pub enum NodeLevel {
    Cloud,
    Fog,
    #[default]
    Device,
}

impl NodeLevel {
    /// Levels ordered bottom-up, the order placement decisions scan in.
    pub const BOTTOM_UP: [NodeLevel; 3] = [NodeLevel::Device, NodeLevel::Fog, NodeLevel::Cloud];

    /// 0 for devices, 1 for fogs, 2 for the cloud.
    pub fn height(self) -> u8 {
        match self {
            NodeLevel::Device => 0,
            NodeLevel::Fog => 1,
            NodeLevel::Cloud => 2,
        }
    }

    /// The value `sys.type` takes on a node of this level.
    pub fn sys_type(self) -> &'static str {
        match self {
            NodeLevel::Cloud => "cloud",
            NodeLevel::Fog => "fog",
            NodeLevel::Device => "device",
        }
    }

    pub fn parse(s: &str) -> Option<NodeLevel> {
        match s {
            "cloud" => Some(NodeLevel::Cloud),
            "fog" => Some(NodeLevel::Fog),
            "device" | "dev" => Some(NodeLevel::Device),
            _ => None,
        }
    }
}

impl fmt::Display for NodeLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.sys_type())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    pub level: NodeLevel,
    pub parent: Option<NodeId>,
    /// Maximum number of attached devices. Only meaningful for fogs.
    pub capacity: Option<u32>,
    pub rank: u32,
    pub init_cost_ms: f64,
}

pub const DEFAULT_INIT_COST_MS: f64 = 300.0;
pub const DEFAULT_FLOOR_MS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkClass {
    DeviceToFog,
    FogToFog,
    ToCloud,
}

impl LinkClass {
    /// The class of a direct hop between two levels, if such a hop exists.
    pub fn between(a: NodeLevel, b: NodeLevel) -> Option<LinkClass> {
        use NodeLevel::*;
        match (a, b) {
            (Cloud, Cloud) => None,
            (Cloud, _) | (_, Cloud) => Some(LinkClass::ToCloud),
            (Fog, Fog) => Some(LinkClass::FogToFog),
            (Fog, Device) | (Device, Fog) => Some(LinkClass::DeviceToFog),
            (Device, Device) => None,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            LinkClass::DeviceToFog => "device_fog",
            LinkClass::FogToFog => "fog_fog",
            LinkClass::ToCloud => "to_cloud",
        }
    }
}

impl fmt::Display for LinkClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

fn default_floor() -> f64 {
    DEFAULT_FLOOR_MS
}

/// Parameters of one link class. `stddev_ms` is a standard deviation in
/// milliseconds; the emulator figures quoted as "variance" are read that way.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkLatency {
    pub mean_ms: f64,
    pub stddev_ms: f64,
    #[serde(default = "default_floor")]
    pub floor_ms: f64,
}

impl LinkLatency {
    pub fn new(mean_ms: f64, stddev_ms: f64) -> Self {
        LinkLatency {
            mean_ms,
            stddev_ms,
            floor_ms: DEFAULT_FLOOR_MS,
        }
    }

    pub fn fixed(mean_ms: f64) -> Self {
        LinkLatency::new(mean_ms, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device_fog: Option<LinkLatency>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fog_fog: Option<LinkLatency>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to_cloud: Option<LinkLatency>,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            device_fog: Some(LinkLatency::new(5.0, 1.0)),
            fog_fog: Some(LinkLatency::new(10.0, 2.0)),
            to_cloud: Some(LinkLatency::new(30.0, 5.0)),
        }
    }
}

impl LatencyModel {
    /// The same means as the default model with zero spread.
    pub fn deterministic() -> Self {
        let d = LatencyModel::default();
        LatencyModel {
            device_fog: d.device_fog.map(|l| LinkLatency::fixed(l.mean_ms)),
            fog_fog: d.fog_fog.map(|l| LinkLatency::fixed(l.mean_ms)),
            to_cloud: d.to_cloud.map(|l| LinkLatency::fixed(l.mean_ms)),
        }
    }

    pub fn get(&self, class: LinkClass) -> Option<&LinkLatency> {
        match class {
            LinkClass::DeviceToFog => self.device_fog.as_ref(),
            LinkClass::FogToFog => self.fog_fog.as_ref(),
            LinkClass::ToCloud => self.to_cloud.as_ref(),
        }
    }

    pub fn set(&mut self, class: LinkClass, latency: LinkLatency) {
        let slot = match class {
            LinkClass::DeviceToFog => &mut self.device_fog,
            LinkClass::FogToFog => &mut self.fog_fog,
            LinkClass::ToCloud => &mut self.to_cloud,
        };
        *slot = Some(latency);
    }

    pub fn mean(&self, class: LinkClass) -> Result<f64, TopologyError> {
        self.get(class).map(|l| l.mean_ms).ok_or(TopologyError::UnknownLinkClass(class))
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        for class in [LinkClass::DeviceToFog, LinkClass::FogToFog, LinkClass::ToCloud] {
            if let Some(l) = self.get(class) {
                if !(l.mean_ms > 0.0) {
                    return Err(TopologyError::InvalidLatency {
                        class,
                        reason: "mean_ms must be > 0",
                    });
                }
                if !(l.stddev_ms >= 0.0) {
                    return Err(TopologyError::InvalidLatency {
                        class,
                        reason: "stddev_ms must be >= 0",
                    });
                }
                if !(l.floor_ms >= 0.0) {
                    return Err(TopologyError::InvalidLatency {
                        class,
                        reason: "floor_ms must be >= 0",
                    });
                }
            }
        }
        Ok(())
    }

    /// Draws one hop latency: `max(floor, Normal(mean, stddev))`.
    pub fn sample<R: Rng + ?Sized>(&self, class: LinkClass, rng: &mut R) -> Result<f64, TopologyError> {
        let l = self.get(class).ok_or(TopologyError::UnknownLinkClass(class))?;
        let draw = if l.stddev_ms == 0.0 {
            l.mean_ms
        } else {
            Normal::new(l.mean_ms, l.stddev_ms)
                .map_err(|_| TopologyError::InvalidLatency {
                    class,
                    reason: "stddev_ms must be finite",
                })?
                .sample(rng)
        };
        Ok(clamp_floor(draw, l.floor_ms))
    }
}

pub fn clamp_floor(draw: f64, floor_ms: f64) -> f64 {
    if draw < floor_ms {
        floor_ms
    } else {
        draw
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureWindow {
    pub node: NodeId,
    pub fail_at_ms: f64,
    /// `None` means the node never heals.
    #[serde(default)]
    pub heal_at_ms: Option<f64>,
}

impl FailureWindow {
    pub fn covers(&self, t: f64) -> bool {
        t >= self.fail_at_ms && self.heal_at_ms.is_none_or(|h| t < h)
    }
}

/// Down intervals per node. A node is down on `[fail_at, heal_at)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FailureSchedule {
    pub windows: Vec<FailureWindow>,
}

impl FailureSchedule {
    pub fn is_down(&self, node: &NodeId, t: f64) -> bool {
        self.windows.iter().any(|w| &w.node == node && w.covers(t))
    }

    /// Earliest instant at or after `t` when `node` is up, `None` if never.
    pub fn up_at_or_after(&self, node: &NodeId, t: f64) -> Option<f64> {
        let mut at = t;
        // windows may overlap, so iterate until no window covers `at`
        loop {
            let covering = self.windows.iter().find(|w| &w.node == node && w.covers(at));
            match covering {
                None => return Some(at),
                Some(w) => at = w.heal_at_ms?,
            }
        }
    }

    /// True if `node` is up for the whole interval `[from, to]`.
    pub fn up_during(&self, node: &NodeId, from: f64, to: f64) -> bool {
        !self
            .windows
            .iter()
            .any(|w| &w.node == node && w.fail_at_ms <= to && w.heal_at_ms.is_none_or(|h| h > from))
    }

    pub fn windows_for<'a>(&'a self, node: &'a NodeId) -> impl Iterator<Item = &'a FailureWindow> + 'a {
        self.windows.iter().filter(move |w| &w.node == node)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeDoc {
    pub id: String,
    pub level: NodeLevel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_cost_ms: Option<f64>,
}

/// The JSON topology/config document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TopologyDoc {
    pub nodes: Vec<NodeDoc>,
    #[serde(default)]
    pub latency: Option<LatencyModel>,
    #[serde(default)]
    pub failures: Vec<FailureWindow>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl TopologyDoc {
    pub fn from_json(text: &str) -> Result<TopologyDoc, TopologyError> {
        serde_json::from_str(text).map_err(|e| TopologyError::Document(e.to_string()))
    }

    /// A cloud named `cloud`, `fogs` fogs `f1..` under it, and
    /// `devices_per_fog` devices `d1..` under each fog (or under the cloud
    /// when `fogs == 0`).
    pub fn three_level(fogs: usize, devices_per_fog: usize) -> TopologyDoc {
        let mut nodes = vec![NodeDoc {
            id: "cloud".into(),
            level: NodeLevel::Cloud,
            ..Default::default()
        }];
        for f in 1..=fogs {
            nodes.push(NodeDoc {
                id: format!("f{f}"),
                level: NodeLevel::Fog,
                parent: Some("cloud".into()),
                capacity: Some(devices_per_fog.max(1) as u32),
                ..Default::default()
            });
        }
        let mut d = 0;
        let parents: Vec<String> = if fogs == 0 {
            vec!["cloud".into()]
        } else {
            (1..=fogs).map(|f| format!("f{f}")).collect()
        };
        for p in parents {
            for _ in 0..devices_per_fog {
                d += 1;
                nodes.push(NodeDoc {
                    id: format!("d{d}"),
                    level: NodeLevel::Device,
                    parent: Some(p.clone()),
                    ..Default::default()
                });
            }
        }
        TopologyDoc {
            nodes,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Topology {
    nodes: Vec<NodeSpec>,
    index: BTreeMap<NodeId, usize>,
    children: Vec<Vec<usize>>,
    pub latency: LatencyModel,
    pub failures: FailureSchedule,
    pub seed: u64,
}

impl Topology {
    pub fn from_json(text: &str) -> Result<Topology, TopologyError> {
        Topology::build(&TopologyDoc::from_json(text)?)
    }

    /// Validates a document and builds the node tree.
    pub fn build(doc: &TopologyDoc) -> Result<Topology, TopologyError> {
        let mut index = BTreeMap::new();
        for (i, n) in doc.nodes.iter().enumerate() {
            if index.insert(NodeId::new(n.id.clone()), i).is_some() {
                return Err(TopologyError::DuplicateId(n.id.clone()));
            }
        }
        let clouds: Vec<&NodeDoc> = doc.nodes.iter().filter(|n| n.level == NodeLevel::Cloud).collect();
        if clouds.len() != 1 {
            return Err(TopologyError::CloudCount(clouds.len()));
        }
        let cloud_id = clouds[0].id.clone();

        let mut nodes = Vec::with_capacity(doc.nodes.len());
        for (i, n) in doc.nodes.iter().enumerate() {
            let parent = match (n.level, &n.parent) {
                (NodeLevel::Cloud, Some(_)) => {
                    return Err(TopologyError::InvalidParent {
                        node: n.id.clone(),
                        reason: "the cloud has no parent",
                    })
                }
                (NodeLevel::Cloud, None) => None,
                (_, None) => Some(NodeId::new(cloud_id.clone())),
                (level, Some(p)) => {
                    let pi = *index.get(&NodeId::new(p.clone())).ok_or_else(|| TopologyError::DanglingParent {
                        node: n.id.clone(),
                        parent: p.clone(),
                    })?;
                    let plevel = doc.nodes[pi].level;
                    match (level, plevel) {
                        (NodeLevel::Device, NodeLevel::Device) => return Err(TopologyError::DeviceParentedToDevice(n.id.clone())),
                        (NodeLevel::Fog, NodeLevel::Cloud) => {}
                        (NodeLevel::Fog, _) => {
                            return Err(TopologyError::InvalidParent {
                                node: n.id.clone(),
                                reason: "a fog must be parented to the cloud",
                            })
                        }
                        _ => {}
                    }
                    Some(NodeId::new(p.clone()))
                }
            };
            let capacity = match n.level {
                NodeLevel::Fog => {
                    let cap = n.capacity.unwrap_or(u32::MAX);
                    if cap == 0 {
                        return Err(TopologyError::FogCapacity(n.id.clone()));
                    }
                    Some(cap)
                }
                _ => None,
            };
            nodes.push(NodeSpec {
                id: NodeId::new(n.id.clone()),
                level: n.level,
                parent,
                capacity,
                rank: n.rank.unwrap_or(i as u32),
                init_cost_ms: n.init_cost_ms.unwrap_or(DEFAULT_INIT_COST_MS),
            });
        }

        let mut children = vec![Vec::new(); nodes.len()];
        for (i, n) in nodes.iter().enumerate() {
            if let Some(p) = &n.parent {
                children[index[p]].push(i);
            }
        }

        let latency = doc.latency.unwrap_or_default();
        latency.validate()?;

        let mut topo = Topology {
            nodes,
            index,
            children,
            latency,
            failures: FailureSchedule::default(),
            seed: doc.seed.unwrap_or(0),
        };
        for w in &doc.failures {
            topo.inject_failure(&w.node, w.fail_at_ms, w.heal_at_ms)?;
        }
        Ok(topo)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn node(&self, id: &NodeId) -> Option<&NodeSpec> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn require(&self, id: &NodeId) -> Result<&NodeSpec, TopologyError> {
        self.node(id).ok_or_else(|| TopologyError::UnknownNode(id.to_string()))
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.index.contains_key(id)
    }

    pub fn level(&self, id: &NodeId) -> Option<NodeLevel> {
        self.node(id).map(|n| n.level)
    }

    pub fn cloud(&self) -> &NodeId {
        &self
            .nodes
            .iter()
            .find(|n| n.level == NodeLevel::Cloud)
            .expect("validated topology has a cloud")
            .id
    }

    pub fn parent(&self, id: &NodeId) -> Option<&NodeId> {
        self.node(id).and_then(|n| n.parent.as_ref())
    }

    pub fn children(&self, id: &NodeId) -> Vec<&NodeId> {
        match self.index.get(id) {
            Some(&i) => self.children[i].iter().map(|&c| &self.nodes[c].id).collect(),
            None => Vec::new(),
        }
    }

    pub fn at_level(&self, level: NodeLevel) -> Vec<&NodeId> {
        self.nodes.iter().filter(|n| n.level == level).map(|n| &n.id).collect()
    }

    pub fn fogs(&self) -> Vec<&NodeId> {
        self.at_level(NodeLevel::Fog)
    }

    pub fn devices(&self) -> Vec<&NodeId> {
        self.at_level(NodeLevel::Device)
    }

    /// `id` first, the cloud last.
    pub fn path_to_root(&self, id: &NodeId) -> Vec<&NodeId> {
        let mut out = Vec::new();
        let mut cur = self.node(id);
        while let Some(n) = cur {
            out.push(&n.id);
            cur = n.parent.as_ref().and_then(|p| self.node(p));
        }
        out
    }

    /// Nodes on the tree path from `a` to `b`, both endpoints included.
    pub fn tree_path(&self, a: &NodeId, b: &NodeId) -> Vec<&NodeId> {
        let up_a = self.path_to_root(a);
        let up_b = self.path_to_root(b);
        let Some(lca_pos) = up_a.iter().position(|n| up_b.contains(n)) else {
            return Vec::new();
        };
        let lca = up_a[lca_pos];
        let mut path: Vec<&NodeId> = up_a[..=lca_pos].to_vec();
        let b_pos = up_b.iter().position(|n| *n == lca).unwrap();
        path.extend(up_b[..b_pos].iter().rev());
        path
    }

    /// Number of levels on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| self.path_to_root(&n.id).len()).max().unwrap_or(0)
    }

    /// All nodes in the subtree rooted at `id`, in pre-order.
    pub fn subtree(&self, id: &NodeId) -> Vec<&NodeId> {
        let mut out = Vec::new();
        if let Some(&i) = self.index.get(id) {
            let mut stack = vec![i];
            while let Some(n) = stack.pop() {
                out.push(&self.nodes[n].id);
                for &c in self.children[n].iter().rev() {
                    stack.push(c);
                }
            }
        }
        out
    }

    pub fn inject_failure(&mut self, node: &NodeId, fail_at_ms: f64, heal_at_ms: Option<f64>) -> Result<(), TopologyError> {
        self.require(node)?;
        if let Some(h) = heal_at_ms {
            if h <= fail_at_ms {
                return Err(TopologyError::InvalidWindow {
                    node: node.to_string(),
                    fail_at_ms,
                    heal_at_ms: h,
                });
            }
        }
        self.failures.windows.push(FailureWindow {
            node: node.clone(),
            fail_at_ms,
            heal_at_ms,
        });
        Ok(())
    }

    pub fn is_down(&self, node: &NodeId, t: f64) -> bool {
        self.failures.is_down(node, t)
    }

    /// False if either endpoint or any node on the static tree path is down.
    pub fn is_reachable(&self, a: &NodeId, b: &NodeId, t: f64) -> bool {
        let path = self.tree_path(a, b);
        !path.is_empty() && path.iter().all(|n| !self.is_down(n, t))
    }

    pub fn link_class(&self, a: &NodeId, b: &NodeId) -> Option<LinkClass> {
        LinkClass::between(self.level(a)?, self.level(b)?)
    }

    pub fn sample_latency<R: Rng + ?Sized>(&self, class: LinkClass, rng: &mut R) -> Result<f64, TopologyError> {
        self.latency.sample(class, rng)
    }
}

/// 32-byte seed for the substream `(master, node, purpose)`.
pub fn derive_seed(master: u64, node: &str, purpose: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((node.len() as u64).to_le_bytes());
    h.update(node.as_bytes());
    h.update((purpose.len() as u64).to_le_bytes());
    h.update(purpose.as_bytes());
    h.finalize().into()
}

pub fn stream_rng(master: u64, node: &str, purpose: &str) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(master, node, purpose))
}

/// Lazily created, independently seeded RNG substreams.
#[derive(Debug, Clone)]
pub struct RngStreams {
    master: u64,
    streams: BTreeMap<(String, String), ChaCha8Rng>,
}

impl RngStreams {
    pub fn new(master: u64) -> Self {
        RngStreams {
            master,
            streams: BTreeMap::new(),
        }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn get(&mut self, node: &str, purpose: &str) -> &mut ChaCha8Rng {
        let master = self.master;
        self.streams
            .entry((node.to_string(), purpose.to_string()))
            .or_insert_with(|| stream_rng(master, node, purpose))
    }
}

/// One entry of the deterministic event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t_ms: f64,
    pub seq: u64,
    pub kind: String,
    pub node: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub records: Vec<TraceRecord>,
}

impl SimTrace {
    pub fn push(&mut self, t_ms: f64, kind: &str, node: &str, detail: impl Into<String>) {
        let seq = self.records.len() as u64;
        self.records.push(TraceRecord {
            t_ms,
            seq,
            kind: kind.to_string(),
            node: node.to_string(),
            detail: detail.into(),
        });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TraceRecord> {
        self.records.iter()
    }

    /// Newline-delimited JSON, one record per line.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("trace record serializes"));
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 of the NDJSON export.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for r in &self.records {
            h.update(serde_json::to_string(r).expect("trace record serializes").as_bytes());
            h.update(b"\n");
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent<P> {
    pub at: f64,
    pub seq: u64,
    pub payload: P,
}

struct Pending<P>(SimEvent<P>);

impl<P> PartialEq for Pending<P> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<P> Eq for Pending<P> {}

impl<P> PartialOrd for Pending<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Pending<P> {
    // reversed: BinaryHeap is a max-heap and we want the earliest (at, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.at.total_cmp(&self.0.at).then_with(|| other.0.seq.cmp(&self.0.seq))
    }
}

/// Discrete-event queue ordered by `(timestamp, insertion sequence)`.
pub struct EventQueue<P> {
    heap: BinaryHeap<Pending<P>>,
    now: f64,
    next_seq: u64,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            now: 0.0,
            next_seq: 0,
        }
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|p| p.0.at)
    }

    pub fn schedule(&mut self, at: f64, payload: P) -> Result<u64, TopologyError> {
        if at < self.now || at.is_nan() {
            return Err(TopologyError::PastEvent {
                at_ms: at,
                now_ms: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Pending(SimEvent { at, seq, payload }));
        Ok(seq)
    }

    pub fn schedule_in(&mut self, delay: f64, payload: P) -> Result<u64, TopologyError> {
        self.schedule(self.now + delay.max(0.0), payload)
    }

    /// Pops the next event if its timestamp is `<= limit`, advancing the clock.
    pub fn pop_until(&mut self, limit: f64) -> Option<SimEvent<P>> {
        if self.heap.peek()?.0.at > limit {
            return None;
        }
        let ev = self.heap.pop()?.0;
        self.now = ev.at;
        Some(ev)
    }

    pub fn pop(&mut self) -> Option<SimEvent<P>> {
        self.pop_until(f64::INFINITY)
    }

    /// Moves the clock forward; never backwards.
    pub fn advance_to(&mut self, t: f64) {
        if t > self.now {
            self.now = t;
        }
    }
}

/// Payload for the plain trace-producing event loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub kind: String,
    pub node: String,
    pub detail: String,
}

impl TraceEntry {
    pub fn new(kind: &str, node: &str, detail: &str) -> Self {
        TraceEntry {
            kind: kind.into(),
            node: node.into(),
            detail: detail.into(),
        }
    }
}

/// Processes every event with timestamp `<= t_ms` in order and leaves the
/// clock at `t_ms`.
pub fn run_until(queue: &mut EventQueue<TraceEntry>, t_ms: f64) -> SimTrace {
    let mut trace = SimTrace::default();
    while let Some(ev) = queue.pop_until(t_ms) {
        trace.push(ev.at, &ev.payload.kind, &ev.payload.node, ev.payload.detail);
    }
    queue.advance_to(t_ms);
    trace
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(nodes: &[(&str, NodeLevel, Option<&str>)]) -> TopologyDoc {
        TopologyDoc {
            nodes: nodes
                .iter()
                .map(|(id, level, parent)| NodeDoc {
                    id: id.to_string(),
                    level: *level,
                    parent: parent.map(str::to_string),
                    ..Default::default()
                })
                .collect(),
            ..Default::default()
        }
    }

    #[test]
    fn builds_three_level_tree() {
        let t = Topology::build(&TopologyDoc::three_level(2, 2)).unwrap();
        assert_eq!(t.len(), 7);
        assert_eq!(t.depth(), 3);
        assert_eq!(t.children(&"f1".into()).len(), 2);
        assert_eq!(t.node(&"d3".into()).unwrap().rank, 5);
    }

    #[test]
    fn duplicate_id_rejected() {
        let d = doc(&[
            ("c", NodeLevel::Cloud, None),
            ("f1", NodeLevel::Fog, Some("c")),
            ("f1", NodeLevel::Fog, Some("c")),
        ]);
        assert_eq!(Topology::build(&d).unwrap_err(), TopologyError::DuplicateId("f1".into()));
    }

    #[test]
    fn two_level_device_under_cloud() {
        let d = doc(&[("c", NodeLevel::Cloud, None), ("d", NodeLevel::Device, None)]);
        let t = Topology::build(&d).unwrap();
        assert_eq!(t.parent(&"d".into()).unwrap(), "c");
        assert_eq!(t.depth(), 2);
    }

    #[test]
    fn structural_errors() {
        let dangling = doc(&[("c", NodeLevel::Cloud, None), ("d", NodeLevel::Device, Some("nope"))]);
        assert!(matches!(Topology::build(&dangling), Err(TopologyError::DanglingParent { .. })));
        let dev_dev = doc(&[
            ("c", NodeLevel::Cloud, None),
            ("d1", NodeLevel::Device, Some("c")),
            ("d2", NodeLevel::Device, Some("d1")),
        ]);
        assert_eq!(
            Topology::build(&dev_dev).unwrap_err(),
            TopologyError::DeviceParentedToDevice("d2".into())
        );
        let two_clouds = doc(&[("c", NodeLevel::Cloud, None), ("c2", NodeLevel::Cloud, None)]);
        assert_eq!(Topology::build(&two_clouds).unwrap_err(), TopologyError::CloudCount(2));
    }

    #[test]
    fn degenerate_and_clamped_latency() {
        let mut m = LatencyModel::default();
        m.set(LinkClass::ToCloud, LinkLatency::fixed(30.0));
        let mut rng = stream_rng(1, "n", "p");
        for _ in 0..100 {
            assert_eq!(m.sample(LinkClass::ToCloud, &mut rng).unwrap(), 30.0);
        }
        assert_eq!(clamp_floor(-2.0, 0.1), 0.1);
        let empty = LatencyModel {
            device_fog: None,
            fog_fog: None,
            to_cloud: None,
        };
        assert_eq!(
            empty.sample(LinkClass::FogToFog, &mut rng),
            Err(TopologyError::UnknownLinkClass(LinkClass::FogToFog))
        );
    }

    #[test]
    fn floor_applies_to_wide_distribution() {
        let mut m = LatencyModel::default();
        m.set(
            LinkClass::DeviceToFog,
            LinkLatency {
                mean_ms: 0.5,
                stddev_ms: 5.0,
                floor_ms: 0.1,
            },
        );
        let mut rng = stream_rng(3, "n", "p");
        for _ in 0..1000 {
            assert!(m.sample(LinkClass::DeviceToFog, &mut rng).unwrap() >= 0.1);
        }
    }

    #[test]
    fn queue_ties_break_by_insertion() {
        let mut q = EventQueue::new();
        q.schedule(5.0, TraceEntry::new("A", "n", "")).unwrap();
        q.schedule(5.0, TraceEntry::new("B", "n", "")).unwrap();
        q.schedule(1.0, TraceEntry::new("Z", "n", "")).unwrap();
        let trace = run_until(&mut q, 10.0);
        let kinds: Vec<_> = trace.iter().map(|r| r.kind.as_str()).collect();
        assert_eq!(kinds, ["Z", "A", "B"]);
        assert_eq!(q.now(), 10.0);
    }

    #[test]
    fn empty_queue_advances_clock() {
        let mut q: EventQueue<TraceEntry> = EventQueue::new();
        let trace = run_until(&mut q, 50.0);
        assert!(trace.is_empty());
        assert_eq!(q.now(), 50.0);
        assert!(matches!(
            q.schedule(10.0, TraceEntry::new("late", "n", "")),
            Err(TopologyError::PastEvent { .. })
        ));
    }

    #[test]
    fn failure_windows_and_reachability() {
        let mut t = Topology::build(&TopologyDoc::three_level(2, 1)).unwrap();
        let f1 = NodeId::from("f1");
        t.inject_failure(&f1, 10.0, Some(20.0)).unwrap();
        let cloud = t.cloud().clone();
        assert!(!t.is_reachable(&"d1".into(), &cloud, 15.0));
        assert!(t.is_reachable(&"d1".into(), &cloud, 25.0));
        assert!(t.is_reachable(&"f2".into(), &cloud, 15.0));
        assert!(t.is_reachable(&"d1".into(), &cloud, 20.0));
        assert!(!t.is_reachable(&"d1".into(), &cloud, 10.0));
        assert!(matches!(
            t.inject_failure(&f1, 30.0, Some(30.0)),
            Err(TopologyError::InvalidWindow { .. })
        ));
        assert_eq!(t.failures.up_at_or_after(&f1, 12.0), Some(20.0));
        assert!(!t.failures.up_during(&f1, 5.0, 11.0));
        assert!(t.failures.up_during(&f1, 20.0, 40.0));
    }

    #[test]
    fn seed_substreams_independent_of_other_nodes() {
        let mut a = RngStreams::new(7);
        let mut b = RngStreams::new(7);
        let _ = b.get("other", "link").gen::<u64>();
        assert_eq!(a.get("n1", "link").gen::<u64>(), b.get("n1", "link").gen::<u64>());
        assert_ne!(derive_seed(7, "n1", "link"), derive_seed(7, "n1", "svc"));
    }

    #[test]
    fn tree_path_goes_through_lca() {
        let t = Topology::build(&TopologyDoc::three_level(2, 1)).unwrap();
        let p: Vec<_> = t.tree_path(&"d1".into(), &"d2".into()).into_iter().cloned().collect();
        assert_eq!(p, vec!["d1".into(), "f1".into(), "cloud".into(), "f2".into(), NodeId::from("d2")]);
    }
}
