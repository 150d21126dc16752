use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::RuntimeError;
use crate::topology::{NodeId, NodeLevel, Topology};

/// Namespace id of a deployed application.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct AppId(pub u32);

impl std::fmt::Display for AppId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ns{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Role {
    /// `J` only: cloud and fog nodes.
    Controller,
    /// `J` + `C`: devices run both.
    ControllerWorker,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppNode {
    pub id: NodeId,
    pub level: NodeLevel,
    pub role: Role,
    /// Static controller parent inside this app.
    pub parent: Option<NodeId>,
    pub rank: u32,
}

/// The controller-worker tree of one app over a connected topology subset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppTree {
    pub name: String,
    pub ns: AppId,
    pub root: NodeId,
    pub nodes: BTreeMap<NodeId, AppNode>,
}

impl AppTree {
    pub fn build(topo: &Topology, name: &str, ns: AppId, subset: &[NodeId]) -> Result<AppTree, RuntimeError> {
        if subset.is_empty() {
            return Err(RuntimeError::EmptySubset);
        }
        let set: BTreeSet<&NodeId> = subset.iter().collect();
        for n in &set {
            topo.require(n)?;
        }
        let mut roots = Vec::new();
        let mut nodes = BTreeMap::new();
        for id in &set {
            let spec = topo.node(id).expect("checked above");
            let parent = spec.parent.as_ref().filter(|p| set.contains(p)).cloned();
            if parent.is_none() {
                roots.push((*id).clone());
            }
            let role = match spec.level {
                NodeLevel::Device => Role::ControllerWorker,
                _ => Role::Controller,
            };
            nodes.insert(
                (*id).clone(),
                AppNode {
                    id: (*id).clone(),
                    level: spec.level,
                    role,
                    parent,
                    rank: spec.rank,
                },
            );
        }
        if roots.len() != 1 {
            let names: Vec<&str> = roots.iter().map(NodeId::as_str).collect();
            return Err(RuntimeError::DisconnectedSubset(names.join(",")));
        }
        Ok(AppTree {
            name: name.to_string(),
            ns,
            root: roots.remove(0),
            nodes,
        })
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn node(&self, id: &NodeId) -> Option<&AppNode> {
        self.nodes.get(id)
    }

    pub fn at_level(&self, level: NodeLevel) -> Vec<&NodeId> {
        self.nodes.values().filter(|n| n.level == level).map(|n| &n.id).collect()
    }

    pub fn workers(&self) -> Vec<&NodeId> {
        self.nodes
            .values()
            .filter(|n| n.role == Role::ControllerWorker)
            .map(|n| &n.id)
            .collect()
    }

    /// Role label used in listings: `J` or `J+C`.
    pub fn role_label(&self, id: &NodeId) -> Option<&'static str> {
        self.nodes.get(id).map(|n| match n.role {
            Role::Controller => "J",
            Role::ControllerWorker => "J+C",
        })
    }
}
