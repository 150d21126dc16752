use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Allocation, AllocationInstance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Health {
    Up,
    SuspectedDown { since_ms: f64 },
}

/// Answers whether a fog replies to a probe sent at `t_ms`.
pub trait HealthOracle {
    fn responds(&mut self, fog: &str, t_ms: f64) -> bool;
}

impl<F: FnMut(&str, f64) -> bool> HealthOracle for F {
    fn responds(&mut self, fog: &str, t_ms: f64) -> bool {
        self(fog, t_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RouteTarget {
    Fog(String),
    Cloud(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub target: RouteTarget,
    /// Time at which the target was chosen, after any probe timeouts.
    pub decided_at_ms: f64,
    /// Fogs that timed out during this request.
    pub timed_out: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DeviceRoute {
    primary: String,
    shadows: Vec<String>,
}

/// Per-device failover table built from an allocation: primary fog first,
/// then its shadow hosts by ascending update cost, then the cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouterState {
    routes: BTreeMap<String, DeviceRoute>,
    health: BTreeMap<String, Health>,
    pub timeout_ms: f64,
    pub cloud: String,
}

impl RouterState {
    pub fn from_allocation(inst: &AllocationInstance, alloc: &Allocation, cloud: impl Into<String>, timeout_ms: f64) -> Self {
        let mut routes = BTreeMap::new();
        for (i, j) in alloc.assignment().into_iter().enumerate() {
            let shadows = inst
                .order_by_update_cost(j, alloc.shadows_of(j))
                .into_iter()
                .map(|k| inst.fogs[k].id.clone())
                .collect();
            routes.insert(
                inst.devices[i].clone(),
                DeviceRoute {
                    primary: inst.fogs[j].id.clone(),
                    shadows,
                },
            );
        }
        let health = inst.fogs.iter().map(|f| (f.id.clone(), Health::Up)).collect();
        RouterState {
            routes,
            health,
            timeout_ms,
            cloud: cloud.into(),
        }
    }

    pub fn primary(&self, device: &str) -> Option<&str> {
        self.routes.get(device).map(|r| r.primary.as_str())
    }

    pub fn shadows(&self, device: &str) -> Option<&[String]> {
        self.routes.get(device).map(|r| r.shadows.as_slice())
    }

    pub fn health(&self, fog: &str) -> Health {
        self.health.get(fog).copied().unwrap_or(Health::Up)
    }

    pub fn set_health(&mut self, fog: &str, h: Health) {
        self.health.insert(fog.to_string(), h);
    }

    /// Clears suspicion, e.g. after the fog answers again.
    pub fn mark_up(&mut self, fog: &str) {
        self.set_health(fog, Health::Up);
    }

    /// Picks the first candidate that is not suspected and answers its probe.
    /// Each silent probe costs one timeout and marks the fog suspected. The
    /// cloud is the last resort, so a target is always returned. `None` only
    /// for devices that are not in the table.
    pub fn route_request(&mut self, device: &str, t_ms: f64, oracle: &mut dyn HealthOracle) -> Option<Route> {
        let route = self.routes.get(device)?.clone();
        let mut now = t_ms;
        let mut timed_out = Vec::new();
        for fog in std::iter::once(&route.primary).chain(route.shadows.iter()) {
            if let Health::SuspectedDown { .. } = self.health(fog) {
                continue;
            }
            if oracle.responds(fog, now) {
                return Some(Route {
                    target: RouteTarget::Fog(fog.clone()),
                    decided_at_ms: now,
                    timed_out,
                });
            }
            now += self.timeout_ms;
            self.set_health(fog, Health::SuspectedDown { since_ms: now });
            timed_out.push(fog.clone());
        }
        Some(Route {
            target: RouteTarget::Cloud(self.cloud.clone()),
            decided_at_ms: now,
            timed_out,
        })
    }
}
