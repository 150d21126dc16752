//! Fog-to-device allocation: devices are assigned to capacitated fogs, each
//! serving fog pays a fixed activation cost, and every serving fog places a
//! shadow replica on the cheapest alternate fogs.
//!
//! The model, with `S = min(2, |F| - 1)`:
//!
//! ```text
//! minimize   z = Σ_j f_j a_j + Σ_j Σ_{k≠j} u_jk y_jk + Σ_i Σ_j c_ij x_ij
//! subject to Σ_j x_ij = 1                 for every device i
//!            Σ_i x_ij <= cap_j · a_j      for every fog j
//!            Σ_{k≠j} y_jk = S · a_j       for every fog j
//!            y_jj = 0
//! ```
//!
//! `y_jk = 1` means the shadow of fog `j` lives on fog `k`. Shadows may sit on
//! fogs that serve no devices. Because shadow choices only interact through
//! `a_j`, each active fog simply takes its `S` cheapest `u_j·` entries.

mod exact;
mod instance;
mod oracle;
mod router;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use exact::solve_exact;
pub use instance::{AllocationInstance, FogSpec, InstanceDoc};
pub use oracle::{solve_oracle, ORACLE_MAX_DEVICES, ORACLE_MAX_FOGS};
pub use router::{Health, HealthOracle, Route, RouteTarget, RouterState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocError {
    #[error("instance is missing entries: {0}")]
    MissingEntries(String),
    #[error("negative cost in {0}")]
    NegativeCost(String),
    #[error("fog {0:?} must have capacity >= 1")]
    ZeroCapacity(String),
    #[error("infeasible: total capacity {capacity} < {devices} devices")]
    Infeasible { capacity: u64, devices: usize },
    #[error("constraint violated: {0}")]
    ConstraintViolated(&'static str),
    #[error("oracle budget exceeded ({devices} devices, {fogs} fogs)")]
    BudgetExceeded { devices: usize, fogs: usize },
    #[error("malformed instance document: {0}")]
    Document(String),
}

/// A complete solution in decision-variable form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// `x[i][j]`: device `i` served by fog `j`.
    pub x: Vec<Vec<bool>>,
    /// `y[j][k]`: shadow of fog `j` placed on fog `k`.
    pub y: Vec<Vec<bool>>,
    /// `a[j]`: fog `j` serves devices.
    pub a: Vec<bool>,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub nodes_explored: u64,
    pub wall_time_ms: f64,
}

/// Number of shadows each active fog needs.
pub fn shadow_slots(fogs: usize) -> usize {
    fogs.saturating_sub(1).min(2)
}

impl Allocation {
    /// Builds an allocation from a per-device fog index, activating exactly
    /// the fogs that receive devices and giving each its cheapest shadows.
    pub fn from_assignment(inst: &AllocationInstance, assign: &[usize]) -> Result<Allocation, AllocError> {
        let nf = inst.fogs.len();
        let mut active = vec![false; nf];
        for &j in assign {
            if j >= nf {
                return Err(AllocError::ConstraintViolated("shape"));
            }
            active[j] = true;
        }
        Allocation::from_parts(inst, &active, assign)
    }

    pub fn from_parts(inst: &AllocationInstance, active: &[bool], assign: &[usize]) -> Result<Allocation, AllocError> {
        let nf = inst.fogs.len();
        let mut x = vec![vec![false; nf]; inst.devices.len()];
        for (i, &j) in assign.iter().enumerate() {
            if j >= nf || i >= x.len() {
                return Err(AllocError::ConstraintViolated("shape"));
            }
            x[i][j] = true;
        }
        let mut y = vec![vec![false; nf]; nf];
        for j in (0..nf).filter(|&j| active[j]) {
            for k in inst.cheapest_shadows(j) {
                y[j][k] = true;
            }
        }
        let mut alloc = Allocation {
            x,
            y,
            a: active.to_vec(),
            z: 0.0,
        };
        alloc.z = objective(inst, &alloc)?;
        Ok(alloc)
    }

    /// Fog index serving each device.
    pub fn assignment(&self) -> Vec<usize> {
        self.x.iter().map(|row| row.iter().position(|&v| v).unwrap_or(usize::MAX)).collect()
    }

    pub fn active_fogs(&self) -> Vec<usize> {
        (0..self.a.len()).filter(|&j| self.a[j]).collect()
    }

    /// Shadow hosts of fog `j` in ascending index order.
    pub fn shadows_of(&self, j: usize) -> Vec<usize> {
        (0..self.y[j].len()).filter(|&k| self.y[j][k]).collect()
    }

    pub fn devices_on(&self, j: usize) -> Vec<usize> {
        (0..self.x.len()).filter(|&i| self.x[i][j]).collect()
    }

    /// Deterministic tie-break order: active fog set (as a sorted index
    /// list), then the assignment vector, then shadow lists.
    pub fn tie_cmp(&self, other: &Allocation) -> Ordering {
        self.active_fogs()
            .cmp(&other.active_fogs())
            .then_with(|| self.assignment().cmp(&other.assignment()))
            .then_with(|| {
                let a: Vec<Vec<usize>> = (0..self.y.len()).map(|j| self.shadows_of(j)).collect();
                let b: Vec<Vec<usize>> = (0..other.y.len()).map(|j| other.shadows_of(j)).collect();
                a.cmp(&b)
            })
    }
}

/// Checks every constraint and returns the exact objective value.
pub fn objective(inst: &AllocationInstance, alloc: &Allocation) -> Result<f64, AllocError> {
    let nd = inst.devices.len();
    let nf = inst.fogs.len();
    if alloc.x.len() != nd
        || alloc.x.iter().any(|r| r.len() != nf)
        || alloc.y.len() != nf
        || alloc.y.iter().any(|r| r.len() != nf)
        || alloc.a.len() != nf
    {
        return Err(AllocError::ConstraintViolated("shape"));
    }
    for row in &alloc.x {
        if row.iter().filter(|&&v| v).count() != 1 {
            return Err(AllocError::ConstraintViolated("assign-once"));
        }
    }
    for j in 0..nf {
        let load = (0..nd).filter(|&i| alloc.x[i][j]).count() as u64;
        let cap = if alloc.a[j] { inst.fogs[j].capacity as u64 } else { 0 };
        if load > cap {
            return Err(AllocError::ConstraintViolated("capacity"));
        }
    }
    let slots = shadow_slots(nf);
    for j in 0..nf {
        if alloc.y[j][j] {
            return Err(AllocError::ConstraintViolated("shadow-self"));
        }
        let placed = alloc.y[j].iter().filter(|&&v| v).count();
        let want = if alloc.a[j] { slots } else { 0 };
        if placed != want {
            return Err(AllocError::ConstraintViolated("shadow-count"));
        }
    }

    let mut fixed = 0.0;
    let mut shadow = 0.0;
    let mut latency = 0.0;
    for j in 0..nf {
        if alloc.a[j] {
            fixed += inst.fogs[j].fixed_cost;
        }
        for k in 0..nf {
            if alloc.y[j][k] {
                shadow += inst.u[j][k];
            }
        }
    }
    for i in 0..nd {
        for j in 0..nf {
            if alloc.x[i][j] {
                latency += inst.c[i][j];
            }
        }
    }
    Ok(fixed + shadow + latency)
}

/// Serializable solution report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionDoc {
    pub assignment: Vec<AssignmentEntry>,
    pub shadows: Vec<ShadowEntry>,
    pub active: Vec<String>,
    pub z: f64,
    pub stats: SolveStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentEntry {
    pub device: String,
    pub fog: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowEntry {
    pub fog: String,
    pub shadows: Vec<String>,
}

impl SolutionDoc {
    pub fn new(inst: &AllocationInstance, alloc: &Allocation, stats: SolveStats) -> Self {
        let assignment = alloc
            .assignment()
            .iter()
            .enumerate()
            .map(|(i, &j)| AssignmentEntry {
                device: inst.devices[i].clone(),
                fog: inst.fogs[j].id.clone(),
            })
            .collect();
        let shadows = alloc
            .active_fogs()
            .into_iter()
            .map(|j| ShadowEntry {
                fog: inst.fogs[j].id.clone(),
                shadows: inst
                    .order_by_update_cost(j, alloc.shadows_of(j))
                    .into_iter()
                    .map(|k| inst.fogs[k].id.clone())
                    .collect(),
            })
            .collect();
        SolutionDoc {
            assignment,
            shadows,
            active: alloc.active_fogs().into_iter().map(|j| inst.fogs[j].id.clone()).collect(),
            z: alloc.z,
            stats,
        }
    }
}
