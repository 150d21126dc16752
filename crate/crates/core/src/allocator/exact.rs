use std::cmp::Ordering;
use std::time::Instant;

use super::{AllocError, Allocation, AllocationInstance, SolveStats};

/// Depth-first branch and bound. The outer search fixes the active set one
/// fog at a time; each complete active set is then handed to an inner
/// assignment search. Nodes are pruned only when their bound strictly exceeds
/// the incumbent, so every cost-tied optimum is visited and the tie-break
/// order in [`Allocation::tie_cmp`] decides.
pub fn solve_exact(inst: &AllocationInstance) -> Result<(Allocation, SolveStats), AllocError> {
    let started = Instant::now();
    let nf = inst.fogs.len();
    let nd = inst.devices.len();
    let capacity: u64 = inst.fogs.iter().map(|f| f.capacity as u64).sum();
    if capacity < nd as u64 {
        return Err(AllocError::Infeasible { capacity, devices: nd });
    }

    let open_cost: Vec<f64> = (0..nf).map(|j| inst.fogs[j].fixed_cost + inst.shadow_cost(j)).collect();
    let mut s = Search {
        inst,
        open_cost,
        best: None,
        nodes: 0,
        active: vec![false; nf],
        assign: vec![usize::MAX; nd],
        load: vec![0; nf],
    };
    s.activation(0, 0.0);
    let (_, best) = s.best.ok_or(AllocError::Infeasible { capacity, devices: nd })?;
    let stats = SolveStats {
        nodes_explored: s.nodes,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    Ok((best, stats))
}

struct Search<'a> {
    inst: &'a AllocationInstance,
    open_cost: Vec<f64>,
    best: Option<(f64, Allocation)>,
    nodes: u64,
    active: Vec<bool>,
    assign: Vec<usize>,
    load: Vec<u32>,
}

impl Search<'_> {
    fn incumbent(&self) -> f64 {
        self.best.as_ref().map_or(f64::INFINITY, |b| b.0)
    }

    fn activation(&mut self, j: usize, committed: f64) {
        self.nodes += 1;
        let nf = self.inst.fogs.len();
        let nd = self.inst.devices.len();

        // fogs still usable: open ones plus the undecided tail
        let usable = |k: usize, active: &[bool]| active[k] || k >= j;
        let cap: u64 = (0..nf)
            .filter(|&k| usable(k, &self.active))
            .map(|k| self.inst.fogs[k].capacity as u64)
            .sum();
        if cap < nd as u64 {
            return;
        }
        let mut bound = committed;
        for i in 0..nd {
            bound += (0..nf)
                .filter(|&k| usable(k, &self.active))
                .map(|k| self.inst.c[i][k])
                .fold(f64::INFINITY, f64::min);
        }
        if bound > self.incumbent() {
            return;
        }

        if j == nf {
            // an active fog with no devices only adds cost, but it is still a
            // feasible point; the assignment search handles it uniformly
            let order = self.device_order();
            self.assignment(&order, 0, committed);
            return;
        }

        self.active[j] = true;
        self.activation(j + 1, committed + self.open_cost[j]);
        self.active[j] = false;
        self.activation(j + 1, committed);
    }

    /// Devices with the largest gap between their two cheapest open fogs go
    /// first, so forced choices happen early.
    fn device_order(&self) -> Vec<usize> {
        let nd = self.inst.devices.len();
        let open: Vec<usize> = (0..self.inst.fogs.len()).filter(|&k| self.active[k]).collect();
        let regret = |i: usize| {
            let mut cs: Vec<f64> = open.iter().map(|&k| self.inst.c[i][k]).collect();
            cs.sort_by(f64::total_cmp);
            match cs.len() {
                0 => 0.0,
                1 => f64::INFINITY,
                _ => cs[1] - cs[0],
            }
        };
        let mut order: Vec<usize> = (0..nd).collect();
        order.sort_by(|&a, &b| regret(b).total_cmp(&regret(a)).then(a.cmp(&b)));
        order
    }

    fn assignment(&mut self, order: &[usize], depth: usize, partial: f64) {
        self.nodes += 1;
        let nf = self.inst.fogs.len();
        if depth == order.len() {
            self.offer();
            return;
        }
        let residual: u64 = (0..nf)
            .filter(|&k| self.active[k])
            .map(|k| (self.inst.fogs[k].capacity - self.load[k]) as u64)
            .sum();
        if residual < (order.len() - depth) as u64 {
            return;
        }
        let mut bound = partial;
        for &i in &order[depth..] {
            bound += (0..nf)
                .filter(|&k| self.active[k] && self.load[k] < self.inst.fogs[k].capacity)
                .map(|k| self.inst.c[i][k])
                .fold(f64::INFINITY, f64::min);
        }
        if bound > self.incumbent() {
            return;
        }

        let i = order[depth];
        let mut choices: Vec<usize> = (0..nf)
            .filter(|&k| self.active[k] && self.load[k] < self.inst.fogs[k].capacity)
            .collect();
        choices.sort_by(|&a, &b| self.inst.c[i][a].total_cmp(&self.inst.c[i][b]).then(a.cmp(&b)));
        for k in choices {
            self.assign[i] = k;
            self.load[k] += 1;
            self.assignment(order, depth + 1, partial + self.inst.c[i][k]);
            self.load[k] -= 1;
        }
        self.assign[i] = usize::MAX;
    }

    fn offer(&mut self) {
        let Ok(cand) = Allocation::from_parts(self.inst, &self.active, &self.assign) else {
            return;
        };
        let better = match &self.best {
            None => true,
            Some((z, cur)) => match cand.z.total_cmp(z) {
                Ordering::Less => true,
                Ordering::Equal => cand.tie_cmp(cur) == Ordering::Less,
                Ordering::Greater => false,
            },
        };
        if better {
            self.best = Some((cand.z, cand));
        }
    }
}
