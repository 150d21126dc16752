use std::cmp::Ordering;
use std::collections::HashMap;
use std::time::Instant;

use super::{AllocError, Allocation, AllocationInstance, SolveStats};

pub const ORACLE_MAX_FOGS: usize = 6;
pub const ORACLE_MAX_DEVICES: usize = 10;

/// Reference solver for small instances: every active set is enumerated and
/// the capacitated assignment under it is solved by memoized recursion over
/// (device, residual capacities). Shares nothing with the branch and bound
/// beyond the objective.
pub fn solve_oracle(inst: &AllocationInstance) -> Result<(Allocation, SolveStats), AllocError> {
    let started = Instant::now();
    let nf = inst.fogs.len();
    let nd = inst.devices.len();
    if nf > ORACLE_MAX_FOGS || nd > ORACLE_MAX_DEVICES {
        return Err(AllocError::BudgetExceeded { devices: nd, fogs: nf });
    }
    let mut best: Option<Allocation> = None;
    let mut evaluated = 0u64;
    for mask in 0u32..(1 << nf) {
        let active: Vec<bool> = (0..nf).map(|j| mask & (1 << j) != 0).collect();
        let caps: Vec<u32> = (0..nf)
            .map(|j| if active[j] { inst.fogs[j].capacity.min(nd as u32) } else { 0 })
            .collect();
        if caps.iter().map(|&c| c as usize).sum::<usize>() < nd {
            continue;
        }
        let mut memo = HashMap::new();
        let Some(assign) = cheapest_assignment(inst, 0, caps, &mut memo).map(|(_, a)| a) else {
            continue;
        };
        evaluated += 1;
        let cand = Allocation::from_parts(inst, &active, &assign)?;
        let replace = match &best {
            None => true,
            Some(cur) => match cand.z.total_cmp(&cur.z) {
                Ordering::Less => true,
                Ordering::Equal => cand.tie_cmp(cur) == Ordering::Less,
                Ordering::Greater => false,
            },
        };
        if replace {
            best = Some(cand);
        }
    }
    let capacity = inst.fogs.iter().map(|f| f.capacity as u64).sum();
    let best = best.ok_or(AllocError::Infeasible { capacity, devices: nd })?;
    Ok((
        best,
        SolveStats {
            nodes_explored: evaluated,
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        },
    ))
}

type Memo = HashMap<(usize, Vec<u32>), Option<(f64, Vec<usize>)>>;

/// Minimum-cost completion of devices `i..` given residual capacities. Among
/// equal costs the lexicographically smallest fog vector wins, because fogs
/// are tried in index order and only a strictly cheaper option replaces.
fn cheapest_assignment(inst: &AllocationInstance, i: usize, caps: Vec<u32>, memo: &mut Memo) -> Option<(f64, Vec<usize>)> {
    if i == inst.devices.len() {
        return Some((0.0, Vec::new()));
    }
    let key = (i, caps);
    if let Some(hit) = memo.get(&key) {
        return hit.clone();
    }
    let caps = key.1.clone();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for j in 0..caps.len() {
        if caps[j] == 0 {
            continue;
        }
        let mut rest = caps.clone();
        rest[j] -= 1;
        if let Some((tail_cost, tail)) = cheapest_assignment(inst, i + 1, rest, memo) {
            let cost = inst.c[i][j] + tail_cost;
            if best.as_ref().is_none_or(|b| cost < b.0) {
                let mut v = Vec::with_capacity(tail.len() + 1);
                v.push(j);
                v.extend(tail);
                best = Some((cost, v));
            }
        }
    }
    memo.insert(key, best.clone());
    best
}
