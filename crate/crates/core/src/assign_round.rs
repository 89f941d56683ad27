//! Bipartite rounding of fractional assignments.
//!
//! The central object is the machine-copy graph ([`StGraph`]): machine `i`
//! is split into `t_i = ceil(sum_j y_ij)` unit-capacity copies, and each
//! job's fraction is poured greedily into the copies in nonincreasing order
//! of processing time. Any assignment placing at most one job per copy then
//! has per-machine load at most the fractional load plus one job, which is
//! what every solver here leans on.
//!
//! Two rounding routines consume the graph:
//!
//! * [`round_gap`] — a min-cost matching covering every job, found by
//!   successive-shortest-path min-cost flow on the support edges. Bipartite
//!   integrality makes its cost no worse than the fractional cost.
//! * [`round_budgeted`] — handles an extra "total reward >= R" row, under
//!   which the matching LP is no longer integral. A basic optimum is a
//!   convex combination of two adjacent matchings whose symmetric
//!   difference is one path or cycle; the case analysis picks a matching
//!   (possibly plus one extra edge, doubling up a single copy) with reward
//!   >= R and cost at most the LP optimum plus one edge cost.

use std::collections::{BTreeMap, BTreeSet};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::lp::{LpError, LpModel, LpStatus, Sense};

#[derive(Debug, Error)]
pub enum RoundError {
    #[error("no matching covers every job on the support edges")]
    InfeasibleMatching,
    #[error("reward target unattainable on the support edges")]
    RewardInfeasible,
    #[error("fractional support is not a single path or cycle: {0}")]
    Structure(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// One unit-capacity copy of a machine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StCopy {
    pub machine: usize,
    /// 1-based position among the copies of this machine; lower ranks carry
    /// larger processing times.
    pub rank: usize,
}

/// A support edge between a job and a machine copy.
#[derive(Debug, Clone)]
pub struct StEdge {
    pub job: usize,
    pub copy: usize,
    /// Fraction of the job carried by this copy.
    pub frac: f64,
    pub cost: f64,
    pub ptime: f64,
    /// Reward of the edge's job; every edge of a job carries the same
    /// value (rewards are earned per scheduled job, not per placement).
    pub reward: f64,
}

/// The machine-copy graph built from a fractional assignment.
#[derive(Debug, Clone)]
pub struct StGraph {
    pub num_machines: usize,
    pub copies: Vec<StCopy>,
    pub edges: Vec<StEdge>,
}

impl StGraph {
    pub fn copy_count(&self, machine: usize) -> usize {
        self.copies.iter().filter(|c| c.machine == machine).count()
    }

    /// Total fractional cost of the graph.
    pub fn fractional_cost(&self) -> f64 {
        self.edges.iter().map(|e| e.frac * e.cost).sum()
    }

    /// Fractional processing load per machine.
    pub fn fractional_loads(&self) -> Vec<f64> {
        let mut loads = vec![0.0; self.num_machines];
        for e in &self.edges {
            loads[self.copies[e.copy].machine] += e.frac * e.ptime;
        }
        loads
    }

    /// Checks the structural invariants: non-final copies are saturated,
    /// no copy is overfull, and processing times are nonincreasing from
    /// each copy of a machine to the next.
    pub fn validate(&self) -> Result<(), RoundError> {
        let t: BTreeMap<usize, usize> = self.copies.iter().fold(BTreeMap::new(), |mut acc, c| {
            *acc.entry(c.machine).or_insert(0) += 1;
            acc
        });
        for (idx, copy) in self.copies.iter().enumerate() {
            let sum: f64 = self
                .edges
                .iter()
                .filter(|e| e.copy == idx)
                .map(|e| e.frac)
                .sum();
            if sum > 1.0 + 1e-7 {
                return Err(RoundError::Structure(format!("copy {idx} overfull: {sum}")));
            }
            if copy.rank < t[&copy.machine] && (sum - 1.0).abs() > 1e-7 {
                return Err(RoundError::Structure(format!(
                    "non-final copy {idx} not saturated: {sum}"
                )));
            }
        }
        for (a, ca) in self.copies.iter().enumerate() {
            for (b, cb) in self.copies.iter().enumerate() {
                if ca.machine == cb.machine && cb.rank == ca.rank + 1 {
                    let min_a = self
                        .edges
                        .iter()
                        .filter(|e| e.copy == a)
                        .map(|e| e.ptime)
                        .fold(f64::INFINITY, f64::min);
                    let max_b = self
                        .edges
                        .iter()
                        .filter(|e| e.copy == b)
                        .map(|e| e.ptime)
                        .fold(0.0, f64::max);
                    if max_b > min_a + 1e-9 {
                        return Err(RoundError::Structure(format!(
                            "copies {a},{b} of machine {} violate the sort order",
                            ca.machine
                        )));
                    }
                }
            }
        }
        let mut job_reward: BTreeMap<usize, f64> = BTreeMap::new();
        for e in &self.edges {
            let r = *job_reward.entry(e.job).or_insert(e.reward);
            if (r - e.reward).abs() > 1e-12 {
                return Err(RoundError::Structure(format!(
                    "job {} carries two rewards: {r} and {}",
                    e.job, e.reward
                )));
            }
        }
        Ok(())
    }
}

/// Builds the machine-copy graph from a fractional assignment.
///
/// `y`, `p`, `c` are row-major `m x n` matrices; `rewards` has length `n`.
/// Requires `sum_i y_ij <= 1` per job. Per-job totals, cost, and reward are
/// preserved exactly (up to float bookkeeping).
pub fn build_st_graph(
    m: usize,
    n: usize,
    y: &[f64],
    p: &[f64],
    c: &[f64],
    rewards: &[f64],
) -> StGraph {
    assert_eq!(y.len(), m * n);
    assert_eq!(p.len(), m * n);
    assert_eq!(c.len(), m * n);
    assert_eq!(rewards.len(), n);
    let mut copies = Vec::new();
    let mut edges = Vec::new();
    for i in 0..m {
        let mut jobs: Vec<usize> = (0..n).filter(|&j| y[i * n + j] > 1e-12).collect();
        if jobs.is_empty() {
            continue;
        }
        jobs.sort_by(|&a, &b| p[i * n + b].total_cmp(&p[i * n + a]).then(a.cmp(&b)));
        let total: f64 = jobs.iter().map(|&j| y[i * n + j]).sum();
        let t = ((total - 1e-9).ceil().max(1.0)) as usize;
        let first = copies.len();
        for g in 0..t {
            copies.push(StCopy {
                machine: i,
                rank: g + 1,
            });
        }
        let mut cur = 0usize;
        let mut room = 1.0f64;
        for &j in &jobs {
            let mut rem = y[i * n + j];
            while rem > 1e-12 {
                let amt = if cur + 1 < t { rem.min(room) } else { rem };
                edges.push(StEdge {
                    job: j,
                    copy: first + cur,
                    frac: amt,
                    cost: c[i * n + j],
                    ptime: p[i * n + j],
                    reward: rewards[j],
                });
                rem -= amt;
                room -= amt;
                if room <= 1e-12 && cur + 1 < t {
                    cur += 1;
                    room = 1.0;
                }
            }
        }
    }
    StGraph {
        num_machines: m,
        copies,
        edges,
    }
}

/// An integral assignment of jobs to machine copies.
#[derive(Debug, Clone)]
pub struct MatchingSolution {
    /// Indices into `StGraph::edges`, sorted ascending.
    pub matched: Vec<usize>,
    pub total_cost: f64,
    pub total_reward: f64,
    /// The single copy allowed to carry two jobs (budgeted case only).
    pub two_job_copy: Option<usize>,
    /// Fractional optimum the rounding started from.
    pub lp_cost: f64,
    /// Number of objective perturbations needed to reach a basic optimum.
    pub basis_repairs: usize,
}

impl MatchingSolution {
    /// Jobs per machine under this matching.
    pub fn machine_jobs(&self, g: &StGraph) -> BTreeMap<usize, Vec<usize>> {
        let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &e in &self.matched {
            let edge = &g.edges[e];
            out.entry(g.copies[edge.copy].machine)
                .or_default()
                .push(edge.job);
        }
        out
    }

    /// Total processing time per machine.
    pub fn machine_loads(&self, g: &StGraph) -> Vec<f64> {
        let mut loads = vec![0.0; g.num_machines];
        for &e in &self.matched {
            loads[g.copies[g.edges[e].copy].machine] += g.edges[e].ptime;
        }
        loads
    }

    fn from_edges(g: &StGraph, mut matched: Vec<usize>, lp_cost: f64) -> Self {
        matched.sort_unstable();
        let total_cost = matched.iter().map(|&e| g.edges[e].cost).sum();
        let total_reward = matched.iter().map(|&e| g.edges[e].reward).sum();
        let mut copy_use: BTreeMap<usize, usize> = BTreeMap::new();
        for &e in &matched {
            *copy_use.entry(g.edges[e].copy).or_insert(0) += 1;
        }
        let two_job_copy = copy_use.iter().find(|&(_, &n)| n > 1).map(|(&c, _)| c);
        MatchingSolution {
            matched,
            total_cost,
            total_reward,
            two_job_copy,
            lp_cost,
            basis_repairs: 0,
        }
    }
}

/// Min-cost matching that covers every job appearing in the graph.
///
/// Succeeds whenever the fractional assignment gives each job total
/// fraction 1 (the matching polytope is integral); a failure indicates a
/// malformed graph.
pub fn round_gap(g: &StGraph) -> Result<MatchingSolution, RoundError> {
    let jobs: Vec<usize> = g
        .edges
        .iter()
        .map(|e| e.job)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let job_pos: BTreeMap<usize, usize> = jobs.iter().enumerate().map(|(k, &j)| (j, k)).collect();
    let nj = jobs.len();
    let nc = g.copies.len();
    // Nodes: 0 = source, 1..=nj jobs, nj+1..=nj+nc copies, nj+nc+1 = sink.
    let mut flow = Mcmf::new(nj + nc + 2);
    let sink = nj + nc + 1;
    for k in 0..nj {
        flow.add_edge(0, 1 + k, 1, 0.0);
    }
    for cp in 0..nc {
        flow.add_edge(1 + nj + cp, sink, 1, 0.0);
    }
    let mut arc_of_edge = Vec::with_capacity(g.edges.len());
    for e in &g.edges {
        arc_of_edge.push(flow.add_edge(1 + job_pos[&e.job], 1 + nj + e.copy, 1, e.cost));
    }
    let pushed = flow.run(0, sink);
    if pushed < nj {
        return Err(RoundError::InfeasibleMatching);
    }
    let matched: Vec<usize> = (0..g.edges.len())
        .filter(|&e| flow.flow_on(arc_of_edge[e]) > 0)
        .collect();
    Ok(MatchingSolution::from_edges(
        g,
        matched,
        g.fractional_cost(),
    ))
}

/// Rounds under a reward floor: solves the matching LP with the extra row
/// `sum r_j z_ij >= target`, decomposes a basic optimum into two adjacent
/// matchings, and applies the path/cycle case analysis. The output has
/// reward at least `target` and cost at most the LP optimum plus one edge
/// cost; at most one copy receives two jobs.
pub fn round_budgeted(g: &StGraph, target: f64) -> Result<MatchingSolution, RoundError> {
    if g.edges.is_empty() {
        return if target <= 1e-12 {
            Ok(MatchingSolution::from_edges(g, Vec::new(), 0.0))
        } else {
            Err(RoundError::RewardInfeasible)
        };
    }
    let max_reward = g
        .edges
        .iter()
        .map(|e| e.reward)
        .fold(0.0f64, f64::max)
        .max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let jitter: Vec<f64> = (0..g.edges.len()).map(|_| rng.gen::<f64>()).collect();
    let cost_scale = g
        .edges
        .iter()
        .map(|e| e.cost.abs())
        .fold(0.0f64, f64::max)
        .max(1.0);

    let mut last_err = None;
    for attempt in 0..4 {
        // A non-vertex optimum (possible under degeneracy) breaks the
        // path/cycle structure; retry with a tiny deterministic objective
        // perturbation that separates the optimal face's vertices.
        let lambda = if attempt == 0 {
            0.0
        } else {
            1e-9 * cost_scale * 10f64.powi(attempt - 1)
        };
        let mut model = LpModel::new();
        for e in &g.edges {
            model.add_var(
                e.cost + lambda * jitter[model.num_vars()],
                (0.0, f64::INFINITY),
            );
        }
        let mut by_job: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
        let mut by_copy: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
        for (idx, e) in g.edges.iter().enumerate() {
            by_job.entry(e.job).or_default().push((idx, 1.0));
            by_copy.entry(e.copy).or_default().push((idx, 1.0));
        }
        for (j, coeffs) in &by_job {
            model.add_row(format!("job[{j}]"), coeffs, Sense::Le, 1.0);
        }
        for (c, coeffs) in &by_copy {
            model.add_row(format!("copy[{c}]"), coeffs, Sense::Le, 1.0);
        }
        let reward_row: Vec<(usize, f64)> = g
            .edges
            .iter()
            .enumerate()
            .map(|(idx, e)| (idx, e.reward / max_reward))
            .collect();
        model.add_row("reward", &reward_row, Sense::Ge, target / max_reward);

        let sol = model.solve()?;
        match sol.status {
            LpStatus::Optimal => {}
            _ => return Err(RoundError::RewardInfeasible),
        }
        let lp_cost: f64 = g
            .edges
            .iter()
            .enumerate()
            .map(|(idx, e)| e.cost * sol.values[idx])
            .sum();
        match decompose_and_pick(g, &sol.values, target, lp_cost) {
            Ok(mut m) => {
                m.basis_repairs = attempt as usize;
                return Ok(m);
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| RoundError::Structure("no basic optimum found".into())))
}

/// Splits a basic LP point into integral edges plus one alternating
/// path/cycle of fractional edges, then picks the output matching per the
/// adjacency case analysis.
fn decompose_and_pick(
    g: &StGraph,
    z: &[f64],
    target: f64,
    lp_cost: f64,
) -> Result<MatchingSolution, RoundError> {
    const TOL: f64 = 1e-7;
    let integral: Vec<usize> = (0..g.edges.len()).filter(|&e| z[e] >= 1.0 - TOL).collect();
    let frac: Vec<usize> = (0..g.edges.len())
        .filter(|&e| z[e] > TOL && z[e] < 1.0 - TOL)
        .collect();

    if frac.is_empty() {
        return Ok(MatchingSolution::from_edges(g, integral, lp_cost));
    }

    // Node keys: job j -> 2j, copy c -> 2c+1.
    let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &e in &frac {
        adj.entry(2 * g.edges[e].job).or_default().push(e);
        adj.entry(2 * g.edges[e].copy + 1).or_default().push(e);
    }
    if adj.values().any(|v| v.len() > 2) {
        return Err(RoundError::Structure(
            "node with 3+ fractional edges".into(),
        ));
    }
    let endpoints: Vec<usize> = adj
        .iter()
        .filter(|(_, v)| v.len() == 1)
        .map(|(&n, _)| n)
        .collect();
    let is_cycle = endpoints.is_empty();
    if !is_cycle && endpoints.len() != 2 {
        return Err(RoundError::Structure(format!(
            "{} path endpoints",
            endpoints.len()
        )));
    }

    // Walk the component, 2-coloring edges alternately.
    let start = if is_cycle {
        *adj.keys().next().unwrap()
    } else {
        *endpoints.iter().min().unwrap()
    };
    let mut used: BTreeSet<usize> = BTreeSet::new();
    let mut group_a = Vec::new();
    let mut group_b = Vec::new();
    let mut node = start;
    loop {
        let Some(&e) = adj[&node].iter().find(|&&e| !used.contains(&e)) else {
            break;
        };
        used.insert(e);
        if used.len() % 2 == 1 {
            group_a.push(e);
        } else {
            group_b.push(e);
        }
        let (jn, cn) = (2 * g.edges[e].job, 2 * g.edges[e].copy + 1);
        node = if node == jn { cn } else { jn };
    }
    if used.len() != frac.len() {
        return Err(RoundError::Structure(
            "fractional edges form more than one component".into(),
        ));
    }
    // Alternating structure forces shared values within each color class.
    let lam = z[group_a[0]];
    for &e in &group_a {
        if (z[e] - lam).abs() > 1e-5 {
            return Err(RoundError::Structure(
                "inconsistent fractional values".into(),
            ));
        }
    }
    for &e in &group_b {
        if (z[e] - (1.0 - lam)).abs() > 1e-5 {
            return Err(RoundError::Structure(
                "inconsistent fractional values".into(),
            ));
        }
    }

    let with_integral = |extra: &[usize]| -> Vec<usize> {
        let mut v = integral.clone();
        v.extend_from_slice(extra);
        v.sort_unstable();
        v
    };
    let reward_of = |edges: &[usize]| -> f64 { edges.iter().map(|&e| g.edges[e].reward).sum() };
    let cost_of = |edges: &[usize]| -> f64 { edges.iter().map(|&e| g.edges[e].cost).sum() };

    let ma = with_integral(&group_a);
    let mb = with_integral(&group_b);
    let (ra, rb) = (reward_of(&ma), reward_of(&mb));
    let (ca, cb) = (cost_of(&ma), cost_of(&mb));
    // Label so that m1 has the larger reward; break reward ties toward the
    // cheaper matching and cost ties lexicographically.
    let a_first = if (ra - rb).abs() > 1e-12 {
        ra > rb
    } else if (ca - cb).abs() > 1e-12 {
        ca < cb
    } else {
        ma <= mb
    };
    let (m1, m2, c1, c2) = if a_first {
        (ma, mb, ca, cb)
    } else {
        (mb, ma, cb, ca)
    };

    let chosen = if c1 <= c2 + 1e-12 {
        m1
    } else if is_cycle {
        m2
    } else {
        let jobs1: BTreeSet<usize> = m1.iter().map(|&e| g.edges[e].job).collect();
        let jobs2: BTreeSet<usize> = m2.iter().map(|&e| g.edges[e].job).collect();
        let extra: Vec<usize> = jobs1.difference(&jobs2).copied().collect();
        match extra.as_slice() {
            [] => m2,
            [jstar] => {
                let edge = *m1
                    .iter()
                    .find(|&&e| g.edges[e].job == *jstar)
                    .expect("extra job has an m1 edge");
                let mut out = m2;
                out.push(edge);
                out
            }
            _ => {
                return Err(RoundError::Structure(
                    "path decomposition differs by more than one job".into(),
                ))
            }
        }
    };
    let sol = MatchingSolution::from_edges(g, chosen, lp_cost);
    if sol.total_reward < target - 1e-6 * target.abs().max(1.0) {
        return Err(RoundError::Structure(format!(
            "picked matching misses the reward target: {} < {target}",
            sol.total_reward
        )));
    }
    Ok(sol)
}

// ---------------------------------------------------------------------------
// Successive-shortest-path min-cost flow with unit capacities.

struct Mcmf {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<i32>,
    cost: Vec<f64>,
}

impl Mcmf {
    fn new(n: usize) -> Self {
        Mcmf {
            adj: vec![Vec::new(); n],
            to: Vec::new(),
            cap: Vec::new(),
            cost: Vec::new(),
        }
    }

    /// Returns the arc id of the forward edge.
    fn add_edge(&mut self, u: usize, v: usize, cap: i32, cost: f64) -> usize {
        let id = self.to.len();
        self.adj[u].push(id);
        self.to.push(v);
        self.cap.push(cap);
        self.cost.push(cost);
        self.adj[v].push(id + 1);
        self.to.push(u);
        self.cap.push(0);
        self.cost.push(-cost);
        id
    }

    fn flow_on(&self, arc: usize) -> i32 {
        self.cap[arc ^ 1]
    }

    /// Augments unit flows along successive shortest paths; returns the
    /// total units pushed.
    fn run(&mut self, s: usize, t: usize) -> usize {
        let n = self.adj.len();
        let mut pushed = 0;
        loop {
            // Bellman-Ford; deterministic given arc insertion order.
            let mut dist = vec![f64::INFINITY; n];
            let mut prev_arc = vec![usize::MAX; n];
            dist[s] = 0.0;
            for _ in 0..n {
                let mut changed = false;
                for arc in 0..self.to.len() {
                    if self.cap[arc] <= 0 {
                        continue;
                    }
                    let u = self.to[arc ^ 1];
                    let v = self.to[arc];
                    if dist[u].is_finite() && dist[u] + self.cost[arc] < dist[v] - 1e-12 {
                        dist[v] = dist[u] + self.cost[arc];
                        prev_arc[v] = arc;
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
            if !dist[t].is_finite() {
                return pushed;
            }
            let mut v = t;
            while v != s {
                let arc = prev_arc[v];
                self.cap[arc] -= 1;
                self.cap[arc ^ 1] += 1;
                v = self.to[arc ^ 1];
            }
            pushed += 1;
        }
    }
}
