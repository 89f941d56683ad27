//! Ground-truth evaluation of assignments.
//!
//! Exact expected makespan and q-norm are computed by per-machine
//! convolution: machine loads are independent across machines (each job
//! contributes to exactly one machine), so `Pr[max <= t]` factors into a
//! product of per-machine CDFs, and the q-norm's inner sum is a
//! cross-machine convolution of the powered loads. Exact evaluation cannot
//! scale in general, so a support cap bounds it and [`SupportOverflow`]
//! signals the Monte Carlo fallback.
//!
//! The Monte Carlo estimator derives an independent RNG stream per sample
//! index from the seed, and accumulates in fixed 1024-sample blocks merged
//! in index order, so results are byte-identical for any thread count.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::dist::{DiscreteDist, SupportOverflow, DEFAULT_SUPPORT_CAP};
use crate::instance::{Assignment, Instance};

/// Samples per accumulation block; fixed so that the merge order (and thus
/// the floating-point result) does not depend on the thread count.
const MC_BLOCK: u64 = 1024;

/// Cap on brute-force enumeration size.
pub const BRUTE_FORCE_CAP: u128 = 1_000_000;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Overflow(#[from] SupportOverflow),
    #[error("brute force over {0} assignments exceeds cap {BRUTE_FORCE_CAP}")]
    SizeCap(u128),
    #[error("unknown job id {0:?} in assignment")]
    UnknownJob(String),
}

/// What to measure about the final machine loads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalObjective {
    /// Expected maximum machine load.
    Makespan,
    /// Expected `(sum_i load_i^q)^(1/q)`.
    QNorm(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMethod {
    Exact,
    MonteCarlo,
    BruteForce,
}

/// Outcome of an evaluation, with a 95% interval for Monte Carlo runs.
#[derive(Debug, Clone, Serialize)]
pub struct EvalResult {
    pub method: EvalMethod,
    pub value: f64,
    pub ci_half_width: f64,
    pub samples: u64,
    pub seed: u64,
}

impl EvalResult {
    fn exact(value: f64) -> Self {
        EvalResult {
            method: EvalMethod::Exact,
            value,
            ci_half_width: 0.0,
            samples: 0,
            seed: 0,
        }
    }
}

/// Convolves each machine's assigned jobs into a load distribution.
/// Unassigned jobs contribute nothing; machines without jobs get a point
/// mass at zero.
pub fn machine_load_dists(inst: &Instance, a: &Assignment) -> Result<Vec<DiscreteDist>, EvalError> {
    let mut loads: Vec<DiscreteDist> = (0..inst.machines)
        .map(|_| DiscreteDist::point_mass(0.0))
        .collect();
    for (id, &machine) in &a.placement {
        let j = inst
            .job_index(id)
            .ok_or_else(|| EvalError::UnknownJob(id.clone()))?;
        let dist = &inst.jobs[j].dists[&machine];
        loads[machine] = loads[machine].convolve_with_cap(dist, DEFAULT_SUPPORT_CAP)?;
    }
    Ok(loads)
}

/// `E[max_i L_i]` over the merged support, using the product-CDF identity
/// for independent loads.
fn expected_max(loads: &[DiscreteDist]) -> f64 {
    let mut grid: Vec<f64> = loads
        .iter()
        .flat_map(|d| d.atoms().iter().map(|&(v, _)| v))
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut ptr = vec![0usize; loads.len()];
    let mut cum = vec![0.0f64; loads.len()];
    let mut prev_cdf = 0.0;
    let mut ev = 0.0;
    for &t in &grid {
        let mut prod = 1.0;
        for (i, d) in loads.iter().enumerate() {
            let atoms = d.atoms();
            while ptr[i] < atoms.len() && atoms[ptr[i]].0 <= t {
                cum[i] += atoms[ptr[i]].1;
                ptr[i] += 1;
            }
            prod *= cum[i];
        }
        ev += t * (prod - prev_cdf);
        prev_cdf = prod;
    }
    ev
}

pub fn exact_expected_makespan(inst: &Instance, a: &Assignment) -> Result<EvalResult, EvalError> {
    let loads = machine_load_dists(inst, a)?;
    Ok(EvalResult::exact(expected_max(&loads)))
}

pub fn exact_expected_qnorm(
    inst: &Instance,
    a: &Assignment,
    q: f64,
) -> Result<EvalResult, EvalError> {
    let loads = machine_load_dists(inst, a)?;
    let mut total = DiscreteDist::point_mass(0.0);
    for d in &loads {
        let powered = d.map_values_monotone(|v| v.powf(q));
        total = total.convolve_with_cap(&powered, DEFAULT_SUPPORT_CAP)?;
    }
    let value = total
        .atoms()
        .iter()
        .map(|&(s, pr)| s.powf(1.0 / q) * pr)
        .sum();
    Ok(EvalResult::exact(value))
}

fn exact_eval(
    inst: &Instance,
    a: &Assignment,
    obj: EvalObjective,
) -> Result<EvalResult, EvalError> {
    match obj {
        EvalObjective::Makespan => exact_expected_makespan(inst, a),
        EvalObjective::QNorm(q) => exact_expected_qnorm(inst, a, q),
    }
}

/// Monte Carlo estimate of the objective. Sample `s` draws every job's size
/// from an RNG stream keyed by `(seed, s)`, so the estimate is reproducible
/// for a fixed seed under any `threads` value.
pub fn mc_estimate(
    inst: &Instance,
    a: &Assignment,
    obj: EvalObjective,
    samples: u64,
    seed: u64,
    threads: usize,
) -> Result<EvalResult, EvalError> {
    // Placement in BTreeMap order fixes the per-sample draw sequence.
    let mut picks: Vec<(usize, &DiscreteDist)> = Vec::with_capacity(a.placement.len());
    for (id, &machine) in &a.placement {
        let j = inst
            .job_index(id)
            .ok_or_else(|| EvalError::UnknownJob(id.clone()))?;
        picks.push((machine, &inst.jobs[j].dists[&machine]));
    }
    let m = inst.machines;
    let blocks = samples.div_ceil(MC_BLOCK);
    let workers = threads.max(1).min(blocks.max(1) as usize);

    let run_block = |b: u64| -> (f64, f64) {
        let lo = b * MC_BLOCK;
        let hi = (lo + MC_BLOCK).min(samples);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let mut loads = vec![0.0f64; m];
        for s in lo..hi {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s);
            loads.iter_mut().for_each(|l| *l = 0.0);
            for &(machine, dist) in &picks {
                loads[machine] += dist.quantile(rng.gen::<f64>());
            }
            let v = match obj {
                EvalObjective::Makespan => loads.iter().copied().fold(0.0, f64::max),
                EvalObjective::QNorm(q) => {
                    loads.iter().map(|l| l.powf(q)).sum::<f64>().powf(1.0 / q)
                }
            };
            sum += v;
            sumsq += v * v;
        }
        (sum, sumsq)
    };

    let mut block_acc = vec![(0.0f64, 0.0f64); blocks as usize];
    if workers <= 1 {
        for (b, slot) in block_acc.iter_mut().enumerate() {
            *slot = run_block(b as u64);
        }
    } else {
        let chunks: Vec<(f64, f64, u64)> = std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for w in 0..workers {
                let run_block = &run_block;
                handles.push(scope.spawn(move || {
                    let mut out = Vec::new();
                    let mut b = w as u64;
                    while b < blocks {
                        let (s, ss) = run_block(b);
                        out.push((s, ss, b));
                        b += workers as u64;
                    }
                    out
                }));
            }
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("mc worker panicked"))
                .collect()
        });
        for (s, ss, b) in chunks {
            block_acc[b as usize] = (s, ss);
        }
    }
    // Merge in block order: byte-identical regardless of thread count.
    let mut total = 0.0;
    let mut total_sq = 0.0;
    for (s, ss) in &block_acc {
        total += s;
        total_sq += ss;
    }
    let n = samples as f64;
    let mean = total / n;
    let var = ((total_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(EvalResult {
        method: EvalMethod::MonteCarlo,
        value: mean,
        ci_half_width: 1.96 * (var / n).sqrt(),
        samples,
        seed,
    })
}

/// Exact evaluation when the supports stay under the cap, Monte Carlo
/// otherwise.
pub fn evaluate(
    inst: &Instance,
    a: &Assignment,
    obj: EvalObjective,
    samples: u64,
    seed: u64,
    threads: usize,
) -> Result<EvalResult, EvalError> {
    match exact_eval(inst, a, obj) {
        Ok(r) => Ok(r),
        Err(EvalError::Overflow(_)) => mc_estimate(inst, a, obj, samples, seed, threads),
        Err(e) => Err(e),
    }
}

/// Exhaustive minimum of the exact objective over all assignments. With a
/// reward target, jobs may also be left unassigned and only reward-feasible
/// assignments compete. Ties break toward the lexicographically earliest
/// placement (jobs in instance order, machines ascending, "unassigned"
/// last).
pub fn brute_force_optimum(
    inst: &Instance,
    obj: EvalObjective,
    reward_target: Option<f64>,
) -> Result<(Assignment, EvalResult), EvalError> {
    let skip_allowed = reward_target.is_some();
    let mut count: u128 = 1;
    for job in &inst.jobs {
        count = count.saturating_mul((job.dists.len() + usize::from(skip_allowed)) as u128);
        if count > BRUTE_FORCE_CAP {
            return Err(EvalError::SizeCap(count));
        }
    }
    let total_reward: f64 = inst.jobs.iter().map(|j| j.reward).sum();
    let mut best: Option<(f64, Vec<Option<usize>>)> = None;
    let mut choice: Vec<Option<usize>> = vec![None; inst.num_jobs()];
    let loads: Vec<DiscreteDist> = (0..inst.machines)
        .map(|_| DiscreteDist::point_mass(0.0))
        .collect();

    fn rec(
        inst: &Instance,
        obj: EvalObjective,
        reward_target: Option<f64>,
        k: usize,
        reward_left: f64,
        reward_have: f64,
        loads: &[DiscreteDist],
        choice: &mut Vec<Option<usize>>,
        best: &mut Option<(f64, Vec<Option<usize>>)>,
    ) -> Result<(), EvalError> {
        if k == inst.num_jobs() {
            if let Some(target) = reward_target {
                if reward_have < target - 1e-12 {
                    return Ok(());
                }
            }
            let value = match obj {
                EvalObjective::Makespan => expected_max(loads),
                EvalObjective::QNorm(q) => {
                    let mut total = DiscreteDist::point_mass(0.0);
                    for d in loads {
                        let powered = d.map_values_monotone(|v| v.powf(q));
                        total = total.convolve_with_cap(&powered, DEFAULT_SUPPORT_CAP)?;
                    }
                    total
                        .atoms()
                        .iter()
                        .map(|&(s, pr)| s.powf(1.0 / q) * pr)
                        .sum()
                }
            };
            if best.as_ref().map_or(true, |(bv, _)| value < *bv) {
                *best = Some((value, choice.clone()));
            }
            return Ok(());
        }
        let job = &inst.jobs[k];
        for (&machine, dist) in &job.dists {
            let mut next = loads.to_vec();
            next[machine] = next[machine].convolve_with_cap(dist, DEFAULT_SUPPORT_CAP)?;
            choice[k] = Some(machine);
            rec(
                inst,
                obj,
                reward_target,
                k + 1,
                reward_left - job.reward,
                reward_have + job.reward,
                &next,
                choice,
                best,
            )?;
        }
        if let Some(target) = reward_target {
            // Prune: skipping is pointless if the remaining reward cannot
            // reach the target.
            if reward_have + reward_left - job.reward >= target - 1e-12 {
                choice[k] = None;
                rec(
                    inst,
                    obj,
                    reward_target,
                    k + 1,
                    reward_left - job.reward,
                    reward_have,
                    loads,
                    choice,
                    best,
                )?;
            }
        }
        choice[k] = None;
        Ok(())
    }

    rec(
        inst,
        obj,
        reward_target,
        0,
        total_reward,
        0.0,
        &loads,
        &mut choice,
        &mut best,
    )?;
    let (value, picks) = best.ok_or(EvalError::SizeCap(count))?;
    let placement: BTreeMap<String, usize> = inst
        .jobs
        .iter()
        .zip(&picks)
        .filter_map(|(job, pick)| pick.map(|machine| (job.id.clone(), machine)))
        .collect();
    Ok((
        Assignment { placement },
        EvalResult {
            method: EvalMethod::BruteForce,
            value,
            ci_half_width: 0.0,
            samples: 0,
            seed: 0,
        },
    ))
}

/// Quick OPT lower bound from exceptional mass: nonnegative variables that
/// are each zero or larger than `l` satisfy `E[max] >= l/2` as soon as
/// their means sum to at least `l`. Every assignment incurs at least the
/// per-job minimum exceptional mean, so the bound applies to the optimum.
pub fn exceptional_lower_bound(inst: &Instance, l: f64) -> f64 {
    assert!(l > 0.0, "threshold must be positive");
    let total: f64 = inst
        .jobs
        .iter()
        .map(|job| {
            job.dists
                .values()
                .map(|d| d.truncate_split(l).1.mean())
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    if total >= l {
        l / 2.0
    } else {
        0.0
    }
}
