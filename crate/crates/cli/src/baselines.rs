//! Baseline policies for `compare`.
//!
//! Both baselines collapse each job-size distribution to a single number and
//! then schedule deterministically, so they are cheap, reproducible, and
//! easy to reason about — and both ignore information the full solver uses,
//! which is exactly the contrast `compare` tabulates.

use std::collections::BTreeMap;

use stochbal::{Assignment, Instance};

/// Single-surrogate policy: score every pair by one effective size
/// `s_ij = beta_m(X_ij)` and schedule the scores as if they were
/// deterministic processing times. A geometric search (factor 1.01) finds
/// the smallest capacity for which first-fit — jobs in input order, machines
/// in index order — places every job within the capacity.
///
/// The single number is calibrated to a machine-count tail level, but the
/// policy still treats jobs as interchangeable piles: it happily stacks many
/// small-surrogate jobs on one machine, which is precisely where it loses to
/// the solver on restricted-job instances.
pub fn surrogate_assignment(inst: &Instance) -> Assignment {
    let k = inst.machines;
    let sizes: Vec<BTreeMap<usize, f64>> = inst
        .jobs
        .iter()
        .map(|job| {
            job.dists
                .iter()
                .map(|(&i, d)| (i, d.effective_size(k)))
                .collect()
        })
        .collect();
    // Largest per-job best surrogate: no capacity below it can place every
    // job, so the search starts there.
    let start = sizes
        .iter()
        .map(|s| s.values().copied().fold(f64::INFINITY, f64::min))
        .fold(0.0f64, f64::max);
    let mut cap = if start > 0.0 { start } else { 1e-9 };
    loop {
        if let Some(placement) = first_fit(inst, &sizes, cap) {
            return Assignment { placement };
        }
        cap *= 1.01;
    }
}

fn first_fit(
    inst: &Instance,
    sizes: &[BTreeMap<usize, f64>],
    cap: f64,
) -> Option<BTreeMap<String, usize>> {
    let mut load = vec![0.0f64; inst.machines];
    let mut placement = BTreeMap::new();
    for (j, job) in inst.jobs.iter().enumerate() {
        let slot = sizes[j]
            .iter()
            .find(|&(&i, &s)| load[i] + s <= cap * (1.0 + 1e-12));
        match slot {
            Some((&i, &s)) => {
                load[i] += s;
                placement.insert(job.id.clone(), i);
            }
            None => return None,
        }
    }
    Some(placement)
}

/// Mean-based list assignment: jobs in input order go to the allowed machine
/// whose accumulated mean load would stay smallest. All decisions are fixed
/// up front from the means, so the result is a non-adaptive assignment the
/// evaluators can score exactly.
pub fn mean_list_assignment(inst: &Instance) -> Assignment {
    let mut load = vec![0.0f64; inst.machines];
    let mut placement = BTreeMap::new();
    for job in &inst.jobs {
        let (&best, mean) = job
            .dists
            .iter()
            .map(|(i, d)| (i, d.mean()))
            .min_by(|a, b| (load[*a.0] + a.1).total_cmp(&(load[*b.0] + b.1)))
            .expect("every job has an allowed machine");
        load[best] += mean;
        placement.insert(job.id.clone(), best);
    }
    Assignment { placement }
}
