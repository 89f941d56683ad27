//! Problem instances, assignments, generators, and JSON (de)serialization.
//!
//! An [`Instance`] has `m` machines and a list of jobs; each job carries a
//! per-machine [`DiscreteDist`] for its size on that machine. A missing
//! machine entry means the pair is forbidden, which keeps the LPs built
//! downstream restricted to allowed pairs. Jobs optionally carry rewards and
//! the instance an overall reward target for the budgeted variant, plus an
//! optional norm order `q`.
//!
//! The adversarial generators reproduce the lower-bound constructions that
//! motivate the solver design: an instance where mean- or quantile-based
//! surrogates overpack one machine, an instance separating adaptive from
//! non-adaptive scheduling, and a bipartite budgeted-assignment fixture
//! whose natural LP has unbounded integrality gap.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{DiscreteDist, DistError};

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("\"machines\" must be at least 1")]
    ZeroMachines,
    #[error("job {job:?}: machine key {key:?} is not a 0-based decimal index")]
    BadMachineKey { job: String, key: String },
    #[error("job {job:?}: machine index {index} out of range (machines = {machines})")]
    MachineOutOfRange {
        job: String,
        index: usize,
        machines: usize,
    },
    #[error("duplicate job id {0:?}")]
    DuplicateJobId(String),
    #[error("job {0:?} has no allowed machine")]
    NoAllowedMachine(String),
    #[error("job {job:?}, machine {machine}: {source}")]
    BadDist {
        job: String,
        machine: usize,
        source: DistError,
    },
    #[error("job {0:?}: reward must be finite and nonnegative")]
    BadReward(String),
    #[error("reward_target must be finite and nonnegative")]
    BadRewardTarget,
    #[error("q must be a finite number >= 1")]
    BadQ,
    #[error("assignment places unknown job {0:?}")]
    UnknownJob(String),
    #[error("assignment places job {job:?} on forbidden machine {machine}")]
    ForbiddenPlacement { job: String, machine: usize },
    #[error("generator requires {0}")]
    BadGeneratorArg(&'static str),
}

/// One job: its identifier, reward (defaults to 1), and the size
/// distribution on each allowed machine. Machines absent from `dists` may
/// not run the job.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub id: String,
    pub reward: f64,
    pub dists: BTreeMap<usize, DiscreteDist>,
}

impl Job {
    pub fn allowed(&self, machine: usize) -> bool {
        self.dists.contains_key(&machine)
    }
}

/// A scheduling instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub machines: usize,
    pub q: Option<f64>,
    pub reward_target: Option<f64>,
    pub jobs: Vec<Job>,
}

impl Instance {
    pub fn num_jobs(&self) -> usize {
        self.jobs.len()
    }

    pub fn total_reward(&self) -> f64 {
        self.jobs.iter().map(|j| j.reward).sum()
    }

    /// Index of the job with the given id, if any.
    pub fn job_index(&self, id: &str) -> Option<usize> {
        self.jobs.iter().position(|j| j.id == id)
    }

    /// Checks all structural invariants; called by readers and generators.
    pub fn validate(&self) -> Result<(), InstanceError> {
        if self.machines == 0 {
            return Err(InstanceError::ZeroMachines);
        }
        if let Some(q) = self.q {
            if !q.is_finite() || q < 1.0 {
                return Err(InstanceError::BadQ);
            }
        }
        if let Some(r) = self.reward_target {
            if !r.is_finite() || r < 0.0 {
                return Err(InstanceError::BadRewardTarget);
            }
        }
        let mut seen = BTreeSet::new();
        for job in &self.jobs {
            if !seen.insert(job.id.clone()) {
                return Err(InstanceError::DuplicateJobId(job.id.clone()));
            }
            if !job.reward.is_finite() || job.reward < 0.0 {
                return Err(InstanceError::BadReward(job.id.clone()));
            }
            if job.dists.is_empty() {
                return Err(InstanceError::NoAllowedMachine(job.id.clone()));
            }
            for &i in job.dists.keys() {
                if i >= self.machines {
                    return Err(InstanceError::MachineOutOfRange {
                        job: job.id.clone(),
                        index: i,
                        machines: self.machines,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self, InstanceError> {
        let doc: InstanceDoc = serde_json::from_str(s)?;
        let inst = doc.into_instance()?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_json_string(&self) -> String {
        let doc = InstanceDoc::from_instance(self);
        serde_json::to_string_pretty(&doc).expect("instance serializes")
    }
}

/// A (possibly partial) placement of jobs onto machines.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    pub placement: BTreeMap<String, usize>,
}

impl Assignment {
    /// Verifies every placed pair is an allowed pair of `inst`.
    pub fn validate_against(&self, inst: &Instance) -> Result<(), InstanceError> {
        for (id, &machine) in &self.placement {
            let Some(job) = inst.jobs.iter().find(|j| &j.id == id) else {
                return Err(InstanceError::UnknownJob(id.clone()));
            };
            if !job.allowed(machine) {
                return Err(InstanceError::ForbiddenPlacement {
                    job: id.clone(),
                    machine,
                });
            }
        }
        Ok(())
    }

    /// True when every job of `inst` is placed.
    pub fn is_complete(&self, inst: &Instance) -> bool {
        inst.jobs.iter().all(|j| self.placement.contains_key(&j.id))
    }

    pub fn from_json_str(s: &str) -> Result<Self, InstanceError> {
        let doc: AssignmentDoc = serde_json::from_str(s)?;
        Ok(Assignment {
            placement: doc.placement,
        })
    }

    pub fn to_json_string(&self) -> String {
        let doc = AssignmentDoc {
            placement: self.placement.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("assignment serializes")
    }
}

// ---------------------------------------------------------------------------
// JSON documents. Kept separate from the domain types so that machine keys
// can be decimal strings and dists plain atom arrays, with unknown fields
// rejected at the boundary.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    machines: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reward_target: Option<f64>,
    jobs: Vec<JobDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JobDoc {
    id: String,
    #[serde(default = "default_reward")]
    reward: f64,
    dists: BTreeMap<String, Vec<(f64, f64)>>,
}

fn default_reward() -> f64 {
    1.0
}

impl InstanceDoc {
    fn from_instance(inst: &Instance) -> Self {
        InstanceDoc {
            machines: inst.machines,
            q: inst.q,
            reward_target: inst.reward_target,
            jobs: inst
                .jobs
                .iter()
                .map(|job| JobDoc {
                    id: job.id.clone(),
                    reward: job.reward,
                    dists: job
                        .dists
                        .iter()
                        .map(|(&i, d)| (i.to_string(), d.atoms().to_vec()))
                        .collect(),
                })
                .collect(),
        }
    }

    fn into_instance(self) -> Result<Instance, InstanceError> {
        let mut jobs = Vec::with_capacity(self.jobs.len());
        for jd in self.jobs {
            let mut dists = BTreeMap::new();
            for (key, atoms) in jd.dists {
                let index: usize = key.parse().map_err(|_| InstanceError::BadMachineKey {
                    job: jd.id.clone(),
                    key: key.clone(),
                })?;
                let dist = DiscreteDist::new(atoms).map_err(|source| InstanceError::BadDist {
                    job: jd.id.clone(),
                    machine: index,
                    source,
                })?;
                dists.insert(index, dist);
            }
            jobs.push(Job {
                id: jd.id,
                reward: jd.reward,
                dists,
            });
        }
        Ok(Instance {
            machines: self.machines,
            q: self.q,
            reward_target: self.reward_target,
            jobs,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssignmentDoc {
    placement: BTreeMap<String, usize>,
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<Instance, InstanceError> {
    Instance::from_json_str(&std::fs::read_to_string(path)?)
}

pub fn write_instance(path: impl AsRef<Path>, inst: &Instance) -> Result<(), InstanceError> {
    Ok(std::fs::write(path, inst.to_json_string() + "\n")?)
}

pub fn read_assignment(path: impl AsRef<Path>) -> Result<Assignment, InstanceError> {
    Assignment::from_json_str(&std::fs::read_to_string(path)?)
}

pub fn write_assignment(path: impl AsRef<Path>, asg: &Assignment) -> Result<(), InstanceError> {
    Ok(std::fs::write(path, asg.to_json_string() + "\n")?)
}

// ---------------------------------------------------------------------------
// Generators.

/// Instance on which size surrogates that ignore machine count overpack one
/// machine: `m + sqrt(m)` Bernoulli(1/sqrt(m), 1) jobs, the first sqrt(m) of
/// which may only run on machine 0. Any schedule that treats all jobs as
/// interchangeable piles ~sqrt(m) extra jobs onto machine 0 and pays an
/// expected makespan of order sqrt(m)/log m times optimum.
pub fn gen_surrogate_gap(m: usize) -> Result<Instance, InstanceError> {
    let s = (m as f64).sqrt().round() as usize;
    if m < 4 || s * s != m {
        return Err(InstanceError::BadGeneratorArg("a perfect square m >= 4"));
    }
    let dist = DiscreteDist::bernoulli(1.0 / s as f64, 1.0);
    let mut jobs = Vec::with_capacity(m + s);
    for idx in 0..m + s {
        let allowed: Vec<usize> = if idx < s { vec![0] } else { (0..m).collect() };
        jobs.push(Job {
            id: format!("j{idx}"),
            reward: 1.0,
            dists: allowed.into_iter().map(|i| (i, dist.clone())).collect(),
        });
    }
    let inst = Instance {
        machines: m,
        q: None,
        reward_target: None,
        jobs,
    };
    inst.validate()?;
    Ok(inst)
}

/// Instance separating adaptive from non-adaptive assignment: `m^2`
/// identically distributed Bernoulli(1/m, 1) jobs on `m` identical machines.
pub fn gen_adaptivity_gap(m: usize) -> Result<Instance, InstanceError> {
    if m < 2 {
        return Err(InstanceError::BadGeneratorArg("m >= 2"));
    }
    let dist = DiscreteDist::bernoulli(1.0 / m as f64, 1.0);
    let jobs = (0..m * m)
        .map(|idx| Job {
            id: format!("j{idx}"),
            reward: 1.0,
            dists: (0..m).map(|i| (i, dist.clone())).collect(),
        })
        .collect();
    let inst = Instance {
        machines: m,
        q: None,
        reward_target: None,
        jobs,
    };
    inst.validate()?;
    Ok(inst)
}

/// Deterministic bipartite budgeted-assignment fixture whose natural LP has
/// unbounded integrality gap. Machine `i` can run job `i` at cost 1 or job
/// `i+1` at cost `n`, so the edge set is the disjoint union of two
/// machine-perfect matchings of total costs `m` and `m*n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetedGapFixture {
    pub num_machines: usize,
    pub num_jobs: usize,
    /// `(machine, job, cost)` triples.
    pub edges: Vec<(usize, usize, f64)>,
    pub rewards: Vec<f64>,
    pub reward_target: f64,
    /// Cost of the unique minimal integral solution meeting the target.
    pub integral_opt_cost: f64,
}

pub const BUDGETED_GAP_EPSILON: f64 = 1e-6;

pub fn gen_budgeted_gap(n: usize) -> Result<BudgetedGapFixture, InstanceError> {
    if n < 3 {
        return Err(InstanceError::BadGeneratorArg("n >= 3"));
    }
    let m = n - 1;
    let mut edges = Vec::with_capacity(2 * m);
    for i in 0..m {
        edges.push((i, i, 1.0));
        edges.push((i, i + 1, n as f64));
    }
    let rewards: Vec<f64> = (0..n)
        .map(|j| {
            if j == 0 {
                1.0
            } else if j == n - 1 {
                2.0
            } else {
                4.0
            }
        })
        .collect();
    Ok(BudgetedGapFixture {
        num_machines: m,
        num_jobs: n,
        edges,
        rewards,
        reward_target: 4.0 * (n as f64 - 2.0) + 1.0 + BUDGETED_GAP_EPSILON,
        integral_opt_cost: (m * n) as f64,
    })
}

/// Shape of the per-pair distributions produced by [`gen_random`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomFamily {
    /// Two atoms {0, size}.
    Bernoulli,
    /// Two arbitrary nonnegative atoms.
    TwoPoint,
    /// 2–5 equally likely atoms on a uniform grid.
    UniformGrid,
}

impl std::str::FromStr for RandomFamily {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bernoulli" => Ok(RandomFamily::Bernoulli),
            "two-point" => Ok(RandomFamily::TwoPoint),
            "uniform-grid" => Ok(RandomFamily::UniformGrid),
            other => Err(format!(
                "unknown family {other:?} (expected bernoulli, two-point, or uniform-grid)"
            )),
        }
    }
}

/// Reproducible pseudo-random instance: same arguments, same instance.
///
/// Roughly 80% of (machine, job) pairs are allowed; machine `j mod m` is
/// always allowed so every job can run somewhere.
pub fn gen_random(m: usize, n: usize, seed: u64, family: RandomFamily) -> Instance {
    assert!(m >= 1 && n >= 1, "need at least one machine and one job");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(match family {
        RandomFamily::Bernoulli => 1,
        RandomFamily::TwoPoint => 2,
        RandomFamily::UniformGrid => 3,
    });
    let jobs = (0..n)
        .map(|j| {
            let mut dists = BTreeMap::new();
            for i in 0..m {
                if i != j % m && rng.gen::<f64>() >= 0.8 {
                    continue;
                }
                dists.insert(i, random_dist(&mut rng, family));
            }
            Job {
                id: format!("j{j}"),
                reward: 1.0,
                dists,
            }
        })
        .collect();
    let inst = Instance {
        machines: m,
        q: None,
        reward_target: None,
        jobs,
    };
    inst.validate().expect("generated instance is valid");
    inst
}

fn random_dist(rng: &mut ChaCha8Rng, family: RandomFamily) -> DiscreteDist {
    match family {
        RandomFamily::Bernoulli => {
            let p = rng.gen_range(0.05..0.95);
            let size = rng.gen_range(0.1..2.0);
            DiscreteDist::bernoulli(p, size)
        }
        RandomFamily::TwoPoint => {
            let p = rng.gen_range(0.05..0.95);
            let lo = rng.gen_range(0.0..1.0);
            let hi = lo + rng.gen_range(0.1..2.0);
            DiscreteDist::new(vec![(lo, p), (hi, 1.0 - p)]).unwrap()
        }
        RandomFamily::UniformGrid => {
            let k = rng.gen_range(2..=5usize);
            let step = rng.gen_range(0.1..0.6);
            let prob = 1.0 / k as f64;
            DiscreteDist::new((0..k).map(|t| (t as f64 * step, prob)).collect()).unwrap()
        }
    }
}
