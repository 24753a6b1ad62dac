//! Seeded corpus runs: generate instances and decompose each one.
//!
//! Instances are independent, so the parallel runner (feature `parallel`)
//! maps them over the rayon pool; results come back in job order and are
//! identical to the sequential runner's.

use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::decomposition::decompose_with_trace;
use crate::generate::{instance, instance_rng, InstanceSpec, MemberKind};
use crate::tuple::{Field, ToleranceConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Job {
    pub spec: InstanceSpec,
    pub index: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InstanceOutcome {
    pub job: Job,
    /// dim 𝔎 before the first step, then after each step.
    pub dims: Vec<usize>,
    pub steps: usize,
    pub total_size: usize,
    pub bound: usize,
    pub reconstruction_error: f64,
    pub partition_error: f64,
    /// Every component certified absolute extreme.
    pub certified: bool,
    pub error: Option<String>,
}

impl InstanceOutcome {
    pub fn dims_strictly_decrease(&self) -> bool {
        self.dims.windows(2).all(|w| w[1] < w[0])
    }
}

/// Stream for the solver's own randomness: the instance stream with the top
/// bit set, so it never collides with generation.
pub fn solver_rng(seed: u64, index: u64) -> ChaCha20Rng {
    instance_rng(seed, index | 1 << 63)
}

/// The standard sweep over d ∈ 1..=4, g ∈ 1..=3, n ∈ 1..=3, alternating
/// interior and boundary members.
pub fn standard_corpus(field: Field, count: u64) -> Vec<Job> {
    (0..count)
        .map(|i| {
            let spec = InstanceSpec {
                d: 1 + (i % 4) as usize,
                g: 1 + ((i / 4) % 3) as usize,
                n: 1 + ((i / 12) % 3) as usize,
                field,
                kind: if i % 2 == 0 { MemberKind::Interior } else { MemberKind::Boundary },
            };
            Job { spec, index: i }
        })
        .collect()
}

pub fn run_instance(job: &Job, seed: u64, cfg: &ToleranceConfig) -> InstanceOutcome {
    let mut out = InstanceOutcome {
        job: *job,
        dims: Vec::new(),
        steps: 0,
        total_size: 0,
        bound: 0,
        reconstruction_error: f64::NAN,
        partition_error: f64::NAN,
        certified: false,
        error: None,
    };
    let inst = match instance(&job.spec, seed, job.index) {
        Ok(i) => i,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    let mut rng = solver_rng(seed, job.index);
    match decompose_with_trace(&inst.pencil, &inst.x, cfg, &mut rng) {
        Ok((dec, trace)) => {
            out.dims = match trace.steps.first() {
                Some(s) => std::iter::once(s.dim_before).chain(trace.steps.iter().map(|s| s.dim_after)).collect(),
                None => vec![0],
            };
            out.steps = trace.steps.len();
            out.total_size = dec.total_size;
            out.bound = dec.bound;
            out.reconstruction_error = dec.reconstruction_error();
            out.partition_error = dec.partition_error();
            out.certified = dec.flags.iter().all(|f| f.absolute_extreme);
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    out
}

pub fn run_sequential(jobs: &[Job], seed: u64, cfg: &ToleranceConfig) -> Vec<InstanceOutcome> {
    jobs.iter().map(|j| run_instance(j, seed, cfg)).collect()
}

#[cfg(feature = "parallel")]
pub fn run_parallel(jobs: &[Job], seed: u64, cfg: &ToleranceConfig) -> Vec<InstanceOutcome> {
    use rayon::prelude::*;
    jobs.par_iter().map(|j| run_instance(j, seed, cfg)).collect()
}

/// Parallel when the `parallel` feature is on, sequential otherwise.
pub fn run(jobs: &[Job], seed: u64, cfg: &ToleranceConfig) -> Vec<InstanceOutcome> {
    #[cfg(feature = "parallel")]
    {
        run_parallel(jobs, seed, cfg)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_sequential(jobs, seed, cfg)
    }
}
