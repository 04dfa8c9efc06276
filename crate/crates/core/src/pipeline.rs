//! End-to-end runs: build an instance (truth, stations, volumes), run
//! methods on it and score them.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use crate::admm::AdmmConfig;
use crate::domain::{same_domain, CovariateMatrix, GridDomain, SpatialField};
use crate::error::{Error, Result};
use crate::eval::{relative_errors, run_methods, EvalReport, Method, MethodRun};
use crate::partition::{aggregate, build_partition, sample_stations, AggregateObservations, Partition, StationSet};
use crate::synth::{generate_field, SynthSpec};

/// Observations for one recovery problem, with the ground truth when known.
#[derive(Debug, Clone)]
pub struct Instance {
    pub seed: Option<u64>,
    pub truth: Option<SpatialField>,
    pub covariates: Option<CovariateMatrix>,
    pub partition: Partition,
    pub z: AggregateObservations,
}

impl Instance {
    /// Samples `m` stations from `truth` and aggregates it over their patches.
    pub fn sampled(truth: SpatialField, covariates: Option<CovariateMatrix>, m: usize, seed: u64) -> Result<Self> {
        if let Some(w) = &covariates {
            same_domain(w.domain(), truth.domain())?;
        }
        let stations = sample_stations(&truth, m, seed)?;
        let partition = build_partition(truth.domain().clone(), stations)?;
        let z = aggregate(&partition, &truth)?;
        Ok(Self {
            seed: Some(seed),
            truth: Some(truth),
            covariates,
            partition,
            z,
        })
    }

    /// Synthetic truth from `spec`, then [`Instance::sampled`] with the same seed.
    pub fn synthetic(spec: &SynthSpec, m: usize) -> Result<Self> {
        let s = generate_field(spec)?;
        Self::sampled(s.field, s.covariates, m, spec.seed)
    }

    /// Given stations and volumes; no truth.
    pub fn observed(
        domain: Arc<GridDomain>,
        stations: StationSet,
        z: AggregateObservations,
        covariates: Option<CovariateMatrix>,
    ) -> Result<Self> {
        if let Some(w) = &covariates {
            same_domain(w.domain(), &domain)?;
        }
        let partition = build_partition(domain, stations)?;
        if z.len() != partition.m() {
            return Err(Error::ShapeMismatch(format!(
                "{} volumes for {} stations",
                z.len(),
                partition.m()
            )));
        }
        Ok(Self {
            seed: None,
            truth: None,
            covariates,
            partition,
            z,
        })
    }

    pub fn run(&self, methods: &[Method], config: &AdmmConfig) -> Result<Vec<MethodRun>> {
        run_methods(methods, config, &self.partition, &self.z, self.covariates.as_ref())
    }

    /// Error reports against the truth, tagged with method and seed.
    pub fn evaluate(&self, runs: &[MethodRun], floor: f64) -> Result<Vec<EvalReport>> {
        let truth = self
            .truth
            .as_ref()
            .ok_or_else(|| Error::Config("instance has no ground truth to evaluate against".into()))?;
        runs.iter()
            .map(|r| {
                let rep = relative_errors(&r.estimate, truth, floor)?;
                Ok(match self.seed {
                    Some(s) => rep.tagged(r.method, s),
                    None => EvalReport {
                        method: Some(r.method),
                        ..rep
                    },
                })
            })
            .collect()
    }
}

/// Applies `f` to every item on up to `jobs` threads. Results keep input
/// order, so output does not depend on `jobs`.
pub fn parallel_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= items.len() {
                    break;
                }
                let r = f(&items[k]);
                slots.lock().expect("worker panicked")[k] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}
