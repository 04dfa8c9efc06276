//! The five recovery methods behind one interface, and relative-error metrics.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::admm::{css_recover_with, fem_for, AdmmConfig, RecoveryResult};
use crate::domain::{same_domain, CovariateMatrix, SpatialField};
use crate::error::{Error, Result};
use crate::partition::{patched_estimate, AggregateObservations, Partition};
use crate::smoother::{FemSystem, SsrSolver};

/// Default truth threshold below which cells are left out of the metrics.
pub const DEFAULT_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Patched estimate.
    #[serde(rename = "PE")]
    Pe,
    /// Smoother fitted to one averaged value per station cell.
    #[serde(rename = "PE_SSR1")]
    PeSsr1,
    /// Smoother fitted to the patched estimate at every cell.
    #[serde(rename = "PE_SSR2")]
    PeSsr2,
    /// Constrained spatial smoothing.
    #[serde(rename = "CSS")]
    Css,
    /// Constrained spatial smoothing with covariates.
    #[serde(rename = "CSS_FEATURES")]
    CssFeatures,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Pe,
        Method::PeSsr1,
        Method::PeSsr2,
        Method::Css,
        Method::CssFeatures,
    ];

    /// Report tag, e.g. `PE_SSR1`.
    pub fn tag(self) -> &'static str {
        match self {
            Method::Pe => "PE",
            Method::PeSsr1 => "PE_SSR1",
            Method::PeSsr2 => "PE_SSR2",
            Method::Css => "CSS",
            Method::CssFeatures => "CSS_FEATURES",
        }
    }

    /// Command-line spelling, e.g. `pe-ssr1`.
    pub fn cli_name(self) -> &'static str {
        match self {
            Method::Pe => "pe",
            Method::PeSsr1 => "pe-ssr1",
            Method::PeSsr2 => "pe-ssr2",
            Method::Css => "css",
            Method::CssFeatures => "css-features",
        }
    }

    pub fn needs_covariates(self) -> bool {
        self == Method::CssFeatures
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts the command-line spelling or the report tag, any case.
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.cli_name() == key)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub method: Method,
    /// Smoothing weight and ADMM settings; the SSR baselines use `lambda`,
    /// `penalty` and `diagonal` only.
    pub config: AdmmConfig,
}

impl MethodSpec {
    pub fn new(method: Method, config: AdmmConfig) -> Self {
        Self { method, config }
    }
}

#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: Method,
    pub estimate: SpatialField,
    /// Present for the two ADMM methods.
    pub recovery: Option<RecoveryResult>,
}

/// Estimated field for one method.
pub fn run_method(
    spec: &MethodSpec,
    partition: &Partition,
    z: &AggregateObservations,
    covariates: Option<&CovariateMatrix>,
) -> Result<SpatialField> {
    Ok(run_method_detailed(spec, partition, z, covariates)?.estimate)
}

pub fn run_method_detailed(
    spec: &MethodSpec,
    partition: &Partition,
    z: &AggregateObservations,
    covariates: Option<&CovariateMatrix>,
) -> Result<MethodRun> {
    spec.config.validate()?;
    let fem = if spec.method == Method::Pe {
        None
    } else {
        Some(fem_for(partition, &spec.config)?)
    };
    run_with_fem(spec, fem, partition, z, covariates)
}

/// Runs several methods on one instance, assembling the mesh once.
pub fn run_methods(
    methods: &[Method],
    config: &AdmmConfig,
    partition: &Partition,
    z: &AggregateObservations,
    covariates: Option<&CovariateMatrix>,
) -> Result<Vec<MethodRun>> {
    config.validate()?;
    let fem = fem_for(partition, config)?;
    methods
        .iter()
        .map(|&m| run_with_fem(&MethodSpec::new(m, config.clone()), Some(fem.clone()), partition, z, covariates))
        .collect()
}

fn run_with_fem(
    spec: &MethodSpec,
    fem: Option<Arc<FemSystem>>,
    partition: &Partition,
    z: &AggregateObservations,
    covariates: Option<&CovariateMatrix>,
) -> Result<MethodRun> {
    let cfg = &spec.config;
    let method = spec.method;
    let domain = partition.domain().clone();
    let patched = patched_estimate(partition, z)?;
    let fem = || fem.clone().expect("mesh assembled for smoothing methods");
    let (estimate, recovery) = match method {
        Method::Pe => (patched, None),
        Method::PeSsr1 => {
            let cells = partition.stations().cells().to_vec();
            let h: Vec<f64> = (0..partition.m())
                .map(|i| z.values()[i] / partition.patch_area(i))
                .collect();
            let model = SsrSolver::with_observations(fem(), cfg.lambda, 1.0, cells)?.fit(&h)?;
            (SpatialField::new(domain, model.fitted().to_vec())?, None)
        }
        Method::PeSsr2 => {
            let model = SsrSolver::new(fem(), cfg.lambda, 1.0)?.fit(patched.values())?;
            (SpatialField::new(domain, model.fitted().to_vec())?, None)
        }
        Method::Css => {
            let r = css_recover_with(fem(), partition, z, None, cfg)?;
            (r.estimate.clone(), Some(r))
        }
        Method::CssFeatures => {
            let w = covariates.ok_or_else(|| {
                Error::Config("CSS_FEATURES needs a covariate matrix".into())
            })?;
            same_domain(w.domain(), &domain)?;
            let w = Arc::new(w.standardized()?);
            let r = css_recover_with(fem(), partition, z, Some(w), cfg)?;
            (r.estimate.clone(), Some(r))
        }
    };
    Ok(MethodRun {
        method,
        estimate,
        recovery,
    })
}

/// Relative errors of one estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Option<Method>,
    pub seed: Option<u64>,
    /// `|est - truth| / truth` for every included cell, in cell order.
    pub errors: Vec<f64>,
    /// Active indices of the included cells.
    pub cells: Vec<usize>,
    pub mre: f64,
    pub excluded: usize,
    pub floor: f64,
}

pub fn relative_errors(est: &SpatialField, truth: &SpatialField, floor: f64) -> Result<EvalReport> {
    est.check_same_domain(truth)?;
    let mut errors = Vec::new();
    let mut cells = Vec::new();
    for (j, (&e, &t)) in est.values().iter().zip(truth.values()).enumerate() {
        if t < floor || t <= 0.0 {
            continue;
        }
        errors.push((e - t).abs() / t);
        cells.push(j);
    }
    if errors.is_empty() {
        return Err(Error::NoEvaluableCells { floor });
    }
    let mre = errors.iter().sum::<f64>() / errors.len() as f64;
    Ok(EvalReport {
        method: None,
        seed: None,
        excluded: truth.len() - errors.len(),
        errors,
        cells,
        mre,
        floor,
    })
}

impl EvalReport {
    pub fn tagged(mut self, method: Method, seed: u64) -> Self {
        self.method = Some(method);
        self.seed = Some(seed);
        self
    }

    /// Fraction of included cells with error at most `x`.
    pub fn cdf_at(&self, x: f64) -> f64 {
        self.errors.iter().filter(|&&e| e <= x).count() as f64 / self.errors.len() as f64
    }

    /// Empirical CDF as `(error, fraction <= error)` at each sorted error;
    /// repeated errors appear once with their final fraction.
    pub fn cdf_points(&self) -> Vec<(f64, f64)> {
        let mut e = self.errors.clone();
        e.sort_by(f64::total_cmp);
        let n = e.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(e.len());
        for (k, v) in e.into_iter().enumerate() {
            let frac = (k + 1) as f64 / n;
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 = frac,
                _ => out.push((v, frac)),
            }
        }
        out
    }

    pub fn max_error(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }
}
