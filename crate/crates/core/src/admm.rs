//! Constrained spatial smoothing by ADMM.
//!
//! The splitting is `f` (smooth, possibly with covariates) and `g`
//! (nonnegative, matching every station volume) with scaled constraint
//! `g = f`. Each iteration projects onto the constraint set, refits the
//! smoother to `g + alpha / rho`, then takes a dual step.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{same_domain, CovariateMatrix, SpatialField};
use crate::error::{Error, Result};
use crate::partition::{patched_estimate, AggregateObservations, Partition, TieHandling};
use crate::projection::PatchProjector;
use crate::smoother::{assemble_with, triangulate_with, BoundaryPenalty, Diagonal, FemSystem, SsrModel, SsrSolver};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    pub lambda: f64,
    pub rho: f64,
    pub max_iter: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    /// Write every n-th iteration to the diagnostics log; 0 disables it.
    pub report_every: usize,
    /// Use the target `(alpha + rho g) / 2` with unit weight in the f-update
    /// instead of `g + alpha / rho` with weight `rho / 2`.
    pub literal_target: bool,
    pub penalty: BoundaryPenalty,
    pub diagonal: Diagonal,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            rho: 1.0,
            max_iter: 500,
            tol_primal: 1e-6,
            tol_dual: 1e-6,
            report_every: 0,
            literal_target: false,
            penalty: BoundaryPenalty::default(),
            diagonal: Diagonal::default(),
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::Config(format!("rho must be positive, got {}", self.rho)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if !(self.tol_primal >= 0.0 && self.tol_dual >= 0.0) {
            return Err(Error::Config("tolerances must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Augmented Lagrangian after the dual step.
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct AdmmState {
    /// Total smooth field `Psi c + W beta` at cell centers.
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub k: usize,
    pub history: Vec<IterationRecord>,
}

#[derive(Debug, Clone)]
pub struct RecoveryResult {
    /// The constrained iterate `g`; matches every station volume.
    pub estimate: SpatialField,
    /// Smooth component `Psi c` without the covariate part.
    pub smooth: SpatialField,
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
    pub history: Vec<IterationRecord>,
    /// Largest relative patch-sum violation seen after any g-update.
    pub constraint_max_violation: f64,
    /// Most negative entry of `g` seen after any g-update (0 if none).
    pub min_value: f64,
    pub tie_handling: TieHandling,
}

/// Minimizer of `rho/2 |g|^2 + (alpha - rho f)'g` over nonnegative fields
/// with the observed patch sums.
pub fn g_update(
    partition: &Partition,
    f: &[f64],
    alpha: &[f64],
    rho: f64,
    z: &AggregateObservations,
) -> Result<Vec<f64>> {
    g_update_with(&PatchProjector::new(partition), f, alpha, rho, z)
}

fn g_update_with(
    projector: &PatchProjector,
    f: &[f64],
    alpha: &[f64],
    rho: f64,
    z: &AggregateObservations,
) -> Result<Vec<f64>> {
    if f.len() != alpha.len() {
        return Err(Error::ShapeMismatch(format!(
            "f has {} entries, alpha {}",
            f.len(),
            alpha.len()
        )));
    }
    let c: Vec<f64> = alpha.iter().zip(f).map(|(a, f)| a - rho * f).collect();
    projector.project(&c, z, rho)
}

/// The smoother used by the f-update for fixed `lambda` and `rho`.
#[derive(Debug, Clone)]
pub struct FUpdate {
    solver: SsrSolver,
    rho: f64,
    literal_target: bool,
}

impl FUpdate {
    pub fn new(
        fem: Arc<FemSystem>,
        lambda: f64,
        rho: f64,
        covariates: Option<Arc<CovariateMatrix>>,
        literal_target: bool,
    ) -> Result<Self> {
        let weight = if literal_target { 1.0 } else { rho / 2.0 };
        let mut solver = SsrSolver::new(fem, lambda, weight)?;
        if let Some(w) = covariates {
            solver = solver.with_covariates(w)?;
        }
        Ok(Self {
            solver,
            rho,
            literal_target,
        })
    }

    pub fn target(&self, g: &[f64], alpha: &[f64]) -> Vec<f64> {
        let rho = self.rho;
        if self.literal_target {
            g.iter().zip(alpha).map(|(g, a)| (a + rho * g) / 2.0).collect()
        } else {
            g.iter().zip(alpha).map(|(g, a)| g + a / rho).collect()
        }
    }

    pub fn apply(&self, g: &[f64], alpha: &[f64]) -> Result<SsrModel> {
        if g.len() != alpha.len() {
            return Err(Error::ShapeMismatch("g and alpha differ in length".into()));
        }
        self.solver.fit(&self.target(g, alpha))
    }
}

/// Minimizer over `f = Psi c + W beta` of
/// `rho/2 |f - (g + alpha/rho)|^2 + lambda * roughness`; returns the total
/// field at cell centers and `beta`.
pub fn f_update(
    fem: Arc<FemSystem>,
    g: &[f64],
    alpha: &[f64],
    rho: f64,
    lambda: f64,
    covariates: Option<Arc<CovariateMatrix>>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let model = FUpdate::new(fem, lambda, rho, covariates, false)?.apply(g, alpha)?;
    Ok((model.fitted().to_vec(), model.beta().to_vec()))
}

/// `alpha + rho (g - f)`.
pub fn dual_update(alpha: &[f64], f: &[f64], g: &[f64], rho: f64) -> Vec<f64> {
    assert!(alpha.len() == f.len() && f.len() == g.len(), "length mismatch");
    alpha
        .iter()
        .zip(f.iter().zip(g))
        .map(|(a, (f, g))| a + rho * (g - f))
        .collect()
}

/// Assembles the finite-element system for the partition's domain.
pub fn fem_for(partition: &Partition, config: &AdmmConfig) -> Result<Arc<FemSystem>> {
    let tri = triangulate_with(partition.domain(), config.diagonal);
    Ok(Arc::new(assemble_with(tri, config.penalty)?))
}

pub fn css_recover(
    partition: &Partition,
    z: &AggregateObservations,
    covariates: Option<Arc<CovariateMatrix>>,
    config: &AdmmConfig,
) -> Result<RecoveryResult> {
    config.validate()?;
    let fem = fem_for(partition, config)?;
    css_recover_with(fem, partition, z, covariates, config)
}

/// Like [`css_recover`] with a prebuilt finite-element system.
pub fn css_recover_with(
    fem: Arc<FemSystem>,
    partition: &Partition,
    z: &AggregateObservations,
    covariates: Option<Arc<CovariateMatrix>>,
    config: &AdmmConfig,
) -> Result<RecoveryResult> {
    config.validate()?;
    let domain = partition.domain().clone();
    same_domain(fem.triangulation().domain(), &domain)?;
    if z.len() != partition.m() {
        return Err(Error::ShapeMismatch(format!(
            "{} volumes for {} stations",
            z.len(),
            partition.m()
        )));
    }
    let n = partition.n();
    let rho = config.rho;
    let projector = PatchProjector::new(partition);
    let fupdate = FUpdate::new(fem, config.lambda, rho, covariates, config.literal_target)?;
    // Every cell its own station: the constraint set is a single point.
    let pinned = (0..partition.m()).all(|i| partition.members(i).len() == 1);

    let f0 = patched_estimate(partition, z)?.into_values();
    let mut state = AdmmState {
        g: f0.clone(),
        f: f0,
        alpha: vec![0.0; n],
        beta: Vec::new(),
        k: 0,
        history: Vec::new(),
    };
    let threshold_p = config.tol_primal * (n as f64).sqrt();
    let threshold_d = config.tol_dual * (n as f64).sqrt();
    let mut max_violation = 0.0_f64;
    let mut min_value = 0.0_f64;
    let mut converged = false;
    let mut model = None;
    while state.k < config.max_iter {
        state.k += 1;
        let g_old = std::mem::take(&mut state.g);
        state.g = g_update_with(&projector, &state.f, &state.alpha, rho, z)?;
        max_violation = max_violation.max(partition.constraint_violation(&state.g, z));
        min_value = state.g.iter().copied().fold(min_value, f64::min);

        let fit = fupdate.apply(&state.g, &state.alpha)?;
        state.f = fit.fitted().to_vec();
        state.beta = fit.beta().to_vec();
        state.alpha = dual_update(&state.alpha, &state.f, &state.g, rho);

        let diff: Vec<f64> = state.g.iter().zip(&state.f).map(|(g, f)| g - f).collect();
        let primal = norm(&diff);
        let dual = rho * state.g.iter().zip(&g_old).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let objective = config.lambda * fit.roughness()
            + state.alpha.iter().zip(&diff).map(|(a, d)| a * d).sum::<f64>()
            + 0.5 * rho * primal * primal;
        state.history.push(IterationRecord {
            iter: state.k,
            primal_residual: primal,
            dual_residual: dual,
            objective,
        });
        model = Some(fit);
        if pinned || (primal <= threshold_p && dual <= threshold_d) {
            converged = true;
            break;
        }
    }
    let model = model.expect("at least one iteration");
    let last = *state.history.last().expect("at least one iteration");
    Ok(RecoveryResult {
        estimate: SpatialField::new(domain.clone(), state.g)?,
        smooth: SpatialField::new(domain, model.smooth())?,
        beta: state.beta,
        iterations: state.k,
        primal_residual: last.primal_residual,
        dual_residual: last.dual_residual,
        converged,
        history: state.history,
        constraint_max_violation: max_violation,
        min_value,
        tie_handling: partition.tie_handling(),
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
