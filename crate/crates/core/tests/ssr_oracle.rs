mod common;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spatial_css::admm::{f_update, FUpdate};
use spatial_css::domain::{CovariateMatrix, GridDomain};
use spatial_css::smoother::{assemble_with, triangulate_with, BoundaryPenalty, Diagonal, FemSystem, SsrSolver};

use common::{dense_ssr, max_abs, max_abs_diff};

fn fem(domain: &Arc<GridDomain>, diag: Diagonal, pen: BoundaryPenalty) -> Arc<FemSystem> {
    Arc::new(assemble_with(triangulate_with(domain, diag), pen).unwrap())
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    max_abs_diff(a, b) / max_abs(b).max(1.0)
}

fn random_covariates(domain: &Arc<GridDomain>, q: usize, rng: &mut ChaCha8Rng) -> CovariateMatrix {
    let cols = (0..q)
        .map(|k| (format!("x{k}"), (0..domain.len()).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect();
    CovariateMatrix::from_columns(domain.clone(), cols).unwrap()
}

#[test]
fn full_observation_fits_match_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let domain = Arc::new(GridDomain::full(6, 6).unwrap());
    for trial in 0..24 {
        let diag = if trial % 2 == 0 { Diagonal::Forward } else { Diagonal::Backward };
        let pen = if trial % 3 == 0 { BoundaryPenalty::Neumann } else { BoundaryPenalty::FreeBoundary };
        let fem = fem(&domain, diag, pen);
        let lambda = 10f64.powf(rng.random_range(-3.0..3.0));
        let weight = rng.random_range(0.2..3.0);
        let h: Vec<f64> = (0..36).map(|_| rng.random_range(-2.0..5.0)).collect();
        let obs: Vec<usize> = (0..36).collect();

        let model = SsrSolver::new(fem.clone(), lambda, weight).unwrap().fit(&h).unwrap();
        let oracle = dense_ssr(&fem, &obs, &h, lambda, weight, None);
        assert!(rel(model.c(), &oracle.c) < 1e-9, "c, trial {trial}");
        assert!(rel(model.d(), &oracle.d) < 1e-9, "d, trial {trial}");
        assert!(rel(model.fitted(), &oracle.fitted) < 1e-9, "fitted, trial {trial}");
    }
}

#[test]
fn covariate_fits_match_joint_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mask: Vec<bool> = (0..36).map(|k| k != 0 && k != 35 && k != 14).collect();
    let domain = Arc::new(GridDomain::new(6, 6, mask).unwrap());
    let fem = fem(&domain, Diagonal::Forward, BoundaryPenalty::FreeBoundary);
    for trial in 0..12 {
        let q = 1 + trial % 3;
        let w = random_covariates(&domain, q, &mut rng);
        let lambda = 10f64.powf(rng.random_range(-2.0..2.0));
        let h: Vec<f64> = (0..domain.len()).map(|_| rng.random_range(0.0..4.0)).collect();
        let obs: Vec<usize> = (0..domain.len()).collect();
        let model = SsrSolver::new(fem.clone(), lambda, 1.0)
            .unwrap()
            .with_covariates(Arc::new(w.clone()))
            .unwrap()
            .fit(&h)
            .unwrap();
        let oracle = dense_ssr(&fem, &obs, &h, lambda, 1.0, Some(&w));
        assert!(rel(model.beta(), &oracle.beta) < 1e-9, "beta, trial {trial}");
        assert!(rel(model.c(), &oracle.c) < 1e-9, "c, trial {trial}");
        assert!(rel(model.fitted(), &oracle.fitted) < 1e-9, "fitted, trial {trial}");
    }
}

#[test]
fn subset_observation_fits_match_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let domain = Arc::new(GridDomain::full(6, 6).unwrap());
    let fem = fem(&domain, Diagonal::Forward, BoundaryPenalty::FreeBoundary);
    let obs = vec![0, 7, 9, 16, 20, 27, 33];
    for _ in 0..8 {
        let lambda = 10f64.powf(rng.random_range(-2.0..2.0));
        let h: Vec<f64> = obs.iter().map(|_| rng.random_range(0.0..4.0)).collect();
        let model = SsrSolver::with_observations(fem.clone(), lambda, 1.0, obs.clone())
            .unwrap()
            .fit(&h)
            .unwrap();
        let oracle = dense_ssr(&fem, &obs, &h, lambda, 1.0, None);
        assert!(rel(model.fitted(), &oracle.fitted) < 1e-9);
        assert!(rel(model.d(), &oracle.d) < 1e-9);
    }
}

#[test]
fn f_update_matches_dense_solve_of_its_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let domain = Arc::new(GridDomain::full(6, 6).unwrap());
    let fem = fem(&domain, Diagonal::Forward, BoundaryPenalty::FreeBoundary);
    let obs: Vec<usize> = (0..36).collect();
    let w = random_covariates(&domain, 2, &mut rng);
    for _ in 0..8 {
        let rho = rng.random_range(0.1..5.0);
        let lambda = rng.random_range(0.1..10.0);
        let g: Vec<f64> = (0..36).map(|_| rng.random_range(0.0..3.0)).collect();
        let alpha: Vec<f64> = (0..36).map(|_| rng.random_range(-1.0..1.0)).collect();

        let target: Vec<f64> = g.iter().zip(&alpha).map(|(g, a)| g + a / rho).collect();
        let (f, beta) = f_update(fem.clone(), &g, &alpha, rho, lambda, Some(Arc::new(w.clone()))).unwrap();
        let oracle = dense_ssr(&fem, &obs, &target, lambda, rho / 2.0, Some(&w));
        assert!(rel(&f, &oracle.fitted) < 1e-9);
        assert!(rel(&beta, &oracle.beta) < 1e-9);

        let literal: Vec<f64> = g.iter().zip(&alpha).map(|(g, a)| (a + rho * g) / 2.0).collect();
        let model = FUpdate::new(fem.clone(), lambda, rho, None, true).unwrap().apply(&g, &alpha).unwrap();
        let oracle = dense_ssr(&fem, &obs, &literal, lambda, 1.0, None);
        assert!(rel(model.fitted(), &oracle.fitted) < 1e-9);
    }
}
