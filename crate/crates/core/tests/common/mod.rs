//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use spatial_css::domain::{CovariateMatrix, GridDomain};
use spatial_css::smoother::FemSystem;

pub struct DenseFit {
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub beta: Vec<f64>,
    /// `Psi c + W beta` at every active cell.
    pub fitted: Vec<f64>,
}

fn dense(m: &spatial_css::smoother::CsrMatrix) -> DMatrix<f64> {
    let rows = m.to_dense();
    DMatrix::from_fn(m.n_rows(), m.n_cols(), |r, c| rows[r][c])
}

/// Solves the joint system in `(c, d, beta)`
///
/// ```text
/// [ w Psi'Psi   lambda L'   w Psi'W ] [c   ]   [ w Psi'h ]
/// [ lambda L   -lambda M    0       ] [d   ] = [ 0       ]
/// [ w W'Psi     0           w W'W   ] [beta]   [ w W'h   ]
/// ```
///
/// by dense LU, with `Psi` and `W` restricted to the observed cells.
pub fn dense_ssr(
    fem: &FemSystem,
    obs: &[usize],
    h: &[f64],
    lambda: f64,
    weight: f64,
    w: Option<&CovariateMatrix>,
) -> DenseFit {
    let nv = fem.n_vertices();
    let psi_all = dense(fem.psi());
    let psi = DMatrix::from_fn(obs.len(), nv, |r, c| psi_all[(obs[r], c)]);
    let l = dense(fem.penalty());
    let m = dense(fem.mass());
    let q = w.map_or(0, |w| w.q());
    let wm = DMatrix::from_fn(obs.len(), q, |r, k| w.unwrap().row(obs[r])[k]);
    let hv = DVector::from_column_slice(h);

    let size = 2 * nv + q;
    let mut a = DMatrix::<f64>::zeros(size, size);
    let mut b = DVector::<f64>::zeros(size);
    a.view_mut((0, 0), (nv, nv)).copy_from(&(psi.transpose() * &psi * weight));
    a.view_mut((0, nv), (nv, nv)).copy_from(&(l.transpose() * lambda));
    a.view_mut((nv, 0), (nv, nv)).copy_from(&(&l * lambda));
    a.view_mut((nv, nv), (nv, nv)).copy_from(&(&m * -lambda));
    b.rows_mut(0, nv).copy_from(&(psi.transpose() * &hv * weight));
    if q > 0 {
        a.view_mut((0, 2 * nv), (nv, q)).copy_from(&(psi.transpose() * &wm * weight));
        a.view_mut((2 * nv, 0), (q, nv)).copy_from(&(wm.transpose() * &psi * weight));
        a.view_mut((2 * nv, 2 * nv), (q, q)).copy_from(&(wm.transpose() * &wm * weight));
        b.rows_mut(2 * nv, q).copy_from(&(wm.transpose() * &hv * weight));
    }
    let x = a.lu().solve(&b).expect("oracle system is nonsingular");
    let c: Vec<f64> = x.rows(0, nv).iter().copied().collect();
    let d: Vec<f64> = x.rows(nv, nv).iter().copied().collect();
    let beta: Vec<f64> = x.rows(2 * nv, q).iter().copied().collect();
    let mut fitted: Vec<f64> = (&psi_all * DVector::from_column_slice(&c)).iter().copied().collect();
    if let Some(w) = w {
        for (j, f) in fitted.iter_mut().enumerate() {
            *f += w.row(j).iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    DenseFit { c, d, beta, fitted }
}

/// Minimizer of `rho/2 |g|^2 + c'g` over `g >= 0, sum g = total` found by
/// trying every support and keeping the one that satisfies the KKT
/// conditions. Returns the solution and objective.
pub fn kkt_patch(c: &[f64], total: f64, rho: f64) -> (Vec<f64>, f64) {
    let n = c.len();
    let objective = |g: &[f64]| g.iter().zip(c).map(|(g, c)| 0.5 * rho * g * g + c * g).sum::<f64>();
    if total == 0.0 {
        let g = vec![0.0; n];
        let o = objective(&g);
        return (g, o);
    }
    let mut found: Option<Vec<f64>> = None;
    for mask in 1u32..(1 << n) {
        let s: Vec<usize> = (0..n).filter(|j| mask >> j & 1 == 1).collect();
        let nu = (rho * total + s.iter().map(|&j| c[j]).sum::<f64>()) / s.len() as f64;
        let primal = s.iter().all(|&j| nu - c[j] >= -1e-12);
        let dual = (0..n).filter(|j| mask >> j & 1 == 0).all(|j| c[j] - nu >= -1e-12);
        if primal && dual {
            let mut g = vec![0.0; n];
            for &j in &s {
                g[j] = ((nu - c[j]) / rho).max(0.0);
            }
            match &found {
                // Degenerate ties give several supports with the same point.
                Some(prev) => assert!(prev.iter().zip(&g).all(|(a, b)| (a - b).abs() < 1e-9)),
                None => found = Some(g),
            }
        }
    }
    let g = found.expect("a KKT point exists");
    let o = objective(&g);
    (g, o)
}

/// Nearest-station weights by direct comparison of squared distances.
pub fn brute_voronoi(domain: &GridDomain, stations: &[usize]) -> Vec<Vec<(usize, f64)>> {
    (0..domain.len())
        .map(|j| {
            let (x, y) = domain.center(j);
            let d: Vec<f64> = stations
                .iter()
                .map(|&s| {
                    let (sx, sy) = domain.center(s);
                    (x - sx).powi(2) + (y - sy).powi(2)
                })
                .collect();
            let best = d.iter().copied().fold(f64::INFINITY, f64::min);
            let near: Vec<usize> = (0..stations.len()).filter(|&i| d[i] <= best + 1e-9).collect();
            near.iter().map(|&i| (i, 1.0 / near.len() as f64)).collect()
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}
