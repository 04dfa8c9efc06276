//! Penalized least squares with the mixed finite-element roughness penalty.
//!
//! For observations `h` at a set of cells the fit minimizes
//! `w |h - W beta - Psi c|^2 + lambda d' M d` subject to `M d = L c`, which is
//! the block system
//!
//! ```text
//! [ w Psi'Psi   lambda L' ] [c]   [ w Psi'(h - W beta) ]
//! [ L           -M        ] [d] = [ 0                  ]
//! ```
//!
//! Unknowns are interleaved per vertex so the matrix is banded. Covariate
//! coefficients are profiled out exactly: with `S` the smoother on the
//! observed cells, `beta` solves `W'(I - S)W beta = W'(I - S)h`.

use std::sync::Arc;

use super::assemble::FemSystem;
use super::banded::BandedLu;
use super::sparse::CsrMatrix;
use crate::domain::{same_domain, CovariateMatrix, GridDomain, SpatialField};
use crate::error::{Error, Result};

/// Relative pivot threshold for the covariate normal equations.
const COLLINEAR_TOLERANCE: f64 = 1e-10;

/// A factorized smoother for fixed `lambda`, observation weight and
/// observation cells. Reused across many right-hand sides.
#[derive(Debug, Clone)]
pub struct SsrSolver {
    fem: Arc<FemSystem>,
    lambda: f64,
    weight: f64,
    obs: Option<Vec<usize>>,
    psi_obs: CsrMatrix,
    block: CsrMatrix,
    lu: BandedLu,
    profile: Option<Profile>,
}

#[derive(Debug, Clone)]
struct Profile {
    covariates: Arc<CovariateMatrix>,
    // columns of W restricted to the observed cells
    w_obs: Vec<Vec<f64>>,
    // S W on the observed cells
    sw: Vec<Vec<f64>>,
    // block solutions for each column of W
    cw: Vec<Vec<f64>>,
    dw: Vec<Vec<f64>>,
    chol: Vec<Vec<f64>>,
}

/// A fitted smoother.
#[derive(Debug, Clone)]
pub struct SsrModel {
    fem: Arc<FemSystem>,
    covariates: Option<Arc<CovariateMatrix>>,
    lambda: f64,
    c: Vec<f64>,
    d: Vec<f64>,
    beta: Vec<f64>,
    fitted: Vec<f64>,
}

impl SsrSolver {
    /// Smoother observing every active cell.
    pub fn new(fem: Arc<FemSystem>, lambda: f64, weight: f64) -> Result<Self> {
        Self::build(fem, lambda, weight, None)
    }

    /// Smoother observing only `cells`; the fit is still evaluated everywhere.
    pub fn with_observations(
        fem: Arc<FemSystem>,
        lambda: f64,
        weight: f64,
        cells: Vec<usize>,
    ) -> Result<Self> {
        if let Some(&j) = cells.iter().find(|&&j| j >= fem.n_cells()) {
            return Err(Error::InvalidValue(format!("observation cell {j} out of range")));
        }
        Self::build(fem, lambda, weight, Some(cells))
    }

    fn build(fem: Arc<FemSystem>, lambda: f64, weight: f64, obs: Option<Vec<usize>>) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidValue(format!("lambda must be positive, got {lambda}")));
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "observation weight must be positive, got {weight}"
            )));
        }
        let psi_obs = match &obs {
            Some(rows) => fem.psi().select_rows(rows),
            None => fem.psi().clone(),
        };
        let nv = fem.n_vertices();
        let mut t = Vec::new();
        for (a, b, v) in psi_obs.gram().triplets() {
            t.push((2 * a, 2 * b, weight * v));
        }
        for (a, b, v) in fem.penalty().triplets() {
            t.push((2 * b, 2 * a + 1, lambda * v));
            t.push((2 * a + 1, 2 * b, v));
        }
        for (a, b, v) in fem.mass().triplets() {
            t.push((2 * a + 1, 2 * b + 1, -v));
        }
        let block = CsrMatrix::from_triplets(2 * nv, 2 * nv, t);
        let lu = BandedLu::factor(&block)?;
        Ok(Self {
            fem,
            lambda,
            weight,
            obs,
            psi_obs,
            block,
            lu,
            profile: None,
        })
    }

    /// Adds covariates whose coefficients are estimated with every fit.
    pub fn with_covariates(mut self, w: Arc<CovariateMatrix>) -> Result<Self> {
        same_domain(w.domain(), self.fem.triangulation().domain())?;
        let rows: Vec<usize> = match &self.obs {
            Some(r) => r.clone(),
            None => (0..w.n()).collect(),
        };
        let q = w.q();
        let w_obs: Vec<Vec<f64>> = (0..q)
            .map(|k| rows.iter().map(|&j| w.row(j)[k]).collect())
            .collect();
        let gram: Vec<Vec<f64>> = (0..q)
            .map(|a| (0..q).map(|b| dot(&w_obs[a], &w_obs[b])).collect())
            .collect();
        if cholesky(&gram).is_none() {
            return Err(Error::CollinearCovariates(
                "covariate columns are linearly dependent on the observed cells".into(),
            ));
        }
        let mut sw = Vec::with_capacity(q);
        let mut cw = Vec::with_capacity(q);
        let mut dw = Vec::with_capacity(q);
        for col in &w_obs {
            let (c, d) = self.solve_block(col)?;
            sw.push(self.psi_obs.mul_vec(&c));
            cw.push(c);
            dw.push(d);
        }
        let reduced: Vec<Vec<f64>> = (0..q)
            .map(|a| {
                (0..q)
                    .map(|b| {
                        let v = dot(&w_obs[a], &w_obs[b]) - dot(&w_obs[a], &sw[b]);
                        let u = dot(&w_obs[b], &w_obs[a]) - dot(&w_obs[b], &sw[a]);
                        0.5 * (u + v)
                    })
                    .collect()
            })
            .collect();
        let chol = cholesky(&reduced).ok_or_else(|| {
            Error::CollinearCovariates(
                "a combination of covariates has zero roughness (affine in the coordinates) \
                 and cannot be separated from the smooth field"
                    .into(),
            )
        })?;
        self.profile = Some(Profile {
            covariates: w,
            w_obs,
            sw,
            cw,
            dw,
            chol,
        });
        Ok(self)
    }

    pub fn fem(&self) -> &Arc<FemSystem> {
        &self.fem
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Number of observations expected by [`SsrSolver::fit`].
    pub fn n_obs(&self) -> usize {
        self.psi_obs.n_rows()
    }

    pub fn has_covariates(&self) -> bool {
        self.profile.is_some()
    }

    fn solve_block(&self, h: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let nv = self.fem.n_vertices();
        let ph = self.psi_obs.transpose_mul_vec(h);
        let mut rhs = vec![0.0; 2 * nv];
        for (v, x) in ph.into_iter().enumerate() {
            rhs[2 * v] = self.weight * x;
        }
        let x = self.lu.solve_refined(&self.block, &rhs)?;
        let c = x.iter().step_by(2).copied().collect();
        let d = x.iter().skip(1).step_by(2).copied().collect();
        Ok((c, d))
    }

    pub fn fit(&self, h: &[f64]) -> Result<SsrModel> {
        if h.len() != self.n_obs() {
            return Err(Error::ShapeMismatch(format!(
                "{} observations for a smoother expecting {}",
                h.len(),
                self.n_obs()
            )));
        }
        if let Some(j) = h.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!("observation {j} is not finite")));
        }
        let (mut c, mut d) = self.solve_block(h)?;
        let mut beta = Vec::new();
        if let Some(p) = &self.profile {
            let rhs: Vec<f64> = (0..p.w_obs.len())
                .map(|k| dot(&p.w_obs[k], h) - dot(&p.sw[k], h))
                .collect();
            beta = cholesky_solve(&p.chol, &rhs);
            for (k, &b) in beta.iter().enumerate() {
                axpy(&mut c, -b, &p.cw[k]);
                axpy(&mut d, -b, &p.dw[k]);
            }
        }
        let covariates = self.profile.as_ref().map(|p| p.covariates.clone());
        SsrModel::from_parts(self.fem.clone(), covariates, self.lambda, c, d, beta)
    }
}

/// One-shot fit at every active cell with uniform observation weight.
pub fn ssr_fit(
    fem: Arc<FemSystem>,
    h: &[f64],
    lambda: f64,
    covariates: Option<Arc<CovariateMatrix>>,
    weight: f64,
) -> Result<SsrModel> {
    let mut solver = SsrSolver::new(fem, lambda, weight)?;
    if let Some(w) = covariates {
        solver = solver.with_covariates(w)?;
    }
    solver.fit(h)
}

/// Field of fitted values `Psi c + W beta` on `domain`.
pub fn ssr_eval(model: &SsrModel, domain: &Arc<GridDomain>) -> Result<SpatialField> {
    same_domain(model.fem.triangulation().domain(), domain)?;
    SpatialField::new(domain.clone(), model.fitted.clone())
}

impl SsrModel {
    /// Assembles a model from vertex values `c`, discrete Laplacian `d` and
    /// covariate coefficients.
    pub fn from_parts(
        fem: Arc<FemSystem>,
        covariates: Option<Arc<CovariateMatrix>>,
        lambda: f64,
        c: Vec<f64>,
        d: Vec<f64>,
        beta: Vec<f64>,
    ) -> Result<Self> {
        let nv = fem.n_vertices();
        if c.len() != nv || d.len() != nv {
            return Err(Error::ShapeMismatch(format!(
                "coefficient vectors must have length {nv}"
            )));
        }
        let q = covariates.as_ref().map_or(0, |w| w.q());
        if beta.len() != q {
            return Err(Error::ShapeMismatch(format!("{} coefficients for {q} covariates", beta.len())));
        }
        let mut fitted = fem.psi().mul_vec(&c);
        if let Some(w) = &covariates {
            same_domain(w.domain(), fem.triangulation().domain())?;
            for (f, x) in fitted.iter_mut().zip(w.apply(&beta)) {
                *f += x;
            }
        }
        Ok(Self {
            fem,
            covariates,
            lambda,
            c,
            d,
            beta,
            fitted,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Field values at the mesh vertices.
    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// Discrete Laplacian at the mesh vertices.
    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn covariates(&self) -> Option<&Arc<CovariateMatrix>> {
        self.covariates.as_ref()
    }

    /// `Psi c + W beta` at every active cell.
    pub fn fitted(&self) -> &[f64] {
        &self.fitted
    }

    /// Smooth part `Psi c` at every active cell.
    pub fn smooth(&self) -> Vec<f64> {
        self.fem.psi().mul_vec(&self.c)
    }

    /// `d' M d`, the discretized integral of the squared Laplacian.
    pub fn roughness(&self) -> f64 {
        dot(&self.d, &self.fem.mass().mul_vec(&self.d))
    }

    pub fn fem(&self) -> &Arc<FemSystem> {
        &self.fem
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Lower Cholesky factor, or `None` when a pivot falls below the relative
/// collinearity threshold.
fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let q = a.len();
    let mut l = vec![vec![0.0; q]; q];
    for i in 0..q {
        for j in 0..=i {
            let s = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if !(s > COLLINEAR_TOLERANCE * a[i][i].abs()) || !(s > 0.0) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let q = b.len();
    let mut y = b.to_vec();
    for i in 0..q {
        y[i] = (y[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    for i in (0..q).rev() {
        y[i] = (y[i] - (i + 1..q).map(|k| l[k][i] * y[k]).sum::<f64>()) / l[i][i];
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoother::assemble::assemble;
    use crate::smoother::mesh::triangulate;

    fn fem(nr: usize, nc: usize) -> Arc<FemSystem> {
        let d = Arc::new(GridDomain::full(nr, nc).unwrap());
        Arc::new(assemble(triangulate(&d)).unwrap())
    }

    fn bumpy(n: usize) -> Vec<f64> {
        (0..n).map(|j| ((j * 7 % 11) as f64).sin() + 2.0).collect()
    }

    #[test]
    fn constants_are_fixed_points() {
        let f = fem(5, 4);
        for lambda in [1e-3, 1.0, 1e3] {
            let m = ssr_fit(f.clone(), &[7.0; 20], lambda, None, 1.0).unwrap();
            assert!(m.fitted().iter().all(|v| (v - 7.0).abs() < 1e-9));
            assert!(m.d().iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn affine_data_are_reproduced() {
        let f = fem(6, 5);
        let d = f.triangulation().domain().clone();
        let h: Vec<f64> = d.centers().iter().map(|&(x, y)| 1.0 + 0.5 * x - 2.0 * y).collect();
        for lambda in [1e-2, 1.0, 100.0] {
            let m = ssr_fit(f.clone(), &h, lambda, None, 1.0).unwrap();
            for (a, b) in m.fitted().iter().zip(&h) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn covariate_coefficients_are_recovered() {
        let f = fem(10, 10);
        let d = f.triangulation().domain().clone();
        let cols = vec![
            ("a".to_string(), d.cells().iter().map(|&(r, c)| ((r * c) % 5) as f64).collect()),
            ("b".to_string(), d.cells().iter().map(|&(r, c)| (r as f64 - 4.5).powi(2) + (c % 3) as f64).collect()),
        ];
        let w = Arc::new(CovariateMatrix::from_columns(d.clone(), cols).unwrap());
        let h = w.apply(&[1.5, -0.25]);
        let m = ssr_fit(f, &h, 1e4, Some(w), 1.0).unwrap();
        assert!((m.beta()[0] - 1.5).abs() < 1e-6);
        assert!((m.beta()[1] + 0.25).abs() < 1e-6);
    }

    #[test]
    fn affine_covariate_is_collinear_with_the_smoother() {
        let f = fem(4, 4);
        let d = f.triangulation().domain().clone();
        let x: Vec<f64> = d.centers().iter().map(|p| p.0).collect();
        let w = Arc::new(CovariateMatrix::from_columns(d, vec![("x".into(), x)]).unwrap());
        let err = SsrSolver::new(f, 1.0, 1.0).unwrap().with_covariates(w).unwrap_err();
        assert!(matches!(err, Error::CollinearCovariates(_)));
    }

    #[test]
    fn duplicated_covariates_are_collinear() {
        let f = fem(4, 4);
        let d = f.triangulation().domain().clone();
        let v: Vec<f64> = (0..16).map(|j| (j % 3) as f64).collect();
        let w = Arc::new(
            CovariateMatrix::from_columns(d, vec![("a".into(), v.clone()), ("b".into(), v)]).unwrap(),
        );
        assert!(matches!(
            SsrSolver::new(f, 1.0, 1.0).unwrap().with_covariates(w),
            Err(Error::CollinearCovariates(_))
        ));
    }

    #[test]
    fn roughness_decreases_with_lambda() {
        let f = fem(8, 8);
        let h = bumpy(64);
        let r: Vec<f64> = [1e-2, 1e-1, 1.0, 10.0, 100.0]
            .iter()
            .map(|&l| ssr_fit(f.clone(), &h, l, None, 1.0).unwrap().roughness())
            .collect();
        assert!(r.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)), "{r:?}");
    }

    #[test]
    fn small_lambda_interpolates() {
        let f = fem(6, 6);
        let h = bumpy(36);
        let e: Vec<f64> = [1e-2, 1e-4, 1e-6]
            .iter()
            .map(|&l| {
                let m = ssr_fit(f.clone(), &h, l, None, 1.0).unwrap();
                m.fitted().iter().zip(&h).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            })
            .collect();
        assert!(e[0] > e[1] && e[1] > e[2] && e[2] < 1e-3, "{e:?}");
    }

    #[test]
    fn eval_of_constructed_models() {
        let f = fem(3, 4);
        let d = f.triangulation().domain().clone();
        let nv = f.n_vertices();
        let m = SsrModel::from_parts(f.clone(), None, 1.0, vec![5.0; nv], vec![0.0; nv], vec![]).unwrap();
        assert!(ssr_eval(&m, &d).unwrap().values().iter().all(|&v| v == 5.0));

        let c: Vec<f64> = f.triangulation().vertices().iter().map(|&(x, y)| 2.0 * x - y).collect();
        let m = SsrModel::from_parts(f.clone(), None, 1.0, c, vec![0.0; nv], vec![]).unwrap();
        let field = ssr_eval(&m, &d).unwrap();
        for (v, (x, y)) in field.values().iter().zip(d.centers()) {
            assert!((v - (2.0 * x - y)).abs() < 1e-14);
        }

        let w = Arc::new(
            CovariateMatrix::from_columns(d.clone(), vec![("g".into(), (0..12).map(|j| j as f64 + 1.0).collect())])
                .unwrap(),
        );
        let m = SsrModel::from_parts(f.clone(), Some(w.clone()), 1.0, vec![0.0; nv], vec![0.0; nv], vec![2.0])
            .unwrap();
        assert_eq!(ssr_eval(&m, &d).unwrap().values(), w.apply(&[2.0]).as_slice());

        let other = Arc::new(GridDomain::full(4, 3).unwrap());
        assert!(matches!(ssr_eval(&m, &other), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn observation_subset_and_shape_checks() {
        let f = fem(4, 4);
        let s = SsrSolver::with_observations(f.clone(), 1.0, 1.0, vec![0, 6, 13]).unwrap();
        assert_eq!(s.n_obs(), 3);
        let m = s.fit(&[3.0, 3.0, 3.0]).unwrap();
        assert!(m.fitted().iter().all(|v| (v - 3.0).abs() < 1e-9));
        assert!(matches!(s.fit(&[1.0]), Err(Error::ShapeMismatch(_))));
        assert!(SsrSolver::new(f, 0.0, 1.0).is_err());
    }
}
