// Fit the finite-element spline smoother to noisy data with a covariate,
// for several smoothing weights.
//
// cargo run --example spline_smoothing

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use spatial_css::domain::{CovariateMatrix, GridDomain};
use spatial_css::smoother::{assemble, triangulate, SsrSolver};

pub fn run_example(_out: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let domain = Arc::new(GridDomain::full(25, 25)?);
    let fem = Arc::new(assemble(triangulate(&domain))?);
    println!("{} vertices, {} triangles", fem.n_vertices(), fem.triangulation().n_triangles());

    // Smooth surface plus 2 x (east half indicator) plus noise.
    let east: Vec<f64> = domain.cells().iter().map(|&(_, c)| f64::from(u8::from(c >= 12))).collect();
    let w = Arc::new(CovariateMatrix::from_columns(domain.clone(), vec![("east".into(), east.clone())])?);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 0.3)?;
    let h: Vec<f64> = domain
        .centers()
        .iter()
        .zip(&east)
        .map(|(&(x, y), e)| (x / 8.0).sin() + (y / 10.0).cos() + 2.0 * e + noise.sample(&mut rng))
        .collect();

    for lambda in [0.01, 1.0, 100.0] {
        let model = SsrSolver::new(fem.clone(), lambda, 1.0)?.with_covariates(w.clone())?.fit(&h)?;
        let rss: f64 = model.fitted().iter().zip(&h).map(|(f, y)| (f - y).powi(2)).sum();
        println!(
            "lambda {lambda:>6}: beta {:.3}, roughness {:.4}, rss {:.2}",
            model.beta()[0],
            model.roughness(),
            rss
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    run_example(&out)
}
