// Recover a field from 15 station volumes with constrained spatial
// smoothing and inspect convergence.
//
// cargo run --release --example css_recovery -- [out_dir]

use std::path::{Path, PathBuf};

use spatial_css::admm::{css_recover, AdmmConfig};
use spatial_css::eval::{relative_errors, DEFAULT_FLOOR};
use spatial_css::io::{write_diagnostics_csv, write_field_csv, write_text};
use spatial_css::partition::patched_estimate;
use spatial_css::pipeline::Instance;
use spatial_css::plot::heatmap_svg;
use spatial_css::synth::SynthSpec;

pub fn run_example(out: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let inst = Instance::synthetic(&SynthSpec::benchmark(4), 15)?;
    let truth = inst.truth.as_ref().expect("synthetic");
    let config = AdmmConfig::default();
    let r = css_recover(&inst.partition, &inst.z, None, &config)?;

    println!(
        "{} iterations, converged: {}, residuals {:.2e} / {:.2e}",
        r.iterations, r.converged, r.primal_residual, r.dual_residual
    );
    println!("worst patch-sum violation {:.1e}, smallest value {:.1e}", r.constraint_max_violation, r.min_value);
    for rec in r.history.iter().step_by(50) {
        println!("  iter {:4}  objective {:10.5}  primal {:.2e}", rec.iter, rec.objective, rec.primal_residual);
    }
    let pe = patched_estimate(&inst.partition, &inst.z)?;
    println!(
        "MRE: patched {:.3}, css {:.3}",
        relative_errors(&pe, truth, DEFAULT_FLOOR)?.mre,
        relative_errors(&r.estimate, truth, DEFAULT_FLOOR)?.mre
    );

    write_field_csv(out.join("estimate_css.csv"), &r.estimate)?;
    write_diagnostics_csv(out.join("diagnostics_css.csv"), &r.history, 1)?;
    write_text(out.join("truth.svg"), &heatmap_svg(truth, "truth"))?;
    write_text(out.join("patched.svg"), &heatmap_svg(&pe, "patched estimate"))?;
    write_text(out.join("css.svg"), &heatmap_svg(&r.estimate, "CSS"))?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("css_recovery"));
    run_example(&out)
}
