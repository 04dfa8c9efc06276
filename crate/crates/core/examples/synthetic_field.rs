// Generate a synthetic density with district covariates and save it.
//
// cargo run --example synthetic_field -- [out_dir]

use std::path::{Path, PathBuf};

use spatial_css::io::{write_covariates_csv, write_field_csv, write_text};
use spatial_css::plot::heatmap_svg;
use spatial_css::synth::{generate_field, CovariateSpec, SynthSpec};

pub fn run_example(out: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let spec = SynthSpec {
        n_rows: 30,
        n_cols: 40,
        bumps: (4, 4),
        covariates: Some(CovariateSpec::districts()),
        background: 0.5,
        noise: 0.1,
        seed: 11,
        ..Default::default()
    };
    let inst = generate_field(&spec)?;
    println!("{} cells, total mass {:.2}", inst.field.len(), inst.field.total());
    for b in &inst.bumps {
        println!("bump at ({:.1}, {:.1}) height {:.2} width {:.2}", b.x, b.y, b.amplitude, b.width);
    }
    write_field_csv(out.join("truth.csv"), &inst.field)?;
    if let Some(w) = &inst.covariates {
        write_covariates_csv(out.join("covariates.csv"), w)?;
    }
    write_text(out.join("truth.svg"), &heatmap_svg(&inst.field, "synthetic truth"))?;
    println!("wrote {}", out.display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("synthetic_field"));
    run_example(&out)
}
