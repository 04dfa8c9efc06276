// The telecom-activity workflow on generated stand-in files: activity
// records and geographic features keyed by square id, 200 and 100 sampled
// stations, smoothing weights 1 and 10, all five methods.
//
// Point `load_cdr_csv` / `load_features_csv` at real files to run it on
// actual data.
//
// cargo run --release --example cdr_pipeline -- [out_dir]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use spatial_css::admm::AdmmConfig;
use spatial_css::domain::{CovariateMatrix, GridDomain};
use spatial_css::eval::{Method, DEFAULT_FLOOR};
use spatial_css::io::{
    load_cdr_csv, load_features_csv, read_cdf_csv, read_report_csv, write_cdf_csv, write_cdr_csv,
    write_features_csv, write_report_csv, write_text, SquareGrid, FEATURE_NAMES,
};
use spatial_css::pipeline::Instance;
use spatial_css::plot::{cdf_svg, mre_bar_svg};
use spatial_css::synth::{generate_field, CovariateSpec, SynthSpec};

/// Writes `cdr.csv` and `features.csv` for a `side x side` square grid.
/// Squares in the top-left corner get no feature row.
pub fn write_stand_in_data(dir: &Path, side: usize, seed: u64) -> Result<SquareGrid, Box<dyn std::error::Error>> {
    let grid = SquareGrid { n_rows: side, n_cols: side };
    let spec = SynthSpec {
        n_rows: side,
        n_cols: side,
        bumps: (4, 6),
        background: 1.0,
        covariates: Some(CovariateSpec {
            intercept: false,
            districts: FEATURE_NAMES.len(),
            rects_per_column: 2,
            rect_side: (3, side / 3),
            beta: vec![2.0, 1.0, 0.0, 0.0, 1.5, 0.0],
        }),
        seed,
        ..Default::default()
    };
    let inst = generate_field(&spec)?;
    write_cdr_csv(dir.join("cdr.csv"), &inst.field, grid, 1_383_260_400_000, 600_000, 6)?;

    let w = inst.covariates.expect("requested");
    let mask: Vec<bool> = (0..side * side).map(|k| k / side + k % side >= 3).collect();
    let kept = Arc::new(GridDomain::new(side, side, mask)?);
    let cols = FEATURE_NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| (name.to_string(), w.column(k)))
        .collect();
    let features = CovariateMatrix::from_columns(w.domain().clone(), cols)?.restrict_to(kept)?;
    write_features_csv(dir.join("features.csv"), &features, grid)?;
    Ok(grid)
}

pub fn run_example_with(out: &Path, side: usize, station_counts: &[usize]) -> Result<(), Box<dyn std::error::Error>> {
    let grid = write_stand_in_data(out, side, 21)?;
    let features = load_features_csv(out.join("features.csv"), grid)?;
    let truth = load_cdr_csv(out.join("cdr.csv"), None, grid)?.restrict_to(features.domain().clone())?;
    println!("{} squares with features, total activity {:.1}", truth.len(), truth.total());

    for &m in station_counts {
        for lambda in [1.0, 10.0] {
            let inst = Instance::sampled(truth.clone(), Some(features.clone()), m, 7)?;
            let runs = inst.run(&Method::ALL, &AdmmConfig { lambda, ..Default::default() })?;
            let reports = inst.evaluate(&runs, DEFAULT_FLOOR)?;
            let dir = out.join(format!("stations_{m}_lambda_{lambda}"));
            write_report_csv(dir.join("report.csv"), &reports)?;
            write_cdf_csv(dir.join("cdf.csv"), &reports)?;
            let title = format!("{m} stations, lambda {lambda}");
            write_text(dir.join("mre.svg"), &mre_bar_svg(&read_report_csv(dir.join("report.csv"))?, &title))?;
            write_text(dir.join("cdf.svg"), &cdf_svg(&read_cdf_csv(dir.join("cdf.csv"))?, 1.0, &title))?;
            let line: Vec<String> = reports
                .iter()
                .map(|r| format!("{} {:.3}", r.method.expect("tagged").tag(), r.mre))
                .collect();
            println!("{title}: {}", line.join(", "));
        }
    }
    Ok(())
}

pub fn run_example(out: &Path) -> Result<(), Box<dyn std::error::Error>> {
    run_example_with(out, 16, &[40, 20])
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("cdr_pipeline"));
    std::fs::create_dir_all(&out)?;
    run_example_with(&out, 30, &[200, 100])
}
