// All five methods over several seeded instances with known covariate
// effects; writes the MRE table, error CDFs and both charts.
//
// cargo run --release --example compare_methods -- [out_dir] [seeds]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use spatial_css::admm::AdmmConfig;
use spatial_css::eval::{EvalReport, Method, DEFAULT_FLOOR};
use spatial_css::io::{read_cdf_csv, read_report_csv, write_cdf_csv, write_report_csv, write_text};
use spatial_css::pipeline::{parallel_map, Instance};
use spatial_css::plot::{cdf_svg, mre_bar_svg};
use spatial_css::synth::{CovariateSpec, SynthSpec};

pub fn run_example_with(out: &Path, seeds: u64) -> Result<(), Box<dyn std::error::Error>> {
    let config = AdmmConfig { max_iter: 1000, ..Default::default() };
    let seeds: Vec<u64> = (0..seeds).collect();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let per_seed = parallel_map(&seeds, threads, |&seed| -> spatial_css::error::Result<Vec<EvalReport>> {
        let spec = SynthSpec { covariates: Some(CovariateSpec::districts()), ..SynthSpec::benchmark(seed) };
        let inst = Instance::synthetic(&spec, 15)?;
        let runs = inst.run(&Method::ALL, &config)?;
        inst.evaluate(&runs, DEFAULT_FLOOR)
    });
    let mut reports = Vec::new();
    for r in per_seed {
        reports.extend(r?);
    }

    let mut mean: BTreeMap<Method, f64> = BTreeMap::new();
    for r in &reports {
        *mean.entry(r.method.expect("tagged")).or_default() += r.mre / seeds.len() as f64;
    }
    for (m, v) in &mean {
        println!("{:<13} {v:.3}", m.tag());
    }

    write_report_csv(out.join("report.csv"), &reports)?;
    write_cdf_csv(out.join("cdf.csv"), &reports)?;
    write_text(out.join("mre.svg"), &mre_bar_svg(&read_report_csv(out.join("report.csv"))?, "mean relative error"))?;
    write_text(out.join("cdf.svg"), &cdf_svg(&read_cdf_csv(out.join("cdf.csv"))?, 1.0, "relative error CDF"))?;
    println!("wrote {}", out.display());
    Ok(())
}

pub fn run_example(out: &Path) -> Result<(), Box<dyn std::error::Error>> {
    run_example_with(out, 3)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("compare_methods"));
    let seeds = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10);
    run_example_with(&out, seeds)
}
