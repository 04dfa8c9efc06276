// Place stations, split the grid into nearest-station patches, aggregate
// and spread each volume evenly over its patch.
//
// cargo run --example patched_estimate

use std::path::{Path, PathBuf};

use spatial_css::eval::{relative_errors, DEFAULT_FLOOR};
use spatial_css::partition::{aggregate, build_partition, patched_estimate, sample_stations};
use spatial_css::synth::{generate_field, SynthSpec};

pub fn run_example(_out: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let truth = generate_field(&SynthSpec::benchmark(2))?.field;
    let stations = sample_stations(&truth, 15, 2)?;
    let partition = build_partition(truth.domain().clone(), stations)?;
    println!("{} stations, {} cells split between tied stations", partition.m(), partition.tie_count());

    let z = aggregate(&partition, &truth)?;
    for i in 0..partition.m() {
        let (r, c) = truth.domain().cell(partition.stations().cell(i));
        println!(
            "station {i:2} at ({r:2}, {c:2}): patch area {:5.1}, volume {:7.2}",
            partition.patch_area(i),
            z.values()[i]
        );
    }
    let pe = patched_estimate(&partition, &z)?;
    println!("mass {:.3} -> {:.3}", truth.total(), pe.total());
    println!("MRE {:.3}", relative_errors(&pe, &truth, DEFAULT_FLOOR)?.mre);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    run_example(&out)
}
