// The constrained step on its own: project a vector onto nonnegative
// fields with given patch sums.
//
// cargo run --example patch_projection

use std::path::{Path, PathBuf};
use std::sync::Arc;

use spatial_css::domain::GridDomain;
use spatial_css::partition::{build_partition, AggregateObservations, StationSet};
use spatial_css::projection::{water_fill, PatchProjector};

pub fn run_example(_out: &Path) -> Result<(), Box<dyn std::error::Error>> {
    // One patch: minimise rho/2 |g|^2 + c'g with sum g = 1, g >= 0.
    let g = water_fill(&[0.0, 1.0, 3.0], 1.0, 1.0);
    println!("water-fill {g:?}");

    // A 1 x 5 strip with stations at both ends; the middle cell is shared.
    let domain = Arc::new(GridDomain::full(1, 5)?);
    let partition = build_partition(domain.clone(), StationSet::new(&domain, vec![0, 4])?)?;
    println!("{} tied cell(s)", partition.tie_count());
    let projector = PatchProjector::new(&partition);
    let z = AggregateObservations::new(vec![3.0, 1.0])?;
    let c = [-1.0, 0.5, 0.0, 2.0, -0.5];
    let g = projector.project(&c, &z, 1.0)?;
    println!("projection {:?}", g.iter().map(|v| (v * 1e6).round() / 1e6).collect::<Vec<_>>());
    println!("patch sums {:?}, violation {:.1e}", partition.apply(&g), partition.constraint_violation(&g, &z));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    run_example(&out)
}
