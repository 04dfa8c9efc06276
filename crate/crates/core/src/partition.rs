//! Station placement, nearest-station subregions and the aggregation operator.
//!
//! A [`Partition`] stores, for every active cell, the stations it reports to
//! and with which weight. Cells strictly nearest to one station report to it
//! with weight 1; a cell equidistant from `k` nearest stations reports to each
//! with weight `1/k`. Read column-wise this is the `m x n` aggregation matrix
//! `A`, which is column-stochastic by construction.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{same_domain, GridDomain, SpatialField};
use crate::error::{Error, Result};

/// Absolute tolerance on squared center distances when detecting ties.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Name of the generator used for every seeded draw in the crate.
pub const RNG_NAME: &str =
    "ChaCha8Rng (rand_chacha 0.9, seed_from_u64; synthesis on stream 0, station sampling on stream 1)";

/// Stream used by [`sample_stations`], so one seed can drive both synthesis
/// and sampling without reusing draws.
pub const STATION_STREAM: u64 = 1;

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Distinct active cells hosting the stations, in station-id order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StationSet {
    cells: Vec<usize>,
}

impl StationSet {
    pub fn new(domain: &GridDomain, cells: Vec<usize>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::InvalidValue("station set is empty".into()));
        }
        if cells.len() > domain.len() {
            return Err(Error::InvalidValue(format!(
                "{} stations exceed {} active cells",
                cells.len(),
                domain.len()
            )));
        }
        let mut seen = vec![false; domain.len()];
        for &c in &cells {
            if c >= domain.len() {
                return Err(Error::InvalidValue(format!(
                    "station cell {c} is not an active cell"
                )));
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(Error::InvalidValue(format!("station cell {c} listed twice")));
            }
        }
        Ok(Self { cells })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn cell(&self, station: usize) -> usize {
        self.cells[station]
    }
}

/// Draws `m` distinct stations with probability proportional to the field,
/// renormalizing over the remaining cells after each draw.
pub fn sample_stations(field: &SpatialField, m: usize, seed: u64) -> Result<StationSet> {
    let mut rng = seeded_rng(seed);
    rng.set_stream(STATION_STREAM);
    sample_stations_with(field, m, &mut rng)
}

pub fn sample_stations_with<R: Rng + ?Sized>(
    field: &SpatialField,
    m: usize,
    rng: &mut R,
) -> Result<StationSet> {
    field.require_nonnegative()?;
    let mut weights: Vec<f64> = field.values().to_vec();
    let available = weights.iter().filter(|&&w| w > 0.0).count();
    if available == 0 {
        return Err(Error::DegenerateField);
    }
    if m == 0 || m > available {
        return Err(Error::InsufficientSupport {
            requested: m,
            available,
        });
    }
    let mut picked = Vec::with_capacity(m);
    for _ in 0..m {
        let total: f64 = weights.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut choice = None;
        for (j, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            choice = Some(j);
            if target < acc {
                break;
            }
        }
        // `choice` is the last positive cell when rounding leaves target >= acc.
        let j = choice.expect("positive mass remains");
        weights[j] = 0.0;
        picked.push(j);
    }
    StationSet::new(field.domain(), picked)
}

/// How equidistant cells were assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieHandling {
    /// Weight `1/k` to each of `k` nearest stations.
    Fractional,
    /// Whole cell to the lowest-index nearest station.
    LowestIndex,
}

#[derive(Debug, Clone)]
pub struct Partition {
    domain: Arc<GridDomain>,
    stations: StationSet,
    // per cell: (station, weight)
    cell_weights: Vec<Vec<(usize, f64)>>,
    // per station: (cell, weight)
    members: Vec<Vec<(usize, f64)>>,
    tie_handling: TieHandling,
}

/// Assigns every active cell to its nearest station(s) by Euclidean distance
/// between cell centers, splitting exact ties evenly.
pub fn build_partition(domain: Arc<GridDomain>, stations: StationSet) -> Result<Partition> {
    if stations.cells().iter().any(|&c| c >= domain.len()) {
        return Err(Error::InvalidValue("station outside domain".into()));
    }
    let centers = domain.centers();
    let sites: Vec<(f64, f64)> = stations.cells().iter().map(|&c| centers[c]).collect();
    let mut cell_weights = Vec::with_capacity(domain.len());
    let mut nearest = Vec::new();
    for &(x, y) in &centers {
        let d2: Vec<f64> = sites
            .iter()
            .map(|&(sx, sy)| (x - sx).powi(2) + (y - sy).powi(2))
            .collect();
        let best = d2.iter().copied().fold(f64::INFINITY, f64::min);
        nearest.clear();
        nearest.extend((0..sites.len()).filter(|&i| d2[i] <= best + TIE_TOLERANCE));
        let w = 1.0 / nearest.len() as f64;
        cell_weights.push(nearest.iter().map(|&i| (i, w)).collect());
    }
    Ok(Partition::from_cell_weights(
        domain,
        stations,
        cell_weights,
        TieHandling::Fractional,
    ))
}

impl Partition {
    /// Builds a partition from explicit per-cell `(station, weight)` lists.
    pub fn from_weights(
        domain: Arc<GridDomain>,
        stations: StationSet,
        cell_weights: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self> {
        if cell_weights.len() != domain.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} weight lists for {} cells",
                cell_weights.len(),
                domain.len()
            )));
        }
        let mut binary = true;
        for (j, ws) in cell_weights.iter().enumerate() {
            let mut sum = 0.0;
            for &(i, w) in ws {
                if i >= stations.len() || !(w > 0.0) || !w.is_finite() {
                    return Err(Error::InvalidValue(format!(
                        "cell {j}: bad assignment ({i}, {w})"
                    )));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidValue(format!(
                    "cell {j}: weights sum to {sum}"
                )));
            }
            binary &= ws.len() == 1;
        }
        let tie = if binary {
            TieHandling::LowestIndex
        } else {
            TieHandling::Fractional
        };
        let p = Self::from_cell_weights(domain, stations, cell_weights, tie);
        if let Some(i) = (0..p.m()).find(|&i| p.members[i].is_empty()) {
            return Err(Error::InvalidValue(format!("station {i} has an empty patch")));
        }
        Ok(p)
    }

    fn from_cell_weights(
        domain: Arc<GridDomain>,
        stations: StationSet,
        cell_weights: Vec<Vec<(usize, f64)>>,
        tie_handling: TieHandling,
    ) -> Self {
        let mut members = vec![Vec::new(); stations.len()];
        for (j, ws) in cell_weights.iter().enumerate() {
            for &(i, w) in ws {
                members[i].push((j, w));
            }
        }
        Self {
            domain,
            stations,
            cell_weights,
            members,
            tie_handling,
        }
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn stations(&self) -> &StationSet {
        &self.stations
    }

    /// Number of stations `m`.
    pub fn m(&self) -> usize {
        self.stations.len()
    }

    /// Number of active cells `n`.
    pub fn n(&self) -> usize {
        self.domain.len()
    }

    pub fn tie_handling(&self) -> TieHandling {
        self.tie_handling
    }

    /// `(station, weight)` pairs of cell `j`; weights sum to 1.
    pub fn cell_weights(&self, j: usize) -> &[(usize, f64)] {
        &self.cell_weights[j]
    }

    /// `(cell, weight)` pairs of station `i`, i.e. row `i` of `A`.
    pub fn members(&self, i: usize) -> &[(usize, f64)] {
        &self.members[i]
    }

    /// True when no cell is shared between stations.
    pub fn is_binary(&self) -> bool {
        self.cell_weights.iter().all(|w| w.len() == 1)
    }

    /// Number of cells with more than one nearest station.
    pub fn tie_count(&self) -> usize {
        self.cell_weights.iter().filter(|w| w.len() > 1).count()
    }

    /// Area of subregion `i`: `sum_j A_ij * cell_area`.
    pub fn patch_area(&self, i: usize) -> f64 {
        self.patch_weight(i) * self.domain.cell_area()
    }

    /// `sum_j A_ij` (cell count for binary rows).
    pub fn patch_weight(&self, i: usize) -> f64 {
        self.members[i].iter().map(|&(_, w)| w).sum()
    }

    /// The same partition with every tie given wholly to the lowest-index
    /// nearest station.
    pub fn binarized(&self) -> Partition {
        let weights = self
            .cell_weights
            .iter()
            .map(|ws| {
                let i = ws.iter().map(|&(i, _)| i).min().expect("cell has a station");
                vec![(i, 1.0)]
            })
            .collect();
        Partition::from_cell_weights(
            self.domain.clone(),
            self.stations.clone(),
            weights,
            TieHandling::LowestIndex,
        )
    }

    /// `A v` (no area factor).
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n());
        self.members
            .iter()
            .map(|row| row.iter().map(|&(j, w)| w * v[j]).sum())
            .collect()
    }

    /// `A^T u`.
    pub fn apply_transpose(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.m());
        self.cell_weights
            .iter()
            .map(|ws| ws.iter().map(|&(i, w)| w * u[i]).sum())
            .collect()
    }

    /// Largest `|A v * cell_area - z|_inf / max(|z|_inf, 1)`.
    pub fn constraint_violation(&self, v: &[f64], z: &AggregateObservations) -> f64 {
        let area = self.domain.cell_area();
        let scale = z.values().iter().fold(1.0_f64, |a, &b| a.max(b.abs()));
        self.apply(v)
            .iter()
            .zip(z.values())
            .map(|(a, b)| (a * area - b).abs())
            .fold(0.0, f64::max)
            / scale
    }
}

/// Observed volume per station.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateObservations {
    volumes: Vec<f64>,
}

impl AggregateObservations {
    pub fn new(volumes: Vec<f64>) -> Result<Self> {
        for (i, &v) in volumes.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidValue(format!(
                    "volume of station {i} is not finite"
                )));
            }
            if v < 0.0 {
                return Err(Error::InfeasibleVolume {
                    station: i,
                    volume: v,
                });
            }
        }
        Ok(Self { volumes })
    }

    pub fn values(&self) -> &[f64] {
        &self.volumes
    }

    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.volumes.iter().sum()
    }
}

/// `z = A f * cell_area`.
pub fn aggregate(partition: &Partition, field: &SpatialField) -> Result<AggregateObservations> {
    same_domain(partition.domain(), field.domain())?;
    field.require_nonnegative()?;
    let area = partition.domain().cell_area();
    let z = partition
        .apply(field.values())
        .into_iter()
        .map(|v| v * area)
        .collect();
    AggregateObservations::new(z)
}

/// Piecewise-constant estimate: every station's volume spread uniformly over
/// its subregion, `f_j = sum_i A_ij z_i / |Omega_i|`.
pub fn patched_estimate(partition: &Partition, z: &AggregateObservations) -> Result<SpatialField> {
    if z.len() != partition.m() {
        return Err(Error::ShapeMismatch(format!(
            "{} volumes for {} stations",
            z.len(),
            partition.m()
        )));
    }
    let levels: Vec<f64> = (0..partition.m())
        .map(|i| z.values()[i] / partition.patch_area(i))
        .collect();
    SpatialField::new(partition.domain().clone(), partition.apply_transpose(&levels))
}
