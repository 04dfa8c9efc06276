//! Synthetic ground truth: Gaussian bumps over a constant background, an
//! optional linear covariate effect and truncated Gaussian noise.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{CovariateMatrix, GridDomain, SpatialField};
use crate::error::{Error, Result};
use crate::partition::seeded_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Inclusive range for the number of bumps.
    pub bumps: (usize, usize),
    /// Peak height range.
    pub amplitude: (f64, f64),
    /// Standard deviation range, in cells.
    pub width: (f64, f64),
    /// Constant level added everywhere.
    pub background: f64,
    pub covariates: Option<CovariateSpec>,
    /// Standard deviation of additive noise; the sum is truncated at 0.
    pub noise: f64,
    pub seed: u64,
}

/// Covariate columns: an optional constant column followed by `districts`
/// indicator columns, each equal to 1 on the union of `rects_per_column`
/// random rectangles and 0 elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub intercept: bool,
    pub districts: usize,
    pub rects_per_column: usize,
    /// Inclusive range of rectangle side lengths, in cells.
    pub rect_side: (usize, usize),
    /// Effect of each column; its length is the column count.
    pub beta: Vec<f64>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_rows: 20,
            n_cols: 20,
            bumps: (3, 5),
            amplitude: (1.0, 5.0),
            width: (3.0, 6.0),
            background: 0.0,
            covariates: None,
            noise: 0.0,
            seed: 0,
        }
    }
}

impl CovariateSpec {
    /// Two district columns with effects 3 and 2.
    pub fn districts() -> Self {
        Self {
            intercept: false,
            districts: 2,
            rects_per_column: 3,
            rect_side: (3, 8),
            beta: vec![3.0, 2.0],
        }
    }

    pub fn n_columns(&self) -> usize {
        self.districts + usize::from(self.intercept)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub x: f64,
    pub y: f64,
    pub amplitude: f64,
    pub width: f64,
}

#[derive(Debug, Clone)]
pub struct SynthInstance {
    pub field: SpatialField,
    pub covariates: Option<CovariateMatrix>,
    pub bumps: Vec<Bump>,
}

impl SynthSpec {
    /// The 20 x 20 benchmark: 3-5 bumps over a background of 1, so that
    /// every cell has a truth value relative errors can be taken against.
    pub fn benchmark(seed: u64) -> Self {
        Self {
            background: 1.0,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let range_ok = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && a <= b;
        if self.n_rows == 0 || self.n_cols == 0 {
            return Err(Error::Config("grid must have at least one cell".into()));
        }
        if self.bumps.0 > self.bumps.1 {
            return Err(Error::Config("bump count range is reversed".into()));
        }
        if !range_ok(self.amplitude) || self.amplitude.0 < 0.0 {
            return Err(Error::Config("amplitudes must be a nonnegative range".into()));
        }
        if !range_ok(self.width) || self.width.0 <= 0.0 {
            return Err(Error::Config("widths must be a positive range".into()));
        }
        if !(self.background >= 0.0 && self.background.is_finite()) {
            return Err(Error::Config("background must be nonnegative".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("noise level must be nonnegative".into()));
        }
        if let Some(c) = &self.covariates {
            if c.beta.len() != c.n_columns() {
                return Err(Error::Config(format!(
                    "{} covariate effects for {} columns",
                    c.beta.len(),
                    c.n_columns()
                )));
            }
            if c.n_columns() == 0 {
                return Err(Error::Config("covariate spec has no columns".into()));
            }
            if c.districts > 0 && (c.rects_per_column == 0 || c.rect_side.0 == 0 || c.rect_side.0 > c.rect_side.1)
            {
                return Err(Error::Config("district rectangles are misspecified".into()));
            }
            if c.beta.iter().any(|b| !b.is_finite()) {
                return Err(Error::Config("covariate effects must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Deterministic per seed. Draw order: bump count, then each bump's center,
/// amplitude and width, then district rectangles, then noise.
pub fn generate_field(spec: &SynthSpec) -> Result<SynthInstance> {
    spec.validate()?;
    let domain = Arc::new(GridDomain::full(spec.n_rows, spec.n_cols)?);
    let mut rng = seeded_rng(spec.seed);
    let n_bumps = rng.random_range(spec.bumps.0..=spec.bumps.1);
    let (ox, oy) = domain.origin();
    let h = domain.cell_size();
    let uniform = |rng: &mut rand_chacha::ChaCha8Rng, (a, b): (f64, f64)| {
        if a == b {
            a
        } else {
            rng.random_range(a..b)
        }
    };
    let bumps: Vec<Bump> = (0..n_bumps)
        .map(|_| Bump {
            x: ox + uniform(&mut rng, (0.0, spec.n_cols as f64)) * h,
            y: oy + uniform(&mut rng, (0.0, spec.n_rows as f64)) * h,
            amplitude: uniform(&mut rng, spec.amplitude),
            width: uniform(&mut rng, spec.width) * h,
        })
        .collect();

    let mut values: Vec<f64> = domain
        .centers()
        .iter()
        .map(|&(x, y)| {
            spec.background
                + bumps
                    .iter()
                    .map(|b| {
                        let d2 = (x - b.x).powi(2) + (y - b.y).powi(2);
                        b.amplitude * (-d2 / (2.0 * b.width * b.width)).exp()
                    })
                    .sum::<f64>()
        })
        .collect();

    let covariates = match &spec.covariates {
        None => None,
        Some(c) => {
            let w = district_covariates(&domain, c, &mut rng)?;
            for (v, e) in values.iter_mut().zip(w.apply(&c.beta)) {
                *v += e;
            }
            Some(w)
        }
    };

    if spec.noise > 0.0 {
        let normal = Normal::new(0.0, spec.noise).map_err(|e| Error::Config(e.to_string()))?;
        for v in values.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    for v in values.iter_mut() {
        *v = v.max(0.0);
    }
    Ok(SynthInstance {
        field: SpatialField::new(domain, values)?,
        covariates,
        bumps,
    })
}

fn district_covariates<R: Rng>(
    domain: &Arc<GridDomain>,
    spec: &CovariateSpec,
    rng: &mut R,
) -> Result<CovariateMatrix> {
    let n = domain.len();
    let mut columns = Vec::new();
    if spec.intercept {
        columns.push(("intercept".to_string(), vec![1.0; n]));
    }
    let (nr, nc) = (domain.n_rows(), domain.n_cols());
    for k in 0..spec.districts {
        let mut col = vec![0.0; n];
        for _ in 0..spec.rects_per_column {
            let hgt = rng.random_range(spec.rect_side.0..=spec.rect_side.1).min(nr);
            let wid = rng.random_range(spec.rect_side.0..=spec.rect_side.1).min(nc);
            let r0 = rng.random_range(0..=nr - hgt);
            let c0 = rng.random_range(0..=nc - wid);
            for r in r0..r0 + hgt {
                for c in c0..c0 + wid {
                    if let Some(j) = domain.index_of(r, c) {
                        col[j] = 1.0;
                    }
                }
            }
        }
        columns.push((format!("district_{}", k + 1), col));
    }
    CovariateMatrix::from_columns(domain.clone(), columns)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_spec_gives_zero_field() {
        let spec = SynthSpec {
            bumps: (0, 0),
            ..Default::default()
        };
        let s = generate_field(&spec).unwrap();
        assert!(s.field.values().iter().all(|&v| v == 0.0));
        assert!(s.covariates.is_none());
    }

    #[test]
    fn single_bump_peaks_in_its_cell() {
        for seed in 0..20 {
            let spec = SynthSpec {
                bumps: (1, 1),
                background: 0.0,
                seed,
                ..Default::default()
            };
            let s = generate_field(&spec).unwrap();
            let b = s.bumps[0];
            let v = s.field.values();
            let argmax = (0..v.len()).max_by(|&i, &j| v[i].total_cmp(&v[j])).unwrap();
            assert_eq!(Some(argmax), s.field.domain().locate(b.x, b.y));
        }
    }

    #[test]
    fn constant_covariate_shifts_the_field() {
        let base = SynthSpec::benchmark(4);
        let spec = SynthSpec {
            covariates: Some(CovariateSpec {
                intercept: true,
                districts: 1,
                rects_per_column: 2,
                rect_side: (2, 4),
                beta: vec![2.0, 0.0],
            }),
            ..base.clone()
        };
        let plain = generate_field(&base).unwrap();
        let with = generate_field(&spec).unwrap();
        assert_eq!(plain.bumps, with.bumps);
        for (a, b) in with.field.values().iter().zip(plain.field.values()) {
            assert!((a - b - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_and_nonnegative() {
        let spec = SynthSpec {
            covariates: Some(CovariateSpec::districts()),
            noise: 2.0,
            seed: 9,
            ..Default::default()
        };
        let a = generate_field(&spec).unwrap();
        let b = generate_field(&spec).unwrap();
        assert_eq!(a.field, b.field);
        assert_eq!(a.covariates, b.covariates);
        assert!(a.field.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            SynthSpec { bumps: (3, 1), ..Default::default() },
            SynthSpec { width: (0.0, 1.0), ..Default::default() },
            SynthSpec { noise: -1.0, ..Default::default() },
            SynthSpec {
                covariates: Some(CovariateSpec { beta: vec![1.0], ..CovariateSpec::districts() }),
                ..Default::default()
            },
        ];
        for s in bad {
            assert!(matches!(generate_field(&s), Err(Error::Config(_))));
        }
    }
}
