//! Euclidean projection onto the patch-sum constraints.
//!
//! Solves `min rho/2 |g|^2 + c'g  s.t.  A g * cell_area = z, g >= 0`.
//! Stations that share no cell decouple; a station alone in its component is
//! handled by closed-form water-filling. Stations linked through split cells
//! are solved together by exact dual coordinate ascent followed by an
//! active-set polish that is accepted only when it satisfies the KKT
//! conditions.

use crate::error::{Error, Result};
use crate::partition::{AggregateObservations, Partition};

const MAX_SWEEPS: usize = 20_000;

/// Water-filling for one patch with unit weights:
/// `g_j = max(0, (nu - c_j) / rho)` with `sum g = total`.
pub fn water_fill(c: &[f64], total: f64, rho: f64) -> Vec<f64> {
    if c.is_empty() {
        return Vec::new();
    }
    if total <= 0.0 {
        return vec![0.0; c.len()];
    }
    let mut s = c.to_vec();
    s.sort_by(f64::total_cmp);
    let mut acc = 0.0;
    let mut nu = 0.0;
    for k in 0..s.len() {
        acc += s[k];
        nu = (rho * total + acc) / (k + 1) as f64;
        if k + 1 == s.len() || nu <= s[k + 1] {
            break;
        }
    }
    c.iter().map(|&cj| ((nu - cj) / rho).max(0.0)).collect()
}

/// Multiplier `nu` with `sum_j a_j max(0, a_j nu + b_j) = rho * total`,
/// all `a_j > 0`, `total > 0`.
fn weighted_level(a: &[f64], b: &[f64], total: f64, rho: f64, order: &mut Vec<usize>) -> f64 {
    order.clear();
    order.extend(0..a.len());
    order.sort_by(|&i, &j| (-b[i] / a[i]).total_cmp(&(-b[j] / a[j])));
    let (mut sa, mut sb) = (0.0, 0.0);
    let mut nu = 0.0;
    for (k, &j) in order.iter().enumerate() {
        sa += a[j] * a[j];
        sb += a[j] * b[j];
        nu = (rho * total - sb) / sa;
        if k + 1 == order.len() {
            break;
        }
        let next = order[k + 1];
        if nu <= -b[next] / a[next] {
            break;
        }
    }
    nu
}

#[derive(Debug, Clone)]
enum Component {
    /// One station owning its cells outright.
    Patch { station: usize, cells: Vec<usize> },
    /// Stations linked through cells with split weights.
    Coupled {
        stations: Vec<usize>,
        cells: Vec<usize>,
    },
}

/// The station-cell coupling structure of a partition, computed once.
#[derive(Debug, Clone)]
pub struct PatchProjector {
    components: Vec<Component>,
    // row i of A as (cell, weight)
    rows: Vec<Vec<(usize, f64)>>,
    // column j of A as (station, weight)
    cols: Vec<Vec<(usize, f64)>>,
    cell_area: f64,
    n: usize,
}

impl PatchProjector {
    pub fn new(partition: &Partition) -> Self {
        let m = partition.m();
        let n = partition.n();
        let mut parent: Vec<usize> = (0..m).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for j in 0..n {
            let ws = partition.cell_weights(j);
            let r0 = find(&mut parent, ws[0].0);
            for &(i, _) in &ws[1..] {
                let r = find(&mut parent, i);
                parent[r] = r0;
            }
        }
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); m];
        for i in 0..m {
            let r = find(&mut parent, i);
            groups[r].push(i);
        }
        let mut components = Vec::new();
        for stations in groups.into_iter().filter(|g| !g.is_empty()) {
            let mut cells: Vec<usize> = stations
                .iter()
                .flat_map(|&i| partition.members(i).iter().map(|&(j, _)| j))
                .collect();
            cells.sort_unstable();
            cells.dedup();
            if stations.len() == 1 {
                components.push(Component::Patch {
                    station: stations[0],
                    cells,
                });
            } else {
                components.push(Component::Coupled { stations, cells });
            }
        }
        Self {
            components,
            rows: (0..m).map(|i| partition.members(i).to_vec()).collect(),
            cols: (0..n).map(|j| partition.cell_weights(j).to_vec()).collect(),
            cell_area: partition.domain().cell_area(),
            n,
        }
    }

    /// Number of components that need the coupled solver.
    pub fn coupled_components(&self) -> usize {
        self.components
            .iter()
            .filter(|c| matches!(c, Component::Coupled { .. }))
            .count()
    }

    /// Minimizer of `rho/2 |g|^2 + c'g` over the constraint set.
    pub fn project(&self, c: &[f64], z: &AggregateObservations, rho: f64) -> Result<Vec<f64>> {
        if c.len() != self.n || z.len() != self.rows.len() {
            return Err(Error::ShapeMismatch(format!(
                "projection expects {} cells and {} stations, got {} and {}",
                self.n,
                self.rows.len(),
                c.len(),
                z.len()
            )));
        }
        if !(rho > 0.0) {
            return Err(Error::InvalidValue(format!("rho must be positive, got {rho}")));
        }
        if let Some((i, &v)) = z.values().iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::InfeasibleVolume { station: i, volume: v });
        }
        let totals: Vec<f64> = z.values().iter().map(|v| v / self.cell_area).collect();
        let mut g = vec![0.0; self.n];
        for comp in &self.components {
            match comp {
                Component::Patch { station, cells } => {
                    let cp: Vec<f64> = cells.iter().map(|&j| c[j]).collect();
                    for (&j, v) in cells.iter().zip(water_fill(&cp, totals[*station], rho)) {
                        g[j] = v;
                    }
                }
                Component::Coupled { stations, cells } => {
                    self.project_coupled(stations, cells, c, &totals, rho, &mut g)?;
                }
            }
        }
        Ok(g)
    }

    fn project_coupled(
        &self,
        stations: &[usize],
        cells: &[usize],
        c: &[f64],
        totals: &[f64],
        rho: f64,
        g: &mut [f64],
    ) -> Result<()> {
        // A station with zero volume pins every cell it touches to zero.
        let mut pinned = vec![false; self.n];
        for &i in stations {
            if totals[i] <= 0.0 {
                for &(j, _) in &self.rows[i] {
                    pinned[j] = true;
                }
            }
        }
        let live: Vec<usize> = stations.iter().copied().filter(|&i| totals[i] > 0.0).collect();
        for &j in cells {
            g[j] = 0.0;
        }
        if live.is_empty() {
            return Ok(());
        }
        if let Some(&i) = live.iter().find(|&&i| self.rows[i].iter().all(|&(j, _)| pinned[j])) {
            return Err(Error::InvalidValue(format!(
                "station {i} has positive volume but every cell it covers is forced to zero"
            )));
        }
        let slack = |nu: &[f64], j: usize| -> f64 {
            self.cols[j].iter().map(|&(k, w)| w * nu[k]).sum::<f64>() - c[j]
        };
        let mut nu = vec![0.0; self.rows.len()];
        let mut order = Vec::new();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for _ in 0..MAX_SWEEPS {
            for &i in &live {
                a.clear();
                b.clear();
                for &(j, w) in &self.rows[i] {
                    if pinned[j] {
                        continue;
                    }
                    a.push(w);
                    b.push(slack(&nu, j) - w * nu[i]);
                }
                nu[i] = weighted_level(&a, &b, totals[i], rho, &mut order);
            }
            if self.polish(&live, cells, &pinned, c, totals, rho, &nu, g) {
                return Ok(());
            }
        }
        for &j in cells {
            g[j] = if pinned[j] { 0.0 } else { (slack(&nu, j) / rho).max(0.0) };
        }
        Ok(())
    }

    /// Solves the equality-constrained problem on the support implied by the
    /// multipliers `nu` and writes it to `g` if it satisfies the KKT
    /// conditions.
    #[allow(clippy::too_many_arguments)]
    fn polish(
        &self,
        live: &[usize],
        cells: &[usize],
        pinned: &[bool],
        c: &[f64],
        totals: &[f64],
        rho: f64,
        nu: &[f64],
        g: &mut [f64],
    ) -> bool {
        let k = live.len();
        let mut local = vec![usize::MAX; self.rows.len()];
        for (p, &i) in live.iter().enumerate() {
            local[i] = p;
        }
        let slack = |j: usize, nu: &[f64]| -> f64 {
            self.cols[j].iter().map(|&(i, w)| w * nu[i]).sum::<f64>() - c[j]
        };
        let free: Vec<usize> = cells.iter().copied().filter(|&j| !pinned[j]).collect();
        let support: Vec<usize> = free.iter().copied().filter(|&j| slack(j, nu) > 0.0).collect();
        let mut gram = vec![vec![0.0; k]; k];
        let mut rhs: Vec<f64> = live.iter().map(|&i| rho * totals[i]).collect();
        for &j in &support {
            let col = &self.cols[j];
            for &(p, wp) in col {
                let lp = local[p];
                rhs[lp] += wp * c[j];
                for &(q, wq) in col {
                    gram[lp][local[q]] += wp * wq;
                }
            }
        }
        let Some(sol) = solve_dense(gram, rhs) else {
            return false;
        };
        let mut full = vec![0.0; self.rows.len()];
        for (p, &i) in live.iter().enumerate() {
            full[i] = sol[p];
        }
        let scale = free.iter().fold(1.0_f64, |s, &j| s.max(c[j].abs()));
        let tol = 1e-12 * scale;
        let mut in_support = vec![false; self.n];
        for &j in &support {
            in_support[j] = true;
        }
        for &j in &free {
            let v = slack(j, &full);
            if in_support[j] && v < -tol || !in_support[j] && v > tol {
                return false;
            }
        }
        for &j in cells {
            g[j] = if in_support[j] {
                (slack(j, &full) / rho).max(0.0)
            } else {
                0.0
            };
        }
        true
    }
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0_f64, |s, v| s.max(v.abs()));
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if !(a[p][k].abs() > 1e-13 * scale) {
            return None;
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let l = a[i][k] / a[k][k];
            if l != 0.0 {
                for j in k..n {
                    a[i][j] -= l * a[k][j];
                }
                b[i] -= l * b[k];
            }
        }
    }
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * b[j]).sum();
        b[k] = (b[k] - s) / a[k][k];
    }
    Some(b)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::domain::GridDomain;
    use crate::partition::{build_partition, StationSet};

    fn obs(z: &[f64]) -> AggregateObservations {
        AggregateObservations::new(z.to_vec()).unwrap()
    }

    #[test]
    fn water_fill_examples() {
        // c = alpha - rho f
        assert_eq!(water_fill(&[-1.0, -1.0, -1.0], 6.0, 1.0), vec![2.0, 2.0, 2.0]);
        assert_eq!(water_fill(&[17.0], 5.0, 3.0), vec![5.0]);
        let g = water_fill(&[-4.0, -2.0, 0.0], 3.0, 1.0);
        assert_eq!(g, vec![2.5, 0.5, 0.0]);
        assert_eq!(water_fill(&[1.0, 2.0], 0.0, 1.0), vec![0.0, 0.0]);
    }

    fn line_partition(n: usize, stations: Vec<usize>) -> Partition {
        let d = Arc::new(GridDomain::full(1, n).unwrap());
        let st = StationSet::new(&d, stations).unwrap();
        build_partition(d, st).unwrap()
    }

    /// Exhaustive search over supports for tiny instances.
    fn brute_force(p: &Partition, c: &[f64], z: &[f64], rho: f64) -> Vec<f64> {
        let n = p.n();
        let m = p.m();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 1u32..(1 << n) {
            let s: Vec<usize> = (0..n).filter(|j| mask >> j & 1 == 1).collect();
            let a = |i: usize, j: usize| {
                p.cell_weights(j).iter().find(|w| w.0 == i).map_or(0.0, |w| w.1)
            };
            let gram: Vec<Vec<f64>> = (0..m)
                .map(|i| (0..m).map(|k| s.iter().map(|&j| a(i, j) * a(k, j)).sum()).collect())
                .collect();
            let rhs: Vec<f64> = (0..m)
                .map(|i| rho * z[i] + s.iter().map(|&j| a(i, j) * c[j]).sum::<f64>())
                .collect();
            let Some(nu) = solve_dense(gram, rhs) else { continue };
            let mut g = vec![0.0; n];
            for &j in &s {
                g[j] = ((0..m).map(|i| a(i, j) * nu[i]).sum::<f64>() - c[j]) / rho;
            }
            if g.iter().any(|&v| v < -1e-12) {
                continue;
            }
            let ok = (0..m).all(|i| ((0..n).map(|j| a(i, j) * g[j]).sum::<f64>() - z[i]).abs() < 1e-9);
            if !ok {
                continue;
            }
            let obj: f64 = g.iter().zip(c).map(|(g, c)| 0.5 * rho * g * g + c * g).sum();
            if best.as_ref().is_none_or(|b| obj < b.0) {
                best = Some((obj, g));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn coupled_components_match_exhaustive_search() {
        let p = line_partition(7, vec![0, 2, 4, 6]);
        let proj = PatchProjector::new(&p);
        assert_eq!(proj.coupled_components(), 1);
        let cases: Vec<(Vec<f64>, Vec<f64>, f64)> = vec![
            (vec![0.0; 7], vec![1.0, 2.0, 3.0, 4.0], 1.0),
            (vec![-3.0, 1.0, -0.5, 2.0, 0.0, -7.0, 1.5], vec![2.0, 0.5, 1.0, 6.0], 2.0),
            (vec![5.0, -5.0, 5.0, -5.0, 5.0, -5.0, 5.0], vec![0.1, 3.0, 0.2, 0.3], 0.5),
            (vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0], vec![0.0, 1.0, 0.0, 2.0], 1.0),
        ];
        for (c, z, rho) in cases {
            let g = proj.project(&c, &obs(&z), rho).unwrap();
            let want = brute_force(&p, &c, &z, rho);
            for (a, b) in g.iter().zip(&want) {
                assert!((a - b).abs() < 1e-9, "{g:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn constraint_is_met_with_cell_area() {
        let d = Arc::new(GridDomain::full(3, 3).unwrap().with_cell_area(2.5).unwrap());
        let st = StationSet::new(&d, vec![0, 8]).unwrap();
        let p = build_partition(d, st).unwrap();
        assert!(!p.is_binary());
        let z = obs(&[10.0, 4.0]);
        let c: Vec<f64> = (0..9).map(|j| (j as f64 * 1.3).cos()).collect();
        let g = PatchProjector::new(&p).project(&c, &z, 1.0).unwrap();
        assert!(g.iter().all(|&v| v >= 0.0));
        assert!(p.constraint_violation(&g, &z) < 1e-12);
    }

    #[test]
    fn bad_inputs() {
        let p = line_partition(3, vec![0, 2]);
        let proj = PatchProjector::new(&p);
        assert!(matches!(proj.project(&[0.0; 2], &obs(&[1.0, 1.0]), 1.0), Err(Error::ShapeMismatch(_))));
        assert!(proj.project(&[0.0; 3], &obs(&[1.0, 1.0]), 0.0).is_err());
    }
}
