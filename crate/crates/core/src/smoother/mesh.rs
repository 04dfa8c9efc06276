//! Structured triangulation of the active cells.

use std::collections::HashMap;
use std::sync::Arc;

use crate::domain::GridDomain;
use crate::error::{Error, Result};

/// Which diagonal splits each cell into two triangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagonal {
    /// Lower-left to upper-right corner.
    #[default]
    Forward,
    /// Lower-right to upper-left corner.
    Backward,
}

#[derive(Debug, Clone)]
pub struct Triangulation {
    domain: Arc<GridDomain>,
    vertices: Vec<(f64, f64)>,
    triangles: Vec<[usize; 3]>,
    // basis evaluation row for each active cell center
    cell_eval: Vec<Vec<(usize, f64)>>,
    cell_triangle: Vec<usize>,
}

/// Splits every active cell into two counter-clockwise right triangles along
/// the same diagonal. Cell corners are shared between neighbours.
pub fn triangulate(domain: &Arc<GridDomain>) -> Triangulation {
    triangulate_with(domain, Diagonal::Forward)
}

pub fn triangulate_with(domain: &Arc<GridDomain>, diagonal: Diagonal) -> Triangulation {
    let (nr, nc) = (domain.n_rows(), domain.n_cols());
    let (ox, oy) = domain.origin();
    let h = domain.cell_size();

    // Lattice corner (row, col) -> used flag. Vertices are numbered along the
    // shorter lattice side first, which keeps the assembled matrices narrow.
    let mut used = vec![false; (nr + 1) * (nc + 1)];
    let corner = |r: usize, c: usize| r * (nc + 1) + c;
    for &(r, c) in domain.cells() {
        for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            used[corner(r + dr, c + dc)] = true;
        }
    }
    let mut id = vec![usize::MAX; used.len()];
    let mut vertices = Vec::new();
    let mut visit = |r: usize, c: usize| {
        let k = corner(r, c);
        if used[k] {
            id[k] = vertices.len();
            vertices.push((ox + c as f64 * h, oy + r as f64 * h));
        }
    };
    if nc <= nr {
        for r in 0..=nr {
            for c in 0..=nc {
                visit(r, c);
            }
        }
    } else {
        for c in 0..=nc {
            for r in 0..=nr {
                visit(r, c);
            }
        }
    }

    let mut triangles = Vec::with_capacity(2 * domain.len());
    let mut cell_eval = Vec::with_capacity(domain.len());
    let mut cell_triangle = Vec::with_capacity(domain.len());
    for &(r, c) in domain.cells() {
        let v00 = id[corner(r, c)];
        let v10 = id[corner(r, c + 1)];
        let v01 = id[corner(r + 1, c)];
        let v11 = id[corner(r + 1, c + 1)];
        let t = triangles.len();
        // The center lies on the shared diagonal; it is assigned to the first
        // triangle, where it has weight 1/2 on each diagonal corner.
        match diagonal {
            Diagonal::Forward => {
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
                cell_eval.push(vec![(v00, 0.5), (v11, 0.5)]);
            }
            Diagonal::Backward => {
                triangles.push([v00, v10, v01]);
                triangles.push([v10, v11, v01]);
                cell_eval.push(vec![(v10, 0.5), (v01, 0.5)]);
            }
        }
        cell_triangle.push(t);
    }
    Triangulation {
        domain: domain.clone(),
        vertices,
        triangles,
        cell_eval,
        cell_triangle,
    }
}

impl Triangulation {
    /// Builds a triangulation from an arbitrary mesh. Each cell center is
    /// located in the lowest-index triangle containing it.
    pub fn new(
        domain: Arc<GridDomain>,
        vertices: Vec<(f64, f64)>,
        triangles: Vec<[usize; 3]>,
    ) -> Result<Self> {
        if let Some(t) = triangles.iter().position(|t| t.iter().any(|&v| v >= vertices.len())) {
            return Err(Error::InvalidValue(format!(
                "triangle {t} references a missing vertex"
            )));
        }
        let mut cell_eval = Vec::with_capacity(domain.len());
        let mut cell_triangle = Vec::with_capacity(domain.len());
        for j in 0..domain.len() {
            let p = domain.center(j);
            let hit = triangles.iter().enumerate().find_map(|(t, tri)| {
                let lam = barycentric(tri.map(|v| vertices[v]), p)?;
                lam.iter().all(|&l| l >= -1e-12).then_some((t, lam))
            });
            let Some((t, lam)) = hit else {
                return Err(Error::InvalidValue(format!(
                    "center of cell {j} is not covered by the mesh"
                )));
            };
            let row: Vec<(usize, f64)> = triangles[t]
                .iter()
                .zip(lam)
                .map(|(&v, l)| (v, l.max(0.0)))
                .filter(|&(_, l)| l > 1e-12)
                .collect();
            let s: f64 = row.iter().map(|&(_, l)| l).sum();
            cell_eval.push(row.into_iter().map(|(v, l)| (v, l / s)).collect());
            cell_triangle.push(t);
        }
        Ok(Self {
            domain,
            vertices,
            triangles,
            cell_eval,
            cell_triangle,
        })
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Basis weights `(vertex, value)` at the center of cell `j`.
    pub fn cell_eval(&self, j: usize) -> &[(usize, f64)] {
        &self.cell_eval[j]
    }

    /// Triangle holding the center of cell `j`.
    pub fn cell_triangle(&self, j: usize) -> usize {
        self.cell_triangle[j]
    }

    /// Signed area of triangle `t`; positive when counter-clockwise.
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        0.5 * ((b.0 - a.0) * (c.1 - a.1) - (c.0 - a.0) * (b.1 - a.1))
    }

    /// Edges that belong to exactly one triangle, as `(triangle, from, to)`
    /// in the triangle's counter-clockwise order.
    pub fn boundary_edges(&self) -> Vec<(usize, usize, usize)> {
        let mut count: HashMap<(usize, usize), u32> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut out = Vec::new();
        for (i, t) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                if count[&(a.min(b), a.max(b))] == 1 {
                    out.push((i, a, b));
                }
            }
        }
        out
    }
}

fn barycentric(p: [(f64, f64); 3], q: (f64, f64)) -> Option<[f64; 3]> {
    let [a, b, c] = p;
    let det = (b.0 - a.0) * (c.1 - a.1) - (c.0 - a.0) * (b.1 - a.1);
    if det.abs() < 1e-300 {
        return None;
    }
    let l1 = ((q.0 - a.0) * (c.1 - a.1) - (c.0 - a.0) * (q.1 - a.1)) / det;
    let l2 = ((b.0 - a.0) * (q.1 - a.1) - (q.0 - a.0) * (b.1 - a.1)) / det;
    Some([1.0 - l1 - l2, l1, l2])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dom(nr: usize, nc: usize, mask: Option<Vec<bool>>) -> Arc<GridDomain> {
        let mask = mask.unwrap_or_else(|| vec![true; nr * nc]);
        Arc::new(GridDomain::new(nr, nc, mask).unwrap())
    }

    #[test]
    fn counts() {
        let t = triangulate(&dom(1, 1, None));
        assert_eq!((t.n_vertices(), t.n_triangles()), (4, 2));
        let t = triangulate(&dom(2, 2, None));
        assert_eq!((t.n_vertices(), t.n_triangles()), (9, 8));
        let t = triangulate(&dom(2, 2, Some(vec![true, true, true, false])));
        assert_eq!((t.n_vertices(), t.n_triangles()), (8, 6));
    }

    #[test]
    fn orientation_is_counter_clockwise() {
        for diag in [Diagonal::Forward, Diagonal::Backward] {
            let t = triangulate_with(&dom(3, 4, None), diag);
            for i in 0..t.n_triangles() {
                assert!((t.signed_area(i) - 0.5).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn centers_evaluate_to_themselves() {
        let d = dom(3, 5, Some((0..15).map(|k| k % 4 != 1).collect()));
        for diag in [Diagonal::Forward, Diagonal::Backward] {
            let t = triangulate_with(&d, diag);
            for j in 0..d.len() {
                let row = t.cell_eval(j);
                let s: f64 = row.iter().map(|&(_, w)| w).sum();
                assert!((s - 1.0).abs() < 1e-15);
                let x: f64 = row.iter().map(|&(v, w)| w * t.vertices()[v].0).sum();
                let y: f64 = row.iter().map(|&(v, w)| w * t.vertices()[v].1).sum();
                let (cx, cy) = d.center(j);
                assert!((x - cx).abs() < 1e-14 && (y - cy).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn generic_constructor_matches_structured_lookup() {
        let d = dom(2, 3, None);
        let s = triangulate(&d);
        let g = Triangulation::new(d.clone(), s.vertices().to_vec(), s.triangles().to_vec()).unwrap();
        for j in 0..d.len() {
            assert_eq!(s.cell_triangle(j), g.cell_triangle(j));
            let mut a = s.cell_eval(j).to_vec();
            let mut b = g.cell_eval(j).to_vec();
            a.sort_by_key(|p| p.0);
            b.sort_by_key(|p| p.0);
            for (p, q) in a.iter().zip(&b) {
                assert_eq!(p.0, q.0);
                assert!((p.1 - q.1).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn uncovered_center_is_an_error() {
        let d = dom(1, 2, None);
        let v = vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)];
        assert!(Triangulation::new(d, v, vec![[0, 1, 2]]).is_err());
    }

    #[test]
    fn boundary_of_square_has_four_edges_per_side_length() {
        let t = triangulate(&dom(2, 2, None));
        assert_eq!(t.boundary_edges().len(), 8);
    }
}
