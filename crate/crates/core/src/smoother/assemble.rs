//! Linear finite-element matrices on a [`Triangulation`].

use super::mesh::Triangulation;
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

/// Triangles smaller than this are rejected.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Discretization of the Laplacian inside the roughness penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPenalty {
    /// `L = K - B` where `B` holds the boundary flux of the normal
    /// derivative. Affine functions have zero penalty.
    #[default]
    FreeBoundary,
    /// `L = K`, the weak Laplacian with zero normal flux imposed.
    Neumann,
}

#[derive(Debug, Clone)]
pub struct FemSystem {
    tri: Triangulation,
    mass: CsrMatrix,
    stiffness: CsrMatrix,
    boundary: CsrMatrix,
    penalty: CsrMatrix,
    psi: CsrMatrix,
    kind: BoundaryPenalty,
}

/// Area and basis gradients of a triangle.
fn geometry(p: [(f64, f64); 3]) -> (f64, [(f64, f64); 3]) {
    let [(x0, y0), (x1, y1), (x2, y2)] = p;
    let area = 0.5 * ((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0));
    let s = 1.0 / (2.0 * area);
    let grads = [
        ((y1 - y2) * s, (x2 - x1) * s),
        ((y2 - y0) * s, (x0 - x2) * s),
        ((y0 - y1) * s, (x1 - x0) * s),
    ];
    (area, grads)
}

/// `int psi_a psi_b` over one triangle.
pub fn element_mass(p: [(f64, f64); 3]) -> [[f64; 3]; 3] {
    let (area, _) = geometry(p);
    let a = area.abs() / 12.0;
    let mut m = [[a; 3]; 3];
    for (k, row) in m.iter_mut().enumerate() {
        row[k] = 2.0 * a;
    }
    m
}

/// `int grad psi_a . grad psi_b` over one triangle.
pub fn element_stiffness(p: [(f64, f64); 3]) -> [[f64; 3]; 3] {
    let (area, g) = geometry(p);
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = area.abs() * (g[a].0 * g[b].0 + g[a].1 * g[b].1);
        }
    }
    k
}

pub fn assemble(tri: Triangulation) -> Result<FemSystem> {
    assemble_with(tri, BoundaryPenalty::default())
}

pub fn assemble_with(tri: Triangulation, kind: BoundaryPenalty) -> Result<FemSystem> {
    let nv = tri.n_vertices();
    let mut m = Vec::with_capacity(9 * tri.n_triangles());
    let mut k = Vec::with_capacity(9 * tri.n_triangles());
    for (t, ids) in tri.triangles().iter().enumerate() {
        let p = ids.map(|v| tri.vertices()[v]);
        let area = tri.signed_area(t);
        if !(area >= MIN_TRIANGLE_AREA) {
            return Err(Error::DegenerateTriangle { index: t, area });
        }
        let me = element_mass(p);
        let ke = element_stiffness(p);
        for a in 0..3 {
            for b in 0..3 {
                m.push((ids[a], ids[b], me[a][b]));
                k.push((ids[a], ids[b], ke[a][b]));
            }
        }
    }

    // For every boundary edge e of triangle T with outward normal nu:
    // B[s, t] += |e|/2 * (nu . grad psi_t), s an endpoint of e, t a vertex of T.
    let mut b = Vec::new();
    for (t, from, to) in tri.boundary_edges() {
        let ids = tri.triangles()[t];
        let (_, g) = geometry(ids.map(|v| tri.vertices()[v]));
        let (p, q) = (tri.vertices()[from], tri.vertices()[to]);
        let (ex, ey) = (q.0 - p.0, q.1 - p.1);
        let len = ex.hypot(ey);
        let nu = (ey / len, -ex / len);
        for s in [from, to] {
            for (k, &v) in ids.iter().enumerate() {
                b.push((s, v, 0.5 * len * (nu.0 * g[k].0 + nu.1 * g[k].1)));
            }
        }
    }

    let mass = CsrMatrix::from_triplets(nv, nv, m);
    let stiffness = CsrMatrix::from_triplets(nv, nv, k.clone());
    let boundary = CsrMatrix::from_triplets(nv, nv, b.clone());
    let penalty = match kind {
        BoundaryPenalty::FreeBoundary => {
            k.extend(b.into_iter().map(|(r, c, v)| (r, c, -v)));
            CsrMatrix::from_triplets(nv, nv, k)
        }
        BoundaryPenalty::Neumann => stiffness.clone(),
    };
    let n = tri.domain().len();
    let psi = CsrMatrix::from_triplets(
        n,
        nv,
        (0..n)
            .flat_map(|j| tri.cell_eval(j).iter().map(move |&(v, w)| (j, v, w)))
            .collect(),
    );
    Ok(FemSystem {
        tri,
        mass,
        stiffness,
        boundary,
        penalty,
        psi,
        kind,
    })
}

impl FemSystem {
    pub fn triangulation(&self) -> &Triangulation {
        &self.tri
    }

    pub fn n_vertices(&self) -> usize {
        self.tri.n_vertices()
    }

    /// Number of active cells.
    pub fn n_cells(&self) -> usize {
        self.psi.n_rows()
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    /// Boundary normal-derivative term.
    pub fn boundary(&self) -> &CsrMatrix {
        &self.boundary
    }

    /// Operator `L` with `M d = L c` defining the discrete Laplacian `d`.
    pub fn penalty(&self) -> &CsrMatrix {
        &self.penalty
    }

    pub fn boundary_penalty(&self) -> BoundaryPenalty {
        self.kind
    }

    /// Basis values at cell centers (`n x n_v`).
    pub fn psi(&self) -> &CsrMatrix {
        &self.psi
    }
}
