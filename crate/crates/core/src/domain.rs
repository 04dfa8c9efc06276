//! Masked rectangular grids and the per-cell vectors defined on them.
//!
//! Cells are addressed two ways: by `(row, col)` on the full rectangle, and by
//! an *active index* `0..n` that enumerates only unmasked cells in row-major
//! order. Every vector in the crate (fields, duals, covariate rows, matrix
//! columns) uses the active-index layout.

use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GridDomain {
    n_rows: usize,
    n_cols: usize,
    cell_area: f64,
    cell_size: f64,
    origin: (f64, f64),
    active: Vec<bool>,
    // grid position -> active index
    lookup: Vec<Option<usize>>,
    // active index -> (row, col)
    cells: Vec<(usize, usize)>,
}

impl GridDomain {
    /// Builds a domain from a row-major activity mask.
    pub fn new(n_rows: usize, n_cols: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != n_rows * n_cols {
            return Err(Error::ShapeMismatch(format!(
                "mask has {} entries, grid is {n_rows}x{n_cols}",
                mask.len()
            )));
        }
        let mut lookup = vec![None; mask.len()];
        let mut cells = Vec::new();
        for (k, &on) in mask.iter().enumerate() {
            if on {
                lookup[k] = Some(cells.len());
                cells.push((k / n_cols, k % n_cols));
            }
        }
        if cells.is_empty() {
            return Err(Error::DomainEmpty);
        }
        Ok(Self {
            n_rows,
            n_cols,
            cell_area: 1.0,
            cell_size: 1.0,
            origin: (0.0, 0.0),
            active: mask,
            lookup,
            cells,
        })
    }

    /// Every cell active.
    pub fn full(n_rows: usize, n_cols: usize) -> Result<Self> {
        Self::new(n_rows, n_cols, vec![true; n_rows * n_cols])
    }

    /// Sets the coordinate mapping. Centers become
    /// `origin + (col + 0.5, row + 0.5) * cell_size`.
    pub fn with_geometry(mut self, origin: (f64, f64), cell_size: f64) -> Result<Self> {
        if !(cell_size.is_finite() && cell_size > 0.0) || !origin.0.is_finite() || !origin.1.is_finite() {
            return Err(Error::InvalidValue(format!(
                "cell_size must be positive and finite, got {cell_size}"
            )));
        }
        self.origin = origin;
        self.cell_size = cell_size;
        Ok(self)
    }

    pub fn with_cell_area(mut self, cell_area: f64) -> Result<Self> {
        if !(cell_area.is_finite() && cell_area > 0.0) {
            return Err(Error::InvalidValue(format!(
                "cell_area must be positive and finite, got {cell_area}"
            )));
        }
        self.cell_area = cell_area;
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Number of active cells.
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_area
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    pub fn mask(&self) -> &[bool] {
        &self.active
    }

    pub fn is_active(&self, row: usize, col: usize) -> bool {
        row < self.n_rows && col < self.n_cols && self.active[row * self.n_cols + col]
    }

    pub fn index_of(&self, row: usize, col: usize) -> Option<usize> {
        if row < self.n_rows && col < self.n_cols {
            self.lookup[row * self.n_cols + col]
        } else {
            None
        }
    }

    /// `(row, col)` of an active cell.
    pub fn cell(&self, index: usize) -> (usize, usize) {
        self.cells[index]
    }

    pub fn cells(&self) -> &[(usize, usize)] {
        &self.cells
    }

    pub fn center(&self, index: usize) -> (f64, f64) {
        let (row, col) = self.cells[index];
        (
            self.origin.0 + (col as f64 + 0.5) * self.cell_size,
            self.origin.1 + (row as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn centers(&self) -> Vec<(f64, f64)> {
        (0..self.len()).map(|j| self.center(j)).collect()
    }

    /// Active cell containing the point, if any. Points on a shared edge go to
    /// the cell with the larger row/col.
    pub fn locate(&self, x: f64, y: f64) -> Option<usize> {
        let cx = ((x - self.origin.0) / self.cell_size).floor();
        let cy = ((y - self.origin.1) / self.cell_size).floor();
        if cx < 0.0 || cy < 0.0 {
            return None;
        }
        self.index_of(cy as usize, cx as usize)
    }
}

/// Builds a domain from a row-major mask.
pub fn make_domain(n_rows: usize, n_cols: usize, mask: &[bool]) -> Result<GridDomain> {
    GridDomain::new(n_rows, n_cols, mask.to_vec())
}

/// A density value for every active cell of a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialField {
    domain: Arc<GridDomain>,
    values: Vec<f64>,
}

impl SpatialField {
    pub fn new(domain: Arc<GridDomain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::ShapeMismatch(format!(
                "field has {} values, domain has {} active cells",
                values.len(),
                domain.len()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "field value at cell {j} is not finite"
            )));
        }
        Ok(Self { domain, values })
    }

    pub fn zeros(domain: Arc<GridDomain>) -> Self {
        let n = domain.len();
        Self {
            domain,
            values: vec![0.0; n],
        }
    }

    pub fn constant(domain: Arc<GridDomain>, value: f64) -> Self {
        let n = domain.len();
        Self {
            domain,
            values: vec![value; n],
        }
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    /// Errors unless the field is nonnegative.
    pub fn require_nonnegative(&self) -> Result<()> {
        match self.values.iter().position(|&v| v < 0.0) {
            Some(j) => Err(Error::InvalidValue(format!(
                "field is negative ({}) at cell {j}",
                self.values[j]
            ))),
            None => Ok(()),
        }
    }

    pub fn total(&self) -> f64 {
        field_total(self)
    }

    /// Errors unless both fields live on the same domain.
    pub fn check_same_domain(&self, other: &SpatialField) -> Result<()> {
        same_domain(&self.domain, &other.domain)
    }

    /// Values on the cells of `target`, a sub-domain of the same grid.
    pub fn restrict_to(&self, target: Arc<GridDomain>) -> Result<Self> {
        if target.n_rows() != self.domain.n_rows() || target.n_cols() != self.domain.n_cols() {
            return Err(Error::ShapeMismatch("restriction target grid differs".into()));
        }
        let values = target
            .cells()
            .iter()
            .map(|&(r, c)| {
                self.domain
                    .index_of(r, c)
                    .map(|j| self.values[j])
                    .ok_or_else(|| Error::ShapeMismatch(format!("cell ({r}, {c}) has no value")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(target, values)
    }
}

pub(crate) fn same_domain(a: &Arc<GridDomain>, b: &Arc<GridDomain>) -> Result<()> {
    if Arc::ptr_eq(a, b) || a == b {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(
            "fields are defined on different domains".to_string(),
        ))
    }
}

/// Total mass `sum_j f_j * cell_area`.
pub fn field_total(field: &SpatialField) -> f64 {
    field.values.iter().sum::<f64>() * field.domain.cell_area
}

/// Per-cell attribute vectors `w_j`, stored row-major (`n x q`).
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateMatrix {
    domain: Arc<GridDomain>,
    names: Vec<String>,
    data: Vec<f64>,
}

impl CovariateMatrix {
    pub fn new(domain: Arc<GridDomain>, names: Vec<String>, data: Vec<f64>) -> Result<Self> {
        let q = names.len();
        if q == 0 {
            return Err(Error::ShapeMismatch("covariate matrix has no columns".into()));
        }
        if data.len() != domain.len() * q {
            return Err(Error::ShapeMismatch(format!(
                "covariate data has {} entries, expected {} x {q}",
                data.len(),
                domain.len()
            )));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "covariate `{}` at cell {} is not finite",
                names[k % q],
                k / q
            )));
        }
        for (c, name) in names.iter().enumerate() {
            if data.iter().skip(c).step_by(q).all(|&v| v == 0.0) {
                return Err(Error::DegenerateCovariate(name.clone()));
            }
        }
        Ok(Self { domain, names, data })
    }

    pub fn from_columns(domain: Arc<GridDomain>, columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let n = domain.len();
        let q = columns.len();
        let mut data = vec![0.0; n * q];
        let mut names = Vec::with_capacity(q);
        for (c, (name, col)) in columns.into_iter().enumerate() {
            if col.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "covariate `{name}` has {} values, domain has {n} cells",
                    col.len()
                )));
            }
            for (j, v) in col.into_iter().enumerate() {
                data[j * q + c] = v;
            }
            names.push(name);
        }
        Self::new(domain, names, data)
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n(&self) -> usize {
        self.domain.len()
    }

    pub fn q(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let q = self.q();
        &self.data[j * q..(j + 1) * q]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.q()).copied().collect()
    }

    /// `W beta`.
    pub fn apply(&self, beta: &[f64]) -> Vec<f64> {
        assert_eq!(beta.len(), self.q());
        (0..self.n())
            .map(|j| self.row(j).iter().zip(beta).map(|(w, b)| w * b).sum())
            .collect()
    }

    /// `W^T v`.
    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n());
        let q = self.q();
        let mut out = vec![0.0; q];
        for (j, &vj) in v.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(self.row(j)) {
                *o += w * vj;
            }
        }
        out
    }

    /// Columns shifted to zero mean and scaled to unit (population) variance.
    /// A column with zero variance cannot be standardized.
    pub fn standardized(&self) -> Result<Self> {
        let n = self.n() as f64;
        let q = self.q();
        let mut data = self.data.clone();
        for c in 0..q {
            let col = self.column(c);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let scale = mean.abs().max(1.0);
            if var.sqrt() <= 1e-12 * scale {
                return Err(Error::DegenerateCovariate(self.names[c].clone()));
            }
            let sd = var.sqrt();
            for j in 0..self.n() {
                data[j * q + c] = (col[j] - mean) / sd;
            }
        }
        Self::new(self.domain.clone(), self.names.clone(), data)
    }

    /// Same columns restricted to the cells of `target`, a sub-domain of this
    /// matrix's grid with identical shape.
    pub fn restrict_to(&self, target: Arc<GridDomain>) -> Result<Self> {
        if target.n_rows() != self.domain.n_rows() || target.n_cols() != self.domain.n_cols() {
            return Err(Error::ShapeMismatch("restriction target grid differs".into()));
        }
        let q = self.q();
        let mut data = Vec::with_capacity(target.len() * q);
        for &(r, c) in target.cells() {
            let j = self.domain.index_of(r, c).ok_or_else(|| {
                Error::ShapeMismatch(format!("cell ({r}, {c}) has no covariate row"))
            })?;
            data.extend_from_slice(self.row(j));
        }
        Self::new(target, self.names.clone(), data)
    }
}
