//! Staggered orthogonal hexahedral grid for the finite integration
//! technique: canonical numbering of nodes, edges, facets and cells, and the
//! integer incidence operators (gradient, curl, divergence) with the exact
//! complex identities `S * C = 0` and `C * G = 0`.
//!
//! Numbering is x-entities first, then y, then z, lexicographic by
//! `(i, j, k)` with `i` fastest.

use nalgebra::DMatrix;

use crate::error::StructureError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn letter(&self) -> char {
        match self {
            Axis::X => 'x',
            Axis::Y => 'y',
            Axis::Z => 'z',
        }
    }
}

/// Sparse signed incidence matrix with entries in `{-1, 0, +1}`, stored by
/// rows; products are evaluated in integer arithmetic.
#[derive(Debug, Clone)]
pub struct IncidenceMatrix {
    nrows: usize,
    ncols: usize,
    rows: Vec<Vec<(usize, i8)>>,
}

impl IncidenceMatrix {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            rows: vec![Vec::new(); nrows],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn push(&mut self, row: usize, col: usize, sign: i8) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.rows[row].push((col, sign));
    }

    pub fn row(&self, row: usize) -> &[(usize, i8)] {
        &self.rows[row]
    }

    pub fn max_row_nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Integer product check: true iff `self * other` is the zero matrix.
    pub fn product_is_zero(&self, other: &IncidenceMatrix) -> bool {
        assert_eq!(self.ncols, other.nrows, "inner dimensions must agree");
        let mut acc: Vec<i64> = vec![0; other.ncols];
        let mut touched: Vec<usize> = Vec::new();
        for row in &self.rows {
            for &(mid, s1) in row {
                for &(col, s2) in &other.rows[mid] {
                    if acc[col] == 0 {
                        touched.push(col);
                    }
                    acc[col] += s1 as i64 * s2 as i64;
                }
            }
            for &col in &touched {
                if acc[col] != 0 {
                    return false;
                }
                acc[col] = 0;
            }
            touched.clear();
        }
        true
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, s) in row {
                m[(i, j)] += s as f64;
            }
        }
        m
    }

    /// Dense copy with the listed columns only, in the given order.
    pub fn to_dense_columns(&self, columns: &[usize]) -> DMatrix<f64> {
        let mut position = vec![usize::MAX; self.ncols];
        for (new, &old) in columns.iter().enumerate() {
            position[old] = new;
        }
        let mut m = DMatrix::zeros(self.nrows, columns.len());
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, s) in row {
                if position[j] != usize::MAX {
                    m[(i, position[j])] += s as f64;
                }
            }
        }
        m
    }
}

/// Uniform staggered grid with the assembled incidence operators.
#[derive(Debug, Clone)]
pub struct FitGrid {
    pub dims: (usize, usize, usize),
    pub spacings: (f64, f64, f64),
    curl: IncidenceMatrix,
    grad: IncidenceMatrix,
    div: IncidenceMatrix,
}

/// Builds the grid and its incidence operators.
pub fn build_grid(
    dims: (usize, usize, usize),
    spacings: (f64, f64, f64),
) -> Result<FitGrid, StructureError> {
    let (nx, ny, nz) = dims;
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(StructureError::Invalid(format!(
            "grid dims must all be at least 1, got ({nx}, {ny}, {nz})"
        )));
    }
    let (dx, dy, dz) = spacings;
    if !(dx > 0.0 && dy > 0.0 && dz > 0.0) {
        return Err(StructureError::Invalid(format!(
            "grid spacings must be positive, got ({dx}, {dy}, {dz})"
        )));
    }
    let mut grid = FitGrid {
        dims,
        spacings,
        curl: IncidenceMatrix::new(0, 0),
        grad: IncidenceMatrix::new(0, 0),
        div: IncidenceMatrix::new(0, 0),
    };
    grid.curl = grid.assemble_curl();
    grid.grad = grid.assemble_grad();
    grid.div = grid.assemble_div();
    Ok(grid)
}

impl FitGrid {
    pub fn node_count(&self) -> usize {
        let (nx, ny, nz) = self.dims;
        (nx + 1) * (ny + 1) * (nz + 1)
    }

    pub fn cell_count(&self) -> usize {
        let (nx, ny, nz) = self.dims;
        nx * ny * nz
    }

    /// Edges per axis: `(i, j, k)` ranges of the edge origin node.
    fn edge_dims(&self, axis: Axis) -> (usize, usize, usize) {
        let (nx, ny, nz) = self.dims;
        match axis {
            Axis::X => (nx, ny + 1, nz + 1),
            Axis::Y => (nx + 1, ny, nz + 1),
            Axis::Z => (nx + 1, ny + 1, nz),
        }
    }

    fn facet_dims(&self, axis: Axis) -> (usize, usize, usize) {
        let (nx, ny, nz) = self.dims;
        match axis {
            Axis::X => (nx + 1, ny, nz),
            Axis::Y => (nx, ny + 1, nz),
            Axis::Z => (nx, ny, nz + 1),
        }
    }

    pub fn edge_count_of(&self, axis: Axis) -> usize {
        let (a, b, c) = self.edge_dims(axis);
        a * b * c
    }

    pub fn facet_count_of(&self, axis: Axis) -> usize {
        let (a, b, c) = self.facet_dims(axis);
        a * b * c
    }

    pub fn edge_count(&self) -> usize {
        Axis::ALL.iter().map(|a| self.edge_count_of(*a)).sum()
    }

    pub fn facet_count(&self) -> usize {
        Axis::ALL.iter().map(|a| self.facet_count_of(*a)).sum()
    }

    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        let (nx, ny, _) = self.dims;
        i + (nx + 1) * (j + (ny + 1) * k)
    }

    /// Global edge index from axis and origin node; `None` when out of range.
    pub fn edge_index(&self, axis: Axis, i: usize, j: usize, k: usize) -> Option<usize> {
        let (a, b, c) = self.edge_dims(axis);
        if i >= a || j >= b || k >= c {
            return None;
        }
        let local = i + a * (j + b * k);
        let offset = match axis {
            Axis::X => 0,
            Axis::Y => self.edge_count_of(Axis::X),
            Axis::Z => self.edge_count_of(Axis::X) + self.edge_count_of(Axis::Y),
        };
        Some(offset + local)
    }

    pub fn edge_origin(&self, index: usize) -> (Axis, usize, usize, usize) {
        let ex = self.edge_count_of(Axis::X);
        let ey = self.edge_count_of(Axis::Y);
        let (axis, local) = if index < ex {
            (Axis::X, index)
        } else if index < ex + ey {
            (Axis::Y, index - ex)
        } else {
            (Axis::Z, index - ex - ey)
        };
        let (a, b, _) = self.edge_dims(axis);
        let i = local % a;
        let j = (local / a) % b;
        let k = local / (a * b);
        (axis, i, j, k)
    }

    pub fn facet_index(&self, axis: Axis, i: usize, j: usize, k: usize) -> Option<usize> {
        let (a, b, c) = self.facet_dims(axis);
        if i >= a || j >= b || k >= c {
            return None;
        }
        let local = i + a * (j + b * k);
        let offset = match axis {
            Axis::X => 0,
            Axis::Y => self.facet_count_of(Axis::X),
            Axis::Z => self.facet_count_of(Axis::X) + self.facet_count_of(Axis::Y),
        };
        Some(offset + local)
    }

    pub fn facet_origin(&self, index: usize) -> (Axis, usize, usize, usize) {
        let fx = self.facet_count_of(Axis::X);
        let fy = self.facet_count_of(Axis::Y);
        let (axis, local) = if index < fx {
            (Axis::X, index)
        } else if index < fx + fy {
            (Axis::Y, index - fx)
        } else {
            (Axis::Z, index - fx - fy)
        };
        let (a, b, _) = self.facet_dims(axis);
        let i = local % a;
        let j = (local / a) % b;
        let k = local / (a * b);
        (axis, i, j, k)
    }

    pub fn cell_index(&self, i: usize, j: usize, k: usize) -> usize {
        let (nx, ny, _) = self.dims;
        i + nx * (j + ny * k)
    }

    /// An edge lies on the PEC boundary iff it is tangential to one of the
    /// six outer faces, i.e. one of its transverse coordinates is extremal.
    pub fn is_boundary_edge(&self, index: usize) -> bool {
        let (nx, ny, nz) = self.dims;
        let (axis, i, j, k) = self.edge_origin(index);
        match axis {
            Axis::X => j == 0 || j == ny || k == 0 || k == nz,
            Axis::Y => i == 0 || i == nx || k == 0 || k == nz,
            Axis::Z => i == 0 || i == nx || j == 0 || j == ny,
        }
    }

    /// Interior (retained) edges in ascending global order.
    pub fn interior_edges(&self) -> Vec<usize> {
        (0..self.edge_count())
            .filter(|e| !self.is_boundary_edge(*e))
            .collect()
    }

    pub fn edge_length(&self, index: usize) -> f64 {
        let (dx, dy, dz) = self.spacings;
        match self.edge_origin(index).0 {
            Axis::X => dx,
            Axis::Y => dy,
            Axis::Z => dz,
        }
    }

    /// Area of the dual facet crossed by an edge (uniform grid).
    pub fn edge_dual_area(&self, index: usize) -> f64 {
        let (dx, dy, dz) = self.spacings;
        match self.edge_origin(index).0 {
            Axis::X => dy * dz,
            Axis::Y => dz * dx,
            Axis::Z => dx * dy,
        }
    }

    pub fn facet_area(&self, index: usize) -> f64 {
        let (dx, dy, dz) = self.spacings;
        match self.facet_origin(index).0 {
            Axis::X => dy * dz,
            Axis::Y => dz * dx,
            Axis::Z => dx * dy,
        }
    }

    /// Length of the dual edge through a facet (uniform grid).
    pub fn facet_dual_length(&self, index: usize) -> f64 {
        let (dx, dy, dz) = self.spacings;
        match self.facet_origin(index).0 {
            Axis::X => dx,
            Axis::Y => dy,
            Axis::Z => dz,
        }
    }

    /// Cells adjacent to an edge (up to four).
    pub fn cells_at_edge(&self, index: usize) -> Vec<usize> {
        let (nx, ny, nz) = self.dims;
        let (axis, i, j, k) = self.edge_origin(index);
        let mut cells = Vec::with_capacity(4);
        let mut push = |ci: isize, cj: isize, ck: isize| {
            if ci >= 0
                && cj >= 0
                && ck >= 0
                && (ci as usize) < nx
                && (cj as usize) < ny
                && (ck as usize) < nz
            {
                cells.push(self.cell_index(ci as usize, cj as usize, ck as usize));
            }
        };
        let (i, j, k) = (i as isize, j as isize, k as isize);
        match axis {
            Axis::X => {
                for dj in [-1, 0] {
                    for dk in [-1, 0] {
                        push(i, j + dj, k + dk);
                    }
                }
            }
            Axis::Y => {
                for di in [-1, 0] {
                    for dk in [-1, 0] {
                        push(i + di, j, k + dk);
                    }
                }
            }
            Axis::Z => {
                for di in [-1, 0] {
                    for dj in [-1, 0] {
                        push(i + di, j + dj, k);
                    }
                }
            }
        }
        cells
    }

    /// Cells adjacent to a facet (one or two).
    pub fn cells_at_facet(&self, index: usize) -> Vec<usize> {
        let (nx, ny, nz) = self.dims;
        let (axis, i, j, k) = self.facet_origin(index);
        let mut cells = Vec::with_capacity(2);
        let (i, j, k) = (i as isize, j as isize, k as isize);
        let mut push = |ci: isize, cj: isize, ck: isize| {
            if ci >= 0
                && cj >= 0
                && ck >= 0
                && (ci as usize) < nx
                && (cj as usize) < ny
                && (ck as usize) < nz
            {
                cells.push(self.cell_index(ci as usize, cj as usize, ck as usize));
            }
        };
        match axis {
            Axis::X => {
                push(i - 1, j, k);
                push(i, j, k);
            }
            Axis::Y => {
                push(i, j - 1, k);
                push(i, j, k);
            }
            Axis::Z => {
                push(i, j, k - 1);
                push(i, j, k);
            }
        }
        cells
    }

    /// Discrete curl (facets x edges).
    pub fn curl(&self) -> &IncidenceMatrix {
        &self.curl
    }

    /// Discrete gradient (edges x nodes).
    pub fn grad(&self) -> &IncidenceMatrix {
        &self.grad
    }

    /// Discrete divergence (cells x facets).
    pub fn div(&self) -> &IncidenceMatrix {
        &self.div
    }

    fn assemble_curl(&self) -> IncidenceMatrix {
        let mut c = IncidenceMatrix::new(self.facet_count(), self.edge_count());
        for f in 0..self.facet_count() {
            let (axis, i, j, k) = self.facet_origin(f);
            // Right-handed circulation around the facet normal.
            let edges: [(Axis, usize, usize, usize, i8); 4] = match axis {
                Axis::X => [
                    (Axis::Y, i, j, k, 1),
                    (Axis::Z, i, j + 1, k, 1),
                    (Axis::Y, i, j, k + 1, -1),
                    (Axis::Z, i, j, k, -1),
                ],
                Axis::Y => [
                    (Axis::Z, i, j, k, 1),
                    (Axis::X, i, j, k + 1, 1),
                    (Axis::Z, i + 1, j, k, -1),
                    (Axis::X, i, j, k, -1),
                ],
                Axis::Z => [
                    (Axis::X, i, j, k, 1),
                    (Axis::Y, i + 1, j, k, 1),
                    (Axis::X, i, j + 1, k, -1),
                    (Axis::Y, i, j, k, -1),
                ],
            };
            for (ea, ei, ej, ek, sign) in edges {
                let e = self
                    .edge_index(ea, ei, ej, ek)
                    .expect("facet boundary edge exists");
                c.push(f, e, sign);
            }
        }
        c
    }

    fn assemble_grad(&self) -> IncidenceMatrix {
        let mut g = IncidenceMatrix::new(self.edge_count(), self.node_count());
        for e in 0..self.edge_count() {
            let (axis, i, j, k) = self.edge_origin(e);
            let from = self.node_index(i, j, k);
            let to = match axis {
                Axis::X => self.node_index(i + 1, j, k),
                Axis::Y => self.node_index(i, j + 1, k),
                Axis::Z => self.node_index(i, j, k + 1),
            };
            g.push(e, to, 1);
            g.push(e, from, -1);
        }
        g
    }

    fn assemble_div(&self) -> IncidenceMatrix {
        let (nx, ny, nz) = self.dims;
        let mut s = IncidenceMatrix::new(self.cell_count(), self.facet_count());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let cell = self.cell_index(i, j, k);
                    let far = [
                        self.facet_index(Axis::X, i + 1, j, k).unwrap(),
                        self.facet_index(Axis::Y, i, j + 1, k).unwrap(),
                        self.facet_index(Axis::Z, i, j, k + 1).unwrap(),
                    ];
                    let near = [
                        self.facet_index(Axis::X, i, j, k).unwrap(),
                        self.facet_index(Axis::Y, i, j, k).unwrap(),
                        self.facet_index(Axis::Z, i, j, k).unwrap(),
                    ];
                    for f in far {
                        s.push(cell, f, 1);
                    }
                    for f in near {
                        s.push(cell, f, -1);
                    }
                }
            }
        }
        s
    }
}
