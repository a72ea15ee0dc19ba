//! 1D banded operator assembly between (test, trial) spline space pairs,
//! plus 2D load vectors against callable fields.
//!
//! Matrices are stored dense-in-band. Row and column spaces may differ in
//! degree and continuity but must share the element partition; boundary
//! reductions of either space simply restrict the index ranges.

use crate::error::{Error, Result};
use crate::grid::CoeffGrid;
use crate::spline::{gauss_legendre_01, LocalBasis, QuadratureRule, SplineSpace1D};

/// Banded matrix with dense-in-band storage. Each column stores a fixed
/// number of contiguous rows starting at a per-column offset, so matrices
/// that are banded around a sloped line (mixed test/trial dimensions) stay
/// as compact as classically banded square ones.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n_rows: usize,
    n_cols: usize,
    /// number of stored rows per column
    height: usize,
    /// first stored row of each column (non-decreasing)
    col_start: Vec<usize>,
    /// entry (i, j) at data[j * height + (i - col_start[j])]
    data: Vec<f64>,
}

impl BandedMatrix {
    /// Diagonal band layout with lower/upper bandwidths (kl, ku).
    pub fn zeros(n_rows: usize, n_cols: usize, kl: usize, ku: usize) -> Self {
        let col_start = (0..n_cols).map(|j| j.saturating_sub(ku)).collect();
        Self::with_structure(n_rows, n_cols, col_start, kl + ku + 1)
    }

    /// Arbitrary per-column band layout.
    pub fn with_structure(
        n_rows: usize,
        n_cols: usize,
        col_start: Vec<usize>,
        height: usize,
    ) -> Self {
        debug_assert_eq!(col_start.len(), n_cols);
        Self {
            n_rows,
            n_cols,
            height,
            col_start,
            data: vec![0.0; height * n_cols],
        }
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Max of (i - j) over stored entries: the classic lower bandwidth.
    pub fn lower_bandwidth(&self) -> usize {
        (0..self.n_cols)
            .map(|j| {
                let end = (self.col_start[j] + self.height).min(self.n_rows);
                end.saturating_sub(1).saturating_sub(j)
            })
            .max()
            .unwrap_or(0)
    }

    /// Max of (j - i) over stored entries: the classic upper bandwidth.
    pub fn upper_bandwidth(&self) -> usize {
        (0..self.n_cols)
            .map(|j| j.saturating_sub(self.col_start[j]))
            .max()
            .unwrap_or(0)
    }

    #[inline]
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        let s = self.col_start[j];
        i >= s && i < s + self.height && i < self.n_rows
    }

    /// Entry (i, j); zero outside the band.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if !self.in_band(i, j) {
            return 0.0;
        }
        self.data[j * self.height + (i - self.col_start[j])]
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(self.in_band(i, j), "entry ({i},{j}) outside band");
        let idx = j * self.height + (i - self.col_start[j]);
        self.data[idx] += v;
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(self.in_band(i, j), "entry ({i},{j}) outside band");
        let idx = j * self.height + (i - self.col_start[j]);
        self.data[idx] = v;
    }

    /// Row range with potentially nonzero entries in column j.
    #[inline]
    pub fn col_range(&self, j: usize) -> std::ops::Range<usize> {
        let lo = self.col_start[j].min(self.n_rows);
        let hi = (self.col_start[j] + self.height).min(self.n_rows);
        lo..hi
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// self + s * other, widening the band as needed.
    pub fn add_scaled(&self, other: &BandedMatrix, s: f64) -> BandedMatrix {
        assert_eq!(self.n_rows, other.n_rows);
        assert_eq!(self.n_cols, other.n_cols);
        let mut col_start = Vec::with_capacity(self.n_cols);
        let mut height = 1;
        for j in 0..self.n_cols {
            let lo = self.col_start[j].min(other.col_start[j]).min(self.n_rows);
            let hi = (self.col_start[j] + self.height)
                .max(other.col_start[j] + other.height)
                .min(self.n_rows);
            height = height.max(hi.saturating_sub(lo));
            col_start.push(lo);
        }
        let mut out = BandedMatrix::with_structure(self.n_rows, self.n_cols, col_start, height);
        for j in 0..self.n_cols {
            for i in out.col_range(j) {
                let v = self.get(i, j) + s * other.get(i, j);
                out.set(i, j, v);
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        let mut y = vec![0.0; self.n_rows];
        for j in 0..self.n_cols {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for i in self.col_range(j) {
                y[i] += self.get(i, j) * xj;
            }
        }
        y
    }

    /// A * G, contracting A's columns with G's rows.
    pub fn mul_grid(&self, g: &CoeffGrid) -> CoeffGrid {
        assert_eq!(self.n_cols, g.nx(), "mul_grid shape mismatch");
        let mut out = CoeffGrid::zeros(self.n_rows, g.ny());
        for j in 0..self.n_cols {
            let src = g.row(j);
            for i in self.col_range(j) {
                let a = self.get(i, j);
                if a == 0.0 {
                    continue;
                }
                let dst = out.row_mut(i);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        out
    }

    /// A^T * G, contracting A's rows with G's rows.
    pub fn tr_mul_grid(&self, g: &CoeffGrid) -> CoeffGrid {
        assert_eq!(self.n_rows, g.nx(), "tr_mul_grid shape mismatch");
        let mut out = CoeffGrid::zeros(self.n_cols, g.ny());
        for j in 0..self.n_cols {
            for i in self.col_range(j) {
                let a = self.get(i, j);
                if a == 0.0 {
                    continue;
                }
                let src = g.row(i);
                let dst = out.row_mut(j);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows)
            .map(|i| (0..self.n_cols).map(|j| self.get(i, j)).collect())
            .collect()
    }
}

/// G * A: contract grid columns with A's rows.
pub fn grid_mul(g: &CoeffGrid, a: &BandedMatrix) -> CoeffGrid {
    assert_eq!(g.ny(), a.n_rows(), "grid_mul shape mismatch");
    let mut out = CoeffGrid::zeros(g.nx(), a.n_cols());
    for r in 0..g.nx() {
        let src = g.row(r);
        for j in 0..a.n_cols() {
            let mut acc = 0.0;
            for i in a.col_range(j) {
                acc += src[i] * a.get(i, j);
            }
            out.row_mut(r)[j] = acc;
        }
    }
    out
}

/// G * A^T: contract grid columns with A's columns.
pub fn grid_mul_transpose(g: &CoeffGrid, a: &BandedMatrix) -> CoeffGrid {
    assert_eq!(g.ny(), a.n_cols(), "grid_mul_transpose shape mismatch");
    let mut out = CoeffGrid::zeros(g.nx(), a.n_rows());
    for r in 0..g.nx() {
        let src = g.row(r);
        let dst = out.row_mut(r);
        for j in 0..a.n_cols() {
            let s = src[j];
            if s == 0.0 {
                continue;
            }
            for i in a.col_range(j) {
                dst[i] += s * a.get(i, j);
            }
        }
    }
    out
}

fn check_same_partition(row: &SplineSpace1D, col: &SplineSpace1D) -> Result<()> {
    if row.n_elements() != col.n_elements() {
        return Err(Error::InvalidParameter(format!(
            "row space {} and column space {} use different element partitions",
            row.describe(),
            col.describe()
        )));
    }
    Ok(())
}

/// Assemble entries int B_i^(dr) B_j^(dc) between the active functions of
/// the row and column spaces.
fn operator_matrix(
    row: &SplineSpace1D,
    col: &SplineSpace1D,
    row_deriv: usize,
    col_deriv: usize,
) -> Result<BandedMatrix> {
    check_same_partition(row, col)?;
    let n = row.n_elements();
    let rule = gauss_legendre_01(row.degree().max(col.degree()) + 1);
    let (rlo, rhi) = (row.active_offset(), row.active_last());
    let (clo, chi) = (col.active_offset(), col.active_last());
    let (n_rows, n_cols) = (rhi + 1 - rlo, chi + 1 - clo);

    // tight per-column row windows from the element-support overlaps
    let mut first = vec![usize::MAX; n_cols];
    let mut last = vec![0usize; n_cols];
    for e in 0..n {
        let r0 = row.element_first_fn(e).max(rlo);
        let r1 = (row.element_first_fn(e) + row.degree()).min(rhi);
        let c0 = col.element_first_fn(e).max(clo);
        let c1 = (col.element_first_fn(e) + col.degree()).min(chi);
        if r0 > r1 || c0 > c1 {
            continue;
        }
        for c in c0..=c1 {
            first[c - clo] = first[c - clo].min(r0 - rlo);
            last[c - clo] = last[c - clo].max(r1 - rlo);
        }
    }
    let mut height = 1;
    for j in 0..n_cols {
        debug_assert!(first[j] != usize::MAX, "basis function without support");
        height = height.max(last[j] + 1 - first[j]);
    }
    let mut out = BandedMatrix::with_structure(n_rows, n_cols, first, height);

    let jac = 1.0 / n as f64;
    let mut rb = LocalBasis::new();
    let mut cb = LocalBasis::new();
    for e in 0..n {
        for (q, &node) in rule.nodes.iter().enumerate() {
            let x = (e as f64 + node) * jac;
            let w = rule.weights[q] * jac;
            row.eval_in_element(e, x, row_deriv, &mut rb);
            col.eval_in_element(e, x, col_deriv, &mut cb);
            for li in 0..rb.count {
                let gi = rb.first + li;
                if gi < rlo || gi > rhi {
                    continue;
                }
                let ri = w * rb.values[row_deriv][li];
                if ri == 0.0 {
                    continue;
                }
                for lj in 0..cb.count {
                    let gj = cb.first + lj;
                    if gj < clo || gj > chi {
                        continue;
                    }
                    out.add_to(gi - rlo, gj - clo, ri * cb.values[col_deriv][lj]);
                }
            }
        }
    }
    Ok(out)
}

/// Mass matrix: entries int B_i^row B_j^col.
pub fn mass(row: &SplineSpace1D, col: &SplineSpace1D) -> Result<BandedMatrix> {
    operator_matrix(row, col, 0, 0)
}

/// Stiffness matrix: entries int (B_i^row)' (B_j^col)'.
pub fn stiffness(row: &SplineSpace1D, col: &SplineSpace1D) -> Result<BandedMatrix> {
    operator_matrix(row, col, 1, 1)
}

/// Advection matrix: entries int B_i^row (B_j^col)' (derivative on the column).
pub fn advection(row: &SplineSpace1D, col: &SplineSpace1D) -> Result<BandedMatrix> {
    operator_matrix(row, col, 0, 1)
}

/// Per-element basis tables at the quadrature points of one direction.
pub(crate) struct BasisTables {
    pub tables: Vec<LocalBasis>,
    pub n_points: usize,
}

impl BasisTables {
    pub fn build(space: &SplineSpace1D, rule: &QuadratureRule, max_deriv: usize) -> Self {
        let n = space.n_elements();
        let jac = 1.0 / n as f64;
        let mut tables = Vec::with_capacity(n * rule.len());
        for e in 0..n {
            for &node in &rule.nodes {
                let x = (e as f64 + node) * jac;
                let mut lb = LocalBasis::new();
                space.eval_in_element(e, x, max_deriv, &mut lb);
                tables.push(lb);
            }
        }
        Self {
            tables,
            n_points: rule.len(),
        }
    }

    #[inline]
    pub fn at(&self, e: usize, q: usize) -> &LocalBasis {
        &self.tables[e * self.n_points + q]
    }
}

/// Load grid of int f(x, y) B_i(x) B_j(y) over the active functions of the
/// two row spaces; `f` returns both components at once.
pub fn load_grid2(
    row_x: &SplineSpace1D,
    row_y: &SplineSpace1D,
    rule: &QuadratureRule,
    mut f: impl FnMut(f64, f64) -> [f64; 2],
) -> Result<(CoeffGrid, CoeffGrid)> {
    let (nx, ny) = (row_x.n_elements(), row_y.n_elements());
    let (jx, jy) = (1.0 / nx as f64, 1.0 / ny as f64);
    let tx = BasisTables::build(row_x, rule, 0);
    let ty = BasisTables::build(row_y, rule, 0);
    let (xlo, xhi) = (row_x.active_offset(), row_x.active_last());
    let (ylo, yhi) = (row_y.active_offset(), row_y.active_last());
    let mut out1 = CoeffGrid::zeros(xhi + 1 - xlo, yhi + 1 - ylo);
    let mut out2 = out1.clone();
    for ex in 0..nx {
        for ey in 0..ny {
            for (qx, &nodex) in rule.nodes.iter().enumerate() {
                let x = (ex as f64 + nodex) * jx;
                let wx = rule.weights[qx] * jx;
                let bx = tx.at(ex, qx);
                for (qy, &nodey) in rule.nodes.iter().enumerate() {
                    let y = (ey as f64 + nodey) * jy;
                    let w = wx * rule.weights[qy] * jy;
                    let fv = f(x, y);
                    if !fv[0].is_finite() || !fv[1].is_finite() {
                        return Err(Error::NonFiniteValue { x, y });
                    }
                    let by = ty.at(ey, qy);
                    for li in 0..bx.count {
                        let gi = bx.first + li;
                        if gi < xlo || gi > xhi {
                            continue;
                        }
                        let vi = w * bx.values[0][li];
                        for lj in 0..by.count {
                            let gj = by.first + lj;
                            if gj < ylo || gj > yhi {
                                continue;
                            }
                            let b = vi * by.values[0][lj];
                            out1.add_at(gi - xlo, gj - ylo, fv[0] * b);
                            out2.add_at(gi - xlo, gj - ylo, fv[1] * b);
                        }
                    }
                }
            }
        }
    }
    Ok((out1, out2))
}

/// Scalar-field load grid; see [`load_grid2`].
pub fn load_grid(
    row_x: &SplineSpace1D,
    row_y: &SplineSpace1D,
    rule: &QuadratureRule,
    mut f: impl FnMut(f64, f64) -> f64,
) -> Result<CoeffGrid> {
    let (g, _) = load_grid2(row_x, row_y, rule, |x, y| [f(x, y), 0.0])?;
    Ok(g)
}
