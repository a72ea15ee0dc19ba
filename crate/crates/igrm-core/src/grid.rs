//! Dense 2D coefficient grids for scalar spline fields.
//!
//! A `CoeffGrid` stores the coefficients of a tensor-product spline field,
//! rows indexed by the x-basis and columns by the y-basis. Three of these
//! (v1, v2, p) make up the flow state.

/// Coefficient array of a scalar tensor-product spline field (row index = x).
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffGrid {
    nx: usize,
    ny: usize,
    data: Vec<f64>,
}

impl CoeffGrid {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        Self {
            nx,
            ny,
            data: vec![0.0; nx * ny],
        }
    }

    pub fn from_fn(nx: usize, ny: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut g = Self::zeros(nx, ny);
        for i in 0..nx {
            for j in 0..ny {
                g.data[i * ny + j] = f(i, j);
            }
        }
        g
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.nx && j < self.ny);
        self.data[i * self.ny + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.nx && j < self.ny);
        self.data[i * self.ny + j] = v;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.nx && j < self.ny);
        self.data[i * self.ny + j] += v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ny..(i + 1) * self.ny]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.ny..(i + 1) * self.ny]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// self += s * other
    pub fn axpy(&mut self, s: f64, other: &CoeffGrid) {
        assert_eq!(self.data.len(), other.data.len(), "grid shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn add(&self, other: &CoeffGrid) -> CoeffGrid {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &CoeffGrid) -> CoeffGrid {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn linf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Maximum absolute difference divided by the other grid's max magnitude.
    pub fn rel_linf_diff(&self, other: &CoeffGrid) -> f64 {
        let diff = self.sub(other).linf();
        let scale = other.linf().max(1e-300);
        diff / scale
    }

    /// Copy `inner` into the block starting at (off_x, off_y).
    pub fn embed(&mut self, inner: &CoeffGrid, off_x: usize, off_y: usize) {
        assert!(off_x + inner.nx <= self.nx && off_y + inner.ny <= self.ny);
        for i in 0..inner.nx {
            let dst = &mut self.data[(i + off_x) * self.ny + off_y..];
            dst[..inner.ny].copy_from_slice(inner.row(i));
        }
    }

    /// Extract the block of shape (nx, ny) starting at (off_x, off_y).
    pub fn extract(&self, off_x: usize, off_y: usize, nx: usize, ny: usize) -> CoeffGrid {
        assert!(off_x + nx <= self.nx && off_y + ny <= self.ny);
        CoeffGrid::from_fn(nx, ny, |i, j| self.at(i + off_x, j + off_y))
    }

    /// Zero the interior block, keeping only the outermost row/column frame.
    pub fn keep_frame_only(&mut self) {
        if self.nx <= 2 || self.ny <= 2 {
            return;
        }
        for i in 1..self.nx - 1 {
            for v in &mut self.data[i * self.ny + 1..(i + 1) * self.ny - 1] {
                *v = 0.0;
            }
        }
    }

    pub fn transpose(&self) -> CoeffGrid {
        CoeffGrid::from_fn(self.ny, self.nx, |i, j| self.at(j, i))
    }
}
