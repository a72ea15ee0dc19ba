//! Banded LU factorization and linear-cost solution of Kronecker-structured
//! systems, including the per-direction block saddle systems of the
//! residual-minimization half-steps.
//!
//! A 2D system whose matrix factors as A_x (x) A_y is solved by banded
//! sweeps along grid lines: O(rows * cols * bandwidth) total. The saddle
//! systems [[G, -B], [B^T, 0]] (x) M share one banded factor per direction,
//! so the same sweeping applies once the 1D saddle unknowns are interleaved
//! by position to keep the bandwidth O(degree).

use crate::assembly::{grid_mul, mass, stiffness, BandedMatrix};
use crate::error::{Error, Result};
use crate::grid::CoeffGrid;
use crate::spline::SplineSpace1D;

/// Banded LU factors with partial pivoting.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    /// upper bandwidth of the factors (original ku + kl of fill)
    kuf: usize,
    /// entry (i, j) at data[j * ldab + (kuf + i - j)]
    data: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandedLu {
    #[inline]
    fn ldab(&self) -> usize {
        self.kl + self.kuf + 1
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.ldab() + (self.kuf + i - j)]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let ldab = self.ldab();
        self.data[j * ldab + (self.kuf + i - j)] = v;
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solve A x = b in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n, "rhs length mismatch");
        let n = self.n;
        for k in 0..n {
            let p = self.ipiv[k];
            if p != k {
                b.swap(p, k);
            }
            let bk = b[k];
            if bk != 0.0 {
                let hi = (k + self.kl).min(n - 1);
                for i in k + 1..=hi {
                    b[i] -= self.get(i, k) * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let hi = (k + self.kuf).min(n - 1);
            let mut s = b[k];
            for j in k + 1..=hi {
                s -= self.get(k, j) * b[j];
            }
            b[k] = s / self.get(k, k);
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Factor a square banded matrix as P A = L U with partial pivoting.
pub fn band_lu(a: &BandedMatrix) -> Result<BandedLu> {
    if a.n_rows() != a.n_cols() {
        return Err(Error::ShapeMismatch(format!(
            "band_lu needs a square matrix, got {}x{}",
            a.n_rows(),
            a.n_cols()
        )));
    }
    let n = a.n_rows();
    let kl = a.lower_bandwidth();
    let kuf = a.upper_bandwidth() + kl;
    let mut f = BandedLu {
        n,
        kl,
        kuf,
        data: vec![0.0; (kl + kuf + 1) * n],
        ipiv: vec![0; n],
    };
    for j in 0..n {
        for i in a.col_range(j) {
            f.set(i, j, a.get(i, j));
        }
    }
    // pivots smaller than this (relative to the matrix scale) are treated
    // as exact rank deficiency
    let tol = a.max_abs() * f64::EPSILON * (n.max(4) as f64);

    for k in 0..n {
        let imax = (k + kl).min(n - 1);
        let mut p = k;
        let mut best = f.get(k, k).abs();
        for i in k + 1..=imax {
            let v = f.get(i, k).abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        f.ipiv[k] = p;
        let piv = f.get(p, k);
        if piv.abs() <= tol {
            return Err(Error::SingularMatrix { pivot: k });
        }
        let jmax = (k + kuf).min(n - 1);
        if p != k {
            for j in k..=jmax {
                let t = f.get(k, j);
                f.set(k, j, f.get(p, j));
                f.set(p, j, t);
            }
        }
        let pivot = f.get(k, k);
        for i in k + 1..=imax {
            let l = f.get(i, k) / pivot;
            f.set(i, k, l);
            if l != 0.0 {
                for j in k + 1..=jmax {
                    let v = f.get(i, j) - l * f.get(k, j);
                    f.set(i, j, v);
                }
            }
        }
    }
    Ok(f)
}

/// Solve A_x U A_y^T = rhs by two banded sweeps (columns with A_x, rows with A_y).
pub fn solve_kron(ax: &BandedLu, ay: &BandedLu, rhs: &CoeffGrid) -> Result<CoeffGrid> {
    if rhs.nx() != ax.dim() || rhs.ny() != ay.dim() {
        return Err(Error::ShapeMismatch(format!(
            "solve_kron rhs is {}x{}, expected {}x{}",
            rhs.nx(),
            rhs.ny(),
            ax.dim(),
            ay.dim()
        )));
    }
    let mut w = rhs.clone();
    // sweep 1: W = A_x^{-1} rhs, one banded solve per grid column
    let mut col = vec![0.0; ax.dim()];
    for j in 0..w.ny() {
        for i in 0..w.nx() {
            col[i] = w.at(i, j);
        }
        ax.solve_in_place(&mut col);
        for i in 0..w.nx() {
            w.set(i, j, col[i]);
        }
    }
    // sweep 2: U A_y^T = W, i.e. A_y u_row = w_row per grid row
    for i in 0..w.nx() {
        ay.solve_in_place(w.row_mut(i));
    }
    Ok(w)
}

/// Direction of the enriched (implicitly solved) variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    X,
    Y,
}

/// Factored per-direction saddle system
/// [[G1, -B1], [B1^T, 0]] (x) M_perp (in the x case; mirrored for y),
/// with the 1D saddle unknowns interleaved by position.
#[derive(Debug)]
pub struct SaddleOperator {
    direction: Direction,
    test_dim: usize,
    trial_dim: usize,
    perp_dim: usize,
    test_pos: Vec<usize>,
    trial_pos: Vec<usize>,
    saddle_lu: BandedLu,
    perp_lu: BandedLu,
    b1: BandedMatrix,
    g1: BandedMatrix,
    perp_mass: BandedMatrix,
}

/// Result of one saddle solve: the trial-space solution, the residual
/// representative, and the scaled B^T-orthogonality defect of r.
pub struct SaddleSolution {
    pub u: CoeffGrid,
    pub r: CoeffGrid,
    pub ortho_ratio: f64,
}

/// Merge test and trial index sets into one ordering, sorted by their
/// fractional position along the direction. Returns (test_pos, trial_pos).
fn interleave_positions(test_dim: usize, trial_dim: usize) -> (Vec<usize>, Vec<usize>) {
    let mut keys: Vec<(f64, u8, usize)> = Vec::with_capacity(test_dim + trial_dim);
    for a in 0..test_dim {
        keys.push(((a as f64 + 0.5) / test_dim as f64, 0, a));
    }
    for j in 0..trial_dim {
        keys.push(((j as f64 + 0.5) / trial_dim as f64, 1, j));
    }
    keys.sort_by(|a, b| a.partial_cmp(b).expect("positions are finite"));
    let mut test_pos = vec![0; test_dim];
    let mut trial_pos = vec![0; trial_dim];
    for (pos, &(_, kind, idx)) in keys.iter().enumerate() {
        if kind == 0 {
            test_pos[idx] = pos;
        } else {
            trial_pos[idx] = pos;
        }
    }
    (test_pos, trial_pos)
}

/// Assemble and factor the directional saddle operator.
///
/// G1 = M + K over the enriched-direction test space; B1 = M + tau/(2 Re) K
/// between test and trial; the perpendicular factor is the trial-space mass.
pub fn make_saddle(
    test: &SplineSpace1D,
    trial: &SplineSpace1D,
    perp_trial: &SplineSpace1D,
    tau: f64,
    re: f64,
    direction: Direction,
) -> Result<SaddleOperator> {
    if tau <= 0.0 || re <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "tau and Re must be positive (tau = {tau}, Re = {re})"
        )));
    }
    let g1 = mass(test, test)?.add_scaled(&stiffness(test, test)?, 1.0);
    let b1 = mass(test, trial)?.add_scaled(&stiffness(test, trial)?, tau / (2.0 * re));
    let perp_mass = mass(perp_trial, perp_trial)?;
    let perp_lu = band_lu(&perp_mass)?;

    let (t, r) = (g1.n_rows(), b1.n_cols());
    let (test_pos, trial_pos) = interleave_positions(t, r);

    // exact bandwidth of the interleaved block matrix
    let mut kl = 0usize;
    let mut ku = 0usize;
    let mut widen = |i: usize, j: usize| {
        if i >= j {
            kl = kl.max(i - j);
        } else {
            ku = ku.max(j - i);
        }
    };
    for j in 0..t {
        for i in g1.col_range(j) {
            widen(test_pos[i], test_pos[j]);
        }
    }
    for j in 0..r {
        for i in b1.col_range(j) {
            widen(test_pos[i], trial_pos[j]);
            widen(trial_pos[j], test_pos[i]);
        }
    }
    let mut s = BandedMatrix::zeros(t + r, t + r, kl, ku);
    for j in 0..t {
        for i in g1.col_range(j) {
            s.set(test_pos[i], test_pos[j], g1.get(i, j));
        }
    }
    for j in 0..r {
        for i in b1.col_range(j) {
            let v = b1.get(i, j);
            s.set(test_pos[i], trial_pos[j], -v);
            s.set(trial_pos[j], test_pos[i], v);
        }
    }
    let saddle_lu = band_lu(&s).map_err(|e| match e {
        Error::SingularMatrix { pivot } => Error::InfSupFailure {
            test: test.describe(),
            trial: trial.describe(),
            pivot,
        },
        other => other,
    })?;

    Ok(SaddleOperator {
        direction,
        test_dim: t,
        trial_dim: r,
        perp_dim: perp_mass.n_rows(),
        test_pos,
        trial_pos,
        saddle_lu,
        perp_lu,
        b1,
        g1,
        perp_mass,
    })
}

impl SaddleOperator {
    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn test_dim(&self) -> usize {
        self.test_dim
    }

    pub fn trial_dim(&self) -> usize {
        self.trial_dim
    }

    pub fn perp_dim(&self) -> usize {
        self.perp_dim
    }

    /// Size of the interleaved 1D block system.
    pub fn saddle_dim(&self) -> usize {
        self.test_dim + self.trial_dim
    }

    pub fn b1(&self) -> &BandedMatrix {
        &self.b1
    }

    pub fn gram(&self) -> &BandedMatrix {
        &self.g1
    }

    pub fn perp_mass(&self) -> &BandedMatrix {
        &self.perp_mass
    }

    /// Solve the mixed system for the load grid `l` (natural (x, y) layout).
    ///
    /// Direction X: `l` is (test_x, perp); solves
    ///   [[G (x) M, -B (x) M], [B^T (x) M, 0]] [r; u] = [-L; 0].
    /// Direction Y: `l` is (perp, test_y) and the saddle acts on columns.
    /// The residual representative r satisfies B^T-orthogonality up to
    /// roundoff; the scaled defect is reported in the solution.
    pub fn solve(&self, l: &CoeffGrid) -> Result<SaddleSolution> {
        match self.direction {
            Direction::X => self.solve_x(l),
            Direction::Y => self.solve_y(l),
        }
    }

    fn solve_x(&self, l: &CoeffGrid) -> Result<SaddleSolution> {
        if l.nx() != self.test_dim || l.ny() != self.perp_dim {
            return Err(Error::ShapeMismatch(format!(
                "saddle X load is {}x{}, expected {}x{}",
                l.nx(),
                l.ny(),
                self.test_dim,
                self.perp_dim
            )));
        }
        let sdim = self.saddle_dim();
        let mut rs = CoeffGrid::zeros(sdim, self.perp_dim);
        for a in 0..self.test_dim {
            for b in 0..self.perp_dim {
                rs.set(self.test_pos[a], b, -l.at(a, b));
            }
        }
        // sweep 1: apply M^{-1} along the perpendicular index (rows are contiguous)
        for i in 0..sdim {
            self.perp_lu.solve_in_place(rs.row_mut(i));
        }
        // sweep 2: 1D saddle solve along the enriched index, one per line
        let mut col = vec![0.0; sdim];
        for b in 0..self.perp_dim {
            for i in 0..sdim {
                col[i] = rs.at(i, b);
            }
            self.saddle_lu.solve_in_place(&mut col);
            for i in 0..sdim {
                rs.set(i, b, col[i]);
            }
        }
        let u = CoeffGrid::from_fn(self.trial_dim, self.perp_dim, |j, b| {
            rs.at(self.trial_pos[j], b)
        });
        let r = CoeffGrid::from_fn(self.test_dim, self.perp_dim, |a, b| {
            rs.at(self.test_pos[a], b)
        });
        // defect = B1^T R M_perp
        let defect = grid_mul(&self.b1.tr_mul_grid(&r), &self.perp_mass);
        let ortho_ratio = defect.linf() / l.linf().max(1e-300);
        Ok(SaddleSolution { u, r, ortho_ratio })
    }

    fn solve_y(&self, l: &CoeffGrid) -> Result<SaddleSolution> {
        if l.nx() != self.perp_dim || l.ny() != self.test_dim {
            return Err(Error::ShapeMismatch(format!(
                "saddle Y load is {}x{}, expected {}x{}",
                l.nx(),
                l.ny(),
                self.perp_dim,
                self.test_dim
            )));
        }
        let sdim = self.saddle_dim();
        let mut rs = CoeffGrid::zeros(self.perp_dim, sdim);
        for a in 0..self.perp_dim {
            for b in 0..self.test_dim {
                rs.set(a, self.test_pos[b], -l.at(a, b));
            }
        }
        // sweep 1: M^{-1} along the perpendicular (x) index, per saddle column
        let mut col = vec![0.0; self.perp_dim];
        for j in 0..sdim {
            for i in 0..self.perp_dim {
                col[i] = rs.at(i, j);
            }
            self.perp_lu.solve_in_place(&mut col);
            for i in 0..self.perp_dim {
                rs.set(i, j, col[i]);
            }
        }
        // sweep 2: saddle solve along the enriched (y) index, per x line
        for i in 0..self.perp_dim {
            self.saddle_lu.solve_in_place(rs.row_mut(i));
        }
        let u = CoeffGrid::from_fn(self.perp_dim, self.trial_dim, |a, j| {
            rs.at(a, self.trial_pos[j])
        });
        let r = CoeffGrid::from_fn(self.perp_dim, self.test_dim, |a, b| {
            rs.at(a, self.test_pos[b])
        });
        // defect = M_perp R B1 (the transposed-layout orthogonality test)
        let defect = grid_mul(&self.perp_mass.mul_grid(&r), &self.b1);
        let ortho_ratio = defect.linf() / l.linf().max(1e-300);
        Ok(SaddleSolution { u, r, ortho_ratio })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::Boundary;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn space(m: usize, k: i32, n: usize) -> SplineSpace1D {
        SplineSpace1D::new(m, k, n, Boundary::None).unwrap()
    }

    /// Dense LU with partial pivoting, independent of the banded code path.
    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
        let n = a.len();
        let mut m: Vec<Vec<f64>> = a.to_vec();
        let mut x = b.to_vec();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| {
                m[i][k].abs().partial_cmp(&m[j][k].abs()).unwrap()
            })?;
            if m[p][k].abs() < 1e-300 {
                return None;
            }
            m.swap(k, p);
            x.swap(k, p);
            for i in k + 1..n {
                let l = m[i][k] / m[k][k];
                for j in k..n {
                    m[i][j] -= l * m[k][j];
                }
                x[i] -= l * x[k];
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..n {
                s -= m[k][j] * x[j];
            }
            x[k] = s / m[k][k];
        }
        Some(x)
    }

    fn pseudo_random(seed: &mut u64) -> f64 {
        // xorshift, mapped to [-1, 1)
        *seed ^= *seed << 13;
        *seed ^= *seed >> 7;
        *seed ^= *seed << 17;
        (*seed >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }

    fn random_banded(n: usize, kl: usize, ku: usize, seed: u64) -> BandedMatrix {
        let mut s = seed.max(1);
        let mut a = BandedMatrix::zeros(n, n, kl, ku);
        for j in 0..n {
            for i in a.col_range(j) {
                let mut v = pseudo_random(&mut s);
                if i == j {
                    v += 4.0; // keep comfortably nonsingular
                }
                a.set(i, j, v);
            }
        }
        a
    }

    #[test]
    fn identity_solve_is_identity() {
        let mut a = BandedMatrix::zeros(5, 5, 0, 0);
        for i in 0..5 {
            a.set(i, i, 1.0);
        }
        let lu = band_lu(&a).unwrap();
        let b = vec![1.0, -2.0, 3.0, 0.5, 0.0];
        assert_eq!(lu.solve(&b), b);
    }

    #[test]
    fn banded_lu_matches_dense_solve() {
        for (n, kl, ku, seed) in [(12, 2, 3, 7u64), (12, 1, 1, 42), (9, 4, 2, 3), (20, 3, 3, 99)] {
            let a = random_banded(n, kl, ku, seed);
            let lu = band_lu(&a).unwrap();
            let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
            let x = lu.solve(&b);
            let xd = dense_solve(&a.to_dense(), &b).unwrap();
            for i in 0..n {
                assert!(
                    (x[i] - xd[i]).abs() <= 1e-12 * xd[i].abs().max(1.0),
                    "n={n} i={i}: {} vs {}",
                    x[i],
                    xd[i]
                );
            }
        }
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        // zero on the diagonal forces a row exchange
        let mut a = BandedMatrix::zeros(3, 3, 1, 1);
        a.set(0, 0, 0.0);
        a.set(0, 1, 2.0);
        a.set(1, 0, 1.0);
        a.set(1, 1, 1.0);
        a.set(1, 2, 1.0);
        a.set(2, 1, 3.0);
        a.set(2, 2, 1.0);
        let lu = band_lu(&a).unwrap();
        let x = lu.solve(&[2.0, 3.0, 4.0]);
        let xd = dense_solve(&a.to_dense(), &[2.0, 3.0, 4.0]).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(x[i], xd[i], epsilon = 1e-13);
        }
    }

    #[test]
    fn singular_matrix_detected() {
        // duplicate rows
        let mut a = BandedMatrix::zeros(3, 3, 2, 2);
        for j in 0..3 {
            a.set(0, j, j as f64 + 1.0);
            a.set(1, j, j as f64 + 1.0);
            a.set(2, j, 1.0);
        }
        assert!(matches!(band_lu(&a), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn kron_identity_roundtrip() {
        let mut id = BandedMatrix::zeros(4, 4, 0, 0);
        for i in 0..4 {
            id.set(i, i, 1.0);
        }
        let lux = band_lu(&id).unwrap();
        let rhs = CoeffGrid::from_fn(4, 4, |i, j| (i * 4 + j) as f64);
        let u = solve_kron(&lux, &lux, &rhs).unwrap();
        assert_eq!(u, rhs);
    }

    #[test]
    fn kron_matches_dense_kronecker_solve() {
        let ax = random_banded(5, 1, 2, 11);
        let ay = random_banded(4, 2, 1, 23);
        let rhs = CoeffGrid::from_fn(5, 4, |i, j| ((i * 31 + j * 17) % 9) as f64 - 4.0);
        let u = solve_kron(&band_lu(&ax).unwrap(), &band_lu(&ay).unwrap(), &rhs).unwrap();

        // dense Kronecker assembly with row-major vec ordering
        let (axd, ayd) = (ax.to_dense(), ay.to_dense());
        let n = 5 * 4;
        let mut k = vec![vec![0.0; n]; n];
        for i in 0..5 {
            for j in 0..4 {
                for i2 in 0..5 {
                    for j2 in 0..4 {
                        k[i * 4 + j][i2 * 4 + j2] = axd[i][i2] * ayd[j][j2];
                    }
                }
            }
        }
        let b: Vec<f64> = (0..5).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| rhs.at(i, j)).collect();
        let xd = dense_solve(&k, &b).unwrap();
        for i in 0..5 {
            for j in 0..4 {
                let rel = (u.at(i, j) - xd[i * 4 + j]).abs() / xd[i * 4 + j].abs().max(1.0);
                assert!(rel <= 1e-11, "({i},{j}): {} vs {}", u.at(i, j), xd[i * 4 + j]);
            }
        }
    }

    #[test]
    fn kron_shape_mismatch_rejected() {
        let a = random_banded(4, 1, 1, 5);
        let lu = band_lu(&a).unwrap();
        let rhs = CoeffGrid::zeros(3, 4);
        assert!(matches!(
            solve_kron(&lu, &lu, &rhs),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn saddle_dimension_for_table1_pair() {
        // trial S(3,2), test S(4,2) on 20 elements: 43 + 23 unknowns per line
        let trial = space(3, 2, 20);
        let test = space(4, 2, 20);
        let perp = space(3, 2, 20);
        let op = make_saddle(&test, &trial, &perp, 1e-2, 1.0, Direction::X).unwrap();
        assert_eq!(op.saddle_dim(), 66);
        assert_eq!(op.test_dim(), 43);
        assert_eq!(op.trial_dim(), 23);
    }

    #[test]
    fn saddle_bandwidth_stays_local() {
        let trial = space(3, 2, 40);
        let test = space(4, 2, 40);
        let op = make_saddle(&test, &trial, &trial, 1e-2, 1.0, Direction::X).unwrap();
        // interleaving must avoid O(dim) bandwidth
        assert!(op.saddle_lu.kl <= 16, "kl = {}", op.saddle_lu.kl);
        assert!(op.saddle_lu.kuf <= 40, "kuf = {}", op.saddle_lu.kuf);
    }

    #[test]
    fn saddle_zero_load_gives_zero() {
        let trial = space(3, 2, 4);
        let test = space(4, 2, 4);
        let op = make_saddle(&test, &trial, &trial, 0.1, 1.0, Direction::X).unwrap();
        let sol = op.solve(&CoeffGrid::zeros(op.test_dim(), op.perp_dim())).unwrap();
        assert_eq!(sol.u.linf(), 0.0);
        assert_eq!(sol.r.linf(), 0.0);
    }

    #[test]
    fn galerkin_reduction_square_test_space() {
        // test = trial: r must vanish and u solves (B (x) M) u = L
        let s = space(3, 2, 6);
        let tau = 0.05;
        let op = make_saddle(&s, &s, &s, tau, 1.0, Direction::X).unwrap();
        let l = CoeffGrid::from_fn(op.test_dim(), op.perp_dim(), |i, j| {
            ((i * 13 + j * 7) % 11) as f64 / 11.0 - 0.4
        });
        let sol = op.solve(&l).unwrap();
        assert!(sol.r.linf() <= 1e-10 * l.linf(), "r = {}", sol.r.linf());
        assert!(sol.ortho_ratio <= 1e-10);

        let b1 = mass(&s, &s)
            .unwrap()
            .add_scaled(&stiffness(&s, &s).unwrap(), tau / 2.0);
        let m = mass(&s, &s).unwrap();
        let direct = solve_kron(&band_lu(&b1).unwrap(), &band_lu(&m).unwrap(), &l).unwrap();
        assert!(sol.u.rel_linf_diff(&direct) <= 1e-10);
    }

    #[test]
    fn saddle_tau_limit_reduces_to_cross_mass() {
        let trial = space(3, 2, 4);
        let test = space(4, 2, 4);
        let tiny = make_saddle(&test, &trial, &trial, 1e-14, 1.0, Direction::X).unwrap();
        let m = mass(&test, &trial).unwrap();
        for j in 0..m.n_cols() {
            for i in m.col_range(j) {
                assert_abs_diff_eq!(tiny.b1().get(i, j), m.get(i, j), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn inf_sup_failure_reported_for_too_small_test_space() {
        // trial strictly larger than test: B cannot have full column rank
        let trial = space(4, 2, 4);
        let test = space(3, 2, 4);
        let err = make_saddle(&test, &trial, &trial, 0.1, 1.0, Direction::X).unwrap_err();
        assert!(matches!(err, Error::InfSupFailure { .. }), "{err}");
    }

    #[test]
    fn y_direction_mirrors_x() {
        // transposing the load grid must swap the two direction solvers
        let trial = space(3, 2, 5);
        let test = space(4, 2, 5);
        let perp = space(3, 2, 5);
        let opx = make_saddle(&test, &trial, &perp, 0.07, 2.0, Direction::X).unwrap();
        let opy = make_saddle(&test, &trial, &perp, 0.07, 2.0, Direction::Y).unwrap();
        let l = CoeffGrid::from_fn(opx.test_dim(), opx.perp_dim(), |i, j| {
            ((i * 5 + j * 3) % 7) as f64 - 3.0
        });
        let sx = opx.solve(&l).unwrap();
        let sy = opy.solve(&l.transpose()).unwrap();
        assert!(sx.u.rel_linf_diff(&sy.u.transpose()) <= 1e-12);
        assert!(sx.r.rel_linf_diff(&sy.r.transpose()) <= 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn lu_roundtrip_random_banded(
            n in 3usize..24,
            kl in 0usize..4,
            ku in 0usize..4,
            seed in 1u64..u64::MAX,
        ) {
            let a = random_banded(n, kl.min(n - 1), ku.min(n - 1), seed);
            let lu = band_lu(&a).unwrap();
            let b: Vec<f64> = (0..n).map(|i| ((i * 7 + 1) as f64 * 0.3).cos()).collect();
            let x = lu.solve(&b);
            // re-apply A and compare with b
            let back = a.matvec(&x);
            for i in 0..n {
                prop_assert!((back[i] - b[i]).abs() <= 1e-11 * b[i].abs().max(1.0));
            }
        }

        #[test]
        fn saddle_orthogonality_random_loads(seed in 1u64..u64::MAX) {
            let trial = space(3, 2, 4);
            let test = space(4, 2, 4);
            let op = make_saddle(&test, &trial, &trial, 0.01, 100.0, Direction::X).unwrap();
            let mut s = seed;
            let l = CoeffGrid::from_fn(op.test_dim(), op.perp_dim(), |_, _| pseudo_random(&mut s));
            let sol = op.solve(&l).unwrap();
            prop_assert!(sol.ortho_ratio <= 1e-8, "defect ratio {}", sol.ortho_ratio);
        }
    }
}
