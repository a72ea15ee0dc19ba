//! Open-knot B-spline spaces on uniform partitions of [0, 1].
//!
//! A space is described by its polynomial degree m, global continuity k
//! (interior knots repeated m-k times) and element count. Optionally the
//! boundary degrees of freedom are removed: either both endpoint functions
//! (H1_0-conforming velocity components) or only the first one (the
//! pressure space with its single constrained degree of freedom).

use crate::error::{Error, Result};

/// Largest supported polynomial degree; keeps local basis tables on the stack.
pub const MAX_DEGREE: usize = 11;

/// Local basis table width (degree + 1 functions are nonzero on an element).
pub const MAX_LOCAL: usize = MAX_DEGREE + 1;

/// Boundary treatment of a 1D spline space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Full open-knot basis.
    None,
    /// First and last basis functions removed (zero trace at both ends).
    ZeroBothEnds,
    /// Only the first basis function removed.
    OneDofRemoved,
}

/// Degree/continuity/element-count descriptor with an open uniform knot vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineSpace1D {
    degree: usize,
    continuity: i32,
    n_elements: usize,
    boundary: Boundary,
    knots: Vec<f64>,
}

/// Values (and optionally first/second derivatives) of the local nonzero
/// basis functions at a point. Row d holds the d-th derivatives of the
/// functions with full-basis indices `first..first + count`.
#[derive(Debug, Clone)]
pub struct LocalBasis {
    pub first: usize,
    pub count: usize,
    pub values: [[f64; MAX_LOCAL]; 3],
}

impl LocalBasis {
    pub fn new() -> Self {
        Self {
            first: 0,
            count: 0,
            values: [[0.0; MAX_LOCAL]; 3],
        }
    }
}

impl Default for LocalBasis {
    fn default() -> Self {
        Self::new()
    }
}

impl SplineSpace1D {
    /// Build the space `S^{m,k}` with `n_elements` uniform elements on [0, 1].
    pub fn new(
        degree: usize,
        continuity: i32,
        n_elements: usize,
        boundary: Boundary,
    ) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(Error::InvalidParameter(format!(
                "degree {degree} exceeds supported maximum {MAX_DEGREE}"
            )));
        }
        if degree == 0 && continuity != -1 {
            return Err(Error::InvalidParameter(
                "degree 0 requires continuity -1".into(),
            ));
        }
        if continuity < -1 || continuity >= degree as i32 {
            return Err(Error::InvalidParameter(format!(
                "continuity {continuity} incompatible with degree {degree} (need -1 <= k < m)"
            )));
        }
        if n_elements < 1 {
            return Err(Error::InvalidParameter("n_elements must be >= 1".into()));
        }
        let mult = (degree as i32 - continuity) as usize;
        let full_dim = n_elements * mult + (continuity + 1) as usize;
        let removed = match boundary {
            Boundary::None => 0,
            Boundary::OneDofRemoved => 1,
            Boundary::ZeroBothEnds => 2,
        };
        if full_dim < removed + 1 {
            return Err(Error::InvalidParameter(format!(
                "space too small ({full_dim} functions) for the requested boundary reduction"
            )));
        }
        let mut knots = Vec::with_capacity(2 * (degree + 1) + (n_elements - 1) * mult);
        knots.extend(std::iter::repeat(0.0).take(degree + 1));
        for e in 1..n_elements {
            let x = e as f64 / n_elements as f64;
            knots.extend(std::iter::repeat(x).take(mult));
        }
        knots.extend(std::iter::repeat(1.0).take(degree + 1));
        Ok(Self {
            degree,
            continuity,
            n_elements,
            boundary,
            knots,
        })
    }

    #[inline]
    pub fn degree(&self) -> usize {
        self.degree
    }

    #[inline]
    pub fn continuity(&self) -> i32 {
        self.continuity
    }

    #[inline]
    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    #[inline]
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Knot multiplicity at interior breakpoints.
    #[inline]
    pub fn multiplicity(&self) -> usize {
        (self.degree as i32 - self.continuity) as usize
    }

    /// Dimension of the full (unconstrained) basis.
    #[inline]
    pub fn full_dim(&self) -> usize {
        self.n_elements * self.multiplicity() + (self.continuity + 1) as usize
    }

    /// Dimension after boundary reduction.
    #[inline]
    pub fn dim(&self) -> usize {
        self.full_dim() - self.removed_count()
    }

    fn removed_count(&self) -> usize {
        match self.boundary {
            Boundary::None => 0,
            Boundary::OneDofRemoved => 1,
            Boundary::ZeroBothEnds => 2,
        }
    }

    /// Full-basis index of the first active function.
    #[inline]
    pub fn active_offset(&self) -> usize {
        match self.boundary {
            Boundary::None => 0,
            _ => 1,
        }
    }

    /// Full-basis index of the last active function.
    #[inline]
    pub fn active_last(&self) -> usize {
        match self.boundary {
            Boundary::ZeroBothEnds => self.full_dim() - 2,
            _ => self.full_dim() - 1,
        }
    }

    /// The same space with all boundary functions kept.
    pub fn without_bc(&self) -> SplineSpace1D {
        SplineSpace1D::new(self.degree, self.continuity, self.n_elements, Boundary::None)
            .expect("valid space stays valid without boundary reduction")
    }

    /// Element index containing `x`.
    #[inline]
    pub fn element_of(&self, x: f64) -> usize {
        ((x * self.n_elements as f64) as usize).min(self.n_elements - 1)
    }

    /// Full-basis index of the first function supported on element `e`.
    #[inline]
    pub fn element_first_fn(&self, e: usize) -> usize {
        e * self.multiplicity()
    }

    /// Greville abscissa of full-basis function `i` (average of m interior knots).
    pub fn greville(&self, i: usize) -> f64 {
        if self.degree == 0 {
            return 0.5 * (self.knots[i] + self.knots[i + 1]);
        }
        self.knots[i + 1..=i + self.degree].iter().sum::<f64>() / self.degree as f64
    }

    /// Evaluate the m+1 local basis functions and derivatives up to `max_deriv`.
    pub fn eval(&self, x: f64, max_deriv: usize, out: &mut LocalBasis) -> Result<()> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfDomain(x));
        }
        if max_deriv > 2 {
            return Err(Error::InvalidParameter(
                "derivative order must be 0, 1 or 2".into(),
            ));
        }
        let e = self.element_of(x);
        self.eval_in_element(e, x, max_deriv, out);
        Ok(())
    }

    /// Same as [`eval`](Self::eval) with the element already known; skips range checks.
    pub fn eval_in_element(&self, e: usize, x: f64, max_deriv: usize, out: &mut LocalBasis) {
        let m = self.degree;
        let span = m + e * self.multiplicity();
        out.first = self.element_first_fn(e);
        out.count = m + 1;
        ders_basis_funs(&self.knots, span, x, m, max_deriv, &mut out.values);
    }

    /// Short description used in error messages.
    pub fn describe(&self) -> String {
        let bc = match self.boundary {
            Boundary::None => "",
            Boundary::ZeroBothEnds => ",0",
            Boundary::OneDofRemoved => ",~",
        };
        format!(
            "S({},{}{bc}) on {} elements",
            self.degree, self.continuity, self.n_elements
        )
    }
}

/// B-spline basis values and derivatives at `x` in knot span `span`
/// (the classic triangular-table recursion with the derivative pass).
fn ders_basis_funs(
    knots: &[f64],
    span: usize,
    x: f64,
    m: usize,
    nd: usize,
    out: &mut [[f64; MAX_LOCAL]; 3],
) {
    let mut ndu = [[0.0f64; MAX_LOCAL]; MAX_LOCAL];
    let mut left = [0.0f64; MAX_LOCAL];
    let mut right = [0.0f64; MAX_LOCAL];
    ndu[0][0] = 1.0;
    for j in 1..=m {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    for j in 0..=m {
        out[0][j] = ndu[j][m];
        for d in 1..=nd {
            out[d][j] = 0.0;
        }
    }
    if nd == 0 {
        return;
    }
    let mut a = [[0.0f64; MAX_LOCAL]; 2];
    for r in 0..=m {
        let mut s1 = 0usize;
        let mut s2 = 1usize;
        a[0].fill(0.0);
        a[1].fill(0.0);
        a[0][0] = 1.0;
        for k in 1..=nd.min(m) {
            let mut d = 0.0;
            let rk = r as isize - k as isize;
            let pk = (m - k) as isize;
            if r >= k {
                a[s2][0] = a[s1][0] / ndu[(pk + 1) as usize][rk as usize];
                d = a[s2][0] * ndu[rk as usize][pk as usize];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if (r as isize - 1) <= pk { k - 1 } else { m - r };
            for j in j1..=j2 {
                a[s2][j] =
                    (a[s1][j] - a[s1][j - 1]) / ndu[(pk + 1) as usize][(rk + j as isize) as usize];
                d += a[s2][j] * ndu[(rk + j as isize) as usize][pk as usize];
            }
            if r as isize <= pk {
                a[s2][k] = -a[s1][k - 1] / ndu[(pk + 1) as usize][r];
                d += a[s2][k] * ndu[r][pk as usize];
            }
            out[k][r] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut factor = m as f64;
    for k in 1..=nd.min(m) {
        for j in 0..=m {
            out[k][j] *= factor;
        }
        factor *= (m - k) as f64;
    }
}

/// Quadrature nodes/weights on the reference interval [0, 1].
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Gauss-Legendre rule with `points_per_element` nodes, mapped to [0, 1].
pub fn gauss_rule(points_per_element: usize) -> Result<QuadratureRule> {
    if !(1..=16).contains(&points_per_element) {
        return Err(Error::InvalidParameter(format!(
            "quadrature points per element must be in 1..=16, got {points_per_element}"
        )));
    }
    Ok(gauss_legendre_01(points_per_element))
}

/// Unchecked Gauss-Legendre generator (Newton iteration on the Legendre
/// polynomial); used internally for assembly and error quadrature.
pub(crate) fn gauss_legendre_01(n: usize) -> QuadratureRule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Chebyshev-like initial guess for the i-th root of P_n on (-1, 1).
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_deriv(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    // Map from [-1, 1] to [0, 1].
    for v in &mut nodes {
        *v = 0.5 * (*v + 1.0);
    }
    for w in &mut weights {
        *w *= 0.5;
    }
    QuadratureRule { nodes, weights }
}

fn legendre_and_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Naive Cox-de Boor recursion, one basis function at a time. Kept
    /// deliberately separate from the table-based evaluator above.
    fn naive_value(knots: &[f64], m: usize, i: usize, x: f64) -> f64 {
        if m == 0 {
            let last = *knots.last().unwrap();
            let in_span = if knots[i + 1] == last && x == last {
                knots[i] < knots[i + 1]
            } else {
                knots[i] <= x && x < knots[i + 1]
            };
            return if in_span { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        let d1 = knots[i + m] - knots[i];
        if d1 > 0.0 {
            v += (x - knots[i]) / d1 * naive_value(knots, m - 1, i, x);
        }
        let d2 = knots[i + m + 1] - knots[i + 1];
        if d2 > 0.0 {
            v += (knots[i + m + 1] - x) / d2 * naive_value(knots, m - 1, i + 1, x);
        }
        v
    }

    fn naive_deriv(knots: &[f64], m: usize, i: usize, x: f64) -> f64 {
        if m == 0 {
            return 0.0;
        }
        let mut v = 0.0;
        let d1 = knots[i + m] - knots[i];
        if d1 > 0.0 {
            v += m as f64 / d1 * naive_value(knots, m - 1, i, x);
        }
        let d2 = knots[i + m + 1] - knots[i + 1];
        if d2 > 0.0 {
            v -= m as f64 / d2 * naive_value(knots, m - 1, i + 1, x);
        }
        v
    }

    fn eval_all(space: &SplineSpace1D, x: f64, max_deriv: usize) -> Vec<Vec<f64>> {
        let mut lb = LocalBasis::new();
        space.eval(x, max_deriv, &mut lb).unwrap();
        let mut rows = vec![vec![0.0; space.full_dim()]; max_deriv + 1];
        for d in 0..=max_deriv {
            for l in 0..lb.count {
                rows[d][lb.first + l] = lb.values[d][l];
            }
        }
        rows
    }

    #[test]
    fn single_linear_element() {
        let s = SplineSpace1D::new(1, 0, 1, Boundary::None).unwrap();
        assert_eq!(s.knots(), &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(s.dim(), 2);
        let rows = eval_all(&s, 0.5, 0);
        assert_abs_diff_eq!(rows[0][0], 0.5);
        assert_abs_diff_eq!(rows[0][1], 0.5);
    }

    #[test]
    fn table1_dimensions() {
        // dim = n(m-k) + k + 1; the n=20 values behind the reported
        // trial/test space sizes.
        let d = |m, k| SplineSpace1D::new(m, k, 20, Boundary::None).unwrap().dim();
        assert_eq!(d(3, 2), 23);
        assert_eq!(d(4, 2), 43);
        assert_eq!(d(3, 0), 61);
        assert_eq!(d(4, 0), 81);
        assert_eq!(3 * 23 * 23, 1587);
        assert_eq!(3 * 43 * 43, 5547);
    }

    #[test]
    fn boundary_reductions() {
        let full = SplineSpace1D::new(3, 2, 8, Boundary::None).unwrap();
        let zero = SplineSpace1D::new(3, 2, 8, Boundary::ZeroBothEnds).unwrap();
        let tilde = SplineSpace1D::new(3, 2, 8, Boundary::OneDofRemoved).unwrap();
        assert_eq!(zero.dim(), full.dim() - 2);
        assert_eq!(tilde.dim(), full.dim() - 1);
        assert_eq!(zero.active_offset(), 1);
        assert_eq!(zero.active_last(), full.full_dim() - 2);
        assert_eq!(tilde.active_offset(), 1);
        assert_eq!(tilde.active_last(), full.full_dim() - 1);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(SplineSpace1D::new(2, 2, 4, Boundary::None).is_err());
        assert!(SplineSpace1D::new(2, -2, 4, Boundary::None).is_err());
        assert!(SplineSpace1D::new(0, 0, 4, Boundary::None).is_err());
        assert!(SplineSpace1D::new(3, 1, 0, Boundary::None).is_err());
        assert!(SplineSpace1D::new(12, 0, 4, Boundary::None).is_err());
    }

    #[test]
    fn eval_outside_domain_errors() {
        let s = SplineSpace1D::new(2, 1, 3, Boundary::None).unwrap();
        let mut lb = LocalBasis::new();
        assert!(matches!(
            s.eval(-0.1, 0, &mut lb),
            Err(Error::OutOfDomain(_))
        ));
        assert!(matches!(s.eval(1.5, 0, &mut lb), Err(Error::OutOfDomain(_))));
        assert!(s.eval(f64::NAN, 0, &mut lb).is_err());
    }

    #[test]
    fn matches_naive_recursion() {
        // degree 2, 2 elements at x = 0.25, plus a sweep of harder spaces.
        let cases = [
            (2usize, 1i32, 2usize),
            (3, 2, 5),
            (4, 1, 3),
            (5, 0, 2),
            (1, 0, 4),
            (3, -1, 3),
        ];
        for (m, k, n) in cases {
            let s = SplineSpace1D::new(m, k, n, Boundary::None).unwrap();
            for step in 0..=20 {
                let x = step as f64 / 20.0;
                let rows = eval_all(&s, x, 1);
                for i in 0..s.full_dim() {
                    let v = naive_value(s.knots(), m, i, x);
                    let d = naive_deriv(s.knots(), m, i, x);
                    assert_abs_diff_eq!(rows[0][i], v, epsilon = 1e-13);
                    assert_abs_diff_eq!(rows[1][i], d, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn second_derivative_by_finite_differences() {
        // Central differences of B' converge at O(h^2) toward B'' at points
        // inside an element (B''' jumps at knots).
        let s = SplineSpace1D::new(4, 2, 5, Boundary::None).unwrap();
        let x = 0.33;
        let rows = eval_all(&s, x, 2);
        let mut errs = Vec::new();
        let hs = [1e-3, 5e-4, 2.5e-4];
        for &h in &hs {
            let up = eval_all(&s, x + h, 1);
            let dn = eval_all(&s, x - h, 1);
            let mut worst: f64 = 0.0;
            for i in 0..s.full_dim() {
                let fd = (up[1][i] - dn[1][i]) / (2.0 * h);
                worst = worst.max((fd - rows[2][i]).abs());
            }
            errs.push(worst);
        }
        // halving h should divide the error by ~4
        assert!(errs[1] < errs[0] / 2.5, "errs = {errs:?}");
        assert!(errs[2] < errs[1] / 2.5, "errs = {errs:?}");
    }

    #[test]
    fn derivative_matches_first_difference() {
        let s = SplineSpace1D::new(3, 1, 4, Boundary::None).unwrap();
        let h = 1e-6;
        for &x in &[0.13, 0.42, 0.77] {
            let mid = eval_all(&s, x, 1);
            let up = eval_all(&s, x + h, 0);
            let dn = eval_all(&s, x - h, 0);
            for i in 0..s.full_dim() {
                let fd = (up[0][i] - dn[0][i]) / (2.0 * h);
                assert_abs_diff_eq!(mid[1][i], fd, epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn greville_linear_precision() {
        // sum_i greville(i) B_i(x) = x for any degree >= 1
        let s = SplineSpace1D::new(3, 1, 5, Boundary::None).unwrap();
        for step in 0..=10 {
            let x = step as f64 / 10.0;
            let rows = eval_all(&s, x, 0);
            let rebuilt: f64 = (0..s.full_dim()).map(|i| s.greville(i) * rows[0][i]).sum();
            assert_abs_diff_eq!(rebuilt, x, epsilon = 1e-14);
        }
    }

    #[test]
    fn gauss_rule_basics() {
        let r = gauss_rule(1).unwrap();
        assert_abs_diff_eq!(r.nodes[0], 0.5);
        assert_abs_diff_eq!(r.weights[0], 1.0);

        // 2 points reproduce the cubic moment exactly
        let r = gauss_rule(2).unwrap();
        let integral: f64 = r
            .nodes
            .iter()
            .zip(&r.weights)
            .map(|(x, w)| w * x.powi(3))
            .sum();
        assert_abs_diff_eq!(integral, 0.25, epsilon = 1e-15);

        assert!(gauss_rule(0).is_err());
        assert!(gauss_rule(17).is_err());
    }

    #[test]
    fn gauss_rules_match_monomial_moments() {
        // moment matching up to degree 2n-1 pins the rule down completely
        for n in [1usize, 2, 3, 5, 8, 13, 16] {
            let r = gauss_rule(n).unwrap();
            assert!(r.weights.iter().all(|&w| w > 0.0));
            let total: f64 = r.weights.iter().sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-14);
            for d in 0..2 * n {
                let num: f64 = r
                    .nodes
                    .iter()
                    .zip(&r.weights)
                    .map(|(x, w)| w * x.powi(d as i32))
                    .sum();
                let exact = 1.0 / (d as f64 + 1.0);
                assert_abs_diff_eq!(num, exact, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn reference_rule_30_matches_moments() {
        let r = gauss_legendre_01(30);
        for d in (0..60).step_by(7) {
            let num: f64 = r
                .nodes
                .iter()
                .zip(&r.weights)
                .map(|(x, w)| w * x.powi(d as i32))
                .sum();
            assert_abs_diff_eq!(num, 1.0 / (d as f64 + 1.0), epsilon = 1e-13);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn partition_of_unity(
            m in 1usize..=5,
            k_plus_one in 0usize..=5,
            n in 1usize..=50,
            xs in proptest::collection::vec(0.0f64..=1.0, 20),
        ) {
            // continuity in -1..m
            let k = (k_plus_one as i32 - 1).min(m as i32 - 1);
            let s = SplineSpace1D::new(m, k, n, Boundary::None).unwrap();
            prop_assert_eq!(s.dim(), n * (m as i32 - k) as usize + (k + 1) as usize);
            let mut lb = LocalBasis::new();
            for x in xs {
                s.eval(x, 1, &mut lb).unwrap();
                let sum: f64 = lb.values[0][..lb.count].iter().sum();
                let dsum: f64 = lb.values[1][..lb.count].iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-13, "sum = {}", sum);
                prop_assert!(dsum.abs() <= 1e-10, "dsum = {}", dsum);
                for l in 0..lb.count {
                    prop_assert!(lb.values[0][l] >= -1e-14);
                }
            }
        }
    }
}
