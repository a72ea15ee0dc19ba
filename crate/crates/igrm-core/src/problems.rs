//! Problem definitions: manufactured Stokes and Navier-Stokes flows on the
//! unit square and the lid-driven cavity.
//!
//! The manufactured fields are
//!   v(x, y, t) = (sin x sin(y+t), cos x cos(y+t)),   p = cos x sin(y+t),
//! which are divergence-free; the forcing below is the closed form of
//! dt v + (v.grad) v - lap v / Re + grad p for the Navier-Stokes case and
//! dt v - lap v + grad p for the Stokes case.

use crate::assembly::{load_grid, load_grid2, mass};
use crate::error::Result;
use crate::grid::CoeffGrid;
use crate::kron::{band_lu, solve_kron};
use crate::spline::gauss_legendre_01;
use crate::stepper::{FlowState, SpaceBundle};

/// Which flow is being solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    StokesMms,
    NsMms,
    Cavity,
    /// Quiescent flow with zero data everywhere; verification only.
    Zero,
}

/// Exact fields, forcing, boundary data and defaults for one experiment.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub name: &'static str,
    pub re: f64,
    pub t_final: f64,
    pub include_convection: bool,
}

/// Stokes flow with the manufactured solution; the Reynolds number is
/// removed from the equations (Re = 1).
pub fn stokes_mms() -> ProblemSpec {
    ProblemSpec {
        kind: ProblemKind::StokesMms,
        name: "stokes-mms",
        re: 1.0,
        t_final: 2.0,
        include_convection: false,
    }
}

/// Navier-Stokes flow with the manufactured solution.
pub fn ns_mms(re: f64) -> ProblemSpec {
    ProblemSpec {
        kind: ProblemKind::NsMms,
        name: "ns-mms",
        re,
        t_final: 2.0,
        include_convection: true,
    }
}

/// Lid-driven cavity: zero forcing, unit tangential velocity on the top wall.
pub fn cavity(re: f64) -> ProblemSpec {
    ProblemSpec {
        kind: ProblemKind::Cavity,
        name: "cavity",
        re,
        t_final: 10.0,
        include_convection: true,
    }
}

/// All-zero data; the state must stay identically zero.
pub fn zero_flow() -> ProblemSpec {
    ProblemSpec {
        kind: ProblemKind::Zero,
        name: "zero",
        re: 1.0,
        t_final: 1.0,
        include_convection: true,
    }
}

impl ProblemSpec {
    pub fn has_exact(&self) -> bool {
        matches!(self.kind, ProblemKind::StokesMms | ProblemKind::NsMms)
    }

    /// Exact velocity, when a manufactured solution exists.
    pub fn exact_velocity(&self, x: f64, y: f64, t: f64) -> Option<[f64; 2]> {
        if !self.has_exact() {
            return None;
        }
        Some([x.sin() * (y + t).sin(), x.cos() * (y + t).cos()])
    }

    /// Exact velocity gradient [[d v1/dx, d v1/dy], [d v2/dx, d v2/dy]].
    pub fn exact_velocity_grad(&self, x: f64, y: f64, t: f64) -> Option<[[f64; 2]; 2]> {
        if !self.has_exact() {
            return None;
        }
        Some([
            [x.cos() * (y + t).sin(), x.sin() * (y + t).cos()],
            [-x.sin() * (y + t).cos(), -x.cos() * (y + t).sin()],
        ])
    }

    pub fn exact_pressure(&self, x: f64, y: f64, t: f64) -> Option<f64> {
        if !self.has_exact() {
            return None;
        }
        Some(x.cos() * (y + t).sin())
    }

    /// Forcing term of the momentum equation.
    pub fn forcing(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        match self.kind {
            ProblemKind::StokesMms => {
                // dt v - lap v + grad p
                let s = (y + t).sin();
                let c = (y + t).cos();
                [x.sin() * (c + s), x.cos() * (3.0 * c - s)]
            }
            ProblemKind::NsMms => {
                // dt v + (v.grad) v - lap v / Re + grad p
                let s = (y + t).sin();
                let c = (y + t).cos();
                let re = self.re;
                [
                    x.sin() * c + x.sin() * x.cos() + (2.0 / re - 1.0) * x.sin() * s,
                    -x.cos() * s - s * c + (2.0 / re + 1.0) * x.cos() * c,
                ]
            }
            ProblemKind::Cavity | ProblemKind::Zero => [0.0, 0.0],
        }
    }

    /// Dirichlet velocity data on the boundary of the unit square.
    pub fn dirichlet(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        match self.kind {
            ProblemKind::StokesMms | ProblemKind::NsMms => {
                // the manufactured trace; it does not vanish on the boundary
                self.exact_velocity(x, y, t).unwrap()
            }
            ProblemKind::Cavity => {
                if y >= 1.0 {
                    [1.0, 0.0]
                } else {
                    [0.0, 0.0]
                }
            }
            ProblemKind::Zero => [0.0, 0.0],
        }
    }
}

/// Overwrite the boundary frame of velocity grids with interpolated
/// Dirichlet data: each boundary coefficient takes the boundary value at its
/// Greville anchor.
pub fn apply_dirichlet_frame(
    v1: &mut CoeffGrid,
    v2: &mut CoeffGrid,
    bundle: &SpaceBundle,
    problem: &ProblemSpec,
    t: f64,
) {
    let sx = &bundle.vx_full;
    let sy = &bundle.vy_full;
    let (nx, ny) = (sx.full_dim(), sy.full_dim());
    debug_assert_eq!(v1.nx(), nx);
    debug_assert_eq!(v1.ny(), ny);
    let set = |i: usize, j: usize, v1: &mut CoeffGrid, v2: &mut CoeffGrid| {
        let g = problem.dirichlet(sx.greville(i), sy.greville(j), t);
        v1.set(i, j, g[0]);
        v2.set(i, j, g[1]);
    };
    for j in 0..ny {
        set(0, j, v1, v2);
        set(nx - 1, j, v1, v2);
    }
    for i in 0..nx {
        set(i, 0, v1, v2);
        set(i, ny - 1, v1, v2);
    }
}

/// Build the initial flow state: interior L2 projections of the exact
/// fields (boundary coefficients overwritten with Dirichlet interpolation),
/// or the impulsive all-zero start when no exact fields exist.
pub fn project_initial(problem: &ProblemSpec, bundle: &SpaceBundle) -> Result<FlowState> {
    let (vx, vy) = (&bundle.vx_full, &bundle.vy_full);
    let (px, py) = (&bundle.px, &bundle.py);
    let (mut v1, mut v2);
    let p;
    if problem.has_exact() {
        let rule = gauss_legendre_01(vx.degree().max(vy.degree()).max(px.degree()) + 1);
        let mvx = band_lu(&mass(vx, vx)?)?;
        let mvy = band_lu(&mass(vy, vy)?)?;
        let (l1, l2) = load_grid2(vx, vy, &rule, |x, y| {
            problem.exact_velocity(x, y, 0.0).unwrap()
        })?;
        v1 = solve_kron(&mvx, &mvy, &l1)?;
        v2 = solve_kron(&mvx, &mvy, &l2)?;
        apply_dirichlet_frame(&mut v1, &mut v2, bundle, problem, 0.0);

        let mpx = band_lu(&mass(px, px)?)?;
        let mpy = band_lu(&mass(py, py)?)?;
        let lp = load_grid(px, py, &rule, |x, y| problem.exact_pressure(x, y, 0.0).unwrap())?;
        p = solve_kron(&mpx, &mpy, &lp)?;
    } else {
        // impulsive start: all-zero state, boundary data imposed from step 1
        v1 = CoeffGrid::zeros(vx.full_dim(), vy.full_dim());
        v2 = v1.clone();
        p = CoeffGrid::zeros(px.full_dim(), py.full_dim());
    }
    let phi = CoeffGrid::zeros(p.nx(), p.ny());
    Ok(FlowState {
        v1,
        v2,
        p,
        phi,
        step: 0,
        t: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Re-derive the forcing from the calculus pieces, term by term, as an
    /// independent check on the simplified closed forms above.
    fn forcing_oracle(p: &ProblemSpec, x: f64, y: f64, t: f64) -> [f64; 2] {
        let (sx, cx) = (x.sin(), x.cos());
        let (s, c) = ((y + t).sin(), (y + t).cos());
        let v = [sx * s, cx * c];
        let dt_v = [sx * c, -cx * s];
        let lap_v = [-2.0 * sx * s, -2.0 * cx * c];
        let grad_p = [-sx * s, cx * c];
        let grad_v = [[cx * s, sx * c], [-sx * c, -cx * s]];
        let conv = [
            v[0] * grad_v[0][0] + v[1] * grad_v[0][1],
            v[0] * grad_v[1][0] + v[1] * grad_v[1][1],
        ];
        match p.kind {
            ProblemKind::StokesMms => {
                [dt_v[0] - lap_v[0] + grad_p[0], dt_v[1] - lap_v[1] + grad_p[1]]
            }
            ProblemKind::NsMms => [
                dt_v[0] + conv[0] - lap_v[0] / p.re + grad_p[0],
                dt_v[1] + conv[1] - lap_v[1] / p.re + grad_p[1],
            ],
            _ => [0.0, 0.0],
        }
    }

    fn sample_points() -> Vec<(f64, f64, f64)> {
        // low-discrepancy-ish deterministic sample of (x, y, t)
        (0..100)
            .map(|i| {
                let u = (i as f64 * 0.6180339887498949) % 1.0;
                let v = (i as f64 * 0.7548776662466927) % 1.0;
                let w = (i as f64 * 0.5698402909980532) % 1.0;
                (u, v, 2.0 * w)
            })
            .collect()
    }

    #[test]
    fn exact_velocity_is_divergence_free() {
        let p = stokes_mms();
        for (x, y, t) in sample_points() {
            let g = p.exact_velocity_grad(x, y, t).unwrap();
            assert_abs_diff_eq!(g[0][0] + g[1][1], 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn stokes_forcing_matches_pde_residual() {
        let p = stokes_mms();
        for (x, y, t) in sample_points() {
            let f = p.forcing(x, y, t);
            let o = forcing_oracle(&p, x, y, t);
            assert_abs_diff_eq!(f[0], o[0], epsilon = 1e-12);
            assert_abs_diff_eq!(f[1], o[1], epsilon = 1e-12);
        }
        // at (y + t) = 0 the whole of f1 is the time-derivative part sin x
        let f = p.forcing(0.5, 0.0, 0.0);
        assert_abs_diff_eq!(f[0], 0.5f64.sin(), epsilon = 1e-14);
    }

    #[test]
    fn ns_forcing_matches_pde_residual() {
        for re in [1.0, 100.0, 1000.0] {
            let p = ns_mms(re);
            for (x, y, t) in sample_points() {
                let f = p.forcing(x, y, t);
                let o = forcing_oracle(&p, x, y, t);
                assert_abs_diff_eq!(f[0], o[0], epsilon = 1e-12);
                assert_abs_diff_eq!(f[1], o[1], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn forcing_matches_finite_differences() {
        // belt-and-braces: differentiate the exact fields numerically
        let p = ns_mms(1000.0);
        let h = 1e-4;
        let v = |x: f64, y: f64, t: f64| p.exact_velocity(x, y, t).unwrap();
        let pr = |x: f64, y: f64, t: f64| p.exact_pressure(x, y, t).unwrap();
        for (x, y, t) in [(0.3, 0.4, 0.7), (0.6, 0.2, 1.4), (0.5, 0.9, 0.1)] {
            for comp in 0..2 {
                let dt = (v(x, y, t + h)[comp] - v(x, y, t - h)[comp]) / (2.0 * h);
                let lap = (v(x + h, y, t)[comp] + v(x - h, y, t)[comp] + v(x, y + h, t)[comp]
                    + v(x, y - h, t)[comp]
                    - 4.0 * v(x, y, t)[comp])
                    / (h * h);
                let gp = if comp == 0 {
                    (pr(x + h, y, t) - pr(x - h, y, t)) / (2.0 * h)
                } else {
                    (pr(x, y + h, t) - pr(x, y - h, t)) / (2.0 * h)
                };
                let vv = v(x, y, t);
                let dcx = (v(x + h, y, t)[comp] - v(x - h, y, t)[comp]) / (2.0 * h);
                let dcy = (v(x, y + h, t)[comp] - v(x, y - h, t)[comp]) / (2.0 * h);
                let conv = vv[0] * dcx + vv[1] * dcy;
                let want = dt + conv - lap / p.re + gp;
                let got = p.forcing(x, y, t)[comp];
                assert_abs_diff_eq!(got, want, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn initial_velocity_value() {
        let p = stokes_mms();
        let v = p.exact_velocity(0.5, 0.5, 0.0).unwrap();
        assert_abs_diff_eq!(v[0], 0.5f64.sin() * 0.5f64.sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], 0.5f64.cos() * 0.5f64.cos(), epsilon = 1e-15);
    }

    #[test]
    fn cavity_boundary_data() {
        let p = cavity(1000.0);
        assert_eq!(p.dirichlet(0.5, 1.0, 3.0), [1.0, 0.0]);
        assert_eq!(p.dirichlet(0.5, 0.0, 3.0), [0.0, 0.0]);
        assert_eq!(p.dirichlet(0.0, 0.5, 3.0), [0.0, 0.0]);
        // leaky corners take the lid value
        assert_eq!(p.dirichlet(0.0, 1.0, 3.0), [1.0, 0.0]);
        for (x, y, t) in sample_points() {
            assert_eq!(p.forcing(x, y, t), [0.0, 0.0]);
        }
    }

    #[test]
    fn ns_reynolds_configuration() {
        let p = ns_mms(1000.0);
        assert_eq!(p.re, 1000.0);
        assert!(p.include_convection);
        let s = stokes_mms();
        assert_eq!(s.re, 1.0);
        assert!(!s.include_convection);
    }
}
