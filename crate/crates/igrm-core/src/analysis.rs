//! Norm and error computation by element-wise Gauss quadrature, per-step
//! time series recording, and convergence-order fitting.
//!
//! Error quadrature uses one more point per element than assembly so the
//! smooth exact solutions are not aliased.

use crate::assembly::BasisTables;
use crate::error::{Error, Result};
use crate::grid::CoeffGrid;
use crate::problems::ProblemSpec;
use crate::spline::{gauss_legendre_01, QuadratureRule, SplineSpace1D};
use crate::stepper::{FlowState, SpaceBundle};

/// Which norm a field error is measured in. `H1` is the full norm
/// (L2 part plus gradient seminorm).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L2,
    H1,
}

/// One row of the per-step record.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub vel_l2: f64,
    pub vel_h1: f64,
    pub p_l2: f64,
    pub div_l2: f64,
    pub err_vel_l2_rel: Option<f64>,
    pub err_vel_h1_rel: Option<f64>,
    pub err_p_l2_rel: Option<f64>,
}

/// Time series of step records; ends with a blow-up marker when a run
/// diverged.
#[derive(Debug, Clone, Default)]
pub struct NormSeries {
    pub records: Vec<StepRecord>,
    pub blowup_step: Option<usize>,
}

impl NormSeries {
    pub fn push(&mut self, r: StepRecord) {
        if let Some(last) = self.records.last() {
            debug_assert!(r.t >= last.t, "time column must be monotone");
        }
        self.records.push(r);
    }

    pub fn mark_blowup(&mut self, step: usize) {
        self.blowup_step = Some(step);
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.records.last()
    }
}

/// Evaluate a spline field (value and first derivatives) at an arbitrary point.
pub fn eval_field(
    grid: &CoeffGrid,
    sx: &SplineSpace1D,
    sy: &SplineSpace1D,
    x: f64,
    y: f64,
) -> Result<(f64, f64, f64)> {
    let mut bx = crate::spline::LocalBasis::new();
    let mut by = crate::spline::LocalBasis::new();
    sx.eval(x, 1, &mut bx)?;
    sy.eval(y, 1, &mut by)?;
    let mut v = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for i in 0..bx.count {
        let row = grid.row(bx.first + i);
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        for j in 0..by.count {
            let c = row[by.first + j];
            s0 += c * by.values[0][j];
            s1 += c * by.values[1][j];
        }
        v += bx.values[0][i] * s0;
        dx += bx.values[1][i] * s0;
        dy += bx.values[0][i] * s1;
    }
    Ok((v, dx, dy))
}

/// Shared machinery for quadrature sweeps over a tensor-product field.
struct Sampler<'a> {
    sx: &'a SplineSpace1D,
    sy: &'a SplineSpace1D,
    rule: QuadratureRule,
    tx: BasisTables,
    ty: BasisTables,
}

impl<'a> Sampler<'a> {
    fn new(sx: &'a SplineSpace1D, sy: &'a SplineSpace1D) -> Self {
        let rule = gauss_legendre_01(sx.degree().max(sy.degree()) + 2);
        let tx = BasisTables::build(sx, &rule, 1);
        let ty = BasisTables::build(sy, &rule, 1);
        Self { sx, sy, rule, tx, ty }
    }

    /// Accumulate `f(x, y, value, dv/dx, dv/dy, weight)` over all quadrature
    /// points of all elements.
    fn sweep(&self, grid: &CoeffGrid, mut f: impl FnMut(f64, f64, f64, f64, f64, f64)) {
        let (nx, ny) = (self.sx.n_elements(), self.sy.n_elements());
        let (jx, jy) = (1.0 / nx as f64, 1.0 / ny as f64);
        let mloc = self.sx.degree() + 1;
        let nloc = self.sy.degree() + 1;
        for ex in 0..nx {
            for ey in 0..ny {
                for qx in 0..self.rule.len() {
                    let bx = self.tx.at(ex, qx);
                    let x = (ex as f64 + self.rule.nodes[qx]) * jx;
                    let wx = self.rule.weights[qx] * jx;
                    for qy in 0..self.rule.len() {
                        let by = self.ty.at(ey, qy);
                        let y = (ey as f64 + self.rule.nodes[qy]) * jy;
                        let w = wx * self.rule.weights[qy] * jy;
                        let mut v = 0.0;
                        let mut dx = 0.0;
                        let mut dy = 0.0;
                        for i in 0..mloc {
                            let row = &grid.row(bx.first + i)[by.first..by.first + nloc];
                            let mut s0 = 0.0;
                            let mut s1 = 0.0;
                            for j in 0..nloc {
                                s0 += row[j] * by.values[0][j];
                                s1 += row[j] * by.values[1][j];
                            }
                            v += bx.values[0][i] * s0;
                            dx += bx.values[1][i] * s0;
                            dy += bx.values[0][i] * s1;
                        }
                        f(x, y, v, dx, dy, w);
                    }
                }
            }
        }
    }
}

/// Absolute and relative error of a scalar field against an exact callable.
/// The relative part is `None` when the exact norm vanishes.
pub fn field_error(
    grid: &CoeffGrid,
    sx: &SplineSpace1D,
    sy: &SplineSpace1D,
    exact: impl Fn(f64, f64) -> f64,
    exact_grad: impl Fn(f64, f64) -> (f64, f64),
    norm: NormKind,
) -> (f64, Option<f64>) {
    let sampler = Sampler::new(sx, sy);
    let mut err2 = 0.0;
    let mut ref2 = 0.0;
    sampler.sweep(grid, |x, y, v, dx, dy, w| {
        let e = exact(x, y);
        err2 += w * (v - e) * (v - e);
        ref2 += w * e * e;
        if norm == NormKind::H1 {
            let (gx, gy) = exact_grad(x, y);
            err2 += w * ((dx - gx) * (dx - gx) + (dy - gy) * (dy - gy));
            ref2 += w * (gx * gx + gy * gy);
        }
    });
    finish_error(err2, ref2)
}

/// Velocity error over both components (summed squares).
pub fn velocity_error(
    v1: &CoeffGrid,
    v2: &CoeffGrid,
    sx: &SplineSpace1D,
    sy: &SplineSpace1D,
    problem: &ProblemSpec,
    t: f64,
    norm: NormKind,
) -> (f64, Option<f64>) {
    let sampler = Sampler::new(sx, sy);
    let mut err2 = 0.0;
    let mut ref2 = 0.0;
    let mut fields = [(v1, 0usize), (v2, 1usize)];
    for (grid, comp) in fields.iter_mut() {
        sampler.sweep(grid, |x, y, v, dx, dy, w| {
            let e = problem.exact_velocity(x, y, t).unwrap()[*comp];
            err2 += w * (v - e) * (v - e);
            ref2 += w * e * e;
            if norm == NormKind::H1 {
                let g = problem.exact_velocity_grad(x, y, t).unwrap()[*comp];
                err2 += w * ((dx - g[0]) * (dx - g[0]) + (dy - g[1]) * (dy - g[1]));
                ref2 += w * (g[0] * g[0] + g[1] * g[1]);
            }
        });
    }
    finish_error(err2, ref2)
}

fn finish_error(err2: f64, ref2: f64) -> (f64, Option<f64>) {
    let abs = err2.max(0.0).sqrt();
    let r = ref2.max(0.0).sqrt();
    if r > 1e-300 {
        (abs, Some(abs / r))
    } else {
        (abs, None)
    }
}

/// Relative L2 pressure error with the mean of (p_h - p) removed first
/// (pressure is defined up to a constant).
pub fn pressure_error(
    p: &CoeffGrid,
    px: &SplineSpace1D,
    py: &SplineSpace1D,
    exact: impl Fn(f64, f64) -> f64,
) -> (f64, Option<f64>) {
    let sampler = Sampler::new(px, py);
    let mut diff_int = 0.0;
    let mut diff2 = 0.0;
    let mut ref2 = 0.0;
    sampler.sweep(p, |x, y, v, _, _, w| {
        let e = exact(x, y);
        let d = v - e;
        diff_int += w * d;
        diff2 += w * d * d;
        ref2 += w * e * e;
    });
    // |d - mean(d)|^2 = |d|^2 - mean(d)^2 on the unit-measure domain
    let err2 = (diff2 - diff_int * diff_int).max(0.0);
    finish_error(err2, ref2)
}

/// L2 and full-H1 norms of the discrete velocity field.
pub fn velocity_norms(
    v1: &CoeffGrid,
    v2: &CoeffGrid,
    sx: &SplineSpace1D,
    sy: &SplineSpace1D,
) -> (f64, f64) {
    let sampler = Sampler::new(sx, sy);
    let mut l2 = 0.0;
    let mut grad = 0.0;
    for grid in [v1, v2] {
        sampler.sweep(grid, |_, _, v, dx, dy, w| {
            l2 += w * v * v;
            grad += w * (dx * dx + dy * dy);
        });
    }
    (l2.sqrt(), (l2 + grad).sqrt())
}

/// L2 norm of a scalar field.
pub fn scalar_norm(p: &CoeffGrid, sx: &SplineSpace1D, sy: &SplineSpace1D) -> f64 {
    let sampler = Sampler::new(sx, sy);
    let mut l2 = 0.0;
    sampler.sweep(p, |_, _, v, _, _, w| l2 += w * v * v);
    l2.sqrt()
}

/// L2 norm of the divergence of the discrete velocity.
pub fn divergence_norm(
    v1: &CoeffGrid,
    v2: &CoeffGrid,
    sx: &SplineSpace1D,
    sy: &SplineSpace1D,
) -> f64 {
    let sampler = Sampler::new(sx, sy);
    let rule = &sampler.rule;
    let (nx, ny) = (sx.n_elements(), sy.n_elements());
    let (jx, jy) = (1.0 / nx as f64, 1.0 / ny as f64);
    let mloc = sx.degree() + 1;
    let nloc = sy.degree() + 1;
    let mut acc = 0.0;
    for ex in 0..nx {
        for ey in 0..ny {
            for qx in 0..rule.len() {
                let bx = sampler.tx.at(ex, qx);
                let wx = rule.weights[qx] * jx;
                for qy in 0..rule.len() {
                    let by = sampler.ty.at(ey, qy);
                    let w = wx * rule.weights[qy] * jy;
                    let mut d1x = 0.0;
                    let mut d2y = 0.0;
                    for i in 0..mloc {
                        let r1 = &v1.row(bx.first + i)[by.first..by.first + nloc];
                        let r2 = &v2.row(bx.first + i)[by.first..by.first + nloc];
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for j in 0..nloc {
                            s1 += r1[j] * by.values[0][j];
                            s2 += r2[j] * by.values[1][j];
                        }
                        d1x += bx.values[1][i] * s1;
                        d2y += bx.values[0][i] * s2;
                    }
                    let div = d1x + d2y;
                    acc += w * div * div;
                }
            }
        }
    }
    acc.sqrt()
}

/// Least-squares slope of log(error) against log(parameter).
pub fn fit_order(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 3 {
        return Err(Error::InvalidParameter(
            "order fit needs at least 3 (parameter, error) pairs".into(),
        ));
    }
    if pairs.iter().any(|&(h, e)| h <= 0.0 || e <= 0.0) {
        return Err(Error::InvalidParameter(
            "order fit needs positive parameters and errors".into(),
        ));
    }
    let n = pairs.len() as f64;
    let lx: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..pairs.len() {
        num += (lx[i] - mx) * (ly[i] - my);
        den += (lx[i] - mx) * (lx[i] - mx);
    }
    Ok(num / den)
}

/// One fused quadrature pass computing every column of the per-step record.
/// The pressure error is compared against the exact pressure at t - tau/2
/// (the discrete pressure carries the half index).
pub struct Analyzer<'a> {
    bundle: &'a SpaceBundle,
    problem: &'a ProblemSpec,
    tau: f64,
}

impl<'a> Analyzer<'a> {
    pub fn new(bundle: &'a SpaceBundle, problem: &'a ProblemSpec, tau: f64) -> Self {
        Self {
            bundle,
            problem,
            tau,
        }
    }

    pub fn record(&self, state: &FlowState) -> StepRecord {
        let b = self.bundle;
        let (vel_l2, vel_h1) = velocity_norms(&state.v1, &state.v2, &b.vx_full, &b.vy_full);
        let p_l2 = scalar_norm(&state.p, &b.px, &b.py);
        let div_l2 = divergence_norm(&state.v1, &state.v2, &b.vx_full, &b.vy_full);
        let (mut err_vel_l2_rel, mut err_vel_h1_rel, mut err_p_l2_rel) = (None, None, None);
        if self.problem.has_exact() {
            let (_, rl2) = velocity_error(
                &state.v1,
                &state.v2,
                &b.vx_full,
                &b.vy_full,
                self.problem,
                state.t,
                NormKind::L2,
            );
            let (_, rh1) = velocity_error(
                &state.v1,
                &state.v2,
                &b.vx_full,
                &b.vy_full,
                self.problem,
                state.t,
                NormKind::H1,
            );
            let t_p = (state.t - 0.5 * self.tau).max(0.0);
            let (_, rp) = pressure_error(&state.p, &b.px, &b.py, |x, y| {
                self.problem.exact_pressure(x, y, t_p).unwrap()
            });
            err_vel_l2_rel = rl2;
            err_vel_h1_rel = rh1;
            err_p_l2_rel = rp;
        }
        StepRecord {
            step: state.step,
            t: state.t,
            vel_l2,
            vel_h1,
            p_l2,
            div_l2,
            err_vel_l2_rel,
            err_vel_h1_rel,
            err_p_l2_rel,
        }
    }
}
