//! Alternating-direction time stepper for the singularly perturbed
//! Stokes/Navier-Stokes system: pressure predictor, two Peaceman-Rachford
//! velocity half-steps (each implicit in one direction only), the two-factor
//! penalty step and the explicit pressure update.
//!
//! Each implicit solve has Kronecker structure (1D operator in the enriched
//! direction tensored with a mass matrix in the other), so every sub-step
//! costs O(N) per time step. In `igrm` mode the velocity half-steps solve the
//! mixed residual-minimization system with an enriched test space; in
//! `galerkin` mode they solve the plain square system.

use crate::analysis;
use crate::assembly::{
    advection, grid_mul_transpose, load_grid2, mass, stiffness, BandedMatrix, BasisTables,
};
use crate::error::{Error, Result};
use crate::grid::CoeffGrid;
use crate::kron::{band_lu, make_saddle, solve_kron, BandedLu, Direction, SaddleOperator};
use crate::problems::{apply_dirichlet_frame, ProblemSpec};
use crate::spline::{gauss_legendre_01, Boundary, QuadratureRule, SplineSpace1D};

/// Velocity solve discretization: plain Galerkin or residual minimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Galerkin,
    Igrm,
}

/// Time integrator parameters.
#[derive(Debug, Clone)]
pub struct StepperConfig {
    /// time step
    pub tau: f64,
    /// Reynolds number (exactly 1 for the Stokes problem)
    pub re: f64,
    /// pressure-update divergence weight in [0, 1]
    pub chi: f64,
    pub mode: Mode,
    pub include_convection: bool,
    /// blow-up signal threshold, relative to max(1, initial velocity norm)
    pub blowup_bound: f64,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            tau: 1e-2,
            re: 1.0,
            chi: 0.0,
            mode: Mode::Igrm,
            include_convection: false,
            blowup_bound: 10.0,
        }
    }
}

/// Degrees/continuities of the discrete spaces and the mesh resolution.
#[derive(Debug, Clone, Copy)]
pub struct SpaceSpec {
    pub velocity_trial: (usize, i32),
    pub velocity_test: (usize, i32),
    pub pressure_trial: (usize, i32),
    pub pressure_test: (usize, i32),
    pub nx: usize,
    pub ny: usize,
}

impl SpaceSpec {
    /// The space pair used throughout the experiments: trial S(3,2) velocity
    /// and pressure, test S(4,2).
    pub fn standard(nx: usize, ny: usize) -> Self {
        Self {
            velocity_trial: (3, 2),
            velocity_test: (4, 2),
            pressure_trial: (3, 2),
            pressure_test: (4, 2),
            nx,
            ny,
        }
    }
}

/// Realized 1D spaces for both directions.
#[derive(Debug, Clone)]
pub struct SpaceBundle {
    /// velocity trial spaces, zero at both ends (Dirichlet rows handled separately)
    pub vx: SplineSpace1D,
    pub vy: SplineSpace1D,
    /// unconstrained twins of the velocity spaces
    pub vx_full: SplineSpace1D,
    pub vy_full: SplineSpace1D,
    /// velocity test spaces (enriched directions), zero at both ends
    pub tx: SplineSpace1D,
    pub ty: SplineSpace1D,
    /// pressure family, unconstrained (natural boundary conditions)
    pub px: SplineSpace1D,
    pub py: SplineSpace1D,
    /// pressure test family; dimension reporting only
    pub ptx: SplineSpace1D,
    pub pty: SplineSpace1D,
    pub spec: SpaceSpec,
}

impl SpaceBundle {
    pub fn new(spec: SpaceSpec) -> Result<Self> {
        let (mv, kv) = spec.velocity_trial;
        let (mt, kt) = spec.velocity_test;
        let (mp, kp) = spec.pressure_trial;
        let (mq, kq) = spec.pressure_test;
        Ok(Self {
            vx: SplineSpace1D::new(mv, kv, spec.nx, Boundary::ZeroBothEnds)?,
            vy: SplineSpace1D::new(mv, kv, spec.ny, Boundary::ZeroBothEnds)?,
            vx_full: SplineSpace1D::new(mv, kv, spec.nx, Boundary::None)?,
            vy_full: SplineSpace1D::new(mv, kv, spec.ny, Boundary::None)?,
            tx: SplineSpace1D::new(mt, kt, spec.nx, Boundary::ZeroBothEnds)?,
            ty: SplineSpace1D::new(mt, kt, spec.ny, Boundary::ZeroBothEnds)?,
            px: SplineSpace1D::new(mp, kp, spec.nx, Boundary::None)?,
            py: SplineSpace1D::new(mp, kp, spec.ny, Boundary::None)?,
            ptx: SplineSpace1D::new(mq, kq, spec.nx, Boundary::None)?,
            pty: SplineSpace1D::new(mq, kq, spec.ny, Boundary::None)?,
            spec,
        })
    }

    /// Total trial dimension 2 dim(V)^2 + dim(P~) as the experiment tables
    /// count it (the pressure space has one degree of freedom removed).
    pub fn trial_dim_2d(&self) -> usize {
        2 * self.vx_full.full_dim() * self.vy_full.full_dim()
            + self.px.full_dim() * self.py.full_dim()
            - 1
    }

    /// Total test dimension, same convention.
    pub fn test_dim_2d(&self) -> usize {
        2 * self.tx.full_dim() * self.ty.full_dim()
            + self.ptx.full_dim() * self.pty.full_dim()
            - 1
    }
}

/// Velocity and pressure coefficients at one time level. The pressure
/// carries the half-index t_{n-1/2}.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub v1: CoeffGrid,
    pub v2: CoeffGrid,
    pub p: CoeffGrid,
    pub phi: CoeffGrid,
    pub step: usize,
    pub t: f64,
}

/// Per-direction velocity solver.
enum DirSolver {
    Saddle(SaddleOperator),
    /// square Galerkin system: the 1D operator in the enriched direction
    /// and the perpendicular mass, both factored
    Square {
        op: BandedMatrix,
        op_lu: BandedLu,
        mass_perp: BandedMatrix,
        mass_lu: BandedLu,
    },
}

/// Borrowed view on a directional solver, for external verification.
pub enum SolverRef<'a> {
    Saddle(&'a SaddleOperator),
    Square {
        op: &'a BandedMatrix,
        mass_perp: &'a BandedMatrix,
    },
}

/// Assembled operators for one half-step direction.
struct DirOps {
    solver: DirSolver,
    term1_left: BandedMatrix,
    term1_right: BandedMatrix,
    frame_left: BandedMatrix,
    frame_right: BandedMatrix,
    press1_left: BandedMatrix,
    press1_right: BandedMatrix,
    press2_left: BandedMatrix,
    press2_right: BandedMatrix,
}

/// Operators of the two penalty solves and the divergence load.
struct PenaltyOps {
    g1x: BandedMatrix,
    g1y: BandedMatrix,
    mx: BandedMatrix,
    my: BandedMatrix,
    g1x_lu: BandedLu,
    g1y_lu: BandedLu,
    mx_lu: BandedLu,
    my_lu: BandedLu,
    /// divergence load factors: (A(px, vx), M(py, vy)) and (M(px, vx), A(py, vy))
    adx: BandedMatrix,
    mpy_v: BandedMatrix,
    mpx_v: BandedMatrix,
    ady: BandedMatrix,
}

/// Borrowed penalty-system matrices, for external verification.
pub struct PenaltyMatrices<'a> {
    pub g1x: &'a BandedMatrix,
    pub g1y: &'a BandedMatrix,
    pub mx: &'a BandedMatrix,
    pub my: &'a BandedMatrix,
}

/// Running extremes over all directional solves.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepperStats {
    /// max over solves of |B^T r| / |L| (residual orthogonality defect)
    pub max_ortho_ratio: f64,
    /// max over solves of |r| / |L|
    pub max_r_ratio: f64,
    pub saddle_solves: usize,
}

/// Diagnostics of one completed step.
#[derive(Debug, Clone, Copy)]
pub struct StepDiagnostics {
    pub vel_l2: f64,
    pub ortho_ratio: f64,
}

/// The Guermond-Minev splitting stepper. Owns all assembled operators;
/// construct once per configuration and reuse across steps.
pub struct Stepper {
    cfg: StepperConfig,
    problem: ProblemSpec,
    bundle: SpaceBundle,
    x_ops: DirOps,
    y_ops: DirOps,
    penalty: PenaltyOps,
    load_rule: QuadratureRule,
    conv_rule: QuadratureRule,
    initial_norm: Option<f64>,
    stats: StepperStats,
}

impl Stepper {
    pub fn new(problem: ProblemSpec, spec: SpaceSpec, cfg: StepperConfig) -> Result<Self> {
        if cfg.tau <= 0.0 {
            return Err(Error::InvalidParameter("tau must be positive".into()));
        }
        if cfg.re <= 0.0 {
            return Err(Error::InvalidParameter("Re must be positive".into()));
        }
        if !(0.0..=1.0).contains(&cfg.chi) {
            return Err(Error::InvalidParameter("chi must be in [0, 1]".into()));
        }
        if cfg.blowup_bound <= 0.0 {
            return Err(Error::InvalidParameter(
                "blow-up bound must be positive".into(),
            ));
        }
        let bundle = SpaceBundle::new(spec)?;
        let eps = cfg.tau / (2.0 * cfg.re);
        let b = &bundle;

        let row_x: &SplineSpace1D = match cfg.mode {
            Mode::Igrm => &b.tx,
            Mode::Galerkin => &b.vx,
        };
        let row_y: &SplineSpace1D = match cfg.mode {
            Mode::Igrm => &b.ty,
            Mode::Galerkin => &b.vy,
        };

        let x_solver = match cfg.mode {
            Mode::Igrm => DirSolver::Saddle(make_saddle(
                &b.tx,
                &b.vx,
                &b.vy,
                cfg.tau,
                cfg.re,
                Direction::X,
            )?),
            Mode::Galerkin => {
                let op = mass(&b.vx, &b.vx)?.add_scaled(&stiffness(&b.vx, &b.vx)?, eps);
                let mass_perp = mass(&b.vy, &b.vy)?;
                let op_lu = band_lu(&op)?;
                let mass_lu = band_lu(&mass_perp)?;
                DirSolver::Square {
                    op,
                    op_lu,
                    mass_perp,
                    mass_lu,
                }
            }
        };
        let x_ops = DirOps {
            solver: x_solver,
            term1_left: mass(row_x, &b.vx_full)?,
            term1_right: mass(&b.vy, &b.vy_full)?
                .add_scaled(&stiffness(&b.vy, &b.vy_full)?, -eps),
            frame_left: mass(row_x, &b.vx_full)?.add_scaled(&stiffness(row_x, &b.vx_full)?, eps),
            frame_right: mass(&b.vy, &b.vy_full)?,
            press1_left: advection(row_x, &b.px)?,
            press1_right: mass(&b.vy, &b.py)?,
            press2_left: mass(row_x, &b.px)?,
            press2_right: advection(&b.vy, &b.py)?,
        };

        let y_solver = match cfg.mode {
            Mode::Igrm => DirSolver::Saddle(make_saddle(
                &b.ty,
                &b.vy,
                &b.vx,
                cfg.tau,
                cfg.re,
                Direction::Y,
            )?),
            Mode::Galerkin => {
                let op = mass(&b.vy, &b.vy)?.add_scaled(&stiffness(&b.vy, &b.vy)?, eps);
                let mass_perp = mass(&b.vx, &b.vx)?;
                let op_lu = band_lu(&op)?;
                let mass_lu = band_lu(&mass_perp)?;
                DirSolver::Square {
                    op,
                    op_lu,
                    mass_perp,
                    mass_lu,
                }
            }
        };
        let y_ops = DirOps {
            solver: y_solver,
            term1_left: mass(&b.vx, &b.vx_full)?
                .add_scaled(&stiffness(&b.vx, &b.vx_full)?, -eps),
            term1_right: mass(row_y, &b.vy_full)?,
            frame_left: mass(&b.vx, &b.vx_full)?,
            frame_right: mass(row_y, &b.vy_full)?.add_scaled(&stiffness(row_y, &b.vy_full)?, eps),
            press1_left: advection(&b.vx, &b.px)?,
            press1_right: mass(row_y, &b.py)?,
            press2_left: mass(&b.vx, &b.px)?,
            press2_right: advection(row_y, &b.py)?,
        };

        let g1x = mass(&b.px, &b.px)?.add_scaled(&stiffness(&b.px, &b.px)?, 1.0);
        let g1y = mass(&b.py, &b.py)?.add_scaled(&stiffness(&b.py, &b.py)?, 1.0);
        let mx = mass(&b.px, &b.px)?;
        let my = mass(&b.py, &b.py)?;
        let penalty = PenaltyOps {
            g1x_lu: band_lu(&g1x)?,
            g1y_lu: band_lu(&g1y)?,
            mx_lu: band_lu(&mx)?,
            my_lu: band_lu(&my)?,
            g1x,
            g1y,
            mx,
            my,
            adx: advection(&b.px, &b.vx_full)?,
            mpy_v: mass(&b.py, &b.vy_full)?,
            mpx_v: mass(&b.px, &b.vx_full)?,
            ady: advection(&b.py, &b.vy_full)?,
        };

        let mv = spec.velocity_trial.0;
        let row_deg = spec.velocity_test.0.max(mv);
        let load_pts = mv.max(row_deg).max(spec.pressure_trial.0) + 1;
        // the convection integrand has trial value * trial derivative * test
        // factors, one degree beyond the bilinear assembly rule
        let conv_pts = (2 * mv + row_deg) / 2 + 1;

        Ok(Self {
            cfg,
            problem,
            bundle,
            x_ops,
            y_ops,
            penalty,
            load_rule: gauss_legendre_01(load_pts),
            conv_rule: gauss_legendre_01(conv_pts.max(load_pts)),
            initial_norm: None,
            stats: StepperStats::default(),
        })
    }

    pub fn bundle(&self) -> &SpaceBundle {
        &self.bundle
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    pub fn stats(&self) -> StepperStats {
        self.stats
    }

    pub fn x_solver(&self) -> SolverRef<'_> {
        match &self.x_ops.solver {
            DirSolver::Saddle(s) => SolverRef::Saddle(s),
            DirSolver::Square { op, mass_perp, .. } => SolverRef::Square { op, mass_perp },
        }
    }

    pub fn y_solver(&self) -> SolverRef<'_> {
        match &self.y_ops.solver {
            DirSolver::Saddle(s) => SolverRef::Saddle(s),
            DirSolver::Square { op, mass_perp, .. } => SolverRef::Square { op, mass_perp },
        }
    }

    pub fn penalty_matrices(&self) -> PenaltyMatrices<'_> {
        PenaltyMatrices {
            g1x: &self.penalty.g1x,
            g1y: &self.penalty.g1y,
            mx: &self.penalty.mx,
            my: &self.penalty.my,
        }
    }

    /// Initial state for this stepper's problem and spaces.
    pub fn initial_state(&self) -> Result<FlowState> {
        crate::problems::project_initial(&self.problem, &self.bundle)
    }

    /// Pressure predictor p~ = p^{n-1/2} + phi^{n-1/2}.
    pub fn pressure_predictor(&self, state: &FlowState) -> CoeffGrid {
        state.p.add(&state.phi)
    }

    /// Right-hand sides of the x half-step (both components), including the
    /// boundary-frame correction at the half-step time.
    pub fn assemble_loads_x(
        &self,
        state: &FlowState,
        p_tilde: &CoeffGrid,
    ) -> Result<(CoeffGrid, CoeffGrid)> {
        let ops = &self.x_ops;
        let tau = self.cfg.tau;
        let t_half = state.t + 0.5 * tau;
        let row_x = self.row_space_x();

        let mut l1 = grid_mul_transpose(&ops.term1_left.mul_grid(&state.v1), &ops.term1_right);
        let mut l2 = grid_mul_transpose(&ops.term1_left.mul_grid(&state.v2), &ops.term1_right);

        if self.cfg.include_convection {
            let (c1, c2) = convection_load(
                &self.bundle.vx_full,
                &self.bundle.vy_full,
                &state.v1,
                &state.v2,
                row_x,
                &self.bundle.vy,
                &self.conv_rule,
            );
            l1.axpy(-0.5 * tau, &c1);
            l2.axpy(-0.5 * tau, &c2);
        }

        let g1 = grid_mul_transpose(&ops.press1_left.mul_grid(p_tilde), &ops.press1_right);
        let g2 = grid_mul_transpose(&ops.press2_left.mul_grid(p_tilde), &ops.press2_right);
        l1.axpy(-0.5 * tau, &g1);
        l2.axpy(-0.5 * tau, &g2);

        let (f1, f2) = load_grid2(row_x, &self.bundle.vy, &self.load_rule, |x, y| {
            self.problem.forcing(x, y, t_half)
        })?;
        l1.axpy(0.5 * tau, &f1);
        l2.axpy(0.5 * tau, &f2);

        let (fr1, fr2) = self.dirichlet_frames(t_half);
        l1.axpy(
            -1.0,
            &grid_mul_transpose(&ops.frame_left.mul_grid(&fr1), &ops.frame_right),
        );
        l2.axpy(
            -1.0,
            &grid_mul_transpose(&ops.frame_left.mul_grid(&fr2), &ops.frame_right),
        );
        Ok((l1, l2))
    }

    /// Right-hand sides of the y step applied to the half-step velocity.
    pub fn assemble_loads_y(
        &self,
        v1_half: &CoeffGrid,
        v2_half: &CoeffGrid,
        p_tilde: &CoeffGrid,
        t_half: f64,
        t_new: f64,
    ) -> Result<(CoeffGrid, CoeffGrid)> {
        let ops = &self.y_ops;
        let tau = self.cfg.tau;
        let row_y = self.row_space_y();

        let mut l1 = grid_mul_transpose(&ops.term1_left.mul_grid(v1_half), &ops.term1_right);
        let mut l2 = grid_mul_transpose(&ops.term1_left.mul_grid(v2_half), &ops.term1_right);

        let g1 = grid_mul_transpose(&ops.press1_left.mul_grid(p_tilde), &ops.press1_right);
        let g2 = grid_mul_transpose(&ops.press2_left.mul_grid(p_tilde), &ops.press2_right);
        l1.axpy(-0.5 * tau, &g1);
        l2.axpy(-0.5 * tau, &g2);

        let (f1, f2) = load_grid2(&self.bundle.vx, row_y, &self.load_rule, |x, y| {
            self.problem.forcing(x, y, t_half)
        })?;
        l1.axpy(0.5 * tau, &f1);
        l2.axpy(0.5 * tau, &f2);

        let (fr1, fr2) = self.dirichlet_frames(t_new);
        l1.axpy(
            -1.0,
            &grid_mul_transpose(&ops.frame_left.mul_grid(&fr1), &ops.frame_right),
        );
        l2.axpy(
            -1.0,
            &grid_mul_transpose(&ops.frame_left.mul_grid(&fr2), &ops.frame_right),
        );
        Ok((l1, l2))
    }

    fn row_space_x(&self) -> &SplineSpace1D {
        match self.cfg.mode {
            Mode::Igrm => &self.bundle.tx,
            Mode::Galerkin => &self.bundle.vx,
        }
    }

    fn row_space_y(&self) -> &SplineSpace1D {
        match self.cfg.mode {
            Mode::Igrm => &self.bundle.ty,
            Mode::Galerkin => &self.bundle.vy,
        }
    }

    /// Boundary-frame grids with Dirichlet data at time `t` (zero interior).
    fn dirichlet_frames(&self, t: f64) -> (CoeffGrid, CoeffGrid) {
        let (nx, ny) = (
            self.bundle.vx_full.full_dim(),
            self.bundle.vy_full.full_dim(),
        );
        let mut f1 = CoeffGrid::zeros(nx, ny);
        let mut f2 = CoeffGrid::zeros(nx, ny);
        apply_dirichlet_frame(&mut f1, &mut f2, &self.bundle, &self.problem, t);
        (f1, f2)
    }

    fn solve_dir(
        &mut self,
        ops_is_x: bool,
        l: &CoeffGrid,
    ) -> Result<CoeffGrid> {
        let solver = if ops_is_x {
            &self.x_ops.solver
        } else {
            &self.y_ops.solver
        };
        match solver {
            DirSolver::Saddle(s) => {
                let sol = s.solve(l)?;
                let r_ratio = sol.r.linf() / l.linf().max(1e-300);
                self.stats.max_ortho_ratio = self.stats.max_ortho_ratio.max(sol.ortho_ratio);
                self.stats.max_r_ratio = self.stats.max_r_ratio.max(r_ratio);
                self.stats.saddle_solves += 1;
                Ok(sol.u)
            }
            DirSolver::Square { op_lu, mass_lu, .. } => {
                if ops_is_x {
                    solve_kron(op_lu, mass_lu, l)
                } else {
                    solve_kron(mass_lu, op_lu, l)
                }
            }
        }
    }

    /// First Peaceman-Rachford half-step: implicit in x. Returns the full
    /// coefficient grids of v^{n+1/2} with the half-time boundary frame.
    pub fn velocity_half_step_x(
        &mut self,
        state: &FlowState,
        p_tilde: &CoeffGrid,
    ) -> Result<(CoeffGrid, CoeffGrid)> {
        let (l1, l2) = self.assemble_loads_x(state, p_tilde)?;
        let u1 = self.solve_dir(true, &l1)?;
        let u2 = self.solve_dir(true, &l2)?;
        let t_half = state.t + 0.5 * self.cfg.tau;
        let (mut v1, mut v2) = self.dirichlet_frames(t_half);
        v1.embed(&u1, 1, 1);
        v2.embed(&u2, 1, 1);
        self.check_finite(&v1, &v2, state.step + 1)?;
        Ok((v1, v2))
    }

    /// Second half-step: implicit in y. Returns v^{n+1} with the new-time frame.
    pub fn velocity_step_y(
        &mut self,
        v1_half: &CoeffGrid,
        v2_half: &CoeffGrid,
        p_tilde: &CoeffGrid,
        t_half: f64,
        t_new: f64,
        step: usize,
    ) -> Result<(CoeffGrid, CoeffGrid)> {
        let (l1, l2) = self.assemble_loads_y(v1_half, v2_half, p_tilde, t_half, t_new)?;
        let u1 = self.solve_dir(false, &l1)?;
        let u2 = self.solve_dir(false, &l2)?;
        let (mut v1, mut v2) = self.dirichlet_frames(t_new);
        v1.embed(&u1, 1, 1);
        v2.embed(&u2, 1, 1);
        self.check_finite(&v1, &v2, step)?;
        Ok((v1, v2))
    }

    /// Weak divergence load ((div v), w) on the pressure grid.
    pub fn divergence_load(&self, v1: &CoeffGrid, v2: &CoeffGrid) -> CoeffGrid {
        let p = &self.penalty;
        let mut d = grid_mul_transpose(&p.adx.mul_grid(v1), &p.mpy_v);
        d.axpy(
            1.0,
            &grid_mul_transpose(&p.mpx_v.mul_grid(v2), &p.ady),
        );
        d
    }

    /// Two-factor penalty solve: psi from (1 - dxx), then phi from (1 - dyy).
    /// Both are plain Galerkin systems on the unconstrained pressure family.
    pub fn penalty_step(&self, v1_new: &CoeffGrid, v2_new: &CoeffGrid) -> Result<CoeffGrid> {
        let pen = &self.penalty;
        let mut rhs_psi = self.divergence_load(v1_new, v2_new);
        rhs_psi.scale(-1.0 / self.cfg.tau);
        let psi = solve_kron(&pen.g1x_lu, &pen.my_lu, &rhs_psi)?;
        let rhs_phi = grid_mul_transpose(&pen.mx.mul_grid(&psi), &pen.my);
        solve_kron(&pen.mx_lu, &pen.g1y_lu, &rhs_phi)
    }

    /// Pressure update p^{n+1/2} = p^{n-1/2} + phi^{n+1/2}
    /// - (chi/Re) * projection of div((v^{n+1} + v^n)/2).
    pub fn pressure_update(
        &self,
        state: &FlowState,
        phi_new: &CoeffGrid,
        v1_new: &CoeffGrid,
        v2_new: &CoeffGrid,
    ) -> Result<CoeffGrid> {
        let mut p = state.p.add(phi_new);
        if self.cfg.chi > 0.0 {
            let mut a1 = state.v1.add(v1_new);
            let mut a2 = state.v2.add(v2_new);
            a1.scale(0.5);
            a2.scale(0.5);
            let load = self.divergence_load(&a1, &a2);
            let proj = solve_kron(&self.penalty.mx_lu, &self.penalty.my_lu, &load)?;
            p.axpy(-self.cfg.chi / self.cfg.re, &proj);
        }
        Ok(p)
    }

    fn check_finite(&self, v1: &CoeffGrid, v2: &CoeffGrid, step: usize) -> Result<()> {
        if v1.is_finite() && v2.is_finite() {
            return Ok(());
        }
        Err(Error::BlowUp {
            step,
            norm: f64::NAN,
            bound: self.cfg.blowup_bound,
        })
    }

    /// Advance the state by one time step, executing the four sub-steps in
    /// order. Forcing is evaluated at t_n + tau/2, the final Dirichlet data
    /// at t_{n+1}. Raises the blow-up signal when the velocity norm exceeds
    /// bound * max(1, initial norm) or turns non-finite.
    pub fn advance(&mut self, state: &mut FlowState) -> Result<StepDiagnostics> {
        let b = &self.bundle;
        if self.initial_norm.is_none() {
            let (l2, _) =
                analysis::velocity_norms(&state.v1, &state.v2, &b.vx_full, &b.vy_full);
            self.initial_norm = Some(l2);
        }
        let tau = self.cfg.tau;
        let t_half = state.t + 0.5 * tau;
        let t_new = state.t + tau;
        let new_step = state.step + 1;

        let p_tilde = self.pressure_predictor(state);
        let (v1h, v2h) = self.velocity_half_step_x(state, &p_tilde)?;
        let (v1n, v2n) = self.velocity_step_y(&v1h, &v2h, &p_tilde, t_half, t_new, new_step)?;
        let phi_new = self.penalty_step(&v1n, &v2n)?;
        let p_new = self.pressure_update(state, &phi_new, &v1n, &v2n)?;

        let b = &self.bundle;
        let (vel_l2, _) = analysis::velocity_norms(&v1n, &v2n, &b.vx_full, &b.vy_full);
        let threshold = self.cfg.blowup_bound * self.initial_norm.unwrap().max(1.0);
        if !vel_l2.is_finite() || vel_l2 > threshold {
            return Err(Error::BlowUp {
                step: new_step,
                norm: vel_l2,
                bound: threshold,
            });
        }

        state.v1 = v1n;
        state.v2 = v2n;
        state.p = p_new;
        state.phi = phi_new;
        state.step = new_step;
        state.t = t_new;
        Ok(StepDiagnostics {
            vel_l2,
            ortho_ratio: self.stats.max_ortho_ratio,
        })
    }
}

/// Load vectors of the explicit convection term ((v . grad) v, w) for both
/// components, tested against row_x (x) row_y. Equals the contraction of the
/// third-order convection tensors with the velocity coefficients.
pub fn convection_load(
    trial_x: &SplineSpace1D,
    trial_y: &SplineSpace1D,
    c1: &CoeffGrid,
    c2: &CoeffGrid,
    row_x: &SplineSpace1D,
    row_y: &SplineSpace1D,
    rule: &QuadratureRule,
) -> (CoeffGrid, CoeffGrid) {
    assert_eq!(trial_x.n_elements(), row_x.n_elements());
    assert_eq!(trial_y.n_elements(), row_y.n_elements());
    let (nx, ny) = (trial_x.n_elements(), trial_y.n_elements());
    let (jx, jy) = (1.0 / nx as f64, 1.0 / ny as f64);
    let ttx = BasisTables::build(trial_x, rule, 1);
    let tty = BasisTables::build(trial_y, rule, 1);
    let trx = BasisTables::build(row_x, rule, 0);
    let tr_y = BasisTables::build(row_y, rule, 0);
    let (xlo, xhi) = (row_x.active_offset(), row_x.active_last());
    let (ylo, yhi) = (row_y.active_offset(), row_y.active_last());
    let mut out1 = CoeffGrid::zeros(xhi + 1 - xlo, yhi + 1 - ylo);
    let mut out2 = out1.clone();

    let mloc = trial_x.degree() + 1;
    let nloc = trial_y.degree() + 1;
    let mut tmp = [[0.0f64; crate::spline::MAX_LOCAL]; 4];
    for ex in 0..nx {
        for ey in 0..ny {
            for qx in 0..rule.len() {
                let bx = ttx.at(ex, qx);
                let rx = trx.at(ex, qx);
                let wx = rule.weights[qx] * jx;
                for qy in 0..rule.len() {
                    let by = tty.at(ey, qy);
                    let ry = tr_y.at(ey, qy);
                    let w = wx * rule.weights[qy] * jy;
                    // contract x first: tmp rows are (c1 B, c1 B', c2 B, c2 B')
                    for j in 0..nloc {
                        tmp[0][j] = 0.0;
                        tmp[1][j] = 0.0;
                        tmp[2][j] = 0.0;
                        tmp[3][j] = 0.0;
                    }
                    for i in 0..mloc {
                        let gi = bx.first + i;
                        let (b, db) = (bx.values[0][i], bx.values[1][i]);
                        let r1 = &c1.row(gi)[by.first..by.first + nloc];
                        let r2 = &c2.row(gi)[by.first..by.first + nloc];
                        for j in 0..nloc {
                            tmp[0][j] += b * r1[j];
                            tmp[1][j] += db * r1[j];
                            tmp[2][j] += b * r2[j];
                            tmp[3][j] += db * r2[j];
                        }
                    }
                    let (mut v1, mut d1x, mut d1y) = (0.0, 0.0, 0.0);
                    let (mut v2, mut d2x, mut d2y) = (0.0, 0.0, 0.0);
                    for j in 0..nloc {
                        let (b, db) = (by.values[0][j], by.values[1][j]);
                        v1 += tmp[0][j] * b;
                        d1x += tmp[1][j] * b;
                        d1y += tmp[0][j] * db;
                        v2 += tmp[2][j] * b;
                        d2x += tmp[3][j] * b;
                        d2y += tmp[2][j] * db;
                    }
                    let conv1 = w * (v1 * d1x + v2 * d1y);
                    let conv2 = w * (v1 * d2x + v2 * d2y);
                    for li in 0..rx.count {
                        let gi = rx.first + li;
                        if gi < xlo || gi > xhi {
                            continue;
                        }
                        let bi = rx.values[0][li];
                        for lj in 0..ry.count {
                            let gj = ry.first + lj;
                            if gj < ylo || gj > yhi {
                                continue;
                            }
                            let s = bi * ry.values[0][lj];
                            out1.add_at(gi - xlo, gj - ylo, conv1 * s);
                            out2.add_at(gi - xlo, gj - ylo, conv2 * s);
                        }
                    }
                }
            }
        }
    }
    (out1, out2)
}
