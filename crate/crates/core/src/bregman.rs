//! Bregman iteration for `min ½‖Su − z‖²` over a box.
//!
//! Each outer step minimizes `½‖Su − z‖² + α_k D^{λ_{k−1}}(u, u_{k−1})`,
//! where `D` is the Bregman distance of `J(u) = ½‖u‖² + I_box(u)`, and then
//! accumulates the multiplier `λ_k = λ_{k−1} + α_k^{-1} S*(z − S u_k)`.
//!
//! The subproblem is the projection equation
//! `u = P_box(λ_{k−1} + α^{-1} S*(z − S u))`, solved by a primal-dual active
//! set (semi-smooth Newton) iteration whose linear steps are conjugate
//! gradient solves with `I + α^{-1} S*S` restricted to the inactive nodes.

use crate::error::{Error, Result};
use crate::grid::{BoxBounds, Grid, GridFunction};
use crate::pde::StateOperator;
use crate::problems::TestProblem;

/// The regularization parameters `α_1, α_2, ...`.
#[derive(Debug, Clone, PartialEq)]
pub enum AlphaSchedule {
    Constant(f64),
    /// Explicit values for `k = 1, 2, ..., len`.
    Sequence(Vec<f64>),
}

impl AlphaSchedule {
    pub fn constant(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be positive and finite, got {alpha}"
            )));
        }
        Ok(Self::Constant(alpha))
    }

    pub fn sequence(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty alpha sequence".into()));
        }
        if let Some(bad) = values.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "alpha values must be positive and finite, got {bad}"
            )));
        }
        Ok(Self::Sequence(values))
    }

    /// `α_k` for `k >= 1`, or `None` past the end of a finite sequence.
    pub fn alpha(&self, k: usize) -> Option<f64> {
        if k == 0 {
            return None;
        }
        match self {
            Self::Constant(a) => Some(*a),
            Self::Sequence(v) => v.get(k - 1).copied(),
        }
    }

    pub fn covers(&self, k: usize) -> bool {
        match self {
            Self::Constant(_) => true,
            Self::Sequence(v) => k <= v.len(),
        }
    }
}

/// Tolerances for the subproblem solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Sup-norm bound on `u − P(λ + α^{-1} S*(z − Su))` at termination.
    pub tolerance: f64,
    pub max_newton_steps: usize,
    /// Relative residual for the reduced conjugate gradient solves.
    pub cg_tolerance: f64,
    pub cg_max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_newton_steps: 50,
            cg_tolerance: 1e-12,
            cg_max_iterations: 500,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.tolerance) || !positive(self.cg_tolerance) {
            return Err(Error::InvalidArgument(
                "solver tolerances must be positive".into(),
            ));
        }
        if self.max_newton_steps == 0 || self.cg_max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "solver step limits must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// `D^λ(u, v) = J(u) − J(v) − (u − v, λ)` for feasible `u`, `v`.
///
/// Returns [`Error::Infeasible`] when either argument leaves the box, where
/// the indicator part of `J` is infinite.
pub fn bregman_distance(
    u: &GridFunction,
    v: &GridFunction,
    lambda: &GridFunction,
    bounds: &BoxBounds,
) -> Result<f64> {
    u.ensure_same_grid(v)?;
    u.ensure_same_grid(lambda)?;
    for f in [u, v] {
        if let Some((node, &value)) = f
            .values()
            .iter()
            .enumerate()
            .find(|(_, x)| !bounds.contains(**x))
        {
            return Err(Error::Infeasible { node, value });
        }
    }
    let grid = u.grid();
    let uu = grid.dot(u.values(), u.values());
    let vv = grid.dot(v.values(), v.values());
    let diff: Vec<f64> = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| a - b)
        .collect();
    Ok(0.5 * uu - 0.5 * vv - grid.dot(&diff, lambda.values()))
}

/// Result of one regularized subproblem.
#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub control: GridFunction,
    /// `λ_prev + α^{-1} S*(z − S u)` at the returned control; this is the
    /// next Bregman multiplier.
    pub multiplier: GridFunction,
    /// `S u` at the returned control.
    pub state: GridFunction,
    pub newton_steps: usize,
    /// `‖u − P(multiplier)‖_∞`.
    pub defect: f64,
}

/// Solves `min ½‖Su − z‖² + α (½‖u‖² − (u, λ_prev))` over the box, starting
/// the active-set iteration from `u_start`.
pub fn solve_subproblem<O: StateOperator + ?Sized>(
    op: &O,
    z: &GridFunction,
    bounds: &BoxBounds,
    alpha: f64,
    lambda_prev: &GridFunction,
    u_start: &GridFunction,
    settings: &SolverSettings,
) -> Result<SubproblemSolution> {
    let grid = op.grid();
    for f in [z, lambda_prev, u_start] {
        if !crate::grid::same_grid(grid, f.grid()) {
            return Err(Error::GridMismatch);
        }
    }
    let mut solver = Subproblem::new(op, z)?;
    solver.solve(bounds, alpha, lambda_prev, u_start, settings)
}

/// `λ_prev + α^{-1} S*(z − S u_new)`.
pub fn update_multiplier<O: StateOperator + ?Sized>(
    lambda_prev: &GridFunction,
    alpha: f64,
    op: &O,
    z: &GridFunction,
    u_new: &GridFunction,
) -> Result<GridFunction> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    lambda_prev.ensure_same_grid(z)?;
    lambda_prev.ensure_same_grid(u_new)?;
    let y = op.forward(u_new)?;
    let r = z.sub(&y)?;
    let p = op.adjoint(&r)?;
    let values = lambda_prev
        .values()
        .iter()
        .zip(p.values())
        .map(|(l, q)| l + q / alpha)
        .collect();
    GridFunction::from_values(lambda_prev.grid(), values)
}

/// Reusable state for a sequence of subproblems sharing `S` and `z`.
struct Subproblem<'a, O: StateOperator + ?Sized> {
    op: &'a O,
    grid: &'a std::sync::Arc<Grid>,
    z: &'a GridFunction,
    adjoint_target: Vec<f64>,
    buf_a: Vec<f64>,
    buf_b: Vec<f64>,
}

impl<'a, O: StateOperator + ?Sized> Subproblem<'a, O> {
    fn new(op: &'a O, z: &'a GridFunction) -> Result<Self> {
        let n = z.values().len();
        let mut adjoint_target = vec![0.0; n];
        op.adjoint_into(z.values(), &mut adjoint_target)?;
        Ok(Self {
            op,
            grid: op.grid(),
            z,
            adjoint_target,
            buf_a: vec![0.0; n],
            buf_b: vec![0.0; n],
        })
    }

    /// `out = S*S x`, two solves.
    fn normal_apply(&mut self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.op.forward_into(x, &mut self.buf_a)?;
        self.op.adjoint_into(&self.buf_a, out)
    }

    /// Fills `state = S u` and `q = λ + α^{-1} S*(z − S u)`.
    fn unprojected(
        &mut self,
        u: &[f64],
        lambda: &[f64],
        alpha: f64,
        state: &mut [f64],
        q: &mut [f64],
    ) -> Result<()> {
        self.op.forward_into(u, state)?;
        for ((r, z), y) in self.buf_b.iter_mut().zip(self.z.values()).zip(state.iter()) {
            *r = z - y;
        }
        self.op.adjoint_into(&self.buf_b, q)?;
        for (qi, l) in q.iter_mut().zip(lambda) {
            *qi = l + *qi / alpha;
        }
        Ok(())
    }

    fn solve(
        &mut self,
        bounds: &BoxBounds,
        alpha: f64,
        lambda_prev: &GridFunction,
        u_start: &GridFunction,
        settings: &SolverSettings,
    ) -> Result<SubproblemSolution> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        settings.validate()?;
        let n = lambda_prev.values().len();
        let lambda = lambda_prev.values();
        let mut u: Vec<f64> = u_start.values().iter().map(|&v| bounds.clamp(v)).collect();
        let mut state = vec![0.0; n];
        let mut q = vec![0.0; n];
        self.unprojected(&u, lambda, alpha, &mut state, &mut q)?;
        let mut defect = projection_defect(&u, &q, bounds);

        let mut steps = 0;
        let mut previous: Option<Vec<i8>> = None;
        while defect > settings.tolerance {
            let sets: Vec<i8> = q
                .iter()
                .map(|&v| {
                    if v > bounds.upper() {
                        1
                    } else if v < bounds.lower() {
                        -1
                    } else {
                        0
                    }
                })
                .collect();
            if previous.as_ref() == Some(&sets) {
                break;
            }
            if steps == settings.max_newton_steps {
                return Err(Error::SubproblemNotConverged { steps, defect });
            }
            steps += 1;
            self.newton_step(&sets, bounds, alpha, lambda, &mut u, settings)?;
            self.unprojected(&u, lambda, alpha, &mut state, &mut q)?;
            defect = projection_defect(&u, &q, bounds);
            previous = Some(sets);
        }

        // pin to the box exactly; the move is bounded by the defect
        let mut moved = false;
        for v in u.iter_mut() {
            let c = bounds.clamp(*v);
            if c != *v {
                *v = c;
                moved = true;
            }
        }
        if moved {
            self.unprojected(&u, lambda, alpha, &mut state, &mut q)?;
            defect = projection_defect(&u, &q, bounds);
        }
        if defect > settings.tolerance {
            return Err(Error::SubproblemNotConverged { steps, defect });
        }
        Ok(SubproblemSolution {
            control: GridFunction::from_values(self.grid, u)?,
            multiplier: GridFunction::from_values(self.grid, q)?,
            state: GridFunction::from_values(self.grid, state)?,
            newton_steps: steps,
            defect,
        })
    }

    /// Fixes `u` on the active sets and solves
    /// `(I + α^{-1} S*S)_{II} u_I = (λ + α^{-1} S*z − α^{-1} S*S u_A)_I`.
    fn newton_step(
        &mut self,
        sets: &[i8],
        bounds: &BoxBounds,
        alpha: f64,
        lambda: &[f64],
        u: &mut [f64],
        settings: &SolverSettings,
    ) -> Result<()> {
        let n = u.len();
        let inactive: Vec<bool> = sets.iter().map(|&s| s == 0).collect();
        let mut fixed = vec![0.0; n];
        for i in 0..n {
            fixed[i] = match sets[i] {
                1 => bounds.upper(),
                -1 => bounds.lower(),
                _ => 0.0,
            };
        }
        let mut coupling = vec![0.0; n];
        self.normal_apply(&fixed, &mut coupling)?;
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            if inactive[i] {
                rhs[i] = lambda[i] + (self.adjoint_target[i] - coupling[i]) / alpha;
            }
        }
        let mut x: Vec<f64> = (0..n)
            .map(|i| if inactive[i] { u[i] } else { 0.0 })
            .collect();
        self.reduced_cg(&inactive, alpha, &rhs, &mut x, settings)?;
        for i in 0..n {
            u[i] = if inactive[i] { x[i] } else { fixed[i] };
        }
        Ok(())
    }

    fn reduced_cg(
        &mut self,
        inactive: &[bool],
        alpha: f64,
        b: &[f64],
        x: &mut [f64],
        settings: &SolverSettings,
    ) -> Result<()> {
        let n = b.len();
        let bnorm = norm2(b);
        if bnorm == 0.0 && norm2(x) == 0.0 {
            return Ok(());
        }
        let threshold = (settings.cg_tolerance * bnorm).min(1e-2 * settings.tolerance);
        let mut ax = vec![0.0; n];
        self.reduced_apply(inactive, alpha, x, &mut ax)?;
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        let mut ap = vec![0.0; n];
        for _ in 0..settings.cg_max_iterations {
            if rr.sqrt() <= threshold {
                return Ok(());
            }
            self.reduced_apply(inactive, alpha, &p, &mut ap)?;
            let step = rr / dot(&p, &ap);
            for i in 0..n {
                x[i] += step * p[i];
                r[i] -= step * ap[i];
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
        }
        if rr.sqrt() <= threshold {
            return Ok(());
        }
        Err(Error::CgFailure {
            iterations: settings.cg_max_iterations,
            residual: rr.sqrt() / bnorm.max(f64::MIN_POSITIVE),
        })
    }

    /// `out = mask ⊙ (x + α^{-1} S*S (mask ⊙ x))`; `x` is zero off the mask.
    fn reduced_apply(
        &mut self,
        inactive: &[bool],
        alpha: f64,
        x: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        self.normal_apply(x, out)?;
        for i in 0..x.len() {
            out[i] = if inactive[i] {
                x[i] + out[i] / alpha
            } else {
                0.0
            };
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn projection_defect(u: &[f64], q: &[f64], bounds: &BoxBounds) -> f64 {
    u.iter().zip(q).fold(0.0_f64, |m, (&ui, &qi)| {
        m.max((ui - bounds.clamp(qi)).abs())
    })
}

/// Full state after iteration `k` (`k = 0` is the initialization).
#[derive(Debug, Clone)]
pub struct IterationState {
    pub k: usize,
    pub control: GridFunction,
    pub multiplier: GridFunction,
    /// `½‖S u_k − z‖²`.
    pub residual: f64,
    /// `‖u_k − u†‖²` when the exact solution is known.
    pub error_sq: Option<f64>,
    pub newton_steps: usize,
    /// `‖u_k − P(λ_k)‖_∞`.
    pub defect: f64,
}

/// Scalar summary of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub residual: f64,
    pub error_sq: Option<f64>,
    pub newton_steps: usize,
    pub defect: f64,
}

impl From<&IterationState> for IterationRecord {
    fn from(s: &IterationState) -> Self {
        Self {
            k: s.k,
            residual: s.residual,
            error_sq: s.error_sq,
            newton_steps: s.newton_steps,
            defect: s.defect,
        }
    }
}

/// History of a Bregman run. `records[k]` describes iterate `k`, from the
/// initialization `k = 0` through `k = K`.
#[derive(Debug, Clone)]
pub struct BregmanRun {
    pub records: Vec<IterationRecord>,
    pub final_state: IterationState,
}

impl BregmanRun {
    /// Squared errors indexed by `k`; `NaN` where unknown.
    pub fn squared_errors(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.error_sq.unwrap_or(f64::NAN))
            .collect()
    }
}

/// Runs `iterations` Bregman steps on `problem`.
pub fn run_bregman(
    problem: &TestProblem,
    schedule: &AlphaSchedule,
    iterations: usize,
    settings: &SolverSettings,
) -> Result<BregmanRun> {
    run_bregman_with(problem, schedule, iterations, settings, |_| Ok(()))
}

/// Like [`run_bregman`], handing every full iterate (including `k = 0`) to
/// `observer` as soon as it is available. An observer error aborts the run.
pub fn run_bregman_with(
    problem: &TestProblem,
    schedule: &AlphaSchedule,
    iterations: usize,
    settings: &SolverSettings,
    mut observer: impl FnMut(&IterationState) -> Result<()>,
) -> Result<BregmanRun> {
    if iterations == 0 {
        return Err(Error::InvalidArgument(
            "at least one iteration is required".into(),
        ));
    }
    if !schedule.covers(iterations) {
        return Err(Error::InvalidArgument(format!(
            "alpha schedule does not cover {iterations} iterations"
        )));
    }
    settings.validate()?;
    let op = problem.operator();
    let grid = problem.grid();
    let bounds = problem.bounds();
    let z = problem.target();

    let u0 = crate::grid::project_box(&GridFunction::zeros(grid), bounds);
    let lambda0 = GridFunction::zeros(grid);
    let y0 = op.forward(&u0)?;
    let residual0 = 0.5 * {
        let d = y0.sub(z)?;
        grid.dot(d.values(), d.values())
    };
    let mut current = IterationState {
        k: 0,
        error_sq: problem.squared_error(u0.values()),
        defect: crate::grid::project_box(&lambda0, bounds).max_abs_diff(&u0)?,
        control: u0,
        multiplier: lambda0,
        residual: residual0,
        newton_steps: 0,
    };
    observer(&current)?;
    let mut records = Vec::with_capacity(iterations + 1);
    records.push(IterationRecord::from(&current));

    let mut sub = Subproblem::new(op.as_ref(), z)?;
    for k in 1..=iterations {
        let alpha = schedule.alpha(k).expect("schedule coverage checked");
        let sol = sub
            .solve(
                bounds,
                alpha,
                &current.multiplier,
                &current.control,
                settings,
            )
            .map_err(|e| Error::Iteration {
                k,
                source: Box::new(e),
            })?;
        let residual = 0.5 * {
            let d = sol.state.sub(z)?;
            grid.dot(d.values(), d.values())
        };
        current = IterationState {
            k,
            error_sq: problem.squared_error(sol.control.values()),
            control: sol.control,
            multiplier: sol.multiplier,
            residual,
            newton_steps: sol.newton_steps,
            defect: sol.defect,
        };
        log::debug!(
            "k={k} residual={residual:e} error_sq={:?} steps={}",
            current.error_sq,
            current.newton_steps
        );
        observer(&current)?;
        records.push(IterationRecord::from(&current));
    }
    Ok(BregmanRun {
        records,
        final_state: current,
    })
}
