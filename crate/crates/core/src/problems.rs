//! Bang-bang test problems built from a prescribed adjoint state `p†`.
//!
//! Given `p†` vanishing on the boundary, the optimal control sits on the
//! lower bound where `p† > 0` and on the upper bound where `p† < 0`. The
//! target is chosen so that the discrete adjoint `S*(S u† − z)` reproduces
//! the nodal `p†`, which makes `u†` the exact solution of the discrete
//! problem.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{inner_l2, Axis, BoxBounds, Grid, GridFunction};
use crate::pde::{assemble, PoissonOperator, StateOperator};

/// Closed form of a prescribed adjoint state.
#[derive(Clone, Copy)]
pub enum Profile {
    /// `p(x)` on `[a, b]`.
    Interval {
        a: f64,
        b: f64,
        value: fn(f64) -> f64,
        second_derivative: fn(f64) -> f64,
    },
    /// `p(x, y) = f(x) g(y)` on `[a, b]²`.
    Product {
        a: f64,
        b: f64,
        fx: fn(f64) -> f64,
        fx_second: fn(f64) -> f64,
        gy: fn(f64) -> f64,
        gy_second: fn(f64) -> f64,
    },
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Interval { a, b, .. } => write!(f, "Interval[{a}, {b}]"),
            Self::Product { a, b, .. } => write!(f, "Product[{a}, {b}]^2"),
        }
    }
}

/// A prescribed adjoint `p†` with its Laplacian and measure exponent `κ`.
#[derive(Debug, Clone)]
pub struct AdjointSpec {
    pub name: String,
    pub description: String,
    pub profile: Profile,
    pub kappa: f64,
}

impl AdjointSpec {
    pub fn dimension(&self) -> usize {
        match self.profile {
            Profile::Interval { .. } => 1,
            Profile::Product { .. } => 2,
        }
    }

    pub fn domain(&self) -> (f64, f64) {
        match self.profile {
            Profile::Interval { a, b, .. } | Profile::Product { a, b, .. } => (a, b),
        }
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        match self.profile {
            Profile::Interval { value, .. } => value(x),
            Profile::Product { fx, gy, .. } => fx(x) * gy(y),
        }
    }

    pub fn laplacian(&self, x: f64, y: f64) -> f64 {
        match self.profile {
            Profile::Interval {
                second_derivative, ..
            } => second_derivative(x),
            Profile::Product {
                fx,
                fx_second,
                gy,
                gy_second,
                ..
            } => fx_second(x) * gy(y) + fx(x) * gy_second(y),
        }
    }

    /// Uniform grid over this spec's domain with `n` nodes per axis.
    pub fn grid(&self, n: usize) -> Result<Grid> {
        let (a, b) = self.domain();
        crate::grid::uniform_grid(self.dimension(), a, b, n)
    }
}

/// `sin(πx)` with exact zeros at the integers.
pub fn sin_pi(x: f64) -> f64 {
    let n = x.round();
    let s = (PI * (x - n)).sin();
    if n.rem_euclid(2.0) == 0.0 {
        s
    } else {
        -s
    }
}

fn ex1_value(x: f64) -> f64 {
    sin_pi(x)
}

fn ex1_second(x: f64) -> f64 {
    -PI * PI * sin_pi(x)
}

// The zero at 1/2 is double in magnitude but changes sign, so the control
// switches there.
fn ex2_value(x: f64) -> f64 {
    let t = 2.0 * x - 1.0;
    x * (1.0 - x) * t * t.abs()
}

fn ex2_second(x: f64) -> f64 {
    let t = 2.0 * x - 1.0;
    if t == 0.0 {
        0.0
    } else {
        t.signum() * (2.0 - 12.0 * t * t)
    }
}

fn ex3_value(x: f64) -> f64 {
    let t = 3.0 * x - 1.0;
    x * (1.0 - x) * t * t * t
}

fn ex3_second(x: f64) -> f64 {
    -4.0 * (3.0 * x - 1.0) * (45.0 * x * x - 39.0 * x + 5.0)
}

fn sin_2pi(x: f64) -> f64 {
    sin_pi(2.0 * x)
}

fn sin_2pi_second(x: f64) -> f64 {
    -4.0 * PI * PI * sin_pi(2.0 * x)
}

pub const CATALOG_NAMES: [&str; 4] = ["ex1-1d-k1", "ex2-1d-k12", "ex3-1d-k13", "ex4-2d-k1"];

/// Looks up a catalog example by name.
pub fn catalog(name: &str) -> Result<AdjointSpec> {
    let spec = match name {
        "ex1-1d-k1" => AdjointSpec {
            name: name.into(),
            description: "p(x) = sin(pi x) on [-1, 1]".into(),
            profile: Profile::Interval {
                a: -1.0,
                b: 1.0,
                value: ex1_value,
                second_derivative: ex1_second,
            },
            kappa: 1.0,
        },
        "ex2-1d-k12" => AdjointSpec {
            name: name.into(),
            description: "p(x) = x(1-x)(2x-1)|2x-1| on [0, 1]".into(),
            profile: Profile::Interval {
                a: 0.0,
                b: 1.0,
                value: ex2_value,
                second_derivative: ex2_second,
            },
            kappa: 0.5,
        },
        "ex3-1d-k13" => AdjointSpec {
            name: name.into(),
            description: "p(x) = x(1-x)(3x-1)^3 on [0, 1]".into(),
            profile: Profile::Interval {
                a: 0.0,
                b: 1.0,
                value: ex3_value,
                second_derivative: ex3_second,
            },
            kappa: 1.0 / 3.0,
        },
        "ex4-2d-k1" => AdjointSpec {
            name: name.into(),
            description: "p(x, y) = sin(2 pi x) sin(2 pi y) on [0, 1]^2".into(),
            profile: Profile::Product {
                a: 0.0,
                b: 1.0,
                fx: sin_2pi,
                fx_second: sin_2pi_second,
                gy: sin_2pi,
                gy_second: sin_2pi_second,
            },
            kappa: 1.0,
        },
        _ => {
            return Err(Error::UnknownExample {
                name: name.into(),
                available: CATALOG_NAMES.join(", "),
            })
        }
    };
    Ok(spec)
}

pub fn catalog_entries() -> Vec<AdjointSpec> {
    CATALOG_NAMES
        .iter()
        .map(|n| catalog(n).expect("catalog names are valid"))
        .collect()
}

/// How the target `z` is derived from `p†`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetConstruction {
    /// `z = S u† − A_h p̂†`: the discrete adjoint equals the nodal `p†`.
    #[default]
    DiscreteConsistent,
    /// `z = S u† + (Δp†)` sampled at the nodes.
    Analytic,
}

/// How `‖u_k − u†‖²` is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorNorm {
    /// Exact L² distance between the piecewise (bi)linear interpolant of
    /// `u_k` and the continuous bang-bang control `u†`.
    #[default]
    Interpolated,
    /// Trapezoid norm of the nodal difference to the nodal `u†`.
    Nodal,
}

impl fmt::Display for ErrorNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Interpolated => write!(f, "interpolated"),
            Self::Nodal => write!(f, "nodal"),
        }
    }
}

/// A complete instance of the box-constrained problem.
#[derive(Debug, Clone)]
pub struct TestProblem {
    name: String,
    operator: Arc<PoissonOperator>,
    target: GridFunction,
    bounds: BoxBounds,
    exact_control: Option<GridFunction>,
    exact_adjoint: Option<GridFunction>,
    kappa: Option<f64>,
    quadrature: Option<Arc<Vec<QuadPoint>>>,
    error_norm: ErrorNorm,
}

impl TestProblem {
    /// A problem with known target only. Errors are reported once an exact
    /// control is attached with [`Self::with_exact_control`].
    pub fn new(
        name: impl Into<String>,
        operator: Arc<PoissonOperator>,
        target: GridFunction,
        bounds: BoxBounds,
    ) -> Result<Self> {
        if !crate::grid::same_grid(operator.grid(), target.grid()) {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            name: name.into(),
            operator,
            target,
            bounds,
            exact_control: None,
            exact_adjoint: None,
            kappa: None,
            quadrature: None,
            error_norm: ErrorNorm::Nodal,
        })
    }

    pub fn with_exact_control(mut self, u: GridFunction) -> Result<Self> {
        u.ensure_same_grid(&self.target)?;
        self.exact_control = Some(u);
        self.quadrature = None;
        self.error_norm = ErrorNorm::Nodal;
        Ok(self)
    }

    /// Selects the error norm. `Interpolated` is only available for problems
    /// built from an adjoint spec and falls back to `Nodal` otherwise.
    pub fn with_error_norm(mut self, norm: ErrorNorm) -> Self {
        self.error_norm = if self.quadrature.is_some() {
            norm
        } else {
            ErrorNorm::Nodal
        };
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.operator.grid()
    }

    pub fn operator(&self) -> &Arc<PoissonOperator> {
        &self.operator
    }

    pub fn target(&self) -> &GridFunction {
        &self.target
    }

    pub fn bounds(&self) -> &BoxBounds {
        &self.bounds
    }

    pub fn exact_control(&self) -> Option<&GridFunction> {
        self.exact_control.as_ref()
    }

    pub fn exact_adjoint(&self) -> Option<&GridFunction> {
        self.exact_adjoint.as_ref()
    }

    pub fn kappa(&self) -> Option<f64> {
        self.kappa
    }

    pub fn error_norm(&self) -> ErrorNorm {
        self.error_norm
    }

    /// `‖u − u†‖²` in the selected norm, `None` without an exact solution.
    pub fn squared_error(&self, u: &[f64]) -> Option<f64> {
        match (self.error_norm, &self.quadrature) {
            (ErrorNorm::Interpolated, Some(q)) => Some(
                q.iter()
                    .map(|pt| {
                        let v: f64 = pt
                            .nodes
                            .iter()
                            .zip(&pt.coeffs)
                            .map(|(&n, &c)| c * u[n])
                            .sum();
                        pt.weight * (v - pt.target) * (v - pt.target)
                    })
                    .sum(),
            ),
            _ => {
                let exact = self.exact_control.as_ref()?;
                let d: Vec<f64> = u.iter().zip(exact.values()).map(|(a, b)| a - b).collect();
                Some(self.grid().dot(&d, &d))
            }
        }
    }

    /// `max |S*(S u† − z) − p̂†|` over the nodes.
    pub fn adjoint_consistency_defect(&self) -> Result<f64> {
        let (u, p) = match (&self.exact_control, &self.exact_adjoint) {
            (Some(u), Some(p)) => (u, p),
            _ => {
                return Err(Error::InvalidArgument(
                    "problem has no exact control/adjoint".into(),
                ))
            }
        };
        let y = self.operator.forward(u)?;
        let r = y.sub(&self.target)?;
        let recomputed = self.operator.adjoint(&r)?;
        recomputed.max_abs_diff(p)
    }

    /// Smallest value of `(p†, u − u†)` over `samples` random feasible `u`.
    pub fn variational_inequality_min(&self, samples: usize, rng: &mut impl Rng) -> Result<f64> {
        let (u_exact, p) = match (&self.exact_control, &self.exact_adjoint) {
            (Some(u), Some(p)) => (u, p),
            _ => {
                return Err(Error::InvalidArgument(
                    "problem has no exact control/adjoint".into(),
                ))
            }
        };
        let (lo, hi) = (self.bounds.lower(), self.bounds.upper());
        let mut worst = f64::INFINITY;
        for _ in 0..samples {
            let u = GridFunction::from_fn(self.grid(), |_, _| rng.gen_range(lo..=hi));
            worst = worst.min(inner_l2(p, &u.sub(u_exact)?)?);
        }
        Ok(worst)
    }
}

/// Builds the bang-bang problem for `spec` on `grid` with the default
/// discretely consistent target.
pub fn build_bangbang(spec: &AdjointSpec, bounds: BoxBounds, grid: Grid) -> Result<TestProblem> {
    let grid = Arc::new(grid);
    let op = Arc::new(assemble(&grid)?);
    build_bangbang_on(spec, bounds, op, TargetConstruction::DiscreteConsistent)
}

/// Builds the bang-bang problem on an already assembled operator.
pub fn build_bangbang_on(
    spec: &AdjointSpec,
    bounds: BoxBounds,
    op: Arc<PoissonOperator>,
    construction: TargetConstruction,
) -> Result<TestProblem> {
    let grid = Arc::clone(op.grid());
    check_domain(spec, &grid)?;

    let mut p = GridFunction::from_fn(&grid, |x, y| spec.value(x, y));
    for idx in 0..grid.len() {
        if grid.is_boundary(idx) {
            let v = p.values()[idx];
            if v.abs() > 1e-12 {
                return Err(Error::BoundaryNonzero {
                    node: idx,
                    value: v,
                });
            }
            p.values_mut()[idx] = 0.0;
        }
    }
    if p.values().iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroAdjoint);
    }

    let u_exact = GridFunction::from_values(
        &grid,
        p.values()
            .iter()
            .map(|&v| {
                if v > 0.0 {
                    bounds.lower()
                } else if v < 0.0 {
                    bounds.upper()
                } else {
                    bounds.midpoint()
                }
            })
            .collect(),
    )?;

    let w = match construction {
        TargetConstruction::DiscreteConsistent => op.apply_laplacian(&p)?,
        TargetConstruction::Analytic => {
            let mut w = GridFunction::from_fn(&grid, |x, y| -spec.laplacian(x, y));
            for idx in 0..grid.len() {
                if grid.is_boundary(idx) {
                    w.values_mut()[idx] = 0.0;
                }
            }
            w
        }
    };
    let y = op.forward(&u_exact)?;
    let target = y.sub(&w)?;

    Ok(TestProblem {
        name: spec.name.clone(),
        quadrature: Some(Arc::new(interpolant_quadrature(spec, &grid, &bounds))),
        operator: op,
        target,
        bounds,
        exact_control: Some(u_exact),
        exact_adjoint: Some(p),
        kappa: Some(spec.kappa),
        error_norm: ErrorNorm::Interpolated,
    })
}

fn check_domain(spec: &AdjointSpec, grid: &Grid) -> Result<()> {
    if spec.dimension() != grid.dimension() {
        return Err(Error::InvalidArgument(format!(
            "{} is {}-dimensional but the grid is {}-dimensional",
            spec.name,
            spec.dimension(),
            grid.dimension()
        )));
    }
    let (a, b) = spec.domain();
    let matches = |ax: &Axis| (ax.lower - a).abs() <= 1e-12 && (ax.upper - b).abs() <= 1e-12;
    if !matches(grid.x_axis()) || !grid.y_axis().is_none_or(matches) {
        return Err(Error::InvalidArgument(format!(
            "grid does not cover the domain [{a}, {b}] of {}",
            spec.name
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct QuadPoint {
    nodes: [usize; 4],
    coeffs: [f64; 4],
    weight: f64,
    target: f64,
}

/// Splits `[lo, hi]` at the sign changes of `f`, returning each piece with
/// the sign of `f` on it.
fn sign_pieces(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Vec<(f64, f64, f64)> {
    const PIECES: usize = 8;
    let width = (hi - lo) / PIECES as f64;
    let mut breaks = vec![lo];
    for s in 0..PIECES {
        let l = lo + s as f64 * width;
        let r = if s + 1 == PIECES { hi } else { l + width };
        let (fl, fr) = (f(l), f(r));
        if s > 0 && fl == 0.0 {
            breaks.push(l);
        }
        if fl * fr < 0.0 {
            let (mut a, mut b) = (l, r);
            for _ in 0..80 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                if (f(m) > 0.0) == (fl > 0.0) {
                    a = m;
                } else {
                    b = m;
                }
            }
            breaks.push(0.5 * (a + b));
        }
    }
    breaks.push(hi);
    breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let v = f(0.5 * (w[0] + w[1]));
            let sign = if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            };
            (w[0], w[1], sign)
        })
        .collect()
}

fn gauss2(a: f64, b: f64) -> [(f64, f64); 2] {
    let m = 0.5 * (a + b);
    let d = 0.5 * (b - a) / 3f64.sqrt();
    [(m - d, 0.5 * (b - a)), (m + d, 0.5 * (b - a))]
}

fn interpolant_quadrature(spec: &AdjointSpec, grid: &Grid, bounds: &BoxBounds) -> Vec<QuadPoint> {
    let level = |s: f64| {
        if s > 0.0 {
            bounds.lower()
        } else if s < 0.0 {
            bounds.upper()
        } else {
            bounds.midpoint()
        }
    };
    let ax = grid.x_axis();
    let mut out = Vec::new();
    match spec.profile {
        Profile::Interval { value, .. } => {
            for i in 0..ax.nodes - 1 {
                let (x0, x1) = (ax.coordinate(i), ax.coordinate(i + 1));
                for (a, b, s) in sign_pieces(value, x0, x1) {
                    for (x, w) in gauss2(a, b) {
                        let t = (x - x0) / (x1 - x0);
                        out.push(QuadPoint {
                            nodes: [i, i + 1, i, i],
                            coeffs: [1.0 - t, t, 0.0, 0.0],
                            weight: w,
                            target: level(s),
                        });
                    }
                }
            }
        }
        Profile::Product { fx, gy, .. } => {
            let ay = grid.y_axis().expect("product profiles live on 2D grids");
            let xs: Vec<_> = (0..ax.nodes - 1)
                .map(|i| sign_pieces(fx, ax.coordinate(i), ax.coordinate(i + 1)))
                .collect();
            let ys: Vec<_> = (0..ay.nodes - 1)
                .map(|j| sign_pieces(gy, ay.coordinate(j), ay.coordinate(j + 1)))
                .collect();
            for j in 0..ay.nodes - 1 {
                let (y0, y1) = (ay.coordinate(j), ay.coordinate(j + 1));
                for i in 0..ax.nodes - 1 {
                    let (x0, x1) = (ax.coordinate(i), ax.coordinate(i + 1));
                    let nodes = [
                        grid.index(i, j),
                        grid.index(i + 1, j),
                        grid.index(i, j + 1),
                        grid.index(i + 1, j + 1),
                    ];
                    for &(xa, xb, sx) in &xs[i] {
                        for &(ya, yb, sy) in &ys[j] {
                            for (x, wx) in gauss2(xa, xb) {
                                for (y, wy) in gauss2(ya, yb) {
                                    let s = (x - x0) / (x1 - x0);
                                    let t = (y - y0) / (y1 - y0);
                                    out.push(QuadPoint {
                                        nodes,
                                        coeffs: [
                                            (1.0 - s) * (1.0 - t),
                                            s * (1.0 - t),
                                            (1.0 - s) * t,
                                            s * t,
                                        ],
                                        weight: wx * wy,
                                        target: level(sx * sy),
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Estimates `|{0 < |p†| < ε}|` for each `ε` by midpoint sampling.
///
/// `samples` is the number of cells of the uniform partition per axis; in
/// 2D the product structure lets the `samples²` midpoints be counted by
/// sorting one axis.
pub fn measure_condition(
    spec: &AdjointSpec,
    samples: usize,
    epsilons: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if samples < 100_000 {
        return Err(Error::InvalidArgument(format!(
            "at least 1e5 samples are required, got {samples}"
        )));
    }
    if epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::InvalidArgument("epsilons must be positive".into()));
    }
    let (a, b) = spec.domain();
    let cell = (b - a) / samples as f64;
    let midpoints = (0..samples).map(move |i| a + (i as f64 + 0.5) * cell);
    let out = match spec.profile {
        Profile::Interval { value, .. } => {
            let mut mags: Vec<f64> = midpoints
                .map(|x| value(x).abs())
                .filter(|&v| v > 0.0)
                .collect();
            mags.sort_by(f64::total_cmp);
            epsilons
                .iter()
                .map(|&eps| {
                    let count = mags.partition_point(|&v| v < eps);
                    (eps, count as f64 * cell)
                })
                .collect()
        }
        Profile::Product { fx, gy, .. } => {
            let xs: Vec<f64> = midpoints
                .clone()
                .map(|x| fx(x).abs())
                .filter(|&v| v > 0.0)
                .collect();
            let mut ys: Vec<f64> = midpoints
                .map(|y| gy(y).abs())
                .filter(|&v| v > 0.0)
                .collect();
            ys.sort_by(f64::total_cmp);
            epsilons
                .iter()
                .map(|&eps| {
                    let count: usize = xs
                        .iter()
                        .map(|&fxv| ys.partition_point(|&g| fxv * g < eps))
                        .sum();
                    (eps, count as f64 * cell * cell)
                })
                .collect()
        }
    };
    Ok(out)
}
