//! Uniform tensor grids, nodal grid functions and their discrete L² geometry.
//!
//! Inner products use the composite trapezoidal rule (tensor product in 2D).
//! Equivalently, a nodal function is read as piecewise constant on the dual
//! cells `[x_i - h/2, x_i + h/2] ∩ [a, b]`, whose lengths are exactly the
//! trapezoid weights.

use std::sync::Arc;

use crate::error::{Error, Result};

/// One coordinate axis: `nodes` evenly spaced points covering `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lower: f64,
    pub upper: f64,
    pub nodes: usize,
}

impl Axis {
    pub fn new(lower: f64, upper: f64, nodes: usize) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
            return Err(Error::InvalidGrid(format!(
                "axis endpoints must satisfy a < b, got [{lower}, {upper}]"
            )));
        }
        if nodes < 3 {
            return Err(Error::InvalidGrid(format!(
                "an axis needs at least 3 nodes, got {nodes}"
            )));
        }
        Ok(Self {
            lower,
            upper,
            nodes,
        })
    }

    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / (self.nodes - 1) as f64
    }

    /// Coordinate of node `i`. Written so that dyadic fractions of the
    /// interval land exactly on their floating-point values.
    pub fn coordinate(&self, i: usize) -> f64 {
        self.lower + (self.upper - self.lower) * i as f64 / (self.nodes - 1) as f64
    }

    /// Trapezoid weight, i.e. length of the dual cell around node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        let h = self.spacing();
        if i == 0 || i + 1 == self.nodes {
            0.5 * h
        } else {
            h
        }
    }

    /// Dual cell `[x_i - h/2, x_i + h/2]` clipped to the axis.
    pub fn dual_cell(&self, i: usize) -> (f64, f64) {
        let x = self.coordinate(i);
        let half = 0.5 * self.spacing();
        let lo = if i == 0 { self.lower } else { x - half };
        let hi = if i + 1 == self.nodes {
            self.upper
        } else {
            x + half
        };
        (lo, hi)
    }
}

/// A uniform grid in one or two dimensions. Nodes are stored x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    x: Axis,
    y: Option<Axis>,
}

impl Grid {
    pub fn line(x: Axis) -> Self {
        Self { x, y: None }
    }

    pub fn rectangle(x: Axis, y: Axis) -> Self {
        Self { x, y: Some(y) }
    }

    pub fn dimension(&self) -> usize {
        if self.y.is_some() {
            2
        } else {
            1
        }
    }

    pub fn x_axis(&self) -> &Axis {
        &self.x
    }

    pub fn y_axis(&self) -> Option<&Axis> {
        self.y.as_ref()
    }

    pub fn nx(&self) -> usize {
        self.x.nodes
    }

    pub fn ny(&self) -> usize {
        self.y.map_or(1, |a| a.nodes)
    }

    pub fn len(&self) -> usize {
        self.nx() * self.ny()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of interior (unknown) nodes of the Dirichlet problem.
    pub fn interior_len(&self) -> usize {
        match self.y {
            None => self.nx() - 2,
            Some(_) => (self.nx() - 2) * (self.ny() - 2),
        }
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx() + i
    }

    /// `(i, j)` axis indices of a flat node index (`j = 0` in 1D).
    pub fn split_index(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx(), idx / self.nx())
    }

    pub fn coordinates(&self, idx: usize) -> (f64, f64) {
        let (i, j) = self.split_index(idx);
        let y = self.y.map_or(0.0, |a| a.coordinate(j));
        (self.x.coordinate(i), y)
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let (i, j) = self.split_index(idx);
        let on_x = i == 0 || i + 1 == self.nx();
        match self.y {
            None => on_x,
            Some(_) => on_x || j == 0 || j + 1 == self.ny(),
        }
    }

    pub fn weight(&self, idx: usize) -> f64 {
        let (i, j) = self.split_index(idx);
        self.x.weight(i) * self.y.map_or(1.0, |a| a.weight(j))
    }

    /// Short human-readable descriptor, e.g. `1d n=2001 h=1e-3`.
    pub fn describe(&self) -> String {
        match self.y {
            None => format!("1d n={} h={:e}", self.nx(), self.x.spacing()),
            Some(y) => format!("2d {}x{} h={:e}", self.nx(), y.nodes, self.x.spacing()),
        }
    }

    /// Trapezoid-weighted dot product of two nodal vectors on this grid.
    pub fn dot(&self, f: &[f64], g: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len());
        debug_assert_eq!(g.len(), self.len());
        let nx = self.nx();
        let row = |j: usize| -> f64 {
            let a = &f[j * nx..(j + 1) * nx];
            let b = &g[j * nx..(j + 1) * nx];
            let inner: f64 = a[1..nx - 1]
                .iter()
                .zip(&b[1..nx - 1])
                .map(|(p, q)| p * q)
                .sum();
            self.x.spacing() * (inner + 0.5 * (a[0] * b[0] + a[nx - 1] * b[nx - 1]))
        };
        match self.y {
            None => row(0),
            Some(y) => (0..y.nodes).map(|j| y.weight(j) * row(j)).sum(),
        }
    }
}

/// Builds a uniform grid. In 2D both axes share `[a, b]` and `n`.
pub fn uniform_grid(dimension: usize, a: f64, b: f64, n: usize) -> Result<Grid> {
    let axis = Axis::new(a, b, n)?;
    match dimension {
        1 => Ok(Grid::line(axis)),
        2 => Ok(Grid::rectangle(axis, axis)),
        d => Err(Error::InvalidGrid(format!(
            "dimension must be 1 or 2, got {d}"
        ))),
    }
}

/// Constant box constraints `lower <= u <= upper`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxBounds {
    lower: f64,
    upper: f64,
}

impl BoxBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
            return Err(Error::InvalidBounds { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    #[inline]
    pub fn clamp(&self, v: f64) -> f64 {
        v.max(self.lower).min(self.upper)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lower && v <= self.upper
    }
}

impl Default for BoxBounds {
    fn default() -> Self {
        Self {
            lower: -1.0,
            upper: 1.0,
        }
    }
}

/// Real nodal values on a grid, boundary nodes included.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Arc<Grid>, value: f64) -> Self {
        Self {
            grid: Arc::clone(grid),
            values: vec![value; grid.len()],
        }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} nodal values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            values,
        })
    }

    /// Nodal interpolant of `f(x, y)` (`y = 0` in 1D).
    pub fn from_fn(grid: &Arc<Grid>, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|idx| {
                let (x, y) = grid.coordinates(idx);
                f(x, y)
            })
            .collect();
        Self {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        same_grid(&self.grid, &other.grid)
    }

    pub fn ensure_same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `self - other`, nodewise.
    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.ensure_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self {
            grid: Arc::clone(&self.grid),
            values,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest nodewise deviation `max |self - other|`.
    pub fn max_abs_diff(&self, other: &GridFunction) -> Result<f64> {
        self.ensure_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
    }
}

pub(crate) fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// Trapezoidal approximation of `∫ f g` over the grid domain.
pub fn inner_l2(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    f.ensure_same_grid(g)?;
    Ok(f.grid.dot(&f.values, &g.values))
}

pub fn norm_l2(f: &GridFunction) -> f64 {
    f.grid.dot(&f.values, &f.values).max(0.0).sqrt()
}

/// Pointwise projection onto the box, `min(max(f, u_a), u_b)`.
pub fn project_box(f: &GridFunction, bounds: &BoxBounds) -> GridFunction {
    GridFunction {
        grid: Arc::clone(&f.grid),
        values: f.values.iter().map(|&v| bounds.clamp(v)).collect(),
    }
}
