//! The control-to-state map `S`: solution operator of `-Δy = u` with
//! homogeneous Dirichlet data, discretized by second-order central
//! differences (three-point stencil in 1D, five-point stencil in 2D).
//!
//! The system matrix is factorized once at assembly. In 1D the Thomas
//! algorithm is used; in 2D a banded Cholesky factorization, falling back to
//! SSOR-preconditioned conjugate gradients when the band would not fit in
//! memory.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{same_grid, Grid, GridFunction};

/// Band storage above which 2D assembly switches to conjugate gradients.
const MAX_BAND_ENTRIES: usize = 40_000_000;

/// A linear map from controls to states together with its L²-adjoint.
///
/// Both actions work on full nodal vectors (boundary nodes included).
pub trait StateOperator {
    fn grid(&self) -> &Arc<Grid>;

    fn forward_into(&self, u: &[f64], y: &mut [f64]) -> Result<()>;

    fn adjoint_into(&self, r: &[f64], p: &mut [f64]) -> Result<()>;

    fn forward(&self, u: &GridFunction) -> Result<GridFunction> {
        if !same_grid(self.grid(), u.grid()) {
            return Err(Error::GridMismatch);
        }
        let mut y = vec![0.0; u.values().len()];
        self.forward_into(u.values(), &mut y)?;
        GridFunction::from_values(self.grid(), y)
    }

    fn adjoint(&self, r: &GridFunction) -> Result<GridFunction> {
        if !same_grid(self.grid(), r.grid()) {
            return Err(Error::GridMismatch);
        }
        let mut p = vec![0.0; r.values().len()];
        self.adjoint_into(r.values(), &mut p)?;
        GridFunction::from_values(self.grid(), p)
    }
}

/// Which linear solver backs a 2D operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverChoice {
    /// Banded Cholesky when the band fits, conjugate gradients otherwise.
    #[default]
    Auto,
    BandedCholesky,
    ConjugateGradient,
}

/// Assembled and factorized discrete Dirichlet Laplacian.
#[derive(Debug)]
pub struct PoissonOperator {
    grid: Arc<Grid>,
    solver: Solver,
}

#[derive(Debug)]
enum Solver {
    Thomas(Thomas),
    Banded(BandedCholesky),
    Cg(StencilCg),
}

impl PoissonOperator {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn solver_name(&self) -> &'static str {
        match self.solver {
            Solver::Thomas(_) => "thomas",
            Solver::Banded(_) => "banded-cholesky",
            Solver::Cg(_) => "ssor-cg",
        }
    }

    /// `y = S u`.
    pub fn apply_forward(&self, u: &GridFunction) -> Result<GridFunction> {
        self.forward(u)
    }

    /// `p = S* r`. The discretization is self-adjoint in the trapezoid inner
    /// product, so this is the same solve as [`Self::apply_forward`].
    pub fn apply_adjoint(&self, r: &GridFunction) -> Result<GridFunction> {
        self.adjoint(r)
    }

    /// `-Δ_h p` on interior nodes, zero on the boundary. For `p` vanishing
    /// on the boundary this is the exact inverse of `S`.
    pub fn apply_laplacian(&self, p: &GridFunction) -> Result<GridFunction> {
        if !same_grid(&self.grid, p.grid()) {
            return Err(Error::GridMismatch);
        }
        let mut out = vec![0.0; p.values().len()];
        stencil_apply(&self.grid, p.values(), &mut out);
        GridFunction::from_values(&self.grid, out)
    }

    /// Dense interior system matrix, rows ordered x-fastest. Small grids only.
    pub fn dense_interior_matrix(&self) -> Vec<Vec<f64>> {
        let st = Stencil::new(&self.grid);
        let n = st.len();
        let mut m = vec![vec![0.0; n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = st.entry(i, j);
            }
        }
        m
    }

    fn solve(&self, rhs: &[f64], out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(rhs.len(), self.grid.len());
        debug_assert_eq!(out.len(), self.grid.len());
        match &self.solver {
            Solver::Thomas(t) => {
                out.copy_from_slice(rhs);
                let n = out.len();
                out[0] = 0.0;
                out[n - 1] = 0.0;
                t.solve_in_place(&mut out[1..n - 1]);
                Ok(())
            }
            Solver::Banded(b) => {
                let st = Stencil::new(&self.grid);
                let mut x = st.gather(rhs);
                b.solve_in_place(&mut x);
                st.scatter(&x, out);
                Ok(())
            }
            Solver::Cg(c) => {
                let st = Stencil::new(&self.grid);
                let b = st.gather(rhs);
                let x = c.solve(&b)?;
                st.scatter(&x, out);
                Ok(())
            }
        }
    }
}

impl StateOperator for PoissonOperator {
    fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    fn forward_into(&self, u: &[f64], y: &mut [f64]) -> Result<()> {
        self.solve(u, y)
    }

    fn adjoint_into(&self, r: &[f64], p: &mut [f64]) -> Result<()> {
        self.solve(r, p)
    }
}

/// Assembles and factorizes the Dirichlet Laplacian on `grid`.
pub fn assemble(grid: &Arc<Grid>) -> Result<PoissonOperator> {
    assemble_with(grid, SolverChoice::Auto)
}

pub fn assemble_with(grid: &Arc<Grid>, choice: SolverChoice) -> Result<PoissonOperator> {
    let solver = if grid.dimension() == 1 {
        Solver::Thomas(Thomas::new(grid.nx() - 2, grid.x_axis().spacing()))
    } else {
        let st = Stencil::new(grid);
        let band = st.len() * (st.mx + 1);
        let banded = match choice {
            SolverChoice::Auto => band <= MAX_BAND_ENTRIES,
            SolverChoice::BandedCholesky => true,
            SolverChoice::ConjugateGradient => false,
        };
        if banded {
            Solver::Banded(BandedCholesky::factor(&st)?)
        } else {
            Solver::Cg(StencilCg::new(&st))
        }
    };
    Ok(PoissonOperator {
        grid: Arc::clone(grid),
        solver,
    })
}

/// Thomas algorithm for `tridiag(-1, 2, -1) x = h² b`, factor computed once.
#[derive(Debug)]
struct Thomas {
    inv_pivot: Vec<f64>,
    h2: f64,
}

impl Thomas {
    fn new(m: usize, h: f64) -> Self {
        // pivots of tridiag(-1, 2, -1) are (i + 1) / i
        let inv_pivot = (1..=m).map(|i| i as f64 / (i + 1) as f64).collect();
        Self {
            inv_pivot,
            h2: h * h,
        }
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let m = x.len();
        debug_assert_eq!(m, self.inv_pivot.len());
        x[0] *= self.h2;
        for i in 1..m {
            x[i] = self.h2 * x[i] + x[i - 1] * self.inv_pivot[i - 1];
        }
        x[m - 1] *= self.inv_pivot[m - 1];
        for i in (0..m - 1).rev() {
            x[i] = (x[i] + x[i + 1]) * self.inv_pivot[i];
        }
    }
}

/// Interior five-point stencil bookkeeping for a 2D grid.
struct Stencil {
    nx: usize,
    mx: usize,
    my: usize,
    cx: f64,
    cy: f64,
}

impl Stencil {
    fn new(grid: &Grid) -> Self {
        let hx = grid.x_axis().spacing();
        let hy = grid.y_axis().map_or(1.0, |a| a.spacing());
        Self {
            nx: grid.nx(),
            mx: grid.nx() - 2,
            my: if grid.dimension() == 2 {
                grid.ny() - 2
            } else {
                1
            },
            cx: 1.0 / (hx * hx),
            cy: if grid.dimension() == 2 {
                1.0 / (hy * hy)
            } else {
                0.0
            },
        }
    }

    fn len(&self) -> usize {
        self.mx * self.my
    }

    fn diagonal(&self) -> f64 {
        2.0 * self.cx + 2.0 * self.cy
    }

    /// Interior matrix entry `(i, j)` in x-fastest interior ordering.
    fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diagonal();
        }
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        if hi - lo == 1 && hi % self.mx != 0 {
            -self.cx
        } else if hi - lo == self.mx && self.cy > 0.0 {
            -self.cy
        } else {
            0.0
        }
    }

    fn gather(&self, full: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for j in 0..self.my {
            let start = (j + 1) * self.nx + 1;
            out.extend_from_slice(&full[start..start + self.mx]);
        }
        out
    }

    fn scatter(&self, interior: &[f64], full: &mut [f64]) {
        full.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.my {
            let start = (j + 1) * self.nx + 1;
            full[start..start + self.mx].copy_from_slice(&interior[j * self.mx..(j + 1) * self.mx]);
        }
    }

    /// Matrix-vector product on interior vectors.
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let (mx, my) = (self.mx, self.my);
        let d = self.diagonal();
        for j in 0..my {
            for i in 0..mx {
                let k = j * mx + i;
                let mut v = d * x[k];
                if i > 0 {
                    v -= self.cx * x[k - 1];
                }
                if i + 1 < mx {
                    v -= self.cx * x[k + 1];
                }
                if j > 0 {
                    v -= self.cy * x[k - mx];
                }
                if j + 1 < my {
                    v -= self.cy * x[k + mx];
                }
                out[k] = v;
            }
        }
    }
}

/// `-Δ_h p` evaluated with the full stencil (boundary values of `p` enter as
/// neighbours), written to interior nodes of `out`; boundary entries are zero.
fn stencil_apply(grid: &Grid, p: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let nx = grid.nx();
    let hx = grid.x_axis().spacing();
    let cx = 1.0 / (hx * hx);
    match grid.y_axis() {
        None => {
            for i in 1..nx - 1 {
                out[i] = cx * (2.0 * p[i] - p[i - 1] - p[i + 1]);
            }
        }
        Some(ay) => {
            let hy = ay.spacing();
            let cy = 1.0 / (hy * hy);
            let ny = grid.ny();
            for j in 1..ny - 1 {
                for i in 1..nx - 1 {
                    let k = j * nx + i;
                    out[k] = cx * (2.0 * p[k] - p[k - 1] - p[k + 1])
                        + cy * (2.0 * p[k] - p[k - nx] - p[k + nx]);
                }
            }
        }
    }
}

/// Cholesky factor `L` of a symmetric positive definite band matrix.
/// Row `i` stores `L[i, i - bw ..= i]`, zero-padded on the left.
#[derive(Debug)]
struct BandedCholesky {
    n: usize,
    bw: usize,
    rows: Vec<f64>,
}

impl BandedCholesky {
    fn factor(st: &Stencil) -> Result<Self> {
        let n = st.len();
        let bw = st.mx;
        let w = bw + 1;
        let mut rows = vec![0.0; n * w];
        for i in 0..n {
            let base_i = i as isize - bw as isize;
            let jstart = i.saturating_sub(bw);
            for j in jstart..=i {
                let a = st.entry(i, j);
                let base_j = j as isize - bw as isize;
                let kstart = base_i.max(0) as usize;
                let mut s = a;
                if kstart < j {
                    let ri = &rows[i * w + (kstart as isize - base_i) as usize
                        ..i * w + (j as isize - base_i) as usize];
                    let rj = &rows[j * w + (kstart as isize - base_j) as usize..j * w + bw];
                    s -= ri.iter().zip(rj).map(|(p, q)| p * q).sum::<f64>();
                }
                let slot = i * w + (j as isize - base_i) as usize;
                if j == i {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::InvalidGrid(format!(
                            "Laplacian not positive definite at row {i}"
                        )));
                    }
                    rows[slot] = s.sqrt();
                } else {
                    rows[slot] = s / rows[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, rows })
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        // L y = b
        for i in 0..n {
            let kstart = i.saturating_sub(bw);
            let off = kstart + bw - i;
            let row = &self.rows[i * w + off..i * w + bw];
            let s: f64 = row.iter().zip(&x[kstart..i]).map(|(l, y)| l * y).sum();
            x[i] = (x[i] - s) / self.rows[i * w + bw];
        }
        // L^T x = y, column sweep
        for i in (0..n).rev() {
            let xi = x[i] / self.rows[i * w + bw];
            x[i] = xi;
            let kstart = i.saturating_sub(bw);
            let off = kstart + bw - i;
            let row = &self.rows[i * w + off..i * w + bw];
            for (xk, l) in x[kstart..i].iter_mut().zip(row) {
                *xk -= l * xi;
            }
        }
    }
}

/// Matrix-free SSOR-preconditioned conjugate gradients on the 2D stencil.
#[derive(Debug)]
struct StencilCg {
    mx: usize,
    my: usize,
    cx: f64,
    cy: f64,
    omega: f64,
    tolerance: f64,
    max_iterations: usize,
}

impl StencilCg {
    fn new(st: &Stencil) -> Self {
        let h = 1.0 / st.cx.sqrt();
        Self {
            mx: st.mx,
            my: st.my,
            cx: st.cx,
            cy: st.cy,
            omega: 2.0 / (1.0 + (std::f64::consts::PI * h).sin()),
            tolerance: 1e-12,
            max_iterations: 50 * (st.mx + st.my) + 1000,
        }
    }

    fn stencil(&self) -> Stencil {
        Stencil {
            nx: self.mx + 2,
            mx: self.mx,
            my: self.my,
            cx: self.cx,
            cy: self.cy,
        }
    }

    /// `z = M^{-1} r` with the symmetric SOR preconditioner.
    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        let (mx, my) = (self.mx, self.my);
        let d = 2.0 * self.cx + 2.0 * self.cy;
        let w = self.omega;
        // forward sweep: (D/w + L) z = r
        for j in 0..my {
            for i in 0..mx {
                let k = j * mx + i;
                let mut s = r[k];
                if i > 0 {
                    s += self.cx * z[k - 1];
                }
                if j > 0 {
                    s += self.cy * z[k - mx];
                }
                z[k] = s * w / d;
            }
        }
        // scale by D (2 - w) / w
        let scale = d * (2.0 - w) / w;
        z.iter_mut().for_each(|v| *v *= scale);
        // backward sweep: (D/w + U) z = previous
        for j in (0..my).rev() {
            for i in (0..mx).rev() {
                let k = j * mx + i;
                let mut s = z[k];
                if i + 1 < mx {
                    s += self.cx * z[k + 1];
                }
                if j + 1 < my {
                    s += self.cy * z[k + mx];
                }
                z[k] = s * w / d;
            }
        }
    }

    fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let st = self.stencil();
        let n = b.len();
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Ok(x);
        }
        let mut r = b.to_vec();
        let mut z = vec![0.0; n];
        self.precondition(&r, &mut z);
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        for it in 0..self.max_iterations {
            st.apply(&p, &mut ap);
            let alpha = rz / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rnorm <= self.tolerance * bnorm {
                return Ok(x);
            }
            self.precondition(&r, &mut z);
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
            if it + 1 == self.max_iterations {
                return Err(Error::CgFailure {
                    iterations: self.max_iterations,
                    residual: rnorm / bnorm,
                });
            }
        }
        Err(Error::CgFailure {
            iterations: self.max_iterations,
            residual: f64::NAN,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inner_l2, uniform_grid};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn line(a: f64, b: f64, n: usize) -> Arc<Grid> {
        Arc::new(uniform_grid(1, a, b, n).unwrap())
    }

    fn square(n: usize) -> Arc<Grid> {
        Arc::new(uniform_grid(2, 0.0, 1.0, n).unwrap())
    }

    fn random_interior(grid: &Arc<Grid>, rng: &mut ChaCha8Rng) -> GridFunction {
        GridFunction::from_fn(grid, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn one_dimensional_stencil() {
        let op = assemble(&line(0.0, 1.0, 5)).unwrap();
        let m = op.dense_interior_matrix();
        let s = 1.0 / (0.25 * 0.25);
        let expected = [[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(m[i][j], expected[i][j] * s, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn two_dimensional_stencil_is_kronecker_sum() {
        let grid = square(4);
        let op = assemble(&grid).unwrap();
        let m = op.dense_interior_matrix();
        let h = 1.0 / 3.0;
        let t = [[2.0, -1.0], [-1.0, 2.0]];
        let id = [[1.0, 0.0], [0.0, 1.0]];
        // I ⊗ T + T ⊗ I, x-fastest ordering
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    for d in 0..2 {
                        let row = a * 2 + b;
                        let col = c * 2 + d;
                        let k = id[a][c] * t[b][d] + t[a][c] * id[b][d];
                        assert_abs_diff_eq!(m[row][col], k / (h * h), epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn sine_is_a_discrete_eigenvector() {
        let grid = line(0.0, 1.0, 33);
        let op = assemble(&grid).unwrap();
        let h = grid.x_axis().spacing();
        let s = GridFunction::from_fn(&grid, |x, _| (PI * x).sin());
        let lap = op.apply_laplacian(&s).unwrap();
        let eig = (2.0 - 2.0 * (PI * h).cos()) / (h * h);
        for i in 1..32 {
            assert_abs_diff_eq!(lap.values()[i], eig * s.values()[i], epsilon = 1e-10);
        }
        let y = op.apply_forward(&s).unwrap();
        for i in 0..33 {
            assert_abs_diff_eq!(y.values()[i], s.values()[i] / eig, epsilon = 1e-14);
        }
    }

    #[test]
    fn zero_maps_to_zero() {
        let grid = line(0.0, 1.0, 11);
        let op = assemble(&grid).unwrap();
        let y = op.apply_forward(&GridFunction::zeros(&grid)).unwrap();
        assert!(y.values().iter().all(|&v| v == 0.0));
        let p = op.apply_adjoint(&GridFunction::zeros(&grid)).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_source_parabola_converges_second_order() {
        let mut errors = Vec::new();
        for n in [11, 21, 41, 81] {
            let grid = line(0.0, 1.0, n);
            let op = assemble(&grid).unwrap();
            let y = op
                .apply_forward(&GridFunction::constant(&grid, 1.0))
                .unwrap();
            let exact = GridFunction::from_fn(&grid, |x, _| 0.5 * x * (1.0 - x));
            let mid = y.values()[(n - 1) / 2];
            assert_abs_diff_eq!(mid, 0.125, epsilon = 1e-12);
            errors.push(y.max_abs_diff(&exact).unwrap());
        }
        // the three-point stencil is exact for quadratics
        assert!(errors.iter().all(|&e| e < 1e-12), "{errors:?}");
    }

    #[test]
    fn quartic_solution_error_quarters_when_h_halves() {
        // y = x^2 (1-x)^2 solves -y'' = -(12x^2 - 12x + 2); the stencil
        // error is the constant h^2/12 * y'''' = 2 h^2
        let mut errors = Vec::new();
        for n in [21, 41, 81, 161] {
            let grid = line(0.0, 1.0, n);
            let op = assemble(&grid).unwrap();
            let f = GridFunction::from_fn(&grid, |x, _| -(12.0 * x * x - 12.0 * x + 2.0));
            let y = op.apply_forward(&f).unwrap();
            let exact = GridFunction::from_fn(&grid, |x, _| x * x * (1.0 - x) * (1.0 - x));
            errors.push(y.max_abs_diff(&exact).unwrap());
        }
        for w in errors.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
        }
    }

    #[test]
    fn adjoint_equals_forward() {
        let grid = line(-1.0, 1.0, 51);
        let op = assemble(&grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_interior(&grid, &mut rng);
        let a = op.apply_forward(&u).unwrap();
        let b = op.apply_adjoint(&u).unwrap();
        assert_eq!(a.values(), b.values());
    }

    fn symmetry_defect(op: &PoissonOperator, rng: &mut ChaCha8Rng) -> f64 {
        let grid = op.grid().clone();
        let mut worst = 0.0_f64;
        for _ in 0..100 {
            let u = random_interior(&grid, rng);
            let r = random_interior(&grid, rng);
            let lhs = inner_l2(&op.apply_forward(&u).unwrap(), &r).unwrap();
            let rhs = inner_l2(&u, &op.apply_adjoint(&r).unwrap()).unwrap();
            let scale = crate::grid::norm_l2(&u) * crate::grid::norm_l2(&r);
            worst = worst.max((lhs - rhs).abs() / scale);
        }
        worst
    }

    #[test]
    fn adjoint_identity_holds_on_all_solvers() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let op = assemble(&line(0.0, 1.0, 1001)).unwrap();
        assert!(symmetry_defect(&op, &mut rng) <= 1e-11);
        let grid = square(17);
        for choice in [
            SolverChoice::BandedCholesky,
            SolverChoice::ConjugateGradient,
        ] {
            let op = assemble_with(&grid, choice).unwrap();
            let d = symmetry_defect(&op, &mut rng);
            assert!(d <= 1e-11, "{choice:?}: {d:e}");
        }
    }

    #[test]
    fn positivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid = square(9);
        let op = assemble(&grid).unwrap();
        for _ in 0..50 {
            let u = random_interior(&grid, &mut rng);
            assert!(inner_l2(&op.apply_forward(&u).unwrap(), &u).unwrap() > 0.0);
        }
    }

    #[test]
    fn banded_and_cg_agree() {
        let grid = square(25);
        let chol = assemble_with(&grid, SolverChoice::BandedCholesky).unwrap();
        let cg = assemble_with(&grid, SolverChoice::ConjugateGradient).unwrap();
        assert_eq!(chol.solver_name(), "banded-cholesky");
        assert_eq!(cg.solver_name(), "ssor-cg");
        let u = GridFunction::from_fn(&grid, |x, y| (3.0 * x).exp() * y.cos());
        let a = chol.apply_forward(&u).unwrap();
        let b = cg.apply_forward(&u).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-12 * a.max_abs().max(1.0) * 100.0);
    }

    #[test]
    fn two_dimensional_eigenfunction() {
        let grid = square(41);
        let op = assemble(&grid).unwrap();
        let h = grid.x_axis().spacing();
        let f = GridFunction::from_fn(&grid, |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).sin());
        let lam = 2.0 * (2.0 - 2.0 * (2.0 * PI * h).cos()) / (h * h);
        let y = op.apply_forward(&f).unwrap();
        for (a, b) in y.values().iter().zip(f.values()) {
            assert_abs_diff_eq!(*a, b / lam, epsilon = 1e-13);
        }
        let lap = op.apply_laplacian(&y).unwrap();
        for idx in 0..grid.len() {
            if !grid.is_boundary(idx) {
                assert_abs_diff_eq!(lap.values()[idx], f.values()[idx], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let op = assemble(&line(0.0, 1.0, 11)).unwrap();
        let other = GridFunction::zeros(&line(0.0, 1.0, 12));
        assert!(matches!(op.apply_forward(&other), Err(Error::GridMismatch)));
    }
}
