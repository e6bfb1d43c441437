//! Invariant suites behind the `check` command.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{apriori_bound, fit_exponent, kappa_numeric};
use crate::bregman::{run_bregman_with, solve_subproblem, AlphaSchedule, SolverSettings};
use crate::error::Result;
use crate::grid::{inner_l2, project_box, uniform_grid, BoxBounds, Grid, GridFunction};
use crate::pde::{assemble, assemble_with, SolverChoice, StateOperator};
use crate::problems::{
    build_bangbang, catalog_entries, measure_condition, AdjointSpec, TestProblem,
};

/// Outcome of one invariant check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    /// Largest observed violation (or the measured quantity).
    pub measured: f64,
    pub detail: String,
    pub passed: bool,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "[{tag}] {}: {} ({:.3e})",
            self.name, self.detail, self.measured
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct CheckReport {
    pub results: Vec<CheckResult>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.results.iter().filter(|r| !r.passed)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            writeln!(f, "{r}")?;
        }
        let failed = self.failures().count();
        write!(f, "{} checks, {} failed", self.results.len(), failed)
    }
}

/// Largest `|(Su, v) − (u, S*v)| / (‖Su‖ ‖v‖)` over random pairs.
pub fn adjoint_symmetry_defect(
    op: &dyn StateOperator,
    pairs: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    let grid = Arc::clone(op.grid());
    let mut worst = 0.0_f64;
    for _ in 0..pairs {
        let u = GridFunction::from_fn(&grid, |_, _| rng.gen_range(-1.0..1.0));
        let v = GridFunction::from_fn(&grid, |_, _| rng.gen_range(-1.0..1.0));
        let su = op.forward(&u)?;
        let sv = op.adjoint(&v)?;
        let lhs = inner_l2(&su, &v)?;
        let rhs = inner_l2(&u, &sv)?;
        let scale = (inner_l2(&su, &su)? * inner_l2(&v, &v)?).sqrt();
        if scale > 0.0 {
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    Ok(worst)
}

/// The "adjoint symmetry" check over several operators.
pub fn adjoint_symmetry_check(
    ops: &[&dyn StateOperator],
    pairs: usize,
    seed: u64,
) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    let mut grids = Vec::new();
    for op in ops {
        worst = worst.max(adjoint_symmetry_defect(*op, pairs, &mut rng)?);
        grids.push(op.grid().describe());
    }
    Ok(CheckResult {
        name: "adjoint symmetry".into(),
        measured: worst,
        detail: format!(
            "{pairs} random pairs on {}; relative defect <= 1e-11",
            grids.join(", ")
        ),
        passed: worst <= 1e-11,
    })
}

/// Idempotence, nonexpansiveness and feasibility of the box projection.
pub fn projection_check(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Arc::new(uniform_grid(1, 0.0, 1.0, 257)?);
    let bounds = BoxBounds::default();
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let f = GridFunction::from_fn(&grid, |_, _| rng.gen_range(-3.0..3.0));
        let g = GridFunction::from_fn(&grid, |_, _| rng.gen_range(-3.0..3.0));
        let pf = project_box(&f, &bounds);
        let pg = project_box(&g, &bounds);
        worst = worst.max(project_box(&pf, &bounds).max_abs_diff(&pf)?);
        let d_in = f.sub(&g)?;
        let d_out = pf.sub(&pg)?;
        let expansion = inner_l2(&d_out, &d_out)?.sqrt() - inner_l2(&d_in, &d_in)?.sqrt();
        worst = worst.max(expansion);
        if pf.values().iter().any(|v| !bounds.contains(*v)) {
            worst = f64::INFINITY;
        }
    }
    Ok(CheckResult {
        name: "projection".into(),
        measured: worst,
        detail: "idempotent, nonexpansive, feasible on 100 random functions".into(),
        passed: worst <= 1e-14,
    })
}

/// Subgradient identity and residual monotonicity along short runs.
pub fn run_invariants_check(
    problems: &[TestProblem],
    iterations: usize,
) -> Result<Vec<CheckResult>> {
    let settings = SolverSettings::default();
    let schedule = AlphaSchedule::constant(1.0)?;
    let mut defect = 0.0_f64;
    let mut increase = f64::NEG_INFINITY;
    for problem in problems {
        let bounds = *problem.bounds();
        let mut last = f64::INFINITY;
        run_bregman_with(problem, &schedule, iterations, &settings, |st| {
            let p = project_box(&st.multiplier, &bounds);
            defect = defect.max(st.control.max_abs_diff(&p)?);
            if last.is_finite() {
                increase = increase.max(st.residual - last);
            }
            last = st.residual;
            Ok(())
        })?;
    }
    let names: Vec<&str> = problems.iter().map(|p| p.name()).collect();
    Ok(vec![
        CheckResult {
            name: "subgradient identity".into(),
            measured: defect,
            detail: format!(
                "max ||u_k - P(lambda_k)||_inf over {iterations} iterations of {}; <= 1e-10",
                names.join(", ")
            ),
            passed: defect <= settings.tolerance,
        },
        CheckResult {
            name: "residual monotonicity".into(),
            measured: increase,
            detail: "max residual increase between iterations; <= 1e-12".into(),
            passed: increase <= 1e-12,
        },
    ])
}

/// Least-squares exponent of `|{0 < |p†| < ε}|` over `ε = 10^{-2}..10^{-5}`.
pub fn measure_exponent(spec: &AdjointSpec, samples: usize) -> Result<f64> {
    let eps: Vec<f64> = (0..=6).map(|i| 10f64.powf(-2.0 - 0.5 * i as f64)).collect();
    let m = measure_condition(spec, samples, &eps)?;
    Ok(fit_exponent(&m, None)?.slope)
}

/// Default per-axis sample count for the measure check.
pub const MEASURE_SAMPLES: usize = 1_000_000;

pub fn measure_check(spec: &AdjointSpec, samples: usize) -> Result<CheckResult> {
    let slope = measure_exponent(spec, samples)?;
    let deviation = (slope - spec.kappa).abs();
    Ok(CheckResult {
        name: format!("measure exponent {}", spec.name),
        measured: slope,
        detail: format!(
            "fitted slope {slope:.4} vs kappa {:.4} (deviation {deviation:.4}); within 0.05",
            spec.kappa
        ),
        passed: deviation <= 0.05,
    })
}

/// Solves the subproblem by projected gradient descent with step `1/L`,
/// `L = α + ‖S‖²`, for up to `max_iter` steps.
pub fn projected_gradient_oracle(
    op: &dyn StateOperator,
    z: &GridFunction,
    bounds: &BoxBounds,
    alpha: f64,
    lambda: &GridFunction,
    norm_s: f64,
    max_iter: usize,
) -> Result<GridFunction> {
    let n = z.values().len();
    let step = 1.0 / (alpha + norm_s * norm_s);
    let mut u = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut g = vec![0.0; n];
    for _ in 0..max_iter {
        op.forward_into(&u, &mut y)?;
        for i in 0..n {
            r[i] = y[i] - z.values()[i];
        }
        op.adjoint_into(&r, &mut g)?;
        let mut change = 0.0_f64;
        for i in 0..n {
            let grad = g[i] + alpha * (u[i] - lambda.values()[i]);
            let next = bounds.clamp(u[i] - step * grad);
            change = change.max((next - u[i]).abs());
            u[i] = next;
        }
        if change == 0.0 {
            break;
        }
    }
    GridFunction::from_values(z.grid(), u)
}

/// Largest subproblem/oracle sup-norm gap over random 12-interior-node
/// instances with `λ_prev = 0`.
pub fn subproblem_oracle_gap(instances: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid: Arc<Grid> = Arc::new(uniform_grid(1, 0.0, 1.0, 14)?);
    let op = assemble(&grid)?;
    let h = grid.x_axis().spacing();
    let norm_s = h * h / (4.0 * (std::f64::consts::PI * h / 2.0).sin().powi(2));
    let bounds = BoxBounds::default();
    let lambda = GridFunction::zeros(&grid);
    let mut worst = 0.0_f64;
    for _ in 0..instances {
        let scale = rng.gen_range(10.0..200.0);
        let z = GridFunction::from_fn(&grid, |_, _| rng.gen_range(-scale..scale));
        let alpha = rng.gen_range(0.01..1.0);
        let sol = solve_subproblem(
            &op,
            &z,
            &bounds,
            alpha,
            &lambda,
            &GridFunction::zeros(&grid),
            &SolverSettings::default(),
        )?;
        let oracle =
            projected_gradient_oracle(&op, &z, &bounds, alpha, &lambda, norm_s, 1_000_000)?;
        worst = worst.max(sol.control.max_abs_diff(&oracle)?);
    }
    Ok(worst)
}

pub fn subproblem_oracle_check(seed: u64) -> Result<CheckResult> {
    let gap = subproblem_oracle_gap(10, seed)?;
    Ok(CheckResult {
        name: "subproblem oracle".into(),
        measured: gap,
        detail: "active-set solver vs projected gradient on 10 random 12-node instances; <= 1e-6"
            .into(),
        passed: gap <= 1e-6,
    })
}

/// Largest `|κ_k − κ|` on `e²(k) = k^{-κ}` for even `k <= 2048`.
pub fn synthetic_kappa_defect(kappa: f64) -> Result<f64> {
    let history: Vec<f64> = (0..=2048)
        .map(|k| if k == 0 { 1.0 } else { (k as f64).powf(-kappa) })
        .collect();
    let mut worst = 0.0_f64;
    for k in (2..=2048).step_by(2) {
        match kappa_numeric(&history, k)? {
            Some(v) => worst = worst.max((v - kappa).abs()),
            None => return Ok(f64::INFINITY),
        }
    }
    Ok(worst)
}

pub fn synthetic_kappa_check() -> Result<CheckResult> {
    let mut worst = 0.0_f64;
    for kappa in [1.0 / 3.0, 0.5, 1.0] {
        worst = worst.max(synthetic_kappa_defect(kappa)?);
    }
    Ok(CheckResult {
        name: "synthetic kappa".into(),
        measured: worst,
        detail: "kappa_k on e^2(k) = k^-kappa for kappa in {1/3, 1/2, 1}; <= 1e-12".into(),
        passed: worst <= 1e-12,
    })
}

/// Fitted slope of `apriori_bound` over dyadic `k ∈ [2^10, 2^14]`, α ≡ 1.
pub fn apriori_slope(kappa: f64) -> Result<f64> {
    let one = AlphaSchedule::constant(1.0)?;
    let pairs = (10..=14)
        .map(|e| {
            let k = 1usize << e;
            Ok((k as f64, apriori_bound(&one, kappa, k)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(fit_exponent(&pairs, None)?.slope)
}

/// `k · bound(k) / ln k` at dyadic `k ∈ [2^10, 2^14]` for `κ = 1`, α ≡ 1.
pub fn apriori_log_profile() -> Result<Vec<(usize, f64)>> {
    let one = AlphaSchedule::constant(1.0)?;
    (10..=14)
        .map(|e| {
            let k = 1usize << e;
            Ok((k, k as f64 * apriori_bound(&one, 1.0, k)? / (k as f64).ln()))
        })
        .collect()
}

/// Largest relative deviation of the profile from its mean.
pub fn flatness(profile: &[(usize, f64)]) -> f64 {
    let mean = profile.iter().map(|p| p.1).sum::<f64>() / profile.len() as f64;
    profile
        .iter()
        .map(|p| (p.1 / mean - 1.0).abs())
        .fold(0.0, f64::max)
}

pub fn apriori_checks() -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for kappa in [1.0 / 3.0, 0.5] {
        let slope = apriori_slope(kappa)?;
        out.push(CheckResult {
            name: format!("apriori slope kappa={kappa:.3}"),
            measured: slope,
            detail: format!("fitted slope {slope:.4} vs {:.4}; within 0.03", -kappa),
            passed: (slope + kappa).abs() <= 0.03,
        });
    }
    let flat = flatness(&apriori_log_profile()?);
    out.push(CheckResult {
        name: "apriori log profile kappa=1".into(),
        measured: flat,
        detail: "k bound(k) / ln k within 5% of its mean on [2^10, 2^14]".into(),
        passed: flat <= 0.05,
    });
    Ok(out)
}

/// Small instances of every catalog example for the run invariants.
pub fn small_catalog_problems() -> Result<Vec<TestProblem>> {
    catalog_entries()
        .iter()
        .map(|spec| {
            let n = if spec.dimension() == 1 { 201 } else { 21 };
            build_bangbang(spec, BoxBounds::default(), spec.grid(n)?)
        })
        .collect()
}

/// Runs the whole suite with fixed seeds.
pub fn run_all(measure_samples: usize) -> Result<CheckReport> {
    let line = Arc::new(uniform_grid(1, 0.0, 1.0, 101)?);
    let square = Arc::new(uniform_grid(2, 0.0, 1.0, 21)?);
    let thomas = assemble(&line)?;
    let banded = assemble_with(&square, SolverChoice::BandedCholesky)?;
    let cg = assemble_with(&square, SolverChoice::ConjugateGradient)?;
    let ops: [&dyn StateOperator; 3] = [&thomas, &banded, &cg];

    let mut report = CheckReport::default();
    report.results.push(adjoint_symmetry_check(&ops, 100, 1)?);
    report.results.push(projection_check(2)?);
    report
        .results
        .extend(run_invariants_check(&small_catalog_problems()?, 64)?);
    for spec in catalog_entries() {
        report.results.push(measure_check(&spec, measure_samples)?);
    }
    report.results.push(subproblem_oracle_check(3)?);
    report.results.push(synthetic_kappa_check()?);
    report.results.extend(apriori_checks()?);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::catalog;

    #[test]
    fn symmetric_operators_pass() {
        let grid = Arc::new(uniform_grid(1, 0.0, 1.0, 33).unwrap());
        let op = assemble(&grid).unwrap();
        let r = adjoint_symmetry_check(&[&op], 20, 4).unwrap();
        assert!(r.passed, "{r}");
        assert_eq!(r.name, "adjoint symmetry");
    }

    #[test]
    fn projection_properties_hold() {
        let r = projection_check(5).unwrap();
        assert!(r.passed, "{r}");
    }

    #[test]
    fn oracle_recovers_unconstrained_minimizer() {
        // wide box: the oracle must converge to (αI + S*S)^{-1}(αλ + S*z)
        let grid = Arc::new(uniform_grid(1, 0.0, 1.0, 14).unwrap());
        let op = assemble(&grid).unwrap();
        let h = grid.x_axis().spacing();
        let norm_s = h * h / (4.0 * (std::f64::consts::PI * h / 2.0).sin().powi(2));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let z = GridFunction::from_fn(&grid, |_, _| rng.gen_range(-5.0..5.0));
        let lambda = GridFunction::zeros(&grid);
        let wide = BoxBounds::new(-1e3, 1e3).unwrap();
        let alpha = 0.3;
        let u =
            projected_gradient_oracle(&op, &z, &wide, alpha, &lambda, norm_s, 1_000_000).unwrap();
        // residual of the normal equation
        let r = op.forward(&u).unwrap().sub(&z).unwrap();
        let g = op.adjoint(&r).unwrap();
        for (gi, ui) in g.values().iter().zip(u.values()) {
            assert!((gi + alpha * ui).abs() < 1e-12);
        }
    }

    #[test]
    fn subproblem_agrees_with_oracle() {
        let gap = subproblem_oracle_gap(10, 21).unwrap();
        assert!(gap <= 1e-6, "{gap:e}");
    }

    #[test]
    fn synthetic_kappa_is_exact() {
        for kappa in [1.0 / 3.0, 0.5, 1.0, 0.123] {
            assert!(synthetic_kappa_defect(kappa).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn ex3_measure_slope_is_near_one_third() {
        let s = measure_exponent(&catalog("ex3-1d-k13").unwrap(), 1_000_000).unwrap();
        assert!((0.28..=0.38).contains(&s), "{s}");
    }

    #[test]
    fn run_invariants_on_small_catalog() {
        let problems = small_catalog_problems().unwrap();
        for r in run_invariants_check(&problems, 16).unwrap() {
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn report_formatting() {
        let report = CheckReport {
            results: vec![
                CheckResult {
                    name: "a".into(),
                    measured: 0.0,
                    detail: "ok".into(),
                    passed: true,
                },
                CheckResult {
                    name: "b".into(),
                    measured: 1.0,
                    detail: "bad".into(),
                    passed: false,
                },
            ],
        };
        let text = report.to_string();
        assert!(text.contains("[PASS] a"));
        assert!(text.contains("[FAIL] b"));
        assert!(text.ends_with("2 checks, 1 failed"));
        assert!(!report.all_passed());
    }
}
