//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fail.

use std::collections::HashMap;
use std::time::Instant;

use bregman_control::analysis::{dyadic_ks, fit_exponent, kappa_numeric};
use bregman_control::bregman::{run_bregman_with, AlphaSchedule, SolverSettings};
use bregman_control::checks::{
    adjoint_symmetry_check, apriori_log_profile, apriori_slope, flatness, measure_check,
    projection_check, run_invariants_check, small_catalog_problems, subproblem_oracle_gap,
    synthetic_kappa_defect, MEASURE_SAMPLES,
};
use bregman_control::grid::{project_box, uniform_grid, BoxBounds};
use bregman_control::pde::{assemble, assemble_with, SolverChoice, StateOperator};
use bregman_control::problems::{build_bangbang, catalog, catalog_entries};

struct RunData {
    errors: Vec<f64>,
    max_defect: f64,
    max_increase: f64,
}

impl RunData {
    fn kappa(&self, k: usize) -> Option<f64> {
        kappa_numeric(&self.errors, k).unwrap()
    }
}

#[derive(Default)]
struct Runs {
    cache: HashMap<(String, usize, usize), RunData>,
}

impl Runs {
    fn get(&mut self, example: &str, nodes: usize, iterations: usize) -> &RunData {
        self.cache
            .entry((example.to_string(), nodes, iterations))
            .or_insert_with(|| {
                let t = Instant::now();
                let spec = catalog(example).unwrap();
                let problem =
                    build_bangbang(&spec, BoxBounds::default(), spec.grid(nodes).unwrap()).unwrap();
                let bounds = *problem.bounds();
                let mut data = RunData {
                    errors: Vec::with_capacity(iterations + 1),
                    max_defect: 0.0,
                    max_increase: f64::NEG_INFINITY,
                };
                let mut last = f64::INFINITY;
                run_bregman_with(
                    &problem,
                    &AlphaSchedule::constant(1.0).unwrap(),
                    iterations,
                    &SolverSettings::default(),
                    |st| {
                        data.errors.push(st.error_sq.unwrap());
                        let p = project_box(&st.multiplier, &bounds);
                        data.max_defect = data.max_defect.max(st.control.max_abs_diff(&p)?);
                        if last.is_finite() {
                            data.max_increase = data.max_increase.max(st.residual - last);
                        }
                        last = st.residual;
                        Ok(())
                    },
                )
                .unwrap();
                println!(
                    "    (ran {example} with {nodes} nodes/axis, K = {iterations}, in {:.1?})",
                    t.elapsed()
                );
                data
            })
    }
}

fn fmt_kappas(run: &RunData, ks: &[usize]) -> String {
    ks.iter()
        .map(|&k| match run.kappa(k) {
            Some(v) => format!("k={k}: {v:.3}"),
            None => format!("k={k}: -"),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn within(v: Option<f64>, target: f64, tol: f64) -> bool {
    v.is_some_and(|v| (v - target).abs() <= tol)
}

fn criterion_1(runs: &mut Runs) -> (bool, String) {
    let coarse = fmt_kappas(runs.get("ex1-1d-k1", 20001, 512), &[64, 128, 256]);
    let fine = runs.get("ex1-1d-k1", 200001, 512);
    let targets = [(64, 0.958), (128, 0.975), (256, 0.980)];
    let ok = targets.iter().all(|&(k, t)| within(fine.kappa(k), t, 0.05));
    (
        ok,
        format!(
            "ex1 h=1e-5 {} vs 0.958/0.975/0.980 +-0.05 (h=1e-4: {coarse})",
            fmt_kappas(fine, &[64, 128, 256])
        ),
    )
}

fn criterion_2(runs: &mut Runs) -> (bool, String) {
    let run = runs.get("ex3-1d-k13", 10001, 2048);
    let targets = [(256, 0.335), (512, 0.332), (1024, 0.328)];
    let ok = targets.iter().all(|&(k, t)| within(run.kappa(k), t, 0.02));
    let detail = targets
        .iter()
        .map(|&(k, t)| {
            format!(
                "k={k}: {:.4} (target {t})",
                run.kappa(k).unwrap_or(f64::NAN)
            )
        })
        .collect::<Vec<_>>()
        .join(", ");
    (ok, format!("ex3 h=1e-4 {detail} +-0.02"))
}

fn criterion_3(runs: &mut Runs) -> (bool, String) {
    let run = runs.get("ex2-1d-k12", 100001, 2048);
    let ks: Vec<usize> = dyadic_ks(2048).into_iter().filter(|&k| k >= 128).collect();
    let in_band = ks
        .iter()
        .all(|&k| run.kappa(k).is_some_and(|v| (0.50..=0.62).contains(&v)));
    let pairs: Vec<(f64, f64)> = ks.iter().map(|&k| (k as f64, run.errors[k])).collect();
    let rate = -fit_exponent(&pairs, None).unwrap().slope;
    let ok = in_band && (0.48..=0.58).contains(&rate);
    (
        ok,
        format!(
            "ex2 h=1e-5 {} in [0.50, 0.62]; fitted {rate:.4} in [0.48, 0.58]",
            fmt_kappas(run, &ks)
        ),
    )
}

fn criterion_4(runs: &mut Runs) -> (bool, String) {
    let run = runs.get("ex4-2d-k1", 101, 2048);
    let k16 = run.kappa(16);
    let k2048 = run.kappa(2048);
    let ok = within(k16, 0.789, 0.10) && k2048.is_none_or(|v| v < 0.3);
    (
        ok,
        format!(
            "ex4 101x101 kappa_16 = {:.3} vs 0.789 +-0.10; kappa_2048 = {:?} < 0.3 ({})",
            k16.unwrap_or(f64::NAN),
            k2048.map(|v| (v * 1e3).round() / 1e3),
            fmt_kappas(run, &dyadic_ks(2048))
        ),
    )
}

fn criterion_5(runs: &mut Runs) -> (bool, String) {
    let run = runs.get("ex1-1d-k1", 2001, 1024);
    let ks = dyadic_ks(1024);
    let lowest = ks
        .iter()
        .filter_map(|&k| run.kappa(k).map(|v| (k, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    let ok = lowest.is_some_and(|(_, v)| v <= 0.2);
    (
        ok,
        format!(
            "ex1 h=1e-3 min kappa_k for k <= 1024: {lowest:?} <= 0.2 ({})",
            fmt_kappas(run, &ks)
        ),
    )
}

fn criterion_6_properties(runs: &mut Runs) -> (bool, String) {
    let mut notes = Vec::new();
    let mut ok = true;

    let line = std::sync::Arc::new(uniform_grid(1, 0.0, 1.0, 1001).unwrap());
    let square = std::sync::Arc::new(uniform_grid(2, 0.0, 1.0, 101).unwrap());
    let thomas = assemble(&line).unwrap();
    let banded = assemble_with(&square, SolverChoice::BandedCholesky).unwrap();
    let cg = assemble_with(&square, SolverChoice::ConjugateGradient).unwrap();
    let ops: [&dyn StateOperator; 3] = [&thomas, &banded, &cg];
    let sym = adjoint_symmetry_check(&ops, 100, 42).unwrap();
    ok &= sym.passed;
    notes.push(format!("symmetry {:.1e}", sym.measured));

    let proj = projection_check(43).unwrap();
    ok &= proj.passed;

    // every iteration of every acceptance run plus the small catalog runs
    let mut defect = 0.0_f64;
    let mut increase = f64::NEG_INFINITY;
    for r in runs.cache.values() {
        defect = defect.max(r.max_defect);
        increase = increase.max(r.max_increase);
    }
    for r in run_invariants_check(&small_catalog_problems().unwrap(), 256).unwrap() {
        ok &= r.passed;
        if r.name == "subgradient identity" {
            defect = defect.max(r.measured);
        } else {
            increase = increase.max(r.measured);
        }
    }
    ok &= defect <= 1e-10 && increase <= 1e-12;
    notes.push(format!("subgradient {defect:.1e}"));
    notes.push(format!("residual increase {increase:.1e}"));

    let gap = subproblem_oracle_gap(10, 44).unwrap();
    ok &= gap <= 1e-6;
    notes.push(format!("oracle gap {gap:.1e}"));

    let synth = [1.0 / 3.0, 0.5, 1.0]
        .iter()
        .map(|&k| synthetic_kappa_defect(k).unwrap())
        .fold(0.0, f64::max);
    ok &= synth <= 1e-12;
    notes.push(format!("synthetic kappa {synth:.1e}"));
    (ok, notes.join(", "))
}

fn criterion_6_measure() -> (bool, String) {
    let mut ok = true;
    let mut notes = Vec::new();
    for spec in catalog_entries() {
        let r = measure_check(&spec, MEASURE_SAMPLES).unwrap();
        ok &= r.passed;
        notes.push(format!(
            "{} {:.4} vs {:.3}{}",
            spec.name,
            r.measured,
            spec.kappa,
            if r.passed { "" } else { " (off)" }
        ));
    }
    (ok, notes.join(", ") + "; within 0.05")
}

fn criterion_7() -> (bool, String) {
    let s3 = apriori_slope(1.0 / 3.0).unwrap();
    let s2 = apriori_slope(0.5).unwrap();
    let profile = apriori_log_profile().unwrap();
    let flat = flatness(&profile);
    let ok = (s3 + 1.0 / 3.0).abs() <= 0.03 && (s2 + 0.5).abs() <= 0.03 && flat <= 0.05;
    let values = profile
        .iter()
        .map(|(k, v)| format!("{k}: {v:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    (
        ok,
        format!(
            "slopes {s3:.4} (-1/3), {s2:.4} (-1/2) +-0.03; k bound/ln k [{values}] max deviation {:.1}% <= 5%",
            flat * 100.0
        ),
    )
}

fn main() {
    let mut runs = Runs::default();
    type Criterion = Box<dyn FnOnce(&mut Runs) -> (bool, String)>;
    let criteria: Vec<(&str, Criterion)> = vec![
        ("1 kappa=1 fine grid", Box::new(criterion_1)),
        ("2 kappa=1/3 fine grid", Box::new(criterion_2)),
        ("3 kappa=1/2 trend", Box::new(criterion_3)),
        ("4 2D example", Box::new(criterion_4)),
        ("5 coarse-grid domination", Box::new(criterion_5)),
        ("6a property suite", Box::new(criterion_6_properties)),
        ("6b measure exponents", Box::new(|_| criterion_6_measure())),
        ("7 a-priori bound asymptotics", Box::new(|_| criterion_7())),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        let (ok, detail) = check(&mut runs);
        println!(
            "criterion {name}: {} - {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            failed.push(name);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: {} failed: {}", failed.len(), failed.join("; "));
        std::process::exit(1);
    }
}
