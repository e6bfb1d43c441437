use std::sync::Arc;

use bregman_control::checks::adjoint_symmetry_check;
use bregman_control::grid::{uniform_grid, Grid};
use bregman_control::pde::{assemble, PoissonOperator, StateOperator};
use bregman_control::Result;

/// The Poisson solve with an asymmetric stencil perturbation on the forward
/// side only, so that the adjoint no longer matches.
struct SkewedOperator {
    inner: PoissonOperator,
}

impl StateOperator for SkewedOperator {
    fn grid(&self) -> &Arc<Grid> {
        self.inner.grid()
    }

    fn forward_into(&self, u: &[f64], y: &mut [f64]) -> Result<()> {
        self.inner.forward_into(u, y)?;
        let n = y.len();
        let shifted: Vec<f64> = (0..n)
            .map(|i| {
                if i + 1 < n - 1 && i > 0 {
                    y[i + 1]
                } else {
                    0.0
                }
            })
            .collect();
        for i in 1..n - 1 {
            y[i] += 0.1 * shifted[i];
        }
        Ok(())
    }

    fn adjoint_into(&self, r: &[f64], p: &mut [f64]) -> Result<()> {
        self.inner.adjoint_into(r, p)
    }
}

#[test]
fn broken_adjoint_fails_the_symmetry_check() {
    let grid = Arc::new(uniform_grid(1, 0.0, 1.0, 65).unwrap());
    let good = assemble(&grid).unwrap();
    let bad = SkewedOperator {
        inner: assemble(&grid).unwrap(),
    };
    let ok = adjoint_symmetry_check(&[&good], 100, 7).unwrap();
    assert!(ok.passed);
    let broken = adjoint_symmetry_check(&[&good, &bad], 100, 7).unwrap();
    assert!(!broken.passed);
    assert_eq!(broken.name, "adjoint symmetry");
    assert!(broken.to_string().starts_with("[FAIL] adjoint symmetry"));
}
