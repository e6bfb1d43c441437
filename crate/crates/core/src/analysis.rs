//! Rate diagnostics for Bregman runs.

use crate::bregman::{AlphaSchedule, BregmanRun};
use crate::error::{Error, Result};

/// `log₂(e²(k/2) / e²(k))` from a history indexed by `k`.
///
/// Returns `Ok(None)` when either entry is missing, zero, negative or not
/// finite, which happens once the iterates hit the solution exactly.
pub fn kappa_numeric(history: &[f64], k: usize) -> Result<Option<f64>> {
    if k < 2 || !k.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "kappa_k needs an even k >= 2, got {k}"
        )));
    }
    let (Some(&prev), Some(&cur)) = (history.get(k / 2), history.get(k)) else {
        return Ok(None);
    };
    let usable = |v: f64| v.is_finite() && v > 0.0;
    if !usable(prev) || !usable(cur) {
        return Ok(None);
    }
    Ok(Some((prev / cur).log2()))
}

/// `γ_k = Σ_{j=1}^k α_j^{-1}`.
pub fn gamma_k(schedule: &AlphaSchedule, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("gamma_k needs k >= 1".into()));
    }
    if let AlphaSchedule::Constant(a) = schedule {
        return Ok(k as f64 / a);
    }
    (1..=k)
        .map(|j| {
            schedule.alpha(j).map(|a| 1.0 / a).ok_or_else(|| {
                Error::InvalidArgument(format!("alpha schedule does not cover k = {k}"))
            })
        })
        .sum()
}

/// `γ_k^{-1} (1 + Σ_{j=1}^k α_j^{-1} γ_j^{-κ})`.
pub fn apriori_bound(schedule: &AlphaSchedule, kappa: f64, k: usize) -> Result<f64> {
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "kappa must lie in (0, 1], got {kappa}"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("apriori_bound needs k >= 1".into()));
    }
    let mut gamma = 0.0;
    let mut sum = 0.0;
    for j in 1..=k {
        let a = schedule.alpha(j).ok_or_else(|| {
            Error::InvalidArgument(format!("alpha schedule does not cover k = {k}"))
        })?;
        gamma += 1.0 / a;
        sum += gamma.powf(-kappa) / a;
    }
    Ok((1.0 + sum) / gamma)
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Fits `ln y = slope · ln x + intercept`, optionally restricted to
/// `lo <= x <= hi`.
pub fn fit_exponent(pairs: &[(f64, f64)], window: Option<(f64, f64)>) -> Result<ExponentFit> {
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(x, _)| window.is_none_or(|(lo, hi)| *x >= lo && *x <= hi))
        .copied()
        .collect();
    if pts.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "need at least 3 pairs, got {}",
            pts.len()
        )));
    }
    if let Some((x, y)) = pts.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::DegenerateFit(format!(
            "non-positive coordinate ({x}, {y})"
        )));
    }
    let n = pts.len() as f64;
    let lx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= f64::EPSILON * n * (1.0 + mx * mx) {
        return Err(Error::DegenerateFit("all x values are equal".into()));
    }
    let slope = sxy / sxx;
    Ok(ExponentFit {
        slope,
        intercept: my - slope * mx,
        points: pts.len(),
    })
}

/// Powers of two `4, 8, ..., <= k_max`.
pub fn dyadic_ks(k_max: usize) -> Vec<usize> {
    std::iter::successors(Some(4usize), |k| k.checked_mul(2))
        .take_while(|&k| k <= k_max)
        .collect()
}

/// One row of a [`RateReport`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRecord {
    pub k: usize,
    pub error_sq: Option<f64>,
    pub residual: f64,
    pub kappa: Option<f64>,
}

/// Per-iteration rates of one run with an error-decay fit.
#[derive(Debug, Clone)]
pub struct RateReport {
    pub grid: String,
    pub records: Vec<RateRecord>,
    /// Fit of `e²(k) ≈ C k^{-rate}` over `window`; `rate` is `-slope`.
    pub fit: Option<ExponentFit>,
    pub window: Option<(usize, usize)>,
}

impl RateReport {
    pub fn from_run(run: &BregmanRun, grid: impl Into<String>) -> Self {
        let errors = run.squared_errors();
        let records = run
            .records
            .iter()
            .map(|r| RateRecord {
                k: r.k,
                error_sq: r.error_sq,
                residual: r.residual,
                kappa: if r.k >= 2 && r.k % 2 == 0 {
                    kappa_numeric(&errors, r.k).ok().flatten()
                } else {
                    None
                },
            })
            .collect();
        let window = default_window(&errors);
        let fit = window.and_then(|w| fit_window(&errors, w).ok());
        Self {
            grid: grid.into(),
            records,
            fit,
            window,
        }
    }

    pub fn kappa(&self, k: usize) -> Option<f64> {
        self.records.get(k).and_then(|r| r.kappa)
    }

    /// `-slope` of the error fit.
    pub fn rate(&self) -> Option<f64> {
        self.fit.map(|f| -f.slope)
    }
}

/// The longest run of consecutive dyadic `k` (starting at 1) along which
/// the squared errors strictly decrease, as `(first, last)`.
pub fn default_window(errors: &[f64]) -> Option<(usize, usize)> {
    let ks: Vec<usize> = std::iter::successors(Some(1usize), |k| k.checked_mul(2))
        .take_while(|&k| k < errors.len())
        .collect();
    let ok = |v: f64| v.is_finite() && v > 0.0;
    let mut best: Option<(usize, usize)> = None;
    let mut start = 0;
    for i in 0..ks.len() {
        let breaks = !ok(errors[ks[i]]) || (i > start && errors[ks[i]] >= errors[ks[i - 1]]);
        if breaks {
            start = if ok(errors[ks[i]]) { i } else { i + 1 };
        }
        if start <= i && i - start + 1 >= 3 {
            let len = i - start + 1;
            if best.is_none_or(|(a, b)| len > b - a) {
                best = Some((start, i));
            }
        }
    }
    best.map(|(a, b)| (ks[a], ks[b]))
}

/// Fits the squared errors at dyadic `k` within `[first, last]`.
pub fn fit_window(errors: &[f64], window: (usize, usize)) -> Result<ExponentFit> {
    let pairs: Vec<(f64, f64)> = std::iter::successors(Some(1usize), |k| k.checked_mul(2))
        .take_while(|&k| k <= window.1 && k < errors.len())
        .filter(|&k| k >= window.0)
        .map(|k| (k as f64, errors[k]))
        .collect();
    fit_exponent(&pairs, None)
}
