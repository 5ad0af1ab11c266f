use crate::fem::DensityField;
use crate::problem::DesignProblem;

use super::{SimpError, SolverConfig};

const LAMBDA_LO: f64 = 1e-9;
const LAMBDA_HI: f64 = 1e9;
const MAX_HALVINGS: usize = 200;

/// Heuristic OC step for one multiplier: `x·(ratio/λ)^η` clamped to the
/// move-limit box and `[0, 1]`. Only `active` entries change.
pub(crate) fn oc_step(
    x: &[f64],
    ratio: &[f64],
    active: &[bool],
    lambda: f64,
    cfg: &SolverConfig,
) -> Vec<f64> {
    x.iter()
        .zip(ratio)
        .zip(active)
        .map(|((&xe, &re), &a)| {
            if !a {
                return xe;
            }
            let lo = (xe - cfg.move_limit).max(0.0);
            let hi = (xe + cfg.move_limit).min(1.0);
            (xe * (re / lambda).powf(cfg.eta)).clamp(lo, hi)
        })
        .collect()
}

/// Bisects `ln λ` on `[1e-9, 1e9]` until `volume(x') ` is within
/// `cfg.bisection_tol` of `target`. `volume` must be non-increasing in λ.
pub(crate) fn oc_bisect(
    x: &[f64],
    ratio: &[f64],
    active: &[bool],
    target: f64,
    cfg: &SolverConfig,
    volume: impl Fn(&[f64]) -> f64,
) -> Result<Vec<f64>, SimpError> {
    let (mut lo, mut hi) = (LAMBDA_LO.ln(), LAMBDA_HI.ln());
    let at = |l: f64| {
        let xn = oc_step(x, ratio, active, l.exp(), cfg);
        let v = volume(&xn);
        (xn, v)
    };
    let (x_lo, v_lo) = at(lo);
    if (v_lo - target).abs() <= cfg.bisection_tol {
        return Ok(x_lo);
    }
    let (x_hi, v_hi) = at(hi);
    if (v_hi - target).abs() <= cfg.bisection_tol {
        return Ok(x_hi);
    }
    if v_lo < target || v_hi > target {
        return Err(SimpError::BisectionFailure(format!(
            "target volume {target:.6} not bracketed: [{v_hi:.6}, {v_lo:.6}] over λ ∈ [{LAMBDA_LO:e}, {LAMBDA_HI:e}]"
        )));
    }
    let mut last = f64::NAN;
    for _ in 0..MAX_HALVINGS {
        let mid = 0.5 * (lo + hi);
        let (xn, v) = at(mid);
        if (v - target).abs() <= cfg.bisection_tol {
            return Ok(xn);
        }
        if v > target {
            lo = mid;
        } else {
            hi = mid;
        }
        last = v;
    }
    Err(SimpError::BisectionFailure(format!(
        "no multiplier within {:e} of volume {target:.6} after {MAX_HALVINGS} halvings (last {last:.6})",
        cfg.bisection_tol
    )))
}

/// One OC update of `rho` from compliance sensitivities `sens` (≤ 0).
///
/// Only editable elements move; the new mean over them equals the problem's
/// volume fraction within `cfg.bisection_tol`. Frozen and off-domain entries
/// are returned unchanged. Positive sensitivities are treated as zero.
pub fn oc_update(
    rho: &DensityField,
    sens: &[f64],
    problem: &DesignProblem,
    cfg: &SolverConfig,
) -> Result<DensityField, SimpError> {
    let n = problem.grid.n_elements();
    if rho.rho.len() != n || sens.len() != n {
        return Err(SimpError::InvalidInput(format!(
            "expected {n} entries, got rho {} and sens {}",
            rho.rho.len(),
            sens.len()
        )));
    }
    cfg.validate()?;
    let active = problem.editable();
    let count = active.iter().filter(|&&a| a).count();
    if count == 0 {
        return Ok(rho.clone());
    }
    let ratio: Vec<f64> = sens.iter().map(|&s| (-s).max(0.0)).collect();
    let volume = |x: &[f64]| {
        x.iter()
            .zip(&active)
            .filter(|(_, &a)| a)
            .map(|(v, _)| v)
            .sum::<f64>()
            / count as f64
    };
    let next = oc_bisect(
        &rho.rho,
        &ratio,
        &active,
        problem.volume_fraction,
        cfg,
        volume,
    )?;
    Ok(DensityField {
        grid: rho.grid,
        rho: next,
        domain: rho.domain.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn uniform_sensitivity_lands_on_target() {
        let p = DesignProblem::benchmark(Grid::new(6, 6));
        let cfg = SolverConfig::default();
        let field = DensityField::uniform(&p, 0.3);
        let out = oc_update(&field, &vec![-1.0; 36], &p, &cfg).unwrap();
        let first = out.rho[0];
        assert!(out.rho.iter().all(|&r| r == first));
        assert!((first - 0.2).abs() <= 1e-4);
    }

    #[test]
    fn move_limit_respected() {
        let p = DesignProblem::benchmark(Grid::new(6, 6));
        let cfg = SolverConfig::default();
        let field = DensityField::from_values(
            &p,
            &(0..36).map(|i| 0.6 * i as f64 / 36.0).collect::<Vec<_>>(),
        );
        let sens: Vec<f64> = (0..36).map(|i| -((i * 17 % 7) as f64 + 0.1)).collect();
        let out = oc_update(&field, &sens, &p, &cfg).unwrap();
        for (a, b) in field.rho.iter().zip(&out.rho) {
            assert!((a - b).abs() <= cfg.move_limit + 1e-15);
            assert!((0.0..=1.0).contains(b));
        }
        assert!((out.rho.iter().sum::<f64>() / 36.0 - 0.2).abs() <= 1e-4);
    }

    #[test]
    fn unreachable_target_fails() {
        let p = DesignProblem::benchmark(Grid::new(4, 4));
        let cfg = SolverConfig::default();
        // every element at 1 with move limit 0.2 cannot reach 0.2
        let field = DensityField::uniform(&p, 1.0);
        let err = oc_update(&field, &vec![-1.0; 16], &p, &cfg).unwrap_err();
        assert!(matches!(err, SimpError::BisectionFailure(_)));
    }
}
