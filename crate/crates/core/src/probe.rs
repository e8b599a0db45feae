//! Regularity measurements on grid functions.

use rayon::prelude::*;

use crate::error::{usage, Result};
use crate::gridfn::GridFunction;
use crate::kernels::KernelSpec;
use crate::nonlocal_ops::{eval_linear, QuadratureScheme};

/// Nodes required inside the smallest probed ball.
const MIN_BALL_NODES: usize = 4;

/// Ordinary least squares fit `y = intercept + slope * x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square of the residuals.
    pub rms: f64,
}

pub fn fit_line(points: &[(f64, f64)]) -> Result<LineFit> {
    if points.len() < 2 {
        return Err(usage("a line fit needs at least two points"));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(usage("a line fit needs distinct abscissae"));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(LineFit { slope, intercept, rms })
}

/// Log-log fit; zero or negative ordinates are rejected.
pub fn fit_log_log(points: &[(f64, f64)]) -> Result<LineFit> {
    if let Some(p) = points.iter().find(|p| !(p.0 > 0.0 && p.1 > 0.0)) {
        return Err(usage(format!(
            "log-log fit needs positive data, got ({}, {})",
            p.0, p.1
        )));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|p| (p.0.ln(), p.1.ln())).collect();
    fit_line(&logs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularityReport {
    pub fitted_exponent: f64,
    /// `[u]_{C^alpha}` on the largest ball at the fitted exponent (clamped to (0, 1]).
    pub seminorm_at_fit: f64,
    /// `(r, oscillation)` in decreasing `r`.
    pub scale_table: Vec<(f64, f64)>,
    pub regression_residual: f64,
}

fn check_scales(u: &GridFunction, center: f64, scales: &[f64]) -> Result<()> {
    if scales.len() < 3 {
        return Err(usage("at least three scales are required"));
    }
    if scales.windows(2).any(|w| w[1] >= w[0]) || scales.iter().any(|r| !(*r > 0.0)) {
        return Err(usage("scales must be positive and strictly decreasing"));
    }
    let h = u.grid().h();
    let smallest = scales[scales.len() - 1];
    if smallest < MIN_BALL_NODES as f64 * h {
        return Err(usage(format!(
            "smallest radius {smallest} is under-resolved (need >= {} = 4h)",
            MIN_BALL_NODES as f64 * h
        )));
    }
    if center.abs() + scales[0] > u.grid().radius() {
        return Err(usage(format!("ball B_{}({center}) leaves the grid", scales[0])));
    }
    Ok(())
}

/// Slope of `log osc(B_r(center))` against `log r`.
pub fn fit_holder_exponent(u: &GridFunction, center: f64, scales: &[f64]) -> Result<RegularityReport> {
    check_scales(u, center, scales)?;
    let scale_table: Vec<(f64, f64)> = scales
        .par_iter()
        .map(|&r| u.oscillation(center, r).map(|o| (r, o)))
        .collect::<Result<_>>()?;
    let fit = fit_log_log(&scale_table)?;
    let alpha = fit.slope.clamp(f64::MIN_POSITIVE, 1.0);
    Ok(RegularityReport {
        fitted_exponent: fit.slope,
        seminorm_at_fit: u.holder_seminorm(alpha, center, scales[0])?,
        scale_table,
        regression_residual: fit.rms,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlatnessEntry {
    pub k: usize,
    pub radius: f64,
    pub a: f64,
    pub p: f64,
    pub dev: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlatnessTrace {
    pub rho: f64,
    pub entries: Vec<FlatnessEntry>,
    /// Slope of `log dev_k` against `log rho^k`; `None` when a deviation vanishes.
    pub slope: Option<f64>,
    pub passed: bool,
    /// First `k` whose bound fails, with the name of the bound.
    pub violation: Option<(usize, &'static str)>,
}

/// Affine approximations `l_k = a_k + p_k (x - center)` on `B_{rho^k}(center)`.
///
/// Passes iff for all `k`: `dev_k <= rho^{k(1+alpha)} dev_0`, and for `k < K`:
/// `|a_{k+1} - a_k| <= C rho^{(1+alpha)k}` and `|p_{k+1} - p_k| <= C rho^{alpha k}`.
pub fn flatness_trace(
    u: &GridFunction,
    center: f64,
    rho: f64,
    depth: usize,
    c_bound: f64,
    alpha: f64,
) -> Result<FlatnessTrace> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(usage(format!("rho = {rho} outside (0, 1)")));
    }
    if !(c_bound >= 0.0) || !(alpha >= 0.0) {
        return Err(usage("C and alpha must be nonnegative"));
    }
    let h = u.grid().h();
    let resolved = |k: usize| 2.0 * rho.powi(k as i32) / h + 1.0 >= MIN_BALL_NODES as f64;
    if !resolved(depth) {
        let max_k = (0..=depth).take_while(|&k| resolved(k)).last();
        return Err(usage(match max_k {
            Some(k) => format!("depth {depth} is under-resolved; max feasible depth is {k}"),
            None => "the unit ball is under-resolved".to_string(),
        }));
    }
    let entries: Vec<FlatnessEntry> = (0..=depth)
        .into_par_iter()
        .map(|k| {
            let radius = rho.powi(k as i32);
            u.best_affine_fit(center, radius).map(|fit| FlatnessEntry {
                k,
                radius,
                a: fit.a,
                p: fit.p,
                dev: fit.dev,
            })
        })
        .collect::<Result<_>>()?;

    let dev0 = entries[0].dev;
    let slack = 1e-12 * dev0.max(1.0);
    let mut violation = None;
    for e in &entries {
        if e.dev > rho.powf(e.k as f64 * (1.0 + alpha)) * dev0 + slack {
            violation = Some((e.k, "deviation"));
            break;
        }
    }
    if violation.is_none() {
        for w in entries.windows(2) {
            let k = w[0].k as f64;
            if (w[1].a - w[0].a).abs() > c_bound * rho.powf((1.0 + alpha) * k) + slack {
                violation = Some((w[0].k, "constant increment"));
                break;
            }
            if (w[1].p - w[0].p).abs() > c_bound * rho.powf(alpha * k) + slack {
                violation = Some((w[0].k, "slope increment"));
                break;
            }
        }
    }
    let slope = if entries.iter().all(|e| e.dev > 0.0) {
        let pts: Vec<(f64, f64)> = entries.iter().map(|e| (e.radius, e.dev)).collect();
        Some(fit_log_log(&pts)?.slope)
    } else {
        None
    };
    Ok(FlatnessTrace {
        rho,
        entries,
        slope,
        passed: violation.is_none(),
        violation,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlowupProfile {
    /// `(dist to the boundary point, operator value)` in the order given.
    pub table: Vec<(f64, f64)>,
    /// Least-squares slope of `log |value|` against `log dist` over all points.
    pub slope: f64,
    /// Slope through the two closest points.
    pub terminal_slope: f64,
    pub regression_residual: f64,
}

/// Operator values approaching `x = 1` (right) or `x = -1` (left) from inside.
///
/// Approach points are snapped to the nearest grid node; distances refer to the node.
pub fn blowup_profile(
    u: &GridFunction,
    spec: &KernelSpec,
    side: Side,
    approach_points: &[f64],
    q: &QuadratureScheme,
) -> Result<BlowupProfile> {
    if approach_points.len() < 2 {
        return Err(usage("at least two approach points are required"));
    }
    if let Some(x) = approach_points.iter().find(|x| !(x.abs() < 1.0)) {
        return Err(usage(format!("approach point {x} is outside (-1, 1)")));
    }
    let grid = u.grid();
    let table: Vec<(f64, f64)> = approach_points
        .par_iter()
        .map(|&x| {
            let x = grid.node(grid.center_index() as i64 + (x / grid.h()).round() as i64);
            let dist = match side {
                Side::Right => 1.0 - x,
                Side::Left => x + 1.0,
            };
            eval_linear(u, spec, x, q).map(|v| (dist, v))
        })
        .collect::<Result<_>>()?;
    let abs: Vec<(f64, f64)> = table.iter().map(|&(d, v)| (d, v.abs())).collect();
    let fit = fit_log_log(&abs)?;
    let mut by_dist = abs.clone();
    by_dist.sort_by(|a, b| a.0.total_cmp(&b.0));
    let terminal_slope = fit_log_log(&by_dist[..2])?.slope;
    Ok(BlowupProfile {
        table,
        slope: fit.slope,
        terminal_slope,
        regression_residual: fit.rms,
    })
}
