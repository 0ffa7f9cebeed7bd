//! Convex-order comparisons between the max-plus martingale and the
//! additive (compensator) martingale, on simulated paths.
//!
//! Both martingales start at the same value, so convex order is decided by
//! the floored means: `X` is dominated by `Y` iff `E[X v m] <= E[Y v m]`
//! for every floor `m`. The comparisons here are paired — both terminal
//! values come from the same path — so the gap estimates share one noise
//! source and their standard errors stay small.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::closedform::phi_gbm;
use crate::error::{Error, Result};
use crate::model::{gamma_of, GbmSpec};
use crate::par::indexed_block_sum;
use crate::rng::RngPolicy;
use crate::simulate::{bridge_sup_correct_gbm, simulate_gbm, PathBundle};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CxVerdict {
    /// `E[X v m] <= E[Y v m]` within noise everywhere, strictly below at
    /// some floor.
    Dominated,
    /// Significantly reversed at this floor.
    Violated { m: f64 },
    /// No significant gap either way at any probed floor.
    Inconclusive { ms: Vec<f64> },
}

#[derive(Debug, Clone, Serialize)]
pub struct CxReport {
    pub mean_x: f64,
    pub mean_y: f64,
    pub mean_se_x: f64,
    pub mean_se_y: f64,
    /// Pooled sample quantiles of both terminal laws.
    pub m_grid: Vec<f64>,
    /// `E[Y v m] - E[X v m]` per floor, from paired differences.
    pub gaps: Vec<f64>,
    pub gap_ses: Vec<f64>,
    pub var_x: f64,
    pub var_y: f64,
    /// `Var Y - Var X` with its paired standard error.
    pub var_gap: f64,
    pub var_gap_se: f64,
    pub verdict: CxVerdict,
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Paired convex-order comparison of two terminal samples. Requires one
/// `y` per `x` drawn from the same underlying path.
pub fn cx_compare(x: &[f64], y: &[f64], grid_points: usize) -> Result<CxReport> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::param(
            "samples",
            x.len() as f64,
            "paired comparison needs equally many x and y values (at least 2)",
        ));
    }
    if grid_points < 2 {
        return Err(Error::param("grid_points", grid_points as f64, "must be >= 2"));
    }
    let (mean_x, mean_se_x) = mean_and_se(x);
    let (mean_y, mean_se_y) = mean_and_se(y);

    let mut pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    pooled.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let m_grid: Vec<f64> = (0..grid_points)
        .map(|i| {
            let q = (i as f64 + 0.5) / grid_points as f64;
            pooled[((q * pooled.len() as f64) as usize).min(pooled.len() - 1)]
        })
        .collect();

    let mut gaps = Vec::with_capacity(m_grid.len());
    let mut gap_ses = Vec::with_capacity(m_grid.len());
    let mut worst: Option<(f64, f64)> = None; // (normalized deficit, m)
    let mut strict = false;
    let mut undecided = Vec::new();
    for &m in &m_grid {
        let diffs: Vec<f64> = x
            .iter()
            .zip(y)
            .map(|(&xi, &yi)| yi.max(m) - xi.max(m))
            .collect();
        let (gap, se) = mean_and_se(&diffs);
        let slack = 3.0 * se + 1e-12 * m.abs().max(1.0);
        if gap < -slack {
            let norm = gap / se.max(f64::MIN_POSITIVE);
            if worst.map_or(true, |(w, _)| norm < w) {
                worst = Some((norm, m));
            }
        } else if gap > slack {
            strict = true;
        } else {
            undecided.push(m);
        }
        gaps.push(gap);
        gap_ses.push(se);
    }

    // paired variance comparison: mean of (y - ybar)^2 - (x - xbar)^2
    let d2: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| (yi - mean_y) * (yi - mean_y) - (xi - mean_x) * (xi - mean_x))
        .collect();
    let (var_gap, var_gap_se) = mean_and_se(&d2);
    let nf = x.len() as f64;
    let var_x = x.iter().map(|v| (v - mean_x) * (v - mean_x)).sum::<f64>() / (nf - 1.0);
    let var_y = y.iter().map(|v| (v - mean_y) * (v - mean_y)).sum::<f64>() / (nf - 1.0);

    let verdict = match worst {
        Some((_, m)) => CxVerdict::Violated { m },
        None if strict => CxVerdict::Dominated,
        None => CxVerdict::Inconclusive { ms: undecided },
    };
    Ok(CxReport {
        mean_x,
        mean_y,
        mean_se_x,
        mean_se_y,
        m_grid,
        gaps,
        gap_ses,
        var_x,
        var_y,
        var_gap,
        var_gap_se,
        verdict,
    })
}

/// Additive-decomposition martingale along one discounted-GBM path:
/// `Z + A` with the compensator `A_t = r int_0^t Z_s ds` accumulated by
/// the trapezoid rule on the path grid.
pub fn doob_meyer_gbm_path(path: &PathBundle, r: f64) -> Result<Vec<f64>> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::param("r", r, "discount rate must be finite and > 0"));
    }
    let mut out = Vec::with_capacity(path.values.len());
    let mut a = 0.0;
    for k in 0..path.values.len() {
        if k > 0 {
            let dt = path.times[k] - path.times[k - 1];
            a += r * dt * 0.5 * (path.values[k - 1] + path.values[k]);
        }
        out.push(path.values[k] + a);
    }
    Ok(out)
}

/// Draws paired terminal samples of the max-plus martingale (through the
/// multiplicative map of terminal value and exact-in-law running supremum)
/// and the additive martingale (through the trapezoid compensator) on the
/// same paths.
pub fn mplus_doobmeyer_samples(
    spec: &GbmSpec,
    t: f64,
    steps: usize,
    paths: u64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let gamma = gamma_of(spec);
    let policy = RngPolicy::new(seed);
    let pairs: Vec<(f64, f64)> = (0..paths)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let path = simulate_gbm(spec, t, steps, &policy, i)?;
            let ma = *doob_meyer_gbm_path(&path, spec.r)?
                .last()
                .expect("nonempty path");
            let bridged = bridge_sup_correct_gbm(&path, spec)?;
            let mplus = phi_gbm(bridged.terminal(), bridged.global_sup(), gamma)?;
            Ok((mplus, ma))
        })
        .collect::<Result<_>>()?;
    Ok(pairs.into_iter().unzip())
}

/// Compares the two-martingale terminal laws of
/// [`mplus_doobmeyer_samples`] in convex order.
pub fn mplus_vs_doobmeyer(
    spec: &GbmSpec,
    t: f64,
    steps: usize,
    paths: u64,
    seed: u64,
    grid_points: usize,
) -> Result<CxReport> {
    let (x, y) = mplus_doobmeyer_samples(spec, t, steps, paths, seed)?;
    cx_compare(&x, &y, grid_points)
}

#[derive(Debug, Clone, Serialize)]
pub struct SiReport {
    pub steps: Vec<usize>,
    /// Root-mean-square over paths of the terminal residual
    /// `sum_k [ dM - (Z/Z*)^(gamma-1) dM^A ]`.
    pub rms: Vec<f64>,
    /// Successive `rms` ratios; each step doubling should shrink the
    /// residual like `sqrt(dt)`.
    pub ratios: Vec<f64>,
    /// Geometric mean of the per-doubling ratios: the overall decay rate,
    /// much less noisy than any single ratio.
    pub mean_ratio: f64,
    /// Grid steps violating the pathwise increment bounds
    /// `|dM| <= |dZ|` and `|dZ| <= |dM^A| + r z dt`.
    pub increment_violations: u64,
}

/// Checks the stochastic-integral representation of the max-plus
/// martingale against the additive one: the same Brownian shocks drive
/// both, scaled by `(Z/Z*)^(gamma-1)`. The discrete residual must shrink
/// like `sqrt(dt)` under grid refinement, and the increment bounds hold
/// pathwise at every step.
pub fn si_representation_check(
    spec: &GbmSpec,
    t: f64,
    base_steps: usize,
    doublings: usize,
    paths: u64,
    seed: u64,
) -> Result<SiReport> {
    if base_steps == 0 {
        return Err(Error::param("base_steps", 0.0, "must be >= 1"));
    }
    let gamma = gamma_of(spec);
    let mut steps_out = Vec::with_capacity(doublings + 1);
    let mut rms = Vec::with_capacity(doublings + 1);
    let mut violations = 0u64;
    for level in 0..=doublings {
        let steps = base_steps << level;
        let policy = RngPolicy::new(seed.wrapping_add(level as u64));
        let (sumsq, viol) = indexed_block_sum(
            paths,
            || (0.0_f64, 0u64),
            |acc, i| {
                let path = simulate_gbm(spec, t, steps, &policy, i)?;
                let ma = doob_meyer_gbm_path(&path, spec.r)?;
                let mut residual = 0.0;
                let mut bad = 0u64;
                for k in 1..path.values.len() {
                    let (z0, z1) = (path.values[k - 1], path.values[k]);
                    let zs0 = path.running_sup[k - 1];
                    let zs1 = path.running_sup[k];
                    let dm = phi_gbm(z1, zs1, gamma)? - phi_gbm(z0, zs0, gamma)?;
                    let dz = z1 - z0;
                    let dma = ma[k] - ma[k - 1];
                    let dt = path.times[k] - path.times[k - 1];
                    residual += dm - (z0 / zs0).powf(gamma - 1.0) * dma;
                    let slack = 1e-12 * zs1.max(1.0);
                    if dm.abs() > dz.abs() + slack
                        || dz.abs() > dma.abs() + spec.r * z0.max(z1) * dt + slack
                    {
                        bad += 1;
                    }
                }
                acc.0 += residual * residual;
                acc.1 += bad;
                Ok(())
            },
            |a, b| {
                a.0 += b.0;
                a.1 += b.1;
            },
        )?;
        violations += viol;
        steps_out.push(steps);
        rms.push((sumsq / paths as f64).sqrt());
    }
    let ratios: Vec<f64> = rms.windows(2).map(|w| w[1] / w[0]).collect();
    let mean_ratio = if doublings > 0 {
        (rms[doublings] / rms[0]).powf(1.0 / doublings as f64)
    } else {
        1.0
    };
    Ok(SiReport {
        steps: steps_out,
        rms,
        ratios,
        mean_ratio,
        increment_violations: violations,
    })
}

/// Writes the floor grid with gaps and standard errors as CSV.
pub fn write_cx_csv<W: Write>(report: &CxReport, mut w: W) -> std::io::Result<()> {
    writeln!(w, "m,gap,se")?;
    for ((m, gap), se) in report.m_grid.iter().zip(&report.gaps).zip(&report.gap_ses) {
        writeln!(w, "{m},{gap},{se}")?;
    }
    Ok(())
}
