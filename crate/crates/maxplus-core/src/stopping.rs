//! Stopping rules read off the index process, and Monte Carlo pricing of
//! the perpetual claims they solve.
//!
//! The index of a multiplicative supermartingale is `L = b Z` with
//! `b = (gamma-1)/gamma`; of an additive one, `L = Z - b` with
//! `b = 1/gamma`. The optimal rule for the strike-`m` call stops the first
//! time `L` reaches `m`, i.e. the first time `Z` reaches the boundary
//! `m/b` (multiplicative) or `m + b` (additive). Three estimators of the
//! same price are kept deliberately separate so they can disagree:
//! the closed form, the stopped-rule estimator, and the lookback identity
//! `E[(b sup Z - m)^+]` on tail-augmented paths.

use serde::Serialize;

use crate::closedform::{
    american_call_bm, american_call_gbm, duality_transform, BoundarySpec,
};
use crate::error::{Error, Result};
use crate::model::{delta_of, gamma_levy_root, gamma_of, DriftedBmSpec, GbmSpec, LevySpec};
use crate::par::indexed_block_sum;
use crate::rng::{RngPolicy, StreamPurpose};
use crate::simulate::{
    augment_tail, augment_tail_additive, bridge_log_seg_min, bridge_sup_correct_bm,
    bridge_sup_correct_gbm, default_steps, default_t_trunc, sample_kill_time,
    simulate_drifted_bm, simulate_gbm, simulate_gbm_logdrift, simulate_levy, PathBundle,
};

/// Mean, standard error and sample count of one Monte Carlo quantity.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
    pub paths: u64,
}

impl McEstimate {
    fn from_sums(sum: f64, sumsq: f64, n: u64) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        let var = if n > 1 {
            ((sumsq / nf - mean * mean) * nf / (nf - 1.0)).max(0.0)
        } else {
            0.0
        };
        McEstimate {
            mean,
            se: (var / nf).sqrt(),
            paths: n,
        }
    }

    /// `|mean - other| <= 3 se` against a deterministic reference.
    pub fn consistent_with(&self, reference: f64) -> bool {
        (self.mean - reference).abs() <= 3.0 * self.se + 1e-12 * reference.abs().max(1.0)
    }

    /// `|mean_a - mean_b| <= 3 sqrt(se_a^2 + se_b^2)` between two estimates.
    pub fn consistent_with_estimate(&self, other: &McEstimate) -> bool {
        let se = (self.se * self.se + other.se * other.se).sqrt();
        (self.mean - other.mean).abs()
            <= 3.0 * se + 1e-12 * self.mean.abs().max(other.mean.abs()).max(1.0)
    }
}

/// Runs `eval` over path indices in parallel and reduces `K` payoff
/// components to estimates. `eval` must be a pure function of the index
/// (all randomness through per-path streams), so the result is independent
/// of the thread schedule.
pub(crate) fn mc_payoffs<const K: usize>(
    n_paths: u64,
    eval: impl Fn(u64) -> Result<[f64; K]> + Sync,
) -> Result<[McEstimate; K]> {
    if n_paths == 0 {
        return Err(Error::param("paths", 0.0, "must be >= 1"));
    }
    let zero = || ([0.0_f64; K], [0.0_f64; K]);
    let (sum, sumsq) = indexed_block_sum(
        n_paths,
        zero,
        |acc, i| {
            let v = eval(i)?;
            for k in 0..K {
                acc.0[k] += v[k];
                acc.1[k] += v[k] * v[k];
            }
            Ok(())
        },
        |a, b| {
            for k in 0..K {
                a.0[k] += b.0[k];
                a.1[k] += b.1[k];
            }
        },
    )?;
    Ok(std::array::from_fn(|k| {
        McEstimate::from_sums(sum[k], sumsq[k], n_paths)
    }))
}

/// Outcome of running a level-hitting rule along one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstHit {
    pub hit: bool,
    /// Hitting time; segment midpoint when the crossing was located by a
    /// bridge draw, the grid time otherwise. Last time if not hit.
    pub time: f64,
    /// State at stopping. Interior crossings of a continuous (or spectrally
    /// negative) path happen exactly at the boundary; only an initial state
    /// already above it can overshoot.
    pub level: f64,
}

/// First passage of the path to `boundary` from below.
///
/// Uses segment maxima when present (so bridge-corrected and jump paths are
/// monitored continuously), plain grid values otherwise. The tail draw is
/// ignored: it carries no hitting time.
pub fn first_hit(path: &PathBundle, boundary: f64) -> FirstHit {
    if path.values[0] >= boundary {
        return FirstHit {
            hit: true,
            time: path.times[0],
            level: path.values[0],
        };
    }
    match &path.seg_max {
        Some(seg) => {
            for k in 0..seg.len() {
                if seg[k] >= boundary {
                    return FirstHit {
                        hit: true,
                        time: 0.5 * (path.times[k] + path.times[k + 1]),
                        level: boundary,
                    };
                }
            }
        }
        None => {
            for k in 1..path.values.len() {
                if path.values[k] >= boundary {
                    return FirstHit {
                        hit: true,
                        time: path.times[k],
                        level: path.values[k],
                    };
                }
            }
        }
    }
    FirstHit {
        hit: false,
        time: *path.times.last().expect("nonempty"),
        level: path.terminal(),
    }
}

/// Monte Carlo configuration shared by the pricing estimators.
#[derive(Debug, Clone, Copy)]
pub struct McConfig {
    pub paths: u64,
    pub seed: u64,
    /// Truncation horizon; model-specific default when `None`.
    pub t_trunc: Option<f64>,
    /// Grid steps; `sigma^2 dt <= 1e-3` when `None`.
    pub steps: Option<usize>,
}

impl McConfig {
    pub fn new(paths: u64, seed: u64) -> Self {
        McConfig {
            paths,
            seed,
            t_trunc: None,
            steps: None,
        }
    }

    fn resolve(&self, sigma: f64, default_t: f64) -> (f64, usize) {
        let t = self.t_trunc.unwrap_or(default_t);
        let n = self.steps.unwrap_or_else(|| default_steps(sigma, t));
        (t, n)
    }
}

/// One priced claim: closed form plus optional Monte Carlo cross-checks.
#[derive(Debug, Clone, Serialize)]
pub struct PriceReport {
    pub model: String,
    pub strike: f64,
    pub tail_exponent: f64,
    pub index_constant: f64,
    pub boundary: f64,
    pub closed_form: f64,
    pub mc_stopped: Option<McEstimate>,
    pub mc_lookback: Option<McEstimate>,
    /// All available estimates pairwise within 3 standard errors.
    pub agree: Option<bool>,
}

impl PriceReport {
    fn judge(&mut self) {
        let mut ok = true;
        if let Some(s) = &self.mc_stopped {
            ok &= s.consistent_with(self.closed_form);
        }
        if let Some(l) = &self.mc_lookback {
            ok &= l.consistent_with(self.closed_form);
        }
        if let (Some(s), Some(l)) = (&self.mc_stopped, &self.mc_lookback) {
            ok &= s.consistent_with_estimate(l);
        }
        self.agree = if self.mc_stopped.is_some() || self.mc_lookback.is_some() {
            Some(ok)
        } else {
            None
        };
    }
}

/// Perpetual call on GBM: closed form, stopped-rule estimator at the
/// optimal boundary, and the lookback identity on tail-augmented paths.
pub fn price_gbm_call(spec: &GbmSpec, m: f64, mc: Option<&McConfig>) -> Result<PriceReport> {
    let gamma = gamma_of(spec);
    let bspec = BoundarySpec::multiplicative(gamma / (gamma - 1.0))?;
    let b = bspec.index_constant();
    let boundary = crate::closedform::exercise_boundary(m, &bspec)?;
    let mut report = PriceReport {
        model: "gbm".into(),
        strike: m,
        tail_exponent: gamma,
        index_constant: b,
        boundary,
        closed_form: american_call_gbm(spec.x0, m, gamma)?,
        mc_stopped: None,
        mc_lookback: None,
        agree: None,
    };
    if let Some(cfg) = mc {
        let (t, n) = cfg.resolve(spec.sigma, default_t_trunc(spec.r)?);
        let policy = RngPolicy::new(cfg.seed);
        let [stopped, lookback] = mc_payoffs(cfg.paths, |i| {
            let raw = simulate_gbm(spec, t, n, &policy, i)?;
            let path = bridge_sup_correct_gbm(&raw, spec)?;
            let fh = first_hit(&path, boundary);
            let stopped = if fh.hit { (fh.level - m).max(0.0) } else { 0.0 };
            let full = augment_tail(&path, gamma)?;
            let lookback = (b * full.global_sup() - m).max(0.0);
            Ok([stopped, lookback])
        })?;
        report.mc_stopped = Some(stopped);
        report.mc_lookback = Some(lookback);
        report.judge();
    }
    Ok(report)
}

/// Perpetual call on GBM killed at rate `beta`, i.e.
/// `sup_T E[e^{-beta T} (Z_T - m)^+]`: the killed tail exponent `delta`
/// replaces `gamma`, and the stopped-rule estimator weights each hit by
/// the kill survival `e^{-beta t}` (the exact conditional expectation over
/// the independent kill time).
pub fn price_killed_call(
    spec: &GbmSpec,
    beta: f64,
    m: f64,
    mc: Option<&McConfig>,
) -> Result<PriceReport> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::param("beta", beta, "must be finite and > 0"));
    }
    let delta = delta_of(spec, beta)?;
    let bspec = BoundarySpec::multiplicative(delta / (delta - 1.0))?;
    let boundary = crate::closedform::exercise_boundary(m, &bspec)?;
    let mut report = PriceReport {
        model: "gbm-killed".into(),
        strike: m,
        tail_exponent: delta,
        index_constant: bspec.index_constant(),
        boundary,
        closed_form: american_call_gbm(spec.x0, m, delta)?,
        mc_stopped: None,
        mc_lookback: None,
        agree: None,
    };
    if let Some(cfg) = mc {
        // The e^{-beta t} weight and the hitting-density decay make the
        // truncation tail negligible well before 5/(r + beta).
        let (t, n) = cfg.resolve(spec.sigma, 5.0 / (spec.r + beta));
        let policy = RngPolicy::new(cfg.seed);
        let [stopped] = mc_payoffs(cfg.paths, |i| {
            let raw = simulate_gbm(spec, t, n, &policy, i)?;
            let path = bridge_sup_correct_gbm(&raw, spec)?;
            let fh = first_hit(&path, boundary);
            Ok([if fh.hit {
                (fh.level - m).max(0.0) * (-beta * fh.time).exp()
            } else {
                0.0
            }])
        })?;
        report.mc_stopped = Some(stopped);
        report.judge();
    }
    Ok(report)
}

/// Perpetual call on negatively drifted Brownian motion (additive index).
pub fn price_bm_call(
    spec: &DriftedBmSpec,
    m: f64,
    mc: Option<&McConfig>,
) -> Result<PriceReport> {
    let gamma = spec.gamma_additive()?;
    let b = spec.index_constant()?;
    let bspec = BoundarySpec::additive(b)?;
    let boundary = crate::closedform::exercise_boundary(m, &bspec)?;
    let mut report = PriceReport {
        model: "bm".into(),
        strike: m,
        tail_exponent: gamma,
        index_constant: b,
        boundary,
        closed_form: american_call_bm(spec.z0, m, gamma)?,
        mc_stopped: None,
        mc_lookback: None,
        agree: None,
    };
    if let Some(cfg) = mc {
        // Late hits decay like e^{-mu^2 t / (2 sigma^2)} once the drift has
        // had time to carry the path past the boundary gap.
        let s2 = spec.sigma * spec.sigma;
        let gap = (boundary - spec.z0).max(0.0);
        let default_t = 10.0 * s2 / (spec.mu * spec.mu) + 4.0 * gap / spec.mu;
        let (t, n) = cfg.resolve(spec.sigma, default_t);
        let policy = RngPolicy::new(cfg.seed);
        let [stopped, lookback] = mc_payoffs(cfg.paths, |i| {
            let raw = simulate_drifted_bm(spec, t, n, &policy, i)?;
            let path = bridge_sup_correct_bm(&raw, spec)?;
            let fh = first_hit(&path, boundary);
            let stopped = if fh.hit { (fh.level - m).max(0.0) } else { 0.0 };
            let full = augment_tail_additive(&path, gamma)?;
            let lookback = (full.global_sup() - b - m).max(0.0);
            Ok([stopped, lookback])
        })?;
        report.mc_stopped = Some(stopped);
        report.mc_lookback = Some(lookback);
        report.judge();
    }
    Ok(report)
}

/// Perpetual call on the exponential of a spectrally negative jump
/// diffusion: the Laplace-exponent root replaces `gamma` and the same
/// two-branch formula applies (upward crossings are continuous, so the
/// boundary is still reached exactly). Closed form only.
pub fn price_levy_call(spec: &LevySpec, m: f64) -> Result<PriceReport> {
    let root = gamma_levy_root(spec)?;
    let bspec = BoundarySpec::multiplicative(root / (root - 1.0))?;
    let mut report = PriceReport {
        model: "levy".into(),
        strike: m,
        tail_exponent: root,
        index_constant: bspec.index_constant(),
        boundary: crate::closedform::exercise_boundary(m, &bspec)?,
        closed_form: american_call_gbm(spec.x0, m, root)?,
        mc_stopped: None,
        mc_lookback: None,
        agree: None,
    };
    report.judge();
    Ok(report)
}

/// Closed-form value of the suboptimal rule "stop when `Z` first reaches
/// `c`" for the strike-`m` call on GBM started at `x`.
pub fn gbm_rule_value(x: f64, m: f64, gamma: f64, c: f64) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::param("c", c, "stopping level must be finite and > 0"));
    }
    if x >= c {
        return Ok((x - m).max(0.0));
    }
    Ok((c - m).max(0.0) * (x / c).powf(gamma))
}

/// One stopping rule in a boundary tournament.
#[derive(Debug, Clone, Serialize)]
pub struct TournamentRow {
    /// Stopping level as a multiple of the optimal boundary.
    pub multiplier: f64,
    pub level: f64,
    pub closed_form: f64,
    pub mc: McEstimate,
    /// Estimator consistent with this rule's own closed form.
    pub mc_consistent: bool,
}

/// Tournament of boundary rules `c * optimal` on shared GBM paths.
///
/// The optimal multiplier 1 is always included first. Each rule's
/// estimator is checked against its own closed-form value; the caller can
/// additionally verify that no alternative beats the optimal one.
pub fn tournament_gbm(
    spec: &GbmSpec,
    m: f64,
    multipliers: &[f64],
    cfg: &McConfig,
) -> Result<Vec<TournamentRow>> {
    let gamma = gamma_of(spec);
    let b = (gamma - 1.0) / gamma;
    let optimal = m / b;
    let mut mults = vec![1.0];
    mults.extend(multipliers.iter().copied().filter(|&c| c != 1.0));
    for &c in &mults {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::param("multiplier", c, "must be finite and > 0"));
        }
    }
    let levels: Vec<f64> = mults.iter().map(|c| c * optimal).collect();

    let (t, n) = cfg.resolve(spec.sigma, default_t_trunc(spec.r)?);
    let policy = RngPolicy::new(cfg.seed);
    let k = levels.len();
    // variable-width variant of mc_payoffs (rule count is runtime data)
    let zero = || (vec![0.0_f64; k], vec![0.0_f64; k]);
    let (sum, sumsq) = indexed_block_sum(
        cfg.paths,
        zero,
        |acc, i| {
            let raw = simulate_gbm(spec, t, n, &policy, i)?;
            let path = bridge_sup_correct_gbm(&raw, spec)?;
            for (j, &level) in levels.iter().enumerate() {
                let fh = first_hit(&path, level);
                let pay = if fh.hit { (fh.level - m).max(0.0) } else { 0.0 };
                acc.0[j] += pay;
                acc.1[j] += pay * pay;
            }
            Ok(())
        },
        |a, b| {
            for j in 0..k {
                a.0[j] += b.0[j];
                a.1[j] += b.1[j];
            }
        },
    )?;

    let mut rows = Vec::with_capacity(k);
    for (j, (&c, &level)) in mults.iter().zip(&levels).enumerate() {
        let mc = McEstimate::from_sums(sum[j], sumsq[j], cfg.paths);
        let closed = gbm_rule_value(spec.x0, m, gamma, level)?;
        rows.push(TournamentRow {
            multiplier: c,
            level,
            closed_form: closed,
            mc,
            mc_consistent: mc.consistent_with(closed),
        });
    }
    Ok(rows)
}

/// Call/put duality checked by independent simulation of both sides:
/// the call on the supermartingale `Z` against `m x` times the standard
/// perpetual put on the risk-neutral reciprocal started at `1/x` with
/// strike `1/m`, exercised at the dual boundary.
#[derive(Debug, Clone, Serialize)]
pub struct DualityReport {
    pub call_closed: f64,
    pub call_mc: McEstimate,
    pub put_mc: McEstimate,
    pub scale: f64,
    /// `scale * put_mc`, directly comparable to the call estimates.
    pub scaled_put: McEstimate,
    pub agree: bool,
}

pub fn duality_check_gbm(spec: &GbmSpec, m: f64, cfg: &McConfig) -> Result<DualityReport> {
    let gamma = gamma_of(spec);
    let map = duality_transform(spec.x0, m, gamma)?;
    let call = price_gbm_call(spec, m, Some(cfg))?;
    let call_mc = call.mc_stopped.expect("mc config given");

    // Dual side: risk-neutral GBM S, discounted put stopped at the dual
    // boundary from above; running-minimum bridge locates the crossing.
    let t = cfg.t_trunc.unwrap_or(8.0 / spec.r.max(1e-6));
    let n = cfg.steps.unwrap_or_else(|| default_steps(spec.sigma, t));
    let put_policy = RngPolicy::new(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let s0 = map.put_spot;
    let k_strike = map.put_strike;
    let s_star = map.put_boundary;
    let nu = spec.r - 0.5 * spec.sigma * spec.sigma;
    let [put_mc] = mc_payoffs(cfg.paths, |i| {
        let path = simulate_gbm_logdrift(s0, nu, spec.sigma, t, n, &put_policy, i)?;
        if path.values[0] <= s_star {
            return Ok([(k_strike - path.values[0]).max(0.0)]);
        }
        let seg_min = bridge_log_seg_min(&path, spec.sigma)?;
        for (j, &lo) in seg_min.iter().enumerate() {
            if lo <= s_star {
                let tau = 0.5 * (path.times[j] + path.times[j + 1]);
                return Ok([(k_strike - s_star) * (-spec.r * tau).exp()]);
            }
        }
        Ok([0.0])
    })?;

    let scaled_put = McEstimate {
        mean: map.scale * put_mc.mean,
        se: map.scale * put_mc.se,
        paths: put_mc.paths,
    };
    let agree = call_mc.consistent_with_estimate(&scaled_put)
        && scaled_put.consistent_with(call.closed_form);
    Ok(DualityReport {
        call_closed: call.closed_form,
        call_mc,
        put_mc,
        scale: map.scale,
        scaled_put,
        agree,
    })
}

/// Closed-form supremum law of GBM checked against tail-augmented paths:
/// `E[sup Z]` and `P[sup Z >= level]` on the infinite horizon.
#[derive(Debug, Clone, Serialize)]
pub struct SupLawReport {
    pub level: f64,
    pub closed_mean: f64,
    pub closed_tail: f64,
    pub mc_mean: McEstimate,
    pub mc_tail: McEstimate,
    pub agree: bool,
}

pub fn sup_law_gbm(spec: &GbmSpec, level: f64, cfg: &McConfig) -> Result<SupLawReport> {
    let gamma = gamma_of(spec);
    let closed_mean = crate::closedform::sup_mean(spec.x0, gamma)?;
    let closed_tail = crate::closedform::sup_tail(spec.x0, level, gamma)?;
    let (t, n) = cfg.resolve(spec.sigma, default_t_trunc(spec.r)?);
    let policy = RngPolicy::new(cfg.seed);
    let [mc_mean, mc_tail] = mc_payoffs(cfg.paths, |i| {
        let raw = simulate_gbm(spec, t, n, &policy, i)?;
        let path = bridge_sup_correct_gbm(&raw, spec)?;
        let full = augment_tail(&path, gamma)?;
        let sup = full.global_sup();
        Ok([sup, (sup >= level) as u64 as f64])
    })?;
    let agree = mc_mean.consistent_with(closed_mean) && mc_tail.consistent_with(closed_tail);
    Ok(SupLawReport {
        level,
        closed_mean,
        closed_tail,
        mc_mean,
        mc_tail,
        agree,
    })
}

/// Estimates `E[sup Z over the killed horizon]`: each path draws its own
/// exponential lifetime, simulates up to it and takes the bridge-exact
/// supremum — no truncation anywhere, so the estimator is unbiased. The
/// killed-horizon normalization says `b E[Z*] = x` with
/// `b = (delta - 1)/delta`.
pub fn killed_sup_mean(spec: &GbmSpec, beta: f64, cfg: &McConfig) -> Result<McEstimate> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::param("beta", beta, "kill rate must be finite and > 0"));
    }
    let steps = cfg.steps.unwrap_or_else(|| default_steps(spec.sigma, 1.0 / beta));
    let policy = RngPolicy::new(cfg.seed);
    let [sup] = mc_payoffs(cfg.paths, |i| {
        let mut rng = policy.stream(i, StreamPurpose::KillTime);
        let tau = sample_kill_time(beta, &mut rng)?;
        let raw = simulate_gbm(spec, tau, steps, &policy, i)?;
        let path = bridge_sup_correct_gbm(&raw, spec)?;
        Ok([path.global_sup()])
    })?;
    Ok(sup)
}

/// Estimates `E[e^{X_T}]` for the jump-diffusion log process; the drift
/// convention pins it to `e^{-r T}` exactly.
pub fn levy_martingale_check(
    spec: &LevySpec,
    t: f64,
    steps: usize,
    cfg: &McConfig,
) -> Result<McEstimate> {
    let policy = RngPolicy::new(cfg.seed);
    let [mean] = mc_payoffs(cfg.paths, |i| {
        let path = simulate_levy(spec, t, steps, &policy, i, false)?;
        Ok([path.terminal() / spec.x0])
    })?;
    Ok(mean)
}

/// Kill-time sanity estimate used by the killed-model CLI path: mean of
/// `e^{-beta tau}`-weighted indicator reproduces `P[hit before kill]`.
pub fn killed_hit_probability(
    spec: &GbmSpec,
    beta: f64,
    boundary: f64,
    cfg: &McConfig,
) -> Result<McEstimate> {
    let delta = delta_of(spec, beta)?;
    let _ = delta;
    let (t, n) = cfg.resolve(spec.sigma, 5.0 / (spec.r + beta));
    let policy = RngPolicy::new(cfg.seed);
    let [p] = mc_payoffs(cfg.paths, |i| {
        let raw = simulate_gbm(spec, t, n, &policy, i)?;
        let path = bridge_sup_correct_gbm(&raw, spec)?;
        let fh = first_hit(&path, boundary);
        if !fh.hit {
            return Ok([0.0]);
        }
        let mut rng = policy.stream(i, StreamPurpose::KillTime);
        let tau = sample_kill_time(beta, &mut rng)?;
        Ok([(fh.time < tau) as u64 as f64])
    })?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::SupMode;

    fn gbm() -> GbmSpec {
        GbmSpec::new(0.5, 1.0, 1.0).unwrap()
    }

    #[test]
    fn first_hit_modes() {
        let path = PathBundle {
            times: vec![0.0, 1.0, 2.0, 3.0],
            values: vec![1.0, 1.4, 0.9, 1.8],
            running_sup: vec![1.0, 1.5, 1.5, 1.9],
            seg_max: Some(vec![1.5, 1.4, 1.9]),
            tail_sup: None,
            sup_mode: SupMode::BridgeCorrected,
            path_index: 0,
            master_seed: 0,
        };
        // bridge: segment 0 peaks at 1.5 >= 1.45 -> midpoint time, exact level
        let fh = first_hit(&path, 1.45);
        assert!(fh.hit);
        assert_eq!(fh.time, 0.5);
        assert_eq!(fh.level, 1.45);
        // grid-only fallback sees only monitored values
        let mut grid = path.clone();
        grid.seg_max = None;
        let fh = first_hit(&grid, 1.45);
        assert!(fh.hit);
        assert_eq!(fh.time, 3.0);
        assert_eq!(fh.level, 1.8);
        // initial overshoot keeps the observed state
        let fh = first_hit(&path, 0.7);
        assert!(fh.hit && fh.time == 0.0 && fh.level == 1.0);
        // never hit
        let fh = first_hit(&path, 5.0);
        assert!(!fh.hit && fh.time == 3.0 && fh.level == 1.8);
    }

    #[test]
    fn estimate_reduction_matches_sequential() {
        let vals: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.377).sin()).collect();
        let [est] = mc_payoffs(1000, |i| Ok([vals[i as usize]])).unwrap();
        let mean = vals.iter().sum::<f64>() / 1000.0;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 999.0;
        assert!((est.mean - mean).abs() < 1e-12);
        assert!((est.se - (var / 1000.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn gbm_price_three_way_agreement() {
        let spec = gbm();
        let cfg = McConfig {
            paths: 40_000,
            seed: 42,
            t_trunc: Some(10.0),
            steps: Some(400),
        };
        let rep = price_gbm_call(&spec, 1.0, Some(&cfg)).unwrap();
        assert!((rep.closed_form - 0.25).abs() < 1e-14);
        assert_eq!(rep.boundary, 2.0);
        assert_eq!(rep.agree, Some(true), "{rep:?}");
    }

    #[test]
    fn killed_price_matches_closed_form() {
        let spec = gbm();
        let cfg = McConfig {
            paths: 60_000,
            seed: 7,
            t_trunc: None,
            steps: None,
        };
        let rep = price_killed_call(&spec, 1.5, 1.0, Some(&cfg)).unwrap();
        assert!((rep.tail_exponent - 3.0).abs() < 1e-12);
        assert!((rep.boundary - 1.5).abs() < 1e-12);
        assert!((rep.closed_form - 0.5 * (2.0_f64 / 3.0).powi(3)).abs() < 1e-14);
        assert_eq!(rep.agree, Some(true), "{rep:?}");
    }

    #[test]
    fn bm_price_matches_closed_form() {
        let spec = DriftedBmSpec::new(0.5, 1.0, 0.0).unwrap();
        // T = 30 leaves a late-hit truncation tail ~3e-4, well under 3 se
        let cfg = McConfig {
            paths: 20_000,
            seed: 3,
            t_trunc: Some(30.0),
            steps: Some(3_000),
        };
        let rep = price_bm_call(&spec, 1.0, Some(&cfg)).unwrap();
        assert!((rep.closed_form - (-2.0_f64).exp()).abs() < 1e-14);
        assert_eq!(rep.boundary, 2.0);
        assert_eq!(rep.agree, Some(true), "{rep:?}");
    }

    #[test]
    fn tournament_optimal_wins() {
        let spec = gbm();
        let cfg = McConfig {
            paths: 30_000,
            seed: 11,
            t_trunc: Some(10.0),
            steps: Some(400),
        };
        let rows = tournament_gbm(&spec, 1.0, &[0.5, 0.75, 1.25, 1.5], &cfg).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0].multiplier, 1.0);
        let opt = rows[0].closed_form;
        assert!((opt - 0.25).abs() < 1e-14);
        for row in &rows {
            assert!(row.mc_consistent, "{row:?}");
            assert!(row.closed_form <= opt + 1e-14);
        }
        // strict suboptimality away from the optimum
        assert!(rows[1].closed_form < opt - 0.1); // c = 0.5 stops at the strike
        // alternative rule values are exactly (c z* - m)(x/(c z*))^gamma
        let g = gamma_of(&spec);
        for row in &rows[1..] {
            let expect = (row.level - 1.0).max(0.0) * (1.0 / row.level).powf(g);
            assert!((row.closed_form - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn duality_mc_agrees() {
        let spec = gbm();
        // bridge draws keep hits exact on a coarse grid; midpoint-time
        // discounting is second-order in r dt
        let cfg = McConfig {
            paths: 20_000,
            seed: 19,
            t_trunc: Some(16.0),
            steps: Some(2_000),
        };
        let rep = duality_check_gbm(&spec, 1.0, &cfg).unwrap();
        assert_eq!(rep.scale, 1.0);
        assert!(rep.agree, "{rep:?}");
        assert!((rep.call_closed - 0.25).abs() < 1e-14);
    }

    #[test]
    fn sup_law_report_agrees() {
        let spec = gbm();
        let cfg = McConfig {
            paths: 40_000,
            seed: 5,
            t_trunc: Some(10.0),
            steps: Some(400),
        };
        let rep = sup_law_gbm(&spec, 2.0, &cfg).unwrap();
        assert_eq!(rep.closed_mean, 2.0);
        assert_eq!(rep.closed_tail, 0.25);
        assert!(rep.agree, "{rep:?}");
    }

    #[test]
    fn rule_value_edges() {
        // stopping exactly at the strike is worthless
        assert_eq!(gbm_rule_value(1.0, 1.0, 2.0, 1.0).unwrap(), 0.0);
        // stopping level below the start pays immediately
        assert_eq!(gbm_rule_value(3.0, 1.0, 2.0, 2.0).unwrap(), 2.0);
        assert!(gbm_rule_value(1.0, 1.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn killed_sup_normalization() {
        // delta = 3 at beta = 1.5: b = 2/3 and E[sup over the killed
        // horizon] = x/b = 1.5, estimated without truncation
        let spec = gbm();
        let cfg = McConfig {
            paths: 30_000,
            seed: 23,
            t_trunc: None,
            steps: Some(300),
        };
        let est = killed_sup_mean(&spec, 1.5, &cfg).unwrap();
        assert!(est.consistent_with(1.5), "{est:?}");
        assert!(killed_sup_mean(&spec, 0.0, &cfg).is_err());
    }

    #[test]
    fn levy_exponential_moment_via_estimator() {
        let spec = LevySpec::with_martingale_drift(
            0.4,
            vec![crate::model::JumpComponent {
                rate: 1.0,
                law: crate::model::JumpLaw::NegExponential { theta: 2.0 },
            }],
            0.05,
            1.0,
        )
        .unwrap();
        let cfg = McConfig {
            paths: 60_000,
            seed: 29,
            t_trunc: None,
            steps: None,
        };
        let est = levy_martingale_check(&spec, 1.0, 16, &cfg).unwrap();
        assert!(est.consistent_with((-0.05_f64).exp()), "{est:?}");
    }
}
