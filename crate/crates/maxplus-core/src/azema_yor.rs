//! Max-of-martingale transforms: for a nonnegative martingale `N` with
//! running maximum `N*` and a concave increasing `u`, the process
//! `M = u(N*) + (N - N*) u'(N*)` is again a martingale, dominates `u(N)`
//! pathwise, and its running maximum is exactly `u(N*)`.
//!
//! The companion map `v(x) = u(x) - x u'(x)` is the index process of
//! `u(N)` in disguise: stopping once `v(N) >= m` is the optimal rule for
//! `sup E[u(N_tau) v m]`, whose value is read off the concave envelope of
//! `u v m` (a chord from `(0, m)` tangent at the level `v(x*) = m`).
//! `v` determines `u` up to the anchor through
//! `u(x) = x (u(x0)/x0 - int_{x0}^x v(s)/s^2 ds)`, which `invert_v`
//! evaluates numerically.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{gamma_of, GbmSpec};
use crate::simulate::{bridge_sup_correct_gbm, simulate_gbm};
use crate::stopping::{mc_payoffs, McEstimate};
use crate::rng::RngPolicy;
use crate::tol;

/// Concave increasing transforms `u` on `[0, inf)`, closed under the
/// operations this module needs (evaluation, derivative, `v`-map).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ConcaveFn {
    /// `u(x) = x^p`, `p` strictly inside `(0, 1)`.
    Power { p: f64 },
    /// `u(x) = c ln x`, `c > 0`.
    ScaledLog { c: f64 },
    /// `u(x) = a + b x`, `a >= 0`, `b >= 0`.
    Affine { a: f64, b: f64 },
    /// Tabulated map, linearly interpolated; `vs` holds `v = u - x u'`
    /// at the same knots. Produced by [`invert_v`].
    Numeric {
        xs: Vec<f64>,
        us: Vec<f64>,
        vs: Vec<f64>,
    },
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> Result<f64> {
    let n = xs.len();
    if x < xs[0] || x > xs[n - 1] {
        return Err(Error::Domain(format!(
            "{x} outside the tabulated range [{}, {}]",
            xs[0],
            xs[n - 1]
        )));
    }
    let j = match xs.binary_search_by(|p| p.partial_cmp(&x).expect("finite knots")) {
        Ok(j) => return Ok(ys[j]),
        Err(j) => j,
    };
    let w = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
    Ok(ys[j - 1] + w * (ys[j] - ys[j - 1]))
}

impl ConcaveFn {
    pub fn power(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::param("p", p, "power exponent must lie in (0, 1)"));
        }
        Ok(ConcaveFn::Power { p })
    }

    pub fn scaled_log(c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::param("c", c, "log scale must be finite and > 0"));
        }
        Ok(ConcaveFn::ScaledLog { c })
    }

    pub fn affine(a: f64, b: f64) -> Result<Self> {
        if !(a >= 0.0) || !a.is_finite() {
            return Err(Error::param("a", a, "intercept must be finite and >= 0"));
        }
        if !(b >= 0.0) || !b.is_finite() {
            return Err(Error::param("b", b, "slope must be finite and >= 0"));
        }
        Ok(ConcaveFn::Affine { a, b })
    }

    /// `"power:0.5"`, `"log:1.0"` or `"affine:0.5,2.0"`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Domain(format!(
            "cannot parse transform '{s}'; expected power:<p>, log:<c> or affine:<a>,<b>"
        ));
        let (kind, args) = s.split_once(':').ok_or_else(bad)?;
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        match kind.trim() {
            "power" => ConcaveFn::power(num(args)?),
            "log" => ConcaveFn::scaled_log(num(args)?),
            "affine" => {
                let (a, b) = args.split_once(',').ok_or_else(bad)?;
                ConcaveFn::affine(num(a)?, num(b)?)
            }
            _ => Err(bad()),
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) || !x.is_finite() {
            return Err(Error::param("x", x, "transform argument must be finite and >= 0"));
        }
        match self {
            ConcaveFn::Power { p } => Ok(x.powf(*p)),
            ConcaveFn::ScaledLog { c } => {
                if x == 0.0 {
                    return Err(Error::Domain("log transform undefined at 0".into()));
                }
                Ok(c * x.ln())
            }
            ConcaveFn::Affine { a, b } => Ok(a + b * x),
            ConcaveFn::Numeric { xs, us, .. } => interp(xs, us, x),
        }
    }

    pub fn deriv(&self, x: f64) -> Result<f64> {
        match self {
            ConcaveFn::Power { p } => {
                if !(x > 0.0) {
                    return Err(Error::Domain("power derivative needs x > 0".into()));
                }
                Ok(p * x.powf(p - 1.0))
            }
            ConcaveFn::ScaledLog { c } => {
                if !(x > 0.0) {
                    return Err(Error::Domain("log derivative needs x > 0".into()));
                }
                Ok(c / x)
            }
            ConcaveFn::Affine { b, .. } => Ok(*b),
            // u' = (u - v)/x, exact consequence of v = u - x u'
            ConcaveFn::Numeric { .. } => {
                if !(x > 0.0) {
                    return Err(Error::Domain("tabulated derivative needs x > 0".into()));
                }
                Ok((self.eval(x)? - self.v_of(x)?) / x)
            }
        }
    }

    /// `v(x) = u(x) - x u'(x)`: the intercept at 0 of the tangent at `x`.
    /// Nondecreasing exactly when `u` is concave.
    pub fn v_of(&self, x: f64) -> Result<f64> {
        match self {
            ConcaveFn::Power { p } => {
                if !(x >= 0.0) {
                    return Err(Error::Domain("power v-map needs x >= 0".into()));
                }
                Ok((1.0 - p) * x.powf(*p))
            }
            ConcaveFn::ScaledLog { c } => {
                if !(x > 0.0) {
                    return Err(Error::Domain("log v-map needs x > 0".into()));
                }
                Ok(c * (x.ln() - 1.0))
            }
            ConcaveFn::Affine { a, .. } => Ok(*a),
            ConcaveFn::Numeric { xs, vs, .. } => interp(xs, vs, x),
        }
    }
}

/// `M = u(N*) + (N - N*) u'(N*)`, the martingale transform of the pair
/// (current value, running maximum).
pub fn ay_martingale(u: &ConcaveFn, n: f64, nstar: f64) -> Result<f64> {
    if !(n >= 0.0) || !n.is_finite() {
        return Err(Error::param("n", n, "martingale value must be finite and >= 0"));
    }
    if !(nstar >= n) || !nstar.is_finite() {
        return Err(Error::param(
            "nstar",
            nstar,
            "running maximum must be finite and >= the current value",
        ));
    }
    Ok(u.eval(nstar)? + (n - nstar) * u.deriv(nstar)?)
}

/// Concave envelope of `x -> u(x) v m` on `[0, inf)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Envelope {
    /// `u` never climbs above the floor: the envelope is flat at `m`.
    Constant { m: f64 },
    /// The whole half-line is a stopping region: the envelope is `u`.
    Identity,
    /// A chord from `(0, m)` tangent to `u` at `x_star` (where
    /// `v(x_star) = m`), then `u` itself.
    Chord {
        x_star: f64,
        chord_slope: f64,
        m: f64,
    },
}

impl Envelope {
    pub fn value(&self, u: &ConcaveFn, x0: f64) -> Result<f64> {
        match self {
            Envelope::Constant { m } => Ok(*m),
            Envelope::Identity => u.eval(x0),
            Envelope::Chord { x_star, chord_slope, m } => {
                if x0 >= *x_star {
                    u.eval(x0)
                } else {
                    Ok(m + chord_slope * x0)
                }
            }
        }
    }
}

/// Solves `v(x*) = m` and classifies the envelope. Affine transforms are
/// handled exactly: `v` is constant there, so the tangency equation has
/// either no solution (error when the value is approached but never
/// attained), every solution (error: the stopping level is undetermined),
/// or reduces to one of the flat cases.
pub fn concave_envelope(u: &ConcaveFn, m: f64) -> Result<Envelope> {
    if !m.is_finite() {
        return Err(Error::param("m", m, "floor must be finite"));
    }
    let scale = m.abs().max(1.0);
    if let ConcaveFn::Affine { a, b } = u {
        if (a - m).abs() <= tol::CONTACT_REL * scale {
            return Err(Error::Domain(
                "affine transform with v = m everywhere: every level is tangent \
                 and no stopping level is determined"
                    .into(),
            ));
        }
        if *a > m {
            return Ok(Envelope::Identity);
        }
        return if *b == 0.0 {
            Ok(Envelope::Constant { m })
        } else {
            Err(Error::Domain(format!(
                "affine transform stays below any tangency: the value m + b x \
                 is approached as the stopping level grows but never attained \
                 (a = {a} < m = {m}, b = {b})"
            )))
        };
    }

    // generic case: v is nondecreasing; bracket the tangency level
    let (mut lo, mut hi) = (1.0_f64, 1.0_f64);
    let v_at = |x: f64| u.v_of(x);
    let mut v_lo = v_at(lo)?;
    while v_lo >= m {
        lo /= 2.0;
        if lo < 1e-300 {
            // stopping region reaches all the way down
            return Ok(Envelope::Identity);
        }
        v_lo = match v_at(lo) {
            Ok(v) => v,
            // tabulated maps end; treat falling off the low end as
            // whole-domain stopping only if already at or above m
            Err(_) => return Ok(Envelope::Identity),
        };
    }
    let mut v_hi = v_at(hi)?;
    while v_hi < m {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::RootFinding(format!(
                "no tangency level below 1e300 for floor {m}"
            )));
        }
        v_hi = v_at(hi)?;
    }

    // geometric bisection: v is monotone, so this converges to the level
    let mut x_star = (lo * hi).sqrt();
    for _ in 0..500 {
        x_star = (lo * hi).sqrt();
        let vm = v_at(x_star)?;
        if (vm - m).abs() <= tol::CONTACT_REL * scale {
            return Ok(Envelope::Chord {
                x_star,
                chord_slope: u.deriv(x_star)?,
                m,
            });
        }
        if vm < m {
            lo = x_star;
        } else {
            hi = x_star;
        }
    }
    let residual = (v_at(x_star)? - m).abs();
    if residual <= 1e-9 * scale {
        // flat stretches of a tabulated v can stall pure bisection; accept
        // the certified level
        return Ok(Envelope::Chord {
            x_star,
            chord_slope: u.deriv(x_star)?,
            m,
        });
    }
    Err(Error::RootFinding(format!(
        "tangency bisection stalled at x = {x_star} with |v - m| = {residual}"
    )))
}

/// `sup_tau E[u(N_tau) v m]` for a nonnegative martingale started at `x0`
/// that drifts to zero: the envelope value at `x0`. The optimal rule stops
/// once `N` reaches the tangency level.
pub fn snell_from_envelope(u: &ConcaveFn, m: f64, x0: f64) -> Result<f64> {
    if !(x0 > 0.0) || !x0.is_finite() {
        return Err(Error::param("x0", x0, "start must be finite and > 0"));
    }
    concave_envelope(u, m)?.value(u, x0)
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
}

fn adaptive_simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let c = 0.5 * (a + b);
    let left = simpson(f, a, c);
    let right = simpson(f, c, b);
    let err = left + right - whole;
    if err.abs() <= 15.0 * tol || (b - a) < 1e-14 * (a.abs() + b.abs()) {
        return Ok(left + right + err / 15.0);
    }
    if depth == 0 {
        return Err(Error::RootFinding(format!(
            "quadrature failed to converge on [{a}, {b}]"
        )));
    }
    Ok(adaptive_simpson(f, a, c, left, 0.5 * tol, depth - 1)?
        + adaptive_simpson(f, c, b, right, 0.5 * tol, depth - 1)?)
}

fn integrate(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    Ok(sign * adaptive_simpson(f, lo, hi, simpson(f, lo, hi), tol::QUADRATURE_ABS, 48)?)
}

/// Recovers `u` from its `v`-map and one anchor value, on a grid:
/// `u(x) = x (u(x0)/x0 - int_{x0}^x v(s)/s^2 ds)`. The input must be
/// nondecreasing on the grid (concavity of the result); the returned
/// transform carries both `u` and `v` knots.
pub fn invert_v(
    v: impl Fn(f64) -> f64,
    anchor_x: f64,
    anchor_u: f64,
    grid: &[f64],
) -> Result<ConcaveFn> {
    if !(anchor_x > 0.0) || !anchor_x.is_finite() {
        return Err(Error::param("anchor_x", anchor_x, "must be finite and > 0"));
    }
    if grid.len() < 2 {
        return Err(Error::Domain("inversion grid needs at least two points".into()));
    }
    if grid[0] <= 0.0 {
        return Err(Error::param("grid", grid[0], "grid must be strictly positive"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("inversion grid must be strictly increasing".into()));
    }
    let vs: Vec<f64> = grid.iter().map(|&x| v(x)).collect();
    if let Some(bad) = vs.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("v-map produced {bad} on the grid")));
    }
    for w in vs.windows(2) {
        if w[1] < w[0] - 1e-12 * w[0].abs().max(1.0) {
            return Err(Error::Domain(
                "v-map decreases on the grid; the recovered transform would not be concave"
                    .into(),
            ));
        }
    }

    let integrand = |s: f64| v(s) / (s * s);
    let base = anchor_u / anchor_x;
    // integrate once between consecutive targets, accumulating from the
    // anchor, so the error does not grow with the grid size
    let mut us = vec![0.0; grid.len()];
    // index of the first grid point at or above the anchor
    let split = grid.partition_point(|&x| x < anchor_x);
    let mut acc = if split < grid.len() {
        integrate(&integrand, anchor_x, grid[split])?
    } else {
        0.0
    };
    for j in split..grid.len() {
        if j > split {
            acc += integrate(&integrand, grid[j - 1], grid[j])?;
        }
        us[j] = grid[j] * (base - acc);
    }
    if split > 0 {
        let mut acc = integrate(&integrand, anchor_x, grid[split - 1])?;
        for j in (0..split).rev() {
            if j < split - 1 {
                acc += integrate(&integrand, grid[j + 1], grid[j])?;
            }
            us[j] = grid[j] * (base - acc);
        }
    }

    Ok(ConcaveFn::Numeric {
        xs: grid.to_vec(),
        us,
        vs,
    })
}

/// Pathwise facts about the transform along one sequence of martingale
/// values, exact for any input sequence:
/// the transform dominates `u(N)`, its running maximum is `u(N*)`, and it
/// stays above `v(N*)`.
#[derive(Debug, Clone, Serialize)]
pub struct AyPathReport {
    pub m: Vec<f64>,
    /// `min_k (M_k - u(N_k))`; nonnegative up to rounding.
    pub min_slack_over_u: f64,
    /// `min_k (M_k - v(N*_k))`; nonnegative up to rounding.
    pub min_slack_over_v: f64,
    pub max_m: f64,
    pub u_of_final_sup: f64,
    /// `|max_k M_k - u(N*_T)|`; zero up to rounding.
    pub max_identity_residual: f64,
}

pub fn ay_path_check(u: &ConcaveFn, n: &[f64]) -> Result<AyPathReport> {
    if n.is_empty() {
        return Err(Error::PathState("empty martingale path".into()));
    }
    let mut nstar = f64::NEG_INFINITY;
    let mut m = Vec::with_capacity(n.len());
    let mut min_slack_over_u = f64::INFINITY;
    let mut min_slack_over_v = f64::INFINITY;
    let mut max_m = f64::NEG_INFINITY;
    for &nk in n {
        nstar = nstar.max(nk);
        let mk = ay_martingale(u, nk, nstar)?;
        min_slack_over_u = min_slack_over_u.min(mk - u.eval(nk)?);
        min_slack_over_v = min_slack_over_v.min(mk - u.v_of(nstar)?);
        max_m = max_m.max(mk);
        m.push(mk);
    }
    let u_of_final_sup = u.eval(nstar)?;
    Ok(AyPathReport {
        m,
        min_slack_over_u,
        min_slack_over_v,
        max_m,
        u_of_final_sup,
        max_identity_residual: (max_m - u_of_final_sup).abs(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AyEnsembleReport {
    /// `u(N_0)`: what the terminal mean must reproduce.
    pub m0: f64,
    pub terminal: McEstimate,
    pub consistent: bool,
    /// Paths on which a pathwise inequality failed beyond rounding.
    pub pathwise_violations: u64,
}

/// Monte Carlo check that the transform of the power map under the
/// discounted-GBM martingale `N = Z^gamma` is itself a martingale:
/// `E[M_T] = u(N_0)` within noise, with the terminal running maximum drawn
/// exactly in law through bridge draws. Pathwise inequalities are checked
/// on the grid skeleton of every path.
pub fn ay_ensemble_gbm(
    spec: &GbmSpec,
    t: f64,
    steps: usize,
    paths: u64,
    seed: u64,
) -> Result<AyEnsembleReport> {
    let gamma = gamma_of(spec);
    let u = ConcaveFn::power(1.0 / gamma)?;
    let policy = RngPolicy::new(seed);
    let m0 = u.eval(spec.x0.powf(gamma))?;
    let [terminal, violations] = mc_payoffs::<2>(paths, |i| {
        let path = simulate_gbm(spec, t, steps, &policy, i)?;
        let n_grid: Vec<f64> = path.values.iter().map(|z| z.powf(gamma)).collect();
        let rep = ay_path_check(&u, &n_grid)?;
        let tol_path = 1e-9 * rep.u_of_final_sup.abs().max(1.0);
        let bad = rep.min_slack_over_u < -tol_path
            || rep.min_slack_over_v < -tol_path
            || rep.max_identity_residual > tol_path;
        let bridged = bridge_sup_correct_gbm(&path, spec)?;
        let m_t = ay_martingale(
            &u,
            bridged.terminal().powf(gamma),
            bridged.global_sup().powf(gamma),
        )?;
        Ok([m_t, if bad { 1.0 } else { 0.0 }])
    })?;
    Ok(AyEnsembleReport {
        m0,
        consistent: terminal.consistent_with(m0),
        terminal,
        pathwise_violations: (violations.mean * paths as f64).round() as u64,
    })
}
