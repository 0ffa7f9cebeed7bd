//! Closed-form supremum laws, option prices, boundaries and martingale maps.
//!
//! Everything here is driven by a single tail exponent: `gamma` for the
//! perpetual geometric case, `delta` for the exponentially killed case, or
//! the Laplace-exponent root for jump diffusions. The running supremum of
//! the normalized process has a Pareto tail with that exponent, and every
//! price below is an explicit integral of it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index normalization for optimal stopping rules.
///
/// Multiplicative models use `L = b Z` with `1/b = E[sup of the normalized
/// process]` (`mean_sup > 1`); additive models use `L = Z - b` with
/// `b = E[sup of the zero-start process] >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BoundarySpec {
    Multiplicative { mean_sup: f64 },
    Additive { mean_sup: f64 },
}

impl BoundarySpec {
    pub fn multiplicative(mean_sup: f64) -> Result<Self> {
        if !(mean_sup > 1.0) || !mean_sup.is_finite() {
            return Err(Error::param(
                "mean_sup",
                mean_sup,
                "multiplicative mean supremum must be finite and > 1",
            ));
        }
        Ok(BoundarySpec::Multiplicative { mean_sup })
    }

    pub fn additive(mean_sup: f64) -> Result<Self> {
        if !(mean_sup >= 0.0) || !mean_sup.is_finite() {
            return Err(Error::param(
                "mean_sup",
                mean_sup,
                "additive mean supremum must be finite and >= 0",
            ));
        }
        Ok(BoundarySpec::Additive { mean_sup })
    }

    /// The index scaling constant `b`: `1/mean_sup` (multiplicative) or
    /// `mean_sup` itself (additive).
    pub fn index_constant(&self) -> f64 {
        match *self {
            BoundarySpec::Multiplicative { mean_sup } => 1.0 / mean_sup,
            BoundarySpec::Additive { mean_sup } => mean_sup,
        }
    }
}

/// Optimal exercise boundary in the underlying's units: stop the first time
/// `Z` reaches `m * mean_sup` (multiplicative) or `m + mean_sup` (additive).
pub fn exercise_boundary(m: f64, spec: &BoundarySpec) -> Result<f64> {
    if !m.is_finite() {
        return Err(Error::param("m", m, "strike must be finite"));
    }
    Ok(match *spec {
        BoundarySpec::Multiplicative { mean_sup } => {
            if m < 0.0 {
                return Err(Error::param(
                    "m",
                    m,
                    "multiplicative boundary needs m >= 0",
                ));
            }
            m * mean_sup
        }
        BoundarySpec::Additive { mean_sup } => m + mean_sup,
    })
}

fn check_exponent(name: &'static str, v: f64, needs_above_one: bool) -> Result<()> {
    if !v.is_finite() || (needs_above_one && v <= 1.0) || (!needs_above_one && v <= 0.0) {
        return Err(Error::param(
            name,
            v,
            if needs_above_one {
                "tail exponent must be finite and > 1"
            } else {
                "exponent must be finite and > 0"
            },
        ));
    }
    Ok(())
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::param(name, v, "must be finite and > 0"));
    }
    Ok(())
}

/// `P[sup Z >= m] = min(x/m, 1)^delta` for the all-time supremum of a
/// process started at `x` with tail exponent `delta`.
pub fn sup_tail(x: f64, m: f64, delta: f64) -> Result<f64> {
    check_positive("x", x)?;
    check_positive("m", m)?;
    check_exponent("delta", delta, false)?;
    let ratio = (x / m).min(1.0);
    Ok(ratio.powf(delta))
}

/// `E[sup Z] = delta / (delta - 1) * x`; infinite for `delta <= 1`.
pub fn sup_mean(x: f64, delta: f64) -> Result<f64> {
    check_positive("x", x)?;
    check_exponent("delta", delta, true)?;
    Ok(delta / (delta - 1.0) * x)
}

/// Lookback-style price `E[(sup Z - m)^+]` under the Pareto supremum law:
/// `m/(delta-1) * (x/m)^delta` when `m >= x`, else `delta/(delta-1)*x - m`.
/// At the branch point `m = x` the large-`m` branch is evaluated.
pub fn lookback_call(x: f64, m: f64, delta: f64) -> Result<f64> {
    check_positive("x", x)?;
    check_exponent("delta", delta, true)?;
    if !m.is_finite() {
        return Err(Error::param("m", m, "strike must be finite"));
    }
    if m >= x {
        // (x/m) <= 1 keeps the power bounded for any exponent.
        Ok(m / (delta - 1.0) * (x / m).powf(delta))
    } else {
        Ok(sup_mean(x, delta)? - m)
    }
}

/// Perpetual American call on a multiplicative supermartingale with tail
/// exponent `gamma`: continuation value
/// `(m/(gamma-1))^(1-gamma) * (z/gamma)^gamma` when
/// `((gamma-1)/gamma) z <= m`, immediate exercise `z - m` otherwise.
///
/// The continuation branch is computed as
/// `m/(gamma-1) * (((gamma-1) z)/(gamma m))^gamma`, whose base lies in
/// `(0, 1]` on that branch, so no intermediate overflow occurs for large
/// exponents.
pub fn american_call_gbm(z: f64, m: f64, gamma: f64) -> Result<f64> {
    check_positive("z", z)?;
    check_exponent("gamma", gamma, true)?;
    if !m.is_finite() {
        return Err(Error::param("m", m, "strike must be finite"));
    }
    let b = (gamma - 1.0) / gamma;
    if b * z <= m {
        Ok(m / (gamma - 1.0) * (b * z / m).powf(gamma))
    } else {
        Ok(z - m)
    }
}

/// Perpetual American call on an additive supermartingale (drifted Brownian
/// motion) with supremum rate `gamma`: the zero-start supremum is
/// exponential, `b = 1/gamma`, and the price is
/// `(1/gamma) e^{-gamma (m + b - z)}` past the boundary, `z - m` below it.
pub fn american_call_bm(z: f64, m: f64, gamma: f64) -> Result<f64> {
    check_exponent("gamma", gamma, false)?;
    if !z.is_finite() || !m.is_finite() {
        return Err(Error::param("z", z, "state and strike must be finite"));
    }
    let b = 1.0 / gamma;
    if z <= m + b {
        Ok(b * (-gamma * (m + b - z)).exp())
    } else {
        Ok(z - m)
    }
}

/// Index constant for the exponentially killed multiplicative model:
/// `b = (delta - 1)/delta`.
pub fn index_constant_killed(delta: f64) -> Result<f64> {
    check_exponent("delta", delta, true)?;
    Ok((delta - 1.0) / delta)
}

/// Martingale map for perpetual GBM: the process
/// `phi(Z_t, sup Z_t)` with
/// `phi(z, z*) = ((gamma-1)/gamma) z* [ (1/(gamma-1)) (z/z*)^gamma + 1 ]`
/// is the terminal-value martingale dominating `Z` and its scaled supremum.
pub fn phi_gbm(z: f64, zstar: f64, gamma: f64) -> Result<f64> {
    check_positive("z", z)?;
    check_exponent("gamma", gamma, true)?;
    if !(zstar >= z) || !zstar.is_finite() {
        return Err(Error::param("zstar", zstar, "must be finite and >= z"));
    }
    let ratio = (z / zstar).powf(gamma);
    Ok((gamma - 1.0) / gamma * zstar * (ratio / (gamma - 1.0) + 1.0))
}

/// Martingale map for drifted Brownian motion:
/// `phi(z, z*) = (1/gamma)(e^{-gamma (z* - z)} - 1) + z*`.
pub fn phi_bm(z: f64, zstar: f64, gamma: f64) -> Result<f64> {
    check_exponent("gamma", gamma, false)?;
    if !z.is_finite() || !(zstar >= z) || !zstar.is_finite() {
        return Err(Error::param("zstar", zstar, "must be finite and >= z"));
    }
    Ok(((-gamma * (zstar - z)).exp() - 1.0) / gamma + zstar)
}

/// Killed-horizon martingale map: value `pre = phi_delta(z, z*)` before the
/// kill time and the jump `-(z*/delta)(z/z*)^delta` applied at it, leaving
/// the post-kill value `((delta-1)/delta) z*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiKilled {
    pub pre: f64,
    pub jump: f64,
}

impl PhiKilled {
    /// Value right after the kill jump.
    pub fn post(&self) -> f64 {
        self.pre + self.jump
    }
}

pub fn phi_killed(z: f64, zstar: f64, delta: f64) -> Result<PhiKilled> {
    let pre = phi_gbm(z, zstar, delta)?;
    let jump = -(zstar / delta) * (z / zstar).powf(delta);
    Ok(PhiKilled { pre, jump })
}

/// Left derivative in the strike of the perpetual American call:
/// `-min(((gamma-1)/gamma) z / m, 1)^gamma`. Exactly -1 at and below the
/// exercise boundary (smooth fit).
pub fn call_left_derivative(z: f64, m: f64, gamma: f64) -> Result<f64> {
    check_positive("z", z)?;
    check_positive("m", m)?;
    check_exponent("gamma", gamma, true)?;
    let ratio = ((gamma - 1.0) / gamma * z / m).min(1.0);
    Ok(-ratio.powf(gamma))
}

/// Call/put duality data: the perpetual call on `Z` started at `x` with
/// strike `m` equals `scale` times the perpetual put on the reciprocal
/// process started at `1/x` with strike `1/m`, where `scale = m x`.
/// Equivalently, the dual underlying `m x / Z` starts at `m` with strike
/// `x`. The dual put exercises when its spot falls to `put_boundary`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityMap {
    pub scale: f64,
    pub put_spot: f64,
    pub put_strike: f64,
    pub dual_underlying_start: f64,
    pub dual_strike: f64,
    pub put_boundary: f64,
}

pub fn duality_transform(x: f64, m: f64, gamma: f64) -> Result<DualityMap> {
    check_positive("x", x)?;
    check_positive("m", m)?;
    check_exponent("gamma", gamma, true)?;
    Ok(DualityMap {
        scale: m * x,
        put_spot: 1.0 / x,
        put_strike: 1.0 / m,
        dual_underlying_start: m,
        dual_strike: x,
        put_boundary: (gamma - 1.0) / gamma / m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-14;

    #[test]
    fn sup_law_examples() {
        assert!((sup_tail(1.0, 2.0, 2.0).unwrap() - 0.25).abs() < EPS);
        assert_eq!(sup_tail(1.0, 0.5, 2.0).unwrap(), 1.0);
        assert!((sup_mean(1.0, 2.0).unwrap() - 2.0).abs() < EPS);
        assert!((sup_mean(1.0, 3.0).unwrap() - 1.5).abs() < EPS);
        assert!(sup_mean(1.0, 1.0).is_err());
        assert!(sup_mean(1.0, 0.99).is_err());
    }

    #[test]
    fn sup_tail_is_a_distribution_tail() {
        // nonincreasing in m, 1 below x, integrates to the mean
        let (x, delta) = (1.3, 2.7);
        let mut prev = 1.0;
        let mut acc = 0.0;
        let dm = 1e-3;
        let mut m = dm;
        while m < 400.0 {
            let t = sup_tail(x, m, delta).unwrap();
            assert!(t <= prev + 1e-15);
            prev = t;
            acc += t * dm;
            m += dm;
        }
        let mean = sup_mean(x, delta).unwrap();
        assert!((acc - mean).abs() < 2e-3, "quadrature {acc} vs mean {mean}");
    }

    #[test]
    fn lookback_examples() {
        assert!((lookback_call(1.0, 2.0, 2.0).unwrap() - 0.5).abs() < EPS);
        // m = 0 reduces to the supremum mean
        assert!((lookback_call(1.0, 0.0, 3.0).unwrap() - 1.5).abs() < EPS);
        // branch continuity at m = x
        let (x, d) = (1.7, 2.4);
        let lo = lookback_call(x, x - 1e-12, d).unwrap();
        let hi = lookback_call(x, x, d).unwrap();
        assert!((lo - hi).abs() < 1e-11);
    }

    #[test]
    fn american_call_examples() {
        assert!((american_call_gbm(1.0, 1.0, 2.0).unwrap() - 0.25).abs() < EPS);
        // at-boundary value matching: z = gamma/(gamma-1) * m
        let (m, gamma) = (1.0, 2.0);
        let z = gamma / (gamma - 1.0) * m;
        let c = american_call_gbm(z, m, gamma).unwrap();
        assert!((c - (z - m)).abs() < EPS);
        // m = 0 exercises immediately
        assert_eq!(american_call_gbm(3.2, 0.0, 2.0).unwrap(), 3.2);
    }

    #[test]
    fn call_scaling_identity() {
        // call(z, m) = b * lookback(z, m/b) with b = (gamma-1)/gamma
        for gamma in [1.5, 2.0, 3.7] {
            let b = (gamma - 1.0) / gamma;
            for z in [0.5, 1.0, 2.0] {
                for m in [0.2, 1.0, 4.0] {
                    let lhs = american_call_gbm(z, m, gamma).unwrap();
                    let rhs = b * lookback_call(z, m / b, gamma).unwrap();
                    assert!((lhs - rhs).abs() < 1e-13 * lhs.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn call_homogeneity() {
        let gamma = 2.5;
        for c in [0.3, 2.0, 17.0] {
            let base = american_call_gbm(1.1, 1.9, gamma).unwrap();
            let scaled = american_call_gbm(c * 1.1, c * 1.9, gamma).unwrap();
            assert!((scaled - c * base).abs() < 1e-12 * scaled.max(1.0));
        }
    }

    #[test]
    fn call_strike_shape() {
        // convex, nonincreasing, 1-Lipschitz, dominates payoff
        let (z, gamma) = (1.0, 2.0);
        let f = |m: f64| american_call_gbm(z, m, gamma).unwrap();
        let ms: Vec<f64> = (1..200).map(|i| i as f64 * 0.02).collect();
        for w in ms.windows(3) {
            let (a, b, c) = (w[0], w[1], w[2]);
            assert!(f(b) <= f(a) + 1e-14);
            assert!(f(a) - f(b) <= (b - a) * (1.0 + 1e-12));
            assert!(f(b) <= 0.5 * (f(a) + f(c)) + 1e-14);
            assert!(f(b) >= (z - b).max(0.0) - 1e-14);
        }
    }

    #[test]
    fn extreme_exponents_stay_finite() {
        for delta in [50.0, 200.0] {
            for ratio in [1e-6_f64, 1e-3, 0.5, 1.0] {
                let x = 1.0;
                let m = x / ratio; // m >= x
                let v = lookback_call(x, m, delta).unwrap();
                assert!(v.is_finite() && v >= 0.0);
                let c = american_call_gbm(x, m, delta).unwrap();
                assert!(c.is_finite() && c >= 0.0);
            }
        }
    }

    #[test]
    fn boundary_examples() {
        let mult = BoundarySpec::multiplicative(2.0).unwrap();
        assert_eq!(exercise_boundary(1.0, &mult).unwrap(), 2.0);
        assert!((mult.index_constant() - 0.5).abs() < EPS);
        let add = BoundarySpec::additive(1.0).unwrap();
        assert_eq!(exercise_boundary(1.0, &add).unwrap(), 2.0);
        assert!(BoundarySpec::multiplicative(1.0).is_err());
        assert!(BoundarySpec::additive(-0.1).is_err());
    }

    #[test]
    fn killed_constants() {
        assert!((index_constant_killed(3.0).unwrap() - 2.0 / 3.0).abs() < EPS);
        assert!(index_constant_killed(1.0).is_err());
    }

    #[test]
    fn phi_gbm_examples() {
        assert!((phi_gbm(1.0, 2.0, 2.0).unwrap() - 1.25).abs() < EPS);
        // diagonal: phi(z, z) = z
        for z in [0.3, 1.0, 5.0] {
            for g in [1.5, 2.0, 4.0] {
                assert!((phi_gbm(z, z, g).unwrap() - z).abs() < 1e-13 * z.max(1.0));
            }
        }
        // dominance: phi(z, z*) >= max(z, ((gamma-1)/gamma) z*)
        for g in [1.5, 2.0, 3.0] {
            for zs in [1.0, 2.0, 8.0] {
                let mut z = 0.05_f64;
                while z <= zs {
                    let p = phi_gbm(z, zs, g).unwrap();
                    assert!(p >= z - 1e-13);
                    assert!(p >= (g - 1.0) / g * zs - 1e-13);
                    z += 0.05;
                }
            }
        }
        assert!(phi_gbm(2.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn phi_bm_examples() {
        let v = phi_bm(0.0, std::f64::consts::LN_2, 1.0).unwrap();
        assert!((v - (std::f64::consts::LN_2 - 0.5)).abs() < EPS);
        for z in [-2.0, 0.0, 1.0] {
            assert!((phi_bm(z, z, 1.7).unwrap() - z).abs() < EPS);
        }
    }

    #[test]
    fn phi_killed_examples() {
        let pk = phi_killed(1.0, 2.0, 2.0).unwrap();
        assert!((pk.pre - 1.25).abs() < EPS);
        assert!((pk.jump + 0.25).abs() < EPS);
        assert!((pk.post() - 1.0).abs() < EPS);
        // post-kill value equals the killed index constant times z*
        for d in [1.5, 3.0, 6.0] {
            for (z, zs) in [(0.5, 2.0), (1.0, 1.0), (2.0, 3.0)] {
                let pk = phi_killed(z, zs, d).unwrap();
                let expect = index_constant_killed(d).unwrap() * zs;
                assert!((pk.post() - expect).abs() < 1e-13 * zs.max(1.0));
            }
        }
    }

    #[test]
    fn left_derivative_examples() {
        // exactly -1 at the boundary strike
        let (z, gamma) = (1.0, 2.0);
        let boundary_m = (gamma - 1.0) / gamma * z;
        assert_eq!(call_left_derivative(z, boundary_m, gamma).unwrap(), -1.0);
        assert_eq!(call_left_derivative(z, 0.5 * boundary_m, gamma).unwrap(), -1.0);
        // matches a central finite difference of the closed form above it
        for m in [0.8, 1.0, 1.7, 3.0] {
            let h = 1e-6;
            let fd = (american_call_gbm(z, m + h, gamma).unwrap()
                - american_call_gbm(z, m - h, gamma).unwrap())
                / (2.0 * h);
            let exact = call_left_derivative(z, m, gamma).unwrap();
            assert!((fd - exact).abs() < 1e-6, "m={m}: fd {fd} vs {exact}");
        }
    }

    #[test]
    fn duality_map_fields() {
        let d = duality_transform(1.0, 1.0, 2.0).unwrap();
        assert_eq!(d.scale, 1.0);
        assert_eq!(d.put_boundary, 0.5);
        assert_eq!(d.dual_underlying_start, 1.0);
        // closed-form check: scale * perpetual put on the reciprocal equals
        // the call. The dual put with spot s, strike k, exponent gamma is
        // (k - s*) (s/s*)^{1-gamma} above s* = ((gamma-1)/gamma) k.
        let gamma = 2.0;
        for (x, m) in [(1.0, 1.0), (1.0, 2.0), (2.0, 1.5), (0.7, 0.9)] {
            let map = duality_transform(x, m, gamma).unwrap();
            let (s, k) = (map.put_spot, map.put_strike);
            let sstar = (gamma - 1.0) / gamma * k;
            let put = if s > sstar {
                (k - sstar) * (s / sstar).powf(1.0 - gamma)
            } else {
                k - s
            };
            let call = american_call_gbm(x, m, gamma).unwrap();
            assert!(
                (map.scale * put - call).abs() < 1e-13 * call.max(1.0),
                "x={x}, m={m}: {} vs {call}",
                map.scale * put
            );
        }
    }

    #[test]
    fn additive_call_matches_tail_integral() {
        // independent oracle: integrate the exponential supremum tail
        let (mu, sigma, z0) = (0.5, 1.0, 0.0);
        let gamma = 2.0 * mu / (sigma * sigma);
        let b = 1.0 / gamma;
        for m in [0.0, 0.5, 1.0, 2.0] {
            let direct = american_call_bm(z0, m, gamma).unwrap();
            // E[(S - b - m)^+] with P[S >= u] = e^{-gamma (u - z0)}, u >= z0
            let lower = (m + b).max(z0);
            let integral = (-gamma * (lower - z0)).exp() / gamma;
            // when m + b < z0 the immediate-exercise branch applies
            let expect = if m + b >= z0 { integral } else { z0 - m };
            assert!((direct - expect).abs() < 1e-13, "m={m}");
        }
        assert!((american_call_bm(0.0, 1.0, 1.0).unwrap() - (-2.0_f64).exp()).abs() < EPS);
    }
}
