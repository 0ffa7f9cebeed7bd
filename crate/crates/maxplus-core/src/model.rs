//! Model specifications and the scalar constants derived from them.
//!
//! Three families of nonnegative supermartingales are supported:
//!
//! * geometric Brownian motion `dZ = -r Z dt + sigma Z dW` (multiplicative),
//! * drifted Brownian motion `dZ = -mu dt + sigma dW` (additive),
//! * exponentials of spectrally negative Levy processes `Z = x0 * exp(X)`.
//!
//! The constants computed here feed every closed form downstream: `gamma`
//! is the tail exponent of the running supremum on the infinite horizon,
//! `delta` its analogue under an independent exponential kill time, and
//! `gamma_levy_root` the positive root of the Laplace exponent that plays
//! the same role for jump diffusions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tol;

/// Geometric Brownian motion `dZ = -r Z dt + sigma Z dW`, `Z_0 = x0`.
///
/// `e^{rt} Z_t` is a martingale; `Z` itself is a supermartingale, strictly
/// vanishing at infinity when `r > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmSpec {
    pub r: f64,
    pub sigma: f64,
    pub x0: f64,
}

impl GbmSpec {
    pub fn new(r: f64, sigma: f64, x0: f64) -> Result<Self> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::param("r", r, "must be finite and >= 0"));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::param("sigma", sigma, "must be finite and > 0"));
        }
        if !(x0 > 0.0) || !x0.is_finite() {
            return Err(Error::param("x0", x0, "must be finite and > 0"));
        }
        Ok(GbmSpec { r, sigma, x0 })
    }
}

/// Drifted Brownian motion `dZ = -mu dt + sigma dW`, `Z_0 = z0` (additive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftedBmSpec {
    pub mu: f64,
    pub sigma: f64,
    pub z0: f64,
}

impl DriftedBmSpec {
    pub fn new(mu: f64, sigma: f64, z0: f64) -> Result<Self> {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::param("mu", mu, "must be finite and >= 0"));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::param("sigma", sigma, "must be finite and > 0"));
        }
        if !z0.is_finite() {
            return Err(Error::param("z0", z0, "must be finite"));
        }
        Ok(DriftedBmSpec { mu, sigma, z0 })
    }

    /// Supremum tail exponent `2 mu / sigma^2`: the all-time supremum of the
    /// zero-start process is exponential with this rate.
    pub fn gamma_additive(&self) -> Result<f64> {
        if self.mu == 0.0 {
            return Err(Error::Domain(
                "additive supremum law degenerates at mu = 0 (infinite mean)".into(),
            ));
        }
        Ok(2.0 * self.mu / (self.sigma * self.sigma))
    }

    /// Index normalization `b = E[sup (sigma W - mu t)] = sigma^2 / (2 mu)`.
    pub fn index_constant(&self) -> Result<f64> {
        Ok(1.0 / self.gamma_additive()?)
    }
}

/// Evaluation horizon for prices and simulations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Horizon {
    /// Perpetual: the process runs forever and vanishes at infinity.
    Infinite,
    /// Killed at an independent exponential time with rate `beta > 0`.
    ExponentialKill { beta: f64 },
    /// Deterministic horizon `t` observed on `n` steps (lattice setting).
    FixedSteps { t: f64, n: usize },
}

impl Horizon {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Horizon::Infinite => Ok(()),
            Horizon::ExponentialKill { beta } => {
                if !(beta > 0.0) || !beta.is_finite() {
                    return Err(Error::param("beta", beta, "must be finite and > 0"));
                }
                Ok(())
            }
            Horizon::FixedSteps { t, n } => {
                if !(t > 0.0) || !t.is_finite() {
                    return Err(Error::param("t", t, "must be finite and > 0"));
                }
                if n == 0 {
                    return Err(Error::param("n", 0.0, "must be >= 1"));
                }
                Ok(())
            }
        }
    }
}

/// Supremum tail exponent for GBM on the infinite horizon:
/// `gamma = 1 + 2 r / sigma^2`, so `P[sup Z >= m] = (x0/m)^gamma` above the
/// start. Equals 1 when `r = 0` (null-recurrent boundary case).
pub fn gamma_of(spec: &GbmSpec) -> f64 {
    1.0 + 2.0 * spec.r / (spec.sigma * spec.sigma)
}

/// Supremum tail exponent for GBM killed at rate `beta`:
/// the root larger than `gamma` of `y^2 - gamma*y - 2 beta / sigma^2 = 0`,
/// i.e. `delta = (gamma + sqrt(gamma^2 + 8 beta / sigma^2)) / 2`.
///
/// `beta = 0` reduces to `gamma`, which is only usable when `gamma > 1`.
pub fn delta_of(spec: &GbmSpec, beta: f64) -> Result<f64> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::param("beta", beta, "must be finite and >= 0"));
    }
    let gamma = gamma_of(spec);
    if beta == 0.0 {
        if gamma <= 1.0 {
            return Err(Error::Domain(format!(
                "delta with beta = 0 requires gamma > 1, got gamma = {gamma}"
            )));
        }
        return Ok(gamma);
    }
    let s2 = spec.sigma * spec.sigma;
    Ok(0.5 * (gamma + (gamma * gamma + 8.0 * beta / s2).sqrt()))
}

/// Jump-size law of one compound Poisson component; all mass on `(-inf, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum JumpLaw {
    /// A single atom at `y < 0`.
    PointMass { y: f64 },
    /// Density `theta * e^{theta y}` on `(-inf, 0)`, mean `-1/theta`.
    NegExponential { theta: f64 },
}

impl JumpLaw {
    fn validate(&self) -> Result<()> {
        match *self {
            JumpLaw::PointMass { y } => {
                if !(y < 0.0) || !y.is_finite() {
                    return Err(Error::param("y", y, "jump atom must be finite and < 0"));
                }
            }
            JumpLaw::NegExponential { theta } => {
                if !(theta > 0.0) || !theta.is_finite() {
                    return Err(Error::param("theta", theta, "must be finite and > 0"));
                }
            }
        }
        Ok(())
    }

    /// `E[e^{lam Y}]`; finite for every `lam >= 0` because all jump mass
    /// sits on the negative axis.
    fn mgf(&self, lam: f64) -> Result<f64> {
        match *self {
            JumpLaw::PointMass { y } => Ok((lam * y).exp()),
            JumpLaw::NegExponential { theta } => {
                if theta + lam <= 0.0 {
                    return Err(Error::Domain(format!(
                        "exponential jump law with theta = {theta}: moment at \
                         lambda = {lam} diverges"
                    )));
                }
                Ok(theta / (theta + lam))
            }
        }
    }

    /// `E[Y 1{-1 < Y < 0}]`, the small-jump compensator mass.
    fn small_jump_mean(&self) -> f64 {
        match *self {
            JumpLaw::PointMass { y } => {
                if y > -1.0 {
                    y
                } else {
                    0.0
                }
            }
            JumpLaw::NegExponential { theta } => {
                // int_{-1}^0 y theta e^{theta y} dy
                let e = (-theta).exp();
                e - (1.0 - e) / theta
            }
        }
    }
}

/// One compound Poisson jump component: intensity `rate`, size law `law`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpComponent {
    pub rate: f64,
    pub law: JumpLaw,
}

/// Spectrally negative jump diffusion `X_t` with
/// `kappa(lam) = a*lam + sigma^2 lam^2 / 2
///             + sum_j rate_j * (E[e^{lam Y_j}] - 1 - lam E[Y_j 1{-1<Y_j<0}])`
/// and price process `Z = x0 * e^X`. The martingale condition used for
/// pricing is `kappa(1) = -r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevySpec {
    pub a: f64,
    pub sigma: f64,
    pub jumps: Vec<JumpComponent>,
    pub r: f64,
    pub x0: f64,
}

impl LevySpec {
    pub fn new(a: f64, sigma: f64, jumps: Vec<JumpComponent>, r: f64, x0: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::param("a", a, "must be finite"));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::param("sigma", sigma, "must be finite and >= 0"));
        }
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::param("r", r, "must be finite and >= 0"));
        }
        if !(x0 > 0.0) || !x0.is_finite() {
            return Err(Error::param("x0", x0, "must be finite and > 0"));
        }
        for j in &jumps {
            if !(j.rate > 0.0) || !j.rate.is_finite() {
                return Err(Error::param("rate", j.rate, "must be finite and > 0"));
            }
            j.law.validate()?;
        }
        let spec = LevySpec {
            a,
            sigma,
            jumps,
            r,
            x0,
        };
        if spec.sigma == 0.0 && spec.jumps.is_empty() {
            return Err(Error::Domain(
                "degenerate Levy spec: no diffusion and no jumps".into(),
            ));
        }
        Ok(spec)
    }

    /// Builds a spec whose drift `a` is solved from `kappa(1) = -r`.
    pub fn with_martingale_drift(
        sigma: f64,
        jumps: Vec<JumpComponent>,
        r: f64,
        x0: f64,
    ) -> Result<Self> {
        let probe = LevySpec::new(0.0, sigma, jumps, r, x0)?;
        // kappa(1) = a + jumpless_part(1), so a = -r - jumpless_part(1).
        let at_one = probe.laplace_exponent(1.0)?;
        LevySpec::new(-r - at_one, sigma, probe.jumps, r, x0)
    }

    /// Closed-form Laplace exponent `kappa(lam)` for `lam >= 0`.
    pub fn laplace_exponent(&self, lam: f64) -> Result<f64> {
        if !(lam >= 0.0) || !lam.is_finite() {
            return Err(Error::param("lam", lam, "must be finite and >= 0"));
        }
        let mut k = self.a * lam + 0.5 * self.sigma * self.sigma * lam * lam;
        for j in &self.jumps {
            k += j.rate * (j.law.mgf(lam)? - 1.0 - lam * j.law.small_jump_mean());
        }
        Ok(k)
    }

    /// Derivative `kappa'(lam)`, used for root certificates.
    pub fn laplace_exponent_deriv(&self, lam: f64) -> Result<f64> {
        let mut k = self.a + self.sigma * self.sigma * lam;
        for j in &self.jumps {
            let dm = match j.law {
                JumpLaw::PointMass { y } => y * (lam * y).exp(),
                JumpLaw::NegExponential { theta } => {
                    if theta + lam <= 0.0 {
                        return Err(Error::Domain(format!(
                            "exponential jump law with theta = {theta}: moment at \
                             lambda = {lam} diverges"
                        )));
                    }
                    -theta / ((theta + lam) * (theta + lam))
                }
            };
            k += j.rate * (dm - j.law.small_jump_mean());
        }
        Ok(k)
    }

    /// Total compensator drift shift `sum_j rate_j E[Y_j 1{-1<Y_j<0}]`;
    /// simulation uses effective drift `a - this`.
    pub fn compensator_shift(&self) -> f64 {
        self.jumps
            .iter()
            .map(|j| j.rate * j.law.small_jump_mean())
            .sum()
    }

    /// Checks `|kappa(1) + r| <= 1e-10`; the residual is reported on failure.
    pub fn check_martingale_condition(&self) -> Result<()> {
        let residual = (self.laplace_exponent(1.0)? + self.r).abs();
        if residual > tol::MARTINGALE_COND_ABS {
            return Err(Error::Domain(format!(
                "martingale condition kappa(1) = -r violated: residual {residual:.3e}"
            )));
        }
        Ok(())
    }
}

/// Positive root `> 1` of `kappa`, the supremum tail exponent of `Z = x0 e^X`.
///
/// Requires the martingale condition (`kappa(1) = -r < 0`), which together
/// with convexity of `kappa`, `kappa(0) = 0`, and the diffusion/drift growth
/// guarantees exactly one root above 1. Bracketing starts from
/// `[1 + 1e-9, 2]` and doubles the right endpoint up to 1e6.
pub fn gamma_levy_root(spec: &LevySpec) -> Result<f64> {
    if !(spec.r > 0.0) {
        return Err(Error::Domain(
            "gamma_levy_root requires r > 0 so that kappa(1) = -r < 0".into(),
        ));
    }
    spec.check_martingale_condition()?;

    let kappa = |lam: f64| spec.laplace_exponent(lam);

    let mut lo = 1.0 + 1e-9;
    let mut k_lo = kappa(lo)?;
    if k_lo == 0.0 {
        return certify_root(spec, lo);
    }
    if k_lo > 0.0 {
        // Root is pinched between 1 (kappa = -r < 0) and lo.
        lo = 1.0;
        k_lo = -spec.r;
    }
    let mut hi = 2.0;
    const BRACKET_CEILING: f64 = 1e6;
    let mut k_hi = kappa(hi)?;
    loop {
        if k_hi == 0.0 {
            return certify_root(spec, hi);
        }
        if k_hi > 0.0 {
            break;
        }
        if hi >= BRACKET_CEILING {
            return Err(Error::RootFinding(format!(
                "no sign change of kappa up to lambda = {BRACKET_CEILING}"
            )));
        }
        lo = hi;
        k_lo = k_hi;
        hi = (hi * 2.0).min(BRACKET_CEILING);
        k_hi = kappa(hi)?;
    }
    debug_assert!(k_lo < 0.0 && k_hi > 0.0);

    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // interval at float resolution
        }
        let k_mid = kappa(mid)?;
        if k_mid == 0.0 {
            return certify_root(spec, mid);
        }
        if k_mid < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    certify_root(spec, 0.5 * (lo + hi))
}

fn certify_root(spec: &LevySpec, root: f64) -> Result<f64> {
    let k = spec.laplace_exponent(root)?;
    let slope = spec
        .laplace_exponent_deriv(root)
        .map(f64::abs)
        .unwrap_or(1.0);
    let scale = (slope * root.abs()).max(1.0);
    if k.abs() > tol::ROOT_CERT_REL * scale {
        return Err(Error::RootFinding(format!(
            "bisection stalled: |kappa({root})| = {:.3e} above certificate {:.3e}",
            k.abs(),
            tol::ROOT_CERT_REL * scale
        )));
    }
    Ok(root)
}
