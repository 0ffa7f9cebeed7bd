//! Central tolerance constants.
//!
//! Every tolerance used by a verification routine lives here with its
//! rationale, so test expectations and library behaviour cannot drift apart.

/// Relative tolerance for exact lattice identities (representation,
/// martingale, flat-off, terminal). Backward summation over a depth-16 tree
/// accumulates at most a few hundred rounding steps, each 2^-53 relative,
/// so 1e-10 leaves three orders of magnitude of slack while still catching
/// any real defect.
pub const LATTICE_IDENTITY_REL: f64 = 1e-10;

/// Relative tolerance for merging piecewise-linear breakpoints. Breakpoints
/// produced by the same payoff values collide exactly; 1e-12 only merges
/// float-level duplicates and never distinct kinks of a sane tree.
pub const PL_MERGE_REL: f64 = 1e-12;

/// Absolute tolerance for comparing a piecewise-linear left slope with an
/// exactly enumerated conditional probability. Both sides are short sums of
/// identical products of transition probabilities, so they agree to machine
/// precision; 1e-12 is pure slack.
pub const DERIVATIVE_ABS: f64 = 1e-12;

/// Contact detection on the lattice: |f(m) - z| below this relative level
/// counts as equality of the Snell function and the payoff.
pub const CONTACT_REL: f64 = 1e-12;

/// Certificate bound for the positive root of the Laplace exponent:
/// |kappa(root)| <= ROOT_CERT_REL * scale, with scale the local derivative
/// magnitude. Bisection to machine precision achieves ~1e-15.
pub const ROOT_CERT_REL: f64 = 1e-12;

/// Tolerance on the martingale condition kappa(1) = -r.
pub const MARTINGALE_COND_ABS: f64 = 1e-10;

/// Bisection target for the tangency point of a concave envelope.
pub const ENVELOPE_ABS: f64 = 1e-12;

/// Adaptive quadrature target for reconstructing u from v.
pub const QUADRATURE_ABS: f64 = 1e-10;

/// Round-trip tolerance v -> u -> v for the inverse construction; dominated
/// by quadrature error, two orders above QUADRATURE_ABS.
pub const ROUNDTRIP_ABS: f64 = 1e-8;

/// Monte Carlo agreement is always judged at this many combined standard
/// errors; combined means sqrt(se_a^2 + se_b^2) for two noisy estimates.
pub const SE_FACTOR: f64 = 3.0;

/// Exact closed-form cross-identities (scaling, smooth fit, map equality)
/// are pure float algebra; 1e-12 absorbs a handful of ulps.
pub const CLOSED_FORM_ABS: f64 = 1e-12;

/// Row sums of transition probabilities must match 1 at this tolerance;
/// looser than float precision because JSON inputs are human-written.
pub const PROB_ROW_SUM_ABS: f64 = 1e-9;

/// Exact tree duality: call minus scaled put after reweighted backward
/// induction, relative to the root value.
pub const DUALITY_TREE_REL: f64 = 1e-10;

/// Hard cap on enumerated path prefixes (full-mode lattices).
pub const MAX_PREFIXES: usize = 1 << 21;

