//! Piecewise-linear convex functions of a floor parameter.
//!
//! Every quantity the lattice solver propagates has the form
//! `f(m) = E[X v m]` for some terminal-type random variable `X`: constant
//! at `f(-inf) = E[X]` on the left, slope `P[X <= m]` rising to at most 1.
//! Such functions are closed under convex combination (tower property) and
//! pointwise maximum (stop-or-continue), which is all the backward
//! induction needs, so they are represented exactly as
//! `anchor + sum_k d_k * max(0, m - x_k)` with positive increments `d_k`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tol;

/// Exact piecewise-linear convex function, nondecreasing, constant on the
/// far left, with slope increments at finitely many breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PLConvex {
    anchor: f64,
    xs: Vec<f64>,
    ds: Vec<f64>,
}

fn merge_scale(x: f64) -> f64 {
    x.abs().max(1.0)
}

impl PLConvex {
    /// The constant function `m -> c`.
    pub fn constant(c: f64) -> Self {
        assert!(c.is_finite(), "constant must be finite");
        PLConvex {
            anchor: c,
            xs: Vec::new(),
            ds: Vec::new(),
        }
    }

    /// `m -> z v m`, the one-point case `E[z v m]`.
    pub fn hinge(z: f64) -> Self {
        assert!(z.is_finite(), "hinge level must be finite");
        PLConvex {
            anchor: z,
            xs: vec![z],
            ds: vec![1.0],
        }
    }

    /// Value as `m -> -inf`; equals `E[X]` for `f = E[X v m]`.
    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.xs
    }

    /// Where the function first starts to increase, if anywhere.
    pub fn first_breakpoint(&self) -> Option<f64> {
        self.xs.first().copied()
    }

    pub fn eval(&self, m: f64) -> f64 {
        let mut v = self.anchor;
        for (x, d) in self.xs.iter().zip(&self.ds) {
            if m > *x {
                v += d * (m - x);
            } else {
                break; // breakpoints are sorted
            }
        }
        v
    }

    /// Slope just left of `m`: `sum of increments at breakpoints < m`.
    pub fn left_slope_at(&self, m: f64) -> f64 {
        self.xs
            .iter()
            .zip(&self.ds)
            .take_while(|(x, _)| **x < m)
            .map(|(_, d)| d)
            .sum()
    }

    /// Slope just right of `m`: `sum of increments at breakpoints <= m`.
    pub fn right_slope_at(&self, m: f64) -> f64 {
        self.xs
            .iter()
            .zip(&self.ds)
            .take_while(|(x, _)| **x <= m)
            .map(|(_, d)| d)
            .sum()
    }

    /// Asymptotic slope; equals 1 exactly for a probability-complete
    /// `E[X v m]` and stays `<= 1` for convex combinations of those.
    pub fn total_slope(&self) -> f64 {
        self.ds.iter().sum()
    }

    /// Builds the canonical form from raw (breakpoint, increment) pairs:
    /// sorts, merges breakpoints closer than a relative 1e-12 (keeping the
    /// leftmost position), and drops vanishing increments. Tiny negative
    /// increments from float cancellation in `max` are clamped to zero.
    fn normalize(anchor: f64, mut pairs: Vec<(f64, f64)>) -> Self {
        pairs.retain(|&(_, d)| d != 0.0);
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite breakpoints"));
        let mut xs: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut ds: Vec<f64> = Vec::with_capacity(pairs.len());
        for (x, d) in pairs {
            debug_assert!(
                d > -1e-9 * merge_scale(x),
                "convexity violated: increment {d} at {x}"
            );
            let d = d.max(0.0);
            match xs.last() {
                Some(&last) if x - last <= tol::PL_MERGE_REL * merge_scale(last) => {
                    *ds.last_mut().expect("paired") += d;
                }
                _ => {
                    xs.push(x);
                    ds.push(d);
                }
            }
        }
        // merging may have produced zero totals; sweep them out
        let mut out_xs = Vec::with_capacity(xs.len());
        let mut out_ds = Vec::with_capacity(ds.len());
        for (x, d) in xs.into_iter().zip(ds) {
            if d > 0.0 {
                out_xs.push(x);
                out_ds.push(d);
            }
        }
        PLConvex {
            anchor,
            xs: out_xs,
            ds: out_ds,
        }
    }

    /// Convex (or merely conic) combination `sum_i w_i f_i`, `w_i > 0`.
    pub fn combine(parts: &[(f64, &PLConvex)]) -> Result<PLConvex> {
        if parts.is_empty() {
            return Err(Error::Lattice("combine of no parts".into()));
        }
        let mut anchor = 0.0;
        let mut pairs = Vec::new();
        for (w, f) in parts {
            if !(*w > 0.0) || !w.is_finite() {
                return Err(Error::param("weight", *w, "must be finite and > 0"));
            }
            anchor += w * f.anchor;
            for (x, d) in f.xs.iter().zip(&f.ds) {
                pairs.push((*x, w * d));
            }
        }
        Ok(PLConvex::normalize(anchor, pairs))
    }

    /// Pointwise maximum, again convex PL: knots are the union of
    /// breakpoints plus the crossing point inside any interval where the
    /// lead changes (including the unbounded last interval).
    pub fn max(&self, other: &Self) -> Self {
        let mut knots: Vec<f64> = Vec::with_capacity(self.xs.len() + other.xs.len());
        knots.extend_from_slice(&self.xs);
        knots.extend_from_slice(&other.xs);
        knots.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
        knots.dedup();

        let diff = |m: f64| self.eval(m) - other.eval(m);
        let mut cross: Vec<f64> = Vec::new();
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (da, db) = (diff(a), diff(b));
            if da * db < 0.0 {
                // affine difference on [a, b]; linear interpolation is exact
                cross.push(a + (b - a) * da / (da - db));
            }
        }
        if let Some(&last) = knots.last() {
            // beyond the last knot both functions are affine forever
            let d_last = diff(last);
            let slope_diff = self.total_slope() - other.total_slope();
            if d_last != 0.0 && slope_diff != 0.0 && d_last.signum() != slope_diff.signum() {
                let x = last - d_last / slope_diff;
                if x > last {
                    cross.push(x);
                }
            }
        }
        knots.extend(cross);
        knots.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
        knots.dedup();

        if knots.is_empty() {
            return PLConvex::constant(self.anchor.max(other.anchor));
        }

        // winner's slope on each interval to the right of a knot
        let anchor = self.anchor.max(other.anchor);
        let mut pairs = Vec::with_capacity(knots.len());
        let mut prev_slope = 0.0;
        for (i, &x) in knots.iter().enumerate() {
            let probe = match knots.get(i + 1) {
                Some(&next) => 0.5 * (x + next),
                None => x + merge_scale(x),
            };
            let (fs, gs) = (self.eval(probe), other.eval(probe));
            let slope = if fs > gs {
                self.right_slope_at(probe)
            } else if gs > fs {
                other.right_slope_at(probe)
            } else {
                self.right_slope_at(probe).max(other.right_slope_at(probe))
            };
            pairs.push((x, slope - prev_slope));
            prev_slope = slope;
        }
        PLConvex::normalize(anchor, pairs)
    }

    /// `s -> f(s v l)`: the argument is clamped from below at `l`. Exact:
    /// breakpoints at or left of `l` fold into the new anchor `f(l)`, the
    /// slope already accumulated there restarts as one increment at `l`.
    pub fn floor_compose(&self, l: f64) -> PLConvex {
        assert!(l.is_finite(), "floor level must be finite");
        let anchor = self.eval(l);
        let mut pairs = Vec::with_capacity(self.xs.len() + 1);
        let carried = self.right_slope_at(l);
        if carried > 0.0 {
            pairs.push((l, carried));
        }
        for (x, d) in self.xs.iter().zip(&self.ds) {
            if *x > l {
                pairs.push((*x, *d));
            }
        }
        PLConvex::normalize(anchor, pairs)
    }

    /// Functional equality within a relative tolerance, probed at anchors,
    /// every breakpoint of either side, interval midpoints and one point
    /// past the last breakpoint (which pins the asymptotic slopes).
    pub fn approx_eq(&self, other: &Self, rel_tol: f64) -> bool {
        let scale = self.anchor.abs().max(other.anchor.abs()).max(1.0);
        let close = |a: f64, b: f64| (a - b).abs() <= rel_tol * scale.max(a.abs()).max(b.abs());
        if !close(self.anchor, other.anchor) {
            return false;
        }
        let mut probes: Vec<f64> = Vec::new();
        probes.extend_from_slice(&self.xs);
        probes.extend_from_slice(&other.xs);
        probes.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
        probes.dedup();
        let mids: Vec<f64> = probes.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let beyond = probes.last().map(|&x| x + merge_scale(x));
        for m in probes.into_iter().chain(mids).chain(beyond) {
            if !close(self.eval(m), other.eval(m)) {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_and_hinge_shapes() {
        let c = PLConvex::constant(2.5);
        assert_eq!(c.eval(-10.0), 2.5);
        assert_eq!(c.eval(10.0), 2.5);
        assert_eq!(c.total_slope(), 0.0);
        assert_eq!(c.first_breakpoint(), None);

        let h = PLConvex::hinge(1.0);
        assert_eq!(h.eval(0.0), 1.0);
        assert_eq!(h.eval(1.0), 1.0);
        assert_eq!(h.eval(3.0), 3.0);
        assert_eq!(h.total_slope(), 1.0);
        assert_eq!(h.first_breakpoint(), Some(1.0));
        assert_eq!(h.left_slope_at(1.0), 0.0);
        assert_eq!(h.right_slope_at(1.0), 1.0);
    }

    #[test]
    fn combine_is_expectation() {
        // (2/3) hinge(1) + (1/3) hinge(4) = E[X v m], X uniform-ish atoms
        let f = PLConvex::combine(&[
            (2.0 / 3.0, &PLConvex::hinge(1.0)),
            (1.0 / 3.0, &PLConvex::hinge(4.0)),
        ])
        .unwrap();
        assert!((f.anchor() - 2.0).abs() < 1e-15);
        assert!((f.eval(2.0) - (2.0 / 3.0 * 2.0 + 1.0 / 3.0 * 4.0)).abs() < 1e-15);
        assert!((f.eval(10.0) - 10.0).abs() < 1e-14);
        assert!((f.total_slope() - 1.0).abs() < 1e-15);
        assert_eq!(f.breakpoints(), &[1.0, 4.0]);
        assert!(PLConvex::combine(&[]).is_err());
        assert!(PLConvex::combine(&[(0.0, &f)]).is_err());
    }

    #[test]
    fn merge_collapses_duplicate_breakpoints() {
        let a = PLConvex::hinge(1.0);
        let b = PLConvex::hinge(1.0 + 1e-15);
        let f = PLConvex::combine(&[(0.5, &a), (0.5, &b)]).unwrap();
        assert_eq!(f.breakpoints().len(), 1);
        assert!((f.total_slope() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn max_of_hinges_and_crossings() {
        // max(2 v m, 1 + 0.5 (m - 1)^+): affine pieces cross at m = 3
        let f = PLConvex::hinge(2.0);
        let g = PLConvex::combine(&[(0.5, &PLConvex::hinge(1.0)), (0.5, &PLConvex::constant(1.0))])
            .unwrap();
        let h = f.max(&g);
        for m in [-1.0, 0.0, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 10.0] {
            let expect = f.eval(m).max(g.eval(m));
            assert!(
                (h.eval(m) - expect).abs() < 1e-14,
                "m={m}: {} vs {expect}",
                h.eval(m)
            );
        }
        // crossing in the unbounded tail: steeper function wins eventually
        let flat = PLConvex::constant(5.0);
        let h2 = flat.max(&PLConvex::hinge(0.0));
        assert_eq!(h2.eval(4.0), 5.0);
        assert_eq!(h2.eval(5.0), 5.0);
        assert_eq!(h2.eval(7.0), 7.0);
        assert!((h2.eval(5.5) - 5.5).abs() < 1e-14);
    }

    #[test]
    fn floor_compose_clamps_exactly() {
        // (s v 3) v 2 = s v 3
        let f = PLConvex::hinge(2.0);
        let g = f.floor_compose(3.0);
        assert!(g.approx_eq(&PLConvex::hinge(3.0), 1e-15));
        // flooring below the first breakpoint changes nothing
        let mix = PLConvex::combine(&[(0.4, &PLConvex::hinge(1.0)), (0.6, &PLConvex::hinge(5.0))])
            .unwrap();
        assert!(mix.floor_compose(-10.0).approx_eq(&mix, 1e-15));
        // generic: pointwise agreement with eval(s v l)
        for l in [-1.0, 0.5, 1.0, 2.5, 6.0] {
            let fl = mix.floor_compose(l);
            for s in [-3.0_f64, 0.0, 0.9, 1.0, 2.0, 4.9, 5.0, 8.0] {
                let expect = mix.eval(s.max(l));
                assert!(
                    (fl.eval(s) - expect).abs() < 1e-14,
                    "l={l}, s={s}: {} vs {expect}",
                    fl.eval(s)
                );
            }
        }
    }

    #[test]
    fn max_idempotent_and_commutative() {
        let f = PLConvex::combine(&[(0.3, &PLConvex::hinge(0.5)), (0.7, &PLConvex::hinge(2.0))])
            .unwrap();
        let g = PLConvex::hinge(1.2);
        assert!(f.max(&f).approx_eq(&f, 1e-12));
        assert!(f.max(&g).approx_eq(&g.max(&f), 1e-12));
    }

    proptest! {
        #[test]
        fn random_combines_and_maxes_stay_convex(
            levels in proptest::collection::vec(-5.0_f64..5.0, 1..6),
            weights in proptest::collection::vec(0.05_f64..1.0, 1..6),
            probes in proptest::collection::vec(-8.0_f64..8.0, 8),
        ) {
            let n = levels.len().min(weights.len());
            let hinges: Vec<PLConvex> = levels[..n].iter().map(|&z| PLConvex::hinge(z)).collect();
            let total: f64 = weights[..n].iter().sum();
            let parts: Vec<(f64, &PLConvex)> = hinges
                .iter()
                .zip(&weights[..n])
                .map(|(h, w)| (w / total, h))
                .collect();
            let f = PLConvex::combine(&parts).unwrap();
            prop_assert!((f.total_slope() - 1.0).abs() < 1e-12);

            // f is the expectation of X v m for atoms at `levels`
            for &m in &probes {
                let direct: f64 = parts.iter().map(|(w, h)| w * h.eval(m)).sum();
                prop_assert!((f.eval(m) - direct).abs() < 1e-12);
            }

            let g = PLConvex::hinge(levels[0] + 0.3);
            let h = f.max(&g);
            for &m in &probes {
                let expect = f.eval(m).max(g.eval(m));
                prop_assert!((h.eval(m) - expect).abs() < 1e-10 * expect.abs().max(1.0));
            }
            // convexity at probe triples
            let mut ps = probes.clone();
            ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for w in ps.windows(3) {
                let (a, b, c) = (w[0], w[1], w[2]);
                if c - a > 1e-9 {
                    let lam = (b - a) / (c - a);
                    let chord = (1.0 - lam) * h.eval(a) + lam * h.eval(c);
                    prop_assert!(h.eval(b) <= chord + 1e-10 * chord.abs().max(1.0));
                }
            }
            // monotone
            for w in ps.windows(2) {
                prop_assert!(h.eval(w[1]) >= h.eval(w[0]) - 1e-12);
            }
        }
    }
}
