//! The max-plus decomposition of a lattice supermartingale, computed
//! exactly and verified against its defining properties.
//!
//! Every node `v` carries an index `L_v` (the first breakpoint of the
//! floored Snell envelope). Along a path, `L*` is the running maximum of
//! the indices, and the decomposition martingale is
//! `M_k = E[ L*_{0,N} v Z_N | F_k ]`. `M` is path-dependent through
//! `L*_{0,k}`, so it lives on the tree of path prefixes rather than on the
//! lattice nodes. Two facts make it computable exactly:
//!
//! * per node, `m -> E[ L*_{k,N} v Z_N v m | v ]` is piecewise-linear
//!   convex and obeys `g_v = (sum_c p_c g_c) composed with (. v L_v)`,
//!   with `g_v` anchored at `Z_v` (the representation property);
//! * on a prefix with running index maximum `l*`, `M = g_v(l*)`.
//!
//! The same expectation is recomputed by direct enumeration over terminal
//! extensions, so the piecewise-linear route never certifies itself.

use serde::Serialize;

use super::plconvex::PLConvex;
use super::Lattice;
use crate::error::{Error, Result};
use crate::tol;

/// All path prefixes of a lattice, root first, in layer order.
#[derive(Debug, Clone)]
pub struct PrefixTree {
    /// Lattice node the prefix ends at.
    pub node: Vec<usize>,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    /// One-step probability from the parent prefix (1 for the root).
    pub cond_prob: Vec<f64>,
    /// Unconditional probability of the prefix.
    pub prob: Vec<f64>,
}

impl PrefixTree {
    pub fn enumerate(lat: &Lattice) -> Result<PrefixTree> {
        let mut node = vec![lat.root];
        let mut parent = vec![None];
        let mut children: Vec<Vec<usize>> = vec![Vec::new()];
        let mut cond_prob = vec![1.0];
        let mut prob = vec![1.0];
        let mut cursor = 0;
        while cursor < node.len() {
            let v = node[cursor];
            for &(c, p) in &lat.next[v] {
                if node.len() >= tol::MAX_PREFIXES {
                    return Err(Error::Lattice(format!(
                        "path-prefix enumeration exceeds {} entries; \
                         the decomposition is exact only on lattices this small",
                        tol::MAX_PREFIXES
                    )));
                }
                let id = node.len();
                node.push(c);
                parent.push(Some(cursor));
                children.push(Vec::new());
                cond_prob.push(p);
                prob.push(prob[cursor] * p);
                children[cursor].push(id);
            }
            cursor += 1;
        }
        Ok(PrefixTree {
            node,
            parent,
            children,
            cond_prob,
            prob,
        })
    }

    pub fn len(&self) -> usize {
        self.node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node.is_empty()
    }

    pub fn is_terminal(&self, i: usize) -> bool {
        self.children[i].is_empty()
    }
}

/// The decomposition of a supermartingale lattice: node-level indices and
/// carried-sup functions, and per-prefix processes.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub tree: PrefixTree,
    /// Index per lattice node.
    pub l_node: Vec<f64>,
    /// `g_v(m) = E[ L*_{k,N} v Z_N v m | v ]` per lattice node.
    pub g: Vec<PLConvex>,
    /// State at the prefix end.
    pub z: Vec<f64>,
    /// Index at the prefix end.
    pub l: Vec<f64>,
    /// Running maximum of the index along the prefix.
    pub lstar: Vec<f64>,
    /// Decomposition martingale `E[L*_{0,N} v Z_N | prefix]`.
    pub mplus: Vec<f64>,
    /// Predictable increasing part `A_k = sum (Z_j - E[Z_{j+1}|F_j])`.
    pub a: Vec<f64>,
    /// Additive-decomposition martingale `Z + A`.
    pub ma: Vec<f64>,
}

impl Decomposition {
    pub fn root_envelope(&self) -> &PLConvex {
        &self.g[0]
    }

    /// `sup_tau E[(Z_tau - m)^+]` read off the root carried-sup function.
    pub fn call_value(&self, m: f64) -> f64 {
        let root = self.tree.node[0];
        self.g[root].eval(m) - m
    }

    /// Terminal distribution of a per-prefix array as `(value, prob)`
    /// atoms, unmerged.
    pub fn terminal_distribution<'a>(&self, field: &'a [f64]) -> Vec<(f64, f64)> {
        (0..self.tree.len())
            .filter(|&i| self.tree.is_terminal(i))
            .map(|i| (field[i], self.tree.prob[i]))
            .collect()
    }
}

/// Computes the exact decomposition. Fails on non-supermartingale input,
/// on trees bigger than the enumeration cap, and on malformed envelopes.
pub fn decompose(lat: &Lattice) -> Result<Decomposition> {
    lat.check_supermartingale()?;
    let f = lat.snell_pl();
    let l_node: Vec<f64> = lat
        .indices_from(&f)?
        .into_iter()
        .map(|l| {
            l.ok_or_else(|| {
                Error::Lattice("supermartingale node without a finite index".into())
            })
        })
        .collect::<Result<_>>()?;

    // carried-sup functions, backward
    let mut g: Vec<Option<PLConvex>> = vec![None; lat.node_count()];
    for k in (0..=lat.steps).rev() {
        for &v in &lat.layers[k] {
            let val = if lat.next[v].is_empty() {
                PLConvex::hinge(lat.z[v])
            } else {
                let parts: Vec<(f64, &PLConvex)> = lat.next[v]
                    .iter()
                    .map(|(c, p)| (*p, g[*c].as_ref().expect("later layer solved")))
                    .collect();
                PLConvex::combine(&parts)
                    .expect("positive probabilities")
                    .floor_compose(l_node[v])
            };
            g[v] = Some(val);
        }
    }
    let g: Vec<PLConvex> = g.into_iter().map(|v| v.expect("all layers solved")).collect();

    let tree = PrefixTree::enumerate(lat)?;
    let n = tree.len();
    let mut z = vec![0.0; n];
    let mut l = vec![0.0; n];
    let mut lstar = vec![0.0; n];
    let mut a = vec![0.0; n];
    for i in 0..n {
        let v = tree.node[i];
        z[i] = lat.z[v];
        l[i] = l_node[v];
        match tree.parent[i] {
            None => {
                lstar[i] = l[i];
                a[i] = 0.0;
            }
            Some(pi) => {
                lstar[i] = lstar[pi].max(l[i]);
                let pv = tree.node[pi];
                let drop = lat.z[pv]
                    - lat
                        .conditional_mean(pv)
                        .expect("parent prefix ends at an interior node");
                a[i] = a[pi] + drop;
            }
        }
    }
    let mplus: Vec<f64> = (0..n).map(|i| g[tree.node[i]].eval(lstar[i])).collect();
    let ma: Vec<f64> = (0..n).map(|i| z[i] + a[i]).collect();

    Ok(Decomposition {
        tree,
        l_node,
        g,
        z,
        l,
        lstar,
        mplus,
        a,
        ma,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: &'static str, residual: f64, tolerance: f64) -> Check {
        Check {
            name,
            residual,
            tolerance,
            pass: residual <= tolerance,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn worst(&self) -> Option<&Check> {
        self.checks
            .iter()
            .max_by(|a, b| {
                (a.residual / a.tolerance)
                    .partial_cmp(&(b.residual / b.tolerance))
                    .expect("finite residuals")
            })
    }
}

/// Largest deviation between two piecewise-linear convex functions over
/// their joint knots, knot midpoints and one probe past the last knot.
fn pl_max_diff(a: &PLConvex, b: &PLConvex) -> f64 {
    let mut probes: Vec<f64> = a
        .breakpoints()
        .iter()
        .chain(b.breakpoints())
        .copied()
        .collect();
    probes.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));
    let mut worst = (a.anchor() - b.anchor()).abs();
    let mut extended = Vec::with_capacity(2 * probes.len() + 2);
    for w in probes.windows(2) {
        extended.push(w[0]);
        extended.push(0.5 * (w[0] + w[1]));
    }
    if let (Some(&first), Some(&last)) = (probes.first(), probes.last()) {
        extended.push(first - 1.0);
        extended.push(last);
        extended.push(last + 1.0 + last.abs());
    }
    for m in extended {
        worst = worst.max((a.eval(m) - b.eval(m)).abs());
    }
    worst
}

/// Verifies the decomposition against its defining properties. Each check
/// is a residual in exact arithmetic, so the tolerances only absorb float
/// rounding:
///
/// * `representation`: `g_v` is anchored at `Z_v` at every node;
/// * `envelope-identity`: `g_v` equals the floored Snell envelope `f_v`
///   as a function, everywhere (two independently built recursions);
/// * `dual-route`: per-prefix `M` agrees with a direct enumeration of
///   `E[L*_{0,N} v Z_N | prefix]` over terminal extensions;
/// * `martingale`: one-step conditional means of `M` close;
/// * `dominance`: `M >= Z` on every prefix;
/// * `flat-off`: `M = Z` on every prefix where the running index maximum
///   is attained at the current node (the set that carries all increase
///   of `L*`, including the root);
/// * `terminal`: `M_N = L*_{0,N} v Z_N`;
/// * `index-below-state`: `L_v <= Z_v` at every node.
pub fn verify(lat: &Lattice, dec: &Decomposition) -> VerificationReport {
    let tree = &dec.tree;
    let n = tree.len();
    let scale = |x: f64| x.abs().max(1.0);

    let mut representation = 0.0_f64;
    for v in 0..lat.node_count() {
        representation =
            representation.max((dec.g[v].anchor() - lat.z[v]).abs() / scale(lat.z[v]));
    }

    let f = lat.snell_pl();
    let mut envelope = 0.0_f64;
    for v in 0..lat.node_count() {
        envelope = envelope.max(pl_max_diff(&dec.g[v], &f[v]) / scale(lat.z[v]));
    }

    // direct enumeration: backward sweep over prefixes, using only terminal
    // data and transition probabilities
    let mut enumerated = vec![0.0; n];
    for i in (0..n).rev() {
        enumerated[i] = if tree.is_terminal(i) {
            dec.lstar[i].max(dec.z[i])
        } else {
            tree.children[i]
                .iter()
                .map(|&c| tree.cond_prob[c] * enumerated[c])
                .sum()
        };
    }
    let mut dual_route = 0.0_f64;
    for i in 0..n {
        dual_route = dual_route.max((dec.mplus[i] - enumerated[i]).abs() / scale(enumerated[i]));
    }

    let mut martingale = 0.0_f64;
    let mut dominance = 0.0_f64;
    let mut flat_off = 0.0_f64;
    let mut terminal = 0.0_f64;
    for i in 0..n {
        if !tree.is_terminal(i) {
            let e: f64 = tree.children[i]
                .iter()
                .map(|&c| tree.cond_prob[c] * dec.mplus[c])
                .sum();
            martingale = martingale.max((e - dec.mplus[i]).abs() / scale(dec.mplus[i]));
        } else {
            let want = dec.lstar[i].max(dec.z[i]);
            terminal = terminal.max((dec.mplus[i] - want).abs() / scale(want));
        }
        dominance = dominance.max((dec.z[i] - dec.mplus[i]) / scale(dec.z[i]));
        if dec.l[i] >= dec.lstar[i] {
            flat_off = flat_off.max((dec.mplus[i] - dec.z[i]).abs() / scale(dec.z[i]));
        }
    }
    dominance = dominance.max(0.0);

    let mut index_below = 0.0_f64;
    for v in 0..lat.node_count() {
        index_below = index_below.max((dec.l_node[v] - lat.z[v]) / scale(lat.z[v]));
    }
    index_below = index_below.max(0.0);

    let t = tol::LATTICE_IDENTITY_REL;
    VerificationReport {
        checks: vec![
            Check::new("representation", representation, t),
            Check::new("envelope-identity", envelope, t),
            Check::new("dual-route", dual_route, t),
            Check::new("martingale", martingale, t),
            Check::new("dominance", dominance, t),
            Check::new("flat-off", flat_off, t),
            Check::new("terminal", terminal, t),
            Check::new("index-below-state", index_below, t),
        ],
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeCheck {
    pub m: f64,
    /// Left slope of the root envelope at `m`.
    pub slope: f64,
    /// `P[L*_{0,N} v Z_N < m]` from the terminal distribution.
    pub prob_below: f64,
    pub residual: f64,
    pub pass: bool,
}

/// The left derivative of `m -> E[L*_{0,N} v Z_N v m]` is the strictly-
/// below probability of the terminal variable; checks it at one floor.
pub fn derivative_check(dec: &Decomposition, m: f64) -> DerivativeCheck {
    let root = dec.tree.node[0];
    let slope = dec.g[root].left_slope_at(m);
    let prob_below: f64 = (0..dec.tree.len())
        .filter(|&i| dec.tree.is_terminal(i))
        .filter(|&i| dec.lstar[i].max(dec.z[i]) < m)
        .map(|i| dec.tree.prob[i])
        .sum();
    let residual = (slope - prob_below).abs();
    DerivativeCheck {
        m,
        slope,
        prob_below,
        residual,
        pass: residual <= tol::DERIVATIVE_ABS,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExactCxReport {
    /// Floors probed, pooled from both terminal supports.
    pub m_grid: Vec<f64>,
    /// `E[(Z+A)_N v m] - E[M_N v m]` per floor; convex-order dominance
    /// of the additive martingale means every entry is nonnegative.
    pub gaps: Vec<f64>,
    pub min_gap: f64,
    pub max_gap: f64,
    /// Dominance holds strictly at some floor.
    pub strict: bool,
    /// Both martingales start from the same value; the residual between
    /// the two terminal means.
    pub mean_residual: f64,
    pub var_mplus: f64,
    pub var_ma: f64,
    pub dominated: bool,
}

/// Exact convex-order comparison of the decomposition martingale against
/// the additive-decomposition martingale `Z + A` at the terminal layer.
/// Both have mean `Z_0`; the decomposition one must be smaller in convex
/// order (`E[M v m] <= E[(Z+A) v m]` for every floor).
pub fn convex_order_exact(dec: &Decomposition, grid_points: usize) -> ExactCxReport {
    let mp = dec.terminal_distribution(&dec.mplus);
    let ma = dec.terminal_distribution(&dec.ma);
    let mean = |d: &[(f64, f64)]| d.iter().map(|(x, p)| x * p).sum::<f64>();
    let var = |d: &[(f64, f64)]| {
        let m = mean(d);
        d.iter().map(|(x, p)| p * (x - m) * (x - m)).sum::<f64>()
    };
    let e_floor = |d: &[(f64, f64)], m: f64| d.iter().map(|(x, p)| p * x.max(m)).sum::<f64>();

    let mut pooled: Vec<f64> = mp.iter().chain(&ma).map(|(x, _)| *x).collect();
    pooled.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let lo = pooled.first().copied().unwrap_or(0.0);
    let hi = pooled.last().copied().unwrap_or(1.0);
    let points = grid_points.max(2);
    // probe slightly past both ends so the grid sees the flat and linear tails
    let span = (hi - lo).max(1.0);
    let m_grid: Vec<f64> = (0..points)
        .map(|i| lo - 0.05 * span + 1.1 * span * i as f64 / (points - 1) as f64)
        .collect();

    let mut gaps = Vec::with_capacity(m_grid.len());
    for &m in &m_grid {
        gaps.push(e_floor(&ma, m) - e_floor(&mp, m));
    }
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let max_gap = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean_mp = mean(&mp);
    let mean_ma = mean(&ma);
    let scale = mean_mp.abs().max(1.0);
    let tol_gap = tol::LATTICE_IDENTITY_REL * scale;
    ExactCxReport {
        m_grid,
        min_gap,
        max_gap,
        strict: max_gap > tol_gap,
        mean_residual: (mean_mp - mean_ma).abs() / scale,
        var_mplus: var(&mp),
        var_ma: var(&ma),
        dominated: min_gap >= -tol_gap,
        gaps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GbmSpec;

    fn one_step_dyadic() -> Lattice {
        Lattice::from_json(
            r#"{
                "steps": 1,
                "nodes": [
                    {"id": "r", "t": 0, "z": 0.875,
                     "transitions": [{"to": "u", "p": 0.25}, {"to": "d", "p": 0.75}]},
                    {"id": "u", "t": 1, "z": 2.0},
                    {"id": "d", "t": 1, "z": 0.0}
                ]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn one_step_by_hand() {
        let lat = one_step_dyadic();
        let dec = decompose(&lat).unwrap();
        // indices: kink of the root envelope at 1/2, terminal states
        assert_eq!(dec.l_node, vec![0.5, 2.0, 0.0]);
        // prefixes in layer order: root, up, down
        assert_eq!(dec.tree.len(), 3);
        assert_eq!(dec.lstar, vec![0.5, 2.0, 0.5]);
        // M: root g(0.5) = 0.875 (flat at the start), up 2, down 0.5 v 0
        assert_eq!(dec.mplus, vec![0.875, 2.0, 0.5]);
        // exact one-step martingale: 1/4 * 2 + 3/4 * 1/2 = 7/8
        assert_eq!(0.25 * 2.0 + 0.75 * 0.5, 0.875);
        // additive route: A jumps by z - E[next] = 7/8 - 1/2 = 3/8
        assert_eq!(dec.a, vec![0.0, 0.375, 0.375]);
        assert_eq!(dec.ma, vec![0.875, 2.375, 0.375]);
        let rep = verify(&lat, &dec);
        assert!(rep.pass(), "{:?}", rep.worst());

        // derivative of E[L* v Z_N v m] at hand-picked floors
        for (m, want_slope) in [(0.3, 0.0), (1.0, 0.75), (2.0, 0.75), (3.0, 1.0)] {
            let d = derivative_check(&dec, m);
            assert!(d.pass, "{d:?}");
            assert_eq!(d.slope, want_slope, "m={m}");
        }

        // convex order: same mean, strictly smaller spread
        let cx = convex_order_exact(&dec, 50);
        assert!(cx.dominated && cx.strict, "{cx:?}");
        assert!(cx.mean_residual < 1e-15);
        // hand variances: E X^2 - (7/8)^2
        assert!((cx.var_mplus - (0.25 * 4.0 + 0.75 * 0.25 - 0.765625)).abs() < 1e-15);
        assert!((cx.var_ma - (0.25 * 2.375_f64.powi(2) + 0.75 * 0.375_f64.powi(2) - 0.765625)).abs() < 1e-15);
        assert!(cx.var_mplus < cx.var_ma);
    }

    #[test]
    fn deterministic_chain_keeps_initial_maximum() {
        // strictly decreasing deterministic supermartingale 3 -> 2 -> 1:
        // every index equals the current state, L* stays at 3, and both
        // decompositions collapse to the constant martingale 3
        let lat = Lattice::from_json(
            r#"{
                "steps": 2,
                "nodes": [
                    {"id": "a", "t": 0, "z": 3.0, "transitions": [{"to": "b", "p": 1.0}]},
                    {"id": "b", "t": 1, "z": 2.0, "transitions": [{"to": "c", "p": 1.0}]},
                    {"id": "c", "t": 2, "z": 1.0}
                ]
            }"#,
        )
        .unwrap();
        let dec = decompose(&lat).unwrap();
        assert_eq!(dec.l_node, vec![3.0, 2.0, 1.0]);
        assert_eq!(dec.lstar, vec![3.0, 3.0, 3.0]);
        assert_eq!(dec.mplus, vec![3.0, 3.0, 3.0]);
        assert_eq!(dec.a, vec![0.0, 1.0, 2.0]);
        assert_eq!(dec.ma, vec![3.0, 3.0, 3.0]);
        let rep = verify(&lat, &dec);
        assert!(rep.pass(), "{:?}", rep.worst());
        // both terminal laws are the point mass at 3: dominance without
        // strictness, zero variance on both sides
        let cx = convex_order_exact(&dec, 20);
        assert!(cx.dominated && !cx.strict, "{cx:?}");
        assert_eq!(cx.var_mplus, 0.0);
        assert_eq!(cx.var_ma, 0.0);
    }

    #[test]
    fn martingale_input_is_its_own_decomposition() {
        // for martingale input A = 0, and the index is the conditional
        // minimum of reachable leaves, so L* never outruns the state and
        // M reduces to Z itself
        let lat = Lattice::from_json(
            r#"{
                "steps": 1,
                "nodes": [
                    {"id": "r", "t": 0, "z": 1.0,
                     "transitions": [{"to": "u", "p": 0.5}, {"to": "d", "p": 0.5}]},
                    {"id": "u", "t": 1, "z": 2.0},
                    {"id": "d", "t": 1, "z": 0.0}
                ]
            }"#,
        )
        .unwrap();
        let dec = decompose(&lat).unwrap();
        assert_eq!(dec.l_node[0], 0.0); // min reachable leaf
        assert_eq!(dec.a, vec![0.0, 0.0, 0.0]);
        assert_eq!(dec.mplus, dec.z);
        assert_eq!(dec.ma, dec.z);
        let cx = convex_order_exact(&dec, 20);
        assert!(cx.dominated && !cx.strict);
        assert_eq!(cx.var_mplus, cx.var_ma);
        assert!(verify(&lat, &dec).pass());
    }

    #[test]
    fn binomial_verifies_and_derivative_matches() {
        let spec = GbmSpec::new(0.5, 1.0, 1.0).unwrap();
        let lat = Lattice::build_binomial(&spec, 10.0, 8).unwrap();
        let dec = decompose(&lat).unwrap();
        let rep = verify(&lat, &dec);
        for c in &rep.checks {
            assert!(c.pass, "{c:?}");
        }
        assert_eq!(rep.checks.len(), 8);
        for m in [0.25, 0.5, 1.0, 1.5, 2.0, 3.0] {
            let d = derivative_check(&dec, m);
            assert!(d.pass, "{d:?}");
        }
        // strict supermartingale: the additive martingale is strictly
        // riskier at the horizon
        let cx = convex_order_exact(&dec, 50);
        assert!(cx.dominated && cx.strict, "{cx:?}");
        assert!(cx.var_mplus < cx.var_ma);
        assert!(cx.mean_residual < 1e-12);
    }

    #[test]
    fn scale_equivariance() {
        let spec = GbmSpec::new(0.5, 1.0, 1.0).unwrap();
        let lat = Lattice::build_binomial(&spec, 10.0, 6).unwrap();
        let mut scaled = lat.clone();
        for z in &mut scaled.z {
            *z *= 2.5;
        }
        let dec = decompose(&lat).unwrap();
        let dec2 = decompose(&scaled).unwrap();
        for v in 0..lat.node_count() {
            assert!(
                (dec2.l_node[v] - 2.5 * dec.l_node[v]).abs() <= 1e-12 * dec.l_node[v].abs(),
                "node {v}"
            );
        }
        for i in 0..dec.tree.len() {
            assert!((dec2.mplus[i] - 2.5 * dec.mplus[i]).abs() <= 1e-12 * dec.mplus[i].abs());
            assert!((dec2.ma[i] - 2.5 * dec.ma[i]).abs() <= 1e-12 * dec.ma[i].abs().max(1.0));
        }
    }

    #[test]
    fn small_perturbation_small_effect() {
        let spec = GbmSpec::new(0.5, 1.0, 1.0).unwrap();
        let lat = Lattice::build_binomial(&spec, 10.0, 6).unwrap();
        let dec = decompose(&lat).unwrap();
        let mut bumped = lat.clone();
        // shrink one interior state; the CRR slack z (1 - rho) dwarfs 1e-6,
        // so the input stays a strict supermartingale
        let v = bumped.layers[3][1];
        bumped.z[v] -= 1e-6;
        let dec2 = decompose(&bumped).unwrap();
        assert!(verify(&bumped, &dec2).pass());
        let before = dec.call_value(1.0);
        let after = dec2.call_value(1.0);
        assert!(before > 0.0);
        assert!((before - after).abs() < 1e-5, "{before} vs {after}");
    }

    #[test]
    fn refinement_approaches_the_perpetual_value() {
        // The strike-1 call value of the 10-year tree must close in on the
        // perpetual closed form 1/4 as the grid refines (the 10-year cap
        // itself costs only ~6e-5).
        let spec = GbmSpec::new(0.5, 1.0, 1.0).unwrap();
        let mut errs = Vec::new();
        for n in [4usize, 8, 12, 16] {
            let lat = Lattice::build_binomial(&spec, 10.0, n).unwrap();
            let dec = decompose(&lat).unwrap();
            errs.push((dec.call_value(1.0) - 0.25).abs());
        }
        // observed decay is ~0.36/N: 0.18, 0.080, 0.040, 0.023
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
        assert!(errs.last().unwrap() < &0.03, "{errs:?}");
    }

    #[test]
    fn prefix_cap_reported() {
        // 2^23 paths blows the prefix budget long before memory does
        let spec = GbmSpec::new(0.05, 0.3, 1.0).unwrap();
        let lat = Lattice::build_binomial(&spec, 1.0, 23).unwrap();
        match PrefixTree::enumerate(&lat) {
            Err(Error::Lattice(msg)) => assert!(msg.contains("enumeration exceeds")),
            other => panic!("expected cap error, got {other:?}"),
        }
    }
}
