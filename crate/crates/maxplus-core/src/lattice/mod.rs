//! Finite lattices (layered DAGs) and the exact backward inductions that
//! verify the theory on them: the floored Snell envelope as a
//! piecewise-linear convex function of the floor, the index read off it,
//! optimal stopping times, general-payoff envelopes and discrete call/put
//! duality. Everything in this module is exact up to float rounding; the
//! tolerances are certificates, not discretization allowances.

pub mod decompose;
pub mod plconvex;

use std::collections::HashMap;

use serde::Deserialize;

use self::plconvex::PLConvex;
use crate::error::{Error, Result};
use crate::model::GbmSpec;
use crate::tol;

/// A layered DAG carrying one scalar state per node and row-stochastic
/// transitions to the next layer. Node ids are dense indices; original
/// labels are kept for error messages.
#[derive(Debug, Clone)]
pub struct Lattice {
    steps: usize,
    z: Vec<f64>,
    layer: Vec<usize>,
    layers: Vec<Vec<usize>>,
    next: Vec<Vec<(usize, f64)>>,
    root: usize,
    labels: Vec<String>,
}

impl Lattice {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn node_count(&self) -> usize {
        self.z.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn value(&self, v: usize) -> f64 {
        self.z[v]
    }

    pub fn values(&self) -> &[f64] {
        &self.z
    }

    pub fn layer_of(&self, v: usize) -> usize {
        self.layer[v]
    }

    pub fn layer_nodes(&self, k: usize) -> &[usize] {
        &self.layers[k]
    }

    pub fn transitions(&self, v: usize) -> &[(usize, f64)] {
        &self.next[v]
    }

    pub fn label(&self, v: usize) -> &str {
        &self.labels[v]
    }

    /// `E[Z_{k+1} | node]` for nonterminal nodes.
    pub fn conditional_mean(&self, v: usize) -> Option<f64> {
        if self.next[v].is_empty() {
            None
        } else {
            Some(self.next[v].iter().map(|(c, p)| p * self.z[*c]).sum())
        }
    }

    /// Errors unless `E[Z_{k+1} | node] <= z` (relative slack 1e-12) at
    /// every nonterminal node.
    pub fn check_supermartingale(&self) -> Result<()> {
        for v in 0..self.node_count() {
            if let Some(e) = self.conditional_mean(v) {
                let slack = tol::CONTACT_REL * self.z[v].abs().max(1.0);
                if e > self.z[v] + slack {
                    return Err(Error::Lattice(format!(
                        "not a supermartingale at node '{}': E[next] = {e} > z = {}",
                        self.labels[v], self.z[v]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Recombining CRR-style binomial tree for the GBM supermartingale:
    /// `u = e^{sigma sqrt(dt)}`, `d = 1/u`, and `p` solving
    /// `p u + (1-p) d = e^{-r dt}` so that `E[Z_{k+1}|Z_k] = e^{-r dt} Z_k`
    /// holds exactly node by node.
    pub fn build_binomial(spec: &GbmSpec, t: f64, n: usize) -> Result<Lattice> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::param("t", t, "must be finite and > 0"));
        }
        if n == 0 {
            return Err(Error::param("n", 0.0, "must be >= 1"));
        }
        let dt = t / n as f64;
        let u = (spec.sigma * dt.sqrt()).exp();
        let d = 1.0 / u;
        let rho = (-spec.r * dt).exp();
        let p = (rho - d) / (u - d);
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::param(
                "p",
                p,
                "binomial up-probability must lie in (0,1); widen sigma sqrt(dt) against r dt",
            ));
        }

        let node_id = |k: usize, j: usize| k * (k + 1) / 2 + j;
        let count = node_id(n, n) + 1;
        let mut z = vec![0.0; count];
        let mut layer = vec![0; count];
        let mut labels = vec![String::new(); count];
        let mut next: Vec<Vec<(usize, f64)>> = vec![Vec::new(); count];
        let mut layers: Vec<Vec<usize>> = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let mut ids = Vec::with_capacity(k + 1);
            for j in 0..=k {
                let v = node_id(k, j);
                // z = x0 u^j d^(k-j) = x0 u^(2j-k)
                z[v] = spec.x0 * u.powi(2 * j as i32 - k as i32);
                layer[v] = k;
                labels[v] = format!("{k}:{j}");
                if k < n {
                    next[v] = vec![(node_id(k + 1, j), 1.0 - p), (node_id(k + 1, j + 1), p)];
                }
                ids.push(v);
            }
            layers.push(ids);
        }
        Ok(Lattice {
            steps: n,
            z,
            layer,
            layers,
            next,
            root: 0,
            labels,
        })
    }

    /// Loads and validates a lattice from its JSON description:
    /// `{"steps": N, "nodes": [{"id", "t", "z", "transitions": [{"to", "p"}]}]}`.
    ///
    /// Rejected inputs: duplicate or unknown ids, more or fewer than one
    /// root, negative states, transition probabilities outside `(0, 1]`,
    /// row sums off 1 by more than 1e-9, edges that do not go to the next
    /// layer, interior nodes without transitions, terminal nodes with
    /// transitions, and nodes unreachable from the root.
    pub fn from_json(text: &str) -> Result<Lattice> {
        let parsed: LatticeJson = serde_json::from_str(text)
            .map_err(|e| Error::LatticeJson(format!("parse error: {e}")))?;
        let n = parsed.steps;
        if parsed.nodes.is_empty() {
            return Err(Error::LatticeJson("no nodes".into()));
        }

        let mut index: HashMap<&str, usize> = HashMap::with_capacity(parsed.nodes.len());
        for (i, node) in parsed.nodes.iter().enumerate() {
            if index.insert(node.id.as_str(), i).is_some() {
                return Err(Error::LatticeJson(format!("duplicate node id '{}'", node.id)));
            }
        }

        let mut z = Vec::with_capacity(parsed.nodes.len());
        let mut layer = Vec::with_capacity(parsed.nodes.len());
        let mut labels = Vec::with_capacity(parsed.nodes.len());
        let mut next: Vec<Vec<(usize, f64)>> = Vec::with_capacity(parsed.nodes.len());
        let mut root = None;
        for node in &parsed.nodes {
            if node.t > n {
                return Err(Error::LatticeJson(format!(
                    "node '{}' sits at t = {} beyond steps = {n}",
                    node.id, node.t
                )));
            }
            if !(node.z >= 0.0) || !node.z.is_finite() {
                return Err(Error::LatticeJson(format!(
                    "node '{}' has invalid state {}",
                    node.id, node.z
                )));
            }
            if node.t == 0 {
                if root.is_some() {
                    return Err(Error::LatticeJson("more than one root (t = 0) node".into()));
                }
                root = Some(z.len());
            }
            if node.t == n && !node.transitions.is_empty() {
                return Err(Error::LatticeJson(format!(
                    "terminal node '{}' has transitions",
                    node.id
                )));
            }
            if node.t < n && node.transitions.is_empty() {
                return Err(Error::LatticeJson(format!(
                    "interior node '{}' has no transitions",
                    node.id
                )));
            }
            let mut row = Vec::with_capacity(node.transitions.len());
            let mut sum = 0.0;
            for tr in &node.transitions {
                let to = *index.get(tr.to.as_str()).ok_or_else(|| {
                    Error::LatticeJson(format!(
                        "node '{}' points to unknown id '{}'",
                        node.id, tr.to
                    ))
                })?;
                if parsed.nodes[to].t != node.t + 1 {
                    return Err(Error::LatticeJson(format!(
                        "edge '{}' -> '{}' does not advance one layer",
                        node.id, tr.to
                    )));
                }
                if !(tr.p > 0.0 && tr.p <= 1.0) {
                    return Err(Error::LatticeJson(format!(
                        "edge '{}' -> '{}' has probability {} outside (0, 1]",
                        node.id, tr.to, tr.p
                    )));
                }
                sum += tr.p;
                row.push((to, tr.p));
            }
            if !node.transitions.is_empty() && (sum - 1.0).abs() > tol::PROB_ROW_SUM_ABS {
                return Err(Error::LatticeJson(format!(
                    "node '{}' transition probabilities sum to {sum}",
                    node.id
                )));
            }
            z.push(node.z);
            layer.push(node.t);
            labels.push(node.id.clone());
            next.push(row);
        }
        let root = root.ok_or_else(|| Error::LatticeJson("no root (t = 0) node".into()))?;

        // reachability from the root
        let mut seen = vec![false; z.len()];
        let mut stack = vec![root];
        seen[root] = true;
        while let Some(v) = stack.pop() {
            for &(c, _) in &next[v] {
                if !seen[c] {
                    seen[c] = true;
                    stack.push(c);
                }
            }
        }
        if let Some(v) = seen.iter().position(|s| !s) {
            return Err(Error::LatticeJson(format!(
                "node '{}' is unreachable from the root",
                labels[v]
            )));
        }

        let mut layers: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
        for (v, &k) in layer.iter().enumerate() {
            layers[k].push(v);
        }
        if let Some(k) = layers.iter().position(|l| l.is_empty()) {
            return Err(Error::LatticeJson(format!("no nodes at t = {k}")));
        }

        Ok(Lattice {
            steps: n,
            z,
            layer,
            layers,
            next,
            root,
            labels,
        })
    }

    /// Floored Snell envelope per node, as an exact function of the floor:
    /// `f_v(m) = sup over stopping rules from v of E[Z_tau v m]`, computed
    /// by `f_v = max(hinge(z_v), sum_c p_c f_c)` backward in the layer.
    pub fn snell_pl(&self) -> Vec<PLConvex> {
        let mut f: Vec<Option<PLConvex>> = vec![None; self.node_count()];
        for k in (0..=self.steps).rev() {
            for &v in &self.layers[k] {
                let hinge = PLConvex::hinge(self.z[v]);
                let val = if self.next[v].is_empty() {
                    hinge
                } else {
                    let parts: Vec<(f64, &PLConvex)> = self.next[v]
                        .iter()
                        .map(|(c, p)| (*p, f[*c].as_ref().expect("later layer solved")))
                        .collect();
                    let cont = PLConvex::combine(&parts).expect("positive probabilities");
                    hinge.max(&cont)
                };
                f[v] = Some(val);
            }
        }
        f.into_iter().map(|v| v.expect("all layers solved")).collect()
    }

    /// Scalar backward induction of the same envelope at one fixed floor;
    /// an independent route kept for cross-checking `snell_pl`.
    pub fn snell_values(&self, m: f64) -> Vec<f64> {
        let mut val = vec![0.0; self.node_count()];
        for k in (0..=self.steps).rev() {
            for &v in &self.layers[k] {
                let stop = self.z[v].max(m);
                val[v] = if self.next[v].is_empty() {
                    stop
                } else {
                    let cont: f64 = self.next[v].iter().map(|(c, p)| p * val[*c]).sum();
                    stop.max(cont)
                };
            }
        }
        val
    }

    /// Index of every node: `L_v = sup { m : f_v(m) = z_v }`, i.e. the
    /// first breakpoint of the envelope. `None` encodes `-inf` (the
    /// envelope exceeds the state even without a floor, so the node is
    /// never a stopping state; cannot happen for supermartingale input).
    pub fn indices(&self) -> Result<Vec<Option<f64>>> {
        let f = self.snell_pl();
        self.indices_from(&f)
    }

    pub fn indices_from(&self, f: &[PLConvex]) -> Result<Vec<Option<f64>>> {
        (0..self.node_count())
            .map(|v| index_from_pl(&f[v], self.z[v]))
            .collect()
    }

    /// Expected payoff `E[Z_T v m]` of the rule "stop at the first node
    /// where `stop` holds" (the terminal layer always stops), by exact
    /// forward mass propagation.
    fn rule_value(&self, m: f64, stop: impl Fn(usize) -> bool) -> f64 {
        let mut mass = vec![0.0; self.node_count()];
        mass[self.root] = 1.0;
        let mut acc = 0.0;
        for k in 0..=self.steps {
            for &v in &self.layers[k] {
                if mass[v] == 0.0 {
                    continue;
                }
                if k == self.steps || stop(v) {
                    acc += mass[v] * self.z[v].max(m);
                } else {
                    for &(c, p) in &self.next[v] {
                        mass[c] += mass[v] * p;
                    }
                }
            }
        }
        acc
    }

    /// The two optimal stopping rules at floor `m`, each evaluated by
    /// forward propagation and compared with the envelope value: first
    /// contact (`f_v(m) = z_v v m`) and the index rule (`L_v >= m`).
    /// Their agreement is the lattice form of the optimal-time identity.
    pub fn optimal_times(&self, m: f64) -> Result<OptimalTimesReport> {
        let f = self.snell_pl();
        let l = self.indices_from(&f)?;
        let value = f[self.root].eval(m);

        let mut contact = vec![false; self.node_count()];
        let mut absorbed = vec![false; self.node_count()];
        for v in 0..self.node_count() {
            let scale = f[v].eval(m).abs().max(1.0);
            contact[v] = (f[v].eval(m) - self.z[v].max(m)).abs() <= tol::CONTACT_REL * scale;
            absorbed[v] = self.z[v] <= m;
        }

        let contact_rule_value = self.rule_value(m, |v| contact[v]);
        let index_rule_value = self.rule_value(m, |v| match l[v] {
            Some(lv) => lv >= m,
            None => false,
        });
        let max_residual = (contact_rule_value - value)
            .abs()
            .max((index_rule_value - value).abs());
        Ok(OptimalTimesReport {
            m,
            value,
            contact_rule_value,
            index_rule_value,
            max_residual,
            contact,
            absorbed,
        })
    }

    /// Floored Snell envelope of an arbitrary adapted payoff `y` (one value
    /// per node), solved along two independent routes that must agree:
    /// directly on `y`, and on the scalar Snell envelope `zy` of `y`.
    /// Also verifies the index representation
    /// `zy_v = E[max of finite L over the subtree path from v]` node by
    /// node via exact floor-composed recursion.
    pub fn snell_y(&self, y: &[f64]) -> Result<SnellYReport> {
        if y.len() != self.node_count() {
            return Err(Error::Lattice(format!(
                "payoff vector has {} entries for {} nodes",
                y.len(),
                self.node_count()
            )));
        }
        if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
            return Err(Error::Lattice(format!("non-finite payoff {bad}")));
        }

        // scalar Snell envelope of y
        let mut zy = vec![0.0; self.node_count()];
        for k in (0..=self.steps).rev() {
            for &v in &self.layers[k] {
                zy[v] = if self.next[v].is_empty() {
                    y[v]
                } else {
                    let cont: f64 = self.next[v].iter().map(|(c, p)| p * zy[*c]).sum();
                    y[v].max(cont)
                };
            }
        }

        // route 1: PL envelope on the raw payoff
        let ply = self.snell_pl_over(y);
        // route 2: PL envelope on the envelope values
        let plz = self.snell_pl_over(&zy);
        let mut pl_identity_ok = true;
        for v in 0..self.node_count() {
            pl_identity_ok &= ply[v].approx_eq(&plz[v], tol::CONTACT_REL);
        }

        // index of the envelope, read from the raw-payoff route
        let ly: Vec<Option<f64>> = (0..self.node_count())
            .map(|v| index_from_pl(&ply[v], y[v]))
            .collect::<Result<_>>()?;

        // representation: E[ max of finite L along the path from v ] = zy_v,
        // carried maximum handled exactly by floor composition
        let mut rep: Vec<Option<PLConvex>> = vec![None; self.node_count()];
        let mut representation_max_err = 0.0_f64;
        for k in (0..=self.steps).rev() {
            for &v in &self.layers[k] {
                let val = if self.next[v].is_empty() {
                    // terminal index is the terminal payoff itself
                    PLConvex::hinge(y[v])
                } else {
                    let parts: Vec<(f64, &PLConvex)> = self.next[v]
                        .iter()
                        .map(|(c, p)| (*p, rep[*c].as_ref().expect("later layer solved")))
                        .collect();
                    let cont = PLConvex::combine(&parts).expect("positive probabilities");
                    match ly[v] {
                        Some(l) => cont.floor_compose(l),
                        None => cont,
                    }
                };
                let err = (val.anchor() - zy[v]).abs() / zy[v].abs().max(1.0);
                representation_max_err = representation_max_err.max(err);
                rep[v] = Some(val);
            }
        }

        Ok(SnellYReport {
            zy,
            ply,
            plz,
            ly,
            pl_identity_ok,
            representation_max_err,
        })
    }

    fn snell_pl_over(&self, state: &[f64]) -> Vec<PLConvex> {
        let mut f: Vec<Option<PLConvex>> = vec![None; self.node_count()];
        for k in (0..=self.steps).rev() {
            for &v in &self.layers[k] {
                let hinge = PLConvex::hinge(state[v]);
                let val = if self.next[v].is_empty() {
                    hinge
                } else {
                    let parts: Vec<(f64, &PLConvex)> = self.next[v]
                        .iter()
                        .map(|(c, p)| (*p, f[*c].as_ref().expect("later layer solved")))
                        .collect();
                    hinge.max(&PLConvex::combine(&parts).expect("positive probabilities"))
                };
                f[v] = Some(val);
            }
        }
        f.into_iter().map(|v| v.expect("all layers solved")).collect()
    }

    /// Exact discrete call/put duality. Requires a strictly positive state
    /// and a constant one-step decay `E[Z_{k+1}|F_k] = rho Z_k`; under the
    /// reweighted transitions `q = p z_child / (rho z)` the strike-`m` call
    /// on `Z` equals `m z_0` times the `rho`-discounted put on `1/Z` with
    /// strike `1/m`, node by node. Both sides are solved independently.
    pub fn duality_tree(&self, m: f64) -> Result<TreeDualityReport> {
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::param("m", m, "duality needs a strike in (0, inf)"));
        }
        for v in 0..self.node_count() {
            if self.z[v] <= 0.0 {
                return Err(Error::Lattice(format!(
                    "duality needs strictly positive states; node '{}' has z = {}",
                    self.labels[v], self.z[v]
                )));
            }
        }
        // infer rho and insist it is constant across nodes
        let mut rho: Option<f64> = None;
        for v in 0..self.node_count() {
            if let Some(e) = self.conditional_mean(v) {
                let r = e / self.z[v];
                match rho {
                    None => rho = Some(r),
                    Some(r0) => {
                        if (r - r0).abs() > tol::DUALITY_TREE_REL * r0.max(1.0) {
                            return Err(Error::Lattice(format!(
                                "one-step decay varies across nodes ({r0} vs {r} at '{}'); \
                                 tree duality needs a constant rho",
                                self.labels[v]
                            )));
                        }
                    }
                }
            }
        }
        let rho = rho.ok_or_else(|| Error::Lattice("lattice has no transitions".into()))?;
        if !(rho > 0.0 && rho <= 1.0 + tol::DUALITY_TREE_REL) {
            return Err(Error::Lattice(format!(
                "one-step decay rho = {rho} outside (0, 1]"
            )));
        }

        // primal American call under p
        let mut call = vec![0.0; self.node_count()];
        for k in (0..=self.steps).rev() {
            for &v in &self.layers[k] {
                let stop = (self.z[v] - m).max(0.0);
                call[v] = if self.next[v].is_empty() {
                    stop
                } else {
                    let cont: f64 = self.next[v].iter().map(|(c, p)| p * call[*c]).sum();
                    stop.max(cont)
                };
            }
        }

        // dual American put on 1/Z under q, discounted by rho per step
        let k_strike = 1.0 / m;
        let mut put = vec![0.0; self.node_count()];
        for k in (0..=self.steps).rev() {
            for &v in &self.layers[k] {
                let stop = (k_strike - 1.0 / self.z[v]).max(0.0);
                put[v] = if self.next[v].is_empty() {
                    stop
                } else {
                    let cont: f64 = self.next[v]
                        .iter()
                        .map(|(c, p)| p * self.z[*c] / (rho * self.z[v]) * put[*c])
                        .sum();
                    stop.max(rho * cont)
                };
            }
        }

        let x0 = self.z[self.root];
        let scaled_put = m * x0 * put[self.root];
        let call0 = call[self.root];
        let residual = (call0 - scaled_put).abs() / call0.abs().max(1.0);
        Ok(TreeDualityReport {
            m,
            rho,
            call: call0,
            put: put[self.root],
            scaled_put,
            residual,
            pass: residual <= tol::DUALITY_TREE_REL,
        })
    }
}

/// Reads the index off a floored envelope at one node: the largest floor
/// that leaves the value at `z`. `None` when the envelope exceeds `z`
/// already at `-inf` (a strictly-continuation node of a non-supermartingale
/// payoff); an envelope anchored *below* `z` is structurally impossible and
/// reported as an error.
pub fn index_from_pl(f: &PLConvex, z: f64) -> Result<Option<f64>> {
    let scale = z.abs().max(1.0);
    let gap = f.anchor() - z;
    if gap > tol::CONTACT_REL * scale {
        return Ok(None);
    }
    if gap < -tol::CONTACT_REL * scale {
        return Err(Error::Lattice(format!(
            "envelope anchored at {} below the state {z}",
            f.anchor()
        )));
    }
    match f.first_breakpoint() {
        Some(b) => Ok(Some(b)),
        None => Err(Error::Lattice(
            "envelope without breakpoints cannot dominate every floor".into(),
        )),
    }
}

#[derive(Debug, Clone)]
pub struct OptimalTimesReport {
    pub m: f64,
    /// Envelope value `f_root(m)`.
    pub value: f64,
    pub contact_rule_value: f64,
    pub index_rule_value: f64,
    pub max_residual: f64,
    pub contact: Vec<bool>,
    pub absorbed: Vec<bool>,
}

impl OptimalTimesReport {
    pub fn pass(&self) -> bool {
        self.max_residual <= tol::LATTICE_IDENTITY_REL * self.value.abs().max(1.0)
    }
}

#[derive(Debug, Clone)]
pub struct SnellYReport {
    /// Scalar Snell envelope of the payoff.
    pub zy: Vec<f64>,
    /// Floored envelope computed on the raw payoff.
    pub ply: Vec<PLConvex>,
    /// Floored envelope computed on `zy`; must equal `ply` node by node.
    pub plz: Vec<PLConvex>,
    /// Index of the envelope; `None` where the payoff sits strictly below
    /// its envelope.
    pub ly: Vec<Option<f64>>,
    pub pl_identity_ok: bool,
    /// Worst relative error of `E[max of finite L from v] = zy_v`.
    pub representation_max_err: f64,
}

impl SnellYReport {
    /// Value of the floored claim at the root.
    pub fn value_with_floor(&self, root: usize, m: f64) -> f64 {
        self.ply[root].eval(m)
    }

    /// `sup_tau E[(Y_tau - m)^+] = f(m) - m` for floors below nothing:
    /// exact since `E[Y v m] = m + E[(Y - m)^+]`.
    pub fn call_value(&self, root: usize, m: f64) -> f64 {
        self.ply[root].eval(m) - m
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct TreeDualityReport {
    pub m: f64,
    pub rho: f64,
    pub call: f64,
    pub put: f64,
    pub scaled_put: f64,
    pub residual: f64,
    pub pass: bool,
}

#[derive(Debug, Deserialize)]
struct LatticeJson {
    steps: usize,
    nodes: Vec<NodeJson>,
}

#[derive(Debug, Deserialize)]
struct NodeJson {
    id: String,
    t: usize,
    z: f64,
    #[serde(default)]
    transitions: Vec<TransJson>,
}

#[derive(Debug, Deserialize)]
struct TransJson {
    to: String,
    p: f64,
}
