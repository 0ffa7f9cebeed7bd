//! One function per subcommand. Each returns the report as JSON plus a
//! pass verdict; configuration and input-data problems come back as
//! [`CmdError::Config`] (exit 2), failed numerical checks as `pass = false`
//! (exit 1).

use serde::Serialize;
use serde_json::{json, Value};

use maxplus::azema_yor::{
    ay_ensemble_gbm, ay_martingale, ay_path_check, concave_envelope, snell_from_envelope,
    ConcaveFn,
};
use maxplus::closedform::{
    american_call_bm, american_call_gbm, call_left_derivative, exercise_boundary, phi_bm,
    phi_gbm, BoundarySpec,
};
use maxplus::convexorder::{cx_compare, mplus_doobmeyer_samples, write_cx_csv, CxVerdict};
use maxplus::lattice::decompose::{convex_order_exact, decompose, derivative_check, verify};
use maxplus::lattice::Lattice;
use maxplus::model::{delta_of, gamma_levy_root, gamma_of};
use maxplus::simulate::default_steps;
use maxplus::stopping::{
    levy_martingale_check, price_bm_call, price_gbm_call, price_killed_call, price_levy_call,
    sup_law_gbm, McConfig,
};

use crate::config::RunConfig;

pub struct Outcome {
    pub report: Value,
    pub pass: bool,
    /// Tabular rendering, for the commands that have one.
    pub csv: Option<String>,
}

#[derive(Debug)]
pub enum CmdError {
    Config(String),
}

impl From<maxplus::Error> for CmdError {
    fn from(e: maxplus::Error) -> Self {
        CmdError::Config(e.to_string())
    }
}

impl From<String> for CmdError {
    fn from(e: String) -> Self {
        CmdError::Config(e)
    }
}

type CmdResult = Result<Outcome, CmdError>;

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serialization is infallible")
}

fn mc_config(cfg: &RunConfig) -> Result<McConfig, CmdError> {
    if cfg.run.paths == 0 {
        return Err(CmdError::Config("run.paths must be >= 1".into()));
    }
    Ok(McConfig {
        paths: cfg.run.paths,
        seed: cfg.require_seed()?,
        t_trunc: cfg.run.t,
        steps: cfg.run.steps,
    })
}

pub fn price(cfg: &RunConfig) -> CmdResult {
    if !matches!(cfg.model.kind.as_str(), "gbm" | "bm" | "levy") {
        return Err(CmdError::Config(format!(
            "unknown model kind `{}` (expected gbm, bm, or levy)",
            cfg.model.kind
        )));
    }
    // the levy route is closed-form only; everything else may attach MC
    let mc = if cfg.price.mc && cfg.model.kind != "levy" {
        Some(mc_config(cfg)?)
    } else {
        None
    };
    let m = cfg.price.strike;
    let report = match cfg.model.kind.as_str() {
        "gbm" => match cfg.price.beta {
            None => price_gbm_call(&cfg.gbm()?, m, mc.as_ref())?,
            Some(beta) => price_killed_call(&cfg.gbm()?, beta, m, mc.as_ref())?,
        },
        "bm" => price_bm_call(&cfg.bm()?, m, mc.as_ref())?,
        _ => price_levy_call(&cfg.levy()?, m)?,
    };
    let pass = report.agree != Some(false);
    Ok(Outcome {
        report: to_value(&report),
        pass,
        csv: None,
    })
}

#[derive(Serialize)]
struct BoundaryRow {
    m: f64,
    boundary: f64,
    call: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    left_derivative: Option<f64>,
}

pub fn boundary(cfg: &RunConfig) -> CmdResult {
    // tail exponent and index map of the chosen model
    let (exponent, bspec, multiplicative) = match cfg.model.kind.as_str() {
        "gbm" => {
            let spec = cfg.gbm()?;
            let e = match cfg.price.beta {
                None => gamma_of(&spec),
                Some(beta) => delta_of(&spec, beta)?,
            };
            (e, BoundarySpec::multiplicative(e / (e - 1.0))?, true)
        }
        "bm" => {
            let spec = cfg.bm()?;
            let e = spec.gamma_additive()?;
            (e, BoundarySpec::additive(1.0 / e)?, false)
        }
        "levy" => {
            let e = gamma_levy_root(&cfg.levy()?)?;
            (e, BoundarySpec::multiplicative(e / (e - 1.0))?, true)
        }
        other => {
            return Err(CmdError::Config(format!(
                "unknown model kind `{other}` (expected gbm, bm, or levy)"
            )))
        }
    };
    let x0 = cfg.model.x0;
    let mut rows = Vec::with_capacity(cfg.boundary.strikes.len());
    for &m in &cfg.boundary.strikes {
        let (call, left) = if multiplicative {
            (
                american_call_gbm(x0, m, exponent)?,
                Some(call_left_derivative(x0, m, exponent)?),
            )
        } else {
            (american_call_bm(x0, m, exponent)?, None)
        };
        rows.push(BoundaryRow {
            m,
            boundary: exercise_boundary(m, &bspec)?,
            call,
            left_derivative: left,
        });
    }
    let mut csv = String::from("m,boundary,call,left_derivative\n");
    for r in &rows {
        let left = r.left_derivative.map(|d| d.to_string()).unwrap_or_default();
        csv.push_str(&format!("{},{},{},{left}\n", r.m, r.boundary, r.call));
    }
    Ok(Outcome {
        report: json!({
            "kind": cfg.model.kind,
            "tail_exponent": exponent,
            "index_constant": bspec.index_constant(),
            "rows": to_value(&rows),
        }),
        pass: true,
        csv: Some(csv),
    })
}

pub fn simulate(cfg: &RunConfig) -> CmdResult {
    match cfg.model.kind.as_str() {
        "gbm" => {
            let mc = mc_config(cfg)?;
            let report = sup_law_gbm(&cfg.gbm()?, cfg.run.level, &mc)?;
            let pass = report.agree;
            Ok(Outcome {
                report: to_value(&report),
                pass,
                csv: None,
            })
        }
        "levy" => {
            let mc = mc_config(cfg)?;
            let spec = cfg.levy()?;
            let t = cfg.run.t.unwrap_or(1.0);
            let steps = cfg.run.steps.unwrap_or(16);
            let estimate = levy_martingale_check(&spec, t, steps, &mc)?;
            let expected = (-spec.r * t).exp();
            let pass = estimate.consistent_with(expected);
            Ok(Outcome {
                report: json!({
                    "discounted_terminal_mean": to_value(&estimate),
                    "expected": expected,
                    "consistent": pass,
                }),
                pass,
                csv: None,
            })
        }
        other => Err(CmdError::Config(format!(
            "simulate supports model kinds gbm and levy, got `{other}`"
        ))),
    }
}

#[derive(Serialize)]
struct RuleRow {
    m: f64,
    value: f64,
    contact_rule_value: f64,
    index_rule_value: f64,
    max_residual: f64,
    pass: bool,
}

pub fn tree_verify(cfg: &RunConfig) -> CmdResult {
    let lat = match &cfg.tree.source {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CmdError::Config(format!("cannot read tree {}: {e}", path.display()))
            })?;
            Lattice::from_json(&text)?
        }
        None => {
            if cfg.model.kind != "gbm" {
                return Err(CmdError::Config(
                    "the built-in binomial tree needs model.kind = \"gbm\"".into(),
                ));
            }
            Lattice::build_binomial(&cfg.gbm()?, cfg.tree.t, cfg.tree.steps)?
        }
    };
    let dec = decompose(&lat)?;
    let mut failed: Vec<String> = Vec::new();

    let verification = verify(&lat, &dec);
    for c in &verification.checks {
        if !c.pass {
            failed.push(c.name.to_string());
        }
    }

    let root_index = lat.indices()?[lat.root()];

    let mut derivative = Vec::with_capacity(cfg.tree.strikes.len());
    let mut rules = Vec::with_capacity(cfg.tree.strikes.len());
    for &m in &cfg.tree.strikes {
        let d = derivative_check(&dec, m);
        if !d.pass {
            failed.push(format!("derivative(m={m})"));
        }
        derivative.push(d);
        let ot = lat.optimal_times(m)?;
        let pass = ot.pass();
        if !pass {
            failed.push(format!("optimal-times(m={m})"));
        }
        rules.push(RuleRow {
            m,
            value: ot.value,
            contact_rule_value: ot.contact_rule_value,
            index_rule_value: ot.index_rule_value,
            max_residual: ot.max_residual,
            pass,
        });
    }

    let convex = convex_order_exact(&dec, cfg.tree.grid);
    if !convex.dominated {
        failed.push("convex-order".into());
    }

    // call/put duality only makes sense for strictly positive states
    let duality = if lat.values().iter().all(|&z| z > 0.0) {
        let mut rows = Vec::with_capacity(cfg.tree.strikes.len());
        for &m in &cfg.tree.strikes {
            let d = lat.duality_tree(m)?;
            if !d.pass {
                failed.push(format!("duality(m={m})"));
            }
            rows.push(d);
        }
        Some(rows)
    } else {
        None
    };

    let general_payoff = match &cfg.tree.y {
        None => None,
        Some(map) => {
            let mut y = Vec::with_capacity(lat.node_count());
            for v in 0..lat.node_count() {
                match map.get(lat.label(v)) {
                    Some(&val) => y.push(val),
                    None => {
                        return Err(CmdError::Config(format!(
                            "tree.y is missing node `{}`",
                            lat.label(v)
                        )))
                    }
                }
            }
            if map.len() != lat.node_count() {
                return Err(CmdError::Config(
                    "tree.y names nodes that are not in the tree".into(),
                ));
            }
            let rep = lat.snell_y(&y)?;
            if !rep.pl_identity_ok {
                failed.push("general-payoff-identity".into());
            }
            Some(json!({
                "pl_identity_ok": rep.pl_identity_ok,
                "representation_max_err": rep.representation_max_err,
                "root_index": rep.ly[lat.root()],
            }))
        }
    };

    let pass = failed.is_empty();
    Ok(Outcome {
        report: json!({
            "nodes": lat.node_count(),
            "steps": lat.steps(),
            "root_value": lat.value(lat.root()),
            "root_envelope": dec.root_envelope(),
            "root_index": root_index,
            "checks": to_value(&verification.checks),
            "derivative": to_value(&derivative),
            "rules": to_value(&rules),
            "convex": to_value(&convex),
            "duality": duality.as_ref().map(|d| to_value(d)),
            "general_payoff": general_payoff,
            "failed": failed,
        }),
        pass,
        csv: None,
    })
}

pub fn convex_order(cfg: &RunConfig) -> CmdResult {
    if cfg.model.kind != "gbm" {
        return Err(CmdError::Config(
            "convex-order compares the GBM martingales; set model.kind = \"gbm\"".into(),
        ));
    }
    let spec = cfg.gbm()?;
    let seed = cfg.require_seed()?;
    let t = cfg.convex.t;
    let steps = match cfg.run.steps {
        Some(s) => s,
        None => default_steps(spec.sigma, t),
    };
    let (mplus, ma) = mplus_doobmeyer_samples(&spec, t, steps, cfg.run.paths, seed)?;
    let report = if cfg.convex.swap {
        cx_compare(&ma, &mplus, cfg.convex.grid)?
    } else {
        cx_compare(&mplus, &ma, cfg.convex.grid)?
    };
    let pass = report.verdict == CxVerdict::Dominated;
    let mut csv = Vec::new();
    write_cx_csv(&report, &mut csv).expect("writing to a Vec cannot fail");
    Ok(Outcome {
        report: json!({
            "swap": cfg.convex.swap,
            "cx": to_value(&report),
        }),
        pass,
        csv: Some(String::from_utf8(csv).expect("csv is ascii")),
    })
}

pub fn azema_yor(cfg: &RunConfig) -> CmdResult {
    let u = ConcaveFn::parse(&cfg.ay.family)
        .map_err(|e| CmdError::Config(format!("family `{}`: {e}", cfg.ay.family)))?;

    let path = ay_path_check(&u, &cfg.ay.path)?;
    let scale = path.max_m.abs().max(1.0);
    let path_ok = path.min_slack_over_u >= -1e-9 * scale
        && path.min_slack_over_v >= -1e-9 * scale
        && path.max_identity_residual <= 1e-9 * scale;

    // closed-form cross-check of the family against its canonical model
    let cross_worst = match u {
        ConcaveFn::Power { p } => {
            let gamma = 1.0 / p;
            let mut worst = 0.0_f64;
            for i in 0..15 {
                let zstar = 0.2 + 2.8 * i as f64 / 14.0;
                for j in 1..=10 {
                    // ratio hits 1.0 exactly so the top point is on the diagonal
                    let ratio = j as f64 / 10.0;
                    let z = zstar * ratio;
                    let got = ay_martingale(&u, z.powf(gamma), zstar.powf(gamma))?;
                    let want = phi_gbm(z, zstar, gamma)?;
                    worst = worst.max((got - want).abs() / want.abs().max(1.0));
                }
            }
            Some(worst)
        }
        ConcaveFn::ScaledLog { c } => {
            let gamma = 1.0 / c;
            let mut worst = 0.0_f64;
            for i in 0..13 {
                let zstar = -1.0 + 3.0 * i as f64 / 12.0;
                for j in 0..9 {
                    let z = zstar - 0.25 * j as f64;
                    let got = ay_martingale(&u, (gamma * z).exp(), (gamma * zstar).exp())?;
                    let want = phi_bm(z, zstar, gamma)?;
                    worst = worst.max((got - want).abs() / want.abs().max(1.0));
                }
            }
            Some(worst)
        }
        _ => None,
    };
    let cross_ok = cross_worst.map_or(true, |w| w <= 1e-10);

    let envelope = concave_envelope(&u, cfg.ay.strike)?;
    let floored_value = snell_from_envelope(&u, cfg.ay.strike, cfg.ay.level)?;

    let ensemble = if cfg.ay.ensemble {
        let seed = cfg.require_seed()?;
        let t = cfg.run.t.unwrap_or(2.0);
        let steps = cfg.run.steps.unwrap_or(200);
        Some(ay_ensemble_gbm(
            &cfg.gbm()?,
            t,
            steps,
            cfg.run.paths,
            seed,
        )?)
    } else {
        None
    };
    let ensemble_ok = ensemble
        .as_ref()
        .map_or(true, |e| e.consistent && e.pathwise_violations == 0);

    let pass = path_ok && cross_ok && ensemble_ok;
    Ok(Outcome {
        report: json!({
            "family": to_value(&u),
            "path": to_value(&path),
            "path_ok": path_ok,
            "cross_family_worst": cross_worst,
            "envelope": to_value(&envelope),
            "floored_value": floored_value,
            "ensemble": ensemble.as_ref().map(to_value),
        }),
        pass,
        csv: None,
    })
}
