//! Experiment driver: assembles a configured problem, runs the training
//! dynamics, and writes the artifact files (trace.csv, gram_drift.csv,
//! rate_fit.json, summary.json, params_final.json, metadata.json).
//!
//! All numeric output files are deterministic for a fixed config; wall-clock
//! timestamps live only in metadata.json.

use crate::config::{DiagnosticsConfig, DynamicsConfig, ExperimentConfig};
use crate::diagnostics::{self, GramMatrix, Region};
use crate::dynamics::{self, FlowOptions, InnerOptions, TrainingTrace};
use crate::error::{Result, RitzError};
use crate::geometry::PRNG_ID;
use crate::loss::LossEvaluator;
use crate::operators::RobinSpec;
use serde_json::{json, Value};
use std::fs;
use std::path::{Path, PathBuf};

/// Writes `contents` to `path` atomically (temp file in the same directory,
/// then rename).
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().ok_or_else(|| {
        RitzError::Config(format!("output path {} has no parent directory", path.display()))
    })?;
    fs::create_dir_all(dir).map_err(|e| RitzError::Config(e.to_string()))?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out")
    ));
    fs::write(&tmp, contents).map_err(|e| RitzError::Config(e.to_string()))?;
    fs::rename(&tmp, path).map_err(|e| RitzError::Config(e.to_string()))?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct GramDriftRow {
    pub iteration: usize,
    pub provenance: &'static str,
    pub rel_drift: f64,
    pub min_eig: f64,
}

fn gram_drift_csv(rows: &[GramDriftRow]) -> String {
    let mut out = String::from("iteration,provenance,rel_drift,min_eig\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.17e},{:.17e}\n",
            r.iteration, r.provenance, r.rel_drift, r.min_eig
        ));
    }
    out
}

/// Everything a run produces, returned to callers (tests, CLI) in addition
/// to being written to disk.
pub struct RunResult {
    pub trace: TrainingTrace,
    pub theta_final: Vec<f64>,
    pub gram_rows: Vec<GramDriftRow>,
    pub summary: Value,
    pub output_dir: PathBuf,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult> {
    let out_dir = PathBuf::from(&cfg.output_dir);
    fs::create_dir_all(&out_dir).map_err(|e| RitzError::Config(e.to_string()))?;

    // metadata first so a numeric failure still leaves a record of the run
    let metadata = json!({
        "config": serde_json::to_value(cfg).map_err(|e| RitzError::Config(e.to_string()))?,
        "version": env!("CARGO_PKG_VERSION"),
        "prng": PRNG_ID,
        "started_unix_ms": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0),
    });
    write_atomic(&out_dir.join("metadata.json"), &pretty(&metadata)?)?;

    let domain = cfg.build_domain()?;
    let params0 = cfg.build_network(domain.dim())?;
    let spec = cfg.build_loss_spec(&domain)?;
    let evaluator = LossEvaluator::new(spec, &params0)?;
    let theta0 = crate::loss::pack(&params0);

    let diag = &cfg.diagnostics;
    let mut summary = json!({
        "name": cfg.name,
        "seed": cfg.seed,
        "m": params0.m(),
        "dim": domain.dim(),
        "n_interior": cfg.collocation.n_interior,
        "n_boundary": cfg.collocation.n_boundary,
        "initial_loss": evaluator.loss(&theta0)?,
    });

    // at-init full Gram minimum eigenvalues (inner-weight and outer blocks)
    if diag.init_gram_eigs {
        let (g_inner, g_outer) = diagnostics::gram_full(&evaluator, &theta0)?;
        summary["init_lambda_min_inner"] = json!(diagnostics::min_eigenvalue(&g_inner)?);
        summary["init_lambda_min_outer"] = json!(diagnostics::min_eigenvalue(&g_outer)?);
    }

    let (theta_final, mut trace) = run_dynamics(cfg, &evaluator, &theta0, &mut summary)?;

    write_atomic(&out_dir.join("trace.csv"), &trace.to_csv())?;

    let gram_rows = if diag.gram_stride > 0 {
        let rows = gram_drift_rows(&evaluator, &trace, diag)?;
        write_atomic(&out_dir.join("gram_drift.csv"), &gram_drift_csv(&rows))?;
        rows
    } else {
        Vec::new()
    };

    if diag.rate_fit {
        let fit = dynamics::fit_rate(&trace)?;
        let fit_json = json!({
            "regime": fit.regime.as_str(),
            "epsilon": fit.epsilon_hat,
            "C": fit.constant,
            "r2": fit.r_squared,
        });
        write_atomic(&out_dir.join("rate_fit.json"), &pretty(&fit_json)?)?;
        summary["rate_fit"] = fit_json;
    }

    if diag.coercivity_audit {
        let robin = RobinSpec::new(cfg.problem.robin[0], cfg.problem.robin[1])?;
        let final_params = evaluator.params_with(&theta_final);
        let cert = diagnostics::audit_coercivity(&final_params, &robin, &domain, cfg.seed)?;
        summary["coercivity"] = json!({
            "lambda_min": cert.lambda_min,
            "c": cert.c,
            "lambda_min_se": cert.lambda_min_se,
            "degenerate": cert.degenerate,
            "n_quadrature": cert.n_quadrature,
        });
    }

    let last = trace.records.last().expect("trace always has the initial record");
    summary["final_loss"] = json!(last.loss);
    summary["final_grad_norm"] = json!(last.grad_norm);
    summary["final_a_norm"] = json!(last.a_norm);
    summary["steps_recorded"] = json!(trace.records.len());

    write_atomic(&out_dir.join("summary.json"), &pretty(&summary)?)?;
    let final_params = evaluator.params_with(&theta_final);
    write_atomic(&out_dir.join("params_final.json"), &pretty(&final_params.to_json())?)?;

    trace.thetas.clear();
    Ok(RunResult { trace, theta_final, gram_rows, summary, output_dir: out_dir })
}

fn run_dynamics(
    cfg: &ExperimentConfig,
    evaluator: &LossEvaluator,
    theta0: &[f64],
    summary: &mut Value,
) -> Result<(Vec<f64>, TrainingTrace)> {
    match &cfg.dynamics {
        DynamicsConfig::Igd { eta, steps, inner_max_iters, inner_grad_tol, record_stride } => {
            let inner = InnerOptions { max_iters: *inner_max_iters, grad_tol: *inner_grad_tol };
            let (theta, trace, stats) =
                dynamics::run_igd(evaluator, theta0, *eta, *steps, &inner, *record_stride)?;
            summary["igd"] = json!({
                "eta": eta,
                "steps": steps,
                "converged_steps": stats.converged_steps,
                "stalled_steps": stats.stalled_steps,
                "max_fixed_point_residual": stats.max_fixed_point_residual,
            });
            Ok((theta, trace))
        }
        DynamicsConfig::Gd { eta, steps, record_stride } => {
            let (theta, trace) = dynamics::run_gd(evaluator, theta0, *eta, *steps, *record_stride)?;
            summary["gd"] = json!({ "eta": eta, "steps": steps });
            Ok((theta, trace))
        }
        DynamicsConfig::GradientFlow { dt, horizon, record_stride, loss_drop_factor } => {
            let loss_floor = match loss_drop_factor {
                Some(f) => {
                    if !(*f > 1.0) {
                        return Err(RitzError::Config("loss_drop_factor must be > 1".into()));
                    }
                    Some(evaluator.loss(theta0)? / f)
                }
                None => None,
            };
            let opts = FlowOptions {
                horizon: *horizon,
                dt: *dt,
                record_stride: *record_stride,
                loss_floor,
            };
            let (theta, trace) = dynamics::gradient_flow(evaluator, theta0, &opts)?;
            summary["gradient_flow"] = json!({
                "dt": dt,
                "horizon": horizon,
                "loss_floor": loss_floor,
            });
            Ok((theta, trace))
        }
    }
}

/// Interior/boundary outer-kernel drift relative to the Gram at the first
/// recorded iterate, plus the minimum eigenvalue at each snapshot.
fn gram_drift_rows(
    evaluator: &LossEvaluator,
    trace: &TrainingTrace,
    diag: &DiagnosticsConfig,
) -> Result<Vec<GramDriftRow>> {
    let stride = diag.gram_stride;
    let mut rows = Vec::new();
    let mut base: Option<(GramMatrix, GramMatrix)> = None;
    for (rec, theta) in trace.records.iter().zip(&trace.thetas) {
        let take = rec.step % stride == 0
            || rec.step == trace.records.last().map(|r| r.step).unwrap_or(0);
        if !take {
            continue;
        }
        let ki = diagnostics::gram_outer(evaluator, theta, Region::Interior)?;
        let kb = diagnostics::gram_outer(evaluator, theta, Region::Boundary)?;
        let (ki0, kb0) = match &base {
            Some(pair) => (&pair.0, &pair.1),
            None => {
                base = Some((ki.clone(), kb.clone()));
                let pair = base.as_ref().unwrap();
                (&pair.0, &pair.1)
            }
        };
        rows.push(GramDriftRow {
            iteration: rec.step,
            provenance: ki.provenance.as_str(),
            rel_drift: diagnostics::relative_drift(&ki, ki0)?,
            min_eig: diagnostics::min_eigenvalue(&ki)?,
        });
        rows.push(GramDriftRow {
            iteration: rec.step,
            provenance: kb.provenance.as_str(),
            rel_drift: diagnostics::relative_drift(&kb, kb0)?,
            min_eig: diagnostics::min_eigenvalue(&kb)?,
        });
    }
    Ok(rows)
}

fn pretty(v: &Value) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| RitzError::Config(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

// ---------------------------------------------------------------------------
// Slice comparison against a reference field
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SliceError {
    pub t: f64,
    pub l2: f64,
    pub linf: f64,
}

pub const COMPARE_SLICES: [f64; 3] = [0.25, 0.5, 0.75];
pub const COMPARE_GRID: usize = 201;

/// Evaluates the network stored in `run_dir/params_final.json` against a
/// reference on x-grids at fixed time slices, writing `compare.csv`
/// (t,x,u_net,u_ref) rows plus returning per-slice L²/L∞ errors.
pub fn compare_run(run_dir: &Path, reference: &str) -> Result<Vec<SliceError>> {
    let params_text = fs::read_to_string(run_dir.join("params_final.json"))
        .map_err(|e| RitzError::Config(format!("missing params_final.json: {e}")))?;
    let params_value: Value =
        serde_json::from_str(&params_text).map_err(|e| RitzError::InvalidData(e.to_string()))?;
    let params = crate::net::NetworkParams::from_json(&params_value)?;
    if params.d() != 2 {
        return Err(RitzError::Config("compare expects a 2-d (t, x) network".into()));
    }
    let meta_text = fs::read_to_string(run_dir.join("metadata.json"))
        .map_err(|e| RitzError::Config(format!("missing metadata.json: {e}")))?;
    let meta: Value =
        serde_json::from_str(&meta_text).map_err(|e| RitzError::Config(e.to_string()))?;

    enum Ref {
        ColeHopf { nu: f64 },
        SelfDump,
        Manufactured(crate::reference::ManufacturedId),
    }
    let r = match reference {
        "cole_hopf" => {
            let nu = meta["config"]["problem"]["nu"].as_f64().ok_or_else(|| {
                RitzError::Config("cole_hopf comparison needs a burgers run (problem.nu)".into())
            })?;
            Ref::ColeHopf { nu }
        }
        "self" => Ref::SelfDump,
        other => Ref::Manufactured(crate::reference::ManufacturedId::parse(other)?),
    };

    let mut csv = String::from("t,x,u_net,u_ref\n");
    let mut errors = Vec::new();
    for &t in &COMPARE_SLICES {
        let mut sq = 0.0;
        let mut linf: f64 = 0.0;
        for i in 0..COMPARE_GRID {
            let x = -1.0 + 2.0 * i as f64 / (COMPARE_GRID - 1) as f64;
            let u_net = params.eval(&[t, x])?;
            let u_ref = match &r {
                Ref::ColeHopf { nu } => crate::reference::burgers_reference(t, x, *nu)?,
                Ref::SelfDump => u_net,
                Ref::Manufactured(id) => crate::reference::manufactured_value(*id, &[t, x])?,
            };
            let e = (u_net - u_ref).abs();
            sq += e * e;
            linf = linf.max(e);
            csv.push_str(&format!("{:.17e},{:.17e},{:.17e},{:.17e}\n", t, x, u_net, u_ref));
        }
        // trapezoidal-style L2 over the uniform grid
        let l2 = (sq * 2.0 / COMPARE_GRID as f64).sqrt();
        errors.push(SliceError { t, l2, linf });
    }
    write_atomic(&run_dir.join("compare.csv"), &csv)?;
    Ok(errors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn tiny_config(dir: &str) -> ExperimentConfig {
        let text = format!(
            r#"{{
            "name": "tiny",
            "seed": 11,
            "domain": {{"kind": "time_slab", "t_range": [0.0, 1.0], "space": [[-1.0, 1.0]]}},
            "network": {{"m": 6, "init": "random_feature"}},
            "problem": {{"kind": "burgers", "nu": 0.0031830988618379067, "g": "neg_sin_pi_x"}},
            "collocation": {{"n_interior": 30, "n_boundary": 10}},
            "dynamics": {{"scheme": "igd", "eta": 0.5, "steps": 5}},
            "diagnostics": {{"gram_stride": 1}},
            "output_dir": "{dir}"
        }}"#
        );
        ExperimentConfig::from_json(&text).unwrap()
    }

    #[test]
    fn run_writes_artifacts_and_is_bitwise_reproducible() {
        let base = std::env::temp_dir().join(format!("ritzkit_run_{}", std::process::id()));
        let d1 = base.join("a");
        let d2 = base.join("b");
        let mut cfg = tiny_config(d1.to_str().unwrap());
        let r1 = run_experiment(&cfg).unwrap();
        cfg.output_dir = d2.to_str().unwrap().into();
        let r2 = run_experiment(&cfg).unwrap();
        for f in ["trace.csv", "gram_drift.csv", "summary.json", "params_final.json"] {
            let a = std::fs::read_to_string(d1.join(f)).unwrap();
            let b = std::fs::read_to_string(d2.join(f)).unwrap();
            assert_eq!(a, b, "{f} differs between identical runs");
        }
        assert!(r1.trace.records.len() >= 2);
        assert_eq!(r1.theta_final, r2.theta_final);
        // IGD never increases the loss
        for w in r1.trace.records.windows(2) {
            assert!(w[1].loss <= w[0].loss + 1e-12);
        }
        std::fs::remove_dir_all(&base).ok();
    }

    #[test]
    fn compare_against_self_is_exact() {
        let dir = std::env::temp_dir().join(format!("ritzkit_cmp_{}", std::process::id()));
        let cfg = tiny_config(dir.to_str().unwrap());
        run_experiment(&cfg).unwrap();
        let errs = compare_run(&dir, "self").unwrap();
        for e in errs {
            assert_eq!(e.l2, 0.0);
            assert_eq!(e.linf, 0.0);
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn zero_network_linf_equals_max_reference() {
        let dir = std::env::temp_dir().join(format!("ritzkit_zero_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let nu = 0.01 / std::f64::consts::PI;
        let params = crate::net::NetworkParams::new(
            vec![0.0; 3],
            vec![vec![0.1, 0.2]; 3],
            vec![0.0; 3],
            crate::net::Scaling::Plain,
            crate::net::Trainable::OuterOnly,
        )
        .unwrap();
        write_atomic(&dir.join("params_final.json"), &params.to_json().to_string()).unwrap();
        let meta = serde_json::json!({"config": {"problem": {"nu": nu}}});
        write_atomic(&dir.join("metadata.json"), &serde_json::to_string(&meta).unwrap())
            .unwrap();
        let errs = compare_run(&dir, "cole_hopf").unwrap();
        let e = &errs[0];
        let mut max_ref: f64 = 0.0;
        for i in 0..COMPARE_GRID {
            let x = -1.0 + 2.0 * i as f64 / (COMPARE_GRID - 1) as f64;
            max_ref = max_ref.max(crate::reference::burgers_reference(0.25, x, nu).unwrap().abs());
        }
        assert!((e.linf - max_ref).abs() < 1e-14);
        std::fs::remove_dir_all(&dir).ok();
    }
}
