//! Command-line experiment runner.
//!
//! Exit codes: 0 success, 2 configuration/schema error, 3 numerical
//! failure, 4 selftest threshold failure.

use clap::{Parser, Subcommand};
use ritzkit::config::ExperimentConfig;
use ritzkit::dynamics::{TrainingTrace, TraceRecord};
use ritzkit::error::RitzError;
use ritzkit::operators::RobinSpec;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ritzkit", version, about = "Neural PDE solver laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a JSON config, writing artifacts to its
    /// output directory.
    Run {
        config: PathBuf,
        /// Override the config's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a finished run against a reference field on time slices.
    Compare {
        dir: PathBuf,
        /// "cole_hopf", "self", or a manufactured-solution id.
        #[arg(long = "ref")]
        reference: String,
    },
    /// Issue a boundary coercivity certificate for a config's network at
    /// initialization.
    AuditCoercivity { config: PathBuf },
    /// Fit a convergence-rate regime to an existing trace.csv.
    FitRate { trace: PathBuf },
    /// Run the built-in finite-difference and quadrature oracle checks.
    Selftest,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_SELFTEST: u8 = 4;

fn exit_for(err: &RitzError) -> u8 {
    match err {
        RitzError::Config(_) | RitzError::UnknownFunction(_) => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    }
}

fn main() -> ExitCode {
    ritzkit::init_threads();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}

fn dispatch(cmd: Command) -> ritzkit::Result<u8> {
    match cmd {
        Command::Run { config, seed } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| RitzError::Config(format!("{}: {e}", config.display())))?;
            let mut cfg = ExperimentConfig::from_json(&text)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let result = ritzkit::runner::run_experiment(&cfg)?;
            let last = result.trace.records.last().unwrap();
            println!(
                "{}: {} steps, loss {:.6e} -> {:.6e}, artifacts in {}",
                cfg.name,
                last.step,
                result.trace.records[0].loss,
                last.loss,
                result.output_dir.display()
            );
            Ok(0)
        }
        Command::Compare { dir, reference } => {
            let errors = ritzkit::runner::compare_run(&dir, &reference)?;
            println!("t,l2,linf");
            for e in &errors {
                println!("{:.2},{:.6e},{:.6e}", e.t, e.l2, e.linf);
            }
            Ok(0)
        }
        Command::AuditCoercivity { config } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| RitzError::Config(format!("{}: {e}", config.display())))?;
            let cfg = ExperimentConfig::from_json(&text)?;
            let domain = cfg.build_domain()?;
            let params = cfg.build_network(domain.dim())?;
            let robin = RobinSpec::new(cfg.problem.robin[0], cfg.problem.robin[1])?;
            let cert =
                ritzkit::diagnostics::audit_coercivity(&params, &robin, &domain, cfg.seed)?;
            println!(
                "lambda_min={:.6e} C={:.6e} se={:.6e} degenerate={} n_quadrature={}",
                cert.lambda_min, cert.c, cert.lambda_min_se, cert.degenerate, cert.n_quadrature
            );
            Ok(0)
        }
        Command::FitRate { trace } => {
            let text = std::fs::read_to_string(&trace)
                .map_err(|e| RitzError::Config(format!("{}: {e}", trace.display())))?;
            let tr = parse_trace_csv(&text)?;
            let fit = ritzkit::dynamics::fit_rate(&tr)?;
            println!(
                "{{\"regime\":\"{}\",\"epsilon\":{},\"C\":{},\"r2\":{}}}",
                fit.regime.as_str(),
                fit.epsilon_hat,
                fit.constant,
                fit.r_squared
            );
            Ok(0)
        }
        Command::Selftest => {
            if selftest() {
                println!("selftest: all checks passed");
                Ok(0)
            } else {
                Ok(EXIT_SELFTEST)
            }
        }
    }
}

fn parse_trace_csv(text: &str) -> ritzkit::Result<TrainingTrace> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header.trim() != "step,time,loss,grad_norm,a_norm" {
        return Err(RitzError::InvalidData(format!("unexpected trace header '{header}'")));
    }
    let mut tr = TrainingTrace {
        scheme: "csv".into(),
        eta: 0.0,
        records: Vec::new(),
        thetas: Vec::new(),
    };
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(RitzError::InvalidData(format!("bad trace row {}", ln + 2)));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| RitzError::InvalidData(format!("row {}: {e}", ln + 2)))
        };
        tr.records.push(TraceRecord {
            step: cols[0]
                .trim()
                .parse()
                .map_err(|e| RitzError::InvalidData(format!("row {}: {e}", ln + 2)))?,
            time: parse(cols[1])?,
            loss: parse(cols[2])?,
            grad_norm: parse(cols[3])?,
            a_norm: parse(cols[4])?,
            dist_to_final: None,
        });
    }
    Ok(tr)
}

/// Fast independent-oracle checks: tanh derivative FD, loss gradient FD,
/// Gauss–Hermite weight normalization, Cole–Hopf vs finite differences,
/// and the Jacobi eigensolver vs a closed form.
fn selftest() -> bool {
    let mut ok = true;
    let mut check = |name: &str, pass: bool| {
        println!("{} {}", if pass { "PASS" } else { "FAIL" }, name);
        ok &= pass;
    };

    // tanh derivative recurrence vs central finite differences
    let mut worst: f64 = 0.0;
    for k in 1..=4usize {
        for i in 0..9 {
            let t = -2.0 + 0.5 * i as f64;
            let h = 1e-5;
            let fd = (ritzkit::net::tanh_kth_derivative(k - 1, t + h).unwrap()
                - ritzkit::net::tanh_kth_derivative(k - 1, t - h).unwrap())
                / (2.0 * h);
            let an = ritzkit::net::tanh_kth_derivative(k, t).unwrap();
            worst = worst.max((fd - an).abs());
        }
    }
    check("tanh derivative recurrence vs finite differences", worst < 1e-8);

    // loss gradient vs finite differences on a small Burgers problem
    let grad_ok = (|| -> ritzkit::Result<bool> {
        let cfg = ExperimentConfig::from_json(
            r#"{
            "name": "selftest",
            "seed": 5,
            "domain": {"kind": "time_slab", "t_range": [0.0, 1.0], "space": [[-1.0, 1.0]]},
            "network": {"m": 5, "init": "random_feature"},
            "problem": {"kind": "burgers", "nu": 0.0031830988618379067, "g": "neg_sin_pi_x"},
            "collocation": {"n_interior": 15, "n_boundary": 6},
            "dynamics": {"scheme": "igd", "eta": 0.5, "steps": 1},
            "output_dir": "/tmp/ritzkit-selftest"
        }"#,
        )?;
        let domain = cfg.build_domain()?;
        let mut params = cfg.build_network(domain.dim())?;
        for (i, a) in params.a.iter_mut().enumerate() {
            *a = 0.1 * (i as f64 + 1.0);
        }
        let spec = cfg.build_loss_spec(&domain)?;
        let ev = ritzkit::loss::LossEvaluator::new(spec, &params)?;
        let theta = ritzkit::loss::pack(&params);
        let grad = ev.grad(&theta)?;
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..theta.len() {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[i] += h;
            tm[i] -= h;
            let fd = (ev.loss(&tp)? - ev.loss(&tm)?) / (2.0 * h);
            worst = worst.max((fd - grad[i]).abs());
        }
        Ok(worst < 1e-6)
    })()
    .unwrap_or(false);
    check("loss gradient vs finite differences", grad_ok);

    // Gauss–Hermite weights integrate exp(-z^2) to sqrt(pi)
    let gh = ritzkit::reference::gauss_hermite(64);
    let wsum: f64 = gh.1.iter().sum();
    check(
        "Gauss-Hermite weight normalization",
        (wsum - std::f64::consts::PI.sqrt()).abs() < 1e-12,
    );

    // Cole–Hopf Burgers reference vs Crank–Nicolson finite differences
    let nu = 0.01 / std::f64::consts::PI;
    let ch_ok = match (
        ritzkit::reference::burgers_reference(0.5, 0.25, nu),
        ritzkit::reference::burgers_fd_reference(0.5, 0.25, nu, 2048, 4096),
    ) {
        (Ok(a), Ok(b)) => (a - b).abs() < 1e-4,
        _ => false,
    };
    check("Cole-Hopf reference vs finite-difference solver", ch_ok);

    // Jacobi eigensolver vs 2x2 closed form
    let mat = ritzkit::diagnostics::GramMatrix {
        n: 2,
        data: vec![2.0, 0.7, 0.7, 1.1],
        provenance: ritzkit::diagnostics::Provenance::InteriorOuter,
    };
    let jac_ok = match ritzkit::diagnostics::min_eigenvalue(&mat) {
        Ok(lmin) => {
            let tr: f64 = 3.1;
            let det: f64 = 2.0 * 1.1 - 0.49;
            let exact = (tr - (tr * tr - 4.0 * det).sqrt()) / 2.0;
            (lmin - exact).abs() < 1e-12
        }
        Err(_) => false,
    };
    check("Jacobi eigensolver vs closed form", jac_ok);

    ok
}
