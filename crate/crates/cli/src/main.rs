//! Scenario runner: load a scenario (file or bundled name), simulate,
//! export the trace and summary, and exit 0 iff the tail tracking
//! criterion is met.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::Parser;

use coopmatch::controllers::ControlLaw;
use coopmatch::report::{run_and_export, ExportOptions};
use coopmatch::scenario::{builtin_names, load_builtin, load_scenario};
use coopmatch::sim::{InitSpec, Scenario};

#[derive(Parser, Debug)]
#[command(
    name = "coopmatch",
    about = "Simulate heterogeneous agents tracking an input-driven leader",
    after_help = "SCENARIO may be a TOML file path or a bundled name \
                  (paper_fig2a, paper_fig2b).\n\
                  Exit status: 0 = tail criterion met, 1 = criterion not met \
                  or run diverged, 2 = error."
)]
struct Args {
    /// Scenario file path or bundled scenario name.
    #[arg(long)]
    scenario: String,

    /// Output directory for trace, summary and normalized scenario.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Override the integration step size.
    #[arg(long)]
    dt: Option<f64>,

    /// Override the horizon.
    #[arg(long = "t-final")]
    t_final: Option<f64>,

    /// Override the initial-condition seed (switches explicit initial
    /// conditions to a seeded draw over [-3, 3]).
    #[arg(long)]
    seed: Option<u64>,

    /// Override the control law (full_order, reduced_order, adaptive,
    /// saturated).
    #[arg(long)]
    controller: Option<String>,

    /// Fraction of the horizon used as the tail window for the pass/fail
    /// criterion.
    #[arg(long, default_value_t = 1.0 / 6.0)]
    tail_fraction: f64,

    /// Tail tracking-error bound that defines a passing run.
    #[arg(long, default_value_t = 0.05)]
    tolerance: f64,
}

fn resolve_scenario(spec: &str) -> coopmatch::Result<Scenario> {
    let path = PathBuf::from(spec);
    if path.exists() {
        load_scenario(&path)
    } else if let Ok(scn) = load_builtin(spec) {
        Ok(scn)
    } else {
        Err(coopmatch::Error::Parse(format!(
            "'{spec}' is neither a readable file nor a bundled scenario \
             (bundled: {})",
            builtin_names().join(", ")
        )))
    }
}

fn apply_overrides(scn: &mut Scenario, args: &Args) -> coopmatch::Result<()> {
    if let Some(dt) = args.dt {
        scn.dt = dt;
    }
    if let Some(tf) = args.t_final {
        scn.t_final = tf;
    }
    if let Some(seed) = args.seed {
        scn.init = match scn.init {
            InitSpec::Seeded { low, high, .. } => InitSpec::Seeded { seed, low, high },
            InitSpec::Explicit(_) => InitSpec::seeded(seed),
        };
    }
    if let Some(law) = &args.controller {
        scn.controller.law = ControlLaw::from_str(law)?;
    }
    Ok(())
}

fn run(args: &Args) -> coopmatch::Result<bool> {
    let mut scn = resolve_scenario(&args.scenario)?;
    apply_overrides(&mut scn, args)?;

    let opts = ExportOptions {
        tail_fraction: args.tail_fraction,
        tolerance: args.tolerance,
    };
    let started = std::time::Instant::now();
    let report = run_and_export(&scn, &args.out, &opts)?;
    let elapsed = started.elapsed();

    let s = &report.summary;
    println!(
        "scenario {} | law {} | dt {:.1e} | horizon {} s | seed {}",
        s.scenario,
        s.law,
        s.dt,
        s.t_final,
        s.seed.map_or("explicit".to_string(), |v| v.to_string()),
    );
    println!(
        "synthesis: gamma = {:.4}, mu = {:.4}, riccati residual = {:.2e}, \
         coupled margin = {:.4}, observer margin = {:.4}",
        s.synthesis.gamma,
        s.synthesis.mu,
        s.synthesis.certificates.riccati_residual,
        s.synthesis.certificates.coupled_margin,
        s.synthesis.certificates.observer_margin,
    );
    if let Some(div) = &s.divergence {
        println!(
            "DIVERGED at t = {:.4} s (max |state| = {:.3e})",
            div.time, div.max_abs
        );
    }
    if let Some(tracking) = &s.tracking {
        for a in &tracking.per_agent {
            let theta = a
                .theta_final
                .map_or(String::new(), |th| format!(", theta = {th:.4}"));
            println!(
                "agent {} ({}): tail max |e| = {:.3e}, final |e| = {:.3e}{}",
                a.agent, a.label, a.tail_max_abs_error, a.final_abs_error, theta
            );
        }
    }
    if let Some(fits) = &s.observer_fits {
        for f in fits {
            if f.converged_at_start {
                println!("observer {}: converged at start", f.agent);
            } else {
                println!(
                    "observer {}: lambda0 = {:.4}, R^2 = {:.5}",
                    f.agent, f.lambda0, f.r_squared
                );
            }
        }
    }
    if let Some(p) = &report.trace_path {
        println!("trace: {}", p.display());
    }
    println!("summary: {}", report.summary_path.display());
    println!(
        "gate: tail |e| <= {} over final {:.1}%: {} ({:.2} s)",
        args.tolerance,
        args.tail_fraction * 100.0,
        if report.passed { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    Ok(report.passed)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
