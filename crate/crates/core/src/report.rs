//! Run orchestration: execute a scenario, export the trace and a summary
//! document, and gate on the tail-tracking criterion.

use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scenario::save_scenario;
use crate::sim::{observer_convergence, tracking_report, ObserverFit, Scenario, Simulation,
    TrackingReport};
use crate::synthesis::{Certificates, SynthesisResult};

/// Serializable view of a synthesis result.
#[derive(Clone, Debug, Serialize)]
pub struct SynthesisSummary {
    pub gamma: f64,
    pub mu: f64,
    pub k: Vec<f64>,
    pub k0: Vec<f64>,
    pub l0: Vec<f64>,
    pub p: Vec<Vec<f64>>,
    pub certificates: Certificates,
}

impl SynthesisSummary {
    pub fn from_result(syn: &SynthesisResult) -> Self {
        let p = (0..syn.p.nrows())
            .map(|i| (0..syn.p.ncols()).map(|j| syn.p[(i, j)]).collect())
            .collect();
        Self {
            gamma: syn.gamma,
            mu: syn.mu,
            k: syn.k.clone(),
            k0: syn.k0.clone(),
            l0: syn.l0.clone(),
            p,
            certificates: syn.certificates.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DivergenceReport {
    pub time: f64,
    pub max_abs: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GateReport {
    pub tolerance: f64,
    pub tail_fraction: f64,
    pub passed: bool,
}

/// The summary document written next to the trace.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub law: String,
    pub dt: f64,
    pub t_final: f64,
    pub seed: Option<u64>,
    pub steps: usize,
    pub synthesis: SynthesisSummary,
    pub tracking: Option<TrackingReport>,
    pub observer_fits: Option<Vec<ObserverFit>>,
    pub divergence: Option<DivergenceReport>,
    pub gate: GateReport,
}

/// Export-time knobs mirroring the CLI flags.
#[derive(Clone, Copy, Debug)]
pub struct ExportOptions {
    /// Fraction of the horizon used as the tail window.
    pub tail_fraction: f64,
    /// Pass iff every agent's tail error stays within this bound.
    pub tolerance: f64,
}

impl Default for ExportOptions {
    fn default() -> Self {
        Self {
            tail_fraction: 1.0 / 6.0,
            tolerance: 0.05,
        }
    }
}

/// What the export produced; `passed` drives the process exit status.
#[derive(Debug)]
pub struct ExitReport {
    pub passed: bool,
    pub trace_path: Option<PathBuf>,
    pub summary_path: PathBuf,
    pub scenario_path: PathBuf,
    pub summary: RunSummary,
}

/// Run a scenario and write its artifacts into `out_dir`:
/// the delimited trace, the summary document (synthesis certificates,
/// tracking report, observer fits, divergence info) and the normalized
/// scenario. A diverged run still writes a summary naming the divergence
/// time; hard setup errors propagate.
pub fn run_and_export(scn: &Scenario, out_dir: &Path, opts: &ExportOptions) -> Result<ExitReport> {
    std::fs::create_dir_all(out_dir)?;
    let sim = Simulation::new(scn)?;
    let scenario_path = out_dir.join("scenario_normalized.toml");
    save_scenario(scn, &scenario_path)?;

    let synthesis = SynthesisSummary::from_result(sim.synthesis());
    let summary_path = out_dir.join(&scn.output.summary);

    match sim.run() {
        Ok(trace) => {
            let trace_path = out_dir.join(&scn.output.trace);
            let file = std::fs::File::create(&trace_path)?;
            trace.write_csv(BufWriter::new(file))?;

            let tracking = tracking_report(&trace, opts.tail_fraction)?;
            let observer_fits = observer_convergence(&trace).ok();
            let passed = tracking.max_tail_error <= opts.tolerance;
            let summary = RunSummary {
                scenario: scn.name.clone(),
                law: scn.controller.law.name().to_string(),
                dt: trace.dt,
                t_final: trace.t_final,
                seed: trace.seed,
                steps: trace.steps(),
                synthesis,
                tracking: Some(tracking),
                observer_fits,
                divergence: None,
                gate: GateReport {
                    tolerance: opts.tolerance,
                    tail_fraction: opts.tail_fraction,
                    passed,
                },
            };
            write_summary(&summary_path, &summary)?;
            Ok(ExitReport {
                passed,
                trace_path: Some(trace_path),
                summary_path,
                scenario_path,
                summary,
            })
        }
        Err(Error::NumericBlowup { t, max_abs }) => {
            let summary = RunSummary {
                scenario: scn.name.clone(),
                law: scn.controller.law.name().to_string(),
                dt: scn.dt,
                t_final: scn.t_final,
                seed: scn.init.seed(),
                steps: scn.steps(),
                synthesis,
                tracking: None,
                observer_fits: None,
                divergence: Some(DivergenceReport { time: t, max_abs }),
                gate: GateReport {
                    tolerance: opts.tolerance,
                    tail_fraction: opts.tail_fraction,
                    passed: false,
                },
            };
            write_summary(&summary_path, &summary)?;
            Ok(ExitReport {
                passed: false,
                trace_path: None,
                summary_path,
                scenario_path,
                summary,
            })
        }
        Err(e) => Err(e),
    }
}

fn write_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    let mut text = serde_json::to_string_pretty(summary).expect("summary serializes");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
