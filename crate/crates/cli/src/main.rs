use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use dlcz_core::analysis::figures::{preset, preset_names, reproduce_figure, FIGURE_IDS};
use dlcz_core::analysis::output::{
    write_gate_csv, write_json, write_power_csv, write_scan_csv, write_waveform_csv,
};
use dlcz_core::analysis::{g2_gate_scan, run, scan_delay, scan_duration, scan_power, ScanResult};
use dlcz_core::config::{load_scenario_file, scenario_hash, to_canonical_toml};
use dlcz_core::model::Scenario;
use dlcz_core::regime::{validate_regime, RegimeThresholds};
use dlcz_core::units::{parse_quantity, Dimension};
use dlcz_core::Error;

const OUTPUT_HELP: &str = "\
Output files (CSV, one header row):
  waveform.csv         time_s, flux_per_s
                       time is relative to the read origin (write window end + storage delay);
                       flux is photons per second in the first fiber, conditioned on a write click
  scan_<param>.csv     value, eta_cond, eta_fiber_coupled, fwhm_s, multi_peak,
                       read_rabi_bar_rad_per_s, warnings, error
                       value is in SI units (s for durations and delays, rad/s for barred Rabi);
                       warnings is a ';'-joined list of JSON objects, error is empty on success
  power_curve.csv      read_rabi_bar_rad_per_s, eta_cond, stage (grid | refine)
  g2_gate.csv          gate_s, dark_probability, g2_conditional, g2_unconditional
Every CSV has a JSON sidecar with scalars and provenance (scenario hash, tool version).

Exit codes: 0 success, 1 input error, 2 numerical non-convergence, 3 partial scan failure.";

#[derive(Parser)]
#[command(name = "dlcz", version, about = "Conditional read-photon simulator for DLCZ atomic-ensemble sources", after_help = OUTPUT_HELP)]
struct Cli {
    /// Scenario document (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Built-in scenario preset, used when --config is absent.
    #[arg(long, global = true)]
    preset: Option<String>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Relative quadrature tolerance, overriding the scenario's.
    #[arg(long, global = true)]
    tolerance: Option<f64>,

    /// Worker threads for scans (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Recorded in the JSON sidecars; the simulator itself is deterministic.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Efficiency, waveform and regime warnings of one scenario.
    Run,
    /// Scan the read-pulse duration (intensity FWHM).
    ScanDuration(ValueList),
    /// Scan the storage delay.
    ScanDelay(ValueList),
    /// Scan the peak read Rabi frequency Ω (halved internally).
    ScanPower(ValueList),
    /// g² against the detection gate width at the scenario's dark-count rate.
    G2 {
        /// Pair excitation probability; defaults to the simulated write probability.
        #[arg(long)]
        p: Option<f64>,
        /// Number of independent photon modes.
        #[arg(long, default_value_t = 1)]
        modes: u32,
        /// Gate widths with units.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "10 ns,30 ns,100 ns,300 ns,1 us,3 us,10 us,30 us"
        )]
        gates: Vec<String>,
    },
    /// Reproduce a figure (or `all`) from the built-in presets.
    ReproduceFigure {
        /// One of fig2, fig3, fig5-rexp, fig5-timebin, figS1, figS2, all.
        id: String,
    },
    /// Parse a scenario, print its canonical form, hash and regime warnings.
    Validate,
}

#[derive(Args)]
struct ValueList {
    /// Comma-separated values with units, e.g. "35 ns,1 us".
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
}

enum Failure {
    Input(anyhow::Error),
    NonConvergence(anyhow::Error),
    PartialScan(usize),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let nonconvergent = e.chain().any(|c| {
            matches!(
                c.downcast_ref::<Error>(),
                Some(Error::NonConvergence { .. })
            )
        });
        if nonconvergent {
            Failure::NonConvergence(e)
        } else {
            Failure::Input(e)
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::from(anyhow::Error::new(e))
    }
}

fn scenario(cli: &Cli) -> anyhow::Result<Scenario> {
    let mut s = match (&cli.config, &cli.preset) {
        (Some(path), _) => {
            load_scenario_file(path).with_context(|| format!("loading {}", path.display()))?
        }
        (None, Some(name)) => preset(name)?,
        (None, None) => bail!(
            "pass --config <path> or --preset <name> (presets: {})",
            preset_names().collect::<Vec<_>>().join(", ")
        ),
    };
    if let Some(tol) = cli.tolerance {
        s.numerics.quadrature = s.numerics.quadrature.with_tol(tol);
        s.validate()?;
    }
    Ok(s)
}

fn quantities(field: &str, values: &[String], dim: Dimension) -> anyhow::Result<Vec<f64>> {
    values
        .iter()
        .map(|v| Ok(parse_quantity(field, v, dim, false)?))
        .collect()
}

fn sidecar(cli: &Cli, body: serde_json::Value) -> serde_json::Value {
    json!({ "seed": cli.seed, "result": body })
}

fn finish_scan(cli: &Cli, name: &str, scan: &ScanResult) -> Result<(), Failure> {
    let out = &cli.out;
    write_scan_csv(&out.join(format!("scan_{name}.csv")), scan)?;
    write_json(
        &out.join(format!("scan_{name}.json")),
        &sidecar(cli, serde_json::to_value(scan).map_err(Error::from)?),
    )?;
    for p in &scan.points {
        match (&p.efficiency, &p.error) {
            (Some(e), _) => println!("{:e}\t{:.6}", p.value, e.eta_cond),
            (None, Some(msg)) => println!("{:e}\tfailed: {msg}", p.value),
            _ => {}
        }
    }
    let failed = scan.failures();
    if failed == 0 {
        Ok(())
    } else if failed == scan.points.len() && scan.points.iter().all(|p| p.nonconvergent) {
        Err(Failure::NonConvergence(anyhow::anyhow!(
            "every scan point failed to converge"
        )))
    } else {
        Err(Failure::PartialScan(failed))
    }
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let out: &Path = &cli.out;
    if !matches!(cli.command, Command::Validate) {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    }
    match &cli.command {
        Command::Run => {
            let s = scenario(cli)?;
            let r = run(&s)?;
            write_waveform_csv(&out.join("waveform.csv"), &r.retrieval.waveform)?;
            if let Some(o) = &r.optimum {
                write_power_csv(&out.join("power_curve.csv"), o)?;
            }
            let e = r.retrieval.efficiency;
            let body = json!({
                "eta_cond": e.eta_cond,
                "eta_fiber_coupled": e.eta_fiber_coupled,
                "eta_cond_error": e.error,
                "sampled_eta_cond": r.sampled_eta_cond,
                "write_probability": r.retrieval.write_probability,
                "fwhm_s": r.fwhm.map(|f| f.width),
                "multi_peak": r.fwhm.map(|f| f.multi_peak),
                "class": r.class,
                "read_rabi_bar_rad_per_s": r.read_rabi_bar,
                "retrieval_warnings": r.retrieval.warnings,
                "regime_warnings": r.regime,
                "provenance": r.provenance,
            });
            write_json(&out.join("run.json"), &sidecar(cli, body))?;
            println!("eta_cond\t{:.6}", e.eta_cond);
            println!("eta_fiber_coupled\t{:.6}", e.eta_fiber_coupled);
            if let Some(f) = r.fwhm {
                println!("fwhm_s\t{:e}", f.width);
            }
            for w in &r.regime {
                eprintln!("warning ({:?}): {}", w.severity, w.message);
            }
            Ok(())
        }
        Command::ScanDuration(v) => {
            let s = scenario(cli)?;
            let values = quantities("values", &v.values, Dimension::Time)?;
            finish_scan(cli, "duration", &scan_duration(&s, &values)?)
        }
        Command::ScanDelay(v) => {
            let s = scenario(cli)?;
            let values = quantities("values", &v.values, Dimension::Time)?;
            finish_scan(cli, "delay", &scan_delay(&s, &values)?)
        }
        Command::ScanPower(v) => {
            let s = scenario(cli)?;
            let values: Vec<f64> = quantities("values", &v.values, Dimension::AngularFrequency)?
                .into_iter()
                .map(|omega| 0.5 * omega)
                .collect();
            finish_scan(cli, "power", &scan_power(&s, &values)?)
        }
        Command::G2 { p, modes, gates } => {
            let s = scenario(cli)?;
            let gates = quantities("gates", gates, Dimension::Time)?;
            let r = run(&s)?;
            let p = p.unwrap_or(r.retrieval.write_probability);
            let points = g2_gate_scan(
                &s,
                r.retrieval.efficiency.eta_fiber_coupled,
                p,
                *modes,
                &gates,
            )?;
            write_gate_csv(&out.join("g2_gate.csv"), &points)?;
            let body = json!({
                "p": p,
                "modes": modes,
                "eta_fiber_coupled": r.retrieval.efficiency.eta_fiber_coupled,
                "points": points,
                "provenance": r.provenance,
            });
            write_json(&out.join("g2_gate.json"), &sidecar(cli, body))?;
            for g in &points {
                println!(
                    "{:e}\t{:.6}\t{:.6}",
                    g.gate, g.g2_conditional, g.g2_unconditional
                );
            }
            Ok(())
        }
        Command::ReproduceFigure { id } => {
            let ids: Vec<&str> = if id == "all" {
                FIGURE_IDS.to_vec()
            } else {
                vec![id.as_str()]
            };
            for id in ids {
                let report = reproduce_figure(id, &out.join(id))?;
                for c in &report.checks {
                    println!(
                        "{id}\t{}\t{}\t{:.4} in [{}, {}]",
                        if c.pass { "PASS" } else { "FAIL" },
                        c.name,
                        c.value,
                        c.lo,
                        c.hi
                    );
                }
            }
            Ok(())
        }
        Command::Validate => {
            let s = scenario(cli)?;
            print!("{}", to_canonical_toml(&s));
            println!("# scenario hash {}", scenario_hash(&s));
            for w in validate_regime(&s, &RegimeThresholds::default()) {
                println!("# warning ({:?}): {}", w.severity, w.message);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::NonConvergence(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::PartialScan(n)) => {
            eprintln!("error: {n} scan point(s) failed; see the error column");
            ExitCode::from(3)
        }
    }
}
