//! CSV curves and JSON sidecars.
//!
//! Column sets:
//! - waveform: `time_s, flux_per_s` (time relative to the read origin)
//! - scan: `value, eta_cond, eta_fiber_coupled, fwhm_s, multi_peak,
//!   read_rabi_bar_rad_per_s, warnings, error`
//! - power curve: `read_rabi_bar_rad_per_s, eta_cond, stage`
//! - gate scan: `gate_s, dark_probability, g2_conditional, g2_unconditional`

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::correlators::Waveform;
use crate::error::Result;

use super::{GatePoint, PowerOptimum, ScanResult};

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_waveform_csv(path: &Path, w: &Waveform) -> Result<()> {
    let mut out = csv::Writer::from_path(path)?;
    out.write_record(["time_s", "flux_per_s"])?;
    for (t, f) in w.times.iter().zip(&w.flux) {
        out.write_record([t.to_string(), f.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_scan_csv(path: &Path, scan: &ScanResult) -> Result<()> {
    let mut out = csv::Writer::from_path(path)?;
    out.write_record([
        "value",
        "eta_cond",
        "eta_fiber_coupled",
        "fwhm_s",
        "multi_peak",
        "read_rabi_bar_rad_per_s",
        "warnings",
        "error",
    ])?;
    for p in &scan.points {
        let warnings: Vec<String> = p
            .warnings
            .iter()
            .map(|w| serde_json::to_string(w).unwrap_or_default())
            .collect();
        out.write_record([
            p.value.to_string(),
            opt(p.efficiency.map(|e| e.eta_cond)),
            opt(p.efficiency.map(|e| e.eta_fiber_coupled)),
            opt(p.fwhm),
            p.multi_peak.to_string(),
            opt(p.read_rabi_bar),
            warnings.join(";"),
            p.error.clone().unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_power_csv(path: &Path, o: &PowerOptimum) -> Result<()> {
    let mut out = csv::Writer::from_path(path)?;
    out.write_record(["read_rabi_bar_rad_per_s", "eta_cond", "stage"])?;
    for (stage, samples) in [("grid", &o.curve), ("refine", &o.refinement)] {
        for s in samples {
            out.write_record([
                s.rabi_bar.to_string(),
                s.eta_cond.to_string(),
                stage.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_gate_csv(path: &Path, points: &[GatePoint]) -> Result<()> {
    let mut out = csv::Writer::from_path(path)?;
    out.write_record([
        "gate_s",
        "dark_probability",
        "g2_conditional",
        "g2_unconditional",
    ])?;
    for p in points {
        out.write_record([
            p.gate.to_string(),
            p.dark_probability.to_string(),
            p.g2_conditional.to_string(),
            p.g2_unconditional.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}
