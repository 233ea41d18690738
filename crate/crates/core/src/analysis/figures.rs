//! Built-in presets and figure reproduction.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::load_scenario;
use crate::correlators::Heralding;
use crate::error::{Error, Result};
use crate::model::{PulseEnvelope, PulseShape, ReadPower, Scenario};
use crate::units::{parse_quantity, Dimension};

use super::output::{write_json, write_power_csv, write_scan_csv, write_waveform_csv};
use super::{
    optimize_read_power, run, run_with, scan_delay, scan_point, Provenance, ScanResult,
    WaveformClass, DEFAULT_POWER_POINTS,
};

pub const FIGURE_IDS: [&str; 6] = [
    "fig2",
    "fig3",
    "fig5-rexp",
    "fig5-timebin",
    "figS1",
    "figS2",
];

const PRESETS: [(&str, &str); 5] = [
    ("figS1", include_str!("../../../../presets/figS1.toml")),
    ("figS2", include_str!("../../../../presets/figS2.toml")),
    (
        "fig5-rexp",
        include_str!("../../../../presets/fig5-rexp.toml"),
    ),
    (
        "fig5-timebin",
        include_str!("../../../../presets/fig5-timebin.toml"),
    ),
    (
        "ideal-od50",
        include_str!("../../../../presets/ideal-od50.toml"),
    ),
];

const PLANS: [(&str, &str); 2] = [
    ("fig2", include_str!("../../../../presets/fig2.toml")),
    ("fig3", include_str!("../../../../presets/fig3.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::UnknownFigure(name.to_string()))
}

pub fn preset(name: &str) -> Result<Scenario> {
    load_scenario(preset_text(name)?)
}

/// A read-duration sweep built from a short and a long reference geometry.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DurationPlan {
    pub short: String,
    pub long: String,
    pub short_duration: String,
    pub long_duration: String,
    pub durations: Vec<String>,
    pub power_lo: f64,
    pub power_hi: f64,
    /// `optimize` or `saturate`.
    pub power_policy: String,
    pub series: Vec<String>,
}

impl DurationPlan {
    pub fn load(id: &str) -> Result<Self> {
        let text = PLANS
            .iter()
            .find(|(n, _)| *n == id)
            .map(|(_, t)| *t)
            .ok_or_else(|| Error::UnknownFigure(id.to_string()))?;
        toml::from_str(text).map_err(|e| Error::Parse {
            line: None,
            message: format!("plan {id}: {}", e.message()),
        })
    }

    fn time(&self, field: &str, text: &str) -> Result<f64> {
        parse_quantity(field, text, Dimension::Time, false)
    }

    pub fn durations(&self) -> Result<Vec<f64>> {
        self.durations
            .iter()
            .map(|d| self.time("durations", d))
            .collect()
    }

    /// Scenario for one read FWHM `tau`; `series` is `dephasing` or
    /// `decoherence_free`.
    pub fn scenario_at(&self, tau: f64, series: &str) -> Result<Scenario> {
        let short = preset(&self.short)?;
        let long = preset(&self.long)?;
        let t0 = self.time("short_duration", &self.short_duration)?;
        let t1 = self.time("long_duration", &self.long_duration)?;
        let u = ((tau / t0).ln() / (t1 / t0).ln()).clamp(0.0, 1.0);
        let mut s = short.clone();
        s.ensemble.d_w_bar =
            short.ensemble.d_w_bar + u * (long.ensemble.d_w_bar - short.ensemble.d_w_bar);
        s.ensemble.d_r_bar =
            short.ensemble.d_r_bar + u * (long.ensemble.d_r_bar - short.ensemble.d_r_bar);
        s.read_pulse = PulseEnvelope::gaussian(short.read_pulse.peak_rabi_bar, tau)?;
        s.storage_delay = 0.0;
        let (lo, hi) = (self.power_lo, self.power_hi);
        s.read_power = match self.power_policy.as_str() {
            "optimize" => ReadPower::Optimize { lo, hi },
            "saturate" => ReadPower::Saturate {
                lo,
                hi,
                fraction: SATURATION_FRACTION,
            },
            other => {
                return Err(Error::invariant(
                    "power_policy",
                    format!("unknown policy {other:?}"),
                ))
            }
        };
        match series {
            "dephasing" => {}
            "decoherence_free" => s = s.decoherence_free(),
            other => {
                return Err(Error::invariant(
                    "series",
                    format!("unknown series {other:?}"),
                ))
            }
        }
        s.validate()?;
        Ok(s)
    }

    /// One scan over the plan's durations. Every point has its own write
    /// stage because the optical depths move with the duration.
    pub fn scan(&self, series: &str) -> Result<ScanResult> {
        let durations = self.durations()?;
        let base = self.scenario_at(durations[0], series)?;
        let points = durations
            .par_iter()
            .map(|&tau| {
                let s = self.scenario_at(tau, series)?;
                let h = Heralding::new(&s)?;
                Ok(scan_point(&h, tau, &s))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ScanResult {
            parameter: "read_duration".into(),
            unit: "s".into(),
            points,
            provenance: Provenance::of(&base),
        })
    }
}

/// Tunes a two-peak read pulse: the first peak alone retrieves half of
/// the plateau efficiency of a single Gaussian of the same width; the
/// second peak is driven at `hi` times the single-sweep matched power.
pub fn tune_time_bin(s: &Scenario, heralding: &Heralding, lo: f64, hi: f64) -> Result<Scenario> {
    let PulseShape::DoubleGaussian {
        fwhm,
        center,
        separation,
        ..
    } = s.read_pulse.shape
    else {
        return Err(Error::invariant(
            "read_pulse.shape",
            "time-bin tuning needs a double_gaussian pulse",
        ));
    };
    let mut single = s.clone();
    single.read_pulse = PulseEnvelope::new(PulseShape::Gaussian { fwhm, center }, 0.0)?;
    let m = single.matched_read_peak(1.0);
    let eta = |peak: f64| -> Result<f64> {
        Ok(heralding
            .efficiency(&single.with_read_peak(peak))?
            .0
            .eta_cond)
    };
    let target = 0.5 * eta(hi * m)?;
    let (mut a, mut b) = ((lo * m).ln(), (hi * m).ln());
    if eta(a.exp())? > target {
        return Err(Error::EmptyBracket {
            lo: lo * m,
            hi: hi * m,
        });
    }
    while b - a > 1e-5 {
        let mid = 0.5 * (a + b);
        if eta(mid.exp())? < target {
            a = mid;
        } else {
            b = mid;
        }
    }
    let first = (0.5 * (a + b)).exp();
    let mut out = s.clone();
    out.read_pulse = PulseEnvelope::new(
        PulseShape::DoubleGaussian {
            fwhm,
            center,
            separation,
            second_ratio: hi * m / first,
        },
        first,
    )?;
    out.read_power = ReadPower::Fixed;
    out.validate()?;
    Ok(out)
}

/// Efficiency share that defines the knee of a saturating power curve.
pub const SATURATION_FRACTION: f64 = 0.99;

/// The same scenario with a Gaussian read pulse of the given FWHM under
/// the given power policy.
pub fn gaussian_counterpart(s: &Scenario, fwhm: f64, power: ReadPower) -> Result<Scenario> {
    let mut g = s.clone();
    g.read_pulse = PulseEnvelope::gaussian(s.read_pulse.peak_rabi_bar, fwhm)?;
    g.read_power = power;
    g.validate()?;
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandCheck {
    pub name: String,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub pass: bool,
}

impl BandCheck {
    pub fn new(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        BandCheck {
            name: name.to_string(),
            value,
            lo,
            hi,
            pass: value >= lo && value <= hi,
        }
    }

    fn flag(name: &str, ok: bool) -> Self {
        Self::new(name, if ok { 1.0 } else { 0.0 }, 1.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureReport {
    pub id: String,
    pub provenance: Provenance,
    pub files: Vec<String>,
    pub scalars: BTreeMap<String, f64>,
    pub checks: Vec<BandCheck>,
}

struct Emitter<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Emitter<'_> {
    fn path(&mut self, name: &str) -> std::path::PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }
}

pub fn reproduce_figure(id: &str, out: &Path) -> Result<FigureReport> {
    if !FIGURE_IDS.contains(&id) {
        return Err(Error::UnknownFigure(id.to_string()));
    }
    std::fs::create_dir_all(out)?;
    let mut em = Emitter {
        dir: out,
        files: Vec::new(),
    };
    let mut scalars = BTreeMap::new();
    let mut checks = Vec::new();
    let provenance;
    match id {
        "figS1" => {
            let s = preset("figS1")?;
            provenance = Provenance::of(&s);
            let mut delays: Vec<f64> = (0..=15).map(|k| k as f64 * 10e-6).collect();
            delays.push(53e-6);
            delays.sort_by(f64::total_cmp);
            let scan = scan_delay(&s, &delays)?;
            write_scan_csv(&em.path("figS1_delay.csv"), &scan)?;
            let eff = |d: f64| {
                scan.points
                    .iter()
                    .find(|p| p.value == d)
                    .and_then(|p| p.efficiency)
                    .map(|e| e.eta_cond)
                    .unwrap_or(f64::NAN)
            };
            let ratio = eff(53e-6) / eff(0.0);
            let r = run(&s)?;
            write_waveform_csv(&em.path("figS1_waveform.csv"), &r.retrieval.waveform)?;
            let e = r.retrieval.efficiency;
            scalars.insert("eta_cond".into(), e.eta_cond);
            scalars.insert("eta_fiber_coupled".into(), e.eta_fiber_coupled);
            scalars.insert("write_probability".into(), r.retrieval.write_probability);
            let inv_e = (-1.0f64).exp();
            checks.push(BandCheck::new(
                "eta(53 us) / eta(0)",
                ratio,
                0.98 * inv_e,
                1.02 * inv_e,
            ));
            checks.push(BandCheck::new(
                "eta_fiber_coupled at zero delay",
                e.eta_fiber_coupled,
                0.15,
                0.30,
            ));
            checks.push(BandCheck::new(
                "sampled flux integral / eta_cond",
                r.sampled_eta_cond / e.eta_cond,
                0.999,
                1.001,
            ));
        }
        "figS2" => {
            let s = preset("figS2")?;
            provenance = Provenance::of(&s);
            let h = Heralding::new(&s)?;
            let m = s.matched_read_peak(1.0);
            let opt = optimize_read_power(&h, &s, 0.05 * m, 20.0 * m, DEFAULT_POWER_POINTS)?;
            write_power_csv(&em.path("figS2_power.csv"), &opt)?;
            let matched = run_with(&h, &s)?;
            write_waveform_csv(&em.path("figS2_waveform.csv"), &matched.retrieval.waveform)?;
            let mut best = s.with_read_peak(opt.best.rabi_bar);
            best.read_power = ReadPower::Fixed;
            let at_best = run_with(&h, &best)?;
            write_waveform_csv(
                &em.path("figS2_waveform_best.csv"),
                &at_best.retrieval.waveform,
            )?;
            scalars.insert("best_read_rabi_bar".into(), opt.best.rabi_bar);
            scalars.insert("best_eta_cond".into(), opt.best.eta_cond);
            scalars.insert(
                "matched_eta_cond".into(),
                matched.retrieval.efficiency.eta_cond,
            );
            let ratio = matched.fwhm.map(|f| f.width).unwrap_or(f64::NAN) / s.read_pulse.duration();
            checks.push(BandCheck::new(
                "photon / pulse FWHM at single-sweep power",
                ratio,
                0.8,
                1.3,
            ));
            checks.push(BandCheck::new(
                "interior extrema of the power curve",
                opt.interior_extrema as f64,
                0.0,
                0.0,
            ));
        }
        "fig2" => {
            let plan = DurationPlan::load("fig2")?;
            let scan = plan.scan("dephasing")?;
            provenance = scan.provenance.clone();
            write_scan_csv(&em.path("fig2_durations.csv"), &scan)?;
            let widths: Vec<f64> = scan
                .points
                .iter()
                .map(|p| p.fwhm.unwrap_or(f64::NAN))
                .collect();
            let monotone = widths.windows(2).all(|w| w[1] > w[0]);
            checks.push(BandCheck::flag(
                "photon FWHM increases with pulse FWHM",
                monotone,
            ));
            for p in &scan.points {
                if let Some(f) = p.fwhm {
                    scalars.insert(format!("fwhm_ratio@{:e}s", p.value), f / p.value);
                }
            }
        }
        "fig3" => {
            let plan = DurationPlan::load("fig3")?;
            let free = plan.scan("decoherence_free")?;
            let deph = plan.scan("dephasing")?;
            provenance = deph.provenance.clone();
            write_scan_csv(&em.path("fig3_decoherence_free.csv"), &free)?;
            write_scan_csv(&em.path("fig3_dephasing.csv"), &deph)?;
            // Points at or beyond the long reference share its optical depths.
            let long = plan.time("long_duration", &plan.long_duration)?;
            let v: Vec<f64> = free
                .points
                .iter()
                .filter(|p| p.value >= long * (1.0 - 1e-9) && p.value <= 10e-6 * (1.0 + 1e-9))
                .map(|p| p.efficiency.map(|e| e.eta_cond).unwrap_or(f64::NAN))
                .collect();
            let spread = v.iter().cloned().fold(f64::MIN, f64::max)
                / v.iter().cloned().fold(f64::MAX, f64::min);
            checks.push(BandCheck::new(
                "decoherence-free max/min, long-reference depths, up to 10 us",
                spread,
                1.0,
                1.10,
            ));
            let at = |scan: &ScanResult, d: f64| {
                scan.points
                    .iter()
                    .find(|p| (p.value - d).abs() < 1e-12)
                    .and_then(|p| p.efficiency)
                    .map(|e| e.eta_cond)
                    .unwrap_or(f64::NAN)
            };
            let drop = at(&deph, 30e-6) / at(&deph, 1e-6);
            checks.push(BandCheck::new(
                "dephasing eta(30 us) / eta(1 us)",
                drop,
                0.0,
                0.9,
            ));
        }
        "fig5-rexp" => {
            let s = preset("fig5-rexp")?;
            provenance = Provenance::of(&s);
            let h = Heralding::new(&s)?;
            let r = run_with(&h, &s)?;
            write_waveform_csv(&em.path("fig5-rexp_waveform.csv"), &r.retrieval.waveform)?;
            let g = run_with(
                &h,
                &gaussian_counterpart(&s, s.read_pulse.duration(), s.read_power)?,
            )?;
            let ratio = r.retrieval.efficiency.eta_cond / g.retrieval.efficiency.eta_cond;
            scalars.insert("eta_cond".into(), r.retrieval.efficiency.eta_cond);
            scalars.insert("gaussian_eta_cond".into(), g.retrieval.efficiency.eta_cond);
            checks.push(BandCheck::flag(
                "rising-then-cutoff shape",
                r.class == WaveformClass::RisingThenCutoff,
            ));
            checks.push(BandCheck::new(
                "efficiency / Gaussian of equal duration",
                ratio,
                0.7,
                1.3,
            ));
        }
        "fig5-timebin" => {
            let s0 = preset("fig5-timebin")?;
            provenance = Provenance::of(&s0);
            let h = Heralding::new(&s0)?;
            let s = tune_time_bin(&s0, &h, 0.05, 20.0)?;
            let r = run_with(&h, &s)?;
            write_waveform_csv(&em.path("fig5-timebin_waveform.csv"), &r.retrieval.waveform)?;
            let knee = ReadPower::Saturate {
                lo: 0.05,
                hi: 20.0,
                fraction: SATURATION_FRACTION,
            };
            let g = run_with(
                &h,
                &gaussian_counterpart(&s, s.read_pulse.duration(), knee)?,
            )?;
            let ratio = r.retrieval.efficiency.eta_cond / g.retrieval.efficiency.eta_cond;
            scalars.insert("eta_cond".into(), r.retrieval.efficiency.eta_cond);
            scalars.insert("gaussian_eta_cond".into(), g.retrieval.efficiency.eta_cond);
            scalars.insert("first_read_rabi_bar".into(), s.read_pulse.peak_rabi_bar);
            checks.push(BandCheck::flag(
                "two-peak shape",
                r.class == WaveformClass::TwoPeaks,
            ));
            checks.push(BandCheck::new(
                "efficiency / Gaussian of equal duration",
                ratio,
                0.7,
                1.3,
            ));
        }
        _ => unreachable!(),
    }
    let summary_name = format!("{id}.json");
    em.files.push(summary_name.clone());
    let report = FigureReport {
        id: id.to_string(),
        provenance,
        files: em.files,
        scalars,
        checks,
    };
    write_json(&out.join(summary_name), &report)?;
    Ok(report)
}
