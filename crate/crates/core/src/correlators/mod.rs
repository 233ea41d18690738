//! Conditional read flux and conditional retrieval efficiency.
//!
//! [`fast`] evaluates the heralded numerator through the factorized spin
//! coherence; [`fields`] and [`wick`] keep the full operator expansion and
//! the generic pairing engine used to cross-check it.

pub mod fast;
pub mod fields;
pub mod wick;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kernels::WriteKernelContext;
use crate::model::Scenario;
use crate::quadrature::{integrate_real, Domain};

pub use fast::{ReadStage, WriteStage};

/// Low-photon-number validity limit of the conditional efficiency.
pub const EFFICIENCY_VALIDITY_LIMIT: f64 = 0.3;

/// Conditional read flux sampled on a uniform grid. Times are relative to
/// the read origin (write window end plus storage delay).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub times: Vec<f64>,
    /// Photons per second inside the first fiber.
    pub flux: Vec<f64>,
}

impl Waveform {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn step(&self) -> f64 {
        (self.times[self.len() - 1] - self.times[0]) / (self.len() - 1) as f64
    }

    /// Composite Simpson integral (trapezoid on a trailing odd interval).
    pub fn integral(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let h = self.step();
        let f = &self.flux;
        let m = if (n - 1) % 2 == 0 { n } else { n - 1 };
        let mut s = f[0] + f[m - 1];
        for (i, v) in f.iter().enumerate().take(m - 1).skip(1) {
            s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
        }
        let mut total = s * h / 3.0;
        if m < n {
            total += 0.5 * h * (f[n - 2] + f[n - 1]);
        }
        total
    }

    pub fn peak(&self) -> (f64, f64) {
        self.times
            .iter()
            .zip(&self.flux)
            .fold((0.0, f64::NEG_INFINITY), |acc, (&t, &v)| {
                if v > acc.1 {
                    (t, v)
                } else {
                    acc
                }
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    /// Intrinsic conditional retrieval efficiency.
    pub eta_cond: f64,
    /// `eta_cond · η_fiber`.
    pub eta_fiber_coupled: f64,
    /// Quadrature error estimate of `eta_cond`.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RetrievalWarning {
    /// Retrieval kernel width exceeds the medium length at half depletion.
    KernelWiderThanMedium { width_over_length: f64 },
    /// Conditional efficiency beyond the low-photon-number regime.
    HighEfficiency { eta_cond: f64 },
}

/// Efficiency, waveform and diagnostics of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    pub efficiency: Efficiency,
    pub waveform: Waveform,
    /// Write-photon emission probability per shot.
    pub write_probability: f64,
    pub warnings: Vec<RetrievalWarning>,
}

/// Write stage prepared once and reused across read-side variations
/// (read power, read shape, storage delay).
pub struct Heralding {
    stage: WriteStage,
    write_key: Scenario,
}

impl Heralding {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let ctx = WriteKernelContext::build(scenario)?;
        let stage = WriteStage::build(&ctx, scenario)?;
        Ok(Heralding {
            stage,
            write_key: scenario.clone(),
        })
    }

    pub fn stage(&self) -> &WriteStage {
        &self.stage
    }

    /// True when `scenario` shares the write-side inputs this was built for.
    pub fn matches(&self, scenario: &Scenario) -> bool {
        let a = &self.write_key;
        let b = scenario;
        a.write_pulse == b.write_pulse
            && a.write_guard == b.write_guard
            && a.numerics == b.numerics
            && a.ensemble.d_w_bar == b.ensemble.d_w_bar
            && a.ensemble.gamma_es == b.ensemble.gamma_es
            && a.ensemble.delta == b.ensemble.delta
            && a.ensemble.write_stage_spin_rate() == b.ensemble.write_stage_spin_rate()
            && a.ensemble.length == b.ensemble.length
            && a.ensemble.c == b.ensemble.c
    }

    pub fn efficiency(&self, scenario: &Scenario) -> Result<(Efficiency, Vec<RetrievalWarning>)> {
        scenario.validate()?;
        debug_assert!(self.matches(scenario));
        let read = ReadStage::new(&self.stage, scenario)?;
        let (a, b) = scenario.read_window();
        let origin = scenario.read_origin();
        let breaks: Vec<f64> = scenario
            .read_pulse
            .breakpoints()
            .iter()
            .map(|t| t + origin)
            .collect();
        let est = integrate_real(
            |t| read.flux(t),
            &Domain::new(a, b).with_breaks(&breaks),
            &scenario.numerics.quadrature,
        )
        .require("conditional efficiency")?;
        let eta = est.value.re;
        let efficiency = Efficiency {
            eta_cond: eta,
            eta_fiber_coupled: eta * scenario.detection.eta_fiber,
            error: est.error,
        };
        let mut warnings = Vec::new();
        let ctx = read.context();
        let half = ctx.width_for(0.5 * ctx.total_sweep());
        if half > 1.0 {
            warnings.push(RetrievalWarning::KernelWiderThanMedium {
                width_over_length: half,
            });
        }
        if eta > EFFICIENCY_VALIDITY_LIMIT {
            warnings.push(RetrievalWarning::HighEfficiency { eta_cond: eta });
        }
        Ok((efficiency, warnings))
    }

    pub fn waveform(&self, scenario: &Scenario) -> Result<Waveform> {
        scenario.validate()?;
        let read = ReadStage::new(&self.stage, scenario)?;
        let (a, b) = scenario.read_window();
        let origin = scenario.read_origin();
        let n = scenario.numerics.read_points;
        let h = (b - a) / (n - 1) as f64;
        let eta_fiber = scenario.detection.eta_fiber;
        let mut times = Vec::with_capacity(n);
        let mut flux = Vec::with_capacity(n);
        for i in 0..n {
            let t = if i == n - 1 { b } else { a + h * i as f64 };
            times.push(t - origin);
            flux.push(read.flux(t) * eta_fiber);
        }
        Ok(Waveform { times, flux })
    }

    pub fn retrieve(&self, scenario: &Scenario) -> Result<Retrieval> {
        let (efficiency, warnings) = self.efficiency(scenario)?;
        Ok(Retrieval {
            efficiency,
            waveform: self.waveform(scenario)?,
            write_probability: self.stage.write_probability(),
            warnings,
        })
    }
}

/// Conditional read flux in the first fiber.
pub fn conditional_flux(scenario: &Scenario) -> Result<Waveform> {
    Heralding::new(scenario)?.waveform(scenario)
}

/// Conditional retrieval efficiency, intrinsic and fiber-coupled.
pub fn conditional_efficiency(scenario: &Scenario) -> Result<(Efficiency, Vec<RetrievalWarning>)> {
    Heralding::new(scenario)?.efficiency(scenario)
}

/// Efficiency and waveform from a single write-stage evaluation.
pub fn retrieve(scenario: &Scenario) -> Result<Retrieval> {
    Heralding::new(scenario)?.retrieve(scenario)
}
