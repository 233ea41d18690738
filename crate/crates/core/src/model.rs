//! Physical parameters, pulse envelopes and the scenario timeline.
//!
//! All quantities are SI with angular frequencies in rad/s. Rabi
//! frequencies and optical depths are stored in the barred convention
//! (`Ω̄ = Ω/2`, `d̄ = d/2`).
//!
//! Timeline: the write window runs from `t = 0` to `ξ`, the end of the
//! write support plus a guard. The read pulse is described relative to the
//! read origin `ξ + storage_delay`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_real, Domain, QuadratureSpec};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Default `γ_es = γ_eg`: half the Rb D2 natural linewidth, 2π·3.03 MHz.
pub const DEFAULT_COHERENCE_DECAY: f64 = TWO_PI * 3.03e6;
/// Default Gaussian spin-decoherence time constant.
pub const DEFAULT_SPIN_TIME_CONSTANT: f64 = 53e-6;
pub const DEFAULT_LENGTH: f64 = 3e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinDecayMode {
    /// `e^{-γ0 t}` with `γ0` a rate in s⁻¹.
    Exponential,
    /// `e^{-(t/γ0)²/2}` with `γ0` a time constant in s.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub d_w_bar: f64,
    pub d_r_bar: f64,
    pub gamma_es: f64,
    pub gamma_eg: f64,
    pub gamma_0: f64,
    pub spin_decay_mode: SpinDecayMode,
    pub delta: f64,
    pub length: f64,
    pub c: f64,
}

impl EnsembleParams {
    /// Builds from unbarred optical depths, halving them.
    pub fn from_unbarred(d_w: f64, d_r: f64, delta: f64) -> Result<Self> {
        Self::from_barred(0.5 * d_w, 0.5 * d_r, delta)
    }

    pub fn from_barred(d_w_bar: f64, d_r_bar: f64, delta: f64) -> Result<Self> {
        let p = EnsembleParams {
            d_w_bar,
            d_r_bar,
            gamma_es: DEFAULT_COHERENCE_DECAY,
            gamma_eg: DEFAULT_COHERENCE_DECAY,
            gamma_0: DEFAULT_SPIN_TIME_CONSTANT,
            spin_decay_mode: SpinDecayMode::Gaussian,
            delta,
            length: DEFAULT_LENGTH,
            c: SPEED_OF_LIGHT,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("ensemble.d_w_bar", self.d_w_bar),
            ("ensemble.d_r_bar", self.d_r_bar),
            ("ensemble.gamma_es", self.gamma_es),
            ("ensemble.gamma_eg", self.gamma_eg),
            ("ensemble.spin_decay.gamma_0", self.gamma_0),
            ("ensemble.length", self.length),
            ("ensemble.c", self.c),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invariant(
                    field,
                    format!("must be finite and > 0, got {v}"),
                ));
            }
        }
        if !(self.delta.is_finite() && self.delta != 0.0) {
            return Err(Error::invariant(
                "ensemble.detuning",
                "must be finite and nonzero",
            ));
        }
        Ok(())
    }

    /// Spin decay rate that enters the write-stage `γ_S`. In Gaussian mode
    /// the decoherence is inhomogeneous and acts only through the read-out
    /// envelope, so the write stage sees none.
    pub fn write_stage_spin_rate(&self) -> f64 {
        match self.spin_decay_mode {
            SpinDecayMode::Exponential => self.gamma_0,
            SpinDecayMode::Gaussian => 0.0,
        }
    }

    /// `g²N = d̄_r γ_eg c / L`.
    pub fn read_coupling(&self) -> f64 {
        self.d_r_bar * self.gamma_eg * self.c / self.length
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PulseShape {
    /// Intensity FWHM `fwhm`, peak at `center`.
    Gaussian { fwhm: f64, center: f64 },
    /// Intensity `e^{(t - cutoff)/width}` up to a hard cutoff.
    RisingExponential { width: f64, cutoff: f64 },
    /// Two Gaussians of equal intensity FWHM; the second peak sits
    /// `separation` after the first with amplitude `second_ratio` relative
    /// to it.
    DoubleGaussian {
        fwhm: f64,
        center: f64,
        separation: f64,
        second_ratio: f64,
    },
    /// Piecewise-linear amplitude samples, scaled by the peak Rabi frequency.
    Tabulated {
        times: Vec<f64>,
        amplitudes: Vec<f64>,
    },
}

/// Support half-width of Gaussian pulses, in units of the intensity FWHM.
pub const GAUSSIAN_SUPPORT_FWHM: f64 = 3.0;
/// Support length of rising exponentials, in units of the 1/e width.
pub const RISING_SUPPORT_WIDTHS: f64 = 14.0;

fn gaussian_amplitude(dt: f64, fwhm: f64) -> f64 {
    (-2.0 * std::f64::consts::LN_2 * (dt / fwhm).powi(2)).exp()
}

impl PulseShape {
    /// Dimensionless amplitude profile; peak of order one.
    pub fn profile(&self, t: f64) -> f64 {
        match self {
            PulseShape::Gaussian { fwhm, center } => gaussian_amplitude(t - center, *fwhm),
            PulseShape::RisingExponential { width, cutoff } => {
                if t > *cutoff {
                    0.0
                } else {
                    (0.5 * (t - cutoff) / width).exp()
                }
            }
            PulseShape::DoubleGaussian {
                fwhm,
                center,
                separation,
                second_ratio,
            } => {
                gaussian_amplitude(t - center, *fwhm)
                    + second_ratio * gaussian_amplitude(t - center - separation, *fwhm)
            }
            PulseShape::Tabulated { times, amplitudes } => {
                if t < times[0] || t > times[times.len() - 1] {
                    return 0.0;
                }
                let i = times.partition_point(|&x| x <= t).clamp(1, times.len() - 1);
                let (t0, t1) = (times[i - 1], times[i]);
                let u = (t - t0) / (t1 - t0);
                amplitudes[i - 1] + u * (amplitudes[i] - amplitudes[i - 1])
            }
        }
    }

    /// Nominal duration: intensity FWHM, or the 1/e width for rising
    /// exponentials, or the table span.
    pub fn duration(&self) -> f64 {
        match self {
            PulseShape::Gaussian { fwhm, .. } | PulseShape::DoubleGaussian { fwhm, .. } => *fwhm,
            PulseShape::RisingExponential { width, .. } => *width,
            PulseShape::Tabulated { times, .. } => times[times.len() - 1] - times[0],
        }
    }

    /// Default support window, never starting before `t = 0`.
    pub fn default_support(&self) -> (f64, f64) {
        let k = GAUSSIAN_SUPPORT_FWHM;
        let (a, b) = match self {
            PulseShape::Gaussian { fwhm, center } => (center - k * fwhm, center + k * fwhm),
            PulseShape::RisingExponential { width, cutoff } => {
                (cutoff - RISING_SUPPORT_WIDTHS * width, *cutoff)
            }
            PulseShape::DoubleGaussian {
                fwhm,
                center,
                separation,
                ..
            } => (center - k * fwhm, center + separation + k * fwhm),
            PulseShape::Tabulated { times, .. } => (times[0], times[times.len() - 1]),
        };
        (a.max(0.0), b)
    }

    /// Interior points where the envelope is not smooth.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            PulseShape::RisingExponential { cutoff, .. } => vec![*cutoff],
            PulseShape::Tabulated { times, .. } => times.clone(),
            _ => Vec::new(),
        }
    }

    fn scaled(&self, k: f64) -> PulseShape {
        match self {
            PulseShape::Gaussian { fwhm, center } => PulseShape::Gaussian {
                fwhm: fwhm * k,
                center: center * k,
            },
            PulseShape::RisingExponential { width, cutoff } => PulseShape::RisingExponential {
                width: width * k,
                cutoff: cutoff * k,
            },
            PulseShape::DoubleGaussian {
                fwhm,
                center,
                separation,
                second_ratio,
            } => PulseShape::DoubleGaussian {
                fwhm: fwhm * k,
                center: center * k,
                separation: separation * k,
                second_ratio: *second_ratio,
            },
            PulseShape::Tabulated { times, amplitudes } => PulseShape::Tabulated {
                times: times.iter().map(|t| t * k).collect(),
                amplitudes: amplitudes.clone(),
            },
        }
    }

    fn validate(&self, field: &str) -> Result<()> {
        let bad = |m: &str| Err(Error::invariant(field, m.to_string()));
        match self {
            PulseShape::Gaussian { fwhm, center } => {
                if !(fwhm.is_finite() && *fwhm > 0.0) {
                    return bad("fwhm must be > 0");
                }
                if !center.is_finite() {
                    return bad("center must be finite");
                }
            }
            PulseShape::RisingExponential { width, cutoff } => {
                if !(width.is_finite() && *width > 0.0) {
                    return bad("width must be > 0");
                }
                if !(cutoff.is_finite() && *cutoff > 0.0) {
                    return bad("cutoff must be > 0");
                }
            }
            PulseShape::DoubleGaussian {
                fwhm,
                center,
                separation,
                second_ratio,
            } => {
                if !(fwhm.is_finite() && *fwhm > 0.0) {
                    return bad("fwhm must be > 0");
                }
                if !(center.is_finite() && separation.is_finite() && *separation >= 0.0) {
                    return bad("center must be finite and separation >= 0");
                }
                if !(second_ratio.is_finite() && *second_ratio >= 0.0) {
                    return bad("second_ratio must be >= 0");
                }
            }
            PulseShape::Tabulated { times, amplitudes } => {
                if times.len() < 2 || times.len() != amplitudes.len() {
                    return bad("need at least two samples and matching lengths");
                }
                if !times.windows(2).all(|w| w[1] > w[0]) {
                    return bad("sample times must be strictly increasing");
                }
                if !amplitudes.iter().all(|a| a.is_finite() && *a >= 0.0) {
                    return bad("amplitudes must be finite and >= 0");
                }
            }
        }
        Ok(())
    }
}

/// A classical drive `Ω̄(t)`, zero outside its support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseEnvelope {
    pub shape: PulseShape,
    /// Barred peak Rabi frequency, rad/s.
    pub peak_rabi_bar: f64,
    pub support: (f64, f64),
}

impl PulseEnvelope {
    pub fn new(shape: PulseShape, peak_rabi_bar: f64) -> Result<Self> {
        let support = shape.default_support();
        Self::with_support(shape, peak_rabi_bar, support)
    }

    pub fn with_support(
        shape: PulseShape,
        peak_rabi_bar: f64,
        support: (f64, f64),
    ) -> Result<Self> {
        let p = PulseEnvelope {
            shape,
            peak_rabi_bar,
            support,
        };
        p.validate("pulse")?;
        Ok(p)
    }

    pub fn gaussian(peak_rabi_bar: f64, fwhm: f64) -> Result<Self> {
        let center = GAUSSIAN_SUPPORT_FWHM * fwhm;
        Self::new(PulseShape::Gaussian { fwhm, center }, peak_rabi_bar)
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        self.shape.validate(field)?;
        if !(self.peak_rabi_bar.is_finite() && self.peak_rabi_bar >= 0.0) {
            return Err(Error::invariant(
                format!("{field}.rabi"),
                format!(
                    "peak Rabi frequency must be finite and >= 0, got {}",
                    self.peak_rabi_bar
                ),
            ));
        }
        let (a, b) = self.support;
        if !(a.is_finite() && b.is_finite() && a >= 0.0 && b > a) {
            return Err(Error::invariant(
                format!("{field}.support"),
                format!("support must satisfy 0 <= start < end, got [{a:e}, {b:e}]"),
            ));
        }
        Ok(())
    }

    /// `Ω̄(t)`.
    pub fn rabi(&self, t: f64) -> f64 {
        if t < self.support.0 || t > self.support.1 {
            return 0.0;
        }
        self.peak_rabi_bar * self.shape.profile(t)
    }

    pub fn rabi_sq(&self, t: f64) -> f64 {
        let r = self.rabi(t);
        r * r
    }

    pub fn duration(&self) -> f64 {
        self.shape.duration()
    }

    /// Support edges and interior kinks, sorted.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = vec![self.support.0, self.support.1];
        b.extend(
            self.shape
                .kinks()
                .into_iter()
                .filter(|&k| k > self.support.0 && k < self.support.1),
        );
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    /// `∫ profile(t)² dt` over the support (pulse area per unit peak
    /// intensity).
    pub fn shape_energy(&self) -> f64 {
        let d = Domain::new(self.support.0, self.support.1).with_breaks(&self.breakpoints());
        let spec = QuadratureSpec::default().with_tol(1e-12);
        let p = &self.shape;
        integrate_real(|t| p.profile(t).powi(2), &d, &spec).value.re
    }

    /// `∫ Ω̄²(t) dt`.
    pub fn energy(&self) -> f64 {
        self.peak_rabi_bar * self.peak_rabi_bar * self.shape_energy()
    }

    /// Intensity-weighted mean time.
    pub fn centroid(&self) -> f64 {
        let d = Domain::new(self.support.0, self.support.1).with_breaks(&self.breakpoints());
        let spec = QuadratureSpec::default().with_tol(1e-12);
        let p = &self.shape;
        let w = integrate_real(|t| p.profile(t).powi(2), &d, &spec).value.re;
        if w == 0.0 {
            return 0.5 * (self.support.0 + self.support.1);
        }
        integrate_real(|t| t * p.profile(t).powi(2), &d, &spec)
            .value
            .re
            / w
    }

    pub fn with_peak(&self, peak_rabi_bar: f64) -> Self {
        PulseEnvelope {
            peak_rabi_bar,
            ..self.clone()
        }
    }

    /// Stretches every time parameter (and the support) by `k` about `t = 0`.
    pub fn scaled_in_time(&self, k: f64) -> Self {
        PulseEnvelope {
            shape: self.shape.scaled(k),
            peak_rabi_bar: self.peak_rabi_bar,
            support: (self.support.0 * k, self.support.1 * k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionChain {
    pub eta_fiber: f64,
    pub eta_filter: f64,
    pub eta_det: f64,
    /// Counts per second.
    pub dark_rate: f64,
    /// Gate length in seconds; defaults to the read-window span.
    pub gate_width: Option<f64>,
}

impl Default for DetectionChain {
    fn default() -> Self {
        DetectionChain {
            eta_fiber: 0.60,
            eta_filter: 0.20,
            eta_det: 0.43,
            dark_rate: 130.0,
            gate_width: None,
        }
    }
}

impl DetectionChain {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("detection.eta_fiber", self.eta_fiber),
            ("detection.eta_filter", self.eta_filter),
            ("detection.eta_det", self.eta_det),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invariant(
                    field,
                    format!("probability must lie in [0, 1], got {v}"),
                ));
            }
        }
        if !(self.dark_rate.is_finite() && self.dark_rate >= 0.0) {
            return Err(Error::invariant("detection.dark_rate", "must be >= 0"));
        }
        if let Some(g) = self.gate_width {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::invariant("detection.gate_width", "must be > 0"));
            }
        }
        Ok(())
    }

    /// Mean dark counts in one gate.
    pub fn dark_counts_per_gate(&self, gate_width: f64) -> f64 {
        self.dark_rate * gate_width
    }
}

/// How the read-pulse peak power is chosen before a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum ReadPower {
    /// Use `peak_rabi_bar` as given.
    Fixed,
    /// Scale the peak so that `∫Ω̄_R² dt = sweeps · d̄_r γ_eg`, i.e. the
    /// retrieval point `cΔτ` travels `sweeps` medium lengths.
    MatchedArea { sweeps: f64 },
    /// Maximize efficiency over `[lo, hi] ×` the single-sweep power.
    Optimize { lo: f64, hi: f64 },
    /// Lowest power in `[lo, hi] ×` the single-sweep power that reaches
    /// `fraction` of the best efficiency there. On a saturating curve this
    /// is the knee rather than an arbitrary point of the plateau.
    Saturate { lo: f64, hi: f64, fraction: f64 },
}

impl Default for ReadPower {
    fn default() -> Self {
        ReadPower::Fixed
    }
}

/// Discretization controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Numerics {
    /// Chebyshev-Lobatto nodes along the medium.
    pub spatial_nodes: usize,
    /// 16-point Gauss-Legendre panels across the write support.
    pub write_panels: usize,
    /// Nodes of the fixed rule used for spatial convolutions.
    pub spatial_order: usize,
    /// Samples of the cumulative `Γ`, `g` and `Δτ` tables.
    pub table_points: usize,
    /// Samples of the output waveform.
    pub read_points: usize,
    pub quadrature: QuadratureSpec,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            spatial_nodes: 33,
            write_panels: 8,
            spatial_order: 24,
            table_points: 4097,
            read_points: 4001,
            quadrature: QuadratureSpec::default(),
        }
    }
}

impl Numerics {
    /// Every resolution doubled and the tolerance halved.
    pub fn refined(&self) -> Numerics {
        Numerics {
            spatial_nodes: 2 * self.spatial_nodes - 1,
            write_panels: 2 * self.write_panels,
            spatial_order: 2 * self.spatial_order,
            table_points: 2 * self.table_points - 1,
            read_points: 2 * self.read_points - 1,
            quadrature: self.quadrature.with_tol(0.5 * self.quadrature.rel_tol),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.spatial_nodes < 5 || self.write_panels < 1 || self.spatial_order < 4 {
            return Err(Error::invariant("numerics", "resolution too small"));
        }
        if self.table_points < 16 || self.read_points < 16 {
            return Err(Error::invariant(
                "numerics",
                "grids need at least 16 points",
            ));
        }
        self.quadrature.validate()
    }
}

pub const DEFAULT_WRITE_GUARD: f64 = 10e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub ensemble: EnsembleParams,
    pub write_pulse: PulseEnvelope,
    /// Times relative to the read origin.
    pub read_pulse: PulseEnvelope,
    pub storage_delay: f64,
    /// Dead time appended to the write support before `ξ`.
    pub write_guard: f64,
    pub detection: DetectionChain,
    /// Read-laser linewidth in Hz; adds `e^{-2πΔν (t-ξ)}` to the retrieved
    /// amplitude.
    pub laser_linewidth: Option<f64>,
    pub read_power: ReadPower,
    pub numerics: Numerics,
}

impl Scenario {
    pub fn new(
        ensemble: EnsembleParams,
        write_pulse: PulseEnvelope,
        read_pulse: PulseEnvelope,
    ) -> Result<Self> {
        let s = Scenario {
            ensemble,
            write_pulse,
            read_pulse,
            storage_delay: 0.0,
            write_guard: DEFAULT_WRITE_GUARD,
            detection: DetectionChain::default(),
            laser_linewidth: None,
            read_power: ReadPower::Fixed,
            numerics: Numerics::default(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.ensemble.validate()?;
        self.write_pulse.validate("write_pulse")?;
        self.read_pulse.validate("read_pulse")?;
        self.detection.validate()?;
        self.numerics.validate()?;
        if !(self.storage_delay.is_finite() && self.storage_delay >= 0.0) {
            return Err(Error::invariant("storage_delay", "must be >= 0"));
        }
        if !(self.write_guard.is_finite() && self.write_guard >= 0.0) {
            return Err(Error::invariant("write_guard", "must be >= 0"));
        }
        if let Some(l) = self.laser_linewidth {
            if !(l.is_finite() && l >= 0.0) {
                return Err(Error::invariant("laser_linewidth", "must be >= 0"));
            }
        }
        match self.read_power {
            ReadPower::Fixed => {}
            ReadPower::MatchedArea { sweeps } => {
                if !(sweeps.is_finite() && sweeps > 0.0) {
                    return Err(Error::invariant("read_power.sweeps", "must be > 0"));
                }
            }
            ReadPower::Optimize { lo, hi } | ReadPower::Saturate { lo, hi, .. } => {
                if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
                    return Err(Error::invariant("read_power", "need 0 < lo < hi"));
                }
                if let ReadPower::Saturate { fraction, .. } = self.read_power {
                    if !(fraction > 0.0 && fraction <= 1.0) {
                        return Err(Error::invariant(
                            "read_power.fraction",
                            "must lie in (0, 1]",
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// End of the write window, `ξ`.
    pub fn xi(&self) -> f64 {
        self.write_pulse.support.1 + self.write_guard
    }

    /// Absolute time at which the read pulse's own clock starts.
    pub fn read_origin(&self) -> f64 {
        self.xi() + self.storage_delay
    }

    /// Absolute start and end of the read support.
    pub fn read_window(&self) -> (f64, f64) {
        let o = self.read_origin();
        (o + self.read_pulse.support.0, o + self.read_pulse.support.1)
    }

    /// `Ω̄_R` at absolute time `t`.
    pub fn read_rabi(&self, t: f64) -> f64 {
        self.read_pulse.rabi(t - self.read_origin())
    }

    /// Intensity centroid of the write pulse, the reference time of the
    /// Gaussian storage decay.
    pub fn write_centroid(&self) -> f64 {
        self.write_pulse.centroid()
    }

    /// Amplitude decay applied to the retrieved field.
    pub fn decay_clock(&self) -> DecayClock {
        let e = &self.ensemble;
        DecayClock {
            mode: e.spin_decay_mode,
            gamma_0: e.gamma_0,
            xi: self.xi(),
            write_centroid: self.write_centroid(),
            linewidth: self.laser_linewidth.unwrap_or(0.0),
        }
    }

    /// Gate used for dark counts when none is configured.
    pub fn gate_width(&self) -> f64 {
        self.detection.gate_width.unwrap_or_else(|| {
            let (a, b) = self.read_window();
            b - a
        })
    }

    /// Peak `Ω̄_R` for which `∫Ω̄_R² dt = sweeps · d̄_r γ_eg`.
    pub fn matched_read_peak(&self, sweeps: f64) -> f64 {
        let e = &self.ensemble;
        (sweeps * e.d_r_bar * e.gamma_eg / self.read_pulse.shape_energy()).sqrt()
    }

    /// Total dimensionless read area `∫Ω̄_R² dt / (d̄_r γ_eg)`.
    pub fn read_sweeps(&self) -> f64 {
        self.read_pulse.energy() / (self.ensemble.d_r_bar * self.ensemble.gamma_eg)
    }

    pub fn with_read_peak(&self, peak: f64) -> Scenario {
        Scenario {
            read_pulse: self.read_pulse.with_peak(peak),
            ..self.clone()
        }
    }

    pub fn with_delay(&self, delay: f64) -> Scenario {
        Scenario {
            storage_delay: delay,
            ..self.clone()
        }
    }

    /// Rescales all read timing about the read origin so the nominal
    /// duration becomes `duration`. The peak Rabi frequency is unchanged.
    pub fn with_read_duration(&self, duration: f64) -> Scenario {
        let k = duration / self.read_pulse.duration();
        Scenario {
            read_pulse: self.read_pulse.scaled_in_time(k),
            ..self.clone()
        }
    }

    pub fn with_numerics(&self, numerics: Numerics) -> Scenario {
        Scenario {
            numerics,
            ..self.clone()
        }
    }

    /// The same scenario without spin decoherence over any relevant time.
    pub fn decoherence_free(&self) -> Scenario {
        let mut s = self.clone();
        s.ensemble.spin_decay_mode = SpinDecayMode::Gaussian;
        s.ensemble.gamma_0 = 1.0e3;
        s.laser_linewidth = None;
        s
    }
}

/// Storage decay of the spin-wave amplitude, evaluated at absolute times.
#[derive(Debug, Clone, Copy)]
pub struct DecayClock {
    mode: SpinDecayMode,
    gamma_0: f64,
    xi: f64,
    write_centroid: f64,
    linewidth: f64,
}

impl DecayClock {
    pub fn amplitude(&self, t: f64) -> f64 {
        let spin = match self.mode {
            SpinDecayMode::Exponential => (-self.gamma_0 * (t - self.xi)).exp(),
            SpinDecayMode::Gaussian => {
                let s = (t - self.write_centroid) / self.gamma_0;
                (-0.5 * s * s).exp()
            }
        };
        spin * (-TWO_PI * self.linewidth * (t - self.xi)).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scenario() -> Scenario {
        let e = EnsembleParams::from_unbarred(7.5, 5.0, -TWO_PI * 40e6).unwrap();
        let w = PulseEnvelope::gaussian(TWO_PI * 12.55e6, 15e-9).unwrap();
        let r = PulseEnvelope::gaussian(TWO_PI * 11.75e6, 35e-9).unwrap();
        Scenario::new(e, w, r).unwrap()
    }

    #[test]
    fn unbarred_depths_are_halved() {
        let e = EnsembleParams::from_unbarred(7.5, 5.0, -1e8).unwrap();
        assert_eq!(e.d_w_bar, 3.75);
        assert_eq!(e.d_r_bar, 2.5);
    }

    #[test]
    fn invariants_reject_bad_values() {
        assert!(EnsembleParams::from_barred(0.0, 1.0, 1.0).is_err());
        assert!(EnsembleParams::from_barred(1.0, -1.0, 1.0).is_err());
        assert!(EnsembleParams::from_barred(1.0, 1.0, 0.0).is_err());
        assert!(PulseEnvelope::gaussian(1.0, 0.0).is_err());
        assert!(PulseEnvelope::gaussian(-1.0, 1e-9).is_err());
        let mut d = DetectionChain::default();
        d.eta_det = 1.2;
        assert!(d.validate().is_err());
    }

    #[test]
    fn gaussian_fwhm_is_an_intensity_width() {
        let p = PulseEnvelope::gaussian(2.0, 100e-9).unwrap();
        let c = 300e-9;
        assert_relative_eq!(
            p.rabi_sq(c + 50e-9) / p.rabi_sq(c),
            0.5,
            max_relative = 1e-12
        );
        let sigma = 100e-9 / (8.0 * std::f64::consts::LN_2).sqrt();
        let want = 4.0 * (2.0 * std::f64::consts::PI).sqrt() * sigma;
        assert_relative_eq!(p.energy(), want, max_relative = 1e-8);
    }

    #[test]
    fn rising_exponential_has_hard_cutoff() {
        let shape = PulseShape::RisingExponential {
            width: 300e-9,
            cutoff: 5e-6,
        };
        let p = PulseEnvelope::new(shape, 1.0).unwrap();
        assert_eq!(p.rabi(5e-6 + 1e-12), 0.0);
        assert_relative_eq!(
            p.rabi_sq(5e-6 - 300e-9),
            (-1.0f64).exp(),
            max_relative = 1e-12
        );
        assert!(p.breakpoints().contains(&5e-6));
    }

    #[test]
    fn envelope_is_nonnegative_and_zero_outside_support() {
        let p = PulseEnvelope::new(
            PulseShape::DoubleGaussian {
                fwhm: 50e-9,
                center: 200e-9,
                separation: 300e-9,
                second_ratio: 1.5,
            },
            3.0,
        )
        .unwrap();
        for i in 0..1000 {
            let t = i as f64 * 1e-9;
            assert!(p.rabi(t) >= 0.0);
            if t < p.support.0 || t > p.support.1 {
                assert_eq!(p.rabi(t), 0.0);
            }
        }
    }

    #[test]
    fn timeline() {
        let s = scenario().with_delay(1e-6);
        assert_relative_eq!(s.xi(), 90e-9 + DEFAULT_WRITE_GUARD, max_relative = 1e-12);
        assert_relative_eq!(s.read_origin(), s.xi() + 1e-6, max_relative = 1e-12);
        assert_relative_eq!(s.write_centroid(), 45e-9, max_relative = 1e-9);
        let (a, b) = s.read_window();
        assert!(a >= s.xi());
        assert_relative_eq!(b - a, 6.0 * 35e-9, max_relative = 1e-12);
    }

    #[test]
    fn gaussian_decay_uses_time_since_write() {
        let s = scenario();
        let t = s.write_centroid() + 53e-6;
        assert_relative_eq!(
            s.decay_clock().amplitude(t),
            (-0.5f64).exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn matched_area_power() {
        let s = scenario();
        let peak = s.matched_read_peak(2.0);
        assert_relative_eq!(
            s.with_read_peak(peak).read_sweeps(),
            2.0,
            max_relative = 1e-10
        );
    }

    #[test]
    fn read_duration_rescales_about_origin() {
        let s = scenario().with_read_duration(70e-9);
        assert_relative_eq!(s.read_pulse.duration(), 70e-9, max_relative = 1e-14);
        assert_relative_eq!(s.read_pulse.support.1, 6.0 * 70e-9, max_relative = 1e-12);
        assert_eq!(
            s.read_pulse.peak_rabi_bar,
            scenario().read_pulse.peak_rabi_bar
        );
    }
}
