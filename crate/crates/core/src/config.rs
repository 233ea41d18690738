//! Scenario documents: TOML with an explicit unit string on every
//! dimensioned value.
//!
//! Optical depths, probabilities, ratios and counts are bare numbers.
//! Everything else is a string such as `"25.1 MHz"` or `"1.27 us"`.
//! Cyclic frequency units mean `Ω/2π` unless `angular = true`. Unbarred
//! keys (`rabi`, `d_w`, `d_r`) are halved; `*_bar` keys are taken as is.
//! The key list lives in `schema/scenario.md` at the repository root.

use std::ops::Range;
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};
use toml::{Spanned, Value};

use crate::error::{Error, Result};
use crate::model::{
    DetectionChain, EnsembleParams, Numerics, PulseEnvelope, PulseShape, ReadPower, Scenario,
    SpinDecayMode, DEFAULT_COHERENCE_DECAY, DEFAULT_LENGTH, DEFAULT_SPIN_TIME_CONSTANT,
    DEFAULT_WRITE_GUARD, GAUSSIAN_SUPPORT_FWHM, RISING_SUPPORT_WIDTHS, SPEED_OF_LIGHT,
};
use crate::quadrature::{QuadratureSpec, RuleKind};
use crate::units::{format_quantity, parse_quantity, Dimension};

pub const SCHEMA_VERSION: i64 = 1;

type Field = Option<Spanned<Value>>;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawDocument {
    schema_version: Field,
    angular: Option<bool>,
    ensemble: RawEnsemble,
    write_pulse: RawPulse,
    read_pulse: RawPulse,
    read_power: RawReadPower,
    timing: RawTiming,
    detection: RawDetection,
    numerics: RawNumerics,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawEnsemble {
    d_w: Field,
    d_w_bar: Field,
    d_r: Field,
    d_r_bar: Field,
    detuning: Field,
    gamma_es: Field,
    gamma_eg: Field,
    length: Field,
    c: Field,
    spin_decay: RawSpinDecay,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawSpinDecay {
    mode: Field,
    gamma_0: Field,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawPulse {
    shape: Field,
    rabi: Field,
    rabi_bar: Field,
    fwhm: Field,
    center: Field,
    width: Field,
    cutoff: Field,
    separation: Field,
    second_ratio: Field,
    times: Field,
    amplitudes: Field,
    support: Field,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawReadPower {
    policy: Field,
    sweeps: Field,
    lo: Field,
    hi: Field,
    fraction: Field,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawTiming {
    storage_delay: Field,
    delay: Field,
    write_guard: Field,
    laser_linewidth: Field,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawDetection {
    eta_fiber: Field,
    eta_filter: Field,
    eta_det: Field,
    dark_rate: Field,
    gate_width: Field,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawNumerics {
    spatial_nodes: Field,
    write_panels: Field,
    spatial_order: Field,
    table_points: Field,
    read_points: Field,
    rule: Field,
    rel_tol: Field,
    max_levels: Field,
}

struct Reader<'a> {
    text: &'a str,
    angular: bool,
    missing: Vec<String>,
}

impl<'a> Reader<'a> {
    fn line(&self, span: Range<usize>) -> usize {
        self.text[..span.start.min(self.text.len())]
            .matches('\n')
            .count()
            + 1
    }

    fn parse_error(
        &self,
        field: &str,
        v: &Spanned<Value>,
        message: impl std::fmt::Display,
    ) -> Error {
        Error::Parse {
            line: Some(self.line(v.span())),
            message: format!("{field}: {message}"),
        }
    }

    fn need<T>(&mut self, field: &str, v: Option<T>) -> Option<T> {
        if v.is_none() {
            self.missing.push(field.to_string());
        }
        v
    }

    fn quantity(&self, field: &str, v: &Field, dim: Dimension) -> Result<Option<f64>> {
        let Some(v) = v else { return Ok(None) };
        let at = format!("{field} (line {})", self.line(v.span()));
        match v.get_ref() {
            Value::String(s) => parse_quantity(&at, s, dim, self.angular).map(Some),
            Value::Integer(_) | Value::Float(_) => Err(Error::MissingUnit {
                field: at,
                value: v.get_ref().to_string(),
            }),
            other => Err(self.parse_error(
                field,
                v,
                format!("expected a quantity string, got {}", other.type_str()),
            )),
        }
    }

    fn number(&self, field: &str, v: &Field) -> Result<Option<f64>> {
        let Some(v) = v else { return Ok(None) };
        match v.get_ref() {
            Value::Integer(i) => Ok(Some(*i as f64)),
            Value::Float(x) => Ok(Some(*x)),
            other => Err(self.parse_error(
                field,
                v,
                format!("expected a bare number, got {}", other.type_str()),
            )),
        }
    }

    fn count(&self, field: &str, v: &Field) -> Result<Option<usize>> {
        let Some(v) = v else { return Ok(None) };
        match v.get_ref() {
            Value::Integer(i) if *i >= 0 => Ok(Some(*i as usize)),
            _ => Err(self.parse_error(field, v, "expected a nonnegative integer")),
        }
    }

    fn word(&self, field: &str, v: &Field) -> Result<Option<(String, Range<usize>)>> {
        let Some(v) = v else { return Ok(None) };
        match v.get_ref() {
            Value::String(s) => Ok(Some((s.clone(), v.span()))),
            other => Err(self.parse_error(
                field,
                v,
                format!("expected a string, got {}", other.type_str()),
            )),
        }
    }

    fn array(&self, field: &str, v: &Field) -> Result<Option<Vec<Value>>> {
        let Some(v) = v else { return Ok(None) };
        match v.get_ref() {
            Value::Array(a) => Ok(Some(a.clone())),
            other => Err(self.parse_error(
                field,
                v,
                format!("expected an array, got {}", other.type_str()),
            )),
        }
    }

    fn quantity_list(&self, field: &str, v: &Field, dim: Dimension) -> Result<Option<Vec<f64>>> {
        let Some(items) = self.array(field, v)? else {
            return Ok(None);
        };
        let line = self.line(v.as_ref().map(|s| s.span()).unwrap_or(0..0));
        let at = format!("{field} (line {line})");
        items
            .iter()
            .map(|item| match item {
                Value::String(s) => parse_quantity(&at, s, dim, self.angular),
                other => Err(Error::MissingUnit {
                    field: at.clone(),
                    value: other.to_string(),
                }),
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn number_list(&self, field: &str, v: &Field) -> Result<Option<Vec<f64>>> {
        let Some(items) = self.array(field, v)? else {
            return Ok(None);
        };
        items
            .iter()
            .map(|item| match item {
                Value::Integer(i) => Ok(*i as f64),
                Value::Float(x) => Ok(*x),
                _ => Err(self.parse_error(field, v.as_ref().unwrap(), "expected bare numbers")),
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Either the unbarred key (halved) or the barred key.
    fn barred(
        &mut self,
        field: &str,
        plain: &Field,
        bar: &Field,
        read: impl Fn(&Self, &str, &Field) -> Result<Option<f64>>,
    ) -> Result<Option<f64>> {
        let p = read(self, field, plain)?;
        let b = read(self, &format!("{field}_bar"), bar)?;
        match (p, b) {
            (Some(_), Some(_)) => Err(Error::Parse {
                line: plain.as_ref().map(|s| self.line(s.span())),
                message: format!("{field}: give either `{field}` or `{field}_bar`, not both"),
            }),
            (Some(p), None) => Ok(Some(0.5 * p)),
            (None, b) => Ok(b),
        }
    }
}

/// Parses a scenario document.
pub fn load_scenario(text: &str) -> Result<Scenario> {
    let doc: RawDocument = toml::from_str(text).map_err(|e| Error::Parse {
        line: e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1),
        message: e.message().to_string(),
    })?;
    let mut r = Reader {
        text,
        angular: doc.angular.unwrap_or(false),
        missing: Vec::new(),
    };

    let version = r.need("schema_version", doc.schema_version.as_ref());
    if let Some(v) = version {
        if v.get_ref().as_integer() != Some(SCHEMA_VERSION) {
            return Err(r.parse_error(
                "schema_version",
                v,
                format!(
                    "unsupported version {}, expected {SCHEMA_VERSION}",
                    v.get_ref()
                ),
            ));
        }
    }

    let ensemble = read_ensemble(&mut r, &doc.ensemble)?;
    let write = read_pulse(&mut r, "write_pulse", &doc.write_pulse, true)?;
    let read = read_pulse(&mut r, "read_pulse", &doc.read_pulse, false)?;
    let read_power = read_read_power(&mut r, &doc.read_power)?;
    if read_power == ReadPower::Fixed
        && doc.read_pulse.rabi.is_none()
        && doc.read_pulse.rabi_bar.is_none()
    {
        r.missing.push("read_pulse.rabi".into());
    }
    let t = &doc.timing;
    let storage_delay = r.quantity("timing.storage_delay", &t.storage_delay, Dimension::Time)?;
    let delay = r.quantity("timing.delay", &t.delay, Dimension::Time)?;
    let write_guard = r
        .quantity("timing.write_guard", &t.write_guard, Dimension::Time)?
        .unwrap_or(DEFAULT_WRITE_GUARD);
    let laser_linewidth = r.quantity(
        "timing.laser_linewidth",
        &t.laser_linewidth,
        Dimension::Rate,
    )?;
    let detection = read_detection(&r, &doc.detection)?;
    let numerics = read_numerics(&r, &doc.numerics)?;

    if !r.missing.is_empty() {
        return Err(Error::MissingFields { fields: r.missing });
    }
    let (ensemble, write, mut read) = (ensemble.unwrap(), write.unwrap(), read.unwrap());

    let write_pulse = write.envelope("write_pulse")?;
    let xi = write_pulse.support.1 + write_guard;
    let storage_delay = match (storage_delay, delay) {
        (Some(_), Some(_)) => {
            return Err(Error::invariant(
                "timing",
                "give either `delay` (peak to peak) or `storage_delay`, not both",
            ))
        }
        (Some(s), None) => s,
        (None, None) => 0.0,
        (None, Some(d)) => read.place_after(peak_time(&write_pulse.shape) + d - xi)?,
    };
    let mut read_pulse = read.envelope("read_pulse")?;

    let mut s = Scenario {
        ensemble,
        write_pulse,
        read_pulse: read_pulse.clone(),
        storage_delay,
        write_guard,
        detection,
        laser_linewidth,
        read_power,
        numerics,
    };
    match read_power {
        ReadPower::Fixed => {}
        ReadPower::MatchedArea { sweeps } => {
            read_pulse = read_pulse.with_peak(s.matched_read_peak(sweeps))
        }
        ReadPower::Optimize { .. } | ReadPower::Saturate { .. } => {
            if read.rabi_bar.is_none() {
                read_pulse = read_pulse.with_peak(s.matched_read_peak(1.0));
            }
        }
    }
    s.read_pulse = read_pulse;
    s.validate()?;
    Ok(s)
}

pub fn load_scenario_file(path: impl AsRef<Path>) -> Result<Scenario> {
    load_scenario(&std::fs::read_to_string(path)?)
}

fn read_ensemble(r: &mut Reader, e: &RawEnsemble) -> Result<Option<EnsembleParams>> {
    let d_w_bar = r.barred("ensemble.d_w", &e.d_w, &e.d_w_bar, |r, f, v| r.number(f, v))?;
    let d_w_bar = r.need("ensemble.d_w", d_w_bar);
    let d_r_bar = r.barred("ensemble.d_r", &e.d_r, &e.d_r_bar, |r, f, v| r.number(f, v))?;
    let d_r_bar = r.need("ensemble.d_r", d_r_bar);
    let delta = r.quantity(
        "ensemble.detuning",
        &e.detuning,
        Dimension::AngularFrequency,
    )?;
    let delta = r.need("ensemble.detuning", delta);
    let gamma_es = r
        .quantity(
            "ensemble.gamma_es",
            &e.gamma_es,
            Dimension::AngularFrequency,
        )?
        .unwrap_or(DEFAULT_COHERENCE_DECAY);
    let gamma_eg = r
        .quantity(
            "ensemble.gamma_eg",
            &e.gamma_eg,
            Dimension::AngularFrequency,
        )?
        .unwrap_or(DEFAULT_COHERENCE_DECAY);
    let length = r
        .quantity("ensemble.length", &e.length, Dimension::Length)?
        .unwrap_or(DEFAULT_LENGTH);
    let c = r
        .quantity("ensemble.c", &e.c, Dimension::Velocity)?
        .unwrap_or(SPEED_OF_LIGHT);
    let mode = match r.word("ensemble.spin_decay.mode", &e.spin_decay.mode)? {
        None => SpinDecayMode::Gaussian,
        Some((m, span)) => match m.as_str() {
            "gaussian" => SpinDecayMode::Gaussian,
            "exponential" => SpinDecayMode::Exponential,
            _ => return Err(Error::Parse {
                line: Some(r.line(span)),
                message: format!(
                    "ensemble.spin_decay.mode: expected \"gaussian\" or \"exponential\", got {m:?}"
                ),
            }),
        },
    };
    let dim = match mode {
        SpinDecayMode::Gaussian => Dimension::Time,
        SpinDecayMode::Exponential => Dimension::Rate,
    };
    let gamma_0 = match r.quantity("ensemble.spin_decay.gamma_0", &e.spin_decay.gamma_0, dim)? {
        Some(g) => g,
        None if mode == SpinDecayMode::Gaussian => DEFAULT_SPIN_TIME_CONSTANT,
        None => {
            r.missing.push("ensemble.spin_decay.gamma_0".into());
            0.0
        }
    };
    let (Some(d_w_bar), Some(d_r_bar), Some(delta)) = (d_w_bar, d_r_bar, delta) else {
        return Ok(None);
    };
    Ok(Some(EnsembleParams {
        d_w_bar,
        d_r_bar,
        gamma_es,
        gamma_eg,
        gamma_0,
        spin_decay_mode: mode,
        delta,
        length,
        c,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Family {
    Gaussian,
    RisingExponential,
    DoubleGaussian,
    Tabulated,
}

/// A pulse as read from the document, before its timing is settled.
struct PulseDraft {
    family: Family,
    rabi_bar: Option<f64>,
    duration: f64,
    anchor: Option<f64>,
    separation: f64,
    second_ratio: f64,
    times: Vec<f64>,
    amplitudes: Vec<f64>,
    support: Option<(f64, f64)>,
}

impl PulseDraft {
    /// Default peak (or cutoff) time with the support starting at zero.
    fn default_anchor(&self) -> f64 {
        match self.family {
            Family::Gaussian | Family::DoubleGaussian => GAUSSIAN_SUPPORT_FWHM * self.duration,
            Family::RisingExponential => RISING_SUPPORT_WIDTHS * self.duration,
            Family::Tabulated => 0.0,
        }
    }

    /// Positions the pulse so its peak lies `target` after the read
    /// origin's earliest possible time; returns the storage delay.
    fn place_after(&mut self, target: f64) -> Result<f64> {
        if self.family == Family::Tabulated {
            return Err(Error::invariant(
                "timing.delay",
                "a tabulated read pulse needs `storage_delay`",
            ));
        }
        if let Some(a) = self.anchor {
            let s = target - a;
            if s < 0.0 {
                return Err(Error::invariant(
                    "timing.delay",
                    format!("read peak would precede the write window end by {:e} s", -s),
                ));
            }
            return Ok(s);
        }
        if target <= 0.0 {
            return Err(Error::invariant(
                "timing.delay",
                "read peak would precede the write window end",
            ));
        }
        let a0 = self.default_anchor();
        if target >= a0 {
            self.anchor = Some(a0);
            Ok(target - a0)
        } else {
            self.anchor = Some(target);
            Ok(0.0)
        }
    }

    fn envelope(&self, field: &str) -> Result<PulseEnvelope> {
        let anchor = self.anchor.unwrap_or_else(|| self.default_anchor());
        let shape = match self.family {
            Family::Gaussian => PulseShape::Gaussian {
                fwhm: self.duration,
                center: anchor,
            },
            Family::RisingExponential => PulseShape::RisingExponential {
                width: self.duration,
                cutoff: anchor,
            },
            Family::DoubleGaussian => PulseShape::DoubleGaussian {
                fwhm: self.duration,
                center: anchor,
                separation: self.separation,
                second_ratio: self.second_ratio,
            },
            Family::Tabulated => PulseShape::Tabulated {
                times: self.times.clone(),
                amplitudes: self.amplitudes.clone(),
            },
        };
        let peak = self.rabi_bar.unwrap_or(0.0);
        let p = match self.support {
            Some(s) => PulseEnvelope::with_support(shape, peak, s),
            None => PulseEnvelope::new(shape, peak),
        };
        p.map_err(|e| match e {
            Error::Invariant { field: f, message } => Error::Invariant {
                field: f.replacen("pulse", field, 1),
                message,
            },
            other => other,
        })
    }
}

/// Time of the envelope maximum.
pub fn peak_time(shape: &PulseShape) -> f64 {
    match shape {
        PulseShape::Gaussian { center, .. } | PulseShape::DoubleGaussian { center, .. } => *center,
        PulseShape::RisingExponential { cutoff, .. } => *cutoff,
        PulseShape::Tabulated { times, amplitudes } => {
            let i =
                amplitudes.iter().enumerate().fold(
                    0,
                    |best, (i, a)| if *a > amplitudes[best] { i } else { best },
                );
            times[i]
        }
    }
}

fn read_pulse(
    r: &mut Reader,
    name: &str,
    p: &RawPulse,
    rabi_required: bool,
) -> Result<Option<PulseDraft>> {
    let f = |k: &str| format!("{name}.{k}");
    let family = match r.word(&f("shape"), &p.shape)? {
        None => Family::Gaussian,
        Some((s, span)) => match s.as_str() {
            "gaussian" => Family::Gaussian,
            "rising_exponential" => Family::RisingExponential,
            "double_gaussian" => Family::DoubleGaussian,
            "tabulated" => Family::Tabulated,
            _ => {
                return Err(Error::Parse {
                    line: Some(r.line(span)),
                    message: format!(
                        "{}: unknown shape {s:?}; expected gaussian, rising_exponential, double_gaussian or tabulated",
                        f("shape")
                    ),
                })
            }
        },
    };
    let rabi_bar = r.barred(&f("rabi"), &p.rabi, &p.rabi_bar, |r, f, v| {
        r.quantity(f, v, Dimension::AngularFrequency)
    })?;
    if rabi_required {
        r.need(&f("rabi"), rabi_bar);
    }
    let time = |r: &Reader, k: &str, v: &Field| r.quantity(&f(k), v, Dimension::Time);
    let (duration, anchor) = match family {
        Family::Gaussian | Family::DoubleGaussian => {
            let d = time(r, "fwhm", &p.fwhm)?;
            (r.need(&f("fwhm"), d), time(r, "center", &p.center)?)
        }
        Family::RisingExponential => {
            let d = time(r, "width", &p.width)?;
            (r.need(&f("width"), d), time(r, "cutoff", &p.cutoff)?)
        }
        Family::Tabulated => (Some(0.0), None),
    };
    let separation = if family == Family::DoubleGaussian {
        let s = time(r, "separation", &p.separation)?;
        r.need(&f("separation"), s)
    } else {
        Some(0.0)
    };
    let second_ratio = r
        .number(&f("second_ratio"), &p.second_ratio)?
        .unwrap_or(1.0);
    let (times, amplitudes) = if family == Family::Tabulated {
        let t = r.quantity_list(&f("times"), &p.times, Dimension::Time)?;
        let a = r.number_list(&f("amplitudes"), &p.amplitudes)?;
        (r.need(&f("times"), t), r.need(&f("amplitudes"), a))
    } else {
        (Some(Vec::new()), Some(Vec::new()))
    };
    let support = match r.quantity_list(&f("support"), &p.support, Dimension::Time)? {
        None => None,
        Some(v) if v.len() == 2 => Some((v[0], v[1])),
        Some(_) => {
            return Err(r.parse_error(
                &f("support"),
                p.support.as_ref().unwrap(),
                "expected [start, end]",
            ));
        }
    };
    let (Some(duration), Some(separation), Some(times), Some(amplitudes)) =
        (duration, separation, times, amplitudes)
    else {
        return Ok(None);
    };
    Ok(Some(PulseDraft {
        family,
        rabi_bar,
        duration,
        anchor,
        separation,
        second_ratio,
        times,
        amplitudes,
        support,
    }))
}

fn read_read_power(r: &mut Reader, p: &RawReadPower) -> Result<ReadPower> {
    let Some((policy, span)) = r.word("read_power.policy", &p.policy)? else {
        return Ok(ReadPower::Fixed);
    };
    Ok(match policy.as_str() {
        "fixed" => ReadPower::Fixed,
        "matched_area" => ReadPower::MatchedArea {
            sweeps: r.number("read_power.sweeps", &p.sweeps)?.unwrap_or(1.0),
        },
        "optimize" | "saturate" => {
            let lo = r.number("read_power.lo", &p.lo)?.unwrap_or(0.05);
            let hi = r.number("read_power.hi", &p.hi)?.unwrap_or(20.0);
            if policy == "optimize" {
                ReadPower::Optimize { lo, hi }
            } else {
                ReadPower::Saturate {
                    lo,
                    hi,
                    fraction: r.number("read_power.fraction", &p.fraction)?.unwrap_or(0.99),
                }
            }
        }
        _ => {
            return Err(Error::Parse {
                line: Some(r.line(span)),
                message: format!(
                    "read_power.policy: expected \"fixed\", \"matched_area\", \"optimize\" or \"saturate\", got {policy:?}"
                ),
            })
        }
    })
}

fn read_detection(r: &Reader, d: &RawDetection) -> Result<DetectionChain> {
    let def = DetectionChain::default();
    Ok(DetectionChain {
        eta_fiber: r
            .number("detection.eta_fiber", &d.eta_fiber)?
            .unwrap_or(def.eta_fiber),
        eta_filter: r
            .number("detection.eta_filter", &d.eta_filter)?
            .unwrap_or(def.eta_filter),
        eta_det: r
            .number("detection.eta_det", &d.eta_det)?
            .unwrap_or(def.eta_det),
        dark_rate: r
            .quantity("detection.dark_rate", &d.dark_rate, Dimension::Rate)?
            .unwrap_or(def.dark_rate),
        gate_width: r.quantity("detection.gate_width", &d.gate_width, Dimension::Time)?,
    })
}

fn read_numerics(r: &Reader, n: &RawNumerics) -> Result<Numerics> {
    let def = Numerics::default();
    let q = def.quadrature;
    let rule = match r.word("numerics.rule", &n.rule)? {
        None => q.rule,
        Some((w, span)) => match w.as_str() {
            "gauss_legendre_composite" => RuleKind::GaussLegendreComposite,
            "trapezoid" => RuleKind::Trapezoid,
            _ => {
                return Err(Error::Parse {
                    line: Some(r.line(span)),
                    message: format!("numerics.rule: unknown rule {w:?}"),
                })
            }
        },
    };
    Ok(Numerics {
        spatial_nodes: r
            .count("numerics.spatial_nodes", &n.spatial_nodes)?
            .unwrap_or(def.spatial_nodes),
        write_panels: r
            .count("numerics.write_panels", &n.write_panels)?
            .unwrap_or(def.write_panels),
        spatial_order: r
            .count("numerics.spatial_order", &n.spatial_order)?
            .unwrap_or(def.spatial_order),
        table_points: r
            .count("numerics.table_points", &n.table_points)?
            .unwrap_or(def.table_points),
        read_points: r
            .count("numerics.read_points", &n.read_points)?
            .unwrap_or(def.read_points),
        quadrature: QuadratureSpec {
            rule,
            rel_tol: r
                .number("numerics.rel_tol", &n.rel_tol)?
                .unwrap_or(q.rel_tol),
            max_levels: r
                .count("numerics.max_levels", &n.max_levels)?
                .map(|m| m as u32)
                .unwrap_or(q.max_levels),
        },
    })
}

fn q(v: f64, dim: Dimension) -> String {
    format!("{:?}", format_quantity(v, dim))
}

fn write_pulse_table(out: &mut String, name: &str, p: &PulseEnvelope) {
    use std::fmt::Write;
    let t = Dimension::Time;
    let _ = writeln!(out, "\n[{name}]");
    match &p.shape {
        PulseShape::Gaussian { fwhm, center } => {
            let _ = writeln!(
                out,
                "shape = \"gaussian\"\nfwhm = {}\ncenter = {}",
                q(*fwhm, t),
                q(*center, t)
            );
        }
        PulseShape::RisingExponential { width, cutoff } => {
            let _ = writeln!(
                out,
                "shape = \"rising_exponential\"\nwidth = {}\ncutoff = {}",
                q(*width, t),
                q(*cutoff, t)
            );
        }
        PulseShape::DoubleGaussian {
            fwhm,
            center,
            separation,
            second_ratio,
        } => {
            let _ = writeln!(
                out,
                "shape = \"double_gaussian\"\nfwhm = {}\ncenter = {}\nseparation = {}\nsecond_ratio = {second_ratio:?}",
                q(*fwhm, t),
                q(*center, t),
                q(*separation, t)
            );
        }
        PulseShape::Tabulated { times, amplitudes } => {
            let ts: Vec<String> = times.iter().map(|x| q(*x, t)).collect();
            let am: Vec<String> = amplitudes.iter().map(|a| format!("{a:?}")).collect();
            let _ = writeln!(
                out,
                "shape = \"tabulated\"\ntimes = [{}]\namplitudes = [{}]",
                ts.join(", "),
                am.join(", ")
            );
        }
    }
    let _ = writeln!(
        out,
        "rabi_bar = {}\nsupport = [{}, {}]",
        q(p.peak_rabi_bar, Dimension::AngularFrequency),
        q(p.support.0, t),
        q(p.support.1, t)
    );
}

/// Canonical document: every field explicit, SI units, shortest exact
/// float text. Loading it reproduces the scenario field for field.
pub fn to_canonical_toml(s: &Scenario) -> String {
    use std::fmt::Write;
    let e = &s.ensemble;
    let w = Dimension::AngularFrequency;
    let mut out = String::new();
    let _ = writeln!(out, "schema_version = {SCHEMA_VERSION}");
    let _ = writeln!(
        out,
        "\n[ensemble]\nd_w_bar = {:?}\nd_r_bar = {:?}\ndetuning = {}\ngamma_es = {}\ngamma_eg = {}\nlength = {}\nc = {}",
        e.d_w_bar,
        e.d_r_bar,
        q(e.delta, w),
        q(e.gamma_es, w),
        q(e.gamma_eg, w),
        q(e.length, Dimension::Length),
        q(e.c, Dimension::Velocity)
    );
    let (mode, dim) = match e.spin_decay_mode {
        SpinDecayMode::Gaussian => ("gaussian", Dimension::Time),
        SpinDecayMode::Exponential => ("exponential", Dimension::Rate),
    };
    let _ = writeln!(
        out,
        "\n[ensemble.spin_decay]\nmode = \"{mode}\"\ngamma_0 = {}",
        q(e.gamma_0, dim)
    );
    write_pulse_table(&mut out, "write_pulse", &s.write_pulse);
    write_pulse_table(&mut out, "read_pulse", &s.read_pulse);
    let _ = writeln!(out, "\n[read_power]");
    let _ = match s.read_power {
        ReadPower::Fixed => writeln!(out, "policy = \"fixed\""),
        ReadPower::MatchedArea { sweeps } => {
            writeln!(out, "policy = \"matched_area\"\nsweeps = {sweeps:?}")
        }
        ReadPower::Optimize { lo, hi } => {
            writeln!(out, "policy = \"optimize\"\nlo = {lo:?}\nhi = {hi:?}")
        }
        ReadPower::Saturate { lo, hi, fraction } => writeln!(
            out,
            "policy = \"saturate\"\nlo = {lo:?}\nhi = {hi:?}\nfraction = {fraction:?}"
        ),
    };
    let _ = writeln!(
        out,
        "\n[timing]\nstorage_delay = {}\nwrite_guard = {}",
        q(s.storage_delay, Dimension::Time),
        q(s.write_guard, Dimension::Time)
    );
    if let Some(l) = s.laser_linewidth {
        let _ = writeln!(out, "laser_linewidth = {}", q(l, Dimension::Rate));
    }
    let d = &s.detection;
    let _ = writeln!(
        out,
        "\n[detection]\neta_fiber = {:?}\neta_filter = {:?}\neta_det = {:?}\ndark_rate = {}",
        d.eta_fiber,
        d.eta_filter,
        d.eta_det,
        q(d.dark_rate, Dimension::Rate)
    );
    if let Some(g) = d.gate_width {
        let _ = writeln!(out, "gate_width = {}", q(g, Dimension::Time));
    }
    let n = &s.numerics;
    let rule = match n.quadrature.rule {
        RuleKind::GaussLegendreComposite => "gauss_legendre_composite",
        RuleKind::Trapezoid => "trapezoid",
    };
    let _ = writeln!(
        out,
        "\n[numerics]\nspatial_nodes = {}\nwrite_panels = {}\nspatial_order = {}\ntable_points = {}\nread_points = {}\nrule = \"{rule}\"\nrel_tol = {:?}\nmax_levels = {}",
        n.spatial_nodes,
        n.write_panels,
        n.spatial_order,
        n.table_points,
        n.read_points,
        n.quadrature.rel_tol,
        n.quadrature.max_levels
    );
    out
}

/// SHA-256 of the canonical document, hex encoded.
pub fn scenario_hash(s: &Scenario) -> String {
    hex::encode(Sha256::digest(to_canonical_toml(s).as_bytes()))
}
