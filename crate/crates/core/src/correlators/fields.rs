//! Field operators as finite sums of kernel × elementary-input terms.
//!
//! Each term stands for `∫dz∫dt c(z, t)·X(z, t)` where `X` is an
//! elementary input (or its adjoint) and each coordinate is either fixed,
//! integrated over an interval, or absent for that input. Coordinates are
//! physical: metres along the medium, seconds in the retarded frame.

use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::kernels::{ReadKernelContext, WriteKernelContext};
use crate::model::{DecayClock, Scenario};
use crate::quadrature::{integrate_1d, integrate_nested, Domain, Nested, QuadratureSpec};

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InputKind {
    /// Write-field vacuum entering the medium, `E_w(0, t)`.
    VacuumWriteField,
    /// Spin wave before the write pulse, `S(z, 0)`.
    InitialSpin,
    /// Langevin noise of the write process, `F_S(z, t)`.
    WriteNoise,
    /// Langevin noise of the read process, `F_P(z, t)`.
    ReadNoise,
}

impl InputKind {
    pub fn is_noise(self) -> bool {
        matches!(self, InputKind::WriteNoise | InputKind::ReadNoise)
    }

    fn symbol(self) -> &'static str {
        match self {
            InputKind::VacuumWriteField => "E0",
            InputKind::InitialSpin => "S0",
            InputKind::WriteNoise => "FS",
            InputKind::ReadNoise => "FP",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ElementaryInput {
    pub kind: InputKind,
    pub dagger: bool,
}

impl ElementaryInput {
    pub fn new(kind: InputKind, dagger: bool) -> Self {
        ElementaryInput { kind, dagger }
    }

    pub fn adjoint(self) -> Self {
        ElementaryInput {
            dagger: !self.dagger,
            ..self
        }
    }
}

impl fmt::Display for ElementaryInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}",
            self.kind.symbol(),
            if self.dagger { "†" } else { "" }
        )
    }
}

/// How a term depends on one coordinate of its input.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    Absent,
    Point(f64),
    Interval(Domain),
}

impl Support {
    fn interval(lo: f64, hi: f64) -> Self {
        Support::Interval(Domain::new(lo, hi))
    }
}

pub type Coefficient = Arc<dyn Fn(f64, f64) -> Result<C64> + Send + Sync>;

#[derive(Clone)]
pub struct Term {
    pub label: String,
    pub input: ElementaryInput,
    pub z: Support,
    pub t: Support,
    /// Kernel `c(z, t)`; absent coordinates are passed as zero.
    pub coefficient: Coefficient,
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Term")
            .field("label", &self.label)
            .field("input", &self.input)
            .field("z", &self.z)
            .field("t", &self.t)
            .finish()
    }
}

impl Term {
    fn new<F>(label: &str, kind: InputKind, dagger: bool, z: Support, t: Support, f: F) -> Self
    where
        F: Fn(f64, f64) -> Result<C64> + Send + Sync + 'static,
    {
        Term {
            label: label.to_string(),
            input: ElementaryInput::new(kind, dagger),
            z,
            t,
            coefficient: Arc::new(f),
        }
    }

    pub fn adjoint(&self) -> Term {
        let c = self.coefficient.clone();
        Term {
            label: self.label.clone(),
            input: self.input.adjoint(),
            z: self.z.clone(),
            t: self.t.clone(),
            coefficient: Arc::new(move |z, t| c(z, t).map(|v| v.conj())),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FieldExpansion {
    pub terms: Vec<Term>,
}

impl FieldExpansion {
    pub fn adjoint(&self) -> FieldExpansion {
        FieldExpansion {
            terms: self.terms.iter().map(Term::adjoint).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.terms.iter().map(|t| t.label.as_str()).collect()
    }
}

/// Builds the write-stage and read-stage expansions of one scenario.
pub struct FieldBuilder {
    write: Arc<WriteKernelContext>,
    read: Arc<ReadKernelContext>,
    clock: DecayClock,
    /// `-1/(g√N)`.
    read_prefactor: f64,
    spec: QuadratureSpec,
}

impl FieldBuilder {
    pub fn new(scenario: &Scenario, spec: QuadratureSpec) -> Result<Self> {
        Ok(FieldBuilder {
            write: Arc::new(WriteKernelContext::build(scenario)?),
            read: Arc::new(ReadKernelContext::build(scenario)?),
            clock: scenario.decay_clock(),
            read_prefactor: -1.0 / scenario.ensemble.read_coupling().sqrt(),
            spec,
        })
    }

    pub fn write_context(&self) -> &WriteKernelContext {
        &self.write
    }

    pub fn read_context(&self) -> &ReadKernelContext {
        &self.read
    }

    fn driven(&self) -> bool {
        self.write.pulse().peak_rabi_bar != 0.0
    }

    fn noisy(&self) -> bool {
        self.driven() || self.write.spin_rate() > 0.0
    }

    /// `S†(z, t)` during the write window, five term groups.
    pub fn spinwave(&self, z: f64, t: f64) -> Result<FieldExpansion> {
        let len = self.write.length();
        if !(0.0..=len).contains(&z) || !(0.0..=self.write.xi()).contains(&t) {
            return Err(Error::Domain {
                what: "spin-wave evaluation point",
                value: if (0.0..=len).contains(&z) { t } else { z },
            });
        }
        let mut terms = Vec::new();
        let ctx = self.write.clone();
        terms.push(Term::new(
            "s1:decay",
            InputKind::InitialSpin,
            true,
            Support::Point(z),
            Support::Absent,
            move |_, _| Ok((-ctx.cumulative_gamma(t)).exp()),
        ));
        if self.noisy() {
            let ctx = self.write.clone();
            terms.push(Term::new(
                "s2:local-noise",
                InputKind::WriteNoise,
                true,
                Support::Point(z),
                Support::interval(0.0, t),
                move |_, s| Ok((ctx.cumulative_gamma(s) - ctx.cumulative_gamma(t)).exp()),
            ));
        }
        if self.driven() {
            let ctx = self.write.clone();
            terms.push(Term::new(
                "s3:vacuum-drive",
                InputKind::VacuumWriteField,
                false,
                Support::Absent,
                Support::interval(0.0, t),
                move |_, s| {
                    let h = ctx.kernel_h(z, 0.0, t, s)?;
                    Ok(-I
                        * ctx.chi(s)
                        * (ctx.cumulative_gamma(s) - ctx.cumulative_gamma(t)).exp()
                        * h)
                },
            ));
            let ctx = self.write.clone();
            terms.push(Term::new(
                "s4:spin-propagated",
                InputKind::InitialSpin,
                true,
                Support::interval(0.0, z),
                Support::Absent,
                move |zz, _| Ok((-ctx.cumulative_gamma(t)).exp() * ctx.kernel_gs(z, zz, t, 0.0)?),
            ));
            let ctx = self.write.clone();
            terms.push(Term::new(
                "s5:noise-propagated",
                InputKind::WriteNoise,
                true,
                Support::interval(0.0, z),
                Support::interval(0.0, t),
                move |zz, s| {
                    Ok((ctx.cumulative_gamma(s) - ctx.cumulative_gamma(t)).exp()
                        * ctx.kernel_gs(z, zz, t, s)?)
                },
            ));
        }
        Ok(FieldExpansion { terms })
    }

    /// `E_w(L, t)`, four term groups.
    pub fn write_field(&self, t: f64) -> Result<FieldExpansion> {
        let mut terms = vec![Term::new(
            "w1:passthrough",
            InputKind::VacuumWriteField,
            false,
            Support::Absent,
            Support::Point(t),
            |_, _| Ok(C64::new(1.0, 0.0)),
        )];
        if !self.driven() {
            return Ok(FieldExpansion { terms });
        }
        let len = self.write.length();
        let c = len / self.write.transit();
        let ctx = self.write.clone();
        terms.push(Term::new(
            "w2:initial-spin",
            InputKind::InitialSpin,
            true,
            Support::interval(0.0, len),
            Support::Absent,
            move |zz, _| {
                let h = ctx.kernel_h(len, zz, t, 0.0)?;
                Ok(I * (ctx.chi(t) / c) * (-ctx.cumulative_gamma(t)).exp() * h)
            },
        ));
        let ctx = self.write.clone();
        terms.push(Term::new(
            "w3:noise",
            InputKind::WriteNoise,
            true,
            Support::interval(0.0, len),
            Support::interval(0.0, t),
            move |zz, s| {
                let h = ctx.kernel_h(len, zz, t, s)?;
                Ok(I * (ctx.chi(t) / c)
                    * (ctx.cumulative_gamma(s) - ctx.cumulative_gamma(t)).exp()
                    * h)
            },
        ));
        let ctx = self.write.clone();
        terms.push(Term::new(
            "w4:gain",
            InputKind::VacuumWriteField,
            false,
            Support::Absent,
            Support::interval(0.0, t),
            move |_, s| {
                let ge = ctx.kernel_ge(len, 0.0, t, s)?;
                Ok((ctx.chi(t) / c)
                    * ctx.chi(s)
                    * (ctx.cumulative_gamma(s) - ctx.cumulative_gamma(t)).exp()
                    * ge)
            },
        ));
        Ok(FieldExpansion { terms })
    }

    /// Signal part of `E_r(0, t)`: the retrieval kernel applied to
    /// `S(u, ξ)`, expanded over the write-stage inputs.
    pub fn read_field(&self, t: f64) -> Result<FieldExpansion> {
        let rabi = self.read.rabi(t);
        if rabi == 0.0 {
            return Ok(FieldExpansion::default());
        }
        let len = self.write.length();
        let xi = self.write.xi();
        let mu = self.read.sweep(t);
        let center = mu * len;
        let width = self.read.width_for(mu) * len;
        if width <= 0.0 {
            return Err(Error::Domain {
                what: "retrieval kernel width",
                value: width,
            });
        }
        let prefactor = self.read_prefactor * rabi * self.clock.amplitude(t);
        let kernel = Arc::new(move |u: f64| {
            let s = (u - center) / width;
            (-0.5 * s * s).exp() / ((2.0 * std::f64::consts::PI).sqrt() * width)
        });
        let breaks = [center - 4.0 * width, center, center + 4.0 * width];
        let spec = self.spec;
        let spin = self.spinwave(len, xi)?;
        let mut terms = Vec::new();
        for term in spin.terms {
            let input = term.input.adjoint();
            let label = term.label.replacen('s', "r", 1);
            let coeff = term.coefficient.clone();
            let k = kernel.clone();
            let write = self.write.clone();
            // Terms local in z collapse the retrieval integral onto u = z''.
            let composed: Coefficient = match term.z {
                Support::Point(_) => Arc::new(move |zz, s| {
                    let v = coeff(zz, s)?;
                    Ok(prefactor * k(zz) * v.conj())
                }),
                Support::Absent => Arc::new(move |_, s| {
                    let rebuilt = respin(&write, s, xi);
                    let err = RefCell::new(None);
                    let est = integrate_1d(
                        |u| match rebuilt(u) {
                            Ok(v) => k(u) * v.conj(),
                            Err(e) => {
                                err.borrow_mut().get_or_insert(e);
                                C64::default()
                            }
                        },
                        &Domain::new(0.0, len).with_breaks(&breaks),
                        &spec,
                    );
                    if let Some(e) = err.into_inner() {
                        return Err(e);
                    }
                    Ok(prefactor * est.require("read kernel over s3")?.value)
                }),
                Support::Interval(_) => {
                    let local = term.label.clone();
                    Arc::new(move |zz, s| {
                        let err = RefCell::new(None);
                        let est = integrate_1d(
                            |u| match propagated(&write, &local, u, zz, s, xi) {
                                Ok(v) => k(u) * v.conj(),
                                Err(e) => {
                                    err.borrow_mut().get_or_insert(e);
                                    C64::default()
                                }
                            },
                            &Domain::new(zz, len).with_breaks(&breaks),
                            &spec,
                        );
                        if let Some(e) = err.into_inner() {
                            return Err(e);
                        }
                        Ok(prefactor * est.require("read kernel over G_s")?.value)
                    })
                }
            };
            let z = match term.z {
                Support::Point(_) => Support::Interval(Domain::new(0.0, len).with_breaks(&breaks)),
                other => other,
            };
            terms.push(Term {
                label,
                input,
                z,
                t: term.t,
                coefficient: composed,
            });
        }
        Ok(FieldExpansion { terms })
    }
}

/// Vacuum-drive coefficient of `S†(u, ξ)` as a function of `u`.
fn respin(ctx: &WriteKernelContext, s: f64, xi: f64) -> impl Fn(f64) -> Result<C64> + '_ {
    let phase = -I * ctx.chi(s) * (ctx.cumulative_gamma(s) - ctx.cumulative_gamma(xi)).exp();
    move |u: f64| Ok(phase * ctx.kernel_h(u, 0.0, xi, s)?)
}

/// `G_s`-propagated coefficient of `S†(u, ξ)` at source `(z'', t'')`.
fn propagated(
    ctx: &WriteKernelContext,
    label: &str,
    u: f64,
    zz: f64,
    s: f64,
    xi: f64,
) -> Result<C64> {
    if label.starts_with("s4") {
        Ok((-ctx.cumulative_gamma(xi)).exp() * ctx.kernel_gs(u, zz, xi, 0.0)?)
    } else {
        Ok((ctx.cumulative_gamma(s) - ctx.cumulative_gamma(xi)).exp()
            * ctx.kernel_gs(u, zz, xi, s)?)
    }
}

/// Outcome of pairing two terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Contraction {
    /// Vanishes by operator order or input kind.
    Zero,
    Value {
        value: C64,
        error: f64,
    },
    /// Coincident point supports: the stated coefficient times `δ(0)`.
    Singular {
        weight: C64,
    },
}

/// Anti-normally ordered vacuum moments of the elementary inputs.
pub struct VacuumRule {
    write: Arc<WriteKernelContext>,
    gamma_eg: f64,
    pub spec: QuadratureSpec,
}

impl VacuumRule {
    pub fn new(builder: &FieldBuilder, scenario: &Scenario) -> Self {
        VacuumRule {
            write: builder.write.clone(),
            gamma_eg: scenario.ensemble.gamma_eg,
            spec: builder.spec,
        }
    }

    /// Strength of `⟨X X†⟩` per unit delta, possibly time dependent.
    fn weight(&self, kind: InputKind, t: f64) -> f64 {
        let len = self.write.length();
        match kind {
            InputKind::VacuumWriteField => self.write.transit(),
            InputKind::InitialSpin => len,
            InputKind::WriteNoise => 2.0 * self.write.gamma_s_re(t) * len,
            InputKind::ReadNoise => 2.0 * self.gamma_eg * len,
        }
    }

    pub fn contract(&self, left: &Term, right: &Term) -> Result<Contraction> {
        if left.input.kind != right.input.kind || left.input.dagger || !right.input.dagger {
            return Ok(Contraction::Zero);
        }
        let (z, zs) = match collapse(&left.z, &right.z) {
            Some(v) => v,
            None => return Ok(Contraction::Zero),
        };
        let (t, ts) = match collapse(&left.t, &right.t) {
            Some(v) => v,
            None => return Ok(Contraction::Zero),
        };
        let kind = left.input.kind;
        let integrand = |zv: f64, tv: f64| -> Result<C64> {
            Ok((left.coefficient)(zv, tv)? * (right.coefficient)(zv, tv)? * self.weight(kind, tv))
        };
        if zs || ts {
            let zv = as_point(&z);
            let tv = as_point(&t);
            if let (Some(zv), Some(tv)) = (zv, tv) {
                return Ok(Contraction::Singular {
                    weight: integrand(zv, tv)?,
                });
            }
            return Err(Error::Domain {
                what: "coincident delta supports inside an integral",
                value: 0.0,
            });
        }
        let err = RefCell::new(None);
        let guarded = |zv: f64, tv: f64| match integrand(zv, tv) {
            Ok(v) => v,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                C64::default()
            }
        };
        let est = match (&z, &t) {
            (Reduced::Fixed(zv), Reduced::Fixed(tv)) => {
                let v = guarded(*zv, *tv);
                crate::quadrature::Estimate {
                    value: v,
                    error: 0.0,
                    converged: true,
                }
            }
            (Reduced::Over(d), Reduced::Fixed(tv)) => {
                integrate_1d(|zv| guarded(zv, *tv), d, &self.spec)
            }
            (Reduced::Fixed(zv), Reduced::Over(d)) => {
                integrate_1d(|tv| guarded(*zv, tv), d, &self.spec)
            }
            (Reduced::Over(dz), Reduced::Over(dt)) => {
                let dt = dt.clone();
                integrate_nested(
                    |zv, tv, _| guarded(zv, tv),
                    &Nested::Two {
                        outer: dz.clone(),
                        inner: Box::new(move |_| dt.clone()),
                    },
                    &self.spec,
                )
            }
        };
        if let Some(e) = err.into_inner() {
            return Err(e);
        }
        let est = est.require(&format!("{}|{}", left.label, right.label))?;
        Ok(Contraction::Value {
            value: est.value,
            error: est.error,
        })
    }
}

enum Reduced {
    Fixed(f64),
    Over(Domain),
}

fn as_point(r: &Reduced) -> Option<f64> {
    match r {
        Reduced::Fixed(v) => Some(*v),
        Reduced::Over(_) => None,
    }
}

/// Collapses `δ(a - b)` between two supports. Returns the remaining
/// coordinate and whether the delta was evaluated at zero separation.
/// `None` means the supports do not overlap.
fn collapse(a: &Support, b: &Support) -> Option<(Reduced, bool)> {
    match (a, b) {
        (Support::Absent, Support::Absent) => Some((Reduced::Fixed(0.0), false)),
        (Support::Absent, _) | (_, Support::Absent) => None,
        (Support::Point(x), Support::Point(y)) => (x == y).then_some((Reduced::Fixed(*x), true)),
        (Support::Point(x), Support::Interval(d)) | (Support::Interval(d), Support::Point(x)) => {
            (*x >= d.lo && *x <= d.hi).then_some((Reduced::Fixed(*x), false))
        }
        (Support::Interval(d1), Support::Interval(d2)) => {
            let lo = d1.lo.max(d2.lo);
            let hi = d1.hi.min(d2.hi);
            if hi <= lo {
                return None;
            }
            let mut breaks = d1.breaks().to_vec();
            breaks.extend_from_slice(d2.breaks());
            Some((
                Reduced::Over(Domain::new(lo, hi).with_breaks(&breaks)),
                false,
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EnsembleParams, PulseEnvelope, TWO_PI};
    use approx::assert_relative_eq;

    fn scenario(write_peak: f64) -> Scenario {
        let e = EnsembleParams::from_unbarred(7.5, 5.0, -TWO_PI * 40e6).unwrap();
        let w = PulseEnvelope::gaussian(write_peak, 15e-9).unwrap();
        let r = PulseEnvelope::gaussian(TWO_PI * 11.75e6, 35e-9).unwrap();
        Scenario::new(e, w, r).unwrap()
    }

    #[test]
    fn undriven_spinwave_is_pure_decay() {
        let s = scenario(0.0);
        let b = FieldBuilder::new(&s, QuadratureSpec::default()).unwrap();
        let t = 0.5 * b.write_context().xi();
        let e = b.spinwave(1e-3, t).unwrap();
        assert_eq!(e.labels(), vec!["s1:decay"]);
        let v = (e.terms[0].coefficient)(0.0, 0.0).unwrap();
        assert_relative_eq!(v.re, 1.0, max_relative = 1e-12);
        assert_eq!(b.write_field(t).unwrap().labels(), vec!["w1:passthrough"]);
    }

    #[test]
    fn term_groups_are_complete() {
        let s = scenario(TWO_PI * 12.55e6);
        let b = FieldBuilder::new(&s, QuadratureSpec::default()).unwrap();
        let xi = b.write_context().xi();
        assert_eq!(b.spinwave(1e-3, xi).unwrap().len(), 5);
        assert_eq!(b.write_field(45e-9).unwrap().len(), 4);
        let t = s.read_origin() + 105e-9;
        assert_eq!(
            b.read_field(t).unwrap().labels(),
            vec![
                "r1:decay",
                "r2:local-noise",
                "r3:vacuum-drive",
                "r4:spin-propagated",
                "r5:noise-propagated"
            ]
        );
    }

    #[test]
    fn vacuum_normalization_at_start() {
        let s = scenario(TWO_PI * 12.55e6);
        let b = FieldBuilder::new(&s, QuadratureSpec::default()).unwrap();
        let rule = VacuumRule::new(&b, &s);
        let sd = b.spinwave(1e-3, 0.0).unwrap();
        let sp = sd.adjoint();
        let c = rule.contract(&sp.terms[0], &sd.terms[0]).unwrap();
        match c {
            Contraction::Singular { weight } => {
                assert_relative_eq!(weight.re, s.ensemble.length, max_relative = 1e-12)
            }
            other => panic!("expected a delta, got {other:?}"),
        }
    }

    #[test]
    fn normally_ordered_pairs_vanish() {
        let s = scenario(TWO_PI * 12.55e6);
        let b = FieldBuilder::new(&s, QuadratureSpec::default()).unwrap();
        let rule = VacuumRule::new(&b, &s);
        let w = b.write_field(45e-9).unwrap();
        let wd = w.adjoint();
        // ⟨S0† S0⟩ and ⟨E0† E0⟩ orderings.
        assert_eq!(
            rule.contract(&w.terms[1], &wd.terms[1]).unwrap(),
            Contraction::Zero
        );
        assert_eq!(
            rule.contract(&wd.terms[0], &w.terms[0]).unwrap(),
            Contraction::Zero
        );
        assert_eq!(
            rule.contract(&wd.terms[1], &w.terms[2]).unwrap(),
            Contraction::Zero
        );
    }

    #[test]
    fn read_field_vanishes_without_drive() {
        let mut s = scenario(TWO_PI * 12.55e6);
        s.read_pulse = s.read_pulse.with_peak(0.0);
        let b = FieldBuilder::new(&s, QuadratureSpec::default()).unwrap();
        assert!(b.read_field(s.read_origin() + 100e-9).unwrap().is_empty());
    }
}
