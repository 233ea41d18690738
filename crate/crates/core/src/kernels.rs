//! Deterministic kernels of the write and read stages.
//!
//! The write stage is described by the coupling `χ(t)`, the complex
//! Stark-shifted decay `Γ_S(t)` and their running integrals `Γ(t)` and
//! `g(t)`. Internally the gain is kept dimensionless, `G(t) = (L/c)·g(t)`,
//! and positions as fractions of the medium length, so that the Bessel
//! arguments read `2√(ΔG·Δx)`.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::interp::HermiteTable;
use crate::model::{PulseEnvelope, Scenario};
use crate::quadrature::Rule;
use crate::special::{bessel_i_scaled, i1_ratio, Order};

/// Radius below which the removable singularities of `G_s`/`G_e` are
/// replaced by their series limits.
pub const SINGULAR_SWITCH: f64 = 1e-6;
/// Default Bessel argument above which the exponentially scaled path is used.
pub const DEFAULT_SCALED_THRESHOLD: f64 = 30.0;
/// Tolerated negative radicand from rounding.
const RADICAND_SLACK: f64 = 1e-12;

fn radicand(dgain: f64, dx: f64) -> Result<f64> {
    let r = dgain * dx;
    if r < -RADICAND_SLACK || r.is_nan() {
        return Err(Error::Domain {
            what: "kernel radicand [g(t')-g(t'')](z'-z'')/c",
            value: r,
        });
    }
    Ok(r.max(0.0))
}

/// `I0(2√(ΔG·Δx))`.
pub fn h_dimless(dgain: f64, dx: f64, scaled_threshold: f64) -> Result<f64> {
    let a = 2.0 * radicand(dgain, dx)?.sqrt();
    if a > scaled_threshold {
        Ok(bessel_i_scaled(Order::Zero, a)? * a.exp())
    } else {
        crate::special::i0(a)
    }
}

/// `I0(2√(ΔG·Δx))·e^{-ΔΓ}` with the growth folded into the exponent, so
/// large arguments never overflow on their own.
pub fn h_decayed(dgain: f64, dx: f64, dgamma: C64) -> Result<C64> {
    let a = 2.0 * radicand(dgain, dx)?.sqrt();
    let s = bessel_i_scaled(Order::Zero, a)?;
    Ok((C64::new(a, 0.0) - dgamma).exp() * s)
}

/// `2 I1(a)/a` at `a = 2√(ΔG·Δx)`; `G_s = (ΔG/L)·ratio`, `G_e = Δz·ratio`.
pub fn bessel_ratio(dgain: f64, dx: f64) -> Result<f64> {
    let a = 2.0 * radicand(dgain, dx)?.sqrt();
    i1_ratio(a)
}

/// `2 I1(a)/a · e^{-ΔΓ}` with scaled evaluation.
pub fn ratio_decayed(dgain: f64, dx: f64, dgamma: C64) -> Result<C64> {
    let a = 2.0 * radicand(dgain, dx)?.sqrt();
    if a < SINGULAR_SWITCH {
        let a2 = a * a;
        return Ok((-dgamma).exp() * (1.0 + a2 / 8.0 + a2 * a2 / 192.0));
    }
    let s = bessel_i_scaled(Order::One, a)?;
    Ok((C64::new(a, 0.0) - dgamma).exp() * (2.0 * s / a))
}

/// Tables and pulse data of the write stage.
#[derive(Debug, Clone)]
pub struct WriteKernelContext {
    pulse: PulseEnvelope,
    /// `√(d̄_w γ_es c/L)/Δ`, so `χ = chi_scale·Ω̄_W`.
    chi_scale: f64,
    gamma_es: f64,
    delta: f64,
    spin_rate: f64,
    length: f64,
    c: f64,
    xi: f64,
    pub scaled_threshold: f64,
    gamma_table: HermiteTable,
    gain_table: HermiteTable,
}

/// Monotonicity slack for cumulative tables.
const MONOTONE_SLACK: f64 = 1e-13;

impl WriteKernelContext {
    pub fn build(scenario: &Scenario) -> Result<Self> {
        let e = &scenario.ensemble;
        let pulse = scenario.write_pulse.clone();
        let xi = scenario.xi();
        let n = scenario.numerics.table_points;
        let mut ctx = WriteKernelContext {
            pulse,
            chi_scale: (e.d_w_bar * e.gamma_es * e.c / e.length).sqrt() / e.delta,
            gamma_es: e.gamma_es,
            delta: e.delta,
            spin_rate: e.write_stage_spin_rate(),
            length: e.length,
            c: e.c,
            xi,
            scaled_threshold: DEFAULT_SCALED_THRESHOLD,
            gamma_table: HermiteTable::new(
                0.0,
                1.0,
                vec![C64::default(); 2],
                vec![C64::default(); 2],
            ),
            gain_table: HermiteTable::new(
                0.0,
                1.0,
                vec![C64::default(); 2],
                vec![C64::default(); 2],
            ),
        };
        let step = xi / (n - 1) as f64;
        let rule = Rule::new(8);
        let l_over_c = e.length / e.c;
        let mut gam = Vec::with_capacity(n);
        let mut gain = Vec::with_capacity(n);
        let mut dgam = Vec::with_capacity(n);
        let mut dgain = Vec::with_capacity(n);
        let (mut acc_gam, mut acc_gain) = (C64::default(), C64::default());
        for i in 0..n {
            let t = step * i as f64;
            if i > 0 {
                let a = t - step;
                acc_gam += rule.apply(a, t, |s| ctx.gamma_s(s));
                acc_gain += rule.apply(a, t, |s| C64::new(l_over_c * ctx.chi(s).powi(2), 0.0));
            }
            gam.push(acc_gam);
            gain.push(acc_gain);
            dgam.push(ctx.gamma_s(t));
            dgain.push(C64::new(l_over_c * ctx.chi(t).powi(2), 0.0));
        }
        for w in gam.windows(2) {
            if w[1].re < w[0].re - MONOTONE_SLACK * w[1].re.abs() {
                return Err(Error::invariant(
                    "write tables",
                    "Re Γ(t) is not nondecreasing",
                ));
            }
        }
        for w in gain.windows(2) {
            if w[1].re < w[0].re - MONOTONE_SLACK * w[1].re.abs() {
                return Err(Error::invariant(
                    "write tables",
                    "g(t) is not nondecreasing",
                ));
            }
        }
        ctx.gamma_table = HermiteTable::new(0.0, step, gam, dgam);
        ctx.gain_table = HermiteTable::new(0.0, step, gain, dgain);
        Ok(ctx)
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn pulse(&self) -> &PulseEnvelope {
        &self.pulse
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// `L/c`.
    pub fn transit(&self) -> f64 {
        self.length / self.c
    }

    /// `χ(t)`.
    pub fn chi(&self, t: f64) -> f64 {
        self.chi_scale * self.pulse.rabi(t)
    }

    /// `γ_S(t)`.
    pub fn gamma_s_re(&self, t: f64) -> f64 {
        let w2 = self.pulse.rabi_sq(t);
        self.spin_rate + self.gamma_es * w2 / (self.delta * self.delta)
    }

    /// Spin decay rate applied during the write stage.
    pub fn spin_rate(&self) -> f64 {
        self.spin_rate
    }

    /// `Γ_S(t) = γ_S(t) + iδ_S(t)`.
    pub fn gamma_s(&self, t: f64) -> C64 {
        let w2 = self.pulse.rabi_sq(t);
        C64::new(self.gamma_s_re(t), -w2 / self.delta)
    }

    /// `Γ(t) = ∫₀ᵗ Γ_S`.
    pub fn cumulative_gamma(&self, t: f64) -> C64 {
        if t <= self.xi {
            self.gamma_table.eval(t)
        } else {
            self.gamma_table.eval(self.xi) + self.spin_rate * (t - self.xi)
        }
    }

    /// Dimensionless gain `G(t) = (L/c)∫₀ᵗ χ²`.
    pub fn gain(&self, t: f64) -> f64 {
        self.gain_table.eval(t).re
    }

    /// `g(t) = ∫₀ᵗ χ²`, in s⁻¹.
    pub fn g(&self, t: f64) -> f64 {
        self.gain(t) / self.transit()
    }

    /// `H(z', z'', t', t'')`.
    pub fn kernel_h(&self, z1: f64, z2: f64, t1: f64, t2: f64) -> Result<f64> {
        let dgain = self.gain(t1) - self.gain(t2);
        h_dimless(dgain, (z1 - z2) / self.length, self.scaled_threshold)
    }

    /// `G_s(z', z'', t', t'')`, in m⁻¹. Tends to `Δg/c` as `z'' → z'` and
    /// to zero as `t'' → t'`.
    pub fn kernel_gs(&self, z1: f64, z2: f64, t1: f64, t2: f64) -> Result<f64> {
        let dgain = self.gain(t1) - self.gain(t2);
        let ratio = bessel_ratio(dgain, (z1 - z2) / self.length)?;
        Ok(dgain / self.length * ratio)
    }

    /// `G_e(z', z'', t', t'')`, in m, evaluated as `(z'-z'')·2I1(a)/a`.
    pub fn kernel_ge(&self, z1: f64, z2: f64, t1: f64, t2: f64) -> Result<f64> {
        let dgain = self.gain(t1) - self.gain(t2);
        let ratio = bessel_ratio(dgain, (z1 - z2) / self.length)?;
        Ok((z1 - z2) * ratio)
    }
}

/// Read-stage quantities: `Δτ`, `Δl` and `g²N`.
#[derive(Debug, Clone)]
pub struct ReadKernelContext {
    pulse: PulseEnvelope,
    origin: f64,
    d_r_bar: f64,
    gamma_eg: f64,
    length: f64,
    c: f64,
    /// Dimensionless sweep `μ(t) = ∫Ω̄_R²/(d̄_r γ_eg)` from the read origin.
    sweep: HermiteTable,
}

impl ReadKernelContext {
    pub fn build(scenario: &Scenario) -> Result<Self> {
        let e = &scenario.ensemble;
        let pulse = scenario.read_pulse.clone();
        let origin = scenario.read_origin();
        let (a, b) = (pulse.support.0, pulse.support.1);
        let n = scenario.numerics.table_points;
        let step = (b - a) / (n - 1) as f64;
        let norm = 1.0 / (e.d_r_bar * e.gamma_eg);
        let rule = Rule::new(8);
        let mut values = Vec::with_capacity(n);
        let mut slopes = Vec::with_capacity(n);
        let mut acc = 0.0;
        for i in 0..n {
            let t = a + step * i as f64;
            if i > 0 {
                acc += rule
                    .apply(t - step, t, |s| C64::new(pulse.rabi_sq(s) * norm, 0.0))
                    .re;
            }
            values.push(C64::new(acc, 0.0));
            slopes.push(C64::new(pulse.rabi_sq(t) * norm, 0.0));
        }
        if values.windows(2).any(|w| w[1].re < w[0].re) {
            return Err(Error::invariant("read tables", "Δτ is not nondecreasing"));
        }
        Ok(ReadKernelContext {
            pulse,
            origin,
            d_r_bar: e.d_r_bar,
            gamma_eg: e.gamma_eg,
            length: e.length,
            c: e.c,
            sweep: HermiteTable::new(origin + a, step, values, slopes),
        })
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn d_r_bar(&self) -> f64 {
        self.d_r_bar
    }

    /// `Ω̄_R` at absolute time `t`.
    pub fn rabi(&self, t: f64) -> f64 {
        self.pulse.rabi(t - self.origin)
    }

    /// `Ω̄_R²/(d̄_r γ_eg)` at absolute time `t`, the rate of `μ`.
    pub fn sweep_rate(&self, t: f64) -> f64 {
        self.pulse.rabi_sq(t - self.origin) / (self.d_r_bar * self.gamma_eg)
    }

    /// `μ(t) = cΔτ(t, ξ)/L`.
    pub fn sweep(&self, t: f64) -> f64 {
        self.sweep.eval(t).re
    }

    pub fn total_sweep(&self) -> f64 {
        self.sweep.values()[self.sweep.len() - 1].re
    }

    /// Width of the retrieval kernel in medium lengths, `Δl/L = √(2μ/d̄_r)`.
    pub fn width_for(&self, mu: f64) -> f64 {
        (2.0 * mu.max(0.0) / self.d_r_bar).sqrt()
    }

    /// `Δτ(t, t')` in seconds.
    pub fn delta_tau(&self, t: f64, t_prime: f64) -> f64 {
        (self.sweep(t) - self.sweep(t_prime)) * self.length / self.c
    }

    /// `Δl(t, t') = √(2Lc·Δτ/d̄_r)`, in metres.
    pub fn delta_l(&self, t: f64, t_prime: f64) -> f64 {
        (2.0 * self.length * self.c * self.delta_tau(t, t_prime).max(0.0) / self.d_r_bar).sqrt()
    }

    /// `g²N = d̄_r γ_eg c / L`.
    pub fn g2n(&self) -> f64 {
        self.d_r_bar * self.gamma_eg * self.c / self.length
    }
}
