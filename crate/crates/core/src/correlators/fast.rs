//! Factorized evaluation of the conditional read flux.
//!
//! After Isserlis reduction the heralded numerator splits into a
//! write-emission/spin cross term and a spin-spin vacuum term:
//!
//! ```text
//! ⟨E_w† S†(u1) S(u2) E_w⟩ = ψ(u1) ψ*(u2) + ⟨E_w† E_w⟩ ρ(u1, u2)
//! ```
//!
//! with `ψ(t_i, u) = ⟨E_w†(L, t_i) S†(u, ξ)⟩`. Both pieces are tabulated
//! once on Chebyshev-Lobatto nodes along the medium and integrated over the
//! write emission time, leaving a Hermitian matrix `m(u1, u2)`: the
//! conditional spin coherence. The read stage then only needs the
//! projections `k_j(t)` of the Gaussian retrieval kernel on the node basis.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::interp::ChebyshevBasis;
use crate::kernels::{h_decayed, ratio_decayed, ReadKernelContext, WriteKernelContext};
use crate::model::{DecayClock, Scenario};
use crate::quadrature::{gl16, gl64, integrate_real, Domain, Rule};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Contributions to `ψ`, by spin-wave term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SpinTerm {
    /// Decayed initial spin.
    InitialDecay,
    /// Local write noise.
    LocalNoise,
    /// Initial spin propagated by `G_s`.
    InitialPropagated,
    /// Write noise propagated by `G_s`.
    NoisePropagated,
}

impl SpinTerm {
    pub const ALL: [SpinTerm; 4] = [
        SpinTerm::InitialDecay,
        SpinTerm::LocalNoise,
        SpinTerm::InitialPropagated,
        SpinTerm::NoisePropagated,
    ];

    pub fn is_noise(self) -> bool {
        matches!(self, SpinTerm::LocalNoise | SpinTerm::NoisePropagated)
    }
}

/// Gauss-Legendre nodes over the write support plus the undriven lead-in.
struct TimeNodes {
    edges: Vec<f64>,
}

impl TimeNodes {
    fn new(support: (f64, f64), panels: usize) -> Self {
        let (a, b) = support;
        let mut edges = Vec::with_capacity(panels + 2);
        if a > 0.0 {
            edges.push(0.0);
        }
        let h = (b - a) / panels as f64;
        for k in 0..=panels {
            edges.push(a + h * k as f64);
        }
        TimeNodes { edges }
    }

    /// Nodes and weights on `[0, t]`.
    fn up_to(&self, t: f64) -> Vec<(f64, f64)> {
        let rule = gl16();
        let mut out = Vec::new();
        for w in self.edges.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a >= t {
                break;
            }
            out.extend(rule.mapped(a, b.min(t)));
        }
        out
    }

    /// Nodes and weights over the driven support only.
    fn driven(&self, support: (f64, f64)) -> Vec<(f64, f64)> {
        let rule = gl16();
        let mut out = Vec::new();
        for w in self.edges.windows(2) {
            if w[0] >= support.0 {
                out.extend(rule.mapped(w[0], w[1]));
            }
        }
        out
    }
}

/// Write-time-resolved quantities at one emission time.
struct Emission {
    /// `ψ_a(t_i, x_j)` per spin term, scaled by `c/L`.
    psi: [Vec<C64>; 4],
    /// `⟨E_w†E_w⟩(t_i)` from the initial spin and from the noise, scaled by `(c/L)²`.
    flux_spin: f64,
    flux_noise: f64,
}

/// Write-stage output: the conditional spin coherence on the node basis.
#[derive(Debug, Clone)]
pub struct WriteStage {
    basis: ChebyshevBasis,
    /// `∫dt_i ψψ† / ∫dt_i⟨E_w†E_w⟩`, row-major.
    heralded: Vec<C64>,
    /// Same, split by spin-term pair `(a, b)`.
    heralded_terms: Vec<((SpinTerm, SpinTerm), Vec<C64>)>,
    /// Vacuum-driven spin coherence `⟨D(u1) D†(u2)⟩`.
    vacuum: Vec<f64>,
    /// `m = heralded + vacuum`.
    coherence: Vec<C64>,
    /// Probability of a write emission, `(c/L)∫⟨E_w†E_w⟩ dt_i`.
    write_probability: f64,
    /// Share of the write emission seeded by the noise input.
    noise_fraction: f64,
    transit: f64,
}

/// Evaluator for `ψ` and the write flux at arbitrary emission times.
pub struct WriteEvaluator<'a> {
    ctx: &'a WriteKernelContext,
    nodes: TimeNodes,
    basis: &'a ChebyshevBasis,
    spatial: Rule,
    gamma_xi: C64,
    gain_xi: f64,
}

impl<'a> WriteEvaluator<'a> {
    pub fn new(
        ctx: &'a WriteKernelContext,
        basis: &'a ChebyshevBasis,
        panels: usize,
        spatial_order: usize,
    ) -> Self {
        let xi = ctx.xi();
        WriteEvaluator {
            ctx,
            nodes: TimeNodes::new(ctx.pulse().support, panels),
            basis,
            spatial: Rule::new(spatial_order),
            gamma_xi: ctx.cumulative_gamma(xi),
            gain_xi: ctx.gain(xi),
        }
    }

    fn emission(&self, t: f64) -> Result<Emission> {
        let ctx = self.ctx;
        let n = self.basis.len();
        let xs = self.basis.nodes();
        let chi = ctx.chi(t);
        let gain_t = ctx.gain(t);
        let gamma_t = ctx.cumulative_gamma(t);
        let coupling = (I * chi).conj();
        let decay_xi = (-self.gamma_xi).exp();
        let mut psi = [
            vec![C64::default(); n],
            vec![C64::default(); n],
            vec![C64::default(); n],
            vec![C64::default(); n],
        ];
        if chi == 0.0 {
            return Ok(Emission {
                psi,
                flux_spin: 0.0,
                flux_noise: 0.0,
            });
        }

        // Initial spin: direct decay and G_s propagation.
        for (j, &x) in xs.iter().enumerate() {
            psi[0][j] = coupling * h_decayed(gain_t, 1.0 - x, gamma_t)?.conj() * decay_xi;
            if x > 0.0 {
                let mut acc = C64::default();
                for (y, w) in self.spatial.mapped(0.0, x) {
                    let a = h_decayed(gain_t, 1.0 - y, gamma_t)?.conj();
                    acc += a * ratio_decayed(self.gain_xi, x - y, self.gamma_xi)? * w;
                }
                psi[2][j] = coupling * self.gain_xi * acc;
            }
        }
        let mut flux_spin = 0.0;
        for (y, w) in self.spatial.mapped(0.0, 1.0) {
            flux_spin += h_decayed(gain_t, 1.0 - y, gamma_t)?.norm_sqr() * w;
        }
        flux_spin *= chi * chi;

        // Write noise injected at t'' < t.
        let mut flux_noise = 0.0;
        for (s, ws) in self.nodes.up_to(t) {
            let rate = ctx.gamma_s_re(s);
            if rate == 0.0 {
                continue;
            }
            let gain_s = ctx.gain(s);
            let gamma_s = ctx.cumulative_gamma(s);
            let (dgain, dgamma) = (gain_t - gain_s, gamma_t - gamma_s);
            let (dgain_xi, dgamma_xi) = (self.gain_xi - gain_s, self.gamma_xi - gamma_s);
            let weight = 2.0 * rate * ws;
            let decay_to_xi = (-dgamma_xi).exp();
            for (j, &x) in xs.iter().enumerate() {
                let a = h_decayed(dgain, 1.0 - x, dgamma)?.conj();
                psi[1][j] += coupling * a * decay_to_xi * weight;
                if x > 0.0 && dgain_xi > 0.0 {
                    let mut acc = C64::default();
                    for (y, w) in self.spatial.mapped(0.0, x) {
                        let a = h_decayed(dgain, 1.0 - y, dgamma)?.conj();
                        acc += a * ratio_decayed(dgain_xi, x - y, dgamma_xi)? * w;
                    }
                    psi[3][j] += coupling * dgain_xi * acc * weight;
                }
            }
            let mut sq = 0.0;
            for (y, w) in self.spatial.mapped(0.0, 1.0) {
                sq += h_decayed(dgain, 1.0 - y, dgamma)?.norm_sqr() * w;
            }
            flux_noise += weight * chi * chi * sq;
        }
        Ok(Emission {
            psi,
            flux_spin,
            flux_noise,
        })
    }

    /// `ψ(t, x_j) = ⟨E_w†(L,t) S†(x_j L, ξ)⟩`, summed over spin terms.
    pub fn psi(&self, t: f64) -> Result<Vec<C64>> {
        let e = self.emission(t)?;
        let ratio = self.ctx.transit();
        Ok((0..self.basis.len())
            .map(|j| (e.psi[0][j] + e.psi[1][j] + e.psi[2][j] + e.psi[3][j]) * ratio)
            .collect())
    }

    /// `⟨E_w†E_w⟩(L, t)`.
    pub fn write_moment(&self, t: f64) -> Result<f64> {
        let e = self.emission(t)?;
        let ratio = self.ctx.transit();
        Ok((e.flux_spin + e.flux_noise) * ratio * ratio)
    }

    /// `⟨D(x1 L) D†(x2 L)⟩` at time `t` for every node pair.
    fn vacuum_coherence(&self, t: f64) -> Result<Vec<f64>> {
        let ctx = self.ctx;
        let n = self.basis.len();
        let xs = self.basis.nodes();
        let gain_t = ctx.gain(t);
        let gamma_t = ctx.cumulative_gamma(t);
        let mut rho = vec![0.0; n * n];
        let mut col = vec![0.0; n];
        for (s, ws) in self.nodes.up_to(t) {
            let chi = ctx.chi(s);
            if chi == 0.0 {
                continue;
            }
            let dgain = gain_t - ctx.gain(s);
            let dgamma = C64::new((gamma_t - ctx.cumulative_gamma(s)).re, 0.0);
            let w = ws * ctx.transit() * chi * chi;
            for (j, &x) in xs.iter().enumerate() {
                col[j] = h_decayed(dgain, x, dgamma)?.re;
            }
            for j in 0..n {
                for l in 0..n {
                    rho[j * n + l] += w * col[j] * col[l];
                }
            }
        }
        Ok(rho)
    }

    /// Spin excitation number `∫⟨S†S⟩ dz / L` at time `t`.
    pub fn spin_population(&self, t: f64) -> Result<f64> {
        let rho = self.vacuum_coherence(t)?;
        let n = self.basis.len();
        let diag: Vec<f64> = (0..n).map(|j| rho[j * n + j]).collect();
        let spec = crate::quadrature::QuadratureSpec::default().with_tol(1e-12);
        Ok(integrate_real(
            |x| self.basis.interpolate(&diag, x),
            &Domain::new(0.0, 1.0),
            &spec,
        )
        .value
        .re)
    }
}

impl WriteStage {
    pub fn build(ctx: &WriteKernelContext, scenario: &Scenario) -> Result<Self> {
        let num = &scenario.numerics;
        let basis = ChebyshevBasis::new(num.spatial_nodes);
        let eval = WriteEvaluator::new(ctx, &basis, num.write_panels, num.spatial_order);
        let nodes = eval.nodes.driven(ctx.pulse().support);
        let emissions: Vec<Emission> = nodes
            .par_iter()
            .map(|&(t, _)| eval.emission(t))
            .collect::<Result<_>>()?;
        let n = basis.len();
        let transit = ctx.transit();
        let (mut flux_spin, mut flux_noise) = (0.0, 0.0);
        for (e, &(_, w)) in emissions.iter().zip(&nodes) {
            flux_spin += e.flux_spin * w;
            flux_noise += e.flux_noise * w;
        }
        let flux = flux_spin + flux_noise;
        // (c/L)∫⟨E†E⟩ with ⟨E†E⟩ = (L/c)² × scaled moment.
        let write_probability = flux * transit;
        if !(write_probability > 1e-30) {
            return Err(Error::NoWriteEmission(write_probability));
        }
        let mut heralded_terms = Vec::new();
        let mut heralded = vec![C64::default(); n * n];
        for (ia, &a) in SpinTerm::ALL.iter().enumerate() {
            for (ib, &b) in SpinTerm::ALL.iter().enumerate() {
                let mut block = vec![C64::default(); n * n];
                for (e, &(_, w)) in emissions.iter().zip(&nodes) {
                    for j in 0..n {
                        let pj = e.psi[ia][j] * (w / flux);
                        for l in 0..n {
                            block[j * n + l] += pj * e.psi[ib][l].conj();
                        }
                    }
                }
                for (h, v) in heralded.iter_mut().zip(&block) {
                    *h += v;
                }
                heralded_terms.push(((a, b), block));
            }
        }
        let vacuum = eval.vacuum_coherence(ctx.xi())?;
        let coherence = heralded.iter().zip(&vacuum).map(|(h, v)| h + v).collect();
        Ok(WriteStage {
            basis,
            heralded,
            heralded_terms,
            vacuum,
            coherence,
            write_probability,
            noise_fraction: flux_noise / flux,
            transit,
        })
    }

    pub fn basis(&self) -> &ChebyshevBasis {
        &self.basis
    }

    pub fn write_probability(&self) -> f64 {
        self.write_probability
    }

    pub fn noise_fraction(&self) -> f64 {
        self.noise_fraction
    }

    /// `m(x_j, x_l)`, row-major.
    pub fn coherence(&self) -> &[C64] {
        &self.coherence
    }

    pub fn heralded(&self) -> &[C64] {
        &self.heralded
    }

    pub fn vacuum(&self) -> &[f64] {
        &self.vacuum
    }

    pub fn heralded_terms(&self) -> &[((SpinTerm, SpinTerm), Vec<C64>)] {
        &self.heralded_terms
    }

    /// `L/c`.
    pub fn transit(&self) -> f64 {
        self.transit
    }

    /// `Re(kᵀ m k)`.
    pub fn quadratic_form(&self, k: &[f64]) -> f64 {
        quadratic(&self.coherence, k)
    }

    /// Conditional spin excitation number `∫ m(x, x) dx`.
    pub fn conditional_population(&self) -> f64 {
        let n = self.basis.len();
        let diag: Vec<f64> = (0..n).map(|j| self.coherence[j * n + j].re).collect();
        let spec = crate::quadrature::QuadratureSpec::default().with_tol(1e-12);
        integrate_real(
            |x| self.basis.interpolate(&diag, x),
            &Domain::new(0.0, 1.0),
            &spec,
        )
        .value
        .re
    }
}

pub(crate) fn quadratic(m: &[C64], k: &[f64]) -> f64 {
    let n = k.len();
    let mut acc = 0.0;
    for j in 0..n {
        if k[j] == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for l in 0..n {
            row += m[j * n + l].re * k[l];
        }
        acc += k[j] * row;
    }
    acc
}

/// Read stage: retrieval kernel projections and the conditional flux.
pub struct ReadStage<'a> {
    write: &'a WriteStage,
    ctx: ReadKernelContext,
    clock: DecayClock,
}

/// Half-width of the truncated retrieval kernel, in standard deviations.
const KERNEL_SPAN: f64 = 10.0;

impl<'a> ReadStage<'a> {
    pub fn new(write: &'a WriteStage, scenario: &Scenario) -> Result<Self> {
        Ok(ReadStage {
            write,
            ctx: ReadKernelContext::build(scenario)?,
            clock: scenario.decay_clock(),
        })
    }

    pub fn context(&self) -> &ReadKernelContext {
        &self.ctx
    }

    /// `k_j(μ) = ∫₀¹ N(x; μ, σ(μ)) ℓ_j(x) dx`.
    pub fn kernel_projection(&self, mu: f64, out: &mut [f64]) {
        let basis = self.write.basis();
        let sigma = self.ctx.width_for(mu);
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut l = vec![0.0; basis.len()];
        if sigma == 0.0 {
            // Kernel collapsed onto the exit face: half its mass is inside.
            basis.cardinals(mu.clamp(0.0, 1.0), &mut l);
            let w = if mu <= 0.0 || mu >= 1.0 { 0.5 } else { 1.0 };
            if (0.0..=1.0).contains(&mu) {
                out.iter_mut().zip(&l).for_each(|(o, v)| *o = w * v);
            }
            return;
        }
        let lo = (mu - KERNEL_SPAN * sigma).max(0.0);
        let hi = (mu + KERNEL_SPAN * sigma).min(1.0);
        if hi <= lo {
            return;
        }
        let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
        for (x, w) in gl64().mapped(lo, hi) {
            let g = norm * (-0.5 * ((x - mu) / sigma).powi(2)).exp() * w;
            basis.cardinals(x, &mut l);
            out.iter_mut().zip(&l).for_each(|(o, v)| *o += g * v);
        }
    }

    /// Unscaled conditional read flux at absolute time `t`, in s⁻¹.
    pub fn flux(&self, t: f64) -> f64 {
        let rate = self.ctx.sweep_rate(t);
        if rate == 0.0 {
            return 0.0;
        }
        let mut k = vec![0.0; self.write.basis().len()];
        self.kernel_projection(self.ctx.sweep(t), &mut k);
        let d = self.clock.amplitude(t);
        rate * d * d * self.write.quadratic_form(&k)
    }

    /// Heralded numerator `⟨E_w†(L,t_i) E_r†(0,t) E_r(0,t) E_w(L,t_i)⟩`
    /// given `ψ(t_i, ·)` and `⟨E_w†E_w⟩(t_i)` from a [`WriteEvaluator`].
    pub fn numerator(&self, t: f64, psi: &[C64], write_moment: f64, scenario: &Scenario) -> f64 {
        let e = &scenario.ensemble;
        let rabi = self.ctx.rabi(t);
        let d = self.clock.amplitude(t);
        let prefactor = rabi * rabi * d * d / e.read_coupling();
        let mut k = vec![0.0; psi.len()];
        self.kernel_projection(self.ctx.sweep(t), &mut k);
        let cross: C64 = k.iter().zip(psi).map(|(a, b)| b * a).sum();
        let n = psi.len();
        let vac: Vec<C64> = self
            .write
            .vacuum()
            .iter()
            .map(|&v| C64::new(v, 0.0))
            .collect();
        debug_assert_eq!(vac.len(), n * n);
        prefactor * (cross.norm_sqr() + write_moment * quadratic(&vac, &k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EnsembleParams, PulseEnvelope, TWO_PI};
    use approx::assert_relative_eq;

    fn scenario(write_peak: f64, d_w: f64, delta: f64) -> Scenario {
        let e = EnsembleParams::from_unbarred(d_w, 5.0, delta).unwrap();
        let w = PulseEnvelope::gaussian(write_peak, 15e-9).unwrap();
        let r = PulseEnvelope::gaussian(TWO_PI * 11.75e6, 35e-9).unwrap();
        Scenario::new(e, w, r).unwrap()
    }

    #[test]
    fn excitation_number_bookkeeping() {
        // Emitted write photons = spin excitations left at ξ plus those lost
        // to γ_S along the way.
        let s = scenario(TWO_PI * 12.55e6, 7.5, -TWO_PI * 40e6);
        let ctx = WriteKernelContext::build(&s).unwrap();
        let stage = WriteStage::build(&ctx, &s).unwrap();
        let basis = stage.basis().clone();
        let eval = WriteEvaluator::new(&ctx, &basis, 8, 24);
        let spec = crate::quadrature::QuadratureSpec::default().with_tol(1e-9);
        let support = ctx.pulse().support;
        let lost = integrate_real(
            |t| 2.0 * ctx.gamma_s_re(t) * eval.spin_population(t).unwrap(),
            &Domain::new(support.0, ctx.xi()).with_breaks(&[support.1]),
            &spec,
        )
        .value
        .re;
        let left = eval.spin_population(ctx.xi()).unwrap();
        assert_relative_eq!(left + lost, stage.write_probability(), max_relative = 1e-3);
    }

    #[test]
    fn small_gain_write_probability() {
        // Leading order: (c/L)∫⟨E†E⟩ = d̄_w γ_es ∫Ω̄_W²/Δ² dt.
        let peak = TWO_PI * 0.5e6;
        let delta = -TWO_PI * 40e6;
        let s = scenario(peak, 7.5, delta);
        let ctx = WriteKernelContext::build(&s).unwrap();
        let stage = WriteStage::build(&ctx, &s).unwrap();
        let e = &s.ensemble;
        let want = e.d_w_bar * e.gamma_es * s.write_pulse.energy() / (delta * delta);
        assert_relative_eq!(stage.write_probability(), want, max_relative = 1e-3);
        let doubled = scenario(peak, 7.5, 2.0 * delta);
        let ctx2 = WriteKernelContext::build(&doubled).unwrap();
        let stage2 = WriteStage::build(&ctx2, &doubled).unwrap();
        assert_relative_eq!(
            stage2.write_probability() / stage.write_probability(),
            0.25,
            max_relative = 1e-3
        );
    }

    #[test]
    fn coherence_is_hermitian_with_nonnegative_diagonal() {
        let s = scenario(TWO_PI * 12.55e6, 7.5, -TWO_PI * 40e6);
        let ctx = WriteKernelContext::build(&s).unwrap();
        let stage = WriteStage::build(&ctx, &s).unwrap();
        let n = stage.basis().len();
        let m = stage.coherence();
        for j in 0..n {
            assert!(m[j * n + j].re >= 0.0);
            assert!(m[j * n + j].im.abs() <= 1e-12 * m[j * n + j].re);
            for l in 0..n {
                let d = m[j * n + l] - m[l * n + j].conj();
                assert!(d.norm() <= 1e-12 * m[j * n + j].re.max(m[l * n + l].re));
            }
        }
    }

    #[test]
    fn kernel_projection_mass() {
        let s = scenario(TWO_PI * 12.55e6, 7.5, -TWO_PI * 40e6);
        let ctx = WriteKernelContext::build(&s).unwrap();
        let stage = WriteStage::build(&ctx, &s).unwrap();
        let read = ReadStage::new(&stage, &s).unwrap();
        let mut k = vec![0.0; stage.basis().len()];
        // Σ k_j = ∫₀¹ N dx since the cardinals sum to one.
        read.kernel_projection(0.0, &mut k);
        assert_relative_eq!(k.iter().sum::<f64>(), 0.5, max_relative = 1e-12);
        read.kernel_projection(0.5, &mut k);
        let sigma = read.context().width_for(0.5);
        let inside = inside_mass(0.5, sigma);
        assert_relative_eq!(k.iter().sum::<f64>(), inside, max_relative = 1e-10);
        read.kernel_projection(50.0, &mut k);
        let sigma = read.context().width_for(50.0);
        assert_relative_eq!(
            k.iter().sum::<f64>(),
            inside_mass(50.0, sigma),
            max_relative = 1e-8
        );
    }

    /// Φ((1-μ)/σ) - Φ(-μ/σ) by direct quadrature of the density.
    fn inside_mass(mu: f64, sigma: f64) -> f64 {
        let spec = crate::quadrature::QuadratureSpec::default().with_tol(1e-13);
        let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
        integrate_real(
            |x| norm * (-0.5 * ((x - mu) / sigma).powi(2)).exp(),
            &Domain::new(0.0, 1.0),
            &spec,
        )
        .value
        .re
    }
}
