//! Adiabatic-regime checks. Warnings only; nothing here blocks a run.

use serde::{Deserialize, Serialize};

use crate::model::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeThresholds {
    /// Bound on `γ_es τ_W d̄_w`.
    pub eps1: f64,
    /// Required ratio `|Δ| / max(Ω̄_W, γ_es)`.
    pub kappa: f64,
    /// A violation by more than this factor is reported as hard.
    pub hard_factor: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        RegimeThresholds {
            eps1: 0.5,
            kappa: 3.0,
            hard_factor: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// `γ_es τ_W d̄_w ≪ 1`: the write field leaves the medium unattenuated.
    WeakWriteLoss,
    /// `|Δ| ≫ Ω̄_W, γ_es`: the excited state can be eliminated.
    FarDetuned,
    /// `d̄_r ≫ 1`.
    OpticallyThickRead,
    /// `τ_r γ_eg d̄_r ≫ 1`: the read pulse is long enough to be adiabatic.
    LongReadPulse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    /// Violated, but within `hard_factor` of the threshold.
    Soft,
    Hard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeWarning {
    pub condition: Condition,
    pub value: f64,
    pub threshold: f64,
    pub severity: Severity,
    pub message: String,
}

fn below(
    condition: Condition,
    value: f64,
    limit: f64,
    hard: f64,
    what: &str,
) -> Option<RegimeWarning> {
    (value >= limit).then(|| RegimeWarning {
        condition,
        value,
        threshold: limit,
        severity: if value >= hard * limit {
            Severity::Hard
        } else {
            Severity::Soft
        },
        message: format!("{what} = {value:.3} should be below {limit}"),
    })
}

fn above(
    condition: Condition,
    value: f64,
    limit: f64,
    hard: f64,
    what: &str,
) -> Option<RegimeWarning> {
    (value <= limit).then(|| RegimeWarning {
        condition,
        value,
        threshold: limit,
        severity: if value <= limit / hard {
            Severity::Hard
        } else {
            Severity::Soft
        },
        message: format!("{what} = {value:.3} should exceed {limit}"),
    })
}

/// One warning per violated adiabatic condition. Durations are the
/// nominal pulse durations (intensity FWHM for Gaussians).
pub fn validate_regime(s: &Scenario, t: &RegimeThresholds) -> Vec<RegimeWarning> {
    let e = &s.ensemble;
    let h = t.hard_factor;
    let mut out = Vec::new();
    let omega_w = s.write_pulse.peak_rabi_bar;
    if omega_w > 0.0 {
        let loss = e.gamma_es * s.write_pulse.duration() * e.d_w_bar;
        out.extend(below(
            Condition::WeakWriteLoss,
            loss,
            t.eps1,
            h,
            "γ_es τ_W d̄_w",
        ));
        let ratio = e.delta.abs() / omega_w.max(e.gamma_es);
        out.extend(above(
            Condition::FarDetuned,
            ratio,
            t.kappa,
            h,
            "|Δ| / max(Ω̄_W, γ_es)",
        ));
    }
    out.extend(above(
        Condition::OpticallyThickRead,
        e.d_r_bar,
        1.0,
        h,
        "d̄_r",
    ));
    let area = s.read_pulse.duration() * e.gamma_eg * e.d_r_bar;
    out.extend(above(
        Condition::LongReadPulse,
        area,
        1.0,
        h,
        "τ_r γ_eg d̄_r",
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EnsembleParams, PulseEnvelope, TWO_PI};

    fn scenario(omega_w: f64, read_fwhm: f64, d_r_bar: f64) -> Scenario {
        let e = EnsembleParams::from_barred(3.75, d_r_bar, -TWO_PI * 40e6).unwrap();
        let w = PulseEnvelope::gaussian(omega_w, 15e-9).unwrap();
        let r = PulseEnvelope::gaussian(TWO_PI * 11.75e6, read_fwhm).unwrap();
        Scenario::new(e, w, r).unwrap()
    }

    #[test]
    fn zero_write_drive_skips_write_checks() {
        let w = validate_regime(&scenario(0.0, 35e-9, 2.5), &RegimeThresholds::default());
        assert!(w.iter().all(|x| !matches!(
            x.condition,
            Condition::WeakWriteLoss | Condition::FarDetuned
        )));
    }

    #[test]
    fn severity_grades() {
        let t = RegimeThresholds::default();
        assert_eq!(
            below(Condition::WeakWriteLoss, 1.9, 0.5, 4.0, "x")
                .unwrap()
                .severity,
            Severity::Soft
        );
        assert_eq!(
            below(Condition::WeakWriteLoss, 2.1, 0.5, 4.0, "x")
                .unwrap()
                .severity,
            Severity::Hard
        );
        assert!(below(Condition::WeakWriteLoss, 0.4, t.eps1, 4.0, "x").is_none());
        assert_eq!(
            above(Condition::LongReadPulse, 0.3, 1.0, 4.0, "x")
                .unwrap()
                .severity,
            Severity::Soft
        );
        assert_eq!(
            above(Condition::LongReadPulse, 0.2, 1.0, 4.0, "x")
                .unwrap()
                .severity,
            Severity::Hard
        );
    }
}
