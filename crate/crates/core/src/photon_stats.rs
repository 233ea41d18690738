//! Click statistics of the write/read photon pair behind imperfect bucket
//! detectors.
//!
//! The pair is a product of `K` identical two-mode squeezed vacua truncated
//! at `n_max` photons per mode. The read arm is split onto two detectors
//! (`r1`, `r2`). Detectors do not resolve photon number, so only the total
//! pair number matters; the click table is a sum over it of binomial loss
//! terms. Every term is nonnegative, which keeps rare coincidences
//! accurate at tiny excitation and detection probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tail mass above the truncation that is accepted silently.
pub const TRUNCATION_TAIL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detector {
    pub efficiency: f64,
    /// Probability of a dark click per gate.
    pub dark: f64,
}

impl Detector {
    pub const IDEAL: Detector = Detector {
        efficiency: 1.0,
        dark: 0.0,
    };

    pub fn new(efficiency: f64, dark: f64) -> Self {
        Detector { efficiency, dark }
    }

    /// Dark-click probability for a Poissonian dark rate over one gate.
    pub fn dark_probability(rate: f64, gate: f64) -> f64 {
        -(-rate * gate).exp_m1()
    }

    fn validate(&self, field: &str) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::invariant(field, "efficiency must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.dark) {
            return Err(Error::invariant(
                field,
                "dark probability must lie in [0, 1)",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TmsvDetectorModel {
    /// Pair excitation probability of the equivalent single-mode state.
    pub p: f64,
    pub modes: u32,
    pub n_max: u32,
    pub write: Detector,
    pub read1: Detector,
    pub read2: Detector,
    /// Fraction of the read light sent to `r1`.
    pub split: f64,
}

impl TmsvDetectorModel {
    pub fn new(p: f64, modes: u32) -> Result<Self> {
        let mut m = TmsvDetectorModel {
            p,
            modes,
            n_max: 0,
            write: Detector::IDEAL,
            read1: Detector::IDEAL,
            read2: Detector::IDEAL,
            split: 0.5,
        };
        m.n_max = m.suggested_n_max();
        m.validate()?;
        Ok(m)
    }

    pub fn with_detectors(
        mut self,
        write: Detector,
        read1: Detector,
        read2: Detector,
    ) -> Result<Self> {
        self.write = write;
        self.read1 = read1;
        self.read2 = read2;
        self.validate()?;
        Ok(self)
    }

    pub fn with_n_max(mut self, n_max: u32) -> Result<Self> {
        self.n_max = n_max;
        self.validate()?;
        Ok(self)
    }

    pub fn with_split(mut self, split: f64) -> Result<Self> {
        self.split = split;
        self.validate()?;
        Ok(self)
    }

    /// Per-mode excitation probability `q` with `K q/(1-q) = p/(1-p)`.
    pub fn mode_probability(&self) -> f64 {
        let k = self.modes as f64;
        self.p / (k * (1.0 - self.p) + self.p)
    }

    /// Truncation whose per-mode tail is below the threshold, with two
    /// extra levels so that coincidence ratios are stable as well.
    pub fn suggested_n_max(&self) -> u32 {
        let q = self.mode_probability();
        if q <= 0.0 {
            return 3;
        }
        let n = (TRUNCATION_TAIL.ln() / q.ln()).floor() as i64 + 2;
        n.max(3) as u32
    }

    /// `Σ_{n > n_max} (1-q) qⁿ` for one mode.
    pub fn tail_mass(&self) -> f64 {
        self.mode_probability().powi(self.n_max as i32 + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.p) {
            return Err(Error::invariant("p", "must lie in [0, 1)"));
        }
        if self.modes < 1 {
            return Err(Error::invariant("modes", "need at least one mode"));
        }
        if !(0.0..=1.0).contains(&self.split) {
            return Err(Error::invariant("split", "must lie in [0, 1]"));
        }
        self.write.validate("write detector")?;
        self.read1.validate("read1 detector")?;
        self.read2.validate("read2 detector")?;
        let tail = self.tail_mass();
        if tail >= TRUNCATION_TAIL {
            return Err(Error::Truncation {
                tail,
                suggested: self.suggested_n_max() as usize,
            });
        }
        Ok(())
    }

    /// Probability per photon of landing on each detector.
    fn detection(&self) -> [f64; 3] {
        [
            self.write.efficiency,
            self.split * self.read1.efficiency,
            (1.0 - self.split) * self.read2.efficiency,
        ]
    }

    /// Distribution of the total pair number over the `K` modes, each mode
    /// truncated at `n_max` and renormalized.
    pub fn pair_number_distribution(&self) -> Vec<f64> {
        let q = self.mode_probability();
        let mut single: Vec<f64> = (0..=self.n_max).map(|n| q.powi(n as i32)).collect();
        let norm: f64 = single.iter().sum();
        single.iter_mut().for_each(|v| *v /= norm);
        let mut out = vec![1.0];
        let mut base = single;
        let mut k = self.modes;
        while k > 0 {
            if k & 1 == 1 {
                out = convolve(&out, &base);
            }
            k >>= 1;
            if k > 0 {
                base = convolve(&base, &base);
            }
        }
        out
    }

    /// Exact click table: every photon is independently lost or detected,
    /// and a bucket detector clicks unless no photon survives and no dark
    /// count occurs. All terms are sums of nonnegative products.
    pub fn click_probabilities(&self) -> Result<CountProbabilities> {
        self.validate()?;
        let [ew, e1, e2] = self.detection();
        let (dw, d1, d2) = (self.write.dark, self.read1.dark, self.read2.dark);
        // Conditional loss of the second read arm given a photon missed r1,
        // and vice versa.
        let e2_given = if e2 == 0.0 {
            0.0
        } else {
            (e2 / (1.0 - e1)).min(1.0)
        };
        let e1_given = if e1 == 0.0 {
            0.0
        } else {
            (e1 / (1.0 - e2)).min(1.0)
        };
        let mut table = [0.0; 8];
        for (n, pn) in self.pair_number_distribution().into_iter().enumerate() {
            if pn == 0.0 {
                continue;
            }
            let w_click = click(dw, ew, n);
            let w_dark = 1.0 - w_click;
            let none = (1.0 - d1) * (1.0 - d2) * (1.0 - e1 - e2).max(0.0).powi(n as i32);
            let only1 = (1.0 - d2) * (1.0 - e2).powi(n as i32) * click(d1, e1_given, n);
            let only2 = (1.0 - d1) * (1.0 - e1).powi(n as i32) * click(d2, e2_given, n);
            let both: f64 = (0..=n)
                .map(|n1| {
                    let c1 = if n1 > 0 { 1.0 } else { d1 };
                    binomial(n, n1, e1) * c1 * click(d2, e2_given, n - n1)
                })
                .sum();
            let reads = [none, only1, only2, both];
            for (r, pr) in reads.iter().enumerate() {
                table[r << 1] += pn * w_dark * pr;
                table[(r << 1) | 1] += pn * w_click * pr;
            }
        }
        Ok(CountProbabilities { table })
    }
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// `1 - (1-dark)(1-e)ⁿ` without cancellation.
fn click(dark: f64, e: f64, n: usize) -> f64 {
    if n == 0 {
        return dark;
    }
    if e >= 1.0 {
        return 1.0;
    }
    -((-dark).ln_1p() + n as f64 * (-e).ln_1p()).exp_m1()
}

/// `C(n, k) eᵏ (1-e)ⁿ⁻ᵏ`.
fn binomial(n: usize, k: usize, e: f64) -> f64 {
    if e == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if e >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let ln_choose = libm::lgamma(n as f64 + 1.0)
        - libm::lgamma(k as f64 + 1.0)
        - libm::lgamma((n - k) as f64 + 1.0);
    (ln_choose + k as f64 * e.ln() + (n - k) as f64 * (-e).ln_1p()).exp()
}

/// Joint click probabilities over `(w, r1, r2)`, indexed by the bitmask of
/// clicking detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountProbabilities {
    pub table: [f64; 8],
}

pub const WRITE: u8 = 1;
pub const READ1: u8 = 2;
pub const READ2: u8 = 4;

impl CountProbabilities {
    /// Probability that at least the detectors in `mask` click.
    pub fn marginal(&self, mask: u8) -> f64 {
        self.table
            .iter()
            .enumerate()
            .filter(|(s, _)| (*s as u8) & mask == mask)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn total(&self) -> f64 {
        self.table.iter().sum()
    }
}

/// `p(r1,r2|w) / (p(r1|w) p(r2|w))`.
pub fn g2_conditional(model: &TmsvDetectorModel) -> Result<f64> {
    let c = model.click_probabilities()?;
    let w = c.marginal(WRITE);
    if w <= 0.0 {
        return Err(Error::DegenerateDenominator("write click probability"));
    }
    let w1 = c.marginal(WRITE | READ1);
    let w2 = c.marginal(WRITE | READ2);
    if w1 <= 0.0 || w2 <= 0.0 {
        return Err(Error::DegenerateDenominator(
            "conditional read click probability",
        ));
    }
    Ok(c.marginal(WRITE | READ1 | READ2) * w / (w1 * w2))
}

/// `p(r1,r2) / (p(r1) p(r2))`, ignoring the write arm.
pub fn g2_unconditional(model: &TmsvDetectorModel) -> Result<f64> {
    let c = model.click_probabilities()?;
    let r1 = c.marginal(READ1);
    let r2 = c.marginal(READ2);
    if r1 <= 0.0 || r2 <= 0.0 {
        return Err(Error::DegenerateDenominator("read click probability"));
    }
    Ok(c.marginal(READ1 | READ2) / (r1 * r2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawEfficiency {
    pub value: f64,
    /// Background coincidences exceed the correlated ones.
    pub negative: bool,
}

/// `(p_wr - p_wnr) / p_w`.
pub fn raw_retrieval_efficiency(p_wr: f64, p_wnr: f64, p_w: f64) -> Result<RawEfficiency> {
    for (name, v) in [("p_wr", p_wr), ("p_wnr", p_wnr), ("p_w", p_w)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invariant(name, "must lie in [0, 1]"));
        }
    }
    if p_w == 0.0 {
        return Err(Error::DegenerateDenominator("p_w"));
    }
    let value = (p_wr - p_wnr) / p_w;
    Ok(RawEfficiency {
        value,
        negative: value < 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn vacuum_never_clicks() {
        let m = TmsvDetectorModel::new(0.0, 1).unwrap();
        let c = m.click_probabilities().unwrap();
        assert_eq!(c.table[0], 1.0);
        assert!(c.table[1..].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn dark_counts_alone_are_independent() {
        let d = Detector::new(0.5, 0.03);
        let m = TmsvDetectorModel::new(0.0, 1)
            .unwrap()
            .with_detectors(d, d, d)
            .unwrap();
        let c = m.click_probabilities().unwrap();
        for mask in [WRITE, READ1, READ2] {
            assert_relative_eq!(c.marginal(mask), 0.03, max_relative = 1e-13);
        }
        assert_relative_eq!(c.marginal(7), 0.03f64.powi(3), max_relative = 1e-12);
    }

    #[test]
    fn raw_efficiency_arithmetic() {
        assert_relative_eq!(
            raw_retrieval_efficiency(0.002, 0.0005, 0.005)
                .unwrap()
                .value,
            0.3,
            max_relative = 1e-12
        );
        assert_eq!(
            raw_retrieval_efficiency(0.001, 0.001, 0.005).unwrap().value,
            0.0
        );
        assert_eq!(
            raw_retrieval_efficiency(0.005, 0.0, 0.005).unwrap().value,
            1.0
        );
        let neg = raw_retrieval_efficiency(0.001, 0.002, 0.005).unwrap();
        assert!(neg.negative);
        assert!(raw_retrieval_efficiency(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn truncation_is_checked() {
        let m = TmsvDetectorModel::new(0.3, 1).unwrap();
        match m.with_n_max(3) {
            Err(Error::Truncation { suggested, .. }) => assert!(suggested > 3),
            other => panic!("expected a truncation error, got {other:?}"),
        }
    }
}
