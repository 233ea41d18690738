//! Waveform analysis, read-power optimization and parameter scans.

pub mod figures;
pub mod output;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::scenario_hash;
use crate::correlators::{Efficiency, Heralding, Retrieval, RetrievalWarning, Waveform};
use crate::error::{Error, Result};
use crate::model::{ReadPower, Scenario};
use crate::photon_stats::{Detector, TmsvDetectorModel};
use crate::regime::{validate_regime, RegimeThresholds, RegimeWarning};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Coarse grid size of the read-power optimizer.
pub const DEFAULT_POWER_POINTS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fwhm {
    pub width: f64,
    pub left: f64,
    pub right: f64,
    /// More than one prominent peak above half maximum.
    pub multi_peak: bool,
}

/// Indices of local maxima at least `min_height · max` high and separated
/// from their neighbours by a dip of at least `min_prominence · max`.
pub fn prominent_peaks(flux: &[f64], min_height: f64, min_prominence: f64) -> Vec<usize> {
    let top = flux.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(top > 0.0) {
        return Vec::new();
    }
    let mut candidates = Vec::new();
    let n = flux.len();
    let mut i = 0;
    while i < n {
        // Plateaus count once, at their first sample.
        let mut j = i;
        while j + 1 < n && flux[j + 1] == flux[i] {
            j += 1;
        }
        let left_ok = i == 0 || flux[i - 1] < flux[i];
        let right_ok = j == n - 1 || flux[j + 1] < flux[i];
        if left_ok && right_ok && flux[i] >= min_height * top {
            candidates.push(i);
        }
        i = j + 1;
    }
    let mut peaks: Vec<usize> = Vec::new();
    for c in candidates {
        match peaks.last().copied() {
            None => peaks.push(c),
            Some(p) => {
                let dip = flux[p..=c].iter().cloned().fold(f64::INFINITY, f64::min);
                if flux[p].min(flux[c]) - dip >= min_prominence * top {
                    peaks.push(c);
                } else if flux[c] > flux[p] {
                    *peaks.last_mut().unwrap() = c;
                }
            }
        }
    }
    peaks
}

/// Full width at half of the global maximum, from linearly interpolated
/// crossings. Multi-peaked waveforms report the outermost crossings. The
/// flux is taken to vanish outside the sampled window (the drive is off
/// there), so a waveform still above half maximum at an edge crosses at
/// that edge.
pub fn fwhm(w: &Waveform) -> Result<Fwhm> {
    let (t, f) = (&w.times, &w.flux);
    let top = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let bottom = f.iter().cloned().fold(f64::INFINITY, f64::min);
    if f.len() < 2 || !(top > 0.0) || top == bottom {
        return Err(Error::NoCrossing);
    }
    let half = 0.5 * top;
    let first = f.iter().position(|&v| v >= half).unwrap();
    let last = f.iter().rposition(|&v| v >= half).unwrap();
    let cross = |i: usize, j: usize| {
        let (a, b) = (f[i], f[j]);
        t[i] + (half - a) / (b - a) * (t[j] - t[i])
    };
    let left = if first == 0 {
        t[0]
    } else {
        cross(first - 1, first)
    };
    let right = if last == f.len() - 1 {
        t[last]
    } else {
        cross(last, last + 1)
    };
    Ok(Fwhm {
        width: right - left,
        left,
        right,
        multi_peak: prominent_peaks(f, 0.5, 0.1).len() > 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveformClass {
    SinglePeak,
    /// Slow rise to the maximum followed by a fast fall.
    RisingThenCutoff,
    TwoPeaks,
    MultiPeak,
}

/// 10–90 % rise and 90–10 % fall times around the global maximum. A
/// level not reached inside the window is placed at the window edge.
pub fn edge_times(w: &Waveform) -> Option<(f64, f64)> {
    let (t, f) = (&w.times, &w.flux);
    let (ipk, top) =
        f.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |a, (i, &v)| if v > a.1 { (i, v) } else { a },
        );
    if !(top > 0.0) {
        return None;
    }
    let level_left = |x: f64| {
        (0..=ipk)
            .rev()
            .find(|&i| f[i] < x * top)
            .map_or(t[0], |i| t[i])
    };
    let level_right = |x: f64| {
        (ipk..f.len())
            .find(|&i| f[i] < x * top)
            .map_or(t[f.len() - 1], |i| t[i])
    };
    let rise = level_left(0.9) - level_left(0.1);
    let fall = level_right(0.1) - level_right(0.9);
    Some((rise, fall))
}

/// Rise over fall time above which a single peak is `RisingThenCutoff`.
pub const CUTOFF_ASYMMETRY: f64 = 3.0;

pub fn classify(w: &Waveform) -> WaveformClass {
    match prominent_peaks(&w.flux, 0.25, 0.1).len() {
        0 | 1 => match edge_times(w) {
            Some((rise, fall)) if rise > CUTOFF_ASYMMETRY * fall => WaveformClass::RisingThenCutoff,
            _ => WaveformClass::SinglePeak,
        },
        2 => WaveformClass::TwoPeaks,
        _ => WaveformClass::MultiPeak,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    /// Barred peak read Rabi frequency, rad/s.
    pub rabi_bar: f64,
    pub eta_cond: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerOptimum {
    pub best: PowerSample,
    /// Coarse log-spaced grid followed by the refinement evaluations.
    pub curve: Vec<PowerSample>,
    pub refinement: Vec<PowerSample>,
    /// Sign changes of the slope along the coarse grid.
    pub interior_extrema: usize,
    /// More than one local maximum on the coarse grid.
    pub non_unimodal: bool,
}

impl PowerOptimum {
    /// No interior extremum and a plateau at the top of the bracket.
    pub fn monotone_saturating(&self) -> bool {
        let n = self.curve.len();
        if self.interior_extrema > 0 || n < 4 {
            return false;
        }
        let last = self.curve[n - 1].eta_cond;
        let prev = self.curve[n - 2].eta_cond;
        let first = self.curve[0].eta_cond;
        let rise = (last - first).abs();
        last >= first && (last - prev).abs() <= 0.1 * rise.max(f64::MIN_POSITIVE)
    }
}

/// Slope sign changes and local maxima of a sampled curve, ignoring steps
/// below `tol`.
pub fn extrema(values: &[f64], tol: f64) -> (usize, usize) {
    let signs: Vec<i8> = values
        .windows(2)
        .filter_map(|w| {
            let d = w[1] - w[0];
            if d.abs() <= tol {
                None
            } else {
                Some(if d > 0.0 { 1 } else { -1 })
            }
        })
        .collect();
    if signs.is_empty() {
        return (0, 1);
    }
    let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
    let mut maxima = signs.windows(2).filter(|w| w[0] > 0 && w[1] < 0).count();
    if signs[0] < 0 {
        maxima += 1;
    }
    if *signs.last().unwrap() > 0 {
        maxima += 1;
    }
    (changes, maxima)
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Maximizes the conditional efficiency over the barred peak read Rabi
/// frequency in `[lo, hi]`: a log-spaced grid of `points` samples, then
/// golden-section refinement inside the bracket of the best sample.
pub fn optimize_read_power(
    heralding: &Heralding,
    scenario: &Scenario,
    lo: f64,
    hi: f64,
    points: usize,
) -> Result<PowerOptimum> {
    if !(lo > 0.0 && hi > lo && lo.is_finite() && hi.is_finite()) || points < 3 {
        return Err(Error::EmptyBracket { lo, hi });
    }
    let eval = |x: f64| -> Result<PowerSample> {
        let (e, _) = heralding.efficiency(&scenario.with_read_peak(x))?;
        Ok(PowerSample {
            rabi_bar: x,
            eta_cond: e.eta_cond,
        })
    };
    let (a, b) = (lo.ln(), hi.ln());
    let grid: Vec<f64> = (0..points)
        .map(|i| {
            if i == points - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect();
    let curve = grid
        .par_iter()
        .map(|&x| eval(x))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = curve.iter().map(|s| s.eta_cond).collect();
    let top = values.iter().cloned().fold(0.0, f64::max);
    let (interior_extrema, maxima) = extrema(&values, 1e-6 * top);
    let ibest = values
        .iter()
        .enumerate()
        .fold(0, |k, (i, &v)| if v > values[k] { i } else { k });

    let mut x0 = grid[ibest.saturating_sub(1)].ln();
    let mut x3 = grid[(ibest + 1).min(points - 1)].ln();
    let mut refinement = Vec::new();
    let mut x1 = x3 - GOLDEN * (x3 - x0);
    let mut x2 = x0 + GOLDEN * (x3 - x0);
    let mut f1 = eval(x1.exp())?;
    let mut f2 = eval(x2.exp())?;
    refinement.push(f1);
    refinement.push(f2);
    while (x3 - x0) > 1e-4 {
        if f1.eta_cond >= f2.eta_cond {
            x3 = x2;
            x2 = x1;
            f2 = f1;
            x1 = x3 - GOLDEN * (x3 - x0);
            f1 = eval(x1.exp())?;
            refinement.push(f1);
        } else {
            x0 = x1;
            x1 = x2;
            f1 = f2;
            x2 = x0 + GOLDEN * (x3 - x0);
            f2 = eval(x2.exp())?;
            refinement.push(f2);
        }
    }
    let best = curve
        .iter()
        .chain(&refinement)
        .copied()
        .fold(
            curve[ibest],
            |a, s| if s.eta_cond > a.eta_cond { s } else { a },
        );
    Ok(PowerOptimum {
        best,
        curve,
        refinement,
        interior_extrema,
        non_unimodal: maxima > 1,
    })
}

/// Lowest power on the optimizer's curve whose efficiency reaches
/// `fraction` of the best one, refined by bisection between grid samples.
pub fn saturation_point(
    heralding: &Heralding,
    scenario: &Scenario,
    opt: &PowerOptimum,
    fraction: f64,
) -> Result<PowerSample> {
    let target = fraction * opt.best.eta_cond;
    let k = opt
        .curve
        .iter()
        .position(|p| p.eta_cond >= target)
        .unwrap_or(opt.curve.len() - 1);
    if k == 0 {
        return Ok(opt.curve[0]);
    }
    let (mut a, mut b) = (opt.curve[k - 1].rabi_bar.ln(), opt.curve[k].rabi_bar.ln());
    let mut hit = opt.curve[k];
    while b - a > 1e-5 {
        let x = (0.5 * (a + b)).exp();
        let (e, _) = heralding.efficiency(&scenario.with_read_peak(x))?;
        if e.eta_cond >= target {
            b = x.ln();
            hit = PowerSample {
                rabi_bar: x,
                eta_cond: e.eta_cond,
            };
        } else {
            a = x.ln();
        }
    }
    Ok(hit)
}

/// Applies the scenario's read-power policy. Returns the scenario with the
/// read peak fixed and, for `Optimize`, the optimizer record.
pub fn resolve_read_power(
    heralding: &Heralding,
    s: &Scenario,
) -> Result<(Scenario, Option<PowerOptimum>)> {
    match s.read_power {
        ReadPower::Fixed => Ok((s.clone(), None)),
        ReadPower::MatchedArea { sweeps } => {
            Ok((s.with_read_peak(s.matched_read_peak(sweeps)), None))
        }
        ReadPower::Optimize { lo, hi } => {
            let m = s.matched_read_peak(1.0);
            let opt = optimize_read_power(heralding, s, lo * m, hi * m, DEFAULT_POWER_POINTS)?;
            Ok((s.with_read_peak(opt.best.rabi_bar), Some(opt)))
        }
        ReadPower::Saturate { lo, hi, fraction } => {
            let m = s.matched_read_peak(1.0);
            let opt = optimize_read_power(heralding, s, lo * m, hi * m, DEFAULT_POWER_POINTS)?;
            let knee = saturation_point(heralding, s, &opt, fraction)?;
            Ok((s.with_read_peak(knee.rabi_bar), Some(opt)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scenario_hash: String,
    pub tool_version: String,
}

impl Provenance {
    pub fn of(s: &Scenario) -> Self {
        Provenance {
            scenario_hash: scenario_hash(s),
            tool_version: TOOL_VERSION.to_string(),
        }
    }
}

/// Everything reported for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub retrieval: Retrieval,
    pub fwhm: Option<Fwhm>,
    pub class: WaveformClass,
    /// Barred peak read Rabi frequency used, rad/s.
    pub read_rabi_bar: f64,
    /// Simpson integral of the sampled fiber flux over `η_fiber`.
    pub sampled_eta_cond: f64,
    pub regime: Vec<RegimeWarning>,
    pub optimum: Option<PowerOptimum>,
    pub provenance: Provenance,
}

/// Runs one scenario with an existing write stage.
pub fn run_with(heralding: &Heralding, scenario: &Scenario) -> Result<RunResult> {
    let (s, optimum) = resolve_read_power(heralding, scenario)?;
    let retrieval = heralding.retrieve(&s)?;
    let fwhm = fwhm(&retrieval.waveform).ok();
    let class = classify(&retrieval.waveform);
    let eta_fiber = s.detection.eta_fiber;
    let sampled = if eta_fiber > 0.0 {
        retrieval.waveform.integral() / eta_fiber
    } else {
        f64::NAN
    };
    Ok(RunResult {
        fwhm,
        class,
        read_rabi_bar: s.read_pulse.peak_rabi_bar,
        sampled_eta_cond: sampled,
        regime: validate_regime(&s, &RegimeThresholds::default()),
        optimum,
        provenance: Provenance::of(scenario),
        retrieval,
    })
}

pub fn run(scenario: &Scenario) -> Result<RunResult> {
    run_with(&Heralding::new(scenario)?, scenario)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub value: f64,
    pub efficiency: Option<Efficiency>,
    pub fwhm: Option<f64>,
    pub multi_peak: bool,
    pub read_rabi_bar: Option<f64>,
    pub warnings: Vec<RetrievalWarning>,
    /// Failure message; the scan continues past failed points.
    pub error: Option<String>,
    /// The failure was a quadrature non-convergence.
    pub nonconvergent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub parameter: String,
    /// Unit of `value` in every point.
    pub unit: String,
    pub points: Vec<ScanPoint>,
    pub provenance: Provenance,
}

impl ScanResult {
    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| p.error.is_some()).count()
    }

    pub fn efficiencies(&self) -> Vec<Option<f64>> {
        self.points
            .iter()
            .map(|p| p.efficiency.map(|e| e.eta_cond))
            .collect()
    }
}

pub(crate) fn scan_point(heralding: &Heralding, value: f64, s: &Scenario) -> ScanPoint {
    match run_with(heralding, s) {
        Ok(r) => ScanPoint {
            value,
            efficiency: Some(r.retrieval.efficiency),
            fwhm: r.fwhm.map(|f| f.width),
            multi_peak: r.fwhm.map(|f| f.multi_peak).unwrap_or(false),
            read_rabi_bar: Some(r.read_rabi_bar),
            warnings: r.retrieval.warnings,
            error: None,
            nonconvergent: false,
        },
        Err(e) => ScanPoint {
            value,
            efficiency: None,
            fwhm: None,
            multi_peak: false,
            read_rabi_bar: None,
            warnings: Vec::new(),
            nonconvergent: matches!(e, Error::NonConvergence { .. }),
            error: Some(e.to_string()),
        },
    }
}

fn scan(
    base: &Scenario,
    parameter: &str,
    unit: &str,
    values: &[f64],
    vary: impl Fn(f64) -> Result<Scenario> + Sync,
) -> Result<ScanResult> {
    if values.is_empty() {
        return Err(Error::invariant(parameter, "scan list is empty"));
    }
    let heralding = Heralding::new(base)?;
    let points = values
        .par_iter()
        .map(|&v| match vary(v) {
            Ok(s) => scan_point(&heralding, v, &s),
            Err(e) => ScanPoint {
                value: v,
                efficiency: None,
                fwhm: None,
                multi_peak: false,
                read_rabi_bar: None,
                warnings: Vec::new(),
                nonconvergent: false,
                error: Some(e.to_string()),
            },
        })
        .collect();
    Ok(ScanResult {
        parameter: parameter.to_string(),
        unit: unit.to_string(),
        points,
        provenance: Provenance::of(base),
    })
}

/// Read-pulse duration scan. The read power follows the base scenario's
/// policy at every point.
pub fn scan_duration(base: &Scenario, durations: &[f64]) -> Result<ScanResult> {
    scan(base, "read_duration", "s", durations, |d| {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::invariant(
                "read_duration",
                format!("must be > 0, got {d}"),
            ));
        }
        let s = base.with_read_duration(d);
        s.validate()?;
        Ok(s)
    })
}

/// Storage-delay scan.
pub fn scan_delay(base: &Scenario, delays: &[f64]) -> Result<ScanResult> {
    scan(base, "storage_delay", "s", delays, |d| {
        let s = base.with_delay(d);
        s.validate()?;
        Ok(s)
    })
}

/// Read-power scan over barred peak Rabi frequencies (rad/s).
pub fn scan_power(base: &Scenario, peaks: &[f64]) -> Result<ScanResult> {
    scan(base, "read_rabi_bar", "rad/s", peaks, |p| {
        let mut s = base.with_read_peak(p);
        s.read_power = ReadPower::Fixed;
        s.validate()?;
        Ok(s)
    })
}

/// Photon-statistics model of a scenario: write detection through the
/// filter and detector, read detection additionally through the retrieval
/// and fiber coupling, dark clicks over one gate.
pub fn statistics_model(
    s: &Scenario,
    eta_fiber_coupled: f64,
    p: f64,
    modes: u32,
    gate: f64,
) -> Result<TmsvDetectorModel> {
    let d = &s.detection;
    let dark = Detector::dark_probability(d.dark_rate, gate);
    let herald = Detector::new(d.eta_filter * d.eta_det, dark);
    let read = Detector::new(eta_fiber_coupled * d.eta_filter * d.eta_det, dark);
    TmsvDetectorModel::new(p, modes)?.with_detectors(herald, read, read)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatePoint {
    pub gate: f64,
    pub dark_probability: f64,
    pub g2_conditional: f64,
    pub g2_unconditional: f64,
}

/// `g²` against the detection gate at a fixed dark-count rate.
pub fn g2_gate_scan(
    s: &Scenario,
    eta_fiber_coupled: f64,
    p: f64,
    modes: u32,
    gates: &[f64],
) -> Result<Vec<GatePoint>> {
    gates
        .iter()
        .map(|&gate| {
            let m = statistics_model(s, eta_fiber_coupled, p, modes, gate)?;
            Ok(GatePoint {
                gate,
                dark_probability: m.read1.dark,
                g2_conditional: crate::photon_stats::g2_conditional(&m)?,
                g2_unconditional: crate::photon_stats::g2_unconditional(&m)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sampled(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> Waveform {
        let times: Vec<f64> = (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect();
        let flux = times.iter().map(|&t| f(t)).collect();
        Waveform { times, flux }
    }

    #[test]
    fn gaussian_width() {
        let s = 100e-9;
        let w = sampled(|t| (-0.5 * (t / s).powi(2)).exp(), -1e-6, 1e-6, 2001);
        let f = fwhm(&w).unwrap();
        assert!((f.width - 235.5e-9).abs() < 0.5e-9, "{}", f.width);
        assert!(!f.multi_peak);
        assert_eq!(classify(&w), WaveformClass::SinglePeak);
    }

    #[test]
    fn rectangle_width_within_a_step() {
        let w = sampled(
            |t| if (0.2..0.5).contains(&t) { 1.0 } else { 0.0 },
            0.0,
            1.0,
            1001,
        );
        let f = fwhm(&w).unwrap();
        assert!((f.width - 0.3).abs() <= w.step());
    }

    #[test]
    fn edge_above_half_crosses_at_the_edge() {
        let w = sampled(|t| (t / 0.1).exp(), 0.0, 1.0, 1001);
        let f = fwhm(&w).unwrap();
        assert!((f.right - 1.0).abs() < 1e-12);
        assert!((f.width - 0.1 * 2f64.ln()).abs() <= w.step());
        assert_eq!(classify(&w), WaveformClass::RisingThenCutoff);
    }

    #[test]
    fn flat_and_zero_have_no_crossing() {
        assert!(matches!(
            fwhm(&sampled(|_| 0.0, 0.0, 1.0, 11)),
            Err(Error::NoCrossing)
        ));
        assert!(matches!(
            fwhm(&sampled(|_| 2.0, 0.0, 1.0, 11)),
            Err(Error::NoCrossing)
        ));
    }

    #[test]
    fn double_peak_uses_outer_crossings() {
        let g = |t: f64, c: f64| (-0.5 * ((t - c) / 0.05).powi(2)).exp();
        let w = sampled(|t| g(t, 0.3) + 0.9 * g(t, 0.7), 0.0, 1.0, 2001);
        let f = fwhm(&w).unwrap();
        assert!(f.multi_peak);
        assert!(f.left < 0.3 && f.right > 0.7);
        assert_eq!(classify(&w), WaveformClass::TwoPeaks);
    }

    #[test]
    fn rising_exponential_with_cutoff() {
        let w = sampled(
            |t| {
                if t < 1.0 {
                    ((t - 1.0) / 0.1).exp()
                } else {
                    (-(t - 1.0) / 0.005).exp()
                }
            },
            0.0,
            1.2,
            4001,
        );
        assert_eq!(classify(&w), WaveformClass::RisingThenCutoff);
    }

    #[test]
    fn extrema_counting() {
        assert_eq!(extrema(&[1.0, 2.0, 3.0, 3.0], 0.0), (0, 1));
        assert_eq!(extrema(&[1.0, 3.0, 2.0, 4.0], 0.0), (2, 2));
        assert_eq!(extrema(&[3.0, 2.0, 1.0], 0.0), (0, 1));
    }
}
