//! Composite Gauss-Legendre and trapezoid integration with panel-halving
//! error estimates, plus the nested 2-D/3-D drivers used by the correlators.

use std::sync::OnceLock;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        Rule { nodes, weights }
    }

    /// Nodes and weights mapped onto [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, half * w))
    }

    pub fn apply<F: FnMut(f64) -> C64>(&self, a: f64, b: f64, mut f: F) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (x, w) in self.mapped(a, b) {
            acc += f(x) * w;
        }
        acc
    }
}

pub fn gl16() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| Rule::new(16))
}

pub fn gl24() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| Rule::new(24))
}

pub fn gl64() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| Rule::new(64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Uniform,
    Chebyshev,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub n_points: usize,
    pub spacing: Spacing,
}

impl TimeGrid {
    pub const MIN_POINTS: usize = 16;

    pub fn new(t_start: f64, t_end: f64, n_points: usize, spacing: Spacing) -> Result<Self> {
        if !(t_start.is_finite() && t_end.is_finite()) || t_end <= t_start {
            return Err(Error::invariant(
                "grid",
                format!("t_end ({t_end:e}) must exceed t_start ({t_start:e})"),
            ));
        }
        if n_points < Self::MIN_POINTS {
            return Err(Error::invariant(
                "grid.n_points",
                format!("need at least {} points, got {n_points}", Self::MIN_POINTS),
            ));
        }
        Ok(TimeGrid {
            t_start,
            t_end,
            n_points,
            spacing,
        })
    }

    pub fn samples(&self) -> Vec<f64> {
        let n = self.n_points;
        let span = self.t_end - self.t_start;
        (0..n)
            .map(|i| {
                if i == 0 {
                    return self.t_start;
                }
                if i == n - 1 {
                    return self.t_end;
                }
                let s = match self.spacing {
                    Spacing::Uniform => i as f64 / (n - 1) as f64,
                    Spacing::Chebyshev => {
                        0.5 * (1.0 - (std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
                    }
                };
                self.t_start + span * s
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Trapezoid,
    GaussLegendreComposite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rule: RuleKind,
    pub rel_tol: f64,
    pub max_levels: u32,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            rule: RuleKind::GaussLegendreComposite,
            rel_tol: 1e-8,
            max_levels: 30,
        }
    }
}

impl QuadratureSpec {
    pub fn new(rule: RuleKind, rel_tol: f64, max_levels: u32) -> Result<Self> {
        let spec = QuadratureSpec {
            rule,
            rel_tol,
            max_levels,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol <= 0.1) {
            return Err(Error::invariant(
                "quadrature.rel_tol",
                format!("must lie in (0, 0.1], got {}", self.rel_tol),
            ));
        }
        if self.max_levels < 1 {
            return Err(Error::invariant(
                "quadrature.max_levels",
                "must be at least 1",
            ));
        }
        Ok(())
    }

    pub fn with_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    /// Tolerance handed to inner integrals of a nested integral.
    fn inner(&self) -> Self {
        QuadratureSpec {
            rel_tol: (self.rel_tol * 0.1).max(1e-14),
            ..*self
        }
    }
}

/// An integral value with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: C64,
    pub error: f64,
    pub converged: bool,
}

impl Estimate {
    pub fn zero() -> Self {
        Estimate {
            value: C64::new(0.0, 0.0),
            error: 0.0,
            converged: true,
        }
    }

    /// Turns a flagged estimate into an error naming `label`.
    pub fn require(self, label: &str) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NonConvergence {
                label: label.to_string(),
                value: self.value.norm(),
                error: self.error,
            })
        }
    }
}

/// Integration interval with interior breakpoints that panels never straddle.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
    breaks: Vec<f64>,
}

impl Domain {
    pub fn new(lo: f64, hi: f64) -> Self {
        Domain {
            lo,
            hi,
            breaks: Vec::new(),
        }
    }

    pub fn with_breaks(mut self, breaks: &[f64]) -> Self {
        for &b in breaks {
            if b > self.lo && b < self.hi && b.is_finite() {
                self.breaks.push(b);
            }
        }
        self.breaks.sort_by(f64::total_cmp);
        self.breaks.dedup();
        self
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn is_empty(&self) -> bool {
        !(self.hi > self.lo)
    }

    fn segments(&self) -> Vec<(f64, f64)> {
        let mut edges = Vec::with_capacity(self.breaks.len() + 2);
        edges.push(self.lo);
        edges.extend(&self.breaks);
        edges.push(self.hi);
        edges.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

struct Panel {
    a: f64,
    b: f64,
    depth: u32,
    value: C64,
    error: f64,
}

fn gl_panel<F: FnMut(f64) -> C64>(f: &mut F, a: f64, b: f64, depth: u32) -> Panel {
    let rule = gl16();
    let m = 0.5 * (a + b);
    let whole = rule.apply(a, b, &mut *f);
    let halves = rule.apply(a, m, &mut *f) + rule.apply(m, b, &mut *f);
    Panel {
        a,
        b,
        depth,
        value: halves,
        error: (halves - whole).norm(),
    }
}

/// Adaptive composite 16-point Gauss-Legendre. The panel with the largest
/// error estimate is bisected until the summed estimate meets the tolerance.
fn integrate_gl<F: FnMut(f64) -> C64>(
    mut f: F,
    domain: &Domain,
    spec: &QuadratureSpec,
) -> Estimate {
    let mut panels: Vec<Panel> = domain
        .segments()
        .into_iter()
        .map(|(a, b)| gl_panel(&mut f, a, b, 0))
        .collect();
    loop {
        let total: C64 = panels.iter().map(|p| p.value).sum();
        let error: f64 = panels.iter().map(|p| p.error).sum();
        if error <= spec.rel_tol * total.norm() || error == 0.0 {
            return Estimate {
                value: total,
                error,
                converged: true,
            };
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .filter(|(_, p)| p.depth < spec.max_levels)
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .unwrap_or((usize::MAX, &panels[0]));
        // Converged to floating-point noise: nothing left worth splitting.
        let noise = 64.0 * f64::EPSILON * panels.iter().map(|p| p.value.norm()).sum::<f64>();
        if worst == usize::MAX || error <= noise {
            return Estimate {
                value: total,
                error,
                converged: error <= noise,
            };
        }
        let p = panels.remove(worst);
        let m = 0.5 * (p.a + p.b);
        let right = gl_panel(&mut f, m, p.b, p.depth + 1);
        let left = gl_panel(&mut f, p.a, m, p.depth + 1);
        panels.insert(worst, right);
        panels.insert(worst, left);
    }
}

fn trapezoid_uniform<F: FnMut(f64) -> C64>(f: &mut F, a: f64, b: f64, n: usize) -> C64 {
    let h = (b - a) / n as f64;
    let mut acc = 0.5 * (f(a) + f(b));
    for i in 1..n {
        acc += f(a + h * i as f64);
    }
    acc * h
}

/// Trapezoid rule with interval doubling; the error is the change between
/// the last two levels.
fn integrate_trapezoid<F: FnMut(f64) -> C64>(
    mut f: F,
    domain: &Domain,
    spec: &QuadratureSpec,
) -> Estimate {
    let levels = spec.max_levels.min(22);
    let segments = domain.segments();
    let mut previous = C64::new(0.0, 0.0);
    let mut last = Estimate::zero();
    for level in 0..=levels {
        let n = 16usize << level;
        let value: C64 = segments
            .iter()
            .map(|&(a, b)| trapezoid_uniform(&mut f, a, b, n))
            .sum();
        if level > 0 {
            let error = (value - previous).norm();
            last = Estimate {
                value,
                error,
                converged: error <= spec.rel_tol * value.norm() || error == 0.0,
            };
            if last.converged {
                return last;
            }
        }
        previous = value;
    }
    last
}

/// One-dimensional integral of a complex integrand.
pub fn integrate_1d<F: FnMut(f64) -> C64>(
    f: F,
    domain: &Domain,
    spec: &QuadratureSpec,
) -> Estimate {
    if domain.is_empty() {
        return Estimate::zero();
    }
    match spec.rule {
        RuleKind::GaussLegendreComposite => integrate_gl(f, domain, spec),
        RuleKind::Trapezoid => integrate_trapezoid(f, domain, spec),
    }
}

/// Real-valued convenience wrapper around [`integrate_1d`].
pub fn integrate_real<F: FnMut(f64) -> f64>(
    mut f: F,
    domain: &Domain,
    spec: &QuadratureSpec,
) -> Estimate {
    integrate_1d(|x| C64::new(f(x), 0.0), domain, spec)
}

/// Integration domain of a nested integral. Inner limits may depend on the
/// outer variables.
pub enum Nested<'a> {
    Two {
        outer: Domain,
        inner: Box<dyn Fn(f64) -> Domain + 'a>,
    },
    Three {
        outer: Domain,
        middle: Box<dyn Fn(f64) -> Domain + 'a>,
        inner: Box<dyn Fn(f64, f64) -> Domain + 'a>,
    },
}

/// Nested 2-D or 3-D integral. `f` receives the variables outermost first;
/// for a 2-D domain the third slot is zero. Each axis is refined
/// adaptively and the reported error adds the outer estimate to the worst
/// relative inner estimate.
pub fn integrate_nested<F: Fn(f64, f64, f64) -> C64>(
    f: F,
    domains: &Nested<'_>,
    spec: &QuadratureSpec,
) -> Estimate {
    let inner_spec = spec.inner();
    let mut worst_rel = 0.0f64;
    let mut inner_ok = true;
    let mut track = |e: &Estimate| {
        inner_ok &= e.converged;
        let scale = e.value.norm();
        if scale > 0.0 {
            worst_rel = worst_rel.max(e.error / scale);
        }
    };
    let outer = match domains {
        Nested::Two { outer, inner } => integrate_1d(
            |x| {
                let e = integrate_1d(|y| f(x, y, 0.0), &inner(x), &inner_spec);
                track(&e);
                e.value
            },
            outer,
            spec,
        ),
        Nested::Three {
            outer,
            middle,
            inner,
        } => {
            let middle_spec = inner_spec;
            let innermost = inner_spec.inner();
            integrate_1d(
                |x| {
                    let mut mid_worst = Estimate::zero();
                    let e = integrate_1d(
                        |y| {
                            let e = integrate_1d(|z| f(x, y, z), &inner(x, y), &innermost);
                            if !e.converged || e.error > mid_worst.error {
                                mid_worst = Estimate {
                                    converged: e.converged && mid_worst.converged,
                                    ..e
                                };
                            }
                            e.value
                        },
                        &middle(x),
                        &middle_spec,
                    );
                    track(&mid_worst);
                    track(&e);
                    e.value
                },
                outer,
                spec,
            )
        }
    };
    Estimate {
        value: outer.value,
        error: outer.error + worst_rel * outer.value.norm(),
        converged: outer.converged && inner_ok,
    }
}
