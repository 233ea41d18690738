//! Tabulated functions: cubic Hermite tables on uniform grids and
//! barycentric interpolation on Chebyshev-Lobatto nodes.

use num_complex::Complex64 as C64;

/// Cubic Hermite interpolant over a uniform grid, with exact derivatives
/// supplied at the nodes.
#[derive(Debug, Clone)]
pub struct HermiteTable {
    t0: f64,
    step: f64,
    values: Vec<C64>,
    slopes: Vec<C64>,
}

impl HermiteTable {
    pub fn new(t0: f64, step: f64, values: Vec<C64>, slopes: Vec<C64>) -> Self {
        assert!(values.len() >= 2 && values.len() == slopes.len());
        assert!(step > 0.0);
        HermiteTable {
            t0,
            step,
            values,
            slopes,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.t0
    }

    pub fn end(&self) -> f64 {
        self.t0 + self.step * (self.values.len() - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.t0 + self.step * i as f64
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    /// Value at `t`, clamped to the end values outside the table.
    pub fn eval(&self, t: f64) -> C64 {
        let n = self.values.len();
        if t <= self.t0 {
            return self.values[0];
        }
        let s = (t - self.t0) / self.step;
        if s >= (n - 1) as f64 {
            return self.values[n - 1];
        }
        let i = (s.floor() as usize).min(n - 2);
        let u = s - i as f64;
        let u2 = u * u;
        let u3 = u2 * u;
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        self.values[i] * h00
            + self.slopes[i] * (h10 * self.step)
            + self.values[i + 1] * h01
            + self.slopes[i + 1] * (h11 * self.step)
    }
}

/// Chebyshev-Lobatto nodes on [0, 1] with barycentric weights.
#[derive(Debug, Clone)]
pub struct ChebyshevBasis {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl ChebyshevBasis {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2);
        let m = n - 1;
        let nodes = (0..n)
            .map(|j| 0.5 * (1.0 - (std::f64::consts::PI * j as f64 / m as f64).cos()))
            .collect();
        let weights = (0..n)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == m {
                    0.5 * sign
                } else {
                    sign
                }
            })
            .collect();
        ChebyshevBasis { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Values of every Lagrange cardinal function at `x`, written into `out`.
    pub fn cardinals(&self, x: f64, out: &mut [f64]) {
        for (j, &xj) in self.nodes.iter().enumerate() {
            if x == xj {
                out.iter_mut().for_each(|v| *v = 0.0);
                out[j] = 1.0;
                return;
            }
        }
        let mut denom = 0.0;
        for (j, &xj) in self.nodes.iter().enumerate() {
            let r = self.weights[j] / (x - xj);
            out[j] = r;
            denom += r;
        }
        out.iter_mut().for_each(|v| *v /= denom);
    }

    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let mut l = vec![0.0; self.len()];
        self.cardinals(x, &mut l);
        l.iter().zip(values).map(|(a, b)| a * b).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hermite_reproduces_cubics_exactly() {
        let f = |t: f64| 2.0 * t * t * t - t + 0.5;
        let df = |t: f64| 6.0 * t * t - 1.0;
        let n = 11;
        let step = 0.3;
        let values = (0..n).map(|i| C64::new(f(step * i as f64), 0.0)).collect();
        let slopes = (0..n).map(|i| C64::new(df(step * i as f64), 0.0)).collect();
        let table = HermiteTable::new(0.0, step, values, slopes);
        for &t in &[0.0, 0.01, 0.77, 1.5, 2.999, 3.0] {
            assert_relative_eq!(
                table.eval(t).re,
                f(t),
                max_relative = 1e-13,
                epsilon = 1e-14
            );
        }
        assert_eq!(table.eval(-1.0).re, f(0.0));
        assert_eq!(table.eval(10.0).re, table.values()[n - 1].re);
    }

    #[test]
    fn chebyshev_interpolation_is_spectrally_accurate() {
        let basis = ChebyshevBasis::new(33);
        let f = |x: f64| (3.0 * x).exp() * (5.0 * x).cos();
        let values: Vec<f64> = basis.nodes().iter().map(|&x| f(x)).collect();
        for i in 0..200 {
            let x = i as f64 / 199.0;
            assert_relative_eq!(basis.interpolate(&values, x), f(x), epsilon = 1e-12);
        }
    }

    #[test]
    fn cardinals_partition_unity() {
        let basis = ChebyshevBasis::new(9);
        let mut l = vec![0.0; 9];
        for &x in &[0.0, 0.123, 0.5, 1.0] {
            basis.cardinals(x, &mut l);
            assert_relative_eq!(l.iter().sum::<f64>(), 1.0, max_relative = 1e-14);
        }
    }
}
