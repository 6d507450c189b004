//! Gaussian quadrature and interpolation primitives shared by the solvers.

use std::f64::consts::PI;

/// Largest rule the Newton construction resolves reliably in double precision.
pub const MAX_NODES: usize = 150;

/// Gauss-Hermite rule normalized for the standard Gaussian:
/// `E[f(Z)] ≈ Σ weights[i] * f(nodes[i])` with `Z ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Builds an `n`-point rule by Newton iteration on the physicists'
    /// Hermite recurrence, then rescales nodes by √2 and weights by 1/√π.
    pub fn new(n: usize) -> Self {
        assert!(
            (1..=MAX_NODES).contains(&n),
            "Gauss-Hermite rule needs between 1 and {MAX_NODES} nodes"
        );
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let pim4 = PI.powf(-0.25);
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..200 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        let sqrt2 = 2f64.sqrt();
        let inv_sqrt_pi = 1.0 / PI.sqrt();
        let mut nodes: Vec<f64> = x.iter().map(|v| v * sqrt2).collect();
        let mut weights: Vec<f64> = w.iter().map(|v| v * inv_sqrt_pi).collect();
        nodes.reverse();
        weights.reverse();
        // the recurrence leaves the middle node of odd rules at ~1e-17
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        let total: f64 = weights.iter().sum();
        for v in &mut weights {
            *v /= total;
        }
        Self { nodes, weights }
    }

    /// Drops nodes whose weight is below `tol` (renormalizing the rest).
    pub fn pruned(&self, tol: f64) -> Self {
        let (nodes, weights): (Vec<f64>, Vec<f64>) = self
            .nodes
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w >= tol)
            .map(|(&x, &w)| (x, w))
            .unzip();
        let total: f64 = weights.iter().sum();
        Self {
            nodes,
            weights: weights.into_iter().map(|w| w / total).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn max_node(&self) -> f64 {
        self.nodes.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// `E[f(Z)]` for standard Gaussian `Z`.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// `E[log cosh(c Z)]` by an `nodes`-point Gauss-Hermite rule.
pub fn expected_log_cosh(c: f64, nodes: usize) -> f64 {
    let c = c.abs();
    if c == 0.0 {
        return 0.0;
    }
    let gh = GaussHermite::new(nodes);
    gh.expect(|z| log_cosh(c * z))
}

#[inline]
pub fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Numerically stable `log Σ w_i exp(v_i)`.
pub fn log_sum_exp_weighted(values: &[f64], weights: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = values
        .iter()
        .zip(weights)
        .map(|(v, w)| w * (v - max).exp())
        .sum();
    max + s.ln()
}

/// Streaming log-sum-exp accumulator; never materializes the terms.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }
}

impl LogSumExp {
    #[inline]
    pub fn push(&mut self, v: f64) {
        if v <= self.max {
            self.sum += (v - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        }
    }

    pub fn merge(&mut self, other: &LogSumExp) {
        if other.max == f64::NEG_INFINITY {
            return;
        }
        if other.max <= self.max {
            self.sum += other.sum * (other.max - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - other.max).exp() + other.sum;
            self.max = other.max;
        }
    }

    pub fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

/// Natural cubic spline on a uniform grid `x0 + i*h`, `i = 0..n`.
#[derive(Debug, Clone)]
pub struct UniformSpline {
    x0: f64,
    h: f64,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl UniformSpline {
    pub fn new(x0: f64, h: f64, y: Vec<f64>) -> Self {
        let n = y.len();
        assert!(n >= 2, "spline needs two points");
        let mut m = vec![0.0; n];
        if n > 2 {
            // tridiagonal system for interior second derivatives (natural ends)
            let k = n - 2;
            let mut c = vec![0.0; k];
            let mut d = vec![0.0; k];
            let inv_h2 = 6.0 / (h * h);
            for i in 0..k {
                let rhs = (y[i] - 2.0 * y[i + 1] + y[i + 2]) * inv_h2;
                let denom = if i == 0 { 4.0 } else { 4.0 - c[i - 1] };
                c[i] = 1.0 / denom;
                d[i] = if i == 0 { rhs / denom } else { (rhs - d[i - 1]) / denom };
            }
            m[k] = d[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = d[i] - c[i] * m[i + 2];
            }
        }
        Self { x0, h, y, m }
    }

    pub fn x_min(&self) -> f64 {
        self.x0
    }

    pub fn x_max(&self) -> f64 {
        self.x0 + self.h * (self.y.len() - 1) as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    /// Evaluates inside the grid; callers handle extrapolation.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        let s = (x - self.x0) / self.h;
        let i = (s.floor() as isize).clamp(0, n as isize - 2) as usize;
        let t = s - i as f64;
        let u = 1.0 - t;
        let h2 = self.h * self.h / 6.0;
        u * self.y[i]
            + t * self.y[i + 1]
            + h2 * ((u * u * u - u) * self.m[i] + (t * t * t - t) * self.m[i + 1])
    }

    /// First derivative of the interpolant.
    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        let n = self.y.len();
        let s = (x - self.x0) / self.h;
        let i = (s.floor() as isize).clamp(0, n as isize - 2) as usize;
        let t = s - i as f64;
        let u = 1.0 - t;
        (self.y[i + 1] - self.y[i]) / self.h
            + self.h / 6.0 * (-(3.0 * u * u - 1.0) * self.m[i] + (3.0 * t * t - 1.0) * self.m[i + 1])
    }
}

/// Trapezoid rule on arbitrary abscissae.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gauss_hermite_moments() {
        for n in [5, 20, 40, 80] {
            let gh = GaussHermite::new(n);
            assert_abs_diff_eq!(gh.expect(|_| 1.0), 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(gh.expect(|z| z), 0.0, epsilon = 1e-13);
            assert_abs_diff_eq!(gh.expect(|z| z * z), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(gh.expect(|z| z.powi(4)), 3.0, epsilon = 1e-11);
        }
        let gh = GaussHermite::new(40);
        assert_abs_diff_eq!(gh.expect(f64::cos), (-0.5f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn nodes_sorted_and_symmetric() {
        let gh = GaussHermite::new(41);
        assert!(gh.nodes.windows(2).all(|w| w[0] < w[1]));
        for i in 0..41 {
            assert_abs_diff_eq!(gh.nodes[i], -gh.nodes[40 - i], epsilon = 1e-12);
        }
        assert_eq!(gh.nodes[20], 0.0);
    }

    #[test]
    fn log_cosh_is_stable() {
        assert_abs_diff_eq!(log_cosh(0.0), 0.0, epsilon = 1e-16);
        assert_abs_diff_eq!(log_cosh(1.0), 1f64.cosh().ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(log_cosh(800.0), 800.0 - std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn streaming_lse_matches_direct() {
        let vals = [0.3, -2.0, 5.0, 4.9, -100.0];
        let mut acc = LogSumExp::default();
        for v in vals {
            acc.push(v);
        }
        let direct = vals.iter().map(|v| v.exp()).sum::<f64>().ln();
        assert_abs_diff_eq!(acc.value(), direct, epsilon = 1e-13);
        let mut a = LogSumExp::default();
        let mut b = LogSumExp::default();
        a.push(1.0);
        b.push(2.0);
        a.merge(&b);
        assert_abs_diff_eq!(a.value(), (1f64.exp() + 2f64.exp()).ln(), epsilon = 1e-14);
    }

    #[test]
    fn spline_is_fourth_order() {
        let f = |x: f64| (0.7 * x).sin();
        let err = |h: f64| {
            let n = (4.0 / h).round() as usize + 1;
            let y = (0..n).map(|i| f(-2.0 + i as f64 * h)).collect();
            let s = UniformSpline::new(-2.0, h, y);
            (0..200)
                .map(|k| -1.0 + k as f64 * 0.01 + 0.00317)
                .map(|x| (s.eval(x) - f(x)).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(0.1), err(0.05));
        assert!(e1 < 1e-5, "{e1}");
        assert!(e2 < e1 / 10.0, "{e1} {e2}");
    }
}
