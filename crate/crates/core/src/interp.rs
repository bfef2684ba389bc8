//! Natural cubic splines and bilinear interpolation on a periodic grid.

use crate::error::{Error, Result};

/// Natural cubic spline through (x_i, y_i) with strictly increasing x.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::Invalid("spline needs >= 2 points and matching lengths".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("spline abscissae must be strictly increasing".into()));
        }
        // Second derivatives by the tridiagonal (Thomas) solve.
        let mut m = vec![0.0; n];
        if n > 2 {
            let mut c = vec![0.0; n];
            let mut d = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                let rhs = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
                let diag = 2.0 * (h0 + h1) - h0 * c[i - 1];
                c[i] = h1 / diag;
                d[i] = (rhs - h0 * d[i - 1]) / diag;
            }
            for i in (1..n - 1).rev() {
                m[i] = d[i] - c[i] * m[i + 1];
            }
        }
        Ok(CubicSpline { x: x.to_vec(), y: y.to_vec(), m })
    }

    /// Value at `t`; outside the knots the end cubic is continued linearly.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let i = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        if t < self.x[0] || t > self.x[n - 1] {
            let slope = (self.y[i + 1] - self.y[i]) / h - h * (2.0 * self.m[i] + self.m[i + 1]) / 6.0;
            if t < self.x[0] {
                return self.y[0] + slope * (t - self.x[0]);
            }
            let end_slope = (self.y[i + 1] - self.y[i]) / h + h * (self.m[i] + 2.0 * self.m[i + 1]) / 6.0;
            return self.y[n - 1] + end_slope * (t - self.x[n - 1]);
        }
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

/// Values on a rectangular (x, θ) grid, θ periodic with period 2π.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicGrid {
    pub x: Vec<f64>,
    pub theta: Vec<f64>,
    /// values[i][j] at (x[i], theta[j]).
    pub values: Vec<Vec<f64>>,
}

impl PeriodicGrid {
    pub fn new(x: Vec<f64>, theta: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if x.is_empty() || theta.is_empty() {
            return Err(Error::Invalid("grid axes must be non-empty".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) || theta.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("grid axes must be strictly increasing".into()));
        }
        let span = theta[theta.len() - 1] - theta[0];
        if span >= 2.0 * std::f64::consts::PI {
            return Err(Error::Invalid("theta axis must cover less than one period".into()));
        }
        if values.len() != x.len() || values.iter().any(|r| r.len() != theta.len()) {
            return Err(Error::Invalid("grid values do not match axis lengths".into()));
        }
        Ok(PeriodicGrid { x, theta, values })
    }

    /// Bilinear interpolation; x is clamped to the grid, θ wraps.
    pub fn eval(&self, x: f64, theta: f64) -> f64 {
        let (i0, i1, fx) = bracket(&self.x, x);
        let tau = 2.0 * std::f64::consts::PI;
        let t0 = self.theta[0];
        let t = t0 + (theta - t0).rem_euclid(tau);
        let nt = self.theta.len();
        let (j0, j1, ft) = if t > self.theta[nt - 1] {
            let gap = t0 + tau - self.theta[nt - 1];
            (nt - 1, 0, (t - self.theta[nt - 1]) / gap)
        } else {
            bracket(&self.theta, t)
        };
        let v = &self.values;
        let a = v[i0][j0] * (1.0 - ft) + v[i0][j1] * ft;
        let b = v[i1][j0] * (1.0 - ft) + v[i1][j1] * ft;
        a * (1.0 - fx) + b * fx
    }
}

fn bracket(axis: &[f64], t: f64) -> (usize, usize, f64) {
    let n = axis.len();
    if n == 1 || t <= axis[0] {
        return (0, 0, 0.0);
    }
    if t >= axis[n - 1] {
        return (n - 1, n - 1, 0.0);
    }
    let k = axis.partition_point(|&v| v <= t);
    let (a, b) = (axis[k - 1], axis[k]);
    (k - 1, k, (t - a) / (b - a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn spline_reproduces_lines_and_converges() {
        let x: Vec<f64> = (0..8).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let s = CubicSpline::new(&x, &y).unwrap();
        for t in [-0.5, 0.3, 1.7, 3.5, 4.2] {
            assert!((s.eval(t) - (3.0 * t - 1.0)).abs() < 1e-12);
        }
        let x: Vec<f64> = (0..=40).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
        let s = CubicSpline::new(&x, &y).unwrap();
        for t in [0.55, 1.234, 2.9, 3.71] {
            assert!((s.eval(t) - f64::sin(t)).abs() < 1e-5);
        }
        assert!(CubicSpline::new(&[0.0, 0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn bilinear_periodic() {
        let x = vec![0.0, 1.0];
        let theta: Vec<f64> = (0..4).map(|j| j as f64 * PI / 2.0).collect();
        let values = vec![vec![0.0, 1.0, 2.0, 3.0], vec![10.0, 11.0, 12.0, 13.0]];
        let g = PeriodicGrid::new(x, theta, values).unwrap();
        assert_eq!(g.eval(0.0, PI / 2.0), 1.0);
        assert!((g.eval(0.5, PI / 4.0) - 5.5).abs() < 1e-12);
        // Wrap between the last node and 2π.
        assert!((g.eval(0.0, 1.75 * PI) - 1.5).abs() < 1e-12);
        assert!((g.eval(0.0, -PI / 4.0) - 1.5).abs() < 1e-12);
        assert_eq!(g.eval(5.0, 0.0), 10.0);
    }
}
