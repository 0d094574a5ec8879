//! One-dimensional quadrature helpers and unit-sphere constants.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// `|∂B₁| = 2π^{n/2} / Γ(n/2)`.
pub fn sphere_area(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidDimension(n));
    }
    Ok(2.0 * PI.powf(n as f64 / 2.0) / gamma_half(n))
}

/// `|B₁| = |∂B₁| / n`.
pub fn ball_volume(n: usize) -> Result<f64> {
    Ok(sphere_area(n)? / n as f64)
}

/// `∫_{B₁} |x|² dx = |∂B₁| / (n + 2)`.
pub fn ball_second_moment(n: usize) -> Result<f64> {
    Ok(sphere_area(n)? / (n + 2) as f64)
}

/// Γ(m/2) for integer m ≥ 1, by the half-integer recursion.
pub(crate) fn gamma_half(m: usize) -> f64 {
    let (mut acc, mut k) = if m % 2 == 0 { (1.0, 2) } else { (PI.sqrt(), 1) };
    // Γ(k/2 + 1) = (k/2) Γ(k/2)
    while k < m {
        acc *= k as f64 / 2.0;
        k += 2;
    }
    acc
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_m.
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(m, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Fixed Gauss–Legendre rule mapped onto `[a, b]`.
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(m: usize) -> Self {
        let (nodes, weights) = gauss_legendre(m);
        GaussRule { nodes, weights }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Integrates a vector-valued integrand, accumulating into `out`.
    pub fn integrate_into<F: FnMut(f64, &mut [f64])>(
        &self,
        a: f64,
        b: f64,
        out: &mut [f64],
        mut f: F,
    ) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut buf = vec![0.0; out.len()];
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            buf.iter_mut().for_each(|v| *v = 0.0);
            f(mid + half * x, &mut buf);
            for (o, v) in out.iter_mut().zip(&buf) {
                *o += w * half * v;
            }
        }
    }
}

/// Adaptive Gauss–Kronrod-style bisection using two nested Gauss rules on
/// a vector-valued integrand. Stops when the coarse and fine estimates agree
/// to `tol` (absolute, max-norm) or `max_depth` is reached.
pub fn adaptive_vec<F>(a: f64, b: f64, dim: usize, tol: f64, max_depth: usize, f: &F) -> Vec<f64>
where
    F: Fn(f64, &mut [f64]),
{
    let coarse = GaussRule::new(8);
    let fine = GaussRule::new(16);
    let mut out = vec![0.0; dim];
    let mut stack = vec![(a, b, 0usize)];
    while let Some((lo, hi, depth)) = stack.pop() {
        let mut c = vec![0.0; dim];
        let mut g = vec![0.0; dim];
        coarse.integrate_into(lo, hi, &mut c, f);
        fine.integrate_into(lo, hi, &mut g, f);
        let err = c
            .iter()
            .zip(&g)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let local_tol = tol * (hi - lo) / (b - a);
        if err <= local_tol || depth >= max_depth {
            for (o, v) in out.iter_mut().zip(&g) {
                *o += v;
            }
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    out
}

/// Composite trapezoid integral of samples on a (possibly non-uniform) grid.
pub fn trapezoid(t: &[f64], values: &[f64]) -> f64 {
    t.windows(2)
        .zip(values.windows(2))
        .map(|(tt, vv)| 0.5 * (tt[1] - tt[0]) * (vv[0] + vv[1]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sphere_areas() {
        assert_relative_eq!(sphere_area(2).unwrap(), 2.0 * PI, max_relative = 1e-15);
        assert_relative_eq!(sphere_area(3).unwrap(), 4.0 * PI, max_relative = 1e-15);
        assert_relative_eq!(sphere_area(4).unwrap(), 2.0 * PI * PI, max_relative = 1e-15);
        assert_relative_eq!(
            sphere_area(5).unwrap(),
            8.0 * PI * PI / 3.0,
            max_relative = 1e-14
        );
        assert_eq!(sphere_area(1), Err(Error::InvalidDimension(1)));
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        for m in [1, 2, 5, 16, 48] {
            let rule = GaussRule::new(m);
            for deg in 0..(2 * m) {
                let got = rule.integrate(-1.0, 1.0, |x| x.powi(deg as i32));
                let want = if deg % 2 == 0 { 2.0 / (deg + 1) as f64 } else { 0.0 };
                assert!((got - want).abs() < 1e-13, "m={m} deg={deg}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn adaptive_handles_sqrt_endpoint() {
        let got = adaptive_vec(0.0, 1.0, 1, 1e-13, 40, &|x, out| out[0] = x.powf(1.5));
        assert!((got[0] - 0.4).abs() < 1e-12);
    }
}
