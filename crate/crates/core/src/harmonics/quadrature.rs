use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;

use crate::error::{Error, Result};
use crate::quad::{gauss_legendre, sphere_area};

/// Numerical rule for `∫_{∂B₁} f dS`.
#[derive(Clone, Debug)]
pub struct SphereQuadrature {
    n: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Highest polynomial degree integrated exactly; `None` for the
    /// statistical rule used when `n ≥ 4`.
    exact_degree: Option<usize>,
}

impl SphereQuadrature {
    /// Trapezoid rule on the circle with `m` equispaced nodes; exact for
    /// trigonometric polynomials of degree `< m`.
    pub fn circle(m: usize) -> Result<Self> {
        if m < 3 {
            return Err(Error::InvalidArgument(format!("circle rule needs >= 3 nodes, got {m}")));
        }
        let mut nodes = Vec::with_capacity(2 * m);
        for k in 0..m {
            let th = 2.0 * PI * k as f64 / m as f64;
            nodes.push(th.cos());
            nodes.push(th.sin());
        }
        Ok(SphereQuadrature {
            n: 2,
            nodes,
            weights: vec![2.0 * PI / m as f64; m],
            exact_degree: Some(m - 1),
        })
    }

    /// Gauss–Legendre in `cos θ` times trapezoid in azimuth on `S²`.
    pub fn gauss_product(polar: usize, azimuth: usize) -> Result<Self> {
        if polar < 2 || azimuth < 3 {
            return Err(Error::InvalidArgument(format!(
                "product rule needs >= 2 polar and >= 3 azimuthal nodes, got {polar}x{azimuth}"
            )));
        }
        let (zs, zw) = gauss_legendre(polar);
        let mut nodes = Vec::with_capacity(3 * polar * azimuth);
        let mut weights = Vec::with_capacity(polar * azimuth);
        let dphi = 2.0 * PI / azimuth as f64;
        for (z, wz) in zs.iter().zip(&zw) {
            let s = (1.0 - z * z).sqrt();
            for k in 0..azimuth {
                let phi = dphi * k as f64;
                nodes.extend_from_slice(&[s * phi.cos(), s * phi.sin(), *z]);
                weights.push(wz * dphi);
            }
        }
        Ok(SphereQuadrature {
            n: 3,
            nodes,
            weights,
            exact_degree: Some((2 * polar - 1).min(azimuth - 1)),
        })
    }

    /// Fixed-seed antipodally symmetric Monte Carlo rule for general `n`.
    /// Odd moments vanish exactly; even moments carry `O(count^{-1/2})`
    /// statistical error.
    pub fn monte_carlo(n: usize, count: usize, seed: u64) -> Result<Self> {
        let area = sphere_area(n)?;
        let pairs = count.div_ceil(2).max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nodes = Vec::with_capacity(2 * pairs * n);
        let mut x = vec![0.0; n];
        for _ in 0..pairs {
            loop {
                for v in x.iter_mut() {
                    *v = standard_normal(&mut rng);
                }
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if r > 1e-12 {
                    x.iter_mut().for_each(|v| *v /= r);
                    break;
                }
            }
            nodes.extend_from_slice(&x);
            nodes.extend(x.iter().map(|v| -v));
        }
        let count = 2 * pairs;
        Ok(SphereQuadrature {
            n,
            nodes,
            weights: vec![area / count as f64; count],
            exact_degree: None,
        })
    }

    /// Default rule for the dimension: 1024-node circle, 64×128 product, or
    /// 8192-node Monte Carlo.
    pub fn default_for(n: usize) -> Result<Self> {
        match n {
            0 | 1 => Err(Error::InvalidDimension(n)),
            2 => Self::circle(1024),
            3 => Self::gauss_product(64, 128),
            _ => Self::monte_carlo(n, 8192, 0x5EED_5F3E),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.n..(i + 1) * self.n]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.nodes.chunks_exact(self.n)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn exact_degree(&self) -> Option<usize> {
        self.exact_degree
    }

    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        self.nodes()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }
}

/// Box–Muller; avoids pulling in a distributions crate for one call site.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::fourth_moment;

    #[test]
    fn weights_sum_to_area() {
        for q in [
            SphereQuadrature::circle(64).unwrap(),
            SphereQuadrature::gauss_product(16, 32).unwrap(),
            SphereQuadrature::monte_carlo(4, 1000, 3).unwrap(),
        ] {
            let area = sphere_area(q.dim()).unwrap();
            let total: f64 = q.weights().iter().sum();
            assert!((total - area).abs() <= 1e-10 * area);
        }
    }

    #[test]
    fn exact_fourth_moments() {
        for q in [
            SphereQuadrature::circle(64).unwrap(),
            SphereQuadrature::gauss_product(16, 32).unwrap(),
        ] {
            let n = q.dim();
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            let got = q.integrate(|x| x[i] * x[j] * x[k] * x[l]);
                            let want = fourth_moment(i, j, k, l, n).unwrap();
                            assert!((got - want).abs() < 1e-13, "{n}: ({i}{j}{k}{l})");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn nodes_on_sphere() {
        let q = SphereQuadrature::monte_carlo(5, 100, 1).unwrap();
        for x in q.nodes() {
            let r: f64 = x.iter().map(|v| v * v).sum();
            assert!((r - 1.0).abs() < 1e-14);
        }
    }
}
