//! Trace-free quadratic harmonics on the unit sphere: the basis of `S₀`,
//! the sphere Gram form, and the `L²(∂B₁)` projection defining `B(t)`.

mod quadrature;
mod sym;

pub use quadrature::SphereQuadrature;
pub use sym::{SymMat, TraceFreeSym};

use crate::error::{Error, Result};
use crate::quad::sphere_area;

/// `∫_{∂B₁} x_i x_j x_k x_l dS`.
pub fn fourth_moment(i: usize, j: usize, k: usize, l: usize, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidDimension(n));
    }
    for idx in [i, j, k, l] {
        if idx >= n {
            return Err(Error::InvalidIndex { index: idx, dim: n });
        }
    }
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let pairs = d(i, j) * d(k, l) + d(i, k) * d(j, l) + d(i, l) * d(j, k);
    Ok(sphere_area(n)? / (n * (n + 2)) as f64 * pairs)
}

/// `c_n = |∂B₁| / (2n(n+2))`, the Gram constant of the `ψ_B` family.
pub fn gram_constant(n: usize) -> Result<f64> {
    Ok(sphere_area(n)? / (2 * n * (n + 2)) as f64)
}

/// `κ_n = n(n+2) / |∂B₁|`.
pub fn kappa(n: usize) -> Result<f64> {
    Ok((n * (n + 2)) as f64 / sphere_area(n)?)
}

/// `∫_{∂B₁} ψ_B ψ_C dS = c_n B:C`.
pub fn gram_pair(b: &TraceFreeSym, c: &TraceFreeSym) -> Result<f64> {
    if b.dim() != c.dim() {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: {} vs {}",
            b.dim(),
            c.dim()
        )));
    }
    Ok(gram_constant(b.dim())? * b.dot(c))
}

/// `p₀(x) = |x|²/(2n)`.
pub fn p0(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / (2 * x.len()) as f64
}

/// `ψ_B(x) = ½ x·Bx`.
pub fn psi(b: &TraceFreeSym, x: &[f64]) -> f64 {
    0.5 * b.quad_form(x)
}

/// The quadratic blow-up profile `q_B = p₀ + ψ_B = ½ x·Ax` with `A = I/n + B`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticProfile {
    b: TraceFreeSym,
}

impl QuadraticProfile {
    pub fn new(b: TraceFreeSym) -> Self {
        QuadraticProfile { b }
    }

    pub fn coefficient(&self) -> &TraceFreeSym {
        &self.b
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        p0(x) + psi(&self.b, x)
    }

    /// `∇q_B = A x`.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        self.b.apply(x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o += xi / n as f64;
        }
    }

    /// Dense `A = I/n + B`.
    pub fn hessian(&self) -> Vec<f64> {
        let n = self.b.dim();
        let mut a = self.b.to_dense();
        for i in 0..n {
            a[i * n + i] += 1.0 / n as f64;
        }
        a
    }

    pub fn laplacian(&self) -> f64 {
        let n = self.b.dim();
        (0..n).map(|i| self.hessian()[i * n + i]).sum()
    }
}

/// Frobenius-orthonormal basis `E_1..E_N` of `S₀`, `N = n(n+1)/2 − 1`.
///
/// Ordering: off-diagonal elements `(e_i⊗e_j + e_j⊗e_i)/√2` for `i < j` in
/// row-major order, then diagonal trace-free elements obtained by
/// Gram–Schmidt on `diag(e_k − e_{k+1})`, `k = 0..n−2`.
#[derive(Clone, Debug)]
pub struct HarmonicBasis {
    n: usize,
    elements: Vec<TraceFreeSym>,
    gram_constant: f64,
}

impl HarmonicBasis {
    pub fn new(n: usize) -> Result<Self> {
        let gram_constant = gram_constant(n)?;
        let mut elements = Vec::with_capacity(n * (n + 1) / 2 - 1);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for i in 0..n {
            for j in (i + 1)..n {
                let mut e = TraceFreeSym::zeros(n);
                e.set(i, j, s);
                elements.push(e);
            }
        }
        let mut diagonal: Vec<TraceFreeSym> = Vec::new();
        for k in 0..(n - 1) {
            let mut d = vec![0.0; n];
            d[k] = 1.0;
            d[k + 1] = -1.0;
            let mut v = TraceFreeSym::diag(&d)?;
            for q in &diagonal {
                v = v.axpy(-v.dot(q), q);
            }
            let norm = v.frobenius_norm();
            diagonal.push(v.scaled(1.0 / norm));
        }
        elements.extend(diagonal);
        Ok(HarmonicBasis {
            n,
            elements,
            gram_constant,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[TraceFreeSym] {
        &self.elements
    }

    pub fn gram_constant(&self) -> f64 {
        self.gram_constant
    }

    /// Coordinates `b_j = B : E_j`.
    pub fn coordinates(&self, b: &TraceFreeSym) -> Vec<f64> {
        self.elements.iter().map(|e| e.dot(b)).collect()
    }

    pub fn combine(&self, coeffs: &[f64]) -> TraceFreeSym {
        let mut out = TraceFreeSym::zeros(self.n);
        for (c, e) in coeffs.iter().zip(&self.elements) {
            out = out.axpy(*c, e);
        }
        out
    }
}

/// Precomputed projection `v ↦ Π(v)`: tabulates `ψ_{E_i}` on the
/// quadrature nodes and factors the quadrature Gram matrix once.
#[derive(Clone, Debug)]
pub struct Projector {
    basis: HarmonicBasis,
    quadrature: SphereQuadrature,
    /// `w_q ψ_{E_i}(x_q)`, row per basis element.
    weighted_psi: Vec<Vec<f64>>,
    p0_nodes: Vec<f64>,
    gram: Vec<f64>,
    cholesky: Vec<f64>,
}

impl Projector {
    pub fn new(basis: HarmonicBasis, quadrature: SphereQuadrature) -> Result<Self> {
        if basis.dim() != quadrature.dim() {
            return Err(Error::InvalidArgument(format!(
                "basis dimension {} vs quadrature dimension {}",
                basis.dim(),
                quadrature.dim()
            )));
        }
        if let Some(deg) = quadrature.exact_degree() {
            if deg < 4 {
                return Err(Error::InvalidArgument(format!(
                    "projection needs a rule exact to degree 4, got {deg}"
                )));
            }
        }
        let weighted_psi: Vec<Vec<f64>> = basis
            .elements()
            .iter()
            .map(|e| {
                quadrature
                    .nodes()
                    .zip(quadrature.weights())
                    .map(|(x, w)| w * psi(e, x))
                    .collect()
            })
            .collect();
        let p0_nodes = quadrature.nodes().map(p0).collect();
        let nb = basis.len();
        let mut gram = vec![0.0; nb * nb];
        for i in 0..nb {
            for j in 0..nb {
                gram[i * nb + j] = quadrature
                    .nodes()
                    .zip(&weighted_psi[i])
                    .map(|(x, wp)| wp * psi(&basis.elements()[j], x))
                    .sum();
            }
        }
        let cholesky = cholesky(&gram, nb).ok_or_else(|| {
            Error::Internal("quadrature Gram matrix is not positive definite".into())
        })?;
        Ok(Projector {
            basis,
            quadrature,
            weighted_psi,
            p0_nodes,
            gram,
            cholesky,
        })
    }

    pub fn for_dimension(n: usize) -> Result<Self> {
        Self::new(HarmonicBasis::new(n)?, SphereQuadrature::default_for(n)?)
    }

    pub fn basis(&self) -> &HarmonicBasis {
        &self.basis
    }

    pub fn quadrature(&self) -> &SphereQuadrature {
        &self.quadrature
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Quadrature Gram matrix `G_ij = Σ w ψ_{E_i} ψ_{E_j}` (row-major).
    pub fn gram(&self) -> &[f64] {
        &self.gram
    }

    /// Sphere moments `m_i(v) = ∫ (v − p₀) ψ_{E_i} dS` of nodal samples.
    pub fn moments(&self, samples: &[f64]) -> Result<Vec<f64>> {
        if samples.len() != self.quadrature.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples, got {}",
                self.quadrature.len(),
                samples.len()
            )));
        }
        if let Some(k) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("sample {k} is not finite")));
        }
        Ok(self
            .weighted_psi
            .iter()
            .map(|row| {
                row.iter()
                    .zip(samples.iter().zip(&self.p0_nodes))
                    .map(|(wp, (v, p))| wp * (v - p))
                    .sum()
            })
            .collect())
    }

    /// `Π(v) = Σ_j b_j E_j` with `b = G⁻¹ m(v)`.
    pub fn project(&self, samples: &[f64]) -> Result<TraceFreeSym> {
        let m = self.moments(samples)?;
        Ok(self.from_moments(&m))
    }

    pub fn from_moments(&self, m: &[f64]) -> TraceFreeSym {
        let b = cholesky_solve(&self.cholesky, self.basis.len(), m);
        self.basis.combine(&b)
    }

    /// Samples `f` on the nodes and projects.
    pub fn project_fn<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> Result<TraceFreeSym> {
        let samples: Vec<f64> = self.quadrature.nodes().map(&mut f).collect();
        self.project(&samples)
    }

    /// Lipschitz constant of `Π` from `L²(∂B₁)` (quadrature norm) to the
    /// Frobenius norm: `‖Π(v) − Π(w)‖_F ≤ L ‖v − w‖_{L²}`, `L = c_n^{-1/2}`
    /// when `G = c_n I`. Computed from the smallest Gram eigenvalue bound.
    pub fn lipschitz_constant(&self) -> f64 {
        // ‖b‖ = ‖G⁻¹ m‖ and m is the L²-inner product against an orthonormal-
        // up-to-G family, so ‖m‖² ≤ λ_max(G)‖v‖², giving ‖b‖ ≤ √λ_max/λ_min ‖v‖.
        let nb = self.basis.len();
        let (lo, hi) = gershgorin(&self.gram, nb);
        hi.sqrt() / lo
    }
}

fn gershgorin(a: &[f64], n: usize) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| a[i * n + j].abs()).sum();
        lo = lo.min(a[i * n + i] - off);
        hi = hi.max(a[i * n + i] + off);
    }
    (lo, hi)
}

fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            if i == j {
                let d = a[i * n + i] - s;
                if d <= 0.0 || !d.is_finite() {
                    return None;
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = (a[i * n + j] - s) / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[f64], n: usize, rhs: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (rhs[i] - s) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * n + i];
    }
    x
}
