use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense symmetric `n × n` matrix, row-major. Used for the inactive-set
/// second moments `∫ x ⊗ x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymMat {
    n: usize,
    data: Vec<f64>,
}

impl SymMat {
    pub fn zeros(n: usize) -> Self {
        SymMat {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds from a dense row-major slice. Fails if the input is asymmetric
    /// beyond `tol` (absolute).
    pub fn from_dense(n: usize, data: &[f64], tol: f64) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::InvalidArgument(format!(
                "expected {} entries, got {}",
                n * n,
                data.len()
            )));
        }
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (data[i * n + j], data[j * n + i]);
                if (a - b).abs() > tol {
                    return Err(Error::InvalidArgument(format!(
                        "matrix not symmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
                out.data[i * n + j] = 0.5 * (a + b);
            }
        }
        Ok(out)
    }

    /// `x ⊗ x`.
    pub fn outer(x: &[f64]) -> Self {
        let n = x.len();
        let mut m = Self::zeros(n);
        m.add_outer(x, 1.0);
        m
    }

    pub fn add_outer(&mut self, x: &[f64], weight: f64) {
        let n = self.n;
        for i in 0..n {
            let wi = weight * x[i];
            for j in 0..n {
                self.data[i * n + j] += wi * x[j];
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.data[i * self.n + i]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        SymMat {
            n: self.n,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &SymMat, weight: f64) {
        debug_assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += weight * b;
        }
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.data[i * n + j] - self.data[j * n + i]).abs());
            }
        }
        worst
    }

    /// Smallest eigenvalue lower bound via Gershgorin discs; exact enough
    /// to flag gross PSD violations.
    pub fn min_eigen_lower_bound(&self) -> f64 {
        let n = self.n;
        (0..n)
            .map(|i| {
                let off: f64 = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| self.data[i * n + j].abs())
                    .sum();
                self.data[i * n + i] - off
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Trace-free part `M − (tr M / n) I`.
    pub fn trace_free(&self) -> TraceFreeSym {
        TraceFreeSym::from_sym_projected(self)
    }
}

/// An element of `S₀`: symmetric, trace-free `n × n` matrix stored as its
/// upper triangle (row-major, diagonal included).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceFreeSym {
    n: usize,
    upper: Vec<f64>,
}

pub(crate) fn upper_len(n: usize) -> usize {
    n * (n + 1) / 2
}

fn upper_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // rows 0..i contribute n, n-1, ..., n-i+1 entries
    i * n - i * i.saturating_sub(1) / 2 + (j - i)
}

impl TraceFreeSym {
    pub fn zeros(n: usize) -> Self {
        TraceFreeSym {
            n,
            upper: vec![0.0; upper_len(n)],
        }
    }

    /// Builds from an upper-triangle coefficient list. The trace must vanish
    /// to `1e-12 · max(1, ‖B‖_F)`; the residual trace is then removed exactly.
    pub fn from_upper(n: usize, upper: &[f64]) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDimension(n));
        }
        if upper.len() != upper_len(n) {
            return Err(Error::InvalidArgument(format!(
                "upper triangle of a {n}x{n} matrix has {} entries, got {}",
                upper_len(n),
                upper.len()
            )));
        }
        if upper.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite matrix entry".into()));
        }
        let mut b = TraceFreeSym {
            n,
            upper: upper.to_vec(),
        };
        let tr = b.raw_trace();
        if tr.abs() > 1e-12 * b.frobenius_norm().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "matrix is not trace-free (trace {tr:.3e})"
            )));
        }
        b.enforce_trace_free();
        Ok(b)
    }

    /// Builds from a dense symmetric row-major matrix, projecting out the
    /// trace. Asymmetry beyond `1e-8` is rejected.
    pub fn from_dense_projected(n: usize, data: &[f64]) -> Result<Self> {
        let m = SymMat::from_dense(n, data, 1e-8)?;
        Ok(Self::from_sym_projected(&m))
    }

    pub(crate) fn from_sym_projected(m: &SymMat) -> Self {
        let n = m.dim();
        let mut upper = Vec::with_capacity(upper_len(n));
        for i in 0..n {
            for j in i..n {
                upper.push(0.5 * (m.get(i, j) + m.get(j, i)));
            }
        }
        let mut b = TraceFreeSym { n, upper };
        b.enforce_trace_free();
        b
    }

    pub fn diag(values: &[f64]) -> Result<Self> {
        let n = values.len();
        let mut upper = vec![0.0; upper_len(n)];
        for (i, v) in values.iter().enumerate() {
            upper[upper_index(n, i, i)] = *v;
        }
        Self::from_upper(n, &upper)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[upper_index(self.n, i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = upper_index(self.n, i, j);
        self.upper[k] = v;
    }

    fn raw_trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn trace(&self) -> f64 {
        self.raw_trace()
    }

    fn enforce_trace_free(&mut self) {
        let shift = self.raw_trace() / self.n as f64;
        if shift != 0.0 {
            for i in 0..self.n {
                let k = upper_index(self.n, i, i);
                self.upper[k] -= shift;
            }
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = self.get(i, j);
            }
        }
        out
    }

    /// Frobenius inner product `B : C = tr(BC)`.
    pub fn dot(&self, other: &TraceFreeSym) -> f64 {
        debug_assert_eq!(self.n, other.n);
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            for j in i..n {
                let k = upper_index(n, i, j);
                let w = if i == j { 1.0 } else { 2.0 };
                acc += w * self.upper[k] * other.upper[k];
            }
        }
        acc
    }

    /// `B : M` against a full symmetric matrix.
    pub fn dot_sym(&self, m: &SymMat) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += self.get(i, j) * m.get(i, j);
            }
        }
        acc
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = TraceFreeSym {
            n: self.n,
            upper: self.upper.iter().map(|v| v * s).collect(),
        };
        out.enforce_trace_free();
        out
    }

    pub fn add(&self, other: &TraceFreeSym) -> Self {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &TraceFreeSym) -> Self {
        self.axpy(-1.0, other)
    }

    /// `self + a · other`.
    pub fn axpy(&self, a: f64, other: &TraceFreeSym) -> Self {
        debug_assert_eq!(self.n, other.n);
        let mut out = TraceFreeSym {
            n: self.n,
            upper: self
                .upper
                .iter()
                .zip(&other.upper)
                .map(|(x, y)| x + a * y)
                .collect(),
        };
        out.enforce_trace_free();
        out
    }

    /// `x · B x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            acc += self.get(i, i) * x[i] * x[i];
            for j in (i + 1)..n {
                acc += 2.0 * self.get(i, j) * x[i] * x[j];
            }
        }
        acc
    }

    /// `B x` written into `out`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            out[i] = (0..n).map(|j| self.get(i, j) * x[j]).sum();
        }
    }

    pub fn is_finite(&self) -> bool {
        self.upper.iter().all(|v| v.is_finite())
    }
}
