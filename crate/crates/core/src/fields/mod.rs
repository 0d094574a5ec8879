//! Evaluable solution fields of `Δu = 1 − χ_Λ`.
//!
//! Two implementations share the [`SolutionField`] interface: exact
//! synthetic fields built from closed-form Newtonian potentials of ball
//! patches, and interpolated grid solutions (see [`crate::solver`]).

mod potential;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::{p0, psi, TraceFreeSym};

pub use potential::ball_potential;
pub(crate) use potential::ball_potential_unchecked;

/// Which identities a field is entitled to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldMode {
    /// `Δu = 1 − χ_Λ` holds exactly, but `∇u` need not vanish on `Λ`.
    Consistency,
    /// A genuine (approximate) solution: additionally `∇u ≈ 0` on `Λ`.
    Solution,
}

/// A ball `B(center, radius)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn center_norm(&self) -> f64 {
        self.center.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let d2: f64 = self
            .center
            .iter()
            .zip(x)
            .map(|(c, xi)| (xi - c) * (xi - c))
            .sum();
        d2 <= self.radius * self.radius
    }

    pub fn scaled(&self, factor: f64) -> Ball {
        Ball {
            center: self.center.iter().map(|c| c * factor).collect(),
            radius: self.radius * factor,
        }
    }
}

/// Common interface of synthetic and grid fields.
pub trait SolutionField: Send + Sync + fmt::Debug {
    fn dimension(&self) -> usize;

    fn mode(&self) -> FieldMode;

    fn in_domain(&self, x: &[f64]) -> bool;

    fn value(&self, x: &[f64]) -> Result<f64>;

    fn gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()>;

    fn inactive(&self, x: &[f64]) -> Result<bool>;

    /// Exact description of the inactive set as disjoint balls, when known.
    fn inactive_balls(&self) -> Option<Vec<Ball>> {
        None
    }

    fn gradient_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.dimension()];
        self.gradient(x, &mut g)?;
        Ok(g)
    }
}

fn domain_error(x: &[f64]) -> Error {
    Error::Domain(format!("{x:?}"))
}

/// Inactive patch of a synthetic configuration.
pub type BallPatch = Ball;

/// Prescribed inactive set (disjoint balls) plus a seed quadratic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchConfig {
    pub dimension: usize,
    pub patches: Vec<BallPatch>,
    /// Upper triangle (row-major, diagonal included) of `B_seed`.
    pub seed: Vec<f64>,
}

impl PatchConfig {
    pub fn seed_matrix(&self) -> Result<TraceFreeSym> {
        TraceFreeSym::from_upper(self.dimension, &self.seed).map_err(|e| Error::config(format!("seed: {e}")))
    }

    /// Checks dimension, patch geometry, and pairwise disjointness.
    pub fn validate(&self) -> Result<()> {
        let n = self.dimension;
        if n < 2 {
            return Err(Error::InvalidDimension(n));
        }
        self.seed_matrix()?;
        for (i, p) in self.patches.iter().enumerate() {
            let fail = |msg: String| Error::Config {
                message: msg,
                patches: vec![i],
            };
            if p.center.len() != n {
                return Err(fail(format!("center has {} coordinates, expected {n}", p.center.len())));
            }
            if p.center.iter().any(|c| !c.is_finite()) || !p.radius.is_finite() || p.radius <= 0.0 {
                return Err(fail("radius must be positive and all entries finite".into()));
            }
            let c = p.center_norm();
            if c + p.radius >= 1.0 {
                return Err(fail(format!(
                    "patch touches the unit sphere (|c| + ρ = {:.6})",
                    c + p.radius
                )));
            }
            if c <= p.radius {
                return Err(fail(format!("patch contains the origin (|c| = {c:.6}, ρ = {:.6})", p.radius)));
            }
        }
        for i in 0..self.patches.len() {
            for j in (i + 1)..self.patches.len() {
                let (a, b) = (&self.patches[i], &self.patches[j]);
                let d: f64 = a
                    .center
                    .iter()
                    .zip(&b.center)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                if d <= a.radius + b.radius {
                    return Err(Error::Config {
                        message: format!("patches overlap (distance {d:.6} <= {:.6})", a.radius + b.radius),
                        patches: vec![i, j],
                    });
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PatchConfig = serde_json::from_str(text).map_err(|e| {
            Error::config(format!("line {} column {}: {e}", e.line(), e.column()))
        })?;
        Ok(cfg)
    }
}

/// Exact field `u = p₀ + ψ_{B_seed} + L·x + K − Σ_j w_j` where `w_j` is the
/// Newtonian potential of patch `j`; `L`, `K` cancel the patches' gradient and
/// value at the origin so that `u(0) = 0`, `∇u(0) = 0`.
#[derive(Clone, Debug)]
pub struct SyntheticSolution {
    config: PatchConfig,
    seed: TraceFreeSym,
    linear_correction: Vec<f64>,
    constant_correction: f64,
}

/// Validates `config` and assembles the synthetic field.
pub fn build_synthetic(config: PatchConfig) -> Result<SyntheticSolution> {
    config.validate()?;
    let n = config.dimension;
    let seed = config.seed_matrix()?;
    let origin = vec![0.0; n];
    let mut linear_correction = vec![0.0; n];
    let mut constant_correction = 0.0;
    let mut g = vec![0.0; n];
    for p in &config.patches {
        constant_correction += ball_potential_unchecked(&p.center, p.radius, &origin, &mut g);
        for (l, gi) in linear_correction.iter_mut().zip(&g) {
            *l += gi;
        }
    }
    Ok(SyntheticSolution {
        config,
        seed,
        linear_correction,
        constant_correction,
    })
}

impl SyntheticSolution {
    pub fn config(&self) -> &PatchConfig {
        &self.config
    }

    pub fn seed(&self) -> &TraceFreeSym {
        &self.seed
    }

    pub fn linear_correction(&self) -> &[f64] {
        &self.linear_correction
    }

    pub fn constant_correction(&self) -> f64 {
        self.constant_correction
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.config.dimension {
            return Err(Error::InvalidArgument(format!(
                "point has {} coordinates, field dimension is {}",
                x.len(),
                self.config.dimension
            )));
        }
        if !self.in_domain(x) {
            return Err(domain_error(x));
        }
        Ok(())
    }
}

impl SolutionField for SyntheticSolution {
    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn mode(&self) -> FieldMode {
        FieldMode::Consistency
    }

    fn in_domain(&self, x: &[f64]) -> bool {
        x.iter().map(|v| v * v).sum::<f64>() <= 1.0 + 1e-9
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let mut g = vec![0.0; x.len()];
        let mut v = p0(x) + psi(&self.seed, x) + self.constant_correction;
        v += self.linear_correction.iter().zip(x).map(|(l, xi)| l * xi).sum::<f64>();
        for p in &self.config.patches {
            v -= ball_potential_unchecked(&p.center, p.radius, x, &mut g);
        }
        Ok(v)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check(x)?;
        let n = x.len();
        self.seed.apply(x, out);
        for i in 0..n {
            out[i] += x[i] / n as f64 + self.linear_correction[i];
        }
        let mut g = vec![0.0; n];
        for p in &self.config.patches {
            ball_potential_unchecked(&p.center, p.radius, x, &mut g);
            for (o, gi) in out.iter_mut().zip(&g) {
                *o -= gi;
            }
        }
        Ok(())
    }

    fn inactive(&self, x: &[f64]) -> Result<bool> {
        self.check(x)?;
        Ok(self.config.patches.iter().any(|p| p.contains(x)))
    }

    fn inactive_balls(&self) -> Option<Vec<Ball>> {
        Some(self.config.patches.clone())
    }
}

/// `u_t(x) = e^{2t}(u(e^{−t}x) − u(0))`.
#[derive(Clone, Debug)]
pub struct Rescaled {
    inner: Arc<dyn SolutionField>,
    t: f64,
    shrink: f64,
    grow: f64,
    grow2: f64,
    base_value: f64,
}

/// Rescales `field` to log-scale `t`. `Λ_t = e^t Λ`.
pub fn rescale(field: Arc<dyn SolutionField>, t: f64) -> Result<Rescaled> {
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("log-scale must be finite, got {t}")));
    }
    let origin = vec![0.0; field.dimension()];
    let base_value = field.value(&origin)?;
    Ok(Rescaled {
        t,
        shrink: (-t).exp(),
        grow: t.exp(),
        grow2: (2.0 * t).exp(),
        base_value,
        inner: field,
    })
}

impl Rescaled {
    pub fn log_scale(&self) -> f64 {
        self.t
    }

    fn pull_back(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| v * self.shrink).collect()
    }
}

impl SolutionField for Rescaled {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn mode(&self) -> FieldMode {
        self.inner.mode()
    }

    fn in_domain(&self, x: &[f64]) -> bool {
        self.inner.in_domain(&self.pull_back(x))
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let y = self.pull_back(x);
        Ok(self.grow2 * (self.inner.value(&y)? - self.base_value))
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let y = self.pull_back(x);
        self.inner.gradient(&y, out)?;
        out.iter_mut().for_each(|g| *g *= self.grow);
        Ok(())
    }

    fn inactive(&self, x: &[f64]) -> Result<bool> {
        self.inner.inactive(&self.pull_back(x))
    }

    fn inactive_balls(&self) -> Option<Vec<Ball>> {
        self.inner
            .inactive_balls()
            .map(|balls| balls.iter().map(|b| b.scaled(self.grow)).collect())
    }
}

/// A bare quadratic profile `q_B` as a field (empty inactive set apart from
/// the origin, which has measure zero).
#[derive(Clone, Debug)]
pub struct QuadraticField {
    b: TraceFreeSym,
    linear: Vec<f64>,
}

impl QuadraticField {
    pub fn new(b: TraceFreeSym) -> Self {
        let n = b.dim();
        QuadraticField { b, linear: vec![0.0; n] }
    }

    /// `q_B + L·x`; violates `∇u(0) = 0` unless `L = 0`, useful for testing
    /// the remainder machinery.
    pub fn with_linear(b: TraceFreeSym, linear: Vec<f64>) -> Self {
        QuadraticField { b, linear }
    }
}

impl SolutionField for QuadraticField {
    fn dimension(&self) -> usize {
        self.b.dim()
    }

    fn mode(&self) -> FieldMode {
        FieldMode::Solution
    }

    fn in_domain(&self, _x: &[f64]) -> bool {
        true
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(p0(x) + psi(&self.b, x) + self.linear.iter().zip(x).map(|(l, v)| l * v).sum::<f64>())
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let n = x.len();
        self.b.apply(x, out);
        for i in 0..n {
            out[i] += x[i] / n as f64 + self.linear[i];
        }
        Ok(())
    }

    fn inactive(&self, _x: &[f64]) -> Result<bool> {
        Ok(false)
    }

    fn inactive_balls(&self) -> Option<Vec<Ball>> {
        Some(Vec::new())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_ball() -> PatchConfig {
        PatchConfig {
            dimension: 2,
            patches: vec![Ball {
                center: vec![0.5, 0.0],
                radius: 0.1,
            }],
            seed: vec![0.0, 0.0, 0.0],
        }
    }

    fn fd_laplacian(f: &dyn SolutionField, x: &[f64], h: f64) -> f64 {
        let n = x.len();
        let u0 = f.value(x).unwrap();
        let mut y = x.to_vec();
        let mut acc = 0.0;
        for i in 0..n {
            y[i] = x[i] + h;
            acc += f.value(&y).unwrap();
            y[i] = x[i] - h;
            acc += f.value(&y).unwrap();
            y[i] = x[i];
            acc -= 2.0 * u0;
        }
        acc / (h * h)
    }

    #[test]
    fn empty_config_is_p0() {
        let f = build_synthetic(PatchConfig {
            dimension: 3,
            patches: vec![],
            seed: vec![0.0; 6],
        })
        .unwrap();
        let x = [0.3, -0.2, 0.5];
        assert_eq!(f.value(&x).unwrap(), p0(&x));
    }

    #[test]
    fn single_ball_laplacian() {
        let f = build_synthetic(single_ball()).unwrap();
        assert!(fd_laplacian(&f, &[0.5, 0.0], 1e-4).abs() < 1e-6);
        assert!((fd_laplacian(&f, &[0.0, 0.5], 1e-4) - 1.0).abs() < 1e-6);
        assert!(f.inactive(&[0.55, 0.0]).unwrap());
        assert!(!f.inactive(&[0.0, 0.5]).unwrap());
    }

    #[test]
    fn normalization_at_origin() {
        let f = build_synthetic(single_ball()).unwrap();
        assert_eq!(f.value(&[0.0, 0.0]).unwrap(), 0.0);
        let g = f.gradient_vec(&[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let cfg = PatchConfig {
            dimension: 3,
            patches: vec![
                Ball { center: vec![0.4, 0.1, 0.0], radius: 0.15 },
                Ball { center: vec![-0.2, -0.3, 0.3], radius: 0.1 },
            ],
            seed: vec![0.2, 0.1, 0.0, -0.3, 0.05, 0.1],
        };
        let f = build_synthetic(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.55..0.55)).collect();
            let g = f.gradient_vec(&x).unwrap();
            let mut y = x.clone();
            for i in 0..3 {
                y[i] = x[i] + h;
                let up = f.value(&y).unwrap();
                y[i] = x[i] - h;
                let dn = f.value(&y).unwrap();
                y[i] = x[i];
                assert!(((up - dn) / (2.0 * h) - g[i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn validation_names_patches() {
        let mut cfg = single_ball();
        cfg.patches.push(Ball { center: vec![0.55, 0.05], radius: 0.05 });
        match build_synthetic(cfg) {
            Err(Error::Config { patches, .. }) => assert_eq!(patches, vec![0, 1]),
            other => panic!("unexpected {other:?}"),
        }
        let mut cfg = single_ball();
        cfg.patches[0].center = vec![0.05, 0.0];
        assert!(matches!(build_synthetic(cfg), Err(Error::Config { patches, .. }) if patches == vec![0]));
        let mut cfg = single_ball();
        cfg.patches[0].center = vec![0.95, 0.0];
        assert!(matches!(build_synthetic(cfg), Err(Error::Config { .. })));
    }

    #[test]
    fn json_roundtrip_and_strictness() {
        let text = r#"{"dimension":2,"patches":[{"center":[0.5,0.0],"radius":0.1}],"seed":[0.0,0.0,0.0]}"#;
        assert_eq!(PatchConfig::from_json(text).unwrap(), single_ball());
        let bad = r#"{"dimension":2,"patches":[],"seed":[0,0,0],"extra":1}"#;
        assert!(PatchConfig::from_json(bad).is_err());
    }

    #[test]
    fn rescale_identity_and_homogeneity() {
        let f: Arc<dyn SolutionField> = Arc::new(build_synthetic(single_ball()).unwrap());
        let r0 = rescale(f.clone(), 0.0).unwrap();
        let x = [0.3, 0.4];
        assert_eq!(r0.value(&x).unwrap(), f.value(&x).unwrap());

        let b = TraceFreeSym::diag(&[0.2, -0.2]).unwrap();
        let q: Arc<dyn SolutionField> = Arc::new(QuadraticField::new(b));
        let rq = rescale(q.clone(), 1.7).unwrap();
        assert!((rq.value(&x).unwrap() - q.value(&x).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn rescale_moves_patch() {
        let f: Arc<dyn SolutionField> = Arc::new(build_synthetic(single_ball()).unwrap());
        let r = rescale(f, std::f64::consts::LN_2).unwrap();
        let balls = r.inactive_balls().unwrap();
        assert!((balls[0].center[0] - 1.0).abs() < 1e-15);
        assert!((balls[0].radius - 0.2).abs() < 1e-15);
        assert!(r.inactive(&[0.85, 0.0]).unwrap());
        assert!(!r.inactive(&[0.75, 0.0]).unwrap());
    }

    #[test]
    fn rescale_composes() {
        let cfg = PatchConfig {
            dimension: 2,
            patches: vec![Ball { center: vec![0.3, 0.2], radius: 0.1 }],
            seed: vec![0.1, 0.05, -0.1],
        };
        let f: Arc<dyn SolutionField> = Arc::new(build_synthetic(cfg).unwrap());
        let (s, t) = (0.4, 0.9);
        let nested = rescale(Arc::new(rescale(f.clone(), s).unwrap()), t).unwrap();
        let direct = rescale(f, s + t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let x = [rng.gen_range(-0.7..0.7), rng.gen_range(-0.7..0.7)];
            let (a, b) = (nested.value(&x).unwrap(), direct.value(&x).unwrap());
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            let (ga, gb) = (nested.gradient_vec(&x).unwrap(), direct.gradient_vec(&x).unwrap());
            assert!((ga[0] - gb[0]).abs() < 1e-12 && (ga[1] - gb[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn outside_domain() {
        let f = build_synthetic(single_ball()).unwrap();
        assert!(matches!(f.value(&[1.5, 0.0]), Err(Error::Domain(_))));
    }
}
