use std::f64::consts::{LN_2, PI};
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::balls::{ball_shell_moment, placement, Placement};
use super::sampling::{paired_estimate, stratified_shell, stream};
use crate::error::{Error, Result};
use crate::fields::{rescale, Ball, FieldMode, SolutionField};
use crate::harmonics::{Projector, SymMat, TraceFreeSym};

/// Default sampling used where sampling is needed but the integration spec
/// does not provide one (currently `I(t)` under [`IntegrationSpec::ClosedForm`],
/// and fields without a ball description).
pub const DEFAULT_SAMPLES: usize = 4096;
pub const DEFAULT_SEED: u64 = 0x5EED_0001;

const PURPOSE_REGION: u64 = 1;

/// How volume integrals over `Λ_t ∩ B₁` are evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntegrationSpec {
    /// Exact ball moments; clipped balls fall back to a semi-analytic radial
    /// quadrature (with a notice in the record).
    ClosedForm,
    /// Stratified sampling with `samples_per_region` points in each dyadic
    /// annulus and in the innermost ball.
    Sampled { samples_per_region: usize, seed: u64 },
}

/// Which evaluator produced the moments of a record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMethod {
    ClosedForm,
    SemiAnalytic,
    Sampled,
}

/// Increasing log-scales `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleGrid {
    times: Vec<f64>,
    /// Set when the spacing divides `ln 2`, enabling exact dyadic lookups.
    steps_per_octave: Option<usize>,
}

impl ScaleGrid {
    /// `t_start + i·ln2/steps_per_octave` for `i = 0..=octaves·steps_per_octave`.
    pub fn dyadic(t_start: f64, octaves: usize, steps_per_octave: usize) -> Result<Self> {
        if steps_per_octave == 0 || octaves == 0 {
            return Err(Error::config("octaves and steps_per_octave must be positive"));
        }
        let dt = LN_2 / steps_per_octave as f64;
        let count = octaves * steps_per_octave + 1;
        Ok(ScaleGrid {
            times: (0..count).map(|i| t_start + i as f64 * dt).collect(),
            steps_per_octave: Some(steps_per_octave),
        })
    }

    /// `count` equispaced points on `[t_start, t_end]`.
    pub fn uniform(t_start: f64, t_end: f64, count: usize) -> Result<Self> {
        if count < 2 || !(t_end > t_start) || !t_start.is_finite() || !t_end.is_finite() {
            return Err(Error::config(format!(
                "scale grid needs t_end > t_start and at least 2 points, got [{t_start}, {t_end}] with {count}"
            )));
        }
        let dt = (t_end - t_start) / (count - 1) as f64;
        let ratio = LN_2 / dt;
        let steps_per_octave = if (ratio - ratio.round()).abs() < 1e-9 && ratio.round() >= 1.0 {
            Some(ratio.round() as usize)
        } else {
            None
        };
        Ok(ScaleGrid {
            times: (0..count).map(|i| t_start + i as f64 * dt).collect(),
            steps_per_octave,
        })
    }

    /// Arbitrary strictly increasing scales.
    pub fn explicit(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::config("explicit scales must be finite and strictly increasing"));
        }
        Ok(ScaleGrid {
            times,
            steps_per_octave: None,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn steps_per_octave(&self) -> Option<usize> {
        self.steps_per_octave
    }

    pub fn spacing(&self) -> Option<f64> {
        let dt = self.times[1] - self.times[0];
        let uniform = self
            .times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-12 * dt.max(1.0));
        uniform.then_some(dt)
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }
}

/// Everything computed at one log-scale `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRecord {
    pub t: f64,
    /// `B(t)`, the harmonic projection of `u_t`.
    pub b: TraceFreeSym,
    /// `a_{E_j}(t) = ∫_{∂B₁}(u_t − p₀)ψ_{E_j}`.
    pub a: Vec<f64>,
    /// `M(t) = ∫_{Λ_t∩B₁} x ⊗ x`.
    pub m: SymMat,
    /// `F(t) = tr M(t)`.
    pub f: f64,
    pub f_sigma: f64,
    /// `F_k(t)` over the annuli `𝒜_k`, `k = 0..=k_max`.
    pub f_k: Vec<f64>,
    pub f_k_sigma: Vec<f64>,
    /// Contribution of the innermost ball `|x| < 2^{−k_max−1}`.
    pub f_rest: f64,
    /// `∫_{Λ_t∩𝒜₀} x ⊗ x`.
    pub m0: SymMat,
    /// `I(t) = ∫_{Λ_t∩B₁} x·∇R_t`.
    pub i: f64,
    pub i_sigma: f64,
    pub i_k: Vec<f64>,
    pub i_k_sigma: Vec<f64>,
    /// `ε(t) = sup_{𝒜̄₀} |∇R_t|`.
    pub eps: f64,
    pub eps_points: usize,
    pub method: MomentMethod,
    pub notices: Vec<String>,
}

impl MomentRecord {
    pub fn i0(&self) -> f64 {
        self.i_k[0]
    }

    pub fn f0(&self) -> f64 {
        self.f_k[0]
    }

    /// `∫_{Λ_t∩B₁} ψ_C = ½ C : M(t)`.
    pub fn psi_moment(&self, c: &TraceFreeSym) -> f64 {
        0.5 * c.dot_sym(&self.m)
    }
}

/// Options shared by all scales of a series.
#[derive(Clone, Debug)]
pub struct SeriesOptions {
    pub spec: IntegrationSpec,
    pub k_max: usize,
    pub projector: Arc<Projector>,
}

impl SeriesOptions {
    pub fn new(n: usize, spec: IntegrationSpec, k_max: usize) -> Result<Self> {
        Ok(SeriesOptions {
            spec,
            k_max,
            projector: Arc::new(Projector::for_dimension(n)?),
        })
    }
}

/// Annulus `𝒜_k` radii, with `k = k_max + 1` standing for the innermost ball.
pub(crate) fn region_bounds(k: usize, k_max: usize) -> (f64, f64) {
    let hi = 0.5f64.powi(k as i32);
    if k > k_max {
        (0.0, hi)
    } else {
        (0.5 * hi, hi)
    }
}

/// `B(t)` and `a(t)` from sphere samples of `u_t`.
pub fn compute_b(field_t: &dyn SolutionField, projector: &Projector) -> Result<(TraceFreeSym, Vec<f64>)> {
    let samples = projector
        .quadrature()
        .nodes()
        .map(|x| field_t.value(x))
        .collect::<Result<Vec<f64>>>()?;
    let a = projector.moments(&samples)?;
    Ok((projector.from_moments(&a), a))
}

/// `∇R_t(x) = ∇u_t(x) − x/n − B x`.
fn remainder_gradient(field_t: &dyn SolutionField, b: &TraceFreeSym, x: &[f64], out: &mut [f64]) -> Result<()> {
    let n = x.len();
    field_t.gradient(x, out)?;
    let mut bx = vec![0.0; n];
    b.apply(x, &mut bx);
    for i in 0..n {
        out[i] -= x[i] / n as f64 + bx[i];
    }
    Ok(())
}

struct RegionSamples {
    m: Vec<SymMat>,
    f: Vec<(f64, f64)>,
    i: Vec<(f64, f64)>,
    eps: f64,
}

fn sampled_regions(
    field_t: &dyn SolutionField,
    b: &TraceFreeSym,
    k_max: usize,
    samples_per_region: usize,
    seed: u64,
    scale_index: usize,
) -> Result<RegionSamples> {
    let n = field_t.dimension();
    let mut out = RegionSamples {
        m: Vec::new(),
        f: Vec::new(),
        i: Vec::new(),
        eps: 0.0,
    };
    let mut grad = vec![0.0; n];
    for k in 0..=k_max + 1 {
        let (lo, hi) = region_bounds(k, k_max);
        let mut rng = stream(seed, scale_index, k, PURPOSE_REGION);
        let samples = stratified_shell(n, lo, hi, samples_per_region, &mut rng);
        let mut fv = vec![0.0; samples.len()];
        let mut iv = vec![0.0; samples.len()];
        let mut m = SymMat::zeros(n);
        for (idx, s) in samples.iter().enumerate() {
            let inactive = field_t.inactive(&s.x)?;
            if inactive || k == 0 {
                remainder_gradient(field_t, b, &s.x, &mut grad)?;
                if k == 0 {
                    out.eps = out.eps.max(grad.iter().map(|g| g * g).sum::<f64>().sqrt());
                }
            }
            if inactive {
                fv[idx] = s.x.iter().map(|v| v * v).sum();
                iv[idx] = s.x.iter().zip(&grad).map(|(x, g)| x * g).sum();
                m.add_outer(&s.x, s.volume);
            }
        }
        out.f.push(paired_estimate(&samples, &fv));
        out.i.push(paired_estimate(&samples, &iv));
        out.m.push(m);
    }
    Ok(out)
}

/// Ball moments per region; `true` when some ball is clipped.
fn ball_regions(balls: &[Ball], k_max: usize) -> (Vec<SymMat>, SymMat, bool) {
    let n = balls.first().map_or(2, |b| b.center.len());
    let mut clipped = false;
    let mut regions = Vec::with_capacity(k_max + 2);
    for k in 0..=k_max + 1 {
        let (lo, hi) = region_bounds(k, k_max);
        let mut m = SymMat::zeros(n);
        for ball in balls {
            if placement(ball, lo, hi) == Placement::Straddles {
                clipped = true;
            }
            m.add_assign(&ball_shell_moment(ball, lo, hi), 1.0);
        }
        regions.push(m);
    }
    let mut whole = SymMat::zeros(n);
    for ball in balls {
        if placement(ball, 0.0, 1.0) == Placement::Straddles {
            clipped = true;
        }
        whole.add_assign(&ball_shell_moment(ball, 0.0, 1.0), 1.0);
    }
    (regions, whole, clipped)
}

/// Dense product grid on the closed annulus `1/2 ≤ |x| ≤ 1`.
fn annulus_grid(n: usize) -> Vec<Vec<f64>> {
    let mut pts = Vec::new();
    let radii = |count: usize| (0..count).map(move |i| 0.5 + 0.5 * i as f64 / (count - 1) as f64);
    match n {
        2 => {
            for r in radii(64) {
                for k in 0..256 {
                    let th = 2.0 * PI * k as f64 / 256.0;
                    pts.push(vec![r * th.cos(), r * th.sin()]);
                }
            }
        }
        3 => {
            for r in radii(16) {
                for j in 0..32 {
                    let ph = PI * (j as f64 + 0.5) / 32.0;
                    for k in 0..64 {
                        let az = 2.0 * PI * k as f64 / 64.0;
                        pts.push(vec![r * ph.sin() * az.cos(), r * ph.sin() * az.sin(), r * ph.cos()]);
                    }
                }
                pts.push(vec![0.0, 0.0, r]);
                pts.push(vec![0.0, 0.0, -r]);
            }
        }
        _ => {
            let mut rng = stream(DEFAULT_SEED, 0, 0, 99);
            let mut dirs = Vec::with_capacity(1024);
            for _ in 0..1024 {
                let mut d: Vec<f64> = (0..n)
                    .map(|_| {
                        let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
                        let u2: f64 = rng.gen();
                        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
                    })
                    .collect();
                let s = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                d.iter_mut().for_each(|v| *v /= s);
                dirs.push(d);
            }
            for r in radii(16) {
                for d in &dirs {
                    pts.push(d.iter().map(|v| v * r).collect());
                }
            }
        }
    }
    pts
}

/// `ε(t)`: the largest `|∇R_t|` over a dense product grid on the closed
/// annulus, refined locally around the maximizer. Returns the value and the
/// number of evaluation points.
pub fn annulus_sup(field_t: &dyn SolutionField, b: &TraceFreeSym) -> Result<(f64, usize)> {
    let n = field_t.dimension();
    let pts = annulus_grid(n);
    let mut grad = vec![0.0; n];
    let mut norm_at = |x: &[f64]| -> Result<f64> {
        remainder_gradient(field_t, b, x, &mut grad)?;
        Ok(grad.iter().map(|g| g * g).sum::<f64>().sqrt())
    };
    let mut best = (f64::NEG_INFINITY, pts[0].clone());
    for p in &pts {
        let v = norm_at(p)?;
        if v > best.0 {
            best = (v, p.clone());
        }
    }
    let mut count = pts.len();
    let steps: Vec<f64> = if n <= 3 { vec![-1.0, -0.5, 0.0, 0.5, 1.0] } else { vec![-1.0, 0.0, 1.0] };
    let mut width = if n == 2 { 2.0 * PI / 256.0 } else { 0.5 / 15.0 };
    let combos = steps.len().pow(n as u32);
    let mut y = vec![0.0; n];
    for _ in 0..4 {
        let center = best.1.clone();
        for c in 0..combos {
            let mut rem = c;
            for d in 0..n {
                y[d] = center[d] + width * steps[rem % steps.len()];
                rem /= steps.len();
            }
            let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            let target = r.clamp(0.5, 1.0);
            if r > 0.0 && r != target {
                y.iter_mut().for_each(|v| *v *= target / r);
            }
            let v = norm_at(&y)?;
            count += 1;
            if v > best.0 {
                best = (v, y.clone());
            }
        }
        width *= 0.5;
    }
    Ok((best.0.max(0.0), count))
}

/// `M(t)` alone (with its one-sigma error), by the series' integration spec.
pub fn moment_matrix(
    field: &Arc<dyn SolutionField>,
    t: f64,
    options: &SeriesOptions,
    stream_index: usize,
) -> Result<(SymMat, f64, MomentMethod)> {
    let field_t = rescale(field.clone(), t)?;
    if let (IntegrationSpec::ClosedForm, Some(balls)) = (&options.spec, field_t.inactive_balls()) {
        let n = field.dimension();
        let mut m = SymMat::zeros(n);
        let mut clipped = false;
        for ball in &balls {
            clipped |= placement(ball, 0.0, 1.0) == Placement::Straddles;
            m.add_assign(&ball_shell_moment(ball, 0.0, 1.0), 1.0);
        }
        let method = if clipped {
            MomentMethod::SemiAnalytic
        } else {
            MomentMethod::ClosedForm
        };
        return Ok((m, 0.0, method));
    }
    let (samples, seed) = match options.spec {
        IntegrationSpec::Sampled { samples_per_region, seed } => (samples_per_region, seed),
        IntegrationSpec::ClosedForm => (DEFAULT_SAMPLES, DEFAULT_SEED),
    };
    let b = TraceFreeSym::zeros(field.dimension());
    let regions = sampled_regions(&field_t, &b, options.k_max, samples, seed, stream_index)?;
    let mut m = SymMat::zeros(field.dimension());
    for r in &regions.m {
        m.add_assign(r, 1.0);
    }
    let sigma = regions.f.iter().map(|(_, s)| s * s).sum::<f64>().sqrt();
    Ok((m, sigma, MomentMethod::Sampled))
}

/// Computes the full record at scale `t`; `scale_index` selects the random
/// streams.
pub fn compute_record(
    field: &Arc<dyn SolutionField>,
    t: f64,
    scale_index: usize,
    options: &SeriesOptions,
) -> Result<MomentRecord> {
    let n = field.dimension();
    let k_max = options.k_max;
    let field_t = rescale(field.clone(), t)?;
    let (b, a) = compute_b(&field_t, &options.projector)?;
    let mut notices = Vec::new();

    let (samples, seed) = match options.spec {
        IntegrationSpec::Sampled { samples_per_region, seed } => (samples_per_region, seed),
        IntegrationSpec::ClosedForm => (DEFAULT_SAMPLES, DEFAULT_SEED),
    };
    let sampled = sampled_regions(&field_t, &b, k_max, samples, seed, scale_index)?;

    let balls = field_t.inactive_balls();
    let (m, m0, f, f_sigma, f_k, f_k_sigma, f_rest, method) = match (&options.spec, balls) {
        (IntegrationSpec::ClosedForm, Some(balls)) => {
            let (regions, whole, clipped) = ball_regions(&balls, k_max);
            if clipped {
                notices.push("clipped patches integrated by semi-analytic radial quadrature".to_string());
            }
            let f_k: Vec<f64> = regions[..=k_max].iter().map(SymMat::trace).collect();
            (
                whole.clone(),
                regions[0].clone(),
                whole.trace(),
                0.0,
                f_k,
                vec![0.0; k_max + 1],
                regions[k_max + 1].trace(),
                if clipped {
                    MomentMethod::SemiAnalytic
                } else {
                    MomentMethod::ClosedForm
                },
            )
        }
        (spec, _) => {
            if *spec == IntegrationSpec::ClosedForm {
                notices.push(format!(
                    "closed form unavailable for this field; sampled with {DEFAULT_SAMPLES} points per region, seed {DEFAULT_SEED}"
                ));
            }
            let mut m = SymMat::zeros(n);
            for r in &sampled.m {
                m.add_assign(r, 1.0);
            }
            let f = m.trace();
            let f_sigma = sampled.f.iter().map(|(_, s)| s * s).sum::<f64>().sqrt();
            (
                m,
                sampled.m[0].clone(),
                f,
                f_sigma,
                sampled.f[..=k_max].iter().map(|p| p.0).collect(),
                sampled.f[..=k_max].iter().map(|p| p.1).collect(),
                sampled.f[k_max + 1].0,
                MomentMethod::Sampled,
            )
        }
    };

    let i_k: Vec<f64> = sampled.i[..=k_max].iter().map(|p| p.0).collect();
    let i_k_sigma: Vec<f64> = sampled.i[..=k_max].iter().map(|p| p.1).collect();
    let i = sampled.i.iter().map(|p| p.0).sum();
    let i_sigma = sampled.i.iter().map(|p| p.1 * p.1).sum::<f64>().sqrt();

    let (grid_eps, grid_points) = annulus_sup(&field_t, &b)?;
    let eps = grid_eps.max(sampled.eps);

    Ok(MomentRecord {
        t,
        b,
        a,
        m,
        f,
        f_sigma,
        f_k,
        f_k_sigma,
        f_rest,
        m0,
        i,
        i_sigma,
        i_k,
        i_k_sigma,
        eps,
        eps_points: grid_points,
        method,
        notices,
    })
}

/// Per-scale records for a field over a scale grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScaleSeries {
    pub dimension: usize,
    pub mode: FieldMode,
    pub k_max: usize,
    pub spec: IntegrationSpec,
    pub grid: ScaleGrid,
    pub records: Vec<MomentRecord>,
}

impl ScaleSeries {
    pub fn times(&self) -> &[f64] {
        self.grid.times()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Index offset of one octave, when the grid is dyadically aligned.
    pub fn octave_offset(&self) -> Option<usize> {
        self.grid.steps_per_octave()
    }
}

/// Computes every record of the series in parallel. Records depend only on
/// their own scale and index, so the output is independent of scheduling.
pub fn compute_series(field: Arc<dyn SolutionField>, grid: &ScaleGrid, options: &SeriesOptions) -> Result<ScaleSeries> {
    let n = field.dimension();
    if options.projector.dim() != n {
        return Err(Error::InvalidArgument(format!(
            "projector dimension {} does not match field dimension {n}",
            options.projector.dim()
        )));
    }
    if let IntegrationSpec::Sampled { samples_per_region, .. } = options.spec {
        if samples_per_region < 4 {
            return Err(Error::config("samples_per_region must be at least 4"));
        }
    }
    let records = grid
        .times()
        .par_iter()
        .enumerate()
        .map(|(i, &t)| compute_record(&field, t, i, options))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScaleSeries {
        dimension: n,
        mode: field.mode(),
        k_max: options.k_max,
        spec: options.spec.clone(),
        grid: grid.clone(),
        records,
    })
}
