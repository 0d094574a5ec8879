//! Cross-scale diagnostics on a computed [`ScaleSeries`].

use std::f64::consts::LN_2;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::balls::{ball_moment, ball_shell_moment, placement, Placement};
use super::record::{compute_b, moment_matrix, MomentRecord, ScaleSeries, SeriesOptions};
use crate::error::{Error, Result};
use crate::fields::{rescale, Ball, FieldMode, SolutionField};
use crate::harmonics::{gram_constant, kappa, QuadraticProfile, SymMat, TraceFreeSym};
use crate::quad::{adaptive_vec, sphere_area, trapezoid};

/// Stream indices used for midpoint moments, disjoint from record streams.
const MIDPOINT_STREAM: usize = 1 << 20;

/// `B' = κₙ tf(M)` for a dense row-major `M`.
pub fn ode_rhs(m: &[f64], n: usize) -> Result<TraceFreeSym> {
    let m = SymMat::from_dense(n, m, 1e-8)?;
    Ok(m.trace_free().scaled(kappa(n)?))
}

/// `Mₙ = ∫_{B₁}|x|² = |∂B₁|/(n+2)`, the a-priori bound on `F`.
pub fn max_dissipation(n: usize) -> Result<f64> {
    Ok(sphere_area(n)? / (n + 2) as f64)
}

/// `(S₁, S₂) = (Σ k xᵏ, Σ k² xᵏ)` with `x = 2^{−(n+2)}`.
pub fn volterra_sums(n: usize) -> (f64, f64) {
    let x = 0.5f64.powi(n as i32 + 2);
    (x / (1.0 - x).powi(2), x * (1.0 + x) / (1.0 - x).powi(3))
}

/// Exact `∫_{t0}^{t1} M(τ) dτ` for one ball of the unscaled field, using the
/// `e^{(n+2)τ}` law while the ball is inside `B₁` and adaptive quadrature of
/// the clipped moment while it crosses `∂B₁`.
pub fn ball_moment_integral(ball: &Ball, t0: f64, t1: f64) -> SymMat {
    let n = ball.center.len();
    let c = ball.center_norm();
    let t_in = -(c + ball.radius).ln();
    let t_out = if c > ball.radius { -(c - ball.radius).ln() } else { f64::INFINITY };
    let mut total = SymMat::zeros(n);
    let (a, b) = (t0, t1.min(t_in));
    if b > a {
        let g = (n + 2) as f64;
        let factor = ((g * b).exp() - (g * a).exp()) / g;
        total.add_assign(&ball_moment(ball), factor);
    }
    let (a, b) = (t0.max(t_in), t1.min(t_out));
    if b > a {
        let len = n * n;
        let v = adaptive_vec(a, b, len, 1e-13, 30, &|tau: f64, out: &mut [f64]| {
            let scaled = ball.scaled(tau.exp());
            let m = if placement(&scaled, 0.0, 1.0) == Placement::Outside {
                SymMat::zeros(n)
            } else {
                ball_shell_moment(&scaled, 0.0, 1.0)
            };
            out.copy_from_slice(m.as_slice());
        });
        let m = SymMat::from_dense(n, &v, f64::INFINITY).expect("square moment matrix");
        total.add_assign(&m, 1.0);
    }
    total
}

/// Residuals of one interval `[t_i, t_{i+1}]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeInterval {
    pub t0: f64,
    pub t1: f64,
    /// `‖ΔB − κₙ ∫ tf(M)‖_F`.
    pub residual: f64,
    /// `|Δa_{E_j} − ∫ ½E_j:M|`.
    pub a_residuals: Vec<f64>,
    pub exact: bool,
}

/// Compares projection-differenced `ΔB` with the integrated right-hand side.
pub fn ode_crosscheck(
    field: &Arc<dyn SolutionField>,
    series: &ScaleSeries,
    options: &SeriesOptions,
) -> Result<Vec<OdeInterval>> {
    ode_crosscheck_with(field, series, options, kappa(series.dimension)?)
}

/// [`ode_crosscheck`] with the coefficient in front of `tf(M)` supplied by
/// the caller (mutation tests pass a wrong one).
pub fn ode_crosscheck_with(
    field: &Arc<dyn SolutionField>,
    series: &ScaleSeries,
    options: &SeriesOptions,
    k: f64,
) -> Result<Vec<OdeInterval>> {
    let n = series.dimension;
    let balls = match options.spec {
        super::IntegrationSpec::ClosedForm => field.inactive_balls(),
        _ => None,
    };
    let basis = options.projector.basis().elements().to_vec();
    let mut out = Vec::with_capacity(series.len().saturating_sub(1));
    for (idx, pair) in series.records.windows(2).enumerate() {
        let (r0, r1) = (&pair[0], &pair[1]);
        let integral = match &balls {
            Some(balls) => {
                let mut m = SymMat::zeros(n);
                for ball in balls {
                    m.add_assign(&ball_moment_integral(ball, r0.t, r1.t), 1.0);
                }
                m
            }
            None => {
                let mid = 0.5 * (r0.t + r1.t);
                let (mm, _, _) = moment_matrix(field, mid, options, MIDPOINT_STREAM + idx)?;
                let mut m = SymMat::zeros(n);
                m.add_assign(&r0.m, 1.0);
                m.add_assign(&mm, 4.0);
                m.add_assign(&r1.m, 1.0);
                m.scaled((r1.t - r0.t) / 6.0)
            }
        };
        let predicted = integral.trace_free().scaled(k);
        let residual = r1.b.sub(&r0.b).sub(&predicted).frobenius_norm();
        let a_residuals = basis
            .iter()
            .zip(r0.a.iter().zip(&r1.a))
            .map(|(e, (a0, a1))| ((a1 - a0) - 0.5 * e.dot_sym(&integral)).abs())
            .collect();
        out.push(OdeInterval {
            t0: r0.t,
            t1: r1.t,
            residual,
            a_residuals,
            exact: balls.is_some(),
        });
    }
    Ok(out)
}

/// Largest `|a_j'(t) − ½E_j:M(t)|` with `a'` by centered differences at
/// interior points (uniform grids only).
pub fn moment_identity_residual(series: &ScaleSeries, basis: &[TraceFreeSym]) -> Result<f64> {
    let dt = series
        .grid
        .spacing()
        .ok_or_else(|| Error::InvalidArgument("moment identity needs a uniform scale grid".into()))?;
    if series.len() < 3 {
        return Err(Error::InsufficientSeries(format!("need 3 scales, got {}", series.len())));
    }
    let mut worst: f64 = 0.0;
    for i in 1..series.len() - 1 {
        let (prev, cur, next) = (&series.records[i - 1], &series.records[i], &series.records[i + 1]);
        for (j, e) in basis.iter().enumerate() {
            let derivative = (next.a[j] - prev.a[j]) / (2.0 * dt);
            worst = worst.max((derivative - cur.psi_moment(e)).abs());
        }
    }
    Ok(worst)
}

/// One `(t, k)` entry of the dyadic decomposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicRecord {
    pub t: f64,
    pub k: usize,
    pub f_k_direct: f64,
    /// `2^{−k(n+2)} F₀(t + k ln2)`.
    pub f_k_scaled: f64,
    /// Combined one-sigma error of the two sides (zero for closed forms).
    pub f_sigma: f64,
    pub i_k_direct: f64,
    pub i0_at_s: f64,
    /// `J_k = (B(s) − B(t)) : ∫_{Λ_s∩𝒜₀} z⊗z`.
    pub j_k: f64,
    /// `|I_k(t) − 2^{−k(n+2)}(I₀(s) + J_k)|`.
    pub i_residual: f64,
    pub i_sigma: f64,
    /// `‖B(s) − B(t)‖_F F₀(s)`.
    pub j_bound: f64,
    /// `κₙ (∫_t^s F) F₀(s)`, the integral by trapezoid.
    pub j_soft_bound: f64,
    /// `2^{−k(n+2)} F₀(s) ∫_t^s F`, the `k`-th term of `V(t)`.
    pub v_term: f64,
}

impl DyadicRecord {
    pub fn f_residual(&self) -> f64 {
        (self.f_k_direct - self.f_k_scaled).abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicReport {
    pub records: Vec<DyadicRecord>,
    /// Pairs `(t, k)` with `k ≤ k_max` skipped because `t + k ln2 > t_end`.
    pub skipped: usize,
    pub partial: bool,
}

fn trapezoid_range(series: &ScaleSeries, from: usize, to: usize) -> f64 {
    let t = &series.times()[from..=to];
    let f: Vec<f64> = series.records[from..=to].iter().map(|r| r.f).collect();
    trapezoid(t, &f)
}

/// Dyadic laws for every record index and every `k ≤ k_max` that fits.
pub fn dyadic_check(series: &ScaleSeries) -> Result<DyadicReport> {
    let n = series.dimension;
    let offset = series.octave_offset().ok_or_else(|| {
        Error::InvalidArgument("dyadic checks need a scale spacing dividing ln 2".into())
    })?;
    let kap = kappa(n)?;
    let mut records = Vec::new();
    let mut skipped = 0;
    for (i, rec) in series.records.iter().enumerate() {
        for k in 0..=series.k_max {
            let j = i + k * offset;
            if j >= series.len() {
                skipped += 1;
                continue;
            }
            let at_s = &series.records[j];
            let scale = 0.5f64.powi((k * (n + 2)) as i32);
            let j_k = at_s.b.sub(&rec.b).dot_sym(&at_s.m0);
            let integral = trapezoid_range(series, i, j);
            records.push(DyadicRecord {
                t: rec.t,
                k,
                f_k_direct: rec.f_k[k],
                f_k_scaled: scale * at_s.f0(),
                f_sigma: (rec.f_k_sigma[k].powi(2) + (scale * at_s.f_k_sigma[0]).powi(2)).sqrt(),
                i_k_direct: rec.i_k[k],
                i0_at_s: at_s.i0(),
                j_k,
                i_residual: (rec.i_k[k] - scale * (at_s.i0() + j_k)).abs(),
                i_sigma: (rec.i_k_sigma[k].powi(2) + (scale * at_s.i_k_sigma[0]).powi(2)).sqrt(),
                j_bound: at_s.b.sub(&rec.b).frobenius_norm() * at_s.f0(),
                j_soft_bound: kap * integral * at_s.f0(),
                v_term: scale * at_s.f0() * integral,
            });
        }
    }
    Ok(DyadicReport {
        partial: skipped > 0,
        records,
        skipped,
    })
}

/// `½ d/dt‖B‖² = −(κₙ/n)F − κₙI` on one interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovInterval {
    pub t_mid: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Refused for consistency-mode series, whose inactive sets carry nonzero
/// gradient.
pub fn lyapunov_residual(series: &ScaleSeries) -> Result<Vec<LyapunovInterval>> {
    if series.mode != FieldMode::Solution {
        return Err(Error::Mode(
            "the dissipation identity needs ∇u = 0 on the inactive set (solution mode)".into(),
        ));
    }
    if series.len() < 2 {
        return Err(Error::InsufficientSeries(format!("need 2 scales, got {}", series.len())));
    }
    let n = series.dimension;
    let kap = kappa(n)?;
    let rhs_at = |r: &MomentRecord| -kap / n as f64 * r.f - kap * r.i;
    Ok(series
        .records
        .windows(2)
        .map(|w| {
            let energy = |r: &MomentRecord| 0.5 * r.b.frobenius_norm().powi(2);
            let lhs = (energy(&w[1]) - energy(&w[0])) / (w[1].t - w[0].t);
            let rhs = 0.5 * (rhs_at(&w[0]) + rhs_at(&w[1]));
            LyapunovInterval {
                t_mid: 0.5 * (w[0].t + w[1].t),
                lhs,
                rhs,
                residual: (lhs - rhs).abs(),
            }
        })
        .collect())
}

/// Suffix suprema `sup_{j ≥ i} v_j`.
pub fn tail_sup(values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    for i in (0..out.len().saturating_sub(1)).rev() {
        out[i] = out[i].max(out[i + 1]);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionReport {
    pub t_start: f64,
    /// Last scale `S` at which `V` is available.
    pub t_stop: f64,
    /// Dyadic terms kept in `V`.
    pub k_used: usize,
    pub eta: Vec<f64>,
    pub mu: Vec<f64>,
    /// Bound on the omitted terms `k > k_used` of `V`, per scale.
    pub v_tail_bound: Vec<f64>,
    pub v: Vec<f64>,
    /// `min_t (2ε(t)F₀(t) − |I₀(t)|)`; `None` in consistency mode.
    pub i0_margin: Option<f64>,
    /// `∫_T^S V` with the `k > k_used` terms at their bound.
    pub volterra_lhs: f64,
    pub volterra_rhs: f64,
    /// `min_t (2η_T F(t) + κₙ V(t) − |I(t)|)` over `[T, S]`; diagnostic only
    /// since `V` is truncated.
    pub i_global_margin: Option<f64>,
}

/// Largest number of resolved terms `k ≥ 1` of `V`; later ones enter at
/// their bound.
pub const VOLTERRA_TERMS: usize = 8;

/// I₀ absorption, the Volterra bound on `∫V`, and the global `I` bound,
/// starting at record index `start`.
pub fn absorption_check(series: &ScaleSeries, start: usize) -> Result<AbsorptionReport> {
    let n = series.dimension;
    let offset = series
        .octave_offset()
        .ok_or_else(|| Error::InvalidArgument("absorption checks need a scale spacing dividing ln 2".into()))?;
    if start + offset >= series.len() {
        return Err(Error::InsufficientSeries(format!(
            "absorption needs one octave after index {start}, series has {} scales",
            series.len()
        )));
    }
    let recs = &series.records[start..];
    let eta = tail_sup(&recs.iter().map(|r| r.eps).collect::<Vec<_>>());
    let mu = tail_sup(&recs.iter().map(|r| r.f0()).collect::<Vec<_>>());
    let span = recs.len() - 1;
    let octaves = span / offset;
    // keep at least one octave of [T, S] when the series allows it; V reads
    // F₀ at later scales, so k_max plays no role here
    let k_used = VOLTERRA_TERMS.min(octaves.saturating_sub(1).max(1));
    let stop = span - k_used * offset;
    let kap = kappa(n)?;
    let m_n = max_dissipation(n)?;
    let (s1, s2) = volterra_sums(n);
    let geo = 0.5f64.powi(n as i32 + 2);

    let mut v = Vec::with_capacity(stop + 1);
    let mut v_tail = Vec::with_capacity(stop + 1);
    for i in 0..=stop {
        let mut acc = 0.0;
        for k in 1..=k_used {
            let j = i + k * offset;
            acc += geo.powi(k as i32) * recs[j].f0() * trapezoid_range(series, start + i, start + j);
        }
        v.push(acc);
        // k > k_used: F₀ ≤ μ_T and ∫_t^{t+kl} F ≤ k l Mₙ
        let tail: f64 = (k_used + 1..k_used + 200)
            .map(|k| geo.powi(k as i32) * mu[0] * k as f64 * LN_2 * m_n)
            .sum();
        v_tail.push(tail);
    }
    let times = &series.times()[start..=start + stop];
    // the unresolved k > k_used terms are added at their bound
    let v_upper: Vec<f64> = v.iter().zip(&v_tail).map(|(a, b)| a + b).collect();
    let volterra_lhs = trapezoid(times, &v_upper);
    let f_window: Vec<f64> = recs[..=stop].iter().map(|r| r.f).collect();
    let int_f = trapezoid(times, &f_window);
    let volterra_rhs = mu[0] * (LN_2 * s1 * int_f + m_n * LN_2 * LN_2 * s2);

    let solution = series.mode == FieldMode::Solution;
    let i0_margin = solution.then(|| {
        recs.iter()
            .map(|r| 2.0 * r.eps * r.f0() - r.i0().abs())
            .fold(f64::INFINITY, f64::min)
    });
    let i_global_margin = solution.then(|| {
        (0..=stop)
            .map(|i| 2.0 * eta[0] * recs[i].f + kap * v[i] - recs[i].i.abs())
            .fold(f64::INFINITY, f64::min)
    });
    Ok(AbsorptionReport {
        t_start: recs[0].t,
        t_stop: recs[stop].t,
        k_used,
        eta,
        mu,
        v_tail_bound: v_tail,
        v,
        i0_margin,
        volterra_lhs,
        volterra_rhs,
        i_global_margin,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DissipationReport {
    pub t_start: f64,
    pub t_end: f64,
    /// Trapezoid `∫_T^{t_end} F`.
    pub integral_f: f64,
    /// Estimated `∫_{t_end}^∞ F` from an exponential fit of the last quartile.
    pub tail_f: f64,
    /// Decay rate and `R²` of the fit; `None` when `F(t_end) = 0`.
    pub tail_rate: Option<f64>,
    pub tail_fit_r2: Option<f64>,
    pub total_variation_b: f64,
    pub b_infinity: TraceFreeSym,
    /// `κₙ · tail_f`, bound on `‖B_∞ − B(t_end)‖_F` if the fit holds.
    pub b_infinity_uncertainty: f64,
    pub eta_t: f64,
    pub mu_t: f64,
    /// `max_{∂B₁ nodes} |u_{t_end} − q_{B_∞}|`.
    pub taylor_sup: f64,
    /// `Mₙ`, the a-priori bound on `F`.
    pub max_f: f64,
    pub insufficient: bool,
}

/// Least squares fit of `log F = α − λt`; returns `(λ, R²)`.
fn exponential_fit(t: &[f64], f: &[f64]) -> Option<(f64, f64)> {
    if f.iter().any(|v| *v <= 0.0) || t.len() < 3 {
        return None;
    }
    let y: Vec<f64> = f.iter().map(|v| v.ln()).collect();
    let m = t.len() as f64;
    let (tm, ym) = (t.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let sxx: f64 = t.iter().map(|v| (v - tm).powi(2)).sum();
    let sxy: f64 = t.iter().zip(&y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let syy: f64 = y.iter().map(|v| (v - ym).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some((-slope, r2))
}

pub const MIN_REPORT_SCALES: usize = 20;

/// Finite dissipation summary from record index `start` onward.
pub fn convergence_report(
    field: &Arc<dyn SolutionField>,
    series: &ScaleSeries,
    options: &SeriesOptions,
    start: usize,
) -> Result<DissipationReport> {
    let n = series.dimension;
    if start + 1 >= series.len() {
        return Err(Error::InsufficientSeries(format!(
            "report needs two scales after index {start}, series has {}",
            series.len()
        )));
    }
    let recs = &series.records[start..];
    let times = &series.times()[start..];
    let f: Vec<f64> = recs.iter().map(|r| r.f).collect();
    let integral_f = trapezoid(times, &f);
    let last = *f.last().expect("non-empty");
    let quartile = (recs.len() / 4).max(3).min(recs.len());
    let fit_from = recs.len() - quartile;
    let (tail_f, tail_rate, tail_fit_r2) = if last == 0.0 {
        (0.0, None, None)
    } else {
        match exponential_fit(&times[fit_from..], &f[fit_from..]) {
            Some((rate, r2)) if rate > 0.0 => (last / rate, Some(rate), Some(r2)),
            Some((rate, r2)) => (f64::INFINITY, Some(rate), Some(r2)),
            None => (f64::INFINITY, None, None),
        }
    };
    let total_variation_b = recs.windows(2).map(|w| w[1].b.sub(&w[0].b).frobenius_norm()).sum();
    let b_inf = recs.last().expect("non-empty").b.clone();
    let eta = recs.iter().map(|r| r.eps).fold(0.0, f64::max);
    let mu = recs.iter().map(|r| r.f0()).fold(0.0, f64::max);

    let field_t = rescale(field.clone(), series.grid.end())?;
    let q = QuadraticProfile::new(b_inf.clone());
    let mut taylor_sup: f64 = 0.0;
    for x in options.projector.quadrature().nodes() {
        taylor_sup = taylor_sup.max((field_t.value(x)? - q.value(x)).abs());
    }
    Ok(DissipationReport {
        t_start: times[0],
        t_end: series.grid.end(),
        integral_f,
        tail_f,
        tail_rate,
        tail_fit_r2,
        total_variation_b,
        b_infinity_uncertainty: kappa(n)? * tail_f,
        b_infinity: b_inf,
        eta_t: eta,
        mu_t: mu,
        taylor_sup,
        max_f: max_dissipation(n)?,
        insufficient: recs.len() < MIN_REPORT_SCALES,
    })
}

/// Per-record invariants: trace consistency, derivative bound, projection
/// coordinate identity, dyadic partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordInvariants {
    /// `max |tr M − F|`.
    pub trace_gap: f64,
    /// `max (‖κₙ tf M‖_F − κₙF)`, must be `≤ 0`.
    pub derivative_excess: f64,
    /// `max_j |a_j − c_n B:E_j|` with the exact `c_n`.
    pub coordinate_gap: f64,
    /// `max (Σ_k F_k − F)` and `max (F − Σ_k F_k − tail bound)`, both `≤ tol`.
    pub partition_low: f64,
    pub partition_high: f64,
    /// Integration tolerance used for the partition: `3σ` or relative 1e-10.
    pub partition_tolerance: f64,
    /// Smallest eigenvalue lower bound of `M` over the series.
    pub min_eigen: f64,
}

pub fn record_invariants(series: &ScaleSeries, basis: &[TraceFreeSym]) -> Result<RecordInvariants> {
    let n = series.dimension;
    let kap = kappa(n)?;
    let c_n = gram_constant(n)?;
    let tail_bound = max_dissipation(n)? * 0.5f64.powi(((series.k_max + 1) * (n + 2)) as i32);
    let mut inv = RecordInvariants {
        trace_gap: 0.0,
        derivative_excess: f64::NEG_INFINITY,
        coordinate_gap: 0.0,
        partition_low: f64::NEG_INFINITY,
        partition_high: f64::NEG_INFINITY,
        partition_tolerance: 0.0,
        min_eigen: f64::INFINITY,
    };
    for r in &series.records {
        inv.trace_gap = inv.trace_gap.max((r.m.trace() - r.f).abs());
        let rhs = ode_rhs(r.m.as_slice(), n)?;
        inv.derivative_excess = inv.derivative_excess.max(rhs.frobenius_norm() - kap * r.f);
        for (j, e) in basis.iter().enumerate() {
            inv.coordinate_gap = inv.coordinate_gap.max((r.a[j] - c_n * r.b.dot(e)).abs());
        }
        let sum: f64 = r.f_k.iter().sum();
        let sigma = r.f_k_sigma.iter().map(|s| s * s).sum::<f64>().sqrt() + r.f_sigma;
        let tol = (3.0 * sigma).max(1e-10 * r.f) + 1e-15;
        inv.partition_tolerance = inv.partition_tolerance.max(tol);
        inv.partition_low = inv.partition_low.max(sum - r.f - tol);
        inv.partition_high = inv.partition_high.max(r.f - sum - tail_bound - tol);
        inv.min_eigen = inv.min_eigen.min(r.m.min_eigen_lower_bound());
    }
    Ok(inv)
}

/// `B(t)` of a field at one scale, without moments.
pub fn b_at(field: &Arc<dyn SolutionField>, t: f64, options: &SeriesOptions) -> Result<TraceFreeSym> {
    let field_t = rescale(field.clone(), t)?;
    Ok(compute_b(&field_t, &options.projector)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{build_synthetic, PatchConfig};

    #[test]
    fn ode_rhs_examples() {
        let m = ball_moment(&Ball { center: vec![0.5, 0.0], radius: 0.1 });
        let r = ode_rhs(m.as_slice(), 2).unwrap();
        assert!((r.get(0, 0) - 0.005).abs() < 1e-15);
        assert!((r.get(1, 1) + 0.005).abs() < 1e-15);
        let r = ode_rhs(SymMat::identity(3).scaled(2.5).as_slice(), 3).unwrap();
        assert!(r.frobenius_norm() < 1e-15);
        assert!((kappa(3).unwrap() - 15.0 / (4.0 * std::f64::consts::PI)).abs() < 1e-15);
        assert!(matches!(ode_rhs(&[1.0, 0.0, 1e-6, 1.0], 2), Err(Error::InvalidArgument(_))));
        assert!(ode_rhs(&[1.0, 0.0, 1e-9, 1.0], 2).is_ok());
    }

    #[test]
    fn volterra_constants() {
        let (s1, s2) = volterra_sums(2);
        let (mut d1, mut d2) = (0.0, 0.0);
        for k in 1..=60 {
            let w = 0.5f64.powi(4 * k);
            d1 += k as f64 * w;
            d2 += (k * k) as f64 * w;
        }
        assert!((s1 - 16.0 / 225.0).abs() < 1e-15 && (s1 - d1).abs() < 1e-15);
        assert!((s2 - 272.0 / 3375.0).abs() < 1e-15 && (s2 - d2).abs() < 1e-15);
        assert!((max_dissipation(2).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn moment_integral_matches_inside_law() {
        let ball = Ball { center: vec![0.1, 0.05], radius: 0.02 };
        let exact = ball_moment_integral(&ball, 0.0, 0.2);
        let numeric = adaptive_vec(0.0, 0.2, 4, 1e-15, 20, &|tau: f64, out: &mut [f64]| {
            out.copy_from_slice(ball_moment(&ball.scaled(tau.exp())).as_slice());
        });
        for (a, b) in exact.as_slice().iter().zip(&numeric) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn crossing_integral_matches_closed_drift() {
        // total ODE drift of a ball leaving B₁ equals ρⁿ(|c|^{-n} − |c|²) tf(ĉĉᵀ)
        let ball = Ball { center: vec![0.5, 0.0], radius: 0.05 };
        let m = ball_moment_integral(&ball, 0.0, 5.0);
        let drift = m.trace_free().scaled(kappa(2).unwrap());
        let want = 0.05f64.powi(2) * (0.5f64.powi(-2) - 0.25) * 0.5;
        assert!((drift.get(0, 0) - want).abs() < 1e-12, "{} {want}", drift.get(0, 0));
    }

    #[test]
    fn tail_sup_is_monotone() {
        let s = tail_sup(&[1.0, 3.0, 2.0, 0.5]);
        assert_eq!(s, vec![3.0, 3.0, 2.0, 0.5]);
    }

    #[test]
    fn lyapunov_refuses_consistency_mode() {
        let cfg = PatchConfig::from_json(r#"{"dimension":2,"seed":[0.0,0.0,0.0],"patches":[]}"#).unwrap();
        let field: Arc<dyn SolutionField> = Arc::new(build_synthetic(cfg).unwrap());
        let opts = SeriesOptions::new(2, super::super::IntegrationSpec::ClosedForm, 2).unwrap();
        let grid = super::super::ScaleGrid::dyadic(0.0, 1, 2).unwrap();
        let series = super::super::compute_series(field, &grid, &opts).unwrap();
        assert!(matches!(lyapunov_residual(&series), Err(Error::Mode(_))));
    }
}
