//! Second moments `∫ x ⊗ x` of balls, whole or clipped to a spherical shell.

use std::f64::consts::PI;

use crate::fields::Ball;
use crate::harmonics::SymMat;
use crate::quad::{gamma_half, gauss_legendre};

/// How a ball sits relative to the shell `{r_lo < |x| < r_hi}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Placement {
    Inside,
    Outside,
    Straddles,
}

pub fn placement(ball: &Ball, r_lo: f64, r_hi: f64) -> Placement {
    let c = ball.center_norm();
    let (near, far) = (c - ball.radius, c + ball.radius);
    if near >= r_lo && far <= r_hi {
        Placement::Inside
    } else if far <= r_lo || near >= r_hi {
        Placement::Outside
    } else {
        Placement::Straddles
    }
}

/// `∫_{B(c,ρ)} x ⊗ x = ωₙρⁿ(c ⊗ c + ρ²/(n+2) I)`.
pub fn ball_moment(ball: &Ball) -> SymMat {
    let n = ball.center.len();
    let omega = 2.0 * PI.powf(n as f64 / 2.0) / gamma_half(n) / n as f64;
    let vol = omega * ball.radius.powi(n as i32);
    let mut m = SymMat::outer(&ball.center).scaled(vol);
    m.add_assign(&SymMat::identity(n), vol * ball.radius * ball.radius / (n + 2) as f64);
    m
}

/// `J_m(α) = ∫₀^α sin^m β dβ`.
fn sine_power_integrals(alpha: f64, up_to: usize) -> Vec<f64> {
    let mut j = vec![0.0; up_to + 1];
    j[0] = alpha;
    if up_to >= 1 {
        j[1] = 1.0 - alpha.cos();
    }
    let (s, c) = alpha.sin_cos();
    for m in 2..=up_to {
        j[m] = (-s.powi(m as i32 - 1) * c + (m - 1) as f64 * j[m - 2]) / m as f64;
    }
    j
}

/// Gauss–Legendre nodes used for clipped balls.
const CLIP_NODES: usize = 48;

/// `∫_{B(c,ρ) ∩ {r_lo < |x| < r_hi}} x ⊗ x`, evaluated as a radial integral
/// of spherical-cap moments; `r = |c| − ρ cos β` removes the square-root
/// endpoint behavior so a fixed Gauss rule in `β` converges fast.
pub fn ball_shell_moment(ball: &Ball, r_lo: f64, r_hi: f64) -> SymMat {
    let n = ball.center.len();
    match placement(ball, r_lo, r_hi) {
        Placement::Outside => return SymMat::zeros(n),
        Placement::Inside => return ball_moment(ball),
        Placement::Straddles => {}
    }
    let cn = ball.center_norm();
    let rho = ball.radius;
    let a = r_lo.max(cn - rho).max(0.0);
    let b = r_hi.min(cn + rho);
    let beta_of = |r: f64| ((cn - r) / rho).clamp(-1.0, 1.0).acos();
    let (b0, b1) = (beta_of(a), beta_of(b));
    let sphere_lower = 2.0 * PI.powf((n - 1) as f64 / 2.0) / gamma_half(n - 1);
    let (nodes, weights) = gauss_legendre(CLIP_NODES);
    let (mid, half) = (0.5 * (b0 + b1), 0.5 * (b1 - b0));
    let (mut axial, mut total) = (0.0, 0.0);
    for (x, w) in nodes.iter().zip(&weights) {
        let beta = mid + half * x;
        let r = cn - rho * beta.cos();
        let jac = rho * beta.sin();
        let cos_alpha = ((r * r + cn * cn - rho * rho) / (2.0 * r * cn)).clamp(-1.0, 1.0);
        let j = sine_power_integrals(cos_alpha.acos(), n);
        let area = sphere_lower * j[n - 2];
        let cos2 = sphere_lower * (j[n - 2] - j[n]);
        let scale = w * half * jac * r.powi(n as i32 + 1);
        axial += scale * cos2;
        total += scale * area;
    }
    let unit: Vec<f64> = ball.center.iter().map(|v| v / cn).collect();
    let lateral = (total - axial) / (n - 1) as f64;
    let mut m = SymMat::identity(n).scaled(lateral);
    m.add_outer(&unit, axial - lateral);
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &SymMat, b: &SymMat, tol: f64) -> bool {
        a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn single_ball_example() {
        let b = Ball { center: vec![0.5, 0.0], radius: 0.1 };
        let m = ball_moment(&b);
        assert!((m.trace() - PI * 0.01 * 0.255).abs() < 1e-15);
        let tf = m.trace_free();
        assert!((tf.get(0, 0) - PI * 0.01 * 0.125).abs() < 1e-15);
    }

    #[test]
    fn clipped_reduces_to_closed_form() {
        for n in 2..=5 {
            let mut c = vec![0.0; n];
            c[0] = 0.4;
            c[1] = -0.3;
            let b = Ball { center: c, radius: 0.2 };
            let whole = ball_moment(&b);
            // shell boundaries cutting through the ball on both sides
            let parts = [(0.0, 0.35), (0.35, 0.55), (0.55, 1.0)];
            let mut sum = SymMat::zeros(n);
            for (lo, hi) in parts {
                assert_eq!(placement(&b, lo, hi), Placement::Straddles);
                sum.add_assign(&ball_shell_moment(&b, lo, hi), 1.0);
            }
            assert!(close(&sum, &whole, 1e-13 * whole.trace()), "n={n}");
        }
    }

    #[test]
    fn half_ball_by_symmetry() {
        // ball centered on the unit sphere: the inside part of a tiny ball is
        // close to half of it, and exact halves are not available, so compare
        // against a fine polar-grid sum instead.
        let b = Ball { center: vec![1.0, 0.0], radius: 0.3 };
        let m = ball_shell_moment(&b, 0.0, 1.0);
        let (nr, nt) = (4000, 4000);
        let mut acc = [0.0; 3];
        for i in 0..nr {
            let r = 0.7 + 0.3 * (i as f64 + 0.5) / nr as f64;
            for k in 0..nt {
                let th = -0.7 + 1.4 * (k as f64 + 0.5) / nt as f64;
                let (x, y) = (r * th.cos(), r * th.sin());
                if (x - 1.0).powi(2) + y * y <= 0.09 {
                    let w = r * (0.3 / nr as f64) * (1.4 / nt as f64);
                    acc[0] += w * x * x;
                    acc[1] += w * x * y;
                    acc[2] += w * y * y;
                }
            }
        }
        assert!((m.get(0, 0) - acc[0]).abs() < 2e-6);
        assert!((m.get(0, 1) - acc[1]).abs() < 2e-6);
        assert!((m.get(1, 1) - acc[2]).abs() < 2e-6);
    }

    #[test]
    fn outside_is_zero() {
        let b = Ball { center: vec![2.0, 0.0], radius: 0.3 };
        assert_eq!(ball_shell_moment(&b, 0.0, 1.0).trace(), 0.0);
    }
}
