use crate::error::{Error, Result};

/// Newtonian potential `w` of the ball `B(center, radius)`: the radial
/// `C^{1,1}` function with `Δw = χ_{B(center, radius)}`, normalized so that
/// `w = r²/(2n)` inside. Writes the gradient into `grad` and returns the
/// value.
pub fn ball_potential(center: &[f64], radius: f64, x: &[f64], grad: &mut [f64]) -> Result<f64> {
    let n = center.len();
    if n < 2 {
        return Err(Error::InvalidDimension(n));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidArgument(format!("ball radius must be positive, got {radius}")));
    }
    if x.len() != n || grad.len() != n {
        return Err(Error::InvalidArgument("point dimension mismatch".into()));
    }
    Ok(ball_potential_unchecked(center, radius, x, grad))
}

pub(crate) fn ball_potential_unchecked(center: &[f64], rho: f64, x: &[f64], grad: &mut [f64]) -> f64 {
    let n = center.len();
    let nf = n as f64;
    let mut r2 = 0.0;
    for i in 0..n {
        let d = x[i] - center[i];
        grad[i] = d;
        r2 += d * d;
    }
    if r2 <= rho * rho {
        grad.iter_mut().for_each(|g| *g /= nf);
        return r2 / (2.0 * nf);
    }
    let r = r2.sqrt();
    if n == 2 {
        let s = rho * rho / (2.0 * r2);
        grad.iter_mut().for_each(|g| *g *= s);
        rho * rho / 4.0 + 0.5 * rho * rho * (r / rho).ln()
    } else {
        let rho_n = rho.powi(n as i32);
        let s = rho_n / nf * r.powi(-(n as i32));
        grad.iter_mut().for_each(|g| *g *= s);
        let k = nf * (nf - 2.0);
        rho * rho / (2.0 * nf) + rho * rho / k - rho_n / k * r.powi(2 - n as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_laplacian(c: &[f64], rho: f64, x: &[f64], h: f64) -> f64 {
        let n = x.len();
        let mut g = vec![0.0; n];
        let u0 = ball_potential_unchecked(c, rho, x, &mut g);
        let mut acc = 0.0;
        let mut y = x.to_vec();
        for i in 0..n {
            y[i] = x[i] + h;
            let up = ball_potential_unchecked(c, rho, &y, &mut g);
            y[i] = x[i] - h;
            let dn = ball_potential_unchecked(c, rho, &y, &mut g);
            y[i] = x[i];
            acc += up - 2.0 * u0 + dn;
        }
        acc / (h * h)
    }

    #[test]
    fn boundary_values_n2() {
        let mut g = [0.0; 2];
        let v = ball_potential(&[0.0, 0.0], 1.0, &[1.0, 0.0], &mut g).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
        assert!((g[0] - 0.5).abs() < 1e-15 && g[1] == 0.0);
    }

    #[test]
    fn exterior_n2() {
        let mut g = [0.0; 2];
        let v = ball_potential(&[0.0, 0.0], 0.1, &[0.2, 0.0], &mut g).unwrap();
        assert!((v - (0.0025 + 0.005 * 2f64.ln())).abs() < 1e-15);
        assert!((g[0] - 0.025).abs() < 1e-15);
        // harmonic outside
        assert!(fd_laplacian(&[0.0, 0.0], 0.1, &[0.2, 0.05], 1e-4).abs() < 1e-5);
        assert!((fd_laplacian(&[0.0, 0.0], 0.1, &[0.03, 0.02], 1e-4) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn exterior_n3_flux() {
        let mut g = [0.0; 3];
        ball_potential(&[0.0; 3], 0.1, &[0.2, 0.0, 0.0], &mut g).unwrap();
        // |∇w| = |B_ρ| / (|∂B₁| r^{n-1}) = (4π/3 ρ³)/(4π r²)
        let flux = (0.1f64.powi(3) / 3.0) / 0.04;
        assert!((g[0] - flux).abs() < 1e-15);
        assert!((g[0] - 0.008_333_333_333).abs() < 1e-12);
        assert!(fd_laplacian(&[0.0; 3], 0.1, &[0.2, 0.1, -0.05], 1e-4).abs() < 1e-5);
    }

    #[test]
    fn continuous_across_surface() {
        for n in 2..=4 {
            let c = vec![0.1; n];
            let rho = 0.3;
            let mut dir = vec![0.0; n];
            dir[0] = 1.0;
            let inside: Vec<f64> = c.iter().zip(&dir).map(|(ci, d)| ci + d * (rho - 1e-12)).collect();
            let outside: Vec<f64> = c.iter().zip(&dir).map(|(ci, d)| ci + d * (rho + 1e-12)).collect();
            let (mut gi, mut go) = (vec![0.0; n], vec![0.0; n]);
            let vi = ball_potential_unchecked(&c, rho, &inside, &mut gi);
            let vo = ball_potential_unchecked(&c, rho, &outside, &mut go);
            assert!((vi - vo).abs() < 1e-11);
            for i in 0..n {
                assert!((gi[i] - go[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_bad_radius() {
        let mut g = [0.0; 2];
        assert!(ball_potential(&[0.0, 0.0], 0.0, &[1.0, 0.0], &mut g).is_err());
        assert!(ball_potential(&[0.0, 0.0], -1.0, &[1.0, 0.0], &mut g).is_err());
    }
}
