//! Fixed-seed stratified sampling of spherical shells.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::quad::sphere_area;

/// One stratified sample: the point and its cell volume. Consecutive
/// samples `(2i, 2i+1)` come from neighboring strata and are used as pairs
/// for the variance estimate.
#[derive(Clone, Debug)]
pub struct Sample {
    pub x: Vec<f64>,
    pub volume: f64,
}

/// Random stream for `(seed, scale index, region, purpose)`.
pub fn stream(seed: u64, scale: usize, region: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((scale as u64) << 24) ^ ((region as u64) << 8) ^ purpose);
    rng
}

fn gaussian_direction(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    loop {
        let mut norm = 0.0;
        for v in out.iter_mut() {
            let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
            let u2: f64 = rng.gen();
            *v = (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos();
            norm += *v * *v;
        }
        if norm > 1e-20 {
            let s = norm.sqrt();
            out.iter_mut().for_each(|v| *v /= s);
            return;
        }
    }
}

/// One sample per stratum of `{r_lo ≤ |x| ≤ r_hi}`; strata are equal-volume
/// cells in `(rⁿ, angles)`: `(r², θ)` for `n = 2`, `(r³, cos φ, azimuth)` for
/// `n = 3`, and `rⁿ` alone (random directions) for `n ≥ 4`. `target` is
/// rounded up to a layout with an even number of strata.
pub fn stratified_shell(n: usize, r_lo: f64, r_hi: f64, target: usize, rng: &mut ChaCha8Rng) -> Vec<Sample> {
    let target = target.max(4);
    let (lo_n, hi_n) = (r_lo.powi(n as i32), r_hi.powi(n as i32));
    let volume = sphere_area(n).expect("n >= 2") / n as f64 * (hi_n - lo_n);
    let radius = |u: f64| u.max(0.0).powf(1.0 / n as f64);
    let mut out = Vec::with_capacity(target + 2);
    match n {
        2 => {
            let sr = ((target as f64 / 4.0).sqrt().floor() as usize).max(1);
            let st = 2 * target.div_ceil(2 * sr);
            let v = volume / (sr * st) as f64;
            for i in 0..sr {
                for k in 0..st {
                    let u = lo_n + (hi_n - lo_n) * (i as f64 + rng.gen::<f64>()) / sr as f64;
                    let th = 2.0 * PI * (k as f64 + rng.gen::<f64>()) / st as f64;
                    let r = radius(u);
                    out.push(Sample { x: vec![r * th.cos(), r * th.sin()], volume: v });
                }
            }
        }
        3 => {
            let sr = ((target as f64 / 8.0).cbrt().floor() as usize).max(1);
            let sz = 2 * sr;
            let sa = 2 * target.div_ceil(2 * sr * sz);
            let v = volume / (sr * sz * sa) as f64;
            for i in 0..sr {
                for j in 0..sz {
                    for k in 0..sa {
                        let u = lo_n + (hi_n - lo_n) * (i as f64 + rng.gen::<f64>()) / sr as f64;
                        let z = -1.0 + 2.0 * (j as f64 + rng.gen::<f64>()) / sz as f64;
                        let ph = 2.0 * PI * (k as f64 + rng.gen::<f64>()) / sa as f64;
                        let r = radius(u);
                        let s = (1.0 - z * z).max(0.0).sqrt();
                        out.push(Sample {
                            x: vec![r * s * ph.cos(), r * s * ph.sin(), r * z],
                            volume: v,
                        });
                    }
                }
            }
        }
        _ => {
            let strata = 2 * target.div_ceil(2);
            let v = volume / strata as f64;
            let mut dir = vec![0.0; n];
            for i in 0..strata {
                let u = lo_n + (hi_n - lo_n) * (i as f64 + rng.gen::<f64>()) / strata as f64;
                gaussian_direction(rng, &mut dir);
                let r = radius(u);
                out.push(Sample { x: dir.iter().map(|d| d * r).collect(), volume: v });
            }
        }
    }
    out
}

/// Estimate and one-sigma error of `Σ V f` from per-sample integrand values,
/// using paired neighboring strata.
pub fn paired_estimate(samples: &[Sample], values: &[f64]) -> (f64, f64) {
    let total = samples.iter().zip(values).map(|(s, v)| s.volume * v).sum();
    let var: f64 = samples
        .chunks_exact(2)
        .zip(values.chunks_exact(2))
        .map(|(s, v)| (s[0].volume * (v[0] - v[1])).powi(2))
        .sum();
    (total, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volumes_and_radii() {
        for n in 2..=5 {
            let mut rng = stream(1, 0, 0, 0);
            let s = stratified_shell(n, 0.5, 1.0, 1000, &mut rng);
            assert_eq!(s.len() % 2, 0);
            let vol: f64 = s.iter().map(|p| p.volume).sum();
            let want = sphere_area(n).unwrap() / n as f64 * (1.0 - 0.5f64.powi(n as i32));
            assert!((vol - want).abs() < 1e-12 * want);
            for p in &s {
                let r: f64 = p.x.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((0.5..=1.0 + 1e-12).contains(&r));
            }
        }
    }

    #[test]
    fn second_moment_estimate_within_sigma() {
        // ∫_{A₀} |x|² = |∂B₁|(1 − 2^{-(n+2)})/(n+2)
        for n in 2..=4 {
            let mut rng = stream(7, 3, 0, 1);
            let s = stratified_shell(n, 0.5, 1.0, 4096, &mut rng);
            let vals: Vec<f64> = s.iter().map(|p| p.x.iter().map(|v| v * v).sum()).collect();
            let (est, sigma) = paired_estimate(&s, &vals);
            let want = sphere_area(n).unwrap() * (1.0 - 0.5f64.powi(n as i32 + 2)) / (n + 2) as f64;
            assert!((est - want).abs() <= 4.0 * sigma.max(1e-12), "n={n} {est} {want} {sigma}");
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = stratified_shell(2, 0.0, 1.0, 64, &mut stream(5, 1, 2, 3));
        let b = stratified_shell(2, 0.0, 1.0, 64, &mut stream(5, 1, 2, 3));
        let c = stratified_shell(2, 0.0, 1.0, 64, &mut stream(5, 1, 3, 3));
        assert_eq!(a[10].x, b[10].x);
        assert_ne!(a[10].x, c[10].x);
    }
}
