use std::sync::Arc;

use proptest::prelude::*;

use blowup::dynamics::{
    compute_b, compute_record, ode_rhs, IntegrationSpec, SeriesOptions, DEFAULT_SEED,
};
use blowup::fields::{build_synthetic, rescale, Ball, PatchConfig, SolutionField};
use blowup::harmonics::{kappa, Projector};

fn ball_strategy() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    // angle, distance, radius; kept apart by placing one ball per angular sector
    prop::collection::vec((0.0..1.0f64, 0.15..0.6f64, 0.005..0.03f64), 1..4)
}

fn field_from(spec: &[(f64, f64, f64)], seed: [f64; 2]) -> Arc<dyn SolutionField> {
    let k = spec.len() as f64;
    let patches = spec
        .iter()
        .enumerate()
        .map(|(i, (a, d, r))| {
            let th = 2.0 * std::f64::consts::PI * (i as f64 + 0.2 + 0.6 * a) / k;
            Ball {
                center: vec![d * th.cos(), d * th.sin()],
                radius: *r,
            }
        })
        .collect();
    Arc::new(
        build_synthetic(PatchConfig {
            dimension: 2,
            patches,
            seed: vec![seed[0], seed[1], -seed[0]],
        })
        .unwrap(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn derivative_bound_and_trace(spec in ball_strategy(), t in 0.0..1.5f64) {
        let field = field_from(&spec, [0.0, 0.0]);
        let opts = SeriesOptions::new(2, IntegrationSpec::ClosedForm, 4).unwrap();
        let r = compute_record(&field, t, 0, &opts).unwrap();
        prop_assert!((r.m.trace() - r.f).abs() <= 1e-12 * (1.0 + r.f));
        let rhs = ode_rhs(r.m.as_slice(), 2).unwrap();
        prop_assert!(rhs.frobenius_norm() <= kappa(2).unwrap() * r.f * (1.0 + 1e-12) + 1e-15);
        prop_assert!(r.f <= blowup::dynamics::checks::max_dissipation(2).unwrap());
        let parts: f64 = r.f_k.iter().sum::<f64>() + r.f_rest;
        prop_assert!((parts - r.f).abs() <= 1e-9 * (1.0 + r.f));
    }

    #[test]
    fn scaling_covariance(spec in ball_strategy(), seed in prop::array::uniform2(-0.2..0.2f64),
                          t in 0.0..1.0f64, s in 0.0..1.0f64) {
        let field = field_from(&spec, seed);
        let p = Projector::for_dimension(2).unwrap();
        let direct = compute_b(&rescale(field.clone(), t + s).unwrap(), &p).unwrap().0;
        let inner: Arc<dyn SolutionField> = Arc::new(rescale(field, s).unwrap());
        let nested = compute_b(&rescale(inner, t).unwrap(), &p).unwrap().0;
        prop_assert!(direct.sub(&nested).frobenius_norm() <= 1e-9 * (1.0 + direct.frobenius_norm()));
    }

    #[test]
    fn ode_rhs_is_trace_free_and_linear(v in prop::collection::vec(-1.0..1.0f64, 3), w in -2.0..2.0f64) {
        let m = [v[0], v[1], v[1], v[2]];
        let a = ode_rhs(&m, 2).unwrap();
        prop_assert!(a.trace().abs() <= 1e-14);
        let scaled: Vec<f64> = m.iter().map(|x| x * w).collect();
        let b = ode_rhs(&scaled, 2).unwrap();
        prop_assert!(b.sub(&a.scaled(w)).frobenius_norm() <= 1e-13);
        // identity drops out
        let shifted = [m[0] + 0.7, m[1], m[2], m[3] + 0.7];
        prop_assert!(ode_rhs(&shifted, 2).unwrap().sub(&a).frobenius_norm() <= 1e-13);
    }

    // balls large enough that every stratum sees some hits
    #[test]
    fn sampled_moments_stay_near_closed_form(
        spec in prop::collection::vec((0.0..1.0f64, 0.2..0.6f64, 0.03..0.06f64), 1..4),
        t in 0.0..0.4f64,
    ) {
        let field = field_from(&spec, [0.0, 0.0]);
        let exact = compute_record(&field, t, 0, &SeriesOptions::new(2, IntegrationSpec::ClosedForm, 4).unwrap()).unwrap();
        let sampled = compute_record(
            &field,
            t,
            0,
            &SeriesOptions::new(2, IntegrationSpec::Sampled { samples_per_region: 16384, seed: DEFAULT_SEED }, 4).unwrap(),
        )
        .unwrap();
                prop_assert!((exact.f - sampled.f).abs() <= 6.0 * sampled.f_sigma + 1e-12);
    }
}
