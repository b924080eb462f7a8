//! Property-based invariants: algebraic identities of the forcing term,
//! homogeneity and feasibility of the solution vector, distributional
//! identities of the sampling helpers, and closed forms the transforms
//! must reproduce for arbitrary inputs.

use proptest::prelude::*;
use twoscale::corrector::gaussian_rate;
use twoscale::ldp::legendre_1d;
use twoscale::media::{ConvolvedCoarse, MediaModel, ParameterizedCoarse};
use twoscale::montecarlo::{
    bradford_inverse, bradford_log_density, empirical_rate, Tilt, WeightedSamples,
};
use twoscale::quad::adaptive_simpson;
use twoscale::rng::Substream;
use twoscale::solver::ZVector;
use twoscale::source::SourceSpec;

/// Break [0, 1] at the given interior cuts and attach one height per piece.
fn partition_source(cuts: &[f64], heights: &[f64]) -> Option<SourceSpec> {
    let mut edges = vec![0.0];
    edges.extend_from_slice(cuts);
    edges.push(1.0);
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if edges.windows(2).any(|w| w[1] - w[0] < 1e-3) {
        return None;
    }
    let pieces: Vec<(f64, f64, f64)> = edges
        .windows(2)
        .zip(heights)
        .map(|(w, &h)| (w[0], w[1], h))
        .collect();
    SourceSpec::new(&pieces).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn source_integrals_are_consistent_on_random_partitions(
        cuts in prop::collection::vec(0.01..0.99f64, 0..4),
        heights in prop::collection::vec(-10.0..10.0f64, 5),
        a in 0.0..1.0f64,
        b in 0.0..1.0f64,
    ) {
        let Some(f) = partition_source(&cuts, &heights) else {
            return Ok(());
        };
        let n_pieces = cuts.len() + 1;
        let mut edges = vec![0.0];
        edges.extend_from_slice(f.breakpoints());
        edges.push(1.0);
        let total: f64 = edges
            .windows(2)
            .zip(&heights[..n_pieces])
            .map(|(w, &h)| h * (w[1] - w[0]))
            .sum();
        let l2_sq: f64 = edges
            .windows(2)
            .zip(&heights[..n_pieces])
            .map(|(w, &h)| h * h * (w[1] - w[0]))
            .sum();
        prop_assert!((f.integral(0.0)).abs() <= 1e-15);
        prop_assert!((f.integral(1.0) - total).abs() <= 1e-12 * (1.0 + total.abs()));
        prop_assert!((f.l2_norm().powi(2) - l2_sq).abs() <= 1e-10 * (1.0 + l2_sq));
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let diff = f.double_integral(hi) - f.double_integral(lo);
        prop_assert!(
            (f.integral_of_integral(lo, hi) - diff).abs() <= 1e-12 * (1.0 + diff.abs())
        );
        // away from the kinks the double integral is a single quadratic, so
        // its central difference recovers the running integral exactly
        let x = 0.5 * (lo + hi);
        if (1e-3..=1.0 - 1e-3).contains(&x)
            && f.breakpoints().iter().all(|&t| (t - x).abs() > 1e-4)
        {
            let h = 1e-6;
            let fd = (f.double_integral(x + h) - f.double_integral(x - h)) / (2.0 * h);
            prop_assert!((fd - f.integral(x)).abs() <= 1e-8 * (1.0 + f.integral(x).abs()));
        }
    }

    #[test]
    fn scaling_the_source_scales_its_functionals(
        k in -20.0..20.0f64,
        x in 0.0..1.0f64,
    ) {
        let f = SourceSpec::unit_bump();
        let g = f.scaled(k);
        prop_assert!((g.value(x) - k * f.value(x)).abs() <= 1e-12 * (1.0 + k.abs()));
        prop_assert!((g.integral(x) - k * f.integral(x)).abs() <= 1e-12 * (1.0 + k.abs()));
        prop_assert!((g.l2_norm() - k.abs() * f.l2_norm()).abs() <= 1e-12 * (1.0 + k.abs()));
    }

    #[test]
    fn solution_vector_is_homogeneous_of_degree_one(
        z1 in -5.0..5.0f64,
        z2 in -5.0..5.0f64,
        frac in 0.01..0.99f64,
        z4 in 0.1..10.0f64,
        c in 0.01..100.0f64,
    ) {
        let z3 = frac * z4;
        let z = ZVector::new(z1, z2, z3, z4).expect("feasible");
        let zc = ZVector::new(c * z1, c * z2, c * z3, c * z4).expect("still feasible");
        let (v, vc) = (z.value(), zc.value());
        prop_assert!((vc - c * v).abs() <= 1e-9 * (1.0 + (c * v).abs()));
    }

    #[test]
    fn infeasible_solution_vectors_are_rejected(
        z1 in -5.0..5.0f64,
        z2 in -5.0..5.0f64,
        z3 in -5.0..5.0f64,
        z4 in 0.1..10.0f64,
    ) {
        if z3 <= 0.0 || z3 >= z4 {
            prop_assert!(ZVector::new(z1, z2, z3, z4).is_err());
        } else {
            prop_assert!(ZVector::new(z1, z2, z3, z4).is_ok());
        }
    }

    #[test]
    fn bradford_inverse_inverts_the_distribution_function(
        c in 0.01..200.0f64,
        u in 0.0..1.0f64,
    ) {
        let theta = bradford_inverse(c, u);
        prop_assert!((-1.0..=1.0).contains(&theta));
        let cdf = (1.0 + 0.5 * c * (theta + 1.0)).ln() / (1.0 + c).ln();
        prop_assert!((cdf - u).abs() <= 1e-9);
        prop_assert!(bradford_log_density(c, theta.clamp(-0.999_999, 0.999_999)).is_finite());
    }

    #[test]
    fn bradford_density_integrates_to_one(c in 0.01..100.0f64) {
        let mass = adaptive_simpson(
            |t| bradford_log_density(c, t).exp(),
            -1.0,
            1.0,
            1e-10,
        )
        .expect("integrable density");
        prop_assert!((mass - 1.0).abs() <= 1e-8, "mass {mass} for c {c}");
    }

    #[test]
    fn uniform_weight_shifts_leave_weighted_statistics_alone(
        values in prop::collection::vec(-10.0..10.0f64, 5..60),
        weights in prop::collection::vec(-3.0..3.0f64, 60),
        shift in -50.0..50.0f64,
    ) {
        let n = values.len();
        let base = WeightedSamples {
            values: values.clone(),
            log_weights: weights[..n].to_vec(),
            epsilon: 0.01,
            x: 0.5,
            master_seed: 0,
            tilt: Tilt::Direct,
        };
        let shifted = WeightedSamples {
            log_weights: base.log_weights.iter().map(|w| w + shift).collect(),
            ..base.clone()
        };
        prop_assert!(
            (base.weighted_mean() - shifted.weighted_mean()).abs()
                <= 1e-10 * (1.0 + base.weighted_mean().abs())
        );
        prop_assert!((base.ess() - shifted.ess()).abs() <= 1e-9 * base.ess());
    }

    #[test]
    fn empirical_tail_counts_shrink_as_the_level_rises(
        values in prop::collection::vec(-1.0..1.0f64, 30..300),
    ) {
        let n = values.len();
        let samples = WeightedSamples {
            values,
            log_weights: vec![0.0; n],
            epsilon: 0.01,
            x: 0.5,
            master_seed: 0,
            tilt: Tilt::Direct,
        };
        let mean = samples.weighted_mean();
        let top = samples.values.iter().cloned().fold(f64::MIN, f64::max) + 0.1;
        let levels: Vec<f64> = (0..8).map(|k| mean + (top - mean) * k as f64 / 7.0).collect();
        let est = empirical_rate(&samples, &levels).expect("estimator runs");
        for w in est.n_exceed_per_level.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        for w in est.values.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-15);
        }
        prop_assert!(est.clipped.iter().all(|&c| !c));
        prop_assert_eq!(est.n_exceed_per_level[7], 0);
        prop_assert_eq!(est.values[7], f64::NEG_INFINITY);
    }

    #[test]
    fn quadratic_transform_recovers_the_closed_form(
        a in 0.1..10.0f64,
        ell in -5.0..5.0f64,
    ) {
        let res = legendre_1d(|l| 0.5 * a * l * l, ell);
        let exact = ell * ell / (2.0 * a);
        prop_assert!((res.rate - exact).abs() <= 1e-7 * (1.0 + exact));
        prop_assert!((res.lambda_star - ell / a).abs() <= 1e-5 * (1.0 + (ell / a).abs()));
    }

    #[test]
    fn gaussian_rate_is_half_the_squared_standardized_distance(
        u0 in -5.0..5.0f64,
        c_c in 1e-6..10.0f64,
        ell in -5.0..5.0f64,
    ) {
        let r = gaussian_rate(u0, c_c, ell).expect("positive variance");
        let exact = (ell - u0).powi(2) / (2.0 * c_c);
        prop_assert!((r - exact).abs() <= 1e-12 * (1.0 + exact));
    }

    #[test]
    fn sampled_media_stay_elliptic(
        xi in prop::array::uniform8(-1.0..1.0f64),
        seed in 0u64..1000,
    ) {
        let model = MediaModel::Parameterized(ParameterizedCoarse::new(xi));
        let real = model
            .sample_fine(0.125, Substream::new(seed, 0))
            .expect("fine field samples");
        for k in 0..40 {
            let s = (k as f64 + 0.5) / 40.0;
            let inv = model.inv_coeff_at(&real, s).expect("coefficient is elliptic");
            // generous envelope around the construction's hard bounds
            prop_assert!(inv > 0.2 && inv <= 32.0, "1/A = {inv} out of range at {s}");
        }
    }

    #[test]
    fn convolved_media_stay_positive(
        xi in 1u64..6,
        kappa in 1usize..4,
        h_l1 in 0.1..3.0f64,
        seed in 0u64..1000,
    ) {
        let model = MediaModel::Convolved(
            ConvolvedCoarse::boxcar(xi, kappa, h_l1).expect("valid kernel"),
        );
        let real = model
            .sample_fine(0.125, Substream::new(seed, 1))
            .expect("fine field samples");
        for &inv in &real.inv_cells {
            prop_assert!(inv > 0.0 && inv.is_finite());
        }
    }
}
