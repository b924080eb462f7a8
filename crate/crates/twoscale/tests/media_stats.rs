//! Statistical checks of the two coefficient families against their
//! closed-form moments, plus reproducibility of the samplers.

use rand::Rng;
use twoscale::media::{
    sample_coarse, v_alpha_mean, ConvolvedCoarse, MediaFamily, MediaModel, ParameterizedCoarse,
};
use twoscale::rng::Substream;

#[test]
fn parameterized_coefficient_respects_the_ellipticity_interval() {
    let mut rng = Substream::new(2024, 0).rng();
    for trial in 0..100 {
        let family = MediaFamily::Parameterized { r: 0.75, nu_b: 0.5 };
        let model =
            sample_coarse(family, Substream::new(2024, 1 + trial)).expect("coarse profile samples");
        let eps = 1.0 / 32.0;
        let real = model
            .sample_fine(eps, Substream::new(2024, 1000 + trial))
            .expect("fine field samples");
        for _ in 0..100 {
            let s: f64 = rng.random_range(0.0..1.0);
            let inv = model.inv_coeff_at(&real, s).expect("coefficient is positive");
            let a = 1.0 / inv;
            assert!(
                (1.0 / 32.0..=3.5).contains(&a),
                "coefficient {a} at {s} left [1/32, 7/2]"
            );
        }
    }
}

#[test]
fn bounded_inverse_mean_matches_the_log_formula() {
    // E[1/(alpha + Theta/2)] = log((alpha + 1/2)/(alpha - 1/2)) for
    // Theta ~ U[-1, 1], checked by plain Monte Carlo at three profiles
    let n = 1_000_000usize;
    for (k, &alpha) in [17.0 / 32.0, 1.0, 2.0].iter().enumerate() {
        let mut rng = Substream::new(7, k as u64).rng();
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let theta: f64 = rng.random_range(-1.0..=1.0);
            let v = 1.0 / (alpha + 0.5 * theta);
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / n as f64;
        let se = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
        let exact = ((alpha + 0.5) / (alpha - 0.5)).ln();
        assert!(
            (mean - exact).abs() < 3.0 * se,
            "alpha {alpha}: sample mean {mean} vs {exact} (3 se = {})",
            3.0 * se
        );
        assert!((v_alpha_mean(alpha, 0.5) - exact).abs() < 1e-12);
    }
}

#[test]
fn convolved_inverse_mean_matches_dof_times_kernel_mass() {
    let conv = ConvolvedCoarse::boxcar(3, 4, 0.8).expect("valid kernel");
    let model = MediaModel::Convolved(conv.clone());
    let exact = conv.xi as f64 * conv.h_l1();
    let cells_per_draw = 1000usize;
    let draws = 1000usize;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for i in 0..draws {
        let real = model
            .sample_fine(1.0 / cells_per_draw as f64, Substream::new(11, i as u64))
            .expect("fine field samples");
        for &g in &real.inv_cells {
            sum += g;
            sumsq += g * g;
        }
    }
    let n = (cells_per_draw * draws) as f64;
    let mean = sum / n;
    // cells within a draw are kappa-dependent, so the standard error uses
    // the effective count n / kappa rather than n
    let se = ((sumsq / n - mean * mean) / (n / conv.kappa() as f64)).sqrt();
    assert!(
        (mean - exact).abs() < 3.0 * se,
        "sample mean of 1/A {mean} vs {exact} (3 se = {})",
        3.0 * se
    );
}

#[test]
fn homogenized_coefficient_is_deterministic() {
    let model = MediaModel::Parameterized(ParameterizedCoarse::new([
        0.15, -0.1, 0.12, -0.08, 0.1, -0.05, 0.06, -0.04,
    ]));
    for &x in &[0.1, 0.5, 0.9] {
        let a = model.homogenized_coeff(x).expect("profile exceeds noise");
        let b = model.homogenized_coeff(x).expect("profile exceeds noise");
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn fine_sampling_is_reproducible_per_substream() {
    let model = MediaModel::Convolved(ConvolvedCoarse::boxcar(1, 2, 1.0).expect("valid kernel"));
    let r1 = model
        .sample_fine(1.0 / 64.0, Substream::new(99, 5))
        .expect("samples");
    let r2 = model
        .sample_fine(1.0 / 64.0, Substream::new(99, 5))
        .expect("samples");
    assert_eq!(r1, r2);
    let r3 = model
        .sample_fine(1.0 / 64.0, Substream::new(99, 6))
        .expect("samples");
    assert_ne!(r1.inv_cells, r3.inv_cells);
}
