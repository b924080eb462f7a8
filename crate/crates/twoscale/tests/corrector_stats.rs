//! Distributional checks of the Gaussian corrector: normality of sampled
//! paths, discretization convergence of the Wiener sum, and agreement of
//! the predicted variance with brute-force solves at small cell width.

use statrs::distribution::{ContinuousCDF, Normal};
use twoscale::corrector::{corrector_variance, cross_covariance, CorrectorSampler, CorrectorSpec};
use twoscale::media::{ConvolvedCoarse, MediaModel, ParameterizedCoarse};
use twoscale::rng::Substream;
use twoscale::solver::{FineSolver, Homogenized};
use twoscale::source::SourceSpec;

fn mild_model() -> MediaModel {
    MediaModel::Parameterized(ParameterizedCoarse::new([
        0.15, -0.1, 0.12, -0.08, 0.1, -0.05, 0.06, -0.04,
    ]))
}

fn convolved_unit() -> MediaModel {
    MediaModel::Convolved(ConvolvedCoarse::boxcar(1, 1, 1.0).expect("valid kernel"))
}

#[test]
fn sampled_corrector_passes_the_ks_normality_test() {
    let spec = CorrectorSpec::new(convolved_unit(), SourceSpec::unit_bump());
    let c_c = corrector_variance(&spec, 0.5).expect("variance integral");
    let sampler = CorrectorSampler::new(&spec, &[0.5]).expect("sampler builds");
    let n = 10_000usize;
    let mut draws: Vec<f64> = (0..n)
        .map(|i| sampler.sample(Substream::new(314, i as u64))[0])
        .collect();
    draws.sort_by(|a, b| a.partial_cmp(b).expect("draws are finite"));
    let normal = Normal::new(0.0, c_c.sqrt()).expect("valid normal");
    let mut d = 0.0f64;
    for (i, &v) in draws.iter().enumerate() {
        let f = normal.cdf(v);
        d = d.max(f - i as f64 / n as f64);
        d = d.max((i + 1) as f64 / n as f64 - f);
    }
    // fully specified null, asymptotic critical value at alpha = 0.001
    let d_crit = (0.5 * (2.0 / 0.001f64).ln()).sqrt() / (n as f64).sqrt();
    assert!(
        d < d_crit,
        "KS distance {d} exceeds the 0.001-level critical value {d_crit}"
    );
}

#[test]
fn sampled_corrector_variance_matches_the_integral() {
    let spec = CorrectorSpec::new(convolved_unit(), SourceSpec::unit_bump());
    let c_c = corrector_variance(&spec, 0.5).expect("variance integral");
    let sampler = CorrectorSampler::new(&spec, &[0.5]).expect("sampler builds");
    let n = 10_000usize;
    let draws: Vec<f64> = (0..n)
        .map(|i| sampler.sample(Substream::new(2718, i as u64))[0])
        .collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    // chi-squared spread of a Gaussian variance estimate
    let se = c_c * (2.0 / n as f64).sqrt();
    assert!(
        (var - c_c).abs() < 3.0 * se,
        "sample variance {var} vs integral {c_c} (3 se = {})",
        3.0 * se
    );
}

#[test]
fn doubling_the_wiener_grid_barely_moves_the_discretized_variance() {
    // the sampled value is a finite Gaussian sum, so its variance is the
    // left-point discretization of the variance integral; refinement must
    // have converged at the default grid size
    let f = SourceSpec::unit_bump();
    for model in [convolved_unit(), mild_model()] {
        let hom = Homogenized::new(&model, &f).expect("homogenized problem builds");
        let kern = hom.kernel(0.5).expect("kernel builds");
        let disc_var = |m: usize| -> f64 {
            let dt = 1.0 / m as f64;
            (0..m)
                .map(|i| {
                    let t = i as f64 * dt;
                    kern.eval(t).powi(2) * model.sigma_sq(t) * dt
                })
                .sum()
        };
        let v1 = disc_var(2000);
        let v2 = disc_var(4000);
        let spec = CorrectorSpec::new(model, f.clone());
        let exact = corrector_variance(&spec, 0.5).expect("variance integral");
        assert!((v1 - v2).abs() / exact < 0.01, "{v1} vs {v2}");
        assert!((v2 - exact).abs() / exact < 0.01, "{v2} vs exact {exact}");
    }
}

#[test]
fn corrector_variance_predicts_the_fine_solution_variance() {
    let f = SourceSpec::unit_bump();
    let eps = 1.0 / 50.0;
    let n = 10_000usize;
    for (tag, model, seed) in [
        ("mild", mild_model(), 646_u64),
        ("convolved", convolved_unit(), 647_u64),
    ] {
        let spec = CorrectorSpec::new(model.clone(), f.clone());
        let c_c = corrector_variance(&spec, 0.5).expect("variance integral");
        let plan = FineSolver::point(&model, &f, 0.5, eps).expect("plan builds");
        let draws: Vec<f64> = (0..n)
            .map(|i| {
                let real = model
                    .sample_fine(eps, Substream::new(seed, i as u64))
                    .expect("fine field samples");
                plan.value(&real).expect("solves")
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let ratio = var / eps / c_c;
        assert!(
            (ratio - 1.0).abs() < 0.10,
            "{tag}: Var[u_eps]/eps = {} vs C_c = {c_c} (ratio {ratio})",
            var / eps
        );
    }
}

#[test]
fn cross_covariance_is_symmetric_and_dominated_by_the_variances() {
    let spec = CorrectorSpec::new(mild_model(), SourceSpec::unit_bump());
    let c12 = cross_covariance(&spec, 0.3, 0.6).expect("covariance integral");
    let c21 = cross_covariance(&spec, 0.6, 0.3).expect("covariance integral");
    assert!((c12 - c21).abs() < 1e-15);
    let v1 = corrector_variance(&spec, 0.3).expect("variance integral");
    let v2 = corrector_variance(&spec, 0.6).expect("variance integral");
    assert!(c12.abs() <= (v1 * v2).sqrt() * (1.0 + 1e-12));
}
