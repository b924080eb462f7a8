//! The Gaussian corrector: variance, path sampling, and the quadratic rate
//! function it induces.
//!
//! To first order the fluctuation `u_eps(x) - u_0(x)` is the kernel-weighted
//! integral of the fine-scale noise in `1/A`, which converges (after
//! `sqrt(eps)` scaling) to the centered Gaussian
//!
//! ```text
//!     v(x) = int_0^1 G(x, t) sigma(t) dW_t,
//! ```
//!
//! with `G` the fluctuation kernel of the homogenized problem and
//! `sigma^2(t)` the local integrated variance of `1/A`. Everything about
//! `v(x)` at one point is the single number `C_c(x) = int G^2 sigma^2`,
//! computed here to quadrature accuracy; the induced tail approximation is
//! the quadratic rate `(ell - u_0)^2 / (2 C_c)`, trustworthy only in the
//! moderate-deviation window checked by [`clt_validity`].

use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::media::MediaModel;
use crate::quad::adaptive_simpson_with_cuts;
use crate::rng::Substream;
use crate::solver::{Homogenized, SolutionPath, SolverError};
use crate::source::SourceSpec;

#[derive(Debug, Error)]
pub enum CorrectorError {
    #[error("wiener grid size {0} is below the minimum of 10")]
    GridTooCoarse(usize),
    #[error("evaluation points must lie strictly inside (0, 1)")]
    PointOutOfRange,
    #[error("corrector variance must be positive, got {0}")]
    NonPositiveVariance(f64),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Inputs of the corrector: which medium, which forcing, and how finely to
/// discretize the Wiener integral when sampling paths.
#[derive(Debug, Clone)]
pub struct CorrectorSpec {
    pub model: MediaModel,
    pub f: SourceSpec,
    pub wiener_grid_size: usize,
}

pub const DEFAULT_WIENER_GRID: usize = 2000;

impl CorrectorSpec {
    pub fn new(model: MediaModel, f: SourceSpec) -> Self {
        Self {
            model,
            f,
            wiener_grid_size: DEFAULT_WIENER_GRID,
        }
    }

    pub fn with_grid_size(
        model: MediaModel,
        f: SourceSpec,
        wiener_grid_size: usize,
    ) -> Result<Self, CorrectorError> {
        if wiener_grid_size < 10 {
            return Err(CorrectorError::GridTooCoarse(wiener_grid_size));
        }
        Ok(Self {
            model,
            f,
            wiener_grid_size,
        })
    }
}

/// `C_c(x) = int_0^1 G(x, t)^2 sigma^2(t) dt` to absolute tolerance 1e-12.
pub fn corrector_variance(spec: &CorrectorSpec, x: f64) -> Result<f64, CorrectorError> {
    cross_covariance(spec, x, x)
}

/// `Cov(v(x1), v(x2)) = int_0^1 G(x1, t) G(x2, t) sigma^2(t) dt`.
pub fn cross_covariance(spec: &CorrectorSpec, x1: f64, x2: f64) -> Result<f64, CorrectorError> {
    if !(x1 > 0.0 && x1 < 1.0 && x2 > 0.0 && x2 < 1.0) {
        return Err(CorrectorError::PointOutOfRange);
    }
    let hom = Homogenized::new(&spec.model, &spec.f)?;
    let g1 = hom.kernel(x1)?;
    let g2 = hom.kernel(x2)?;
    let mut cuts: Vec<f64> = spec.f.breakpoints().to_vec();
    cuts.push(x1);
    cuts.push(x2);
    let val = adaptive_simpson_with_cuts(
        |t| g1.eval(t) * g2.eval(t) * spec.model.sigma_sq(t),
        0.0,
        1.0,
        &cuts,
        1e-12,
    )
    .map_err(SolverError::from)?;
    Ok(val)
}

/// Precomputed discretization of the Wiener integral for repeated path
/// draws on a fixed evaluation grid.
///
/// The time grid is uniform with the forcing kinks and every evaluation
/// point spliced in, so the left-point rule never straddles a
/// discontinuity of `G`. One normal draw per time interval is shared by all
/// evaluation points, which is exactly what gives the correct joint law
/// across `x`.
#[derive(Debug, Clone)]
pub struct CorrectorSampler {
    grid: Vec<f64>,
    /// `coeff[k][i] = G(x_k, t_i) sigma(t_i) sqrt(dt_i)`.
    coeff: Vec<Vec<f64>>,
    n_intervals: usize,
}

impl CorrectorSampler {
    pub fn new(spec: &CorrectorSpec, grid: &[f64]) -> Result<Self, CorrectorError> {
        if grid.is_empty() || grid.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
            return Err(CorrectorError::PointOutOfRange);
        }
        if spec.wiener_grid_size < 10 {
            return Err(CorrectorError::GridTooCoarse(spec.wiener_grid_size));
        }
        let mut times: Vec<f64> = (0..=spec.wiener_grid_size)
            .map(|i| i as f64 / spec.wiener_grid_size as f64)
            .collect();
        times.extend(spec.f.breakpoints().iter().copied());
        times.extend(grid.iter().copied());
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup_by(|a, b| (*a - *b).abs() < 1e-14);

        let hom = Homogenized::new(&spec.model, &spec.f)?;
        let mut coeff = Vec::with_capacity(grid.len());
        for &x in grid {
            let g = hom.kernel(x)?;
            let row: Vec<f64> = times
                .windows(2)
                .map(|w| {
                    let dt = w[1] - w[0];
                    g.eval(w[0]) * spec.model.sigma_sq(w[0]).sqrt() * dt.sqrt()
                })
                .collect();
            coeff.push(row);
        }
        Ok(Self {
            grid: grid.to_vec(),
            n_intervals: times.len() - 1,
            coeff,
        })
    }

    /// One corrector path: values of `v` at every grid point under a shared
    /// normal draw per time interval.
    pub fn sample(&self, stream: Substream) -> Vec<f64> {
        let mut rng = stream.rng();
        let mut v = vec![0.0; self.grid.len()];
        for i in 0..self.n_intervals {
            let zeta: f64 = StandardNormal.sample(&mut rng);
            for (k, row) in self.coeff.iter().enumerate() {
                v[k] += row[i] * zeta;
            }
        }
        v
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }
}

/// One Gaussian corrector path on a grid.
pub fn sample_corrector(
    spec: &CorrectorSpec,
    grid: &[f64],
    stream: Substream,
) -> Result<SolutionPath, CorrectorError> {
    let sampler = CorrectorSampler::new(spec, grid)?;
    Ok(SolutionPath {
        grid: grid.to_vec(),
        values: sampler.sample(stream),
        components: None,
    })
}

/// The quadratic rate function of the Gaussian tail approximation,
/// `(ell - u0)^2 / (2 C_c)`.
pub fn gaussian_rate(u0: f64, c_c: f64, ell: f64) -> Result<f64, CorrectorError> {
    if !(c_c > 0.0) {
        return Err(CorrectorError::NonPositiveVariance(c_c));
    }
    let d = ell - u0;
    Ok(d * d / (2.0 * c_c))
}

/// Diagnostic for when the Gaussian approximation of the tail at level
/// `ell` can be trusted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CltReport {
    /// `log(C_c eps / (ell - u0)^2)`: size of the neglected correction.
    pub lhs: f64,
    /// `(ell - u0)^2 / (C_c eps)`: size of the Gaussian exponent.
    pub rhs: f64,
    /// `lhs < rhs / 10`.
    pub valid: bool,
}

/// The Gaussian tail estimate is valid when the deviation is large against
/// `sqrt(eps)` but the log-correction is still small against the exponent;
/// the factor 10 pins down the informal "much smaller". A deviation at the
/// typical scale has `rhs` near 1 and is never a valid tail estimate, hence
/// the second clause.
pub fn clt_validity(u0: f64, c_c: f64, epsilon: f64, ell: f64) -> CltReport {
    let d2 = (ell - u0) * (ell - u0);
    let lhs = (c_c * epsilon / d2).ln();
    let rhs = d2 / (c_c * epsilon);
    CltReport {
        lhs,
        rhs,
        valid: lhs < rhs / 10.0 && rhs > 10.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::ConvolvedCoarse;
    use approx::assert_abs_diff_eq;

    fn unit_spec() -> CorrectorSpec {
        CorrectorSpec::new(
            MediaModel::Convolved(ConvolvedCoarse::boxcar(1, 1, 1.0).unwrap()),
            SourceSpec::unit_bump(),
        )
    }

    #[test]
    fn variance_for_unit_coefficient_center() {
        // sigma^2 = 2 and int G(0.5,.)^2 = 5.8333e-4 exactly: plateaus at
        // 0.025 of total length 0.9, tent int 2 * int_0^0.05 (s/2)^2 ds
        let cc = corrector_variance(&unit_spec(), 0.5).unwrap();
        let exact = 2.0 * (0.9 * 0.025 * 0.025 + 2.0 * 0.05f64.powi(3) / 12.0);
        assert_abs_diff_eq!(cc, exact, epsilon = 1e-12);
        assert_abs_diff_eq!(cc, 1.1667e-3, epsilon = 1e-7);
    }

    #[test]
    fn variance_zero_source() {
        let spec = CorrectorSpec::new(
            MediaModel::Convolved(ConvolvedCoarse::boxcar(1, 1, 1.0).unwrap()),
            SourceSpec::new(&[(0.0, 1.0, 0.0)]).unwrap(),
        );
        assert_abs_diff_eq!(corrector_variance(&spec, 0.5).unwrap(), 0.0, epsilon = 0.0);
    }

    #[test]
    fn variance_linear_in_sigma_sq() {
        // xi = 2 doubles sigma^2 but also halves A_0, which rescales G;
        // compare against xi = 1 with the kernel rescale factored out
        let base = corrector_variance(&unit_spec(), 0.5).unwrap();
        let spec2 = CorrectorSpec::new(
            MediaModel::Convolved(ConvolvedCoarse::boxcar(2, 1, 1.0).unwrap()),
            SourceSpec::unit_bump(),
        );
        let cc2 = corrector_variance(&spec2, 0.5).unwrap();
        // G scales with 1/A_0 ... = xi only through the constant profile:
        // for constant A_0 the kernel G is A_0-free (ratio terms cancel),
        // so doubling sigma^2 (2 xi |h|^2) exactly doubles C_c
        assert_abs_diff_eq!(cc2, 2.0 * base, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_rate_examples() {
        assert_eq!(gaussian_rate(0.02375, 1.1667e-3, 0.02375).unwrap(), 0.0);
        let rate = gaussian_rate(0.02375, 1.1667e-3, 0.1).unwrap();
        assert_abs_diff_eq!(rate, 2.492, epsilon = 1e-3);
        let r1 = gaussian_rate(0.0, 1.0, 1.0).unwrap();
        let r2 = gaussian_rate(0.0, 1.0, 2.0).unwrap();
        assert_abs_diff_eq!(r2, 4.0 * r1, epsilon = 1e-15);
        assert!(gaussian_rate(0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn clt_validity_examples() {
        // deviation exactly at the sqrt(C_c eps) scale: lhs 0, rhs 1, invalid
        let c_c: f64 = 1.1667e-3;
        let eps = 1e-2;
        let d = (c_c * eps).sqrt();
        let rep = clt_validity(0.0, c_c, eps, d);
        assert_abs_diff_eq!(rep.lhs, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.rhs, 1.0, epsilon = 1e-12);
        assert!(!rep.valid);

        let rep2 = clt_validity(0.0, c_c, eps, 0.07625);
        assert_abs_diff_eq!(rep2.rhs, 498.3, epsilon = 0.1);
        assert!(rep2.valid);

        // shrinking eps with the level fixed always validates eventually
        let rep3 = clt_validity(0.0, c_c, 1e-8, 0.07625);
        assert!(rep3.valid && rep3.rhs > rep2.rhs);
    }

    #[test]
    fn sampler_is_reproducible_and_shares_noise_across_points() {
        let spec = unit_spec();
        let sampler = CorrectorSampler::new(&spec, &[0.3, 0.7]).unwrap();
        let a = sampler.sample(Substream::new(5, 1));
        let b = sampler.sample(Substream::new(5, 1));
        assert_eq!(a, b);
        // v(0.3) and v(0.7) share zeta: strong negative or positive
        // correlation is expected, but the comparison here is only that a
        // single-point sampler under the same stream reproduces the joint
        // sampler's first coordinate (same zeta order)
        let single = CorrectorSampler::new(&spec, &[0.3]).unwrap();
        let s = single.sample(Substream::new(5, 1));
        assert_abs_diff_eq!(a[0], s[0], epsilon = 1e-12);
    }
}
