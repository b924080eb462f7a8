//! Direct and importance-sampled Monte Carlo for the pointwise solution,
//! and the empirical rate functions that validate the large deviation
//! predictions against simulation.
//!
//! With samples `X_1 .. X_N` of `u_eps(x)`, likelihood ratios `w_j` of the
//! sampling tilt and `W_hat` the weighted sample mean, the empirical rate
//! at a level `ell` is
//!
//! ```text
//!     E(ell) = eps log( (1/N) sum_j w_j 1[X_j >= ell] ),   ell > W_hat,
//!     E(ell) = eps log( (1/N) sum_j w_j 1[X_j <= ell] ),   ell < W_hat,
//! ```
//!
//! an unnormalized estimator whose magnitude approximates the rate function
//! at `ell`. Tail events at large deviation levels are far too rare for
//! direct sampling, so each coefficient family gets a one-knob tilt:
//!
//! * bounded cell noise swaps the uniform `theta_n` for Bradford draws
//!   that concentrate near `theta = -1`, shrinking the coefficient and
//!   inflating the solution;
//! * convolved noise tilts every chi-squared increment exponentially,
//!   `beta ~ Gamma(xi/2, 2/(1 - 2 eta))`.
//!
//! Sampling is embarrassingly parallel: sample `i` owns the random
//! substream `(master_seed, i)` and results are collected in sample order,
//! so a run is bit-identical for any worker count.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use thiserror::Error;

use crate::media::{self, FieldRealization, MediaError, MediaModel};
use crate::rng::{pairwise_sum, Substream};
use crate::solver::{FineSolver, SolverError};
use crate::source::SourceSpec;

#[derive(Debug, Error)]
pub enum McError {
    #[error("bradford concentration must be finite and nonnegative, got {0}")]
    BadBradford(f64),
    #[error("exponential tilt must be finite and below 1/2, got {0}")]
    BadExponential(f64),
    #[error("this sampler needs the {0} coefficient family")]
    WrongFamily(&'static str),
    #[error("need at least one sample")]
    NoSamples,
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Change of sampling law used for a batch of draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tilt {
    /// The model's own law; every weight is one.
    Direct,
    /// Bounded family: cell variables follow the Bradford density with this
    /// concentration, pushing mass toward `theta = -1`.
    Bradford(f64),
    /// Convolved family: each chi-squared increment is exponentially tilted
    /// by this amount (must stay below 1/2).
    Exponential(f64),
}

/// A batch of solution draws with per-draw log likelihood ratios.
///
/// Under [`Tilt::Direct`] all `log_weights` are zero; under a tilt, weight
/// `exp(log_weights[j])` converts tilted-law averages back to plain ones.
#[derive(Debug, Clone)]
pub struct WeightedSamples {
    pub values: Vec<f64>,
    pub log_weights: Vec<f64>,
    pub epsilon: f64,
    pub x: f64,
    pub master_seed: u64,
    pub tilt: Tilt,
}

impl WeightedSamples {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Self-normalized weighted mean `sum w_j X_j / sum w_j`.
    pub fn weighted_mean(&self) -> f64 {
        let m = self
            .log_weights
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let w: Vec<f64> = self.log_weights.iter().map(|&lw| (lw - m).exp()).collect();
        let wv: Vec<f64> = w
            .iter()
            .zip(&self.values)
            .map(|(&wi, &vi)| wi * vi)
            .collect();
        pairwise_sum(&wv) / pairwise_sum(&w)
    }

    /// Effective sample size `(sum w)^2 / sum w^2` of the whole batch.
    pub fn ess(&self) -> f64 {
        let m = self
            .log_weights
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let w: Vec<f64> = self.log_weights.iter().map(|&lw| (lw - m).exp()).collect();
        let w2: Vec<f64> = w.iter().map(|&wi| wi * wi).collect();
        let s1 = pairwise_sum(&w);
        s1 * s1 / pairwise_sum(&w2)
    }
}

/// Log of the Bradford density
/// `pi(theta) = c / (2 log(1+c) (1 + (c/2)(theta+1)))` on `(-1, 1)`.
pub fn bradford_log_density(c: f64, theta: f64) -> f64 {
    (c / (2.0 * (1.0 + c).ln() * (1.0 + 0.5 * c * (theta + 1.0)))).ln()
}

/// Inverse CDF of the Bradford density: `u in [0, 1]` to `theta in [-1, 1]`.
pub fn bradford_inverse(c: f64, u: f64) -> f64 {
    (2.0 / c) * ((1.0 + c).powf(u) - 1.0) - 1.0
}

/// One Bradford draw by CDF inversion.
pub fn bradford_sample<R: Rng + ?Sized>(c: f64, rng: &mut R) -> f64 {
    bradford_inverse(c, rng.random::<f64>())
}

/// Importance-sampled pointwise solves for the bounded (parameterized)
/// family.
///
/// Draws `n` independent realizations with every cell variable Bradford
/// distributed with concentration `c`; `c = 0` means plain uniform cells
/// and produces exactly the draws of [`MediaModel::sample_fine`] on the
/// same substream. The log weight of a draw is
/// `sum_cells [log(1/2) - log pi_Brad(theta)]`.
pub fn run_parameterized_is(
    model: &MediaModel,
    f: &SourceSpec,
    epsilon: f64,
    x: f64,
    n: usize,
    c: f64,
    master_seed: u64,
) -> Result<WeightedSamples, McError> {
    run_parameterized_from(model, f, epsilon, x, n, c, master_seed, 0)
}

#[allow(clippy::too_many_arguments)]
fn run_parameterized_from(
    model: &MediaModel,
    f: &SourceSpec,
    epsilon: f64,
    x: f64,
    n: usize,
    c: f64,
    master_seed: u64,
    stream_base: u64,
) -> Result<WeightedSamples, McError> {
    if !matches!(model, MediaModel::Parameterized(_)) {
        return Err(McError::WrongFamily("parameterized"));
    }
    if !c.is_finite() || c < 0.0 {
        return Err(McError::BadBradford(c));
    }
    if n == 0 {
        return Err(McError::NoSamples);
    }
    let cells = media::cell_count(epsilon)?;
    let plan = FineSolver::point(model, f, x, epsilon)?;
    let ln_half = 0.5f64.ln();
    let draws: Vec<Result<(f64, f64), McError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = Substream::new(master_seed, stream_base + i as u64).rng();
            let mut lw = 0.0;
            let inv_cells: Vec<f64> = (0..cells)
                .map(|_| {
                    if c == 0.0 {
                        rng.random_range(-1.0..=1.0)
                    } else {
                        let th = bradford_sample(c, &mut rng);
                        lw += ln_half - bradford_log_density(c, th);
                        th
                    }
                })
                .collect();
            let real = FieldRealization {
                epsilon,
                inv_cells,
                beta_window: None,
            };
            Ok((plan.value(&real)?, lw))
        })
        .collect();
    let mut values = Vec::with_capacity(n);
    let mut log_weights = Vec::with_capacity(n);
    for d in draws {
        let (v, lw) = d?;
        values.push(v);
        log_weights.push(lw);
    }
    Ok(WeightedSamples {
        values,
        log_weights,
        epsilon,
        x,
        master_seed,
        tilt: if c == 0.0 {
            Tilt::Direct
        } else {
            Tilt::Bradford(c)
        },
    })
}

/// Importance-sampled pointwise solves for the convolved family.
///
/// Every chi-squared increment is drawn from the exponentially tilted law
/// `Gamma(xi/2, 2/(1 - 2 eta))`; `eta = 0` reproduces the draws of
/// [`MediaModel::sample_fine`] on the same substream bit for bit. The log
/// weight of a draw is `sum_m [-eta beta_m - (xi/2) log(1 - 2 eta)]`.
pub fn run_convolved_is(
    model: &MediaModel,
    f: &SourceSpec,
    epsilon: f64,
    x: f64,
    n: usize,
    eta: f64,
    master_seed: u64,
) -> Result<WeightedSamples, McError> {
    run_convolved_from(model, f, epsilon, x, n, eta, master_seed, 0)
}

#[allow(clippy::too_many_arguments)]
fn run_convolved_from(
    model: &MediaModel,
    f: &SourceSpec,
    epsilon: f64,
    x: f64,
    n: usize,
    eta: f64,
    master_seed: u64,
    stream_base: u64,
) -> Result<WeightedSamples, McError> {
    let MediaModel::Convolved(conv) = model else {
        return Err(McError::WrongFamily("convolved"));
    };
    if !eta.is_finite() || eta >= 0.5 {
        return Err(McError::BadExponential(eta));
    }
    if n == 0 {
        return Err(McError::NoSamples);
    }
    let cells = media::cell_count(epsilon)?;
    let kappa = conv.kappa();
    let xi = conv.xi as f64;
    let plan = FineSolver::point(model, f, x, epsilon)?;
    let log_norm = -0.5 * xi * (1.0 - 2.0 * eta).ln();
    let draws: Vec<Result<(f64, f64), McError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = Substream::new(master_seed, stream_base + i as u64).rng();
            let tilted = Gamma::new(0.5 * xi, 2.0 / (1.0 - 2.0 * eta))
                .expect("valid shape and scale");
            let beta: Vec<f64> = (0..cells + kappa - 1)
                .map(|_| tilted.sample(&mut rng))
                .collect();
            let lw: f64 = beta.iter().map(|&b| -eta * b + log_norm).sum();
            let inv_cells = media::convolve_cells(&conv.kernel, &beta, cells);
            let real = FieldRealization {
                epsilon,
                inv_cells,
                beta_window: Some(beta),
            };
            Ok((plan.value(&real)?, lw))
        })
        .collect();
    let mut values = Vec::with_capacity(n);
    let mut log_weights = Vec::with_capacity(n);
    for d in draws {
        let (v, lw) = d?;
        values.push(v);
        log_weights.push(lw);
    }
    Ok(WeightedSamples {
        values,
        log_weights,
        epsilon,
        x,
        master_seed,
        tilt: if eta == 0.0 {
            Tilt::Direct
        } else {
            Tilt::Exponential(eta)
        },
    })
}

/// Empirical rate function on a grid of levels.
#[derive(Debug, Clone)]
pub struct EmpiricalRate {
    pub levels: Vec<f64>,
    /// `eps log` of the per-branch tail weight fraction; always `<= 0`,
    /// `-inf` when the tail is empty, clipped to `0` when weights push the
    /// unnormalized estimate past one.
    pub values: Vec<f64>,
    /// Effective sample size among the samples in the tail.
    pub ess_per_level: Vec<f64>,
    /// Number of samples in the tail (above or below per the branch).
    pub n_exceed_per_level: Vec<usize>,
    /// Whether the estimate exceeded one and was clipped.
    pub clipped: Vec<bool>,
    /// The weighted sample mean separating the two branches.
    pub weighted_mean: f64,
}

/// Evaluate the two-sided empirical rate estimator on `levels`.
///
/// Levels above the weighted mean count samples `X_j >= ell`, levels below
/// count `X_j <= ell`; in both branches the estimate is the unnormalized
/// `(1/N) sum w_j` over the tail, so a level beyond the last sample on its
/// side reports `-inf` with a zero tail count rather than being dropped.
pub fn empirical_rate(samples: &WeightedSamples, levels: &[f64]) -> Result<EmpiricalRate, McError> {
    if samples.is_empty() {
        return Err(McError::NoSamples);
    }
    let n = samples.len() as f64;
    let what = samples.weighted_mean();
    let mut values = Vec::with_capacity(levels.len());
    let mut ess_per_level = Vec::with_capacity(levels.len());
    let mut n_exceed_per_level = Vec::with_capacity(levels.len());
    let mut clipped = Vec::with_capacity(levels.len());
    for &ell in levels {
        let upper = ell >= what;
        let tail_lw: Vec<f64> = samples
            .values
            .iter()
            .zip(&samples.log_weights)
            .filter(|&(&v, _)| if upper { v >= ell } else { v <= ell })
            .map(|(_, &lw)| lw)
            .collect();
        n_exceed_per_level.push(tail_lw.len());
        if tail_lw.is_empty() {
            values.push(f64::NEG_INFINITY);
            ess_per_level.push(0.0);
            clipped.push(false);
            continue;
        }
        let m = tail_lw.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let w: Vec<f64> = tail_lw.iter().map(|&lw| (lw - m).exp()).collect();
        let w2: Vec<f64> = w.iter().map(|&wi| wi * wi).collect();
        let s1 = pairwise_sum(&w);
        let log_est = m + s1.ln() - n.ln();
        ess_per_level.push(s1 * s1 / pairwise_sum(&w2));
        if log_est > 0.0 {
            values.push(0.0);
            clipped.push(true);
        } else {
            values.push(samples.epsilon * log_est);
            clipped.push(false);
        }
    }
    Ok(EmpiricalRate {
        levels: levels.to_vec(),
        values,
        ess_per_level,
        n_exceed_per_level,
        clipped,
        weighted_mean: what,
    })
}

/// Tilt selected by a pilot scan, with its observed tail quality.
#[derive(Debug, Clone, Copy)]
pub struct PilotChoice {
    pub tilt: Tilt,
    /// Effective sample size among samples exceeding the target level.
    pub ess: f64,
    pub n_exceed: usize,
}

/// Number of candidate tilts scanned by [`pilot_tilt`].
pub const PILOT_CANDIDATES: usize = 32;

/// Stream ids at and above this base are reserved for pilot runs so they
/// never collide with the main run's per-sample ids.
const PILOT_STREAM_BASE: u64 = 1 << 40;

/// Scan a fixed grid of candidate tilts with short runs of `pilot_n`
/// samples each and keep the one with the largest effective sample size
/// among samples exceeding `level`.
///
/// Candidates are Bradford concentrations geometrically spaced in
/// `[1/4, 128]` for the bounded family and exponential tilts uniformly
/// spaced in `[0, 0.48]` for the convolved one. Ties, including the
/// all-zero-tail case, resolve toward the stronger tilt.
pub fn pilot_tilt(
    model: &MediaModel,
    f: &SourceSpec,
    epsilon: f64,
    x: f64,
    pilot_n: usize,
    level: f64,
    master_seed: u64,
) -> Result<PilotChoice, McError> {
    if pilot_n == 0 {
        return Err(McError::NoSamples);
    }
    let mut best: Option<PilotChoice> = None;
    for k in 0..PILOT_CANDIDATES {
        let frac = k as f64 / (PILOT_CANDIDATES - 1) as f64;
        let base = PILOT_STREAM_BASE + (k * pilot_n) as u64;
        let (tilt, samples) = match model {
            MediaModel::Parameterized(_) => {
                let c = 0.25 * (512.0f64).powf(frac);
                (
                    Tilt::Bradford(c),
                    run_parameterized_from(model, f, epsilon, x, pilot_n, c, master_seed, base)?,
                )
            }
            MediaModel::Convolved(_) => {
                let eta = 0.48 * frac;
                (
                    Tilt::Exponential(eta),
                    run_convolved_from(model, f, epsilon, x, pilot_n, eta, master_seed, base)?,
                )
            }
        };
        let er = empirical_rate(&samples, &[level])?;
        let cand = PilotChoice {
            tilt,
            ess: er.ess_per_level[0],
            n_exceed: er.n_exceed_per_level[0],
        };
        if best.as_ref().is_none_or(|b| cand.ess >= b.ess) {
            best = Some(cand);
        }
    }
    Ok(best.expect("at least one candidate"))
}
