//! Subcommand bodies: each one resolves its inputs from the config,
//! writes CSV files with the shared provenance header, and reports
//! failures through [`CliError`] so the binary can map them to exit codes.
//!
//! The heavy cores (`emit_rate_curve`, `emit_empirical`) are split from
//! the thin config-driven wrappers so the figure recipes can reuse them
//! with their own parameters.

use std::path::Path;

use twoscale::corrector::{corrector_variance, gaussian_rate, CorrectorSpec};
use twoscale::ldp::{
    chernoff_bound, rate_curve_approx, rate_curve_full, steepness_check, CramerFunctional,
    FunctionalKind, LdpError, RateMaximizer, RateStatus, SteepnessReport,
};
use twoscale::media::{self, FieldRealization, MediaModel};
use twoscale::montecarlo::{
    empirical_rate, pilot_tilt, run_convolved_is, run_parameterized_is, Tilt, WeightedSamples,
};
use twoscale::rng::Substream;
use twoscale::solver::{solve_path_with_expansion, solve_point, Homogenized};
use twoscale::source::SourceSpec;

use crate::config::{Resolved, TiltConfig};
use crate::output::{fmt_f64, write_snapshot, CsvFile, Meta};
use crate::CliError;

pub struct Ctx {
    pub res: Resolved,
    pub meta: Meta,
}

fn num<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Numerical(e.to_string())
}

/// Denominator of a cell width with integer `1/eps`, for file names.
pub fn eps_den(eps: f64) -> u64 {
    (1.0 / eps).round() as u64
}

/// Per-level sampling seed: a SplitMix64 scramble of the master seed and
/// the level index, so levels are independent runs while remaining a pure
/// function of the master seed.
pub fn level_seed(master: u64, k: u64) -> u64 {
    let mut z = master ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(k.wrapping_add(1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------------------
// media-sample

pub fn media_sample(ctx: &Ctx) -> Result<(), CliError> {
    let model = ctx.res.require_model()?;
    let dir = ctx.res.out_dir();
    write_snapshot(dir, &ctx.res.snapshot)?;
    let eps_list = ctx.res.epsilons();
    let nreal = ctx.res.realizations();
    let single = eps_list.len() == 1 && nreal == 1;
    for (j, &eps) in eps_list.iter().enumerate() {
        let cells = media::cell_count(eps).map_err(num)?;
        for i in 0..nreal {
            let stream_id = (j * nreal + i) as u64;
            let real = model
                .sample_fine(eps, Substream::new(ctx.meta.master_seed, stream_id))
                .map_err(num)?;
            let name = if single {
                "media.csv".to_string()
            } else {
                format!("media_eps{}_real{}.csv", eps_den(eps), i)
            };
            let notes = vec![
                format!(
                    "command=media-sample eps={} realization={i} stream_id={stream_id}",
                    fmt_f64(eps)
                ),
                "inv_value: reciprocal coefficient 1/A at the cell midpoint".to_string(),
            ];
            let mut csv =
                CsvFile::create(dir, &name, &ctx.meta, &notes, &["cell_index", "inv_value"])?;
            for n in 1..=cells {
                let s = ((n as f64 - 0.5) * eps).min(1.0 - 1e-12);
                let inv = model.inv_coeff_at(&real, s).map_err(num)?;
                csv.row_text(&[n.to_string(), fmt_f64(inv)])?;
            }
            csv.finish()?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// solve

pub fn solve(ctx: &Ctx) -> Result<(), CliError> {
    let model = ctx.res.require_model()?;
    let dir = ctx.res.out_dir();
    write_snapshot(dir, &ctx.res.snapshot)?;
    let grid = ctx.res.grid();
    let eps_list = ctx.res.epsilons();
    let nreal = ctx.res.realizations();
    let single = eps_list.len() == 1 && nreal == 1;
    for (j, &eps) in eps_list.iter().enumerate() {
        for i in 0..nreal {
            let stream_id = (j * nreal + i) as u64;
            let real = model
                .sample_fine(eps, Substream::new(ctx.meta.master_seed, stream_id))
                .map_err(num)?;
            let path = solve_path_with_expansion(model, &real, &ctx.res.f, &grid).map_err(num)?;
            let comp = path.components.as_ref().expect("expansion always computed");
            let name = if single {
                "solution.csv".to_string()
            } else {
                format!("solution_eps{}_real{}.csv", eps_den(eps), i)
            };
            let notes = vec![
                format!(
                    "command=solve eps={} realization={i} stream_id={stream_id}",
                    fmt_f64(eps)
                ),
                "expansion: u_eps = u0 + v_eps + R_eps exactly, v_eps linear in the \
                 coefficient fluctuations"
                    .to_string(),
            ];
            let mut csv = CsvFile::create(
                dir,
                &name,
                &ctx.meta,
                &notes,
                &["x", "u_eps", "u0", "v_eps", "R_eps"],
            )?;
            for (k, &x) in grid.iter().enumerate() {
                csv.row(&[x, path.values[k], comp.u0[k], comp.v[k], comp.r[k]])?;
            }
            csv.finish()?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// homogenize

pub fn homogenize(ctx: &Ctx) -> Result<(), CliError> {
    let model = ctx.res.require_model()?;
    let dir = ctx.res.out_dir();
    write_snapshot(dir, &ctx.res.snapshot)?;
    let hom = Homogenized::new(model, &ctx.res.f).map_err(num)?;
    let x = ctx.res.x();
    let notes = vec![
        "command=homogenize".to_string(),
        format!(
            "u0({})={} mean_inv={}",
            fmt_f64(x),
            fmt_f64(hom.solve(x).map_err(num)?),
            fmt_f64(hom.mean_inv())
        ),
    ];
    let mut csv = CsvFile::create(dir, "homogenized.csv", &ctx.meta, &notes, &["x", "a0", "u0"])?;
    for &s in &ctx.res.grid() {
        csv.row(&[s, hom.coeff(s), hom.solve(s).map_err(num)?])?;
    }
    csv.finish()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// corrector

pub fn corrector(ctx: &Ctx) -> Result<(), CliError> {
    let model = ctx.res.require_model()?;
    let dir = ctx.res.out_dir();
    write_snapshot(dir, &ctx.res.snapshot)?;
    let spec = CorrectorSpec::new(model.clone(), ctx.res.f.clone());
    let x = ctx.res.x();
    let c_c = corrector_variance(&spec, x).map_err(num)?;
    let notes = vec![
        "command=corrector".to_string(),
        format!("corrector_variance({})={}", fmt_f64(x), fmt_f64(c_c)),
        "variance: limit of Var[u_eps(x)]/eps as the cells shrink".to_string(),
    ];
    let mut csv = CsvFile::create(dir, "corrector.csv", &ctx.meta, &notes, &["x", "variance"])?;
    for &s in &ctx.res.grid() {
        // the Dirichlet conditions pin the solution at the ends, so the
        // fluctuation variance vanishes there without a kernel evaluation
        let v = if s <= 0.0 || s >= 1.0 {
            0.0
        } else {
            corrector_variance(&spec, s).map_err(num)?
        };
        csv.row(&[s, v])?;
    }
    csv.finish()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// rate

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateKind {
    Approx,
    Full,
    Gaussian,
    Chernoff,
}

impl RateKind {
    pub fn name(self) -> &'static str {
        match self {
            RateKind::Approx => "approx",
            RateKind::Full => "full",
            RateKind::Gaussian => "gaussian",
            RateKind::Chernoff => "chernoff",
        }
    }
}

pub struct RateJob<'a> {
    pub dir: &'a Path,
    /// Inserted between the kind and `.csv` in the file name.
    pub suffix: &'a str,
    pub meta: &'a Meta,
    pub model: &'a MediaModel,
    pub f: &'a SourceSpec,
    pub x: f64,
    pub kind: RateKind,
    pub levels: &'a [f64],
    /// Cell width for the finite-size Chernoff bound; ignored otherwise.
    pub eps: f64,
    pub notes: &'a [String],
}

pub struct RateOutcome {
    pub failed: usize,
    pub total: usize,
}

fn steep_note(s: &SteepnessReport) -> String {
    format!(
        "steepness: steep={} finite_everywhere={} smooth_forcing_bounded_domain={} \
         comparison_integral_diverges={} contact_order={}",
        s.steep,
        s.finite_everywhere,
        s.smooth_forcing_bounded_domain,
        s.comparison_integral_diverges,
        s.contact_order
    )
}

/// Tabulate one rate-function kind over a level grid, embedding the
/// steepness report in the file header. Returns how many levels failed to
/// converge so the caller can enforce its failure budget.
pub fn emit_rate_curve(job: &RateJob) -> Result<RateOutcome, CliError> {
    let cf_kind = match job.kind {
        RateKind::Full => FunctionalKind::Full4D,
        _ => FunctionalKind::Approx1D,
    };
    let cf = CramerFunctional::new(job.model, job.f, job.x, cf_kind).map_err(num)?;
    let steep = steepness_check(&cf);
    let hom = Homogenized::new(job.model, job.f).map_err(num)?;
    let u0 = hom.solve(job.x).map_err(num)?;
    let spec = CorrectorSpec::new(job.model.clone(), job.f.clone());
    let c_c = corrector_variance(&spec, job.x).map_err(num)?;

    let mut notes = vec![
        format!("command=rate kind={}", job.kind.name()),
        format!(
            "x={} u0={} corrector_variance={}",
            fmt_f64(job.x),
            fmt_f64(u0),
            fmt_f64(c_c)
        ),
        steep_note(&steep),
    ];
    if job.kind == RateKind::Chernoff {
        notes.push(format!("eps={}", fmt_f64(job.eps)));
    }
    notes.extend_from_slice(job.notes);
    let name = format!("rate_{}{}.csv", job.kind.name(), job.suffix);

    let mut failed = 0usize;
    match job.kind {
        RateKind::Approx => {
            let curve = rate_curve_approx(&cf, job.levels).map_err(num)?;
            let mut csv = CsvFile::create(
                job.dir,
                &name,
                job.meta,
                &notes,
                &["ell", "rate", "lambda_star", "status"],
            )?;
            for (k, &ell) in curve.levels.iter().enumerate() {
                let lam = match curve.maximizers[k] {
                    RateMaximizer::Scalar(l) => l,
                    RateMaximizer::Full { .. } => unreachable!("approx curve"),
                };
                if curve.statuses[k] == RateStatus::Failed {
                    failed += 1;
                }
                csv.row_text(&[
                    fmt_f64(ell),
                    fmt_f64(curve.rates[k]),
                    fmt_f64(lam),
                    curve.statuses[k].to_string(),
                ])?;
            }
            csv.finish()?;
        }
        RateKind::Full => {
            let curve = rate_curve_full(&cf, job.levels).map_err(num)?;
            let mut csv = CsvFile::create(
                job.dir,
                &name,
                job.meta,
                &notes,
                &[
                    "ell", "rate", "lambda1", "lambda2", "lambda3", "lambda4", "z1", "z2", "z3",
                    "z4", "status",
                ],
            )?;
            for (k, &ell) in curve.levels.iter().enumerate() {
                let (lam, z) = match curve.maximizers[k] {
                    RateMaximizer::Full { lambda, z } => (lambda, z),
                    RateMaximizer::Scalar(_) => unreachable!("full curve"),
                };
                if curve.statuses[k] == RateStatus::Failed {
                    failed += 1;
                }
                let mut cells = vec![fmt_f64(ell), fmt_f64(curve.rates[k])];
                cells.extend(lam.iter().map(|&v| fmt_f64(v)));
                cells.extend(z.iter().map(|&v| fmt_f64(v)));
                cells.push(curve.statuses[k].to_string());
                csv.row_text(&cells)?;
            }
            csv.finish()?;
        }
        RateKind::Gaussian => {
            let mut csv = CsvFile::create(job.dir, &name, job.meta, &notes, &["ell", "rate"])?;
            for &ell in job.levels {
                let rate = gaussian_rate(u0, c_c, ell).map_err(num)?;
                csv.row(&[ell, rate])?;
            }
            csv.finish()?;
        }
        RateKind::Chernoff => {
            let mut csv = CsvFile::create(
                job.dir,
                &name,
                job.meta,
                &notes,
                &["ell", "rate", "lambda_star", "status"],
            )?;
            for &ell in job.levels {
                let bound = chernoff_bound(job.model, job.f, job.x, job.eps, ell).map_err(|e| {
                    match e {
                        // a correlated-cell medium cannot use this bound at
                        // all, which is a configuration problem, not a
                        // numerical one
                        LdpError::NeedsIndependentCells { .. } => {
                            CliError::Config(format!("rate kind=chernoff: {e}"))
                        }
                        other => num(other),
                    }
                })?;
                if bound.status == RateStatus::Failed {
                    failed += 1;
                }
                csv.row_text(&[
                    fmt_f64(ell),
                    fmt_f64(-bound.log_bound),
                    fmt_f64(bound.lambda_star),
                    bound.status.to_string(),
                ])?;
            }
            csv.finish()?;
        }
    }
    Ok(RateOutcome {
        failed,
        total: job.levels.len(),
    })
}

/// Solve with every cell's noise pinned at `theta`, reaching the extreme
/// of the bounded family's coefficient range (`theta = -1` minimizes the
/// coefficient everywhere, maximizing the solution).
pub fn extreme_value(
    model: &MediaModel,
    f: &SourceSpec,
    x: f64,
    eps: f64,
    theta: f64,
) -> Result<f64, CliError> {
    let cells = media::cell_count(eps).map_err(num)?;
    let real = FieldRealization {
        epsilon: eps,
        inv_cells: vec![theta; cells],
        beta_window: None,
    };
    solve_point(model, &real, f, x).map_err(num)
}

/// Default tabulation band for the rate curves: three corrector standard
/// deviations around the limit value, clipped to values the medium can
/// actually reach so a default run never sends the optimizers after an
/// infinite rate. Explicit `run.levels` pass through unclipped.
fn default_rate_span(
    model: &MediaModel,
    f: &SourceSpec,
    x: f64,
    eps: f64,
    u0: f64,
    sd: f64,
) -> Result<(f64, f64), CliError> {
    let mut lo = u0 - 3.0 * sd;
    let mut hi = u0 + 3.0 * sd;
    match model {
        // the positive unbounded law reaches any positive value
        MediaModel::Convolved(_) => lo = lo.max(0.02 * u0),
        MediaModel::Parameterized(_) => {
            let top = extreme_value(model, f, x, eps, -1.0)?;
            let bot = extreme_value(model, f, x, eps, 1.0)?;
            lo = lo.max(bot + 0.02 * (u0 - bot));
            hi = hi.min(top - 0.02 * (top - u0));
        }
    }
    Ok((lo, hi))
}

pub fn rate(ctx: &Ctx, kind: RateKind) -> Result<(), CliError> {
    let model = ctx.res.require_model()?;
    let dir = ctx.res.out_dir();
    write_snapshot(dir, &ctx.res.snapshot)?;
    let x = ctx.res.x();
    let hom = Homogenized::new(model, &ctx.res.f).map_err(num)?;
    let u0 = hom.solve(x).map_err(num)?;
    let spec = CorrectorSpec::new(model.clone(), ctx.res.f.clone());
    let sd = corrector_variance(&spec, x).map_err(num)?.sqrt();
    let span = default_rate_span(model, &ctx.res.f, x, ctx.res.epsilons()[0], u0, sd)?;
    let levels = ctx.res.levels_or(span, 41);
    let outcome = emit_rate_curve(&RateJob {
        dir,
        suffix: "",
        meta: &ctx.meta,
        model,
        f: &ctx.res.f,
        x,
        kind,
        levels: &levels,
        eps: ctx.res.epsilons()[0],
        notes: &[],
    })?;
    // a few stuck levels are tolerated and flagged in the status column;
    // more than 5% means the curve as a whole cannot be trusted
    if outcome.failed * 20 > outcome.total {
        return Err(CliError::Numerical(format!(
            "rate optimizer failed at {}/{} levels (budget is 5%)",
            outcome.failed, outcome.total
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// empirical

/// Resolved tilt policy for the Monte Carlo runs.
#[derive(Debug, Clone, Copy)]
pub enum TiltChoice {
    Auto,
    Direct,
    Eta(f64),
    Bradford(f64),
}

impl TiltChoice {
    pub fn from_config(t: Option<&TiltConfig>) -> TiltChoice {
        match t {
            None => TiltChoice::Auto,
            Some(TiltConfig::Named(n)) if n == "direct" => TiltChoice::Direct,
            // any other name was rejected during config validation
            Some(TiltConfig::Named(_)) => TiltChoice::Auto,
            Some(TiltConfig::Exponential { eta }) => TiltChoice::Eta(*eta),
            Some(TiltConfig::Bradford { bradford }) => TiltChoice::Bradford(*bradford),
        }
    }
}

/// Candidate down-tilts scanned for sub-mean levels of the convolved
/// family; the library pilot only scans upward tilts.
const DOWN_CANDIDATES: [f64; 9] = [0.0, -0.15, -0.3, -0.6, -1.0, -1.5, -2.5, -4.0, -6.0];

/// Effective sample size and count among the samples on one side of `ell`.
fn tail_ess(s: &WeightedSamples, ell: f64, upper: bool) -> (f64, usize) {
    let mut lws: Vec<f64> = Vec::new();
    for (&v, &lw) in s.values.iter().zip(&s.log_weights) {
        if (upper && v >= ell) || (!upper && v <= ell) {
            lws.push(lw);
        }
    }
    if lws.is_empty() {
        return (0.0, 0);
    }
    let m = lws.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let (mut s1, mut s2) = (0.0, 0.0);
    for &lw in &lws {
        let w = (lw - m).exp();
        s1 += w;
        s2 += w * w;
    }
    (s1 * s1 / s2, lws.len())
}

/// Pick the negative exponential tilt with the best lower-tail effective
/// sample size. Runs under its own scrambled seed so the pilot draws stay
/// clear of the main run, whose stream ids start at zero.
fn pilot_down_convolved(
    model: &MediaModel,
    f: &SourceSpec,
    eps: f64,
    x: f64,
    pilot_n: usize,
    ell: f64,
    seed: u64,
) -> Result<Tilt, CliError> {
    let mut best_eta = 0.0;
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (idx, &eta) in DOWN_CANDIDATES.iter().enumerate() {
        let s = run_convolved_is(model, f, eps, x, pilot_n, eta, level_seed(seed, idx as u64))
            .map_err(num)?;
        let (ess, n_ex) = tail_ess(&s, ell, false);
        // ties resolve toward the stronger tilt, matching the library scan
        if ess > best.0 || (ess == best.0 && n_ex >= best.1) {
            best = (ess, n_ex);
            best_eta = eta;
        }
    }
    Ok(if best_eta == 0.0 {
        Tilt::Direct
    } else {
        Tilt::Exponential(best_eta)
    })
}

/// `eps log` of the self-normalized tail weight fraction
/// `sum_tail w / sum w`; `-inf` when the tail is empty.
fn self_normalized_log(s: &WeightedSamples, ell: f64, upper: bool) -> f64 {
    let m = s
        .log_weights
        .iter()
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let (mut tail, mut total) = (0.0, 0.0);
    for (&v, &lw) in s.values.iter().zip(&s.log_weights) {
        let w = (lw - m).exp();
        total += w;
        if (upper && v >= ell) || (!upper && v <= ell) {
            tail += w;
        }
    }
    if tail == 0.0 {
        f64::NEG_INFINITY
    } else {
        s.epsilon * (tail / total).ln()
    }
}

pub struct EmpiricalJob<'a> {
    pub dir: &'a Path,
    /// Inserted before `.csv` in `empirical_rate` and the manifest name.
    pub suffix: &'a str,
    pub meta: &'a Meta,
    pub model: &'a MediaModel,
    pub f: &'a SourceSpec,
    pub eps: f64,
    pub x: f64,
    pub levels: &'a [f64],
    pub n: usize,
    pub pilot_n: usize,
    pub tilt: TiltChoice,
    pub master_seed: u64,
    pub export_samples: bool,
    pub notes: &'a [String],
}

pub struct EmpiricalOutcome {
    pub max_ess: f64,
}

/// Importance-sampled tail estimates over a level grid.
///
/// Writes `empirical_rate<suffix>.csv` with both the unnormalized and the
/// self-normalized estimator, and `samples_manifest<suffix>.csv` recording
/// the tilt and seed of every level so any level can be rerun on its own.
pub fn emit_empirical(job: &EmpiricalJob) -> Result<EmpiricalOutcome, CliError> {
    let hom = Homogenized::new(job.model, job.f).map_err(num)?;
    let u0 = hom.solve(job.x).map_err(num)?;
    let parameterized = matches!(job.model, MediaModel::Parameterized(_));

    let mut notes = vec![
        format!(
            "command=empirical eps={} x={} samples={} pilot_samples={}",
            fmt_f64(job.eps),
            fmt_f64(job.x),
            job.n,
            job.pilot_n
        ),
        "neg_rate: -eps log of the unnormalized tail estimate (1/N) sum w; \
         neg_rate_selfnorm normalizes by the total weight"
            .to_string(),
        "levels at or above the sample mean count the upper tail, lower \
         levels the lower tail"
            .to_string(),
    ];
    notes.extend_from_slice(job.notes);
    let mut csv = CsvFile::create(
        job.dir,
        &format!("empirical_rate{}.csv", job.suffix),
        job.meta,
        &notes,
        &[
            "ell",
            "neg_rate",
            "neg_rate_selfnorm",
            "ess",
            "n_exceed",
            "clipped",
        ],
    )?;
    let mut manifest = CsvFile::create(
        job.dir,
        &format!("samples_manifest{}.csv", job.suffix),
        job.meta,
        &[format!(
            "command=empirical eps={} samples-per-level={}",
            fmt_f64(job.eps),
            job.n
        )],
        &["level_index", "ell", "tilt", "tilt_param", "seed", "samples"],
    )?;

    let mut max_ess = 0.0f64;
    for (k, &ell) in job.levels.iter().enumerate() {
        let tilt = match (job.tilt, parameterized) {
            (TiltChoice::Direct, _) => Tilt::Direct,
            (TiltChoice::Eta(e), false) => Tilt::Exponential(e),
            (TiltChoice::Eta(_), true) => {
                return Err(CliError::Config(
                    "run.tilt: eta tilts apply to the convolved family only \
                     (use bradford for the parameterized one)"
                        .to_string(),
                ));
            }
            (TiltChoice::Bradford(c), true) => Tilt::Bradford(c),
            (TiltChoice::Bradford(_), false) => {
                return Err(CliError::Config(
                    "run.tilt: bradford tilts apply to the parameterized \
                     family only (use eta for the convolved one)"
                        .to_string(),
                ));
            }
            (TiltChoice::Auto, true) => {
                if ell >= u0 {
                    pilot_tilt(job.model, job.f, job.eps, job.x, job.pilot_n, ell, job.master_seed)
                        .map_err(num)?
                        .tilt
                } else {
                    // the bounded family has no downward tilt available, and
                    // its lower deviations stay within direct reach
                    Tilt::Direct
                }
            }
            (TiltChoice::Auto, false) => {
                if ell >= u0 {
                    pilot_tilt(job.model, job.f, job.eps, job.x, job.pilot_n, ell, job.master_seed)
                        .map_err(num)?
                        .tilt
                } else {
                    pilot_down_convolved(
                        job.model,
                        job.f,
                        job.eps,
                        job.x,
                        job.pilot_n,
                        ell,
                        job.master_seed ^ 0xD6E8_FEB8_6659_FD93,
                    )?
                }
            }
        };
        let seed_k = level_seed(job.master_seed, k as u64);
        let samples = if parameterized {
            let c = match tilt {
                Tilt::Direct => 0.0,
                Tilt::Bradford(c) => c,
                Tilt::Exponential(_) => unreachable!("family checked above"),
            };
            run_parameterized_is(job.model, job.f, job.eps, job.x, job.n, c, seed_k)
        } else {
            let eta = match tilt {
                Tilt::Direct => 0.0,
                Tilt::Exponential(e) => e,
                Tilt::Bradford(_) => unreachable!("family checked above"),
            };
            run_convolved_is(job.model, job.f, job.eps, job.x, job.n, eta, seed_k)
        }
        .map_err(num)?;

        let est = empirical_rate(&samples, &[ell]).map_err(num)?;
        let upper = ell >= est.weighted_mean;
        let selfnorm = -self_normalized_log(&samples, ell, upper);
        max_ess = max_ess.max(est.ess_per_level[0]);
        csv.row_text(&[
            fmt_f64(ell),
            fmt_f64(-est.values[0]),
            fmt_f64(selfnorm),
            fmt_f64(est.ess_per_level[0]),
            est.n_exceed_per_level[0].to_string(),
            u8::from(est.clipped[0]).to_string(),
        ])?;
        let (tilt_name, tilt_param) = match samples.tilt {
            Tilt::Direct => ("direct", 0.0),
            Tilt::Bradford(c) => ("bradford", c),
            Tilt::Exponential(e) => ("exponential", e),
        };
        manifest.row_text(&[
            k.to_string(),
            fmt_f64(ell),
            tilt_name.to_string(),
            fmt_f64(tilt_param),
            seed_k.to_string(),
            job.n.to_string(),
        ])?;
        if job.export_samples {
            let mut raw = CsvFile::create(
                job.dir,
                &format!("samples{}_level{k}.csv", job.suffix),
                job.meta,
                &[format!(
                    "level={} tilt={tilt_name} tilt_param={} seed={seed_k}",
                    fmt_f64(ell),
                    fmt_f64(tilt_param)
                )],
                &["value", "log_weight"],
            )?;
            for (&v, &lw) in samples.values.iter().zip(&samples.log_weights) {
                raw.row(&[v, lw])?;
            }
            raw.finish()?;
        }
    }
    csv.finish()?;
    manifest.finish()?;
    Ok(EmpiricalOutcome { max_ess })
}

pub fn empirical(ctx: &Ctx) -> Result<(), CliError> {
    let model = ctx.res.require_model()?;
    let dir = ctx.res.out_dir();
    write_snapshot(dir, &ctx.res.snapshot)?;
    let x = ctx.res.x();
    let hom = Homogenized::new(model, &ctx.res.f).map_err(num)?;
    let u0 = hom.solve(x).map_err(num)?;
    let spec = CorrectorSpec::new(model.clone(), ctx.res.f.clone());
    let c_c = corrector_variance(&spec, x).map_err(num)?;
    let tilt = TiltChoice::from_config(ctx.res.cfg.run.tilt.as_ref());

    let eps_list = ctx.res.epsilons().to_vec();
    let multi = eps_list.len() > 1;
    let mut max_ess = 0.0f64;
    for (j, &eps) in eps_list.iter().enumerate() {
        let sd = (eps * c_c).sqrt();
        // default band: from just past the central regime out to a few
        // multiples of the limit value
        let levels = ctx
            .res
            .levels_or((u0 + 2.0 * sd, (4.0 * u0).max(u0 + 6.0 * sd)), 16);
        let suffix = if multi {
            format!("_eps{}", eps_den(eps))
        } else {
            String::new()
        };
        let outcome = emit_empirical(&EmpiricalJob {
            dir,
            suffix: &suffix,
            meta: &ctx.meta,
            model,
            f: &ctx.res.f,
            eps,
            x,
            levels: &levels,
            n: ctx.res.samples(),
            pilot_n: ctx.res.pilot_samples(),
            tilt,
            // separate cell widths are separate experiments
            master_seed: level_seed(ctx.meta.master_seed, 1_000_000 + j as u64),
            export_samples: ctx.res.samples_csv(),
            notes: &[],
        })?;
        max_ess = max_ess.max(outcome.max_ess);
    }
    if max_ess < 10.0 {
        return Err(CliError::Numerical(format!(
            "effective sample size stayed below 10 at every requested level \
             (best was {})",
            fmt_f64(max_ess)
        )));
    }
    Ok(())
}
