//! `twoscale`: experiments on a one-dimensional elliptic problem with a
//! random rapidly oscillating coefficient.
//!
//! The binary wraps the `twoscale` library: it solves sample paths
//! exactly, tabulates the homogenized limit and the Gaussian fluctuation
//! variance, evaluates large-deviation rate functions for the pointwise
//! solution, runs importance-sampled tail estimates, and bundles canned
//! figure recipes that emit everything needed to overlay those curves.
//!
//! Every output file starts with a `# version=`, `# config_hash=`,
//! `# master_seed=` header, and the fully resolved config is written next
//! to the outputs, so a run can be reproduced from its artifacts alone.
//! Reruns with the same config and seed are byte-identical.

mod commands;
mod config;
mod figures;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Failures carried to the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad config file, bad flag combination, or unwritable output: exit 2.
    Config(String),
    /// The requested computation did not produce a trustworthy number:
    /// exit 3.
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "twoscale",
    version,
    about = "Random two-scale elliptic experiments: exact sample paths, \
             homogenized limits, Gaussian correctors, rate functions, and \
             importance-sampled tail estimates",
    after_help = "Exit codes: 0 success, 2 config error, 3 numerical \
                  failure.\nAll CSV files start with '# version=', \
                  '# config_hash=', '# master_seed=' comment lines followed \
                  by a column header; the resolved config is written as \
                  resolved_config.toml in the output directory."
)]
struct Cli {
    /// TOML experiment config; every run parameter has a default, but
    /// commands that need a medium require its [media] block
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (overrides outputs.directory; default "out")
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Master seed (overrides run.master_seed; default 1)
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads for the Monte Carlo parts (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw coefficient realizations and tabulate the reciprocal
    /// coefficient per fine cell
    ///
    /// Writes media.csv (or media_eps<den>_real<i>.csv when run.epsilons or
    /// run.realizations asks for several) with columns:
    ///   cell_index  1-based fine cell number
    ///   inv_value   reciprocal coefficient 1/A at the cell midpoint
    /// Realization i of cell width eps_j uses the deterministic substream
    /// j*realizations+i of the master seed, shared with `solve`.
    #[command(name = "media-sample")]
    MediaSample,

    /// Solve one or more sample paths exactly and split off the Gaussian
    /// corrector
    ///
    /// Writes solution.csv (or solution_eps<den>_real<i>.csv) on the
    /// uniform run.grid_points grid with columns:
    ///   x      grid point
    ///   u_eps  exact sample solution
    ///   u0     homogenized limit
    ///   v_eps  fluctuation term, linear in the coefficient noise
    ///   R_eps  remainder; u_eps = u0 + v_eps + R_eps holds exactly
    Solve,

    /// Tabulate the homogenized coefficient and limit solution
    ///
    /// Writes homogenized.csv with columns:
    ///   x   grid point
    ///   a0  homogenized coefficient (harmonic-type mean at x)
    ///   u0  limit solution
    Homogenize,

    /// Tabulate the fluctuation variance of the Gaussian corrector
    ///
    /// Writes corrector.csv with columns:
    ///   x         grid point
    ///   variance  limit of Var[u_eps(x)]/eps (0 at the pinned ends)
    /// Var[u_eps(x)] is approximately eps times this variance for small
    /// cell widths.
    Corrector,

    /// Tabulate a large-deviation rate curve for the pointwise solution
    ///
    /// Writes rate_<kind>.csv over run.levels (default: 41 points spanning
    /// three corrector standard deviations around the limit value). Every
    /// header carries a steepness report line. Columns by kind:
    ///   approx:   ell,rate,lambda_star,status
    ///   full:     ell,rate,lambda1..lambda4,z1..z4,status
    ///   gaussian: ell,rate            (quadratic from the corrector)
    ///   chernoff: ell,rate,lambda_star,status  (finite-size bound at the
    ///             first run.epsilons entry; rate = -eps log P upper bound)
    /// status is converged, boundary, infinite, or failed; more than 5%
    /// failed levels exits 3.
    Rate {
        /// Which rate functional to tabulate
        #[arg(long, value_enum)]
        kind: RateKindArg,
    },

    /// Estimate the tail rate empirically by importance sampling
    ///
    /// Writes empirical_rate.csv (suffixed _eps<den> when several cell
    /// widths run) with columns:
    ///   ell                exceedance level
    ///   neg_rate           -eps log of the unnormalized tail estimate
    ///   neg_rate_selfnorm  same with the weights normalized by their sum
    ///   ess                effective sample size among tail hits
    ///   n_exceed           raw tail hits
    ///   clipped            1 when the raw estimate exceeded probability 1
    /// Levels at or above the weighted sample mean count the upper tail,
    /// lower levels the lower tail. samples_manifest.csv records the tilt
    /// and per-level seed of every run; outputs.samples_csv = true also
    /// exports samples_level<k>.csv with columns value,log_weight. Exits 3
    /// when the effective sample size stays below 10 at every level.
    Empirical,

    /// Run a canned figure recipe into out/<name>/
    ///
    /// Names: mild_ldp, wild_ldp (bounded medium at eps=1/100, empirical
    /// tail rate plus approximate, full, and Gaussian curves),
    /// convolved_ldp_eps100, convolved_ldp_eps10 (same overlays for the
    /// convolved medium with 1 and 3 degrees of freedom),
    /// corrector_variance (conditional second moments against
    /// u0^2 + eps * variance for 1/eps in {10, 50, 100}), pdf_compare
    /// (histograms against the Gaussian density for kernel widths 1 and 10
    /// at eps in {1/10, 1/100}). Recipes are self-contained: they accept
    /// --seed and --out but not --config, and each writes a manifest.txt
    /// plus the resolved config of every sub-run.
    Figure {
        /// Recipe name
        name: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RateKindArg {
    /// One-dimensional contraction of the scalar noise average
    Approx,
    /// Full four-dimensional functional contracted through the solution map
    Full,
    /// Quadratic rate implied by the Gaussian corrector
    Gaussian,
    /// Finite-size Chernoff upper bound (independent-cell media only)
    Chernoff,
}

impl From<RateKindArg> for commands::RateKind {
    fn from(k: RateKindArg) -> Self {
        match k {
            RateKindArg::Approx => commands::RateKind::Approx,
            RateKindArg::Full => commands::RateKind::Full,
            RateKindArg::Gaussian => commands::RateKind::Gaussian,
            RateKindArg::Chernoff => commands::RateKind::Chernoff,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Figure { name } => {
            if cli.config.is_some() {
                return Err(CliError::Config(
                    "figure recipes are self-contained and do not take --config; \
                     use --seed and --out to vary them"
                        .to_string(),
                ));
            }
            figures::figure(&name, cli.seed, cli.out.as_deref())
        }
        cmd => {
            let cfg = config::load(cli.config.as_deref())?;
            let res = config::resolve(cfg, cli.seed, cli.out.as_deref())?;
            let meta = output::Meta {
                config_hash: res.hash.clone(),
                master_seed: res.master_seed(),
            };
            let ctx = commands::Ctx { res, meta };
            match cmd {
                Command::MediaSample => commands::media_sample(&ctx),
                Command::Solve => commands::solve(&ctx),
                Command::Homogenize => commands::homogenize(&ctx),
                Command::Corrector => commands::corrector(&ctx),
                Command::Rate { kind } => commands::rate(&ctx, kind.into()),
                Command::Empirical => commands::empirical(&ctx),
                Command::Figure { .. } => unreachable!("handled above"),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        // only the sampling loops use the pool; a failure to size it (for
        // example when a pool already exists) is not worth aborting over
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("twoscale: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
