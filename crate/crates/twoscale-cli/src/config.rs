//! Experiment configuration: a strict TOML schema resolved into library
//! model objects plus run parameters.
//!
//! One experiment is one config file is one output directory. Unknown keys
//! are rejected so a typo fails loudly instead of silently falling back to
//! a default. The `--seed` and `--out` flags override `run.master_seed`
//! and `outputs.directory`; every other knob lives in the file.
//!
//! After parsing, the config is normalized: defaults are filled in, a
//! `xi_seed` is expanded into the concrete draw it produced, and the
//! result is serialized back to TOML. That snapshot is written next to the
//! outputs and hashed, so the `config_hash` header in each CSV pins the
//! fully resolved experiment, not just the bytes the user typed.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use twoscale::media::{self, ConvolvedCoarse, MediaFamily, MediaModel, ParameterizedCoarse};
use twoscale::rng::Substream;
use twoscale::source::SourceSpec;

use crate::CliError;

pub const DEFAULT_EPSILON: f64 = 0.01;
pub const DEFAULT_X: f64 = 0.5;
pub const DEFAULT_SAMPLES: u64 = 10_000;
pub const DEFAULT_REALIZATIONS: u64 = 1;
pub const DEFAULT_GRID_POINTS: u64 = 1001;
pub const DEFAULT_MASTER_SEED: u64 = 1;
/// Largest supported cell count. A finer medium is almost certainly a typo
/// and would make even a single realization unreasonably expensive.
pub const MAX_CELLS: f64 = 1e6;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub media: Option<MediaConfig>,
    pub source: Option<SourceConfig>,
    pub run: RunConfig,
    pub outputs: OutputsConfig,
}

/// Which coefficient family the experiment runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyTag {
    Parameterized,
    Convolved,
}

/// The macroscopic randomness of a family: either the concrete value or a
/// shape that does not apply to the family at hand (rejected later).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum XiSpec {
    /// Chi-squared degrees of freedom (convolved family).
    Dof(u64),
    /// Eight sine-mode amplitudes (parameterized family).
    Profile(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediaConfig {
    pub family: FamilyTag,
    /// Parameterized: `xi = [..8 floats..]`. Convolved: `xi = <integer>`
    /// degrees of freedom.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi: Option<XiSpec>,
    /// Draw the macroscopic randomness from this seed instead of spelling
    /// out `xi`; normalization records the resulting draw under `xi`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi_seed: Option<u64>,
    /// Parameterized only: geometric decay of the sine modes, in (0, 1].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    /// Parameterized only: amplitude of the per-cell uniform noise, in
    /// [0, 17/32) so the coefficient keeps a positive floor.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu_b: Option<f64>,
    /// Convolved only: width of the box smoothing kernel, in cells.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<u64>,
    /// Convolved only: total kernel mass.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_l1: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    /// Piecewise constant forcing. Pieces may not overlap; gaps are filled
    /// with zero forcing, so only the nonzero pieces need to be listed.
    pub pieces: Option<Vec<PieceConfig>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceConfig {
    pub from: f64,
    pub to: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Cell widths to run, each with integer `1/eps`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    /// Evaluation point for pointwise quantities, strictly inside (0, 1).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    /// Monte Carlo draws per level for `empirical`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    /// Independent coefficient realizations for `media-sample` / `solve`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub realizations: Option<u64>,
    /// Uniform output grid size on [0, 1] for path-valued commands.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    /// Level grid for `rate` and `empirical`; defaults are derived from
    /// the limit value and the corrector variance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<LevelsConfig>,
    /// Sampling tilt for `empirical`: "auto", "direct", `{ eta = .. }`
    /// (convolved) or `{ bradford = .. }` (parameterized).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tilt: Option<TiltConfig>,
    /// Draws per candidate tilt in the automatic pilot scan.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pilot_samples: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LevelsConfig {
    List(Vec<f64>),
    Span { min: f64, max: f64, count: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TiltConfig {
    /// "auto" (pilot scan per level) or "direct" (no tilt).
    Named(String),
    /// Fixed exponential tilt of the chi-squared increments; below 1/2,
    /// negative values push toward the lower tail.
    Exponential { eta: f64 },
    /// Fixed Bradford concentration for the bounded cell variables.
    Bradford { bradford: f64 },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    /// Also export the raw (value, log_weight) draws of each `empirical`
    /// level.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples_csv: Option<bool>,
}

/// A parsed config after normalization, with the model and forcing built
/// and the canonical snapshot hashed.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub cfg: ExperimentConfig,
    /// Absent exactly when the config has no `[media]` block; commands
    /// that need a medium turn that into a config error.
    pub model: Option<MediaModel>,
    pub f: SourceSpec,
    pub snapshot: String,
    pub hash: String,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn load(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    let Some(p) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = std::fs::read_to_string(p)
        .map_err(|e| bad(format!("cannot read config {}: {e}", p.display())))?;
    toml::from_str(&text).map_err(|e| bad(format!("config {}: {e}", p.display())))
}

/// Fill defaults, apply command line overrides, build the model and the
/// forcing, and freeze the canonical snapshot.
pub fn resolve(
    mut cfg: ExperimentConfig,
    seed_override: Option<u64>,
    out_override: Option<&Path>,
) -> Result<Resolved, CliError> {
    if let Some(seed) = seed_override {
        cfg.run.master_seed = Some(seed);
    }
    if let Some(dir) = out_override {
        cfg.outputs.directory = Some(dir.to_string_lossy().into_owned());
    }
    normalize_run(&mut cfg.run)?;
    cfg.outputs.directory.get_or_insert_with(|| "out".into());
    cfg.outputs.samples_csv.get_or_insert(false);

    let model = match cfg.media.as_mut() {
        None => None,
        Some(m) => Some(build_model(m)?),
    };
    let f = build_source(cfg.source.as_ref())?;
    if cfg.source.is_none() {
        // record the default bump so the snapshot is self-contained
        cfg.source = Some(SourceConfig {
            pieces: Some(vec![PieceConfig {
                from: 0.45,
                to: 0.55,
                height: 1.0,
            }]),
        });
    }

    let snapshot = toml::to_string(&cfg)
        .map_err(|e| bad(format!("cannot serialize resolved config: {e}")))?;
    let hash = hash_snapshot(&snapshot);
    Ok(Resolved {
        cfg,
        model,
        f,
        snapshot,
        hash,
    })
}

/// First 16 hex digits of the SHA-256 of the resolved snapshot.
pub fn hash_snapshot(snapshot: &str) -> String {
    let digest = Sha256::digest(snapshot.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn normalize_run(run: &mut RunConfig) -> Result<(), CliError> {
    let eps = run.epsilons.get_or_insert_with(|| vec![DEFAULT_EPSILON]);
    if eps.is_empty() {
        return Err(bad("run.epsilons must list at least one cell width"));
    }
    for &e in eps.iter() {
        if !(e.is_finite() && e > 0.0 && e <= 1.0) {
            return Err(bad(format!("run.epsilons: {e} is outside (0, 1]")));
        }
        if 1.0 / e > MAX_CELLS {
            return Err(bad(format!(
                "run.epsilons: {e} needs more than {MAX_CELLS:.0} cells"
            )));
        }
        media::cell_count(e)
            .map_err(|_| bad(format!("run.epsilons: 1/{e} must be a whole number of cells")))?;
    }
    let x = *run.x.get_or_insert(DEFAULT_X);
    if !(x.is_finite() && x > 0.0 && x < 1.0) {
        return Err(bad(format!("run.x = {x} must lie strictly inside (0, 1)")));
    }
    if *run.samples.get_or_insert(DEFAULT_SAMPLES) == 0 {
        return Err(bad("run.samples must be at least 1"));
    }
    if *run.realizations.get_or_insert(DEFAULT_REALIZATIONS) == 0 {
        return Err(bad("run.realizations must be at least 1"));
    }
    let gp = *run.grid_points.get_or_insert(DEFAULT_GRID_POINTS);
    if !(2..=10_000_000).contains(&gp) {
        return Err(bad(format!(
            "run.grid_points = {gp} must lie in [2, 10^7]"
        )));
    }
    run.master_seed.get_or_insert(DEFAULT_MASTER_SEED);
    match &run.levels {
        None => {}
        Some(LevelsConfig::List(ls)) => {
            if ls.is_empty() || ls.iter().any(|l| !l.is_finite()) {
                return Err(bad("run.levels must be a non-empty list of finite values"));
            }
        }
        Some(LevelsConfig::Span { min, max, count }) => {
            if !(min.is_finite() && max.is_finite() && min <= max) {
                return Err(bad(format!(
                    "run.levels: span [{min}, {max}] must be finite with min <= max"
                )));
            }
            if *count == 0 || (*count == 1 && min < max) {
                return Err(bad("run.levels: span count must be at least 2"));
            }
        }
    }
    match &run.tilt {
        None | Some(TiltConfig::Exponential { .. }) | Some(TiltConfig::Bradford { .. }) => {}
        Some(TiltConfig::Named(name)) => {
            if name != "auto" && name != "direct" {
                return Err(bad(format!(
                    "run.tilt: expected \"auto\", \"direct\", {{ eta = .. }} or \
                     {{ bradford = .. }}, got \"{name}\""
                )));
            }
        }
    }
    if let Some(TiltConfig::Exponential { eta }) = run.tilt {
        if !(eta.is_finite() && eta < 0.5) {
            return Err(bad(format!(
                "run.tilt.eta = {eta} must be finite and below 1/2"
            )));
        }
    }
    if let Some(TiltConfig::Bradford { bradford }) = run.tilt {
        if !(bradford.is_finite() && bradford >= 0.0) {
            return Err(bad(format!(
                "run.tilt.bradford = {bradford} must be finite and nonnegative"
            )));
        }
    }
    if let Some(p) = run.pilot_samples {
        if p == 0 {
            return Err(bad("run.pilot_samples must be at least 1"));
        }
    }
    Ok(())
}

/// Validate the media block, expand `xi_seed` into the concrete draw, and
/// build the model. Mutates the block so the snapshot records what ran.
fn build_model(m: &mut MediaConfig) -> Result<MediaModel, CliError> {
    if m.xi.is_some() && m.xi_seed.is_some() {
        return Err(bad("media.xi and media.xi_seed are mutually exclusive"));
    }
    match m.family {
        FamilyTag::Parameterized => {
            if m.kappa.is_some() {
                return Err(bad("media.kappa applies to the convolved family only"));
            }
            if m.h_l1.is_some() {
                return Err(bad("media.h_l1 applies to the convolved family only"));
            }
            let r = *m.r.get_or_insert(ParameterizedCoarse::DEFAULT_R);
            if !(r.is_finite() && r > 0.0 && r <= 1.0) {
                return Err(bad(format!("media.r = {r} must lie in (0, 1]")));
            }
            let nu_b = *m.nu_b.get_or_insert(ParameterizedCoarse::DEFAULT_NU_B);
            if !(nu_b.is_finite()
                && nu_b >= 0.0
                && nu_b < ParameterizedCoarse::DEFAULT_FLOOR)
            {
                return Err(bad(format!(
                    "media.nu_b = {nu_b} must lie in [0, 17/32) so the \
                     coefficient stays positive"
                )));
            }
            let xi: [f64; 8] = match (&m.xi, m.xi_seed) {
                (Some(XiSpec::Profile(v)), _) => {
                    if v.len() != 8 || v.iter().any(|a| !a.is_finite()) {
                        return Err(bad(format!(
                            "media.xi: the parameterized family needs exactly \
                             8 finite amplitudes, got {}",
                            v.len()
                        )));
                    }
                    let mut xi = [0.0; 8];
                    xi.copy_from_slice(v);
                    xi
                }
                (Some(XiSpec::Dof(_)), _) => {
                    return Err(bad(
                        "media.xi: the parameterized family takes an \
                         eight-entry amplitude array, not a degree count \
                         (or set media.xi_seed)",
                    ));
                }
                (None, Some(seed)) => {
                    let family = MediaFamily::Parameterized { r, nu_b };
                    let drawn = media::sample_coarse(family, Substream::new(seed, 0))
                        .map_err(|e| bad(format!("media.xi_seed: {e}")))?;
                    match drawn {
                        MediaModel::Parameterized(p) => p.xi,
                        MediaModel::Convolved(_) => unreachable!("family fixed above"),
                    }
                }
                (None, None) => {
                    return Err(bad(
                        "media.xi: give an eight-entry amplitude array or set \
                         media.xi_seed (field path: media.xi)",
                    ));
                }
            };
            m.xi = Some(XiSpec::Profile(xi.to_vec()));
            m.xi_seed = None;
            Ok(MediaModel::Parameterized(ParameterizedCoarse {
                nu_b,
                ..ParameterizedCoarse::with_r(xi, r)
            }))
        }
        FamilyTag::Convolved => {
            if m.r.is_some() {
                return Err(bad("media.r applies to the parameterized family only"));
            }
            if m.nu_b.is_some() {
                return Err(bad("media.nu_b applies to the parameterized family only"));
            }
            let kappa = *m.kappa.get_or_insert(1);
            if kappa == 0 {
                return Err(bad("media.kappa must be at least 1"));
            }
            let h_l1 = *m.h_l1.get_or_insert(1.0);
            if !(h_l1.is_finite() && h_l1 > 0.0) {
                return Err(bad(format!("media.h_l1 = {h_l1} must be positive")));
            }
            let xi = match (&m.xi, m.xi_seed) {
                (Some(XiSpec::Dof(k)), _) => *k,
                (Some(XiSpec::Profile(_)), _) => {
                    return Err(bad(
                        "media.xi: the convolved family takes integer \
                         chi-squared degrees of freedom, not an array",
                    ));
                }
                (None, Some(seed)) => {
                    let family = MediaFamily::Convolved {
                        kappa: kappa as usize,
                        h_l1,
                    };
                    let drawn = media::sample_coarse(family, Substream::new(seed, 0))
                        .map_err(|e| bad(format!("media.xi_seed: {e}")))?;
                    match drawn {
                        MediaModel::Convolved(c) => c.xi,
                        MediaModel::Parameterized(_) => unreachable!("family fixed above"),
                    }
                }
                (None, None) => 1,
            };
            if xi == 0 {
                return Err(bad("media.xi: degrees of freedom must be at least 1"));
            }
            m.xi = Some(XiSpec::Dof(xi));
            m.xi_seed = None;
            ConvolvedCoarse::boxcar(xi, kappa as usize, h_l1)
                .map(MediaModel::Convolved)
                .map_err(|e| bad(format!("media: {e}")))
        }
    }
}

/// Build the forcing, padding unlisted stretches with zero height.
fn build_source(source: Option<&SourceConfig>) -> Result<SourceSpec, CliError> {
    let Some(pieces) = source.and_then(|s| s.pieces.as_ref()) else {
        return Ok(SourceSpec::unit_bump());
    };
    if pieces.is_empty() {
        return Err(bad("source.pieces must list at least one piece"));
    }
    const TOL: f64 = 1e-12;
    let mut sorted = pieces.clone();
    for (i, p) in sorted.iter().enumerate() {
        let ok = p.from.is_finite()
            && p.to.is_finite()
            && p.height.is_finite()
            && p.from >= -TOL
            && p.to <= 1.0 + TOL
            && p.from < p.to;
        if !ok {
            return Err(bad(format!(
                "source.pieces[{i}]: [{}, {}] with height {} must satisfy \
                 0 <= from < to <= 1 with finite height",
                p.from, p.to, p.height
            )));
        }
    }
    sorted.sort_by(|a, b| a.from.partial_cmp(&b.from).expect("finite checked above"));
    let mut triples: Vec<(f64, f64, f64)> = Vec::with_capacity(2 * sorted.len() + 1);
    let mut cursor = 0.0;
    for p in &sorted {
        if p.from < cursor - TOL {
            return Err(bad(format!(
                "source.pieces: [{}, {}] overlaps the previous piece",
                p.from, p.to
            )));
        }
        if p.from > cursor + TOL {
            triples.push((cursor, p.from, 0.0));
        }
        triples.push((p.from.max(cursor), p.to, p.height));
        cursor = p.to;
    }
    if cursor < 1.0 - TOL {
        triples.push((cursor, 1.0, 0.0));
    }
    SourceSpec::new(&triples).map_err(|e| bad(format!("source.pieces: {e}")))
}

/// Uniformly spaced grid including both ends.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

impl Resolved {
    pub fn require_model(&self) -> Result<&MediaModel, CliError> {
        self.model.as_ref().ok_or_else(|| {
            bad("missing [media] block: set media.family and its parameters \
                 (field path: media)")
        })
    }

    pub fn epsilons(&self) -> &[f64] {
        self.cfg.run.epsilons.as_deref().expect("normalized")
    }

    pub fn x(&self) -> f64 {
        self.cfg.run.x.expect("normalized")
    }

    pub fn samples(&self) -> usize {
        self.cfg.run.samples.expect("normalized") as usize
    }

    pub fn realizations(&self) -> usize {
        self.cfg.run.realizations.expect("normalized") as usize
    }

    pub fn grid_points(&self) -> usize {
        self.cfg.run.grid_points.expect("normalized") as usize
    }

    pub fn master_seed(&self) -> u64 {
        self.cfg.run.master_seed.expect("normalized")
    }

    pub fn out_dir(&self) -> &Path {
        Path::new(self.cfg.outputs.directory.as_deref().expect("normalized"))
    }

    pub fn samples_csv(&self) -> bool {
        self.cfg.outputs.samples_csv.expect("normalized")
    }

    /// Draws per candidate tilt in the pilot scan: the configured value, or
    /// half the main sample count clamped into [100, 2000].
    pub fn pilot_samples(&self) -> usize {
        match self.cfg.run.pilot_samples {
            Some(p) => p as usize,
            None => (self.samples() / 2).clamp(100, 2000),
        }
    }

    /// The configured level grid, or `default_count` points spanning
    /// `default_span` when the config leaves the levels open.
    pub fn levels_or(&self, default_span: (f64, f64), default_count: usize) -> Vec<f64> {
        match &self.cfg.run.levels {
            Some(LevelsConfig::List(ls)) => ls.clone(),
            Some(LevelsConfig::Span { min, max, count }) => {
                linspace(*min, *max, *count as usize)
            }
            None => linspace(default_span.0, default_span.1, default_count),
        }
    }

    /// Uniform output grid on [0, 1].
    pub fn grid(&self) -> Vec<f64> {
        linspace(0.0, 1.0, self.grid_points())
    }
}
