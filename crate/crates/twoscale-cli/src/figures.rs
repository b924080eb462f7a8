//! Canned figure recipes: each writes every CSV needed to overlay the
//! empirical tail estimates against the approximate, full, and Gaussian
//! rate curves, or to compare moments and densities against the Gaussian
//! fluctuation limit.
//!
//! Recipes are self-contained: the media, forcing, and run parameters are
//! fixed here, and the level grids are derived at run time from the limit
//! value, the fluctuation variance, and the reachable range of the instance,
//! so the curves land on the informative part of the axis for any seed.
//! Each sub-run resolves to its own snapshot and hash; a `manifest.txt`
//! ties the files of a figure together. Overlays of truncated expansions
//! of the solution are deliberately not produced; the `solve` command
//! reports the exact decomposition `u_eps = u0 + v_eps + R_eps` instead.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use twoscale::corrector::{corrector_variance, CorrectorSpec};
use twoscale::montecarlo::run_convolved_is;
use twoscale::rng::Substream;
use twoscale::solver::{FineSolver, Homogenized};

use crate::commands::{
    emit_empirical, emit_rate_curve, eps_den, extreme_value, level_seed, EmpiricalJob, RateJob,
    RateKind, TiltChoice,
};
use crate::config::{
    self, linspace, ExperimentConfig, FamilyTag, LevelsConfig, MediaConfig, XiSpec,
};
use crate::output::{fmt_f64, write_manifest, write_snapshot_named, CsvFile, Meta};
use crate::CliError;

pub const FIGURE_NAMES: [&str; 6] = [
    "mild_ldp",
    "wild_ldp",
    "convolved_ldp_eps100",
    "convolved_ldp_eps10",
    "corrector_variance",
    "pdf_compare",
];

/// Smooth amplitude profile whose coefficient stays well above its floor.
pub const MILD_XI: [f64; 8] = [0.15, -0.1, 0.12, -0.08, 0.1, -0.05, 0.06, -0.04];

/// Alternating large amplitudes that drive the coefficient onto its floor
/// around the middle of the interval, where the forcing acts.
pub const WILD_XI: [f64; 8] = [-0.8, 0.85, -0.9, 0.7, -0.75, 0.8, -0.6, 0.65];

const LDP_SAMPLES: u64 = 100_000;
const LDP_PILOT: u64 = 2_000;
const LDP_LEVELS: usize = 16;
const THEORY_LEVELS: usize = 61;
/// The contracted four-dimensional curve costs seconds per level, and the
/// rate functions are smooth and convex, so its overlay grid is coarser.
const FULL_THEORY_LEVELS: usize = 31;

fn theory_count(kind: RateKind) -> usize {
    if kind == RateKind::Full {
        FULL_THEORY_LEVELS
    } else {
        THEORY_LEVELS
    }
}

pub fn figure(name: &str, seed: Option<u64>, out: Option<&Path>) -> Result<(), CliError> {
    let base = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("out"));
    let master = seed.unwrap_or(config::DEFAULT_MASTER_SEED);
    match name {
        "mild_ldp" => ldp_parameterized("mild_ldp", &MILD_XI, &base, master),
        "wild_ldp" => ldp_parameterized("wild_ldp", &WILD_XI, &base, master),
        "convolved_ldp_eps100" => ldp_convolved("convolved_ldp_eps100", 0.01, &base, master),
        "convolved_ldp_eps10" => ldp_convolved("convolved_ldp_eps10", 0.1, &base, master),
        "corrector_variance" => corrector_variance_fig(&base, master),
        "pdf_compare" => pdf_compare_fig(&base, master),
        _ => Err(CliError::Config(format!(
            "unknown figure \"{name}\"; available: {}",
            FIGURE_NAMES.join(", ")
        ))),
    }
}

fn num<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Numerical(e.to_string())
}

fn parameterized_cfg(profile: &[f64; 8]) -> ExperimentConfig {
    ExperimentConfig {
        media: Some(MediaConfig {
            family: FamilyTag::Parameterized,
            xi: Some(XiSpec::Profile(profile.to_vec())),
            xi_seed: None,
            r: None,
            nu_b: None,
            kappa: None,
            h_l1: None,
        }),
        ..ExperimentConfig::default()
    }
}

fn convolved_cfg(xi: u64, kappa: u64) -> ExperimentConfig {
    ExperimentConfig {
        media: Some(MediaConfig {
            family: FamilyTag::Convolved,
            xi: Some(XiSpec::Dof(xi)),
            xi_seed: None,
            r: None,
            nu_b: None,
            kappa: Some(kappa),
            h_l1: None,
        }),
        ..ExperimentConfig::default()
    }
}

/// One bounded-family tail figure: empirical rate plus the three theory
/// curves on a span reaching from the central regime toward the largest
/// reachable value.
fn ldp_parameterized(
    name: &str,
    profile: &[f64; 8],
    base: &Path,
    master: u64,
) -> Result<(), CliError> {
    let dir = base.join(name);
    let eps = 0.01;
    let x = 0.5;
    let mut cfg = parameterized_cfg(profile);
    cfg.run.epsilons = Some(vec![eps]);
    cfg.run.x = Some(x);
    cfg.run.samples = Some(LDP_SAMPLES);
    cfg.run.pilot_samples = Some(LDP_PILOT);

    let probe = config::resolve(cfg.clone(), Some(master), Some(&dir))?;
    let model = probe.require_model()?.clone();
    let f = probe.f.clone();
    let hom = Homogenized::new(&model, &f).map_err(num)?;
    let u0 = hom.solve(x).map_err(num)?;
    let c_c = corrector_variance(&CorrectorSpec::new(model.clone(), f.clone()), x).map_err(num)?;
    let sd = (eps * c_c).sqrt();
    let cap = extreme_value(&model, &f, x, eps, -1.0)?;
    let hi = u0 + 0.92 * (cap - u0);
    let emp_levels = linspace(u0 + 2.0 * sd, hi, LDP_LEVELS);
    let theory_lo = (u0 - 0.15 * (hi - u0)).max(0.0);

    cfg.run.levels = Some(LevelsConfig::List(emp_levels.clone()));
    let res = config::resolve(cfg, Some(master), Some(&dir))?;
    write_snapshot_named(&dir, "resolved_config.toml", &res.snapshot)?;
    let meta = Meta {
        config_hash: res.hash.clone(),
        master_seed: master,
    };

    let notes = [format!("figure={name}")];
    emit_empirical(&EmpiricalJob {
        dir: &dir,
        suffix: "",
        meta: &meta,
        model: &model,
        f: &f,
        eps,
        x,
        levels: &emp_levels,
        n: LDP_SAMPLES as usize,
        pilot_n: LDP_PILOT as usize,
        tilt: TiltChoice::Auto,
        master_seed: master,
        export_samples: false,
        notes: &notes,
    })?;
    for kind in [RateKind::Approx, RateKind::Full, RateKind::Gaussian] {
        let theory_levels = linspace(theory_lo, hi, theory_count(kind));
        emit_rate_curve(&RateJob {
            dir: &dir,
            suffix: "",
            meta: &meta,
            model: &model,
            f: &f,
            x,
            kind,
            levels: &theory_levels,
            eps,
            notes: &notes,
        })?;
    }
    write_manifest(
        &dir,
        "manifest.txt",
        &meta,
        &[
            format!("figure = {name}"),
            "family = parameterized".to_string(),
            format!(
                "xi = [{}]",
                profile
                    .iter()
                    .map(|&v| fmt_f64(v))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
            format!("eps = {}", fmt_f64(eps)),
            format!("x = {}", fmt_f64(x)),
            format!("samples_per_level = {LDP_SAMPLES}"),
            format!("u0 = {}", fmt_f64(u0)),
            format!("corrector_variance = {}", fmt_f64(c_c)),
            format!("reachable_max = {}", fmt_f64(cap)),
            format!(
                "levels = {LDP_LEVELS} points in [{}, {}]",
                fmt_f64(emp_levels[0]),
                fmt_f64(hi)
            ),
            "files = empirical_rate.csv, samples_manifest.csv, rate_approx.csv, \
             rate_full.csv, rate_gaussian.csv, resolved_config.toml"
                .to_string(),
        ],
    )?;
    Ok(())
}

/// Convolved-family tail figures at one cell width, run for both a light
/// and a heavier chi-squared law.
fn ldp_convolved(name: &str, eps: f64, base: &Path, master: u64) -> Result<(), CliError> {
    let dir = base.join(name);
    let x = 0.5;
    let mut manifest_lines = vec![
        format!("figure = {name}"),
        "family = convolved".to_string(),
        format!("x = {}", fmt_f64(x)),
        format!("samples_per_level = {LDP_SAMPLES}"),
    ];
    let mut first_meta: Option<Meta> = None;
    for (si, xi) in [1u64, 3].into_iter().enumerate() {
        let sub_seed = if si == 0 {
            master
        } else {
            level_seed(master, 0xF1D0 + si as u64)
        };
        let mut cfg = convolved_cfg(xi, 1);
        cfg.run.epsilons = Some(vec![eps]);
        cfg.run.x = Some(x);
        cfg.run.samples = Some(LDP_SAMPLES);
        cfg.run.pilot_samples = Some(LDP_PILOT);

        let probe = config::resolve(cfg.clone(), Some(sub_seed), Some(&dir))?;
        let model = probe.require_model()?.clone();
        let f = probe.f.clone();
        let hom = Homogenized::new(&model, &f).map_err(num)?;
        let u0 = hom.solve(x).map_err(num)?;
        let c_c =
            corrector_variance(&CorrectorSpec::new(model.clone(), f.clone()), x).map_err(num)?;
        // the positive chi-squared law reaches far on both sides of the
        // limit, so the span is set in multiples of it
        let emp_levels = linspace(0.3 * u0, 4.5 * u0, LDP_LEVELS);
        let theory_lo = 0.15 * u0;
        let theory_hi = 4.5 * u0;

        cfg.run.levels = Some(LevelsConfig::List(emp_levels.clone()));
        let res = config::resolve(cfg, Some(sub_seed), Some(&dir))?;
        write_snapshot_named(&dir, &format!("resolved_config_xi{xi}.toml"), &res.snapshot)?;
        let meta = Meta {
            config_hash: res.hash.clone(),
            master_seed: sub_seed,
        };

        let sfx = format!("_xi{xi}");
        let notes = [format!("figure={name} xi={xi}")];
        emit_empirical(&EmpiricalJob {
            dir: &dir,
            suffix: &sfx,
            meta: &meta,
            model: &model,
            f: &f,
            eps,
            x,
            levels: &emp_levels,
            n: LDP_SAMPLES as usize,
            pilot_n: LDP_PILOT as usize,
            tilt: TiltChoice::Auto,
            master_seed: sub_seed,
            export_samples: false,
            notes: &notes,
        })?;
        for kind in [RateKind::Approx, RateKind::Full, RateKind::Gaussian] {
            let theory_levels = linspace(theory_lo, theory_hi, theory_count(kind));
            emit_rate_curve(&RateJob {
                dir: &dir,
                suffix: &sfx,
                meta: &meta,
                model: &model,
                f: &f,
                x,
                kind,
                levels: &theory_levels,
                eps,
                notes: &notes,
            })?;
        }

        let prefix = if si == 0 {
            String::new()
        } else {
            format!("run{}.", si + 1)
        };
        manifest_lines.extend([
            format!("{prefix}xi = {xi}"),
            format!("{prefix}kappa = 1"),
            format!("{prefix}h_l1 = 1"),
            format!("{prefix}eps = {}", fmt_f64(eps)),
            format!("{prefix}master_seed = {sub_seed}"),
            format!("{prefix}u0 = {}", fmt_f64(u0)),
            format!("{prefix}corrector_variance = {}", fmt_f64(c_c)),
            format!(
                "{prefix}levels = {LDP_LEVELS} points in [{}, {}]",
                fmt_f64(emp_levels[0]),
                fmt_f64(emp_levels[LDP_LEVELS - 1])
            ),
            format!(
                "{prefix}files = empirical_rate{sfx}.csv, samples_manifest{sfx}.csv, \
                 rate_approx{sfx}.csv, rate_full{sfx}.csv, rate_gaussian{sfx}.csv, \
                 resolved_config_xi{xi}.toml"
            ),
        ]);
        if first_meta.is_none() {
            first_meta = Some(meta);
        }
    }
    write_manifest(
        &dir,
        "manifest.txt",
        first_meta.as_ref().expect("two sub-runs"),
        &manifest_lines,
    )?;
    Ok(())
}

/// Conditional second moments of the solution against the Gaussian
/// prediction `u0^2 + eps C_c`, for both amplitude profiles and several
/// cell widths.
fn corrector_variance_fig(base: &Path, master: u64) -> Result<(), CliError> {
    let dir = base.join("corrector_variance");
    let eps_list = [0.1, 0.02, 0.01];
    let m_real = 2_000usize;
    let grid_points = 101usize;
    let grid = linspace(0.0, 1.0, grid_points);
    let mut manifest_lines = vec![
        "figure = corrector_variance".to_string(),
        "family = parameterized".to_string(),
        format!("realizations = {m_real}"),
        format!("grid_points = {grid_points}"),
        "inverse_eps = 10, 50, 100".to_string(),
    ];
    let mut first_meta: Option<Meta> = None;
    for (ii, (tag, profile)) in [("mild", &MILD_XI), ("wild", &WILD_XI)].into_iter().enumerate() {
        let sub_seed = if ii == 0 {
            master
        } else {
            level_seed(master, 0xC0DE)
        };
        let mut cfg = parameterized_cfg(profile);
        cfg.run.epsilons = Some(eps_list.to_vec());
        cfg.run.grid_points = Some(grid_points as u64);
        cfg.run.realizations = Some(m_real as u64);
        let res = config::resolve(cfg, Some(sub_seed), Some(&dir))?;
        write_snapshot_named(&dir, &format!("resolved_config_{tag}.toml"), &res.snapshot)?;
        let meta = Meta {
            config_hash: res.hash.clone(),
            master_seed: sub_seed,
        };
        let model = res.require_model()?.clone();
        let f = res.f.clone();
        let hom = Homogenized::new(&model, &f).map_err(num)?;
        let u0_path: Vec<f64> = grid
            .iter()
            .map(|&s| hom.solve(s).map_err(num))
            .collect::<Result<_, _>>()?;
        let spec = CorrectorSpec::new(model.clone(), f.clone());
        let c_path: Vec<f64> = grid
            .iter()
            .map(|&s| {
                if s <= 0.0 || s >= 1.0 {
                    Ok(0.0)
                } else {
                    corrector_variance(&spec, s).map_err(num)
                }
            })
            .collect::<Result<_, _>>()?;

        let notes = [format!("figure=corrector_variance instance={tag}")];
        let mut cv = CsvFile::create(
            &dir,
            &format!("corrector_variance_{tag}.csv"),
            &meta,
            &notes,
            &["x", "variance"],
        )?;
        for (k, &xk) in grid.iter().enumerate() {
            cv.row(&[xk, c_path[k]])?;
        }
        cv.finish()?;

        for (je, &eps) in eps_list.iter().enumerate() {
            let solver = FineSolver::new(&model, &f, &grid, eps).map_err(num)?;
            let squares: Vec<Vec<f64>> = (0..m_real)
                .into_par_iter()
                .map(|i| -> Result<Vec<f64>, String> {
                    let stream =
                        Substream::new(sub_seed, (je * m_real + i) as u64);
                    let real = model.sample_fine(eps, stream).map_err(|e| e.to_string())?;
                    let pi = solver.integrals(&real).map_err(|e| e.to_string())?;
                    Ok((0..grid.len())
                        .map(|k| {
                            let v = pi.value_at(k);
                            v * v
                        })
                        .collect())
                })
                .collect::<Result<_, _>>()
                .map_err(CliError::Numerical)?;
            // sequential reduction keeps the sums byte-identical across runs
            let mut m2 = vec![0.0; grid.len()];
            for row in &squares {
                for (k, &v) in row.iter().enumerate() {
                    m2[k] += v;
                }
            }
            let mut csv = CsvFile::create(
                &dir,
                &format!("moment2_{tag}_eps{}.csv", eps_den(eps)),
                &meta,
                &[
                    format!(
                        "figure=corrector_variance instance={tag} eps={} realizations={m_real}",
                        fmt_f64(eps)
                    ),
                    "second_moment_gaussian = u0^2 + eps * corrector variance".to_string(),
                ],
                &["x", "second_moment_emp", "second_moment_gaussian"],
            )?;
            for (k, &xk) in grid.iter().enumerate() {
                csv.row(&[
                    xk,
                    m2[k] / m_real as f64,
                    u0_path[k] * u0_path[k] + eps * c_path[k],
                ])?;
            }
            csv.finish()?;
        }
        let prefix = if ii == 0 { "" } else { "run2." };
        manifest_lines.extend([
            format!("{prefix}instance = {tag}"),
            format!(
                "{prefix}xi = [{}]",
                profile
                    .iter()
                    .map(|&v| fmt_f64(v))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
            format!("{prefix}master_seed = {sub_seed}"),
            format!(
                "{prefix}files = corrector_variance_{tag}.csv, moment2_{tag}_eps10.csv, \
                 moment2_{tag}_eps50.csv, moment2_{tag}_eps100.csv, \
                 resolved_config_{tag}.toml"
            ),
        ]);
        if first_meta.is_none() {
            first_meta = Some(meta);
        }
    }
    write_manifest(
        &dir,
        "manifest.txt",
        first_meta.as_ref().expect("two sub-runs"),
        &manifest_lines,
    )?;
    Ok(())
}

/// Histograms of the pointwise solution against the Gaussian density
/// `N(u0, eps C_c)`, for a narrow and a wide smoothing kernel at two cell
/// widths.
fn pdf_compare_fig(base: &Path, master: u64) -> Result<(), CliError> {
    let dir = base.join("pdf_compare");
    let x = 0.5;
    let n = 20_000usize;
    let bins = 80usize;
    let mut manifest_lines = vec![
        "figure = pdf_compare".to_string(),
        "family = convolved".to_string(),
        "xi = 1".to_string(),
        format!("x = {}", fmt_f64(x)),
        format!("samples = {n}"),
        format!("bins = {bins}"),
    ];
    let mut first_meta: Option<Meta> = None;
    for (si, (kappa, eps)) in [(1u64, 0.1), (1, 0.01), (10, 0.1), (10, 0.01)]
        .into_iter()
        .enumerate()
    {
        let sub_seed = if si == 0 {
            master
        } else {
            level_seed(master, 0x9D50 + si as u64)
        };
        let mut cfg = convolved_cfg(1, kappa);
        cfg.run.epsilons = Some(vec![eps]);
        cfg.run.x = Some(x);
        cfg.run.samples = Some(n as u64);
        let res = config::resolve(cfg, Some(sub_seed), Some(&dir))?;
        let den = eps_den(eps);
        write_snapshot_named(
            &dir,
            &format!("resolved_config_kappa{kappa}_eps{den}.toml"),
            &res.snapshot,
        )?;
        let meta = Meta {
            config_hash: res.hash.clone(),
            master_seed: sub_seed,
        };
        let model = res.require_model()?.clone();
        let f = res.f.clone();
        let hom = Homogenized::new(&model, &f).map_err(num)?;
        let u0 = hom.solve(x).map_err(num)?;
        let c_c =
            corrector_variance(&CorrectorSpec::new(model.clone(), f.clone()), x).map_err(num)?;
        let sigma = (eps * c_c).sqrt();

        let samples = run_convolved_is(&model, &f, eps, x, n, 0.0, sub_seed).map_err(num)?;
        let vmin = samples.values.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        let vmax = samples
            .values
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        // window around the Gaussian bulk, clipped to the data so a heavy
        // upper tail cannot stretch the bins into emptiness
        let mut lo = vmin.max(u0 - 5.0 * sigma);
        let mut hi = vmax.min(u0 + 8.0 * sigma);
        if !(hi > lo) {
            lo = vmin;
            hi = if vmax > vmin { vmax } else { vmin + 1.0 };
        }
        let bw = (hi - lo) / bins as f64;
        let mut counts = vec![0u64; bins];
        let mut dropped = 0u64;
        for &v in &samples.values {
            if v >= lo && v < hi {
                let idx = (((v - lo) / bw) as usize).min(bins - 1);
                counts[idx] += 1;
            } else {
                dropped += 1;
            }
        }

        let name = format!("pdf_kappa{kappa}_eps{den}.csv");
        let mut csv = CsvFile::create(
            &dir,
            &name,
            &meta,
            &[
                format!(
                    "figure=pdf_compare kappa={kappa} eps={} u0={} sigma={}",
                    fmt_f64(eps),
                    fmt_f64(u0),
                    fmt_f64(sigma)
                ),
                format!(
                    "histogram of {n} direct draws; {dropped} outside \
                     [{}, {}] are dropped but still counted in the density \
                     normalization",
                    fmt_f64(lo),
                    fmt_f64(hi)
                ),
                "density_gaussian: normal density with the limit mean and \
                 the corrector variance"
                    .to_string(),
            ],
            &["bin_center", "density_empirical", "density_gaussian"],
        )?;
        let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        for (b, &count) in counts.iter().enumerate() {
            let center = lo + (b as f64 + 0.5) * bw;
            let t = (center - u0) / sigma;
            csv.row(&[
                center,
                count as f64 / (n as f64 * bw),
                norm * (-0.5 * t * t).exp(),
            ])?;
        }
        csv.finish()?;

        let prefix = if si == 0 {
            String::new()
        } else {
            format!("run{}.", si + 1)
        };
        manifest_lines.extend([
            format!("{prefix}kappa = {kappa}"),
            format!("{prefix}eps = {}", fmt_f64(eps)),
            format!("{prefix}master_seed = {sub_seed}"),
            format!("{prefix}u0 = {}", fmt_f64(u0)),
            format!("{prefix}sigma = {}", fmt_f64(sigma)),
            format!("{prefix}files = {name}, resolved_config_kappa{kappa}_eps{den}.toml"),
        ]);
        if first_meta.is_none() {
            first_meta = Some(meta);
        }
    }
    write_manifest(
        &dir,
        "manifest.txt",
        first_meta.as_ref().expect("four sub-runs"),
        &manifest_lines,
    )?;
    Ok(())
}
