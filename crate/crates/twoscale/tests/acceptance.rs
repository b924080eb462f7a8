//! Acceptance gate: nine end-to-end criteria covering homogenization rate,
//! corrector statistics, the distributional limit, the scaled CGF and its
//! transforms, the importance-sampled rare-event estimates, steepness and
//! the Chernoff bound.
//!
//! Runs as a plain binary (no libtest harness) so one verdict line per
//! criterion always reaches the console; any failing criterion makes the
//! whole target exit nonzero.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use statrs::distribution::{ContinuousCDF, Normal};
use twoscale::corrector::{corrector_variance, gaussian_rate, CorrectorSpec};
use twoscale::ldp::{
    chernoff_bound, legendre_1d, rate_full, steepness_check, CramerFunctional, FunctionalKind,
    RateStatus,
};
use twoscale::media::{
    self, ConvolvedCoarse, FieldRealization, MediaModel, ParameterizedCoarse,
};
use twoscale::montecarlo::{empirical_rate, pilot_tilt, run_convolved_is, Tilt};
use twoscale::rng::Substream;
use twoscale::solver::{solve_point, FineSolver, Homogenized};
use twoscale::source::SourceSpec;

fn convolved_unit() -> MediaModel {
    MediaModel::Convolved(ConvolvedCoarse::boxcar(1, 1, 1.0).expect("valid kernel"))
}

fn mild_model() -> MediaModel {
    MediaModel::Parameterized(ParameterizedCoarse::new([
        0.15, -0.1, 0.12, -0.08, 0.1, -0.05, 0.06, -0.04,
    ]))
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Criterion 1: the L2 distance to the homogenized limit shrinks like
/// sqrt(eps) and sits below the a-priori constant at every cell width.
fn criterion_1() -> Result<String, String> {
    let model = convolved_unit();
    let f = SourceSpec::unit_bump();
    let hom = Homogenized::new(&model, &f).map_err(|e| e.to_string())?;
    let grid: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
    let u0: Vec<f64> = grid
        .iter()
        .map(|&x| hom.solve(x).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let c_inv = grid
        .iter()
        .map(|&t| model.sigma_sq(t))
        .fold(f64::MIN, f64::max);
    let n_real = 400usize;
    let epsilons = [1.0 / 16.0, 1.0 / 64.0, 1.0 / 256.0];
    let mut rms = Vec::new();
    for (j, &eps) in epsilons.iter().enumerate() {
        let plan = FineSolver::new(&model, &f, &grid, eps).map_err(|e| e.to_string())?;
        let mut mean_sq = 0.0;
        for i in 0..n_real {
            let real = model
                .sample_fine(eps, Substream::new(1600 + j as u64, i as u64))
                .map_err(|e| e.to_string())?;
            let ints = plan.integrals(&real).map_err(|e| e.to_string())?;
            let mut l2 = 0.0;
            for k in 0..grid.len() - 1 {
                let a = (ints.value_at(k) - u0[k]).powi(2);
                let b = (ints.value_at(k + 1) - u0[k + 1]).powi(2);
                l2 += 0.5 * (a + b) * (grid[k + 1] - grid[k]);
            }
            mean_sq += l2;
        }
        let r = (mean_sq / n_real as f64).sqrt();
        let cap = 3.0 * eps.sqrt() * f.l2_norm() * c_inv.sqrt();
        if r > cap {
            return Err(format!("rms {r:.3e} exceeds the bound {cap:.3e} at eps {eps}"));
        }
        rms.push(r);
    }
    let slope = least_squares_slope(
        &epsilons.map(f64::ln),
        &rms.iter().map(|r| r.ln()).collect::<Vec<_>>(),
    );
    if (0.4..=0.6).contains(&slope) {
        Ok(format!(
            "log-log slope {slope:.3} in [0.4, 0.6], all three points below the a-priori constant"
        ))
    } else {
        Err(format!("log-log slope {slope:.3} outside [0.4, 0.6]"))
    }
}

/// Criterion 2: Var[u_eps(1/2)]/eps matches the corrector variance within
/// 10% for both families at eps = 1/100.
fn criterion_2() -> Result<String, String> {
    let f = SourceSpec::unit_bump();
    let eps = 0.01;
    let n = 20_000usize;
    let mut msg = Vec::new();
    for (tag, model, seed) in [
        ("parameterized", mild_model(), 21_u64),
        ("convolved", convolved_unit(), 22_u64),
    ] {
        let spec = CorrectorSpec::new(model.clone(), f.clone());
        let c_c = corrector_variance(&spec, 0.5).map_err(|e| e.to_string())?;
        let plan = FineSolver::point(&model, &f, 0.5, eps).map_err(|e| e.to_string())?;
        let draws: Vec<f64> = (0..n)
            .map(|i| {
                let real = model
                    .sample_fine(eps, Substream::new(seed, i as u64))
                    .map_err(|e| e.to_string())?;
                plan.value(&real).map_err(|e| e.to_string())
            })
            .collect::<Result<_, _>>()?;
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let ratio = var / eps / c_c;
        if (ratio - 1.0).abs() > 0.10 {
            return Err(format!(
                "{tag}: Var/eps = {:.4e} vs corrector variance {c_c:.4e} (ratio {ratio:.3})",
                var / eps
            ));
        }
        msg.push(format!("{tag} ratio {ratio:.3}"));
    }
    Ok(format!("Var/eps within 10% of the corrector variance ({})", msg.join(", ")))
}

/// Criterion 3: KS distance between standardized draws and the Gaussian
/// corrector law below 0.03.
fn criterion_3() -> Result<String, String> {
    let model = convolved_unit();
    let f = SourceSpec::unit_bump();
    let eps = 0.01;
    let n = 10_000usize;
    let hom = Homogenized::new(&model, &f).map_err(|e| e.to_string())?;
    let u0 = hom.solve(0.5).map_err(|e| e.to_string())?;
    let spec = CorrectorSpec::new(model.clone(), f.clone());
    let c_c = corrector_variance(&spec, 0.5).map_err(|e| e.to_string())?;
    let plan = FineSolver::point(&model, &f, 0.5, eps).map_err(|e| e.to_string())?;
    let mut draws: Vec<f64> = (0..n)
        .map(|i| {
            let real = model
                .sample_fine(eps, Substream::new(33, i as u64))
                .map_err(|e| e.to_string())?;
            Ok((plan.value(&real).map_err(|e| e.to_string())? - u0) / eps.sqrt())
        })
        .collect::<Result<_, String>>()?;
    draws.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
    let mean = draws.iter().sum::<f64>() / n as f64;
    let normal = Normal::new(0.0, c_c.sqrt()).map_err(|e| e.to_string())?;
    let shifted = Normal::new(mean, c_c.sqrt()).map_err(|e| e.to_string())?;
    let (mut d, mut d_shifted) = (0.0f64, 0.0f64);
    for (i, &v) in draws.iter().enumerate() {
        let (lo, hi) = (i as f64 / n as f64, (i + 1) as f64 / n as f64);
        let c = normal.cdf(v);
        d = d.max(c - lo).max(hi - c);
        let cs = shifted.cdf(v);
        d_shifted = d_shifted.max(cs - lo).max(hi - cs);
    }
    if d < 0.03 {
        Ok(format!("KS distance {d:.4} < 0.03 on {n} standardized draws"))
    } else {
        Err(format!(
            "KS distance {d:.4} >= 0.03; standardized mean sits {:.3} corrector widths off center \
             (the exact solution carries an O(eps) mean offset of about -0.046 eps), and with that \
             shift removed the distance drops to {d_shifted:.4}, so the Gaussian limit itself is \
             intact but this cell width is too coarse for the 0.03 gate",
            mean / c_c.sqrt()
        ))
    }
}

/// Criterion 4: convergence of the pre-limit scaled CGF to its limit for
/// width-one-kernel convolved media.
///
/// At the stated multiplier (0, 0, 0, 0.2) the coupling integrand is
/// constant over every cell, so pre-limit and limit coincide identically
/// and the gap is zero at each eps; the quartering-band part of the check
/// is then exercised at (0, 0, 0.2, 0) with the evaluation point at 0.45,
/// where the partially covered boundary cell produces a genuine gap.
fn criterion_4() -> Result<String, String> {
    let model = convolved_unit();
    let f = SourceSpec::unit_bump();
    let epsilons = [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];

    let cf = CramerFunctional::new(&model, &f, 0.5, FunctionalKind::Full4D)
        .map_err(|e| e.to_string())?;
    let lam = [0.0, 0.0, 0.0, 0.2];
    let limit = cf.eval_full(lam);
    for &eps in &epsilons {
        let gap = (cf.prelimit_full(eps, lam).map_err(|e| e.to_string())? - limit).abs();
        if gap > 1e-12 {
            return Err(format!("constant-coupling gap {gap:.3e} at eps {eps} is not zero"));
        }
    }

    let cf2 = CramerFunctional::new(&model, &f, 0.45, FunctionalKind::Full4D)
        .map_err(|e| e.to_string())?;
    let lam2 = [0.0, 0.0, 0.2, 0.0];
    let limit2 = cf2.eval_full(lam2);
    let gaps: Vec<f64> = epsilons
        .iter()
        .map(|&eps| {
            Ok((cf2.prelimit_full(eps, lam2).map_err(|e: twoscale::ldp::LdpError| e.to_string())?
                - limit2)
                .abs())
        })
        .collect::<Result<_, String>>()?;
    let combined = gaps[0] / gaps[2];
    if (3.5..=4.5).contains(&combined) {
        Ok(format!(
            "constant coupling exactly tight (gap <= 1e-12), boundary-cell gap shrinks {combined:.2}x from eps 1/32 to 1/128"
        ))
    } else {
        Err(format!(
            "combined shrink factor {combined:.2} outside [3.5, 4.5]; gaps {gaps:?}"
        ))
    }
}

/// Criterion 5: rate-function anchors, convexity and a dense brute-force
/// Legendre transform.
fn criterion_5() -> Result<String, String> {
    let model = convolved_unit();
    let f = SourceSpec::unit_bump();
    let cf = CramerFunctional::new(&model, &f, 0.5, FunctionalKind::Approx1D)
        .map_err(|e| e.to_string())?;
    let u0 = cf.u0();

    let at_mean = legendre_1d(|l| cf.eval_approx(l), u0);
    if at_mean.rate >= 1e-8 {
        return Err(format!("1D rate at the mean is {:.3e}", at_mean.rate));
    }
    let cf4 = CramerFunctional::new(&model, &f, 0.5, FunctionalKind::Full4D)
        .map_err(|e| e.to_string())?;
    let full0 = rate_full(&cf4, u0).map_err(|e| e.to_string())?;
    if full0.rate >= 1e-6 {
        return Err(format!("contracted rate at the mean is {:.3e}", full0.rate));
    }

    // convexity and one-sided monotonicity on a 50-level grid
    let levels: Vec<f64> = (0..50)
        .map(|k| u0 * (0.5 + 2.5 * k as f64 / 49.0))
        .collect();
    let rates: Vec<f64> = levels
        .iter()
        .map(|&ell| legendre_1d(|l| cf.eval_approx(l), ell).rate)
        .collect();
    for w in rates.windows(3) {
        if w[0] + w[2] - 2.0 * w[1] < -1e-9 {
            return Err(format!("rate grid not convex near {w:?}"));
        }
    }
    for (w, lw) in rates.windows(2).zip(levels.windows(2)) {
        if lw[0] >= u0 && w[1] < w[0] - 1e-10 {
            return Err("rate not monotone above the mean".into());
        }
        if lw[1] <= u0 && w[1] > w[0] + 1e-10 {
            return Err("rate not monotone below the mean".into());
        }
    }

    // shared 1e5-point multiplier grid against the 1D transform
    let (_, hi) = cf.domain_approx();
    let top = hi - 1e-9 * (1.0 + hi.abs());
    let m = 100_000usize;
    let grid: Vec<(f64, f64)> = (0..m)
        .map(|i| {
            let l = -200.0 + (top + 200.0) * i as f64 / (m - 1) as f64;
            (l, cf.eval_approx(l))
        })
        .collect();
    for k in 0..10 {
        let ell = u0 * (0.6 + 2.4 * k as f64 / 9.0);
        let brute = grid
            .iter()
            .map(|&(l, v)| l * ell - v)
            .fold(f64::MIN, f64::max);
        let solved = legendre_1d(|l| cf.eval_approx(l), ell);
        if (solved.rate - brute).abs() > 1e-6 {
            return Err(format!(
                "transform {:.8e} vs brute force {brute:.8e} at level {ell:.5}",
                solved.rate
            ));
        }
    }
    Ok("mean anchors below 1e-8 / 1e-6, 50-level grid convex and monotone, dense grid matches to 1e-6 at 10 levels".into())
}

struct LdpMatchRun {
    u0: f64,
    c_c: f64,
    /// Per level: (level, measured -E, 1D rate, tail ESS).
    rows: Vec<(f64, f64, f64, f64)>,
}

/// Shared importance-sampled run for criteria 6 and 7: eight levels from
/// the moderate-deviation edge up to four times the mean, one million
/// samples per level with a pilot-chosen exponential tilt.
fn run_ldp_match() -> Result<LdpMatchRun, String> {
    let model = convolved_unit();
    let f = SourceSpec::unit_bump();
    let eps = 0.01;
    let x = 0.5;
    let hom = Homogenized::new(&model, &f).map_err(|e| e.to_string())?;
    let u0 = hom.solve(x).map_err(|e| e.to_string())?;
    let spec = CorrectorSpec::new(model.clone(), f.clone());
    let c_c = corrector_variance(&spec, x).map_err(|e| e.to_string())?;
    let cf = CramerFunctional::new(&model, &f, x, FunctionalKind::Approx1D)
        .map_err(|e| e.to_string())?;

    let start = u0 + 3.0 * (eps * c_c).sqrt();
    let stop = 4.0 * u0;
    let n_levels = 8usize;
    let n = 1_000_000usize;
    let mut rows = Vec::new();
    for k in 0..n_levels {
        let ell = start + (stop - start) * k as f64 / (n_levels - 1) as f64;
        let seed = 1000 + k as u64;
        let pilot = pilot_tilt(&model, &f, eps, x, 2_000, ell, seed).map_err(|e| e.to_string())?;
        let Tilt::Exponential(eta) = pilot.tilt else {
            return Err("convolved pilot returned a non-exponential tilt".into());
        };
        let run = run_convolved_is(&model, &f, eps, x, n, eta, seed).map_err(|e| e.to_string())?;
        let est = empirical_rate(&run, &[ell]).map_err(|e| e.to_string())?;
        let itilde = legendre_1d(|l| cf.eval_approx(l), ell).rate;
        rows.push((ell, -est.values[0], itilde, est.ess_per_level[0]));
    }
    Ok(LdpMatchRun { u0, c_c, rows })
}

/// Criterion 6: measured -E within 20% of the 1D rate on every ESS-valid
/// level of the shared run.
fn criterion_6(run: &LdpMatchRun) -> Result<String, String> {
    let mut worst: f64 = 0.0;
    let mut n_valid = 0;
    let mut table = Vec::new();
    for &(ell, minus_e, itilde, ess) in &run.rows {
        if ess < 100.0 {
            table.push(format!("{ell:.4}: ESS {ess:.0} < 100, skipped"));
            continue;
        }
        n_valid += 1;
        let rel = (minus_e - itilde) / itilde;
        worst = worst.max(rel.abs());
        table.push(format!(
            "{ell:.4}: -E {minus_e:.4}, rate {itilde:.4}, rel {:+.1}%, ESS {ess:.0}",
            100.0 * rel
        ));
    }
    let detail = table.join("; ");
    if n_valid == 0 {
        return Err(format!("no level had ESS >= 100 ({detail})"));
    }
    if worst <= 0.20 {
        Ok(format!(
            "all {n_valid} ESS-valid levels within 20% (worst {:.1}%): {detail}",
            100.0 * worst
        ))
    } else {
        Err(format!(
            "worst relative gap {:.1}% exceeds 20%: {detail}",
            100.0 * worst
        ))
    }
}

/// Criterion 7: the Gaussian corrector rate misses the measured exponent
/// by more than 30% at the largest ESS-valid level.
fn criterion_7(run: &LdpMatchRun) -> Result<String, String> {
    let Some(&(ell, minus_e, _, _)) = run
        .rows
        .iter()
        .rev()
        .find(|&&(_, _, _, ess)| ess >= 100.0)
    else {
        return Err("no level had ESS >= 100".into());
    };
    let g = gaussian_rate(run.u0, run.c_c, ell).map_err(|e| e.to_string())?;
    let rel = (g - minus_e).abs() / minus_e;
    if rel > 0.30 {
        Ok(format!(
            "at level {ell:.4} the Gaussian rate {g:.3} differs from measured {minus_e:.3} by {:.0}%",
            100.0 * rel
        ))
    } else {
        Err(format!(
            "Gaussian rate {g:.3} vs measured {minus_e:.3} differ only {:.0}%",
            100.0 * rel
        ))
    }
}

/// Criterion 8: steepness verdicts with the expected mechanism per family.
fn criterion_8() -> Result<String, String> {
    let f = SourceSpec::unit_bump();
    let par = CramerFunctional::new(&mild_model(), &f, 0.5, FunctionalKind::Full4D)
        .map_err(|e| e.to_string())?;
    let rp = steepness_check(&par);
    if !(rp.steep && rp.finite_everywhere) {
        return Err(format!(
            "bounded-noise family: steep {}, finite everywhere {}",
            rp.steep, rp.finite_everywhere
        ));
    }
    let conv = CramerFunctional::new(&convolved_unit(), &f, 0.5, FunctionalKind::Full4D)
        .map_err(|e| e.to_string())?;
    let rc = steepness_check(&conv);
    if !(rc.steep
        && !rc.finite_everywhere
        && rc.smooth_forcing_bounded_domain
        && rc.comparison_integral_diverges)
    {
        return Err(format!(
            "chi-square family: steep {}, bounded domain {}, comparison integral diverges {}",
            rc.steep, rc.smooth_forcing_bounded_domain, rc.comparison_integral_diverges
        ));
    }
    Ok("bounded noise steep by finiteness, chi-square steep by boundary divergence".into())
}

/// Linearized pointwise value: the mean plus the fluctuation kernel paired
/// with the inverse-coefficient fluctuation, the exact quantity the
/// Chernoff bound controls.
struct LinearizedSampler {
    u0: f64,
    /// One entry per quadrature node: weight times kernel value.
    node_wg: Vec<f64>,
    node_cell: Vec<usize>,
    kind: LinKind,
}

enum LinKind {
    /// Per-node profile value and mean inverse, noise amplitude.
    Parameterized { node_alpha: Vec<f64>, node_mean: Vec<f64>, nu_b: f64 },
    /// Per-cell mean of the inverse coefficient.
    Convolved { gamma_mean: f64 },
}

impl LinearizedSampler {
    fn build(model: &MediaModel, f: &SourceSpec, x: f64, eps: f64) -> Result<Self, String> {
        let hom = Homogenized::new(model, f).map_err(|e| e.to_string())?;
        let u0 = hom.solve(x).map_err(|e| e.to_string())?;
        let kern = hom.kernel(x).map_err(|e| e.to_string())?;
        let cells = media::cell_count(eps).map_err(|e| e.to_string())?;
        let mut cuts: Vec<f64> = (0..=cells).map(|k| k as f64 * eps).collect();
        cuts.extend_from_slice(f.breakpoints());
        cuts.push(x);
        cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite cuts"));
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let gauss = twoscale::quad::GaussLegendre::new(8).map_err(|e| e.to_string())?;
        let mut node_wg = Vec::new();
        let mut node_cell = Vec::new();
        let mut node_s = Vec::new();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (&t, &wt) in gauss.nodes().iter().zip(gauss.weights()) {
                let s = mid + half * t;
                node_wg.push(wt * half * kern.eval(s));
                node_cell.push(((s / eps) as usize).min(cells - 1));
                node_s.push(s);
            }
        }
        let kind = match model {
            MediaModel::Parameterized(p) => {
                let node_alpha: Vec<f64> = node_s.iter().map(|&s| p.coarse_field(s)).collect();
                let node_mean: Vec<f64> = node_alpha
                    .iter()
                    .map(|&a| media::v_alpha_mean(a, p.nu_b))
                    .collect();
                LinKind::Parameterized {
                    node_alpha,
                    node_mean,
                    nu_b: p.nu_b,
                }
            }
            MediaModel::Convolved(c) => LinKind::Convolved {
                gamma_mean: c.xi as f64 * c.h_l1(),
            },
        };
        Ok(Self {
            u0,
            node_wg,
            node_cell,
            kind,
        })
    }

    fn value(&self, real: &FieldRealization) -> f64 {
        let mut acc = 0.0;
        match &self.kind {
            LinKind::Parameterized {
                node_alpha,
                node_mean,
                nu_b,
            } => {
                for (i, &wg) in self.node_wg.iter().enumerate() {
                    let theta = real.inv_cells[self.node_cell[i]];
                    acc += wg * (1.0 / (node_alpha[i] + nu_b * theta) - node_mean[i]);
                }
            }
            LinKind::Convolved { gamma_mean } => {
                for (i, &wg) in self.node_wg.iter().enumerate() {
                    acc += wg * (real.inv_cells[self.node_cell[i]] - gamma_mean);
                }
            }
        }
        self.u0 + acc
    }
}

/// Confirm the linearized sampler tracks the exact solver on a gentle
/// instance at a fine cell width, where the linearization error is
/// negligible and any wiring mistake (sign, kernel, cell lookup) would
/// show up as decorrelation or a regression slope away from one.
fn check_linearization_wiring(
    tag: &str,
    model: &MediaModel,
    f: &SourceSpec,
    x: f64,
) -> Result<(), String> {
    let eps = 1.0 / 1024.0;
    let lin = LinearizedSampler::build(model, f, x, eps)?;
    let n = 400usize;
    let (mut a, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let real = model
            .sample_fine(eps, Substream::new(8900, i as u64))
            .map_err(|e| e.to_string())?;
        a.push(lin.value(&real));
        b.push(solve_point(model, &real, f, x).map_err(|e| e.to_string())?);
    }
    let (ma, mb) = (
        a.iter().sum::<f64>() / n as f64,
        b.iter().sum::<f64>() / n as f64,
    );
    let cov: f64 = a.iter().zip(&b).map(|(&u, &v)| (u - ma) * (v - mb)).sum();
    let va: f64 = a.iter().map(|&u| (u - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|&v| (v - mb).powi(2)).sum();
    let corr = cov / (va * vb).sqrt();
    let slope = cov / va;
    let se = (vb / (n as f64 - 1.0)).sqrt() / (n as f64).sqrt();
    // a sign or cell-indexing mistake destroys the correlation, a dropped
    // factor moves the regression slope, and a broken constant term moves
    // the mean; the genuine quadratic remainder at this cell width does none
    if corr < 0.99 || !(0.9..=1.1).contains(&slope) || (ma - mb).abs() > 5.0 * se + 1e-4 {
        return Err(format!(
            "{tag} linearized sampler disagrees with the exact solver: corr {corr:.4}, \
             slope {slope:.3}, mean gap {:.2e}",
            ma - mb
        ));
    }
    Ok(())
}

/// Criterion 9: the Chernoff bound dominates the measured scaled log tail
/// of the linearized value on twenty random (eps, level) pairs.
fn criterion_9() -> Result<String, String> {
    let f = SourceSpec::unit_bump();
    let x = 0.5;
    check_linearization_wiring("bounded-noise", &mild_model(), &f, x)?;
    check_linearization_wiring("chi-square", &convolved_unit(), &f, x)?;
    let n = 30_000usize;
    let eps_choices = [1.0 / 16.0, 1.0 / 24.0, 1.0 / 32.0, 1.0 / 48.0, 1.0 / 64.0];
    let mut rng = StdRng::seed_from_u64(4242);
    let mut min_margin = f64::INFINITY;
    for pair in 0..20u64 {
        let model = if pair < 10 {
            let mut xi = [0.0f64; 8];
            for v in &mut xi {
                *v = rng.random_range(-1.0..1.0);
            }
            MediaModel::Parameterized(ParameterizedCoarse::new(xi))
        } else {
            let xi = rng.random_range(1..4u64);
            let h_l1 = rng.random_range(0.5..2.0);
            MediaModel::Convolved(ConvolvedCoarse::boxcar(xi, 1, h_l1).map_err(|e| e.to_string())?)
        };
        let eps = eps_choices[rng.random_range(0..eps_choices.len())];
        let lin = LinearizedSampler::build(&model, &f, x, eps)?;
        let mut draws: Vec<f64> = (0..n)
            .map(|i| {
                let real = model
                    .sample_fine(eps, Substream::new(9000 + pair, i as u64))
                    .map_err(|e| e.to_string())?;
                Ok(lin.value(&real))
            })
            .collect::<Result<_, String>>()?;
        draws.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
        let q = (rng.random_range(0.0..1.0f64) * (0.05f64 / 0.002).ln()).exp() * 0.002;
        let hits = ((q * n as f64) as usize).max(20);
        let ell = draws[n - hits];
        let count = draws.iter().filter(|&&v| v >= ell).count();
        let measured = eps * (count as f64 / n as f64).ln();
        let bound = chernoff_bound(&model, &f, x, eps, ell).map_err(|e| e.to_string())?;
        if bound.status == RateStatus::Failed {
            return Err(format!("bound solver failed on pair {pair}"));
        }
        if bound.log_bound < measured {
            return Err(format!(
                "pair {pair}: bound {:.5} below measured {measured:.5} (eps {eps:.4}, level {ell:.5}, {count} hits)",
                bound.log_bound
            ));
        }
        min_margin = min_margin.min(bound.log_bound - measured);
    }
    Ok(format!(
        "bound above the measured scaled log tail on all 20 pairs (smallest margin {min_margin:.4})"
    ))
}

fn guard<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| p.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "opaque panic".into());
        Err(format!("panicked: {msg}"))
    })
}

fn main() {
    // panics are reported through the verdict lines; keep stderr clean
    std::panic::set_hook(Box::new(|_| {}));
    let mut failures = 0usize;
    let mut report = |n: usize, started: Instant, r: Result<String, String>| {
        let dt = started.elapsed().as_secs_f64();
        match r {
            Ok(m) => println!("criterion {n}: PASS — {m} ({dt:.1} s)"),
            Err(m) => {
                failures += 1;
                println!("criterion {n}: FAIL — {m} ({dt:.1} s)");
            }
        }
    };

    let t = Instant::now();
    report(1, t, guard(criterion_1));
    let t = Instant::now();
    report(2, t, guard(criterion_2));
    let t = Instant::now();
    report(3, t, guard(criterion_3));
    let t = Instant::now();
    report(4, t, guard(criterion_4));
    let t = Instant::now();
    report(5, t, guard(criterion_5));

    let t = Instant::now();
    match guard(run_ldp_match) {
        Ok(data) => {
            report(6, t, criterion_6(&data));
            let t7 = Instant::now();
            report(7, t7, criterion_7(&data));
        }
        Err(m) => {
            report(6, t, Err(m.clone()));
            report(7, t, Err(m));
        }
    }

    let t = Instant::now();
    report(8, t, guard(criterion_8));
    let t = Instant::now();
    report(9, t, guard(criterion_9));

    if failures > 0 {
        eprintln!("acceptance gate: {failures} criterion(s) failed");
        std::process::exit(1);
    }
    println!("acceptance gate: all criteria passed");
}
