//! Config-driven experiment orchestration.
//!
//! A [`RunConfig`] names one experiment; [`execute`] runs it inside a rayon
//! pool of `threads` workers and returns rows in a fixed order, so results do
//! not depend on the thread count. [`run`] additionally writes
//! `<out_path>.csv` and `<out_path>.json`.

pub mod config;
pub mod output;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

pub use config::{parse_config, Experiment, RunConfig, CONFIG_KEYS};
pub use output::{
    parse_summary, to_csv, to_json, Metric, ResultRow, RunSummary, CSV_HEADER, VERSION,
};

use crate::diagnostics::{
    cone_escape_fraction, estimate_critical_measure, strong_coupling_system_min,
    transversality_residual, uniformity_check,
};
use crate::error::{Error, Result};
use crate::grassmann::SpectralNorm;
use crate::grassmann::{
    d_geodesic, d_hausdorff, haar_orthogonal, haar_random_subspace, principal_angles,
};
use crate::lyapunov::{qr_spectrum, LyapunovReport, RunOptions};
use crate::noise::{check_cone_condition, check_nd_spread, NoiseDescriptor, NoiseModel};
use crate::stats::linear_fit;
use crate::stream::{derive_stream, derive_substream, resolve_seed};
use crate::torus::{MapFamily, SineKick, SmoothMap, StrongCouplingPsi, TorusPoint};

/// Exit status for a run that failed with `err`: 2 for invariant or numeric
/// breakdowns detected mid-run, 1 for everything else.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Invariant(_) | Error::Numeric { .. } => 2,
        _ => 1,
    }
}

/// Rows and summary of one executed config.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    /// The config as run, with the realized seed.
    pub config: RunConfig,
    pub rows: Vec<ResultRow>,
    pub summary: BTreeMap<String, f64>,
}

impl RunOutput {
    pub fn to_summary(&self) -> RunSummary {
        RunSummary {
            version: VERSION.into(),
            experiment: self
                .rows
                .first()
                .map_or_else(String::new, |r| r.experiment.clone()),
            config: self.config.clone(),
            rows: self.rows.clone(),
            summary: self.summary.clone(),
        }
    }

    /// Metric values of every row, in order; the reproducibility fingerprint.
    pub fn metric_values(&self) -> Vec<(String, f64)> {
        self.rows
            .iter()
            .flat_map(|r| {
                r.metrics
                    .iter()
                    .map(move |m| (format!("{}:{}", r.label, m.name), m.value))
            })
            .collect()
    }
}

struct Ctx {
    cfg: RunConfig,
    seed: u64,
    family: MapFamily,
    noise: NoiseModel,
    noise_echo: String,
}

struct Partial {
    rows: Vec<(String, Vec<Metric>)>,
    summary: BTreeMap<String, f64>,
}

/// Run the configured experiment in a pool of `cfg.threads` workers.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let experiment = cfg.experiment()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} threads: {e}", cfg.threads)))?;
    pool.install(|| execute_in_pool(cfg, experiment))
}

fn execute_in_pool(cfg: &RunConfig, experiment: Experiment) -> Result<RunOutput> {
    let start = Instant::now();
    let seed = resolve_seed(cfg.seed);
    let family = cfg.build_family()?;
    let noise = cfg.noise.build(family.n())?;
    let mut echo = cfg.noise.clone();
    if let (NoiseDescriptor::Rotational { c, .. }, NoiseModel::Rotational(r)) = (&mut echo, &noise)
    {
        *c = Some(r.c);
    }
    let noise_echo = serde_json::to_string(&echo)?;
    let mut realized = cfg.clone();
    realized.seed = seed;
    realized.experiment = Some(experiment);
    realized.noise = echo;
    let ctx = Ctx {
        cfg: realized,
        seed,
        family,
        noise,
        noise_echo,
    };
    let partial = match experiment {
        Experiment::Spectrum => spectrum(&ctx)?,
        Experiment::Sweep => sweep(&ctx)?,
        Experiment::F2 => f2(&ctx)?,
        Experiment::ConeEscape => cone_escape(&ctx)?,
        Experiment::NoiseCheck => noise_check(&ctx)?,
        Experiment::Transversality => transversality(&ctx)?,
        Experiment::MetricCheck => metric_check(&ctx)?,
        Experiment::Uniformity => uniformity(&ctx)?,
    };
    let wall = start.elapsed().as_secs_f64();
    let family_echo = serde_json::to_string(&ctx.cfg.family)?;
    let rows = partial
        .rows
        .into_iter()
        .enumerate()
        .map(|(i, (label, metrics))| ResultRow {
            experiment: experiment.name().into(),
            row: i,
            label,
            family: family_echo.clone(),
            noise: ctx.noise_echo.clone(),
            n_steps: ctx.cfg.n_steps,
            trials: ctx.cfg.trials,
            beta: ctx.cfg.beta,
            seed,
            burn_in: ctx.cfg.burn_in,
            threads: ctx.cfg.threads,
            metrics,
            wall_time_s: wall,
            version: VERSION.into(),
        })
        .collect();
    Ok(RunOutput {
        config: ctx.cfg,
        rows,
        summary: partial.summary,
    })
}

/// Execute and write `<prefix>.csv` / `<prefix>.json`. `out` overrides the
/// config's `out_path`. On failure no output files are left behind.
pub fn run(cfg: &RunConfig, out: Option<&Path>) -> Result<(PathBuf, PathBuf)> {
    let prefix: PathBuf = match (out, &cfg.out_path) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => PathBuf::from(p),
        (None, None) => PathBuf::from(format!("torus-rds-{}", cfg.experiment()?.name())),
    };
    let result = execute(cfg).and_then(|o| {
        let csv = to_csv(&o.rows)?;
        let json = to_json(&o.to_summary())?;
        output::write_outputs(&prefix, &csv, &json)
    });
    if result.is_err() {
        output::remove_outputs(&prefix);
    }
    result
}

fn spectrum_trials(ctx: &Ctx, family: &MapFamily) -> Result<Vec<LyapunovReport>> {
    let cfg = &ctx.cfg;
    let reports: Vec<Result<LyapunovReport>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let z0 = TorusPoint::uniform(
                &mut derive_substream(ctx.seed, t, "initial-point"),
                family.n(),
            );
            let opts = RunOptions {
                burn_in: cfg.burn_in,
                trial: t,
            };
            qr_spectrum(&z0, family, &ctx.noise, cfg.n_steps, ctx.seed, &opts)
        })
        .collect();
    reports.into_iter().collect()
}

fn spectrum(ctx: &Ctx) -> Result<Partial> {
    let reports = spectrum_trials(ctx, &ctx.family)?;
    let k = 2 * ctx.family.n();
    let mut rows = Vec::new();
    for r in &reports {
        let mut m: Vec<Metric> = (0..k)
            .map(|i| Metric::new(format!("lambda_{}", i + 1), r.exponents[i], r.stderr[i]))
            .collect();
        m.push(Metric::exact("sum", r.sum()));
        m.push(Metric::exact("cone_fraction", r.cone_fraction));
        rows.push((format!("trial={}", r.trial), m));
    }
    let mut summary = BTreeMap::new();
    for i in 0..k {
        let vals: Vec<f64> = reports.iter().map(|r| r.exponents[i]).collect();
        summary.insert(
            format!("mean_lambda_{}", i + 1),
            vals.iter().sum::<f64>() / vals.len() as f64,
        );
        summary.insert(
            format!("min_lambda_{}", i + 1),
            vals.iter().copied().fold(f64::INFINITY, f64::min),
        );
        summary.insert(
            format!("max_lambda_{}", i + 1),
            vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        );
    }
    summary.insert(
        "max_abs_sum".into(),
        reports.iter().map(|r| r.sum().abs()).fold(0.0, f64::max),
    );
    Ok(Partial { rows, summary })
}

fn mean_and_error(vals: &[f64], fallback: f64) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, fallback);
    }
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn sweep(ctx: &Ctx) -> Result<Partial> {
    let k = 2 * ctx.family.n();
    let mut rows = Vec::new();
    let mut leading = Vec::new();
    for l in ctx.cfg.l_values() {
        let fam = ctx.family.with_l(l)?;
        let reports = spectrum_trials(ctx, &fam)?;
        let mut m = vec![Metric::exact("L", l)];
        for i in 0..k {
            let vals: Vec<f64> = reports.iter().map(|r| r.exponents[i]).collect();
            let (mean, err) = mean_and_error(&vals, reports[0].stderr[i]);
            m.push(Metric::new(format!("lambda_{}", i + 1), mean, err));
            if i == 0 {
                leading.push(mean);
            }
        }
        rows.push((format!("L={l:e}"), m));
    }
    let monotone = leading.windows(2).all(|w| w[1] > w[0]);
    let mut summary = BTreeMap::new();
    summary.insert("monotone_lambda_1".into(), monotone as u8 as f64);
    Ok(Partial { rows, summary })
}

fn f2(ctx: &Ctx) -> Result<Partial> {
    let mut rows = Vec::new();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (i, l) in ctx.cfg.l_values().into_iter().enumerate() {
        let fam = ctx.family.with_l(l)?;
        let est = estimate_critical_measure(
            &fam,
            ctx.cfg.beta,
            ctx.cfg.samples,
            ctx.seed.wrapping_add(i as u64),
        )?;
        if est.value > 0.0 {
            xs.push(l.ln());
            ys.push(est.value.ln());
        }
        rows.push((
            format!("L={l:e}"),
            vec![
                Metric::exact("L", l),
                Metric::new("measure", est.value, est.stderr),
            ],
        ));
    }
    let mut summary = BTreeMap::new();
    if xs.len() >= 2 {
        let fit = linear_fit(&xs, &ys);
        summary.insert("slope".into(), fit.slope);
        summary.insert("intercept".into(), fit.intercept);
        if fit.slope_stderr.is_finite() {
            summary.insert("slope_stderr".into(), fit.slope_stderr);
        }
    }
    summary.insert("slope_bound".into(), -(1.0 - 3.0 * ctx.cfg.beta) + 0.15);
    Ok(Partial { rows, summary })
}

fn cone_escape(ctx: &Ctx) -> Result<Partial> {
    let rep = cone_escape_fraction(
        &ctx.family,
        &ctx.noise,
        ctx.cfg.beta,
        ctx.cfg.n_steps as usize,
        ctx.cfg.trials,
        ctx.seed,
    )?;
    let rows = vec![(
        format!("n={}", ctx.cfg.n_steps),
        vec![
            Metric::new("escape_fraction", rep.estimate.value, rep.estimate.stderr),
            Metric::exact("bound", rep.bound),
            Metric::exact("acceptance_rate", rep.acceptance_rate),
        ],
    )];
    let mut summary = BTreeMap::new();
    summary.insert("ratio_to_bound".into(), rep.estimate.value / rep.bound);
    Ok(Partial { rows, summary })
}

fn noise_check(ctx: &Ctx) -> Result<Partial> {
    let n = ctx.family.n();
    let mut rng = derive_stream(ctx.seed, 0);
    let cone = check_cone_condition(&ctx.noise, n, ctx.cfg.trials as usize, &mut rng)?;
    let z = TorusPoint::uniform(&mut derive_substream(ctx.seed, 0, "nd-point"), n);
    let e = haar_random_subspace(&mut derive_substream(ctx.seed, 0, "nd-plane"), 2 * n, n);
    let nd = check_nd_spread(
        &ctx.noise,
        &z,
        &e,
        ctx.cfg.samples as usize,
        ctx.cfg.bins,
        &mut derive_stream(ctx.seed, 1),
    )?;
    let c = match &ctx.noise {
        NoiseModel::Rotational(r) => r.c,
        NoiseModel::Shift { epsilon } => *epsilon,
        NoiseModel::None => 0.0,
    };
    let mut rows = vec![(
        "cone-condition".to_string(),
        vec![
            Metric::exact("c", c),
            Metric::exact("max_output_slope", cone.max_output_slope),
            Metric::exact("max_norm", cone.max_norm),
            Metric::exact("max_inverse_norm", cone.max_inverse_norm),
            Metric::exact("max_det_deviation", cone.max_det_deviation),
            Metric::exact("passed", cone.passed as u8 as f64),
        ],
    )];
    rows.push((
        "nd-spread".to_string(),
        vec![
            Metric::exact("min_occupancy", nd.min_occupancy as f64),
            Metric::exact("max_occupancy", nd.max_occupancy as f64),
            Metric::exact(
                "degenerate_point_marginals",
                nd.point_marginals.iter().filter(|m| m.degenerate).count() as f64,
            ),
            Metric::exact(
                "degenerate_subspace_marginals",
                nd.subspace_marginals
                    .iter()
                    .filter(|m| m.degenerate)
                    .count() as f64,
            ),
        ],
    ));
    if let NoiseModel::Rotational(r) = &ctx.noise {
        let covers = r.is_faithful()
            && r.covering_holds(&mut derive_substream(ctx.seed, 0, "covering"), 10_000);
        rows.push((
            "covering".into(),
            vec![Metric::exact("covering_holds", covers as u8 as f64)],
        ));
    }
    let mut summary = BTreeMap::new();
    summary.insert("cone_condition_passed".into(), cone.passed as u8 as f64);
    Ok(Partial { rows, summary })
}

fn transversality(ctx: &Ctx) -> Result<Partial> {
    let psi: std::sync::Arc<dyn SmoothMap> = match &ctx.family {
        MapFamily::StrongCoupling2 { .. } => std::sync::Arc::new(StrongCouplingPsi),
        MapFamily::GenericLPsiPhi { psi, .. } => psi.clone(),
        MapFamily::CoupledStandard { n, .. } => std::sync::Arc::new(SineKick { n: *n }),
        MapFamily::LinearTest { .. } => {
            return Err(Error::Unsupported(
                "transversality needs a kick map psi".into(),
            ))
        }
    };
    let rep = transversality_residual(psi.as_ref(), ctx.cfg.grid, ctx.cfg.refine_iters)?;
    let mut rows = vec![(
        format!("psi={}", psi.name()),
        vec![
            Metric::exact("min_residual", rep.min_residual),
            Metric::exact("det_term", rep.det_term),
            Metric::exact("grad_term", rep.grad_term),
        ]
        .into_iter()
        .chain(
            rep.argmin
                .iter()
                .enumerate()
                .map(|(i, x)| Metric::exact(format!("argmin_{}", i + 1), *x)),
        )
        .collect(),
    )];
    let mut summary = BTreeMap::new();
    summary.insert("min_residual".into(), rep.min_residual);
    if matches!(ctx.family, MapFamily::StrongCoupling2 { .. }) {
        let (m, at) = strong_coupling_system_min(ctx.cfg.system_grid);
        rows.push((
            "three-equation-system".into(),
            vec![
                Metric::exact("min_max_abs", m),
                Metric::exact("argmin_1", at[0]),
                Metric::exact("argmin_2", at[1]),
            ],
        ));
        summary.insert("system_min_max_abs".into(), m);
    }
    Ok(Partial { rows, summary })
}

/// Worst-case deviations of the Grassmannian metric identities over Haar pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricStats {
    /// Pairs with `(2/π) d_geo > d_H`.
    pub lower_violations: u64,
    /// Pairs with `(2/π) ψ_max > d_H`.
    pub angle_lower_violations: u64,
    pub upper_violations: u64,
    pub max_projector_error: f64,
    pub max_basis_error: f64,
}

/// Check `(2/π) d_geo ≤ d_H ≤ d_geo`, `d_H = ‖(I − Π_F)Π_E‖` and basis
/// invariance on `pairs` Haar pairs in `Gr_k(R^m)`.
pub fn metric_stats(m: usize, k: usize, pairs: u64, seed: u64) -> Result<MetricStats> {
    let per: Vec<Result<MetricStats>> = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_substream(seed, i, "metric-pairs");
            let e = haar_random_subspace(&mut rng, m, k);
            let f = haar_random_subspace(&mut rng, m, k);
            let dh = d_hausdorff(&e, &f)?;
            let dg = d_geodesic(&e, &f)?;
            let psi_max = principal_angles(&e, &f)?.largest();
            let proj =
                ((DMatrix::<f64>::identity(m, m) - f.projector()) * e.projector()).norm_spectral();
            let e2 = e.rotated_basis(&haar_orthogonal(&mut rng, k));
            let f2 = f.rotated_basis(&haar_orthogonal(&mut rng, k));
            let basis = (d_hausdorff(&e2, &f2)? - dh)
                .abs()
                .max((d_geodesic(&e2, &f2)? - dg).abs());
            Ok(MetricStats {
                lower_violations: (2.0 / std::f64::consts::PI * dg > dh + 1e-12) as u64,
                angle_lower_violations: (2.0 / std::f64::consts::PI * psi_max > dh + 1e-12) as u64,
                upper_violations: (dh > dg + 1e-12) as u64,
                max_projector_error: (dh - proj).abs(),
                max_basis_error: basis,
            })
        })
        .collect();
    let mut acc = MetricStats::default();
    for s in per {
        let s = s?;
        acc.lower_violations += s.lower_violations;
        acc.angle_lower_violations += s.angle_lower_violations;
        acc.upper_violations += s.upper_violations;
        acc.max_projector_error = acc.max_projector_error.max(s.max_projector_error);
        acc.max_basis_error = acc.max_basis_error.max(s.max_basis_error);
    }
    Ok(acc)
}

fn metric_check(ctx: &Ctx) -> Result<Partial> {
    let n = ctx.family.n();
    let s = metric_stats(2 * n, n, ctx.cfg.trials, ctx.seed)?;
    let rows = vec![(
        format!("Gr_{n}(R^{})", 2 * n),
        vec![
            Metric::exact("lower_violations", s.lower_violations as f64),
            Metric::exact("angle_lower_violations", s.angle_lower_violations as f64),
            Metric::exact("upper_violations", s.upper_violations as f64),
            Metric::exact("max_projector_error", s.max_projector_error),
            Metric::exact("max_basis_error", s.max_basis_error),
        ],
    )];
    let mut summary = BTreeMap::new();
    summary.insert(
        "passed".into(),
        (s.lower_violations == 0
            && s.upper_violations == 0
            && s.max_projector_error <= 1e-9
            && s.max_basis_error <= 1e-9) as u8 as f64,
    );
    Ok(Partial { rows, summary })
}

fn uniformity(ctx: &Ctx) -> Result<Partial> {
    let rep = uniformity_check(
        &ctx.family,
        &ctx.noise,
        ctx.cfg.n_steps as usize,
        ctx.cfg.samples as usize,
        ctx.seed,
    )?;
    let mut m: Vec<Metric> = rep
        .ks
        .iter()
        .enumerate()
        .map(|(i, d)| Metric::exact(format!("ks_{}", i + 1), *d))
        .collect();
    m.push(Metric::exact("critical", rep.critical));
    m.push(Metric::exact("max_det_deviation", rep.max_det_deviation));
    let mut summary = BTreeMap::new();
    summary.insert("accepted".into(), rep.accepted as u8 as f64);
    Ok(Partial {
        rows: vec![(format!("n={}", rep.n_steps), m)],
        summary,
    })
}
