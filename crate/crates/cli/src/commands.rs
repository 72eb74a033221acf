use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vaisman_core::leafspace::{apply_dp, ma_ratio, BasicField, LeafGrid};
use vaisman_core::models::{
    check_identities, fd_convergence_order, homothety_character, ChartPoint, VaismanModel,
};
use vaisman_core::pipeline::{
    leaf_grid_for, run_pipeline_with, CheckResult, PipelineConfig, PipelineOutput, ResidualStats,
};
use vaisman_core::solver::dp_kernel_check;

use crate::config::{Command, ModelId, RunConfig};
use crate::error::CliError;
use crate::psi::PsiSpec;
use crate::report::{write_field, ReportFile};

/// Points used for the finite-difference order and character estimates.
const SUBSAMPLE: usize = 50;

pub fn build_model(cfg: &RunConfig) -> Result<VaismanModel, CliError> {
    Ok(match cfg.model {
        ModelId::Hopf2 => VaismanModel::hopf(2, cfg.alpha)?,
        ModelId::Hopf3 => VaismanModel::hopf(3, cfg.alpha)?,
        ModelId::Nil3 => VaismanModel::nil()?,
    })
}

fn stats(values: &[f64]) -> ResidualStats {
    ResidualStats::from_values(values)
}

fn single(name: &str, value: f64, tolerance: f64) -> CheckResult {
    CheckResult::new(name, ResidualStats { max: value, mean: value }, tolerance)
}

/// Pointwise identity suite at `samples` seeded chart points.
pub fn identity_checks(cfg: &RunConfig) -> Result<Vec<CheckResult>, CliError> {
    let model = build_model(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let points: Vec<ChartPoint> = (0..cfg.samples).map(|_| model.sample_point(&mut rng)).collect();
    let mut cols: [Vec<f64>; 9] = Default::default();
    for p in &points {
        let r = check_identities(&model, p, cfg.fd_step, cfg.convention.into())?;
        let row = [
            r.lee_length,
            r.lck,
            r.structure,
            (r.kernel.kernel_dim as f64 - 2.0).abs(),
            r.kernel.max_angle(),
            (-r.semipositivity).max(0.0),
            r.contraction,
            r.parallel,
            r.killing.max(),
        ];
        for (c, v) in cols.iter_mut().zip(row) {
            c.push(v);
        }
    }
    let names = [
        "lee_length",
        "lck",
        "dc_structure",
        "kernel_dimension",
        "kernel_angle",
        "semipositivity",
        "contraction",
        "parallel_lee",
        "killing_commuting",
    ];
    let tol = cfg.tol.identity;
    let mut checks: Vec<CheckResult> = names
        .iter()
        .zip(&cols)
        .map(|(name, c)| {
            let t = if *name == "kernel_dimension" { 0.5 } else { tol };
            CheckResult::new(name, stats(c), t)
        })
        .collect();
    if let VaismanModel::Hopf(hopf) = &model {
        let sub = &points[..points.len().min(SUBSAMPLE)];
        let orders = fd_convergence_order(&model, sub, cfg.order_step)?;
        let deviations: Vec<f64> = orders.iter().map(|o| (o - 2.0).abs()).collect();
        checks.push(CheckResult::new("fd_order", stats(&deviations), cfg.tol.order));
        let chi = homothety_character(hopf, sub)?;
        let a2 = cfg.alpha * cfg.alpha;
        let dev = (chi.value - a2).abs().max(chi.spread).max(chi.proportionality);
        checks.push(single("homothety_character", dev, cfg.tol.character));
    }
    Ok(checks)
}

pub fn verify(cfg: &RunConfig) -> Result<ReportFile, CliError> {
    Ok(ReportFile::new(cfg, identity_checks(cfg)?))
}

fn grid_for(cfg: &RunConfig, model: &VaismanModel) -> Result<Arc<LeafGrid>, CliError> {
    leaf_grid_for(model, cfg.grid).map_err(|e| CliError::Usage(e.to_string()))
}

fn pipeline(cfg: &RunConfig, inits: usize, trace: bool) -> Result<(PipelineOutput, Arc<LeafGrid>), CliError> {
    let model = build_model(cfg)?;
    let grid = grid_for(cfg, &model)?;
    let spec = PsiSpec::parse(&cfg.psi)?.build(&model, &grid, cfg.lee_scale, &cfg.psi)?;
    let pcfg = PipelineConfig {
        solver: cfg.solver(),
        samples: cfg.samples,
        seed: cfg.seed,
        uniqueness_inits: inits,
        fd_step: cfg.fd_step,
        tolerances: Some(cfg.tol.pipeline()),
    };
    let out = run_pipeline_with(&spec, &grid, &pcfg, &mut |r| {
        if trace {
            eprintln!("{r}");
        }
    })?;
    Ok((out, grid))
}

fn pipeline_report(cfg: &RunConfig, out: &PipelineOutput, mut extra: Vec<CheckResult>) -> ReportFile {
    let mut checks = out.report.checks.clone();
    if let Some(u) = &out.report.uniqueness {
        checks.push(single(
            "uniqueness_converged",
            if u.all_converged { 0.0 } else { 1.0 },
            0.5,
        ));
    }
    checks.append(&mut extra);
    let mut report = ReportFile::new(cfg, checks);
    report.solver = Some(out.report.solver.clone());
    report.uniqueness = out.report.uniqueness.clone();
    report.normalization = Some(out.report.normalization);
    report
}

pub fn solve(cfg: &RunConfig) -> Result<ReportFile, CliError> {
    let (out, _) = pipeline(cfg, 0, true)?;
    write_field(&cfg.out, "f", &out.solve.f)?;
    write_field(&cfg.out, "density", &out.density)?;
    Ok(pipeline_report(cfg, &out, Vec::new()))
}

pub fn uniqueness(cfg: &RunConfig) -> Result<ReportFile, CliError> {
    let (out, _) = pipeline(cfg, cfg.inits, true)?;
    Ok(pipeline_report(cfg, &out, Vec::new()))
}

/// Linearization checks at the computed potential against the reference.
fn linearization_checks(cfg: &RunConfig, f: &BasicField) -> Result<Vec<CheckResult>, CliError> {
    let zero = BasicField::zeros(f.grid());
    let (r1, r2) = (ma_ratio(f), ma_ratio(&zero));
    let rhs = apply_dp(&f.try_sub(&zero)?, f, &zero)?;
    let factorization = (0..r1.values().len())
        .map(|i| ((r1.values()[i] - r2.values()[i]) / r1.values()[i] - rhs.values()[i]).abs())
        .fold(0.0, f64::max);
    let kernel = dp_kernel_check(f, &zero)?;
    let spectrum = CheckResult {
        name: "dp_negative_spectrum".into(),
        max_residual: kernel.spectral_bound,
        mean_residual: kernel.spectral_bound,
        tolerance: 0.0,
        pass: kernel.spectral_bound < 0.0,
    };
    Ok(vec![
        single("dp_factorization", factorization, 1e-10),
        single("dp_kernel_angle", kernel.kernel_angle, cfg.tol.kernel),
        spectrum,
    ])
}

/// Identity suite, pipeline with uniqueness, and linearization checks.
pub fn report(cfg: &RunConfig) -> Result<ReportFile, CliError> {
    let mut checks = identity_checks(cfg)?;
    let (out, _) = pipeline(cfg, cfg.inits, true)?;
    checks.extend(linearization_checks(cfg, &out.solve.f)?);
    write_field(&cfg.out, "f", &out.solve.f)?;
    write_field(&cfg.out, "density", &out.density)?;
    Ok(pipeline_report(cfg, &out, checks))
}

pub fn run(cfg: &RunConfig) -> Result<ReportFile, CliError> {
    match cfg.command {
        Command::Verify => verify(cfg),
        Command::Solve => solve(cfg),
        Command::Uniqueness => uniqueness(cfg),
        Command::Report => report(cfg),
    }
}
