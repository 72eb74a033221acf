use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    check_grid_matches, normalize_volume, reconstruct, transversal_volume_checked, VaismanStructureNumeric,
    VolumeSpec, CONTRACTION_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::exterior::{form_norm, AlternatingForm};
use crate::leafspace::{gauss_legendre, positivity_margin, BasicField, GridKind, LeafGrid};
use crate::models::{kernel_intersection, ChartPoint, VaismanModel};
use crate::solver::{solve_transversal_ma_with, IterationRecord, SolveResult, SolverConfig};

/// Max and mean of a residual over sample points.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ResidualStats {
    pub max: f64,
    pub mean: f64,
}

impl ResidualStats {
    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        Self {
            max: values.iter().cloned().fold(0.0, f64::max),
            mean: values.iter().sum::<f64>() / values.len() as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub max_residual: f64,
    pub mean_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckResult {
    pub fn new(name: &str, stats: ResidualStats, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            max_residual: stats.max,
            mean_residual: stats.mean,
            tolerance,
            pass: stats.max <= tolerance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverSummary {
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
    pub positivity_margin: f64,
    pub homotopy_used: bool,
    pub residual_history: Vec<f64>,
}

impl From<&SolveResult> for SolverSummary {
    fn from(r: &SolveResult) -> Self {
        Self {
            iterations: r.iterations,
            converged: r.converged,
            final_residual: r.final_residual(),
            positivity_margin: r.positivity_margin,
            homotopy_used: r.homotopy_used,
            residual_history: r.residual_history.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniquenessSummary {
    pub initializations: usize,
    pub all_converged: bool,
    pub potential_distance: f64,
    pub metric_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    pub model: String,
    pub grid: String,
    pub resolution: usize,
    pub psi: String,
    pub lee_scale: f64,
    pub normalization: f64,
    pub checks: Vec<CheckResult>,
    pub solver: SolverSummary,
    pub uniqueness: Option<UniquenessSummary>,
    pub pass: bool,
}

/// Tolerances of the verification stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Tolerances {
    pub volume: f64,
    pub vaisman: f64,
    pub lee_class: f64,
    pub kernel_angle: f64,
    pub uniqueness_potential: f64,
    pub uniqueness_metric: f64,
}

impl Tolerances {
    pub fn for_grid(kind: &GridKind) -> Self {
        Self {
            volume: 1e-6,
            vaisman: 1e-5,
            lee_class: 1e-8,
            kernel_angle: 1e-6,
            uniqueness_potential: match kind {
                GridKind::Sphere(_) => 1e-12,
                GridKind::Torus(_) => 1e-8,
            },
            uniqueness_metric: 1e-7,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub solver: SolverConfig,
    /// Verification points.
    pub samples: usize,
    pub seed: u64,
    /// Solver initializations for the uniqueness experiment (0 skips it).
    pub uniqueness_inits: usize,
    pub fd_step: f64,
    pub tolerances: Option<Tolerances>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            samples: 64,
            seed: 0,
            uniqueness_inits: 0,
            fd_step: 1e-4,
            tolerances: None,
        }
    }
}

/// Verification points: random chart points on Hopf, lifts of random grid
/// nodes (with random fiber coordinates) on the nilmanifold.
pub fn verification_points(model: &VaismanModel, grid: &LeafGrid, count: usize, seed: u64) -> Result<Vec<ChartPoint>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| match model {
            VaismanModel::Hopf(_) => Ok(model.sample_point(&mut rng)),
            VaismanModel::Nil(_) => {
                let i = rng.gen_range(0..grid.len());
                let mut p = super::node_point(model, grid, i)?;
                let q = model.sample_point(&mut rng);
                p.coords[4] = q.coords[4];
                p.coords[5] = q.coords[5];
                Ok(p)
            }
        })
        .collect()
}

/// `|(ω')^n / V' - 1|` with `V'` normalized to the volume of the new class,
/// `c^{n+1} κ e^ψ ω_ref^n`.
pub fn verify_volume_match(
    s: &VaismanStructureNumeric,
    spec: &VolumeSpec,
    normalization: f64,
    points: &[ChartPoint],
) -> Result<ResidualStats> {
    let n = s.model().complex_dim() as i32;
    let scale = s.lee_scale().powi(n + 1) * normalization;
    let values = points
        .iter()
        .map(|p| Ok((s.volume_ratio(p)? / (scale * spec.psi_at(p)?.exp()) - 1.0).abs()))
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualStats::from_values(&values))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VaismanResiduals {
    /// `|dω' - θ'∧ω'|`.
    pub lck: ResidualStats,
    /// `|L_X ω'|` for `X = θ♯` of the reference structure.
    pub lie_lee: ResidualStats,
    /// `|L_X ω'|` for `X = Iθ♯`.
    pub lie_anti_lee: ResidualStats,
    /// `|d^c θ' - ω0'|`.
    pub dc_lee: ResidualStats,
    /// `||θ'|_{g'} - 1|`.
    pub lee_length: ResidualStats,
}

impl VaismanResiduals {
    pub fn max(&self) -> f64 {
        [self.lck, self.lie_lee, self.lie_anti_lee, self.dc_lee, self.lee_length]
            .iter()
            .map(|s| s.max)
            .fold(0.0, f64::max)
    }
}

/// LCK identity, invariance along the Lee and anti-Lee flows, `d^c θ' = ω0'`
/// and unit Lee length, by finite differences with step `h`.
pub fn verify_vaisman(s: &VaismanStructureNumeric, points: &[ChartPoint], h: f64) -> Result<VaismanResiduals> {
    let model = s.model();
    let (mut lck, mut lie, mut anti, mut dc, mut len) = (vec![], vec![], vec![], vec![], vec![]);
    let omega_at = |q: &ChartPoint| Ok(s.structure_at(q)?.omega);
    for p in points {
        let st = s.structure_at(p)?;
        let d_omega = model.exterior_derivative(omega_at, p, h)?;
        lck.push((&d_omega - &st.theta.wedge(&st.omega)?).coeff_norm());
        for (anti_lee, out) in [(false, &mut lie), (true, &mut anti)] {
            let field = |q: &ChartPoint| -> Result<crate::exterior::Vector> {
                let r = model.structure(q)?;
                Ok(if anti_lee { r.anti_lee_field() } else { r.lee_field })
            };
            let x = field(p)?;
            let d_inner = model.exterior_derivative(|q| s.structure_at(q)?.omega.interior(&field(q)?), p, h)?;
            let lie_derivative = &d_inner + &d_omega.interior(&x)?;
            out.push(lie_derivative.coeff_norm());
        }
        let dc_theta = model.dc(|q| Ok(s.structure_at(q)?.theta), p, h, Default::default())?;
        dc.push((&dc_theta - &st.omega0).coeff_norm());
        len.push((form_norm(&st.metric, &st.theta)? - 1.0).abs());
    }
    Ok(VaismanResiduals {
        lck: ResidualStats::from_values(&lck),
        lie_lee: ResidualStats::from_values(&lie),
        lie_anti_lee: ResidualStats::from_values(&anti),
        dc_lee: ResidualStats::from_values(&dc),
        lee_length: ResidualStats::from_values(&len),
    })
}

/// `∮ (θ' - c θ)` over the generating loops through each point, by
/// Gauss-Legendre quadrature along straight chart segments.
pub fn verify_lee_class(s: &VaismanStructureNumeric, points: &[ChartPoint]) -> Result<ResidualStats> {
    let model = s.model();
    let (x, w) = gauss_legendre(48);
    let nodes: Vec<f64> = x.iter().map(|t| 0.5 * (t + 1.0)).collect();
    let weights: Vec<f64> = w.iter().map(|v| 0.5 * v).collect();
    let mut values = Vec::new();
    for p in points {
        for (start, end) in model.generating_loops(p) {
            let v: Vec<f64> = end.coords.iter().zip(&start.coords).map(|(a, b)| a - b).collect();
            let mut integral = 0.0;
            for (t, w) in nodes.iter().zip(&weights) {
                let q = start.offset(&v, *t);
                let diff = loop_integrand(s, &q)?;
                let vf = model.coordinates_to_frame(&q, &v)?;
                integral += w * diff.coeffs().iter().zip(vf.comps()).map(|(a, b)| a * b).sum::<f64>();
            }
            values.push(integral.abs());
        }
    }
    Ok(ResidualStats::from_values(&values))
}

fn loop_integrand(s: &VaismanStructureNumeric, q: &ChartPoint) -> Result<AlternatingForm> {
    let new = s.structure_at(q)?.theta;
    let reference = s.model().structure(q)?.theta.scale(s.lee_scale());
    Ok(&new - &reference)
}

/// Largest principal angle between `ker(ω0 + ω0')` and `span(θ♯, Iθ♯)`;
/// `π/2` where the kernel is not 2-dimensional.
pub fn verify_kernel_rigidity(
    a: &VaismanStructureNumeric,
    b: &VaismanStructureNumeric,
    points: &[ChartPoint],
) -> Result<ResidualStats> {
    let values = points
        .iter()
        .map(|p| {
            let reference = a.model().structure(p)?;
            let rep = kernel_intersection(&reference, &a.structure_at(p)?.omega0, &b.structure_at(p)?.omega0)?;
            Ok(rep.max_angle())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualStats::from_values(&values))
}

/// Largest entrywise difference of the metrics of two structures.
pub fn metric_distance(a: &VaismanStructureNumeric, b: &VaismanStructureNumeric, points: &[ChartPoint]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for p in points {
        let ga = a.structure_at(p)?.metric.matrix().clone();
        let gb = b.structure_at(p)?.metric.matrix().clone();
        worst = worst.max((ga - gb).amax());
    }
    Ok(worst)
}

/// Seeded smooth initializations with positive margin, the first being 0.
pub fn seeded_initializations(grid: &Arc<LeafGrid>, count: usize, seed: u64) -> Result<Vec<BasicField>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![BasicField::zeros(grid)];
    while out.len() < count {
        let coeffs: Vec<(f64, f64)> = (0..4).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.0..6.3))).collect();
        let field = match grid.kind() {
            GridKind::Sphere(_) => BasicField::from_fn(grid, |p| {
                coeffs[0].0 * p[0] + coeffs[1].0 * p[1] * p[2] + coeffs[2].0 * (p[2] * p[2] - 1.0 / 3.0)
                    + coeffs[3].0 * p[0] * p[1]
            })?,
            GridKind::Torus(_) => BasicField::from_fn(grid, |x| {
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(d, (a, ph))| a * (x[d] + ph).cos())
                    .sum()
            })?,
        };
        let mut amp = 0.05;
        let mut candidate = field.scale(amp);
        while positivity_margin(&candidate) <= 0.5 {
            amp *= 0.5;
            candidate = field.scale(amp);
        }
        out.push(candidate.centered());
    }
    Ok(out)
}

/// Everything produced by [`run_pipeline`].
#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub structure: VaismanStructureNumeric,
    pub report: VerificationReport,
    pub solve: SolveResult,
    pub density: BasicField,
}

/// transversal volume → normalization → Monge-Ampère solve → reconstruction
/// → verification. Errors carry the stage name.
pub fn run_pipeline(spec: &VolumeSpec, grid: &Arc<LeafGrid>, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    run_pipeline_with(spec, grid, cfg, &mut |_| {})
}

pub fn run_pipeline_with(
    spec: &VolumeSpec,
    grid: &Arc<LeafGrid>,
    cfg: &PipelineConfig,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<PipelineOutput> {
    check_grid_matches(&spec.model, grid).map_err(|e| e.at("setup"))?;
    let tol = cfg.tolerances.clone().unwrap_or_else(|| Tolerances::for_grid(grid.kind()));
    let (density, oracle) = transversal_volume_checked(spec, grid).map_err(|e| e.at("transversal_volume"))?;
    let (target, normalization) = normalize_volume(&density).map_err(|e| e.at("normalize_volume"))?;
    let zero = BasicField::zeros(grid);
    let solve = solve_transversal_ma_with(&target, &cfg.solver, &zero, observer).map_err(|e| e.at("solve"))?;
    if !solve.converged {
        return Err(Error::NotConverged {
            residual: solve.final_residual(),
            iterations: solve.iterations,
        }
        .at("solve"));
    }
    let structure = reconstruct(&spec.model, &solve.f, spec.lee_scale).map_err(|e| e.at("reconstruct"))?;
    let reference = reconstruct(&spec.model, &zero, spec.lee_scale).map_err(|e| e.at("reconstruct"))?;

    let verify = |e: Error| e.at("verify");
    let points = verification_points(&spec.model, grid, cfg.samples, cfg.seed).map_err(verify)?;
    let loop_points = &points[..points.len().min(4)];
    let volume = verify_volume_match(&structure, spec, normalization, &points).map_err(verify)?;
    let vaisman = verify_vaisman(&structure, &points, cfg.fd_step).map_err(verify)?;
    let lee = verify_lee_class(&structure, loop_points).map_err(verify)?;
    let rigidity = verify_kernel_rigidity(&reference, &structure, &points).map_err(verify)?;

    let mut checks = vec![
        CheckResult::new("volume_contraction", ResidualStats { max: oracle, mean: oracle }, CONTRACTION_TOLERANCE),
        CheckResult::new(
            "solver_residual",
            ResidualStats {
                max: solve.final_residual(),
                mean: solve.final_residual(),
            },
            cfg.solver.tol_residual,
        ),
        CheckResult::new("volume_match", volume, tol.volume),
        CheckResult::new("lck", vaisman.lck, tol.vaisman),
        CheckResult::new("lie_lee", vaisman.lie_lee, tol.vaisman),
        CheckResult::new("lie_anti_lee", vaisman.lie_anti_lee, tol.vaisman),
        CheckResult::new("dc_lee", vaisman.dc_lee, tol.vaisman),
        CheckResult::new("lee_length", vaisman.lee_length, tol.vaisman),
        CheckResult::new("lee_class", lee, tol.lee_class),
        CheckResult::new("kernel_rigidity", rigidity, tol.kernel_angle),
    ];

    let uniqueness = if cfg.uniqueness_inits >= 2 {
        let inits = seeded_initializations(grid, cfg.uniqueness_inits, cfg.seed ^ 0x9e37).map_err(verify)?;
        let mut potential_distance: f64 = 0.0;
        let mut metric_dist: f64 = 0.0;
        let mut all_converged = true;
        let metric_points = &points[..points.len().min(16)];
        for init in &inits[1..] {
            let other = solve_transversal_ma_with(&target, &cfg.solver, init, &mut |_| {}).map_err(|e| e.at("uniqueness"))?;
            all_converged &= other.converged;
            potential_distance = potential_distance.max(other.f.try_sub(&solve.f)?.sup_norm());
            let rebuilt = reconstruct(&spec.model, &other.f, spec.lee_scale).map_err(|e| e.at("uniqueness"))?;
            metric_dist = metric_dist.max(metric_distance(&structure, &rebuilt, metric_points).map_err(verify)?);
        }
        checks.push(CheckResult::new(
            "uniqueness_potential",
            ResidualStats {
                max: potential_distance,
                mean: potential_distance,
            },
            tol.uniqueness_potential,
        ));
        checks.push(CheckResult::new(
            "uniqueness_metric",
            ResidualStats {
                max: metric_dist,
                mean: metric_dist,
            },
            tol.uniqueness_metric,
        ));
        Some(UniquenessSummary {
            initializations: inits.len(),
            all_converged,
            potential_distance,
            metric_distance: metric_dist,
        })
    } else {
        None
    };

    let pass = solve.converged
        && checks.iter().all(|c| c.pass)
        && uniqueness.as_ref().map_or(true, |u| u.all_converged);
    let report = VerificationReport {
        model: spec.model.name(),
        grid: grid.name().to_string(),
        resolution: grid.resolution(),
        psi: spec.label.clone(),
        lee_scale: spec.lee_scale,
        normalization,
        checks,
        solver: SolverSummary::from(&solve),
        uniqueness,
        pass,
    };
    Ok(PipelineOutput {
        structure,
        report,
        solve,
        density,
    })
}
