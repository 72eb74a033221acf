//! Damped Newton solver for the transversal complex Monge-Ampère equation
//! `(ω0 + dd^c f)^{n-1} = ρ ω0^{n-1}` on a leaf-space grid.
//!
//! Rank 2 is solved in log form, `F(f) = log det(Id + H(f)) - log ρ`. Rank 1
//! is linear and is solved in the form `F(f) = 1 + Δf - ρ`, so one Newton step
//! reproduces the Poisson solution. Each Newton system `J δ + c = -F` is solved
//! by BiCGSTAB, right-preconditioned with the inverse Laplacian.

mod krylov;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use krylov::{bicgstab, lanczos_max, KrylovOutcome};

use crate::error::{Error, Result};
use crate::leafspace::{
    apply_coefficients, apply_coefficients_adjoint, dp_coefficients, margin_from_components,
    operator_coefficients, Background, BasicField, GridKind, HermitianEntry, LeafGrid,
};

/// Relative tolerance on `∫ρ = area`.
pub const COMPATIBILITY_TOLERANCE: f64 = 1e-8;

/// Worst accepted relative residual of an inner linear solve.
const LINEAR_FAILURE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Sup-norm tolerance on the log-density residual.
    pub tol_residual: f64,
    pub max_iters: usize,
    pub initial_damping: f64,
    pub damping_floor: f64,
    pub linear_solve_tol: f64,
    pub max_linear_iters: usize,
    /// Fall back to a two-stage homotopy when damping floors.
    pub homotopy: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_residual: 1e-10,
            max_iters: 50,
            initial_damping: 1.0,
            damping_floor: 2f64.powi(-20),
            linear_solve_tol: 1e-12,
            max_linear_iters: 500,
            homotopy: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.tol_residual,
            self.initial_damping,
            self.damping_floor,
            self.linear_solve_tol,
        ];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || self.max_iters == 0 {
            return Err(Error::InvalidArgument("solver settings must be positive".into()));
        }
        if self.tol_residual >= 1.0 {
            return Err(Error::InvalidArgument("residual tolerance must be below 1".into()));
        }
        if self.damping_floor > self.initial_damping || self.initial_damping > 1.0 {
            return Err(Error::InvalidArgument(
                "damping must satisfy floor ≤ initial ≤ 1".into(),
            ));
        }
        Ok(())
    }
}

/// One accepted Newton step.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual: f64,
    pub damping: f64,
    pub margin: f64,
    pub linear_iterations: usize,
    /// Homotopy stage parameter, 1 for the target equation.
    pub stage: f64,
}

impl fmt::Display for IterationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "iter={} residual={:.6e} damping={:.6e} margin={:.6e} linear={} stage={}",
            self.iteration, self.residual, self.damping, self.margin, self.linear_iterations, self.stage
        )
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    /// Mean-zero potential.
    pub f: BasicField,
    /// Sup-norm residual before the first step and after each accepted step.
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub positivity_margin: f64,
    pub converged: bool,
    pub damping_floored: bool,
    pub homotopy_used: bool,
    pub records: Vec<IterationRecord>,
}

impl SolveResult {
    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().unwrap_or(&f64::INFINITY)
    }
}

/// Solve `(ω0 + dd^c f)^{n-1} = ρ ω0^{n-1}` from `init`.
pub fn solve_transversal_ma(target: &BasicField, cfg: &SolverConfig, init: &BasicField) -> Result<SolveResult> {
    solve_transversal_ma_with(target, cfg, init, &mut |_| {})
}

/// As [`solve_transversal_ma`], passing every accepted step to `observer`.
pub fn solve_transversal_ma_with(
    target: &BasicField,
    cfg: &SolverConfig,
    init: &BasicField,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<SolveResult> {
    cfg.validate()?;
    target.check_grid(init)?;
    let grid = target.grid().clone();
    let min = target.min();
    if !(min > 0.0) {
        return Err(Error::NonPositiveDensity(min));
    }
    let area = grid.area();
    let defect = (grid.integrate(target.values()) - area).abs() / area;
    if defect > COMPATIBILITY_TOLERANCE {
        return Err(Error::Compatibility(defect));
    }
    grid.check_aliasing(target.values())?;
    let f0 = centered(&grid, grid.project(init.values()));
    let margin = margin_from_components(&grid.hessian_components(&f0));
    if !(margin > 0.0) {
        return Err(Error::NonPositiveBackground(margin));
    }
    let rho = grid.project(target.values());
    let min = rho.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::NonPositiveDensity(min));
    }
    let mut first = newton(&grid, &rho, cfg, f0, 1.0, observer)?;
    if !first.damping_floored || !cfg.homotopy {
        return Ok(first.into_result(&grid, false));
    }
    let mut records = std::mem::take(&mut first.records);
    let mut f = first.f;
    let mut last = None;
    for stage in [0.5, 1.0] {
        let rho_t: Vec<f64> = rho.iter().map(|r| 1.0 + stage * (r - 1.0)).collect();
        let mut run = newton(&grid, &rho_t, cfg, f, stage, observer)?;
        records.append(&mut run.records);
        f = run.f.clone();
        let done = run.converged;
        last = Some(run);
        if !done {
            break;
        }
    }
    let mut run = last.expect("homotopy has stages");
    run.records = records;
    Ok(run.into_result(&grid, true))
}

struct NewtonRun {
    f: Vec<f64>,
    history: Vec<f64>,
    margin: f64,
    converged: bool,
    damping_floored: bool,
    records: Vec<IterationRecord>,
}

impl NewtonRun {
    fn into_result(self, grid: &Arc<LeafGrid>, homotopy_used: bool) -> SolveResult {
        SolveResult {
            f: BasicField::from_raw(grid, self.f),
            iterations: self.records.len(),
            residual_history: self.history,
            positivity_margin: self.margin,
            converged: self.converged,
            damping_floored: self.damping_floored,
            homotopy_used,
            records: self.records,
        }
    }
}

fn centered(grid: &LeafGrid, mut v: Vec<f64>) -> Vec<f64> {
    let m = grid.mean(&v);
    v.iter_mut().for_each(|x| *x -= m);
    v
}

/// Pointwise equation residual, `None` where `Id + H` is not positive.
fn equation_residual(grid: &LeafGrid, comps: &[Vec<f64>], rho: &[f64]) -> Option<Vec<f64>> {
    let rank = grid.rank();
    let mut out = Vec::with_capacity(rho.len());
    for (i, r) in rho.iter().enumerate() {
        let b = Background::at(comps, i);
        if !(b.min_eigenvalue() > 0.0) {
            return None;
        }
        out.push(if rank == 1 { b.det() - r } else { b.det().ln() - r.ln() });
    }
    Some(out)
}

/// Reported residual `sup |log ratio - log ρ|`, modulo constants on the torus.
fn log_residual(grid: &LeafGrid, comps: &[Vec<f64>], rho: &[f64]) -> f64 {
    let mut diff = Vec::with_capacity(rho.len());
    for (i, r) in rho.iter().enumerate() {
        let d = Background::at(comps, i).det();
        if !(d > 0.0) {
            return f64::INFINITY;
        }
        diff.push(d.ln() - r.ln());
    }
    if grid.rank() > 1 {
        diff = centered(grid, grid.project(&diff));
    }
    diff.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Coefficients of the linearization `δ ↦ Σ_c k_c h_c(δ)`.
fn jacobian_coefficients(grid: &LeafGrid, comps: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let rank = grid.rank();
    let mut k = vec![vec![0.0; grid.len()]; grid.components()];
    for i in 0..grid.len() {
        let kc = if rank == 1 {
            [1.0, 0.0, 0.0, 0.0]
        } else {
            let b = Background::at(comps, i);
            let adj = b.adjugate();
            let s = 1.0 / b.det();
            operator_coefficients(
                &HermitianEntry {
                    a: s * adj.a,
                    b: s * adj.b,
                    re: s * adj.re,
                    im: s * adj.im,
                },
                rank,
            )
        };
        for (c, col) in k.iter_mut().enumerate() {
            col[i] = kc[c];
        }
    }
    k
}

/// The Newton linearization of the residual at `f`, applied to `v`.
pub fn linearized_residual(f: &BasicField, v: &BasicField) -> Result<BasicField> {
    f.check_grid(v)?;
    let grid = f.grid();
    let k = jacobian_coefficients(grid, &grid.hessian_components(f.values()));
    Ok(BasicField::from_raw(grid, apply_coefficients(grid, &k, v.values())))
}

fn newton(
    grid: &Arc<LeafGrid>,
    rho: &[f64],
    cfg: &SolverConfig,
    mut f: Vec<f64>,
    stage: f64,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<NewtonRun> {
    let mut comps = grid.hessian_components(&f);
    let mut residual = log_residual(grid, &comps, rho);
    let mut margin = margin_from_components(&comps);
    let mut history = vec![residual];
    let mut records = Vec::new();
    let mut damping_floored = false;
    while residual > cfg.tol_residual && records.len() < cfg.max_iters {
        let eq = equation_residual(grid, &comps, rho).ok_or(Error::NonPositiveBackground(margin))?;
        let mut rhs: Vec<f64> = grid.project(&eq).iter().map(|v| -v).collect();
        if grid.rank() > 1 {
            rhs = centered(grid, rhs);
        }
        let k = jacobian_coefficients(grid, &comps);
        let operator = |w: &[f64]| {
            let delta = grid.inverse_laplacian(w);
            let jd = grid.project(&apply_coefficients(grid, &k, &delta));
            let m = grid.mean(w);
            jd.iter().map(|x| x + m).collect::<Vec<_>>()
        };
        let out = bicgstab(operator, &rhs, cfg.linear_solve_tol, cfg.max_linear_iters);
        if out.relative_residual > LINEAR_FAILURE {
            return Err(Error::LinearSolver(out.relative_residual));
        }
        let delta = grid.inverse_laplacian(&out.solution);

        let mut t = cfg.initial_damping;
        let accepted = loop {
            let trial: Vec<f64> = f.iter().zip(&delta).map(|(a, d)| a + t * d).collect();
            let trial = centered(grid, trial);
            let tc = grid.hessian_components(&trial);
            let tm = margin_from_components(&tc);
            if tm > 0.0 {
                let tr = log_residual(grid, &tc, rho);
                if tr < residual {
                    break Some((trial, tc, tm, tr));
                }
            }
            t *= 0.5;
            if t < cfg.damping_floor {
                break None;
            }
        };
        let Some((trial, tc, tm, tr)) = accepted else {
            damping_floored = true;
            break;
        };
        f = trial;
        comps = tc;
        margin = tm;
        residual = tr;
        history.push(residual);
        let record = IterationRecord {
            iteration: records.len() + 1,
            residual,
            damping: t,
            margin,
            linear_iterations: out.iterations,
            stage,
        };
        observer(&record);
        records.push(record);
    }
    Ok(NewtonRun {
        f,
        history,
        margin,
        converged: residual <= cfg.tol_residual && margin > 0.0,
        damping_floored,
        records,
    })
}

#[derive(Clone, Debug)]
pub struct UniquenessReport {
    /// Largest pairwise sup-distance between the solutions.
    pub max_distance: f64,
    pub all_converged: bool,
    pub runs: Vec<SolveResult>,
}

/// Solve from every initialization and compare the mean-zero solutions.
pub fn uniqueness_experiment(
    target: &BasicField,
    cfg: &SolverConfig,
    inits: &[BasicField],
) -> Result<UniquenessReport> {
    if inits.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "uniqueness needs at least 2 initializations, got {}",
            inits.len()
        )));
    }
    let runs = inits
        .iter()
        .map(|init| solve_transversal_ma(target, cfg, init))
        .collect::<Result<Vec<_>>>()?;
    let mut max_distance: f64 = 0.0;
    for (a, ra) in runs.iter().enumerate() {
        for rb in &runs[a + 1..] {
            max_distance = max_distance.max(ra.f.try_sub(&rb.f)?.sup_norm());
        }
    }
    Ok(UniquenessReport {
        max_distance,
        all_converged: runs.iter().all(|r| r.converged),
        runs,
    })
}

/// Smallest eigenpair and spectral gap of the discretized `D_P`.
#[derive(Clone, Debug)]
pub struct KernelCheck {
    pub kernel_eigenvalue: f64,
    /// Angle between the kernel eigenvector and the constants.
    pub kernel_angle: f64,
    pub kernel_vector: BasicField,
    /// Lower bound for `|λ|` over the other eigenvalues (exact on the sphere).
    pub gap: f64,
    /// Largest eigenvalue of the symmetric part on the complement of the
    /// constants; negative means the rest of the spectrum has negative real part.
    pub spectral_bound: f64,
}

/// Eigen-structure of `D_P` for the backgrounds `f1`, `f2`.
///
/// Sphere: the operator is compressed to the band space in the weighted inner
/// product `⟨u, v⟩ = ∫ ρ1 u v` and solved densely. Torus: shifted inverse
/// iteration for the kernel and Lanczos on the weighted symmetric part.
pub fn dp_kernel_check(f1: &BasicField, f2: &BasicField) -> Result<KernelCheck> {
    let k = dp_coefficients(f1, f2)?;
    let grid = f1.grid().clone();
    match grid.kind() {
        GridKind::Sphere(s) => sphere_kernel(&grid, s, f1),
        GridKind::Torus(_) => torus_kernel(&grid, &k, f1),
    }
}

fn sphere_kernel(grid: &Arc<LeafGrid>, s: &crate::leafspace::SphereGrid, f1: &BasicField) -> Result<KernelCheck> {
    let band = s.band();
    let nc = s.num_coeffs();
    let rho1: Vec<f64> = grid.hessian_components(f1.values())[0].iter().map(|h| 1.0 + h).collect();
    let mut y = DMatrix::zeros(grid.len(), nc);
    let mut degree = vec![0usize; nc];
    for l in 0..=band {
        for m in -(l as i64)..=(l as i64) {
            let j = crate::leafspace::coeff_index(l, m);
            degree[j] = l;
            for (i, v) in s.harmonic(l, m).into_iter().enumerate() {
                y[(i, j)] = v;
            }
        }
    }
    let wy = DMatrix::from_fn(grid.len(), nc, |i, j| grid.weights()[i] * rho1[i] * y[(i, j)]);
    let mass = y.transpose() * wy;
    let mass = (&mass + mass.transpose()) * 0.5;
    let chol = mass.cholesky().ok_or(Error::SingularMetric)?;
    let linv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(nc, nc))
        .ok_or(Error::SingularMap)?;
    let c = crate::leafspace::convention_constant();
    let lambda = DVector::from_iterator(nc, degree.iter().map(|&l| -c * (l * (l + 1)) as f64));
    let b = &linv * DMatrix::from_diagonal(&lambda) * linv.transpose();
    let b = (&b + b.transpose()) * 0.5;
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..nc).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].abs().total_cmp(&eig.eigenvalues[b].abs()));
    let k0 = order[0];
    let coeffs = linv.transpose() * eig.eigenvectors.column(k0);
    let angle = (coeffs[0].abs() / coeffs.norm()).clamp(0.0, 1.0).acos();
    let vector = s.synthesis(coeffs.as_slice());
    let rest: Vec<f64> = order[1..].iter().map(|&i| eig.eigenvalues[i]).collect();
    let gap = rest.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let bound = rest.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(KernelCheck {
        kernel_eigenvalue: eig.eigenvalues[k0],
        kernel_angle: angle,
        kernel_vector: BasicField::from_raw(grid, vector),
        gap,
        spectral_bound: bound,
    })
}

fn angle_to_constants(grid: &LeafGrid, v: &[f64]) -> f64 {
    let ones = vec![1.0; v.len()];
    let c = grid.dot(v, &ones).abs() / (grid.dot(v, v) * grid.dot(&ones, &ones)).sqrt();
    c.clamp(0.0, 1.0).acos()
}

fn torus_kernel(grid: &Arc<LeafGrid>, k: &[Vec<f64>], f1: &BasicField) -> Result<KernelCheck> {
    const SHIFT: f64 = 1e-6;
    let n = grid.len();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let normalize = |v: &mut Vec<f64>| {
        let s = grid.dot(v, v).sqrt();
        v.iter_mut().for_each(|a| *a /= s);
    };
    normalize(&mut x);
    let shifted = |w: &[f64]| {
        let u = grid.shifted_inverse_laplacian(w, SHIFT);
        let du = apply_coefficients(grid, k, &u);
        du.iter().zip(&u).map(|(a, b)| a - SHIFT * b).collect::<Vec<_>>()
    };
    for _ in 0..3 {
        let out = bicgstab(shifted, &x, 1e-13, 2000);
        if out.relative_residual > LINEAR_FAILURE {
            return Err(Error::LinearSolver(out.relative_residual));
        }
        x = grid.shifted_inverse_laplacian(&out.solution, SHIFT);
        normalize(&mut x);
    }
    let dx = apply_coefficients(grid, k, &x);
    let eigenvalue = grid.dot(&x, &dx) / grid.dot(&x, &x);
    let angle = angle_to_constants(grid, &x);

    let c1 = grid.hessian_components(f1.values());
    let wd: Vec<f64> = (0..n)
        .map(|i| grid.weights()[i] * Background::at(&c1, i).det())
        .collect();
    let sq: Vec<f64> = wd.iter().map(|w| w.sqrt()).collect();
    let cn = sq.iter().map(|v| v * v).sum::<f64>().sqrt();
    let cvec: Vec<f64> = sq.iter().map(|v| v / cn).collect();
    let symmetric = |y: &[f64]| {
        let u: Vec<f64> = y.iter().zip(&sq).map(|(a, s)| a / s).collect();
        let du = apply_coefficients(grid, k, &u);
        let wu: Vec<f64> = u.iter().zip(&wd).map(|(a, w)| a * w).collect();
        // Uniform weights: the weighted adjoint is the transpose.
        let dtw = apply_coefficients_adjoint(grid, k, &wu);
        (0..n)
            .map(|i| 0.5 * (wd[i] * du[i] + dtw[i]) / sq[i])
            .collect::<Vec<_>>()
    };
    let project = |v: &mut Vec<f64>| {
        let p: f64 = v.iter().zip(&cvec).map(|(a, b)| a * b).sum();
        v.iter_mut().zip(&cvec).for_each(|(a, b)| *a -= p * b);
    };
    let start: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let bound = lanczos_max(symmetric, project, start, n.min(400), 1e-10);
    Ok(KernelCheck {
        kernel_eigenvalue: eigenvalue,
        kernel_angle: angle,
        kernel_vector: BasicField::from_raw(grid, x),
        gap: if bound < 0.0 { -bound } else { 0.0 },
        spectral_bound: bound,
    })
}

#[cfg(test)]
mod tests;
