//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line to stderr
//! (bypassing output capture) and then asserts.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vaisman_cli::psi::PsiSpec;
use vaisman_core::leafspace::{
    apply_dp, coeff_index, ma_ratio, poisson_solve, BasicField, GridKind, LeafGrid,
};
use vaisman_core::models::{
    check_identities, fd_convergence_order, homothety_character, ChartPoint, DcConvention, HopfModel,
    VaismanModel,
};
use vaisman_core::pipeline::{
    run_pipeline, verification_points, verify_kernel_rigidity, PipelineConfig, PipelineOutput,
};
use vaisman_core::solver::{dp_kernel_check, solve_transversal_ma, SolverConfig};
use vaisman_core::Error;

fn line(id: u32, title: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "[criterion {id:>2}] {verdict} {title}: {detail}");
}

fn sample(model: &VaismanModel, count: usize, seed: u64) -> Vec<ChartPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| model.sample_point(&mut rng)).collect()
}

fn sphere_of(grid: &LeafGrid) -> &vaisman_core::leafspace::SphereGrid {
    match grid.kind() {
        GridKind::Sphere(s) => s,
        _ => unreachable!(),
    }
}

#[test]
fn criterion_01_exact_identities_on_the_nilmanifold() {
    let start = Instant::now();
    let model = VaismanModel::nil().unwrap();
    let mut worst: f64 = 0.0;
    let mut dims_ok = true;
    for p in sample(&model, 1000, 1) {
        let r = check_identities(&model, &p, 1e-4, DcConvention::Standard).unwrap();
        worst = [
            worst,
            r.lee_length,
            r.lck,
            r.structure,
            r.kernel.max_angle(),
            r.contraction,
            r.parallel,
            r.killing.max(),
            (-r.semipositivity).max(0.0),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        dims_ok &= r.kernel.kernel_dim == 2;
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-12 && dims_ok && secs < 1.0;
    line(
        1,
        "nilmanifold identity suite",
        pass,
        &format!("max residual {worst:.2e} over 1000 points, kernel dim 2: {dims_ok}, {secs:.2} s"),
    );
    assert!(pass);
}

#[test]
fn criterion_02_finite_difference_identities_on_hopf() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut order_dev: f64 = 0.0;
    let mut dims_ok = true;
    let mut orders_seen = Vec::new();
    for n in [2, 3] {
        let model = VaismanModel::hopf(n, 2.0).unwrap();
        let points = sample(&model, 1000, 2 + n as u64);
        for p in &points {
            let r = check_identities(&model, p, 1e-4, DcConvention::Standard).unwrap();
            worst = [
                worst,
                r.lee_length,
                r.lck,
                r.structure,
                r.kernel.max_angle(),
                r.contraction,
                r.parallel,
                r.killing.max(),
                (-r.semipositivity).max(0.0),
            ]
            .into_iter()
            .fold(0.0, f64::max);
            dims_ok &= r.kernel.kernel_dim == 2;
        }
        let orders = fd_convergence_order(&model, &points[..50], 1e-2).unwrap();
        for o in orders {
            order_dev = order_dev.max((o - 2.0).abs());
        }
        orders_seen.push(orders);
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-6 && order_dev <= 0.5 && dims_ok && secs < 30.0;
    line(
        2,
        "Hopf identity suite (n = 2, 3)",
        pass,
        &format!(
            "max residual {worst:.2e} at h = 1e-4 over 2 x 1000 points, observed orders {orders_seen:.3?}, {secs:.1} s"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_homothety_character() {
    let mut worst: f64 = 0.0;
    let mut spread: f64 = 0.0;
    for alpha in [1.5, 2.0, 3.0] {
        for n in [2, 3] {
            let hopf = HopfModel::new(n, alpha).unwrap();
            let model = VaismanModel::Hopf(hopf.clone());
            let est = homothety_character(&hopf, &sample(&model, 100, 7)).unwrap();
            worst = worst.max((est.value - alpha * alpha).abs()).max(est.proportionality);
            spread = spread.max(est.spread);
        }
    }
    let pass = worst <= 1e-10 && spread <= 1e-10;
    line(
        3,
        "homothety character equals alpha^2",
        pass,
        &format!("max |chi - alpha^2| {worst:.2e}, spread {spread:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_04_sphere_poisson() {
    let band = 32;
    let grid = LeafGrid::sphere(band).unwrap();
    let s = sphere_of(&grid);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut coeffs = vec![0.0; s.num_coeffs()];
    let mut solution = vec![0.0; s.num_coeffs()];
    for l in 1..=band {
        for m in -(l as i64)..=(l as i64) {
            let c = rng.gen_range(-1.0..1.0) / (1.0 + l as f64);
            coeffs[coeff_index(l, m)] = c;
            solution[coeff_index(l, m)] = -c / (l * (l + 1)) as f64;
        }
    }
    let rho_values = s.synthesis(&coeffs);
    let scale = rho_values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let rho = BasicField::new(&grid, rho_values.iter().map(|v| v / scale).collect()).unwrap();
    let exact: Vec<f64> = s.synthesis(&solution).iter().map(|v| v / scale).collect();
    let u = poisson_solve(&rho).unwrap();
    let lap = grid.laplacian(u.values());
    let residual = lap
        .iter()
        .zip(rho.values())
        .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    let error = u
        .values()
        .iter()
        .zip(&exact)
        .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    let rejected = matches!(poisson_solve(&rho.map(|v| v + 0.1)), Err(Error::NonzeroMean(_)));
    let pass = residual <= 1e-10 && error <= 1e-10 && rejected;
    line(
        4,
        "sphere Poisson solve at L = 32",
        pass,
        &format!("residual {residual:.2e}, error vs closed form {error:.2e}, nonzero mean rejected: {rejected}"),
    );
    assert!(pass);
}

/// A profile `P(u)` with its first two derivatives.
#[derive(Clone, Copy)]
enum Profile {
    One,
    Cos,
    Sin,
    /// `1 / (b - cos u)`.
    Poisson(f64),
    /// `1 + a sin u`.
    Bump(f64),
}

impl Profile {
    fn jet(self, u: f64) -> (f64, f64, f64) {
        match self {
            Profile::One => (1.0, 0.0, 0.0),
            Profile::Cos => (u.cos(), -u.sin(), -u.cos()),
            Profile::Sin => (u.sin(), u.cos(), -u.sin()),
            Profile::Poisson(b) => {
                let q = b - u.cos();
                let (s, c) = u.sin_cos();
                (1.0 / q, -s / (q * q), -c / (q * q) + 2.0 * s * s / (q * q * q))
            }
            Profile::Bump(a) => (1.0 + a * u.sin(), a * u.cos(), -a * u.sin()),
        }
    }
}

/// `c P(k·x + φ) Q(m·x + ψ)`.
struct Term {
    c: f64,
    p: (Profile, [f64; 4], f64),
    q: (Profile, [f64; 4], f64),
}

impl Term {
    fn phase(k: &[f64; 4], phi: f64, x: &[f64]) -> f64 {
        (0..4).map(|d| k[d] * x[d]).sum::<f64>() + phi
    }

    fn value(&self, x: &[f64]) -> f64 {
        let (p, k, phi) = self.p;
        let (q, m, psi) = self.q;
        self.c * p.jet(Self::phase(&k, phi, x)).0 * q.jet(Self::phase(&m, psi, x)).0
    }

    fn hessian(&self, x: &[f64]) -> [[f64; 4]; 4] {
        let (p, k, phi) = self.p;
        let (q, m, psi) = self.q;
        let (p0, p1, p2) = p.jet(Self::phase(&k, phi, x));
        let (q0, q1, q2) = q.jet(Self::phase(&m, psi, x));
        let mut h = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                h[i][j] = self.c
                    * (p2 * k[i] * k[j] * q0 + p1 * q1 * (k[i] * m[j] + k[j] * m[i]) + p0 * q2 * m[i] * m[j]);
            }
        }
        h
    }
}

/// Coefficients `S_c` with `hessian_components_c = Σ S_c[i][j] ∂_i ∂_j`,
/// probed at the origin with band-limited functions.
fn hessian_map() -> [[[f64; 4]; 4]; 4] {
    let grid = LeafGrid::torus(8).unwrap();
    assert!(grid.leaf_point(0).iter().all(|x| *x == 0.0));
    let mut s = [[[0.0; 4]; 4]; 4];
    for i in 0..4 {
        for j in i..4 {
            let f = BasicField::from_fn(&grid, |x| if i == j { -x[i].cos() } else { x[i].sin() * x[j].sin() }).unwrap();
            let comps = grid.hessian_components(f.values());
            for c in 0..4 {
                let v = comps[c][0];
                if i == j {
                    s[c][i][i] = v;
                } else {
                    s[c][i][j] = 0.5 * v;
                    s[c][j][i] = 0.5 * v;
                }
            }
        }
    }
    s
}

/// `det(Id + H)` for the Hermitian matrix assembled from exact second derivatives.
fn exact_density(terms: &[Term], map: &[[[f64; 4]; 4]; 4], x: &[f64]) -> f64 {
    let mut hess = [[0.0; 4]; 4];
    for t in terms {
        let h = t.hessian(x);
        for i in 0..4 {
            for j in 0..4 {
                hess[i][j] += h[i][j];
            }
        }
    }
    let comp = |c: usize| -> f64 { (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| map[c][i][j] * hess[i][j]).sum() };
    let (a, b, re, im) = (comp(0), comp(1), comp(2), comp(3));
    (1.0 + a) * (1.0 + b) - re * re - im * im
}

fn manufactured_solve(terms: &[Term], map: &[[[f64; 4]; 4]; 4], n: usize) -> (f64, usize, bool) {
    let grid = LeafGrid::torus(n).unwrap();
    let raw = BasicField::from_fn(&grid, |x| exact_density(terms, map, x)).unwrap();
    let rho = raw.scale(1.0 / raw.mean());
    let fstar = BasicField::from_fn(&grid, |x| terms.iter().map(|t| t.value(x)).sum()).unwrap().centered();
    let out = solve_transversal_ma(&rho, &SolverConfig::default(), &BasicField::zeros(&grid)).unwrap();
    let err = out.f.centered().try_sub(&fstar).unwrap().sup_norm();
    (err, out.iterations, out.converged)
}

fn unit(d: usize) -> [f64; 4] {
    let mut k = [0.0; 4];
    k[d] = 1.0;
    k
}

#[test]
fn criterion_05_torus_monge_ampere() {
    let start = Instant::now();
    let map = hessian_map();
    let zero = [0.0; 4];
    let trig = [
        Term { c: 0.15, p: (Profile::Cos, unit(0), 0.0), q: (Profile::Cos, unit(1), 0.0) },
        Term { c: 0.1, p: (Profile::Sin, [0.0, 0.0, 1.0, 1.0], 0.0), q: (Profile::One, zero, 0.0) },
        Term { c: 0.05, p: (Profile::Sin, [1.0, 0.0, 0.0, -1.0], 0.4), q: (Profile::One, zero, 0.0) },
    ];
    let (err16, iters16, conv16) = manufactured_solve(&trig, &map, 16);

    let mut worst_iters = 0;
    let mut all_converged = true;
    let mut ranges = Vec::new();
    let grid = LeafGrid::torus(16).unwrap();
    let shapes: [fn(&[f64]) -> f64; 3] = [
        |x| x[0].cos() * x[1].cos(),
        |x| (x[0] + x[2]).sin() + 0.5 * (x[1] - x[3]).cos(),
        |x| x.iter().map(|v| v.cos()).sum::<f64>() / 2.0,
    ];
    for shape in shapes {
        let density = |a: f64| {
            let raw = BasicField::from_fn(&grid, |x| (a * shape(x)).exp()).unwrap();
            raw.scale(1.0 / raw.mean())
        };
        let (mut lo, mut hi) = (0.0, 4.0);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            let rho = density(mid);
            if rho.min() >= 0.2 && rho.max() <= 5.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let rho = density(lo);
        ranges.push((rho.min(), rho.max()));
        let out = solve_transversal_ma(&rho, &SolverConfig::default(), &BasicField::zeros(&grid)).unwrap();
        all_converged &= out.converged;
        worst_iters = worst_iters.max(out.iterations);
    }

    let analytic = [
        Term {
            c: 0.05,
            p: (Profile::Poisson(2.0), unit(0), 0.3),
            q: (Profile::Bump(0.5), [0.0, 1.0, 1.0, 0.0], 0.0),
        },
        Term { c: 0.025, p: (Profile::Poisson(2.0), [0.0, -1.0, 0.0, 1.0], 1.0), q: (Profile::One, zero, 0.0) },
        Term { c: 0.02, p: (Profile::Cos, [1.0, 1.0, -1.0, 0.0], 0.0), q: (Profile::One, zero, 0.0) },
    ];
    let (err12, _, conv12) = manufactured_solve(&analytic, &map, 12);
    let (err24, _, conv24) = manufactured_solve(&analytic, &map, 24);
    let ratio = err24 / err12;
    let secs = start.elapsed().as_secs_f64();
    let pass = conv16
        && err16 <= 1e-8
        && iters16 <= 10
        && all_converged
        && worst_iters <= 10
        && conv12
        && conv24
        && ratio <= 1e-2
        && secs < 300.0;
    line(
        5,
        "torus Monge-Ampere at N = 16",
        pass,
        &format!(
            "manufactured error {err16:.2e} in {iters16} steps; densities {ranges:.3?} need at most {worst_iters} steps; \
             error N=12 {err12:.2e}, N=24 {err24:.2e}, ratio {ratio:.2e}; {secs:.1} s"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_linearized_operator() {
    let sphere = LeafGrid::sphere(16).unwrap();
    let torus = LeafGrid::torus(12).unwrap();
    let cases: Vec<(Arc<LeafGrid>, BasicField, BasicField)> = vec![
        (
            sphere.clone(),
            BasicField::from_fn(&sphere, |p| 0.08 * p[2] * p[2] + 0.05 * p[0] * p[1]).unwrap(),
            BasicField::from_fn(&sphere, |p| 0.06 * p[0] - 0.04 * p[1] * p[2]).unwrap(),
        ),
        (
            torus.clone(),
            BasicField::from_fn(&torus, |x| 0.15 * x[0].cos() * x[1].cos() + 0.1 * (x[2] + x[3]).sin()).unwrap(),
            BasicField::from_fn(&torus, |x| 0.1 * (x[0] - x[3]).cos() + 0.05 * x[1].sin()).unwrap(),
        ),
    ];
    let mut angle: f64 = 0.0;
    let mut bound = f64::NEG_INFINITY;
    let mut factor: f64 = 0.0;
    for (grid, f1, f2) in &cases {
        let k = dp_kernel_check(f1, f2).unwrap();
        angle = angle.max(k.kernel_angle);
        bound = bound.max(k.spectral_bound);
        let r1 = ma_ratio(f1);
        let r2 = ma_ratio(f2);
        let dp = apply_dp(&f1.try_sub(f2).unwrap(), f1, f2).unwrap();
        for i in 0..grid.len() {
            let lhs = (r1.values()[i] - r2.values()[i]) / r1.values()[i];
            factor = factor.max((lhs - dp.values()[i]).abs());
        }
    }
    let pass = angle <= 1e-6 && bound < 0.0 && factor <= 1e-10;
    line(
        6,
        "D_P kernel, spectrum and factorization",
        pass,
        &format!("kernel angle {angle:.2e}, top of mean-zero spectrum {bound:.3e}, factorization {factor:.2e}"),
    );
    assert!(pass);
}

struct Run {
    name: &'static str,
    out: PipelineOutput,
    grid: Arc<LeafGrid>,
}

fn pipeline_runs() -> &'static Vec<Run> {
    static RUNS: OnceLock<Vec<Run>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let cases: [(&str, &str, usize, f64); 5] = [
            ("hopf2", "y20:0.3", 32, 1.0),
            ("hopf2", "ylm:3,1:0.2", 32, 1.5),
            ("nil3", "cc13:0.3", 16, 1.0),
            ("nil3", "cos:1,1,0,0:0.2", 12, 1.5),
            ("nil3", "cc24:0.1", 12, 1.0),
        ];
        cases
            .iter()
            .map(|&(model_id, psi, res, lee)| {
                let model = if model_id == "nil3" {
                    VaismanModel::nil().unwrap()
                } else {
                    VaismanModel::hopf(2, 2.0).unwrap()
                };
                let grid = if model_id == "nil3" {
                    LeafGrid::torus(res).unwrap()
                } else {
                    LeafGrid::sphere(res).unwrap()
                };
                let spec = PsiSpec::parse(psi).unwrap().build(&model, &grid, lee, psi).unwrap();
                let cfg = PipelineConfig {
                    uniqueness_inits: 3,
                    ..PipelineConfig::default()
                };
                Run {
                    name: psi,
                    out: run_pipeline(&spec, &grid, &cfg).unwrap(),
                    grid,
                }
            })
            .collect()
    })
}

fn check(out: &PipelineOutput, name: &str) -> f64 {
    out.report.checks.iter().find(|c| c.name == name).unwrap().max_residual
}

#[test]
fn criterion_07_pipeline_reconstruction() {
    let runs = pipeline_runs();
    let volume = runs.iter().map(|r| check(&r.out, "volume_match")).fold(0.0, f64::max);
    let lck = runs.iter().map(|r| check(&r.out, "lck")).fold(0.0, f64::max);
    let lee = runs.iter().map(|r| check(&r.out, "lee_class")).fold(0.0, f64::max);
    let names: Vec<&str> = runs.iter().map(|r| r.name).collect();
    let pass = volume <= 1e-6 && lck <= 1e-5 && lee <= 1e-8;
    line(
        7,
        "pipeline on both models",
        pass,
        &format!("runs {names:?}: volume {volume:.2e}, lck {lck:.2e}, loop integrals {lee:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_08_uniqueness() {
    let mut pass = true;
    let mut details = Vec::new();
    for r in pipeline_runs() {
        let u = r.out.report.uniqueness.as_ref().unwrap();
        let tol = match r.grid.kind() {
            GridKind::Sphere(_) => 1e-12,
            GridKind::Torus(_) => 1e-8,
        };
        pass &= u.initializations >= 3
            && u.all_converged
            && u.potential_distance <= tol
            && u.metric_distance <= 1e-7;
        details.push(format!("{} {:.1e}/{:.1e}", r.name, u.potential_distance, u.metric_distance));
    }
    line(
        8,
        "uniqueness over 3 initializations",
        pass,
        &format!("potential/metric distances {}", details.join(", ")),
    );
    assert!(pass);
}

#[test]
fn criterion_09_lee_direction_rigidity() {
    let runs = pipeline_runs();
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for (i, a) in runs.iter().enumerate() {
        worst = worst.max(check(&a.out, "kernel_rigidity"));
        for b in &runs[i + 1..] {
            if a.out.report.model != b.out.report.model {
                continue;
            }
            let pts = verification_points(a.out.structure.model(), &a.grid, 32, 9).unwrap();
            let r = verify_kernel_rigidity(&a.out.structure, &b.out.structure, &pts).unwrap();
            worst = worst.max(r.max);
            pairs += 1;
        }
    }
    // max principal angle is π/2 unless the kernel is 2-dimensional
    let pass = worst <= 1e-6 && pairs >= 2;
    line(
        9,
        "kernel of omega0 + omega0' is the Lee plane",
        pass,
        &format!("max principal angle {worst:.2e} over {pairs} output pairs and each output vs the reference"),
    );
    assert!(pass);
}

fn run_cli(out: &Path, args: &[&str]) -> i32 {
    let status = Command::new(env!("CARGO_BIN_EXE_vaisman-cy"))
        .args(args)
        .arg("--out")
        .arg(out)
        .stderr(std::process::Stdio::null())
        .status()
        .unwrap();
    status.code().unwrap_or(-1)
}

#[test]
fn criterion_10_determinism() {
    let dirs: Vec<_> = (0..4).map(|_| tempfile::tempdir().unwrap()).collect();
    let hopf = ["report", "--model", "hopf2", "--grid", "16", "--seed", "11"];
    let nil = ["solve", "--model", "nil3", "--grid", "8", "--seed", "11"];
    let codes = [
        run_cli(dirs[0].path(), &hopf),
        run_cli(dirs[1].path(), &hopf),
        run_cli(dirs[2].path(), &nil),
        run_cli(dirs[3].path(), &nil),
    ];
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    let mut identical = true;
    for f in ["report_report.json", "f.csv", "density.csv"] {
        identical &= read(&dirs[0], f) == read(&dirs[1], f);
    }
    for f in ["solve_report.json", "f.csv", "density.csv"] {
        identical &= read(&dirs[2], f) == read(&dirs[3], f);
    }
    let pass = codes == [0, 0, 0, 0] && identical;
    line(
        10,
        "bit-identical reports for a fixed seed",
        pass,
        &format!("exit codes {codes:?}, reports and field dumps identical: {identical}"),
    );
    assert!(pass);
}
