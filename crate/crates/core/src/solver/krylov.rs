use nalgebra::{DMatrix, SymmetricEigen};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Outcome of an iterative linear solve.
#[derive(Clone, Debug)]
pub struct KrylovOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// BiCGSTAB for `A x = b` from `x = 0`, stopping at `|r| ≤ tol |b|`.
pub fn bicgstab<A>(apply: A, b: &[f64], tol: f64, max_iters: usize) -> KrylovOutcome
where
    A: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return KrylovOutcome {
            solution: x,
            iterations: 0,
            relative_residual: 0.0,
        };
    }
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut best = (x.clone(), 1.0);
    for it in 1..=max_iters {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        v = apply(&p);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 {
            break;
        }
        alpha = rho / denom;
        let mut s = r.clone();
        axpy(&mut s, -alpha, &v);
        if norm(&s) <= tol * bnorm {
            axpy(&mut x, alpha, &p);
            return KrylovOutcome {
                solution: x,
                iterations: it,
                relative_residual: norm(&s) / bnorm,
            };
        }
        let t = apply(&s);
        let tt = dot(&t, &t);
        omega = if tt == 0.0 { 0.0 } else { dot(&t, &s) / tt };
        axpy(&mut x, alpha, &p);
        axpy(&mut x, omega, &s);
        r = s;
        axpy(&mut r, -omega, &t);
        let rel = norm(&r) / bnorm;
        if rel < best.1 {
            best = (x.clone(), rel);
        }
        if rel <= tol {
            return KrylovOutcome {
                solution: x,
                iterations: it,
                relative_residual: rel,
            };
        }
    }
    KrylovOutcome {
        solution: best.0,
        iterations: max_iters,
        relative_residual: best.1,
    }
}

/// Largest eigenvalue of a symmetric operator on the subspace fixed by
/// `project`, by Lanczos with full reorthogonalization.
pub fn lanczos_max<A, P>(apply: A, project: P, start: Vec<f64>, max_steps: usize, tol: f64) -> f64
where
    A: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&mut Vec<f64>),
{
    let mut q = start;
    project(&mut q);
    let nq = norm(&q);
    q.iter_mut().for_each(|v| *v /= nq);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut last = f64::NAN;
    let mut stable = 0;
    for k in 0..max_steps {
        let mut w = apply(&basis[k]);
        project(&mut w);
        let a = dot(&w, &basis[k]);
        alphas.push(a);
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                axpy(&mut w, -c, b);
            }
            project(&mut w);
        }
        let ritz = tridiagonal_max(&alphas, &betas);
        if (ritz - last).abs() <= tol * ritz.abs().max(1e-300) {
            stable += 1;
            if stable >= 5 {
                return ritz;
            }
        } else {
            stable = 0;
        }
        last = ritz;
        let beta = norm(&w);
        if beta < 1e-13 {
            return ritz;
        }
        betas.push(beta);
        w.iter_mut().for_each(|v| *v /= beta);
        basis.push(w);
    }
    last
}

fn tridiagonal_max(alphas: &[f64], betas: &[f64]) -> f64 {
    let m = alphas.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alphas[i]
        } else if i + 1 == j || j + 1 == i {
            betas[i.min(j)]
        } else {
            0.0
        }
    });
    SymmetricEigen::new(t).eigenvalues.max()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|i| {
                let mut v = 3.0 * x[i];
                if i > 0 {
                    v -= x[i - 1];
                }
                if i + 1 < n {
                    v -= 0.5 * x[i + 1];
                }
                v
            })
            .collect()
    }

    #[test]
    fn bicgstab_solves_nonsymmetric_system() {
        let b: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let out = bicgstab(tridiag, &b, 1e-12, 200);
        let r = tridiag(&out.solution);
        let err: f64 = r.iter().zip(&b).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn lanczos_finds_top_eigenvalue() {
        let diag: Vec<f64> = (0..200).map(|i| -(i as f64) - 1.0).collect();
        let apply = |x: &[f64]| x.iter().zip(&diag).map(|(a, d)| a * d).collect::<Vec<_>>();
        let start = (0..200).map(|i| 1.0 + 0.01 * i as f64).collect();
        let top = lanczos_max(apply, |_| {}, start, 200, 1e-12);
        assert!((top + 1.0).abs() < 1e-8, "{top}");
    }
}
