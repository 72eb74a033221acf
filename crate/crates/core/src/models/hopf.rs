use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{ChartPoint, StructureTensors};
use crate::error::{Error, Result};
use crate::exterior::{apply_complex_structure, AlternatingForm, LinearComplexStructure, MetricTensor};

/// Squared radius below which chart points are rejected.
pub const MIN_RADIUS_SQUARED: f64 = 1e-6;

/// Diagonal Hopf manifold `(C^n \ 0)/⟨z ↦ αz⟩`, `α > 1` real.
///
/// Real chart coordinates are `(x1, y1, …, xn, yn)` with `z_k = x_k + i y_k`
/// and `I ∂x_k = ∂y_k`. In these coordinates
/// `θ = -d log r²`, `g = 4 r⁻² g_euc`, `ω = 4 r⁻² ω_euc`, `ω0 = dd^c log r²`.
#[derive(Clone, Debug)]
pub struct HopfModel {
    n: usize,
    alpha: f64,
    complex: LinearComplexStructure,
}

impl HopfModel {
    pub fn new(n: usize, alpha: f64) -> Result<Self> {
        if !(2..=3).contains(&n) {
            return Err(Error::InvalidArgument(format!(
                "Hopf model supports complex dimension 2 or 3, got {n}"
            )));
        }
        if !(alpha > 1.0) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("deck factor must exceed 1, got {alpha}")));
        }
        Ok(Self {
            n,
            alpha,
            complex: LinearComplexStructure::standard(2 * n)?,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn complex_structure(&self) -> &LinearComplexStructure {
        &self.complex
    }

    pub(super) fn validate(&self, p: &ChartPoint) -> Result<()> {
        let r2 = radius_squared(p);
        if r2 < MIN_RADIUS_SQUARED {
            return Err(Error::OutsideChart(format!("r² = {r2:.3e} too close to the origin")));
        }
        Ok(())
    }

    pub(super) fn structure(&self, p: &ChartPoint) -> Result<StructureTensors> {
        let m = 2 * self.n;
        let r2 = radius_squared(p);
        let metric = MetricTensor::new(DMatrix::identity(m, m) * (4.0 / r2))?;
        let theta_coeffs: Vec<f64> = p.coords.iter().map(|x| -2.0 * x / r2).collect();
        let theta = AlternatingForm::one_form(&theta_coeffs)?;
        let omega0 = self.ddc_log_r2(p)?;
        StructureTensors::assemble(metric, self.complex.clone(), theta, omega0)
    }

    /// Closed form `dd^c log r² = 4 ω_euc / r² - dr² ∧ d^c r² / r⁴`.
    fn ddc_log_r2(&self, p: &ChartPoint) -> Result<AlternatingForm> {
        let m = 2 * self.n;
        let r2 = radius_squared(p);
        let dr2 = AlternatingForm::one_form(&p.coords.iter().map(|x| 2.0 * x).collect::<Vec<_>>())?;
        let dcr2 = apply_complex_structure(&self.complex, &dr2)?;
        let mut euc = AlternatingForm::zero(m, 2)?;
        for k in 0..self.n {
            euc = &euc + &AlternatingForm::basis(m, &[2 * k, 2 * k + 1])?;
        }
        Ok(&euc.scale(4.0 / r2) - &dr2.wedge(&dcr2)?.scale(1.0 / (r2 * r2)))
    }

    /// Kähler form `dd^c r² = 4 ω_euc` of the cover.
    pub fn cover_kahler_form(&self) -> Result<AlternatingForm> {
        let m = 2 * self.n;
        let mut euc = AlternatingForm::zero(m, 2)?;
        for k in 0..self.n {
            euc = &euc + &AlternatingForm::basis(m, &[2 * k, 2 * k + 1])?;
        }
        Ok(euc.scale(4.0))
    }

    /// Uniform direction, radius uniform in `[1, α)`.
    pub(super) fn sample_point<R: Rng>(&self, rng: &mut R) -> ChartPoint {
        let m = 2 * self.n;
        let dir: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        let r = rng.gen_range(1.0..self.alpha);
        ChartPoint::new(dir.iter().map(|x| x * r / norm).collect())
    }

    /// `n = 2`: the Hopf map onto the unit sphere,
    /// `(2 Re z1 z̄2, 2 Im z1 z̄2, |z1|² - |z2|²) / r²`.
    /// `n = 3`: the real coordinates of the projector `z z̄ᵀ / r²`.
    pub(super) fn leaf_project(&self, p: &ChartPoint) -> Vec<f64> {
        let r2 = radius_squared(p);
        let z: Vec<(f64, f64)> = (0..self.n).map(|k| (p.coords[2 * k], p.coords[2 * k + 1])).collect();
        // z_a z̄_b
        let prod = |a: usize, b: usize| {
            let (xa, ya) = z[a];
            let (xb, yb) = z[b];
            (xa * xb + ya * yb, ya * xb - xa * yb)
        };
        if self.n == 2 {
            let (re, im) = prod(0, 1);
            let n0 = z[0].0 * z[0].0 + z[0].1 * z[0].1;
            let n1 = z[1].0 * z[1].0 + z[1].1 * z[1].1;
            vec![2.0 * re / r2, 2.0 * im / r2, (n0 - n1) / r2]
        } else {
            let mut out = Vec::with_capacity(self.n * self.n);
            for a in 0..self.n {
                out.push(prod(a, a).0 / r2);
            }
            for a in 0..self.n {
                for b in a + 1..self.n {
                    let (re, im) = prod(a, b);
                    out.push(re / r2);
                    out.push(im / r2);
                }
            }
            out
        }
    }

    /// Unit-radius lift of a point of the unit sphere (`n = 2`).
    pub(super) fn leaf_lift(&self, leaf: &[f64]) -> Result<ChartPoint> {
        if self.n != 2 || leaf.len() != 3 {
            return Err(Error::InvalidArgument(
                "leaf lift is implemented for the Hopf surface (points of S²)".into(),
            ));
        }
        let norm = leaf.iter().map(|x| x * x).sum::<f64>().sqrt();
        let colat = (leaf[2] / norm).clamp(-1.0, 1.0).acos();
        let lon = leaf[1].atan2(leaf[0]);
        let (c, s) = ((0.5 * colat).cos(), (0.5 * colat).sin());
        Ok(ChartPoint::new(vec![c, 0.0, s * lon.cos(), -s * lon.sin()]))
    }

    /// Jacobian `∂π_k/∂x_a` (3×4) of the Hopf map of [`Self::leaf_project`] (`n = 2`).
    pub fn leaf_jacobian(&self, p: &ChartPoint) -> Result<DMatrix<f64>> {
        if self.n != 2 {
            return Err(Error::InvalidArgument("leaf Jacobian needs the Hopf surface".into()));
        }
        let x = &p.coords;
        let r2 = radius_squared(p);
        let num = [
            2.0 * (x[0] * x[2] + x[1] * x[3]),
            2.0 * (x[1] * x[2] - x[0] * x[3]),
            x[0] * x[0] + x[1] * x[1] - x[2] * x[2] - x[3] * x[3],
        ];
        let grad = [
            [2.0 * x[2], 2.0 * x[3], 2.0 * x[0], 2.0 * x[1]],
            [-2.0 * x[3], 2.0 * x[2], 2.0 * x[1], -2.0 * x[0]],
            [2.0 * x[0], 2.0 * x[1], -2.0 * x[2], -2.0 * x[3]],
        ];
        Ok(DMatrix::from_fn(3, 4, |k, a| {
            grad[k][a] / r2 - num[k] * 2.0 * x[a] / (r2 * r2)
        }))
    }

    pub(super) fn generating_loops(&self, p: &ChartPoint) -> Vec<(ChartPoint, ChartPoint)> {
        let end = ChartPoint::new(p.coords.iter().map(|x| x * self.alpha).collect());
        vec![(p.clone(), end)]
    }
}

pub(crate) fn radius_squared(p: &ChartPoint) -> f64 {
    p.coords.iter().map(|x| x * x).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::{form_norm, pullback_linear};
    use crate::models::VaismanModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lee_form_has_unit_length() {
        let model = VaismanModel::hopf(2, 2.0).unwrap();
        let st = model.structure(&ChartPoint::new(vec![1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!((form_norm(&st.metric, &st.theta).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lee_form_matches_fd_of_log_r2() {
        let model = VaismanModel::hopf(2, 2.0).unwrap();
        let p = ChartPoint::new(vec![1.0, 0.0, 0.0, 0.0]);
        let st = model.structure(&p).unwrap();
        let h = 1e-5;
        for a in 0..4 {
            let mut dir = vec![0.0; 4];
            dir[a] = 1.0;
            let f = |q: &ChartPoint| radius_squared(q).ln();
            let fd = -(f(&p.offset(&dir, h)) - f(&p.offset(&dir, -h))) / (2.0 * h);
            assert!((st.theta.coeffs()[a] - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn closed_forms_of_metric_and_lee_field() {
        let model = VaismanModel::hopf(3, 1.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let p = model.sample_point(&mut rng);
            let r2 = radius_squared(&p);
            let st = model.structure(&p).unwrap();
            for (l, x) in st.lee_field.comps().iter().zip(&p.coords) {
                assert!((l + 0.5 * x).abs() < 1e-14);
            }
            let euc: Vec<f64> = (0..3)
                .map(|k| st.omega.get(&[2 * k, 2 * k + 1]) * r2 / 4.0)
                .collect();
            assert!(euc.iter().all(|v| (v - 1.0).abs() < 1e-13));
            assert!(r2 >= 1.0 && r2 < 1.7 * 1.7);
        }
    }

    #[test]
    fn origin_rejected() {
        let model = VaismanModel::hopf(2, 2.0).unwrap();
        let r = model.structure(&ChartPoint::new(vec![1e-4, 0.0, 0.0, 0.0]));
        assert!(matches!(r, Err(Error::OutsideChart(_))));
        assert!(HopfModel::new(2, 1.0).is_err());
        assert!(HopfModel::new(4, 2.0).is_err());
    }

    #[test]
    fn structure_descends_to_quotient() {
        let alpha = 2.0;
        let model = VaismanModel::hopf(2, alpha).unwrap();
        let gamma = DMatrix::identity(4, 4) * alpha;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let p = model.sample_point(&mut rng);
            let q = ChartPoint::new(p.coords.iter().map(|x| alpha * x).collect());
            let sp = model.structure(&p).unwrap();
            let sq = model.structure(&q).unwrap();
            let omega = pullback_linear(&gamma, &sq.omega).unwrap();
            let theta = pullback_linear(&gamma, &sq.theta).unwrap();
            assert!((&omega - &sp.omega).max_abs() < 1e-13);
            assert!((&theta - &sp.theta).max_abs() < 1e-13);
            let g = gamma.transpose() * sq.metric.matrix() * &gamma;
            assert!((g - sp.metric.matrix()).amax() < 1e-13);
        }
    }

    #[test]
    fn leaf_jacobian_matches_fd() {
        let model = HopfModel::new(2, 2.0).unwrap();
        let p = ChartPoint::new(vec![0.6, -0.3, 0.5, 0.9]);
        let jac = model.leaf_jacobian(&p).unwrap();
        let fd = crate::models::jacobian_fd(|q| Ok(model.leaf_project(q)), &p, 1e-6).unwrap();
        assert!((jac - fd).amax() < 1e-8);
    }

    #[test]
    fn leaf_projection_conventions() {
        let model = VaismanModel::hopf(2, 2.0).unwrap();
        let p = ChartPoint::new(vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(model.leaf_project(&p).unwrap(), vec![0.0, 0.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let p = model.sample_point(&mut rng);
            let q = ChartPoint::new(p.coords.iter().map(|x| 2.0 * x).collect());
            let a = model.leaf_project(&p).unwrap();
            let b = model.leaf_project(&q).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-14));
            let lifted = model.leaf_lift(&a).unwrap();
            let c = model.leaf_project(&lifted).unwrap();
            assert!(a.iter().zip(&c).all(|(x, y)| (x - y).abs() < 1e-12));
        }
    }
}
