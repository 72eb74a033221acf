//! Explicit Vaisman model manifolds and their identity checks.
//!
//! Two models are provided: the diagonal Hopf manifold `(C^n \ 0)/⟨z ↦ αz⟩`
//! with closed-form tensors in the linear chart, and a Heisenberg-type
//! nilmanifold with constant tensors in a left-invariant frame. Both expose
//! tensors in their own frame (coordinate frame for Hopf, left-invariant
//! frame for the nilmanifold) through [`VaismanModel`].

mod checks;
mod hopf;
mod nil;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::exterior::{
    apply_complex_structure, apply_complex_structure_inverse, sharp, AlternatingForm,
    LinearComplexStructure, MetricTensor, Vector,
};

pub use checks::*;
pub use hopf::HopfModel;
pub use nil::NilmanifoldModel;

/// A point of a model chart, in the model's coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartPoint {
    pub coords: Vec<f64>,
}

impl ChartPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        Self { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn offset(&self, direction: &[f64], t: f64) -> Self {
        Self {
            coords: self
                .coords
                .iter()
                .zip(direction)
                .map(|(c, d)| c + t * d)
                .collect(),
        }
    }
}

/// The Vaisman package at one point.
#[derive(Clone, Debug)]
pub struct StructureTensors {
    pub metric: MetricTensor,
    pub complex: LinearComplexStructure,
    pub theta: AlternatingForm,
    pub theta_c: AlternatingForm,
    pub lee_field: Vector,
    pub omega: AlternatingForm,
    pub omega0: AlternatingForm,
}

impl StructureTensors {
    /// Completes `θ^c = Iθ`, `θ♯` and `ω = g(I·, ·)` from `(g, I, θ, ω0)`.
    pub fn assemble(
        metric: MetricTensor,
        complex: LinearComplexStructure,
        theta: AlternatingForm,
        omega0: AlternatingForm,
    ) -> Result<Self> {
        let theta_c = apply_complex_structure(&complex, &theta)?;
        let lee_field = sharp(&metric, &theta)?;
        let omega = fundamental_form(&metric, &complex)?;
        Ok(Self {
            metric,
            complex,
            theta,
            theta_c,
            lee_field,
            omega,
            omega0,
        })
    }

    pub fn anti_lee_field(&self) -> Vector {
        self.complex
            .apply(&self.lee_field)
            .expect("lee field has the frame dimension")
    }
}

/// `ω(X, Y) = g(IX, Y)`.
pub fn fundamental_form(
    metric: &MetricTensor,
    complex: &LinearComplexStructure,
) -> Result<AlternatingForm> {
    let mat = complex.matrix().transpose() * metric.matrix();
    AlternatingForm::from_antisymmetric(&mat)
}

/// Sign convention for `d^c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DcConvention {
    /// `d^c = I ∘ d ∘ I^{-1}` for the form action `(Ia)(X…) = a(I^{-1}X…)`;
    /// on functions `d^c f = -df∘I`, `dd^c |z|^2 = 4 dx∧dy`.
    #[default]
    Standard,
    /// The opposite sign, `I^{-1} ∘ d ∘ I`. Only used as a negative control.
    Flipped,
}

/// Which model manifold.
#[derive(Clone, Debug)]
pub enum VaismanModel {
    Hopf(HopfModel),
    Nil(NilmanifoldModel),
}

impl VaismanModel {
    pub fn hopf(n: usize, alpha: f64) -> Result<Self> {
        Ok(Self::Hopf(HopfModel::new(n, alpha)?))
    }

    pub fn nil() -> Result<Self> {
        Ok(Self::Nil(NilmanifoldModel::new()?))
    }

    pub fn name(&self) -> String {
        match self {
            Self::Hopf(h) => format!("hopf{}", h.n()),
            Self::Nil(_) => "nil3".to_string(),
        }
    }

    pub fn complex_dim(&self) -> usize {
        match self {
            Self::Hopf(h) => h.n(),
            Self::Nil(_) => 3,
        }
    }

    pub fn real_dim(&self) -> usize {
        2 * self.complex_dim()
    }

    pub fn complex_structure(&self) -> &LinearComplexStructure {
        match self {
            Self::Hopf(h) => h.complex_structure(),
            Self::Nil(n) => n.complex_structure(),
        }
    }

    pub fn validate(&self, p: &ChartPoint) -> Result<()> {
        if p.dim() != self.real_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.real_dim(),
                found: p.dim(),
            });
        }
        if p.coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::OutsideChart("non-finite coordinate".into()));
        }
        match self {
            Self::Hopf(h) => h.validate(p),
            Self::Nil(_) => Ok(()),
        }
    }

    pub fn structure(&self, p: &ChartPoint) -> Result<StructureTensors> {
        self.validate(p)?;
        match self {
            Self::Hopf(h) => h.structure(p),
            Self::Nil(n) => n.structure(),
        }
    }

    /// Default finite-difference step `1e-4 (1 + |p|)`.
    pub fn default_step(&self, p: &ChartPoint) -> f64 {
        1e-4 * (1.0 + p.norm())
    }

    /// Coordinate velocity of the frame vector `v` at `p`.
    pub fn frame_to_coordinates(&self, p: &ChartPoint, v: &Vector) -> Vec<f64> {
        match self {
            Self::Hopf(_) => v.comps().to_vec(),
            Self::Nil(n) => n.frame_to_coordinates(p, v),
        }
    }

    /// Frame components of the coordinate velocity `v` at `p`.
    pub fn coordinates_to_frame(&self, p: &ChartPoint, v: &[f64]) -> Result<Vector> {
        let mut a = v.to_vec();
        if let Self::Nil(_) = self {
            a[5] = v[5] - p.coords[0] * v[1] - p.coords[2] * v[3];
        }
        Vector::new(a)
    }

    /// Exterior derivative of a form field, in the model frame.
    ///
    /// Hopf: central differences in the linear chart. Nilmanifold: central
    /// differences of the coefficients along the frame fields plus the exact
    /// Chevalley-Eilenberg differential of the frame forms.
    pub fn exterior_derivative<F>(&self, field: F, p: &ChartPoint, h: f64) -> Result<AlternatingForm>
    where
        F: Fn(&ChartPoint) -> Result<AlternatingForm>,
    {
        self.validate(p)?;
        match self {
            Self::Hopf(_) => numerical_exterior_derivative(field, p, h),
            Self::Nil(n) => n.exterior_derivative(field, p, h),
        }
    }

    /// `d^c` of a 1-form field.
    pub fn dc<F>(
        &self,
        field: F,
        p: &ChartPoint,
        h: f64,
        convention: DcConvention,
    ) -> Result<AlternatingForm>
    where
        F: Fn(&ChartPoint) -> Result<AlternatingForm>,
    {
        let j = self.complex_structure();
        match convention {
            DcConvention::Standard => {
                let inner = |q: &ChartPoint| apply_complex_structure_inverse(j, &field(q)?);
                apply_complex_structure(j, &self.exterior_derivative(inner, p, h)?)
            }
            DcConvention::Flipped => {
                let inner = |q: &ChartPoint| apply_complex_structure(j, &field(q)?);
                apply_complex_structure_inverse(j, &self.exterior_derivative(inner, p, h)?)
            }
        }
    }

    /// Uniform sample from a fundamental domain.
    pub fn sample_point<R: Rng>(&self, rng: &mut R) -> ChartPoint {
        match self {
            Self::Hopf(h) => h.sample_point(rng),
            Self::Nil(n) => n.sample_point(rng),
        }
    }

    /// Leaf-space image of a chart point.
    pub fn leaf_project(&self, p: &ChartPoint) -> Result<Vec<f64>> {
        self.validate(p)?;
        Ok(match self {
            Self::Hopf(h) => h.leaf_project(p),
            Self::Nil(n) => n.leaf_project(p),
        })
    }

    /// A chart point over the given leaf-space point.
    pub fn leaf_lift(&self, leaf: &[f64]) -> Result<ChartPoint> {
        match self {
            Self::Hopf(h) => h.leaf_lift(leaf),
            Self::Nil(n) => n.leaf_lift(leaf),
        }
    }

    /// Segments `p → γ p` for generators `γ` of the deck group; each closes
    /// up to a loop in the compact quotient.
    pub fn generating_loops(&self, p: &ChartPoint) -> Vec<(ChartPoint, ChartPoint)> {
        match self {
            Self::Hopf(h) => h.generating_loops(p),
            Self::Nil(n) => n.generating_loops(p),
        }
    }

    /// Integrate the flow of a frame vector field for time `t` with `steps`
    /// classical Runge-Kutta steps.
    pub fn flow<F>(&self, field: F, p: &ChartPoint, t: f64, steps: usize) -> Result<ChartPoint>
    where
        F: Fn(&ChartPoint) -> Result<Vector>,
    {
        let dt = t / steps as f64;
        let velocity = |q: &ChartPoint| -> Result<Vec<f64>> {
            let v = field(q)?;
            Ok(self.frame_to_coordinates(q, &v))
        };
        let mut q = p.clone();
        for _ in 0..steps {
            let k1 = velocity(&q)?;
            let k2 = velocity(&q.offset(&k1, 0.5 * dt))?;
            let k3 = velocity(&q.offset(&k2, 0.5 * dt))?;
            let k4 = velocity(&q.offset(&k3, dt))?;
            let incr: Vec<f64> = (0..q.dim())
                .map(|i| (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0)
                .collect();
            q = q.offset(&incr, dt);
        }
        Ok(q)
    }

    /// Flow of the reference Lee field (`anti = false`) or anti-Lee field.
    pub fn lee_flow(&self, p: &ChartPoint, t: f64, anti: bool) -> Result<ChartPoint> {
        self.flow(
            |q| {
                let st = self.structure(q)?;
                Ok(if anti { st.anti_lee_field() } else { st.lee_field })
            },
            p,
            t,
            (64.0 * t.abs()).ceil().max(8.0) as usize,
        )
    }
}

/// Central-difference exterior derivative in a coordinate frame.
///
/// Converges at order `h^2` for smooth coefficient functions.
pub fn numerical_exterior_derivative<F>(field: F, p: &ChartPoint, h: f64) -> Result<AlternatingForm>
where
    F: Fn(&ChartPoint) -> Result<AlternatingForm>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    let m = p.dim();
    let mut out: Option<AlternatingForm> = None;
    for a in 0..m {
        let mut dir = vec![0.0; m];
        dir[a] = 1.0;
        let plus = field(&p.offset(&dir, h))?;
        let minus = field(&p.offset(&dir, -h))?;
        let partial = (&plus - &minus).scale(0.5 / h);
        let term = AlternatingForm::basis(m, &[a])?.wedge(&partial)?;
        out = Some(match out {
            None => term,
            Some(acc) => &acc + &term,
        });
    }
    out.ok_or_else(|| Error::InvalidArgument("empty chart".into()))
}

/// Matrix of partial derivatives `D[(i, a)] = ∂_a v_i` by central differences.
pub(crate) fn jacobian_fd<F>(field: F, p: &ChartPoint, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&ChartPoint) -> Result<Vec<f64>>,
{
    let m = p.dim();
    let mut cols = Vec::with_capacity(m);
    for a in 0..m {
        let mut dir = vec![0.0; m];
        dir[a] = 1.0;
        let plus = field(&p.offset(&dir, h))?;
        let minus = field(&p.offset(&dir, -h))?;
        cols.push(
            plus.iter()
                .zip(&minus)
                .map(|(x, y)| (x - y) / (2.0 * h))
                .collect::<Vec<_>>(),
        );
    }
    let rows = cols[0].len();
    Ok(DMatrix::from_fn(rows, m, |i, a| cols[a][i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn d_of_constant_form_vanishes() {
        let p = ChartPoint::new(vec![0.3, -0.2, 0.7]);
        let c = AlternatingForm::one_form(&[1.0, 2.0, 3.0]).unwrap();
        let d = numerical_exterior_derivative(|_| Ok(c.clone()), &p, 1e-4).unwrap();
        assert!(d.max_abs() < 1e-12);
    }

    #[test]
    fn d_of_x_dy() {
        let p = ChartPoint::new(vec![0.4, 1.3]);
        let d = numerical_exterior_derivative(
            |q| AlternatingForm::one_form(&[0.0, q.coords[0]]),
            &p,
            1e-4,
        )
        .unwrap();
        assert!((d.coeffs()[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn d_squared_vanishes() {
        let p = ChartPoint::new(vec![0.4, 1.3, -0.5]);
        let field = |q: &ChartPoint| {
            let (x, y, z) = (q.coords[0], q.coords[1], q.coords[2]);
            AlternatingForm::one_form(&[(x * y).sin(), z * z * x, (y + z).cos()])
        };
        let dd = numerical_exterior_derivative(
            |q| numerical_exterior_derivative(field, q, 1e-3),
            &p,
            1e-3,
        )
        .unwrap();
        assert!(dd.max_abs() < 1e-6, "{dd:?}");
    }

    #[test]
    fn nonpositive_step_rejected() {
        let p = ChartPoint::new(vec![0.0, 0.0]);
        let r = numerical_exterior_derivative(|_| AlternatingForm::zero(2, 1), &p, 0.0);
        assert!(r.is_err());
    }
}
