//! From a prescribed volume form and Lee class to the reconstructed Vaisman
//! structure, with verification.
//!
//! The prescribed volume is `V' = e^ψ ω_ref^n` with `ψ` basic and the Lee class
//! is `c [θ]`. With `f` solving the transversal equation for the normalized
//! density and `F = f∘π`:
//! `θ' = c (θ - dF)`, `ω0' = d^c θ' = c (ω0 + dd^c F)`, `ω' = ω0' + θ'∧θ'^c`,
//! `g'(X, Y) = ω'(X, I Y)`.

mod verify;

use std::fmt;
use std::sync::Arc;

use nalgebra::SymmetricEigen;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use verify::*;

use crate::error::{Error, Result};
use crate::exterior::{apply_complex_structure, top_ratio, AlternatingForm, MetricTensor};
use crate::leafspace::{
    convention_constant, positivity_margin, BasicField, GridKind, Interpolant, LeafGrid,
};
use crate::models::{ChartPoint, StructureTensors, VaismanModel};

/// Largest admissible drift of `ψ` along the Lee and anti-Lee flows.
pub const BASIC_TOLERANCE: f64 = 1e-6;

/// Agreement required between the density and the contraction oracle.
pub const CONTRACTION_TOLERANCE: f64 = 1e-8;

/// Random points on which reconstructed metrics are tested for positivity.
pub const POSITIVITY_SAMPLES: usize = 1000;

pub type ChartFunction = Arc<dyn Fn(&ChartPoint) -> Result<f64> + Send + Sync>;

/// Prescribed volume `e^ψ ω_ref^n` and Lee class `lee_scale · [θ_ref]`.
#[derive(Clone)]
pub struct VolumeSpec {
    pub model: VaismanModel,
    psi: ChartFunction,
    pub lee_scale: f64,
    pub label: String,
}

impl fmt::Debug for VolumeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VolumeSpec")
            .field("model", &self.model.name())
            .field("label", &self.label)
            .field("lee_scale", &self.lee_scale)
            .finish()
    }
}

impl VolumeSpec {
    pub fn new<F>(model: VaismanModel, psi: F, lee_scale: f64, label: &str) -> Result<Self>
    where
        F: Fn(&ChartPoint) -> Result<f64> + Send + Sync + 'static,
    {
        if !(lee_scale > 0.0) || !lee_scale.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "Lee scale must be positive, got {lee_scale}"
            )));
        }
        Ok(Self {
            model,
            psi: Arc::new(psi),
            lee_scale,
            label: label.to_string(),
        })
    }

    /// `ψ = φ∘π` for a function `φ` on the leaf space.
    pub fn from_leaf_fn<F>(model: VaismanModel, phi: F, lee_scale: f64, label: &str) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        let m = model.clone();
        Self::new(model, move |p| Ok(phi(&m.leaf_project(p)?)), lee_scale, label)
    }

    /// `ψ` given by its values on a leaf grid.
    pub fn from_field(model: VaismanModel, field: &BasicField, lee_scale: f64, label: &str) -> Result<Self> {
        check_grid_matches(&model, field.grid())?;
        let interp = field.interpolant();
        Self::from_leaf_fn(model, move |x| interp.value(x), lee_scale, label)
    }

    /// Constant `ψ = 0`.
    pub fn reference(model: VaismanModel, lee_scale: f64) -> Result<Self> {
        Self::new(model, |_| Ok(0.0), lee_scale, "zero")
    }

    pub fn psi_at(&self, p: &ChartPoint) -> Result<f64> {
        (self.psi)(p)
    }

    /// The same spec with `ψ` shifted by `log s`, i.e. `V'` scaled by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s > 0.0) {
            return Err(Error::InvalidArgument("volume scale must be positive".into()));
        }
        let psi = self.psi.clone();
        let shift = s.ln();
        Self::new(
            self.model.clone(),
            move |p| Ok(psi(p)? + shift),
            self.lee_scale,
            &format!("{}*{s}", self.label),
        )
    }
}

/// A function that varies along the fibers of the canonical foliation,
/// with its frame gradient: `Re z1 / r` on Hopf, `sin s` on the nilmanifold.
pub fn fiber_function(model: &VaismanModel, p: &ChartPoint) -> (f64, Vec<f64>) {
    let x = &p.coords;
    match model {
        VaismanModel::Hopf(_) => {
            let r = p.norm();
            let grad = (0..x.len())
                .map(|a| if a == 0 { 1.0 / r } else { 0.0 } - x[0] * x[a] / (r * r * r))
                .collect();
            (x[0] / r, grad)
        }
        VaismanModel::Nil(_) => {
            let mut grad = vec![0.0; 6];
            grad[4] = x[4].cos();
            (x[4].sin(), grad)
        }
    }
}

/// Leaf grid of the right kind for `model`.
pub fn leaf_grid_for(model: &VaismanModel, resolution: usize) -> Result<Arc<LeafGrid>> {
    match model {
        VaismanModel::Hopf(h) if h.n() == 2 => LeafGrid::sphere(resolution),
        VaismanModel::Hopf(_) => Err(Error::InvalidArgument(
            "the reconstruction pipeline supports hopf2 and nil3".into(),
        )),
        VaismanModel::Nil(_) => LeafGrid::torus(resolution),
    }
}

pub(crate) fn check_grid_matches(model: &VaismanModel, grid: &LeafGrid) -> Result<()> {
    let ok = match (model, grid.kind()) {
        (VaismanModel::Hopf(h), GridKind::Sphere(_)) => h.n() == 2,
        (VaismanModel::Nil(_), GridKind::Torus(_)) => true,
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{} grid does not match model {}",
            grid.name(),
            model.name()
        )))
    }
}

/// Largest drift `|ψ(φ_t p) - ψ(p)|` along the Lee and anti-Lee flows.
pub fn basic_drift(model: &VaismanModel, psi: &dyn Fn(&ChartPoint) -> Result<f64>, points: &[ChartPoint]) -> Result<f64> {
    let mut drift: f64 = 0.0;
    for p in points {
        let base = psi(p)?;
        for anti in [false, true] {
            for t in [0.37, -0.81] {
                let q = model.lee_flow(p, t, anti)?;
                drift = drift.max((psi(&q)? - base).abs());
            }
        }
    }
    Ok(drift)
}

/// The chart point over grid node `i`.
pub(crate) fn node_point(model: &VaismanModel, grid: &LeafGrid, i: usize) -> Result<ChartPoint> {
    model.leaf_lift(&grid.leaf_point(i))
}

/// Density of the transversal volume and the worst deviation from the
/// contraction oracle `i_{Iθ♯} i_{θ♯}(e^ψ ω^n) / (n ω0^{n-1})`.
pub(crate) fn transversal_volume_checked(spec: &VolumeSpec, grid: &Arc<LeafGrid>) -> Result<(BasicField, f64)> {
    let model = &spec.model;
    check_grid_matches(model, grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let probes: Vec<ChartPoint> = (0..12).map(|_| model.sample_point(&mut rng)).collect();
    let drift = basic_drift(model, &|p| spec.psi_at(p), &probes)?;
    if drift > BASIC_TOLERANCE {
        return Err(Error::NotBasic(drift));
    }
    let values = (0..grid.len())
        .map(|i| Ok(spec.psi_at(&node_point(model, grid, i)?)?.exp()))
        .collect::<Result<Vec<f64>>>()?;
    let density = BasicField::new(grid, values)?;
    grid.check_aliasing(density.values())?;

    let n = model.complex_dim();
    let stride = (grid.len() / 24).max(1);
    let mut worst: f64 = 0.0;
    for i in (0..grid.len()).step_by(stride) {
        let p = node_point(model, grid, i)?;
        let st = model.structure(&p)?;
        let volume = st.omega.power(n)?.scale(spec.psi_at(&p)?.exp());
        let lhs = volume.interior(&st.lee_field)?.interior(&st.anti_lee_field())?;
        let rhs = st.omega0.power(n - 1)?.scale(n as f64);
        let ratio = coefficient_ratio(&lhs, &rhs)?;
        let value = density.values()[i];
        worst = worst.max((ratio - value).abs() / value.max(1.0));
    }
    Ok((density, worst))
}

/// `a / b` for proportional forms, by least squares on coefficients.
fn coefficient_ratio(a: &AlternatingForm, b: &AlternatingForm) -> Result<f64> {
    let bb: f64 = b.coeffs().iter().map(|x| x * x).sum();
    if bb == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(a.coeffs().iter().zip(b.coeffs()).map(|(x, y)| x * y).sum::<f64>() / bb)
}

/// The density `e^ψ` of `V0' / ω0^{n-1}` on the grid, cross-checked against
/// the exterior contraction.
pub fn transversal_volume(spec: &VolumeSpec, grid: &Arc<LeafGrid>) -> Result<BasicField> {
    let (density, worst) = transversal_volume_checked(spec, grid)?;
    if worst > CONTRACTION_TOLERANCE {
        return Err(Error::InvalidArgument(format!(
            "density disagrees with the contraction oracle by {worst:.3e}"
        )));
    }
    Ok(density)
}

/// Rescale to `∫ρ = area`; returns the density and the applied constant.
pub fn normalize_volume(density: &BasicField) -> Result<(BasicField, f64)> {
    let total = density.grid().integrate(density.values());
    if !(total > 0.0) {
        return Err(Error::NonPositiveDensity(total));
    }
    let k = density.grid().area() / total;
    Ok((density.scale(k), k))
}

/// Negative controls that break the hypotheses of the construction.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Control {
    None,
    /// `F += ε φ` with `φ` from [`fiber_function`].
    NonBasic(f64),
    /// `θ'` multiplied by a factor.
    LeeFactor(f64),
}

/// The reconstructed structure, evaluated on demand.
#[derive(Clone)]
pub struct VaismanStructureNumeric {
    model: VaismanModel,
    f: BasicField,
    lee_scale: f64,
    potential: Interpolant,
    control: Control,
}

impl fmt::Debug for VaismanStructureNumeric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VaismanStructureNumeric")
            .field("model", &self.model.name())
            .field("lee_scale", &self.lee_scale)
            .field("control", &self.control)
            .finish()
    }
}

/// Build `(g', θ', ω', ω0')` from the potential `f` and the Lee scale.
///
/// Fails if `ω0 + dd^c f` is not positive on the grid or if `g'` is not
/// positive definite at one of [`POSITIVITY_SAMPLES`] random points.
pub fn reconstruct(model: &VaismanModel, f: &BasicField, lee_scale: f64) -> Result<VaismanStructureNumeric> {
    check_grid_matches(model, f.grid())?;
    if !(lee_scale > 0.0) || !lee_scale.is_finite() {
        return Err(Error::InvalidArgument(format!("Lee scale must be positive, got {lee_scale}")));
    }
    let margin = positivity_margin(f);
    if !(margin > 0.0) {
        return Err(Error::NonPositiveBackground(margin));
    }
    let s = VaismanStructureNumeric {
        model: model.clone(),
        f: f.clone(),
        lee_scale,
        potential: f.interpolant(),
        control: Control::None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for _ in 0..POSITIVITY_SAMPLES {
        s.structure_at(&model.sample_point(&mut rng))?;
    }
    Ok(s)
}

impl VaismanStructureNumeric {
    pub fn model(&self) -> &VaismanModel {
        &self.model
    }

    pub fn potential(&self) -> &BasicField {
        &self.f
    }

    pub fn lee_scale(&self) -> f64 {
        self.lee_scale
    }

    /// Negative control: add `ε φ` to `F` for a function `φ` that is not basic.
    pub fn with_non_basic_control(mut self, amplitude: f64) -> Self {
        self.control = Control::NonBasic(amplitude);
        self
    }

    /// Negative control: multiply `θ'` by `factor`.
    pub fn with_lee_factor(mut self, factor: f64) -> Self {
        self.control = Control::LeeFactor(factor);
        self
    }

    /// `(dF, dd^c F)` in the model frame at `p`.
    pub fn potential_jet(&self, p: &ChartPoint) -> Result<(AlternatingForm, AlternatingForm)> {
        let (mut df, mut ddc) = self.basic_jet(p)?;
        if let Control::NonBasic(eps) = self.control {
            let complex = self.model.complex_structure();
            let h = 1e-4;
            let extra = self.model.exterior_derivative(
                |q| apply_complex_structure(complex, &AlternatingForm::one_form(&fiber_function(&self.model, q).1)?),
                p,
                h,
            )?;
            let grad = AlternatingForm::one_form(&fiber_function(&self.model, p).1)?;
            df = &df + &grad.scale(eps);
            ddc = &ddc + &extra.scale(eps);
        }
        Ok((df, ddc))
    }

    fn basic_jet(&self, p: &ChartPoint) -> Result<(AlternatingForm, AlternatingForm)> {
        let leaf = self.model.leaf_project(p)?;
        match (&self.model, &self.potential) {
            (VaismanModel::Hopf(h), Interpolant::Sphere { grid, coeffs }) => {
                let sample = grid.evaluate(coeffs, &leaf);
                let jac = h.leaf_jacobian(p)?;
                let df: Vec<f64> = (0..4)
                    .map(|a| (0..3).map(|k| sample.gradient[k] * jac[(k, a)]).sum())
                    .collect();
                let omega0 = self.model.structure(p)?.omega0;
                Ok((
                    AlternatingForm::one_form(&df)?,
                    omega0.scale(convention_constant() * sample.laplacian),
                ))
            }
            (VaismanModel::Nil(nil), Interpolant::Torus(t)) => {
                let sample = t.evaluate(&leaf);
                let complex = nil.complex_structure();
                let mut df = vec![0.0; 6];
                df[..4].copy_from_slice(&sample.gradient);
                let df = AlternatingForm::one_form(&df)?;
                let dcf = apply_complex_structure(complex, &df)?;
                let mut ddc = nil.ce_differential(&dcf)?;
                for j in 0..4 {
                    let mut row = vec![0.0; 6];
                    row[..4].copy_from_slice(&sample.hessian[j]);
                    let partial = apply_complex_structure(complex, &AlternatingForm::one_form(&row)?)?;
                    ddc = &ddc + &AlternatingForm::basis(6, &[j])?.wedge(&partial)?;
                }
                Ok((df, ddc))
            }
            _ => Err(Error::InvalidArgument("potential grid does not match the model".into())),
        }
    }

    /// The reconstructed package at `p`; `theta`, `omega0`, `omega` are
    /// `θ'`, `ω0'`, `ω'`.
    pub fn structure_at(&self, p: &ChartPoint) -> Result<StructureTensors> {
        let st = self.model.structure(p)?;
        let (df, ddc) = self.potential_jet(p)?;
        let c = self.lee_scale;
        let mut theta = (&st.theta - &df).scale(c);
        if let Control::LeeFactor(k) = self.control {
            theta = theta.scale(k);
        }
        let omega0 = (&st.omega0 + &ddc).scale(c);
        let theta_c = apply_complex_structure(&st.complex, &theta)?;
        let omega = &omega0 + &theta.wedge(&theta_c)?;
        let g = -(st.complex.matrix().transpose() * omega.to_antisymmetric()?);
        let g = 0.5 * (&g + g.transpose());
        let min = SymmetricEigen::new(g.clone()).eigenvalues.min();
        if !(min > 0.0) {
            return Err(Error::IndefiniteMetric(min));
        }
        StructureTensors::assemble(MetricTensor::new(g)?, st.complex.clone(), theta, omega0)
    }

    /// `(ω')^n / ω_ref^n` at `p`.
    pub fn volume_ratio(&self, p: &ChartPoint) -> Result<f64> {
        let n = self.model.complex_dim();
        let new = self.structure_at(p)?.omega.power(n)?;
        let reference = self.model.structure(p)?.omega.power(n)?;
        top_ratio(&new, &reference)
    }
}
