//! Basic functions on the leaf space of the canonical foliation.
//!
//! Two leaf spaces are supported: the round unit sphere (leaf space of the
//! Hopf surface, transversal rank 1) and the flat torus `R⁴/(2πZ)⁴` (leaf
//! space of the nilmanifold, transversal rank 2). Differentiation is spectral
//! on both. A Hermitian field stores `dd^c f` relative to the background
//! transversal form `ω0`: one real component on the sphere, and on the torus
//! the entries `(H11, H22, Re H12, Im H12)` with `z1 = x1 + i x2`,
//! `z2 = x3 + i x4`.

mod sphere;
mod torus;

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::exterior::{apply_complex_structure, AlternatingForm, LinearComplexStructure};
use crate::models::{numerical_exterior_derivative, ChartPoint};

pub use sphere::{coeff_index, gauss_legendre, SphereGrid, SphereSample};
pub use torus::{TorusGrid, TorusInterpolant, TorusSample};

/// Top-band energy fraction above which a field counts as aliased.
pub const ALIASING_LIMIT: f64 = 0.01;

/// Largest admissible `|mean|` of a Poisson source.
pub const MEAN_TOLERANCE: f64 = 1e-10;

/// The constant `c_Δ` in `dd^c f = c_Δ Δf · ω0` for a flat complex line.
///
/// Measured once by differentiating `d^c(x²)` numerically on `R²` and
/// comparing with `Δ(x²) = 2`, then frozen.
pub fn convention_constant() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| {
        let j = LinearComplexStructure::standard(2).expect("standard structure on R²");
        let p = ChartPoint::new(vec![0.7, -0.4]);
        let ddc = numerical_exterior_derivative(
            |q| apply_complex_structure(&j, &AlternatingForm::one_form(&[2.0 * q.coords[0], 0.0])?),
            &p,
            1e-3,
        )
        .expect("finite differences on R²");
        let raw = ddc.get(&[0, 1]) / 2.0;
        let frozen = (raw * 8.0).round() / 8.0;
        assert!((raw - frozen).abs() < 1e-8, "unexpected d^c normalization {raw}");
        frozen
    })
}

#[derive(Clone, Debug)]
pub enum GridKind {
    Sphere(SphereGrid),
    Torus(TorusGrid),
}

/// A discretized leaf space with quadrature weights.
#[derive(Clone, Debug)]
pub struct LeafGrid {
    kind: GridKind,
    weights: Vec<f64>,
}

impl LeafGrid {
    /// Round unit sphere with band limit `L`.
    pub fn sphere(band: usize) -> Result<Arc<Self>> {
        let s = SphereGrid::new(band)?;
        let weights = s.weights().to_vec();
        Ok(Arc::new(Self {
            kind: GridKind::Sphere(s),
            weights,
        }))
    }

    /// Flat torus with `N` nodes per axis.
    pub fn torus(n: usize) -> Result<Arc<Self>> {
        let t = TorusGrid::new(n)?;
        let weights = vec![t.cell_weight(); t.len()];
        Ok(Arc::new(Self {
            kind: GridKind::Torus(t),
            weights,
        }))
    }

    pub fn kind(&self) -> &GridKind {
        &self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            GridKind::Sphere(_) => "sphere",
            GridKind::Torus(_) => "torus",
        }
    }

    /// Band limit `L` (sphere) or nodes per axis `N` (torus).
    pub fn resolution(&self) -> usize {
        match &self.kind {
            GridKind::Sphere(s) => s.band(),
            GridKind::Torus(t) => t.n(),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Transversal complex rank `n - 1`.
    pub fn rank(&self) -> usize {
        match self.kind {
            GridKind::Sphere(_) => 1,
            GridKind::Torus(_) => 2,
        }
    }

    /// Number of Hermitian components per node.
    pub fn components(&self) -> usize {
        match self.kind {
            GridKind::Sphere(_) => 1,
            GridKind::Torus(_) => 4,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn area(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Coordinates used in field dumps: `(colatitude, longitude)` or `x1..x4`.
    pub fn coords(&self, i: usize) -> Vec<f64> {
        match &self.kind {
            GridKind::Sphere(s) => {
                let (t, p) = s.node(i);
                vec![t, p]
            }
            GridKind::Torus(t) => t.node(i).to_vec(),
        }
    }

    /// The node as a point of the model's leaf-space embedding (unit vector
    /// in `R³` or a point of `[0, 2π)⁴`).
    pub fn leaf_point(&self, i: usize) -> Vec<f64> {
        match &self.kind {
            GridKind::Sphere(s) => s.node_point(i).to_vec(),
            GridKind::Torus(t) => t.node(i).to_vec(),
        }
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    pub fn mean(&self, values: &[f64]) -> f64 {
        self.integrate(values) / self.area()
    }

    /// Weighted inner product.
    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.weights)
            .map(|((x, y), w)| x * y * w)
            .sum()
    }

    pub fn top_band_fraction(&self, values: &[f64]) -> f64 {
        match &self.kind {
            GridKind::Sphere(s) => s.top_band_fraction(values),
            GridKind::Torus(t) => t.top_band_fraction(values),
        }
    }

    pub fn check_aliasing(&self, values: &[f64]) -> Result<()> {
        let frac = self.top_band_fraction(values);
        if frac > ALIASING_LIMIT {
            return Err(Error::Aliasing(frac));
        }
        Ok(())
    }

    /// Components of `dd^c v` relative to `ω0` at every node.
    pub fn hessian_components(&self, values: &[f64]) -> Vec<Vec<f64>> {
        let c = convention_constant();
        match &self.kind {
            GridKind::Sphere(s) => {
                vec![s.apply_degree_symbol(values, |l| -c * (l * (l + 1)) as f64)]
            }
            GridKind::Torus(t) => {
                let spec = t.spectrum(values);
                TORUS_COMPONENTS
                    .iter()
                    .map(|terms| {
                        t.apply_symbol(&spec, |k, kd| {
                            c * terms
                                .iter()
                                .map(|&(s, a, b)| s * TorusGrid::hessian_symbol(k, kd, a, b))
                                .sum::<f64>()
                        })
                    })
                    .collect()
            }
        }
    }

    /// `Σ_c D_c(w_c)`, the weighted adjoint of [`Self::hessian_components`].
    pub fn hessian_adjoint(&self, comps: &[Vec<f64>]) -> Vec<f64> {
        let c = convention_constant();
        match &self.kind {
            GridKind::Sphere(s) => s.apply_degree_symbol(&comps[0], |l| -c * (l * (l + 1)) as f64),
            GridKind::Torus(t) => {
                let mut acc = vec![num_complex::Complex64::new(0.0, 0.0); t.len()];
                for (terms, w) in TORUS_COMPONENTS.iter().zip(comps) {
                    let spec = t.spectrum(w);
                    for (i, (a, s)) in acc.iter_mut().zip(&spec).enumerate() {
                        let (k, kd) = t.mode_waves(i);
                        let sym: f64 = terms
                            .iter()
                            .map(|&(sg, p, q)| sg * TorusGrid::hessian_symbol(&k, &kd, p, q))
                            .sum();
                        *a += s * (c * sym);
                    }
                }
                t.from_spectrum(acc)
            }
        }
    }

    /// `c_Δ Δ v`.
    pub fn laplacian(&self, values: &[f64]) -> Vec<f64> {
        let c = convention_constant();
        match &self.kind {
            GridKind::Sphere(s) => s.apply_degree_symbol(values, |l| -c * (l * (l + 1)) as f64),
            GridKind::Torus(t) => {
                let spec = t.spectrum(values);
                t.apply_symbol(&spec, |k, _| -c * k.iter().map(|x| x * x).sum::<f64>())
            }
        }
    }

    /// Mean-zero `u` with `c_Δ Δ u = v - mean(v)` (band-projected on the sphere).
    pub fn inverse_laplacian(&self, values: &[f64]) -> Vec<f64> {
        let c = convention_constant();
        match &self.kind {
            GridKind::Sphere(s) => s.apply_degree_symbol(values, |l| {
                if l == 0 {
                    0.0
                } else {
                    -1.0 / (c * (l * (l + 1)) as f64)
                }
            }),
            GridKind::Torus(t) => {
                let spec = t.spectrum(values);
                t.apply_symbol(&spec, |k, _| {
                    let k2: f64 = k.iter().map(|x| x * x).sum();
                    if k2 == 0.0 {
                        0.0
                    } else {
                        -1.0 / (c * k2)
                    }
                })
            }
        }
    }

    /// `u` with `(c_Δ Δ - σ) u = v`, for `σ > 0`.
    pub(crate) fn shifted_inverse_laplacian(&self, values: &[f64], shift: f64) -> Vec<f64> {
        let c = convention_constant();
        match &self.kind {
            GridKind::Sphere(s) => s.apply_degree_symbol(values, |l| -1.0 / (c * (l * (l + 1)) as f64 + shift)),
            GridKind::Torus(t) => {
                let spec = t.spectrum(values);
                t.apply_symbol(&spec, |k, _| -1.0 / (c * k.iter().map(|x| x * x).sum::<f64>() + shift))
            }
        }
    }

    /// Projection onto the resolved space: the band limit on the sphere, the
    /// identity on the torus.
    pub fn project(&self, values: &[f64]) -> Vec<f64> {
        match &self.kind {
            GridKind::Sphere(s) => s.synthesis(&s.analysis(values)),
            GridKind::Torus(_) => values.to_vec(),
        }
    }

    pub fn interpolant(&self, values: &[f64]) -> Interpolant {
        match &self.kind {
            GridKind::Sphere(s) => Interpolant::Sphere {
                grid: s.clone(),
                coeffs: s.analysis(values),
            },
            GridKind::Torus(t) => Interpolant::Torus(t.interpolant(values)),
        }
    }
}

/// `(sign, a, b)` terms of `∂_a∂_b` per Hermitian component on the torus.
const TORUS_COMPONENTS: [&[(f64, usize, usize)]; 4] = [
    &[(1.0, 0, 0), (1.0, 1, 1)],
    &[(1.0, 2, 2), (1.0, 3, 3)],
    &[(1.0, 0, 2), (1.0, 1, 3)],
    &[(1.0, 0, 3), (-1.0, 1, 2)],
];

/// Off-grid evaluator of a resolved basic function.
#[derive(Clone, Debug)]
pub enum Interpolant {
    Sphere { grid: SphereGrid, coeffs: Vec<f64> },
    Torus(TorusInterpolant),
}

impl Interpolant {
    pub fn value(&self, leaf: &[f64]) -> f64 {
        match self {
            Self::Sphere { grid, coeffs } => grid.evaluate(coeffs, leaf).value,
            Self::Torus(t) => t.evaluate(leaf).value,
        }
    }
}

/// A basic function sampled on a leaf-space grid.
#[derive(Clone, Debug)]
pub struct BasicField {
    grid: Arc<LeafGrid>,
    values: Vec<f64>,
}

impl PartialEq for BasicField {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) && self.values == other.values
    }
}

impl BasicField {
    pub fn new(grid: &Arc<LeafGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite field value {v}")));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn constant(grid: &Arc<LeafGrid>, c: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    pub fn zeros(grid: &Arc<LeafGrid>) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Sample `f` at the leaf points of the nodes.
    pub fn from_fn<F: Fn(&[f64]) -> f64>(grid: &Arc<LeafGrid>, f: F) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(&grid.leaf_point(i))).collect();
        Self::new(grid, values)
    }

    pub(crate) fn from_raw(grid: &Arc<LeafGrid>, values: Vec<f64>) -> Self {
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<LeafGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.grid.mean(&self.values)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub(crate) fn check_grid(&self, other: &Self) -> Result<()> {
        if !Arc::ptr_eq(&self.grid, &other.grid) && self.grid.len() != other.grid.len() {
            return Err(Error::DimensionMismatch {
                expected: self.grid.len(),
                found: other.grid.len(),
            });
        }
        Ok(())
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_grid(other)?;
        Ok(self.map2(other, |a, b| a - b))
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_grid(other)?;
        Ok(self.map2(other, |a, b| a + b))
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self::from_raw(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    fn map2<F: Fn(f64, f64) -> f64>(&self, other: &Self, f: F) -> Self {
        Self::from_raw(
            &self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    /// Subtract the mean.
    pub fn centered(&self) -> Self {
        let m = self.mean();
        self.map(|v| v - m)
    }

    pub fn interpolant(&self) -> Interpolant {
        self.grid.interpolant(&self.values)
    }
}

/// Hermitian matrix field of `dd^c f` relative to `ω0`.
#[derive(Clone, Debug)]
pub struct HermitianField {
    grid: Arc<LeafGrid>,
    components: Vec<Vec<f64>>,
}

/// One node of a [`HermitianField`]: `[[a, c], [c̄, b]]` with `c = re + i im`;
/// rank 1 uses `a` only.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HermitianEntry {
    pub a: f64,
    pub b: f64,
    pub re: f64,
    pub im: f64,
}

impl HermitianField {
    pub fn grid(&self) -> &Arc<LeafGrid> {
        &self.grid
    }

    pub fn rank(&self) -> usize {
        self.grid.rank()
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn at(&self, i: usize) -> HermitianEntry {
        if self.components.len() == 1 {
            HermitianEntry {
                a: self.components[0][i],
                ..Default::default()
            }
        } else {
            HermitianEntry {
                a: self.components[0][i],
                b: self.components[1][i],
                re: self.components[2][i],
                im: self.components[3][i],
            }
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.components
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Pointwise algebra of `A = Id + H` for a transversal Hermitian matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Background {
    rank: usize,
    e: HermitianEntry,
}

impl Background {
    pub(crate) fn at(comps: &[Vec<f64>], i: usize) -> Self {
        if comps.len() == 1 {
            Self {
                rank: 1,
                e: HermitianEntry {
                    a: 1.0 + comps[0][i],
                    ..Default::default()
                },
            }
        } else {
            Self {
                rank: 2,
                e: HermitianEntry {
                    a: 1.0 + comps[0][i],
                    b: 1.0 + comps[1][i],
                    re: comps[2][i],
                    im: comps[3][i],
                },
            }
        }
    }

    pub(crate) fn det(&self) -> f64 {
        let e = &self.e;
        if self.rank == 1 {
            e.a
        } else {
            e.a * e.b - e.re * e.re - e.im * e.im
        }
    }

    pub(crate) fn min_eigenvalue(&self) -> f64 {
        let e = &self.e;
        if self.rank == 1 {
            e.a
        } else {
            let half = 0.5 * (e.a - e.b);
            0.5 * (e.a + e.b) - (half * half + e.re * e.re + e.im * e.im).sqrt()
        }
    }

    /// Adjugate, as operator coefficients (see [`operator_coefficients`]).
    pub(crate) fn adjugate(&self) -> HermitianEntry {
        let e = &self.e;
        if self.rank == 1 {
            HermitianEntry {
                a: 1.0,
                ..Default::default()
            }
        } else {
            HermitianEntry {
                a: e.b,
                b: e.a,
                re: -e.re,
                im: -e.im,
            }
        }
    }
}

/// Coefficients `k_c` with `Re tr(K H) = Σ_c k_c h_c` for Hermitian `K`.
pub(crate) fn operator_coefficients(k: &HermitianEntry, rank: usize) -> [f64; 4] {
    if rank == 1 {
        [k.a, 0.0, 0.0, 0.0]
    } else {
        [k.a, k.b, 2.0 * k.re, 2.0 * k.im]
    }
}

/// `dd^c f` relative to `ω0`, by spectral differentiation.
///
/// Fails with [`Error::Aliasing`] when `f` is under-resolved.
pub fn ddc_basic(f: &BasicField) -> Result<HermitianField> {
    f.grid.check_aliasing(&f.values)?;
    Ok(HermitianField {
        grid: f.grid.clone(),
        components: f.grid.hessian_components(&f.values),
    })
}

/// Quadrature integral over the leaf space.
pub fn integrate(f: &BasicField) -> f64 {
    f.grid.integrate(&f.values)
}

/// Mean-zero `f` with `dd^c f = ρ ω0` on the sphere, and in general
/// `tr(dd^c f / ω0) = ρ`.
pub fn poisson_solve(rho: &BasicField) -> Result<BasicField> {
    let mean = rho.mean();
    if mean.abs() > MEAN_TOLERANCE {
        return Err(Error::NonzeroMean(mean));
    }
    Ok(BasicField::from_raw(&rho.grid, rho.grid.inverse_laplacian(&rho.values)))
}

/// `(ω0 + dd^c f)^{n-1} / ω0^{n-1} = det(Id + H)` at every node.
pub fn ma_ratio(f: &BasicField) -> BasicField {
    let comps = f.grid.hessian_components(&f.values);
    ratio_from_components(&f.grid, &comps)
}

pub(crate) fn ratio_from_components(grid: &Arc<LeafGrid>, comps: &[Vec<f64>]) -> BasicField {
    let values = (0..grid.len()).map(|i| Background::at(comps, i).det()).collect();
    BasicField::from_raw(grid, values)
}

/// Minimum over nodes of the least eigenvalue of `Id + H`.
pub fn positivity_margin(f: &BasicField) -> f64 {
    let comps = f.grid.hessian_components(&f.values);
    margin_from_components(&comps)
}

pub(crate) fn margin_from_components(comps: &[Vec<f64>]) -> f64 {
    (0..comps[0].len())
        .map(|i| Background::at(comps, i).min_eigenvalue())
        .fold(f64::INFINITY, f64::min)
}

/// Operator coefficients of `D_P` for backgrounds `η1 = ω0 + dd^c f1`,
/// `η2 = ω0 + dd^c f2`: `D_P v = Σ_c k_c h_c(v)`.
pub fn dp_coefficients(f1: &BasicField, f2: &BasicField) -> Result<Vec<Vec<f64>>> {
    f1.check_grid(f2)?;
    let grid = &f1.grid;
    let c1 = grid.hessian_components(&f1.values);
    let c2 = grid.hessian_components(&f2.values);
    let margin = margin_from_components(&c1).min(margin_from_components(&c2));
    if !(margin > 0.0) {
        return Err(Error::NonPositiveBackground(margin));
    }
    let rank = grid.rank();
    let mut out = vec![vec![0.0; grid.len()]; grid.components()];
    for i in 0..grid.len() {
        let b1 = Background::at(&c1, i);
        let b2 = Background::at(&c2, i);
        let (a1, a2) = (b1.adjugate(), b2.adjugate());
        // P = Σ_{i ≤ n-2} η1^i η2^{n-2-i}; for rank 2, X∧Y/ω0² = ½ tr(adj(Y) X).
        let k = if rank == 1 {
            HermitianEntry {
                a: 1.0 / b1.det(),
                ..Default::default()
            }
        } else {
            let s = 0.5 / b1.det();
            HermitianEntry {
                a: s * (a1.a + a2.a),
                b: s * (a1.b + a2.b),
                re: s * (a1.re + a2.re),
                im: s * (a1.im + a2.im),
            }
        };
        for (c, v) in operator_coefficients(&k, rank).iter().take(grid.components()).enumerate() {
            out[c][i] = *v;
        }
    }
    Ok(out)
}

/// `D_P(v) = dd^c v ∧ P / η1^{n-1}` with `P = Σ η1^i ∧ η2^{n-2-i}`.
pub fn apply_dp(v: &BasicField, f1: &BasicField, f2: &BasicField) -> Result<BasicField> {
    v.check_grid(f1)?;
    let k = dp_coefficients(f1, f2)?;
    Ok(BasicField::from_raw(&v.grid, apply_coefficients(&v.grid, &k, &v.values)))
}

/// `Σ_c k_c h_c(v)`.
pub(crate) fn apply_coefficients(grid: &LeafGrid, k: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let h = grid.hessian_components(v);
    let mut out = vec![0.0; grid.len()];
    for (kc, hc) in k.iter().zip(&h) {
        for ((o, a), b) in out.iter_mut().zip(kc).zip(hc) {
            *o += a * b;
        }
    }
    out
}

/// Weighted adjoint of [`apply_coefficients`].
pub(crate) fn apply_coefficients_adjoint(grid: &LeafGrid, k: &[Vec<f64>], u: &[f64]) -> Vec<f64> {
    let w: Vec<Vec<f64>> = k
        .iter()
        .map(|kc| kc.iter().zip(u).map(|(a, b)| a * b).collect())
        .collect();
    grid.hessian_adjoint(&w)
}
