use std::f64::consts::TAU;

use rand::Rng;

use super::{ChartPoint, StructureTensors};
use crate::error::{Error, Result};
use crate::exterior::{
    apply_complex_structure, apply_complex_structure_inverse, basis_masks, mask_indices,
    AlternatingForm, LinearComplexStructure, MetricTensor, Vector,
};

const DIM: usize = 6;

/// Period of the fiber coordinate `t`; the lattice needs `(2π)²`.
pub const T_PERIOD: f64 = TAU * TAU;

/// Structure constants `c[k][i][j]` with `[e_i, e_j] = Σ_k c^k_ij e_k`.
pub type StructureConstants = [[[f64; DIM]; DIM]; DIM];

/// Heisenberg-type Vaisman nilmanifold of complex dimension 3.
///
/// Left-invariant coframe `e¹…e⁶` with `de⁶ = -(e¹∧e² + e³∧e⁴)`, all other
/// `de^i = 0`; metric `Σ e^i ⊗ e^i`, Lee form `θ = e⁵`, complex structure
/// pairing `(e1, e2)`, `(e3, e4)`, `(e5, e6)`. Frame indices are 0-based in
/// code. Chart coordinates are `(x1, x2, x3, x4, s, t)` with
/// `e^i = dx_i (i ≤ 4)`, `e⁵ = ds`, `e⁶ = dt - x1 dx2 - x3 dx4`.
#[derive(Clone, Debug)]
pub struct NilmanifoldModel {
    constants: StructureConstants,
    complex: LinearComplexStructure,
    /// `de^k` as 2-forms.
    differentials: Vec<AlternatingForm>,
    structure: StructureTensors,
}

impl NilmanifoldModel {
    pub fn new() -> Result<Self> {
        let mut c = [[[0.0; DIM]; DIM]; DIM];
        for (i, j) in [(0, 1), (2, 3)] {
            c[5][i][j] = 1.0;
            c[5][j][i] = -1.0;
        }
        let jacobi = jacobi_defect(&c);
        if jacobi > 1e-14 {
            return Err(Error::InvalidArgument(format!("Jacobi identity fails: {jacobi:.3e}")));
        }
        let differentials = (0..DIM)
            .map(|k| {
                let mut form = AlternatingForm::zero(DIM, 2)?;
                for i in 0..DIM {
                    for j in i + 1..DIM {
                        if c[k][i][j] != 0.0 {
                            form = &form - &AlternatingForm::basis(DIM, &[i, j])?.scale(c[k][i][j]);
                        }
                    }
                }
                Ok(form)
            })
            .collect::<Result<Vec<_>>>()?;

        let theta = AlternatingForm::basis(DIM, &[4])?;
        let target = &AlternatingForm::basis(DIM, &[0, 1])? + &AlternatingForm::basis(DIM, &[2, 3])?;
        // Orientation of I on (e5, e6) is fixed by requiring d^c θ = +(e12 + e34).
        let mut chosen = None;
        for sign in [1.0, -1.0] {
            let mut mat = LinearComplexStructure::standard(DIM)?.matrix().clone();
            mat[(5, 4)] = sign;
            mat[(4, 5)] = -sign;
            let complex = LinearComplexStructure::new(mat)?;
            let inner = apply_complex_structure_inverse(&complex, &theta)?;
            let dc = apply_complex_structure(&complex, &ce_differential(&differentials, &inner)?)?;
            if (&dc - &target).max_abs() < 1e-14 {
                chosen = Some((complex, dc));
                break;
            }
        }
        let (complex, omega0) = chosen.ok_or_else(|| {
            Error::InvalidArgument("no orientation of I makes d^c θ positive".into())
        })?;
        let structure = StructureTensors::assemble(
            MetricTensor::identity(DIM)?,
            complex.clone(),
            theta,
            omega0,
        )?;
        Ok(Self {
            constants: c,
            complex,
            differentials,
            structure,
        })
    }

    pub fn constants(&self) -> &StructureConstants {
        &self.constants
    }

    pub fn complex_structure(&self) -> &LinearComplexStructure {
        &self.complex
    }

    pub(super) fn structure(&self) -> Result<StructureTensors> {
        Ok(self.structure.clone())
    }

    /// Chevalley-Eilenberg differential of a left-invariant form.
    pub fn ce_differential(&self, a: &AlternatingForm) -> Result<AlternatingForm> {
        ce_differential(&self.differentials, a)
    }

    /// Levi-Civita coefficients `Γ^k_ij = g(∇_{e_i} e_j, e_k)` of the
    /// orthonormal frame (Koszul formula).
    pub fn christoffel(&self, k: usize, i: usize, j: usize) -> f64 {
        let c = &self.constants;
        0.5 * (c[k][i][j] - c[i][j][k] + c[j][k][i])
    }

    /// Coordinate expression of the frame vector `e_k` at `p`.
    pub fn frame_vector(&self, p: &ChartPoint, k: usize) -> Vec<f64> {
        let mut v = vec![0.0; DIM];
        v[k] = 1.0;
        match k {
            1 => v[5] = p.coords[0],
            3 => v[5] = p.coords[2],
            _ => {}
        }
        v
    }

    pub(super) fn frame_to_coordinates(&self, p: &ChartPoint, v: &Vector) -> Vec<f64> {
        let mut out = vec![0.0; DIM];
        for (k, &vk) in v.comps().iter().enumerate() {
            for (o, e) in out.iter_mut().zip(self.frame_vector(p, k)) {
                *o += vk * e;
            }
        }
        out
    }

    pub(super) fn exterior_derivative<F>(
        &self,
        field: F,
        p: &ChartPoint,
        h: f64,
    ) -> Result<AlternatingForm>
    where
        F: Fn(&ChartPoint) -> Result<AlternatingForm>,
    {
        if !(h > 0.0) {
            return Err(Error::InvalidArgument("step must be positive".into()));
        }
        let center = field(p)?;
        let mut out = self.ce_differential(&center)?;
        for k in 0..DIM {
            let dir = self.frame_vector(p, k);
            let plus = field(&p.offset(&dir, h))?;
            let minus = field(&p.offset(&dir, -h))?;
            let partial = (&plus - &minus).scale(0.5 / h);
            if partial.max_abs() == 0.0 {
                continue;
            }
            out = &out + &AlternatingForm::basis(DIM, &[k])?.wedge(&partial)?;
        }
        Ok(out)
    }

    pub(super) fn sample_point<R: Rng>(&self, rng: &mut R) -> ChartPoint {
        let mut coords: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..TAU)).collect();
        coords.push(rng.gen_range(0.0..T_PERIOD));
        ChartPoint::new(coords)
    }

    pub(super) fn leaf_project(&self, p: &ChartPoint) -> Vec<f64> {
        p.coords[..4].iter().map(|x| x.rem_euclid(TAU)).collect()
    }

    pub(super) fn leaf_lift(&self, leaf: &[f64]) -> Result<ChartPoint> {
        if leaf.len() != 4 {
            return Err(Error::DimensionMismatch {
                expected: 4,
                found: leaf.len(),
            });
        }
        let mut coords = leaf.to_vec();
        coords.extend([0.0, 0.0]);
        Ok(ChartPoint::new(coords))
    }

    /// Left translations by the lattice generators:
    /// `(a, σ, τ)·(x, s, t) = (x + a, s + σ, t + τ + a1 x2 + a3 x4)`.
    pub(super) fn generating_loops(&self, p: &ChartPoint) -> Vec<(ChartPoint, ChartPoint)> {
        let x = &p.coords;
        (0..DIM)
            .map(|k| {
                let mut end = x.clone();
                match k {
                    0 => {
                        end[0] += TAU;
                        end[5] += TAU * x[1];
                    }
                    2 => {
                        end[2] += TAU;
                        end[5] += TAU * x[3];
                    }
                    5 => end[5] += T_PERIOD,
                    _ => end[k] += TAU,
                }
                (p.clone(), ChartPoint::new(end))
            })
            .collect()
    }
}

fn ce_differential(differentials: &[AlternatingForm], a: &AlternatingForm) -> Result<AlternatingForm> {
    let m = a.dim();
    let k = a.degree();
    let mut out = AlternatingForm::zero(m, k + 1)?;
    if k == 0 {
        return Ok(out);
    }
    for (mask, &coef) in basis_masks(m, k).iter().zip(a.coeffs()) {
        if coef == 0.0 {
            continue;
        }
        let idx = mask_indices(*mask);
        for p in 0..k {
            let mut term = AlternatingForm::scalar(m, if p % 2 == 0 { coef } else { -coef })?;
            for (q, &i) in idx.iter().enumerate() {
                let factor = if q == p {
                    differentials[i].clone()
                } else {
                    AlternatingForm::basis(m, &[i])?
                };
                term = term.wedge(&factor)?;
            }
            out = &out + &term;
        }
    }
    Ok(out)
}

fn jacobi_defect(c: &StructureConstants) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..DIM {
        for j in 0..DIM {
            for k in 0..DIM {
                for l in 0..DIM {
                    let mut s = 0.0;
                    for m in 0..DIM {
                        s += c[m][i][j] * c[l][m][k] + c[m][j][k] * c[l][m][i] + c[m][k][i] * c[l][m][j];
                    }
                    worst = worst.max(s.abs());
                }
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::VaismanModel;

    #[test]
    fn omega_assembles_from_frame() {
        let model = VaismanModel::nil().unwrap();
        let st = model.structure(&ChartPoint::new(vec![0.0; 6])).unwrap();
        let expected = &(&AlternatingForm::basis(6, &[0, 1]).unwrap()
            + &AlternatingForm::basis(6, &[2, 3]).unwrap())
            + &AlternatingForm::basis(6, &[4, 5]).unwrap();
        assert_eq!(st.omega, expected);
        assert_eq!(&st.omega0 + &st.theta.wedge(&st.theta_c).unwrap(), expected);
        assert_eq!(st.theta_c, AlternatingForm::basis(6, &[5]).unwrap());
    }

    #[test]
    fn ce_differential_of_frame() {
        let VaismanModel::Nil(nil) = VaismanModel::nil().unwrap() else {
            unreachable!()
        };
        let e6 = AlternatingForm::basis(6, &[5]).unwrap();
        let d = nil.ce_differential(&e6).unwrap();
        assert_eq!(d.get(&[0, 1]), -1.0);
        assert_eq!(d.get(&[2, 3]), -1.0);
        // d² = 0 on the whole exterior algebra
        for k in 1..=4 {
            for mask in basis_masks(6, k) {
                let e = AlternatingForm::basis(6, &mask_indices(*mask)).unwrap();
                let dd = nil.ce_differential(&nil.ce_differential(&e).unwrap()).unwrap();
                assert!(dd.max_abs() == 0.0);
            }
        }
    }

    #[test]
    fn frame_derivative_matches_coordinates() {
        // The coframe e⁶ = dt - x1 dx2 - x3 dx4, expressed in the frame, is
        // constant; its coordinate exterior derivative must agree with CE.
        let VaismanModel::Nil(nil) = VaismanModel::nil().unwrap() else {
            unreachable!()
        };
        let p = ChartPoint::new(vec![0.3, 1.1, -0.4, 2.0, 0.5, 0.9]);
        let f = |q: &ChartPoint| AlternatingForm::one_form(&[0.0, -q.coords[0], 0.0, -q.coords[2], 0.0, 1.0]);
        let coord_d = crate::models::numerical_exterior_derivative(f, &p, 1e-4).unwrap();
        assert!((coord_d.get(&[0, 1]) + 1.0).abs() < 1e-10);
        assert!((coord_d.get(&[2, 3]) + 1.0).abs() < 1e-10);
        // [e1, e2] = e6 in coordinates
        let e2 = nil.frame_vector(&p, 1);
        assert_eq!(e2[5], p.coords[0]);
    }

    #[test]
    fn lattice_loops_close() {
        let VaismanModel::Nil(nil) = VaismanModel::nil().unwrap() else {
            unreachable!()
        };
        let p = ChartPoint::new(vec![0.3, 1.1, -0.4, 2.0, 0.5, 0.9]);
        let loops = nil.generating_loops(&p);
        assert_eq!(loops.len(), 6);
        for (a, b) in &loops {
            let la = nil.leaf_project(a);
            let lb = nil.leaf_project(b);
            assert!(la.iter().zip(&lb).all(|(x, y)| (x - y).abs() < 1e-12));
        }
    }
}
