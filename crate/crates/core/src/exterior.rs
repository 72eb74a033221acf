//! Pointwise real exterior algebra in dimension 2..=8.
//!
//! A degree-`k` form stores its `C(m, k)` coefficients against the basis
//! `e^{i1} ∧ … ∧ e^{ik}` (`i1 < … < ik`) in lexicographic order, so that
//! `a(e_{i1}, …, e_{ik})` is exactly the stored coefficient. Multi-indices are
//! handled as `u16` bitmasks internally.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 8;

/// Tolerance used when validating `J^2 = -Id`.
pub const COMPLEX_STRUCTURE_TOL: f64 = 1e-12;

struct BasisTable {
    /// `subsets[k]` lists the k-subsets of `0..m` in lexicographic order.
    subsets: Vec<Vec<u16>>,
    /// Position of a bitmask inside its degree block.
    rank: Vec<u16>,
}

fn tables() -> &'static [BasisTable] {
    static TABLES: OnceLock<Vec<BasisTable>> = OnceLock::new();
    TABLES.get_or_init(|| (0..=MAX_DIM).map(build_table).collect())
}

fn build_table(m: usize) -> BasisTable {
    fn rec(start: usize, m: usize, left: usize, acc: u16, out: &mut Vec<u16>) {
        if left == 0 {
            out.push(acc);
            return;
        }
        for i in start..m {
            rec(i + 1, m, left - 1, acc | (1 << i), out);
        }
    }
    let mut subsets = Vec::with_capacity(m + 1);
    let mut rank = vec![u16::MAX; 1 << m];
    for k in 0..=m {
        let mut v = Vec::new();
        rec(0, m, k, 0, &mut v);
        for (pos, &mask) in v.iter().enumerate() {
            rank[mask as usize] = pos as u16;
        }
        subsets.push(v);
    }
    BasisTable { subsets, rank }
}

/// Lexicographic list of the k-subsets of `0..m`, as bitmasks.
pub fn basis_masks(m: usize, k: usize) -> &'static [u16] {
    &tables()[m].subsets[k]
}

fn mask_rank(m: usize, mask: u16) -> usize {
    tables()[m].rank[mask as usize] as usize
}

/// Indices contained in a bitmask, ascending.
pub fn mask_indices(mask: u16) -> Vec<usize> {
    (0..16).filter(|i| mask & (1 << i) != 0).collect()
}

pub fn binomial(m: usize, k: usize) -> usize {
    if k > m {
        return 0;
    }
    (0..k).fold(1usize, |acc, i| acc * (m - i) / (i + 1))
}

/// Sign of the permutation sorting the concatenation `a ++ b` of two
/// disjoint ascending index sets.
fn merge_sign(a: u16, b: u16) -> f64 {
    let mut inversions = 0u32;
    let mut rest = b;
    while rest != 0 {
        let j = rest.trailing_zeros();
        inversions += (a >> (j + 1)).count_ones();
        rest &= rest - 1;
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn check_dim(m: usize) -> Result<()> {
    if (2..=MAX_DIM).contains(&m) {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(m))
    }
}

fn same_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Tangent vector in frame coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Vector {
    comps: Vec<f64>,
}

impl Vector {
    pub fn new(comps: Vec<f64>) -> Result<Self> {
        check_dim(comps.len())?;
        if comps.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("vector has non-finite component".into()));
        }
        Ok(Self { comps })
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut comps = vec![0.0; dim];
        comps[i] = 1.0;
        Self { comps }
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn comps(&self) -> &[f64] {
        &self.comps
    }

    pub fn norm(&self) -> f64 {
        self.comps.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.comps)
    }

    pub(crate) fn from_dvector(v: &DVector<f64>) -> Self {
        Self {
            comps: v.iter().copied().collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            comps: self.comps.iter().map(|c| c * s).collect(),
        }
    }
}

/// Alternating k-form at a point, dense lexicographic storage.
#[derive(Clone, PartialEq)]
pub struct AlternatingForm {
    dim: usize,
    degree: usize,
    coeffs: Vec<f64>,
}

impl fmt::Debug for AlternatingForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Form(dim={}, deg={}) {{", self.dim, self.degree)?;
        let mut first = true;
        for (mask, c) in basis_masks(self.dim, self.degree).iter().zip(&self.coeffs) {
            if *c != 0.0 {
                if !first {
                    write!(f, ",")?;
                }
                first = false;
                write!(f, " {:?}: {:.6e}", mask_indices(*mask), c)?;
            }
        }
        write!(f, " }}")
    }
}

impl AlternatingForm {
    pub fn zero(dim: usize, degree: usize) -> Result<Self> {
        check_dim(dim)?;
        if degree > dim {
            return Err(Error::DegreeOverflow { degree, dim });
        }
        Ok(Self {
            dim,
            degree,
            coeffs: vec![0.0; binomial(dim, degree)],
        })
    }

    pub fn from_coeffs(dim: usize, degree: usize, coeffs: Vec<f64>) -> Result<Self> {
        let mut form = Self::zero(dim, degree)?;
        same_dim(form.coeffs.len(), coeffs.len())?;
        form.coeffs = coeffs;
        Ok(form)
    }

    pub fn scalar(dim: usize, value: f64) -> Result<Self> {
        Self::from_coeffs(dim, 0, vec![value])
    }

    /// 1-form with the given frame components.
    pub fn one_form(comps: &[f64]) -> Result<Self> {
        Self::from_coeffs(comps.len(), 1, comps.to_vec())
    }

    /// Basis form `e^{i1} ∧ … ∧ e^{ik}` from indices in any order (with sign).
    pub fn basis(dim: usize, indices: &[usize]) -> Result<Self> {
        let mut out = Self::scalar(dim, 1.0)?;
        for &i in indices {
            if i >= dim {
                return Err(Error::InvalidArgument(format!("index {i} out of range")));
            }
            let mut e = Self::zero(dim, 1)?;
            e.coeffs[i] = 1.0;
            out = out.wedge(&e)?;
        }
        Ok(out)
    }

    /// 2-form from an antisymmetric matrix `M_ab = a(e_a, e_b)`.
    pub fn from_antisymmetric(mat: &DMatrix<f64>) -> Result<Self> {
        let m = mat.nrows();
        let mut form = Self::zero(m, 2)?;
        for (pos, &mask) in basis_masks(m, 2).iter().enumerate() {
            let idx = mask_indices(mask);
            form.coeffs[pos] = 0.5 * (mat[(idx[0], idx[1])] - mat[(idx[1], idx[0])]);
        }
        Ok(form)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of `e^{i1} ∧ … ∧ e^{ik}`; indices may be unsorted.
    pub fn get(&self, indices: &[usize]) -> f64 {
        if indices.len() != self.degree {
            return 0.0;
        }
        let mut sorted = indices.to_vec();
        let mut sign = 1.0;
        for i in 0..sorted.len() {
            for j in 0..sorted.len() - 1 - i {
                if sorted[j] > sorted[j + 1] {
                    sorted.swap(j, j + 1);
                    sign = -sign;
                }
            }
        }
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return 0.0;
        }
        let mask = sorted.iter().fold(0u16, |acc, &i| acc | (1 << i));
        sign * self.coeffs[mask_rank(self.dim, mask)]
    }

    /// Euclidean norm of the frame coefficients.
    pub fn coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |acc, c| acc.max(c.abs()))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        same_dim(self.dim, other.dim)?;
        same_dim(self.degree, other.degree)?;
        Ok(Self {
            dim: self.dim,
            degree: self.degree,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.try_add(&other.scale(-1.0))
    }

    /// Exterior product.
    pub fn wedge(&self, other: &Self) -> Result<Self> {
        same_dim(self.dim, other.dim)?;
        let degree = self.degree + other.degree;
        if degree > self.dim {
            return Err(Error::DegreeOverflow {
                degree,
                dim: self.dim,
            });
        }
        let m = self.dim;
        let mut out = Self::zero(m, degree)?;
        let left = basis_masks(m, self.degree);
        let right = basis_masks(m, other.degree);
        for (a, &ca) in left.iter().zip(&self.coeffs) {
            if ca == 0.0 {
                continue;
            }
            for (b, &cb) in right.iter().zip(&other.coeffs) {
                if cb == 0.0 || a & b != 0 {
                    continue;
                }
                out.coeffs[mask_rank(m, a | b)] += merge_sign(*a, *b) * ca * cb;
            }
        }
        Ok(out)
    }

    /// `k`-th exterior power, `a ∧ … ∧ a`.
    pub fn power(&self, k: usize) -> Result<Self> {
        let mut out = Self::scalar(self.dim, 1.0)?;
        for _ in 0..k {
            out = out.wedge(self)?;
        }
        Ok(out)
    }

    /// Contraction `i_v a`, `(i_v a)(X2, …) = a(v, X2, …)`.
    pub fn interior(&self, v: &Vector) -> Result<Self> {
        same_dim(self.dim, v.dim())?;
        if self.degree == 0 {
            return Err(Error::ZeroDegree("interior"));
        }
        let m = self.dim;
        let mut out = Self::zero(m, self.degree - 1)?;
        for (mask, &c) in basis_masks(m, self.degree).iter().zip(&self.coeffs) {
            if c == 0.0 {
                continue;
            }
            let mut rest = *mask;
            while rest != 0 {
                let j = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                let below = (mask & ((1u16 << j) - 1)).count_ones();
                let sign = if below % 2 == 0 { 1.0 } else { -1.0 };
                out.coeffs[mask_rank(m, mask & !(1 << j))] += sign * v.comps[j] * c;
            }
        }
        Ok(out)
    }

    /// Evaluate on `k` vectors.
    pub fn evaluate(&self, vectors: &[Vector]) -> Result<f64> {
        same_dim(self.degree, vectors.len())?;
        for v in vectors {
            same_dim(self.dim, v.dim())?;
        }
        if self.degree == 0 {
            return Ok(self.coeffs[0]);
        }
        let k = self.degree;
        let mut total = 0.0;
        for (mask, &c) in basis_masks(self.dim, k).iter().zip(&self.coeffs) {
            if c == 0.0 {
                continue;
            }
            let rows = mask_indices(*mask);
            let minor = DMatrix::from_fn(k, k, |r, s| vectors[s].comps[rows[r]]);
            total += c * minor.determinant();
        }
        Ok(total)
    }

    /// Matrix `M_ab = a(e_a, e_b)` of a 2-form.
    pub fn to_antisymmetric(&self) -> Result<DMatrix<f64>> {
        if self.degree != 2 {
            return Err(Error::InvalidArgument("expected a 2-form".into()));
        }
        let m = self.dim;
        let mut mat = DMatrix::zeros(m, m);
        for (mask, &c) in basis_masks(m, 2).iter().zip(&self.coeffs) {
            let idx = mask_indices(*mask);
            mat[(idx[0], idx[1])] = c;
            mat[(idx[1], idx[0])] = -c;
        }
        Ok(mat)
    }
}

impl Add for &AlternatingForm {
    type Output = AlternatingForm;
    fn add(self, rhs: Self) -> AlternatingForm {
        self.try_add(rhs).expect("form addition: incompatible operands")
    }
}

impl Sub for &AlternatingForm {
    type Output = AlternatingForm;
    fn sub(self, rhs: Self) -> AlternatingForm {
        self.try_sub(rhs).expect("form subtraction: incompatible operands")
    }
}

impl Neg for &AlternatingForm {
    type Output = AlternatingForm;
    fn neg(self) -> AlternatingForm {
        self.scale(-1.0)
    }
}

impl Mul<&AlternatingForm> for f64 {
    type Output = AlternatingForm;
    fn mul(self, rhs: &AlternatingForm) -> AlternatingForm {
        rhs.scale(self)
    }
}

/// Pullback `(L*a)(X1, …) = a(L X1, …)` by a linear map.
pub fn pullback_linear(l: &DMatrix<f64>, a: &AlternatingForm) -> Result<AlternatingForm> {
    let m = a.dim();
    if l.nrows() != m || l.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: l.nrows(),
        });
    }
    let scale = l.iter().fold(0.0f64, |acc, x| acc.max(x.abs())).max(f64::MIN_POSITIVE);
    if l.determinant().abs() <= 1e-14 * scale.powi(m as i32) {
        return Err(Error::SingularMap);
    }
    Ok(pullback_unchecked(l, a))
}

fn pullback_unchecked(l: &DMatrix<f64>, a: &AlternatingForm) -> AlternatingForm {
    let m = a.dim();
    let k = a.degree();
    let mut out = AlternatingForm::zero(m, k).expect("valid shape");
    if k == 0 {
        out.coeffs[0] = a.coeffs[0];
        return out;
    }
    let masks = basis_masks(m, k);
    for (j, col_mask) in masks.iter().enumerate() {
        let cols = mask_indices(*col_mask);
        let mut acc = 0.0;
        for (row_mask, &c) in masks.iter().zip(&a.coeffs) {
            if c == 0.0 {
                continue;
            }
            let rows = mask_indices(*row_mask);
            let minor = DMatrix::from_fn(k, k, |r, s| l[(rows[r], cols[s])]);
            acc += c * minor.determinant();
        }
        out.coeffs[j] = acc;
    }
    out
}

/// Ratio `a / b` of two top-degree forms.
pub fn top_ratio(a: &AlternatingForm, b: &AlternatingForm) -> Result<f64> {
    same_dim(a.dim(), b.dim())?;
    if a.degree() != a.dim() || b.degree() != b.dim() {
        return Err(Error::InvalidArgument("top_ratio needs top-degree forms".into()));
    }
    if b.coeffs[0] == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(a.coeffs[0] / b.coeffs[0])
}

/// Constant linear complex structure `J`, `J^2 = -Id`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearComplexStructure {
    matrix: DMatrix<f64>,
}

impl LinearComplexStructure {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let m = matrix.nrows();
        check_dim(m)?;
        if matrix.ncols() != m || m % 2 != 0 {
            return Err(Error::InvalidArgument(
                "complex structure must be square of even size".into(),
            ));
        }
        let defect = (&matrix * &matrix + DMatrix::identity(m, m)).amax();
        if defect > COMPLEX_STRUCTURE_TOL {
            return Err(Error::NotComplexStructure(defect));
        }
        Ok(Self { matrix })
    }

    /// Standard structure on `R^{2n}` pairing `(e_{2k}, e_{2k+1})` with
    /// `J e_{2k} = e_{2k+1}`.
    pub fn standard(dim: usize) -> Result<Self> {
        let mut mat = DMatrix::zeros(dim, dim);
        for k in 0..dim / 2 {
            mat[(2 * k + 1, 2 * k)] = 1.0;
            mat[(2 * k, 2 * k + 1)] = -1.0;
        }
        Self::new(mat)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, v: &Vector) -> Result<Vector> {
        same_dim(self.dim(), v.dim())?;
        Ok(Vector::from_dvector(&(&self.matrix * v.to_dvector())))
    }
}

/// Action on forms: `(J a)(X1, …) = a(J^{-1} X1, …)`; on 1-forms `a ↦ -a∘J`.
pub fn apply_complex_structure(
    j: &LinearComplexStructure,
    a: &AlternatingForm,
) -> Result<AlternatingForm> {
    same_dim(j.dim(), a.dim())?;
    let inverse = -j.matrix();
    Ok(pullback_unchecked(&inverse, a))
}

/// Inverse of [`apply_complex_structure`]: `a ↦ a(J ·, …, J ·)`.
pub fn apply_complex_structure_inverse(
    j: &LinearComplexStructure,
    a: &AlternatingForm,
) -> Result<AlternatingForm> {
    same_dim(j.dim(), a.dim())?;
    Ok(pullback_unchecked(j.matrix(), a))
}

/// Riemannian metric at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricTensor {
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl MetricTensor {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let m = matrix.nrows();
        check_dim(m)?;
        if matrix.ncols() != m {
            return Err(Error::SingularMetric);
        }
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-12 * matrix.amax().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "metric is not symmetric (defect {asym:.3e})"
            )));
        }
        let chol = matrix.clone().cholesky().ok_or(Error::SingularMetric)?;
        let inverse = chol.inverse();
        Ok(Self { matrix, inverse })
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(values)))
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.matrix.clone().symmetric_eigenvalues().min()
    }

    pub fn inner(&self, u: &Vector, v: &Vector) -> f64 {
        (u.to_dvector().transpose() * &self.matrix * v.to_dvector())[(0, 0)]
    }
}

/// Metric dual vector of a 1-form.
pub fn sharp(g: &MetricTensor, a: &AlternatingForm) -> Result<Vector> {
    same_dim(g.dim(), a.dim())?;
    if a.degree() != 1 {
        return Err(Error::InvalidArgument("sharp needs a 1-form".into()));
    }
    let v = g.inverse() * DVector::from_column_slice(a.coeffs());
    Ok(Vector::from_dvector(&v))
}

/// Metric dual 1-form of a vector.
pub fn flat(g: &MetricTensor, v: &Vector) -> Result<AlternatingForm> {
    same_dim(g.dim(), v.dim())?;
    let a = g.matrix() * v.to_dvector();
    AlternatingForm::one_form(a.as_slice())
}

/// Norm induced by `g` on `Λ^k`, with `|e^1 ∧ … ∧ e^k| = 1` for orthonormal frames.
pub fn form_norm(g: &MetricTensor, a: &AlternatingForm) -> Result<f64> {
    same_dim(g.dim(), a.dim())?;
    let k = a.degree();
    if k == 0 {
        return Ok(a.coeffs()[0].abs());
    }
    let masks = basis_masks(a.dim(), k);
    let ginv = g.inverse();
    let mut total = 0.0;
    for (mi, &ci) in masks.iter().zip(a.coeffs()) {
        if ci == 0.0 {
            continue;
        }
        let rows = mask_indices(*mi);
        for (mj, &cj) in masks.iter().zip(a.coeffs()) {
            if cj == 0.0 {
                continue;
            }
            let cols = mask_indices(*mj);
            let minor = DMatrix::from_fn(k, k, |r, s| ginv[(rows[r], cols[s])]);
            total += ci * cj * minor.determinant();
        }
    }
    Ok(total.max(0.0).sqrt())
}
