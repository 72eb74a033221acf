use nalgebra::{DMatrix, SymmetricEigen};

use super::{jacobian_fd, ChartPoint, DcConvention, HopfModel, StructureTensors, VaismanModel};
use crate::error::{Error, Result};
use crate::exterior::{
    apply_complex_structure, pullback_linear, AlternatingForm, MetricTensor, Vector,
};

/// Relative singular-value threshold for the kernel of `ω0`.
pub const KERNEL_THRESHOLD: f64 = 1e-8;

/// Maximum disagreement between the `h` and `h/2` estimates of `∇θ`.
pub const RICHARDSON_LIMIT: f64 = 1e-3;

/// `|dω - θ∧ω|`.
pub fn check_lck(model: &VaismanModel, p: &ChartPoint, h: f64) -> Result<f64> {
    check_lck_scaled(model, p, h, 1.0)
}

/// `|dω - s θ∧ω|`; `s ≠ 1` is a negative control.
pub fn check_lck_scaled(model: &VaismanModel, p: &ChartPoint, h: f64, s: f64) -> Result<f64> {
    let st = model.structure(p)?;
    let d_omega = model.exterior_derivative(|q| Ok(model.structure(q)?.omega), p, h)?;
    let rhs = st.theta.wedge(&st.omega)?.scale(s);
    Ok((&d_omega - &rhs).coeff_norm())
}

/// `|ω - d^c θ - θ∧θ^c|`, with `d^c θ` differentiated numerically.
pub fn check_structure_identity(model: &VaismanModel, p: &ChartPoint, h: f64) -> Result<f64> {
    check_structure_identity_with(model, p, h, DcConvention::Standard)
}

pub fn check_structure_identity_with(
    model: &VaismanModel,
    p: &ChartPoint,
    h: f64,
    convention: DcConvention,
) -> Result<f64> {
    let st = model.structure(p)?;
    let dc_theta = model.dc(|q| Ok(model.structure(q)?.theta), p, h, convention)?;
    let rhs = &dc_theta + &st.theta.wedge(&st.theta_c)?;
    Ok((&st.omega - &rhs).coeff_norm())
}

/// Kernel of a 2-form compared with the plane spanned by two vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelReport {
    pub kernel_dim: usize,
    /// Principal angles in radians; empty unless `kernel_dim == 2`.
    pub principal_angles: Vec<f64>,
    pub singular_values: Vec<f64>,
}

impl KernelReport {
    pub fn max_angle(&self) -> f64 {
        if self.principal_angles.is_empty() {
            std::f64::consts::FRAC_PI_2
        } else {
            self.principal_angles.iter().cloned().fold(0.0, f64::max)
        }
    }
}

/// Kernel of `form` against `span(u, v)`.
pub fn kernel_report(form: &AlternatingForm, u: &Vector, v: &Vector) -> Result<KernelReport> {
    let mat = form.to_antisymmetric()?;
    let m = mat.nrows();
    let svd = mat.clone().svd(false, true);
    let vt = svd.v_t.as_ref().ok_or(Error::SingularMap)?;
    let sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
    let largest = sv.iter().cloned().fold(0.0, f64::max);
    let kernel: Vec<usize> = (0..sv.len())
        .filter(|&i| sv[i] <= KERNEL_THRESHOLD * largest)
        .collect();
    let mut sorted = sv.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut report = KernelReport {
        kernel_dim: kernel.len(),
        principal_angles: Vec::new(),
        singular_values: sorted,
    };
    if kernel.len() != 2 {
        return Ok(report);
    }
    let q1 = DMatrix::from_fn(m, 2, |r, c| vt[(kernel[c], r)]);
    let span = DMatrix::from_fn(m, 2, |r, c| if c == 0 { u.comps()[r] } else { v.comps()[r] });
    let q2 = span.qr().q();
    if q2.ncols() != 2 {
        return Err(Error::SingularMap);
    }
    // Sines of principal angles are singular values of (I - Q1 Q1ᵀ) Q2.
    let resid = &q2 - &q1 * (q1.transpose() * &q2);
    report.principal_angles = resid
        .singular_values()
        .iter()
        .map(|s| s.clamp(0.0, 1.0).asin())
        .collect();
    Ok(report)
}

/// `ker ω0` against `span(θ♯, Iθ♯)`.
pub fn check_foliation_kernel(model: &VaismanModel, p: &ChartPoint) -> Result<KernelReport> {
    let st = model.structure(p)?;
    kernel_report(&st.omega0, &st.lee_field, &st.anti_lee_field())
}

/// `ker(ω0 + ω0')` against `span(θ♯, Iθ♯)` of `st`.
pub fn kernel_intersection(
    st: &StructureTensors,
    omega0_a: &AlternatingForm,
    omega0_b: &AlternatingForm,
) -> Result<KernelReport> {
    kernel_report(&omega0_a.try_add(omega0_b)?, &st.lee_field, &st.anti_lee_field())
}

/// Smallest eigenvalue of the symmetric form `ω0(·, I·)`.
pub fn semipositivity(st: &StructureTensors) -> Result<f64> {
    let s = st.omega0.to_antisymmetric()? * st.complex.matrix();
    let sym = 0.5 * (&s + s.transpose());
    Ok(SymmetricEigen::new(sym).eigenvalues.min())
}

/// `|i_{Iθ♯} i_{θ♯} ω^n - n ω0^{n-1}|`.
pub fn check_contraction(model: &VaismanModel, p: &ChartPoint) -> Result<f64> {
    let st = model.structure(p)?;
    let n = model.complex_dim();
    let lhs = st
        .omega
        .power(n)?
        .interior(&st.lee_field)?
        .interior(&st.anti_lee_field())?;
    let rhs = st.omega0.power(n - 1)?.scale(n as f64);
    Ok((&lhs - &rhs).coeff_norm())
}

/// `|∇θ|` (Frobenius norm of the frame components).
///
/// Hopf: finite-difference Christoffel symbols, estimated at `h` and `h/2`;
/// disagreement above [`RICHARDSON_LIMIT`] is reported as `StepTooLarge`.
/// Nilmanifold: Koszul formula on the Lie algebra.
pub fn check_parallel_lee(model: &VaismanModel, p: &ChartPoint, h: f64) -> Result<f64> {
    model.validate(p)?;
    match model {
        VaismanModel::Hopf(_) => parallel_residual_fd(
            |q| Ok(model.structure(q)?.metric),
            |q| Ok(model.structure(q)?.theta),
            p,
            h,
        ),
        VaismanModel::Nil(nil) => {
            let m = model.real_dim();
            let st = nil_structure(model, p)?;
            let theta = st.theta.coeffs();
            let mut sum = 0.0;
            for i in 0..m {
                for j in 0..m {
                    let v: f64 = (0..m).map(|k| -nil.christoffel(k, i, j) * theta[k]).sum();
                    sum += v * v;
                }
            }
            Ok(sum.sqrt())
        }
    }
}

fn nil_structure(model: &VaismanModel, p: &ChartPoint) -> Result<StructureTensors> {
    model.structure(p)
}

/// `|∇θ|` in a coordinate chart for arbitrary metric and 1-form fields.
pub fn parallel_residual_fd<G, T>(metric: G, theta: T, p: &ChartPoint, h: f64) -> Result<f64>
where
    G: Fn(&ChartPoint) -> Result<MetricTensor>,
    T: Fn(&ChartPoint) -> Result<AlternatingForm>,
{
    let coarse = covariant_derivative_fd(&metric, &theta, p, h)?;
    let fine = covariant_derivative_fd(&metric, &theta, p, 0.5 * h)?;
    let gap = (&coarse - &fine).amax();
    if gap > RICHARDSON_LIMIT {
        return Err(Error::StepTooLarge(gap));
    }
    Ok(coarse.norm())
}

fn covariant_derivative_fd<G, T>(metric: &G, theta: &T, p: &ChartPoint, h: f64) -> Result<DMatrix<f64>>
where
    G: Fn(&ChartPoint) -> Result<MetricTensor>,
    T: Fn(&ChartPoint) -> Result<AlternatingForm>,
{
    let m = p.dim();
    let g = metric(p)?;
    let dg = metric_derivatives(metric, p, h)?;
    let th = theta(p)?;
    let dth = jacobian_fd(|q| Ok(theta(q)?.coeffs().to_vec()), p, h)?;
    let ginv = g.inverse();
    let mut out = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let mut conn = 0.0;
            for k in 0..m {
                let mut gamma = 0.0;
                for l in 0..m {
                    gamma += ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                }
                conn += 0.5 * gamma * th.coeffs()[k];
            }
            out[(i, j)] = dth[(j, i)] - conn;
        }
    }
    Ok(out)
}

/// `∂_a g` for each coordinate `a`.
fn metric_derivatives<G>(metric: &G, p: &ChartPoint, h: f64) -> Result<Vec<DMatrix<f64>>>
where
    G: Fn(&ChartPoint) -> Result<MetricTensor>,
{
    let m = p.dim();
    (0..m)
        .map(|a| {
            let mut dir = vec![0.0; m];
            dir[a] = 1.0;
            let plus = metric(&p.offset(&dir, h))?;
            let minus = metric(&p.offset(&dir, -h))?;
            Ok((plus.matrix() - minus.matrix()) / (2.0 * h))
        })
        .collect()
}

/// Killing, holomorphicity and commutation residuals of the Lee fields.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KillingResiduals {
    pub lie_g_lee: f64,
    pub lie_g_anti_lee: f64,
    pub lie_i_lee: f64,
    pub lie_i_anti_lee: f64,
    pub bracket: f64,
}

impl KillingResiduals {
    pub fn max(&self) -> f64 {
        [
            self.lie_g_lee,
            self.lie_g_anti_lee,
            self.lie_i_lee,
            self.lie_i_anti_lee,
            self.bracket,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn check_killing_commuting(model: &VaismanModel, p: &ChartPoint, h: f64) -> Result<KillingResiduals> {
    let st = model.structure(p)?;
    match model {
        VaismanModel::Hopf(_) => {
            let lee = |q: &ChartPoint| Ok(model.structure(q)?.lee_field.comps().to_vec());
            let anti = |q: &ChartPoint| Ok(model.structure(q)?.anti_lee_field().comps().to_vec());
            let d_lee = jacobian_fd(lee, p, h)?;
            let d_anti = jacobian_fd(anti, p, h)?;
            let dg = metric_derivatives(&|q: &ChartPoint| Ok(model.structure(q)?.metric), p, h)?;
            let g = st.metric.matrix();
            let i = st.complex.matrix();
            let lie_g = |x: &[f64], dx: &DMatrix<f64>| {
                let mut out = g * dx + dx.transpose() * g;
                for (k, xk) in x.iter().enumerate() {
                    out += &dg[k] * *xk;
                }
                out.norm()
            };
            let lie_i = |dx: &DMatrix<f64>| (i * dx - dx * i).norm();
            let x = st.lee_field.comps();
            let y = st.anti_lee_field();
            let y = y.comps();
            let bracket = &d_anti * nalgebra::DVector::from_column_slice(x)
                - &d_lee * nalgebra::DVector::from_column_slice(y);
            Ok(KillingResiduals {
                lie_g_lee: lie_g(x, &d_lee),
                lie_g_anti_lee: lie_g(y, &d_anti),
                lie_i_lee: lie_i(&d_lee),
                lie_i_anti_lee: lie_i(&d_anti),
                bracket: bracket.norm(),
            })
        }
        VaismanModel::Nil(nil) => {
            let m = model.real_dim();
            let c = nil.constants();
            let ad = |x: &[f64]| {
                DMatrix::from_fn(m, m, |k, i| (0..m).map(|a| x[a] * c[k][a][i]).sum::<f64>())
            };
            let g = st.metric.matrix();
            let i = st.complex.matrix();
            let x = st.lee_field.comps().to_vec();
            let y = st.anti_lee_field().comps().to_vec();
            let (ax, ay) = (ad(&x), ad(&y));
            let lie_g = |a: &DMatrix<f64>| (a.transpose() * g + g * a).norm();
            let lie_i = |a: &DMatrix<f64>| (a * i - i * a).norm();
            let bracket = &ax * nalgebra::DVector::from_column_slice(&y);
            Ok(KillingResiduals {
                lie_g_lee: lie_g(&ax),
                lie_g_anti_lee: lie_g(&ay),
                lie_i_lee: lie_i(&ax),
                lie_i_anti_lee: lie_i(&ay),
                bracket: bracket.norm(),
            })
        }
    }
}

/// Pointwise estimates of the homothety character of the deck map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CharacterEstimate {
    pub value: f64,
    pub spread: f64,
    /// Largest deviation from proportionality `γ*ω̃ = χ ω̃`.
    pub proportionality: f64,
}

/// `γ*ω̃ / ω̃` for `γ(z) = αz` and `ω̃ = dd^c r²`, at each point.
pub fn homothety_character(model: &HopfModel, points: &[ChartPoint]) -> Result<CharacterEstimate> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("no sample points".into()));
    }
    let m = 2 * model.n();
    let alpha = model.alpha();
    let complex = model.complex_structure();
    let kahler = |q: &ChartPoint| -> Result<AlternatingForm> {
        super::numerical_exterior_derivative(
            |y| {
                let dr2 = AlternatingForm::one_form(&y.coords.iter().map(|x| 2.0 * x).collect::<Vec<_>>())?;
                apply_complex_structure(complex, &dr2)
            },
            q,
            1e-3,
        )
    };
    let gamma = DMatrix::identity(m, m) * alpha;
    let mut values = Vec::with_capacity(points.len());
    let mut prop = 0.0f64;
    for p in points {
        let q = ChartPoint::new(p.coords.iter().map(|x| alpha * x).collect());
        let base = kahler(p)?;
        let pulled = pullback_linear(&gamma, &kahler(&q)?)?;
        let nn: f64 = base.coeffs().iter().map(|x| x * x).sum();
        if nn == 0.0 {
            return Err(Error::ZeroDenominator);
        }
        let chi = base.coeffs().iter().zip(pulled.coeffs()).map(|(a, b)| a * b).sum::<f64>() / nn;
        prop = prop.max((&pulled - &base.scale(chi)).coeff_norm() / nn.sqrt());
        values.push(chi);
    }
    let max = values.iter().cloned().fold(f64::MIN, f64::max);
    let min = values.iter().cloned().fold(f64::MAX, f64::min);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(CharacterEstimate {
        value: mean,
        spread: max - min,
        proportionality: prop,
    })
}

/// Leaf-space displacement after flowing the Lee (or anti-Lee) field for time `t`.
pub fn leaf_drift(model: &VaismanModel, p: &ChartPoint, t: f64, anti: bool) -> Result<f64> {
    let q = model.lee_flow(p, t, anti)?;
    let a = model.leaf_project(p)?;
    let b = model.leaf_project(&q)?;
    Ok(a.iter()
        .zip(&b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// All pointwise identity residuals at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentityResiduals {
    pub lee_length: f64,
    pub lck: f64,
    pub structure: f64,
    pub kernel: KernelReport,
    pub semipositivity: f64,
    pub contraction: f64,
    pub parallel: f64,
    pub killing: KillingResiduals,
}

pub fn check_identities(
    model: &VaismanModel,
    p: &ChartPoint,
    h: f64,
    convention: DcConvention,
) -> Result<IdentityResiduals> {
    let st = model.structure(p)?;
    Ok(IdentityResiduals {
        lee_length: (crate::exterior::form_norm(&st.metric, &st.theta)? - 1.0).abs(),
        lck: check_lck(model, p, h)?,
        structure: check_structure_identity_with(model, p, h, convention)?,
        kernel: check_foliation_kernel(model, p)?,
        semipositivity: semipositivity(&st)?,
        contraction: check_contraction(model, p)?,
        parallel: check_parallel_lee(model, p, h)?,
        killing: check_killing_commuting(model, p, h)?,
    })
}

/// Residuals of the finite-difference checks (LCK, structure identity,
/// parallel Lee form, Killing along θ♯), summed over points.
pub fn fd_residual_profile(model: &VaismanModel, points: &[ChartPoint], h: f64) -> Result<[f64; 4]> {
    let mut out = [0.0; 4];
    for p in points {
        out[0] += check_lck(model, p, h)?;
        out[1] += check_structure_identity(model, p, h)?;
        out[2] += check_parallel_lee(model, p, h)?;
        out[3] += check_killing_commuting(model, p, h)?.lie_g_lee;
    }
    Ok(out)
}

/// Observed order `log2(res(h) / res(h/2))` for each finite-difference check.
pub fn fd_convergence_order(model: &VaismanModel, points: &[ChartPoint], h: f64) -> Result<[f64; 4]> {
    let coarse = fd_residual_profile(model, points, h)?;
    let fine = fd_residual_profile(model, points, 0.5 * h)?;
    let mut out = [0.0; 4];
    for k in 0..4 {
        out[k] = (coarse[k] / fine[k]).log2();
    }
    Ok(out)
}
