use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

const D: usize = 4;

/// Uniform `N⁴` grid on the flat torus `R⁴/(2πZ)⁴` with spectral differentiation.
///
/// Node `(i1, i2, i3, i4)` sits at `x_d = 2π i_d / N` and has linear index
/// `((i1 N + i2) N + i3) N + i4`.
#[derive(Clone)]
pub struct TorusGrid {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Wavenumber per axis index, Nyquist as `-N/2`.
    wave: Vec<f64>,
    /// First-derivative wavenumber, Nyquist zeroed.
    wave_d1: Vec<f64>,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid").field("n", &self.n).finish()
    }
}

/// Value, gradient and Hessian of a trigonometric interpolant at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusSample {
    pub value: f64,
    pub gradient: [f64; D],
    pub hessian: [[f64; D]; D],
}

/// Normalized spectrum of a grid field, for off-grid evaluation.
#[derive(Clone, Debug)]
pub struct TorusInterpolant {
    n: usize,
    coeffs: Vec<Complex64>,
}

impl TorusGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidArgument(format!("torus grid size must be even and ≥ 8, got {n}")));
        }
        let mut planner = FftPlanner::new();
        let wave: Vec<f64> = (0..n)
            .map(|i| if i < n / 2 { i as f64 } else { i as f64 - n as f64 })
            .collect();
        let wave_d1 = wave
            .iter()
            .enumerate()
            .map(|(i, &k)| if i == n / 2 { 0.0 } else { k })
            .collect();
        Ok(Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            wave,
            wave_d1,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n.pow(D as u32)
    }

    pub fn cell_weight(&self) -> f64 {
        (TAU / self.n as f64).powi(D as i32)
    }

    pub fn digits(&self, mut i: usize) -> [usize; D] {
        let mut out = [0; D];
        for d in (0..D).rev() {
            out[d] = i % self.n;
            i /= self.n;
        }
        out
    }

    pub fn node(&self, i: usize) -> [f64; D] {
        let dg = self.digits(i);
        let h = TAU / self.n as f64;
        [dg[0] as f64 * h, dg[1] as f64 * h, dg[2] as f64 * h, dg[3] as f64 * h]
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let plan = if inverse { &self.inverse } else { &self.forward };
        let n = self.n;
        let total = data.len();
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
        let mut buf = Vec::new();
        for axis in (0..D - 1).rev() {
            let stride = n.pow((D - 1 - axis) as u32);
            let block = stride * n;
            buf.resize(block, Complex64::new(0.0, 0.0));
            for start in (0..total).step_by(block) {
                for o in 0..stride {
                    for k in 0..n {
                        buf[o * n + k] = data[start + o + k * stride];
                    }
                }
                plan.process_with_scratch(&mut buf, &mut scratch);
                for o in 0..stride {
                    for k in 0..n {
                        data[start + o + k * stride] = buf[o * n + k];
                    }
                }
            }
        }
        if inverse {
            let s = 1.0 / total as f64;
            for v in data.iter_mut() {
                *v *= s;
            }
        }
    }

    pub fn spectrum(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, false);
        data
    }

    pub fn from_spectrum(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut spec, true);
        spec.into_iter().map(|c| c.re).collect()
    }

    /// Wavenumbers of a linear mode index: `(full, first-derivative)`.
    pub fn mode_waves(&self, i: usize) -> ([f64; D], [f64; D]) {
        let dg = self.digits(i);
        let mut k = [0.0; D];
        let mut kd = [0.0; D];
        for d in 0..D {
            k[d] = self.wave[dg[d]];
            kd[d] = self.wave_d1[dg[d]];
        }
        (k, kd)
    }

    /// Symbol of `∂_a ∂_b`: `-k_a²` on the diagonal (Nyquist kept),
    /// `-k_a k_b` off it (Nyquist zeroed).
    pub fn hessian_symbol(k: &[f64; D], kd: &[f64; D], a: usize, b: usize) -> f64 {
        if a == b {
            -k[a] * k[a]
        } else {
            -kd[a] * kd[b]
        }
    }

    /// Multiply the spectrum by a real symbol and transform back.
    pub fn apply_symbol<F>(&self, spec: &[Complex64], symbol: F) -> Vec<f64>
    where
        F: Fn(&[f64; D], &[f64; D]) -> f64,
    {
        let out: Vec<Complex64> = spec
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let (k, kd) = self.mode_waves(i);
                c * symbol(&k, &kd)
            })
            .collect();
        self.from_spectrum(out)
    }

    /// Fraction of non-constant energy in modes with some `|k_d| > N/3`.
    pub fn top_band_fraction(&self, values: &[f64]) -> f64 {
        let spec = self.spectrum(values);
        let cut = self.n as f64 / 3.0;
        let (mut top, mut total) = (0.0, 0.0);
        for (i, c) in spec.iter().enumerate().skip(1) {
            let e = c.norm_sqr();
            total += e;
            let (k, _) = self.mode_waves(i);
            if k.iter().any(|v| v.abs() > cut) {
                top += e;
            }
        }
        if total <= 1e-24 * (total + spec[0].norm_sqr()) {
            0.0
        } else {
            top / total
        }
    }

    /// Trigonometric interpolant.
    pub fn interpolant(&self, values: &[f64]) -> TorusInterpolant {
        let scale = 1.0 / self.len() as f64;
        let coeffs = self.spectrum(values).into_iter().map(|c| c * scale).collect();
        TorusInterpolant { n: self.n, coeffs }
    }
}

type C = Complex64;
const ZERO: C = C::new(0.0, 0.0);

impl TorusInterpolant {
    pub fn num_modes(&self) -> usize {
        self.coeffs.iter().filter(|c| c.norm() > 0.0).count()
    }

    /// Evaluate with the symmetric Nyquist convention: along an axis whose
    /// index is `N/2` the mode is `cos(N x / 2)`.
    ///
    /// The sum is contracted one axis at a time, last axis first, keeping
    /// derivative orders with total at most 2.
    pub fn evaluate(&self, x: &[f64]) -> TorusSample {
        let n = self.n;
        // f[d][i][o]: o-th derivative of the axis-d factor of index i.
        let mut f = vec![vec![[ZERO; 3]; n]; D];
        for (d, fd) in f.iter_mut().enumerate() {
            for (i, fi) in fd.iter_mut().enumerate() {
                if i == n / 2 {
                    let k = (n / 2) as f64;
                    let (c, s) = ((k * x[d]).cos(), (k * x[d]).sin());
                    *fi = [C::new(c, 0.0), C::new(-k * s, 0.0), C::new(-k * k * c, 0.0)];
                } else {
                    let k = if i < n / 2 { i as f64 } else { i as f64 - n as f64 };
                    let e = C::from_polar(1.0, k * x[d]);
                    *fi = [e, e * C::new(0.0, k), e * (-k * k)];
                }
            }
        }
        let t3: Vec<[C; 3]> = self
            .coeffs
            .chunks(n)
            .map(|row| {
                let mut acc = [ZERO; 3];
                for (c, fi) in row.iter().zip(&f[3]) {
                    for o in 0..3 {
                        acc[o] += c * fi[o];
                    }
                }
                acc
            })
            .collect();
        let t2: Vec<[[C; 3]; 3]> = t3
            .chunks(n)
            .map(|block| {
                let mut acc = [[ZERO; 3]; 3];
                for (t, fi) in block.iter().zip(&f[2]) {
                    for o2 in 0..3 {
                        for o3 in 0..3 - o2 {
                            acc[o2][o3] += t[o3] * fi[o2];
                        }
                    }
                }
                acc
            })
            .collect();
        let t1: Vec<[[[C; 3]; 3]; 3]> = t2
            .chunks(n)
            .map(|block| {
                let mut acc = [[[ZERO; 3]; 3]; 3];
                for (t, fi) in block.iter().zip(&f[1]) {
                    for o1 in 0..3 {
                        for o2 in 0..3 - o1 {
                            for o3 in 0..3 - o1 - o2 {
                                acc[o1][o2][o3] += t[o2][o3] * fi[o1];
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        let mut r = [[[[ZERO; 3]; 3]; 3]; 3];
        for (t, fi) in t1.iter().zip(&f[0]) {
            for o0 in 0..3 {
                for o1 in 0..3 - o0 {
                    for o2 in 0..3 - o0 - o1 {
                        for o3 in 0..3 - o0 - o1 - o2 {
                            r[o0][o1][o2][o3] += t[o1][o2][o3] * fi[o0];
                        }
                    }
                }
            }
        }
        let get = |o: [usize; D]| r[o[0]][o[1]][o[2]][o[3]].re;
        let mut gradient = [0.0; D];
        let mut hessian = [[0.0; D]; D];
        for a in 0..D {
            let mut o = [0; D];
            o[a] = 1;
            gradient[a] = get(o);
            for b in 0..D {
                let mut o = [0; D];
                o[a] += 1;
                o[b] += 1;
                hessian[a][b] = get(o);
            }
        }
        TorusSample {
            value: get([0; D]),
            gradient,
            hessian,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(grid: &TorusGrid, f: impl Fn(&[f64; D]) -> f64) -> Vec<f64> {
        (0..grid.len()).map(|i| f(&grid.node(i))).collect()
    }

    #[test]
    fn fft_round_trip_and_derivatives() {
        let grid = TorusGrid::new(8).unwrap();
        let v = field(&grid, |x| (x[0] + 2.0 * x[3]).sin() + (x[1] - x[2]).cos());
        let spec = grid.spectrum(&v);
        let back = grid.from_spectrum(spec.clone());
        assert!(v.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-13));
        let d03 = grid.apply_symbol(&spec, |k, kd| TorusGrid::hessian_symbol(k, kd, 0, 3));
        let exact = field(&grid, |x| -2.0 * (x[0] + 2.0 * x[3]).sin());
        assert!(d03.iter().zip(&exact).all(|(a, b)| (a - b).abs() < 1e-12));
        let d22 = grid.apply_symbol(&spec, |k, kd| TorusGrid::hessian_symbol(k, kd, 2, 2));
        let exact = field(&grid, |x| -(x[1] - x[2]).cos());
        assert!(d22.iter().zip(&exact).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn interpolant_reproduces_nodes_and_derivatives() {
        let grid = TorusGrid::new(8).unwrap();
        let f = |x: &[f64; D]| (x[0] + x[1]).sin() * 0.3 + (2.0 * x[2]).cos() * (x[3]).sin() + (4.0 * x[1]).cos();
        let v = field(&grid, f);
        let it = grid.interpolant(&v);
        for i in [0, 17, 400, 4000] {
            let s = it.evaluate(&grid.node(i));
            assert!((s.value - v[i]).abs() < 1e-12);
        }
        let x = [0.31, 1.7, 2.9, 5.1];
        let s = it.evaluate(&x);
        assert!((s.value - f(&x)).abs() < 1e-12);
        let h = 1e-4;
        for a in 0..D {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            let fd = (it.evaluate(&xp).value - it.evaluate(&xm).value) / (2.0 * h);
            assert!((fd - s.gradient[a]).abs() < 1e-6);
            for b in 0..D {
                let fd2 = (it.evaluate(&xp).gradient[b] - it.evaluate(&xm).gradient[b]) / (2.0 * h);
                assert!((fd2 - s.hessian[a][b]).abs() < 1e-5, "{a} {b}");
            }
        }
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(TorusGrid::new(6).is_err());
        assert!(TorusGrid::new(9).is_err());
    }
}
