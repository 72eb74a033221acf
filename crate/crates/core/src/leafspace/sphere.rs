use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

/// Gauss-Legendre × uniform-longitude grid on the unit sphere with an exact
/// real spherical-harmonic transform up to degree `L`.
///
/// Nodes are ordered latitude-major (colatitude increasing), longitude fastest.
#[derive(Clone, Debug)]
pub struct SphereGrid {
    band: usize,
    nlat: usize,
    nlon: usize,
    colat: Vec<f64>,
    lon: Vec<f64>,
    weights: Vec<f64>,
    lat_weights: Vec<f64>,
    /// `cos`, `sin` of `2π k / nlon`.
    trig: Vec<(f64, f64)>,
    /// `P̄_l^m(cos θ_i)` at `legendre[assoc_index(l, m)][i]`, `m ≥ 0`.
    legendre: Vec<Vec<f64>>,
}

/// Offset of the real harmonic `Y_lm` in a coefficient vector, `-l ≤ m ≤ l`.
pub fn coeff_index(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

fn assoc_index(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes decreasing.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, z);
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (z * p1 - p0) / (z * z - 1.0))
}

/// Orthonormal associated Legendre functions `P̄_l^m(x)` for `l ≤ band`,
/// normalized so that `Y_l0 = P̄_l^0` has unit `L²` norm on the sphere.
fn normalized_legendre(band: usize, x: f64) -> Vec<f64> {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut out = vec![0.0; assoc_index(band, band) + 1];
    let mut pmm = (1.0 / (4.0 * PI)).sqrt();
    for m in 0..=band {
        if m > 0 {
            pmm *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s;
        }
        out[assoc_index(m, m)] = pmm;
        if m + 1 <= band {
            out[assoc_index(m + 1, m)] = ((2 * m + 3) as f64).sqrt() * x * pmm;
        }
        for l in m + 2..=band {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            out[assoc_index(l, m)] = a * (x * out[assoc_index(l - 1, m)] - b * out[assoc_index(l - 2, m)]);
        }
    }
    out
}

/// Value, tangential gradient (in `R³`) and Laplacian of a band-limited
/// function at a point of the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereSample {
    pub value: f64,
    pub gradient: [f64; 3],
    pub laplacian: f64,
}

impl SphereGrid {
    pub fn new(band: usize) -> Result<Self> {
        if band < 2 {
            return Err(Error::InvalidArgument(format!("sphere band limit must be ≥ 2, got {band}")));
        }
        let nlat = band + 1;
        let nlon = 2 * band + 2;
        let (x, wl) = gauss_legendre(nlat);
        let colat: Vec<f64> = x.iter().map(|v| v.acos()).collect();
        let lon: Vec<f64> = (0..nlon).map(|j| TAU * j as f64 / nlon as f64).collect();
        let dphi = TAU / nlon as f64;
        let mut weights = Vec::with_capacity(nlat * nlon);
        for w in &wl {
            weights.extend(std::iter::repeat(w * dphi).take(nlon));
        }
        let per_lat: Vec<Vec<f64>> = x.iter().map(|&xi| normalized_legendre(band, xi)).collect();
        let legendre = (0..per_lat[0].len())
            .map(|k| per_lat.iter().map(|row| row[k]).collect())
            .collect();
        let trig = (0..nlon)
            .map(|k| {
                let a = TAU * k as f64 / nlon as f64;
                (a.cos(), a.sin())
            })
            .collect();
        Ok(Self {
            band,
            trig,
            nlat,
            nlon,
            colat,
            lon,
            weights,
            lat_weights: wl,
            legendre,
        })
    }

    pub fn band(&self) -> usize {
        self.band
    }

    pub fn len(&self) -> usize {
        self.nlat * self.nlon
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nlat, self.nlon)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(colatitude, longitude)` of node `i`.
    pub fn node(&self, i: usize) -> (f64, f64) {
        (self.colat[i / self.nlon], self.lon[i % self.nlon])
    }

    /// Unit vector of node `i`.
    pub fn node_point(&self, i: usize) -> [f64; 3] {
        let (t, p) = self.node(i);
        [t.sin() * p.cos(), t.sin() * p.sin(), t.cos()]
    }

    pub fn num_coeffs(&self) -> usize {
        (self.band + 1) * (self.band + 1)
    }

    /// Quadrature projection onto `Y_lm`, `l ≤ L`; exact for band-limited input.
    pub fn analysis(&self, values: &[f64]) -> Vec<f64> {
        let mut coeffs = vec![0.0; self.num_coeffs()];
        let dphi = TAU / self.nlon as f64;
        for i in 0..self.nlat {
            let row = &values[i * self.nlon..(i + 1) * self.nlon];
            for m in 0..=self.band {
                let (mut c, mut s) = (0.0, 0.0);
                for (j, v) in row.iter().enumerate() {
                    let (cj, sj) = self.trig[(m * j) % self.nlon];
                    c += v * cj;
                    s += v * sj;
                }
                let scale = self.lat_weights[i] * dphi;
                let factor = if m == 0 { 1.0 } else { 2f64.sqrt() };
                for l in m..=self.band {
                    let p = self.legendre[assoc_index(l, m)][i] * scale * factor;
                    coeffs[coeff_index(l, m as i64)] += p * c;
                    if m > 0 {
                        coeffs[coeff_index(l, -(m as i64))] += p * s;
                    }
                }
            }
        }
        coeffs
    }

    pub fn synthesis(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut values = vec![0.0; self.len()];
        for i in 0..self.nlat {
            for m in 0..=self.band {
                let (mut c, mut s) = (0.0, 0.0);
                let factor = if m == 0 { 1.0 } else { 2f64.sqrt() };
                for l in m..=self.band {
                    let p = self.legendre[assoc_index(l, m)][i] * factor;
                    c += p * coeffs[coeff_index(l, m as i64)];
                    if m > 0 {
                        s += p * coeffs[coeff_index(l, -(m as i64))];
                    }
                }
                if c == 0.0 && s == 0.0 {
                    continue;
                }
                for j in 0..self.nlon {
                    let (cj, sj) = self.trig[(m * j) % self.nlon];
                    values[i * self.nlon + j] += c * cj + s * sj;
                }
            }
        }
        values
    }

    /// Multiply coefficient `(l, m)` by `symbol(l)`.
    pub fn apply_degree_symbol<F: Fn(usize) -> f64>(&self, values: &[f64], symbol: F) -> Vec<f64> {
        let mut coeffs = self.analysis(values);
        for l in 0..=self.band {
            let s = symbol(l);
            for m in -(l as i64)..=(l as i64) {
                coeffs[coeff_index(l, m)] *= s;
            }
        }
        self.synthesis(&coeffs)
    }

    /// Fraction of the non-constant energy carried by degrees above `2L/3`.
    pub fn top_band_fraction(&self, values: &[f64]) -> f64 {
        let coeffs = self.analysis(values);
        let cut = 2 * self.band / 3;
        let (mut top, mut total) = (0.0, 0.0);
        for l in 1..=self.band {
            for m in -(l as i64)..=(l as i64) {
                let e = coeffs[coeff_index(l, m)].powi(2);
                total += e;
                if l > cut {
                    top += e;
                }
            }
        }
        if total <= 1e-24 * (total + coeffs[0] * coeffs[0]) {
            0.0
        } else {
            top / total
        }
    }

    /// Real spherical harmonic `Y_lm` sampled on the grid.
    pub fn harmonic(&self, l: usize, m: i64) -> Vec<f64> {
        let mut coeffs = vec![0.0; self.num_coeffs()];
        coeffs[coeff_index(l, m)] = 1.0;
        self.synthesis(&coeffs)
    }

    /// Off-grid evaluation of a band-limited function from its coefficients.
    pub fn evaluate(&self, coeffs: &[f64], point: &[f64]) -> SphereSample {
        let norm = (point[0] * point[0] + point[1] * point[1] + point[2] * point[2]).sqrt();
        let x = (point[2] / norm).clamp(-1.0, 1.0);
        let theta = x.acos();
        let phi = point[1].atan2(point[0]);
        let sin_t = theta.sin().max(1e-300);
        let p = normalized_legendre(self.band, x);
        let (mut value, mut d_theta, mut d_phi, mut lap) = (0.0, 0.0, 0.0, 0.0);
        for l in 0..=self.band {
            let lf = l as f64;
            for m in 0..=l {
                let factor = if m == 0 { 1.0 } else { 2f64.sqrt() };
                let pl = p[assoc_index(l, m)];
                let lower = if l > m { p[assoc_index(l - 1, m)] } else { 0.0 };
                let mf = m as f64;
                // (1 - x²) dP/dx = sqrt((2l+1)/(2l-1) (l²-m²)) P_{l-1} - l x P_l
                let c = if l > m {
                    ((2.0 * lf + 1.0) / (2.0 * lf - 1.0) * (lf * lf - mf * mf)).sqrt()
                } else {
                    0.0
                };
                let dp_dtheta = (lf * x * pl - c * lower) / sin_t;
                let (cm, sm) = ((mf * phi).cos(), (mf * phi).sin());
                let a = coeffs[coeff_index(l, m as i64)] * factor;
                let b = if m > 0 {
                    coeffs[coeff_index(l, -(m as i64))] * factor
                } else {
                    0.0
                };
                let ang = a * cm + b * sm;
                value += pl * ang;
                lap -= lf * (lf + 1.0) * pl * ang;
                d_theta += dp_dtheta * ang;
                d_phi += pl * mf * (b * cm - a * sm);
            }
        }
        let (ct, st) = (theta.cos(), theta.sin());
        let (cp, sp) = (phi.cos(), phi.sin());
        let e_theta = [ct * cp, ct * sp, -st];
        let e_phi = [-sp, cp, 0.0];
        let g = d_phi / sin_t;
        SphereSample {
            value,
            gradient: [
                d_theta * e_theta[0] + g * e_phi[0],
                d_theta * e_theta[1] + g * e_phi[1],
                d_theta * e_theta[2] + g * e_phi[2],
            ],
            laplacian: lap,
        }
    }
}
