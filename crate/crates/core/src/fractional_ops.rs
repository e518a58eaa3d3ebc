//! The fractional Laplacian and the H^{s/2} seminorm in its spectral,
//! double-integral and extension forms.
//!
//! The singular integral is discretized as a translation-invariant sum, so it
//! is a Fourier multiplier on the grid. Two kernel tables are provided:
//!
//! * [`DiscreteKernel::PointCorrected`]: point values of K_s with the
//!   leading singular-cell error removed by a lattice-moment correction.
//!   Second order for smooth fields.
//! * [`DiscreteKernel::CellAveraged`]: K_s averaged over pairs of grid cells.
//!   Exact for fields that are constant on cells, i.e. pixelated sets.

use crate::error::{invalid, Result};
use crate::fft::{convolve, forward_real};
use crate::kernel::{alpha_ns, EwaldKernel};
use crate::manifold::{Domain, GridField};
use crate::special::{self, gauss_legendre_on};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscreteKernel {
    PointCorrected,
    CellAveraged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeminormMethod {
    Spectral,
    DoubleIntegral,
    Extension,
}

/// Real-space table and Fourier multiplier of a discretized K_s.
#[derive(Debug, Clone)]
pub struct KernelTables {
    pub s: f64,
    pub kind: DiscreteKernel,
    /// K at every grid offset (flat FFT order); zero at the origin.
    pub table: Vec<f64>,
    /// Unnormalized DFT of `table`.
    pub table_hat: Vec<Complex64>,
    /// Symbol μ_k with Σ_{ij} (u_i - u_j)^2 K w^2 = 2 Σ_k μ_k |û_k|^2.
    pub multiplier: Vec<f64>,
    /// α D_i per axis; the local term subtracted in the point-corrected scheme.
    pub moment_correction: Vec<f64>,
}

type TableKey = (Vec<usize>, Vec<u64>, u64, DiscreteKernel);

/// Kernel tables for a domain, memoized per (grid, sides, s, kind).
pub fn kernel_tables(domain: &Domain, s: f64, kind: DiscreteKernel) -> Result<Arc<KernelTables>> {
    if !(s > 0.0 && s < 2.0) {
        return Err(invalid("s", format!("must lie in (0, 2), got {s}")));
    }
    if kind == DiscreteKernel::CellAveraged && s >= 1.0 {
        return Err(invalid("s", "cell-averaged kernel needs s < 1"));
    }
    static CACHE: OnceLock<Mutex<HashMap<TableKey, Arc<KernelTables>>>> = OnceLock::new();
    let key = (
        domain.shape().to_vec(),
        domain.torus.side_lengths().iter().map(|l| l.to_bits()).collect(),
        s.to_bits(),
        kind,
    );
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(t) = cache.lock().expect("kernel cache poisoned").get(&key) {
        return Ok(t.clone());
    }
    let tables = Arc::new(build_tables(domain, s, kind));
    cache
        .lock()
        .expect("kernel cache poisoned")
        .insert(key, tables.clone());
    Ok(tables)
}

fn build_tables(domain: &Domain, s: f64, kind: DiscreteKernel) -> KernelTables {
    let ewald = EwaldKernel::new(&domain.torus, s);
    let point = ewald.grid_table(domain);
    let table = match kind {
        DiscreteKernel::PointCorrected => point,
        DiscreteKernel::CellAveraged => cell_averaged_table(domain, s, &ewald, &point),
    };
    let table_hat = forward_real(&table, domain.shape());
    let w = domain.cell_volume();
    let k0 = table_hat[0].re;
    let mut multiplier: Vec<f64> = table_hat.iter().map(|c| w * (k0 - c.re)).collect();
    let moment_correction = match kind {
        DiscreteKernel::PointCorrected => {
            let alpha = alpha_ns(domain.dim(), s);
            let d = lattice_moment_correction(&domain.spacings(), s);
            let corr: Vec<f64> = d.iter().map(|v| alpha * v).collect();
            for (a, c) in corr.iter().enumerate() {
                let n = domain.shape()[a];
                let l = domain.torus.side_lengths()[a];
                for (f, m) in multiplier.iter_mut().enumerate() {
                    let k = crate::manifold::signed_mode(domain.multi_index(f)[a], n) as f64;
                    let kappa = 2.0 * PI * k / l;
                    *m -= 0.5 * c * kappa * kappa;
                }
            }
            corr
        }
        DiscreteKernel::CellAveraged => vec![0.0; domain.dim()],
    };
    KernelTables {
        s,
        kind,
        table,
        table_hat,
        multiplier,
        moment_correction,
    }
}

/// Regularized lattice moments D_i = Σ'_j w z_i^2 |z|^{-(n+s)} - ∫ z_i^2 |z|^{-(n+s)} dz
/// over the grid lattice z = h∘j, by the heat (theta-function) representation.
pub fn lattice_moment_correction(spacings: &[f64], s: f64) -> Vec<f64> {
    let n = spacings.len();
    let nf = n as f64;
    let a = 0.5 * (nf + s);
    let w: f64 = spacings.iter().product();
    let hmax = spacings.iter().cloned().fold(0.0, f64::max);
    let hmin = spacings.iter().cloned().fold(f64::INFINITY, f64::min);
    let t_min = PI * PI / (60.0 * hmax * hmax);
    let t_max = 60.0 / (hmin * hmin);
    let (tau0, tau1) = (t_min.ln(), t_max.ln());
    let steps = ((tau1 - tau0) / 0.02).ceil() as usize;
    let dtau = (tau1 - tau0) / steps as f64;
    let gaussian_moment = |t: f64| 0.5 / t * (PI / t).powf(0.5 * nf);
    (0..n)
        .map(|i| {
            let mut sum = 0.0;
            for step in 0..=steps {
                let t = (tau0 + dtau * step as f64).exp();
                let mut lattice = w;
                for (l, &h) in spacings.iter().enumerate() {
                    let (theta, moment) = theta_pair(t, h);
                    lattice *= if l == i { moment } else { theta };
                }
                let f = t.powf(a) * (lattice - gaussian_moment(t));
                let weight = if step == 0 || step == steps { 0.5 } else { 1.0 };
                sum += weight * f;
            }
            // at t_max the integrand is a pure exponential e^{bτ}; Euler–Maclaurin end terms
            let b = a - 0.5 * nf - 1.0;
            let f_end = -t_max.powf(a) * gaussian_moment(t_max);
            let body = sum * dtau - dtau * dtau / 12.0 * b * f_end + dtau.powi(4) / 720.0 * b.powi(3) * f_end;
            // ∫_{t_max}^∞ t^{a-1} of the Gaussian moment; the lattice part is negligible there
            let tail = 0.5 * PI.powf(0.5 * nf) * t_max.powf(a - 0.5 * nf - 1.0) / (0.5 * nf + 1.0 - a);
            (body - tail) / special::gamma(a)
        })
        .collect()
}

/// θ(t) = Σ_j e^{-t h² j²} and M(t) = Σ_j (hj)² e^{-t h² j²}.
fn theta_pair(t: f64, h: f64) -> (f64, f64) {
    let x = t * h * h;
    if x >= 1.0 {
        let mut theta = 1.0;
        let mut moment = 0.0;
        for j in 1..64 {
            let jf = j as f64;
            let e = (-x * jf * jf).exp();
            theta += 2.0 * e;
            moment += 2.0 * h * h * jf * jf * e;
            if e < 1e-20 {
                break;
            }
        }
        (theta, moment)
    } else {
        // Poisson dual: θ = √π/h t^{-1/2} (1 + 2 Σ e^{-c k²/t}), c = π²/h², M = -dθ/dt
        let c = PI * PI / (h * h);
        let mut e_sum = 0.0;
        let mut de_sum = 0.0;
        for k in 1..64 {
            let kf = (k * k) as f64;
            let e = (-c * kf / t).exp();
            e_sum += e;
            de_sum += c * kf / (t * t) * e;
            if e < 1e-20 {
                break;
            }
        }
        let pre = PI.sqrt() / h;
        let theta = pre * t.powf(-0.5) * (1.0 + 2.0 * e_sum);
        let dtheta = pre * (-0.5 * t.powf(-1.5) * (1.0 + 2.0 * e_sum) + t.powf(-0.5) * 2.0 * de_sum);
        (theta, -dtheta)
    }
}

/// Average of |h∘(j+t)|^{-(n+s)} over t ∈ [-1,1]^n with weight Π(1-|t_i|).
pub fn cell_pair_average(j: &[i64], h: &[f64], s: f64) -> f64 {
    let n = j.len();
    let p = n as f64 + s;
    if n == 1 {
        let f = |r: f64| r.abs().powf(1.0 - s) / (-s * (1.0 - s));
        let jf = j[0] as f64;
        return h[0].powf(-p) * (f(jf + 1.0) - 2.0 * f(jf) + f(jf - 1.0));
    }
    let jmax = j.iter().map(|v| v.abs()).max().unwrap_or(0);
    assert!(jmax > 0, "cell average is infinite on the diagonal");
    if jmax >= 2 {
        let m = match jmax {
            2 => 10,
            3..=4 => 8,
            5..=8 => 6,
            9..=32 => 4,
            _ => 3,
        };
        return smooth_cell_average(j, h, p, m);
    }
    // |j|_∞ = 1: split into orthants; singular ones get a pyramid (Duffy) map.
    let mut total = 0.0;
    for mask in 0..(1usize << n) {
        let sigma: Vec<i64> = (0..n).map(|i| if mask >> i & 1 == 1 { 1 } else { -1 }).collect();
        let away = (0..n).any(|i| j[i] != 0 && sigma[i] == j[i]);
        if away {
            total += orthant_regular(j, &sigma, h, p);
        } else {
            total += orthant_singular(j, h, p, s);
        }
    }
    total
}

/// Tensor Gauss rule on the orthant pieces; valid away from the singularity.
fn smooth_cell_average(j: &[i64], h: &[f64], p: f64, m: usize) -> f64 {
    let n = j.len();
    let rule: Vec<(f64, f64)> = gauss_legendre_on(m, -1.0, 0.0)
        .into_iter()
        .chain(gauss_legendre_on(m, 0.0, 1.0))
        .map(|(t, w)| (t, w * (1.0 - t.abs())))
        .collect();
    tensor_sum(n, &rule, |t| {
        let r2: f64 = (0..n).map(|i| (h[i] * (j[i] as f64 + t[i])).powi(2)).sum();
        r2.powf(-0.5 * p)
    })
}

fn orthant_regular(j: &[i64], sigma: &[i64], h: &[f64], p: f64) -> f64 {
    let n = j.len();
    let base = gauss_legendre_on(16, 0.0, 1.0);
    let rules: Vec<Vec<(f64, f64)>> = (0..n)
        .map(|i| {
            base.iter()
                .map(|&(u, w)| {
                    let t = sigma[i] as f64 * u;
                    (t, w * (1.0 - u))
                })
                .collect()
        })
        .collect();
    tensor_sum_axes(&rules, |t| {
        let r2: f64 = (0..n).map(|i| (h[i] * (j[i] as f64 + t[i])).powi(2)).sum();
        r2.powf(-0.5 * p)
    })
}

/// Orthant whose corner is the singular point. In local coordinates y ∈ [0,1]^n
/// with |z_i| = h_i y_i, the weight is y_i on axes with j_i ≠ 0 and 1 - y_i
/// otherwise. Each pyramid y = u(v with v_p = 1) integrates exactly in u.
fn orthant_singular(j: &[i64], h: &[f64], p: f64, s: f64) -> f64 {
    let n = j.len();
    let rule = gauss_legendre_on(12, 0.0, 1.0);
    let mut total = 0.0;
    for apex in 0..n {
        let others: Vec<usize> = (0..n).filter(|&i| i != apex).collect();
        let rules: Vec<Vec<(f64, f64)>> = others.iter().map(|_| rule.clone()).collect();
        total += tensor_sum_axes(&rules, |v| {
            let mut y = vec![1.0; n];
            for (k, &i) in others.iter().enumerate() {
                y[i] = v[k];
            }
            let rho2: f64 = (0..n).map(|i| (h[i] * y[i]).powi(2)).sum();
            // polynomial Π (c_i + d_i u) in u
            let mut poly = vec![1.0];
            for i in 0..n {
                let (c, d) = if j[i] != 0 { (0.0, y[i]) } else { (1.0, -y[i]) };
                let mut next = vec![0.0; poly.len() + 1];
                for (k, &a) in poly.iter().enumerate() {
                    next[k] += a * c;
                    next[k + 1] += a * d;
                }
                poly = next;
            }
            // ∫_0^1 u^{n-1} u^{-n-s} u^k du = 1/(k - s), k >= 1
            let radial: f64 = poly.iter().enumerate().skip(1).map(|(k, &a)| a / (k as f64 - s)).sum();
            rho2.powf(-0.5 * p) * radial
        });
    }
    total
}

fn tensor_sum(n: usize, rule: &[(f64, f64)], f: impl Fn(&[f64]) -> f64) -> f64 {
    let rules: Vec<Vec<(f64, f64)>> = (0..n).map(|_| rule.to_vec()).collect();
    tensor_sum_axes(&rules, f)
}

fn tensor_sum_axes(rules: &[Vec<(f64, f64)>], f: impl Fn(&[f64]) -> f64) -> f64 {
    let n = rules.len();
    if n == 0 {
        return f(&[]);
    }
    let mut idx = vec![0usize; n];
    let mut x = vec![0.0; n];
    let mut total = 0.0;
    'outer: loop {
        let mut w = 1.0;
        for a in 0..n {
            let (xa, wa) = rules[a][idx[a]];
            x[a] = xa;
            w *= wa;
        }
        total += w * f(&x);
        for a in (0..n).rev() {
            idx[a] += 1;
            if idx[a] < rules[a].len() {
                continue 'outer;
            }
            idx[a] = 0;
        }
        break;
    }
    total
}

/// Cell-pair averages of the periodic kernel at every grid offset.
///
/// The nearest-image Riesz part is averaged by quadrature; the smooth
/// remainder K_per - α|z|^{-(n+s)} by its second-order Taylor moment.
fn cell_averaged_table(domain: &Domain, s: f64, ewald: &EwaldKernel, point: &[f64]) -> Vec<f64> {
    let n = domain.dim();
    let h = domain.spacings();
    let shape = domain.shape().to_vec();
    let alpha = alpha_ns(n, s);
    let p = n as f64 + s;
    let reg0 = ewald.regular_part(&vec![0.0; n]);
    let smooth = |j: &[i64]| -> f64 {
        if j.iter().all(|&v| v == 0) {
            return reg0;
        }
        let idx: Vec<usize> = j
            .iter()
            .zip(&shape)
            .map(|(&v, &m)| v.rem_euclid(m as i64) as usize)
            .collect();
        let r2: f64 = j.iter().zip(&h).map(|(&v, &hi)| (v as f64 * hi).powi(2)).sum();
        point[domain.flat_index(&idx)] - alpha * r2.powf(-0.5 * p)
    };
    (0..domain.len())
        .into_par_iter()
        .map(|f| {
            let j = domain.wave_vector(f);
            if j.iter().all(|&v| v == 0) {
                return 0.0;
            }
            let centre = smooth(&j);
            let mut lap = 0.0;
            for a in 0..n {
                let mut jp = j.clone();
                let mut jm = j.clone();
                jp[a] += 1;
                jm[a] -= 1;
                lap += smooth(&jp) - 2.0 * centre + smooth(&jm);
            }
            alpha * cell_pair_average(&j, &h, s) + centre + lap / 12.0
        })
        .collect()
}

/// Spectral fractional Laplacian: multiplies each coefficient by λ_k^{s/2}.
pub fn frac_laplacian_spectral(field: &GridField, s: f64) -> GridField {
    let symbol: Vec<f64> = field
        .domain
        .eigenvalues()
        .iter()
        .map(|&l| if l == 0.0 { 0.0 } else { l.powf(0.5 * s) })
        .collect();
    field.apply_symbol(&symbol)
}

/// Fraction of spectral energy carried by the top quartile of modes (by |k|_∞
/// relative to Nyquist); large values mean the field is under-resolved.
pub fn high_mode_fraction(field: &GridField) -> f64 {
    let spec = field.to_spectral();
    let domain = &field.domain;
    let mut high = 0.0;
    let mut total = 0.0;
    for (f, c) in spec.coefficients.iter().enumerate() {
        let e = c.norm_sqr();
        total += e;
        let k = domain.wave_vector(f);
        let top = k
            .iter()
            .zip(domain.shape())
            .any(|(&ki, &n)| ki.unsigned_abs() as f64 > 0.375 * n as f64);
        if top {
            high += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        high / total
    }
}

/// A warning message when the top-quartile modes carry more than 1% of the energy.
pub fn resolution_warning(field: &GridField) -> Option<String> {
    let frac = high_mode_fraction(field);
    (frac > 0.01).then(|| format!("top-quartile modes carry {:.2}% of the spectral energy", 100.0 * frac))
}

/// Singular-integral fractional Laplacian Σ_y (u(x)-u(y)) K_s(x,y) w_y plus the
/// singular-cell correction, applied as a Fourier multiplier.
pub fn frac_laplacian_integral(field: &GridField, s: f64) -> Result<GridField> {
    let tables = kernel_tables(&field.domain, s, DiscreteKernel::PointCorrected)?;
    Ok(apply_multiplier(field, &tables.multiplier))
}

/// The same operator by the direct O(N²) pair sum. Used for validation.
pub fn frac_laplacian_integral_direct(field: &GridField, s: f64) -> Result<GridField> {
    let domain = &field.domain;
    let tables = kernel_tables(domain, s, DiscreteKernel::PointCorrected)?;
    let w = domain.cell_volume();
    let shape = domain.shape().to_vec();
    let u = &field.values;
    let raw: Vec<f64> = (0..domain.len())
        .into_par_iter()
        .map(|x| {
            let xi = domain.multi_index(x);
            let mut acc = 0.0;
            for off in 1..domain.len() {
                let oi = domain.multi_index(off);
                let yi: Vec<usize> = xi.iter().zip(&oi).zip(&shape).map(|((a, b), n)| (a + b) % n).collect();
                acc += (u[x] - u[domain.flat_index(&yi)]) * tables.table[off];
            }
            acc * w
        })
        .collect();
    // local correction (1/2) Σ_i α D_i ∂_ii u
    let mut out = raw;
    for (a, &c) in tables.moment_correction.iter().enumerate() {
        let d2 = field.derivative_second(a);
        out.iter_mut().zip(&d2.values).for_each(|(o, v)| *o += 0.5 * c * v);
    }
    GridField::new(domain.clone(), out)
}

fn apply_multiplier(field: &GridField, multiplier: &[f64]) -> GridField {
    field.apply_symbol(multiplier)
}

/// ∬ (u(x)-u(y))^2 K_s over M×M with the chosen discretization.
pub fn double_integral(field: &GridField, s: f64, kind: DiscreteKernel) -> Result<f64> {
    let tables = kernel_tables(&field.domain, s, kind)?;
    let spec = field.to_spectral();
    Ok(2.0
        * spec
            .coefficients
            .iter()
            .zip(&tables.multiplier)
            .map(|(c, m)| m * c.norm_sqr())
            .sum::<f64>())
}

/// ∬ over A×B of (u(x)-u(y))^2 K_s, A and B given as grid masks.
pub fn pair_integral(field: &GridField, a: &[bool], b: &[bool], tables: &KernelTables) -> f64 {
    let domain = &field.domain;
    let shape = domain.shape();
    let w = domain.cell_volume();
    let ma: Vec<f64> = a.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    let mb: Vec<f64> = b.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    let u = &field.values;
    let mbu: Vec<f64> = mb.iter().zip(u).map(|(m, v)| m * v).collect();
    let mbu2: Vec<f64> = mb.iter().zip(u).map(|(m, v)| m * v * v).collect();
    let k_mb = convolve(&mb, &tables.table_hat, shape);
    let k_mbu = convolve(&mbu, &tables.table_hat, shape);
    let k_mbu2 = convolve(&mbu2, &tables.table_hat, shape);
    // Σ_{i∈A, j∈B} (u_i² - 2 u_i u_j + u_j²) K_{i-j}
    let mut sum = 0.0;
    for i in 0..u.len() {
        if ma[i] != 0.0 {
            sum += u[i] * u[i] * k_mb[i] - 2.0 * u[i] * k_mbu[i] + k_mbu2[i];
        }
    }
    let mut total = sum * w * w;
    if tables.kind == DiscreteKernel::PointCorrected {
        // local correction counts only pairs inside A∩B
        let both: Vec<bool> = a.iter().zip(b).map(|(x, y)| *x && *y).collect();
        for (axis, &c) in tables.moment_correction.iter().enumerate() {
            let g = field.derivative(axis);
            let local: f64 = g
                .values
                .iter()
                .zip(&both)
                .filter(|(_, m)| **m)
                .map(|(v, _)| v * v)
                .sum::<f64>()
                * w;
            total -= c * local;
        }
    }
    total
}

/// Squared H^{s/2} seminorm by one method.
pub fn seminorm(field: &GridField, s: f64, method: SeminormMethod) -> Result<f64> {
    if !(s > 0.0 && s < 2.0) {
        return Err(invalid("s", format!("must lie in (0, 2), got {s}")));
    }
    match method {
        SeminormMethod::Spectral => Ok(spectral_seminorm(field, s)),
        SeminormMethod::DoubleIntegral => double_integral(field, s, DiscreteKernel::PointCorrected),
        SeminormMethod::Extension => crate::extension::extension_seminorm(field, s),
    }
}

/// Σ_k λ_k^{s/2} |û_k|^2.
pub fn spectral_seminorm(field: &GridField, s: f64) -> f64 {
    let spec = field.to_spectral();
    field
        .domain
        .eigenvalues()
        .iter()
        .zip(&spec.coefficients)
        .map(|(&l, c)| if l == 0.0 { 0.0 } else { l.powf(0.5 * s) * c.norm_sqr() })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeminormRatios {
    pub double_integral_over_spectral: f64,
    pub extension_over_double_integral: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeminormBreakdown {
    pub spectral: f64,
    pub double_integral: f64,
    pub extension: f64,
    pub ratios: SeminormRatios,
}

impl SeminormBreakdown {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        a / b
    }
}

pub fn seminorm_all(field: &GridField, s: f64) -> Result<SeminormBreakdown> {
    let spectral = seminorm(field, s, SeminormMethod::Spectral)?;
    let double_integral = seminorm(field, s, SeminormMethod::DoubleIntegral)?.max(0.0);
    let extension = seminorm(field, s, SeminormMethod::Extension)?;
    Ok(SeminormBreakdown {
        spectral,
        double_integral,
        extension,
        ratios: SeminormRatios {
            double_integral_over_spectral: ratio(double_integral, spectral),
            extension_over_double_integral: ratio(extension, double_integral),
        },
    })
}

/// Discrete total variation Σ over grid faces of |jump| × face area.
pub fn total_variation(field: &GridField) -> f64 {
    let domain = &field.domain;
    let w = domain.cell_volume();
    let mut tv = 0.0;
    for a in 0..domain.dim() {
        let mut shift = vec![0i64; domain.dim()];
        shift[a] = 1;
        let rolled = field.roll(&shift);
        let face = w / domain.spacing(a);
        tv += face
            * field
                .values
                .iter()
                .zip(&rolled.values)
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>();
    }
    tv
}

/// C in [u]^2 ≤ C/((1-s)s) · TV(u)^s · ‖u‖_1^{1-s}, measured for this field.
pub fn interpolation_constant(field: &GridField, s: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(invalid("s", "interpolation needs s in (0, 1)"));
    }
    let semi = double_integral(field, s, DiscreteKernel::PointCorrected)?;
    let tv = total_variation(field);
    let l1 = field.l1_norm();
    Ok(semi * (1.0 - s) * s / (tv.powf(s) * l1.powf(1.0 - s)))
}

/// Seminorm sampled over a list of s values.
pub fn seminorm_in_s(field: &GridField, s_values: &[f64]) -> Result<Vec<(f64, f64)>> {
    s_values
        .iter()
        .map(|&s| Ok((s, double_integral(field, s, DiscreteKernel::PointCorrected)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{FlatTorus, GridSpec};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn circle(n: usize) -> Domain {
        Domain::cube(1, 1.0, n).unwrap()
    }

    #[test]
    fn moment_correction_matches_zeta_in_one_dimension() {
        // 2 ζ(s-1) h^{2-s}; ζ(-1/2) and ζ(0) = -1/2
        let h = 1.0 / 64.0;
        let d = lattice_moment_correction(&[h], 0.5)[0];
        assert_relative_eq!(d, 2.0 * -0.207_886_224_977_354_57 * h.powf(1.5), max_relative = 1e-9);
        let d1 = lattice_moment_correction(&[h], 1.0)[0];
        assert_relative_eq!(d1, -h, max_relative = 1e-9);
    }

    #[test]
    fn moment_correction_isotropic_square_lattice() {
        // Σ' z_1² |z|^{-2-s} = (1/2) Σ' |z|^{-s} = (1/2) · 4 ζ(s/2) β(s/2) at h = 1;
        // at s = 1: 2 ζ(1/2) β(1/2) with β the Dirichlet beta function
        let d = lattice_moment_correction(&[1.0, 1.0], 1.0);
        let zeta_half = -1.460_354_508_809_586_8;
        let beta_half = 0.667_691_457_189_609_1;
        assert_relative_eq!(d[0], 2.0 * zeta_half * beta_half, max_relative = 1e-8);
        assert_relative_eq!(d[0], d[1], max_relative = 1e-12);
    }

    #[test]
    fn cell_average_matches_quadrature() {
        // adjacent cells: high-precision values from quadrature split at the singular point
        let h = [0.01, 0.015];
        for (j, want) in [
            ([1i64, 0], 270_486.482_432_278_05),
            ([1, 1], 39_422.965_685_287_466),
            ([0, -1], 175_133.478_309_230_85),
        ] {
            assert_relative_eq!(cell_pair_average(&j, &h, 0.5), want, max_relative = 1e-9);
        }
        // farther cells: brute-force midpoint sums
        for j in [[2i64, 1], [5, -3]] {
            let v = cell_pair_average(&j, &h, 0.5);
            let m = 800;
            let mut brute = 0.0;
            for a in 0..m {
                for b in 0..m {
                    let t1 = -1.0 + (a as f64 + 0.5) * 2.0 / m as f64;
                    let t2 = -1.0 + (b as f64 + 0.5) * 2.0 / m as f64;
                    let r2 = (h[0] * (j[0] as f64 + t1)).powi(2) + (h[1] * (j[1] as f64 + t2)).powi(2);
                    brute += r2.powf(-1.25) * (1.0 - t1.abs()) * (1.0 - t2.abs());
                }
            }
            brute *= (2.0 / m as f64).powi(2);
            assert_relative_eq!(v, brute, max_relative = 1e-5);
        }
    }

    #[test]
    fn cell_average_one_dimensional() {
        // direct quadrature of ∫ |j+t|^{-1-s}(1-|t|) dt for j = 3
        let s = 0.4;
        let f = |t: f64| (3.0 + t).abs().powf(-1.0 - s) * (1.0 - t.abs());
        let q = special::integrate_adaptive(&f, -1.0, 0.0, 1e-14) + special::integrate_adaptive(&f, 0.0, 1.0, 1e-14);
        assert_relative_eq!(cell_pair_average(&[3], &[1.0], s), q, max_relative = 1e-11);
    }

    #[test]
    fn spectral_operator_examples() {
        let d = circle(64);
        let c = d.constant(2.5);
        assert!(frac_laplacian_spectral(&c, 0.5).sup_norm() < 1e-12);
        let u = d.sample(|x| (2.0 * PI * x[0]).cos());
        let lu = frac_laplacian_spectral(&u, 0.5);
        let factor = (4.0 * PI * PI).powf(0.25);
        for (a, b) in lu.values.iter().zip(&u.values) {
            assert!((a - factor * b).abs() < 1e-12);
        }
        let v = d.sample(|x| (2.0 * PI * x[0]).sin().exp());
        let twice = frac_laplacian_spectral(&frac_laplacian_spectral(&v, 0.35), 0.35);
        let once = frac_laplacian_spectral(&v, 0.7);
        for (a, b) in twice.values.iter().zip(&once.values) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn integral_operator_matches_spectral() {
        let d = circle(256);
        let u = d.sample(|x| (2.0 * PI * x[0]).cos());
        let a = frac_laplacian_integral(&u, 0.5).unwrap();
        let b = frac_laplacian_spectral(&u, 0.5);
        let err = a.zip_map(&b, |x, y| x - y).unwrap().l2_norm() / b.l2_norm();
        assert!(err < 1e-2, "relative error {err}");
        assert!(err < 1e-5, "corrected scheme should be far better than required: {err}");
        assert!(frac_laplacian_integral(&d.constant(1.0), 0.5).unwrap().sup_norm() < 1e-9);
    }

    #[test]
    fn direct_sum_agrees_with_multiplier() {
        let d = Domain::new(FlatTorus::new(vec![1.0, 1.2]).unwrap(), GridSpec::new(vec![16, 12]).unwrap()).unwrap();
        let u = d.sample(|x| (2.0 * PI * x[0]).sin() + (2.0 * PI * x[1] / 1.2).cos() * 0.5);
        let a = frac_laplacian_integral(&u, 0.7).unwrap();
        let b = frac_laplacian_integral_direct(&u, 0.7).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-9 * b.sup_norm());
        }
    }

    #[test]
    fn bump_maximum_is_positive() {
        let d = Domain::cube(2, 1.0, 64).unwrap();
        let u = d.sample(|x| (-((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)) / 0.01).exp());
        let lu = frac_laplacian_integral(&u, 0.6).unwrap();
        let imax = (0..u.len()).max_by(|&a, &b| u.values[a].total_cmp(&u.values[b])).unwrap();
        assert!(lu.values[imax] > 0.0);
    }

    #[test]
    fn seminorm_examples() {
        let d = circle(256);
        let c = d.constant(-0.7);
        let all = seminorm_all(&c, 0.5).unwrap();
        assert_eq!(all.spectral, 0.0);
        assert!(all.double_integral.abs() < 1e-9);
        assert!(all.extension.abs() < 1e-12);
        // normalized mode φ_1 = √2 cos(2πx) has spectral seminorm λ^{s/2}
        let u = d.sample(|x| 2f64.sqrt() * (2.0 * PI * x[0]).cos());
        let lam = 4.0 * PI * PI;
        assert_relative_eq!(spectral_seminorm(&u, 0.5), lam.powf(0.25), max_relative = 1e-12);
        let di = double_integral(&u, 0.5, DiscreteKernel::PointCorrected).unwrap();
        assert_relative_eq!(di / spectral_seminorm(&u, 0.5), 2.0, max_relative = 1e-5);
    }

    #[test]
    fn cell_averaged_pixel_energy_matches_direct_pair_sum() {
        // for a ±1 field, the multiplier sum equals 2 ∫_E ∫_{E^c} of the table
        let d = Domain::cube(2, 1.0, 32).unwrap();
        let u = d.sample(|x| if (x[0] - 0.4).abs() < 0.2 && (x[1] - 0.5).abs() < 0.3 { 1.0 } else { -1.0 });
        let t = kernel_tables(&d, 0.5, DiscreteKernel::CellAveraged).unwrap();
        let full = double_integral(&u, 0.5, DiscreteKernel::CellAveraged).unwrap();
        let inside: Vec<bool> = u.values.iter().map(|v| *v > 0.0).collect();
        let outside: Vec<bool> = inside.iter().map(|v| !v).collect();
        let cross = pair_integral(&u, &inside, &outside, &t);
        assert_relative_eq!(full, 2.0 * cross, max_relative = 1e-12);
        let all = vec![true; u.len()];
        assert_relative_eq!(full, pair_integral(&u, &all, &all, &t), max_relative = 1e-10);
    }

    #[test]
    fn interpolation_constant_is_resolution_stable() {
        let mut cs = Vec::new();
        for n in [128, 256, 512] {
            let d = circle(n);
            let u = d.sample(|x| (((x[0] - 0.5).abs() - 0.25) / -0.02).tanh());
            cs.push(interpolation_constant(&u, 0.5).unwrap());
        }
        assert!(cs[2] <= cs[0] * 1.01, "{cs:?}");
    }

    #[test]
    fn seminorm_continuous_in_s() {
        // differences shrink linearly with the step in s
        let d = circle(256);
        let u = d.sample(|x| (2.0 * PI * x[0]).sin().exp());
        for s0 in [0.3, 0.6, 0.9] {
            let steps = [0.04, 0.02, 0.01];
            let mut s = vec![s0];
            s.extend(steps.iter().map(|h| s0 + h));
            let v = seminorm_in_s(&u, &s).unwrap();
            let diffs: Vec<f64> = (1..4).map(|i| (v[i].1 - v[0].1).abs()).collect();
            for w in diffs.windows(2) {
                let r = w[1] / w[0];
                assert!(r > 0.45 && r < 0.55, "s0={s0} {diffs:?}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn operators_are_self_adjoint(a in prop::collection::vec(-1.0f64..1.0, 6), b in prop::collection::vec(-1.0f64..1.0, 6)) {
            let d = circle(128);
            let make = |c: &[f64]| d.sample(|x| (0..3).map(|k| c[2*k] * (2.0*PI*(k+1) as f64*x[0]).cos() + c[2*k+1] * (2.0*PI*(k+1) as f64*x[0]).sin()).sum());
            let u = make(&a);
            let v = make(&b);
            let lhs = frac_laplacian_spectral(&u, 0.6).dot(&v);
            let rhs = u.dot(&frac_laplacian_spectral(&v, 0.6));
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
            let lhs = frac_laplacian_integral(&u, 0.6).unwrap().dot(&v);
            let rhs = u.dot(&frac_laplacian_integral(&v, 0.6).unwrap());
            prop_assert!((lhs - rhs).abs() <= 1e-4 * (1.0 + lhs.abs()));
        }
    }
}
