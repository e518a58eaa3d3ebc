//! Heat kernel and the singular kernel K_s on flat tori.
//!
//! Every quantity has two independent evaluations so the pair can be
//! cross-checked: the heat kernel by its eigenfunction expansion and by
//! periodized Gaussians; K_s by the periodized Riesz series and by
//! subordination of the heat kernel. A third, Ewald-split route (real-space
//! incomplete gammas plus a short Fourier sum) is used to fill grid tables.

use crate::error::{invalid, Error, Result};
use crate::fft::fft_nd;
use crate::manifold::{Domain, FlatTorus};
use crate::special::{self, gamma_q, upper_gamma};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta, beta_reg};
use std::f64::consts::PI;
use std::io::Write;

pub use crate::special::{alpha_ns, beta_s};

/// Gaussian factors below e^{-CUTOFF} are dropped from series.
const EXP_CUTOFF: f64 = 45.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub s: f64,
    /// Image cutoff for the lattice Riesz sum, |m|_∞ <= m_max.
    pub m_max: usize,
    /// Trapezoid node count in τ = log t for subordination integrals.
    pub quad_nodes: usize,
}

impl KernelParams {
    pub fn new(s: f64) -> Result<Self> {
        let p = Self {
            s,
            m_max: 50,
            quad_nodes: 400,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s < 2.0) {
            return Err(invalid("s", format!("must lie in (0, 2), got {}", self.s)));
        }
        if self.m_max < 1 {
            return Err(invalid("m_max", "must be at least 1"));
        }
        if self.quad_nodes < 16 {
            return Err(invalid("quad_nodes", "must be at least 16"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatMethod {
    Spectral,
    Lattice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KsMethod {
    LatticeRiesz,
    Subordination,
    Ewald,
}

/// A kernel value with an estimate of the truncation error it carries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub value: f64,
    pub error_bound: f64,
}

/// One-dimensional periodic heat kernel by its Fourier series.
fn heat_1d_spectral(d: f64, t: f64, l: f64) -> (f64, f64) {
    let kmax = ((EXP_CUTOFF / t).sqrt() * l / (2.0 * PI)).ceil() as i64 + 1;
    let mut sum = 1.0;
    for k in 1..=kmax {
        let w = 2.0 * PI * k as f64 / l;
        sum += 2.0 * (-w * w * t).exp() * (w * d).cos();
    }
    let w_next = 2.0 * PI * (kmax + 1) as f64 / l;
    (sum / l, 2.0 * (-w_next * w_next * t).exp() / l)
}

/// One-dimensional periodized Gaussian with |m| <= m_max images.
fn heat_1d_lattice(d: f64, t: f64, l: f64, m_max: usize) -> (f64, f64) {
    let norm = 1.0 / (4.0 * PI * t).sqrt();
    let mut sum = 0.0;
    for m in -(m_max as i64)..=(m_max as i64) {
        let r = d + l * m as f64;
        sum += (-r * r / (4.0 * t)).exp();
    }
    let r_next = (m_max as f64 + 1.0) * l - d.abs();
    (norm * sum, 2.0 * norm * (-r_next * r_next / (4.0 * t)).exp())
}

/// Heat kernel H(x, y, t) of the flat torus.
pub fn heat_kernel(torus: &FlatTorus, x: &[f64], y: &[f64], t: f64, method: HeatMethod) -> Result<f64> {
    heat_kernel_with(torus, x, y, t, method, 50, 1e-12)
}

/// Heat kernel with explicit image count and relative tail tolerance.
pub fn heat_kernel_with(
    torus: &FlatTorus,
    x: &[f64],
    y: &[f64],
    t: f64,
    method: HeatMethod,
    m_max: usize,
    tol: f64,
) -> Result<f64> {
    if !(t > 0.0) {
        return Err(invalid("t", format!("must be positive, got {t}")));
    }
    let d = torus.displacement(x, y);
    let mut value = 1.0;
    let mut rel_tail = 0.0;
    for (di, &l) in d.iter().zip(torus.side_lengths()) {
        let (v, tail) = match method {
            HeatMethod::Spectral => heat_1d_spectral(*di, t, l),
            HeatMethod::Lattice => heat_1d_lattice(*di, t, l, m_max),
        };
        value *= v;
        rel_tail += tail / v.abs().max(f64::MIN_POSITIVE);
    }
    if rel_tail > tol {
        return Err(Error::Truncation { tail: rel_tail, tol });
    }
    Ok(value)
}

/// Heat kernel by whichever exact series converges faster at this time.
fn heat_kernel_fast(torus: &FlatTorus, d: &[f64], t: f64) -> f64 {
    d.iter()
        .zip(torus.side_lengths())
        .map(|(&di, &l)| {
            if t < 0.25 * l * l {
                heat_1d_lattice(di, t, l, 3).0
            } else {
                heat_1d_spectral(di, t, l).0
            }
        })
        .product()
}

/// Subordination prefactor (s/2)/Γ(1 - s/2).
pub fn subordination_constant(s: f64) -> f64 {
    0.5 * s / special::gamma(1.0 - 0.5 * s)
}

/// K_s(x, y) on the torus.
pub fn ks_kernel(
    torus: &FlatTorus,
    x: &[f64],
    y: &[f64],
    params: &KernelParams,
    method: KsMethod,
) -> Result<KernelValue> {
    params.validate()?;
    let d = torus.displacement(x, y);
    if d.iter().all(|v| *v == 0.0) {
        return Err(Error::Singular("K_s is singular at x = y".into()));
    }
    match method {
        KsMethod::LatticeRiesz => Ok(lattice_riesz(torus, &d, params.s, params.m_max)),
        KsMethod::Subordination => Ok(subordinated(torus, &d, params.s, params.quad_nodes)),
        KsMethod::Ewald => Ok(KernelValue {
            value: EwaldKernel::new(torus, params.s).eval(&d),
            error_bound: 0.0,
        }),
    }
}

/// α Σ_{|m|_∞ <= M} |d + L m|^{-(n+s)} plus an Euler–Maclaurin estimate of the
/// discarded images.
fn lattice_riesz(torus: &FlatTorus, d: &[f64], s: f64, m_max: usize) -> KernelValue {
    let n = torus.dim();
    let l = torus.side_lengths();
    let p = 0.5 * (n as f64 + s);
    let m = m_max as i64;
    let mut head = 0.0;
    let mut idx = vec![-m; n];
    'outer: loop {
        let r2: f64 = (0..n)
            .map(|i| {
                let r = d[i] + l[i] * idx[i] as f64;
                r * r
            })
            .sum();
        head += r2.powf(-p);
        for i in (0..n).rev() {
            if idx[i] < m {
                idx[i] += 1;
                continue 'outer;
            }
            idx[i] = -m;
        }
        break;
    }
    let (tail, err) = riesz_tail(0, 0.0, d, l, p, m_max);
    let alpha = alpha_ns(n, s);
    KernelValue {
        value: alpha * (head + tail),
        error_bound: alpha * err,
    }
}

/// Σ over m in Z^{n-axis} with |m|_∞ > M of (c2 + Σ_{i>=axis} (d_i + L_i m_i)^2)^{-p}.
fn riesz_tail(axis: usize, c2: f64, d: &[f64], l: &[f64], p: f64, m_max: usize) -> (f64, f64) {
    let n = d.len();
    if axis == n {
        return (0.0, 0.0);
    }
    // |m_axis| > M with the remaining axes summed over the full lattice,
    // which is their integral up to exponentially small Poisson corrections.
    let rest = (n - axis - 1) as f64;
    let rest_volume: f64 = l[axis + 1..].iter().product();
    let q = p - 0.5 * rest;
    let c_rest = PI.powf(0.5 * rest) * (special::ln_gamma(q) - special::ln_gamma(p)).exp() / rest_volume;
    let (t1, e1) = tail_1d(c2, q, d[axis], l[axis], m_max);
    let mut total = c_rest * t1;
    let mut err = c_rest * e1;
    if axis + 1 < n {
        let m = m_max as i64;
        for k in -m..=m {
            let r = d[axis] + l[axis] * k as f64;
            let (t, e) = riesz_tail(axis + 1, c2 + r * r, d, l, p, m_max);
            total += t;
            err += e;
        }
    }
    (total, err)
}

/// Σ_{|m| > M} (c2 + (d + L m)^2)^{-q} by Euler–Maclaurin about the cut.
fn tail_1d(c2: f64, q: f64, d: f64, l: f64, m_max: usize) -> (f64, f64) {
    let mut total = 0.0;
    let mut err = 0.0;
    for sign in [1.0, -1.0] {
        let y = sign * d + (m_max as f64 + 0.5) * l;
        let g = (c2 + y * y).powf(-q);
        let dg = -2.0 * q * y * (c2 + y * y).powf(-q - 1.0);
        total += tail_integral(c2, q, y) / l + l * dg / 24.0;
        // size of the next Euler–Maclaurin term, 7/5760 L^3 g'''
        let g3 = g * (2.0 * q) * (2.0 * q + 1.0) * (2.0 * q + 2.0) / (y * y * y);
        err += 7.0 / 5760.0 * l.powi(3) * g3;
    }
    (total, err)
}

/// ∫_y^∞ (c2 + t^2)^{-q} dt for y > 0, q > 1/2.
fn tail_integral(c2: f64, q: f64, y: f64) -> f64 {
    if c2 == 0.0 {
        return y.powf(1.0 - 2.0 * q) / (2.0 * q - 1.0);
    }
    let c = c2.sqrt();
    let x = c2 / (c2 + y * y);
    0.5 * c.powf(1.0 - 2.0 * q) * beta(0.5, q - 0.5) * beta_reg(q - 0.5, 0.5, x)
}

/// (s/2)/Γ(1-s/2) ∫ H(d, t) t^{-1-s/2} dt by the trapezoid rule in τ = log t.
///
/// The constant mode 1/vol is peeled off with a smooth Gaussian-CDF switch
/// Φ((τ - τ_c)/σ); its exact integral against e^{-sτ/2} is added back.
fn subordinated(torus: &FlatTorus, d: &[f64], s: f64, nodes: usize) -> KernelValue {
    let vol = torus.volume();
    let r2: f64 = d.iter().map(|v| v * v).sum();
    let lmax = torus.side_lengths().iter().cloned().fold(0.0, f64::max);
    let lambda1 = (2.0 * PI / lmax).powi(2);
    let a = 0.5 * s;
    let sigma = 1.0;
    let tau_c = (1.0 / lambda1).ln();
    // H is below e^{-45} of its peak once d²/4t > 45
    let tau_min = (r2 / (4.0 * EXP_CUTOFF)).ln().min(tau_c - 12.0 * sigma);
    // H - 1/vol decays like e^{-λ1 t}; the switch needs ~9σ of room
    let tau_max = (EXP_CUTOFF / lambda1).ln().max(tau_c + 12.0 * sigma);
    let h = (tau_max - tau_min) / (nodes - 1) as f64;
    let integrand = |tau: f64| {
        let t = tau.exp();
        let switch = 0.5 * statrs::function::erf::erfc(-(tau - tau_c) / (sigma * std::f64::consts::SQRT_2));
        (heat_kernel_fast(torus, d, t) - switch / vol) * (-a * tau).exp()
    };
    let mut sum = 0.0;
    for i in 0..nodes {
        let w = if i == 0 || i + 1 == nodes { 0.5 } else { 1.0 };
        sum += w * integrand(tau_min + h * i as f64);
    }
    let body = sum * h;
    let plateau = (-a * tau_c + 0.5 * a * a * sigma * sigma).exp() / (a * vol);
    let edge = (integrand(tau_min).abs() + integrand(tau_max).abs()) * h;
    let c = subordination_constant(s);
    KernelValue {
        value: c * (body + plateau),
        error_bound: c * edge,
    }
}

/// Ewald-split evaluation of the periodized Riesz kernel.
#[derive(Debug, Clone)]
pub struct EwaldKernel {
    torus: FlatTorus,
    s: f64,
    alpha: f64,
    t0: f64,
    images: Vec<Vec<f64>>,
    /// (wave vector as angular frequencies, Fourier weight)
    modes: Vec<(Vec<f64>, f64)>,
    constant: f64,
}

impl EwaldKernel {
    pub fn new(torus: &FlatTorus, s: f64) -> Self {
        let n = torus.dim();
        let l = torus.side_lengths();
        let lmin = torus.min_side();
        let t0 = lmin * lmin / (8.0 * PI);
        let c = subordination_constant(s);
        let vol = torus.volume();

        let r_cut = (4.0 * t0 * EXP_CUTOFF).sqrt() + 0.5 * l.iter().cloned().fold(0.0, f64::max) * (n as f64).sqrt();
        let images = lattice_points(l, r_cut);

        let k_cut: Vec<i64> = l
            .iter()
            .map(|&li| ((EXP_CUTOFF / t0).sqrt() * li / (2.0 * PI)).ceil() as i64)
            .collect();
        let mut modes = Vec::new();
        let mut idx: Vec<i64> = k_cut.iter().map(|k| -k).collect();
        'outer: loop {
            if idx.iter().any(|&k| k != 0) {
                let w: Vec<f64> = idx.iter().zip(l).map(|(&k, &li)| 2.0 * PI * k as f64 / li).collect();
                let lambda: f64 = w.iter().map(|x| x * x).sum();
                if lambda * t0 < EXP_CUTOFF {
                    let weight = c / vol * lambda.powf(0.5 * s) * upper_gamma(-0.5 * s, lambda * t0);
                    modes.push((w, weight));
                }
            }
            for i in (0..n).rev() {
                if idx[i] < k_cut[i] {
                    idx[i] += 1;
                    continue 'outer;
                }
                idx[i] = -k_cut[i];
            }
            break;
        }
        let constant = c / vol * t0.powf(-0.5 * s) / (0.5 * s);
        Self {
            torus: torus.clone(),
            s,
            alpha: alpha_ns(n, s),
            t0,
            images,
            modes,
            constant,
        }
    }

    fn real_part(&self, d: &[f64]) -> f64 {
        let a = 0.5 * (self.torus.dim() as f64 + self.s);
        let mut sum = 0.0;
        for m in &self.images {
            let r2: f64 = d.iter().zip(m).map(|(x, y)| (x + y) * (x + y)).sum();
            let arg = r2 / (4.0 * self.t0);
            if arg < EXP_CUTOFF && r2 > 0.0 {
                sum += r2.powf(-a) * gamma_q(a, arg);
            }
        }
        self.alpha * sum
    }

    /// K_s at min-image displacement `d` (d ≠ 0).
    pub fn eval(&self, d: &[f64]) -> f64 {
        let mut spec = self.constant;
        for (w, weight) in &self.modes {
            let phase: f64 = w.iter().zip(d).map(|(a, b)| a * b).sum();
            spec += weight * phase.cos();
        }
        self.real_part(d) + spec
    }

    /// K_s minus its nearest-image singular part α|d|^{-(n+s)}; smooth near 0.
    pub fn regular_part(&self, d: &[f64]) -> f64 {
        let r2: f64 = d.iter().map(|v| v * v).sum();
        let a = 0.5 * (self.torus.dim() as f64 + self.s);
        let singular = if r2 > 0.0 {
            // the image m = 0 enters real_part as α r^{-2a} Q(a, ·); remove the full term
            self.alpha * r2.powf(-a)
        } else {
            0.0
        };
        if r2 == 0.0 {
            // limit r -> 0 of α r^{-2a}(Q(a, r²/4t0) - 1) = -α (4 t0)^{-a} / (a Γ(a))
            let lim = -self.alpha * (4.0 * self.t0).powf(-a) / (a * special::gamma(a));
            let mut rest = self.constant;
            for (_, weight) in &self.modes {
                rest += weight;
            }
            let others: f64 = self
                .images
                .iter()
                .filter(|m| m.iter().any(|v| *v != 0.0))
                .map(|m| {
                    let r2: f64 = m.iter().map(|v| v * v).sum();
                    let arg = r2 / (4.0 * self.t0);
                    if arg < EXP_CUTOFF {
                        self.alpha * r2.powf(-a) * gamma_q(a, arg)
                    } else {
                        0.0
                    }
                })
                .sum();
            return lim + rest + others;
        }
        self.eval(d) - singular
    }

    /// Point values K_s(x_j - 0) at every grid offset; entry 0 is set to zero.
    pub fn grid_table(&self, domain: &Domain) -> Vec<f64> {
        let shape = domain.shape().to_vec();
        let total = domain.len();
        // Fourier part: fold every retained mode onto the grid and invert once
        let mut folded = vec![Complex64::new(0.0, 0.0); total];
        folded[0] += self.constant;
        let l = self.torus.side_lengths();
        for (w, weight) in &self.modes {
            let idx: Vec<usize> = w
                .iter()
                .zip(l)
                .zip(&shape)
                .map(|((&wi, &li), &n)| {
                    let k = (wi * li / (2.0 * PI)).round() as i64;
                    k.rem_euclid(n as i64) as usize
                })
                .collect();
            folded[domain.flat_index(&idx)] += weight;
        }
        fft_nd(&mut folded, &shape, true);
        let mut table: Vec<f64> = (0..total)
            .into_par_iter()
            .map(|f| {
                if f == 0 {
                    return 0.0;
                }
                let x = domain.point(f);
                let zero = vec![0.0; x.len()];
                let d = self.torus.displacement(&zero, &x);
                self.real_part(&d) + folded[f].re
            })
            .collect();
        table[0] = 0.0;
        table
    }
}

/// All lattice vectors L∘m with |L∘m| <= r_cut.
fn lattice_points(l: &[f64], r_cut: f64) -> Vec<Vec<f64>> {
    let n = l.len();
    let bounds: Vec<i64> = l.iter().map(|&li| (r_cut / li).ceil() as i64).collect();
    let mut out = Vec::new();
    let mut idx: Vec<i64> = bounds.iter().map(|b| -b).collect();
    'outer: loop {
        let v: Vec<f64> = idx.iter().zip(l).map(|(&m, &li)| m as f64 * li).collect();
        if v.iter().map(|x| x * x).sum::<f64>() <= r_cut * r_cut {
            out.push(v);
        }
        for i in (0..n).rev() {
            if idx[i] < bounds[i] {
                idx[i] += 1;
                continue 'outer;
            }
            idx[i] = -bounds[i];
        }
        break;
    }
    out
}

/// One row of the comparability table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparabilityRow {
    pub separation: f64,
    /// K_s / (α_{n,s} d^{-(n+s)})
    pub ratio: f64,
    /// Relative gap between the lattice-Riesz and subordination evaluations.
    pub method_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparabilityReport {
    pub rows: Vec<ComparabilityRow>,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl ComparabilityReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "separation,ratio,method_gap")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{}",
                crate::manifold::fmt_f64(r.separation),
                crate::manifold::fmt_f64(r.ratio),
                crate::manifold::fmt_f64(r.method_gap)
            )?;
        }
        Ok(())
    }
}

/// Ratio of K_s to the Euclidean kernel over sampled point pairs.
pub fn comparability_report(
    torus: &FlatTorus,
    params: &KernelParams,
    sample_pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<ComparabilityReport> {
    let n = torus.dim();
    let alpha = alpha_ns(n, params.s);
    let rows = sample_pairs
        .iter()
        .map(|(x, y)| {
            let d = torus.geodesic_distance(x, y);
            let lat = ks_kernel(torus, x, y, params, KsMethod::LatticeRiesz)?.value;
            let sub = ks_kernel(torus, x, y, params, KsMethod::Subordination)?.value;
            Ok(ComparabilityRow {
                separation: d,
                ratio: lat / (alpha * d.powf(-(n as f64 + params.s))),
                method_gap: (lat - sub).abs() / lat,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(ComparabilityReport {
        rows,
        min_ratio,
        max_ratio,
    })
}

/// Pairs along the first axis with separations log-spaced over `[lo, hi]`.
pub fn axis_pairs(torus: &FlatTorus, lo: f64, hi: f64, count: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let n = torus.dim();
    (0..count)
        .map(|i| {
            let f = if count == 1 { 0.0 } else { i as f64 / (count - 1) as f64 };
            let d = lo * (hi / lo).powf(f);
            let x = vec![0.0; n];
            let mut y = vec![0.0; n];
            y[0] = d;
            (x, y)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn t1() -> FlatTorus {
        FlatTorus::cube(1, 1.0).unwrap()
    }

    #[test]
    fn heat_kernel_mass_is_one() {
        let torus = FlatTorus::new(vec![1.0, 1.5]).unwrap();
        let domain = Domain::new(torus.clone(), crate::manifold::GridSpec::new(vec![64, 96]).unwrap()).unwrap();
        for &t in &[0.01, 0.1, 2.0] {
            let x = [0.2, 0.7];
            let mass: f64 = (0..domain.len())
                .map(|f| heat_kernel(&torus, &x, &domain.point(f), t, HeatMethod::Spectral).unwrap())
                .sum::<f64>()
                * domain.cell_volume();
            assert_relative_eq!(mass, 1.0, max_relative = 1e-10);
        }
    }

    #[test]
    fn heat_kernel_plateau_and_duality() {
        let torus = t1();
        let h = heat_kernel(&torus, &[0.0], &[0.3], 50.0, HeatMethod::Spectral).unwrap();
        assert_relative_eq!(h, 1.0, max_relative = 1e-12);
        let a = heat_kernel(&torus, &[0.0], &[0.3], 0.05, HeatMethod::Spectral).unwrap();
        let b = heat_kernel(&torus, &[0.0], &[0.3], 0.05, HeatMethod::Lattice).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-10);
        assert!(heat_kernel(&torus, &[0.0], &[0.3], 0.0, HeatMethod::Spectral).is_err());
    }

    #[test]
    fn lattice_heat_kernel_flags_large_times() {
        let torus = t1();
        let r = heat_kernel_with(&torus, &[0.0], &[0.3], 1.0e4, HeatMethod::Lattice, 5, 1e-12);
        assert!(matches!(r, Err(Error::Truncation { .. })));
    }

    #[test]
    fn riesz_and_subordination_agree_on_circle() {
        let torus = t1();
        let p = KernelParams::new(0.5).unwrap();
        let a = ks_kernel(&torus, &[0.0], &[0.5], &p, KsMethod::LatticeRiesz).unwrap();
        let b = ks_kernel(&torus, &[0.0], &[0.5], &p, KsMethod::Subordination).unwrap();
        let c = ks_kernel(&torus, &[0.0], &[0.5], &p, KsMethod::Ewald).unwrap();
        assert_relative_eq!(a.value, b.value, max_relative = 1e-6);
        assert_relative_eq!(a.value, c.value, max_relative = 1e-9);
    }

    #[test]
    fn antipodal_ratio_matches_direct_sum() {
        // Σ_m |0.5 + m|^{-1.5} / 0.5^{-1.5}, summed directly with a large cutoff
        // and the integral tail added.
        let mut direct = 0.0;
        let big = 200_000i64;
        for m in -big..=big {
            direct += (0.5 + m as f64).abs().powf(-1.5);
        }
        direct += 2.0 * (big as f64 + 0.5).powf(-0.5) / 0.5;
        let expected = direct / 0.5f64.powf(-1.5);
        let rep = comparability_report(&t1(), &KernelParams::new(0.5).unwrap(), &[(vec![0.0], vec![0.5])]).unwrap();
        assert_relative_eq!(rep.rows[0].ratio, expected, max_relative = 1e-8);
    }

    #[test]
    fn kernel_symmetry_lower_bound_and_singularity() {
        let torus = FlatTorus::new(vec![1.0, 1.3]).unwrap();
        let p = KernelParams {
            s: 0.7,
            m_max: 12,
            quad_nodes: 300,
        };
        let x = [0.1, 0.2];
        let y = [0.45, 1.1];
        let a = ks_kernel(&torus, &x, &y, &p, KsMethod::Ewald).unwrap().value;
        let b = ks_kernel(&torus, &y, &x, &p, KsMethod::Ewald).unwrap().value;
        assert_relative_eq!(a, b, max_relative = 1e-13);
        let d = torus.geodesic_distance(&x, &y);
        assert!(a >= alpha_ns(2, 0.7) * d.powf(-2.7));
        assert!(ks_kernel(&torus, &x, &x, &p, KsMethod::LatticeRiesz).is_err());
    }

    #[test]
    fn three_routes_agree_in_two_dimensions() {
        let torus = FlatTorus::new(vec![1.0, 1.3]).unwrap();
        let p = KernelParams {
            s: 0.6,
            m_max: 20,
            quad_nodes: 400,
        };
        for y in [[0.3, 0.1], [0.5, 0.65], [0.05, 0.0]] {
            let a = ks_kernel(&torus, &[0.0, 0.0], &y, &p, KsMethod::LatticeRiesz).unwrap();
            let b = ks_kernel(&torus, &[0.0, 0.0], &y, &p, KsMethod::Subordination).unwrap();
            let c = ks_kernel(&torus, &[0.0, 0.0], &y, &p, KsMethod::Ewald).unwrap();
            assert_relative_eq!(a.value, c.value, max_relative = 1e-7);
            assert_relative_eq!(b.value, c.value, max_relative = 1e-7);
        }
    }

    #[test]
    fn scaling_of_kernel() {
        let torus = FlatTorus::new(vec![1.0, 1.3]).unwrap();
        let big = torus.scaled(2.5).unwrap();
        let p = KernelParams::new(0.4).unwrap();
        let x = [0.2, 0.3];
        let y = [0.7, 0.9];
        let xr: Vec<f64> = x.iter().map(|v| v * 2.5).collect();
        let yr: Vec<f64> = y.iter().map(|v| v * 2.5).collect();
        for method in [KsMethod::Ewald, KsMethod::Subordination] {
            let k = ks_kernel(&torus, &x, &y, &p, method).unwrap().value;
            let kr = ks_kernel(&big, &xr, &yr, &p, method).unwrap().value;
            assert_relative_eq!(kr, 2.5f64.powf(-2.4) * k, max_relative = 1e-8);
        }
    }

    #[test]
    fn ewald_regular_part_is_continuous_at_origin() {
        let torus = FlatTorus::new(vec![1.0, 1.0]).unwrap();
        let k = EwaldKernel::new(&torus, 0.5);
        let at0 = k.regular_part(&[0.0, 0.0]);
        let near = k.regular_part(&[1e-4, 0.0]);
        assert_relative_eq!(at0, near, max_relative = 1e-6);
    }

    #[test]
    fn grid_table_matches_pointwise() {
        let domain = Domain::new(FlatTorus::new(vec![1.0, 1.5]).unwrap(), crate::manifold::GridSpec::new(vec![16, 24]).unwrap()).unwrap();
        let k = EwaldKernel::new(&domain.torus, 0.8);
        let table = k.grid_table(&domain);
        for f in [1usize, 17, 100, 383] {
            let x = domain.point(f);
            let d = domain.torus.displacement(&[0.0, 0.0], &x);
            assert_relative_eq!(table[f], k.eval(&d), max_relative = 1e-11);
        }
    }
}
