//! Caffarelli–Silvestre extension of a grid field to M × (0, ∞).
//!
//! Each Fourier mode extends by the multiplier
//! g_s(λ, z) = z^s / (2^s Γ(s/2)) ∫_0^∞ e^{-λt} e^{-z²/4t} t^{-1-s/2} dt.
//! Writing t = (z / 2√λ) e^τ turns the integral into
//! ∫_0^∞ e^{-y cosh τ} cosh(s τ / 2) dτ with y = z√λ, whose integrand decays
//! doubly exponentially, so the trapezoid rule in τ converges geometrically.

use crate::allen_cahn::ACParams;
use crate::error::{invalid, Error, Result};
use crate::manifold::{fmt_f64, Domain, GridField};
use crate::special::{self, beta_s};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write;

/// K_ν(y) = ∫_0^∞ e^{-y cosh τ} cosh(ν τ) dτ by the trapezoid rule.
pub fn bessel_k(nu: f64, y: f64) -> f64 {
    assert!(y > 0.0, "bessel_k needs y > 0");
    let step = 0.1;
    let mut sum = 0.5 * (-y).exp();
    let mut tau: f64 = step;
    loop {
        let e = -y * tau.cosh() + nu.abs() * tau;
        if e < -745.0 && tau > 1.0 {
            break;
        }
        sum += (-y * tau.cosh()).exp() * (nu * tau).cosh();
        tau += step;
    }
    sum * step
}

fn g_prefactor(s: f64) -> f64 {
    let sigma = 0.5 * s;
    2f64.powf(1.0 - sigma) / special::gamma(sigma)
}

/// Extension multiplier g_s(λ, z); g_s(0, z) = 1 and g_s(λ, 0) = 1.
pub fn g_s(lambda: f64, z: f64, s: f64) -> f64 {
    if lambda == 0.0 || z == 0.0 {
        return 1.0;
    }
    let y = z * lambda.sqrt();
    let sigma = 0.5 * s;
    g_prefactor(s) * y.powf(sigma) * bessel_k(sigma, y)
}

/// ∂_z g_s(λ, z).
pub fn g_s_dz(lambda: f64, z: f64, s: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let sq = lambda.sqrt();
    let y = z * sq;
    let sigma = 0.5 * s;
    -g_prefactor(s) * sq * y.powf(sigma) * bessel_k(1.0 - sigma, y)
}

/// ∫_0^∞ z^{1-s} (g_z² + λ g²) dz for one mode, by the trapezoid rule in log z
/// plus the leading-order contribution below the first node.
pub fn mode_energy(lambda: f64, s: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let sq = lambda.sqrt();
    let (lo, hi) = ((1e-7 / sq).ln(), (60.0 / sq).ln());
    let steps = ((hi - lo) / 0.02).ceil() as usize;
    let d = (hi - lo) / steps as f64;
    let mut sum = 0.0;
    let mut first = (0.0, 0.0);
    for i in 0..=steps {
        let z = (lo + d * i as f64).exp();
        let fz = z.powf(2.0 - s) * g_s_dz(lambda, z, s).powi(2);
        let fx = z.powf(2.0 - s) * lambda * g_s(lambda, z, s).powi(2);
        if i == 0 {
            first = (fz, fx);
        }
        let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
        sum += w * (fz + fx);
    }
    sum * d + first.0 / s + first.1 / (2.0 - s) + end_correction(first.0, first.1, s, d)
}

/// Euler–Maclaurin terms at a lower trapezoid end where F ≈ A z^s + B z^{2-s}.
fn end_correction(fz: f64, fx: f64, s: f64, d: f64) -> f64 {
    let (p, q) = (s, 2.0 - s);
    d * d / 12.0 * (p * fz + q * fx) - d.powi(4) / 720.0 * (p.powi(3) * fz + q.powi(3) * fx)
}

/// U sampled on grid × z-ladder.
#[derive(Debug, Clone)]
pub struct ExtensionField {
    pub domain: Domain,
    pub s: f64,
    pub z_nodes: Vec<f64>,
    /// One physical field per z-node.
    pub values: Vec<GridField>,
    trace: Vec<Complex64>,
    trace_values: Vec<f64>,
}

/// Geometric ladder z_j = z_min ρ^j up to the node where g_s(λ_1, z) < 1e-8.
pub fn default_z_ladder(domain: &Domain, s: f64) -> Vec<f64> {
    let z_min = domain.h() / 32.0;
    let rho = 1.25;
    let lambda1 = domain
        .eigenvalues()
        .into_iter()
        .filter(|&l| l > 0.0)
        .fold(f64::INFINITY, f64::min);
    let mut z = vec![z_min];
    while g_s(lambda1, *z.last().unwrap(), s) >= 1e-8 {
        let next = z.last().unwrap() * rho;
        z.push(next);
    }
    z
}

/// Distinct-eigenvalue map so each multiplier is evaluated once.
fn distinct_eigenvalues(domain: &Domain) -> (Vec<f64>, Vec<usize>) {
    let eig = domain.eigenvalues();
    let mut map: HashMap<u64, usize> = HashMap::new();
    let mut values = Vec::new();
    let index = eig
        .iter()
        .map(|&l| {
            *map.entry(l.to_bits()).or_insert_with(|| {
                values.push(l);
                values.len() - 1
            })
        })
        .collect();
    (values, index)
}

fn validate_ladder(z_nodes: &[f64]) -> Result<()> {
    if z_nodes.is_empty() {
        return Err(invalid("z_nodes", "must not be empty"));
    }
    if z_nodes[0] <= 0.0 || z_nodes.windows(2).any(|w| w[1] <= w[0]) || z_nodes.iter().any(|z| !z.is_finite()) {
        return Err(invalid("z_nodes", "must be positive, finite and strictly increasing"));
    }
    Ok(())
}

/// Multiplies the trace coefficients by a per-eigenvalue profile and transforms back.
fn synthesize(domain: &Domain, trace: &[Complex64], index: &[usize], profile: &[f64], symbol: Option<&[f64]>) -> GridField {
    let coeffs: Vec<Complex64> = trace
        .iter()
        .zip(index)
        .enumerate()
        .map(|(f, (c, &i))| {
            let v = c * profile[i];
            match symbol {
                Some(k) => v * Complex64::new(0.0, k[f]),
                None => v,
            }
        })
        .collect();
    crate::manifold::SpectralField {
        domain: domain.clone(),
        coefficients: coeffs,
    }
    .to_physical()
}

pub fn cs_extend(field: &GridField, s: f64, z_nodes: &[f64]) -> Result<ExtensionField> {
    if !(s > 0.0 && s < 2.0) {
        return Err(invalid("s", format!("must lie in (0, 2), got {s}")));
    }
    validate_ladder(z_nodes)?;
    let domain = field.domain.clone();
    let trace = field.to_spectral().coefficients;
    let (lams, index) = distinct_eigenvalues(&domain);
    let values = z_nodes
        .par_iter()
        .map(|&z| {
            let profile: Vec<f64> = lams.iter().map(|&l| g_s(l, z, s)).collect();
            synthesize(&domain, &trace, &index, &profile, None)
        })
        .collect();
    Ok(ExtensionField {
        domain,
        s,
        z_nodes: z_nodes.to_vec(),
        values,
        trace,
        trace_values: field.values.clone(),
    })
}

impl ExtensionField {
    pub fn trace(&self) -> GridField {
        GridField {
            domain: self.domain.clone(),
            values: self.trace_values.clone(),
        }
    }

    /// ∂_z U at height z, from the analytic derivative of each multiplier.
    pub fn dz_at(&self, z: f64) -> GridField {
        let (lams, index) = distinct_eigenvalues(&self.domain);
        let profile: Vec<f64> = lams.iter().map(|&l| g_s_dz(l, z, self.s)).collect();
        synthesize(&self.domain, &self.trace, &index, &profile, None)
    }

    /// Horizontal gradient of U at height z.
    pub fn gradient_at(&self, z: f64) -> Vec<GridField> {
        let (lams, index) = distinct_eigenvalues(&self.domain);
        let profile: Vec<f64> = lams.iter().map(|&l| g_s(l, z, self.s)).collect();
        (0..self.domain.dim())
            .map(|a| {
                let sym = self.domain.derivative_symbols(a);
                synthesize(&self.domain, &self.trace, &index, &profile, Some(&sym))
            })
            .collect()
    }
}

/// lim_{z→0} z^{1-s} ∂_z U, from a least-squares fit U ≈ u + a z^s + b z² on
/// the ladder nodes below 0.1·2π/√λ_max.
pub fn dtn(ext: &ExtensionField) -> Result<GridField> {
    let lambda_max = ext.domain.eigenvalues().into_iter().fold(0.0, f64::max);
    let z_fit = 0.1 * 2.0 * std::f64::consts::PI / lambda_max.sqrt();
    let nodes: Vec<usize> = (0..ext.z_nodes.len()).filter(|&j| ext.z_nodes[j] <= z_fit).collect();
    if nodes.len() < 4 {
        return Err(invalid(
            "z_nodes",
            format!("need at least 4 nodes below {z_fit:.3e}, found {}", nodes.len()),
        ));
    }
    let s = ext.s;
    // normal equations for the two basis functions z^s and z²
    let (mut a11, mut a12, mut a22) = (0.0, 0.0, 0.0);
    for &j in &nodes {
        let z = ext.z_nodes[j];
        let (p, q) = (z.powf(s), z * z);
        a11 += p * p;
        a12 += p * q;
        a22 += q * q;
    }
    let det = a11 * a22 - a12 * a12;
    let u = &ext.trace_values;
    let mut out = vec![0.0; u.len()];
    let mut resid2 = 0.0;
    let mut signal2 = 0.0;
    for x in 0..u.len() {
        let (mut r1, mut r2) = (0.0, 0.0);
        for &j in &nodes {
            let z = ext.z_nodes[j];
            let d = ext.values[j].values[x] - u[x];
            r1 += d * z.powf(s);
            r2 += d * z * z;
        }
        let a = (a22 * r1 - a12 * r2) / det;
        let b = (a11 * r2 - a12 * r1) / det;
        for &j in &nodes {
            let z = ext.z_nodes[j];
            let d = ext.values[j].values[x] - u[x];
            let e = d - a * z.powf(s) - b * z * z;
            resid2 += e * e;
            signal2 += d * d;
        }
        out[x] = s * a;
    }
    let rel = if signal2 > 0.0 { (resid2 / signal2).sqrt() } else { 0.0 };
    if rel > 5e-2 {
        return Err(Error::FitResidual {
            residual: rel,
            tol: 5e-2,
        });
    }
    GridField::new(ext.domain.clone(), out)
}

/// Half-ball B̃_R^+(center, 0) = {(x, z) : d(x, center)² + z² < R², z > 0}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfBall {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// A quadrature value with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// β_s ∫ z^{1-s} |∇̃U|² over M × R₊, or over a half-ball.
pub fn extension_energy(ext: &ExtensionField, region: Option<&HalfBall>) -> Result<f64> {
    match region {
        None => {
            let (lams, index) = distinct_eigenvalues(&ext.domain);
            let e: Vec<f64> = lams.par_iter().map(|&l| mode_energy(l, ext.s)).collect();
            let total: f64 = ext.trace.iter().zip(&index).map(|(c, &i)| c.norm_sqr() * e[i]).sum();
            Ok(beta_s(ext.s) * total)
        }
        Some(ball) => {
            let r = half_ball_dirichlet(ext, &ball.center, &[ball.radius])?;
            Ok(beta_s(ext.s) * r[0].value)
        }
    }
}

/// Extension-method seminorm on the default ladder.
pub fn extension_seminorm(field: &GridField, s: f64) -> Result<f64> {
    let z = default_z_ladder(&field.domain, s);
    let ext = cs_extend(field, s, &z)?;
    extension_energy(&ext, None)
}

/// ∫_{B̃_R^+} z^{1-s} |∇̃U|² for several radii, with quadrature error estimates.
///
/// The z-integral runs in log z over the ladder (exactly up to the
/// half-ball height above each grid point); the part below the first node
/// uses the leading z^s and z^{2-s} behaviour. The error combines the
/// difference to the every-other-node rule with the change under moving the
/// horizontal boundary by half a cell.
pub fn half_ball_dirichlet(ext: &ExtensionField, center: &[f64], radii: &[f64]) -> Result<Vec<Estimate>> {
    let domain = &ext.domain;
    let half_side = 0.5 * domain.torus.min_side();
    let rmax = radii.iter().cloned().fold(0.0, f64::max);
    if radii.iter().any(|&r| !(r > 0.0)) || rmax > half_side {
        return Err(invalid("radii", "must be positive and at most half the shortest side"));
    }
    let h = domain.h();
    let reach = rmax + h;
    let pts: Vec<(usize, f64)> = (0..domain.len())
        .filter_map(|f| {
            let d = domain.torus.geodesic_distance(&domain.point(f), center);
            (d < reach).then_some((f, d))
        })
        .collect();
    let nz = ext.z_nodes.iter().take_while(|&&z| z < reach).count() + 1;
    let nz = nz.min(ext.z_nodes.len());
    let s = ext.s;
    // F_z = z^{2-s} U_z², F_x = z^{2-s} |∇_x U|² at each ladder node, restricted to pts
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..nz)
        .into_par_iter()
        .map(|j| {
            let z = ext.z_nodes[j];
            let uz = ext.dz_at(z);
            let grad = ext.gradient_at(z);
            let zf = z.powf(2.0 - s);
            let fz = pts.iter().map(|&(f, _)| zf * uz.values[f].powi(2)).collect();
            let fx = pts
                .iter()
                .map(|&(f, _)| zf * grad.iter().map(|g| g.values[f].powi(2)).sum::<f64>())
                .collect();
            (fz, fx)
        })
        .collect();
    let logz: Vec<f64> = ext.z_nodes[..nz].iter().map(|z| z.ln()).collect();
    let w = domain.cell_volume();
    let column = |p: usize, top: f64, stride: usize| -> f64 {
        // trapezoid in log z from the first node to log(top), nodes j ≡ 0 mod stride
        let f = |j: usize| rows[j].0[p] + rows[j].1[p];
        let mut total = rows[0].0[p] / s + rows[0].1[p] / (2.0 - s);
        if top <= ext.z_nodes[0] {
            // whole column below the first node: scale the tail
            let r = top / ext.z_nodes[0];
            return rows[0].0[p] / s * r.powf(s) + rows[0].1[p] / (2.0 - s) * r.powf(2.0 - s);
        }
        let lt = top.ln();
        if stride < nz && ext.z_nodes[stride] <= top {
            total += end_correction(rows[0].0[p], rows[0].1[p], s, logz[stride] - logz[0]);
        }
        let mut j = 0;
        while j + stride < nz && ext.z_nodes[j + stride] <= top {
            total += 0.5 * (f(j) + f(j + stride)) * (logz[j + stride] - logz[j]);
            j += stride;
        }
        if j + stride < nz {
            let t = (lt - logz[j]) / (logz[j + stride] - logz[j]);
            let ft = f(j) + t * (f(j + stride) - f(j));
            total += 0.5 * (f(j) + ft) * (lt - logz[j]);
        }
        total
    };
    let energy = |r: f64, stride: usize| -> f64 {
        pts.iter()
            .enumerate()
            .filter(|(_, (_, d))| *d < r)
            .map(|(p, (_, d))| column(p, (r * r - d * d).sqrt(), stride))
            .sum::<f64>()
            * w
    };
    Ok(radii
        .iter()
        .map(|&r| {
            let fine = energy(r, 1);
            let coarse = energy(r, 2);
            let shell = 0.5 * (energy(r + 0.5 * h, 1) - energy((r - 0.5 * h).max(0.0), 1)).abs();
            Estimate {
                value: fine,
                error: (fine - coarse).abs() + shell,
            }
        })
        .collect())
}

/// Discrete div(z^{1-s} ∇̃U) relative to the size of its two parts, over
/// interior ladder nodes. Uses fourth-order differences in log z.
pub fn degenerate_harmonic_residual(ext: &ExtensionField) -> Result<f64> {
    let nz = ext.z_nodes.len();
    if nz < 5 {
        return Err(invalid("z_nodes", "need at least 5 nodes"));
    }
    let logz: Vec<f64> = ext.z_nodes.iter().map(|z| z.ln()).collect();
    let d = logz[1] - logz[0];
    let uniform = logz.windows(2).all(|w| ((w[1] - w[0]) - d).abs() < 1e-9 * d.abs());
    if !uniform {
        return Err(invalid("z_nodes", "residual check needs a geometric ladder"));
    }
    let s = ext.s;
    let eig = ext.domain.eigenvalues();
    let (mut res, mut scale) = (0.0, 0.0);
    for j in 2..nz - 2 {
        let z = ext.z_nodes[j];
        let lap = ext.values[j].apply_symbol(&eig.iter().map(|l| -l).collect::<Vec<_>>());
        let v = |k: usize, x: usize| ext.values[k].values[x];
        for x in 0..ext.domain.len() {
            let u1 = (-v(j + 2, x) + 8.0 * v(j + 1, x) - 8.0 * v(j - 1, x) + v(j - 2, x)) / (12.0 * d);
            let u2 = (-v(j + 2, x) + 16.0 * v(j + 1, x) - 30.0 * v(j, x) + 16.0 * v(j - 1, x) - v(j - 2, x))
                / (12.0 * d * d);
            // z^{1+s} div(z^{1-s}∇U) = U_ζζ - s U_ζ + z² Δ_x U with ζ = log z
            let vert = u2 - s * u1;
            let horiz = z * z * lap.values[x];
            res += (vert + horiz).powi(2);
            scale += vert.powi(2) + horiz.powi(2);
        }
    }
    Ok(if scale > 0.0 { (res / scale).sqrt() } else { 0.0 })
}

/// One row of the monotonicity functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiRow {
    pub radius: f64,
    pub phi: f64,
    pub sobolev_part: f64,
    pub potential_part: f64,
    pub error: f64,
}

/// Φ(R) = R^{s-n} (c_s ∫_{B̃_R^+} z^{1-s}|∇̃U|² + ε^{-s} ∫_{B_R} W(u)).
///
/// c_s = 1/(2β_s) so that the full-space extension term equals the Sobolev
/// energy (1/2) Σ λ^{s/2} |û|² whose critical points solve the equation.
pub fn phi_functional(u: &GridField, params: &ACParams, center: &[f64], radii: &[f64]) -> Result<Vec<PhiRow>> {
    params.validate()?;
    let s = params.s;
    let domain = &u.domain;
    let n = domain.dim() as f64;
    let z = default_z_ladder(domain, s);
    let ext = cs_extend(u, s, &z)?;
    let dir = half_ball_dirichlet(&ext, center, radii)?;
    let c = 0.5 / beta_s(s);
    let eps_s = params.epsilon.powf(-s);
    let w = domain.cell_volume();
    let h = domain.h();
    let dist: Vec<f64> = (0..domain.len())
        .map(|f| domain.torus.geodesic_distance(&domain.point(f), center))
        .collect();
    let pot = |r: f64| -> f64 {
        dist.iter()
            .zip(&u.values)
            .filter(|(d, _)| **d < r)
            .map(|(_, v)| 0.25 * (1.0 - v * v).powi(2))
            .sum::<f64>()
            * w
            * eps_s
    };
    Ok(radii
        .iter()
        .zip(&dir)
        .map(|(&r, est)| {
            let scale = r.powf(s - n);
            let sob = c * est.value;
            let p = pot(r);
            let p_err = 0.5 * (pot(r + 0.5 * h) - pot((r - 0.5 * h).max(0.0))).abs();
            PhiRow {
                radius: r,
                phi: scale * (sob + p),
                sobolev_part: scale * sob,
                potential_part: scale * p,
                error: scale * (c * est.error + p_err),
            }
        })
        .collect())
}

pub fn write_phi_csv<W: Write>(rows: &[PhiRow], mut w: W) -> Result<()> {
    writeln!(w, "R,phi,sobolev_part,potential_part,error")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_f64(r.radius),
            fmt_f64(r.phi),
            fmt_f64(r.sobolev_part),
            fmt_f64(r.potential_part),
            fmt_f64(r.error)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractional_ops::frac_laplacian_spectral;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn multiplier_matches_independent_quadrature() {
        let (lam, z, s) = (4.0 * PI * PI, 0.1, 0.5);
        let f = |tau: f64| {
            let t = tau.exp();
            (-lam * t - z * z / (4.0 * t)).exp() * t.powf(-0.5 * s)
        };
        let q = special::integrate_adaptive(&f, -20.0, 5.0, 1e-15);
        let oracle = z.powf(s) / (2f64.powf(s) * special::gamma(0.5 * s)) * q;
        assert_relative_eq!(g_s(lam, z, s), oracle, max_relative = 1e-10);
        assert_relative_eq!(g_s(lam, z, s), 0.316_423_055_695_756_2, max_relative = 1e-12);
        assert_eq!(g_s(0.0, 0.3, s), 1.0);
        assert_relative_eq!(g_s(lam, 1e-12, s), 1.0, max_relative = 1e-5);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let (lam, s) = (16.0 * PI * PI, 0.3);
        let z = 0.05;
        let d = 1e-6;
        let fd = (g_s(lam, z + d, s) - g_s(lam, z - d, s)) / (2.0 * d);
        assert_relative_eq!(g_s_dz(lam, z, s), fd, max_relative = 1e-7);
    }

    #[test]
    fn mode_energy_closed_form() {
        // ∫ z^{1-s}(g_z² + λ g²) = β_s λ^{s/2}
        for &s in &[0.3, 0.5, 0.8, 1.4] {
            let lam = 4.0 * PI * PI * 9.0;
            assert_relative_eq!(mode_energy(lam, s), beta_s(s) * lam.powf(0.5 * s), max_relative = 1e-8);
        }
    }

    #[test]
    fn constant_and_single_mode_extension() {
        let d = Domain::cube(1, 1.0, 64).unwrap();
        let z = default_z_ladder(&d, 0.5);
        assert!(z.len() > 20 && z.len() < 80);
        let ext = cs_extend(&d.constant(0.4), 0.5, &z).unwrap();
        for f in &ext.values {
            assert!(f.values.iter().all(|v| (v - 0.4).abs() < 1e-13));
        }
        assert!(dtn(&ext).unwrap().sup_norm() < 1e-12);
        assert!(extension_energy(&ext, None).unwrap().abs() < 1e-14);
        let u = d.sample(|x| (2.0 * PI * 3.0 * x[0]).cos());
        let ext = cs_extend(&u, 0.5, &z).unwrap();
        let lam = 36.0 * PI * PI;
        for (j, f) in ext.values.iter().enumerate() {
            let g = g_s(lam, z[j], 0.5);
            for (a, b) in f.values.iter().zip(&u.values) {
                assert!((a - g * b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dtn_recovers_fractional_laplacian_with_minus_beta() {
        let d = Domain::cube(1, 1.0, 256).unwrap();
        for &s in &[0.3, 0.5, 0.8] {
            let z = default_z_ladder(&d, s);
            for k in [1.0, 2.0] {
                let u = d.sample(|x| (2.0 * PI * k * x[0]).sin());
                let got = dtn(&cs_extend(&u, s, &z).unwrap()).unwrap();
                let want = frac_laplacian_spectral(&u, s).map(|v| -beta_s(s) * v);
                let err = got.zip_map(&want, |a, b| a - b).unwrap().l2_norm() / want.l2_norm();
                assert!(err < 1e-3, "s={s} k={k} err={err}");
            }
        }
    }

    #[test]
    fn dtn_is_linear_and_rejects_coarse_ladders() {
        let d = Domain::cube(1, 1.0, 64).unwrap();
        let z = default_z_ladder(&d, 0.5);
        let u = d.sample(|x| (2.0 * PI * x[0]).sin());
        let v = d.sample(|x| (4.0 * PI * x[0]).cos() * 0.3);
        let w = u.zip_map(&v, |a, b| a + b).unwrap();
        let du = dtn(&cs_extend(&u, 0.5, &z).unwrap()).unwrap();
        let dv = dtn(&cs_extend(&v, 0.5, &z).unwrap()).unwrap();
        let dw = dtn(&cs_extend(&w, 0.5, &z).unwrap()).unwrap();
        for i in 0..u.len() {
            assert!((dw.values[i] - du.values[i] - dv.values[i]).abs() < 1e-10);
        }
        let coarse: Vec<f64> = (0..10).map(|j| 0.05 * 1.5f64.powi(j)).collect();
        assert!(dtn(&cs_extend(&u, 0.5, &coarse).unwrap()).is_err());
    }

    #[test]
    fn half_ball_energy_converges_to_full_energy() {
        // with R = L/2 the half ball does not cover everything, but the part
        // inside must not exceed the full-space value and must grow with R
        let d = Domain::cube(2, 1.0, 32).unwrap();
        let u = d.sample(|x| (2.0 * PI * x[0]).cos());
        let z = default_z_ladder(&d, 0.5);
        let ext = cs_extend(&u, 0.5, &z).unwrap();
        let full = extension_energy(&ext, None).unwrap() / beta_s(0.5);
        let parts = half_ball_dirichlet(&ext, &[0.5, 0.5], &[0.1, 0.2, 0.3, 0.5]).unwrap();
        assert!(parts.windows(2).all(|w| w[1].value > w[0].value));
        assert!(parts[3].value < full);
    }

    #[test]
    fn degenerate_harmonicity() {
        let d = Domain::cube(1, 1.0, 64).unwrap();
        let u = d.sample(|x| (2.0 * PI * x[0]).sin().exp());
        let z = default_z_ladder(&d, 0.5);
        let ext = cs_extend(&u, 0.5, &z).unwrap();
        assert!(degenerate_harmonic_residual(&ext).unwrap() < 1e-3);
    }

    #[test]
    fn energy_is_minimal_among_perturbations() {
        // perturb the single-mode profile by a bump in z > 0
        let (lam, s) = (4.0 * PI * PI, 0.5);
        let energy = |delta: f64| {
            let (lo, hi) = ((1e-7f64).ln(), (20.0f64).ln());
            let n = 6000;
            let dz = (hi - lo) / n as f64;
            let mut sum = 0.0;
            for i in 0..=n {
                let z = (lo + dz * i as f64).exp();
                let b = (-(z - 0.2f64).powi(2) / 0.005).exp();
                let db = -2.0 * (z - 0.2) / 0.005 * b;
                let g = g_s(lam, z, s) + delta * b;
                let gz = g_s_dz(lam, z, s) + delta * db;
                let wgt = if i == 0 || i == n { 0.5 } else { 1.0 };
                sum += wgt * z.powf(2.0 - s) * (gz * gz + lam * g * g);
            }
            sum * dz
        };
        let e0 = energy(0.0);
        assert!(energy(0.05) > e0);
        assert!(energy(-0.05) > e0);
    }
}
