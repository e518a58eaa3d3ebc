//! Fractional s-perimeters of sets on the torus and related experiments.
//!
//! Sets are stored as ±1 grid fields (+1 on E). When a set comes from an
//! explicit shape the shape is kept alongside, and stripes and small balls
//! then have closed-form perimeters that do not see the pixelation.

use crate::error::{invalid, Error, Result};
use crate::fractional_ops::{kernel_tables, pair_integral, DiscreteKernel};
use crate::kernel::{alpha_ns, EwaldKernel};
use crate::manifold::{fmt_f64, Domain, GridField};
use crate::special::{ball_volume, gauss_legendre_on, integrate_adaptive, sphere_area};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// {x : a ≤ x_axis < b} taken periodically, 0 < b - a < L_axis.
    Stripe { axis: usize, a: f64, b: f64 },
    /// Open min-image ball.
    Ball { center: Vec<f64>, radius: f64 },
    Union { parts: Vec<Shape> },
    Complement { inner: Box<Shape> },
}

impl Shape {
    pub fn contains(&self, domain: &Domain, x: &[f64]) -> bool {
        match self {
            Shape::Stripe { axis, a, b } => {
                let l = domain.torus.side_lengths()[*axis];
                let mut t = ((x[*axis] - a) / l).rem_euclid(1.0);
                if t > 1.0 - 1e-12 {
                    t = 0.0;
                }
                t < (b - a) / l - 1e-12
            }
            Shape::Ball { center, radius } => domain.torus.geodesic_distance(x, center) < *radius,
            Shape::Union { parts } => parts.iter().any(|p| p.contains(domain, x)),
            Shape::Complement { inner } => !inner.contains(domain, x),
        }
    }
}

/// χ_E - χ_{E^c} on the grid, with an optional exact description of E.
#[derive(Debug, Clone)]
pub struct SetIndicator {
    pub field: GridField,
    pub exact_shape: Option<Shape>,
}

impl SetIndicator {
    pub fn from_shape(domain: &Domain, shape: Shape) -> Result<Self> {
        validate_shape(domain, &shape)?;
        let field = domain.sample(|x| if shape.contains(domain, x) { 1.0 } else { -1.0 });
        Ok(Self {
            field,
            exact_shape: Some(shape),
        })
    }

    pub fn from_field(field: GridField) -> Result<Self> {
        if field.values.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(invalid("field", "set indicators take the values ±1 only"));
        }
        Ok(Self {
            field,
            exact_shape: None,
        })
    }

    /// Thresholds a field at zero (u > 0 ↦ +1).
    pub fn threshold(field: &GridField) -> Self {
        Self {
            field: field.map(|v| if v > 0.0 { 1.0 } else { -1.0 }),
            exact_shape: None,
        }
    }

    pub fn stripe(domain: &Domain, axis: usize, a: f64, b: f64) -> Result<Self> {
        Self::from_shape(domain, Shape::Stripe { axis, a, b })
    }

    pub fn ball(domain: &Domain, center: &[f64], radius: f64) -> Result<Self> {
        Self::from_shape(
            domain,
            Shape::Ball {
                center: domain.torus.reduce(center),
                radius,
            },
        )
    }

    pub fn empty(domain: &Domain) -> Self {
        Self {
            field: domain.constant(-1.0),
            exact_shape: None,
        }
    }

    pub fn full(domain: &Domain) -> Self {
        Self {
            field: domain.constant(1.0),
            exact_shape: None,
        }
    }

    pub fn domain(&self) -> &Domain {
        &self.field.domain
    }

    pub fn complement(&self) -> Self {
        Self {
            field: self.field.map(|v| -v),
            exact_shape: self.exact_shape.clone().map(|s| match s {
                Shape::Complement { inner } => *inner,
                other => Shape::Complement { inner: Box::new(other) },
            }),
        }
    }

    /// Grid mask of E.
    pub fn mask(&self) -> Vec<bool> {
        self.field.values.iter().map(|&v| v > 0.0).collect()
    }

    /// |E| as the number of +1 cells times the cell volume.
    pub fn volume(&self) -> f64 {
        self.mask().iter().filter(|&&m| m).count() as f64 * self.domain().cell_volume()
    }
}

fn validate_shape(domain: &Domain, shape: &Shape) -> Result<()> {
    match shape {
        Shape::Stripe { axis, a, b } => {
            if *axis >= domain.dim() {
                return Err(invalid("axis", format!("{axis} is not below the dimension {}", domain.dim())));
            }
            let l = domain.torus.side_lengths()[*axis];
            if !(b - a > 0.0 && b - a < l) {
                return Err(invalid("stripe", "width b - a must lie in (0, L_axis)"));
            }
        }
        Shape::Ball { center, radius } => {
            if center.len() != domain.dim() {
                return Err(invalid("center", "dimension mismatch"));
            }
            if !(*radius > 0.0 && *radius <= 0.5 * domain.torus.min_side()) {
                return Err(invalid("radius", "must lie in (0, L_min/2]"));
            }
        }
        Shape::Union { parts } => {
            for p in parts {
                validate_shape(domain, p)?;
            }
        }
        Shape::Complement { inner } => validate_shape(domain, inner)?,
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerimeterMethod {
    /// Closed form when the exact shape allows it, grid otherwise.
    #[default]
    Auto,
    Grid,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerimeterParams {
    #[serde(default)]
    pub method: PerimeterMethod,
}

fn check_s(s: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(invalid("s", format!("the s-perimeter of a set needs s in (0, 1), got {s}")));
    }
    Ok(())
}

/// Per_s(E) = 2 ∫_E ∫_{E^c} K_s.
pub fn per_s(set: &SetIndicator, s: f64, params: &PerimeterParams) -> Result<f64> {
    check_s(s)?;
    let exact = set.exact_shape.as_ref().and_then(|sh| per_s_shape(set.domain(), sh, s));
    match (params.method, exact) {
        (PerimeterMethod::Grid, _) | (PerimeterMethod::Auto, None) => per_s_grid(set, s),
        (_, Some(v)) => Ok(v),
        (PerimeterMethod::Exact, None) => Err(invalid("method", "no closed form for this set")),
    }
}

/// (1/4) ∬ (u(x) - u(y))² K_s with the cell-averaged kernel.
pub fn per_s_grid(set: &SetIndicator, s: f64) -> Result<f64> {
    check_s(s)?;
    Ok(0.25 * crate::fractional_ops::double_integral(&set.field, s, DiscreteKernel::CellAveraged)?)
}

fn per_s_shape(domain: &Domain, shape: &Shape, s: f64) -> Option<f64> {
    match shape {
        Shape::Stripe { axis, a, b } => Some(per_s_stripe_exact(domain, *axis, b - a, s)),
        Shape::Ball { radius, .. } if 4.0 * radius <= domain.torus.min_side() => {
            Some(per_s_ball_exact(domain, *radius, s))
        }
        Shape::Complement { inner } => per_s_shape(domain, inner, s),
        _ => None,
    }
}

/// Stripe of width `width` across `axis`: the other axes integrate out of the
/// periodized kernel, leaving a one-dimensional lattice sum.
pub fn per_s_stripe_exact(domain: &Domain, axis: usize, width: f64, s: f64) -> f64 {
    let sides = domain.torus.side_lengths();
    let l = sides[axis];
    let other: f64 = sides.iter().enumerate().filter(|(i, _)| *i != axis).map(|(_, v)| v).product();
    let c = width.min(l - width);
    if c <= 0.0 {
        return 0.0;
    }
    let k = -s * (1.0 - s);
    let f = |t: f64| t.abs().powf(1.0 - s) / k;
    let df = |t: f64| t.abs().powf(-s) * t.signum() * (1.0 - s) / k;
    let g = |t: f64| t.abs().powf(2.0 - s) / (k * (2.0 - s));
    let phi = |m: f64| 2.0 * f(m * l) - f(m * l + c) - f(m * l - c);
    let m_max = 4000;
    let body: f64 = (1..=m_max).rev().map(|m| phi(m as f64)).sum();
    // Σ_{m > M} φ(m) by the midpoint rule around X = M + 1/2
    let x = m_max as f64 + 0.5;
    let integral = -(2.0 * g(x * l) - g(x * l + c) - g(x * l - c)) / l;
    let dphi = l * (2.0 * df(x * l) - df(x * l + c) - df(x * l - c));
    let tail = integral + dphi / 24.0;
    2.0 * other * alpha_ns(1, s) * (phi(0.0) + 2.0 * (body + tail))
}

/// |B_R ∩ (B_R + w)| as a function of |w|.
fn lens_volume(n: usize, r: f64, d: f64) -> f64 {
    if d >= 2.0 * r {
        return 0.0;
    }
    match n {
        1 => 2.0 * r - d,
        2 => 2.0 * r * r * (d / (2.0 * r)).acos() - 0.5 * d * (4.0 * r * r - d * d).sqrt(),
        3 => PI * (4.0 * r + d) * (2.0 * r - d).powi(2) / 12.0,
        _ => unreachable!("dimension checked by the caller"),
    }
}

/// (|B_R| - V_lens(d)) / d for 0 ≤ d ≤ 2R, written without cancellation.
fn deficit_over_distance(n: usize, r: f64, d: f64) -> f64 {
    match n {
        1 => 1.0,
        2 => {
            if d == 0.0 {
                return 4.0 * r;
            }
            (2.0 * r * r * (d / (2.0 * r)).asin() + 0.5 * d * (4.0 * r * r - d * d).max(0.0).sqrt()) / d
        }
        3 => PI * (r * r - d * d / 12.0),
        _ => unreachable!("dimension checked by the caller"),
    }
}

/// Ball with 4R ≤ L_min, from Per_s = 2 ∫ K(z) |E \ (E + z)| dz split into the
/// free-space radial part and the smooth periodic correction.
pub fn per_s_ball_exact(domain: &Domain, radius: f64, s: f64) -> f64 {
    let n = domain.dim();
    assert!(n <= 3, "closed-form ball perimeter is implemented for n ≤ 3");
    let alpha = alpha_ns(n, s);
    let sigma = sphere_area(n);
    let vb = ball_volume(n) * radius.powi(n as i32);
    let two_r = 2.0 * radius;
    // ∫_0^{2R} ρ^{-1-s} (V_B - V_lens(ρ)) dρ with ρ = 2R v^{1/(1-s)}
    let q = 1.0 / (1.0 - s);
    let near_integrand = |v: f64| deficit_over_distance(n, radius, two_r * v.powf(q));
    let near = two_r.powf(1.0 - s) * q * integrate_adaptive(&near_integrand, 0.0, 1.0, 1e-13);
    let far = vb * two_r.powf(-s) / s;
    let ewald = EwaldKernel::new(&domain.torus, s);
    let correction = ball_average_of_regular_part(&ewald, n, radius);
    2.0 * (alpha * sigma * (near + far) - correction)
}

/// ∫_{|w| < 2R} V_lens(|w|) K_reg(w) dw in polar coordinates.
fn ball_average_of_regular_part(ewald: &EwaldKernel, n: usize, radius: f64) -> f64 {
    let two_r = 2.0 * radius;
    let mut radial = Vec::new();
    for p in 0..4 {
        let (a, b) = (two_r * p as f64 / 4.0, two_r * (p + 1) as f64 / 4.0);
        radial.extend(gauss_legendre_on(24, a, b));
    }
    let directions: Vec<(Vec<f64>, f64)> = match n {
        1 => vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)],
        2 => {
            let m = 32;
            (0..m)
                .map(|i| {
                    let t = 2.0 * PI * i as f64 / m as f64;
                    (vec![t.cos(), t.sin()], 2.0 * PI / m as f64)
                })
                .collect()
        }
        _ => {
            let m = 32;
            let mut out = Vec::new();
            for (c, wc) in gauss_legendre_on(16, -1.0, 1.0) {
                let st = (1.0 - c * c).sqrt();
                for i in 0..m {
                    let p = 2.0 * PI * i as f64 / m as f64;
                    out.push((vec![st * p.cos(), st * p.sin(), c], wc * 2.0 * PI / m as f64));
                }
            }
            out
        }
    };
    radial
        .par_iter()
        .map(|&(rho, wr)| {
            let ang: f64 = directions
                .iter()
                .map(|(d, wd)| {
                    let w: Vec<f64> = d.iter().map(|v| v * rho).collect();
                    wd * ewald.regular_part(&w)
                })
                .sum();
            wr * rho.powi(n as i32 - 1) * lens_volume(n, radius, rho) * ang
        })
        .sum()
}

fn region_masks(omega: &SetIndicator) -> (Vec<bool>, Vec<bool>) {
    let inside = omega.mask();
    let outside = inside.iter().map(|m| !m).collect();
    (inside, outside)
}

fn same_domain(a: &SetIndicator, b: &SetIndicator) -> Result<()> {
    if a.domain() != b.domain() {
        return Err(Error::ShapeMismatch("set and region live on different grids".into()));
    }
    Ok(())
}

/// ∬ over (M×M) \ (Ω^c×Ω^c) of (χ_E(x) - χ_E(y))² K_s.
pub fn per_s_relative(set: &SetIndicator, omega: &SetIndicator, s: f64) -> Result<f64> {
    check_s(s)?;
    same_domain(set, omega)?;
    if omega.volume() == 0.0 {
        return Err(invalid("omega", "region has zero volume"));
    }
    let t = kernel_tables(set.domain(), s, DiscreteKernel::CellAveraged)?;
    let (inside, outside) = region_masks(omega);
    let local = pair_integral(&set.field, &inside, &inside, &t);
    let cross = pair_integral(&set.field, &inside, &outside, &t);
    Ok(0.25 * (local + 2.0 * cross))
}

/// ∬ over Ω×Ω of (χ_E(x) - χ_E(y))² K_s.
pub fn per_s_localized(set: &SetIndicator, omega: &SetIndicator, s: f64) -> Result<f64> {
    check_s(s)?;
    same_domain(set, omega)?;
    let t = kernel_tables(set.domain(), s, DiscreteKernel::CellAveraged)?;
    let inside = omega.mask();
    Ok(0.25 * pair_integral(&set.field, &inside, &inside, &t))
}

/// Exact perimeter for stripes and balls, grid face count otherwise.
pub fn classical_perimeter(set: &SetIndicator) -> f64 {
    if let Some(v) = set.exact_shape.as_ref().and_then(|sh| classical_shape(set.domain(), sh)) {
        return v;
    }
    0.5 * crate::fractional_ops::total_variation(&set.field)
}

fn classical_shape(domain: &Domain, shape: &Shape) -> Option<f64> {
    match shape {
        Shape::Stripe { axis, .. } => {
            let other: f64 = domain
                .torus
                .side_lengths()
                .iter()
                .enumerate()
                .filter(|(i, _)| i != axis)
                .map(|(_, v)| v)
                .product();
            Some(2.0 * other)
        }
        Shape::Ball { radius, .. } => Some(sphere_area(domain.dim()) * radius.powi(domain.dim() as i32 - 1)),
        Shape::Complement { inner } => classical_shape(domain, inner),
        Shape::Union { .. } => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub s: f64,
    /// (1 - s) Per_s(E)
    pub scaled_per_s: f64,
    /// scaled_per_s / Per(E)
    pub ratio: f64,
    /// (1 - s) Per_s of the pixelated set
    pub scaled_per_s_grid: f64,
    /// Share of the grid value carried by the near-diagonal cell correction.
    pub diagonal_fraction: f64,
}

/// Contribution of the |j|_∞ = 1 cell-averaging correction to the grid Per_s.
fn diagonal_correction(set: &SetIndicator, s: f64) -> Result<f64> {
    let domain = set.domain();
    let cell = kernel_tables(domain, s, DiscreteKernel::CellAveraged)?;
    let point = kernel_tables(domain, s, DiscreteKernel::PointCorrected)?;
    let n = domain.dim();
    let w = domain.cell_volume();
    let mut total = 0.0;
    for code in 0..3usize.pow(n as u32) {
        let shift: Vec<i64> = (0..n).map(|a| (code / 3usize.pow(a as u32) % 3) as i64 - 1).collect();
        if shift.iter().all(|&v| v == 0) {
            continue;
        }
        let idx: Vec<usize> = shift
            .iter()
            .zip(domain.shape())
            .map(|(&v, &len)| v.rem_euclid(len as i64) as usize)
            .collect();
        let f = domain.flat_index(&idx);
        let dk = cell.table[f] - point.table[f];
        let rolled = set.field.roll(&shift);
        let sq: f64 = set
            .field
            .values
            .iter()
            .zip(&rolled.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        total += dk * sq;
    }
    Ok(0.25 * total * w * w)
}

/// (1 - s) Per_s(E) against the classical perimeter along an increasing s list.
pub fn s_to_1_limit_experiment(set: &SetIndicator, s_list: &[f64]) -> Result<Vec<LimitRow>> {
    if s_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("s_list", "must be strictly increasing"));
    }
    let per = classical_perimeter(set);
    let mut rows = Vec::with_capacity(s_list.len());
    for &s in s_list {
        check_s(s)?;
        let grid = per_s_grid(set, s)?;
        let value = per_s(set, s, &PerimeterParams::default())?;
        let diag = if grid > 0.0 {
            (diagonal_correction(set, s)? / grid).abs()
        } else {
            0.0
        };
        if set.exact_shape.is_none() && diag > 0.05 {
            return Err(Error::Numerical(format!(
                "grid too coarse at s = {s}: near-diagonal correction is {:.1}% of Per_s",
                100.0 * diag
            )));
        }
        rows.push(LimitRow {
            s,
            scaled_per_s: (1.0 - s) * value,
            ratio: if per > 0.0 { (1.0 - s) * value / per } else { 0.0 },
            scaled_per_s_grid: (1.0 - s) * grid,
            diagonal_fraction: diag,
        });
    }
    Ok(rows)
}

pub fn write_limit_csv<W: Write>(rows: &[LimitRow], mut w: W) -> Result<()> {
    writeln!(w, "s,scaled_per_s,ratio,scaled_per_s_grid,diagonal_fraction")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_f64(r.s),
            fmt_f64(r.scaled_per_s),
            fmt_f64(r.ratio),
            fmt_f64(r.scaled_per_s_grid),
            fmt_f64(r.diagonal_fraction)
        )?;
    }
    Ok(())
}

/// Principal value with its extrapolation data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmcResult {
    pub value: f64,
    pub error: f64,
    /// The point actually used, snapped to the half-cell lattice.
    pub point: Vec<f64>,
    /// (r, truncated integral over |y - x0| ≥ r)
    pub truncations: Vec<(f64, f64)>,
}

/// Least squares for I(r) = a + b r^{1-s}; returns (a, rms residual).
fn fit_truncations(rows: &[(f64, f64)], s: f64) -> (f64, f64) {
    let m = rows.len() as f64;
    let xs: Vec<f64> = rows.iter().map(|(r, _)| r.powf(1.0 - s)).collect();
    let mx = xs.iter().sum::<f64>() / m;
    let my = rows.iter().map(|(_, v)| v).sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(rows).map(|(x, (_, y))| (x - mx) * (y - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let rms = (xs.iter().zip(rows).map(|(x, (_, y))| (y - a - b * x).powi(2)).sum::<f64>() / m).sqrt();
    (a, rms)
}

/// The cell corner next to `x` whose 2^n adjacent cells are most evenly split
/// between E and E^c; the grid is symmetric about any cell corner.
fn snap_to_interface(set: &SetIndicator, x: &[f64]) -> Result<Vec<f64>> {
    let domain = set.domain();
    let n = domain.dim();
    let base: Vec<i64> = (0..n).map(|a| (x[a] / domain.spacing(a) - 0.5).floor() as i64).collect();
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    for code in 0..1usize << n {
        let k: Vec<i64> = (0..n).map(|a| base[a] + ((code >> a) & 1) as i64).collect();
        let corner: Vec<f64> = (0..n).map(|a| (k[a] as f64 + 0.5) * domain.spacing(a)).collect();
        let mut sum = 0.0;
        for cell in 0..1usize << n {
            let idx: Vec<usize> = (0..n)
                .map(|a| (k[a] + ((cell >> a) & 1) as i64).rem_euclid(domain.shape()[a] as i64) as usize)
                .collect();
            sum += set.field.values[domain.flat_index(&idx)];
        }
        let dist = domain.torus.geodesic_distance(&corner, x);
        let better = match &best {
            None => true,
            Some((bs, bd, _)) => sum.abs() < *bs || (sum.abs() == *bs && dist < *bd),
        };
        if better {
            best = Some((sum.abs(), dist, corner));
        }
    }
    let (imbalance, _, corner) = best.expect("at least one corner");
    if imbalance >= (1usize << n) as f64 {
        return Err(invalid("boundary_point", "no sign change within one cell"));
    }
    Ok(domain.torus.reduce(&corner))
}

/// PV ∫ (χ_E - χ_{E^c})(y) K_s(x0, y) dy as the limit of integrals over
/// |y - x0| ≥ r, r = h 2^j, extrapolated with a + b r^{1-s}.
pub fn nmc(set: &SetIndicator, boundary_point: &[f64], s: f64, params: &PerimeterParams) -> Result<NmcResult> {
    let _ = params;
    check_s(s)?;
    let domain = set.domain();
    if boundary_point.len() != domain.dim() {
        return Err(invalid("boundary_point", "dimension mismatch"));
    }
    let x0 = snap_to_interface(set, boundary_point)?;
    let h = domain.h();
    let ewald = EwaldKernel::new(&domain.torus, s);
    let w = domain.cell_volume();
    let mut terms: Vec<(f64, f64)> = (0..domain.len())
        .into_par_iter()
        .filter_map(|f| {
            let d = domain.torus.displacement(&x0, &domain.point(f));
            let r = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            (r > 0.5 * h).then(|| (r, set.field.values[f] * ewald.eval(&d) * w))
        })
        .collect();
    terms.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut radii = Vec::new();
    let mut r = h;
    while r <= 0.25 * domain.torus.min_side() {
        radii.push(r);
        r *= 2.0;
    }
    if radii.len() < 4 {
        return Err(invalid("grid", "too coarse for the principal-value extrapolation"));
    }
    // accumulate from far to near so each truncation is a prefix sum
    let mut truncations = Vec::with_capacity(radii.len());
    let mut acc = 0.0;
    let mut idx = 0;
    for &r in radii.iter().rev() {
        while idx < terms.len() && terms[idx].0 >= r {
            acc += terms[idx].1;
            idx += 1;
        }
        truncations.push((r, acc));
    }
    truncations.reverse();
    let scale: f64 = terms.iter().map(|t| t.1.abs()).sum();
    let (a1, rms1) = fit_truncations(&truncations[1..], s);
    let (a2, _) = fit_truncations(&truncations[2..], s);
    Ok(NmcResult {
        value: a1,
        error: ((a1 - a2).abs() + rms1).max(1e-12 * scale),
        point: x0,
        truncations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsoRow {
    pub volume: f64,
    pub per_s_localized: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoReport {
    pub s: f64,
    pub rows: Vec<IsoRow>,
    /// Smallest ratio over the family.
    pub c_iso: f64,
}

/// Per_s|_B(E) / min(|E ∩ B|, |B \ E|)^{(n-s)/n} for sets inside a coordinate ball B.
pub fn isoperimetric_check(sets: &[SetIndicator], center: &[f64], radius: f64, s: f64) -> Result<IsoReport> {
    check_s(s)?;
    let first = sets.first().ok_or_else(|| invalid("sets", "empty family"))?;
    let domain = first.domain();
    if radius >= 0.5 * domain.torus.min_side() {
        return Err(invalid("radius", "coordinate ball must have radius below L_min/2"));
    }
    let ball = SetIndicator::ball(domain, center, radius)?;
    let n = domain.dim() as f64;
    let w = domain.cell_volume();
    let mut rows = Vec::with_capacity(sets.len());
    for set in sets {
        same_domain(set, &ball)?;
        let inside = set.mask().iter().zip(ball.mask()).filter(|(e, b)| **e && *b).count() as f64 * w;
        let rest = ball.volume() - inside;
        let per = per_s_localized(set, &ball, s)?;
        let v = inside.min(rest);
        rows.push(IsoRow {
            volume: inside,
            per_s_localized: per,
            ratio: if v > 0.0 { per / v.powf((n - s) / n) } else { f64::INFINITY },
        });
    }
    let c_iso = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    Ok(IsoReport { s, rows, c_iso })
}

pub fn write_iso_csv<W: Write>(report: &IsoReport, mut w: W) -> Result<()> {
    writeln!(w, "volume,per_s_localized,ratio")?;
    for r in &report.rows {
        writeln!(w, "{},{},{}", fmt_f64(r.volume), fmt_f64(r.per_s_localized), fmt_f64(r.ratio))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractional_ops::double_integral;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn circle(n: usize) -> Domain {
        Domain::cube(1, 1.0, n).unwrap()
    }

    #[test]
    fn trivial_sets_have_zero_perimeter() {
        let d = Domain::cube(2, 1.0, 32).unwrap();
        let p = PerimeterParams::default();
        assert_eq!(per_s(&SetIndicator::empty(&d), 0.5, &p).unwrap().abs(), 0.0);
        assert!(per_s(&SetIndicator::full(&d), 0.5, &p).unwrap().abs() < 1e-12);
        assert!(per_s(&SetIndicator::empty(&d), 1.0, &p).is_err());
    }

    #[test]
    fn complement_symmetry() {
        let d = Domain::cube(2, 1.0, 32).unwrap();
        let e = SetIndicator::ball(&d, &[0.3, 0.6], 0.2).unwrap();
        let p = PerimeterParams { method: PerimeterMethod::Grid };
        assert_relative_eq!(
            per_s(&e, 0.5, &p).unwrap(),
            per_s(&e.complement(), 0.5, &p).unwrap(),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            per_s(&e, 0.5, &PerimeterParams::default()).unwrap(),
            per_s(&e.complement(), 0.5, &PerimeterParams::default()).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn stripe_grid_matches_reduced_sum() {
        let d = circle(512);
        let e = SetIndicator::stripe(&d, 0, 0.0, 0.5).unwrap();
        let grid = per_s_grid(&e, 0.5).unwrap();
        let exact = per_s_stripe_exact(&d, 0, 0.5, 0.5);
        assert!((grid - exact).abs() <= 0.01 * exact);
        // the pixelated stripe is a translate of the exact one
        assert_relative_eq!(grid, exact, max_relative = 1e-6);
    }

    #[test]
    fn stripe_sum_matches_hurwitz_quadrature() {
        // ∫_0^c ∫_c^1 Σ_m |x - y + m|^{-3/2} dy dx at c = 0.3, by high-precision quadrature
        let d = circle(64);
        let alpha = alpha_ns(1, 0.5);
        let want = 2.0 * alpha * 3.905_588_809_787_637;
        assert_relative_eq!(per_s_stripe_exact(&d, 0, 0.3, 0.5), want, max_relative = 1e-9);
    }

    #[test]
    fn interval_as_ball_matches_stripe() {
        let d = circle(64);
        for &s in &[0.2, 0.5, 0.9] {
            assert_relative_eq!(
                per_s_ball_exact(&d, 0.1, s),
                per_s_stripe_exact(&d, 0, 0.2, s),
                max_relative = 1e-8
            );
        }
    }

    #[test]
    fn disc_closed_form_matches_fine_grid() {
        // pixelation error shrinks with N; the closed form sits at the limit
        let s = 0.5;
        let mut errs = Vec::new();
        for n in [64, 128, 256] {
            let d = Domain::cube(2, 1.0, n).unwrap();
            let e = SetIndicator::ball(&d, &[0.5, 0.5], 0.2).unwrap();
            let exact = per_s(&e, s, &PerimeterParams::default()).unwrap();
            let grid = per_s_grid(&e, s).unwrap();
            errs.push((grid - exact).abs() / exact);
        }
        assert!(errs[2] < 0.02, "{errs:?}");
        assert!(errs[2] < errs[0], "{errs:?}");
    }

    #[test]
    fn quarter_identity_to_round_off() {
        let d = Domain::cube(2, 1.0, 32).unwrap();
        let e = SetIndicator::ball(&d, &[0.4, 0.5], 0.23).unwrap();
        let t = kernel_tables(&d, 0.6, DiscreteKernel::CellAveraged).unwrap();
        let inside = e.mask();
        let outside: Vec<bool> = inside.iter().map(|m| !m).collect();
        // (u(x) - u(y))² = 4 on E × E^c, so 2 ∫_E ∫_{E^c} K = pair(E, E^c) / 2
        let two_cross = 0.5 * pair_integral(&e.field, &inside, &outside, &t);
        let quarter = 0.25 * double_integral(&e.field, 0.6, DiscreteKernel::CellAveraged).unwrap();
        assert_relative_eq!(two_cross, quarter, max_relative = 1e-12);
    }

    #[test]
    fn relative_and_localized_perimeters() {
        let d = Domain::cube(2, 1.0, 32).unwrap();
        let s = 0.5;
        let e = SetIndicator::ball(&d, &[0.5, 0.5], 0.15).unwrap();
        let omega = SetIndicator::ball(&d, &[0.5, 0.5], 0.3).unwrap();
        let full = SetIndicator::full(&d);
        let per = per_s_grid(&e, s).unwrap();
        // E ⊂ Ω and Ω = M reproduce Per_s
        assert_relative_eq!(per_s_relative(&e, &omega, s).unwrap(), per, max_relative = 1e-10);
        assert_relative_eq!(per_s_relative(&e, &full, s).unwrap(), per, max_relative = 1e-10);
        // localized ≤ relative, strict for a stripe crossing ∂Ω
        let stripe = SetIndicator::stripe(&d, 0, 0.0, 0.5).unwrap();
        let loc = per_s_localized(&stripe, &omega, s).unwrap();
        let rel = per_s_relative(&stripe, &omega, s).unwrap();
        assert!(loc < rel);
        // E ∩ Ω = ∅ gives zero localized perimeter
        let far = SetIndicator::ball(&d, &[0.0, 0.0], 0.1).unwrap();
        let small = SetIndicator::ball(&d, &[0.5, 0.5], 0.2).unwrap();
        assert!(per_s_localized(&far, &small, s).unwrap().abs() < 1e-9);
        // Ω ⊂ E^c with E ≠ ∅: the cross term keeps the inequality strict
        assert!(per_s_relative(&far, &small, s).unwrap() > 1e-3);
        // equality when Ω = M
        assert_relative_eq!(
            per_s_localized(&e, &full, s).unwrap(),
            per_s_relative(&e, &full, s).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn superadditivity_and_submodularity() {
        let d = Domain::cube(2, 1.0, 32).unwrap();
        let s = 0.5;
        let e = SetIndicator::stripe(&d, 0, 0.2, 0.7).unwrap();
        let o1 = SetIndicator::ball(&d, &[0.25, 0.25], 0.2).unwrap();
        let o2 = SetIndicator::ball(&d, &[0.75, 0.75], 0.2).unwrap();
        let union = SetIndicator::from_field(o1.field.zip_map(&o2.field, f64::max).unwrap()).unwrap();
        // relative perimeters obey inclusion–exclusion over the Ω1×Ω2 interactions
        let t = kernel_tables(&d, s, DiscreteKernel::CellAveraged).unwrap();
        let cross = 0.5 * pair_integral(&e.field, &o1.mask(), &o2.mask(), &t);
        let lhs = per_s_relative(&e, &union, s).unwrap();
        let sum = per_s_relative(&e, &o1, s).unwrap() + per_s_relative(&e, &o2, s).unwrap();
        assert!(cross > 0.0);
        assert_relative_eq!(lhs, sum - cross, max_relative = 1e-10);
        // the localized part is superadditive
        let loc = per_s_localized(&e, &union, s).unwrap();
        assert!(loc >= per_s_localized(&e, &o1, s).unwrap() + per_s_localized(&e, &o2, s).unwrap());
        let e1 = SetIndicator::ball(&d, &[0.3, 0.3], 0.1).unwrap();
        let e2 = SetIndicator::ball(&d, &[0.7, 0.7], 0.1).unwrap();
        let e12 = SetIndicator::from_field(e1.field.zip_map(&e2.field, f64::max).unwrap()).unwrap();
        let full = SetIndicator::full(&d);
        assert!(
            per_s_relative(&e12, &full, s).unwrap()
                <= per_s_relative(&e1, &full, s).unwrap() + per_s_relative(&e2, &full, s).unwrap()
        );
    }

    #[test]
    fn classical_perimeter_examples() {
        let d = Domain::cube(2, 1.0, 64).unwrap();
        let stripe = SetIndicator::stripe(&d, 0, 0.0, 0.5).unwrap();
        assert_relative_eq!(classical_perimeter(&stripe), 2.0, max_relative = 1e-15);
        let raw = SetIndicator::from_field(stripe.field.clone()).unwrap();
        assert_relative_eq!(classical_perimeter(&raw), 2.0, max_relative = 1e-12);
        let ball = SetIndicator::ball(&d, &[0.5, 0.5], 0.25).unwrap();
        assert_relative_eq!(classical_perimeter(&ball), 2.0 * PI * 0.25, max_relative = 1e-15);
    }

    #[test]
    fn s_to_one_empty_set_is_zero() {
        let d = circle(128);
        let rows = s_to_1_limit_experiment(&SetIndicator::empty(&d), &[0.5, 0.7]).unwrap();
        assert!(rows.iter().all(|r| r.scaled_per_s == 0.0 && r.ratio == 0.0));
    }

    #[test]
    fn s_to_one_shape_independence() {
        let d = Domain::cube(2, 1.0, 64).unwrap();
        let stripe = SetIndicator::stripe(&d, 0, 0.0, 0.5).unwrap();
        let ball = SetIndicator::ball(&d, &[0.5, 0.5], 0.25).unwrap();
        let a = s_to_1_limit_experiment(&stripe, &[0.95]).unwrap()[0].ratio;
        let b = s_to_1_limit_experiment(&ball, &[0.95]).unwrap()[0].ratio;
        assert!((a - b).abs() <= 0.1 * a, "{a} {b}");
    }

    #[test]
    fn nmc_stripe_is_zero_and_small_disc_negative() {
        let d = circle(256);
        let e = SetIndicator::stripe(&d, 0, 0.0, 0.5).unwrap();
        let r = nmc(&e, &[0.0], 0.5, &PerimeterParams::default()).unwrap();
        assert!(r.value.abs() <= r.error, "{r:?}");
        let d2 = Domain::cube(2, 1.0, 64).unwrap();
        let e2 = SetIndicator::stripe(&d2, 0, 0.0, 0.5).unwrap();
        let r2 = nmc(&e2, &[0.5, 0.3], 0.5, &PerimeterParams::default()).unwrap();
        assert!(r2.value.abs() <= r2.error, "{r2:?}");
        let disc = SetIndicator::ball(&d2, &[0.5, 0.5], 0.1).unwrap();
        let r3 = nmc(&disc, &[0.6, 0.5], 0.5, &PerimeterParams::default()).unwrap();
        assert!(r3.value + r3.error < 0.0, "{r3:?}");
        assert!(nmc(&disc, &[0.0, 0.0], 0.5, &PerimeterParams::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn per_s_complement_invariant(bits in proptest::collection::vec(any::<bool>(), 64), s in 0.1f64..0.9) {
            let d = circle(64);
            let e = SetIndicator::from_field(d.field(bits.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect()).unwrap()).unwrap();
            let p = per_s_grid(&e, s).unwrap();
            let q = per_s_grid(&e.complement(), s).unwrap();
            prop_assert!(p >= -1e-12);
            prop_assert!((p - q).abs() <= 1e-10 * p.abs().max(1.0));
        }
    }
}
