//! Min-max constructions: disjoint ball covers, the polynomial-sign sweepout,
//! the p^{s/n} growth of its max energy, the antipodal averaging probe, a
//! string-method mountain pass, and the ε → 0 experiment.

use crate::allen_cahn::{self, linear_fit, ACParams, DecayFit, EnergyBreakdown};
use crate::error::{invalid, Error, Result};
use crate::manifold::{fmt_f64, Domain, GridField};
use crate::perimeter::{per_s_grid, per_s_localized, SetIndicator};
use crate::special::{ball_volume, sphere_area};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::cmp::Ordering;
use std::io::Write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallCover {
    pub p: usize,
    pub radius: f64,
    /// Centers in first-come order; patches disjointify in this order.
    pub centers: Vec<Vec<f64>>,
    pub n: usize,
}

/// r = (min L_i / 6) p^{-1/n}.
pub fn default_radius(domain: &Domain, p: usize) -> f64 {
    domain.torus.min_side() / 6.0 * (p as f64).powf(-1.0 / domain.dim() as f64)
}

/// Bounds vol/(ω (3r)^n) ≤ N ≤ vol/(ω r^n) forced by disjointness and the 3r cover.
pub fn count_bounds(domain: &Domain, radius: f64) -> (f64, f64) {
    let n = domain.dim() as i32;
    let vol = domain.torus.volume();
    let omega = ball_volume(domain.dim());
    (vol / (omega * (3.0 * radius).powi(n)), vol / (omega * radius.powi(n)))
}

pub fn ball_cover(domain: &Domain, p: usize, seed: u64) -> Result<BallCover> {
    if p == 0 {
        return Err(invalid("p", "must be at least 1"));
    }
    ball_cover_with_radius(domain, p, default_radius(domain, p), seed)
}

/// Greedy maximal disjoint family of r-balls over a shuffled candidate lattice,
/// refined until every grid point lies within 3r of a center.
pub fn ball_cover_with_radius(domain: &Domain, p: usize, radius: f64, seed: u64) -> Result<BallCover> {
    if !(radius > 0.0) || radius > domain.torus.min_side() / 6.0 + 1e-12 {
        return Err(invalid("p", format!("radius {radius} exceeds min L / 6; p is too small for this torus")));
    }
    let sides = domain.torus.side_lengths().to_vec();
    let mut spacing = 0.25 * radius;
    for _attempt in 0..4 {
        let counts: Vec<usize> = sides.iter().map(|l| (l / spacing).ceil() as usize).collect();
        let total: usize = counts.iter().product();
        let mut order: Vec<usize> = (0..total).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut centers: Vec<Vec<f64>> = Vec::new();
        for flat in order {
            let mut rem = flat;
            let mut x = vec![0.0; sides.len()];
            for a in (0..sides.len()).rev() {
                x[a] = (rem % counts[a]) as f64 * sides[a] / counts[a] as f64;
                rem /= counts[a];
            }
            if centers.iter().all(|c| domain.torus.geodesic_distance(c, &x) >= 2.0 * radius) {
                centers.push(x);
            }
        }
        let covered = (0..domain.len()).into_par_iter().all(|f| {
            let x = domain.point(f);
            centers.iter().any(|c| domain.torus.geodesic_distance(c, &x) <= 3.0 * radius)
        });
        if covered {
            let n = centers.len();
            return Ok(BallCover { p, radius, centers, n });
        }
        spacing *= 0.5;
    }
    Err(Error::Numerical("ball cover verification failed".into()))
}

/// Grid points sent to the virtual axis: patch index and abscissa.
#[derive(Debug, Clone)]
pub struct PatchMap {
    pub patch: Vec<usize>,
    pub abscissa: Vec<f64>,
}

impl PatchMap {
    pub fn new(domain: &Domain, cover: &BallCover) -> Result<Self> {
        let r3 = 3.0 * cover.radius;
        let pairs: Vec<Option<(usize, f64)>> = (0..domain.len())
            .into_par_iter()
            .map(|f| {
                let x = domain.point(f);
                cover.centers.iter().enumerate().find_map(|(i, q)| {
                    let d = domain.torus.displacement(q, &x);
                    let r = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                    (r <= r3).then(|| (i, r3 * (2 * i + 1) as f64 + d[0]))
                })
            })
            .collect();
        let mut patch = Vec::with_capacity(pairs.len());
        let mut abscissa = Vec::with_capacity(pairs.len());
        for p in pairs {
            let (i, t) = p.ok_or_else(|| Error::Numerical("grid point outside every patch".into()))?;
            patch.push(i);
            abscissa.push(t);
        }
        Ok(Self { patch, abscissa })
    }
}

/// Real roots of a_0 + a_1 z + … + a_p z^p with multiplicity, from companion
/// eigenvalues polished by Newton steps.
pub fn real_roots(a: &[f64]) -> Vec<f64> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let Some(deg) = a.iter().rposition(|v| v.abs() > 1e-14 * scale) else {
        return Vec::new();
    };
    if deg == 0 {
        return Vec::new();
    }
    let lead = a[deg];
    let mut c = DMatrix::<f64>::zeros(deg, deg);
    for i in 1..deg {
        c[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        c[(i, deg - 1)] = -a[i] / lead;
    }
    let eval = |z: f64| -> (f64, f64) {
        let (mut p, mut dp) = (0.0, 0.0);
        for &coef in a[..=deg].iter().rev() {
            dp = dp * z + p;
            p = p * z + coef;
        }
        (p, dp)
    };
    let mut roots: Vec<f64> = c
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-7 * z.re.abs().max(1.0))
        .map(|z| {
            let mut x = z.re;
            for _ in 0..3 {
                let (p, dp) = eval(x);
                if dp == 0.0 {
                    break;
                }
                let step = p / dp;
                if !step.is_finite() || step.abs() > 1e-3 * x.abs().max(1.0) {
                    break;
                }
                x -= step;
            }
            x
        })
        .collect();
    roots.sort_by(f64::total_cmp);
    roots
}

/// sign(a_deg) Π sign(t - root), +1 on roots.
fn poly_sign(lead_sign: f64, roots: &[f64], t: f64) -> f64 {
    let below = roots.iter().filter(|&&r| r > t).count();
    if roots.iter().any(|&r| r == t) {
        return 1.0;
    }
    if below % 2 == 0 {
        lead_sign
    } else {
        -lead_sign
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EnergyMode {
    SharpInterface,
    Ac { epsilon: f64 },
}

#[derive(Debug, Clone)]
pub struct SweepoutMember {
    pub a: Vec<f64>,
    pub set: SetIndicator,
    pub energy: EnergyBreakdown,
}

pub fn sweepout_member(domain: &Domain, cover: &BallCover, a: &[f64], s: f64, mode: EnergyMode) -> Result<SweepoutMember> {
    let map = PatchMap::new(domain, cover)?;
    member_from_map(domain, &map, a, s, mode)
}

fn check_unit(a: &[f64]) -> Result<()> {
    let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    if a.is_empty() || (norm - 1.0).abs() > 1e-9 {
        return Err(invalid("a", format!("must be a unit vector, |a| = {norm}")));
    }
    Ok(())
}

/// The ±1 field of the member at a.
pub fn member_field(domain: &Domain, map: &PatchMap, a: &[f64]) -> Result<GridField> {
    check_unit(a)?;
    let roots = real_roots(a);
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let lead = a.iter().rfind(|v| v.abs() > 1e-14 * scale).copied().unwrap_or(1.0);
    let lead_sign = lead.signum();
    let values = map.abscissa.iter().map(|&t| poly_sign(lead_sign, &roots, t)).collect();
    GridField::new(domain.clone(), values)
}

fn member_energy(set: &SetIndicator, s: f64, mode: EnergyMode) -> Result<EnergyBreakdown> {
    match mode {
        EnergyMode::SharpInterface => {
            let per = per_s_grid(set, s)?;
            Ok(EnergyBreakdown {
                sobolev: per,
                potential: 0.0,
                total: per,
            })
        }
        EnergyMode::Ac { epsilon } => allen_cahn::energy(&set.field, &ACParams::new(s, epsilon)?, None),
    }
}

fn member_from_map(domain: &Domain, map: &PatchMap, a: &[f64], s: f64, mode: EnergyMode) -> Result<SweepoutMember> {
    let field = member_field(domain, map, a)?;
    let set = SetIndicator::from_field(field)?;
    let energy = member_energy(&set, s, mode)?;
    Ok(SweepoutMember {
        a: a.to_vec(),
        set,
        energy,
    })
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Points on S^{dim-1}: shifted Halton points through the Gaussian quantile,
/// normalized. The first `count` points do not depend on a larger request.
pub fn sphere_points(dim: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if dim == 0 || dim > PRIMES.len() {
        return Err(invalid("p", format!("sphere dimension {dim} outside 1..={}", PRIMES.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    let normal = Normal::standard();
    let mut out = Vec::with_capacity(count);
    let mut i = 1u64;
    while out.len() < count {
        let g: Vec<f64> = (0..dim)
            .map(|d| {
                let u = (radical_inverse(i, PRIMES[d]) + shift[d]).fract().clamp(1e-12, 1.0 - 1e-12);
                normal.inverse_cdf(u)
            })
            .collect();
        i += 1;
        let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-12 {
            out.push(g.iter().map(|v| v / n).collect());
        }
    }
    Ok(out)
}

/// Points on S^p in the root chart: shifted Halton root positions in
/// [0, axis_length), expanded to the coefficients of Π (z - t_j) and normalized.
pub fn root_chart_points(p: usize, axis_length: f64, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if p == 0 || p > PRIMES.len() {
        return Err(invalid("p", format!("degree {p} outside 1..={}", PRIMES.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let shift: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
    Ok((1..=count as u64)
        .map(|i| {
            let mut coef = vec![1.0];
            for (d, sh) in shift.iter().enumerate() {
                let t = (radical_inverse(i, PRIMES[d]) + sh).fract() * axis_length;
                let mut next = vec![0.0; coef.len() + 1];
                for (k, c) in coef.iter().enumerate() {
                    next[k + 1] += c;
                    next[k] -= t * c;
                }
                coef = next;
            }
            let n = coef.iter().map(|v| v * v).sum::<f64>().sqrt();
            coef.iter().map(|v| v / n).collect()
        })
        .collect())
}

/// Coefficients of Π (z - t_j) with root t_j drawn from the j-th interval,
/// normalized; prefix-stable in `count`.
fn ball_chart_points(ranges: &[(f64, f64)], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5bd1_e995);
    let shift: Vec<f64> = ranges.iter().map(|_| rng.random::<f64>()).collect();
    (1..=count as u64)
        .map(|i| {
            let mut coef = vec![1.0];
            for (d, (&(lo, hi), sh)) in ranges.iter().zip(&shift).enumerate() {
                let t = lo + (radical_inverse(i, PRIMES[d % PRIMES.len()]) + sh).fract() * (hi - lo);
                let mut next = vec![0.0; coef.len() + 1];
                for (k, c) in coef.iter().enumerate() {
                    next[k + 1] += c;
                    next[k] -= t * c;
                }
                coef = next;
            }
            let n = coef.iter().map(|v| v * v).sum::<f64>().sqrt();
            coef.iter().map(|v| v / n).collect()
        })
        .collect()
}

/// Interleaves the uniform chart and the root chart; prefix-stable in `count`.
pub fn sweepout_samples(cover: &BallCover, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let p = cover.p;
    let uniform = sphere_points(p + 1, count.div_ceil(2), seed)?;
    let axis = 6.0 * cover.radius * cover.n as f64;
    let roots = root_chart_points(p, axis, count / 2, seed)?;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        out.push(if i % 2 == 0 { uniform[i / 2].clone() } else { roots[i / 2].clone() });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub p: usize,
    pub n_balls: usize,
    pub radius: f64,
    pub max_energy: f64,
    /// (1 - s) · max_energy
    pub scaled: f64,
    pub argmax: Vec<f64>,
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// max of the member energy over e_0 and `sphere_samples` points of S^p
/// (each standing for itself and its antipode).
pub fn sweepout_max_energy(domain: &Domain, cover: &BallCover, s: f64, mode: EnergyMode, sphere_samples: usize, seed: u64) -> Result<ScalingRow> {
    let p = cover.p;
    if sphere_samples < 10 * (p + 1) {
        return Err(invalid("sphere_samples", format!("need at least 10 (p + 1) = {}", 10 * (p + 1))));
    }
    let map = PatchMap::new(domain, cover)?;
    let mut samples = vec![{
        let mut e0 = vec![0.0; p + 1];
        e0[0] = 1.0;
        e0
    }];
    samples.extend(sweepout_samples(cover, sphere_samples, seed)?);
    let energies: Vec<(f64, Vec<f64>)> = samples
        .into_par_iter()
        .map(|a| member_from_map(domain, &map, &a, s, mode).map(|m| (m.energy.total, a)))
        .collect::<Result<_>>()?;
    let (max_energy, argmax) = energies
        .into_iter()
        .reduce(|x, y| match x.0.total_cmp(&y.0) {
            Ordering::Greater => x,
            Ordering::Less => y,
            Ordering::Equal => {
                if lex_cmp(&x.1, &y.1) != Ordering::Greater {
                    x
                } else {
                    y
                }
            }
        })
        .expect("at least one sample");
    Ok(ScalingRow {
        p,
        n_balls: cover.n,
        radius: cover.radius,
        max_energy,
        scaled: (1.0 - s) * max_energy,
        argmax,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub s: f64,
    pub rows: Vec<ScalingRow>,
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    /// s / n
    pub target: f64,
}

impl ScalingReport {
    pub fn slope_in_band(&self, band: f64) -> bool {
        (self.slope - self.target).abs() <= band
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "p,N,r,max_energy,scaled")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{},{}", r.p, r.n_balls, fmt_f64(r.radius), fmt_f64(r.max_energy), fmt_f64(r.scaled))?;
        }
        Ok(())
    }

    pub fn slope_json(&self) -> serde_json::Value {
        serde_json::json!({ "slope": self.slope, "stderr": self.stderr, "target": self.target })
    }
}

/// Fits log((1 - s) max) against log p. `cover_seed` fixes the ball covers,
/// `seed` drives the sphere sampling.
pub fn scaling_experiment(
    domain: &Domain,
    p_values: &[usize],
    s: f64,
    mode: EnergyMode,
    sphere_samples: usize,
    seed: u64,
    cover_seed: u64,
) -> Result<ScalingReport> {
    if p_values.len() < 4 {
        return Err(invalid("p_range", "need at least 4 values of p for a fit"));
    }
    if p_values.iter().any(|&p| !(1..=12).contains(&p)) {
        return Err(invalid("p_range", "p must lie in 1..=12"));
    }
    let mut rows = Vec::with_capacity(p_values.len());
    for &p in p_values {
        let cover = ball_cover(domain, p, cover_seed)?;
        rows.push(sweepout_max_energy(domain, &cover, s, mode, sphere_samples.max(10 * (p + 1)), seed)?);
    }
    if rows.iter().any(|r| !(r.scaled > 0.0)) {
        return Err(Error::Numerical("non-positive max energy".into()));
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| ((r.p as f64).ln(), r.scaled.ln())).collect();
    let DecayFit { slope, stderr } = linear_fit(&pts);
    let n = pts.len() as f64;
    let intercept = pts.iter().map(|p| p.1 - slope * p.0).sum::<f64>() / n;
    Ok(ScalingReport {
        s,
        rows,
        slope,
        stderr,
        intercept,
        target: s / domain.dim() as f64,
    })
}

/// Averages of u over the first `count` cover balls B_r(q_i).
pub fn ball_averages(u: &GridField, cover: &BallCover, count: usize) -> Vec<f64> {
    let d = &u.domain;
    cover.centers[..count]
        .iter()
        .map(|q| {
            let (mut sum, mut n) = (0.0, 0usize);
            for f in 0..d.len() {
                if d.torus.geodesic_distance(&d.point(f), q) < cover.radius {
                    sum += u.values[f];
                    n += 1;
                }
            }
            if n == 0 {
                0.0
            } else {
                sum / n as f64
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BorsukReport {
    pub witness: Vec<f64>,
    /// max_i |average over ball i| of the witness
    pub max_average: f64,
    /// Per_s(E, B_r(q_i)) localized to each ball for the witness.
    pub ball_energies: Vec<f64>,
    /// min_i (1 - s) energy_i / r^{n-s}
    pub c0_fit: f64,
    pub samples: usize,
}

/// Searches the sampled sphere for a member that is balanced on the first p balls.
pub fn borsuk_probe(domain: &Domain, cover: &BallCover, s: f64, sphere_samples: usize, seed: u64) -> Result<BorsukReport> {
    let p = cover.p;
    if cover.n < p {
        return Err(invalid("cover", format!("only {} balls for p = {p}", cover.n)));
    }
    let map = PatchMap::new(domain, cover)?;
    let balls: Vec<Vec<usize>> = cover.centers[..p]
        .iter()
        .map(|q| (0..domain.len()).filter(|&f| domain.torus.geodesic_distance(&domain.point(f), q) < cover.radius).collect())
        .collect();
    let ranges: Vec<(f64, f64)> = balls
        .iter()
        .map(|b| b.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &f| (lo.min(map.abscissa[f]), hi.max(map.abscissa[f]))))
        .collect();
    let mut points = sweepout_samples(cover, sphere_samples, seed)?;
    points.extend(ball_chart_points(&ranges, sphere_samples, seed));
    let samples = points.len();
    let scored: Vec<(f64, Vec<f64>)> = points
        .into_par_iter()
        .map(|a| {
            let u = member_field(domain, &map, &a)?;
            let worst = balls
                .iter()
                .map(|b| (b.iter().map(|&f| u.values[f]).sum::<f64>() / b.len().max(1) as f64).abs())
                .fold(0.0, f64::max);
            Ok((worst, a))
        })
        .collect::<Result<_>>()?;
    let (max_average, witness) = scored
        .into_iter()
        .reduce(|x, y| match x.0.total_cmp(&y.0) {
            Ordering::Less => x,
            Ordering::Greater => y,
            Ordering::Equal => {
                if lex_cmp(&x.1, &y.1) != Ordering::Greater {
                    x
                } else {
                    y
                }
            }
        })
        .expect("samples");
    let set = SetIndicator::from_field(member_field(domain, &map, &witness)?)?;
    let ball_energies: Vec<f64> = cover.centers[..p]
        .iter()
        .map(|q| per_s_localized(&set, &SetIndicator::ball(domain, q, cover.radius)?, s))
        .collect::<Result<_>>()?;
    let n = domain.dim() as f64;
    let c0_fit = ball_energies
        .iter()
        .map(|e| (1.0 - s) * e / cover.radius.powf(n - s))
        .fold(f64::INFINITY, f64::min);
    Ok(BorsukReport {
        witness,
        max_average,
        ball_energies,
        c0_fit,
        samples,
    })
}

#[derive(Debug, Clone)]
pub struct MountainPassReport {
    pub path: Vec<GridField>,
    pub path_energies: Vec<f64>,
    /// Max node energy after each sweep.
    pub max_history: Vec<f64>,
    pub initial_path_max: f64,
    pub saddle: GridField,
    pub saddle_energy: EnergyBreakdown,
    pub saddle_residual: f64,
    pub saddle_index: usize,
    pub sweeps: usize,
}

fn l2_distance(a: &GridField, b: &GridField) -> f64 {
    a.zip_map(b, |x, y| x - y).expect("same grid").l2_norm()
}

fn reparametrize(path: &mut [GridField]) {
    let m = path.len();
    let mut arc = vec![0.0; m];
    for i in 1..m {
        arc[i] = arc[i - 1] + l2_distance(&path[i], &path[i - 1]);
    }
    let total = arc[m - 1];
    if total == 0.0 {
        return;
    }
    let old = path.to_vec();
    let mut j = 0;
    for (i, node) in path.iter_mut().enumerate().take(m - 1).skip(1) {
        let target = total * i as f64 / (m - 1) as f64;
        while arc[j + 1] < target {
            j += 1;
        }
        let t = (target - arc[j]) / (arc[j + 1] - arc[j]);
        *node = old[j].zip_map(&old[j + 1], |a, b| (1.0 - t) * a + t * b).expect("same grid");
    }
}

/// String method between two local minimizers: interior nodes take one
/// semi-implicit descent step per sweep, then the path is resampled at equal
/// L² arclength. The highest node is then driven to a critical point by Newton.
pub fn mountain_pass(u_minus: &GridField, u_plus: &GridField, params: &ACParams, nodes: usize, max_sweeps: usize) -> Result<MountainPassReport> {
    params.validate()?;
    if nodes < 16 {
        return Err(invalid("nodes", "need at least 16 nodes"));
    }
    let tol_end = 10.0 * params.tol_residual;
    for (name, u) in [("u_minus", u_minus), ("u_plus", u_plus)] {
        let r = allen_cahn::residual(u, params).sup_norm();
        if r > tol_end {
            return Err(invalid(name, format!("endpoint is not converged (residual {r:.3e})")));
        }
    }
    if l2_distance(u_minus, u_plus) < 1e-8 {
        return Err(Error::Numerical("path collapse: endpoints coincide".into()));
    }
    let domain = u_minus.domain.clone();
    // straight segment plus a smooth transverse bump, zero at the ends
    let bump = domain.sample(|x| 0.5 * (2.0 * std::f64::consts::PI * x[0] / domain.torus.side_lengths()[0]).cos());
    let mut path: Vec<GridField> = (0..nodes)
        .map(|i| {
            let t = i as f64 / (nodes - 1) as f64;
            if i == 0 {
                return u_minus.clone();
            }
            if i == nodes - 1 {
                return u_plus.clone();
            }
            let amp = (std::f64::consts::PI * t).sin();
            let mixed = u_minus.zip_map(u_plus, |a, b| (1.0 - t) * a + t * b).expect("same grid");
            mixed.zip_map(&bump, |m, b| (m + amp * b).clamp(-1.0, 1.0)).expect("same grid")
        })
        .collect();
    let energy_of = |u: &GridField| allen_cahn::energy(u, params, None).map(|e| e.total);
    let mut energies: Vec<f64> = path.iter().map(energy_of).collect::<Result<_>>()?;
    let initial_path_max = energies.iter().cloned().fold(f64::MIN, f64::max);
    let mut step = *params;
    step.max_iters = 1;
    step.tol_residual = 0.0f64.max(f64::MIN_POSITIVE);
    let mut max_history = vec![initial_path_max];
    let mut sweeps = 0;
    for _ in 0..max_sweeps {
        sweeps += 1;
        let moved: Vec<GridField> = path[1..nodes - 1]
            .par_iter()
            .map(|u| allen_cahn::gradient_flow(u, &step).map(|s| s.u.expect("field")))
            .collect::<Result<_>>()?;
        for (i, u) in moved.into_iter().enumerate() {
            path[i + 1] = u;
        }
        reparametrize(&mut path);
        energies = path.iter().map(energy_of).collect::<Result<_>>()?;
        let mx = energies.iter().cloned().fold(f64::MIN, f64::max);
        let prev = *max_history.last().expect("history");
        max_history.push(mx);
        if (prev - mx).abs() <= 1e-9 * mx.abs() {
            break;
        }
    }
    let top = energies
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("nodes");
    let saddle = allen_cahn::newton_critical(&path[top], params, tol_end, 60)?;
    let saddle_residual = allen_cahn::residual(&saddle, params).sup_norm();
    let saddle_energy = allen_cahn::energy(&saddle, params, None)?;
    let saddle_index = allen_cahn::morse_index(&saddle, params, None, 4)?.index;
    Ok(MountainPassReport {
        path,
        path_energies: energies,
        max_history,
        initial_path_max,
        saddle,
        saddle_energy,
        saddle_residual,
        saddle_index,
        sweeps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRow {
    pub epsilon: f64,
    pub sobolev: f64,
    pub potential: f64,
    /// Per_s of {u > 0}
    pub per_s_threshold: f64,
    /// |sobolev - per_s_threshold| / per_s_threshold
    pub relative_gap: f64,
    /// Volume of the symmetric difference with the previous thresholded set.
    pub drift: Option<f64>,
    pub residual: f64,
    pub converged: bool,
}

/// Heat smoothing at length ε: multiplies û by exp(-ε² λ / 2).
pub fn mollify(u: &GridField, epsilon: f64) -> GridField {
    let symbol: Vec<f64> = u.domain.eigenvalues().iter().map(|l| (-0.5 * epsilon * epsilon * l).exp()).collect();
    u.apply_symbol(&symbol).map(|v| v.clamp(-1.0, 1.0))
}

/// Flows the mollified sweepout argmax at each ε, then sharpens it by Newton;
/// falls back to Newton from the previous ε's critical point.
pub fn epsilon_limit_experiment(domain: &Domain, p: usize, s: f64, eps_list: &[f64], sphere_samples: usize, seed: u64) -> Result<Vec<EpsilonRow>> {
    if eps_list.is_empty() {
        return Err(invalid("eps_list", "empty"));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("eps_list", "must be strictly decreasing"));
    }
    let floor = 2.0 * domain.h();
    if eps_list.iter().any(|&e| e < floor) {
        return Err(invalid("eps_list", format!("every epsilon must be at least 2h = {floor}")));
    }
    let cover = ball_cover(domain, p, seed)?;
    let row = sweepout_max_energy(domain, &cover, s, EnergyMode::SharpInterface, sphere_samples, seed)?;
    let map = PatchMap::new(domain, &cover)?;
    let start = member_field(domain, &map, &row.argmax)?;
    let mut rows = Vec::with_capacity(eps_list.len());
    let mut previous: Option<Vec<bool>> = None;
    let mut last_critical: Option<GridField> = None;
    let two_phase = |u: &GridField| u.values.iter().any(|&v| v > 0.0) && u.values.iter().any(|&v| v < 0.0);
    for &eps in eps_list {
        let params = ACParams::new(s, eps)?;
        let mut flow_params = params;
        flow_params.tol_residual = 1e-3 * params.well_scale();
        let critical = |from: &GridField| {
            allen_cahn::newton_critical(from, &params, params.tol_residual, 40)
                .ok()
                .filter(|u| two_phase(u))
        };
        // The min-max critical point is unstable; keep the two-phase iterate
        // closest to criticality in case the flow slides off it.
        let (flowed, best) = allen_cahn::gradient_flow_tracked(&mollify(&start, eps), &flow_params, &two_phase)?;
        let seed_field = best.map(|b| b.0).unwrap_or_else(|| flowed.field().clone());
        let found = critical(&seed_field).or_else(|| last_critical.as_ref().and_then(|prev| critical(prev)));
        let (u, converged) = match found {
            Some(u) => (u, true),
            None => (seed_field, false),
        };
        if converged {
            last_critical = Some(u.clone());
        }
        let residual = allen_cahn::residual(&u, &params).sup_norm();
        let e = allen_cahn::energy(&u, &params, None)?;
        let set = SetIndicator::threshold(&u);
        let per = per_s_grid(&set, s)?;
        let mask = set.mask();
        let drift = previous
            .as_ref()
            .map(|prev| prev.iter().zip(&mask).filter(|(a, b)| a != b).count() as f64 * domain.cell_volume());
        previous = Some(mask);
        rows.push(EpsilonRow {
            epsilon: eps,
            sobolev: e.sobolev,
            potential: e.potential,
            per_s_threshold: per,
            relative_gap: (e.sobolev - per).abs() / per,
            drift,
            residual,
            converged: converged && residual <= params.tol_residual && u.sup_norm() < 1.0,
        });
    }
    Ok(rows)
}

pub fn write_epsilon_csv<W: Write>(rows: &[EpsilonRow], mut w: W) -> Result<()> {
    writeln!(w, "epsilon,sobolev,potential,per_s_threshold,relative_gap,drift,residual,converged")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            fmt_f64(r.epsilon),
            fmt_f64(r.sobolev),
            fmt_f64(r.potential),
            fmt_f64(r.per_s_threshold),
            fmt_f64(r.relative_gap),
            r.drift.map(fmt_f64).unwrap_or_default(),
            fmt_f64(r.residual),
            r.converged
        )?;
    }
    Ok(())
}

/// Upper bound C (N + p) r^{n-1} for the interface area of a member, with
/// C = 2 σ_{n} 3^{n-1} covering sphere pieces, flat cuts and grid staircasing.
pub fn interface_bound(domain: &Domain, cover: &BallCover) -> f64 {
    let n = domain.dim();
    let c = 2.0 * sphere_area(n) * 3f64.powi(n as i32 - 1);
    c * (cover.n + cover.p) as f64 * cover.radius.powi(n as i32 - 1)
}
