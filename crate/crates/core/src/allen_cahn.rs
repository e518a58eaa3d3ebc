//! The fractional Allen–Cahn functional
//! E(u) = (1/4) ∬ (u(x) - u(y))² K_s + ε^{-s} ∫ W(u), W(u) = (1 - u²)² / 4,
//! with its Euler–Lagrange residual, a semi-implicit gradient flow, the
//! second variation and Morse index, and the one-dimensional layer.

use crate::error::{invalid, Error, Result};
use crate::fractional_ops::{frac_laplacian_spectral, kernel_tables, pair_integral, spectral_seminorm, DiscreteKernel};
use crate::kernel::EwaldKernel;
use crate::manifold::{Domain, FlatTorus, GridField, GridSpec, SpectralField};
use crate::perimeter::SetIndicator;
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ACParams {
    pub s: f64,
    pub epsilon: f64,
    pub flow_dt: f64,
    pub tol_residual: f64,
    pub max_iters: usize,
}

impl ACParams {
    /// Defaults: dt = ε^s / 2, residual tolerance 1e-8, 20000 iterations.
    pub fn new(s: f64, epsilon: f64) -> Result<Self> {
        let p = Self {
            s,
            epsilon,
            flow_dt: 0.5 * epsilon.powf(s),
            tol_residual: 1e-8,
            max_iters: 20_000,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(invalid("s", format!("must lie in (0, 1), got {}", self.s)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(invalid("epsilon", "must be positive"));
        }
        if !(self.flow_dt > 0.0) {
            return Err(invalid("flow_dt", "must be positive"));
        }
        if !(self.tol_residual > 0.0) {
            return Err(invalid("tol_residual", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters", "must be at least 1"));
        }
        Ok(())
    }

    /// ε^{-s}
    pub fn well_scale(&self) -> f64 {
        self.epsilon.powf(-self.s)
    }

    /// Warning when ε is below two grid spacings.
    pub fn resolution_warning(&self, domain: &Domain) -> Option<String> {
        (self.epsilon < 2.0 * domain.h()).then(|| {
            format!("epsilon = {} is below 2h = {}; interfaces are under-resolved", self.epsilon, 2.0 * domain.h())
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub sobolev: f64,
    pub potential: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    fn new(sobolev: f64, potential: f64) -> Self {
        Self {
            sobolev,
            potential,
            total: sobolev + potential,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ACSolution {
    #[serde(skip)]
    pub u: Option<GridField>,
    pub params: ACParams,
    pub residual_norm: f64,
    pub energy: EnergyBreakdown,
    pub iterations: usize,
    pub converged: bool,
    /// Total energy after every accepted step, starting with the initial field.
    pub energy_history: Vec<f64>,
    pub rejected_steps: usize,
}

impl ACSolution {
    pub fn field(&self) -> &GridField {
        self.u.as_ref().expect("solution field present")
    }

    /// Writes `<stem>.bin` and the `<stem>.json` sidecar.
    pub fn write_checkpoint(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let f = std::fs::File::create(dir.join(format!("{stem}.bin")))?;
        self.field().write_binary(std::io::BufWriter::new(f))?;
        let sidecar = serde_json::json!({
            "s": self.params.s,
            "epsilon": self.params.epsilon,
            "iterations": self.iterations,
            "residual_norm": self.residual_norm,
            "energy": self.energy,
        });
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }
}

pub fn w(u: f64) -> f64 {
    0.25 * (1.0 - u * u).powi(2)
}

pub fn w_prime(u: f64) -> f64 {
    u * u * u - u
}

pub fn w_second(u: f64) -> f64 {
    3.0 * u * u - 1.0
}

fn is_indicator(u: &GridField) -> bool {
    u.values.iter().all(|&v| v == 1.0 || v == -1.0)
}

/// Warning text when some values leave [-1, 1].
pub fn clamp_warning(u: &GridField) -> Option<String> {
    let m = u.sup_norm();
    (m > 1.0).then(|| format!("field leaves [-1, 1] (sup |u| = {m}); values are clamped for the energy"))
}

/// Energy on M or relative to Ω.
///
/// The Sobolev part of a smooth field uses the spectral form (1/2) Σ λ^{s/2} |û|²
/// on M. Fields with values ±1 use the cell-averaged kernel, so their energy
/// is the s-perimeter of the set. Relative energies use the pair sums.
pub fn energy(u: &GridField, params: &ACParams, omega: Option<&SetIndicator>) -> Result<EnergyBreakdown> {
    params.validate()?;
    let u = if u.sup_norm() > 1.0 {
        u.map(|v| v.clamp(-1.0, 1.0))
    } else {
        u.clone()
    };
    let s = params.s;
    let wscale = params.well_scale();
    let kind = if is_indicator(&u) {
        DiscreteKernel::CellAveraged
    } else {
        DiscreteKernel::PointCorrected
    };
    match omega {
        None => {
            let sob = if is_indicator(&u) {
                0.25 * crate::fractional_ops::double_integral(&u, s, kind)?
            } else {
                0.5 * spectral_seminorm(&u, s)
            };
            let pot = wscale * u.map(w).integral();
            Ok(EnergyBreakdown::new(sob, pot))
        }
        Some(region) => {
            if region.domain() != &u.domain {
                return Err(Error::ShapeMismatch("region and field grids differ".into()));
            }
            let t = kernel_tables(&u.domain, s, kind)?;
            let inside = region.mask();
            let outside: Vec<bool> = inside.iter().map(|m| !m).collect();
            let sob = 0.25 * (pair_integral(&u, &inside, &inside, &t) + 2.0 * pair_integral(&u, &inside, &outside, &t));
            let pot = wscale
                * u.values
                    .iter()
                    .zip(&inside)
                    .filter(|(_, m)| **m)
                    .map(|(v, _)| w(*v))
                    .sum::<f64>()
                * u.domain.cell_volume();
            Ok(EnergyBreakdown::new(sob, pot))
        }
    }
}

/// (-Δ)^{s/2} u + ε^{-s} W'(u).
pub fn residual(u: &GridField, params: &ACParams) -> GridField {
    let lap = frac_laplacian_spectral(u, params.s);
    let k = params.well_scale();
    lap.zip_map(u, |a, v| a + k * w_prime(v)).expect("same grid")
}

/// Constraint kept by the flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    #[default]
    None,
    /// u(-x) = -u(x)
    Odd,
}

fn project(u: &GridField, sym: Symmetry) -> GridField {
    match sym {
        Symmetry::None => u.clone(),
        Symmetry::Odd => {
            let d = &u.domain;
            let mut out = u.values.clone();
            for (f, o) in out.iter_mut().enumerate() {
                let idx = d.multi_index(f);
                let neg: Vec<usize> = idx.iter().zip(d.shape()).map(|(i, n)| (n - i) % n).collect();
                *o = 0.5 * (u.values[f] - u.values[d.flat_index(&neg)]);
            }
            GridField {
                domain: d.clone(),
                values: out,
            }
        }
    }
}

fn total_energy_spectral(u: &GridField, params: &ACParams) -> f64 {
    0.5 * spectral_seminorm(u, params.s) + params.well_scale() * u.map(w).integral()
}

/// E(b) - E(a) in factored form, with a bound on its rounding error.
fn energy_change(a: &GridField, b: &GridField, a_hat: &[Complex64], b_hat: &[Complex64], symbol: &[f64], well: f64) -> (f64, f64) {
    let (mut sob, mut sob_abs) = (0.0, 0.0);
    for ((x, y), l) in a_hat.iter().zip(b_hat).zip(symbol) {
        let t = l * ((y - x) * (y + x).conj()).re;
        sob += t;
        sob_abs += l * (y.norm() + x.norm()) * (y + x).norm();
    }
    let (mut pot, mut pot_abs) = (0.0, 0.0);
    for (x, y) in a.values.iter().zip(&b.values) {
        let t = 0.25 * (x - y) * (x + y) * (2.0 - x * x - y * y);
        pot += t;
        pot_abs += 0.25 * (x.abs() + y.abs()) * ((x + y) * (2.0 - x * x - y * y)).abs();
    }
    let vol = a.domain.cell_volume();
    let floor = 8.0 * f64::EPSILON * (0.5 * sob_abs + well * vol * pot_abs);
    (0.5 * sob + well * pot * vol, floor)
}

/// Semi-implicit gradient flow
/// û ← (û - dt ε^{-s} FFT[W'(u)]) / (1 + dt λ^{s/2}),
/// halving dt whenever a step would raise the energy beyond rounding.
pub fn gradient_flow(u0: &GridField, params: &ACParams) -> Result<ACSolution> {
    gradient_flow_with(u0, params, Symmetry::None)
}

pub fn gradient_flow_with(u0: &GridField, params: &ACParams, symmetry: Symmetry) -> Result<ACSolution> {
    flow(u0, params, symmetry, None).map(|(sol, _)| sol)
}

/// Gradient flow that also returns the accepted iterate of least residual
/// among those satisfying `keep`.
pub(crate) fn gradient_flow_tracked(
    u0: &GridField,
    params: &ACParams,
    keep: &dyn Fn(&GridField) -> bool,
) -> Result<(ACSolution, Option<(GridField, f64)>)> {
    flow(u0, params, Symmetry::None, Some(keep))
}

type Tracked = Option<(GridField, f64)>;

/// Rounding can push values that approach a well onto or past ±1; the
/// exact iteration never leaves the open interval.
fn inside_wells(v: f64) -> f64 {
    const TOP: f64 = 1.0 - f64::EPSILON / 2.0;
    v.clamp(-TOP, TOP)
}

fn flow(u0: &GridField, params: &ACParams, symmetry: Symmetry, keep: Option<&dyn Fn(&GridField) -> bool>) -> Result<(ACSolution, Tracked)> {
    params.validate()?;
    if u0.sup_norm() > 1.0 + 1e-12 {
        return Err(invalid("u0", "initial field must satisfy |u| ≤ 1"));
    }
    let domain = u0.domain.clone();
    let symbol: Vec<f64> = domain
        .eigenvalues()
        .iter()
        .map(|&l| if l == 0.0 { 0.0 } else { l.powf(0.5 * params.s) })
        .collect();
    let k = params.well_scale();
    let mut u = project(u0, symmetry);
    let mut e = total_energy_spectral(&u, params);
    let mut history = vec![e];
    let mut dt = params.flow_dt;
    let mut rejected = 0;
    let mut streak = 0;
    let mut res = residual(&u, params).sup_norm();
    let mut iterations = 0;
    let mut best: Tracked = None;
    let mut track = |u: &GridField, res: f64| {
        if let Some(keep) = keep {
            if best.as_ref().is_none_or(|b| res < b.1) && keep(u) {
                best = Some((u.clone(), res));
            }
        }
    };
    track(&u, res);
    while iterations < params.max_iters && res > params.tol_residual {
        iterations += 1;
        let spec = u.to_spectral();
        let nl = u.map(w_prime).to_spectral();
        let coeffs: Vec<Complex64> = spec
            .coefficients
            .iter()
            .zip(&nl.coefficients)
            .zip(&symbol)
            .map(|((c, n), l)| (c - n * (dt * k)) / (1.0 + dt * l))
            .collect();
        let candidate = project(
            &SpectralField {
                domain: domain.clone(),
                coefficients: coeffs,
            }
            .to_physical(),
            symmetry,
        )
        .map(inside_wells);
        let cand_hat = candidate.to_spectral();
        let (de, floor) = energy_change(&u, &candidate, &spec.coefficients, &cand_hat.coefficients, &symbol, k);
        if de > floor {
            rejected += 1;
            dt *= 0.5;
            streak = 0;
            if dt < 1e-14 * params.flow_dt {
                break;
            }
            continue;
        }
        u = candidate;
        e += de;
        history.push(e);
        res = residual(&u, params).sup_norm();
        track(&u, res);
        streak += 1;
        if streak >= 20 && dt < params.flow_dt {
            dt = (dt * 2.0).min(params.flow_dt);
            streak = 0;
        }
    }
    let energy = energy(&u, params, None)?;
    let sol = ACSolution {
        u: Some(u),
        params: *params,
        residual_norm: res,
        energy,
        iterations,
        converged: res <= params.tol_residual,
        energy_history: history,
        rejected_steps: rejected,
    };
    Ok((sol, best))
}

/// Newton iterations with conjugate gradients on the Hessian; for stable
/// critical points (positive definite Hessian on the constrained subspace).
pub fn newton_polish(u: &GridField, params: &ACParams, symmetry: Symmetry, tol: f64, max_newton: usize) -> Result<GridField> {
    params.validate()?;
    let mut u = project(u, symmetry);
    for _ in 0..max_newton {
        let r = residual(&u, params);
        if r.sup_norm() <= tol {
            return Ok(u);
        }
        let wpp: Vec<f64> = u.values.iter().map(|&v| params.well_scale() * w_second(v)).collect();
        let apply = |x: &GridField| -> GridField {
            let lap = frac_laplacian_spectral(x, params.s);
            project(
                &GridField {
                    domain: x.domain.clone(),
                    values: lap.values.iter().zip(&x.values).zip(&wpp).map(|((a, b), c)| a + b * c).collect(),
                },
                symmetry,
            )
        };
        let rhs = project(&r, symmetry);
        let delta = conjugate_gradient(&apply, &rhs, 1e-3 * tol, 2000)?;
        u = u.zip_map(&delta, |a, b| a - b)?;
    }
    let r = residual(&u, params).sup_norm();
    if r > tol {
        return Err(Error::Numerical(format!("Newton stalled at residual {r:.3e}")));
    }
    Ok(u)
}

/// Newton iterations for a critical point of any index: each step solves
/// H δ = r by conjugate gradients on H² (H symmetric, possibly singular),
/// then backtracks until the residual norm drops.
pub fn newton_critical(u: &GridField, params: &ACParams, tol: f64, max_newton: usize) -> Result<GridField> {
    params.validate()?;
    let mut u = u.clone();
    for _ in 0..max_newton {
        let r = residual(&u, params);
        if r.sup_norm() <= tol {
            return Ok(u);
        }
        let wpp: Vec<f64> = u.values.iter().map(|&v| params.well_scale() * w_second(v)).collect();
        let h = |x: &GridField| -> GridField {
            let lap = frac_laplacian_spectral(x, params.s);
            GridField {
                domain: x.domain.clone(),
                values: lap.values.iter().zip(&x.values).zip(&wpp).map(|((a, b), c)| a + b * c).collect(),
            }
        };
        let rhs = h(&r);
        let normal = |x: &GridField| h(&h(x));
        let delta = conjugate_gradient(&normal, &rhs, 1e-3 * tol * params.well_scale(), 20_000)?;
        let r0 = r.l2_norm();
        let mut step = 1.0;
        let mut next = u.zip_map(&delta, |a, b| a - b)?;
        while residual(&next, params).l2_norm() >= r0 && step > 1e-6 {
            step *= 0.5;
            next = u.zip_map(&delta, |a, b| a - step * b)?;
        }
        u = next;
    }
    let r = residual(&u, params).sup_norm();
    if r > tol {
        return Err(Error::Numerical(format!("Newton stalled at residual {r:.3e}")));
    }
    Ok(u)
}

fn conjugate_gradient(apply: &dyn Fn(&GridField) -> GridField, b: &GridField, tol: f64, max_iter: usize) -> Result<GridField> {
    let mut x = b.domain.zeros();
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr: f64 = r.values.iter().map(|v| v * v).sum();
    let stop = tol * tol;
    for _ in 0..max_iter {
        if rr.sqrt() / (b.len() as f64).sqrt() <= tol || rr <= stop * 1e-6 {
            break;
        }
        let ap = apply(&p);
        let pap: f64 = p.values.iter().zip(&ap.values).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::Numerical("Hessian is not positive definite on the search space".into()));
        }
        let alpha = rr / pap;
        x.values.iter_mut().zip(&p.values).for_each(|(x, p)| *x += alpha * p);
        r.values.iter_mut().zip(&ap.values).for_each(|(r, a)| *r -= alpha * a);
        let rr_new: f64 = r.values.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        p.values.iter_mut().zip(&r.values).for_each(|(p, r)| *p = r + beta * *p);
    }
    Ok(x)
}

fn region_mask(u: &GridField, omega: Option<&SetIndicator>) -> Result<Vec<bool>> {
    match omega {
        None => Ok(vec![true; u.len()]),
        Some(r) => {
            if r.domain() != &u.domain {
                return Err(Error::ShapeMismatch("region and field grids differ".into()));
            }
            Ok(r.mask())
        }
    }
}

/// Hessian of the energy at u applied to ξ, restricted to Ω:
/// P_Ω [(-Δ)^{s/2} ξ + ε^{-s} W''(u) ξ].
pub fn second_variation_apply(u: &GridField, xi: &GridField, params: &ACParams, omega: Option<&SetIndicator>) -> Result<GridField> {
    let mask = region_mask(u, omega)?;
    if xi.values.iter().zip(&mask).any(|(v, m)| !m && *v != 0.0) {
        return Err(invalid("xi", "must vanish outside the region"));
    }
    Ok(hessian_masked(u, xi, params, &mask))
}

fn hessian_masked(u: &GridField, xi: &GridField, params: &ACParams, mask: &[bool]) -> GridField {
    let lap = frac_laplacian_spectral(xi, params.s);
    let k = params.well_scale();
    let values = lap
        .values
        .iter()
        .zip(&xi.values)
        .zip(&u.values)
        .zip(mask)
        .map(|(((a, x), v), m)| if *m { a + k * w_second(*v) * x } else { 0.0 })
        .collect();
    GridField {
        domain: u.domain.clone(),
        values,
    }
}

/// Q[ξ] = ⟨ξ, Hξ⟩.
pub fn second_variation(u: &GridField, xi: &GridField, params: &ACParams) -> f64 {
    0.5 * 2.0 * spectral_seminorm(xi, params.s)
        + params.well_scale() * xi.zip_map(u, |x, v| w_second(v) * x * x).expect("same grid").integral()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorseReport {
    pub index: usize,
    /// Lowest eigenvalues found, ascending (plain ℓ² inner product on grid values).
    pub eigenvalues: Vec<f64>,
    /// Set when k_max eigenvalues were all negative: `index` is a lower bound.
    pub lower_bound: bool,
    pub threshold: f64,
}

/// Number of negative eigenvalues of the Hessian on fields supported in Ω.
pub fn morse_index(u: &GridField, params: &ACParams, omega: Option<&SetIndicator>, k_max: usize) -> Result<MorseReport> {
    params.validate()?;
    if k_max == 0 {
        return Err(invalid("k_max", "must be at least 1"));
    }
    let mask = region_mask(u, omega)?;
    let support: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let threshold = -1e-8 * params.well_scale();
    let eig = if support.len() <= 768 {
        dense_lowest(u, params, &mask, &support, k_max + 1)
    } else {
        lanczos_lowest(u, params, &mask, k_max + 1, threshold)?
    };
    let negative = eig.iter().filter(|&&l| l < threshold).count();
    let lower_bound = negative >= k_max;
    Ok(MorseReport {
        index: negative.min(k_max),
        eigenvalues: eig,
        lower_bound,
        threshold,
    })
}

fn dense_lowest(u: &GridField, params: &ACParams, mask: &[bool], support: &[usize], count: usize) -> Vec<f64> {
    let m = support.len();
    let mut a = DMatrix::<f64>::zeros(m, m);
    for (col, &j) in support.iter().enumerate() {
        let mut e = u.domain.zeros();
        e.values[j] = 1.0;
        let he = hessian_masked(u, &e, params, mask);
        for (row, &i) in support.iter().enumerate() {
            a[(row, col)] = he.values[i];
        }
    }
    let a = 0.5 * (&a + a.transpose());
    let mut ev: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().cloned().collect();
    ev.sort_by(f64::total_cmp);
    ev.truncate(count);
    ev
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(v, q);
            v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Lowest eigenvalues one at a time: restarted Lanczos with full
/// reorthogonalization, deflating each converged eigenvector.
fn lanczos_lowest(u: &GridField, params: &ACParams, mask: &[bool], count: usize, threshold: f64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let apply = |v: &[f64]| -> Vec<f64> {
        let f = GridField {
            domain: u.domain.clone(),
            values: v.to_vec(),
        };
        hessian_masked(u, &f, params, mask).values
    };
    let scale = params.well_scale() * 2.0 + 1.0;
    let mut found: Vec<Vec<f64>> = Vec::new();
    let mut values = Vec::new();
    while values.len() < count {
        let mut start: Vec<f64> = mask.iter().map(|&m| if m { rng.random::<f64>() - 0.5 } else { 0.0 }).collect();
        let mut converged = None;
        for _restart in 0..40 {
            orthogonalize(&mut start, &found);
            normalize(&mut start);
            let (theta, vec, resid) = lanczos_run(&apply, &start, &found, 200, 4.0 * scale);
            start = vec;
            if resid <= 1e-9 * scale {
                converged = Some(theta);
                break;
            }
        }
        let theta = converged.ok_or_else(|| Error::Numerical("Lanczos did not converge".into()))?;
        values.push(theta);
        found.push(start.clone());
        if theta >= threshold {
            break;
        }
    }
    Ok(values)
}

/// One Lanczos cycle on P A P + σ (I - P), P the projector off `deflate`;
/// returns the lowest Ritz pair and its residual norm.
fn lanczos_run(apply: &dyn Fn(&[f64]) -> Vec<f64>, start: &[f64], deflate: &[Vec<f64>], steps: usize, shift: f64) -> (f64, Vec<f64>, f64) {
    let op = |q: &[f64]| -> Vec<f64> {
        let mut pq = q.to_vec();
        orthogonalize(&mut pq, deflate);
        let mut w = apply(&pq);
        orthogonalize(&mut w, deflate);
        w.iter_mut().zip(q.iter().zip(&pq)).for_each(|(w, (q, p))| *w += shift * (q - p));
        w
    };
    let mut basis: Vec<Vec<f64>> = vec![start.to_vec()];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    for j in 0..steps {
        let mut w = op(&basis[j]);
        let a = dot(&w, &basis[j]);
        alpha.push(a);
        orthogonalize(&mut w, &basis);
        let b = normalize(&mut w);
        if b < 1e-12 || j + 1 == steps {
            break;
        }
        beta.push(b);
        basis.push(w);
    }
    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let (imin, &theta) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let y = eig.eigenvectors.column(imin);
    let mut v = vec![0.0; start.len()];
    for (i, q) in basis.iter().take(m).enumerate() {
        v.iter_mut().zip(q).for_each(|(x, qq)| *x += y[i] * qq);
    }
    orthogonalize(&mut v, deflate);
    normalize(&mut v);
    let mut r = op(&v);
    r.iter_mut().zip(&v).for_each(|(a, b)| *a -= theta * b);
    (theta, v, dot(&r, &r).sqrt())
}

/// Closed-form count #{k : λ_k^{s/2} - ε^{-s} < threshold} for u ≡ 0 on Ω = M.
pub fn zero_state_index(domain: &Domain, params: &ACParams) -> usize {
    let th = -1e-8 * params.well_scale();
    domain
        .eigenvalues()
        .iter()
        .filter(|&&l| {
            let m = if l == 0.0 { 0.0 } else { l.powf(0.5 * params.s) };
            m - params.well_scale() < th
        })
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlmostStabilityReport {
    pub lambda: f64,
    /// min over the dictionary of Q[ξ]/‖ξ‖₁² + Λ, per region.
    pub margins: Vec<f64>,
    pub passing_region: Option<usize>,
}

/// Checks Q[ξ] ≥ -Λ ‖ξ‖₁² on a bump dictionary in each region, with
/// Λ = m · max_{i≠j} sup K_s over region pairs.
pub fn almost_stability_probe(u: &GridField, params: &ACParams, regions: &[SetIndicator], m: usize) -> Result<AlmostStabilityReport> {
    params.validate()?;
    if regions.len() < 2 {
        return Err(invalid("regions", "need at least two regions"));
    }
    let domain = &u.domain;
    let ewald = EwaldKernel::new(&domain.torus, params.s);
    let masks: Vec<Vec<bool>> = regions
        .iter()
        .map(|r| {
            if r.domain() != domain {
                Err(Error::ShapeMismatch("region grid differs".into()))
            } else {
                Ok(r.mask())
            }
        })
        .collect::<Result<_>>()?;
    for i in 0..masks.len() {
        for j in i + 1..masks.len() {
            if masks[i].iter().zip(&masks[j]).any(|(a, b)| *a && *b) {
                return Err(invalid("regions", "must be pairwise disjoint"));
            }
        }
    }
    // sup K over cross pairs is attained at the smallest separation
    let mut sup_k: f64 = 0.0;
    for i in 0..masks.len() {
        for j in 0..masks.len() {
            if i == j {
                continue;
            }
            let mut best: Option<(f64, Vec<f64>)> = None;
            for a in (0..domain.len()).filter(|&a| masks[i][a]) {
                for b in (0..domain.len()).filter(|&b| masks[j][b]) {
                    let d = domain.torus.displacement(&domain.point(a), &domain.point(b));
                    let r: f64 = d.iter().map(|v| v * v).sum();
                    if best.as_ref().is_none_or(|(br, _)| r < *br) {
                        best = Some((r, d));
                    }
                }
            }
            let (r, d) = best.ok_or_else(|| invalid("regions", "empty region"))?;
            if r == 0.0 {
                return Err(invalid("regions", "regions must be separated"));
            }
            sup_k = sup_k.max(ewald.eval(&d));
        }
    }
    let lambda = m as f64 * sup_k;
    let mut margins = Vec::with_capacity(regions.len());
    for mask in &masks {
        let dict = bump_dictionary(domain, mask);
        if dict.is_empty() {
            return Err(invalid("regions", "region too small for the bump dictionary"));
        }
        // candidates: each bump and the lowest generalized eigenvectors in their span
        let k = dict.len();
        let hb: Vec<GridField> = dict.iter().map(|b| hessian_masked(u, b, params, mask)).collect();
        let mut q = DMatrix::<f64>::zeros(k, k);
        let mut g = DMatrix::<f64>::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                q[(a, b)] = dict[a].dot(&hb[b]);
                g[(a, b)] = dict[a].dot(&dict[b]);
            }
        }
        let q = 0.5 * (&q + q.transpose());
        let mut candidates: Vec<Vec<f64>> = (0..k).map(|a| (0..k).map(|b| if a == b { 1.0 } else { 0.0 }).collect()).collect();
        if let Some(chol) = g.clone().cholesky() {
            let l = chol.l();
            let linv = l.clone().try_inverse().expect("invertible Cholesky factor");
            let c = &linv * &q * linv.transpose();
            let eig = SymmetricEigen::new(0.5 * (&c + c.transpose()));
            for i in 0..k {
                let y = eig.eigenvectors.column(i);
                let x = linv.transpose() * y;
                candidates.push(x.iter().cloned().collect());
            }
        }
        let mut margin = f64::INFINITY;
        for c in candidates {
            let mut xi = domain.zeros();
            for (coef, b) in c.iter().zip(&dict) {
                xi.values.iter_mut().zip(&b.values).for_each(|(x, v)| *x += coef * v);
            }
            let l1 = xi.l1_norm();
            if l1 == 0.0 {
                continue;
            }
            let qv = xi.dot(&hessian_masked(u, &xi, params, mask));
            margin = margin.min(qv / (l1 * l1) + lambda);
        }
        margins.push(margin);
    }
    let tol = 1e-9 * params.well_scale();
    let passing_region = margins.iter().position(|&m| m >= -tol);
    Ok(AlmostStabilityReport {
        lambda,
        margins,
        passing_region,
    })
}

/// Smooth bumps cos²-shaped, centred at region points on a coarse lattice,
/// at three widths, kept only when their support lies inside the region.
fn bump_dictionary(domain: &Domain, mask: &[bool]) -> Vec<GridField> {
    let h = domain.h();
    let points: Vec<usize> = (0..domain.len()).filter(|&i| mask[i]).collect();
    let mut out = Vec::new();
    for widths in [4.0, 8.0, 16.0] {
        let r = widths * h;
        let stride = (widths as usize / 2).max(1);
        for &c in points.iter().step_by(stride.pow(domain.dim() as u32)) {
            let center = domain.point(c);
            let mut ok = true;
            let values: Vec<f64> = (0..domain.len())
                .map(|f| {
                    let d = domain.torus.geodesic_distance(&domain.point(f), &center);
                    if d < r {
                        if !mask[f] {
                            ok = false;
                        }
                        (0.5 * std::f64::consts::PI * d / r).cos().powi(2)
                    } else {
                        0.0
                    }
                })
                .collect();
            if ok {
                out.push(GridField {
                    domain: domain.clone(),
                    values,
                });
            }
            if out.len() >= 60 {
                return out;
            }
        }
    }
    out
}

/// Odd layer profile on a periodic proxy of the line.
#[derive(Debug, Clone)]
pub struct LayerSolution {
    /// Full periodic field on [0, L) with transitions at 0 and L/2.
    pub field: GridField,
    /// (x, v(x)) on the half period [-L/4, L/4].
    pub half_period: Vec<(f64, f64)>,
    pub residual_sup: f64,
    pub s: f64,
}

impl LayerSolution {
    /// sup |v(x) + v(-x)| over the grid.
    pub fn oddness_defect(&self) -> f64 {
        let d = &self.field.domain;
        let n = d.shape()[0];
        (0..n)
            .map(|i| (self.field.values[i] + self.field.values[(n - i) % n]).abs())
            .fold(0.0, f64::max)
    }

    /// True when no adjacent pair on the half period decreases.
    pub fn is_monotone(&self) -> bool {
        self.half_period.windows(2).all(|w| w[1].1 >= w[0].1)
    }
}

/// Solves (-Δ)^{s/2} v + W'(v) = 0 at ε = 1 on a circle of length
/// 2·`domain_half_length` with two antipodal transitions.
pub fn layer_1d(s: f64, domain_half_length: f64, grid: usize) -> Result<LayerSolution> {
    if domain_half_length < 10.0 {
        return Err(invalid("domain_half_length", "need at least 10 (20 units in total)"));
    }
    let l = 2.0 * domain_half_length;
    let domain = Domain::new(FlatTorus::new(vec![l])?, GridSpec::new(vec![grid])?)?;
    let mut params = ACParams::new(s, 1.0)?;
    params.tol_residual = 1e-4;
    params.max_iters = 50_000;
    let u0 = domain.sample(|x| ((l / (2.0 * std::f64::consts::PI)) * (2.0 * std::f64::consts::PI * x[0] / l).sin()).tanh());
    let flow = gradient_flow_with(&u0, &params, Symmetry::Odd)?;
    let v = newton_polish(flow.field(), &params, Symmetry::Odd, 1e-10, 30)?;
    let residual_sup = residual(&v, &params).sup_norm();
    let n = grid;
    let h = l / n as f64;
    let quarter = n / 4;
    let half_period = (0..=2 * quarter)
        .map(|i| {
            let j = (i + n - quarter) % n;
            ((i as f64 - quarter as f64) * h, v.values[j])
        })
        .collect();
    Ok(LayerSolution {
        field: v,
        half_period,
        residual_sup,
        s,
    })
}

/// ∫_{B_{R/2}(center)} |∇u| with the spectral gradient.
pub fn bv_probe(u: &GridField, center: &[f64], radius: f64) -> f64 {
    let grad = u.gradient();
    let d = &u.domain;
    (0..d.len())
        .filter(|&f| d.torus.geodesic_distance(&d.point(f), center) < 0.5 * radius)
        .map(|f| grad.iter().map(|g| g.values[f].powi(2)).sum::<f64>().sqrt())
        .sum::<f64>()
        * d.cell_volume()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    /// R^{-n} ∫_{B_R} |1 - u|
    pub density_plus: f64,
    /// R^{-n} ∫_{B_R} |1 + u|
    pub density_minus: f64,
    /// {u ≥ -9/10} meets B_{R/2}
    pub plus_level_set_meets_half_ball: bool,
    /// {-u ≥ -9/10} meets B_{R/2}
    pub minus_level_set_meets_half_ball: bool,
}

pub fn density_probe(u: &GridField, center: &[f64], radius: f64) -> DensityReport {
    let d = &u.domain;
    let n = d.dim() as i32;
    let w = d.cell_volume();
    let (mut dp, mut dm) = (0.0, 0.0);
    let (mut mp, mut mm) = (false, false);
    for f in 0..d.len() {
        let r = d.torus.geodesic_distance(&d.point(f), center);
        let v = u.values[f];
        if r < radius {
            dp += (1.0 - v).abs() * w;
            dm += (1.0 + v).abs() * w;
        }
        if r < 0.5 * radius {
            mp |= v >= -0.9;
            mm |= -v >= -0.9;
        }
    }
    let scale = radius.powi(-n);
    DensityReport {
        density_plus: dp * scale,
        density_minus: dm * scale,
        plus_level_set_meets_half_ball: mp,
        minus_level_set_meets_half_ball: mm,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    pub stderr: f64,
}

/// Least-squares slope of log E^Pot against log ε.
pub fn potential_decay_probe(family: &[(f64, EnergyBreakdown)]) -> Result<DecayFit> {
    if family.len() < 2 {
        return Err(invalid("family", "need at least two solutions"));
    }
    if family.iter().any(|(e, b)| !(*e > 0.0) || !(b.potential > 0.0)) {
        return Err(invalid("family", "epsilon and potential energy must be positive"));
    }
    let pts: Vec<(f64, f64)> = family.iter().map(|(e, b)| (e.ln(), b.potential.ln())).collect();
    Ok(linear_fit(&pts))
}

pub(crate) fn linear_fit(pts: &[(f64, f64)]) -> DecayFit {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if pts.len() > 2 {
        let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    DecayFit { slope, stderr }
}

/// Smoothed ±1 stripe {a < x_axis < b} with interface width ε.
pub fn smoothed_stripe(domain: &Domain, axis: usize, a: f64, b: f64, epsilon: f64) -> GridField {
    let l = domain.torus.side_lengths()[axis];
    let width = (b - a).rem_euclid(l);
    domain.sample(|x| {
        let from_a = (x[axis] - a).rem_euclid(l);
        if from_a < width {
            (from_a.min(width - from_a) / epsilon).tanh()
        } else {
            -((from_a - width).min(l - from_a) / epsilon).tanh()
        }
    })
}
