//! Flat tori R^n / (L_1 Z × … × L_n Z), uniform grids, the Laplace eigenbasis
//! and the physical <-> spectral transform pair.
//!
//! Grid point `j` along axis `i` sits at `x = j * L_i / N_i`; every point
//! carries the midpoint weight `vol / ∏N_i`. Spectral coefficients are the
//! inner products `⟨u, φ_k⟩` against the orthonormal eigenfunctions
//! `φ_k(x) = exp(2πi k·x/L) / √vol`, stored in FFT order.

use crate::error::{invalid, Error, Result};
use crate::fft::fft_nd;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{BufRead, Write};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatTorus {
    side_lengths: Vec<f64>,
}

impl FlatTorus {
    pub fn new(side_lengths: Vec<f64>) -> Result<Self> {
        if side_lengths.is_empty() || side_lengths.len() > 3 {
            return Err(Error::InvalidTorus(format!(
                "dimension must be 1, 2 or 3 (got {})",
                side_lengths.len()
            )));
        }
        if let Some(l) = side_lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidTorus(format!("side length {l} is not positive")));
        }
        Ok(Self { side_lengths })
    }

    /// The cube torus with `dim` equal sides.
    pub fn cube(dim: usize, side: f64) -> Result<Self> {
        Self::new(vec![side; dim])
    }

    pub fn dim(&self) -> usize {
        self.side_lengths.len()
    }

    pub fn side_lengths(&self) -> &[f64] {
        &self.side_lengths
    }

    pub fn volume(&self) -> f64 {
        self.side_lengths.iter().product()
    }

    pub fn min_side(&self) -> f64 {
        self.side_lengths.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Same torus with every side multiplied by `r`.
    pub fn scaled(&self, r: f64) -> Result<Self> {
        Self::new(self.side_lengths.iter().map(|l| l * r).collect())
    }

    /// Canonical representative of a point in [0, L_i).
    pub fn reduce(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.side_lengths)
            .map(|(&xi, &l)| {
                let r = xi.rem_euclid(l);
                if r >= l {
                    0.0
                } else {
                    r
                }
            })
            .collect()
    }

    /// Minimum-image displacement `y - x`, each component in [-L_i/2, L_i/2].
    pub fn displacement(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(y)
            .zip(&self.side_lengths)
            .map(|((&a, &b), &l)| {
                let d = (b - a).rem_euclid(l);
                if d > 0.5 * l {
                    d - l
                } else {
                    d
                }
            })
            .collect()
    }

    /// Min-image geodesic distance.
    pub fn geodesic_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        self.displacement(x, y).iter().map(|d| d * d).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    points_per_axis: Vec<usize>,
}

impl GridSpec {
    pub fn new(points_per_axis: Vec<usize>) -> Result<Self> {
        if points_per_axis.is_empty() {
            return Err(Error::InvalidGrid("no axes".into()));
        }
        for &n in &points_per_axis {
            if n < 2 || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!(
                    "points per axis must be even and >= 2 (got {n})"
                )));
            }
        }
        let total = points_per_axis
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n));
        if total.is_none() {
            return Err(Error::InvalidGrid("point count overflows usize".into()));
        }
        Ok(Self { points_per_axis })
    }

    pub fn uniform(dim: usize, n: usize) -> Result<Self> {
        Self::new(vec![n; dim])
    }

    pub fn points_per_axis(&self) -> &[usize] {
        &self.points_per_axis
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// A torus together with its sampling grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub torus: FlatTorus,
    pub grid: GridSpec,
}

impl Domain {
    pub fn new(torus: FlatTorus, grid: GridSpec) -> Result<Self> {
        if torus.dim() != grid.points_per_axis().len() {
            return Err(Error::ShapeMismatch(format!(
                "torus has dimension {} but grid has {} axes",
                torus.dim(),
                grid.points_per_axis().len()
            )));
        }
        Ok(Self { torus, grid })
    }

    /// Cube torus of side `side` with `n` points per axis.
    pub fn cube(dim: usize, side: f64, n: usize) -> Result<Self> {
        Self::new(FlatTorus::cube(dim, side)?, GridSpec::uniform(dim, n)?)
    }

    pub fn dim(&self) -> usize {
        self.torus.dim()
    }

    pub fn shape(&self) -> &[usize] {
        self.grid.points_per_axis()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.torus.side_lengths()[axis] / self.shape()[axis] as f64
    }

    pub fn spacings(&self) -> Vec<f64> {
        (0..self.dim()).map(|a| self.spacing(a)).collect()
    }

    /// Largest grid spacing.
    pub fn h(&self) -> f64 {
        self.spacings().into_iter().fold(0.0, f64::max)
    }

    /// Quadrature weight per grid point.
    pub fn cell_volume(&self) -> f64 {
        self.torus.volume() / self.len() as f64
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let shape = self.shape();
        let mut idx = vec![0; shape.len()];
        for a in (0..shape.len()).rev() {
            idx[a] = flat % shape[a];
            flat /= shape[a];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(self.shape())
            .fold(0, |acc, (&i, &n)| acc * n + (i % n))
    }

    /// Physical coordinates of a grid point.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(a, &j)| j as f64 * self.spacing(a))
            .collect()
    }

    /// Signed integer wave vector of a flat FFT index, components in [-N/2, N/2).
    pub fn wave_vector(&self, flat: usize) -> Vec<i64> {
        self.multi_index(flat)
            .iter()
            .zip(self.shape())
            .map(|(&j, &n)| signed_mode(j, n))
            .collect()
    }

    /// λ_k = Σ (2π k_i / L_i)^2 for every flat index, in FFT order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let per_axis: Vec<Vec<f64>> = (0..self.dim())
            .map(|a| {
                let n = self.shape()[a];
                let l = self.torus.side_lengths()[a];
                (0..n)
                    .map(|j| (2.0 * PI * signed_mode(j, n) as f64 / l).powi(2))
                    .collect()
            })
            .collect();
        (0..self.len())
            .map(|f| {
                self.multi_index(f)
                    .iter()
                    .enumerate()
                    .map(|(a, &j)| per_axis[a][j])
                    .sum()
            })
            .collect()
    }

    /// Angular wave number 2πk_i/L_i along `axis` for every flat index; the
    /// Nyquist mode is set to zero so odd-order derivatives stay real.
    pub fn derivative_symbols(&self, axis: usize) -> Vec<f64> {
        let n = self.shape()[axis];
        let l = self.torus.side_lengths()[axis];
        (0..self.len())
            .map(|f| {
                let j = self.multi_index(f)[axis];
                let k = signed_mode(j, n);
                if k == -(n as i64) / 2 {
                    0.0
                } else {
                    2.0 * PI * k as f64 / l
                }
            })
            .collect()
    }

    pub fn zeros(&self) -> GridField {
        GridField {
            domain: self.clone(),
            values: vec![0.0; self.len()],
        }
    }

    pub fn constant(&self, c: f64) -> GridField {
        GridField {
            domain: self.clone(),
            values: vec![c; self.len()],
        }
    }

    /// Samples `f` at every grid point.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> GridField {
        let values = (0..self.len()).map(|i| f(&self.point(i))).collect();
        GridField {
            domain: self.clone(),
            values,
        }
    }

    pub fn field(&self, values: Vec<f64>) -> Result<GridField> {
        GridField::new(self.clone(), values)
    }
}

pub(crate) fn signed_mode(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// One Laplace–Beltrami eigenpair label: the wave vector and its eigenvalue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveVector {
    pub k: Vec<i64>,
    pub eigenvalue: f64,
}

/// All wave vectors representable on the grid, in FFT order.
pub fn eigenpairs(torus: &FlatTorus, grid: &GridSpec) -> Result<Vec<WaveVector>> {
    let domain = Domain::new(torus.clone(), grid.clone())?;
    let lambdas = domain.eigenvalues();
    Ok((0..domain.len())
        .map(|f| WaveVector {
            k: domain.wave_vector(f),
            eigenvalue: lambdas[f],
        })
        .collect())
}

pub fn geodesic_distance(torus: &FlatTorus, x: &[f64], y: &[f64]) -> f64 {
    torus.geodesic_distance(x, y)
}

/// A real scalar field sampled on the grid, row-major over axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub domain: Domain,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(domain: Domain, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values, got {}",
                domain.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("values", "all values must be finite"));
        }
        Ok(Self { domain, values })
    }

    pub fn torus(&self) -> &FlatTorus {
        &self.domain.torus
    }

    pub fn grid(&self) -> &GridSpec {
        &self.domain.grid
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField {
            domain: self.domain.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> Result<GridField> {
        self.check_same(other)?;
        Ok(GridField {
            domain: self.domain.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub(crate) fn check_same(&self, other: &GridField) -> Result<()> {
        if self.domain != other.domain {
            return Err(Error::ShapeMismatch("fields live on different domains".into()));
        }
        Ok(())
    }

    /// ∫ u dV by the midpoint rule.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.domain.cell_volume()
    }

    /// L² inner product.
    pub fn dot(&self, other: &GridField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.domain.cell_volume()
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.domain.cell_volume()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    /// Translation by an integer number of grid cells along each axis.
    pub fn roll(&self, shift: &[i64]) -> GridField {
        let shape = self.domain.shape();
        let mut out = vec![0.0; self.len()];
        for (f, &v) in self.values.iter().enumerate() {
            let idx: Vec<usize> = self
                .domain
                .multi_index(f)
                .iter()
                .zip(shape)
                .zip(shift)
                .map(|((&j, &n), &s)| (j as i64 + s).rem_euclid(n as i64) as usize)
                .collect();
            out[self.domain.flat_index(&idx)] = v;
        }
        GridField {
            domain: self.domain.clone(),
            values: out,
        }
    }

    pub fn to_spectral(&self) -> SpectralField {
        let mut data: Vec<Complex64> = self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(&mut data, self.domain.shape(), false);
        let scale = self.domain.torus.volume().sqrt() / self.len() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
        SpectralField {
            domain: self.domain.clone(),
            coefficients: data,
        }
    }

    /// Multiplies every spectral coefficient by a real symbol and transforms back.
    pub fn apply_symbol(&self, symbol: &[f64]) -> GridField {
        assert_eq!(symbol.len(), self.len());
        let mut spec = self.to_spectral();
        spec.coefficients
            .iter_mut()
            .zip(symbol)
            .for_each(|(c, &m)| *c *= m);
        spec.to_physical()
    }

    /// Spectral partial derivative along `axis`.
    pub fn derivative(&self, axis: usize) -> GridField {
        let symbols = self.domain.derivative_symbols(axis);
        let mut spec = self.to_spectral();
        spec.coefficients
            .iter_mut()
            .zip(&symbols)
            .for_each(|(c, &k)| *c *= Complex64::new(0.0, k));
        spec.to_physical()
    }

    /// Spectral second derivative along `axis`, Nyquist mode included.
    pub fn derivative_second(&self, axis: usize) -> GridField {
        let n = self.domain.shape()[axis];
        let l = self.domain.torus.side_lengths()[axis];
        let symbol: Vec<f64> = (0..self.len())
            .map(|f| {
                let k = signed_mode(self.domain.multi_index(f)[axis], n) as f64;
                -(2.0 * PI * k / l).powi(2)
            })
            .collect();
        self.apply_symbol(&symbol)
    }

    /// Spectral gradient, one field per axis.
    pub fn gradient(&self) -> Vec<GridField> {
        (0..self.domain.dim()).map(|a| self.derivative(a)).collect()
    }

    /// Writes the JSON header line followed by little-endian f64 values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let header = BinaryHeader {
            dim: self.domain.dim(),
            side_lengths: self.domain.torus.side_lengths().to_vec(),
            points_per_axis: self.domain.shape().to_vec(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: BufRead>(mut r: R) -> Result<GridField> {
        let mut line = Vec::new();
        r.read_until(b'\n', &mut line)?;
        let header: BinaryHeader = serde_json::from_slice(&line)?;
        if header.dim != header.side_lengths.len() || header.dim != header.points_per_axis.len() {
            return Err(Error::ShapeMismatch("header dimension is inconsistent".into()));
        }
        let domain = Domain::new(
            FlatTorus::new(header.side_lengths)?,
            GridSpec::new(header.points_per_axis)?,
        )?;
        let mut values = Vec::with_capacity(domain.len());
        let mut buf = [0u8; 8];
        for _ in 0..domain.len() {
            r.read_exact(&mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        GridField::new(domain, values)
    }

    /// CSV with one row per grid point: index tuple then value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let cols: Vec<String> = (0..self.domain.dim()).map(|a| format!("i{a}")).collect();
        writeln!(w, "{},value", cols.join(","))?;
        for (f, v) in self.values.iter().enumerate() {
            let idx: Vec<String> = self
                .domain
                .multi_index(f)
                .iter()
                .map(|i| i.to_string())
                .collect();
            writeln!(w, "{},{}", idx.join(","), fmt_f64(*v))?;
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct BinaryHeader {
    dim: usize,
    side_lengths: Vec<f64>,
    points_per_axis: Vec<usize>,
}

/// Seventeen significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Fourier coefficients `⟨u, φ_k⟩` in FFT order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub domain: Domain,
    pub coefficients: Vec<Complex64>,
}

impl SpectralField {
    pub fn to_physical(&self) -> GridField {
        let mut data = self.coefficients.clone();
        fft_nd(&mut data, self.domain.shape(), true);
        let scale = 1.0 / self.domain.torus.volume().sqrt();
        GridField {
            domain: self.domain.clone(),
            values: data.iter().map(|c| c.re * scale).collect(),
        }
    }

    /// Coefficient of the wave vector `k` (components in [-N/2, N/2)).
    pub fn coefficient(&self, k: &[i64]) -> Complex64 {
        let idx: Vec<usize> = k
            .iter()
            .zip(self.domain.shape())
            .map(|(&ki, &n)| ki.rem_euclid(n as i64) as usize)
            .collect();
        self.coefficients[self.domain.flat_index(&idx)]
    }

    /// Σ |û_k|², equal to ‖u‖²_{L²} by Parseval.
    pub fn energy(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Largest violation of `û(-k) = conj(û(k))`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for f in 0..self.domain.len() {
            let k = self.domain.wave_vector(f);
            let neg: Vec<i64> = k.iter().map(|x| -x).collect();
            let d = (self.coefficients[f] - self.coefficient(&neg).conj()).norm();
            worst = worst.max(d);
        }
        worst
    }
}

/// Indicator of the open min-image ball `B_R(center)`.
pub fn ball_mask(
    torus: &FlatTorus,
    grid: &GridSpec,
    center: &[f64],
    radius: f64,
) -> Result<crate::perimeter::SetIndicator> {
    let domain = Domain::new(torus.clone(), grid.clone())?;
    crate::perimeter::SetIndicator::ball(&domain, center, radius)
}
