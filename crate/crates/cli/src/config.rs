use fraclab::allen_cahn::{ACParams, Symmetry};
use fraclab::minmax::EnergyMode;
use fraclab::perimeter::{PerimeterMethod, SetIndicator, Shape};
use fraclab::{Domain, FlatTorus, GridField, GridSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

pub const COMMANDS: [&str; 13] = [
    "kernel-check",
    "seminorm",
    "extension-check",
    "monotonicity",
    "perimeter",
    "nmc",
    "layer1d",
    "solve-ac",
    "morse-index",
    "sweepout",
    "scaling",
    "eps-limit",
    "bv-density-probe",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusConfig {
    pub dim: usize,
    pub side_lengths: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub points_per_axis: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcConfig {
    pub epsilon: f64,
    pub flow_dt: Option<f64>,
    pub tol_residual: Option<f64>,
    pub max_iters: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub torus: TorusConfig,
    pub grid: GridConfig,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub ac: Option<AcConfig>,
    #[serde(default)]
    pub experiment: Option<serde_json::Value>,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
}

/// Initial or test fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant { value: f64 },
    /// amplitude · cos(2π k·x / L)
    Mode { k: Vec<i64>, amplitude: f64 },
    /// ±1 stripe a < x_axis < b, smoothed with tanh at `width` when given.
    Stripe { axis: usize, a: f64, b: f64, width: Option<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    /// Sum of six seeded random cosines, clamped to [-1, 1].
    Random { amplitude: f64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    SharpInterface,
    Ac,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelCheckExp {
    #[serde(default = "default_sep_lo")]
    pub separation_min: f64,
    #[serde(default = "default_sep_hi")]
    pub separation_max: f64,
    #[serde(default = "default_ten")]
    pub separations: usize,
    #[serde(default = "default_twenty")]
    pub heat_times: usize,
}

fn default_sep_lo() -> f64 {
    0.05
}
fn default_sep_hi() -> f64 {
    0.5
}
fn default_ten() -> usize {
    10
}
fn default_twenty() -> usize {
    20
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldExp {
    pub field: FieldSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonotonicityExp {
    pub initial: FieldSpec,
    pub center: Vec<f64>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    #[serde(default = "default_radii")]
    pub radii: usize,
}

fn default_radii() -> usize {
    12
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerimeterExp {
    pub set: Shape,
    #[serde(default)]
    pub method: PerimeterMethod,
    #[serde(default)]
    pub s_list: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NmcExp {
    pub set: Shape,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerExp {
    pub half_length: f64,
    pub grid: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveExp {
    pub initial: FieldSpec,
    #[serde(default)]
    pub symmetry: Symmetry,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorseExp {
    pub field: FieldSpec,
    /// Run the gradient flow from `field` first.
    #[serde(default)]
    pub solve: bool,
    #[serde(default = "default_kmax")]
    pub k_max: usize,
    pub region: Option<Shape>,
}

fn default_kmax() -> usize {
    16
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepoutExp {
    pub p: usize,
    #[serde(default = "default_samples")]
    pub sphere_samples: usize,
    #[serde(default = "default_mode")]
    pub mode: ModeName,
    #[serde(default)]
    pub cover_seed: u64,
}

fn default_samples() -> usize {
    200
}
fn default_mode() -> ModeName {
    ModeName::SharpInterface
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingExp {
    pub p_values: Vec<usize>,
    #[serde(default = "default_samples")]
    pub sphere_samples: usize,
    #[serde(default = "default_mode")]
    pub mode: ModeName,
    #[serde(default)]
    pub cover_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsLimitExp {
    #[serde(default = "default_p")]
    pub p: usize,
    pub eps_list: Vec<f64>,
    #[serde(default = "default_samples")]
    pub sphere_samples: usize,
}

fn default_p() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeExp {
    pub field: FieldSpec,
    #[serde(default)]
    pub solve: bool,
    pub center: Vec<f64>,
    pub radius: f64,
}

impl RunConfig {
    pub fn domain(&self) -> Result<Domain, String> {
        if self.torus.side_lengths.len() != self.torus.dim {
            return Err(format!("torus.dim = {} but {} side lengths", self.torus.dim, self.torus.side_lengths.len()));
        }
        if self.grid.points_per_axis.len() != self.torus.dim {
            return Err("grid.points_per_axis must have one entry per axis".into());
        }
        let torus = FlatTorus::new(self.torus.side_lengths.clone()).map_err(|e| e.to_string())?;
        let grid = GridSpec::new(self.grid.points_per_axis.clone()).map_err(|e| e.to_string())?;
        Domain::new(torus, grid).map_err(|e| e.to_string())
    }

    pub fn ac_params(&self) -> Result<ACParams, String> {
        let ac = self.ac.as_ref().ok_or("this command needs an `ac` section")?;
        let mut p = ACParams::new(self.kernel.s, ac.epsilon).map_err(|e| e.to_string())?;
        if let Some(v) = ac.flow_dt {
            p.flow_dt = v;
        }
        if let Some(v) = ac.tol_residual {
            p.tol_residual = v;
        }
        if let Some(v) = ac.max_iters {
            p.max_iters = v;
        }
        p.validate().map_err(|e| e.to_string())?;
        Ok(p)
    }

    pub fn experiment<T: DeserializeOwned>(&self) -> Result<T, String> {
        let v = self.experiment.clone().unwrap_or(serde_json::Value::Object(Default::default()));
        serde_json::from_value(v).map_err(|e| format!("experiment: {e}"))
    }

    pub fn energy_mode(&self, mode: ModeName) -> Result<EnergyMode, String> {
        Ok(match mode {
            ModeName::SharpInterface => EnergyMode::SharpInterface,
            ModeName::Ac => EnergyMode::Ac {
                epsilon: self.ac.as_ref().ok_or("ac mode needs an `ac` section")?.epsilon,
            },
        })
    }
}

pub fn build_field(domain: &Domain, spec: &FieldSpec, seed: u64) -> Result<GridField, String> {
    let n = domain.dim();
    let sides = domain.torus.side_lengths().to_vec();
    let tau = 2.0 * std::f64::consts::PI;
    Ok(match spec {
        FieldSpec::Constant { value } => domain.constant(*value),
        FieldSpec::Mode { k, amplitude } => {
            if k.len() != n {
                return Err("mode.k must have one entry per axis".into());
            }
            domain.sample(|x| amplitude * (0..n).map(|a| tau * k[a] as f64 * x[a] / sides[a]).sum::<f64>().cos())
        }
        FieldSpec::Stripe { axis, a, b, width } => {
            if *axis >= n {
                return Err("stripe axis out of range".into());
            }
            match width {
                Some(w) if *w > 0.0 => fraclab::allen_cahn::smoothed_stripe(domain, *axis, *a, *b, *w),
                _ => SetIndicator::stripe(domain, *axis, *a, *b).map_err(|e| e.to_string())?.field,
            }
        }
        FieldSpec::Ball { center, radius } => {
            SetIndicator::ball(domain, center, *radius).map_err(|e| e.to_string())?.field
        }
        FieldSpec::Random { amplitude } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let modes: Vec<(Vec<f64>, f64, f64)> = (0..6)
                .map(|_| {
                    let k: Vec<f64> = (0..n).map(|_| rng.random_range(-3i32..=3) as f64).collect();
                    (k, rng.random_range(-1.0..1.0), rng.random_range(0.0..tau))
                })
                .collect();
            domain.sample(|x| {
                let v: f64 = modes
                    .iter()
                    .map(|(k, a, ph)| a * ((0..n).map(|i| tau * k[i] * x[i] / sides[i]).sum::<f64>() + ph).cos())
                    .sum();
                (amplitude * v / 2.0).clamp(-1.0, 1.0)
            })
        }
    })
}
