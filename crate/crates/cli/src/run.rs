use crate::config::*;
use crate::Failure;
use fraclab::allen_cahn::{self as ac, ACParams, EnergyBreakdown, Symmetry};
use fraclab::extension;
use fraclab::fractional_ops;
use fraclab::kernel::{self, HeatMethod, KernelParams};
use fraclab::manifold::fmt_f64;
use fraclab::minmax;
use fraclab::perimeter::{self, PerimeterParams, SetIndicator};
use fraclab::{Domain, GridField};
use serde::Serialize;
use std::path::{Path, PathBuf};

type Res<T = ()> = Result<T, Failure>;

/// Artifact sink rooted at the output directory.
pub struct Output {
    root: PathBuf,
    pub artifacts: Vec<String>,
}

impl Output {
    pub fn create(root: &Path) -> Result<Self, String> {
        std::fs::create_dir_all(root.join("fields")).map_err(|e| format!("{}: {e}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    fn text(&mut self, name: &str, body: &str) -> Res {
        std::fs::write(self.root.join(name), body)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Res {
        let body = serde_json::to_string_pretty(v)?;
        self.text(name, &body)
    }

    fn csv(&mut self, name: &str, header: &str, rows: &[Vec<f64>]) -> Res {
        let mut body = String::from(header);
        body.push('\n');
        for r in rows {
            let cells: Vec<String> = r.iter().map(|v| fmt_f64(*v)).collect();
            body.push_str(&cells.join(","));
            body.push('\n');
        }
        self.text(name, &body)
    }

    fn with_writer(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> fraclab::Result<()>) -> Res {
        let mut buf = Vec::new();
        f(&mut buf)?;
        std::fs::write(self.root.join(name), &buf)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn field(&mut self, stem: &str, u: &GridField) -> Res {
        self.with_writer(&format!("fields/{stem}.bin"), |w| u.write_binary(w))
    }
}

/// A validated command with its typed experiment section.
#[derive(Debug, Serialize)]
#[serde(tag = "command", content = "experiment", rename_all = "kebab-case")]
pub enum Plan {
    KernelCheck(KernelCheckExp),
    Seminorm(FieldExp),
    ExtensionCheck(FieldExp),
    Monotonicity(MonotonicityExp),
    Perimeter(PerimeterExp),
    Nmc(NmcExp),
    Layer1d(LayerExp),
    SolveAc(SolveExp),
    MorseIndex(MorseExp),
    Sweepout(SweepoutExp),
    Scaling(ScalingExp),
    EpsLimit(EpsLimitExp),
    BvDensityProbe(ProbeExp),
}

fn check_point(domain: &Domain, x: &[f64], what: &str) -> Result<(), String> {
    if x.len() != domain.dim() || x.iter().any(|v| !v.is_finite()) {
        return Err(format!("{what} must be a finite point with one coordinate per axis"));
    }
    Ok(())
}

impl Plan {
    pub fn resolve(cfg: &RunConfig) -> Result<Self, String> {
        let domain = cfg.domain()?;
        KernelParams::new(cfg.kernel.s).map_err(|e| e.to_string())?;
        let field = |spec: &FieldSpec| build_field(&domain, spec, cfg.seed).map(|_| ());
        let plan = match cfg.command.as_str() {
            "kernel-check" => {
                let e: KernelCheckExp = cfg.experiment()?;
                if !(e.separation_min > 0.0 && e.separation_max > e.separation_min) || e.separations == 0 || e.heat_times == 0 {
                    return Err("kernel-check needs 0 < separation_min < separation_max and positive counts".into());
                }
                Plan::KernelCheck(e)
            }
            "seminorm" => {
                let e: FieldExp = cfg.experiment()?;
                field(&e.field)?;
                Plan::Seminorm(e)
            }
            "extension-check" => {
                let e: FieldExp = cfg.experiment()?;
                field(&e.field)?;
                Plan::ExtensionCheck(e)
            }
            "monotonicity" => {
                let e: MonotonicityExp = cfg.experiment()?;
                cfg.ac_params()?;
                field(&e.initial)?;
                check_point(&domain, &e.center, "center")?;
                if e.radii < 2 {
                    return Err("monotonicity needs at least 2 radii".into());
                }
                Plan::Monotonicity(e)
            }
            "perimeter" => {
                let e: PerimeterExp = cfg.experiment()?;
                SetIndicator::from_shape(&domain, e.set.clone()).map_err(|err| err.to_string())?;
                if e.s_list.iter().any(|s| !(*s > 0.0 && *s < 1.0)) {
                    return Err("s_list entries must lie in (0, 1)".into());
                }
                Plan::Perimeter(e)
            }
            "nmc" => {
                let e: NmcExp = cfg.experiment()?;
                SetIndicator::from_shape(&domain, e.set.clone()).map_err(|err| err.to_string())?;
                check_point(&domain, &e.point, "point")?;
                Plan::Nmc(e)
            }
            "layer1d" => {
                let e: LayerExp = cfg.experiment()?;
                if !(e.half_length > 0.0) || e.grid < 16 {
                    return Err("layer1d needs half_length > 0 and grid >= 16".into());
                }
                Plan::Layer1d(e)
            }
            "solve-ac" => {
                let e: SolveExp = cfg.experiment()?;
                cfg.ac_params()?;
                field(&e.initial)?;
                Plan::SolveAc(e)
            }
            "morse-index" => {
                let e: MorseExp = cfg.experiment()?;
                cfg.ac_params()?;
                field(&e.field)?;
                if let Some(r) = &e.region {
                    SetIndicator::from_shape(&domain, r.clone()).map_err(|err| err.to_string())?;
                }
                if e.k_max == 0 {
                    return Err("k_max must be positive".into());
                }
                Plan::MorseIndex(e)
            }
            "sweepout" => {
                let e: SweepoutExp = cfg.experiment()?;
                cfg.energy_mode(e.mode)?;
                if !(1..=12).contains(&e.p) || e.sphere_samples == 0 {
                    return Err("sweepout needs p in 1..=12 and sphere_samples > 0".into());
                }
                Plan::Sweepout(e)
            }
            "scaling" => {
                let e: ScalingExp = cfg.experiment()?;
                cfg.energy_mode(e.mode)?;
                if e.p_values.len() < 4 || e.p_values.iter().any(|p| !(1..=12).contains(p)) {
                    return Err("scaling needs at least 4 p_values in 1..=12".into());
                }
                Plan::Scaling(e)
            }
            "eps-limit" => {
                let e: EpsLimitExp = cfg.experiment()?;
                if e.eps_list.is_empty() || e.eps_list.iter().any(|v| !(*v > 0.0)) {
                    return Err("eps_list must hold positive values".into());
                }
                if !(1..=12).contains(&e.p) {
                    return Err("p must lie in 1..=12".into());
                }
                for &eps in &e.eps_list {
                    ACParams::new(cfg.kernel.s, eps).map_err(|err| err.to_string())?;
                }
                Plan::EpsLimit(e)
            }
            "bv-density-probe" => {
                let e: ProbeExp = cfg.experiment()?;
                if e.solve {
                    cfg.ac_params()?;
                }
                field(&e.field)?;
                check_point(&domain, &e.center, "center")?;
                if !(e.radius > 0.0) {
                    return Err("radius must be positive".into());
                }
                Plan::BvDensityProbe(e)
            }
            other => {
                return Err(format!("unknown command `{other}`; expected one of {}", COMMANDS.join(", ")));
            }
        };
        Ok(plan)
    }

    pub fn execute(&self, cfg: &RunConfig, out: &mut Output) -> Res {
        let domain = cfg.domain().map_err(Failure::Config)?;
        let s = cfg.kernel.s;
        let field = |spec: &FieldSpec| build_field(&domain, spec, cfg.seed).map_err(Failure::Config);
        let params = || cfg.ac_params().map_err(Failure::Config);
        match self {
            Plan::KernelCheck(e) => kernel_check(&domain, s, e, out),
            Plan::Seminorm(e) => {
                let u = field(&e.field)?;
                let b = fractional_ops::seminorm_all(&u, s)?;
                out.csv("seminorm.csv", "spectral,double_integral,extension", &[vec![b.spectral, b.double_integral, b.extension]])?;
                out.json("seminorm.json", &b)
            }
            Plan::ExtensionCheck(e) => extension_check(&field(&e.field)?, s, out),
            Plan::Monotonicity(e) => {
                let p = params()?;
                let sol = ac::gradient_flow(&field(&e.initial)?, &p)?;
                out.field("solution", sol.field())?;
                let r_min = e.r_min.unwrap_or(4.0 * domain.h());
                let r_max = e.r_max.unwrap_or(0.25 * domain.torus.min_side());
                if !(r_min > 0.0 && r_max > r_min) {
                    return Err(Failure::Config("need 0 < r_min < r_max".into()));
                }
                let radii: Vec<f64> = (0..e.radii)
                    .map(|i| r_min + (r_max - r_min) * i as f64 / (e.radii - 1) as f64)
                    .collect();
                let rows = extension::phi_functional(sol.field(), &p, &e.center, &radii)?;
                out.with_writer("phi.csv", |w| extension::write_phi_csv(&rows, w))?;
                let worst_drop = rows
                    .windows(2)
                    .map(|w| (w[0].phi - w[1].phi) - (w[0].error + w[1].error))
                    .fold(f64::NEG_INFINITY, f64::max);
                out.json(
                    "monotonicity.json",
                    &serde_json::json!({
                        "flow_converged": sol.converged,
                        "residual_norm": sol.residual_norm,
                        "worst_drop_beyond_error": worst_drop,
                        "monotone_within_error": worst_drop <= 0.0,
                    }),
                )?;
                require(sol.converged, "gradient flow did not converge")
            }
            Plan::Perimeter(e) => {
                let set = SetIndicator::from_shape(&domain, e.set.clone())?;
                let pp = PerimeterParams { method: e.method };
                let value = perimeter::per_s(&set, s, &pp)?;
                let grid = perimeter::per_s_grid(&set, s)?;
                let classical = perimeter::classical_perimeter(&set);
                out.csv("perimeter.csv", "s,per_s,per_s_grid,classical", &[vec![s, value, grid, classical]])?;
                if !e.s_list.is_empty() {
                    let rows = perimeter::s_to_1_limit_experiment(&set, &e.s_list)?;
                    out.with_writer("limit.csv", |w| perimeter::write_limit_csv(&rows, w))?;
                }
                Ok(())
            }
            Plan::Nmc(e) => {
                let set = SetIndicator::from_shape(&domain, e.set.clone())?;
                let r = perimeter::nmc(&set, &e.point, s, &PerimeterParams::default())?;
                let rows: Vec<Vec<f64>> = r.truncations.iter().map(|(a, b)| vec![*a, *b]).collect();
                out.csv("nmc_truncations.csv", "r,integral", &rows)?;
                out.json("nmc.json", &r)
            }
            Plan::Layer1d(e) => {
                let l = ac::layer_1d(s, e.half_length, e.grid)?;
                let rows: Vec<Vec<f64>> = l.half_period.iter().map(|(x, v)| vec![*x, *v]).collect();
                out.csv("layer.csv", "x,v", &rows)?;
                out.field("layer", &l.field)?;
                out.json(
                    "layer.json",
                    &serde_json::json!({
                        "s": s,
                        "residual_sup": l.residual_sup,
                        "oddness_defect": l.oddness_defect(),
                        "monotone": l.is_monotone(),
                    }),
                )
            }
            Plan::SolveAc(e) => {
                let p = params()?;
                let sol = ac::gradient_flow_with(&field(&e.initial)?, &p, e.symmetry)?;
                let rows: Vec<Vec<f64>> = sol.energy_history.iter().enumerate().map(|(i, v)| vec![i as f64, *v]).collect();
                out.csv("energy_history.csv", "step,energy", &rows)?;
                out.field("solution", sol.field())?;
                out.json("solution.json", &sol)?;
                require(sol.converged, "gradient flow did not converge")
            }
            Plan::MorseIndex(e) => {
                let p = params()?;
                let mut u = field(&e.field)?;
                if e.solve {
                    let sol = ac::gradient_flow(&u, &p)?;
                    require(sol.converged, "gradient flow did not converge")?;
                    u = sol.u.expect("solution field");
                    out.field("solution", &u)?;
                }
                let omega = e.region.as_ref().map(|r| SetIndicator::from_shape(&domain, r.clone())).transpose()?;
                let rep = ac::morse_index(&u, &p, omega.as_ref(), e.k_max)?;
                let rows: Vec<Vec<f64>> = rep.eigenvalues.iter().map(|v| vec![*v]).collect();
                out.csv("eigenvalues.csv", "eigenvalue", &rows)?;
                out.json("morse.json", &rep)
            }
            Plan::Sweepout(e) => {
                let mode = cfg.energy_mode(e.mode).map_err(Failure::Config)?;
                let cover = minmax::ball_cover(&domain, e.p, e.cover_seed)?;
                let row = minmax::sweepout_max_energy(&domain, &cover, s, mode, e.sphere_samples, cfg.seed)?;
                let map = minmax::PatchMap::new(&domain, &cover)?;
                out.field("argmax", &minmax::member_field(&domain, &map, &row.argmax)?)?;
                out.csv(
                    "sweepout.csv",
                    "p,N,r,max_energy,scaled",
                    &[vec![row.p as f64, row.n_balls as f64, row.radius, row.max_energy, row.scaled]],
                )?;
                out.json("cover.json", &cover)?;
                out.json("sweepout.json", &row)
            }
            Plan::Scaling(e) => {
                let mode = cfg.energy_mode(e.mode).map_err(Failure::Config)?;
                let rep = minmax::scaling_experiment(&domain, &e.p_values, s, mode, e.sphere_samples, cfg.seed, e.cover_seed)?;
                out.with_writer("scaling.csv", |w| rep.write_csv(w))?;
                out.json("slope.json", &rep.slope_json())
            }
            Plan::EpsLimit(e) => {
                let rows = minmax::epsilon_limit_experiment(&domain, e.p, s, &e.eps_list, e.sphere_samples, cfg.seed)?;
                out.with_writer("eps_limit.csv", |w| minmax::write_epsilon_csv(&rows, w))?;
                let family: Vec<(f64, EnergyBreakdown)> = rows
                    .iter()
                    .map(|r| {
                        let b = EnergyBreakdown {
                            sobolev: r.sobolev,
                            potential: r.potential,
                            total: r.sobolev + r.potential,
                        };
                        (r.epsilon, b)
                    })
                    .collect();
                if family.len() >= 2 {
                    match ac::potential_decay_probe(&family) {
                        Ok(fit) => out.json("decay.json", &fit)?,
                        Err(err) => out.json("decay.json", &serde_json::json!({ "error": err.to_string() }))?,
                    }
                }
                let failed: Vec<f64> = rows.iter().filter(|r| !r.converged).map(|r| r.epsilon).collect();
                require(failed.is_empty(), &format!("no convergence at epsilon {failed:?}"))
            }
            Plan::BvDensityProbe(e) => {
                let mut u = field(&e.field)?;
                if e.solve {
                    let sol = ac::gradient_flow_with(&u, &params()?, Symmetry::None)?;
                    require(sol.converged, "gradient flow did not converge")?;
                    u = sol.u.expect("solution field");
                    out.field("solution", &u)?;
                }
                let bv = ac::bv_probe(&u, &e.center, e.radius);
                let d = ac::density_probe(&u, &e.center, e.radius);
                let n = domain.dim() as i32;
                out.csv(
                    "probe.csv",
                    "R,bv,bv_scaled,density_plus,density_minus",
                    &[vec![e.radius, bv, bv / e.radius.powi(n - 1), d.density_plus, d.density_minus]],
                )?;
                out.json("probe.json", &serde_json::json!({ "bv": bv, "density": d }))
            }
        }
    }
}

fn require(ok: bool, msg: &str) -> Res {
    if ok {
        Ok(())
    } else {
        Err(Failure::Numerical(msg.to_string()))
    }
}

fn kernel_check(domain: &Domain, s: f64, e: &KernelCheckExp, out: &mut Output) -> Res {
    let torus = &domain.torus;
    let n = torus.dim();
    let x = vec![0.0; n];
    let y: Vec<f64> = torus.side_lengths().iter().map(|l| 0.1 * l).collect();
    let mut heat = Vec::with_capacity(e.heat_times);
    for i in 0..e.heat_times {
        let f = if e.heat_times == 1 { 0.0 } else { i as f64 / (e.heat_times - 1) as f64 };
        let t = 1e-3 * 1e4f64.powf(f);
        let a = kernel::heat_kernel(torus, &x, &y, t, HeatMethod::Spectral)?;
        let b = kernel::heat_kernel(torus, &x, &y, t, HeatMethod::Lattice)?;
        heat.push(vec![t, a, b, (a - b).abs() / a.abs().max(f64::MIN_POSITIVE)]);
    }
    out.csv("heat.csv", "t,spectral,lattice,relative_gap", &heat)?;
    let params = KernelParams::new(s)?;
    let pairs = kernel::axis_pairs(torus, e.separation_min, e.separation_max, e.separations);
    let rep = kernel::comparability_report(torus, &params, &pairs)?;
    out.with_writer("kernel.csv", |w| rep.write_csv(w))?;
    let heat_gap = heat.iter().map(|r| r[3]).fold(0.0, f64::max);
    let ks_gap = rep.rows.iter().map(|r| r.method_gap).fold(0.0, f64::max);
    out.json(
        "kernel_check.json",
        &serde_json::json!({
            "s": s,
            "max_heat_relative_gap": heat_gap,
            "max_ks_method_gap": ks_gap,
            "min_ratio": rep.min_ratio,
            "max_ratio": rep.max_ratio,
        }),
    )
}

fn extension_check(u: &GridField, s: f64, out: &mut Output) -> Res {
    let z = extension::default_z_ladder(&u.domain, s);
    let ext = extension::cs_extend(u, s, &z)?;
    let res = extension::degenerate_harmonic_residual(&ext)?;
    let d = extension::dtn(&ext)?;
    let lap = fractional_ops::frac_laplacian_spectral(u, s);
    let num: f64 = d.dot(&lap);
    let den: f64 = lap.dot(&lap);
    let ratio = if den > 0.0 { num / den } else { 0.0 };
    let defect = d.zip_map(&lap, |a, b| a - ratio * b)?.sup_norm();
    out.field("dtn", &d)?;
    out.csv(
        "extension.csv",
        "z_nodes,harmonic_residual,dtn_over_frac_laplacian,proportionality_defect",
        &[vec![z.len() as f64, res, ratio, defect]],
    )?;
    out.json(
        "extension.json",
        &serde_json::json!({
            "s": s,
            "z_nodes": z.len(),
            "harmonic_residual": res,
            "dtn_over_frac_laplacian": ratio,
            "beta_s": kernel::beta_s(s),
            "proportionality_defect": defect,
        }),
    )
}
