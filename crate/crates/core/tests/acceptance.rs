//! Acceptance criteria. Each test prints one PASS/FAIL line.

use fraclab::allen_cahn::{self as ac, ACParams, EnergyBreakdown};
use fraclab::extension;
use fraclab::fractional_ops::{frac_laplacian_spectral, seminorm_all};
use fraclab::kernel::{beta_s, heat_kernel, ks_kernel, HeatMethod, KernelParams, KsMethod};
use fraclab::minmax;
use fraclab::perimeter::{nmc, s_to_1_limit_experiment, PerimeterParams, SetIndicator};
use fraclab::{Domain, GridField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::io::Write;
use std::time::{Duration, Instant};

fn report(id: &str, name: &str, pass: bool, detail: String, elapsed: Duration) -> bool {
    // bypasses the harness capture so passing criteria are listed too
    let _ = writeln!(
        std::io::stderr(),
        "{} [{id}] {name}: {detail} ({:.1} s)",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    pass
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

fn random_field(d: &Domain, seed: u64) -> GridField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(Vec<f64>, f64, f64)> = (0..6)
        .map(|_| {
            let k: Vec<f64> = (0..d.dim()).map(|_| rng.random_range(-3i32..=3) as f64).collect();
            (k, rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0 * PI))
        })
        .collect();
    let sides = d.torus.side_lengths().to_vec();
    d.sample(|x| {
        let v: f64 = modes
            .iter()
            .map(|(k, a, ph)| a * ((0..x.len()).map(|i| 2.0 * PI * k[i] * x[i] / sides[i]).sum::<f64>() + ph).cos())
            .sum();
        (0.5 * v).clamp(-1.0, 1.0)
    })
}

#[test]
fn criterion_01_kernel_duality() {
    let t0 = Instant::now();
    let d = Domain::cube(1, 1.0, 64).unwrap();
    let torus = &d.torus;
    let mut heat_gap: f64 = 0.0;
    for sep in [0.0, 0.05, 0.1] {
        for i in 0..20 {
            let t = 1e-3 * 1e4f64.powf(i as f64 / 19.0);
            let a = heat_kernel(torus, &[0.0], &[sep], t, HeatMethod::Spectral).unwrap();
            let b = heat_kernel(torus, &[0.0], &[sep], t, HeatMethod::Lattice).unwrap();
            heat_gap = heat_gap.max(rel(a, b));
        }
    }
    let mut ks_gap: f64 = 0.0;
    for s in [0.3, 0.5, 0.8] {
        let p = KernelParams::new(s).unwrap();
        for i in 0..10 {
            let sep = 0.05 * 10f64.powf(i as f64 / 9.0);
            let a = ks_kernel(torus, &[0.0], &[sep], &p, KsMethod::LatticeRiesz).unwrap().value;
            let b = ks_kernel(torus, &[0.0], &[sep], &p, KsMethod::Subordination).unwrap().value;
            ks_gap = ks_gap.max(rel(a, b));
        }
    }
    let el = t0.elapsed();
    let pass = heat_gap <= 1e-9 && ks_gap <= 1e-5 && el.as_secs_f64() < 10.0;
    assert!(report(
        "1",
        "kernel duality",
        pass,
        format!("heat max rel gap {heat_gap:.2e} (≤ 1e-9), K_s max rel gap {ks_gap:.2e} (≤ 1e-5)"),
        el
    ));
}

#[test]
fn criterion_02_seminorm_reconciliation() {
    let t0 = Instant::now();
    let d = Domain::cube(1, 1.0, 256).unwrap();
    let s = 0.5;
    let mut spectral_err: f64 = 0.0;
    let mut di_ratios = Vec::new();
    let mut ext_ratios = Vec::new();
    for k in [1i64, 2, 4, 8] {
        // unit L² norm, so the spectral seminorm is λ_k^{s/2}
        let u = d.sample(|x| 2f64.sqrt() * (2.0 * PI * k as f64 * x[0]).cos());
        let b = seminorm_all(&u, s).unwrap();
        let lam = (2.0 * PI * k as f64).powi(2);
        spectral_err = spectral_err.max(rel(b.spectral, lam.powf(0.5 * s)));
        di_ratios.push(b.double_integral / b.spectral);
        ext_ratios.push(b.extension / b.spectral);
    }
    let spread = |v: &[f64]| v.iter().map(|a| v.iter().map(|b| rel(*a, *b)).fold(0.0, f64::max)).fold(0.0, f64::max);
    let di_spread = spread(&di_ratios);
    let ext_spread = spread(&ext_ratios);
    let di_vs_two = di_ratios.iter().map(|r| rel(*r, 2.0)).fold(0.0, f64::max);
    let el = t0.elapsed();
    let pass = spectral_err <= 1e-12 && di_spread <= 1e-3 && ext_spread <= 1e-3 && di_vs_two <= 1e-3;
    assert!(report(
        "2",
        "seminorm reconciliation",
        pass,
        format!(
            "spectral vs λ^(s/2) {spectral_err:.1e}, DI/spectral {:.6} spread {di_spread:.1e}, ext/spectral {:.6} spread {ext_spread:.1e}",
            di_ratios[0], ext_ratios[0]
        ),
        el
    ));
}

#[test]
fn criterion_03_dtn_identity() {
    let t0 = Instant::now();
    let d = Domain::cube(1, 1.0, 64).unwrap();
    let mut worst: f64 = 0.0;
    let mut ratio_seen = Vec::new();
    for s in [0.3, 0.5, 0.8] {
        for k in [1i64, 2] {
            let u = d.sample(|x| (2.0 * PI * k as f64 * x[0]).cos());
            let z = extension::default_z_ladder(&d, s);
            let ext = extension::cs_extend(&u, s, &z).unwrap();
            let got = extension::dtn(&ext).unwrap();
            let want = frac_laplacian_spectral(&u, s).map(|v| -v / beta_s(s));
            let err = got.zip_map(&want, |a, b| a - b).unwrap().sup_norm() / want.sup_norm();
            worst = worst.max(err);
            ratio_seen.push(got.dot(&want) / want.dot(&want));
        }
    }
    let el = t0.elapsed();
    let pass = worst <= 1e-3 && el.as_secs_f64() < 30.0;
    assert!(report(
        "3",
        "DtN identity with -β_s^-1",
        pass,
        format!("max rel error {worst:.3e} (≤ 1e-3); dtn / (-β_s^-1 λ^(s/2)) ratios {ratio_seen:.4?}"),
        el
    ));
}

#[test]
fn criterion_04_morse_index_oracle() {
    let t0 = Instant::now();
    let d = Domain::cube(1, 1.0, 256).unwrap();
    let p = ACParams::new(0.5, 0.05).unwrap();
    // modes cos, sin(2πk x) with λ^{s/2} < ε^{-s}, plus the constant
    let bound = 0.05f64.powf(-0.5);
    let count = 1 + 2 * (1..=128).filter(|&k| (2.0 * PI * k as f64).powf(0.5) < bound).count();
    let zero = ac::morse_index(&d.constant(0.0), &p, None, 32).unwrap();
    let one = ac::morse_index(&d.constant(1.0), &p, None, 32).unwrap();
    let el = t0.elapsed();
    let pass = zero.index == count && !zero.lower_bound && one.index == 0 && el.as_secs_f64() < 60.0;
    assert!(report(
        "4",
        "Morse-index oracle",
        pass,
        format!("index(0) = {} (closed form {count}), index(1) = {}", zero.index, one.index),
        el
    ));
}

#[test]
fn criterion_05_layer_solution() {
    let t0 = Instant::now();
    let l = ac::layer_1d(0.5, 20.0, 4096).unwrap();
    let odd = l.oddness_defect();
    let mono = l.is_monotone();
    let el = t0.elapsed();
    let pass = mono && odd <= 1e-6 && l.residual_sup <= 1e-6 && el.as_secs_f64() < 300.0;
    assert!(report(
        "5",
        "layer solution",
        pass,
        format!("monotone {mono}, oddness {odd:.1e}, residual {:.1e}", l.residual_sup),
        el
    ));
}

#[test]
fn criterion_06_gradient_flow_contract() {
    let t0 = Instant::now();
    let p = ACParams::new(0.5, 0.05).unwrap();
    let mut worst_rise: f64 = 0.0;
    let mut worst_sup: f64 = 0.0;
    let mut converged = 0;
    let mut runs = 0;
    for (dim, n) in [(1usize, 256usize), (2, 64)] {
        let d = Domain::cube(dim, 1.0, n).unwrap();
        for seed in 0..20u64 {
            let sol = ac::gradient_flow(&random_field(&d, seed), &p).unwrap();
            runs += 1;
            for w in sol.energy_history.windows(2) {
                worst_rise = worst_rise.max((w[1] - w[0]) / w[0].abs().max(1e-300));
            }
            if sol.converged {
                converged += 1;
                worst_sup = worst_sup.max(sol.field().sup_norm());
            }
        }
    }
    let el = t0.elapsed();
    // accepted steps may only rise within rounding of the energy
    let pass = worst_rise <= 1e-13 && worst_sup < 1.0;
    assert!(report(
        "6",
        "gradient-flow contract",
        pass,
        format!("{runs} runs, {converged} converged, worst relative rise {worst_rise:.1e}, 1 - max sup|u| {:.1e}", 1.0 - worst_sup),
        el
    ));
}

fn scaling(dim: usize) -> (Vec<f64>, f64) {
    let d = Domain::cube(dim, 1.0, 128).unwrap();
    let ps: Vec<usize> = (1..=8).collect();
    let slopes: Vec<f64> = (0..3u64)
        .map(|seed| {
            minmax::scaling_experiment(&d, &ps, 0.5, minmax::EnergyMode::SharpInterface, 200, seed, 0)
                .unwrap()
                .slope
        })
        .collect();
    let spread = slopes.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b)) - slopes.iter().fold(f64::INFINITY, |a, b| a.min(*b));
    (slopes, spread)
}

#[test]
fn criterion_07_scaling_law() {
    let t0 = Instant::now();
    let (s2, spread2) = scaling(2);
    let (s1, spread1) = scaling(1);
    let el = t0.elapsed();
    let in_band = |v: &[f64], target: f64| v.iter().all(|s| (s - target).abs() <= 0.2);
    let pass = in_band(&s2, 0.25) && spread2 <= 0.05 && in_band(&s1, 0.5) && spread1 <= 0.05 && el.as_secs_f64() < 1200.0;
    assert!(report(
        "7",
        "scaling law",
        pass,
        format!("T² slopes {s2:.3?} spread {spread2:.3} (target 0.25 ± 0.2), T¹ slopes {s1:.3?} spread {spread1:.3} (target 0.5 ± 0.2)"),
        el
    ));
}

#[test]
fn criterion_08_s_to_1_limit() {
    let t0 = Instant::now();
    let d = Domain::cube(1, 1.0, 1024).unwrap();
    let set = SetIndicator::stripe(&d, 0, 0.25, 0.75).unwrap();
    let rows = s_to_1_limit_experiment(&set, &[0.5, 0.7, 0.9, 0.95]).unwrap();
    let r: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let late = (r[3] - r[2]).abs();
    let early = (r[1] - r[0]).abs();
    let el = t0.elapsed();
    let pass = late < early && el.as_secs_f64() < 300.0;
    assert!(report(
        "8",
        "s→1 limit",
        pass,
        format!("ratios {r:.5?}, |r(.95)-r(.9)| {late:.4e} < |r(.7)-r(.5)| {early:.4e}"),
        el
    ));
}

#[test]
fn criterion_09_nmc_symmetry_zero() {
    let t0 = Instant::now();
    let pp = PerimeterParams::default();
    let d1 = Domain::cube(1, 1.0, 512).unwrap();
    let a = nmc(&SetIndicator::stripe(&d1, 0, 0.25, 0.75).unwrap(), &[0.25], 0.5, &pp).unwrap();
    let d2 = Domain::cube(2, 1.0, 128).unwrap();
    let b = nmc(&SetIndicator::stripe(&d2, 0, 0.25, 0.75).unwrap(), &[0.25, 0.4], 0.5, &pp).unwrap();
    let disc = SetIndicator::ball(&d2, &[0.5, 0.5], 0.1).unwrap();
    let c = nmc(&disc, &[0.6, 0.5], 0.5, &pp).unwrap();
    let el = t0.elapsed();
    let zero = |r: &fraclab::perimeter::NmcResult| r.value.abs() <= r.error.max(1e-12);
    let pass = zero(&a) && zero(&b) && c.value < 0.0 && c.value.abs() > c.error;
    assert!(report(
        "9",
        "NMC symmetry zero",
        pass,
        format!(
            "T¹ stripe {:.2e} ± {:.1e}, T² stripe {:.2e} ± {:.1e}, disc {:.4} ± {:.1e}",
            a.value, a.error, b.value, b.error, c.value, c.error
        ),
        el
    ));
}

#[test]
fn criterion_10_monotonicity_functional() {
    let t0 = Instant::now();
    let d = Domain::cube(2, 1.0, 256).unwrap();
    let p = ACParams::new(0.5, 0.02).unwrap();
    let u0 = ac::smoothed_stripe(&d, 0, 0.25, 0.75, 0.02);
    let sol = ac::gradient_flow(&u0, &p).unwrap();
    let u = sol.field();
    let h = d.h();
    let radii: Vec<f64> = (0..12).map(|i| 4.0 * h + (0.25 - 4.0 * h) * i as f64 / 11.0).collect();
    let rows = extension::phi_functional(u, &p, &[0.25, 0.5], &radii).unwrap();
    let worst = rows
        .windows(2)
        .map(|w| (w[0].phi - w[1].phi) - (w[0].error + w[1].error))
        .fold(f64::NEG_INFINITY, f64::max);
    let el = t0.elapsed();
    let pass = sol.converged && worst <= 0.0;
    let phis: Vec<f64> = rows.iter().map(|r| r.phi).collect();
    assert!(report(
        "10",
        "monotonicity functional",
        pass,
        format!(
            "flow residual {:.1e}, Φ {phis:.4?}, worst drop beyond error {worst:.2e}",
            sol.residual_norm
        ),
        el
    ));
}

fn eps_rows() -> &'static (Vec<minmax::EpsilonRow>, Duration) {
    static ROWS: std::sync::OnceLock<(Vec<minmax::EpsilonRow>, Duration)> = std::sync::OnceLock::new();
    ROWS.get_or_init(|| {
        let t0 = Instant::now();
        let d = Domain::cube(1, 1.0, 1024).unwrap();
        let rows = minmax::epsilon_limit_experiment(&d, 1, 0.5, &[0.08, 0.04, 0.02, 0.01], 200, 0).unwrap();
        (rows, t0.elapsed())
    })
}

#[test]
fn criterion_11a_potential_energy_decreasing() {
    let (rows, el) = eps_rows();
    let pot: Vec<f64> = rows.iter().map(|r| r.potential).collect();
    let all_converged = rows.iter().all(|r| r.converged);
    let pass = all_converged && pot.iter().all(|&v| v > 0.0) && pot.windows(2).all(|w| w[1] < w[0]) && el.as_secs_f64() < 900.0;
    assert!(report("11a", "ε→0: E^Pot strictly decreasing", pass, format!("E^Pot {pot:.4?}, all converged {all_converged}"), *el));
}

#[test]
fn criterion_11b_sobolev_matches_perimeter() {
    let (rows, el) = eps_rows();
    let last = rows.last().unwrap();
    let gaps: Vec<f64> = rows.iter().map(|r| r.relative_gap).collect();
    let pass = last.converged && last.relative_gap <= 0.05;
    assert!(report(
        "11b",
        "ε→0: |E^Sob - Per_s| ≤ 5% at ε = 0.01",
        pass,
        format!("relative gaps {gaps:.3?}, Per_s {:.6}", last.per_s_threshold),
        *el
    ));
}

#[test]
fn criterion_11c_potential_decay_slope() {
    let (rows, el) = eps_rows();
    let family: Vec<(f64, EnergyBreakdown)> = rows
        .iter()
        .map(|r| {
            let e = EnergyBreakdown {
                sobolev: r.sobolev,
                potential: r.potential,
                total: r.sobolev + r.potential,
            };
            (r.epsilon, e)
        })
        .collect();
    let fit = ac::potential_decay_probe(&family).unwrap();
    let pass = fit.slope >= 0.2;
    assert!(report("11c", "ε→0: potential-decay slope ≥ 0.2", pass, format!("slope {:.3} ± {:.3}", fit.slope, fit.stderr), *el));
}

fn mountain() -> &'static (minmax::MountainPassReport, f64, f64, Duration) {
    static MP: std::sync::OnceLock<(minmax::MountainPassReport, f64, f64, Duration)> = std::sync::OnceLock::new();
    MP.get_or_init(|| {
        let t0 = Instant::now();
        let d = Domain::cube(1, 1.0, 256).unwrap();
        let p = ACParams::new(0.5, 0.05).unwrap();
        let rep = minmax::mountain_pass(&d.constant(-1.0), &d.constant(1.0), &p, 24, 400).unwrap();
        let cover = minmax::ball_cover(&d, 1, 0).unwrap();
        let sweep = minmax::sweepout_max_energy(&d, &cover, 0.5, minmax::EnergyMode::Ac { epsilon: 0.05 }, 200, 0).unwrap();
        (rep, sweep.max_energy, p.tol_residual, t0.elapsed())
    })
}

#[test]
fn criterion_12a_saddle_is_critical() {
    let (rep, _, tol, el) = mountain();
    let pass = rep.saddle_residual <= 10.0 * tol && rep.saddle_index <= 1;
    assert!(report(
        "12a",
        "mountain pass: residual ≤ 10·tol, index ∈ {0, 1}",
        pass,
        format!("residual {:.1e}, index {}, {} sweeps", rep.saddle_residual, rep.saddle_index, rep.sweeps),
        *el
    ));
}

#[test]
fn criterion_12b_saddle_matches_sweepout() {
    let (rep, sweep_max, _, el) = mountain();
    let gap = rel(rep.saddle_energy.total, *sweep_max);
    let pass = gap <= 0.05;
    assert!(report(
        "12b",
        "mountain pass: saddle energy within 5% of p=1 sweepout max",
        pass,
        format!("saddle {:.4}, sweepout max {sweep_max:.4}, relative gap {gap:.3}", rep.saddle_energy.total),
        *el
    ));
}
