use serde_json::{json, Value};
use std::path::Path;
use std::process::Command;

fn run(dir: &Path, cfg: &Value, extra: &[&str]) -> (i32, String) {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string(cfg).unwrap()).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_fraclab"))
        .arg("--config")
        .arg(&path)
        .args(extra)
        .output()
        .unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn base(command: &str, out: &Path, experiment: Value) -> Value {
    json!({
        "command": command,
        "torus": {"dim": 1, "side_lengths": [1.0]},
        "grid": {"points_per_axis": [128]},
        "kernel": {"s": 0.5},
        "ac": {"epsilon": 0.05},
        "experiment": experiment,
        "seed": 7,
        "output_dir": out,
    })
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn seminorm_of_constant_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = base("seminorm", &out, json!({"field": {"kind": "constant", "value": 0.4}}));
    let (code, _) = run(tmp.path(), &cfg, &[]);
    assert_eq!(code, 0);
    let csv = read(&out.join("seminorm.csv"));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("spectral,double_integral,extension"));
    for cell in lines.next().unwrap().split(',') {
        assert_eq!(cell.parse::<f64>().unwrap(), 0.0);
    }
    let manifest: Value = serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["config"]["command"], "seminorm");
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("sweepout", json!({"p": 2, "sphere_samples": 30})),
        ("solve-ac", json!({"initial": {"kind": "random", "amplitude": 0.5}})),
    ];
    for (cmd, exp) in cases {
        let mut bytes = Vec::new();
        for rep in 0..2 {
            let out = tmp.path().join(format!("{cmd}-{rep}"));
            let (code, _) = run(tmp.path(), &base(cmd, &out, exp.clone()), &[]);
            assert_eq!(code, 0, "{cmd}");
            let mut files: Vec<(String, Vec<u8>)> = Vec::new();
            for name in ["sweepout.csv", "sweepout.json", "energy_history.csv", "solution.json", "fields/solution.bin", "fields/argmax.bin"] {
                if let Ok(b) = std::fs::read(out.join(name)) {
                    files.push((name.to_string(), b));
                }
            }
            assert!(!files.is_empty());
            bytes.push(files);
        }
        assert_eq!(bytes[0], bytes[1], "{cmd}");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let exp = json!({"field": {"kind": "random", "amplitude": 1.0}});
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run(tmp.path(), &base("seminorm", &a, exp.clone()), &[]);
    run(tmp.path(), &base("seminorm", &b, exp), &["--seed", "8"]);
    assert_ne!(read(&a.join("seminorm.csv")), read(&b.join("seminorm.csv")));
    let manifest: Value = serde_json::from_str(&read(&b.join("manifest.json"))).unwrap();
    assert_eq!(manifest["seed"], 8);
}

#[test]
fn unknown_keys_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let mut cfg = base("seminorm", &out, json!({"field": {"kind": "constant", "value": 0.0}}));
    cfg["extra"] = json!(1);
    assert_eq!(run(tmp.path(), &cfg, &[]).0, 2);

    let cfg = base("seminorm", &out, json!({"field": {"kind": "constant", "value": 0.0}, "typo": 1}));
    assert_eq!(run(tmp.path(), &cfg, &[]).0, 2);

    let cfg = base("no-such-command", &out, json!({}));
    assert_eq!(run(tmp.path(), &cfg, &[]).0, 2);
    assert!(!out.exists());
}

#[test]
fn invalid_parameters_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let mut cfg = base("seminorm", &out, json!({"field": {"kind": "constant", "value": 0.0}}));
    cfg["kernel"]["s"] = json!(2.5);
    assert_eq!(run(tmp.path(), &cfg, &[]).0, 2);

    let mut cfg = base("solve-ac", &out, json!({"initial": {"kind": "constant", "value": 0.1}}));
    cfg["ac"]["epsilon"] = json!(-1.0);
    assert_eq!(run(tmp.path(), &cfg, &[]).0, 2);

    let mut cfg = base("seminorm", &out, json!({"field": {"kind": "constant", "value": 0.0}}));
    cfg["torus"]["dim"] = json!(2);
    assert_eq!(run(tmp.path(), &cfg, &[]).0, 2);
}

#[test]
fn non_convergence_exits_3_after_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let mut cfg = base("solve-ac", &out, json!({"initial": {"kind": "mode", "k": [1], "amplitude": 0.3}}));
    cfg["ac"]["max_iters"] = json!(2);
    assert_eq!(run(tmp.path(), &cfg, &[]).0, 3);
    assert!(out.join("energy_history.csv").exists());
    let manifest: Value = serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    assert!(manifest["status"].as_str().unwrap().starts_with("numerical failure"));
}

#[test]
fn dry_run_prints_plan_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = base("scaling", &out, json!({"p_values": [1, 2, 3, 4, 5, 6, 7, 8]}));
    let (code, stdout) = run(tmp.path(), &cfg, &["--dry-run"]);
    assert_eq!(code, 0);
    let plan: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(plan["plan"]["command"], "scaling");
    assert_eq!(plan["plan"]["experiment"]["sphere_samples"], 200);
    assert!(!out.exists());
}

#[test]
fn every_command_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let stripe = json!({"kind": "stripe", "axis": 0, "a": 0.25, "b": 0.75});
    let cases = [
        ("kernel-check", json!({"separations": 4, "heat_times": 5}), "kernel.csv"),
        ("seminorm", json!({"field": {"kind": "mode", "k": [2], "amplitude": 1.0}}), "seminorm.json"),
        ("extension-check", json!({"field": {"kind": "mode", "k": [1], "amplitude": 1.0}}), "extension.json"),
        (
            "monotonicity",
            json!({"initial": {"kind": "stripe", "axis": 0, "a": 0.25, "b": 0.75, "width": 0.05}, "center": [0.25], "radii": 4}),
            "phi.csv",
        ),
        ("perimeter", json!({"set": stripe, "s_list": [0.5, 0.7]}), "limit.csv"),
        ("nmc", json!({"set": stripe, "point": [0.25]}), "nmc.json"),
        ("layer1d", json!({"half_length": 10.0, "grid": 512}), "layer.csv"),
        ("solve-ac", json!({"initial": {"kind": "mode", "k": [1], "amplitude": 0.5}, "symmetry": "odd"}), "solution.json"),
        ("morse-index", json!({"field": {"kind": "constant", "value": 0.0}}), "morse.json"),
        ("sweepout", json!({"p": 1, "sphere_samples": 20}), "sweepout.csv"),
        ("scaling", json!({"p_values": [1, 2, 3, 4], "sphere_samples": 20}), "slope.json"),
        ("eps-limit", json!({"eps_list": [0.04, 0.02], "sphere_samples": 20}), "eps_limit.csv"),
        (
            "bv-density-probe",
            json!({"field": {"kind": "stripe", "axis": 0, "a": 0.25, "b": 0.75, "width": 0.05}, "center": [0.25], "radius": 0.2}),
            "probe.json",
        ),
    ];
    for (cmd, exp, artifact) in cases {
        let out = tmp.path().join(cmd);
        let (code, _) = run(tmp.path(), &base(cmd, &out, exp), &[]);
        assert_eq!(code, 0, "{cmd}");
        assert!(out.join(artifact).exists(), "{cmd}: {artifact}");
        let manifest: Value = serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
        assert!(manifest["artifacts"].as_array().unwrap().iter().any(|a| a == artifact), "{cmd}");
    }
}

#[test]
fn morse_index_of_zero_state_matches_mode_count() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = base("morse-index", &out, json!({"field": {"kind": "constant", "value": 0.0}}));
    assert_eq!(run(tmp.path(), &cfg, &[]).0, 0);
    let rep: Value = serde_json::from_str(&read(&out.join("morse.json"))).unwrap();
    // Negative directions of u ≡ 0 are the modes with λ^{s/2} < ε^{-s}.
    let thresh = 0.05f64.powf(-0.5);
    let count = 1 + 2 * (1..100).filter(|k| (2.0 * std::f64::consts::PI * *k as f64).sqrt() < thresh).count();
    assert_eq!(rep["index"].as_u64().unwrap() as usize, count);
}
