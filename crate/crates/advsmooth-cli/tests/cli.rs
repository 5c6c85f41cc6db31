//! End-to-end tests of the `advsmooth` binary: spawn the real executable
//! against JSON configs and check exit codes, stderr field paths, artifact
//! sets, manifest hashes and rerun determinism.

use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use advsmooth_cli::configs::{
    load_json, EntropyConfig, ProbeConfig, SurfaceConfig, VerifyConfig,
};
use advsmooth_cli::manifest::sha256_hex;
use advsmooth_core::surface::LossVariant;
use advsmooth_core::train::{ExperimentConfig, OptimizerKind};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_advsmooth"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_vec_pretty(cfg).unwrap()).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn shipped_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn single_example_data() -> Value {
    json!({ "examples": [{ "x": [-1.0, 1.0], "y": 1 }] })
}

fn surface_job(name: &str, model_type: &str, variant: Value) -> Value {
    json!({
        "name": name,
        "model": { "kind": { "type": model_type }, "input_dim": 2 },
        "grid": {
            "axis1": { "lo": -2.0, "hi": 2.0, "points": 9 },
            "axis2": { "lo": -2.0, "hi": 2.0, "points": 9 },
            "variant": variant
        }
    })
}

fn small_train_config() -> Value {
    json!({
        "schema_version": 1,
        "name": "sgd_noawp",
        "model": { "kind": { "type": "linear_logistic" }, "input_dim": 2 },
        "data": { "n_per_split": 16, "input_dim": 2, "seed": 20240 },
        "attack": {
            "norm": "inf", "epsilon": 0.1, "pgd_steps": 3, "eval_pgd_steps": 5,
            "pgd_step_size": null, "random_init": true
        },
        "optimizer": {
            "kind": "sgd", "lr": 0.1, "momentum": 0.9, "weight_decay": 0.0005,
            "ensgd": {
                "gamma": 0.03, "eta": 1.0, "eta_prime": 0.2, "eps_langevin": 0.0001,
                "langevin_iters": 5, "alpha": 0.75, "variance_floor": 0.001,
                "order": "first"
            }
        },
        "awp": null,
        "epochs": 3,
        "batch_size": 8,
        "lr_milestones": [30, 40],
        "lr_decay": 0.1,
        "seed": 1234
    })
}

#[test]
fn unknown_subcommands_and_missing_configs_exit_with_code_two() {
    let out = run(&["frobnicate"]);
    assert_eq!(code(&out), 2);

    let out = run(&["surface", "--config", "/no/such/file.json"]);
    assert_eq!(code(&out), 2);
    let msg = stderr_of(&out);
    assert!(msg.contains("/no/such/file.json"), "{msg}");
    assert!(msg.contains("config error"), "{msg}");
}

#[test]
fn config_errors_name_the_offending_field_path() {
    let dir = tempfile::tempdir().unwrap();

    // Wrong JSON type deep inside the document.
    let cfg = json!({
        "schema_version": 1,
        "data": single_example_data(),
        "jobs": [surface_job("a", "linear_logistic", json!({ "variant": "clean" }))]
    });
    let mut bad_type = cfg.clone();
    bad_type["jobs"][0]["grid"]["axis1"]["hi"] = json!("wide");
    let path = write_config(dir.path(), "bad_type.json", &bad_type);
    let out = run(&["surface", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(
        stderr_of(&out).contains("jobs[0].grid.axis1.hi"),
        "{}",
        stderr_of(&out)
    );

    // Well-typed but out-of-domain value, caught by validation.
    let mut bad_domain = cfg.clone();
    bad_domain["jobs"][0]["grid"]["axis1"]["points"] = json!(1);
    let path = write_config(dir.path(), "bad_domain.json", &bad_domain);
    let out = run(&["surface", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(
        stderr_of(&out).contains("jobs[0].grid"),
        "{}",
        stderr_of(&out)
    );

    // Unknown top-level key.
    let mut extra = cfg.clone();
    extra["bogus"] = json!(3);
    let path = write_config(dir.path(), "extra.json", &extra);
    let out = run(&["surface", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr_of(&out).contains("bogus"), "{}", stderr_of(&out));

    // Version mismatch.
    let mut versioned = cfg;
    versioned["schema_version"] = json!(99);
    let path = write_config(dir.path(), "versioned.json", &versioned);
    let out = run(&["surface", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(
        stderr_of(&out).contains("schema_version"),
        "{}",
        stderr_of(&out)
    );
}

#[test]
fn surface_writes_the_requested_grids_and_a_hash_verifiable_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let mut job = surface_job("clean", "linear_logistic", json!({ "variant": "clean" }));
    job["formats"] = json!(["csv", "json"]);
    let cfg = json!({
        "schema_version": 1,
        "data": single_example_data(),
        "seed": 2,
        "jobs": [
            job,
            surface_job(
                "linf",
                "linear_logistic",
                json!({ "variant": "adv_linf", "epsilon": 0.6 })
            )
        ]
    });
    let cfg_path = write_config(dir.path(), "surface.json", &cfg);

    let out = run(&[
        "surface",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));

    // CSV: header plus one row per node, four columns with gradient norms.
    let csv = std::fs::read_to_string(out_dir.join("clean.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 9 * 9);
    assert_eq!(lines[0], "theta1,theta2,value,grad_norm");
    for line in &lines[1..] {
        assert_eq!(line.split(',').count(), 4, "{line}");
        for field in line.split(',') {
            field.parse::<f64>().expect("numeric CSV field");
        }
    }

    // JSON export round-trips through the library reader.
    let grid =
        advsmooth_core::surface::import_grid_json(&out_dir.join("clean.json")).unwrap();
    assert_eq!((grid.n1(), grid.n2()), (9, 9));
    assert_eq!(grid.values.len(), 81);
    assert!(grid.values.iter().all(|v| v.is_finite()));

    // Manifest echoes the config and hashes every artifact as written.
    let manifest = read_json(&out_dir.join("manifest.json"));
    assert_eq!(manifest["subcommand"], "surface");
    assert_eq!(manifest["seed_override"], Value::Null);
    assert_eq!(
        manifest["config_sha256"].as_str().unwrap(),
        sha256_hex(&std::fs::read(&cfg_path).unwrap())
    );
    assert_eq!(manifest["config"]["jobs"][1]["name"], "linf");
    let artifacts = manifest["artifacts"].as_array().unwrap();
    let names: Vec<&str> = artifacts
        .iter()
        .map(|a| a["file"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["clean.csv", "clean.json", "linf.csv"]);
    for artifact in artifacts {
        let bytes = std::fs::read(out_dir.join(artifact["file"].as_str().unwrap())).unwrap();
        assert_eq!(artifact["sha256"].as_str().unwrap(), sha256_hex(&bytes));
        assert_eq!(artifact["bytes"].as_u64().unwrap(), bytes.len() as u64);
    }
}

#[test]
fn the_portrait_batch_produces_six_raw_and_two_smoothed_grids() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let entropy = |base: Value| {
        json!({
            "variant": "entropy",
            "gamma": 0.5,
            "quad": { "half_width": 6.0, "points_per_axis": 24 },
            "base": base
        })
    };
    let cfg = json!({
        "schema_version": 1,
        "data": single_example_data(),
        "seed": 2,
        "jobs": [
            surface_job("linear_clean", "linear_logistic", json!({ "variant": "clean" })),
            surface_job("linear_adv_l2", "linear_logistic",
                        json!({ "variant": "adv_l2", "epsilon": 0.6 })),
            surface_job("linear_adv_linf", "linear_logistic",
                        json!({ "variant": "adv_linf", "epsilon": 0.6 })),
            surface_job("swish_clean", "swish_logistic", json!({ "variant": "clean" })),
            surface_job("swish_adv_l2_pgd", "swish_logistic",
                        json!({ "variant": "adv_l2_pgd", "epsilon": 0.6, "steps": 5 })),
            surface_job("swish_adv_linf_pgd", "swish_logistic",
                        json!({ "variant": "adv_linf_pgd", "epsilon": 0.6, "steps": 5 })),
            surface_job("entropy_adv_l2", "linear_logistic",
                        entropy(json!({ "variant": "adv_l2", "epsilon": 0.6 }))),
            surface_job("entropy_adv_linf", "linear_logistic",
                        entropy(json!({ "variant": "adv_linf", "epsilon": 0.6 }))),
        ]
    });
    let cfg_path = write_config(dir.path(), "portrait.json", &cfg);

    let out = run(&[
        "surface",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));

    let mut files: Vec<String> = std::fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(
        files,
        [
            "entropy_adv_l2.csv",
            "entropy_adv_linf.csv",
            "linear_adv_l2.csv",
            "linear_adv_linf.csv",
            "linear_clean.csv",
            "manifest.json",
            "swish_adv_l2_pgd.csv",
            "swish_adv_linf_pgd.csv",
            "swish_clean.csv",
        ]
    );
    for file in &files {
        if file.ends_with(".csv") {
            let text = std::fs::read_to_string(out_dir.join(file)).unwrap();
            assert_eq!(text.lines().count(), 1 + 9 * 9, "{file}");
        }
    }

    // The sampled values should be smooth where smoothing or smooth losses
    // are in play and visibly kinked for the closed-form robust losses.
    let table = stdout_of(&out);
    let line_for = |name: &str| {
        table
            .lines()
            .find(|l| l.starts_with(&format!("surface {name}:")))
            .unwrap_or_else(|| panic!("no summary line for {name} in:\n{table}"))
            .to_string()
    };
    for smooth in ["linear_clean", "swish_clean", "entropy_adv_l2", "entropy_adv_linf"] {
        assert!(line_for(smooth).contains(" 0 kink"), "{}", line_for(smooth));
    }
    for kinked in ["linear_adv_l2", "linear_adv_linf"] {
        assert!(!line_for(kinked).contains(" 0 kink"), "{}", line_for(kinked));
    }
}

#[test]
fn surface_rejects_closed_form_attacks_on_nonlinear_models() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "schema_version": 1,
        "data": single_example_data(),
        "jobs": [surface_job(
            "bad",
            "swish_logistic",
            json!({ "variant": "adv_l2", "epsilon": 0.6 })
        )]
    });
    let path = write_config(dir.path(), "bad.json", &cfg);
    let out = run(&[
        "surface",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn shipped_configs_parse_validate_and_keep_their_shapes() {
    let (surfaces, _) =
        load_json::<SurfaceConfig>(&shipped_config("surfaces_default.json")).unwrap();
    surfaces.validate().unwrap();
    let names: Vec<&str> = surfaces.jobs.iter().map(|j| j.name.as_str()).collect();
    assert_eq!(
        names,
        [
            "linear_clean",
            "linear_adv_l2",
            "linear_adv_linf",
            "swish_clean",
            "swish_adv_l2_pgd",
            "swish_adv_linf_pgd",
            "entropy_adv_l2",
            "entropy_adv_linf",
        ]
    );
    for job in &surfaces.jobs {
        for axis in [&job.grid.axis1, &job.grid.axis2] {
            assert_eq!(axis.points, 81, "{}", job.name);
            assert_eq!((axis.lo, axis.hi), (-2.0, 2.0), "{}", job.name);
        }
        match &job.grid.variant {
            LossVariant::Clean => {}
            LossVariant::AdvL2 { epsilon } | LossVariant::AdvLinf { epsilon } => {
                assert_eq!(*epsilon, 0.6, "{}", job.name);
            }
            LossVariant::AdvL2Pgd { epsilon, .. } | LossVariant::AdvLinfPgd { epsilon, .. } => {
                assert_eq!(*epsilon, 0.6, "{}", job.name);
            }
            LossVariant::Entropy { gamma, base, .. } => {
                assert_eq!(*gamma, 0.5, "{}", job.name);
                match base.as_ref() {
                    LossVariant::AdvL2 { epsilon } | LossVariant::AdvLinf { epsilon } => {
                        assert_eq!(*epsilon, 0.6, "{}", job.name);
                    }
                    other => panic!("unexpected smoothed base {other:?}"),
                }
            }
        }
    }

    let (probe, _) = load_json::<ProbeConfig>(&shipped_config("probe_default.json")).unwrap();
    probe.validate().unwrap();
    assert_eq!(probe.ball.epsilon, 0.6);

    let (entropy, _) =
        load_json::<EntropyConfig>(&shipped_config("entropy_default.json")).unwrap();
    entropy.validate().unwrap();
    assert_eq!(entropy.gamma, 0.5);
    assert!(entropy.thetas.len() >= 3);

    let (verify, _) = load_json::<VerifyConfig>(&shipped_config("verify_lemmas.json")).unwrap();
    verify.validate().unwrap();
    assert_eq!(verify.suites.len(), 3);

    // The shipped training configs are exactly the desk-scale recipes.
    for (file, kind, with_awp) in [
        ("train_sgd.json", OptimizerKind::Sgd, false),
        ("train_sgd_awp.json", OptimizerKind::Sgd, true),
        ("train_ensgd.json", OptimizerKind::Ensgd, false),
        ("train_ensgd2.json", OptimizerKind::Ensgd2, false),
    ] {
        let (cfg, _) = load_json::<ExperimentConfig>(&shipped_config(file)).unwrap();
        cfg.validate().unwrap();
        assert_eq!(
            serde_json::to_value(&cfg).unwrap(),
            serde_json::to_value(ExperimentConfig::desk(kind, with_awp)).unwrap(),
            "{file} drifted from the desk recipe"
        );
    }
}

#[test]
fn entropy_tabulation_is_deterministic_and_rejects_sampled_bases() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "schema_version": 1,
        "model": { "kind": { "type": "linear_logistic" }, "input_dim": 2 },
        "data": single_example_data(),
        "base": { "variant": "adv_linf", "epsilon": 0.6 },
        "gamma": 0.5,
        "quad": { "half_width": 6.0, "points_per_axis": 32 },
        "thetas": [[0.0, 0.0], [1.0, -1.0]]
    });
    let cfg_path = write_config(dir.path(), "entropy.json", &cfg);

    let mut tables = Vec::new();
    for sub in ["a", "b"] {
        let out_dir = dir.path().join(sub);
        let out = run(&[
            "entropy",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));
        tables.push(std::fs::read(out_dir.join("entropy_table.json")).unwrap());
    }
    assert_eq!(tables[0], tables[1], "reruns must be bitwise identical");

    let table: Value = serde_json::from_slice(&tables[0]).unwrap();
    let rows = table["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert!(row["value"].as_f64().unwrap().is_finite());
        let h = row["hessian"].as_array().unwrap();
        assert_eq!(h[0][1], h[1][0], "Hessian must be symmetric");
        assert!(row["sigma1_bound"].as_f64().unwrap() >= 0.0);
    }

    let mut bad = cfg;
    bad["base"] = json!({ "variant": "adv_linf_pgd", "epsilon": 0.6, "steps": 5 });
    let bad_path = write_config(dir.path(), "bad.json", &bad);
    let out = run(&[
        "entropy",
        "--config",
        bad_path.to_str().unwrap(),
        "--out",
        dir.path().join("c").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr_of(&out).contains("base"), "{}", stderr_of(&out));
}

#[test]
fn quadrature_collapse_exits_with_the_numeric_failure_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "schema_version": 1,
        "model": { "kind": { "type": "linear_logistic" }, "input_dim": 2 },
        "data": { "examples": [{ "x": [1e308, -1e308], "y": -1 }] },
        "base": { "variant": "clean" },
        "gamma": 0.5,
        "quad": { "half_width": 6.0, "points_per_axis": 16 },
        "thetas": [[1.0, 1.0]]
    });
    let path = write_config(dir.path(), "overflow.json", &cfg);
    let out = run(&[
        "entropy",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "stderr: {}", stderr_of(&out));
    let msg = stderr_of(&out);
    assert!(msg.contains("numeric failure"), "{msg}");
    assert!(msg.contains("local_entropy_exact"), "{msg}");
}

#[test]
fn probe_writes_a_report_with_finite_constants() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = json!({
        "schema_version": 1,
        "model": { "kind": { "type": "linear_logistic" }, "input_dim": 2 },
        "data": { "synthetic": { "n_per_split": 20, "input_dim": 2, "seed": 213 } },
        "theta_region": {
            "lo": [-2.0, -2.0],
            "hi": [2.0, 2.0],
            "predicate": { "kind": "norm_at_least", "theta_min": 1.0 }
        },
        "ball": { "p": "2", "epsilon": 0.6 },
        "pgd": { "steps": 10 },
        "reference_theta": [1.2, -0.9],
        "n_samples": 200,
        "min_separation": 0.01,
        "sharpness_radius": 0.1,
        "seed": 7
    });
    let path = write_config(dir.path(), "probe.json", &cfg);
    let out = run(&[
        "probe",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));

    let report = read_json(&out_dir.join("probe_report.json"));
    let constants = &report["constants"]["constants"];
    for key in ["c_theta", "c_theta_theta", "c_theta_x"] {
        let v = constants[key].as_f64().unwrap();
        assert!(v.is_finite() && v > 0.0, "{key} = {v}");
    }
    assert!(report["sigma1"]["sigma1"].as_f64().unwrap() >= 0.0);
    assert!(report["sharpness"]["exact"].as_f64().unwrap().is_finite());
}

#[test]
fn train_writes_metrics_and_checkpoint_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), "train.json", &small_train_config());

    let mut metric_lines = Vec::new();
    let mut checkpoints = Vec::new();
    for sub in ["a", "b"] {
        let out_dir = dir.path().join(sub);
        let out = run(&[
            "train",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));

        let metrics = std::fs::read_to_string(out_dir.join("metrics.jsonl")).unwrap();
        let lines: Vec<Value> = metrics
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 3, "one JSONL line per epoch");
        metric_lines.push(lines);
        checkpoints.push(std::fs::read(out_dir.join("checkpoint.json")).unwrap());
    }

    // Identical runs up to wall-clock time.
    for (a, b) in metric_lines[0].iter().zip(&metric_lines[1]) {
        let mut a = a.clone();
        let mut b = b.clone();
        assert!(a.as_object_mut().unwrap().remove("wall_time_ms").is_some());
        assert!(b.as_object_mut().unwrap().remove("wall_time_ms").is_some());
        assert_eq!(a, b);
    }
    assert_eq!(checkpoints[0], checkpoints[1]);

    let checkpoint: Value = serde_json::from_slice(&checkpoints[0]).unwrap();
    let epoch = checkpoint["epoch"].as_u64().unwrap();
    assert!((1..=3).contains(&epoch), "epoch {epoch}");
    assert_eq!(checkpoint["theta"].as_array().unwrap().len(), 2);
    assert_eq!(checkpoint["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn a_seed_override_is_applied_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), "train.json", &small_train_config());
    let out_dir = dir.path().join("out");
    let out = run(&[
        "train",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "77",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));

    let manifest = read_json(&out_dir.join("manifest.json"));
    assert_eq!(manifest["seed_override"], 77);
    assert_eq!(manifest["config"]["seed"], 77);
    // The hash still fingerprints the file as given, pre-override.
    assert_eq!(
        manifest["config_sha256"].as_str().unwrap(),
        sha256_hex(&std::fs::read(&cfg_path).unwrap())
    );
}

#[test]
fn verify_lemmas_prints_a_pass_table_and_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(
        dir.path(),
        "verify.json",
        &json!({ "schema_version": 1, "suites": ["attacks"] }),
    );
    let out_dir = dir.path().join("out");
    let out = run(&[
        "verify-lemmas",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));
    let table = stdout_of(&out);
    assert!(table.contains("5/5 checks passed"), "{table}");

    let report = read_json(&out_dir.join("verify_report.json"));
    let checks = report.as_array().unwrap();
    assert_eq!(checks.len(), 5);
    for check in checks {
        assert_eq!(check["suite"], "attacks", "{check}");
        assert_eq!(check["passed"], true, "{check}");
        assert!(check["measured"].as_f64().unwrap().is_finite());
    }
}

#[test]
fn verify_lemmas_rejects_a_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(
        dir.path(),
        "verify.json",
        &json!({ "schema_version": 1, "suites": ["attacks"] }),
    );
    let out = run(&[
        "verify-lemmas",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "--seed",
        "5",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr_of(&out).contains("--seed"), "{}", stderr_of(&out));
}
