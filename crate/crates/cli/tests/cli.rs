use std::fs;
use std::process::Command;

use heatlab::diagnostics::Verdict;
use heatlab::evolution::CSV_HEADER;
use heatlab::variational::{energy, EquationMode, Membership};
use heatlab::{assemble, build_grid, DomainSpec, OperatorSpec};
use heatlab_cli::config::RecipeName;
use heatlab_cli::run::{verify_rows, CONSTANTS_FILE, SUMMARY_FILE, TRAJECTORY_FILE};
use heatlab_cli::sweep::{sweep, Axis, SWEEP_FILE, SWEEP_HEADER};
use heatlab_cli::{make_initial_data, run_experiment, CliError, ExperimentConfig, Recipe, Summary};
use proptest::prelude::*;

fn small(dir: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig { n: 300, t_max: 8.0, out_dir: dir.to_path_buf(), ..Default::default() }
}

#[test]
fn recipes() {
    let mode = EquationMode::subcritical(3.0, 1).unwrap();
    let g = build_grid(DomainSpec::interval(-20.0, 20.0), 401).unwrap();
    let op = assemble(&OperatorSpec::dirichlet_laplacian(1), &g).unwrap();

    assert!(make_initial_data(&Recipe::Zero, &op, &mode, None).unwrap().is_zero());

    let gauss = Recipe::Gaussian { amplitude: 2.0, center: None, width: 1.5 };
    let u = make_initial_data(&gauss, &op, &mode, None).unwrap();
    assert_eq!(u.sup_norm(), 2.0);
    assert_eq!(u.values()[g.center_node()], 2.0);

    let u = make_initial_data(&Recipe::ScaledGroundState { lambda: 1.0 }, &op, &mode, None).unwrap();
    let r = energy(&u, &op, &mode).unwrap();
    assert!(r.nehari.abs() <= 1e-6 * r.energy_norm.powi(2), "{r:?}");

    let e = make_initial_data(&Recipe::Eigenmode { k: 2, amplitude: 3.0 }, &op, &mode, None).unwrap();
    assert!((e.sup_norm() - 3.0).abs() < 1e-12);
    assert!(e.values().iter().cloned().fold(f64::MIN, f64::max) == 3.0);

    let g3 = build_grid(DomainSpec::cube(-2.0, 2.0, 3), 6).unwrap();
    let op3 = assemble(&OperatorSpec::dirichlet_laplacian(3), &g3).unwrap();
    let critical = EquationMode::critical(3).unwrap();
    assert!(make_initial_data(&Recipe::ScaledGroundState { lambda: 1.0 }, &op3, &critical, None).is_err());
}

#[test]
fn minimal_run_writes_three_documents() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let summary = run_experiment(&cfg).unwrap();
    assert_eq!(summary.verdict.label(), "Dissipates");

    let csv = fs::read_to_string(dir.path().join(TRAJECTORY_FILE)).unwrap();
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));
    assert_eq!(csv.lines().count(), summary.samples + 1);

    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap()).unwrap();
    for key in ["verdict", "halt", "t_detect", "rate_stat", "concavity", "lemmas", "config"] {
        assert!(doc.get(key).is_some(), "summary lacks {key}");
    }
    let consts: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join(CONSTANTS_FILE)).unwrap()).unwrap();
    for key in ["S", "l", "y_c", "delta", "method"] {
        assert!(consts["constants"].get(key).is_some(), "constants lack {key}");
    }
}

#[test]
fn same_config_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { lambda: 1.2, ..small(dir.path()) };
    let read = || {
        [TRAJECTORY_FILE, SUMMARY_FILE, CONSTANTS_FILE].map(|f| fs::read(dir.path().join(f)).unwrap())
    };
    run_experiment(&cfg).unwrap();
    let first = read();
    run_experiment(&cfg).unwrap();
    assert!(first == read());
}

#[test]
fn summary_echoes_the_parsed_config() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "n = 256\nlambda = 0.7\nt_max = 2.0\nrel_tol = 1e-7\nconcavity_alpha = 0.2\nout_dir = {:?}\n",
        dir.path().to_str().unwrap()
    );
    let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
    run_experiment(&cfg).unwrap();
    let summary: Summary = serde_json::from_str(&fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(summary.config, cfg);
    assert_eq!(summary.config.n, 256);
    assert_eq!(summary.config.concavity_alpha, 0.2);
}

#[test]
fn invalid_configs_name_their_key() {
    let critical_2d = ExperimentConfig::from_toml_str("dim = 2\nregime = \"critical\"\n").unwrap();
    match critical_2d.validate() {
        Err(CliError::Config { key, message }) => {
            assert_eq!(key, "regime");
            assert!(message.contains("critical requires d >= 3"), "{message}");
        }
        other => panic!("{other:?}"),
    }
    let err = ExperimentConfig::from_toml_str("lamda = 1.0\n").unwrap_err();
    assert!(err.to_string().contains("lamda"));
    let bad_tol = ExperimentConfig { rel_tol: 2.0, ..Default::default() };
    assert!(matches!(bad_tol.validate(), Err(CliError::Config { key, .. }) if key == "rel_tol"));
    let bad_center = ExperimentConfig { center: Some(vec![0.0, 0.0]), ..Default::default() };
    assert!(matches!(bad_center.validate(), Err(CliError::Config { key, .. }) if key == "center"));
}

#[test]
fn axis_parsing() {
    let a = Axis::parse("lambda=0.5, 1.5,2").unwrap();
    assert_eq!(a.key, "lambda");
    assert_eq!(a.values, vec![toml::Value::Float(0.5), toml::Value::Float(1.5), toml::Value::Integer(2)]);
    let s = Axis::parse("scheme=exponential_euler").unwrap();
    assert_eq!(s.values, vec![toml::Value::String("exponential_euler".into())]);
    assert!(Axis::parse("lambda").is_err());
    assert!(Axis::parse("lambda=").unwrap().values.is_empty());
}

#[test]
fn lambda_sweep_reproduces_the_dichotomy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { n: 400, t_max: 10.0, ..small(dir.path()) };
    let rows = sweep(&cfg, &Axis::parse("lambda=0.5,0.9,1.1,1.5").unwrap()).unwrap();
    let labels: Vec<&str> = rows.iter().map(|r| r.verdict().unwrap().label()).collect();
    assert_eq!(labels, ["Dissipates", "Dissipates", "BlowsUp", "BlowsUp"]);
    let memberships: Vec<Membership> = rows.iter().map(|r| r.summary.as_ref().unwrap().initial.membership).collect();
    assert_eq!(memberships, [Membership::Mplus, Membership::Mplus, Membership::Mminus, Membership::Mminus]);
    let csv = fs::read_to_string(dir.path().join(SWEEP_FILE)).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(dir.path().join("lambda=1.1").join(SUMMARY_FILE).exists());
}

#[test]
fn sweep_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let rows = sweep(&cfg, &Axis::parse("lambda=").unwrap()).unwrap();
    assert!(rows.is_empty());
    assert_eq!(fs::read_to_string(dir.path().join(SWEEP_FILE)).unwrap(), format!("{SWEEP_HEADER}\n"));

    let rows = sweep(&cfg, &Axis::parse("lambda=0.5,oops,0.8").unwrap()).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].summary.is_some() && rows[2].summary.is_some());
    assert!(rows[1].summary.is_none());
    assert!(rows[1].error.as_deref().unwrap().contains("lambda"));
    let csv = fs::read_to_string(dir.path().join(SWEEP_FILE)).unwrap();
    assert!(csv.lines().nth(2).unwrap().starts_with("lambda,oops,failed"));
}

#[test]
fn verify_rows_for_the_dirichlet_line() {
    let cfg = ExperimentConfig { n: 400, ..Default::default() };
    let rows = verify_rows(&cfg).unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r.estimate.as_str()).collect();
    assert_eq!(names, ["L2->L2(shifted)", "L2->L4(shifted)", "L2->Linf(shifted)", "gaussian", "spacetime"]);
    assert!(rows.iter().all(|r| r.pass), "{rows:?}");
}

#[test]
fn binary_exit_status_tracks_tool_health() {
    let dir = tempfile::tempdir().unwrap();
    let exe = env!("CARGO_BIN_EXE_heatlab");
    let cfg = dir.path().join("blowup.toml");
    fs::write(&cfg, "n = 300\nlambda = 1.5\n").unwrap();
    let out = Command::new(exe).arg("solve").arg(&cfg).arg("--out").arg(dir.path().join("run")).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("BlowsUp"));
    let summary: Summary =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run").join(SUMMARY_FILE)).unwrap()).unwrap();
    assert!(matches!(summary.verdict, Verdict::BlowsUp { .. }));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "dim = 2\nregime = \"critical\"\n").unwrap();
    let out = Command::new(exe).arg("solve").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("regime"));

    let out = Command::new(exe).args(["sweep", cfg.to_str().unwrap(), "--axis", "lambda=", "--out"]).arg(dir.path().join("empty")).output().unwrap();
    assert!(out.status.success());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trips_through_toml(
        n in 2usize..5000,
        p in 1.01f64..9.0,
        lambda in -3.0f64..3.0,
        width in 0.01f64..10.0,
        rel_tol in 1e-12f64..0.5,
        seed in any::<u64>(),
        center in proptest::option::of(-5.0f64..5.0),
        gaussian in any::<bool>(),
    ) {
        let cfg = ExperimentConfig {
            n, p, lambda, width, rel_tol, seed,
            center: center.map(|c| vec![c]),
            initial: if gaussian { RecipeName::Gaussian } else { RecipeName::ScaledGroundState },
            ..Default::default()
        };
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
