use std::path::Path;
use std::process::Command as Proc;

use ivory_cli::svg::Shape;
use ivory_cli::*;
use serde_json::{json, Value};

const ALL: [Command; 10] = [
    Command::IvoryCheck,
    Command::BilliardOrbit,
    Command::PonceletGrid,
    Command::InscribedCircles,
    Command::Geodesic,
    Command::StaeckelIvory,
    Command::StaeckelBilliard,
    Command::PotentialScan,
    Command::NewtonCheck,
    Command::ArnoldCheck,
];

fn seeded() -> ExperimentConfig {
    ExperimentConfig {
        seed: Some(11),
        samples: Some(20_000),
        ..Default::default()
    }
}

fn with_params(params: Value) -> ExperimentConfig {
    ExperimentConfig { params, ..seeded() }
}

fn check<'a>(r: &'a RunReport, name: &str) -> &'a Check {
    r.checks
        .iter()
        .find(|c| c.name == name)
        .unwrap_or_else(|| panic!("no check {name}"))
}

fn ivory(args: &[&str], dir: &Path) -> std::process::Output {
    Proc::new(env!("CARGO_BIN_EXE_ivory"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .unwrap()
}

#[test]
fn every_command_passes_on_defaults() {
    for c in ALL {
        let out = run(c, &seeded()).unwrap_or_else(|e| panic!("{}: {e}", c.name()));
        assert!(out.report.pass, "{}: {:?}", c.name(), out.report.checks);
        assert!(!out.report.checks.is_empty());
        assert_eq!(out.report.artifacts.last().unwrap(), "report.json");
        assert_eq!(out.files.len(), out.report.artifacts.len());
    }
}

#[test]
fn ivory_check_example_row() {
    let out = run(Command::IvoryCheck, &ExperimentConfig::default()).unwrap();
    let csv = &out.files[0].1;
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "e1,e2,h1,h2,ac,bd,spread,caustic_ac,caustic_bd"
    );
    let row: Vec<f64> = lines
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert!((row[4] - row[5]).abs() < 1e-9 && row[6] < 1e-9);
    assert!(lines.next().is_none());
}

#[test]
fn csv_floats_round_trip() {
    for v in [
        0.1,
        1.0 / 3.0,
        -2.5e-300,
        6.02214076e23,
        f64::MIN_POSITIVE,
        1.0 - f64::EPSILON,
    ] {
        let s = format_float(v);
        assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        let digits = s
            .split('e')
            .next()
            .unwrap()
            .chars()
            .filter(|c| c.is_ascii_digit())
            .count();
        assert_eq!(digits, 17, "{s}");
    }
    let mut t = Table::new(["name", "value"]);
    t.push(vec!["a,b".into(), 0.5.into()]);
    assert_eq!(
        t.to_csv().unwrap(),
        "name,value\r\n\"a,b\",5.0000000000000000e-1\r\n"
    );
}

#[test]
fn json_table_format() {
    let cfg = ExperimentConfig {
        format: Some(Format::Json),
        ..Default::default()
    };
    let out = run(Command::PotentialScan, &cfg).unwrap();
    assert_eq!(out.files[0].0, "potential-scan.json");
    let rows: Vec<Value> = serde_json::from_str(&out.files[0].1).unwrap();
    assert_eq!(rows.len(), 100);
    assert!(rows[0]["r"].is_f64());
}

#[test]
fn unknown_keys_are_rejected() {
    assert!(matches!(
        ExperimentConfig::from_json(r#"{"sead": 3}"#),
        Err(CliError::Config(_))
    ));
    let cfg =
        ExperimentConfig::from_json(r#"{"params": {"a": [4, 1], "quadrilateral": []}}"#).unwrap();
    assert!(matches!(
        run(Command::IvoryCheck, &cfg),
        Err(CliError::Config(_))
    ));
    let cfg = with_params(json!({"points": [{"x": [1, 0, 0, 0], "expect": "zero", "weight": 2}]}));
    assert!(matches!(
        run(Command::NewtonCheck, &cfg),
        Err(CliError::Config(_))
    ));
}

#[test]
fn zero_samples_is_a_config_error() {
    let cfg = ExperimentConfig {
        samples: Some(0),
        ..seeded()
    };
    for c in [Command::NewtonCheck, Command::ArnoldCheck] {
        let e = run(c, &cfg).unwrap_err();
        assert!(matches!(e, CliError::Config(_)), "{e}");
        assert_eq!(e.exit_code(), 2);
    }
}

#[test]
fn stochastic_commands_need_a_seed() {
    let cfg = ExperimentConfig {
        samples: Some(1000),
        ..Default::default()
    };
    assert!(matches!(
        run(Command::NewtonCheck, &cfg),
        Err(CliError::Config(_))
    ));
    let cfg = ExperimentConfig::from_json(r#"{"params": {"random": 5}}"#).unwrap();
    assert!(matches!(
        run(Command::IvoryCheck, &cfg),
        Err(CliError::Config(_))
    ));
    let cfg = ExperimentConfig {
        seed: Some(1),
        ..cfg
    };
    let out = run(Command::IvoryCheck, &cfg).unwrap();
    assert_eq!(out.files[0].1.lines().count(), 7);
}

#[test]
fn config_must_match_the_command() {
    let cfg = ExperimentConfig {
        command: Some(Command::Geodesic),
        ..Default::default()
    };
    assert!(matches!(
        run(Command::IvoryCheck, &cfg),
        Err(CliError::Config(_))
    ));
    assert!(run(Command::Geodesic, &cfg).is_ok());
    let bad = ExperimentConfig {
        tolerance: Some(-1.0),
        ..Default::default()
    };
    assert!(matches!(
        run(Command::Geodesic, &bad),
        Err(CliError::Config(_))
    ));
}

#[test]
fn report_echo_reproduces_the_run() {
    let cfg = with_params(json!({"random": 4}));
    let first = run(Command::InscribedCircles, &cfg).unwrap();
    let echo: ExperimentConfig =
        ExperimentConfig::from_json(&serde_json::to_string(&first.report.config).unwrap()).unwrap();
    let again = run(Command::InscribedCircles, &echo).unwrap();
    assert_eq!(first.files, again.files);
    assert_eq!(
        first.report.config.params["configurations"]
            .as_array()
            .unwrap()
            .len(),
        5
    );
}

#[test]
fn tolerance_override_can_fail_checks() {
    let cfg = ExperimentConfig {
        tolerance: Some(1e-30),
        ..Default::default()
    };
    let out = run(Command::IvoryCheck, &cfg).unwrap();
    assert!(!out.report.pass);
    assert!(out.report.checks.iter().all(|c| c.tolerance == 1e-30));
}

#[test]
fn geodesic_oracles() {
    let out = run(Command::Geodesic, &ExperimentConfig::default()).unwrap();
    assert!(check(&out.report, "oracle_gap").measured < 1e-8);
    let cfg = with_params(
        json!({"metric": "sphere_conical", "params": [3, 2, 1], "from": [2.2, 1.3], "to": [2.7, 1.8]}),
    );
    let out = run(Command::Geodesic, &cfg).unwrap();
    assert!(out.report.pass, "{:?}", out.report.checks);
    let cfg = with_params(json!({"metric": "torus", "params": []}));
    assert!(matches!(
        run(Command::Geodesic, &cfg),
        Err(CliError::Config(_))
    ));
}

#[test]
fn staeckel_ivory_in_three_dimensions() {
    let cfg = with_params(json!({
        "metric": "ellipsoidal_R3", "params": [4, 2, 1],
        "lower": [2.5, 1.3, -0.5], "upper": [3.2, 1.7, 0.4]
    }));
    let out = run(Command::StaeckelIvory, &cfg).unwrap();
    assert!(out.report.pass, "{:?}", out.report.checks);
    assert_eq!(out.files[0].1.lines().count(), 5);
}

#[test]
fn hyperbolic_exterior_matches_a_point_mass() {
    let x = [2.0f64.cosh(), 2.0f64.sinh(), 0.0, 0.0];
    let cfg = ExperimentConfig {
        samples: Some(100_000),
        ..with_params(json!({
            "geometry": "hyperbolic", "dim": 3, "a": [0.25, 0.25, 0.25], "b": 1.0,
            "points": [{"x": x, "expect": "point-mass"}]
        }))
    };
    let out = run(Command::NewtonCheck, &cfg).unwrap();
    assert!(
        check(&out.report, "point_mass_0").measured < 0.01,
        "{:?}",
        out.report.checks
    );
}

#[test]
fn fermat_quartic_is_reported_non_hyperbolic() {
    let mut c = vec![0.0; 15];
    c[0] = -1.0;
    c[10] = 1.0;
    c[14] = 1.0;
    let cfg =
        with_params(json!({"coefficients": c, "points": [{"x": [0.0, 0.0], "hyperbolic": false}]}));
    let out = run(Command::ArnoldCheck, &cfg).unwrap();
    assert!(out.report.pass);
    assert_eq!(out.report.checks.len(), 1);
    let cfg =
        with_params(json!({"coefficients": c, "points": [{"x": [0.0, 0.0], "hyperbolic": true}]}));
    assert!(!run(Command::ArnoldCheck, &cfg).unwrap().report.pass);
}

#[test]
fn quartic_layer_between_two_ovals() {
    // (x² + 4y² − 1)(x²/4 + y²/2 + 0.15xy − 1)
    let inner = [-1.0, 0.0, 0.0, 1.0, 0.0, 4.0];
    let outer = [-1.0, 0.0, 0.0, 0.25, 0.15, 0.5];
    let mut c = vec![0.0; 15];
    let deg = |k: usize| match k {
        0 => (0, 0),
        1 => (1, 0),
        2 => (0, 1),
        3 => (2, 0),
        4 => (1, 1),
        _ => (0, 2),
    };
    let index = |i: usize, j: usize| {
        let d = i + j;
        d * (d + 1) / 2 + j
    };
    for (a, ca) in inner.iter().enumerate() {
        for (b, cb) in outer.iter().enumerate() {
            let (da, db) = (deg(a), deg(b));
            c[index(da.0 + db.0, da.1 + db.1)] += ca * cb;
        }
    }
    let cfg = with_params(
        json!({"coefficients": c, "charge": {"layer": 0.05}, "points": [{"x": [0.1, 0.05], "hyperbolic": true}]}),
    );
    let out = run(Command::ArnoldCheck, &cfg).unwrap();
    assert!(out.report.pass, "{:?}", out.report.checks);
}

#[test]
fn empty_scene_is_rejected() {
    assert_eq!(render_svg(&Scene::default()), Err(SvgError::EmptyScene));
    let mut s = Scene::new("dots");
    s.dots(vec![], "#000");
    assert_eq!(render_svg(&s), Err(SvgError::EmptyScene));
    s.dots(vec![[f64::NAN, 0.0]], "#000");
    assert_eq!(render_svg(&s), Err(SvgError::NonFinite));
}

#[test]
fn view_box_has_five_percent_margin() {
    let mut s = Scene::new("box");
    s.polyline(vec![[0.0, 0.0], [10.0, 0.0], [10.0, 4.0]], false, "black");
    let svg = render_svg(&s).unwrap();
    assert!(svg.contains("viewBox=\"-0.5 -4.2 11 4.4\""), "{svg}");
    assert!(svg.starts_with("<?xml") && svg.contains("version=\"1.1\""));
    assert_eq!(svg, render_svg(&s).unwrap());
}

#[test]
fn figures_contain_their_elements() {
    let out = run(Command::InscribedCircles, &ExperimentConfig::default()).unwrap();
    let svg = &out.files.iter().find(|f| f.0.ends_with(".svg")).unwrap().1;
    assert!(svg.contains("<circle cx") && svg.contains("<polygon"));
    let out = run(Command::BilliardOrbit, &ExperimentConfig::default()).unwrap();
    assert_eq!(out.report.config.params["orbits"], 200);
    let svg = &out.files.iter().find(|f| f.0.ends_with(".svg")).unwrap().1;
    assert_eq!(svg.matches("<circle").count(), 200 * 100);
    let none = ExperimentConfig {
        svg: Some(false),
        ..Default::default()
    };
    assert!(run(Command::PonceletGrid, &none)
        .unwrap()
        .files
        .iter()
        .all(|f| !f.0.ends_with(".svg")));
}

#[test]
fn scene_bounds_include_circles() {
    let mut s = Scene::new("c");
    s.circle([1.0, 1.0], 2.0, "red");
    assert_eq!(s.bounds().unwrap(), [-1.0, -1.0, 3.0, 3.0]);
    assert!(matches!(s.shapes[0], Shape::Circle { .. }));
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = ivory(&["ivory-check"], dir.path());
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).starts_with("PASS diagonal_spread"));
    assert!(String::from_utf8_lossy(&ok.stderr).contains("timing compute"));
    for f in ["ivory-check.csv", "ivory-check.svg", "report.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let fail = tempfile::tempdir().unwrap();
    let r = ivory(&["ivory-check", "--tolerance", "1e-30"], fail.path());
    assert_eq!(r.status.code(), Some(1));
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(fail.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["pass"], false);
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"samples": 0, "seed": 1}"#).unwrap();
    let r = ivory(
        &["newton-check", "--config", cfg.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("config error"));
    let r = ivory(&["no-such-command"], dir.path());
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"samples": 20000, "params": {"points": [{"x": [1, 0, 0, 0], "expect": "zero"}]}}"#,
    )
    .unwrap();
    let runs = [dir.path().join("a"), dir.path().join("b")];
    for out in &runs {
        let r = ivory(
            &[
                "newton-check",
                "--config",
                cfg.to_str().unwrap(),
                "--seed",
                "5",
                "--format",
                "json",
            ],
            out,
        );
        assert_eq!(
            r.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&r.stderr)
        );
    }
    for f in ["newton-check.json", "report.json"] {
        assert_eq!(
            std::fs::read(runs[0].join(f)).unwrap(),
            std::fs::read(runs[1].join(f)).unwrap(),
            "{f}"
        );
    }
}
