use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nscurve::arrivals::CompoundPoissonModel;
use nscurve::bounds::BoundKind;
use nscurve::config::ExperimentConfig;
use nscurve::formats::*;
use nscurve::markov::{backlog_quantile_series, MarkovConfig};
use nscurve::minplus::transient_latency_rate;
use nscurve::sim::{simulate_path, ArrivalSpec, Scenario};
use nscurve::service::SleepServiceModel;
use nscurve::trace::{trace_from_path, write_trace, TraceRole};
use nscurve::TimeGrid;

fn nscurve(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nscurve"));
    cmd.current_dir(dir).args(args);
    for (k, _) in std::env::vars() {
        if k.starts_with("NSCURVE_") {
            cmd.env_remove(k);
        }
    }
    cmd.envs(env.iter().copied());
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read<T>(path: &Path, f: impl FnOnce(fs::File) -> nscurve::Result<T>) -> T {
    f(fs::File::open(path).unwrap_or_else(|e| panic!("{}: {e}", path.display())))
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

const SMALL: &str = "\
[grid]
horizon = 60

[run]
n_paths = 300
write_paths = true
write_distribution = true

[service]
latency = 20

[estimate]
t = 50
validation_paths = 50

[bound]
delay = true
";

#[test]
fn markov_quantiles_match_library() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[grid]\nhorizon = 400\n[arrival]\nalpha = 0.09\nbeta = 0.3\n[service]\nlatency = 100\n[run]\nepsilon = 0.01\n";
    fs::write(dir.path().join("m.toml"), cfg).unwrap();
    let o = nscurve(dir.path(), &["--config", "m.toml", "--out", "res", "markov"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let got = read(&dir.path().join("res/quantiles.csv"), |f| read_quantile_csv(f, 0.01));
    let mc = MarkovConfig::new(CompoundPoissonModel::new(0.09, 0.3).unwrap(), 100);
    let want = backlog_quantile_series(&mc, 400, 0.01).unwrap();
    assert_eq!(got, want);
    // quiet before the wake-up ramp, bounded afterwards
    assert_eq!(got.values[0], 0.0);
    assert!(got.values[100] > got.values[400]);
}

#[test]
fn zero_paths_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[grid]\nhorizon = 10\n\n[run]\nn_paths = 0\n").unwrap();
    let o = nscurve(dir.path(), &["--config", "c.toml", "simulate"], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("c.toml:5:"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn env_override_errors_name_the_variable() {
    let dir = tempfile::tempdir().unwrap();
    let o = nscurve(dir.path(), &["markov"], &[("NSCURVE_ARRIVAL_ALPHA", "1.5")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("NSCURVE_ARRIVAL_ALPHA"), "{}", stderr(&o));

    let o = nscurve(
        dir.path(),
        &["--out", "o", "markov"],
        &[("NSCURVE_GRID_HORIZON", "30"), ("NSCURVE_SERVICE_LATENCY", "10"), ("NSCURVE_ESTIMATE_T", "30")],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("o/config.toml")).unwrap();
    let cfg = ExperimentConfig::from_toml(&text, None, Vec::new()).unwrap();
    assert_eq!(cfg.grid.horizon, 30);
    assert_eq!(cfg.service.latency, 10);
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(nscurve(dir.path(), &["bogus"], &[]).status.code(), Some(1));
    assert_eq!(nscurve(dir.path(), &[], &[]).status.code(), Some(1));
    assert_eq!(nscurve(dir.path(), &["--help"], &[]).status.code(), Some(0));
    assert_eq!(nscurve(dir.path(), &["--config", "missing.toml", "markov"], &[]).status.code(), Some(1));
    // markov is only exact for a fixed wake-up with unit rate
    let o = nscurve(dir.path(), &["markov"], &[("NSCURVE_SERVICE_KIND", "random_sleep")]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn minimal_probe_recovers_latency_rate_function() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[grid]\nhorizon = 150\n[service]\nkind = \"latency_rate\"\nrate = 1.0\nlatency = 20\n[estimate]\nt = 100\n";
    fs::write(dir.path().join("c.toml"), cfg).unwrap();
    let o = nscurve(dir.path(), &["--config", "c.toml", "estimate", "minimal-probe"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).lines().any(|l| l == "accuracy 0"), "{}", stdout(&o));
    let est = read(&dir.path().join("out/estimate.json"), read_estimate_json);
    assert_eq!(est.accuracy, Some(0.0));
    let s = transient_latency_rate(TimeGrid::slots(150).unwrap(), 1.0, 20).unwrap();
    let exact: Vec<f64> = (0..=100).map(|tau| s.get(tau, 100)).collect();
    assert_eq!(est.curve, exact);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), SMALL).unwrap();
    let env = [("NSCURVE_SERVICE_KIND", "random_sleep")];
    let snapshot = |out: &str| {
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir.path().join(out))
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    for args in [&["simulate"][..], &["estimate", "minimal-probe"], &["bound"]] {
        let run = |out: &str| {
            let mut a = vec!["--config", "c.toml", "--out", out, "--quiet"];
            a.extend_from_slice(args);
            let o = nscurve(dir.path(), &a, &env);
            assert!(o.status.success(), "{args:?}: {}", stderr(&o));
            assert!(stdout(&o).is_empty());
        };
        run("first");
        let first = snapshot("first");
        run("first");
        assert_eq!(first, snapshot("first"), "{args:?}");
    }
    // a different seed changes the sample paths
    let o = nscurve(dir.path(), &["--config", "c.toml", "--out", "other", "--seed", "7", "simulate"], &env);
    assert!(o.status.success());
    assert_ne!(
        fs::read(dir.path().join("first/paths.csv")).unwrap(),
        fs::read(dir.path().join("other/paths.csv")).unwrap()
    );
}

#[test]
fn trace_backlog_reproduces_simulated_backlog() {
    let dir = tempfile::tempdir().unwrap();
    let grid = TimeGrid::new(80, 0.002).unwrap();
    let sc = Scenario::new(
        grid,
        ArrivalSpec::CompoundPoisson(CompoundPoissonModel::new(0.2, 0.3).unwrap()),
        vec![SleepServiceModel::random_sleep(0.1, 0.5).unwrap()],
        1,
        11,
    )
    .unwrap();
    let path = simulate_path(&sc, 0).unwrap();
    for (name, p, role) in [
        ("a.csv", &path.arrivals, TraceRole::Arrival),
        ("d.csv", &path.departures, TraceRole::Departure),
    ] {
        let tr = trace_from_path(p, role).unwrap();
        write_trace(fs::File::create(dir.path().join(name)).unwrap(), &tr).unwrap();
    }
    let cfg = "[grid]\nhorizon = 80\nslot_width = 0.002\n[run]\nkind = \"trace\"\n[service]\nlatency = 20\n[estimate]\nt = 50\n[trace]\narrivals = \"a.csv\"\ndepartures = \"d.csv\"\n";
    fs::write(dir.path().join("t.toml"), cfg).unwrap();
    let o = nscurve(dir.path(), &["--config", "t.toml", "trace-backlog"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let recs = read(&dir.path().join("out/backlog.csv"), |f| read_paths_csv(f, 0.002));
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].backlog().unwrap(), path.backlog());

    // swapped roles violate causality
    let swapped = cfg.replace("\"a.csv\"", "\"x\"").replace("\"d.csv\"", "\"a.csv\"").replace("\"x\"", "\"d.csv\"");
    fs::write(dir.path().join("s.toml"), swapped).unwrap();
    let o = nscurve(dir.path(), &["--config", "s.toml", "trace-backlog"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("causality violation at slot"), "{}", stderr(&o));

    // model commands refuse a trace scenario
    let o = nscurve(dir.path(), &["--config", "t.toml", "simulate"], &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn every_artifact_reparses() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), SMALL).unwrap();
    let runs: [(&str, &[&str], &[(&str, &str)]); 7] = [
        ("markov", &["markov"], &[]),
        ("simulate", &["simulate"], &[("NSCURVE_SERVICE_KIND", "random_sleep")]),
        ("bound_random", &["bound"], &[("NSCURVE_SERVICE_KIND", "random_sleep")]),
        ("bound_fixed", &["bound"], &[]),
        ("scan", &["estimate", "rate-scan"], &[("NSCURVE_SERVICE_KIND", "random_sleep")]),
        ("minimal", &["estimate", "minimal-probe"], &[("NSCURVE_SERVICE_KIND", "random_sleep")]),
        ("figures", &["figures"], &[("NSCURVE_ESTIMATE_VALIDATION_PATHS", "0")]),
    ];
    let mut seen = 0;
    for (out, args, env) in runs {
        let mut a = vec!["--config", "c.toml", "--out", out];
        a.extend_from_slice(args);
        let o = nscurve(dir.path(), &a, env);
        assert!(o.status.success(), "{out}: {}", stderr(&o));
        for entry in fs::read_dir(dir.path().join(out)).unwrap() {
            let path = entry.unwrap().path();
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            match name.as_str() {
                "config.toml" => {
                    let text = fs::read_to_string(&path).unwrap();
                    ExperimentConfig::from_toml(&text, None, Vec::new()).unwrap();
                }
                "quantiles.csv" => drop(read(&path, |f| read_quantile_csv(f, 0.01))),
                "distribution.csv" => {
                    let d = read(&path, read_distribution_csv);
                    assert!(d.iter().all(|p| (p.iter().sum::<f64>() - 1.0).abs() < 1e-9));
                }
                "paths.csv" => assert_eq!(read(&path, |f| read_paths_csv(f, 1.0)).len(), 300),
                "backlog_bound.csv" => drop(read(&path, |f| read_bound_csv(f, BoundKind::Backlog, 1.0))),
                "delay_bound.csv" => drop(read(&path, |f| read_bound_csv(f, BoundKind::Delay, 1.0))),
                "envelope.csv" => assert_eq!(read(&path, read_envelope_csv).len(), 61),
                "service_curve.csv" => drop(read(&path, |f| read_bivariate_csv(f, 1.0))),
                "estimate.json" | "burst.json" => drop(read(&path, read_estimate_json)),
                "relaxation.json" => drop(read(&path, |f| {
                    Ok(serde_json::from_reader::<_, nscurve::bounds::Relaxation>(f)?)
                })),
                "validation.json" => {
                    let v: serde_json::Value = read(&path, |f| Ok(serde_json::from_reader(f)?));
                    assert!(v["coverage"].as_f64().unwrap() <= 1.0);
                }
                n if n.ends_with(".csv") => {
                    let t = read(&path, read_table_csv);
                    assert!(!t.rows.is_empty(), "{n}");
                }
                other => panic!("unexpected artifact {other}"),
            }
            seen += 1;
        }
    }
    assert!(seen > 20, "{seen}");
}
