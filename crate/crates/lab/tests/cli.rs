use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use meanfield_core::model::{risk_particles, Ensemble};
use meanfield_core::Sequential;
use meanfield_lab::config::{Experiment, RunConfig};
use meanfield_lab::exec::THREADS_ENV;
use meanfield_lab::output::read_csv;
use serde_json::Value;

fn lab(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_meanfield-lab"));
    cmd.args(args).env_remove(THREADS_ENV);
    if let Some(t) = threads {
        cmd.env(THREADS_ENV, t);
    }
    cmd.output().expect("binary runs")
}

fn out_flag(dir: &Path) -> String {
    format!("--io.out_dir={}", dir.display())
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = read_csv(&fs::read_to_string(path).unwrap()).unwrap();
    let k = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name} in {header:?}"));
    rows.iter().map(|r| r[k].parse().unwrap()).collect()
}

#[test]
fn empty_config_resolves_to_defaults_and_echoes_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("empty.json");
    fs::write(&cfg, "").unwrap();
    let out = tmp.path().join("out");
    let args = ["run-sgd", "--config", cfg.to_str().unwrap(), &out_flag(&out)];
    assert!(lab(&args, None).status.success());
    let first = fs::read(out.join("config.json")).unwrap();
    assert!(lab(&args, None).status.success());
    assert_eq!(first, fs::read(out.join("config.json")).unwrap());

    let echoed: Value = serde_json::from_slice(&first).unwrap();
    let mut expected = serde_json::to_value(RunConfig::defaults(Experiment::RunSgd)).unwrap();
    expected["io"]["out_dir"] = Value::String(out.display().to_string());
    assert_eq!(echoed, expected);
    let prov: Value = serde_json::from_slice(&fs::read(out.join("provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["io.out_dir"], "flag");
    assert_eq!(prov["dynamics.eps"], "default");
}

#[test]
fn flag_overrides_file_value() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    fs::write(&cfg, r#"{"dynamics": {"eps": 0.01, "T": 0.1}}"#).unwrap();
    let out = tmp.path().join("out");
    let o = lab(&["run-sgd", "--config", cfg.to_str().unwrap(), "--dynamics.eps=1e-3", &out_flag(&out)], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let echoed: Value = serde_json::from_slice(&fs::read(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed["dynamics"]["eps"], 1e-3);
    assert_eq!(echoed["dynamics"]["T"], 0.1);
    let prov: Value = serde_json::from_slice(&fs::read(out.join("provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["dynamics.eps"], "flag");
    assert_eq!(prov["dynamics.T"], "file");
}

#[test]
fn config_errors_exit_2_naming_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_flag(tmp.path());
    let cases: [(&[&str], &str); 5] = [
        (&["run-sgd", "--model.activation.t1=1", "--model.activation.t2=0"], "model.activation.t1 < t2"),
        (&["run-sgd", "--dynamics.epz=0.1"], "dynamics"),
        (&["run-sgd", "--dynamics.N=\"many\""], "dynamics.N"),
        (&["no-such-experiment"], "unknown experiment"),
        (&["gaussians-demo", "--dynamics.mode=general"], "fixed"),
    ];
    for (args, needle) in cases {
        let mut all = args.to_vec();
        all.push(&out);
        let o = lab(&all, None);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).contains(needle), "{args:?}: {}", stderr(&o));
    }
    let o = lab(&["run-sgd", &out], Some("zero"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(THREADS_ENV));
}

#[test]
fn unwritable_output_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("plain-file");
    fs::write(&file, "x").unwrap();
    let o = lab(&["run-sgd", "--dynamics.T=0.1", &out_flag(&file.join("sub"))], None);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let o = lab(&["run-sgd", "--config", tmp.path().join("missing.json").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn divergence_exits_4_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = lab(
        &[
            "run-sgd",
            "--model.data.d=2",
            "--dynamics.N=4",
            "--dynamics.eps=1",
            "--dynamics.T=400",
            "--dynamics.schedule.c=1e6",
            &out_flag(&out),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn full_artifact_set_and_row_count() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o =
        lab(&["run-sgd", "--dynamics.eps=0.01", "--dynamics.T=1.05", "--io.snapshot_every=10", &out_flag(&out)], None);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["config.json", "provenance.json", "trajectory.csv", "final_state.csv", "summary.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    // ⌊T/ε⌋ = 105 steps; snapshots at 0, 10, …, 100.
    assert_eq!(column(&out.join("trajectory.csv"), "step").len(), 105 / 10 + 1);
    let bytes = fs::read(out.join("trajectory.csv")).unwrap();
    assert!(!bytes.contains(&b'\r'));
}

#[test]
fn state_dump_reproduces_the_risk_bitwise() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = lab(&["run-sgd", "--dynamics.T=0.5", "--io.snapshot_every=50", &out_flag(&out)], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_csv(&fs::read_to_string(out.join("final_state.csv")).unwrap()).unwrap();
    assert_eq!(header[0], "a");
    let params: Vec<f64> = rows.iter().flatten().map(|v| v.parse().unwrap()).collect();

    let resolved = meanfield_lab::parse_and_validate(Experiment::RunSgd, Some(&out.join("config.json")), &[]).unwrap();
    let cfg = resolved.config;
    let ens = Ensemble::from_flat(header.len() - 1, params, cfg.mode(), cfg.dynamics.scale).unwrap();
    let act = cfg.activation().unwrap();
    let data = cfg.data().unwrap();
    let est = cfg.estimator(&data, &act).unwrap();
    let risk = risk_particles(&ens, &est, &act, &Sequential).unwrap();
    let stored = *column(&out.join("trajectory.csv"), "risk_particles").last().unwrap();
    assert_eq!(risk.to_bits(), stored.to_bits());
}

#[test]
fn outputs_do_not_depend_on_the_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let mut seen: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for threads in ["1", "4"] {
        let out = tmp.path().join(threads);
        let o = lab(
            &[
                "run-coupled",
                "--study.eps_grid=[0.125,0.0625]",
                "--study.seeds=2",
                "--dynamics.kinds=[\"sgd\",\"gd\",\"pd\"]",
                &out_flag(&out),
            ],
            Some(threads),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
            .collect();
        files.sort();
        seen.push(files);
    }
    assert_eq!(seen[0].len(), 5);
    assert_eq!(seen[0], seen[1]);
}
