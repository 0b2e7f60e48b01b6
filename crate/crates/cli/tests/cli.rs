use std::path::Path;
use std::process::{Command, Output};

fn nearfar(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nearfar"))
        .current_dir(dir)
        .env_remove("NEARFAR_SEED")
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn generate(dir: &Path, n: &str) {
    let o = nearfar(dir, &["generate", "--n", n, "--beta", "0.5", "--seed", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn are_prints_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = nearfar(dir.path(), &["are", "--iota1", ".5", "--iota2", ".6"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "1.44");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("are.json")).unwrap())
            .unwrap();
    for key in ["theo", "sim", "se", "reps", "seed"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert!((report["theo"].as_f64().unwrap() - 1.44).abs() < 1e-12);
}

#[test]
fn invalid_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = nearfar(dir.path(), &["match", "--cohort", "missing.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).starts_with("nearfar matching-engine:"),
        "{}",
        stderr(&o)
    );

    let o = nearfar(dir.path(), &["are", "--iota1", "1.5", "--iota2", "0.6"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("efficiency-calculator"));

    std::fs::write(
        dir.path().join("bad.csv"),
        "id,z,d,r,x1\na,1,1,oops,0\nb,2,0,1,1\n",
    )
    .unwrap();
    let o = nearfar(dir.path(), &["match", "--cohort", "bad.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn unreachable_zone_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "60");
    let o = nearfar(
        dir.path(),
        &[
            "sensitivity",
            "--cohort",
            "cohort.csv",
            "--tau",
            "0.9",
            "--lambda1",
            "1",
            "--delta-sup",
            "0.1",
            "--k",
            "5",
        ],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("nearfar sensitivity-engine:"));
}

#[test]
fn undefined_estimate_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let rows: String = (0..8)
        .map(|i| format!("s{i},{i},1,{},{}\n", i % 3, (i * 7) % 5))
        .collect();
    std::fs::write(dir.path().join("flat.csv"), format!("id,z,d,r,x1\n{rows}")).unwrap();
    let o = nearfar(dir.path(), &["estimate", "--cohort", "flat.csv"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("nearfar randomization-inference:"));
}

#[test]
fn run_record_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path(), "80");
    let o = nearfar(
        dir.path(),
        &["strengthen", "--cohort", "cohort.csv", "--caliper", "0.5"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let first = std::fs::read(dir.path().join("design.csv")).unwrap();
    let record = std::fs::read_to_string(dir.path().join("strengthen.run.json")).unwrap();
    assert!(record.contains("\"sinks\": 40"));
    let o = nearfar(
        dir.path(),
        &[
            "--out-dir",
            "replay",
            "--config",
            "strengthen.run.json",
            "strengthen",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        first,
        std::fs::read(dir.path().join("replay/design.csv")).unwrap()
    );
}

#[test]
fn generate_honours_seed_flag_over_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str, seed: Option<&str>, env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_nearfar"));
        cmd.current_dir(dir.path())
            .env_remove("NEARFAR_SEED")
            .args(["--out-dir", out, "generate", "--n", "20"]);
        if let Some(s) = seed {
            cmd.args(["--seed", s]);
        }
        if let Some(e) = env {
            cmd.env("NEARFAR_SEED", e);
        }
        assert!(cmd.output().unwrap().status.success());
        std::fs::read(dir.path().join(out).join("cohort.csv")).unwrap()
    };
    let flag = run("a", Some("9"), Some("1"));
    assert_eq!(flag, run("b", Some("9"), None));
    assert_eq!(run("c", None, Some("1")), run("d", Some("1"), None));
    assert_ne!(flag, run("e", None, Some("1")));
}

#[test]
fn simulate_table2_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["one", "two"] {
        let o = nearfar(
            dir.path(),
            &["--out-dir", out, "simulate", "table2", "--reps", "20"],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for file in ["table2.csv", "simulate_table2.run.json"] {
        let a = std::fs::read(dir.path().join("one").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("two").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs");
    }
}

#[test]
fn power_config_writes_the_table_shape() {
    let dir = tempfile::tempdir().unwrap();
    let study = r#"{
        "n": 40,
        "scenarios": [{"beta": 0.5, "xi": 0.1, "delta_sup": 0.1, "tau": 0.01, "lambda1": 1.0}],
        "designs": [
            {"name": "M0", "spec": {"encouragement": "higher_dose"}},
            {"name": "M1", "spec": {"encouragement": "higher_dose", "caliper_lambda": 1.4, "sinks": 20}}
        ],
        "reps": 3,
        "delta_points": 3,
        "options": {"k": 3, "seed": 5, "sigma": {"method": "known", "sigma": 1.0}}
    }"#;
    std::fs::write(dir.path().join("table3_row1.json"), study).unwrap();
    let o = nearfar(dir.path(), &["--config", "table3_row1.json", "power"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("power.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("xi,lambda1,design,power,bias,sd"));
    let designs: Vec<&str> = lines.map(|l| l.split(',').nth(2).unwrap()).collect();
    assert_eq!(designs, ["M0", "M1"]);
    let input = std::fs::read_to_string(dir.path().join("table3_row1.json")).unwrap();
    assert_eq!(input, study, "the config file must not be rewritten");
}

#[test]
fn are_and_samplesize_export_csv_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = nearfar(
        dir.path(),
        &["are", "--iota1", ".5", "--iota2", ".6", "--reps", "40"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("are.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "power,iota_a_weak,iota_a_strong,iota_weak,iota_strong,n_weak,n_strong,sim,se,theo"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let (nw, ns): (f64, f64) = (row[5].parse().unwrap(), row[6].parse().unwrap());
    assert!((row[7].parse::<f64>().unwrap() - nw / ns).abs() < 1e-12);
    assert!((row[9].parse::<f64>().unwrap() - 1.44).abs() < 1e-12);

    let o = nearfar(
        dir.path(),
        &["samplesize", "--iota-c", ".6", "--reps", "40"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("samplesize.json")).unwrap())
            .unwrap();
    let text = std::fs::read_to_string(dir.path().join("samplesize.csv")).unwrap();
    assert!(text.starts_with("power_target,iota_c,iota_a,pairs,power,se,chosen\n"));
    let chosen: Vec<&str> = text.lines().filter(|l| l.ends_with(",true")).collect();
    assert!(!chosen.is_empty());
    let pairs = report["pairs"].as_u64().unwrap().to_string();
    assert!(chosen
        .iter()
        .all(|l| l.split(',').nth(3) == Some(pairs.as_str())));
}
