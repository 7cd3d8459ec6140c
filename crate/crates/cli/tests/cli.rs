use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn qoctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qoctl")).args(args).output().expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn rows(path: &Path) -> Vec<Vec<f64>> {
    let mut rd = csv::Reader::from_path(path).unwrap();
    rd.records()
        .map(|r| {
            r.unwrap()
                .iter()
                .map(|s| match s {
                    "" => f64::NAN,
                    "true" => 1.0,
                    "false" => 0.0,
                    _ => s.parse().unwrap(),
                })
                .collect()
        })
        .collect()
}

fn problem_config(objective: &str, initial: f64, target: f64, horizon: f64, extra: &str) -> String {
    format!(
        "[model]\nkind = \"gibbs\"\n[problem]\nobjective = \"{objective}\"\ninitial = [0.0, 0.0, {initial}]\n\
         target = [0.0, 0.0, {target}]\nhorizon = {horizon}\n{extra}"
    )
}

#[test]
fn simulate_matches_golden() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = data("relax.toml");
    let sched = data("relax_schedule.csv");
    let o =
        qoctl(&["--config", cfg.to_str().unwrap(), "--out", out, "simulate", "--schedule", sched.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let got = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(got, fs::read_to_string(data("relax_golden.csv")).unwrap());

    // the golden file against closed-form relaxation at beta eps = 1
    let aeq = -(0.5f64).tanh();
    for r in rows(&data("relax_golden.csv")) {
        let t = r[0];
        let az = aeq + (0.5 - aeq) * (-t).exp();
        assert!((r[3] - az).abs() < 1e-6, "t = {t}");
        assert!(((r[1] * r[1] + r[2] * r[2]).sqrt() - 0.3 * (-t).exp()).abs() < 1e-6);
        assert!((r[8] - 0.5 * (0.5 - az)).abs() < 1e-6);
    }
    let s = json(dir.path().join("summary.json"));
    assert_eq!(s["samples"], 21);
    assert!(s["config"]["model"]["kind"] == "gibbs" && s["version"].is_string());
}

#[test]
fn equilibrium_start_stays_flat() {
    let dir = TempDir::new().unwrap();
    let aeq = -(0.5f64).tanh();
    let cfg = write(&dir, "c.toml", &problem_config("heat", aeq, aeq, 1.0, "[numerics]\nstep = 0.01\n"));
    let sched = write(&dir, "s.csv", "t,eps\n0,1\n0.5,1\n1.0,1\n");
    let out = dir.path().join("o");
    let o = qoctl(&["--config", &cfg, "--out", out.to_str().unwrap(), "simulate", "--schedule", &sched]);
    assert!(o.status.success());
    let r = rows(&out.join("trajectory.csv"));
    assert_eq!(r.len(), 101);
    assert!(r.iter().all(|row| (row[3] - aeq).abs() < 1e-15 && row[8].abs() < 1e-15));
}

#[test]
fn malformed_input_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = data("relax.toml");
    let bad = write(&dir, "bad.csv", "t,eps\n0,1\n0.1,oops\n");
    let o = qoctl(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "simulate",
        "--schedule",
        &bad,
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    let bad_cfg = write(&dir, "bad.toml", "[model]\ngamma = -1.0\n");
    let o = qoctl(&["--config", &bad_cfg, "reach"]);
    assert_eq!(o.status.code(), Some(2));
    let o = qoctl(&["--config", &bad_cfg, "--model", "quantum", "reach"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn synthesize_time_example() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.toml", &problem_config("time", -0.2, -0.8, 2.0, ""));
    let o = qoctl(&["--config", &cfg, "--out", dir.path().to_str().unwrap(), "synthesize"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p = json(dir.path().join("protocol.json"));
    let predicted = p["predicted_cost"].as_f64().unwrap();
    assert!((predicted - 4f64.ln()).abs() < 1e-9);
    assert!((p["achieved_cost"].as_f64().unwrap() - predicted).abs() / predicted < 0.01);
    assert!(dir.path().join("trajectory.csv").exists());

    // identical boundary states: nothing to do
    let cfg = write(&dir, "id.toml", &problem_config("time", -0.3, -0.3, 2.0, ""));
    let out = dir.path().join("id");
    assert!(qoctl(&["--config", &cfg, "--out", out.to_str().unwrap(), "synthesize"]).status.success());
    assert_eq!(json(out.join("protocol.json"))["predicted_cost"].as_f64(), Some(0.0));
}

#[test]
fn infeasible_heat_horizon_exits_3() {
    let dir = TempDir::new().unwrap();
    // reaching -0.8 from -0.2 needs at least ln 4
    let cfg = write(&dir, "c.toml", &problem_config("heat", -0.2, -0.8, 1.0, ""));
    let o = qoctl(&["--config", &cfg, "--out", dir.path().to_str().unwrap(), "synthesize"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let c = json(dir.path().join("infeasible.json"));
    assert_eq!(c["feasible"], false);
    let min = c["min_horizon"].as_f64().unwrap();
    assert!((min - 4f64.ln()).abs() < 1e-3, "{min}");
}

#[test]
fn verify_pipeline() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let cfg = write(&dir, "c.toml", &problem_config("heat", -0.2, -0.6, 2.0, ""));
    assert!(qoctl(&["--config", &cfg, "--out", d.to_str().unwrap(), "synthesize"]).status.success());
    let traj = d.join("trajectory.csv");
    let vout = d.join("v");
    let o =
        qoctl(&["--config", &cfg, "--out", vout.to_str().unwrap(), "verify", "--trajectory", traj.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(vout.join("report.jsonl")).unwrap();
    let last: Value = serde_json::from_str(report.lines().last().unwrap()).unwrap();
    assert_eq!(last["summary"]["verdict"], "pass");

    // bump a_z at one interior sample
    let text = fs::read_to_string(&traj).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let k = lines.len() / 2;
    let mut cells: Vec<String> = lines[k].split(',').map(String::from).collect();
    cells[3] = format!("{:e}", cells[3].parse::<f64>().unwrap() + 0.05);
    lines[k] = cells.join(",");
    let bumped = write(&dir, "bumped.csv", &(lines.join("\n") + "\n"));
    let o = qoctl(&["--config", &cfg, "--out", vout.to_str().unwrap(), "verify", "--trajectory", &bumped]);
    assert_eq!(o.status.code(), Some(1));
    let report = fs::read_to_string(vout.join("report.jsonl")).unwrap();
    let last: Value = serde_json::from_str(report.lines().last().unwrap()).unwrap();
    assert_eq!(last["summary"]["verdict"], "fail");
    // data row k is sample k - 1
    assert_eq!(last["summary"]["worst_sample"].as_u64(), Some(k as u64 - 1));
    let failing = report.lines().filter(|l| l.contains("\"pass\":false")).count();
    assert!(failing <= 3, "{failing} failing samples");

    let empty = write(&dir, "empty.csv", "");
    let o = qoctl(&["--config", &cfg, "verify", "--trajectory", &empty]);
    assert_eq!(o.status.code(), Some(2));
    let golden = data("relax_golden.csv");
    let o =
        qoctl(&["--config", &cfg, "--out", vout.to_str().unwrap(), "verify", "--trajectory", golden.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "missing costate columns");
}

#[test]
fn certify_structure_and_determinism() {
    let dir = TempDir::new().unwrap();
    let small = "[optimizer]\nrestarts = 3\nsegments = 6\niterations = 15\n";
    for (objective, target) in [("heat", -0.6), ("time", -0.8)] {
        let cfg = write(&dir, "c.toml", &problem_config(objective, -0.2, target, 2.0, small));
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        for out in [&a, &b] {
            let o = qoctl(&["--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "5", "certify"]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        }
        let (ja, jb) = (json(a.join("certify.json")), json(b.join("certify.json")));
        assert_eq!(ja["best_cost"], jb["best_cost"]);
        assert_eq!(fs::read(a.join("trace.csv")).unwrap(), fs::read(b.join("trace.csv")).unwrap());
        assert_eq!(ja["seed"], 5);
        let verdict = ja["verdict"].as_str().unwrap();
        assert!(["analytic not beaten", "inconclusive"].contains(&verdict), "{verdict}");
        assert!(ja["margin"].as_f64().unwrap() >= -1e-3);
    }
    let cfg = write(&dir, "z.toml", &problem_config("heat", -0.2, -0.6, 2.0, "[optimizer]\nrestarts = 0\n"));
    let out = dir.path().join("z");
    assert!(qoctl(&["--config", &cfg, "--out", out.to_str().unwrap(), "certify"]).status.success());
    assert_eq!(json(out.join("certify.json"))["verdict"], "skipped");
}

#[test]
fn reach_scan() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.toml", &problem_config("time", -0.2, -0.6, 1.0, ""));
    let o = qoctl(&["--config", &cfg, "--out", dir.path().to_str().unwrap(), "reach"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&dir.path().join("reach.csv"));
    assert_eq!(r.len(), 41);
    // a_z = -0.6 needs ln 2 < 1; -0.9 needs ln 8 > 1
    let find = |z: f64| r.iter().find(|row| (row[0] - z).abs() < 1e-12).unwrap().clone();
    assert!((find(-0.6)[2] - 2f64.ln()).abs() < 1e-6 && find(-0.6)[3] == 1.0);
    assert_eq!(find(-0.9)[3], 0.0);
    assert!(json(dir.path().join("reach.json"))["config"].is_object());
}
