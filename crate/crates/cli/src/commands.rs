use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use qoctl_core::analytic::{synthesize_heat_protocol, synthesize_time_protocol, Protocol};
use qoctl_core::dynamics::{clamp_eps, integrate, run_summary};
use qoctl_core::optimizer::{multistart_search, reachability_scan, write_reach_csv, Problem};
use qoctl_core::pmp::{conserved_k, verify_trajectory, Tolerances};
use qoctl_core::{BlochState, ControlSchedule, CostateBloch, LambdaCoefficients, Objective, Trajectory};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::{InputError, VerificationFailed};

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Relative gap below which certification counts the analytic cost as unbeaten.
const CERTIFY_MARGIN: f64 = 1e-3;

fn out_path(cfg: &RunConfig, name: &str) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(&cfg.output.dir).with_context(|| format!("creating {}", cfg.output.dir.display()))?;
    Ok(cfg.output.dir.join(name))
}

fn create(cfg: &RunConfig, name: &str) -> anyhow::Result<BufWriter<File>> {
    let p = out_path(cfg, name)?;
    Ok(BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?))
}

/// Writes `body` with the resolved config and tool version attached.
fn write_json(cfg: &RunConfig, name: &str, mut body: Value) -> anyhow::Result<()> {
    body["version"] = json!(VERSION);
    body["config"] = serde_json::to_value(cfg)?;
    let p = out_path(cfg, name)?;
    fs::write(&p, serde_json::to_string_pretty(&body)? + "\n").with_context(|| format!("writing {}", p.display()))?;
    Ok(())
}

fn write_trajectory(cfg: &RunConfig, name: &str, t: &Trajectory) -> anyhow::Result<()> {
    t.write_csv(create(cfg, name)?)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct HamiltonianStats {
    k: f64,
    stdev: f64,
    max_deviation: f64,
}

fn hamiltonian_stats(t: &Trajectory, objective: Objective) -> anyhow::Result<Option<HamiltonianStats>> {
    if t.costates.is_none() {
        return Ok(None);
    }
    let h = conserved_k(t, objective)?;
    Ok(Some(HamiltonianStats { k: h.k, stdev: h.stdev, max_deviation: h.max_deviation }))
}

/// Parses a schedule CSV: header with `t`, `eps` and optional generator
/// columns `l0`..`l3`, uniformly spaced rows.
pub fn read_schedule(path: &Path, cfg: &RunConfig) -> anyhow::Result<ControlSchedule> {
    let text = fs::read_to_string(path).map_err(|e| InputError::new(format!("cannot read {}: {e}", path.display())))?;
    parse_schedule(&text, cfg).map_err(|e| InputError::new(format!("{}: {e}", path.display())).into())
}

fn parse_schedule(text: &str, cfg: &RunConfig) -> Result<ControlSchedule, String> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = rd.headers().map_err(|e| format!("line 1: {e}"))?.clone();
    let col = |n: &str| headers.iter().position(|h| h == n);
    let t_col = col("t").ok_or("line 1: missing column 't'")?;
    let e_col = col("eps").ok_or("line 1: missing column 'eps'")?;
    let l_cols = ["l0", "l1", "l2", "l3"].map(col);
    if let Some(h) = headers.iter().find(|h| !["t", "eps", "l0", "l1", "l2", "l3"].contains(h)) {
        return Err(format!("line 1: unknown column '{h}'"));
    }
    let (mut times, mut eps, mut lam) = (vec![], vec![], vec![]);
    for rec in rd.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let num = |j: usize, name: &str| -> Result<f64, String> {
            let s = rec.get(j).unwrap_or("");
            s.parse::<f64>().map_err(|_| format!("line {line}: column '{name}': cannot parse '{s}'"))
        };
        let t = num(t_col, "t")?;
        if !t.is_finite() {
            return Err(format!("line {line}: time must be finite"));
        }
        times.push((t, line));
        eps.push(num(e_col, "eps")?);
        let mut l = [0.0; 4];
        for (k, c) in l_cols.iter().enumerate() {
            if let Some(j) = c {
                l[k] = num(*j, ["l0", "l1", "l2", "l3"][k])?;
            }
        }
        lam.push(LambdaCoefficients::new(l[0], l[1], l[2], l[3]));
    }
    if times.len() < 2 {
        return Err("schedule needs at least two rows".into());
    }
    let dt = times[1].0 - times[0].0;
    if !(dt > 0.0) {
        return Err(format!("line {}: times must increase", times[1].1));
    }
    for (k, (t, line)) in times.iter().enumerate() {
        let expect = times[0].0 + k as f64 * dt;
        if (t - expect).abs() > 1e-9 * dt.max(expect.abs()) {
            return Err(format!("line {line}: grid is not uniform (t = {t}, expected {expect})"));
        }
    }
    let eps = eps.into_iter().map(|e| clamp_eps(e, cfg.eps_max())).collect();
    let sched = ControlSchedule::new(times[0].0, dt, eps, lam, vec![], cfg.numerics.interpolation)
        .map_err(|e| e.to_string())?;
    Ok(refine(&sched, cfg.step()))
}

/// Subdivides each schedule step so the integrator step is at most `step`.
fn refine(s: &ControlSchedule, step: f64) -> ControlSchedule {
    let m = (s.dt / step * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    if m == 1 {
        return s.clone();
    }
    let n = s.n_steps();
    let (mut eps, mut lam) = (Vec::with_capacity(n * m + 1), Vec::with_capacity(n * m + 1));
    for i in 0..n {
        for j in 0..m {
            let f = j as f64 / m as f64;
            eps.push(s.eps_at(i, f));
            lam.push(s.lambda_at(i, f));
        }
    }
    eps.push(s.eps[n]);
    lam.push(s.lambda[n]);
    ControlSchedule::new(s.t0, s.dt / m as f64, eps, lam, vec![], s.interp).expect("refined grid is valid")
}

pub fn simulate(cfg: &RunConfig, schedule: &Path) -> anyhow::Result<()> {
    let model = cfg.dissipator()?;
    let sched = read_schedule(schedule, cfg)?;
    let q0 = cfg.problem.costate.map(|[x, y, z]| CostateBloch::new(x, y, z));
    let objective = cfg.problem.objective;
    let t = integrate(&sched, cfg.initial(), q0, &model, objective)?;
    write_trajectory(cfg, "trajectory.csv", &t)?;
    let body = json!({
        "command": "simulate",
        "samples": t.len(),
        "final_state": t.final_state(),
        "heat": t.total_heat(),
        "hamiltonian": hamiltonian_stats(&t, objective)?,
    });
    write_json(cfg, "summary.json", body)
}

fn synthesize_protocol(cfg: &RunConfig) -> anyhow::Result<Protocol> {
    let model = cfg.dissipator()?;
    let opts = cfg.synthesis();
    Ok(match cfg.problem.objective {
        Objective::Heat => synthesize_heat_protocol(&model, cfg.initial(), cfg.target(), cfg.problem.horizon, &opts)?,
        Objective::Time => synthesize_time_protocol(&model, cfg.initial(), cfg.target(), &opts)?,
    })
}

/// Writes an infeasibility certificate before passing the error on.
fn synthesize_or_certify_infeasible(cfg: &RunConfig) -> anyhow::Result<Protocol> {
    match synthesize_protocol(cfg) {
        Err(e) => {
            if let Some(qoctl_core::Error::Infeasible { reason, min_horizon }) = e.downcast_ref::<qoctl_core::Error>() {
                let body =
                    json!({ "command": "synthesize", "feasible": false, "reason": reason, "min_horizon": min_horizon });
                write_json(cfg, "infeasible.json", body)?;
            }
            Err(e)
        }
        ok => ok,
    }
}

/// Cost achieved by simulating the protocol: heat, or the time at which the
/// simulated state reaches the target's norm.
fn achieved_cost(p: &Protocol, t: &Trajectory) -> anyhow::Result<f64> {
    Ok(match p.objective {
        Objective::Heat => t.total_heat(),
        Objective::Time => {
            let sched = p.schedule()?;
            let r = run_summary(&sched, BlochState::from_vec(p.initial)?, &p.model, Some(p.target.norm()))?;
            r.arrival.unwrap_or(sched.duration())
        }
    })
}

pub fn synthesize(cfg: &RunConfig) -> anyhow::Result<()> {
    let p = synthesize_or_certify_infeasible(cfg)?;
    let t = p.simulate()?;
    write_trajectory(cfg, "trajectory.csv", &t)?;
    let achieved = achieved_cost(&p, &t)?;
    let scale = p.predicted_cost.abs().max(1e-12);
    let body = json!({
        "command": "synthesize",
        "feasible": true,
        "protocol": p,
        "predicted_cost": p.predicted_cost,
        "achieved_cost": achieved,
        "relative_error": (achieved - p.predicted_cost).abs() / scale,
        "final_state": t.final_state(),
        "target_miss": t.final_state().max_abs_diff(p.target),
    });
    write_json(cfg, "protocol.json", body)
}

pub fn verify(cfg: &RunConfig, trajectory: &Path) -> anyhow::Result<()> {
    let model = cfg.dissipator()?;
    let file =
        File::open(trajectory).map_err(|e| InputError::new(format!("cannot read {}: {e}", trajectory.display())))?;
    let t = Trajectory::read_csv(file, model).with_context(|| format!("reading {}", trajectory.display()))?;
    let n = t.len();
    // end samples may sit on quenches, where the conditions do not apply
    let range = if n > 2 { 1..n - 1 } else { 0..n };
    let rep = verify_trajectory(&t, cfg.problem.objective, cfg.problem.k, range, &Tolerances::default())?;

    let mut lines = Vec::with_capacity(rep.samples.len() + 1);
    for (i, (time, r)) in rep.samples.iter().enumerate() {
        lines.push(serde_json::to_string(&json!({
            "sample": i + if n > 2 { 1 } else { 0 },
            "t": time,
            "pass": r.verdict,
            "worst_relative": r.worst_relative(),
            "residuals": r.residuals,
            "probe": r.probe,
        }))?);
    }
    let summary = json!({
        "summary": {
            "verdict": if rep.verdict { "pass" } else { "fail" },
            "objective": rep.objective,
            "k": rep.k,
            "hamiltonian": { "k": rep.hamiltonian.k, "stdev": rep.hamiltonian.stdev, "max_deviation": rep.hamiltonian.max_deviation },
            "worst_sample": rep.worst_sample,
            "worst_relative": rep.worst_relative,
            "samples": rep.samples.len(),
        },
        "version": VERSION,
        "config": cfg,
    });
    lines.push(serde_json::to_string(&summary)?);
    let p = out_path(cfg, "report.jsonl")?;
    fs::write(&p, lines.join("\n") + "\n").with_context(|| format!("writing {}", p.display()))?;
    if !rep.verdict {
        bail!(VerificationFailed(format!(
            "worst relative residual {:.3e} at sample {} (t = {})",
            rep.worst_relative, rep.worst_sample, t.times[rep.worst_sample]
        )));
    }
    Ok(())
}

pub fn certify(cfg: &RunConfig) -> anyhow::Result<()> {
    let search = cfg.search();
    if search.restarts == 0 {
        return write_json(cfg, "certify.json", json!({ "command": "certify", "verdict": "skipped" }));
    }
    let model = cfg.dissipator()?;
    let analytic = synthesize_or_certify_infeasible(cfg)?.predicted_cost;
    let problem = Problem::new(model, cfg.problem.objective, cfg.initial(), cfg.target(), cfg.problem.horizon)?;
    let r = multistart_search(&problem, &search)?;
    r.write_trace_csv(create(cfg, "trace.csv")?)?;
    let margin = (r.best_cost - analytic) / analytic.abs().max(1e-12);
    let verdict = if !r.accepted {
        "inconclusive"
    } else if margin >= -CERTIFY_MARGIN {
        "analytic not beaten"
    } else {
        "analytic beaten"
    };
    let body = json!({
        "command": "certify",
        "verdict": verdict,
        "analytic_cost": analytic,
        "best_cost": r.best_cost,
        "margin": margin,
        "target_miss": r.target_miss,
        "accepted": r.accepted,
        "seed": r.seed,
        "best_restart": r.best_restart,
        "evaluations": r.evaluations,
        "restarts": r.restarts,
        "best": r.best,
    });
    write_json(cfg, "certify.json", body)
}

pub fn reach(cfg: &RunConfig) -> anyhow::Result<()> {
    let model = cfg.dissipator()?;
    let points = reachability_scan(&model, cfg.initial(), cfg.problem.horizon, &cfg.reach_targets(), &cfg.synthesis())?;
    write_reach_csv(&points, create(cfg, "reach.csv")?)?;
    let body = json!({
        "command": "reach",
        "reachable": points.iter().filter(|p| p.reachable).count(),
        "points": points.iter().map(|p| json!({
            "target_az": p.target_az,
            "min_time": if p.min_time.is_finite() { json!(p.min_time) } else { Value::Null },
            "reachable": p.reachable,
        })).collect::<Vec<_>>(),
    });
    write_json(cfg, "reach.json", body)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> RunConfig {
        let mut c = RunConfig::default();
        c.numerics.step = Some(0.1);
        c.numerics.eps_max = Some(50.0);
        c
    }

    #[test]
    fn schedule_parsing() {
        let s = parse_schedule("t,eps,l2\n0,1,0.5\n0.1,2,0.5\n0.2,inf,0\n", &cfg()).unwrap();
        assert_eq!(s.n_steps(), 2);
        assert_eq!(s.eps, vec![1.0, 2.0, 50.0]);
        assert_eq!(s.lambda[0].l2, 0.5);
    }

    #[test]
    fn schedule_errors_carry_lines() {
        let e = parse_schedule("t,eps\n0,1\n0.1,x\n", &cfg()).unwrap_err();
        assert!(e.contains("line 3"), "{e}");
        let e = parse_schedule("t,eps\n0,1\n0.1,1\n0.3,1\n", &cfg()).unwrap_err();
        assert!(e.contains("line 4") && e.contains("uniform"), "{e}");
        assert!(parse_schedule("t,gap\n0,1\n", &cfg()).unwrap_err().contains("eps"));
        assert!(parse_schedule("t,eps\n0,1\n", &cfg()).is_err());
        assert!(parse_schedule("", &cfg()).is_err());
    }

    #[test]
    fn refinement_preserves_hold_values() {
        let s = parse_schedule("t,eps\n0,1\n0.5,3\n1.0,3\n", &cfg()).unwrap();
        assert_eq!(s.n_steps(), 10);
        assert!((s.dt - 0.1).abs() < 1e-15);
        assert_eq!(&s.eps[..6], &[1.0, 1.0, 1.0, 1.0, 1.0, 3.0]);
    }
}
