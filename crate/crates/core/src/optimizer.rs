//! Brute-force search over piecewise-constant controls, used to check the
//! analytic protocols independently of their derivation.
//!
//! Each segment carries constant `eps` and generator coefficients
//! `(l1, l2, l3)` (the trace part `l0` only adds a global phase). The initial
//! quench is free, parameterized by the direction the state is rotated onto.
//! The terminal quench is free as well, so the boundary constraint reduces
//! to matching the Bloch norm: `miss = ||a(tau)| - |a_target||`.
//!
//! Segments are propagated exactly (matrix exponential of the affine Bloch
//! flow), so the search cannot exploit discretization error.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{synthesize_time_protocol, SynthesisOptions};
use crate::bloch::{aligning_rotation, BlochState, Vec3};
use crate::dissipators::{DissipatorKind, DissipatorModel};
use crate::dynamics::{ConstantFlow, ControlSchedule, Objective, Quench};
use crate::error::{domain, Error, Result};
use crate::frame::{Interpolation, LambdaCoefficients};

const PER_SEGMENT: usize = 4;
const QUENCH_PARAMS: usize = 2;
/// Substeps per segment when searching for the arrival time.
const ARRIVAL_SUBSTEPS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub eps: (f64, f64),
    /// Symmetric bound on each generator coefficient.
    pub lambda: f64,
}

impl Bounds {
    /// `|eps| <= 50/beta`, `|l_k| <= 10 gamma`. Models that forbid negative or
    /// zero gaps get `[0, 50/beta]` (fermionic) or `[0.05/beta, 50/beta]`
    /// (bosonic, whose rates diverge at zero gap).
    pub fn default_for(model: &DissipatorModel) -> Self {
        let e = 50.0 / model.beta;
        let eps = match model.kind {
            DissipatorKind::Gibbs => (-e, e),
            DissipatorKind::Fermionic => (0.0, e),
            DissipatorKind::Bosonic => (0.05 / model.beta, e),
        };
        Self { eps, lambda: 10.0 * model.gamma.max(f64::MIN_POSITIVE) }
    }

    fn range(&self, i: usize) -> (f64, f64) {
        match i % PER_SEGMENT {
            0 => self.eps,
            _ => (-self.lambda, self.lambda),
        }
    }
}

/// Control parameters of one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub n_segments: usize,
    /// `eps, l1, l2, l3` for each segment in order.
    pub values: Vec<f64>,
    /// Polar and azimuthal angle of the direction the initial quench rotates
    /// the state onto.
    pub quench: [f64; 2],
}

impl ParamVector {
    pub fn dim(&self) -> usize {
        self.values.len() + QUENCH_PARAMS
    }

    fn get(&self, i: usize) -> f64 {
        if i < self.values.len() {
            self.values[i]
        } else {
            self.quench[i - self.values.len()]
        }
    }

    fn set(&mut self, i: usize, v: f64) {
        if i < self.values.len() {
            self.values[i] = v;
        } else {
            self.quench[i - self.values.len()] = v;
        }
    }

    fn range(&self, i: usize, b: &Bounds) -> (f64, f64) {
        if i < self.values.len() {
            b.range(i)
        } else if i == self.values.len() {
            (0.0, std::f64::consts::PI)
        } else {
            (-std::f64::consts::PI, std::f64::consts::PI)
        }
    }

    /// Uniform draw inside `bounds`, with the lambda coefficients confined to
    /// `lambda_fraction` of their range.
    pub fn random<R: Rng>(n_segments: usize, bounds: &Bounds, lambda_fraction: f64, rng: &mut R) -> Self {
        let mut p = Self { n_segments, values: vec![0.0; n_segments * PER_SEGMENT], quench: [0.0; 2] };
        let f = lambda_fraction.clamp(0.0, 1.0);
        for i in 0..p.dim() {
            let (mut lo, mut hi) = p.range(i, bounds);
            if i < p.values.len() && i % PER_SEGMENT != 0 {
                lo *= f;
                hi *= f;
            }
            p.set(i, if hi > lo { rng.gen_range(lo..=hi) } else { lo });
        }
        p
    }

    pub fn within(&self, b: &Bounds) -> bool {
        self.values.len() == self.n_segments * PER_SEGMENT
            && self.n_segments >= 1
            && (0..self.dim()).all(|i| {
                let (lo, hi) = self.range(i, b);
                let v = self.get(i);
                v >= lo && v <= hi
            })
    }

    pub fn segment(&self, k: usize) -> (f64, LambdaCoefficients) {
        let v = &self.values[k * PER_SEGMENT..(k + 1) * PER_SEGMENT];
        (v[0], LambdaCoefficients::new(0.0, v[1], v[2], v[3]))
    }

    /// Direction after the initial quench.
    pub fn direction(&self) -> Vec3 {
        let [th, ph] = self.quench;
        Vec3::new(th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos())
    }

    /// Equivalent sample-and-hold schedule over `horizon`, starting with the
    /// initial quench of `a0`.
    pub fn schedule(&self, a0: Vec3, horizon: f64) -> Result<ControlSchedule> {
        let n = self.n_segments;
        let (eps, lambda): (Vec<_>, Vec<_>) = (0..=n).map(|k| self.segment(k.min(n - 1))).unzip();
        let (axis, angle) = aligning_rotation(a0, self.direction());
        ControlSchedule::new(
            0.0,
            horizon / n as f64,
            eps,
            lambda,
            vec![Quench { step: 0, axis, angle }],
            Interpolation::Hold,
        )
    }
}

/// Boundary problem solved by the search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub model: DissipatorModel,
    pub objective: Objective,
    pub initial: Vec3,
    pub target: Vec3,
    /// Fixed duration (heat) or search window (time).
    pub horizon: f64,
    pub bounds: Bounds,
    /// Largest norm miss accepted as hitting the target.
    pub target_tol: f64,
}

impl Problem {
    pub fn new(
        model: DissipatorModel,
        objective: Objective,
        initial: BlochState,
        target: BlochState,
        horizon: f64,
    ) -> Result<Self> {
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(domain(format!("horizon must be finite and non-negative, got {horizon}")));
        }
        Ok(Self {
            model,
            objective,
            initial: initial.vec(),
            target: target.vec(),
            horizon,
            bounds: Bounds::default_for(&model),
            target_tol: 1e-4,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Released heat, or arrival time (the horizon if never reached).
    pub cost: f64,
    pub miss: f64,
}

/// Cost and norm miss of `params`. Deterministic.
pub fn evaluate(params: &ParamVector, problem: &Problem) -> Result<Evaluation> {
    if !params.within(&problem.bounds) {
        return Err(domain("parameters outside bounds"));
    }
    let n = params.n_segments;
    let h = problem.horizon / n as f64;
    let r = problem.target.norm();
    let mut a = params.direction() * problem.initial.norm();
    let mut heat = 0.0;
    let m = &problem.model;
    match problem.objective {
        Objective::Heat => {
            for k in 0..n {
                let (eps, lam) = params.segment(k);
                (a, heat) = ConstantFlow::new(m, eps, &lam, h)?.apply(a, heat);
            }
            Ok(Evaluation { cost: heat, miss: (a.norm() - r).abs() })
        }
        Objective::Time => {
            let gap = |a: Vec3| a.norm() - r;
            let mut g = gap(a);
            if g.abs() <= 1e-12 {
                return Ok(Evaluation { cost: 0.0, miss: 0.0 });
            }
            let mut closest = g.abs();
            let hs = h / ARRIVAL_SUBSTEPS as f64;
            for k in 0..n {
                let (eps, lam) = params.segment(k);
                let flow = ConstantFlow::new(m, eps, &lam, hs)?;
                for j in 0..ARRIVAL_SUBSTEPS {
                    let (next, _) = flow.apply(a, 0.0);
                    let gn = gap(next);
                    if gn == 0.0 || gn.signum() != g.signum() {
                        let (mut lo, mut hi) = (0.0, hs);
                        for _ in 0..60 {
                            let mid = 0.5 * (lo + hi);
                            let (am, _) = ConstantFlow::new(m, eps, &lam, mid)?.apply(a, 0.0);
                            if gap(am) == 0.0 || gap(am).signum() != g.signum() {
                                hi = mid;
                            } else {
                                lo = mid;
                            }
                        }
                        let t = (k * ARRIVAL_SUBSTEPS + j) as f64 * hs + hi;
                        return Ok(Evaluation { cost: t, miss: 0.0 });
                    }
                    a = next;
                    g = gn;
                    closest = closest.min(g.abs());
                }
            }
            Ok(Evaluation { cost: problem.horizon, miss: closest })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub n_segments: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Pattern-search sweeps per penalty epoch.
    pub iterations: usize,
    pub epochs: usize,
    pub initial_weight: f64,
    pub weight_growth: f64,
    /// Initial step as a fraction of each coordinate's range.
    pub initial_step: f64,
    /// Fraction of the lambda range used for random starting points.
    pub initial_lambda: f64,
    /// Sweeps stop once every step falls below this fraction of its range.
    pub min_step: f64,
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            n_segments: 16,
            restarts: 200,
            seed: 0,
            iterations: 100,
            epochs: 3,
            initial_weight: 1e3,
            weight_growth: 10.0,
            initial_step: 0.25,
            initial_lambda: 0.05,
            min_step: 1e-6,
            threads: None,
        }
    }
}

/// One row of the cost trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub restart: usize,
    pub epoch: usize,
    pub iteration: usize,
    /// Penalized objective under the epoch's weight.
    pub objective: f64,
    pub cost: f64,
    pub miss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub restart: usize,
    /// Penalized objective of the random start under the final weight.
    pub initial_objective: f64,
    pub objective: f64,
    pub cost: f64,
    pub miss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best: ParamVector,
    pub best_cost: f64,
    pub target_miss: f64,
    /// Whether the best result meets the target tolerance.
    pub accepted: bool,
    pub seed: u64,
    pub best_restart: usize,
    pub evaluations: u64,
    pub restarts: Vec<RestartSummary>,
    #[serde(skip)]
    pub trace: Vec<TracePoint>,
}

impl OptimizationResult {
    pub fn write_trace_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for p in &self.trace {
            out.serialize(p)?;
        }
        out.flush()?;
        Ok(())
    }
}

struct RestartOutcome {
    summary: RestartSummary,
    params: ParamVector,
    trace: Vec<TracePoint>,
    evaluations: u64,
}

fn penalized(e: &Evaluation, w: f64) -> f64 {
    e.cost + w * e.miss * e.miss
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

fn run_restart(problem: &Problem, cfg: &SearchConfig, restart: usize) -> RestartOutcome {
    let mut rng = restart_rng(cfg.seed, restart);
    let mut x = ParamVector::random(cfg.n_segments, &problem.bounds, cfg.initial_lambda, &mut rng);
    let mut evaluations = 0u64;
    let mut eval = |p: &ParamVector| {
        evaluations += 1;
        evaluate(p, problem).unwrap_or(Evaluation { cost: f64::INFINITY, miss: f64::INFINITY })
    };
    let dim = x.dim();
    let ranges: Vec<(f64, f64)> = (0..dim).map(|i| x.range(i, &problem.bounds)).collect();
    let mut steps: Vec<f64> = ranges.iter().map(|(lo, hi)| cfg.initial_step * (hi - lo)).collect();
    let final_w = cfg.initial_weight * cfg.weight_growth.powi(cfg.epochs.saturating_sub(1) as i32);

    let mut ex = eval(&x);
    let initial = (x.clone(), ex);
    let mut incumbents = vec![initial.clone()];
    let mut trace = vec![];
    for epoch in 0..cfg.epochs.max(1) {
        let w = cfg.initial_weight * cfg.weight_growth.powi(epoch as i32);
        let mut fx = penalized(&ex, w);
        trace.push(TracePoint { restart, epoch, iteration: 0, objective: fx, cost: ex.cost, miss: ex.miss });
        if epoch > 0 {
            // reopen the search a little after the weight change
            for (s, (lo, hi)) in steps.iter_mut().zip(&ranges) {
                *s = s.max(0.01 * cfg.initial_step * (hi - lo));
            }
        }
        for iteration in 1..=cfg.iterations {
            let base = x.clone();
            for i in 0..dim {
                let (lo, hi) = ranges[i];
                let mut moved = false;
                for dir in [1.0, -1.0] {
                    let v = (x.get(i) + dir * steps[i]).clamp(lo, hi);
                    if v == x.get(i) {
                        continue;
                    }
                    let mut y = x.clone();
                    y.set(i, v);
                    let ey = eval(&y);
                    let fy = penalized(&ey, w);
                    if fy < fx {
                        (x, ex, fx) = (y, ey, fy);
                        moved = true;
                        break;
                    }
                }
                // per-coordinate step adaptation
                steps[i] = if moved { (2.0 * steps[i]).min(hi - lo) } else { 0.5 * steps[i] };
            }
            if x != base {
                // pattern move along the sweep's net displacement
                let mut y = x.clone();
                for i in 0..dim {
                    let (lo, hi) = ranges[i];
                    y.set(i, (2.0 * x.get(i) - base.get(i)).clamp(lo, hi));
                }
                let ey = eval(&y);
                let fy = penalized(&ey, w);
                if fy < fx {
                    (x, ex, fx) = (y, ey, fy);
                }
            }
            trace.push(TracePoint { restart, epoch, iteration, objective: fx, cost: ex.cost, miss: ex.miss });
            if steps.iter().zip(&ranges).all(|(s, (lo, hi))| *s < cfg.min_step * (hi - lo)) {
                break;
            }
        }
        incumbents.push((x.clone(), ex));
    }
    // best incumbent under the final weight; never worse than the start
    let (params, e) = incumbents
        .into_iter()
        .min_by(|a, b| penalized(&a.1, final_w).total_cmp(&penalized(&b.1, final_w)))
        .expect("at least the initial point");
    RestartOutcome {
        summary: RestartSummary {
            restart,
            initial_objective: penalized(&initial.1, final_w),
            objective: penalized(&e, final_w),
            cost: e.cost,
            miss: e.miss,
        },
        params,
        trace,
        evaluations,
    }
}

/// Thread count from `QOCTL_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("QOCTL_THREADS").ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Multistart pattern search. Restart `i` draws its start from the ChaCha
/// stream `i` of `seed`, so results do not depend on the thread count.
pub fn multistart_search(problem: &Problem, cfg: &SearchConfig) -> Result<OptimizationResult> {
    if cfg.n_segments == 0 || cfg.restarts == 0 {
        return Err(domain("search needs at least one segment and one restart"));
    }
    if !(problem.horizon > 0.0) {
        return Err(domain("search needs a positive horizon"));
    }
    let run = || (0..cfg.restarts).into_par_iter().map(|r| run_restart(problem, cfg, r)).collect::<Vec<_>>();
    let outcomes = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| domain(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    let accepted = |o: &RestartOutcome| o.summary.miss <= problem.target_tol;
    let best = if outcomes.iter().any(accepted) {
        outcomes.iter().filter(|o| accepted(o)).min_by(|a, b| a.summary.cost.total_cmp(&b.summary.cost))
    } else {
        outcomes.iter().min_by(|a, b| a.summary.objective.total_cmp(&b.summary.objective))
    }
    .expect("restarts > 0");
    Ok(OptimizationResult {
        best: best.params.clone(),
        best_cost: best.summary.cost,
        target_miss: best.summary.miss,
        accepted: accepted(best),
        seed: cfg.seed,
        best_restart: best.summary.restart,
        evaluations: outcomes.iter().map(|o| o.evaluations).sum(),
        restarts: outcomes.iter().map(|o| o.summary.clone()).collect(),
        trace: outcomes.into_iter().flat_map(|o| o.trace).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachPoint {
    pub target_az: f64,
    pub target_norm: f64,
    /// Clamped minimal time; infinite when unreachable at any horizon.
    pub min_time: f64,
    pub reachable: bool,
}

/// Minimal (clamped) time from `a0` to each diagonal target and whether it
/// fits in `horizon`.
pub fn reachability_scan(
    model: &DissipatorModel,
    a0: BlochState,
    horizon: f64,
    targets: &[f64],
    opts: &SynthesisOptions,
) -> Result<Vec<ReachPoint>> {
    targets
        .iter()
        .map(|&z| {
            let target = BlochState::new(0.0, 0.0, z)?;
            let min_time = match synthesize_time_protocol(model, a0, target, opts) {
                Ok(p) => p.open_evolution().map(|(_, _, d)| d).unwrap_or(0.0),
                Err(Error::Infeasible { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            Ok(ReachPoint { target_az: z, target_norm: z.abs(), min_time, reachable: min_time <= horizon })
        })
        .collect()
}

pub fn write_reach_csv<W: Write>(points: &[ReachPoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for p in points {
        out.serialize(p)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::integrate;

    fn gibbs() -> DissipatorModel {
        DissipatorModel::gibbs(1.0, 1.0).unwrap()
    }

    fn diag(z: f64) -> BlochState {
        BlochState::new(0.0, 0.0, z).unwrap()
    }

    fn constant(n: usize, eps: f64, lam: [f64; 3]) -> ParamVector {
        let values = (0..n).flat_map(|_| [eps, lam[0], lam[1], lam[2]]).collect();
        ParamVector { n_segments: n, values, quench: [std::f64::consts::PI, 0.0] }
    }

    #[test]
    fn analytic_time_schedule_scores_close() {
        let p = Problem::new(gibbs(), Objective::Time, diag(-0.2), diag(-0.8), 2.0).unwrap();
        let e = evaluate(&constant(16, 50.0, [0.0; 3]), &p).unwrap();
        assert!((e.cost / 4f64.ln() - 1.0).abs() < 1e-2);
        assert_eq!(e.miss, 0.0);
    }

    #[test]
    fn evaluation_matches_rk4_schedule() {
        let m = DissipatorModel::bosonic(0.7, 1.2).unwrap();
        let mut rng = restart_rng(3, 0);
        let p = Problem::new(m, Objective::Heat, BlochState::new(0.2, -0.1, 0.3).unwrap(), diag(-0.5), 1.5).unwrap();
        let mut params = ParamVector::random(8, &Bounds { eps: (0.5, 3.0), lambda: 2.0 }, 1.0, &mut rng);
        params.quench = [0.4, 1.0];
        let e = evaluate(&params, &p).unwrap();
        let sched = params.schedule(p.initial, p.horizon).unwrap();
        // RK4 at a fine step against the exact flow
        let fine = ControlSchedule::new(
            0.0,
            sched.dt / 200.0,
            (0..=8 * 200).map(|k| sched.eps[(k / 200).min(7)]).collect(),
            (0..=8 * 200).map(|k| sched.lambda[(k / 200).min(7)]).collect(),
            sched.quenches.clone(),
            Interpolation::Hold,
        )
        .unwrap();
        let t = integrate(&fine, BlochState::from_vec(p.initial).unwrap(), None, &m, Objective::Heat).unwrap();
        assert!((t.total_heat() - e.cost).abs() < 1e-9);
        assert!(((t.final_state().norm() - 0.5).abs() - e.miss).abs() < 1e-9);
    }

    #[test]
    fn spectrum_preserving_schedules_miss() {
        // Gibbs at eps = 0 with gamma = 0: only rotations, the norm never changes
        let m = DissipatorModel::gibbs(0.0, 1.0).unwrap();
        let mut p = Problem::new(m, Objective::Heat, diag(-0.3), diag(-0.7), 2.0).unwrap();
        p.bounds = Bounds { eps: (-5.0, 5.0), lambda: 3.0 };
        let mut rng = restart_rng(9, 1);
        for _ in 0..20 {
            let params = ParamVector::random(8, &p.bounds, 1.0, &mut rng);
            let e = evaluate(&params, &p).unwrap();
            assert!((e.miss - 0.4).abs() < 1e-9);
            assert_eq!(e.cost, 0.0);
        }
    }

    #[test]
    fn trivial_configurations() {
        let p =
            Problem::new(gibbs(), Objective::Time, diag(-0.4), BlochState::new(0.4, 0.0, 0.0).unwrap(), 1.0).unwrap();
        let cfg = SearchConfig { restarts: 1, iterations: 0, n_segments: 4, ..Default::default() };
        let r = multistart_search(&p, &cfg).unwrap();
        assert_eq!(r.best_cost, 0.0);
        assert_eq!(r.evaluations, 1);
        let x = ParamVector::random(4, &p.bounds, cfg.initial_lambda, &mut restart_rng(0, 0));
        assert_eq!(r.best, x);
        assert!(multistart_search(&p, &SearchConfig { restarts: 0, ..cfg }).is_err());
    }

    #[test]
    fn search_is_deterministic_and_monotone() {
        let p = Problem::new(gibbs(), Objective::Heat, diag(-0.2), diag(-0.4), 1.5).unwrap();
        let cfg = SearchConfig { restarts: 4, iterations: 5, n_segments: 4, seed: 11, ..Default::default() };
        let a = multistart_search(&p, &SearchConfig { threads: Some(1), ..cfg }).unwrap();
        let b = multistart_search(&p, &SearchConfig { threads: Some(3), ..cfg }).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trace, b.trace);
        for w in a.trace.windows(2) {
            if w[0].restart == w[1].restart && w[0].epoch == w[1].epoch {
                assert!(w[1].objective <= w[0].objective);
            }
        }
        for r in &a.restarts {
            assert!(r.objective <= r.initial_objective);
        }
        let mut buf = vec![];
        a.write_trace_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("restart,epoch,iteration,objective,cost,miss\n"));
    }

    #[test]
    fn reachability_examples() {
        let m = gibbs();
        let o = SynthesisOptions::default();
        let pts = reachability_scan(&m, diag(-0.2), 1.0, &[-0.8, -0.2, 0.2, -0.1], &o).unwrap();
        assert!(!pts[0].reachable && (pts[0].min_time - 4f64.ln()).abs() < 1e-9);
        assert!(pts[1].reachable && pts[2].reachable && pts[2].min_time == 0.0);
        assert!(pts[3].reachable);
        let zero = reachability_scan(&m, diag(-0.2), 0.0, &[-0.3, 0.2], &o).unwrap();
        assert!(!zero[0].reachable && zero[1].reachable);
        let far = reachability_scan(&m, diag(-0.2), 1e3, &[-0.999, 0.999, -1.0], &o).unwrap();
        assert!(far[0].reachable && far[1].reachable && !far[2].reachable);
        let mut buf = vec![];
        write_reach_csv(&pts, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("target_az,target_norm,min_time,reachable\n"));
    }
}
