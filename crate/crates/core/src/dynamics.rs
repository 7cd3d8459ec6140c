//! Rotating-frame state and costate equations, RK4 integration and cost
//! functionals.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::bloch::{rotate_vec, BlochState, CostateBloch, Vec3};
use crate::dissipators::{DissipatorModel, RelaxationRates};
use crate::error::{domain, Error, Result};
use crate::frame::{sample_at, Interpolation, LambdaCoefficients};
use crate::numerics::expm;

/// Default integration step in units of `1/gamma`.
pub const DEFAULT_GAMMA_STEP: f64 = 1e-3;
/// Norm excess at which an integration is declared diverged.
pub const DIVERGENCE_TOL: f64 = 1e-6;
/// Exact CSV header of exported trajectories.
pub const TRAJECTORY_HEADER: [&str; 9] = ["t", "ax", "ay", "az", "qx", "qy", "qz", "eps", "heat_cum"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Minimize heat released to the bath over a fixed horizon.
    Heat,
    /// Minimize the time to reach the target.
    Time,
}

impl std::str::FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "heat" => Ok(Objective::Heat),
            "time" => Ok(Objective::Time),
            other => Err(domain(format!("unknown objective '{other}'"))),
        }
    }
}

/// Instantaneous rotation applied at grid sample `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quench {
    pub step: usize,
    pub axis: Vec3,
    pub angle: f64,
}

/// Maps an infinite or out-of-range gap onto `[-eps_max, eps_max]`.
pub fn clamp_eps(eps: f64, eps_max: f64) -> f64 {
    eps.clamp(-eps_max, eps_max)
}

/// Controls sampled on a uniform grid `t0 + k dt`, `k = 0..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    pub t0: f64,
    pub dt: f64,
    pub eps: Vec<f64>,
    pub lambda: Vec<LambdaCoefficients>,
    pub quenches: Vec<Quench>,
    pub interp: Interpolation,
}

impl ControlSchedule {
    pub fn new(
        t0: f64,
        dt: f64,
        eps: Vec<f64>,
        lambda: Vec<LambdaCoefficients>,
        mut quenches: Vec<Quench>,
        interp: Interpolation,
    ) -> Result<Self> {
        if eps.is_empty() {
            return Err(domain("schedule has no samples"));
        }
        if lambda.len() != eps.len() {
            return Err(domain("eps and generator sample counts differ"));
        }
        if eps.len() > 1 && !(dt.is_finite() && dt > 0.0) {
            return Err(domain(format!("grid spacing must be positive, got {dt}")));
        }
        if let Some(k) = eps.iter().position(|e| !e.is_finite()) {
            return Err(domain(format!("eps sample {k} is not finite; clamp it first")));
        }
        if lambda.iter().any(|l| !l.is_finite()) {
            return Err(domain("non-finite generator sample"));
        }
        for q in &quenches {
            if q.step >= eps.len() {
                return Err(domain(format!("quench at step {} beyond grid", q.step)));
            }
            if !q.angle.is_finite() || (q.axis.norm() - 1.0).abs() > 1e-12 {
                return Err(domain("quench axis must be normalized and angle finite"));
            }
        }
        quenches.sort_by_key(|q| q.step);
        Ok(Self { t0, dt, eps, lambda, quenches, interp })
    }

    /// Constant gap over `duration`, with `Lambda = 0` and no quenches.
    pub fn constant(duration: f64, max_step: f64, eps: f64) -> Result<Self> {
        let (n, dt) = grid_for(duration, max_step)?;
        Self::new(0.0, dt, vec![eps; n + 1], vec![LambdaCoefficients::ZERO; n + 1], vec![], Interpolation::Hold)
    }

    /// Replaces every gap sample by its clamped value.
    pub fn clamped(mut self, eps_max: f64) -> Self {
        for e in &mut self.eps {
            *e = clamp_eps(*e, eps_max);
        }
        self
    }

    pub fn n_steps(&self) -> usize {
        self.eps.len() - 1
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.n_steps() as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + self.dt * k as f64
    }

    pub fn eps_at(&self, i: usize, s: f64) -> f64 {
        sample_at(&self.eps, self.interp, i, s, 0.0, |acc, w, x| acc + w * x)
    }

    pub fn lambda_at(&self, i: usize, s: f64) -> LambdaCoefficients {
        sample_at(&self.lambda, self.interp, i, s, LambdaCoefficients::ZERO, |acc, w, x| {
            LambdaCoefficients::new(acc.l0 + w * x.l0, acc.l1 + w * x.l1, acc.l2 + w * x.l2, acc.l3 + w * x.l3)
        })
    }
}

/// Number of steps and spacing covering `duration` with steps no longer than `max_step`.
pub fn grid_for(duration: f64, max_step: f64) -> Result<(usize, f64)> {
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(domain(format!("duration must be finite and non-negative, got {duration}")));
    }
    if !(max_step.is_finite() && max_step > 0.0) {
        return Err(domain(format!("step must be positive, got {max_step}")));
    }
    if duration == 0.0 {
        return Ok((0, max_step));
    }
    let n = ((duration / max_step) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    Ok((n, duration / n as f64))
}

/// Sampled solution of the state (and optionally costate) equations.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub model: DissipatorModel,
    pub times: Vec<f64>,
    /// Post-quench Bloch vectors at each sample.
    pub states: Vec<Vec3>,
    pub costates: Option<Vec<Vec3>>,
    pub eps: Vec<f64>,
    pub lambda: Vec<LambdaCoefficients>,
    /// Heat released to the bath up to each sample.
    pub heat: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Vec3 {
        *self.states.last().expect("trajectory has samples")
    }

    pub fn total_heat(&self) -> f64 {
        *self.heat.last().expect("trajectory has samples")
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(TRAJECTORY_HEADER)?;
        for k in 0..self.len() {
            let a = self.states[k];
            let q = self.costates.as_ref().map(|q| q[k]);
            let f = |x: f64| format!("{x:e}");
            let qf = |g: fn(Vec3) -> f64| q.map(|v| f(g(v))).unwrap_or_default();
            wr.write_record([
                f(self.times[k]),
                f(a.x),
                f(a.y),
                f(a.z),
                qf(|v| v.x),
                qf(|v| v.y),
                qf(|v| v.z),
                f(self.eps[k]),
                f(self.heat[k]),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads a trajectory written by [`Self::write_csv`]. Empty costate cells
    /// mean no costate; generator samples are set to zero.
    pub fn read_csv<R: Read>(r: R, model: DissipatorModel) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = rd.headers()?.clone();
        let col = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Parse { line: 1, message: format!("missing column '{name}'") })
        };
        let idx: Vec<usize> = TRAJECTORY_HEADER.iter().map(|n| col(n)).collect::<Result<_>>()?;
        let mut t = Trajectory {
            model,
            times: vec![],
            states: vec![],
            costates: Some(vec![]),
            eps: vec![],
            lambda: vec![],
            heat: vec![],
        };
        let mut any_costate_missing = false;
        for rec in rd.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let get = |j: usize| -> Result<Option<f64>> {
                let s = rec.get(idx[j]).unwrap_or("");
                if s.is_empty() {
                    return Ok(None);
                }
                s.parse::<f64>()
                    .map(Some)
                    .map_err(|e| Error::Parse { line, message: format!("column '{}': {e}", TRAJECTORY_HEADER[j]) })
            };
            let need = |j: usize| -> Result<f64> {
                get(j)?.ok_or_else(|| Error::Parse {
                    line,
                    message: format!("empty value in column '{}'", TRAJECTORY_HEADER[j]),
                })
            };
            t.times.push(need(0)?);
            t.states.push(Vec3::new(need(1)?, need(2)?, need(3)?));
            match (get(4)?, get(5)?, get(6)?) {
                (Some(x), Some(y), Some(z)) => t.costates.as_mut().unwrap().push(Vec3::new(x, y, z)),
                _ => any_costate_missing = true,
            }
            t.eps.push(need(7)?);
            t.heat.push(need(8)?);
            t.lambda.push(LambdaCoefficients::ZERO);
        }
        if t.times.is_empty() {
            return Err(Error::Parse { line: 1, message: "trajectory has no samples".into() });
        }
        if any_costate_missing {
            t.costates = None;
        }
        Ok(t)
    }
}

/// Constant of motion along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PseudoHamiltonianValue {
    /// Mean over samples.
    pub k: f64,
    pub values: Vec<f64>,
    pub max_deviation: f64,
    pub stdev: f64,
}

impl PseudoHamiltonianValue {
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len().max(1) as f64;
        let k = values.iter().sum::<f64>() / n;
        let max_deviation = values.iter().map(|v| (v - k).abs()).fold(0.0, f64::max);
        let stdev = (values.iter().map(|v| (v - k).powi(2)).sum::<f64>() / n).sqrt();
        Self { k, values, max_deviation, stdev }
    }
}

/// Controls frozen at one instant.
#[derive(Debug, Clone, Copy)]
struct Frozen {
    eps: f64,
    rates: RelaxationRates,
    /// Rotation vector `eps z - 2 l` of the coherent part.
    omega: Vec3,
}

impl Frozen {
    fn new(model: &DissipatorModel, eps: f64, lam: &LambdaCoefficients) -> Result<Self> {
        let rates = model.rates(eps)?;
        Ok(Self { eps, rates, omega: Vec3::Z * eps - lam.pauli_vector() * 2.0 })
    }

    fn state(&self, a: Vec3) -> Vec3 {
        self.rates.apply(a) + self.omega.cross(a)
    }

    fn costate(&self, q: Vec3, objective: Objective) -> Vec3 {
        let src = match objective {
            Objective::Heat => 0.5 * self.eps,
            Objective::Time => 0.0,
        };
        let r = &self.rates;
        Vec3::new(r.transverse * q.x, r.transverse * q.y, r.longitudinal * (q.z - src)) + self.omega.cross(q)
    }

    fn heat_flux(&self, a: Vec3) -> f64 {
        0.5 * self.eps * self.rates.longitudinal * (a.z - self.rates.eq_z)
    }
}

/// `da/dt` in the rotating frame.
pub fn rhs_state(model: &DissipatorModel, a: BlochState, eps: f64, lam: &LambdaCoefficients) -> Result<Vec3> {
    Ok(Frozen::new(model, eps, lam)?.state(a.vec()))
}

/// `dq/dt` in the rotating frame.
pub fn rhs_costate(
    model: &DissipatorModel,
    q: CostateBloch,
    eps: f64,
    lam: &LambdaCoefficients,
    objective: Objective,
) -> Result<Vec3> {
    Ok(Frozen::new(model, eps, lam)?.costate(q.vec(), objective))
}

/// Heat power released to the bath, `-<D D_D[rho]>`.
pub fn heat_flux(model: &DissipatorModel, a: BlochState, eps: f64) -> Result<f64> {
    Ok(Frozen::new(model, eps, &LambdaCoefficients::ZERO)?.heat_flux(a.vec()))
}

/// Control-theoretic Hamiltonian at one instant.
pub fn pseudo_hamiltonian(
    model: &DissipatorModel,
    a: Vec3,
    q: Vec3,
    eps: f64,
    lam: &LambdaCoefficients,
    objective: Objective,
) -> Result<f64> {
    let f = Frozen::new(model, eps, lam)?;
    let flow = q.dot(f.state(a));
    Ok(match objective {
        // <(pi - D) L[rho]>: the D part is minus the released heat power
        Objective::Heat => flow + f.heat_flux(a),
        Objective::Time => 1.0 + flow,
    })
}

#[derive(Debug, Clone, Copy)]
struct Point {
    a: Vec3,
    q: Vec3,
    heat: f64,
}

struct Stepper<'a> {
    sched: &'a ControlSchedule,
    model: &'a DissipatorModel,
    objective: Objective,
    costate: bool,
}

impl Stepper<'_> {
    fn frozen(&self, i: usize, s: f64) -> Result<Frozen> {
        if self.sched.interp == Interpolation::Hold {
            return Frozen::new(self.model, self.sched.eps[i], &self.sched.lambda[i]);
        }
        Frozen::new(self.model, self.sched.eps_at(i, s), &self.sched.lambda_at(i, s))
    }

    fn deriv(&self, f: &Frozen, p: &Point) -> Point {
        Point {
            a: f.state(p.a),
            q: if self.costate { f.costate(p.q, self.objective) } else { Vec3::ZERO },
            heat: f.heat_flux(p.a),
        }
    }

    /// RK4 over the first `frac` of step `i`.
    fn step(&self, i: usize, frac: f64, p: &Point) -> Result<Point> {
        let h = frac * self.sched.dt;
        let f0 = self.frozen(i, 0.0)?;
        let (fm, f1) = if self.sched.interp == Interpolation::Hold {
            (f0, f0)
        } else {
            (self.frozen(i, 0.5 * frac)?, self.frozen(i, frac)?)
        };
        let add =
            |p: &Point, d: &Point, w: f64| Point { a: p.a + d.a * w, q: p.q + d.q * w, heat: p.heat + d.heat * w };
        let k1 = self.deriv(&f0, p);
        let k2 = self.deriv(&fm, &add(p, &k1, 0.5 * h));
        let k3 = self.deriv(&fm, &add(p, &k2, 0.5 * h));
        let k4 = self.deriv(&f1, &add(p, &k3, h));
        let mut out = *p;
        for (k, w) in [(k1, 1.0), (k2, 2.0), (k3, 2.0), (k4, 1.0)] {
            out = add(&out, &k, w * h / 6.0);
        }
        Ok(out)
    }

    fn quench(&self, k: usize, p: &mut Point) -> Result<()> {
        for q in self.sched.quenches.iter().filter(|q| q.step == k) {
            p.a = rotate_vec(p.a, q.axis, q.angle)?;
            p.q = rotate_vec(p.q, q.axis, q.angle)?;
        }
        Ok(())
    }

    fn check(&self, k: usize, p: &Point) -> Result<()> {
        let norm = p.a.norm();
        if !(norm <= 1.0 + DIVERGENCE_TOL) || !p.q.is_finite() || !p.heat.is_finite() {
            return Err(Error::IntegrationDiverged { t: self.sched.time(k), norm });
        }
        Ok(())
    }
}

/// Integrates state, optional costate and released heat along `sched`.
pub fn integrate(
    sched: &ControlSchedule,
    a0: BlochState,
    q0: Option<CostateBloch>,
    model: &DissipatorModel,
    objective: Objective,
) -> Result<Trajectory> {
    let st = Stepper { sched, model, objective, costate: q0.is_some() };
    let mut p = Point { a: a0.vec(), q: q0.map(|q| q.vec()).unwrap_or_default(), heat: 0.0 };
    let n = sched.n_steps();
    let mut traj = Trajectory {
        model: *model,
        times: Vec::with_capacity(n + 1),
        states: Vec::with_capacity(n + 1),
        costates: q0.map(|_| Vec::with_capacity(n + 1)),
        eps: sched.eps.clone(),
        lambda: sched.lambda.clone(),
        heat: Vec::with_capacity(n + 1),
    };
    let record = |k: usize, p: &Point, traj: &mut Trajectory| {
        traj.times.push(sched.time(k));
        traj.states.push(p.a);
        if let Some(c) = traj.costates.as_mut() {
            c.push(p.q);
        }
        traj.heat.push(p.heat);
    };
    st.quench(0, &mut p)?;
    record(0, &p, &mut traj);
    for i in 0..n {
        p = st.step(i, 1.0, &p)?;
        st.check(i + 1, &p)?;
        st.quench(i + 1, &mut p)?;
        record(i + 1, &p, &mut traj);
    }
    Ok(traj)
}

/// Final state and released heat of a run, without storing samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub final_state: Vec3,
    pub heat: f64,
    /// First time `|a|` reaches the requested norm, if asked for and reached.
    pub arrival: Option<f64>,
}

/// Integrates the state only. When `target_norm` is given, the first crossing
/// of `|a| = target_norm` is located inside its step by bisection on a
/// partial RK4 step and integration stops there.
pub fn run_summary(
    sched: &ControlSchedule,
    a0: BlochState,
    model: &DissipatorModel,
    target_norm: Option<f64>,
) -> Result<RunSummary> {
    let st = Stepper { sched, model, objective: Objective::Heat, costate: false };
    let mut p = Point { a: a0.vec(), q: Vec3::ZERO, heat: 0.0 };
    st.quench(0, &mut p)?;
    let gap = |p: &Point, r: f64| p.a.norm() - r;
    if let Some(r) = target_norm {
        if gap(&p, r).abs() <= 1e-12 {
            return Ok(RunSummary { final_state: p.a, heat: 0.0, arrival: Some(sched.t0) });
        }
    }
    let side = target_norm.map(|r| gap(&p, r).signum());
    for i in 0..sched.n_steps() {
        let next = st.step(i, 1.0, &p)?;
        st.check(i + 1, &next)?;
        if let (Some(r), Some(side)) = (target_norm, side) {
            if gap(&next, r) * side <= 0.0 {
                let mut lo = 0.0;
                let mut hi = 1.0;
                let mut hit = next;
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    let m = st.step(i, mid, &p)?;
                    if gap(&m, r) * side <= 0.0 {
                        hi = mid;
                        hit = m;
                    } else {
                        lo = mid;
                    }
                }
                let t = sched.time(i) + hi * sched.dt;
                return Ok(RunSummary { final_state: hit.a, heat: hit.heat, arrival: Some(t) });
            }
        }
        p = next;
        st.quench(i + 1, &mut p)?;
    }
    Ok(RunSummary { final_state: p.a, heat: p.heat, arrival: None })
}

/// Exact flow of the state and the released heat over an interval with
/// constant controls: the affine map `(a, heat) -> exp(G h) (a, heat, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantFlow {
    m: [[f64; 5]; 5],
}

impl ConstantFlow {
    pub fn new(model: &DissipatorModel, eps: f64, lam: &LambdaCoefficients, h: f64) -> Result<Self> {
        let f = Frozen::new(model, eps, lam)?;
        let mut g = [[0.0; 5]; 5];
        let (b, q0) = (f.state(Vec3::ZERO), f.heat_flux(Vec3::ZERO));
        for (j, e) in [Vec3::X, Vec3::Y, Vec3::Z].into_iter().enumerate() {
            let col = f.state(e) - b;
            g[0][j] = col.x * h;
            g[1][j] = col.y * h;
            g[2][j] = col.z * h;
            g[3][j] = (f.heat_flux(e) - q0) * h;
        }
        g[0][4] = b.x * h;
        g[1][4] = b.y * h;
        g[2][4] = b.z * h;
        g[3][4] = q0 * h;
        Ok(Self { m: expm(&g) })
    }

    pub fn apply(&self, a: Vec3, heat: f64) -> (Vec3, f64) {
        let v = [a.x, a.y, a.z, heat, 1.0];
        let row = |i: usize| (0..5).map(|j| self.m[i][j] * v[j]).sum::<f64>();
        (Vec3::new(row(0), row(1), row(2)), row(3))
    }
}

/// Evaluates the pseudo-Hamiltonian at every sample of a trajectory.
pub fn pseudo_hamiltonian_series(traj: &Trajectory, objective: Objective) -> Result<PseudoHamiltonianValue> {
    let qs = traj.costates.as_ref().ok_or(Error::MissingCostate)?;
    let values = (0..traj.len())
        .map(|k| pseudo_hamiltonian(&traj.model, traj.states[k], qs[k], traj.eps[k], &traj.lambda[k], objective))
        .collect::<Result<Vec<_>>>()?;
    Ok(PseudoHamiltonianValue::from_values(values))
}
