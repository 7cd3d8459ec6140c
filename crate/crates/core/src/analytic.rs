//! Closed-form extremal branches and optimal-protocol synthesis.
//!
//! Every protocol has the shape quench, open evolution along an incoherent
//! branch (`Lambda = 0`), quench. States are expressed in the energy frame of
//! the initial Hamiltonian. The open evolution works on the diagonalized
//! state `a_z = -|a|`, except for the fermionic time protocol when the
//! purity must drop, which runs from `+|a|` (see [`synthesize_time_protocol`]).

use serde::{Deserialize, Serialize};

use crate::bloch::{aligning_rotation, rotate_vec, BlochState, Vec3};
use crate::dissipators::{DissipatorKind, DissipatorModel};
use crate::dynamics::{grid_for, integrate, ControlSchedule, Objective, Quench, Trajectory, DEFAULT_GAMMA_STEP};
use crate::error::{domain, Error, Result};
use crate::frame::{Interpolation, LambdaCoefficients};
use crate::numerics::{bisect, integrate as quad};

/// Smallest half-gap `beta eps / 2` a bosonic branch may touch.
const X_MIN: f64 = 1e-12;
/// Largest half-gap scanned; the equilibrium is `-1` to machine precision well before this.
const X_MAX: f64 = 40.0;
const QUAD_PANELS: usize = 256;

pub const CAVEAT_ZERO_TIME: &str =
    "degenerate eps -> 0+ branch: optimal time collapses to zero; Markovian description breaks down";
pub const CAVEAT_CLAMPED: &str = "open evolution clamped at eps_max; predicted cost is the unclamped limit";

/// Conserved value and branch selector of an incoherent heat extremal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchParams {
    pub k: f64,
    /// `K beta / (2 gamma)`.
    pub mu: f64,
    pub sign: f64,
}

fn half_gap(beta: f64, eps: f64) -> f64 {
    0.5 * beta * eps
}

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Gudermannian.
fn gd(x: f64) -> f64 {
    2.0 * (0.5 * x).tanh().atan()
}

/// `a_z` of the Gibbs coherent extremal. Magnitudes above one are unphysical.
pub fn gibbs_coherent_az(eps: f64, beta: f64) -> Result<f64> {
    let be = beta * eps;
    if !be.is_finite() || be <= 0.0 {
        return Err(domain(format!("coherent Gibbs branch needs beta*eps > 0, got {be} (removable singularity at 0)")));
    }
    let r = be / be.sinh();
    Ok(-(0.5 * be).tanh() * (1.0 + r) / (1.0 - r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoherentBranch {
    pub az: f64,
    /// Required `a_x^2 + a_y^2`; negative means no real coherent solution.
    pub xy_norm_sq: f64,
}

/// Bosonic coherent extremal: `a_z` from the quadratic in `a_z - a_z^eq` and
/// the transverse norm it forces.
pub fn bosonic_coherent_branch(eps: f64, beta: f64, k: f64, gamma: f64, sign: f64) -> Result<CoherentBranch> {
    if !(eps > 0.0 && beta > 0.0 && gamma > 0.0) {
        return Err(domain("bosonic coherent branch needs eps, beta, gamma > 0"));
    }
    let x = half_gap(beta, eps);
    let mu = k * beta / (2.0 * gamma);
    let disc = 1.0 - x * (2.0 * x).sinh() / (2.0 * mu * mu);
    if !(disc >= 0.0) {
        return Err(Error::BranchUndefined(format!("negative discriminant {disc:.3e}")));
    }
    let aeq = -x.tanh();
    let s2 = sech(x).powi(2);
    let dz = mu * s2 * (1.0 + sign.signum() * disc.sqrt());
    let xy_norm_sq = 2.0 * aeq * (2.0 * mu / x - 1.0) * dz;
    Ok(CoherentBranch { az: aeq + dz, xy_norm_sq })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IncoherentValue {
    pub az: f64,
    /// False when `|az| > 1`.
    pub physical: bool,
}

/// Offset `a_z - a_z^eq` of the bosonic incoherent branch at half-gap `x`.
fn bosonic_offset(x: f64, mu: f64, sign: f64) -> Result<f64> {
    if mu == 0.0 {
        return Ok(0.0);
    }
    let y = -(2.0 * x).sinh() / mu;
    if !(1.0 + y >= 0.0) {
        return Err(Error::BranchUndefined(format!("negative discriminant {:.3e}", 1.0 + y)));
    }
    let root = (1.0 + y).sqrt();
    Ok(if sign < 0.0 {
        // mu sech^2 (1 - root), rationalized
        2.0 * x.tanh() / (1.0 + root)
    } else {
        mu * sech(x).powi(2) * (1.0 + root)
    })
}

/// Bosonic incoherent extremal `a_z(eps)` for conserved value `k`. The sign
/// selects the branch; with `eps > 0, k <= 0` the minus branch releases heat.
pub fn bosonic_incoherent_az(eps: f64, beta: f64, k: f64, gamma: f64, sign: f64) -> Result<IncoherentValue> {
    if !(eps > 0.0 && beta > 0.0 && gamma > 0.0) {
        return Err(domain("bosonic branch needs eps, beta, gamma > 0"));
    }
    let x = half_gap(beta, eps);
    let az = -x.tanh() + bosonic_offset(x, k * beta / (2.0 * gamma), sign)?;
    Ok(IncoherentValue { az, physical: az.abs() <= 1.0 })
}

/// Time for the coherent relaxation branch to shrink `|a|` from `a0_norm`
/// to `atau_norm`.
pub fn coherent_decay_time(a0_norm: f64, atau_norm: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) || !(0.0 < atau_norm) || a0_norm > 1.0 {
        return Err(domain("coherent decay needs gamma > 0 and 0 < |a(tau)|, |a(0)| <= 1"));
    }
    if atau_norm > a0_norm {
        return Err(Error::Infeasible {
            reason: format!("pure decay cannot grow |a| from {a0_norm} to {atau_norm}"),
            min_horizon: None,
        });
    }
    Ok((a0_norm / atau_norm).ln() / gamma)
}

/// Ideal time-optimal duration between diagonal values with the gap at `+inf`
/// (`purify`) or `-inf`.
fn ideal_time(a: f64, b: f64, gamma: f64, purify: bool) -> f64 {
    if purify {
        ((1.0 + a) / (1.0 + b)).ln() / gamma
    } else {
        ((1.0 - a) / (1.0 - b)).ln() / gamma
    }
}

/// Time for `a_z` to relax from `a` to `b` at constant gap `eps`.
pub fn clamped_arrival_time(model: &DissipatorModel, a: f64, b: f64, eps: f64) -> Result<f64> {
    let r = model.rates(eps)?;
    if r.longitudinal <= 0.0 {
        return Err(domain("relaxation needs gamma > 0"));
    }
    let (da, db) = (a - r.eq_z, b - r.eq_z);
    if a == b {
        return Ok(0.0);
    }
    if da * db <= 0.0 || db.abs() > da.abs() {
        return Err(Error::Infeasible {
            reason: format!("a_z = {b} not on the relaxation path from {a} at eps = {eps}"),
            min_horizon: None,
        });
    }
    Ok((da / db).ln() / r.longitudinal)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Branch {
    /// Gibbs and fermionic: `a_z - a_z^eq = c sech x`.
    Diagonal {
        c: f64,
    },
    Bosonic {
        mu: f64,
        sign: f64,
    },
}

impl Branch {
    fn offset(&self, x: f64) -> f64 {
        match *self {
            Branch::Diagonal { c } => c * sech(x),
            Branch::Bosonic { mu, sign } => bosonic_offset(x, mu, sign).unwrap_or(f64::NAN),
        }
    }

    fn az(&self, x: f64) -> f64 {
        -x.tanh() + self.offset(x)
    }

    fn params(&self, model: &DissipatorModel) -> BranchParams {
        let (g, b) = (model.gamma, model.beta);
        match *self {
            Branch::Diagonal { c } => {
                let k = -g * c * c / b;
                BranchParams { k, mu: k * b / (2.0 * g), sign: c.signum() }
            }
            Branch::Bosonic { mu, sign } => BranchParams { k: 2.0 * g * mu / b, mu, sign },
        }
    }

    /// Half-gap range of the physical, monotone piece.
    fn x_range(&self) -> (f64, f64) {
        match *self {
            Branch::Diagonal { .. } => (-X_MAX, X_MAX),
            Branch::Bosonic { sign, .. } if sign < 0.0 => (X_MIN, X_MAX),
            Branch::Bosonic { .. } => (X_MIN, self.plus_end()),
        }
    }

    /// End of the physical piece of the bosonic plus branch: where it first
    /// turns back or leaves the Bloch ball.
    fn plus_end(&self) -> f64 {
        let n = 400;
        let xs: Vec<f64> = (0..=n).map(|j| X_MIN * (X_MAX / X_MIN).powf(j as f64 / n as f64)).collect();
        let mut prev = self.az(xs[0]);
        for j in 1..=n {
            let v = self.az(xs[j]);
            if v < -1.0 {
                return bisect(|x| self.az(x) + 1.0, xs[j - 1], xs[j]).unwrap_or(xs[j - 1]);
            }
            if v > prev {
                // golden-section search for the minimum
                let (mut lo, mut hi) = (xs[j.saturating_sub(2)], xs[j]);
                let g = 0.5 * (5f64.sqrt() - 1.0);
                for _ in 0..100 {
                    let (m1, m2) = (hi - g * (hi - lo), lo + g * (hi - lo));
                    if self.az(m1) < self.az(m2) {
                        hi = m2;
                    } else {
                        lo = m1;
                    }
                }
                return 0.5 * (lo + hi);
            }
            prev = v;
        }
        X_MAX
    }

    /// Half-gap at which the branch passes through `az`.
    fn x_of_az(&self, az: f64, range: (f64, f64)) -> Result<f64> {
        match *self {
            Branch::Diagonal { c } => {
                let s = (c * c + 1.0 - az * az).sqrt();
                let u = if c >= 0.0 { (c + s) / (1.0 + az) } else { (1.0 - az) / (s - c) };
                Ok(u.ln())
            }
            Branch::Bosonic { .. } => {
                let (lo, hi) = range;
                let (alo, ahi) = (self.az(lo), self.az(hi));
                if az >= alo {
                    return if az - alo <= 1e-13 { Ok(lo) } else { Err(off_branch(az)) };
                }
                if az <= ahi {
                    return if ahi - az <= 1e-13 { Ok(hi) } else { Err(off_branch(az)) };
                }
                bisect(|x| self.az(x) - az, lo, hi).ok_or_else(|| off_branch(az))
            }
        }
    }

    /// `d a_z / dt` on the branch.
    fn rate(&self, model: &DissipatorModel, x: f64) -> f64 {
        let d = self.offset(x);
        match *self {
            Branch::Diagonal { .. } => -model.gamma * d,
            Branch::Bosonic { .. } => -model.gamma * d / x.tanh(),
        }
    }

    /// Costate `q_z` solving the diagonal conditions on the branch.
    fn costate_z(&self, model: &DissipatorModel, x: f64) -> f64 {
        let eps = 2.0 * x / model.beta;
        let d = self.offset(x);
        match *self {
            // eps/2 - d / (2 slope)
            Branch::Diagonal { .. } => 0.5 * eps + d * x.cosh().powi(2) / model.beta,
            Branch::Bosonic { mu, .. } => 0.5 * eps - x.tanh() * 2.0 * mu / (model.beta * d),
        }
    }

    /// Duration of the branch segment between `a` and `b`.
    fn duration(&self, model: &DissipatorModel, a: f64, b: f64, range: (f64, f64)) -> Result<f64> {
        match *self {
            Branch::Diagonal { c } => {
                let (xa, xb) = (self.x_of_az(a, range)?, self.x_of_az(b, range)?);
                let f = |x: f64| gd(x) + c * ln_cosh(x);
                Ok((f(xb) - f(xa)) / (model.gamma * c))
            }
            Branch::Bosonic { .. } => {
                let mut err = None;
                let t = quad(
                    |z| match self.x_of_az(z, range) {
                        Ok(x) => 1.0 / self.rate(model, x),
                        Err(e) => {
                            err.get_or_insert(e);
                            f64::NAN
                        }
                    },
                    a,
                    b,
                    QUAD_PANELS,
                );
                match err {
                    Some(e) => Err(e),
                    None => Ok(t),
                }
            }
        }
    }

    /// Heat released between `a` and `b`: `-(1/beta) int x(a_z) da_z`.
    fn heat(&self, model: &DissipatorModel, a: f64, b: f64, range: (f64, f64)) -> Result<f64> {
        match *self {
            Branch::Diagonal { c } => {
                let (xa, xb) = (self.x_of_az(a, range)?, self.x_of_az(b, range)?);
                let f = |x: f64| x * x.tanh() - ln_cosh(x) + c * (gd(x) - x * sech(x));
                Ok((f(xb) - f(xa)) / model.beta)
            }
            Branch::Bosonic { .. } => {
                let v = quad(|z| self.x_of_az(z, range).unwrap_or(f64::NAN), a, b, QUAD_PANELS);
                if v.is_nan() {
                    return Err(off_branch(a));
                }
                Ok(-v / model.beta)
            }
        }
    }

    /// Half-gap samples along the branch on `n + 1` grid points over `tau`,
    /// from RK4 integration of `a_z` with the gap slaved to the branch.
    fn samples(&self, model: &DissipatorModel, a: f64, tau: f64, n: usize, range: (f64, f64)) -> Result<Vec<f64>> {
        let f = |z: f64| -> Result<f64> { Ok(self.rate(model, self.x_of_az(z, range)?)) };
        let sub = 4;
        let h = tau / (n * sub) as f64;
        let mut z = a;
        let mut out = Vec::with_capacity(n + 1);
        out.push(self.x_of_az(z, range)?);
        for _ in 0..n {
            for _ in 0..sub {
                let k1 = f(z)?;
                let k2 = f(z + 0.5 * h * k1)?;
                let k3 = f(z + 0.5 * h * k2)?;
                let k4 = f(z + h * k3)?;
                z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            out.push(self.x_of_az(z, range)?);
        }
        Ok(out)
    }
}

fn off_branch(az: f64) -> Error {
    Error::BranchUndefined(format!("a_z = {az} is not on the branch"))
}

/// One protocol step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Segment {
    Quench {
        axis: Vec3,
        angle: f64,
    },
    /// Gap samples on a uniform grid (cubic interpolation), `Lambda = 0`.
    OpenEvolution {
        eps: Vec<f64>,
        dt: f64,
        duration: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub objective: Objective,
    pub model: DissipatorModel,
    pub segments: Vec<Segment>,
    pub initial: Vec3,
    pub target: Vec3,
    /// Heat for the heat objective, time for the time objective.
    pub predicted_cost: f64,
    pub branch: Option<BranchParams>,
    /// Costate at the start of the open evolution, in the post-quench frame.
    pub costate: Option<Vec3>,
    pub caveats: Vec<String>,
}

impl Protocol {
    pub fn open_evolution(&self) -> Option<(&[f64], f64, f64)> {
        self.segments.iter().find_map(|s| match s {
            Segment::OpenEvolution { eps, dt, duration } => Some((eps.as_slice(), *dt, *duration)),
            _ => None,
        })
    }

    /// Single control schedule: quench at the first sample, open evolution,
    /// quench at the last sample.
    pub fn schedule(&self) -> Result<ControlSchedule> {
        let (eps, dt, _) = self.open_evolution().ok_or_else(|| domain("protocol has no open evolution"))?;
        let n = eps.len() - 1;
        let mut quenches = vec![];
        let mut first = true;
        for s in &self.segments {
            if let Segment::Quench { axis, angle } = s {
                quenches.push(Quench { step: if first { 0 } else { n }, axis: *axis, angle: *angle });
            } else {
                first = false;
            }
        }
        let dt = if n == 0 { 1.0 } else { dt };
        ControlSchedule::new(
            0.0,
            dt,
            eps.to_vec(),
            vec![LambdaCoefficients::ZERO; n + 1],
            quenches,
            Interpolation::Cubic,
        )
    }

    /// Integrates the protocol from its initial state, carrying the costate
    /// when the protocol has one.
    pub fn simulate(&self) -> Result<Trajectory> {
        let sched = self.schedule()?;
        let q0 = match (self.costate, self.segments.first()) {
            (Some(q), Some(Segment::Quench { axis, angle })) => {
                Some(crate::CostateBloch(rotate_vec(q, *axis, -angle)?))
            }
            (Some(q), _) => Some(crate::CostateBloch(q)),
            (None, _) => None,
        };
        integrate(&sched, BlochState::from_vec(self.initial)?, q0, &self.model, self.objective)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("protocol serializes")
    }
}

/// Grid and clamp settings for synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    /// Integration step in units of `1/gamma`.
    pub gamma_step: f64,
    /// Clamp for infinite gaps, in units of `1/beta`.
    pub beta_eps_max: f64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self { gamma_step: DEFAULT_GAMMA_STEP, beta_eps_max: 50.0 }
    }
}

fn quench_onto(from: Vec3, to: Vec3) -> Segment {
    let (axis, angle) = aligning_rotation(from, to);
    Segment::Quench { axis, angle }
}

fn check_model(model: &DissipatorModel) -> Result<()> {
    if !(model.gamma > 0.0) {
        return Err(domain("synthesis needs gamma > 0"));
    }
    Ok(())
}

fn open_segment(model: &DissipatorModel, xs: &[f64], duration: f64) -> Segment {
    let n = xs.len() - 1;
    let dt = if n == 0 { 0.0 } else { duration / n as f64 };
    Segment::OpenEvolution { eps: xs.iter().map(|x| 2.0 * x / model.beta).collect(), dt, duration }
}

/// Heat-minimizing protocol between `rho0` and `rho_tau` over horizon `tau`.
///
/// The open evolution follows the incoherent branch whose conserved value is
/// fitted by bisection so that it connects `-|a(0)|` to `-|a(tau)|` in
/// exactly `tau`.
pub fn synthesize_heat_protocol(
    model: &DissipatorModel,
    rho0: BlochState,
    rho_tau: BlochState,
    tau: f64,
    opts: &SynthesisOptions,
) -> Result<Protocol> {
    check_model(model)?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(domain(format!("horizon must be positive, got {tau}")));
    }
    let (a, b) = (-rho0.norm(), -rho_tau.norm());
    let (n, _) = grid_for(tau, opts.gamma_step / model.gamma)?;
    let start = Vec3::new(0.0, 0.0, a);
    let end = Vec3::new(0.0, 0.0, b);
    let build = |xs: Vec<f64>, branch: Option<BranchParams>, qz: f64, cost: f64| Protocol {
        objective: Objective::Heat,
        model: *model,
        segments: vec![quench_onto(rho0.vec(), start), open_segment(model, &xs, tau), quench_onto(end, rho_tau.vec())],
        initial: rho0.vec(),
        target: rho_tau.vec(),
        predicted_cost: cost,
        branch,
        costate: Some(Vec3::new(0.0, 0.0, qz)),
        caveats: vec![],
    };

    if a == b {
        // hold at the equilibrium gap: no flux, K = 0
        let x = (-a).atanh();
        let eps = 2.0 * x / model.beta;
        model.check_eps(eps)?;
        let p = BranchParams { k: 0.0, mu: 0.0, sign: 0.0 };
        return Ok(build(vec![x; n + 1], Some(p), 0.5 * eps, 0.0));
    }
    let cooling = b < a;
    let (branch, range) = match model.kind {
        DissipatorKind::Gibbs | DissipatorKind::Fermionic => fit_diagonal(model, a, b, tau, cooling)?,
        DissipatorKind::Bosonic => fit_bosonic(model, a, b, tau, cooling)?,
    };
    let xs = branch.samples(model, a, tau, n, range)?;
    if model.kind == DissipatorKind::Fermionic && xs.iter().any(|&x| x < 0.0) {
        return Err(Error::Infeasible {
            reason: "fermionic branch would need a negative gap within this horizon".into(),
            min_horizon: None,
        });
    }
    let heat = branch.heat(model, a, b, range)?;
    let qz = branch.costate_z(model, xs[0]);
    Ok(build(xs, Some(branch.params(model)), qz, heat))
}

fn too_short(tau: f64, min: f64) -> Error {
    Error::Infeasible {
        reason: format!("horizon {tau} is below the minimal time {min:.6} for these eigenvalues"),
        min_horizon: Some(min),
    }
}

/// Fits `c` (`K = -gamma c^2 / beta`) so the diagonal branch takes `tau`.
fn fit_diagonal(model: &DissipatorModel, a: f64, b: f64, tau: f64, cooling: bool) -> Result<(Branch, (f64, f64))> {
    let t_min = ideal_time(a, b, model.gamma, cooling);
    if tau <= t_min {
        return Err(too_short(tau, t_min));
    }
    let sigma = if cooling { 1.0 } else { -1.0 };
    let range = (-X_MAX, X_MAX);
    let dur = |ls: f64| Branch::Diagonal { c: sigma * ls.exp() }.duration(model, a, b, range).unwrap_or(f64::NAN);
    let ls = bisect(|ls| dur(ls) - tau, -40.0, 40.0).ok_or_else(|| too_short(tau, t_min))?;
    Ok((Branch::Diagonal { c: sigma * ls.exp() }, range))
}

/// Fits `mu < 0` on the bosonic minus (cooling) or plus (heating) branch.
fn fit_bosonic(model: &DissipatorModel, a: f64, b: f64, tau: f64, cooling: bool) -> Result<(Branch, (f64, f64))> {
    if cooling {
        let t_min = ideal_time(a, b, model.gamma, true);
        if tau <= t_min {
            return Err(too_short(tau, t_min));
        }
        let br = |lm: f64| Branch::Bosonic { mu: -lm.exp(), sign: -1.0 };
        let range = (X_MIN, X_MAX);
        let dur = |lm: f64| br(lm).duration(model, a, b, range).unwrap_or(f64::NAN);
        let lm = bisect(|lm| dur(lm) - tau, -30.0, 30.0).ok_or_else(|| too_short(tau, t_min))?;
        return Ok((br(lm), range));
    }
    // heating: the plus branch ends at a_z = -2|mu| as eps -> 0+
    if b >= 0.0 {
        return Err(Error::Infeasible { reason: "heating to a_z = 0 requires eps -> 0".into(), min_horizon: None });
    }
    let br = |m: f64| Branch::Bosonic { mu: -m, sign: 1.0 };
    let reaches = |m: f64| br(m).az(br(m).plus_end()) <= a;
    let mut m_max = 0.5 * b.abs();
    if !reaches(m_max) {
        let mut lo = 0.0;
        for _ in 0..80 {
            let mid = 0.5 * (lo + m_max);
            if reaches(mid) {
                lo = mid;
            } else {
                m_max = mid;
            }
        }
        m_max = lo;
    }
    let dur = |m: f64| {
        let brm = br(m);
        brm.duration(model, a, b, brm.x_range()).unwrap_or(f64::NAN)
    };
    let t_lo = dur(m_max);
    if tau <= t_lo {
        return Err(too_short(tau, t_lo));
    }
    let lm = bisect(|lm| dur(lm.exp()) - tau, -40.0, m_max.ln()).ok_or_else(|| too_short(tau, t_lo))?;
    let brm = br(lm.exp());
    Ok((brm, brm.x_range()))
}

/// Time-minimizing protocol. The open evolution runs at the clamp
/// `eps_max = beta_eps_max / beta`; the predicted cost is the unclamped time.
pub fn synthesize_time_protocol(
    model: &DissipatorModel,
    rho0: BlochState,
    rho_tau: BlochState,
    opts: &SynthesisOptions,
) -> Result<Protocol> {
    check_model(model)?;
    let (r0, r1) = (rho0.norm(), rho_tau.norm());
    let g = model.gamma;
    let eps_max = opts.beta_eps_max / model.beta;
    if r1 > r0 && r1 >= 1.0 - 1e-12 {
        return Err(Error::Infeasible {
            reason: "a pure target cannot be reached from a mixed state in finite time".into(),
            min_horizon: None,
        });
    }
    let purify = r1 >= r0;
    let mut caveats = vec![];
    // diagonal start/end of the open evolution and the gap used
    let (a, b, eps, ideal) = match model.kind {
        DissipatorKind::Gibbs => {
            let (a, b) = (-r0, -r1);
            let eps = if purify { eps_max } else { -eps_max };
            (a, b, eps, ideal_time(a, b, g, purify))
        }
        DissipatorKind::Fermionic if !purify => {
            // negative gaps are not allowed: flip to the excited side and relax down
            (r0, r1, eps_max, ideal_time(r0, r1, g, true))
        }
        DissipatorKind::Fermionic | DissipatorKind::Bosonic => (-r0, -r1, eps_max, ideal_time(-r0, -r1, g, true)),
    };
    let zero_time = model.kind == DissipatorKind::Bosonic && !purify;
    let duration = if zero_time {
        caveats.push(CAVEAT_ZERO_TIME.to_string());
        0.0
    } else {
        caveats.push(CAVEAT_CLAMPED.to_string());
        clamped_arrival_time(model, a, b, eps)?
    };
    let predicted = if zero_time { 0.0 } else { ideal };
    let (n, dt) = grid_for(duration, opts.gamma_step / g)?;
    let start = Vec3::new(0.0, 0.0, a);
    let end = Vec3::new(0.0, 0.0, b);
    let rates = model.rates(eps)?;
    let dz = a - rates.eq_z;
    // conserved-value condition with K = 0 on the diagonal
    let costate = (!zero_time && dz != 0.0).then(|| Vec3::new(0.0, 0.0, 1.0 / (rates.longitudinal * dz)));
    Ok(Protocol {
        objective: Objective::Time,
        model: *model,
        segments: vec![
            quench_onto(rho0.vec(), start),
            Segment::OpenEvolution { eps: vec![eps; n + 1], dt, duration },
            quench_onto(end, rho_tau.vec()),
        ],
        initial: rho0.vec(),
        target: rho_tau.vec(),
        predicted_cost: predicted,
        branch: None,
        costate,
        caveats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::run_summary;
    use crate::pmp::{verify_trajectory, Tolerances};

    fn gibbs() -> DissipatorModel {
        DissipatorModel::gibbs(1.0, 1.0).unwrap()
    }

    fn diag(z: f64) -> BlochState {
        BlochState::new(0.0, 0.0, z).unwrap()
    }

    #[test]
    fn gibbs_coherent_values() {
        let v = gibbs_coherent_az(1.0, 1.0).unwrap();
        // direct evaluation from sinh(1) and tanh(1/2)
        let (s, t) = (1f64.sinh(), 0.5f64.tanh());
        assert!((v - (-t * (1.0 + 1.0 / s) / (1.0 - 1.0 / s))).abs() < 1e-13);
        assert!(gibbs_coherent_az(0.0, 1.0).is_err());
        assert!(gibbs_coherent_az(1e-3, 1.0).unwrap() < -1e3);
    }

    #[test]
    fn bosonic_incoherent_values() {
        let m = v(-1.0);
        assert!((m.az - (-0.13558)).abs() < 1e-4);
        assert!(m.physical);
        let p = v(1.0);
        assert!(!p.physical && (p.az - (-1.5751)).abs() < 1e-3);
        assert_eq!(bosonic_incoherent_az(1.0, 1.0, 0.0, 1.0, -1.0).unwrap().az, -(0.5f64).tanh());
        // mu > sinh(beta eps) is required for K > 0
        assert!(matches!(bosonic_incoherent_az(3.0, 1.0, 1.0, 1.0, -1.0), Err(Error::BranchUndefined(_))));

        fn v(sign: f64) -> IncoherentValue {
            bosonic_incoherent_az(1.0, 1.0, -1.0, 1.0, sign).unwrap()
        }
    }

    #[test]
    fn bosonic_coherent_matches_conditions() {
        // the coherent ansatz q = (eps/2) a / (a_z - a_z^eq) with the returned
        // transverse norm satisfies the two scalar conditions formally
        let (beta, gamma) = (1.3, 0.7);
        for &(eps, k) in &[(0.2, -3.0), (0.5, 4.0), (1.0, -2.5)] {
            for sign in [-1.0, 1.0] {
                let Ok(br) = bosonic_coherent_branch(eps, beta, k, gamma, sign) else { continue };
                let aeq = -(0.5 * beta * eps).tanh();
                let slope = -0.5 * beta * (1.0 - aeq * aeq);
                let dz = br.az - aeq;
                let qz = 0.5 * eps * br.az / dz;
                let p = qz - 0.5 * eps;
                let perp = 0.5 * eps * br.xy_norm_sq / dz;
                let c9 = perp + 2.0 * dz * p - 2.0 * aeq * k / gamma;
                let c10 = (perp + 2.0 * br.az * p) * slope + aeq * dz;
                assert!(c9.abs() < 1e-9 && c10.abs() < 1e-9, "{c9} {c10}");
                assert!(br.xy_norm_sq < 0.0);
            }
        }
    }

    #[test]
    fn diagonal_branch_inverse_and_timing() {
        let m = gibbs();
        let range = (-X_MAX, X_MAX);
        for c in [-2.0, -0.3, 0.1, 1.5] {
            let br = Branch::Diagonal { c };
            for x in [-3.0, -0.2, 0.0, 0.7, 4.0] {
                let z = br.az(x);
                if z.abs() >= 1.0 {
                    continue;
                }
                assert!((br.x_of_az(z, range).unwrap() - x).abs() < 1e-9);
            }
            let (a, b) = (br.az(-0.5), br.az(1.2));
            let closed = br.duration(&m, a, b, range).unwrap();
            let numeric = quad(|z| 1.0 / br.rate(&m, br.x_of_az(z, range).unwrap()), a, b, 64);
            assert!((closed - numeric).abs() < 1e-10 * closed.abs(), "{closed} {numeric}");
            let closed = br.heat(&m, a, b, range).unwrap();
            let numeric = -quad(|z| br.x_of_az(z, range).unwrap(), a, b, 64) / m.beta;
            assert!((closed - numeric).abs() < 1e-10 * closed.abs().max(1.0));
        }
    }

    #[test]
    fn identity_and_errors() {
        let m = gibbs();
        let eq = diag(m.equilibrium_az(0.8));
        let p = synthesize_heat_protocol(&m, eq, eq, 1.0, &SynthesisOptions::default()).unwrap();
        assert_eq!(p.predicted_cost, 0.0);
        let t = p.simulate().unwrap();
        assert!(t.total_heat().abs() < 1e-14);
        assert!((t.final_state().z - eq.vec().z).abs() < 1e-12);

        match synthesize_heat_protocol(&m, diag(-0.2), diag(-0.8), 1.0, &SynthesisOptions::default()) {
            Err(Error::Infeasible { min_horizon: Some(t), .. }) => assert!((t - 4f64.ln()).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    fn check_heat_protocol(p: &Protocol) {
        let traj = p.simulate().unwrap();
        let heat = traj.total_heat();
        assert!(
            (heat - p.predicted_cost).abs() <= 1e-6 * p.predicted_cost.abs().max(1e-3),
            "{heat} vs {}",
            p.predicted_cost
        );
        assert!(traj.final_state().max_abs_diff(p.target) < 1e-6, "{:?}", traj.final_state());
        let n = traj.len();
        let rep =
            verify_trajectory(&traj, Objective::Heat, p.branch.map(|b| b.k), 1..n - 1, &Tolerances::default()).unwrap();
        assert!(rep.verdict, "worst {} at {}", rep.worst_relative, rep.worst_sample);
        assert!(rep.hamiltonian.stdev <= 1e-6 * rep.hamiltonian.k.abs().max(1e-12) || rep.hamiltonian.stdev < 1e-12);
    }

    #[test]
    fn gibbs_heat_protocols_simulate_to_prediction() {
        let m = gibbs();
        let o = SynthesisOptions::default();
        for (a, b, tau) in [(-0.2, -0.6, 2.0), (-0.7, -0.3, 2.0), (-0.5, -0.45, 0.5)] {
            let p = synthesize_heat_protocol(&m, diag(a), diag(b), tau, &o).unwrap();
            check_heat_protocol(&p);
        }
        // a longer horizon releases less heat when cooling
        let p1 = synthesize_heat_protocol(&m, diag(-0.2), diag(-0.6), 1.0, &o).unwrap();
        let p2 = synthesize_heat_protocol(&m, diag(-0.2), diag(-0.6), 4.0, &o).unwrap();
        assert!(p2.predicted_cost < p1.predicted_cost);
    }

    #[test]
    fn coherent_target_only_changes_final_quench() {
        let m = gibbs();
        let o = SynthesisOptions::default();
        let r = 0.6 / 2f64.sqrt();
        let tilted = BlochState::new(r, 0.0, -r).unwrap();
        let p1 = synthesize_heat_protocol(&m, diag(-0.2), diag(-0.6), 2.0, &o).unwrap();
        let p2 = synthesize_heat_protocol(&m, diag(-0.2), tilted, 2.0, &o).unwrap();
        let (e1, _, _) = p1.open_evolution().unwrap();
        let (e2, _, _) = p2.open_evolution().unwrap();
        assert!(e1.iter().zip(e2).all(|(x, y)| (x - y).abs() < 1e-12));
        assert!((p1.predicted_cost - p2.predicted_cost).abs() < 1e-12);
        let t = p2.simulate().unwrap();
        assert!(t.final_state().max_abs_diff(tilted.vec()) < 1e-6);
        check_heat_protocol(&p2);
    }

    #[test]
    fn bosonic_and_fermionic_heat_protocols() {
        let o = SynthesisOptions::default();
        let b = DissipatorModel::bosonic(1.0, 1.0).unwrap();
        for (a0, a1, tau) in [(-0.2, -0.6, 2.0), (-0.3, -0.5, 1.5), (-0.6, -0.3, 2.0)] {
            let p = synthesize_heat_protocol(&b, diag(a0), diag(a1), tau, &o).unwrap();
            check_heat_protocol(&p);
        }
        let f = DissipatorModel::fermionic(1.0, 1.0).unwrap();
        let p = synthesize_heat_protocol(&f, diag(-0.2), diag(-0.6), 2.0, &o).unwrap();
        check_heat_protocol(&p);
    }

    #[test]
    fn time_protocol_values() {
        let m = gibbs();
        let o = SynthesisOptions::default();
        let p = synthesize_time_protocol(&m, diag(-0.2), diag(-0.8), &o).unwrap();
        assert!((p.predicted_cost - 4f64.ln()).abs() < 1e-12);
        let p = synthesize_time_protocol(&m, diag(-0.8), diag(-0.2), &o).unwrap();
        assert!((p.predicted_cost - 1.5f64.ln()).abs() < 1e-12);
        let (_, _, d) = p.open_evolution().unwrap();
        assert!((d - 1.5f64.ln()).abs() < 1e-9);

        // unitary equivalence: zero open evolution
        let p = synthesize_time_protocol(&m, BlochState::new(0.3, 0.0, 0.0).unwrap(), diag(-0.3), &o).unwrap();
        assert_eq!(p.predicted_cost, 0.0);
        let t = p.simulate().unwrap();
        assert!(t.final_state().max_abs_diff(Vec3::new(0.0, 0.0, -0.3)) < 1e-12);

        // fermionic purity loss reuses the +eps_max relaxation from the excited side
        let f = DissipatorModel::fermionic(1.0, 1.0).unwrap();
        let p = synthesize_time_protocol(&f, diag(-0.8), diag(-0.2), &o).unwrap();
        assert!((p.predicted_cost - 1.5f64.ln()).abs() < 1e-12);
        let t = p.simulate().unwrap();
        assert!(t.final_state().max_abs_diff(Vec3::new(0.0, 0.0, -0.2)) < 1e-8);

        let b = DissipatorModel::bosonic(1.0, 1.0).unwrap();
        let p = synthesize_time_protocol(&b, diag(-0.8), diag(-0.2), &o).unwrap();
        assert_eq!(p.predicted_cost, 0.0);
        assert!(p.caveats.iter().any(|c| c == CAVEAT_ZERO_TIME));

        assert!(matches!(synthesize_time_protocol(&m, diag(-0.5), diag(-1.0), &o), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn time_protocol_costate_satisfies_conditions() {
        let o = SynthesisOptions::default();
        for m in [gibbs(), DissipatorModel::bosonic(1.0, 1.0).unwrap(), DissipatorModel::fermionic(1.0, 1.0).unwrap()] {
            let p = synthesize_time_protocol(&m, diag(-0.2), diag(-0.8), &o).unwrap();
            let t = p.simulate().unwrap();
            let n = t.len();
            let rep = verify_trajectory(&t, Objective::Time, None, 1..n - 1, &Tolerances::default()).unwrap();
            assert!(rep.verdict, "{:?} {}", m.kind, rep.worst_relative);
            assert!(rep.hamiltonian.max_deviation.abs() < 1e-8);
        }
    }

    #[test]
    fn clamped_arrival_converges() {
        let m = gibbs();
        let ideal = 4f64.ln();
        let mut last = f64::INFINITY;
        for be in [10.0, 20.0, 50.0] {
            let t = clamped_arrival_time(&m, -0.2, -0.8, be).unwrap();
            let err = (t - ideal).abs();
            assert!(err < last);
            // O(exp(-beta eps_max))
            assert!(err < 10.0 * (-be).exp() + 1e-14);
            last = err;
        }
        let sched = ControlSchedule::constant(2.0, 1e-3, 50.0).unwrap();
        let s = run_summary(&sched, diag(-0.2), &m, Some(0.8)).unwrap();
        assert!((s.arrival.unwrap() - ideal).abs() < 1e-9);
    }

    #[test]
    fn coherent_decay_examples() {
        assert!((coherent_decay_time(0.8, 0.2, 1.0).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert_eq!(coherent_decay_time(0.5, 0.5, 1.0).unwrap(), 0.0);
        assert!((coherent_decay_time(1.0, (-1f64).exp(), 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(coherent_decay_time(0.2, 0.8, 1.0), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn protocol_json_round_trip() {
        let p = synthesize_time_protocol(&gibbs(), diag(-0.2), diag(-0.8), &SynthesisOptions::default()).unwrap();
        let back: Protocol = serde_json::from_str(&p.to_json()).unwrap();
        assert_eq!(back, p);
        assert!(p.to_json().contains("\"type\": \"open_evolution\""));
    }
}
