//! Algebraic optimality conditions for heat and time minimization.
//!
//! Each condition is reported raw and relative to its largest addend. Keys:
//!
//! | key | heat | time |
//! |---|---|---|
//! | `conserved` | pseudo-Hamiltonian balance against `K` | same with `K = 0`, divided by `gamma` |
//! | `eps_stationarity` | derivative of the pseudo-Hamiltonian in `eps` | same |
//! | `collinearity` | `|a x q|` | same |
//! | `coherence_x`, `coherence_y` | transverse components of the frame-rotation condition | same |
//! | `pseudo_hamiltonian` | full pseudo-Hamiltonian minus `K` | full pseudo-Hamiltonian |

use serde::Serialize;

use crate::bloch::{CostateBloch, QubitOperator, Vec3};
use crate::dissipators::{DissipatorKind, DissipatorModel};
use crate::dynamics::{pseudo_hamiltonian, pseudo_hamiltonian_series, Objective, PseudoHamiltonianValue, Trajectory};
use crate::error::{domain, Error, Result};
use crate::frame::LambdaCoefficients;

/// Pass thresholds for residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub relative: f64,
    /// Raw residuals at or below this pass regardless of scale.
    pub absolute: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { relative: 1e-6, absolute: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    #[serde(rename = "eq")]
    pub key: &'static str,
    pub raw: f64,
    pub relative: f64,
    pub pass: bool,
}

impl Residual {
    /// Sum of `terms`, normalized by the largest of `|terms|` and `extra_scale`.
    fn new(key: &'static str, terms: &[f64], extra_scale: f64, tol: &Tolerances) -> Self {
        let raw: f64 = terms.iter().sum();
        Self::from_raw(key, raw, terms.iter().map(|t| t.abs()).fold(extra_scale.abs(), f64::max), tol)
    }

    fn from_raw(key: &'static str, raw: f64, scale: f64, tol: &Tolerances) -> Self {
        let relative = if raw == 0.0 {
            0.0
        } else if scale > 0.0 {
            raw.abs() / scale
        } else {
            f64::INFINITY
        };
        let pass = raw.is_finite() && (raw.abs() <= tol.absolute || relative <= tol.relative);
        Self { key, raw, relative, pass }
    }
}

/// Local test of minimality in the controls: the pseudo-Hamiltonian at
/// `eps ± delta` and each generator component `± delta`, relative to nominal.
/// Heuristic; not part of the verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlProbe {
    pub delta: f64,
    /// Smallest change of the pseudo-Hamiltonian over the perturbations.
    pub min_change: f64,
    pub looks_minimal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PmpReport {
    pub objective: Objective,
    pub model: DissipatorModel,
    pub residuals: Vec<Residual>,
    /// Conserved pseudo-Hamiltonian value used by the report.
    pub k: f64,
    pub verdict: bool,
    pub probe: Option<ControlProbe>,
}

impl PmpReport {
    fn new(objective: Objective, model: DissipatorModel, residuals: Vec<Residual>, k: f64) -> Self {
        let verdict = residuals.iter().all(|r| r.pass);
        Self { objective, model, residuals, k, verdict, probe: None }
    }

    pub fn get(&self, key: &str) -> Option<&Residual> {
        self.residuals.iter().find(|r| r.key == key)
    }

    pub fn worst_relative(&self) -> f64 {
        self.residuals.iter().map(|r| r.relative).fold(0.0, f64::max)
    }

    /// One JSON object per condition.
    pub fn to_json_lines(&self) -> Vec<String> {
        self.residuals.iter().map(|r| serde_json::to_string(r).expect("residual serializes")).collect()
    }
}

pub const KEYS: [&str; 6] =
    ["conserved", "eps_stationarity", "collinearity", "coherence_x", "coherence_y", "pseudo_hamiltonian"];

fn require_rate(model: &DissipatorModel) -> Result<()> {
    if model.gamma <= 0.0 {
        return Err(domain("optimality conditions need gamma > 0"));
    }
    Ok(())
}

fn collinearity(a: Vec3, q: Vec3, tol: &Tolerances) -> Residual {
    Residual::from_raw("collinearity", a.cross(q).norm(), a.norm() * q.norm(), tol)
}

/// Heat-minimization conditions at one instant with `Lambda = 0`.
pub fn heat_residuals(
    model: &DissipatorModel,
    a: Vec3,
    q: Vec3,
    eps: f64,
    k: f64,
    tol: &Tolerances,
) -> Result<PmpReport> {
    require_rate(model)?;
    model.check_eps(eps)?;
    let g = model.gamma;
    let aeq = model.equilibrium_az(eps);
    let slope = model.equilibrium_az_slope(eps);
    let dz = a.z - aeq;
    let p = q.z - 0.5 * eps;
    let (tx, ty) = (a.x * q.x, a.y * q.y);
    let half = 0.5 * eps;
    let r = |key, terms: &[f64]| Residual::new(key, terms, 0.0, tol);
    let mut out = match model.kind {
        DissipatorKind::Gibbs => vec![
            r("conserved", &[tx, ty, dz * p, k / g]),
            r("eps_stationarity", &[slope * p, 0.5 * dz]),
            collinearity(a, q, tol),
            r("coherence_x", &[aeq * q.x, half * a.x]),
            r("coherence_y", &[aeq * q.y, half * a.y]),
        ],
        DissipatorKind::Bosonic => vec![
            r("conserved", &[tx, ty, 2.0 * dz * p, -2.0 * aeq * k / g]),
            r("eps_stationarity", &[slope * tx, slope * ty, 2.0 * slope * a.z * p, aeq * dz]),
            collinearity(a, q, tol),
            r("coherence_x", &[a.x * p, -aeq * q.x]),
            r("coherence_y", &[a.y * p, -aeq * q.y]),
        ],
        DissipatorKind::Fermionic => vec![
            r("conserved", &[0.5 * tx, 0.5 * ty, dz * p, k / g]),
            r("eps_stationarity", &[slope * p, 0.5 * dz]),
            collinearity(a, q, tol),
            r("coherence_x", &[dz * q.x, -half * a.x]),
            r("coherence_y", &[dz * q.y, -half * a.y]),
        ],
    };
    let h = pseudo_hamiltonian(model, a, q, eps, &LambdaCoefficients::ZERO, Objective::Heat)?;
    out.push(Residual::from_raw("pseudo_hamiltonian", h - k, h.abs().max(k.abs()), tol));
    Ok(PmpReport::new(Objective::Heat, *model, out, k))
}

/// Time-minimization conditions at one instant with `Lambda = 0`.
pub fn time_residuals(model: &DissipatorModel, a: Vec3, q: Vec3, eps: f64, tol: &Tolerances) -> Result<PmpReport> {
    require_rate(model)?;
    let rates = model.rates(eps)?;
    let g = model.gamma;
    let slope = model.equilibrium_az_slope(eps);
    let aeq = rates.eq_z;
    let dz = a.z - aeq;
    let (tx, ty) = (a.x * q.x, a.y * q.y);
    let qn = q.norm();
    // slope terms are single products; scale them by their largest possible size
    let slope_scale = 0.5 * model.beta * qn * a.norm().max(1e-300);
    let r = |key, terms: &[f64], extra: f64| Residual::new(key, terms, extra, tol);
    // conserved: pseudo-Hamiltonian / gamma = 1/gamma + q.(dissipative flow)/gamma
    let conserved = r(
        "conserved",
        &[1.0 / g, -rates.transverse * tx / g, -rates.transverse * ty / g, -rates.longitudinal * dz * q.z / g],
        0.0,
    );
    let mut out = match model.kind {
        DissipatorKind::Gibbs | DissipatorKind::Fermionic => vec![
            conserved,
            r("eps_stationarity", &[slope * q.z], 0.5 * model.beta * qn),
            collinearity(a, q, tol),
            r("coherence_x", &[aeq * q.x], aeq.abs() * qn),
            r("coherence_y", &[aeq * q.y], aeq.abs() * qn),
        ],
        DissipatorKind::Bosonic => vec![
            conserved,
            r("eps_stationarity", &[slope * tx, slope * ty, 2.0 * slope * a.z * q.z], slope_scale),
            collinearity(a, q, tol),
            r("coherence_x", &[dz * q.x], dz.abs() * qn),
            r("coherence_y", &[dz * q.y], dz.abs() * qn),
        ],
    };
    if model.kind == DissipatorKind::Fermionic {
        out[3] = r("coherence_x", &[dz * q.x], dz.abs() * qn);
        out[4] = r("coherence_y", &[dz * q.y], dz.abs() * qn);
    }
    let h = pseudo_hamiltonian(model, a, q, eps, &LambdaCoefficients::ZERO, Objective::Time)?;
    out.push(Residual::from_raw("pseudo_hamiltonian", h, 1.0, tol));
    Ok(PmpReport::new(Objective::Time, *model, out, 0.0))
}

/// Residuals of the costate-state commutator condition (Bloch form,
/// `|a x q|`) and of the frame-rotation stationarity condition (matrix form).
pub fn commutator_conditions(
    model: &DissipatorModel,
    a: Vec3,
    q: Vec3,
    eps: f64,
    objective: Objective,
) -> Result<(f64, f64)> {
    let ops = model.lindblad_ops(eps)?;
    let d = QubitOperator::diag(eps, 0.0);
    let i = num_complex::Complex64::i();
    let rho = QubitOperator::from_pauli(0.5, a * 0.5);
    let pi = CostateBloch(q).to_operator();
    let gen = |x: &QubitOperator| d.commutator(x).scale(-i) + ops.apply(x);
    let gen_adj = |x: &QubitOperator| d.commutator(x).scale(i) + ops.apply_adjoint(x);
    let mut m = pi.commutator(&gen(&rho)) + rho.commutator(&gen_adj(&pi));
    if objective == Objective::Heat {
        m = m - rho.commutator(&gen_adj(&d));
    }
    Ok((a.cross(q).norm(), m.max_abs()))
}

/// Pseudo-Hamiltonian statistics along a trajectory carrying costates.
pub fn conserved_k(traj: &Trajectory, objective: Objective) -> Result<PseudoHamiltonianValue> {
    pseudo_hamiltonian_series(traj, objective)
}

/// Perturbs `eps` and each generator coefficient by `±delta`.
pub fn control_probe(
    model: &DissipatorModel,
    a: Vec3,
    q: Vec3,
    eps: f64,
    objective: Objective,
    delta: f64,
) -> Result<ControlProbe> {
    let zero = LambdaCoefficients::ZERO;
    let h0 = pseudo_hamiltonian(model, a, q, eps, &zero, objective)?;
    let mut min_change = f64::INFINITY;
    for s in [-delta, delta] {
        if let Ok(h) = pseudo_hamiltonian(model, a, q, eps + s, &zero, objective) {
            min_change = min_change.min(h - h0);
        }
        for j in 0..4 {
            let mut c = [0.0; 4];
            c[j] = s;
            let l = LambdaCoefficients::new(c[0], c[1], c[2], c[3]);
            min_change = min_change.min(pseudo_hamiltonian(model, a, q, eps, &l, objective)? - h0);
        }
    }
    let scale = h0.abs().max(1.0) * delta * delta;
    Ok(ControlProbe { delta, min_change, looks_minimal: min_change >= -scale })
}

/// Per-sample reports for a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryReport {
    pub objective: Objective,
    /// Conserved value used for the heat conditions.
    pub k: f64,
    pub hamiltonian: PseudoHamiltonianValue,
    pub samples: Vec<(f64, PmpReport)>,
    pub verdict: bool,
    /// Sample index of the largest relative residual.
    pub worst_sample: usize,
    pub worst_relative: f64,
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// Evaluates the conditions at samples `range` of a trajectory. For the heat
/// objective `k` defaults to the median pseudo-Hamiltonian over `range`, so a
/// localized defect does not shift the reference for every sample.
pub fn verify_trajectory(
    traj: &Trajectory,
    objective: Objective,
    k: Option<f64>,
    range: std::ops::Range<usize>,
    tol: &Tolerances,
) -> Result<TrajectoryReport> {
    let qs = traj.costates.as_ref().ok_or(Error::MissingCostate)?;
    let all = conserved_k(traj, objective)?;
    let hamiltonian = PseudoHamiltonianValue::from_values(all.values[range.clone()].to_vec());
    let k = match objective {
        Objective::Heat => k.unwrap_or_else(|| median(&hamiltonian.values)),
        Objective::Time => 0.0,
    };
    let mut samples = Vec::with_capacity(range.len());
    let (mut worst_sample, mut worst_relative) = (range.start, 0.0);
    for j in range {
        let (a, q, eps) = (traj.states[j], qs[j], traj.eps[j]);
        let mut rep = match objective {
            Objective::Heat => heat_residuals(&traj.model, a, q, eps, k, tol)?,
            Objective::Time => time_residuals(&traj.model, a, q, eps, tol)?,
        };
        rep.probe = Some(control_probe(&traj.model, a, q, eps, objective, 1e-4)?);
        let w = rep.worst_relative();
        if w > worst_relative {
            worst_relative = w;
            worst_sample = j;
        }
        samples.push((traj.times[j], rep));
    }
    let verdict = samples.iter().all(|(_, r)| r.verdict);
    Ok(TrajectoryReport { objective, k, hamiltonian, samples, verdict, worst_sample, worst_relative })
}

/// Values of `a_z` in `(-1, 1)` at which the fermionic coherent ansatz
/// (`q` collinear with `a`, transverse conditions solved) also satisfies
/// `eps` stationarity, found by a sign-change scan excluding the pole at
/// `a_z = a_z^eq`.
pub fn fermionic_coherent_roots(model: &DissipatorModel, eps: f64, grid: usize) -> Result<Vec<f64>> {
    let f = DissipatorModel { kind: DissipatorKind::Fermionic, ..*model };
    let aeq = f.equilibrium_az(eps);
    let tol = Tolerances::default();
    let stationarity = |z: f64| -> Result<Option<f64>> {
        let dz = z - aeq;
        if dz == 0.0 {
            return Ok(None);
        }
        let a = Vec3::new(0.5 * (1.0 - z * z).sqrt(), 0.0, z);
        let q = a * (0.5 * eps / dz);
        let rep = heat_residuals(&f, a, q, eps, 0.0, &tol)?;
        Ok(rep.get("eps_stationarity").map(|r| r.raw))
    };
    let mut roots = vec![];
    let mut prev: Option<(f64, f64)> = None;
    for j in 1..grid {
        let z = -1.0 + 2.0 * j as f64 / grid as f64;
        let Some(v) = stationarity(z)? else {
            prev = None;
            continue;
        };
        if let Some((pz, pv)) = prev {
            let same_side = (pz - aeq).signum() == (z - aeq).signum();
            if same_side && (v == 0.0 || pv.signum() != v.signum()) {
                roots.push(if v == 0.0 { z } else { 0.5 * (pz + z) });
            }
        }
        prev = Some((z, v));
    }
    Ok(roots)
}
