//! Thermal dissipators in Bloch and matrix form.
//!
//! Basis convention: index 0 is the excited level (energy `eps`), index 1 the
//! ground level, so the rotating-frame Hamiltonian is `(eps/2)(1 + sigma_z)`.

use serde::{Deserialize, Serialize};

use crate::bloch::{BlochState, QubitOperator, Vec3};
use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DissipatorKind {
    /// Linear relaxation toward the instantaneous Gibbs state.
    #[serde(alias = "gibbs_mixing")]
    Gibbs,
    /// Two-level system coupled to a bosonic bath.
    Bosonic,
    /// Two-level system coupled to a fermionic reservoir.
    Fermionic,
}

impl DissipatorKind {
    pub const ALL: [DissipatorKind; 3] = [DissipatorKind::Gibbs, DissipatorKind::Bosonic, DissipatorKind::Fermionic];

    pub fn name(self) -> &'static str {
        match self {
            DissipatorKind::Gibbs => "gibbs",
            DissipatorKind::Bosonic => "bosonic",
            DissipatorKind::Fermionic => "fermionic",
        }
    }
}

impl std::str::FromStr for DissipatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gibbs" | "gibbs_mixing" => Ok(DissipatorKind::Gibbs),
            "bosonic" => Ok(DissipatorKind::Bosonic),
            "fermionic" => Ok(DissipatorKind::Fermionic),
            other => Err(domain(format!("unknown dissipator model '{other}'"))),
        }
    }
}

/// Dissipator choice with rate `gamma` and inverse temperature `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DissipatorModel {
    pub kind: DissipatorKind,
    pub gamma: f64,
    pub beta: f64,
}

/// Thermal occupations at gap `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OccupationNumbers {
    pub n_bosonic: f64,
    pub n_fermionic: f64,
}

/// Bloch-form dissipator: `da/dt = (-transverse ax, -transverse ay, -longitudinal (az - eq_z))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxationRates {
    pub transverse: f64,
    pub longitudinal: f64,
    pub eq_z: f64,
}

impl RelaxationRates {
    pub fn apply(&self, a: Vec3) -> Vec3 {
        Vec3::new(-self.transverse * a.x, -self.transverse * a.y, -self.longitudinal * (a.z - self.eq_z))
    }
}

/// Thermal occupations; stable for large `beta * eps`.
pub fn occupations(beta: f64, eps: f64) -> OccupationNumbers {
    let x = beta * eps;
    let n_bosonic = if x > 0.0 { (-x).exp() / -(-x).exp_m1() } else { 1.0 / x.exp_m1() };
    let n_fermionic = if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (x.exp() + 1.0)
    };
    OccupationNumbers { n_bosonic, n_fermionic }
}

impl DissipatorModel {
    /// `gamma = 0` is accepted for unitary-only checks.
    pub fn new(kind: DissipatorKind, gamma: f64, beta: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(domain(format!("gamma must be finite and non-negative, got {gamma}")));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(domain(format!("beta must be finite and positive, got {beta}")));
        }
        Ok(Self { kind, gamma, beta })
    }

    pub fn gibbs(gamma: f64, beta: f64) -> Result<Self> {
        Self::new(DissipatorKind::Gibbs, gamma, beta)
    }

    pub fn bosonic(gamma: f64, beta: f64) -> Result<Self> {
        Self::new(DissipatorKind::Bosonic, gamma, beta)
    }

    pub fn fermionic(gamma: f64, beta: f64) -> Result<Self> {
        Self::new(DissipatorKind::Fermionic, gamma, beta)
    }

    /// `-tanh(beta eps / 2)`.
    pub fn equilibrium_az(&self, eps: f64) -> f64 {
        -(0.5 * self.beta * eps).tanh()
    }

    /// Derivative of [`Self::equilibrium_az`] with respect to `eps`.
    pub fn equilibrium_az_slope(&self, eps: f64) -> f64 {
        let c = (0.5 * self.beta * eps).cosh();
        -0.5 * self.beta / (c * c)
    }

    pub fn occupations(&self, eps: f64) -> OccupationNumbers {
        occupations(self.beta, eps)
    }

    /// Rejects gaps outside the model's domain.
    pub fn check_eps(&self, eps: f64) -> Result<()> {
        if eps.is_nan() {
            return Err(domain("eps is NaN"));
        }
        match self.kind {
            DissipatorKind::Gibbs => Ok(()),
            DissipatorKind::Bosonic if eps == 0.0 => Err(Error::SingularRate { eps }),
            DissipatorKind::Bosonic | DissipatorKind::Fermionic if eps < 0.0 => {
                Err(domain(format!("negative gap {eps} not allowed for the {} model", self.kind.name())))
            }
            _ => Ok(()),
        }
    }

    pub fn rates(&self, eps: f64) -> Result<RelaxationRates> {
        self.check_eps(eps)?;
        let g = self.gamma;
        let eq_z = self.equilibrium_az(eps);
        Ok(match self.kind {
            DissipatorKind::Gibbs => RelaxationRates { transverse: g, longitudinal: g, eq_z },
            DissipatorKind::Bosonic => {
                // coth(beta eps / 2) = -1 / eq_z
                let coth = 1.0 / (0.5 * self.beta * eps).tanh();
                RelaxationRates { transverse: 0.5 * g * coth, longitudinal: g * coth, eq_z }
            }
            DissipatorKind::Fermionic => RelaxationRates { transverse: 0.5 * g, longitudinal: g, eq_z },
        })
    }

    /// Dissipative contribution to `da/dt`.
    pub fn apply_dissipator(&self, a: BlochState, eps: f64) -> Result<Vec3> {
        Ok(self.rates(eps)?.apply(a.vec()))
    }

    /// Standard-form jump operators in the eigenbasis of `(eps/2)(1 + sigma_z)`.
    pub fn lindblad_ops(&self, eps: f64) -> Result<LindbladOpSet> {
        self.check_eps(eps)?;
        let lower = QubitOperator::real(0.0, 0.0, 1.0, 0.0);
        let p_exc = QubitOperator::diag(1.0, 0.0);
        let p_gnd = QubitOperator::diag(0.0, 1.0);
        Ok(self.ops_from_frame(eps, p_exc, p_gnd, lower))
    }

    /// Jump operators built from the spectral projectors of a lab-frame
    /// Hamiltonian `h` whose two levels are split by `eps` (excited minus ground).
    pub fn lindblad_ops_for(&self, h: &QubitOperator, eps: f64) -> Result<LindbladOpSet> {
        self.check_eps(eps)?;
        if !h.is_hermitian(1e-12) {
            return Err(domain("Hamiltonian is not Hermitian"));
        }
        let (lo, hi) = h.eigvals_hermitian();
        let gap = hi - lo;
        if gap <= 1e-12 * (hi.abs() + lo.abs()).max(1e-300) {
            return Err(Error::DegenerateSpectrum { t: 0.0, gap, floor: 0.0 });
        }
        if ((gap - eps.abs()) / gap).abs() > 1e-9 {
            return Err(domain(format!("Hamiltonian gap {gap} does not match |eps| = {}", eps.abs())));
        }
        let id = QubitOperator::identity();
        let p_hi = (*h - id.scale_re(lo)).scale_re(1.0 / gap);
        let p_lo = id - p_hi;
        let (p_exc, p_gnd) = if eps >= 0.0 { (p_hi, p_lo) } else { (p_lo, p_hi) };
        // |g><e| up to a phase: largest of P_g sigma_k P_e, normalized.
        let lower = [QubitOperator::sigma_x(), QubitOperator::sigma_y(), QubitOperator::sigma_z()]
            .into_iter()
            .map(|s| p_gnd * s * p_exc)
            .max_by(|a, b| a.frobenius().total_cmp(&b.frobenius()))
            .expect("three candidates");
        let lower = lower.scale_re(1.0 / lower.frobenius());
        Ok(self.ops_from_frame(eps, p_exc, p_gnd, lower))
    }

    fn ops_from_frame(
        &self,
        eps: f64,
        p_exc: QubitOperator,
        p_gnd: QubitOperator,
        lower: QubitOperator,
    ) -> LindbladOpSet {
        let g = self.gamma;
        let raise = lower.dagger();
        let occ = self.occupations(eps);
        let ops = match self.kind {
            DissipatorKind::Gibbs => {
                let w_exc = occ.n_fermionic;
                let w_gnd = 1.0 - w_exc;
                vec![(p_exc, g * w_exc), (raise, g * w_exc), (lower, g * w_gnd), (p_gnd, g * w_gnd)]
            }
            DissipatorKind::Bosonic => {
                vec![(lower, g * (1.0 + occ.n_bosonic)), (raise, g * occ.n_bosonic)]
            }
            DissipatorKind::Fermionic => {
                vec![(lower, g * (1.0 - occ.n_fermionic)), (raise, g * occ.n_fermionic)]
            }
        };
        LindbladOpSet { ops }
    }
}

/// Jump operators with their rates.
#[derive(Debug, Clone)]
pub struct LindbladOpSet {
    pub ops: Vec<(QubitOperator, f64)>,
}

impl LindbladOpSet {
    /// `sum_k r_k (L rho L^dag - {L^dag L, rho}/2)`.
    pub fn apply(&self, rho: &QubitOperator) -> QubitOperator {
        let mut out = QubitOperator::zero();
        for (l, r) in &self.ops {
            let ld = l.dagger();
            let ll = ld * *l;
            let term = *l * *rho * ld - ll.anticommutator(rho).scale_re(0.5);
            out = out + term.scale_re(*r);
        }
        out
    }

    /// Heisenberg-picture adjoint of [`Self::apply`].
    pub fn apply_adjoint(&self, x: &QubitOperator) -> QubitOperator {
        let mut out = QubitOperator::zero();
        for (l, r) in &self.ops {
            let ld = l.dagger();
            let ll = ld * *l;
            let term = ld * *x * *l - ll.anticommutator(x).scale_re(0.5);
            out = out + term.scale_re(*r);
        }
        out
    }
}

/// Max-abs gap between the fermionic dissipator and its Gibbs-plus-dephasing
/// decomposition, evaluated in matrix form.
pub fn fermionic_decomposition_check(model: &DissipatorModel, a: BlochState, eps: f64) -> Result<f64> {
    let fermi = DissipatorModel { kind: DissipatorKind::Fermionic, ..*model };
    let rho = a.to_density();
    let lhs = fermi.lindblad_ops(eps)?.apply(&rho);
    let p_exc = occupations(model.beta, eps).n_fermionic;
    let gibbs_state = QubitOperator::diag(p_exc, 1.0 - p_exc);
    let v = a.vec();
    let dephasing = QubitOperator::from_pauli(0.0, Vec3::new(v.x, v.y, 0.0)).scale_re(0.25 * model.gamma);
    let rhs = (gibbs_state - rho).scale_re(model.gamma) + dephasing;
    Ok(lhs.max_abs_diff(&rhs))
}

/// Max-abs gap between the dissipator of `H = U^dag D U` built from its own
/// spectral projectors and `U^dag D_D[U rho U^dag] U`.
pub fn h_covariance_check(model: &DissipatorModel, rho: &QubitOperator, u: &QubitOperator, eps: f64) -> Result<f64> {
    if !u.is_unitary(1e-12) {
        return Err(domain("U is not unitary"));
    }
    let d = QubitOperator::diag(eps, 0.0);
    let h = u.dagger().conjugate(&d);
    let lab = model.lindblad_ops_for(&h, eps)?.apply(rho);
    let rotated = u.dagger().conjugate(&model.lindblad_ops(eps)?.apply(&u.conjugate(rho)));
    Ok(lab.max_abs_diff(&rotated))
}

/// Reads the Bloch-vector rate out of a traceless matrix rate.
#[cfg(test)]
pub(crate) fn bloch_rate(drho: &QubitOperator) -> Vec3 {
    drho.hermitian_parts().1 * 2.0
}
