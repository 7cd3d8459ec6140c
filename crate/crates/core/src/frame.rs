//! Frame co-moving with the Hamiltonian eigenbasis.
//!
//! `H(t) = U(t)^dag D(t) U(t)` with `D` diagonal (excited level first) and
//! `dU/dt = i Lambda U`. Rotating-frame states are `U rho U^dag`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bloch::{exp_i_pauli, QubitOperator, Vec3};
use crate::error::{domain, Error, Result};
use crate::numerics::{cubic_weights, cumulative_integral, derivative};

/// Generator coefficients:
/// `Lambda = ((l0 + l3) 1 + 2 (l1 sx + l2 sy) + (l0 - l3) sz) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LambdaCoefficients {
    pub l0: f64,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

impl LambdaCoefficients {
    pub const ZERO: LambdaCoefficients = LambdaCoefficients { l0: 0.0, l1: 0.0, l2: 0.0, l3: 0.0 };

    pub fn new(l0: f64, l1: f64, l2: f64, l3: f64) -> Self {
        Self { l0, l1, l2, l3 }
    }

    /// Coefficient of the identity.
    pub fn trace_part(&self) -> f64 {
        0.5 * (self.l0 + self.l3)
    }

    /// Pauli vector `v` with `Lambda = trace_part + v.sigma`.
    pub fn pauli_vector(&self) -> Vec3 {
        Vec3::new(self.l1, self.l2, 0.5 * (self.l0 - self.l3))
    }

    pub fn to_operator(&self) -> QubitOperator {
        QubitOperator::from_pauli(self.trace_part(), self.pauli_vector())
    }

    /// Inverse of [`Self::to_operator`] for Hermitian input.
    pub fn from_operator(op: &QubitOperator) -> Self {
        let (c0, v) = op.hermitian_parts();
        Self { l0: c0 + v.z, l1: v.x, l2: v.y, l3: c0 - v.z }
    }

    fn axpy(self, w: f64, o: Self) -> Self {
        Self { l0: self.l0 + w * o.l0, l1: self.l1 + w * o.l1, l2: self.l2 + w * o.l2, l3: self.l3 + w * o.l3 }
    }

    pub fn is_finite(&self) -> bool {
        self.l0.is_finite() && self.l1.is_finite() && self.l2.is_finite() && self.l3.is_finite()
    }
}

/// How sampled controls are read between grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    /// Piecewise constant: sample `i` holds on `[t_i, t_{i+1})`.
    #[default]
    Hold,
    /// Local cubic through the four nearest samples.
    Cubic,
}

/// Evaluates uniformly sampled data inside step `i` at fraction `s`.
pub(crate) fn sample_at<T: Copy>(
    samples: &[T],
    interp: Interpolation,
    i: usize,
    s: f64,
    zero: T,
    axpy: impl Fn(T, f64, T) -> T,
) -> T {
    match interp {
        Interpolation::Hold => samples[i],
        Interpolation::Cubic => {
            let (first, w) = cubic_weights(samples.len(), i, s);
            w.iter().enumerate().fold(zero, |acc, (j, &wj)| axpy(acc, wj, samples[first + j]))
        }
    }
}

/// Generator samples on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSchedule {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<LambdaCoefficients>,
    pub interp: Interpolation,
}

impl LambdaSchedule {
    pub fn new(t0: f64, dt: f64, samples: Vec<LambdaCoefficients>, interp: Interpolation) -> Result<Self> {
        if samples.is_empty() {
            return Err(domain("empty generator schedule"));
        }
        if samples.len() > 1 && !(dt.is_finite() && dt > 0.0) {
            return Err(domain(format!("grid spacing must be positive, got {dt}")));
        }
        if samples.iter().any(|l| !l.is_finite()) {
            return Err(domain("non-finite generator sample"));
        }
        Ok(Self { t0, dt, samples, interp })
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + self.dt * (self.samples.len() - 1) as f64
    }

    /// Generator inside step `i` at fraction `s`.
    pub fn at_step(&self, i: usize, s: f64) -> LambdaCoefficients {
        sample_at(&self.samples, self.interp, i, s, LambdaCoefficients::ZERO, LambdaCoefficients::axpy)
    }

    /// Fourth-order Magnus propagator over `[t_i, t_i + frac dt]`.
    fn step_propagator(&self, i: usize, frac: f64) -> QubitOperator {
        let h = frac * self.dt;
        if self.interp == Interpolation::Hold {
            let l = self.samples[i];
            return exp_i_pauli(h * l.trace_part(), l.pauli_vector() * h);
        }
        let c = 3f64.sqrt() / 6.0;
        let l1 = self.at_step(i, frac * (0.5 - c));
        let l2 = self.at_step(i, frac * (0.5 + c));
        // Omega = (h/2)(A1 + A2) + (sqrt3 h^2 / 12)[A2, A1] with A = i Lambda;
        // [A2, A1] = -2i (v2 x v1).sigma
        let (v1, v2) = (l1.pauli_vector(), l2.pauli_vector());
        let corr = v2.cross(v1) * (-3f64.sqrt() * h * h / 6.0);
        let v = (v1 + v2) * (0.5 * h) + corr;
        exp_i_pauli(0.5 * h * (l1.trace_part() + l2.trace_part()), v)
    }

    /// `U(t)` from `U(t0) = u0`.
    pub fn reconstruct_u(&self, u0: &QubitOperator, t: f64) -> Result<QubitOperator> {
        let span = t - self.t0;
        if span < -1e-12 || t > self.t_end() + 1e-9 * self.dt.max(1.0) {
            return Err(domain(format!("time {t} outside schedule [{}, {}]", self.t0, self.t_end())));
        }
        let mut u = *u0;
        if span <= 0.0 || self.samples.len() < 2 {
            return Ok(u);
        }
        let steps = span / self.dt;
        let full = (steps.floor() as usize).min(self.samples.len() - 1);
        for i in 0..full {
            u = self.step_propagator(i, 1.0) * u;
        }
        let rest = steps - full as f64;
        if rest > 1e-12 && full < self.samples.len() - 1 {
            u = self.step_propagator(full, rest) * u;
        }
        Ok(u)
    }

    /// `U` at every grid point.
    pub fn reconstruct_path(&self, u0: &QubitOperator) -> Vec<QubitOperator> {
        let mut out = Vec::with_capacity(self.samples.len());
        let mut u = *u0;
        out.push(u);
        for i in 0..self.samples.len().saturating_sub(1) {
            u = self.step_propagator(i, 1.0) * u;
            out.push(u);
        }
        out
    }
}

/// Hermitian `H(t)` sampled on a uniform grid.
#[derive(Debug, Clone)]
pub struct HamiltonianPath {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<QubitOperator>,
}

impl HamiltonianPath {
    pub fn from_fn(t0: f64, dt: f64, n: usize, f: impl Fn(f64) -> QubitOperator) -> Self {
        Self { t0, dt, samples: (0..n).map(|k| f(t0 + k as f64 * dt)).collect() }
    }
}

/// Output of [`lambda_from_path`].
#[derive(Debug, Clone)]
pub struct PathFrame {
    pub lambda: LambdaSchedule,
    /// Diagonalizers at each sample (rows are bra eigenvectors, excited first).
    pub diagonalizers: Vec<QubitOperator>,
    /// `(excited, ground)` eigenvalues at each sample.
    pub energies: Vec<(f64, f64)>,
}

impl PathFrame {
    /// `U(t0)`; the default initial frame.
    pub fn u0(&self) -> QubitOperator {
        self.diagonalizers[0]
    }
}

fn eigvec(h: &QubitOperator, lambda: f64) -> [Complex64; 2] {
    let a = [h.get(0, 1), Complex64::from(lambda) - h.get(0, 0)];
    let b = [Complex64::from(lambda) - h.get(1, 1), h.get(1, 0)];
    let na = a[0].norm_sqr() + a[1].norm_sqr();
    let nb = b[0].norm_sqr() + b[1].norm_sqr();
    let (v, n) = if na >= nb { (a, na) } else { (b, nb) };
    let n = n.sqrt();
    [v[0] / n, v[1] / n]
}

fn inner(u: &[Complex64; 2], v: &[Complex64; 2]) -> Complex64 {
    u[0].conj() * v[0] + u[1].conj() * v[1]
}

fn align(prev: &[Complex64; 2], v: [Complex64; 2]) -> [Complex64; 2] {
    let ov = inner(prev, &v);
    if ov.norm() == 0.0 {
        return v;
    }
    let ph = ov.conj() / ov.norm();
    [v[0] * ph, v[1] * ph]
}

/// Generator of the eigenbasis frame along a Hamiltonian path.
///
/// Eigenvectors are phase-aligned sample to sample and then moved to the
/// parallel-transport gauge, so the generator has zero diagonal and
/// reconstructing `U` from it reproduces the eigenbasis.
pub fn lambda_from_path(path: &HamiltonianPath, gap_floor: Option<f64>) -> Result<PathFrame> {
    let n = path.samples.len();
    if n < 2 {
        return Err(domain("Hamiltonian path needs at least two samples"));
    }
    if !(path.dt.is_finite() && path.dt > 0.0) {
        return Err(domain("Hamiltonian path spacing must be positive"));
    }
    let mut energies = Vec::with_capacity(n);
    for h in &path.samples {
        if !h.is_hermitian(1e-12) {
            return Err(domain("Hamiltonian sample is not Hermitian"));
        }
        let (lo, hi) = h.eigvals_hermitian();
        energies.push((hi, lo));
    }
    let max_gap = energies.iter().map(|(e, g)| e - g).fold(0.0, f64::max);
    let floor = gap_floor.unwrap_or(1e-6 * max_gap);
    for (k, (e, g)) in energies.iter().enumerate() {
        let gap = e - g;
        if gap <= floor || gap == 0.0 {
            return Err(Error::DegenerateSpectrum { t: path.t0 + k as f64 * path.dt, gap, floor });
        }
    }

    // aligned excited eigenvectors; the ground vector is its orthogonal partner
    let mut exc: Vec<[Complex64; 2]> = Vec::with_capacity(n);
    for (k, h) in path.samples.iter().enumerate() {
        let v = eigvec(h, energies[k].0);
        exc.push(if k == 0 { v } else { align(&exc[k - 1], v) });
    }
    let mut gnd: Vec<[Complex64; 2]> = Vec::with_capacity(n);
    for (k, e) in exc.iter().enumerate() {
        let v = [-e[1].conj(), e[0].conj()];
        gnd.push(if k == 0 { v } else { align(&gnd[k - 1], v) });
    }

    // parallel transport: remove the accumulated Berry phase of each vector
    let transport = |vs: &mut Vec<[Complex64; 2]>| {
        let zero = [Complex64::default(); 2];
        let dv = derivative(vs, path.dt, zero, |acc, w, x| [acc[0] + x[0] * w, acc[1] + x[1] * w]);
        let conn: Vec<f64> = vs.iter().zip(&dv).map(|(v, d)| inner(v, d).im).collect();
        let phase = cumulative_integral(&conn, path.dt);
        for (v, p) in vs.iter_mut().zip(phase) {
            let f = Complex64::from_polar(1.0, -p);
            *v = [v[0] * f, v[1] * f];
        }
    };
    transport(&mut exc);
    transport(&mut gnd);

    let diagonalizers: Vec<QubitOperator> = exc
        .iter()
        .zip(&gnd)
        .map(|(e, g)| QubitOperator::new(e[0].conj(), e[1].conj(), g[0].conj(), g[1].conj()))
        .collect();

    let hdot = derivative(&path.samples, path.dt, QubitOperator::zero(), |acc, w, x| acc + x.scale_re(w));
    let samples = (0..n)
        .map(|k| {
            let (e, g) = (&exc[k], &gnd[k]);
            let hv = [
                hdot[k].get(0, 0) * g[0] + hdot[k].get(0, 1) * g[1],
                hdot[k].get(1, 0) * g[0] + hdot[k].get(1, 1) * g[1],
            ];
            // Lambda_eg = i <e|dH/dt|g> / (E_g - E_e)
            let l01 = Complex64::i() * inner(e, &hv) / (energies[k].1 - energies[k].0);
            LambdaCoefficients::new(0.0, l01.re, -l01.im, 0.0)
        })
        .collect();
    Ok(PathFrame {
        lambda: LambdaSchedule::new(path.t0, path.dt, samples, Interpolation::Cubic)?,
        diagonalizers,
        energies,
    })
}

/// `U rho U^dag`.
pub fn rotate_frame(rho: &QubitOperator, u: &QubitOperator) -> Result<QubitOperator> {
    if !u.is_unitary(1e-10) {
        return Err(domain("frame change is not unitary"));
    }
    Ok(u.conjugate(rho))
}

/// Max-abs residual of `U drho/dt U^dag - (d rho_rot/dt - i [Lambda, rho_rot])`
/// over a lab-frame path sampled on the generator's grid.
pub fn rotdin_identity_check(rho_path: &[QubitOperator], lambda: &LambdaSchedule, u0: &QubitOperator) -> Result<f64> {
    if rho_path.len() != lambda.samples.len() {
        return Err(domain("state path and generator schedule lengths differ"));
    }
    if rho_path.len() < 2 {
        return Ok(0.0);
    }
    let us = lambda.reconstruct_path(u0);
    let rot: Vec<QubitOperator> = rho_path.iter().zip(&us).map(|(r, u)| u.conjugate(r)).collect();
    let add = |acc: QubitOperator, w: f64, x: QubitOperator| acc + x.scale_re(w);
    let d_lab = derivative(rho_path, lambda.dt, QubitOperator::zero(), add);
    let d_rot = derivative(&rot, lambda.dt, QubitOperator::zero(), add);
    let mut worst: f64 = 0.0;
    for k in 0..rho_path.len() {
        let lhs = us[k].conjugate(&d_lab[k]);
        let l = lambda.samples[k].to_operator();
        let rhs = d_rot[k] - l.commutator(&rot[k]).scale(Complex64::i());
        worst = worst.max(lhs.max_abs_diff(&rhs));
    }
    Ok(worst)
}
