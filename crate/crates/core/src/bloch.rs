//! Bloch vectors, 2×2 complex operators and rotations.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Slack allowed on `|a| <= 1` before a state is considered unphysical.
pub const PHYSICAL_TOL: f64 = 1e-9;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Real 3-vector.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };
    pub const X: Vec3 = Vec3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Vec3 = Vec3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(self.y * o.z - self.z * o.y, self.z * o.x - self.x * o.z, self.x * o.y - self.y * o.x)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn max_abs_diff(self, o: Vec3) -> f64 {
        (self.x - o.x).abs().max((self.y - o.y).abs()).max((self.z - o.z).abs())
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

/// Bloch vector of a density matrix `rho = (1 + a.sigma) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec3", into = "Vec3")]
pub struct BlochState(Vec3);

impl BlochState {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::from_vec(Vec3::new(x, y, z))
    }

    pub fn from_vec(v: Vec3) -> Result<Self> {
        if !v.is_finite() {
            return Err(domain(format!("non-finite Bloch vector {v:?}")));
        }
        if v.norm() > 1.0 + PHYSICAL_TOL {
            return Err(domain(format!("Bloch vector norm {} exceeds 1", v.norm())));
        }
        Ok(Self(v))
    }

    /// Wraps `v` without the physicality check. Integrators use this for
    /// intermediate stages that are validated separately.
    pub fn unchecked(v: Vec3) -> Self {
        Self(v)
    }

    pub fn vec(self) -> Vec3 {
        self.0
    }

    pub fn norm(self) -> f64 {
        self.0.norm()
    }

    pub fn to_density(self) -> QubitOperator {
        to_density(self)
    }

    /// Reads the Bloch vector of a unit-trace Hermitian matrix.
    pub fn from_density(rho: &QubitOperator) -> Result<Self> {
        if !rho.is_hermitian(1e-12) {
            return Err(domain("density matrix is not Hermitian"));
        }
        if (rho.trace().re - 1.0).abs() > 1e-12 {
            return Err(domain(format!("density matrix trace {} != 1", rho.trace().re)));
        }
        let (_, v) = rho.hermitian_parts();
        Self::from_vec(2.0 * v)
    }
}

impl TryFrom<Vec3> for BlochState {
    type Error = crate::Error;
    fn try_from(v: Vec3) -> Result<Self> {
        Self::from_vec(v)
    }
}

impl From<BlochState> for Vec3 {
    fn from(a: BlochState) -> Vec3 {
        a.0
    }
}

/// Bloch vector of a traceless costate operator `pi = q.sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostateBloch(pub Vec3);

impl CostateBloch {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self(Vec3::new(x, y, z))
    }

    pub fn vec(self) -> Vec3 {
        self.0
    }

    pub fn to_operator(self) -> QubitOperator {
        QubitOperator::from_pauli(0.0, self.0)
    }
}

/// 2×2 complex matrix stored row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitOperator {
    pub m: [Complex64; 4],
}

impl QubitOperator {
    pub const fn new(m00: Complex64, m01: Complex64, m10: Complex64, m11: Complex64) -> Self {
        Self { m: [m00, m01, m10, m11] }
    }

    pub fn real(m00: f64, m01: f64, m10: f64, m11: f64) -> Self {
        Self::new(m00.into(), m01.into(), m10.into(), m11.into())
    }

    pub fn zero() -> Self {
        Self::new(ZERO, ZERO, ZERO, ZERO)
    }

    pub fn identity() -> Self {
        Self::new(ONE, ZERO, ZERO, ONE)
    }

    pub fn sigma_x() -> Self {
        Self::new(ZERO, ONE, ONE, ZERO)
    }

    pub fn sigma_y() -> Self {
        Self::new(ZERO, -I, I, ZERO)
    }

    pub fn sigma_z() -> Self {
        Self::new(ONE, ZERO, ZERO, -ONE)
    }

    pub fn diag(d0: f64, d1: f64) -> Self {
        Self::real(d0, 0.0, 0.0, d1)
    }

    /// `c0 * 1 + v.sigma`.
    pub fn from_pauli(c0: f64, v: Vec3) -> Self {
        Self::new(
            Complex64::new(c0 + v.z, 0.0),
            Complex64::new(v.x, -v.y),
            Complex64::new(v.x, v.y),
            Complex64::new(c0 - v.z, 0.0),
        )
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.m[2 * r + c]
    }

    /// Complex Pauli coefficients `(c0, [cx, cy, cz])` with `M = c0 1 + c.sigma`.
    pub fn pauli_parts(&self) -> (Complex64, [Complex64; 3]) {
        let [a, b, c, d] = self.m;
        ((a + d) * 0.5, [(b + c) * 0.5, (b - c) * I * 0.5, (a - d) * 0.5])
    }

    /// Real parts of the Pauli coefficients; exact for Hermitian matrices.
    pub fn hermitian_parts(&self) -> (f64, Vec3) {
        let (c0, c) = self.pauli_parts();
        (c0.re, Vec3::new(c[0].re, c[1].re, c[2].re))
    }

    pub fn dagger(&self) -> Self {
        let [a, b, c, d] = self.m;
        Self::new(a.conj(), c.conj(), b.conj(), d.conj())
    }

    pub fn trace(&self) -> Complex64 {
        self.m[0] + self.m[3]
    }

    pub fn det(&self) -> Complex64 {
        self.m[0] * self.m[3] - self.m[1] * self.m[2]
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self { m: self.m.map(|x| x * s) }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        Self { m: self.m.map(|x| x * s) }
    }

    pub fn commutator(&self, o: &Self) -> Self {
        *self * *o - *o * *self
    }

    pub fn anticommutator(&self, o: &Self) -> Self {
        *self * *o + *o * *self
    }

    /// `U rho U^dagger`.
    pub fn conjugate(&self, rho: &Self) -> Self {
        *self * *rho * self.dagger()
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        (*self - *o).max_abs()
    }

    pub fn frobenius(&self) -> f64 {
        self.m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.dagger()) <= tol
    }

    pub fn unitarity_defect(&self) -> f64 {
        (*self * self.dagger()).max_abs_diff(&Self::identity())
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_defect() <= tol
    }

    /// Eigenvalues `(low, high)` of a Hermitian matrix.
    pub fn eigvals_hermitian(&self) -> (f64, f64) {
        let (c0, v) = self.hermitian_parts();
        let r = v.norm();
        (c0 - r, c0 + r)
    }

    /// `exp(i H)` for Hermitian `H`.
    pub fn exp_i_hermitian(&self) -> Self {
        let (c0, v) = self.hermitian_parts();
        exp_i_pauli(c0, v)
    }
}

/// `exp(i (c0 + v.sigma))`.
pub fn exp_i_pauli(c0: f64, v: Vec3) -> QubitOperator {
    let r = v.norm();
    let phase = Complex64::from_polar(1.0, c0);
    let (s, c) = r.sin_cos();
    // sin(r)/r -> 1 as r -> 0
    let sinc = if r < 1e-8 { 1.0 - r * r / 6.0 } else { s / r };
    let n = v * sinc;
    QubitOperator::new(
        Complex64::new(c, n.z),
        Complex64::new(n.y, n.x),
        Complex64::new(-n.y, n.x),
        Complex64::new(c, -n.z),
    )
    .scale(phase)
}

impl Add for QubitOperator {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut m = self.m;
        for (x, y) in m.iter_mut().zip(o.m) {
            *x += y;
        }
        Self { m }
    }
}

impl Sub for QubitOperator {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut m = self.m;
        for (x, y) in m.iter_mut().zip(o.m) {
            *x -= y;
        }
        Self { m }
    }
}

impl Mul for QubitOperator {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let [a, b, c, d] = self.m;
        let [e, f, g, h] = o.m;
        Self::new(a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)
    }
}

/// `(1 + a.sigma) / 2`.
pub fn to_density(a: BlochState) -> QubitOperator {
    QubitOperator::from_pauli(0.5, a.vec() * 0.5)
}

fn check_axis(axis: Vec3) -> Result<()> {
    if !axis.is_finite() || (axis.norm() - 1.0).abs() > 1e-12 {
        return Err(domain(format!("rotation axis {axis:?} is not normalized")));
    }
    Ok(())
}

/// Rotates `v` by `angle` about `axis` (right-handed).
pub fn rotate_vec(v: Vec3, axis: Vec3, angle: f64) -> Result<Vec3> {
    check_axis(axis)?;
    let (s, c) = angle.sin_cos();
    Ok(v * c + axis.cross(v) * s + axis * (axis.dot(v) * (1.0 - c)))
}

/// Bloch action of `exp(-i angle axis.sigma / 2)`.
pub fn rotate_bloch(a: BlochState, axis: Vec3, angle: f64) -> Result<BlochState> {
    rotate_vec(a.vec(), axis, angle).map(BlochState::unchecked)
}

/// `exp(-i angle axis.sigma / 2)`.
pub fn rotation_operator(axis: Vec3, angle: f64) -> Result<QubitOperator> {
    check_axis(axis)?;
    Ok(exp_i_pauli(0.0, axis * (-0.5 * angle)))
}

/// Axis and angle of the rotation carrying direction `from` onto direction `to`.
///
/// Antiparallel inputs rotate by pi about the y axis, or about x when the
/// vectors lie along y.
pub fn aligning_rotation(from: Vec3, to: Vec3) -> (Vec3, f64) {
    let (nf, nt) = (from.norm(), to.norm());
    if nf == 0.0 || nt == 0.0 {
        return (Vec3::Z, 0.0);
    }
    let (u, w) = (from * (1.0 / nf), to * (1.0 / nt));
    let c = u.dot(w).clamp(-1.0, 1.0);
    let axis = u.cross(w);
    let s = axis.norm();
    if s > 1e-12 {
        return (axis * (1.0 / s), s.atan2(c));
    }
    if c > 0.0 {
        return (Vec3::Z, 0.0);
    }
    let perp = Vec3::Y - u * u.y;
    if perp.norm() > 1e-6 {
        (perp * (1.0 / perp.norm()), std::f64::consts::PI)
    } else {
        let perp = Vec3::X - u * u.x;
        (perp * (1.0 / perp.norm()), std::f64::consts::PI)
    }
}

/// Vector `c` with `[a.sigma, b.sigma] = i c.sigma`, i.e. `2 (a x b)`.
pub fn pauli_commutator(a: Vec3, b: Vec3) -> Vec3 {
    2.0 * a.cross(b)
}
