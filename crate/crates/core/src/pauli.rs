// SPDX-License-Identifier: Apache-2.0

//! Two-level algebra on top of `nalgebra`.
//!
//! Every Hamiltonian in this crate is traceless, so it is carried around as a
//! real field vector `h` with `H = h·σ`. That keeps Hermiticity structural and
//! gives a closed-form propagator for each step.

use nalgebra::{Matrix2, Vector2, Vector3};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;
pub type Ket = Vector2<C64>;
pub type Field = Vector3<f64>;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

pub fn identity() -> Mat2 {
    Mat2::identity()
}

pub fn sigma_x() -> Mat2 {
    Mat2::new(ZERO, ONE, ONE, ZERO)
}

pub fn sigma_y() -> Mat2 {
    Mat2::new(ZERO, -I, I, ZERO)
}

pub fn sigma_z() -> Mat2 {
    Mat2::new(ONE, ZERO, ZERO, -ONE)
}

/// `h·σ` as a matrix.
pub fn field_matrix(h: &Field) -> Mat2 {
    Mat2::new(
        C64::new(h.z, 0.0),
        C64::new(h.x, -h.y),
        C64::new(h.x, h.y),
        C64::new(-h.z, 0.0),
    )
}

/// Recovers the field vector of a traceless Hermitian matrix.
pub fn matrix_field(m: &Mat2) -> Field {
    Field::new(
        0.5 * (m[(0, 1)].re + m[(1, 0)].re),
        0.5 * (m[(1, 0)].im - m[(0, 1)].im),
        0.5 * (m[(0, 0)].re - m[(1, 1)].re),
    )
}

/// `exp(-i dt h·σ)`.
pub fn propagator(h: &Field, dt: f64) -> Mat2 {
    let norm = h.norm();
    let theta = norm * dt;
    if norm == 0.0 {
        return identity();
    }
    let (s, c) = theta.sin_cos();
    let k = s / norm;
    // cos θ·1 − i sin θ·(ĥ·σ)
    Mat2::new(
        C64::new(c, -k * h.z),
        C64::new(-k * h.y, -k * h.x),
        C64::new(k * h.y, -k * h.x),
        C64::new(c, k * h.z),
    )
}

/// Rotation by `angle` about the unit `axis`: `exp(-i angle n·σ / 2)`.
pub fn rotation(axis: &Field, angle: f64) -> Mat2 {
    propagator(axis, 0.5 * angle)
}

pub fn dagger(m: &Mat2) -> Mat2 {
    m.adjoint()
}

pub fn ket0() -> Ket {
    Ket::new(ONE, ZERO)
}

pub fn ket1() -> Ket {
    Ket::new(ZERO, ONE)
}

/// Pure state pointing along the unit Bloch direction `n`.
pub fn ket_along(n: &Field) -> Ket {
    let n = n.normalize();
    let theta = n.z.clamp(-1.0, 1.0).acos();
    let phi = n.y.atan2(n.x);
    Ket::new(
        C64::new((0.5 * theta).cos(), 0.0),
        C64::from_polar((0.5 * theta).sin(), phi),
    )
}

pub fn ket_bloch(psi: &Ket) -> Field {
    let a = psi[0];
    let b = psi[1];
    let ab = a.conj() * b;
    Field::new(2.0 * ab.re, 2.0 * ab.im, a.norm_sqr() - b.norm_sqr())
}

pub fn density(psi: &Ket) -> Mat2 {
    psi * psi.adjoint()
}

/// Bloch vector of a density matrix, `r_k = tr(ρ σ_k)`.
pub fn rho_bloch(rho: &Mat2) -> Field {
    Field::new(
        2.0 * rho[(1, 0)].re,
        2.0 * rho[(1, 0)].im,
        rho[(0, 0)].re - rho[(1, 1)].re,
    )
}

pub fn rho_from_bloch(r: &Field) -> Mat2 {
    let mut m = field_matrix(r);
    m[(0, 0)] += ONE;
    m[(1, 1)] += ONE;
    m * C64::new(0.5, 0.0)
}

/// Trace distance between two pure states, `sqrt(1 - |<a|b>|²)`.
pub fn pure_trace_distance(a: &Ket, b: &Ket) -> f64 {
    // |a₀b₁ − a₁b₀|² = |a|²|b|² − |⟨a|b⟩|², without the cancellation
    (a[0] * b[1] - a[1] * b[0]).norm() / (a.norm() * b.norm())
}

/// Trace distance between density matrices: half the Bloch-vector distance.
pub fn trace_distance(a: &Mat2, b: &Mat2) -> f64 {
    0.5 * (rho_bloch(a) - rho_bloch(b)).norm()
}

/// Eigenvalues of a 2×2 Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &Mat2) -> [f64; 2] {
    let mean = 0.5 * (m[(0, 0)].re + m[(1, 1)].re);
    let half_diff = 0.5 * (m[(0, 0)].re - m[(1, 1)].re);
    let off = m[(0, 1)].norm();
    let r = (half_diff * half_diff + off * off).sqrt();
    [mean - r, mean + r]
}

/// Frobenius norm of `m - m†`.
pub fn hermiticity_defect(m: &Mat2) -> f64 {
    (m - m.adjoint()).norm()
}
