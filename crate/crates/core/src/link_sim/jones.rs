//! Jones-matrix algebra for the Faraday-mirror round trip.
//!
//! Forward propagation through the fiber is a 2x2 matrix `T` acting on the
//! transverse field in the frame `(x, y, z)`. Light returning through the
//! same reciprocal medium is described in the counter-propagating frame
//! `(x, -y, -z)` by `sz T^T sz`. The Faraday mirror matrix is written in that
//! frame, so the full round trip is `sz T^T sz . FM . T = det(T) FM`: the
//! birefringence drops out and only a global phase remains.

use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::PI;
use std::ops::Mul;

use super::LinkError;

const UNITARY_TOL: f64 = 1e-10;

type C = Complex64;

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesMatrix(pub [[C; 2]; 2]);

/// A transverse field (polarization state), not necessarily normalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesVector(pub [C; 2]);

impl JonesMatrix {
    pub fn identity() -> Self {
        Self([[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]])
    }

    pub fn from_real(m: [[f64; 2]; 2]) -> Self {
        Self(m.map(|row| row.map(|x| c(x, 0.0))))
    }

    /// Linear rotation of the polarization axes by `theta`.
    pub fn rotation(theta: f64) -> Self {
        let (s, co) = theta.sin_cos();
        Self::from_real([[co, -s], [s, co]])
    }

    /// Linear retarder with fast axis at `axis` and phase delay `delta`.
    pub fn retarder(axis: f64, delta: f64) -> Self {
        let half = delta / 2.0;
        let diag = Self([
            [C::from_polar(1.0, -half), c(0.0, 0.0)],
            [c(0.0, 0.0), C::from_polar(1.0, half)],
        ]);
        Self::rotation(axis) * diag * Self::rotation(-axis)
    }

    pub fn scale(&self, k: C) -> Self {
        Self(self.0.map(|row| row.map(|x| x * k)))
    }

    pub fn transpose(&self) -> Self {
        let m = self.0;
        Self([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    pub fn adjoint(&self) -> Self {
        let t = self.transpose();
        Self(t.0.map(|row| row.map(|x| x.conj())))
    }

    pub fn det(&self) -> C {
        let m = self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    /// Largest entry-wise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((self.0[i][j] - other.0[i][j]).norm());
            }
        }
        worst
    }

    /// `T^dagger T = s I` for some `s > 0` (unitary up to a loss factor).
    pub fn is_scaled_unitary(&self, tol: f64) -> bool {
        let g = self.adjoint() * *self;
        let s = g.0[0][0].re;
        s > 0.0 && g.max_abs_diff(&Self::identity().scale(c(s, 0.0))) <= tol * s.max(1.0)
    }

    pub fn apply(&self, v: &JonesVector) -> JonesVector {
        let m = self.0;
        JonesVector([
            m[0][0] * v.0[0] + m[0][1] * v.0[1],
            m[1][0] * v.0[0] + m[1][1] * v.0[1],
        ])
    }

    /// If `self = k * other` for a scalar `k`, returns `k`.
    pub fn proportionality(&self, other: &Self, tol: f64) -> Option<C> {
        let (mut bi, mut bj) = (0, 0);
        for i in 0..2 {
            for j in 0..2 {
                if other.0[i][j].norm() > other.0[bi][bj].norm() {
                    (bi, bj) = (i, j);
                }
            }
        }
        if other.0[bi][bj].norm() == 0.0 {
            return None;
        }
        let k = self.0[bi][bj] / other.0[bi][bj];
        (self.max_abs_diff(&other.scale(k)) <= tol).then_some(k)
    }
}

impl Mul for JonesMatrix {
    type Output = JonesMatrix;

    fn mul(self, rhs: JonesMatrix) -> JonesMatrix {
        let (a, b) = (self.0, rhs.0);
        let mut out = [[c(0.0, 0.0); 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        JonesMatrix(out)
    }
}

impl JonesVector {
    pub fn norm(&self) -> f64 {
        (self.0[0].norm_sqr() + self.0[1].norm_sqr()).sqrt()
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let v = JonesVector([
            c(gaussian(rng), gaussian(rng)),
            c(gaussian(rng), gaussian(rng)),
        ]);
        let n = v.norm();
        JonesVector(v.0.map(|x| x / n))
    }
}

/// Overlap between a forward-travelling state and a returning state given
/// in the counter-propagating frame. Zero means the returning light is
/// orthogonally polarized to the light that was sent.
pub fn return_overlap(forward: &JonesVector, returning: &JonesVector) -> f64 {
    // Map the returning field to forward axes (y -> -y); the time-reversed
    // forward-equivalent state is its complex conjugate, so the Hermitian
    // overlap reduces to the bilinear product below.
    let lab = [returning.0[0], -returning.0[1]];
    (forward.0[0] * lab[0] + forward.0[1] * lab[1]).norm()
}

fn sigma_z() -> JonesMatrix {
    JonesMatrix::from_real([[1.0, 0.0], [0.0, -1.0]])
}

pub fn faraday_mirror_jones() -> JonesMatrix {
    JonesMatrix::from_real([[0.0, -1.0], [-1.0, 0.0]])
}

/// Matrix for traversing the reciprocal medium `t` in the reverse direction,
/// expressed in the counter-propagating frame.
pub fn backward_traversal(t: &JonesMatrix) -> JonesMatrix {
    sigma_z() * t.transpose() * sigma_z()
}

/// Out through `t`, off the Faraday mirror, and back through `t`.
pub fn roundtrip_jones(t: &JonesMatrix) -> Result<JonesMatrix, LinkError> {
    if !t.is_scaled_unitary(UNITARY_TOL) {
        return Err(LinkError::NonUnitary);
    }
    Ok(backward_traversal(t) * faraday_mirror_jones() * *t)
}

/// Haar-ish random element of U(2).
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R) -> JonesMatrix {
    let v = JonesVector::random(rng);
    let (a, b) = (v.0[0], v.0[1]);
    let phase = C::from_polar(1.0, rng.gen_range(0.0..2.0 * PI));
    JonesMatrix([[a, -b.conj()], [b, a.conj()]]).scale(phase)
}

/// A fiber modelled as a cascade of `elements` randomly oriented retarders.
pub fn birefringent_fiber<R: Rng + ?Sized>(rng: &mut R, elements: usize) -> JonesMatrix {
    (0..elements).fold(JonesMatrix::identity(), |acc, _| {
        let axis = rng.gen_range(0.0..PI);
        let delta = rng.gen_range(0.0..2.0 * PI);
        JonesMatrix::retarder(axis, delta) * acc
    })
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}
