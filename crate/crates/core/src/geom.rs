//! Quaternion and rotation algebra.
//!
//! Conventions used throughout the crate:
//! - quaternions are stored w-first and multiply with the Hamilton product;
//! - `q_ab` rotates vectors expressed in frame `b` into frame `a`, so
//!   `v_a = q_ab.rotate(v_b)` and `R(q_ab) = R_ab`.

use std::ops::{Mul, Neg};

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

use crate::error::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Quaternion `w + xi + yj + zk`.
///
/// Most values in this crate are unit quaternions; intermediate RK4 stages
/// and derivatives are not, so normalization is explicit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Pure quaternion `(0, v)`.
    pub fn pure(v: &Vec3) -> Self {
        Self::new(0.0, v.x, v.y, v.z)
    }

    pub fn from_vector4(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_vector4(self) -> Vector4<f64> {
        Vector4::new(self.w, self.x, self.y, self.z)
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis / n;
        Self::new(c, s * a.x, s * a.y, s * a.z)
    }

    /// Rotation about the z axis.
    pub fn from_yaw(yaw: f64) -> Self {
        let (s, c) = (0.5 * yaw).sin_cos();
        Self::new(c, 0.0, 0.0, s)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &Quat) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn normalize(&self) -> Self {
        let n = self.norm();
        Self::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Multiplicative inverse; equals the conjugate for unit quaternions.
    pub fn inverse(&self) -> Self {
        let n2 = self.dot(self);
        let c = self.conjugate();
        Self::new(c.w / n2, c.x / n2, c.y / n2, c.z / n2)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn add(&self, o: &Quat) -> Self {
        Self::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }

    /// Returns `self` or `-self`, whichever lies in the same hemisphere as
    /// `reference`.
    pub fn aligned_to(&self, reference: &Quat) -> Self {
        if self.dot(reference) < 0.0 {
            -*self
        } else {
            *self
        }
    }

    /// Rotation angle in `[0, pi]` between two attitudes.
    pub fn angle_to(&self, other: &Quat) -> f64 {
        let d = self.dot(other).abs().min(1.0);
        2.0 * d.acos()
    }

    /// `q ⊙ (0, v) ⊙ q*`, assuming `self` is unit.
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        // v + 2w (u × v) + 2 u × (u × v)
        let u = self.vector();
        let t = 2.0 * u.cross(v);
        v + self.w * t + u.cross(&t)
    }

    pub fn to_rotation(&self) -> Mat3 {
        let Quat { w, x, y, z } = *self;
        Mat3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Inverse of [`Quat::to_rotation`]; the result has `w >= 0`.
    pub fn from_rotation(r: &Mat3) -> Result<Self, Error> {
        let ortho = (r * r.transpose() - Mat3::identity()).abs().max();
        let det = r.determinant();
        if !ortho.is_finite() || ortho > 1e-6 || (det - 1.0).abs() > 1e-6 {
            return Err(Error::NotARotation { orthogonality: ortho, determinant: det });
        }
        // Shepperd's method: pivot on the largest diagonal term.
        let tr = r.trace();
        let q = if tr > r[(0, 0)] && tr > r[(1, 1)] && tr > r[(2, 2)] {
            let s = 2.0 * (1.0 + tr).sqrt();
            Quat::new(0.25 * s, (r[(2, 1)] - r[(1, 2)]) / s, (r[(0, 2)] - r[(2, 0)]) / s, (r[(1, 0)] - r[(0, 1)]) / s)
        } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
            let s = 2.0 * (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt();
            Quat::new((r[(2, 1)] - r[(1, 2)]) / s, 0.25 * s, (r[(0, 1)] + r[(1, 0)]) / s, (r[(0, 2)] + r[(2, 0)]) / s)
        } else if r[(1, 1)] > r[(2, 2)] {
            let s = 2.0 * (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt();
            Quat::new((r[(0, 2)] - r[(2, 0)]) / s, (r[(0, 1)] + r[(1, 0)]) / s, 0.25 * s, (r[(1, 2)] + r[(2, 1)]) / s)
        } else {
            let s = 2.0 * (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt();
            Quat::new((r[(1, 0)] - r[(0, 1)]) / s, (r[(0, 2)] + r[(2, 0)]) / s, (r[(1, 2)] + r[(2, 1)]) / s, 0.25 * s)
        };
        let q = q.normalize();
        Ok(if q.w < 0.0 { -q } else { q })
    }

    /// Matrix `L(a)` with `a ⊙ b = L(a) b`.
    pub fn left_matrix(&self) -> Matrix4<f64> {
        let Quat { w, x, y, z } = *self;
        Matrix4::new(
            w, -x, -y, -z, //
            x, w, -z, y, //
            y, z, w, -x, //
            z, -y, x, w,
        )
    }

    /// Matrix `R(b)` with `a ⊙ b = R(b) a`.
    pub fn right_matrix(&self) -> Matrix4<f64> {
        let Quat { w, x, y, z } = *self;
        Matrix4::new(
            w, -x, -y, -z, //
            x, w, z, -y, //
            y, -z, w, x, //
            z, y, -x, w,
        )
    }
}

impl Mul for Quat {
    type Output = Quat;

    /// Hamilton product.
    fn mul(self, b: Quat) -> Quat {
        let a = self;
        Quat::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

impl Neg for Quat {
    type Output = Quat;

    fn neg(self) -> Quat {
        Quat::new(-self.w, -self.x, -self.y, -self.z)
    }
}

/// Skew-symmetric matrix with `skew(t) * u == t × u`.
pub fn skew(t: &Vec3) -> Mat3 {
    Mat3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0)
}

/// Yaw angle of the body x axis projected on the horizontal plane.
pub fn yaw_of(q: &Quat) -> f64 {
    let x_axis = q.rotate(&Vec3::x());
    x_axis.y.atan2(x_axis.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_quat(rng: &mut impl Rng) -> Quat {
        Quat::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalize()
    }

    fn random_vec(rng: &mut impl Rng) -> Vec3 {
        Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0))
    }

    #[test]
    fn identity_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let q = random_quat(&mut rng);
            assert_eq!(Quat::IDENTITY * q, q);
            let e = q * q.inverse();
            assert!((e.w - 1.0).abs() < 1e-12);
            assert!(e.vector().norm() < 1e-12);
        }
    }

    #[test]
    fn product_composes_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let (a, b) = (random_quat(&mut rng), random_quat(&mut rng));
            let lhs = (a * b).to_rotation();
            let rhs = a.to_rotation() * b.to_rotation();
            assert!((lhs - rhs).abs().max() < 1e-9);
        }
    }

    #[test]
    fn product_matrices_match_hamilton_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, b) = (random_quat(&mut rng), random_quat(&mut rng));
        let ab = (a * b).to_vector4();
        assert!((a.left_matrix() * b.to_vector4() - ab).norm() < 1e-14);
        assert!((b.right_matrix() * a.to_vector4() - ab).norm() < 1e-14);
    }

    #[test]
    fn skew_is_cross_product() {
        assert_eq!(skew(&Vec3::zeros()), Mat3::zeros());
        assert_eq!(skew(&Vec3::z()) * Vec3::x(), Vec3::y());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let (t, u) = (random_vec(&mut rng), random_vec(&mut rng));
            let cross = Vec3::new(t.y * u.z - t.z * u.y, t.z * u.x - t.x * u.z, t.x * u.y - t.y * u.x);
            assert!((skew(&t) * u - cross).abs().max() < 1e-14);
            assert_eq!(skew(&t).transpose(), -skew(&t));
            assert!((skew(&t) * u + skew(&u) * t).abs().max() < 1e-13);
        }
    }

    #[test]
    fn rotation_conversions() {
        assert_eq!(Quat::IDENTITY.to_rotation(), Mat3::identity());
        let qz = Quat::from_axis_angle(&Vec3::z(), std::f64::consts::FRAC_PI_2);
        assert!((qz.rotate(&Vec3::x()) - Vec3::y()).norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let q = random_quat(&mut rng);
            let v = random_vec(&mut rng);
            assert!((q.rotate(&v) - q.to_rotation() * v).norm() < 1e-12);
            let back = Quat::from_rotation(&q.to_rotation()).unwrap();
            assert!((back.aligned_to(&q).to_vector4() - q.to_vector4()).norm() < 1e-9);
            assert!((back.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_non_rotation() {
        let mut m = Mat3::identity();
        m[(0, 1)] = 1e-3;
        assert!(matches!(Quat::from_rotation(&m), Err(Error::NotARotation { .. })));
        let reflect = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(Quat::from_rotation(&reflect).is_err());
    }

    #[test]
    fn sign_alignment() {
        let q = Quat::from_yaw(0.3);
        let flipped = -q;
        assert_eq!(flipped.aligned_to(&q), q);
        assert!(q.angle_to(&flipped) < 1e-7);
        assert!((yaw_of(&q) - 0.3).abs() < 1e-12);
    }
}
