//! Minimal rigid-body geometry: skew matrices and the SO(3) exponential map.
//!
//! Conventions: right-handed frames, column vectors, active rotations.
//! `exp_so3(axis, angle)` rotates vectors counter-clockwise about `axis`
//! when viewed from its tip, so `exp_so3(e1, pi/2) * e3 = -e2`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{invalid, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Unit-norm tolerance accepted by [`exp_so3`].
pub const AXIS_TOL: f64 = 1e-9;

pub fn e1() -> Vec3 {
    Vec3::x()
}

pub fn e2() -> Vec3 {
    Vec3::y()
}

pub fn e3() -> Vec3 {
    Vec3::z()
}

/// A rotation matrix in SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot3(Mat3);

impl Rot3 {
    pub fn identity() -> Self {
        Rot3(Mat3::identity())
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rot3(self.0.transpose())
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Max deviation of `R^T R` from identity and of `det R` from one.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.0.transpose() * self.0 - Mat3::identity();
        let det = (self.0.determinant() - 1.0).abs();
        gram.amax().max(det)
    }

    /// Rotation about the z axis; the roll used between bending planes.
    pub fn about_e3(angle: f64) -> Self {
        rodrigues(&e3(), angle)
    }

    /// Rotation about the x axis; the bend imposed by a pinch.
    pub fn about_e1(angle: f64) -> Self {
        rodrigues(&e1(), angle)
    }

    /// Smallest rotation taking unit vector `from` onto unit vector `to`.
    pub fn aligning(from: &Vec3, to: &Vec3) -> Self {
        let axis = from.cross(to);
        let s = axis.norm();
        let c = from.dot(to);
        if s < 1e-15 {
            if c > 0.0 {
                return Rot3::identity();
            }
            // antiparallel: half-turn about any axis orthogonal to `from`
            let helper = if from.x.abs() < 0.9 { e1() } else { e2() };
            let perp = from.cross(&helper).normalize();
            return rodrigues(&perp, std::f64::consts::PI);
        }
        rodrigues(&(axis / s), s.atan2(c))
    }
}

impl std::ops::Mul for Rot3 {
    type Output = Rot3;

    fn mul(self, rhs: Rot3) -> Rot3 {
        Rot3(self.0 * rhs.0)
    }
}

impl std::ops::Mul<Vec3> for Rot3 {
    type Output = Vec3;

    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Skew-symmetric matrix with `hat(v) * w == v.cross(w)`.
pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Exponential map of SO(3) about a unit axis (Rodrigues' formula).
pub fn exp_so3(axis: &Vec3, angle: f64) -> Result<Rot3> {
    if !axis.iter().all(|c| c.is_finite()) || !angle.is_finite() {
        return invalid("axis and angle must be finite");
    }
    if (axis.norm() - 1.0).abs() > AXIS_TOL {
        return invalid(format!("rotation axis must be unit, got norm {}", axis.norm()));
    }
    Ok(rodrigues(axis, angle))
}

fn rodrigues(axis: &Vec3, angle: f64) -> Rot3 {
    let k = hat(axis);
    let (s, c) = angle.sin_cos();
    Rot3(Mat3::identity() + k * s + k * k * (1.0 - c))
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn hat_matches_cross_product() {
        assert_eq!(hat(&e3()) * e1(), e2());
        let v = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(hat(&v) * v, Vec3::zeros());
        assert_eq!(hat(&v) * Vec3::new(4.0, 5.0, 6.0), Vec3::new(-3.0, 6.0, -3.0));
    }

    #[test]
    fn hat_is_skew() {
        let m = hat(&Vec3::new(0.3, -1.7, 2.2));
        assert_eq!(m.transpose(), -m);
    }

    #[test]
    fn exp_zero_is_identity() {
        assert_eq!(exp_so3(&e1(), 0.0).unwrap(), Rot3::identity());
    }

    #[test]
    fn exp_half_turn_and_quarter_turn() {
        let r = exp_so3(&e3(), PI).unwrap();
        assert_relative_eq!(r * e1(), -e1(), epsilon = 1e-15);
        // documented sign convention: bending about e1 swings e3 toward -e2
        let q = exp_so3(&e1(), FRAC_PI_2).unwrap();
        assert_relative_eq!(q * e3(), -e2(), epsilon = 1e-15);
    }

    #[test]
    fn exp_rejects_non_unit_axis() {
        assert!(exp_so3(&Vec3::new(1.0, 1.0, 0.0), 0.1).is_err());
        assert!(exp_so3(&Vec3::new(f64::NAN, 0.0, 0.0), 0.1).is_err());
    }

    #[test]
    fn agrees_with_nalgebra_rotation() {
        let axis = Vec3::new(0.2, -0.5, 0.8).normalize();
        let ours = exp_so3(&axis, 1.234).unwrap();
        let theirs = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), 1.234);
        assert_relative_eq!(*ours.matrix(), *theirs.matrix(), epsilon = 1e-14);
    }

    #[test]
    fn aligning_maps_from_to() {
        let a = Vec3::new(0.0, 0.6, 0.8);
        let b = Vec3::new(1.0, 0.0, 0.0);
        assert_relative_eq!(Rot3::aligning(&a, &b) * a, b, epsilon = 1e-14);
        assert_relative_eq!(Rot3::aligning(&a, &(-a)) * a, -a, epsilon = 1e-14);
        assert_eq!(Rot3::aligning(&a, &a), Rot3::identity());
    }

    #[test]
    fn wrap_angle_range() {
        assert_relative_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(-PI), PI, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(450f64.to_radians()), FRAC_PI_2, epsilon = 1e-12);
    }

    fn unit_axis() -> impl Strategy<Value = Vec3> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-degenerate", |(x, y, z)| x * x + y * y + z * z > 1e-3)
            .prop_map(|(x, y, z)| Vec3::new(x, y, z).normalize())
    }

    proptest! {
        #[test]
        fn same_axis_composition(axis in unit_axis(), a in -10.0..10.0f64, b in -10.0..10.0f64) {
            let lhs = exp_so3(&axis, a).unwrap() * exp_so3(&axis, b).unwrap();
            let rhs = exp_so3(&axis, a + b).unwrap();
            prop_assert!((lhs.matrix() - rhs.matrix()).amax() < 1e-10);
        }

        #[test]
        fn exp_is_in_so3(axis in unit_axis(), a in -20.0..20.0f64) {
            prop_assert!(exp_so3(&axis, a).unwrap().orthonormality_error() < 1e-12);
        }

        #[test]
        fn hat_exactly_skew(x in -1e3..1e3f64, y in -1e3..1e3f64, z in -1e3..1e3f64) {
            let m = hat(&Vec3::new(x, y, z));
            prop_assert_eq!(m.transpose(), -m);
        }
    }
}
