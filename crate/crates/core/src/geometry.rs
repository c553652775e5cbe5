//! SE(3) poses and the small amount of Lie-group machinery the optimizer needs.
//!
//! Quaternions are stored (w, x, y, z), right-handed, with the scan frame z-up.
//! Tangent vectors are ordered `[ρx, ρy, ρz, ωx, ωy, ωz]` (translation first),
//! matching the g2o information-matrix layout.

use nalgebra::{Matrix3, Matrix4, Matrix6, Point3, Quaternion, UnitQuaternion, Vector3, Vector6};

use crate::error::{Error, Result};

pub type Vec6 = Vector6<f64>;
pub type Mat6 = Matrix6<f64>;

/// Rigid transform: rotation followed by translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    translation: Vector3<f64>,
    rotation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            translation: Vector3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    pub fn new(translation: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Self {
            translation,
            rotation: renormalize(rotation.into_inner()),
        }
    }

    /// Builds a pose from a raw quaternion, rejecting non-finite or zero-norm input.
    pub fn from_wxyz(translation: [f64; 3], w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !n.is_finite() || n < 1e-12 || translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "pose with translation {translation:?} and quaternion ({w}, {x}, {y}, {z})"
            )));
        }
        Ok(Self {
            translation: Vector3::from(translation),
            rotation: renormalize(q),
        })
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            translation: Vector3::new(x, y, z),
            rotation: UnitQuaternion::identity(),
        }
    }

    pub fn from_xyz_yaw(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self::from_xyz_rpy(x, y, z, 0.0, 0.0, yaw)
    }

    pub fn from_xyz_rpy(x: f64, y: f64, z: f64, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            translation: Vector3::new(x, y, z),
            rotation: renormalize(UnitQuaternion::from_euler_angles(roll, pitch, yaw).into_inner()),
        }
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    /// `(w, x, y, z)`
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn yaw(&self) -> f64 {
        self.rotation.euler_angles().2
    }

    /// `self ⊕ other`
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            translation: self.translation + self.rotation * other.translation,
            rotation: renormalize(self.rotation.quaternion() * other.rotation.quaternion()),
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            translation: -(inv * self.translation),
            rotation: inv,
        }
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(self.rotation.to_rotation_matrix().matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Right perturbation `self ⊕ (Exp(ω), ρ)`.
    pub fn retract(&self, delta: &Vec6) -> Pose {
        let step = Pose {
            translation: Vector3::new(delta[0], delta[1], delta[2]),
            rotation: UnitQuaternion::from_scaled_axis(Vector3::new(delta[3], delta[4], delta[5])),
        };
        self.compose(&step)
    }

    /// `(t, Log R)`, the error chart used by every pose factor.
    pub fn local_coordinates(&self) -> Vec6 {
        let w = self.rotation.scaled_axis();
        Vec6::new(
            self.translation.x,
            self.translation.y,
            self.translation.z,
            w.x,
            w.y,
            w.z,
        )
    }

    /// Adjoint for `[ρ, ω]` ordering: `T·P(δ)·T⁻¹ = P(Ad·δ)`.
    pub fn adjoint(&self) -> Mat6 {
        let r = *self.rotation.to_rotation_matrix().matrix();
        let mut ad = Mat6::zeros();
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        ad.fixed_view_mut::<3, 3>(0, 3)
            .copy_from(&(skew(&self.translation) * r));
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
        ad
    }

    pub fn rotation_angle(&self) -> f64 {
        self.rotation.angle()
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.rotation.coords.iter().all(|v| v.is_finite())
    }
}

/// `a ⊕ b`
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

/// `a⁻¹ ⊕ b`, so that `compose(a, relative(a, b)) == b`.
pub fn relative(a: &Pose, b: &Pose) -> Pose {
    a.inverse().compose(b)
}

fn renormalize(q: Quaternion<f64>) -> UnitQuaternion<f64> {
    // keep w >= 0 so that equal rotations have equal coefficients
    let q = if q.w < 0.0 { -q } else { q };
    UnitQuaternion::new_normalize(q)
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of the SO(3) right Jacobian at `phi`.
pub fn so3_right_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let k = skew(phi);
    let coeff = if theta2 < 1e-8 {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        let theta = theta2.sqrt();
        1.0 / theta2 - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    Matrix3::identity() + 0.5 * k + coeff * k * k
}

/// Smallest signed difference between two angles, in radians.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut x = a % two_pi;
    if x > std::f64::consts::PI {
        x -= two_pi;
    } else if x <= -std::f64::consts::PI {
        x += two_pi;
    }
    x
}
