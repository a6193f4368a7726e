use nalgebra::{UnitQuaternion, Vector2, Vector3, Vector6};

/// Floating-base pose and twist.
///
/// Euler angles follow the roll-pitch-yaw convention R = Rz(yaw) Ry(pitch)
/// Rx(roll), i.e. extrinsic X-Y-Z.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BodyState {
    /// Inertial frame (m).
    pub position: Vector3<f64>,
    /// Inertial frame (m/s).
    pub velocity: Vector3<f64>,
    /// Body to inertial.
    pub orientation: UnitQuaternion<f64>,
    /// Body frame (rad/s).
    pub omega: Vector3<f64>,
}

impl BodyState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
            omega: Vector3::zeros(),
        }
    }

    /// (roll, pitch, yaw) in radians.
    pub fn euler(&self) -> Vector3<f64> {
        let (r, p, y) = self.orientation.euler_angles();
        Vector3::new(r, p, y)
    }

    pub fn velocity_body(&self) -> Vector3<f64> {
        self.orientation.inverse_transform_vector(&self.velocity)
    }

    pub fn planar_velocity_body(&self) -> Vector2<f64> {
        self.velocity_body().xy()
    }

    /// MPC state `[theta; omega]`.
    pub fn mpc_state(&self) -> Vector6<f64> {
        let e = self.euler();
        Vector6::new(e.x, e.y, e.z, self.omega.x, self.omega.y, self.omega.z)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
            && self.omega.iter().all(|v| v.is_finite())
    }
}
