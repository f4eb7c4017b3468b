//! Rigid-body transforms between map planes and volume coordinates.
//!
//! Rotations are Euler angles in degrees, applied about the fixed world axes
//! in the order z, then y, then x (extrinsic). All triples, including the
//! rotation parameters and translation, follow the crate-wide (z, y, x)
//! component order.

use serde::{Deserialize, Serialize};

/// 3x3 matrix over (z, y, x)-ordered vectors; `m[row][col]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    /// Rotation about the z axis; +90 deg carries the x axis onto the y axis.
    pub fn rot_z(rad: f64) -> Mat3 {
        let (s, c) = rad.sin_cos();
        Mat3([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])
    }

    /// Rotation about the y axis; +90 deg carries the z axis onto the x axis.
    pub fn rot_y(rad: f64) -> Mat3 {
        let (s, c) = rad.sin_cos();
        Mat3([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])
    }

    /// Rotation about the x axis; +90 deg carries the y axis onto the z axis.
    pub fn rot_x(rad: f64) -> Mat3 {
        let (s, c) = rad.sin_cos();
        Mat3([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    }

    #[inline]
    pub fn mul_vec(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        Mat3(r)
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }
}

/// Six-parameter rigid transform: rotate (z, then y, then x, about fixed
/// axes), then translate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    /// Euler angles in degrees, listed in application order (about z, y, x).
    pub rotation_deg: [f64; 3],
    /// Offset in micrometres, (z, y, x).
    pub translation_um: [f64; 3],
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation_deg: [0.0; 3],
        translation_um: [0.0; 3],
    };

    pub fn translation(t: [f64; 3]) -> Self {
        RigidTransform { rotation_deg: [0.0; 3], translation_um: t }
    }

    /// Combined rotation matrix Rx * Ry * Rz (z applied first).
    pub fn rotation_matrix(&self) -> Mat3 {
        let [az, ay, ax] = self.rotation_deg.map(f64::to_radians);
        Mat3::rot_x(ax).mul_mat(&Mat3::rot_y(ay)).mul_mat(&Mat3::rot_z(az))
    }

    /// Rotate then translate a world point.
    #[inline]
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = self.rotation_matrix().mul_vec(p);
        [
            r[0] + self.translation_um[0],
            r[1] + self.translation_um[1],
            r[2] + self.translation_um[2],
        ]
    }

    /// Transform applying `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let ra = self.rotation_matrix();
        let rb = other.rotation_matrix();
        let r = ra.mul_mat(&rb);
        let tb = ra.mul_vec(other.translation_um);
        let t = [
            tb[0] + self.translation_um[0],
            tb[1] + self.translation_um[1],
            tb[2] + self.translation_um[2],
        ];
        RigidTransform { rotation_deg: euler_zyx_deg(&r), translation_um: t }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation_matrix().transpose();
        let t = rt.mul_vec(self.translation_um);
        RigidTransform {
            rotation_deg: euler_zyx_deg(&rt),
            translation_um: [-t[0], -t[1], -t[2]],
        }
    }

    /// True when all six parameters are finite.
    pub fn is_finite(&self) -> bool {
        self.rotation_deg.iter().chain(self.translation_um.iter()).all(|v| v.is_finite())
    }
}

/// Recover (az, ay, ax) degrees from a rotation matrix built as Rx*Ry*Rx.
///
/// In the (z, y, x) basis the product Rx(g)*Ry(b)*Rz(a) has
/// m[2][0] = sin b, m[2][1] = -cos b sin a, m[2][2] = cos b cos a,
/// m[0][0] = cos g cos b, m[1][0] = -sin g cos b.
fn euler_zyx_deg(m: &Mat3) -> [f64; 3] {
    let m = &m.0;
    let sb = m[2][0].clamp(-1.0, 1.0);
    let b = sb.asin();
    if sb.abs() < 1.0 - 1e-12 {
        let a = (-m[2][1]).atan2(m[2][2]);
        let g = (-m[1][0]).atan2(m[0][0]);
        [a.to_degrees(), b.to_degrees(), g.to_degrees()]
    } else {
        // Gimbal lock: z and x rotations are degenerate; put it all in z.
        let a = m[0][1].atan2(-sb * m[0][2]);
        [a.to_degrees(), b.to_degrees(), 0.0]
    }
}
