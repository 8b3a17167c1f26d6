use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const UNIT_TOLERANCE: f64 = 1e-9;

/// Quaternion `w + xi + yj + zk`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }
    }

    /// Unit quaternion for the rotation vector `v` (axis times angle).
    pub fn from_rotation_vector(v: [f64; 3]) -> Self {
        let angle = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if angle == 0.0 {
            return Quat::IDENTITY;
        }
        let half = 0.5 * angle;
        let s = half.sin() / angle;
        Quat::new(half.cos(), v[0] * s, v[1] * s, v[2] * s)
    }

    /// Rotation vector of the (shortest-arc) rotation; the logarithm map.
    pub fn to_rotation_vector(self) -> [f64; 3] {
        let q = if self.w < 0.0 { -self } else { self };
        let n = (q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
        if n == 0.0 {
            return [0.0; 3];
        }
        let angle = 2.0 * n.atan2(q.w);
        let s = angle / n;
        [q.x * s, q.y * s, q.z * s]
    }

    pub fn dot(self, o: Quat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Quat {
        let n = self.norm();
        Quat::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conjugate(self) -> Quat {
        Quat::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn is_unit(self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_TOLERANCE
    }

    pub fn ensure_unit(self, field: &'static str) -> Result<Quat> {
        if self.is_unit() {
            Ok(self)
        } else {
            Err(Error::invalid(
                field,
                format!("quaternion norm {} is not 1", self.norm()),
            ))
        }
    }

    /// 3x3 rotation matrix of a unit quaternion.
    pub fn to_matrix(self) -> [[f64; 3]; 3] {
        let Quat { w, x, y, z } = self;
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    /// Largest absolute component difference.
    pub fn max_abs_diff(self, o: Quat) -> f64 {
        (self.w - o.w)
            .abs()
            .max((self.x - o.x).abs())
            .max((self.y - o.y).abs())
            .max((self.z - o.z).abs())
    }
}

impl std::ops::Mul for Quat {
    type Output = Quat;
    fn mul(self, o: Quat) -> Quat {
        Quat::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }
}

impl std::ops::Mul<f64> for Quat {
    type Output = Quat;
    fn mul(self, s: f64) -> Quat {
        Quat::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }
}

impl std::ops::Add for Quat {
    type Output = Quat;
    fn add(self, o: Quat) -> Quat {
        Quat::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Neg for Quat {
    type Output = Quat;
    fn neg(self) -> Quat {
        Quat::new(-self.w, -self.x, -self.y, -self.z)
    }
}

/// Spherical linear interpolation along the shorter arc.
pub fn slerp(q0: Quat, q1: Quat, s: f64) -> Result<Quat> {
    q0.ensure_unit("q0")?;
    q1.ensure_unit("q1")?;
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::invalid("s", format!("{s} outside [0, 1]")));
    }
    if s == 0.0 {
        return Ok(q0);
    }
    let mut q1 = q1;
    let mut d = q0.dot(q1);
    if d < 0.0 {
        q1 = -q1;
        d = -d;
    }
    if s == 1.0 {
        return Ok(q1);
    }
    let d = d.min(1.0);
    let theta = d.acos();
    let sin_theta = theta.sin();
    let q = if sin_theta < 1e-12 {
        // Nearly parallel: linear blend then renormalize.
        (q0 * (1.0 - s) + q1 * s).normalized()
    } else {
        let a = ((1.0 - s) * theta).sin() / sin_theta;
        let b = (s * theta).sin() / sin_theta;
        (q0 * a + q1 * b).normalized()
    };
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn about_z(angle: f64) -> Quat {
        Quat::from_rotation_vector([0.0, 0.0, angle])
    }

    #[test]
    fn endpoints_and_self() {
        let q0 = Quat::from_rotation_vector([0.1, -0.2, 0.05]);
        let q1 = Quat::from_rotation_vector([-0.3, 0.1, 0.2]);
        assert_eq!(slerp(q0, q1, 0.0).unwrap(), q0);
        assert_eq!(slerp(q0, q1, 1.0).unwrap(), q1);
        for s in [0.0, 0.3, 0.77, 1.0] {
            assert!(slerp(q0, q0, s).unwrap().max_abs_diff(q0) < 1e-15);
        }
    }

    #[test]
    fn bisects_quarter_turn() {
        let half = slerp(Quat::IDENTITY, about_z(FRAC_PI_2), 0.5).unwrap();
        // Oracle: compare rotation matrices against a direct 45 degree rotation.
        let m = half.to_matrix();
        let c = std::f64::consts::FRAC_PI_4.cos();
        let want = [[c, -c, 0.0], [c, c, 0.0], [0.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((m[i][j] - want[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shortest_arc() {
        let q1 = -about_z(0.4);
        let mid = slerp(Quat::IDENTITY, q1, 0.5).unwrap();
        let v = mid.to_rotation_vector();
        assert!((v[2] - 0.2).abs() < 1e-12, "{v:?}");
    }

    #[test]
    fn rejects_non_unit_and_bad_s() {
        let bad = Quat::new(1.1, 0.0, 0.0, 0.0);
        assert!(slerp(bad, Quat::IDENTITY, 0.5).is_err());
        assert!(slerp(Quat::IDENTITY, Quat::IDENTITY, 1.5).is_err());
    }

    #[test]
    fn rotation_vector_round_trip() {
        let v = [0.01, -0.004, 0.02];
        let back = Quat::from_rotation_vector(v).to_rotation_vector();
        for i in 0..3 {
            assert!((back[i] - v[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn monotone_angle_and_unit_norm() {
        let q0 = Quat::from_rotation_vector([0.2, 0.1, -0.3]);
        let q1 = Quat::from_rotation_vector([-0.5, 0.4, 0.9]);
        let mut prev = -1.0;
        for i in 0..=50 {
            let s = i as f64 / 50.0;
            let q = slerp(q0, q1, s).unwrap();
            assert!((q.norm() - 1.0).abs() < 1e-12);
            let rel = q0.conjugate() * q;
            let angle = rel
                .to_rotation_vector()
                .iter()
                .map(|c| c * c)
                .sum::<f64>()
                .sqrt();
            assert!(angle >= prev - 1e-12);
            prev = angle;
        }
    }
}
