use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A 2-vector in either the stationary (alpha-beta) or a rotating (d-q) frame.
///
/// Row gain vectors such as `k_p` are stored in the same type; the product
/// with a column vector is [`Vec2::dot`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub d: f64,
    pub q: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { d: 0.0, q: 0.0 };

    pub const fn new(d: f64, q: f64) -> Self {
        Self { d, q }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.d * other.d + self.q * other.q
    }

    pub fn norm(self) -> f64 {
        self.d.hypot(self.q)
    }

    /// `J * self`, a quarter turn counter-clockwise.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.q, self.d)
    }

    pub fn is_finite(self) -> bool {
        self.d.is_finite() && self.q.is_finite()
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.d, self.q]
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.d + rhs.d, self.q + rhs.q)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.d += rhs.d;
        self.q += rhs.q;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.d - rhs.d, self.q - rhs.q)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.d, -self.q)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.d * s, self.q * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

/// Row-major 2x2 matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub m: [[f64; 2]; 2],
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 {
        m: [[1.0, 0.0], [0.0, 1.0]],
    };

    /// Rotation generator `[[0, -1], [1, 0]]`.
    pub const J: Mat2 = Mat2 {
        m: [[0.0, -1.0], [1.0, 0.0]],
    };

    pub const ZERO: Mat2 = Mat2 { m: [[0.0; 2]; 2] };

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { m: [[a, b], [c, d]] }
    }

    /// Outer product `a * b^T`.
    pub fn outer(a: Vec2, b: Vec2) -> Self {
        Self::new(a.d * b.d, a.d * b.q, a.q * b.d, a.q * b.q)
    }

    pub fn scale(self, s: f64) -> Self {
        let m = self.m;
        Self::new(m[0][0] * s, m[0][1] * s, m[1][0] * s, m[1][1] * s)
    }

    pub fn transpose(self) -> Self {
        let m = self.m;
        Self::new(m[0][0], m[1][0], m[0][1], m[1][1])
    }

    pub fn det(self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn trace(self) -> f64 {
        self.m[0][0] + self.m[1][1]
    }

    pub fn mul_vec(self, v: Vec2) -> Vec2 {
        Vec2::new(
            self.m[0][0] * v.d + self.m[0][1] * v.q,
            self.m[1][0] * v.d + self.m[1][1] * v.q,
        )
    }

    /// Row vector times matrix, `v^T * self`.
    pub fn left_mul(self, v: Vec2) -> Vec2 {
        self.transpose().mul_vec(v)
    }

    pub fn inverse(self) -> Option<Mat2> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let m = self.m;
        Some(Self::new(m[1][1], -m[0][1], -m[1][0], m[0][0]).scale(1.0 / det))
    }

    pub fn max_abs(self) -> f64 {
        self.m.iter().flatten().fold(0.0_f64, |acc, x| acc.max(x.abs()))
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        let (a, b) = (self.m, rhs.m);
        Mat2::new(a[0][0] + b[0][0], a[0][1] + b[0][1], a[1][0] + b[1][0], a[1][1] + b[1][1])
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, rhs: Mat2) -> Mat2 {
        self + rhs.scale(-1.0)
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        self.scale(-1.0)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: Mat2) -> Mat2 {
        let (a, b) = (self.m, rhs.m);
        Mat2::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}

impl Mul<Vec2> for Mat2 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        self.mul_vec(v)
    }
}

/// `exp(theta * J)`, the counter-clockwise rotation by `theta`.
pub fn rot(theta: f64) -> Mat2 {
    let (s, c) = theta.sin_cos();
    Mat2::new(c, -s, s, c)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut a = theta.rem_euclid(TAU);
    if a > PI {
        a -= TAU;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn rot_zero_is_identity() {
        assert_eq!(rot(0.0), Mat2::IDENTITY);
    }

    #[test]
    fn rot_quarter_turn_is_generator() {
        let r = rot(PI / 2.0);
        for (a, b) in r.m.iter().flatten().zip(Mat2::J.m.iter().flatten()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rot_thirty_degrees() {
        let v = rot(PI / 6.0) * Vec2::new(1.0, 0.0);
        assert!((v.d - 0.866_025_403_784_438_6).abs() < 1e-15);
        assert!((v.q - 0.5).abs() < 1e-15);
    }

    #[test]
    fn perp_matches_generator() {
        let v = Vec2::new(0.3, -1.7);
        assert_eq!(v.perp(), Mat2::J * v);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn rot_composes(a in -10.0..10.0f64, b in -10.0..10.0f64) {
            let lhs = rot(a) * rot(b);
            let rhs = rot(a + b);
            prop_assert!((lhs - rhs).max_abs() < 1e-12);
        }

        #[test]
        fn rot_is_orthogonal(a in -10.0..10.0f64) {
            prop_assert!((rot(a).det() - 1.0).abs() < 1e-14);
            prop_assert!((rot(-a) - rot(a).transpose()).max_abs() < 1e-15);
        }
    }
}
