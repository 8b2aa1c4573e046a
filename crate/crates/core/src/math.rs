//! Minimal 3-vector and quaternion math.
//!
//! Quaternions are stored scalar-first `(w, x, y, z)` everywhere, including
//! on disk. The handful of `*_backward` helpers are the reverse-mode partials
//! used by the fitting module; they treat quaternion entries as free reals
//! (normalization is a separate node in the graph).

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    #[inline]
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn dot(self, rhs: Vec3) -> f64 {
        self.x * rhs.x + self.y * rhs.y + self.z * rhs.z
    }

    #[inline]
    pub fn cross(self, rhs: Vec3) -> Vec3 {
        Vec3 {
            x: self.y * rhs.z - self.z * rhs.y,
            y: self.z * rhs.x - self.x * rhs.z,
            z: self.x * rhs.y - self.y * rhs.x,
        }
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn l1_norm(self) -> f64 {
        self.x.abs() + self.y.abs() + self.z.abs()
    }

    /// Unit vector in the same direction; the zero vector is returned as-is.
    #[inline]
    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        if n > 0.0 {
            self * (1.0 / n)
        } else {
            self
        }
    }

    #[inline]
    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, rhs: Vec3) {
        *self = *self + rhs;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Unit quaternion, scalar-first.
#[derive(Debug, Clone, Copy, PartialEq)]
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

    #[inline]
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }
    }

    #[inline]
    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Unit quaternion in the same direction; a zero quaternion falls back to
    /// the identity so downstream rotations stay valid.
    #[inline]
    pub fn normalized(self) -> Quat {
        let n = self.norm();
        if n > 0.0 {
            Quat::new(self.w / n, self.x / n, self.y / n, self.z / n)
        } else {
            Quat::IDENTITY
        }
    }

    #[inline]
    pub fn conjugate(self) -> Quat {
        Quat::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Rotates `v` by this quaternion (assumed unit).
    #[inline]
    pub fn rotate(self, v: Vec3) -> Vec3 {
        // q v q* expanded: v + 2 u x (u x v + w v), u = (x, y, z).
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Converts an angle-axis vector (angle = length, axis = direction) to a
    /// unit quaternion. Below 1e-8 radians the closed form degenerates to 0/0,
    /// so the second-order form `(1, a/2)` renormalized is used instead.
    pub fn from_angle_axis(a: Vec3) -> Quat {
        let theta = a.norm();
        if theta < 1e-8 {
            Quat::new(1.0, 0.5 * a.x, 0.5 * a.y, 0.5 * a.z).normalized()
        } else {
            let half = 0.5 * theta;
            let k = half.sin() / theta;
            Quat::new(half.cos(), k * a.x, k * a.y, k * a.z)
        }
    }

    /// Columns of the rotation matrix of this (unit) quaternion.
    #[inline]
    pub fn rotation_columns(self) -> [Vec3; 3] {
        let Quat { w, x, y, z } = self;
        [
            Vec3::new(
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y + w * z),
                2.0 * (x * z - w * y),
            ),
            Vec3::new(
                2.0 * (x * y - w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z + w * x),
            ),
            Vec3::new(
                2.0 * (x * z + w * y),
                2.0 * (y * z - w * x),
                1.0 - 2.0 * (x * x + y * y),
            ),
        ]
    }

    #[inline]
    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    #[inline]
    pub fn from_array(a: [f64; 4]) -> Self {
        Quat::new(a[0], a[1], a[2], a[3])
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Mul for Quat {
    type Output = Quat;
    /// Hamilton product.
    #[inline]
    fn mul(self, r: Quat) -> Quat {
        let a = self;
        Quat::new(
            a.w * r.w - a.x * r.x - a.y * r.y - a.z * r.z,
            a.w * r.x + a.x * r.w + a.y * r.z - a.z * r.y,
            a.w * r.y - a.x * r.z + a.y * r.w + a.z * r.x,
            a.w * r.z + a.x * r.y - a.y * r.x + a.z * r.w,
        )
    }
}

/// Backward pass of `Quat::normalized` on the raw 4-vector.
#[inline]
pub(crate) fn quat_normalize_backward(raw: Quat, g_unit: [f64; 4]) -> [f64; 4] {
    let n = raw.norm();
    if n == 0.0 {
        return [0.0; 4];
    }
    let u = [raw.w / n, raw.x / n, raw.y / n, raw.z / n];
    let d = u[0] * g_unit[0] + u[1] * g_unit[1] + u[2] * g_unit[2] + u[3] * g_unit[3];
    [
        (g_unit[0] - u[0] * d) / n,
        (g_unit[1] - u[1] * d) / n,
        (g_unit[2] - u[2] * d) / n,
        (g_unit[3] - u[3] * d) / n,
    ]
}

/// Backward pass of the Hamilton product `a * b` given the gradient on the
/// product; returns (grad_a, grad_b).
#[inline]
pub(crate) fn quat_mul_backward(a: Quat, b: Quat, g: [f64; 4]) -> ([f64; 4], [f64; 4]) {
    let ga = [
        g[0] * b.w + g[1] * b.x + g[2] * b.y + g[3] * b.z,
        -g[0] * b.x + g[1] * b.w - g[2] * b.z + g[3] * b.y,
        -g[0] * b.y + g[1] * b.z + g[2] * b.w - g[3] * b.x,
        -g[0] * b.z - g[1] * b.y + g[2] * b.x + g[3] * b.w,
    ];
    let gb = [
        g[0] * a.w + g[1] * a.x + g[2] * a.y + g[3] * a.z,
        -g[0] * a.x + g[1] * a.w + g[2] * a.z - g[3] * a.y,
        -g[0] * a.y - g[1] * a.z + g[2] * a.w + g[3] * a.x,
        -g[0] * a.z + g[1] * a.y - g[2] * a.x + g[3] * a.w,
    ];
    (ga, gb)
}

/// Backward pass of `Quat::rotation_columns`: accumulates gradients on the
/// three columns into a gradient on the quaternion entries.
pub(crate) fn rotation_columns_backward(q: Quat, g: [Vec3; 3]) -> [f64; 4] {
    let Quat { w, x, y, z } = q;
    let (g1, g2, g3) = (g[0], g[1], g[2]);
    let gw = 2.0 * (g1.y * z - g1.z * y)
        + 2.0 * (-g2.x * z + g2.z * x)
        + 2.0 * (g3.x * y - g3.y * x);
    let gx = 2.0 * (g1.y * y + g1.z * z)
        + 2.0 * (g2.x * y - 2.0 * g2.y * x + g2.z * w)
        + 2.0 * (g3.x * z - g3.y * w - 2.0 * g3.z * x);
    let gy = 2.0 * (-2.0 * g1.x * y + g1.y * x - g1.z * w)
        + 2.0 * (g2.x * x + g2.z * z)
        + 2.0 * (g3.x * w + g3.y * z - 2.0 * g3.z * y);
    let gz = 2.0 * (-2.0 * g1.x * z + g1.y * w + g1.z * x)
        + 2.0 * (-g2.x * w - 2.0 * g2.y * z + g2.z * y)
        + 2.0 * (g3.x * x + g3.y * y);
    [gw, gx, gy, gz]
}

/// `Quat::from_angle_axis` together with its Jacobian d(quat)/d(angle-axis),
/// rows ordered (w, x, y, z).
pub(crate) fn from_angle_axis_jacobian(a: Vec3) -> (Quat, [[f64; 3]; 4]) {
    let theta = a.norm();
    let av = a.to_array();
    let mut jac = [[0.0; 3]; 4];
    if theta < 1e-8 {
        // Matches the renormalized (1, a/2) branch of from_angle_axis.
        let n = (1.0 + 0.25 * theta * theta).sqrt();
        let q = Quat::new(1.0 / n, 0.5 * a.x / n, 0.5 * a.y / n, 0.5 * a.z / n);
        let n3 = n * n * n;
        for i in 0..3 {
            jac[0][i] = -av[i] / (4.0 * n3);
            for j in 0..3 {
                let delta = if i == j { 1.0 } else { 0.0 };
                jac[j + 1][i] = delta / (2.0 * n) - av[j] * av[i] / (8.0 * n3);
            }
        }
        (q, jac)
    } else {
        let half = 0.5 * theta;
        let (s, c) = (half.sin(), half.cos());
        let k = s / theta;
        let q = Quat::new(c, k * a.x, k * a.y, k * a.z);
        // dk/dtheta
        let kp = (0.5 * theta * c - s) / (theta * theta);
        for i in 0..3 {
            let di = av[i] / theta;
            jac[0][i] = -0.5 * s * di;
            for j in 0..3 {
                let delta = if i == j { 1.0 } else { 0.0 };
                jac[j + 1][i] = k * delta + kp * di * av[j];
            }
        }
        (q, jac)
    }
}
