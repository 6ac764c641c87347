//! Planar geometry shared by the world, sensor and fusion code.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// A rigid 2D pose: position in meters and heading in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.yaw.is_finite()
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// Maps a point expressed in this pose's frame into the parent frame.
    pub fn transform_point(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.yaw.sin_cos();
        [self.x + c * p[0] - s * p[1], self.y + s * p[0] + c * p[1]]
    }

    /// Maps a parent-frame point into this pose's frame.
    pub fn inverse_transform_point(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.yaw.sin_cos();
        let dx = p[0] - self.x;
        let dy = p[1] - self.y;
        [c * dx + s * dy, -s * dx + c * dy]
    }

    /// `self ∘ other`: `other` is expressed in this pose's frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        let [x, y] = self.transform_point([other.x, other.y]);
        Pose::new(x, y, wrap_angle(self.yaw + other.yaw))
    }

    /// The pose of `other` expressed in this pose's frame.
    pub fn relative(&self, other: &Pose) -> Pose {
        let [x, y] = self.inverse_transform_point([other.x, other.y]);
        Pose::new(x, y, wrap_angle(other.yaw - self.yaw))
    }
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

/// Wraps an angle to `[0, 2π)`.
pub fn wrap_angle_positive(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Oriented rectangle: center, heading and full length (along heading) × width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedRect {
    pub center: [f64; 2],
    pub yaw: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedRect {
    pub fn new(center: [f64; 2], yaw: f64, length: f64, width: f64) -> Self {
        Self {
            center,
            yaw,
            length,
            width,
        }
    }

    fn axes(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.yaw.sin_cos();
        [[c, s], [-s, c]]
    }

    pub fn corners(&self) -> [[f64; 2]; 4] {
        let [u, v] = self.axes();
        let hl = self.length / 2.0;
        let hw = self.width / 2.0;
        let [cx, cy] = self.center;
        let p = |a: f64, b: f64| [cx + u[0] * a + v[0] * b, cy + u[1] * a + v[1] * b];
        [p(hl, hw), p(-hl, hw), p(-hl, -hw), p(hl, -hw)]
    }

    fn local(&self, p: [f64; 2]) -> [f64; 2] {
        Pose::new(self.center[0], self.center[1], self.yaw).inverse_transform_point(p)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let [lx, ly] = self.local(p);
        lx.abs() <= self.length / 2.0 && ly.abs() <= self.width / 2.0
    }

    /// Half the diagonal: radius of the circumscribed circle.
    pub fn circumradius(&self) -> f64 {
        self.length.hypot(self.width) / 2.0
    }

    fn project(&self, axis: [f64; 2]) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in self.corners() {
            let d = c[0] * axis[0] + c[1] * axis[1];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        (lo, hi)
    }

    /// Penetration depth by the separating-axis theorem; `None` when the
    /// rectangles are separated or only touch.
    pub fn penetration(&self, other: &OrientedRect) -> Option<f64> {
        let mut depth = f64::INFINITY;
        for axis in self.axes().into_iter().chain(other.axes()) {
            let (a0, a1) = self.project(axis);
            let (b0, b1) = other.project(axis);
            let overlap = a1.min(b1) - a0.max(b0);
            if overlap <= 1e-12 {
                return None;
            }
            depth = depth.min(overlap);
        }
        Some(depth)
    }

    /// Whether the closed segment `a→b` touches this rectangle (slab test in
    /// the rectangle's frame).
    pub fn intersects_segment(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        let p = self.local(a);
        let q = self.local(b);
        let half = [self.length / 2.0, self.width / 2.0];
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        for k in 0..2 {
            let d = q[k] - p[k];
            if d.abs() < 1e-15 {
                if p[k] < -half[k] || p[k] > half[k] {
                    return false;
                }
                continue;
            }
            let mut ta = (-half[k] - p[k]) / d;
            let mut tb = (half[k] - p[k]) / d;
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}
