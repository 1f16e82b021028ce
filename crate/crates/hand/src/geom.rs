//! Small 3-D vector helpers used by the kinematics and the rasterizer.

use evhand_tensor::Scalar;

pub type Vec3<F> = [F; 3];

pub fn add<F: Scalar>(a: Vec3<F>, b: Vec3<F>) -> Vec3<F> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub<F: Scalar>(a: Vec3<F>, b: Vec3<F>) -> Vec3<F> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale<F: Scalar>(a: Vec3<F>, s: F) -> Vec3<F> {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot<F: Scalar>(a: Vec3<F>, b: Vec3<F>) -> F {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross<F: Scalar>(a: Vec3<F>, b: Vec3<F>) -> Vec3<F> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm<F: Scalar>(a: Vec3<F>) -> F {
    dot(a, a).sqrt()
}

pub fn normalize<F: Scalar>(a: Vec3<F>) -> Vec3<F> {
    let n = norm(a);
    scale(a, F::one() / n)
}

pub fn lerp<F: Scalar>(a: Vec3<F>, b: Vec3<F>, s: F) -> Vec3<F> {
    add(a, scale(sub(b, a), s))
}

/// Rodrigues rotation of `v` about unit axis `k` by `angle`.
pub fn rotate_axis_angle<F: Scalar>(v: Vec3<F>, k: Vec3<F>, angle: F) -> Vec3<F> {
    let (s, c) = (angle.sin(), angle.cos());
    let kxv = cross(k, v);
    let kdv = dot(k, v);
    [
        v[0] * c + kxv[0] * s + k[0] * kdv * (F::one() - c),
        v[1] * c + kxv[1] * s + k[1] * kdv * (F::one() - c),
        v[2] * c + kxv[2] * s + k[2] * kdv * (F::one() - c),
    ]
}

/// Rotation by a rotation vector (axis * angle); identity for zero.
pub fn rotate_rotvec<F: Scalar>(v: Vec3<F>, r: Vec3<F>) -> Vec3<F> {
    let angle = norm(r);
    if angle == F::zero() {
        return v;
    }
    rotate_axis_angle(v, scale(r, F::one() / angle), angle)
}

/// Distance from point `p` to segment `[a, b]` in 2-D together with the
/// clamped projection parameter.
pub fn point_segment_2d<F: Scalar>(p: (F, F), a: (F, F), b: (F, F)) -> (F, F) {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let s = if len2 == F::zero() {
        F::zero()
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2)
            .max(F::zero())
            .min(F::one())
    };
    let (cx, cy) = (a.0 + dx * s, a.1 + dy * s);
    let (ex, ey) = (p.0 - cx, p.1 - cy);
    ((ex * ex + ey * ey).sqrt(), s)
}
