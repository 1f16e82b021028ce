//! Dense ground-truth flow between two skeleton configurations.

use evhand_event::VectorField;
use evhand_tensor::Scalar;

use crate::error::Result;
use crate::render::{project, render_with_surface, RenderConfig, SurfaceRef};
use crate::skeleton::{bone_joints, forward_kinematics, HandPose, HandSkeleton};

/// Per pixel covered by the hand in frame `a`: projected displacement of the
/// visible surface point from `a` to `b`, in pixels. Background flow is zero;
/// occlusion picks the nearest surface.
pub fn gt_flow<F: Scalar>(
    skel_a: &HandSkeleton<F>,
    skel_b: &HandSkeleton<F>,
    h: usize,
    w: usize,
    cfg: &RenderConfig<F>,
) -> Result<VectorField<F>> {
    let raster = render_with_surface(skel_a, h, w, cfg)?;
    let pose_b = forward_kinematics(skel_b)?;
    Ok(flow_from_surface(&raster.surface, &raster.pose, &pose_b, h, w, cfg))
}

/// Flow from an already rasterized frame `a`, reusing its surface buffer.
pub fn flow_from_surface<F: Scalar>(
    surface: &[Option<SurfaceRef<F>>],
    pose_a: &HandPose<F>,
    pose_b: &HandPose<F>,
    h: usize,
    w: usize,
    cfg: &RenderConfig<F>,
) -> VectorField<F> {
    let mut flow = VectorField::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let Some(surf) = surface[y * w + x] else {
                continue;
            };
            let (pa, pb) = match surf {
                SurfaceRef::Bone { finger, segment, s } => {
                    let (j0, j1) = bone_joints(finger, segment);
                    let pa = crate::geom::lerp(pose_a.joint(j0), pose_a.joint(j1), s);
                    let pb = crate::geom::lerp(pose_b.joint(j0), pose_b.joint(j1), s);
                    (pa, pb)
                }
                SurfaceRef::Palm { triangle, w0, w1, w2 } => {
                    let js = [0, 1 + 4 * triangle, 1 + 4 * (triangle + 1)];
                    let combine = |p: &HandPose<F>| {
                        let (a, b, c) = (p.joint(js[0]), p.joint(js[1]), p.joint(js[2]));
                        [
                            a[0] * w0 + b[0] * w1 + c[0] * w2,
                            a[1] * w0 + b[1] * w1 + c[1] * w2,
                            a[2] * w0 + b[2] * w1 + c[2] * w2,
                        ]
                    };
                    (combine(pose_a), combine(pose_b))
                }
            };
            let (xa, ya) = project(pa, h, w, cfg);
            let (xb, yb) = project(pb, h, w, cfg);
            flow.set(y, x, xb - xa, yb - ya);
        }
    }
    flow
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::HandShape;

    fn centered() -> HandSkeleton<f64> {
        let mut s = HandSkeleton::rest(HandShape::default());
        s.pose.translation = [0.0, -70.0, 0.0];
        s
    }

    #[test]
    fn identical_skeletons_zero_flow() {
        let s = centered();
        let f = gt_flow(&s, &s, 64, 64, &RenderConfig::default()).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pure_translation_gives_uniform_flow_on_hand() {
        let a = centered();
        let mut b = a.clone();
        // 1.5 px right, 0.5 px down: y_px grows downward so y_mm decreases
        b.pose.translation[0] += 1.5 / 0.20;
        b.pose.translation[1] -= 0.5 / 0.20;
        let cfg = RenderConfig::default();
        let flow = gt_flow(&a, &b, 64, 64, &cfg).unwrap();
        let raster = render_with_surface(&a, 64, 64, &cfg).unwrap();
        for y in 0..64 {
            for x in 0..64 {
                let (u, v) = flow.get(y, x);
                if raster.surface[y * 64 + x].is_some() {
                    assert!((u - 1.5).abs() < 1e-9, "u {u}");
                    assert!((v - 0.5).abs() < 1e-9, "v {v}");
                } else {
                    assert_eq!((u, v), (0.0, 0.0));
                }
            }
        }
    }
}
