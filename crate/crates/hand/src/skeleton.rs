//! Kinematic hand skeleton: 21 joints, per-finger flexion/abduction, global
//! rigid pose, forward kinematics.
//!
//! Joint layout: index 0 is the wrist; finger `f` (thumb, index, middle,
//! ring, pinky) owns joints `1+4f .. 4+4f` = [MCP, PIP, DIP, TIP].
//! The rest pose lies in the x-y plane (palm facing the camera at +z,
//! fingers fanning upward); flexion curls toward +z (the camera), abduction
//! rotates inside the palm plane.

use evhand_tensor::{Scalar, Tensor};

use crate::error::{HandError, Result};
use crate::geom::{self, Vec3};

pub const JOINTS: usize = 21;
pub const FINGERS: usize = 5;
pub const FINGER_NAMES: [&str; 5] = ["thumb", "index", "middle", "ring", "pinky"];

#[derive(Debug, Clone, PartialEq)]
pub struct AngleLimits<F: Scalar> {
    pub flex_min: F,
    pub flex_max: F,
    pub abd_min: F,
    pub abd_max: F,
}

impl<F: Scalar> Default for AngleLimits<F> {
    fn default() -> Self {
        Self {
            flex_min: F::from_f64_c(-0.30),
            flex_max: F::from_f64_c(1.70),
            abd_min: F::from_f64_c(-0.40),
            abd_max: F::from_f64_c(0.40),
        }
    }
}

/// Fixed geometry of one hand: bone lengths (mm), rest directions, radii.
#[derive(Debug, Clone, PartialEq)]
pub struct HandShape<F: Scalar> {
    /// Unit metacarpal directions in the palm plane.
    pub metacarpal_dirs: [[F; 2]; FINGERS],
    pub metacarpal_lens: [F; FINGERS],
    /// Proximal / middle / distal phalanx lengths.
    pub phalanx_lens: [[F; 3]; FINGERS],
    /// Capsule radii for rendering, mm.
    pub finger_radii: [F; FINGERS],
    pub limits: AngleLimits<F>,
}

impl<F: Scalar> Default for HandShape<F> {
    fn default() -> Self {
        let c = F::from_f64_c;
        let dir = |x: f64, y: f64| -> [F; 2] {
            let n = (x * x + y * y).sqrt();
            [c(x / n), c(y / n)]
        };
        Self {
            metacarpal_dirs: [
                dir(-0.78, 0.63),
                dir(-0.25, 0.97),
                dir(0.00, 1.00),
                dir(0.22, 0.98),
                dir(0.46, 0.89),
            ],
            metacarpal_lens: [c(40.0), c(85.0), c(88.0), c(82.0), c(75.0)],
            phalanx_lens: [
                [c(34.0), c(28.0), c(23.0)],
                [c(42.0), c(25.0), c(20.0)],
                [c(46.0), c(28.0), c(21.0)],
                [c(42.0), c(26.0), c(20.0)],
                [c(33.0), c(20.0), c(17.0)],
            ],
            finger_radii: [c(9.0), c(8.0), c(8.0), c(7.5), c(7.0)],
            limits: AngleLimits::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FingerAngles<F: Scalar> {
    pub mcp_flex: F,
    pub mcp_abd: F,
    pub pip_flex: F,
    pub dip_flex: F,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct JointAngles<F: Scalar> {
    pub fingers: [FingerAngles<F>; FINGERS],
}

/// Global rigid pose: rotation vector (radians) and translation (mm).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RigidPose<F: Scalar> {
    pub rotation: Vec3<F>,
    pub translation: Vec3<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandSkeleton<F: Scalar> {
    pub shape: HandShape<F>,
    pub angles: JointAngles<F>,
    pub pose: RigidPose<F>,
}

impl<F: Scalar> HandSkeleton<F> {
    pub fn rest(shape: HandShape<F>) -> Self {
        Self {
            shape,
            angles: JointAngles::default(),
            pose: RigidPose::default(),
        }
    }
}

/// J x 3 joint positions in millimeters, camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct HandPose<F: Scalar> {
    joints: Vec<Vec3<F>>,
}

impl<F: Scalar> HandPose<F> {
    pub fn new(joints: Vec<Vec3<F>>) -> Self {
        assert_eq!(joints.len(), JOINTS);
        Self { joints }
    }

    pub fn joints(&self) -> &[Vec3<F>] {
        &self.joints
    }

    pub fn joint(&self, j: usize) -> Vec3<F> {
        self.joints[j]
    }

    pub fn to_tensor(&self) -> Tensor<F> {
        let mut data = Vec::with_capacity(JOINTS * 3);
        for j in &self.joints {
            data.extend_from_slice(j);
        }
        Tensor::new(&[JOINTS, 3], data).expect("fixed shape")
    }

    pub fn from_tensor(t: &Tensor<F>) -> Option<Self> {
        if t.shape() != [JOINTS, 3] {
            return None;
        }
        let joints = t
            .data()
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        Some(Self { joints })
    }
}

fn check_angle<F: Scalar>(name: String, v: F, min: F, max: F) -> Result<()> {
    if v < min || v > max {
        return Err(HandError::AngleOutOfLimits {
            joint: name,
            value: v.to_f64_c(),
            min: min.to_f64_c(),
            max: max.to_f64_c(),
        });
    }
    Ok(())
}

/// Chains per-bone rigid transforms from the wrist outward.
///
/// Successive flexions of one finger share a lateral axis, so the chain is a
/// planar curl after the in-plane abduction.
pub fn forward_kinematics<F: Scalar>(skel: &HandSkeleton<F>) -> Result<HandPose<F>> {
    let lim = &skel.shape.limits;
    for (f, a) in skel.angles.fingers.iter().enumerate() {
        let n = FINGER_NAMES[f];
        check_angle(format!("{n}.mcp_flex"), a.mcp_flex, lim.flex_min, lim.flex_max)?;
        check_angle(format!("{n}.pip_flex"), a.pip_flex, lim.flex_min, lim.flex_max)?;
        check_angle(format!("{n}.dip_flex"), a.dip_flex, lim.flex_min, lim.flex_max)?;
        check_angle(format!("{n}.mcp_abd"), a.mcp_abd, lim.abd_min, lim.abd_max)?;
    }

    let z_axis: Vec3<F> = [F::zero(), F::zero(), F::one()];
    let mut joints = vec![[F::zero(); 3]; JOINTS];
    // local-frame positions first; the global pose is applied at the end
    for f in 0..FINGERS {
        let a = skel.angles.fingers[f];
        let d2 = skel.shape.metacarpal_dirs[f];
        let dir: Vec3<F> = [d2[0], d2[1], F::zero()];
        let mcp = geom::scale(dir, skel.shape.metacarpal_lens[f]);

        let base = geom::rotate_axis_angle(dir, z_axis, a.mcp_abd);
        let lat = geom::normalize(geom::cross(dir, z_axis));
        let lat = geom::rotate_axis_angle(lat, z_axis, a.mcp_abd);

        let lens = skel.shape.phalanx_lens[f];
        let cum = [
            a.mcp_flex,
            a.mcp_flex + a.pip_flex,
            a.mcp_flex + a.pip_flex + a.dip_flex,
        ];
        let mut p = mcp;
        joints[1 + 4 * f] = p;
        for seg in 0..3 {
            let d = geom::rotate_axis_angle(base, lat, cum[seg]);
            p = geom::add(p, geom::scale(d, lens[seg]));
            joints[2 + 4 * f + seg] = p;
        }
    }
    for j in joints.iter_mut() {
        *j = geom::add(geom::rotate_rotvec(*j, skel.pose.rotation), skel.pose.translation);
    }
    Ok(HandPose::new(joints))
}

/// Joint positions of the zero-angle, identity-pose configuration, written
/// as plain bone-vector sums. This is the documented rest pose the FK chain
/// must reproduce exactly.
pub fn rest_pose_joints<F: Scalar>(shape: &HandShape<F>) -> HandPose<F> {
    let mut joints = vec![[F::zero(); 3]; JOINTS];
    for f in 0..FINGERS {
        let d2 = shape.metacarpal_dirs[f];
        let dir: Vec3<F> = [d2[0], d2[1], F::zero()];
        let mut p = geom::scale(dir, shape.metacarpal_lens[f]);
        joints[1 + 4 * f] = p;
        for seg in 0..3 {
            p = geom::add(p, geom::scale(dir, shape.phalanx_lens[f][seg]));
            joints[2 + 4 * f + seg] = p;
        }
    }
    HandPose::new(joints)
}

/// Endpoint joint indices of a renderable bone: segment 0 is the metacarpal
/// (wrist to MCP), segments 1..=3 are the phalanges.
pub fn bone_joints(finger: usize, segment: usize) -> (usize, usize) {
    if segment == 0 {
        (0, 1 + 4 * finger)
    } else {
        (segment + 4 * finger, segment + 1 + 4 * finger)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_angles_reproduce_rest_pose_exactly() {
        let skel = HandSkeleton::rest(HandShape::<f64>::default());
        let fk = forward_kinematics(&skel).unwrap();
        let rest = rest_pose_joints(&skel.shape);
        for (a, b) in fk.joints().iter().zip(rest.joints()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-12, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn global_translation_shifts_every_joint() {
        let mut skel = HandSkeleton::rest(HandShape::<f64>::default());
        let base = forward_kinematics(&skel).unwrap();
        skel.pose.translation = [10.0, 0.0, 0.0];
        let moved = forward_kinematics(&skel).unwrap();
        for (a, b) in base.joints().iter().zip(moved.joints()) {
            assert!((b[0] - a[0] - 10.0).abs() < 1e-12);
            assert!((b[1] - a[1]).abs() < 1e-12);
            assert!((b[2] - a[2]).abs() < 1e-12);
        }
    }

    #[test]
    fn ninety_degree_mcp_flexion_matches_manual_chain() {
        // middle finger points straight up (+y); flexing the MCP 90 degrees
        // folds the whole finger toward +z while the MCP stays put
        let mut skel = HandSkeleton::rest(HandShape::<f64>::default());
        skel.angles.fingers[2].mcp_flex = std::f64::consts::FRAC_PI_2;
        let fk = forward_kinematics(&skel).unwrap();
        let shape = &skel.shape;
        let mcp = fk.joint(9);
        assert!((mcp[1] - 88.0).abs() < 1e-9);
        // manual two-bone chain: every phalanx now points along +z
        let tip = fk.joint(12);
        let total: f64 = shape.phalanx_lens[2].iter().sum();
        assert!((tip[2] - total).abs() < 1e-9, "tip {tip:?}");
        assert!((tip[1] - 88.0).abs() < 1e-9);
        assert!(tip[0].abs() < 1e-9);
    }

    #[test]
    fn out_of_limit_angle_is_rejected() {
        let mut skel = HandSkeleton::rest(HandShape::<f64>::default());
        skel.angles.fingers[0].mcp_flex = 3.0;
        assert!(matches!(
            forward_kinematics(&skel),
            Err(HandError::AngleOutOfLimits { .. })
        ));
    }

    #[test]
    fn rigid_equivariance() {
        let mut skel = HandSkeleton::rest(HandShape::<f64>::default());
        skel.angles.fingers[1].mcp_flex = 0.7;
        skel.angles.fingers[3].pip_flex = 0.4;
        let base = forward_kinematics(&skel).unwrap();
        let rot = [0.2, -0.3, 0.5];
        let tr = [5.0, -8.0, 12.0];
        skel.pose = RigidPose {
            rotation: rot,
            translation: tr,
        };
        let moved = forward_kinematics(&skel).unwrap();
        for (a, b) in base.joints().iter().zip(moved.joints()) {
            let expect = geom::add(geom::rotate_rotvec(*a, rot), tr);
            for k in 0..3 {
                assert!((b[k] - expect[k]).abs() < 1e-9);
            }
        }
    }
}
