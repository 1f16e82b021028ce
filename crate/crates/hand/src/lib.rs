//! Synthetic articulated-hand benchmark: kinematic skeleton, orthographic
//! depth-shaded rendering, ground-truth dense flow, and dataset packaging.

pub mod dataset;
mod error;
pub mod geom;
mod flow;
mod render;
mod script;
mod skeleton;

pub use error::{HandError, Result};
pub use flow::{flow_from_surface, gt_flow};
pub use render::{
    project, psnr_on_mask, render_hand, render_with_surface, Raster, RenderConfig, SurfaceRef,
    BACKGROUND, PALM_TRIANGLES,
};
pub use script::{random_script, Amplitude, MotionScript, SkeletonParams};
pub use skeleton::{
    bone_joints, forward_kinematics, rest_pose_joints, AngleLimits, FingerAngles, HandPose,
    HandShape, HandSkeleton, JointAngles, RigidPose, FINGERS, FINGER_NAMES, JOINTS,
};

/// Concrete 64-bit aliases.
pub type HandSkeleton64 = HandSkeleton<f64>;
pub type HandPose64 = HandPose<f64>;
pub type MotionScript64 = MotionScript<f64>;
