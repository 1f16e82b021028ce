//! Motion scripts: keyframed skeleton parameters with linear interpolation
//! in angle space, plus the seeded random generator behind the datasets.

use evhand_tensor::Scalar;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::{HandError, Result};
use crate::render::{render_with_surface, RenderConfig};
use crate::skeleton::{
    FingerAngles, HandShape, HandSkeleton, JointAngles, RigidPose, FINGERS,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonParams<F: Scalar> {
    pub angles: JointAngles<F>,
    pub pose: RigidPose<F>,
}

/// Keyframed motion; `micro_steps` frames per keyframe interval.
#[derive(Debug, Clone)]
pub struct MotionScript<F: Scalar> {
    pub shape: HandShape<F>,
    pub keyframes: Vec<SkeletonParams<F>>,
    pub micro_steps: usize,
}

impl<F: Scalar> MotionScript<F> {
    /// Total number of micro-step intervals.
    pub fn steps(&self) -> usize {
        (self.keyframes.len() - 1) * self.micro_steps
    }

    /// Skeleton at continuous time `tau` in keyframe units, `0..=K-1`.
    pub fn at_time(&self, tau: F) -> HandSkeleton<F> {
        let last = F::from_f64_c((self.keyframes.len() - 1) as f64);
        let tau = tau.max(F::zero()).min(last);
        let seg = tau
            .floor()
            .to_f64_c()
            .min((self.keyframes.len() - 2) as f64) as usize;
        let t = tau - F::from_f64_c(seg as f64);
        let params = lerp_params(&self.keyframes[seg], &self.keyframes[seg + 1], t);
        HandSkeleton {
            shape: self.shape.clone(),
            angles: params.angles,
            pose: params.pose,
        }
    }

    /// Skeleton at micro-step `i`, `0..=steps()`.
    pub fn at_step(&self, i: usize) -> HandSkeleton<F> {
        let tau = F::from_f64_c(i as f64 / self.micro_steps as f64);
        self.at_time(tau)
    }
}

fn lerp3<F: Scalar>(a: [F; 3], b: [F; 3], t: F) -> [F; 3] {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

fn lerp_params<F: Scalar>(a: &SkeletonParams<F>, b: &SkeletonParams<F>, t: F) -> SkeletonParams<F> {
    let mut angles = JointAngles::default();
    for f in 0..FINGERS {
        let (x, y) = (a.angles.fingers[f], b.angles.fingers[f]);
        angles.fingers[f] = FingerAngles {
            mcp_flex: x.mcp_flex + (y.mcp_flex - x.mcp_flex) * t,
            mcp_abd: x.mcp_abd + (y.mcp_abd - x.mcp_abd) * t,
            pip_flex: x.pip_flex + (y.pip_flex - x.pip_flex) * t,
            dip_flex: x.dip_flex + (y.dip_flex - x.dip_flex) * t,
        };
    }
    SkeletonParams {
        angles,
        pose: RigidPose {
            rotation: lerp3(a.pose.rotation, b.pose.rotation, t),
            translation: lerp3(a.pose.translation, b.pose.translation, t),
        },
    }
}

/// Motion intensity class of a sampled script.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Amplitude {
    Low,
    High,
}

#[derive(Debug, Clone, Copy)]
struct AmplitudeRanges {
    flex_delta: f64,
    abd_delta: f64,
    trans_xy: f64,
    trans_z: f64,
    rot_delta: f64,
}

impl Amplitude {
    fn ranges(self) -> AmplitudeRanges {
        match self {
            Amplitude::Low => AmplitudeRanges {
                flex_delta: 0.25,
                abd_delta: 0.06,
                trans_xy: 8.0,
                trans_z: 4.0,
                rot_delta: 0.04,
            },
            Amplitude::High => AmplitudeRanges {
                flex_delta: 0.65,
                abd_delta: 0.12,
                trans_xy: 14.0,
                trans_z: 6.0,
                rot_delta: 0.05,
            },
        }
    }
}

const SCRIPT_ATTEMPTS: usize = 200;

/// Draws a renderable random script: a random base posture followed by
/// `keyframes - 1` random articulation deltas of the given amplitude class.
/// Every keyframe is verified to project inside the frame.
pub fn random_script<F: Scalar>(
    rng: &mut ChaCha12Rng,
    keyframes: usize,
    micro_steps: usize,
    amplitude: Amplitude,
    h: usize,
    w: usize,
    cfg: &RenderConfig<F>,
) -> Result<MotionScript<F>> {
    let shape = HandShape::<F>::default();
    'attempt: for _ in 0..SCRIPT_ATTEMPTS {
        let base = random_base_params(rng);
        let mut frames = vec![base];
        let r = amplitude.ranges();
        for _ in 1..keyframes {
            let prev = frames.last().unwrap();
            frames.push(random_delta_params::<F>(rng, prev, &r, &shape));
        }
        let script = MotionScript {
            shape: shape.clone(),
            keyframes: frames,
            micro_steps,
        };
        for k in 0..keyframes {
            let skel = script.at_time(F::from_f64_c(k as f64));
            if render_with_surface(&skel, h, w, cfg).is_err() {
                continue 'attempt;
            }
        }
        return Ok(script);
    }
    Err(HandError::RetriesExhausted(SCRIPT_ATTEMPTS))
}

fn random_base_params<F: Scalar>(rng: &mut ChaCha12Rng) -> SkeletonParams<F> {
    let c = F::from_f64_c;
    let mut angles = JointAngles::default();
    for f in 0..FINGERS {
        angles.fingers[f] = FingerAngles {
            mcp_flex: c(rng.gen_range(0.0..0.55)),
            mcp_abd: c(rng.gen_range(-0.12..0.12)),
            pip_flex: c(rng.gen_range(0.0..0.5)),
            dip_flex: c(rng.gen_range(0.0..0.35)),
        };
    }
    // the rest pose grows upward from the wrist at the origin; pull the palm
    // center toward the frame center before jittering
    let pose = RigidPose {
        rotation: [
            c(rng.gen_range(-0.2..0.2)),
            c(rng.gen_range(-0.2..0.2)),
            c(rng.gen_range(-0.25..0.25)),
        ],
        translation: [
            c(rng.gen_range(-12.0..12.0)),
            c(-70.0 + rng.gen_range(-12.0..12.0)),
            c(rng.gen_range(-25.0..25.0)),
        ],
    };
    SkeletonParams { angles, pose }
}

fn random_delta_params<F: Scalar>(
    rng: &mut ChaCha12Rng,
    prev: &SkeletonParams<F>,
    r: &AmplitudeRanges,
    shape: &HandShape<F>,
) -> SkeletonParams<F> {
    let c = F::from_f64_c;
    let lim = &shape.limits;
    let clampf = |v: F, lo: F, hi: F| v.max(lo).min(hi);
    let mut angles = JointAngles::default();
    for f in 0..FINGERS {
        let p = prev.angles.fingers[f];
        angles.fingers[f] = FingerAngles {
            mcp_flex: clampf(
                p.mcp_flex + c(rng.gen_range(-r.flex_delta..r.flex_delta)),
                lim.flex_min,
                lim.flex_max,
            ),
            mcp_abd: clampf(
                p.mcp_abd + c(rng.gen_range(-r.abd_delta..r.abd_delta)),
                lim.abd_min,
                lim.abd_max,
            ),
            pip_flex: clampf(
                p.pip_flex + c(rng.gen_range(-r.flex_delta..r.flex_delta)),
                lim.flex_min,
                lim.flex_max,
            ),
            dip_flex: clampf(
                p.dip_flex + c(rng.gen_range(-r.flex_delta..r.flex_delta)),
                lim.flex_min,
                lim.flex_max,
            ),
        };
    }
    let t = prev.pose.translation;
    let rot = prev.pose.rotation;
    SkeletonParams {
        angles,
        pose: RigidPose {
            rotation: [
                rot[0] + c(rng.gen_range(-r.rot_delta..r.rot_delta)),
                rot[1] + c(rng.gen_range(-r.rot_delta..r.rot_delta)),
                rot[2] + c(rng.gen_range(-r.rot_delta..r.rot_delta)),
            ],
            translation: [
                t[0] + c(rng.gen_range(-r.trans_xy..r.trans_xy)),
                t[1] + c(rng.gen_range(-r.trans_xy..r.trans_xy)),
                t[2] + c(rng.gen_range(-r.trans_z..r.trans_z)),
            ],
        },
    }
}
