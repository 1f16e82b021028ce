//! Dataset generation: packaged splits of (RGB frame, pose) and
//! (event stream, pose) samples plus ground-truth-flow sequences, with a
//! manifest that records every file and seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use evhand_event::{io as evio, linear_to_log, oracle_simulate_events, Image, ReferenceMode};
use evhand_tensor::{Scalar, Tensor};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HandError, Result};
use crate::flow::flow_from_surface;
use crate::render::{render_with_surface, RenderConfig};
use crate::script::{random_script, Amplitude, MotionScript};
use crate::skeleton::forward_kinematics;

/// Serializable twin of [`ReferenceMode`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    #[default]
    Carry,
    ResetPerPair,
}

impl From<OracleMode> for ReferenceMode {
    fn from(m: OracleMode) -> Self {
        match m {
            OracleMode::Carry => ReferenceMode::Carry,
            OracleMode::ResetPerPair => ReferenceMode::ResetPerPair,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub height: usize,
    pub width: usize,
    pub rgb_samples: usize,
    pub event_samples: usize,
    pub finetune_samples: usize,
    pub eval_samples: usize,
    pub flow_sequences: usize,
    pub keyframes: usize,
    pub micro_steps: usize,
    pub contrast: f64,
    pub dt_us: u64,
    pub oracle_mode: OracleMode,
    pub px_per_mm: f64,
    /// Fraction of samples drawn with high motion amplitude.
    pub high_amplitude_fraction: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            rgb_samples: 32,
            event_samples: 16,
            finetune_samples: 8,
            eval_samples: 8,
            flow_sequences: 8,
            keyframes: 3,
            micro_steps: 8,
            contrast: 0.2,
            dt_us: 1000,
            oracle_mode: OracleMode::Carry,
            px_per_mm: 0.20,
            high_amplitude_fraction: 0.7,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < 8 || self.width < 8 {
            return Err(HandError::InvalidConfig("frame too small".into()));
        }
        if self.keyframes < 2 {
            return Err(HandError::InvalidConfig("need at least 2 keyframes".into()));
        }
        if self.micro_steps < 1 {
            return Err(HandError::InvalidConfig("micro_steps must be >= 1".into()));
        }
        if self.contrast <= 0.0 {
            return Err(HandError::InvalidConfig("contrast must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.high_amplitude_fraction) {
            return Err(HandError::InvalidConfig(
                "high_amplitude_fraction must be in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn render_config<F: Scalar>(&self) -> RenderConfig<F> {
        RenderConfig {
            px_per_mm: F::from_f64_c(self.px_per_mm),
            ..RenderConfig::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    pub index: usize,
    pub script_seed: u64,
    pub amplitude: Amplitude,
    /// kind -> path relative to the dataset root
    pub files: BTreeMap<String, String>,
    /// event-window bounds in microseconds, for event-like samples
    pub window: Option<(u64, u64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config: GenConfig,
    pub splits: BTreeMap<String, Vec<SampleRecord>>,
}

impl Manifest {
    pub fn load(root: &Path) -> Result<Self> {
        let text = fs::read_to_string(root.join("manifest.json"))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn split(&self, name: &str) -> &[SampleRecord] {
        self.splits.get(name).map(|v| v.as_slice()).unwrap_or(&[])
    }
}

/// Named sub-seed derivation: every RNG stream hangs off the base seed and a
/// stable label, so splits can never share a script seed.
pub fn subseed(base: u64, label: &str, index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(format!("evhand/{label}/{index}/{base}").as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

fn draw_amplitude(rng: &mut ChaCha12Rng, fraction_high: f64) -> Amplitude {
    if rng.gen_bool(fraction_high) {
        Amplitude::High
    } else {
        Amplitude::Low
    }
}

/// Renders every micro-step of a script as linear-intensity frames.
fn script_frames<F: Scalar>(
    script: &MotionScript<F>,
    cfg: &GenConfig,
) -> Result<Vec<Image<F>>> {
    let rc = cfg.render_config::<F>();
    (0..=script.steps())
        .map(|i| Ok(render_with_surface(&script.at_step(i), cfg.height, cfg.width, &rc)?.image))
        .collect()
}

fn stack_images<F: Scalar>(frames: &[Image<F>]) -> Tensor<F> {
    let (h, w) = (frames[0].height(), frames[0].width());
    let mut data = Vec::with_capacity(frames.len() * h * w);
    for f in frames {
        data.extend_from_slice(f.data());
    }
    Tensor::new(&[frames.len(), h, w], data).expect("uniform frames")
}

/// Grayscale render replicated to the `[3, H, W]` encoder input layout.
fn frame_to_rgb_tensor<F: Scalar>(img: &Image<F>) -> Tensor<F> {
    let (h, w) = (img.height(), img.width());
    let mut data = Vec::with_capacity(3 * h * w);
    for _ in 0..3 {
        data.extend_from_slice(img.data());
    }
    Tensor::new(&[3, h, w], data).expect("fixed shape")
}

enum SplitKind {
    Rgb,
    Event,
    Flow,
}

fn generate_sample<F: Scalar>(
    root: &Path,
    split: &str,
    kind: &SplitKind,
    index: usize,
    seed: u64,
    cfg: &GenConfig,
) -> Result<SampleRecord> {
    let mut rng = ChaCha12Rng::seed_from_u64(subseed(seed, split, index));
    let amplitude = draw_amplitude(&mut rng, cfg.high_amplitude_fraction);
    let script_seed = rng.gen::<u64>();
    let mut script_rng = ChaCha12Rng::seed_from_u64(script_seed);
    let rc = cfg.render_config::<F>();
    let script: MotionScript<F> = random_script(
        &mut script_rng,
        cfg.keyframes,
        cfg.micro_steps,
        amplitude,
        cfg.height,
        cfg.width,
        &rc,
    )?;
    let id = format!("{split}-{index:05}");
    let prefix = format!("{split}/{index:05}");
    let mut files = BTreeMap::new();
    let mut window = None;

    match kind {
        SplitKind::Rgb => {
            let skel = script.at_step(0);
            let raster = render_with_surface(&skel, cfg.height, cfg.width, &rc)?;
            let frame = frame_to_rgb_tensor(&raster.image);
            let pose = raster.pose.to_tensor();
            let frame_rel = format!("{prefix}_frame.darr");
            let pose_rel = format!("{prefix}_pose.darr");
            evio::write_array(&root.join(&frame_rel), "frame", &frame)?;
            evio::write_array(&root.join(&pose_rel), "pose", &pose)?;
            files.insert("frame".into(), frame_rel);
            files.insert("pose".into(), pose_rel);
        }
        SplitKind::Event => {
            let frames = script_frames(&script, cfg)?;
            let logs: Vec<Image<F>> = frames.iter().map(linear_to_log).collect();
            let stream = oracle_simulate_events(
                &logs,
                F::from_f64_c(cfg.contrast),
                0,
                cfg.dt_us,
                cfg.oracle_mode.into(),
            )?;
            let end_pose = forward_kinematics(&script.at_step(script.steps()))?;
            let events_rel = format!("{prefix}_events.evst");
            let pose_rel = format!("{prefix}_pose.darr");
            evio::write_event_file(&root.join(&events_rel), &stream)?;
            evio::write_array(&root.join(&pose_rel), "pose", &end_pose.to_tensor())?;
            files.insert("events".into(), events_rel);
            files.insert("pose".into(), pose_rel);
            window = Some((0, script.steps() as u64 * cfg.dt_us));
        }
        SplitKind::Flow => {
            let frames = script_frames(&script, cfg)?;
            let logs: Vec<Image<F>> = frames.iter().map(linear_to_log).collect();
            let stream = oracle_simulate_events(
                &logs,
                F::from_f64_c(cfg.contrast),
                0,
                cfg.dt_us,
                cfg.oracle_mode.into(),
            )?;
            let steps = script.steps();
            let mut flow_data = Vec::with_capacity(steps * cfg.height * cfg.width * 2);
            for i in 0..steps {
                let a = script.at_step(i);
                let raster = render_with_surface(&a, cfg.height, cfg.width, &rc)?;
                let pose_b = forward_kinematics(&script.at_step(i + 1))?;
                let fl = flow_from_surface(
                    &raster.surface,
                    &raster.pose,
                    &pose_b,
                    cfg.height,
                    cfg.width,
                    &rc,
                );
                flow_data.extend_from_slice(fl.data());
            }
            let flows =
                Tensor::new(&[steps, cfg.height, cfg.width, 2], flow_data).expect("shape");
            let frames_rel = format!("{prefix}_frames.darr");
            let flows_rel = format!("{prefix}_flows.darr");
            let events_rel = format!("{prefix}_events.evst");
            evio::write_array(&root.join(&frames_rel), "frames", &stack_images(&frames))?;
            evio::write_array(&root.join(&flows_rel), "flows", &flows)?;
            evio::write_event_file(&root.join(&events_rel), &stream)?;
            files.insert("frames".into(), frames_rel);
            files.insert("flows".into(), flows_rel);
            files.insert("events".into(), events_rel);
            window = Some((0, steps as u64 * cfg.dt_us));
        }
    }
    Ok(SampleRecord {
        id,
        index,
        script_seed,
        amplitude,
        files,
        window,
    })
}

/// Generates the full dataset directory; the manifest lists every sample.
/// Byte-identical for identical `(seed, config)`.
pub fn generate_dataset<F: Scalar>(seed: u64, config: &GenConfig, out: &Path) -> Result<Manifest> {
    config.validate()?;
    let plan: [(&str, SplitKind, usize); 5] = [
        ("rgb", SplitKind::Rgb, config.rgb_samples),
        ("event", SplitKind::Event, config.event_samples),
        ("finetune", SplitKind::Event, config.finetune_samples),
        ("eval", SplitKind::Event, config.eval_samples),
        ("flow", SplitKind::Flow, config.flow_sequences),
    ];
    let mut splits = BTreeMap::new();
    for (name, kind, count) in &plan {
        fs::create_dir_all(out.join(name))?;
        let records: Vec<SampleRecord> = (0..*count)
            .into_par_iter()
            .map(|i| generate_sample::<F>(out, name, kind, i, seed, config))
            .collect::<Result<Vec<_>>>()?;
        splits.insert(name.to_string(), records);
    }
    let manifest = Manifest {
        seed,
        config: config.clone(),
        splits,
    };
    fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

/// Absolute path of a sample file kind.
pub fn sample_path(root: &Path, rec: &SampleRecord, kind: &str) -> Option<PathBuf> {
    rec.files.get(kind).map(|rel| root.join(rel))
}
