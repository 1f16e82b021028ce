//! Pseudo-event frame construction.
//!
//! The pure functions here run outside any autodiff graph (used with
//! ground-truth flows and in tests); [`graph`] builds the identical
//! computation inside a training graph with straight-through quantization.
//! Both paths share one sign convention: with backward warping
//! `x_t(p) = x_{t-1}(p - v)`, the linearized per-pixel log-intensity change
//! is `-<grad x, v>`, so constructed polarity matches what an event camera
//! watching the warped sequence would emit.

pub mod graph;

use evhand_event::{
    accumulate_histograms, quantize_change_map, EventHistogram, Image, VectorField,
};
use evhand_tensor::kernels::bilinear_sample_clamped;
use evhand_tensor::Scalar;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConstructError {
    #[error("image too small for gradients: {0}x{1} (need at least 3x3)")]
    ImageTooSmall(usize, usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("iteration count must be >= 1")]
    NoIterations,

    #[error("flow provider failed at iteration {t}: {message}")]
    FlowProvider { t: usize, message: String },

    #[error("incomplete trace: {0}")]
    IncompleteTrace(String),

    #[error(transparent)]
    Event(#[from] evhand_event::EventError),

    #[error(transparent)]
    Tensor(#[from] evhand_tensor::TensorError),
}

pub type Result<T> = std::result::Result<T, ConstructError>;

/// Where the floor of the accumulated change is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuantizeMode {
    /// Quantize each iteration's change map and sum the counts (default;
    /// matches per-interval event emission).
    #[default]
    PerIteration,
    /// Accumulate raw changes over all iterations and floor once (ablation).
    Final,
}

#[derive(Debug, Clone)]
pub struct ConstructOptions<F: Scalar> {
    pub contrast: F,
    pub quantize: QuantizeMode,
    /// Per-iteration flow magnitude cap in pixels; `None` means `H / 4`.
    pub flow_cap: Option<F>,
}

impl<F: Scalar> ConstructOptions<F> {
    pub fn new(contrast: F) -> Self {
        Self {
            contrast,
            quantize: QuantizeMode::PerIteration,
            flow_cap: None,
        }
    }

    fn cap_for(&self, height: usize) -> F {
        self.flow_cap
            .unwrap_or_else(|| F::from_f64_c(height as f64 / 4.0))
    }
}

/// Spatial log-intensity gradient by central differences under border
/// replication: `((I(x+1) - I(x-1)) / 2` with clamped neighbour indices, so
/// border columns/rows fall back to halved one-sided differences.
pub fn spatial_gradient<F: Scalar>(img: &Image<F>) -> Result<VectorField<F>> {
    let (h, w) = (img.height(), img.width());
    if h < 3 || w < 3 {
        return Err(ConstructError::ImageTooSmall(h, w));
    }
    let mut out = VectorField::zeros(h, w);
    let half = F::half();
    for y in 0..h {
        for x in 0..w {
            let xr = img.get(y, (x + 1).min(w - 1));
            let xl = img.get(y, x.saturating_sub(1));
            let yd = img.get((y + 1).min(h - 1), x);
            let yu = img.get(y.saturating_sub(1), x);
            out.set(y, x, (xr - xl) * half, (yd - yu) * half);
        }
    }
    Ok(out)
}

/// Backward warp: `out(p) = img(p - flow(p))`, border-clamped bilinear.
pub fn backward_warp<F: Scalar>(img: &Image<F>, flow: &VectorField<F>) -> Result<Image<F>> {
    if img.height() != flow.height() || img.width() != flow.width() {
        return Err(ConstructError::ShapeMismatch(format!(
            "image {}x{} vs flow {}x{}",
            img.height(),
            img.width(),
            flow.height(),
            flow.width()
        )));
    }
    let (h, w) = (img.height(), img.width());
    let mut out = Image::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = flow.get(y, x);
            let xs = F::from_f64_c(x as f64) - u;
            let ys = F::from_f64_c(y as f64) - v;
            out.set(y, x, bilinear_sample_clamped(img.data(), h, w, ys, xs));
        }
    }
    Ok(out)
}

/// Linearized log-intensity change of one warp step: `-<grad, flow>`.
pub fn linearized_change<F: Scalar>(
    grad: &VectorField<F>,
    flow: &VectorField<F>,
) -> Result<Image<F>> {
    if !grad.same_shape(flow) {
        return Err(ConstructError::ShapeMismatch(
            "gradient vs flow size".into(),
        ));
    }
    let (h, w) = (grad.height(), grad.width());
    let mut out = Image::zeros(h, w);
    let neg = -F::one();
    for y in 0..h {
        for x in 0..w {
            let (gx, gy) = grad.get(y, x);
            let (u, v) = flow.get(y, x);
            out.set(y, x, (gx * u + gy * v) * neg);
        }
    }
    Ok(out)
}

/// One-time construction of the prior methods: a single gradient-times-flow
/// quantization with no warping.
pub fn one_shot_construct<F: Scalar>(
    img: &Image<F>,
    flow: &VectorField<F>,
    contrast: F,
) -> Result<EventHistogram> {
    let grad = spatial_gradient(img)?;
    let delta = linearized_change(&grad, flow)?;
    Ok(quantize_change_map(&delta, contrast)?)
}

/// Per-iteration flow source: ground-truth flow schedules or a learned
/// decoder, optionally reacting to the current warped image.
pub trait FlowProvider<F: Scalar> {
    fn flow(&mut self, t: usize, current: &Image<F>) -> std::result::Result<VectorField<F>, String>;
}

/// Precomputed flow schedule indexed by iteration (0-based).
pub struct FlowSequence<F: Scalar>(pub Vec<VectorField<F>>);

impl<F: Scalar> FlowProvider<F> for FlowSequence<F> {
    fn flow(&mut self, t: usize, _current: &Image<F>) -> std::result::Result<VectorField<F>, String> {
        self.0
            .get(t)
            .cloned()
            .ok_or_else(|| format!("no flow for iteration {t}"))
    }
}

impl<F: Scalar, G> FlowProvider<F> for G
where
    G: FnMut(usize, &Image<F>) -> std::result::Result<VectorField<F>, String>,
{
    fn flow(&mut self, t: usize, current: &Image<F>) -> std::result::Result<VectorField<F>, String> {
        self(t, current)
    }
}

/// Full record of one iterative construction.
///
/// `warped[0]` is the input image; `warped[t]` the image after iteration `t`.
/// In [`QuantizeMode::PerIteration`] the final histogram always equals the
/// accumulated sub-frames; in [`QuantizeMode::Final`] it is the floor of the
/// summed change maps instead.
#[derive(Debug, Clone)]
pub struct ConstructionTrace<F: Scalar> {
    pub warped: Vec<Image<F>>,
    pub flows: Vec<VectorField<F>>,
    pub subframes: Vec<EventHistogram>,
    pub final_histogram: EventHistogram,
    pub contrast: F,
    pub quantize: QuantizeMode,
}

impl<F: Scalar> ConstructionTrace<F> {
    pub fn iterations(&self) -> usize {
        self.flows.len()
    }
}

/// Decomposes the inter-frame interval into `t_iters` warp steps,
/// constructing and accumulating a sub-event frame per step.
pub fn iterative_construct<F: Scalar>(
    img0: &Image<F>,
    provider: &mut dyn FlowProvider<F>,
    t_iters: usize,
    opts: &ConstructOptions<F>,
) -> Result<ConstructionTrace<F>> {
    if t_iters == 0 {
        return Err(ConstructError::NoIterations);
    }
    let cap = opts.cap_for(img0.height());
    let mut warped = Vec::with_capacity(t_iters + 1);
    let mut flows = Vec::with_capacity(t_iters);
    let mut subframes = Vec::with_capacity(t_iters);
    let mut change_sum = Image::zeros(img0.height(), img0.width());
    warped.push(img0.clone());
    for t in 0..t_iters {
        let current = warped.last().unwrap();
        let mut flow = provider
            .flow(t, current)
            .map_err(|message| ConstructError::FlowProvider { t, message })?;
        if flow.height() != current.height() || flow.width() != current.width() {
            return Err(ConstructError::ShapeMismatch(format!(
                "flow at iteration {t}"
            )));
        }
        flow.clamp_magnitude(cap);
        let grad = spatial_gradient(current)?;
        let delta = linearized_change(&grad, &flow)?;
        subframes.push(quantize_change_map(&delta, opts.contrast)?);
        if opts.quantize == QuantizeMode::Final {
            for (s, &d) in change_sum.data_mut().iter_mut().zip(delta.data()) {
                *s += d;
            }
        }
        let next = backward_warp(current, &flow)?;
        warped.push(next);
        flows.push(flow);
    }
    let final_histogram = match opts.quantize {
        QuantizeMode::PerIteration => accumulate_histograms(&subframes)?,
        QuantizeMode::Final => quantize_change_map(&change_sum, opts.contrast)?,
    };
    Ok(ConstructionTrace {
        warped,
        flows,
        subframes,
        final_histogram,
        contrast: opts.contrast,
        quantize: opts.quantize,
    })
}

/// Motion-reversed construction: consumes the forward trace in reverse
/// order, pairing each warped frame `r` with the negated flow `-v(r)`.
pub fn reverse_construct<F: Scalar>(trace: &ConstructionTrace<F>) -> Result<EventHistogram> {
    let t_iters = trace.iterations();
    if trace.warped.len() != t_iters + 1 || t_iters == 0 {
        return Err(ConstructError::IncompleteTrace(format!(
            "{} warped frames for {} flows",
            trace.warped.len(),
            t_iters
        )));
    }
    let mut subframes = Vec::with_capacity(t_iters);
    let mut change_sum = Image::zeros(trace.warped[0].height(), trace.warped[0].width());
    for r in (1..=t_iters).rev() {
        let grad = spatial_gradient(&trace.warped[r])?;
        let neg_flow = trace.flows[r - 1].negated();
        let delta = linearized_change(&grad, &neg_flow)?;
        if trace.quantize == QuantizeMode::Final {
            for (s, &d) in change_sum.data_mut().iter_mut().zip(delta.data()) {
                *s += d;
            }
        }
        subframes.push(quantize_change_map(&delta, trace.contrast)?);
    }
    Ok(match trace.quantize {
        QuantizeMode::PerIteration => accumulate_histograms(&subframes)?,
        QuantizeMode::Final => quantize_change_map(&change_sum, trace.contrast)?,
    })
}

/// Net displacement of a per-iteration flow schedule.
pub fn sum_flows<F: Scalar>(flows: &[VectorField<F>]) -> Result<VectorField<F>> {
    let first = flows
        .first()
        .ok_or_else(|| ConstructError::ShapeMismatch("no flows to sum".into()))?;
    let (h, w) = (first.height(), first.width());
    let mut data = vec![F::zero(); h * w * 2];
    for f in flows {
        if !f.same_shape(first) {
            return Err(ConstructError::ShapeMismatch("flow sizes differ".into()));
        }
        for (d, &v) in data.iter_mut().zip(f.data()) {
            *d += v;
        }
    }
    Ok(VectorField::from_vec(h, w, data).expect("consistent shape"))
}
