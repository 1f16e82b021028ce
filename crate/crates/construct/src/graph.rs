//! The same construction expressed as autodiff graph nodes, with
//! straight-through quantization so losses differentiate back into the flow
//! source. Forward values are bit-identical to the pure path.

use evhand_tensor::{Graph, NodeId, Result, Scalar, Tensor};

use crate::QuantizeMode;

/// Node handles of one in-graph construction.
pub struct ConstructionNodes {
    /// Warped log images, `[N,1,H,W]`; index 0 is the input.
    pub warped: Vec<NodeId>,
    /// Signed per-iteration count maps `[N,1,H,W]` (forward direction).
    pub subframes_signed: Vec<NodeId>,
    /// Final pseudo-event histogram, `[N,2,H,W]` (positive, negative).
    pub pseudo_events: NodeId,
    /// Motion-reversed histogram, `[N,2,H,W]`, when requested.
    pub reversed_events: Option<NodeId>,
}

/// Constant whole-image shift expressed as a flow field.
fn shift_flow<F: Scalar>(
    g: &mut Graph<F>,
    n: usize,
    h: usize,
    w: usize,
    u: f64,
    v: f64,
) -> NodeId {
    let hw = h * w;
    let mut data = vec![F::zero(); n * 2 * hw];
    for b in 0..n {
        for i in 0..hw {
            data[b * 2 * hw + i] = F::from_f64_c(u);
            data[b * 2 * hw + hw + i] = F::from_f64_c(v);
        }
    }
    g.constant(Tensor::new(&[n, 2, h, w], data).expect("shape"))
}

struct Shifts {
    right: NodeId,
    left: NodeId,
    down: NodeId,
    up: NodeId,
}

/// Central-difference gradient via border-clamped shifts, matching the pure
/// [`crate::spatial_gradient`] bit for bit.
fn gradient_nodes<F: Scalar>(
    g: &mut Graph<F>,
    img: NodeId,
    shifts: &Shifts,
) -> Result<(NodeId, NodeId)> {
    // sample(img, flow) reads img(p - flow): flow u=-1 fetches the right
    // neighbour, u=+1 the left one
    let r = g.bilinear_sample(img, shifts.right)?;
    let l = g.bilinear_sample(img, shifts.left)?;
    let d = g.bilinear_sample(img, shifts.down)?;
    let u = g.bilinear_sample(img, shifts.up)?;
    let dx = g.sub(r, l)?;
    let gx = g.mul_scalar(dx, 0.5)?;
    let dy = g.sub(d, u)?;
    let gy = g.mul_scalar(dy, 0.5)?;
    Ok((gx, gy))
}

/// `-(gx * u + gy * v)`: the linearized log-intensity change of one step.
fn change_nodes<F: Scalar>(
    g: &mut Graph<F>,
    gx: NodeId,
    gy: NodeId,
    u: NodeId,
    v: NodeId,
) -> Result<NodeId> {
    let tx = g.mul(gx, u)?;
    let ty = g.mul(gy, v)?;
    let s = g.add(tx, ty)?;
    g.mul_scalar(s, -1.0)
}

/// Per-polarity quantized counts of a signed change map.
///
/// The sign split happens before the quantizer: forward values equal
/// `relu(+-STQ(delta))`, but the straight-through gradient stays alive at
/// zero-count pixels (the relu kink sits at `delta = 0`, not at count 0).
fn polarity_counts<F: Scalar>(
    g: &mut Graph<F>,
    delta: NodeId,
    contrast: f64,
) -> Result<(NodeId, NodeId)> {
    let dpos = g.relu(delta);
    let negated = g.mul_scalar(delta, -1.0)?;
    let dneg = g.relu(negated);
    let pos = g.straight_through_quantize(dpos, contrast)?;
    let neg = g.straight_through_quantize(dneg, contrast)?;
    Ok((pos, neg))
}

fn add_chain<F: Scalar>(g: &mut Graph<F>, terms: &[NodeId]) -> Result<NodeId> {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = g.add(acc, t)?;
    }
    Ok(acc)
}

/// Appends the iterative construction (and optionally its motion reversal)
/// to `g`. `flows` holds one `(u, v)` node pair per iteration, each
/// `[N,1,H,W]`; the caller is responsible for capping flow magnitudes.
pub fn build_construction<F: Scalar>(
    g: &mut Graph<F>,
    log_img: NodeId,
    flows: &[(NodeId, NodeId)],
    contrast: f64,
    quantize: QuantizeMode,
    with_reverse: bool,
) -> Result<ConstructionNodes> {
    assert!(!flows.is_empty(), "at least one iteration");
    let shape = g.shape(log_img).to_vec();
    let (n, h, w) = (shape[0], shape[2], shape[3]);
    let shifts = Shifts {
        right: shift_flow(g, n, h, w, -1.0, 0.0),
        left: shift_flow(g, n, h, w, 1.0, 0.0),
        down: shift_flow(g, n, h, w, 0.0, -1.0),
        up: shift_flow(g, n, h, w, 0.0, 1.0),
    };

    let mut warped = vec![log_img];
    let mut subframes_signed = Vec::new();
    let mut pos_terms = Vec::new();
    let mut neg_terms = Vec::new();
    let mut raw_terms = Vec::new();
    for &(u, v) in flows {
        let current = *warped.last().unwrap();
        let (gx, gy) = gradient_nodes(g, current, &shifts)?;
        let delta = change_nodes(g, gx, gy, u, v)?;
        match quantize {
            QuantizeMode::PerIteration => {
                let (p, nn) = polarity_counts(g, delta, contrast)?;
                let signed = g.sub(p, nn)?;
                subframes_signed.push(signed);
                pos_terms.push(p);
                neg_terms.push(nn);
            }
            QuantizeMode::Final => {
                let signed = g.straight_through_quantize(delta, contrast)?;
                subframes_signed.push(signed);
                raw_terms.push(delta);
            }
        }
        let flow2 = g.concat(1, &[u, v])?;
        let next = g.bilinear_sample(current, flow2)?;
        warped.push(next);
    }
    let pseudo_events = match quantize {
        QuantizeMode::PerIteration => {
            let pos = add_chain(g, &pos_terms)?;
            let neg = add_chain(g, &neg_terms)?;
            g.concat(1, &[pos, neg])?
        }
        QuantizeMode::Final => {
            let total = add_chain(g, &raw_terms)?;
            let (pos, neg) = polarity_counts(g, total, contrast)?;
            g.concat(1, &[pos, neg])?
        }
    };

    let reversed_events = if with_reverse {
        let mut pos_terms = Vec::new();
        let mut neg_terms = Vec::new();
        let mut raw_terms = Vec::new();
        for r in (1..=flows.len()).rev() {
            let frame = warped[r];
            let (u, v) = flows[r - 1];
            let (gx, gy) = gradient_nodes(g, frame, &shifts)?;
            // reversed motion -v applied to frame r: the two sign flips
            // cancel, leaving +(gx*u + gy*v)
            let tx = g.mul(gx, u)?;
            let ty = g.mul(gy, v)?;
            let delta = g.add(tx, ty)?;
            match quantize {
                QuantizeMode::PerIteration => {
                    let (p, nn) = polarity_counts(g, delta, contrast)?;
                    pos_terms.push(p);
                    neg_terms.push(nn);
                }
                QuantizeMode::Final => raw_terms.push(delta),
            }
        }
        let node = match quantize {
            QuantizeMode::PerIteration => {
                let pos = add_chain(g, &pos_terms)?;
                let neg = add_chain(g, &neg_terms)?;
                g.concat(1, &[pos, neg])?
            }
            QuantizeMode::Final => {
                let total = add_chain(g, &raw_terms)?;
                let (pos, neg) = polarity_counts(g, total, contrast)?;
                g.concat(1, &[pos, neg])?
            }
        };
        Some(node)
    } else {
        None
    };

    Ok(ConstructionNodes {
        warped,
        subframes_signed,
        pseudo_events,
        reversed_events,
    })
}
