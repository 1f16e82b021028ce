//! Reverse-mode autodiff over an explicit operation graph.
//!
//! Nodes are stored in construction order, which is already topological
//! because an op may only reference earlier nodes. The backward pass walks
//! the same vector strictly in reverse.

use std::collections::BTreeMap;
use std::collections::HashMap;

use crate::error::{Result, TensorError};
use crate::kernels;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub type NodeId = usize;

const LEAKY_SLOPE: f64 = 0.2;

/// Operation kinds. The engine supports exactly this set.
#[derive(Debug, Clone)]
pub enum Op<F: Scalar> {
    Constant(Tensor<F>),
    /// Externally bound value; `trainable` marks optimizer-visible parameters.
    Leaf { trainable: bool },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Correlate2d {
        input: NodeId,
        kernel: NodeId,
        stride: usize,
        pad: usize,
    },
    TransposedCorrelate2d {
        input: NodeId,
        kernel: NodeId,
        stride: usize,
        pad: usize,
    },
    Relu(NodeId),
    LeakyRelu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Log1p(NodeId),
    Mean(NodeId),
    Sum(NodeId),
    Concat { axis: usize, inputs: Vec<NodeId> },
    Reshape(NodeId),
    NearestUpsample2x(NodeId),
    AvgPool { input: NodeId, k: usize },
    GlobalAvgPool(NodeId),
    L2Normalize(NodeId),
    CosineSimilarity(NodeId, NodeId),
    BilinearSample { image: NodeId, flow: NodeId },
    StraightThroughQuantize { input: NodeId, threshold: f64 },
    /// Gradient-checker internal: the quantizer frozen to its straight-through
    /// affine model around a base point — same forward value there, slope
    /// `1/threshold`. Never produced by the public builders.
    SurrogateAffine {
        input: NodeId,
        threshold: f64,
        offset: Tensor<F>,
    },
}

impl<F: Scalar> Op<F> {
    pub fn kind(&self) -> &'static str {
        match self {
            Op::Constant(_) => "constant",
            Op::Leaf { trainable: true } => "parameter",
            Op::Leaf { trainable: false } => "input",
            Op::Add(..) => "add",
            Op::Sub(..) => "subtract",
            Op::Mul(..) => "multiply",
            Op::MatMul(..) => "matmul",
            Op::Correlate2d { .. } => "correlate2d",
            Op::TransposedCorrelate2d { .. } => "transposed-correlate2d",
            Op::Relu(_) => "relu",
            Op::LeakyRelu(_) => "leaky-relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Log1p(_) => "log1p",
            Op::Mean(_) => "mean",
            Op::Sum(_) => "sum",
            Op::Concat { .. } => "concat",
            Op::Reshape(_) => "reshape",
            Op::NearestUpsample2x(_) => "nearest-upsample2x",
            Op::AvgPool { .. } => "average-pool",
            Op::GlobalAvgPool(_) => "global-average-pool",
            Op::L2Normalize(_) => "l2-normalize",
            Op::CosineSimilarity(..) => "cosine-similarity",
            Op::BilinearSample { .. } => "bilinear-sample",
            Op::StraightThroughQuantize { .. } => "straight-through-quantize",
            Op::SurrogateAffine { .. } => "surrogate-affine",
        }
    }

    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Constant(_) | Op::Leaf { .. } => vec![],
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::MatMul(a, b)
            | Op::CosineSimilarity(a, b) => vec![*a, *b],
            Op::Correlate2d { input, kernel, .. }
            | Op::TransposedCorrelate2d { input, kernel, .. } => vec![*input, *kernel],
            Op::BilinearSample { image, flow } => vec![*image, *flow],
            Op::Relu(a)
            | Op::LeakyRelu(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Log1p(a)
            | Op::Mean(a)
            | Op::Sum(a)
            | Op::Reshape(a)
            | Op::NearestUpsample2x(a)
            | Op::GlobalAvgPool(a)
            | Op::L2Normalize(a) => vec![*a],
            Op::AvgPool { input, .. }
            | Op::StraightThroughQuantize { input, .. }
            | Op::SurrogateAffine { input, .. } => {
                vec![*input]
            }
            Op::Concat { inputs, .. } => inputs.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Node<F: Scalar> {
    pub op: Op<F>,
    pub shape: Vec<usize>,
    pub name: Option<String>,
}

/// Operation graph. Construction validates shapes; nodes are topologically
/// ordered by construction.
#[derive(Debug, Clone, Default)]
pub struct Graph<F: Scalar> {
    nodes: Vec<Node<F>>,
    names: HashMap<String, NodeId>,
}

/// Externally supplied leaf values, keyed by leaf name.
#[derive(Debug, Clone, Default)]
pub struct Bindings<F: Scalar> {
    map: BTreeMap<String, Tensor<F>>,
}

impl<F: Scalar> Bindings<F> {
    pub fn new() -> Self {
        Self {
            map: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, name: &str, value: Tensor<F>) {
        self.map.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.map.get(name)
    }
}

/// Per-node forward values of one evaluation.
#[derive(Debug)]
pub struct Evaluation<F: Scalar> {
    values: Vec<Tensor<F>>,
}

impl<F: Scalar> Evaluation<F> {
    pub fn value(&self, id: NodeId) -> &Tensor<F> {
        &self.values[id]
    }
}

/// Per-node gradients filled by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients<F: Scalar> {
    grads: Vec<Option<Vec<F>>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn get(&self, id: NodeId) -> Option<&[F]> {
        self.grads.get(id).and_then(|g| g.as_deref())
    }
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            names: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node<F> {
        &self.nodes[id]
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id].shape
    }

    pub fn by_name(&self, name: &str) -> Result<NodeId> {
        self.names
            .get(name)
            .copied()
            .ok_or_else(|| TensorError::UnknownNode(name.to_string()))
    }

    /// Names of all trainable leaves, in insertion order.
    pub fn parameter_names(&self) -> Vec<String> {
        self.nodes
            .iter()
            .filter(|n| matches!(n.op, Op::Leaf { trainable: true }))
            .map(|n| n.name.clone().expect("leaf nodes always carry a name"))
            .collect()
    }

    pub fn label(&self, id: NodeId) -> String {
        match &self.nodes[id].name {
            Some(n) => n.clone(),
            None => format!("#{id}:{}", self.nodes[id].op.kind()),
        }
    }

    fn push(&mut self, op: Op<F>, shape: Vec<usize>) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node {
            op,
            shape,
            name: None,
        });
        id
    }

    fn push_named(&mut self, op: Op<F>, shape: Vec<usize>, name: &str) -> Result<NodeId> {
        if self.names.contains_key(name) {
            return Err(TensorError::DuplicateName(name.to_string()));
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            op,
            shape,
            name: Some(name.to_string()),
        });
        self.names.insert(name.to_string(), id);
        Ok(id)
    }

    /// Attaches a name to an existing node so callers can look it up later.
    pub fn name_node(&mut self, id: NodeId, name: &str) -> Result<()> {
        if self.names.contains_key(name) {
            return Err(TensorError::DuplicateName(name.to_string()));
        }
        self.nodes[id].name = Some(name.to_string());
        self.names.insert(name.to_string(), id);
        Ok(())
    }

    fn mismatch(&self, context: &str, detail: String) -> TensorError {
        TensorError::ShapeMismatch {
            context: context.to_string(),
            detail,
        }
    }

    // ---- builders ------------------------------------------------------

    pub fn constant(&mut self, value: Tensor<F>) -> NodeId {
        let shape = value.shape().to_vec();
        self.push(Op::Constant(value), shape)
    }

    pub fn constant_scalar(&mut self, value: f64) -> NodeId {
        self.constant(Tensor::scalar(F::from_f64_c(value)))
    }

    pub fn input(&mut self, name: &str, shape: &[usize]) -> Result<NodeId> {
        self.push_named(Op::Leaf { trainable: false }, shape.to_vec(), name)
    }

    pub fn parameter(&mut self, name: &str, shape: &[usize]) -> Result<NodeId> {
        self.push_named(Op::Leaf { trainable: true }, shape.to_vec(), name)
    }

    fn elementwise_pair(&self, ctx: &str, a: NodeId, b: NodeId) -> Result<Vec<usize>> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch(
                ctx,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(self.shape(a).to_vec())
    }

    /// Elementwise sum. The right operand may also be a `[C]` bias against
    /// `[N, C]` or `[N, C, H, W]`.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let ok = sa == sb || broadcast_stride(&sa, &sb).is_some();
        if !ok {
            return Err(self.mismatch("add", format!("{sa:?} vs {sb:?}")));
        }
        Ok(self.push(Op::Add(a, b), sa))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.elementwise_pair("subtract", a, b)?;
        Ok(self.push(Op::Sub(a, b), shape))
    }

    /// Elementwise product; either side may be a one-element scalar.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let shape = if sa == sb {
            sa
        } else if numel(&sb) == 1 {
            sa
        } else if numel(&sa) == 1 {
            sb
        } else {
            return Err(self.mismatch("multiply", format!("{sa:?} vs {sb:?}")));
        };
        Ok(self.push(Op::Mul(a, b), shape))
    }

    pub fn mul_scalar(&mut self, a: NodeId, v: f64) -> Result<NodeId> {
        let c = self.constant_scalar(v);
        self.mul(a, c)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(self.mismatch("matmul", format!("{sa:?} vs {sb:?}")));
        }
        Ok(self.push(Op::MatMul(a, b), vec![sa[0], sb[1]]))
    }

    pub fn correlate2d(
        &mut self,
        input: NodeId,
        kernel: NodeId,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId> {
        let si = self.shape(input).to_vec();
        let sk = self.shape(kernel).to_vec();
        if si.len() != 4 || sk.len() != 4 || si[1] != sk[1] || stride == 0 {
            return Err(self.mismatch("correlate2d", format!("input {si:?} kernel {sk:?}")));
        }
        let (h, w, kh, kw) = (si[2], si[3], sk[2], sk[3]);
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(self.mismatch("correlate2d", format!("kernel {sk:?} larger than {si:?}")));
        }
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (w + 2 * pad - kw) / stride + 1;
        Ok(self.push(
            Op::Correlate2d {
                input,
                kernel,
                stride,
                pad,
            },
            vec![si[0], sk[0], ho, wo],
        ))
    }

    pub fn transposed_correlate2d(
        &mut self,
        input: NodeId,
        kernel: NodeId,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId> {
        let si = self.shape(input).to_vec();
        let sk = self.shape(kernel).to_vec();
        if si.len() != 4 || sk.len() != 4 || si[1] != sk[0] || stride == 0 {
            return Err(self.mismatch(
                "transposed-correlate2d",
                format!("input {si:?} kernel {sk:?}"),
            ));
        }
        let (h, w, kh, kw) = (si[2], si[3], sk[2], sk[3]);
        let ho = (h - 1) * stride + kh;
        let wo = (w - 1) * stride + kw;
        if ho < 2 * pad + 1 || wo < 2 * pad + 1 {
            return Err(self.mismatch("transposed-correlate2d", "padding too large".into()));
        }
        Ok(self.push(
            Op::TransposedCorrelate2d {
                input,
                kernel,
                stride,
                pad,
            },
            vec![si[0], sk[1], ho - 2 * pad, wo - 2 * pad],
        ))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let shape = self.shape(a).to_vec();
        self.push(Op::Relu(a), shape)
    }

    pub fn leaky_relu(&mut self, a: NodeId) -> NodeId {
        let shape = self.shape(a).to_vec();
        self.push(Op::LeakyRelu(a), shape)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let shape = self.shape(a).to_vec();
        self.push(Op::Sigmoid(a), shape)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let shape = self.shape(a).to_vec();
        self.push(Op::Tanh(a), shape)
    }

    pub fn log1p(&mut self, a: NodeId) -> NodeId {
        let shape = self.shape(a).to_vec();
        self.push(Op::Log1p(a), shape)
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Mean(a), vec![1])
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sum(a), vec![1])
    }

    pub fn concat(&mut self, axis: usize, inputs: &[NodeId]) -> Result<NodeId> {
        if inputs.is_empty() {
            return Err(self.mismatch("concat", "no inputs".into()));
        }
        let first = self.shape(inputs[0]).to_vec();
        if axis >= first.len() {
            return Err(self.mismatch("concat", format!("axis {axis} out of range")));
        }
        let mut axis_total = 0;
        for &id in inputs {
            let s = self.shape(id);
            if s.len() != first.len()
                || s.iter()
                    .zip(&first)
                    .enumerate()
                    .any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(self.mismatch("concat", format!("{s:?} vs {first:?}")));
            }
            axis_total += s[axis];
        }
        let mut shape = first;
        shape[axis] = axis_total;
        Ok(self.push(
            Op::Concat {
                axis,
                inputs: inputs.to_vec(),
            },
            shape,
        ))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        if numel(self.shape(a)) != numel(shape) {
            return Err(self.mismatch(
                "reshape",
                format!("{:?} -> {shape:?}", self.shape(a)),
            ));
        }
        Ok(self.push(Op::Reshape(a), shape.to_vec()))
    }

    pub fn nearest_upsample2x(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.shape(a).to_vec();
        if s.len() != 4 {
            return Err(self.mismatch("nearest-upsample2x", format!("{s:?}")));
        }
        Ok(self.push(
            Op::NearestUpsample2x(a),
            vec![s[0], s[1], s[2] * 2, s[3] * 2],
        ))
    }

    pub fn avg_pool(&mut self, a: NodeId, k: usize) -> Result<NodeId> {
        let s = self.shape(a).to_vec();
        if s.len() != 4 || k == 0 || s[2] % k != 0 || s[3] % k != 0 {
            return Err(self.mismatch("average-pool", format!("{s:?} by {k}")));
        }
        Ok(self.push(
            Op::AvgPool { input: a, k },
            vec![s[0], s[1], s[2] / k, s[3] / k],
        ))
    }

    pub fn global_avg_pool(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.shape(a).to_vec();
        if s.len() != 4 {
            return Err(self.mismatch("global-average-pool", format!("{s:?}")));
        }
        Ok(self.push(Op::GlobalAvgPool(a), vec![s[0], s[1]]))
    }

    /// Normalizes along the last axis; rows must have nonzero norm.
    pub fn l2_normalize(&mut self, a: NodeId) -> NodeId {
        let shape = self.shape(a).to_vec();
        self.push(Op::L2Normalize(a), shape)
    }

    /// Cosine similarity along the last axis: `[N, D] x [N, D] -> [N]`,
    /// `[D] x [D] -> [1]`.
    pub fn cosine_similarity(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa != sb || sa.is_empty() {
            return Err(self.mismatch("cosine-similarity", format!("{sa:?} vs {sb:?}")));
        }
        let out = if sa.len() == 1 {
            vec![1]
        } else {
            sa[..sa.len() - 1].to_vec()
        };
        Ok(self.push(Op::CosineSimilarity(a, b), out))
    }

    /// Backward warp: `out[n,c,y,x] = image[n,c](y - flow_v, x - flow_u)`
    /// with border-clamped bilinear lookup. `flow` is `[N, 2, H, W]`
    /// (channel 0 horizontal, channel 1 vertical).
    pub fn bilinear_sample(&mut self, image: NodeId, flow: NodeId) -> Result<NodeId> {
        let si = self.shape(image).to_vec();
        let sf = self.shape(flow).to_vec();
        if si.len() != 4 || sf.len() != 4 || sf[1] != 2 || si[0] != sf[0] || si[2..] != sf[2..] {
            return Err(self.mismatch("bilinear-sample", format!("image {si:?} flow {sf:?}")));
        }
        Ok(self.push(Op::BilinearSample { image, flow }, si))
    }

    /// Sign-symmetric quantizer `sign(v) * floor(|v| / threshold)` with a
    /// straight-through backward scaled by `1 / threshold`.
    pub fn straight_through_quantize(&mut self, input: NodeId, threshold: f64) -> Result<NodeId> {
        if threshold <= 0.0 {
            return Err(TensorError::InvalidOp(
                "straight-through-quantize: threshold must be positive".into(),
            ));
        }
        let shape = self.shape(input).to_vec();
        Ok(self.push(Op::StraightThroughQuantize { input, threshold }, shape))
    }

    /// True if any node is a straight-through quantizer (the gradient checker
    /// swaps those for their surrogate before differencing).
    pub fn has_quantizer(&self) -> bool {
        self.nodes
            .iter()
            .any(|n| matches!(n.op, Op::StraightThroughQuantize { .. }))
    }

    /// Copy of this graph with every straight-through quantizer frozen to its
    /// affine straight-through model around the given evaluation: at the base
    /// point the forward value is unchanged, and the slope is `1/threshold`.
    /// Analytic gradients of the copy equal those of the original, so finite
    /// differences on the copy check the whole surrounding chain.
    pub fn quantizer_surrogate(&self, eval: &Evaluation<F>) -> Graph<F> {
        let mut g = self.clone();
        for (id, node) in g.nodes.iter_mut().enumerate() {
            let (input, threshold) = match &node.op {
                Op::StraightThroughQuantize { input, threshold } => (*input, *threshold),
                _ => continue,
            };
            let inv = F::from_f64_c(1.0 / threshold);
            let x = eval.values[input].data();
            let q = eval.values[id].data();
            let offset: Vec<F> = q.iter().zip(x).map(|(&qv, &xv)| qv - xv * inv).collect();
            let offset = Tensor::new(&node.shape, offset).expect("same shape");
            node.op = Op::SurrogateAffine {
                input,
                threshold,
                offset,
            };
        }
        g
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// For `Add` broadcasting: returns the length of the contiguous inner block
/// over which each bias element repeats, if `b` is a `[C]` bias compatible
/// with `a`.
fn broadcast_stride(a: &[usize], b: &[usize]) -> Option<usize> {
    if b.len() != 1 {
        return None;
    }
    let c = b[0];
    match a.len() {
        2 if a[1] == c => Some(1),
        4 if a[1] == c => Some(a[2] * a[3]),
        _ => None,
    }
}

// ---- execution ----------------------------------------------------------

impl<F: Scalar> Graph<F> {
    /// Evaluates every node in topological order. Each value is checked for
    /// finiteness; the first NaN/Inf aborts with the offending node and index.
    pub fn forward_eval(&self, bindings: &Bindings<F>) -> Result<Evaluation<F>> {
        let mut values: Vec<Tensor<F>> = Vec::with_capacity(self.nodes.len());
        for (id, node) in self.nodes.iter().enumerate() {
            let value = self.eval_node(id, node, &values, bindings)?;
            debug_assert_eq!(value.shape(), node.shape.as_slice());
            if let Some(index) = value.first_nonfinite() {
                return Err(TensorError::NonFinite {
                    node: self.label(id),
                    index,
                });
            }
            values.push(value);
        }
        Ok(Evaluation { values })
    }

    fn eval_node(
        &self,
        id: NodeId,
        node: &Node<F>,
        values: &[Tensor<F>],
        bindings: &Bindings<F>,
    ) -> Result<Tensor<F>> {
        let v = |i: NodeId| -> &Tensor<F> { &values[i] };
        Ok(match &node.op {
            Op::Constant(t) => t.clone(),
            Op::Leaf { .. } => {
                let name = node.name.as_ref().expect("leaves are named");
                let t = bindings
                    .get(name)
                    .ok_or_else(|| TensorError::MissingBinding(name.clone()))?;
                if t.shape() != node.shape.as_slice() {
                    return Err(self.mismatch(
                        "binding",
                        format!(
                            "'{name}' expects {:?}, got {:?}",
                            node.shape,
                            t.shape()
                        ),
                    ));
                }
                t.clone()
            }
            Op::Add(a, b) => {
                let (ta, tb) = (v(*a), v(*b));
                if ta.shape() == tb.shape() {
                    let data = ta
                        .data()
                        .iter()
                        .zip(tb.data())
                        .map(|(&x, &y)| x + y)
                        .collect();
                    Tensor::new(ta.shape(), data)?
                } else {
                    let block = broadcast_stride(ta.shape(), tb.shape())
                        .expect("validated at build time");
                    let c = tb.numel();
                    let data = ta
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(i, &x)| x + tb.data()[(i / block) % c])
                        .collect();
                    Tensor::new(ta.shape(), data)?
                }
            }
            Op::Sub(a, b) => {
                let (ta, tb) = (v(*a), v(*b));
                let data = ta
                    .data()
                    .iter()
                    .zip(tb.data())
                    .map(|(&x, &y)| x - y)
                    .collect();
                Tensor::new(ta.shape(), data)?
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (v(*a), v(*b));
                if ta.shape() == tb.shape() {
                    let data = ta
                        .data()
                        .iter()
                        .zip(tb.data())
                        .map(|(&x, &y)| x * y)
                        .collect();
                    Tensor::new(ta.shape(), data)?
                } else if tb.numel() == 1 {
                    let s = tb.data()[0];
                    ta.map(|x| x * s)
                } else {
                    let s = ta.data()[0];
                    tb.map(|x| s * x)
                }
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (v(*a), v(*b));
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[1];
                let mut out = vec![F::zero(); m * n];
                kernels::matmul(ta.data(), tb.data(), &mut out, m, k, n);
                Tensor::new(&[m, n], out)?
            }
            Op::Correlate2d {
                input,
                kernel,
                stride,
                pad,
            } => {
                let (ti, tk) = (v(*input), v(*kernel));
                let si = ti.shape();
                let sk = tk.shape();
                let mut out = vec![F::zero(); numel(&node.shape)];
                kernels::correlate2d(
                    ti.data(),
                    tk.data(),
                    &mut out,
                    si[0],
                    si[1],
                    si[2],
                    si[3],
                    sk[0],
                    sk[2],
                    sk[3],
                    *stride,
                    *pad,
                );
                Tensor::new(&node.shape, out)?
            }
            Op::TransposedCorrelate2d {
                input,
                kernel,
                stride,
                pad,
            } => {
                let (ti, tk) = (v(*input), v(*kernel));
                let si = ti.shape();
                let sk = tk.shape();
                let mut out = vec![F::zero(); numel(&node.shape)];
                kernels::transposed_correlate2d(
                    ti.data(),
                    tk.data(),
                    &mut out,
                    si[0],
                    si[1],
                    si[2],
                    si[3],
                    sk[1],
                    sk[2],
                    sk[3],
                    *stride,
                    *pad,
                );
                Tensor::new(&node.shape, out)?
            }
            Op::Relu(a) => v(*a).map(|x| if x > F::zero() { x } else { F::zero() }),
            Op::LeakyRelu(a) => {
                let slope = F::from_f64_c(LEAKY_SLOPE);
                v(*a).map(|x| if x > F::zero() { x } else { slope * x })
            }
            Op::Sigmoid(a) => v(*a).map(|x| F::one() / (F::one() + (-x).exp())),
            Op::Tanh(a) => v(*a).map(|x| x.tanh()),
            Op::Log1p(a) => v(*a).map(|x| x.ln_1p()),
            Op::Mean(a) => {
                let t = v(*a);
                let total: F = t.data().iter().copied().sum();
                Tensor::scalar(total / F::from_f64_c(t.numel() as f64))
            }
            Op::Sum(a) => {
                let total: F = v(*a).data().iter().copied().sum();
                Tensor::scalar(total)
            }
            Op::Concat { axis, inputs } => {
                let outer: usize = node.shape[..*axis].iter().product();
                let inner: usize = node.shape[*axis + 1..].iter().product();
                let mut out = Vec::with_capacity(numel(&node.shape));
                for o in 0..outer {
                    for &inp in inputs {
                        let t = v(inp);
                        let step = t.shape()[*axis] * inner;
                        out.extend_from_slice(&t.data()[o * step..(o + 1) * step]);
                    }
                }
                Tensor::new(&node.shape, out)?
            }
            Op::Reshape(a) => Tensor::new(&node.shape, v(*a).data().to_vec())?,
            Op::NearestUpsample2x(a) => {
                let t = v(*a);
                let s = t.shape();
                let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
                let mut out = vec![F::zero(); n * c * h * w * 4];
                let (ho, wo) = (h * 2, w * 2);
                for p in 0..n * c {
                    let ib = p * h * w;
                    let ob = p * ho * wo;
                    for y in 0..h {
                        for x in 0..w {
                            let val = t.data()[ib + y * w + x];
                            let o = ob + 2 * y * wo + 2 * x;
                            out[o] = val;
                            out[o + 1] = val;
                            out[o + wo] = val;
                            out[o + wo + 1] = val;
                        }
                    }
                }
                Tensor::new(&node.shape, out)?
            }
            Op::AvgPool { input, k } => {
                let t = v(*input);
                let s = t.shape();
                let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
                let (ho, wo) = (h / k, w / k);
                let norm = F::from_f64_c((k * k) as f64);
                let mut out = vec![F::zero(); n * c * ho * wo];
                for p in 0..n * c {
                    let ib = p * h * w;
                    let ob = p * ho * wo;
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let mut acc = F::zero();
                            for dy in 0..*k {
                                for dx in 0..*k {
                                    acc += t.data()[ib + (oy * k + dy) * w + ox * k + dx];
                                }
                            }
                            out[ob + oy * wo + ox] = acc / norm;
                        }
                    }
                }
                Tensor::new(&node.shape, out)?
            }
            Op::GlobalAvgPool(a) => {
                let t = v(*a);
                let s = t.shape();
                let (n, c, hw) = (s[0], s[1], s[2] * s[3]);
                let norm = F::from_f64_c(hw as f64);
                let mut out = vec![F::zero(); n * c];
                for p in 0..n * c {
                    let acc: F = t.data()[p * hw..(p + 1) * hw].iter().copied().sum();
                    out[p] = acc / norm;
                }
                Tensor::new(&node.shape, out)?
            }
            Op::L2Normalize(a) => {
                let t = v(*a);
                let d = *t.shape().last().unwrap();
                let rows = t.numel() / d;
                let mut out = vec![F::zero(); t.numel()];
                for r in 0..rows {
                    let row = &t.data()[r * d..(r + 1) * d];
                    let norm = row.iter().map(|&x| x * x).sum::<F>().sqrt();
                    if norm == F::zero() {
                        return Err(TensorError::ZeroNorm(self.label(id)));
                    }
                    for (o, &x) in out[r * d..(r + 1) * d].iter_mut().zip(row) {
                        *o = x / norm;
                    }
                }
                Tensor::new(&node.shape, out)?
            }
            Op::CosineSimilarity(a, b) => {
                let (ta, tb) = (v(*a), v(*b));
                let d = *ta.shape().last().unwrap();
                let rows = ta.numel() / d;
                let mut out = vec![F::zero(); rows];
                for r in 0..rows {
                    let ra = &ta.data()[r * d..(r + 1) * d];
                    let rb = &tb.data()[r * d..(r + 1) * d];
                    let dot: F = ra.iter().zip(rb).map(|(&x, &y)| x * y).sum();
                    let na = ra.iter().map(|&x| x * x).sum::<F>().sqrt();
                    let nb = rb.iter().map(|&x| x * x).sum::<F>().sqrt();
                    if na == F::zero() || nb == F::zero() {
                        return Err(TensorError::ZeroNorm(self.label(id)));
                    }
                    out[r] = dot / (na * nb);
                }
                Tensor::new(&node.shape, out)?
            }
            Op::BilinearSample { image, flow } => {
                let (ti, tf) = (v(*image), v(*flow));
                let s = ti.shape();
                let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
                let mut out = vec![F::zero(); ti.numel()];
                for b in 0..n {
                    let fb = b * 2 * h * w;
                    for ch in 0..c {
                        let ib = (b * c + ch) * h * w;
                        let plane = &ti.data()[ib..ib + h * w];
                        for y in 0..h {
                            for x in 0..w {
                                let u = tf.data()[fb + y * w + x];
                                let vv = tf.data()[fb + h * w + y * w + x];
                                let xs = F::from_f64_c(x as f64) - u;
                                let ys = F::from_f64_c(y as f64) - vv;
                                out[ib + y * w + x] =
                                    kernels::bilinear_sample_clamped(plane, h, w, ys, xs);
                            }
                        }
                    }
                }
                Tensor::new(&node.shape, out)?
            }
            Op::StraightThroughQuantize { input, threshold } => {
                let c = F::from_f64_c(*threshold);
                v(*input).map(|x| {
                    if x > F::zero() {
                        (x / c).floor()
                    } else if x < F::zero() {
                        -((-x / c).floor())
                    } else {
                        F::zero()
                    }
                })
            }
            Op::SurrogateAffine {
                input,
                threshold,
                offset,
            } => {
                let inv = F::from_f64_c(1.0 / threshold);
                let data = v(*input)
                    .data()
                    .iter()
                    .zip(offset.data())
                    .map(|(&x, &o)| o + x * inv)
                    .collect();
                Tensor::new(&node.shape, data)?
            }
        })
    }

    /// Reverse-mode gradients of a scalar loss node. Gradients propagate only
    /// along paths that reach a trainable leaf; other branches are skipped.
    pub fn backward(&self, eval: &Evaluation<F>, loss: NodeId) -> Result<Gradients<F>> {
        if eval.values[loss].numel() != 1 {
            return Err(TensorError::LossNotScalar(self.label(loss)));
        }
        let n = self.nodes.len();
        let mut needs = vec![false; n];
        for (id, node) in self.nodes.iter().enumerate() {
            needs[id] = match node.op {
                Op::Leaf { trainable } => trainable,
                Op::Constant(_) => false,
                _ => node.op.inputs().iter().any(|&i| needs[i]),
            };
        }
        let mut grads: Vec<Option<Vec<F>>> = vec![None; n];
        if !needs[loss] {
            return Ok(Gradients { grads });
        }
        grads[loss] = Some(vec![F::one()]);
        for id in (0..=loss).rev() {
            let Some(g) = grads[id].take() else {
                continue;
            };
            self.backprop_node(id, &g, eval, &needs, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(
        &self,
        id: NodeId,
        g: &[F],
        eval: &Evaluation<F>,
        needs: &[bool],
        grads: &mut [Option<Vec<F>>],
    ) {
        let val = |i: NodeId| -> &Tensor<F> { &eval.values[i] };
        // Lazily allocates the input gradient buffer and hands it out.
        macro_rules! buf {
            ($i:expr) => {{
                let i = $i;
                grads[i].get_or_insert_with(|| vec![F::zero(); eval.values[i].numel()])
            }};
        }
        match &self.nodes[id].op {
            Op::Constant(_) | Op::Leaf { .. } => {}
            Op::Add(a, b) => {
                if needs[*a] {
                    for (d, &x) in buf!(*a).iter_mut().zip(g) {
                        *d += x;
                    }
                }
                if needs[*b] {
                    let (sa, sb) = (val(*a).shape().to_vec(), val(*b).shape().to_vec());
                    let gb = buf!(*b);
                    if sa == sb {
                        for (d, &x) in gb.iter_mut().zip(g) {
                            *d += x;
                        }
                    } else {
                        let block = broadcast_stride(&sa, &sb).expect("validated");
                        let c = gb.len();
                        for (i, &x) in g.iter().enumerate() {
                            gb[(i / block) % c] += x;
                        }
                    }
                }
            }
            Op::Sub(a, b) => {
                if needs[*a] {
                    for (d, &x) in buf!(*a).iter_mut().zip(g) {
                        *d += x;
                    }
                }
                if needs[*b] {
                    for (d, &x) in buf!(*b).iter_mut().zip(g) {
                        *d -= x;
                    }
                }
            }
            Op::Mul(a, b) => {
                let same = val(*a).shape() == val(*b).shape();
                if same {
                    if needs[*a] {
                        let tb = val(*b).data().to_vec();
                        for ((d, &x), &y) in buf!(*a).iter_mut().zip(g).zip(&tb) {
                            *d += x * y;
                        }
                    }
                    if needs[*b] {
                        let ta = val(*a).data().to_vec();
                        for ((d, &x), &y) in buf!(*b).iter_mut().zip(g).zip(&ta) {
                            *d += x * y;
                        }
                    }
                } else if val(*b).numel() == 1 {
                    let s = val(*b).data()[0];
                    if needs[*a] {
                        for (d, &x) in buf!(*a).iter_mut().zip(g) {
                            *d += x * s;
                        }
                    }
                    if needs[*b] {
                        let acc: F = g
                            .iter()
                            .zip(val(*a).data())
                            .map(|(&x, &y)| x * y)
                            .sum();
                        buf!(*b)[0] += acc;
                    }
                } else {
                    let s = val(*a).data()[0];
                    if needs[*b] {
                        for (d, &x) in buf!(*b).iter_mut().zip(g) {
                            *d += x * s;
                        }
                    }
                    if needs[*a] {
                        let acc: F = g
                            .iter()
                            .zip(val(*b).data())
                            .map(|(&x, &y)| x * y)
                            .sum();
                        buf!(*a)[0] += acc;
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (m, k) = (val(*a).shape()[0], val(*a).shape()[1]);
                let nn = val(*b).shape()[1];
                if needs[*a] {
                    let tb = val(*b).data().to_vec();
                    let ga = buf!(*a);
                    for i in 0..m {
                        for p in 0..k {
                            let mut acc = F::zero();
                            for j in 0..nn {
                                acc += g[i * nn + j] * tb[p * nn + j];
                            }
                            ga[i * k + p] += acc;
                        }
                    }
                }
                if needs[*b] {
                    let ta = val(*a).data().to_vec();
                    let gb = buf!(*b);
                    for i in 0..m {
                        for p in 0..k {
                            let aip = ta[i * k + p];
                            for j in 0..nn {
                                gb[p * nn + j] += aip * g[i * nn + j];
                            }
                        }
                    }
                }
            }
            Op::Correlate2d {
                input,
                kernel,
                stride,
                pad,
            } => {
                let si = val(*input).shape().to_vec();
                let sk = val(*kernel).shape().to_vec();
                if needs[*input] {
                    let tk = val(*kernel).data().to_vec();
                    kernels::correlate2d_grad_input(
                        g,
                        &tk,
                        buf!(*input),
                        si[0],
                        si[1],
                        si[2],
                        si[3],
                        sk[0],
                        sk[2],
                        sk[3],
                        *stride,
                        *pad,
                    );
                }
                if needs[*kernel] {
                    let ti = val(*input).data().to_vec();
                    kernels::correlate2d_grad_kernel(
                        g,
                        &ti,
                        buf!(*kernel),
                        si[0],
                        si[1],
                        si[2],
                        si[3],
                        sk[0],
                        sk[2],
                        sk[3],
                        *stride,
                        *pad,
                    );
                }
            }
            Op::TransposedCorrelate2d {
                input,
                kernel,
                stride,
                pad,
            } => {
                let si = val(*input).shape().to_vec();
                let sk = val(*kernel).shape().to_vec();
                let (n, ci, h, w) = (si[0], si[1], si[2], si[3]);
                let (co, kh, kw) = (sk[1], sk[2], sk[3]);
                let ho = (h - 1) * stride + kh - 2 * pad;
                let wo = (w - 1) * stride + kw - 2 * pad;
                if needs[*input] {
                    let tk = val(*kernel).data().to_vec();
                    let gi = buf!(*input);
                    for b in 0..n {
                        for ic in 0..ci {
                            let in_base = (b * ci + ic) * h * w;
                            for oc in 0..co {
                                let out_base = (b * co + oc) * ho * wo;
                                let k_base = (ic * co + oc) * kh * kw;
                                for iy in 0..h {
                                    for ix in 0..w {
                                        let mut acc = F::zero();
                                        for ky in 0..kh {
                                            let oy = iy * stride + ky;
                                            if oy < *pad || oy - pad >= ho {
                                                continue;
                                            }
                                            for kx in 0..kw {
                                                let ox = ix * stride + kx;
                                                if ox < *pad || ox - pad >= wo {
                                                    continue;
                                                }
                                                acc += g[out_base + (oy - pad) * wo + ox - pad]
                                                    * tk[k_base + ky * kw + kx];
                                            }
                                        }
                                        gi[in_base + iy * w + ix] += acc;
                                    }
                                }
                            }
                        }
                    }
                }
                if needs[*kernel] {
                    let ti = val(*input).data().to_vec();
                    let gk = buf!(*kernel);
                    for b in 0..n {
                        for ic in 0..ci {
                            let in_base = (b * ci + ic) * h * w;
                            for oc in 0..co {
                                let out_base = (b * co + oc) * ho * wo;
                                let k_base = (ic * co + oc) * kh * kw;
                                for iy in 0..h {
                                    for ix in 0..w {
                                        let xv = ti[in_base + iy * w + ix];
                                        for ky in 0..kh {
                                            let oy = iy * stride + ky;
                                            if oy < *pad || oy - pad >= ho {
                                                continue;
                                            }
                                            for kx in 0..kw {
                                                let ox = ix * stride + kx;
                                                if ox < *pad || ox - pad >= wo {
                                                    continue;
                                                }
                                                gk[k_base + ky * kw + kx] += xv
                                                    * g[out_base + (oy - pad) * wo + ox - pad];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Op::Relu(a) => {
                if needs[*a] {
                    let x = val(*a).data().to_vec();
                    for ((d, &gv), &xv) in buf!(*a).iter_mut().zip(g).zip(&x) {
                        if xv > F::zero() {
                            *d += gv;
                        }
                    }
                }
            }
            Op::LeakyRelu(a) => {
                if needs[*a] {
                    let slope = F::from_f64_c(LEAKY_SLOPE);
                    let x = val(*a).data().to_vec();
                    for ((d, &gv), &xv) in buf!(*a).iter_mut().zip(g).zip(&x) {
                        *d += if xv > F::zero() { gv } else { gv * slope };
                    }
                }
            }
            Op::Sigmoid(a) => {
                if needs[*a] {
                    let y = eval.values[id].data().to_vec();
                    for ((d, &gv), &yv) in buf!(*a).iter_mut().zip(g).zip(&y) {
                        *d += gv * yv * (F::one() - yv);
                    }
                }
            }
            Op::Tanh(a) => {
                if needs[*a] {
                    let y = eval.values[id].data().to_vec();
                    for ((d, &gv), &yv) in buf!(*a).iter_mut().zip(g).zip(&y) {
                        *d += gv * (F::one() - yv * yv);
                    }
                }
            }
            Op::Log1p(a) => {
                if needs[*a] {
                    let x = val(*a).data().to_vec();
                    for ((d, &gv), &xv) in buf!(*a).iter_mut().zip(g).zip(&x) {
                        *d += gv / (F::one() + xv);
                    }
                }
            }
            Op::Mean(a) => {
                if needs[*a] {
                    let scale = g[0] / F::from_f64_c(eval.values[*a].numel() as f64);
                    for d in buf!(*a).iter_mut() {
                        *d += scale;
                    }
                }
            }
            Op::Sum(a) => {
                if needs[*a] {
                    let gv = g[0];
                    for d in buf!(*a).iter_mut() {
                        *d += gv;
                    }
                }
            }
            Op::Concat { axis, inputs } => {
                let shape = &self.nodes[id].shape;
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[*axis + 1..].iter().product();
                let mut offsets = Vec::with_capacity(inputs.len());
                let mut acc = 0usize;
                for &inp in inputs {
                    offsets.push(acc);
                    acc += val(inp).shape()[*axis] * inner;
                }
                let total = acc;
                for (slot, &inp) in inputs.iter().enumerate() {
                    if !needs[inp] {
                        continue;
                    }
                    let step = val(inp).shape()[*axis] * inner;
                    let gi = buf!(inp);
                    for o in 0..outer {
                        let src = o * total + offsets[slot];
                        for j in 0..step {
                            gi[o * step + j] += g[src + j];
                        }
                    }
                }
            }
            Op::Reshape(a) => {
                if needs[*a] {
                    for (d, &x) in buf!(*a).iter_mut().zip(g) {
                        *d += x;
                    }
                }
            }
            Op::NearestUpsample2x(a) => {
                if needs[*a] {
                    let s = val(*a).shape().to_vec();
                    let (h, w) = (s[2], s[3]);
                    let (ho, wo) = (h * 2, w * 2);
                    let gi = buf!(*a);
                    for p in 0..s[0] * s[1] {
                        let ib = p * h * w;
                        let ob = p * ho * wo;
                        for y in 0..h {
                            for x in 0..w {
                                let o = ob + 2 * y * wo + 2 * x;
                                gi[ib + y * w + x] +=
                                    g[o] + g[o + 1] + g[o + wo] + g[o + wo + 1];
                            }
                        }
                    }
                }
            }
            Op::AvgPool { input, k } => {
                if needs[*input] {
                    let s = val(*input).shape().to_vec();
                    let (h, w) = (s[2], s[3]);
                    let (ho, wo) = (h / k, w / k);
                    let norm = F::from_f64_c((k * k) as f64);
                    let gi = buf!(*input);
                    for p in 0..s[0] * s[1] {
                        let ib = p * h * w;
                        let ob = p * ho * wo;
                        for oy in 0..ho {
                            for ox in 0..wo {
                                let gv = g[ob + oy * wo + ox] / norm;
                                for dy in 0..*k {
                                    for dx in 0..*k {
                                        gi[ib + (oy * k + dy) * w + ox * k + dx] += gv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Op::GlobalAvgPool(a) => {
                if needs[*a] {
                    let s = val(*a).shape().to_vec();
                    let hw = s[2] * s[3];
                    let norm = F::from_f64_c(hw as f64);
                    let gi = buf!(*a);
                    for p in 0..s[0] * s[1] {
                        let gv = g[p] / norm;
                        for d in gi[p * hw..(p + 1) * hw].iter_mut() {
                            *d += gv;
                        }
                    }
                }
            }
            Op::L2Normalize(a) => {
                if needs[*a] {
                    let x = val(*a).data().to_vec();
                    let y = eval.values[id].data().to_vec();
                    let d = *val(*a).shape().last().unwrap();
                    let rows = x.len() / d;
                    let gi = buf!(*a);
                    for r in 0..rows {
                        let xr = &x[r * d..(r + 1) * d];
                        let yr = &y[r * d..(r + 1) * d];
                        let gr = &g[r * d..(r + 1) * d];
                        let norm = xr.iter().map(|&v| v * v).sum::<F>().sqrt();
                        let dot: F = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                        for j in 0..d {
                            gi[r * d + j] += (gr[j] - yr[j] * dot) / norm;
                        }
                    }
                }
            }
            Op::CosineSimilarity(a, b) => {
                let ta = val(*a).data().to_vec();
                let tb = val(*b).data().to_vec();
                let d = *val(*a).shape().last().unwrap();
                let rows = ta.len() / d;
                for r in 0..rows {
                    let ra = &ta[r * d..(r + 1) * d];
                    let rb = &tb[r * d..(r + 1) * d];
                    let dot: F = ra.iter().zip(rb).map(|(&x, &y)| x * y).sum();
                    let na = ra.iter().map(|&x| x * x).sum::<F>().sqrt();
                    let nb = rb.iter().map(|&x| x * x).sum::<F>().sqrt();
                    let c = dot / (na * nb);
                    let gv = g[r];
                    if needs[*a] {
                        let ga = buf!(*a);
                        for j in 0..d {
                            ga[r * d + j] += gv * (rb[j] / (na * nb) - c * ra[j] / (na * na));
                        }
                    }
                    if needs[*b] {
                        let gb = buf!(*b);
                        for j in 0..d {
                            gb[r * d + j] += gv * (ra[j] / (na * nb) - c * rb[j] / (nb * nb));
                        }
                    }
                }
            }
            Op::BilinearSample { image, flow } => {
                let ti = val(*image).data().to_vec();
                let tf = val(*flow).data().to_vec();
                let s = val(*image).shape().to_vec();
                let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
                let need_img = needs[*image];
                let need_flow = needs[*flow];
                let mut gimg = vec![F::zero(); if need_img { ti.len() } else { 0 }];
                let mut gflow = vec![F::zero(); if need_flow { tf.len() } else { 0 }];
                let one = F::one();
                let (ymax, xmax) = (F::from_f64_c((h - 1) as f64), F::from_f64_c((w - 1) as f64));
                for b in 0..n {
                    let fb = b * 2 * h * w;
                    for ch in 0..c {
                        let ib = (b * c + ch) * h * w;
                        for y in 0..h {
                            for x in 0..w {
                                let u = tf[fb + y * w + x];
                                let vv = tf[fb + h * w + y * w + x];
                                let xs_raw = F::from_f64_c(x as f64) - u;
                                let ys_raw = F::from_f64_c(y as f64) - vv;
                                let (y0, y1, wy) = kernels::clamp_axis(ys_raw, h);
                                let (x0, x1, wx) = kernels::clamp_axis(xs_raw, w);
                                let gv = g[ib + y * w + x];
                                if need_img {
                                    gimg[ib + y0 * w + x0] += gv * (one - wy) * (one - wx);
                                    gimg[ib + y0 * w + x1] += gv * (one - wy) * wx;
                                    gimg[ib + y1 * w + x0] += gv * wy * (one - wx);
                                    gimg[ib + y1 * w + x1] += gv * wy * wx;
                                }
                                if need_flow {
                                    let v00 = ti[ib + y0 * w + x0];
                                    let v01 = ti[ib + y0 * w + x1];
                                    let v10 = ti[ib + y1 * w + x0];
                                    let v11 = ti[ib + y1 * w + x1];
                                    // derivative w.r.t. the continuous sample
                                    // position; zero where the clamp is active
                                    let dvx = if xs_raw < F::zero() || xs_raw > xmax {
                                        F::zero()
                                    } else {
                                        (one - wy) * (v01 - v00) + wy * (v11 - v10)
                                    };
                                    let dvy = if ys_raw < F::zero() || ys_raw > ymax {
                                        F::zero()
                                    } else {
                                        (one - wx) * (v10 - v00) + wx * (v11 - v01)
                                    };
                                    // xs = x - u, so d/du = -dvx; same for v
                                    gflow[fb + y * w + x] -= gv * dvx;
                                    gflow[fb + h * w + y * w + x] -= gv * dvy;
                                }
                            }
                        }
                    }
                }
                if need_img {
                    for (d, &x) in buf!(*image).iter_mut().zip(&gimg) {
                        *d += x;
                    }
                }
                if need_flow {
                    for (d, &x) in buf!(*flow).iter_mut().zip(&gflow) {
                        *d += x;
                    }
                }
            }
            Op::StraightThroughQuantize { input, threshold }
            | Op::SurrogateAffine { input, threshold, .. } => {
                if needs[*input] {
                    let inv = F::from_f64_c(1.0 / threshold);
                    for (d, &x) in buf!(*input).iter_mut().zip(g) {
                        *d += x * inv;
                    }
                }
            }
        }
    }
}
