//! Finite-difference gradient checker.
//!
//! Compares reverse-mode gradients against central differences. Graphs
//! containing a straight-through quantizer are differenced on their
//! surrogate (quantizer replaced by `1/C` scaling), whose analytic backward
//! is identical; this is the straight-through-adjusted check.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::Result;
use crate::graph::{Bindings, Graph, NodeId};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Maximum admissible relative error.
    pub tolerance: f64,
    /// Base finite-difference step; scaled per element by `max(1, |x|)`.
    pub step: f64,
    /// Elements checked per parameter; larger parameters are subsampled.
    pub max_elements: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            step: 1e-5,
            max_elements: 64,
            seed: 0x9e3779b9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub used_quantizer_surrogate: bool,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn pass(&self) -> bool {
        self.params.iter().all(|p| p.pass)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_rel_error)
            .fold(0.0, f64::max)
    }
}

/// One sampled element: analytic and numeric derivative of the loss.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ElementPair {
    pub analytic: f64,
    pub numeric: f64,
}

pub(crate) fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(1e-6)
}

pub(crate) fn build_report(
    tolerance: f64,
    used_surrogate: bool,
    per_param: Vec<(String, Vec<ElementPair>)>,
) -> GradCheckReport {
    let params = per_param
        .into_iter()
        .map(|(name, pairs)| {
            let max_rel_error = pairs
                .iter()
                .map(|p| relative_error(p.analytic, p.numeric))
                .fold(0.0, f64::max);
            ParamCheck {
                name,
                checked: pairs.len(),
                max_rel_error,
                pass: max_rel_error < tolerance,
            }
        })
        .collect();
    GradCheckReport {
        tolerance,
        used_quantizer_surrogate: used_surrogate,
        params,
    }
}

/// Full check of `loss` against every trainable leaf in `graph`.
///
/// Never fails on a gradient mismatch; mismatches are report entries.
pub fn grad_check<F: Scalar>(
    graph: &Graph<F>,
    bindings: &Bindings<F>,
    loss: NodeId,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let eval = graph.forward_eval(bindings)?;
    let grads = graph.backward(&eval, loss)?;

    let use_surrogate = graph.has_quantizer();
    let fd_graph = if use_surrogate {
        graph.quantizer_surrogate(&eval)
    } else {
        graph.clone()
    };

    let mut per_param = Vec::new();
    for (pi, name) in graph.parameter_names().into_iter().enumerate() {
        let id = graph.by_name(&name)?;
        let analytic = match grads.get(id) {
            Some(g) => g,
            None => continue, // leaf not connected to the loss
        };
        let base = bindings
            .get(&name)
            .expect("parameter bound during forward")
            .clone();
        let numel = base.numel();
        let indices: Vec<usize> = if numel <= opts.max_elements {
            (0..numel).collect()
        } else {
            let mut rng = ChaCha12Rng::seed_from_u64(opts.seed ^ ((pi as u64) << 32));
            let mut v = sample(&mut rng, numel, opts.max_elements).into_vec();
            v.sort_unstable();
            v
        };
        let mut pairs = Vec::with_capacity(indices.len());
        for &ix in &indices {
            let x = base.data()[ix].to_f64_c();
            let h = opts.step * x.abs().max(1.0);
            let numeric = central_difference(&fd_graph, bindings, loss, &name, ix, h)?;
            pairs.push(ElementPair {
                analytic: analytic[ix].to_f64_c(),
                numeric,
            });
        }
        per_param.push((name, pairs));
    }
    Ok(build_report(opts.tolerance, use_surrogate, per_param))
}

/// Central finite difference of the loss w.r.t. one parameter element.
pub fn central_difference<F: Scalar>(
    graph: &Graph<F>,
    bindings: &Bindings<F>,
    loss: NodeId,
    param: &str,
    index: usize,
    h: f64,
) -> Result<f64> {
    let base = bindings.get(param).expect("parameter bound").clone();
    let x = base.data()[index].to_f64_c();
    let eval_at = |v: f64| -> Result<f64> {
        let mut t = base.clone();
        t.data_mut()[index] = F::from_f64_c(v);
        let mut b2 = bindings.clone();
        b2.set(param, t);
        let eval = graph.forward_eval(&b2)?;
        Ok(eval.value(loss).item().to_f64_c())
    };
    let plus = eval_at(x + h)?;
    let minus = eval_at(x - h)?;
    Ok((plus - minus) / (2.0 * h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn linear_mean_graph() -> (Graph<f64>, Bindings<f64>, NodeId) {
        let mut g = Graph::new();
        let x = g.input("x", &[4, 3]).unwrap();
        let w = g.parameter("w", &[3, 2]).unwrap();
        let b = g.parameter("b", &[2]).unwrap();
        let y = g.matmul(x, w).unwrap();
        let y = g.add(y, b).unwrap();
        let y = g.tanh(y);
        let loss = g.mean(y);
        let mut bind = Bindings::new();
        bind.set(
            "x",
            Tensor::from_f64_slice(
                &[4, 3],
                &[0.1, -0.4, 0.7, 0.2, 0.9, -1.1, 0.5, 0.3, -0.2, -0.8, 0.6, 0.4],
            )
            .unwrap(),
        );
        bind.set(
            "w",
            Tensor::from_f64_slice(&[3, 2], &[0.3, -0.1, 0.8, 0.2, -0.5, 0.4]).unwrap(),
        );
        bind.set("b", Tensor::from_f64_slice(&[2], &[0.05, -0.2]).unwrap());
        (g, bind, loss)
    }

    #[test]
    fn linear_layer_passes_at_1e6() {
        let (g, bind, loss) = linear_mean_graph();
        let report = grad_check(
            &g,
            &bind,
            loss,
            &GradCheckOptions {
                tolerance: 1e-6,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(report.pass(), "{report:?}");
    }

    #[test]
    fn corrupted_backward_is_reported_as_failure() {
        // negative control: poison the analytic side and re-run the report
        let (g, bind, loss) = linear_mean_graph();
        let eval = g.forward_eval(&bind).unwrap();
        let grads = g.backward(&eval, loss).unwrap();
        let wid = g.by_name("w").unwrap();
        let analytic = grads.get(wid).unwrap();
        let mut pairs = Vec::new();
        for (ix, &a) in analytic.iter().enumerate() {
            let numeric = central_difference(&g, &bind, loss, "w", ix, 1e-5).unwrap();
            let corrupted = a + 0.5; // deliberately wrong backward rule
            pairs.push(ElementPair {
                analytic: corrupted,
                numeric,
            });
        }
        let report = build_report(1e-4, false, vec![("w".into(), pairs)]);
        assert!(!report.pass());
    }

    #[test]
    fn quantizer_path_uses_surrogate_and_matches_identity_rule() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.parameter("x", &[5]).unwrap();
        let q = g.straight_through_quantize(x, 0.25).unwrap();
        let loss = g.mean(q);
        let mut bind = Bindings::new();
        bind.set(
            "x",
            Tensor::from_f64_slice(&[5], &[0.3, -0.7, 1.2, 0.05, -0.4]).unwrap(),
        );
        let report = grad_check(&g, &bind, loss, &GradCheckOptions::default()).unwrap();
        assert!(report.used_quantizer_surrogate);
        assert!(report.pass(), "{report:?}");
        // the straight-through gradient equals the surrogate's identity/C rule
        let eval = g.forward_eval(&bind).unwrap();
        let grads = g.backward(&eval, loss).unwrap();
        let gx = grads.get(x).unwrap();
        for &v in gx {
            assert!((v - (1.0f64 / 0.25) / 5.0).abs() < 1e-12);
        }
    }
}
