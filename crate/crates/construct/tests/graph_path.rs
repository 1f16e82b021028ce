//! In-graph construction: bit-exact agreement with the pure path and the
//! straight-through-adjusted gradient check into the flow source.

use evhand_construct::graph::build_construction;
use evhand_construct::{iterative_construct, ConstructOptions, FlowSequence, QuantizeMode};
use evhand_event::{EventHistogram, Image, VectorField};
use evhand_tensor::{grad_check, Bindings, GradCheckOptions, Graph, Tensor};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn random_image(rng: &mut ChaCha12Rng, h: usize, w: usize) -> Image<f64> {
    Image::from_vec(h, w, (0..h * w).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_flow(rng: &mut ChaCha12Rng, h: usize, w: usize, mag: f64) -> VectorField<f64> {
    VectorField::from_vec(
        h,
        w,
        (0..h * w * 2).map(|_| rng.gen_range(-mag..mag)).collect(),
    )
    .unwrap()
}

fn flow_channel_tensors(f: &VectorField<f64>) -> (Tensor<f64>, Tensor<f64>) {
    let (h, w) = (f.height(), f.width());
    let mut u = vec![0.0; h * w];
    let mut v = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let (a, b) = f.get(y, x);
            u[y * w + x] = a;
            v[y * w + x] = b;
        }
    }
    (
        Tensor::new(&[1, 1, h, w], u).unwrap(),
        Tensor::new(&[1, 1, h, w], v).unwrap(),
    )
}

fn graph_histograms(
    img: &Image<f64>,
    flows: &[VectorField<f64>],
    contrast: f64,
    quantize: QuantizeMode,
) -> (EventHistogram, EventHistogram) {
    let (h, w) = (img.height(), img.width());
    let mut g: Graph<f64> = Graph::new();
    let img_node = g.input("img", &[1, 1, h, w]).unwrap();
    let mut flow_nodes = Vec::new();
    let mut bind = Bindings::new();
    bind.set(
        "img",
        Tensor::new(&[1, 1, h, w], img.data().to_vec()).unwrap(),
    );
    for (t, f) in flows.iter().enumerate() {
        let u = g.input(&format!("u{t}"), &[1, 1, h, w]).unwrap();
        let v = g.input(&format!("v{t}"), &[1, 1, h, w]).unwrap();
        let (tu, tv) = flow_channel_tensors(f);
        bind.set(&format!("u{t}"), tu);
        bind.set(&format!("v{t}"), tv);
        flow_nodes.push((u, v));
    }
    let nodes = build_construction(&mut g, img_node, &flow_nodes, contrast, quantize, true).unwrap();
    let eval = g.forward_eval(&bind).unwrap();
    let pev = eval.value(nodes.pseudo_events);
    let rev = eval.value(nodes.reversed_events.unwrap());
    let to_hist = |t: &Tensor<f64>| {
        let flat = t.reshaped(&[2, h, w]).unwrap();
        EventHistogram::from_tensor(&flat).unwrap()
    };
    (to_hist(pev), to_hist(rev))
}

#[test]
fn graph_construction_matches_pure_path_exactly() {
    let mut rng = ChaCha12Rng::seed_from_u64(77);
    for trial in 0..10 {
        let (h, w) = (9, 9);
        let img = random_image(&mut rng, h, w);
        let flows: Vec<VectorField<f64>> =
            (0..4).map(|_| random_flow(&mut rng, h, w, 1.2)).collect();
        let mut opts = ConstructOptions::new(0.2);
        opts.flow_cap = Some(1000.0); // the graph path does not cap
        let mut provider = FlowSequence(flows.clone());
        let trace = iterative_construct(&img, &mut provider, 4, &opts).unwrap();
        let rev = evhand_construct::reverse_construct(&trace).unwrap();
        let (gp, gr) = graph_histograms(&img, &flows, 0.2, QuantizeMode::PerIteration);
        assert_eq!(gp, trace.final_histogram, "trial {trial} forward");
        assert_eq!(gr, rev, "trial {trial} reverse");
    }
}

#[test]
fn graph_final_mode_matches_pure_final_mode() {
    let mut rng = ChaCha12Rng::seed_from_u64(78);
    let (h, w) = (8, 8);
    let img = random_image(&mut rng, h, w);
    let flows: Vec<VectorField<f64>> = (0..3).map(|_| random_flow(&mut rng, h, w, 1.0)).collect();
    let mut opts = ConstructOptions::new(0.2);
    opts.quantize = QuantizeMode::Final;
    opts.flow_cap = Some(1000.0);
    let mut provider = FlowSequence(flows.clone());
    let trace = iterative_construct(&img, &mut provider, 3, &opts).unwrap();
    let rev = evhand_construct::reverse_construct(&trace).unwrap();
    let (gp, gr) = graph_histograms(&img, &flows, 0.2, QuantizeMode::Final);
    assert_eq!(gp, trace.final_histogram);
    assert_eq!(gr, rev);
}

#[test]
fn construction_gradients_flow_into_flow_parameters() {
    // straight-through-adjusted check: loss on the pseudo-events and the
    // warped image, differentiated w.r.t. both flow channels
    let mut rng = ChaCha12Rng::seed_from_u64(79);
    let (h, w) = (7, 7);
    let img = random_image(&mut rng, h, w);
    let mut g: Graph<f64> = Graph::new();
    let img_node = g.input("img", &[1, 1, h, w]).unwrap();
    let u = g.parameter("u", &[1, 1, h, w]).unwrap();
    let v = g.parameter("v", &[1, 1, h, w]).unwrap();
    let nodes =
        build_construction(&mut g, img_node, &[(u, v), (u, v)], 0.2, QuantizeMode::PerIteration, true)
            .unwrap();
    let pe = g.tanh(nodes.pseudo_events);
    let re = g.tanh(nodes.reversed_events.unwrap());
    let lw = g.mean(*nodes.warped.last().unwrap());
    let lp = g.mean(pe);
    let lr = g.mean(re);
    let s1 = g.add(lp, lr).unwrap();
    let loss = g.add(s1, lw).unwrap();

    let mut bind = Bindings::new();
    bind.set(
        "img",
        Tensor::new(&[1, 1, h, w], img.data().to_vec()).unwrap(),
    );
    let f = random_flow(&mut rng, h, w, 0.6);
    let (tu, tv) = flow_channel_tensors(&f);
    bind.set("u", tu);
    bind.set("v", tv);
    let report = grad_check(&g, &bind, loss, &GradCheckOptions::default()).unwrap();
    assert!(report.used_quantizer_surrogate);
    assert!(
        report.pass(),
        "max rel err {:.3e}: {report:?}",
        report.max_rel_error()
    );
}
