//! Quick fidelity experiment: L1 distance to the oracle histogram for
//! iterative construction (T = 6, ground-truth flows) vs the one-shot
//! baseline with the net displacement flow.

use evhand_construct::{
    iterative_construct, one_shot_construct, ConstructOptions, FlowProvider,
};
use evhand_event::{
    events_to_histogram, linear_to_log, oracle_simulate_events, ReferenceMode, VectorField,
};
use evhand_hand::{gt_flow, random_script, render_hand, Amplitude, MotionScript, RenderConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

struct GtFlows<'a> {
    script: &'a MotionScript<f64>,
    t_iters: usize,
    h: usize,
    w: usize,
    cfg: &'a RenderConfig<f64>,
    t_end: f64,
}

impl<'a> FlowProvider<f64> for GtFlows<'a> {
    fn flow(
        &mut self,
        t: usize,
        _current: &evhand_event::Image<f64>,
    ) -> Result<VectorField<f64>, String> {
        let tau0 = self.t_end * t as f64 / self.t_iters as f64;
        let tau1 = self.t_end * (t + 1) as f64 / self.t_iters as f64;
        gt_flow(
            &self.script.at_time(tau0),
            &self.script.at_time(tau1),
            self.h,
            self.w,
            self.cfg,
        )
        .map_err(|e| e.to_string())
    }
}

fn main() {
    let cfg = RenderConfig::<f64>::default();
    let (h, w) = (64usize, 64usize);
    let c = 0.2;
    let m = 8usize;
    let mut wins = 0usize;
    let mut ratios = Vec::new();
    let mut t6_vs_t1 = (0.0f64, 0.0f64);
    for i in 0..100u64 {
        let base: u64 = std::env::var("BASE").map(|v| v.parse().unwrap()).unwrap_or(42_000);
        let mut rng = ChaCha12Rng::seed_from_u64(base + i);
        let amp = Amplitude::High;
        let keyframes: usize = std::env::var("KF").map(|v| v.parse().unwrap()).unwrap_or(2);
        let script = random_script(&mut rng, keyframes, m, amp, h, w, &cfg).unwrap();
        // oracle over micro-step frames
        let frames: Vec<_> = (0..=script.steps())
            .map(|s| render_hand(&script.at_step(s), h, w, &cfg).unwrap())
            .collect();
        let logs: Vec<_> = frames.iter().map(linear_to_log).collect();
        let stream = oracle_simulate_events(&logs, c, 0, 1000, ReferenceMode::Carry).unwrap();
        let oracle = events_to_histogram(&stream, 0, u64::MAX).unwrap();

        let log0 = &logs[0];
        // iterative with T = 6 GT flows
        let t_end = (keyframes - 1) as f64;
        let mut provider = GtFlows { script: &script, t_iters: 6, h, w, cfg: &cfg, t_end };
        let trace = iterative_construct(log0, &mut provider, 6, &ConstructOptions::new(c)).unwrap();
        let l1_iter = trace.final_histogram.l1_distance(&oracle);
        // one-shot with the net displacement flow
        let net = gt_flow(&script.at_time(0.0), &script.at_time(t_end), h, w, &cfg).unwrap();
        let oneshot = one_shot_construct(log0, &net, c).unwrap();
        let l1_one = oneshot.l1_distance(&oracle);

        if i < 3 {
            // decomposition: counts where each construction is silent
            let (hh, ww) = (64usize, 64usize);
            let mut miss_iter = 0u64;
            let mut miss_one = 0u64;
            let mut false_iter = 0u64;
            let mut false_one = 0u64;
            for y in 0..hh { for x in 0..ww { for ch in 0..2 {
                let o = oracle.get(y, x, ch) as i64;
                let it = trace.final_histogram.get(y, x, ch) as i64;
                let on = oneshot.get(y, x, ch) as i64;
                if it == 0 { miss_iter += o as u64; } else { false_iter += (it - o).unsigned_abs(); }
                if on == 0 { miss_one += o as u64; } else { false_one += (on - o).unsigned_abs(); }
            }}}
            println!("  seq {i}: iter miss {miss_iter} err@hit {false_iter} | one-shot miss {miss_one} err@hit {false_one} | iter total {} one total {}", trace.final_histogram.total(), oneshot.total());
        }
        if l1_iter < l1_one {
            wins += 1;
        }
        ratios.push(l1_iter as f64 / (l1_one as f64).max(1.0));
        t6_vs_t1.0 += l1_iter as f64;
        t6_vs_t1.1 += l1_one as f64;
        if i < 8 {
            println!(
                "seq {i} {amp:?}: oracle total {} | L1 iter {} | L1 one-shot {}",
                oracle.total(),
                l1_iter,
                l1_one
            );
        }
    }
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    println!("wins: {wins}/100, mean L1 ratio: {mean_ratio:.3}");
    println!("mean L1  T=6: {:.1}   one-shot: {:.1}", t6_vs_t1.0 / 100.0, t6_vs_t1.1 / 100.0);
}
