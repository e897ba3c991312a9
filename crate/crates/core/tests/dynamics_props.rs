use chl_core::dynamics::{run_phases, settle, IntegratorConfig, LayerStates, Phase};
use chl_core::linalg::{Mat, Vector};
use chl_core::network::{init_network, sigmoid, BiasInit, FeedbackMode, Layout, Network};
use chl_core::rng::{DistSpec, Rng};
use proptest::prelude::*;

fn net(sizes: Vec<usize>, random: bool, seed: u64) -> Network {
    let layout = Layout::new(sizes).unwrap();
    let mode = if random {
        FeedbackMode::Random { dist: DistSpec::symmetric_uniform(0.5).unwrap() }
    } else {
        FeedbackMode::Transpose
    };
    let bias = BiasInit::Random { dist: DistSpec::symmetric_uniform(0.1).unwrap() };
    init_network(&layout, &mode, &DistSpec::symmetric_uniform(0.5).unwrap(), &bias, &mut Rng::new(seed)).unwrap()
}

fn sizes_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..6, 3..6)
}

fn unit_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut r = Rng::new(seed);
    (0..n).map(|_| r.next_f64()).collect()
}

/// Straightforward settle with every feedback matrix materialized as `W_{k+1}ᵀ`
/// and plain nested loops.
fn naive_phases(n: &Network, input: &[f64], target: &[f64], cfg: &IntegratorConfig, gamma: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let depth = n.depth();
    let wt: Vec<Mat> = (1..depth).map(|k| n.weight(k + 1).transpose()).collect();
    let mut x: Vec<Vec<f64>> = n.layout().sizes().iter().map(|&s| vec![0.0; s]).collect();
    x[0] = input.to_vec();
    x[depth] = target.to_vec();
    let sweep = |x: &mut Vec<Vec<f64>>, top: usize| {
        let old = x.clone();
        for k in 1..=top {
            let w = n.weight(k);
            for i in 0..w.rows() {
                let mut ff = 0.0;
                for j in 0..w.cols() {
                    ff += w.get(i, j) * old[k - 1][j];
                }
                let mut drive = ff;
                if k < depth {
                    let v = &wt[k - 1];
                    let mut fb = 0.0;
                    for j in 0..v.cols() {
                        fb += v.get(i, j) * old[k + 1][j];
                    }
                    drive += gamma * fb;
                }
                drive += n.bias(k)[i];
                x[k][i] = old[k][i] + cfg.dt * (-old[k][i] + sigmoid(drive));
            }
        }
    };
    for _ in 0..cfg.steps() {
        sweep(&mut x, depth - 1);
    }
    let clamped = x.clone();
    for _ in 0..cfg.steps() {
        sweep(&mut x, depth);
    }
    (clamped, x)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn transpose_mode_matches_materialized_reference(sizes in sizes_strategy(), seed in 0u64..1000) {
        let n = net(sizes.clone(), false, seed);
        let input = unit_vec(sizes[0], seed + 1);
        let target = unit_vec(*sizes.last().unwrap(), seed + 2);
        let cfg = IntegratorConfig::default();
        let pair = run_phases(&n, &input, &target, &cfg, 0.05).unwrap();
        let (clamped, free) = naive_phases(&n, &input, &target, &cfg, 0.05);
        for k in 0..sizes.len() {
            for (a, b) in pair.clamped.layer(k).iter().zip(&clamped[k]) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            for (a, b) in pair.free.layer(k).iter().zip(&free[k]) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn input_and_clamped_output_never_move(sizes in sizes_strategy(), seed in 0u64..1000, random in any::<bool>()) {
        let n = net(sizes.clone(), random, seed);
        let input = unit_vec(sizes[0], seed + 7);
        let target = unit_vec(*sizes.last().unwrap(), seed + 8);
        let pair = run_phases(&n, &input, &target, &IntegratorConfig::default(), 0.05).unwrap();
        prop_assert_eq!(pair.clamped.layer(0).as_slice(), input.as_slice());
        prop_assert_eq!(pair.free.layer(0).as_slice(), input.as_slice());
        prop_assert_eq!(pair.clamped.output().as_slice(), target.as_slice());
    }

    #[test]
    fn settles_forget_initial_hidden_state(sizes in sizes_strategy(), seed in 0u64..1000, random in any::<bool>()) {
        let n = net(sizes.clone(), random, seed);
        let cfg = IntegratorConfig::default();
        let input = unit_vec(sizes[0], seed + 3);
        let mut results = Vec::new();
        for start in 0..3u64 {
            let mut layers = vec![Vector::from_slice(&input)];
            for (k, &w) in sizes.iter().enumerate().skip(1) {
                layers.push(Vector::from(unit_vec(w, seed * 31 + start * 7 + k as u64)));
            }
            let settled = settle(&n, LayerStates::from_layers(layers), &cfg, 0.05, Phase::Free).unwrap();
            results.push(settled);
        }
        for other in &results[1..] {
            for k in 1..sizes.len() {
                for (a, b) in results[0].layer(k).iter().zip(other.layer(k).iter()) {
                    prop_assert!((a - b).abs() < 1e-6, "layer {} differs: {} vs {}", k, a, b);
                }
            }
        }
    }
}

#[test]
fn xor_zero_input_clamps_zero_output() {
    let n = net(vec![2, 2, 1], true, 4);
    let pair = run_phases(&n, &[0.0, 0.0], &[0.0], &IntegratorConfig::default(), 0.05).unwrap();
    assert_eq!(pair.clamped.output().as_slice(), &[0.0]);
}
