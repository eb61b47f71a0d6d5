use mls_core::genome::{flatten, unflatten, GenomeLayout};
use mls_core::neural::{ctrnn_advance, mutate_j, ControllerState, MutationNet, MutationStats, Substrate};
use mls_core::rng::{stream_rng, Stream};
use proptest::prelude::*;
use rand::Rng;

fn random_substrate(n: usize, od: usize, seed: u64) -> Substrate {
    let mut rng = stream_rng(seed, Stream::Test, 0, 0);
    let mut v = |k: usize, s: f64| -> Vec<f64> { (0..k).map(|_| rng.random_range(-s..s)).collect() };
    Substrate::from_raw(n, od, v(n, 1.0), v(n, 1.0), v(n * od, 0.5), v(2 * n, 0.5))
}

fn integrate(sub: &Substrate, j: &[f64], obs: &[f64], dt: f64, steps: usize) -> ControllerState {
    let mut st = ControllerState::new(j.to_vec());
    st.z.iter_mut().enumerate().for_each(|(k, z)| *z = 0.1 * k as f64 - 0.3);
    let mut scratch = Vec::new();
    for _ in 0..steps {
        ctrnn_advance(&mut st, sub, obs, dt, 0.5, &mut scratch);
    }
    st
}

#[test]
fn ctrnn_euler_is_first_order() {
    let (n, od) = (8, 6);
    let sub = random_substrate(n, od, 1);
    let mut rng = stream_rng(2, Stream::Test, 0, 0);
    let j: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.5..1.5)).collect();
    let obs: Vec<f64> = (0..od).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dt = 0.1;
    let err = |a: &ControllerState, b: &ControllerState| -> f64 {
        a.z.iter().zip(&b.z).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    };
    let reference = integrate(&sub, &j, &obs, dt / 2048.0, 100 * 2048);
    let e1 = err(&integrate(&sub, &j, &obs, dt, 100), &reference);
    let e2 = err(&integrate(&sub, &j, &obs, dt / 2.0, 200), &reference);
    let e3 = err(&integrate(&sub, &j, &obs, dt / 4.0, 400), &reference);
    for ratio in [e2 / e1, e3 / e2] {
        assert!((0.4..=0.6).contains(&ratio), "ratio {ratio} ({e1}, {e2}, {e3})");
    }
}

#[test]
fn mutation_without_noise_is_deterministic() {
    let n = 5;
    let mut rng = stream_rng(3, Stream::Test, 0, 0);
    let mut net = MutationNet::zeros(2, 6);
    for layer in &mut net.layers {
        layer.weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        layer.bias.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
    }
    let z_bar: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let stats = MutationStats { z_bar: &z_bar, e_bar: 30.0, e_bar_g: 0.2, e_bar_e: -0.1, e_bar_c: 0.05, m: 1.3 };
    let j: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let noise_a: Vec<f64> = (0..n * n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let noise_b: Vec<f64> = (0..n * n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let a = mutate_j(&j, &net, &stats, 0.0, &noise_a);
    let b = mutate_j(&j, &net, &stats, 0.0, &noise_b);
    assert_eq!(a, b);
    assert_ne!(a, mutate_j(&j, &net, &stats, 0.1, &noise_a));
}

proptest! {
    #[test]
    fn genome_codec_is_a_bijection(
        n in 1usize..6, r in 1usize..5, l in 1usize..3, h in 1usize..5,
        seed in any::<u64>(),
    ) {
        let layout = GenomeLayout { n, r, l, h };
        let mut rng = stream_rng(seed, Stream::Test, 0, 0);
        let genes: Vec<f64> = (0..layout.len()).map(|_| rng.random_range(-1e3..1e3)).collect();
        let (sub, net) = unflatten(&layout, &genes).unwrap();
        prop_assert_eq!(&flatten(&sub, &net).0, &genes);
        let (sub2, net2) = unflatten(&layout, &flatten(&sub, &net).0).unwrap();
        prop_assert_eq!(sub2, sub);
        prop_assert_eq!(net2, net);
        prop_assert!(unflatten(&layout, &genes[1..]).is_err());
    }
}
