//! Per-piece timing of one heavy conv layer step.
use idlab::nn::{backward_with, build_network, arch, InitScheme, NetworkSpec, Workspace};
use idlab::tensor::rng::{sample, Dist, RngState};
use std::time::Instant;

fn main() {
    let mut st = RngState::new(1);
    let img = sample(Dist::gaussian(0.0, 1.0), &[1, 28, 28], &mut st).unwrap();
    for depth in [5usize, 20] {
        let spec = NetworkSpec::new(arch::cnn(depth, 1, 32, 5), InitScheme::Default, 42);
        let net = build_network(&spec).unwrap();
        let mut ws = Workspace::new();
        backward_with(&net, &img, &img, &mut ws).unwrap(); // warm
        let reps = if depth == 5 { 40 } else { 10 };
        let t0 = Instant::now();
        for _ in 0..reps {
            backward_with(&net, &img, &img, &mut ws).unwrap();
        }
        let per = t0.elapsed().as_secs_f64() / reps as f64 * 1e3;
        // forward-only comparison
        let t1 = Instant::now();
        for _ in 0..reps {
            idlab::nn::forward(&net, &img, false).unwrap();
        }
        let fwd = t1.elapsed().as_secs_f64() / reps as f64 * 1e3;
        println!("depth {depth}: backward {per:.1} ms/step, forward-only {fwd:.1} ms");
    }
}
