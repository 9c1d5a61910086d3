//! Scratch probe for training-throughput and inductive-bias checks.

use idlab::nn::{arch, backward_with, build_network, forward, InitScheme, NetworkSpec, Workspace};
use idlab::optim::{optimizer_step, OptimizerSpec, OptimizerState};
use idlab::tensor::rng::{sample, Dist, RngState};
use idlab::Tensor;
use std::time::Instant;

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    num / (va.sqrt() * vb.sqrt())
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let depth: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let steps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let channels: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(32);
    let scheme: InitScheme = match args.get(4).map(|s| s.as_str()) {
        Some("kaiming") => InitScheme::KaimingNormal,
        Some("xavier") => InitScheme::XavierNormal,
        Some("orth") => InitScheme::Orthogonal,
        _ => InitScheme::Default,
    };

    // Synthetic digit-ish training image: strokes on a dark background,
    // normalized roughly like MNIST.
    let mut rng = RngState::new(1234);
    let mut img = Tensor::full(&[1, 28, 28], -0.4242);
    for r in 0..28 {
        for c in 0..28 {
            let on_bar = r >= 5 && r <= 8 && c >= 6 && c <= 21;
            let on_diag = r > 8 && r <= 23 && (21usize - (r - 8)).abs_diff(c) <= 1;
            if on_bar || on_diag {
                img.data_mut()[r * 28 + c] = 2.0 + 0.4 * rng.next_f64();
            }
        }
    }

    let spec = NetworkSpec::new(arch::cnn(depth, 1, channels, 5), scheme, 42);
    let mut net = build_network(&spec).unwrap();
    let opt = OptimizerSpec {
        total_steps: steps,
        ..Default::default()
    };
    let mut state = OptimizerState::new(&opt, &net);

    let t0 = Instant::now();
    let mut last_loss = f64::NAN;
    let mut ws = Workspace::new();
    for t in 0..steps {
        let grads = backward_with(&net, &img, &img, &mut ws).unwrap();
        last_loss = grads.loss;
        let lr = opt.lr_at_step(t).unwrap();
        optimizer_step(&opt, &mut state, &mut net, &grads, lr).unwrap();
        if t % (steps / 10).max(1) == 0 {
            eprintln!("step {t}: loss {:.6e} ({:.1} steps/s)", grads.loss, (t + 1) as f64 / t0.elapsed().as_secs_f64());
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "depth {depth} ch {channels} steps {steps}: {:.1} steps/s, total {:.1}s, final loss {:.3e}",
        steps as f64 / dt,
        dt,
        last_loss
    );

    // Correlation at rho=0 against identity and constant references.
    let mut corr_id = 0.0;
    let mut corr_const = 0.0;
    let trials = 8;
    let mut rng2 = RngState::new(55);
    for _ in 0..trials {
        // Orthogonalized random probe with the training image's norm.
        let z = sample(Dist::gaussian(0.0, 1.0), &[1, 28, 28], &mut rng2).unwrap();
        let proj = z.dot(&img).unwrap() / img.dot(&img).unwrap();
        let mut x = z.clone();
        x.axpy(-proj, &img).unwrap();
        let x = x.scale(img.frob_norm() / x.frob_norm());
        let (y, _) = forward(&net, &x, false).unwrap();
        corr_id += pearson(y.data(), x.data()) / trials as f64;
        corr_const += pearson(y.data(), img.data()) / trials as f64;
    }
    println!("rho=0 probes: corr-to-identity {corr_id:.4}, corr-to-constant {corr_const:.4}");
}
