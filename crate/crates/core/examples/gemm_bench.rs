//! GEMM throughput probe for the conv hot-path shapes.

use idlab::tensor::gemm;
use std::time::Instant;

fn bench(name: &str, m: usize, k: usize, n: usize, reps: usize, f: impl Fn(&mut [f64], &[f64], &[f64])) {
    let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.013).sin()).collect();
    let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.007).cos()).collect();
    let mut c = vec![0.0; m * n];
    f(&mut c, &a, &b); // warm
    let t0 = Instant::now();
    for _ in 0..reps {
        f(&mut c, &a, &b);
    }
    let dt = t0.elapsed().as_secs_f64();
    let gflops = (2.0 * ((m * k * n) as f64 * reps as f64)) / dt / 1e9;
    println!("{name}: {m}x{k}x{n} -> {gflops:.2} GFLOP/s  (checksum {:.3})", c[0]);
}

fn main() {
    bench("gemm fwd", 784, 800, 32, 200, |c, a, b| {
        gemm::gemm(c, a, b, 784, 800, 32)
    });
    bench("gemm dcol", 784, 32, 800, 200, |c, a, b| {
        gemm::gemm(c, a, b, 784, 32, 800)
    });
    let a: Vec<f64> = (0..784 * 800).map(|i| (i as f64 * 0.013).sin()).collect();
    let b: Vec<f64> = (0..784 * 32).map(|i| (i as f64 * 0.007).cos()).collect();
    let mut c = vec![0.0; 800 * 32];
    gemm::gemm_tn(&mut c, &a, &b, 784, 800, 32);
    let t0 = Instant::now();
    for _ in 0..200 {
        gemm::gemm_tn(&mut c, &a, &b, 784, 800, 32);
    }
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "gemm_tn dW: 784x800x32 -> {:.2} GFLOP/s",
        (2.0 * (784.0 * 800.0 * 32.0 * 200.0)) / dt / 1e9
    );
}
