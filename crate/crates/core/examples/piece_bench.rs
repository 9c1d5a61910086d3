//! Per-piece timing for one 32→32 conv layer at 28×28.

use idlab::patches::{im2col, ConvGeometry};
use idlab::tensor::gemm;
use idlab::Tensor;
use std::time::Instant;

fn time_ms(reps: usize, mut f: impl FnMut()) -> f64 {
    f();
    let t0 = Instant::now();
    for _ in 0..reps {
        f();
    }
    t0.elapsed().as_secs_f64() / reps as f64 * 1e3
}

fn main() {
    let g = ConvGeometry::new(32, 28, 28, 5, 5).unwrap();
    let hw = g.positions();
    let rl = g.row_len();
    let img: Vec<f64> = (0..g.pixels()).map(|i| (i as f64 * 0.01).sin()).collect();
    let mut col = vec![0.0; hw * rl];
    let w: Vec<f64> = (0..rl * 32).map(|i| (i as f64 * 0.001).cos()).collect();
    let mut out_cols = vec![0.0; hw * 32];
    let mut out = vec![0.0; 32 * hw];
    let gcols: Vec<f64> = (0..hw * 32).map(|i| (i as f64 * 0.002).sin()).collect();
    let mut gw = vec![0.0; rl * 32];

    let reps = 50;
    println!("im2col:      {:.2} ms", time_ms(reps, || im2col(&img, &g, &mut col)));
    println!(
        "fwd gemm:    {:.2} ms",
        time_ms(reps, || gemm::gemm(&mut out_cols, &col, &w, hw, rl, 32))
    );
    println!(
        "transpose:   {:.2} ms",
        time_ms(reps, || gemm::transpose_into(&out_cols, &mut out, hw, 32))
    );
    println!(
        "dW gemm_tn:  {:.2} ms",
        time_ms(reps, || gemm::gemm_tn(&mut gw, &col, &gcols, hw, rl, 32))
    );
    let mut prod = vec![0.0; hw * 32];
    println!(
        "gx gemm:     {:.2} ms",
        time_ms(reps, || gemm::gemm(&mut prod, &col, &w, hw, rl, 32))
    );
    let mut t = Tensor::zeros(&[32, 28, 28]);
    println!(
        "alloc+relu:  {:.3} ms",
        time_ms(reps, || {
            let r = t.map(|x| if x > 0.0 { x } else { 0.0 });
            t = r;
        })
    );
}
