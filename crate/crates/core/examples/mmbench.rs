// Throughput probe for the dense products in the covariance propagator.
use faer::{Mat, Parallelism};
use std::time::Instant;

fn main() {
    for n in [16usize, 25, 36, 49, 64] {
        let (r, c) = (3 * n, 2 * n);
        let a = Mat::<f64>::from_fn(r, c, |i, j| ((i * 7 + j * 13) % 11) as f64 * 0.1);
        let mut out = Mat::<f64>::zeros(r, r);
        let reps = (2e9 / (2.0 * r as f64 * r as f64 * c as f64)) as usize + 1;
        let t0 = Instant::now();
        for _ in 0..reps {
            faer::linalg::matmul::matmul(
                out.as_mut(),
                a.as_ref(),
                a.transpose(),
                None,
                1.0,
                Parallelism::None,
            );
        }
        let dt = t0.elapsed().as_secs_f64() / reps as f64;
        let gf = 2.0 * r as f64 * r as f64 * c as f64 / dt / 1e9;
        println!("N={n:3} ({r}x{c})*T: {:.3} ms  {gf:.1} GF/s", dt * 1e3);
    }
    // triangular (syrk-like) via faer's rank update? plain matmul number is what matters.
}
