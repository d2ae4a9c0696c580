//! Per-step timing probe for the cumulant integrator across lattice sizes.
//!
//! Run: cargo run --release -p spintraj --example stepbench

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use spintraj::lattice::{Boundary, LatticeSpec};
use spintraj::model::{ModelParams, Problem};
use spintraj::cumulant::CumulantState;
use spintraj::qsd::{CumulantIntegrator, CumulantOptions};
use std::time::Instant;

fn bench(l: usize, order: usize, eta: f64, cov_noise: bool, steps: usize) -> f64 {
    let lattice = LatticeSpec::new(l, l, Boundary::Periodic);
    let params = ModelParams::new(0.9, 1.06, 1.0);
    let problem = Problem::new(lattice, params);
    let opts = CumulantOptions {
        order,
        eta,
        include_cov_noise: cov_noise,
        dt: 1e-3,
        ..CumulantOptions::default()
    };
    let integ = CumulantIntegrator::new(problem, opts);
    let mut st = CumulantState::all_down(l * l, order);
    let mut scr = integ.scratch();
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    // warmup
    for _ in 0..steps.min(50) {
        integ.step(&mut st, &mut scr, &mut rng);
    }
    let t0 = Instant::now();
    for _ in 0..steps {
        integ.step(&mut st, &mut scr, &mut rng);
    }
    t0.elapsed().as_secs_f64() / steps as f64
}

fn main() {
    println!("{:>3} {:>5} {:>3} {:>9} {:>12}", "L", "order", "eta", "cov", "us/step");
    for &l in &[4usize, 5, 6, 7, 8] {
        let steps = if l >= 7 { 400 } else { 1500 };
        let t = bench(l, 2, 1.0, false, steps);
        println!("{:>3} {:>5} {:>3} {:>9} {:>12.1}", l, 2, 1, "off", t * 1e6);
        let t = bench(l, 2, 1.0, true, steps);
        println!("{:>3} {:>5} {:>3} {:>9} {:>12.1}", l, 2, 1, "on", t * 1e6);
    }
    for &l in &[4usize, 8] {
        let t = bench(l, 1, 1.0, false, 3000);
        println!("{:>3} {:>5} {:>3} {:>9} {:>12.1}", l, 1, 1, "off", t * 1e6);
    }
    let t = bench(6, 2, 0.0, false, 1500);
    println!("{:>3} {:>5} {:>3} {:>9} {:>12.1}", 6, 2, 0, "det", t * 1e6);
}
