//! Quantum-jump (Monte Carlo wave function) unraveling of the master
//! equation on the exact Hilbert space.
//!
//! Between jumps the state follows the non-Hermitian drift
//! `-i H - (gamma/2) sum_j n_j` under classical RK4. A single uniform
//! threshold is drawn per waiting period; when the accumulated survival
//! probability (squared norm, tracked across renormalizations) falls below
//! it, one site is chosen with probability proportional to its excited
//! weight, the lowering operator is applied, and the threshold is redrawn.

use crate::ensemble::{Engine, TrajOutcome};
use crate::exact::{CVec, ExactSpace};
use crate::lattice::{Axis, LatticeSpec, AXES};
use crate::observables::WindowAccumulator;
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone, Copy)]
pub struct JumpOptions {
    pub dt: f64,
    pub t_max: f64,
    /// Observables are sampled for `window.0 <= t <= window.1`.
    pub window: (f64, f64),
    pub record_every: usize,
    pub renormalize_every: usize,
}

impl Default for JumpOptions {
    fn default() -> Self {
        JumpOptions {
            dt: 1e-3,
            t_max: 150.0,
            window: (75.0, 150.0),
            record_every: 1,
            renormalize_every: 100,
        }
    }
}

/// RK4 stage storage for state vectors.
pub struct VecRk4 {
    k1: CVec,
    k2: CVec,
    k3: CVec,
    k4: CVec,
    stage: CVec,
}

impl VecRk4 {
    pub fn new(dim: usize) -> Self {
        let z = || Array1::zeros(dim);
        VecRk4 {
            k1: z(),
            k2: z(),
            k3: z(),
            k4: z(),
            stage: z(),
        }
    }
}

/// One RK4 step of the deterministic between-jump drift.
pub fn drift_rk4_step(space: &ExactSpace, psi: &mut CVec, dt: f64, ws: &mut VecRk4) {
    space.jump_drift(psi, &mut ws.k1);
    ws.stage.assign(psi);
    ws.stage.scaled_add(Complex64::new(0.5 * dt, 0.0), &ws.k1);
    space.jump_drift(&ws.stage, &mut ws.k2);
    ws.stage.assign(psi);
    ws.stage.scaled_add(Complex64::new(0.5 * dt, 0.0), &ws.k2);
    space.jump_drift(&ws.stage, &mut ws.k3);
    ws.stage.assign(psi);
    ws.stage.scaled_add(Complex64::new(dt, 0.0), &ws.k3);
    space.jump_drift(&ws.stage, &mut ws.k4);
    let s = dt / 6.0;
    for b in 0..psi.len() {
        psi[b] += s * (ws.k1[b] + 2.0 * (ws.k2[b] + ws.k3[b]) + ws.k4[b]);
    }
}

pub fn norm_sq(psi: &CVec) -> f64 {
    psi.iter().map(|z| z.norm_sqr()).sum()
}

fn normalize(psi: &mut CVec) -> f64 {
    let n2 = norm_sq(psi);
    let inv = 1.0 / n2.sqrt();
    for z in psi.iter_mut() {
        *z *= inv;
    }
    n2
}

/// Excited-state weight of each site: `w_l = sum_{b: bit l set} |psi_b|^2`.
pub fn site_weights(n: usize, psi: &CVec) -> Vec<f64> {
    let mut w = vec![0.0; n];
    for (b, z) in psi.iter().enumerate() {
        let p = z.norm_sqr();
        if p == 0.0 {
            continue;
        }
        let mut bits = b;
        while bits != 0 {
            let l = bits.trailing_zeros() as usize;
            w[l] += p;
            bits &= bits - 1;
        }
    }
    w
}

/// Pick the jump site from the weight table with one uniform draw.
pub fn select_site(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let mut target = u * total;
    for (l, &w) in weights.iter().enumerate() {
        target -= w;
        if target <= 0.0 {
            return l;
        }
    }
    weights.len() - 1
}

/// Apply `sigma^-_site` and normalize. Returns false when the site carried
/// no excited weight (cannot happen for a jump chosen from the weights).
pub fn apply_lowering(site: usize, psi: &mut CVec) -> bool {
    let mask = 1usize << site;
    let dim = psi.len();
    let mut w = 0.0;
    for b in 0..dim {
        if b & mask != 0 {
            let z = psi[b];
            w += z.norm_sqr();
            psi[b ^ mask] = z;
        }
    }
    for b in 0..dim {
        if b & mask != 0 {
            psi[b] = Complex64::new(0.0, 0.0);
        }
    }
    if w <= 0.0 {
        return false;
    }
    let inv = 1.0 / w.sqrt();
    for z in psi.iter_mut() {
        *z *= inv;
    }
    true
}

fn fresh_threshold<R: Rng>(rng: &mut R) -> f64 {
    // (0, 1]: a zero threshold would never fire, a unit one fires instantly
    1.0 - rng.gen::<f64>()
}

/// Instantaneous site means and connected pair table of a normalized state.
pub fn state_tables(space: &ExactSpace, psi: &CVec, means: &mut [f64], cq: &mut Array2<f64>) {
    let n = space.n;
    for a in AXES {
        for i in 0..n {
            means[a.idx() * n + i] = space.pauli_string_expect_vec(psi, &[(i, a)]).re;
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            for a in AXES {
                for b in AXES {
                    let tot = space
                        .pauli_string_expect_vec(psi, &[(i, a), (j, b)])
                        .re;
                    cq[[a.idx() * n + i, b.idx() * n + j]] =
                        tot - means[a.idx() * n + i] * means[b.idx() * n + j];
                }
            }
        }
    }
}

pub struct JumpOutcome {
    pub n_jumps: usize,
}

/// Run one trajectory from the all-down state, sampling windowed
/// observables into `acc`.
pub fn run_jump_trajectory<R: Rng>(
    space: &ExactSpace,
    opts: &JumpOptions,
    rng: &mut R,
    acc: &mut WindowAccumulator,
) -> JumpOutcome {
    let dim = space.dim;
    let n = space.n;
    let mut psi = space.psi_all_down();
    let mut ws = VecRk4::new(dim);
    let mut zeta = fresh_threshold(rng);
    let mut survival = 1.0; // squared-norm factors absorbed at renormalizations
    let mut n_jumps = 0;
    let n_steps = (opts.t_max / opts.dt).round() as usize;
    let mut means = vec![0.0; 3 * n];
    let mut cq = Array2::zeros((3 * n, 3 * n));
    let mut normalized = psi.clone();

    for step in 1..=n_steps {
        drift_rk4_step(space, &mut psi, opts.dt, &mut ws);
        let t = step as f64 * opts.dt;

        if survival * norm_sq(&psi) < zeta {
            normalize(&mut psi);
            let w = site_weights(n, &psi);
            let site = select_site(&w, rng.gen::<f64>());
            apply_lowering(site, &mut psi);
            n_jumps += 1;
            survival = 1.0;
            zeta = fresh_threshold(rng);
        } else if step % opts.renormalize_every == 0 {
            survival *= normalize(&mut psi);
        }

        if t >= opts.window.0 && t <= opts.window.1 && step % opts.record_every == 0 {
            normalized.assign(&psi);
            normalize(&mut normalized);
            state_tables(space, &normalized, &mut means, &mut cq);
            acc.record(&means, Some(&cq));
        }
    }
    JumpOutcome { n_jumps }
}

/// Ensemble-facing wrapper.
pub struct JumpEngine {
    pub space: ExactSpace,
    pub opts: JumpOptions,
}

impl Engine for JumpEngine {
    fn lattice(&self) -> &LatticeSpec {
        &self.space.problem.lattice
    }

    fn run_trajectory(
        &self,
        _index: u64,
        rng: &mut ChaCha12Rng,
        acc: &mut WindowAccumulator,
    ) -> TrajOutcome {
        run_jump_trajectory(&self.space, &self.opts, rng, acc);
        TrajOutcome::Ok
    }
}

#[allow(dead_code)]
fn _axis_use(_: Axis) {}
