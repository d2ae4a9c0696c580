//! Deterministic parallel trajectory ensembles.
//!
//! Every trajectory owns an independent counter-based RNG stream derived
//! from (master seed, trajectory index), so the ensemble is reproducible
//! regardless of scheduling. Reduction runs over fixed-size index batches
//! merged in batch order through a reorder buffer; floating-point sums are
//! therefore grouped identically for any worker count, which makes
//! aggregate outputs bit-for-bit stable from 1 worker to many.

use crate::lattice::LatticeSpec;
use crate::observables::{EnsembleStats, WindowAccumulator};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;

pub enum TrajOutcome {
    Ok,
    Divergent { t: f64 },
}

/// A stochastic trajectory engine: jump unraveling or cumulant integrator.
pub trait Engine: Sync {
    fn lattice(&self) -> &LatticeSpec;

    /// Whether windowed collective fourth moments should be accumulated.
    fn with_fourth_moments(&self) -> bool {
        false
    }

    /// Run one full trajectory, feeding windowed samples into `acc`.
    fn run_trajectory(
        &self,
        index: u64,
        rng: &mut ChaCha12Rng,
        acc: &mut WindowAccumulator,
    ) -> TrajOutcome;
}

#[derive(Debug, Clone, Copy)]
pub struct EnsembleOptions {
    pub n_traj: usize,
    pub seed: u64,
    pub workers: usize,
}

/// Trajectories per reduction batch. Fixed (never derived from the worker
/// count) so that partial-sum grouping is scheduling-independent.
const BATCH: usize = 8;

pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn run_batch<E: Engine>(engine: &E, batch: usize, n_traj: usize, seed: u64) -> EnsembleStats {
    let lattice = engine.lattice().clone();
    let mut partial = EnsembleStats::empty(lattice.clone());
    let lo = batch * BATCH;
    let hi = ((batch + 1) * BATCH).min(n_traj);
    for index in lo..hi {
        let index = index as u64;
        let mut rng = trajectory_rng(seed, index);
        let mut acc = WindowAccumulator::new(&lattice, engine.with_fourth_moments());
        match engine.run_trajectory(index, &mut rng, &mut acc) {
            TrajOutcome::Ok => {
                let (record, mats) = acc.finish(index);
                partial.push_ok(record, &mats);
            }
            TrajOutcome::Divergent { t } => {
                partial.push_divergent(index, t, acc.samples());
            }
        }
    }
    partial
}

pub fn run_ensemble<E: Engine>(engine: &E, opts: EnsembleOptions) -> EnsembleStats {
    let workers = opts.workers.max(1);
    let n_batches = opts.n_traj.div_ceil(BATCH);
    if workers == 1 || n_batches <= 1 {
        let mut total = EnsembleStats::empty(engine.lattice().clone());
        for b in 0..n_batches {
            total = total.merge(run_batch(engine, b, opts.n_traj, opts.seed));
        }
        return total;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");
    let (tx, rx) = std::sync::mpsc::channel::<(usize, EnsembleStats)>();
    let mut total = Some(EnsembleStats::empty(engine.lattice().clone()));
    std::thread::scope(|scope| {
        let n_traj = opts.n_traj;
        let seed = opts.seed;
        scope.spawn(move || {
            pool.install(|| {
                (0..n_batches).into_par_iter().for_each_with(tx, |tx, b| {
                    let partial = run_batch(engine, b, n_traj, seed);
                    // receiver outlives all senders; ignore shutdown races
                    let _ = tx.send((b, partial));
                });
            });
        });
        // merge strictly in batch order via a reorder buffer
        let mut pending: BTreeMap<usize, EnsembleStats> = BTreeMap::new();
        let mut next = 0usize;
        for (b, partial) in rx.iter() {
            pending.insert(b, partial);
            while let Some(p) = pending.remove(&next) {
                total = Some(total.take().expect("present").merge(p));
                next += 1;
            }
        }
    });
    total.expect("present")
}

/// Worker count from `SPINTRAJ_WORKERS`, defaulting to the machine's
/// available parallelism.
pub fn workers_from_env() -> usize {
    std::env::var("SPINTRAJ_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&w| w >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|p| p.get())
                .unwrap_or(1)
        })
}
