//! C ABI for the spintraj trajectory library.
//!
//! Conventions: every entry point returns an `StjStatus` code (0 = success)
//! and writes results through out-pointers; handles are opaque and must be
//! released with their matching `_free` function. The generated header lives
//! in `include/spintraj.h`.

use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;

use spintraj::ensemble::{run_ensemble, workers_from_env, EnsembleOptions};
use spintraj::exact::{ExactSpace, SteadyStateOptions};
use spintraj::jump::{JumpEngine, JumpOptions};
use spintraj::lattice::{Boundary, LatticeSpec};
use spintraj::model::{ModelParams, Problem};
use spintraj::observables::{EnsembleStats, RECORD_SCALAR_NAMES};
use spintraj::output::write_records_csv_path;
use spintraj::qsd::{CumulantEngine, CumulantOptions};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StjStatus {
    StjOk = 0,
    /// A required pointer argument was null.
    StjErrNull = 1,
    /// A parameter was out of range (sizes, rates, window, order).
    StjErrInvalid = 2,
    /// Lattice too large for the requested backend.
    StjErrTooLarge = 3,
    /// Filesystem error while writing output.
    StjErrIo = 4,
    /// No surviving trajectories, nothing to average.
    StjErrEmpty = 5,
    /// A string argument was not valid UTF-8, or an unknown name.
    StjErrName = 6,
    /// Unexpected internal failure.
    StjErrInternal = 7,
}

use StjStatus::*;

/// Lattice and coupling parameters shared by all backends.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct StjParams {
    pub lx: u32,
    pub ly: u32,
    /// Nonzero for periodic boundaries, zero for open.
    pub periodic: i32,
    pub jx: f64,
    pub jy: f64,
    pub jz: f64,
    /// Local decay rate; must be positive.
    pub gamma: f64,
}

/// Integration controls for the stochastic backends.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct StjRunConfig {
    pub dt: f64,
    pub t_max: f64,
    pub window_start: f64,
    /// Window end; values <= 0 mean "until t_max".
    pub window_end: f64,
    /// Sample observables every this many steps (>= 1).
    pub record_every: u32,
    pub n_traj: u64,
    pub seed: u64,
    /// Worker threads; 0 picks SPINTRAJ_WORKERS or the CPU count.
    pub workers: u32,
}

/// A completed trajectory ensemble (opaque).
pub struct StjEnsemble {
    stats: EnsembleStats,
}

fn problem_from(p: &StjParams) -> Result<Problem, StjStatus> {
    if p.lx == 0 || p.ly == 0 {
        return Err(StjErrInvalid);
    }
    if !(p.gamma > 0.0) || !p.jx.is_finite() || !p.jy.is_finite() || !p.jz.is_finite() {
        return Err(StjErrInvalid);
    }
    let boundary = if p.periodic != 0 {
        Boundary::Periodic
    } else {
        Boundary::Open
    };
    let lattice = LatticeSpec::new(p.lx as usize, p.ly as usize, boundary);
    let model = ModelParams {
        jx: p.jx,
        jy: p.jy,
        jz: p.jz,
        gamma: p.gamma,
    };
    Ok(Problem::new(lattice, model))
}

fn check_run(cfg: &StjRunConfig) -> Result<(f64, EnsembleOptions), StjStatus> {
    if !(cfg.dt > 0.0) || !(cfg.t_max > cfg.window_start) || cfg.window_start < 0.0 {
        return Err(StjErrInvalid);
    }
    if cfg.record_every == 0 || cfg.n_traj == 0 {
        return Err(StjErrInvalid);
    }
    let window_end = if cfg.window_end > 0.0 {
        cfg.window_end
    } else {
        cfg.t_max
    };
    if window_end <= cfg.window_start {
        return Err(StjErrInvalid);
    }
    let workers = if cfg.workers == 0 {
        workers_from_env()
    } else {
        cfg.workers as usize
    };
    Ok((
        window_end,
        EnsembleOptions {
            n_traj: cfg.n_traj as usize,
            seed: cfg.seed,
            workers,
        },
    ))
}

fn run_guarded<F: FnOnce() -> EnsembleStats>(out: *mut *mut StjEnsemble, f: F) -> StjStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(stats) => {
            let handle = Box::new(StjEnsemble { stats });
            unsafe { *out = Box::into_raw(handle) };
            StjOk
        }
        Err(_) => StjErrInternal,
    }
}

/// Run a truncated-cumulant trajectory ensemble.
///
/// `order` is 1 (site means) or 2 (means plus cross-site covariances); `eta`
/// is the detection efficiency in [0, 1] with 0 meaning deterministic
/// evolution; nonzero `cov_noise` adds the multiplicative noise of the
/// covariance equation; `init_kick` tilts the initial all-down state by a
/// uniform transverse component.
#[no_mangle]
pub unsafe extern "C" fn stj_run_cumulant(
    params: *const StjParams,
    cfg: *const StjRunConfig,
    order: u32,
    eta: f64,
    cov_noise: i32,
    init_kick: f64,
    fourth_moments: i32,
    out: *mut *mut StjEnsemble,
) -> StjStatus {
    if params.is_null() || cfg.is_null() || out.is_null() {
        return StjErrNull;
    }
    let (params, cfg) = (&*params, &*cfg);
    let problem = match problem_from(params) {
        Ok(p) => p,
        Err(e) => return e,
    };
    if !(order == 1 || order == 2) || !(0.0..=1.0).contains(&eta) || !init_kick.is_finite() {
        return StjErrInvalid;
    }
    let (window_end, ens) = match check_run(cfg) {
        Ok(v) => v,
        Err(e) => return e,
    };
    let opts = CumulantOptions {
        order: order as usize,
        eta,
        include_cov_noise: cov_noise != 0,
        dt: cfg.dt,
        t_max: cfg.t_max,
        window: (cfg.window_start, window_end),
        record_every: cfg.record_every as usize,
        init_kick,
        with_fourth_moments: fourth_moments != 0,
    };
    run_guarded(out, || {
        run_ensemble(&CumulantEngine::new(problem, opts), ens)
    })
}

/// Run a quantum-jump (wavefunction Monte Carlo) ensemble. Limited to
/// lattices small enough for dense state vectors.
#[no_mangle]
pub unsafe extern "C" fn stj_run_jump(
    params: *const StjParams,
    cfg: *const StjRunConfig,
    out: *mut *mut StjEnsemble,
) -> StjStatus {
    if params.is_null() || cfg.is_null() || out.is_null() {
        return StjErrNull;
    }
    let (params, cfg) = (&*params, &*cfg);
    let problem = match problem_from(params) {
        Ok(p) => p,
        Err(e) => return e,
    };
    let (window_end, ens) = match check_run(cfg) {
        Ok(v) => v,
        Err(e) => return e,
    };
    let space = match ExactSpace::new(problem) {
        Ok(s) => s,
        Err(_) => return StjErrTooLarge,
    };
    let engine = JumpEngine {
        space,
        opts: JumpOptions {
            dt: cfg.dt,
            t_max: cfg.t_max,
            window: (cfg.window_start, window_end),
            record_every: cfg.record_every as usize,
            ..JumpOptions::default()
        },
    };
    run_guarded(out, || run_ensemble(&engine, ens))
}

/// Release an ensemble handle. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn stj_ensemble_free(handle: *mut StjEnsemble) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Total trajectories in the ensemble (surviving + divergent).
#[no_mangle]
pub unsafe extern "C" fn stj_ensemble_n_total(handle: *const StjEnsemble) -> u64 {
    if handle.is_null() {
        return 0;
    }
    (*handle).stats.n_total() as u64
}

/// Trajectories flagged divergent and excluded from averages.
#[no_mangle]
pub unsafe extern "C" fn stj_ensemble_n_divergent(handle: *const StjEnsemble) -> u64 {
    if handle.is_null() {
        return 0;
    }
    (*handle).stats.n_divergent() as u64
}

/// Number of named windowed scalars per trajectory.
#[no_mangle]
pub extern "C" fn stj_scalar_count() -> u32 {
    RECORD_SCALAR_NAMES.len() as u32
}

/// Name of scalar `idx`, or null when out of range. The returned pointer is
/// static; do not free it.
#[no_mangle]
pub extern "C" fn stj_scalar_name(idx: u32) -> *const c_char {
    static NAMES: OnceLock<Vec<CString>> = OnceLock::new();
    let names = NAMES.get_or_init(|| {
        RECORD_SCALAR_NAMES
            .iter()
            .map(|n| CString::new(*n).expect("static names"))
            .collect()
    });
    match names.get(idx as usize) {
        Some(s) => s.as_ptr(),
        None => std::ptr::null(),
    }
}

fn scalar_index(name: &str) -> Option<usize> {
    RECORD_SCALAR_NAMES.iter().position(|n| *n == name)
}

fn write_pair(mean: *mut f64, se: *mut f64, v: (f64, f64)) {
    unsafe {
        if !mean.is_null() {
            *mean = v.0;
        }
        if !se.is_null() {
            *se = v.1;
        }
    }
}

/// Ensemble mean and standard error of a named windowed scalar (see
/// `stj_scalar_name` for the table).
#[no_mangle]
pub unsafe extern "C" fn stj_ensemble_scalar(
    handle: *const StjEnsemble,
    name: *const c_char,
    mean: *mut f64,
    se: *mut f64,
) -> StjStatus {
    if handle.is_null() || name.is_null() {
        return StjErrNull;
    }
    let name = match CStr::from_ptr(name).to_str() {
        Ok(s) => s,
        Err(_) => return StjErrName,
    };
    let Some(idx) = scalar_index(name) else {
        return StjErrName;
    };
    match (*handle).stats.scalar_stats(|s| s.values()[idx]) {
        Ok(v) => {
            write_pair(mean, se, v);
            StjOk
        }
        Err(_) => StjErrEmpty,
    }
}

/// Structure factor `S^{phi phi}` at wave vector 0 (or `(pi,pi)` when
/// `staggered` is nonzero) with its trajectory-level standard error.
#[no_mangle]
pub unsafe extern "C" fn stj_ensemble_structure_factor(
    handle: *const StjEnsemble,
    phi: f64,
    staggered: i32,
    value: *mut f64,
    se: *mut f64,
) -> StjStatus {
    if handle.is_null() {
        return StjErrNull;
    }
    if !phi.is_finite() {
        return StjErrInvalid;
    }
    match (*handle).stats.structure_factor(phi, staggered != 0) {
        Ok(v) => {
            write_pair(value, se, v);
            StjOk
        }
        Err(_) => StjErrEmpty,
    }
}

/// Quadrature angle maximizing the ensemble-mean structure factor.
#[no_mangle]
pub unsafe extern "C" fn stj_ensemble_optimal_phi(
    handle: *const StjEnsemble,
    staggered: i32,
    phi: *mut f64,
) -> StjStatus {
    if handle.is_null() || phi.is_null() {
        return StjErrNull;
    }
    match (*handle).stats.optimal_phi(staggered != 0) {
        Ok(v) => {
            *phi = v;
            StjOk
        }
        Err(_) => StjErrEmpty,
    }
}

/// Quantum Fisher information bound `4 F_Q / N` at quadrature angle `phi`.
#[no_mangle]
pub unsafe extern "C" fn stj_ensemble_fisher_bound(
    handle: *const StjEnsemble,
    phi: f64,
    value: *mut f64,
    se: *mut f64,
) -> StjStatus {
    if handle.is_null() {
        return StjErrNull;
    }
    if !phi.is_finite() {
        return StjErrInvalid;
    }
    match (*handle).stats.fq4_over_n(phi, false) {
        Ok(v) => {
            write_pair(value, se, v);
            StjOk
        }
        Err(_) => StjErrEmpty,
    }
}

/// Inverse Wineland squeezing parameter `xi_R^{-2}` for rotations about the
/// in-plane axis `phi` (jackknifed standard error).
#[no_mangle]
pub unsafe extern "C" fn stj_ensemble_squeezing(
    handle: *const StjEnsemble,
    phi: f64,
    value: *mut f64,
    se: *mut f64,
) -> StjStatus {
    if handle.is_null() {
        return StjErrNull;
    }
    if !phi.is_finite() {
        return StjErrInvalid;
    }
    match (*handle).stats.squeezing_inverse(phi) {
        Ok(v) => {
            write_pair(value, se, v);
            StjOk
        }
        Err(_) => StjErrEmpty,
    }
}

/// Write the per-trajectory record table as CSV.
#[no_mangle]
pub unsafe extern "C" fn stj_ensemble_write_records_csv(
    handle: *const StjEnsemble,
    path: *const c_char,
) -> StjStatus {
    if handle.is_null() || path.is_null() {
        return StjErrNull;
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(s) => s,
        Err(_) => return StjErrName,
    };
    match write_records_csv_path(std::path::Path::new(path), &(*handle).stats) {
        Ok(()) => StjOk,
        Err(_) => StjErrIo,
    }
}

/// Exact master-equation steady state on a small lattice: magnetization
/// `m^z`, the x structure factor, and the optimal-angle structure factor.
/// Any out-pointer may be null to skip that value.
#[no_mangle]
pub unsafe extern "C" fn stj_exact_steady(
    params: *const StjParams,
    tol: f64,
    t_max: f64,
    mz: *mut f64,
    sxx0: *mut f64,
    sphi_opt: *mut f64,
) -> StjStatus {
    if params.is_null() {
        return StjErrNull;
    }
    let problem = match problem_from(&*params) {
        Ok(p) => p,
        Err(e) => return e,
    };
    if !(tol > 0.0) || !(t_max > 0.0) {
        return StjErrInvalid;
    }
    let space = match ExactSpace::new(problem) {
        Ok(s) => s,
        Err(_) => return StjErrTooLarge,
    };
    let result = catch_unwind(AssertUnwindSafe(|| {
        let mut rho = space.rho_all_down();
        space.evolve_to_steady_state(
            &mut rho,
            &SteadyStateOptions {
                tol,
                t_max,
                ..SteadyStateOptions::default()
            },
        );
        let n = space.n;
        let mut z = 0.0;
        for i in 0..n {
            z += space.site_mean(&rho, i, spintraj::lattice::Axis::Z);
        }
        z /= n as f64;
        let sxx = space.structure_factor(&rho, 0.0, false);
        let (_, sphi) = space.optimal_structure_factor(&rho, false);
        (z, sxx, sphi)
    }));
    match result {
        Ok((z, sxx, sphi)) => {
            if !mz.is_null() {
                *mz = z;
            }
            if !sxx0.is_null() {
                *sxx0 = sxx;
            }
            if !sphi_opt.is_null() {
                *sphi_opt = sphi;
            }
            StjOk
        }
        Err(_) => StjErrInternal,
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn stj_version() -> *const c_char {
    static VERSION: OnceLock<CString> = OnceLock::new();
    VERSION
        .get_or_init(|| CString::new(env!("CARGO_PKG_VERSION")).expect("version"))
        .as_ptr()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(l: u32, jy: f64) -> StjParams {
        StjParams {
            lx: l,
            ly: l,
            periodic: 1,
            jx: 0.9,
            jy,
            jz: 1.0,
            gamma: 1.0,
        }
    }

    fn cfg(n_traj: u64) -> StjRunConfig {
        StjRunConfig {
            dt: 2e-3,
            t_max: 10.0,
            window_start: 5.0,
            window_end: 0.0,
            record_every: 1,
            n_traj,
            seed: 7,
            workers: 1,
        }
    }

    fn run_cumulant(p: &StjParams, c: &StjRunConfig) -> *mut StjEnsemble {
        let mut handle: *mut StjEnsemble = std::ptr::null_mut();
        let st = unsafe { stj_run_cumulant(p, c, 2, 1.0, 0, 0.0, 0, &mut handle) };
        assert_eq!(st, StjOk);
        assert!(!handle.is_null());
        handle
    }

    fn scalar(handle: *const StjEnsemble, name: &str) -> (f64, f64) {
        let cname = CString::new(name).unwrap();
        let (mut mean, mut se) = (f64::NAN, f64::NAN);
        let st = unsafe { stj_ensemble_scalar(handle, cname.as_ptr(), &mut mean, &mut se) };
        assert_eq!(st, StjOk, "scalar {name}");
        (mean, se)
    }

    #[test]
    fn cumulant_run_matches_direct_library_call() {
        let p = params(2, 1.05);
        let c = cfg(12);
        let handle = run_cumulant(&p, &c);

        let problem = Problem::new(
            LatticeSpec::new(2, 2, Boundary::Periodic),
            ModelParams::new(0.9, 1.05, 1.0),
        );
        let opts = CumulantOptions {
            order: 2,
            eta: 1.0,
            include_cov_noise: false,
            dt: 2e-3,
            t_max: 10.0,
            window: (5.0, 10.0),
            record_every: 1,
            init_kick: 0.0,
            with_fourth_moments: false,
        };
        let direct = run_ensemble(
            &CumulantEngine::new(problem, opts),
            EnsembleOptions {
                n_traj: 12,
                seed: 7,
                workers: 1,
            },
        );
        let want = direct.scalar_stats(|s| s.mz).unwrap();
        let got = scalar(handle, "mz");
        assert_eq!(got.0.to_bits(), want.0.to_bits());
        assert_eq!(got.1.to_bits(), want.1.to_bits());
        assert_eq!(unsafe { stj_ensemble_n_total(handle) }, 12);

        unsafe { stj_ensemble_free(handle) };
    }

    #[test]
    fn observable_getters_return_finite_values() {
        let p = params(2, 1.05);
        let handle = run_cumulant(&p, &cfg(16));

        let mut phi = f64::NAN;
        assert_eq!(
            unsafe { stj_ensemble_optimal_phi(handle, 0, &mut phi) },
            StjOk
        );
        assert!(phi.is_finite());

        let (mut v, mut se) = (f64::NAN, f64::NAN);
        assert_eq!(
            unsafe { stj_ensemble_structure_factor(handle, phi, 0, &mut v, &mut se) },
            StjOk
        );
        assert!(v.is_finite() && se.is_finite() && v > 0.0);

        assert_eq!(
            unsafe { stj_ensemble_fisher_bound(handle, phi, &mut v, &mut se) },
            StjOk
        );
        assert!(v.is_finite() && v > 0.0);

        assert_eq!(
            unsafe { stj_ensemble_squeezing(handle, phi, &mut v, &mut se) },
            StjOk
        );
        assert!(!v.is_nan());

        unsafe { stj_ensemble_free(handle) };
    }

    #[test]
    fn jump_backend_runs_and_rejects_large_lattices() {
        let p = params(2, 1.05);
        let c = cfg(6);
        let mut handle: *mut StjEnsemble = std::ptr::null_mut();
        assert_eq!(unsafe { stj_run_jump(&p, &c, &mut handle) }, StjOk);
        assert_eq!(unsafe { stj_ensemble_n_total(handle) }, 6);
        assert_eq!(unsafe { stj_ensemble_n_divergent(handle) }, 0);
        unsafe { stj_ensemble_free(handle) };

        let big = params(4, 1.05); // 16 sites exceeds the dense-vector limit
        let mut handle: *mut StjEnsemble = std::ptr::null_mut();
        assert_eq!(
            unsafe { stj_run_jump(&big, &c, &mut handle) },
            StjErrTooLarge
        );
        assert!(handle.is_null());
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        let p = params(2, 1.05);
        let c = cfg(8);
        let mut handle: *mut StjEnsemble = std::ptr::null_mut();
        unsafe {
            assert_eq!(
                stj_run_cumulant(std::ptr::null(), &c, 2, 1.0, 0, 0.0, 0, &mut handle),
                StjErrNull
            );
            assert_eq!(
                stj_run_cumulant(&p, &c, 2, 1.0, 0, 0.0, 0, std::ptr::null_mut()),
                StjErrNull
            );
            assert_eq!(
                stj_run_cumulant(&p, &c, 3, 1.0, 0, 0.0, 0, &mut handle),
                StjErrInvalid
            );
            assert_eq!(
                stj_run_cumulant(&p, &c, 2, 1.5, 0, 0.0, 0, &mut handle),
                StjErrInvalid
            );
            let mut bad = c;
            bad.dt = 0.0;
            assert_eq!(
                stj_run_cumulant(&p, &bad, 2, 1.0, 0, 0.0, 0, &mut handle),
                StjErrInvalid
            );
            let mut bad = c;
            bad.window_start = 20.0; // beyond t_max
            assert_eq!(
                stj_run_cumulant(&p, &bad, 2, 1.0, 0, 0.0, 0, &mut handle),
                StjErrInvalid
            );
            let mut bad = p;
            bad.gamma = 0.0;
            assert_eq!(
                stj_run_cumulant(&bad, &c, 2, 1.0, 0, 0.0, 0, &mut handle),
                StjErrInvalid
            );
        }
        assert!(handle.is_null());
    }

    #[test]
    fn scalar_name_table_is_complete_and_checked() {
        let n = stj_scalar_count();
        assert_eq!(n as usize, RECORD_SCALAR_NAMES.len());
        let handle = run_cumulant(&params(2, 0.9), &cfg(8));
        for i in 0..n {
            let ptr = stj_scalar_name(i);
            assert!(!ptr.is_null());
            let name = unsafe { CStr::from_ptr(ptr) }.to_str().unwrap();
            assert_eq!(name, RECORD_SCALAR_NAMES[i as usize]);
            scalar(handle, name);
        }
        assert!(stj_scalar_name(n).is_null());

        let bogus = CString::new("not_a_scalar").unwrap();
        let st = unsafe {
            stj_ensemble_scalar(
                handle,
                bogus.as_ptr(),
                std::ptr::null_mut(),
                std::ptr::null_mut(),
            )
        };
        assert_eq!(st, StjErrName);
        unsafe { stj_ensemble_free(handle) };
    }

    #[test]
    fn records_csv_is_identical_to_direct_write() {
        let dir = tempfile::tempdir().unwrap();
        let via_ffi = dir.path().join("ffi.csv");
        let handle = run_cumulant(&params(2, 1.05), &cfg(10));
        let cpath = CString::new(via_ffi.to_str().unwrap()).unwrap();
        assert_eq!(
            unsafe { stj_ensemble_write_records_csv(handle, cpath.as_ptr()) },
            StjOk
        );

        let direct = dir.path().join("direct.csv");
        write_records_csv_path(&direct, unsafe { &(*handle).stats }).unwrap();
        assert_eq!(
            std::fs::read(&via_ffi).unwrap(),
            std::fs::read(&direct).unwrap()
        );
        unsafe { stj_ensemble_free(handle) };
    }

    #[test]
    fn exact_steady_matches_library() {
        let p = params(2, 1.05);
        let (mut mz, mut sxx, mut sphi) = (f64::NAN, f64::NAN, f64::NAN);
        let st = unsafe { stj_exact_steady(&p, 1e-9, 600.0, &mut mz, &mut sxx, &mut sphi) };
        assert_eq!(st, StjOk);

        let problem = Problem::new(
            LatticeSpec::new(2, 2, Boundary::Periodic),
            ModelParams::new(0.9, 1.05, 1.0),
        );
        let space = ExactSpace::new(problem).unwrap();
        let mut rho = space.rho_all_down();
        space.evolve_to_steady_state(&mut rho, &SteadyStateOptions::default());
        let want =
            (0..4).map(|i| space.site_mean(&rho, i, spintraj::lattice::Axis::Z)).sum::<f64>() / 4.0;
        assert!((mz - want).abs() < 1e-12);
        assert!((sxx - space.structure_factor(&rho, 0.0, false)).abs() < 1e-12);
        assert!(sphi >= sxx - 1e-12);

        let big = params(4, 1.05);
        assert_eq!(
            unsafe {
                stj_exact_steady(
                    &big,
                    1e-9,
                    600.0,
                    std::ptr::null_mut(),
                    std::ptr::null_mut(),
                    std::ptr::null_mut(),
                )
            },
            StjErrTooLarge
        );
    }

    #[test]
    fn version_is_a_static_c_string() {
        let v = unsafe { CStr::from_ptr(stj_version()) }.to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}
