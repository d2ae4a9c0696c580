//! Truncated-cumulant diffusive (quantum-state-diffusion) trajectory
//! integrator at closure orders 1 and 2.
//!
//! State per trajectory: site means `m_s^a` and, at order 2, the symmetric
//! cross-site covariance table `F^{ab}_{sm}` (same-site blocks are fixed by
//! Pauli algebra and never stored). The stochastic structure of the means and
//! the entire Ito drift of the covariance are carried by one `(3N) x (2N)`
//! matrix `Theta` over the per-site homodyne noise pair `(W^X_j, W^Y_j)`:
//!
//! * mean noise increment = `Theta . xi` with `xi ~ N(0, dt)` per component,
//! * Ito covariance drift = `-(Theta Theta^T) dt` on cross-site blocks.
//!
//! `Theta` has the local `3x2` block `B_s` on its site diagonal and the
//! covariance columns `(F^{ax}_{sj}, -F^{ay}_{sj})` off the diagonal, all
//! scaled by `sqrt(gamma eta / 2)`; detection efficiency `eta` therefore
//! scales the noise like `sqrt(eta)` and the Ito drift like `eta` with no
//! further bookkeeping. The optional multiplicative covariance noise is the
//! Jacobian `dB/dm` contracted against `F` with the same Wiener increments.
//!
//! Noise draw order is part of the API: for each site `j` in index order,
//! one standard normal for `W^X_j` then one for `W^Y_j`.

use crate::cumulant::CumulantState;
use crate::ensemble::{Engine, TrajOutcome};
use crate::lattice::{Axis, LatticeSpec, PauliProduct, AXES};
use crate::model::Problem;
use crate::observables::WindowAccumulator;
use faer::{Mat, Parallelism};
use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// Single-axis damping rates in units of gamma: transverse means decay at
/// gamma/2, the longitudinal one at gamma.
const DAMP: [f64; 3] = [0.5, 0.5, 1.0];

/// Means leaving `|m| <= DIVERGE_LIMIT` for `DIVERGE_STEPS` consecutive
/// steps (or any non-finite value) mark the trajectory divergent.
pub const DIVERGE_LIMIT: f64 = 1.5;
pub const DIVERGE_STEPS: usize = 100;

#[derive(Debug, Clone, Copy)]
pub struct CumulantOptions {
    /// Closure order: 1 (means only) or 2 (means + cross-site covariances).
    pub order: usize,
    /// Detection efficiency in [0, 1]; 0 gives the deterministic equations.
    pub eta: f64,
    /// Include the multiplicative noise of the covariance equation itself.
    pub include_cov_noise: bool,
    pub dt: f64,
    pub t_max: f64,
    pub window: (f64, f64),
    pub record_every: usize,
    /// Uniform transverse seed `m^x = kick` at t = 0 (deterministic runs
    /// need it to leave the trivial fixed point).
    pub init_kick: f64,
    pub with_fourth_moments: bool,
}

impl Default for CumulantOptions {
    fn default() -> Self {
        CumulantOptions {
            order: 2,
            eta: 1.0,
            include_cov_noise: false,
            dt: 1e-3,
            t_max: 150.0,
            window: (75.0, 150.0),
            record_every: 1,
            init_kick: 0.0,
            with_fourth_moments: false,
        }
    }
}

/// One Hamiltonian channel of the drift of axis alpha:
/// `sgn 2J (m_s^a m_{s'}^b + F^{ba}_{s's})` summed over neighbors `s'`,
/// with `a` the on-site and `b` the neighbor axis.
#[derive(Debug, Clone, Copy)]
struct Channel {
    a: usize,
    b: usize,
    /// `sgn * 2J`
    w: f64,
}

/// Local noise block `B_s` (rows x,y,z; columns W^X, W^Y), without the
/// `sqrt(gamma eta / 2)` prefactor.
pub fn b_matrix(mx: f64, my: f64, mz: f64) -> [[f64; 2]; 3] {
    [
        [1.0 + mz - mx * mx, mx * my],
        [-mx * my, -(1.0 + mz) + my * my],
        [-mx * (1.0 + mz), my * (1.0 + mz)],
    ]
}

/// Jacobians `dB[alpha][w] / dm^c` as two 3x3 matrices (w = X, Y).
pub fn b_jacobian(mx: f64, my: f64, mz: f64) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
    let jx = [
        [-2.0 * mx, 0.0, 1.0],
        [-my, -mx, 0.0],
        [-(1.0 + mz), 0.0, -mx],
    ];
    let jy = [
        [my, mx, 0.0],
        [0.0, 2.0 * my, -1.0],
        [0.0, 1.0 + mz, my],
    ];
    (jx, jy)
}

pub struct CumulantIntegrator {
    pub problem: Problem,
    pub opts: CumulantOptions,
    n: usize,
    gamma: f64,
    neighbors: Vec<Vec<usize>>,
    ch: [[Channel; 2]; 3],
}

/// Reusable per-trajectory working memory.
pub struct Scratch {
    dm: Vec<f64>,
    nm: Vec<f64>,
    /// neighbor-summed covariance blocks `NF[b*3+beta][s,m] = sum_{s' ~ s}
    /// F^{b beta}_{s'm}`
    nf: Vec<Array2<f64>>,
    g: Array2<f64>,
    df: Array2<f64>,
    ds: Array2<f64>,
    t1: Array2<f64>,
    theta: Mat<f64>,
    tth: Mat<f64>,
    xi: Vec<f64>,
    noise_m: Vec<f64>,
    bloc: Vec<[[f64; 2]; 3]>,
    det: Option<DetRk4>,
}

/// Stage storage for the deterministic (eta = 0) classical RK4 path.
struct DetRk4 {
    base: CumulantState,
    stage: CumulantState,
    k: Vec<(Vec<f64>, Option<Array2<f64>>)>,
}

impl CumulantIntegrator {
    pub fn new(problem: Problem, opts: CumulantOptions) -> Self {
        assert!(opts.order == 1 || opts.order == 2, "order must be 1 or 2");
        assert!((0.0..=1.0).contains(&opts.eta), "eta must be in [0, 1]");
        assert!(opts.dt > 0.0);
        let n = problem.lattice.n_sites();
        let neighbors = problem.lattice.neighbor_lists();
        let m = &problem.model;
        use Axis::*;
        // drift channels per target axis (on-site axis, neighbor axis, 2J sgn)
        let ch = [
            [
                Channel { a: Z.idx(), b: Y.idx(), w: 2.0 * m.jy },
                Channel { a: Y.idx(), b: Z.idx(), w: -2.0 * m.jz },
            ],
            [
                Channel { a: X.idx(), b: Z.idx(), w: 2.0 * m.jz },
                Channel { a: Z.idx(), b: X.idx(), w: -2.0 * m.jx },
            ],
            [
                Channel { a: Y.idx(), b: X.idx(), w: 2.0 * m.jx },
                Channel { a: X.idx(), b: Y.idx(), w: -2.0 * m.jy },
            ],
        ];
        CumulantIntegrator {
            gamma: m.gamma,
            n,
            neighbors,
            ch,
            problem,
            opts,
        }
    }

    pub fn scratch(&self) -> Scratch {
        let n = self.n;
        let d = 3 * n;
        let o2 = self.opts.order == 2;
        let sq = || {
            if o2 {
                Array2::zeros((d, d))
            } else {
                Array2::zeros((0, 0))
            }
        };
        let det = (self.opts.eta == 0.0).then(|| DetRk4 {
            base: CumulantState::all_down(n, self.opts.order),
            stage: CumulantState::all_down(n, self.opts.order),
            k: (0..4)
                .map(|_| (vec![0.0; d], o2.then(|| Array2::zeros((d, d)))))
                .collect(),
        });
        Scratch {
            dm: vec![0.0; d],
            nm: vec![0.0; d],
            nf: (0..if o2 { 9 } else { 0 })
                .map(|_| Array2::zeros((n, n)))
                .collect(),
            g: sq(),
            df: sq(),
            ds: sq(),
            t1: sq(),
            theta: if o2 && self.opts.eta > 0.0 {
                Mat::zeros(d, 2 * n)
            } else {
                Mat::zeros(0, 0)
            },
            tth: if o2 && self.opts.eta > 0.0 {
                Mat::zeros(d, d)
            } else {
                Mat::zeros(0, 0)
            },
            xi: vec![0.0; 2 * n],
            noise_m: vec![0.0; d],
            bloc: vec![[[0.0; 2]; 3]; n],
            det,
        }
    }

    /// Deterministic drift of means (into `scr.dm`) and, at order 2, of the
    /// covariance table (into `scr.df`). No Ito or noise terms.
    pub fn drift(&self, st: &CumulantState, scr: &mut Scratch) {
        let n = self.n;
        let g = self.gamma;
        let means = &st.means;

        // neighbor sums of means
        for a in 0..3 {
            for s in 0..n {
                let mut acc = 0.0;
                for &sp in &self.neighbors[s] {
                    acc += means[a * n + sp];
                }
                scr.nm[a * n + s] = acc;
            }
        }

        let order2 = self.opts.order == 2 && st.cov.is_some();
        if order2 {
            let f = st.cov.as_ref().expect("order-2 state");
            let fs = f.as_slice().expect("standard layout");
            // NF[b*3+beta] = row-neighbor sums of block (b, beta)
            for b in 0..3 {
                for beta in 0..3 {
                    let nf = &mut scr.nf[b * 3 + beta];
                    let dst = nf.as_slice_mut().expect("standard layout");
                    dst.fill(0.0);
                    for s in 0..n {
                        let row = &mut dst[s * n..(s + 1) * n];
                        for &sp in &self.neighbors[s] {
                            let src =
                                &fs[(b * n + sp) * 3 * n + beta * n..(b * n + sp) * 3 * n + beta * n + n];
                            for (o, v) in row.iter_mut().zip(src) {
                                *o += v;
                            }
                        }
                    }
                }
            }
        }

        // means
        for alpha in 0..3 {
            for s in 0..n {
                let mut d = -DAMP[alpha] * g * means[alpha * n + s];
                if alpha == 2 {
                    d -= g;
                }
                for chn in &self.ch[alpha] {
                    let mut pair = means[chn.a * n + s] * scr.nm[chn.b * n + s];
                    if order2 {
                        // sum over neighbors of F^{b a}_{s' s}
                        pair += scr.nf[chn.b * 3 + chn.a][[s, s]];
                    }
                    d += chn.w * pair;
                }
                scr.dm[alpha * n + s] = d;
            }
        }

        if !order2 {
            return;
        }
        let f = st.cov.as_ref().expect("order-2 state");
        let fs = f.as_slice().expect("standard layout");
        let d3 = 3 * n;

        // one-sided generator G; the drift is G + G^T
        scr.g.fill(0.0);
        let gsl = scr.g.as_slice_mut().expect("standard layout");
        for alpha in 0..3 {
            for beta in 0..3 {
                for s in 0..n {
                    let grow = &mut gsl[(alpha * n + s) * d3 + beta * n..(alpha * n + s) * d3 + beta * n + n];
                    // damping of this side
                    {
                        let frow = &fs[(alpha * n + s) * d3 + beta * n..(alpha * n + s) * d3 + beta * n + n];
                        let c = -DAMP[alpha] * g;
                        for (o, v) in grow.iter_mut().zip(frow) {
                            *o += c * v;
                        }
                    }
                    for chn in &self.ch[alpha] {
                        let c1 = chn.w * means[chn.a * n + s];
                        let c2 = chn.w * scr.nm[chn.b * n + s];
                        let nfrow = {
                            let nf = scr.nf[chn.b * 3 + beta].as_slice().expect("layout");
                            &nf[s * n..(s + 1) * n]
                        };
                        let farow = &fs[(chn.a * n + s) * d3 + beta * n..(chn.a * n + s) * d3 + beta * n + n];
                        for ((o, nfv), fav) in grow.iter_mut().zip(nfrow).zip(farow) {
                            *o += c1 * nfv + c2 * fav;
                        }
                        // coincident-neighbor corrections for m ~ s
                        for &m in &self.neighbors[s] {
                            let ma = means[chn.a * n + s];
                            let mb = means[chn.b * n + m];
                            let mbeta = means[beta * n + m];
                            let fab = fs[(chn.a * n + s) * d3 + chn.b * n + m];
                            let fabeta = fs[(chn.a * n + s) * d3 + beta * n + m];
                            let mut corr = -mbeta * (fab + ma * mb) - mb * fabeta;
                            if chn.b == beta {
                                corr += ma;
                            }
                            grow[m] += chn.w * corr;
                        }
                    }
                }
            }
        }

        // df = G + G^T, cross-site blocks only
        let df = scr.df.as_slice_mut().expect("standard layout");
        let gs = scr.g.as_slice().expect("standard layout");
        for r in 0..d3 {
            for c in 0..d3 {
                df[r * d3 + c] = gs[r * d3 + c] + gs[c * d3 + r];
            }
        }
        zero_same_site_blocks(&mut scr.df, n);
    }

    /// Build `Theta` (scaled by `sqrt(gamma eta / 2)`) from the current
    /// state; `scr.bloc` must already hold the per-site `B` blocks.
    fn build_theta(&self, st: &CumulantState, scr: &mut Scratch) {
        let n = self.n;
        let pref = (0.5 * self.gamma * self.opts.eta).sqrt();
        let f = st.cov.as_ref().expect("order-2 state");
        for j in 0..n {
            for (w, fcol_axis, sign) in [(0usize, 0usize, 1.0f64), (1, 1, -1.0)] {
                let col = w * n + j;
                for alpha in 0..3 {
                    for s in 0..n {
                        let v = if s == j {
                            scr.bloc[s][alpha][w]
                        } else {
                            sign * f[[alpha * n + s, fcol_axis * n + j]]
                        };
                        scr.theta.write(alpha * n + s, col, pref * v);
                    }
                }
            }
        }
    }

    /// One integration step: classical RK4 when `eta = 0`, otherwise
    /// Euler-Maruyama with RK4-free drift, `Theta` noise, Ito covariance
    /// drift and (optionally) covariance noise.
    pub fn step<R: Rng>(&self, st: &mut CumulantState, scr: &mut Scratch, rng: &mut R) {
        if self.opts.eta == 0.0 {
            self.rk4_det_step(st, scr);
            st.t += self.opts.dt;
            return;
        }
        let n = self.n;
        let d3 = 3 * n;
        let dt = self.opts.dt;
        let order2 = self.opts.order == 2;

        self.drift(st, scr);
        for s in 0..n {
            scr.bloc[s] = b_matrix(st.means[s], st.means[n + s], st.means[2 * n + s]);
        }

        // noise draws in pinned order: per site, W^X then W^Y
        let sd = dt.sqrt();
        for j in 0..n {
            scr.xi[j] = sd * rng.sample::<f64, _>(StandardNormal);
            scr.xi[n + j] = sd * rng.sample::<f64, _>(StandardNormal);
        }

        let pref = (0.5 * self.gamma * self.opts.eta).sqrt();
        if order2 {
            self.build_theta(st, scr);
            faer::linalg::matmul::matmul(
                scr.tth.as_mut(),
                scr.theta.as_ref(),
                scr.theta.transpose(),
                None,
                1.0,
                Parallelism::None,
            );
            // mean noise = Theta . xi
            for r in 0..d3 {
                let mut acc = 0.0;
                for c in 0..2 * n {
                    acc += scr.theta.read(r, c) * scr.xi[c];
                }
                scr.noise_m[r] = acc;
            }
            // optional multiplicative covariance noise, from the old table
            if self.opts.include_cov_noise {
                let f = st.cov.as_ref().expect("order-2 state");
                let fs = f.as_slice().expect("layout");
                scr.t1.fill(0.0);
                let t1 = scr.t1.as_slice_mut().expect("layout");
                for s in 0..n {
                    let (jx, jy) = b_jacobian(st.means[s], st.means[n + s], st.means[2 * n + s]);
                    let (wx, wy) = (pref * scr.xi[s], pref * scr.xi[n + s]);
                    for alpha in 0..3 {
                        let coef = [
                            wx * jx[alpha][0] + wy * jy[alpha][0],
                            wx * jx[alpha][1] + wy * jy[alpha][1],
                            wx * jx[alpha][2] + wy * jy[alpha][2],
                        ];
                        let row = &mut t1[(alpha * n + s) * d3..(alpha * n + s + 1) * d3];
                        for (c, cc) in coef.iter().enumerate() {
                            if *cc == 0.0 {
                                continue;
                            }
                            let frow = &fs[(c * n + s) * d3..(c * n + s + 1) * d3];
                            for (o, v) in row.iter_mut().zip(frow) {
                                *o += cc * v;
                            }
                        }
                    }
                }
                let t1 = scr.t1.as_slice().expect("layout");
                let ds = scr.ds.as_slice_mut().expect("layout");
                for r in 0..d3 {
                    for c in 0..d3 {
                        ds[r * d3 + c] = t1[r * d3 + c] + t1[c * d3 + r];
                    }
                }
            }
        } else {
            // order 1: only the local B block drives the means
            for s in 0..n {
                for alpha in 0..3 {
                    scr.noise_m[alpha * n + s] =
                        pref * (scr.bloc[s][alpha][0] * scr.xi[s] + scr.bloc[s][alpha][1] * scr.xi[n + s]);
                }
            }
        }

        // apply
        for (m, (dmv, nv)) in st
            .means
            .iter_mut()
            .zip(scr.dm.iter().zip(scr.noise_m.iter()))
        {
            *m += dt * dmv + nv;
        }
        if order2 {
            let f = st.cov.as_mut().expect("order-2 state");
            let fsl = f.as_slice_mut().expect("layout");
            let dfs = scr.df.as_slice().expect("layout");
            let with_ds = self.opts.include_cov_noise;
            let dss = scr.ds.as_slice().expect("layout");
            for r in 0..d3 {
                for c in 0..d3 {
                    let i = r * d3 + c;
                    let mut v = fsl[i] + dt * (dfs[i] - scr.tth.read(r, c));
                    if with_ds {
                        v += dss[i];
                    }
                    fsl[i] = v;
                }
            }
            symmetrize(f);
            zero_same_site_blocks(f, n);
        }
        st.t += dt;
    }

    fn rk4_det_step(&self, st: &mut CumulantState, scr: &mut Scratch) {
        let dt = self.opts.dt;
        // move the stage buffers out so `drift` can borrow scr freely
        let mut det = scr.det.take().expect("deterministic buffers");
        det.base.clone_from(st);
        for (i, frac) in [(0usize, 0.0f64), (1, 0.5), (2, 0.5), (3, 1.0)] {
            if i == 0 {
                self.drift(st, scr);
            } else {
                det.stage.clone_from(&det.base);
                let (kdm, kdf) = &det.k[i - 1];
                axpy_state(&mut det.stage, kdm, kdf.as_ref(), frac * dt);
                self.drift(&det.stage, scr);
            }
            let (kdm, kdf) = &mut det.k[i];
            kdm.copy_from_slice(&scr.dm);
            if let Some(kdf) = kdf {
                kdf.assign(&scr.df);
            }
        }
        let w = [dt / 6.0, dt / 3.0, dt / 3.0, dt / 6.0];
        st.clone_from(&det.base);
        for (i, wi) in w.iter().enumerate() {
            let (kdm, kdf) = &det.k[i];
            axpy_state(st, kdm, kdf.as_ref(), *wi);
        }
        if let Some(f) = st.cov.as_mut() {
            symmetrize(f);
            zero_same_site_blocks(f, self.n);
        }
        scr.det = Some(det);
    }

    /// Run a fresh trajectory from the all-down state (plus optional kick),
    /// sampling windowed observables into `acc`.
    pub fn run<R: Rng>(&self, rng: &mut R, acc: &mut WindowAccumulator) -> TrajOutcome {
        let mut st = CumulantState::all_down(self.n, self.opts.order);
        if self.opts.init_kick != 0.0 {
            for s in 0..self.n {
                st.means[s] = self.opts.init_kick;
            }
        }
        self.run_from(st, rng, acc)
    }

    pub fn run_from<R: Rng>(
        &self,
        mut st: CumulantState,
        rng: &mut R,
        acc: &mut WindowAccumulator,
    ) -> TrajOutcome {
        let mut scr = self.scratch();
        let o = &self.opts;
        let n_steps = (o.t_max / o.dt).round() as usize;
        let mut out_of_range = 0usize;
        for step in 1..=n_steps {
            self.step(&mut st, &mut scr, rng);
            let t = step as f64 * o.dt;
            // f64::max ignores NaN, so non-finite means need their own check
            if st.means.iter().any(|v| !v.is_finite()) {
                return TrajOutcome::Divergent { t };
            }
            let worst = st.max_mean_abs();
            if worst > DIVERGE_LIMIT {
                out_of_range += 1;
                if out_of_range >= DIVERGE_STEPS {
                    return TrajOutcome::Divergent { t };
                }
            } else {
                out_of_range = 0;
            }
            if t >= o.window.0 && t <= o.window.1 && step % o.record_every == 0 {
                if !st.all_finite() {
                    return TrajOutcome::Divergent { t };
                }
                acc.record(&st.means, st.cov.as_ref());
            }
        }
        TrajOutcome::Ok
    }
}

fn axpy_state(st: &mut CumulantState, dm: &[f64], df: Option<&Array2<f64>>, c: f64) {
    for (m, v) in st.means.iter_mut().zip(dm) {
        *m += c * v;
    }
    if let (Some(f), Some(df)) = (st.cov.as_mut(), df) {
        f.scaled_add(c, df);
    }
}

fn symmetrize(f: &mut Array2<f64>) {
    let d = f.nrows();
    for r in 0..d {
        for c in r + 1..d {
            let v = 0.5 * (f[[r, c]] + f[[c, r]]);
            f[[r, c]] = v;
            f[[c, r]] = v;
        }
    }
}

fn zero_same_site_blocks(f: &mut Array2<f64>, n: usize) {
    for a in 0..3 {
        for b in 0..3 {
            for s in 0..n {
                f[[a * n + s, b * n + s]] = 0.0;
            }
        }
    }
}

/// Ensemble-facing wrapper around the integrator.
pub struct CumulantEngine {
    integ: CumulantIntegrator,
}

impl CumulantEngine {
    pub fn new(problem: Problem, opts: CumulantOptions) -> Self {
        CumulantEngine {
            integ: CumulantIntegrator::new(problem, opts),
        }
    }

    pub fn integrator(&self) -> &CumulantIntegrator {
        &self.integ
    }
}

impl Engine for CumulantEngine {
    fn lattice(&self) -> &LatticeSpec {
        &self.integ.problem.lattice
    }

    fn with_fourth_moments(&self) -> bool {
        self.integ.opts.with_fourth_moments
    }

    fn run_trajectory(
        &self,
        _index: u64,
        rng: &mut ChaCha12Rng,
        acc: &mut WindowAccumulator,
    ) -> TrajOutcome {
        self.integ.run(rng, acc)
    }
}

/// Slow reference drift assembled from symbolic Heisenberg commutators and
/// the moment closure; O(N^4), for validation only. Returns the mean drift,
/// the covariance drift, and the largest imaginary part encountered (which
/// must vanish for a physical state).
pub fn reference_drift(
    problem: &Problem,
    st: &CumulantState,
) -> (Vec<f64>, Option<Array2<f64>>, f64) {
    let n = problem.lattice.n_sites();
    let g = problem.model.gamma;
    let bonds = problem.lattice.edges();
    let max_im = std::cell::Cell::new(0.0f64);

    let commutator = |ops: &[(usize, Axis)]| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(u, v) in &bonds {
            for c in AXES {
                let j = problem.model.coupling(c);
                if j == 0.0 {
                    continue;
                }
                let h_ops = [(u, c), (v, c)];
                let (c1, s1) = mul_strings(&h_ops, ops);
                let (c2, s2) = mul_strings(ops, &h_ops);
                let m1 = st.moment_from_cumulants(&s1).expect("closed moment");
                let m2 = st.moment_from_cumulants(&s2).expect("closed moment");
                acc += Complex64::new(0.0, j) * (c1 * m1 - c2 * m2);
            }
        }
        max_im.set(max_im.get().max(acc.im.abs()));
        acc
    };

    let mut dm = vec![0.0; 3 * n];
    for alpha in AXES {
        for s in 0..n {
            let mut d = commutator(&[(s, alpha)]).re;
            d -= DAMP[alpha.idx()] * g * st.mean(s, alpha);
            if alpha == Axis::Z {
                d -= g;
            }
            dm[alpha.idx() * n + s] = d;
        }
    }

    if st.cov.is_none() {
        return (dm, None, max_im.get());
    }
    let mut df = Array2::zeros((3 * n, 3 * n));
    for alpha in AXES {
        for beta in AXES {
            for s in 0..n {
                for m in 0..n {
                    if s == m {
                        continue;
                    }
                    let tot = st.two_point(s, alpha, m, beta);
                    max_im.set(max_im.get().max(tot.im.abs()));
                    let mut dtot = commutator(&[(s, alpha), (m, beta)]).re;
                    dtot -= (DAMP[alpha.idx()] + DAMP[beta.idx()]) * g * tot.re;
                    if alpha == Axis::Z {
                        dtot -= g * st.mean(m, beta);
                    }
                    if beta == Axis::Z {
                        dtot -= g * st.mean(s, alpha);
                    }
                    df[[alpha.idx() * n + s, beta.idx() * n + m]] = dtot
                        - dm[alpha.idx() * n + s] * st.mean(m, beta)
                        - st.mean(s, alpha) * dm[beta.idx() * n + m];
                }
            }
        }
    }
    (dm, Some(df), max_im.get())
}

/// Multiply two Pauli strings (site-sorted product with per-site algebra).
fn mul_strings(a: &[(usize, Axis)], b: &[(usize, Axis)]) -> (Complex64, Vec<(usize, Axis)>) {
    let mut ops: Vec<(usize, Axis)> = a.iter().chain(b.iter()).copied().collect();
    ops.sort_by_key(|&(s, _)| s); // stable: keeps operator order within a site
    let mut coeff = Complex64::new(1.0, 0.0);
    let mut out = Vec::with_capacity(ops.len());
    let mut i = 0;
    while i < ops.len() {
        let site = ops[i].0;
        let mut p = PauliProduct::identity();
        while i < ops.len() && ops[i].0 == site {
            p = p.mul_axis(ops[i].1);
            i += 1;
        }
        coeff *= p.coeff;
        if let Some(ax) = p.axis {
            out.push((site, ax));
        }
    }
    (coeff, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{CVec, ExactSpace};
    use crate::lattice::Boundary;
    use crate::model::ModelParams;
    use crate::observables::EnsembleStats;
    use rand::SeedableRng;

    fn problem(lx: usize, ly: usize, jx: f64, jy: f64, jz: f64) -> Problem {
        Problem {
            lattice: LatticeSpec::new(lx, ly, Boundary::Periodic),
            model: ModelParams::new(jx, jy, jz),
        }
    }

    #[test]
    fn b_jacobian_matches_finite_differences() {
        let (mx, my, mz) = (0.31, -0.47, -0.62);
        let (jx, jy) = b_jacobian(mx, my, mz);
        let eps = 1e-6;
        for c in 0..3 {
            let mut p = [mx, my, mz];
            let mut q = [mx, my, mz];
            p[c] += eps;
            q[c] -= eps;
            let bp = b_matrix(p[0], p[1], p[2]);
            let bq = b_matrix(q[0], q[1], q[2]);
            for alpha in 0..3 {
                let fd_x = (bp[alpha][0] - bq[alpha][0]) / (2.0 * eps);
                let fd_y = (bp[alpha][1] - bq[alpha][1]) / (2.0 * eps);
                assert!((fd_x - jx[alpha][c]).abs() < 1e-8, "X jac ({alpha},{c})");
                assert!((fd_y - jy[alpha][c]).abs() < 1e-8, "Y jac ({alpha},{c})");
            }
        }
    }

    #[test]
    fn fast_drift_matches_symbolic_reference() {
        let prob = problem(3, 3, 0.9, 1.07, 1.0);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(31);
        for order in [1usize, 2] {
            let integ = CumulantIntegrator::new(
                prob.clone(),
                CumulantOptions {
                    order,
                    eta: 0.0,
                    ..CumulantOptions::default()
                },
            );
            let mut scr = integ.scratch();
            for _ in 0..3 {
                let st = CumulantState::random(9, order, &mut rng);
                integ.drift(&st, &mut scr);
                let (dm_ref, df_ref, max_im) = reference_drift(&prob, &st);
                assert!(max_im < 1e-10, "imaginary residue {max_im}");
                for (i, (a, b)) in scr.dm.iter().zip(&dm_ref).enumerate() {
                    assert!((a - b).abs() < 1e-10, "mean drift [{i}]: {a} vs {b}");
                }
                if order == 2 {
                    let df_ref = df_ref.unwrap();
                    for r in 0..27 {
                        for c in 0..27 {
                            if r % 9 == c % 9 {
                                continue;
                            }
                            let (a, b) = (scr.df[[r, c]], df_ref[[r, c]]);
                            assert!(
                                (a - b).abs() < 1e-10,
                                "cov drift [{r},{c}]: {a} vs {b}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn order1_drift_equals_order2_with_zero_covariance() {
        let prob = problem(3, 3, 0.9, 1.07, 1.0);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        let st1 = CumulantState::random(9, 1, &mut rng);
        let mut st2 = CumulantState::all_down(9, 2);
        st2.means.copy_from_slice(&st1.means);
        st2.cov.as_mut().unwrap().fill(0.0);
        let i1 = CumulantIntegrator::new(
            prob.clone(),
            CumulantOptions {
                order: 1,
                eta: 0.0,
                ..CumulantOptions::default()
            },
        );
        let i2 = CumulantIntegrator::new(
            prob,
            CumulantOptions {
                order: 2,
                eta: 0.0,
                ..CumulantOptions::default()
            },
        );
        let (mut s1, mut s2) = (i1.scratch(), i2.scratch());
        i1.drift(&st1, &mut s1);
        i2.drift(&st2, &mut s2);
        for (a, b) in s1.dm.iter().zip(&s2.dm) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn dimer_deterministic_order2_reaches_exact_steady_state() {
        // on two sites the closure is exact, so the eta = 0 order-2 flow must
        // land on the exact master-equation steady state
        let prob = problem(2, 1, 0.9, 1.05, 1.0);
        let space = ExactSpace::new(prob.clone()).unwrap();
        let mut rho = space.rho_all_down();
        let report =
            space.evolve_to_steady_state(&mut rho, &crate::exact::SteadyStateOptions::default());
        assert!(report.converged);
        let exact = space.to_cumulant(&rho, 2);

        let integ = CumulantIntegrator::new(
            prob,
            CumulantOptions {
                order: 2,
                eta: 0.0,
                dt: 1e-3,
                t_max: 60.0,
                ..CumulantOptions::default()
            },
        );
        let mut st = CumulantState::all_down(2, 2);
        let mut scr = integ.scratch();
        for _ in 0..60_000 {
            integ.step(&mut st, &mut scr, &mut rand_chacha::ChaCha12Rng::seed_from_u64(0));
        }
        for i in 0..6 {
            assert!(
                (st.means[i] - exact.means[i]).abs() < 1e-7,
                "mean[{i}]: {} vs {}",
                st.means[i],
                exact.means[i]
            );
        }
        let (fc, fe) = (st.cov.as_ref().unwrap(), exact.cov.as_ref().unwrap());
        for (a, b) in fc.iter().zip(fe.iter()) {
            assert!((a - b).abs() < 1e-7, "cov {a} vs {b}");
        }
    }

    #[test]
    fn mean_field_instability_threshold_matches_linearization() {
        // order-1 uniform linearization about the down state on z = 4:
        // unstable once 4 z^2 (jy - jz)(jz - jx) > 1/4, i.e. at
        // jy = 1 + 1/25.6 for jx = 0.9, jz = 1.
        let spectral_abscissa = |jy: f64| -> f64 {
            let prob = problem(4, 4, 0.9, jy, 1.0);
            let integ = CumulantIntegrator::new(
                prob,
                CumulantOptions {
                    order: 1,
                    eta: 0.0,
                    ..CumulantOptions::default()
                },
            );
            let mut scr = integ.scratch();
            let base = CumulantState::all_down(16, 1);
            let d = 48;
            let eps = 1e-5;
            let mut jac = nalgebra::DMatrix::<f64>::zeros(d, d);
            for col in 0..d {
                let mut p = base.clone();
                let mut q = base.clone();
                p.means[col] += eps;
                q.means[col] -= eps;
                integ.drift(&p, &mut scr);
                let dp = scr.dm.clone();
                integ.drift(&q, &mut scr);
                for row in 0..d {
                    jac[(row, col)] = (dp[row] - scr.dm[row]) / (2.0 * eps);
                }
            }
            jac.complex_eigenvalues()
                .iter()
                .map(|z| z.re)
                .fold(f64::MIN, f64::max)
        };
        let (mut lo, mut hi) = (1.0, 1.1);
        assert!(spectral_abscissa(lo) < 0.0);
        assert!(spectral_abscissa(hi) > 0.0);
        for _ in 0..30 {
            let mid = 0.5 * (lo + hi);
            if spectral_abscissa(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let jyc = 0.5 * (lo + hi);
        let expected = 1.0 + 1.0 / 25.6;
        assert!(
            (jyc - expected).abs() < 1e-6,
            "threshold {jyc} vs {expected}"
        );
    }

    /// One Euler step of the exact nonlinear state-diffusion equation for a
    /// two-site pure state, with explicitly supplied Wiener increments.
    fn exact_qsd_step(space: &ExactSpace, psi: &CVec, dt: f64, xi: &[f64]) -> CVec {
        let n = space.n;
        let dim = space.dim;
        let g = space.gamma();
        let sqg = g.sqrt();
        let mut hpsi: CVec = ndarray::Array1::zeros(dim);
        space.h_mul_vec(psi, &mut hpsi);
        let mut out = psi.clone();

        // expectation of each lowering operator
        let lower = |site: usize, v: &CVec| -> CVec {
            let mask = 1usize << site;
            let mut o: CVec = ndarray::Array1::zeros(dim);
            for b in 0..dim {
                if b & mask != 0 {
                    o[b ^ mask] = v[b];
                }
            }
            o
        };
        let mut lv = Vec::with_capacity(n);
        let mut lexp = Vec::with_capacity(n);
        for j in 0..n {
            let lj = lower(j, psi);
            let e: Complex64 = psi.iter().zip(lj.iter()).map(|(p, l)| p.conj() * l).sum();
            lv.push(lj);
            lexp.push(sqg * e);
        }

        for b in 0..dim {
            // -i H psi and the deterministic dissipative drift
            let mut d = Complex64::new(0.0, -1.0) * hpsi[b];
            for j in 0..n {
                let ldag_e = lexp[j].conj();
                d += ldag_e * sqg * lv[j][b];
                let nj = ((b >> j) & 1) as f64;
                d -= 0.5 * g * nj * psi[b];
                d -= 0.5 * ldag_e * lexp[j] * psi[b];
            }
            out[b] += d * dt;
            // noise: (L_j - <L_j>) psi dZ_j^* with
            // dZ_j^* = (dW^X_j - i dW^Y_j) / sqrt(2)
            for j in 0..n {
                let dz_star =
                    Complex64::new(xi[j], -xi[n + j]) / std::f64::consts::SQRT_2;
                out[b] += (sqg * lv[j][b] - lexp[j] * psi[b]) * dz_star;
            }
        }
        let norm: f64 = out.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in out.iter_mut() {
            *z /= norm;
        }
        out
    }

    fn cumulant_of_state(space: &ExactSpace, psi: &CVec) -> CumulantState {
        let n = space.n;
        let mut st = CumulantState::all_down(n, 2);
        for a in AXES {
            for s in 0..n {
                st.means[a.idx() * n + s] = space.pauli_string_expect_vec(psi, &[(s, a)]).re;
            }
        }
        for s in 0..n {
            for m in (s + 1)..n {
                for a in AXES {
                    for b in AXES {
                        let tot = space.pauli_string_expect_vec(psi, &[(s, a), (m, b)]).re;
                        let f = tot - st.mean(s, a) * st.mean(m, b);
                        st.set_cov_sym(s, a, m, b, f);
                    }
                }
            }
        }
        st
    }

    /// A fixed, well-entangled two-qubit reference state.
    fn oracle_psi() -> CVec {
        let mut psi: CVec = ndarray::Array1::zeros(4);
        psi[0] = Complex64::new(0.55, 0.0);
        psi[1] = Complex64::new(0.30, 0.40);
        psi[2] = Complex64::new(-0.20, 0.50);
        psi[3] = Complex64::new(0.35, -0.10);
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in psi.iter_mut() {
            *z /= norm;
        }
        psi
    }

    /// Signed one-step residuals (means then cross-site covariances) between
    /// the order-2 integrator and the exact two-site state diffusion with
    /// identical Wiener increments.
    fn one_step_residual(
        space: &ExactSpace,
        integ: &CumulantIntegrator,
        scr: &mut Scratch,
        psi: &CVec,
        dt: f64,
        seed: u64,
    ) -> [f64; 15] {
        let mut st = cumulant_of_state(space, psi);
        // identical Wiener increments for both sides, in the integrator's
        // pinned draw order (per site: X then Y)
        let sd = dt.sqrt();
        let mut noise_rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let mut xi = vec![0.0; 4];
        for j in 0..2 {
            xi[j] = sd * noise_rng.sample::<f64, _>(StandardNormal);
            xi[2 + j] = sd * noise_rng.sample::<f64, _>(StandardNormal);
        }
        let psi2 = exact_qsd_step(space, psi, dt, &xi);
        let target = cumulant_of_state(space, &psi2);
        let mut step_rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        integ.step(&mut st, scr, &mut step_rng);

        let mut r = [0.0; 15];
        for i in 0..6 {
            r[i] = st.means[i] - target.means[i];
        }
        let (fa, fb) = (st.cov.as_ref().unwrap(), target.cov.as_ref().unwrap());
        let mut k = 6;
        for a in 0..3 {
            for b in 0..3 {
                r[k] = fa[[a * 2, b * 2 + 1]] - fb[[a * 2, b * 2 + 1]];
                k += 1;
            }
        }
        r
    }

    /// On a dimer the order-2 description carries the full state, so the
    /// moment equations are an exact unraveling. A single matched-noise
    /// Euler step still differs by a mean-zero O(dt) amount (the step sees
    /// xi^2 where Ito calculus writes dt), but the residual must average
    /// away. Any wrong drift or Ito term (for example a flipped sign on the
    /// Theta Theta^T covariance drift, which enters at ~1e-3 here) would
    /// leave a bias two orders above the tolerance.
    #[test]
    fn order2_step_bias_vanishes_against_exact_state_diffusion() {
        let prob = problem(2, 1, 0.9, 1.05, 1.0);
        let space = ExactSpace::new(prob.clone()).unwrap();
        let dt = 1e-3;
        let integ = CumulantIntegrator::new(
            prob,
            CumulantOptions {
                order: 2,
                eta: 1.0,
                include_cov_noise: true,
                dt,
                ..CumulantOptions::default()
            },
        );
        let mut scr = integ.scratch();
        let psi = oracle_psi();
        let trials = 20_000u64;
        let mut sum = [0.0f64; 15];
        let mut sumsq = [0.0f64; 15];
        for trial in 0..trials {
            let r = one_step_residual(&space, &integ, &mut scr, &psi, dt, 40_000 + trial);
            for (i, v) in r.iter().enumerate() {
                sum[i] += v;
                sumsq[i] += v * v;
            }
        }
        for i in 0..15 {
            let mean = sum[i] / trials as f64;
            let var = (sumsq[i] / trials as f64 - mean * mean).max(0.0);
            let se = (var / trials as f64).sqrt();
            assert!(
                mean.abs() < (4.0 * se).max(2e-4),
                "entry {i}: bias {mean:.3e} (se {se:.3e})"
            );
        }
    }

    /// The residual of the matched-noise step must fluctuate at O(dt), not
    /// O(sqrt(dt)): dropping the multiplicative covariance noise leaves an
    /// unmatched O(sqrt(dt)) noise component, so the toggle must widen the
    /// residual spread by a large factor.
    #[test]
    fn covariance_noise_matches_exact_fluctuation_scale() {
        let prob = problem(2, 1, 0.9, 1.05, 1.0);
        let space = ExactSpace::new(prob.clone()).unwrap();
        let dt = 1e-4;
        let trials = 3000u64;
        let spread = |with_ds: bool| -> f64 {
            let integ = CumulantIntegrator::new(
                prob.clone(),
                CumulantOptions {
                    order: 2,
                    eta: 1.0,
                    include_cov_noise: with_ds,
                    dt,
                    ..CumulantOptions::default()
                },
            );
            let mut scr = integ.scratch();
            let psi = oracle_psi();
            let mut sum = [0.0f64; 15];
            let mut sumsq = [0.0f64; 15];
            for trial in 0..trials {
                let r = one_step_residual(&space, &integ, &mut scr, &psi, dt, 70_000 + trial);
                for (i, v) in r.iter().enumerate() {
                    sum[i] += v;
                    sumsq[i] += v * v;
                }
            }
            let mut worst = 0.0f64;
            for i in 6..15 {
                let mean = sum[i] / trials as f64;
                let var = (sumsq[i] / trials as f64 - mean * mean).max(0.0);
                worst = worst.max(var.sqrt());
            }
            worst
        };
        let on = spread(true);
        let off = spread(false);
        assert!(on < 1.5e-3, "covariance residual spread {on:.3e} too wide");
        assert!(
            off > 2.0 * on,
            "toggle made no difference: on {on:.3e}, off {off:.3e}"
        );
    }

    #[test]
    fn deterministic_runs_ignore_the_rng() {
        let prob = problem(2, 2, 0.9, 1.05, 1.0);
        let run = |seed: u64| -> Vec<f64> {
            let integ = CumulantIntegrator::new(
                prob.clone(),
                CumulantOptions {
                    order: 2,
                    eta: 0.0,
                    dt: 1e-2,
                    t_max: 3.0,
                    window: (1.0, 3.0),
                    record_every: 10,
                    init_kick: 1e-3,
                    ..CumulantOptions::default()
                },
            );
            let mut acc = WindowAccumulator::new(&prob.lattice, false);
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let out = integ.run(&mut rng, &mut acc);
            assert!(matches!(out, TrajOutcome::Ok));
            let (rec, mats) = acc.finish(0);
            let mut st = EnsembleStats::empty(prob.lattice.clone());
            st.push_ok(rec, &mats);
            st.sum_means.clone()
        };
        let a = run(1);
        let b = run(999);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn stochastic_covariance_stays_symmetric_and_finite() {
        let prob = problem(3, 3, 0.9, 1.07, 1.0);
        let integ = CumulantIntegrator::new(
            prob,
            CumulantOptions {
                order: 2,
                eta: 1.0,
                include_cov_noise: true,
                dt: 1e-3,
                ..CumulantOptions::default()
            },
        );
        let mut st = CumulantState::all_down(9, 2);
        let mut scr = integ.scratch();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(12);
        for _ in 0..3000 {
            integ.step(&mut st, &mut scr, &mut rng);
        }
        assert!(st.all_finite());
        let f = st.cov.as_ref().unwrap();
        for r in 0..27 {
            assert_eq!(f[[r, r]], 0.0);
            for c in 0..27 {
                assert_eq!(f[[r, c]], f[[c, r]]);
                if r % 9 == c % 9 {
                    assert_eq!(f[[r, c]], 0.0);
                }
            }
        }
        // physical sanity after driving: means stay in the Bloch ball
        assert!(st.max_mean_abs() <= 1.0 + 1e-6);
    }

    #[test]
    fn runaway_states_are_flagged_divergent() {
        let prob = problem(2, 2, 0.9, 1.05, 1.0);
        let integ = CumulantIntegrator::new(
            prob.clone(),
            CumulantOptions {
                order: 1,
                eta: 0.0,
                dt: 1e-3,
                t_max: 5.0,
                ..CumulantOptions::default()
            },
        );
        let mut st = CumulantState::all_down(4, 1);
        for s in 0..4 {
            st.means[s] = 5.0; // far outside the physical ball
        }
        let mut acc = WindowAccumulator::new(&prob.lattice, false);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        match integ.run_from(st, &mut rng, &mut acc) {
            TrajOutcome::Divergent { t } => {
                assert!((t - DIVERGE_STEPS as f64 * 1e-3).abs() < 1e-9)
            }
            TrajOutcome::Ok => panic!("runaway state not flagged"),
        }

        // non-finite input diverges on the first step
        let mut st = CumulantState::all_down(4, 1);
        st.means[0] = f64::NAN;
        let mut acc = WindowAccumulator::new(&prob.lattice, false);
        match integ.run_from(st, &mut rng, &mut acc) {
            TrajOutcome::Divergent { t } => assert!(t <= 2e-3),
            TrajOutcome::Ok => panic!("NaN state not flagged"),
        }
    }
}
