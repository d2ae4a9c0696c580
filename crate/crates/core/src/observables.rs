//! Windowed observable accumulation and ensemble statistics.
//!
//! Every stochastic engine (quantum jumps, order-1 and order-2 cumulant
//! trajectories) feeds the same interface: at each recorded time it hands the
//! accumulator its instantaneous site means (axis-major, length `3n`) and the
//! connected pair table `C_{ij}^{ab} = <s_i^a s_j^b> - m_i^a m_j^b` for
//! distinct sites. A trajectory's windowed time averages collapse into one
//! scalar record plus pair-resolved matrices; the ensemble averages over
//! records, so statistical errors are always quoted at the trajectory level.

use crate::lattice::LatticeSpec;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ObservablesError {
    #[error("no surviving trajectories to average")]
    Empty,
    #[error("correlation profile needs at least {need} usable distances, found {found}")]
    ProfileTooShort { need: usize, found: usize },
    #[error("exponential fit needs positive correlations, found none")]
    NoDecay,
}

/// Scalar windowed averages of one trajectory.
///
/// `sab` are uniform structure factors `S^{ab}(0)` (coincident sites
/// included), `st_*` their staggered counterparts at `(pi, pi)`. `g*` are
/// averages of products of summed means (`gx2 = [(sum_i m_i^x)^2]` and so
/// on), `v*` same-site products `sum_i m_i^a m_i^b`, and `m4*` optional
/// fourth moments of the collective average reconstructed through the
/// cumulant closure.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordScalars {
    pub mx: f64,
    pub my: f64,
    pub mz: f64,
    pub st_mx: f64,
    pub st_my: f64,
    pub sxx: f64,
    pub syy: f64,
    pub szz: f64,
    pub sxy: f64,
    pub st_sxx: f64,
    pub st_syy: f64,
    pub st_szz: f64,
    pub st_sxy: f64,
    pub gx2: f64,
    pub gy2: f64,
    pub gxy: f64,
    pub st_gx2: f64,
    pub st_gy2: f64,
    pub st_gxy: f64,
    pub vxx: f64,
    pub vyy: f64,
    pub vzz: f64,
    pub vxy: f64,
    pub m4x: f64,
    pub m4y: f64,
}

pub const RECORD_SCALAR_NAMES: [&str; 25] = [
    "mx", "my", "mz", "st_mx", "st_my", "sxx", "syy", "szz", "sxy", "st_sxx", "st_syy", "st_szz",
    "st_sxy", "gx2", "gy2", "gxy", "st_gx2", "st_gy2", "st_gxy", "vxx", "vyy", "vzz", "vxy",
    "m4x", "m4y",
];

impl RecordScalars {
    pub fn values(&self) -> [f64; 25] {
        [
            self.mx, self.my, self.mz, self.st_mx, self.st_my, self.sxx, self.syy, self.szz,
            self.sxy, self.st_sxx, self.st_syy, self.st_szz, self.st_sxy, self.gx2, self.gy2,
            self.gxy, self.st_gx2, self.st_gy2, self.st_gxy, self.vxx, self.vyy, self.vzz,
            self.vxy, self.m4x, self.m4y,
        ]
    }

    pub fn from_values(v: &[f64; 25]) -> Self {
        RecordScalars {
            mx: v[0],
            my: v[1],
            mz: v[2],
            st_mx: v[3],
            st_my: v[4],
            sxx: v[5],
            syy: v[6],
            szz: v[7],
            sxy: v[8],
            st_sxx: v[9],
            st_syy: v[10],
            st_szz: v[11],
            st_sxy: v[12],
            gx2: v[13],
            gy2: v[14],
            gxy: v[15],
            st_gx2: v[16],
            st_gy2: v[17],
            st_gxy: v[18],
            vxx: v[19],
            vyy: v[20],
            vzz: v[21],
            vxy: v[22],
            m4x: v[23],
            m4y: v[24],
        }
    }

    /// Structure factor `S^{phi phi}` at wave vector 0 (or `(pi,pi)` if
    /// staggered) for quadrature angle `phi` in the xy plane.
    pub fn s_phi(&self, phi: f64, staggered: bool) -> f64 {
        let (c, s) = (phi.cos(), phi.sin());
        if staggered {
            c * c * self.st_sxx + s * s * self.st_syy + 2.0 * c * s * self.st_sxy
        } else {
            c * c * self.sxx + s * s * self.syy + 2.0 * c * s * self.sxy
        }
    }

    /// `[(sum_i s_i m_i^phi)^2]` for the same quadrature.
    pub fn g2_phi(&self, phi: f64, staggered: bool) -> f64 {
        let (c, s) = (phi.cos(), phi.sin());
        if staggered {
            c * c * self.st_gx2 + s * s * self.st_gy2 + 2.0 * c * s * self.st_gxy
        } else {
            c * c * self.gx2 + s * s * self.gy2 + 2.0 * c * s * self.gxy
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajStatus {
    Ok,
    /// Integration left the physical region (non-finite values or
    /// persistently out-of-range means); excluded from averages.
    Divergent,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajRecord {
    pub index: u64,
    pub status: TrajStatus,
    pub t_divergence: Option<f64>,
    pub samples: u64,
    pub scalars: RecordScalars,
}

/// Per-sample accumulation over the time window of one trajectory.
pub struct WindowAccumulator {
    n: usize,
    signs: Vec<f64>,
    with_m4: bool,
    samples: u64,
    sum_scal: [f64; 25],
    sum_means: Vec<f64>,
    sum_cq: Array2<f64>,
    sum_prod: Array2<f64>,
}

impl WindowAccumulator {
    pub fn new(lattice: &LatticeSpec, with_m4: bool) -> Self {
        let n = lattice.n_sites();
        let signs = (0..n).map(|i| lattice.staggered_sign(i)).collect();
        WindowAccumulator {
            n,
            signs,
            with_m4,
            samples: 0,
            sum_scal: [0.0; 25],
            sum_means: vec![0.0; 3 * n],
            sum_cq: Array2::zeros((3 * n, 3 * n)),
            sum_prod: Array2::zeros((3 * n, 3 * n)),
        }
    }

    /// Record one sample. `means` is axis-major (`a*n + s`); `cq` is the
    /// connected pair table in the same composite index with zero same-site
    /// blocks, or `None` when the engine carries no pair correlations
    /// (order-1 trajectories).
    pub fn record(&mut self, means: &[f64], cq: Option<&Array2<f64>>) {
        let n = self.n;
        debug_assert_eq!(means.len(), 3 * n);
        self.samples += 1;
        for (acc, &v) in self.sum_means.iter_mut().zip(means) {
            *acc += v;
        }
        if let Some(cq) = cq {
            self.sum_cq += cq;
        }
        // outer product of means, same-site blocks included
        {
            let d = 3 * n;
            let dst = self.sum_prod.as_slice_mut().expect("standard layout");
            for r in 0..d {
                let mr = means[r];
                if mr == 0.0 {
                    continue;
                }
                let row = &mut dst[r * d..(r + 1) * d];
                for (o, &mc) in row.iter_mut().zip(means) {
                    *o += mr * mc;
                }
            }
        }

        // scalar slots
        let (mx, my, mz) = (&means[0..n], &means[n..2 * n], &means[2 * n..3 * n]);
        let s = &self.signs;
        let nf = n as f64;
        let tx: f64 = mx.iter().sum();
        let ty: f64 = my.iter().sum();
        let tz: f64 = mz.iter().sum();
        let st_tx: f64 = mx.iter().zip(s).map(|(v, si)| v * si).sum();
        let st_ty: f64 = my.iter().zip(s).map(|(v, si)| v * si).sum();
        let st_tz: f64 = mz.iter().zip(s).map(|(v, si)| v * si).sum();
        let vxx: f64 = mx.iter().map(|v| v * v).sum();
        let vyy: f64 = my.iter().map(|v| v * v).sum();
        let vzz: f64 = mz.iter().map(|v| v * v).sum();
        let vxy: f64 = mx.iter().zip(my).map(|(a, b)| a * b).sum();

        // sums of the connected table over distinct pairs, uniform and
        // staggered, for the four needed axis blocks
        let mut f_u = [0.0f64; 4]; // xx, yy, zz, xy
        let mut f_st = [0.0f64; 4];
        if let Some(cq) = cq {
            let blocks = [(0usize, 0usize), (1, 1), (2, 2), (0, 1)];
            for (k, &(a, b)) in blocks.iter().enumerate() {
                let mut u = 0.0;
                let mut st = 0.0;
                for i in 0..n {
                    let si = s[i];
                    for j in 0..n {
                        let v = cq[[a * n + i, b * n + j]];
                        u += v;
                        st += si * s[j] * v;
                    }
                }
                f_u[k] = u;
                f_st[k] = st;
            }
        }

        let n2 = nf * nf;
        let sc = &mut self.sum_scal;
        sc[0] += tx / nf;
        sc[1] += ty / nf;
        sc[2] += tz / nf;
        sc[3] += st_tx / nf;
        sc[4] += st_ty / nf;
        sc[5] += (nf + f_u[0] + tx * tx - vxx) / n2;
        sc[6] += (nf + f_u[1] + ty * ty - vyy) / n2;
        sc[7] += (nf + f_u[2] + tz * tz - vzz) / n2;
        sc[8] += (f_u[3] + tx * ty - vxy) / n2;
        sc[9] += (nf + f_st[0] + st_tx * st_tx - vxx) / n2;
        sc[10] += (nf + f_st[1] + st_ty * st_ty - vyy) / n2;
        sc[11] += (nf + f_st[2] + st_tz * st_tz - vzz) / n2;
        sc[12] += (f_st[3] + st_tx * st_ty - vxy) / n2;
        sc[13] += tx * tx;
        sc[14] += ty * ty;
        sc[15] += tx * ty;
        sc[16] += st_tx * st_tx;
        sc[17] += st_ty * st_ty;
        sc[18] += st_tx * st_ty;
        sc[19] += vxx;
        sc[20] += vyy;
        sc[21] += vzz;
        sc[22] += vxy;
        if self.with_m4 {
            let (m4x, m4y) = fourth_moment_closure(n, means, cq);
            sc[23] += m4x;
            sc[24] += m4y;
        }
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    /// Close out a surviving trajectory: time-average everything.
    pub fn finish(self, index: u64) -> (TrajRecord, TrajMatrices) {
        let k = 1.0 / self.samples.max(1) as f64;
        let mut vals = self.sum_scal;
        for v in vals.iter_mut() {
            *v *= k;
        }
        let record = TrajRecord {
            index,
            status: TrajStatus::Ok,
            t_divergence: None,
            samples: self.samples,
            scalars: RecordScalars::from_values(&vals),
        };
        let mats = TrajMatrices {
            means: self.sum_means.iter().map(|v| v * k).collect(),
            cq: self.sum_cq * k,
            prod: self.sum_prod * k,
        };
        (record, mats)
    }
}

/// Fourth moment of the collective average for x and y through the cumulant
/// closure, used by the order-truncation benchmarks.
fn fourth_moment_closure(n: usize, means: &[f64], cq: Option<&Array2<f64>>) -> (f64, f64) {
    use crate::cumulant::CumulantState;
    use crate::lattice::Axis;
    // Rebuild a transient state view; cheap relative to an integration step.
    let mut st = CumulantState::all_down(n, if cq.is_some() { 2 } else { 1 });
    st.means.copy_from_slice(means);
    if let (Some(dst), Some(src)) = (st.cov.as_mut(), cq) {
        dst.assign(src);
    }
    let m4x = st
        .collective_moment_signed(Axis::X, None, 4)
        .expect("order 4 supported");
    let m4y = st
        .collective_moment_signed(Axis::Y, None, 4)
        .expect("order 4 supported");
    (m4x, m4y)
}

/// Time-averaged pair-resolved tables of one trajectory.
pub struct TrajMatrices {
    pub means: Vec<f64>,
    pub cq: Array2<f64>,
    pub prod: Array2<f64>,
}

/// Aggregated ensemble: scalar records for every trajectory plus pair
/// tables summed over surviving trajectories.
#[derive(Debug, Clone)]
pub struct EnsembleStats {
    pub lattice: LatticeSpec,
    pub records: Vec<TrajRecord>,
    pub n_ok: usize,
    pub sum_means: Vec<f64>,
    pub sum_means_sq: Vec<f64>,
    pub sum_cq: Array2<f64>,
    pub sum_cq_sq: Array2<f64>,
    pub sum_prod: Array2<f64>,
}

impl EnsembleStats {
    pub fn empty(lattice: LatticeSpec) -> Self {
        let d = 3 * lattice.n_sites();
        EnsembleStats {
            lattice,
            records: Vec::new(),
            n_ok: 0,
            sum_means: vec![0.0; d],
            sum_means_sq: vec![0.0; d],
            sum_cq: Array2::zeros((d, d)),
            sum_cq_sq: Array2::zeros((d, d)),
            sum_prod: Array2::zeros((d, d)),
        }
    }

    pub fn push_ok(&mut self, record: TrajRecord, mats: &TrajMatrices) {
        debug_assert_eq!(record.status, TrajStatus::Ok);
        self.n_ok += 1;
        for (acc, &v) in self.sum_means.iter_mut().zip(&mats.means) {
            *acc += v;
        }
        for (acc, &v) in self.sum_means_sq.iter_mut().zip(&mats.means) {
            *acc += v * v;
        }
        self.sum_cq += &mats.cq;
        ndarray::Zip::from(&mut self.sum_cq_sq)
            .and(&mats.cq)
            .for_each(|a, &b| *a += b * b);
        self.sum_prod += &mats.prod;
        self.records.push(record);
    }

    pub fn push_divergent(&mut self, index: u64, t: f64, samples: u64) {
        self.records.push(TrajRecord {
            index,
            status: TrajStatus::Divergent,
            t_divergence: Some(t),
            samples,
            scalars: RecordScalars::default(),
        });
    }

    /// Merge two partial ensembles. Associative and commutative up to
    /// floating-point addition order; records are kept sorted by index so
    /// the scalar aggregates below are reproducible bit for bit whenever the
    /// per-trajectory inputs are.
    pub fn merge(mut self, mut other: EnsembleStats) -> EnsembleStats {
        assert_eq!(self.lattice, other.lattice);
        self.n_ok += other.n_ok;
        for (a, b) in self.sum_means.iter_mut().zip(&other.sum_means) {
            *a += b;
        }
        for (a, b) in self.sum_means_sq.iter_mut().zip(&other.sum_means_sq) {
            *a += b;
        }
        self.sum_cq += &other.sum_cq;
        self.sum_cq_sq += &other.sum_cq_sq;
        self.sum_prod += &other.sum_prod;
        self.records.append(&mut other.records);
        self.records.sort_by_key(|r| r.index);
        self
    }

    pub fn n_total(&self) -> usize {
        self.records.len()
    }

    pub fn n_divergent(&self) -> usize {
        self.records.len() - self.n_ok
    }

    pub fn divergence_fraction(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.n_divergent() as f64 / self.records.len() as f64
        }
    }

    fn ok_scalars(&self) -> impl Iterator<Item = &RecordScalars> {
        self.records
            .iter()
            .filter(|r| r.status == TrajStatus::Ok)
            .map(|r| &r.scalars)
    }

    /// Mean of the surviving records under an index-order deterministic sum.
    pub fn mean_scalars(&self) -> Result<RecordScalars, ObservablesError> {
        if self.n_ok == 0 {
            return Err(ObservablesError::Empty);
        }
        let mut acc = [0.0f64; 25];
        for s in self.ok_scalars() {
            for (a, v) in acc.iter_mut().zip(s.values()) {
                *a += v;
            }
        }
        let k = 1.0 / self.n_ok as f64;
        for a in acc.iter_mut() {
            *a *= k;
        }
        Ok(RecordScalars::from_values(&acc))
    }

    /// Mean and trajectory-level standard error of an arbitrary scalar
    /// functional of one record.
    pub fn scalar_stats<F: Fn(&RecordScalars) -> f64>(
        &self,
        f: F,
    ) -> Result<(f64, f64), ObservablesError> {
        let vals: Vec<f64> = self.ok_scalars().map(f).collect();
        if vals.is_empty() {
            return Err(ObservablesError::Empty);
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        if vals.len() == 1 {
            return Ok((mean, 0.0));
        }
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        Ok((mean, (var / n).sqrt()))
    }

    /// Jackknife mean and error of a statistic of the ensemble-averaged
    /// record, for quantities that are nonlinear in the averages.
    pub fn jackknife<F: Fn(&RecordScalars) -> f64>(
        &self,
        f: F,
    ) -> Result<(f64, f64), ObservablesError> {
        let rows: Vec<[f64; 25]> = self.ok_scalars().map(|s| s.values()).collect();
        let n = rows.len();
        if n == 0 {
            return Err(ObservablesError::Empty);
        }
        let mut total = [0.0f64; 25];
        for r in &rows {
            for (a, v) in total.iter_mut().zip(r) {
                *a += v;
            }
        }
        let mut mean = total;
        for a in mean.iter_mut() {
            *a /= n as f64;
        }
        let center = f(&RecordScalars::from_values(&mean));
        if n == 1 {
            return Ok((center, 0.0));
        }
        let mut acc = 0.0;
        let mut theta_bar = 0.0;
        let mut thetas = Vec::with_capacity(n);
        for r in &rows {
            let mut loo = total;
            for (a, v) in loo.iter_mut().zip(r) {
                *a = (*a - v) / (n as f64 - 1.0);
            }
            let th = f(&RecordScalars::from_values(&loo));
            theta_bar += th;
            thetas.push(th);
        }
        theta_bar /= n as f64;
        for th in thetas {
            acc += (th - theta_bar) * (th - theta_bar);
        }
        let se = ((n as f64 - 1.0) / n as f64 * acc).sqrt();
        Ok((center, se))
    }

    /// Quadrature angle maximizing the structure factor, resolved between
    /// the two stationary branches of the quadratic form.
    pub fn optimal_phi(&self, staggered: bool) -> Result<f64, ObservablesError> {
        let m = self.mean_scalars()?;
        let (sxx, syy, sxy) = if staggered {
            (m.st_sxx, m.st_syy, m.st_sxy)
        } else {
            (m.sxx, m.syy, m.sxy)
        };
        let phi0 = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        let alt = phi0 + std::f64::consts::FRAC_PI_2;
        Ok(if m.s_phi(phi0, staggered) >= m.s_phi(alt, staggered) {
            phi0
        } else {
            alt
        })
    }

    /// Structure factor at angle `phi` with trajectory-level error.
    pub fn structure_factor(
        &self,
        phi: f64,
        staggered: bool,
    ) -> Result<(f64, f64), ObservablesError> {
        self.scalar_stats(|s| s.s_phi(phi, staggered))
    }

    /// `4 F_Q(J^phi) / N`: the trajectory-ensemble quantum Fisher bound per
    /// spin. `F_Q` is the ensemble average of the within-state variance of
    /// the collective quadrature `J^phi = (1/2) sum_i sigma_i^phi`.
    pub fn fq4_over_n(&self, phi: f64, staggered: bool) -> Result<(f64, f64), ObservablesError> {
        let n = self.lattice.n_sites() as f64;
        self.scalar_stats(|s| {
            let within_var = 0.25 * (n * n * s.s_phi(phi, staggered) - s.g2_phi(phi, staggered));
            4.0 * within_var / n
        })
    }

    /// Wineland squeezing parameter `xi_R^{-2}` for rotations about the
    /// in-plane axis `phi` (variance taken along `phi + pi/2`, reference
    /// polarization along z). Values above 1 witness metrologically useful
    /// entanglement. Jackknifed because it is a ratio of ensemble averages.
    pub fn squeezing_inverse(&self, phi: f64) -> Result<(f64, f64), ObservablesError> {
        let n = self.lattice.n_sites() as f64;
        self.jackknife(|s| {
            let perp = phi + std::f64::consts::FRAC_PI_2;
            let (c, si) = (perp.cos(), perp.sin());
            // rho-level variance of J^perp: second moment from the structure
            // factor, first moment from the ensemble mean polarization
            let second = 0.25 * n * n * s.s_phi(perp, false);
            let mean_perp = 0.5 * n * (c * s.mx + si * s.my);
            let var = second - mean_perp * mean_perp;
            let jz = 0.5 * n * s.mz;
            if var <= 0.0 {
                return f64::INFINITY;
            }
            jz * jz / (n * var)
        })
    }

    /// Ensemble-averaged connected correlation table (surviving trajectories).
    pub fn cq_mean(&self) -> Array2<f64> {
        &self.sum_cq / self.n_ok.max(1) as f64
    }

    /// Classical (between-trajectory) connected correlations:
    /// `[m_i^a m_j^b] - [m_i^a][m_j^b]`.
    pub fn cc_mean(&self) -> Array2<f64> {
        let k = 1.0 / self.n_ok.max(1) as f64;
        let d = 3 * self.lattice.n_sites();
        let mut out = &self.sum_prod * k;
        for r in 0..d {
            for c in 0..d {
                out[[r, c]] -= self.sum_means[r] * k * self.sum_means[c] * k;
            }
        }
        out
    }

    /// Distance-binned transverse connected correlations
    /// `C^{phi phi}(r)`, quantum (within-trajectory) or classical part.
    pub fn correlation_profile(
        &self,
        phi: f64,
        quantum: bool,
        staggered: bool,
    ) -> Result<Vec<ProfilePoint>, ObservablesError> {
        if self.n_ok == 0 {
            return Err(ObservablesError::Empty);
        }
        let n = self.lattice.n_sites();
        let table = if quantum { self.cq_mean() } else { self.cc_mean() };
        let (c, s) = (phi.cos(), phi.sin());
        let mut bins: std::collections::BTreeMap<i64, (f64, f64, usize)> =
            std::collections::BTreeMap::new();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (dx, dy) = self.lattice.displacement(i, j);
                let r = (dx * dx + dy * dy).sqrt();
                let sign = if staggered {
                    self.lattice.staggered_sign(i) * self.lattice.staggered_sign(j)
                } else {
                    1.0
                };
                let v = sign
                    * (c * c * table[[i, j]]
                        + s * s * table[[n + i, n + j]]
                        + c * s * (table[[i, n + j]] + table[[n + i, j]]));
                let key = (r / 0.25).round() as i64;
                let e = bins.entry(key).or_insert((0.0, 0.0, 0));
                e.0 += v;
                e.1 += r;
                e.2 += 1;
            }
        }
        Ok(bins
            .into_values()
            .map(|(sum, rsum, cnt)| ProfilePoint {
                r: rsum / cnt as f64,
                value: sum / cnt as f64,
                n_pairs: cnt,
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub r: f64,
    pub value: f64,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecayFit {
    pub length: f64,
    pub amplitude: f64,
    pub n_points: usize,
}

/// Exponential decay length from a correlation profile: least squares of
/// `ln C` against `r` over distances in `[r_min, r_max]` with positive
/// correlations.
pub fn coherence_length(
    profile: &[ProfilePoint],
    r_min: f64,
    r_max: f64,
) -> Result<DecayFit, ObservablesError> {
    let pts: Vec<(f64, f64)> = profile
        .iter()
        .filter(|p| p.r >= r_min && p.r <= r_max && p.value > 0.0)
        .map(|p| (p.r, p.value.ln()))
        .collect();
    if profile.iter().filter(|p| p.r >= r_min && p.r <= r_max).count() == 0 {
        return Err(ObservablesError::ProfileTooShort { need: 3, found: 0 });
    }
    if pts.len() < 3 {
        return Err(if pts.is_empty() {
            ObservablesError::NoDecay
        } else {
            ObservablesError::ProfileTooShort {
                need: 3,
                found: pts.len(),
            }
        });
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    if slope >= 0.0 {
        return Err(ObservablesError::NoDecay);
    }
    Ok(DecayFit {
        length: -1.0 / slope,
        amplitude: intercept.exp(),
        n_points: pts.len(),
    })
}
