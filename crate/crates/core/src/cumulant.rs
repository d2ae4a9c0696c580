//! Truncated-cumulant representation of a lattice spin state.
//!
//! At order 1 the state is the table of on-site Bloch vectors
//! `m_s^a = <sigma_s^a>`. At order 2 it additionally carries the two-site
//! covariances `F_{sm}^{ab} = <sigma_s^a sigma_m^b> - m_s^a m_m^b` for
//! distinct sites. Higher moments are reconstructed by setting all cumulants
//! beyond the kept order to zero, which is exact for product states (order 1)
//! and for any two-site system (order 2).
//!
//! Storage is axis-major: component `(a, s)` of the mean table lives at index
//! `a*n + s`, and the covariance is a dense symmetric `3n x 3n` matrix in the
//! same composite index with the 3x3 same-site blocks identically zero.

use crate::lattice::{Axis, PauliProduct, AXES};
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CumulantError {
    #[error("moment closure supports at most four operators, got {0}")]
    TooManyOps(usize),
    #[error("collective moments are defined for orders 1, 2 and 4, got {0}")]
    BadMomentOrder(usize),
    #[error("site index {site} out of range for {n} sites")]
    SiteRange { site: usize, n: usize },
    #[error("snapshot does not describe a valid state: {0}")]
    BadSnapshot(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CumulantState {
    pub n: usize,
    /// Truncation order: 1 (means only) or 2 (means plus covariances).
    pub order: usize,
    pub t: f64,
    /// Axis-major means, length `3n`.
    pub means: Vec<f64>,
    /// Symmetric `3n x 3n` covariance table; `None` at order 1.
    pub cov: Option<Array2<f64>>,
}

impl CumulantState {
    /// Every spin pointing down: `m = (0, 0, -1)`, all covariances zero.
    pub fn all_down(n: usize, order: usize) -> Self {
        assert!(order == 1 || order == 2, "truncation order must be 1 or 2");
        let mut means = vec![0.0; 3 * n];
        means[2 * n..].fill(-1.0);
        let cov = (order == 2).then(|| Array2::zeros((3 * n, 3 * n)));
        CumulantState {
            n,
            order,
            t: 0.0,
            means,
            cov,
        }
    }

    #[inline]
    pub fn idx(&self, axis: Axis, site: usize) -> usize {
        axis.idx() * self.n + site
    }

    #[inline]
    pub fn mean(&self, site: usize, axis: Axis) -> f64 {
        self.means[axis.idx() * self.n + site]
    }

    #[inline]
    pub fn set_mean(&mut self, site: usize, axis: Axis, v: f64) {
        self.means[axis.idx() * self.n + site] = v;
    }

    /// Covariance entry; zero for coincident sites or at order 1.
    #[inline]
    pub fn fvar(&self, s: usize, a: Axis, m: usize, b: Axis) -> f64 {
        if s == m {
            return 0.0;
        }
        match &self.cov {
            Some(c) => c[[a.idx() * self.n + s, b.idx() * self.n + m]],
            None => 0.0,
        }
    }

    /// Set a covariance entry and its mirror image.
    pub fn set_cov_sym(&mut self, s: usize, a: Axis, m: usize, b: Axis, v: f64) {
        assert_ne!(s, m, "same-site covariances are not stored");
        let n = self.n;
        let c = self.cov.as_mut().expect("order-2 state required");
        c[[a.idx() * n + s, b.idx() * n + m]] = v;
        c[[b.idx() * n + m, a.idx() * n + s]] = v;
    }

    /// Second moment `<sigma_s^a sigma_m^b>`, including the coincident-site
    /// case where the product reduces through the Pauli algebra.
    pub fn two_point(&self, s: usize, a: Axis, m: usize, b: Axis) -> Complex64 {
        if s == m {
            let p = PauliProduct::single(a).mul_axis(b);
            let val = match p.axis {
                None => 1.0,
                Some(c) => self.mean(s, c),
            };
            p.coeff * val
        } else {
            Complex64::new(
                self.fvar(s, a, m, b) + self.mean(s, a) * self.mean(m, b),
                0.0,
            )
        }
    }

    /// Moment of a product of up to four Pauli operators in the given order.
    /// Coincident sites are reduced through the single-site algebra first;
    /// the remaining distinct-site moment is expanded with all cumulants
    /// beyond the truncation order set to zero.
    pub fn moment_from_cumulants(
        &self,
        ops: &[(usize, Axis)],
    ) -> Result<Complex64, CumulantError> {
        if ops.len() > 4 {
            return Err(CumulantError::TooManyOps(ops.len()));
        }
        for &(site, _) in ops {
            if site >= self.n {
                return Err(CumulantError::SiteRange { site, n: self.n });
            }
        }
        // Group by site, preserving the relative order within each site.
        // Operators on distinct sites commute, so this is exact.
        let mut coeff = Complex64::new(1.0, 0.0);
        let mut groups: Vec<(usize, PauliProduct)> = Vec::with_capacity(ops.len());
        for &(site, axis) in ops {
            if let Some(g) = groups.iter_mut().find(|g| g.0 == site) {
                g.1 = g.1.mul_axis(axis);
            } else {
                groups.push((site, PauliProduct::single(axis)));
            }
        }
        let mut singles: Vec<(usize, Axis)> = Vec::with_capacity(groups.len());
        for (site, p) in groups {
            coeff *= p.coeff;
            if let Some(axis) = p.axis {
                singles.push((site, axis));
            }
        }
        Ok(coeff * self.distinct_moment(&singles))
    }

    /// Closure moment for operators on pairwise distinct sites.
    fn distinct_moment(&self, ops: &[(usize, Axis)]) -> f64 {
        let m = |i: usize| self.mean(ops[i].0, ops[i].1);
        let f = |i: usize, j: usize| self.fvar(ops[i].0, ops[i].1, ops[j].0, ops[j].1);
        match ops.len() {
            0 => 1.0,
            1 => m(0),
            2 => f(0, 1) + m(0) * m(1),
            3 => {
                m(0) * m(1) * m(2)
                    + f(0, 1) * m(2)
                    + f(0, 2) * m(1)
                    + f(1, 2) * m(0)
            }
            4 => {
                m(0) * m(1) * m(2) * m(3)
                    + f(0, 1) * m(2) * m(3)
                    + f(0, 2) * m(1) * m(3)
                    + f(0, 3) * m(1) * m(2)
                    + f(1, 2) * m(0) * m(3)
                    + f(1, 3) * m(0) * m(2)
                    + f(2, 3) * m(0) * m(1)
                    + f(0, 1) * f(2, 3)
                    + f(0, 2) * f(1, 3)
                    + f(0, 3) * f(1, 2)
            }
            _ => unreachable!("at most four operators after reduction"),
        }
    }

    /// Real part of `<sigma_s^a sigma_sp^b delta_m^c>` with
    /// `delta_m^c = sigma_m^c - m_m^c`, for `m != s`. The coincident case
    /// `sp == m` goes through the Pauli algebra; the generic case uses
    /// third-cumulant truncation.
    pub fn reduce_three_point(
        &self,
        s: usize,
        a: Axis,
        sp: usize,
        b: Axis,
        m: usize,
        c: Axis,
    ) -> f64 {
        self.three_point_complex(s, a, sp, b, m, c).re
    }

    /// Full complex value of `<sigma_s^a sigma_sp^b delta_m^c>`. The
    /// imaginary parts cancel between mirrored terms of the covariance
    /// equation of motion; keeping them accessible lets tests audit the
    /// cancellation.
    pub fn three_point_complex(
        &self,
        s: usize,
        a: Axis,
        sp: usize,
        b: Axis,
        m: usize,
        c: Axis,
    ) -> Complex64 {
        assert_ne!(s, m, "spectator site must differ from the fluctuation site");
        if sp == m {
            // <sigma_s^a (sigma_m^b sigma_m^c)> - <sigma_s^a sigma_m^b> m_m^c
            let p = PauliProduct::single(b).mul_axis(c);
            let first = match p.axis {
                None => Complex64::new(self.mean(s, a), 0.0),
                Some(d) => {
                    p.coeff
                        * (self.fvar(s, a, m, d) + self.mean(s, a) * self.mean(m, d))
                }
            };
            first - self.two_point(s, a, m, b) * self.mean(m, c)
        } else if sp == s {
            // (sigma_s^a sigma_s^b) reduces on site s; <delta_m^c> = 0 kills
            // the identity part.
            let p = PauliProduct::single(a).mul_axis(b);
            match p.axis {
                None => Complex64::new(0.0, 0.0),
                Some(d) => p.coeff * self.fvar(s, d, m, c),
            }
        } else {
            // Three distinct sites: third cumulant set to zero.
            Complex64::new(
                self.mean(s, a) * self.fvar(sp, b, m, c)
                    + self.mean(sp, b) * self.fvar(s, a, m, c),
                0.0,
            )
        }
    }

    /// Moment `<(T)^order>` of the collective spin average
    /// `T = (1/n) sum_i s_i sigma_i^axis`, with `s_i = 1` (uniform) or the
    /// sublattice sign of `lattice` (staggered). Orders 1, 2 and 4 are
    /// supported; order 2 is the equal-time structure factor at wave vector 0
    /// or (pi, pi). Everything is assembled in O(n^2) from the stored
    /// cumulants.
    pub fn collective_moment(
        &self,
        lattice: &crate::lattice::LatticeSpec,
        axis: Axis,
        staggered: bool,
        order: usize,
    ) -> Result<f64, CumulantError> {
        assert_eq!(lattice.n_sites(), self.n);
        if staggered {
            let signs: Vec<f64> = (0..self.n).map(|i| lattice.staggered_sign(i)).collect();
            self.collective_moment_signed(axis, Some(&signs), order)
        } else {
            self.collective_moment_signed(axis, None, order)
        }
    }

    /// As [`collective_moment`](Self::collective_moment) with explicit signs;
    /// `None` means uniform.
    pub fn collective_moment_signed(
        &self,
        axis: Axis,
        signs: Option<&[f64]>,
        order: usize,
    ) -> Result<f64, CumulantError> {
        let n = self.n;
        let nf = n as f64;
        let uniform = vec![1.0; n];
        let s: &[f64] = match signs {
            Some(s) => s,
            None => &uniform,
        };
        assert_eq!(s.len(), n);
        let mu: Vec<f64> = (0..n).map(|i| s[i] * self.mean(i, axis)).collect();
        match order {
            1 => Ok(mu.iter().sum::<f64>() / nf),
            2 => {
                let mut acc = nf; // coincident pairs: sigma^2 = I
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            acc += s[i]
                                * s[j]
                                * (self.fvar(i, axis, j, axis)
                                    + self.mean(i, axis) * self.mean(j, axis));
                        }
                    }
                }
                Ok(acc / (nf * nf))
            }
            4 => Ok(self.collective_fourth(axis, s) / nf.powi(4)),
            other => Err(CumulantError::BadMomentOrder(other)),
        }
    }

    /// `<W^4>` with `W = sum_i s_i sigma_i^axis`, decomposed over site
    /// coincidence patterns of the four ordered factors. Within each pattern
    /// the repeated-site products collapse through `sigma^2 = I` and the
    /// remaining distinct-site moment is closed at the stored order.
    fn collective_fourth(&self, axis: Axis, s: &[f64]) -> f64 {
        let n = self.n;
        let nf = n as f64;
        let mu: Vec<f64> = (0..n).map(|i| s[i] * self.mean(i, axis)).collect();

        // Signed pair tables. T is the full second moment, F the covariance.
        let mut sum_sst = 0.0; // sum_{i != j} s_i s_j <sigma_i sigma_j>
        let mut big_b = 0.0; // sum_{i != j} Ft_{ij}
        let mut row: Vec<f64> = vec![0.0; n]; // Ft row sums
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let ft = s[i] * s[j] * self.fvar(i, axis, j, axis);
                sum_sst += ft + mu[i] * mu[j];
                big_b += ft;
                row[i] += ft;
            }
        }

        // Power sums of the signed means.
        let p1: f64 = mu.iter().sum();
        let p2: f64 = mu.iter().map(|v| v * v).sum();
        let p3: f64 = mu.iter().map(|v| v * v * v).sum();
        let p4: f64 = mu.iter().map(|v| v * v * v * v).sum();

        // All four factors on distinct sites, mean-product part.
        let s_mmmm = p1.powi(4) - 6.0 * p2 * p1 * p1 + 3.0 * p2 * p2 + 8.0 * p3 * p1 - 6.0 * p4;

        // One covariance times two means, and two covariances, both over
        // ordered distinct index tuples.
        let mut s_fmm = 0.0;
        let mut s_ff = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let ft = s[i] * s[j] * self.fvar(i, axis, j, axis);
                if ft == 0.0 {
                    continue;
                }
                let q1 = p1 - mu[i] - mu[j];
                let q2 = p2 - mu[i] * mu[i] - mu[j] * mu[j];
                s_fmm += ft * (q1 * q1 - q2);
                s_ff += ft * (big_b - 2.0 * row[i] - 2.0 * row[j] + 2.0 * ft);
            }
        }

        // Coincidence patterns: 4 | 3+1 | 2+2 | 2+1+1 | 1+1+1+1.
        nf + 3.0 * nf * (nf - 1.0)
            + (4.0 + 6.0 * (nf - 2.0)) * sum_sst
            + s_mmmm
            + 6.0 * s_fmm
            + 3.0 * s_ff
    }

    /// Largest Bloch-vector component magnitude, used by divergence monitors.
    pub fn max_mean_abs(&self) -> f64 {
        self.means.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.means.iter().all(|v| v.is_finite())
            && self
                .cov
                .as_ref()
                .map_or(true, |c| c.iter().all(|v| v.is_finite()))
    }

    /// Synthetic state with uniformly drawn means and covariances. Not
    /// physical in general; intended for validating algebraic identities.
    pub fn random<R: rand::Rng>(n: usize, order: usize, rng: &mut R) -> Self {
        let mut st = CumulantState::all_down(n, order);
        for v in st.means.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        if order == 2 {
            for s in 0..n {
                for m in (s + 1)..n {
                    for a in AXES {
                        for b in AXES {
                            let v = rng.gen_range(-0.3..0.3);
                            st.set_cov_sym(s, a, m, b, v);
                        }
                    }
                }
            }
        }
        st
    }
}

/// Serialized form of a state. Means are stored site-major
/// (`[m_0^x, m_0^y, m_0^z, m_1^x, ...]`); the covariance is the packed upper
/// triangle (row-major, diagonal included) of the matrix in the same
/// site-major composite index `3*site + axis`, with same-site entries zero.
#[derive(Debug, Serialize, Deserialize)]
pub struct Snapshot {
    pub order: usize,
    pub n: usize,
    pub t: f64,
    pub means: Vec<f64>,
    pub cov_upper: Option<Vec<f64>>,
}

impl CumulantState {
    pub fn to_snapshot(&self) -> Snapshot {
        let n = self.n;
        let d = 3 * n;
        let site_major = |i: usize| -> f64 {
            let (site, axis) = (i / 3, i % 3);
            self.means[axis * n + site]
        };
        let means = (0..d).map(site_major).collect();
        let cov_upper = self.cov.as_ref().map(|c| {
            let mut packed = Vec::with_capacity(d * (d + 1) / 2);
            for i in 0..d {
                for j in i..d {
                    let (si, ai) = (i / 3, i % 3);
                    let (sj, aj) = (j / 3, j % 3);
                    packed.push(if si == sj {
                        0.0
                    } else {
                        c[[ai * n + si, aj * n + sj]]
                    });
                }
            }
            packed
        });
        Snapshot {
            order: self.order,
            n,
            t: self.t,
            means,
            cov_upper,
        }
    }

    pub fn from_snapshot(snap: &Snapshot) -> Result<Self, CumulantError> {
        let n = snap.n;
        let d = 3 * n;
        if snap.order != 1 && snap.order != 2 {
            return Err(CumulantError::BadSnapshot(format!(
                "order {} not supported",
                snap.order
            )));
        }
        if snap.means.len() != d {
            return Err(CumulantError::BadSnapshot(format!(
                "expected {} means, got {}",
                d,
                snap.means.len()
            )));
        }
        let mut st = CumulantState::all_down(n, snap.order);
        st.t = snap.t;
        for i in 0..d {
            let (site, axis) = (i / 3, i % 3);
            st.means[axis * n + site] = snap.means[i];
        }
        match (&snap.cov_upper, snap.order) {
            (Some(packed), 2) => {
                if packed.len() != d * (d + 1) / 2 {
                    return Err(CumulantError::BadSnapshot(format!(
                        "expected {} packed covariances, got {}",
                        d * (d + 1) / 2,
                        packed.len()
                    )));
                }
                let c = st.cov.as_mut().unwrap();
                let mut k = 0;
                for i in 0..d {
                    for j in i..d {
                        let (si, ai) = (i / 3, i % 3);
                        let (sj, aj) = (j / 3, j % 3);
                        if si != sj {
                            c[[ai * n + si, aj * n + sj]] = packed[k];
                            c[[aj * n + sj, ai * n + si]] = packed[k];
                        }
                        k += 1;
                    }
                }
            }
            (None, 2) => {
                return Err(CumulantError::BadSnapshot(
                    "order-2 snapshot lacks covariances".into(),
                ))
            }
            _ => {}
        }
        Ok(st)
    }

    pub fn snapshot_json(&self) -> String {
        serde_json::to_string(&self.to_snapshot()).expect("snapshot serializes")
    }

    pub fn from_snapshot_json(s: &str) -> Result<Self, CumulantError> {
        let snap: Snapshot =
            serde_json::from_str(s).map_err(|e| CumulantError::BadSnapshot(e.to_string()))?;
        Self::from_snapshot(&snap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Axis::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn all_down_means() {
        let st = CumulantState::all_down(3, 2);
        for i in 0..3 {
            assert_eq!(st.mean(i, X), 0.0);
            assert_eq!(st.mean(i, Y), 0.0);
            assert_eq!(st.mean(i, Z), -1.0);
        }
    }

    #[test]
    fn two_point_same_site_algebra() {
        let mut st = CumulantState::all_down(2, 2);
        st.set_mean(0, Z, 0.3);
        // sigma^x sigma^y = i sigma^z on one site
        let v = st.two_point(0, X, 0, Y);
        assert!((v - Complex64::new(0.0, 0.3)).norm() < 1e-15);
        // sigma^x sigma^x = I
        let v = st.two_point(0, X, 0, X);
        assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn moment_reduces_to_pair_expectation() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let st = CumulantState::random(4, 2, &mut rng);
        for s in 0..4 {
            for m in 0..4 {
                for a in AXES {
                    for b in AXES {
                        let direct = st.two_point(s, a, m, b);
                        let via = st.moment_from_cumulants(&[(s, a), (m, b)]).unwrap();
                        assert!((direct - via).norm() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn three_point_matches_moment_identity() {
        // <sigma_s^a sigma_sp^b delta_m^c>
        //   = <sigma_s^a sigma_sp^b sigma_m^c> - <sigma_s^a sigma_sp^b> m_m^c
        // must hold whatever the coincidence pattern.
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..20 {
            let st = CumulantState::random(4, 2, &mut rng);
            for (s, sp, m) in [(0, 1, 2), (0, 2, 2), (1, 3, 2), (2, 2, 3), (0, 0, 1)] {
                for a in AXES {
                    for b in AXES {
                        for c in AXES {
                            let lhs = st.three_point_complex(s, a, sp, b, m, c);
                            let m3 = st
                                .moment_from_cumulants(&[(s, a), (sp, b), (m, c)])
                                .unwrap();
                            let m2 = st.moment_from_cumulants(&[(s, a), (sp, b)]).unwrap();
                            let rhs = m3 - m2 * st.mean(m, c);
                            assert!(
                                (lhs - rhs).norm() < 1e-13,
                                "mismatch at sites ({s},{sp},{m}) axes ({a},{b},{c}): {lhs} vs {rhs}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn collective_moments_match_bruteforce() {
        let n = 5;
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let st = CumulantState::random(n, 2, &mut rng);
        let signs: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        for (sgn, label) in [(None::<&[f64]>, "uniform"), (Some(&signs[..]), "staggered")] {
            let s: Vec<f64> = match sgn {
                Some(v) => v.to_vec(),
                None => vec![1.0; n],
            };
            for order in [1usize, 2, 4] {
                let fast = st
                    .collective_moment_signed(Axis::Y, sgn.map(|_| &signs[..]), order)
                    .unwrap();
                // Brute force: expand the multinomial sum term by term.
                let mut acc = 0.0;
                let mut idx = vec![0usize; order];
                loop {
                    let ops: Vec<(usize, Axis)> = idx.iter().map(|&i| (i, Axis::Y)).collect();
                    let w: f64 = idx.iter().map(|&i| s[i]).product();
                    let v = st.moment_from_cumulants(&ops).unwrap();
                    assert!(v.im.abs() < 1e-13);
                    acc += w * v.re;
                    // odometer over n^order tuples
                    let mut k = 0;
                    loop {
                        idx[k] += 1;
                        if idx[k] < n {
                            break;
                        }
                        idx[k] = 0;
                        k += 1;
                        if k == order {
                            break;
                        }
                    }
                    if k == order {
                        break;
                    }
                }
                acc /= (n as f64).powi(order as i32);
                assert!(
                    (fast - acc).abs() < 1e-12,
                    "{label} order {order}: fast {fast} vs brute {acc}"
                );
            }
        }
    }

    #[test]
    fn order_one_collective_moments() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let st = CumulantState::random(4, 1, &mut rng);
        let m2 = st.collective_moment_signed(Axis::X, None, 2).unwrap();
        let mut acc = 4.0;
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    acc += st.mean(i, X) * st.mean(j, X);
                }
            }
        }
        assert!((m2 - acc / 16.0).abs() < 1e-14);
    }

    #[test]
    fn too_many_ops_rejected() {
        let st = CumulantState::all_down(6, 2);
        let ops = vec![(0, X), (1, X), (2, X), (3, X), (4, X)];
        assert_eq!(
            st.moment_from_cumulants(&ops),
            Err(CumulantError::TooManyOps(5))
        );
    }

    #[test]
    fn snapshot_roundtrip() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for order in [1usize, 2] {
            let mut st = CumulantState::random(4, order, &mut rng);
            st.t = 3.25;
            let json = st.snapshot_json();
            let back = CumulantState::from_snapshot_json(&json).unwrap();
            assert_eq!(st, back);
        }
    }

    #[test]
    fn snapshot_rejects_bad_shapes() {
        let st = CumulantState::all_down(3, 2);
        let mut snap = st.to_snapshot();
        snap.means.pop();
        assert!(CumulantState::from_snapshot(&snap).is_err());
        let mut snap = st.to_snapshot();
        snap.cov_upper = None;
        assert!(CumulantState::from_snapshot(&snap).is_err());
    }
}
