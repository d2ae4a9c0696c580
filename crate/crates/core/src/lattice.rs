//! Square-lattice geometry and single-site Pauli algebra.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Pauli axis label. The numeric value doubles as a storage index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(usize)]
pub enum Axis {
    X = 0,
    Y = 1,
    Z = 2,
}

pub const AXES: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

impl Axis {
    #[inline]
    pub fn idx(self) -> usize {
        self as usize
    }

    pub fn from_idx(i: usize) -> Axis {
        AXES[i]
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

/// Levi-Civita symbol on axis triples.
#[inline]
pub fn epsilon(a: Axis, b: Axis, c: Axis) -> f64 {
    use Axis::*;
    match (a, b, c) {
        (X, Y, Z) | (Y, Z, X) | (Z, X, Y) => 1.0,
        (X, Z, Y) | (Z, Y, X) | (Y, X, Z) => -1.0,
        _ => 0.0,
    }
}

/// Product of two same-site Pauli operators:
/// `sigma^a sigma^b = delta_ab I + i eps_abc sigma^c`.
/// Returns the scalar coefficient and `None` for the identity.
pub fn pauli_product(a: Axis, b: Axis) -> (Complex64, Option<Axis>) {
    if a == b {
        return (Complex64::new(1.0, 0.0), None);
    }
    let c = AXES
        .into_iter()
        .find(|&c| c != a && c != b)
        .expect("third axis");
    (Complex64::new(0.0, epsilon(a, b, c)), Some(c))
}

/// A scalar multiple of a single-site Pauli operator (or the identity).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliProduct {
    pub coeff: Complex64,
    pub axis: Option<Axis>,
}

impl PauliProduct {
    pub fn identity() -> Self {
        PauliProduct {
            coeff: Complex64::new(1.0, 0.0),
            axis: None,
        }
    }

    pub fn single(axis: Axis) -> Self {
        PauliProduct {
            coeff: Complex64::new(1.0, 0.0),
            axis: Some(axis),
        }
    }

    /// Right-multiply by one more Pauli operator on the same site.
    pub fn mul_axis(self, b: Axis) -> Self {
        match self.axis {
            None => PauliProduct {
                coeff: self.coeff,
                axis: Some(b),
            },
            Some(a) => {
                let (c, ax) = pauli_product(a, b);
                PauliProduct {
                    coeff: self.coeff * c,
                    axis: ax,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Open,
}

impl FromStr for Boundary {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "periodic" | "pbc" => Ok(Boundary::Periodic),
            "open" | "obc" => Ok(Boundary::Open),
            other => Err(format!("unknown boundary condition '{other}'")),
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Boundary::Periodic => "periodic",
            Boundary::Open => "open",
        })
    }
}

/// An `lx` by `ly` square lattice of spins. Site indices are row-major:
/// `site = y*lx + x`.
///
/// With periodic boundaries on a width-2 direction the wrap bond coincides
/// with the interior bond and is counted once; width-1 directions contribute
/// no bonds at all, so a 2x1 spec describes a single dimer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub lx: usize,
    pub ly: usize,
    pub boundary: Boundary,
}

impl LatticeSpec {
    pub fn new(lx: usize, ly: usize, boundary: Boundary) -> Self {
        assert!(lx >= 1 && ly >= 1, "lattice must have at least one site");
        LatticeSpec { lx, ly, boundary }
    }

    pub fn square(l: usize) -> Self {
        Self::new(l, l, Boundary::Periodic)
    }

    #[inline]
    pub fn n_sites(&self) -> usize {
        self.lx * self.ly
    }

    #[inline]
    pub fn site(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.lx && y < self.ly);
        y * self.lx + x
    }

    #[inline]
    pub fn coords(&self, site: usize) -> (usize, usize) {
        (site % self.lx, site / self.lx)
    }

    /// `(-1)^(x+y)`, the sublattice sign used for staggered observables.
    #[inline]
    pub fn staggered_sign(&self, site: usize) -> f64 {
        let (x, y) = self.coords(site);
        if (x + y) % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Nearest neighbors of each site, deduplicated and sorted.
    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        let n = self.n_sites();
        let mut lists = vec![Vec::with_capacity(4); n];
        for s in 0..n {
            let (x, y) = self.coords(s);
            let mut cand = Vec::with_capacity(4);
            let steps: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
            for (dx, dy) in steps {
                let nx = x as isize + dx;
                let ny = y as isize + dy;
                match self.boundary {
                    Boundary::Open => {
                        if nx >= 0 && nx < self.lx as isize && ny >= 0 && ny < self.ly as isize {
                            cand.push(self.site(nx as usize, ny as usize));
                        }
                    }
                    Boundary::Periodic => {
                        let nx = nx.rem_euclid(self.lx as isize) as usize;
                        let ny = ny.rem_euclid(self.ly as isize) as usize;
                        let t = self.site(nx, ny);
                        if t != s {
                            cand.push(t);
                        }
                    }
                }
            }
            cand.sort_unstable();
            cand.dedup();
            lists[s] = cand;
        }
        lists
    }

    /// Unique nearest-neighbor bonds as `(i, j)` pairs with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for (i, nbrs) in self.neighbor_lists().into_iter().enumerate() {
            for j in nbrs {
                if i < j {
                    edges.push((i, j));
                }
            }
        }
        edges
    }

    /// Displacement vector from site `i` to site `j`, using the minimum-image
    /// convention on periodic lattices.
    pub fn displacement(&self, i: usize, j: usize) -> (f64, f64) {
        let (xi, yi) = self.coords(i);
        let (xj, yj) = self.coords(j);
        let mut dx = xj as f64 - xi as f64;
        let mut dy = yj as f64 - yi as f64;
        if self.boundary == Boundary::Periodic {
            let (lx, ly) = (self.lx as f64, self.ly as f64);
            if dx > lx / 2.0 {
                dx -= lx;
            } else if dx < -lx / 2.0 {
                dx += lx;
            }
            if dy > ly / 2.0 {
                dy -= ly;
            } else if dy < -ly / 2.0 {
                dy += ly;
            }
        }
        (dx, dy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinate_roundtrip() {
        let lat = LatticeSpec::new(4, 3, Boundary::Open);
        for s in 0..lat.n_sites() {
            let (x, y) = lat.coords(s);
            assert_eq!(lat.site(x, y), s);
        }
    }

    #[test]
    fn periodic_neighbor_counts() {
        let lat = LatticeSpec::square(4);
        for nbrs in lat.neighbor_lists() {
            assert_eq!(nbrs.len(), 4);
        }
        assert_eq!(lat.edges().len(), 2 * 16);
    }

    #[test]
    fn open_neighbor_counts() {
        let lat = LatticeSpec::new(3, 3, Boundary::Open);
        let lists = lat.neighbor_lists();
        assert_eq!(lists[lat.site(1, 1)].len(), 4);
        assert_eq!(lists[lat.site(0, 0)].len(), 2);
        assert_eq!(lists[lat.site(1, 0)].len(), 3);
        assert_eq!(lat.edges().len(), 12);
    }

    #[test]
    fn width_two_periodic_dedups_wrap_bond() {
        let lat = LatticeSpec::square(2);
        for nbrs in lat.neighbor_lists() {
            assert_eq!(nbrs.len(), 2);
        }
        assert_eq!(lat.edges().len(), 4);
    }

    #[test]
    fn dimer_has_single_bond() {
        for b in [Boundary::Periodic, Boundary::Open] {
            let lat = LatticeSpec::new(2, 1, b);
            assert_eq!(lat.edges(), vec![(0, 1)]);
            assert_eq!(lat.neighbor_lists(), vec![vec![1], vec![0]]);
        }
    }

    #[test]
    fn neighbor_relation_is_symmetric() {
        for lat in [
            LatticeSpec::square(3),
            LatticeSpec::new(5, 2, Boundary::Periodic),
            LatticeSpec::new(4, 4, Boundary::Open),
        ] {
            let lists = lat.neighbor_lists();
            for (i, nbrs) in lists.iter().enumerate() {
                for &j in nbrs {
                    assert!(lists[j].contains(&i), "{i} -> {j} not symmetric");
                }
            }
        }
    }

    #[test]
    fn staggered_signs_alternate_on_bonds() {
        let lat = LatticeSpec::square(4);
        for (i, j) in lat.edges() {
            assert_eq!(lat.staggered_sign(i) * lat.staggered_sign(j), -1.0);
        }
    }

    #[test]
    fn pauli_products() {
        use Axis::*;
        let (c, ax) = pauli_product(X, X);
        assert_eq!(c, Complex64::new(1.0, 0.0));
        assert_eq!(ax, None);
        let (c, ax) = pauli_product(X, Y);
        assert_eq!(c, Complex64::new(0.0, 1.0));
        assert_eq!(ax, Some(Z));
        let (c, ax) = pauli_product(Y, X);
        assert_eq!(c, Complex64::new(0.0, -1.0));
        assert_eq!(ax, Some(Z));
        let (c, ax) = pauli_product(Z, X);
        assert_eq!(c, Complex64::new(0.0, 1.0));
        assert_eq!(ax, Some(Y));
    }

    #[test]
    fn pauli_string_reduction() {
        use Axis::*;
        // sigma^x sigma^y sigma^z = i I
        let p = PauliProduct::single(X).mul_axis(Y).mul_axis(Z);
        assert_eq!(p.axis, None);
        assert!((p.coeff - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        // sigma^y sigma^y sigma^x = sigma^x
        let p = PauliProduct::single(Y).mul_axis(Y).mul_axis(X);
        assert_eq!(p.axis, Some(X));
        assert!((p.coeff - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn minimum_image_displacement() {
        let lat = LatticeSpec::square(4);
        let (dx, dy) = lat.displacement(lat.site(0, 0), lat.site(3, 0));
        assert_eq!((dx, dy), (-1.0, 0.0));
        let (dx, dy) = lat.displacement(lat.site(1, 1), lat.site(2, 3));
        assert_eq!((dx, dy), (1.0, 2.0));
    }
}
