//! Planar N-body dynamics.
//!
//! Phase-space vectors are stored as `u = (r_1, …, r_N, v_1, …, v_N)` with
//! every plane vector flattened to two consecutive reals. Body indices are
//! 0-based in the API and 1-based in error messages and file formats.

use crate::error::{Error, Result};

/// Hard proximity guard: the vector field is undefined closer than this.
pub const COLLISION_DISTANCE: f64 = 1e-8;

pub type Vec2 = [f64; 2];

/// Mass list and pairing structure of a planar `N = 2n + k` body system.
///
/// Bodies `2i-1, 2i` (1-based, `i = 1..n`) form the equal-mass pairs, the
/// remaining `k` bodies are unrestricted. Trailing bodies may be massless
/// test particles (mass exactly `0`), which exert no force.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    n_pairs: usize,
    n_free: usize,
    masses: Vec<f64>,
    g: f64,
}

impl SystemConfig {
    pub fn new(n_pairs: usize, n_free: usize, masses: Vec<f64>, g: f64) -> Result<Self> {
        let n = 2 * n_pairs + n_free;
        if masses.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: masses.len(),
            });
        }
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "gravitational constant must be positive, got {g}"
            )));
        }
        if let Some(m) = masses.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::InvalidConfig(format!("invalid mass {m}")));
        }
        if let Some(first_massless) = masses.iter().position(|m| *m == 0.0) {
            if masses[first_massless..].iter().any(|m| *m != 0.0) {
                return Err(Error::InvalidConfig(
                    "massless bodies must trail the massive ones".into(),
                ));
            }
        }
        Ok(Self {
            n_pairs,
            n_free,
            masses,
            g,
        })
    }

    /// All bodies unrestricted (`n = 0`).
    pub fn unpaired(masses: Vec<f64>, g: f64) -> Result<Self> {
        let k = masses.len();
        Self::new(0, k, masses, g)
    }

    pub fn n_bodies(&self) -> usize {
        self.masses.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn is_massless(&self, i: usize) -> bool {
        self.masses[i] == 0.0
    }

    /// `m_{2i-1} = m_{2i}` for every pair.
    pub fn pairing_holds(&self) -> bool {
        (0..self.n_pairs).all(|i| self.masses[2 * i] == self.masses[2 * i + 1])
    }

    /// Phase-space dimension `4N`.
    pub fn dim(&self) -> usize {
        4 * self.n_bodies()
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: len,
            });
        }
        Ok(())
    }

    /// Smallest distance over pairs with at least one massive member, with
    /// the 0-based indices of the closest pair.
    pub fn min_relevant_distance(&self, u: &[f64]) -> (f64, usize, usize) {
        let n = self.n_bodies();
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..n {
            for j in (i + 1)..n {
                if self.is_massless(i) && self.is_massless(j) {
                    continue;
                }
                let d = (u[2 * j] - u[2 * i]).hypot(u[2 * j + 1] - u[2 * i + 1]);
                if d < best.0 {
                    best = (d, i, j);
                }
            }
        }
        best
    }

    /// Evaluates `u' = F(u)` into `du`. This is the hot path used by the
    /// integrator; it does not allocate.
    pub fn rhs(&self, u: &[f64], du: &mut [f64]) -> Result<()> {
        self.check_dim(u.len())?;
        self.check_dim(du.len())?;
        let n = self.n_bodies();
        let (pos, vel) = u.split_at(2 * n);
        let (dpos, acc) = du.split_at_mut(2 * n);
        dpos.copy_from_slice(vel);
        acc.iter_mut().for_each(|a| *a = 0.0);
        for i in 0..n {
            let mi = self.masses[i];
            for j in (i + 1)..n {
                let mj = self.masses[j];
                if mi == 0.0 && mj == 0.0 {
                    continue;
                }
                let dx = pos[2 * j] - pos[2 * i];
                let dy = pos[2 * j + 1] - pos[2 * i + 1];
                let r2 = dx * dx + dy * dy;
                let r = r2.sqrt();
                if !(r > COLLISION_DISTANCE) {
                    return Err(Error::CollisionProximity {
                        i: i + 1,
                        j: j + 1,
                        distance: r,
                    });
                }
                let inv_r3 = self.g / (r2 * r);
                if mj != 0.0 {
                    acc[2 * i] += mj * dx * inv_r3;
                    acc[2 * i + 1] += mj * dy * inv_r3;
                }
                if mi != 0.0 {
                    acc[2 * j] -= mi * dx * inv_r3;
                    acc[2 * j + 1] -= mi * dy * inv_r3;
                }
            }
        }
        Ok(())
    }

    /// `F(u)` as a fresh vector: velocity block followed by accelerations.
    /// The time coordinate advances at unit rate and is not stored.
    pub fn vector_field(&self, s: &State) -> Result<Vec<f64>> {
        let mut du = vec![0.0; s.u.len()];
        self.rhs(&s.u, &mut du)?;
        Ok(du)
    }

    pub fn accelerations(&self, s: &State) -> Result<Vec<Vec2>> {
        let du = self.vector_field(s)?;
        let n = self.n_bodies();
        Ok(du[2 * n..].chunks_exact(2).map(|c| [c[0], c[1]]).collect())
    }

    /// `K + U` over massive bodies.
    pub fn total_energy(&self, s: &State) -> Result<f64> {
        self.check_dim(s.u.len())?;
        let n = self.n_bodies();
        let mut kinetic = 0.0;
        let mut potential = 0.0;
        for i in 0..n {
            let [vx, vy] = s.velocity(i);
            kinetic += 0.5 * self.masses[i] * (vx * vx + vy * vy);
            for j in (i + 1)..n {
                if self.is_massless(i) && self.is_massless(j) {
                    continue;
                }
                let [xi, yi] = s.position(i);
                let [xj, yj] = s.position(j);
                let r = (xj - xi).hypot(yj - yi);
                if !(r > COLLISION_DISTANCE) {
                    return Err(Error::CollisionProximity {
                        i: i + 1,
                        j: j + 1,
                        distance: r,
                    });
                }
                potential -= self.g * self.masses[i] * self.masses[j] / r;
            }
        }
        Ok(kinetic + potential)
    }
}

/// A phase-space point of `N` planar bodies at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    /// `(x_1, y_1, …, x_N, y_N, vx_1, vy_1, …, vx_N, vy_N)`.
    pub u: Vec<f64>,
}

impl State {
    pub fn new(t: f64, positions: &[Vec2], velocities: &[Vec2]) -> Result<Self> {
        if positions.len() != velocities.len() {
            return Err(Error::DimensionMismatch {
                expected: positions.len(),
                found: velocities.len(),
            });
        }
        let u = positions
            .iter()
            .chain(velocities)
            .flat_map(|p| p.iter().copied())
            .collect();
        Ok(Self { t, u })
    }

    pub fn from_vec(t: f64, u: Vec<f64>) -> Result<Self> {
        if u.len() % 4 != 0 {
            return Err(Error::DimensionMismatch {
                expected: 4 * (u.len() / 4 + 1),
                found: u.len(),
            });
        }
        Ok(Self { t, u })
    }

    pub fn zeros(n_bodies: usize) -> Self {
        Self {
            t: 0.0,
            u: vec![0.0; 4 * n_bodies],
        }
    }

    pub fn n_bodies(&self) -> usize {
        self.u.len() / 4
    }

    pub fn position(&self, i: usize) -> Vec2 {
        [self.u[2 * i], self.u[2 * i + 1]]
    }

    pub fn velocity(&self, i: usize) -> Vec2 {
        let o = 2 * self.n_bodies();
        [self.u[o + 2 * i], self.u[o + 2 * i + 1]]
    }

    pub fn set_position(&mut self, i: usize, r: Vec2) {
        self.u[2 * i] = r[0];
        self.u[2 * i + 1] = r[1];
    }

    pub fn set_velocity(&mut self, i: usize, v: Vec2) {
        let o = 2 * self.n_bodies();
        self.u[o + 2 * i] = v[0];
        self.u[o + 2 * i + 1] = v[1];
    }

    pub fn positions(&self) -> Vec<Vec2> {
        (0..self.n_bodies()).map(|i| self.position(i)).collect()
    }

    pub fn velocities(&self) -> Vec<Vec2> {
        (0..self.n_bodies()).map(|i| self.velocity(i)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.u.iter().all(|v| v.is_finite())
    }

    /// Sup-norm distance between the phase-space vectors (time ignored).
    pub fn distance_inf(&self, other: &State) -> f64 {
        self.u
            .iter()
            .zip(&other.u)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Minimum of `|r_i - r_j|` over all pairs of bodies.
pub fn min_pairwise_distance(s: &State) -> f64 {
    let n = s.n_bodies();
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let [xi, yi] = s.position(i);
            let [xj, yj] = s.position(j);
            best = best.min((xj - xi).hypot(yj - yi));
        }
    }
    best
}
