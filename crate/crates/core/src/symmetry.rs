//! Reversing symmetries `Φ_θ = P̃ ∘ G̃_θ ∘ K̃` of the planar `N = 2n + k`
//! body problem with equal masses in pairs, their permuted variants
//! `Φ_{θ,j}`, reversible configurations and period classification.
//!
//! The three component maps act on every body:
//!
//! * `K̃`: `(x, y, vx, vy) ↦ (x, -y, -vx, vy)`,
//! * `G̃_θ`: rotation of every position and velocity by `θ`,
//! * `P̃`: exchange of the two bodies of every equal-mass pair.
//!
//! For three equal-mass bodies (`n = 1`, `k ≥ 1`) the index `j` relabels the
//! first pair and first free body with the cyclic permutation
//! `σ: 1 → 3 → 2 → 1` applied `j - 1` times, so that `Fix(Φ_{0,j})` is
//! `Fix(Φ_{0,j-1})` subject to `σ`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dynamics::{State, SystemConfig, Vec2};
use crate::error::{Error, Result};

/// Tolerance on `‖Φ(u) - u‖_∞` for treating a floating-point state as a
/// reversible configuration.
pub const FIXED_POINT_TOL: f64 = 1e-9;

/// Which cyclic relabeling of the three equal-mass bodies (`1..=3`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct PermIndex(u8);

impl PermIndex {
    pub const ONE: PermIndex = PermIndex(1);
    pub const TWO: PermIndex = PermIndex(2);
    pub const THREE: PermIndex = PermIndex(3);
    pub const ALL: [PermIndex; 3] = [Self::ONE, Self::TWO, Self::THREE];

    pub fn new(j: u8) -> Result<Self> {
        if (1..=3).contains(&j) {
            Ok(PermIndex(j))
        } else {
            Err(Error::InvalidIndex(format!(
                "permutation index must be 1, 2 or 3, got {j}"
            )))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// 0-based body labels `(pair_a, pair_b, axis_body)` playing the roles of
    /// bodies 1, 2, 3 under this relabeling.
    pub fn roles(self) -> [usize; 3] {
        let mut roles = [0usize, 1, 2];
        for _ in 1..self.0 {
            roles = roles.map(sigma);
        }
        roles
    }
}

impl TryFrom<u8> for PermIndex {
    type Error = Error;
    fn try_from(j: u8) -> Result<Self> {
        PermIndex::new(j)
    }
}

impl From<PermIndex> for u8 {
    fn from(p: PermIndex) -> u8 {
        p.0
    }
}

impl fmt::Display for PermIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `σ: 1 → 3 → 2 → 1` on 0-based labels.
fn sigma(i: usize) -> usize {
    match i {
        0 => 2,
        2 => 1,
        1 => 0,
        other => other,
    }
}

/// One member `Φ_{θ,j}` of the reversing-symmetry family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetryDescriptor {
    pub n_pairs: usize,
    pub n_free: usize,
    pub theta: f64,
    pub perm: PermIndex,
}

impl SymmetryDescriptor {
    pub fn new(n_pairs: usize, n_free: usize, theta: f64, perm: PermIndex) -> Result<Self> {
        if perm != PermIndex::ONE && !(n_pairs == 1 && n_free >= 1) {
            return Err(Error::InvalidIndex(format!(
                "permutation index {perm} needs exactly one pair and a free body (n = {n_pairs}, k = {n_free})"
            )));
        }
        Ok(Self {
            n_pairs,
            n_free,
            theta,
            perm,
        })
    }

    /// `Φ_0` with the identity labeling.
    pub fn base(n_pairs: usize, n_free: usize) -> Self {
        Self {
            n_pairs,
            n_free,
            theta: 0.0,
            perm: PermIndex::ONE,
        }
    }

    /// `Φ_{0,j}` for the restricted four-body layout (`n = 1`, `k = 2`).
    pub fn restricted(perm: PermIndex) -> Self {
        Self {
            n_pairs: 1,
            n_free: 2,
            theta: 0.0,
            perm,
        }
    }

    pub fn for_config(config: &SystemConfig, theta: f64, perm: PermIndex) -> Result<Self> {
        let d = Self::new(config.n_pairs(), config.n_free(), theta, perm)?;
        d.check_masses(config)?;
        Ok(d)
    }

    pub fn n_bodies(&self) -> usize {
        2 * self.n_pairs + self.n_free
    }

    /// The descriptor only makes sense against masses equal within each
    /// (relabeled) pair.
    pub fn check_masses(&self, config: &SystemConfig) -> Result<()> {
        if config.n_bodies() != self.n_bodies() {
            return Err(Error::DimensionMismatch {
                expected: self.n_bodies(),
                found: config.n_bodies(),
            });
        }
        let m = config.masses();
        let ok = self.pairs().iter().all(|&(a, b)| m[a] == m[b]);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "pair masses differ; Φ is not a reversing symmetry".into(),
            ))
        }
    }

    /// 0-based index pairs exchanged by `P̃` under this labeling.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<_> = (0..self.n_pairs).map(|i| (2 * i, 2 * i + 1)).collect();
        if self.n_pairs >= 1 && self.perm != PermIndex::ONE {
            let [a, b, _] = self.perm.roles();
            pairs[0] = (a, b);
        }
        pairs
    }

    /// 0-based bodies left in place by `P̃`.
    pub fn free_bodies(&self) -> Vec<usize> {
        let paired: Vec<usize> = self.pairs().iter().flat_map(|&(a, b)| [a, b]).collect();
        (0..self.n_bodies()).filter(|i| !paired.contains(i)).collect()
    }

    fn check_state(&self, s: &State) -> Result<()> {
        if s.u.len() != 4 * self.n_bodies() {
            return Err(Error::DimensionMismatch {
                expected: 4 * self.n_bodies(),
                found: s.u.len(),
            });
        }
        Ok(())
    }
}

fn rot(theta: f64, [x, y]: Vec2) -> Vec2 {
    let (s, c) = theta.sin_cos();
    [c * x - s * y, s * x + c * y]
}

/// `K̃`: reflection across the x-axis with velocity reversal.
pub fn reflect(s: &State) -> State {
    let mut out = s.clone();
    for i in 0..s.n_bodies() {
        let [x, y] = s.position(i);
        let [vx, vy] = s.velocity(i);
        out.set_position(i, [x, -y]);
        out.set_velocity(i, [-vx, vy]);
    }
    out
}

/// `G̃_α`: rotation of every position and velocity.
pub fn rotate_state(alpha: f64, s: &State) -> State {
    let mut out = s.clone();
    for i in 0..s.n_bodies() {
        out.set_position(i, rot(alpha, s.position(i)));
        out.set_velocity(i, rot(alpha, s.velocity(i)));
    }
    out
}

/// `P̃` for the descriptor's pairs.
pub fn swap_pairs(desc: &SymmetryDescriptor, s: &State) -> Result<State> {
    desc.check_state(s)?;
    let mut out = s.clone();
    for (a, b) in desc.pairs() {
        out.set_position(a, s.position(b));
        out.set_position(b, s.position(a));
        out.set_velocity(a, s.velocity(b));
        out.set_velocity(b, s.velocity(a));
    }
    Ok(out)
}

/// `Φ_{θ,j}(u) = P̃(G̃_θ(K̃(u)))`. The map acts on phase space only; the
/// time coordinate is carried through unchanged.
pub fn apply_phi(desc: &SymmetryDescriptor, s: &State) -> Result<State> {
    desc.check_state(s)?;
    swap_pairs(desc, &rotate_state(desc.theta, &reflect(s)))
}

/// Applies `Φ` to a tangent vector (e.g. `F(u)`), which transforms with the
/// same linear map as the state.
pub fn apply_phi_vec(desc: &SymmetryDescriptor, v: &[f64]) -> Result<Vec<f64>> {
    Ok(apply_phi(desc, &State::from_vec(0.0, v.to_vec())?)?.u)
}

/// `Φ(u) - u`, zero iff `u ∈ Fix(Φ)`.
pub fn fixed_point_residual(desc: &SymmetryDescriptor, s: &State) -> Result<Vec<f64>> {
    let image = apply_phi(desc, s)?;
    Ok(image.u.iter().zip(&s.u).map(|(a, b)| a - b).collect())
}

pub fn fixed_point_distance(desc: &SymmetryDescriptor, s: &State) -> Result<f64> {
    Ok(crate::linalg::norm_inf(&fixed_point_residual(desc, s)?))
}

/// Independent coordinates of a point of `Fix(Φ_0)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FixedPointParams {
    /// Position and velocity of body `2i-1` of every pair.
    pub pairs: Vec<(Vec2, Vec2)>,
    /// `(x, vy)` of every free body.
    pub free: Vec<(f64, f64)>,
}

impl FixedPointParams {
    pub fn zeros(n_pairs: usize, n_free: usize) -> Self {
        Self {
            pairs: vec![([0.0; 2], [0.0; 2]); n_pairs],
            free: vec![(0.0, 0.0); n_free],
        }
    }

    pub fn len(&self) -> usize {
        4 * self.pairs.len() + 2 * self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Builds the reversible configuration described by `params`.
///
/// With identity labeling: `x_{2i} = x_{2i-1}`, `y_{2i} = -y_{2i-1}`,
/// `vx_{2i} = -vx_{2i-1}`, `vy_{2i} = vy_{2i-1}`, and free bodies on the
/// x-axis with zero x-velocity. Other labelings relabel bodies 1–3 and a
/// nonzero `theta` rotates the result by `theta / 2`, which lands in
/// `Fix(Φ_θ)`.
pub fn fixed_point_embed(desc: &SymmetryDescriptor, params: &FixedPointParams) -> Result<State> {
    if params.pairs.len() != desc.n_pairs || params.free.len() != desc.n_free {
        return Err(Error::DimensionMismatch {
            expected: 4 * desc.n_pairs + 2 * desc.n_free,
            found: params.len(),
        });
    }
    let n = desc.n_bodies();
    let mut base = State::zeros(n);
    for (i, &([x, y], [vx, vy])) in params.pairs.iter().enumerate() {
        base.set_position(2 * i, [x, y]);
        base.set_velocity(2 * i, [vx, vy]);
        base.set_position(2 * i + 1, [x, -y]);
        base.set_velocity(2 * i + 1, [-vx, vy]);
    }
    for (l, &(x, vy)) in params.free.iter().enumerate() {
        let b = 2 * desc.n_pairs + l;
        base.set_position(b, [x, 0.0]);
        base.set_velocity(b, [0.0, vy]);
    }
    let mut out = base.clone();
    if desc.perm != PermIndex::ONE {
        for (from, to) in desc.perm.roles().into_iter().enumerate() {
            out.set_position(to, base.position(from));
            out.set_velocity(to, base.velocity(from));
        }
    }
    if desc.theta != 0.0 {
        out = rotate_state(0.5 * desc.theta, &out);
    }
    Ok(out)
}

/// Which `Fix(Φ_{0,j})` the state is nearest to, with its residual.
///
/// Fails with [`Error::AmbiguousLabel`] when the two smallest residuals are
/// within `separation` of each other.
pub fn nearest_fixed_label(
    n_pairs: usize,
    n_free: usize,
    s: &State,
    separation: f64,
) -> Result<(PermIndex, f64)> {
    let mut res: Vec<(PermIndex, f64)> = PermIndex::ALL
        .iter()
        .map(|&j| {
            let d = SymmetryDescriptor::new(n_pairs, n_free, 0.0, j)?;
            Ok((j, fixed_point_distance(&d, s)?))
        })
        .collect::<Result<_>>()?;
    res.sort_by(|a, b| a.1.total_cmp(&b.1));
    if res[1].1 - res[0].1 < separation {
        return Err(Error::AmbiguousLabel {
            best: res[0].1,
            second: res[1].1,
        });
    }
    Ok(res[0])
}

/// `(M, T)` for an orbit launched from `Fix(Φ_{0,1})` that reaches
/// `Fix(Φ_{0,j_end})` after `t0`: `M = 1` when `j_end = 1` and `M = 3`
/// otherwise, with `T = 2 M t0`.
pub fn classify_period(j_start: PermIndex, j_end: PermIndex, t0: f64) -> Result<(u32, f64)> {
    if j_start != PermIndex::ONE {
        return Err(Error::InvalidIndex(format!(
            "orbits are launched from Fix(Φ_0,1), got start index {j_start}"
        )));
    }
    let m = if j_end == PermIndex::ONE { 1 } else { 3 };
    Ok((m, 2.0 * m as f64 * t0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_fixed() -> State {
        State::new(
            0.0,
            &[[1.0, 2.0], [1.0, -2.0], [3.0, 0.0], [5.0, 0.0]],
            &[[-4.0, 6.0], [4.0, 6.0], [0.0, 1.0], [0.0, 2.0]],
        )
        .unwrap()
    }

    #[test]
    fn sigma_roles() {
        assert_eq!(PermIndex::ONE.roles(), [0, 1, 2]);
        assert_eq!(PermIndex::TWO.roles(), [2, 0, 1]);
        assert_eq!(PermIndex::THREE.roles(), [1, 2, 0]);
        assert!(PermIndex::new(0).is_err());
        assert!(PermIndex::new(4).is_err());
    }

    #[test]
    fn sample_state_is_fixed() {
        let d = SymmetryDescriptor::restricted(PermIndex::ONE);
        assert_eq!(apply_phi(&d, &sample_fixed()).unwrap(), sample_fixed());
    }

    #[test]
    fn embed_matches_sample() {
        let d = SymmetryDescriptor::restricted(PermIndex::ONE);
        let p = FixedPointParams {
            pairs: vec![([1.0, 2.0], [-4.0, 6.0])],
            free: vec![(3.0, 1.0), (5.0, 2.0)],
        };
        assert_eq!(fixed_point_embed(&d, &p).unwrap(), sample_fixed());
    }

    #[test]
    fn zero_params_embed_to_zero() {
        let d = SymmetryDescriptor::base(2, 1);
        let s = fixed_point_embed(&d, &FixedPointParams::zeros(2, 1)).unwrap();
        assert!(s.u.iter().all(|v| *v == 0.0));
        assert!(fixed_point_residual(&d, &s).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn perturbed_axis_body_residual() {
        let d = SymmetryDescriptor::restricted(PermIndex::ONE);
        let eps = 1e-3;
        let mut s = sample_fixed();
        s.u[5] = eps; // y_3
        let r = fixed_point_residual(&d, &s).unwrap();
        let nonzero: Vec<_> = r.iter().enumerate().filter(|(_, v)| **v != 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert_eq!(nonzero[0].0, 5);
        assert!((nonzero[0].1.abs() - 2.0 * eps).abs() < 1e-15);
    }

    #[test]
    fn perturbed_pair_body_residual() {
        let d = SymmetryDescriptor::restricted(PermIndex::ONE);
        let eps = 1e-3;
        let mut s = sample_fixed();
        s.u[1] += eps; // y_1
        let r = fixed_point_residual(&d, &s).unwrap();
        let nonzero: Vec<_> = r.iter().enumerate().filter(|(_, v)| **v != 0.0).collect();
        assert_eq!(nonzero.len(), 2);
        assert_eq!(nonzero[0].0, 1);
        assert_eq!(nonzero[1].0, 3);
        for (_, v) in nonzero {
            assert!((v.abs() - eps).abs() < 1e-12);
        }
    }

    #[test]
    fn permuted_fix_sets_follow_sigma() {
        // Fix(Φ_{0,j}) is Fix(Φ_{0,j-1}) with body i relabeled as σ(i).
        let p = FixedPointParams {
            pairs: vec![([0.3, 0.7], [0.1, -0.4])],
            free: vec![(1.2, 0.9), (2.5, -0.3)],
        };
        let mut prev = fixed_point_embed(&SymmetryDescriptor::restricted(PermIndex::ONE), &p).unwrap();
        for j in [PermIndex::TWO, PermIndex::THREE] {
            let mut relabeled = prev.clone();
            for i in 0..3 {
                relabeled.set_position(sigma(i), prev.position(i));
                relabeled.set_velocity(sigma(i), prev.velocity(i));
            }
            let d = SymmetryDescriptor::restricted(j);
            assert_eq!(fixed_point_distance(&d, &relabeled).unwrap(), 0.0);
            assert_eq!(fixed_point_embed(&d, &p).unwrap(), relabeled);
            prev = relabeled;
        }
    }

    #[test]
    fn permuted_descriptor_needs_three_bodies() {
        assert!(SymmetryDescriptor::new(2, 1, 0.0, PermIndex::TWO).is_err());
        assert!(SymmetryDescriptor::new(1, 0, 0.0, PermIndex::THREE).is_err());
        assert!(SymmetryDescriptor::new(1, 1, 0.0, PermIndex::TWO).is_ok());
    }

    #[test]
    fn dimension_mismatch() {
        let d = SymmetryDescriptor::base(1, 1);
        assert!(matches!(
            apply_phi(&d, &State::zeros(4)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rotation_examples() {
        let s = State::new(0.0, &[[1.0, 0.0]], &[[0.0, 1.0]]).unwrap();
        assert_eq!(rotate_state(0.0, &s), s);
        let r = rotate_state(std::f64::consts::FRAC_PI_2, &s);
        assert!((r.u[0]).abs() < 1e-16 && (r.u[1] - 1.0).abs() < 1e-16);
        assert!((r.u[2] + 1.0).abs() < 1e-16 && r.u[3].abs() < 1e-16);
    }

    #[test]
    fn period_classification() {
        let tb = 6.32591398 / 12.0;
        let (m, t) = classify_period(PermIndex::ONE, PermIndex::ONE, 6.0 * tb).unwrap();
        assert_eq!(m, 1);
        assert!((t / tb - 12.0).abs() < 1e-12);
        let (m, t) = classify_period(PermIndex::ONE, PermIndex::TWO, 2.0 * tb).unwrap();
        assert_eq!(m, 3);
        assert!((t / tb - 12.0).abs() < 1e-12);
        let (m, t) = classify_period(PermIndex::ONE, PermIndex::THREE, 8.0 * tb).unwrap();
        assert_eq!(m, 3);
        assert!((t / tb - 48.0).abs() < 1e-12);
        assert!(classify_period(PermIndex::TWO, PermIndex::ONE, 1.0).is_err());
    }

    #[test]
    fn composition_orders() {
        // (Φ_{0,1}∘Φ_{0,1}) = id and (Φ_{0,j}∘Φ_{0,1})^3 = id for j = 2, 3.
        let u = State::from_vec(0.0, (0..16).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let p1 = SymmetryDescriptor::restricted(PermIndex::ONE);
        for j in PermIndex::ALL {
            let pj = SymmetryDescriptor::restricted(j);
            let step = |s: &State| apply_phi(&pj, &apply_phi(&p1, s).unwrap()).unwrap();
            let once = step(&u);
            let thrice = step(&step(&once));
            assert!(thrice.distance_inf(&u) < 1e-15);
            if j == PermIndex::ONE {
                assert!(once.distance_inf(&u) < 1e-15);
            } else {
                assert!(once.distance_inf(&u) > 1e-3);
            }
        }
    }

    #[test]
    fn nearest_label_and_ambiguity() {
        let s = sample_fixed();
        let (j, r) = nearest_fixed_label(1, 2, &s, 1e-6).unwrap();
        assert_eq!(j, PermIndex::ONE);
        assert_eq!(r, 0.0);
        // A state fixed by every labeling: all equal-mass bodies at the origin at rest.
        let z = State::zeros(4);
        assert!(matches!(
            nearest_fixed_label(1, 2, &z, 1e-6),
            Err(Error::AmbiguousLabel { .. })
        ));
    }
}
