//! Symmetric periodic orbits of the test particle.
//!
//! Orbits start in `Fix(Φ_{0,1})`: particle at `(x40, 0)` with velocity
//! `(0, vy40)`. They are periodic when at `T0 = 2mT̄` the particle is again
//! on the x-axis with zero x-velocity, because the primaries then occupy a
//! reversible configuration `Fix(Φ_{0,j})`. Three shooting problems are
//! posed on the end-point values `(y4(T0), vx4(T0))`:
//!
//! * `C_(y,2p)`: `y4(2pT̄) = 0`, a curve in the `(x40, vy40)` plane;
//! * `C_(vx,2q)`: `vx4(2qT̄) = 0`, likewise;
//! * `C_R`: both conditions with `T0` free, a curve in `(x40, vy40, T0)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::choreography::RestrictedProblem;
use crate::dynamics::State;
use crate::error::{Error, Result};
use crate::integrator::{self, flow_with_min_distance};
use crate::linalg::{dot, kernel_direction, norm2, norm_inf, solve};
use crate::symmetry::{
    apply_phi, classify_period, nearest_fixed_label, PermIndex, SymmetryDescriptor,
};

/// Relative finite-difference step for Jacobians.
pub const FD_STEP: f64 = 1e-7;
/// Residual reached by seed and corrector solves.
pub const SOLVE_TOL: f64 = 1e-10;
/// Boundary residual an orbit record must satisfy.
pub const BOUNDARY_TOL: f64 = 1e-8;
/// Particle closure an orbit record must satisfy.
pub const CLOSURE_TOL: f64 = 1e-6;
/// Soft near-collision guard for continuation and acceptance of orbits.
pub const NEAR_COLLISION: f64 = 1e-3;
/// Tolerance on the endpoint's membership in `Fix(Φ_{0,j})`.
pub const LABEL_TOL: f64 = 1e-6;

const SEED_MAX_ITER: usize = 25;
const REFINE_MAX_ITER: usize = 12;

/// One row of the published table of initial conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Table1Row {
    pub index: usize,
    pub t0_over_tbar: u32,
    pub t_over_tbar: u32,
    pub x4: f64,
    pub vy4: f64,
}

const fn row(index: usize, t0_over_tbar: u32, t_over_tbar: u32, x4: f64, vy4: f64) -> Table1Row {
    Table1Row {
        index,
        t0_over_tbar,
        t_over_tbar,
        x4,
        vy4,
    }
}

#[rustfmt::skip]
pub const TABLE1: [Table1Row; 34] = [
    row(1, 8, 48, -1.151372102323705, 1.192735308310391),
    row(2, 6, 12, 0.392064354827005, -2.088580677571261),
    row(3, 6, 12, 1.145057806500420, 4.421084342099486),
    row(4, 20, 120, 0.261908739769502, 0.768218486423285),
    row(5, 6, 12, 1.231780839019731, 3.098731109349930),
    row(6, 2, 12, 1.364108936002170, 2.676664885954700),
    row(7, 2, 12, 1.557889835185201, 1.732435901189350),
    row(8, 4, 24, 1.465940005977230, 2.259081336057390),
    row(9, 8, 48, 2.280410388953660, 1.110720371401547),
    row(10, 10, 60, 2.403183107401021, 1.143021410598030),
    row(11, 12, 24, 2.559935679202217, 1.131013972457270),
    row(12, 14, 84, 2.727991976218170, 1.106651149430582),
    row(13, 16, 96, 2.917809831461645, 1.071706543150445),
    row(14, 18, 36, 3.120691699353664, 1.033349295535902),
    row(15, 20, 120, 3.328354859295013, 0.996039191967667),
    row(16, 22, 132, 3.533520671511424, 0.962303086050867),
    row(17, 24, 48, 3.734052676172197, 0.932325325122930),
    row(18, 26, 156, 3.929756244211741, 0.905635308058075),
    row(19, 28, 168, 4.120942435281265, 0.881706024834630),
    row(20, 30, 60, 4.307972049253366, 0.860093902208141),
    row(21, 32, 192, 4.491174076273875, 0.840442308932970),
    row(22, 34, 204, 4.670837162699625, 0.822465134430957),
    row(23, 36, 72, 4.847214688965527, 0.805930897509638),
    row(24, 38, 228, 5.020530247022094, 0.790650437478274),
    row(25, 40, 240, 5.190982479530962, 0.776467608355671),
    row(26, 42, 84, 5.358748764439068, 0.763252315834217),
    row(27, 44, 264, 5.523988373388391, 0.750895210415233),
    row(28, 46, 276, 5.686844913076257, 0.739303645791943),
    row(29, 48, 96, 5.847448514845465, 0.728398528559842),
    row(30, 50, 300, 6.005917432292149, 0.718111887323824),
    row(31, 52, 312, 6.162359623497286, 0.708384923725778),
    row(32, 54, 108, 6.316873887698146, 0.699166486221477),
    row(33, 56, 336, 6.469550993413046, 0.690411825225105),
    row(34, 58, 348, 6.620474509569266, 0.682081600922888),
];

impl Table1Row {
    /// `m` with `T0 = 2mT̄`.
    pub fn m(&self) -> u32 {
        self.t0_over_tbar / 2
    }
}

/// A starting point for one of the shooting problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedPoint {
    pub x40: f64,
    pub vy40: f64,
    /// Half-period `T0` in time units.
    pub t0: f64,
}

/// End-point values of one shooting integration.
#[derive(Debug, Clone, PartialEq)]
pub struct Shot {
    pub y4: f64,
    pub vx4: f64,
    /// Smallest pairwise distance seen at the step nodes.
    pub min_distance: f64,
    pub end: State,
}

/// Which boundary condition a fixed-time problem imposes at `T0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    Y,
    Vx,
}

/// Which coordinate a one-dimensional seed search keeps fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frozen {
    X40,
    Vy40,
}

/// A solution family of the shooting problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    /// `C_(y,2p)`.
    Y { p: u32 },
    /// `C_(vx,2q)`.
    Vx { q: u32 },
    /// `C_R`, half-period free.
    R,
}

impl Family {
    pub fn tag(&self) -> &'static str {
        match self {
            Family::Y { .. } => "cy",
            Family::Vx { .. } => "cvx",
            Family::R => "cr",
        }
    }

    pub fn parameter(&self) -> Option<u32> {
        match *self {
            Family::Y { p } => Some(p),
            Family::Vx { q } => Some(q),
            Family::R => None,
        }
    }

}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Y { p } => write!(f, "C_(y,{})", 2 * p),
            Family::Vx { q } => write!(f, "C_(vx,{})", 2 * q),
            Family::R => write!(f, "C_R"),
        }
    }
}

/// One symmetric periodic orbit in the on-disk record layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub index: usize,
    #[serde(rename = "T0_over_Tbar")]
    pub t0_over_tbar: u32,
    #[serde(rename = "T_over_Tbar")]
    pub t_over_tbar: u32,
    pub x4: f64,
    pub vy4: f64,
    pub j_end: u8,
    #[serde(rename = "M")]
    pub big_m: u32,
    /// `|y4(T0)|`.
    pub res_y: f64,
    /// `|vx4(T0)|`.
    pub res_vx: f64,
    /// `|φ_T(u0) - u0|_∞` over the particle's four components.
    pub res_closure: f64,
}

impl OrbitRecord {
    /// `m` with `T0 = 2mT̄`.
    pub fn m(&self) -> u32 {
        self.t0_over_tbar / 2
    }

    pub fn j_end(&self) -> Result<PermIndex> {
        PermIndex::new(self.j_end)
    }

    pub fn satisfies_invariants(&self) -> bool {
        self.t_over_tbar == 2 * self.big_m * self.t0_over_tbar
            && self.res_y < BOUNDARY_TOL
            && self.res_vx < BOUNDARY_TOL
            && self.res_closure < CLOSURE_TOL
    }
}

/// Newton refinement of one orbit together with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub record: OrbitRecord,
    pub iterations: usize,
    /// Final minus initial `(x40, vy40)`.
    pub correction: [f64; 2],
    pub min_distance: f64,
    /// Residual of the endpoint against `Fix(Φ_{0,j_end})`.
    pub label_residual: f64,
}

fn fd_step(v: f64) -> f64 {
    FD_STEP * v.abs().max(1.0)
}

impl RestrictedProblem {
    /// Integrates the restricted problem from the reversible initial
    /// condition `(x40, vy40)` over `t0`.
    pub fn shoot(&self, x40: f64, vy40: f64, t0: f64) -> Result<Shot> {
        let u0 = self.initial_state(x40, vy40)?;
        let (end, min_distance) = flow_with_min_distance(self.config(), &u0, t0, self.settings)?;
        let [x4, y4] = end.position(3);
        let [vx4, _] = end.velocity(3);
        debug_assert!(x4.is_finite());
        Ok(Shot {
            y4,
            vx4,
            min_distance,
            end,
        })
    }

    /// `(y4(T0), vx4(T0))`.
    pub fn boundary_values(&self, x40: f64, vy40: f64, t0: f64) -> Result<(f64, f64)> {
        let s = self.shoot(x40, vy40, t0)?;
        Ok((s.y4, s.vx4))
    }

    /// Half period `2mT̄` in time units.
    pub fn half_period(&self, m: u32) -> f64 {
        2.0 * m as f64 * self.t_bar
    }

    /// Residual vector of a family at `z = (x40, vy40[, T0])`.
    pub fn family_residual(&self, family: Family, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.family_eval(family, z)?.0)
    }

    fn family_eval(&self, family: Family, z: &[f64]) -> Result<(Vec<f64>, Shot)> {
        let shot = match family {
            Family::Y { p } | Family::Vx { q: p } => self.shoot(z[0], z[1], self.half_period(p))?,
            Family::R => self.shoot(z[0], z[1], z[2])?,
        };
        let res = match family {
            Family::Y { .. } => vec![shot.y4],
            Family::Vx { .. } => vec![shot.vx4],
            Family::R => vec![shot.y4, shot.vx4],
        };
        Ok((res, shot))
    }

    /// Central-difference Jacobian of the family residual.
    fn family_jacobian(&self, family: Family, z: &[f64]) -> Result<Vec<Vec<f64>>> {
        let n = z.len();
        let mut cols = Vec::with_capacity(n);
        for i in 0..n {
            let h = fd_step(z[i]);
            let mut zp = z.to_vec();
            let mut zm = z.to_vec();
            zp[i] += h;
            zm[i] -= h;
            let rp = self.family_residual(family, &zp)?;
            let rm = self.family_residual(family, &zm)?;
            cols.push(rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>());
        }
        let m = cols[0].len();
        Ok((0..m).map(|r| (0..n).map(|c| cols[c][r]).collect()).collect())
    }

    /// One-dimensional Newton on `y4` or `vx4` at `T0 = 2pT̄` with one
    /// coordinate of `guess` frozen.
    pub fn find_seed(&self, p: u32, which: Condition, guess: SeedPoint, frozen: Frozen) -> Result<SeedPoint> {
        let t0 = self.half_period(p);
        let eval = |v: f64| -> Result<f64> {
            let (x, vy) = match frozen {
                Frozen::X40 => (guess.x40, v),
                Frozen::Vy40 => (v, guess.vy40),
            };
            let (y4, vx4) = self.boundary_values(x, vy, t0)?;
            Ok(match which {
                Condition::Y => y4,
                Condition::Vx => vx4,
            })
        };
        let mut v = match frozen {
            Frozen::X40 => guess.vy40,
            Frozen::Vy40 => guess.x40,
        };
        let mut r = eval(v)?;
        let mut iterations = 0;
        while r.abs() >= SOLVE_TOL {
            if iterations == SEED_MAX_ITER {
                return Err(Error::NoConvergence {
                    iterations,
                    residual: r.abs(),
                });
            }
            let h = fd_step(v);
            let slope = (eval(v + h)? - eval(v - h)?) / (2.0 * h);
            if !(slope.is_finite() && slope != 0.0) {
                return Err(Error::NoConvergence {
                    iterations,
                    residual: r.abs(),
                });
            }
            v -= r / slope;
            r = eval(v)?;
            iterations += 1;
        }
        Ok(match frozen {
            Frozen::X40 => SeedPoint { x40: guess.x40, vy40: v, t0 },
            Frozen::Vy40 => SeedPoint { x40: v, vy40: guess.vy40, t0 },
        })
    }

    /// Two-dimensional Newton on `(y4(T0), vx4(T0)) = (0, 0)` at
    /// `T0 = 2mT̄`. Returns the solution, residual, iteration count and the
    /// smallest particle–primary distance of the final shot.
    pub fn solve_periodic(&self, x40: f64, vy40: f64, m: u32) -> Result<([f64; 2], Shot, usize)> {
        let t0 = self.half_period(m);
        let mut z = [x40, vy40];
        let mut shot = self.shoot(z[0], z[1], t0)?;
        let mut iterations = 0;
        loop {
            let res = shot.y4.abs().max(shot.vx4.abs());
            if res < SOLVE_TOL * 0.1 {
                break;
            }
            if iterations == REFINE_MAX_ITER {
                if res < BOUNDARY_TOL {
                    break;
                }
                return Err(Error::NoConvergence {
                    iterations,
                    residual: res,
                });
            }
            let jac = self.family_jacobian(Family::R, &[z[0], z[1], t0])?;
            let a: Vec<Vec<f64>> = jac.iter().map(|r| r[..2].to_vec()).collect();
            let dz = solve(&a, &[-shot.y4, -shot.vx4]).ok_or(Error::NoConvergence {
                iterations,
                residual: res,
            })?;
            z = [z[0] + dz[0], z[1] + dz[1]];
            shot = self.shoot(z[0], z[1], t0)?;
            iterations += 1;
            let new_res = shot.y4.abs().max(shot.vx4.abs());
            // Further steps are below the integration noise floor.
            if norm_inf(&dz) < 1e-14 * norm_inf(&z).max(1.0) && new_res < BOUNDARY_TOL {
                break;
            }
        }
        Ok((z, shot, iterations))
    }

    /// Refines `(x40, vy40)` to a symmetric periodic orbit with half period
    /// `2mT̄`, classifies its full period and checks closure.
    pub fn refine_periodic(&self, x40: f64, vy40: f64, m: u32) -> Result<Refinement> {
        if m == 0 {
            return Err(Error::DomainError("m must be positive".into()));
        }
        let (z, shot, iterations) = self.solve_periodic(x40, vy40, m)?;
        let (j_end, label_residual) = nearest_fixed_label(1, 2, &shot.end, LABEL_TOL)?;
        if label_residual > LABEL_TOL {
            return Err(Error::DomainError(format!(
                "endpoint is {label_residual:.3e} away from every reversible configuration"
            )));
        }
        let t0 = self.half_period(m);
        let (big_m, period) = classify_period(PermIndex::ONE, j_end, t0)?;
        let u0 = self.initial_state(z[0], z[1])?;
        let end = integrator::flow(self.config(), &u0, period, self.settings)?;
        let closure = particle_distance(&end, &u0);
        let record = OrbitRecord {
            index: 0,
            t0_over_tbar: 2 * m,
            t_over_tbar: 2 * big_m * 2 * m,
            x4: z[0],
            vy4: z[1],
            j_end: j_end.get(),
            big_m,
            res_y: shot.y4.abs(),
            res_vx: shot.vx4.abs(),
            res_closure: closure,
        };
        Ok(Refinement {
            record,
            iterations,
            correction: [z[0] - x40, z[1] - vy40],
            min_distance: shot.min_distance,
            label_residual,
        })
    }

    /// Re-integrates a stored record and recomputes its residuals.
    pub fn reverify(&self, record: &OrbitRecord) -> Result<OrbitRecord> {
        let t0 = self.half_period(record.m());
        let shot = self.shoot(record.x4, record.vy4, t0)?;
        let (j_end, _) = nearest_fixed_label(1, 2, &shot.end, LABEL_TOL)?;
        let (big_m, period) = classify_period(PermIndex::ONE, j_end, t0)?;
        let u0 = self.initial_state(record.x4, record.vy4)?;
        let end = integrator::flow(self.config(), &u0, period, self.settings)?;
        Ok(OrbitRecord {
            j_end: j_end.get(),
            big_m,
            t_over_tbar: 2 * big_m * record.t0_over_tbar,
            res_y: shot.y4.abs(),
            res_vx: shot.vx4.abs(),
            res_closure: particle_distance(&end, &u0),
            ..record.clone()
        })
    }

    /// Largest deviation between the backward-time states and the
    /// `Φ_{0,1}` image of the forward-time states, sampled at `samples`
    /// times in `(0, t_max]`.
    pub fn reflection_residual(&self, x40: f64, vy40: f64, t_max: f64, samples: usize) -> Result<f64> {
        let u0 = self.initial_state(x40, vy40)?;
        let fwd = integrator::integrate(self.config(), &u0, t_max, self.settings)?;
        let bwd = integrator::integrate(self.config(), &u0, -t_max, self.settings)?;
        let phi = SymmetryDescriptor::restricted(PermIndex::ONE);
        let mut worst: f64 = 0.0;
        for k in 1..=samples {
            let t = t_max * k as f64 / samples as f64;
            let f = apply_phi(&phi, &fwd.state_at(t)?)?;
            let b = bwd.state_at(-t)?;
            worst = worst.max(f.distance_inf(&b));
        }
        Ok(worst)
    }
}

/// `|Δu_4|_∞` between two restricted states.
pub fn particle_distance(a: &State, b: &State) -> f64 {
    let pa = a.position(3);
    let pb = b.position(3);
    let va = a.velocity(3);
    let vb = b.velocity(3);
    [pa[0] - pb[0], pa[1] - pb[1], va[0] - vb[0], va[1] - vb[1]]
        .iter()
        .fold(0.0, |m, v| m.max(v.abs()))
}

/// Outcome of refining one published row.
#[derive(Debug, Clone)]
pub struct RowOutcome {
    pub row: Table1Row,
    pub result: std::result::Result<Refinement, Error>,
}

/// Iteration limit of the table reproduction.
pub const TABLE_MAX_ITER: usize = 6;
/// Largest correction to a published coordinate.
pub const TABLE_MAX_CORRECTION: f64 = 1e-6;

impl RowOutcome {
    /// Reasons the row misses the reproduction thresholds (empty when it passes).
    pub fn failures(&self) -> Vec<String> {
        let r = match &self.result {
            Ok(r) => r,
            Err(e) => return vec![e.to_string()],
        };
        let mut out = Vec::new();
        if r.iterations > TABLE_MAX_ITER {
            out.push(format!("{} Newton iterations", r.iterations));
        }
        for (name, c) in ["x4", "vy4"].iter().zip(r.correction) {
            if !(c.abs() < TABLE_MAX_CORRECTION) {
                out.push(format!("correction of {name} is {c:.3e}"));
            }
        }
        if !(r.record.res_y < BOUNDARY_TOL && r.record.res_vx < BOUNDARY_TOL) {
            out.push(format!(
                "boundary residuals ({:.3e}, {:.3e})",
                r.record.res_y, r.record.res_vx
            ));
        }
        if r.record.t_over_tbar != self.row.t_over_tbar {
            out.push(format!(
                "T/T̄ = {} but the table lists {}",
                r.record.t_over_tbar, self.row.t_over_tbar
            ));
        }
        out
    }

    pub fn passes(&self) -> bool {
        self.failures().is_empty()
    }

    /// Whether the failure stems from a close approach to a primary.
    pub fn is_near_collision(&self) -> bool {
        match &self.result {
            Err(Error::CollisionProximity { .. }) => true,
            Ok(r) => r.min_distance < NEAR_COLLISION,
            Err(_) => false,
        }
    }
}

impl RestrictedProblem {
    /// Refines the given published rows (all when `rows` is empty) in
    /// parallel; results are ordered by row index.
    pub fn reproduce_table1(&self, rows: &[usize]) -> Result<Vec<RowOutcome>> {
        use rayon::prelude::*;
        let selected: Vec<Table1Row> = if rows.is_empty() {
            TABLE1.to_vec()
        } else {
            rows.iter()
                .map(|&i| {
                    TABLE1
                        .iter()
                        .find(|r| r.index == i)
                        .copied()
                        .ok_or_else(|| Error::InvalidIndex(format!("table row {i} does not exist")))
                })
                .collect::<Result<_>>()?
        };
        // Label computation is shared; do it once before fanning out.
        self.labels()?;
        let mut out: Vec<RowOutcome> = selected
            .par_iter()
            .map(|row| {
                let result = self.refine_periodic(row.x4, row.vy4, row.m()).map(|mut r| {
                    r.record.index = row.index;
                    r
                });
                RowOutcome { row: *row, result }
            })
            .collect();
        out.sort_by_key(|o| o.row.index);
        Ok(out)
    }
}

/// Why a curve trace stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    MaxPoints,
    /// A corrector or predictor shot came within [`NEAR_COLLISION`] of a primary.
    NearCollision { distance: f64 },
    /// The corrector failed after the step was halved this many times.
    CorrectorDivergence { halvings: u32 },
}

/// One converged continuation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// `(x40, vy40)`, plus `T0` for `C_R`.
    pub z: Vec<f64>,
    /// Family residuals at `z`.
    pub residuals: Vec<f64>,
    /// `y4(T0)` and `vx4(T0)` whether or not the family constrains them.
    pub y4: f64,
    pub vx4: f64,
    /// Accumulated chord length in scaled coordinates.
    pub arclength: f64,
    pub min_distance: f64,
}

impl CurvePoint {
    pub fn x40(&self) -> f64 {
        self.z[0]
    }

    pub fn vy40(&self) -> f64 {
        self.z[1]
    }

    pub fn residual_norm(&self) -> f64 {
        norm_inf(&self.residuals)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationCurve {
    pub family: Family,
    pub points: Vec<CurvePoint>,
    pub termination: Termination,
}

impl ContinuationCurve {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Half period of point `k` in time units.
    pub fn t0(&self, k: usize, t_bar: f64) -> f64 {
        match self.family {
            Family::Y { p } | Family::Vx { q: p } => 2.0 * p as f64 * t_bar,
            Family::R => self.points[k].z[2],
        }
    }
}

/// Default arclength step.
pub const DEFAULT_STEP: f64 = 1e-2;
const MAX_HALVINGS: u32 = 6;
const CORRECTOR_MAX_ITER: usize = 8;
/// Scale of `T0` in the continuation metric.
const T0_SCALE: f64 = 10.0;

fn scale(z: &[f64]) -> Vec<f64> {
    z.iter()
        .enumerate()
        .map(|(i, v)| if i == 2 { v / T0_SCALE } else { *v })
        .collect()
}

fn unscale(w: &[f64]) -> Vec<f64> {
    w.iter()
        .enumerate()
        .map(|(i, v)| if i == 2 { v * T0_SCALE } else { *v })
        .collect()
}

enum Correction {
    Converged(CurvePoint),
    NearCollision(f64),
    Failed,
}

impl RestrictedProblem {
    /// Jacobian of the family residual with respect to scaled coordinates.
    fn scaled_jacobian(&self, family: Family, w: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut jac = self.family_jacobian(family, &unscale(w))?;
        if w.len() == 3 {
            for row in &mut jac {
                row[2] *= T0_SCALE;
            }
        }
        Ok(jac)
    }

    /// Newton on the family residual augmented by `τ·(w − w_pred) = 0`.
    fn correct(&self, family: Family, w_pred: &[f64], tau: &[f64]) -> Result<Correction> {
        let mut w = w_pred.to_vec();
        for _ in 0..CORRECTOR_MAX_ITER {
            let (res, shot) = match self.family_eval(family, &unscale(&w)) {
                Ok(v) => v,
                Err(Error::CollisionProximity { distance, .. }) => return Ok(Correction::NearCollision(distance)),
                Err(e @ Error::DimensionMismatch { .. }) => return Err(e),
                Err(_) => return Ok(Correction::Failed),
            };
            if shot.min_distance < NEAR_COLLISION {
                return Ok(Correction::NearCollision(shot.min_distance));
            }
            if norm_inf(&res) < SOLVE_TOL {
                return Ok(Correction::Converged(CurvePoint {
                    z: unscale(&w),
                    residuals: res,
                    y4: shot.y4,
                    vx4: shot.vx4,
                    arclength: 0.0,
                    min_distance: shot.min_distance,
                }));
            }
            let mut a = match self.scaled_jacobian(family, &w) {
                Ok(j) => j,
                Err(Error::CollisionProximity { distance, .. }) => return Ok(Correction::NearCollision(distance)),
                Err(_) => return Ok(Correction::Failed),
            };
            a.push(tau.to_vec());
            let mut rhs: Vec<f64> = res.iter().map(|r| -r).collect();
            let offset: Vec<f64> = w.iter().zip(w_pred).map(|(a, b)| a - b).collect();
            rhs.push(-dot(tau, &offset));
            let Some(dw) = solve(&a, &rhs) else {
                return Ok(Correction::Failed);
            };
            w.iter_mut().zip(&dw).for_each(|(a, d)| *a += d);
        }
        Ok(Correction::Failed)
    }

    /// Pseudo-arclength continuation of `family` from `seed`.
    ///
    /// `step` is the chord length in `(x40, vy40, T0/10)` coordinates; its
    /// sign picks the direction (positive means increasing `x40` at the
    /// seed). The first predictor follows the kernel of the Jacobian; later
    /// ones the secant through the last two points.
    pub fn trace_curve(
        &self,
        seed: SeedPoint,
        family: Family,
        step: f64,
        max_points: usize,
    ) -> Result<ContinuationCurve> {
        if !(step.is_finite() && step != 0.0) {
            return Err(Error::InvalidConfig(format!("continuation step {step} must be nonzero")));
        }
        let z0 = match family {
            Family::R => vec![seed.x40, seed.vy40, seed.t0],
            _ => vec![seed.x40, seed.vy40],
        };
        let mut curve = ContinuationCurve {
            family,
            points: Vec::new(),
            termination: Termination::MaxPoints,
        };
        if max_points == 0 {
            return Ok(curve);
        }
        let (res0, shot0) = self.family_eval(family, &z0)?;
        let md0 = shot0.min_distance;
        if norm_inf(&res0) >= SOLVE_TOL {
            return Err(Error::NoConvergence {
                iterations: 0,
                residual: norm_inf(&res0),
            });
        }
        if md0 < NEAR_COLLISION {
            curve.termination = Termination::NearCollision { distance: md0 };
            return Ok(curve);
        }
        curve.points.push(CurvePoint {
            z: z0.clone(),
            residuals: res0,
            y4: shot0.y4,
            vx4: shot0.vx4,
            arclength: 0.0,
            min_distance: md0,
        });

        let h_max = step.abs();
        let mut h = h_max;
        let w0 = scale(&z0);
        let mut hint = vec![0.0; w0.len()];
        hint[0] = step.signum();
        let jac = self.scaled_jacobian(family, &w0)?;
        let mut tau = kernel_direction(&jac, Some(&hint)).ok_or(Error::NoConvergence {
            iterations: 0,
            residual: 0.0,
        })?;

        while curve.points.len() < max_points {
            let last = curve.points.last().expect("seeded");
            let w_last = scale(&last.z);
            let mut halvings = 0;
            let accepted = loop {
                let w_pred: Vec<f64> = w_last.iter().zip(&tau).map(|(w, t)| w + h * t).collect();
                match self.correct(family, &w_pred, &tau)? {
                    Correction::Converged(p) => break Some(p),
                    Correction::NearCollision(d) => {
                        curve.termination = Termination::NearCollision { distance: d };
                        break None;
                    }
                    Correction::Failed if halvings < MAX_HALVINGS => {
                        halvings += 1;
                        h *= 0.5;
                    }
                    Correction::Failed => {
                        curve.termination = Termination::CorrectorDivergence { halvings };
                        break None;
                    }
                }
            };
            let Some(mut point) = accepted else {
                log::debug!("{family} trace stopped after {} points: {:?}", curve.points.len(), curve.termination);
                return Ok(curve);
            };
            let w_new = scale(&point.z);
            let chord: Vec<f64> = w_new.iter().zip(&w_last).map(|(a, b)| a - b).collect();
            let len = norm2(&chord);
            point.arclength = last.arclength + len;
            if len > 0.0 {
                tau = chord.iter().map(|c| c / len).collect();
            }
            curve.points.push(point);
            if halvings == 0 {
                h = (h * 1.5).min(h_max);
            }
        }
        Ok(curve)
    }

    /// Points where a `C_(y,2p)` curve meets a `C_(vx,2p)` curve, refined to
    /// both residuals below [`SOLVE_TOL`]. Each point is a symmetric periodic
    /// orbit with half period `2pT̄`.
    pub fn find_intersection(&self, a: &ContinuationCurve, b: &ContinuationCurve) -> Result<Vec<SeedPoint>> {
        let p = match (a.family, b.family) {
            (Family::Y { p }, Family::Vx { q }) | (Family::Vx { q }, Family::Y { p }) if p == q => p,
            (fa, fb) if fa == fb => {
                log::warn!("intersection of {fa} with itself is degenerate");
                return Ok(Vec::new());
            }
            (fa, fb) => {
                return Err(Error::InvalidConfig(format!(
                    "intersection needs C_(y,2p) and C_(vx,2p) with equal p, got {fa} and {fb}"
                )))
            }
        };
        let mut found: Vec<SeedPoint> = Vec::new();
        for sa in a.points.windows(2) {
            for sb in b.points.windows(2) {
                let Some(guess) = segment_intersection(
                    [sa[0].x40(), sa[0].vy40()],
                    [sa[1].x40(), sa[1].vy40()],
                    [sb[0].x40(), sb[0].vy40()],
                    [sb[1].x40(), sb[1].vy40()],
                ) else {
                    continue;
                };
                let (z, shot, _) = match self.solve_periodic(guess[0], guess[1], p) {
                    Ok(v) => v,
                    Err(e) => {
                        log::debug!("intersection near {guess:?} did not refine: {e}");
                        continue;
                    }
                };
                if shot.y4.abs().max(shot.vx4.abs()) >= SOLVE_TOL {
                    continue;
                }
                if found
                    .iter()
                    .any(|s| (s.x40 - z[0]).abs().max((s.vy40 - z[1]).abs()) < 1e-8)
                {
                    continue;
                }
                found.push(SeedPoint {
                    x40: z[0],
                    vy40: z[1],
                    t0: self.half_period(p),
                });
            }
        }
        found.sort_by(|a, b| a.x40.total_cmp(&b.x40));
        Ok(found)
    }

    /// Refines every point of a `C_R` curve where `T0` crosses an even
    /// multiple `2mT̄`. Records are sorted by `x40` and numbered from 1.
    pub fn detect_periodic_on_curve(&self, curve: &ContinuationCurve) -> Result<Vec<OrbitRecord>> {
        if curve.family != Family::R {
            return Err(Error::InvalidConfig(format!(
                "periodic orbits are read off C_R, not {}",
                curve.family
            )));
        }
        let mut records: Vec<OrbitRecord> = Vec::new();
        let level = |pt: &CurvePoint| pt.z[2] / (2.0 * self.t_bar);
        for (k, seg) in curve.points.windows(2).enumerate() {
            let (la, lb) = (level(&seg[0]), level(&seg[1]));
            let lo = la.min(lb);
            let hi = la.max(lb);
            let first = lo.ceil().max(1.0) as u32;
            let last = hi.floor() as u32;
            for m in first..=last {
                let mf = m as f64;
                // An integer hit exactly at a shared endpoint belongs to the earlier segment.
                if k > 0 && (la - mf).abs() == 0.0 {
                    continue;
                }
                let s = if lb == la { 0.0 } else { (mf - la) / (lb - la) };
                let x = seg[0].z[0] + s * (seg[1].z[0] - seg[0].z[0]);
                let vy = seg[0].z[1] + s * (seg[1].z[1] - seg[0].z[1]);
                match self.refine_periodic(x, vy, m) {
                    Ok(r) => {
                        let dup = records.iter().any(|o| {
                            o.t0_over_tbar == r.record.t0_over_tbar
                                && (o.x4 - r.record.x4).abs().max((o.vy4 - r.record.vy4).abs()) < 1e-8
                        });
                        if !dup {
                            records.push(r.record);
                        }
                    }
                    Err(e) => log::debug!("crossing m = {m} near ({x}, {vy}) did not refine: {e}"),
                }
            }
        }
        records.sort_by(|a, b| a.x4.total_cmp(&b.x4));
        for (i, r) in records.iter_mut().enumerate() {
            r.index = i + 1;
        }
        Ok(records)
    }
}

/// Intersection point of the closed segments `p0p1` and `q0q1`.
fn segment_intersection(p0: [f64; 2], p1: [f64; 2], q0: [f64; 2], q1: [f64; 2]) -> Option<[f64; 2]> {
    let d1 = [p1[0] - p0[0], p1[1] - p0[1]];
    let d2 = [q1[0] - q0[0], q1[1] - q0[1]];
    let den = d1[0] * d2[1] - d1[1] * d2[0];
    if den == 0.0 {
        return None;
    }
    let r = [q0[0] - p0[0], q0[1] - p0[1]];
    let s = (r[0] * d2[1] - r[1] * d2[0]) / den;
    let t = (r[0] * d1[1] - r[1] * d1[0]) / den;
    if (0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&t) {
        Some([p0[0] + s * d1[0], p0[1] + s * d1[1]])
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_invariants() {
        for (k, r) in TABLE1.iter().enumerate() {
            assert_eq!(r.index, k + 1);
            assert_eq!(r.t0_over_tbar % 2, 0);
            let ratio = r.t_over_tbar / r.t0_over_tbar;
            assert!(ratio == 2 || ratio == 6, "row {}", r.index);
            assert_eq!(r.t_over_tbar % r.t0_over_tbar, 0);
        }
    }

    #[test]
    fn segments_cross() {
        let p = segment_intersection([0.0, 0.0], [2.0, 2.0], [0.0, 2.0], [2.0, 0.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-15 && (p[1] - 1.0).abs() < 1e-15);
        assert!(segment_intersection([0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]).is_none());
        assert!(segment_intersection([0.0, 0.0], [1.0, 1.0], [2.0, 0.0], [3.0, -1.0]).is_none());
    }

    #[test]
    fn family_display() {
        assert_eq!(Family::Y { p: 10 }.to_string(), "C_(y,20)");
        assert_eq!(Family::Vx { q: 3 }.to_string(), "C_(vx,6)");
        assert_eq!(Family::R.tag(), "cr");
        assert_eq!(Family::R.parameter(), None);
    }

    #[test]
    fn record_field_names() {
        let r = OrbitRecord {
            index: 2,
            t0_over_tbar: 6,
            t_over_tbar: 12,
            x4: 0.5,
            vy4: -2.0,
            j_end: 1,
            big_m: 1,
            res_y: 0.0,
            res_vx: 0.0,
            res_closure: 0.0,
        };
        let v = serde_json::to_value(&r).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            ["M", "T0_over_Tbar", "T_over_Tbar", "index", "j_end", "res_closure", "res_vx", "res_y", "vy4", "x4"]
        );
        assert!(r.satisfies_invariants());
    }
}
