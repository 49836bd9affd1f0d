//! The figure-eight choreography and the restricted four-body problem built
//! on it.
//!
//! The three unit-mass primaries start at the isosceles configuration with
//! body 3 on the positive x-axis; the massless fourth body is co-integrated
//! with them as one autonomous 16-dimensional system.

use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::dynamics::{State, SystemConfig, Vec2, COLLISION_DISTANCE};
use crate::error::{Error, Result};
use crate::integrator::{self, find_event, IntegratorSettings};
use crate::linalg::{dot, least_squares, norm_inf};
use crate::symmetry::{
    apply_phi_vec, fixed_point_residual, nearest_fixed_label, PermIndex, SymmetryDescriptor,
};

/// Printed period of the choreography.
pub const PRINTED_PERIOD: f64 = 6.32591398;

/// Separation below which two configuration labels are considered tied.
pub const LABEL_SEPARATION: f64 = 1e-6;

/// Initial positions, velocities and period of the figure-eight.
///
/// Serialised as `{"positions": [[x,y]×3], "velocities": [[x,y]×3], "period": T}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EightConstants {
    pub positions: [Vec2; 3],
    pub velocities: [Vec2; 3],
    pub period: f64,
}

impl Default for EightConstants {
    fn default() -> Self {
        Self::printed()
    }
}

impl EightConstants {
    pub fn printed() -> Self {
        Self {
            positions: [
                [-0.54050854325, 0.3452633140],
                [-0.54050854325, -0.3452633140],
                [1.081017086500, 0.0],
            ],
            velocities: [
                [1.0971223818, -0.23360476285],
                [-1.0971223818, -0.23360476285],
                [0.0, 0.46720952570],
            ],
            period: PRINTED_PERIOD,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self
            .positions
            .iter()
            .chain(&self.velocities)
            .flatten()
            .all(|v| v.is_finite());
        if !finite || !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::InvalidConfig(
                "choreography constants must be finite with a positive period".into(),
            ));
        }
        Ok(())
    }

    /// Characteristic time `T̄ = T / 12`.
    pub fn t_bar(&self) -> f64 {
        self.period / 12.0
    }

    /// The three primaries at `t = 0`.
    pub fn initial_state(&self) -> State {
        State::new(0.0, &self.positions, &self.velocities).expect("three bodies")
    }

    /// Primaries plus the test particle at `(x40, 0)` with velocity
    /// `(0, vy40)`: a point of `Fix(Φ_{0,1})`.
    pub fn restricted_initial_state(&self, x40: f64, vy40: f64) -> Result<State> {
        if !(x40.is_finite() && vy40.is_finite()) {
            return Err(Error::DomainError(format!(
                "non-finite initial condition ({x40}, {vy40})"
            )));
        }
        for (i, [x, y]) in self.positions.iter().enumerate() {
            let d = (x40 - x).hypot(*y);
            if !(d > COLLISION_DISTANCE) {
                return Err(Error::CollisionProximity {
                    i: i + 1,
                    j: 4,
                    distance: d,
                });
            }
        }
        let mut positions = self.positions.to_vec();
        let mut velocities = self.velocities.to_vec();
        positions.push([x40, 0.0]);
        velocities.push([0.0, vy40]);
        State::new(0.0, &positions, &velocities)
    }

    /// `(Σ r_i, Σ v_i)`; both vanish in the barycentric frame.
    pub fn barycentre_and_momentum(&self) -> (Vec2, Vec2) {
        let sum = |vs: &[Vec2; 3]| {
            vs.iter()
                .fold([0.0, 0.0], |acc, v| [acc[0] + v[0], acc[1] + v[1]])
        };
        (sum(&self.positions), sum(&self.velocities))
    }
}

/// Three unit masses with `G = 1`; bodies 1, 2 form the pair.
pub fn eight_config() -> SystemConfig {
    SystemConfig::new(1, 1, vec![1.0, 1.0, 1.0], 1.0).expect("valid masses")
}

/// The eight-figure primaries plus a massless fourth body.
pub fn restricted_config() -> SystemConfig {
    SystemConfig::new(1, 2, vec![1.0, 1.0, 1.0, 0.0], 1.0).expect("valid masses")
}

/// Three-body figure-eight initial state with the printed constants.
pub fn eight_initial_state() -> State {
    EightConstants::printed().initial_state()
}

/// Restricted initial state with the printed constants.
pub fn restricted_initial_state(x40: f64, vy40: f64) -> Result<State> {
    EightConstants::printed().restricted_initial_state(x40, vy40)
}

/// Period recovered from the symmetry of the printed initial condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinedPeriod {
    pub printed: f64,
    pub refined: f64,
    /// `‖Φ_{0,1}(u(T/2)) - u(T/2)‖_∞` at the refined half period.
    pub half_period_residual: f64,
}

impl RefinedPeriod {
    pub fn t_bar(&self) -> f64 {
        self.refined / 12.0
    }
}

/// Refines the period as twice the time of first return to `Fix(Φ_{0,1})`
/// near `T/2`, the minimiser of `‖Φ_{0,1}(u(t)) - u(t)‖` there.
///
/// By reversibility an orbit through two points of `Fix(Φ_{0,1})` at times
/// `0` and `t*` has period `2 t*`.
pub fn refine_period(constants: &EightConstants, settings: IntegratorSettings) -> Result<RefinedPeriod> {
    let cfg = eight_config();
    let desc = SymmetryDescriptor::base(1, 1);
    let half = 0.5 * constants.period;
    let traj = integrator::integrate(&cfg, &constants.initial_state(), half * 1.05, settings)?;
    let slope = |_t: f64, u: &[f64]| -> f64 {
        let s = State::from_vec(0.0, u.to_vec()).expect("12 components");
        let r = fixed_point_residual(&desc, &s).expect("dimension");
        let f = cfg.vector_field(&s).expect("non-colliding");
        let phi_f = apply_phi_vec(&desc, &f).expect("dimension");
        let dr: Vec<f64> = phi_f.iter().zip(&f).map(|(a, b)| a - b).collect();
        dot(&r, &dr)
    };
    let t_star = find_event(&traj, slope, half)?;
    let res = norm_inf(&fixed_point_residual(&desc, &traj.state_at(t_star)?)?);
    Ok(RefinedPeriod {
        printed: constants.period,
        refined: 2.0 * t_star,
        half_period_residual: res,
    })
}

/// Constants corrected so that the orbit is exactly isosceles at `2T̄`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedConstants {
    pub constants: EightConstants,
    /// Largest change of any position or velocity component.
    pub correction: f64,
    /// `‖Φ_{0,2}(u(2T̄)) - u(2T̄)‖_∞` before and after.
    pub initial_residual: f64,
    pub residual: f64,
    pub iterations: usize,
}

fn symmetric_constants(p: &[f64], period: f64) -> EightConstants {
    let [x1, y1, vx1, vy1] = [p[0], p[1], p[2], p[3]];
    EightConstants {
        positions: [[x1, y1], [x1, -y1], [-2.0 * x1, 0.0]],
        velocities: [[vx1, vy1], [-vx1, vy1], [0.0, -2.0 * vy1]],
        period,
    }
}

/// Gauss–Newton correction of the initial condition at fixed period.
///
/// The state is kept in `Fix(Φ_{0,1})` with zero momentum and barycentre,
/// leaving `(x1, y1, vx1, vy1)` free; the residual is the distance of the
/// state at `2T̄ = T/6` from `Fix(Φ_{0,2})`, the first isosceles
/// configuration after the start. Printed constants miss this by about
/// `4e-8`, which bounds how well any orbit of the restricted problem can
/// close over several periods.
pub fn refine_constants(constants: &EightConstants, settings: IntegratorSettings) -> Result<RefinedConstants> {
    constants.validate()?;
    let cfg = eight_config();
    let desc = SymmetryDescriptor::new(1, 1, 0.0, PermIndex::TWO)?;
    let t1 = 2.0 * constants.t_bar();
    let residual = |p: &[f64]| -> Result<Vec<f64>> {
        let c = symmetric_constants(p, constants.period);
        let s = integrator::flow(&cfg, &c.initial_state(), t1, settings)?;
        fixed_point_residual(&desc, &s)
    };
    let [x1, y1] = constants.positions[0];
    let [vx1, vy1] = constants.velocities[0];
    let mut p = vec![x1, y1, vx1, vy1];
    let mut r = residual(&p)?;
    let initial_residual = norm_inf(&r);
    let mut iterations = 0;
    while norm_inf(&r) > 1e-13 && iterations < 8 {
        let mut cols = Vec::with_capacity(4);
        for i in 0..4 {
            let h = 1e-7 * p[i].abs().max(1.0);
            let mut pp = p.clone();
            let mut pm = p.clone();
            pp[i] += h;
            pm[i] -= h;
            let (rp, rm) = (residual(&pp)?, residual(&pm)?);
            cols.push(rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>());
        }
        let jac: Vec<Vec<f64>> = (0..r.len()).map(|k| (0..4).map(|i| cols[i][k]).collect()).collect();
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let dp = least_squares(&jac, &rhs).ok_or(Error::NoConvergence {
            iterations,
            residual: norm_inf(&r),
        })?;
        let next: Vec<f64> = p.iter().zip(&dp).map(|(a, b)| a + b).collect();
        let r_next = residual(&next)?;
        iterations += 1;
        if norm_inf(&r_next) >= norm_inf(&r) {
            break;
        }
        p = next;
        r = r_next;
    }
    let refined = symmetric_constants(&p, constants.period);
    let correction = refined
        .positions
        .iter()
        .chain(&refined.velocities)
        .zip(constants.positions.iter().chain(&constants.velocities))
        .flat_map(|(a, b)| [(a[0] - b[0]).abs(), (a[1] - b[1]).abs()])
        .fold(0.0, f64::max);
    Ok(RefinedConstants {
        constants: refined,
        correction,
        initial_residual,
        residual: norm_inf(&r),
        iterations,
    })
}

/// Labels `j` of the reversible configuration `Fix(Φ_{0,j})` the primaries
/// occupy at `t = 2mT̄`, for `m = 0..6`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationLabels {
    pub labels: [PermIndex; 6],
    /// Fixed-point residual of the primaries at each `2mT̄`.
    pub residuals: [f64; 6],
}

impl ConfigurationLabels {
    pub fn compute(constants: &EightConstants, t_bar: f64, settings: IntegratorSettings) -> Result<Self> {
        let cfg = eight_config();
        let traj = integrator::integrate(&cfg, &constants.initial_state(), 12.0 * t_bar, settings)?;
        let mut labels = [PermIndex::ONE; 6];
        let mut residuals = [0.0; 6];
        for m in 0..6 {
            let s = traj.state_at(2.0 * m as f64 * t_bar)?;
            let (j, r) = nearest_fixed_label(1, 1, &s, LABEL_SEPARATION)?;
            labels[m] = j;
            residuals[m] = r;
        }
        Ok(Self { labels, residuals })
    }

    pub fn label(&self, m: u32) -> PermIndex {
        self.labels[(m % 6) as usize]
    }
}

/// `j` such that the primaries at `2mT̄` lie in `Fix(Φ_{0,j})`, for the
/// printed constants (computed once and cached).
pub fn primary_configuration_label(m: u32) -> Result<PermIndex> {
    static LABELS: OnceLock<std::result::Result<ConfigurationLabels, Error>> = OnceLock::new();
    let labels = LABELS.get_or_init(|| {
        let c = EightConstants::printed();
        ConfigurationLabels::compute(&c, c.t_bar(), IntegratorSettings::default())
    });
    labels.as_ref().map(|l| l.label(m)).map_err(Clone::clone)
}

/// Thresholds applied by [`ChoreographyReport::passes`].
pub const CLOSURE_TOL: f64 = 1e-6;
pub const SHIFT_TOL: f64 = 1e-5;
pub const ISOSCELES_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsoscelesCheck {
    pub m: u32,
    pub label: u8,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChoreographyReport {
    pub period: f64,
    /// `|φ_T(u_c) - u_c|_∞` over the period in the constants.
    pub closure: f64,
    pub refined_period: f64,
    /// Same closure over the refined period.
    pub closure_refined: f64,
    /// `max_t |r_i(t + T/3) - r_σ(i)(t)|` on a 200-point grid.
    pub shift_residual: f64,
    /// 1-based `σ(i)` matched at `t = 0`.
    pub shift_permutation: [usize; 3],
    pub isosceles: Vec<IsoscelesCheck>,
    pub energy_drift: f64,
}

impl ChoreographyReport {
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.closure < CLOSURE_TOL) {
            out.push(format!("closure {:.3e} >= {CLOSURE_TOL:e}", self.closure));
        }
        if !(self.shift_residual < SHIFT_TOL) {
            out.push(format!("shift residual {:.3e} >= {SHIFT_TOL:e}", self.shift_residual));
        }
        for c in &self.isosceles {
            if !(c.residual < ISOSCELES_TOL) {
                out.push(format!(
                    "isosceles residual at m = {} is {:.3e} >= {ISOSCELES_TOL:e}",
                    c.m, c.residual
                ));
            }
        }
        out
    }

    pub fn passes(&self) -> bool {
        self.failures().is_empty()
    }
}

/// Self-consistency of the choreography constants: period closure,
/// choreographic time shift and recurrence of the isosceles configurations.
pub fn verify_choreography(
    constants: &EightConstants,
    settings: IntegratorSettings,
) -> Result<ChoreographyReport> {
    let cfg = eight_config();
    let u0 = constants.initial_state();
    let period = constants.period;
    let t_bar = constants.t_bar();

    let traj = integrator::integrate(&cfg, &u0, period * (4.0 / 3.0), settings)?;
    let closure = traj.state_at(period)?.distance_inf(&u0);

    let refined = refine_period(constants, settings)?;
    let closure_refined =
        integrator::flow(&cfg, &u0, refined.refined, settings)?.distance_inf(&u0);

    let shift = period / 3.0;
    let at_shift = traj.state_at(shift)?;
    let mut perm = [0usize; 3];
    for (i, p) in perm.iter_mut().enumerate() {
        let ri = at_shift.position(i);
        *p = (0..3)
            .min_by(|&a, &b| {
                let da = dist(ri, u0.position(a));
                let db = dist(ri, u0.position(b));
                da.total_cmp(&db)
            })
            .expect("three bodies");
    }
    let mut shift_residual: f64 = 0.0;
    for k in 0..200 {
        let t = period * k as f64 / 200.0;
        let now = traj.state_at(t)?;
        let later = traj.state_at(t + shift)?;
        for (i, &p) in perm.iter().enumerate() {
            shift_residual = shift_residual.max(dist(later.position(i), now.position(p)));
        }
    }

    let mut isosceles = Vec::new();
    for m in 1..=6u32 {
        let s = traj.state_at(2.0 * m as f64 * t_bar)?;
        let (j, r) = nearest_fixed_label(1, 1, &s, LABEL_SEPARATION)?;
        isosceles.push(IsoscelesCheck {
            m,
            label: j.get(),
            residual: r,
        });
    }

    let e0 = cfg.total_energy(&u0)?;
    let e1 = cfg.total_energy(&traj.final_state()?)?;

    Ok(ChoreographyReport {
        period,
        closure,
        refined_period: refined.refined,
        closure_refined,
        shift_residual,
        shift_permutation: perm.map(|p| p + 1),
        isosceles,
        energy_drift: ((e1 - e0) / e0).abs(),
    })
}

fn dist(a: Vec2, b: Vec2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// How the constants of a [`RestrictedProblem`] are obtained from the
/// supplied ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ConstantsMode {
    /// Use the constants unchanged.
    AsGiven,
    /// Correct them with [`refine_constants`] first.
    #[default]
    Refined,
}

/// Everything needed to pose shooting problems for the test particle.
#[derive(Debug, Clone)]
pub struct RestrictedProblem {
    /// Constants the primaries are integrated from.
    pub constants: EightConstants,
    /// The constants as supplied, before any refinement.
    pub supplied: EightConstants,
    pub refinement: Option<RefinedConstants>,
    pub t_bar: f64,
    pub settings: IntegratorSettings,
    config: SystemConfig,
    labels: OnceLock<std::result::Result<ConfigurationLabels, Error>>,
}

impl RestrictedProblem {
    pub fn new(constants: EightConstants, mode: ConstantsMode, settings: IntegratorSettings) -> Result<Self> {
        constants.validate()?;
        settings.validate()?;
        let refinement = match mode {
            ConstantsMode::AsGiven => None,
            ConstantsMode::Refined => Some(refine_constants(&constants, settings)?),
        };
        let used = refinement
            .as_ref()
            .map_or_else(|| constants.clone(), |r| r.constants.clone());
        Ok(Self {
            t_bar: used.t_bar(),
            constants: used,
            supplied: constants,
            refinement,
            settings,
            config: restricted_config(),
            labels: OnceLock::new(),
        })
    }

    /// Printed constants, refined, at default tolerances.
    pub fn standard() -> Self {
        static STANDARD: OnceLock<RestrictedProblem> = OnceLock::new();
        STANDARD
            .get_or_init(|| {
                Self::new(EightConstants::printed(), ConstantsMode::Refined, IntegratorSettings::default())
                    .expect("printed constants refine")
            })
            .clone()
    }

    /// Printed constants used as they are.
    pub fn printed() -> Self {
        Self::new(EightConstants::printed(), ConstantsMode::AsGiven, IntegratorSettings::default())
            .expect("printed constants are valid")
    }

    pub fn mode(&self) -> ConstantsMode {
        if self.refinement.is_some() {
            ConstantsMode::Refined
        } else {
            ConstantsMode::AsGiven
        }
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn initial_state(&self, x40: f64, vy40: f64) -> Result<State> {
        self.constants.restricted_initial_state(x40, vy40)
    }

    pub fn with_settings(&self, settings: IntegratorSettings) -> Self {
        Self {
            settings,
            labels: OnceLock::new(),
            ..self.clone()
        }
    }

    pub fn labels(&self) -> Result<&ConfigurationLabels> {
        self.labels
            .get_or_init(|| ConfigurationLabels::compute(&self.constants, self.t_bar, self.settings))
            .as_ref()
            .map_err(Clone::clone)
    }
}
