//! Two-body approximation for a test particle far from the primaries.
//!
//! The three primaries are replaced by a single mass `3` at the origin
//! (`G = 1`). At an apsis of a Kepler ellipse the particle sits on the
//! x-axis with purely vertical velocity, which is exactly the reversible
//! initial configuration used for the restricted problem.
//!
//! An orbit of the restricted problem with half period `T0 = 2mT̄` starts at
//! one apsis and is at the opposite apsis at `T0`, so the matching Kepler
//! ellipse has period `2T0 = 4mT̄`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::porbits::SeedPoint;

/// Central mass standing in for the three primaries.
pub const CENTRAL_MASS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Apsis {
    #[default]
    Apocenter,
    Pericenter,
}

impl Apsis {
    /// `e` for the apocenter and `-e` for the pericenter.
    fn signed(self, e: f64) -> f64 {
        match self {
            Apsis::Apocenter => e,
            Apsis::Pericenter => -e,
        }
    }
}

/// A Kepler ellipse about the fictitious central mass, observed at one apsis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeplerApprox {
    /// Semi-major axis.
    pub a: f64,
    pub e: f64,
    pub apsis: Apsis,
}

fn check_eccentricity(e: f64) -> Result<()> {
    if (0.0..1.0).contains(&e) {
        Ok(())
    } else {
        Err(Error::DomainError(format!("eccentricity {e} outside [0, 1)")))
    }
}

impl KeplerApprox {
    pub fn new(a: f64, e: f64, apsis: Apsis) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::DomainError(format!("semi-major axis {a} must be positive")));
        }
        check_eccentricity(e)?;
        Ok(Self { a, e, apsis })
    }

    /// Distance of the apsis from the central mass.
    pub fn x4(&self) -> f64 {
        self.a * (1.0 + self.apsis.signed(self.e))
    }

    /// Speed at the apsis.
    pub fn vy4(&self) -> f64 {
        let e = self.apsis.signed(self.e);
        (CENTRAL_MASS * (1.0 - e) / (self.a * (1.0 + e))).sqrt()
    }

    pub fn period(&self) -> f64 {
        2.0 * PI * (self.a.powi(3) / CENTRAL_MASS).sqrt()
    }
}

/// Apsis speed `√(3(1−e)) / √x4` of an ellipse passing through `x4`.
///
/// Invariant under `(x4, vy4) → (αx4, vy4/√α)`.
pub fn approx_velocity(x4: f64, e: f64) -> Result<f64> {
    if !(x4 > 0.0 && x4.is_finite()) {
        return Err(Error::DomainError(format!("x4 = {x4} must be positive")));
    }
    if !(0.0..=1.0).contains(&e) {
        return Err(Error::DomainError(format!("eccentricity {e} outside [0, 1]")));
    }
    Ok((CENTRAL_MASS * (1.0 - e)).sqrt() / x4.sqrt())
}

/// `((3/(4π²)) P²)^(1/3)`: semi-major axis for Kepler period `P`.
fn semi_major_axis(period: f64) -> f64 {
    (CENTRAL_MASS / (4.0 * PI * PI) * period * period).cbrt()
}

/// Eccentricity of the apocentric ellipse through `x4` whose period is
/// `4mT̄`, twice the half period `2mT̄`.
pub fn eccentricity_from_period(x4: f64, m: u32, t_bar: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::DomainError("m must be positive".into()));
    }
    if !(x4 > 0.0 && x4.is_finite()) {
        return Err(Error::DomainError(format!("x4 = {x4} must be positive")));
    }
    let a = semi_major_axis(4.0 * m as f64 * t_bar);
    let e = x4 / a - 1.0;
    if (0.0..1.0).contains(&e) {
        Ok(e)
    } else {
        Err(Error::NoPhysicalSolution(format!(
            "x4 = {x4} with m = {m} implies eccentricity {e}"
        )))
    }
}

/// Seed `(x4, vy4, 2mT̄)` from the ellipse of period `4mT̄` and eccentricity
/// `e`, observed at `apsis`.
pub fn kepler_seed_at(m: u32, e: f64, apsis: Apsis, t_bar: f64) -> Result<SeedPoint> {
    if m == 0 {
        return Err(Error::DomainError("m must be positive".into()));
    }
    if !(0.0..1.0).contains(&e) {
        return Err(Error::NoPhysicalSolution(format!("eccentricity {e} outside [0, 1)")));
    }
    let k = KeplerApprox::new(semi_major_axis(4.0 * m as f64 * t_bar), e, apsis)?;
    Ok(SeedPoint {
        x40: k.x4(),
        vy40: k.vy4(),
        t0: 2.0 * m as f64 * t_bar,
    })
}

/// Apocentric [`kepler_seed_at`].
pub fn kepler_seed(m: u32, e: f64, t_bar: f64) -> Result<SeedPoint> {
    kepler_seed_at(m, e, Apsis::Apocenter, t_bar)
}
