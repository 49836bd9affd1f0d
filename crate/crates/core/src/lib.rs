//! Restricted four-body problem driven by the figure-eight three-body
//! choreography.
//!
//! The crate is organised bottom-up:
//!
//! * [`dynamics`]: planar N-body vector field, energy and collision guard.
//! * [`symmetry`]: the reversing-symmetry family `Φ_θ = P̃ ∘ G̃_θ ∘ K̃`, its
//!   permuted variants, fixed-point parameterisation and period classification.
//! * [`integrator`]: adaptive Dormand–Prince 8(5,3) integration with dense
//!   output and event location.
//! * [`choreography`]: the figure-eight constants, restricted initial states
//!   and self-consistency checks of the choreography.
//! * [`porbits`]: shooting problems, seeds, continuation, intersection and
//!   refinement of symmetric periodic orbits (including the published table).
//! * [`kepler2b`]: two-body approximation used to seed distant orbits.
//! * [`io`]: CSV/JSON-lines file formats.

pub mod choreography;
pub mod dynamics;
pub mod error;
pub mod integrator;
pub mod io;
pub mod kepler2b;
pub mod linalg;
pub mod porbits;
pub mod symmetry;

pub use choreography::{ConstantsMode, EightConstants, RestrictedProblem};
pub use dynamics::{State, SystemConfig, Vec2};
pub use error::{Error, Result};
pub use integrator::{IntegratorSettings, Trajectory};
pub use symmetry::{PermIndex, SymmetryDescriptor};
