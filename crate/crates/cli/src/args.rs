use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Symmetric periodic orbits of a test particle moving in the field of the
/// figure-eight three-body choreography.
///
/// All times on the command line and in output files are in units of
/// T̄ = T/12, T being the choreography period.
#[derive(Debug, Parser)]
#[command(name = "eight4", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,

    /// More log output (repeat for debug level).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// JSON file overriding the choreography constants.
    #[arg(long, env = "CHOREO_CONSTANTS", global = true)]
    pub constants: Option<PathBuf>,

    /// Use the constants exactly as given instead of correcting them to an
    /// exactly symmetric choreography first.
    #[arg(long, global = true)]
    pub as_given: bool,

    /// Relative and absolute integrator tolerance.
    #[arg(long, default_value_t = 1e-12, global = true)]
    pub tol: f64,

    /// Worker threads for row and seed fan-out (default: available parallelism).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check closure, time shift and isosceles recurrences of the choreography.
    VerifyEight {
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Refine every published initial condition and compare.
    Table1 {
        /// Comma-separated row numbers (1-34); all rows when omitted.
        #[arg(long, value_delimiter = ',')]
        rows: Vec<usize>,
        /// Orbit-record JSON-lines output; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Find a seed and continue a solution curve.
    Trace(TraceArgs),
    /// Refine one orbit and export its full period as CSV.
    Orbit {
        #[arg(long, allow_negative_numbers = true)]
        x40: f64,
        #[arg(long, allow_negative_numbers = true)]
        vy40: f64,
        /// Half period T0 = 2m T̄.
        #[arg(long)]
        m: u32,
        /// Sampling step in T̄.
        #[arg(long, default_value_t = 0.05)]
        sample_step: f64,
        /// Trajectory CSV output; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Initial condition from the two-body approximation.
    KeplerSeed {
        /// Half period T0 = 2m T̄.
        #[arg(long)]
        m: u32,
        /// Eccentricity of the approximating ellipse.
        #[arg(long, conflicts_with = "from_x4", required_unless_present = "from_x4")]
        e: Option<f64>,
        /// Take the eccentricity implied by this x4 and m.
        #[arg(long)]
        from_x4: Option<f64>,
        #[arg(long, value_enum, default_value_t = ApsisArg::Apocenter)]
        apsis: ApsisArg,
        /// Refine the seed into a periodic orbit.
        #[arg(long)]
        refine: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Cy,
    Cvx,
    Cr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FreezeArg {
    X40,
    Vy40,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Forward,
    Backward,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ApsisArg {
    Apocenter,
    Pericenter,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    /// Family to trace; give both cy and cvx to also intersect them.
    #[arg(long, value_enum, required = true)]
    pub family: Vec<FamilyArg>,
    /// Fixed half period 2p T̄ (seed half period for cr).
    #[arg(long)]
    pub p: u32,
    #[arg(long, allow_negative_numbers = true)]
    pub x40: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub vy40_guess: f64,
    /// Coordinate held fixed while solving for the seed.
    #[arg(long, value_enum, default_value_t = FreezeArg::X40)]
    pub freeze: FreezeArg,
    /// Arclength step in (x40, vy40, T0/10) coordinates.
    #[arg(long, default_value_t = eight4_core::porbits::DEFAULT_STEP)]
    pub step: f64,
    /// Points per direction, seed included.
    #[arg(long, default_value_t = 200)]
    pub max_points: usize,
    #[arg(long, value_enum, default_value_t = DirectionArg::Both)]
    pub direction: DirectionArg,
    /// Curve CSV output; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Orbit records found on the curves (JSON lines).
    #[arg(long)]
    pub records: Option<PathBuf>,
}
