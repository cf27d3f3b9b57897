//! Energy beamforming for radio-stripe power beacons.
//!
//! A stripe of multi-antenna power beacons (PBs) around a room charges
//! energy-harvesting devices. The crate covers the layout, channel and
//! estimation models, the nonlinear harvester, exposure constraints, the
//! precoder designs and the conic solvers behind them, and a Monte Carlo
//! harness.

pub mod channel;
pub mod conic;
pub mod emf;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod harvester;
pub mod linalg;
pub mod precoding;

pub use channel::{ChannelEstimate, ChannelRealization, ChannelStats, PilotConfig, UeSpec};
pub use conic::{SolveReport, SolveStatus, SolverSettings};
pub use emf::{EmfConstraintSet, ProximityParams, QuadratureSpec, VolumetricParams};
pub use error::{Error, Result};
pub use geometry::{Point3, RoomGeometry, StripeLayout};
pub use harness::{RunReport, ScenarioConfig, Schedule};
pub use harvester::EhCurve;
pub use precoding::{DesignSettings, Method, PrecoderInput, PrecoderSolution};
