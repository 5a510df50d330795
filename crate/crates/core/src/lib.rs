//! Simulation, calibration and open-loop planning for a multi-tail
//! flagellated soft swimmer near a free surface.

pub mod analysis;
pub mod config;
pub mod dynamics;
pub mod elastic;
pub mod error;
pub mod hydro;
pub mod linalg;
pub mod planner;
pub mod rod;

pub use config::{Preset, RobotConfig, SolverOptions};
pub use error::{AnalysisError, ConfigError, GeometryError, PlanError, SimError};
