//! Decentralized multi-robot trajectory planning.
//!
//! Each robot predicts its peers from their broadcast states, confines itself
//! to convex safe regions built from supporting half-planes, extracts circular
//! obstacles from a planar range scan and solves a receding-horizon QP over
//! polynomial trajectories. A kinematic simulator and scenario runner close
//! the loop.

pub mod bus;
pub mod config;
pub mod error;
pub mod perception;
pub mod prediction;
pub mod qp;
pub mod saferegion;
pub mod simworld;
pub mod trajopt;
pub mod types;

pub use config::{default_config, DynLimits, PlannerConfig};
pub use error::{Error, Result};
pub use types::{Aabb, ObstacleCircle, RobotState, SizeSpec, Vec2, Waypoint};
