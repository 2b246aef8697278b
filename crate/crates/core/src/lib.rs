//! Deterministic simulator for articulated-object joints.
//!
//! - [`asset`]: assembly / module / joint data model, JSON asset format, kinematics.
//! - [`dynamics`]: enhanced joint drive, friction regimes and the integrator.
//! - [`behavior`]: trigger → effect rules embedded in assets.
//! - [`scenario`]: scenario runs, trajectories, comparison, reward and the env facade.
//! - [`sysid`]: joint parameter identification from observed trajectories.
//! - [`fixtures`]: the bundled drawer, microwave, oven and trashcan twins.

pub mod asset;
pub mod behavior;
pub mod dynamics;
pub mod fixtures;
pub mod scenario;
pub mod sysid;

pub use asset::{parse_asset, serialize_asset, validate, Assembly, JointSpec};
pub use dynamics::{step, JointState, Regime};
