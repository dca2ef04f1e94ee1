//! Endpoint maps, steering and p-energy geodesics for affine control systems.

pub mod control;
pub mod endpoint;
pub mod error;
pub mod geodesic;
pub mod lifting;
pub mod steering;
pub mod system;

pub use control::{ControlSignal, EnergyKind, EnergyParams};
pub use error::{Error, Result};
pub use system::{catalog_load, ControlSystem};
