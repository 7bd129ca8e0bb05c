//! Within-host target-cell-limited viral dynamics under antiviral treatment.

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod metrics;
pub mod workbench;

pub use error::{Error, Result};
