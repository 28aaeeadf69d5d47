//! Dwell-time certification for switched linear systems.

pub mod conditions;
pub mod conic;
pub mod error;
pub mod io;
pub mod linalg;
pub mod polymat;
pub mod search;
pub mod verify;

pub use error::{DwellError, Result};
