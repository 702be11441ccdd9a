pub mod analysis;
pub mod error;
pub mod forward;
pub mod io;
pub mod ladder;
pub mod rabbitt;
pub mod squirrels;

pub use error::{Error, Result};
