pub mod cli;
pub mod error;
pub mod estimation;
pub mod fair;
pub mod io;
pub mod linalg;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod simulation;
pub mod welfare;

pub use error::{Error, Result};
