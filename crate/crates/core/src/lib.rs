pub mod bench;
pub mod clock;
pub mod error;
pub mod formulation;
pub mod fsor;
pub mod lp;
pub mod lp_file;
pub mod milp;
pub mod model;
pub mod routing;
pub mod scenarios;
pub mod telemetry;
pub mod twin;
pub mod verify;

pub use error::{Error, Result};
