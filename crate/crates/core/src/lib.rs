pub mod bench;
pub mod error;
pub mod explorer;
pub mod io;
pub mod kinematics;
pub mod metrics;
pub mod objective;
pub mod optimizer;
pub mod paths;
pub mod robots;
pub mod scene;

pub use error::{Error, Result};
