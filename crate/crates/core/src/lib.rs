pub mod axis_recovery;
pub mod cli;
pub mod conics;
pub mod error;
pub mod geometry;
pub mod io;
pub mod kinematics;
pub mod optim;
pub mod pose_estimation;
pub mod sim;

pub use error::{Error, Result};
