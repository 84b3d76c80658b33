pub mod binio;
pub mod error;
pub mod motion;
pub mod numerics;
pub mod pipeline;
pub mod planner;
pub mod rewards;
pub mod sim;
pub mod skill;
pub mod text;
pub mod trainer;

pub use error::{Error, Result};
