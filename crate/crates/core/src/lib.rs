pub mod cli;
pub mod error;
pub mod exec;
pub mod fbi;
pub mod fit;
pub mod instability;
pub mod kirchhoff;
pub mod majorant;
pub mod ode;
pub mod poly;
pub mod series;
pub mod spectral_vdw;
pub mod symbol;

pub use error::{Error, Result};
