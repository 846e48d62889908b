pub mod analysis;
pub mod error;
pub mod excitations;
pub mod ground;
pub mod linalg;
pub mod models;
pub mod mps;
pub mod oracles;

pub use error::{Error, Result};
