pub mod construct;
pub mod cost;
pub mod decode;
pub mod epcode;
pub mod error;
pub mod gf;
pub mod io;
pub mod latsim;
pub mod optimizer;

pub use error::{Error, Result};
