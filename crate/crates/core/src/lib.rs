pub mod dynamics;
pub mod error;
pub mod harness;
pub mod homological;
pub mod kam;
pub mod langer;
pub mod matclass;
pub mod numeric;
pub mod oscint;
pub mod potential;
pub mod special;
pub mod spectrum;

pub use error::{Error, Result};
