pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod kv;
pub mod losses;
pub mod model;
pub mod mpd;
pub mod nn;
pub mod sandwich;
pub mod scal;
pub mod selftest;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use model::{composite, HintConfig, HintModel};
pub use tensor::{no_grad, Conv2dSpec, Tensor};
