//! The generator: encoder, recurrent residual branches, decoder, and the
//! streaming session built on top of it.

mod generator;
pub(crate) mod kinematics;
mod session;
mod target;

pub use generator::{
    frames_to_matrix, matrix_to_frames, Generator, ModelConfig, RowCondition, GENERATOR_KIND,
};
pub use session::StreamSession;
pub use target::TargetSpec;
