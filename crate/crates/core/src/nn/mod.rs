//! Neural primitives on a small differentiation tape.

mod adam;
mod checkpoint;
mod graph;
mod layers;
mod params;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use graph::{
    concat_cols, interleave_rows, CellMap, CustomOp, Gradients, Graph, Mat, Var, NO_CELL,
};
pub use layers::{
    conv1d, dense, instance_norm, lstm_step, one_hot_rows, Activation, Conv1d, ConvGeometry,
    ConvTranspose1d, Dense, LstmCell, LstmState, INSTANCE_NORM_EPS, LEAKY_SLOPE,
};
pub use params::{Bound, ParamId, ParamStore};

/// Deterministic generator used for every seeded initialization.
pub fn seeded_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
