//! Dense tensors and a reverse-mode tape for the handful of operations the
//! encoder and its losses are built from.

mod backward;
pub mod kernels;
mod params;
mod tape;
mod tensor;

pub use backward::Gradients;
pub use params::{ParamEntry, ParamGroup, ParamId, ParamSet};
pub use tape::{softmax_rows, HeadLayout, Scoring, Tape, Var};
pub use tensor::{Real, Tensor};

/// Seeded RNG used everywhere randomness is needed.
pub type Rng = rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

/// Independent stream derived from a base seed and a label.
pub fn rng_for(seed: u64, stream: u64) -> Rng {
    use rand::SeedableRng;
    let mut r = Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}
