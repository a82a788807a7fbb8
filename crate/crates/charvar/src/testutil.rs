pub use crate::random::{random_in_trace, random_sl2};

pub fn rng(seed: u64) -> crate::random::SeededRng {
    crate::random::seeded(seed)
}
