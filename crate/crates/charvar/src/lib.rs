//! Character varieties of knot and tangle groups in `SL(2, C)`.

pub mod diagram;
pub mod explorer;
pub mod knot;
pub mod mat2;
pub mod numeric;
pub mod random;
pub mod suites;
pub mod tangle;
pub mod trace;

#[cfg(test)]
mod testutil;
