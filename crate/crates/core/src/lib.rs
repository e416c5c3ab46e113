//! Radial distribution feeder simulation and battery dispatch optimization.
//!
//! Given hourly residential, EV and rooftop-solar loads on a radial feeder,
//! the crate searches per-sector battery charge/discharge schedules with
//! particle swarm optimization so that the day's active power loss and bus
//! voltage deviation are minimized.

pub mod battery;
pub mod config;
pub mod error;
pub mod load_flow;
pub mod network;
pub mod objective;
pub mod profiles;
pub mod reference;
pub mod report;
pub mod scenario;
pub mod swarm;

pub use error::{Error, Result};

/// SplitMix64 finalizer over two words. Used to derive independent,
/// platform-stable seeds from a base seed and a key.
pub fn mix_seed(base: u64, key: u64) -> u64 {
    let mut z = base ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
