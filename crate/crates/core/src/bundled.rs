//! Networks shipped with the library.

use crate::netspec::{load_network, NetworkSpec};

pub const ACADEMIC_TOML: &str = include_str!("../data/academic.toml");
pub const TOY_SINGLE_TOML: &str = include_str!("../data/toy_single.toml");
pub const TOY_PAIR_TOML: &str = include_str!("../data/toy_pair.toml");
pub const TOY_PAIR_LOCAL_TOML: &str = include_str!("../data/toy_pair_local.toml");
pub const TOY_CHAIN_TOML: &str = include_str!("../data/toy_chain.toml");

fn load(doc: &str) -> NetworkSpec {
    load_network(doc).expect("bundled network is valid")
}

/// The six-subsystem benchmark with its four components.
pub fn academic() -> NetworkSpec {
    load(ACADEMIC_TOML)
}

pub fn toy_single() -> NetworkSpec {
    load(TOY_SINGLE_TOML)
}

/// Two subsystems forming a single cyclic component.
pub fn toy_pair() -> NetworkSpec {
    load(TOY_PAIR_TOML)
}

/// The coupled pair on `[-0.25, 0.25]` per state, small enough for
/// exhaustive checks against refined references.
pub fn toy_pair_local() -> NetworkSpec {
    load(TOY_PAIR_LOCAL_TOML)
}

pub fn toy_chain() -> NetworkSpec {
    load(TOY_CHAIN_TOML)
}
