//! Scenario files shipped with the crate.

use crate::error::Result;

use super::scenario::{parse_scenario, Scenario};

pub const EXAMPLE1: &str = include_str!("../../scenarios/example1.toml");
pub const EXAMPLE2: &str = include_str!("../../scenarios/example2.toml");

/// `(name, text)` for every bundled scenario.
pub const ALL: [(&str, &str); 2] = [("example1", EXAMPLE1), ("example2", EXAMPLE2)];

pub fn text(name: &str) -> Option<&'static str> {
    ALL.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn example1() -> Result<Scenario> {
    parse_scenario(EXAMPLE1)
}

pub fn example2() -> Result<Scenario> {
    parse_scenario(EXAMPLE2)
}
