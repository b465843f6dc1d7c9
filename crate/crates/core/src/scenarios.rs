//! Version-controlled scenario specs shipped with the crate.

use crate::error::{argument, Result};
use crate::model::NetworkSpec;

/// `(name, JSON)` for every shipped spec.
pub const SCENARIOS: &[(&str, &str)] = &[
    ("single-node", include_str!("../specs/single-node.json")),
    ("tandem-slower-first", include_str!("../specs/tandem-slower-first.json")),
    ("tandem-faster-first", include_str!("../specs/tandem-faster-first.json")),
    ("tandem-equal", include_str!("../specs/tandem-equal.json")),
    ("example1", include_str!("../specs/example1.json")),
    ("example1-fast", include_str!("../specs/example1-fast.json")),
    ("example2", include_str!("../specs/example2.json")),
    ("example2-alt", include_str!("../specs/example2-alt.json")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    SCENARIOS.iter().map(|(n, _)| *n)
}

pub fn json(name: &str) -> Result<&'static str> {
    SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| *s)
        .ok_or_else(|| argument(format!("unknown scenario {name:?}; known: {}", names().collect::<Vec<_>>().join(", "))))
}

pub fn load(name: &str) -> Result<NetworkSpec> {
    NetworkSpec::from_json_str(json(name)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_spec;

    #[test]
    fn every_scenario_parses_and_validates() {
        for name in names() {
            let spec = load(name).unwrap();
            assert!(validate_spec(&spec).is_valid(), "{name}: {}", validate_spec(&spec));
        }
        assert!(load("nope").is_err());
    }
}
