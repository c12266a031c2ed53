//! Scenarios compiled into the binary.

use crate::scenario::{parse_str, Parsed, ScenarioError};

pub const FIXTURES: [(&str, &str); 6] = [
    ("fig1a", include_str!("../fixtures/fig1a.json")),
    ("fig1b", include_str!("../fixtures/fig1b.json")),
    ("fig2a", include_str!("../fixtures/fig2a.json")),
    ("fig2b", include_str!("../fixtures/fig2b.json")),
    ("fig3a", include_str!("../fixtures/fig3a.json")),
    ("fig3b", include_str!("../fixtures/fig3b.json")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    FIXTURES.iter().map(|(name, _)| *name)
}

pub fn source(name: &str) -> Option<&'static str> {
    FIXTURES.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

/// `None` for unknown names.
pub fn load(name: &str) -> Option<Result<Parsed, ScenarioError>> {
    source(name).map(|text| parse_str(text, &format!("<fixture {name}>")))
}
