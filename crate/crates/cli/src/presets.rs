//! Built-in experiment specs.

use anyhow::Result;

use crate::spec::ExperimentSpec;

/// Name and TOML source of every built-in spec.
pub const PRESETS: [(&str, &str); 6] = [
    ("fig2", include_str!("../presets/fig2.toml")),
    ("fig3", include_str!("../presets/fig3.toml")),
    ("fig4", include_str!("../presets/fig4.toml")),
    ("fig5", include_str!("../presets/fig5.toml")),
    ("fig6", include_str!("../presets/fig6.toml")),
    ("tiny", include_str!("../presets/tiny.toml")),
];

/// Parses the preset called `name`, if there is one.
pub fn preset(name: &str) -> Option<Result<ExperimentSpec>> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, src)| ExperimentSpec::from_toml(src))
}
