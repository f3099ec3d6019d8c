//! Bundled test systems, embedded so the binaries and tests run without
//! any filesystem setup. The `.m` sources live under `cases/`.

/// 2-bus system: slack plus one PQ load over a single reactive line.
pub const CASE2: &str = include_str!("../cases/case2.m");

/// IEEE 14-bus test system.
pub const CASE14: &str = include_str!("../cases/case14.m");

/// IEEE 118-bus test system.
pub const CASE118: &str = include_str!("../cases/case118.m");

/// Bundled (name, text) pairs.
pub const ALL: [(&str, &str); 3] = [
    ("case2", CASE2),
    ("case14", CASE14),
    ("case118", CASE118),
];

/// Looks a bundled case up by name (with or without a `.m` suffix).
pub fn by_name(name: &str) -> Option<&'static str> {
    let stem = name.strip_suffix(".m").unwrap_or(name);
    ALL.iter().find(|(n, _)| *n == stem).map(|(_, text)| *text)
}
