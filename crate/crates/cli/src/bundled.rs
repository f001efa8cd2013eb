//! Problems shipped with the binary.

pub const BUNDLED: &[(&str, &str)] = &[
    ("chsh", include_str!("../problems/chsh.problem")),
    ("reflection", include_str!("../problems/reflection.problem")),
    ("free-unitaries", include_str!("../problems/free-unitaries.problem")),
    ("commutator-example", include_str!("../problems/commutator-example.problem")),
];

/// Looks up a bundled problem by name, with or without the `.problem` suffix.
pub fn find(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".problem").unwrap_or(name);
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}
