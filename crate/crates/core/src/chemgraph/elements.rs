const SYMBOLS: [&str; 36] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr",
];

/// QM9 composition: H, C, N, O, F.
pub const DEFAULT_ELEMENTS: [u8; 5] = [1, 6, 7, 8, 9];

/// Atomic number from a symbol (case-insensitive) or a literal number.
pub fn atomic_number(token: &str) -> Option<u8> {
    if let Ok(z) = token.parse::<u8>() {
        return (1..=SYMBOLS.len() as u8).contains(&z).then_some(z);
    }
    SYMBOLS
        .iter()
        .position(|s| s.eq_ignore_ascii_case(token))
        .map(|i| i as u8 + 1)
}

pub fn symbol(z: u8) -> Option<&'static str> {
    SYMBOLS.get(usize::from(z).checked_sub(1)?).copied()
}
