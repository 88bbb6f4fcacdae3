//! Periodic-table data needed for valence, aromaticity and drawing.

const SYMBOLS: [&str; 119] = [
    "*", "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S",
    "Cl", "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge",
    "As", "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd",
    "In", "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd",
    "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg",
    "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm",
    "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn",
    "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
];

/// Atomic number of the wildcard / attachment-point atom `*`.
pub const DUMMY: u8 = 0;
pub const HYDROGEN: u8 = 1;
pub const BORON: u8 = 5;
pub const CARBON: u8 = 6;
pub const NITROGEN: u8 = 7;
pub const OXYGEN: u8 = 8;
pub const FLUORINE: u8 = 9;
pub const PHOSPHORUS: u8 = 15;
pub const SULFUR: u8 = 16;
pub const CHLORINE: u8 = 17;
pub const BROMINE: u8 = 35;
pub const IODINE: u8 = 53;

pub fn symbol(atomic_num: u8) -> &'static str {
    SYMBOLS.get(atomic_num as usize).copied().unwrap_or("*")
}

pub fn from_symbol(sym: &str) -> Option<u8> {
    SYMBOLS.iter().position(|s| *s == sym).map(|i| i as u8)
}

/// Allowed valences of the neutral element, smallest first. Elements without
/// a fixed valence model return an empty slice and are never given implicit
/// hydrogens.
pub fn valences(atomic_num: u8) -> &'static [u8] {
    match atomic_num {
        1 => &[1],
        5 => &[3],
        6 => &[4],
        7 => &[3, 5],
        8 => &[2],
        9 | 17 | 35 | 53 => &[1],
        14 => &[4],
        15 => &[3, 5],
        16 => &[2, 4, 6],
        33 => &[3, 5],
        34 => &[2, 4, 6],
        52 => &[2, 4, 6],
        _ => &[],
    }
}

/// Number of valence-shell electrons, for main-group elements.
pub fn outer_electrons(atomic_num: u8) -> u8 {
    match atomic_num {
        1 | 3 | 11 | 19 | 37 | 55 => 1,
        4 | 12 | 20 | 38 | 56 => 2,
        5 | 13 | 31 | 49 | 81 => 3,
        6 | 14 | 32 | 50 | 82 => 4,
        7 | 15 | 33 | 51 | 83 => 5,
        8 | 16 | 34 | 52 | 84 => 6,
        9 | 17 | 35 | 53 | 85 => 7,
        2 | 10 | 18 | 36 | 54 | 86 => 8,
        _ => 0,
    }
}

/// Allowed valences accounting for formal charge.
pub fn charged_valences(atomic_num: u8, charge: i8) -> &'static [u8] {
    if charge == 0 {
        return valences(atomic_num);
    }
    match atomic_num {
        // boron / carbon cations and anions
        5 if charge == -1 => &[4],
        6 if charge == 1 || charge == -1 => &[3],
        7 if charge == 1 => &[4],
        7 if charge == -1 => &[2],
        8 if charge == 1 => &[3],
        8 if charge == -1 => &[1],
        15 if charge == 1 => &[4],
        15 if charge == -1 => &[2],
        16 if charge == 1 => &[3, 5],
        16 if charge == -1 => &[1, 3, 5],
        34 if charge == 1 => &[3, 5],
        34 if charge == -1 => &[1],
        9 | 17 | 35 | 53 if charge == -1 => &[0],
        _ => &[],
    }
}

/// Pauling electronegativity; 0 for unknown elements.
pub fn electronegativity(atomic_num: u8) -> f64 {
    match atomic_num {
        1 => 2.20,
        3 => 0.98,
        5 => 2.04,
        6 => 2.55,
        7 => 3.04,
        8 => 3.44,
        9 => 3.98,
        11 => 0.93,
        12 => 1.31,
        14 => 1.90,
        15 => 2.19,
        16 => 2.58,
        17 => 3.16,
        19 => 0.82,
        20 => 1.00,
        33 => 2.18,
        34 => 2.55,
        35 => 2.96,
        52 => 2.10,
        53 => 2.66,
        _ => 0.0,
    }
}

/// Single-bond covalent radius in Angstrom.
pub fn covalent_radius(atomic_num: u8) -> f64 {
    match atomic_num {
        0 => 0.70,
        1 => 0.31,
        5 => 0.84,
        6 => 0.76,
        7 => 0.71,
        8 => 0.66,
        9 => 0.57,
        11 => 1.66,
        12 => 1.41,
        14 => 1.11,
        15 => 1.07,
        16 => 1.05,
        17 => 1.02,
        19 => 2.03,
        20 => 1.76,
        26 => 1.32,
        29 => 1.32,
        30 => 1.22,
        33 => 1.19,
        34 => 1.20,
        35 => 1.20,
        53 => 1.39,
        _ => 1.30,
    }
}

/// Conventional CPK-like display colour.
pub fn color(atomic_num: u8) -> [u8; 3] {
    match atomic_num {
        0 => [150, 150, 150],
        1 => [230, 230, 230],
        5 => [255, 181, 181],
        6 => [144, 144, 144],
        7 => [48, 80, 248],
        8 => [255, 13, 13],
        9 => [144, 224, 80],
        11 => [171, 92, 242],
        15 => [255, 128, 0],
        16 => [230, 190, 40],
        17 => [31, 240, 31],
        35 => [166, 41, 41],
        53 => [148, 0, 148],
        _ => [220, 100, 180],
    }
}
