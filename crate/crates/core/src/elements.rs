//! Canonical element ordering and phase display colours.

/// Acquisition order of the major elements; every per-element table and
/// feature stack follows it.
pub const ELEMENT_ORDER: [&str; 8] = ["Al", "Ca", "Fe", "K", "Mg", "Mn", "Na", "Si"];

/// Display colour (RGB) for a phase name; unknown phases fall back to a
/// stable hash colour so renders stay deterministic.
pub fn phase_color(name: &str) -> [u8; 3] {
    match name.to_ascii_lowercase().as_str() {
        "void" => [0, 0, 0],
        "albite" => [220, 40, 30],      // red
        "ankerite" => [128, 128, 128],  // grey
        "clinochlore" => [235, 220, 40], // yellow
        "illite" => [120, 190, 235],    // light blue
        "laumontite" => [245, 245, 245], // white
        "quartz" => [25, 40, 140],      // dark blue
        other => {
            // Stable fallback so renders stay deterministic for custom phases.
            let mut h: u32 = 0x811c9dc5;
            for b in other.bytes() {
                h ^= b as u32;
                h = h.wrapping_mul(0x0100_0193);
            }
            [
                64 + (h & 0x7f) as u8,
                64 + ((h >> 8) & 0x7f) as u8,
                64 + ((h >> 16) & 0x7f) as u8,
            ]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_alphabetical_acquisition_list() {
        assert_eq!(
            ELEMENT_ORDER,
            ["Al", "Ca", "Fe", "K", "Mg", "Mn", "Na", "Si"]
        );
    }

    #[test]
    fn known_phase_colors_are_distinct() {
        let names = ["void", "albite", "ankerite", "clinochlore", "illite", "laumontite", "quartz"];
        let colors: Vec<_> = names.iter().map(|n| phase_color(n)).collect();
        for i in 0..colors.len() {
            for j in i + 1..colors.len() {
                assert_ne!(colors[i], colors[j], "{} vs {}", names[i], names[j]);
            }
        }
    }
}
