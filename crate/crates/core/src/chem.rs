//! Chemical vocabulary shared by the plan grammar and the simulated bench:
//! the closed species registry, phases, display colors and flame colors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Species {
    #[serde(rename = "NaOH")]
    NaOH,
    #[serde(rename = "HCl")]
    HCl,
    #[serde(rename = "CuSO4")]
    CuSO4,
    #[serde(rename = "NaCl")]
    NaCl,
    #[serde(rename = "Cu(OH)2")]
    CuOH2,
    #[serde(rename = "CuO")]
    CuO,
    #[serde(rename = "phenolphthalein")]
    Phenolphthalein,
    #[serde(rename = "H2O")]
    H2O,
    #[serde(rename = "Na2CuCl4")]
    Na2CuCl4,
    #[serde(rename = "CaO")]
    CaO,
    #[serde(rename = "Ca(OH)2")]
    CaOH2,
    #[serde(rename = "H2O2")]
    H2O2,
    #[serde(rename = "Mn(OH)2")]
    MnOH2,
    #[serde(rename = "Fe")]
    Fe,
    #[serde(rename = "Cu")]
    Cu,
    #[serde(rename = "Zn")]
    Zn,
    #[serde(rename = "NaHCO3")]
    NaHCO3,
    #[serde(rename = "Na2SO4")]
    Na2SO4,
    #[serde(rename = "FeSO4")]
    FeSO4,
    #[serde(rename = "ZnCl2")]
    ZnCl2,
    #[serde(rename = "CaCl2")]
    CaCl2,
    #[serde(rename = "LiCl")]
    LiCl,
    #[serde(rename = "SrCl2")]
    SrCl2,
    #[serde(rename = "MnCl2")]
    MnCl2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Solid,
    Liquid,
    Aqueous,
}

/// Metal cations with a characteristic flame color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Ion {
    #[serde(rename = "Cu2+")]
    Cu2,
    #[serde(rename = "Ca2+")]
    Ca2,
    #[serde(rename = "Li+")]
    Li,
    #[serde(rename = "Na+")]
    Na,
    #[serde(rename = "Mn2+")]
    Mn2,
    #[serde(rename = "Sr2+")]
    Sr2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlameColor {
    BlueGreen,
    BrickRed,
    PurplishRed,
    Yellow,
    YellowGreen,
    Magenta,
}

/// Coarse visible color of a substance, container content or glyph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColorTag {
    Colorless,
    White,
    Blue,
    Green,
    PaleGreen,
    Pink,
    Black,
    Red,
    Milky,
    Gray,
    Silver,
    Flame(FlameColor),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no flame color entry for {0}")]
pub struct NoFlameEntry(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown species `{0}`")]
pub struct UnknownSpecies(pub String);

impl Species {
    pub const ALL: [Species; 24] = [
        Species::NaOH,
        Species::HCl,
        Species::CuSO4,
        Species::NaCl,
        Species::CuOH2,
        Species::CuO,
        Species::Phenolphthalein,
        Species::H2O,
        Species::Na2CuCl4,
        Species::CaO,
        Species::CaOH2,
        Species::H2O2,
        Species::MnOH2,
        Species::Fe,
        Species::Cu,
        Species::Zn,
        Species::NaHCO3,
        Species::Na2SO4,
        Species::FeSO4,
        Species::ZnCl2,
        Species::CaCl2,
        Species::LiCl,
        Species::SrCl2,
        Species::MnCl2,
    ];

    pub fn formula(self) -> &'static str {
        match self {
            Species::NaOH => "NaOH",
            Species::HCl => "HCl",
            Species::CuSO4 => "CuSO4",
            Species::NaCl => "NaCl",
            Species::CuOH2 => "Cu(OH)2",
            Species::CuO => "CuO",
            Species::Phenolphthalein => "phenolphthalein",
            Species::H2O => "H2O",
            Species::Na2CuCl4 => "Na2CuCl4",
            Species::CaO => "CaO",
            Species::CaOH2 => "Ca(OH)2",
            Species::H2O2 => "H2O2",
            Species::MnOH2 => "Mn(OH)2",
            Species::Fe => "Fe",
            Species::Cu => "Cu",
            Species::Zn => "Zn",
            Species::NaHCO3 => "NaHCO3",
            Species::Na2SO4 => "Na2SO4",
            Species::FeSO4 => "FeSO4",
            Species::ZnCl2 => "ZnCl2",
            Species::CaCl2 => "CaCl2",
            Species::LiCl => "LiCl",
            Species::SrCl2 => "SrCl2",
            Species::MnCl2 => "MnCl2",
        }
    }

    /// Phases this species may appear in on the bench.
    pub fn allowed_phases(self) -> &'static [Phase] {
        use Phase::*;
        match self {
            Species::H2O => &[Liquid],
            Species::HCl | Species::Phenolphthalein | Species::H2O2 => &[Aqueous],
            Species::Na2CuCl4 | Species::Na2SO4 | Species::FeSO4 | Species::ZnCl2 => &[Aqueous],
            Species::CuOH2 | Species::CuO | Species::CaO | Species::MnOH2 => &[Solid],
            Species::Fe | Species::Cu | Species::Zn => &[Solid],
            Species::NaOH
            | Species::CuSO4
            | Species::NaCl
            | Species::CaOH2
            | Species::NaHCO3
            | Species::CaCl2
            | Species::LiCl
            | Species::SrCl2
            | Species::MnCl2 => &[Solid, Aqueous],
        }
    }

    pub fn admits(self, phase: Phase) -> bool {
        self.allowed_phases().contains(&phase)
    }

    /// Solvent amounts are tracked in mL, everything else in mol.
    pub fn is_solvent(self) -> bool {
        self == Species::H2O
    }

    pub fn ion(self) -> Option<Ion> {
        match self {
            Species::CuSO4 | Species::Na2CuCl4 => Some(Ion::Cu2),
            Species::CaCl2 | Species::CaOH2 => Some(Ion::Ca2),
            Species::LiCl => Some(Ion::Li),
            Species::NaCl | Species::NaOH | Species::NaHCO3 | Species::Na2SO4 => Some(Ion::Na),
            Species::MnCl2 => Some(Ion::Mn2),
            Species::SrCl2 => Some(Ion::Sr2),
            _ => None,
        }
    }

    /// Metal atoms per formula unit; metals never leave the bench as gas,
    /// so their totals are conserved by every rule.
    pub fn metal_atoms(self) -> &'static [(Metal, u32)] {
        use Metal::*;
        match self {
            Species::NaOH | Species::NaCl | Species::NaHCO3 => &[(Na, 1)],
            Species::Na2SO4 => &[(Na, 2)],
            Species::Na2CuCl4 => &[(Na, 2), (Cu, 1)],
            Species::CuSO4 | Species::CuOH2 | Species::CuO | Species::Cu => &[(Cu, 1)],
            Species::CaO | Species::CaOH2 | Species::CaCl2 => &[(Ca, 1)],
            Species::MnOH2 | Species::MnCl2 => &[(Mn, 1)],
            Species::Fe | Species::FeSO4 => &[(Fe, 1)],
            Species::Zn | Species::ZnCl2 => &[(Zn, 1)],
            Species::LiCl => &[(Li, 1)],
            Species::SrCl2 => &[(Sr, 1)],
            Species::HCl | Species::Phenolphthalein | Species::H2O | Species::H2O2 => &[],
        }
    }

    /// Visible color of the pure substance in the given phase.
    pub fn color(self, phase: Phase) -> ColorTag {
        match (self, phase) {
            (Species::CuSO4, _) => ColorTag::Blue,
            (Species::Na2CuCl4, _) => ColorTag::Green,
            (Species::FeSO4, _) => ColorTag::PaleGreen,
            (Species::CuOH2, _) => ColorTag::Blue,
            (Species::CuO, _) => ColorTag::Black,
            (Species::Cu, _) => ColorTag::Red,
            (Species::Fe, _) => ColorTag::Gray,
            (Species::Zn, _) => ColorTag::Silver,
            (Species::CaOH2, _) => ColorTag::Milky,
            (Species::MnOH2, _) => ColorTag::White,
            (_, Phase::Solid) => ColorTag::White,
            _ => ColorTag::Colorless,
        }
    }
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.formula())
    }
}

impl FromStr for Species {
    type Err = UnknownSpecies;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Species::ALL
            .iter()
            .copied()
            .find(|sp| sp.formula().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownSpecies(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metal {
    Na,
    Cu,
    Ca,
    Mn,
    Fe,
    Zn,
    Li,
    Sr,
}

impl Ion {
    pub fn flame_color(self) -> FlameColor {
        match self {
            Ion::Cu2 => FlameColor::BlueGreen,
            Ion::Ca2 => FlameColor::BrickRed,
            Ion::Li => FlameColor::PurplishRed,
            Ion::Na => FlameColor::Yellow,
            Ion::Mn2 => FlameColor::YellowGreen,
            Ion::Sr2 => FlameColor::Magenta,
        }
    }
}

/// Characteristic flame color of the metal ion carried by `species`.
pub fn flame_color_of(species: Species) -> Result<FlameColor, NoFlameEntry> {
    species
        .ion()
        .map(Ion::flame_color)
        .ok_or_else(|| NoFlameEntry(species.formula().to_string()))
}

impl FlameColor {
    pub const ALL: [FlameColor; 6] = [
        FlameColor::BlueGreen,
        FlameColor::BrickRed,
        FlameColor::PurplishRed,
        FlameColor::Yellow,
        FlameColor::YellowGreen,
        FlameColor::Magenta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FlameColor::BlueGreen => "blue-green",
            FlameColor::BrickRed => "brick-red",
            FlameColor::PurplishRed => "purplish-red",
            FlameColor::Yellow => "yellow",
            FlameColor::YellowGreen => "yellow-green",
            FlameColor::Magenta => "magenta",
        }
    }

    pub fn from_name(name: &str) -> Option<FlameColor> {
        let norm = name.trim().to_ascii_lowercase().replace(' ', "-");
        FlameColor::ALL.into_iter().find(|c| c.name() == norm)
    }
}

impl ColorTag {
    pub fn rgb(self) -> [u8; 3] {
        match self {
            ColorTag::Colorless => [214, 232, 244],
            ColorTag::White => [246, 246, 240],
            ColorTag::Blue => [40, 90, 220],
            ColorTag::Green => [60, 170, 90],
            ColorTag::PaleGreen => [170, 215, 160],
            ColorTag::Pink => [240, 110, 170],
            ColorTag::Black => [20, 20, 20],
            ColorTag::Red => [170, 50, 30],
            ColorTag::Milky => [236, 236, 228],
            ColorTag::Gray => [128, 128, 128],
            ColorTag::Silver => [192, 192, 200],
            ColorTag::Flame(f) => match f {
                FlameColor::BlueGreen => [0, 170, 160],
                FlameColor::BrickRed => [180, 60, 40],
                FlameColor::PurplishRed => [170, 30, 110],
                FlameColor::Yellow => [250, 210, 0],
                FlameColor::YellowGreen => [170, 210, 30],
                FlameColor::Magenta => [230, 0, 200],
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flame_table() {
        assert_eq!(Ion::Cu2.flame_color(), FlameColor::BlueGreen);
        assert_eq!(Ion::Ca2.flame_color(), FlameColor::BrickRed);
        assert_eq!(Ion::Li.flame_color(), FlameColor::PurplishRed);
        assert_eq!(Ion::Na.flame_color(), FlameColor::Yellow);
        assert_eq!(Ion::Mn2.flame_color(), FlameColor::YellowGreen);
        assert_eq!(Ion::Sr2.flame_color(), FlameColor::Magenta);
    }

    #[test]
    fn flame_color_of_species() {
        assert_eq!(flame_color_of(Species::NaCl), Ok(FlameColor::Yellow));
        assert_eq!(flame_color_of(Species::SrCl2), Ok(FlameColor::Magenta));
        assert_eq!(flame_color_of(Species::CuSO4), Ok(FlameColor::BlueGreen));
        assert!(flame_color_of(Species::H2O).is_err());
    }

    #[test]
    fn formula_round_trip() {
        for sp in Species::ALL {
            assert_eq!(sp.formula().parse::<Species>().unwrap(), sp);
            let json = serde_json::to_string(&sp).unwrap();
            assert_eq!(json, format!("\"{}\"", sp.formula()));
        }
    }

    #[test]
    fn every_species_admits_a_phase() {
        for sp in Species::ALL {
            assert!(!sp.allowed_phases().is_empty());
        }
        assert!(!Species::H2O.admits(Phase::Solid));
        assert!(Species::NaOH.admits(Phase::Solid));
    }

    #[test]
    fn flame_names() {
        for c in FlameColor::ALL {
            assert_eq!(FlameColor::from_name(c.name()), Some(c));
        }
        assert_eq!(FlameColor::from_name("blue green"), Some(FlameColor::BlueGreen));
    }
}
