use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chem::{ColorTag, FlameColor, Metal, Phase, Species};
use crate::grammar::PrimitiveVerb;

use super::SimError;

pub const CANVAS_W: u32 = 640;
pub const CANVAS_H: u32 = 480;

/// Amounts below this are treated as gone.
pub const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainerKind {
    Beaker,
    TestTube,
    GraduatedCylinder,
    Evaporator,
    AlcoholLamp,
    Rack,
    PlatinumWire,
    GlassRod,
    Spatula,
    MetalWire,
    Thermometer,
}

impl ContainerKind {
    pub fn is_vessel(self) -> bool {
        matches!(
            self,
            ContainerKind::Beaker | ContainerKind::TestTube | ContainerKind::GraduatedCylinder | ContainerKind::Evaporator
        )
    }

    pub fn is_wire(self) -> bool {
        matches!(self, ContainerKind::PlatinumWire | ContainerKind::MetalWire)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pose {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl Pose {
    pub const fn new(x: i64, y: i64, w: i64, h: i64) -> Self {
        Pose { x, y, w, h }
    }

    pub fn within_canvas(&self) -> bool {
        self.x >= 0 && self.y >= 0 && self.w > 0 && self.h > 0 && self.x + self.w <= CANVAS_W as i64 && self.y + self.h <= CANVAS_H as i64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Substance {
    pub species: Species,
    pub phase: Phase,
    /// mL for the solvent, mol otherwise.
    pub amount: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Flags {
    pub mist: bool,
    pub bubbles: bool,
    pub crystals: bool,
    pub milky: bool,
    pub dissolved: bool,
    pub stirred: bool,
    pub heated: bool,
    pub immersed: bool,
    pub heater_on: bool,
    pub precipitate_color: Option<ColorTag>,
    pub deposit_color: Option<ColorTag>,
    pub flame_color: Option<FlameColor>,
    pub indicator_color: Option<ColorTag>,
}

/// Pour metering for graduated vessels: each pour delivers at most this much.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dose {
    pub species: Species,
    pub mol: f64,
    pub water_ml: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Container {
    pub id: String,
    pub kind: ContainerKind,
    pub label: String,
    pub aliases: Vec<String>,
    pub pose: Pose,
    pub contents: Vec<Substance>,
    pub flags: Flags,
    pub capacity_ml: f64,
    pub dose: Option<Dose>,
    /// Species picked up by a wire dipped into a solution.
    pub dipped: Option<Species>,
}

impl Container {
    pub fn new(id: &str, kind: ContainerKind, label: &str, pose: Pose) -> Self {
        Container {
            id: id.to_string(),
            kind,
            label: label.to_string(),
            aliases: Vec::new(),
            pose,
            contents: Vec::new(),
            flags: Flags::default(),
            capacity_ml: 100.0,
            dose: None,
            dipped: None,
        }
    }

    pub fn alias(mut self, a: &str) -> Self {
        self.aliases.push(a.to_string());
        self
    }

    pub fn with(mut self, species: Species, phase: Phase, amount: f64) -> Self {
        self.add(species, phase, amount);
        self
    }

    pub fn water(self, ml: f64) -> Self {
        self.with(Species::H2O, Phase::Liquid, ml)
    }

    pub fn amount(&self, species: Species) -> f64 {
        self.contents
            .iter()
            .filter(|s| s.species == species)
            .map(|s| s.amount)
            .sum()
    }

    pub fn amount_in(&self, species: Species, phase: Phase) -> f64 {
        self.contents
            .iter()
            .filter(|s| s.species == species && s.phase == phase)
            .map(|s| s.amount)
            .sum()
    }

    pub fn has(&self, species: Species) -> bool {
        self.amount(species) > EPS
    }

    pub fn add(&mut self, species: Species, phase: Phase, amount: f64) {
        if amount <= 0.0 {
            return;
        }
        debug_assert!(species.admits(phase), "{species} cannot be {phase:?}");
        match self
            .contents
            .iter_mut()
            .find(|s| s.species == species && s.phase == phase)
        {
            Some(s) => s.amount += amount,
            None => self.contents.push(Substance { species, phase, amount }),
        }
    }

    /// Removes up to `amount` of a species across phases; returns the
    /// removed portions per phase.
    pub fn take(&mut self, species: Species, amount: f64) -> Vec<(Phase, f64)> {
        let mut left = amount;
        let mut taken = Vec::new();
        for s in self.contents.iter_mut().filter(|s| s.species == species) {
            if left <= 0.0 {
                break;
            }
            let t = s.amount.min(left);
            s.amount -= t;
            left -= t;
            taken.push((s.phase, t));
        }
        self.prune();
        taken
    }

    /// Sets a species to exactly zero (limiting reagent of a reaction).
    pub fn clear(&mut self, species: Species) {
        self.contents.retain(|s| s.species != species);
    }

    pub fn prune(&mut self) {
        self.contents.retain(|s| s.amount > EPS);
    }

    pub fn water_ml(&self) -> f64 {
        self.amount(Species::H2O)
    }

    pub fn has_liquid(&self) -> bool {
        self.contents.iter().any(|s| s.phase != Phase::Solid && s.amount > EPS)
    }

    pub fn has_solid(&self) -> bool {
        self.contents.iter().any(|s| s.phase == Phase::Solid && s.amount > EPS)
    }

    /// Color of the liquid phase as an observer would name it.
    pub fn liquid_color(&self) -> ColorTag {
        if let Some(c) = self.flags.indicator_color {
            return c;
        }
        let aq = |sp| self.amount_in(sp, Phase::Aqueous) > EPS;
        if aq(Species::Na2CuCl4) {
            ColorTag::Green
        } else if aq(Species::CuSO4) {
            ColorTag::Blue
        } else if aq(Species::FeSO4) {
            ColorTag::PaleGreen
        } else if self.flags.milky {
            ColorTag::Milky
        } else {
            ColorTag::Colorless
        }
    }

    /// Color of the solid phase (the most abundant solid wins; ties by order).
    pub fn solid_color(&self) -> Option<ColorTag> {
        self.contents
            .iter()
            .filter(|s| s.phase == Phase::Solid && s.amount > EPS)
            .fold(None::<&Substance>, |best, s| match best {
                Some(b) if b.amount >= s.amount => Some(b),
                _ => Some(s),
            })
            .map(|s| s.species.color(Phase::Solid))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.id.as_str())
            .chain(std::iter::once(self.label.as_str()))
            .chain(self.aliases.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LastAction {
    pub verb: PrimitiveVerb,
    pub targets: Vec<String>,
    pub category: String,
    pub success: bool,
    /// The primitive's physical effect actually took place.
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabScene {
    pub task_id: String,
    pub width: u32,
    pub height: u32,
    pub containers: Vec<Container>,
    pub held: BTreeMap<Arm, String>,
    pub lamp_lit: bool,
    pub spilled: BTreeMap<Species, f64>,
    pub last_action: Option<LastAction>,
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .filter(|w| !matches!(w.as_str(), "a" | "an" | "the"))
        .collect()
}

impl LabScene {
    pub fn empty(task_id: &str) -> Self {
        LabScene {
            task_id: task_id.to_string(),
            width: CANVAS_W,
            height: CANVAS_H,
            containers: Vec::new(),
            held: BTreeMap::new(),
            lamp_lit: false,
            spilled: BTreeMap::new(),
            last_action: None,
        }
    }

    pub fn get(&self, id: &str) -> Option<&Container> {
        self.containers.iter().find(|c| c.id == id)
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut Container> {
        self.containers.iter_mut().find(|c| c.id == id)
    }

    /// Maps slot text onto a container id: exact name match first, then the
    /// unique container whose names contain every word of the text.
    pub fn resolve(&self, text: &str) -> Result<String, SimError> {
        let t = text.trim();
        if let Some(c) = self
            .containers
            .iter()
            .find(|c| c.names().any(|n| n.eq_ignore_ascii_case(t)))
        {
            return Ok(c.id.clone());
        }
        let want = words(t);
        if want.is_empty() {
            return Err(SimError::MissingContainer(text.to_string()));
        }
        let hits: Vec<&Container> = self
            .containers
            .iter()
            .filter(|c| {
                c.names().any(|n| {
                    let have = words(n);
                    want.iter().all(|w| have.contains(w))
                })
            })
            .collect();
        match hits.as_slice() {
            [one] => Ok(one.id.clone()),
            _ => Err(SimError::MissingContainer(text.to_string())),
        }
    }

    pub fn arm_holding(&self, id: &str) -> Option<Arm> {
        self.held.iter().find(|(_, v)| v.as_str() == id).map(|(a, _)| *a)
    }

    pub fn canonical_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("scene serializes")
    }

    /// Metal atoms on the bench plus those spilled, per element.
    pub fn metal_totals(&self) -> BTreeMap<Metal, f64> {
        let mut out = BTreeMap::new();
        let mut add = |sp: Species, amt: f64| {
            for (m, n) in sp.metal_atoms() {
                *out.entry(*m).or_insert(0.0) += amt * *n as f64;
            }
        };
        for c in &self.containers {
            for s in &c.contents {
                add(s.species, s.amount);
            }
        }
        for (sp, amt) in &self.spilled {
            add(*sp, *amt);
        }
        out
    }
}
