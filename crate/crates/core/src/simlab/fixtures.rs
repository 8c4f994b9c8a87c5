//! Bench layouts for every known task id, with the planner-facing task text,
//! apparatus list and the plan the mock planner answers with.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chem::{Phase, Species};
use crate::rng::{substream, Purpose};

use super::scene::{Container, ContainerKind as K, Dose, LabScene, Pose};
use super::SimError;

/// Quantities that the task descriptions leave open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureParams {
    pub naoh_mol: f64,
    pub hcl_dose_mol: f64,
    pub hcl_dose_water_ml: f64,
    pub hcl_stock_mol: f64,
    pub evaporator_water_ml: f64,
    pub pose_jitter_px: i64,
}

impl Default for FixtureParams {
    fn default() -> Self {
        FixtureParams {
            naoh_mol: 0.05,
            hcl_dose_mol: 0.02,
            hcl_dose_water_ml: 2.0,
            hcl_stock_mol: 0.5,
            evaporator_water_ml: 40.0,
            pose_jitter_px: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureClass {
    Primitive,
    Complete,
    Generalization,
    Ambiguity,
}

pub struct Fixture {
    pub id: &'static str,
    pub class: FixtureClass,
    pub task: &'static str,
    pub apparatus: &'static [&'static str],
    pub plan: &'static str,
    /// Number of look-alike candidates the policy must choose between.
    pub ambiguity_k: u32,
    pub lamp_lit: bool,
    build: fn(&FixtureParams) -> Vec<Container>,
}

impl Fixture {
    pub fn apparatus_list(&self) -> Vec<String> {
        self.apparatus.iter().map(|s| s.to_string()).collect()
    }

    pub fn plan_len(&self) -> usize {
        self.plan.lines().filter(|l| !l.trim().is_empty()).count()
    }
}

const BEAKER_Y: i64 = 300;

fn beaker(id: &str, label: &str, x: i64) -> Container {
    let mut c = Container::new(id, K::Beaker, label, Pose::new(x, BEAKER_Y, 80, 100));
    c.capacity_ml = 150.0;
    c
}

fn test_tube(id: &str, label: &str, x: i64) -> Container {
    let mut c = Container::new(id, K::TestTube, label, Pose::new(x, 280, 24, 110));
    c.capacity_ml = 20.0;
    c
}

fn lamp(x: i64) -> Container {
    Container::new("lamp", K::AlcoholLamp, "alcohol lamp", Pose::new(x, 340, 50, 60)).alias("lamp")
}

fn platinum_wire(x: i64) -> Container {
    Container::new("platinum_wire", K::PlatinumWire, "platinum wire", Pose::new(x, 180, 6, 140)).alias("wire")
}

fn rack(x: i64) -> Container {
    Container::new("rack", K::Rack, "test tube rack", Pose::new(x, 350, 120, 50))
}

fn glass_rod(x: i64, y: i64) -> Container {
    Container::new("glass_rod", K::GlassRod, "glass rod", Pose::new(x, y, 8, 120)).alias("rod")
}

fn spatula(x: i64) -> Container {
    Container::new("spatula", K::Spatula, "spatula", Pose::new(x, 210, 10, 100))
}

fn hcl_cylinder(p: &FixtureParams, x: i64) -> Container {
    let mut c = Container::new("hcl_cylinder", K::GraduatedCylinder, "graduated cylinder", Pose::new(x, 240, 40, 160))
        .alias("hydrochloric acid")
        .alias("HCl")
        .with(Species::HCl, Phase::Aqueous, p.hcl_stock_mol)
        .water(p.hcl_dose_water_ml * p.hcl_stock_mol / p.hcl_dose_mol);
    c.capacity_ml = 100.0;
    c.dose = Some(Dose {
        species: Species::HCl,
        mol: p.hcl_dose_mol,
        water_ml: p.hcl_dose_water_ml,
    });
    c
}

fn evaporator(p: &FixtureParams, x: i64) -> Container {
    let mut c = Container::new("evaporator", K::Evaporator, "evaporator", Pose::new(x, 330, 120, 70))
        .alias("evaporating dish")
        .alias("heater")
        .water(p.evaporator_water_ml);
    c.capacity_ml = 60.0;
    c
}

fn flame_test(salt: Species, solution: &str) -> Vec<Container> {
    vec![
        lamp(120),
        platinum_wire(300),
        test_tube("salt_tube", "test tube", 460)
            .alias(solution)
            .with(salt, Phase::Aqueous, 0.01)
            .water(10.0),
    ]
}

fn cups(k: usize) -> Vec<Container> {
    (0..k)
        .map(|i| {
            beaker(&format!("cup_{}", i + 1), &format!("cup {}", i + 1), 120 + 160 * i as i64).water(50.0)
        })
        .collect()
}

pub static FIXTURES: &[Fixture] = &[
    // primitives
    Fixture {
        id: "grasp_glass_rod",
        class: FixtureClass::Primitive,
        task: "Grasp the glass rod standing in the rack.",
        apparatus: &["A glass rod in a test tube rack."],
        plan: "Grasp glass rod",
        ambiguity_k: 1,
        lamp_lit: false,
        build: |_| vec![rack(260), glass_rod(316, 230)],
    },
    Fixture {
        id: "heat_platinum_wire",
        class: FixtureClass::Primitive,
        task: "Heat the platinum wire in the flame of the alcohol lamp.",
        apparatus: &["A lit alcohol lamp.", "Platinum wire."],
        plan: "Heat platinum wire over a flame",
        ambiguity_k: 1,
        lamp_lit: true,
        build: |_| vec![lamp(200), platinum_wire(400)],
    },
    Fixture {
        id: "insert_into_solution",
        class: FixtureClass::Primitive,
        task: "Insert the platinum wire into the copper sulfate solution.",
        apparatus: &["Platinum wire.", "A beaker with copper sulfate solution."],
        plan: "Dip platinum wire into the copper sulfate solution in beaker",
        ambiguity_k: 1,
        lamp_lit: false,
        build: |_| {
            vec![
                platinum_wire(200),
                beaker("cuso4_beaker", "beaker", 360)
                    .alias("copper sulfate solution")
                    .with(Species::CuSO4, Phase::Aqueous, 0.01)
                    .water(50.0),
            ]
        },
    },
    Fixture {
        id: "pour_liquid",
        class: FixtureClass::Primitive,
        task: "Pour the water from the right beaker into the left beaker.",
        apparatus: &["An empty beaker on the left.", "A beaker with water on the right."],
        plan: "Pour water from right beaker into left beaker",
        ambiguity_k: 1,
        lamp_lit: false,
        build: |_| vec![beaker("left_beaker", "left beaker", 180), beaker("right_beaker", "right beaker", 380).water(50.0)],
    },
    Fixture {
        id: "stir_solution",
        class: FixtureClass::Primitive,
        task: "Stir the salt solution with the glass rod.",
        apparatus: &["A beaker with water, sodium chloride and a glass rod."],
        plan: "Stir sodium chloride solution",
        ambiguity_k: 1,
        lamp_lit: false,
        build: |_| {
            vec![
                beaker("salt_beaker", "beaker", 280)
                    .alias("sodium chloride solution")
                    .with(Species::NaCl, Phase::Solid, 0.02)
                    .water(50.0),
                glass_rod(330, 200),
            ]
        },
    },
    Fixture {
        id: "transfer_solid",
        class: FixtureClass::Primitive,
        task: "Transfer the NaCl solid into the beaker of water.",
        apparatus: &["A beaker with NaCl solid.", "A beaker with water.", "A spatula."],
        plan: "Transfer NaCl solid from NaCl beaker to water beaker",
        ambiguity_k: 1,
        lamp_lit: false,
        build: |_| {
            vec![
                beaker("nacl_beaker", "NaCl beaker", 160).with(Species::NaCl, Phase::Solid, 0.02),
                beaker("water_beaker", "water beaker", 400).water(50.0),
                spatula(300),
            ]
        },
    },
    Fixture {
        id: "press_button",
        class: FixtureClass::Primitive,
        task: "Switch on the evaporator.",
        apparatus: &["An evaporator with a power button."],
        plan: "Press the button of evaporator",
        ambiguity_k: 1,
        lamp_lit: false,
        build: |p| vec![evaporator(p, 260)],
    },
    // complete tasks
    Fixture {
        id: "mix_nacl_cuso4",
        class: FixtureClass::Complete,
        task: "Mixing NaCl and CuSO4 solutions to form sodium tetrachlorocuprate.",
        apparatus: &["A beaker with sodium chloride solution.", "A beaker with copper sulfate solution."],
        plan: "Pour copper sulfate solution from copper sulfate beaker into sodium chloride beaker",
        ambiguity_k: 1,
        lamp_lit: false,
        build: |_| {
            vec![
                beaker("nacl_beaker", "sodium chloride beaker", 180)
                    .with(Species::NaCl, Phase::Aqueous, 0.08)
                    .water(50.0),
                beaker("cuso4_beaker", "copper sulfate beaker", 380)
                    .with(Species::CuSO4, Phase::Aqueous, 0.01)
                    .water(50.0),
            ]
        },
    },
    Fixture {
        id: "cuoh2_decompose",
        class: FixtureClass::Complete,
        task: "Performing the thermal decomposition of copper(II) hydroxide.",
        apparatus: &["A lit alcohol lamp.", "A test tube containing copper(II) hydroxide."],
        plan: "Grasp test tube\nHeat test tube over a flame",
        ambiguity_k: 1,
        lamp_lit: true,
        build: |_| {
            vec![
                lamp(180),
                test_tube("cuoh2_tube", "test tube", 400).with(Species::CuOH2, Phase::Solid, 0.01),
            ]
        },
    },
    Fixture {
        id: "flame_test_cuso4",
        class: FixtureClass::Complete,
        task: "Performing the flame test of copper sulfate solution.",
        apparatus: &["A lit alcohol lamp.", "Platinum wire.", "A test tube containing copper sulfate solution."],
        plan: "Grasp platinum wire\nHeat platinum wire over a flame\nDip platinum wire into the copper sulfate solution in test tube\nHeat platinum wire over a flame",
        ambiguity_k: 1,
        lamp_lit: true,
        build: |_| flame_test(Species::CuSO4, "copper sulfate solution"),
    },
    Fixture {
        id: "evaporate_nacl",
        class: FixtureClass::Complete,
        task: "Evaporating an impure NaCl solution to separate soluble salt from insoluble impurities.",
        apparatus: &["An evaporator with a power button.", "A beaker with NaCl solid.", "A spatula."],
        plan: "Transfer NaCl solid from NaCl beaker to evaporator\nPress the button of evaporator",
        ambiguity_k: 1,
        lamp_lit: false,
        build: |p| {
            vec![
                evaporator(p, 140),
                beaker("nacl_beaker", "NaCl beaker", 400).with(Species::NaCl, Phase::Solid, 0.03),
                spatula(320),
            ]
        },
    },
    Fixture {
        id: "acid_base",
        class: FixtureClass::Complete,
        task: "Performing an acid-base neutralization reaction.",
        apparatus: &[
            "A beaker with NaOH solid.",
            "A beaker with water and a glass rod.",
            "A beaker with phenolphthalein indicator.",
            "A graduated cylinder containing hydrochloric acid (HCl).",
            "A glass rod in a test tube rack.",
        ],
        plan: "Transfer NaOH solid from NaOH beaker to water beaker\nGrasp glass rod\nStir NaOH solution\nPour phenolphthalein indicator from phenolphthalein beaker into water beaker\nPour hydrochloric acid from graduated cylinder into water beaker until the solution becomes colorless",
        ambiguity_k: 1,
        lamp_lit: false,
        build: |p| {
            vec![
                beaker("naoh_beaker", "NaOH beaker", 20).with(Species::NaOH, Phase::Solid, p.naoh_mol),
                beaker("water_beaker", "water beaker", 130).alias("NaOH solution").water(50.0),
                beaker("indicator_beaker", "phenolphthalein beaker", 240)
                    .with(Species::Phenolphthalein, Phase::Aqueous, 0.0005)
                    .water(5.0),
                hcl_cylinder(p, 360),
                rack(450),
                glass_rod(500, 230),
            ]
        },
    },
    // generalization
    Fixture {
        id: "combination_cao",
        class: FixtureClass::Generalization,
        task: "Add water to calcium oxide to form calcium hydroxide.",
        apparatus: &["A beaker with water.", "A beaker with calcium oxide (CaO) solid."],
        plan: "Pour water from water beaker into calcium oxide beaker",
        ambiguity_k: 1,
        lamp_lit: false,
        build: |_| {
            vec![
                beaker("water_beaker", "water beaker", 380).water(50.0),
                beaker("cao_beaker", "calcium oxide beaker", 180).with(Species::CaO, Phase::Solid, 0.02),
            ]
        },
    },
    Fixture {
        id: "decomposition_h2o2",
        class: FixtureClass::Generalization,
        task: "Decompose hydrogen peroxide with manganese(II) hydroxide as catalyst.",
        apparatus: &[
            "A beaker with hydrogen peroxide solution.",
            "A beaker with manganese(II) hydroxide solid.",
            "A spatula.",
        ],
        plan: "Transfer manganese hydroxide solid from manganese hydroxide beaker to hydrogen peroxide beaker",
        ambiguity_k: 1,
        lamp_lit: false,
        build: |_| {
            vec![
                beaker("h2o2_beaker", "hydrogen peroxide beaker", 380)
                    .with(Species::H2O2, Phase::Aqueous, 0.05)
                    .water(40.0),
                beaker("mnoh2_beaker", "manganese hydroxide beaker", 140).with(Species::MnOH2, Phase::Solid, 0.005),
                spatula(290),
            ]
        },
    },
    Fixture {
        id: "displacement_fe_cuso4",
        class: FixtureClass::Generalization,
        task: "Insert an iron wire into copper sulfate solution.",
        apparatus: &["An iron wire.", "A beaker with copper sulfate solution."],
        plan: "Dip iron wire into the copper sulfate solution in beaker",
        ambiguity_k: 1,
        lamp_lit: false,
        build: |_| {
            vec![
                Container::new("iron_wire", K::MetalWire, "iron wire", Pose::new(220, 180, 6, 140))
                    .with(Species::Fe, Phase::Solid, 0.005),
                beaker("cuso4_beaker", "beaker", 380)
                    .alias("copper sulfate solution")
                    .with(Species::CuSO4, Phase::Aqueous, 0.01)
                    .water(50.0),
            ]
        },
    },
    Fixture {
        id: "displacement_zn_hcl",
        class: FixtureClass::Generalization,
        task: "React zinc with hydrochloric acid.",
        apparatus: &["A beaker with zinc granules.", "A graduated cylinder containing hydrochloric acid (HCl)."],
        plan: "Pour hydrochloric acid from graduated cylinder into zinc beaker",
        ambiguity_k: 1,
        lamp_lit: false,
        build: |p| {
            vec![
                beaker("zn_beaker", "zinc beaker", 180).with(Species::Zn, Phase::Solid, 0.02),
                hcl_cylinder(p, 400),
            ]
        },
    },
    Fixture {
        id: "double_displacement_naoh_cuso4",
        class: FixtureClass::Generalization,
        task: "Mix sodium hydroxide and copper sulfate solutions.",
        apparatus: &["A beaker with sodium hydroxide solution.", "A beaker with copper sulfate solution."],
        plan: "Pour sodium hydroxide solution from sodium hydroxide beaker into copper sulfate beaker",
        ambiguity_k: 1,
        lamp_lit: false,
        build: |_| {
            vec![
                beaker("naoh_beaker", "sodium hydroxide beaker", 380)
                    .with(Species::NaOH, Phase::Aqueous, 0.02)
                    .water(40.0),
                beaker("cuso4_beaker", "copper sulfate beaker", 180)
                    .with(Species::CuSO4, Phase::Aqueous, 0.01)
                    .water(40.0),
            ]
        },
    },
    Fixture {
        id: "double_displacement_nahco3_hcl",
        class: FixtureClass::Generalization,
        task: "Add hydrochloric acid to sodium bicarbonate.",
        apparatus: &[
            "A beaker with sodium bicarbonate solution.",
            "A graduated cylinder containing hydrochloric acid (HCl).",
        ],
        plan: "Pour hydrochloric acid from graduated cylinder into sodium bicarbonate beaker",
        ambiguity_k: 1,
        lamp_lit: false,
        build: |p| {
            vec![
                beaker("nahco3_beaker", "sodium bicarbonate beaker", 180)
                    .with(Species::NaHCO3, Phase::Aqueous, 0.01)
                    .water(40.0),
                hcl_cylinder(p, 400),
            ]
        },
    },
    Fixture {
        id: "flame_test_ca",
        class: FixtureClass::Generalization,
        task: "Performing the flame test of calcium chloride solution.",
        apparatus: &["A lit alcohol lamp.", "Platinum wire.", "A test tube containing calcium chloride solution."],
        plan: "Grasp platinum wire\nHeat platinum wire over a flame\nDip platinum wire into the calcium chloride solution in test tube\nHeat platinum wire over a flame",
        ambiguity_k: 1,
        lamp_lit: true,
        build: |_| flame_test(Species::CaCl2, "calcium chloride solution"),
    },
    Fixture {
        id: "flame_test_li",
        class: FixtureClass::Generalization,
        task: "Performing the flame test of lithium chloride solution.",
        apparatus: &["A lit alcohol lamp.", "Platinum wire.", "A test tube containing lithium chloride solution."],
        plan: "Grasp platinum wire\nHeat platinum wire over a flame\nDip platinum wire into the lithium chloride solution in test tube\nHeat platinum wire over a flame",
        ambiguity_k: 1,
        lamp_lit: true,
        build: |_| flame_test(Species::LiCl, "lithium chloride solution"),
    },
    Fixture {
        id: "flame_test_na",
        class: FixtureClass::Generalization,
        task: "Performing the flame test of sodium chloride solution.",
        apparatus: &["A lit alcohol lamp.", "Platinum wire.", "A test tube containing sodium chloride solution."],
        plan: "Grasp platinum wire\nHeat platinum wire over a flame\nDip platinum wire into the sodium chloride solution in test tube\nHeat platinum wire over a flame",
        ambiguity_k: 1,
        lamp_lit: true,
        build: |_| flame_test(Species::NaCl, "sodium chloride solution"),
    },
    Fixture {
        id: "flame_test_mn",
        class: FixtureClass::Generalization,
        task: "Performing the flame test of manganese chloride solution.",
        apparatus: &["A lit alcohol lamp.", "Platinum wire.", "A test tube containing manganese chloride solution."],
        plan: "Grasp platinum wire\nHeat platinum wire over a flame\nDip platinum wire into the manganese chloride solution in test tube\nHeat platinum wire over a flame",
        ambiguity_k: 1,
        lamp_lit: true,
        build: |_| flame_test(Species::MnCl2, "manganese chloride solution"),
    },
    Fixture {
        id: "flame_test_sr",
        class: FixtureClass::Generalization,
        task: "Performing the flame test of strontium chloride solution.",
        apparatus: &["A lit alcohol lamp.", "Platinum wire.", "A test tube containing strontium chloride solution."],
        plan: "Grasp platinum wire\nHeat platinum wire over a flame\nDip platinum wire into the strontium chloride solution in test tube\nHeat platinum wire over a flame",
        ambiguity_k: 1,
        lamp_lit: true,
        build: |_| flame_test(Species::SrCl2, "strontium chloride solution"),
    },
    Fixture {
        id: "grasp_test_tube",
        class: FixtureClass::Generalization,
        task: "Grasp the test tube from the rack.",
        apparatus: &["A test tube in a test tube rack."],
        plan: "Grasp test tube",
        ambiguity_k: 1,
        lamp_lit: false,
        build: |_| vec![rack(260), test_tube("tube", "test tube", 308).water(5.0)],
    },
    Fixture {
        id: "heat_test_tube",
        class: FixtureClass::Generalization,
        task: "Heat the test tube of water over the alcohol lamp.",
        apparatus: &["A lit alcohol lamp.", "A test tube containing water."],
        plan: "Heat test tube over a flame",
        ambiguity_k: 1,
        lamp_lit: true,
        build: |_| vec![lamp(200), test_tube("tube", "test tube", 400).water(8.0)],
    },
    Fixture {
        id: "stir_solid_reagents",
        class: FixtureClass::Generalization,
        task: "Stir the solid reagents in the beaker.",
        apparatus: &["A beaker with solid reagents and a glass rod."],
        plan: "Stir solid reagents",
        ambiguity_k: 1,
        lamp_lit: false,
        build: |_| {
            vec![
                beaker("reagent_beaker", "beaker", 280)
                    .alias("solid reagents")
                    .with(Species::CuSO4, Phase::Solid, 0.01)
                    .with(Species::NaCl, Phase::Solid, 0.04),
                glass_rod(330, 200),
            ]
        },
    },
    Fixture {
        id: "insert_thermometer",
        class: FixtureClass::Generalization,
        task: "Insert the thermometer into the water.",
        apparatus: &["A thermometer.", "A beaker with water."],
        plan: "Dip thermometer into the water in beaker",
        ambiguity_k: 1,
        lamp_lit: false,
        build: |_| {
            vec![
                Container::new("thermometer", K::Thermometer, "thermometer", Pose::new(220, 190, 6, 130)),
                beaker("water_beaker", "beaker", 380).alias("water").water(60.0),
            ]
        },
    },
    // ambiguity study: identical cups, the policy must pick the right pair
    Fixture {
        id: "cups_ambiguity_2",
        class: FixtureClass::Ambiguity,
        task: "Pour the liquid from cup 1 into cup 2.",
        apparatus: &["Cup 1 with water.", "Cup 2 with water."],
        plan: "Pour water from cup 1 into cup 2",
        ambiguity_k: 2,
        lamp_lit: false,
        build: |_| cups(2),
    },
    Fixture {
        id: "cups_ambiguity_3",
        class: FixtureClass::Ambiguity,
        task: "Pour the liquid from cup 1 into cup 2.",
        apparatus: &["Cup 1 with water.", "Cup 2 with water.", "Cup 3 with water."],
        plan: "Pour water from cup 1 into cup 2",
        ambiguity_k: 3,
        lamp_lit: false,
        build: |_| cups(3),
    },
];

pub fn fixture(task_id: &str) -> Result<&'static Fixture, SimError> {
    FIXTURES
        .iter()
        .find(|f| f.id == task_id)
        .ok_or_else(|| SimError::UnknownTask(task_id.to_string()))
}

/// Builds the bench for `(task_id, seed, trial)`; poses get a seeded jitter.
pub fn init_scene_with(task_id: &str, seed: u64, trial: u64, params: &FixtureParams) -> Result<LabScene, SimError> {
    let f = fixture(task_id)?;
    let mut rng = substream(seed, Purpose::Scene, trial);
    let mut scene = LabScene::empty(task_id);
    scene.lamp_lit = f.lamp_lit;
    let j = params.pose_jitter_px.max(0);
    for mut c in (f.build)(params) {
        if j > 0 {
            c.pose.x += rng.gen_range(-j..=j);
            c.pose.y += rng.gen_range(-j..=j);
        }
        debug_assert!(c.pose.within_canvas(), "{} off canvas", c.id);
        scene.containers.push(c);
    }
    Ok(scene)
}

pub fn init_scene(task_id: &str, seed: u64) -> Result<LabScene, SimError> {
    init_scene_with(task_id, seed, 0, &FixtureParams::default())
}
