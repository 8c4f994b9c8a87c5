//! Deterministic 2D chemistry bench: scene state, reaction rules, rubric
//! outcomes and a simple rasterizer.

pub mod fixtures;
pub mod render;
pub mod rubric;
pub mod rules;
pub mod scene;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::PrimitiveVerb;

pub use fixtures::{fixture, init_scene, init_scene_with, Fixture, FixtureClass, FixtureParams, FIXTURES};
pub use render::{render_front, render_view, render_views};
pub use rubric::{sample_outcome, OutcomeDistribution, RubricOutcome};
pub use rules::{apply_primitive, check_condition, primitive_completed, record_attempt};
pub use scene::{Container, ContainerKind, LabScene, Pose};

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimError {
    #[error("no container matches {0:?}")]
    MissingContainer(String),
    #[error("{verb} not applicable: {reason}")]
    RuleNotApplicable { verb: PrimitiveVerb, reason: String },
    #[error("unknown task id {0:?}")]
    UnknownTask(String),
    #[error("condition {0:?} has no evaluable predicate")]
    UnboundPredicate(String),
    #[error("{verb} has no rubric category {category:?}")]
    UnknownCategory { verb: PrimitiveVerb, category: String },
    #[error("invalid outcome distribution: {0}")]
    InvalidDistribution(String),
}

/// Physical constants of the mock bench.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    /// Fraction lost by a pour graded `spill_complete`.
    pub spill_complete: f64,
    /// Fraction lost by slight spills (pour and transfer).
    pub spill_slight: f64,
    /// Fraction lost by a transfer graded `spills_out`.
    pub solid_spill_heavy: f64,
    /// Water boiled off per press of the evaporator.
    pub evaporation_ml: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            spill_complete: 1.0,
            spill_slight: 0.1,
            solid_spill_heavy: 0.5,
            evaporation_ml: 20.0,
        }
    }
}
