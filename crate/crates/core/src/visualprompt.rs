//! Point and box marks drawn on the front view, and assembly of the policy
//! observation that carries the prompted image as a fifth view.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::grammar::{PrimitiveTask, PrimitiveVerb};
use crate::image::{RasterImage, Rgb};
use crate::rng::mix64;

pub const PROPRIO_DIM: usize = 14;

pub const BOX_COLOR: Rgb = [0, 0, 255];
pub const GRASP_COLOR: Rgb = [192, 144, 0];
pub const TARGET_COLOR: Rgb = [255, 0, 0];
pub const BOX_STROKE: i64 = 2;
pub const DISC_RADIUS: i64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkRole {
    GraspPoint,
    TargetPoint,
    Region,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Geometry {
    Point { x: i64, y: i64 },
    Box { xmin: i64, ymin: i64, xmax: i64, ymax: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Value", into = "Value")]
pub struct VisualMark {
    pub geometry: Geometry,
    pub role: MarkRole,
}

impl VisualMark {
    pub fn point(x: i64, y: i64, role: MarkRole) -> Self {
        VisualMark {
            geometry: Geometry::Point { x, y },
            role,
        }
    }

    pub fn bbox(xmin: i64, ymin: i64, xmax: i64, ymax: i64) -> Self {
        VisualMark {
            geometry: Geometry::Box { xmin, ymin, xmax, ymax },
            role: MarkRole::Region,
        }
    }

    /// Pixels a rendered mark may touch, as an inclusive box.
    pub fn footprint(&self) -> (i64, i64, i64, i64) {
        match self.geometry {
            Geometry::Point { x, y } => (x - DISC_RADIUS, y - DISC_RADIUS, x + DISC_RADIUS, y + DISC_RADIUS),
            Geometry::Box { xmin, ymin, xmax, ymax } => (xmin, ymin, xmax, ymax),
        }
    }

    /// Uniform rescale, flooring, e.g. from the full canvas into a reduced frame.
    pub fn scaled(&self, num: i64, den: i64) -> VisualMark {
        let s = |v: i64| v * num / den;
        let geometry = match self.geometry {
            Geometry::Point { x, y } => Geometry::Point { x: s(x), y: s(y) },
            Geometry::Box { xmin, ymin, xmax, ymax } => Geometry::Box {
                xmin: s(xmin),
                ymin: s(ymin),
                xmax: s(xmax),
                ymax: s(ymax),
            },
        };
        VisualMark { geometry, role: self.role }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MarkError {
    #[error("malformed mark JSON: {0}")]
    MalformedJson(String),
    #[error("unknown mark type `{0}`")]
    UnknownMarkType(String),
    #[error("{kind} needs {} coordinates, got {n}", if .kind == "box" { 4 } else { 2 })]
    BadCoordinateCount { kind: String, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeometryError {
    #[error("mark {index}: box corners are inverted")]
    InvertedBox { index: usize },
    #[error("mark {index}: outside the image")]
    OutOfBounds { index: usize },
}

impl From<VisualMark> for Value {
    fn from(m: VisualMark) -> Value {
        match m.geometry {
            Geometry::Point { x, y } => json!({"type": "point", "coordinates": [x, y], "role": m.role}),
            Geometry::Box { xmin, ymin, xmax, ymax } => {
                json!({"type": "box", "coordinates": [xmin, ymin, xmax, ymax], "role": m.role})
            }
        }
    }
}

impl TryFrom<Value> for VisualMark {
    type Error = MarkError;

    fn try_from(v: Value) -> Result<Self, MarkError> {
        let malformed = |m: &str| MarkError::MalformedJson(m.to_string());
        let obj = v.as_object().ok_or_else(|| malformed("mark is not an object"))?;
        let kind = obj
            .get("type")
            .and_then(Value::as_str)
            .ok_or_else(|| malformed("missing string field `type`"))?;
        if kind != "box" && kind != "point" {
            return Err(MarkError::UnknownMarkType(kind.to_string()));
        }
        let coords = obj
            .get("coordinates")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed("missing array field `coordinates`"))?;
        let nums = coords
            .iter()
            .map(|c| c.as_i64().ok_or_else(|| malformed("coordinates must be integers")))
            .collect::<Result<Vec<i64>, _>>()?;
        let role = match obj.get("role") {
            None | Some(Value::Null) => None,
            Some(r) => Some(serde_json::from_value::<MarkRole>(r.clone()).map_err(|e| malformed(&e.to_string()))?),
        };
        match (kind, nums.as_slice()) {
            ("box", &[xmin, ymin, xmax, ymax]) => Ok(VisualMark {
                geometry: Geometry::Box { xmin, ymin, xmax, ymax },
                role: role.unwrap_or(MarkRole::Region),
            }),
            ("point", &[x, y]) => Ok(VisualMark {
                geometry: Geometry::Point { x, y },
                role: role.unwrap_or(MarkRole::TargetPoint),
            }),
            _ => Err(MarkError::BadCoordinateCount {
                kind: kind.to_string(),
                n: nums.len(),
            }),
        }
    }
}

/// Parses the prompter's list-of-objects response.
pub fn parse_marks(json_text: &str) -> Result<Vec<VisualMark>, MarkError> {
    let v: Value = serde_json::from_str(json_text).map_err(|e| MarkError::MalformedJson(e.to_string()))?;
    marks_from_value(v)
}

pub fn marks_from_value(v: Value) -> Result<Vec<VisualMark>, MarkError> {
    match v {
        Value::Array(items) => items.into_iter().map(VisualMark::try_from).collect(),
        _ => Err(MarkError::MalformedJson("expected a JSON array".into())),
    }
}

pub fn marks_to_value(marks: &[VisualMark]) -> Value {
    Value::Array(marks.iter().map(|m| Value::from(*m)).collect())
}

pub fn serialize_marks(marks: &[VisualMark]) -> String {
    marks_to_value(marks).to_string()
}

pub fn validate_marks(marks: &[VisualMark], width: u32, height: u32) -> Result<(), Vec<GeometryError>> {
    let (w, h) = (width as i64, height as i64);
    let inside = |x: i64, y: i64| (0..w).contains(&x) && (0..h).contains(&y);
    let mut errors = Vec::new();
    for (index, m) in marks.iter().enumerate() {
        match m.geometry {
            Geometry::Point { x, y } => {
                if !inside(x, y) {
                    errors.push(GeometryError::OutOfBounds { index });
                }
            }
            Geometry::Box { xmin, ymin, xmax, ymax } => {
                if xmin >= xmax || ymin >= ymax {
                    errors.push(GeometryError::InvertedBox { index });
                } else if !inside(xmin, ymin) || !inside(xmax, ymax) {
                    errors.push(GeometryError::OutOfBounds { index });
                }
            }
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

/// Draws marks in order over a copy of `base`.
pub fn render_marks(base: &RasterImage, marks: &[VisualMark]) -> RasterImage {
    let mut out = base.clone();
    for m in marks {
        match m.geometry {
            Geometry::Box { xmin, ymin, xmax, ymax } => out.stroke_box(xmin, ymin, xmax, ymax, BOX_STROKE, BOX_COLOR),
            Geometry::Point { x, y } => {
                let c = if m.role == MarkRole::GraspPoint { GRASP_COLOR } else { TARGET_COLOR };
                out.fill_disc(x, y, DISC_RADIUS, c);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptedImage {
    pub base: Arc<RasterImage>,
    pub marks: Vec<VisualMark>,
    pub rendered: Arc<RasterImage>,
}

impl PromptedImage {
    /// Validates marks against the image they are bound to, then renders.
    pub fn bind(base: Arc<RasterImage>, marks: Vec<VisualMark>) -> Result<PromptedImage, Vec<GeometryError>> {
        validate_marks(&marks, base.width(), base.height())?;
        let rendered = Arc::new(render_marks(&base, &marks));
        Ok(PromptedImage { base, marks, rendered })
    }
}

#[derive(Serialize, Deserialize)]
struct PromptedWire {
    base_b64: String,
    image_b64: String,
    marks: Vec<VisualMark>,
}

impl Serialize for PromptedImage {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PromptedWire {
            base_b64: self.base.to_b64(),
            image_b64: self.rendered.to_b64(),
            marks: self.marks.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PromptedImage {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let w = PromptedWire::deserialize(d)?;
        let base = RasterImage::from_b64(&w.base_b64).map_err(D::Error::custom)?;
        let rendered = RasterImage::from_b64(&w.image_b64).map_err(D::Error::custom)?;
        Ok(PromptedImage {
            base: Arc::new(base),
            marks: w.marks,
            rendered: Arc::new(rendered),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    Front,
    Top,
    LeftWrist,
    RightWrist,
}

impl View {
    pub const ALL: [View; 4] = [View::Front, View::Top, View::LeftWrist, View::RightWrist];

    pub fn name(self) -> &'static str {
        match self {
            View::Front => "front",
            View::Top => "top",
            View::LeftWrist => "left_wrist",
            View::RightWrist => "right_wrist",
        }
    }
}

pub type Views = BTreeMap<View, Arc<RasterImage>>;

mod views_b64 {
    use super::*;

    pub fn serialize<S: serde::Serializer>(views: &Views, s: S) -> Result<S::Ok, S::Error> {
        let m: BTreeMap<View, String> = views.iter().map(|(k, v)| (*k, v.to_b64())).collect();
        m.serialize(s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Views, D::Error> {
        use serde::de::Error;
        let m = BTreeMap::<View, String>::deserialize(d)?;
        m.into_iter()
            .map(|(k, v)| Ok((k, Arc::new(RasterImage::from_b64(&v).map_err(D::Error::custom)?))))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyObservation {
    #[serde(with = "views_b64")]
    pub views: Views,
    pub proprio: Vec<f64>,
    pub instruction: String,
    pub prompted: Option<PromptedImage>,
    pub prompt_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ObservationError {
    #[error("missing view `{}`", .0.name())]
    MissingView(View),
    #[error("proprioception must have {PROPRIO_DIM} values, got {0}")]
    ProprioLength(usize),
}

#[derive(Debug, Deserialize)]
pub struct TemplateBank {
    pub prompted: BTreeMap<PrimitiveVerb, Vec<String>>,
    pub plain: BTreeMap<PrimitiveVerb, Vec<String>>,
}

pub fn template_bank() -> &'static TemplateBank {
    static BANK: OnceLock<TemplateBank> = OnceLock::new();
    BANK.get_or_init(|| {
        serde_json::from_str(include_str!("../assets/instruction_templates.json"))
            .expect("bundled instruction templates are valid JSON")
    })
}

/// Replaces each `[COLOR]` by the color of the mark kind named right after it.
pub fn bind_colors(template: &str, verb: PrimitiveVerb) -> String {
    let point = match verb {
        PrimitiveVerb::Grasp | PrimitiveVerb::Pour => "amber",
        _ => "red",
    };
    let mut out = String::with_capacity(template.len());
    let mut parts = template.split("[COLOR]");
    out.push_str(parts.next().unwrap_or(""));
    for rest in parts {
        let next = rest.trim_start().to_ascii_lowercase();
        let c = if next.starts_with("box") || next.starts_with("bounding") { "blue" } else { point };
        out.push_str(c);
        out.push_str(rest);
    }
    out
}

pub fn pick_instruction(verb: PrimitiveVerb, prompted: bool, seed: u64, step_index: usize) -> String {
    let bank = template_bank();
    let list = if prompted { &bank.prompted[&verb] } else { &bank.plain[&verb] };
    let i = (mix64(seed ^ mix64(step_index as u64)) % list.len() as u64) as usize;
    bind_colors(&list[i], verb)
}

pub fn compose_observation(
    views: &Views,
    proprio: &[f64],
    step: &PrimitiveTask,
    prompted: Option<PromptedImage>,
    seed: u64,
    step_index: usize,
) -> Result<PolicyObservation, ObservationError> {
    if let Some(v) = View::ALL.into_iter().find(|v| !views.contains_key(v)) {
        return Err(ObservationError::MissingView(v));
    }
    if proprio.len() != PROPRIO_DIM {
        return Err(ObservationError::ProprioLength(proprio.len()));
    }
    let prompt_flag = prompted.is_some();
    Ok(PolicyObservation {
        views: views.clone(),
        proprio: proprio.to_vec(),
        instruction: pick_instruction(step.verb, prompt_flag, seed, step_index),
        prompted,
        prompt_flag,
    })
}
