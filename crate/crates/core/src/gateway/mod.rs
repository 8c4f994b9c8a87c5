//! Wire protocol between the orchestrator and the model services: planner,
//! guideline writer, visual prompter, monitor, and the action policy.
//!
//! Every request carries an [`ExperimentRef`] so stateful servers can keep
//! one session per experiment. Transports implement [`ModelGateway`] and
//! [`PolicyGateway`]; the typed helpers in this module apply response
//! validation on top of whichever transport is in use.

pub mod http;
pub mod mock;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::grammar::PRIMITIVE_MENU;
use crate::simlab::{LabScene, RubricOutcome};
use crate::visualprompt::{marks_from_value, MarkError, PolicyObservation, VisualMark, PROPRIO_DIM};

pub use http::{HttpGateway, MockServer};
pub use mock::{MockConfig, MockLab, ScriptKind};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExperimentRef {
    pub experiment_id: String,
    pub task_id: String,
    pub seed: u64,
    pub trial: u64,
}

impl ExperimentRef {
    pub fn new(task_id: &str, seed: u64, trial: u64) -> Self {
        ExperimentRef {
            experiment_id: format!("{task_id}/{seed}/{trial}"),
            task_id: task_id.to_string(),
            seed,
            trial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    #[serde(flatten)]
    pub exp: ExperimentRef,
    pub task: String,
    pub apparatus: Vec<String>,
    pub primitive_menu: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanResponse {
    pub steps: String,
}

/// Shared request shape of /guideline, /visual_prompt and /verify.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRequest {
    #[serde(flatten)]
    pub exp: ExperimentRef,
    pub step_no: usize,
    pub step_text: String,
    pub image_b64: String,
    /// Serialized bench for monitors that read state instead of pixels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<LabScene>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guideline: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidelineResponse {
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualPromptResponse {
    pub marks: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyResponse {
    pub verdict: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyResetRequest {
    #[serde(flatten)]
    pub exp: ExperimentRef,
    pub step_no: usize,
    pub step_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PolicyResetResponse {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyStepRequest {
    #[serde(flatten)]
    pub exp: ExperimentRef,
    pub observation: PolicyObservation,
    pub instruction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyStepResponse {
    pub actions: Vec<Vec<f64>>,
    pub done: bool,
    /// Rubric grade of the finished attempt; present only when `done`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<RubricOutcome>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("bad response shape: {0}")]
    BadResponseShape(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("monitor answered {0:?}, expected Y or N")]
    BadVerdict(String),
    #[error("action chunk: {0}")]
    ShapeError(String),
    #[error(transparent)]
    Marks(#[from] MarkError),
    #[error("bad request: {0}")]
    BadRequest(String),
}

impl GatewayError {
    /// Machine-readable code used in HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::Transport(_) => "transport",
            GatewayError::BadResponseShape(_) => "bad_response_shape",
            GatewayError::UnknownTask(_) => "unknown_task",
            GatewayError::BadVerdict(_) => "bad_verdict",
            GatewayError::ShapeError(_) => "shape_error",
            GatewayError::Marks(_) => "malformed_marks",
            GatewayError::BadRequest(_) => "bad_request",
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            GatewayError::UnknownTask(_) => 404,
            GatewayError::BadRequest(_) => 400,
            _ => 500,
        }
    }

    pub fn from_code(code: &str, message: String) -> GatewayError {
        match code {
            "unknown_task" => GatewayError::UnknownTask(message),
            "bad_request" => GatewayError::BadRequest(message),
            "bad_verdict" => GatewayError::BadVerdict(message),
            "shape_error" => GatewayError::ShapeError(message),
            "bad_response_shape" | "malformed_marks" => GatewayError::BadResponseShape(message),
            _ => GatewayError::Transport(format!("{code}: {message}")),
        }
    }
}

/// Planner, guideline, prompter and monitor roles.
pub trait ModelGateway: Send + Sync {
    fn plan(&self, req: &PlanRequest) -> Result<PlanResponse, GatewayError>;
    fn guideline(&self, req: &StepRequest) -> Result<GuidelineResponse, GatewayError>;
    fn visual_prompt(&self, req: &StepRequest) -> Result<VisualPromptResponse, GatewayError>;
    fn verify(&self, req: &StepRequest) -> Result<VerifyResponse, GatewayError>;
}

pub trait PolicyGateway: Send + Sync {
    fn policy_reset(&self, req: &PolicyResetRequest) -> Result<PolicyResetResponse, GatewayError>;
    fn policy_step(&self, req: &PolicyStepRequest) -> Result<PolicyStepResponse, GatewayError>;
}

pub fn menu() -> Vec<String> {
    PRIMITIVE_MENU.iter().map(|s| s.to_string()).collect()
}

pub fn check_menu(menu: &[String]) -> Result<(), GatewayError> {
    if menu.iter().map(String::as_str).eq(PRIMITIVE_MENU.iter().copied()) {
        Ok(())
    } else {
        Err(GatewayError::BadRequest("primitive_menu must be the 7-template list".into()))
    }
}

pub fn plan(gw: &dyn ModelGateway, exp: &ExperimentRef, task: &str, apparatus: &[String]) -> Result<String, GatewayError> {
    let req = PlanRequest {
        exp: exp.clone(),
        task: task.to_string(),
        apparatus: apparatus.to_vec(),
        primitive_menu: menu(),
    };
    Ok(gw.plan(&req)?.steps)
}

/// A literal "None" answer means the same as an absent guideline.
pub fn guideline(gw: &dyn ModelGateway, req: &StepRequest) -> Result<Option<String>, GatewayError> {
    Ok(gw
        .guideline(req)?
        .text
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty() && !t.eq_ignore_ascii_case("none")))
}

pub fn visual_prompt(gw: &dyn ModelGateway, req: &StepRequest) -> Result<Vec<VisualMark>, GatewayError> {
    Ok(marks_from_value(gw.visual_prompt(req)?.marks)?)
}

pub fn parse_verdict(raw: &str) -> Result<bool, GatewayError> {
    match raw.trim() {
        "Y" => Ok(true),
        "N" => Ok(false),
        _ => Err(GatewayError::BadVerdict(raw.to_string())),
    }
}

pub fn verify(gw: &dyn ModelGateway, req: &StepRequest) -> Result<bool, GatewayError> {
    parse_verdict(&gw.verify(req)?.verdict)
}

pub fn check_chunk(resp: &PolicyStepResponse) -> Result<(), GatewayError> {
    if resp.actions.is_empty() {
        return Err(GatewayError::ShapeError("empty action chunk".into()));
    }
    if let Some((i, row)) = resp.actions.iter().enumerate().find(|(_, r)| r.len() != PROPRIO_DIM) {
        return Err(GatewayError::ShapeError(format!("row {i} has {} values, expected {PROPRIO_DIM}", row.len())));
    }
    if resp.done && resp.outcome.is_none() {
        return Err(GatewayError::BadResponseShape("finished attempt without an outcome".into()));
    }
    Ok(())
}

pub fn policy_step(gw: &dyn PolicyGateway, req: &PolicyStepRequest) -> Result<PolicyStepResponse, GatewayError> {
    let resp = gw.policy_step(req)?;
    check_chunk(&resp)?;
    Ok(resp)
}
