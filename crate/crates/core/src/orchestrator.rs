//! The dual-loop engine. The outer loop asks the monitor after every
//! primitive and retries or repeats; the inner loop drives the policy tick
//! by tick and may let it try a failed primitive once more on its own.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{self, ExperimentRef, GatewayError, MockConfig, MockLab, ModelGateway, PolicyGateway, PolicyResetRequest, PolicyStepRequest, ScriptKind, StepRequest};
use crate::grammar::{format_primitive, parse_plan, validate_plan, LineError, Plan, PlanError, PrimitiveTask, Warning};
use crate::image::RasterImage;
use crate::rng::{substream, Purpose};
use crate::simlab::{
    apply_primitive, check_condition, fixture, init_scene_with, record_attempt, render_views, FixtureParams, LabScene,
    OutcomeDistribution, RubricOutcome, SimError, SimParams,
};
use crate::simlab::render::valid_frame_scale;
use crate::visualprompt::{compose_observation, GeometryError, ObservationError, PolicyObservation, PromptedImage, View, VisualMark, PROPRIO_DIM};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub task_id: String,
    pub seed: u64,
    pub trial: u64,
    pub max_outer_retries: u32,
    pub max_until_repetitions: u32,
    /// Ticks (20 Hz) one inner loop may spend, second attempt included.
    pub inner_tick_budget: u64,
    pub inner_second_attempt_prob: f64,
    pub prompt_enabled: bool,
    pub distributions: OutcomeDistribution,
    pub script: Option<ScriptKind>,
    pub horizon: usize,
    /// Integer downsampling of the 640×480 canvas for observations.
    pub frame_scale: u32,
    pub sim: SimParams,
    pub fixture: FixtureParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task_id: "acid_base".into(),
            seed: 0,
            trial: 0,
            max_outer_retries: 3,
            max_until_repetitions: 10,
            inner_tick_budget: 600,
            inner_second_attempt_prob: 0.5,
            prompt_enabled: true,
            distributions: OutcomeDistribution::all_success(),
            script: None,
            horizon: 50,
            frame_scale: 1,
            sim: SimParams::default(),
            fixture: FixtureParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn for_task(task_id: &str, seed: u64) -> Self {
        ExperimentConfig {
            task_id: task_id.into(),
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let bad = |m: &str| Err(OrchestratorError::Config(m.to_string()));
        if self.inner_tick_budget == 0 {
            return bad("inner_tick_budget must be at least 1");
        }
        if self.max_until_repetitions == 0 {
            return bad("max_until_repetitions must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.inner_second_attempt_prob) {
            return bad("inner_second_attempt_prob must lie in [0, 1]");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if !valid_frame_scale(self.frame_scale) {
            return bad("frame_scale must divide 160");
        }
        Ok(())
    }

    /// Settings of the in-process mock services matching this config.
    pub fn mock_config(&self) -> MockConfig {
        MockConfig {
            distributions: self.distributions.clone(),
            script: self.script,
            horizon: self.horizon,
        }
    }

    pub fn experiment_ref(&self) -> ExperimentRef {
        ExperimentRef::new(&self.task_id, self.seed, self.trial)
    }
}

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Observation(#[from] ObservationError),
    #[error("prompter returned unusable marks: {0:?}")]
    Geometry(Vec<GeometryError>),
    #[error("tick observer: {0}")]
    Observer(String),
}

/// One outer-loop attempt: the inner loop's graded tries, then the verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub repetition: u32,
    /// One entry per policy try; two when the inner loop retried.
    pub outcomes: Vec<RubricOutcome>,
    pub verdict: bool,
    pub ticks: u64,
    pub prompt_flag: bool,
    pub marks: Vec<VisualMark>,
}

impl AttemptRecord {
    pub fn final_outcome(&self) -> Option<&RubricOutcome> {
        self.outcomes.last()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub repetition: u32,
    pub verdict: bool,
    /// Ground truth from the simulator, when the predicate is bound.
    pub oracle: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Succeeded,
    RetryExhausted,
    UntilExhausted,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    /// 1-based position in the plan.
    pub index: usize,
    pub primitive: PrimitiveTask,
    pub guideline: Option<String>,
    pub attempts: Vec<AttemptRecord>,
    pub until_repetitions: u32,
    pub condition_checks: Vec<ConditionCheck>,
    pub status: StepStatus,
}

impl StepTrace {
    pub fn succeeded(&self) -> bool {
        self.status == StepStatus::Succeeded
    }

    /// Rubric score of the step: last graded try of the last attempt; a
    /// condition already met before any repetition counts as full marks.
    pub fn score(&self) -> f64 {
        match self.attempts.last().and_then(|a| a.final_outcome()) {
            Some(o) => o.score,
            None if self.succeeded() => 1.0,
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentStatus {
    Succeeded,
    PlanParseFailure,
    RetryExhausted { step: usize },
    UntilExhausted { step: usize },
    PolicyTimeout { step: usize },
    /// Infrastructure failure; the trial is scored as failing its first step.
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentLog {
    pub schema_version: u32,
    pub experiment_id: String,
    pub config: ExperimentConfig,
    pub plan_text: Option<String>,
    pub plan: Option<Plan>,
    pub parse_errors: Vec<LineError>,
    pub warnings: Vec<Warning>,
    pub traces: Vec<StepTrace>,
    pub status: ExperimentStatus,
    pub total_ticks: u64,
    pub final_scene: Option<LabScene>,
    /// Wall-clock duration; the only field allowed to differ on replay.
    pub wall_ms: u64,
}

impl ExperimentLog {
    fn new(cfg: &ExperimentConfig) -> Self {
        ExperimentLog {
            schema_version: SCHEMA_VERSION,
            experiment_id: cfg.experiment_ref().experiment_id,
            config: cfg.clone(),
            plan_text: None,
            plan: None,
            parse_errors: Vec::new(),
            warnings: Vec::new(),
            traces: Vec::new(),
            status: ExperimentStatus::Succeeded,
            total_ticks: 0,
            final_scene: None,
            wall_ms: 0,
        }
    }

    pub fn succeeded(&self) -> bool {
        self.status == ExperimentStatus::Succeeded
    }

    pub fn plan_len(&self) -> usize {
        self.plan.as_ref().map_or(0, |p| p.steps.len())
    }

    /// Sorted-key JSON with wall metadata cleared.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.wall_ms = 0;
        serde_json::to_string(&c).expect("log serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        let v = serde_json::to_value(self).expect("log serializes");
        serde_json::to_string_pretty(&v).expect("value serializes")
    }
}

/// One executed tick, as seen by recorders.
pub struct TickEvent<'a> {
    /// Experiment-wide tick counter starting at 0.
    pub t: u64,
    pub step_no: usize,
    pub observation: &'a PolicyObservation,
    pub chunk: &'a [Vec<f64>],
    pub row: usize,
}

pub trait TickObserver {
    fn on_tick(&mut self, ev: &TickEvent<'_>) -> Result<(), String>;
}

pub struct NoObserver;

impl TickObserver for NoObserver {
    fn on_tick(&mut self, _: &TickEvent<'_>) -> Result<(), String> {
        Ok(())
    }
}

/// Everything the inner loop needs besides mutable state.
pub struct InnerCtx<'a> {
    pub exp: &'a ExperimentRef,
    pub policy: &'a dyn PolicyGateway,
    pub step_no: usize,
    /// The step without its until clause.
    pub step: &'a PrimitiveTask,
    pub second_attempt_prob: f64,
    pub budget: u64,
    pub frame_scale: u32,
    pub sim: &'a SimParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerOutcome {
    pub outcomes: Vec<RubricOutcome>,
    pub ticks: u64,
    pub timed_out: bool,
}

impl InnerOutcome {
    pub fn success(&self) -> bool {
        !self.timed_out && self.outcomes.last().is_some_and(|o| o.success)
    }
}

/// Applies a graded try; a rule that cannot fire leaves the physical state
/// alone and is recorded as an attempt without effect.
fn apply(scene: &LabScene, step: &PrimitiveTask, outcome: &RubricOutcome, sim: &SimParams) -> Result<LabScene, SimError> {
    match apply_primitive(scene, step, outcome, sim) {
        Err(SimError::RuleNotApplicable { .. }) => Ok(record_attempt(scene, step, outcome, false)),
        other => other,
    }
}

/// Runs one policy try to completion; `None` means the budget ran out.
#[allow(clippy::too_many_arguments)]
fn policy_try(
    ctx: &InnerCtx<'_>,
    scene: &LabScene,
    prompted: Option<&PromptedImage>,
    proprio: &mut Vec<f64>,
    ticks: &mut u64,
    clock: &mut u64,
    observer: &mut dyn TickObserver,
) -> Result<Option<RubricOutcome>, OrchestratorError> {
    let step_text = format_primitive(ctx.step);
    ctx.policy.policy_reset(&PolicyResetRequest {
        exp: ctx.exp.clone(),
        step_no: ctx.step_no,
        step_text,
    })?;
    let views = render_views(scene, ctx.frame_scale);
    loop {
        if *ticks >= ctx.budget {
            return Ok(None);
        }
        let obs = compose_observation(&views, proprio, ctx.step, prompted.cloned(), ctx.exp.seed, ctx.step_no)?;
        let resp = gateway::policy_step(
            ctx.policy,
            &PolicyStepRequest {
                exp: ctx.exp.clone(),
                instruction: obs.instruction.clone(),
                observation: obs.clone(),
            },
        )?;
        for row in 0..resp.actions.len() {
            if *ticks >= ctx.budget {
                return Ok(None);
            }
            observer
                .on_tick(&TickEvent {
                    t: *clock,
                    step_no: ctx.step_no,
                    observation: &obs,
                    chunk: &resp.actions,
                    row,
                })
                .map_err(OrchestratorError::Observer)?;
            *ticks += 1;
            *clock += 1;
        }
        *proprio = resp.actions.last().expect("chunk checked non-empty").clone();
        if resp.done {
            return Ok(resp.outcome);
        }
    }
}

/// Drives the policy for one primitive. After a failed try the policy gets
/// one more go with probability `second_attempt_prob`, from the state the
/// first try left behind.
pub fn inner_loop(
    ctx: &InnerCtx<'_>,
    scene: &mut LabScene,
    prompted: Option<&PromptedImage>,
    proprio: &mut Vec<f64>,
    rng: &mut ChaCha8Rng,
    clock: &mut u64,
    observer: &mut dyn TickObserver,
) -> Result<InnerOutcome, OrchestratorError> {
    let mut out = InnerOutcome {
        outcomes: Vec::new(),
        ticks: 0,
        timed_out: false,
    };
    for try_no in 0..2 {
        if try_no == 1 {
            let failed = out.outcomes.last().is_some_and(|o| !o.success);
            if !failed || !rng.gen_bool(ctx.second_attempt_prob) {
                break;
            }
        }
        match policy_try(ctx, scene, prompted, proprio, &mut out.ticks, clock, observer)? {
            Some(outcome) => {
                *scene = apply(scene, ctx.step, &outcome, ctx.sim)?;
                out.outcomes.push(outcome);
            }
            None => {
                out.timed_out = true;
                break;
            }
        }
    }
    Ok(out)
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    exp: ExperimentRef,
    model: &'a dyn ModelGateway,
    policy: &'a dyn PolicyGateway,
    observer: &'a mut dyn TickObserver,
    rng: ChaCha8Rng,
    scene: LabScene,
    proprio: Vec<f64>,
    clock: u64,
}

fn strip_until(step: &PrimitiveTask) -> PrimitiveTask {
    let mut p = step.clone();
    p.until = None;
    p.raw_text = format_primitive(&p);
    p
}

impl Run<'_> {
    fn front(&self) -> std::sync::Arc<RasterImage> {
        render_views(&self.scene, self.cfg.frame_scale)[&View::Front].clone()
    }

    fn request(&self, step_no: usize, text: String, front: &RasterImage, guideline: Option<&String>) -> StepRequest {
        StepRequest {
            exp: self.exp.clone(),
            step_no,
            step_text: text,
            image_b64: front.to_b64(),
            scene: Some(self.scene.clone()),
            guideline: guideline.cloned(),
        }
    }

    fn monitor(&self, step_no: usize, step: &PrimitiveTask) -> Result<bool, OrchestratorError> {
        let front = self.front();
        Ok(gateway::verify(self.model, &self.request(step_no, format_primitive(step), &front, None))?)
    }

    /// Prompt, inner loop, verify; retried until the monitor agrees.
    fn outer(
        &mut self,
        step_no: usize,
        prim: &PrimitiveTask,
        repetition: u32,
        guideline: Option<&String>,
        trace: &mut StepTrace,
    ) -> Result<StepStatus, OrchestratorError> {
        for _ in 0..=self.cfg.max_outer_retries {
            let front = self.front();
            let mut marks = Vec::new();
            let mut prompted = None;
            if self.cfg.prompt_enabled {
                let req = self.request(step_no, format_primitive(prim), &front, guideline);
                marks = gateway::visual_prompt(self.model, &req)?;
                if !marks.is_empty() {
                    prompted = Some(PromptedImage::bind(front.clone(), marks.clone()).map_err(OrchestratorError::Geometry)?);
                }
            }
            let ctx = InnerCtx {
                exp: &self.exp,
                policy: self.policy,
                step_no,
                step: prim,
                second_attempt_prob: self.cfg.inner_second_attempt_prob,
                budget: self.cfg.inner_tick_budget,
                frame_scale: self.cfg.frame_scale,
                sim: &self.cfg.sim,
            };
            let inner = inner_loop(
                &ctx,
                &mut self.scene,
                prompted.as_ref(),
                &mut self.proprio,
                &mut self.rng,
                &mut self.clock,
                &mut *self.observer,
            )?;
            let verdict = !inner.timed_out && self.monitor(step_no, prim)?;
            trace.attempts.push(AttemptRecord {
                repetition,
                outcomes: inner.outcomes,
                verdict,
                ticks: inner.ticks,
                prompt_flag: prompted.is_some(),
                marks,
            });
            if inner.timed_out {
                return Ok(StepStatus::Timeout);
            }
            if verdict {
                return Ok(StepStatus::Succeeded);
            }
        }
        Ok(StepStatus::RetryExhausted)
    }

    fn step(&mut self, step_no: usize, step: &PrimitiveTask) -> Result<StepTrace, OrchestratorError> {
        let front = self.front();
        let guideline = gateway::guideline(self.model, &self.request(step_no, format_primitive(step), &front, None))?;
        let mut trace = StepTrace {
            index: step_no,
            primitive: step.clone(),
            guideline: guideline.clone(),
            attempts: Vec::new(),
            until_repetitions: 0,
            condition_checks: Vec::new(),
            status: StepStatus::Succeeded,
        };
        let prim = strip_until(step);
        let Some(cond) = &step.until else {
            trace.status = self.outer(step_no, &prim, 0, guideline.as_ref(), &mut trace)?;
            return Ok(trace);
        };
        let mut rep = 0;
        trace.status = loop {
            // the condition is judged before the first repetition and after each one
            let verdict = self.monitor(step_no, step)?;
            let oracle = check_condition(&self.scene, cond).ok();
            trace.condition_checks.push(ConditionCheck {
                repetition: rep,
                verdict,
                oracle,
            });
            if verdict {
                break StepStatus::Succeeded;
            }
            if rep == self.cfg.max_until_repetitions {
                break StepStatus::UntilExhausted;
            }
            rep += 1;
            trace.until_repetitions = rep;
            let st = self.outer(step_no, &prim, rep, guideline.as_ref(), &mut trace)?;
            if st != StepStatus::Succeeded {
                break st;
            }
        };
        Ok(trace)
    }
}

pub fn run_experiment(
    cfg: &ExperimentConfig,
    model: &dyn ModelGateway,
    policy: &dyn PolicyGateway,
) -> Result<ExperimentLog, OrchestratorError> {
    run_experiment_observed(cfg, model, policy, &mut NoObserver)
}

pub fn run_experiment_observed(
    cfg: &ExperimentConfig,
    model: &dyn ModelGateway,
    policy: &dyn PolicyGateway,
    observer: &mut dyn TickObserver,
) -> Result<ExperimentLog, OrchestratorError> {
    cfg.validate()?;
    let started = Instant::now();
    let f = fixture(&cfg.task_id)?;
    let apparatus = f.apparatus_list();
    let exp = cfg.experiment_ref();
    let mut log = ExperimentLog::new(cfg);
    let plan_text = gateway::plan(model, &exp, f.task, &apparatus)?;
    log.plan_text = Some(plan_text.clone());
    let mut plan = match parse_plan(&plan_text) {
        Ok(p) => p,
        Err(e) => {
            if let PlanError::PlanParseFailure { errors } = e {
                log.parse_errors = errors;
            }
            log.status = ExperimentStatus::PlanParseFailure;
            log.wall_ms = started.elapsed().as_millis() as u64;
            return Ok(log);
        }
    };
    log.warnings = validate_plan(&mut plan, &apparatus);
    log.plan = Some(plan.clone());

    let mut run = Run {
        cfg,
        exp: exp.clone(),
        model,
        policy,
        observer,
        rng: substream(cfg.seed, Purpose::Orchestrator, cfg.trial),
        scene: init_scene_with(&cfg.task_id, cfg.seed, cfg.trial, &cfg.fixture)?,
        proprio: vec![0.0; PROPRIO_DIM],
        clock: 0,
    };
    for (i, step) in plan.steps.iter().enumerate() {
        let trace = run.step(i + 1, step)?;
        let status = trace.status;
        log.traces.push(trace);
        log.status = match status {
            StepStatus::Succeeded => continue,
            StepStatus::RetryExhausted => ExperimentStatus::RetryExhausted { step: i + 1 },
            StepStatus::UntilExhausted => ExperimentStatus::UntilExhausted { step: i + 1 },
            StepStatus::Timeout => ExperimentStatus::PolicyTimeout { step: i + 1 },
        };
        break;
    }
    log.total_ticks = run.clock;
    log.final_scene = Some(run.scene);
    log.wall_ms = started.elapsed().as_millis() as u64;
    Ok(log)
}

/// Like [`run_experiment`], but infrastructure errors end up in the log.
pub fn run_trial(cfg: &ExperimentConfig, model: &dyn ModelGateway, policy: &dyn PolicyGateway) -> ExperimentLog {
    run_experiment(cfg, model, policy).unwrap_or_else(|e| {
        let mut log = ExperimentLog::new(cfg);
        log.status = ExperimentStatus::Error { message: e.to_string() };
        log
    })
}

/// Trials `0..n` of `cfg` on `jobs` threads, returned in trial order.
pub fn run_campaign_with(
    cfg: &ExperimentConfig,
    n: u64,
    jobs: usize,
    model: &dyn ModelGateway,
    policy: &dyn PolicyGateway,
) -> Vec<ExperimentLog> {
    let go = || {
        (0..n)
            .into_par_iter()
            .map(|trial| {
                let c = ExperimentConfig { trial, ..cfg.clone() };
                run_trial(&c, model, policy)
            })
            .collect()
    };
    match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(go),
        Err(_) => go(),
    }
}

/// Campaign against fresh in-process mock services.
pub fn run_campaign(cfg: &ExperimentConfig, n: u64, jobs: usize) -> Vec<ExperimentLog> {
    let lab = MockLab::new(cfg.mock_config());
    run_campaign_with(cfg, n, jobs, &lab, &lab)
}

pub fn run_mock(cfg: &ExperimentConfig) -> Result<ExperimentLog, OrchestratorError> {
    let lab = MockLab::new(cfg.mock_config());
    run_experiment(cfg, &lab, &lab)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("replay diverges at {path}: logged {logged}, replayed {replayed}")]
pub struct Divergence {
    pub path: String,
    pub logged: String,
    pub replayed: String,
}

fn first_difference(path: &str, a: &serde_json::Value, b: &serde_json::Value) -> Option<Divergence> {
    use serde_json::Value as V;
    match (a, b) {
        (V::Object(x), V::Object(y)) => {
            for k in x.keys().chain(y.keys().filter(|k| !x.contains_key(*k))) {
                let (va, vb) = (x.get(k).unwrap_or(&V::Null), y.get(k).unwrap_or(&V::Null));
                if let Some(d) = first_difference(&format!("{path}.{k}"), va, vb) {
                    return Some(d);
                }
            }
            None
        }
        (V::Array(x), V::Array(y)) if x.len() == y.len() => x
            .iter()
            .zip(y)
            .enumerate()
            .find_map(|(i, (va, vb))| first_difference(&format!("{path}[{i}]"), va, vb)),
        _ if a == b => None,
        _ => {
            let short = |v: &V| {
                let s = v.to_string();
                if s.len() > 80 {
                    format!("{}…", &s[..s.char_indices().nth(80).map_or(s.len(), |(i, _)| i)])
                } else {
                    s
                }
            };
            Some(Divergence {
                path: path.to_string(),
                logged: short(a),
                replayed: short(b),
            })
        }
    }
}

/// Re-runs a logged experiment against fresh mock services and compares
/// everything but wall time.
pub fn replay(log: &ExperimentLog) -> Result<ExperimentLog, ReplayError> {
    let rerun = match run_mock(&log.config) {
        Ok(l) => l,
        Err(e) => {
            let mut l = ExperimentLog::new(&log.config);
            l.status = ExperimentStatus::Error { message: e.to_string() };
            l
        }
    };
    if rerun.canonical_json() == log.canonical_json() {
        return Ok(rerun);
    }
    let a: serde_json::Value = serde_json::from_str(&log.canonical_json()).expect("own JSON");
    let b: serde_json::Value = serde_json::from_str(&rerun.canonical_json()).expect("own JSON");
    Err(ReplayError::Diverged(first_difference("$", &a, &b).unwrap_or(Divergence {
        path: "$".into(),
        logged: "<serialized form>".into(),
        replayed: "<serialized form>".into(),
    })))
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Diverged(Divergence),
}
