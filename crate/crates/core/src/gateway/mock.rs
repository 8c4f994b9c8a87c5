//! In-process stand-ins for every model role. The planner answers with the
//! fixture plan, the prompter and monitor read the serialized scene, and the
//! policy emits fixed-length action chunks and grades each attempt by
//! sampling the configured rubric distribution.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::grammar::{bind_predicate, parse_primitive, PrimitiveTask, PrimitiveVerb, SlotRole};
use crate::image::RasterImage;
use crate::rng::{substream, Purpose};
use crate::simlab::render::liquid_surface_y;
use crate::simlab::{
    check_condition, fixture, primitive_completed, sample_outcome, Container, ContainerKind, LabScene,
    OutcomeDistribution, RubricOutcome, SimError,
};
use crate::simlab::scene::CANVAS_W;
use crate::visualprompt::{marks_to_value, MarkRole, VisualMark, PROPRIO_DIM};

use super::*;

/// Forced grading used when generating training data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptKind {
    /// Every attempt lands in the verb's best category.
    Success,
    /// The first attempt of each step fails outright, later ones succeed.
    Retry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockConfig {
    pub distributions: OutcomeDistribution,
    pub script: Option<ScriptKind>,
    /// Rows per action chunk.
    pub horizon: usize,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            distributions: OutcomeDistribution::all_success(),
            script: None,
            horizon: 50,
        }
    }
}

/// Ticks the scripted policy needs for one attempt of a verb.
pub fn attempt_ticks(verb: PrimitiveVerb) -> u64 {
    match verb {
        PrimitiveVerb::Grasp => 120,
        PrimitiveVerb::Heat => 200,
        PrimitiveVerb::Dip => 160,
        PrimitiveVerb::Pour => 240,
        PrimitiveVerb::Stir => 200,
        PrimitiveVerb::Transfer => 240,
        PrimitiveVerb::Press => 100,
    }
}

/// Joint targets of the scripted policy at tick `t` of an attempt.
pub fn scripted_action(verb: PrimitiveVerb, t: u64) -> Vec<f64> {
    let v = PrimitiveVerb::ALL.iter().position(|x| *x == verb).unwrap_or(0) as f64;
    (0..PROPRIO_DIM)
        .map(|j| 0.5 * (0.05 * t as f64 + 0.3 * j as f64 + v).sin())
        .collect()
}

struct Attempt {
    verb: PrimitiveVerb,
    index: u32,
    total: u64,
    done: u64,
    outcome: Option<RubricOutcome>,
}

struct Session {
    rng: ChaCha8Rng,
    attempts_per_step: BTreeMap<usize, u32>,
    current: Option<Attempt>,
}

impl Session {
    fn new(exp: &ExperimentRef) -> Self {
        Session {
            rng: substream(exp.seed, Purpose::Policy, exp.trial),
            attempts_per_step: BTreeMap::new(),
            current: None,
        }
    }
}

pub struct MockLab {
    config: MockConfig,
    sessions: Mutex<HashMap<String, Session>>,
}

fn sim_err(e: SimError) -> GatewayError {
    match e {
        SimError::UnknownTask(t) => GatewayError::UnknownTask(t),
        other => GatewayError::BadRequest(other.to_string()),
    }
}

fn parse_step(text: &str) -> Result<PrimitiveTask, GatewayError> {
    parse_primitive(text).map_err(|e| GatewayError::BadRequest(format!("step `{text}`: {e}")))
}

fn need_scene(req: &StepRequest) -> Result<&LabScene, GatewayError> {
    req.scene
        .as_ref()
        .ok_or_else(|| GatewayError::BadRequest("the mock reads the scene; `scene` is required".into()))
}

fn grasp_point(c: &Container) -> VisualMark {
    let p = c.pose;
    VisualMark::point(p.x + p.w / 2, p.y + p.h / 3, MarkRole::GraspPoint)
}

fn outline(c: &Container) -> VisualMark {
    let p = c.pose;
    VisualMark::bbox(p.x, p.y, p.x + p.w - 1, p.y + p.h - 1)
}

/// Marks in full-canvas coordinates for one step.
pub fn marks_for(scene: &LabScene, step: &PrimitiveTask) -> Result<Vec<VisualMark>, SimError> {
    let get = |text: &str| -> Result<&Container, SimError> {
        let id = scene.resolve(text)?;
        Ok(scene.get(&id).expect("resolved id exists"))
    };
    let slot = |i: usize| step.slots[i].text.as_str();
    let marks = match step.verb {
        PrimitiveVerb::Grasp => vec![grasp_point(get(slot(0))?)],
        PrimitiveVerb::Pour | PrimitiveVerb::Transfer => {
            let (src, dst) = (get(slot(1))?, get(slot(2))?);
            vec![outline(src), grasp_point(src), outline(dst), grasp_point(dst)]
        }
        PrimitiveVerb::Dip => {
            let (obj, vessel) = (get(slot(0))?, get(slot(2))?);
            let mut m = vec![grasp_point(obj), outline(vessel)];
            if let Some(y) = liquid_surface_y(vessel) {
                m.push(VisualMark::point(vessel.pose.x + vessel.pose.w / 2, y, MarkRole::TargetPoint));
            }
            m
        }
        PrimitiveVerb::Heat => {
            let mut m = vec![grasp_point(get(slot(0))?)];
            if let Some(lamp) = scene.containers.iter().find(|c| c.kind == ContainerKind::AlcoholLamp) {
                m.push(outline(lamp));
            }
            m
        }
        PrimitiveVerb::Stir => {
            let mut m = vec![outline(get(slot(0))?)];
            if let Some(rod) = scene.containers.iter().find(|c| c.kind == ContainerKind::GlassRod) {
                m.push(grasp_point(rod));
            }
            m
        }
        PrimitiveVerb::Press => vec![],
    };
    Ok(marks)
}

/// Canned safety advice keyed on the verb and the kind of object handled.
pub fn guideline_for(scene: Option<&LabScene>, step: &PrimitiveTask) -> Option<String> {
    let target = step.slots[0].text.to_lowercase();
    let kind = scene
        .and_then(|s| s.resolve(&target).ok().and_then(|id| s.get(&id)).map(|c| c.kind))
        .or_else(|| {
            if target.contains("rod") {
                Some(ContainerKind::GlassRod)
            } else if target.contains("tube") {
                Some(ContainerKind::TestTube)
            } else if target.contains("wire") {
                Some(ContainerKind::PlatinumWire)
            } else {
                None
            }
        });
    let text = match (step.verb, kind) {
        (PrimitiveVerb::Grasp, Some(ContainerKind::GlassRod)) => {
            "Grip the glass rod about 1/3 of its length from the top end so it does not slip or tip over."
        }
        (PrimitiveVerb::Grasp | PrimitiveVerb::Heat, Some(ContainerKind::TestTube)) => {
            "Hold the test tube by its upper body, away from the heated bottom, with the mouth pointing away."
        }
        (PrimitiveVerb::Heat | PrimitiveVerb::Dip, Some(ContainerKind::PlatinumWire)) => {
            "Keep the loop of the wire at the tip and touch nothing else with it."
        }
        (PrimitiveVerb::Pour, _) => "Hold the source vessel firmly and tilt slowly so the liquid lands inside the receiver.",
        (PrimitiveVerb::Transfer, _) => "Move the spatula level and tip it only above the receiving vessel.",
        _ => return None,
    };
    Some(text.to_string())
}

/// The mock monitor's answer: condition steps are judged on their
/// predicate, plain steps on whether the primitive took effect.
pub fn judge(scene: &LabScene, step: &PrimitiveTask) -> Result<bool, SimError> {
    match &step.until {
        Some(cond) => {
            let mut cond = cond.clone();
            cond.predicate = cond.predicate.or_else(|| bind_predicate(&cond.text));
            if cond.subject.is_none() {
                cond.subject = step.slot(SlotRole::DestContainer).map(str::to_string);
            }
            check_condition(scene, &cond)
        }
        None => Ok(primitive_completed(scene, step)),
    }
}

impl MockLab {
    pub fn new(config: MockConfig) -> Self {
        MockLab {
            config,
            sessions: Mutex::new(HashMap::new()),
        }
    }

    pub fn config(&self) -> &MockConfig {
        &self.config
    }

    fn with_session<T>(&self, exp: &ExperimentRef, f: impl FnOnce(&mut Session) -> T) -> T {
        let mut sessions = self.sessions.lock().expect("session table poisoned");
        let s = sessions
            .entry(exp.experiment_id.clone())
            .or_insert_with(|| Session::new(exp));
        f(s)
    }
}

impl Default for MockLab {
    fn default() -> Self {
        MockLab::new(MockConfig::default())
    }
}

impl ModelGateway for MockLab {
    fn plan(&self, req: &PlanRequest) -> Result<PlanResponse, GatewayError> {
        check_menu(&req.primitive_menu)?;
        let f = fixture(&req.exp.task_id).map_err(sim_err)?;
        // a plan request opens a fresh session for this experiment
        self.sessions
            .lock()
            .expect("session table poisoned")
            .insert(req.exp.experiment_id.clone(), Session::new(&req.exp));
        Ok(PlanResponse {
            steps: f.plan.to_string(),
        })
    }

    fn guideline(&self, req: &StepRequest) -> Result<GuidelineResponse, GatewayError> {
        let step = parse_step(&req.step_text)?;
        Ok(GuidelineResponse {
            text: guideline_for(req.scene.as_ref(), &step),
        })
    }

    fn visual_prompt(&self, req: &StepRequest) -> Result<VisualPromptResponse, GatewayError> {
        let scene = need_scene(req)?;
        let step = parse_step(&req.step_text)?;
        let image = RasterImage::from_b64(&req.image_b64).map_err(|e| GatewayError::BadRequest(e.to_string()))?;
        let marks: Vec<VisualMark> = marks_for(scene, &step)
            .map_err(sim_err)?
            .iter()
            .map(|m| m.scaled(image.width() as i64, CANVAS_W as i64))
            .collect();
        Ok(VisualPromptResponse {
            marks: marks_to_value(&marks),
        })
    }

    fn verify(&self, req: &StepRequest) -> Result<VerifyResponse, GatewayError> {
        let scene = need_scene(req)?;
        let step = parse_step(&req.step_text)?;
        let ok = judge(scene, &step).map_err(sim_err)?;
        Ok(VerifyResponse {
            verdict: if ok { "Y" } else { "N" }.to_string(),
        })
    }
}

impl PolicyGateway for MockLab {
    fn policy_reset(&self, req: &PolicyResetRequest) -> Result<PolicyResetResponse, GatewayError> {
        let step = parse_step(&req.step_text)?;
        self.with_session(&req.exp, |s| {
            let n = s.attempts_per_step.entry(req.step_no).or_insert(0);
            s.current = Some(Attempt {
                verb: step.verb,
                index: *n,
                total: attempt_ticks(step.verb),
                done: 0,
                outcome: None,
            });
            *n += 1;
        });
        Ok(PolicyResetResponse {})
    }

    fn policy_step(&self, req: &PolicyStepRequest) -> Result<PolicyStepResponse, GatewayError> {
        let obs = &req.observation;
        if obs.prompt_flag != obs.prompted.is_some() {
            return Err(GatewayError::BadRequest("prompt_flag disagrees with the prompted image".into()));
        }
        let k = fixture(&req.exp.task_id).map_err(sim_err)?.ambiguity_k.max(1);
        let horizon = self.config.horizon.max(1) as u64;
        self.with_session(&req.exp, |s| {
            let a = s
                .current
                .as_mut()
                .ok_or_else(|| GatewayError::BadRequest("policy_step before policy_reset".into()))?;
            if a.outcome.is_none() {
                // without a mark the policy cannot tell look-alike targets apart;
                // one uniform against 1/k keeps fixtures with different k coupled
                let right_target = k == 1 || obs.prompt_flag || s.rng.gen::<f64>() * (k as f64) < 1.0;
                let graded = match self.config.script {
                    Some(ScriptKind::Success) => RubricOutcome::best(a.verb),
                    Some(ScriptKind::Retry) if a.index == 0 => RubricOutcome::worst(a.verb),
                    Some(ScriptKind::Retry) => RubricOutcome::best(a.verb),
                    None => sample_outcome(a.verb, &self.config.distributions, &mut s.rng),
                };
                a.outcome = Some(if right_target { graded } else { RubricOutcome::worst(a.verb) });
            }
            let n = horizon.min(a.total - a.done);
            let actions = (a.done..a.done + n).map(|t| scripted_action(a.verb, t)).collect();
            a.done += n;
            let done = a.done == a.total;
            let outcome = if done { a.outcome.clone() } else { None };
            if done {
                s.current = None;
            }
            Ok(PolicyStepResponse { actions, done, outcome })
        })
    }
}

/// JSON value of a mock marks answer, for callers that bypass the gateway.
pub fn marks_json(scene: &LabScene, step: &PrimitiveTask, image_width: u32) -> Result<Value, SimError> {
    let marks: Vec<VisualMark> = marks_for(scene, step)?
        .iter()
        .map(|m| m.scaled(image_width as i64, CANVAS_W as i64))
        .collect();
    Ok(marks_to_value(&marks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simlab::{init_scene, render_views, Pose};
    use crate::visualprompt::{compose_observation, View};

    fn exp(task: &str) -> ExperimentRef {
        ExperimentRef::new(task, 11, 0)
    }

    fn step_req(task: &str, scene: &LabScene, text: &str) -> StepRequest {
        StepRequest {
            exp: exp(task),
            step_no: 1,
            step_text: text.into(),
            image_b64: render_views(scene, 8)[&View::Front].to_b64(),
            scene: Some(scene.clone()),
            guideline: None,
        }
    }

    #[test]
    fn grasp_point_sits_a_third_down() {
        let mut scene = init_scene("grasp_glass_rod", 0).unwrap();
        scene.get_mut("glass_rod").unwrap().pose = Pose::new(300, 100, 8, 120);
        let marks = marks_for(&scene, &parse_primitive("Grasp glass rod").unwrap()).unwrap();
        assert_eq!(marks, vec![VisualMark::point(304, 140, MarkRole::GraspPoint)]);
    }

    #[test]
    fn press_has_no_marks() {
        let lab = MockLab::default();
        let scene = init_scene("press_button", 0).unwrap();
        let r = lab.visual_prompt(&step_req("press_button", &scene, "Press the button of evaporator")).unwrap();
        assert_eq!(r.marks, serde_json::json!([]));
    }

    #[test]
    fn pour_marks_two_boxes_and_two_points() {
        let lab = MockLab::default();
        let scene = init_scene("pour_liquid", 0).unwrap();
        let req = step_req("pour_liquid", &scene, "Pour water from right beaker into left beaker");
        let marks = visual_prompt(&lab, &req).unwrap();
        let boxes = marks.iter().filter(|m| m.role == MarkRole::Region).count();
        let points = marks.iter().filter(|m| m.role == MarkRole::GraspPoint).count();
        assert_eq!((boxes, points), (2, 2));
        // scaled into the 80x60 frame
        crate::visualprompt::validate_marks(&marks, 80, 60).unwrap();
    }

    #[test]
    fn guidelines() {
        let rod = guideline_for(None, &parse_primitive("Grasp glass rod").unwrap()).unwrap();
        assert!(rod.contains("1/3"));
        let tube = guideline_for(None, &parse_primitive("Heat test tube over a flame").unwrap()).unwrap();
        assert!(tube.contains("upper body"));
        assert_eq!(guideline_for(None, &parse_primitive("Press the button of evaporator").unwrap()), None);
    }

    #[test]
    fn verify_reads_the_scene() {
        let lab = MockLab::default();
        let mut scene = init_scene("acid_base", 0).unwrap();
        let b = scene.get_mut("water_beaker").unwrap();
        *b = b.clone().with(crate::chem::Species::NaOH, crate::chem::Phase::Aqueous, 0.03).with(
            crate::chem::Species::Phenolphthalein,
            crate::chem::Phase::Aqueous,
            0.0005,
        );
        crate::simlab::rules::react(b);
        let text = "Pour hydrochloric acid from graduated cylinder into water beaker until the solution becomes colorless";
        assert!(!verify(&lab, &step_req("acid_base", &scene, text)).unwrap());
        assert!(!verify(&lab, &step_req("acid_base", &scene, "Grasp glass rod")).unwrap());
    }

    #[test]
    fn verdict_parsing() {
        assert!(parse_verdict(" Y\n").unwrap());
        assert!(!parse_verdict("N").unwrap());
        assert_eq!(parse_verdict("maybe"), Err(GatewayError::BadVerdict("maybe".into())));
        assert!(parse_verdict("Yes").is_err());
    }

    #[test]
    fn planner_answers_fixture_plans() {
        let lab = MockLab::default();
        let steps = plan(&lab, &exp("acid_base"), "t", &[]).unwrap();
        assert_eq!(steps.lines().count(), 5);
        assert!(steps.lines().last().unwrap().contains(" until "));
        let mix = plan(&lab, &exp("mix_nacl_cuso4"), "t", &[]).unwrap();
        assert!(mix.starts_with("Pour ") && mix.lines().count() == 1);
        assert!(matches!(plan(&lab, &exp("nope"), "t", &[]), Err(GatewayError::UnknownTask(_))));
        let mut req = PlanRequest {
            exp: exp("acid_base"),
            task: "t".into(),
            apparatus: vec![],
            primitive_menu: menu(),
        };
        req.primitive_menu.pop();
        assert!(matches!(lab.plan(&req), Err(GatewayError::BadRequest(_))));
    }

    fn run_attempt(lab: &MockLab, e: &ExperimentRef, scene: &LabScene, text: &str, prompted: bool) -> (u64, RubricOutcome) {
        let step = parse_primitive(text).unwrap();
        lab.policy_reset(&PolicyResetRequest {
            exp: e.clone(),
            step_no: 1,
            step_text: text.into(),
        })
        .unwrap();
        let views = render_views(scene, 16);
        let prompt = prompted.then(|| {
            let marks = marks_for(scene, &step).unwrap().iter().map(|m| m.scaled(40, 640)).collect();
            crate::visualprompt::PromptedImage::bind(views[&View::Front].clone(), marks).unwrap()
        });
        let obs = compose_observation(&views, &[0.0; 14], &step, prompt, 0, 0).unwrap();
        let mut ticks = 0;
        loop {
            let r = policy_step(
                lab,
                &PolicyStepRequest {
                    exp: e.clone(),
                    instruction: obs.instruction.clone(),
                    observation: obs.clone(),
                },
            )
            .unwrap();
            assert!(r.actions.len() <= 50 && r.actions.iter().all(|a| a.len() == 14));
            ticks += r.actions.len() as u64;
            if r.done {
                return (ticks, r.outcome.unwrap());
            }
        }
    }

    #[test]
    fn chunks_cover_the_attempt() {
        let lab = MockLab::default();
        let scene = init_scene("grasp_glass_rod", 0).unwrap();
        let (ticks, out) = run_attempt(&lab, &exp("grasp_glass_rod"), &scene, "Grasp glass rod", false);
        assert_eq!(ticks, attempt_ticks(PrimitiveVerb::Grasp));
        assert_eq!(out, RubricOutcome::best(PrimitiveVerb::Grasp));
    }

    #[test]
    fn unprompted_selection_is_uniform_over_cups() {
        let lab = MockLab::default();
        let scene = init_scene("cups_ambiguity_3", 0).unwrap();
        let text = "Pour water from cup 1 into cup 2";
        let n = 1500;
        let e = exp("cups_ambiguity_3");
        let hits = (0..n).filter(|_| run_attempt(&lab, &e, &scene, text, false).1.success).count();
        let p = hits as f64 / n as f64;
        let se = (1.0 / 3.0 * 2.0 / 3.0 / n as f64).sqrt();
        assert!((p - 1.0 / 3.0).abs() < 4.0 * se, "{p}");
        assert!((0..50).all(|_| run_attempt(&lab, &e, &scene, text, true).1.success));
    }

    #[test]
    fn retry_script_fails_only_the_first_attempt() {
        let lab = MockLab::new(MockConfig {
            script: Some(ScriptKind::Retry),
            ..MockConfig::default()
        });
        let scene = init_scene("grasp_glass_rod", 0).unwrap();
        let e = exp("grasp_glass_rod");
        assert!(!run_attempt(&lab, &e, &scene, "Grasp glass rod", false).1.success);
        assert!(run_attempt(&lab, &e, &scene, "Grasp glass rod", false).1.success);
    }

    #[test]
    fn policy_step_needs_a_reset() {
        let lab = MockLab::default();
        let scene = init_scene("grasp_glass_rod", 0).unwrap();
        let step = parse_primitive("Grasp glass rod").unwrap();
        let obs = compose_observation(&render_views(&scene, 16), &[0.0; 14], &step, None, 0, 0).unwrap();
        let r = lab.policy_step(&PolicyStepRequest {
            exp: exp("x"),
            instruction: String::new(),
            observation: obs,
        });
        assert!(r.is_err());
    }

    #[test]
    fn chunk_shape_is_checked() {
        let bad = PolicyStepResponse {
            actions: vec![vec![0.0; 13]],
            done: false,
            outcome: None,
        };
        assert!(matches!(check_chunk(&bad), Err(GatewayError::ShapeError(_))));
        let empty = PolicyStepResponse {
            actions: vec![],
            done: false,
            outcome: None,
        };
        assert!(matches!(check_chunk(&empty), Err(GatewayError::ShapeError(_))));
    }
}
