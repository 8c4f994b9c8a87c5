//! The primitive-action plan language: a closed menu of seven fixed-phrase
//! templates. Slot boundaries are recovered by anchoring on the literal
//! connective words of each template.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::chem::FlameColor;

/// The planner menu, in the order it is presented.
pub const PRIMITIVE_MENU: [&str; 7] = [
    "Grasp [rod-like object]",
    "Pour [liquid] from [container] into [container] until [condition]",
    "Stir [mixture]",
    "Transfer [solid] from [container] to [container]",
    "Dip [object] into the [solution] in [container]",
    "Heat [object] over a flame",
    "Press the button of [object]",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PrimitiveVerb {
    Grasp,
    Pour,
    Stir,
    Transfer,
    Dip,
    Heat,
    Press,
}

impl PrimitiveVerb {
    pub const ALL: [PrimitiveVerb; 7] = [
        PrimitiveVerb::Grasp,
        PrimitiveVerb::Pour,
        PrimitiveVerb::Stir,
        PrimitiveVerb::Transfer,
        PrimitiveVerb::Dip,
        PrimitiveVerb::Heat,
        PrimitiveVerb::Press,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveVerb::Grasp => "Grasp",
            PrimitiveVerb::Pour => "Pour",
            PrimitiveVerb::Stir => "Stir",
            PrimitiveVerb::Transfer => "Transfer",
            PrimitiveVerb::Dip => "Dip",
            PrimitiveVerb::Heat => "Heat",
            PrimitiveVerb::Press => "Press",
        }
    }

    pub fn from_word(word: &str) -> Option<PrimitiveVerb> {
        PrimitiveVerb::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(word))
    }

    pub fn roles(self) -> &'static [SlotRole] {
        use SlotRole::*;
        match self {
            PrimitiveVerb::Grasp | PrimitiveVerb::Heat | PrimitiveVerb::Press => &[Object],
            PrimitiveVerb::Stir => &[Mixture],
            PrimitiveVerb::Pour => &[Liquid, SourceContainer, DestContainer],
            PrimitiveVerb::Transfer => &[Solid, SourceContainer, DestContainer],
            PrimitiveVerb::Dip => &[Object, Solution, Container],
        }
    }

    pub fn arity(self) -> usize {
        self.roles().len()
    }

    pub fn allows_until(self) -> bool {
        self == PrimitiveVerb::Pour
    }
}

impl fmt::Display for PrimitiveVerb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotRole {
    Object,
    Liquid,
    Solid,
    Solution,
    Mixture,
    SourceContainer,
    DestContainer,
    Container,
}

impl SlotRole {
    /// Roles that name a physical item rather than a substance.
    pub fn is_apparatus(self) -> bool {
        matches!(
            self,
            SlotRole::Object | SlotRole::SourceContainer | SlotRole::DestContainer | SlotRole::Container
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub role: SlotRole,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Colorless,
    Pink,
    Bubbles,
    Crystals,
    Mist,
    FlameColor(FlameColor),
    Dissolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Condition {
    pub text: String,
    pub predicate: Option<Predicate>,
    /// Slot text naming the container the predicate is evaluated on.
    pub subject: Option<String>,
}

impl Condition {
    pub fn new(text: impl Into<String>) -> Self {
        Condition {
            text: text.into(),
            predicate: None,
            subject: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimitiveTask {
    pub verb: PrimitiveVerb,
    pub slots: Vec<Slot>,
    pub until: Option<Condition>,
    pub raw_text: String,
}

impl PrimitiveTask {
    pub fn new(verb: PrimitiveVerb, texts: &[&str]) -> Self {
        let slots = verb
            .roles()
            .iter()
            .zip(texts)
            .map(|(role, t)| Slot {
                role: *role,
                text: t.to_string(),
            })
            .collect();
        let mut task = PrimitiveTask {
            verb,
            slots,
            until: None,
            raw_text: String::new(),
        };
        task.raw_text = format_primitive(&task);
        task
    }

    pub fn with_until(mut self, text: &str) -> Self {
        self.until = Some(Condition::new(text));
        self.raw_text = format_primitive(&self);
        self
    }

    /// Equality on verb, slots and condition text; ignores raw text and
    /// anything bound during validation.
    pub fn structurally_eq(&self, other: &PrimitiveTask) -> bool {
        self.verb == other.verb
            && self.slots == other.slots
            && self.until.as_ref().map(|c| &c.text) == other.until.as_ref().map(|c| &c.text)
    }

    pub fn slot(&self, role: SlotRole) -> Option<&str> {
        self.slots.iter().find(|s| s.role == role).map(|s| s.text.as_str())
    }

    /// The slot the acting arm physically goes for first.
    pub fn primary_target(&self) -> &str {
        match self.verb {
            PrimitiveVerb::Pour | PrimitiveVerb::Transfer => &self.slots[1].text,
            PrimitiveVerb::Dip => &self.slots[2].text,
            _ => &self.slots[0].text,
        }
    }

    pub fn canonical_json(&self) -> Value {
        json!({
            "verb": self.verb.name(),
            "slots": self.slots.iter().map(|s| json!({"role": s.role, "text": s.text})).collect::<Vec<_>>(),
            "until": self.until.as_ref().map(|c| c.text.clone()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<PrimitiveTask>,
    pub source_text: String,
}

impl Plan {
    pub fn canonical_json(&self) -> Value {
        json!({ "steps": self.steps.iter().map(PrimitiveTask::canonical_json).collect::<Vec<_>>() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseError {
    #[error("empty line")]
    EmptyLine,
    #[error("unknown verb `{word}`")]
    UnknownVerb { word: String },
    #[error("{verb} takes {} slot(s), found {found}", verb.arity())]
    ArityMismatch { verb: PrimitiveVerb, found: usize },
    #[error("`until` is not allowed on {verb}")]
    DanglingUntil { verb: PrimitiveVerb },
    #[error("`until` without a condition")]
    EmptyCondition,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    pub line: usize,
    pub error: ParseError,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanError {
    #[error("plan contains no steps")]
    NoSteps,
    #[error("plan failed to parse: {}", describe(.errors))]
    PlanParseFailure { errors: Vec<LineError> },
}

fn describe(errors: &[LineError]) -> String {
    errors
        .iter()
        .map(|e| format!("line {}: {}", e.line, e.error))
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub step: usize,
    pub role: SlotRole,
    pub text: String,
    pub message: String,
}

fn is_word(tok: &str, w: &str) -> bool {
    tok.eq_ignore_ascii_case(w)
}

fn join(tokens: &[&str]) -> String {
    tokens.join(" ")
}

fn position(tokens: &[&str], w: &str) -> Option<usize> {
    tokens.iter().position(|t| is_word(t, w))
}

fn rposition(tokens: &[&str], w: &str) -> Option<usize> {
    tokens.iter().rposition(|t| is_word(t, w))
}

fn contains_any(tokens: &[&str], words: &[&str]) -> bool {
    tokens.iter().any(|t| words.iter().any(|w| is_word(t, w)))
}

/// Number of non-empty segments left after cutting at any of `words`.
fn segment_count(tokens: &[&str], words: &[&str]) -> usize {
    let mut count = 0;
    let mut open = false;
    for t in tokens {
        if words.iter().any(|w| is_word(t, w)) {
            open = false;
        } else if !open {
            open = true;
            count += 1;
        }
    }
    count
}

fn strip_prefix<'a, 'b>(tokens: &'a [&'b str], prefix: &[&str]) -> &'a [&'b str] {
    if tokens.len() >= prefix.len() && tokens.iter().zip(prefix).all(|(t, p)| is_word(t, p)) {
        &tokens[prefix.len()..]
    } else {
        tokens
    }
}

fn strip_suffix<'a, 'b>(tokens: &'a [&'b str], suffix: &[&str]) -> &'a [&'b str] {
    if tokens.len() >= suffix.len()
        && tokens[tokens.len() - suffix.len()..]
            .iter()
            .zip(suffix)
            .all(|(t, p)| is_word(t, p))
    {
        &tokens[..tokens.len() - suffix.len()]
    } else {
        tokens
    }
}

fn single_slot(verb: PrimitiveVerb, body: &[&str]) -> Result<Vec<String>, ParseError> {
    let body = match verb {
        PrimitiveVerb::Heat => strip_suffix(body, &["over", "a", "flame"]),
        PrimitiveVerb::Press => strip_prefix(body, &["the", "button", "of"]),
        _ => body,
    };
    let cuts = ["from", "into"];
    if body.is_empty() || contains_any(body, &cuts) {
        return Err(ParseError::ArityMismatch {
            verb,
            found: segment_count(body, &cuts),
        });
    }
    Ok(vec![join(body)])
}

/// `A from B <conn> C` with the first `from` and the last `conn`.
fn three_slot(verb: PrimitiveVerb, body: &[&str], conn: &str, forbidden: &[&str]) -> Result<Vec<String>, ParseError> {
    let mismatch = || ParseError::ArityMismatch {
        verb,
        found: segment_count(body, forbidden),
    };
    let from = position(body, "from").ok_or_else(mismatch)?;
    let to = rposition(body, conn).filter(|&i| i > from).ok_or_else(mismatch)?;
    let (a, b, c) = (&body[..from], &body[from + 1..to], &body[to + 1..]);
    if [a, b, c].iter().any(|s| s.is_empty() || contains_any(s, forbidden)) {
        return Err(mismatch());
    }
    Ok(vec![join(a), join(b), join(c)])
}

/// `A into [the] B in C` with the first `into` and the last `in`.
fn dip_slots(body: &[&str]) -> Result<Vec<String>, ParseError> {
    let forbidden = ["from", "into", "in"];
    let mismatch = || ParseError::ArityMismatch {
        verb: PrimitiveVerb::Dip,
        found: segment_count(body, &forbidden),
    };
    let into = position(body, "into").ok_or_else(mismatch)?;
    let inn = rposition(body, "in").filter(|&i| i > into).ok_or_else(mismatch)?;
    let a = &body[..into];
    let b = strip_prefix(&body[into + 1..inn], &["the"]);
    let c = &body[inn + 1..];
    if [a, b, c].iter().any(|s| s.is_empty() || contains_any(s, &forbidden)) {
        return Err(mismatch());
    }
    Ok(vec![join(a), join(b), join(c)])
}

/// Parses one plan line (list markers already removed).
pub fn parse_primitive(line: &str) -> Result<PrimitiveTask, ParseError> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    let Some((first, rest)) = tokens.split_first() else {
        return Err(ParseError::EmptyLine);
    };
    let verb = PrimitiveVerb::from_word(first).ok_or_else(|| ParseError::UnknownVerb {
        word: first.to_string(),
    })?;

    let (body, until) = match rposition(rest, "until") {
        Some(i) => {
            if !verb.allows_until() {
                return Err(ParseError::DanglingUntil { verb });
            }
            let cond = &rest[i + 1..];
            if cond.is_empty() {
                return Err(ParseError::EmptyCondition);
            }
            (&rest[..i], Some(Condition::new(join(cond))))
        }
        None => (rest, None),
    };

    let texts = match verb {
        PrimitiveVerb::Grasp | PrimitiveVerb::Stir | PrimitiveVerb::Heat | PrimitiveVerb::Press => {
            single_slot(verb, body)?
        }
        PrimitiveVerb::Pour => three_slot(verb, body, "into", &["from", "into"])?,
        PrimitiveVerb::Transfer => three_slot(verb, body, "to", &["from", "into", "to"])?,
        PrimitiveVerb::Dip => dip_slots(body)?,
    };

    let slots = verb
        .roles()
        .iter()
        .zip(texts)
        .map(|(role, text)| Slot { role: *role, text })
        .collect();
    Ok(PrimitiveTask {
        verb,
        slots,
        until,
        raw_text: line.trim().to_string(),
    })
}

/// Canonical template rendering of a task.
pub fn format_primitive(task: &PrimitiveTask) -> String {
    let s = |i: usize| task.slots.get(i).map(|s| s.text.as_str()).unwrap_or("");
    let mut out = match task.verb {
        PrimitiveVerb::Grasp => format!("Grasp {}", s(0)),
        PrimitiveVerb::Pour => format!("Pour {} from {} into {}", s(0), s(1), s(2)),
        PrimitiveVerb::Stir => format!("Stir {}", s(0)),
        PrimitiveVerb::Transfer => format!("Transfer {} from {} to {}", s(0), s(1), s(2)),
        PrimitiveVerb::Dip => format!("Dip {} into the {} in {}", s(0), s(1), s(2)),
        PrimitiveVerb::Heat => format!("Heat {} over a flame", s(0)),
        PrimitiveVerb::Press => format!("Press the button of {}", s(0)),
    };
    if let Some(c) = &task.until {
        out.push_str(" until ");
        out.push_str(&c.text);
    }
    out
}

fn strip_marker(line: &str) -> &str {
    let t = line.trim();
    for bullet in ["-", "*", "•"] {
        if let Some(rest) = t.strip_prefix(bullet) {
            return rest.trim();
        }
    }
    let digits = t.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return r.trim();
        }
    }
    t
}

/// Parses a planner response. Blank lines are skipped; errors carry
/// 1-based physical line numbers.
pub fn parse_plan(block: &str) -> Result<Plan, PlanError> {
    let mut steps = Vec::new();
    let mut errors = Vec::new();
    for (i, raw) in block.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        match parse_primitive(strip_marker(raw)) {
            Ok(step) => steps.push(step),
            Err(error) => errors.push(LineError { line: i + 1, error }),
        }
    }
    if !errors.is_empty() {
        return Err(PlanError::PlanParseFailure { errors });
    }
    if steps.is_empty() {
        return Err(PlanError::NoSteps);
    }
    Ok(Plan {
        steps,
        source_text: block.to_string(),
    })
}

/// Lower-cased alphanumeric words, articles dropped.
fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .filter(|w| !matches!(w.as_str(), "a" | "an" | "the"))
        .collect()
}

/// Loose match between a slot text and an inventory description.
pub fn names_item(slot: &str, item: &str) -> bool {
    let s = slot.to_lowercase();
    let i = item.to_lowercase();
    if s.is_empty() {
        return false;
    }
    if i.contains(&s) || s.contains(i.trim_end_matches('.')) {
        return true;
    }
    let item_words = words(item);
    let slot_words = words(slot);
    !slot_words.is_empty() && slot_words.iter().all(|w| item_words.contains(w))
}

/// Maps a condition phrasing onto a structured predicate. Earlier rows win,
/// so "the pink color disappears ... colorless" binds to colorless.
pub fn bind_predicate(text: &str) -> Option<Predicate> {
    let t = text.to_lowercase();
    if t.contains("colorless") || t.contains("colourless") {
        return Some(Predicate::Colorless);
    }
    if t.contains("flame") {
        let norm = t.replace(' ', "-");
        let mut colors = FlameColor::ALL;
        colors.sort_by_key(|c| std::cmp::Reverse(c.name().len()));
        if let Some(c) = colors.into_iter().find(|c| norm.contains(c.name())) {
            return Some(Predicate::FlameColor(c));
        }
    }
    if t.contains("crystal") {
        return Some(Predicate::Crystals);
    }
    if t.contains("mist") {
        return Some(Predicate::Mist);
    }
    if t.contains("bubble") || t.contains("gas") {
        return Some(Predicate::Bubbles);
    }
    if t.contains("dissolve") {
        return Some(Predicate::Dissolved);
    }
    if t.contains("pink") {
        return Some(Predicate::Pink);
    }
    None
}

/// Checks apparatus slots against the inventory and binds until-predicates.
pub fn validate_plan(plan: &mut Plan, inventory: &[String]) -> Vec<Warning> {
    let mut warnings = Vec::new();
    for (idx, step) in plan.steps.iter_mut().enumerate() {
        for slot in &step.slots {
            if slot.role.is_apparatus() && !inventory.iter().any(|item| names_item(&slot.text, item)) {
                warnings.push(Warning {
                    step: idx + 1,
                    role: slot.role,
                    text: slot.text.clone(),
                    message: format!("`{}` is not in the apparatus list", slot.text),
                });
            }
        }
        let subject = step.slot(SlotRole::DestContainer).map(str::to_string);
        if let Some(cond) = step.until.as_mut() {
            cond.predicate = bind_predicate(&cond.text);
            cond.subject = subject;
            if cond.predicate.is_none() {
                warnings.push(Warning {
                    step: idx + 1,
                    role: SlotRole::DestContainer,
                    text: cond.text.clone(),
                    message: format!("no known predicate for condition `{}`", cond.text),
                });
            }
        }
    }
    warnings
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn texts(t: &PrimitiveTask) -> Vec<&str> {
        t.slots.iter().map(|s| s.text.as_str()).collect()
    }

    #[test]
    fn grasp_rod() {
        let t = parse_primitive("Grasp glass rod").unwrap();
        assert_eq!(t.verb, PrimitiveVerb::Grasp);
        assert_eq!(t.slots, vec![Slot { role: SlotRole::Object, text: "glass rod".into() }]);
        assert_eq!(format_primitive(&t), "Grasp glass rod");
    }

    #[test]
    fn pour_with_until() {
        let line = "Pour hydrochloric acid from graduated cylinder into beaker until the solution becomes colorless";
        let t = parse_primitive(line).unwrap();
        assert_eq!(texts(&t), ["hydrochloric acid", "graduated cylinder", "beaker"]);
        assert_eq!(t.until.as_ref().unwrap().text, "the solution becomes colorless");
        assert_eq!(format_primitive(&t), line);
    }

    #[test]
    fn error_cases() {
        assert_eq!(parse_primitive(""), Err(ParseError::EmptyLine));
        assert_eq!(parse_primitive("   "), Err(ParseError::EmptyLine));
        assert_eq!(
            parse_primitive("Shake the beaker"),
            Err(ParseError::UnknownVerb { word: "Shake".into() })
        );
        assert_eq!(
            parse_primitive("Grasp rod until done"),
            Err(ParseError::DanglingUntil { verb: PrimitiveVerb::Grasp })
        );
        assert_eq!(parse_primitive("Pour a from b into c until"), Err(ParseError::EmptyCondition));
        assert_eq!(
            parse_primitive("Dip wire into solution"),
            Err(ParseError::ArityMismatch { verb: PrimitiveVerb::Dip, found: 2 })
        );
        assert_eq!(
            parse_primitive("Grasp"),
            Err(ParseError::ArityMismatch { verb: PrimitiveVerb::Grasp, found: 0 })
        );
        assert_eq!(
            parse_primitive("Stir mixture from beaker"),
            Err(ParseError::ArityMismatch { verb: PrimitiveVerb::Stir, found: 2 })
        );
    }

    #[test]
    fn case_insensitive_verbs_and_optional_phrases() {
        let t = parse_primitive("HEAT platinum wire").unwrap();
        assert_eq!(texts(&t), ["platinum wire"]);
        let t = parse_primitive("heat platinum wire OVER A FLAME").unwrap();
        assert_eq!(texts(&t), ["platinum wire"]);
        let t = parse_primitive("press evaporator").unwrap();
        assert_eq!(format_primitive(&t), "Press the button of evaporator");
        let t = parse_primitive("Press the button of evaporator").unwrap();
        assert_eq!(texts(&t), ["evaporator"]);
    }

    #[test]
    fn dip_three_slots() {
        let t = parse_primitive("Dip platinum wire into the copper sulfate solution in test tube").unwrap();
        assert_eq!(texts(&t), ["platinum wire", "copper sulfate solution", "test tube"]);
        let t = parse_primitive("Dip wire into CuSO4 in tube").unwrap();
        assert_eq!(texts(&t), ["wire", "CuSO4", "tube"]);
    }

    #[test]
    fn transfer_uses_to() {
        let t = parse_primitive("Transfer NaOH solid from NaOH beaker to water beaker").unwrap();
        assert_eq!(texts(&t), ["NaOH solid", "NaOH beaker", "water beaker"]);
        assert!(matches!(
            parse_primitive("Transfer NaOH solid from NaOH beaker into water beaker"),
            Err(ParseError::ArityMismatch { .. })
        ));
    }

    #[test]
    fn unicode_passes_through() {
        let t = parse_primitive("Grasp Ständer für Glasstab").unwrap();
        assert_eq!(texts(&t), ["Ständer für Glasstab"]);
    }

    #[test]
    fn plan_markers_and_blank_lines() {
        let plan = parse_plan("- Grasp glass rod\n\n- Stir mixture").unwrap();
        assert_eq!(plan.steps.len(), 2);
        let plan = parse_plan("1. Grasp glass rod\n2) Stir mixture\n* Heat wire\n• Press evaporator").unwrap();
        assert_eq!(plan.steps.len(), 4);
        assert_eq!(
            parse_plan("1) Fly away"),
            Err(PlanError::PlanParseFailure {
                errors: vec![LineError { line: 1, error: ParseError::UnknownVerb { word: "Fly".into() } }]
            })
        );
        assert_eq!(parse_plan("\n  \n"), Err(PlanError::NoSteps));
        let err = parse_plan("Grasp rod\n\nFly\nStir").unwrap_err();
        let PlanError::PlanParseFailure { errors } = err else { panic!() };
        assert_eq!(errors.iter().map(|e| e.line).collect::<Vec<_>>(), [3, 4]);
    }

    #[test]
    fn canonical_json_shape() {
        let plan = parse_plan("Pour a from b into c until it is colorless").unwrap();
        let v = plan.canonical_json();
        assert_eq!(
            serde_json::to_string(&v).unwrap(),
            r#"{"steps":[{"slots":[{"role":"liquid","text":"a"},{"role":"source_container","text":"b"},{"role":"dest_container","text":"c"}],"until":"it is colorless","verb":"Pour"}]}"#
        );
    }

    #[test]
    fn validation_warnings_and_binding() {
        let inventory: Vec<String> = [
            "A beaker with NaOH solid.",
            "A beaker with water and a glass rod.",
            "A beaker with phenolphthalein indicator.",
            "A graduated cylinder containing hydrochloric acid (HCl).",
            "A glass rod in a test tube rack.",
            "Platinum wire",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let mut plan = parse_plan("Grasp platinum wire").unwrap();
        assert!(validate_plan(&mut plan, &inventory).is_empty());
        let mut plan = parse_plan("Grasp centrifuge").unwrap();
        assert_eq!(validate_plan(&mut plan, &inventory).len(), 1);
        let mut plan =
            parse_plan("Pour hydrochloric acid from graduated cylinder into water beaker until the solution becomes colorless")
                .unwrap();
        assert!(validate_plan(&mut plan, &inventory).is_empty());
        let c = plan.steps[0].until.as_ref().unwrap();
        assert_eq!(c.predicate, Some(Predicate::Colorless));
        assert_eq!(c.subject.as_deref(), Some("water beaker"));
    }

    #[test]
    fn phrase_table() {
        assert_eq!(
            bind_predicate("the pink color disappears and the solution becomes colorless"),
            Some(Predicate::Colorless)
        );
        assert_eq!(bind_predicate("the solution turns pink"), Some(Predicate::Pink));
        assert_eq!(bind_predicate("bubbles appear"), Some(Predicate::Bubbles));
        assert_eq!(bind_predicate("white crystals remain"), Some(Predicate::Crystals));
        assert_eq!(bind_predicate("mist forms on the inner wall"), Some(Predicate::Mist));
        assert_eq!(bind_predicate("the solid is fully dissolved"), Some(Predicate::Dissolved));
        assert_eq!(
            bind_predicate("the flame turns yellow green"),
            Some(Predicate::FlameColor(FlameColor::YellowGreen))
        );
        assert_eq!(
            bind_predicate("the flame turns yellow"),
            Some(Predicate::FlameColor(FlameColor::Yellow))
        );
        assert_eq!(bind_predicate("it looks nice"), None);
    }

    const POOL: &[&str] = &[
        "glass", "rod", "beaker", "water", "NaOH", "solid", "test", "tube", "copper", "sulfate", "platinum",
        "wire", "evaporator", "cylinder", "acid", "Ständer", "left", "small", "2", "solution",
    ];

    fn slot_text() -> impl Strategy<Value = String> {
        prop::collection::vec(prop::sample::select(POOL), 1..4).prop_map(|w| w.join(" "))
    }

    fn task() -> impl Strategy<Value = PrimitiveTask> {
        (
            prop::sample::select(PrimitiveVerb::ALL.to_vec()),
            prop::collection::vec(slot_text(), 3),
            prop::option::of(slot_text()),
        )
            .prop_map(|(verb, texts, until)| {
                let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
                let t = PrimitiveTask::new(verb, &refs[..verb.arity()]);
                match until {
                    Some(u) if verb.allows_until() => t.with_until(&u),
                    _ => t,
                }
            })
    }

    proptest! {
        #[test]
        fn format_parse_round_trip(t in task()) {
            let line = format_primitive(&t);
            let back = parse_primitive(&line).unwrap();
            prop_assert!(back.structurally_eq(&t), "{line}");
            prop_assert_eq!(back.slots.len(), back.verb.arity());
        }

        #[test]
        fn wrong_slot_counts_are_arity_errors(
            verb in prop::sample::select(PrimitiveVerb::ALL.to_vec()),
            n in 0usize..6,
            texts in prop::collection::vec(slot_text(), 6),
        ) {
            prop_assume!(n != verb.arity());
            // slots glued with this verb's own connectives
            let conns: &[&str] = match verb {
                PrimitiveVerb::Pour => &["from", "into", "into", "into", "into"],
                PrimitiveVerb::Transfer => &["from", "to", "to", "to", "to"],
                PrimitiveVerb::Dip => &["into the", "in", "in", "in", "in"],
                _ => &["from", "into", "from", "into", "from"],
            };
            let mut line = verb.name().to_string();
            for i in 0..n {
                if i > 0 {
                    line.push(' ');
                    line.push_str(conns[i - 1]);
                }
                line.push(' ');
                line.push_str(&texts[i]);
            }
            let r = parse_primitive(&line);
            prop_assert!(matches!(r, Err(ParseError::ArityMismatch { verb: v, .. }) if v == verb), "{line}: {r:?}");
        }

        #[test]
        fn parsed_verbs_stay_in_menu(block in "[A-Za-z \n.)-]{0,80}") {
            if let Ok(plan) = parse_plan(&block) {
                for s in &plan.steps {
                    prop_assert!(PrimitiveVerb::ALL.contains(&s.verb));
                    prop_assert_eq!(s.slots.len(), s.verb.arity());
                }
            }
        }
    }
}
