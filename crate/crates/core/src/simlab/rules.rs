//! Discrete effects of primitives on the scene and the chemistry rules that
//! fire after every delivery.

use crate::chem::{ColorTag, Phase, Species};
use crate::grammar::{Condition, Predicate, PrimitiveTask, PrimitiveVerb, SlotRole};

use super::rubric::RubricOutcome;
use super::scene::{Arm, Container, ContainerKind, LabScene, LastAction, EPS};
use super::{SimError, SimParams};

/// Container ids a step acts on, in slot order.
pub fn step_targets(scene: &LabScene, step: &PrimitiveTask) -> Result<Vec<String>, SimError> {
    let texts: Vec<&str> = match step.verb {
        PrimitiveVerb::Grasp | PrimitiveVerb::Heat | PrimitiveVerb::Press | PrimitiveVerb::Stir => {
            vec![&step.slots[0].text]
        }
        PrimitiveVerb::Pour | PrimitiveVerb::Transfer => vec![&step.slots[1].text, &step.slots[2].text],
        PrimitiveVerb::Dip => vec![&step.slots[0].text, &step.slots[2].text],
    };
    texts.into_iter().map(|t| scene.resolve(t)).collect()
}

fn not_applicable(verb: PrimitiveVerb, reason: impl Into<String>) -> SimError {
    SimError::RuleNotApplicable {
        verb,
        reason: reason.into(),
    }
}

/// Records an attempt whose effect could not take place.
pub fn record_attempt(scene: &LabScene, step: &PrimitiveTask, outcome: &RubricOutcome, completed: bool) -> LabScene {
    let mut next = scene.clone();
    next.last_action = Some(LastAction {
        verb: step.verb,
        targets: step_targets(scene, step).unwrap_or_default(),
        category: outcome.category.clone(),
        success: outcome.success,
        completed,
    });
    next
}

/// Applies one attempt's rubric outcome. Failed outcomes leave the physical
/// state untouched except for spills; `last_action` is always updated.
pub fn apply_primitive(
    scene: &LabScene,
    step: &PrimitiveTask,
    outcome: &RubricOutcome,
    params: &SimParams,
) -> Result<LabScene, SimError> {
    if outcome.verb != step.verb {
        return Err(SimError::UnknownCategory {
            verb: step.verb,
            category: outcome.category.clone(),
        });
    }
    outcome.validate()?;
    let targets = step_targets(scene, step)?;
    let mut next = scene.clone();
    let completed = match step.verb {
        PrimitiveVerb::Grasp => grasp(&mut next, &targets[0], outcome),
        PrimitiveVerb::Pour => pour(&mut next, &targets[0], &targets[1], outcome, params)?,
        PrimitiveVerb::Transfer => transfer(&mut next, step, &targets[0], &targets[1], outcome, params)?,
        PrimitiveVerb::Stir => stir(&mut next, &targets[0], outcome)?,
        PrimitiveVerb::Dip => dip(&mut next, &targets[0], &targets[1], outcome)?,
        PrimitiveVerb::Heat => heat(&mut next, &targets[0], outcome)?,
        PrimitiveVerb::Press => press(&mut next, &targets[0], outcome, params)?,
    };
    next.last_action = Some(LastAction {
        verb: step.verb,
        targets,
        category: outcome.category.clone(),
        success: outcome.success,
        completed,
    });
    Ok(next)
}

fn grasp(scene: &mut LabScene, id: &str, outcome: &RubricOutcome) -> bool {
    if !outcome.success {
        return false;
    }
    if scene.arm_holding(id).is_some() {
        return true;
    }
    let arm = if scene.held.contains_key(&Arm::Right) { Arm::Left } else { Arm::Right };
    if scene.held.contains_key(&arm) {
        return false;
    }
    scene.held.insert(arm, id.to_string());
    true
}

fn spill(scene: &mut LabScene, moved: &[(Species, Phase, f64)], fraction: f64) -> Vec<(Species, Phase, f64)> {
    let mut kept = Vec::with_capacity(moved.len());
    for &(sp, ph, amt) in moved {
        let lost = amt * fraction;
        if lost > 0.0 {
            *scene.spilled.entry(sp).or_insert(0.0) += lost;
        }
        kept.push((sp, ph, amt - lost));
    }
    kept
}

fn take_all(c: &mut Container, pred: impl Fn(&super::scene::Substance) -> bool) -> Vec<(Species, Phase, f64)> {
    let (out, keep): (Vec<_>, Vec<_>) = c.contents.drain(..).partition(|s| pred(s));
    c.contents = keep;
    out.into_iter().map(|s| (s.species, s.phase, s.amount)).collect()
}

fn pour(scene: &mut LabScene, src: &str, dst: &str, outcome: &RubricOutcome, params: &SimParams) -> Result<bool, SimError> {
    let spill_fraction = match outcome.category.as_str() {
        "grasp_fail" => return Ok(false),
        "spill_complete" => params.spill_complete,
        "spill_slight" => params.spill_slight,
        _ => 0.0,
    };
    let source = scene.get_mut(src).expect("resolved");
    let moved: Vec<(Species, Phase, f64)> = match source.dose.clone() {
        Some(dose) => {
            let mut m: Vec<_> = source
                .take(dose.species, dose.mol)
                .into_iter()
                .map(|(ph, a)| (dose.species, ph, a))
                .collect();
            m.extend(source.take(Species::H2O, dose.water_ml).into_iter().map(|(ph, a)| (Species::H2O, ph, a)));
            m
        }
        None => take_all(source, |s| s.phase != Phase::Solid),
    };
    let total: f64 = moved.iter().map(|m| m.2).sum();
    if total <= EPS {
        if outcome.success {
            return Err(not_applicable(PrimitiveVerb::Pour, format!("`{src}` holds no liquid")));
        }
        return Ok(false);
    }
    let delivered = spill(scene, &moved, spill_fraction);
    if !outcome.success {
        // whatever did not hit the bench stays in the source
        let source = scene.get_mut(src).expect("resolved");
        for (sp, ph, amt) in delivered {
            source.add(sp, ph, amt);
        }
        source.prune();
        return Ok(false);
    }
    let dest = scene.get_mut(dst).expect("resolved");
    for (sp, ph, amt) in delivered {
        dest.add(sp, ph, amt);
    }
    react(dest);
    Ok(true)
}

fn transfer(
    scene: &mut LabScene,
    step: &PrimitiveTask,
    src: &str,
    dst: &str,
    outcome: &RubricOutcome,
    params: &SimParams,
) -> Result<bool, SimError> {
    if !outcome.success {
        return Ok(false);
    }
    let spill_fraction = match outcome.category.as_str() {
        "spills_out" => params.solid_spill_heavy,
        "slight_spill" => params.spill_slight,
        _ => 0.0,
    };
    let wanted = step.slot(SlotRole::Solid).unwrap_or("").to_lowercase();
    let source = scene.get_mut(src).expect("resolved");
    let named: Vec<Species> = source
        .contents
        .iter()
        .filter(|s| s.phase == Phase::Solid && s.amount > EPS && names_species(&wanted, s.species))
        .map(|s| s.species)
        .collect();
    let moved = take_all(source, |s| s.phase == Phase::Solid && (named.is_empty() || named.contains(&s.species)));
    if moved.iter().map(|m| m.2).sum::<f64>() <= EPS {
        return Err(not_applicable(PrimitiveVerb::Transfer, format!("`{src}` holds no solid")));
    }
    let delivered = spill(scene, &moved, spill_fraction);
    let dest = scene.get_mut(dst).expect("resolved");
    for (sp, ph, amt) in delivered {
        dest.add(sp, ph, amt);
    }
    react(dest);
    Ok(true)
}

/// Whether free text names a species by formula or common name.
pub fn names_species(text: &str, sp: Species) -> bool {
    let t = text.to_lowercase();
    let common: &[&str] = match sp {
        Species::NaOH => &["sodium hydroxide"],
        Species::NaCl => &["sodium chloride", "salt"],
        Species::CuSO4 => &["copper sulfate", "copper sulphate"],
        Species::CuOH2 => &["copper hydroxide", "copper(ii) hydroxide"],
        Species::CaO => &["calcium oxide", "quicklime"],
        Species::MnOH2 => &["manganese hydroxide", "manganese(ii) hydroxide"],
        Species::NaHCO3 => &["sodium bicarbonate", "baking soda"],
        Species::Zn => &["zinc"],
        Species::Fe => &["iron"],
        _ => &[],
    };
    let formula = sp.formula().to_lowercase();
    t.split(|c: char| c.is_whitespace()).any(|w| w == formula) || common.iter().any(|c| t.contains(c))
}

fn stir(scene: &mut LabScene, id: &str, outcome: &RubricOutcome) -> Result<bool, SimError> {
    if !outcome.success {
        return Ok(false);
    }
    let c = scene.get_mut(id).expect("resolved");
    if c.contents.is_empty() {
        return Err(not_applicable(PrimitiveVerb::Stir, format!("`{id}` is empty")));
    }
    c.flags.stirred = true;
    if c.water_ml() > EPS {
        let solids: Vec<(Species, f64)> = c
            .contents
            .iter()
            .filter(|s| s.phase == Phase::Solid && s.species.admits(Phase::Aqueous))
            .map(|s| (s.species, s.amount))
            .collect();
        for (sp, amt) in solids {
            c.contents.retain(|s| !(s.species == sp && s.phase == Phase::Solid));
            c.add(sp, Phase::Aqueous, amt);
        }
        c.flags.dissolved = !c.contents.iter().any(|s| s.phase == Phase::Solid && s.species.admits(Phase::Aqueous));
    }
    react(c);
    Ok(true)
}

fn dip(scene: &mut LabScene, obj: &str, vessel: &str, outcome: &RubricOutcome) -> Result<bool, SimError> {
    if !outcome.success {
        return Ok(false);
    }
    let v = scene.get(vessel).expect("resolved").clone();
    if !v.has_liquid() {
        return Err(not_applicable(PrimitiveVerb::Dip, format!("`{vessel}` holds no liquid")));
    }
    let o = scene.get(obj).expect("resolved").clone();
    let mut o2 = o.clone();
    let mut v2 = v.clone();
    o2.flags.immersed = true;
    if o.kind == ContainerKind::PlatinumWire {
        o2.dipped = v
            .contents
            .iter()
            .filter(|s| s.phase == Phase::Aqueous && s.amount > EPS)
            .map(|s| s.species)
            .find(|sp| sp.ion().is_some());
    } else if o.kind == ContainerKind::MetalWire && o.has(Species::Fe) && v.has(Species::CuSO4) {
        // Fe + CuSO4 -> FeSO4 + Cu, copper plates onto the wire
        let n = o.amount(Species::Fe).min(v.amount(Species::CuSO4));
        o2.take(Species::Fe, n);
        v2.take(Species::CuSO4, n);
        v2.add(Species::FeSO4, Phase::Aqueous, n);
        o2.add(Species::Cu, Phase::Solid, n);
        o2.flags.deposit_color = Some(ColorTag::Red);
    }
    *scene.get_mut(obj).unwrap() = o2;
    *scene.get_mut(vessel).unwrap() = v2;
    Ok(true)
}

fn heat(scene: &mut LabScene, id: &str, outcome: &RubricOutcome) -> Result<bool, SimError> {
    if !outcome.success {
        return Ok(false);
    }
    if !scene.lamp_lit {
        return Err(not_applicable(PrimitiveVerb::Heat, "no lit lamp on the bench"));
    }
    let c = scene.get_mut(id).expect("resolved");
    c.flags.heated = true;
    if c.kind == ContainerKind::PlatinumWire {
        c.flags.flame_color = c.dipped.take().and_then(|sp| sp.ion()).map(|ion| ion.flame_color());
    }
    if c.has(Species::CuOH2) {
        // Cu(OH)2 -> CuO + H2O, steam condenses on the glass
        let n = c.amount(Species::CuOH2);
        c.clear(Species::CuOH2);
        c.add(Species::CuO, Phase::Solid, n);
        c.flags.mist = true;
        c.flags.precipitate_color = Some(ColorTag::Black);
    }
    Ok(true)
}

fn press(scene: &mut LabScene, id: &str, outcome: &RubricOutcome, params: &SimParams) -> Result<bool, SimError> {
    if !outcome.success {
        return Ok(false);
    }
    let c = scene.get_mut(id).expect("resolved");
    if c.kind != ContainerKind::Evaporator {
        return Err(not_applicable(PrimitiveVerb::Press, format!("`{id}` has no button")));
    }
    if outcome.category == "too_forceful" {
        c.pose.x = (c.pose.x + 4).min(super::scene::CANVAS_W as i64 - c.pose.w);
    }
    c.flags.heater_on = true;
    c.flags.heated = true;
    if c.water_ml() > EPS {
        c.take(Species::H2O, params.evaporation_ml);
        c.flags.bubbles = true;
    }
    if c.water_ml() <= EPS {
        c.flags.bubbles = false;
        if c.has(Species::NaCl) {
            let n = c.amount(Species::NaCl);
            c.clear(Species::NaCl);
            c.add(Species::NaCl, Phase::Solid, n);
            c.flags.crystals = true;
        }
    }
    Ok(true)
}

/// Runs every applicable rule on a vessel until nothing changes.
pub fn react(c: &mut Container) {
    for _ in 0..16 {
        if !react_once(c) {
            break;
        }
    }
    if c.has(Species::Phenolphthalein) {
        c.flags.indicator_color = Some(if c.has(Species::NaOH) { ColorTag::Pink } else { ColorTag::Colorless });
    }
    c.prune();
}

/// Consumes `a`/`ka` and `b`/`kb` in stoichiometric ratio; the limiting
/// reagent is set to exactly zero. Returns the extent.
fn consume(c: &mut Container, a: Species, ka: f64, b: Species, kb: f64) -> f64 {
    let (na, nb) = (c.amount(a), c.amount(b));
    let n = (na / ka).min(nb / kb);
    if na / ka <= nb / kb {
        c.clear(a);
        c.take(b, n * kb);
    } else {
        c.clear(b);
        c.take(a, n * ka);
    }
    n
}

fn react_once(c: &mut Container) -> bool {
    let aq = Phase::Aqueous;
    if c.has(Species::NaOH) && c.has(Species::HCl) {
        let n = consume(c, Species::NaOH, 1.0, Species::HCl, 1.0);
        c.add(Species::NaCl, aq, n);
        return true;
    }
    if c.has(Species::NaHCO3) && c.has(Species::HCl) {
        let n = consume(c, Species::NaHCO3, 1.0, Species::HCl, 1.0);
        c.add(Species::NaCl, aq, n);
        c.flags.bubbles = true;
        return true;
    }
    if c.has(Species::Zn) && c.has(Species::HCl) {
        let n = consume(c, Species::Zn, 1.0, Species::HCl, 2.0);
        c.add(Species::ZnCl2, aq, n);
        c.flags.bubbles = true;
        return true;
    }
    if c.has(Species::NaOH) && c.has(Species::CuSO4) && c.water_ml() > EPS {
        let n = consume(c, Species::NaOH, 2.0, Species::CuSO4, 1.0);
        c.add(Species::CuOH2, Phase::Solid, n);
        c.add(Species::Na2SO4, aq, n);
        c.flags.precipitate_color = Some(ColorTag::Blue);
        return true;
    }
    if c.amount_in(Species::CuSO4, aq) > EPS && c.amount_in(Species::NaCl, aq) > EPS {
        let n = consume(c, Species::CuSO4, 1.0, Species::NaCl, 4.0);
        c.add(Species::Na2CuCl4, aq, n);
        c.add(Species::Na2SO4, aq, n);
        return true;
    }
    if c.has(Species::CaO) && c.water_ml() > EPS {
        let n = c.amount(Species::CaO);
        c.clear(Species::CaO);
        c.add(Species::CaOH2, Phase::Solid, n);
        c.flags.milky = true;
        return true;
    }
    if c.has(Species::H2O2) && c.has(Species::MnOH2) {
        // catalytic: peroxide gone, oxygen bubbles off
        c.clear(Species::H2O2);
        c.flags.bubbles = true;
        return true;
    }
    false
}

fn predicate_holds(c: &Container, p: Predicate) -> bool {
    match p {
        Predicate::Colorless => c.has_liquid() && c.liquid_color() == ColorTag::Colorless,
        Predicate::Pink => c.flags.indicator_color == Some(ColorTag::Pink),
        Predicate::Bubbles => c.flags.bubbles,
        Predicate::Crystals => c.flags.crystals,
        Predicate::Mist => c.flags.mist,
        Predicate::FlameColor(f) => c.flags.flame_color == Some(f),
        Predicate::Dissolved => c.flags.dissolved,
    }
}

/// Evaluates a bound condition on its subject container, or on any
/// container when the condition names none.
pub fn check_condition(scene: &LabScene, cond: &Condition) -> Result<bool, SimError> {
    let p = cond.predicate.ok_or_else(|| SimError::UnboundPredicate(cond.text.clone()))?;
    match &cond.subject {
        Some(s) => {
            let id = scene.resolve(s)?;
            Ok(predicate_holds(scene.get(&id).unwrap(), p))
        }
        None => Ok(scene.containers.iter().any(|c| predicate_holds(c, p))),
    }
}

/// Scene-level completion check used by the mock monitor for plain steps.
pub fn primitive_completed(scene: &LabScene, step: &PrimitiveTask) -> bool {
    let Ok(targets) = step_targets(scene, step) else {
        return false;
    };
    let Some(last) = &scene.last_action else {
        return false;
    };
    if last.verb != step.verb || last.targets != targets || !last.completed {
        return false;
    }
    let c = scene.get(&targets[0]).unwrap();
    match step.verb {
        PrimitiveVerb::Grasp => scene.arm_holding(&targets[0]).is_some(),
        PrimitiveVerb::Pour | PrimitiveVerb::Transfer => true,
        PrimitiveVerb::Stir => c.flags.stirred,
        PrimitiveVerb::Dip => c.flags.immersed,
        PrimitiveVerb::Heat => c.flags.heated,
        PrimitiveVerb::Press => c.flags.heater_on,
    }
}
