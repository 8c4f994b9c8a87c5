//! Per-verb rubric categories, outcome distributions and sampling.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::grammar::PrimitiveVerb;

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Category {
    pub id: &'static str,
    pub score: f64,
    pub success: bool,
}

const fn cat(id: &'static str, score: f64, success: bool) -> Category {
    Category { id, score, success }
}

const GRASP: [Category; 3] = [
    cat("grasp_fail", 0.0, false),
    cat("wrong_position", 0.5, true),
    cat("correct_grasp", 1.0, true),
];
const HEAT: [Category; 5] = [
    cat("no_heat", 0.0, false),
    cat("wrong_location_no_return", 0.25, true),
    cat("wrong_location_returns", 0.5, true),
    cat("correct_location_no_return", 0.75, true),
    cat("correct_location_returns", 1.0, true),
];
const DIP: [Category; 3] = [
    cat("not_reached", 0.0, false),
    cat("reached_not_inserted", 0.5, false),
    cat("inserted", 1.0, true),
];
const POUR: [Category; 4] = [
    cat("grasp_fail", 0.0, false),
    cat("spill_complete", 0.25, false),
    cat("spill_slight", 0.75, true),
    cat("controlled_pour", 1.0, true),
];
const STIR: [Category; 3] = [
    cat("no_contact", 0.0, false),
    cat("uneven_wall_contact", 0.5, true),
    cat("uniform_stir", 1.0, true),
];
const TRANSFER: [Category; 4] = [
    cat("no_transfer", 0.0, false),
    cat("spills_out", 0.25, true),
    cat("slight_spill", 0.75, true),
    cat("clean_transfer", 1.0, true),
];
const PRESS: [Category; 4] = [
    cat("no_press", 0.0, false),
    cat("not_activated", 0.25, false),
    cat("too_forceful", 0.5, true),
    cat("correct_press", 1.0, true),
];

/// Rubric categories of a verb in table order (ascending score).
pub fn categories(verb: PrimitiveVerb) -> &'static [Category] {
    match verb {
        PrimitiveVerb::Grasp => &GRASP,
        PrimitiveVerb::Heat => &HEAT,
        PrimitiveVerb::Dip => &DIP,
        PrimitiveVerb::Pour => &POUR,
        PrimitiveVerb::Stir => &STIR,
        PrimitiveVerb::Transfer => &TRANSFER,
        PrimitiveVerb::Press => &PRESS,
    }
}

pub const VALID_SCORES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubricOutcome {
    pub verb: PrimitiveVerb,
    pub category: String,
    pub score: f64,
    pub success: bool,
}

impl RubricOutcome {
    pub fn new(verb: PrimitiveVerb, category: &str) -> Result<Self, SimError> {
        categories(verb)
            .iter()
            .find(|c| c.id == category)
            .map(|c| RubricOutcome::from_category(verb, c))
            .ok_or_else(|| SimError::UnknownCategory {
                verb,
                category: category.to_string(),
            })
    }

    pub fn from_category(verb: PrimitiveVerb, c: &Category) -> Self {
        RubricOutcome {
            verb,
            category: c.id.to_string(),
            score: c.score,
            success: c.success,
        }
    }

    /// Best category of the verb.
    pub fn best(verb: PrimitiveVerb) -> Self {
        let cats = categories(verb);
        RubricOutcome::from_category(verb, &cats[cats.len() - 1])
    }

    /// Score-0 category of the verb.
    pub fn worst(verb: PrimitiveVerb) -> Self {
        RubricOutcome::from_category(verb, &categories(verb)[0])
    }

    /// Checks the (verb, category, score, success) tuple against the table.
    pub fn validate(&self) -> Result<(), SimError> {
        let expected = RubricOutcome::new(self.verb, &self.category)?;
        if expected != *self {
            return Err(SimError::UnknownCategory {
                verb: self.verb,
                category: self.category.clone(),
            });
        }
        Ok(())
    }
}

/// Categorical probabilities per verb, in table order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<PrimitiveVerb, Vec<f64>>", into = "BTreeMap<PrimitiveVerb, Vec<f64>>")]
pub struct OutcomeDistribution {
    probs: BTreeMap<PrimitiveVerb, Vec<f64>>,
}

impl From<OutcomeDistribution> for BTreeMap<PrimitiveVerb, Vec<f64>> {
    fn from(d: OutcomeDistribution) -> Self {
        d.probs
    }
}

impl TryFrom<BTreeMap<PrimitiveVerb, Vec<f64>>> for OutcomeDistribution {
    type Error = SimError;

    fn try_from(probs: BTreeMap<PrimitiveVerb, Vec<f64>>) -> Result<Self, SimError> {
        OutcomeDistribution::new(probs)
    }
}

fn check_row(verb: PrimitiveVerb, p: &[f64]) -> Result<(), SimError> {
    let bad = |m: String| SimError::InvalidDistribution(format!("{verb}: {m}"));
    if p.len() != categories(verb).len() {
        return Err(bad(format!("{} probabilities for {} categories", p.len(), categories(verb).len())));
    }
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(bad("negative or non-finite probability".into()));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(bad(format!("probabilities sum to {sum}")));
    }
    Ok(())
}

impl OutcomeDistribution {
    pub fn new(probs: BTreeMap<PrimitiveVerb, Vec<f64>>) -> Result<Self, SimError> {
        for verb in PrimitiveVerb::ALL {
            let p = probs
                .get(&verb)
                .ok_or_else(|| SimError::InvalidDistribution(format!("missing verb {verb}")))?;
            check_row(verb, p)?;
        }
        Ok(OutcomeDistribution { probs })
    }

    fn from_fn(f: impl Fn(PrimitiveVerb) -> Vec<f64>) -> Self {
        let probs = PrimitiveVerb::ALL.into_iter().map(|v| (v, f(v))).collect();
        OutcomeDistribution::new(probs).expect("constructed rows are valid")
    }

    /// Point mass on each verb's best category.
    pub fn all_success() -> Self {
        OutcomeDistribution::from_fn(|v| {
            let n = categories(v).len();
            (0..n).map(|i| if i + 1 == n { 1.0 } else { 0.0 }).collect()
        })
    }

    /// Success with probability `p` (best category), otherwise the score-0 category.
    pub fn bernoulli(p: f64) -> Self {
        OutcomeDistribution::from_fn(|v| {
            let n = categories(v).len();
            (0..n)
                .map(|i| if i + 1 == n { p } else if i == 0 { 1.0 - p } else { 0.0 })
                .collect()
        })
    }

    pub fn uniform() -> Self {
        OutcomeDistribution::from_fn(|v| {
            let n = categories(v).len();
            vec![1.0 / n as f64; n]
        })
    }

    /// One verb's row, leaving the others at point mass on success.
    pub fn with_row(mut self, verb: PrimitiveVerb, p: Vec<f64>) -> Result<Self, SimError> {
        check_row(verb, &p)?;
        self.probs.insert(verb, p);
        Ok(self)
    }

    /// Per-verb (SR, CR) calibration; SR in [0, 1].
    pub fn calibrated(rows: &BTreeMap<PrimitiveVerb, (f64, f64)>) -> Result<Self, SimError> {
        let mut out = OutcomeDistribution::all_success();
        for (verb, (sr, cr)) in rows {
            out.probs.insert(*verb, calibrate_row(*verb, *sr, *cr)?.0);
        }
        Ok(out)
    }

    pub fn row(&self, verb: PrimitiveVerb) -> &[f64] {
        &self.probs[&verb]
    }

    pub fn success_prob(&self, verb: PrimitiveVerb) -> f64 {
        categories(verb)
            .iter()
            .zip(self.row(verb))
            .filter(|(c, _)| c.success)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn mean_score(&self, verb: PrimitiveVerb) -> f64 {
        categories(verb).iter().zip(self.row(verb)).map(|(c, p)| c.score * p).sum()
    }
}

/// Finds a row with success mass exactly `sr` and mean score as close to
/// `cr` as the category set allows. Returns the row and the achieved CR.
///
/// Mass is split between the lowest and highest category of the success
/// group and of the failure group; a single interpolation parameter moves
/// both groups together, so the mapping is monotone in `cr`.
pub fn calibrate_row(verb: PrimitiveVerb, sr: f64, cr: f64) -> Result<(Vec<f64>, f64), SimError> {
    if !(0.0..=1.0).contains(&sr) || !cr.is_finite() {
        return Err(SimError::InvalidDistribution(format!("{verb}: SR {sr} / CR {cr} out of range")));
    }
    let cats = categories(verb);
    let idx = |succ: bool| -> Vec<usize> { (0..cats.len()).filter(|&i| cats[i].success == succ).collect() };
    let (s_idx, f_idx) = (idx(true), idx(false));
    let lo_hi = |ix: &[usize]| (cats[ix[0]].score, cats[*ix.last().unwrap()].score);
    let (s_lo, s_hi) = lo_hi(&s_idx);
    let (f_lo, f_hi) = lo_hi(&f_idx);
    let lo = sr * s_lo + (1.0 - sr) * f_lo;
    let hi = sr * s_hi + (1.0 - sr) * f_hi;
    let t = if hi - lo > 1e-15 { ((cr - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };

    let mut p = vec![0.0; cats.len()];
    let mut spread = |ix: &[usize], mass: f64| {
        let (a, b) = (ix[0], *ix.last().unwrap());
        if a == b {
            p[a] += mass;
        } else {
            p[a] += mass * (1.0 - t);
            p[b] += mass * t;
        }
    };
    spread(&s_idx, sr);
    spread(&f_idx, 1.0 - sr);
    let achieved = cats.iter().zip(&p).map(|(c, q)| c.score * q).sum();
    Ok((p, achieved))
}

/// Inverse-CDF draw over the verb's categories in table order.
pub fn sample_outcome<R: Rng + ?Sized>(verb: PrimitiveVerb, dist: &OutcomeDistribution, rng: &mut R) -> RubricOutcome {
    let u: f64 = rng.gen();
    let cats = categories(verb);
    let row = dist.row(verb);
    let mut acc = 0.0;
    for (c, p) in cats.iter().zip(row) {
        acc += p;
        if u < acc {
            return RubricOutcome::from_category(verb, c);
        }
    }
    // rounding left u above the final partial sum; take the last category with mass
    let last = (0..cats.len()).rev().find(|&i| row[i] > 0.0).unwrap_or(cats.len() - 1);
    RubricOutcome::from_category(verb, &cats[last])
}
