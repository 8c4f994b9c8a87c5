use chemloop_core::grammar::PrimitiveVerb;
use chemloop_core::metrics::*;
use chemloop_core::orchestrator::{run_campaign, ExperimentConfig};
use chemloop_core::simlab::OutcomeDistribution;
use proptest::prelude::*;

/// Straight recount from raw per-step results, no shared code with the
/// evaluator.
fn brute_force(raw: &[Vec<(bool, f64)>], k: usize) -> (f64, Option<f64>) {
    let n = raw.len() as f64;
    let mut all_ok = 0usize;
    let mut reached_scores = Vec::new();
    for t in raw {
        let mut ok_before = true;
        for j in 0..k {
            ok_before &= t.get(j).map_or(false, |s| s.0);
        }
        let ok_at = ok_before && t.get(k).map_or(false, |s| s.0);
        if ok_at {
            all_ok += 1;
        }
        if ok_before {
            reached_scores.push(t.get(k).map_or(0.0, |s| s.1));
        }
    }
    let cr = if reached_scores.is_empty() {
        None
    } else {
        Some(reached_scores.iter().sum::<f64>() / reached_scores.len() as f64)
    };
    (all_ok as f64 / n, cr)
}

fn records(raw: &[Vec<(bool, f64)>], chain: usize) -> Vec<TrialRecord> {
    raw.iter()
        .enumerate()
        .map(|(i, r)| TrialRecord::from_results(i as u64, chain, r))
        .collect()
}

#[test]
fn grasp_row_compliance() {
    let mut scores = vec![0.0];
    scores.extend([0.5; 3]);
    scores.extend([1.0; 16]);
    assert!((compliance_rate(&scores).unwrap() - 0.875).abs() < 1e-12);
}

#[test]
fn twenty_trial_cascade() {
    // trials 0-1 fail step 1, trials 2-4 fail step 2
    let raw: Vec<Vec<(bool, f64)>> = (0..20)
        .map(|i| match i {
            0 | 1 => vec![(false, 0.25)],
            2..=4 => vec![(true, 1.0), (false, 0.5)],
            _ => vec![(true, 1.0), (true, 0.75)],
        })
        .collect();
    let r = stepwise_evaluate(&records(&raw, 2), 2).unwrap();
    assert!((r.steps[0].sr - 0.90).abs() < 1e-12);
    assert!((r.steps[1].sr - 0.75).abs() < 1e-12);
    assert_eq!(r.steps[1].reached, 18);
    for k in 0..2 {
        let (sr, cr) = brute_force(&raw, k);
        assert_eq!(r.steps[k].sr, sr);
        assert_eq!(r.steps[k].cr, cr);
    }
    let expect_cr2 = (3.0 * 0.5 + 15.0 * 0.75) / 18.0;
    assert!((r.steps[1].cr.unwrap() - expect_cr2).abs() < 1e-12);
}

#[test]
fn single_step_chain_matches_flat_rates() {
    let raw: Vec<Vec<(bool, f64)>> = (0..20).map(|i| vec![(i % 4 != 0, if i % 4 == 0 { 0.25 } else { 1.0 })]).collect();
    let r = stepwise_evaluate(&records(&raw, 1), 1).unwrap();
    let ok: Vec<bool> = raw.iter().map(|t| t[0].0).collect();
    let sc: Vec<f64> = raw.iter().map(|t| t[0].1).collect();
    assert_eq!(r.steps[0].sr, success_rate(&ok).unwrap());
    assert_eq!(r.steps[0].cr, Some(compliance_rate(&sc).unwrap()));
}

#[test]
fn single_trial_has_no_interval() {
    let r = stepwise_evaluate(&records(&[vec![(true, 1.0)]], 1), 1).unwrap();
    assert_eq!(r.steps[0].sr_ci95, None);
}

#[test]
fn calibrated_campaign_hits_configured_rate() {
    let row = table_row("prompted_closed_loop").unwrap();
    let mut cfg = ExperimentConfig::for_task("grasp_glass_rod", 7);
    cfg.distributions = OutcomeDistribution::calibrated(&row).unwrap();
    cfg.max_outer_retries = 0;
    cfg.inner_second_attempt_prob = 0.0;
    let n = 400;
    let logs = run_campaign(&cfg, n, 4);
    let r = evaluate_logs(&logs, true).unwrap();
    let p = row[&PrimitiveVerb::Grasp].0;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!((r.steps[0].sr - p).abs() < 3.0 * se, "sr {} vs {p}", r.steps[0].sr);
    let cr = row[&PrimitiveVerb::Grasp].1;
    assert!((r.steps[0].cr.unwrap() - cr).abs() < 0.05, "cr {:?} vs {cr}", r.steps[0].cr);
}

#[test]
fn campaign_report_is_deterministic() {
    let cfg = ExperimentConfig::for_task("acid_base", 3);
    let a = evaluate_logs(&run_campaign(&cfg, 6, 1), true).unwrap();
    let b = evaluate_logs(&run_campaign(&cfg, 6, 3), true).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.to_tsv(), b.to_tsv());
    assert!(a.steps[0].label.starts_with("S1 "));
}

#[test]
fn strict_counting_ignores_retried_successes() {
    let mut cfg = ExperimentConfig::for_task("grasp_glass_rod", 1);
    cfg.script = Some(chemloop_core::gateway::mock::ScriptKind::Retry);
    cfg.inner_second_attempt_prob = 0.0;
    let logs = run_campaign(&cfg, 4, 1);
    assert!(logs.iter().all(|l| l.succeeded()));
    assert_eq!(evaluate_logs(&logs, true).unwrap().steps[0].sr, 1.0);
    assert_eq!(evaluate_logs(&logs, false).unwrap().steps[0].sr, 0.0);
}

fn raw_trials() -> impl Strategy<Value = (usize, Vec<Vec<(bool, f64)>>)> {
    (1usize..6).prop_flat_map(|chain| {
        let step = (any::<bool>(), prop::sample::select(vec![0.0, 0.25, 0.5, 0.75, 1.0]));
        let trial = prop::collection::vec(step, 0..=chain);
        (Just(chain), prop::collection::vec(trial, 1..40))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn sr_non_increasing_and_cr_matches_recount((chain, raw) in raw_trials()) {
        let r = stepwise_evaluate(&records(&raw, chain), chain).unwrap();
        for w in r.steps.windows(2) {
            prop_assert!(w[1].sr <= w[0].sr);
        }
        // records truncate after the first failure, recount on the same view
        let truncated: Vec<Vec<(bool, f64)>> = raw
            .iter()
            .map(|t| {
                let stop = t.iter().position(|s| !s.0).map_or(t.len(), |p| p + 1);
                t[..stop].to_vec()
            })
            .collect();
        for k in 0..chain {
            let (sr, cr) = brute_force(&truncated, k);
            prop_assert_eq!(r.steps[k].sr, sr);
            prop_assert_eq!(r.steps[k].cr, cr);
        }
    }
}
