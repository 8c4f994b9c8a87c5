//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Set CHEMLOOP_BLESS=1 to rewrite the render goldens.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use chemloop_core::chem::ColorTag;
use chemloop_core::episodestore::{generate_training_mix, MIX_PRESETS};
use chemloop_core::grammar::{format_primitive, parse_plan, parse_primitive, PrimitiveTask, PrimitiveVerb};
use chemloop_core::image::RasterImage;
use chemloop_core::metrics::{compliance_rate, stepwise_evaluate, success_rate, table_row, TrialRecord};
use chemloop_core::orchestrator::{replay, run_campaign, ExperimentConfig, ExperimentLog, StepStatus};
use chemloop_core::simlab::{init_scene, render_front, FixtureClass, OutcomeDistribution, FIXTURES};
use chemloop_core::visualprompt::{render_marks, MarkRole, VisualMark};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, Normal};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(4, |n| n.get())
}

fn within_3se(measured: f64, expected: f64, n: usize) -> (bool, f64) {
    let se = (expected * (1.0 - expected) / n as f64).sqrt();
    ((measured - expected).abs() <= 3.0 * se, se)
}

fn success_fraction(logs: &[ExperimentLog]) -> f64 {
    logs.iter().filter(|l| l.succeeded()).count() as f64 / logs.len() as f64
}

fn cr_formula() -> Check {
    let mut scores = vec![0.0];
    scores.extend([0.5; 3]);
    scores.extend([1.0; 16]);
    let cr = compliance_rate(&scores).map_err(|e| e.to_string())?;
    ensure((cr - 0.875).abs() <= 1e-12, || format!("CR {cr}"))?;
    let mut ok = vec![true; 19];
    ok.push(false);
    let sr = success_rate(&ok).map_err(|e| e.to_string())?;
    ensure((sr - 0.95).abs() <= 1e-12, || format!("SR {sr}"))?;
    let published = table_row("prompted_closed_loop").expect("row")[&PrimitiveVerb::Grasp];
    ensure(published == (sr, cr), || format!("published grasp row {published:?}"))?;
    Ok(format!("CR {cr} SR {sr}, equal to the published grasp row"))
}

/// Recount straight from raw per-step results.
fn brute(raw: &[Vec<(bool, f64)>], k: usize) -> (f64, Option<f64>) {
    let reached: Vec<&Vec<(bool, f64)>> = raw.iter().filter(|t| t[..k].iter().all(|s| s.0)).collect();
    let ok = reached.iter().filter(|t| t[k].0).count();
    let cr = (!reached.is_empty()).then(|| reached.iter().map(|t| t[k].1).sum::<f64>() / reached.len() as f64);
    (ok as f64 / raw.len() as f64, cr)
}

fn evaluate_raw(raw: &[Vec<(bool, f64)>], chain: usize) -> Result<Vec<(f64, Option<f64>)>, String> {
    let trials: Vec<TrialRecord> = raw
        .iter()
        .enumerate()
        .map(|(i, r)| TrialRecord::from_results(i as u64, chain, r))
        .collect();
    let report = stepwise_evaluate(&trials, chain).map_err(|e| e.to_string())?;
    Ok(report.steps.iter().map(|s| (s.sr, s.cr)).collect())
}

fn stepwise_cascade() -> Check {
    // 2 trials fail step 1, 3 more fail step 2, the rest pass both
    let raw: Vec<Vec<(bool, f64)>> = (0..20)
        .map(|i| match i {
            0 | 1 => vec![(false, 0.25), (false, 0.0)],
            2..=4 => vec![(true, 1.0), (false, 0.5)],
            _ => vec![(true, 0.75), (true, 1.0)],
        })
        .collect();
    let got = evaluate_raw(&raw, 2)?;
    for (k, g) in got.iter().enumerate() {
        ensure(*g == brute(&raw, k), || format!("fixture step {k}: {g:?} vs {:?}", brute(&raw, k)))?;
    }
    ensure(got[0].0 == 0.9 && got[1].0 == 0.75, || format!("SR {got:?}"))?;

    let scores = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for c in 0..1000 {
        let chain = rng.gen_range(1..=6);
        let n = rng.gen_range(1..=40);
        let p: f64 = rng.gen_range(0.3..1.0);
        let raw: Vec<Vec<(bool, f64)>> = (0..n)
            .map(|_| (0..chain).map(|_| (rng.gen_bool(p), scores[rng.gen_range(0..5)])).collect())
            .collect();
        let got = evaluate_raw(&raw, chain)?;
        for k in 0..chain {
            ensure(got[k] == brute(&raw, k), || format!("campaign {c} step {k}"))?;
            if k > 0 {
                ensure(got[k].0 <= got[k - 1].0, || format!("campaign {c}: SR rises at step {k}"))?;
            }
        }
    }
    Ok("20-trial fixture SR (0.90, 0.75) exact; 1000 fuzzed campaigns monotone and equal to recount".into())
}

fn bernoulli_campaign(task: &str, p: f64, retries: u32, second: f64, n: u64, seed: u64) -> Vec<ExperimentLog> {
    let mut cfg = ExperimentConfig::for_task(task, seed);
    cfg.distributions = OutcomeDistribution::bernoulli(p);
    cfg.max_outer_retries = retries;
    cfg.inner_second_attempt_prob = second;
    cfg.frame_scale = 8;
    run_campaign(&cfg, n, jobs())
}

fn amplification() -> Check {
    let n = 2000;
    let closed = success_fraction(&bernoulli_campaign("grasp_glass_rod", 0.8, 2, 0.0, n, 101));
    let (ok1, se1) = within_3se(closed, 0.992, n as usize);
    let open = success_fraction(&bernoulli_campaign("grasp_glass_rod", 0.8, 0, 0.0, n, 102));
    let (ok0, se0) = within_3se(open, 0.8, n as usize);
    let detail = format!("2 retries SR {closed:.4} (0.992 ± {:.4}), no retries SR {open:.4} (0.8 ± {:.4})", 3.0 * se1, 3.0 * se0);
    if ok1 && ok0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn inner_second_attempt() -> Check {
    let n = 10_000;
    let logs = bernoulli_campaign("grasp_glass_rod", 0.6, 0, 1.0, n, 103);
    let mut ok = 0;
    for l in &logs {
        let a = l.traces.first().and_then(|t| t.attempts.first()).ok_or("trial without an attempt")?;
        let first = a.outcomes[0].success;
        ensure(a.outcomes.len() == if first { 1 } else { 2 }, || format!("{}: {} tries", l.experiment_id, a.outcomes.len()))?;
        ok += a.outcomes.last().map_or(false, |o| o.success) as usize;
    }
    let frac = ok as f64 / n as f64;
    let (pass, se) = within_3se(frac, 0.84, n as usize);
    let detail = format!("inner success {frac:.4} (0.84 ± {:.4})", 3.0 * se);
    if pass {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn until_loop() -> Check {
    let logs = run_campaign(&ExperimentConfig::for_task("acid_base", 0), 1, 1);
    let log = &logs[0];
    ensure(log.succeeded(), || format!("status {:?}", log.status))?;
    let t = log.traces.last().ok_or("no traces")?;
    ensure(t.primitive.until.is_some(), || "last step has no until clause".into())?;
    ensure(t.until_repetitions == 3, || format!("{} repetitions", t.until_repetitions))?;
    ensure(t.status == StepStatus::Succeeded, || format!("{:?}", t.status))?;
    ensure(t.condition_checks.len() == 4, || format!("{} checks", t.condition_checks.len()))?;
    for c in &t.condition_checks {
        ensure(c.oracle == Some(c.verdict), || format!("repetition {}: monitor {} oracle {:?}", c.repetition, c.verdict, c.oracle))?;
    }
    let scene = log.final_scene.as_ref().ok_or("no final scene")?;
    let color = scene.get("water_beaker").ok_or("no water beaker")?.liquid_color();
    ensure(color == ColorTag::Colorless, || format!("final color {color:?}"))?;
    Ok("3 repetitions, 4 monitor checks equal to ground truth, final solution colorless".into())
}

fn ambiguity() -> Check {
    let n = 200;
    let run = |task: &str, prompt: bool, seed: u64| {
        let mut cfg = ExperimentConfig::for_task(task, seed);
        cfg.distributions = OutcomeDistribution::bernoulli(0.95);
        cfg.max_outer_retries = 0;
        cfg.inner_second_attempt_prob = 0.0;
        cfg.prompt_enabled = prompt;
        cfg.frame_scale = 8;
        let logs = run_campaign(&cfg, n, jobs());
        logs.iter().filter(|l| l.succeeded()).count()
    };
    // both arms share a base seed, so trial i sees the same uniforms in
    // each fixture; positive correlation only makes the z-test conservative
    let (two, three) = (run("cups_ambiguity_2", false, 201), run("cups_ambiguity_3", false, 201));
    let (p2, p3) = (two as f64 / n as f64, three as f64 / n as f64);
    let pooled = (two + three) as f64 / (2 * n) as f64;
    let z = (p2 - p3) / (pooled * (1.0 - pooled) * 2.0 / n as f64).sqrt();
    let pval = 1.0 - Normal::new(0.0, 1.0).unwrap().cdf(z);
    let (two_on, three_on) = (run("cups_ambiguity_2", true, 203), run("cups_ambiguity_3", true, 203));
    let detail = format!(
        "no prompt 2-cup {two}/{n} vs 3-cup {three}/{n} (z {z:.2}, one-sided p {pval:.2e}); prompted {two_on}/{n} and {three_on}/{n}"
    );
    if p3 < p2 && pval < 0.01 && two_on >= two && three_on >= two {
        Ok(detail)
    } else {
        Err(detail)
    }
}

const NOT_VERBS: [&str; 10] = ["Shake", "Boil", "Mix", "Take", "Fly", "Wash", "Cool", "Place", "Pours", "Graspp"];
const WORDS: [&str; 12] = ["glass", "rod", "beaker", "water", "copper", "sulfate", "wire", "test", "tube", "left", "solution", "NaOH"];

fn words(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..4);
    (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

fn invalid_line(rng: &mut ChaCha8Rng) -> String {
    let verb = PrimitiveVerb::ALL[rng.gen_range(0..7)];
    match rng.gen_range(0..5) {
        0 => format!("{} {}", NOT_VERBS[rng.gen_range(0..NOT_VERBS.len())], words(rng)),
        1 => {
            let conns: &[&str] = match verb {
                PrimitiveVerb::Pour => &["from", "into", "into", "into"],
                PrimitiveVerb::Transfer => &["from", "to", "to", "to"],
                PrimitiveVerb::Dip => &["into the", "in", "in", "in"],
                _ => &["from", "into", "from", "into"],
            };
            let n = loop {
                let n = rng.gen_range(0..5);
                if n != verb.arity() {
                    break n;
                }
            };
            let mut line = verb.name().to_string();
            for i in 0..n {
                if i > 0 {
                    line = format!("{line} {}", conns[i - 1]);
                }
                line = format!("{line} {}", words(rng));
            }
            line
        }
        2 => {
            let v = loop {
                let v = PrimitiveVerb::ALL[rng.gen_range(0..7)];
                if !v.allows_until() {
                    break v;
                }
            };
            let slots: Vec<String> = (0..v.arity()).map(|_| words(rng)).collect();
            let refs: Vec<&str> = slots.iter().map(String::as_str).collect();
            format!("{} until {}", format_primitive(&PrimitiveTask::new(v, &refs)), words(rng))
        }
        3 => format!("Pour {} from {} into {} until", words(rng), words(rng), words(rng)),
        _ => " \t ".repeat(rng.gen_range(0..3)),
    }
}

fn grammar_corpus() -> Check {
    let complete: Vec<_> = FIXTURES.iter().filter(|f| f.class == FixtureClass::Complete).collect();
    ensure(complete.len() == 5, || format!("{} complete-task fixtures", complete.len()))?;
    for f in &complete {
        let plan = parse_plan(f.plan).map_err(|e| format!("{}: {e}", f.id))?;
        let text: Vec<String> = plan.steps.iter().map(format_primitive).collect();
        let again = parse_plan(&text.join("\n")).map_err(|e| format!("{} round trip: {e}", f.id))?;
        ensure(plan.canonical_json() == again.canonical_json(), || format!("{} does not round-trip", f.id))?;
        ensure(
            plan.steps.iter().zip(&again.steps).all(|(a, b)| a.structurally_eq(b)),
            || format!("{} steps differ after round trip", f.id),
        )?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xf022);
    for _ in 0..10_000 {
        let line = invalid_line(&mut rng);
        ensure(parse_primitive(&line).is_err(), || format!("accepted {line:?}"))?;
        // plans skip blank lines by design
        if !line.trim().is_empty() {
            ensure(parse_plan(&format!("Grasp glass rod\n{line}")).is_err(), || format!("plan accepted {line:?}"))?;
        }
    }
    Ok("5 task plans parse and round-trip; 10000 fuzzed invalid lines rejected".into())
}

fn golden_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/annotate.sha256")
}

fn annotate_cases() -> Vec<(&'static str, RasterImage, Vec<VisualMark>)> {
    let front = |task| render_front(&init_scene(task, 0).expect("fixture"));
    vec![
        (
            "grasp_point",
            front("grasp_glass_rod"),
            vec![VisualMark::point(304, 140, MarkRole::GraspPoint)],
        ),
        (
            "pour_marks",
            front("acid_base"),
            vec![
                VisualMark::bbox(360, 250, 420, 400),
                VisualMark::point(390, 260, MarkRole::GraspPoint),
                VisualMark::bbox(130, 300, 210, 400),
                VisualMark::point(170, 310, MarkRole::TargetPoint),
            ],
        ),
        ("lit_lamp_bare", front("heat_platinum_wire"), vec![]),
    ]
}

fn rendering() -> Check {
    let hashes = |cases: &[(&str, RasterImage, Vec<VisualMark>)]| -> BTreeMap<String, String> {
        cases
            .iter()
            .map(|(name, base, marks)| {
                let out = render_marks(base, marks).to_ppm();
                (name.to_string(), format!("{:x}", Sha256::digest(&out)))
            })
            .collect()
    };
    let first = hashes(&annotate_cases());
    let second = hashes(&annotate_cases());
    ensure(first == second, || "two runs differ".into())?;
    for (name, base, _) in annotate_cases() {
        ensure(render_marks(&base, &[]).to_ppm() == base.to_ppm(), || format!("{name}: empty marks change pixels"))?;
        let bytes = base.to_ppm();
        let back = RasterImage::from_ppm(&bytes).map_err(|e| e.to_string())?;
        ensure(render_marks(&back, &[]).to_ppm() == bytes, || format!("{name}: PPM bytes not preserved"))?;
    }
    let text: String = first.iter().map(|(k, v)| format!("{v}  {k}\n")).collect();
    if std::env::var_os("CHEMLOOP_BLESS").is_some() {
        fs::write(golden_path(), &text).map_err(|e| e.to_string())?;
    }
    let golden = fs::read_to_string(golden_path()).map_err(|e| format!("golden file: {e}"))?;
    ensure(golden == text, || format!("golden mismatch:\n{text}"))?;
    Ok(format!("{} golden images byte-identical across runs; empty marks are the identity", first.len()))
}

/// Counts kinds from the per-episode manifests alone.
fn count_kinds(dir: &Path) -> Result<(usize, usize), String> {
    let mut counts = (0, 0);
    for e in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let p = e.map_err(|e| e.to_string())?.path();
        if !p.is_dir() {
            continue;
        }
        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(p.join("manifest.json")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let lines = fs::read_to_string(p.join("steps.jsonl")).map_err(|e| e.to_string())?.lines().count();
        ensure(m["record_count"].as_u64() == Some(lines as u64), || format!("{}: record_count mismatch", p.display()))?;
        let recovered = m["outcome"]["steps"].as_array().into_iter().flatten().any(|s| {
            let v: Vec<bool> = s["successes"].as_array().into_iter().flatten().filter_map(|b| b.as_bool()).collect();
            v.iter().position(|ok| !ok).is_some_and(|i| v[i..].iter().any(|ok| *ok))
        });
        match m["kind"].as_str() {
            Some("success") if !recovered => counts.0 += 1,
            Some("retry") if recovered => counts.1 += 1,
            k => return Err(format!("{}: kind {k:?}, recovered {recovered}", p.display())),
        }
    }
    Ok(counts)
}

fn dataset_mixes() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let results: Vec<Result<String, String>> = std::thread::scope(|s| {
        let handles: Vec<_> = MIX_PRESETS
            .iter()
            .enumerate()
            .map(|(i, (name, ns, nr))| {
                let dir = tmp.path().join(name);
                s.spawn(move || {
                    generate_training_mix(*ns, *nr, "grasp_glass_rod", 300 + i as u64, &dir, 8).map_err(|e| e.to_string())?;
                    let got = count_kinds(&dir)?;
                    ensure(got == (*ns, *nr), || format!("{name}: counted {got:?}, wanted ({ns}, {nr})"))?;
                    Ok(format!("{name} {got:?}"))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err("panicked".into()))).collect()
    });
    let ok: Vec<String> = results.into_iter().collect::<Result<_, _>>()?;
    Ok(ok.join(", "))
}

fn replay_check() -> Check {
    let row = table_row("pi0").expect("row");
    let mut n = 0;
    for task in ["acid_base", "flame_test_cuso4", "cups_ambiguity_3", "evaporate_nacl", "pour_liquid"] {
        let mut cfg = ExperimentConfig::for_task(task, 401);
        cfg.distributions = OutcomeDistribution::calibrated(&row).map_err(|e| e.to_string())?;
        cfg.frame_scale = 4;
        for log in run_campaign(&cfg, 8, jobs()) {
            let text = log.to_json_pretty();
            let back: ExperimentLog = serde_json::from_str(&text).map_err(|e| e.to_string())?;
            replay(&back).map_err(|e| format!("{}: {e}", log.experiment_id))?;
            let mut tampered = back.clone();
            tampered.total_ticks += 1;
            ensure(replay(&tampered).is_err(), || format!("{}: tampering went unnoticed", log.experiment_id))?;
            n += 1;
        }
    }
    Ok(format!("{n} logs from 5 tasks replay identically after a JSON round trip"))
}

fn main() -> ExitCode {
    let checks: [(&str, u64, fn() -> Check); 10] = [
        ("compliance-rate formula", 1, cr_formula),
        ("stepwise cascade", 10, stepwise_cascade),
        ("closed-loop amplification", 60, amplification),
        ("inner second attempt", 30, inner_second_attempt),
        ("until loop", 5, until_loop),
        ("ambiguity model", 120, ambiguity),
        ("grammar corpus", 10, grammar_corpus),
        ("rendering determinism", 5, rendering),
        ("dataset mixes", 120, dataset_mixes),
        ("replay", 60, replay_check),
    ];
    let mut failed = 0;
    for (name, limit, f) in checks {
        let t0 = Instant::now();
        let r = f();
        let took = t0.elapsed();
        let in_time = took <= Duration::from_secs(limit);
        let (pass, detail) = match r {
            Ok(d) if in_time => (true, d),
            Ok(d) => (false, format!("{d}; over the {limit}s budget")),
            Err(d) => (false, d),
        };
        failed += !pass as usize;
        println!("{} {name} [{:.2}s/{limit}s]: {detail}", if pass { "PASS" } else { "FAIL" }, took.as_secs_f64());
    }
    println!("acceptance: {} of 10 passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
