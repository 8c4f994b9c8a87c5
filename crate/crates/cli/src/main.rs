use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use chemloop_core::episodestore::{generate_training_mix, mix_preset, record_episode};
use chemloop_core::gateway::http::{HttpGateway, MockServer};
use chemloop_core::gateway::{MockConfig, MockLab, ScriptKind};
use chemloop_core::grammar::parse_plan;
use chemloop_core::image::RasterImage;
use chemloop_core::metrics::{evaluate_logs, table_row, TaskReport};
use chemloop_core::orchestrator::{replay, run_campaign_with, run_trial, ExperimentConfig, ExperimentLog, ExperimentStatus, ReplayError};
use chemloop_core::simlab::OutcomeDistribution;
use chemloop_core::visualprompt::{parse_marks, render_marks, validate_marks};

/// Failure with the process exit code it maps to.
struct Fail {
    code: u8,
    err: anyhow::Error,
}

fn input(err: impl Into<anyhow::Error>) -> Fail {
    Fail { code: 2, err: err.into() }
}

fn runtime(err: impl Into<anyhow::Error>) -> Fail {
    Fail { code: 1, err: err.into() }
}

type CliResult = Result<(), Fail>;

#[derive(Parser)]
#[command(name = "chemloop", version, about = "Closed-loop chemistry experiments against a simulated lab bench")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment and emit its log
    Run {
        #[command(flatten)]
        exp: ExpArgs,
        /// Directory for log.json (and the episode with --record)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-tick episode data under <out>/episode
        #[arg(long, requires = "out")]
        record: bool,
    },
    /// Run seeded trials and report SR/CR per step
    Campaign {
        #[command(flatten)]
        exp: ExpArgs,
        #[arg(long, default_value_t = 20)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Count a step only when the monitor accepted every attempt of it
        #[arg(long)]
        strict: bool,
        /// Directory for report.tsv, report.json and logs/
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a report from existing experiment logs
    Evaluate {
        /// Log files or directories containing *.json logs
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse a plan and print its canonical JSON
    ParsePlan {
        /// Plan file; stdin when absent
        file: Option<PathBuf>,
    },
    /// Draw marks onto a PPM image
    Annotate {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        marks: PathBuf,
        /// Output PPM; stdout when absent
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the mock model and policy endpoints over HTTP
    ServeMock {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[command(flatten)]
        mock: MockArgs,
    },
    /// Record a training-mix dataset of success and retry episodes
    GenDataset {
        /// One of config1..config4
        #[arg(long, conflicts_with_all = ["success", "retry"])]
        preset: Option<String>,
        #[arg(long, default_value_t = 0)]
        success: usize,
        #[arg(long, default_value_t = 0)]
        retry: usize,
        #[arg(long, default_value = "grasp_glass_rod")]
        task: String,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        frame_scale: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run a logged experiment and check it matches (exit 3 if not)
    Replay {
        log: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Script {
    Success,
    Retry,
}

impl From<Script> for ScriptKind {
    fn from(s: Script) -> Self {
        match s {
            Script::Success => ScriptKind::Success,
            Script::Retry => ScriptKind::Retry,
        }
    }
}

#[derive(Args, Clone)]
struct MockArgs {
    /// Force outcomes of the mock policy
    #[arg(long, value_enum)]
    script: Option<Script>,
    /// Outcome distributions calibrated from a named per-verb SR/CR row
    #[arg(long)]
    calibrate: Option<String>,
    /// Rows per action chunk
    #[arg(long)]
    horizon: Option<usize>,
}

#[derive(Args)]
struct ExpArgs {
    /// JSON experiment config; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trial: Option<u64>,
    #[arg(long)]
    no_prompt: bool,
    #[arg(long)]
    max_retries: Option<u32>,
    #[arg(long)]
    max_until: Option<u32>,
    #[arg(long)]
    tick_budget: Option<u64>,
    #[arg(long)]
    second_attempt_prob: Option<f64>,
    /// Observation downsampling, must divide 160
    #[arg(long)]
    frame_scale: Option<u32>,
    /// Base URL of remote model and policy services instead of the in-process mock
    #[arg(long)]
    endpoint: Option<String>,
    #[command(flatten)]
    mock: MockArgs,
}

fn distributions(name: &str) -> Result<OutcomeDistribution, Fail> {
    let row = table_row(name).ok_or_else(|| input(anyhow!("unknown calibration row `{name}`")))?;
    OutcomeDistribution::calibrated(&row).map_err(input)
}

impl ExpArgs {
    fn config(&self) -> Result<ExperimentConfig, Fail> {
        let (mut cfg, file_seed) = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(input)?;
                let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display())).map_err(input)?;
                let has_seed = v.get("seed").is_some();
                (serde_json::from_value(v).map_err(input)?, has_seed)
            }
            None => (ExperimentConfig::default(), false),
        };
        if let Some(t) = &self.task {
            cfg.task_id = t.clone();
        }
        match self.seed {
            Some(s) => cfg.seed = s,
            None if file_seed => {}
            None => return Err(input(anyhow!("--seed is required (or a seed in --config)"))),
        }
        if let Some(t) = self.trial {
            cfg.trial = t;
        }
        if self.no_prompt {
            cfg.prompt_enabled = false;
        }
        if let Some(v) = self.max_retries {
            cfg.max_outer_retries = v;
        }
        if let Some(v) = self.max_until {
            cfg.max_until_repetitions = v;
        }
        if let Some(v) = self.tick_budget {
            cfg.inner_tick_budget = v;
        }
        if let Some(v) = self.second_attempt_prob {
            cfg.inner_second_attempt_prob = v;
        }
        if let Some(v) = self.frame_scale {
            cfg.frame_scale = v;
        }
        if let Some(s) = self.mock.script {
            cfg.script = Some(s.into());
        }
        if let Some(name) = &self.mock.calibrate {
            cfg.distributions = distributions(name)?;
        }
        if let Some(h) = self.mock.horizon {
            cfg.horizon = h;
        }
        cfg.validate().map_err(input)?;
        Ok(cfg)
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(runtime)?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display())).map_err(runtime)
}

/// Runs trials against the in-process mock or a remote endpoint.
fn campaign_logs(exp: &ExpArgs, cfg: &ExperimentConfig, n: u64, jobs: usize) -> Vec<ExperimentLog> {
    match &exp.endpoint {
        Some(url) => {
            let gw = HttpGateway::new(url);
            run_campaign_with(cfg, n, jobs, &gw, &gw)
        }
        None => {
            let lab = MockLab::new(cfg.mock_config());
            run_campaign_with(cfg, n, jobs, &lab, &lab)
        }
    }
}

fn emit_report(report: &TaskReport, out: Option<&Path>) -> CliResult {
    if let Some(dir) = out {
        write(&dir.join("report.json"), report.to_json() + "\n")?;
        write(&dir.join("report.tsv"), report.to_tsv())?;
    }
    print!("{}", report.to_tsv());
    Ok(())
}

fn cmd_run(exp: ExpArgs, out: Option<PathBuf>, record: bool) -> CliResult {
    let cfg = exp.config()?;
    let log = match (&exp.endpoint, record) {
        (Some(_), true) => return Err(input(anyhow!("--record works with the in-process mock only"))),
        (None, true) => {
            let dir = out.as_ref().expect("clap enforces --out").join("episode");
            record_episode(&cfg, &dir).map_err(runtime)?.0
        }
        (Some(url), false) => {
            let gw = HttpGateway::new(url);
            run_trial(&cfg, &gw, &gw)
        }
        (None, false) => {
            let lab = MockLab::new(cfg.mock_config());
            run_trial(&cfg, &lab, &lab)
        }
    };
    let json = log.to_json_pretty() + "\n";
    match out {
        Some(dir) => write(&dir.join("log.json"), json)?,
        None => print!("{json}"),
    }
    if let ExperimentStatus::Error { message } = &log.status {
        return Err(runtime(anyhow!("experiment failed: {message}")));
    }
    Ok(())
}

fn cmd_campaign(exp: ExpArgs, trials: u64, jobs: usize, strict: bool, out: Option<PathBuf>) -> CliResult {
    if trials == 0 {
        return Err(input(anyhow!("--trials must be at least 1")));
    }
    let cfg = exp.config()?;
    let logs = campaign_logs(&exp, &cfg, trials, jobs);
    if let Some(dir) = &out {
        for log in &logs {
            write(&dir.join("logs").join(format!("trial_{:04}.json", log.config.trial)), log.to_json_pretty() + "\n")?;
        }
    }
    let report = evaluate_logs(&logs, !strict).map_err(runtime)?;
    emit_report(&report, out.as_deref())
}

fn collect_logs(paths: &[PathBuf]) -> Result<Vec<ExperimentLog>, Fail> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut inner: Vec<PathBuf> = fs::read_dir(p)
                .map_err(input)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            inner.sort();
            files.extend(inner);
        } else {
            files.push(p.clone());
        }
    }
    files
        .iter()
        .map(|f| {
            let text = fs::read_to_string(f).with_context(|| format!("reading {}", f.display())).map_err(input)?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", f.display())).map_err(input)
        })
        .collect()
}

fn cmd_evaluate(logs: Vec<PathBuf>, strict: bool, out: Option<PathBuf>) -> CliResult {
    let logs = collect_logs(&logs)?;
    let report = evaluate_logs(&logs, !strict).map_err(input)?;
    emit_report(&report, out.as_deref())
}

fn cmd_parse_plan(file: Option<PathBuf>) -> CliResult {
    let text = match file {
        Some(f) => fs::read_to_string(&f).with_context(|| format!("reading {}", f.display())).map_err(input)?,
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s).map_err(input)?;
            s
        }
    };
    let plan = parse_plan(&text).map_err(input)?;
    println!("{}", serde_json::to_string_pretty(&plan.canonical_json()).map_err(runtime)?);
    Ok(())
}

fn cmd_annotate(image: PathBuf, marks: PathBuf, out: Option<PathBuf>) -> CliResult {
    let bytes = fs::read(&image).with_context(|| format!("reading {}", image.display())).map_err(input)?;
    let img = RasterImage::from_ppm(&bytes).map_err(input)?;
    let text = fs::read_to_string(&marks).with_context(|| format!("reading {}", marks.display())).map_err(input)?;
    let marks = parse_marks(&text).map_err(input)?;
    if let Err(errs) = validate_marks(&marks, img.width(), img.height()) {
        let msg: Vec<String> = errs.iter().map(ToString::to_string).collect();
        return Err(input(anyhow!("marks do not fit the image: {}", msg.join("; "))));
    }
    let ppm = render_marks(&img, &marks).to_ppm();
    match out {
        Some(p) => write(&p, ppm),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&ppm).map_err(runtime)
        }
    }
}

fn cmd_serve_mock(bind: String, mock: MockArgs) -> CliResult {
    let mut cfg = MockConfig::default();
    if let Some(s) = mock.script {
        cfg.script = Some(s.into());
    }
    if let Some(name) = &mock.calibrate {
        cfg.distributions = distributions(name)?;
    }
    if let Some(h) = mock.horizon {
        if h == 0 {
            return Err(input(anyhow!("--horizon must be at least 1")));
        }
        cfg.horizon = h;
    }
    let server = MockServer::start(&bind, Arc::new(MockLab::new(cfg))).map_err(runtime)?;
    eprintln!("serving on {}", server.url());
    server.join();
    Ok(())
}

fn cmd_gen_dataset(
    preset: Option<String>,
    success: usize,
    retry: usize,
    task: String,
    seed: u64,
    frame_scale: u32,
    out: PathBuf,
) -> CliResult {
    let (s, r) = match preset {
        Some(p) => mix_preset(&p).ok_or_else(|| input(anyhow!("unknown preset `{p}` (config1..config4)")))?,
        None => (success, retry),
    };
    if s + r == 0 {
        return Err(input(anyhow!("nothing to generate: give --preset or --success/--retry")));
    }
    if out.exists() && fs::read_dir(&out).map_err(runtime)?.next().is_some() {
        return Err(input(anyhow!("{} is not empty", out.display())));
    }
    let ds = generate_training_mix(s, r, &task, seed, &out, frame_scale).map_err(runtime)?;
    println!("{} episodes ({} success, {} retry) in {}", ds.episodes.len(), s, r, out.display());
    Ok(())
}

fn cmd_replay(path: PathBuf) -> CliResult {
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display())).map_err(input)?;
    let log: ExperimentLog = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display())).map_err(input)?;
    match replay(&log) {
        Ok(_) => {
            println!("replay matches: {}", log.experiment_id);
            Ok(())
        }
        Err(e @ ReplayError::Diverged(_)) => Err(Fail { code: 3, err: e.into() }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run { exp, out, record } => cmd_run(exp, out, record),
        Cmd::Campaign { exp, trials, jobs, strict, out } => cmd_campaign(exp, trials, jobs, strict, out),
        Cmd::Evaluate { logs, strict, out } => cmd_evaluate(logs, strict, out),
        Cmd::ParsePlan { file } => cmd_parse_plan(file),
        Cmd::Annotate { image, marks, out } => cmd_annotate(image, marks, out),
        Cmd::ServeMock { bind, mock } => cmd_serve_mock(bind, mock),
        Cmd::GenDataset {
            preset,
            success,
            retry,
            task,
            seed,
            frame_scale,
            out,
        } => cmd_gen_dataset(preset, success, retry, task, seed, frame_scale, out),
        Cmd::Replay { log } => cmd_replay(log),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail { code, err }) => {
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}
