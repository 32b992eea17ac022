//! The `audio-composer` command line.
//!
//! Settings resolve as flags, then `AUDIO_COMPOSER_*` environment variables,
//! then the TOML file named by `--config`, then built-in defaults.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, RemoteConfig};
use crate::compose::{render_plan, render_seeds, ComposeError, GenerationOptions};
use crate::metrics::{evaluate_manifest, OnsetConfig, DEFAULT_TOLERANCE};
use crate::mixer::{measure_loudness, Limiter, MixConfig};
use crate::plan::{parse_plan_response, validate_plan, Plan, ValidationReport};
use crate::planner::{Planner, PlannerConfig, PlannerError, PromptTemplate, TemplateVariant};
use crate::selftest::run_selftest;
use crate::session::{http, Engine, SessionConfig, SessionError, SessionStore, Turn, TurnOptions, TurnStatus};
use crate::tokens::container::{read_codebook, read_features};
use crate::tokens::{encode_token_string, quantize};
use crate::util::write_atomic;
use crate::wav::{read_wav_file, write_wav_file, WavFormat};

/// Process exit codes; stable across releases.
pub mod exit {
    pub const OK: u8 = 0;
    /// The plan is invalid, or the planner's plan was rejected after the
    /// corrective retry.
    pub const INVALID_PLAN: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const IO: u8 = 3;
    pub const PARSE: u8 = 4;
    pub const PLANNER: u8 = 5;
    pub const AGENT: u8 = 6;
    pub const MIX: u8 = 7;
    pub const TOKEN: u8 = 8;
    pub const METRICS: u8 = 9;
    pub const SELFTEST: u8 = 10;
}

/// A command failure: message for stderr plus exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn new(code: u8, message: impl std::fmt::Display) -> Self {
        Failure { code, message: message.to_string() }
    }
}

type CmdResult = Result<u8, Failure>;

fn io_fail(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::new(exit::IO, format!("{}: {e}", path.display()))
}

fn planner_fail(e: PlannerError) -> Failure {
    let code = match e {
        PlannerError::Config(_) => exit::USAGE,
        PlannerError::PlanRejected { .. } => exit::INVALID_PLAN,
        _ => exit::PLANNER,
    };
    Failure::new(code, e)
}

fn session_fail(e: SessionError) -> Failure {
    match e {
        SessionError::Planner(p) => planner_fail(p),
        SessionError::InvalidRequest(_) => Failure::new(exit::USAGE, e),
        other => Failure::new(exit::IO, other),
    }
}

fn compose_fail(e: ComposeError) -> Failure {
    match e {
        ComposeError::Mix(_) | ComposeError::SeedCount { .. } => Failure::new(exit::MIX, e),
        ComposeError::Agent { .. } => Failure::new(exit::AGENT, e),
    }
}

#[derive(Debug, Parser)]
#[command(name = "audio-composer", version, about = "Plan-driven audio composition")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "AUDIO_COMPOSER_CONFIG")]
    pub config: Option<PathBuf>,
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Directory for command outputs [default: out].
    #[arg(long, global = true, env = "AUDIO_COMPOSER_OUTPUT_DIR")]
    pub output_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ask the planner for a plan and validate it.
    Plan(PlanArgs),
    /// Render a plan file to a WAV mix.
    Render(RenderArgs),
    /// Interactive conversation: one turn per stdin line; `/quit` ends.
    Chat(ChatArgs),
    /// Run the session HTTP API.
    Serve(ServeArgs),
    /// Print the integrated loudness of a WAV file.
    Loudness { wav: PathBuf },
    /// Quantize a feature file with a codebook into `<AUD_X>` tokens.
    Tokenize(TokenizeArgs),
    /// Evaluate onset metrics over a manifest.
    Eval(EvalArgs),
    /// Run the conditioning and token invariant checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Default, Args)]
pub struct PlannerArgs {
    /// Scripted planner fixture (JSON).
    #[arg(long, env = "AUDIO_COMPOSER_PLANNER_FIXTURE")]
    pub fixture: Option<PathBuf>,
    /// Chat-completion endpoint URL.
    #[arg(long, env = "AUDIO_COMPOSER_PLANNER_ENDPOINT", conflicts_with = "fixture")]
    pub endpoint: Option<String>,
    /// Model name sent to the endpoint.
    #[arg(long, env = "AUDIO_COMPOSER_PLANNER_MODEL")]
    pub model: Option<String>,
    /// Prompt template: standard or volume_control.
    #[arg(long, env = "AUDIO_COMPOSER_TEMPLATE")]
    pub variant: Option<TemplateVariant>,
    /// Timeline length, seconds.
    #[arg(long, env = "AUDIO_COMPOSER_DURATION")]
    pub duration: Option<f64>,
}

#[derive(Debug, Default, Args)]
pub struct AgentArgs {
    /// Synthesis agent: stub or remote.
    #[arg(long, env = "AUDIO_COMPOSER_AGENT")]
    pub agent: Option<String>,
    /// Remote agent endpoint (implies --agent remote).
    #[arg(long, env = "AUDIO_COMPOSER_AGENT_ENDPOINT")]
    pub agent_endpoint: Option<String>,
    /// Parallel generation calls.
    #[arg(long, env = "AUDIO_COMPOSER_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long, env = "AUDIO_COMPOSER_SAMPLE_RATE")]
    pub sample_rate: Option<u32>,
    /// none, normalize or soft_clip.
    #[arg(long, env = "AUDIO_COMPOSER_LIMITER")]
    pub limiter: Option<Limiter>,
    /// pcm16 or float32.
    #[arg(long, env = "AUDIO_COMPOSER_WAV_FORMAT")]
    pub format: Option<WavFormat>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// The user's request; omit with --validate.
    #[arg(required_unless_present = "validate")]
    pub request: Option<String>,
    /// Validate an existing planner response or plan JSON instead.
    #[arg(long, value_name = "FILE")]
    pub validate: Option<PathBuf>,
    #[command(flatten)]
    pub planner: PlannerArgs,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Plan JSON, or a raw planner response.
    pub plan: PathBuf,
    /// Base seed for the per-step seeds.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub agent: AgentArgs,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    /// Resume this session, or create it under this id.
    #[arg(long)]
    pub session: Option<String>,
    /// Session store directory [default: sessions].
    #[arg(long, env = "AUDIO_COMPOSER_STORE_DIR")]
    pub store: Option<PathBuf>,
    /// Seed override for every turn.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub planner: PlannerArgs,
    #[command(flatten)]
    pub agent: AgentArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Listen address [default: 127.0.0.1:8080].
    #[arg(long, env = "AUDIO_COMPOSER_BIND")]
    pub bind: Option<String>,
    /// Session store directory [default: sessions].
    #[arg(long, env = "AUDIO_COMPOSER_STORE_DIR")]
    pub store: Option<PathBuf>,
    /// Serve static files (a web front end) from this directory.
    #[arg(long = "static", env = "AUDIO_COMPOSER_STATIC_DIR")]
    pub static_dir: Option<PathBuf>,
    #[command(flatten)]
    pub planner: PlannerArgs,
    #[command(flatten)]
    pub agent: AgentArgs,
}

#[derive(Debug, Args)]
pub struct TokenizeArgs {
    pub features: PathBuf,
    pub codebook: PathBuf,
    /// Token text output [default: <output-dir>/tokens.txt].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub manifest: PathBuf,
    /// Onset match tolerance, seconds.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    pub tolerance: f64,
}

/// `[mix]` table of the config file.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixSection {
    pub total_duration: Option<f64>,
    pub crossfade: Option<f64>,
    pub peak_ceiling: Option<f64>,
    pub limiter: Option<Limiter>,
    pub wav_format: Option<WavFormat>,
}

/// The config file schema.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub output_dir: Option<PathBuf>,
    pub store_dir: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
    pub bind: Option<String>,
    pub sample_rate: Option<u32>,
    pub workers: Option<usize>,
    pub template_variant: Option<TemplateVariant>,
    pub planner: Option<PlannerConfig>,
    pub agent: Option<AgentConfig>,
    pub mix: MixSection,
}

impl FileConfig {
    /// Parses the file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| io_fail(path, e))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).map_err(|e| Failure::new(exit::USAGE, format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut cfg.output_dir, &mut cfg.store_dir, &mut cfg.static_dir].into_iter().flatten() {
            fix(p);
        }
        if let Some(PlannerConfig { backend: crate::planner::BackendKind::Scripted { fixture }, .. }) = &mut cfg.planner {
            fix(fixture);
        }
        Ok(cfg)
    }
}

struct Context {
    json: bool,
    file: FileConfig,
    output_dir: PathBuf,
}

impl Context {
    fn out_path(&self, name: &str) -> Result<PathBuf, Failure> {
        std::fs::create_dir_all(&self.output_dir).map_err(|e| io_fail(&self.output_dir, e))?;
        Ok(self.output_dir.join(name))
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, Failure> {
        let path = self.out_path(name)?;
        write_atomic(&path, bytes).map_err(|e| io_fail(&path, e))?;
        Ok(path)
    }

    fn emit_json<T: Serialize>(&self, value: &T) {
        println!("{}", serde_json::to_string_pretty(value).expect("serializable output"));
    }

    fn planner(&self, args: &PlannerArgs) -> Result<(Planner, String), Failure> {
        let config = match (&args.fixture, &args.endpoint) {
            (Some(f), _) => PlannerConfig::scripted(f),
            (None, Some(endpoint)) => {
                let model = args
                    .model
                    .clone()
                    .ok_or_else(|| Failure::new(exit::USAGE, "--endpoint needs --model"))?;
                PlannerConfig::http_chat(endpoint, model)
            }
            (None, None) => self.file.planner.clone().ok_or_else(|| {
                Failure::new(exit::USAGE, "no planner configured: pass --fixture, --endpoint/--model, or set [planner]")
            })?,
        };
        let label = match &config.backend {
            crate::planner::BackendKind::Scripted { fixture } => format!("scripted:{}", fixture.display()),
            crate::planner::BackendKind::HttpChat { model, .. } => format!("http_chat:{model}"),
        };
        Ok((Planner::from_config(&config).map_err(planner_fail)?, label))
    }

    fn variant(&self, args: &PlannerArgs) -> TemplateVariant {
        args.variant.or(self.file.template_variant).unwrap_or_default()
    }

    fn duration(&self, args: &PlannerArgs) -> f64 {
        args.duration.or(self.file.mix.total_duration).unwrap_or(MixConfig::default().total_duration)
    }

    fn agent(&self, args: &AgentArgs) -> Result<AgentConfig, Failure> {
        let kind = args.agent.as_deref().or(if args.agent_endpoint.is_some() { Some("remote") } else { None });
        match kind {
            None => Ok(self.file.agent.clone().unwrap_or_default()),
            Some("stub") => Ok(AgentConfig::Stub),
            Some("remote") => {
                let mut remote = match &self.file.agent {
                    Some(AgentConfig::Remote(r)) => r.clone(),
                    _ => RemoteConfig::default(),
                };
                if let Some(e) = &args.agent_endpoint {
                    remote.endpoint = e.clone();
                }
                Ok(AgentConfig::Remote(remote))
            }
            Some(other) => Err(Failure::new(exit::USAGE, format!("unknown agent `{other}` (expected stub or remote)"))),
        }
    }

    fn workers(&self, args: &AgentArgs) -> usize {
        args.workers.or(self.file.workers).unwrap_or(1).max(1)
    }

    fn mix_config(&self, args: &AgentArgs, total_duration: f64) -> MixConfig {
        let d = MixConfig::default();
        let m = &self.file.mix;
        MixConfig {
            total_duration,
            sample_rate: args.sample_rate.or(self.file.sample_rate).unwrap_or(d.sample_rate),
            crossfade: m.crossfade.unwrap_or(d.crossfade),
            peak_ceiling: m.peak_ceiling.unwrap_or(d.peak_ceiling),
            limiter: args.limiter.or(m.limiter).unwrap_or(d.limiter),
        }
    }

    fn wav_format(&self, args: &AgentArgs) -> WavFormat {
        args.format.or(self.file.mix.wav_format).unwrap_or_default()
    }

    fn store_dir(&self, flag: &Option<PathBuf>) -> PathBuf {
        flag.clone().or_else(|| self.file.store_dir.clone()).unwrap_or_else(|| PathBuf::from("sessions"))
    }

    fn engine(&self, planner: &PlannerArgs, agent: &AgentArgs, store: &Option<PathBuf>) -> Result<Engine, Failure> {
        let (p, label) = self.planner(planner)?;
        let store = SessionStore::open(self.store_dir(store)).map_err(session_fail)?;
        Ok(Engine::new(store, p, self.agent(agent)?.build()).with_workers(self.workers(agent)).with_planner_label(label))
    }

    fn session_config(&self, planner: &PlannerArgs, agent: &AgentArgs) -> SessionConfig {
        let duration = self.duration(planner);
        let mix = self.mix_config(agent, duration);
        SessionConfig {
            total_duration: duration,
            template_variant: self.variant(planner),
            sample_rate: mix.sample_rate,
            limiter: mix.limiter,
            crossfade: mix.crossfade,
            peak_ceiling: mix.peak_ceiling,
            wav_format: self.wav_format(agent),
        }
    }
}

fn print_report(report: &ValidationReport) {
    if report.valid {
        println!("plan is valid");
    }
    for v in &report.violations {
        println!("{}: {}", v.rule, v.message);
    }
    for n in &report.notes {
        println!("note: {}", n.message);
    }
}

fn print_plan(plan: &Plan) {
    for (i, s) in plan.steps.iter().enumerate() {
        let vol = s.volume.map(|v| format!(" @ {v} LUFS")).unwrap_or_default();
        println!("  {}. [{:>6.2} - {:>6.2}] {}{vol}", i + 1, s.start_time, s.end_time, s.description);
    }
}

/// Reads a plan from JSON (as written by `plan`) or a raw planner response.
fn load_plan(path: &Path, total_duration: f64) -> Result<Plan, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| io_fail(path, e))?;
    if let Ok(plan) = Plan::from_json(&text) {
        return Ok(plan);
    }
    parse_plan_response(&text, total_duration).map_err(|e| Failure::new(exit::PARSE, format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct PlanOutput<'a> {
    valid: bool,
    attempts: u32,
    plan: Option<&'a Plan>,
    validation: Option<&'a ValidationReport>,
    plan_path: Option<PathBuf>,
}

fn cmd_plan(ctx: &Context, args: &PlanArgs) -> CmdResult {
    let duration = ctx.duration(&args.planner);
    let (plan, report, raw, attempts) = if let Some(file) = &args.validate {
        let plan = load_plan(file, duration)?;
        let report = validate_plan(&plan);
        (Some(plan), Some(report), None, 0)
    } else {
        let (planner, _) = ctx.planner(&args.planner)?;
        let template = PromptTemplate::for_variant(ctx.variant(&args.planner)).with_total_duration(duration);
        let request = args.request.as_deref().unwrap_or_default();
        match planner.plan_from_request(&template, &[], request, duration) {
            Ok(o) => (Some(o.plan), Some(o.report), Some(o.raw_response), o.attempts),
            Err(PlannerError::PlanRejected { raw_response, plan, .. }) => {
                let report = plan.as_ref().map(validate_plan);
                (plan, report, Some(raw_response), 2)
            }
            Err(e) => return Err(planner_fail(e)),
        }
    };
    if let Some(raw) = &raw {
        ctx.write("response.txt", raw.as_bytes())?;
    }
    let plan_path = match &plan {
        Some(p) => Some(ctx.write("plan.json", p.to_json().as_bytes())?),
        None => None,
    };
    if let Some(r) = &report {
        ctx.write("validation.json", &serde_json::to_vec_pretty(r).expect("report json"))?;
    }
    let valid = report.as_ref().is_some_and(|r| r.valid);
    if ctx.json {
        ctx.emit_json(&PlanOutput { valid, attempts, plan: plan.as_ref(), validation: report.as_ref(), plan_path });
    } else {
        match (&plan, &report) {
            (Some(p), Some(r)) => {
                print_plan(p);
                print_report(r);
            }
            _ => println!("planner response did not parse after a corrective retry"),
        }
        if let Some(p) = plan_path {
            println!("wrote {}", p.display());
        }
    }
    Ok(if valid { exit::OK } else { exit::INVALID_PLAN })
}

fn cmd_render(ctx: &Context, args: &RenderArgs) -> CmdResult {
    let plan = load_plan(&args.plan, ctx.file.mix.total_duration.unwrap_or(MixConfig::default().total_duration))?;
    let report = validate_plan(&plan);
    if !report.valid {
        if !ctx.json {
            print_report(&report);
        }
        return Err(Failure::new(exit::INVALID_PLAN, "refusing to render an invalid plan"));
    }
    let config = ctx.mix_config(&args.agent, plan.total_duration);
    let agent = ctx.agent(&args.agent)?.build();
    let seeds = render_seeds(args.seed, plan.steps.len());
    let options = GenerationOptions { workers: ctx.workers(&args.agent), cache: None };
    let (clip, mix) = render_plan(&plan, agent.as_ref(), &seeds, &config, options).map_err(compose_fail)?;
    let wav = ctx.out_path("mix.wav")?;
    write_wav_file(&wav, &clip, ctx.wav_format(&args.agent)).map_err(|e| io_fail(&wav, e))?;
    let report_path = ctx.write("mix_report.json", &serde_json::to_vec_pretty(&mix).expect("report json"))?;
    if ctx.json {
        ctx.emit_json(&serde_json::json!({
            "audio": wav, "report": report_path, "seeds": seeds, "mix": mix,
        }));
    } else {
        println!(
            "wrote {} ({:.3} s at {} Hz, {} LUFS)",
            wav.display(),
            clip.duration_secs(),
            clip.sample_rate(),
            fmt_db(mix.output.integrated_loudness)
        );
    }
    Ok(exit::OK)
}

fn fmt_db(v: f64) -> String {
    if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.2}")
    }
}

#[derive(Serialize)]
struct TurnOutput<'a> {
    session: &'a str,
    index: usize,
    status: TurnStatus,
    attempts: u32,
    plan: Option<&'a Plan>,
    error: Option<&'a str>,
    audio: Option<&'a Path>,
}

fn print_turn(ctx: &Context, session: &str, turn: &Turn) {
    if ctx.json {
        let out = TurnOutput {
            session,
            index: turn.index(),
            status: turn.status(),
            attempts: turn.record.attempts,
            plan: turn.plan.as_ref(),
            error: turn.record.error.as_deref(),
            audio: turn.audio_path.as_deref(),
        };
        println!("{}", serde_json::to_string(&out).expect("turn json"));
    } else {
        let status = serde_json::to_value(turn.status()).expect("status json");
        println!("turn {}: {}", turn.index(), status.as_str().unwrap_or_default());
        if let Some(p) = &turn.plan {
            print_plan(p);
        }
        if let Some(e) = &turn.record.error {
            println!("  error: {e}");
        }
        if let Some(a) = &turn.audio_path {
            println!("  audio: {}", a.display());
        }
    }
    let _ = std::io::stdout().flush();
}

fn cmd_chat(ctx: &Context, args: &ChatArgs) -> CmdResult {
    let engine = ctx.engine(&args.planner, &args.agent, &args.store)?;
    let id = match &args.session {
        Some(id) if engine.store().exists(id) => id.clone(),
        other => engine
            .create_session(ctx.session_config(&args.planner, &args.agent), other.as_deref())
            .map_err(session_fail)?
            .settings
            .id,
    };
    let turns = engine.store().turn_count(&id).map_err(session_fail)?;
    if ctx.json {
        println!("{}", serde_json::json!({"session": id, "turns": turns}));
    } else {
        println!("session {id} ({turns} turns); type a request, /quit to exit");
    }
    let _ = std::io::stdout().flush();
    for line in std::io::stdin().lock().lines() {
        let line = line.map_err(|e| Failure::new(exit::IO, format!("stdin: {e}")))?;
        let message = line.trim();
        if message.is_empty() {
            continue;
        }
        if message == "/quit" {
            break;
        }
        match engine.take_turn(&id, message, TurnOptions { seed: args.seed }) {
            Ok(turn) => print_turn(ctx, &id, &turn),
            // The turn was not recorded; the user can retry.
            Err(e) => eprintln!("error: {e}"),
        }
    }
    Ok(exit::OK)
}

fn cmd_serve(ctx: &Context, args: &ServeArgs) -> CmdResult {
    let engine = Arc::new(ctx.engine(&args.planner, &args.agent, &args.store)?);
    let bind = args.bind.clone().or_else(|| ctx.file.bind.clone()).unwrap_or_else(|| "127.0.0.1:8080".into());
    let static_dir = args.static_dir.clone().or_else(|| ctx.file.static_dir.clone());
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::new(exit::IO, format!("runtime: {e}")))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&bind)
            .await
            .map_err(|e| Failure::new(exit::IO, format!("bind {bind}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| Failure::new(exit::IO, e))?;
        if ctx.json {
            println!("{}", serde_json::json!({"listening": format!("http://{addr}")}));
        } else {
            println!("listening on http://{addr}");
        }
        let _ = std::io::stdout().flush();
        http::serve(listener, http::router(engine, static_dir), http::shutdown_signal())
            .await
            .map_err(|e| Failure::new(exit::IO, format!("server: {e}")))
    })?;
    Ok(exit::OK)
}

fn cmd_loudness(ctx: &Context, wav: &Path) -> CmdResult {
    let clip = read_wav_file(wav).map_err(|e| io_fail(wav, e))?;
    let m = measure_loudness(&clip);
    if ctx.json {
        ctx.emit_json(&m);
    } else {
        let suffix = if m.gated { "" } else { " (ungated: shorter than one 400 ms block)" };
        println!("{} LUFS{suffix}", fmt_db(m.integrated_loudness));
    }
    Ok(exit::OK)
}

fn cmd_tokenize(ctx: &Context, args: &TokenizeArgs) -> CmdResult {
    let token_fail = |p: &Path, e: crate::tokens::TokenError| Failure::new(exit::TOKEN, format!("{}: {e}", p.display()));
    let features = read_features(&args.features).map_err(|e| token_fail(&args.features, e))?;
    let codebook = read_codebook(&args.codebook).map_err(|e| token_fail(&args.codebook, e))?;
    let tokens = quantize(&features, &codebook).map_err(|e| Failure::new(exit::TOKEN, e))?;
    let text = encode_token_string(&tokens.indices);
    let path = match &args.out {
        Some(p) => {
            write_atomic(p, text.as_bytes()).map_err(|e| io_fail(p, e))?;
            p.clone()
        }
        None => ctx.write("tokens.txt", text.as_bytes())?,
    };
    if ctx.json {
        ctx.emit_json(&serde_json::json!({"tokens": tokens.indices.len(), "frame_rate": tokens.frame_rate, "out": path}));
    } else {
        println!("{} tokens at {} Hz -> {}", tokens.indices.len(), tokens.frame_rate, path.display());
    }
    Ok(exit::OK)
}

fn cmd_eval(ctx: &Context, args: &EvalArgs) -> CmdResult {
    let report = evaluate_manifest(&args.manifest, &OnsetConfig::default(), args.tolerance)
        .map_err(|e| Failure::new(exit::METRICS, e))?;
    let table = report.to_table();
    ctx.write("eval_report.json", &serde_json::to_vec_pretty(&report).expect("report json"))?;
    ctx.write("eval_report.txt", table.as_bytes())?;
    if ctx.json {
        ctx.emit_json(&report);
    } else {
        print!("{table}");
    }
    Ok(exit::OK)
}

fn cmd_selftest(ctx: &Context, seed: u64) -> CmdResult {
    let report = run_selftest(seed);
    if ctx.json {
        ctx.emit_json(&report);
    } else {
        for c in &report.checks {
            println!("{} {}/{}: {}", if c.passed { "PASS" } else { "FAIL" }, c.suite, c.name, c.detail);
        }
        println!("{} checks, {} failed", report.checks.len(), report.failures());
    }
    Ok(if report.passed() { exit::OK } else { exit::SELFTEST })
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_env("RUST_LOG").try_init();
}

/// Runs a parsed command line and returns the exit code.
pub fn execute(cli: Cli) -> u8 {
    init_logging(cli.verbose);
    let result = (|| {
        let file = match &cli.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let output_dir = cli.output_dir.clone().or_else(|| file.output_dir.clone()).unwrap_or_else(|| "out".into());
        let ctx = Context { json: cli.json, file, output_dir };
        match &cli.command {
            Command::Plan(a) => cmd_plan(&ctx, a),
            Command::Render(a) => cmd_render(&ctx, a),
            Command::Chat(a) => cmd_chat(&ctx, a),
            Command::Serve(a) => cmd_serve(&ctx, a),
            Command::Loudness { wav } => cmd_loudness(&ctx, wav),
            Command::Tokenize(a) => cmd_tokenize(&ctx, a),
            Command::Eval(a) => cmd_eval(&ctx, a),
            Command::Selftest { seed } => cmd_selftest(&ctx, *seed),
        }
    })();
    match result {
        Ok(code) => code,
        Err(f) => {
            if cli.json {
                println!("{}", serde_json::json!({"error": f.message, "exit_code": f.code}));
            }
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

/// Entry point for the binary.
pub fn run() -> ExitCode {
    match Cli::try_parse() {
        Ok(cli) => ExitCode::from(execute(cli)),
        Err(e) => {
            let _ = e.print();
            ExitCode::from(if e.use_stderr() { exit::USAGE } else { exit::OK })
        }
    }
}
