//! The `mapguide` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::parser::ValueSource;
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::ambiguity::{inexplicability, similar_audit, similar_moves};
use crate::belief::{compliant, replan_loop, Execution, Guidance};
use crate::dialogue::{AgentKind, InefficiencyConfig, Templates};
use crate::domain::{bundled, generate_map, Act, GenerateParams, MapSpec, TaskModel};
use crate::planning::Cost;
use crate::session::service::{serve, ServiceConfig, SystemClock};
use crate::session::{parse_log, replay, AgentProfile, AgentSettings, GuidanceSpec, WindowSpec};
use crate::simulation::{simulate_batch, Column, UserModel};

#[derive(Parser, Debug)]
#[command(name = "mapguide", version, about = "Instruction-giving agents for the bike-collection map task")]
pub struct Cli {
    /// TOML file whose table named after the subcommand supplies flag defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Print every flag of every subcommand as JSON and exit.
    #[arg(long)]
    pub dump_flags: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Show the route an agent guides an obedient user along, with its
    /// ambiguous steps and inefficient stretches.
    Plan(PlanArgs),
    /// Generate a random map document.
    Genmap(GenmapArgs),
    /// Run seeded batches of simulated users and report metric means.
    Simulate(SimulateArgs),
    /// Serve live sessions over HTTP and WebSocket.
    Serve(ServeArgs),
    /// Re-run a session log and compare the utterances.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentArg {
    Responsive,
    Predictive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GuidanceArg {
    Planner,
    Policy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PlanFormat {
    Text,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Csv,
    Text,
}

fn parse_delta(s: &str) -> Result<Cost, String> {
    let c: Cost = s.parse().map_err(|e| format!("{e}"))?;
    if c <= Cost::ZERO {
        return Err("delta must be positive".into());
    }
    Ok(c)
}

fn parse_probability(s: &str) -> Result<f64, String> {
    let p: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if !(0.0..=1.0).contains(&p) {
        return Err("must lie in [0, 1]".into());
    }
    Ok(p)
}

fn parse_count(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(_) => Err(format!("`{s}` is not a whole number")),
    }
}

#[derive(Args, Debug)]
pub struct WindowArgs {
    /// Steps before the current one the inefficiency check looks at.
    #[arg(long, default_value_t = 2, value_name = "STEPS")]
    pub look_back: usize,
    /// Steps after the current one the inefficiency check looks at.
    #[arg(long, default_value_t = 2, value_name = "STEPS")]
    pub look_ahead: usize,
}

impl WindowArgs {
    fn spec(&self) -> WindowSpec {
        WindowSpec { look_back: self.look_back, look_ahead: self.look_ahead }
    }
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    /// Map file, or the name of a bundled map.
    #[arg(long)]
    pub map: String,
    #[arg(long, value_enum, default_value_t = AgentArg::Predictive)]
    pub agent: AgentArg,
    /// Weight of each ambiguous turn for the predictive agent.
    #[arg(long, default_value = "1", value_parser = parse_delta)]
    pub delta: Cost,
    #[command(flatten)]
    pub window: WindowArgs,
    #[arg(long, value_enum, default_value_t = PlanFormat::Text)]
    pub format: PlanFormat,
    /// Write here instead of standard output.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Also expand the agent's policy and write it to this file.
    #[arg(long, value_name = "FILE")]
    pub policy_out: Option<PathBuf>,
    /// Deviations the written policy covers.
    #[arg(long, default_value_t = 2)]
    pub budget: usize,
    /// Print each action's look-alike moves instead of a plan.
    #[arg(long)]
    pub audit: bool,
    /// Print the grounded planning problem instead of a plan.
    #[arg(long, conflicts_with = "audit")]
    pub dump_problem: bool,
}

#[derive(Args, Debug)]
pub struct GenmapArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub landmarks: usize,
    #[arg(long, default_value_t = 5)]
    pub bikes: usize,
    /// Minimum number of junctions with two neighbours of one type.
    #[arg(long = "ambiguity-quota", default_value_t = 4)]
    pub ambiguity: usize,
    /// Minimum number of bikes visible from a neighbouring landmark.
    #[arg(long = "visibility-quota", default_value_t = 1)]
    pub visibility: usize,
    /// Map name; `generated-<seed>` by default.
    #[arg(long)]
    pub name: Option<String>,
    /// Write here instead of standard output.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Map file or bundled map name. Repeat for several maps.
    #[arg(long, required = true)]
    pub map: Vec<String>,
    /// Agents to run. Repeat for several; both by default.
    #[arg(long, value_enum)]
    pub agent: Vec<AgentArg>,
    /// Predictive weights, one column each. 1, 2 and 3 by default.
    #[arg(long, value_parser = parse_delta)]
    pub delta: Vec<Cost>,
    /// Episodes per column.
    #[arg(long, default_value = "1000", value_parser = parse_count)]
    pub n: usize,
    /// Probability that the simulated user follows an instruction.
    #[arg(long, default_value = "0.95", value_parser = parse_probability)]
    pub gamma: f64,
    /// Probability of waiting for a follow-up on an unambiguous instruction.
    #[arg(long, default_value = "0.5", value_parser = parse_probability)]
    pub hesitation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; all cores by default.
    #[arg(long, value_parser = parse_count)]
    pub jobs: Option<usize>,
    /// Policy lookup, as in the study, or online replanning.
    #[arg(long, value_enum, default_value_t = GuidanceArg::Policy)]
    pub guidance: GuidanceArg,
    /// Deviations a policy covers before falling back to replanning.
    #[arg(long, default_value_t = 2)]
    pub budget: usize,
    #[command(flatten)]
    pub window: WindowArgs,
    #[arg(long, value_enum, default_value_t = ReportFormat::Csv)]
    pub format: ReportFormat,
    /// Write here instead of standard output.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Utterance templates replacing the built-in wording.
    #[arg(long, value_name = "FILE")]
    pub templates: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    /// Directory of map files, served next to the bundled maps.
    #[arg(long, value_name = "DIR")]
    pub maps_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// TOML agent settings used when a session request names no agent.
    #[arg(long, value_name = "FILE")]
    pub agent_config: Option<PathBuf>,
    /// Directory for per-session log files.
    #[arg(long, value_name = "DIR")]
    pub log_dir: Option<PathBuf>,
    /// Directory of static client files.
    #[arg(long, value_name = "DIR")]
    pub static_dir: Option<PathBuf>,
    /// Directory of policy files written by `plan --policy-out`.
    #[arg(long, value_name = "DIR")]
    pub policy_dir: Option<PathBuf>,
    /// Utterance templates replacing the built-in wording.
    #[arg(long, value_name = "FILE")]
    pub templates: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    /// Session log to re-run.
    #[arg(long, value_name = "FILE")]
    pub log: PathBuf,
    /// Where to look for the map when the log does not embed it.
    #[arg(long, value_name = "DIR")]
    pub maps_dir: Option<PathBuf>,
}

/// Failure with its exit status.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Runs the command line and returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match parse(&argv) {
        Ok(cli) => cli,
        Err(ParseOutcome::Exit(text)) => {
            let _ = write!(out, "{text}");
            return 0;
        }
        Err(ParseOutcome::Error(e)) => {
            let _ = writeln!(err, "{}", e.message().trim_end());
            return e.code();
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.code()
        }
    }
}

enum ParseOutcome {
    /// Help or version text.
    Exit(String),
    Error(CliError),
}

fn clap_error(e: clap::Error) -> ParseOutcome {
    use clap::error::ErrorKind;
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ParseOutcome::Exit(e.render().to_string()),
        _ => ParseOutcome::Error(CliError::Usage(e.render().to_string())),
    }
}

/// Parses `argv`, filling flags the command line leaves out from the
/// `--config` file.
fn parse(argv: &[OsString]) -> Result<Cli, ParseOutcome> {
    let cmd = Cli::command();
    // a first pass that tolerates missing flags, which the file may supply
    let lenient = cmd.clone().mut_subcommands(|s| s.mut_args(|a| a.required(false)));
    let matches = lenient.try_get_matches_from(argv).map_err(clap_error)?;
    let config = matches.get_one::<PathBuf>("config").cloned();
    let (Some(path), Some((sub, sub_matches))) = (config, matches.subcommand()) else {
        return cmd.try_get_matches_from(argv).and_then(|m| Cli::from_arg_matches(&m)).map_err(clap_error);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| ParseOutcome::Error(CliError::Usage(format!("cannot read {}: {e}", path.display()))))?;
    let doc: toml::Table = toml::from_str(&text)
        .map_err(|e| ParseOutcome::Error(CliError::Usage(format!("{}: {e}", path.display()))))?;
    let Some(table) = doc.get(sub) else {
        return cmd.try_get_matches_from(argv).and_then(|m| Cli::from_arg_matches(&m)).map_err(clap_error);
    };
    let table = table.as_table().ok_or_else(|| {
        ParseOutcome::Error(CliError::Usage(format!("{}: `{sub}` must be a table", path.display())))
    })?;
    let sub_cmd = cmd.find_subcommand(sub).expect("matched subcommand exists");
    let mut extra: Vec<OsString> = Vec::new();
    for (key, value) in table {
        let arg = sub_cmd
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| ParseOutcome::Error(CliError::Usage(format!("{}: unknown flag `{key}` for {sub}", path.display()))))?;
        if sub_matches.value_source(arg.get_id().as_str()) == Some(ValueSource::CommandLine) {
            continue;
        }
        let values = match value {
            toml::Value::Array(items) => items.clone(),
            v => vec![v.clone()],
        };
        for v in values {
            match v {
                toml::Value::Boolean(true) => extra.push(format!("--{key}").into()),
                toml::Value::Boolean(false) => {}
                toml::Value::String(s) => extra.extend([format!("--{key}").into(), s.into()]),
                other => extra.extend([format!("--{key}").into(), other.to_string().into()]),
            }
        }
    }
    let at = argv.iter().skip(1).position(|a| a == sub).map(|i| i + 2).expect("subcommand is on the command line");
    let merged: Vec<OsString> = argv[..at].iter().cloned().chain(extra).chain(argv[at..].iter().cloned()).collect();
    let matches = cmd.try_get_matches_from(merged).map_err(clap_error)?;
    Cli::from_arg_matches(&matches).map_err(clap_error)
}

#[derive(Serialize)]
pub struct FlagInfo {
    pub long: String,
    pub help: String,
    pub default: Vec<String>,
    pub required: bool,
    pub repeatable: bool,
}

/// Flags of each subcommand, `global` for the top level.
pub fn flag_dump() -> BTreeMap<String, Vec<FlagInfo>> {
    let cmd = Cli::command();
    let describe = |c: &clap::Command| -> Vec<FlagInfo> {
        c.get_arguments()
            .filter_map(|a| {
                let long = a.get_long()?;
                Some(FlagInfo {
                    long: long.to_string(),
                    help: a.get_help().map(|h| h.to_string()).unwrap_or_default(),
                    default: a.get_default_values().iter().map(|v| v.to_string_lossy().into_owned()).collect(),
                    required: a.is_required_set(),
                    repeatable: matches!(a.get_action(), clap::ArgAction::Append),
                })
            })
            .filter(|f| f.long != "help" && f.long != "version")
            .collect()
    };
    let mut out = BTreeMap::new();
    out.insert("global".to_string(), describe(&cmd));
    for sub in cmd.get_subcommands() {
        out.insert(sub.get_name().to_string(), describe(sub));
    }
    out
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    if cli.dump_flags {
        let text = serde_json::to_string_pretty(&flag_dump()).expect("flag dump serializes");
        return writeln!(out, "{text}").map_err(runtime);
    }
    match cli.command {
        Some(Command::Plan(a)) => plan(a, out),
        Some(Command::Genmap(a)) => genmap(a, out),
        Some(Command::Simulate(a)) => simulate(a, out),
        Some(Command::Serve(a)) => serve_cmd(a, out),
        Some(Command::Replay(a)) => replay_cmd(a, out),
        None => Err(CliError::Usage("no subcommand given; see --help".into())),
    }
}

/// Writes `text` to `path` through a temporary file in the same directory,
/// so a failed run never leaves a partial file, or to `out` without a path.
pub fn write_output(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), CliError> {
    let Some(path) = path else {
        return out.write_all(text.as_bytes()).map_err(runtime);
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    tmp.write_all(text.as_bytes()).map_err(runtime)?;
    tmp.persist(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    Ok(())
}

fn load_templates(path: &Path) -> Result<Templates, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    Templates::parse(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// A map file path, or a bundled map name.
pub fn load_map(name: &str) -> Result<MapSpec, CliError> {
    let path = Path::new(name);
    if path.extension().is_some_and(|e| e == "toml") || path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{name}: {e}")))?;
        return MapSpec::from_toml(&text).map_err(|e| CliError::Validation(format!("{name}: {e}")));
    }
    bundled::by_name(name).ok_or_else(|| CliError::Validation(format!("`{name}` is neither a map file nor a bundled map")))
}

fn agent_kind(agent: AgentArg, delta: Cost) -> AgentKind {
    match agent {
        AgentArg::Responsive => AgentKind::Responsive,
        AgentArg::Predictive => AgentKind::Predictive { delta },
    }
}

#[derive(Serialize)]
struct PlanStep {
    action: String,
    similar: Vec<String>,
}

#[derive(Serialize)]
struct PlanWitness {
    start: usize,
    end: usize,
    original: Vec<String>,
    original_cost: Cost,
    replacement: Vec<String>,
    replacement_cost: Cost,
}

#[derive(Serialize)]
struct PlanReport {
    map: String,
    agent: String,
    steps: Vec<PlanStep>,
    cost: Cost,
    inexplicability: usize,
    observation_replans: usize,
    witnesses: Vec<PlanWitness>,
}

fn plan(a: PlanArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let map = load_map(&a.map)?;
    let task = Arc::new(TaskModel::compile(&map));
    if a.audit {
        return write_output(a.out.as_deref(), &similar_audit(&task), out);
    }
    if a.dump_problem {
        return write_output(a.out.as_deref(), &task.problem.dump(), out);
    }
    let mut settings = AgentSettings::new(agent_kind(a.agent, a.delta));
    settings.window = a.window.spec();
    if let Some(path) = &a.policy_out {
        let guided = AgentSettings { guidance: GuidanceSpec::Policy { budget: a.budget }, ..settings.clone() };
        let profile = AgentProfile::new(task.clone(), guided, Arc::new(Templates::default())).map_err(runtime)?;
        let policy = profile.policy.as_ref().expect("policy guidance builds a policy");
        write_output(Some(path), &policy.to_ndjson(&task), out)?;
    }
    let profile = AgentProfile::new(task.clone(), settings, Arc::new(Templates::default())).map_err(runtime)?;
    let (exec, _) = Execution::start(profile.planner.clone(), Guidance::Planner).map_err(runtime)?;
    let run = replan_loop(exec, compliant, 10_000).map_err(runtime)?;
    let route: Vec<Act> = run.history.iter().copied().filter(|a| !matches!(a, Act::Find { .. })).collect();
    let name = |acts: &[Act]| acts.iter().map(|&x| task.label(x).to_string()).collect::<Vec<_>>();
    let steps = route
        .iter()
        .map(|&x| PlanStep { action: task.label(x).to_string(), similar: name(&similar_moves(&task, x)) })
        .collect();
    let start = task.initial_state();
    let mut witnesses: Vec<PlanWitness> = Vec::new();
    let config: InefficiencyConfig = a.window.spec().into();
    for x in 0..route.len() {
        if let Some(w) = profile.analyzer.detect(&start, &route, x, config) {
            if !witnesses.iter().any(|o| (o.start, o.end) == (w.start, w.end)) {
                witnesses.push(PlanWitness {
                    start: w.start,
                    end: w.end,
                    original: name(&w.original),
                    original_cost: w.original_cost,
                    replacement: name(&w.replacement),
                    replacement_cost: w.replacement_cost,
                });
            }
        }
    }
    let report = PlanReport {
        map: map.name.clone(),
        agent: profile.settings.agent.name(),
        steps,
        cost: route.iter().map(|&x| profile.analyzer.cost(x)).sum(),
        inexplicability: inexplicability(&task, &route),
        observation_replans: run.stats.observation,
        witnesses,
    };
    let text = match a.format {
        PlanFormat::Json => serde_json::to_string_pretty(&report).expect("plan report serializes") + "\n",
        PlanFormat::Text => plan_text(&report),
    };
    write_output(a.out.as_deref(), &text, out)
}

fn plan_text(r: &PlanReport) -> String {
    use std::fmt::Write as _;
    let mut s = format!("map {} agent {}\n", r.map, r.agent);
    let width = r.steps.iter().map(|p| p.action.len()).max().unwrap_or(0);
    for (i, p) in r.steps.iter().enumerate() {
        let mut line = format!("{:>3}  {:<width$}", i + 1, p.action);
        if !p.similar.is_empty() {
            let _ = write!(line, "  ambiguous with {}", p.similar.join(", "));
        }
        s.push_str(line.trim_end());
        s.push('\n');
    }
    let _ = writeln!(s, "steps {}  cost {}  U {}  replans {}", r.steps.len(), r.cost, r.inexplicability, r.observation_replans);
    for w in &r.witnesses {
        let _ = writeln!(
            s,
            "inefficient steps {}-{}: {} (cost {}) could be {} (cost {})",
            w.start + 1,
            w.end,
            w.original.join(" "),
            w.original_cost,
            if w.replacement.is_empty() { "nothing".to_string() } else { w.replacement.join(" ") },
            w.replacement_cost
        );
    }
    s
}

fn genmap(a: GenmapArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let params = GenerateParams {
        landmarks: a.landmarks,
        bikes: a.bikes,
        ambiguity_quota: a.ambiguity,
        visibility_quota: a.visibility,
    };
    let mut map = generate_map(a.seed, params).map_err(|e| CliError::Validation(e.to_string()))?;
    if let Some(name) = a.name {
        map.name = name;
    }
    write_output(a.out.as_deref(), &map.to_toml(), out)
}

fn simulate(a: SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let agents = if a.agent.is_empty() { vec![AgentArg::Responsive, AgentArg::Predictive] } else { a.agent.clone() };
    let deltas = if a.delta.is_empty() { vec![Cost::units(1), Cost::units(2), Cost::units(3)] } else { a.delta.clone() };
    let guidance = match a.guidance {
        GuidanceArg::Planner => GuidanceSpec::Planner,
        GuidanceArg::Policy => GuidanceSpec::Policy { budget: a.budget },
    };
    let templates = Arc::new(match &a.templates {
        Some(path) => load_templates(path)?,
        None => Templates::default(),
    });
    let mut columns = Vec::new();
    for name in &a.map {
        let map = load_map(name)?;
        let task = Arc::new(TaskModel::compile(&map));
        let prefix = if a.map.len() > 1 { format!("{}: ", map.name) } else { String::new() };
        let mut kinds = Vec::new();
        for agent in &agents {
            match agent {
                AgentArg::Responsive => kinds.push(AgentKind::Responsive),
                AgentArg::Predictive => kinds.extend(deltas.iter().map(|&delta| AgentKind::Predictive { delta })),
            }
        }
        for kind in kinds {
            let mut settings = AgentSettings::new(kind);
            settings.guidance = guidance;
            settings.window = a.window.spec();
            let profile = AgentProfile::new(task.clone(), settings, templates.clone()).map_err(runtime)?;
            columns.push(Column { label: format!("{prefix}{}", column_label(kind)), profile: Arc::new(profile) });
        }
    }
    let user = UserModel { gamma: a.gamma, hesitation: a.hesitation, ..Default::default() };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = a.jobs {
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(runtime)?;
    let mut outcome = pool.install(|| simulate_batch(&columns, a.n, &user, a.seed)).map_err(runtime)?;
    outcome.report.meta.push(("maps".into(), a.map.join(" ")));
    let text = match a.format {
        ReportFormat::Csv => outcome.report.to_csv(),
        ReportFormat::Text => outcome.report.to_text(),
    };
    write_output(a.out.as_deref(), &text, out)
}

/// Column heading for an agent, e.g. `predictive d=1`.
pub fn column_label(kind: AgentKind) -> String {
    match kind {
        AgentKind::Responsive => "responsive".into(),
        AgentKind::Predictive { delta } => format!("predictive d={delta}"),
    }
}

/// Map files in `dir` keyed by map name, on top of the bundled maps.
pub fn map_registry(dir: Option<&Path>) -> Result<BTreeMap<String, MapSpec>, CliError> {
    let mut maps: BTreeMap<String, MapSpec> = ["fig1", "fig2", "fig3", "line"]
        .into_iter()
        .chain(bundled::STUDY.iter().map(|(n, _)| *n))
        .map(|n| (n.to_string(), bundled::by_name(n).expect("bundled")))
        .collect();
    if let Some(dir) = dir {
        let entries = std::fs::read_dir(dir).map_err(|e| CliError::Validation(format!("{}: {e}", dir.display())))?;
        let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for p in paths.into_iter().filter(|p| p.extension().is_some_and(|e| e == "toml")) {
            let map = load_map(&p.to_string_lossy())?;
            maps.insert(map.name.clone(), map);
        }
    }
    Ok(maps)
}

fn serve_cmd(a: ServeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let maps = map_registry(a.maps_dir.as_deref())?;
    let mut config = ServiceConfig::new(maps);
    if let Some(path) = &a.agent_config {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        config.default_settings =
            toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    }
    if let Some(dir) = &a.policy_dir {
        config.load_policies(dir).map_err(CliError::Validation)?;
    }
    if let Some(path) = &a.templates {
        config.templates = load_templates(path)?;
    }
    config.log_dir = a.log_dir;
    config.static_dir = a.static_dir;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(runtime)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port)).await.map_err(runtime)?;
        let addr = listener.local_addr().map_err(runtime)?;
        writeln!(out, "listening on http://{addr}").map_err(runtime)?;
        out.flush().map_err(runtime)?;
        serve(listener, config, Arc::new(SystemClock::new())).await.map_err(runtime)
    })
}

fn replay_cmd(a: ReplayArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.log).map_err(|e| CliError::Validation(format!("{}: {e}", a.log.display())))?;
    let log = parse_log(&text).map_err(|e| CliError::Validation(format!("{}: {e}", a.log.display())))?;
    let maps = map_registry(a.maps_dir.as_deref())?;
    let report = replay(&log, |name| maps.get(name).cloned()).map_err(|e| CliError::Validation(e.to_string()))?;
    let show = |u: &Option<(u64, crate::dialogue::UtteranceKind, String)>| match u {
        Some((t, k, text)) => format!("{t} ms {k:?}: {text}"),
        None => "(nothing)".into(),
    };
    for d in &report.diffs {
        writeln!(out, "utterance {}:\n  logged   {}\n  replayed {}", d.index + 1, show(&d.logged), show(&d.replayed))
            .map_err(runtime)?;
    }
    if report.matches() {
        writeln!(out, "{} utterances reproduced", report.utterances).map_err(runtime)?;
        Ok(())
    } else {
        Err(CliError::Validation(format!("{} of {} utterances differ", report.diffs.len(), report.utterances)))
    }
}
