use std::io::{self, BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stagegate::checker::{Approver, CheckResult};
use stagegate::fixture::{scaffold, ScaffoldError};
use stagegate::gateway::{
    llm_driver, read_trace, replay, serve, DriverError, DriverOptions, EndpointConfig, ReplayError, ReplayOptions,
    Session, DEFAULT_STEP_BUDGET, STATE_DIR,
};
use stagegate::report::workspace_report;
use stagegate::workflow::{restore, ConfigError, EngineError, StateError, WorkflowState};
use stagegate::workspace::{load_workspace_config, open_engine, open_session, state_path, OpenError, OpenOptions};

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_ENV: u8 = 3;

#[derive(Parser)]
#[command(name = "stagegate", version, about = "Checker-gated verification workflows")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Workflow config [default: <workspace>/stagegate.yaml]
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Workspace directory
    #[arg(long, global = true, default_value = ".")]
    workspace: PathBuf,
    /// Additional stages to skip (must be skippable)
    #[arg(long, global = true, value_delimiter = ',')]
    skip: Vec<String>,
    /// Never prompt; manual gates then require their approval token
    #[arg(long, global = true)]
    non_interactive: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Scaffold the example workspace
    Init {
        dir: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Drive the workflow with an agent
    Run(RunArgs),
    /// Continue a run from the persisted state
    Resume(RunArgs),
    /// Run the checkers of the active (or named) stage once
    Check {
        #[arg(long)]
        stage: Option<String>,
    },
    /// Show stage progress and counters
    Status,
    /// Emit telemetry and label closure summary
    Report {
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Serve tool requests on stdin/stdout, one JSON object per line
    Serve,
}

#[derive(Args)]
struct RunArgs {
    /// scripted:<trace.jsonl>, endpoint[:<base url>] or none
    #[arg(long, default_value = "none")]
    agent: String,
    /// Maximum tool calls for this run
    #[arg(long, default_value_t = DEFAULT_STEP_BUDGET)]
    budget: usize,
    /// Where the endpoint driver logs its exchanges
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

enum Agent {
    Scripted(PathBuf),
    Endpoint(Option<String>),
    Manual,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<OpenError> for Failure {
    fn from(err: OpenError) -> Self {
        let code = match &err {
            OpenError::Config(_) | OpenError::State(StateError::DigestMismatch { .. }) => EXIT_CONFIG,
            _ => EXIT_ENV,
        };
        Failure::new(code, err.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(err: ConfigError) -> Self {
        Failure::new(EXIT_CONFIG, err.to_string())
    }
}

impl From<EngineError> for Failure {
    fn from(err: EngineError) -> Self {
        let code = match &err {
            EngineError::Checker(_) => EXIT_CONFIG,
            EngineError::State(StateError::DigestMismatch { .. }) => EXIT_CONFIG,
            _ => EXIT_ENV,
        };
        Failure::new(code, err.to_string())
    }
}

type Outcome = Result<u8, Failure>;

/// Asks on the terminal before a manual gate passes.
struct TerminalApprover;

impl Approver for TerminalApprover {
    fn approve(&self, stage: &str, prompt: &str) -> bool {
        eprint!("[{stage}] {prompt} [y/N] ");
        let _ = io::stderr().flush();
        let mut line = String::new();
        if io::stdin().lock().read_line(&mut line).is_err() {
            return false;
        }
        matches!(line.trim().to_ascii_lowercase().as_str(), "y" | "yes")
    }
}

fn parse_agent(spec: &str) -> Result<Agent, Failure> {
    if spec == "none" {
        return Ok(Agent::Manual);
    }
    if let Some(path) = spec.strip_prefix("scripted:") {
        if path.is_empty() {
            return Err(Failure::new(EXIT_CONFIG, "scripted agent needs a trace path"));
        }
        return Ok(Agent::Scripted(PathBuf::from(path)));
    }
    if spec == "endpoint" {
        return Ok(Agent::Endpoint(None));
    }
    if let Some(url) = spec.strip_prefix("endpoint:") {
        return Ok(Agent::Endpoint(Some(url.to_string())));
    }
    Err(Failure::new(
        EXIT_CONFIG,
        format!("unknown agent `{spec}`; expected scripted:<trace>, endpoint[:<url>] or none"),
    ))
}

impl Global {
    fn open_options(&self, require_state: bool, interactive_ok: bool) -> OpenOptions {
        let interactive = interactive_ok && !self.non_interactive && io::stdin().is_terminal();
        OpenOptions {
            config: self.config.clone(),
            skip: self.skip.clone(),
            require_state,
            interactive,
            approver: interactive.then(|| Box::new(TerminalApprover) as Box<dyn Approver>),
        }
    }
}

fn print_result(result: &CheckResult) {
    for m in result.messages() {
        println!("  {m}");
    }
}

fn finish_line(session: &Session) -> u8 {
    let status = session.engine().status();
    match status.current {
        None => {
            println!("workflow finished: {} stages", status.total);
            0
        }
        Some(name) => {
            println!("stopped at stage {}/{}: {name}", status.current_index + 1, status.total);
            EXIT_FAILED
        }
    }
}

fn cmd_run(global: &Global, args: &RunArgs, resume: bool) -> Outcome {
    let agent = parse_agent(&args.agent)?;
    let interactive_ok = matches!(agent, Agent::Manual);
    let mut session = open_session(&global.workspace, global.open_options(resume, interactive_ok))?;
    match agent {
        Agent::Scripted(path) => {
            let trace = read_trace(&path).map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
            let opts = ReplayOptions {
                resume: true,
                budget: Some(args.budget),
            };
            match replay(&trace, &mut session, &opts) {
                Ok(out) => {
                    if out.skipped > 0 {
                        println!("skipped {} steps of already completed stages", out.skipped);
                    }
                    println!("replayed {} steps", out.issued);
                    Ok(finish_line(&session))
                }
                Err(ReplayError::AssertionMismatch {
                    index,
                    tool,
                    detail,
                    response,
                }) => {
                    println!("trace step {index} ({tool}) diverged: expected {detail}");
                    if !response.message.is_empty() {
                        println!("{}", response.message);
                    }
                    finish_line(&session);
                    Ok(EXIT_FAILED)
                }
                Err(ReplayError::StepBudgetExhausted { budget }) => {
                    println!("step budget of {budget} exhausted");
                    finish_line(&session);
                    Ok(EXIT_FAILED)
                }
                Err(ReplayError::Engine(e)) => Err(e.into()),
            }
        }
        Agent::Endpoint(url) => {
            let endpoint = EndpointConfig::from_env(url.as_deref()).map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
            let trace = args
                .trace_out
                .clone()
                .unwrap_or_else(|| global.workspace.join(STATE_DIR).join("driver-trace.jsonl"));
            let opts = DriverOptions {
                budget: args.budget,
                trace: Some(trace),
            };
            match llm_driver(&endpoint, &mut session, &opts) {
                Ok(out) => {
                    println!("{} model replies, {} tool calls", out.steps, out.tool_calls);
                    Ok(finish_line(&session))
                }
                Err(DriverError::StepBudgetExhausted { budget }) => {
                    println!("step budget of {budget} exhausted");
                    finish_line(&session);
                    Ok(EXIT_FAILED)
                }
                Err(DriverError::MissingEnv(var)) => Err(Failure::new(EXIT_CONFIG, format!("{var} is not set"))),
                Err(DriverError::Engine(e)) => Err(e.into()),
                Err(e) => Err(Failure::new(EXIT_ENV, e.to_string())),
            }
        }
        Agent::Manual => {
            let engine = session.engine_mut();
            for _ in 0..args.budget {
                let Some(view) = engine.current_stage() else { break };
                let t = engine.complete_stage()?;
                if !t.advanced {
                    println!("{}", view.render());
                    println!("stage {} not complete:", t.stage);
                    print_result(&t.result);
                    break;
                }
                println!("stage {} complete", t.stage);
            }
            Ok(finish_line(&session))
        }
    }
}

fn cmd_check(global: &Global, stage: Option<&str>) -> Outcome {
    let mut engine = open_engine(&global.workspace, global.open_options(false, true))?;
    let (name, result) = match stage {
        Some(name) => {
            let index = engine
                .config()
                .index_of(name)
                .ok_or_else(|| Failure::new(EXIT_CONFIG, format!("no stage named `{name}`")))?;
            (name.to_string(), engine.evaluate_stage(index)?)
        }
        None => {
            let Some(view) = engine.current_stage() else {
                println!("workflow finished; nothing to check");
                return Ok(0);
            };
            (view.name, engine.run_check()?)
        }
    };
    if result.passed() {
        println!("stage {name}: passed");
        print_result(&result);
        Ok(0)
    } else {
        println!("stage {name}: failed");
        print_result(&result);
        Ok(EXIT_FAILED)
    }
}

/// Reads the state without taking the session lock.
fn read_state(global: &Global, require: bool) -> Result<(stagegate::workflow::WorkflowConfig, WorkflowState), Failure> {
    let opts = global.open_options(require, false);
    let config = load_workspace_config(&global.workspace, &opts)?;
    let path = state_path(&global.workspace);
    let state = if path.exists() {
        restore(&path, &config).map_err(|e| Failure::from(OpenError::State(e)))?
    } else if require {
        return Err(OpenError::NoState(path.display().to_string()).into());
    } else {
        WorkflowState::fresh(&config)
    };
    Ok((config, state))
}

fn cmd_status(global: &Global) -> Outcome {
    let (config, state) = read_state(global, false)?;
    let status = stagegate::workflow::status_of(&state, &config);
    match &status.current {
        Some(name) => println!("stage {} of {}: {name}", status.current_index + 1, status.total),
        None => println!("finished: {} of {} stages", status.total, status.total),
    }
    let width = status.stages.iter().map(|s| s.name.len()).max().unwrap_or(5);
    for (i, s) in status.stages.iter().enumerate() {
        let mark = if s.skipped {
            "skipped"
        } else if s.passed {
            "passed"
        } else if Some(&s.name) == status.current.as_ref() {
            "active"
        } else {
            "pending"
        };
        println!(
            "{:>3}  {:<width$}  {:<7}  attempts={} failures={} elapsed_s={:.3}",
            i + 1,
            s.name,
            mark,
            s.attempts,
            s.failures,
            s.elapsed_s
        );
    }
    Ok(0)
}

fn cmd_report(global: &Global, format: Format) -> Outcome {
    let (config, state) = read_state(global, true)?;
    let report = workspace_report(&state, &config, &global.workspace);
    match format {
        Format::Table => print!("{}", report.render_table()),
        Format::Json => println!("{}", serde_json::to_string_pretty(&report).expect("report serializes")),
    }
    Ok(0)
}

fn cmd_serve(global: &Global) -> Outcome {
    let mut session = open_session(&global.workspace, global.open_options(false, false))?;
    let stdin = io::stdin();
    let stdout = io::stdout();
    serve(&mut session, stdin.lock(), stdout.lock())?;
    Ok(0)
}

fn cmd_init(dir: &Path, force: bool) -> Outcome {
    match scaffold(dir, force) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(0)
        }
        Err(e @ ScaffoldError::TargetNotEmpty(_)) => Err(Failure::new(EXIT_CONFIG, e.to_string())),
        Err(e) => Err(Failure::new(EXIT_ENV, e.to_string())),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = &cli.global;
    let outcome = match &cli.command {
        Command::Init { dir, force } => cmd_init(dir, *force),
        Command::Run(args) => cmd_run(g, args, false),
        Command::Resume(args) => cmd_run(g, args, true),
        Command::Check { stage } => cmd_check(g, stage.as_deref()),
        Command::Status => cmd_status(g),
        Command::Report { format } => cmd_report(g, *format),
        Command::Serve => cmd_serve(g),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
