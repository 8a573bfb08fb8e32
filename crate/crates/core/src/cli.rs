//! Command-line front end.
//!
//! Settings come from an optional TOML file (`--config`), then flags, flags
//! winning. Relative paths in the file are taken relative to the file.
//!
//! Exit codes: 0 success or reproduced, 1 domain failure (not reproduced, no
//! entities, bad input data), 2 usage error, 3 environment error (missing
//! files, unreachable device or endpoint).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Clock, SimulatedCosts, VirtualClock, WallClock};
use crate::device::{AdbCommandRunner, AdbDevice, AdbDeviceConfig, Device};
use crate::explorer::ExploreConfig;
use crate::grammar::ExtractionParseError;
use crate::llm::{HttpGateway, LlmConfig, LlmGateway, MockGateway};
use crate::pipeline::{evaluate_dir, extract, parse_script_text, sha256_prefix, EvalSettings, PipelineError};
use crate::rag::{
    build_index, load_corpus, EmbeddingProvider, HashedTrigramProvider, HttpEmbeddingProvider, RagError, RagIndex,
};
use crate::replay::{run, Outcome, ReplayConfig};
use crate::simulator::{load_spec, SimSession};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ENV: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Env(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Env(_) => EXIT_ENV,
            CliError::Domain(_) => EXIT_DOMAIN,
        }
    }
}

impl From<RagError> for CliError {
    fn from(e: RagError) -> Self {
        match e {
            RagError::Io { .. } | RagError::ProviderUnavailable(_) => CliError::Env(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Rag(e) => e.into(),
            PipelineError::Io { .. } | PipelineError::Llm(_) => CliError::Env(e.to_string()),
            PipelineError::Extraction(_) | PipelineError::Scenario { .. } => CliError::Domain(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GatewayMode {
    Live,
    #[default]
    Mock,
}

/// Effective settings of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus_path: Option<PathBuf>,
    pub index_path: Option<PathBuf>,
    pub sim_spec_path: Option<PathBuf>,
    pub device_serial: Option<String>,
    /// Package launched on a real device.
    pub app_package: Option<String>,
    pub gateway: GatewayMode,
    pub mock_script: Option<PathBuf>,
    pub budget_secs: u64,
    pub depth: usize,
    pub k: usize,
    pub output_dir: PathBuf,
    pub escalation: bool,
    /// Remote embedding provider; the offline hashed-trigram one otherwise.
    pub embedding_endpoint: Option<String>,
    pub embedding_model: Option<String>,
    pub embedding_dimension: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus_path: None,
            index_path: None,
            sim_spec_path: None,
            device_serial: None,
            app_package: None,
            gateway: GatewayMode::Mock,
            mock_script: None,
            budget_secs: 300,
            depth: 1,
            k: 1,
            output_dir: PathBuf::from("out"),
            escalation: true,
            embedding_endpoint: None,
            embedding_model: None,
            embedding_dimension: 384,
        }
    }
}

impl RunConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Env(format!("{}: {e}", path.display())))?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.corpus_path, &mut config.index_path, &mut config.sim_spec_path, &mut config.mock_script]
            .into_iter()
            .flatten()
        {
            *p = base.join(&*p);
        }
        config.output_dir = base.join(&config.output_dir);
        Ok(config)
    }

    fn apply(&mut self, flags: &CommonFlags) {
        let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
            if v.is_some() {
                slot.clone_from(v);
            }
        };
        set(&mut self.corpus_path, &flags.corpus);
        set(&mut self.index_path, &flags.index);
        set(&mut self.mock_script, &flags.mock_script);
        if let Some(sim) = &flags.sim {
            self.sim_spec_path = Some(sim.clone());
            self.device_serial = None;
        }
        if let Some(serial) = &flags.device {
            self.device_serial = Some(serial.clone());
            self.sim_spec_path = None;
        }
        if let Some(p) = &flags.package {
            self.app_package = Some(p.clone());
        }
        if let Some(g) = flags.gateway {
            self.gateway = g;
        }
        if let Some(b) = flags.budget {
            self.budget_secs = b;
        }
        if let Some(d) = flags.depth {
            self.depth = d;
        }
        if let Some(k) = flags.k {
            self.k = k;
        }
        if let Some(o) = &flags.out {
            self.output_dir = o.clone();
        }
        if flags.no_escalation {
            self.escalation = false;
        }
    }

    /// Stable hash of the settings, recorded in evaluation reports.
    pub fn fingerprint(&self) -> String {
        sha256_prefix(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    fn require_k(&self) -> Result<(), CliError> {
        if self.k == 0 {
            return Err(CliError::Usage("k must be at least 1".into()));
        }
        Ok(())
    }

    fn replay_config(&self) -> ReplayConfig {
        ReplayConfig {
            budget: Duration::from_secs(self.budget_secs),
            escalation: self.escalation,
            explore: ExploreConfig { depth: self.depth, ..Default::default() },
            ..Default::default()
        }
    }

    fn provider(&self) -> Result<Box<dyn EmbeddingProvider>, CliError> {
        match &self.embedding_endpoint {
            None => Ok(Box::new(HashedTrigramProvider::new(self.embedding_dimension))),
            Some(endpoint) => {
                let model = self.embedding_model.clone().unwrap_or_else(|| "all-MiniLM-L12-v2".into());
                let key = std::env::var(crate::llm::ENV_API_KEY).ok();
                Ok(Box::new(HttpEmbeddingProvider::new(
                    endpoint.clone(),
                    model,
                    self.embedding_dimension,
                    key,
                    Duration::from_secs(30),
                )?))
            }
        }
    }

    /// Loads the index if its file exists, otherwise builds it from the corpus.
    fn index(&self, provider: &dyn EmbeddingProvider) -> Result<RagIndex, CliError> {
        if let Some(path) = &self.index_path {
            if path.exists() {
                return Ok(RagIndex::load(path)?);
            }
        }
        match &self.corpus_path {
            Some(corpus) => Ok(build_index(&load_corpus(corpus)?, provider)?),
            None => Err(CliError::Usage("need --index (existing file) or --corpus".into())),
        }
    }

    fn gateway(&self) -> Result<Box<dyn LlmGateway>, CliError> {
        match self.gateway {
            GatewayMode::Mock => {
                let path = self
                    .mock_script
                    .as_ref()
                    .ok_or_else(|| CliError::Usage("mock gateway needs --mock-script".into()))?;
                if !path.exists() {
                    return Err(CliError::Env(format!("{}: no such file", path.display())));
                }
                let mock = MockGateway::from_script_file(path).map_err(|e| CliError::Domain(e.to_string()))?;
                Ok(Box::new(mock))
            }
            GatewayMode::Live => {
                let config = LlmConfig::from_env().map_err(|e| CliError::Env(e.to_string()))?;
                Ok(Box::new(HttpGateway::new(config).map_err(|e| CliError::Env(e.to_string()))?))
            }
        }
    }

    /// Virtual time only when both the app and the model are simulated.
    fn clock(&self) -> (Box<dyn Clock>, SimulatedCosts) {
        if self.gateway == GatewayMode::Mock && self.device_serial.is_none() {
            (Box::new(VirtualClock::new()), SimulatedCosts::default())
        } else {
            (Box::new(WallClock::new()), SimulatedCosts { llm_call: Duration::ZERO, device_command: Duration::ZERO })
        }
    }

    fn device(&self) -> Result<Box<dyn Device>, CliError> {
        match (&self.sim_spec_path, &self.device_serial) {
            (Some(_), Some(_)) => Err(CliError::Usage("give exactly one of --sim and --device".into())),
            (None, None) => Err(CliError::Usage("replay needs --sim or --device".into())),
            (Some(path), None) => {
                let spec = load_spec(path).map_err(|e| match e {
                    crate::simulator::SimError::Io { .. } => CliError::Env(e.to_string()),
                    _ => CliError::Domain(e.to_string()),
                })?;
                Ok(Box::new(SimSession::new(spec)))
            }
            (None, Some(serial)) => {
                let package =
                    self.app_package.clone().ok_or_else(|| CliError::Usage("--device needs --package".into()))?;
                let runner = AdbCommandRunner { adb_path: "adb".into(), serial: Some(serial.clone()) };
                let device = AdbDevice::connect(runner, AdbDeviceConfig::new(package))
                    .map_err(|e| CliError::Env(e.to_string()))?;
                Ok(Box::new(device))
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "crashrepro", version, about = "Reproduce Android app crashes from bug reports")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct CommonFlags {
    /// TOML settings file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Labeled corpus, one JSON report per line.
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Index file (written by build-index, read by the others).
    #[arg(long, global = true)]
    pub index: Option<PathBuf>,
    /// Simulated app specification (JSON).
    #[arg(long, global = true)]
    pub sim: Option<PathBuf>,
    /// Serial of a device reachable through adb.
    #[arg(long, global = true)]
    pub device: Option<String>,
    /// App package to launch on the device.
    #[arg(long, global = true)]
    pub package: Option<String>,
    /// Model backend. Live mode reads CRASHREPRO_LLM_ENDPOINT, CRASHREPRO_LLM_MODEL and CRASHREPRO_LLM_API_KEY.
    #[arg(long, global = true, value_enum)]
    pub gateway: Option<GatewayMode>,
    /// Scripted model replies for mock mode.
    #[arg(long, global = true)]
    pub mock_script: Option<PathBuf>,
    /// Replay time budget in seconds (default 300).
    #[arg(long, global = true)]
    pub budget: Option<u64>,
    /// Exploration depth (default 1).
    #[arg(long, global = true)]
    pub depth: Option<usize>,
    /// Retrieved examples per report sentence (default 1).
    #[arg(short, long, global = true)]
    pub k: Option<usize>,
    /// Output directory (default ./out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Never escalate to exploration when stuck.
    #[arg(long, global = true)]
    pub no_escalation: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Embed the corpus and write the index file.
    BuildIndex {
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Extract S2R entities from a report; writes <stem>.s2r.json and <stem>.extract.log.
    Extract {
        report: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Replay a script against the app; writes <stem>.result.json and <stem>.trace.jsonl.
    Replay {
        report: PathBuf,
        /// Script as JSON (from extract) or bracket notation.
        script: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Score every scenario in a directory; writes report.txt and report.json.
    Eval {
        scenario_dir: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
    },
}

/// Parses arguments and runs the command; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn settings(flags: &CommonFlags) -> Result<RunConfig, CliError> {
    let mut config = match &flags.config {
        Some(path) => RunConfig::from_toml_file(path)?,
        None => RunConfig::default(),
    };
    config.apply(flags);
    config.require_k()?;
    Ok(config)
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Env(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Env(format!("{}: {e}", path.display())))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Env(format!("{}: {e}", path.display())))
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "report".into(), |s| s.to_string_lossy().into_owned())
}

fn execute(command: Command) -> Result<i32, CliError> {
    match command {
        Command::BuildIndex { flags } => {
            let config = settings(&flags)?;
            let corpus =
                config.corpus_path.clone().ok_or_else(|| CliError::Usage("build-index needs --corpus".into()))?;
            let provider = config.provider()?;
            let index = build_index(&load_corpus(&corpus)?, provider.as_ref())?;
            let path = config.index_path.clone().unwrap_or_else(|| config.output_dir.join("index.json"));
            write(&path, &index.to_json())?;
            println!("{} records", index.len());
            Ok(EXIT_OK)
        }
        Command::Extract { report, flags } => {
            let config = settings(&flags)?;
            let text = read(&report)?;
            let provider = config.provider()?;
            let index = config.index(provider.as_ref())?;
            let mut gateway = config.gateway()?;
            let (clock, costs) = config.clock();
            let name = stem(&report);
            let extraction = match extract(
                &name,
                &text,
                &index,
                provider.as_ref(),
                gateway.as_mut(),
                config.k,
                clock.as_ref(),
                costs.llm_call,
            ) {
                Ok(x) => x,
                Err(PipelineError::Extraction(e @ ExtractionParseError::NoEntitiesFound { .. })) => {
                    return Err(CliError::Domain(format!("{}: {e}", report.display())));
                }
                Err(e) => return Err(e.into()),
            };
            let script_path = config.output_dir.join(format!("{name}.s2r.json"));
            let script_json = serde_json::to_string_pretty(&extraction.script).expect("script serializes");
            write(&script_path, &(script_json + "\n"))?;
            write(&config.output_dir.join(format!("{name}.extract.log")), &extraction.log())?;
            println!("{}", extraction.script.to_notation());
            Ok(EXIT_OK)
        }
        Command::Replay { report, script, flags } => {
            let config = settings(&flags)?;
            let report_text = read(&report)?;
            let name = stem(&report);
            let script = parse_script_text(&name, &read(&script)?)
                .map_err(|e| CliError::Domain(format!("{}: {e}", script.display())))?;
            let mut device = config.device()?;
            let mut gateway = config.gateway()?;
            let (clock, costs) = config.clock();
            let result = run(
                &report_text,
                &script,
                device.as_mut(),
                gateway.as_mut(),
                clock.as_ref(),
                costs,
                &config.replay_config(),
            );
            write(&config.output_dir.join(format!("{name}.trace.jsonl")), &result.trace_jsonl())?;
            let result_json = serde_json::to_string_pretty(&result).expect("result serializes");
            write(&config.output_dir.join(format!("{name}.result.json")), &(result_json + "\n"))?;
            let outcome = serde_json::to_value(result.outcome).expect("outcome serializes");
            println!(
                "{} after {} step(s), {:.2}s",
                outcome.as_str().unwrap_or("?"),
                result.steps_executed,
                result.elapsed
            );
            if let Some(crash) = &result.crash {
                println!("{}: {}", crash.exception_type, crash.message);
            }
            Ok(match result.outcome {
                Outcome::Reproduced => EXIT_OK,
                Outcome::DeviceFailure => EXIT_ENV,
                Outcome::BudgetExhausted | Outcome::NoActionableOutput => EXIT_DOMAIN,
            })
        }
        Command::Eval { scenario_dir, flags } => {
            let config = settings(&flags)?;
            if !scenario_dir.is_dir() {
                return Err(CliError::Env(format!("{}: not a directory", scenario_dir.display())));
            }
            let provider = config.provider()?;
            let index = match (&config.index_path, &config.corpus_path) {
                (None, None) => None,
                _ => Some(config.index(provider.as_ref())?),
            };
            let settings = EvalSettings {
                index: index.as_ref(),
                provider: provider.as_ref(),
                k: config.k,
                costs: SimulatedCosts::default(),
                replay: config.replay_config(),
                config_fingerprint: Some(config.fingerprint()),
            };
            let (report, _) = evaluate_dir(&scenario_dir, &settings)?;
            let text = report.to_text();
            write(&config.output_dir.join("report.txt"), &text)?;
            write(&config.output_dir.join("report.json"), &(report.to_json() + "\n"))?;
            print!("{text}");
            Ok(EXIT_OK)
        }
    }
}
