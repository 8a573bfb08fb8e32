//! End-to-end glue: report extraction and scenario evaluation.
//!
//! A scenario is a JSON file naming a bug report, its gold S2R notation, and
//! optionally how to obtain a predicted script and how to replay it:
//!
//! ```json
//! {
//!   "name": "librenews-url",
//!   "report": "reports/librenews.txt",
//!   "gold": "gold/librenews.txt",
//!   "predicted": "predicted/librenews.txt",
//!   "extraction_mock": "mock/librenews_extract.txt",
//!   "replay": {"sim": "sim/librenews.json", "mock": "mock/librenews_replay.txt",
//!              "escalation": true, "budget_secs": 10}
//! }
//! ```
//!
//! Paths are relative to the scenario file. `predicted` wins over
//! `extraction_mock`; with neither, only replay is scored. Replay uses the
//! predicted script when there is one and the gold script otherwise.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clock::{Clock, SimulatedCosts, VirtualClock};
use crate::eval::{aggregate_replays, score_extraction, EvalReport, ExtractionRow, ExtractionScore, ReplayRow};
use crate::grammar::{
    build_extraction_prompt, parse_entity_notation, parse_extraction_response, ExtractionParseError, PromptExample,
    S2rScript,
};
use crate::llm::{prompt_fingerprint, timed_complete, LlmError, LlmExchange, LlmGateway, MockGateway};
use crate::rag::{segment_report, EmbeddingProvider, RagError, RagIndex, RetrievalHit};
use crate::replay::{run, ReplayConfig, ReplayResult};
use crate::simulator::{load_spec, SimSession};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Rag(#[from] RagError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Extraction(#[from] ExtractionParseError),
    #[error("{path}: {reason}")]
    Scenario { path: PathBuf, reason: String },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Everything one extraction produced, for the run log.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub script: S2rScript,
    pub sentences: Vec<String>,
    /// Retrieved hits per report sentence.
    pub hits: Vec<Vec<RetrievalHit>>,
    pub prompt: String,
    pub exchange: LlmExchange,
}

impl Extraction {
    /// Human-readable log of the prompt and the raw reply.
    pub fn log(&self) -> String {
        let mut out = String::new();
        for (i, (sentence, hits)) in self.sentences.iter().zip(&self.hits).enumerate() {
            out.push_str(&format!("sentence {}: {sentence}\n", i + 1));
            for hit in hits {
                out.push_str(&format!("  {:.6} {} {}\n", hit.score, hit.record.record_id, hit.record.sentence));
            }
        }
        out.push_str(&format!("\n=== prompt {} ===\n", self.exchange.prompt_fingerprint));
        out.push_str(&self.prompt);
        out.push_str("\n=== response ===\n");
        out.push_str(&self.exchange.raw_response);
        out.push('\n');
        out
    }
}

/// Retrieval-augmented extraction of one report.
///
/// Each sentence retrieves its top `k` labeled neighbours; examples are
/// deduplicated by record and kept in first-retrieved order.
#[allow(clippy::too_many_arguments)]
pub fn extract(
    source_report: &str,
    report_text: &str,
    index: &RagIndex,
    provider: &dyn EmbeddingProvider,
    gateway: &mut dyn LlmGateway,
    k: usize,
    clock: &dyn Clock,
    llm_cost: Duration,
) -> Result<Extraction, PipelineError> {
    let sentences = segment_report(report_text);
    if sentences.is_empty() {
        return Err(ExtractionParseError::NoEntitiesFound { errors: Vec::new() }.into());
    }
    let mut hits = Vec::with_capacity(sentences.len());
    for sentence in &sentences {
        hits.push(index.retrieve(sentence, k, provider)?);
    }
    let mut seen = std::collections::HashSet::new();
    let examples: Vec<PromptExample> = hits
        .iter()
        .flatten()
        .filter(|h| seen.insert(h.record.record_id.clone()))
        .map(|h| PromptExample { sentence: h.record.sentence.clone(), labels: h.record.labels.clone() })
        .collect();
    let prompt = build_extraction_prompt(&sentences, &examples);
    let (reply, latency) = timed_complete(gateway, &prompt, clock, llm_cost);
    let raw = reply?;
    let script = parse_extraction_response(source_report, &raw)?;
    let exchange = LlmExchange {
        prompt_fingerprint: prompt_fingerprint(&prompt),
        prompt: prompt.clone(),
        raw_response: raw,
        parsed: None,
        latency,
        error: None,
    };
    Ok(Extraction { script, sentences, hits, prompt, exchange })
}

/// Reads a script file: JSON (the serialized [`S2rScript`]) when it starts
/// with `{`, bracket notation otherwise.
pub fn parse_script_text(source_report: &str, text: &str) -> Result<S2rScript, String> {
    if text.trim_start().starts_with('{') {
        let script: S2rScript = serde_json::from_str(text).map_err(|e| e.to_string())?;
        for step in &script.steps {
            step.entity.validate().map_err(|e| e.to_string())?;
        }
        return Ok(script);
    }
    let parsed = parse_entity_notation(text);
    if let Some(e) = parsed.errors.first() {
        return Err(format!("line {}: {}", e.line + 1, e.reason));
    }
    parse_extraction_response(source_report, text).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplaySpec {
    pub sim: PathBuf,
    pub mock: PathBuf,
    #[serde(default = "yes")]
    pub escalation: bool,
    #[serde(default)]
    pub budget_secs: Option<u64>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub report: PathBuf,
    pub gold: PathBuf,
    #[serde(default)]
    pub predicted: Option<PathBuf>,
    #[serde(default)]
    pub extraction_mock: Option<PathBuf>,
    #[serde(default)]
    pub replay: Option<ReplaySpec>,
}

/// A parsed scenario with its inputs read and checked.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub path: PathBuf,
    pub scenario: Scenario,
    pub report_text: String,
    pub gold: S2rScript,
    pub predicted: Option<S2rScript>,
    /// File name relative to the scenario directory to SHA-256 prefix.
    pub hashes: BTreeMap<String, String>,
}

/// Settings shared by every scenario of an evaluation.
pub struct EvalSettings<'a> {
    pub index: Option<&'a RagIndex>,
    pub provider: &'a dyn EmbeddingProvider,
    pub k: usize,
    pub costs: SimulatedCosts,
    pub replay: ReplayConfig,
    pub config_fingerprint: Option<String>,
}

pub fn sha256_prefix(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Scenario files of a directory (`*.json`, not recursive), sorted by name.
pub fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let io = |source| PipelineError::Io { path: dir.to_path_buf(), source };
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn load_scenario(path: &Path, dir: &Path) -> Result<LoadedScenario, PipelineError> {
    let bad = |p: &Path, reason: String| PipelineError::Scenario { path: p.to_path_buf(), reason };
    let text = fs::read_to_string(path).map_err(|e| bad(path, e.to_string()))?;
    let scenario: Scenario = serde_json::from_str(&text).map_err(|e| bad(path, e.to_string()))?;
    let base = path.parent().unwrap_or(dir);
    let mut hashes = BTreeMap::new();
    let mut read = |rel: &Path| -> Result<(PathBuf, String), PipelineError> {
        let full = base.join(rel);
        let bytes = fs::read(&full).map_err(|e| bad(&full, e.to_string()))?;
        let key = full.strip_prefix(dir).unwrap_or(&full).to_string_lossy().replace('\\', "/");
        hashes.insert(key, sha256_prefix(&bytes));
        let text = String::from_utf8(bytes).map_err(|e| bad(&full, e.to_string()))?;
        Ok((full, text))
    };
    read(path.strip_prefix(base).unwrap_or(path))?;
    let (_, report_text) = read(&scenario.report)?;
    let (gold_path, gold_text) = read(&scenario.gold)?;
    let gold = parse_script_text(&scenario.name, &gold_text).map_err(|e| bad(&gold_path, e))?;
    let predicted = match &scenario.predicted {
        Some(rel) => {
            let (p, t) = read(rel)?;
            Some(parse_script_text(&scenario.name, &t).map_err(|e| bad(&p, e))?)
        }
        None => None,
    };
    if let Some(rel) = &scenario.extraction_mock {
        read(rel)?;
    }
    if let Some(r) = &scenario.replay {
        read(&r.sim)?;
        read(&r.mock)?;
    }
    Ok(LoadedScenario { path: path.to_path_buf(), scenario, report_text, gold, predicted, hashes })
}

/// Outcome of one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub name: String,
    pub extraction: Option<ExtractionScore>,
    pub replay: Option<ReplayResult>,
}

fn run_scenario(s: &LoadedScenario, settings: &EvalSettings) -> Result<ScenarioRun, PipelineError> {
    let base = s.path.parent().unwrap_or(Path::new("."));
    let bad = |p: &Path, reason: String| PipelineError::Scenario { path: p.to_path_buf(), reason };
    let mut predicted = s.predicted.clone();
    if predicted.is_none() {
        if let Some(rel) = &s.scenario.extraction_mock {
            let mock_path = base.join(rel);
            let index =
                settings.index.ok_or_else(|| bad(&s.path, "extraction_mock needs a corpus or index".to_string()))?;
            let mut gateway = MockGateway::from_script_file(&mock_path).map_err(|e| bad(&mock_path, e.to_string()))?;
            let clock = VirtualClock::new();
            let extraction = extract(
                &s.scenario.name,
                &s.report_text,
                index,
                settings.provider,
                &mut gateway,
                settings.k,
                &clock,
                settings.costs.llm_call,
            )?;
            predicted = Some(extraction.script);
        }
    }
    let extraction = predicted.as_ref().map(|p| score_extraction(p, &s.gold));
    let replay = match &s.scenario.replay {
        None => None,
        Some(spec) => {
            let sim_path = base.join(&spec.sim);
            let mock_path = base.join(&spec.mock);
            let app = load_spec(&sim_path).map_err(|e| bad(&sim_path, e.to_string()))?;
            let mut gateway = MockGateway::from_script_file(&mock_path).map_err(|e| bad(&mock_path, e.to_string()))?;
            let mut device = SimSession::new(app);
            let mut config = settings.replay.clone();
            config.escalation &= spec.escalation;
            if let Some(secs) = spec.budget_secs {
                config.budget = Duration::from_secs(secs);
            }
            let clock = VirtualClock::new();
            let script = predicted.as_ref().unwrap_or(&s.gold);
            Some(run(&s.report_text, script, &mut device, &mut gateway, &clock, settings.costs, &config))
        }
    };
    Ok(ScenarioRun { name: s.scenario.name.clone(), extraction, replay })
}

/// Scores every scenario in `dir` and assembles the report. Scenarios run in
/// parallel, each with its own device, gateway and clock; rows keep file
/// order. An empty directory gives a report with headers only.
pub fn evaluate_dir(dir: &Path, settings: &EvalSettings) -> Result<(EvalReport, Vec<ScenarioRun>), PipelineError> {
    let loaded = scenario_files(dir)?.iter().map(|p| load_scenario(p, dir)).collect::<Result<Vec<_>, _>>()?;
    let runs = loaded.par_iter().map(|s| run_scenario(s, settings)).collect::<Result<Vec<_>, _>>()?;

    let mut report = EvalReport { config_fingerprint: settings.config_fingerprint.clone(), ..Default::default() };
    for s in &loaded {
        report.input_hashes.extend(s.hashes.clone());
    }
    let mut total = ExtractionScore::default();
    let mut scored = 0;
    for r in &runs {
        if let Some(score) = &r.extraction {
            report.extraction.push(ExtractionRow { label: r.name.clone(), score: *score });
            total.merge(score);
            scored += 1;
        }
    }
    if scored > 0 {
        report.extraction.push(ExtractionRow { label: "All".into(), score: total });
    }
    let replays: Vec<&ReplayResult> = runs.iter().filter_map(|r| r.replay.as_ref()).collect();
    for r in &runs {
        if let Some(result) = &r.replay {
            report.replay.push(ReplayRow { label: r.name.clone(), aggregate: aggregate_replays([result]) });
        }
    }
    if !replays.is_empty() {
        report.replay.push(ReplayRow { label: "All".into(), aggregate: aggregate_replays(replays) });
    }
    Ok((report, runs))
}
