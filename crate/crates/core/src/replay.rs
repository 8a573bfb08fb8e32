//! The replay loop: prompt the model with the report, its extracted steps
//! and the current screen, execute what it proposes, feed the outcome back,
//! and escalate to exploration-derived knowledge when the loop is stuck.

use std::collections::HashSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::clock::{Clock, SimulatedCosts};
use crate::device::{encode_state_text, CrashInfo, Device, DeviceError, ExecStatus, UiState};
use crate::explorer::{explore_until, synthesize_functionality, synthesize_ui_functions, AppKnowledge, ExploreConfig};
use crate::grammar::S2rScript;
use crate::llm::{request_actions, ActionCommand, LlmExchange, LlmGateway, Verb};

const HEADER: &str = include_str!("../templates/replay_header.txt");
const FORMAT: &str = include_str!("../templates/replay_format.txt");
const GENERATE_INPUT: &str = "Generate input when none is given.";
/// Feedback lines carried into each prompt.
const FEEDBACK_WINDOW: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Reproduced,
    BudgetExhausted,
    NoActionableOutput,
    DeviceFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StuckReason {
    NoMatchRepeated,
    StateRevisitedWithoutProgress,
    LlmNoActionableOutput,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StuckSignal {
    pub reason: StuckReason,
    pub state: String,
}

/// One entry of the loop's memory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum HistoryEvent {
    Executed {
        state_id: String,
        command: ActionCommand,
        ok: bool,
        new_state_id: String,
        /// The feature that failed to resolve, for resolution misses.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        no_match: Option<String>,
    },
    NoActionableOutput {
        state_id: String,
    },
}

impl HistoryEvent {
    pub fn executed(state_id: &str, command: ActionCommand, status: &ExecStatus) -> Self {
        HistoryEvent::Executed {
            state_id: state_id.to_string(),
            no_match: status.no_match.as_ref().map(|m| m.feature.clone()),
            command,
            ok: status.ok,
            new_state_id: status.new_state.state_id.clone(),
        }
    }

    pub fn state_id(&self) -> &str {
        match self {
            HistoryEvent::Executed { state_id, .. } | HistoryEvent::NoActionableOutput { state_id } => state_id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StuckThresholds {
    /// Same (screen, feature) resolution miss this many times.
    pub no_match_repeats: usize,
    /// Same screen observed this many times with nothing new in between.
    pub revisits: usize,
    /// Unusable model output on the same screen this many times.
    pub no_action_repeats: usize,
}

impl Default for StuckThresholds {
    fn default() -> Self {
        StuckThresholds { no_match_repeats: 2, revisits: 3, no_action_repeats: 2 }
    }
}

pub fn detect_stuck(history: &[HistoryEvent]) -> Option<StuckSignal> {
    detect_stuck_with(history, &StuckThresholds::default())
}

/// Checks the latest event against the stuck rules: repeated resolution
/// miss, then repeated unusable output, then revisiting a screen with no new
/// screen seen since its previous visit.
pub fn detect_stuck_with(history: &[HistoryEvent], t: &StuckThresholds) -> Option<StuckSignal> {
    let last = history.last()?;
    if let HistoryEvent::Executed { state_id, no_match: Some(feature), .. } = last {
        let count = history
            .iter()
            .filter(|e| matches!(e, HistoryEvent::Executed { state_id: s, no_match: Some(f), .. } if s == state_id && f == feature))
            .count();
        if count >= t.no_match_repeats {
            return Some(StuckSignal { reason: StuckReason::NoMatchRepeated, state: state_id.clone() });
        }
    }
    if let HistoryEvent::NoActionableOutput { state_id } = last {
        let count = history
            .iter()
            .filter(|e| matches!(e, HistoryEvent::NoActionableOutput { state_id: s } if s == state_id))
            .count();
        if count >= t.no_action_repeats {
            return Some(StuckSignal { reason: StuckReason::LlmNoActionableOutput, state: state_id.clone() });
        }
    }
    // Screens in the order observed: the first pre-state, then every
    // post-state.
    let mut seq: Vec<&str> = Vec::new();
    for e in history {
        if let HistoryEvent::Executed { state_id, new_state_id, .. } = e {
            if seq.is_empty() {
                seq.push(state_id);
            }
            seq.push(new_state_id);
        }
    }
    let current = *seq.last()?;
    let visits: Vec<usize> = seq.iter().enumerate().filter(|(_, s)| **s == current).map(|(i, _)| i).collect();
    if visits.len() >= t.revisits {
        let (prev, now) = (visits[visits.len() - 2], visits[visits.len() - 1]);
        let novel = (prev + 1..now).any(|i| !seq[..i].contains(&seq[i]));
        if !novel {
            return Some(StuckSignal {
                reason: StuckReason::StateRevisitedWithoutProgress,
                state: current.to_string(),
            });
        }
    }
    None
}

/// Feedback on one executed command for the next prompt. Crashes end the
/// loop, so they get none.
pub fn render_feedback(cmd: &ActionCommand, prev_state_id: &str, status: &ExecStatus) -> Option<String> {
    if status.crash.is_some() {
        return None;
    }
    let changed = status.new_state.state_id != prev_state_id;
    let screen = if changed {
        format!("The screen changed to {}.", status.new_state.activity_name)
    } else {
        format!("The screen did not change ({}).", status.new_state.activity_name)
    };
    Some(if status.ok {
        format!("The action {cmd} executed successfully. {screen}")
    } else if let Some(miss) = &status.no_match {
        format!(
            "The action {cmd} failed: no element matches \"{}\" (tried {}). {screen}",
            miss.feature,
            miss.tiers_missed.join(", ")
        )
    } else {
        format!("The action {cmd} failed: {}. {screen}", status.detail)
    })
}

/// Tier 1 (no knowledge): task header, bug report, extracted entities,
/// current screen. Tier 2 adds the app knowledge section. Feedback from
/// earlier actions and the answer format follow.
pub fn build_replay_prompt(
    report: &str,
    script: &S2rScript,
    encoded_ui: &str,
    knowledge: Option<&str>,
    feedback: &[String],
) -> String {
    let mut p = String::new();
    p.push_str(HEADER.trim_end());
    p.push_str("\n\n## Bug Report\n");
    p.push_str(report.trim());
    p.push_str("\n\n## Extracted S2R Entities\n");
    if script.steps.is_empty() {
        p.push_str("(none)");
    } else {
        p.push_str(&script.to_notation());
    }
    p.push_str("\n\n## Current UI Screen\n");
    p.push_str(encoded_ui.trim_end());
    p.push('\n');
    if let Some(k) = knowledge {
        p.push_str("\n## App Knowledge\n");
        p.push_str(k.trim_end());
        p.push('\n');
    }
    if !feedback.is_empty() {
        p.push_str("\nResults of your previous actions:\n");
        for f in feedback {
            p.push_str("- ");
            p.push_str(f);
            p.push('\n');
        }
    }
    p.push('\n');
    if script.entities().any(|e| e.generate_on_replay()) {
        p.push_str(GENERATE_INPUT);
        p.push('\n');
    }
    p.push_str(FORMAT);
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayConfig {
    pub budget: Duration,
    /// Explore and add app knowledge when stuck.
    pub escalation: bool,
    pub explore: ExploreConfig,
    pub thresholds: StuckThresholds,
    /// Consecutive unusable model answers that end the run.
    pub max_no_action: usize,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            budget: Duration::from_secs(300),
            escalation: true,
            explore: ExploreConfig::default(),
            thresholds: StuckThresholds::default(),
            max_no_action: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub command: ActionCommand,
    pub ok: bool,
    pub detail: String,
    pub new_state_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crash: Option<CrashInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationRecord {
    pub origin: String,
    pub nodes: usize,
    pub edges: usize,
    pub budget_exhausted: bool,
    pub exchanges: Vec<LlmExchange>,
}

/// One loop iteration, as written to the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Session-clock seconds.
    pub started_at: f64,
    pub finished_at: f64,
    pub state_id: String,
    pub activity: String,
    pub tier: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stuck: Option<StuckSignal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exploration: Option<ExplorationRecord>,
    pub exchanges: Vec<LlmExchange>,
    pub commands: Vec<CommandRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayResult {
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crash: Option<CrashInfo>,
    pub elapsed: f64,
    pub llm_time: f64,
    pub steps_executed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub trace: Vec<IterationRecord>,
}

impl ReplayResult {
    /// One JSON object per iteration.
    pub fn trace_jsonl(&self) -> String {
        self.trace.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
    }

    /// Every model exchange of the run, exploration included.
    pub fn exchanges(&self) -> impl Iterator<Item = &LlmExchange> {
        self.trace.iter().flat_map(|r| r.exploration.iter().flat_map(|x| x.exchanges.iter()).chain(r.exchanges.iter()))
    }
}

/// Charges the session clock for every command and restart.
struct Metered<'a> {
    inner: &'a mut dyn Device,
    clock: &'a dyn Clock,
    cost: Duration,
}

impl Device for Metered<'_> {
    fn capture_state(&mut self) -> Result<UiState, DeviceError> {
        self.inner.capture_state()
    }

    fn execute(&mut self, cmd: &ActionCommand) -> Result<ExecStatus, DeviceError> {
        let r = self.inner.execute(cmd);
        self.clock.advance(self.cost);
        r
    }

    fn restart_app(&mut self) -> Result<UiState, DeviceError> {
        let r = self.inner.restart_app();
        self.clock.advance(self.cost);
        r
    }
}

/// Replays `script` for `report` on `device` until a crash is observed, the
/// budget runs out, the model stops producing usable actions, or the device
/// fails. The device should be at the app's initial screen.
pub fn run(
    report: &str,
    script: &S2rScript,
    device: &mut dyn Device,
    gateway: &mut dyn LlmGateway,
    clock: &dyn Clock,
    costs: SimulatedCosts,
    config: &ReplayConfig,
) -> ReplayResult {
    let start = clock.elapsed();
    let secs = |c: &dyn Clock| c.elapsed().saturating_sub(start).as_secs_f64();
    let over_budget = || clock.elapsed().saturating_sub(start) >= config.budget;
    let mut device = Metered { inner: device, clock, cost: costs.device_command };

    let mut history: Vec<HistoryEvent> = Vec::new();
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut feedback: Vec<String> = Vec::new();
    let mut knowledge: Vec<AppKnowledge> = Vec::new();
    let mut explored: HashSet<String> = HashSet::new();
    // Commands since the last restart; the way back to the current screen.
    let mut path: Vec<ActionCommand> = Vec::new();
    let mut no_action_streak = 0;
    let mut steps = 0;

    let finish = |outcome, crash, error: Option<String>, trace: Vec<IterationRecord>, steps| {
        let llm_time = trace
            .iter()
            .flat_map(|r: &IterationRecord| {
                r.exploration.iter().flat_map(|x| x.exchanges.iter()).chain(r.exchanges.iter())
            })
            .map(|e| e.latency)
            .sum();
        ReplayResult { outcome, crash, elapsed: secs(clock), llm_time, steps_executed: steps, error, trace }
    };

    for iteration in 0.. {
        if over_budget() {
            return finish(Outcome::BudgetExhausted, None, None, trace, steps);
        }
        let started_at = secs(clock);
        let state = match device.capture_state() {
            Ok(s) => s,
            Err(e) => return finish(Outcome::DeviceFailure, None, Some(e.to_string()), trace, steps),
        };
        let mut record = IterationRecord {
            iteration,
            started_at,
            finished_at: started_at,
            state_id: state.state_id.clone(),
            activity: state.activity_name.clone(),
            tier: 1,
            stuck: None,
            exploration: None,
            exchanges: Vec::new(),
            commands: Vec::new(),
        };

        if config.escalation {
            if let Some(signal) = detect_stuck_with(&history, &config.thresholds) {
                if signal.state == state.state_id && explored.insert(state.state_id.clone()) {
                    let stop = || over_budget();
                    match explore_until(&mut device, &state, &path, &config.explore, &stop) {
                        Ok(graph) => {
                            let (functionality, mut ex) =
                                synthesize_functionality(&graph, gateway, clock, costs.llm_call);
                            let (ui_functions, ex2) = synthesize_ui_functions(&graph, gateway, clock, costs.llm_call);
                            ex.extend(ex2);
                            record.exploration = Some(ExplorationRecord {
                                origin: graph.origin.clone(),
                                nodes: graph.nodes.len(),
                                edges: graph.edges.len(),
                                budget_exhausted: graph.budget_exhausted,
                                exchanges: ex,
                            });
                            knowledge.push(AppKnowledge { graph, functionality, ui_functions });
                        }
                        Err(crate::explorer::ExploreError::Device(e)) => {
                            record.stuck = Some(signal);
                            trace.push(record);
                            return finish(Outcome::DeviceFailure, None, Some(e.to_string()), trace, steps);
                        }
                        Err(_) => {}
                    }
                }
                record.stuck = Some(signal);
            }
        }

        let rendered: Vec<String> = knowledge.iter().map(AppKnowledge::render).collect();
        let knowledge_text = if rendered.is_empty() { None } else { Some(rendered.join("\n")) };
        if knowledge_text.is_some() {
            record.tier = 2;
        }
        let recent = &feedback[feedback.len().saturating_sub(FEEDBACK_WINDOW)..];
        let prompt = build_replay_prompt(report, script, &encode_state_text(&state), knowledge_text.as_deref(), recent);

        if over_budget() {
            record.finished_at = secs(clock);
            trace.push(record);
            return finish(Outcome::BudgetExhausted, None, None, trace, steps);
        }
        let commands = match request_actions(gateway, &prompt, clock, costs.llm_call) {
            Ok(req) => {
                record.exchanges = req.exchanges;
                req.commands
            }
            Err((_, exchanges)) => {
                record.exchanges = exchanges;
                None
            }
        };
        let Some(commands) = commands else {
            no_action_streak += 1;
            history.push(HistoryEvent::NoActionableOutput { state_id: state.state_id.clone() });
            feedback.push("Your previous answer contained no usable actions.".to_string());
            record.finished_at = secs(clock);
            trace.push(record);
            if no_action_streak >= config.max_no_action {
                return finish(Outcome::NoActionableOutput, None, None, trace, steps);
            }
            continue;
        };
        no_action_streak = 0;

        let mut prev = state.state_id.clone();
        for cmd in commands {
            if over_budget() {
                record.finished_at = secs(clock);
                trace.push(record);
                return finish(Outcome::BudgetExhausted, None, None, trace, steps);
            }
            let status = match device.execute(&cmd) {
                Ok(s) => s,
                Err(e) => {
                    record.finished_at = secs(clock);
                    trace.push(record);
                    return finish(Outcome::DeviceFailure, None, Some(e.to_string()), trace, steps);
                }
            };
            steps += 1;
            history.push(HistoryEvent::executed(&prev, cmd.clone(), &status));
            record.commands.push(CommandRecord {
                command: cmd.clone(),
                ok: status.ok,
                detail: status.detail.clone(),
                new_state_id: status.new_state.state_id.clone(),
                crash: status.crash.clone(),
            });
            if let Some(crash) = status.crash {
                record.finished_at = secs(clock);
                trace.push(record);
                return finish(Outcome::Reproduced, Some(crash), None, trace, steps);
            }
            if cmd.action == Verb::Restart {
                path.clear();
            } else if status.ok {
                path.push(cmd.clone());
            }
            feedback.extend(render_feedback(&cmd, &prev, &status));
            prev = status.new_state.state_id.clone();
            if !status.ok {
                break;
            }
        }
        record.finished_at = secs(clock);
        trace.push(record);
    }
    unreachable!("the loop only exits by returning")
}
