//! UI transition graph exploration and the functionality tables built from
//! it.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::device::{encode_state_text, Device, DeviceError, UiElement, UiState};
use crate::llm::{prompt_fingerprint, timed_complete, ActionCommand, LlmExchange, LlmGateway, Verb};

const SUMMARIZE_ELEMENT: &str = include_str!("../templates/summarize_element.txt");
const DESCRIBE_STATE: &str = include_str!("../templates/describe_state.txt");

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error("device is not at the origin screen (expected {expected}, found {found})")]
    NotAtOrigin { expected: String, found: String },
    #[error("invalid exploration config: {0}")]
    Config(String),
    #[error("no explored screen contains element \"{0}\"")]
    ElementAbsent(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("cannot access {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtgEdge {
    pub from: String,
    pub action: ActionCommand,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtgGraph {
    pub origin: String,
    pub nodes: BTreeMap<String, UiState>,
    pub edges: Vec<UtgEdge>,
    /// Set when the action budget ran out before exploration finished.
    #[serde(default)]
    pub budget_exhausted: bool,
}

impl UtgGraph {
    pub fn single(origin: UiState) -> Self {
        let id = origin.state_id.clone();
        UtgGraph {
            origin: id.clone(),
            nodes: BTreeMap::from([(id, origin)]),
            edges: Vec::new(),
            budget_exhausted: false,
        }
    }

    pub fn validate(&self) -> Result<(), ExploreError> {
        if !self.nodes.contains_key(&self.origin) {
            return Err(ExploreError::InvalidGraph(format!("origin {} is not a node", self.origin)));
        }
        for (id, state) in &self.nodes {
            if id != &state.state_id {
                return Err(ExploreError::InvalidGraph(format!("node key {id} does not match its state")));
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            if !self.nodes.contains_key(&e.from) || !self.nodes.contains_key(&e.to) {
                return Err(ExploreError::InvalidGraph(format!("edge {i} has a dangling endpoint")));
            }
            if self.edges[..i].iter().any(|p| p.from == e.from && p.to == e.to && p.action == e.action) {
                return Err(ExploreError::InvalidGraph(format!("edge {i} duplicates an earlier edge")));
            }
        }
        Ok(())
    }

    /// BFS distance of every node reachable from the origin.
    pub fn distances(&self) -> HashMap<&str, usize> {
        let mut dist = HashMap::from([(self.origin.as_str(), 0)]);
        let mut queue = VecDeque::from([self.origin.as_str()]);
        while let Some(s) = queue.pop_front() {
            let d = dist[s];
            for e in self.edges.iter().filter(|e| e.from == s) {
                if !dist.contains_key(e.to.as_str()) {
                    dist.insert(e.to.as_str(), d + 1);
                    queue.push_back(e.to.as_str());
                }
            }
        }
        dist
    }

    /// Nodes in BFS order from the origin, ties by state id; unreachable
    /// nodes (none in explorer output) trail in id order.
    pub fn bfs_order(&self) -> Vec<&str> {
        let dist = self.distances();
        let mut ids: Vec<&str> = self.nodes.keys().map(String::as_str).collect();
        ids.sort_by_key(|id| (dist.get(id).copied().unwrap_or(usize::MAX), *id));
        ids
    }

    /// Edge sequence of a shortest path from the origin to `target`.
    pub fn path_to(&self, target: &str) -> Option<Vec<&UtgEdge>> {
        let mut parent: HashMap<&str, &UtgEdge> = HashMap::new();
        let mut queue = VecDeque::from([self.origin.as_str()]);
        let mut seen = std::collections::HashSet::from([self.origin.as_str()]);
        while let Some(s) = queue.pop_front() {
            if s == target {
                let mut path = Vec::new();
                let mut at = s;
                while at != self.origin {
                    let e = parent[at];
                    path.push(e);
                    at = e.from.as_str();
                }
                path.reverse();
                return Some(path);
            }
            for e in self.edges.iter().filter(|e| e.from == s) {
                if seen.insert(e.to.as_str()) {
                    parent.insert(e.to.as_str(), e);
                    queue.push_back(e.to.as_str());
                }
            }
        }
        None
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ExploreError> {
        let g: UtgGraph = serde_json::from_str(text).map_err(|e| ExploreError::InvalidGraph(e.to_string()))?;
        g.validate()?;
        Ok(g)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ExploreError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json())
            .map_err(|source| ExploreError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExploreError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ExploreError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }
}

/// File name under which a graph for `origin` of `app_id` is cached.
pub fn cache_file_name(app_id: &str, origin: &str) -> String {
    let safe: String = app_id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
    format!("{safe}-{origin}.utg.json")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExploreMode {
    /// Elements probed top to bottom, left to right.
    Systematic,
    /// Probe order shuffled with a seeded generator.
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploreConfig {
    pub depth: usize,
    /// Device commands (including restarts) the explorer may issue.
    pub action_budget: usize,
    pub mode: ExploreMode,
    /// Typed into editable fields when probing them.
    pub placeholder_text: String,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            depth: 1,
            action_budget: 200,
            mode: ExploreMode::Systematic,
            placeholder_text: "placeholder".into(),
        }
    }
}

/// The command used to probe `e`, if it is interactable and addressable.
pub fn probe_for(e: &UiElement, placeholder: &str) -> Option<ActionCommand> {
    let feature = e.label()?.to_string();
    let cmd = if e.editable {
        ActionCommand::set_text(feature, placeholder)
    } else if e.clickable {
        ActionCommand::click(feature)
    } else if e.long_clickable {
        ActionCommand::new(Verb::LongClick).with_feature(feature)
    } else if e.scrollable {
        ActionCommand::scroll("down").with_feature(feature)
    } else {
        return None;
    };
    Some(cmd)
}

struct Walker<'a> {
    device: &'a mut dyn Device,
    origin_path: &'a [ActionCommand],
    budget: usize,
    used: usize,
    current: Option<String>,
}

impl Walker<'_> {
    fn restore_cost(&self, path: &[ActionCommand]) -> usize {
        1 + self.origin_path.len() + path.len()
    }

    /// Restart, then replay the recorded path. Returns the reached state.
    fn restore(&mut self, path: &[ActionCommand]) -> Result<UiState, DeviceError> {
        let mut state = self.device.restart_app()?;
        self.used += 1;
        for cmd in self.origin_path.iter().chain(path) {
            let status = self.device.execute(cmd)?;
            self.used += 1;
            state = status.new_state;
            if !status.ok || status.crash.is_some() {
                break;
            }
        }
        self.current = Some(state.state_id.clone());
        Ok(state)
    }
}

/// Systematically triggers the interactable elements of `origin` and,
/// recursively, of newly found screens up to `config.depth` actions away.
///
/// The device must be showing `origin`, reached from a fresh start by
/// `origin_path`. Between probes the explorer returns to the probed screen by
/// restarting and replaying its path; it ends back at the origin.
pub fn explore(
    device: &mut dyn Device,
    origin: &UiState,
    origin_path: &[ActionCommand],
    config: &ExploreConfig,
) -> Result<UtgGraph, ExploreError> {
    explore_until(device, origin, origin_path, config, &|| false)
}

/// [`explore`] with an external stop condition checked before every probe;
/// stopping early is reported like budget exhaustion.
pub fn explore_until(
    device: &mut dyn Device,
    origin: &UiState,
    origin_path: &[ActionCommand],
    config: &ExploreConfig,
    should_stop: &dyn Fn() -> bool,
) -> Result<UtgGraph, ExploreError> {
    if config.depth == 0 {
        return Err(ExploreError::Config("depth must be positive".into()));
    }
    if config.action_budget == 0 {
        return Err(ExploreError::Config("action_budget must be positive".into()));
    }
    let found = device.capture_state()?;
    if found.state_id != origin.state_id {
        return Err(ExploreError::NotAtOrigin { expected: origin.state_id.clone(), found: found.state_id });
    }
    let mut graph = UtgGraph::single(origin.clone());
    let mut rng = match config.mode {
        ExploreMode::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        ExploreMode::Systematic => None,
    };
    let mut walker =
        Walker { device, origin_path, budget: config.action_budget, used: 0, current: Some(origin.state_id.clone()) };
    // Reserve enough to get back to the origin at the end.
    let final_restore = 1 + origin_path.len();

    let mut frontier: Vec<(String, Vec<ActionCommand>)> = vec![(origin.state_id.clone(), Vec::new())];
    'levels: for _ in 0..config.depth {
        let mut next = Vec::new();
        for (state_id, path) in &frontier {
            let state = graph.nodes[state_id].clone();
            let mut probes: Vec<ActionCommand> = state
                .interactable_elements()
                .into_iter()
                .filter_map(|e| probe_for(e, &config.placeholder_text))
                .collect();
            probes.dedup();
            if let Some(rng) = rng.as_mut() {
                probes.shuffle(rng);
            }
            for probe in probes {
                let needs_restore = walker.current.as_deref() != Some(state_id.as_str());
                let cost = if needs_restore { walker.restore_cost(path) } else { 0 } + 1;
                if should_stop() || walker.used + cost + final_restore > walker.budget {
                    graph.budget_exhausted = true;
                    break 'levels;
                }
                if needs_restore {
                    let reached = walker.restore(path)?;
                    if &reached.state_id != state_id {
                        // The screen did not come back the same way; skip it.
                        continue;
                    }
                }
                let status = walker.device.execute(&probe)?;
                walker.used += 1;
                if status.crash.is_some() {
                    walker.current = None;
                    continue;
                }
                let to = status.new_state.state_id.clone();
                walker.current = Some(to.clone());
                if !status.ok {
                    continue;
                }
                let edge = UtgEdge { from: state_id.clone(), action: probe.clone(), to: to.clone() };
                if !graph.edges.contains(&edge) {
                    graph.edges.push(edge);
                }
                if !graph.nodes.contains_key(&to) {
                    graph.nodes.insert(to.clone(), status.new_state);
                    let mut p = path.clone();
                    p.push(probe);
                    next.push((to, p));
                }
            }
        }
        frontier = next;
    }
    if walker.current.as_deref() != Some(graph.origin.as_str()) {
        walker.restore(&[])?;
    }
    Ok(graph)
}

/// True when some element of `state` is named exactly `feature` by its text,
/// content description or resource id.
pub fn state_has_element(state: &UiState, feature: &str) -> bool {
    state.elements().iter().any(|e| {
        e.text() == Some(feature)
            || e.content_desc() == Some(feature)
            || e.resource_id() == Some(feature)
            || e.resource_name() == Some(feature)
    })
}

/// The node containing `feature` nearest to the origin; ties go to the
/// smallest state id.
pub fn closest_state_for_element(g: &UtgGraph, feature: &str) -> Result<String, ExploreError> {
    let dist = g.distances();
    g.nodes
        .values()
        .filter(|s| state_has_element(s, feature))
        .min_by_key(|s| (dist.get(s.state_id.as_str()).copied().unwrap_or(usize::MAX), s.state_id.clone()))
        .map(|s| s.state_id.clone())
        .ok_or_else(|| ExploreError::ElementAbsent(feature.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionalityEntry {
    pub element: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesized_functionality: Option<String>,
    /// Why no summary is available, when it is not.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unavailable: Option<String>,
    /// Screens along the path from the origin, ending at the element's
    /// destination when one was observed.
    pub ui_states: Vec<String>,
    /// Features triggered along that path.
    pub ui_elements: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionalityTable {
    pub origin: String,
    pub entries: Vec<FunctionalityEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UiFunction {
    pub state_id: String,
    pub activity_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unavailable: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UiFunctionTable {
    /// BFS order from the origin.
    pub entries: Vec<UiFunction>,
}

impl UiFunctionTable {
    pub fn get(&self, state_id: &str) -> Option<&UiFunction> {
        self.entries.iter().find(|e| e.state_id == state_id)
    }
}

fn ask(
    gateway: &mut dyn LlmGateway,
    prompt: String,
    clock: &dyn Clock,
    cost: Duration,
    exchanges: &mut Vec<LlmExchange>,
) -> Result<String, String> {
    let (result, latency) = timed_complete(gateway, &prompt, clock, cost);
    let (raw, error) = match &result {
        Ok(text) => (text.clone(), None),
        Err(e) => (String::new(), Some(e.to_string())),
    };
    exchanges.push(LlmExchange {
        prompt_fingerprint: prompt_fingerprint(&prompt),
        prompt,
        raw_response: raw,
        parsed: None,
        latency,
        error,
    });
    match result {
        Ok(text) if !text.trim().is_empty() => Ok(text.trim().to_string()),
        Ok(_) => Err("empty summary".into()),
        Err(e) => Err(e.to_string()),
    }
}

/// One entry per interactable element of the origin screen, in screen
/// order. Each element is summarized at the screen closest to the origin
/// that contains it, from the screen its probe led to. Gateway failures mark
/// the entry unavailable. Returns the model exchanges made.
pub fn synthesize_functionality(
    g: &UtgGraph,
    gateway: &mut dyn LlmGateway,
    clock: &dyn Clock,
    cost: Duration,
) -> (FunctionalityTable, Vec<LlmExchange>) {
    let origin = &g.nodes[&g.origin];
    let mut exchanges = Vec::new();
    let mut entries = Vec::new();
    for e in origin.interactable_elements() {
        let Some(feature) = e.label().map(str::to_string) else { continue };
        let at = closest_state_for_element(g, &feature).unwrap_or_else(|_| g.origin.clone());
        let mut ui_states = vec![g.origin.clone()];
        let mut ui_elements = Vec::new();
        for edge in g.path_to(&at).unwrap_or_default() {
            ui_states.push(edge.to.clone());
            ui_elements.push(edge.action.feature.clone().unwrap_or_else(|| edge.action.action.to_string()));
        }
        let source = &g.nodes[&at];
        let destination =
            g.edges.iter().find(|edge| edge.from == at && edge.action.feature.as_deref() == Some(feature.as_str()));
        let outcome = match destination {
            Some(edge) => {
                ui_states.push(edge.to.clone());
                ui_elements.push(feature.clone());
                let dest = &g.nodes[&edge.to];
                if edge.to == at {
                    format!("Interacting with it keeps the user on the same screen:\n\n{}", encode_state_text(dest))
                } else {
                    format!("Interacting with it leads to this screen:\n\n{}", encode_state_text(dest))
                }
            }
            None => format!(
                "Interacting with it did not lead to a new screen during exploration. The current screen is:\n\n{}",
                encode_state_text(source)
            ),
        };
        let prompt = SUMMARIZE_ELEMENT
            .replace("{source_activity}", &source.activity_name)
            .replace("{element}", &feature)
            .replace("{outcome}", outcome.trim_end());
        let (summary, unavailable) = match ask(gateway, prompt, clock, cost, &mut exchanges) {
            Ok(s) => (Some(s), None),
            Err(e) => (None, Some(e)),
        };
        entries.push(FunctionalityEntry {
            element: feature,
            synthesized_functionality: summary,
            unavailable,
            ui_states,
            ui_elements,
        });
    }
    (FunctionalityTable { origin: g.origin.clone(), entries }, exchanges)
}

/// One description per node, in BFS order from the origin.
pub fn synthesize_ui_functions(
    g: &UtgGraph,
    gateway: &mut dyn LlmGateway,
    clock: &dyn Clock,
    cost: Duration,
) -> (UiFunctionTable, Vec<LlmExchange>) {
    let mut exchanges = Vec::new();
    let entries = g
        .bfs_order()
        .into_iter()
        .map(|id| {
            let state = &g.nodes[id];
            let prompt = DESCRIBE_STATE.replace("{screen}", encode_state_text(state).trim_end());
            let (description, unavailable) = match ask(gateway, prompt, clock, cost, &mut exchanges) {
                Ok(s) => (Some(s), None),
                Err(e) => (None, Some(e)),
            };
            UiFunction {
                state_id: id.to_string(),
                activity_name: state.activity_name.clone(),
                description,
                unavailable,
            }
        })
        .collect();
    (UiFunctionTable { entries }, exchanges)
}

/// Everything learned about the app around one stuck screen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppKnowledge {
    pub graph: UtgGraph,
    pub functionality: FunctionalityTable,
    pub ui_functions: UiFunctionTable,
}

impl AppKnowledge {
    /// Text block for the replay prompt: the origin's element table, then
    /// the per-screen descriptions.
    pub fn render(&self) -> String {
        let activity = |id: &str| self.graph.nodes.get(id).map_or(id.to_string(), |s| s.activity_name.clone());
        let mut out = format!(
            "Elements on the screen {} ({}) and what they do:\n",
            activity(&self.functionality.origin),
            &self.functionality.origin[..8.min(self.functionality.origin.len())]
        );
        for entry in &self.functionality.entries {
            let summary = entry.synthesized_functionality.as_deref().unwrap_or("(no summary available)");
            out.push_str(&format!("- \"{}\": {}", entry.element, summary));
            if entry.ui_states.len() > 1 {
                let path: Vec<String> = entry.ui_states.iter().map(|s| activity(s)).collect();
                out.push_str(&format!(" Path: {}", path.join(" -> ")));
                out.push_str(&format!(
                    " via {}.",
                    entry.ui_elements.iter().map(|e| format!("\"{e}\"")).collect::<Vec<_>>().join(", ")
                ));
            }
            out.push('\n');
        }
        out.push_str("\nScreens seen while exploring:\n");
        for f in &self.ui_functions.entries {
            let text = f.description.as_deref().unwrap_or("(no description available)");
            out.push_str(&format!("- {} ({}): {}\n", f.activity_name, &f.state_id[..8.min(f.state_id.len())], text));
        }
        out
    }
}
