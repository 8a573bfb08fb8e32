//! A scriptable fake app: a finite state machine over screens with
//! transition and crash rules, loaded from a JSON document.
//!
//! ```json
//! {
//!   "app_id": "demo",
//!   "initial_state": "home",
//!   "states": {
//!     "home": { "activity": "MainActivity",
//!               "elements": [{ "id": "ok", "class": "android.widget.Button", "text": "OK", "clickable": true }] },
//!     "done": { "activity": "DoneActivity", "elements": [] }
//!   },
//!   "transitions": [{ "from": "home", "trigger": { "verb": "click", "element": "ok" }, "to": "done" }],
//!   "crash_rules": [{ "state": "done", "trigger": { "verb": "back" },
//!                     "crash": { "exception_type": "IllegalStateException", "message": "boom" } }]
//! }
//! ```
//!
//! Triggers name elements by `id`; a command's feature string is first
//! resolved against the rendered screen, then compared by id. Optional
//! trigger keys: `input_text` (exact typed text), `direction`, and
//! `when: {field, equals}` (current value of an editable element).

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{resolve_feature, Bounds, CrashInfo, Device, DeviceError, ExecStatus, UiElement, UiState};
use crate::llm::{ActionCommand, Verb};

pub const SCREEN_WIDTH: i32 = 1080;
pub const SCREEN_HEIGHT: i32 = 1920;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed simulator spec: {0}")]
    Parse(String),
    #[error("invalid simulator spec:\n  {}", .0.join("\n  "))]
    SpecInvalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementSpec {
    pub id: String,
    #[serde(default = "default_class", rename = "class")]
    pub class_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource_id: Option<String>,
    #[serde(default)]
    pub clickable: bool,
    #[serde(default)]
    pub long_clickable: bool,
    #[serde(default)]
    pub editable: bool,
    #[serde(default)]
    pub scrollable: bool,
    /// `[left, top, right, bottom]`; stacked vertically when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<[i32; 4]>,
}

fn default_class() -> String {
    "android.widget.TextView".into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpec {
    pub activity: String,
    #[serde(default)]
    pub elements: Vec<ElementSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FieldCondition {
    pub field: String,
    pub equals: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Trigger {
    pub verb: Verb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<FieldCondition>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: String,
    pub trigger: Trigger,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashPayload {
    pub exception_type: String,
    #[serde(default)]
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashRule {
    pub state: String,
    pub trigger: Trigger,
    pub crash: CrashPayload,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimAppSpec {
    pub app_id: String,
    pub initial_state: String,
    pub states: BTreeMap<String, StateSpec>,
    #[serde(default)]
    pub transitions: Vec<Transition>,
    #[serde(default)]
    pub crash_rules: Vec<CrashRule>,
}

impl SimAppSpec {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let spec: SimAppSpec = serde_json::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Every violation found, each prefixed with its location.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.states.is_empty() {
            out.push("states: no states defined".to_string());
        }
        if !self.states.contains_key(&self.initial_state) {
            out.push(format!("initial_state: unknown state '{}'", self.initial_state));
        }
        let editable: BTreeSet<&str> = self
            .states
            .values()
            .flat_map(|s| s.elements.iter())
            .filter(|e| e.editable)
            .map(|e| e.id.as_str())
            .collect();
        for (name, state) in &self.states {
            let mut seen = BTreeSet::new();
            for (i, e) in state.elements.iter().enumerate() {
                if e.id.trim().is_empty() {
                    out.push(format!("states.{name}.elements[{i}]: empty id"));
                }
                if !seen.insert(e.id.as_str()) {
                    out.push(format!("states.{name}.elements[{i}]: duplicate id '{}'", e.id));
                }
                if let Some([l, t, r, b]) = e.bounds {
                    if !Bounds::new(l, t, r, b).is_valid() {
                        out.push(format!("states.{name}.elements[{i}]: bounds not well-ordered"));
                    }
                }
            }
        }
        let check_trigger = |loc: &str, state: &str, trigger: &Trigger, out: &mut Vec<String>| {
            let Some(spec) = self.states.get(state) else {
                out.push(format!("{loc}: unknown state '{state}'"));
                return;
            };
            match &trigger.element {
                Some(id) if !spec.elements.iter().any(|e| &e.id == id) => {
                    out.push(format!("{loc}.trigger.element: '{id}' not in state '{state}'"));
                }
                None if trigger.verb.requires_feature() => {
                    out.push(format!("{loc}.trigger: {} needs an element", trigger.verb));
                }
                _ => {}
            }
            if trigger.input_text.is_some() && trigger.verb != Verb::SetText {
                out.push(format!("{loc}.trigger.input_text: only valid for set_text"));
            }
            if let Some(cond) = &trigger.when {
                if !editable.contains(cond.field.as_str()) {
                    out.push(format!("{loc}.trigger.when.field: '{}' is not an editable element", cond.field));
                }
            }
        };
        let mut transition_keys = HashMap::new();
        for (i, t) in self.transitions.iter().enumerate() {
            let loc = format!("transitions[{i}]");
            check_trigger(&loc, &t.from, &t.trigger, &mut out);
            if !self.states.contains_key(&t.to) {
                out.push(format!("{loc}.to: unknown state '{}'", t.to));
            }
            if let Some(prev) = transition_keys.insert((&t.from, &t.trigger), i) {
                out.push(format!("{loc}: trigger duplicates transitions[{prev}]"));
            }
        }
        let mut crash_keys = HashMap::new();
        for (i, c) in self.crash_rules.iter().enumerate() {
            let loc = format!("crash_rules[{i}]");
            check_trigger(&loc, &c.state, &c.trigger, &mut out);
            if c.crash.exception_type.trim().is_empty() {
                out.push(format!("{loc}.crash.exception_type: empty"));
            }
            if let Some(prev) = crash_keys.insert((&c.state, &c.trigger), i) {
                out.push(format!("{loc}: trigger duplicates crash_rules[{prev}]"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(SimError::SpecInvalid(v))
        }
    }

    /// States reachable from the initial state along declared transitions,
    /// ignoring field conditions.
    pub fn reachable_states(&self) -> BTreeSet<String> {
        let mut seen = BTreeSet::from([self.initial_state.clone()]);
        let mut queue = VecDeque::from([self.initial_state.clone()]);
        while let Some(s) = queue.pop_front() {
            for t in self.transitions.iter().filter(|t| t.from == s) {
                if seen.insert(t.to.clone()) {
                    queue.push_back(t.to.clone());
                }
            }
        }
        seen
    }

    fn default_field_values(&self) -> BTreeMap<String, String> {
        let mut values = BTreeMap::new();
        for state in self.states.values() {
            for e in state.elements.iter().filter(|e| e.editable) {
                values.entry(e.id.clone()).or_insert_with(|| e.text.clone().unwrap_or_default());
            }
        }
        values
    }
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<SimAppSpec, SimError> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|source| SimError::Io { path: path.display().to_string(), source })?;
    SimAppSpec::from_json(&text)
}

/// A running instance of a [`SimAppSpec`].
#[derive(Debug, Clone)]
pub struct SimSession {
    spec: SimAppSpec,
    current: String,
    field_values: BTreeMap<String, String>,
    crashed: Option<CrashInfo>,
    action_log: Vec<ActionCommand>,
}

impl SimSession {
    pub fn new(spec: SimAppSpec) -> Self {
        let field_values = spec.default_field_values();
        SimSession { current: spec.initial_state.clone(), spec, field_values, crashed: None, action_log: Vec::new() }
    }

    pub fn spec(&self) -> &SimAppSpec {
        &self.spec
    }

    pub fn current(&self) -> &str {
        &self.current
    }

    pub fn field_value(&self, field: &str) -> Option<&str> {
        self.field_values.get(field).map(String::as_str)
    }

    pub fn crashed(&self) -> Option<&CrashInfo> {
        self.crashed.as_ref()
    }

    /// Every command received, including restarts and unmatched ones.
    pub fn action_log(&self) -> &[ActionCommand] {
        &self.action_log
    }

    pub fn render(&self, state_name: &str) -> UiState {
        let spec = &self.spec.states[state_name];
        let mut root =
            UiElement::new("root", "android.widget.FrameLayout", Bounds::new(0, 0, SCREEN_WIDTH, SCREEN_HEIGHT));
        for (i, e) in spec.elements.iter().enumerate() {
            let bounds = match e.bounds {
                Some([l, t, r, b]) => Bounds::new(l, t, r, b),
                None => {
                    let top = 100 + 160 * i as i32;
                    Bounds::new(40, top, SCREEN_WIDTH - 40, top + 120)
                }
            };
            let mut el = UiElement::new(&e.id, &e.class_name, bounds);
            el.text = if e.editable { self.field_values.get(&e.id).cloned() } else { e.text.clone() };
            el.content_desc = e.desc.clone();
            el.resource_id = e.resource_id.clone();
            el.clickable = e.clickable;
            el.long_clickable = e.long_clickable;
            el.editable = e.editable;
            el.scrollable = e.scrollable;
            root.children.push(el);
        }
        UiState::new(&spec.activity, root)
    }

    fn trigger_matches(&self, trigger: &Trigger, cmd: &ActionCommand, element: Option<&str>) -> bool {
        trigger.verb == cmd.action
            && trigger.element.as_deref() == element
            && trigger.input_text.as_ref().is_none_or(|t| cmd.input_text.as_ref() == Some(t))
            && trigger.direction.as_ref().is_none_or(|d| cmd.direction.as_ref() == Some(d))
            && trigger.when.as_ref().is_none_or(|c| self.field_values.get(&c.field) == Some(&c.equals))
    }

    /// Applies one command. Crash rules are checked before transitions.
    pub fn step(&mut self, cmd: &ActionCommand) -> Result<ExecStatus, DeviceError> {
        if self.crashed.is_some() {
            return Err(DeviceError::AlreadyCrashed);
        }
        cmd.validate().map_err(|reason| DeviceError::InvalidCommand { command: cmd.to_string(), reason })?;
        if cmd.action == Verb::Restart {
            let state = self.restart_app()?;
            return Ok(ExecStatus::success("restarted app", state));
        }
        self.action_log.push(cmd.clone());
        let before = self.render(&self.current);
        let element = match cmd.feature.as_deref() {
            Some(feature) => match resolve_feature(&before, feature) {
                Ok(e) => Some(e.element_id.clone()),
                Err(miss) if cmd.action.requires_feature() => return Ok(ExecStatus::unmatched(miss, before)),
                Err(_) => None,
            },
            None => None,
        };
        let element = element.as_deref();

        let crash = self
            .spec
            .crash_rules
            .iter()
            .find(|r| r.state == self.current && self.trigger_matches(&r.trigger, cmd, element))
            .map(|r| r.crash.clone());
        if let Some(crash) = crash {
            self.apply_text(cmd, element);
            let info = CrashInfo {
                exception_type: crash.exception_type,
                message: crash.message,
                raised_in_activity: before.activity_name.clone(),
            };
            self.crashed = Some(info.clone());
            return Ok(ExecStatus {
                ok: true,
                detail: format!("app crashed: {}", info.exception_type),
                new_state: self.render(&self.current),
                crash: Some(info),
                no_match: None,
            });
        }

        let to = self
            .spec
            .transitions
            .iter()
            .find(|t| t.from == self.current && self.trigger_matches(&t.trigger, cmd, element))
            .map(|t| t.to.clone());
        let typed = self.apply_text(cmd, element);
        match to {
            Some(to) => {
                self.current = to;
                Ok(ExecStatus::success(format!("{cmd} performed"), self.render(&self.current)))
            }
            None if typed => Ok(ExecStatus::success(format!("{cmd} performed"), self.render(&self.current))),
            None => Ok(ExecStatus::failure(format!("{cmd} had no effect"), before)),
        }
    }

    fn apply_text(&mut self, cmd: &ActionCommand, element: Option<&str>) -> bool {
        if cmd.action != Verb::SetText {
            return false;
        }
        let Some(id) = element else { return false };
        let editable = self.spec.states[&self.current].elements.iter().any(|e| e.id == id && e.editable);
        if editable {
            self.field_values.insert(id.to_string(), cmd.input_text.clone().unwrap_or_default());
        }
        editable
    }
}

impl Device for SimSession {
    fn capture_state(&mut self) -> Result<UiState, DeviceError> {
        Ok(self.render(&self.current))
    }

    fn execute(&mut self, cmd: &ActionCommand) -> Result<ExecStatus, DeviceError> {
        self.step(cmd)
    }

    fn restart_app(&mut self) -> Result<UiState, DeviceError> {
        self.action_log.push(ActionCommand::new(Verb::Restart));
        self.current = self.spec.initial_state.clone();
        self.field_values = self.spec.default_field_values();
        self.crashed = None;
        Ok(self.render(&self.current))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LIBRENEWS: &str = include_str!("../fixtures/sim/librenews.json");
    const HIDDEN_ABOUT: &str = include_str!("../fixtures/sim/hidden_about.json");
    const CHECKOUT: &str = include_str!("../fixtures/sim/checkout.json");

    fn session(text: &str) -> SimSession {
        SimSession::new(SimAppSpec::from_json(text).unwrap())
    }

    #[test]
    fn fixtures_load() {
        // count "activity" keys directly in the file text as the oracle
        for (text, expected) in [(LIBRENEWS, 4), (HIDDEN_ABOUT, 3), (CHECKOUT, 3)] {
            let spec = SimAppSpec::from_json(text).unwrap();
            assert_eq!(spec.states.len(), expected);
            assert_eq!(text.matches("\"activity\"").count(), expected);
        }
    }

    #[test]
    fn url_crash_flow() {
        let mut s = session(LIBRENEWS);
        assert!(s.step(&ActionCommand::set_text("https://librenews.io/api", "xxyyzz")).unwrap().ok);
        assert!(s.step(&ActionCommand::click("OK")).unwrap().ok);
        let status = s.step(&ActionCommand::click("REFRESH")).unwrap();
        let crash = status.crash.unwrap();
        assert_eq!(crash.raised_in_activity, "MainFlashActivity");
        assert_eq!(s.action_log().last(), Some(&ActionCommand::click("REFRESH")));
        assert!(matches!(s.step(&ActionCommand::click("INFO")), Err(DeviceError::AlreadyCrashed)));
    }

    #[test]
    fn refresh_without_bad_url_is_harmless() {
        let mut s = session(LIBRENEWS);
        s.step(&ActionCommand::click("OK")).unwrap();
        let status = s.step(&ActionCommand::click("REFRESH")).unwrap();
        assert!(status.crash.is_none());
    }

    #[test]
    fn back_on_initial_is_noop() {
        let mut s = session(LIBRENEWS);
        let before = s.capture_state().unwrap();
        let status = s.step(&ActionCommand::new(Verb::Back)).unwrap();
        assert!(!status.ok);
        assert_eq!(status.new_state.state_id, before.state_id);
    }

    #[test]
    fn unmatched_feature_keeps_state() {
        let mut s = session(LIBRENEWS);
        let before = s.capture_state().unwrap();
        let status = s.step(&ActionCommand::click("Nonexistent")).unwrap();
        assert!(!status.ok);
        assert!(status.detail.contains("exact text"));
        assert_eq!(s.capture_state().unwrap().state_id, before.state_id);
    }

    #[test]
    fn transition_goes_to_target() {
        let mut s = session(LIBRENEWS);
        s.step(&ActionCommand::click("OK")).unwrap();
        let status = s.step(&ActionCommand::click("INFO")).unwrap();
        assert_eq!(status.new_state.activity_name, "WelcomeActivity");
        assert_eq!(s.current(), "about");
    }

    #[test]
    fn restart_resets_everything() {
        let mut s = session(LIBRENEWS);
        let initial = s.capture_state().unwrap();
        s.step(&ActionCommand::set_text("https://librenews.io/api", "xxyyzz")).unwrap();
        s.step(&ActionCommand::click("OK")).unwrap();
        let a = s.restart_app().unwrap();
        let b = s.restart_app().unwrap();
        assert_eq!(a, b);
        assert_eq!(a, initial);
        assert_eq!(s.field_value("server_url"), Some("https://librenews.io/api"));
    }

    #[test]
    fn hidden_about_needs_menu() {
        let mut s = session(HIDDEN_ABOUT);
        assert!(!s.step(&ActionCommand::click("About")).unwrap().ok);
        assert!(s.step(&ActionCommand::click("More options")).unwrap().ok);
        assert!(s.step(&ActionCommand::click("About")).unwrap().crash.is_some());
    }

    #[test]
    fn checkout_crashes_on_empty_address() {
        let mut s = session(CHECKOUT);
        for f in ["Checkout", "Continue"] {
            assert!(s.step(&ActionCommand::click(f)).unwrap().ok);
        }
        assert!(s.step(&ActionCommand::click("Pay")).unwrap().crash.is_some());

        s.restart_app().unwrap();
        s.step(&ActionCommand::click("Checkout")).unwrap();
        s.step(&ActionCommand::set_text("Address", "1 Main St")).unwrap();
        s.step(&ActionCommand::click("Continue")).unwrap();
        let status = s.step(&ActionCommand::click("Pay")).unwrap();
        assert!(status.crash.is_none());
        assert_eq!(s.current(), "cart");
    }

    #[test]
    fn missing_target_reported() {
        let text = LIBRENEWS.replacen("\"to\": \"about\"", "\"to\": \"nowhere\"", 1);
        match SimAppSpec::from_json(&text) {
            Err(SimError::SpecInvalid(v)) => assert!(v.iter().any(|m| m.contains("'nowhere'")), "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_states_rejected() {
        let text = r#"{"app_id": "x", "initial_state": "a", "states": {}}"#;
        match SimAppSpec::from_json(text) {
            Err(SimError::SpecInvalid(v)) => {
                assert!(v.iter().any(|m| m.contains("no states")));
                assert!(v.iter().any(|m| m.contains("initial_state")));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ambiguous_trigger_rejected() {
        let mut spec = SimAppSpec::from_json(LIBRENEWS).unwrap();
        let dup = spec.transitions[0].clone();
        spec.transitions.push(dup);
        assert!(spec.violations().iter().any(|m| m.contains("duplicates")));
    }

    // Fixture lint: exhaustively poke every element with every verb from
    // every reachable screen and compare with the declared transition graph.
    #[test]
    fn declared_reachability_matches_exhaustive_search() {
        for text in [LIBRENEWS, HIDDEN_ABOUT, CHECKOUT] {
            let spec = SimAppSpec::from_json(text).unwrap();
            let mut seen = BTreeSet::from([spec.initial_state.clone()]);
            let mut queue = VecDeque::from([(spec.initial_state.clone(), Vec::<ActionCommand>::new())]);
            while let Some((name, path)) = queue.pop_front() {
                let mut probes = vec![ActionCommand::new(Verb::Back), ActionCommand::scroll("down")];
                for e in &spec.states[&name].elements {
                    let mut c = ActionCommand::click(&e.id);
                    c.feature = Some(e.text.clone().or(e.desc.clone()).unwrap_or(e.id.clone()));
                    probes.push(c.clone());
                    let mut l = c.clone();
                    l.action = Verb::LongClick;
                    probes.push(l);
                }
                for probe in probes {
                    let mut s = SimSession::new(spec.clone());
                    for p in &path {
                        s.step(p).unwrap();
                    }
                    if let Ok(status) = s.step(&probe) {
                        if status.crash.is_none() && seen.insert(s.current().to_string()) {
                            let mut next = path.clone();
                            next.push(probe);
                            queue.push_back((s.current().to_string(), next));
                        }
                    }
                }
            }
            assert_eq!(seen, spec.reachable_states());
        }
    }
}
