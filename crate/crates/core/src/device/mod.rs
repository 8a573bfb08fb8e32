//! Device abstraction: screen observation, feature resolution, command
//! execution and crash detection.
//!
//! Two backends implement [`Device`]: the in-process
//! [`SimSession`](crate::simulator::SimSession) and the debug-bridge
//! [`AdbDevice`].

mod adb;

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::llm::ActionCommand;

pub use adb::{parse_hierarchy_dump, AdbCommandRunner, AdbDevice, AdbDeviceConfig, CommandRunner, RecordingRunner};

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("device unavailable: {0}")]
    Unavailable(String),
    #[error("app already crashed; restart before sending more commands")]
    AlreadyCrashed,
    #[error("invalid command {command}: {reason}")]
    InvalidCommand { command: String, reason: String },
    #[error("cannot parse UI hierarchy: {0}")]
    BadHierarchy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Bounds {
    pub left: i32,
    pub top: i32,
    pub right: i32,
    pub bottom: i32,
}

impl Bounds {
    pub fn new(left: i32, top: i32, right: i32, bottom: i32) -> Self {
        Bounds { left, top, right, bottom }
    }

    pub fn is_valid(&self) -> bool {
        self.left >= 0 && self.top >= 0 && self.left <= self.right && self.top <= self.bottom
    }

    pub fn center(&self) -> (i32, i32) {
        ((self.left + self.right) / 2, (self.top + self.bottom) / 2)
    }

    pub fn width(&self) -> i32 {
        self.right - self.left
    }

    pub fn height(&self) -> i32 {
        self.bottom - self.top
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UiElement {
    pub element_id: String,
    pub class_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_desc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource_id: Option<String>,
    pub bounds: Bounds,
    #[serde(default)]
    pub clickable: bool,
    #[serde(default)]
    pub long_clickable: bool,
    #[serde(default)]
    pub editable: bool,
    #[serde(default)]
    pub scrollable: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<UiElement>,
}

fn non_empty(s: &Option<String>) -> Option<&str> {
    s.as_deref().filter(|s| !s.is_empty())
}

impl UiElement {
    pub fn new(element_id: impl Into<String>, class_name: impl Into<String>, bounds: Bounds) -> Self {
        UiElement {
            element_id: element_id.into(),
            class_name: class_name.into(),
            text: None,
            content_desc: None,
            resource_id: None,
            bounds,
            clickable: false,
            long_clickable: false,
            editable: false,
            scrollable: false,
            children: Vec::new(),
        }
    }

    pub fn interactable(&self) -> bool {
        self.clickable || self.long_clickable || self.editable || self.scrollable
    }

    pub fn text(&self) -> Option<&str> {
        non_empty(&self.text)
    }

    pub fn content_desc(&self) -> Option<&str> {
        non_empty(&self.content_desc)
    }

    pub fn resource_id(&self) -> Option<&str> {
        non_empty(&self.resource_id)
    }

    /// `com.app:id/ok_button` -> `ok_button`.
    pub fn resource_name(&self) -> Option<&str> {
        self.resource_id().map(|r| r.rsplit('/').next().unwrap_or(r))
    }

    /// The string a model would most naturally use to name this element.
    pub fn label(&self) -> Option<&str> {
        self.text().or(self.content_desc()).or(self.resource_name())
    }

    pub fn short_class(&self) -> &str {
        self.class_name.rsplit('.').next().unwrap_or(&self.class_name)
    }

    fn position_key(&self) -> (i32, i32) {
        (self.bounds.top, self.bounds.left)
    }

    fn skeleton(&self) -> String {
        // Typed text is content, not screen identity.
        let text = if self.editable { "" } else { self.text().unwrap_or("") };
        format!(
            "{}\u{1f}{}\u{1f}{}\u{1f}{}",
            self.class_name,
            text,
            self.content_desc().unwrap_or(""),
            self.resource_id().unwrap_or("")
        )
    }

    fn sorted_children(&self) -> Vec<&UiElement> {
        let mut children: Vec<&UiElement> = self.children.iter().collect();
        children.sort_by(|a, b| canonical_order(a, b));
        children
    }

    fn count(&self) -> usize {
        1 + self.children.iter().map(UiElement::count).sum::<usize>()
    }
}

fn canonical_order(a: &UiElement, b: &UiElement) -> Ordering {
    a.position_key()
        .cmp(&b.position_key())
        .then_with(|| a.skeleton().cmp(&b.skeleton()))
        .then_with(|| a.element_id.cmp(&b.element_id))
}

/// A screen snapshot. `state_id` is derived from the content, so two
/// observations of the same screen compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UiState {
    pub state_id: String,
    pub activity_name: String,
    pub root: UiElement,
}

impl UiState {
    pub fn new(activity_name: impl Into<String>, root: UiElement) -> Self {
        let activity_name = activity_name.into();
        let state_id = fingerprint(&activity_name, &root);
        UiState { state_id, activity_name, root }
    }

    /// Descendants of the root in canonical pre-order (siblings by top, then
    /// left). The root itself is a container and is not included.
    pub fn elements(&self) -> Vec<&UiElement> {
        fn walk<'a>(e: &'a UiElement, out: &mut Vec<&'a UiElement>) {
            for child in e.sorted_children() {
                out.push(child);
                walk(child, out);
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    pub fn interactable_elements(&self) -> Vec<&UiElement> {
        self.elements().into_iter().filter(|e| e.interactable()).collect()
    }

    pub fn element(&self, element_id: &str) -> Option<&UiElement> {
        self.elements().into_iter().find(|e| e.element_id == element_id)
    }

    /// Node count including the root.
    pub fn node_count(&self) -> usize {
        self.root.count()
    }

    pub fn short_id(&self) -> &str {
        &self.state_id[..self.state_id.len().min(8)]
    }
}

/// SHA-256 over the activity and the canonicalized element skeleton, first 16
/// hex digits.
pub fn fingerprint(activity_name: &str, root: &UiElement) -> String {
    fn feed(e: &UiElement, hasher: &mut Sha256) {
        hasher.update(e.skeleton().as_bytes());
        hasher.update(b"(");
        for child in e.sorted_children() {
            feed(child, hasher);
        }
        hasher.update(b")");
    }
    let mut hasher = Sha256::new();
    hasher.update(activity_name.as_bytes());
    hasher.update(b"\n");
    feed(root, &mut hasher);
    hasher.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn quote(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

/// Deterministic text outline of a screen: a header line, then one line per
/// element with its index, short class, text/desc/id and flags, indented by
/// depth.
pub fn encode_state_text(state: &UiState) -> String {
    fn walk(e: &UiElement, depth: usize, index: &mut usize, out: &mut String) {
        for child in e.sorted_children() {
            out.push_str(&"  ".repeat(depth));
            out.push_str(&format!("[{}] {}", *index, child.short_class()));
            *index += 1;
            if let Some(t) = child.text() {
                out.push_str(&format!(" text=\"{}\"", quote(t)));
            }
            if let Some(d) = child.content_desc() {
                out.push_str(&format!(" desc=\"{}\"", quote(d)));
            }
            if let Some(r) = child.resource_id() {
                out.push_str(&format!(" id=\"{}\"", quote(r)));
            }
            for (flag, set) in [
                ("clickable", child.clickable),
                ("long-clickable", child.long_clickable),
                ("editable", child.editable),
                ("scrollable", child.scrollable),
            ] {
                if set {
                    out.push(' ');
                    out.push_str(flag);
                }
            }
            out.push('\n');
            walk(child, depth + 1, index, out);
        }
    }
    let mut out = format!("Activity: {}\n", state.activity_name);
    walk(&state.root, 0, &mut 0, &mut out);
    out
}

const TIER_NAMES: [&str; 5] =
    ["exact text", "exact content-desc", "resource-id suffix", "case-insensitive text", "substring of text or desc"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct NoMatch {
    pub feature: String,
    /// One entry per cascade tier tried, all misses.
    pub tiers_missed: Vec<String>,
}

impl fmt::Display for NoMatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "no element matches feature \"{}\" (tried: {})", self.feature, self.tiers_missed.join(", "))
    }
}

/// Finds the element a feature string refers to. Tiers, first non-empty wins:
/// exact text, exact content-desc, resource-id suffix, case-insensitive text,
/// case-insensitive substring of text or content-desc. Ties go to the topmost,
/// then leftmost element.
pub fn resolve_feature<'a>(state: &'a UiState, feature: &str) -> Result<&'a UiElement, NoMatch> {
    let feature = feature.trim();
    let lower = feature.to_lowercase();
    let elements = state.elements();
    type Tier<'f> = Box<dyn Fn(&UiElement) -> bool + 'f>;
    let tiers: [Tier<'_>; 5] = [
        Box::new(|e| e.text() == Some(feature)),
        Box::new(|e| e.content_desc() == Some(feature)),
        Box::new(|e| e.resource_id().is_some_and(|r| r == feature || e.resource_name() == Some(feature))),
        Box::new(|e| e.text().is_some_and(|t| t.to_lowercase() == lower)),
        Box::new(|e| {
            !lower.is_empty()
                && (e.text().is_some_and(|t| t.to_lowercase().contains(&lower))
                    || e.content_desc().is_some_and(|d| d.to_lowercase().contains(&lower)))
        }),
    ];
    for tier in &tiers {
        let best = elements
            .iter()
            .copied()
            .filter(|e| tier(e))
            .min_by(|a, b| a.position_key().cmp(&b.position_key()).then_with(|| a.element_id.cmp(&b.element_id)));
        if let Some(e) = best {
            return Ok(e);
        }
    }
    Err(NoMatch { feature: feature.to_string(), tiers_missed: TIER_NAMES.iter().map(|s| s.to_string()).collect() })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashInfo {
    pub exception_type: String,
    pub message: String,
    pub raised_in_activity: String,
}

/// Outcome of one command. Semantic failures (nothing matched, nothing
/// happened) are `ok = false`, not errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecStatus {
    pub ok: bool,
    pub detail: String,
    pub new_state: UiState,
    pub crash: Option<CrashInfo>,
    /// Set when the failure was a feature-resolution miss.
    pub no_match: Option<NoMatch>,
}

impl ExecStatus {
    pub fn success(detail: impl Into<String>, new_state: UiState) -> Self {
        ExecStatus { ok: true, detail: detail.into(), new_state, crash: None, no_match: None }
    }

    pub fn failure(detail: impl Into<String>, new_state: UiState) -> Self {
        ExecStatus { ok: false, detail: detail.into(), new_state, crash: None, no_match: None }
    }

    pub fn unmatched(miss: NoMatch, state: UiState) -> Self {
        ExecStatus { ok: false, detail: miss.to_string(), new_state: state, crash: None, no_match: Some(miss) }
    }
}

pub trait Device {
    fn capture_state(&mut self) -> Result<UiState, DeviceError>;

    fn execute(&mut self, cmd: &ActionCommand) -> Result<ExecStatus, DeviceError>;

    /// Force-stops and relaunches the app, returning its first screen.
    fn restart_app(&mut self) -> Result<UiState, DeviceError>;
}

impl<D: Device + ?Sized> Device for &mut D {
    fn capture_state(&mut self) -> Result<UiState, DeviceError> {
        (**self).capture_state()
    }

    fn execute(&mut self, cmd: &ActionCommand) -> Result<ExecStatus, DeviceError> {
        (**self).execute(cmd)
    }

    fn restart_app(&mut self) -> Result<UiState, DeviceError> {
        (**self).restart_app()
    }
}

impl<D: Device + ?Sized> Device for Box<D> {
    fn capture_state(&mut self) -> Result<UiState, DeviceError> {
        (**self).capture_state()
    }

    fn execute(&mut self, cmd: &ActionCommand) -> Result<ExecStatus, DeviceError> {
        (**self).execute(cmd)
    }

    fn restart_app(&mut self) -> Result<UiState, DeviceError> {
        (**self).restart_app()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn button(id: &str, text: &str, top: i32, left: i32) -> UiElement {
        let mut e = UiElement::new(id, "android.widget.Button", Bounds::new(left, top, left + 100, top + 50));
        e.text = Some(text.into());
        e.clickable = true;
        e
    }

    fn screen(children: Vec<UiElement>) -> UiState {
        let mut root = UiElement::new("root", "android.widget.FrameLayout", Bounds::new(0, 0, 1080, 1920));
        root.children = children;
        UiState::new("MainActivity", root)
    }

    #[test]
    fn resolve_exact_and_casefold() {
        let state = screen(vec![button("r", "REFRESH", 100, 0), button("i", "INFO", 200, 0)]);
        assert_eq!(resolve_feature(&state, "REFRESH").unwrap().element_id, "r");
        assert_eq!(resolve_feature(&state, "refresh").unwrap().element_id, "r");
        assert_eq!(resolve_feature(&state, "ref").unwrap().element_id, "r");
    }

    #[test]
    fn resolve_prefers_upper_element() {
        let state = screen(vec![button("low", "OK", 500, 0), button("high", "OK", 100, 300)]);
        assert_eq!(resolve_feature(&state, "OK").unwrap().element_id, "high");
    }

    #[test]
    fn resolve_tier_order() {
        let mut desc = UiElement::new("d", "ImageButton", Bounds::new(0, 0, 10, 10));
        desc.content_desc = Some("Search".into());
        let mut rid = UiElement::new("x", "ImageButton", Bounds::new(0, 20, 10, 30));
        rid.resource_id = Some("com.app:id/search".into());
        let lower = button("t", "search", 900, 0);
        let state = screen(vec![lower, desc, rid]);
        // exact text beats content-desc even though it sits lower
        assert_eq!(resolve_feature(&state, "search").unwrap().element_id, "t");
        assert_eq!(resolve_feature(&state, "Search").unwrap().element_id, "d");
    }

    #[test]
    fn resolve_miss_reports_tiers() {
        let state = screen(vec![button("r", "REFRESH", 100, 0)]);
        let miss = resolve_feature(&state, "Nonexistent").unwrap_err();
        assert_eq!(miss.tiers_missed.len(), 5);
        assert!(miss.to_string().contains("exact text"));
    }

    #[test]
    fn fingerprint_ignores_sibling_order() {
        let a = screen(vec![button("r", "REFRESH", 100, 0), button("i", "INFO", 200, 0)]);
        let b = screen(vec![button("i", "INFO", 200, 0), button("r", "REFRESH", 100, 0)]);
        assert_eq!(a.state_id, b.state_id);
        let c = screen(vec![button("r", "REFRESH", 100, 0)]);
        assert_ne!(a.state_id, c.state_id);
    }

    #[test]
    fn fingerprint_ignores_typed_text() {
        let mut field = UiElement::new("f", "android.widget.EditText", Bounds::new(0, 0, 100, 50));
        field.editable = true;
        field.text = Some("before".into());
        let a = screen(vec![field.clone()]);
        field.text = Some("after".into());
        let b = screen(vec![field]);
        assert_eq!(a.state_id, b.state_id);
        assert_ne!(encode_state_text(&a), encode_state_text(&b));
    }

    #[test]
    fn encoding_single_button() {
        let mut go = button("go", "GO TO LIBRENEWS", 1700, 0);
        go.class_name = "android.widget.Button".into();
        let mut root = UiElement::new("root", "android.widget.FrameLayout", Bounds::new(0, 0, 1080, 1920));
        root.children = vec![go];
        let state = UiState::new("WelcomeActivity", root);
        let text = encode_state_text(&state);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines, vec!["Activity: WelcomeActivity", "[0] Button text=\"GO TO LIBRENEWS\" clickable"]);
    }

    #[test]
    fn encoding_empty_root() {
        let state = screen(vec![]);
        assert_eq!(encode_state_text(&state), "Activity: MainActivity\n");
    }

    #[test]
    fn encoding_nests_and_quotes() {
        let mut list =
            UiElement::new("l", "androidx.recyclerview.widget.RecyclerView", Bounds::new(0, 100, 1080, 1800));
        list.scrollable = true;
        list.resource_id = Some("app:id/list".into());
        let mut item = button("i", "Say \"hi\"", 120, 0);
        item.long_clickable = true;
        list.children.push(item);
        let state = screen(vec![list]);
        assert_eq!(
            encode_state_text(&state),
            "Activity: MainActivity\n[0] RecyclerView id=\"app:id/list\" scrollable\n  [1] Button text=\"Say \\\"hi\\\"\" clickable long-clickable\n"
        );
    }
}
