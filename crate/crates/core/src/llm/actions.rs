use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Device verbs a model may ask for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    Click,
    SetText,
    Scroll,
    Swipe,
    Rotate,
    LongClick,
    DoubleClick,
    Back,
    Restart,
}

impl Verb {
    pub fn as_str(self) -> &'static str {
        match self {
            Verb::Click => "click",
            Verb::SetText => "set_text",
            Verb::Scroll => "scroll",
            Verb::Swipe => "swipe",
            Verb::Rotate => "rotate",
            Verb::LongClick => "long_click",
            Verb::DoubleClick => "double_click",
            Verb::Back => "back",
            Verb::Restart => "restart",
        }
    }

    pub fn requires_feature(self) -> bool {
        matches!(self, Verb::Click | Verb::LongClick | Verb::DoubleClick | Verb::SetText)
    }

    /// Resolves a verb or one of its aliases. The alias table:
    ///
    /// | alias | verb |
    /// |---|---|
    /// | tap, press | click |
    /// | input, type, enter | set_text |
    /// | long tap, long press, long click | long_click |
    /// | double tap, double click | double_click |
    ///
    /// Spaces, hyphens and underscores are interchangeable and case is ignored.
    pub fn from_alias(name: &str) -> Option<Verb> {
        let key: String =
            name.trim().to_lowercase().chars().map(|c| if c == '-' || c == ' ' { '_' } else { c }).collect();
        let verb = match key.as_str() {
            "click" | "tap" | "press" => Verb::Click,
            "set_text" | "settext" | "input" | "type" | "enter" => Verb::SetText,
            "scroll" => Verb::Scroll,
            "swipe" => Verb::Swipe,
            "rotate" => Verb::Rotate,
            "long_click" | "longclick" | "long_tap" | "longtap" | "long_press" => Verb::LongClick,
            "double_click" | "doubleclick" | "double_tap" | "doubletap" => Verb::DoubleClick,
            "back" => Verb::Back,
            "restart" => Verb::Restart,
            _ => return None,
        };
        Some(verb)
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One executable device action.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionCommand {
    pub action: Verb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<u64>,
}

const SWIPE_DIRECTIONS: [&str; 4] = ["up", "down", "left", "right"];
const ROTATIONS: [&str; 2] = ["landscape", "portrait"];

impl ActionCommand {
    pub fn new(action: Verb) -> Self {
        ActionCommand { action, feature: None, input_text: None, direction: None, duration: None }
    }

    pub fn click(feature: impl Into<String>) -> Self {
        Self::new(Verb::Click).with_feature(feature)
    }

    pub fn set_text(feature: impl Into<String>, text: impl Into<String>) -> Self {
        let mut cmd = Self::new(Verb::SetText).with_feature(feature);
        cmd.input_text = Some(text.into());
        cmd
    }

    pub fn scroll(direction: &str) -> Self {
        let mut cmd = Self::new(Verb::Scroll);
        cmd.direction = Some(direction.to_string());
        cmd
    }

    pub fn with_feature(mut self, feature: impl Into<String>) -> Self {
        self.feature = Some(feature.into());
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.action.requires_feature() && self.feature.as_deref().is_none_or(|f| f.trim().is_empty()) {
            return Err(format!("{} requires feature", self.action));
        }
        if self.action == Verb::SetText && self.input_text.is_none() {
            return Err("missing input_text".to_string());
        }
        match self.action {
            Verb::Scroll | Verb::Swipe => match self.direction.as_deref() {
                None => return Err(format!("{} requires direction", self.action)),
                Some(d) if !SWIPE_DIRECTIONS.contains(&d) => return Err(format!("unknown direction '{d}'")),
                _ => {}
            },
            Verb::Rotate => {
                if let Some(d) = self.direction.as_deref() {
                    if !ROTATIONS.contains(&d) {
                        return Err(format!("unknown rotation '{d}'"));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }
}

impl fmt::Display for ActionCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.action)?;
        if let Some(feature) = &self.feature {
            write!(f, " \"{feature}\"")?;
        }
        if let Some(text) = &self.input_text {
            write!(f, " text=\"{text}\"")?;
        }
        if let Some(d) = &self.direction {
            write!(f, " {d}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("command {index}: {reason}")]
pub struct MalformedCommand {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionParseError {
    #[error("payload is not a JSON array: {0}")]
    NotAnArray(String),
    #[error("{} malformed command(s): {}", .0.len(), .0.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("; "))]
    Malformed(Vec<MalformedCommand>),
}

/// Scans `text` for balanced `[...]` segments that parse as non-empty JSON
/// arrays of objects each carrying an `"action"` key. Qualifying arrays are
/// concatenated in textual order and returned as one compact JSON array.
pub fn filter_json_payload(text: &str) -> Option<String> {
    let bytes = text.as_bytes();
    let mut collected: Vec<Value> = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'[' {
            if let Some(end) = matching_bracket(bytes, i) {
                if let Some(items) = qualifying_array(&text[i..=end]) {
                    collected.extend(items);
                    i = end + 1;
                    continue;
                }
            }
        }
        i += 1;
    }
    if collected.is_empty() {
        None
    } else {
        Some(Value::Array(collected).to_string())
    }
}

/// Index of the `]` closing the `[` at `start`, skipping brackets inside JSON
/// string literals.
fn matching_bracket(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, &b) in bytes[start..].iter().enumerate() {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'[' => depth += 1,
            b']' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + offset);
                }
            }
            _ => {}
        }
    }
    None
}

fn qualifying_array(candidate: &str) -> Option<Vec<Value>> {
    match serde_json::from_str::<Value>(candidate).ok()? {
        Value::Array(items)
            if !items.is_empty() && items.iter().all(|v| v.as_object().is_some_and(|o| o.contains_key("action"))) =>
        {
            Some(items)
        }
        _ => None,
    }
}

fn string_field(obj: &serde_json::Map<String, Value>, keys: &[&str]) -> Option<String> {
    keys.iter().find_map(|k| match obj.get(*k)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    })
}

/// Maps a filtered JSON array to commands, normalizing verb aliases and the
/// `target_direction` key. Unknown keys are ignored. Every invalid element is
/// reported.
pub fn parse_action_sequence(json_text: &str) -> Result<Vec<ActionCommand>, ActionParseError> {
    let value: Value = serde_json::from_str(json_text).map_err(|e| ActionParseError::NotAnArray(e.to_string()))?;
    let Value::Array(items) = value else {
        return Err(ActionParseError::NotAnArray("top-level value is not an array".into()));
    };
    let mut commands = Vec::new();
    let mut errors = Vec::new();
    for (index, item) in items.iter().enumerate() {
        let Some(obj) = item.as_object() else {
            errors.push(MalformedCommand { index, reason: "not an object".into() });
            continue;
        };
        let Some(name) = string_field(obj, &["action"]) else {
            errors.push(MalformedCommand { index, reason: "missing action".into() });
            continue;
        };
        let Some(verb) = Verb::from_alias(&name) else {
            errors.push(MalformedCommand { index, reason: format!("unknown action '{name}'") });
            continue;
        };
        let duration = match obj.get("duration") {
            None | Some(Value::Null) => None,
            Some(v) => match v.as_u64() {
                Some(ms) => Some(ms),
                None => {
                    errors.push(MalformedCommand { index, reason: "duration must be milliseconds".into() });
                    continue;
                }
            },
        };
        let cmd = ActionCommand {
            action: verb,
            feature: string_field(obj, &["feature"]),
            input_text: string_field(obj, &["input_text"]),
            direction: string_field(obj, &["direction", "target_direction"]).map(|d| d.trim().to_lowercase()),
            duration,
        };
        match cmd.validate() {
            Ok(()) => commands.push(cmd),
            Err(reason) => errors.push(MalformedCommand { index, reason }),
        }
    }
    if errors.is_empty() {
        Ok(commands)
    } else {
        Err(ActionParseError::Malformed(errors))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SINGLE: &str = "[\n    {\n        \"action\": \"click\",\n        \"feature\": \"REFRESH\"\n    }\n]";

    #[test]
    fn single_action_payload() {
        let filtered = filter_json_payload(SINGLE).unwrap();
        assert_eq!(filtered, r#"[{"action":"click","feature":"REFRESH"}]"#);
        assert_eq!(parse_action_sequence(&filtered).unwrap(), vec![ActionCommand::click("REFRESH")]);
    }

    #[test]
    fn sequence_payload() {
        let text = r#"[{"action":"set_text","feature":"https://librenews.io/api","input_text":"xxyyzz"},{"action":"click","feature":"OK"}]"#;
        let cmds = parse_action_sequence(text).unwrap();
        assert_eq!(
            cmds,
            vec![ActionCommand::set_text("https://librenews.io/api", "xxyyzz"), ActionCommand::click("OK")]
        );
    }

    #[test]
    fn empty_array_parses_to_nothing() {
        assert_eq!(parse_action_sequence("[]").unwrap(), vec![]);
        assert_eq!(filter_json_payload("nothing to do: []"), None);
    }

    #[test]
    fn missing_input_text() {
        let err = parse_action_sequence(r#"[{"action":"set_text","feature":"URL"}]"#).unwrap_err();
        assert_eq!(
            err,
            ActionParseError::Malformed(vec![MalformedCommand { index: 0, reason: "missing input_text".into() }])
        );
    }

    #[test]
    fn aliases_normalize() {
        let cmds = parse_action_sequence(
            r#"[{"action":"tap","feature":"A"},{"action":"input","feature":"B","input_text":"x"},
                {"action":"long tap","feature":"C"},{"action":"Double-Tap","feature":"D"},
                {"action":"scroll","target_direction":"Down","extra":1}]"#,
        )
        .unwrap();
        let verbs: Vec<_> = cmds.iter().map(|c| c.action).collect();
        assert_eq!(verbs, vec![Verb::Click, Verb::SetText, Verb::LongClick, Verb::DoubleClick, Verb::Scroll]);
        assert_eq!(cmds[4].direction.as_deref(), Some("down"));
    }

    #[test]
    fn reports_every_bad_command() {
        let err = parse_action_sequence(r#"[{"action":"fly"},{"action":"click","feature":"ok"},{"feature":"x"}]"#)
            .unwrap_err();
        let ActionParseError::Malformed(list) = err else { panic!() };
        assert_eq!(list.iter().map(|m| m.index).collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn brackets_inside_strings_do_not_confuse_filter() {
        let text = r#"Sure: [{"action":"click","feature":"a ] b ["}] done"#;
        assert_eq!(filter_json_payload(text).unwrap(), r#"[{"action":"click","feature":"a ] b ["}]"#);
    }

    #[test]
    fn nested_qualifying_array_found_inside_wrapper() {
        let text = r#"{"actions": [{"action":"back"}]}"#;
        assert_eq!(filter_json_payload(text).unwrap(), r#"[{"action":"back"}]"#);
    }

    #[test]
    fn bracket_notation_is_not_json() {
        assert_eq!(filter_json_payload("1. [Tap] [search icon]"), None);
    }
}
