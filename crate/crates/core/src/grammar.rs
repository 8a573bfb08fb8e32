//! Step-to-reproduce (S2R) action grammar and its bracket notation.
//!
//! An S2R entity is written as a run of bracket groups: the action name first,
//! then component, value and direction in that order, each field omitted when
//! absent. `[Input] [search term] [A]`, `[Scroll] [down]`, `[Rotate]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionType {
    Tap,
    Input,
    Scroll,
    Swipe,
    Rotate,
    Delete,
    DoubleTap,
    LongTap,
    Restart,
    Back,
}

impl ActionType {
    pub const ALL: [ActionType; 10] = [
        ActionType::Tap,
        ActionType::Input,
        ActionType::Scroll,
        ActionType::Swipe,
        ActionType::Rotate,
        ActionType::Delete,
        ActionType::DoubleTap,
        ActionType::LongTap,
        ActionType::Restart,
        ActionType::Back,
    ];

    /// Seven actions make up the standard vocabulary; swipe, restart and back
    /// are extensions offered to the model alongside them.
    pub fn is_standard(self) -> bool {
        !matches!(self, ActionType::Swipe | ActionType::Restart | ActionType::Back)
    }

    /// Name used inside the leading bracket group.
    pub fn display_name(self) -> &'static str {
        match self {
            ActionType::Tap => "Tap",
            ActionType::Input => "Input",
            ActionType::Scroll => "Scroll",
            ActionType::Swipe => "Swipe",
            ActionType::Rotate => "Rotate",
            ActionType::Delete => "Delete",
            ActionType::DoubleTap => "Double-tap",
            ActionType::LongTap => "Long-tap",
            ActionType::Restart => "Restart",
            ActionType::Back => "Back",
        }
    }

    pub fn requires_component(self) -> bool {
        matches!(
            self,
            ActionType::Tap | ActionType::Input | ActionType::DoubleTap | ActionType::LongTap | ActionType::Delete
        )
    }

    /// Actions whose trailing bracket group may be a [`Direction`].
    pub fn takes_direction(self) -> bool {
        matches!(self, ActionType::Scroll | ActionType::Swipe | ActionType::Rotate)
    }

    pub fn takes_value(self) -> bool {
        matches!(self, ActionType::Input | ActionType::Delete)
    }

    fn takes_nothing(self) -> bool {
        matches!(self, ActionType::Restart | ActionType::Back)
    }

    /// Case-insensitive lookup tolerant of `Long Tap`, `long-tap`, `long_tap`.
    pub fn from_name(name: &str) -> Option<ActionType> {
        let key = normalize_action_name(name);
        ActionType::ALL.into_iter().find(|a| normalize_action_name(a.display_name()) == key)
    }
}

fn normalize_action_name(name: &str) -> String {
    name.trim().to_lowercase().replace(['-', '_'], " ").split_whitespace().collect::<Vec<_>>().join(" ")
}

impl fmt::Display for ActionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
    Landscape,
    Portrait,
}

impl Direction {
    pub const ALL: [Direction; 6] =
        [Direction::Up, Direction::Down, Direction::Left, Direction::Right, Direction::Landscape, Direction::Portrait];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
            Direction::Landscape => "landscape",
            Direction::Portrait => "portrait",
        }
    }

    pub fn is_orientation(self) -> bool {
        matches!(self, Direction::Landscape | Direction::Portrait)
    }
}

impl FromStr for Direction {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_lowercase();
        Direction::ALL.into_iter().find(|d| d.as_str() == s).ok_or(())
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One reproduction step.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct S2rEntity {
    pub action: ActionType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid {action} entity: {reason}")]
pub struct InvariantViolation {
    pub action: ActionType,
    pub reason: String,
}

impl S2rEntity {
    pub fn new(action: ActionType) -> Self {
        S2rEntity { action, component: None, value: None, direction: None }
    }

    pub fn with_component(mut self, component: impl Into<String>) -> Self {
        self.component = Some(component.into());
        self
    }

    pub fn with_value(mut self, value: impl Into<String>) -> Self {
        self.value = Some(value.into());
        self
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = Some(direction);
        self
    }

    /// An input step without a value asks the replay model to make one up.
    pub fn generate_on_replay(&self) -> bool {
        self.action == ActionType::Input && self.value.is_none()
    }

    pub fn validate(&self) -> Result<(), InvariantViolation> {
        let fail = |reason: &str| Err(InvariantViolation { action: self.action, reason: reason.to_string() });
        for (name, field) in [("component", &self.component), ("value", &self.value)] {
            if let Some(text) = field {
                if text.trim().is_empty() || text.trim() != text {
                    return fail(&format!("{name} must be non-empty and trimmed"));
                }
                if text.contains(['[', ']', '\n', '\r']) {
                    return fail(&format!("{name} may not contain brackets or line breaks"));
                }
            }
        }
        if self.action.takes_nothing() && (self.component.is_some() || self.value.is_some() || self.direction.is_some())
        {
            return fail("carries no fields");
        }
        if self.action.requires_component() && self.component.is_none() {
            return fail("requires a component");
        }
        if !self.action.takes_value() && self.value.is_some() {
            return fail("takes no value");
        }
        match (self.action, self.direction) {
            (_, None) => {}
            (ActionType::Rotate, Some(d)) if d.is_orientation() => {}
            (ActionType::Scroll | ActionType::Swipe, Some(d)) if !d.is_orientation() => {}
            (_, Some(d)) => return fail(&format!("direction {d} not allowed")),
        }
        // A direction-taking action whose component spells a direction would not
        // survive a parse round trip.
        if self.action.takes_direction() {
            if let Some(c) = &self.component {
                if c.parse::<Direction>().is_ok() {
                    return fail("component may not be a direction word");
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for S2rEntity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.action)?;
        if let Some(c) = &self.component {
            write!(f, " [{c}]")?;
        }
        if let Some(v) = &self.value {
            write!(f, " [{v}]")?;
        }
        if let Some(d) = &self.direction {
            write!(f, " [{d}]")?;
        }
        Ok(())
    }
}

/// Canonical bracket notation for a valid entity.
pub fn format_entity(entity: &S2rEntity) -> Result<String, InvariantViolation> {
    entity.validate()?;
    Ok(entity.to_string())
}

/// A script step: the entity plus the report sentence it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct S2rStep {
    #[serde(flatten)]
    pub entity: S2rEntity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct S2rScript {
    pub source_report: String,
    pub steps: Vec<S2rStep>,
}

impl S2rScript {
    pub fn new(source_report: impl Into<String>) -> Self {
        S2rScript { source_report: source_report.into(), steps: Vec::new() }
    }

    pub fn from_entities(source_report: impl Into<String>, entities: impl IntoIterator<Item = S2rEntity>) -> Self {
        S2rScript {
            source_report: source_report.into(),
            steps: entities.into_iter().map(|entity| S2rStep { entity, sentence_index: None }).collect(),
        }
    }

    pub fn entities(&self) -> impl Iterator<Item = &S2rEntity> {
        self.steps.iter().map(|s| &s.entity)
    }

    /// Numbered bracket notation, one step per line.
    pub fn to_notation(&self) -> String {
        self.steps.iter().enumerate().map(|(i, s)| format!("{}. {}", i + 1, s.entity)).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {reason}")]
pub struct ParseError {
    /// Zero-based line index within the parsed text.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NotationParse {
    pub entities: Vec<S2rEntity>,
    /// Line index each entity came from, parallel to `entities`.
    pub lines: Vec<usize>,
    pub errors: Vec<ParseError>,
}

/// A run of bracket groups separated by the text found between them.
struct Segment {
    groups: Vec<String>,
}

/// Splits a line into entity segments. Numbering markers (`2.`, `3)`) found
/// between groups start a new entity.
fn split_groups(line: &str) -> Result<Vec<Segment>, String> {
    let mut segments = vec![Segment { groups: Vec::new() }];
    let mut gap = String::new();
    let mut chars = line.chars();
    while let Some(c) = chars.next() {
        if c == '[' {
            let mut group = String::new();
            let mut closed = false;
            for c in chars.by_ref() {
                match c {
                    ']' => {
                        closed = true;
                        break;
                    }
                    '[' => return Err("nested '[' inside bracket group".to_string()),
                    _ => group.push(c),
                }
            }
            if !closed {
                return Err("unterminated bracket group".to_string());
            }
            let starts_new = !segments.last().is_none_or(|s| s.groups.is_empty()) && has_number_marker(&gap);
            if starts_new {
                segments.push(Segment { groups: Vec::new() });
            }
            segments.last_mut().expect("non-empty").groups.push(group.trim().to_string());
            gap.clear();
        } else if c == ']' {
            return Err("unmatched ']'".to_string());
        } else {
            gap.push(c);
        }
    }
    Ok(segments.into_iter().filter(|s| !s.groups.is_empty()).collect())
}

fn has_number_marker(gap: &str) -> bool {
    let trimmed = gap.trim_matches(|c: char| c.is_whitespace() || c == ',' || c == ';');
    let digits = trimmed.trim_end_matches(['.', ')']);
    !digits.is_empty() && digits.len() < trimmed.len() && digits.chars().all(|c| c.is_ascii_digit())
}

fn entity_from_groups(groups: &[String]) -> Result<S2rEntity, String> {
    let (head, rest) = groups.split_first().ok_or("no bracket groups")?;
    let action = ActionType::from_name(head).ok_or_else(|| format!("unknown action '{head}'"))?;
    let mut entity = S2rEntity::new(action);
    if rest.iter().any(|g| g.is_empty()) {
        return Err("empty bracket group".to_string());
    }
    let max_fields = if action.takes_nothing() {
        0
    } else if action.takes_value() || action.takes_direction() {
        2
    } else {
        1
    };
    if rest.len() > max_fields {
        return Err(format!("{action} takes at most {max_fields} argument group(s), found {}", rest.len()));
    }
    if action.takes_direction() {
        let mut rest = rest;
        if let Some((last, init)) = rest.split_last() {
            if let Ok(d) = last.parse::<Direction>() {
                entity.direction = Some(d);
                rest = init;
            }
        }
        match rest {
            [] => {}
            [component] => entity.component = Some(component.clone()),
            _ => return Err(format!("{action} takes a component and a direction")),
        }
    } else {
        entity.component = rest.first().cloned();
        entity.value = rest.get(1).cloned();
    }
    entity.validate().map_err(|e| e.reason)?;
    Ok(entity)
}

/// Parses numbered or unnumbered lines of bracket notation. Lines without any
/// bracket group are skipped; lines with groups that do not form a valid
/// entity are reported in `errors`.
pub fn parse_entity_notation(text: &str) -> NotationParse {
    let mut out = NotationParse::default();
    for (index, line) in text.lines().enumerate() {
        if !line.contains(['[', ']']) {
            continue;
        }
        let segments = match split_groups(line) {
            Ok(segments) => segments,
            Err(reason) => {
                out.errors.push(ParseError { line: index, reason });
                continue;
            }
        };
        for segment in segments {
            match entity_from_groups(&segment.groups) {
                Ok(entity) => {
                    out.entities.push(entity);
                    out.lines.push(index);
                }
                Err(reason) => out.errors.push(ParseError { line: index, reason }),
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractionParseError {
    #[error("no S2R entities found in response ({} unparseable line(s))", errors.len())]
    NoEntitiesFound { errors: Vec<ParseError> },
}

/// Reads a model response into a script. Prose lines are dropped; a line such
/// as `Sentence 2:` sets the source sentence of the entities that follow it.
pub fn parse_extraction_response(source_report: &str, text: &str) -> Result<S2rScript, ExtractionParseError> {
    let mut script = S2rScript::new(source_report);
    let mut errors = Vec::new();
    let mut sentence: Option<usize> = None;
    for (index, line) in text.lines().enumerate() {
        let mut body = line;
        if let Some((n, rest)) = sentence_marker(line) {
            sentence = Some(n.saturating_sub(1));
            body = rest;
        }
        if !body.contains(['[', ']']) {
            continue;
        }
        let parsed = parse_entity_notation(body);
        for entity in parsed.entities {
            script.steps.push(S2rStep { entity, sentence_index: sentence });
        }
        errors.extend(parsed.errors.into_iter().map(|e| ParseError { line: index, reason: e.reason }));
    }
    if script.steps.is_empty() {
        return Err(ExtractionParseError::NoEntitiesFound { errors });
    }
    Ok(script)
}

/// Recognizes a leading `Sentence 3:` marker (any case, optional markdown
/// emphasis) and returns the number and the remainder of the line.
fn sentence_marker(line: &str) -> Option<(usize, &str)> {
    let trimmed = line.trim_start().trim_start_matches(['*', '#', ' ']);
    let lower = trimmed.get(..8)?.to_ascii_lowercase();
    if lower != "sentence" {
        return None;
    }
    let after = trimmed[8..].trim_start();
    let digits_end = after.find(|c: char| !c.is_ascii_digit()).unwrap_or(after.len());
    if digits_end == 0 {
        return None;
    }
    let n = after[..digits_end].parse().ok()?;
    let rest = after[digits_end..].trim_start_matches(['*', ' ']);
    let rest = rest.strip_prefix(':')?;
    Some((n, rest.trim_start_matches('*')))
}

/// The available-actions line offered to the extraction model.
pub const AVAILABLE_ACTIONS: &str =
    "[tap(click), input(set_text), scroll, swipe, rotate, delete, double tap(click), long tap(click), restart, back].";

pub const ACTION_PRIMITIVES: &str = "[Tap] [Component], [Scroll] [Direction], [Input] [Component] [Value], [Rotate] [Direction], [Delete] [Component] [Value], [Double-tap] [Component], [Long-tap] [Component].";

/// A retrieved example sentence and its labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptExample {
    pub sentence: String,
    pub labels: Vec<S2rEntity>,
}

/// Builds the extraction prompt: available actions, action primitives,
/// retrieved examples (omitted when there are none), then the numbered report.
pub fn build_extraction_prompt(report_sentences: &[String], examples: &[PromptExample]) -> String {
    let mut out = String::new();
    out.push_str("Available_Actions:\n");
    out.push_str(AVAILABLE_ACTIONS);
    out.push_str(" Generate input when none is given.\n\n");

    out.push_str("Action_Primitive:\n");
    out.push_str(ACTION_PRIMITIVES);
    out.push_str(" The actions you identify should be in the available actions.\n\n");

    if !examples.is_empty() {
        out.push_str("Retrieval_Prompt:\n");
        out.push_str("Here are some examples for S2R entity extraction.\n");
        for example in examples {
            let noun = if example.labels.len() == 1 { "entity is" } else { "entities are" };
            out.push_str(&format!("The sentence is \"{}\", the extracted S2R {noun}:\n", example.sentence));
            for (i, label) in example.labels.iter().enumerate() {
                out.push_str(&format!("{}. {label}\n", i + 1));
            }
        }
        out.push('\n');
    }

    out.push_str("Current_Bug_Report:\n");
    out.push_str("Here are the sentences in current bug report:\n");
    for (i, sentence) in report_sentences.iter().enumerate() {
        out.push_str(&format!("{}. {sentence}\n", i + 1));
    }
    out.push_str(
        "\nFor each sentence, write a line \"Sentence <n>:\" followed by its S2R entities, one per line, \
         in the bracket notation above.\n",
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_table_rows() {
        let tap = S2rEntity::new(ActionType::Tap).with_component("search");
        assert_eq!(format_entity(&tap).unwrap(), "[Tap] [search]");
        let input = S2rEntity::new(ActionType::Input).with_component("search term").with_value("A");
        assert_eq!(format_entity(&input).unwrap(), "[Input] [search term] [A]");
        assert_eq!(format_entity(&S2rEntity::new(ActionType::Rotate)).unwrap(), "[Rotate]");
        let long = S2rEntity::new(ActionType::LongTap).with_component("category A");
        assert_eq!(format_entity(&long).unwrap(), "[Long-tap] [category A]");
    }

    #[test]
    fn format_rejects_invalid() {
        assert!(format_entity(&S2rEntity::new(ActionType::Tap)).is_err());
        assert!(format_entity(&S2rEntity::new(ActionType::Back).with_component("x")).is_err());
        let bad_dir = S2rEntity::new(ActionType::Scroll).with_direction(Direction::Landscape);
        assert!(format_entity(&bad_dir).is_err());
        let bracket = S2rEntity::new(ActionType::Tap).with_component("a]b");
        assert!(format_entity(&bracket).is_err());
    }

    #[test]
    fn parses_table_two_example_two() {
        let parsed =
            parse_entity_notation("1. [Tap] [search icon]\n2. [Input] [search term] [A]\n3. [Long Tap] [category A]");
        assert!(parsed.errors.is_empty());
        assert_eq!(
            parsed.entities,
            vec![
                S2rEntity::new(ActionType::Tap).with_component("search icon"),
                S2rEntity::new(ActionType::Input).with_component("search term").with_value("A"),
                S2rEntity::new(ActionType::LongTap).with_component("category A"),
            ]
        );
    }

    #[test]
    fn empty_text_parses_to_nothing() {
        assert_eq!(parse_entity_notation(""), NotationParse::default());
    }

    #[test]
    fn action_names_are_tolerant() {
        for name in ["Long Tap", "Long-tap", "long tap", "LONG_TAP"] {
            assert_eq!(ActionType::from_name(name), Some(ActionType::LongTap), "{name}");
        }
        assert_eq!(ActionType::from_name("double-tap"), Some(ActionType::DoubleTap));
        assert_eq!(ActionType::from_name("click"), None);
    }

    #[test]
    fn unknown_actions_are_errors_not_guesses() {
        let parsed = parse_entity_notation("1. [Tap][screen]\n2. [click]\n3. [input]");
        assert_eq!(parsed.entities, vec![S2rEntity::new(ActionType::Tap).with_component("screen")]);
        assert_eq!(parsed.errors.len(), 2);
        assert_eq!(parsed.errors[0].line, 1);
        assert!(parsed.errors[0].reason.contains("unknown action"));
        assert_eq!(parsed.errors[1].line, 2);
    }

    #[test]
    fn several_entities_on_one_numbered_line() {
        let parsed = parse_entity_notation("1. [Tap] [add to option], 2. [Tap] [playlist].");
        assert_eq!(
            parsed.entities,
            vec![
                S2rEntity::new(ActionType::Tap).with_component("add to option"),
                S2rEntity::new(ActionType::Tap).with_component("playlist"),
            ]
        );
    }

    #[test]
    fn scroll_with_component_and_direction() {
        let parsed = parse_entity_notation("[Scroll] [news list] [down]\n[Swipe] [left]\n[Rotate] [landscape]");
        assert!(parsed.errors.is_empty(), "{:?}", parsed.errors);
        assert_eq!(parsed.entities[0].component.as_deref(), Some("news list"));
        assert_eq!(parsed.entities[0].direction, Some(Direction::Down));
        assert_eq!(parsed.entities[1].direction, Some(Direction::Left));
        assert_eq!(parsed.entities[2].direction, Some(Direction::Landscape));
    }

    #[test]
    fn unterminated_group_is_reported() {
        let parsed = parse_entity_notation("[Tap] [search");
        assert_eq!(parsed.errors[0].reason, "unterminated bracket group");
    }

    #[test]
    fn response_strips_prose() {
        let script = parse_extraction_response("r1", "The entities are:\n1. [Tap] [playlist]").unwrap();
        assert_eq!(script.steps.len(), 1);
        assert_eq!(script.steps[0].entity, S2rEntity::new(ActionType::Tap).with_component("playlist"));
    }

    #[test]
    fn response_with_generated_input() {
        let script =
            parse_extraction_response("r3", "[Input] [Secret field] [test]\n[Input] [other required fields]").unwrap();
        assert_eq!(script.steps.len(), 2);
        assert!(!script.steps[0].entity.generate_on_replay());
        assert!(script.steps[1].entity.generate_on_replay());
        assert_eq!(script.steps[1].entity.component.as_deref(), Some("other required fields"));
    }

    #[test]
    fn response_without_entities() {
        assert!(matches!(
            parse_extraction_response("r", "no actions here"),
            Err(ExtractionParseError::NoEntitiesFound { .. })
        ));
    }

    #[test]
    fn sentence_markers_set_indices() {
        let text = "Sentence 1:\n1. [Tap] [search icon]\n2. [Input] [search term] [A]\n**Sentence 3:** [Long-tap] [category A]";
        let script = parse_extraction_response("r", text).unwrap();
        let indices: Vec<_> = script.steps.iter().map(|s| s.sentence_index).collect();
        assert_eq!(indices, vec![Some(0), Some(0), Some(2)]);
    }

    #[test]
    fn prompt_sections_in_order() {
        let prompt = build_extraction_prompt(
            &["Tap A.".to_string()],
            &[PromptExample {
                sentence: "Click on the add to option and select playlist.".into(),
                labels: vec![
                    S2rEntity::new(ActionType::Tap).with_component("add to option"),
                    S2rEntity::new(ActionType::Tap).with_component("playlist"),
                ],
            }],
        );
        let positions: Vec<_> = ["Available_Actions:", "Action_Primitive:", "Retrieval_Prompt:", "Current_Bug_Report:"]
            .iter()
            .map(|h| prompt.find(h).expect(h))
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        assert!(prompt.contains(AVAILABLE_ACTIONS));
        assert!(prompt.contains("the extracted S2R entities are:\n1. [Tap] [add to option]\n2. [Tap] [playlist]\n"));
    }

    #[test]
    fn prompt_without_examples_omits_retrieval() {
        let prompt = build_extraction_prompt(&["Tap A.".to_string()], &[]);
        assert!(!prompt.contains("Retrieval_Prompt"));
        assert!(prompt.contains("1. Tap A.\n"));
    }
}
