use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{prompt_fingerprint, LlmError, LlmGateway};

/// One scripted reply.
#[derive(Debug, Clone, PartialEq)]
pub struct MockEntry {
    pub reply: MockReply,
    /// Matches only prompts with this fingerprint.
    pub fingerprint: Option<String>,
    /// Matches only prompts containing every one of these substrings.
    pub contains: Vec<String>,
    /// A repeating entry is never used up.
    pub repeat: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MockReply {
    Text(String),
    /// Simulated transport failure.
    Error(String),
}

impl MockEntry {
    pub fn text(response: impl Into<String>) -> Self {
        MockEntry { reply: MockReply::Text(response.into()), fingerprint: None, contains: Vec::new(), repeat: false }
    }

    pub fn error(message: impl Into<String>) -> Self {
        MockEntry { reply: MockReply::Error(message.into()), ..Self::text("") }
    }

    pub fn when_contains(mut self, needle: impl Into<String>) -> Self {
        self.contains.push(needle.into());
        self
    }

    pub fn repeating(mut self) -> Self {
        self.repeat = true;
        self
    }

    fn is_keyed(&self) -> bool {
        self.fingerprint.is_some() || !self.contains.is_empty()
    }

    fn matches(&self, prompt: &str, fingerprint: &str) -> bool {
        self.fingerprint.as_deref().is_none_or(|f| f == fingerprint)
            && self.contains.iter().all(|needle| prompt.contains(needle.as_str()))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryLine {
    response: Option<String>,
    error: Option<String>,
    fingerprint: Option<String>,
    #[serde(default)]
    contains: Contains,
    #[serde(default)]
    repeat: bool,
}

#[derive(Deserialize, Default)]
#[serde(untagged)]
enum Contains {
    #[default]
    None,
    One(String),
    Many(Vec<String>),
}

/// Deterministic gateway replaying a script.
///
/// Keyed entries (by fingerprint or substring) are tried first, in script
/// order; otherwise the next unkeyed entry is used. Running out of entries is
/// [`LlmError::ExhaustedScript`].
#[derive(Debug, Clone, Default)]
pub struct MockGateway {
    entries: Vec<MockEntry>,
    used: Vec<bool>,
    prompts: Vec<String>,
}

impl MockGateway {
    pub fn new(entries: Vec<MockEntry>) -> Self {
        let used = vec![false; entries.len()];
        MockGateway { entries, used, prompts: Vec::new() }
    }

    pub fn from_responses<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(responses.into_iter().map(MockEntry::text).collect())
    }

    /// Parses a script: one entry per line. Blank lines and `#` comments are
    /// skipped; a line starting with `{` is a JSON entry with `response` or
    /// `error` and optional `fingerprint`, `contains` and `repeat`; any other
    /// line is a raw response.
    pub fn parse_script(text: &str) -> Result<Self, LlmError> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if !trimmed.starts_with('{') {
                entries.push(MockEntry::text(line));
                continue;
            }
            let bad = |reason: String| LlmError::InvalidScript(format!("line {}: {reason}", n + 1));
            let parsed: EntryLine = serde_json::from_str(trimmed).map_err(|e| bad(e.to_string()))?;
            let reply = match (parsed.response, parsed.error) {
                (Some(r), None) => MockReply::Text(r),
                (None, Some(e)) => MockReply::Error(e),
                _ => return Err(bad("exactly one of response/error required".into())),
            };
            let contains = match parsed.contains {
                Contains::None => Vec::new(),
                Contains::One(s) => vec![s],
                Contains::Many(v) => v,
            };
            entries.push(MockEntry { reply, fingerprint: parsed.fingerprint, contains, repeat: parsed.repeat });
        }
        Ok(Self::new(entries))
    }

    pub fn from_script_file(path: &Path) -> Result<Self, LlmError> {
        let text = fs::read_to_string(path).map_err(|e| LlmError::InvalidScript(format!("{}: {e}", path.display())))?;
        Self::parse_script(&text)
    }

    /// Every prompt received so far.
    pub fn prompts(&self) -> &[String] {
        &self.prompts
    }

    fn pick(&mut self, prompt: &str) -> Option<usize> {
        let fingerprint = prompt_fingerprint(prompt);
        let available = |i: usize, used: &[bool], e: &MockEntry| e.repeat || !used[i];
        let keyed = self
            .entries
            .iter()
            .enumerate()
            .find(|(i, e)| e.is_keyed() && available(*i, &self.used, e) && e.matches(prompt, &fingerprint));
        if let Some((i, _)) = keyed {
            return Some(i);
        }
        self.entries.iter().enumerate().find(|(i, e)| !e.is_keyed() && available(*i, &self.used, e)).map(|(i, _)| i)
    }
}

impl LlmGateway for MockGateway {
    fn complete(&mut self, prompt: &str) -> Result<String, LlmError> {
        if prompt.is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        self.prompts.push(prompt.to_string());
        let index = self.pick(prompt).ok_or(LlmError::ExhaustedScript { calls: self.prompts.len() })?;
        self.used[index] = true;
        match &self.entries[index].reply {
            MockReply::Text(t) => Ok(t.clone()),
            MockReply::Error(e) => Err(LlmError::Transport { attempts: 1, message: e.clone() }),
        }
    }
}
