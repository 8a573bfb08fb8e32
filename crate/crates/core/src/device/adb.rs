use std::process::Command;

use super::{resolve_feature, Bounds, CrashInfo, Device, DeviceError, ExecStatus, UiElement, UiState};
use crate::llm::{ActionCommand, Verb};

/// Runs one debug-bridge invocation (arguments after `adb`) and returns its
/// stdout.
pub trait CommandRunner {
    fn run(&mut self, args: &[String]) -> Result<String, DeviceError>;
}

/// Shells out to the real `adb` binary.
#[derive(Debug, Clone)]
pub struct AdbCommandRunner {
    pub adb_path: String,
    pub serial: Option<String>,
}

impl Default for AdbCommandRunner {
    fn default() -> Self {
        AdbCommandRunner { adb_path: "adb".into(), serial: None }
    }
}

impl CommandRunner for AdbCommandRunner {
    fn run(&mut self, args: &[String]) -> Result<String, DeviceError> {
        let mut cmd = Command::new(&self.adb_path);
        if let Some(serial) = &self.serial {
            cmd.arg("-s").arg(serial);
        }
        let output = cmd
            .args(args)
            .output()
            .map_err(|e| DeviceError::Unavailable(format!("cannot run {}: {e}", self.adb_path)))?;
        if !output.status.success() {
            return Err(DeviceError::Unavailable(format!(
                "adb {} failed: {}",
                args.join(" "),
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        Ok(String::from_utf8_lossy(&output.stdout).into_owned())
    }
}

/// Records every invocation and answers from canned outputs, keyed by
/// command prefix. Used for dry runs and tests.
#[derive(Debug, Clone, Default)]
pub struct RecordingRunner {
    pub log: Vec<String>,
    responses: Vec<(String, String)>,
}

impl RecordingRunner {
    pub fn new() -> Self {
        Self::default()
    }

    /// Later registrations win over earlier ones for the same prefix.
    pub fn respond(&mut self, prefix: impl Into<String>, output: impl Into<String>) -> &mut Self {
        self.responses.insert(0, (prefix.into(), output.into()));
        self
    }
}

impl CommandRunner for RecordingRunner {
    fn run(&mut self, args: &[String]) -> Result<String, DeviceError> {
        let line = args.join(" ");
        let out = self
            .responses
            .iter()
            .find(|(prefix, _)| line.starts_with(prefix.as_str()))
            .map(|(_, out)| out.clone())
            .unwrap_or_default();
        self.log.push(line);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdbDeviceConfig {
    pub package: String,
    /// Fallback when the hierarchy root carries no usable bounds.
    pub screen_width: i32,
    pub screen_height: i32,
    pub long_press_ms: u64,
    pub swipe_ms: u64,
}

impl AdbDeviceConfig {
    pub fn new(package: impl Into<String>) -> Self {
        AdbDeviceConfig {
            package: package.into(),
            screen_width: 1080,
            screen_height: 1920,
            long_press_ms: 1000,
            swipe_ms: 300,
        }
    }
}

/// Physical or emulated device driven through `adb`.
pub struct AdbDevice<R: CommandRunner> {
    runner: R,
    config: AdbDeviceConfig,
    landscape: bool,
    crashed: bool,
    last_state: Option<UiState>,
}

fn args(line: &str) -> Vec<String> {
    line.split(' ').map(str::to_string).collect()
}

impl<R: CommandRunner> AdbDevice<R> {
    /// Checks the device is online and clears the log buffer so only crashes
    /// from this session are seen.
    pub fn connect(mut runner: R, config: AdbDeviceConfig) -> Result<Self, DeviceError> {
        let state = runner.run(&args("get-state"))?;
        if !state.trim().is_empty() && state.trim() != "device" {
            return Err(DeviceError::Unavailable(format!("device state is '{}'", state.trim())));
        }
        runner.run(&args("logcat -c"))?;
        Ok(AdbDevice { runner, config, landscape: false, crashed: false, last_state: None })
    }

    pub fn runner(&self) -> &R {
        &self.runner
    }

    pub fn into_runner(self) -> R {
        self.runner
    }

    fn shell(&mut self, line: &str) -> Result<String, DeviceError> {
        self.runner.run(&args(&format!("shell {line}")))
    }

    fn foreground_activity(&mut self) -> Result<String, DeviceError> {
        let out = self.shell("dumpsys activity activities")?;
        Ok(parse_resumed_activity(&out).unwrap_or_else(|| "UnknownActivity".to_string()))
    }

    fn check_crash(&mut self, activity: &str) -> Result<Option<CrashInfo>, DeviceError> {
        let log = self.runner.run(&args("logcat -d"))?;
        Ok(parse_fatal_exception(&log, &self.config.package, activity))
    }

    fn screen(&self) -> (i32, i32) {
        match &self.last_state {
            Some(s) if s.root.bounds.width() > 0 && s.root.bounds.height() > 0 => {
                (s.root.bounds.width(), s.root.bounds.height())
            }
            _ => (self.config.screen_width, self.config.screen_height),
        }
    }

    fn drag(&mut self, area: Bounds, direction: &str) -> Result<(), DeviceError> {
        // Finger travels 60% of the area; scrolling down means dragging up.
        let (cx, cy) = area.center();
        let dx = area.width() * 3 / 10;
        let dy = area.height() * 3 / 10;
        let (x1, y1, x2, y2) = match direction {
            "up" => (cx, cy + dy, cx, cy - dy),
            "down" => (cx, cy - dy, cx, cy + dy),
            "left" => (cx + dx, cy, cx - dx, cy),
            _ => (cx - dx, cy, cx + dx, cy),
        };
        let ms = self.config.swipe_ms;
        self.shell(&format!("input swipe {x1} {y1} {x2} {y2} {ms}"))?;
        Ok(())
    }
}

fn opposite(direction: &str) -> &str {
    match direction {
        "up" => "down",
        "down" => "up",
        "left" => "right",
        _ => "left",
    }
}

/// Escapes text for `input text`: spaces become `%s`, shell metacharacters
/// are backslashed.
pub(crate) fn escape_input_text(text: &str) -> String {
    let mut out = String::new();
    for c in text.chars() {
        match c {
            ' ' => out.push_str("%s"),
            '\\' | '"' | '\'' | '&' | '|' | ';' | '<' | '>' | '(' | ')' | '$' | '`' | '*' | '?' | '~' | '#' | '%' => {
                out.push('\\');
                out.push(c);
            }
            _ => out.push(c),
        }
    }
    out
}

impl<R: CommandRunner> Device for AdbDevice<R> {
    fn capture_state(&mut self) -> Result<UiState, DeviceError> {
        let dump = self.runner.run(&args("exec-out uiautomator dump /dev/tty"))?;
        let root = parse_hierarchy_dump(&dump)?;
        let activity = self.foreground_activity()?;
        let state = UiState::new(activity, root);
        self.last_state = Some(state.clone());
        Ok(state)
    }

    fn execute(&mut self, cmd: &ActionCommand) -> Result<ExecStatus, DeviceError> {
        if self.crashed {
            return Err(DeviceError::AlreadyCrashed);
        }
        cmd.validate().map_err(|reason| DeviceError::InvalidCommand { command: cmd.to_string(), reason })?;
        if cmd.action == Verb::Restart {
            let state = self.restart_app()?;
            return Ok(ExecStatus::success("restarted app", state));
        }
        let before = self.capture_state()?;
        let target = match cmd.feature.as_deref() {
            Some(feature) if cmd.action.requires_feature() || matches!(cmd.action, Verb::Scroll | Verb::Swipe) => {
                match resolve_feature(&before, feature) {
                    Ok(e) => Some(e.clone()),
                    Err(miss) if cmd.action.requires_feature() => return Ok(ExecStatus::unmatched(miss, before)),
                    Err(_) => None,
                }
            }
            _ => None,
        };
        let (w, h) = self.screen();
        let detail = match cmd.action {
            Verb::Click => {
                let (x, y) = target.as_ref().expect("resolved").bounds.center();
                self.shell(&format!("input tap {x} {y}"))?;
                format!("tapped ({x}, {y})")
            }
            Verb::DoubleClick => {
                let (x, y) = target.as_ref().expect("resolved").bounds.center();
                self.shell(&format!("input tap {x} {y}"))?;
                self.shell(&format!("input tap {x} {y}"))?;
                format!("double-tapped ({x}, {y})")
            }
            Verb::LongClick => {
                let (x, y) = target.as_ref().expect("resolved").bounds.center();
                let ms = cmd.duration.unwrap_or(self.config.long_press_ms);
                self.shell(&format!("input swipe {x} {y} {x} {y} {ms}"))?;
                format!("long-pressed ({x}, {y}) for {ms} ms")
            }
            Verb::SetText => {
                let field = target.as_ref().expect("resolved");
                let (x, y) = field.bounds.center();
                self.shell(&format!("input tap {x} {y}"))?;
                let existing = field.text().map_or(0, |t| t.chars().count());
                if existing > 0 {
                    self.shell("input keyevent KEYCODE_MOVE_END")?;
                    let dels = vec!["KEYCODE_DEL"; existing].join(" ");
                    self.shell(&format!("input keyevent {dels}"))?;
                }
                let text = cmd.input_text.as_deref().unwrap_or("");
                if !text.is_empty() {
                    self.shell(&format!("input text {}", escape_input_text(text)))?;
                }
                format!("typed into ({x}, {y})")
            }
            Verb::Scroll | Verb::Swipe => {
                let direction = cmd.direction.clone().unwrap_or_else(|| "down".into());
                let area = target.as_ref().map_or(Bounds::new(0, 0, w, h), |e| e.bounds);
                // A swipe names the finger's motion; a scroll names where the
                // content should go, which is the opposite finger motion.
                let finger = if cmd.action == Verb::Scroll { opposite(&direction) } else { direction.as_str() };
                self.drag(area, finger)?;
                format!("{} {direction}", cmd.action)
            }
            Verb::Rotate => {
                let landscape = match cmd.direction.as_deref() {
                    Some("landscape") => true,
                    Some("portrait") => false,
                    _ => !self.landscape,
                };
                self.shell("settings put system accelerometer_rotation 0")?;
                self.shell(&format!("settings put system user_rotation {}", u8::from(landscape)))?;
                self.landscape = landscape;
                format!("rotated to {}", if landscape { "landscape" } else { "portrait" })
            }
            Verb::Back => {
                self.shell("input keyevent KEYCODE_BACK")?;
                "pressed back".into()
            }
            Verb::Restart => unreachable!(),
        };
        if let Some(crash) = self.check_crash(&before.activity_name)? {
            self.crashed = true;
            return Ok(ExecStatus { ok: true, detail, new_state: before, crash: Some(crash), no_match: None });
        }
        let after = self.capture_state()?;
        Ok(ExecStatus::success(detail, after))
    }

    fn restart_app(&mut self) -> Result<UiState, DeviceError> {
        let package = self.config.package.clone();
        self.shell(&format!("am force-stop {package}"))?;
        self.runner.run(&args("logcat -c"))?;
        self.shell(&format!("monkey -p {package} -c android.intent.category.LAUNCHER 1"))?;
        self.crashed = false;
        self.capture_state()
    }
}

fn parse_bounds(raw: &str) -> Option<Bounds> {
    // "[0,63][1080,1794]"
    let nums: Vec<i32> = raw
        .split(|c: char| !(c.is_ascii_digit() || c == '-'))
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().ok())
        .collect::<Option<_>>()?;
    match nums.as_slice() {
        [l, t, r, b] => Some(Bounds::new(*l, *t, *r, *b)),
        _ => None,
    }
}

/// Parses a uiautomator XML dump. Surrounding noise (the trailing "UI
/// hierarchy dumped to" line) is ignored. Multiple top-level nodes are put
/// under a synthetic full-screen root.
pub fn parse_hierarchy_dump(dump: &str) -> Result<UiElement, DeviceError> {
    let start = dump.find("<hierarchy").ok_or_else(|| DeviceError::BadHierarchy("no <hierarchy> element".into()))?;
    let end = dump
        .rfind("</hierarchy>")
        .map(|i| i + "</hierarchy>".len())
        .ok_or_else(|| DeviceError::BadHierarchy("unterminated <hierarchy>".into()))?;
    let doc = roxmltree::Document::parse(&dump[start..end]).map_err(|e| DeviceError::BadHierarchy(e.to_string()))?;

    fn convert(node: roxmltree::Node, path: &str) -> UiElement {
        let attr = |k: &str| node.attribute(k).filter(|v| !v.is_empty()).map(str::to_string);
        let flag = |k: &str| node.attribute(k) == Some("true");
        let bounds = node.attribute("bounds").and_then(parse_bounds).unwrap_or_default();
        let mut e = UiElement::new(path, node.attribute("class").unwrap_or("android.view.View"), bounds);
        e.text = attr("text");
        e.content_desc = attr("content-desc");
        e.resource_id = attr("resource-id");
        e.clickable = flag("clickable");
        e.long_clickable = flag("long-clickable");
        e.scrollable = flag("scrollable");
        e.editable = e.class_name.ends_with("EditText") || flag("editable");
        e.children = node
            .children()
            .filter(|c| c.has_tag_name("node"))
            .enumerate()
            .map(|(i, c)| convert(c, &format!("{path}.{i}")))
            .collect();
        e
    }

    let tops: Vec<UiElement> = doc
        .root_element()
        .children()
        .filter(|c| c.has_tag_name("node"))
        .enumerate()
        .map(|(i, c)| convert(c, &format!("n{i}")))
        .collect();
    match tops.len() {
        0 => Err(DeviceError::BadHierarchy("hierarchy has no nodes".into())),
        1 => Ok(tops.into_iter().next().expect("one node")),
        _ => {
            let right = tops.iter().map(|t| t.bounds.right).max().unwrap_or(0);
            let bottom = tops.iter().map(|t| t.bounds.bottom).max().unwrap_or(0);
            let mut root = UiElement::new("root", "android.widget.FrameLayout", Bounds::new(0, 0, right, bottom));
            root.children = tops;
            Ok(root)
        }
    }
}

/// Extracts the short class name of the resumed activity from
/// `dumpsys activity activities` output.
pub(crate) fn parse_resumed_activity(dumpsys: &str) -> Option<String> {
    let line = dumpsys.lines().find(|l| {
        l.contains("mResumedActivity") || l.contains("topResumedActivity") || l.contains("ResumedActivity")
    })?;
    let component = line.split_whitespace().find(|tok| tok.contains('/'))?;
    let class = component.rsplit('/').next()?.trim_end_matches('}');
    Some(class.rsplit('.').next().unwrap_or(class).to_string())
}

/// Looks for an uncaught exception for `package` in a logcat dump.
pub(crate) fn parse_fatal_exception(log: &str, package: &str, activity: &str) -> Option<CrashInfo> {
    let lines: Vec<&str> = log.lines().collect();
    let mut i = 0;
    while i < lines.len() {
        if lines[i].contains("FATAL EXCEPTION") {
            let block: Vec<&str> = lines[i + 1..].iter().take(6).copied().collect();
            let ours = package.is_empty() || block.iter().any(|l| l.contains("Process:") && l.contains(package));
            if ours {
                for l in &block {
                    // "E AndroidRuntime: java.lang.IllegalArgumentException: bad url"
                    let body = l.split_once("AndroidRuntime:").map_or(*l, |(_, b)| b).trim();
                    let (head, message) = body.split_once(": ").unwrap_or((body, ""));
                    if head.ends_with("Exception") || head.ends_with("Error") {
                        let exception_type = head.rsplit('.').next().unwrap_or(head).to_string();
                        return Some(CrashInfo {
                            exception_type,
                            message: message.to_string(),
                            raised_in_activity: activity.to_string(),
                        });
                    }
                }
            }
        }
        i += 1;
    }
    None
}
