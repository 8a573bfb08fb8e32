//! Dry run of the adb device bridge: a recording runner stands in for the
//! `adb` binary, so the commands a real device would receive are printed.
//!
//! ```bash
//! cargo run --example adb_bridge
//! ```

use std::path::Path;

use crashrepro::device::{encode_state_text, AdbDevice, AdbDeviceConfig, Device, RecordingRunner};
use crashrepro::llm::ActionCommand;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dump = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/adb/window_dump.xml"))?;
    let mut runner = RecordingRunner::new();
    runner.respond("get-state", "device\n").respond("exec-out uiautomator dump", dump).respond(
        "shell dumpsys activity activities",
        "  mResumedActivity: ActivityRecord{1 u0 de.rochefort.librenews/.MainFlashActivity t7}\n",
    );

    let mut device = AdbDevice::connect(runner, AdbDeviceConfig::new("de.rochefort.librenews"))?;
    print!("{}", encode_state_text(&device.capture_state()?));
    for cmd in [
        ActionCommand::click("REFRESH"),
        ActionCommand::set_text("server_url", "xx yy"),
        ActionCommand::scroll("down"),
        ActionCommand::click("Missing"),
    ] {
        let status = device.execute(&cmd)?;
        println!("{cmd}: ok={} {}", status.ok, status.detail);
    }
    device.restart_app()?;

    println!("\nadb invocations:");
    for line in &device.into_runner().log {
        println!("  adb {line}");
    }
    Ok(())
}
