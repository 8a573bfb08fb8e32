//! Drive a simulated app by hand and watch its screens change until it
//! crashes.
//!
//! ```bash
//! cargo run --example simulate_app
//! ```

use std::path::Path;

use crashrepro::device::{encode_state_text, Device};
use crashrepro::llm::ActionCommand;
use crashrepro::simulator::{load_spec, SimSession};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = load_spec(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/sim/librenews.json"))?;
    let mut app = SimSession::new(spec);
    print!("{}", encode_state_text(&app.capture_state()?));

    let steps = [
        ActionCommand::set_text("server_url", "xxyyzz"),
        ActionCommand::click("OK"),
        ActionCommand::click("Nowhere"),
        ActionCommand::click("REFRESH"),
    ];
    for cmd in steps {
        let status = app.execute(&cmd)?;
        println!("\n> {cmd}: {}", status.detail);
        if let Some(miss) = &status.no_match {
            println!("  {miss}");
        }
        if let Some(crash) = &status.crash {
            println!("  crash {} in {}: {}", crash.exception_type, crash.raised_in_activity, crash.message);
            break;
        }
        print!("{}", encode_state_text(&status.new_state));
    }
    Ok(())
}
