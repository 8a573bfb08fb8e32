//! Full replay loop against a simulated app with a scripted model, with and
//! without escalation to exploration.
//!
//! ```bash
//! cargo run --example reproduce_crash
//! cargo run --example reproduce_crash -- librenews librenews_replay
//! ```

use std::path::Path;
use std::time::Duration;

use crashrepro::clock::{SimulatedCosts, VirtualClock};
use crashrepro::llm::MockGateway;
use crashrepro::pipeline::parse_script_text;
use crashrepro::replay::{run, ReplayConfig};
use crashrepro::simulator::{load_spec, SimSession};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut args = std::env::args().skip(1);
    let app = args.next().unwrap_or_else(|| "hidden_about".into());
    let mock = args.next().unwrap_or_else(|| app.clone());
    let report = std::fs::read_to_string(root.join(format!("reports/{app}.txt")))?;
    let script = parse_script_text(&app, &std::fs::read_to_string(root.join(format!("gold/{app}.txt")))?)?;

    for escalation in [true, false] {
        let mut device = SimSession::new(load_spec(root.join(format!("sim/{app}.json")))?);
        let mut gateway = MockGateway::from_script_file(&root.join(format!("mock/{mock}.txt")))?;
        let config = ReplayConfig { budget: Duration::from_secs(10), escalation, ..Default::default() };
        let r =
            run(&report, &script, &mut device, &mut gateway, &VirtualClock::new(), SimulatedCosts::default(), &config);

        println!("escalation {escalation}: {:?} in {:.1}s ({:.1}s in the model)", r.outcome, r.elapsed, r.llm_time);
        for it in r.trace.iter().take(6) {
            let stuck = it.stuck.as_ref().map(|s| format!(" stuck:{:?}", s.reason)).unwrap_or_default();
            let explored =
                it.exploration.as_ref().map(|x| format!(" explored:{}n/{}e", x.nodes, x.edges)).unwrap_or_default();
            let cmds: Vec<String> =
                it.commands.iter().map(|c| format!("{}{}", c.command, if c.ok { "" } else { " (failed)" })).collect();
            println!("  #{} {} tier {}{stuck}{explored}: {}", it.iteration, it.activity, it.tier, cmds.join(", "));
        }
        if r.trace.len() > 6 {
            println!("  ... {} more iterations", r.trace.len() - 6);
        }
        if let Some(crash) = &r.crash {
            println!("  crash: {} {}", crash.exception_type, crash.message);
        }
    }
    Ok(())
}
