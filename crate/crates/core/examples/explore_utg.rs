//! Explore the screens around a stuck page and summarize what each element
//! does, the knowledge handed to the model when replay stalls.
//!
//! ```bash
//! cargo run --example explore_utg
//! cargo run --example explore_utg -- 2   # depth 2
//! ```

use std::path::Path;

use crashrepro::clock::{SimulatedCosts, VirtualClock};
use crashrepro::device::Device;
use crashrepro::explorer::{explore, synthesize_functionality, synthesize_ui_functions, AppKnowledge, ExploreConfig};
use crashrepro::llm::MockGateway;
use crashrepro::simulator::{load_spec, SimSession};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let depth = std::env::args().nth(1).map(|d| d.parse()).transpose()?.unwrap_or(1);
    let mut app = SimSession::new(load_spec(root.join("fixtures/sim/hidden_about.json"))?);
    let origin = app.capture_state()?;

    let graph = explore(&mut app, &origin, &[], &ExploreConfig { depth, ..Default::default() })?;
    println!(
        "{} screens, {} transitions, {} device commands",
        graph.nodes.len(),
        graph.edges.len(),
        app.action_log().len()
    );
    for e in &graph.edges {
        println!("  {} --{}--> {}", &e.from[..8], e.action, &e.to[..8]);
    }

    let mut gateway = MockGateway::from_script_file(&root.join("fixtures/mock/hidden_about.txt"))?;
    let clock = VirtualClock::new();
    let cost = SimulatedCosts::default().llm_call;
    let (functionality, _) = synthesize_functionality(&graph, &mut gateway, &clock, cost);
    let (ui_functions, _) = synthesize_ui_functions(&graph, &mut gateway, &clock, cost);
    println!("\n{}", AppKnowledge { graph, functionality, ui_functions }.render());
    Ok(())
}
