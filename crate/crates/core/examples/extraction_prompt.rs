//! Build the few-shot extraction prompt for a report and parse a scripted
//! model reply into an S2R script.
//!
//! ```bash
//! cargo run --example extraction_prompt
//! ```

use std::path::Path;
use std::time::Duration;

use crashrepro::clock::VirtualClock;
use crashrepro::llm::MockGateway;
use crashrepro::pipeline::extract;
use crashrepro::rag::{build_index, load_corpus, HashedTrigramProvider};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let provider = HashedTrigramProvider::default();
    let index = build_index(&load_corpus(&root.join("fixtures/corpus.jsonl"))?, &provider)?;
    let report = std::fs::read_to_string(root.join("fixtures/reports/librenews.txt"))?;
    let mut gateway = MockGateway::from_script_file(&root.join("fixtures/mock/librenews_extract.txt"))?;

    let x = extract("librenews", &report, &index, &provider, &mut gateway, 1, &VirtualClock::new(), Duration::ZERO)?;
    println!("{}", x.prompt);
    println!("--- reply ---\n{}\n", x.exchange.raw_response);
    println!("--- script ---\n{}", x.script.to_notation());
    println!("\n{}", serde_json::to_string_pretty(&x.script)?);
    Ok(())
}
