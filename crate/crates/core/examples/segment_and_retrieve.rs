//! Split a bug report into sentences and look up the closest labeled
//! sentences in the bundled corpus.
//!
//! ```bash
//! cargo run --example segment_and_retrieve
//! cargo run --example segment_and_retrieve -- "Long hold on any video and press add to playlist."
//! ```

use std::path::Path;

use crashrepro::rag::{build_index, load_corpus, segment_report, HashedTrigramProvider};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let provider = HashedTrigramProvider::default();
    let index = build_index(&load_corpus(&root.join("fixtures/corpus.jsonl"))?, &provider)?;
    println!("index: {} records, {} dims, provider {}", index.len(), index.dimension(), index.provider_id());

    let report = match std::env::args().nth(1) {
        Some(text) => text,
        None => std::fs::read_to_string(root.join("fixtures/reports/librenews.txt"))?,
    };
    for sentence in segment_report(&report) {
        println!("\n{sentence}");
        for hit in index.retrieve(&sentence, 3, &provider)? {
            let labels: Vec<String> = hit.record.labels.iter().map(ToString::to_string).collect();
            println!("  {:.3}  {:<50} {}", hit.score, hit.record.sentence, labels.join(" "));
        }
    }
    Ok(())
}
