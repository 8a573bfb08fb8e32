//! Score predicted scripts against gold and render the report tables.
//!
//! ```bash
//! cargo run --example evaluate_extraction
//! ```

use crashrepro::eval::{align, emit_report, score_extraction};
use crashrepro::grammar::parse_extraction_response;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gold = parse_extraction_response(
        "search",
        "1. [Tap] [search icon]\n2. [Input] [search term] [A]\n3. [Long Tap] [category A]",
    )?;
    let candidates = [
        ("exact", gold.to_notation()),
        ("missing-step", "[Tap][search icon]\n[Input][search term]".to_string()),
        ("swapped", "[Input] [search term] [A]\n[Tap] [search icon]\n[Long Tap] [category A]".to_string()),
    ];

    let mut rows = Vec::new();
    for (label, text) in candidates {
        let predicted = parse_extraction_response("search", &text)?;
        println!("{label}: pairs {:?}", align(&predicted, &gold));
        rows.push((label.to_string(), score_extraction(&predicted, &gold)));
    }
    let (text, json) = emit_report(&rows, &[]);
    println!("\n{text}");
    println!("{}", &json[..json.len().min(400)]);
    Ok(())
}
