//! Pull JSON action arrays out of chatty model replies.
//!
//! ```bash
//! cargo run --example filter_llm_output
//! ```

use crashrepro::llm::{filter_json_payload, parse_action_sequence};

const REPLIES: [&str; 4] = [
    r#"Sure! [{"action": "click", "feature": "REFRESH"}]"#,
    "1. **Explore the \"Licenses\" section**\n  [{\"action\": \"click\", \"feature\": \"Licenses\"}]\n\
     2. **Scroll down**\n  [{\"action\": \"scroll\", \"target_direction\": \"down\"}]\n\
     3. **Back**\n  [{\"action\": \"back\"}]",
    "### Suggestion:\n1. **Tap on the \"share dialog\" widget**.",
    r#"[{"action": "input", "feature": "Search"}]"#,
];

fn main() {
    for reply in REPLIES {
        println!("reply: {}", reply.lines().next().unwrap_or(""));
        match filter_json_payload(reply) {
            None => println!("  no action array\n"),
            Some(json) => {
                println!("  payload: {json}");
                match parse_action_sequence(&json) {
                    Ok(cmds) => cmds.iter().for_each(|c| println!("  -> {c}")),
                    Err(e) => println!("  rejected: {e}"),
                }
                println!();
            }
        }
    }
}
