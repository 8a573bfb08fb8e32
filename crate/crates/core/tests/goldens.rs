//! Byte-for-byte comparisons against checked-in golden files.

use std::fs;
use std::path::PathBuf;

use crashrepro::clock::{SimulatedCosts, VirtualClock};
use crashrepro::device::encode_state_text;
use crashrepro::grammar::parse_entity_notation;
use crashrepro::grammar::S2rScript;
use crashrepro::llm::MockGateway;
use crashrepro::pipeline::{evaluate_dir, extract, EvalSettings};
use crashrepro::rag::{build_index, load_corpus, HashedTrigramProvider};
use crashrepro::replay::{build_replay_prompt, ReplayConfig};
use crashrepro::simulator::{load_spec, SimSession};

fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

fn golden(name: &str) -> String {
    fs::read_to_string(fixture(&format!("golden/{name}"))).unwrap()
}

#[test]
fn extraction_prompt_and_script() {
    let provider = HashedTrigramProvider::default();
    let index = build_index(&load_corpus(&fixture("corpus.jsonl")).unwrap(), &provider).unwrap();
    let report = fs::read_to_string(fixture("reports/librenews.txt")).unwrap();
    let mut gateway = MockGateway::from_script_file(&fixture("mock/librenews_extract.txt")).unwrap();
    let clock = VirtualClock::new();
    let x =
        extract("librenews", &report, &index, &provider, &mut gateway, 1, &clock, SimulatedCosts::default().llm_call)
            .unwrap();
    assert_eq!(x.prompt, golden("librenews_extraction_prompt.txt"));
    let json = serde_json::to_string_pretty(&x.script).unwrap() + "\n";
    assert_eq!(json, golden("librenews.s2r.json"));
}

#[test]
fn state_encoding() {
    let session = SimSession::new(load_spec(fixture("sim/librenews.json")).unwrap());
    assert_eq!(encode_state_text(&session.render("setup")), golden("librenews_setup_state.txt"));
}

#[test]
fn first_replay_prompt() {
    let session = SimSession::new(load_spec(fixture("sim/librenews.json")).unwrap());
    let report = fs::read_to_string(fixture("reports/librenews.txt")).unwrap();
    let script = S2rScript::from_entities(
        "librenews",
        parse_entity_notation("[Input] [server URL] [xxyyzz]\n[Tap] [OK]\n[Tap] [REFRESH]").entities,
    );
    let prompt = build_replay_prompt(&report, &script, &encode_state_text(&session.render("setup")), None, &[]);
    assert_eq!(prompt, golden("librenews_replay_prompt.txt"));
}

#[test]
fn bundled_eval_report() {
    let provider = HashedTrigramProvider::default();
    let index = build_index(&load_corpus(&fixture("corpus.jsonl")).unwrap(), &provider).unwrap();
    let settings = EvalSettings {
        index: Some(&index),
        provider: &provider,
        k: 1,
        costs: SimulatedCosts::default(),
        replay: ReplayConfig::default(),
        config_fingerprint: None,
    };
    let (report, _) = evaluate_dir(&fixture("scenarios"), &settings).unwrap();
    assert_eq!(report.to_text(), golden("eval_report.txt"));
    // 5 scenarios, 4 reports, 4 gold, 1 predicted, 3 extraction mocks, 3 apps, 3 replay mocks.
    assert_eq!(report.input_hashes.len(), 23);
}
