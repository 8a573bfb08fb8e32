//! Extraction scoring against gold scripts, replay aggregation, and the
//! report tables.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::grammar::{ActionType, S2rScript, S2rStep};
use crate::replay::{Outcome, ReplayResult};

/// `matched` of `total` gold items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub matched: usize,
    pub total: usize,
}

impl Tally {
    pub fn new(matched: usize, total: usize) -> Self {
        assert!(matched <= total, "matched {matched} exceeds total {total}");
        Tally { matched, total }
    }

    /// Not applicable when there was nothing to score.
    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.matched as f64 / self.total as f64)
    }

    fn add(&mut self, other: Tally) {
        self.matched += other.matched;
        self.total += other.total;
    }
}

impl fmt::Display for Tally {
    /// Percentage to two decimals (`87.85%`), rounded half up in integer
    /// arithmetic, or `n/a`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.total == 0 {
            return f.write_str("n/a");
        }
        let (m, t) = (self.matched as u128, self.total as u128);
        let hundredths = (m * 20000 + t) / (2 * t);
        write!(f, "{}.{:02}%", hundredths / 100, hundredths % 100)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExtractionScore {
    pub step: Tally,
    pub action: Tally,
    pub component: Tally,
    pub input: Tally,
    pub direction: Tally,
}

impl ExtractionScore {
    pub fn step_acc(&self) -> Option<f64> {
        self.step.accuracy()
    }

    pub fn action_acc(&self) -> Option<f64> {
        self.action.accuracy()
    }

    pub fn component_acc(&self) -> Option<f64> {
        self.component.accuracy()
    }

    pub fn input_acc(&self) -> Option<f64> {
        self.input.accuracy()
    }

    pub fn direction_acc(&self) -> Option<f64> {
        self.direction.accuracy()
    }

    pub fn tallies(&self) -> [Tally; 5] {
        [self.step, self.action, self.component, self.input, self.direction]
    }

    /// Pools counts, so the merged accuracy is over all gold steps.
    pub fn merge(&mut self, other: &ExtractionScore) {
        self.step.add(other.step);
        self.action.add(other.action);
        self.component.add(other.component);
        self.input.add(other.input);
        self.direction.add(other.direction);
    }
}

/// Case-insensitive with whitespace runs collapsed.
pub fn normalize_component(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

type Key = (ActionType, Option<String>);

fn key(step: &S2rStep) -> Key {
    (step.entity.action, step.entity.component.as_deref().map(normalize_component))
}

/// Longest common subsequence of `a` and `b`, as index pairs. Ties prefer
/// the earliest matches.
fn lcs_pairs(a: &[Key], b: &[Key]) -> Vec<(usize, usize)> {
    let (n, m) = (a.len(), b.len());
    let mut len = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            len[i][j] = if a[i] == b[j] { len[i + 1][j + 1] + 1 } else { len[i + 1][j].max(len[i][j + 1]) };
        }
    }
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < n && j < m {
        if a[i] == b[j] {
            out.push((i, j));
            i += 1;
            j += 1;
        } else if len[i + 1][j] >= len[i][j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Pairs gold steps with predicted steps. First an order-preserving LCS over
/// (action, normalized component); then leftover steps with an equal key in
/// any order; then leftover steps with an equal action.
pub fn align(predicted: &S2rScript, gold: &S2rScript) -> Vec<(usize, usize)> {
    let gk: Vec<Key> = gold.steps.iter().map(key).collect();
    let pk: Vec<Key> = predicted.steps.iter().map(key).collect();
    let mut pairs = lcs_pairs(&gk, &pk);
    let mut gold_used = vec![false; gk.len()];
    let mut pred_used = vec![false; pk.len()];
    for &(g, p) in &pairs {
        gold_used[g] = true;
        pred_used[p] = true;
    }
    let passes: [&dyn Fn(usize, usize) -> bool; 2] = [&|g, p| gk[g] == pk[p], &|g, p| gk[g].0 == pk[p].0];
    for same in passes {
        for (g, used) in gold_used.iter_mut().enumerate() {
            if *used {
                continue;
            }
            if let Some(p) = (0..pk.len()).find(|&p| !pred_used[p] && same(g, p)) {
                *used = true;
                pred_used[p] = true;
                pairs.push((g, p));
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Scores `predicted` against `gold`; every denominator counts gold steps.
///
/// A gold step counts toward step accuracy when it is paired, its pair is
/// not inverted relative to any other pair, and, when both sides record
/// source sentences, both came from the same sentence. Entity dimensions are
/// scored over the gold steps that carry that field.
pub fn score_extraction(predicted: &S2rScript, gold: &S2rScript) -> ExtractionScore {
    let pairs = align(predicted, gold);
    let partner: BTreeMap<usize, usize> = pairs.iter().copied().collect();
    let mut score = ExtractionScore {
        step: Tally::new(0, gold.steps.len()),
        action: Tally::new(0, gold.steps.len()),
        ..Default::default()
    };
    for (g, gs) in gold.steps.iter().enumerate() {
        let ge = &gs.entity;
        let p = partner.get(&g).map(|&p| (p, &predicted.steps[p]));
        if ge.component.is_some() {
            score.component.total += 1;
        }
        if ge.value.is_some() {
            score.input.total += 1;
        }
        if ge.direction.is_some() {
            score.direction.total += 1;
        }
        let Some((pi, ps)) = p else { continue };
        let pe = &ps.entity;
        let ordered = pairs.iter().all(|&(og, op)| og == g || (og < g) == (op < pi));
        let same_sentence = match (gs.sentence_index, ps.sentence_index) {
            (Some(a), Some(b)) => a == b,
            _ => true,
        };
        if ordered && same_sentence {
            score.step.matched += 1;
        }
        if pe.action == ge.action {
            score.action.matched += 1;
        }
        if let Some(gc) = &ge.component {
            if pe.component.as_deref().map(normalize_component) == Some(normalize_component(gc)) {
                score.component.matched += 1;
            }
        }
        if let Some(gv) = &ge.value {
            if pe.value.as_deref().map(normalize_component) == Some(normalize_component(gv)) {
                score.input.matched += 1;
            }
        }
        if ge.direction.is_some() && pe.direction == ge.direction {
            score.direction.matched += 1;
        }
    }
    score
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayAggregate {
    pub nsr: usize,
    pub attempted: usize,
    /// Mean elapsed seconds over reproduced runs.
    pub avg_time: Option<f64>,
    /// Mean model time per attempted run.
    pub avg_llm_time: Option<f64>,
}

pub fn aggregate_replays<'a>(results: impl IntoIterator<Item = &'a ReplayResult>) -> ReplayAggregate {
    let mut nsr = 0;
    let mut attempted = 0;
    let mut success_time = 0.0;
    let mut llm_time = 0.0;
    for r in results {
        attempted += 1;
        llm_time += r.llm_time;
        if r.outcome == Outcome::Reproduced {
            nsr += 1;
            success_time += r.elapsed;
        }
    }
    ReplayAggregate {
        nsr,
        attempted,
        avg_time: (nsr > 0).then(|| success_time / nsr as f64),
        avg_llm_time: (attempted > 0).then(|| llm_time / attempted as f64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRow {
    pub label: String,
    pub score: ExtractionScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRow {
    pub label: String,
    pub aggregate: ReplayAggregate,
}

/// Machine-readable evaluation report.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub extraction: Vec<ExtractionRow>,
    pub replay: Vec<ReplayRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_fingerprint: Option<String>,
    /// Input file name to SHA-256 prefix.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub input_hashes: BTreeMap<String, String>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Plain-text tables: one row per label, space separated.
    pub fn to_text(&self) -> String {
        let mut out = String::from("Extraction Step Action Component Input Direction\n");
        for row in &self.extraction {
            let cells: Vec<String> = row.score.tallies().iter().map(Tally::to_string).collect();
            out.push_str(&format!("{} {}\n", row.label, cells.join(" ")));
        }
        out.push_str("\nReplay NSR Average-Time\n");
        for row in &self.replay {
            let a = &row.aggregate;
            let time = a.avg_time.map_or("n/a".to_string(), |t| format!("{t:.2}s"));
            out.push_str(&format!("{} {}/{} {}\n", row.label, a.nsr, a.attempted, time));
        }
        out
    }
}

/// Renders both report forms: `(plain text, JSON)`.
pub fn emit_report(extraction: &[(String, ExtractionScore)], replay: &[(String, ReplayAggregate)]) -> (String, String) {
    let report = EvalReport {
        extraction: extraction.iter().map(|(l, s)| ExtractionRow { label: l.clone(), score: *s }).collect(),
        replay: replay.iter().map(|(l, a)| ReplayRow { label: l.clone(), aggregate: a.clone() }).collect(),
        ..Default::default()
    };
    (report.to_text(), report.to_json())
}
