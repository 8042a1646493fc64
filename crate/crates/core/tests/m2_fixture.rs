use std::collections::BTreeSet;

use gedprobe::m2::{apply_edits, parse_m2, selective_correct, Edit, M2Entry};
use gedprobe::SVA_TAG;
use proptest::prelude::*;
use serde::Deserialize;

const M2: &str = include_str!("fixtures/m2_200.m2");
const CORRECTED: &str = include_str!("fixtures/m2_200.corrected.txt");
const SELECTIVE: &str = include_str!("fixtures/m2_200.selective.jsonl");

#[derive(Deserialize)]
struct Expected {
    index: usize,
    kept: bool,
    tokens: Vec<String>,
    error_positions: Vec<usize>,
}

fn sva() -> BTreeSet<String> {
    [SVA_TAG.to_string()].into_iter().collect()
}

#[test]
fn full_application_matches_gold() {
    let doc = parse_m2(M2).unwrap();
    assert_eq!(doc.entries.len(), 200);
    assert!(doc.warnings.is_empty());
    let gold: Vec<&str> = CORRECTED.lines().collect();
    assert_eq!(gold.len(), 200);
    for (entry, g) in doc.entries.iter().zip(gold) {
        let out = apply_edits(entry, &entry.edits).unwrap();
        assert_eq!(out.join(" "), g, "entry {}", entry.id);
        // nothing left to label once every edit is applied
        assert!(selective_correct(entry, &BTreeSet::new()).unwrap().is_none());
    }
}

#[test]
fn selective_correction_matches_expected() {
    let doc = parse_m2(M2).unwrap();
    let expected: Vec<Expected> = SELECTIVE.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let mut kept = 0;
    for (entry, exp) in doc.entries.iter().zip(&expected) {
        let got = selective_correct(entry, &sva()).unwrap();
        assert_eq!(got.is_some(), exp.kept, "entry {}", exp.index);
        let Some(s) = got else { continue };
        kept += 1;
        assert_eq!(s.tokens, exp.tokens, "entry {}", exp.index);
        assert_eq!(s.error_positions().collect::<Vec<_>>(), exp.error_positions, "entry {}", exp.index);
        assert!(s.labels.iter().all(|l| !l.is_error() || l.as_str() == SVA_TAG));
    }
    assert!(kept > 50, "fixture should keep a good share of entries, kept {kept}");
}

#[test]
fn second_annotator_ignored() {
    let doc = parse_m2(M2).unwrap();
    assert!(doc.entries.iter().flat_map(|e| &e.edits).all(|e| e.annotator == 0));
    assert!(!doc.entries.iter().flat_map(|e| &e.edits).any(|e| e.replacement == ["Annotator1"]));
}

/// Left-to-right reference: copies source up to each edit, then either the
/// replacement (non-target) or the original span (target, labelled).
fn oracle(entry: &M2Entry, targets: &BTreeSet<String>) -> (Vec<String>, Vec<(usize, String)>) {
    let mut out: Vec<String> = Vec::new();
    let mut labels = Vec::new();
    let mut cursor = 0;
    for e in &entry.edits {
        out.extend_from_slice(&entry.source_tokens[cursor..e.start]);
        if targets.contains(&e.error_type) {
            if e.start == e.end {
                labels.push((out.len(), e.error_type.clone()));
            } else {
                labels.extend((out.len()..out.len() + e.end - e.start).map(|i| (i, e.error_type.clone())));
            }
            out.extend_from_slice(&entry.source_tokens[e.start..e.end]);
        } else {
            out.extend(e.replacement.iter().cloned());
        }
        cursor = e.end;
    }
    out.extend_from_slice(&entry.source_tokens[cursor..]);
    // an insertion at the very end labels the final token
    let n = out.len();
    for l in &mut labels {
        if l.0 == n {
            l.0 = n - 1;
        }
    }
    (out, labels)
}

const TYPES: [&str; 6] = ["R:VERB:SVA", "M:DET", "U:PREP", "R:NOUN:NUM", "R:OTHER", "M:VERB"];

fn arb_entry() -> impl Strategy<Value = M2Entry> {
    (1usize..14)
        .prop_flat_map(|n| {
            let edits = prop::collection::vec((0..=n, 0usize..3, 0usize..TYPES.len(), 0usize..3), 0..5);
            (Just(n), edits)
        })
        .prop_map(|(n, raw)| {
            let source: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
            let mut edits: Vec<Edit> = Vec::new();
            let mut min_start = 0;
            let mut sorted = raw;
            sorted.sort();
            for (start, len, ty, repl_len) in sorted {
                let ty = TYPES[ty];
                let len = match ty.as_bytes()[0] {
                    b'M' => 0,
                    _ => len.max(1),
                };
                if start < min_start || start + len > n || (len > 0 && start == n) {
                    continue;
                }
                let replacement = match ty.as_bytes()[0] {
                    b'U' => Vec::new(),
                    _ => (0..repl_len.max(1)).map(|k| format!("r{start}_{k}")).collect(),
                };
                edits.push(Edit {
                    start,
                    end: start + len,
                    replacement,
                    error_type: ty.to_string(),
                    annotator: 0,
                });
                min_start = start + len + 1;
            }
            M2Entry {
                id: "p".into(),
                source_tokens: source,
                edits,
            }
        })
}

proptest! {
    #[test]
    fn selective_matches_oracle(entry in arb_entry(), with_missing in any::<bool>()) {
        let mut targets = BTreeSet::from([SVA_TAG.to_string()]);
        if with_missing {
            targets.insert("M:DET".to_string());
        }
        let (tokens, labels) = oracle(&entry, &targets);
        prop_assume!(!tokens.is_empty());
        let got = selective_correct(&entry, &targets).unwrap();
        if labels.is_empty() {
            prop_assert!(got.is_none());
        } else {
            let s = got.unwrap();
            prop_assert_eq!(&s.tokens, &tokens);
            let got_labels: Vec<(usize, String)> = s
                .labels
                .iter()
                .enumerate()
                .filter(|(_, l)| l.is_error())
                .map(|(i, l)| (i, l.as_str().to_string()))
                .collect();
            let mut want = labels.clone();
            want.sort();
            want.dedup_by_key(|l| l.0);
            prop_assert_eq!(got_labels, want);
        }
    }

    #[test]
    fn full_application_matches_oracle(entry in arb_entry()) {
        let (tokens, _) = oracle(&entry, &BTreeSet::new());
        prop_assert_eq!(apply_edits(&entry, &entry.edits).unwrap(), tokens);
    }

    #[test]
    fn retained_spans_keep_source_surface(entry in arb_entry()) {
        if let Some(s) = selective_correct(&entry, &BTreeSet::from([SVA_TAG.to_string()])).unwrap() {
            let source_errors: Vec<&String> = entry
                .edits
                .iter()
                .filter(|e| e.error_type == SVA_TAG)
                .flat_map(|e| &entry.source_tokens[e.start..e.end])
                .collect();
            let labelled: Vec<&String> = s.error_positions().map(|i| &s.tokens[i]).collect();
            prop_assert_eq!(labelled, source_errors);
        }
    }
}
