//! Conversion of minimal-pair agreement stimuli into token-level error
//! detection data.
//!
//! Each pair yields two sentences: the grammatical twin with all-`OK` labels
//! and the ungrammatical twin tagged `R:VERB:SVA` at the one token where the
//! pair differs. Verb positions come from a verb inventory built from the
//! differing tokens of the whole dataset, so the verb-only baseline needs no
//! external tagger.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::sentence::{AnnotatedSentence, ConstructionId, Label};
use crate::stats::{self, StdKind};

/// Forms added to the inventory on top of the observed differing tokens.
/// The infinitive in "likes to watch television shows" is a verb of the long
/// coordination template but never an agreement target.
pub const DEFAULT_VERB_SUPPLEMENT: &[&str] = &["watch"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinimalPair {
    pub construction: ConstructionId,
    pub grammatical: Vec<String>,
    pub ungrammatical: Vec<String>,
    pub pair_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StimuliFormat {
    /// JSON lines exported from the original pickle distribution.
    Jsonl,
    /// Tab-separated `construction<TAB>grammatical<TAB>ungrammatical[<TAB>id]`.
    PairedText,
}

impl FromStr for StimuliFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" | "pickle-export-jsonl" => Ok(StimuliFormat::Jsonl),
            "paired-text" | "tsv" => Ok(StimuliFormat::PairedText),
            other => Err(Error::InvalidInput(format!(
                "unknown stimuli format `{other}` (expected pickle-export-jsonl or paired-text)"
            ))),
        }
    }
}

pub fn load_minimal_pairs(path: impl AsRef<Path>, format: StimuliFormat) -> Result<Vec<MinimalPair>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_minimal_pairs(file, format)
}

/// Reads pairs in file order.
///
/// JSONL records take either the structured form
/// `{"construction", "grammatical", "ungrammatical", "id"}` (sentences as
/// token arrays or whitespace-separated strings) or the compact form
/// `{"simple_agrmt": ["the author laughs", "the author laugh"]}`.
pub fn read_minimal_pairs<R: Read>(reader: R, format: StimuliFormat) -> Result<Vec<MinimalPair>> {
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| parse_err(line_no, e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let pair = match format {
            StimuliFormat::Jsonl => parse_json_record(trimmed, line_no)?,
            StimuliFormat::PairedText => {
                if trimmed.starts_with('#') {
                    continue;
                }
                parse_text_record(&line, line_no)?
            }
        };
        if pair.grammatical.is_empty() || pair.ungrammatical.is_empty() {
            return Err(parse_err(line_no, "empty sentence in pair"));
        }
        pairs.push(pair);
    }
    Ok(pairs)
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn construction_at(name: &str, line: usize) -> Result<ConstructionId> {
    ConstructionId::parse(name).map_err(|e| match e {
        Error::UnknownConstruction { name, valid } => parse_err(
            line,
            format!("unknown construction `{name}`; valid names: {valid}"),
        ),
        other => other,
    })
}

fn tokens_of(value: &Value, line: usize) -> Result<Vec<String>> {
    match value {
        Value::String(s) => Ok(s.split_whitespace().map(str::to_string).collect()),
        Value::Array(items) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| parse_err(line, "token is not a string"))
            })
            .collect(),
        _ => Err(parse_err(line, "sentence must be a string or token array")),
    }
}

fn parse_json_record(text: &str, line: usize) -> Result<MinimalPair> {
    let value: Value = serde_json::from_str(text).map_err(|e| parse_err(line, e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| parse_err(line, "record is not a JSON object"))?;
    if let Some(name) = obj.get("construction") {
        let name = name
            .as_str()
            .ok_or_else(|| parse_err(line, "`construction` must be a string"))?;
        let field = |key: &str| {
            obj.get(key)
                .ok_or_else(|| parse_err(line, format!("missing `{key}`")))
        };
        let pair_id = match obj.get("id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            Some(_) => return Err(parse_err(line, "`id` must be a string")),
            None => line.to_string(),
        };
        return Ok(MinimalPair {
            construction: construction_at(name, line)?,
            grammatical: tokens_of(field("grammatical")?, line)?,
            ungrammatical: tokens_of(field("ungrammatical")?, line)?,
            pair_id,
        });
    }
    if obj.len() != 1 {
        return Err(parse_err(
            line,
            "expected `construction` field or a single construction key",
        ));
    }
    let (name, sentences) = obj.iter().next().expect("one key");
    let sentences = sentences
        .as_array()
        .filter(|a| a.len() == 2)
        .ok_or_else(|| parse_err(line, "expected [grammatical, ungrammatical]"))?;
    Ok(MinimalPair {
        construction: construction_at(name, line)?,
        grammatical: tokens_of(&sentences[0], line)?,
        ungrammatical: tokens_of(&sentences[1], line)?,
        pair_id: line.to_string(),
    })
}

fn parse_text_record(text: &str, line: usize) -> Result<MinimalPair> {
    let fields: Vec<&str> = text.split('\t').collect();
    if !(3..=4).contains(&fields.len()) {
        return Err(parse_err(
            line,
            format!("expected 3 or 4 tab-separated fields, found {}", fields.len()),
        ));
    }
    let split = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
    Ok(MinimalPair {
        construction: construction_at(fields[0].trim(), line)?,
        grammatical: split(fields[1]),
        ungrammatical: split(fields[2]),
        pair_id: fields
            .get(3)
            .map(|s| s.trim().to_string())
            .unwrap_or_else(|| line.to_string()),
    })
}

/// Index of the single token where the two sentences of a pair differ.
pub fn diff_index(pair: &MinimalPair) -> Result<usize> {
    let g = &pair.grammatical;
    let u = &pair.ungrammatical;
    let mut differing: Vec<usize> = g
        .iter()
        .zip(u)
        .enumerate()
        .filter(|(_, (a, b))| a != b)
        .map(|(i, _)| i)
        .collect();
    let extra = g.len().abs_diff(u.len());
    if differing.len() == 1 && extra == 0 {
        return Ok(differing.remove(0));
    }
    Err(Error::PairInvariant {
        differing: differing.len() + extra,
        grammatical: g.clone(),
        ungrammatical: u.clone(),
    })
}

/// Capitalises the first character and appends a final `.` token if missing.
pub fn normalize(tokens: &[String]) -> Result<Vec<String>> {
    let (first, rest) = tokens
        .split_first()
        .ok_or_else(|| Error::InvalidInput("cannot normalize an empty sentence".into()))?;
    let mut out = Vec::with_capacity(tokens.len() + 1);
    let mut chars = first.chars();
    out.push(match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    });
    out.extend(rest.iter().cloned());
    if out.last().map(String::as_str) != Some(".") {
        out.push(".".to_string());
    }
    Ok(out)
}

/// Verb forms known to the dataset.
///
/// `lemmas` groups differing-token forms that were paired with each other
/// (e.g. `is`/`are`, `laughs`/`laugh`); supplemental forms are recognised as
/// verbs but belong to no group.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VerbInventory {
    forms: BTreeSet<String>,
    lemmas: Vec<BTreeSet<String>>,
}

impl VerbInventory {
    pub fn contains(&self, token: &str) -> bool {
        self.forms.contains(&token.to_lowercase())
    }

    pub fn forms(&self) -> &BTreeSet<String> {
        &self.forms
    }

    /// Groups of inflectional variants, one per target verb.
    pub fn lemma_groups(&self) -> &[BTreeSet<String>] {
        &self.lemmas
    }

    pub fn lemma_count(&self) -> usize {
        self.lemmas.len()
    }

    /// Forms that belong to some lemma group (i.e. excluding supplements).
    pub fn target_forms(&self) -> BTreeSet<String> {
        self.lemmas.iter().flatten().cloned().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }
}

/// Union of the lowercased differing tokens of all pairs, plus `supplement`.
/// Pairs that violate the one-difference invariant are skipped.
pub fn build_verb_inventory<S: AsRef<str>>(pairs: &[MinimalPair], supplement: &[S]) -> VerbInventory {
    // union-find over forms; each pair links its grammatical and
    // ungrammatical verb form
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut parent: Vec<usize> = Vec::new();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut intern = |form: String, parent: &mut Vec<usize>| -> usize {
        *ids.entry(form).or_insert_with(|| {
            parent.push(parent.len());
            parent.len() - 1
        })
    };
    for pair in pairs {
        let Ok(i) = diff_index(pair) else { continue };
        let a = intern(pair.grammatical[i].to_lowercase(), &mut parent);
        let b = intern(pair.ungrammatical[i].to_lowercase(), &mut parent);
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for (form, id) in &ids {
        let root = find(&mut parent, *id);
        groups.entry(root).or_default().insert(form.clone());
    }
    let mut lemmas: Vec<BTreeSet<String>> = groups.into_values().collect();
    lemmas.sort();
    let mut forms: BTreeSet<String> = ids.into_keys().collect();
    forms.extend(supplement.iter().map(|s| s.as_ref().to_lowercase()));
    VerbInventory { forms, lemmas }
}

/// Converts one pair into its (grammatical, ungrammatical) annotated twins.
pub fn convert_pair(
    pair: &MinimalPair,
    inventory: &VerbInventory,
) -> Result<(AnnotatedSentence, AnnotatedSentence)> {
    if inventory.is_empty() {
        return Err(Error::InvalidInput("verb inventory is empty".into()));
    }
    let target = diff_index(pair)?;
    let grammatical = normalize(&pair.grammatical)?;
    let ungrammatical = normalize(&pair.ungrammatical)?;
    let mut verbs: BTreeSet<usize> = ungrammatical
        .iter()
        .enumerate()
        .filter(|(_, t)| inventory.contains(t))
        .map(|(i, _)| i)
        .collect();
    verbs.insert(target);

    let make = |suffix: &str, tokens: Vec<String>, error: bool| {
        let mut labels = vec![Label::Ok; tokens.len()];
        if error {
            labels[target] = Label::sva();
        }
        AnnotatedSentence {
            id: format!("{}-{suffix}", pair.pair_id),
            tokens,
            labels,
            verb_positions: Some(verbs.clone()),
            construction: Some(pair.construction),
            eval_mask: None,
        }
    };
    Ok((make("g", grammatical, false), make("u", ungrammatical, true)))
}

/// Converts every pair, grammatical twin first.
pub fn convert_all(pairs: &[MinimalPair], inventory: &VerbInventory) -> Result<Vec<AnnotatedSentence>> {
    let mut out = Vec::with_capacity(pairs.len() * 2);
    for pair in pairs {
        let (g, u) = convert_pair(pair, inventory)?;
        out.push(g);
        out.push(u);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstructionStats {
    pub construction: ConstructionId,
    pub count: usize,
    pub mean_length: f64,
    pub std_length: f64,
    /// Length moments ignoring a sentence-final `.` token.
    pub mean_length_no_period: f64,
    pub std_length_no_period: f64,
}

/// Per-construction sentence counts and token-length moments (population
/// standard deviation). Sentences without a construction are ignored.
pub fn stimuli_stats(sentences: &[AnnotatedSentence]) -> Vec<ConstructionStats> {
    let mut lengths: BTreeMap<ConstructionId, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for s in sentences {
        let Some(c) = s.construction else { continue };
        let n = s.tokens.len();
        let bare = if s.tokens.last().map(String::as_str) == Some(".") {
            n - 1
        } else {
            n
        };
        let entry = lengths.entry(c).or_default();
        entry.0.push(n as f64);
        entry.1.push(bare as f64);
    }
    lengths
        .into_iter()
        .map(|(construction, (with, without))| ConstructionStats {
            construction,
            count: with.len(),
            mean_length: stats::mean(&with),
            std_length: stats::std_dev(&with, StdKind::Population),
            mean_length_no_period: stats::mean(&without),
            std_length_no_period: stats::std_dev(&without, StdKind::Population),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn pair(c: ConstructionId, g: &str, u: &str) -> MinimalPair {
        MinimalPair {
            construction: c,
            grammatical: toks(g),
            ungrammatical: toks(u),
            pair_id: "p".into(),
        }
    }

    #[test]
    fn compact_json_record() {
        let text = r#"{"simple_agrmt": ["the author laughs","the author laugh"]}"#;
        let pairs = read_minimal_pairs(text.as_bytes(), StimuliFormat::Jsonl).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].construction, ConstructionId::SimpleAgreement);
        assert_eq!(pairs[0].ungrammatical, toks("the author laugh"));
    }

    #[test]
    fn structured_json_record() {
        let text = r#"{"construction":"prep_inanim","grammatical":["the","game","near","the","boys","is","fun"],"ungrammatical":"the game near the boys are fun","id":"x7"}"#;
        let pairs = read_minimal_pairs(text.as_bytes(), StimuliFormat::Jsonl).unwrap();
        assert_eq!(pairs[0].pair_id, "x7");
        assert_eq!(pairs[0].construction, ConstructionId::AcrossPrepositionalPhrase);
        assert_eq!(diff_index(&pairs[0]).unwrap(), 5);
    }

    #[test]
    fn empty_file_gives_no_pairs() {
        assert!(read_minimal_pairs(&b""[..], StimuliFormat::Jsonl).unwrap().is_empty());
        assert!(read_minimal_pairs(&b"\n\n"[..], StimuliFormat::PairedText).unwrap().is_empty());
    }

    #[test]
    fn malformed_record_reports_line() {
        let text = "{\"simple_agrmt\": [\"a b\",\"a c\"]}\n{\"simple_agrmt\": [\"a b\"]}\n";
        match read_minimal_pairs(text.as_bytes(), StimuliFormat::Jsonl) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_construction_rejected_with_valid_names() {
        let text = "{\"npi_across_anim\": [\"a b\",\"a c\"]}\n";
        let err = read_minimal_pairs(text.as_bytes(), StimuliFormat::Jsonl).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("npi_across_anim") && msg.contains("long_vp_coord"), "{msg}");
    }

    #[test]
    fn paired_text_format() {
        let text = "# comment\nsent_comp\tthe bankers knew the officer smiles\tthe bankers knew the officer smile\tsc-1\n";
        let pairs = read_minimal_pairs(text.as_bytes(), StimuliFormat::PairedText).unwrap();
        assert_eq!(pairs[0].pair_id, "sc-1");
        assert_eq!(diff_index(&pairs[0]).unwrap(), 5);
        let bad = "sent_comp\tonly one field\n";
        assert!(read_minimal_pairs(bad.as_bytes(), StimuliFormat::PairedText).is_err());
    }

    #[test]
    fn diff_index_examples() {
        let p = pair(ConstructionId::SimpleAgreement, "The author laughs .", "The author laugh .");
        assert_eq!(diff_index(&p).unwrap(), 2);
        let p = pair(
            ConstructionId::AcrossPrepositionalPhrase,
            "The farmer near the parents smiles .",
            "The farmer near the parents smile .",
        );
        assert_eq!(diff_index(&p).unwrap(), 5);
    }

    #[test]
    fn diff_index_rejects_identical_and_double_differences() {
        let same = pair(ConstructionId::SimpleAgreement, "a b", "a b");
        match diff_index(&same) {
            Err(Error::PairInvariant { differing, grammatical, .. }) => {
                assert_eq!(differing, 0);
                assert_eq!(grammatical, toks("a b"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let two = pair(ConstructionId::SimpleAgreement, "the author laughs", "the authors laugh");
        assert!(diff_index(&two).is_err());
        let ragged = pair(ConstructionId::SimpleAgreement, "the author laughs", "the author laugh now");
        assert!(diff_index(&ragged).is_err());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&toks("the author laughs")).unwrap(), toks("The author laughs ."));
        assert_eq!(normalize(&toks("The author laughs .")).unwrap(), toks("The author laughs ."));
        assert_eq!(
            normalize(&toks("the senator smiles and laughs")).unwrap(),
            toks("The senator smiles and laughs .")
        );
        assert!(normalize(&[]).is_err());
    }

    #[test]
    fn convert_simple_pair() {
        let p = pair(ConstructionId::SimpleAgreement, "the author laughs", "the author laugh");
        let inv = build_verb_inventory(std::slice::from_ref(&p), &[] as &[&str]);
        let (g, u) = convert_pair(&p, &inv).unwrap();
        assert_eq!(u.tokens, toks("The author laugh ."));
        assert_eq!(u.labels, vec![Label::Ok, Label::Ok, Label::sva(), Label::Ok]);
        assert!(g.labels.iter().all(|l| *l == Label::Ok));
        assert_eq!(g.verb_positions, u.verb_positions);
        assert_eq!(g.id, "p-g");
        assert_eq!(u.id, "p-u");
    }

    #[test]
    fn within_object_relative_verb_positions() {
        let within = pair(
            ConstructionId::WithinObjectRelative,
            "the farmer that the parents love swims",
            "the farmer that the parents loves swims",
        );
        let across = pair(
            ConstructionId::AcrossObjectRelative,
            "the farmer that the parents love swims",
            "the farmer that the parents love swim",
        );
        let inv = build_verb_inventory(&[within.clone(), across], &[] as &[&str]);
        let (g, _) = convert_pair(&within, &inv).unwrap();
        assert_eq!(g.verb_positions, Some([5, 6].into()));
    }

    #[test]
    fn inventory_single_pair_and_lemmas() {
        let p = pair(ConstructionId::SimpleAgreement, "the author laughs", "the author laugh");
        let inv = build_verb_inventory(std::slice::from_ref(&p), &[] as &[&str]);
        let expected: BTreeSet<String> = ["laugh", "laughs"].iter().map(|s| s.to_string()).collect();
        assert_eq!(inv.forms(), &expected);
        assert_eq!(inv.lemma_count(), 1);

        let be = pair(ConstructionId::SimpleAgreement, "the movie is good", "the movie are good");
        let be2 = pair(ConstructionId::SimpleAgreement, "the movies are good", "the movies is good");
        let inv = build_verb_inventory(&[p, be, be2], &["watch"]);
        assert!(inv.contains("is") && inv.contains("Are") && inv.contains("watch"));
        assert_eq!(inv.lemma_count(), 2);
        assert!(!inv.target_forms().contains("watch"));
    }

    #[test]
    fn convert_rejects_empty_inventory() {
        let p = pair(ConstructionId::SimpleAgreement, "the author laughs", "the author laugh");
        assert!(convert_pair(&p, &VerbInventory::default()).is_err());
    }

    #[test]
    fn stats_with_and_without_period() {
        let p1 = pair(ConstructionId::SimpleAgreement, "the author laughs", "the author laugh");
        let p2 = pair(ConstructionId::SimpleAgreement, "the author is tall", "the author are tall");
        let inv = build_verb_inventory(&[p1.clone(), p2.clone()], &[] as &[&str]);
        let sentences = convert_all(&[p1, p2], &inv).unwrap();
        let table = stimuli_stats(&sentences);
        assert_eq!(table.len(), 1);
        assert_eq!(table[0].count, 4);
        assert!((table[0].mean_length - 4.5).abs() < 1e-12);
        assert!((table[0].std_length - 0.5).abs() < 1e-12);
        assert!((table[0].mean_length_no_period - 3.5).abs() < 1e-12);
        assert!(stimuli_stats(&[]).is_empty());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(tokens in prop::collection::vec("[a-zA-Z.]{1,6}", 1..8)) {
            let once = normalize(&tokens).unwrap();
            prop_assert_eq!(normalize(&once).unwrap(), once.clone());
            prop_assert_eq!(once.last().unwrap(), ".");
        }

        #[test]
        fn converted_pair_has_one_error_at_diff(
            words in prop::collection::vec("[a-z]{2,6}", 2..8),
            at in 0usize..8,
        ) {
            let at = at % words.len();
            let mut other = words.clone();
            other[at].push_str("zz");
            let p = MinimalPair {
                construction: ConstructionId::SimpleAgreement,
                grammatical: words,
                ungrammatical: other,
                pair_id: "q".into(),
            };
            let inv = build_verb_inventory(std::slice::from_ref(&p), &[] as &[&str]);
            let (g, u) = convert_pair(&p, &inv).unwrap();
            let errors: Vec<usize> = g.error_positions().chain(u.error_positions()).collect();
            prop_assert_eq!(errors, vec![at]);
            prop_assert!(u.labels[at].is_error());
            prop_assert_eq!(&g.verb_positions, &u.verb_positions);
        }
    }
}
