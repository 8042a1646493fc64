#![allow(dead_code)]

use gedprobe::sentence::{AnnotatedSentence, ConstructionId, Label};
use gedprobe::stimuli::MinimalPair;

/// Pairs per construction in the original stimuli (half the sentence counts).
pub const PAIR_COUNTS: [(ConstructionId, usize); 10] = [
    (ConstructionId::SimpleAgreement, 140),
    (ConstructionId::SententialComplement, 1680),
    (ConstructionId::AcrossPrepositionalPhrase, 22400),
    (ConstructionId::AcrossSubjectRelative, 11200),
    (ConstructionId::ShortVpCoordination, 840),
    (ConstructionId::LongVpCoordination, 400),
    (ConstructionId::AcrossObjectRelative, 22400),
    (ConstructionId::AcrossObjectRelativeNoComp, 22400),
    (ConstructionId::WithinObjectRelative, 22400),
    (ConstructionId::WithinObjectRelativeNoComp, 22400),
];

const SUBJECTS: [(&str, &str); 6] = [
    ("author", "authors"),
    ("pilot", "pilots"),
    ("surgeon", "surgeons"),
    ("farmer", "farmers"),
    ("manager", "managers"),
    ("senator", "senators"),
];
const OBJECTS: [(&str, &str); 5] = [
    ("guard", "guards"),
    ("parent", "parents"),
    ("chef", "chefs"),
    ("architect", "architects"),
    ("dancer", "dancers"),
];
/// (singular, plural[, adjective]) main-clause predicates.
const PREDICATES: [(&str, &str, Option<&str>); 5] = [
    ("laughs", "laugh", None),
    ("swims", "swim", None),
    ("smiles", "smile", None),
    ("is", "are", Some("tall")),
    ("is", "are", Some("young")),
];
const INTRANSITIVE: [(&str, &str); 3] = [("laughs", "laugh"), ("swims", "swim"), ("smiles", "smile")];
const TRANSITIVE: [(&str, &str); 4] = [("likes", "like"), ("admires", "admire"), ("hates", "hate"), ("loves", "love")];
const LONG_VP: [(&str, &str); 6] = [
    ("knows", "know"),
    ("writes", "write"),
    ("reads", "read"),
    ("enjoys", "enjoy"),
    ("plays", "play"),
    ("likes", "like"),
];

fn form(pair: (&'static str, &'static str), plural: bool) -> &'static str {
    if plural {
        pair.1
    } else {
        pair.0
    }
}

struct Builder {
    grammatical: Vec<&'static str>,
    ungrammatical: Vec<&'static str>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            grammatical: Vec::new(),
            ungrammatical: Vec::new(),
        }
    }

    fn both(&mut self, words: &[&'static str]) -> &mut Self {
        self.grammatical.extend(words);
        self.ungrammatical.extend(words);
        self
    }

    /// The agreement target: correct form in the grammatical twin only.
    fn target(&mut self, pair: (&'static str, &'static str), plural: bool) -> &mut Self {
        self.grammatical.push(form(pair, plural));
        self.ungrammatical.push(form(pair, !plural));
        self
    }

    fn predicate(&mut self, i: usize, plural: bool) -> &mut Self {
        let (sg, pl, adj) = PREDICATES[i % PREDICATES.len()];
        self.target((sg, pl), plural);
        if let Some(adj) = adj {
            self.both(&[adj]);
        }
        self
    }

    fn finish(&self, construction: ConstructionId, i: usize) -> MinimalPair {
        let owned = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        MinimalPair {
            construction,
            grammatical: owned(&self.grammatical),
            ungrammatical: owned(&self.ungrammatical),
            pair_id: format!("{}-{i}", construction.name()),
        }
    }
}

fn pair(construction: ConstructionId, i: usize) -> MinimalPair {
    use ConstructionId::*;
    let sp = i % 2 == 1;
    let op = (i / 2) % 2 == 1;
    let subject = form(SUBJECTS[(i / 4) % SUBJECTS.len()], sp);
    let object = form(OBJECTS[(i / 7) % OBJECTS.len()], op);
    let trans = TRANSITIVE[(i / 3) % TRANSITIVE.len()];
    let mut b = Builder::new();
    b.both(&["the", subject]);
    match construction {
        SimpleAgreement => {
            b.predicate(i, sp);
        }
        SententialComplement => {
            b.grammatical.clear();
            b.ungrammatical.clear();
            b.both(&["the", "mechanic", "said", "the", subject]).predicate(i, sp);
        }
        AcrossPrepositionalPhrase => {
            b.both(&["next", "to", "the", object]).predicate(i, sp);
        }
        AcrossSubjectRelative => {
            b.both(&["that", form(trans, sp), "the", object]).predicate(i, sp);
        }
        ShortVpCoordination => {
            let k = i % INTRANSITIVE.len();
            b.both(&[form(INTRANSITIVE[k], sp), "and"])
                .target(INTRANSITIVE[(k + 1) % INTRANSITIVE.len()], sp);
        }
        LongVpCoordination => {
            let k = i % LONG_VP.len();
            b.both(&[form(LONG_VP[k], sp), "many", "different", "foreign", "languages", "and"])
                .target(LONG_VP[(k + 1) % LONG_VP.len()], sp)
                .both(&["to", "watch", "television", "shows"]);
        }
        AcrossObjectRelative => {
            b.both(&["that", "the", object, form(trans, op)]).predicate(i, sp);
        }
        AcrossObjectRelativeNoComp => {
            b.both(&["the", object, form(trans, op)]).predicate(i, sp);
        }
        WithinObjectRelative => {
            b.both(&["that", "the", object]).target(trans, op);
            let (sg, pl, adj) = PREDICATES[i % PREDICATES.len()];
            b.both(&[form((sg, pl), sp)]);
            if let Some(adj) = adj {
                b.both(&[adj]);
            }
        }
        WithinObjectRelativeNoComp => {
            b.both(&["the", object]).target(trans, op);
            let (sg, pl, adj) = PREDICATES[i % PREDICATES.len()];
            b.both(&[form((sg, pl), sp)]);
            if let Some(adj) = adj {
                b.both(&[adj]);
            }
        }
    }
    b.finish(construction, i)
}

/// Stimuli with the original per-construction pair counts and template
/// shapes, built from a small lexicon. 126,260 pairs.
pub fn ml_shaped_pairs() -> Vec<MinimalPair> {
    PAIR_COUNTS
        .iter()
        .flat_map(|&(c, n)| (0..n).map(move |i| pair(c, i)))
        .collect()
}

/// A reduced version with `n` pairs per construction.
pub fn ml_shaped_sample(n: usize) -> Vec<MinimalPair> {
    PAIR_COUNTS
        .iter()
        .flat_map(|&(c, _)| (0..n).map(move |i| pair(c, i)))
        .collect()
}

/// Pickle-export JSONL for the given pairs.
pub fn to_jsonl(pairs: &[MinimalPair]) -> String {
    let mut out = String::new();
    for p in pairs {
        let rec = serde_json::json!({
            "construction": p.construction.name(),
            "grammatical": p.grammatical,
            "ungrammatical": p.ungrammatical,
            "id": p.pair_id,
        });
        out.push_str(&rec.to_string());
        out.push('\n');
    }
    out
}

/// `n` sentences of `len` tokens with a single error at a varying position.
pub fn one_error_sentences(prefix: &str, n: usize, len: usize) -> Vec<AnnotatedSentence> {
    (0..n)
        .map(|i| {
            let tokens = (0..len).map(|j| format!("w{j}")).collect();
            let mut s = AnnotatedSentence::grammatical(format!("{prefix}{i}"), tokens);
            s.labels[(i * 7) % len] = Label::sva();
            s
        })
        .collect()
}
