//! Training corpora: seeded sampling, dev splits, verb holdout filtering and
//! descriptive statistics.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sentence::AnnotatedSentence;
use crate::stats::{self, StdKind};
use crate::stimuli::VerbInventory;

/// Surface forms of "to be". Kept in training data and masked at evaluation
/// time by the verb-holdout experiment.
pub const BE_FORMS: &[&str] = &["be", "is", "are", "was", "were", "been", "being", "am"];

/// Inflectional forms for the stimuli's target verbs. Forms observed in the
/// stimuli are always held out; this table adds forms (past tense,
/// participles) that the stimuli never show.
pub const VERB_FORMS: &[(&str, &[&str])] = &[
    ("be", BE_FORMS),
    ("laugh", &["laugh", "laughs", "laughed", "laughing"]),
    ("swim", &["swim", "swims", "swam", "swum", "swimming"]),
    ("smile", &["smile", "smiles", "smiled", "smiling"]),
    ("like", &["like", "likes", "liked", "liking"]),
    ("admire", &["admire", "admires", "admired", "admiring"]),
    ("hate", &["hate", "hates", "hated", "hating"]),
    ("love", &["love", "loves", "loved", "loving"]),
    ("know", &["know", "knows", "knew", "known", "knowing"]),
    ("enjoy", &["enjoy", "enjoys", "enjoyed", "enjoying"]),
    ("write", &["write", "writes", "wrote", "written", "writing"]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "WI_FCE")]
    WiFce,
    #[serde(rename = "WIKED")]
    Wiked,
    #[serde(rename = "SYNTHETIC")]
    Synthetic,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::WiFce => "WI_FCE",
            Provenance::Wiked => "WIKED",
            Provenance::Synthetic => "SYNTHETIC",
        }
    }
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplit {
    pub sentences: Vec<AnnotatedSentence>,
    pub provenance: Provenance,
    pub sample_seed: Option<u64>,
}

impl CorpusSplit {
    pub fn new(sentences: Vec<AnnotatedSentence>, provenance: Provenance) -> Self {
        CorpusSplit {
            sentences,
            provenance,
            sample_seed: None,
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

fn shuffled_prefix(n: usize, size: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..n).collect();
    let (chosen, _) = indices.partial_shuffle(&mut rng, size);
    chosen.to_vec()
}

/// Draws `k` samples of `size` sentences without replacement; sample `i`
/// uses seed `seed + i`.
pub fn sample_training_sets(
    corpus: &CorpusSplit,
    k: usize,
    size: usize,
    seed: u64,
) -> Result<Vec<CorpusSplit>> {
    if size > corpus.len() {
        return Err(Error::InsufficientData {
            requested: size,
            available: corpus.len(),
        });
    }
    Ok((0..k as u64)
        .map(|i| {
            let sample_seed = seed.wrapping_add(i);
            let sentences = shuffled_prefix(corpus.len(), size, sample_seed)
                .into_iter()
                .map(|j| corpus.sentences[j].clone())
                .collect();
            CorpusSplit {
                sentences,
                provenance: corpus.provenance,
                sample_seed: Some(sample_seed),
            }
        })
        .collect())
}

/// Splits off a random dev set of `dev_size` sentences. The remainder keeps
/// its original order.
pub fn split_dev(corpus: &CorpusSplit, dev_size: usize, seed: u64) -> Result<(CorpusSplit, CorpusSplit)> {
    if dev_size > corpus.len() {
        return Err(Error::InsufficientData {
            requested: dev_size,
            available: corpus.len(),
        });
    }
    let chosen = shuffled_prefix(corpus.len(), dev_size, seed);
    let in_dev: BTreeSet<usize> = chosen.iter().copied().collect();
    let dev = chosen.iter().map(|&j| corpus.sentences[j].clone()).collect();
    let rest = corpus
        .sentences
        .iter()
        .enumerate()
        .filter(|(j, _)| !in_dev.contains(j))
        .map(|(_, s)| s.clone())
        .collect();
    Ok((
        CorpusSplit {
            sentences: dev,
            provenance: corpus.provenance,
            sample_seed: Some(seed),
        },
        CorpusSplit {
            sentences: rest,
            provenance: corpus.provenance,
            sample_seed: corpus.sample_seed,
        },
    ))
}

/// Drops every sentence containing a token (lowercased) from
/// `held_out_verbs` that is not also in `exceptions`.
pub fn verb_holdout(
    corpus: &CorpusSplit,
    held_out_verbs: &BTreeSet<String>,
    exceptions: &BTreeSet<String>,
) -> CorpusSplit {
    let banned: BTreeSet<&str> = held_out_verbs
        .difference(exceptions)
        .map(String::as_str)
        .collect();
    let sentences = corpus
        .sentences
        .iter()
        .filter(|s| !s.tokens.iter().any(|t| banned.contains(t.to_lowercase().as_str())))
        .cloned()
        .collect();
    CorpusSplit {
        sentences,
        provenance: corpus.provenance,
        sample_seed: corpus.sample_seed,
    }
}

pub fn be_forms() -> BTreeSet<String> {
    BE_FORMS.iter().map(|s| s.to_string()).collect()
}

/// All forms to hold out for the inventory's target verbs: observed forms
/// plus the inflection table entries of any lemma they belong to.
pub fn held_out_forms(inventory: &VerbInventory) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for group in inventory.lemma_groups() {
        out.extend(group.iter().cloned());
        for (_, forms) in VERB_FORMS {
            if forms.iter().any(|f| group.contains(*f)) {
                out.extend(forms.iter().map(|f| f.to_string()));
            }
        }
    }
    out
}

/// Lowercases `forms` and adds every inflection-table form sharing a lemma
/// with one of them.
pub fn expand_inflections<I, S>(forms: I) -> BTreeSet<String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out: BTreeSet<String> = forms.into_iter().map(|f| f.as_ref().to_lowercase()).collect();
    for (_, table) in VERB_FORMS {
        if table.iter().any(|f| out.contains(*f)) {
            out.extend(table.iter().map(|f| f.to_string()));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorpusStats {
    pub sentences: usize,
    pub mean_length: f64,
    pub std_length: f64,
    pub mean_errors: f64,
    pub std_errors: f64,
}

/// Token-length and error-token moments (population standard deviation).
pub fn corpus_stats(corpus: &CorpusSplit) -> CorpusStats {
    let lengths: Vec<f64> = corpus.sentences.iter().map(|s| s.len() as f64).collect();
    let errors: Vec<f64> = corpus.sentences.iter().map(|s| s.error_count() as f64).collect();
    CorpusStats {
        sentences: corpus.len(),
        mean_length: stats::mean(&lengths),
        std_length: stats::std_dev(&lengths, StdKind::Population),
        mean_errors: stats::mean(&errors),
        std_errors: stats::std_dev(&errors, StdKind::Population),
    }
}
