//! Token-labelled sentences and the JSONL corpus format shared by the
//! stimuli and corpus pipelines.
//!
//! One object per line:
//!
//! ```text
//! {"id":"wi-17","tokens":["He","go","."],"labels":["OK","R:VERB:SVA","OK"]}
//! ```
//!
//! `verb_positions`, `construction` and `eval_mask` are optional and omitted
//! when absent.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// ERRANT tag for replacement subject-verb agreement errors.
pub const SVA_TAG: &str = "R:VERB:SVA";

/// Per-token grammaticality tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Ok,
    /// An ERRANT error type such as `R:VERB:SVA`.
    Error(String),
}

impl Label {
    pub fn sva() -> Self {
        Label::Error(SVA_TAG.to_string())
    }

    pub fn is_error(&self) -> bool {
        matches!(self, Label::Error(_))
    }

    pub fn as_str(&self) -> &str {
        match self {
            Label::Ok => "OK",
            Label::Error(tag) => tag,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        if s == "OK" {
            Label::Ok
        } else {
            Label::Error(s.to_string())
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(Label::from(s.as_str()))
    }
}

/// The ten syntactic constructions of the agreement stimuli. Animate and
/// inanimate variants of a template share one construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstructionId {
    SimpleAgreement,
    SententialComplement,
    AcrossPrepositionalPhrase,
    AcrossSubjectRelative,
    ShortVpCoordination,
    LongVpCoordination,
    AcrossObjectRelative,
    AcrossObjectRelativeNoComp,
    WithinObjectRelative,
    WithinObjectRelativeNoComp,
}

impl ConstructionId {
    pub const ALL: [ConstructionId; 10] = [
        ConstructionId::SimpleAgreement,
        ConstructionId::SententialComplement,
        ConstructionId::AcrossPrepositionalPhrase,
        ConstructionId::AcrossSubjectRelative,
        ConstructionId::ShortVpCoordination,
        ConstructionId::LongVpCoordination,
        ConstructionId::AcrossObjectRelative,
        ConstructionId::AcrossObjectRelativeNoComp,
        ConstructionId::WithinObjectRelative,
        ConstructionId::WithinObjectRelativeNoComp,
    ];

    /// Canonical identifier used in JSONL files.
    pub fn name(self) -> &'static str {
        match self {
            ConstructionId::SimpleAgreement => "simple_agrmt",
            ConstructionId::SententialComplement => "sent_comp",
            ConstructionId::AcrossPrepositionalPhrase => "prep",
            ConstructionId::AcrossSubjectRelative => "subj_rel",
            ConstructionId::ShortVpCoordination => "vp_coord",
            ConstructionId::LongVpCoordination => "long_vp_coord",
            ConstructionId::AcrossObjectRelative => "obj_rel_across",
            ConstructionId::AcrossObjectRelativeNoComp => "obj_rel_no_comp_across",
            ConstructionId::WithinObjectRelative => "obj_rel_within",
            ConstructionId::WithinObjectRelativeNoComp => "obj_rel_no_comp_within",
        }
    }

    /// Human-readable row label for tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ConstructionId::SimpleAgreement => "Simple agr.",
            ConstructionId::SententialComplement => "In sent. comp.",
            ConstructionId::AcrossPrepositionalPhrase => "Across prep.",
            ConstructionId::AcrossSubjectRelative => "Across subj. rel.",
            ConstructionId::ShortVpCoordination => "Short VP coord",
            ConstructionId::LongVpCoordination => "Long VP coord",
            ConstructionId::AcrossObjectRelative => "Across obj. rel.",
            ConstructionId::AcrossObjectRelativeNoComp => "Across obj. rel. (no comp)",
            ConstructionId::WithinObjectRelative => "Within obj. rel.",
            ConstructionId::WithinObjectRelativeNoComp => "Within obj. rel. (no comp)",
        }
    }

    /// Number of finite verbs each template sentence carries.
    pub fn verbs_per_sentence(self) -> usize {
        match self {
            ConstructionId::SimpleAgreement
            | ConstructionId::SententialComplement
            | ConstructionId::AcrossPrepositionalPhrase => 1,
            ConstructionId::LongVpCoordination => 3,
            _ => 2,
        }
    }

    /// Resolves canonical names as well as the animate/inanimate keys of the
    /// original stimuli export (`prep_anim`, `obj_rel_across_inanim`, ...).
    pub fn parse(name: &str) -> Result<Self> {
        let base = name
            .strip_suffix("_anim")
            .or_else(|| name.strip_suffix("_inanim"))
            .unwrap_or(name);
        let found = ConstructionId::ALL.iter().copied().find(|c| {
            c.name() == base
                || (base == "short_vp_coord" && *c == ConstructionId::ShortVpCoordination)
                || (base == "simple_agreement" && *c == ConstructionId::SimpleAgreement)
        });
        found.ok_or_else(|| Error::UnknownConstruction {
            name: name.to_string(),
            valid: ConstructionId::ALL
                .iter()
                .map(|c| c.name())
                .collect::<Vec<_>>()
                .join(", "),
        })
    }
}

impl fmt::Display for ConstructionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConstructionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConstructionId::parse(s)
    }
}

impl Serialize for ConstructionId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ConstructionId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        ConstructionId::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// A tokenised sentence with one grammaticality label per token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub id: String,
    pub tokens: Vec<String>,
    pub labels: Vec<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verb_positions: Option<BTreeSet<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub construction: Option<ConstructionId>,
    /// Token indices excluded from scoring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_mask: Option<BTreeSet<usize>>,
}

impl AnnotatedSentence {
    /// An all-`OK` sentence.
    pub fn grammatical(id: impl Into<String>, tokens: Vec<String>) -> Self {
        let labels = vec![Label::Ok; tokens.len()];
        AnnotatedSentence {
            id: id.into(),
            tokens,
            labels,
            verb_positions: None,
            construction: None,
            eval_mask: None,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn error_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_error())
            .map(|(i, _)| i)
    }

    pub fn error_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_error()).count()
    }

    pub fn is_masked(&self, index: usize) -> bool {
        self.eval_mask.as_ref().is_some_and(|m| m.contains(&index))
    }

    /// Binary gold vector: true where the token carries any error tag.
    pub fn gold(&self) -> Vec<bool> {
        self.labels.iter().map(Label::is_error).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        if self.labels.len() != n {
            return Err(Error::LengthMismatch(format!(
                "sentence `{}` has {} tokens but {} labels",
                self.id,
                n,
                self.labels.len()
            )));
        }
        for (what, set) in [("verb_positions", &self.verb_positions), ("eval_mask", &self.eval_mask)] {
            if let Some(&max) = set.as_ref().and_then(|s| s.iter().next_back()) {
                if max >= n {
                    return Err(Error::InvalidInput(format!(
                        "sentence `{}`: {what} index {max} out of range for {n} tokens",
                        self.id
                    )));
                }
            }
        }
        if self.construction.is_some() {
            let verbs = self.verb_positions.as_ref();
            if let Some(i) = self
                .error_positions()
                .find(|i| !verbs.is_some_and(|v| v.contains(i)))
            {
                return Err(Error::InvalidInput(format!(
                    "sentence `{}`: error at {i} is not a verb position",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

pub fn read_sentences<R: Read>(reader: R) -> Result<Vec<AnnotatedSentence>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let sentence: AnnotatedSentence =
            serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        sentence.validate().map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(sentence);
    }
    Ok(out)
}

pub fn write_sentences<W: Write>(writer: W, sentences: &[AnnotatedSentence]) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for s in sentences {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
    }
    w.flush().map_err(|e| Error::io("<writer>", e))
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<AnnotatedSentence>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_sentences(file).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

pub fn save_corpus(path: impl AsRef<Path>, sentences: &[AnnotatedSentence]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_sentences(file, sentences)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_names_round_trip() {
        for c in ConstructionId::ALL {
            assert_eq!(ConstructionId::parse(c.name()).unwrap(), c);
        }
        assert_eq!(
            ConstructionId::parse("obj_rel_no_comp_within_inanim").unwrap(),
            ConstructionId::WithinObjectRelativeNoComp
        );
        assert_eq!(
            ConstructionId::parse("prep_anim").unwrap(),
            ConstructionId::AcrossPrepositionalPhrase
        );
    }

    #[test]
    fn unknown_construction_lists_valid_names() {
        let err = ConstructionId::parse("reflexives_across").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("reflexives_across"));
        assert!(msg.contains("simple_agrmt") && msg.contains("obj_rel_no_comp_within"));
    }

    #[test]
    fn optional_fields_are_omitted() {
        let s = AnnotatedSentence::grammatical("a", vec!["Hi".into(), ".".into()]);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"id":"a","tokens":["Hi","."],"labels":["OK","OK"]}"#);
    }

    #[test]
    fn validate_rejects_error_outside_verbs() {
        let mut s = AnnotatedSentence::grammatical("a", vec!["The".into(), "author".into(), "laugh".into()]);
        s.labels[1] = Label::sva();
        s.construction = Some(ConstructionId::SimpleAgreement);
        s.verb_positions = Some([2].into());
        assert!(s.validate().is_err());
        s.labels.swap(1, 2);
        s.validate().unwrap();
    }

    #[test]
    fn reader_reports_line_numbers() {
        let text = "{\"id\":\"a\",\"tokens\":[\"x\"],\"labels\":[\"OK\"]}\n\n{\"id\":\"b\",\"tokens\":[\"x\"]}\n";
        match read_sentences(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
