//! M2 annotation parsing, edit application, and selective correction.
//!
//! ```text
//! S The train are good
//! A 2 3|||R:VERB:SVA|||is|||REQUIRED|||-NONE-|||0
//!
//! ```
//!
//! Selective correction applies every edit outside a target set so that the
//! output sentence only contains errors of the target types, then labels the
//! remaining erroneous tokens.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sentence::{AnnotatedSentence, Label};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Edit {
    pub start: usize,
    /// Exclusive; equal to `start` for insertions.
    pub end: usize,
    /// Empty for deletions.
    pub replacement: Vec<String>,
    /// `OP:MAIN[:SUB]`, e.g. `R:VERB:SVA`, or `UNK`.
    pub error_type: String,
    pub annotator: u32,
}

impl Edit {
    pub fn is_insertion(&self) -> bool {
        self.start == self.end
    }

    /// Change in sentence length when this edit is applied.
    fn delta(&self) -> isize {
        self.replacement.len() as isize - (self.end - self.start) as isize
    }

    fn overlaps(&self, other: &Edit) -> bool {
        if self.is_insertion() && other.is_insertion() {
            return self.start == other.start;
        }
        if self.is_insertion() {
            return other.start < self.start && self.start < other.end;
        }
        if other.is_insertion() {
            return self.start < other.start && other.start < self.end;
        }
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct M2Entry {
    pub id: String,
    pub source_tokens: Vec<String>,
    /// Sorted by span, non-overlapping.
    pub edits: Vec<Edit>,
}

/// An edit dropped during parsing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseWarning {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct M2Document {
    pub entries: Vec<M2Entry>,
    pub warnings: Vec<ParseWarning>,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    pub annotator: u32,
    /// Entry ids are `{id_prefix}{block index}`.
    pub id_prefix: String,
}

pub fn parse_m2(text: &str) -> Result<M2Document> {
    parse_m2_with(text, &ParseOptions::default())
}

pub fn parse_m2_with(text: &str, opts: &ParseOptions) -> Result<M2Document> {
    let mut doc = M2Document::default();
    let mut current: Option<(M2Entry, Vec<(usize, Edit)>)> = None;

    let finish = |doc: &mut M2Document, block: Option<(M2Entry, Vec<(usize, Edit)>)>| {
        let Some((mut entry, edits)) = block else { return };
        let mut kept: Vec<Edit> = Vec::with_capacity(edits.len());
        for (line, edit) in edits {
            if let Some(prev) = kept.iter().find(|k| k.overlaps(&edit)) {
                let message = format!(
                    "edit {}..{} ({}) overlaps earlier edit {}..{} ({}); dropped",
                    edit.start, edit.end, edit.error_type, prev.start, prev.end, prev.error_type
                );
                log::warn!("line {line}: {message}");
                doc.warnings.push(ParseWarning { line, message });
                continue;
            }
            kept.push(edit);
        }
        kept.sort_by_key(|e| (e.start, e.end));
        entry.edits = kept;
        doc.entries.push(entry);
    };

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            finish(&mut doc, current.take());
            continue;
        }
        if let Some(rest) = line.strip_prefix("S ").or_else(|| (line == "S").then_some("")) {
            finish(&mut doc, current.take());
            let entry = M2Entry {
                id: format!("{}{}", opts.id_prefix, doc.entries.len()),
                source_tokens: rest.split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect(),
                edits: Vec::new(),
            };
            current = Some((entry, Vec::new()));
        } else if let Some(rest) = line.strip_prefix("A ") {
            let Some((entry, edits)) = current.as_mut() else {
                return Err(parse_err(line_no, "annotation line before any S line"));
            };
            if let Some(edit) = parse_edit(rest, line_no, entry.source_tokens.len())? {
                if edit.annotator == opts.annotator {
                    edits.push((line_no, edit));
                }
            }
        } else {
            return Err(parse_err(line_no, format!("unrecognised line `{line}`")));
        }
    }
    finish(&mut doc, current.take());
    Ok(doc)
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parses the body of an `A` line. Returns `None` for no-op edits.
fn parse_edit(body: &str, line: usize, source_len: usize) -> Result<Option<Edit>> {
    let fields: Vec<&str> = body.split("|||").collect();
    if fields.len() < 3 {
        return Err(parse_err(line, "annotation needs span, type and correction fields"));
    }
    let error_type = fields[1].trim();
    if error_type.eq_ignore_ascii_case("noop") {
        return Ok(None);
    }
    let mut span = fields[0].split_whitespace();
    let (Some(s), Some(e), None) = (span.next(), span.next(), span.next()) else {
        return Err(parse_err(line, format!("malformed span `{}`", fields[0])));
    };
    let parse_index = |v: &str| {
        v.parse::<usize>()
            .map_err(|_| parse_err(line, format!("span bound `{v}` is not a non-negative integer")))
    };
    let (start, end) = (parse_index(s)?, parse_index(e)?);
    if start > end || end > source_len {
        return Err(parse_err(
            line,
            format!("span {start}..{end} out of range for {source_len} tokens"),
        ));
    }
    if error_type != "UNK" {
        let op = error_type.split(':').next().unwrap_or("");
        if !matches!(op, "R" | "M" | "U") || !error_type.contains(':') {
            return Err(parse_err(line, format!("invalid error type `{error_type}`")));
        }
    }
    let correction = fields[2].trim();
    let replacement = if correction.is_empty() || correction == "-NONE-" {
        Vec::new()
    } else {
        correction.split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect()
    };
    let annotator = match fields.get(5) {
        Some(a) => a
            .trim()
            .parse::<u32>()
            .map_err(|_| parse_err(line, format!("annotator id `{a}` is not an integer")))?,
        None => 0,
    };
    Ok(Some(Edit {
        start,
        end,
        replacement,
        error_type: error_type.to_string(),
        annotator,
    }))
}

fn check_selection(entry: &M2Entry, selected: &[&Edit]) -> Result<()> {
    for w in selected.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (a.start, a.end) > (b.start, b.end) {
            return Err(Error::InvalidInput(format!(
                "edits not sorted: {}..{} before {}..{}",
                a.start, a.end, b.start, b.end
            )));
        }
        if a.overlaps(b) {
            return Err(Error::OverlappingEdits(format!(
                "{}..{} and {}..{} in `{}`",
                a.start, a.end, b.start, b.end, entry.id
            )));
        }
    }
    if let Some(e) = selected.iter().find(|e| e.end > entry.source_tokens.len()) {
        return Err(Error::InvalidInput(format!(
            "edit {}..{} exceeds {} source tokens",
            e.start,
            e.end,
            entry.source_tokens.len()
        )));
    }
    Ok(())
}

/// Applies `selected` right to left so earlier spans keep their indices.
pub fn apply_edits(entry: &M2Entry, selected: &[Edit]) -> Result<Vec<String>> {
    let refs: Vec<&Edit> = selected.iter().collect();
    apply_edit_refs(entry, &refs)
}

fn apply_edit_refs(entry: &M2Entry, selected: &[&Edit]) -> Result<Vec<String>> {
    check_selection(entry, selected)?;
    let mut tokens = entry.source_tokens.clone();
    for edit in selected.iter().rev() {
        tokens.splice(edit.start..edit.end, edit.replacement.iter().cloned());
    }
    Ok(tokens)
}

/// Corrects all edits whose type is not in `target_types` and labels the
/// retained target errors. Returns `None` when no target edit remains.
///
/// Replacement and unnecessary-token errors label their (uncorrected) span;
/// missing-token errors label the token after the insertion point, or the
/// final token when the insertion is at the end of the sentence.
pub fn selective_correct(
    entry: &M2Entry,
    target_types: &BTreeSet<String>,
) -> Result<Option<AnnotatedSentence>> {
    let (retained, applied): (Vec<&Edit>, Vec<&Edit>) = entry
        .edits
        .iter()
        .partition(|e| target_types.contains(&e.error_type));
    let tokens = apply_edit_refs(entry, &applied)?;
    if retained.is_empty() {
        return Ok(None);
    }
    let mut labels = vec![Label::Ok; tokens.len()];
    for edit in retained {
        let shift: isize = applied
            .iter()
            .filter(|a| a.end <= edit.start)
            .map(|a| a.delta())
            .sum();
        let start = edit.start as isize + shift;
        let end = edit.end as isize + shift;
        let out_of_bounds = || {
            Error::Consistency(format!(
                "remapped span {start}..{end} for `{}` outside {} tokens of `{}`",
                edit.error_type,
                tokens.len(),
                entry.id
            ))
        };
        if start < 0 || end as usize > tokens.len() {
            return Err(out_of_bounds());
        }
        let (start, end) = (start as usize, end as usize);
        let span = if start < end {
            start..end
        } else if start < tokens.len() {
            start..start + 1
        } else if !tokens.is_empty() {
            tokens.len() - 1..tokens.len()
        } else {
            return Err(out_of_bounds());
        };
        for label in &mut labels[span] {
            *label = Label::Error(edit.error_type.clone());
        }
    }
    Ok(Some(AnnotatedSentence {
        id: entry.id.clone(),
        tokens,
        labels,
        verb_positions: None,
        construction: None,
        eval_mask: None,
    }))
}

/// Runs selective correction over a document, keeping sentences that retain
/// at least one target error.
pub fn process_entries(
    entries: &[M2Entry],
    target_types: &BTreeSet<String>,
) -> Result<Vec<AnnotatedSentence>> {
    let mut out = Vec::new();
    for entry in entries {
        if let Some(s) = selective_correct(entry, target_types)? {
            out.push(s);
        }
    }
    Ok(out)
}
