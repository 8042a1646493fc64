//! Binary store of per-layer subword vectors.
//!
//! Layout (little-endian):
//!
//! ```text
//! "GEDE" | version u32 = 1 | flags u32 (bit 0: layer 0 stored) | L u16 | d u16
//! | sentence_count u64 | model_name (u16 len + UTF-8)
//! | index: per sentence { id (u16 len + UTF-8), W u16, S u16, alignment S x i16, payload_offset u64 }
//! | payload: per sentence, layers ascending, subwords ascending, d x f32
//! ```
//!
//! `alignment[j]` is the word index of subword `j`, or -1 for special
//! tokens. `payload_offset` is an absolute file offset. Layer 1 is the
//! output of the first transformer block; layer 0 (the embedding output) is
//! present only when flag bit 0 is set.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use memmap2::Mmap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::sentence::AnnotatedSentence;

pub const MAGIC: &[u8; 4] = b"GEDE";
pub const VERSION: u32 = 1;
const FLAG_EMBEDDING_LAYER: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreHeader {
    pub model_name: String,
    /// Hidden layers, excluding the embedding layer.
    pub num_layers: u16,
    pub hidden_dim: u16,
    pub includes_embedding_layer: bool,
}

impl StoreHeader {
    /// Number of layer blocks in each sentence payload.
    pub fn stored_layers(&self) -> usize {
        self.num_layers as usize + usize::from(self.includes_embedding_layer)
    }

    pub fn min_layer(&self) -> u16 {
        if self.includes_embedding_layer {
            0
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceEntry {
    pub id: String,
    pub word_count: u16,
    pub alignment: Vec<i16>,
    pub payload_offset: u64,
}

impl SentenceEntry {
    pub fn subword_count(&self) -> usize {
        self.alignment.len()
    }

    /// Position of the last subword aligned to each word.
    pub fn last_subwords(&self) -> Vec<usize> {
        let mut last = vec![0usize; self.word_count as usize];
        for (j, &w) in self.alignment.iter().enumerate() {
            if w >= 0 {
                last[w as usize] = j;
            }
        }
        last
    }
}

enum Bytes {
    Owned(Vec<u8>),
    Mapped(Mmap),
}

impl std::ops::Deref for Bytes {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        match self {
            Bytes::Owned(v) => v,
            Bytes::Mapped(m) => m,
        }
    }
}

/// Read-only embedding store. Vectors are decoded on access.
pub struct EmbeddingStore {
    header: StoreHeader,
    entries: Vec<SentenceEntry>,
    by_id: HashMap<String, usize>,
    bytes: Bytes,
}

impl std::fmt::Debug for EmbeddingStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EmbeddingStore")
            .field("header", &self.header)
            .field("sentences", &self.entries.len())
            .finish()
    }
}

/// Word vectors of one sentence at one layer, `W` rows of `d` values.
#[derive(Debug, Clone, PartialEq)]
pub struct WordMatrix {
    pub sentence_id: String,
    pub layer: u16,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl WordMatrix {
    pub fn rows(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Integrity {
                offset: self.pos as u64,
                message: format!("truncated while reading {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let start = self.pos;
        let len = self.u16(what)? as usize;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Integrity {
            offset: start as u64,
            message: format!("{what} is not valid UTF-8"),
        })
    }
}

impl EmbeddingStore {
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        Self::parse(Bytes::Owned(bytes))
    }

    fn parse(bytes: Bytes) -> Result<Self> {
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing GEDE magic bytes".into()));
        }
        cur.pos = 4;
        let version = cur.u32("version")?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let flags = cur.u32("flags")?;
        let num_layers = cur.u16("layer count")?;
        let hidden_dim = cur.u16("hidden size")?;
        let count = cur.u64("sentence count")?;
        let model_name = cur.string("model name")?;
        let header = StoreHeader {
            model_name,
            num_layers,
            hidden_dim,
            includes_embedding_layer: flags & FLAG_EMBEDDING_LAYER != 0,
        };
        let block = (header.stored_layers() * hidden_dim as usize * 4) as u64;

        let mut entries = Vec::new();
        let mut by_id = HashMap::new();
        for _ in 0..count {
            let entry_start = cur.pos as u64;
            let id = cur.string("sentence id")?;
            let word_count = cur.u16("word count")?;
            let subwords = cur.u16("subword count")? as usize;
            let raw = cur.take(subwords * 2, "alignment")?;
            let alignment: Vec<i16> = raw
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]))
                .collect();
            let payload_offset = cur.u64("payload offset")?;
            let bad = |message: String| Error::Integrity {
                offset: entry_start,
                message: format!("sentence `{id}`: {message}"),
            };
            let mut covered = vec![false; word_count as usize];
            for &a in &alignment {
                if a < -1 || i32::from(a) >= i32::from(word_count) {
                    return Err(bad(format!("alignment value {a} outside -1..{word_count}")));
                }
                if a >= 0 {
                    covered[a as usize] = true;
                }
            }
            if let Some(w) = covered.iter().position(|c| !c) {
                return Err(bad(format!("word {w} has no aligned subword")));
            }
            let end = payload_offset.saturating_add(block * subwords as u64);
            if end > bytes.len() as u64 {
                return Err(Error::Integrity {
                    offset: bytes.len() as u64,
                    message: format!(
                        "payload of `{id}` needs bytes {payload_offset}..{end} (L={}, d={hidden_dim}, S={subwords})",
                        header.stored_layers()
                    ),
                });
            }
            if by_id.insert(id.clone(), entries.len()).is_some() {
                return Err(bad("duplicate sentence id".into()));
            }
            entries.push(SentenceEntry {
                id,
                word_count,
                alignment,
                payload_offset,
            });
        }
        Ok(EmbeddingStore {
            header,
            entries,
            by_id,
            bytes,
        })
    }

    pub fn header(&self) -> &StoreHeader {
        &self.header
    }

    pub fn model_name(&self) -> &str {
        &self.header.model_name
    }

    pub fn num_layers(&self) -> u16 {
        self.header.num_layers
    }

    pub fn hidden_dim(&self) -> usize {
        self.header.hidden_dim as usize
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[SentenceEntry] {
        &self.entries
    }

    pub fn entry(&self, sentence_id: &str) -> Result<&SentenceEntry> {
        self.by_id
            .get(sentence_id)
            .map(|&i| &self.entries[i])
            .ok_or_else(|| Error::UnknownSentence(sentence_id.to_string()))
    }

    pub fn contains(&self, sentence_id: &str) -> bool {
        self.by_id.contains_key(sentence_id)
    }

    fn check_layer(&self, layer: u16) -> Result<usize> {
        let (min, max) = (self.header.min_layer(), self.header.num_layers);
        if layer < min || layer > max {
            return Err(Error::LayerOutOfRange { layer, min, max });
        }
        Ok((layer - min) as usize)
    }

    /// Vector of subword `j` at `layer`.
    pub fn subword_vector(&self, entry: &SentenceEntry, layer: u16, j: usize) -> Result<Vec<f32>> {
        let block = self.check_layer(layer)?;
        let d = self.hidden_dim();
        let s = entry.subword_count();
        let start = entry.payload_offset as usize + ((block * s + j) * d) * 4;
        Ok(self.bytes[start..start + d * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    /// Word vectors from the last subword of each word.
    pub fn word_vectors(&self, sentence_id: &str, layer: u16) -> Result<WordMatrix> {
        let entry = self.entry(sentence_id)?;
        self.check_layer(layer)?;
        let mut data = Vec::with_capacity(entry.word_count as usize * self.hidden_dim());
        for j in entry.last_subwords() {
            data.extend(self.subword_vector(entry, layer, j)?);
        }
        Ok(WordMatrix {
            sentence_id: sentence_id.to_string(),
            layer,
            dim: self.hidden_dim(),
            data,
        })
    }

    /// Canonical serialisation: index followed by payloads in index order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut builder = StoreBuilder::new(self.header.clone());
        for e in &self.entries {
            let len = self.header.stored_layers() * e.subword_count() * self.hidden_dim() * 4;
            let start = e.payload_offset as usize;
            builder.push_raw(e.id.clone(), e.word_count, e.alignment.clone(), self.bytes[start..start + len].to_vec());
        }
        builder.encode()
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

pub fn read_store(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    if len == 0 {
        return Err(Error::Format(format!("{} is empty", path.display())));
    }
    // SAFETY: the store is treated as immutable once written; concurrent
    // modification of the file is outside the supported usage.
    let map = unsafe { Mmap::map(&file) }.map_err(|e| Error::io(path, e))?;
    EmbeddingStore::parse(Bytes::Mapped(map))
}

/// Assembles a store in memory.
pub struct StoreBuilder {
    header: StoreHeader,
    sentences: Vec<(String, u16, Vec<i16>, Vec<u8>)>,
}

impl StoreBuilder {
    pub fn new(header: StoreHeader) -> Self {
        StoreBuilder {
            header,
            sentences: Vec::new(),
        }
    }

    /// `vectors` holds `stored_layers × S × d` values, layers ascending.
    pub fn push(&mut self, id: impl Into<String>, word_count: u16, alignment: Vec<i16>, vectors: &[f32]) -> Result<()> {
        let expected = self.header.stored_layers() * alignment.len() * self.header.hidden_dim as usize;
        if vectors.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: vectors.len(),
            });
        }
        let raw = vectors.iter().flat_map(|v| v.to_le_bytes()).collect();
        self.push_raw(id.into(), word_count, alignment, raw);
        Ok(())
    }

    fn push_raw(&mut self, id: String, word_count: u16, alignment: Vec<i16>, raw: Vec<u8>) {
        self.sentences.push((id, word_count, alignment, raw));
    }

    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let flags = if self.header.includes_embedding_layer {
            FLAG_EMBEDDING_LAYER
        } else {
            0
        };
        out.extend_from_slice(&flags.to_le_bytes());
        out.extend_from_slice(&self.header.num_layers.to_le_bytes());
        out.extend_from_slice(&self.header.hidden_dim.to_le_bytes());
        out.extend_from_slice(&(self.sentences.len() as u64).to_le_bytes());
        put_str(&mut out, &self.header.model_name);

        let index_len: usize = self
            .sentences
            .iter()
            .map(|(id, _, al, _)| 2 + id.len() + 2 + 2 + al.len() * 2 + 8)
            .sum();
        let mut offset = (out.len() + index_len) as u64;
        for (id, w, al, raw) in &self.sentences {
            put_str(&mut out, id);
            out.extend_from_slice(&w.to_le_bytes());
            out.extend_from_slice(&(al.len() as u16).to_le_bytes());
            for a in al {
                out.extend_from_slice(&a.to_le_bytes());
            }
            out.extend_from_slice(&offset.to_le_bytes());
            offset += raw.len() as u64;
        }
        for (_, _, _, raw) in &self.sentences {
            out.extend_from_slice(raw);
        }
        out
    }

    pub fn finish(self) -> Result<EmbeddingStore> {
        EmbeddingStore::from_bytes(self.encode())
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Signal {
    /// Error tokens centred at `+margin·e₁`, others at `-margin·e₁`, plus
    /// Gaussian noise.
    LinearSeparable { margin: f64 },
    /// Standard normal vectors independent of the labels.
    Random,
}

/// Builds a store with one subword per word whose vectors follow `signal`,
/// identical at every layer.
pub fn synthesize_store(
    sentences: &[AnnotatedSentence],
    dim: u16,
    num_layers: u16,
    signal: Signal,
    noise_sigma: f64,
    seed: u64,
) -> Result<EmbeddingStore> {
    if dim < 2 {
        return Err(Error::InvalidInput("synthetic stores need d >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = dim as usize;
    let mut builder = StoreBuilder::new(StoreHeader {
        model_name: "synthetic".into(),
        num_layers,
        hidden_dim: dim,
        includes_embedding_layer: false,
    });
    for s in sentences {
        let w = s.tokens.len();
        let mut layer = Vec::with_capacity(w * d);
        for label in &s.labels {
            for k in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                let v = match signal {
                    Signal::LinearSeparable { margin } => {
                        let centre = match (k, label.is_error()) {
                            (0, true) => margin,
                            (0, false) => -margin,
                            _ => 0.0,
                        };
                        centre + noise_sigma * z
                    }
                    Signal::Random => z,
                };
                layer.push(v as f32);
            }
        }
        let vectors: Vec<f32> = (0..num_layers).flat_map(|_| layer.iter().copied()).collect();
        let alignment = (0..w as i16).collect();
        builder.push(s.id.clone(), w as u16, alignment, &vectors)?;
    }
    builder.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sentence::Label;

    fn header(layers: u16, dim: u16) -> StoreHeader {
        StoreHeader {
            model_name: "test".into(),
            num_layers: layers,
            hidden_dim: dim,
            includes_embedding_layer: false,
        }
    }

    /// Value encodes (layer, subword, component) so lookups are checkable.
    fn tagged(layers: usize, subwords: usize, dim: usize) -> Vec<f32> {
        let mut v = Vec::new();
        for l in 0..layers {
            for j in 0..subwords {
                for k in 0..dim {
                    v.push((100 * (l + 1) + 10 * j + k) as f32);
                }
            }
        }
        v
    }

    #[test]
    fn last_subword_rows() {
        let mut b = StoreBuilder::new(header(2, 2));
        b.push("s", 2, vec![-1, 0, 0, 1, -1], &tagged(2, 5, 2)).unwrap();
        let store = b.finish().unwrap();
        let m = store.word_vectors("s", 2).unwrap();
        assert_eq!(m.rows(), 2);
        assert_eq!(m.row(0), &[220.0, 221.0]);
        assert_eq!(m.row(1), &[230.0, 231.0]);
        let m1 = store.word_vectors("s", 1).unwrap();
        assert_eq!(m1.row(0), &[120.0, 121.0]);
    }

    #[test]
    fn split_word_uses_final_piece() {
        let mut b = StoreBuilder::new(header(1, 1));
        // word 2 split over subwords 4 and 5
        b.push("s", 3, vec![-1, 0, 1, 1, 2, 2, -1], &tagged(1, 7, 1)).unwrap();
        let m = b.finish().unwrap().word_vectors("s", 1).unwrap();
        assert_eq!(m.data, vec![110.0, 130.0, 150.0]);
    }

    #[test]
    fn lookup_errors() {
        let mut b = StoreBuilder::new(header(12, 2));
        b.push("s", 1, vec![0], &tagged(12, 1, 2)).unwrap();
        let store = b.finish().unwrap();
        assert!(matches!(store.word_vectors("nope", 1), Err(Error::UnknownSentence(_))));
        assert!(matches!(store.word_vectors("s", 0), Err(Error::LayerOutOfRange { .. })));
        assert!(matches!(store.word_vectors("s", 13), Err(Error::LayerOutOfRange { .. })));
        assert!(store.word_vectors("s", 12).is_ok());
    }

    #[test]
    fn embedding_layer_flag_shifts_blocks() {
        let mut h = header(2, 1);
        h.includes_embedding_layer = true;
        let mut b = StoreBuilder::new(h);
        b.push("s", 1, vec![0], &tagged(3, 1, 1)).unwrap();
        let store = b.finish().unwrap();
        assert_eq!(store.word_vectors("s", 0).unwrap().data, vec![100.0]);
        assert_eq!(store.word_vectors("s", 2).unwrap().data, vec![300.0]);
    }

    #[test]
    fn builder_rejects_wrong_payload_size() {
        let mut b = StoreBuilder::new(header(2, 4));
        assert!(b.push("s", 1, vec![0], &[0.0; 7]).is_err());
    }

    #[test]
    fn empty_store_is_valid() {
        let store = StoreBuilder::new(header(12, 768)).finish().unwrap();
        assert!(store.is_empty());
        let again = EmbeddingStore::from_bytes(store.to_bytes()).unwrap();
        assert_eq!(again.num_layers(), 12);
    }

    #[test]
    fn bad_magic_and_version() {
        assert!(matches!(EmbeddingStore::from_bytes(b"NOPE".to_vec()), Err(Error::Format(_))));
        let mut bytes = StoreBuilder::new(header(1, 1)).finish().unwrap().to_bytes();
        bytes[4] = 2;
        assert!(matches!(EmbeddingStore::from_bytes(bytes), Err(Error::Format(_))));
    }

    #[test]
    fn invalid_alignment_rejected() {
        for alignment in [vec![0, 2], vec![0, 0], vec![-2, 0, 1]] {
            let mut b = StoreBuilder::new(header(1, 1));
            let s = alignment.len();
            b.push("s", 2, alignment, &vec![0.0; s]).unwrap();
            assert!(matches!(b.finish(), Err(Error::Integrity { .. })));
        }
    }

    #[test]
    fn synthetic_separable_store() {
        let mut s = AnnotatedSentence::grammatical("a", vec!["x".into(), "y".into(), "z".into()]);
        s.labels[1] = Label::sva();
        let store = synthesize_store(&[s], 4, 3, Signal::LinearSeparable { margin: 1.0 }, 0.0, 1).unwrap();
        for layer in 1..=3 {
            let m = store.word_vectors("a", layer).unwrap();
            assert_eq!(m.row(0), &[-1.0, 0.0, 0.0, 0.0]);
            assert_eq!(m.row(1), &[1.0, 0.0, 0.0, 0.0]);
        }
        assert!(synthesize_store(&[], 1, 1, Signal::Random, 0.0, 0).is_err());
    }
}
