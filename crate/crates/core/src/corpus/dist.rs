//! Per-token vocabulary distributions and the MDSD1 container.
//!
//! Layout (little-endian):
//!
//! ```text
//! "MDSD" | version u8 = 1 | mode u8 (0 dense, 1 sparse) | decode u8 | flags u8
//! vocab u32 | sentence count u64
//! per sentence:
//!   id_len u32 | id bytes (UTF-8) | L u32
//!   L rows, dense:  V x f32
//!           sparse: k u32 | k x u32 index | k x f32 prob | tail f32
//!   if flags & 1:   R u32 | R x u32 reference token id   (R = 0: none)
//! ```
//!
//! The two bytes after `mode` are reserved in the base layout. `decode`
//! records how the distributions were produced (0 unspecified, 1
//! free-running, 2 teacher-forced) and bit 0 of `flags` marks that each
//! sentence record carries reference token ids. Other flag bits must be 0.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use super::CorpusError;
use crate::digest::DigestWriter;

pub const MAGIC: &[u8; 4] = b"MDSD";
pub const VERSION: u8 = 1;
const FLAG_REFERENCES: u8 = 1;

/// Absolute tolerance on the total probability mass of one distribution.
pub const PROB_SUM_TOLERANCE: f64 = 1e-4;

/// Scalar types a distribution may be stored in. Files always hold `f32`;
/// `f64` is available for in-memory use.
pub trait Probability: Copy + Into<f64> + PartialOrd + fmt::Debug + Send + Sync {}

impl Probability for f32 {}
impl Probability for f64 {}

/// One decode step's distribution over the vocabulary.
///
/// Sparse rows list the top entries explicitly; the remaining `tail_mass`
/// is spread uniformly over the `V - k` unlisted entries by every consumer.
#[derive(Debug, Clone, PartialEq)]
pub enum TokenDistribution<P = f32> {
    Dense(Vec<P>),
    Sparse {
        indices: Vec<u32>,
        probs: Vec<P>,
        tail_mass: P,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DistributionViolation {
    NegativeProbability { index: usize },
    NonFinite { index: usize },
    DenseLength { len: usize, vocab: usize },
    SparseShape { indices: usize, probs: usize },
    TooManyEntries { k: usize, vocab: usize },
    IndexOutOfRange { index: u32, vocab: usize },
    IndicesNotIncreasing { position: usize },
    NegativeTail,
    SumOutOfTolerance { sum: f64 },
}

impl fmt::Display for DistributionViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NegativeProbability { index } => write!(f, "negative probability at entry {index}"),
            Self::NonFinite { index } => write!(f, "non-finite probability at entry {index}"),
            Self::DenseLength { len, vocab } => {
                write!(f, "dense row has {len} entries, vocabulary size is {vocab}")
            }
            Self::SparseShape { indices, probs } => {
                write!(f, "sparse row has {indices} indices but {probs} probabilities")
            }
            Self::TooManyEntries { k, vocab } => write!(f, "k = {k} exceeds vocabulary size {vocab}"),
            Self::IndexOutOfRange { index, vocab } => {
                write!(f, "index {index} out of range for vocabulary size {vocab}")
            }
            Self::IndicesNotIncreasing { position } => {
                write!(f, "sparse indices not strictly increasing at position {position}")
            }
            Self::NegativeTail => write!(f, "negative or non-finite tail mass"),
            Self::SumOutOfTolerance { sum } => {
                write!(f, "probabilities sum to {sum}, expected 1 +/- {PROB_SUM_TOLERANCE}")
            }
        }
    }
}

impl<P: Probability> TokenDistribution<P> {
    /// Number of explicitly stored entries.
    pub fn stored_len(&self) -> usize {
        match self {
            Self::Dense(p) => p.len(),
            Self::Sparse { probs, .. } => probs.len(),
        }
    }

    /// Total probability mass, accumulated in `f64`.
    pub fn mass(&self) -> f64 {
        match self {
            Self::Dense(p) => p.iter().map(|&x| x.into()).sum(),
            Self::Sparse {
                probs, tail_mass, ..
            } => probs.iter().map(|&x| x.into()).sum::<f64>() + (*tail_mass).into(),
        }
    }

    /// Check every structural and numeric invariant against vocabulary size `vocab`.
    pub fn check(&self, vocab: usize) -> Result<(), DistributionViolation> {
        let check_probs = |probs: &[P]| {
            for (i, &p) in probs.iter().enumerate() {
                let p: f64 = p.into();
                if !p.is_finite() {
                    return Err(DistributionViolation::NonFinite { index: i });
                }
                if p < 0.0 {
                    return Err(DistributionViolation::NegativeProbability { index: i });
                }
            }
            Ok(())
        };
        match self {
            Self::Dense(probs) => {
                if probs.len() != vocab {
                    return Err(DistributionViolation::DenseLength {
                        len: probs.len(),
                        vocab,
                    });
                }
                check_probs(probs)?;
            }
            Self::Sparse {
                indices,
                probs,
                tail_mass,
            } => {
                if indices.len() != probs.len() {
                    return Err(DistributionViolation::SparseShape {
                        indices: indices.len(),
                        probs: probs.len(),
                    });
                }
                if indices.len() > vocab {
                    return Err(DistributionViolation::TooManyEntries {
                        k: indices.len(),
                        vocab,
                    });
                }
                for (pos, &idx) in indices.iter().enumerate() {
                    if idx as usize >= vocab {
                        return Err(DistributionViolation::IndexOutOfRange { index: idx, vocab });
                    }
                    if pos > 0 && indices[pos - 1] >= idx {
                        return Err(DistributionViolation::IndicesNotIncreasing { position: pos });
                    }
                }
                check_probs(probs)?;
                let tail: f64 = (*tail_mass).into();
                if !(tail >= 0.0 && tail.is_finite()) {
                    return Err(DistributionViolation::NegativeTail);
                }
            }
        }
        let sum = self.mass();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(DistributionViolation::SumOutOfTolerance { sum });
        }
        Ok(())
    }

    /// Expand to a full-vocabulary `f64` vector using the uniform-tail rule.
    pub fn to_dense(&self, vocab: usize) -> Vec<f64> {
        match self {
            Self::Dense(p) => p.iter().map(|&x| x.into()).collect(),
            Self::Sparse {
                indices,
                probs,
                tail_mass,
            } => {
                let unlisted = vocab - indices.len();
                let share = if unlisted > 0 {
                    (*tail_mass).into() / unlisted as f64
                } else {
                    0.0
                };
                let mut out = vec![share; vocab];
                for (&i, &p) in indices.iter().zip(probs) {
                    out[i as usize] = p.into();
                }
                out
            }
        }
    }
}

/// All decode-step distributions of one machine-translated sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceDistributions<P = f32> {
    pub id: String,
    pub tokens: Vec<TokenDistribution<P>>,
    /// Vocabulary ids of the reference translation, needed for EL2N.
    pub reference_ids: Option<Vec<u32>>,
}

impl<P: Probability> SentenceDistributions<P> {
    pub fn new(id: impl Into<String>, tokens: Vec<TokenDistribution<P>>) -> Self {
        Self {
            id: id.into(),
            tokens,
            reference_ids: None,
        }
    }

    pub fn with_references(mut self, ids: Vec<u32>) -> Self {
        self.reference_ids = Some(ids);
        self
    }

    /// Token count `L`.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StorageMode {
    Dense,
    Sparse,
}

/// How the exporting model produced the distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    #[default]
    Unspecified,
    FreeRunning,
    TeacherForced,
}

impl DecodeMode {
    fn to_byte(self) -> u8 {
        match self {
            Self::Unspecified => 0,
            Self::FreeRunning => 1,
            Self::TeacherForced => 2,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Self::Unspecified),
            1 => Some(Self::FreeRunning),
            2 => Some(Self::TeacherForced),
            _ => None,
        }
    }
}

/// In-memory MDSD1 contents: every sentence's distributions, keyed by id.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionStore {
    vocab: u32,
    mode: StorageMode,
    decode: DecodeMode,
    sentences: Vec<SentenceDistributions<f32>>,
    index: HashMap<String, usize>,
}

impl DistributionStore {
    pub fn new(vocab: u32, mode: StorageMode) -> Self {
        Self {
            vocab,
            mode,
            decode: DecodeMode::Unspecified,
            sentences: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn with_decode_mode(mut self, decode: DecodeMode) -> Self {
        self.decode = decode;
        self
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab as usize
    }

    pub fn mode(&self) -> StorageMode {
        self.mode
    }

    pub fn decode_mode(&self) -> DecodeMode {
        self.decode
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&SentenceDistributions<f32>> {
        self.index.get(id).map(|&i| &self.sentences[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &SentenceDistributions<f32>> {
        self.sentences.iter()
    }

    /// True when any sentence carries reference token ids.
    pub fn has_references(&self) -> bool {
        self.sentences.iter().any(|s| s.reference_ids.is_some())
    }

    /// Append a sentence after checking every store invariant.
    pub fn push(&mut self, sentence: SentenceDistributions<f32>) -> Result<(), CorpusError> {
        let vocab = self.vocab as usize;
        if sentence.id.is_empty() {
            return Err(CorpusError::EmptyId { line: None });
        }
        if self.index.contains_key(&sentence.id) {
            return Err(CorpusError::DuplicateId(sentence.id));
        }
        if sentence.tokens.is_empty() {
            return Err(CorpusError::EmptySentence(sentence.id));
        }
        for (t, dist) in sentence.tokens.iter().enumerate() {
            let mode_ok = matches!(
                (self.mode, dist),
                (StorageMode::Dense, TokenDistribution::Dense(_))
                    | (StorageMode::Sparse, TokenDistribution::Sparse { .. })
            );
            if !mode_ok {
                return Err(CorpusError::ModeMismatch {
                    id: sentence.id.clone(),
                    token: t,
                });
            }
            dist.check(vocab).map_err(|violation| CorpusError::InvalidDistribution {
                id: sentence.id.clone(),
                token: t,
                violation,
            })?;
        }
        if let Some(refs) = &sentence.reference_ids {
            if let Some(&bad) = refs.iter().find(|&&r| r as usize >= vocab) {
                return Err(CorpusError::ReferenceOutOfRange {
                    id: sentence.id.clone(),
                    token_id: bad,
                    vocab,
                });
            }
        }
        self.index.insert(sentence.id.clone(), self.sentences.len());
        self.sentences.push(sentence);
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        let flags = if self.has_references() { FLAG_REFERENCES } else { 0 };
        let mode = match self.mode {
            StorageMode::Dense => 0u8,
            StorageMode::Sparse => 1u8,
        };
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION, mode, self.decode.to_byte(), flags])?;
        w.write_all(&self.vocab.to_le_bytes())?;
        w.write_all(&(self.sentences.len() as u64).to_le_bytes())?;
        for s in &self.sentences {
            w.write_all(&(s.id.len() as u32).to_le_bytes())?;
            w.write_all(s.id.as_bytes())?;
            w.write_all(&(s.tokens.len() as u32).to_le_bytes())?;
            for dist in &s.tokens {
                match dist {
                    TokenDistribution::Dense(p) => {
                        for x in p {
                            w.write_all(&x.to_le_bytes())?;
                        }
                    }
                    TokenDistribution::Sparse {
                        indices,
                        probs,
                        tail_mass,
                    } => {
                        w.write_all(&(indices.len() as u32).to_le_bytes())?;
                        for i in indices {
                            w.write_all(&i.to_le_bytes())?;
                        }
                        for p in probs {
                            w.write_all(&p.to_le_bytes())?;
                        }
                        w.write_all(&tail_mass.to_le_bytes())?;
                    }
                }
            }
            if flags & FLAG_REFERENCES != 0 {
                let refs = s.reference_ids.as_deref().unwrap_or(&[]);
                w.write_all(&(refs.len() as u32).to_le_bytes())?;
                for r in refs {
                    w.write_all(&r.to_le_bytes())?;
                }
            }
        }
        w.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// SHA-256 of the canonical MDSD1 encoding.
    pub fn digest(&self) -> String {
        let mut w = DigestWriter::new();
        self.write_to(&mut w).expect("hashing cannot fail");
        w.finish_hex()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| CorpusError::io(path, e))?;
        self.write_to(io::BufWriter::new(file))
            .map_err(|e| CorpusError::io(path, e))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CorpusError> {
        let mut r = ByteReader::new(bytes, "MDSD1");
        if r.take(4)? != MAGIC {
            return Err(CorpusError::BadMagic { expected: "MDSD" });
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(CorpusError::UnsupportedVersion {
                format: "MDSD",
                version,
            });
        }
        let mode = match r.u8()? {
            0 => StorageMode::Dense,
            1 => StorageMode::Sparse,
            other => return Err(CorpusError::header(format!("unknown storage mode {other}"))),
        };
        let decode_byte = r.u8()?;
        let decode = DecodeMode::from_byte(decode_byte)
            .ok_or_else(|| CorpusError::header(format!("unknown decode mode {decode_byte}")))?;
        let flags = r.u8()?;
        if flags & !FLAG_REFERENCES != 0 {
            return Err(CorpusError::header(format!("unknown flag bits {flags:#04x}")));
        }
        let vocab = r.u32()?;
        let count = r.u64()?;
        let mut store = DistributionStore::new(vocab, mode).with_decode_mode(decode);
        let v = vocab as usize;
        for _ in 0..count {
            let id = r.string()?;
            let len = r.u32()? as usize;
            let mut tokens = Vec::with_capacity(len.min(1 << 16));
            for _ in 0..len {
                let dist = match mode {
                    StorageMode::Dense => TokenDistribution::Dense(r.f32s(v)?),
                    StorageMode::Sparse => {
                        let k = r.u32()? as usize;
                        let indices = r.u32s(k)?;
                        let probs = r.f32s(k)?;
                        let tail_mass = r.f32()?;
                        TokenDistribution::Sparse {
                            indices,
                            probs,
                            tail_mass,
                        }
                    }
                };
                tokens.push(dist);
            }
            let mut sentence = SentenceDistributions::new(id, tokens);
            if flags & FLAG_REFERENCES != 0 {
                let n = r.u32()? as usize;
                let refs = r.u32s(n)?;
                if n > 0 {
                    sentence.reference_ids = Some(refs);
                }
            }
            store.push(sentence)?;
        }
        if !r.is_at_end() {
            return Err(CorpusError::TrailingBytes { format: "MDSD1" });
        }
        Ok(store)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| CorpusError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Bounds-checked little-endian cursor over a byte buffer.
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
    format: &'static str,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8], format: &'static str) -> Self {
        Self {
            buf,
            pos: 0,
            format,
        }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], CorpusError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.buf.len())
            .ok_or(CorpusError::Truncated {
                format: self.format,
                offset: self.pos,
            })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, CorpusError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32, CorpusError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, CorpusError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32, CorpusError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64, CorpusError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn u32s(&mut self, n: usize) -> Result<Vec<u32>, CorpusError> {
        let bytes = self.take(n.checked_mul(4).ok_or(CorpusError::Truncated {
            format: self.format,
            offset: self.pos,
        })?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub(crate) fn f32s(&mut self, n: usize) -> Result<Vec<f32>, CorpusError> {
        let bytes = self.take(n.checked_mul(4).ok_or(CorpusError::Truncated {
            format: self.format,
            offset: self.pos,
        })?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub(crate) fn string(&mut self) -> Result<String, CorpusError> {
        let len = self.u32()? as usize;
        let offset = self.pos;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| CorpusError::InvalidUtf8 {
            format: self.format,
            offset,
        })
    }

    pub(crate) fn is_at_end(&self) -> bool {
        self.pos == self.buf.len()
    }
}
