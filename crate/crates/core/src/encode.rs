//! Fixed-length token encoding with attention masks, and the on-disk
//! feature cache.
//!
//! Every record is exactly `budget` ids long: the backend's ids (special
//! tokens included) are truncated to the budget, keeping the head, then
//! right-padded with the backend's pad id.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::corpus::{Dataset, Sample};
use crate::emotion::Emotion;
use crate::error::{Error, Result};
use crate::textnorm::{normalize_text, CleanText};

pub const DEFAULT_SEQUENCE_BUDGET: usize = 128;

/// Tokenizer contract. Implementations add their own special tokens.
pub trait TokenizerBackend: Send + Sync {
    fn tokenize(&self, text: &str) -> Result<Vec<u32>>;
    fn pad_id(&self) -> u32;
    /// Stable identifier of the vocabulary and rules; stored in caches and
    /// checkpoints so mismatched artifacts are caught.
    fn fingerprint(&self) -> String;
}

/// Deterministic tokenizer: splits on whitespace and hashes each word into
/// a fixed-size id space with FNV-1a.
///
/// Ids 0..4 are reserved: pad, cls, sep, unused.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WordHashTokenizer {
    vocab_size: u32,
    special_tokens: bool,
}

impl WordHashTokenizer {
    pub const PAD: u32 = 0;
    pub const CLS: u32 = 1;
    pub const SEP: u32 = 2;
    const RESERVED: u32 = 4;
    pub const DEFAULT_VOCAB: u32 = 8192;

    pub fn new(vocab_size: u32, special_tokens: bool) -> Result<Self> {
        if vocab_size <= Self::RESERVED {
            return Err(Error::Config(format!(
                "word-hash vocabulary must exceed {} ids, got {vocab_size}",
                Self::RESERVED
            )));
        }
        Ok(WordHashTokenizer {
            vocab_size,
            special_tokens,
        })
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn word_id(&self, word: &str) -> u32 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in word.bytes() {
            hash ^= u64::from(byte);
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        Self::RESERVED + (hash % u64::from(self.vocab_size - Self::RESERVED)) as u32
    }
}

impl Default for WordHashTokenizer {
    fn default() -> Self {
        WordHashTokenizer {
            vocab_size: Self::DEFAULT_VOCAB,
            special_tokens: true,
        }
    }
}

impl TokenizerBackend for WordHashTokenizer {
    fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        let words = text.split_whitespace().map(|w| self.word_id(w));
        Ok(if self.special_tokens {
            std::iter::once(Self::CLS)
                .chain(words)
                .chain(std::iter::once(Self::SEP))
                .collect()
        } else {
            words.collect()
        })
    }

    fn pad_id(&self) -> u32 {
        Self::PAD
    }

    fn fingerprint(&self) -> String {
        format!(
            "wordhash-fnv1a:vocab={}:specials={}",
            self.vocab_size,
            u8::from(self.special_tokens)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureRecord {
    pub token_ids: Vec<u32>,
    /// 1 on real tokens, 0 on padding; always a run of 1s then 0s.
    pub attention_mask: Vec<u8>,
    pub label: Option<Emotion>,
}

impl FeatureRecord {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn real_tokens(&self) -> usize {
        self.attention_mask.iter().map(|&m| usize::from(m)).sum()
    }
}

fn check_budget(budget: usize) -> Result<()> {
    if budget < 2 {
        return Err(Error::Config(format!(
            "sequence budget must be at least 2, got {budget}"
        )));
    }
    if budget > u32::MAX as usize {
        return Err(Error::Config(format!("sequence budget {budget} is too large")));
    }
    Ok(())
}

pub fn encode_text(
    text: &CleanText,
    backend: &dyn TokenizerBackend,
    budget: usize,
) -> Result<FeatureRecord> {
    check_budget(budget)?;
    let pad = backend.pad_id();
    let mut ids = backend.tokenize(text.as_str())?;
    ids.truncate(budget);
    if ids.contains(&pad) {
        return Err(Error::Backend(format!(
            "tokenizer `{}` emitted its pad id {pad} inside the token sequence",
            backend.fingerprint()
        )));
    }
    let real = ids.len();
    ids.resize(budget, pad);
    let mut mask = vec![1u8; real];
    mask.resize(budget, 0);
    Ok(FeatureRecord {
        token_ids: ids,
        attention_mask: mask,
        label: None,
    })
}

/// Uniform-length records plus the metadata needed to reject mismatched
/// reuse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSet {
    budget: usize,
    fingerprint: String,
    records: Vec<FeatureRecord>,
}

impl FeatureSet {
    pub fn new(budget: usize, fingerprint: impl Into<String>, records: Vec<FeatureRecord>) -> Result<Self> {
        check_budget(budget)?;
        for (i, r) in records.iter().enumerate() {
            if r.token_ids.len() != budget || r.attention_mask.len() != budget {
                return Err(Error::Contract(format!(
                    "record {i} has length {}/{} but the budget is {budget}",
                    r.token_ids.len(),
                    r.attention_mask.len()
                )));
            }
            if !mask_is_prefix(&r.attention_mask) {
                return Err(Error::Contract(format!(
                    "record {i} attention mask is not a prefix of ones"
                )));
            }
        }
        Ok(FeatureSet {
            budget,
            fingerprint: fingerprint.into(),
            records,
        })
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn tokenizer_fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn records(&self) -> &[FeatureRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.records.iter().all(|r| r.label.is_some())
    }

    /// Content hash of the encoded cache bytes.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

fn mask_is_prefix(mask: &[u8]) -> bool {
    let real = mask.iter().take_while(|&&m| m == 1).count();
    mask[real..].iter().all(|&m| m == 0)
}

/// Encodes reduced (sample, label) pairs. Texts pass through
/// [`normalize_text`] again, which is a no-op on cleaned input.
pub fn encode_dataset(
    reduced: &[(Sample, Emotion)],
    backend: &dyn TokenizerBackend,
    budget: usize,
) -> Result<FeatureSet> {
    let records = reduced
        .iter()
        .map(|(sample, label)| {
            let mut rec = encode_text(&normalize_text(&sample.text), backend, budget)?;
            rec.label = Some(*label);
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureSet::new(budget, backend.fingerprint(), records)
}

/// Encodes every sample without labels (prediction input).
pub fn encode_unlabeled(
    dataset: &Dataset,
    backend: &dyn TokenizerBackend,
    budget: usize,
) -> Result<FeatureSet> {
    let records = dataset
        .samples()
        .iter()
        .map(|s| encode_text(&normalize_text(&s.text), backend, budget))
        .collect::<Result<Vec<_>>>()?;
    FeatureSet::new(budget, backend.fingerprint(), records)
}

// Cache layout, little-endian:
//   magic[8] | budget u32 | fp_len u32 | fingerprint | count u64
//   | ids u32[count*budget] | mask u8[count*budget] | labels u8[count]
//   | sha256[32] over everything before it
const CACHE_MAGIC: &[u8; 8] = b"EMOFEAT\x01";
const NO_LABEL: u8 = 0xFF;
const MAX_FINGERPRINT: usize = 4096;

impl FeatureSet {
    pub fn to_bytes(&self) -> Vec<u8> {
        let cells = self.records.len() * self.budget;
        let mut out = Vec::with_capacity(64 + self.fingerprint.len() + cells * 5 + self.records.len());
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&(self.budget as u32).to_le_bytes());
        out.extend_from_slice(&(self.fingerprint.len() as u32).to_le_bytes());
        out.extend_from_slice(self.fingerprint.as_bytes());
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for r in &self.records {
            for id in &r.token_ids {
                out.extend_from_slice(&id.to_le_bytes());
            }
        }
        for r in &self.records {
            out.extend_from_slice(&r.attention_mask);
        }
        out.extend(
            self.records
                .iter()
                .map(|r| r.label.map_or(NO_LABEL, |e| e.ordinal() as u8)),
        );
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != CACHE_MAGIC {
            return Err(Error::Decode("feature cache: bad magic".into()));
        }
        let budget = cur.u32()? as usize;
        let fp_len = cur.u32()? as usize;
        if fp_len > MAX_FINGERPRINT {
            return Err(Error::Decode(format!("feature cache: fingerprint length {fp_len} too large")));
        }
        let fingerprint = std::str::from_utf8(cur.take(fp_len)?)
            .map_err(|_| Error::Decode("feature cache: fingerprint is not UTF-8".into()))?
            .to_string();
        let count = usize::try_from(cur.u64()?)
            .map_err(|_| Error::Decode("feature cache: record count overflows".into()))?;

        let body = count
            .checked_mul(budget)
            .and_then(|cells| cells.checked_mul(5))
            .and_then(|n| n.checked_add(count))
            .and_then(|n| n.checked_add(32))
            .ok_or_else(|| Error::Decode("feature cache: size overflows".into()))?;
        if cur.remaining() != body {
            return Err(Error::Decode(format!(
                "feature cache: expected {body} body bytes for {count} records of length {budget}, found {}",
                cur.remaining()
            )));
        }
        let checked = bytes.len() - 32;
        if Sha256::digest(&bytes[..checked]).as_slice() != &bytes[checked..] {
            return Err(Error::Decode("feature cache: checksum mismatch".into()));
        }

        let cells = count * budget;
        let ids_raw = cur.take(cells * 4)?;
        let mask_raw = cur.take(cells)?;
        let labels_raw = cur.take(count)?;
        let mut records = Vec::with_capacity(count);
        for i in 0..count {
            let token_ids = ids_raw[i * budget * 4..(i + 1) * budget * 4]
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let attention_mask = mask_raw[i * budget..(i + 1) * budget].to_vec();
            if attention_mask.iter().any(|&m| m > 1) {
                return Err(Error::Decode(format!("feature cache: record {i} mask is not binary")));
            }
            let label = match labels_raw[i] {
                NO_LABEL => None,
                k => Some(Emotion::from_ordinal(usize::from(k)).ok_or_else(|| {
                    Error::Decode(format!("feature cache: record {i} label {k} out of range"))
                })?),
            };
            records.push(FeatureRecord {
                token_ids,
                attention_mask,
                label,
            });
        }
        FeatureSet::new(budget, fingerprint, records)
            .map_err(|e| Error::Decode(format!("feature cache: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::Decode(format!(
                "unexpected end of data: wanted {n} bytes at offset {}, {} left",
                self.pos,
                self.remaining()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut a = [0u8; 8];
        a.copy_from_slice(self.take(8)?);
        Ok(u64::from_le_bytes(a))
    }
}
