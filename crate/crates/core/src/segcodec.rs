//! Segmental codebook of unique binary posterior patterns and run-length
//! coding of pattern indices.
//!
//! Codebook file layout (little-endian):
//!
//! ```text
//! "PVSC"  u8 version  u8 scheme_id  u8 K  u32 size
//! size x ceil(K/8) bytes   pattern bits, little-endian byte order
//! u64 content hash        first 8 bytes of SHA-256 over everything above
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::neural::{Pattern, Scheme};

/// Longest run a single block can carry (2-bit field).
pub const MAX_RUN: u8 = 4;

const MAGIC: &[u8; 4] = b"PVSC";
const VERSION: u8 = 1;

/// Bits needed to address `size` entries (at least one).
pub fn index_bits_for_size(size: usize) -> u32 {
    if size <= 2 {
        1
    } else {
        usize::BITS - (size - 1).leading_zeros()
    }
}

pub(crate) fn content_hash(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

#[derive(Debug, Clone)]
pub struct SegmentalCodebook {
    scheme: Scheme,
    k: usize,
    patterns: Vec<Pattern>,
    lookup: HashMap<Pattern, u32>,
}

impl PartialEq for SegmentalCodebook {
    fn eq(&self, other: &Self) -> bool {
        self.scheme == other.scheme && self.k == other.k && self.patterns == other.patterns
    }
}

impl SegmentalCodebook {
    fn from_patterns(scheme: Scheme, k: usize, patterns: Vec<Pattern>) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(patterns.len());
        for (i, p) in patterns.iter().enumerate() {
            if lookup.insert(*p, i as u32).is_some() {
                return Err(Error::config("duplicate pattern in codebook"));
            }
        }
        Ok(Self {
            scheme,
            k,
            patterns,
            lookup,
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }

    pub fn pattern(&self, index: u32) -> Option<Pattern> {
        self.patterns.get(index as usize).copied()
    }

    pub fn index_bits(&self) -> u32 {
        index_bits_for_size(self.len())
    }

    fn body_bytes(&self) -> Vec<u8> {
        let width = self.k.div_ceil(8);
        let mut out = Vec::with_capacity(11 + width * self.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.scheme.id());
        out.push(self.k as u8);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for p in &self.patterns {
            out.extend_from_slice(&p.0.to_le_bytes()[..width]);
        }
        out
    }

    pub fn hash(&self) -> u64 {
        content_hash(&self.body_bytes())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.body_bytes();
        out.extend_from_slice(&self.hash().to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::config(format!("segmental codebook: {m}"));
        if bytes.len() < 19 || &bytes[..4] != MAGIC {
            return Err(bad("bad magic"));
        }
        if bytes[4] != VERSION {
            return Err(bad("unsupported version"));
        }
        let scheme = Scheme::from_id(bytes[5]).ok_or_else(|| bad("unknown scheme"))?;
        let k = bytes[6] as usize;
        if k == 0 || k > 32 {
            return Err(bad("class count out of range"));
        }
        let size = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
        let width = k.div_ceil(8);
        let body_len = size
            .checked_mul(width)
            .and_then(|n| n.checked_add(11))
            .ok_or_else(|| bad("size overflow"))?;
        if bytes.len() != body_len + 8 {
            return Err(bad("length does not match header"));
        }
        let stored = u64::from_le_bytes(bytes[body_len..].try_into().unwrap());
        if stored != content_hash(&bytes[..body_len]) {
            return Err(bad("content hash mismatch"));
        }
        let patterns = bytes[11..body_len]
            .chunks_exact(width)
            .map(|c| {
                let mut buf = [0u8; 4];
                buf[..width].copy_from_slice(c);
                Pattern(u32::from_le_bytes(buf))
            })
            .collect();
        Self::from_patterns(scheme, k, patterns)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|_| Error::config_path("cannot read segmental codebook", path))?;
        Self::from_bytes(&bytes)
    }
}

/// Unique patterns of the corpus in order of first occurrence.
pub fn build_codebook(frames: &[Pattern], scheme: Scheme, k: usize) -> Result<SegmentalCodebook> {
    if frames.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut seen = std::collections::HashSet::new();
    let patterns: Vec<Pattern> = frames.iter().copied().filter(|p| seen.insert(*p)).collect();
    SegmentalCodebook::from_patterns(scheme, k, patterns)
}

/// Exact index if present, else the lowest index at minimal Hamming distance.
pub fn lookup_or_nearest(pattern: Pattern, cb: &SegmentalCodebook) -> u32 {
    if let Some(&i) = cb.lookup.get(&pattern) {
        return i;
    }
    cb.patterns
        .iter()
        .enumerate()
        .min_by_key(|(i, p)| (p.hamming(pattern), *i))
        .map(|(i, _)| i as u32)
        .expect("codebook is never empty")
}

/// Codebook index plus how many consecutive frames it covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentalBlock {
    pub index: u32,
    /// 1..=4
    pub run_len: u8,
}

/// Maximal runs of equal indices, split into blocks of at most [`MAX_RUN`].
pub fn run_length_encode(indices: &[u32]) -> Vec<SegmentalBlock> {
    let mut blocks: Vec<SegmentalBlock> = Vec::new();
    for &index in indices {
        match blocks.last_mut() {
            Some(b) if b.index == index && b.run_len < MAX_RUN => b.run_len += 1,
            _ => blocks.push(SegmentalBlock { index, run_len: 1 }),
        }
    }
    blocks
}

pub fn run_length_decode(blocks: &[SegmentalBlock]) -> Vec<u32> {
    blocks
        .iter()
        .flat_map(|b| std::iter::repeat_n(b.index, b.run_len as usize))
        .collect()
}

pub fn encode_segmental(frames: &[Pattern], cb: &SegmentalCodebook) -> Vec<SegmentalBlock> {
    let indices: Vec<u32> = frames.iter().map(|&p| lookup_or_nearest(p, cb)).collect();
    run_length_encode(&indices)
}

pub fn decode_segmental(blocks: &[SegmentalBlock], cb: &SegmentalCodebook) -> Result<Vec<Pattern>> {
    let mut out = Vec::with_capacity(blocks.iter().map(|b| b.run_len as usize).sum());
    for b in blocks {
        let p = cb.pattern(b.index).ok_or_else(|| {
            Error::CorruptStream(format!("segmental index {} outside codebook of {}", b.index, cb.len()))
        })?;
        if b.run_len == 0 || b.run_len > MAX_RUN {
            return Err(Error::CorruptStream(format!("run length {} out of range", b.run_len)));
        }
        out.extend(std::iter::repeat_n(p, b.run_len as usize));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const A: Pattern = Pattern(0b001);
    const B: Pattern = Pattern(0b010);
    const C: Pattern = Pattern(0b100);

    fn cb(patterns: &[u32]) -> SegmentalCodebook {
        let frames: Vec<Pattern> = patterns.iter().map(|&p| Pattern(p)).collect();
        build_codebook(&frames, Scheme::Gp, 3).unwrap()
    }

    #[test]
    fn dedup_by_first_occurrence() {
        let book = build_codebook(&[A, A, B, A, C], Scheme::Gp, 3).unwrap();
        assert_eq!(book.patterns(), &[A, B, C]);
        assert_eq!(book.index_bits(), 2);
    }

    #[test]
    fn index_bits_for_reference_sizes() {
        assert_eq!(index_bits_for_size(11632), 14);
        assert_eq!(index_bits_for_size(700), 10);
        assert_eq!(index_bits_for_size(1), 1);
        assert_eq!(index_bits_for_size(2), 1);
        assert_eq!(index_bits_for_size(3), 2);
        assert_eq!(index_bits_for_size(1024), 10);
        assert_eq!(index_bits_for_size(1025), 11);
        assert_eq!(index_bits_for_size(4096), 12);
        assert_eq!(index_bits_for_size(16384), 14);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(matches!(build_codebook(&[], Scheme::Gp, 12), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn nearest_lookup() {
        let book = cb(&[0b000, 0b111]);
        assert_eq!(lookup_or_nearest(Pattern(0b111), &book), 1);
        assert_eq!(lookup_or_nearest(Pattern(0b001), &book), 0);
        let book = cb(&[0b100, 0b001]);
        assert_eq!(lookup_or_nearest(Pattern(0b000), &book), 0);
    }

    #[test]
    fn run_length_examples() {
        assert_eq!(
            run_length_encode(&[5, 5, 5, 2]),
            vec![
                SegmentalBlock { index: 5, run_len: 3 },
                SegmentalBlock { index: 2, run_len: 1 }
            ]
        );
        assert_eq!(
            run_length_encode(&[7; 6]),
            vec![
                SegmentalBlock { index: 7, run_len: 4 },
                SegmentalBlock { index: 7, run_len: 2 }
            ]
        );
        assert_eq!(run_length_encode(&[9]), vec![SegmentalBlock { index: 9, run_len: 1 }]);
        assert_eq!(
            run_length_decode(&[
                SegmentalBlock { index: 5, run_len: 3 },
                SegmentalBlock { index: 2, run_len: 1 }
            ]),
            vec![5, 5, 5, 2]
        );
    }

    #[test]
    fn decode_rejects_out_of_range_index() {
        let book = cb(&[1, 2, 4]);
        assert!(decode_segmental(&[], &book).unwrap().is_empty());
        let err = decode_segmental(&[SegmentalBlock { index: 3, run_len: 1 }], &book).unwrap_err();
        assert!(matches!(err, Error::CorruptStream(_)));
    }

    #[test]
    fn file_roundtrip_and_tamper_detection() {
        let book = build_codebook(&[Pattern(0xABC), Pattern(0x001), Pattern(0xFFF)], Scheme::Gp, 12).unwrap();
        let bytes = book.to_bytes();
        assert_eq!(bytes.len(), 11 + 3 * 2 + 8);
        assert_eq!(SegmentalCodebook::from_bytes(&bytes).unwrap(), book);
        let mut bad = bytes.clone();
        bad[12] ^= 1;
        assert!(SegmentalCodebook::from_bytes(&bad).is_err());
    }

    proptest! {
        #[test]
        fn index_roundtrip(indices in proptest::collection::vec(0u32..6, 0..300)) {
            let blocks = run_length_encode(&indices);
            prop_assert!(blocks.len() <= indices.len());
            prop_assert!(blocks.iter().all(|b| (1..=MAX_RUN).contains(&b.run_len)));
            prop_assert_eq!(run_length_decode(&blocks), indices);
        }

        #[test]
        fn in_codebook_patterns_roundtrip(raw in proptest::collection::vec(0u32..16, 1..200)) {
            let frames: Vec<Pattern> = raw.iter().map(|&p| Pattern(p)).collect();
            let book = build_codebook(&frames, Scheme::Gp, 4).unwrap();
            let blocks = encode_segmental(&frames, &book);
            prop_assert_eq!(decode_segmental(&blocks, &book).unwrap(), frames);
        }
    }
}
