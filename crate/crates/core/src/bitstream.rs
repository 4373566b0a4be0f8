//! The `.pvc` container and bit-rate accounting.
//!
//! ```text
//! offset size  field
//!  0     4     magic "PVC1"
//!  4     1     version (1)
//!  5     1     scheme id (0 GP, 1 SPE, 2 eSPE)
//!  6     1     frame shift in ms
//!  7     1     index_bits
//!  8     8     segmental codebook hash      (LE)
//! 16     8     prosodic codebook hash       (LE)
//! 24     4     frame count                  (LE)
//! 28     4     syllable count               (LE)
//! 32     4     segmental section length L1  (LE, bytes)
//! 36     L1    blocks: index (index_bits) | run_len-1 (2), MSB first, zero padded
//! 36+L1  4     prosodic section length L2   (LE, bytes)
//! 40+L1  L2    syllables: mean (3) | slope (3) | dur_steps-1 (4), MSB first, zero padded
//! 40+L1+L2 4   CRC-32 (IEEE) of all preceding bytes (LE)
//! ```

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prosody::SyllableCode;
use crate::segcodec::SegmentalBlock;

pub const MAGIC: &[u8; 4] = b"PVC1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 32;
/// Trailing checksum bytes.
pub const CRC_LEN: usize = 4;
pub const RUN_BITS: u32 = 2;
pub const MEAN_BITS: u32 = 3;
pub const SLOPE_BITS: u32 = 3;
pub const DURATION_BITS: u32 = 4;
pub const SYLLABLE_BITS: u32 = MEAN_BITS + SLOPE_BITS + DURATION_BITS;

#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bit_len: usize,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn write(&mut self, value: u32, width: u32) {
        for i in (0..width).rev() {
            if self.bit_len.is_multiple_of(8) {
                self.bytes.push(0);
            }
            if (value >> i) & 1 == 1 {
                let last = self.bytes.len() - 1;
                self.bytes[last] |= 0x80 >> (self.bit_len % 8);
            }
            self.bit_len += 1;
        }
    }

    pub fn bit_len(&self) -> usize {
        self.bit_len
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() * 8 - self.pos
    }

    pub fn read(&mut self, width: u32) -> Option<u32> {
        if (width as usize) > self.remaining() {
            return None;
        }
        let mut v = 0u32;
        for _ in 0..width {
            let bit = (self.bytes[self.pos / 8] >> (7 - self.pos % 8)) & 1;
            v = (v << 1) | u32::from(bit);
            self.pos += 1;
        }
        Some(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamHeader {
    pub scheme_id: u8,
    pub frame_shift_ms: u8,
    pub index_bits: u8,
    pub segmental_hash: u64,
    pub prosodic_hash: u64,
    pub frame_count: u32,
    pub syllable_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BitstreamContainer {
    pub header: StreamHeader,
    pub blocks: Vec<SegmentalBlock>,
    pub codes: Vec<SyllableCode>,
}

impl BitstreamContainer {
    /// Builds a container whose counts are derived from the streams.
    pub fn new(
        scheme_id: u8,
        frame_shift_ms: u8,
        index_bits: u8,
        hashes: (u64, u64),
        blocks: Vec<SegmentalBlock>,
        codes: Vec<SyllableCode>,
    ) -> Self {
        let frame_count = blocks.iter().map(|b| b.run_len as u32).sum();
        Self {
            header: StreamHeader {
                scheme_id,
                frame_shift_ms,
                index_bits,
                segmental_hash: hashes.0,
                prosodic_hash: hashes.1,
                frame_count,
                syllable_count: codes.len() as u32,
            },
            blocks,
            codes,
        }
    }

    /// Fails with `CodebookMismatch` unless the stream was produced with
    /// codebooks of these hashes.
    pub fn check_codebooks(&self, segmental_hash: u64, prosodic_hash: u64) -> Result<()> {
        if self.header.segmental_hash != segmental_hash {
            return Err(Error::CodebookMismatch {
                expected: self.header.segmental_hash,
                actual: segmental_hash,
            });
        }
        if self.header.prosodic_hash != prosodic_hash {
            return Err(Error::CodebookMismatch {
                expected: self.header.prosodic_hash,
                actual: prosodic_hash,
            });
        }
        Ok(())
    }
}

fn overflow(what: &str, value: u64, bits: u32) -> Error {
    Error::EncodeOverflow(format!("{what} {value} does not fit in {bits} bits"))
}

pub fn pack(c: &BitstreamContainer) -> Result<Vec<u8>> {
    let h = &c.header;
    let index_bits = u32::from(h.index_bits);
    if index_bits == 0 || index_bits > 30 {
        return Err(overflow("index width", index_bits as u64, 30));
    }
    let frames: u64 = c.blocks.iter().map(|b| b.run_len as u64).sum();
    if frames != h.frame_count as u64 || c.codes.len() as u64 != h.syllable_count as u64 {
        return Err(Error::EncodeOverflow("declared counts do not match the streams".into()));
    }

    let mut seg = BitWriter::new();
    for b in &c.blocks {
        if b.index >> index_bits != 0 {
            return Err(overflow("segmental index", b.index as u64, index_bits));
        }
        if !(1..=4).contains(&b.run_len) {
            return Err(overflow("run length", b.run_len as u64, RUN_BITS));
        }
        seg.write(b.index, index_bits);
        seg.write(u32::from(b.run_len - 1), RUN_BITS);
    }
    let mut pro = BitWriter::new();
    for s in &c.codes {
        if s.mean_idx > 7 || s.slope_idx > 7 {
            return Err(overflow(
                "prosodic index",
                s.mean_idx.max(s.slope_idx) as u64,
                MEAN_BITS,
            ));
        }
        if !(1..=16).contains(&s.dur_steps) {
            return Err(overflow("syllable duration", s.dur_steps as u64, DURATION_BITS));
        }
        pro.write(u32::from(s.mean_idx), MEAN_BITS);
        pro.write(u32::from(s.slope_idx), SLOPE_BITS);
        pro.write(u32::from(s.dur_steps - 1), DURATION_BITS);
    }
    let (seg, pro) = (seg.into_bytes(), pro.into_bytes());

    let mut out = Vec::with_capacity(HEADER_LEN + 8 + seg.len() + pro.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[VERSION, h.scheme_id, h.frame_shift_ms, h.index_bits]);
    out.extend_from_slice(&h.segmental_hash.to_le_bytes());
    out.extend_from_slice(&h.prosodic_hash.to_le_bytes());
    out.extend_from_slice(&h.frame_count.to_le_bytes());
    out.extend_from_slice(&h.syllable_count.to_le_bytes());
    out.extend_from_slice(&(seg.len() as u32).to_le_bytes());
    out.extend_from_slice(&seg);
    out.extend_from_slice(&(pro.len() as u32).to_le_bytes());
    out.extend_from_slice(&pro);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptStream(msg.into())
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(corrupt(format!("truncated {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Remaining bits must be the zero padding of the final byte.
fn check_padding(r: &mut BitReader, section: &str) -> Result<()> {
    let rest = r.remaining();
    if rest >= 8 || r.read(rest as u32) != Some(0) {
        return Err(corrupt(format!("{section} section has trailing data")));
    }
    Ok(())
}

pub fn unpack(bytes: &[u8]) -> Result<BitstreamContainer> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::NotABitstream);
    }
    if bytes.len() < HEADER_LEN + CRC_LEN {
        return Err(corrupt("truncated header"));
    }
    let (bytes, crc) = bytes.split_at(bytes.len() - CRC_LEN);
    if crc32fast::hash(bytes).to_le_bytes() != crc {
        return Err(corrupt("checksum mismatch"));
    }
    let mut cur = ByteCursor { bytes, pos: 4 };
    let fixed = cur.take(4, "header")?;
    if fixed[0] != VERSION {
        return Err(corrupt(format!("unsupported version {}", fixed[0])));
    }
    let (scheme_id, frame_shift_ms, index_bits) = (fixed[1], fixed[2], fixed[3]);
    if index_bits == 0 || index_bits > 30 {
        return Err(corrupt(format!("index width {index_bits} out of range")));
    }
    let header = StreamHeader {
        scheme_id,
        frame_shift_ms,
        index_bits,
        segmental_hash: cur.u64("header")?,
        prosodic_hash: cur.u64("header")?,
        frame_count: cur.u32("header")?,
        syllable_count: cur.u32("header")?,
    };

    let seg_len = cur.u32("segmental length")? as usize;
    let mut r = BitReader::new(cur.take(seg_len, "segmental section")?);
    let mut blocks = Vec::new();
    let mut frames = 0u64;
    while frames < header.frame_count as u64 {
        let index = r
            .read(index_bits as u32)
            .ok_or_else(|| corrupt("segmental section too short"))?;
        let run = r.read(RUN_BITS).ok_or_else(|| corrupt("segmental section too short"))? as u8 + 1;
        frames += run as u64;
        blocks.push(SegmentalBlock { index, run_len: run });
    }
    if frames != header.frame_count as u64 {
        return Err(corrupt("run lengths overshoot the frame count"));
    }
    check_padding(&mut r, "segmental")?;

    let pro_len = cur.u32("prosodic length")? as usize;
    let pro_bytes = cur.take(pro_len, "prosodic section")?;
    if (header.syllable_count as usize)
        .saturating_mul(SYLLABLE_BITS as usize)
        .div_ceil(8)
        != pro_len
    {
        return Err(corrupt("prosodic section length does not match the syllable count"));
    }
    let mut r = BitReader::new(pro_bytes);
    let codes = (0..header.syllable_count)
        .map(|_| {
            let mean_idx = r.read(MEAN_BITS).ok_or_else(|| corrupt("prosodic section too short"))? as u8;
            let slope_idx = r
                .read(SLOPE_BITS)
                .ok_or_else(|| corrupt("prosodic section too short"))? as u8;
            let dur = r
                .read(DURATION_BITS)
                .ok_or_else(|| corrupt("prosodic section too short"))? as u8
                + 1;
            Ok(SyllableCode {
                mean_idx,
                slope_idx,
                dur_steps: dur,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    check_padding(&mut r, "prosodic")?;
    if cur.pos != bytes.len() {
        return Err(corrupt("trailing bytes after prosodic section"));
    }
    Ok(BitstreamContainer { header, blocks, codes })
}

/// Bits per second of each transmitted field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitRateReport {
    pub duration_s: f64,
    pub index_bits: u32,
    pub blocks: usize,
    pub syllables: usize,
    pub code_bps: f64,
    pub code_duration_bps: f64,
    pub f0_mean_bps: f64,
    pub f0_slope_bps: f64,
    pub syllable_duration_bps: f64,
    pub total_bps: f64,
    pub blocks_per_s: f64,
    pub syllables_per_s: f64,
}

impl BitRateReport {
    pub fn rows(&self) -> [(&'static str, f64); 5] {
        [
            ("Code", self.code_bps),
            ("Code duration", self.code_duration_bps),
            ("F0 mean", self.f0_mean_bps),
            ("F0 slope", self.f0_slope_bps),
            ("Syllable duration", self.syllable_duration_bps),
        ]
    }
}

impl fmt::Display for BitRateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<20} {:>10}", "field", "bps")?;
        for (name, bps) in self.rows() {
            writeln!(f, "{name:<20} {bps:>10.2}")?;
        }
        writeln!(f, "{:<20} {:>10.2}", "Total", self.total_bps)?;
        write!(
            f,
            "{} blocks ({:.2}/s), {} syllables ({:.2}/s) over {:.2} s",
            self.blocks, self.blocks_per_s, self.syllables, self.syllables_per_s, self.duration_s
        )
    }
}

pub fn measure_bitrate(
    blocks: &[SegmentalBlock],
    codes: &[SyllableCode],
    speech_duration_s: f64,
    index_bits: u32,
) -> BitRateReport {
    let d = speech_duration_s;
    let (nb, ns) = (blocks.len() as f64, codes.len() as f64);
    let code_bps = nb * index_bits as f64 / d;
    let code_duration_bps = nb * RUN_BITS as f64 / d;
    let f0_mean_bps = ns * MEAN_BITS as f64 / d;
    let f0_slope_bps = ns * SLOPE_BITS as f64 / d;
    let syllable_duration_bps = ns * DURATION_BITS as f64 / d;
    BitRateReport {
        duration_s: d,
        index_bits,
        blocks: blocks.len(),
        syllables: codes.len(),
        code_bps,
        code_duration_bps,
        f0_mean_bps,
        f0_slope_bps,
        syllable_duration_bps,
        total_bps: code_bps + code_duration_bps + f0_mean_bps + f0_slope_bps + syllable_duration_bps,
        blocks_per_s: nb / d,
        syllables_per_s: ns / d,
    }
}

/// Frames per second after silence removal, blocks per frame, syllables per
/// second and mean syllable length used for the reference allocation.
pub const REFERENCE_EFFECTIVE_FPS: f64 = 56.0;
pub const REFERENCE_BLOCK_RATIO: f64 = 0.46;
pub const REFERENCE_SYLLABLES_PER_S: f64 = 6.0;
pub const REFERENCE_INDEX_BITS: u8 = 10;
pub const REFERENCE_SYLLABLE_MS: f64 = 150.0;

/// A random stream with the reference statistics: 56 effective frames/s
/// grouped into 0.46 blocks per frame, 10-bit indices, and 6 syllables/s
/// of 144 or 160 ms averaging 150 ms.
pub fn reference_statistics_stream(duration_s: f64, seed: u64) -> BitstreamContainer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = (REFERENCE_EFFECTIVE_FPS * duration_s).round() as u32;
    let n_blocks = ((frames as f64 * REFERENCE_BLOCK_RATIO).round() as u32).clamp(frames.div_ceil(4), frames);
    // runs of 2 and 3 (1 and 4 when the ratio demands) summing to `frames`
    let mut runs = vec![1u8; n_blocks as usize];
    let mut extra = frames - n_blocks;
    for cap in 2..=4u8 {
        for r in runs.iter_mut() {
            if extra == 0 {
                break;
            }
            if *r < cap {
                *r += 1;
                extra -= 1;
            }
        }
    }
    runs.shuffle(&mut rng);
    let mut prev = u32::MAX;
    let blocks = runs
        .into_iter()
        .map(|run_len| {
            let mut index = rng.random_range(0..1u32 << REFERENCE_INDEX_BITS);
            if index == prev {
                index = (index + 1) % (1 << REFERENCE_INDEX_BITS);
            }
            prev = index;
            SegmentalBlock { index, run_len }
        })
        .collect();

    let n_syl = (REFERENCE_SYLLABLES_PER_S * duration_s).round() as usize;
    // 144 ms (9 steps) and 160 ms (10 steps) in a 5:3 ratio average 150 ms
    let n_long = (n_syl as f64 * (REFERENCE_SYLLABLE_MS - 144.0) / 16.0).round() as usize;
    let mut steps: Vec<u8> = (0..n_syl).map(|i| if i < n_long { 10 } else { 9 }).collect();
    steps.shuffle(&mut rng);
    let codes = steps
        .into_iter()
        .map(|dur_steps| SyllableCode {
            mean_idx: rng.random_range(0..8),
            slope_idx: rng.random_range(0..8),
            dur_steps,
        })
        .collect();
    BitstreamContainer::new(0, 16, REFERENCE_INDEX_BITS, (0, 0), blocks, codes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn container(blocks: Vec<SegmentalBlock>, codes: Vec<SyllableCode>, index_bits: u8) -> BitstreamContainer {
        BitstreamContainer::new(0, 16, index_bits, (0x1122_3344_5566_7788, 42), blocks, codes)
    }

    #[test]
    fn bit_writer_is_msb_first() {
        let mut w = BitWriter::new();
        w.write(0b101, 3);
        w.write(0b1, 1);
        w.write(0xF, 4);
        w.write(1, 1);
        assert_eq!(w.bit_len(), 9);
        assert_eq!(w.into_bytes(), vec![0b1011_1111, 0b1000_0000]);
    }

    #[test]
    fn gp_block_packs_into_two_bytes() {
        // index 0x2A5 = 10 1010 0101, run 3 stored as 10
        let c = container(
            vec![SegmentalBlock {
                index: 0x2A5,
                run_len: 3,
            }],
            vec![],
            10,
        );
        let bytes = pack(&c).unwrap();
        assert_eq!(&bytes[32..36], &2u32.to_le_bytes());
        assert_eq!(&bytes[36..38], &[0b1010_1001, 0b0110_0000]);
        assert_eq!(unpack(&bytes).unwrap(), c);
    }

    #[test]
    fn syllable_packs_into_two_bytes() {
        // mean 5 = 101, slope 2 = 010, 9 steps stored as 1000
        let code = SyllableCode {
            mean_idx: 5,
            slope_idx: 2,
            dur_steps: 9,
        };
        let c = container(vec![], vec![code], 10);
        let bytes = pack(&c).unwrap();
        assert_eq!(&bytes[32..36], &0u32.to_le_bytes());
        assert_eq!(&bytes[36..40], &2u32.to_le_bytes());
        assert_eq!(&bytes[40..42], &[0b1010_1010, 0b0000_0000]);
    }

    #[test]
    fn empty_streams() {
        let c = container(vec![], vec![], 12);
        let bytes = pack(&c).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 8 + CRC_LEN);
        assert_eq!(unpack(&bytes).unwrap(), c);
    }

    #[test]
    fn overflow_is_reported() {
        let c = container(
            vec![SegmentalBlock {
                index: 1024,
                run_len: 1,
            }],
            vec![],
            10,
        );
        assert!(matches!(pack(&c), Err(Error::EncodeOverflow(_))));
        let code = SyllableCode {
            mean_idx: 8,
            slope_idx: 0,
            dur_steps: 1,
        };
        assert!(matches!(
            pack(&container(vec![], vec![code], 10)),
            Err(Error::EncodeOverflow(_))
        ));
    }

    #[test]
    fn integrity_errors() {
        assert!(matches!(unpack(b"RIFF1234"), Err(Error::NotABitstream)));
        let c = reference_statistics_stream(2.0, 3);
        let bytes = pack(&c).unwrap();
        for cut in [10, 40, bytes.len() - 1] {
            assert!(
                matches!(unpack(&bytes[..cut]), Err(Error::CorruptStream(_))),
                "cut {cut}"
            );
        }
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(unpack(&longer), Err(Error::CorruptStream(_))));

        for i in 4..bytes.len() {
            let mut tampered = bytes.clone();
            tampered[i] ^= 0x10;
            assert!(matches!(unpack(&tampered), Err(Error::CorruptStream(_))), "byte {i}");
        }

        let parsed = unpack(&bytes).unwrap();
        assert!(parsed.check_codebooks(0, 0).is_ok());
        assert!(matches!(
            parsed.check_codebooks(1, 0),
            Err(Error::CodebookMismatch { .. })
        ));
    }

    #[test]
    fn bitrate_rows() {
        let c = reference_statistics_stream(100.0, 1);
        let r = measure_bitrate(&c.blocks, &c.codes, 100.0, 10);
        assert_eq!(r.blocks, 2576);
        assert_eq!(r.syllables, 600);
        assert!((r.code_bps - 257.6).abs() < 1e-9);
        assert!((r.code_duration_bps - 51.52).abs() < 1e-9);
        assert_eq!(
            (r.f0_mean_bps, r.f0_slope_bps, r.syllable_duration_bps),
            (18.0, 18.0, 24.0)
        );
        assert!((r.total_bps - 369.12).abs() < 1e-9);
        let mean_ms = c.codes.iter().map(|s| s.dur_steps as f64 * 16.0).sum::<f64>() / 600.0;
        assert_eq!(mean_ms, 150.0);

        let none = measure_bitrate(&c.blocks, &[], 100.0, 10);
        assert_eq!(none.f0_mean_bps + none.f0_slope_bps + none.syllable_duration_bps, 0.0);
        let double = measure_bitrate(&c.blocks, &c.codes, 200.0, 10);
        assert!((double.total_bps * 2.0 - r.total_bps).abs() < 1e-9);
    }

    fn arb_container() -> impl Strategy<Value = BitstreamContainer> {
        (1u8..=16).prop_flat_map(|bits| {
            let max = 1u32 << bits;
            (
                Just(bits),
                proptest::collection::vec((0..max, 1u8..=4), 0..60),
                proptest::collection::vec((0u8..8, 0u8..8, 1u8..=16), 0..30),
                any::<(u64, u64, u8)>(),
            )
                .prop_map(|(bits, blocks, codes, (h1, h2, scheme))| {
                    BitstreamContainer::new(
                        scheme % 3,
                        16,
                        bits,
                        (h1, h2),
                        blocks
                            .into_iter()
                            .map(|(index, run_len)| SegmentalBlock { index, run_len })
                            .collect(),
                        codes
                            .into_iter()
                            .map(|(m, s, d)| SyllableCode {
                                mean_idx: m,
                                slope_idx: s,
                                dur_steps: d,
                            })
                            .collect(),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn roundtrip(c in arb_container()) {
            let bytes = pack(&c).unwrap();
            let back = unpack(&bytes).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(pack(&back).unwrap(), bytes);
        }
    }
}
