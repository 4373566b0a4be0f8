//! Syllable-level log-F0 stylization with the first two discrete Legendre
//! polynomials (mean and slope), 3-bit scalar quantization and a 4-bit
//! duration in 16 ms steps.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::{F0Track, FrameGrid};
use crate::snn::BoundarySet;

pub const LEVELS: usize = 8;
pub const DURATION_STEP_MS: f64 = 16.0;
pub const MAX_DURATION_STEPS: u32 = 16;
/// Slope unit recorded alongside the codebook.
pub const SLOPE_UNIT: &str = "log-Hz per second";

/// Mean (log-Hz, at the segment centre) and slope (log-Hz per second).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DlopCoeffs {
    pub mean: f64,
    pub slope: f64,
    pub span_ms: f64,
}

impl DlopCoeffs {
    pub fn value_at(&self, offset_from_center_ms: f64) -> f64 {
        self.mean + self.slope * offset_from_center_ms / 1000.0
    }
}

/// Projection of `values` observed at `times_ms` onto the orthonormal
/// order-0 and order-1 discrete Legendre vectors of those sample points.
/// Returns (value at `center_ms`, slope per second).
fn project(times_ms: &[f64], values: &[f64], center_ms: f64) -> (f64, f64) {
    let n = values.len() as f64;
    let t_bar = times_ms.iter().sum::<f64>() / n;
    let centered: Vec<f64> = times_ms.iter().map(|t| t - t_bar).collect();
    let norm1 = centered.iter().map(|c| c * c).sum::<f64>().sqrt();
    let c0: f64 = values.iter().sum::<f64>() / n.sqrt();
    let c1: f64 = if norm1 > 0.0 {
        values.iter().zip(&centered).map(|(v, c)| v * c / norm1).sum()
    } else {
        0.0
    };
    let mean_at_centroid = c0 / n.sqrt();
    let slope_per_ms = if norm1 > 0.0 { c1 / norm1 } else { 0.0 };
    (
        mean_at_centroid + slope_per_ms * (center_ms - t_bar),
        slope_per_ms * 1000.0,
    )
}

/// Fits a segment sampled uniformly over `span_ms` (sample `i` sits at
/// `(i + 0.5) * span_ms / n`).
pub fn fit_dlop(segment: &[f64], span_ms: f64) -> Result<DlopCoeffs> {
    if segment.len() < 2 {
        return Err(Error::SegmentTooShort(segment.len()));
    }
    let n = segment.len() as f64;
    let times: Vec<f64> = (0..segment.len()).map(|i| (i as f64 + 0.5) * span_ms / n).collect();
    let (mean, slope) = project(&times, segment, span_ms / 2.0);
    Ok(DlopCoeffs { mean, slope, span_ms })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamCodebook {
    pub mu: f64,
    pub sigma: f64,
    pub levels: Vec<f64>,
}

impl ParamCodebook {
    pub fn from_values(values: &[f64], what: &str) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::DegenerateCorpus(format!("{what}: need at least two syllables")));
        }
        let n = values.len() as f64;
        let mu = values.iter().sum::<f64>() / n;
        let sigma = (values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n).sqrt();
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::DegenerateCorpus(format!("{what}: zero spread")));
        }
        Ok(Self::from_moments(mu, sigma))
    }

    /// Eight levels equally spaced on [mu - 3 sigma, mu + 3 sigma].
    pub fn from_moments(mu: f64, sigma: f64) -> Self {
        let step = 6.0 * sigma / (LEVELS - 1) as f64;
        Self {
            mu,
            sigma,
            levels: (0..LEVELS).map(|k| mu - 3.0 * sigma + step * k as f64).collect(),
        }
    }

    pub fn step(&self) -> f64 {
        self.levels[1] - self.levels[0]
    }

    pub fn quantize(&self, value: f64) -> u8 {
        quantize_param(value, &self.levels)
    }

    pub fn level(&self, index: u8) -> Result<f64> {
        self.levels
            .get(index as usize)
            .copied()
            .ok_or_else(|| Error::CorruptStream(format!("prosodic index {index} out of range")))
    }

    fn validate(&self) -> Result<()> {
        if self.levels.len() != LEVELS || self.levels.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("prosodic codebook needs 8 strictly increasing levels"));
        }
        Ok(())
    }
}

/// Nearest level; ties go to the lower index; out-of-range values clamp.
/// Distances within rounding noise of each other count as ties.
pub fn quantize_param(value: f64, levels: &[f64]) -> u8 {
    let tie = levels.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max) * 1e-9;
    let mut best = 0;
    for (k, level) in levels.iter().enumerate().skip(1) {
        if (value - level).abs() < (value - levels[best]).abs() - tie {
            best = k;
        }
    }
    best as u8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProsodicCodebook {
    pub mean: ParamCodebook,
    pub slope: ParamCodebook,
    pub slope_unit: String,
}

impl ProsodicCodebook {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|_| Error::config_path("cannot read prosodic codebook", path))?;
        let cb: ProsodicCodebook = serde_json::from_str(&text)?;
        cb.mean.validate()?;
        cb.slope.validate()?;
        Ok(cb)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Identity hash used to pair streams with codebooks.
    pub fn hash(&self) -> u64 {
        let mut bytes = Vec::new();
        for v in self.mean.levels.iter().chain(&self.slope.levels) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        crate::segcodec::content_hash(&bytes)
    }
}

pub fn build_prosodic_codebooks(coeffs: &[DlopCoeffs]) -> Result<ProsodicCodebook> {
    let means: Vec<f64> = coeffs.iter().map(|c| c.mean).collect();
    let slopes: Vec<f64> = coeffs.iter().map(|c| c.slope).collect();
    Ok(ProsodicCodebook {
        mean: ParamCodebook::from_values(&means, "F0 mean")?,
        slope: ParamCodebook::from_values(&slopes, "F0 slope")?,
        slope_unit: SLOPE_UNIT.to_string(),
    })
}

/// One transmitted syllable: 3-bit mean, 3-bit slope, duration in 16 ms
/// steps (1..=16).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyllableCode {
    pub mean_idx: u8,
    pub slope_idx: u8,
    pub dur_steps: u8,
}

/// Segment edges in 16 ms steps: utterance start, boundaries and end,
/// with slivers merged backward and long segments split evenly.
fn segment_steps(boundaries: &BoundarySet, duration_ms: f64, min_ms: f64) -> Vec<u32> {
    let to_steps = |ms: f64| (ms / DURATION_STEP_MS).round().max(0.0) as u32;
    let end = to_steps(duration_ms).max(1);
    let mut edges = vec![0u32];
    for &b in &boundaries.times_ms {
        let s = to_steps(b);
        if s > *edges.last().unwrap() && s < end {
            edges.push(s);
        }
    }
    edges.push(end);
    let mut lengths: Vec<u32> = edges.windows(2).map(|w| w[1] - w[0]).collect();

    let min_steps = (min_ms / DURATION_STEP_MS).ceil() as u32;
    let mut merged: Vec<u32> = Vec::with_capacity(lengths.len());
    for len in lengths.drain(..) {
        match merged.last_mut() {
            Some(prev) if len < min_steps => *prev += len,
            _ => merged.push(len),
        }
    }
    if merged.len() > 1 && merged[0] < min_steps {
        let first = merged.remove(0);
        merged[0] += first;
    }

    let mut out = Vec::with_capacity(merged.len());
    for len in merged {
        let parts = len.div_ceil(MAX_DURATION_STEPS);
        let (q, r) = (len / parts, len % parts);
        out.extend((0..parts).map(|p| q + u32::from(p < r)));
    }
    out
}

/// Unquantized per-syllable coefficients of a frame-rate log-F0 track.
/// Each segment is fitted over the frames whose centre falls inside it
/// (the two nearest frames when fewer do).
pub fn segment_prosody(f0: &F0Track, boundaries: &BoundarySet, grid: &FrameGrid) -> Result<Vec<DlopCoeffs>> {
    let n = f0.len();
    if n < 2 {
        return Err(Error::SegmentTooShort(n));
    }
    let duration_ms = grid.span_samples(n) as f64 * 1000.0 / grid.sample_rate as f64;
    let steps = segment_steps(boundaries, duration_ms, 2.0 * grid.shift_ms as f64);
    let centers: Vec<f64> = (0..n).map(|i| grid.frame_center_ms(i)).collect();
    let mut start = 0.0;
    steps
        .iter()
        .map(|&len| {
            let span = len as f64 * DURATION_STEP_MS;
            let end = start + span;
            let mid = start + span / 2.0;
            let mut idx: Vec<usize> = (0..n).filter(|&i| centers[i] >= start && centers[i] < end).collect();
            if idx.len() < 2 {
                idx = (0..n).collect();
                idx.sort_by(|&a, &b| {
                    (centers[a] - mid)
                        .abs()
                        .total_cmp(&(centers[b] - mid).abs())
                        .then(a.cmp(&b))
                });
                idx.truncate(2);
                idx.sort_unstable();
            }
            let times: Vec<f64> = idx.iter().map(|&i| centers[i]).collect();
            let values: Vec<f64> = idx.iter().map(|&i| f0.log_f0[i]).collect();
            let (mean, slope) = project(&times, &values, mid);
            start = end;
            Ok(DlopCoeffs {
                mean,
                slope,
                span_ms: span,
            })
        })
        .collect()
}

pub fn quantize_syllables(coeffs: &[DlopCoeffs], cb: &ProsodicCodebook) -> Vec<SyllableCode> {
    coeffs
        .iter()
        .map(|c| SyllableCode {
            mean_idx: cb.mean.quantize(c.mean),
            slope_idx: cb.slope.quantize(c.slope),
            dur_steps: (c.span_ms / DURATION_STEP_MS)
                .round()
                .clamp(1.0, MAX_DURATION_STEPS as f64) as u8,
        })
        .collect()
}

pub fn encode_prosody(
    f0: &F0Track,
    boundaries: &BoundarySet,
    grid: &FrameGrid,
    cb: &ProsodicCodebook,
) -> Result<Vec<SyllableCode>> {
    Ok(quantize_syllables(&segment_prosody(f0, boundaries, grid)?, cb))
}

/// Piecewise-linear log-F0 built from abutting syllable lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProsodyContour {
    pub pieces: Vec<DlopCoeffs>,
}

impl ProsodyContour {
    pub fn from_coeffs(pieces: Vec<DlopCoeffs>) -> Self {
        Self { pieces }
    }

    pub fn duration_ms(&self) -> f64 {
        self.pieces.iter().map(|p| p.span_ms).sum()
    }

    /// Log-F0 at `t_ms`; held constant past either end.
    pub fn log_f0_at(&self, t_ms: f64) -> Option<f64> {
        let mut start = 0.0;
        for (i, p) in self.pieces.iter().enumerate() {
            let end = start + p.span_ms;
            if t_ms < end || i + 1 == self.pieces.len() {
                let local = t_ms.clamp(start, end) - (start + p.span_ms / 2.0);
                return Some(p.value_at(local));
            }
            start = end;
        }
        None
    }

    /// Samples the contour at the centres of `n_frames` analysis frames.
    pub fn to_f0_track(&self, grid: &FrameGrid, n_frames: usize) -> F0Track {
        F0Track::from_log_f0(
            (0..n_frames)
                .map(|i| self.log_f0_at(grid.frame_center_ms(i)).unwrap_or(0.0))
                .collect(),
        )
    }
}

pub fn decode_prosody(codes: &[SyllableCode], cb: &ProsodicCodebook) -> Result<ProsodyContour> {
    let pieces = codes
        .iter()
        .map(|c| {
            if c.dur_steps == 0 || u32::from(c.dur_steps) > MAX_DURATION_STEPS {
                return Err(Error::CorruptStream(format!(
                    "syllable duration {} out of range",
                    c.dur_steps
                )));
            }
            Ok(DlopCoeffs {
                mean: cb.mean.level(c.mean_idx)?,
                slope: cb.slope.level(c.slope_idx)?,
                span_ms: c.dur_steps as f64 * DURATION_STEP_MS,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ProsodyContour { pieces })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_cb() -> ProsodicCodebook {
        ProsodicCodebook {
            mean: ParamCodebook::from_moments(0.0, 1.0),
            slope: ParamCodebook::from_moments(0.0, 1.0),
            slope_unit: SLOPE_UNIT.into(),
        }
    }

    /// Least-squares line through (t, y) from the 2x2 normal equations.
    fn normal_equations(t: &[f64], y: &[f64]) -> (f64, f64) {
        let n = t.len() as f64;
        let (st, sy) = (t.iter().sum::<f64>(), y.iter().sum::<f64>());
        let stt: f64 = t.iter().map(|v| v * v).sum();
        let sty: f64 = t.iter().zip(y).map(|(a, b)| a * b).sum();
        let slope = (n * sty - st * sy) / (n * stt - st * st);
        (sy / n - slope * st / n, slope)
    }

    #[test]
    fn constant_segment() {
        let c = fit_dlop(&[4.2; 10], 160.0).unwrap();
        assert!((c.mean - 4.2).abs() < 1e-12);
        assert!(c.slope.abs() < 1e-12);
    }

    #[test]
    fn ramp_segment() {
        let n = 200;
        let (a, b) = (100f64.ln(), 200f64.ln());
        let seg: Vec<f64> = (0..n).map(|i| a + (b - a) * (i as f64 + 0.5) / n as f64).collect();
        let c = fit_dlop(&seg, 200.0).unwrap();
        assert!((c.slope - 2f64.ln() / 0.2).abs() < 1e-9);
        assert!((c.mean - (a + b) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn short_segment_is_rejected() {
        assert!(matches!(fit_dlop(&[1.0], 16.0), Err(Error::SegmentTooShort(1))));
    }

    #[test]
    fn unit_codebook_levels() {
        let cb = ParamCodebook::from_moments(0.0, 1.0);
        assert!((cb.levels[0] + 3.0).abs() < 1e-12);
        assert!((cb.levels[1] + 3.0 - 6.0 / 7.0).abs() < 1e-12);
        assert!((cb.levels[7] - 3.0).abs() < 1e-12);
        assert_eq!(cb.quantize(0.0), 3);
        assert_eq!(cb.quantize(10.0), 7);
        assert_eq!(cb.quantize(-10.0), 0);
        assert_eq!(cb.quantize(cb.levels[5]), 5);
    }

    #[test]
    fn degenerate_corpus() {
        let c = DlopCoeffs {
            mean: 4.0,
            slope: 0.5,
            span_ms: 100.0,
        };
        assert!(matches!(
            build_prosodic_codebooks(&[c, c, c]),
            Err(Error::DegenerateCorpus(_))
        ));
        assert!(matches!(
            build_prosodic_codebooks(&[c]),
            Err(Error::DegenerateCorpus(_))
        ));
    }

    #[test]
    fn affine_shift_moves_levels() {
        let values = [0.3, -1.2, 2.5, 0.9, 1.1];
        let a = ParamCodebook::from_values(&values, "x").unwrap();
        let shifted: Vec<f64> = values.iter().map(|v| 2.0 * v + 5.0).collect();
        let b = ParamCodebook::from_values(&shifted, "x").unwrap();
        for (la, lb) in a.levels.iter().zip(&b.levels) {
            assert!((2.0 * la + 5.0 - lb).abs() < 1e-12);
        }
    }

    #[test]
    fn segmentation_counts() {
        let grid = FrameGrid::new(16).unwrap();
        let n = grid.n_frames(16_000);
        let track = F0Track::from_log_f0(vec![120f64.ln(); n]);
        let b = BoundarySet::new(vec![250.0, 500.0, 750.0]).unwrap();
        let coeffs = segment_prosody(&track, &b, &grid).unwrap();
        assert_eq!(coeffs.len(), 4);
        let cb = unit_cb();
        let codes = quantize_syllables(&coeffs, &cb);
        assert!(codes.iter().all(|c| c.slope_idx == cb.slope.quantize(0.0)));

        // a single 600 ms syllable is split into parts of at most 256 ms
        let n = grid.n_frames(600 * 16);
        let track = F0Track::from_log_f0(vec![120f64.ln(); n]);
        let coeffs = segment_prosody(&track, &BoundarySet::default(), &grid).unwrap();
        assert_eq!(coeffs.len(), 3);
        assert!(coeffs.iter().all(|c| c.span_ms <= 256.0));
    }

    #[test]
    fn slivers_merge_backward() {
        // edges 0,6,7,25 steps: the 1-step sliver joins its predecessor and
        // the 18-step remainder is split in two
        let b = BoundarySet::new(vec![100.0, 110.0]).unwrap();
        assert_eq!(segment_steps(&b, 400.0, 32.0), vec![7, 9, 9]);
        let b = BoundarySet::new(vec![10.0, 200.0]).unwrap();
        assert_eq!(segment_steps(&b, 400.0, 32.0), vec![13, 12]);
    }

    #[test]
    fn decode_examples() {
        let cb = unit_cb();
        let flat = decode_prosody(
            &[SyllableCode {
                mean_idx: 4,
                slope_idx: cb.slope.quantize(0.0),
                dur_steps: 10,
            }],
            &cb,
        )
        .unwrap();
        let level = cb.mean.levels[4];
        let slope = cb.slope.levels[3];
        assert_eq!(flat.duration_ms(), 160.0);
        assert!((flat.log_f0_at(80.0).unwrap() - level).abs() < 1e-12);
        assert!((flat.log_f0_at(0.0).unwrap() - (level - slope * 0.08)).abs() < 1e-12);
        assert!(decode_prosody(&[], &cb).unwrap().pieces.is_empty());
        let bad = SyllableCode {
            mean_idx: 8,
            slope_idx: 0,
            dur_steps: 1,
        };
        assert!(matches!(decode_prosody(&[bad], &cb), Err(Error::CorruptStream(_))));
    }

    #[test]
    fn line_roundtrip_error_is_bounded_by_quantizer_steps() {
        let grid = FrameGrid::new(16).unwrap();
        let n = grid.n_frames(16 * 2000);
        // syllables of 250 ms with alternating rising and falling lines
        let b = BoundarySet::new((1..8).map(|k| k as f64 * 250.0).collect()).unwrap();
        let line = |t: f64| {
            let k = (t / 250.0).floor().min(7.0);
            let local = t - (k * 250.0 + 125.0);
            let slope = if k as i64 % 2 == 0 { 0.8 } else { -0.5 };
            (110.0 + 10.0 * k).ln() + slope * local / 1000.0
        };
        let track = F0Track::from_log_f0((0..n).map(|i| line(grid.frame_center_ms(i))).collect());
        let coeffs = segment_prosody(&track, &b, &grid).unwrap();
        let cb = build_prosodic_codebooks(&coeffs).unwrap();
        let contour = decode_prosody(&quantize_syllables(&coeffs, &cb), &cb).unwrap();
        let bound = cb.mean.step() / 2.0 + cb.slope.step() / 2.0 * 0.125;
        for i in 0..n {
            let t = grid.frame_center_ms(i);
            if t > 16.0 && t < 1984.0 && (t % 250.0) > 16.0 && (t % 250.0) < 234.0 {
                let err = (contour.log_f0_at(t).unwrap() - line(t)).abs();
                assert!(err <= bound + 1e-9, "t {t}: {err} > {bound}");
            }
        }
    }

    #[test]
    fn codebook_json_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prosody.json");
        let cb = unit_cb();
        cb.save(&path).unwrap();
        assert_eq!(ProsodicCodebook::load(&path).unwrap(), cb);
    }

    proptest! {
        #[test]
        fn fit_matches_least_squares(values in proptest::collection::vec(3.5f64..6.0, 2..60), span in 20.0f64..400.0) {
            let c = fit_dlop(&values, span).unwrap();
            let n = values.len() as f64;
            let t: Vec<f64> = (0..values.len()).map(|i| (i as f64 + 0.5) * span / n - span / 2.0).collect();
            let (intercept, slope_per_ms) = normal_equations(&t, &values);
            prop_assert!((c.mean - intercept).abs() < 1e-9);
            prop_assert!((c.slope - slope_per_ms * 1000.0).abs() < 1e-9 * c.slope.abs().max(1.0));
            // residual is orthogonal to both basis vectors
            let resid: Vec<f64> = values.iter().zip(&t).map(|(v, ti)| v - c.value_at(*ti)).collect();
            prop_assert!(resid.iter().sum::<f64>().abs() < 1e-9);
            prop_assert!(resid.iter().zip(&t).map(|(r, ti)| r * ti).sum::<f64>().abs() < 1e-9 * span);
        }

        #[test]
        fn quantizer_error_and_monotonicity(mu in -5.0f64..5.0, sigma in 0.01f64..3.0, u in 0.0f64..1.0, v in 0.0f64..1.0) {
            let cb = ParamCodebook::from_moments(mu, sigma);
            let lo = mu - 3.0 * sigma;
            let (x, y) = (lo + 6.0 * sigma * u, lo + 6.0 * sigma * v);
            let q = cb.quantize(x);
            prop_assert!((cb.levels[q as usize] - x).abs() <= cb.step() / 2.0 + 1e-12);
            if x <= y {
                prop_assert!(cb.quantize(x) <= cb.quantize(y));
            }
        }

        #[test]
        fn decoded_duration_is_sum_of_steps(steps in proptest::collection::vec(1u8..=16, 0..40)) {
            let cb = unit_cb();
            let codes: Vec<SyllableCode> = steps.iter().map(|&d| SyllableCode { mean_idx: 1, slope_idx: 2, dur_steps: d }).collect();
            let total: f64 = steps.iter().map(|&d| d as f64 * 16.0).sum();
            prop_assert_eq!(decode_prosody(&codes, &cb).unwrap().duration_ms(), total);
        }
    }
}
