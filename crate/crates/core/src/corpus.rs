//! Synthetic CV-syllable corpus with known phonological labels, syllable
//! boundaries and F0, plus the manifest loader used for training.
//!
//! Files per utterance:
//!
//! ```text
//! uttNNN.wav   16 kHz mono, 16-bit
//! uttNNN.lab   start_ms end_ms phone class[,class...]   (one segment per line)
//! uttNNN.bnd   boundary_ms                               (one per line)
//! uttNNN.f0    Hz every 10 ms
//! manifest.tsv wav<TAB>labels<TAB>boundaries             (paths relative to the manifest)
//! ```

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::audio::{AudioClip, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::frontend::FrameGrid;
use crate::neural::{Pattern, Scheme};
use crate::snn::BoundarySet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub n_utterances: usize,
    pub min_syllables: usize,
    pub max_syllables: usize,
    pub consonant_ms: (u32, u32),
    pub vowel_ms: (u32, u32),
    pub edge_silence_ms: (u32, u32),
    pub scheme: Scheme,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_utterances: 24,
            min_syllables: 5,
            max_syllables: 9,
            consonant_ms: (60, 100),
            vowel_ms: (130, 190),
            edge_silence_ms: (200, 300),
            scheme: Scheme::Gp,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Manner {
    Vowel,
    Stop {
        voiced: bool,
        burst_hz: f64,
    },
    Nasal,
    Fricative {
        center_hz: f64,
        bandwidth_hz: f64,
        level: f64,
    },
    Liquid,
}

struct Phone {
    symbol: &'static str,
    manner: Manner,
    formants: [f64; 3],
    bandwidths: [f64; 3],
    gp: &'static [&'static str],
    spe: &'static [&'static str],
    espe: &'static [&'static str],
}

const VOWEL_BW: [f64; 3] = [80.0, 100.0, 150.0];

const VOWELS: [Phone; 5] = [
    Phone {
        symbol: "a",
        manner: Manner::Vowel,
        formants: [730.0, 1090.0, 2440.0],
        bandwidths: VOWEL_BW,
        gp: &["A", "a"],
        spe: &["vocalic", "low", "back", "tense", "voice", "continuant"],
        espe: &["vowel", "low", "back", "voiced", "continuant"],
    },
    Phone {
        symbol: "i",
        manner: Manner::Vowel,
        formants: [270.0, 2290.0, 3010.0],
        bandwidths: VOWEL_BW,
        gp: &["I", "i"],
        spe: &["vocalic", "high", "tense", "voice", "continuant"],
        espe: &["vowel", "high", "tense", "voiced", "continuant"],
    },
    Phone {
        symbol: "u",
        manner: Manner::Vowel,
        formants: [300.0, 870.0, 2240.0],
        bandwidths: VOWEL_BW,
        gp: &["U", "u"],
        spe: &["vocalic", "high", "back", "round", "tense", "voice", "continuant"],
        espe: &["vowel", "high", "back", "round", "labial", "voiced", "continuant"],
    },
    Phone {
        symbol: "e",
        manner: Manner::Vowel,
        formants: [530.0, 1840.0, 2480.0],
        bandwidths: VOWEL_BW,
        gp: &["E", "I"],
        spe: &["vocalic", "voice", "continuant"],
        espe: &["vowel", "mid", "voiced", "continuant"],
    },
    Phone {
        symbol: "o",
        manner: Manner::Vowel,
        formants: [570.0, 840.0, 2410.0],
        bandwidths: VOWEL_BW,
        gp: &["E", "U"],
        spe: &["vocalic", "back", "round", "voice", "continuant"],
        espe: &["vowel", "mid", "back", "round", "labial", "voiced", "continuant"],
    },
];

const CLOSURE_F: [f64; 3] = [200.0, 1000.0, 2500.0];
const CLOSURE_BW: [f64; 3] = [150.0, 300.0, 400.0];

const CONSONANTS: [Phone; 10] = [
    Phone {
        symbol: "p",
        manner: Manner::Stop {
            voiced: false,
            burst_hz: 900.0,
        },
        formants: CLOSURE_F,
        bandwidths: CLOSURE_BW,
        gp: &["S", "H", "U"],
        spe: &["consonantal", "anterior"],
        espe: &["stop", "labial", "anterior"],
    },
    Phone {
        symbol: "t",
        manner: Manner::Stop {
            voiced: false,
            burst_hz: 4200.0,
        },
        formants: CLOSURE_F,
        bandwidths: CLOSURE_BW,
        gp: &["S", "H", "A"],
        spe: &["consonantal", "anterior", "coronal"],
        espe: &["stop", "coronal", "anterior"],
    },
    Phone {
        symbol: "k",
        manner: Manner::Stop {
            voiced: false,
            burst_hz: 2000.0,
        },
        formants: CLOSURE_F,
        bandwidths: CLOSURE_BW,
        gp: &["S", "H"],
        spe: &["consonantal", "high", "back"],
        espe: &["stop", "velar", "high", "back"],
    },
    Phone {
        symbol: "b",
        manner: Manner::Stop {
            voiced: true,
            burst_hz: 900.0,
        },
        formants: CLOSURE_F,
        bandwidths: CLOSURE_BW,
        gp: &["S", "U"],
        spe: &["consonantal", "anterior", "voice"],
        espe: &["stop", "labial", "anterior", "voiced"],
    },
    Phone {
        symbol: "d",
        manner: Manner::Stop {
            voiced: true,
            burst_hz: 4200.0,
        },
        formants: CLOSURE_F,
        bandwidths: CLOSURE_BW,
        gp: &["S", "A"],
        spe: &["consonantal", "anterior", "coronal", "voice"],
        espe: &["stop", "coronal", "anterior", "voiced"],
    },
    Phone {
        symbol: "m",
        manner: Manner::Nasal,
        formants: [250.0, 1100.0, 2300.0],
        bandwidths: [100.0, 250.0, 300.0],
        gp: &["N", "U"],
        spe: &["consonantal", "anterior", "nasal", "voice"],
        espe: &["nasal", "labial", "anterior", "voiced"],
    },
    Phone {
        symbol: "n",
        manner: Manner::Nasal,
        formants: [250.0, 1700.0, 2600.0],
        bandwidths: [100.0, 250.0, 300.0],
        gp: &["N", "A"],
        spe: &["consonantal", "anterior", "coronal", "nasal", "voice"],
        espe: &["nasal", "coronal", "anterior", "voiced"],
    },
    Phone {
        symbol: "s",
        manner: Manner::Fricative {
            center_hz: 5500.0,
            bandwidth_hz: 1500.0,
            level: 1.0,
        },
        formants: CLOSURE_F,
        bandwidths: CLOSURE_BW,
        gp: &["h", "H", "A"],
        spe: &["consonantal", "anterior", "coronal", "continuant", "strident"],
        espe: &["fricative", "coronal", "anterior", "continuant"],
    },
    Phone {
        symbol: "f",
        manner: Manner::Fricative {
            center_hz: 3500.0,
            bandwidth_hz: 3000.0,
            level: 0.4,
        },
        formants: CLOSURE_F,
        bandwidths: CLOSURE_BW,
        gp: &["h", "H", "U"],
        spe: &["consonantal", "anterior", "continuant", "strident"],
        espe: &["fricative", "labial", "dental", "anterior", "continuant"],
    },
    Phone {
        symbol: "l",
        manner: Manner::Liquid,
        formants: [360.0, 1300.0, 2700.0],
        bandwidths: [100.0, 150.0, 200.0],
        gp: &["A", "E"],
        spe: &["vocalic", "consonantal", "anterior", "coronal", "voice", "continuant"],
        espe: &["approximant", "coronal", "anterior", "voiced", "continuant"],
    },
];

fn phone_classes(phone: &Phone, scheme: Scheme) -> &'static [&'static str] {
    match scheme {
        Scheme::Gp => phone.gp,
        Scheme::Spe => phone.spe,
        Scheme::Espe => phone.espe,
    }
}

/// One labelled stretch of an utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSegment {
    pub start_ms: f64,
    pub end_ms: f64,
    pub phone: String,
    pub classes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct GeneratedUtterance {
    pub clip: AudioClip,
    pub labels: Vec<LabelSegment>,
    pub boundaries: BoundarySet,
    /// Generator F0 in Hz every 10 ms.
    pub f0_hz: Vec<f64>,
}

/// Two-pole resonator with unity gain at DC.
#[derive(Default)]
struct Resonator {
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn step(&mut self, x: f64, freq: f64, bw: f64) -> f64 {
        let fs = SAMPLE_RATE as f64;
        let r = (-PI * bw / fs).exp();
        let b = 2.0 * r * (2.0 * PI * freq / fs).cos();
        let c = -r * r;
        let a = 1.0 - b - c;
        let y = a * x + b * self.y1 + c * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Peak gain of the resonator above, used to level noise branches.
fn resonator_peak_gain(freq: f64, bw: f64) -> f64 {
    let fs = SAMPLE_RATE as f64;
    let r = (-PI * bw / fs).exp();
    let b = 2.0 * r * (2.0 * PI * freq / fs).cos();
    let c = -r * r;
    let a = 1.0 - b - c;
    let w = 2.0 * PI * freq / fs;
    let re = 1.0 - b * w.cos() - c * (2.0 * w).cos();
    let im = b * w.sin() + c * (2.0 * w).sin();
    a.abs() / (re * re + im * im).sqrt()
}

struct Segment {
    phone: Option<&'static Phone>,
    start: usize,
    end: usize,
}

#[derive(Clone, Copy)]
struct Targets {
    voice: f64,
    aspiration: f64,
    frication: f64,
    frication_hz: f64,
    frication_bw: f64,
    formants: [f64; 3],
    bandwidths: [f64; 3],
}

const SILENT: Targets = Targets {
    voice: 0.0,
    aspiration: 0.0,
    frication: 0.0,
    frication_hz: 3000.0,
    frication_bw: 2000.0,
    formants: CLOSURE_F,
    bandwidths: CLOSURE_BW,
};

fn targets_at(seg: &Segment, n: usize) -> Targets {
    let Some(phone) = seg.phone else {
        return SILENT;
    };
    let base = Targets {
        formants: phone.formants,
        bandwidths: phone.bandwidths,
        ..SILENT
    };
    match phone.manner {
        Manner::Vowel => Targets { voice: 1.0, ..base },
        Manner::Liquid => Targets { voice: 0.8, ..base },
        Manner::Nasal => Targets { voice: 0.6, ..base },
        Manner::Fricative {
            center_hz,
            bandwidth_hz,
            level,
        } => Targets {
            frication: 0.015 * level,
            frication_hz: center_hz,
            frication_bw: bandwidth_hz,
            ..base
        },
        Manner::Stop { voiced, burst_hz } => {
            let len = seg.end - seg.start;
            let closure_end = seg.start + len * 65 / 100;
            let burst_end = closure_end + (SAMPLE_RATE as usize * 12 / 1000);
            if n < closure_end {
                Targets {
                    voice: if voiced { 0.06 } else { 0.0 },
                    ..base
                }
            } else if n < burst_end {
                Targets {
                    frication: 0.03,
                    frication_hz: burst_hz,
                    frication_bw: 2000.0,
                    ..base
                }
            } else if voiced {
                Targets { voice: 0.15, ..base }
            } else {
                Targets {
                    aspiration: 0.002,
                    formants: [500.0, 1500.0, 2500.0],
                    ..base
                }
            }
        }
    }
}

fn ms_to_samples(ms: u32) -> usize {
    ms as usize * SAMPLE_RATE as usize / 1000
}

/// Renders one random utterance.
pub fn synthesize_utterance(rng: &mut ChaCha8Rng, cfg: &CorpusConfig) -> GeneratedUtterance {
    let fs = SAMPLE_RATE as f64;
    let n_syl = rng.random_range(cfg.min_syllables..=cfg.max_syllables.max(cfg.min_syllables));
    let mut segments = Vec::new();
    let mut cursor = ms_to_samples(rng.random_range(cfg.edge_silence_ms.0..=cfg.edge_silence_ms.1));
    segments.push(Segment {
        phone: None,
        start: 0,
        end: cursor,
    });
    let mut boundaries = Vec::new();
    let mut vowel_mids = Vec::new();
    for _ in 0..n_syl {
        let c = &CONSONANTS[rng.random_range(0..CONSONANTS.len())];
        let v = &VOWELS[rng.random_range(0..VOWELS.len())];
        let c_len = ms_to_samples(rng.random_range(cfg.consonant_ms.0..=cfg.consonant_ms.1));
        let v_len = ms_to_samples(rng.random_range(cfg.vowel_ms.0..=cfg.vowel_ms.1));
        boundaries.push(cursor as f64 * 1000.0 / fs);
        segments.push(Segment {
            phone: Some(c),
            start: cursor,
            end: cursor + c_len,
        });
        cursor += c_len;
        segments.push(Segment {
            phone: Some(v),
            start: cursor,
            end: cursor + v_len,
        });
        vowel_mids.push(cursor + v_len / 2);
        cursor += v_len;
    }
    boundaries.push(cursor as f64 * 1000.0 / fs);
    let tail = ms_to_samples(rng.random_range(cfg.edge_silence_ms.0..=cfg.edge_silence_ms.1));
    segments.push(Segment {
        phone: None,
        start: cursor,
        end: cursor + tail,
    });
    let total = cursor + tail;

    // log-F0 knots at vowel centres: declining baseline plus random accents
    let base = rng.random_range(95.0f64..140.0).ln();
    let accent = Normal::new(0.0, 0.08).expect("valid deviation");
    let mut knots: Vec<(f64, f64)> = vec![(0.0, base + 0.05)];
    for &m in &vowel_mids {
        let decline = -0.15 * m as f64 / total as f64;
        knots.push((m as f64, base + decline + accent.sample(rng)));
    }
    knots.push((total as f64, base - 0.2));
    let log_f0_at = |n: f64| -> f64 {
        let i = knots.partition_point(|k| k.0 <= n).clamp(1, knots.len() - 1);
        let (t0, v0) = knots[i - 1];
        let (t1, v1) = knots[i];
        v0 + (v1 - v0) * ((n - t0) / (t1 - t0)).clamp(0.0, 1.0)
    };

    let noise = Normal::new(0.0, 1.0).expect("unit deviation");
    let smoothing = (-1.0 / (fs * 0.004)).exp();
    let mut phase = 0.0;
    let (mut g1, mut g2, mut prev_glottal) = (0.0, 0.0, 0.0);
    let mut formant_bank: [Resonator; 3] = Default::default();
    let mut frication_res = Resonator::default();
    let (mut voice, mut aspiration, mut frication) = (0.0, 0.0, 0.0);
    let mut samples = Vec::with_capacity(total);
    let mut seg_idx = 0;
    for n in 0..total {
        while segments[seg_idx].end <= n {
            seg_idx += 1;
        }
        let t = targets_at(&segments[seg_idx], n);
        voice = smoothing * voice + (1.0 - smoothing) * t.voice;
        aspiration = smoothing * aspiration + (1.0 - smoothing) * t.aspiration;
        frication = smoothing * frication + (1.0 - smoothing) * t.frication;

        let f0 = log_f0_at(n as f64).exp();
        phase += f0 / fs;
        let pulse = if phase >= 1.0 {
            phase -= 1.0;
            1.0
        } else {
            0.0
        };
        // double-pole glottal low-pass, then lip radiation
        let glottal = pulse * 0.03f64.powi(2) + 1.94 * g1 - 0.9409 * g2;
        g2 = g1;
        g1 = glottal;
        let radiated = (glottal - prev_glottal) * 40.0;
        prev_glottal = glottal;

        let mut x = voice * radiated + aspiration * noise.sample(rng);
        for (k, res) in formant_bank.iter_mut().enumerate() {
            x = res.step(x, t.formants[k], t.bandwidths[k]);
        }
        let fric_gain = 1.0 / resonator_peak_gain(t.frication_hz, t.frication_bw);
        let fric = frication_res.step(frication * noise.sample(rng), t.frication_hz, t.frication_bw) * fric_gain;
        samples.push(x + fric);
    }

    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs())).max(1e-12);
    let floor = Normal::new(0.0, 1e-4).expect("valid deviation");
    let samples: Vec<f64> = samples
        .iter()
        .map(|s| (0.7 * s / peak + floor.sample(rng)).clamp(-1.0, 1.0))
        .collect();

    let labels = segments
        .iter()
        .map(|s| {
            let (phone, classes) = match s.phone {
                Some(p) => (
                    p.symbol.to_string(),
                    phone_classes(p, cfg.scheme).iter().map(|c| c.to_string()).collect(),
                ),
                None => ("sil".to_string(), vec!["silence".to_string()]),
            };
            LabelSegment {
                start_ms: s.start as f64 * 1000.0 / fs,
                end_ms: s.end as f64 * 1000.0 / fs,
                phone,
                classes,
            }
        })
        .collect();
    let f0_hz = (0..total / (SAMPLE_RATE as usize / 100))
        .map(|i| log_f0_at((i * SAMPLE_RATE as usize / 100) as f64).exp())
        .collect();

    GeneratedUtterance {
        clip: AudioClip {
            samples,
            sample_rate: SAMPLE_RATE,
        },
        labels,
        boundaries: BoundarySet { times_ms: boundaries },
        f0_hz,
    }
}

/// Utterance `index` of the corpus described by `cfg`; independent of the
/// other utterances so generation can run in any order.
pub fn generate_utterance(cfg: &CorpusConfig, index: usize) -> GeneratedUtterance {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64));
    synthesize_utterance(&mut rng, cfg)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[LabelSegment]) -> Result<()> {
    let mut text = String::new();
    for l in labels {
        let _ = writeln!(
            text,
            "{:.3} {:.3} {} {}",
            l.start_ms,
            l.end_ms,
            l.phone,
            l.classes.join(",")
        );
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn write_boundaries(path: impl AsRef<Path>, b: &BoundarySet) -> Result<()> {
    let text: String = b.times_ms.iter().map(|t| format!("{t:.3}\n")).collect();
    fs::write(path, text)?;
    Ok(())
}

/// Writes the corpus into `dir` and returns the manifest path.
pub fn generate_corpus(cfg: &CorpusConfig, dir: impl AsRef<Path>) -> Result<PathBuf> {
    use rayon::prelude::*;
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let lines: Vec<String> = (0..cfg.n_utterances)
        .into_par_iter()
        .map(|i| {
            let u = generate_utterance(cfg, i);
            let stem = format!("utt{i:03}");
            u.clip.write_wav(dir.join(format!("{stem}.wav")))?;
            write_labels(dir.join(format!("{stem}.lab")), &u.labels)?;
            write_boundaries(dir.join(format!("{stem}.bnd")), &u.boundaries)?;
            let f0: String = u.f0_hz.iter().map(|f| format!("{f:.2}\n")).collect();
            fs::write(dir.join(format!("{stem}.f0")), f0)?;
            Ok(format!("{stem}.wav\t{stem}.lab\t{stem}.bnd\n"))
        })
        .collect::<Result<_>>()?;
    let manifest = dir.join("manifest.tsv");
    fs::write(&manifest, lines.concat())?;
    Ok(manifest)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|_| Error::config_path("cannot read file", path))
}

fn parse_ms(token: &str, path: &Path) -> Result<f64> {
    token
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::config_path(format!("bad time value '{token}'"), path))
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<LabelSegment>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for line in read_text(path)?.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let (phone, classes) = match fields.len() {
            3 => ("", fields[2]),
            4 => (fields[2], fields[3]),
            _ => return Err(Error::config_path(format!("bad label line '{line}'"), path)),
        };
        out.push(LabelSegment {
            start_ms: parse_ms(fields[0], path)?,
            end_ms: parse_ms(fields[1], path)?,
            phone: phone.to_string(),
            classes: classes.split(',').filter(|c| !c.is_empty()).map(String::from).collect(),
        });
    }
    Ok(out)
}

pub fn read_boundaries(path: impl AsRef<Path>) -> Result<BoundarySet> {
    let path = path.as_ref();
    let times = read_text(path)?
        .split_whitespace()
        .map(|t| parse_ms(t, path))
        .collect::<Result<Vec<_>>>()?;
    BoundarySet::new(times).map_err(|_| Error::config_path("boundaries must be strictly increasing", path))
}

#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub wav: PathBuf,
    pub labels: Vec<LabelSegment>,
    pub boundaries: BoundarySet,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<CorpusEntry>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for line in read_text(path)?.lines() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::config_path(
                format!("manifest line needs 3 tab-separated fields: '{line}'"),
                path,
            ));
        }
        entries.push(CorpusEntry {
            wav: base.join(fields[0]),
            labels: read_labels(base.join(fields[1]))?,
            boundaries: read_boundaries(base.join(fields[2]))?,
        });
    }
    if entries.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(entries)
}

/// Target pattern of each frame: the classes of the segment containing the
/// frame centre (the last segment for frames past the end).
pub fn frame_labels(
    labels: &[LabelSegment],
    grid: &FrameGrid,
    n_frames: usize,
    class_names: &[String],
) -> Result<Vec<Pattern>> {
    if labels.is_empty() {
        return Err(Error::config("utterance has no labels"));
    }
    let patterns = labels
        .iter()
        .map(|seg| {
            let bits = seg
                .classes
                .iter()
                .map(|c| {
                    class_names
                        .iter()
                        .position(|n| n == c)
                        .ok_or_else(|| Error::config(format!("label class '{c}' is not in the class list")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Pattern(bits.iter().fold(0u32, |acc, &k| acc | (1 << k))))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..n_frames)
        .map(|i| {
            let t = grid.frame_center_ms(i);
            let idx = labels.iter().position(|s| t < s.end_ms).unwrap_or(labels.len() - 1);
            patterns[idx]
        })
        .collect())
}
