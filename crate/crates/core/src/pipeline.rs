//! Encoder, decoder and trainer built from the codec stages.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{AudioClip, SAMPLE_RATE};
use crate::bitstream::{measure_bitrate, pack, unpack, BitRateReport, BitstreamContainer};
use crate::config::CodecConfig;
use crate::corpus::{frame_labels, load_manifest};
use crate::error::{Error, Result};
use crate::frontend::{compute_mfcc, extract_continuous_f0, frame_signal, stack_context, F0Track, FrameGrid};
use crate::metrics::{latency_report, mcd, stoi, QualityReport};
use crate::neural::io::{load_bank, save_bank};
use crate::neural::{analyze, binarize, train_bank, AnalyzerBank, Pattern, PosteriorFrame, TrainConfig, TrainingLog};
use crate::prosody::{
    build_prosodic_codebooks, decode_prosody, quantize_syllables, segment_prosody, ProsodicCodebook, ProsodyContour,
};
use crate::segcodec::{build_codebook, decode_segmental, encode_segmental, SegmentalCodebook};
use crate::snn::{
    boundary_f_score, detect_syllables, train_snn, BoundarySet, LabeledUtterance, SnnParams, SnnTrainReport,
};
use crate::synthesis::{
    extract_speech_params, synth_forward, train_synthesis, vocode, SpeechParams, SynthesisNet, SYNTH_CONTEXT,
};

/// Frames of MFCC context fed to each analyzer (centre +-4).
pub const ANALYZER_CONTEXT: usize = 9;
/// Boundary matching tolerance reported after training.
pub const BOUNDARY_TOLERANCE_MS: f64 = 50.0;

/// Trained artifacts of one profile.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecModels {
    pub bank: AnalyzerBank,
    pub synthesizer: SynthesisNet,
    pub segmental: SegmentalCodebook,
    pub prosodic: ProsodicCodebook,
    pub snn: SnnParams,
}

fn require(path: &Path) -> Result<&Path> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::config_path("missing model file", path))
    }
}

fn check_scheme(cfg: &CodecConfig, bank: &AnalyzerBank, segmental: &SegmentalCodebook) -> Result<()> {
    let path = cfg.paths.analyzer_path();
    if bank.scheme != cfg.scheme || bank.class_names != cfg.class_names {
        return Err(Error::config_path(
            "analyzer bank was trained for another scheme or class order",
            path,
        ));
    }
    if segmental.scheme() != cfg.scheme || segmental.k() != cfg.class_names.len() {
        return Err(Error::config_path(
            "segmental codebook was built for another scheme",
            cfg.paths.segmental_codebook_path(),
        ));
    }
    Ok(())
}

impl CodecModels {
    pub fn load(cfg: &CodecConfig) -> Result<Self> {
        let p = &cfg.paths;
        let k = cfg.class_names.len();
        let bank = load_bank(require(&p.analyzer_path())?)?;
        let segmental = SegmentalCodebook::load(require(&p.segmental_codebook_path())?)?;
        // scheme errors take precedence over the synthesizer's shape check
        check_scheme(cfg, &bank, &segmental)?;
        let models = Self {
            bank,
            synthesizer: SynthesisNet::load(require(&p.synthesizer_path())?, k)?,
            segmental,
            prosodic: ProsodicCodebook::load(require(&p.prosodic_codebook_path())?)?,
            snn: SnnParams::load(require(&p.snn_path())?)?,
        };
        Ok(models)
    }

    /// Fails unless the artifacts were trained for `cfg`'s scheme and class
    /// order.
    pub fn check(&self, cfg: &CodecConfig) -> Result<()> {
        check_scheme(cfg, &self.bank, &self.segmental)
    }

    pub fn save(&self, cfg: &CodecConfig) -> Result<()> {
        let p = &cfg.paths;
        fs::create_dir_all(&p.dir)?;
        save_bank(&self.bank, p.analyzer_path())?;
        self.synthesizer.save(p.synthesizer_path())?;
        self.segmental.save(p.segmental_codebook_path())?;
        self.prosodic.save(p.prosodic_codebook_path())?;
        self.snn.save(p.snn_path())?;
        Ok(())
    }

    /// Every artifact file written by [`CodecModels::save`].
    pub fn artifact_paths(cfg: &CodecConfig) -> Vec<PathBuf> {
        let p = &cfg.paths;
        vec![
            p.analyzer_path(),
            p.synthesizer_path(),
            p.segmental_codebook_path(),
            p.prosodic_codebook_path(),
            p.snn_path(),
            p.training_log_path(),
        ]
    }
}

/// The clip at the codec sample rate.
pub fn codec_rate(clip: &AudioClip) -> AudioClip {
    if clip.sample_rate == SAMPLE_RATE {
        clip.clone()
    } else {
        clip.resampled(SAMPLE_RATE)
    }
}

/// Acoustic features of one utterance.
#[derive(Debug, Clone)]
pub struct FrontEnd {
    /// Mean-normalized MFCC statics, the boundary detector input.
    pub cepstra: Vec<Vec<f64>>,
    /// 39-dimensional MFCCs stacked over the analyzer context.
    pub stacked: Vec<Vec<f64>>,
}

pub fn front_end(clip: &AudioClip, grid: &FrameGrid) -> FrontEnd {
    let mfcc = compute_mfcc(&frame_signal(clip, grid), clip.sample_rate);
    FrontEnd {
        cepstra: mfcc.statics(),
        stacked: stack_context(&mfcc.frames, ANALYZER_CONTEXT),
    }
}

fn too_short(clip: &AudioClip, grid: &FrameGrid) -> Result<()> {
    if grid.n_frames(clip.len()) < 2 {
        return Err(Error::TooShort(format!(
            "{:.1} ms of audio, need at least two {} ms frames",
            clip.duration_ms(),
            grid.shift_ms
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Encoded {
    pub container: BitstreamContainer,
    pub bytes: Vec<u8>,
    pub report: BitRateReport,
}

/// Analysis, binarization and segmental coding in parallel with F0
/// extraction, boundary detection and prosodic coding, then packing.
pub fn encode(models: &CodecModels, cfg: &CodecConfig, clip: &AudioClip) -> Result<Encoded> {
    let clip = codec_rate(clip);
    let grid = cfg.grid()?;
    too_short(&clip, &grid)?;
    let f0 = extract_continuous_f0(&clip, &grid, &cfg.pitch)?;
    let fe = front_end(&clip, &grid);

    let patterns: Vec<Pattern> = analyze(&models.bank, &fe.stacked)?.iter().map(binarize).collect();
    let blocks = encode_segmental(&patterns, &models.segmental);

    let boundaries = detect_syllables(&fe.cepstra, grid.shift_ms as f64, &models.snn)?;
    let codes = quantize_syllables(&segment_prosody(&f0, &boundaries, &grid)?, &models.prosodic);

    let index_bits = models.segmental.index_bits();
    let container = BitstreamContainer::new(
        cfg.scheme.id(),
        cfg.frame_shift_ms as u8,
        index_bits as u8,
        (models.segmental.hash(), models.prosodic.hash()),
        blocks,
        codes,
    );
    let bytes = pack(&container)?;
    let report = measure_bitrate(&container.blocks, &container.codes, clip.duration_s(), index_bits);
    Ok(Encoded {
        container,
        bytes,
        report,
    })
}

pub fn decode(models: &CodecModels, cfg: &CodecConfig, bytes: &[u8]) -> Result<AudioClip> {
    decode_container(models, cfg, &unpack(bytes)?)
}

/// Segmental and prosodic decoding followed by synthesis. The output spans
/// the encoded frames, so it matches the input duration to within a frame.
pub fn decode_container(models: &CodecModels, cfg: &CodecConfig, stream: &BitstreamContainer) -> Result<AudioClip> {
    stream.check_codebooks(models.segmental.hash(), models.prosodic.hash())?;
    let h = &stream.header;
    if h.scheme_id != cfg.scheme.id() || u32::from(h.frame_shift_ms) != cfg.frame_shift_ms {
        return Err(Error::config(format!(
            "stream uses scheme id {} at {} ms, profile '{}' is scheme id {} at {} ms",
            h.scheme_id,
            h.frame_shift_ms,
            cfg.profile,
            cfg.scheme.id(),
            cfg.frame_shift_ms
        )));
    }
    let grid = cfg.grid()?;
    let k = cfg.class_names.len();
    let features: Vec<Vec<f64>> = decode_segmental(&stream.blocks, &models.segmental)?
        .iter()
        .map(|p| p.to_features(k))
        .collect();
    if !features.is_empty() && stream.codes.is_empty() {
        return Err(Error::CorruptStream("segmental frames without prosody".into()));
    }
    let contour = decode_prosody(&stream.codes, &models.prosodic)?;
    let f0 = contour.to_f0_track(&grid, features.len());
    synthesize(models, cfg, &features, &f0)
}

/// Renders per-frame posteriors (binary or continuous) with an F0 track.
pub fn synthesize(models: &CodecModels, cfg: &CodecConfig, posteriors: &[Vec<f64>], f0: &F0Track) -> Result<AudioClip> {
    let grid = cfg.grid()?;
    let params = synth_forward(&models.synthesizer, &stack_context(posteriors, SYNTH_CONTEXT))?;
    vocode(&params, f0, &grid, &cfg.vocoder)
}

/// MCD and STOI of `test` against `reference`, plus the rate and latency
/// of `stream` over `duration_s` (the reference duration by default).
pub fn quality_report(
    audio: Option<(&AudioClip, &AudioClip)>,
    stream: Option<&BitstreamContainer>,
    duration_s: Option<f64>,
) -> Result<QualityReport> {
    let (mcd_db, stoi_score) = match audio {
        Some((r, t)) => {
            let (r, t) = (codec_rate(r), codec_rate(t));
            (Some(mcd(&r, &t)?), Some(stoi(&r, &t)?))
        }
        None => (None, None),
    };
    let (bitrate, mean_syllable_ms) = match stream {
        Some(s) => {
            let d = duration_s
                .or(audio.map(|(r, _)| r.duration_s()))
                .ok_or_else(|| Error::config("a bit-rate report needs the reference audio or an explicit duration"))?;
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::config("duration must be positive"));
            }
            let rate = measure_bitrate(&s.blocks, &s.codes, d, u32::from(s.header.index_bits));
            (Some(rate), Some(latency_report(&s.codes)?))
        }
        None => (None, None),
    };
    Ok(QualityReport {
        mcd_db,
        stoi: stoi_score,
        bitrate,
        mean_syllable_ms,
    })
}

/// Per-utterance training material.
struct Prepared {
    front: FrontEnd,
    labels: Vec<Pattern>,
    f0: F0Track,
    params: SpeechParams,
    reference: BoundarySet,
}

fn prepare(
    cfg: &CodecConfig,
    grid: &FrameGrid,
    wav: &Path,
    labels: &[crate::corpus::LabelSegment],
    reference: &BoundarySet,
) -> Result<Prepared> {
    let clip = codec_rate(&AudioClip::read_wav(wav)?);
    too_short(&clip, grid)?;
    let n = grid.n_frames(clip.len());
    let f0 = extract_continuous_f0(&clip, grid, &cfg.pitch)?;
    Ok(Prepared {
        front: front_end(&clip, grid),
        labels: frame_labels(labels, grid, n, &cfg.class_names)?,
        params: extract_speech_params(&clip, grid, &f0)?,
        f0,
        reference: reference.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub profile: String,
    pub seed: u64,
    pub utterances: usize,
    pub frames: usize,
    pub analyzer_logs: Vec<TrainingLog>,
    pub synthesizer_log: TrainingLog,
    pub snn: SnnTrainReport,
    /// Boundary F-score of the trained detector on the training corpus.
    pub snn_f_score: f64,
    pub segmental_codebook_size: usize,
    pub index_bits: u32,
    pub syllables: usize,
}

fn derived(cfg: &TrainConfig, seed: u64, stream: u64) -> TrainConfig {
    TrainConfig {
        seed: seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stream),
        ..cfg.clone()
    }
}

/// Trains every artifact from the utterances listed in `manifest`.
///
/// Order: analyzer bank on frame labels; segmental codebook from its
/// binarized outputs; synthesis network from its continuous outputs to
/// the analysed speech parameters; boundary detector on the reference
/// boundaries; prosodic codebooks from the detector's segmentation.
pub fn train(cfg: &CodecConfig, manifest: &Path) -> Result<(CodecModels, TrainingReport)> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let entries = load_manifest(manifest)?;
    let corpus: Vec<Prepared> = entries
        .par_iter()
        .map(|e| prepare(cfg, &grid, &e.wav, &e.labels, &e.boundaries))
        .collect::<Result<_>>()?;

    let frames: usize = corpus.iter().map(|u| u.labels.len()).sum();
    let dim = corpus[0].front.stacked[0].len();
    let mut inputs = Array2::zeros((frames, dim));
    for (mut row, x) in inputs
        .rows_mut()
        .into_iter()
        .zip(corpus.iter().flat_map(|u| &u.front.stacked))
    {
        row.assign(&ndarray::ArrayView1::from(x.as_slice()));
    }
    let labels: Vec<Pattern> = corpus.iter().flat_map(|u| u.labels.iter().copied()).collect();
    let (bank, analyzer_logs) = train_bank(
        cfg.scheme,
        cfg.class_names.clone(),
        &inputs,
        &labels,
        &derived(&cfg.training.analyzer, cfg.seed, 1),
    )?;

    let posteriors: Vec<Vec<PosteriorFrame>> = corpus
        .par_iter()
        .map(|u| analyze(&bank, &u.front.stacked))
        .collect::<Result<_>>()?;
    let binary: Vec<Pattern> = posteriors.iter().flatten().map(binarize).collect();
    let segmental = build_codebook(&binary, cfg.scheme, cfg.class_names.len())?;

    let synth_inputs: Vec<Vec<Vec<f64>>> = posteriors
        .iter()
        .map(|p| {
            let values: Vec<Vec<f64>> = p.iter().map(|f| f.values.clone()).collect();
            stack_context(&values, SYNTH_CONTEXT)
        })
        .collect();
    let targets: Vec<SpeechParams> = corpus.iter().map(|u| u.params.clone()).collect();
    let (synthesizer, synthesizer_log) = train_synthesis(
        &synth_inputs,
        &targets,
        cfg.class_names.len(),
        &derived(&cfg.training.synthesizer, cfg.seed, 2),
    )?;

    let labeled: Vec<LabeledUtterance> = corpus
        .iter()
        .map(|u| LabeledUtterance {
            cepstra: u.front.cepstra.clone(),
            shift_ms: grid.shift_ms as f64,
            reference: u.reference.clone(),
        })
        .collect();
    let snn_seed = derived(&TrainConfig::default(), cfg.seed, 3).seed;
    let (snn, snn_report) = train_snn(&labeled, &cfg.training.snn_init, cfg.training.snn_budget, snn_seed)?;

    let detected: Vec<BoundarySet> = labeled
        .par_iter()
        .map(|u| detect_syllables(&u.cepstra, u.shift_ms, &snn))
        .collect::<Result<_>>()?;
    let pairs: Vec<(BoundarySet, BoundarySet)> = detected
        .iter()
        .cloned()
        .zip(corpus.iter().map(|u| u.reference.clone()))
        .collect();
    let snn_f_score = boundary_f_score(&pairs, BOUNDARY_TOLERANCE_MS);
    let mut coeffs = Vec::new();
    for (u, b) in corpus.iter().zip(&detected) {
        coeffs.extend(segment_prosody(&u.f0, b, &grid)?);
    }
    let prosodic = build_prosodic_codebooks(&coeffs)?;

    let report = TrainingReport {
        profile: cfg.profile.clone(),
        seed: cfg.seed,
        utterances: corpus.len(),
        frames,
        analyzer_logs,
        synthesizer_log,
        snn: snn_report,
        snn_f_score,
        segmental_codebook_size: segmental.len(),
        index_bits: segmental.index_bits(),
        syllables: coeffs.len(),
    };
    let models = CodecModels {
        bank,
        synthesizer,
        segmental,
        prosodic,
        snn,
    };
    Ok((models, report))
}

/// Trains and writes all artifacts plus the training log.
pub fn train_and_save(cfg: &CodecConfig, manifest: &Path) -> Result<TrainingReport> {
    let (models, report) = train(cfg, manifest)?;
    models.save(cfg)?;
    fs::write(
        cfg.paths.training_log_path(),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    Ok(report)
}

/// Distortion of the same utterance decoded four ways, all against the
/// original: continuous or binary posteriors with the original F0, and
/// binary posteriors with unquantized or quantized syllable prosody.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariantDistortion {
    pub continuous: f64,
    pub binary: f64,
    pub unquantized_prosody: f64,
    pub quantized_prosody: f64,
}

pub fn variant_distortion(models: &CodecModels, cfg: &CodecConfig, clip: &AudioClip) -> Result<VariantDistortion> {
    let clip = codec_rate(clip);
    let grid = cfg.grid()?;
    too_short(&clip, &grid)?;
    let f0 = extract_continuous_f0(&clip, &grid, &cfg.pitch)?;
    let fe = front_end(&clip, &grid);
    let k = cfg.class_names.len();

    let posteriors = analyze(&models.bank, &fe.stacked)?;
    let continuous: Vec<Vec<f64>> = posteriors.iter().map(|p| p.values.clone()).collect();
    // binary patterns as the decoder sees them, after the codebook
    let patterns: Vec<Pattern> = posteriors.iter().map(binarize).collect();
    let binary: Vec<Vec<f64>> = decode_segmental(&encode_segmental(&patterns, &models.segmental), &models.segmental)?
        .iter()
        .map(|p| p.to_features(k))
        .collect();

    let boundaries = detect_syllables(&fe.cepstra, grid.shift_ms as f64, &models.snn)?;
    let coeffs = segment_prosody(&f0, &boundaries, &grid)?;
    let n = f0.len();
    let unquantized = ProsodyContour::from_coeffs(coeffs.clone()).to_f0_track(&grid, n);
    let quantized =
        decode_prosody(&quantize_syllables(&coeffs, &models.prosodic), &models.prosodic)?.to_f0_track(&grid, n);

    let score = |post: &[Vec<f64>], f0: &F0Track| -> Result<f64> { mcd(&clip, &synthesize(models, cfg, post, f0)?) };
    Ok(VariantDistortion {
        continuous: score(&continuous, &f0)?,
        binary: score(&binary, &f0)?,
        unquantized_prosody: score(&binary, &unquantized)?,
        quantized_prosody: score(&binary, &quantized)?,
    })
}
