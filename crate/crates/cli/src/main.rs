//! `phonocodec` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use phonocodec::audio::AudioClip;
use phonocodec::bitstream::{measure_bitrate, pack, reference_statistics_stream, unpack};
use phonocodec::config::CodecConfig;
use phonocodec::corpus::{generate_corpus, CorpusConfig};
use phonocodec::pipeline::{decode, encode, quality_report, train_and_save, CodecModels};
use phonocodec::{Error, Result};

#[derive(Parser)]
#[command(name = "phonocodec", version, about = "Very low bit rate phonological speech codec")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Configuration file with codec profiles (built-in profiles if omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Profile name (default: the file's default_profile, else gp16).
    #[arg(long, global = true)]
    profile: Option<String>,
    /// Overrides the profile seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output file or directory of the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Writes a synthetic CV-syllable corpus and its manifest.
    GenerateCorpus {
        #[arg(long, default_value_t = CorpusConfig::default().n_utterances)]
        count: usize,
    },
    /// Trains all model artifacts of the profile from a manifest.
    Train { manifest: PathBuf },
    /// Encodes WAV files into .pvc streams.
    Encode {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Print the bit-rate report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Decodes .pvc streams into WAV files.
    Decode {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Distortion, intelligibility, bit rate and latency.
    Report {
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        stream: Option<PathBuf>,
        /// Seconds of speech the stream covers (default: reference duration).
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Writes a random stream with the reference bit-allocation statistics.
    ReferenceStream {
        #[arg(long, default_value_t = 60.0)]
        duration: f64,
    },
    /// Prints the effective profile as a configuration file.
    ShowConfig,
}

fn load_config(g: &Global) -> Result<CodecConfig> {
    let cfg = CodecConfig::load(g.config.as_deref(), g.profile.as_deref())?;
    Ok(match g.seed {
        Some(seed) => cfg.with_seed(seed),
        None => cfg,
    })
}

/// Output path of input `i`: `--out` itself for a single input, else a
/// file in the `--out` directory (or next to the input).
fn output_path(out: Option<&Path>, inputs: &[PathBuf], input: &Path, ext: &str) -> Result<PathBuf> {
    let name = input.with_extension(ext);
    match out {
        Some(o) if inputs.len() == 1 => Ok(o.to_path_buf()),
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let file = name
                .file_name()
                .ok_or_else(|| Error::config_path("input has no file name", input))?;
            Ok(dir.join(file))
        }
        None => Ok(name),
    }
}

fn read_stream(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|_| Error::config_path("cannot read stream", path))
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(jobs) = g.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| Error::config(e.to_string()))?;
    }
    match cli.command {
        Command::GenerateCorpus { count } => {
            let cfg = load_config(g)?;
            let corpus = CorpusConfig {
                n_utterances: count,
                scheme: cfg.scheme,
                seed: cfg.seed,
                ..CorpusConfig::default()
            };
            let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("corpus"));
            let manifest = generate_corpus(&corpus, &dir)?;
            println!("{count} utterances, manifest {}", manifest.display());
        }
        Command::Train { manifest } => {
            let mut cfg = load_config(g)?;
            if let Some(dir) = &g.out {
                cfg = cfg.with_model_dir(dir);
            }
            let report = train_and_save(&cfg, &manifest)?;
            println!(
                "profile {}: {} utterances, {} frames, codebook {} patterns ({} bits), {} syllables, boundary F {:.3}",
                report.profile,
                report.utterances,
                report.frames,
                report.segmental_codebook_size,
                report.index_bits,
                report.syllables,
                report.snn_f_score
            );
            println!("artifacts in {}", cfg.paths.dir.display());
        }
        Command::Encode { inputs, json } => {
            let cfg = load_config(g)?;
            let models = CodecModels::load(&cfg)?;
            let results: Vec<Result<String>> = inputs
                .par_iter()
                .map(|input| {
                    let clip = AudioClip::read_wav(input)?;
                    let encoded = encode(&models, &cfg, &clip)?;
                    let out = output_path(g.out.as_deref(), &inputs, input, "pvc")?;
                    fs::write(&out, &encoded.bytes)?;
                    Ok(if json {
                        serde_json::to_string_pretty(&encoded.report)?
                    } else {
                        format!(
                            "{} -> {} ({} bytes)\n{}",
                            input.display(),
                            out.display(),
                            encoded.bytes.len(),
                            encoded.report
                        )
                    })
                })
                .collect();
            for r in results {
                println!("{}", r?);
            }
        }
        Command::Decode { inputs } => {
            let cfg = load_config(g)?;
            let models = CodecModels::load(&cfg)?;
            let results: Vec<Result<String>> = inputs
                .par_iter()
                .map(|input| {
                    let clip = decode(&models, &cfg, &read_stream(input)?)?;
                    let out = output_path(g.out.as_deref(), &inputs, input, "wav")?;
                    clip.write_wav(&out)?;
                    Ok(format!(
                        "{} -> {} ({:.3} s)",
                        input.display(),
                        out.display(),
                        clip.duration_s()
                    ))
                })
                .collect();
            for r in results {
                println!("{}", r?);
            }
        }
        Command::Report {
            reference,
            test,
            stream,
            duration,
            json,
        } => {
            let audio = match (reference, test) {
                (Some(r), Some(t)) => Some((AudioClip::read_wav(r)?, AudioClip::read_wav(t)?)),
                (None, None) => None,
                _ => return Err(Error::config("--ref and --test go together")),
            };
            let stream = stream.map(|p| unpack(&read_stream(&p)?)).transpose()?;
            if audio.is_none() && stream.is_none() {
                return Err(Error::config("nothing to report: give --ref/--test and/or --stream"));
            }
            let report = quality_report(audio.as_ref().map(|(r, t)| (r, t)), stream.as_ref(), duration)?;
            if json {
                println!("{}", report.to_json()?);
            } else {
                print!("{report}");
                println!();
            }
        }
        Command::ReferenceStream { duration } => {
            if !(duration > 0.0 && duration.is_finite()) {
                return Err(Error::config("duration must be positive"));
            }
            let stream = reference_statistics_stream(duration, g.seed.unwrap_or(1));
            let out = g.out.clone().unwrap_or_else(|| PathBuf::from("reference.pvc"));
            fs::write(&out, pack(&stream)?)?;
            let rate = measure_bitrate(
                &stream.blocks,
                &stream.codes,
                duration,
                u32::from(stream.header.index_bits),
            );
            println!("{} ({:.1} s)\n{rate}", out.display(), duration);
        }
        Command::ShowConfig => print!("{}", load_config(g)?.to_toml()?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are configuration errors
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
