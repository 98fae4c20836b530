//! Command-line front end: corpus generation, feature extraction, encoder
//! pretraining, conversion training, zero-shot conversion, and speaker
//! similarity evaluation, all driven by one TOML configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use revox_core::config::RunConfig;
use revox_core::convert::{ConversionPipeline, ConversionRequest, VocoderMode};
use revox_core::corpus::make_toy_corpus;
use revox_core::dsp::{load_and_resample, mel_spectrogram, trim_silence, write_feature};
use revox_core::encoders::{ToyContentEncoder, ToySpeakerEncoder};
use revox_core::error::{Error, Result};
use revox_core::evaluation::{
    build_three_condition_report, emit_plots, ConvertedUtterance, Enrollment,
    EnrollmentUtterance, PlotGroup,
};
use revox_core::seeds::{self, tag};
use revox_core::training::{load_dataset, read_manifest, train};

#[derive(Parser)]
#[command(
    name = "revox",
    version,
    about = "Zero-shot voice conversion via supervised speaker-information removal"
)]
struct Cli {
    /// Run configuration file (TOML); defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the training seed (shorthand for --set training.seed=N).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Dotted-path value overrides, e.g. --set training.lambda_spk=0
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Print the fully materialized configuration and exit.
    #[arg(long, global = true)]
    echo_config: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write Mel feature files for every utterance in a manifest.
    ExtractFeatures {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain the bundled toy content and speaker encoders on a corpus.
    PretrainEncoders {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the conversion model.
    Train {
        /// Dataset manifest; falls back to training.dataset_manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Resume from a checkpoint written by an earlier run of the same
        /// configuration.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Convert a source utterance toward one or more target references.
    Convert {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        source: PathBuf,
        /// Target reference audio; repeat for multi-reference averaging.
        #[arg(long = "target", required = true)]
        targets: Vec<PathBuf>,
        /// Output path stem; writes <out>.f32 (+ sidecar) and optionally <out>.wav.
        #[arg(long)]
        out: PathBuf,
        /// griffin_lim | external | none (default from configuration).
        #[arg(long)]
        vocoder: Option<String>,
        /// Command template for --vocoder external, with {mel} and {wav}.
        #[arg(long)]
        vocoder_cmd: Option<String>,
    },
    /// Score speaker similarity in three conditions and emit plots.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Corpus manifest providing enrollment utterances per speaker.
        #[arg(long)]
        corpus: PathBuf,
        /// Scoring encoder: a toy speaker-encoder checkpoint, or a directory
        /// of precomputed <utterance_id>.emb files. Defaults to the
        /// encoder named in the configuration.
        #[arg(long)]
        encoder: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the deterministic synthetic multi-speaker corpus.
    MakeToyCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        speakers: usize,
        #[arg(long, default_value_t = 5)]
        utts: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    for assignment in &cli.overrides {
        cfg = cfg.apply_override(assignment)?;
    }
    if let Some(seed) = cli.seed {
        cfg = cfg.apply_override(&format!("training.seed={seed}"))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = build_config(&cli)?;
    if cli.echo_config {
        println!("{}", cfg.to_toml());
        return Ok(());
    }
    match &cli.command {
        Command::ExtractFeatures { manifest, out } => extract_features(&cfg, manifest, out),
        Command::PretrainEncoders { manifest, out } => pretrain_encoders(&cfg, manifest, out),
        Command::Train { manifest, out, resume } => {
            train_cmd(&cfg, manifest.as_deref(), out, resume.as_deref())
        }
        Command::Convert { checkpoint, source, targets, out, vocoder, vocoder_cmd } => {
            convert_cmd(&cfg, checkpoint, source, targets, out, vocoder.as_deref(), vocoder_cmd.clone())
        }
        Command::Evaluate { checkpoint, corpus, encoder, out } => {
            evaluate_cmd(&cfg, checkpoint, corpus, encoder.as_deref(), out)
        }
        Command::MakeToyCorpus { out, speakers, utts } => {
            let seed = cli.seed.unwrap_or(7);
            let manifest = make_toy_corpus(out, *speakers, *utts, seed)?;
            println!("manifest: {}", manifest.display());
            Ok(())
        }
    }
}

fn extract_features(cfg: &RunConfig, manifest: &Path, out: &Path) -> Result<()> {
    let entries = read_manifest(manifest)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mel_cfg = cfg.dsp.mel();
    let trim_cfg = cfg.dsp.trim();
    for entry in &entries {
        let wav = if entry.wav_path.is_absolute() {
            entry.wav_path.clone()
        } else {
            base.join(&entry.wav_path)
        };
        let wave = load_and_resample(&wav, mel_cfg.sample_rate)?;
        let trimmed = trim_silence(&wave, &trim_cfg);
        let mel = mel_spectrogram(&trimmed.waveform, &mel_cfg)?;
        write_feature(&out.join(format!("{}.f32", entry.utterance_id)), &mel)?;
    }
    println!("features: {} utterances -> {}", entries.len(), out.display());
    Ok(())
}

fn pretrain_encoders(cfg: &RunConfig, manifest: &Path, out: &Path) -> Result<()> {
    let entries = read_manifest(manifest)?;
    if entries.is_empty() {
        return Err(Error::Validation("manifest lists no utterances".into()));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mel_cfg = cfg.dsp.mel();
    let trim_cfg = cfg.dsp.trim();

    let mut speakers: Vec<String> = entries.iter().map(|e| e.speaker_id.clone()).collect();
    speakers.sort();
    speakers.dedup();

    let mut mels = Vec::new();
    let mut labeled = Vec::new();
    for entry in &entries {
        let wav = if entry.wav_path.is_absolute() {
            entry.wav_path.clone()
        } else {
            base.join(&entry.wav_path)
        };
        let wave = load_and_resample(&wav, mel_cfg.sample_rate)?;
        let trimmed = trim_silence(&wave, &trim_cfg);
        let mel = mel_spectrogram(&trimmed.waveform, &mel_cfg)?;
        let spk_index = speakers.iter().position(|s| *s == entry.speaker_id).unwrap();
        mels.push(mel.clone());
        labeled.push((mel, spk_index));
    }

    let pt = &cfg.encoders.pretrain;
    let mut content =
        ToyContentEncoder::new(&cfg.encoders.arch, seeds::derive(pt.seed, &[tag::CONTENT_PRETRAIN]));
    let curve = content.pretrain(
        &mels,
        pt.content_steps,
        pt.batch_size,
        seeds::derive(pt.seed, &[tag::CONTENT_PRETRAIN, 1]),
    );
    eprintln!(
        "content encoder: {} steps, reconstruction {:.4} -> {:.4}",
        pt.content_steps,
        curve.first().copied().unwrap_or(0.0),
        curve.last().copied().unwrap_or(0.0)
    );

    let mut speaker =
        ToySpeakerEncoder::new(&cfg.encoders.arch, seeds::derive(pt.seed, &[tag::SPEAKER_PRETRAIN]));
    let curve = speaker.pretrain(
        &labeled,
        speakers.len(),
        pt.speaker_steps,
        pt.batch_size,
        seeds::derive(pt.seed, &[tag::SPEAKER_PRETRAIN, 1]),
    );
    eprintln!(
        "speaker encoder: {} steps over {} speakers, cross-entropy {:.4} -> {:.4}",
        pt.speaker_steps,
        speakers.len(),
        curve.first().copied().unwrap_or(0.0),
        curve.last().copied().unwrap_or(0.0)
    );

    let content_path = out.join("content.enc");
    let speaker_path = out.join("speaker.enc");
    content.save(&content_path)?;
    speaker.save(&speaker_path)?;
    println!("content encoder: {}", content_path.display());
    println!("speaker encoder: {}", speaker_path.display());
    Ok(())
}

fn train_cmd(
    cfg: &RunConfig,
    manifest: Option<&Path>,
    out: &Path,
    resume: Option<&Path>,
) -> Result<()> {
    let manifest = manifest
        .map(Path::to_path_buf)
        .or_else(|| cfg.training.dataset_manifest.clone())
        .ok_or_else(|| {
            Error::Validation(
                "no dataset manifest: pass --manifest or set training.dataset_manifest".into(),
            )
        })?;

    let content = cfg.encoders.content.load_content(&cfg.encoders.arch)?;
    let speaker = cfg.encoders.speaker.load_speaker_toy()?;
    let data = load_dataset(&manifest, &cfg.dsp.mel(), &cfg.dsp.trim(), &content, &speaker)?;
    eprintln!("dataset: {} utterances from {}", data.len(), manifest.display());

    let outcome = train(
        &cfg.training,
        &cfg.model,
        &data,
        &content,
        &speaker,
        out,
        &cfg.hash(),
        resume,
        |m| {
            if m.step == 1 || m.step % 25 == 0 {
                eprintln!(
                    "step {:>6}  total {:>9.4}  recon_postnet {:>9.4}  mid_spk {:>8.4}  ({:.0} ms)",
                    m.step, m.losses.total, m.losses.l_recon_postnet, m.losses.l_mid_spk, m.wall_time_ms
                );
            }
        },
    )?;
    println!("checkpoint: {}", outcome.checkpoint_path.display());
    println!("metrics: {}", outcome.metrics_path.display());
    Ok(())
}

fn parse_vocoder(name: &str) -> Result<VocoderMode> {
    match name {
        "griffin_lim" => Ok(VocoderMode::GriffinLim),
        "external" => Ok(VocoderMode::External),
        "none" => Ok(VocoderMode::None),
        other => Err(Error::Validation(format!(
            "unknown vocoder '{other}' (expected griffin_lim, external, or none)"
        ))),
    }
}

fn convert_cmd(
    cfg: &RunConfig,
    checkpoint: &Path,
    source: &Path,
    targets: &[PathBuf],
    out: &Path,
    vocoder: Option<&str>,
    vocoder_cmd: Option<String>,
) -> Result<()> {
    let (pipeline, _manifest) = ConversionPipeline::load(checkpoint, cfg, false)?;
    let mode = match vocoder {
        Some(name) => parse_vocoder(name)?,
        None => cfg.inference.vocoder,
    };
    let request = ConversionRequest {
        source_wav: source.to_path_buf(),
        target_reference_wavs: targets.to_vec(),
        output: out.to_path_buf(),
        vocoder: mode,
        vocoder_command: vocoder_cmd.or_else(|| cfg.inference.vocoder_command.clone()),
        griffin_lim_iterations: cfg.inference.griffin_lim_iterations,
    };
    let output = pipeline.convert(&request)?;
    println!("mel: {} ({} frames)", output.feature_path.display(), output.mel.num_frames());
    if let Some(wav) = output.wav_path {
        println!("wav: {}", wav.display());
    }
    Ok(())
}

fn evaluate_cmd(
    cfg: &RunConfig,
    checkpoint: &Path,
    corpus: &Path,
    encoder: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let (pipeline, _manifest) = ConversionPipeline::load(checkpoint, cfg, false)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    // Scoring adapter: defaults to the configured speaker encoder; a
    // directory selects the file-backed adapter, a file a toy checkpoint.
    enum Scorer {
        Toy(ToySpeakerEncoder),
        External(revox_core::encoders::ExternalSpeakerAdapter),
    }
    let scorer = match encoder {
        None => Scorer::Toy(cfg.encoders.speaker.load_speaker_toy()?),
        Some(path) if path.is_dir() => Scorer::External(
            revox_core::encoders::ExternalSpeakerAdapter::new(path.to_path_buf()),
        ),
        Some(path) => Scorer::Toy(ToySpeakerEncoder::load(path)?),
    };

    let entries = read_manifest(corpus)?;
    if entries.is_empty() {
        return Err(Error::Validation("evaluation corpus is empty".into()));
    }
    let base = corpus.parent().unwrap_or(Path::new("."));

    // Load all corpus audio once.
    let mut mels = Vec::new();
    for entry in &entries {
        let wav = if entry.wav_path.is_absolute() {
            entry.wav_path.clone()
        } else {
            base.join(&entry.wav_path)
        };
        mels.push(pipeline.load_mel(&wav)?);
    }

    // Enrollment embeddings under the scoring encoder.
    let mut enrollment = Enrollment::new();
    for (entry, mel) in entries.iter().zip(&mels) {
        let embedding = match &scorer {
            Scorer::Toy(enc) => enc.embed(mel)?,
            Scorer::External(ext) => ext.embed(&entry.utterance_id)?,
        };
        enrollment.entry(entry.speaker_id.clone()).or_default().push(EnrollmentUtterance {
            utterance_id: entry.utterance_id.clone(),
            embedding,
        });
    }
    let speakers: Vec<String> = enrollment.keys().cloned().collect();

    // Conditioning embeddings under the model's own speaker encoder.
    let mut conditioning: BTreeMap<String, revox_core::encoders::SpeakerEmbedding> =
        BTreeMap::new();
    for speaker in &speakers {
        let embs: Vec<_> = entries
            .iter()
            .zip(&mels)
            .filter(|(e, _)| &e.speaker_id == speaker)
            .map(|(_, mel)| pipeline.speaker.embed(mel))
            .collect::<Result<_>>()?;
        conditioning
            .insert(speaker.clone(), revox_core::encoders::average_speaker_embedding(&embs)?);
    }

    // Convert every utterance toward every other speaker; score the results
    // when the scoring encoder can embed generated audio.
    let mut converted = Vec::new();
    match &scorer {
        Scorer::Toy(enc) => {
            for (entry, mel) in entries.iter().zip(&mels) {
                for target in speakers.iter().filter(|s| **s != entry.speaker_id) {
                    let mel_out =
                        pipeline.convert_mel(&entry.utterance_id, mel, &conditioning[target])?;
                    let embedding = enc.embed(&mel_out)?;
                    converted.push(ConvertedUtterance {
                        utterance_id: format!("{}->{}", entry.utterance_id, target),
                        target_speaker: target.clone(),
                        embedding,
                    });
                }
            }
        }
        Scorer::External(_) => {
            eprintln!(
                "note: file-backed scoring encoder cannot embed generated audio; \
                 reporting the two reference conditions only"
            );
        }
    }

    let report = build_three_condition_report(&converted, &enrollment, &cfg.evaluation.histogram)?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }

    let report_path = out.join("report.json");
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::json(&report_path, e))?;
    std::fs::write(&report_path, json).map_err(|e| Error::io(&report_path, e))?;

    let group = PlotGroup { name: "three_conditions".into(), summaries: report.summaries.clone() };
    let written = emit_plots(&[group], out)?;

    for summary in &report.summaries {
        println!(
            "{}: n={} mean={:.4} std={:.4}",
            summary.condition, summary.count, summary.mean, summary.std
        );
    }
    if let Some(t) = &report.threshold {
        println!(
            "threshold: eer={:.4} at {:.4}, separation={:.4}",
            t.eer, t.eer_threshold, t.separation
        );
    }
    println!("report: {}", report_path.display());
    for p in written {
        println!("plot: {}", p.display());
    }
    Ok(())
}
