use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use sffkit::audio::load_manifest;
use sffkit::harness::{
    compare_features, extract_all, fit_final_model, parse_c_grid, read_feature_csv, run_loso_on_rows,
    write_report, FeatureFileMeta,
};
use sffkit::synth::{write_corpus, SynthSpec};
use sffkit::{ExperimentConfig, FeatureKind, TaskFilter};

#[derive(Parser)]
#[command(name = "sffkit", version, about = "Speech severity classification with SFF features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Stft,
    Sff,
}

#[derive(Subcommand)]
enum Command {
    /// Extract mean-pooled features for every recording in a manifest.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        /// mfcc, sffcc or mfcc-sff
        #[arg(long)]
        features: String,
        /// vowel, sentence, read_text or all
        #[arg(long, default_value = "all")]
        task: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Skip unreadable recordings instead of failing.
        #[arg(long)]
        skip_failed: bool,
    },
    /// Leave-one-speaker-out evaluation of a feature file.
    Evaluate {
        #[arg(long)]
        features_file: PathBuf,
        /// `lo..hi` in decades, or a comma-separated list
        #[arg(long, default_value = "1e-4..1e4")]
        grid: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate several feature kinds on one manifest; the first is the baseline.
    Compare {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "mfcc,sffcc,mfcc-sff")]
        kinds: Vec<String>,
        #[arg(long, default_value = "all")]
        task: String,
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a magnitude spectrogram of one recording as CSV with a JSON sidecar.
    Spectrogram {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.03)]
        window_s: f64,
        #[arg(long, default_value_t = 0.01)]
        hop_s: f64,
    },
    /// Generate a synthetic three-class corpus with a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        speakers_per_class: usize,
        #[arg(long, default_value_t = 3)]
        utterances_per_speaker: usize,
        #[arg(long, default_value_t = 0.5)]
        duration_s: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load_json(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn sidecar_of(features_file: &Path) -> PathBuf {
    features_file.with_extension("json")
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract {
            manifest,
            features,
            task,
            config,
            out,
            skip_failed,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            cfg.feature_kind = features.parse()?;
            cfg.task = task.parse()?;
            cfg.skip_failed_files |= skip_failed;
            let manifest = load_manifest(&manifest)?;
            let path = extract_all(&manifest, &cfg, &out)?;
            println!("{}", path.display());
        }
        Command::Evaluate {
            features_file,
            grid,
            config,
            out,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            cfg.c_grid = parse_c_grid(&grid)?;
            let sidecar = sidecar_of(&features_file);
            if sidecar.exists() {
                let meta: FeatureFileMeta = serde_json::from_str(
                    &fs::read_to_string(&sidecar).with_context(|| format!("reading {}", sidecar.display()))?,
                )?;
                cfg.feature_kind = meta.feature_kind;
                cfg.task = meta.task;
                cfg.features = meta.features;
                cfg.sff = meta.sff;
            }
            let rows = read_feature_csv(&features_file)?;
            if rows.is_empty() {
                bail!("{} has no rows", features_file.display());
            }
            let report = run_loso_on_rows(&rows, &cfg)?;
            write_report(&report, &out)?;
            let model = fit_final_model(&rows, &cfg)?;
            model.save_json(out.join("model.json"))?;
            print!("{}", fs::read_to_string(out.join("table.txt"))?);
        }
        Command::Compare {
            manifest,
            kinds,
            task,
            grid,
            config,
            out,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            cfg.task = task.parse::<TaskFilter>()?;
            if let Some(g) = grid {
                cfg.c_grid = parse_c_grid(&g)?;
            }
            let kinds = kinds
                .iter()
                .map(|k| k.parse::<FeatureKind>())
                .collect::<sffkit::Result<Vec<_>>>()?;
            let manifest = load_manifest(&manifest)?;
            let cmp = compare_features(&manifest, &kinds, &cfg)?;
            cmp.write(&out)?;
            print!("{}", cmp.render());
        }
        Command::Spectrogram {
            wav,
            method,
            out,
            window_s,
            hop_s,
        } => {
            let sig = sffkit::audio::load_wav(&wav)?;
            let spec = match method {
                Method::Stft => sffkit::transforms::stft_magnitude(&sig, window_s, hop_s)?,
                Method::Sff => sffkit::sff::sff_spectrogram(&sig, &sffkit::SffConfig::default(), hop_s)?,
            };
            let sidecar = spec.write_csv(&out)?;
            println!("{} {}", out.display(), sidecar.display());
        }
        Command::Synth {
            out,
            speakers_per_class,
            utterances_per_speaker,
            duration_s,
            seed,
        } => {
            let spec = SynthSpec {
                speakers_per_class,
                utterances_per_speaker,
                duration_s,
                seed,
                ..SynthSpec::default()
            };
            println!("{}", write_corpus(&out, &spec)?.display());
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        log::error!("{e:#}");
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
