use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use postgan::generator::DelayBudget;
use postgan::nn::NoiseSource;
use postgan::runtime::{cost_report_text, enhance_file, run_verify, stream_pcm, VerifyOptions};
use postgan::training::{checkpoint_path, generate_corpus, load_dataset, load_inference, CorpusSpec, ExperimentConfig, Trainer};

#[derive(Parser)]
#[command(name = "postgan", version, about = "Coded-speech post-processor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enhance a mono 16 kHz WAV file.
    Enhance {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Enhance raw 16-bit little-endian PCM from stdin to stdout, frame by frame.
    Stream {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Pretrain, then train adversarially.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// TOML experiment file or preset name (desk, full, tiny).
        #[arg(long, default_value = "desk")]
        config: String,
        #[arg(long)]
        outdir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps_pretrain: Option<u64>,
        #[arg(long)]
        steps_adv: Option<u64>,
        /// Resume from this checkpoint instead of starting fresh.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Parameters, complexity and delay of a configuration.
    Report {
        #[arg(long, conflicts_with = "config")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        config: Option<String>,
        #[arg(long)]
        layers: bool,
    },
    /// Run the invariant suite.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override the filter-bank cutoff under test.
        #[arg(long)]
        pqmf_cutoff: Option<f64>,
    },
    /// Write the synthetic paired corpus and its manifest.
    Corpus {
        #[arg(long)]
        outdir: PathBuf,
        #[arg(long, default_value_t = 16)]
        items: usize,
        #[arg(long, default_value_t = 2.0)]
        seconds: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn load_config(arg: &str) -> anyhow::Result<ExperimentConfig> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {arg}"))?;
        Ok(ExperimentConfig::from_toml(&text)?)
    } else {
        Ok(ExperimentConfig::preset(arg)?)
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Enhance { input, output, checkpoint, seed } => {
            let model = load_inference(&checkpoint)?;
            enhance_file(&model, &input, &output, NoiseSource::Seeded(seed))?;
        }
        Command::Stream { checkpoint, seed } => {
            let model = load_inference(&checkpoint)?;
            let mut input = BufReader::new(std::io::stdin().lock());
            let mut output = BufWriter::new(std::io::stdout().lock());
            let stats = stream_pcm(&model, &mut input, &mut output, NoiseSource::Seeded(seed))?;
            if stats.discarded_samples > 0 {
                eprintln!("warning: discarded {} samples of a partial trailing frame", stats.discarded_samples);
            }
            let budget = DelayBudget::from_config(model.generator().config());
            eprintln!(
                "frames {} audio {:.3} s processing {:.3} s real-time factor {:.4} algorithmic delay {:.4} ms",
                stats.frames,
                stats.audio_seconds(),
                stats.processing.as_secs_f64(),
                stats.real_time_factor(),
                budget.total_ms
            );
        }
        Command::Train { manifest, config, outdir, seed, steps_pretrain, steps_adv, checkpoint } => {
            if !manifest.is_file() {
                eprintln!("error: manifest {} not found", manifest.display());
                return Ok(ExitCode::from(2));
            }
            let ds = load_dataset(&manifest)?;
            for w in &ds.warnings {
                eprintln!("warning: {w}");
            }
            if ds.is_empty() {
                bail!("the manifest lists no usable pairs");
            }
            let mut trainer = match checkpoint {
                Some(p) => {
                    let mut t = Trainer::load(&p)?;
                    let train = &t.config().train;
                    let (pre, adv) = (steps_pretrain.unwrap_or(train.pretrain_steps), steps_adv.unwrap_or(train.adversarial_steps));
                    t.set_schedule(pre, adv)?;
                    t
                }
                None => {
                    let mut cfg = load_config(&config)?;
                    if let Some(s) = seed {
                        cfg.train.seed = s;
                    }
                    if let Some(n) = steps_pretrain {
                        cfg.train.pretrain_steps = n;
                    }
                    if let Some(n) = steps_adv {
                        cfg.train.adversarial_steps = n;
                    }
                    cfg.validate_schedule(ds.len())?;
                    Trainer::new(cfg, ds.len())?
                }
            };
            let reports = trainer.run(&ds, &outdir)?;
            if let (Some(first), Some(last)) = (reports.first(), reports.last()) {
                eprintln!("steps {} aux {:.4} -> {:.4}", reports.len(), first.l_aux, last.l_aux);
            }
            eprintln!("checkpoint {}", checkpoint_path(&outdir).display());
        }
        Command::Report { checkpoint, config, layers } => {
            let cfg = match (checkpoint, config) {
                (Some(p), _) => load_inference(&p)?.generator().config().clone(),
                (None, Some(c)) => load_config(&c)?.generator,
                (None, None) => ExperimentConfig::default().generator,
            };
            print!("{}", cost_report_text(&cfg, layers)?);
        }
        Command::Verify { seed, pqmf_cutoff } => {
            let report = run_verify(&VerifyOptions { pqmf_cutoff, seed })?;
            println!("{report}");
            if !report.all_passed() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Corpus { outdir, items, seconds, seed } => {
            let manifest = generate_corpus(&outdir, CorpusSpec { items, seconds, seed })?;
            println!("{}", manifest.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
