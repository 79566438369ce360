use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use compressnet::codec::{self, CompressedBitstream, RateReport};
use compressnet::config::KeyValues;
use compressnet::data::{load_dir, synthetic_corpus, PatchDataset};
use compressnet::metrics::{evaluate_pairs, MetricsReport};
use compressnet::train::{load_extractor, load_model, Checkpoint, HistoryRow, TrainConfig, Trainer};
use compressnet::ImageTensor;
use log::info;

#[derive(Parser)]
#[command(name = "compressnet", version, about = "Generative image compression at extreme low bitrates")]
struct Cli {
    /// Seed for every random choice (overrides the config's `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Checkpoint to write (updated after every epoch).
        #[arg(long)]
        out: PathBuf,
        /// Continue from this checkpoint with its stored config.
        #[arg(long, conflicts_with_all = ["config", "overrides"])]
        resume: Option<PathBuf>,
        /// Write the history CSV here instead of stdout.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Compress a PNG into a bitstream and print its rate report.
    Compress {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct a PNG from a bitstream.
    Decompress {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics table row for reconstructions against references.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// One metrics row per candidate reconstruction directory.
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// `name=dir` pairs, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        candidates: Vec<String>,
    },
    /// Print header fields and rates of a bitstream.
    Inspect { file: PathBuf },
}

fn train_config(args: &ConfigArgs, seed: Option<u64>) -> Result<TrainConfig> {
    let mut kv = match &args.config {
        Some(p) => KeyValues::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => KeyValues::default(),
    };
    for o in &args.overrides {
        kv.set_override(o)?;
    }
    if let Some(s) = seed {
        kv.set("seed", &s.to_string());
    }
    Ok(TrainConfig::from_key_values(&kv)?)
}

fn read_bitstream(path: &Path) -> Result<CompressedBitstream> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(CompressedBitstream::from_bytes(&bytes)?)
}

fn print_rate(r: &RateReport) {
    println!("theoretical_bpp = {}", r.theoretical_bpp);
    println!("container_bpp = {}", r.container_bpp);
    println!("side_channel_bpp = {}", r.side_channel_bpp);
}

fn train(cfg: TrainConfig, resume: Option<&Path>, out: &Path, history: Option<&Path>) -> Result<()> {
    let mut trainer = match resume {
        Some(p) => Trainer::from_checkpoint(Checkpoint::load(p)?)?,
        None => Trainer::new(cfg)?,
    };
    let c = trainer.config().clone();
    let images = match &c.data_dir {
        Some(dir) => load_dir(dir)?.into_iter().map(|(_, img)| img).collect(),
        None => {
            info!("no data_dir configured; using the synthetic corpus");
            synthetic_corpus()
        }
    };
    let data = PatchDataset::new(&images, &c.data)?;
    while trainer.epoch() < c.epochs {
        trainer.run_epoch(&data)?;
        trainer.checkpoint().save(out)?;
    }
    if trainer.epoch() == 0 {
        trainer.checkpoint().save(out)?;
    }
    let csv = HistoryRow::render_csv(trainer.history());
    match history {
        Some(p) => std::fs::write(p, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

/// Images of `dir` keyed by file name.
fn image_map(dir: &Path) -> Result<BTreeMap<String, ImageTensor>> {
    let map: BTreeMap<_, _> =
        load_dir(dir).with_context(|| format!("reading {}", dir.display()))?.into_iter().collect();
    if map.is_empty() {
        bail!("no PNG images in {}", dir.display());
    }
    Ok(map)
}

fn evaluate_dirs(
    reference: &BTreeMap<String, ImageTensor>,
    test_dir: &Path,
    cfg: &TrainConfig,
) -> Result<MetricsReport> {
    let tests = image_map(test_dir)?;
    let mut refs = Vec::new();
    let mut outs = Vec::new();
    for (name, img) in reference {
        let t = tests.get(name).with_context(|| format!("{} has no {name}", test_dir.display()))?;
        refs.push(img.clone());
        outs.push(t.clone());
    }
    let fe = load_extractor(&cfg.perceptual)?;
    Ok(evaluate_pairs(&refs, &outs, &fe, None)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { cfg, out, resume, history } => {
            let config = train_config(&cfg, cli.seed)?;
            train(config, resume.as_deref(), &out, history.as_deref())
        }
        Command::Compress { model, input, out } => {
            let model = load_model(&model)?;
            let img = ImageTensor::load_png(&input)?;
            let (bs, rate) = codec::compress(&img, &model, model.config())?;
            std::fs::write(&out, bs.to_bytes()).with_context(|| format!("writing {}", out.display()))?;
            println!("bytes = {}", bs.byte_len());
            print_rate(&rate);
            Ok(())
        }
        Command::Decompress { model, input, out } => {
            let model = load_model(&model)?;
            let bs = read_bitstream(&input)?;
            codec::decompress(&bs, &model)?.save_png(&out)?;
            Ok(())
        }
        Command::Evaluate { cfg, reference, test } => {
            let config = train_config(&cfg, cli.seed)?;
            let report = evaluate_dirs(&image_map(&reference)?, &test, &config)?;
            println!("{}", MetricsReport::table_header());
            println!("{}", report.table_row());
            Ok(())
        }
        Command::Compare { cfg, reference, candidates } => {
            let config = train_config(&cfg, cli.seed)?;
            let refs = image_map(&reference)?;
            let parsed = candidates
                .iter()
                .map(|c| match c.split_once('=') {
                    Some((name, dir)) if !name.is_empty() && !dir.is_empty() => {
                        Ok((name.to_string(), PathBuf::from(dir)))
                    }
                    _ => bail!("candidate {c:?} is not name=dir"),
                })
                .collect::<Result<Vec<_>>>()?;
            println!("candidate\t{}", MetricsReport::table_header());
            for (name, dir) in parsed {
                let report = evaluate_dirs(&refs, &dir, &config)?;
                println!("{name}\t{}", report.table_row());
            }
            Ok(())
        }
        Command::Inspect { file } => {
            let bs = read_bitstream(&file)?;
            let h = &bs.header;
            println!("version = {}", h.version);
            println!("variant = {}", h.variant);
            println!("height = {}", h.height);
            println!("width = {}", h.width);
            println!("latent_channels = {}", h.channels);
            println!("levels = {}", h.centers.len());
            println!("centers = {}", h.centers);
            println!("model_digest = {}", hex_digest(&h.model_digest));
            println!("payload_bytes = {}", bs.payload.len());
            println!("switch_count = {}", bs.switches.as_ref().map_or(0, |(n, _)| *n));
            println!("total_bytes = {}", bs.byte_len());
            print_rate(&RateReport::of(&bs)?);
            Ok(())
        }
    }
}

fn hex_digest(d: &[u8]) -> String {
    d.iter().map(|b| format!("{b:02x}")).collect()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.downcast_ref::<compressnet::Error>().map_or("runtime", compressnet::Error::kind);
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {kind}: {msg}");
            ExitCode::FAILURE
        }
    }
}
