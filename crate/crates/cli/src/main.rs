//! `tilecnn` command-line tool.
//!
//! Exit status: 0 on success, 1 on a runtime failure, 2 on a usage error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "tilecnn", version, about = "Tile images, train a small CNN on the tiles, and map predictions")]
pub struct Cli {
    /// JSON file supplying flag values; explicit flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Cut an image into a raster of tiles saved as r{row}_c{col}.png.
    Subdivide(SubdivideArgs),
    /// Write synthetic fixture images.
    Synth(SynthArgs),
    /// Train a model on labeled tiles.
    Train(TrainArgs),
    /// Predict per-tile class probabilities for an image.
    Predict(PredictArgs),
    /// Score a model against labeled tiles or a truth mask, or compare settings.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
pub struct SubdivideArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Tile height, and width unless --tile-w is given.
    #[arg(long, value_parser = positive)]
    pub tile: usize,
    #[arg(long, value_parser = positive)]
    pub tile_w: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SynthCommandKind {
    Color,
    Texture,
    Mixture,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SynthBase {
    Color,
    Texture,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthCommandKind,
    /// Source pair a mixture is drawn from.
    #[arg(long, value_enum, default_value = "color")]
    pub base: SynthBase,
    #[arg(long, value_parser = positive, default_value_t = 200)]
    pub height: usize,
    #[arg(long, value_parser = positive, default_value_t = 200)]
    pub width: usize,
    /// Expected share of mixture tiles taken from the second class.
    #[arg(long, value_parser = unit_interval, default_value_t = 0.5)]
    pub fraction: f64,
    /// Standard deviation of additive Gaussian pixel noise.
    #[arg(long, value_parser = non_negative, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Mixture cell size.
    #[arg(long, value_parser = positive, default_value_t = 20)]
    pub tile: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct Hyper {
    #[arg(long, value_parser = positive, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, value_parser = positive, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, value_parser = non_negative, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, value_parser = non_negative, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Share of each class used for training; the rest is held out.
    #[arg(long, value_parser = unit_interval, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Keep the sample order fixed across epochs.
    #[arg(long)]
    pub no_shuffle: bool,
    /// Number of conv blocks (filters 8, 16, 32, ...).
    #[arg(long, value_parser = positive, default_value_t = 3)]
    pub depth: usize,
    /// Convert tiles to grayscale before training.
    #[arg(long)]
    pub grayscale: bool,
}

#[derive(Args, Debug, Clone)]
pub struct ClassArgs {
    /// One per class: a directory of tile PNGs or a source image to subdivide.
    #[arg(long = "class", value_name = "PATH")]
    pub classes: Vec<PathBuf>,
    /// Comma-separated class names; defaults to the path stems.
    #[arg(long, value_delimiter = ',')]
    pub names: Vec<String>,
    /// Tile size for source images given as classes.
    #[arg(long, value_parser = positive)]
    pub tile: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: ClassArgs,
    #[command(flatten)]
    pub hyper: Hyper,
    /// Model file; the training report is written beside it as <stem>.report.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_parser = unit_interval, default_value_t = 0.5)]
    pub tau: f64,
    /// Class whose probability the heatmap shows.
    #[arg(long, default_value_t = 1)]
    pub display_class: usize,
    /// Class the mask and overlay mark.
    #[arg(long, default_value_t = 1)]
    pub target_class: usize,
    /// Per-tile probabilities as CSV.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Heatmap PNG.
    #[arg(long)]
    pub map: Option<PathBuf>,
    /// Source image with masked tiles tinted.
    #[arg(long)]
    pub overlay: Option<PathBuf>,
    #[arg(long, value_parser = unit_interval, default_value_t = 0.5)]
    pub alpha: f64,
    /// Overlay color as R,G,B.
    #[arg(long, value_parser = rgb, default_value = "255,0,0")]
    pub color: [u8; 3],
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub data: ClassArgs,
    /// Mixture image scored against --truth.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Truth-mask CSV (row,col,label).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, value_parser = unit_interval, default_value_t = 0.5)]
    pub tau: f64,
    #[arg(long, default_value_t = 1)]
    pub target_class: usize,
    /// Train and evaluate once per setting, e.g. tile=10,20,40 or blocks=1,2,3.
    #[arg(long, value_parser = sweep)]
    pub sweep: Option<Sweep>,
    #[command(flatten)]
    pub hyper: Hyper,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Sweep {
    Tile(Vec<usize>),
    Blocks(Vec<usize>),
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be a finite value >= 0"))
    }
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} outside [0, 1]"))
    }
}

fn rgb(s: &str) -> Result<[u8; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected R,G,B, got {s:?}"));
    }
    let mut out = [0u8; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| format!("channel {p:?} not in 0..=255"))?;
    }
    Ok(out)
}

fn sweep(s: &str) -> Result<Sweep, String> {
    let (key, values) = s.split_once('=').ok_or("expected tile=... or blocks=...")?;
    let values = values.split(',').map(|v| positive(v.trim())).collect::<Result<Vec<_>, _>>()?;
    match key.trim() {
        "tile" => Ok(Sweep::Tile(values)),
        "blocks" => Ok(Sweep::Blocks(values)),
        other => Err(format!("unknown sweep key {other:?}; use tile or blocks")),
    }
}

/// Failure classes mapped to exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<tilecnn::Error> for Failure {
    fn from(e: tilecnn::Error) -> Self {
        use tilecnn::Error::*;
        match e {
            // Flag values the core rejects are usage errors.
            InvalidParameter(_) | InvalidTileSize(..) | ClassOutOfRange { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let argv = match config::apply(argv) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_parsers() {
        assert!(positive("0").is_err());
        assert_eq!(positive("20"), Ok(20));
        assert!(unit_interval("1.5").is_err());
        assert_eq!(rgb("255, 0,10"), Ok([255, 0, 10]));
        assert!(rgb("256,0,0").is_err());
        assert_eq!(sweep("tile=10,20"), Ok(Sweep::Tile(vec![10, 20])));
        assert_eq!(sweep("blocks=1,2"), Ok(Sweep::Blocks(vec![1, 2])));
        assert!(sweep("depth=1").is_err());
    }

    #[test]
    fn command_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
