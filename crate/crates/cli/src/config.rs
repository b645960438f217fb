use std::path::PathBuf;

use birkhoff::codec::CodebookKind;
use birkhoff::container::EligibilityPolicy;
use birkhoff::hyperlinear::BlockConfig;
use birkhoff::search::{parse_presets, PresetRegistry, SearchSpace};
use birkhoff::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

pub const DEFAULT_PRESET: &str = "sam-b";

#[derive(Debug, Parser)]
#[command(name = "birkhoff", version, about = "Data-free weight compression for safetensors checkpoints")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compress a safetensors checkpoint into a .bhc container
    Compress(CompressArgs),
    /// Rebuild a safetensors checkpoint from a container
    Decompress(DecompressArgs),
    /// Compare a container with the checkpoint it came from
    Verify(VerifyArgs),
    /// List the entries of a container
    Inspect(InspectArgs),
    /// Time fused, dense and decompress-then-GEMM multiplication
    Bench(BenchArgs),
    /// List the available presets
    Presets(PresetArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Codebook {
    Grid,
    Trajectory,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Worker threads [default: all cores]
    #[arg(long, env = "BIRKHOFF_WORKERS", global = true)]
    pub workers: Option<usize>,
    /// Report format
    #[arg(long, value_enum, default_value = "text", global = true)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SpaceArgs {
    /// Named search space
    #[arg(long)]
    pub preset: Option<String>,
    /// TOML file with additional presets
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Box side length candidates (repeatable, overrides the preset)
    #[arg(long = "l", value_delimiter = ',')]
    pub box_lens: Vec<f64>,
    /// Codebook size candidates (repeatable, overrides the preset)
    #[arg(long = "U", value_delimiter = ',')]
    pub codebook_sizes: Vec<u32>,
    /// Outlier category counts (repeatable, overrides the preset)
    #[arg(long = "M", value_delimiter = ',')]
    pub categories: Vec<u32>,
    /// Codebook layout
    #[arg(long, value_enum, default_value = "grid")]
    pub codebook: Codebook,
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub space: SpaceArgs,
    /// Smallest tensor, in elements, that is compressed
    #[arg(long, default_value_t = birkhoff::container::DEFAULT_MIN_ELEMENTS)]
    pub min_elems: usize,
    /// Only compress tensors whose name matches (regex, repeatable)
    #[arg(long)]
    pub include: Vec<String>,
    /// Never compress tensors whose name matches (regex, repeatable)
    #[arg(long)]
    pub exclude: Vec<String>,
    /// Fail if any compressed tensor has a larger MAE
    #[arg(long)]
    pub mae_budget: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct DecompressArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Original safetensors checkpoint
    pub original: PathBuf,
    /// Container produced from it
    pub container: PathBuf,
    #[arg(long)]
    pub mae_budget: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub container: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Problem size as MxKxN (repeatable)
    #[arg(long = "shape", default_value = "256x512x512")]
    pub shapes: Vec<String>,
    /// Timed repetitions per strategy, after one warm-up
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = birkhoff::bench::DEFAULT_SEED)]
    pub seed: u64,
    /// Block sizes R,S,T
    #[arg(long, default_value = "64,64,64")]
    pub block: String,
    #[arg(long = "l", default_value_t = 0.1)]
    pub box_len: f64,
    #[arg(long = "U", default_value_t = 1600)]
    pub codebook_size: u32,
    #[arg(long = "M", default_value_t = 3)]
    pub categories: u32,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct PresetArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub workers: usize,
    pub format: Format,
}

impl RunConfig {
    pub fn new(common: &Common) -> Result<Self, Error> {
        let workers = match common.workers {
            Some(0) => return Err(Error::Parameter("--workers must be at least 1".into())),
            Some(n) => n,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        Ok(Self { workers, format: common.format })
    }
}

pub fn registry(config: Option<&PathBuf>) -> Result<PresetRegistry, Error> {
    let mut reg = PresetRegistry::builtin();
    if let Some(path) = config {
        reg.extend(parse_presets(&std::fs::read_to_string(path)?)?);
    }
    Ok(reg)
}

impl SpaceArgs {
    /// Preset lists, with any list given on the command line replacing the
    /// preset's.
    pub fn resolve(&self) -> Result<SearchSpace, Error> {
        let reg = registry(self.config.as_ref())?;
        let mut space = reg.get(self.preset.as_deref().unwrap_or(DEFAULT_PRESET))?.space.clone();
        if !self.box_lens.is_empty() {
            space.box_lens = self.box_lens.clone();
        }
        if !self.codebook_sizes.is_empty() {
            space.codebook_sizes = self.codebook_sizes.clone();
        }
        if !self.categories.is_empty() {
            space.categories = self.categories.clone();
        }
        space.kind = match self.codebook {
            Codebook::Grid => CodebookKind::GridLattice,
            Codebook::Trajectory => CodebookKind::LiteralTrajectory,
        };
        space.validate()?;
        Ok(space)
    }
}

impl CompressArgs {
    pub fn policy(&self) -> Result<EligibilityPolicy, Error> {
        let mut p = EligibilityPolicy::new(self.min_elems);
        for pat in &self.include {
            p = p.include(pat)?;
        }
        for pat in &self.exclude {
            p = p.exclude(pat)?;
        }
        Ok(p)
    }
}

pub fn parse_shape(s: &str) -> Result<(usize, usize, usize), Error> {
    let dims: Vec<usize> = s
        .split(['x', 'X'])
        .map(|d| d.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| Error::Parameter(format!("shape '{s}' is not MxKxN")))?;
    match dims[..] {
        [m, k, n] => Ok((m, k, n)),
        _ => Err(Error::Parameter(format!("shape '{s}' is not MxKxN"))),
    }
}

pub fn parse_block(s: &str) -> Result<BlockConfig, Error> {
    let dims: Vec<usize> = s
        .split(',')
        .map(|d| d.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| Error::Parameter(format!("block '{s}' is not R,S,T")))?;
    match dims[..] {
        [r, s, t] => BlockConfig::new(r, s, t),
        _ => Err(Error::Parameter(format!("block '{s}' is not R,S,T"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(args: &[&str]) -> Result<SearchSpace, Error> {
        let mut argv = vec!["birkhoff", "compress", "in", "-o", "out"];
        argv.extend_from_slice(args);
        match Cli::try_parse_from(argv).unwrap().command {
            Command::Compress(c) => c.space.resolve(),
            _ => unreachable!(),
        }
    }

    #[test]
    fn default_and_named_presets() {
        let s = space(&[]).unwrap();
        assert_eq!((s.box_lens, s.codebook_sizes, s.categories), (vec![0.1], vec![1600], vec![1, 2, 3]));
        let s = space(&["--preset", "sam-l"]).unwrap();
        assert_eq!(s.codebook_sizes, vec![1225, 1600]);
        let err = space(&["--preset", "nope"]).unwrap_err().to_string();
        assert!(err.contains("sam-b") && err.contains("tinysam"));
    }

    #[test]
    fn explicit_lists_override() {
        let s = space(&["--preset", "sam-l", "--U", "400", "--U", "900", "--M", "1,2"]).unwrap();
        assert_eq!(s.codebook_sizes, vec![400, 900]);
        assert_eq!(s.categories, vec![1, 2]);
        assert_eq!(s.box_lens, vec![0.1]);
        assert!(space(&["--l=-1"]).is_err());
    }

    #[test]
    fn shapes_and_blocks() {
        assert_eq!(parse_shape("2x3X4").unwrap(), (2, 3, 4));
        assert!(parse_shape("2x3").is_err());
        assert_eq!(parse_block("8,4,2").unwrap(), BlockConfig { rows: 8, cols: 4, depth: 2 });
        assert!(parse_block("8,3,2").is_err());
    }

    #[test]
    fn zero_workers_rejected() {
        let c = Common { workers: Some(0), format: Format::Text };
        assert!(RunConfig::new(&c).is_err());
    }
}
