//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use streamskip::flowskip::FlowResolution;
use streamskip::knn::VectorSet;
use streamskip::Seed;

use crate::bench::{cmd_bench, load_scenarios};
use crate::config::{env_seed, AppConfig, ProfileRef, RunMode};
use crate::error::{CliError, CliResult, Classify};
use crate::flow::{demo_frames, flow_demo, skip_table, write_demo, FlowInput};
use crate::index::{
    build_from_vectors, build_synthetic, flat_truth, held_out_queries, index_params, latency_trend, load_index,
    load_vectors, neighbor_json, recall_sweep, recall_table, save_index, synthetic_generator, trend_table,
    NPROBE_SWEEP,
};
use crate::run::cmd_run;

/// Streaming img2img pipeline engine and benchmark harness.
///
/// Settings come from command-line flags, then the JSON file given with
/// --config, then built-in defaults, in that order of precedence. The
/// STREAMSKIP_SEED environment variable replaces every seed.
///
/// Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
#[derive(Debug, Parser)]
#[command(name = "streamskip", version)]
pub struct Cli {
    /// JSON configuration file; unknown keys are rejected.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Process a frame stream and write numbered PPM frames plus report.md
    /// and report.csv.
    Run(RunArgs),
    /// Run benchmark scenarios and print predicted vs measured throughput.
    Bench(BenchArgs),
    /// Build, query and evaluate IVF-PQ indexes.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Optical-flow tools.
    #[command(subcommand)]
    Flow(FlowCommand),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// plain, flowskip, knn or hybrid.
    #[arg(long)]
    pub mode: Option<RunMode>,
    /// Latency preset name.
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long)]
    pub latency_scale: Option<f64>,
    /// Process at most this many frames.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Directory of input .ppm frames instead of the synthetic source.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Flow-skip interval.
    #[arg(long)]
    pub skip_n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Scenario file; defaults to the config's bench.scenarios.
    pub file: Option<PathBuf>,
    /// Also write the results as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    /// Train an index and write it as an IVPQ file.
    Build(BuildArgs),
    /// Print the neighbours of each query as JSON lines.
    Search(SearchArgs),
    /// Recall against exact search and latency as the index grows.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Vector file (u32 dim, then f32 rows).
    #[arg(long, conflicts_with = "synthetic")]
    pub vectors: Option<PathBuf>,
    /// Use this many synthetic clustered vectors.
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Dimension of synthetic vectors.
    #[arg(long, default_value_t = 768)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub nlist: usize,
    #[arg(long, default_value_t = 48)]
    pub m: usize,
    #[arg(long, default_value_t = 8)]
    pub nbits: u32,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// IVPQ index file.
    #[arg(long, required_unless_present = "vectors")]
    pub index: Option<PathBuf>,
    /// Exact search over a vector file instead of an index.
    #[arg(long, conflicts_with = "index")]
    pub vectors: Option<PathBuf>,
    /// Query vector file.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long)]
    pub nprobe: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Base vectors the index was built from.
    #[command(flatten)]
    pub data: DataArgs,
    /// Query vector file; synthetic data uses held-out rows.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Held-out synthetic queries.
    #[arg(long, default_value_t = 100)]
    pub num_queries: usize,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 8)]
    pub nprobe: usize,
    /// Comma-separated sizes to grow a synthetic index to, timing each.
    #[arg(long, value_delimiter = ',')]
    pub trend: Vec<usize>,
}

#[derive(Debug, Subcommand)]
pub enum FlowCommand {
    /// Estimate flow between two frames, write the warped frame and a
    /// magnitude image, and optionally print the skip-schedule table.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, requires = "next")]
    pub prev: Option<PathBuf>,
    #[arg(long, requires = "prev")]
    pub next: Option<PathBuf>,
    /// Synthetic translation "dx,dy" used when no frames are given.
    #[arg(long, default_value = "4,2", value_parser = parse_pair)]
    pub shift: (f64, f64),
    /// Side of the synthetic frames.
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    /// full or half.
    #[arg(long, default_value = "full")]
    pub resolution: FlowResolution,
    #[arg(long, default_value = "streamskip-flow")]
    pub out: PathBuf,
    /// Print the theoretical skip table.
    #[arg(long)]
    pub table: bool,
    #[arg(long, default_value_t = 51.7)]
    pub unet: f64,
    #[arg(long, default_value_t = 6.6)]
    pub warp: f64,
    #[arg(long, default_value_t = 5)]
    pub max_n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected \"dx,dy\", got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((p(a)?, p(b)?))
}

/// Parses `args` (program name first) and runs the command, writing results
/// to stdout.
pub fn main_with_args<I, A>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::usage(e.to_string().trim_end())),
    };
    let mut cfg = match &cli.config {
        Some(p) => AppConfig::load(p)?,
        None => AppConfig::default(),
    };
    let seed = env_seed()?;
    match cli.command {
        Command::Run(a) => {
            apply_run_flags(&mut cfg, a);
            if let Some(s) = seed {
                cfg.override_seeds(s);
            }
            let s = cmd_run(&cfg)?;
            let r = &s.report;
            println!(
                "{} frames written to {} ({} mode)",
                s.frames_written,
                s.output_dir.display(),
                s.mode
            );
            match s.predicted_fps {
                Some(p) => println!("predicted {p:.2} FPS, measured {:.2} FPS", r.achieved_fps),
                None => println!("measured {:.2} FPS", r.achieved_fps),
            }
            Ok(())
        }
        Command::Bench(a) => {
            let scenarios = match &a.file {
                Some(f) => load_scenarios(f)?,
                None => cfg.bench.scenarios.clone(),
            };
            print!("{}", cmd_bench(&scenarios, a.csv.as_deref(), seed)?);
            Ok(())
        }
        Command::Index(c) => index_command(c, seed),
        Command::Flow(FlowCommand::Demo(a)) => {
            let input = match (&a.prev, &a.next) {
                (Some(p), Some(n)) => FlowInput::Files(p.clone(), n.clone()),
                _ => FlowInput::Shift {
                    dx: a.shift.0,
                    dy: a.shift.1,
                    size: a.size,
                    seed: Seed(seed.unwrap_or(a.seed)),
                },
            };
            cfg.flow.params.validate().usage_err()?;
            let (prev, next) = demo_frames(&input)?;
            let demo = flow_demo(&prev, &next, &cfg.flow.params, a.resolution)?;
            write_demo(&demo, &a.out)?;
            println!(
                "mean flow: ({:.3}, {:.3}) px, mean magnitude {:.3} px",
                demo.mean.0, demo.mean.1, demo.mean_magnitude
            );
            println!("wrote {}/warped.ppm and {}/flow_magnitude.ppm", a.out.display(), a.out.display());
            if a.table {
                print!("\n{}", skip_table(a.unet, a.warp, a.max_n)?);
            }
            Ok(())
        }
    }
}

fn apply_run_flags(cfg: &mut AppConfig, a: RunArgs) {
    let p = &mut cfg.pipeline;
    if let Some(m) = a.mode {
        p.mode = m;
    }
    if let Some(name) = a.profile {
        p.profile = ProfileRef::Preset(name);
    }
    if let Some(s) = a.latency_scale {
        p.latency_scale = s;
    }
    if a.frames.is_some() {
        p.frames = a.frames;
    }
    if let Some(s) = a.seed {
        cfg.override_seeds(s);
    }
    if a.input.is_some() {
        cfg.io.input_dir = a.input;
    }
    if let Some(o) = a.output {
        cfg.io.output_dir = o;
    }
    if let Some(n) = a.skip_n {
        cfg.flow.n = n;
    }
}

fn index_command(c: IndexCommand, env: Option<u64>) -> CliResult<()> {
    match c {
        IndexCommand::Build(a) => {
            let seed = Seed(env.unwrap_or(a.data.seed));
            let start = Instant::now();
            let index = match (&a.data.vectors, a.data.synthetic) {
                (Some(path), _) => {
                    let v = load_vectors(path)?;
                    let params = index_params(v.dim(), a.nlist, a.m, a.nbits)?;
                    build_from_vectors(v.as_slice(), v.dim(), &params, seed)?
                }
                (None, Some(n)) => {
                    let params = index_params(a.data.dim, a.nlist, a.m, a.nbits)?;
                    let gen = synthetic_generator(a.data.dim, seed)?;
                    build_synthetic(&gen, n, &params, seed)?
                }
                (None, None) => return Err(CliError::usage("index build needs --vectors or --synthetic")),
            };
            save_index(&index, &a.out)?;
            println!(
                "built {} vectors, dim {}, nlist {}, m {} in {:.1} s -> {}",
                index.len(),
                index.dim(),
                index.nlist(),
                index.quantizer().m(),
                start.elapsed().as_secs_f64(),
                a.out.display()
            );
            Ok(())
        }
        IndexCommand::Search(a) => {
            let queries = load_vectors(&a.queries)?;
            match (&a.index, &a.vectors) {
                (Some(path), _) => {
                    let index = load_index(path)?;
                    check_dim(index.dim(), queries.dim())?;
                    let nprobe = a.nprobe.unwrap_or(index.nprobe());
                    for (i, q) in queries.rows().enumerate() {
                        println!("{}", neighbor_json(i, &index.search(q, a.k, nprobe).usage_err()?));
                    }
                }
                (None, Some(path)) => {
                    let base = load_vectors(path)?;
                    check_dim(base.dim(), queries.dim())?;
                    for (i, n) in flat_truth(&base, queries.as_slice(), a.k)?.iter().enumerate() {
                        println!("{}", neighbor_json(i, n));
                    }
                }
                (None, None) => return Err(CliError::usage("index search needs --index or --vectors")),
            }
            Ok(())
        }
        IndexCommand::Eval(a) => {
            let mut index = load_index(&a.index)?;
            let seed = Seed(env.unwrap_or(a.data.seed));
            let (base, queries, gen) = match (&a.data.vectors, a.data.synthetic) {
                (Some(path), _) => {
                    let q = a
                        .queries
                        .as_ref()
                        .ok_or_else(|| CliError::usage("eval over a vector file needs --queries"))?;
                    (load_vectors(path)?, load_vectors(q)?.as_slice().to_vec(), None)
                }
                (None, Some(n)) => {
                    let gen = synthetic_generator(index.dim(), seed)?;
                    let queries = held_out_queries(&gen, a.num_queries);
                    (VectorSet::new(gen.dim(), gen.rows(0, n)).usage_err()?, queries, Some(gen))
                }
                (None, None) => return Err(CliError::usage("index eval needs --vectors or --synthetic")),
            };
            check_dim(index.dim(), base.dim())?;
            if base.len() != index.len() {
                return Err(CliError::usage(format!(
                    "index holds {} vectors but the base set has {}",
                    index.len(),
                    base.len()
                )));
            }
            let truth = flat_truth(&base, &queries, a.k)?;
            drop(base);
            let mut nprobes: Vec<usize> = NPROBE_SWEEP.iter().copied().chain([a.nprobe]).filter(|&p| p <= index.nlist()).collect();
            nprobes.sort_unstable();
            nprobes.dedup();
            let rows = recall_sweep(&index, &truth, &queries, a.k, &nprobes)?;
            print!("{}", recall_table(&rows, a.k));
            if !a.trend.is_empty() {
                let gen = gen.ok_or_else(|| CliError::usage("--trend needs --synthetic data"))?;
                let trend = latency_trend(&mut index, &gen, &queries, a.k, a.nprobe, &a.trend)?;
                print!("\n{}", trend_table(&trend, a.nprobe));
            }
            Ok(())
        }
    }
}

fn check_dim(index: usize, other: usize) -> CliResult<()> {
    if index != other {
        return Err(CliError::usage(format!("dimension mismatch: {index} vs {other}")));
    }
    Ok(())
}
