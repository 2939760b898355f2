use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "satsynth",
    version,
    about = "Saturated count-model synthesis of sparse contingency tables"
)]
pub struct Cli {
    /// Worker threads (defaults to all cores); results do not depend on it
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Plain-text key=value file supplying flag defaults
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Cross-tabulate microdata into a table file
    Aggregate(AggregateArgs),
    /// Generate a table whose cell-size histogram matches a JSON spec
    GenerateEscsub(GenerateArgs),
    /// Choose alpha for a target at fixed sigma
    Tune(TuneArgs),
    /// Draw synthetic replicates of a table
    Synthesize(SynthesizeArgs),
    /// Analytic and empirical tau metrics
    Metrics(MetricsArgs),
    /// Within-p% proportions, coefficient overlaps and trimmed mean differences
    Evaluate(EvaluateArgs),
    /// Risk-utility frontier points
    Frontier(FrontierArgs),
}

#[derive(Args, Debug)]
pub struct AggregateArgs {
    /// Microdata CSV with a header row of variable names
    #[arg(long)]
    pub microdata: PathBuf,
    /// Schema JSON: {"variables":[{"name":..,"categories":[..]},..]}
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Generator spec JSON (variables, buckets, optional tail)
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyArg {
    Poisson,
    Nbi,
    Pig,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetArg {
    /// Match the proportion of zeros
    MatchZeros,
    /// Fix tau4(1) at --p
    Tau4,
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long, value_enum)]
    pub family: FamilyArg,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, value_enum, default_value = "match-zeros")]
    pub target: TargetArg,
    /// Target tau4(1) for --target tau4
    #[arg(long)]
    pub p: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SynthesizeArgs {
    #[arg(long)]
    pub table: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of replicates
    #[arg(long, default_value_t = 1)]
    pub m: u32,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Single-threaded synthesis
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    #[arg(long)]
    pub table: PathBuf,
    /// Synthetic replicate files (comma-separated or repeated)
    #[arg(long, value_delimiter = ',')]
    pub synthetic: Vec<PathBuf>,
    /// Model parameters; taken from provenance sidecars when omitted
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 3)]
    pub k_max: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceArg {
    /// Raab when every replicate has a provenance sidecar, naive otherwise
    Auto,
    Naive,
    Raab,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroRuleArg {
    OutsideAll,
    BeyondFifty,
}

#[derive(Args, Debug, Clone)]
pub struct FitArgs {
    /// Variables kept before fitting, e.g. W,Y,Z (default: all)
    #[arg(long, value_delimiter = ',')]
    pub vars: Vec<String>,
    /// Margins such as "W*Y,Y*Z"; overrides --order
    #[arg(long)]
    pub margins: Option<String>,
    /// All interactions of this order
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    /// Coefficients below -cap are frozen
    #[arg(long, default_value_t = satsynth::loglin::DEFAULT_CAP)]
    pub cap: f64,
    /// Normal quantile for the intervals
    #[arg(long, default_value_t = 1.959_963_984_540_054)]
    pub z: f64,
    #[arg(long, value_enum, default_value = "auto")]
    pub variance: VarianceArg,
    /// Keep coefficients whose estimate hit the cap
    #[arg(long)]
    pub include_capped: bool,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub synthetic: Vec<PathBuf>,
    /// Percentages for the within-p% table
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,5,10,50")]
    pub p_list: Vec<f64>,
    #[arg(long, value_enum, default_value = "outside-all")]
    pub zero_rule: ZeroRuleArg,
    /// Fraction trimmed from each end of the percentage differences
    #[arg(long, default_value_t = 0.1)]
    pub trim: f64,
    /// Skip the log-linear comparison
    #[arg(long)]
    pub no_fit: bool,
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct FrontierArgs {
    #[arg(long)]
    pub table: PathBuf,
    /// Replicates, grouped into points by their provenance
    #[arg(long, value_delimiter = ',', required = true)]
    pub synthetic: Vec<PathBuf>,
    /// Label for replicates without provenance
    #[arg(long, default_value = "synthetic")]
    pub label: String,
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parse `key=value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected key=value, got {raw:?}", i + 1);
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            bail!("config line {}: empty key", i + 1);
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn subcommand_name(args: &[String]) -> Option<&str> {
    let mut i = 1;
    while i < args.len() {
        let a = args[i].as_str();
        match a {
            "--threads" | "--config" => i += 2,
            _ if a.starts_with('-') => i += 1,
            _ => return Some(a),
        }
    }
    None
}

fn config_path(args: &[String]) -> Option<String> {
    args.iter().enumerate().find_map(|(i, a)| {
        if a == "--config" {
            args.get(i + 1).cloned()
        } else {
            a.strip_prefix("--config=").map(str::to_string)
        }
    })
}

/// Parse the command line, filling flags missing from it with values from
/// the `--config` file.
pub fn parse_args<I, T>(args: I) -> Result<Cli>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let mut args: Vec<String> = args
        .into_iter()
        .map(|a| {
            a.into()
                .into_string()
                .map_err(|a| anyhow::anyhow!("non-UTF-8 argument {a:?}"))
        })
        .collect::<Result<_>>()?;
    if let Some(path) = config_path(&args) {
        let text = fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
        let pairs = parse_config(&text)?;
        let root = Cli::command();
        let sub = subcommand_name(&args).and_then(|n| root.find_subcommand(n).cloned());
        let mut extra = Vec::new();
        for (key, value) in pairs {
            if key == "config" {
                continue;
            }
            let flag = format!("--{key}");
            let given = args
                .iter()
                .any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
            if given {
                continue;
            }
            let arg = sub
                .as_ref()
                .and_then(|s| {
                    s.get_arguments()
                        .find(|a| a.get_long() == Some(key.as_str()))
                        .cloned()
                })
                .or_else(|| {
                    root.get_arguments()
                        .find(|a| a.get_long() == Some(key.as_str()))
                        .cloned()
                });
            let Some(arg) = arg else {
                bail!("config key {key:?} is not a flag of this command");
            };
            if arg.get_action().takes_values() {
                extra.push(format!("{flag}={value}"));
            } else {
                match value.as_str() {
                    "true" | "1" | "yes" => extra.push(flag),
                    "false" | "0" | "no" => {}
                    _ => bail!("config key {key:?} expects true or false, got {value:?}"),
                }
            }
        }
        args.extend(extra);
    }
    let matches = Cli::command().try_get_matches_from(args)?;
    Ok(Cli::from_arg_matches(&matches)?)
}
