use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use talentscan::cohorts::{IndicatorCombination, TopPercents};
use talentscan::corpus::DocType;
use talentscan::pipeline::{self, InputSource, PipelineConfig, Stage, THREADS_ENV};
use talentscan::synthgen::SynthConfig;

#[derive(Parser)]
#[command(name = "talentscan", version, about = "Identify early-career talent from publication records")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter and index the input; writes ingest_report.csv
    Ingest(PipelineArgs),
    /// Hazen percentiles per (field, year); writes percentiles.csv
    Percentiles(PipelineArgs),
    /// Journal-year Q1 flags; writes quartiles.csv
    Quartiles(PipelineArgs),
    /// Early-career O/Q1/C indicators; writes indicators.csv
    Indicators(PipelineArgs),
    /// Thresholds and talent/control groups; writes cohorts.csv and thresholds
    Cohorts(PipelineArgs),
    /// Post-window validation reports
    Validate(PipelineArgs),
    /// Talent dataset for the talent cohort; writes talent_dataset.csv
    Export(PipelineArgs),
    /// Run every stage and write all artifacts with a manifest
    Run(PipelineArgs),
    /// Write a synthetic corpus as JSON lines
    Synth(SynthArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output file
    #[arg(short, long)]
    out: PathBuf,
    /// Key-value file with generator parameters
    #[arg(long)]
    synth_config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Generator parameters as KEY=VALUE
    params: Vec<String>,
}

fn parse_range(s: &str) -> Result<(i32, i32), String> {
    let (a, b) = s
        .split_once(['-', ','])
        .ok_or_else(|| format!("expected FIRST-LAST, got `{s}`"))?;
    Ok((
        a.trim().parse().map_err(|_| format!("bad year `{a}`"))?,
        b.trim().parse().map_err(|_| format!("bad year `{b}`"))?,
    ))
}

fn parse_doc_type(s: &str) -> Result<DocType, String> {
    DocType::parse(s).ok_or_else(|| format!("unknown document type `{s}`"))
}

fn parse_combination(s: &str) -> Result<IndicatorCombination, String> {
    s.parse().map_err(|e: talentscan::Error| e.to_string())
}

#[derive(Args)]
struct PipelineArgs {
    /// Input files (.jsonl or .csv)
    #[arg(short, long = "input", num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Generate the input instead of reading files; optional KEY=VALUE generator parameters
    #[arg(long, num_args = 0.., value_name = "KEY=VALUE", conflicts_with = "inputs")]
    synthetic: Option<Vec<String>>,
    /// Key-value file with generator parameters (implies --synthetic)
    #[arg(long)]
    synth_config: Option<PathBuf>,
    /// TOML pipeline config, or `paper_defaults`
    #[arg(long)]
    config: Option<String>,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    first_year: Option<i32>,
    #[arg(long)]
    last_year: Option<i32>,
    #[arg(long, value_delimiter = ',', value_parser = parse_doc_type)]
    doc_types: Option<Vec<DocType>>,
    #[arg(long)]
    skip_malformed: bool,
    #[arg(long)]
    window_length: Option<i32>,
    #[arg(long)]
    q1_threshold: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    substitution_target_years: Option<Vec<i32>>,
    #[arg(long)]
    substitution_source_year: Option<i32>,
    #[arg(long)]
    performance_end_year: Option<i32>,
    #[arg(long, value_parser = parse_range)]
    validation_range: Option<(i32, i32)>,
    #[arg(long, value_parser = parse_range)]
    talent_range: Option<(i32, i32)>,
    /// Talent, control-upper and control-lower percents, e.g. 1,5,10
    #[arg(long, value_delimiter = ',', num_args = 3)]
    top_percents: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_combination)]
    export_combination: Option<IndicatorCombination>,
    #[arg(long)]
    seed: Option<u64>,
}

impl PipelineArgs {
    fn resolve(self) -> Result<(InputSource, PipelineConfig)> {
        let mut cfg = match &self.config {
            Some(c) => PipelineConfig::load(c)?,
            None => PipelineConfig::default(),
        };
        if !self.inputs.is_empty() {
            cfg.inputs = self.inputs;
        }
        if let Some(v) = self.output_dir {
            cfg.output_dir = v;
        }
        if let Some(v) = self.first_year {
            cfg.first_year = v;
        }
        if let Some(v) = self.last_year {
            cfg.last_year = v;
        }
        if let Some(v) = self.doc_types {
            cfg.doc_types = v;
        }
        cfg.skip_malformed |= self.skip_malformed;
        if let Some(v) = self.window_length {
            cfg.window_length = v;
        }
        if let Some(v) = self.q1_threshold {
            cfg.q1_threshold = v;
        }
        if let Some(v) = self.substitution_target_years {
            cfg.substitution_target_years = v;
        }
        if let Some(v) = self.substitution_source_year {
            cfg.substitution_source_year = v;
        }
        if let Some(v) = self.performance_end_year {
            cfg.performance_end_year = v;
        }
        if let Some(v) = self.validation_range {
            cfg.validation_range = v;
        }
        if let Some(v) = self.talent_range {
            cfg.talent_range = v;
        }
        if let Some(v) = self.top_percents {
            cfg.top_percents = TopPercents {
                talent: v[0],
                control_upper: v[1],
                control_lower: v[2],
            };
        }
        if let Some(v) = self.export_combination {
            cfg.export_combination = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }

        let input = if self.synthetic.is_some() || self.synth_config.is_some() {
            let mut synth = match &self.synth_config {
                Some(p) => SynthConfig::from_file(p)?,
                None => SynthConfig::default(),
            };
            synth.seed = cfg.seed;
            synth.apply_overrides(self.synthetic.as_deref().unwrap_or_default())?;
            cfg.seed = synth.seed;
            cfg.inputs.clear();
            InputSource::Synthetic(synth)
        } else {
            if cfg.inputs.is_empty() {
                bail!("no input: pass --input FILE or --synthetic");
            }
            InputSource::Files(cfg.inputs.clone())
        };
        Ok((input, cfg))
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().with_context(|| format!("{THREADS_ENV}={v} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let (args, stage) = match cli.command {
        Command::Synth(s) => {
            let mut synth = match &s.synth_config {
                Some(p) => SynthConfig::from_file(p)?,
                None => SynthConfig::default(),
            };
            if let Some(seed) = s.seed {
                synth.seed = seed;
            }
            synth.apply_overrides(&s.params)?;
            let n = pipeline::write_synthetic(&synth, &s.out)?;
            println!("wrote {n} records to {}", s.out.display());
            return Ok(());
        }
        Command::Run(a) => (a, None),
        Command::Ingest(a) => (a, Some(Stage::Ingest)),
        Command::Percentiles(a) => (a, Some(Stage::Percentiles)),
        Command::Quartiles(a) => (a, Some(Stage::Quartiles)),
        Command::Indicators(a) => (a, Some(Stage::Indicators)),
        Command::Cohorts(a) => (a, Some(Stage::Cohorts)),
        Command::Validate(a) => (a, Some(Stage::Validate)),
        Command::Export(a) => (a, Some(Stage::Export)),
    };
    let (input, cfg) = args.resolve()?;
    let outcome = match stage {
        None => pipeline::run_pipeline(&input, &cfg)?,
        Some(s) => pipeline::run_stage(&input, &cfg, s)?,
    };
    for (name, digest) in &outcome.files {
        println!("{digest}  {name}");
    }
    println!("wrote {}", outcome.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
