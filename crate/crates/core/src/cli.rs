//! Command-line front end.
//!
//! Exit codes: 0 success, 1 validation or user error, 2 internal or
//! convergence error. `EMPROBE_THREADS` caps parallelism (0 = automatic).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::pipeline::{
    cmd_run, cmd_synth, cmd_validate, RunConfig, DEFAULT_K_OUTER, DEFAULT_SUBSET_STEP,
};
use crate::synth::SynthSpec;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

pub const THREADS_ENV: &str = "EMPROBE_THREADS";

// Like `println!`, but a closed pipe is not a panic.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Debug, Parser)]
#[command(name = "emprobe", version, about = "Probe which acoustic information speech embeddings use for emotion recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check that the tables and category map are complete and consistent.
    Validate(ValidateArgs),
    /// Run the full pipeline and write report.json plus CSV projections.
    Run(RunArgs),
    /// Write seeded synthetic tables with planted structure.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct InputArgs {
    #[arg(long)]
    embeddings_path: PathBuf,
    #[arg(long)]
    acoustic_path: PathBuf,
    /// Defaults to the bundled eGeMAPSv02 map.
    #[arg(long)]
    category_map_path: Option<PathBuf>,
    #[arg(long, default_value = crate::dataio::DEFAULT_NEUTRAL_LABEL)]
    neutral_label: String,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Emotion labels that must be present.
    #[arg(long, value_delimiter = ',')]
    emotions: Vec<String>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    emotions: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.1,1,10,100")]
    c_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.01,0.1,1,10,100")]
    alpha_grid: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_K_OUTER)]
    k_outer: usize,
    #[arg(long, default_value_t = DEFAULT_SUBSET_STEP)]
    subset_step: usize,
    #[arg(long)]
    subset_cap: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output_dir: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    output_dir: PathBuf,
    #[arg(long, default_value_t = 12)]
    n_speakers: usize,
    #[arg(long, default_value_t = 20)]
    utterances_per_speaker: usize,
    #[arg(long, default_value_t = 128)]
    embed_dim: usize,
    /// Defaults to the first ten dimensions (or all, if fewer).
    #[arg(long, value_delimiter = ',')]
    planted_dims: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0.1)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl RunArgs {
    fn into_config(self) -> RunConfig {
        RunConfig {
            embeddings_path: self.input.embeddings_path,
            acoustic_path: self.input.acoustic_path,
            category_map_path: self.input.category_map_path,
            emotions: self.emotions,
            neutral_label: self.input.neutral_label,
            c_grid: self.c_grid,
            alpha_grid: self.alpha_grid,
            k_outer: self.k_outer,
            subset_step: self.subset_step,
            subset_cap: self.subset_cap,
            seed: self.seed,
            output_dir: self.output_dir,
        }
    }
}

impl SynthArgs {
    fn spec(&self) -> SynthSpec {
        SynthSpec {
            n_speakers: self.n_speakers,
            utterances_per_speaker: self.utterances_per_speaker,
            embed_dim: self.embed_dim,
            planted_dims: self
                .planted_dims
                .clone()
                .unwrap_or_else(|| (0..self.embed_dim.min(10)).collect()),
            noise_sigma: self.noise_sigma,
            seed: self.seed,
            ..SynthSpec::default()
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    if e.is_internal() {
        EXIT_INTERNAL
    } else {
        EXIT_USER
    }
}

/// Thread count from `EMPROBE_THREADS`; unset or empty means automatic.
pub fn threads_from_env() -> Result<usize, String> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map_err(|_| format!("{THREADS_ENV} must be a nonnegative integer, got `{v}`")),
        _ => Ok(0),
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USER } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Validate(a) => {
            let summary = cmd_validate(
                &a.input.embeddings_path,
                &a.input.acoustic_path,
                a.input.category_map_path.as_deref(),
                &a.emotions,
                &a.input.neutral_label,
            );
            if summary.is_valid() {
                out!("0 issues");
                EXIT_OK
            } else {
                out!("{} issues", summary.issues.len());
                for issue in &summary.issues {
                    out!("- {issue}");
                }
                EXIT_USER
            }
        }
        Command::Run(a) => {
            let threads = match threads_from_env() {
                Ok(t) => t,
                Err(m) => {
                    eprintln!("error: {m}");
                    return EXIT_USER;
                }
            };
            let config = a.into_config();
            match cmd_run(&config, threads) {
                Ok(outcome) => {
                    for e in &outcome.report.emotions {
                        out!(
                            "{}: f1_acoustic={:.4} f1_embedding_all={:.4} f1_embedding_top={:.4} k_star={}",
                            e.emotion, e.f1_acoustic, e.f1_embedding_all, e.f1_embedding_top, e.k_star
                        );
                    }
                    for f in &outcome.report.failures {
                        eprintln!("error: emotion `{}` failed at {}: {}", f.emotion, f.stage, f.message);
                    }
                    out!("wrote {}", outcome.output_dir.display());
                    if outcome.report.failures.is_empty() {
                        EXIT_OK
                    } else if outcome.has_internal_failure() {
                        EXIT_INTERNAL
                    } else {
                        EXIT_USER
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code(&e)
                }
            }
        }
        Command::Synth(a) => match cmd_synth(&a.spec(), &a.output_dir) {
            Ok(paths) => {
                for p in paths {
                    out!("wrote {}", p.display());
                }
                EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        },
    }
}
