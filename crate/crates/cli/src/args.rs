use std::ffi::OsString;
use std::path::PathBuf;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use rwresnet::config::KeyValues;
use rwresnet::frontend::{Preset, Variant};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "rwresnet", version, about = "Raw-waveform spoofing countermeasure: train, score, evaluate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write per-epoch checkpoints and a history CSV.
    Train(TrainArgs),
    /// Score every trial of a protocol with a checkpoint.
    Score(ScoreArgs),
    /// Compute EER and min t-DCF from a score file and a protocol.
    Eval(EvalArgs),
    /// Check every layer's backward pass against finite differences.
    Gradcheck(GradcheckArgs),
    /// Write a synthetic WAV corpus and its protocol.
    SynthData(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// key=value file supplying any flag not given on the command line.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "reswavegram")]
    pub variant: Variant,
    /// Channel preset; overridden by --c1/--c2/--c3.
    #[arg(long, default_value = "M")]
    pub preset: Preset,
    #[arg(long)]
    pub c1: Option<usize>,
    #[arg(long)]
    pub c2: Option<usize>,
    #[arg(long)]
    pub c3: Option<usize>,
    /// Channel groups of the extracted feature map.
    #[arg(long, default_value_t = 1)]
    pub cg: usize,
    /// Samples per training example; a multiple of 320.
    #[arg(long, default_value_t = 128_000)]
    pub input_len: usize,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub train_protocol: Option<PathBuf>,
    #[arg(long)]
    pub dev_protocol: Option<PathBuf>,
    /// Directory holding `<utt_id>.wav` for every trial.
    #[arg(long)]
    pub audio_root: Option<PathBuf>,
    #[arg(long, default_value = "checkpoints")]
    pub checkpoint_dir: PathBuf,
    /// First restart period in epochs.
    #[arg(long, default_value_t = 10.0)]
    pub t0: f64,
    /// Growth factor of the restart period.
    #[arg(long, default_value_t = 2.0)]
    pub t_mult: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub eta_min: f64,
    /// Hold the dev set out and keep the epoch with the lowest dev EER.
    #[arg(long)]
    pub select_by_dev: bool,
    /// Random windows instead of the leading window of long signals.
    #[arg(long)]
    pub random_crop: bool,
    /// Train on N synthetic utterances per class instead of a protocol.
    #[arg(long, value_name = "N")]
    pub synth: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub protocol: PathBuf,
    #[arg(long)]
    pub audio_root: PathBuf,
    /// Score file to write.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub protocol: PathBuf,
    /// key=value tandem cost model; min t-DCF is skipped without it.
    #[arg(long)]
    pub cost_file: Option<PathBuf>,
    /// Also write the CSV report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Random draws per layer.
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    /// Central-difference step.
    #[arg(long, default_value_t = rwresnet::gradcheck::DEFAULT_STEP)]
    pub step: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Utterances per class.
    #[arg(long, default_value_t = 32)]
    pub n: usize,
    /// Samples per utterance.
    #[arg(long, default_value_t = 8000)]
    pub length: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// What the parser decided.
pub enum Parsed {
    Run {
        cli: Cli,
        /// Effective settings of the chosen subcommand, as key=value.
        effective: KeyValues,
    },
    /// Help or version text, already rendered.
    Info(String),
}

fn clap_error(e: clap::Error) -> Result<Parsed, CliError> {
    use clap::error::ErrorKind;
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Ok(Parsed::Info(e.render().to_string())),
        ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            Err(CliError::config("a subcommand is required (see --help)"))
        }
        _ => {
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            Err(CliError::config(first.trim_start_matches("error: ").to_string()))
        }
    }
}

/// Parses `argv`, filling flags absent from the command line from the
/// `--config` file. Unknown config keys are errors.
pub fn parse(argv: Vec<OsString>) -> Result<Parsed, CliError> {
    let cmd = Cli::command();
    // the first pass only locates the config file, so required flags may
    // still be missing from the command line
    let names: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    let relaxed = names.iter().fold(cmd.clone(), |c, n| {
        c.mut_subcommand(n, |s| s.mut_args(|a| a.required(false)))
    });
    let matches = match relaxed.try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => return clap_error(e),
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let sub_cmd = cmd.find_subcommand(name).expect("known subcommand").clone();

    let mut argv = argv;
    let config_path = sub.get_one::<PathBuf>("config").cloned();
    if let Some(path) = &config_path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("config file {}: {e}", path.display())))?;
        let kv = KeyValues::parse(&text)
            .map_err(|e| CliError::config(format!("config file {}: {e}", path.display())))?;
        for (key, value) in kv.iter() {
            let long = key.replace('_', "-");
            let arg = sub_cmd
                .get_arguments()
                .find(|a| a.get_long() == Some(long.as_str()) && a.get_id() != "config")
                .ok_or_else(|| CliError::config(format!("config file {}: unknown key {key}", path.display())))?;
            if sub.value_source(arg.get_id().as_str()) == Some(ValueSource::CommandLine) {
                continue;
            }
            if arg.get_action().takes_values() {
                argv.push(format!("--{long}={value}").into());
            } else {
                match value {
                    "true" => argv.push(format!("--{long}").into()),
                    "false" => {}
                    other => {
                        return Err(CliError::config(format!(
                            "config file {}: {key} must be true or false, got {other:?}",
                            path.display()
                        )))
                    }
                }
            }
        }
    }
    let matches = match cmd.clone().try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => return clap_error(e),
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CliError::config(e.to_string()))?;
    let (_, sub) = matches.subcommand().expect("subcommand is required");
    Ok(Parsed::Run {
        cli,
        effective: effective_settings(&sub_cmd, sub),
    })
}

fn effective_settings(cmd: &clap::Command, m: &ArgMatches) -> KeyValues {
    let mut kv = KeyValues::default();
    for arg in cmd.get_arguments() {
        let id = arg.get_id().as_str();
        if id == "config" || id == "help" || id == "version" {
            continue;
        }
        if !arg.get_action().takes_values() {
            kv.insert(id, m.get_flag(id));
        } else if let Some(raw) = m.get_raw(id) {
            let vals: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
            kv.insert(id, vals.join(","));
        }
    }
    kv
}
