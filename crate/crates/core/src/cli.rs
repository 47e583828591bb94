//! Command-line entry point: `train`, `eval` and `selftest`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 selftest
//! failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tensorcore::RngStream;

use crate::config::ExperimentConfig;
use crate::envs::EnvKind;
use crate::error::{Error, Result};
use crate::eval::{evaluate, teams_for, EvalAxis};
use crate::model::Model;
use crate::nets::PolicyVariant;
use crate::selftest;
use crate::training::{make_training_teams, Trainer};

/// Default output directory when neither `--out` nor `out_dir` is given.
pub const OUT_DIR_ENV: &str = "CAPTEAM_OUT_DIR";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const FINAL_CHECKPOINT: &str = "model.ckpt";

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_SELFTEST: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "capteam",
    version,
    about = "Train and evaluate capability-aware multi-robot policies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one policy variant on the five training teams.
    Train(TrainArgs),
    /// Evaluate a checkpoint on training, recombined or new teams.
    Eval(EvalArgs),
    /// Run the oracle suites.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config override, e.g. `--set train.lr=0.005`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    env: Option<EnvKind>,
    #[arg(long)]
    variant: Option<PolicyVariant>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    env: Option<EnvKind>,
    /// Refuse the checkpoint unless it holds this variant.
    #[arg(long)]
    variant: Option<PolicyVariant>,
    #[arg(long)]
    axis: Option<EvalAxis>,
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    #[arg(long)]
    teams: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_sha256: String,
    pub code_version: String,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub files: Vec<ManifestFile>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Collects the files a run writes so the manifest can list them.
struct Output {
    dir: PathBuf,
    files: Vec<ManifestFile>,
}

impl Output {
    fn create(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        self.files.retain(|f| f.path != name);
        self.files.push(ManifestFile {
            path: name.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    /// Writes the manifest through a temporary file and a rename.
    fn finish(self, command: &str, config: &ExperimentConfig, started: u64) -> Result<()> {
        let manifest = RunManifest {
            command: command.to_string(),
            config_sha256: sha256_hex(config.to_toml().as_bytes()),
            code_version: format!("capteam {}", env!("CARGO_PKG_VERSION")),
            seed: config.seed,
            started_unix: started,
            finished_unix: now(),
            files: self.files,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let tmp = self.dir.join(format!("{MANIFEST_FILE}.tmp"));
        let dst = self.dir.join(MANIFEST_FILE);
        fs::write(&tmp, text).map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
        fs::rename(&tmp, &dst).map_err(|e| Error::io(format!("renaming to {}", dst.display()), e))?;
        Ok(())
    }
}

fn resolve(common: &Common, mut extra: Vec<String>) -> Result<ExperimentConfig> {
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        extra.push(format!("seed={seed}"));
    }
    overrides.extend(extra);
    let mut config = ExperimentConfig::resolve(common.config.as_deref(), &overrides)?;
    if let Some(out) = &common.out {
        config.out_dir = Some(out.clone());
    }
    Ok(config)
}

fn out_dir(config: &ExperimentConfig) -> PathBuf {
    config
        .out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn train(args: TrainArgs) -> Result<()> {
    let mut extra = Vec::new();
    if let Some(env) = args.env {
        extra.push(format!("task={env}"));
    }
    if let Some(v) = args.variant {
        extra.push(format!("variant={v}"));
    }
    let config = resolve(&args.common, extra)?;
    let started = now();
    let mut out = Output::create(out_dir(&config))?;
    out.write(CONFIG_FILE, &config.to_toml())?;

    let mut trainer = Trainer::new(
        config.task,
        config.variant,
        make_training_teams(config.task),
        &config.env,
        config.train.clone(),
        config.seed,
    )?;
    let total = trainer.total_steps();
    let interval = config.train.checkpoint_interval;
    let mut next_checkpoint = interval;
    let mut next_report = total / 10;
    let mut saved = Vec::new();
    trainer.run(|t| {
        let steps = t.env_steps();
        if interval > 0 && steps >= next_checkpoint {
            saved.push((format!("checkpoint_{steps}.ckpt"), t.model().to_checkpoint().to_text()));
            next_checkpoint += interval * ((steps - next_checkpoint) / interval + 1);
        }
        if steps >= next_report {
            let r = t.log().updates.last().and_then(|u| u.mean_return);
            eprintln!(
                "{steps}/{total} env steps, mean return {}",
                r.map_or("-".into(), |r| format!("{r:.3}"))
            );
            next_report += (total / 10).max(1);
        }
        Ok(())
    })?;
    for (name, text) in &saved {
        out.write(name, text)?;
    }
    let outcome = trainer.into_outcome();
    out.write(FINAL_CHECKPOINT, &outcome.model.to_checkpoint().to_text())?;
    out.write("train.csv", &outcome.log.to_csv())?;
    out.write("episodes.csv", &outcome.log.episodes_csv())?;
    println!(
        "trained {} on {} for {} env steps; last-100 mean return {}",
        config.variant,
        config.task,
        outcome.model.env_steps,
        outcome.log.last_mean(100).map_or("-".into(), |r| format!("{r:.3}"))
    );
    out.finish("train", &config, started)
}

/// If the checkpoint sits next to a run manifest that lists it, its bytes
/// must match.
fn check_against_manifest(checkpoint: &Path) -> Result<()> {
    let Some(dir) = checkpoint.parent() else { return Ok(()) };
    let Ok(text) = fs::read_to_string(dir.join(MANIFEST_FILE)) else {
        return Ok(());
    };
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("unreadable run manifest next to checkpoint: {e}")))?;
    let name = checkpoint.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    if let Some(entry) = manifest.files.iter().find(|f| f.path == name) {
        let bytes = fs::read(checkpoint).map_err(|e| Error::io(format!("reading {}", checkpoint.display()), e))?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(Error::Checkpoint(format!(
                "{} does not match the hash in its run manifest",
                checkpoint.display()
            )));
        }
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let mut extra = Vec::new();
    if let Some(env) = args.env {
        extra.push(format!("task={env}"));
    }
    if let Some(axis) = args.axis {
        extra.push(format!("eval.axis=\"{axis}\""));
    }
    if !args.sizes.is_empty() {
        let list: Vec<String> = args.sizes.iter().map(|s| s.to_string()).collect();
        extra.push(format!("eval.team_sizes=[{}]", list.join(",")));
    }
    if let Some(n) = args.teams {
        extra.push(format!("eval.teams_per_setting={n}"));
    }
    if let Some(n) = args.episodes {
        extra.push(format!("eval.episodes_per_team={n}"));
    }
    let config = resolve(&args.common, extra)?;
    let started = now();
    check_against_manifest(&args.checkpoint)?;
    let model = Model::load_expecting(&args.checkpoint, config.task, args.variant)?;
    let mut out = Output::create(out_dir(&config))?;
    out.write(CONFIG_FILE, &config.to_toml())?;

    let protocol = &config.eval;
    let root = RngStream::from_seed(config.seed);
    let sizes: Vec<Option<usize>> = match protocol.axis {
        EvalAxis::Train => vec![None],
        _ => protocol.team_sizes.iter().copied().map(Some).collect(),
    };
    for size in sizes {
        let n = size.unwrap_or(4);
        let teams = teams_for(
            config.task,
            protocol.axis,
            n,
            protocol.teams_per_setting,
            &root.split("teams"),
        )?;
        let rng = root.split("episodes").split_indexed("size", n as u64);
        let report = evaluate(&model, &teams, &config.env, protocol.episodes_per_team, &rng)?;
        let stem = match size {
            Some(n) => format!("eval_{}_n{n}", protocol.axis),
            None => format!("eval_{}", protocol.axis),
        };
        out.write(&format!("{stem}.csv"), &report.to_csv())?;
        out.write(&format!("{stem}.json"), &report.summary_json())?;
        let mut line = format!(
            "{stem}: {} episodes, return {:.3} ± {:.3}",
            report.episodes, report.avg_return.mean, report.avg_return.std
        );
        if let Some(rate) = report.quota_filled_rate() {
            line += &format!(", quota filled {rate:.1}%");
        }
        if let Some(c) = report.pct_connected_end {
            line += &format!(", connected at end {c:.1}%");
        }
        println!("{line}");
    }
    out.finish("eval", &config, started)
}

fn run_selftest(seed: u64) -> u8 {
    let mut ok = true;
    for check in selftest::run_all(seed) {
        match check {
            Ok(c) => {
                ok &= c.passed;
                println!("{}", c.line());
            }
            Err(e) => {
                ok = false;
                println!("FAIL error: {e}");
            }
        }
    }
    if ok {
        EXIT_OK
    } else {
        EXIT_SELFTEST
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Selftest { seed } => return run_selftest(seed),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            exit_code(&e)
        }
    }
}
