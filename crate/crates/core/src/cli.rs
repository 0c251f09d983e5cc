//! Command-line front end. The binary only parses arguments and maps
//! [`CliError`] to an exit status.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::acoustics::{load_overlaps, EnergySeries};
use crate::config::{build_engine, resolve_config, ConfigError, RunConfig};
use crate::engine::{Engine, EngineError};
use crate::eval::{evaluate_corpus, gen_corpus, load_truth, CorpusSpec, EvalReport, Synthetic, TruthTags};
use crate::features::AudioInputs;
use crate::report::{eval_table, scorecard, trend_csv, trend_rows};
use crate::rules::Assessment;

pub const TRANSCRIPT_SUFFIX: &str = ".transcript.json";
pub const TRUTH_SUFFIX: &str = ".truth.json";
pub const ENERGY_SUFFIX: &str = ".energy.csv";
pub const OVERLAPS_SUFFIX: &str = ".overlaps.csv";
pub const ASSESSMENT_SUFFIX: &str = ".assessment.json";

#[derive(Debug, Parser)]
#[command(name = "convassess", version, about = "Assess clinician communication in conversation transcripts")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Reject unknown keys in config and transcripts.
    #[arg(long, global = true)]
    pub strict: bool,
    /// `cmd:<shell command>` or `tcp:<host>:<port>`.
    #[arg(long, global = true, value_name = "SPEC")]
    pub external_classifier: Option<String>,
    /// Override one config value; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = parse_kv)]
    pub set: Vec<(String, String)>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

fn parse_kv(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("`{s}` is not KEY=VALUE"))
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label one conversation and write its assessment and scorecard.
    Analyze {
        transcript: PathBuf,
        #[arg(long)]
        energy: Option<PathBuf>,
        #[arg(long)]
        overlaps: Option<PathBuf>,
    },
    /// Score a directory of transcript and truth files.
    Evaluate { corpus: PathBuf },
    /// Per-session label counts from a directory of assessments.
    Trend {
        dir: PathBuf,
        #[arg(long, default_value = "session_date")]
        group_by: String,
    },
    /// Write a synthetic corpus.
    Gen {
        /// JSON corpus spec; defaults apply when omitted.
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        conversations: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        no_audio: bool,
    },
    /// Configuration commands.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum ConfigAction {
    /// Print the resolved configuration with the source of each value.
    Show,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("file not found: {0}")]
    NotFound(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Corpus(String),
    #[error("{context}: {message}")]
    Assessment { context: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Assessment { .. } => 1,
            _ => 2,
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => CliError::NotFound(path.to_path_buf()),
        _ => CliError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, contents).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn format_err(path: &Path, e: impl ToString) -> CliError {
    CliError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn engine_err(path: &Path, e: EngineError) -> CliError {
    match e {
        EngineError::Transcript(t) => format_err(path, t),
        other => CliError::Assessment {
            context: path.display().to_string(),
            message: other.to_string(),
        },
    }
}

/// Resolves the layered config from the global flags.
pub fn run_config(g: &GlobalArgs) -> Result<RunConfig, CliError> {
    let file = match &g.config {
        Some(p) => Some(String::from_utf8(read(p)?).map_err(|e| format_err(p, e))?),
        None => None,
    };
    let mut flags = g.set.clone();
    if let Some(spec) = &g.external_classifier {
        flags.push(("external_classifier".into(), spec.clone()));
    }
    if let Some(out) = &g.out {
        flags.push(("out".into(), out.display().to_string()));
    }
    if g.strict {
        flags.push(("strict".into(), "true".into()));
    }
    Ok(resolve_config(file.as_deref(), &flags, g.strict)?)
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn load_audio(energy: Option<&Path>, overlaps: Option<&Path>) -> Result<AudioInputs, CliError> {
    let energy = match energy {
        Some(p) => Some(EnergySeries::parse(&read(p)?).map_err(|e| format_err(p, e))?),
        None => None,
    };
    let overlaps = match overlaps {
        Some(p) => Some(load_overlaps(&read(p)?).map_err(|e| format_err(p, e))?),
        None => None,
    };
    Ok(AudioInputs { energy, overlaps })
}

fn analyze_file(engine: &mut Engine, transcript: &Path, audio: &AudioInputs) -> Result<Assessment, CliError> {
    let bytes = read(transcript)?;
    let conv = engine.parse(&bytes).map_err(|e| format_err(transcript, e))?;
    engine.analyze(&conv, audio).map_err(|e| engine_err(transcript, e))
}

/// Writes `<id>.assessment.json` and `<id>.scorecard.md`; returns the
/// assessment.
pub fn cmd_analyze(
    cfg: &RunConfig,
    transcript: &Path,
    energy: Option<&Path>,
    overlaps: Option<&Path>,
) -> Result<Assessment, CliError> {
    let mut engine = build_engine(cfg)?;
    let audio = load_audio(energy, overlaps)?;
    let a = analyze_file(&mut engine, transcript, &audio)?;
    let out = out_dir(cfg);
    write(&out.join(format!("{}{ASSESSMENT_SUFFIX}", a.conversation_id)), &a.to_json())?;
    write(&out.join(format!("{}.scorecard.md", a.conversation_id)), &scorecard(&a))?;
    Ok(a)
}

fn stem<'a>(name: &'a str, suffix: &str) -> Option<&'a str> {
    name.strip_suffix(suffix).filter(|s| !s.is_empty())
}

fn list_dir(dir: &Path) -> Result<Vec<String>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => CliError::NotFound(dir.to_path_buf()),
        _ => CliError::Io {
            path: dir.to_path_buf(),
            source: e,
        },
    })?;
    let mut names = Vec::new();
    for e in entries {
        let e = e.map_err(|e| CliError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        if let Some(n) = e.file_name().to_str() {
            names.push(n.to_string());
        }
    }
    names.sort();
    Ok(names)
}

/// Transcript/truth file pairs keyed by file stem, with orphans reported.
pub fn corpus_pairs(dir: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>, CliError> {
    let names = list_dir(dir)?;
    let transcripts: BTreeMap<&str, &String> = names.iter().filter_map(|n| Some((stem(n, TRANSCRIPT_SUFFIX)?, n))).collect();
    let truths: BTreeMap<&str, &String> = names.iter().filter_map(|n| Some((stem(n, TRUTH_SUFFIX)?, n))).collect();
    if let Some((_, n)) = truths.iter().find(|(k, _)| !transcripts.contains_key(*k)) {
        return Err(CliError::Corpus(format!("truth file {n} has no matching transcript")));
    }
    if let Some((_, n)) = transcripts.iter().find(|(k, _)| !truths.contains_key(*k)) {
        return Err(CliError::Corpus(format!("transcript {n} has no matching truth file")));
    }
    if transcripts.is_empty() {
        return Err(CliError::Corpus(format!("no *{TRANSCRIPT_SUFFIX} files in {}", dir.display())));
    }
    Ok(transcripts
        .into_iter()
        .map(|(id, t)| (id.to_string(), dir.join(t), dir.join(truths[id])))
        .collect())
}

pub fn cmd_evaluate(cfg: &RunConfig, corpus: &Path) -> Result<EvalReport, CliError> {
    let mut engine = build_engine(cfg)?;
    let out = out_dir(cfg);
    let mut pairs = Vec::new();
    let mut seen: BTreeMap<String, PathBuf> = BTreeMap::new();
    for (stem, transcript, truth_path) in corpus_pairs(corpus)? {
        let side = |suffix: &str| {
            let p = corpus.join(format!("{stem}{suffix}"));
            p.exists().then_some(p)
        };
        let audio = load_audio(side(ENERGY_SUFFIX).as_deref(), side(OVERLAPS_SUFFIX).as_deref())?;
        let a = analyze_file(&mut engine, &transcript, &audio)?;
        if let Some(prev) = seen.insert(a.conversation_id.clone(), transcript.clone()) {
            return Err(CliError::Corpus(format!(
                "conversation id `{}` appears in both {} and {}",
                a.conversation_id,
                prev.display(),
                transcript.display()
            )));
        }
        let truth: TruthTags = load_truth(&read(&truth_path)?).map_err(|e| format_err(&truth_path, e))?;
        write(
            &out.join("assessments").join(format!("{}{ASSESSMENT_SUFFIX}", a.conversation_id)),
            &a.to_json(),
        )?;
        pairs.push((a, truth));
    }
    let mut report = evaluate_corpus(&pairs).map_err(|e| CliError::Assessment {
        context: corpus.display().to_string(),
        message: e.to_string(),
    })?;
    report.config = cfg.snapshot();
    write(&out.join("eval_report.json"), &report.to_json())?;
    write(&out.join("eval_report.md"), &eval_table(&report))?;
    Ok(report)
}

pub fn cmd_trend(cfg: &RunConfig, dir: &Path, group_by: &str) -> Result<String, CliError> {
    let mut assessments = Vec::new();
    for name in list_dir(dir)?.iter().filter(|n| n.ends_with(ASSESSMENT_SUFFIX)) {
        let p = dir.join(name);
        assessments.push(Assessment::from_json(&read(&p)?).map_err(|e| format_err(&p, e))?);
    }
    let rows = trend_rows(&assessments, group_by).map_err(|e| CliError::Corpus(format!("{}: {e}", dir.display())))?;
    let csv = trend_csv(&rows);
    write(&out_dir(cfg).join("trend.csv"), &csv)?;
    Ok(csv)
}

#[derive(Serialize)]
struct Manifest<'a> {
    seed: u64,
    spec: &'a CorpusSpec,
    conversations: Vec<&'a str>,
}

/// Writes one file per artefact of each synthetic conversation plus a
/// `manifest.json`.
pub fn write_corpus(dir: &Path, seed: u64, spec: &CorpusSpec, corpus: &[Synthetic]) -> Result<(), CliError> {
    for s in corpus {
        let id = &s.conversation.id;
        write(&dir.join(format!("{id}{TRANSCRIPT_SUFFIX}")), &s.conversation.to_json())?;
        write(&dir.join(format!("{id}{TRUTH_SUFFIX}")), &s.truth.to_json())?;
        if let Some(e) = &s.energy {
            write(&dir.join(format!("{id}{ENERGY_SUFFIX}")), &e.to_text())?;
        }
        if let Some(o) = &s.overlaps {
            write(&dir.join(format!("{id}{OVERLAPS_SUFFIX}")), &o.to_csv())?;
        }
    }
    let manifest = Manifest {
        seed,
        spec,
        conversations: corpus.iter().map(|s| s.conversation.id.as_str()).collect(),
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write(&dir.join("manifest.json"), &text)
}

pub fn cmd_gen(cfg: &RunConfig, seed: u64, spec: &CorpusSpec) -> Result<Vec<Synthetic>, CliError> {
    let corpus = gen_corpus(seed, spec).map_err(|e| CliError::Corpus(e.to_string()))?;
    write_corpus(&out_dir(cfg), seed, spec, &corpus)?;
    Ok(corpus)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = run_config(&cli.global)?;
    match cli.command {
        Command::Analyze {
            transcript,
            energy,
            overlaps,
        } => {
            let a = cmd_analyze(&cfg, &transcript, energy.as_deref(), overlaps.as_deref())?;
            print!("{}", scorecard(&a));
        }
        Command::Evaluate { corpus } => {
            let report = cmd_evaluate(&cfg, &corpus)?;
            print!("{}", eval_table(&report));
        }
        Command::Trend { dir, group_by } => {
            print!("{}", cmd_trend(&cfg, &dir, &group_by)?);
        }
        Command::Gen {
            spec,
            seed,
            conversations,
            noise,
            no_audio,
        } => {
            let mut corpus_spec = match &spec {
                Some(p) => serde_json::from_slice(&read(p)?).map_err(|e| format_err(p, e))?,
                None => CorpusSpec::default(),
            };
            if let Some(n) = conversations {
                corpus_spec.conversations = n;
            }
            if let Some(n) = noise {
                corpus_spec.noise = n;
            }
            if no_audio {
                corpus_spec.audio = false;
            }
            let corpus = cmd_gen(&cfg, seed, &corpus_spec)?;
            println!("wrote {} conversations to {}", corpus.len(), out_dir(&cfg).display());
        }
        Command::Config {
            action: ConfigAction::Show,
        } => print!("{}", cfg.to_text()),
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
