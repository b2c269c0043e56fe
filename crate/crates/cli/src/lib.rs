//! Command-line front end: argument parsing, manifests and exit codes.
//!
//! Exit codes: 0 on success, 2 on a usage or precondition failure (with a
//! JSON error object on stderr), 1 on an internal error.

pub mod args;
pub mod commands;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tvls_core::{Error, Model};

use args::{Cli, ReplayArgs, Run, Top};
use commands::{execute, Models};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, files or parameters: exit 2.
    Precondition { kind: &'static str, message: String },
    /// Exit 1.
    Internal(String),
}

impl CliError {
    fn usage(field: &str, reason: &str) -> Self {
        CliError::Precondition {
            kind: "invalid_parameter",
            message: format!("invalid parameter `{field}`: {reason}"),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Precondition { .. } => 2,
            CliError::Internal(_) => 1,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            CliError::Precondition { kind, message } => json!({ "error": kind, "message": message }),
            CliError::Internal(message) => json!({ "error": "internal", "message": message }),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::Postcondition(_) => return CliError::Internal(e.to_string()),
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::InvalidGrid(_) => "invalid_grid",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::ZeroVariance => "zero_variance",
            Error::NotContinuous(_) => "not_continuous",
            Error::NotDifferentiable(_) => "not_differentiable",
            Error::Divergence { .. } => "divergence",
            Error::NotCommutative { .. } => "not_commutative",
            Error::SingularControllability { .. } => "singular_controllability",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::MissingCertificate(_) => "missing_certificate",
            Error::OffGrid { .. } => "off_grid",
            Error::Model(_) => "model",
        };
        CliError::Precondition {
            kind,
            message: e.to_string(),
        }
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub run: Run,
    /// Model JSON by argument name, inlined so the manifest stands alone.
    pub models: BTreeMap<String, Value>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub summary: Value,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return 0;
            }
            return fail(&CliError::Precondition {
                kind: "usage",
                message: e.to_string().trim_end().to_string(),
            });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> i32 {
    eprintln!("{}", e.to_json());
    e.exit_code()
}

fn dispatch(top: Top) -> Result<(), CliError> {
    let threads = configure_threads()?;
    match top {
        Top::Run(run) => {
            let inputs: Vec<PathBuf> = run.model_paths().into_iter().map(|(_, p)| p.clone()).collect();
            let models = load_model_files(&run)?;
            perform(run, models, &inputs, threads, true)
        }
        Top::Replay(r) => replay(r, threads),
    }
}

/// Caps the global thread pool from `TVLS_THREADS`.
fn configure_threads() -> Result<Option<usize>, CliError> {
    let Ok(raw) = std::env::var("TVLS_THREADS") else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::usage("TVLS_THREADS", "must be a positive integer"))?;
    // a pool that is already built (repeated in-process runs) is kept
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(Some(n))
}

fn load_model_files(run: &Run) -> Result<BTreeMap<String, Value>, CliError> {
    let mut out = BTreeMap::new();
    for (key, path) in run.model_paths() {
        let text = fs::read_to_string(path).map_err(|e| CliError::Precondition {
            kind: "model",
            message: format!("cannot read --{key} {}: {e}", path.display()),
        })?;
        let value: Value = serde_json::from_str(&text).map_err(|e| CliError::Precondition {
            kind: "model",
            message: format!("--{key} {}: malformed JSON: {e}", path.display()),
        })?;
        out.insert(key.to_string(), value);
    }
    Ok(out)
}

fn parse_models(values: &BTreeMap<String, Value>) -> Result<Models, CliError> {
    values
        .iter()
        .map(|(key, v)| {
            let m = Model::from_json_value(v.clone()).map_err(|e| CliError::Precondition {
                kind: "model",
                message: format!("--{key}: {e}"),
            })?;
            Ok((key.clone(), m.state_space()))
        })
        .collect()
}

fn perform(mut run: Run, model_json: BTreeMap<String, Value>, inputs: &[PathBuf], threads: Option<usize>, write_manifest: bool) -> Result<(), CliError> {
    let models = parse_models(&model_json)?;
    let out_path = run.output().out.clone();
    let manifest_path = run.output().manifest.clone().unwrap_or_else(|| match &out_path {
        Some(p) => {
            let mut s = p.clone().into_os_string();
            s.push(".manifest.json");
            PathBuf::from(s)
        }
        None => PathBuf::from(format!("tvls-{}.manifest.json", run.name())),
    });
    let mut targets: Vec<&Path> = out_path.iter().map(PathBuf::as_path).collect();
    if write_manifest {
        targets.push(&manifest_path);
    }
    for target in &targets {
        if let Some(input) = inputs.iter().find(|i| same_file(i, target)) {
            return Err(CliError::Precondition {
                kind: "invalid_parameter",
                message: format!("output {} would overwrite input {}", target.display(), input.display()),
            });
        }
    }

    let outcome = execute(&mut run, &models)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    match &out_path {
        Some(p) => fs::write(p, &outcome.body).map_err(|e| CliError::Internal(format!("cannot write {}: {e}", p.display())))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(&outcome.body)
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Internal(format!("cannot write to stdout: {e}")))?
        }
    }
    if write_manifest {
        run.output_mut().manifest = Some(manifest_path.clone());
        let manifest = Manifest {
            tool: "tvls".into(),
            version: VERSION.into(),
            run,
            models: model_json,
            seeds: outcome.seeds,
            threads,
            summary: outcome.summary,
            warnings: outcome.warnings,
        };
        let mut text = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Internal(e.to_string()))?;
        text.push(b'\n');
        fs::write(&manifest_path, text).map_err(|e| CliError::Internal(format!("cannot write {}: {e}", manifest_path.display())))?;
    }
    Ok(())
}

/// Reruns the manifest's command with its recorded parameters and inlined
/// models. A new manifest is written only when `--out` is given.
fn replay(r: ReplayArgs, threads: Option<usize>) -> Result<(), CliError> {
    let text = fs::read_to_string(&r.manifest).map_err(|e| CliError::Precondition {
        kind: "manifest",
        message: format!("cannot read {}: {e}", r.manifest.display()),
    })?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| CliError::Precondition {
        kind: "manifest",
        message: format!("{}: {e}", r.manifest.display()),
    })?;
    let mut run = manifest.run;
    for (key, _) in run.model_paths() {
        if !manifest.models.contains_key(key) {
            return Err(CliError::Precondition {
                kind: "manifest",
                message: format!("{}: model `{key}` is not inlined", r.manifest.display()),
            });
        }
    }
    let write_manifest = r.out.is_some();
    let output = run.output_mut();
    output.out = r.out;
    output.manifest = None;
    perform(run, manifest.models, &[r.manifest], threads, write_manifest)
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}
