//! Library side of the `axial` command-line tool.
//!
//! Every subcommand resolves a [`RunConfig`] from defaults, an optional
//! `--config` file and flags (in that order), runs, and writes a single
//! output whose header echoes the resolved configuration.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use clap::{Arg, ArgAction, ArgMatches, Command};

pub mod commands;
pub mod settings;

pub use settings::{CommandName, RunConfig};

/// Exit statuses of the `axial` binary.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const NUMERICAL: i32 = 2;
    pub const CHECK_FAILED: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid value for {key}: {reason}")]
    Value { key: String, reason: String },
    #[error(transparent)]
    Numerical(#[from] axial_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("check failed:\n{}", .0.join("\n"))]
    Check(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Value { .. } => exit::USAGE,
            // Out-of-domain physical parameters are caught by the core.
            Self::Numerical(axial_core::Error::InvalidParameter { .. }) => exit::USAGE,
            Self::Numerical(_) | Self::Io(_) => exit::NUMERICAL,
            Self::Check(_) => exit::CHECK_FAILED,
        }
    }
}

const GLOBAL_KEYS: [(&str, &str); 3] = [
    ("seed", "RNG seed (decimal or 0x hex) [default: 0xA71A10C]"),
    ("out", "Output file; `-` or absent writes to stdout"),
    ("format", "Output format: csv or json"),
];

pub fn cli() -> Command {
    let mut cmd = Command::new("axial")
        .about("Axial localization with Gaussian beams: Fisher information scans and simulated experiments")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("FILE")
                .help("key=value file mirroring the flags; flags win"),
        )
        .arg(
            Arg::new("check")
                .long("check")
                .global(true)
                .action(ArgAction::SetTrue)
                .help("Verify the run against its acceptance tolerances; exit 3 on failure"),
        );
    for (key, help) in GLOBAL_KEYS {
        cmd = cmd.arg(Arg::new(key).long(key).global(true).value_name("VALUE").help(help));
    }
    for name in CommandName::ALL {
        let mut sub = Command::new(name.as_str()).about(name.about());
        for (key, help) in name.keys() {
            sub = sub.arg(
                Arg::new(key)
                    .long(key)
                    .value_name("VALUE")
                    .allow_negative_numbers(true)
                    .help(help),
            );
        }
        cmd = cmd.subcommand(sub);
    }
    cmd
}

/// Resolves the configuration for one parsed invocation.
pub fn resolve(matches: &ArgMatches) -> Result<RunConfig, CliError> {
    let (name, sub) = matches
        .subcommand()
        .ok_or_else(|| CliError::Usage("no subcommand".into()))?;
    let command: CommandName = name.parse()?;
    let mut config = RunConfig::new(command);

    if let Some(path) = sub.get_one::<String>("config") {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {path}: {e}")))?;
        for (key, value) in settings::parse_config_file(&text)? {
            config.set(&key, &value)?;
        }
    }
    for (key, _) in GLOBAL_KEYS.iter().copied().chain(command.keys()) {
        if let Some(value) = sub.get_one::<String>(key) {
            config.set(key, value)?;
        }
    }
    if sub.get_flag("check") {
        config.check = true;
    }
    Ok(config)
}

/// Runs `axial` with the given arguments and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match cli().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    match resolve(&matches).and_then(|config| run(&config)) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("axial: {e}");
            e.exit_code()
        }
    }
}

/// Executes a resolved configuration, writing its output (and sidecar, if
/// any). Check failures are reported after the output is written.
pub fn run(config: &RunConfig) -> Result<(), CliError> {
    let output = commands::execute(config)?;
    match &config.out {
        Some(path) => {
            fs::write(path, &output.body)?;
            if let Some(sidecar) = &output.sidecar {
                fs::write(sidecar_path(path), sidecar)?;
            }
        }
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(output.body.as_bytes())?;
            stdout.flush()?;
        }
    }
    if config.check && !output.failures.is_empty() {
        return Err(CliError::Check(output.failures));
    }
    Ok(())
}

/// Sidecar next to `out`: `scan.csv` -> `scan.meta.json`.
pub fn sidecar_path(out: &str) -> std::path::PathBuf {
    Path::new(out).with_extension("meta.json")
}
