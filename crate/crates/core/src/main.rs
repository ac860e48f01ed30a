use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};

use pencil_doa::harness::{
    emit_csv, list_presets, preset, run_experiment, write_csv, ExperimentConfig, ScenarioKind, CONFIG_KEYS,
    PRESET_NAMES,
};
use pencil_doa::{DoaError, Result};

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

fn with_overrides(cmd: Command) -> Command {
    let cmd = cmd.arg(
        Arg::new("out")
            .long("out")
            .value_name("PATH")
            .value_parser(clap::value_parser!(PathBuf))
            .help("Write CSV here instead of stdout"),
    );
    CONFIG_KEYS.iter().fold(cmd, |cmd, key| {
        cmd.arg(
            Arg::new(*key)
                .long(flag_name(key))
                .value_name("VALUE")
                .allow_hyphen_values(true)
                .action(ArgAction::Set)
                .help(format!("Override `{key}`")),
        )
    })
}

fn cli() -> Command {
    let config_arg = || {
        Arg::new("config")
            .long("config")
            .short('c')
            .value_name("FILE")
            .value_parser(clap::value_parser!(PathBuf))
            .help("Flat `key = value` configuration file")
    };
    Command::new("pencil-doa")
        .about("Matrix-pencil DoA estimation experiments")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(with_overrides(
            Command::new("run")
                .about("Run an experiment from a configuration file")
                .arg(config_arg()),
        ))
        .subcommand(with_overrides(
            Command::new("preset").about("Run a built-in experiment").arg(
                Arg::new("preset")
                    .value_name("NAME")
                    .required(true)
                    .value_parser(clap::builder::PossibleValuesParser::new(PRESET_NAMES)),
            ),
        ))
        .subcommand(with_overrides(
            Command::new("crlb")
                .about("Evaluate only the Cramer-Rao bounds of a configuration")
                .arg(config_arg()),
        ))
        .subcommand(Command::new("list-presets").about("List built-in experiments"))
}

fn apply_overrides(cfg: &mut ExperimentConfig, m: &ArgMatches) -> Result<()> {
    for key in CONFIG_KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)
                .map_err(|e| e.in_context(format_args!("--{}", flag_name(key))))?;
        }
    }
    Ok(())
}

fn load(m: &ArgMatches) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = m.get_one::<PathBuf>("config") {
        let text = std::fs::read_to_string(path).map_err(|e| DoaError::Io(format!("{}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    Ok(cfg)
}

/// Keeps the bound scenarios of `cfg`, or all of them when none are listed.
fn bounds_only(cfg: &mut ExperimentConfig) {
    let bounds: Vec<ScenarioKind> = cfg.scenarios.iter().copied().filter(|s| s.is_bound()).collect();
    cfg.scenarios = if bounds.is_empty() {
        ScenarioKind::ALL.into_iter().filter(|s| s.is_bound()).collect()
    } else {
        bounds
    };
}

fn execute(cfg: &ExperimentConfig, m: &ArgMatches) -> Result<()> {
    let records = run_experiment(cfg)?;
    match m.get_one::<PathBuf>("out") {
        Some(path) => emit_csv(&records, path),
        None => write_csv(&records, std::io::stdout().lock()),
    }
}

fn dispatch(m: &ArgMatches) -> Result<()> {
    match m.subcommand() {
        Some(("run", sub)) => {
            let mut cfg = load(sub)?;
            apply_overrides(&mut cfg, sub)?;
            execute(&cfg, sub)
        }
        Some(("preset", sub)) => {
            let name = sub.get_one::<String>("preset").expect("required");
            let mut cfg = preset(name)?;
            apply_overrides(&mut cfg, sub)?;
            execute(&cfg, sub)
        }
        Some(("crlb", sub)) => {
            let mut cfg = load(sub)?;
            apply_overrides(&mut cfg, sub)?;
            bounds_only(&mut cfg);
            execute(&cfg, sub)
        }
        Some(("list-presets", _)) => {
            let mut out = std::io::stdout().lock();
            for (name, summary) in list_presets() {
                writeln!(out, "{name:<10} {summary}")?;
            }
            Ok(())
        }
        _ => unreachable!("subcommand required"),
    }
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    match dispatch(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
