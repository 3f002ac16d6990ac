use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use reslab::lab::{self, ExperimentConfig};
use reslab::Error;

/// Experiment harness for deep linear chains and convex residual networks.
#[derive(Parser)]
#[command(name = "reslab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifacts and manifest.
    Run {
        config: PathBuf,
        /// Validate and print the plan without running.
        #[arg(long)]
        dry_run: bool,
    },
    /// Check a config and list every violation.
    Validate { config: PathBuf },
    /// Write long-format plot CSVs next to a run's manifest.
    Plotdata { manifest: PathBuf },
}

fn load_valid(path: &Path) -> Result<ExperimentConfig, Error> {
    let config = ExperimentConfig::load(path)?;
    let bad = lab::validate(&config);
    if bad.is_empty() {
        Ok(config)
    } else {
        Err(Error::Validation(bad))
    }
}

/// Lines to print on success.
fn execute(cli: Cli, output_env: Option<OsString>) -> Result<Vec<String>, Error> {
    let mut lines = Vec::new();
    match cli.command {
        Command::Validate { config } => {
            load_valid(&config)?;
            lines.push("ok".into());
        }
        Command::Run { config, dry_run } => {
            let config = load_valid(&config)?;
            let out = lab::resolve_output_dir(&config, output_env);
            if dry_run {
                lines.push(format!("{} valid; would write to {}", config.experiment.kind(), out.display()));
            } else {
                let manifest = lab::run(&config, &out)?;
                lines.extend(manifest.artifacts.iter().map(|a| out.join(&a.path).display().to_string()));
                lines.push(out.join(lab::MANIFEST_FILE).display().to_string());
            }
        }
        Command::Plotdata { manifest } => {
            lines.extend(lab::plotdata(&manifest)?.iter().map(|p| p.display().to_string()));
        }
    }
    Ok(lines)
}

/// 0 on success, 2 for validation failures, 1 for anything else.
fn exit_code(result: &Result<Vec<String>, Error>) -> u8 {
    match result {
        Ok(_) => 0,
        Err(e) if e.is_validation() => 2,
        Err(_) => 1,
    }
}

fn main() -> ExitCode {
    let result = execute(Cli::parse(), std::env::var_os(lab::OUTPUT_DIR_ENV));
    match &result {
        Ok(lines) => lines.iter().for_each(|l| println!("{l}")),
        Err(e) if e.is_validation() => eprintln!("{e}"),
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str], env: Option<&Path>) -> (u8, Vec<String>) {
        let cli = Cli::try_parse_from(std::iter::once("reslab").chain(args.iter().copied())).unwrap();
        let result = execute(cli, env.map(|p| p.as_os_str().to_owned()));
        let code = exit_code(&result);
        (code, result.unwrap_or_default())
    }

    fn write(dir: &Path, name: &str, text: &str) -> String {
        let path = dir.join(name);
        std::fs::write(&path, text).unwrap();
        path.display().to_string()
    }

    const SWEEP: &str = r#"{"seed": 3, "output_dir": "OUT",
        "experiment": {"kind": "scalar_sweep", "depths": [2], "lambdas": [2.0], "max_iters": 100}}"#;

    #[test]
    fn validate_exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let good = write(dir.path(), "good.json", SWEEP);
        assert_eq!(call(&["validate", &good], None), (0, vec!["ok".to_string()]));
        let zero = write(dir.path(), "zero.json", &SWEEP.replace("[2.0]", "[0.0]"));
        assert_eq!(call(&["validate", &zero], None).0, 2);
        let typo = write(dir.path(), "typo.json", &SWEEP.replace("max_iters", "max_iter"));
        assert_eq!(call(&["validate", &typo], None).0, 2);
        let missing = dir.path().join("absent.json").display().to_string();
        assert_eq!(call(&["validate", &missing], None).0, 1);
    }

    #[test]
    fn run_writes_to_config_dir_and_env_override() {
        let dir = tempfile::tempdir().unwrap();
        let configured = dir.path().join("configured");
        let text = SWEEP.replace("OUT", &configured.display().to_string().replace('\\', "/"));
        let config = write(dir.path(), "sweep.json", &text);

        let (code, lines) = call(&["run", &config, "--dry-run"], None);
        assert_eq!(code, 0);
        assert!(lines[0].contains("scalar_sweep"));
        assert!(!configured.exists());

        let (code, lines) = call(&["run", &config], None);
        assert_eq!(code, 0);
        assert!(configured.join(lab::MANIFEST_FILE).exists());
        assert!(lines.last().unwrap().ends_with(lab::MANIFEST_FILE));

        let overridden = dir.path().join("env");
        assert_eq!(call(&["run", &config], Some(&overridden)).0, 0);
        let a = std::fs::read(configured.join("sweep.csv")).unwrap();
        let b = std::fs::read(overridden.join("sweep.csv")).unwrap();
        assert_eq!(a, b);

        let manifest = overridden.join(lab::MANIFEST_FILE).display().to_string();
        let (code, lines) = call(&["plotdata", &manifest], None);
        assert_eq!(code, 0);
        assert!(lines[0].ends_with("sweep.csv"));
    }

    #[test]
    fn numeric_failure_exits_one() {
        let dir = tempfile::tempdir().unwrap();
        let text = r#"{"experiment": {"kind": "fit1d", "depth": 2, "grid_size": 11, "bias_ranges": [[0.0, 1.0]],
            "seeds": [1], "step": 100.0, "max_epochs": 100}}"#;
        let config = write(dir.path(), "blowup.json", text);
        let (code, _) = call(&["run", &config], Some(&dir.path().join("out")));
        assert_eq!(code, 1);
        assert!(!dir.path().join("out").join(lab::MANIFEST_FILE).exists());
    }

    #[test]
    fn dry_run_rejects_invalid_config() {
        let dir = tempfile::tempdir().unwrap();
        let config = write(dir.path(), "bad.json", &SWEEP.replace("\"depths\": [2]", "\"depths\": []"));
        assert_eq!(call(&["run", &config, "--dry-run"], None).0, 2);
    }
}
