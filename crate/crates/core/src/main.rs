use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use layerlab::harness::{self, ExperimentConfig, SweepReport};

#[derive(Parser)]
#[command(
    name = "layerlab",
    version,
    about = "Allen-Cahn and FitzHugh-Nagumo interface experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `key = value` config file; defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Layer profile as a (z, u) CSV.
    Profile,
    /// Allen-Cahn runs with field snapshots.
    Simulate,
    /// Sharp-interface flow alone.
    Limit,
    /// Allen-Cahn runs compared with the limit flow.
    Sweep,
    /// Layer generation times.
    Generation,
    /// Reaction-diffusion runs compared with the coupled limit.
    Fhn,
}

enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

fn load(path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Config)?;
    ExperimentConfig::parse(&text)
        .with_context(|| format!("in {}", path.display()))
        .map_err(Failure::Config)
}

fn summary(report: &SweepReport) {
    for r in &report.records {
        let diag = if r.diagnostic.is_empty() {
            String::new()
        } else {
            format!(" ({})", r.diagnostic)
        };
        println!("eps = {}: {}{diag}", r.eps, r.status.as_str());
    }
    print!("{}", report.fit_text());
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    let cfg = load(cli.config.as_deref())?;
    let out = cli.out.as_path();
    let sweep = |r: Result<SweepReport, harness::HarnessError>| -> Result<bool, Failure> {
        let r = r.map_err(|e| match e {
            harness::HarnessError::Config(_) => Failure::Config(e.into()),
            e => Failure::Run(e.into()),
        })?;
        summary(&r);
        Ok(!r.any_aborted())
    };
    match cli.command {
        Command::Profile => harness::write_profile(&cfg, out)
            .map(|_| true)
            .map_err(|e| Failure::Run(e.into())),
        Command::Limit => harness::run_limit(&cfg, out)
            .map(|_| true)
            .map_err(|e| Failure::Run(e.into())),
        Command::Simulate => sweep(harness::run_simulation(&cfg, out)),
        Command::Sweep => sweep(harness::run_validity_sweep(&cfg, Some(out))),
        Command::Generation => sweep(harness::run_generation_study(&cfg, Some(out))),
        Command::Fhn => sweep(harness::run_fhn_sweep(&cfg, Some(out))),
    }
}

fn exit_code(cli: &Cli) -> u8 {
    match run(cli) {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            1
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(exit_code(&Cli::parse()))
}

#[cfg(test)]
mod tests {
    use std::fs;
    use std::path::Path;

    use layerlab::harness::report::COLUMNS;

    use super::*;

    const SMALL: &str = "\
    eps_list = 0.1, 0.08
    mu = 1.1
    t_end = 0.03
    domain = -0.5, -0.5, 0.5, 0.5
    r0 = 0.3
    observers = 4
    ";

    fn run(args: &[&str], config: Option<&Path>, out: &Path) -> u8 {
        let mut argv: Vec<String> = std::iter::once("layerlab")
            .chain(args.iter().copied())
            .map(String::from)
            .collect();
        argv.extend(["--out".to_string(), out.display().to_string()]);
        if let Some(c) = config {
            argv.extend(["--config".to_string(), c.display().to_string()]);
        }
        exit_code(&Cli::try_parse_from(argv).expect("arguments parse"))
    }

    fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        fs::write(&path, text).unwrap();
        path
    }

    #[test]
    fn sweep_writes_report_and_exits_zero() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), "small.cfg", SMALL);
        let out = dir.path().join("out");
        assert_eq!(run(&["sweep"], Some(&cfg), &out), 0);
        let report = fs::read_to_string(out.join("report.csv")).unwrap();
        let mut lines = report.lines();
        assert_eq!(lines.next().unwrap(), COLUMNS.join(","));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 2);
        let hash = ExperimentConfig::parse(SMALL).unwrap().hash();
        assert!(rows.iter().all(|r| r.contains(",ok,") && r.contains(&hash)));
        for sub in ["eps_0.1", "eps_0.08"] {
            for f in [
                "u_final.pgm",
                "u_final.pgm.range",
                "interface_eps.csv",
                "interface_limit.csv",
                "theta.csv",
                "observers.csv",
            ] {
                assert!(out.join(sub).join(f).is_file(), "{sub}/{f}");
            }
        }
        assert!(fs::read_to_string(out.join("fit.txt"))
            .unwrap()
            .starts_with("quantity"));
    }

    #[test]
    fn config_errors_exit_one() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let unknown = write_config(dir.path(), "bad.cfg", "epsilon = 0.1\n");
        assert_eq!(run(&["sweep"], Some(&unknown), &out), 1);
        let invalid = write_config(dir.path(), "mu.cfg", "mu = 0.5\n");
        assert_eq!(run(&["generation"], Some(&invalid), &out), 1);
        assert_eq!(
            run(&["sweep"], Some(&dir.path().join("missing.cfg")), &out),
            1
        );
    }

    #[test]
    fn aborted_record_exits_two() {
        let dir = tempfile::tempdir().unwrap();
        // mu t_eps exceeds t_end for eps = 0.1 only
        let cfg = write_config(
            dir.path(),
            "late.cfg",
            &SMALL.replace("mu = 1.1", "mu = 1.5"),
        );
        let out = dir.path().join("out");
        assert_eq!(run(&["sweep"], Some(&cfg), &out), 2);
        let report = fs::read_to_string(out.join("report.csv")).unwrap();
        let rows: Vec<&str> = report.lines().skip(1).collect();
        assert!(rows[0].contains(",aborted,"));
        assert!(rows[1].contains(",ok,"));
    }

    #[test]
    fn reruns_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), "small.cfg", SMALL);
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        assert_eq!(run(&["sweep"], Some(&cfg), &a), 0);
        assert_eq!(run(&["sweep"], Some(&cfg), &b), 0);
        for f in [
            "report.csv",
            "fit.txt",
            "config.txt",
            "eps_0.08/observers.csv",
            "eps_0.08/u_final.pgm",
            "eps_0.1/theta.csv",
        ] {
            assert_eq!(
                fs::read(a.join(f)).unwrap(),
                fs::read(b.join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn embedded_config_reproduces_report() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), "small.cfg", SMALL);
        let first = dir.path().join("first");
        assert_eq!(run(&["sweep"], Some(&cfg), &first), 0);
        let second = dir.path().join("second");
        assert_eq!(run(&["sweep"], Some(&first.join("config.txt")), &second), 0);
        assert_eq!(
            fs::read(first.join("report.csv")).unwrap(),
            fs::read(second.join("report.csv")).unwrap()
        );
        assert_eq!(
            fs::read(first.join("config.txt")).unwrap(),
            fs::read(second.join("config.txt")).unwrap()
        );
    }

    #[test]
    fn profile_and_limit_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        assert_eq!(run(&["profile"], None, &out), 0);
        let profile = fs::read_to_string(out.join("profile.csv")).unwrap();
        let rows: Vec<(f64, f64)> = profile
            .lines()
            .skip(1)
            .map(|l| {
                let (z, u) = l.split_once(',').unwrap();
                (z.parse().unwrap(), u.parse().unwrap())
            })
            .collect();
        assert!(rows
            .iter()
            .all(|&(z, u)| (u - (z / 2f64.sqrt()).tanh()).abs() < 1e-5));

        let cfg = write_config(dir.path(), "small.cfg", SMALL);
        assert_eq!(run(&["limit"], Some(&cfg), &out), 0);
        let radius = fs::read_to_string(out.join("radius.csv")).unwrap();
        let last = radius.lines().last().unwrap();
        let (t, r): (f64, f64) = {
            let (t, r) = last.split_once(',').unwrap();
            (t.parse().unwrap(), r.parse().unwrap())
        };
        assert!((t - 0.03).abs() < 1e-12);
        assert!((r - (0.09f64 - 0.06).sqrt()).abs() < 1e-6);
        assert!(out.join("curve_004.csv").is_file() && out.join("times.csv").is_file());
    }

    #[test]
    fn simulate_writes_snapshots() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), "small.cfg", SMALL);
        let out = dir.path().join("out");
        assert_eq!(run(&["simulate"], Some(&cfg), &out), 0);
        let obs = fs::read_to_string(out.join("eps_0.1").join("observers.csv")).unwrap();
        assert_eq!(obs.lines().count(), 5);
        let energies: Vec<f64> = obs
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert!(energies.windows(2).all(|w| w[1] <= w[0]));
        assert!(out.join("eps_0.1").join("u_003.pgm").is_file());
    }
}
