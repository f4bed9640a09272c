mod config;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use itoadj::adjoint::{adjoint_j, adjoint_l, adjoint_p, adjoint_oracle, closed_l_matrix};
use itoadj::integrate::{assemble_matrix, OpTag};
use itoadj::kernel::clark_kernel;
use itoadj::process::{flatten, flatten_marked, Process};
use itoadj::space::{RandomVariable, ScenarioTree, DEFAULT_ATOM_CAP};
use itoadj::verify::{run_suite, CheckReport};

use config::{Config, Overrides};

#[derive(Parser)]
#[command(name = "itoadj", about = "Stochastic integration operators and their conjugates on scenario trees", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the scenario tree and print its shape
    Space {
        #[command(flatten)]
        overrides: Overrides,
        /// Write the tree as JSON
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the verification suite and emit a report
    Check {
        #[command(flatten)]
        overrides: Overrides,
        /// Report JSON path (overrides config output.json_path)
        #[arg(long)]
        json: Option<PathBuf>,
        /// Report CSV path (overrides config output.csv_path)
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Extract the representation kernel of a terminal variable
    Kernel {
        #[command(flatten)]
        overrides: Overrides,
        /// Terminal variable as a RandomVariable JSON file
        #[arg(long, conflicts_with = "named")]
        input: Option<PathBuf>,
        /// Built-in variable: w1, w1sq, or const:<value>
        #[arg(long)]
        named: Option<String>,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Apply a conjugate operator to a process file
    Adjoint {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_enum)]
        which: Which,
        /// Input Process JSON file
        #[arg(long)]
        input: PathBuf,
        /// Output JSON path (stdout when omitted)
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also compute the Gram-transpose oracle and print the max delta
        #[arg(long)]
        compare_oracle: bool,
    },
    /// Summarize a saved report (optionally re-emit as CSV)
    Report {
        /// Report JSON file produced by `check`
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    L,
    J,
    P,
}

// exit 0: success, 1: check failure, 2: usage/validation
fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}

/// Usage/validation problems (exit 2), as opposed to check failures.
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

impl From<config::ConfigError> for UsageError {
    fn from(e: config::ConfigError) -> Self {
        UsageError(e.to_string())
    }
}

impl From<itoadj::Error> for UsageError {
    fn from(e: itoadj::Error) -> Self {
        UsageError(e.to_string())
    }
}

impl From<std::io::Error> for UsageError {
    fn from(e: std::io::Error) -> Self {
        UsageError(format!("io error: {e}"))
    }
}

impl From<serde_json::Error> for UsageError {
    fn from(e: serde_json::Error) -> Self {
        UsageError(format!("json error: {e}"))
    }
}

fn build_tree(config: &Config) -> Result<ScenarioTree, UsageError> {
    Ok(ScenarioTree::build(config.model, config.n_steps, config.mark_set(), DEFAULT_ATOM_CAP)?)
}

fn run() -> Result<ExitCode, UsageError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Space { overrides, output } => {
            let config = Config::resolve(&overrides)?;
            let tree = build_tree(&config)?;
            let sizes: Vec<String> = tree.level_sizes().iter().map(|s| s.to_string()).collect();
            println!("model: {}", tree.model.name());
            println!("n_steps: {}", tree.n_steps());
            println!("atoms per level: {}", sizes.join(","));
            if let Some(path) = output {
                fs::write(&path, serde_json::to_string_pretty(&tree)?)?;
                println!("tree written to {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { overrides, json, csv } => {
            let config = Config::resolve(&overrides)?;
            let report = run_suite(&config.suite())?;
            for c in &report.checks {
                let status = if c.passed {
                    "PASS"
                } else if c.report_only {
                    "INFO"
                } else {
                    "FAIL"
                };
                println!("{status} {}: observed {} bound {}", c.id, c.observed, c.bound);
            }
            let json_path = json.or(config.output.json_path.clone());
            let csv_path = csv.or(config.output.csv_path.clone());
            if let Some(path) = json_path {
                fs::write(&path, report.to_json())?;
            }
            if let Some(path) = csv_path {
                fs::write(&path, report.to_csv())?;
            }
            if report.all_passed() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
        Command::Kernel { overrides, input, named, json, csv } => {
            let config = Config::resolve(&overrides)?;
            let tree = build_tree(&config)?;
            let xi = match (&input, &named) {
                (Some(path), None) => {
                    let text = fs::read_to_string(path)?;
                    serde_json::from_str::<RandomVariable>(&text)?
                }
                (None, Some(name)) => named_variable(&tree, name)?,
                _ => return Err(UsageError("kernel needs exactly one of --input or --named".into())),
            };
            let clark = clark_kernel(&tree, &xi)?;
            println!("mean: {}", clark.mean);
            if let Some(path) = json {
                fs::write(&path, serde_json::to_string_pretty(&clark)?)?;
            }
            if let Some(path) = csv {
                let mut out = String::from("k,t,atom,lambda\r\n");
                for (k, level) in clark.kernel.values.iter().enumerate() {
                    for (atom, v) in level.iter().enumerate() {
                        out.push_str(&format!("{k},{},{atom},{v}\r\n", tree.grid.t(k)));
                    }
                }
                fs::write(&path, out)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Adjoint { overrides, which, input, output, compare_oracle } => {
            let config = Config::resolve(&overrides)?;
            let tree = build_tree(&config)?;
            let text = fs::read_to_string(&input)?;
            let chi: Process = serde_json::from_str(&text)?;
            let (serialized, image_flat) = match which {
                Which::L => {
                    let out = adjoint_l(&tree, &chi)?;
                    (serde_json::to_string_pretty(&out)?, flatten(&out))
                }
                Which::J => {
                    let out = adjoint_j(&tree, &chi)?;
                    (serde_json::to_string_pretty(&out)?, flatten(&out))
                }
                Which::P => {
                    let out = adjoint_p(&tree, &chi)?;
                    (serde_json::to_string_pretty(&out)?, flatten_marked(&out))
                }
            };
            if compare_oracle {
                let map = match which {
                    Which::L => closed_l_matrix(&tree)?,
                    Which::J => assemble_matrix(&tree, OpTag::J)?,
                    Which::P => assemble_matrix(&tree, OpTag::P)?,
                };
                let via_oracle = adjoint_oracle(&map).apply(&flatten(&chi));
                let max_delta = image_flat
                    .iter()
                    .zip(&via_oracle)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                println!("max oracle delta: {max_delta:e}");
            }
            match output {
                Some(path) => fs::write(&path, serialized)?,
                None => println!("{serialized}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { input, csv } => {
            let text = fs::read_to_string(&input)?;
            let report: CheckReport = serde_json::from_str(&text)?;
            let failed = report.checks.iter().filter(|c| !c.passed && !c.report_only).count();
            println!(
                "{} checks, {} failed (seed {}, version {})",
                report.checks.len(),
                failed,
                report.metadata.seed,
                report.metadata.version
            );
            for c in report.checks.iter().filter(|c| !c.passed && !c.report_only) {
                println!("FAIL {}: observed {} bound {}", c.id, c.observed, c.bound);
            }
            if let Some(path) = csv {
                fs::write(&path, report.to_csv())?;
            }
            if failed == 0 {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
    }
}

fn named_variable(tree: &ScenarioTree, name: &str) -> Result<RandomVariable, UsageError> {
    if let Some(v) = name.strip_prefix("const:") {
        let c: f64 = v
            .parse()
            .map_err(|_| UsageError(format!("const value {v:?} is not a number")))?;
        return Ok(RandomVariable::new(
            tree.terminal_level(),
            vec![c; tree.atoms(tree.terminal_level()).len()],
        ));
    }
    match name {
        "w1" => Ok(tree.terminal_wiener()),
        "w1sq" => {
            let w = tree.terminal_wiener();
            Ok(RandomVariable::new(w.level, w.values.iter().map(|v| v * v).collect()))
        }
        other => Err(UsageError(format!(
            "unknown variable {other:?}; expected w1, w1sq, or const:<value>"
        ))),
    }
}
