use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use contractplan::agents::Mode;
use contractplan::harness::random::{random_scenario, scenario_file, BehaviorKind};
use contractplan::harness::{emit_report, load_scenario, run_scenario, verify_audit_log, ReportFormat};
use contractplan::ledger::audit::{parse_json_lines, to_json_lines};

#[derive(Parser)]
#[command(
    name = "contractplan",
    version,
    about = "Simulate contract-mediated multi-agent plan execution"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and print its report.
    Run {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "text")]
        report: ReportArg,
        /// Write the receipt log as JSON lines.
        #[arg(long)]
        audit_log: Option<PathBuf>,
        /// Exit 0 only if at least one violation was detected.
        #[arg(long)]
        expect_violation: bool,
    },
    /// Re-check chain integrity, replay, and ordering of an exported audit log.
    Verify { audit_log: PathBuf },
    /// Print a random scenario as JSON.
    GenRandom {
        #[arg(long)]
        actions: usize,
        #[arg(long)]
        agents: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value = "centralized")]
        mode: ModeArg,
        /// Give one agent this adversarial behavior.
        #[arg(long)]
        behavior: Option<BehaviorKind>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Centralized,
    Decentralized,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Centralized => Mode::Centralized,
            ModeArg::Decentralized => Mode::Decentralized,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportArg {
    Text,
    JsonLines,
}

const EXIT_ERROR: u8 = 1;
const EXIT_FINDINGS: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            mode,
            seed,
            report,
            audit_log,
            expect_violation,
        } => {
            let mut sc = match load_scenario(&scenario) {
                Ok(sc) => sc,
                Err(errors) => {
                    for e in errors {
                        eprintln!("error: {e}");
                    }
                    return ExitCode::from(EXIT_ERROR);
                }
            };
            if let Some(m) = mode {
                sc.mode = m.into();
            }
            if let Some(s) = seed {
                sc.seed = s;
            }
            let result = run_scenario(&sc);
            let format = match report {
                ReportArg::Text => ReportFormat::Text,
                ReportArg::JsonLines => ReportFormat::JsonLines,
            };
            print!("{}", emit_report(&result, format));
            if let Some(path) = audit_log {
                if let Err(e) = fs::write(&path, to_json_lines(&result.receipts)) {
                    eprintln!("error: {}: {e}", path.display());
                    return ExitCode::from(EXIT_ERROR);
                }
            }
            let ok = if expect_violation {
                !result.violations.is_empty()
            } else {
                result.is_clean()
            };
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FINDINGS)
            }
        }
        Command::Verify { audit_log } => {
            let text = match fs::read_to_string(&audit_log) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {}: {e}", audit_log.display());
                    return ExitCode::from(EXIT_ERROR);
                }
            };
            let records = match parse_json_lines(&text) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_ERROR);
                }
            };
            let report = verify_audit_log(&records);
            println!("records: {}", report.records);
            println!("blocks: {}", report.blocks);
            println!("chain valid: {}", if report.chain_valid { "yes" } else { "no" });
            println!("completions: {}", report.completions);
            if let Some(e) = &report.error {
                println!("error: {e}");
            }
            if !report.digest_mismatches.is_empty() {
                println!("digest mismatches at records: {:?}", report.digest_mismatches);
            }
            if !report.replay_mismatches.is_empty() {
                println!("replay mismatches at records: {:?}", report.replay_mismatches);
            }
            if report.ordering_violations.is_empty() {
                println!("ordering: ok");
            } else {
                let ids: Vec<String> = report.ordering_violations.iter().map(ToString::to_string).collect();
                println!("ordering violations: {}", ids.join(", "));
            }
            if report.ok() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FINDINGS)
            }
        }
        Command::GenRandom {
            actions,
            agents,
            seed,
            mode,
            behavior,
        } => {
            if agents == 0 {
                eprintln!("error: --agents must be at least 1");
                return ExitCode::from(EXIT_ERROR);
            }
            let sc = random_scenario(actions, agents, seed, mode.into(), behavior);
            let json = serde_json::to_string_pretty(&scenario_file(&sc)).expect("scenario serializes");
            println!("{json}");
            ExitCode::SUCCESS
        }
    }
}
