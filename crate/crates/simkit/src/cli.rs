//! The `rla` command line.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rla_core::audit::{run_bayesian_audit, run_conservative_audit, AuditTranscript, Verdict};
use rla_core::competitive::{run_judge, CompetitiveOutcome, CompetitiveVerdict, JudgeConfig, LabeledCvr};
use rla_core::cvr::{read_flat_bayesian_csv, ConservativeCvr, Cvr};
use rla_core::environment::{make_environment, EnvKind};
use rla_core::manifest::{election_from_json, election_to_json};
use rla_core::stattest::KaplanMarkovConfig;

use crate::error::{Error, Result};
use crate::generate::{gen_election_and_cvrs, Fidelity};
use crate::model::{ApproachKind, ErrorModel};
use crate::table::{run_table, TableId};

/// Environment variable holding the worker-thread count.
pub const WORKERS_VAR: &str = "RLA_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "rla", version, about = "Ballot-comparison and competitive risk-limiting audits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo sample-size table as CSV.
    Simulate(SimulateArgs),
    /// Comparison audit of a CVR against an election file.
    Audit(AuditArgs),
    /// Competitive audit of several advocates' CVRs.
    Compete(CompeteArgs),
    /// Write an election file and CVR realizing the error model.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.1)]
    pub gamma: f64,
    /// Draw cap; defaults to the election size.
    #[arg(long)]
    pub max_draws: Option<u64>,
}

impl TestArgs {
    fn config(&self) -> Result<KaplanMarkovConfig> {
        Ok(KaplanMarkovConfig::new(self.gamma, self.alpha, self.max_draws)?)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub table: u8,
    #[arg(long, default_value_t = 5000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Restrict to these row keys (margins for table 1, probabilities otherwise).
    #[arg(long, value_delimiter = ',')]
    pub rows: Option<Vec<f64>>,
    #[command(flatten)]
    pub test: TestArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Bayesian,
    Conservative,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Election file (the ground truth the environment answers from).
    #[arg(long)]
    pub election: PathBuf,
    /// CVR as JSON, or as a flat Bayesian CSV when the name ends in `.csv`.
    #[arg(long)]
    pub cvr: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Mode,
    #[arg(long, default_value = "honest")]
    pub env: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Where to write the full transcript.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    #[command(flatten)]
    pub test: TestArgs,
}

#[derive(Debug, Args)]
pub struct CompeteArgs {
    /// Conservative CVR files; each is labeled by its file stem.
    #[arg(long, num_args = 1.., required = true)]
    pub cvrs: Vec<PathBuf>,
    /// Election file the environment answers from.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 15)]
    pub t: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "honest")]
    pub env: String,
    /// Where to write the full verdict with every request.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 0.01)]
    pub margin: f64,
    /// Shared marginal-reading probability; overridden by the two below.
    #[arg(long, default_value_t = 0.5)]
    pub p_m: f64,
    #[arg(long)]
    pub p_cvr: Option<f64>,
    #[arg(long)]
    pub p_audit: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub size: usize,
    #[arg(long, default_value = "bayesian")]
    pub approach: String,
    /// `model`, `canonical`, `consistent:EPS`, or `adversarial:CANDIDATE`.
    #[arg(long, default_value = "model")]
    pub fidelity: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub election_out: PathBuf,
    #[arg(long)]
    pub cvr_out: PathBuf,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_cvr(path: &Path) -> Result<Cvr> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let file = fs::File::open(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        return Ok(Cvr::Bayesian(read_flat_bayesian_csv(file)?));
    }
    Ok(Cvr::from_json(&read(path)?)?)
}

fn parse_fidelity(s: &str) -> Result<Fidelity> {
    let bad = || Error::Usage(format!("unknown fidelity {s:?}"));
    Ok(match s.split_once(':') {
        None if s == "model" => Fidelity::Model,
        None if s == "canonical" => Fidelity::Canonical,
        Some(("consistent", eps)) => Fidelity::Consistent {
            epsilon: eps.parse().map_err(|_| bad())?,
        },
        Some(("adversarial", target)) if !target.is_empty() => Fidelity::Adversarial { target: target.into() },
        _ => return Err(bad()),
    })
}

/// Worker count from the environment, if set.
pub fn configure_workers() -> Result<()> {
    let Ok(raw) = std::env::var(WORKERS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Usage(format!("{WORKERS_VAR} must be a positive integer, got {raw:?}")))?;
    // a pool already built by an earlier call keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// What a subcommand prints and how the process should exit.
pub struct Outcome {
    pub stdout: String,
    pub inconclusive: bool,
}

fn simulate(args: &SimulateArgs) -> Result<Outcome> {
    let table = TableId::parse(args.table)?;
    let result = run_table(table, args.trials, &args.test.config()?, args.seed, args.rows.as_deref())?;
    let csv = result.to_csv()?;
    let stdout = match &args.out {
        Some(path) => {
            write(path, &csv)?;
            format!("wrote {} cells to {}\n", result.cells.len(), path.display())
        }
        None => csv,
    };
    Ok(Outcome { stdout, inconclusive: false })
}

fn audit_summary(t: &AuditTranscript) -> String {
    let mut s = String::new();
    let verdict = match t.verdict {
        Some(Verdict::Consistent) => "consistent",
        _ => "inconclusive",
    };
    let _ = writeln!(s, "verdict: {verdict}");
    if let Some(g) = &t.guard {
        let _ = writeln!(s, "guard: {}", serde_json::to_string(g).expect("guard serializes"));
    }
    let _ = writeln!(s, "declared_winner: {}", t.declared_winner.as_deref().unwrap_or("none"));
    let _ = writeln!(s, "declared_margin: {}", t.declared_margin);
    let _ = writeln!(s, "draws: {}", t.draws);
    let _ = writeln!(s, "risk: {}", t.risk);
    s
}

fn audit(args: &AuditArgs) -> Result<Outcome> {
    let election = election_from_json(&read(&args.election)?)?;
    let cvr = read_cvr(&args.cvr)?;
    let env_kind: EnvKind = args.env.parse()?;
    let mut env = make_environment(&env_kind, &election)?;
    let config = args.test.config()?;
    let transcript = match args.mode {
        Mode::Bayesian => run_bayesian_audit(&election, &cvr.into_bayesian()?, env.as_mut(), config, args.seed)?,
        Mode::Conservative => {
            let cvr = match cvr {
                Cvr::Conservative(c) => c,
                Cvr::Bayesian(b) => ConservativeCvr::from_bayesian(&b)?,
            };
            run_conservative_audit(&election, &cvr, env.as_mut(), config, args.seed)?
        }
    };
    if let Some(path) = &args.transcript {
        write(path, &transcript.to_json())?;
    }
    Ok(Outcome {
        stdout: audit_summary(&transcript),
        inconclusive: transcript.verdict != Some(Verdict::Consistent),
    })
}

fn compete_summary(v: &CompetitiveVerdict) -> String {
    let mut s = String::new();
    match &v.outcome {
        Some(CompetitiveOutcome::Winner { candidate }) => {
            let _ = writeln!(s, "outcome: winner {candidate}");
        }
        Some(CompetitiveOutcome::Inconclusive { reason }) => {
            let _ = writeln!(s, "outcome: inconclusive ({})", serde_json::to_string(reason).expect("reason serializes"));
        }
        None => {
            let _ = writeln!(s, "outcome: unfinished");
        }
    }
    let _ = writeln!(s, "requests: {}", v.requests);
    for label in &v.dropped_wrong_size {
        let _ = writeln!(s, "dropped {label}: wrong size");
    }
    for p in &v.tallies {
        let _ = writeln!(
            s,
            "pair {} -> {}: disagree={} draws={} votes={} disqualified={}",
            p.accuser, p.accused, p.disagree_size, p.draws, p.votes, p.disqualified
        );
    }
    s
}

fn compete(args: &CompeteArgs) -> Result<Outcome> {
    let election = election_from_json(&read(&args.manifest)?)?;
    let cvrs = args
        .cvrs
        .iter()
        .map(|path| -> Result<LabeledCvr> {
            let label = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .ok_or_else(|| Error::Usage(format!("cannot label {}", path.display())))?;
            let cvr = match read_cvr(path)? {
                Cvr::Conservative(c) => c,
                Cvr::Bayesian(b) => ConservativeCvr::from_bayesian(&b)?,
            };
            Ok(LabeledCvr { label, cvr })
        })
        .collect::<Result<Vec<_>>>()?;
    let env_kind: EnvKind = args.env.parse()?;
    let mut env = make_environment(&env_kind, &election)?;
    let verdict = run_judge(JudgeConfig { t: args.t, seed: args.seed }, &election, cvrs, env.as_mut())?;
    if let Some(path) = &args.out {
        write(path, &verdict.to_json())?;
    }
    Ok(Outcome {
        stdout: compete_summary(&verdict),
        inconclusive: verdict.winner().is_none(),
    })
}

fn generate(args: &GenerateArgs) -> Result<Outcome> {
    let model = ErrorModel {
        size: args.size,
        ..ErrorModel::published(args.margin, args.p_m)
    }
    .with_probabilities(args.p_cvr.unwrap_or(args.p_m), args.p_audit.unwrap_or(args.p_m));
    let approach: ApproachKind = args.approach.parse()?;
    let case = gen_election_and_cvrs(&model, approach, &parse_fidelity(&args.fidelity)?, args.seed)?;
    write(&args.election_out, &election_to_json(&case.election))?;
    write(&args.cvr_out, &case.cvr.to_json())?;
    Ok(Outcome {
        stdout: format!(
            "wrote election ({} ballots) to {} and CVR to {}\n",
            case.election.size(),
            args.election_out.display(),
            args.cvr_out.display()
        ),
        inconclusive: false,
    })
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    configure_workers()?;
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Audit(a) => audit(a),
        Command::Compete(a) => compete(a),
        Command::Generate(a) => generate(a),
    }
}

/// Exit status: 0 on success, 1 when an audit ends inconclusive, 2 on
/// usage or input errors.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(out) => {
            print!("{}", out.stdout);
            if out.inconclusive {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("rla: {e}");
            ExitCode::from(2)
        }
    }
}
