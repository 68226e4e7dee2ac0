use std::path::PathBuf;
use std::process::ExitCode;

use amoebot_convex::circuits::SimulationTrace;
use amoebot_convex::decompose::{decompose, Decomposition};
use amoebot_convex::distalgo::{run_distributed, DistError};
use amoebot_convex::generate::generate_random;
use amoebot_convex::oracle::verify_decomposition;
use amoebot_convex::AmoebotStructure;
use amoebot_convex_cli::bench::bench;
use amoebot_convex_cli::emit::{emit_json, emit_svg};
use amoebot_convex_cli::{load_structure, save_structure};
use clap::{Parser, Subcommand, ValueEnum};

const EXIT_VERIFY: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_TIMEOUT: u8 = 3;

#[derive(Parser)]
#[command(name = "amoebot-convex", version, about = "Convex decomposition of amoebot structures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose a structure given as `a b` lines.
    Decompose(RunConfig),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Central,
    Distributed,
    Both,
}

#[derive(clap::Args)]
struct RunConfig {
    /// Input file. With --gen it is written first.
    #[arg(required_unless_present = "bench")]
    file: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "central")]
    mode: Mode,
    #[arg(long, required_if_eq_any([("mode", "distributed"), ("mode", "both")]))]
    seed: Option<u64>,
    /// Upper bound on the number of amoebots (defaults to the exact count).
    #[arg(long)]
    nhat: Option<u64>,
    #[arg(long)]
    verify: bool,
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
    /// Round-count sweep over these sizes instead of a single run.
    #[arg(long, value_delimiter = ',')]
    bench: Option<Vec<usize>>,
    /// Seeds per size for --bench.
    #[arg(long, default_value_t = 20)]
    bench_seeds: u64,
    /// Hole count for --gen and --bench.
    #[arg(long)]
    holes: Option<usize>,
    /// Generate a random structure of about this many nodes.
    #[arg(long)]
    gen: Option<usize>,
    /// Print every distributed step and keep it in the JSON trace.
    #[arg(long)]
    trace: bool,
}

fn main() -> ExitCode {
    let Command::Decompose(cfg) = Cli::parse().command;
    match run(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn run(cfg: &RunConfig) -> Result<(), (u8, String)> {
    if let Some(sizes) = &cfg.bench {
        let table = bench(sizes, cfg.bench_seeds, cfg.holes);
        if cfg.trace {
            print!("{}", table.rows_tsv());
        }
        print!("{}", table.to_tsv());
        return Ok(());
    }
    let path = cfg.file.as_ref().expect("clap requires a file without --bench");
    let structure = match cfg.gen {
        Some(n) => {
            let s = generate_random(n, cfg.holes.unwrap_or(0), cfg.seed.unwrap_or(0));
            save_structure(&s, path).map_err(|e| (EXIT_INPUT, format!("cannot write {}: {e}", path.display())))?;
            s
        }
        None => load_structure(path).map_err(|e| (EXIT_INPUT, e.to_string()))?,
    };
    if cfg.nhat.is_some_and(|h| h < structure.len() as u64) {
        return Err((EXIT_INPUT, format!("--nhat must be at least n = {}", structure.len())));
    }

    let central = match cfg.mode {
        Mode::Central | Mode::Both => Some(decompose(&structure).map_err(|e| (EXIT_VERIFY, e.to_string()))?),
        Mode::Distributed => None,
    };
    let distributed = match cfg.mode {
        Mode::Distributed | Mode::Both => Some(distributed(&structure, cfg)?),
        Mode::Central => None,
    };
    if let (Some(c), Some((d, _))) = (&central, &distributed) {
        if c.shapes() != d.shapes() {
            return Err((EXIT_VERIFY, "distributed and centralized decompositions differ".into()));
        }
        println!("distributed result equals centralized result");
    }
    let (dec, trace): (&Decomposition, Option<&SimulationTrace>) = match (&central, &distributed) {
        (_, Some((d, t))) => (d, Some(t)),
        (Some(c), None) => (c, None),
        (None, None) => unreachable!("mode selects at least one engine"),
    };

    println!(
        "n={} holes={} phase1_regions={} gates={} regions={}",
        structure.len(),
        dec.holes,
        dec.phase1_regions.len(),
        dec.gates.len(),
        dec.regions.len()
    );
    if let Some(t) = trace {
        let phases: Vec<String> = t.phases.iter().map(|p| format!("{}={}", p.phase, p.rounds)).collect();
        println!("rounds {} total={}", phases.join(" "), t.total_rounds);
    }

    let report = cfg.verify.then(|| verify_decomposition(&structure, dec));
    if let Some(path) = &cfg.json {
        emit_json(dec, report.as_ref(), trace, cfg.trace, path).map_err(|e| (EXIT_INPUT, e.to_string()))?;
    }
    if let Some(path) = &cfg.svg {
        emit_svg(&structure, dec, path).map_err(|e| (EXIT_INPUT, e.to_string()))?;
    }
    if let Some(r) = &report {
        if !r.passed() {
            for f in r.failures() {
                eprintln!("{f}");
            }
            return Err((EXIT_VERIFY, "verification failed".into()));
        }
        println!("verification passed ({} regions checked)", r.regions.len());
    }
    Ok(())
}

fn distributed(structure: &AmoebotStructure, cfg: &RunConfig) -> Result<(Decomposition, SimulationTrace), (u8, String)> {
    let seed = cfg.seed.expect("clap requires --seed for distributed modes");
    let n_hat = cfg.nhat.unwrap_or(structure.len() as u64);
    match run_distributed(structure, seed, n_hat) {
        Ok(out) => {
            if cfg.trace {
                for e in &out.trace.events {
                    eprintln!("{}\t{}\t{}", e.phase, e.step, e.rounds);
                }
            }
            Ok((out.decomposition, out.trace))
        }
        Err((e, trace)) => {
            let code = match e {
                DistError::Sim(amoebot_convex::circuits::SimError::Timeout { .. }) | DistError::Election(_) => EXIT_TIMEOUT,
                _ => EXIT_VERIFY,
            };
            Err((code, format!("{e} after {} rounds", trace.total_rounds)))
        }
    }
}
