use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use fermiwit::discord::{geometric_discord, DiscordConfig};
use fermiwit::files::{read_state, read_witness, RunManifest, WitnessFile};
use fermiwit::fock::Sector;
use fermiwit::hubbard::{linspace, phase_diagram, write_rows, Boundary, EhmParams, SweepGrid};
use fermiwit::linalg::{derive_seed, HermitianEigen};
use fermiwit::schliemann::{concurrence_with, ConcurrenceMode};
use fermiwit::sdp::Backend;
use fermiwit::states::{family_gaussian, family_linear, random_mixed, random_pure, DensityState, FamilyParams};
use fermiwit::witness::{optimal_witness, validate_witness, SymmetryMode, WitnessConfig, WitnessMethod};
use fermiwit::{Error, Result};

const EXIT_INPUT: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser, Serialize)]
#[command(name = "fermiwit", version, about = "Entanglement witnesses, concurrence and discord for fermionic states")]
struct Cli {
    /// Worker threads; single-threaded runs give identical numbers.
    #[arg(long, global = true, env = "FERMIWIT_THREADS")]
    threads: Option<usize>,
    /// Base seed; every task derives its own seed from it and its index.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
enum Command {
    /// Schliemann concurrence of a two-fermion, four-mode state.
    Concurrence {
        state: PathBuf,
        #[arg(long, default_value = "eigenvalues")]
        mode: String,
        /// JSON result file.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generalized robustness from an optimal witness.
    Robustness {
        state: PathBuf,
        #[command(flatten)]
        witness: WitnessArgs,
        /// Witness file with its validation report.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Geometric discord of a two-fermion, four-mode state.
    Discord {
        state: PathBuf,
        #[command(flatten)]
        discord: DiscordArgs,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Concurrence and robustness of Haar-random states (CSV).
    ScanRandom {
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 4)]
        d: usize,
        #[arg(long, default_value_t = 2)]
        n: usize,
        /// Ginibre mixed states instead of pure ones.
        #[arg(long)]
        mixed: bool,
        /// Ginibre rank; defaults to the sector dimension.
        #[arg(long)]
        rank: Option<usize>,
        #[command(flatten)]
        witness: WitnessArgs,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Robustness and discord along a one-parameter family (CSV).
    Family {
        #[arg(long, value_enum)]
        which: Which,
        /// Number of sites; the state has two fermions in 2L modes.
        #[arg(long = "L", default_value_t = 2)]
        l: usize,
        /// `start:step:end` or a comma-separated list.
        #[arg(long, default_value = "0:0.05:1")]
        p: String,
        /// Any of robustness, discord.
        #[arg(long, value_delimiter = ',', default_value = "robustness")]
        measures: Vec<String>,
        #[command(flatten)]
        witness: WitnessArgs,
        #[command(flatten)]
        discord: DiscordArgs,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Ground-state robustness over the (U/t, V/t) plane (CSV).
    Hubbard {
        #[arg(long = "L", default_value_t = 5)]
        l: usize,
        /// Particle count; defaults to half filling.
        #[arg(long = "N")]
        n: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        hopping: f64,
        #[arg(long, default_value = "periodic")]
        boundary: Boundary,
        /// `lo:hi` for U/t.
        #[arg(long, default_value = "-8:8")]
        u_range: String,
        /// `lo:hi` for V/t.
        #[arg(long, default_value = "-8:8")]
        v_range: String,
        /// Points as `NUxNV`.
        #[arg(long, default_value = "9x9")]
        grid: String,
        #[command(flatten)]
        witness: WitnessArgs,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Keep finished rows of an existing output file.
        #[arg(long, requires = "output")]
        resume: bool,
    },
    /// Checks a witness against fresh random Slater determinants.
    ValidateWitness {
        witness: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Also report Tr(W rho) for this state.
        #[arg(long)]
        state: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
enum Which {
    Gaussian,
    Linear,
}

#[derive(Args, Serialize, Clone)]
struct WitnessArgs {
    /// Random constraints; defaults depend on the sector.
    #[arg(long)]
    samples: Option<usize>,
    /// Cutting-plane rounds.
    #[arg(long)]
    rounds: Option<usize>,
    /// Violation-search restarts per round.
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long, default_value = "auto")]
    backend: Backend,
    #[arg(long, default_value = "auto")]
    method: WitnessMethod,
    #[arg(long, default_value = "auto")]
    symmetry: SymmetryMode,
    /// Solver accuracy: interior-point gap and first-order certified gap.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    validation_samples: usize,
}

impl WitnessArgs {
    fn config(&self, sector: Sector, seed: u64) -> WitnessConfig {
        let mut c = WitnessConfig::for_sector(sector);
        c.seed = seed;
        if let Some(s) = self.samples {
            c.samples = s;
        }
        if let Some(r) = self.rounds {
            c.rounds = r;
        }
        if let Some(r) = self.restarts {
            c.restarts = r;
        }
        c.backend = self.backend;
        c.method = self.method;
        c.symmetry = self.symmetry;
        if let Some(t) = self.tol {
            c.ipm.gap_tol = t;
            c.first_order.accuracy = t;
        }
        c.validation_samples = self.validation_samples;
        c
    }
}

#[derive(Args, Serialize, Clone)]
struct DiscordArgs {
    #[arg(long = "discord-restarts", default_value_t = 4)]
    discord_restarts: usize,
    /// Objective evaluations per restart.
    #[arg(long, default_value_t = 300)]
    max_evals: usize,
    /// Restrict to a single orthonormal basis.
    #[arg(long)]
    single_basis: bool,
}

impl DiscordArgs {
    fn config(&self, seed: u64) -> DiscordConfig {
        DiscordConfig {
            restarts: self.discord_restarts,
            seed,
            max_evals: self.max_evals,
            single_basis: self.single_basis,
            ..DiscordConfig::default()
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Solver(_) | Error::Numerical(_) => EXIT_SOLVER,
        _ => EXIT_INPUT,
    }
}

fn input(e: impl std::fmt::Display) -> Error {
    Error::InvalidInput(e.to_string())
}

fn parse_p_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |x: &str| x.trim().parse::<f64>().map_err(|_| input(format!("bad number '{x}' in p grid")));
    if parts.len() == 3 {
        let (a, h, b) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(h > 0.0) || b < a {
            return Err(input("p grid needs a positive step and start ≤ end"));
        }
        let n = ((b - a) / h + 1e-9).floor() as usize + 1;
        return Ok((0..n).map(|i| ((a + h * i as f64) * 1e12).round() / 1e12).collect());
    }
    s.split(',').map(num).collect()
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s.split_once(':').ok_or_else(|| input(format!("range '{s}' is not lo:hi")))?;
    let lo = a.trim().parse().map_err(|_| input(format!("bad range '{s}'")))?;
    let hi = b.trim().parse().map_err(|_| input(format!("bad range '{s}'")))?;
    Ok((lo, hi))
}

fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s.split_once('x').ok_or_else(|| input(format!("grid '{s}' is not NUxNV")))?;
    let nu = a.trim().parse().map_err(|_| input(format!("bad grid '{s}'")))?;
    let nv = b.trim().parse().map_err(|_| input(format!("bad grid '{s}'")))?;
    Ok((nu, nv))
}

/// Writes to `path` or standard output.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn number(r: Result<f64>) -> String {
    match r {
        Ok(x) => format!("{x:.12e}"),
        Err(e) => format!("error: {e}"),
    }
}

fn robustness_of(rho: &DensityState, args: &WitnessArgs, seed: u64) -> Result<f64> {
    Ok(optimal_witness(rho, &args.config(rho.sector(), seed))?.robustness)
}

fn run(cli: &Cli) -> Result<Option<PathBuf>> {
    let seed = cli.seed;
    match &cli.command {
        Command::Concurrence { state, mode, output } => {
            let rho = read_state(state)?;
            let mode: ConcurrenceMode = mode.parse().map_err(input)?;
            let c = concurrence_with(&rho, mode)?;
            println!("{c}");
            if let Some(p) = output {
                let body = serde_json::json!({ "concurrence": c, "mode": mode });
                emit(Some(p), &(serde_json::to_string_pretty(&body)? + "\n"))?;
            }
            Ok(output.clone())
        }
        Command::Robustness { state, witness, output } => {
            let rho = read_state(state)?;
            let r = optimal_witness(&rho, &witness.config(rho.sector(), seed))?;
            println!("{}", r.robustness);
            let v = &r.validation;
            eprintln!(
                "dual bound {} shift {} validation min {} over {} samples, search min {}, max eigenvalue {}",
                r.dual_bound,
                v.shift,
                v.min_validation_value,
                v.validation_samples,
                v.min_search_value,
                v.max_eigenvalue
            );
            if let Some(p) = output {
                emit(Some(p), &WitnessFile::from_result(&r).to_json()?)?;
            }
            Ok(output.clone())
        }
        Command::Discord { state, discord, output } => {
            let rho = read_state(state)?;
            let r = geometric_discord(&rho, &discord.config(seed))?;
            println!("{}", r.value);
            if let Some(p) = output {
                let body = serde_json::json!({
                    "discord": r.value,
                    "per_restart": r.per_restart,
                    "evaluations": r.evaluations,
                });
                emit(Some(p), &(serde_json::to_string_pretty(&body)? + "\n"))?;
            }
            Ok(output.clone())
        }
        Command::ScanRandom { count, d, n, mixed, rank, witness, output } => {
            let sector = Sector::new(*d, *n)?;
            let two_fermion = *d == 4 && *n == 2;
            let rank = rank.unwrap_or(sector.dim());
            let rows: Vec<Vec<String>> = (0..*count)
                .map(|i| {
                    let s = derive_seed(seed, &[i as u64]);
                    let rho = if *mixed { random_mixed(*d, *n, rank, s) } else { random_pure(*d, *n, s) };
                    match rho {
                        Ok(rho) => vec![
                            i.to_string(),
                            format!("{:.12e}", rho.purity()),
                            if two_fermion {
                                number(concurrence_with(&rho, ConcurrenceMode::default()))
                            } else {
                                String::new()
                            },
                            number(robustness_of(&rho, witness, s)),
                        ],
                        Err(e) => vec![i.to_string(), format!("error: {e}"), String::new(), String::new()],
                    }
                })
                .collect();
            emit(output.as_deref(), &csv_text(&["index", "purity", "concurrence", "robustness"], &rows)?)?;
            Ok(output.clone())
        }
        Command::Family { which, l, p, measures, witness, discord, output } => {
            let grid = parse_p_grid(p)?;
            let want_r = measures.iter().any(|m| m == "robustness");
            let want_d = measures.iter().any(|m| m == "discord");
            if let Some(m) = measures.iter().find(|m| *m != "robustness" && *m != "discord") {
                return Err(input(format!("unknown measure '{m}' (expected robustness or discord)")));
            }
            if want_d && matches!(which, Which::Gaussian) && *l != 2 {
                return Err(input("discord needs four modes (L = 2)"));
            }
            if matches!(which, Which::Linear) && *l != 2 {
                return Err(input("the linear family lives on four modes (L = 2)"));
            }
            let rows: Vec<Vec<String>> = grid
                .iter()
                .enumerate()
                .map(|(i, &pv)| -> Result<Vec<String>> {
                    let rho = match which {
                        Which::Gaussian => family_gaussian(&FamilyParams::new(pv, *l))?,
                        Which::Linear => family_linear(pv)?,
                    };
                    let s = derive_seed(seed, &[i as u64]);
                    let r = if want_r { number(robustness_of(&rho, witness, s)) } else { String::new() };
                    let d = if want_d {
                        number(geometric_discord(&rho, &discord.config(s)).map(|x| x.value))
                    } else {
                        String::new()
                    };
                    Ok(vec![format!("{pv}"), r, d])
                })
                .collect::<Result<_>>()?;
            emit(output.as_deref(), &csv_text(&["p", "robustness", "discord"], &rows)?)?;
            Ok(output.clone())
        }
        Command::Hubbard { l, n, hopping, boundary, u_range, v_range, grid, witness, output, resume } => {
            let base = EhmParams {
                sites: *l,
                particles: n.unwrap_or(*l),
                hopping: *hopping,
                u: 0.0,
                v: 0.0,
                boundary: *boundary,
            };
            let sector = base.validate()?;
            let (nu, nv) = parse_grid(grid)?;
            let (ulo, uhi) = parse_range(u_range)?;
            let (vlo, vhi) = parse_range(v_range)?;
            let sweep = SweepGrid {
                u_over_t: linspace(ulo, uhi, nu),
                v_over_t: linspace(vlo, vhi, nv),
                witness: witness.config(sector, seed),
            };
            let rows = phase_diagram(&sweep, &base, output.as_deref(), *resume)?;
            if output.is_none() {
                write_rows(std::io::stdout().lock(), &rows)?;
            }
            Ok(output.clone())
        }
        Command::ValidateWitness { witness, samples, state } => {
            let w = read_witness(witness)?;
            let min = validate_witness(&w, *samples, derive_seed(seed, &[2]));
            let max_eig = HermitianEigen::new(w.matrix()).max();
            println!("min_slater_value {min}");
            println!("max_eigenvalue {max_eig}");
            if let Some(s) = state {
                let rho = read_state(s)?;
                if rho.sector() != w.sector() {
                    return Err(input("state and witness live in different sectors"));
                }
                println!("expectation {}", fermiwit::linalg::inner_re(rho.matrix(), w.matrix()));
            }
            let ok = min >= -5e-3 && max_eig <= 1.0 + 1e-8;
            println!("valid {ok}");
            Ok(None)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    }
    let start = Instant::now();
    match run(&cli) {
        Ok(output) => {
            if let Some(out) = output {
                let args: Vec<String> = std::env::args().collect();
                let manifest = RunManifest {
                    command: args.get(1).cloned().unwrap_or_default(),
                    arguments: args,
                    parameters: serde_json::to_value(&cli).unwrap_or_default(),
                    seed: cli.seed,
                    version: env!("CARGO_PKG_VERSION").into(),
                    wall_time_seconds: start.elapsed().as_secs_f64(),
                };
                if let Err(e) = manifest.write(&out) {
                    eprintln!("error: {e}");
                    return ExitCode::from(exit_code(&e));
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
