use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use calkin_cli::config::{CalculusParams, DegreeRange, IndexParams, KhintchineParams, RunConfig, TridiagParams};
use calkin_cli::experiments::{self, Output};
use calkin_cli::suite::{run_suite, write_output};
use calkin_cli::{exit, parse_budget};
use calkin_lab::io::{read_matrix_file, read_operator_json};
use calkin_lab::pnorm::{decomposition_upper_bound, estimate_norm};
use calkin_lab::{BlockBandedOperator, Budget, SpaceSpec};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(name = "calkin", version, about = "Block operators on mixed lp(l2) spaces: norms, cut plans, transfer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// RNG seed, recorded in every artifact.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; without it the main table goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 1 when a check fails.
    #[arg(long)]
    assert: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate ‖T‖ on X_p for an operator file (.json) or a dense matrix (.csv).
    Norm {
        input: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Block width for a dense matrix.
        #[arg(long, default_value_t = 1)]
        block: usize,
        /// Band for a dense matrix; defaults to the full width.
        #[arg(long)]
        band: Option<usize>,
        #[arg(long, default_value = "default")]
        budget: String,
        #[command(flatten)]
        common: Common,
    },
    /// Greedy cut plan and block-tridiagonal residuals for a family.
    Tridiag {
        #[arg(long, default_value_t = 256)]
        n: usize,
        /// Toeplitz symbols `n:re,im;…` (repeatable).
        #[arg(long = "symbol", allow_hyphen_values = true)]
        symbols: Vec<String>,
        /// Add the matrix ρ^|i−j|.
        #[arg(long)]
        decay: Option<f64>,
        /// Leave out U and U*.
        #[arg(long)]
        no_shifts: bool,
        /// Dense matrices to add to the family (CSV).
        #[arg(long = "matrix")]
        matrices: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Transferred tail norms of random symbols against sup |f|.
    TransferExperiment {
        #[arg(long, value_delimiter = ',', default_value = "4")]
        p: Vec<f64>,
        #[arg(long, default_value_t = 512)]
        n: usize,
        /// Plain-shift truncation; defaults to --n.
        #[arg(long)]
        plain_n: Option<usize>,
        /// Tail window as a fraction of the truncation.
        #[arg(long, default_value_t = calkin_lab::transfer::DEFAULT_WINDOW_FRACTION)]
        window: f64,
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        min_degree: usize,
        #[arg(long, default_value_t = 16)]
        max_degree: usize,
        #[arg(long = "symbol", allow_hyphen_values = true)]
        symbols: Vec<String>,
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
        #[arg(long, default_value = "default")]
        budget: String,
        /// Also write an SVG scatter plot (needs --out).
        #[arg(long)]
        plot: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Winding number against finite-section kernel counts.
    Index {
        #[arg(long = "symbol", required = true, allow_hyphen_values = true)]
        symbols: Vec<String>,
        #[arg(long, default_value_t = 128)]
        n: usize,
        #[arg(long, default_value_t = calkin_lab::fredholm::DEFAULT_THRESHOLD)]
        threshold: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Rademacher embedding and projection constants.
    Khintchine {
        #[arg(long, value_delimiter = ',', default_value = "1.5,2,3,4")]
        p: Vec<f64>,
        /// Largest n (number of signs).
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        n_min: usize,
        #[arg(long, default_value = "default")]
        budget: String,
        #[command(flatten)]
        common: Common,
    },
    /// Run every experiment of a JSON configuration.
    Suite {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write SVG plots where available.
        #[arg(long)]
        plot: bool,
    },
}

enum Status {
    Ok,
    Failed,
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        bail!("--p {p} is outside (1, ∞)");
    }
    Ok(())
}

fn emit(common: &Common, stem: &str, out: &Output) -> Result<Status> {
    match &common.out {
        Some(dir) => {
            for f in write_output(dir, stem, out)? {
                eprintln!("wrote {} ({} bytes)", dir.join(&f.file).display(), f.bytes);
            }
        }
        None => std::io::stdout().write_all(&out.main_table().to_csv()?)?,
    }
    report_failures(out.failures.iter().map(String::as_str), common.assert)
}

fn report_failures<'a>(failures: impl Iterator<Item = &'a str>, assert: bool) -> Result<Status> {
    let mut any = false;
    for f in failures {
        any = true;
        eprintln!("check failed: {f}");
    }
    Ok(if any && assert { Status::Failed } else { Status::Ok })
}

fn load_operator(input: &Path, p: f64, block: usize, band: Option<usize>) -> Result<(BlockBandedOperator, f64)> {
    let is_json = input.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let file = std::fs::File::open(input).with_context(|| format!("opening {}", input.display()))?;
        let t = read_operator_json(file).with_context(|| format!("reading {}", input.display()))?;
        let space = t.space().with_exponent(p)?;
        let blocks: Vec<_> = t.blocks().map(|(&k, m)| (k, m.clone())).collect();
        return Ok((BlockBandedOperator::new(space, t.band(), blocks)?, 0.0));
    }
    let a = read_matrix_file(input).with_context(|| format!("reading {}", input.display()))?;
    let space = SpaceSpec::uniform(p, block, a.nrows())?;
    let band = band.unwrap_or(space.num_blocks().saturating_sub(1));
    Ok(BlockBandedOperator::from_dense(&a, space, band)?)
}

fn norm(input: &Path, p: f64, block: usize, band: Option<usize>, budget: &Budget, common: &Common) -> Result<Status> {
    check_p(p)?;
    let (t, discarded) = load_operator(input, p, block, band)?;
    let sandwich = t.norm_sandwich();
    let est = estimate_norm(&t, budget)?;
    let diag = decomposition_upper_bound(&t);
    let mut failures = Vec::new();
    if est.lower < sandwich.lower - 1e-9 {
        failures.push(format!("estimate {} below the block witness {}", est.lower, sandwich.lower));
    }
    if est.lower > sandwich.upper + 1e-9 || est.lower > diag + 1e-9 {
        failures.push(format!("estimate {} above the upper bounds", est.lower));
    }
    let doc = json!({
        "seed": common.seed,
        "p": p,
        "dim": t.dim(),
        "blocks": t.space().num_blocks(),
        "band": t.band(),
        "discarded_out_of_band": discarded,
        "sup_block_norm": sandwich.lower,
        "band_upper_bound": sandwich.upper,
        "diagonal_sum_bound": diag,
        "estimate": {
            "lower": est.lower,
            "upper": est.upper,
            "method": est.method,
            "iterations": est.iterations,
            "converged": est.converged,
        },
    });
    let text = serde_json::to_string_pretty(&doc)? + "\n";
    match &common.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join("norm.json");
            std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    report_failures(failures.iter().map(String::as_str), common.assert)
}

fn run(cli: Cli) -> Result<Status> {
    match cli.command {
        Command::Norm { input, p, block, band, budget, common } => {
            let budget = parse_budget(&budget)?.with_seed(common.seed);
            norm(&input, p, block, band, &budget, &common)
        }
        Command::Tridiag { n, symbols, decay, no_shifts, matrices, common } => {
            let params = TridiagParams { symbols, decay, shifts: !no_shifts, n };
            let mut family = experiments::tridiag_family(&params)?;
            for path in &matrices {
                let m = read_matrix_file(path).with_context(|| format!("reading {}", path.display()))?;
                if m.nrows() != n {
                    bail!("{} is {}×{} but --n is {n}", path.display(), m.nrows(), m.ncols());
                }
                family.push((path.display().to_string(), m));
            }
            if family.is_empty() {
                bail!("empty family: give --symbol, --decay or --matrix, or keep the shifts");
            }
            let (labels, mats): (Vec<_>, Vec<_>) = family.into_iter().unzip();
            let out = experiments::tridiag_matrices(&labels, &mats, n, common.seed)?;
            emit(&common, "tridiag", &out)
        }
        Command::TransferExperiment {
            p,
            n,
            plain_n,
            window,
            count,
            min_degree,
            max_degree,
            symbols,
            tolerance,
            budget,
            plot,
            common,
        } => {
            for &q in &p {
                check_p(q)?;
            }
            if min_degree > max_degree {
                bail!("--min-degree {min_degree} exceeds --max-degree {max_degree}");
            }
            let budget = parse_budget(&budget)?.with_seed(common.seed);
            let params = CalculusParams {
                p_list: p,
                n,
                plain_n,
                degrees: DegreeRange { min: min_degree, max: max_degree },
                count,
                symbols,
                window_fraction: window,
                tolerance,
                ..CalculusParams::default()
            };
            let out = experiments::calculus(&params, common.seed, &budget, plot && common.out.is_some())?;
            emit(&common, "transfer", &out)
        }
        Command::Index { symbols, n, threshold, common } => {
            let out = experiments::index(&IndexParams { symbols, n, threshold }, common.seed)?;
            emit(&common, "index", &out)
        }
        Command::Khintchine { p, n, n_min, budget, common } => {
            for &q in &p {
                check_p(q)?;
            }
            let budget = parse_budget(&budget)?.with_seed(common.seed);
            let params = KhintchineParams { n_min, n_max: n, p_list: p };
            let out = experiments::khintchine(&params, common.seed, &budget)?;
            emit(&common, "khintchine", &out)
        }
        Command::Suite { config, out, plot } => {
            let bytes = std::fs::read(&config).with_context(|| format!("reading {}", config.display()))?;
            let text = String::from_utf8(bytes.clone()).context("configuration is not UTF-8")?;
            let cfg = RunConfig::from_json(&text).with_context(|| format!("in {}", config.display()))?;
            let manifest = run_suite(&cfg, &bytes, &out, plot)?;
            eprintln!(
                "ran {} experiment(s); manifest at {}",
                manifest.experiments.len(),
                out.join("manifest.json").display()
            );
            let failures: Vec<String> = manifest.failures().map(|(e, f)| format!("{e}: {f}")).collect();
            report_failures(failures.iter().map(String::as_str), cfg.assertions)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::INVALID_INPUT as u8 } else { exit::OK as u8 });
        }
    };
    match run(cli) {
        Ok(Status::Ok) => ExitCode::from(exit::OK as u8),
        Ok(Status::Failed) => ExitCode::from(exit::ASSERTION_FAILED as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::INVALID_INPUT as u8)
        }
    }
}
