use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use grassmann_binary::error::{Error, Result};
use grassmann_binary::estimation::{fit_map, FitConfig, FitReport};
use grassmann_binary::experiment::{
    benchmark_model, run_experiment, state_label, write_outputs, ExperimentConfig, ExperimentKind,
};
use grassmann_binary::io::{model_hash, read_dataset, read_model, write_dataset, write_model, DatasetMeta};
use grassmann_binary::matrix::{DEFAULT_ENUMERATION_CAP, DEFAULT_P0_TOL};
use grassmann_binary::model::{CheckPolicy, PROB_TOL};
use grassmann_binary::sampler::seeded_rng;
use grassmann_binary::{GrassmannBinary, IndexSet, Matrix, ModelOptions, Observation, SigmaMatrix, Validity};

/// Determinant-based distributions over binary vectors.
///
/// Variable indices and state vectors are 1-based and written x1,...,xp.
#[derive(Parser)]
#[command(name = "grassmann", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct ModelFlags {
    /// Reject models that fail the validity check.
    #[arg(long)]
    strict: bool,
    /// Largest p for which all 2^p states are enumerated.
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    max_p: usize,
}

impl ModelFlags {
    fn options(self) -> ModelOptions {
        ModelOptions {
            check: if self.strict {
                CheckPolicy::Always
            } else {
                CheckPolicy::Auto
            },
            strict: self.strict,
            max_p: self.max_p,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Report means, covariances and the validity verdict of a model.
    Validate {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        flags: ModelFlags,
    },
    /// Draw a dataset from a model.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: ModelFlags,
    },
    /// MAP estimate of Σ from a dataset.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        gamma: f64,
        /// Output model file; the fit report always goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = FitConfig::default().max_newton_iters)]
        max_iters: usize,
        #[arg(long, default_value_t = FitConfig::default().gradient_tolerance)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        max_p: usize,
    },
    /// Evaluate a closed-form query.
    ///
    /// joint x=1,0,1 | marginal keep=1,3 | conditional obs=2:1,4:0 |
    /// moment r=1,3,5 | pcorr 1,2 [obs=3:1] | entropy | table
    Query {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        flags: ModelFlags,
        #[arg(required = true, num_args = 1..)]
        query: Vec<String>,
    },
    /// Monte Carlo sampling distributions of statistics or estimates.
    Experiment {
        /// statistics, map-estimates or sigma-estimates
        name: String,
        /// Model to sample from; the five-variable benchmark model by default.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Number of trials.
        #[arg(long)]
        m: Option<usize>,
        /// Comma-separated sample sizes.
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0.01)]
        gamma: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidModel { .. }
        | Error::NegativeProbability { .. }
        | Error::InvalidConditionalMean { .. }
        | Error::SingularSigma
        | Error::MeanOutOfRange { .. } => 2,
        Error::NonConvergence { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path, options: &ModelOptions) -> Result<GrassmannBinary> {
    let file = read_model(BufReader::new(open(path)?))?;
    GrassmannBinary::from_sigma(SigmaMatrix::new(file.sigma)?, options)
}

fn run(command: Command) -> Result<u8> {
    let mut out = std::io::stdout().lock();
    match command {
        Command::Validate { model, flags } => {
            let options = ModelOptions {
                check: CheckPolicy::Always,
                strict: false,
                max_p: flags.max_p,
            };
            let d = load_model(&model, &options)?;
            validate_report(&mut out, &d)
        }
        Command::Sample {
            model,
            n,
            seed,
            out: path,
            flags,
        } => {
            let d = load_model(&model, &flags.options())?;
            let data = grassmann_binary::sampler::sample(&d, n, &mut seeded_rng(seed))?;
            let meta = DatasetMeta::for_sample(seed, &model_hash(d.sigma()));
            match path {
                Some(p) => write_dataset(File::create(p)?, &data, &meta)?,
                None => write_dataset(&mut out, &data, &meta)?,
            }
            Ok(0)
        }
        Command::Fit {
            data,
            gamma,
            out: path,
            max_iters,
            tol,
            max_p,
        } => {
            let (data, _) = read_dataset(BufReader::new(open(&data)?))?;
            let config = FitConfig {
                gamma,
                max_newton_iters: max_iters,
                gradient_tolerance: tol,
                max_p,
                ..FitConfig::default()
            };
            let (report, code) = match fit_map(&data, &config) {
                Ok(r) => (r, 0),
                Err(Error::NonConvergence { report, .. }) => (*report, 3),
                Err(e) => return Err(e),
            };
            fit_report(&mut out, &report, data.len())?;
            if let Some(p) = path {
                let meta = json!({
                    "gamma": gamma,
                    "n": data.len(),
                    "iterations": report.iterations,
                    "converged": report.converged,
                    "gradient_norm": report.gradient_norm,
                    "log_posterior": report.log_posterior_trace.last(),
                    "log_posterior_trace": report.log_posterior_trace,
                });
                write_model(File::create(p)?, &report.sigma, Some(&meta))?;
            }
            if code == 3 {
                eprintln!("error: no convergence after {} iterations", report.iterations);
            }
            Ok(code)
        }
        Command::Query { model, flags, query } => {
            let d = load_model(&model, &flags.options())?;
            query_command(&mut out, &d, &query)?;
            Ok(0)
        }
        Command::Experiment {
            name,
            model,
            m,
            n,
            seed,
            gamma,
            out: dir,
        } => {
            let kind: ExperimentKind = name.parse()?;
            let d = match model {
                Some(p) => load_model(&p, &ModelOptions::strict())?,
                None => benchmark_model()?,
            };
            let mut cfg = ExperimentConfig::new(kind);
            if let Some(m) = m {
                cfg.trials = m;
            }
            if let Some(n) = n {
                cfg.sizes = n;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.fit.gamma = gamma;
            let result = run_experiment(&d, &cfg)?;
            write_outputs(&result, &dir)?;
            writeln!(
                out,
                "{kind}: {} trials, sizes {:?}, seed {}, {} columns written to {}",
                cfg.trials,
                cfg.sizes,
                cfg.seed,
                result.columns.len(),
                dir.display()
            )?;
            for (n, k) in &result.nonconverged {
                if *k > 0 {
                    writeln!(out, "n={n}: {k} fits did not converge (best-so-far values kept)")?;
                }
            }
            Ok(0)
        }
    }
}

fn fmt_row(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(|v| format!("{v:>12.6}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn write_matrix(out: &mut impl Write, m: &Matrix) -> Result<()> {
    for row in m.to_rows() {
        writeln!(out, "  {}", fmt_row(row))?;
    }
    Ok(())
}

fn validate_report(out: &mut impl Write, d: &GrassmannBinary) -> Result<u8> {
    let p = d.dim();
    writeln!(out, "p = {p}")?;
    writeln!(out, "means: {}", fmt_row(d.means()))?;
    writeln!(out, "covariance:")?;
    write_matrix(out, &d.covariance_matrix())?;
    let table = d.joint_table()?;
    let (state, min) = table
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (s, &v)| if v < acc.1 { (s, v) } else { acc });
    writeln!(
        out,
        "min joint probability: {min} at x = {}",
        state_label(state as u64, p)
    )?;
    let boundary = table.iter().filter(|v| v.abs() <= PROB_TOL).count();
    if boundary > 0 {
        writeln!(out, "states with zero probability: {boundary}")?;
    }
    match d.validity() {
        Validity::Valid => {
            writeln!(out, "P0 check (tol {DEFAULT_P0_TOL:e}): valid")?;
            Ok(0)
        }
        Validity::Invalid { witness } => {
            let zeros = witness.mask();
            writeln!(
                out,
                "P0 check (tol {DEFAULT_P0_TOL:e}): invalid, witness {witness} (state x = {} has probability {})",
                state_label(!zeros & ((1u64 << p) - 1), p),
                d.joint_prob_mask(!zeros & ((1u64 << p) - 1))
            )?;
            Ok(2)
        }
        Validity::Unchecked => {
            writeln!(out, "P0 check: not run")?;
            Ok(0)
        }
    }
}

fn fit_report(out: &mut impl Write, report: &FitReport, n: usize) -> Result<()> {
    writeln!(out, "N = {n}")?;
    writeln!(out, "converged: {}", report.converged)?;
    writeln!(out, "iterations: {}", report.iterations)?;
    writeln!(out, "gradient norm: {:e}", report.gradient_norm)?;
    if let Some(lp) = report.log_posterior_trace.last() {
        writeln!(out, "log posterior: {lp}")?;
    }
    writeln!(out, "sigma:")?;
    write_matrix(out, &report.sigma)
}

/// Parses `1,3,5` as 0-based indices.
fn parse_indices(s: &str, p: usize) -> Result<IndexSet> {
    let idx = s
        .split(',')
        .filter(|t| !t.is_empty())
        .map(|t| parse_index(t, p))
        .collect::<Result<Vec<_>>>()?;
    IndexSet::new(idx, p)
}

fn parse_index(t: &str, p: usize) -> Result<usize> {
    let i: usize = t
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("'{t}' is not an index")))?;
    if i == 0 || i > p {
        return Err(Error::Parse(format!("index {i} outside 1..={p}")));
    }
    Ok(i - 1)
}

fn parse_bit(t: &str) -> Result<bool> {
    match t.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Parse(format!("expected 0 or 1, got '{other}'"))),
    }
}

/// Parses `2:1,4:0`.
fn parse_obs(s: &str, p: usize) -> Result<Observation> {
    let pairs = s
        .split(',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            let (i, v) = t
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("'{t}' is not index:value")))?;
            Ok((parse_index(i, p)?, parse_bit(v)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Observation::new(pairs, p)
}

fn arg<'a>(args: &'a [String], key: &str) -> Option<&'a str> {
    args.iter()
        .find_map(|a| a.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
}

fn required<'a>(args: &'a [String], key: &str, query: &str) -> Result<&'a str> {
    arg(args, key).ok_or_else(|| Error::Parse(format!("{query} needs {key}=...")))
}

fn write_table(out: &mut impl Write, d: &GrassmannBinary, labels: &[usize]) -> Result<()> {
    let header: Vec<String> = labels.iter().map(|i| format!("x{}", i + 1)).collect();
    writeln!(out, "{},prob", header.join(","))?;
    for (s, v) in d.joint_table()?.iter().enumerate() {
        let bits: Vec<String> = (0..labels.len()).map(|k| (s >> k & 1).to_string()).collect();
        writeln!(out, "{},{v}", bits.join(","))?;
    }
    Ok(())
}

fn query_command(out: &mut impl Write, d: &GrassmannBinary, query: &[String]) -> Result<()> {
    let p = d.dim();
    let (name, rest) = query.split_first().expect("clap requires a query");
    let all: Vec<usize> = (0..p).collect();
    match name.as_str() {
        "joint" => {
            let x = required(rest, "x", "joint")?;
            let bits = x.split(',').map(parse_bit).collect::<Result<Vec<_>>>()?;
            let v = d.joint_prob(&grassmann_binary::BinaryVector::new(bits))?;
            writeln!(out, "{v}")?;
        }
        "marginal" => {
            let keep = parse_indices(required(rest, "keep", "marginal")?, p)?;
            let m = d.marginal(&keep)?;
            writeln!(out, "sigma:")?;
            write_matrix(out, m.sigma())?;
            write_table(out, &m, keep.as_slice())?;
        }
        "conditional" => {
            let obs = parse_obs(required(rest, "obs", "conditional")?, p)?;
            let c = d.conditional(&obs)?;
            writeln!(out, "evidence: {}", c.evidence)?;
            let labels: Vec<String> = c.remaining.iter().map(|i| format!("x{}", i + 1)).collect();
            writeln!(out, "variables: {}", labels.join(","))?;
            writeln!(out, "means: {}", fmt_row(c.model.means()))?;
            writeln!(out, "sigma:")?;
            write_matrix(out, c.model.sigma())?;
            write_table(out, &c.model, c.remaining.as_slice())?;
        }
        "moment" => {
            let r = parse_indices(required(rest, "r", "moment")?, p)?;
            writeln!(out, "{}", d.central_moment(&r)?)?;
        }
        "pcorr" => {
            let pair = rest
                .iter()
                .find(|a| !a.contains('='))
                .ok_or_else(|| Error::Parse("pcorr needs a pair i,j".into()))?;
            let (i, j) = pair
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("'{pair}' is not i,j")))?;
            let (i, j) = (parse_index(i, p)?, parse_index(j, p)?);
            let obs = match arg(rest, "obs") {
                Some(s) => parse_obs(s, p)?,
                None => Observation::empty(),
            };
            let full = d.partial_correlation_condition(i, j, &obs);
            let cond: Vec<String> = full.iter().map(|(k, v)| format!("{}:{}", k + 1, u8::from(v))).collect();
            writeln!(out, "{}", d.partial_correlation(i, j, &obs)?)?;
            writeln!(out, "given {}", cond.join(","))?;
        }
        "entropy" => writeln!(out, "{}", d.entropy()?)?,
        "table" => write_table(out, d, &all)?,
        other => {
            return Err(Error::Parse(format!(
                "unknown query '{other}' (joint, marginal, conditional, moment, pcorr, entropy, table)"
            )))
        }
    }
    Ok(())
}
