//! Monte Carlo sampling-distribution experiments on the five-variable
//! benchmark model.
//!
//! Trial `t` at the `k`-th sample size draws from stream `k` of the
//! generator seeded with `seed + t`, so results do not depend on scheduling.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::{
    canonicalize_gauge, fit_map, fit_max_entropy, summarize, theoretical_stat_moments, transposed_representative,
    FitConfig, FitReport, MomentTarget,
};
use crate::matrix::Matrix;
use crate::model::GrassmannBinary;
use crate::sampler::{stream_rng, Sampler};

pub const BENCHMARK_MEANS: [f64; 5] = [0.77, 0.37, 0.67, 0.42, 0.7];

/// Pearson correlations `(i, j, ρ_ij)`, 1-based.
pub const BENCHMARK_CORRELATIONS: [(usize, usize, f64); 10] = [
    (1, 2, -0.03),
    (1, 3, 0.32),
    (1, 4, -0.1),
    (1, 5, 0.04),
    (2, 3, 0.004),
    (2, 4, 0.003),
    (2, 5, 0.06),
    (3, 4, -0.03),
    (3, 5, 0.05),
    (4, 5, -0.19),
];

/// State `(1,1,0,0,1)` as a bitmask with `x1` in the lowest bit.
pub const BENCHMARK_STATE: u64 = 0b10011;

pub fn benchmark_target() -> MomentTarget {
    let mut rho = Matrix::zeros(5, 5);
    for (i, j, r) in BENCHMARK_CORRELATIONS {
        rho[(i - 1, j - 1)] = r;
    }
    MomentTarget::from_correlations(BENCHMARK_MEANS.to_vec(), &rho).expect("benchmark target is well formed")
}

/// Max-entropy model for [`benchmark_target`], computed once.
pub fn benchmark_model() -> Result<GrassmannBinary> {
    static MODEL: OnceLock<std::result::Result<GrassmannBinary, String>> = OnceLock::new();
    MODEL
        .get_or_init(|| fit_max_entropy(&benchmark_target()).map_err(|e| e.to_string()))
        .clone()
        .map_err(Error::InvalidConfig)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Sample means, covariances and empirical joint probabilities.
    Statistics,
    /// MAP estimates of means, covariances and joint probabilities.
    MapEstimates,
    /// MAP estimates of the gauge-fixed Σ entries.
    SigmaEstimates,
}

impl ExperimentKind {
    pub fn default_sizes(self) -> Vec<usize> {
        match self {
            Self::Statistics | Self::MapEstimates => vec![50, 200, 500],
            Self::SigmaEstimates => vec![50, 500, 5000],
        }
    }

    pub fn default_trials(self) -> usize {
        match self {
            Self::Statistics => 5000,
            Self::MapEstimates | Self::SigmaEstimates => 2000,
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "statistics" => Ok(Self::Statistics),
            "map-estimates" => Ok(Self::MapEstimates),
            "sigma-estimates" => Ok(Self::SigmaEstimates),
            other => Err(Error::InvalidConfig(format!(
                "unknown experiment '{other}' (expected statistics, map-estimates or sigma-estimates)"
            ))),
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Statistics => "statistics",
            Self::MapEstimates => "map-estimates",
            Self::SigmaEstimates => "sigma-estimates",
        })
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub trials: usize,
    pub sizes: Vec<usize>,
    pub seed: u64,
    pub fit: FitConfig,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            trials: kind.default_trials(),
            sizes: kind.default_sizes(),
            seed: 20240101,
            fit: FitConfig::default(),
        }
    }
}

/// Per-trial values of one statistic at one sample size.
#[derive(Clone, Debug)]
pub struct Column {
    /// e.g. `xbar5_n500`, `s13_n50`, `q11001_n200`, `Sigma23_n5000`.
    pub name: String,
    pub n: usize,
    pub values: Vec<f64>,
    pub theory_mean: Option<f64>,
    pub theory_var: Option<f64>,
}

impl Column {
    pub fn mc_mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Unbiased Monte Carlo variance; `None` for fewer than two trials.
    pub fn mc_var(&self) -> Option<f64> {
        let m = self.values.len();
        (m >= 2).then(|| {
            let mean = self.mc_mean();
            self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64
        })
    }

    pub fn mc_sd(&self) -> Option<f64> {
        self.mc_var().map(f64::sqrt)
    }

    /// Sample skewness `m3 / m2^{3/2}`.
    pub fn skewness(&self) -> f64 {
        let n = self.values.len() as f64;
        let mean = self.mc_mean();
        let m2 = self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let m3 = self.values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
        m3 / m2.powf(1.5)
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub kind: ExperimentKind,
    pub trials: usize,
    pub columns: Vec<Column>,
    /// `(n, fits that hit NonConvergence)`; their best-so-far values are kept.
    pub nonconverged: Vec<(usize, usize)>,
    pub truth: Matrix,
}

impl ExperimentResult {
    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }
}

/// Bits of `mask` as `x1 x2 … xp`.
pub fn state_label(mask: u64, p: usize) -> String {
    (0..p).map(|i| if mask >> i & 1 == 1 { '1' } else { '0' }).collect()
}

pub fn run_experiment(model: &GrassmannBinary, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    if cfg.trials == 0 {
        return Err(Error::InvalidConfig("trial count must be positive".into()));
    }
    if cfg.sizes.contains(&0) {
        return Err(Error::InvalidConfig("sample sizes must be positive".into()));
    }
    let sampler = Sampler::new(model)?;
    let mut columns = Vec::new();
    let mut nonconverged = Vec::new();
    for (k, &n) in cfg.sizes.iter().enumerate() {
        let draw = |t: usize| -> Result<_> {
            let mut rng = stream_rng(cfg.seed.wrapping_add(t as u64), k as u64);
            sampler.sample(n, &mut rng)
        };
        match cfg.kind {
            ExperimentKind::Statistics => {
                let trials: Vec<_> = (0..cfg.trials)
                    .into_par_iter()
                    .map(|t| draw(t).and_then(|d| summarize(&d)))
                    .collect::<Result<_>>()?;
                columns.extend(statistics_columns(model, n, &trials)?);
            }
            ExperimentKind::MapEstimates | ExperimentKind::SigmaEstimates => {
                let fits: Vec<(FitReport, bool)> = (0..cfg.trials)
                    .into_par_iter()
                    .map(|t| {
                        let data = draw(t)?;
                        match fit_map(&data, &cfg.fit) {
                            Ok(r) => Ok((r, true)),
                            Err(Error::NonConvergence { report, .. }) => Ok((*report, false)),
                            Err(e) => Err(e),
                        }
                    })
                    .collect::<Result<_>>()?;
                nonconverged.push((n, fits.iter().filter(|(_, ok)| !ok).count()));
                let reports: Vec<&FitReport> = fits.iter().map(|(r, _)| r).collect();
                if cfg.kind == ExperimentKind::MapEstimates {
                    columns.extend(map_columns(model, n, &reports)?);
                } else {
                    columns.extend(sigma_columns(model, n, &reports));
                }
            }
        }
    }
    Ok(ExperimentResult {
        kind: cfg.kind,
        trials: cfg.trials,
        columns,
        nonconverged,
        truth: canonicalize_gauge(model.sigma()),
    })
}

fn statistics_columns(
    model: &GrassmannBinary,
    n: usize,
    trials: &[crate::estimation::StatSummary],
) -> Result<Vec<Column>> {
    let p = model.dim();
    let theory = (n >= 2).then(|| theoretical_stat_moments(model, n)).transpose()?;
    let table = model.joint_table()?;
    let mut cols = Vec::new();
    for i in 0..p {
        cols.push(Column {
            name: format!("xbar{}_n{n}", i + 1),
            n,
            values: trials.iter().map(|s| s.means[i]).collect(),
            theory_mean: Some(model.mean(i)?),
            theory_var: theory.as_ref().map(|t| t.var_of_means[i]),
        });
    }
    if n >= 2 {
        for i in 0..p {
            for j in i + 1..p {
                cols.push(Column {
                    name: format!("s{}{}_n{n}", i + 1, j + 1),
                    n,
                    values: trials.iter().map(|s| s.covariance(i, j).unwrap_or(f64::NAN)).collect(),
                    theory_mean: Some(model.covariance(i, j)?),
                    theory_var: theory.as_ref().map(|t| t.var_of_covariances[(i, j)]),
                });
            }
        }
    }
    for (mask, &pi) in table.iter().enumerate() {
        let mask = mask as u64;
        cols.push(Column {
            name: format!("q{}_n{n}", state_label(mask, p)),
            n,
            values: trials.iter().map(|s| s.q(mask)).collect(),
            theory_mean: Some(pi),
            theory_var: theory.as_ref().map(|t| t.var_of_q[mask as usize]),
        });
    }
    Ok(cols)
}

fn unchecked(sigma: &Matrix) -> Result<GrassmannBinary> {
    GrassmannBinary::from_sigma(
        crate::model::SigmaMatrix::new(sigma.clone())?,
        &crate::model::ModelOptions::unchecked(),
    )
}

fn map_columns(model: &GrassmannBinary, n: usize, reports: &[&FitReport]) -> Result<Vec<Column>> {
    let p = model.dim();
    let fitted: Vec<GrassmannBinary> = reports.iter().map(|r| unchecked(&r.sigma)).collect::<Result<_>>()?;
    let tables: Vec<Vec<f64>> = fitted.iter().map(|m| m.joint_table()).collect::<Result<_>>()?;
    let mut cols = Vec::new();
    for i in 0..p {
        cols.push(Column {
            name: format!("mu{}_n{n}", i + 1),
            n,
            values: fitted.iter().map(|m| m.sigma()[(i, i)]).collect(),
            theory_mean: Some(model.mean(i)?),
            theory_var: None,
        });
    }
    for i in 0..p {
        for j in i + 1..p {
            cols.push(Column {
                name: format!("sigma{}{}_n{n}", i + 1, j + 1),
                n,
                values: fitted.iter().map(|m| m.covariance(i, j)).collect::<Result<_>>()?,
                theory_mean: Some(model.covariance(i, j)?),
                theory_var: None,
            });
        }
    }
    let truth = model.joint_table()?;
    for (mask, &pi) in truth.iter().enumerate() {
        cols.push(Column {
            name: format!("pi{}_n{n}", state_label(mask as u64, p)),
            n,
            values: tables.iter().map(|t| t[mask]).collect(),
            theory_mean: Some(pi),
            theory_var: None,
        });
    }
    Ok(cols)
}

fn sigma_columns(model: &GrassmannBinary, n: usize, reports: &[&FitReport]) -> Vec<Column> {
    let p = model.dim();
    let truth = canonicalize_gauge(model.sigma());
    let mut cols = Vec::new();
    for i in 0..p {
        for j in 0..p {
            if i == j || (j == 0 && i > 0) {
                continue;
            }
            cols.push(Column {
                name: format!("Sigma{}{}_n{n}", i + 1, j + 1),
                n,
                values: reports.iter().map(|r| r.sigma[(i, j)]).collect(),
                theory_mean: Some(truth[(i, j)]),
                theory_var: None,
            });
        }
    }
    cols
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.17e}")).unwrap_or_default()
}

/// Writes `<column>.csv` per column, `summary.csv`, `diagnostics.csv` and,
/// for Σ estimates, `truth.csv` with both transposition representatives.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for col in &result.columns {
        let mut w = std::io::BufWriter::new(fs::File::create(dir.join(format!("{}.csv", col.name)))?);
        writeln!(w, "trial,value")?;
        for (t, v) in col.values.iter().enumerate() {
            writeln!(w, "{t},{v:.17e}")?;
        }
        w.flush()?;
    }
    let mut w = fs::File::create(dir.join("summary.csv"))?;
    writeln!(w, "statistic,mc_mean,mc_var,theory_mean,theory_var,mc_skewness")?;
    for col in &result.columns {
        let skew = Some(col.skewness()).filter(|s| s.is_finite());
        writeln!(
            w,
            "{},{:.17e},{},{},{},{}",
            col.name,
            col.mc_mean(),
            fmt_opt(col.mc_var()),
            fmt_opt(col.theory_mean),
            fmt_opt(col.theory_var),
            fmt_opt(skew)
        )?;
    }
    if !result.nonconverged.is_empty() {
        let mut w = fs::File::create(dir.join("diagnostics.csv"))?;
        writeln!(w, "n,trials,nonconverged")?;
        for (n, k) in &result.nonconverged {
            writeln!(w, "{n},{},{k}", result.trials)?;
        }
    }
    if result.kind == ExperimentKind::SigmaEstimates {
        let alt = transposed_representative(&result.truth);
        let mut w = fs::File::create(dir.join("truth.csv"))?;
        writeln!(w, "entry,truth,transposed_truth")?;
        let p = result.truth.rows();
        for i in 0..p {
            for j in 0..p {
                writeln!(
                    w,
                    "Sigma{}{},{:.17e},{:.17e}",
                    i + 1,
                    j + 1,
                    result.truth[(i, j)],
                    alt[(i, j)]
                )?;
            }
        }
    }
    Ok(())
}
