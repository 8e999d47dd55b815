//! Flag and config-file resolution. Precedence: flags, then the config file,
//! then defaults.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use antitonic::{
    Bandwidth, CrossFit, Estimator, ExperimentSpec, FitConfig, FitMode, Folds, Kernel, Pilot, ReferenceDensity, Zeta,
};
use clap::Args;

use crate::error::CliError;

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
pub struct Shared {
    /// Flat key=value file; flags override its entries.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// plain, symmetric or intercept.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// none or three.
    #[arg(long, global = true)]
    pub folds: Option<String>,
    /// avg or pooled.
    #[arg(long, global = true)]
    pub crossfit: Option<String>,
    /// ols, lad or huber:K.
    #[arg(long, global = true)]
    pub pilot: Option<String>,
    /// mean or quantile:TAU (median = quantile:0.5).
    #[arg(long, global = true)]
    pub zeta: Option<String>,
    /// gaussian, quartic or triweight.
    #[arg(long, global = true)]
    pub kernel: Option<String>,
    /// silverman or a positive number.
    #[arg(long, global = true)]
    pub bandwidth: Option<String>,
    /// Quantile grid size for the score estimate.
    #[arg(long, global = true)]
    pub grid: Option<String>,
    /// Score truncation level.
    #[arg(long, global = true)]
    pub alpha: Option<String>,
    /// Density floor for score truncation.
    #[arg(long, global = true)]
    pub gamma: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<String>,
    /// Worker threads for Monte Carlo replications.
    #[arg(long, global = true)]
    pub threads: Option<String>,
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

/// Simulation design flags.
#[derive(Args, Debug, Clone, Default)]
pub struct Design {
    /// Noise density, e.g. cauchy, gaussian_mix:0.4,-2,1,0.6,2,1, loc_mix.
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub n: Option<String>,
    /// Number of coefficients, intercept included.
    #[arg(long)]
    pub d: Option<String>,
    /// Design without intercept column: x ~ N(0, I).
    #[arg(long)]
    pub no_intercept: bool,
    /// Draw a fresh θ₀ for every replication.
    #[arg(long)]
    pub redraw_theta: bool,
}

const KEYS: &[&str] = &[
    "mode",
    "folds",
    "crossfit",
    "pilot",
    "zeta",
    "kernel",
    "bandwidth",
    "grid",
    "alpha",
    "gamma",
    "seed",
    "threads",
    "out",
    "noise",
    "n",
    "d",
    "reps",
    "estimators",
    "levels",
    "level",
    "no_intercept",
    "redraw_theta",
    "timing",
    "estimator",
];

/// Values from flags and an optional config file.
pub struct Resolver {
    file: HashMap<String, String>,
}

impl Resolver {
    pub fn new(config: Option<&Path>) -> Result<Self, CliError> {
        let mut file = HashMap::new();
        if let Some(path) = config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", i + 1)))?;
                let key = k.trim().replace('-', "_");
                if !KEYS.contains(&key.as_str()) {
                    return Err(CliError::Usage(format!(
                        "config line {}: unknown key '{}'",
                        i + 1,
                        k.trim()
                    )));
                }
                file.insert(key, v.trim().to_string());
            }
        }
        Ok(Self { file })
    }

    pub fn raw(&self, key: &str, flag: &Option<String>) -> Option<String> {
        flag.clone().or_else(|| self.file.get(key).cloned())
    }

    pub fn get<T>(
        &self,
        key: &str,
        flag: &Option<String>,
        default: T,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<T, CliError> {
        match self.raw(key, flag) {
            None => Ok(default),
            Some(s) => parse(&s).ok_or_else(|| CliError::Usage(format!("invalid value '{s}' for {key}"))),
        }
    }

    pub fn flag(&self, key: &str, set: bool) -> Result<bool, CliError> {
        if set {
            return Ok(true);
        }
        self.get(key, &None, false, |s| s.parse().ok())
    }

    pub fn has(&self, key: &str, flag: &Option<String>) -> bool {
        self.raw(key, flag).is_some()
    }
}

fn number<T: FromStr>(s: &str) -> Option<T> {
    s.trim().parse().ok()
}

pub fn parse_mode(s: &str) -> Option<FitMode> {
    match s {
        "plain" => Some(FitMode::Plain),
        "symmetric" => Some(FitMode::Symmetric),
        "intercept" => Some(FitMode::Intercept),
        _ => None,
    }
}

pub fn parse_pilot(s: &str) -> Option<Pilot> {
    match s {
        "ols" => Some(Pilot::Ols),
        "lad" => Some(Pilot::Lad),
        _ => {
            let k: f64 = number(s.strip_prefix("huber:")?)?;
            (k > 0.0).then_some(Pilot::Huber(k))
        }
    }
}

pub fn parse_zeta(s: &str) -> Option<Zeta> {
    match s {
        "mean" => Some(Zeta::Mean),
        "median" => Some(Zeta::Quantile(0.5)),
        _ => {
            let t: f64 = number(s.strip_prefix("quantile:")?)?;
            (t > 0.0 && t < 1.0).then_some(Zeta::Quantile(t))
        }
    }
}

pub fn parse_list<T: FromStr>(s: &str) -> Option<Vec<T>> {
    s.split(',').map(|p| p.trim().parse().ok()).collect()
}

/// Resolved fit settings and the pieces of `Shared` that are not part of
/// [`FitConfig`].
pub struct Settings {
    pub fit: FitConfig,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub pilot_given: bool,
}

pub fn settings(shared: &Shared, r: &Resolver, default_mode: FitMode) -> Result<Settings, CliError> {
    let mut fit = FitConfig {
        mode: r.get("mode", &shared.mode, default_mode, parse_mode)?,
        folds: r.get("folds", &shared.folds, Folds::None, |s| match s {
            "none" => Some(Folds::None),
            "three" | "3" => Some(Folds::Three),
            _ => None,
        })?,
        crossfit: r.get("crossfit", &shared.crossfit, CrossFit::Average, |s| match s {
            "avg" => Some(CrossFit::Average),
            "pooled" => Some(CrossFit::Pooled),
            _ => None,
        })?,
        pilot: r.get("pilot", &shared.pilot, Pilot::Lad, parse_pilot)?,
        zeta: r.get("zeta", &shared.zeta, Zeta::Mean, parse_zeta)?,
        seed: r.get("seed", &shared.seed, 0, number)?,
        ..FitConfig::default()
    };
    fit.score.kernel = r.get("kernel", &shared.kernel, Kernel::Gaussian, |s| s.parse().ok())?;
    fit.score.bandwidth = r.get("bandwidth", &shared.bandwidth, Bandwidth::Silverman, |s| s.parse().ok())?;
    fit.score.grid_size = r.get("grid", &shared.grid, fit.score.grid_size, |s| {
        number(s).filter(|g| *g >= 3)
    })?;
    fit.score.truncation.alpha = r.get("alpha", &shared.alpha, fit.score.truncation.alpha, |s| {
        number(s).filter(|a: &f64| *a > 0.0)
    })?;
    fit.score.truncation.gamma = r.get("gamma", &shared.gamma, fit.score.truncation.gamma, |s| {
        number(s).filter(|g: &f64| *g > 0.0)
    })?;
    fit.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let threads = r.get("threads", &shared.threads, None, |s| {
        number(s).filter(|t| *t > 0).map(Some)
    })?;
    let out = shared.out.clone().or_else(|| r.raw("out", &None).map(PathBuf::from));
    Ok(Settings {
        fit,
        threads,
        out,
        pilot_given: r.has("pilot", &shared.pilot),
    })
}

/// Builds the experiment for the simulation subcommands.
pub fn experiment(
    design: &Design,
    reps: &Option<String>,
    estimators: &Option<String>,
    settings: &Settings,
    r: &Resolver,
    default_d: usize,
) -> Result<ExperimentSpec, CliError> {
    let noise: ReferenceDensity = r.get("noise", &design.noise, ReferenceDensity::standard_cauchy(), |s| {
        s.parse().ok()
    })?;
    let n = r.get("n", &design.n, 600, number)?;
    let d = r.get("d", &design.d, default_d, number)?;
    let reps = r.get("reps", reps, 200, number)?;
    let mut spec = ExperimentSpec::new(noise, n, d, reps, settings.fit.seed);
    spec.estimators = r.get("estimators", estimators, Estimator::ALL.to_vec(), parse_list)?;
    spec.intercept = !r.flag("no_intercept", design.no_intercept)?;
    spec.redraw_theta = r.flag("redraw_theta", design.redraw_theta)?;
    spec.fit = settings.fit;
    // the location mixture runs use a least-squares pilot unless told otherwise
    if !settings.pilot_given && is_loc_mix(r, design) {
        spec.fit.pilot = Pilot::Ols;
    }
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(spec)
}

fn is_loc_mix(r: &Resolver, design: &Design) -> bool {
    r.raw("noise", &design.noise).is_some_and(|s| s.trim() == "loc_mix")
}
