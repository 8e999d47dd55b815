#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod data;
mod error;
mod options;
mod report;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use antitonic::{
    alternating_fit, asm_fit, asm_fit_crossfit, coverage, fit_pilot, infer, mse_compare, negative_antiderivative,
    one_step_fit, projected_score_closed_form, projected_score_numeric, simulate, ClosedFormFamily, Error, Estimator,
    ExperimentSpec, FitMode, Folds, Loss, Pilot, ReferenceDensity,
};
use clap::{Parser, Subcommand};

use crate::data::{float, read_table, write_csv};
use crate::error::CliError;
use crate::options::{experiment, parse_list, settings, Design, Resolver, Settings, Shared};

#[derive(Parser, Debug)]
#[command(name = "asm", version, about = "Antitonic score matching for linear regression")]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a linear model to a CSV file (covariates x1.., response y).
    Fit {
        file: PathBuf,
        /// asm, alt, 1s, lad or ols.
        #[arg(long)]
        estimator: Option<String>,
        /// Confidence level of the reported intervals.
        #[arg(long)]
        level: Option<String>,
        /// Do not add an intercept column.
        #[arg(long)]
        no_intercept: bool,
    },
    /// Draw one data set from the simulation design.
    Simulate {
        #[command(flatten)]
        design: Design,
    },
    /// Squared estimation error of several estimators over replications.
    MseCompare {
        #[command(flatten)]
        design: Design,
        #[arg(long)]
        reps: Option<String>,
        /// Comma-separated subset of oracle, asm, alt, 1s, lad, ols.
        #[arg(long)]
        estimators: Option<String>,
        /// Add wall-clock columns (not reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Coverage of confidence intervals and ellipsoids over replications.
    Coverage {
        #[command(flatten)]
        design: Design,
        #[arg(long)]
        reps: Option<String>,
        /// Comma-separated confidence levels.
        #[arg(long)]
        levels: Option<String>,
    },
    /// Population quantities of a reference density; curves go to --out.
    Oracle {
        density: String,
        /// Half-width of the curve grid.
        #[arg(long, default_value_t = 5.0)]
        range: f64,
        #[arg(long, default_value_t = 401)]
        points: usize,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("asm: {e}");
        std::process::exit(e.code());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let r = Resolver::new(cli.shared.config.as_deref())?;
    match &cli.command {
        Command::Fit {
            file,
            estimator,
            level,
            no_intercept,
        } => {
            let s = settings(&cli.shared, &r, FitMode::Symmetric)?;
            let estimator: Estimator = r.get("estimator", estimator, Estimator::Asm, |v| {
                v.parse().ok().filter(|e| *e != Estimator::Oracle)
            })?;
            let level = r.get("level", level, 0.95, |v| {
                v.parse().ok().filter(|l: &f64| *l > 0.0 && *l < 1.0)
            })?;
            let intercept = !r.flag("no_intercept", *no_intercept)?;
            cmd_fit(file, estimator, level, intercept, &s)
        }
        Command::Simulate { design } => {
            let s = experiment_settings(&cli.shared, &r, design)?;
            let spec = experiment(design, &Some("1".into()), &None, &s, &r, 4)?;
            cmd_simulate(&spec, &s)
        }
        Command::MseCompare {
            design,
            reps,
            estimators,
            timing,
        } => {
            let s = experiment_settings(&cli.shared, &r, design)?;
            let spec = experiment(design, reps, estimators, &s, &r, 6)?;
            let timing = r.flag("timing", *timing)?;
            with_threads(&s, || cmd_mse_compare(&spec, timing, &s))
        }
        Command::Coverage { design, reps, levels } => {
            let s = experiment_settings(&cli.shared, &r, design)?;
            let spec = experiment(design, reps, &None, &s, &r, 4)?;
            let levels = r.get("levels", levels, vec![0.95], |v| {
                parse_list::<f64>(v).filter(|l| l.iter().all(|x| *x > 0.0 && *x < 1.0))
            })?;
            with_threads(&s, || cmd_coverage(&spec, &levels, &s))
        }
        Command::Oracle { density, range, points } => {
            let s = settings(&cli.shared, &r, FitMode::Symmetric)?;
            let d: ReferenceDensity = density.parse().map_err(|e: Error| CliError::Usage(e.to_string()))?;
            if !(*range > 0.0) || *points < 2 {
                return Err(CliError::Usage(
                    "--range must be positive and --points at least 2".into(),
                ));
            }
            let grid = r.get("grid", &cli.shared.grid, 8193, |v| v.parse().ok())?;
            cmd_oracle(&d, grid, *range, *points, &s)
        }
    }
}

/// Simulation commands default to intercept mode unless the design has none.
fn experiment_settings(shared: &Shared, r: &Resolver, design: &Design) -> Result<Settings, CliError> {
    let default = if r.flag("no_intercept", design.no_intercept)? {
        FitMode::Symmetric
    } else {
        FitMode::Intercept
    };
    settings(shared, r, default)
}

fn with_threads<T>(s: &Settings, f: impl FnOnce() -> Result<T, CliError> + Send) -> Result<T, CliError>
where
    T: Send,
{
    match s.threads {
        None => f(),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(f),
    }
}

fn output(s: &Settings) -> Result<Box<dyn Write>, CliError> {
    Ok(match &s.out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Data(format!("cannot write {}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_fit(file: &Path, estimator: Estimator, level: f64, intercept: bool, s: &Settings) -> Result<(), CliError> {
    let table = read_table(file)?;
    let (data, terms) = table.regression(intercept)?;
    let cfg = &s.fit;
    if cfg.mode == FitMode::Intercept && !intercept {
        return Err(CliError::Usage("intercept mode needs the intercept column".into()));
    }
    let fit = match estimator {
        Estimator::Asm => match cfg.folds {
            Folds::None => asm_fit(&data, cfg),
            Folds::Three => asm_fit_crossfit(&data, cfg),
        },
        Estimator::Alt => alternating_fit(&data, cfg),
        Estimator::OneStep => one_step_fit(&data, cfg),
        Estimator::Lad => fit_pilot(&data, Pilot::Lad),
        Estimator::Ols => fit_pilot(&data, Pilot::Ols),
        Estimator::Oracle => unreachable!(),
    }?;
    let mode = if cfg.mode == FitMode::Plain {
        FitMode::Symmetric
    } else {
        cfg.mode
    };
    let inference = if fit.i_star_hat.is_finite() && fit.i_star_hat > 0.0 {
        infer(&data, &fit, mode, 1.0 - level).ok()
    } else {
        None
    };
    let mut stdout = io::stdout().lock();
    report::fit_summary(
        &mut stdout,
        &data,
        &terms,
        &fit,
        inference.as_ref(),
        estimator,
        cfg,
        level,
    )?;
    if let Some(path) = &s.out {
        let header: Vec<String> = ["term", "estimate", "std_error", "lower", "upper"]
            .map(String::from)
            .to_vec();
        let rows: Vec<Vec<String>> = terms
            .iter()
            .enumerate()
            .map(|(j, t)| {
                let (se, lo, hi) = match &inference {
                    Some(inf) => (
                        float(inf.std_errors[j]),
                        float(inf.intervals[j].0),
                        float(inf.intervals[j].1),
                    ),
                    None => ("NA".into(), "NA".into(), "NA".into()),
                };
                vec![t.clone(), float(fit.beta[j]), se, lo, hi]
            })
            .collect();
        let f = File::create(path).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        write_csv(BufWriter::new(f), &header, &rows)?;
    }
    Ok(())
}

fn cmd_simulate(spec: &ExperimentSpec, s: &Settings) -> Result<(), CliError> {
    let rep = simulate(spec, 0)?;
    let x = rep.data.design();
    let p = if spec.intercept { spec.d - 1 } else { spec.d };
    let mut header: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    let rows: Vec<Vec<String>> = (0..spec.n)
        .map(|i| {
            let mut row: Vec<String> = (0..p).map(|j| float(x[(i, j)])).collect();
            row.push(float(rep.data.response()[i]));
            row
        })
        .collect();
    write_csv(output(s)?, &header, &rows)
}

fn cmd_mse_compare(spec: &ExperimentSpec, timing: bool, s: &Settings) -> Result<(), CliError> {
    let rows = mse_compare(spec)?;
    let mut header: Vec<String> = ["estimator", "mse", "mse_x1000", "std_error", "successes", "failures"]
        .map(String::from)
        .to_vec();
    if timing {
        header.extend(["mean_seconds".to_string(), "median_seconds".to_string()]);
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![
                r.estimator.to_string(),
                float(r.mse),
                float(1e3 * r.mse),
                float(r.std_error),
                r.successes.to_string(),
                r.failures.to_string(),
            ];
            if timing {
                v.extend([float(r.mean_seconds), float(r.median_seconds)]);
            }
            v
        })
        .collect();
    write_csv(output(s)?, &header, &table)
}

fn cmd_coverage(spec: &ExperimentSpec, levels: &[f64], s: &Settings) -> Result<(), CliError> {
    let alphas: Vec<f64> = levels.iter().map(|l| 1.0 - l).collect();
    let rep = coverage(spec, &alphas)?;
    let k = spec.reported();
    let mut header = vec!["level".to_string()];
    header.extend((1..=k).map(|j| format!("x{j}")));
    header.extend(
        [
            "ellipsoid",
            "volume_ratio",
            "i_star_mean",
            "i_star_rmse",
            "i_star_target",
            "ks_min_p",
            "successes",
            "failures",
        ]
        .map(String::from),
    );
    let ks_min = rep.ks_pvalues.iter().cloned().fold(1.0, f64::min);
    let rows: Vec<Vec<String>> = rep
        .levels
        .iter()
        .zip(levels)
        .map(|(c, l)| {
            let mut v = vec![float(*l)];
            v.extend(c.coordinate.iter().map(|x| float(*x)));
            v.extend([
                float(c.ellipsoid),
                float(c.volume_ratio),
                float(rep.i_star_mean),
                float(rep.i_star_rmse),
                float(rep.target_i_star),
                float(ks_min),
                rep.successes.to_string(),
                rep.failures.to_string(),
            ]);
            v
        })
        .collect();
    write_csv(output(s)?, &header, &rows)
}

fn cmd_oracle(d: &ReferenceDensity, grid: usize, range: f64, points: usize, s: &Settings) -> Result<(), CliError> {
    let ps = match ClosedFormFamily::of(d) {
        Some(f) => projected_score_closed_form(f)?,
        None => projected_score_numeric(d, grid)?,
    };
    let mut stdout = io::stdout().lock();
    report::oracle_summary(&mut stdout, d, &ps)?;
    if let Some(path) = &s.out {
        let star = antitonic::densities::fisher_divergence_projection(&ps)?;
        let loss = negative_antiderivative(&ps.score, 0.0);
        let header: Vec<String> = ["z", "psi0", "psi_star", "loss_star", "p0", "p_star"]
            .map(String::from)
            .to_vec();
        let rows: Vec<Vec<String>> = (0..points)
            .map(|i| {
                let z = -range + 2.0 * range * i as f64 / (points - 1) as f64;
                vec![
                    float(z),
                    float(d.score(z)),
                    float(ps.score.eval(z)),
                    float(loss.value(z)),
                    float(d.pdf(z)),
                    float(star.pdf(z)),
                ]
            })
            .collect();
        let f = File::create(path).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        write_csv(BufWriter::new(f), &header, &rows)?;
        writeln!(stdout, "curves written to {}", path.display())?;
    }
    Ok(())
}
