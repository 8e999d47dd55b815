//! Plain-text summaries in the style of a linear-model printout.

use std::io::Write;

use antitonic::densities::{two_sided_hazard, v_cq};
use antitonic::special::norm_sf;
use antitonic::{
    Estimator, FitConfig, FitMode, FitResult, InferenceResult, ProjectedScore, ReferenceDensity, RegressionData,
};

use crate::error::CliError;

fn p_value(z: f64) -> String {
    let p = 2.0 * norm_sf(z.abs());
    if p < 2e-16 {
        "<2e-16".into()
    } else if p < 1e-4 {
        format!("{p:.1e}")
    } else {
        format!("{p:.4}")
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[allow(clippy::too_many_arguments)]
pub fn fit_summary<W: Write>(
    w: &mut W,
    data: &RegressionData,
    terms: &[String],
    fit: &FitResult,
    inference: Option<&InferenceResult>,
    estimator: Estimator,
    cfg: &FitConfig,
    level: f64,
) -> Result<(), CliError> {
    let mode = match cfg.mode {
        FitMode::Plain => "plain",
        FitMode::Symmetric => "symmetric",
        FitMode::Intercept => "intercept",
    };
    writeln!(
        w,
        "Estimator: {estimator} ({mode} mode), n = {}, d = {}",
        data.n(),
        data.d()
    )?;
    let mut res = fit.residuals.clone();
    res.sort_by(f64::total_cmp);
    writeln!(w, "\nResiduals:")?;
    writeln!(
        w,
        "{:>12} {:>12} {:>12} {:>12} {:>12}",
        "Min", "1Q", "Median", "3Q", "Max"
    )?;
    let qs: Vec<String> = [0.0, 0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|&q| format!("{:>12.5}", quantile(&res, q)))
        .collect();
    writeln!(w, "{}", qs.join(" "))?;
    let width = terms.iter().map(String::len).max().unwrap_or(0).max(11);
    let lo = format!("{:.1} %", 50.0 * (1.0 - level));
    let hi = format!("{:.1} %", 50.0 * (1.0 + level));
    writeln!(w, "\nCoefficients:")?;
    writeln!(
        w,
        "{:width$} {:>12} {:>12} {:>9} {:>9} {:>12} {:>12}",
        "", "Estimate", "Std. Error", "z value", "Pr(>|z|)", lo, hi
    )?;
    for (j, t) in terms.iter().enumerate() {
        let b = fit.beta[j];
        match inference {
            Some(inf) => {
                let se = inf.std_errors[j];
                let (l, h) = inf.intervals[j];
                writeln!(
                    w,
                    "{t:width$} {b:>12.6} {se:>12.6} {:>9.3} {:>9} {l:>12.6} {h:>12.6}",
                    b / se,
                    p_value(b / se)
                )?;
            }
            None => writeln!(
                w,
                "{t:width$} {b:>12.6} {:>12} {:>9} {:>9} {:>12} {:>12}",
                "NA", "NA", "NA", "NA", "NA"
            )?,
        }
    }
    writeln!(w)?;
    if let Some(inf) = inference {
        writeln!(w, "Antitonic information: {:.6}", inf.i_star_hat)?;
        if let Some(u) = inf.upsilon_hat {
            writeln!(w, "Centring variance: {u:.6}")?;
        }
    }
    if !fit.objective_trace.is_empty() || fit.iterations > 0 {
        let state = if fit.converged { "converged" } else { "did not converge" };
        writeln!(w, "Solver {state} after {} iterations", fit.iterations)?;
    }
    if let Some(note) = &fit.note {
        writeln!(w, "Note: {note}")?;
    }
    if inference.is_none() {
        writeln!(
            w,
            "Standard errors need an antitonic fit in symmetric or intercept mode"
        )?;
    }
    Ok(())
}

pub fn oracle_summary<W: Write>(w: &mut W, d: &ReferenceDensity, ps: &ProjectedScore) -> Result<(), CliError> {
    let row = |w: &mut W, name: &str, v: f64| writeln!(w, "{name:<34} {v:.6}");
    writeln!(w, "Density: {d}")?;
    row(w, "Fisher information i", ps.fisher_info)?;
    row(w, "Antitonic information i*", ps.i_star)?;
    row(w, "Optimal variance factor 1/i*", 1.0 / ps.i_star)?;
    row(w, "Efficiency ARE* = i*/i", ps.are_star)?;
    row(w, "Lower bound 4‖p‖²/i", ps.are_lower_bound())?;
    match v_cq(d) {
        Ok(v) => row(w, "Composite quantile variance V_CQ", v)?,
        Err(_) => writeln!(w, "{:<34} NA", "Composite quantile variance V_CQ")?,
    }
    let us: Vec<f64> = (1..2000).map(|k| k as f64 / 2000.0).collect();
    let sup = us
        .iter()
        .map(|&u| two_sided_hazard(d, d.quantile(u)))
        .fold(0.0, f64::max);
    let left = two_sided_hazard(d, d.quantile(1e-9));
    let right = two_sided_hazard(d, d.quantile(1.0 - 1e-9));
    row(w, "Two-sided hazard, sup on grid", sup)?;
    row(w, "Two-sided hazard, left tail", left)?;
    row(w, "Two-sided hazard, right tail", right)?;
    row(w, "Score limit at -inf", ps.score.left_limit())?;
    row(w, "Score limit at +inf", ps.score.right_limit())?;
    Ok(())
}
