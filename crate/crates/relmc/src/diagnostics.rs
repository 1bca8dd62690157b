//! Convergence-rate diagnostics and the MC-vs-MLMC speedup curve.
//!
//! The multilevel complexity theorem is parameterised by three rates:
//! alpha (decay of the level means), beta (decay of the level
//! variances) and gamma (growth of the per-sample cost). None are
//! available analytically here, so they are estimated by ordinary
//! least squares on the log2-scaled per-level series, using levels
//! >= 1 only since level 0 is not a difference.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::RngStream;
use crate::error::{Error, Result};
use crate::estimator::LevelStats;
use crate::levels::LevelPartition;
use crate::simulator::{
    sample_coupled, sample_coupled_repairable, sample_lifetime, sample_lifetime_repairable,
};
use crate::system::System;

/// Per-level summary consumed by the rate fits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: usize,
    pub n: u64,
    /// Level 0: mean lifetime under C_0; levels >= 1: mean coupled
    /// difference (nonnegative).
    pub mean: f64,
    pub var: f64,
    pub n_cutsets: usize,
    /// Trimmed mean seconds per sample (top and bottom 1% dropped).
    pub kappa_seconds: f64,
    /// Raw per-sample wall times, retained for inspection.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub raw_seconds: Vec<f64>,
}

impl From<&LevelStats> for LevelSummary {
    fn from(s: &LevelStats) -> Self {
        LevelSummary {
            level: s.level,
            n: s.n,
            mean: s.mean,
            var: s.var,
            n_cutsets: s.n_cutsets,
            kappa_seconds: s.kappa_seconds,
            raw_seconds: Vec::new(),
        }
    }
}

/// Which per-level cost series the gamma fit uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostSeries {
    /// The exact geometric cost weight 2^l implied by the level-size
    /// doubling; appropriate for non-repairable runs.
    Geometric,
    /// Empirical mean seconds per sample; appropriate for repairable
    /// runs, where the failure/repair process randomises the runtime.
    Kappa,
}

/// Fitted decay/growth rates plus the fitted series and residuals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateReport {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// (level, log2 mean) pairs entering the alpha fit; zero means are
    /// excluded.
    pub mean_series: Vec<(usize, f64)>,
    pub var_series: Vec<(usize, f64)>,
    pub cost_series: Vec<(usize, f64)>,
    pub alpha_residuals: Vec<f64>,
    pub beta_residuals: Vec<f64>,
    pub gamma_residuals: Vec<f64>,
    /// Levels dropped from the alpha fit because their mean was exactly 0.
    pub excluded_levels: Vec<usize>,
}

fn ols(points: &[(usize, f64)]) -> (f64, Vec<f64>) {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|&(l, _)| l as f64).sum();
    let sy: f64 = points.iter().map(|&(_, y)| y).sum();
    let sxx: f64 = points.iter().map(|&(l, _)| (l as f64) * (l as f64)).sum();
    let sxy: f64 = points.iter().map(|&(l, y)| l as f64 * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let residuals = points
        .iter()
        .map(|&(l, y)| y - (intercept + slope * l as f64))
        .collect();
    (slope, residuals)
}

/// Fit alpha, beta, gamma by OLS over levels >= 1.
pub fn fit_rates(levels: &[LevelSummary], cost: CostSeries) -> Result<RateReport> {
    let diffs: Vec<&LevelSummary> = levels.iter().filter(|s| s.level >= 1).collect();
    if diffs.len() < 2 {
        return Err(Error::Parameter(
            "rate fit needs at least two difference levels".into(),
        ));
    }
    if diffs.iter().any(|s| s.n < 2) {
        return Err(Error::Parameter("every level needs at least 2 samples".into()));
    }

    let mut excluded = Vec::new();
    let mean_series: Vec<(usize, f64)> = diffs
        .iter()
        .filter_map(|s| {
            if s.mean == 0.0 {
                excluded.push(s.level);
                None
            } else {
                Some((s.level, s.mean.abs().log2()))
            }
        })
        .collect();
    if mean_series.len() < 2 {
        return Err(Error::Parameter("too few nonzero level means for the alpha fit".into()));
    }
    let var_series: Vec<(usize, f64)> =
        diffs.iter().map(|s| (s.level, s.var.max(f64::MIN_POSITIVE).log2())).collect();
    let cost_series: Vec<(usize, f64)> = diffs
        .iter()
        .map(|s| {
            let c = match cost {
                CostSeries::Geometric => (1u64 << s.level) as f64,
                CostSeries::Kappa => s.kappa_seconds,
            };
            (s.level, c.log2())
        })
        .collect();

    let (mean_slope, alpha_residuals) = ols(&mean_series);
    let (var_slope, beta_residuals) = ols(&var_series);
    let (cost_slope, gamma_residuals) = ols(&cost_series);
    Ok(RateReport {
        alpha: -mean_slope,
        beta: -var_slope,
        gamma: cost_slope,
        mean_series,
        var_series,
        cost_series,
        alpha_residuals,
        beta_residuals,
        gamma_residuals,
        excluded_levels: excluded,
    })
}

/// Predicted MC-over-MLMC cost ratio at accuracy `eps`:
/// `V(tau) kappa_L / (sum_{l <= L_eps} sqrt(V_l kappa_l))^2`,
/// where `L_eps` is the earliest difference level with mean below
/// `eps` (the full telescope when none qualifies). The `eps^-2`
/// factors cancel.
pub fn speedup_curve(
    mc_var: f64,
    kappa_full: f64,
    levels: &[LevelSummary],
    eps_grid: &[f64],
) -> Vec<(f64, f64)> {
    let top = levels.iter().map(|s| s.level).max().unwrap_or(0);
    eps_grid
        .iter()
        .map(|&eps| {
            let l_eps = levels
                .iter()
                .filter(|s| s.level >= 1 && s.mean < eps)
                .map(|s| s.level)
                .min()
                .unwrap_or(top);
            let denom: f64 = levels
                .iter()
                .filter(|s| s.level <= l_eps)
                .map(|s| (s.var * s.kappa_seconds).sqrt())
                .sum();
            (eps, mc_var * kappa_full / (denom * denom))
        })
        .collect()
}

/// Sample every level of the partition a fixed number of times,
/// timing each draw, to produce the data behind the diagnostic plots.
pub fn diagnose_levels(
    sys: &System,
    partition: &LevelPartition,
    n_samples: usize,
    stream: RngStream,
    repairable: bool,
) -> Result<Vec<LevelSummary>> {
    if n_samples < 4 {
        return Err(Error::Parameter("diagnosis needs at least 4 samples per level".into()));
    }
    partition.validate(sys)?;
    let mut out = Vec::new();
    for level in 0..=partition.top_level() {
        let cuts_fine = partition.cuts_at(sys, level);
        let cuts_coarse = if level > 0 { partition.cuts_at(sys, level - 1) } else { Vec::new() };
        const CHUNK: usize = 64;
        let n_chunks = n_samples.div_ceil(CHUNK);
        let level_stream = stream.derive(0xd1a6 + level as u64);
        let samples: Vec<(f64, f64)> = (0..n_chunks)
            .into_par_iter()
            .map(|chunk| {
                let mut rng = level_stream.derive(chunk as u64).rng();
                let count = CHUNK.min(n_samples - chunk * CHUNK);
                let mut local = Vec::with_capacity(count);
                for _ in 0..count {
                    let t0 = std::time::Instant::now();
                    let y = if level == 0 {
                        if repairable {
                            sample_lifetime_repairable(sys, &cuts_fine, &mut rng, None)?.lifetime
                        } else {
                            sample_lifetime(sys, &cuts_fine, &mut rng)
                        }
                    } else {
                        let s = if repairable {
                            sample_coupled_repairable(sys, &cuts_coarse, &cuts_fine, &mut rng)?
                        } else {
                            sample_coupled(sys, &cuts_coarse, &cuts_fine, &mut rng)?
                        };
                        s.t_coarse - s.t_fine
                    };
                    local.push((y, t0.elapsed().as_secs_f64()));
                }
                Ok(local)
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();

        let n = samples.len();
        let mean = samples.iter().map(|&(y, _)| y).sum::<f64>() / n as f64;
        let var = samples.iter().map(|&(y, _)| (y - mean) * (y - mean)).sum::<f64>()
            / (n as f64 - 1.0);
        let raw_seconds: Vec<f64> = samples.iter().map(|&(_, t)| t).collect();
        out.push(LevelSummary {
            level,
            n: n as u64,
            mean,
            var,
            n_cutsets: partition.level_size(level),
            kappa_seconds: trimmed_mean(&raw_seconds, 0.01),
            raw_seconds,
        });
    }
    Ok(out)
}

/// Mean with the top and bottom `frac` of the values dropped; resists
/// timer noise.
pub fn trimmed_mean(values: &[f64], frac: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let drop = (sorted.len() as f64 * frac).floor() as usize;
    let kept = &sorted[drop..sorted.len() - drop];
    kept.iter().sum::<f64>() / kept.len() as f64
}
