//! Exchangeable bootstrap, Kolmogorov-Smirnov test of a zero effect,
//! uniform confidence bands and pointwise standard errors.
//!
//! Bootstrap draw `b` of cell `c` always uses the random stream keyed by
//! `(seed, c, b)`, so results do not depend on evaluation order or on how
//! draws are spread over threads. The sup over quantile levels is taken on
//! the finite grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CellSample, CovariateCode, Mode};
use crate::empirical::StepDistribution;
use crate::error::{Error, Result};
use crate::estimators::{
    counterfactual_cdf, cqtt, treated_shares, unconditional_qtt, CqttProcess, Estimator,
    SampleWeights, TauGrid,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BootstrapScheme {
    /// Empirical bootstrap: multinomial resampling counts.
    #[default]
    Multinomial,
    /// Bayesian bootstrap: normalized exponential weights.
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub scheme: BootstrapScheme,
    pub iterations: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            scheme: BootstrapScheme::Multinomial,
            iterations: 1000,
            alpha: 0.05,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("bootstrap iterations must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }
}

/// Random stream for draw `draw` of stream `stream` (a cell index, or a
/// Monte Carlo replication). Each draw owns a 2^36-word window of the ChaCha
/// keystream selected by `stream`.
pub fn substream(seed: u64, stream: u64, draw: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(draw) << 36);
    rng
}

/// Exchangeable weights for one arm of `size` observations. Multinomial
/// weights are counts summing to `size`; Dirichlet weights are scaled to the
/// same total.
pub fn draw_weights<R: Rng + ?Sized>(size: usize, scheme: BootstrapScheme, rng: &mut R) -> Vec<f64> {
    match scheme {
        BootstrapScheme::Multinomial => {
            let mut counts = vec![0.0; size];
            for _ in 0..size {
                counts[rng.random_range(0..size)] += 1.0;
            }
            counts
        }
        BootstrapScheme::Dirichlet => {
            let raw: Vec<f64> = (0..size).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|e| size as f64 * e / total).collect()
        }
    }
}

/// Weights for every sample of a cell. Panel arms are resampled by unit, so
/// both periods of an arm share one vector; cross-section samples are drawn
/// independently. Arms are always drawn in the order control, treated.
pub fn draw_sample_weights<R: Rng + ?Sized>(
    sample: &CellSample,
    scheme: BootstrapScheme,
    rng: &mut R,
) -> SampleWeights {
    match sample.mode {
        Mode::Panel => {
            let control = draw_weights(sample.control_pre.len(), scheme, rng);
            let treated = draw_weights(sample.treated_pre.len(), scheme, rng);
            SampleWeights {
                control_post: control.clone(),
                control_pre: control,
                treated_post: treated.clone(),
                treated_pre: treated,
            }
        }
        Mode::Rcs => SampleWeights {
            control_pre: draw_weights(sample.control_pre.len(), scheme, rng),
            control_post: draw_weights(sample.control_post.len(), scheme, rng),
            treated_pre: draw_weights(sample.treated_pre.len(), scheme, rng),
            treated_post: draw_weights(sample.treated_post.len(), scheme, rng),
        },
    }
}

/// `B x grid` matrix of bootstrap effect processes.
pub type Draws = Vec<Vec<f64>>;

/// Bootstrap draws of several estimators on one cell. All estimators see the
/// same weights in a given draw. `stream` keys the random stream (the cell
/// index in a multi-cell run).
pub fn bootstrap_processes(
    sample: &CellSample,
    estimators: &[Estimator],
    grid: &TauGrid,
    n: usize,
    config: &BootstrapConfig,
    stream: u64,
) -> Result<Vec<Draws>> {
    config.validate()?;
    let per_draw: Vec<Vec<Vec<f64>>> = (0..config.iterations)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(config.seed, stream, b as u64);
            let weights = draw_sample_weights(sample, config.scheme, &mut rng);
            estimators
                .iter()
                .map(|e| e.estimate(sample, Some(&weights), grid, n).map(|p| p.values))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut out = vec![Vec::with_capacity(config.iterations); estimators.len()];
    for draw in per_draw {
        for (slot, values) in out.iter_mut().zip(draw) {
            slot.push(values);
        }
    }
    Ok(out)
}

pub fn bootstrap_process(
    sample: &CellSample,
    estimator: Estimator,
    grid: &TauGrid,
    n: usize,
    config: &BootstrapConfig,
    stream: u64,
) -> Result<Draws> {
    Ok(bootstrap_processes(sample, &[estimator], grid, n, config, stream)?
        .pop()
        .expect("one estimator"))
}

/// Joint bootstrap over cells: draw `b` of cell `c` uses stream `c`, and the
/// pooled effect of draw `b` is re-aggregated from that draw's cell results
/// with the fixed treated shares.
pub fn bootstrap_cells(
    samples: &[CellSample],
    grid: &TauGrid,
    n: usize,
    config: &BootstrapConfig,
    pooled: bool,
) -> Result<(Vec<Draws>, Option<Draws>)> {
    config.validate()?;
    let per_draw: Vec<(Vec<Vec<f64>>, Option<Vec<f64>>)> = (0..config.iterations)
        .into_par_iter()
        .map(|b| {
            let results = samples
                .iter()
                .enumerate()
                .map(|(c, sample)| {
                    let mut rng = substream(config.seed, c as u64, b as u64);
                    let weights = draw_sample_weights(sample, config.scheme, &mut rng);
                    counterfactual_cdf(sample, Some(&weights))
                })
                .collect::<Result<Vec<_>>>()?;
            let cells = results.iter().map(|r| cqtt(r, grid, n).values).collect();
            let pooled = if pooled {
                let shares = treated_shares(&results);
                Some(unconditional_qtt(&results, &shares, grid, n)?.values)
            } else {
                None
            };
            Ok((cells, pooled))
        })
        .collect::<Result<_>>()?;
    let mut cell_draws = vec![Vec::with_capacity(config.iterations); samples.len()];
    let mut pooled_draws = pooled.then(|| Vec::with_capacity(config.iterations));
    for (cells, p) in per_draw {
        for (slot, values) in cell_draws.iter_mut().zip(cells) {
            slot.push(values);
        }
        if let (Some(acc), Some(p)) = (pooled_draws.as_mut(), p) {
            acc.push(p);
        }
    }
    Ok((cell_draws, pooled_draws))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsTest {
    /// `sqrt(n) * max_tau |estimate(tau)|`.
    pub statistic: f64,
    /// Bootstrap `(1 - alpha)` quantile of `sqrt(n) * max_tau |draw - estimate|`.
    pub critical_value: f64,
    pub reject: bool,
}

fn check_draws(estimate: &[f64], draws: &[Vec<f64>]) -> Result<()> {
    if draws.is_empty() {
        return Err(Error::Config("at least one bootstrap draw is required".into()));
    }
    if let Some(d) = draws.iter().find(|d| d.len() != estimate.len()) {
        return Err(Error::LengthMismatch {
            what: "bootstrap draw",
            expected: estimate.len(),
            found: d.len(),
        });
    }
    Ok(())
}

/// Empirical `(1 - alpha)` quantile (generalized inverse) of `values`.
fn upper_quantile(values: &[f64], alpha: f64) -> Result<f64> {
    StepDistribution::fit(values)?.quantile(1.0 - alpha)
}

/// Bootstrap critical value for the sup statistic, using the recentred
/// draws `sqrt(n) (draw - estimate)`.
pub fn ks_critical_value(estimate: &[f64], draws: &[Vec<f64>], n: usize, alpha: f64) -> Result<f64> {
    check_draws(estimate, draws)?;
    let root_n = (n as f64).sqrt();
    let sups: Vec<f64> = draws
        .iter()
        .map(|d| {
            root_n
                * d.iter()
                    .zip(estimate)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
        })
        .collect();
    upper_quantile(&sups, alpha)
}

/// KS test of a zero effect at every grid level.
///
/// The rejection rule `statistic > c` is evaluated as
/// `max |estimate| > c / sqrt(n)`, the same comparison that decides whether
/// the uniform band excludes zero, so test and band can never disagree
/// through rounding.
pub fn ks_test(estimate: &[f64], draws: &[Vec<f64>], n: usize, alpha: f64) -> Result<KsTest> {
    let critical_value = ks_critical_value(estimate, draws, n, alpha)?;
    let root_n = (n as f64).sqrt();
    let max_abs = estimate.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let half_width = critical_value / root_n;
    Ok(KsTest {
        statistic: root_n * max_abs,
        critical_value,
        reject: max_abs > half_width,
    })
}

/// Band `estimate +- c / sqrt(n)` with constant half-width.
pub fn uniform_band(estimate: &[f64], critical_value: f64, n: usize) -> Vec<(f64, f64)> {
    let half_width = critical_value / (n as f64).sqrt();
    estimate
        .iter()
        .map(|&d| (d - half_width, d + half_width))
        .collect()
}

/// Sample standard deviation (divisor `B - 1`) of the draws at each level.
pub fn pointwise_se(draws: &[Vec<f64>]) -> Result<Vec<f64>> {
    if draws.len() < 2 {
        return Err(Error::Config("standard errors need at least two bootstrap draws".into()));
    }
    let b = draws.len() as f64;
    let width = draws[0].len();
    Ok((0..width)
        .map(|k| {
            let mean = draws.iter().map(|d| d[k]).sum::<f64>() / b;
            let ss: f64 = draws.iter().map(|d| (d[k] - mean).powi(2)).sum();
            (ss / (b - 1.0)).sqrt()
        })
        .collect())
}

/// Per-level critical values: the `(1 - alpha)` quantile of
/// `|draw(tau) - estimate(tau)|` over draws.
pub fn pointwise_critical_values(estimate: &[f64], draws: &[Vec<f64>], alpha: f64) -> Result<Vec<f64>> {
    check_draws(estimate, draws)?;
    (0..estimate.len())
        .map(|k| {
            let dev: Vec<f64> = draws.iter().map(|d| (d[k] - estimate[k]).abs()).collect();
            upper_quantile(&dev, alpha)
        })
        .collect()
}

/// Inference summary for one effect process.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceReport {
    /// Covariate code; `None` for the pooled effect.
    pub cell: Option<CovariateCode>,
    pub n: usize,
    pub n_control: usize,
    pub n_treated: usize,
    pub taus: Vec<f64>,
    pub estimate: Vec<f64>,
    pub ks: KsTest,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Absent when fewer than two draws were taken.
    pub se: Option<Vec<f64>>,
    pub iterations: usize,
    pub alpha: f64,
    pub seed: u64,
    pub scheme: BootstrapScheme,
}

impl InferenceReport {
    pub fn from_draws(process: &CqttProcess, draws: &[Vec<f64>], config: &BootstrapConfig) -> Result<Self> {
        let ks = ks_test(&process.values, draws, process.n, config.alpha)?;
        let (lower, upper) = uniform_band(&process.values, ks.critical_value, process.n)
            .into_iter()
            .unzip();
        let se = if draws.len() >= 2 {
            Some(pointwise_se(draws)?)
        } else {
            None
        };
        Ok(Self {
            cell: process.code.clone(),
            n: process.n,
            n_control: process.n_control,
            n_treated: process.n_treated,
            taus: process.taus.clone(),
            estimate: process.values.clone(),
            ks,
            lower,
            upper,
            se,
            iterations: draws.len(),
            alpha: config.alpha,
            seed: config.seed,
            scheme: config.scheme,
        })
    }

    /// True when the band excludes zero at some grid level.
    pub fn band_excludes_zero(&self) -> bool {
        self.lower.iter().zip(&self.upper).any(|(l, u)| *l > 0.0 || *u < 0.0)
    }
}
