//! Counterfactual distributions and quantile treatment effects.
//!
//! The untreated counterfactual for the treated arm is built from control
//! units: each control unit's pre-period outcome is moved to the treated
//! pre-period distribution at the same rank, and its own period-to-period
//! change is added on top. In cross-section mode the control change is
//! recovered by rank matching between the two control samples.

use serde::{Deserialize, Serialize};

use crate::data::{CellSample, CovariateCode};
use crate::empirical::{rank_transform, StepDistribution};
use crate::error::{Error, Result};

/// Sorted quantile levels strictly inside (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TauGrid(Vec<f64>);

impl TauGrid {
    pub fn new(taus: Vec<f64>) -> Result<Self> {
        if taus.is_empty() {
            return Err(Error::InvalidGrid("grid is empty".into()));
        }
        if let Some(t) = taus.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(Error::InvalidGrid(format!("{t} is outside (0, 1)")));
        }
        if taus.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid("levels must be strictly increasing".into()));
        }
        Ok(Self(taus))
    }

    /// `start, start + step, ...` up to and including `end`. Levels are
    /// rounded to 12 decimals so that `0.05..0.95 by 0.01` hits 0.95 exactly.
    pub fn range(start: f64, end: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(end >= start) {
            return Err(Error::InvalidGrid(format!(
                "bad range {start}..{end} by {step}"
            )));
        }
        let count = ((end - start) / step + 1e-9).floor() as usize + 1;
        let taus = (0..count)
            .map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12)
            .collect();
        Self::new(taus)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for TauGrid {
    fn default() -> Self {
        Self::range(0.05, 0.95, 0.01).expect("default grid is valid")
    }
}

impl TryFrom<Vec<f64>> for TauGrid {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<TauGrid> for Vec<f64> {
    fn from(g: TauGrid) -> Self {
        g.0
    }
}

/// Per-observation weights for each of the four samples of a cell. In panel
/// mode the pre and post vectors of an arm carry the same unit weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWeights {
    pub control_pre: Vec<f64>,
    pub control_post: Vec<f64>,
    pub treated_pre: Vec<f64>,
    pub treated_post: Vec<f64>,
}

/// Observed and counterfactual outcome distributions of the treated arm in
/// one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualResult {
    pub code: CovariateCode,
    /// Observed post-period outcomes of the treated arm.
    pub treated: StepDistribution,
    /// Untreated counterfactual for the treated arm.
    pub counterfactual: StepDistribution,
    /// One transformed outcome per control (pre-period) observation.
    pub transformed: Vec<f64>,
    pub n_control: usize,
    pub n_treated: usize,
}

/// Quantile treatment effects on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CqttProcess {
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
    /// Covariate code; `None` for the pooled (unconditional) effect.
    pub code: Option<CovariateCode>,
    pub n_control: usize,
    pub n_treated: usize,
    /// Sample size used for root-n scaling.
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Distributional difference-in-differences (copula invariance).
    Ddid,
    /// Changes-in-changes benchmark.
    Cic,
}

impl Estimator {
    pub fn label(self) -> &'static str {
        match self {
            Estimator::Ddid => "DDID",
            Estimator::Cic => "CIC",
        }
    }

    /// Point estimate of the effect process for one cell.
    pub fn estimate(
        self,
        sample: &CellSample,
        weights: Option<&SampleWeights>,
        grid: &TauGrid,
        n: usize,
    ) -> Result<CqttProcess> {
        match self {
            Estimator::Ddid => {
                let result = counterfactual_cdf(sample, weights)?;
                Ok(cqtt(&result, grid, n))
            }
            Estimator::Cic => cic_qtt(sample, weights, grid, n),
        }
    }
}

fn weight_slice(weights: Option<&SampleWeights>, pick: fn(&SampleWeights) -> &Vec<f64>) -> Option<&[f64]> {
    weights.map(|w| pick(w).as_slice())
}

fn require_nonempty(sample: &CellSample) -> Result<()> {
    sample.check_size(1)
}

/// Dispatches on the sample's mode.
pub fn counterfactual_cdf(
    sample: &CellSample,
    weights: Option<&SampleWeights>,
) -> Result<CounterfactualResult> {
    match sample.mode {
        crate::data::Mode::Panel => counterfactual_cdf_panel(sample, weights),
        crate::data::Mode::Rcs => counterfactual_cdf_rcs(sample, weights),
    }
}

/// Panel construction: `Y~_i = dY_i + Q_{pre|1}(F_{pre|0}(Y_{i,pre}))` for every
/// control unit, then the (weighted) empirical CDF of the `Y~_i`.
///
/// Control weights enter both the control pre-period CDF and the outer fit;
/// treated weights enter the treated pre-period CDF and the observed CDF.
pub fn counterfactual_cdf_panel(
    sample: &CellSample,
    weights: Option<&SampleWeights>,
) -> Result<CounterfactualResult> {
    require_nonempty(sample)?;
    if sample.control_pre.len() != sample.control_post.len() {
        return Err(Error::LengthMismatch {
            what: "control post outcomes",
            expected: sample.control_pre.len(),
            found: sample.control_post.len(),
        });
    }
    if sample.treated_pre.len() != sample.treated_post.len() {
        return Err(Error::LengthMismatch {
            what: "treated post outcomes",
            expected: sample.treated_pre.len(),
            found: sample.treated_post.len(),
        });
    }
    let control_w = weight_slice(weights, |w| &w.control_pre);
    let pre_control = StepDistribution::fit_maybe_weighted(&sample.control_pre, control_w)?;
    let pre_treated = StepDistribution::fit_maybe_weighted(
        &sample.treated_pre,
        weight_slice(weights, |w| &w.treated_pre),
    )?;
    let transformed: Vec<f64> = sample
        .control_pre
        .iter()
        .zip(&sample.control_post)
        .map(|(&pre, &post)| (post - pre) + rank_transform(&pre_control, &pre_treated, pre))
        .collect();
    let counterfactual = StepDistribution::fit_maybe_weighted(&transformed, control_w)?;
    let treated = StepDistribution::fit_maybe_weighted(
        &sample.treated_post,
        weight_slice(weights, |w| &w.treated_post),
    )?;
    Ok(CounterfactualResult {
        code: sample.code.clone(),
        treated,
        counterfactual,
        transformed,
        n_control: sample.n_control(),
        n_treated: sample.n_treated(),
    })
}

/// Cross-section construction. The control change for a pre-period control
/// observation is recovered by rank matching into the control post sample:
/// `dY~_i = Q_{post|0}(F_{pre|0}(Y_i)) - Y_i`.
pub fn counterfactual_cdf_rcs(
    sample: &CellSample,
    weights: Option<&SampleWeights>,
) -> Result<CounterfactualResult> {
    require_nonempty(sample)?;
    let control_pre_w = weight_slice(weights, |w| &w.control_pre);
    let pre_control = StepDistribution::fit_maybe_weighted(&sample.control_pre, control_pre_w)?;
    let post_control = StepDistribution::fit_maybe_weighted(
        &sample.control_post,
        weight_slice(weights, |w| &w.control_post),
    )?;
    let pre_treated = StepDistribution::fit_maybe_weighted(
        &sample.treated_pre,
        weight_slice(weights, |w| &w.treated_pre),
    )?;
    let transformed: Vec<f64> = sample
        .control_pre
        .iter()
        .map(|&pre| {
            let change = rank_transform(&pre_control, &post_control, pre) - pre;
            change + rank_transform(&pre_control, &pre_treated, pre)
        })
        .collect();
    let counterfactual = StepDistribution::fit_maybe_weighted(&transformed, control_pre_w)?;
    let treated = StepDistribution::fit_maybe_weighted(
        &sample.treated_post,
        weight_slice(weights, |w| &w.treated_post),
    )?;
    Ok(CounterfactualResult {
        code: sample.code.clone(),
        treated,
        counterfactual,
        transformed,
        n_control: sample.n_control(),
        n_treated: sample.n_treated(),
    })
}

/// Quantile difference between observed and counterfactual treated outcomes.
pub fn cqtt(result: &CounterfactualResult, grid: &TauGrid, n: usize) -> CqttProcess {
    let values = grid
        .as_slice()
        .iter()
        .map(|&t| result.treated.quantile_unchecked(t) - result.counterfactual.quantile_unchecked(t))
        .collect();
    CqttProcess {
        taus: grid.as_slice().to_vec(),
        values,
        code: Some(result.code.clone()),
        n_control: result.n_control,
        n_treated: result.n_treated,
        n,
    }
}

/// Treated-arm shares `n_x1 / sum_x n_x1`.
pub fn treated_shares(results: &[CounterfactualResult]) -> Vec<f64> {
    let total: usize = results.iter().map(|r| r.n_treated).sum();
    results
        .iter()
        .map(|r| r.n_treated as f64 / total as f64)
        .collect()
}

/// Effect on the whole treated population: both distributions are mixed over
/// cells with the treated covariate shares before inverting.
pub fn unconditional_qtt(
    results: &[CounterfactualResult],
    shares: &[f64],
    grid: &TauGrid,
    n: usize,
) -> Result<CqttProcess> {
    if results.is_empty() {
        return Err(Error::NoCells);
    }
    if shares.len() != results.len() {
        return Err(Error::LengthMismatch {
            what: "cell shares",
            expected: results.len(),
            found: shares.len(),
        });
    }
    if shares.iter().any(|s| !(s.is_finite() && *s >= 0.0))
        || (shares.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::Config("cell shares must be non-negative and sum to 1".into()));
    }
    let mix = |pick: fn(&CounterfactualResult) -> &StepDistribution| {
        let parts: Vec<_> = results.iter().zip(shares).map(|(r, &s)| (pick(r), s)).collect();
        StepDistribution::mixture(&parts)
    };
    let treated = mix(|r| &r.treated)?;
    let counterfactual = mix(|r| &r.counterfactual)?;
    let values = grid
        .as_slice()
        .iter()
        .map(|&t| treated.quantile_unchecked(t) - counterfactual.quantile_unchecked(t))
        .collect();
    Ok(CqttProcess {
        taus: grid.as_slice().to_vec(),
        values,
        code: None,
        n_control: results.iter().map(|r| r.n_control).sum(),
        n_treated: results.iter().map(|r| r.n_treated).sum(),
        n,
    })
}

/// Changes-in-changes: the treated pre-period quantile is pushed through the
/// control group's pre-to-post rank map.
pub fn cic_qtt(
    sample: &CellSample,
    weights: Option<&SampleWeights>,
    grid: &TauGrid,
    n: usize,
) -> Result<CqttProcess> {
    require_nonempty(sample)?;
    let fit = |values: &[f64], pick: fn(&SampleWeights) -> &Vec<f64>| {
        StepDistribution::fit_maybe_weighted(values, weight_slice(weights, pick))
    };
    let pre_control = fit(&sample.control_pre, |w| &w.control_pre)?;
    let post_control = fit(&sample.control_post, |w| &w.control_post)?;
    let pre_treated = fit(&sample.treated_pre, |w| &w.treated_pre)?;
    let post_treated = fit(&sample.treated_post, |w| &w.treated_post)?;
    let values = grid
        .as_slice()
        .iter()
        .map(|&t| {
            let start = pre_treated.quantile_unchecked(t);
            post_treated.quantile_unchecked(t) - rank_transform(&pre_control, &post_control, start)
        })
        .collect();
    Ok(CqttProcess {
        taus: grid.as_slice().to_vec(),
        values,
        code: Some(sample.code.clone()),
        n_control: sample.n_control(),
        n_treated: sample.n_treated(),
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Mode;
    use proptest::prelude::*;

    fn grid(taus: &[f64]) -> TauGrid {
        TauGrid::new(taus.to_vec()).unwrap()
    }

    fn panel_from_deltas(control: &[(f64, f64)], treated_pre: &[f64], treated_post: &[f64]) -> CellSample {
        let control: Vec<_> = control.iter().map(|&(pre, d)| (pre, pre + d)).collect();
        let treated: Vec<_> = treated_pre
            .iter()
            .zip(treated_post)
            .map(|(&a, &b)| (a, b))
            .collect();
        CellSample::panel(vec![], &control, &treated)
    }

    #[test]
    fn default_grid_is_91_levels() {
        let g = TauGrid::default();
        assert_eq!(g.len(), 91);
        assert_eq!(g.as_slice()[0], 0.05);
        assert_eq!(g.as_slice()[45], 0.5);
        assert_eq!(*g.as_slice().last().unwrap(), 0.95);
    }

    #[test]
    fn grid_rejects_bad_levels() {
        assert!(TauGrid::new(vec![0.0, 0.5]).is_err());
        assert!(TauGrid::new(vec![0.5, 1.0]).is_err());
        assert!(TauGrid::new(vec![0.5, 0.4]).is_err());
        assert!(TauGrid::new(vec![]).is_err());
    }

    #[test]
    fn panel_hand_example() {
        let s = panel_from_deltas(&[(1.0, 1.0), (2.0, 2.0)], &[1.0, 3.0], &[4.0, 6.0]);
        let r = counterfactual_cdf_panel(&s, None).unwrap();
        assert_eq!(r.transformed, vec![2.0, 5.0]);
        assert_eq!(r.counterfactual.support(), &[2.0, 5.0]);
        assert_eq!(r.counterfactual.masses(), &[1.0, 1.0]);
        assert_eq!(r.counterfactual.quantile(0.5).unwrap(), 2.0);
        let p = cqtt(&r, &grid(&[0.5]), 4);
        assert_eq!(p.values, vec![2.0]);
    }

    #[test]
    fn identical_pre_samples_and_no_change_give_control_ecdf() {
        let pre = [0.3, 1.7, -2.0, 4.4];
        let control: Vec<_> = pre.iter().map(|&p| (p, 0.0)).collect();
        let s = panel_from_deltas(&control, &pre, &pre);
        let r = counterfactual_cdf_panel(&s, None).unwrap();
        assert_eq!(r.counterfactual, StepDistribution::fit(&pre).unwrap());
    }

    #[test]
    fn single_control_unit_is_point_mass() {
        let s = panel_from_deltas(&[(0.0, 2.5)], &[7.0], &[9.0]);
        let r = counterfactual_cdf_panel(&s, None).unwrap();
        assert_eq!(r.counterfactual.support(), &[9.5]);
    }

    #[test]
    fn rcs_hand_example() {
        // control pre {1,2} -> control post {3,6}: changes 2 and 4
        let s = CellSample::rcs(vec![], vec![1.0, 2.0], vec![3.0, 6.0], vec![1.0, 2.0], vec![0.0, 0.0]);
        let r = counterfactual_cdf_rcs(&s, None).unwrap();
        assert_eq!(r.transformed, vec![1.0 + 2.0, 2.0 + 4.0]);
    }

    #[test]
    fn rcs_without_time_change_matches_panel_with_zero_change() {
        let pre = vec![0.5, 2.0, 1.25];
        let treated_pre = vec![4.0, 1.0, 2.0, 3.0];
        let s = CellSample::rcs(vec![], pre.clone(), pre.clone(), treated_pre.clone(), vec![1.0; 4]);
        let r = counterfactual_cdf_rcs(&s, None).unwrap();
        let control: Vec<_> = pre.iter().map(|&p| (p, 0.0)).collect();
        let p = counterfactual_cdf_panel(&panel_from_deltas(&control, &treated_pre, &[1.0; 4]), None).unwrap();
        assert_eq!(r.transformed, p.transformed);
    }

    #[test]
    fn rcs_shifted_control_with_equal_pre_samples() {
        let pre = vec![0.0, 1.0, 3.0, 7.0];
        let post: Vec<f64> = pre.iter().map(|p| p + 2.0).collect();
        let s = CellSample::rcs(vec![], pre.clone(), post.clone(), pre.clone(), vec![0.0]);
        let r = counterfactual_cdf_rcs(&s, None).unwrap();
        assert_eq!(r.counterfactual, StepDistribution::fit(&post).unwrap());
    }

    #[test]
    fn cqtt_zero_and_shift() {
        let s = panel_from_deltas(&[(0.0, 1.0), (1.0, 1.0), (2.0, 1.0)], &[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0]);
        let g = grid(&[0.2, 0.5, 0.9]);
        let r = counterfactual_cdf_panel(&s, None).unwrap();
        assert_eq!(cqtt(&r, &g, 6).values, vec![0.0; 3]);
        let shifted = panel_from_deltas(&[(0.0, 1.0), (1.0, 1.0), (2.0, 1.0)], &[0.0, 1.0, 2.0], &[2.0, 3.0, 4.0]);
        let r = counterfactual_cdf_panel(&shifted, None).unwrap();
        assert_eq!(cqtt(&r, &g, 6).values, vec![1.0; 3]);
    }

    #[test]
    fn unconditional_single_and_identical_cells() {
        let s = panel_from_deltas(&[(0.0, 1.0), (3.0, -1.0)], &[1.0, 2.0], &[5.0, 0.0]);
        let r = counterfactual_cdf_panel(&s, None).unwrap();
        let g = grid(&[0.1, 0.5, 0.75]);
        let single = unconditional_qtt(std::slice::from_ref(&r), &[1.0], &g, 4).unwrap();
        assert_eq!(single.values, cqtt(&r, &g, 4).values);
        let double = unconditional_qtt(&[r.clone(), r.clone()], &[0.5, 0.5], &g, 8).unwrap();
        assert_eq!(double.values, cqtt(&r, &g, 4).values);
        assert_eq!(double.code, None);
    }

    #[test]
    fn unconditional_point_mass_mixture() {
        let cell = |cf: f64, tr: f64| CounterfactualResult {
            code: vec![],
            treated: StepDistribution::fit(&[tr]).unwrap(),
            counterfactual: StepDistribution::fit(&[cf]).unwrap(),
            transformed: vec![cf],
            n_control: 1,
            n_treated: 1,
        };
        let g = grid(&[0.1, 0.5, 0.6, 0.9]);
        let q = unconditional_qtt(&[cell(0.0, 1.0), cell(2.0, 3.0)], &[0.5, 0.5], &g, 4).unwrap();
        assert_eq!(q.values, vec![1.0; 4]);
        assert!(matches!(unconditional_qtt(&[], &[], &g, 0), Err(Error::NoCells)));
    }

    #[test]
    fn cic_cases() {
        let g = grid(&[0.1, 0.3, 0.5, 0.7, 0.9]);
        let a = vec![0.0, 1.5, 2.0, 4.0, 7.0];
        let same = CellSample::rcs(vec![], a.clone(), a.clone(), a.clone(), a.clone());
        assert_eq!(cic_qtt(&same, None, &g, 20).unwrap().values, vec![0.0; 5]);

        let shift = |v: &[f64], c: f64| v.iter().map(|x| x + c).collect::<Vec<_>>();
        // treated pre support inside the control support
        let b = vec![1.5, 2.0, 4.0, 7.0];
        let shifted = CellSample::rcs(vec![], a.clone(), shift(&a, 3.0), b.clone(), shift(&b, 3.0));
        assert_eq!(cic_qtt(&shifted, None, &g, 18).unwrap().values, vec![0.0; 5]);

        let unchanged = CellSample::rcs(vec![], a.clone(), a.clone(), b.clone(), shift(&b, 1.0));
        assert_eq!(cic_qtt(&unchanged, None, &g, 22).unwrap().values, vec![1.0; 5]);
    }

    #[test]
    fn empty_arm_is_an_error() {
        let s = CellSample::panel(vec![0], &[], &[(1.0, 2.0)]);
        assert!(matches!(counterfactual_cdf_panel(&s, None), Err(Error::UndersizedCell { .. })));
    }

    fn sample_strategy() -> impl Strategy<Value = CellSample> {
        let pair = (-50i32..50, -10i32..10).prop_map(|(a, d)| (a as f64 * 0.25, (a + d) as f64 * 0.25));
        (
            prop::collection::vec(pair.clone(), 1..25),
            prop::collection::vec(pair, 1..25),
        )
            .prop_map(|(c, t)| CellSample::panel(vec![], &c, &t))
    }

    proptest! {
        #[test]
        fn location_equivariance(s in sample_strategy(), c in -5i32..5) {
            let c = c as f64;
            let g = TauGrid::range(0.05, 0.95, 0.05).unwrap();
            let base = Estimator::Ddid.estimate(&s, None, &g, 1).unwrap();
            let mut moved = s.clone();
            moved.treated_post.iter_mut().for_each(|y| *y += c);
            let shifted = Estimator::Ddid.estimate(&moved, None, &g, 1).unwrap();
            for (a, b) in base.values.iter().zip(&shifted.values) {
                prop_assert!((b - a - c).abs() < 1e-9);
            }
        }

        #[test]
        fn control_shift_passes_through(s in sample_strategy(), c in -5i32..5) {
            let c = c as f64;
            let g = TauGrid::range(0.05, 0.95, 0.05).unwrap();
            let base = counterfactual_cdf_panel(&s, None).unwrap();
            let mut moved = s.clone();
            moved.control_post.iter_mut().for_each(|y| *y += c);
            let shifted = counterfactual_cdf_panel(&moved, None).unwrap();
            for (a, b) in base.counterfactual.support().iter().zip(shifted.counterfactual.support()) {
                prop_assert!((b - a - c).abs() < 1e-9);
            }
            let da = cqtt(&base, &g, 1);
            let db = cqtt(&shifted, &g, 1);
            for (a, b) in da.values.iter().zip(&db.values) {
                prop_assert!((a - b - c).abs() < 1e-9);
            }
        }

        #[test]
        fn counterfactual_is_proper(s in sample_strategy()) {
            let r = counterfactual_cdf_panel(&s, None).unwrap();
            let cf = &r.counterfactual;
            prop_assert!(cf.support().windows(2).all(|w| w[0] < w[1]));
            prop_assert!(cf.cumulative().windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(*cf.cumulative().last().unwrap(), 1.0);
            prop_assert_eq!(r.transformed.len(), s.control_pre.len());
            prop_assert_eq!(s.mode, Mode::Panel);
        }
    }
}
