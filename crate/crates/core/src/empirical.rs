//! Weighted empirical distribution functions.
//!
//! A [`StepDistribution`] is the right-continuous step CDF of a finite,
//! optionally weighted sample. Quantiles use the left-continuous generalized
//! inverse `inf { y : F(y) >= tau }` with no interpolation, so `quantile` and
//! `cdf` form an exact Galois pair on the stored cumulative array.

use crate::error::{Error, Result};

/// Step CDF with tie-merged, strictly increasing support.
///
/// Points with zero weight are dropped at fit time: a weighted fit with
/// integer weights `k_i` is then identical to an unweighted fit on the
/// multiset where each value appears `k_i` times.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistribution {
    support: Vec<f64>,
    mass: Vec<f64>,
    cumulative: Vec<f64>,
    total: f64,
    count: usize,
}

impl StepDistribution {
    /// Unit-weight empirical CDF.
    pub fn fit(values: &[f64]) -> Result<Self> {
        check_values(values)?;
        let mut sorted = values.to_vec();
        sorted.sort_unstable_by(f64::total_cmp);
        let pairs = sorted.into_iter().map(|v| (v, 1.0));
        Ok(Self::from_sorted_pairs(pairs, values.len()))
    }

    /// Empirical CDF with per-point non-negative weights.
    pub fn fit_weighted(values: &[f64], weights: &[f64]) -> Result<Self> {
        check_values(values)?;
        if weights.len() != values.len() {
            return Err(Error::LengthMismatch {
                what: "weights",
                expected: values.len(),
                found: weights.len(),
            });
        }
        for (index, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidWeight { index, value: w });
            }
        }
        let mut pairs: Vec<(f64, f64)> = values
            .iter()
            .zip(weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&v, &w)| (v, w))
            .collect();
        if pairs.is_empty() {
            return Err(Error::ZeroTotalWeight);
        }
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self::from_sorted_pairs(pairs.into_iter(), values.len()))
    }

    /// Fit with weights when given, unit weights otherwise.
    pub fn fit_maybe_weighted(values: &[f64], weights: Option<&[f64]>) -> Result<Self> {
        match weights {
            Some(w) => Self::fit_weighted(values, w),
            None => Self::fit(values),
        }
    }

    /// Finite mixture `sum_k share_k * F_k`. Shares must be non-negative with a
    /// positive sum; they are normalized.
    pub fn mixture(components: &[(&StepDistribution, f64)]) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptySample);
        }
        let mut values = Vec::new();
        let mut weights = Vec::new();
        for (dist, share) in components {
            for (&y, p) in dist.support.iter().zip(dist.probabilities()) {
                values.push(y);
                weights.push(share * p);
            }
        }
        Self::fit_weighted(&values, &weights)
    }

    fn from_sorted_pairs(pairs: impl Iterator<Item = (f64, f64)>, count: usize) -> Self {
        let mut support: Vec<f64> = Vec::new();
        let mut mass: Vec<f64> = Vec::new();
        for (v, w) in pairs {
            match support.last() {
                Some(&last) if last == v => *mass.last_mut().unwrap() += w,
                _ => {
                    support.push(v);
                    mass.push(w);
                }
            }
        }
        let mut running = Vec::with_capacity(mass.len());
        let mut acc = 0.0;
        for &m in &mass {
            acc += m;
            running.push(acc);
        }
        let total = acc;
        // Dividing each running sum (rather than summing normalized masses)
        // keeps equal rationals bit-identical across distributions.
        let mut cumulative: Vec<f64> = running.iter().map(|&r| r / total).collect();
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Self {
            support,
            mass,
            cumulative,
            total,
            count,
        }
    }

    /// `F(y) = sum_i w_i 1{Y_i <= y} / sum_i w_i`.
    pub fn cdf(&self, y: f64) -> f64 {
        let k = self.support.partition_point(|&s| s <= y);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    /// Generalized inverse `inf { y : F(y) >= tau }` for `tau` in (0, 1].
    pub fn quantile(&self, tau: f64) -> Result<f64> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::InvalidProbability(tau));
        }
        Ok(self.quantile_unchecked(tau))
    }

    pub(crate) fn quantile_unchecked(&self, tau: f64) -> f64 {
        let k = self.cumulative.partition_point(|&c| c < tau);
        self.support[k.min(self.support.len() - 1)]
    }

    /// Quantiles at every grid point against this one fitted CDF.
    pub fn quantiles(&self, taus: &[f64]) -> Result<Vec<f64>> {
        taus.iter().map(|&t| self.quantile(t)).collect()
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    /// Unnormalized mass at each support point.
    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn probabilities(&self) -> impl Iterator<Item = f64> + '_ {
        self.mass.iter().map(move |m| m / self.total)
    }

    pub fn total_weight(&self) -> f64 {
        self.total
    }

    /// Number of input values, including zero-weight ones.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn min(&self) -> f64 {
        self.support[0]
    }

    pub fn max(&self) -> f64 {
        *self.support.last().unwrap()
    }
}

fn check_values(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue { index });
    }
    Ok(())
}

/// Maps `y` to the point of `target` with the same rank it has in `source`:
/// `quantile(target, cdf(source, y))`. Values strictly below the source
/// support have rank zero and map to the minimum of the target support.
pub fn rank_transform(source: &StepDistribution, target: &StepDistribution, y: f64) -> f64 {
    let rank = source.cdf(y);
    if rank <= 0.0 {
        target.min()
    } else {
        target.quantile_unchecked(rank)
    }
}
