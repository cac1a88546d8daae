//! Monte Carlo designs with a constant treatment effect.
//!
//! Potential outcomes follow `Y_s(d) = mu(d) + theta_s + v + eps_s` with
//! `theta_s = 1` in both periods, `mu(0) = 0` and `mu(1) = TE`. The pre-period
//! outcome is always untreated. `N` is the number of units in each arm.
//!
//! * Design 1: `v | D=d ~ N(d, 1)`, `eps` i.i.d. standard normal.
//! * Design 2: `(v, eps_post, eps_pre) | D=d ~ N(0, V_d)` with
//!   `corr(v, eps_pre) = 0`, `corr(eps_post, eps_pre) = 1/2` and
//!   `corr(v, eps_post) = d * rho_bar`; `rho_bar != 0` breaks copula
//!   invariance while keeping the distribution of the change equal across arms.
//!
//! Normals come from `rand_distr::StandardNormal` (ziggurat) on ChaCha8
//! streams, so a seed pins every draw.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CellSample, PanelDataset, PanelUnit};
use crate::error::{Error, Result};
use crate::estimators::{Estimator, TauGrid};
use crate::inference::{bootstrap_processes, pointwise_critical_values, substream, BootstrapConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dgp", rename_all = "lowercase")]
pub enum Design {
    #[serde(rename = "dgp1")]
    Dgp1,
    #[serde(rename = "dgp2")]
    Dgp2 { rho_bar: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub design: Design,
    /// Units per treatment arm.
    pub n_per_arm: usize,
    /// `mu(1) - mu(0)`.
    pub te: f64,
}

const THETA: f64 = 1.0;
const RHO_PRE: f64 = 0.0;
const RHO_PRE_POST: f64 = 0.5;

impl DgpSpec {
    pub fn dgp1(n_per_arm: usize, te: f64) -> Self {
        Self {
            design: Design::Dgp1,
            n_per_arm,
            te,
        }
    }

    pub fn dgp2(n_per_arm: usize, te: f64, rho_bar: f64) -> Self {
        Self {
            design: Design::Dgp2 { rho_bar },
            n_per_arm,
            te,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_per_arm == 0 {
            return Err(Error::Config("N per arm must be positive".into()));
        }
        if !self.te.is_finite() {
            return Err(Error::Config("treatment effect must be finite".into()));
        }
        if let Design::Dgp2 { rho_bar } = self.design {
            for d in [0, 1] {
                cholesky3(&dgp2_covariance(d, rho_bar))?;
            }
        }
        Ok(())
    }
}

/// Covariance of `(v, eps_post, eps_pre)` for arm `d` in design 2.
pub fn dgp2_covariance(d: u8, rho_bar: f64) -> [[f64; 3]; 3] {
    let rho_v_post = f64::from(d) * rho_bar;
    [
        [1.0, rho_v_post, RHO_PRE],
        [rho_v_post, 1.0, RHO_PRE_POST],
        [RHO_PRE, RHO_PRE_POST, 1.0],
    ]
}

/// `cov(Y_pre(0), dY(0) | D=d) = rho_v_post - rho_v_pre + rho_pre_post - 1`.
pub fn dgp2_pre_change_covariance(d: u8, rho_bar: f64) -> f64 {
    f64::from(d) * rho_bar - RHO_PRE + RHO_PRE_POST - 1.0
}

fn cholesky3(m: &[[f64; 3]; 3]) -> Result<[[f64; 3]; 3]> {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let diag = m[i][i] - s;
                if !(diag > 0.0) {
                    return Err(Error::Config(
                        "design 2 covariance is not positive definite".into(),
                    ));
                }
                l[i][j] = diag.sqrt();
            } else {
                l[i][j] = (m[i][j] - s) / l[j][j];
            }
        }
    }
    Ok(l)
}

/// One draw of the design as a single-cell panel sample (controls first).
pub fn simulate_cell<R: Rng + ?Sized>(spec: &DgpSpec, rng: &mut R) -> Result<CellSample> {
    spec.validate()?;
    let mut arms = [Vec::new(), Vec::new()];
    for d in 0u8..=1 {
        let mu = if d == 1 { spec.te } else { 0.0 };
        let factor = match spec.design {
            Design::Dgp1 => None,
            Design::Dgp2 { rho_bar } => Some(cholesky3(&dgp2_covariance(d, rho_bar))?),
        };
        let arm = &mut arms[usize::from(d)];
        arm.reserve(spec.n_per_arm);
        for _ in 0..spec.n_per_arm {
            let z: [f64; 3] = [
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            ];
            let (v, eps_post, eps_pre) = match &factor {
                None => (f64::from(d) + z[0], z[2], z[1]),
                Some(l) => (
                    l[0][0] * z[0],
                    l[1][0] * z[0] + l[1][1] * z[1],
                    l[2][0] * z[0] + l[2][1] * z[1] + l[2][2] * z[2],
                ),
            };
            arm.push((THETA + v + eps_pre, mu + THETA + v + eps_post));
        }
    }
    Ok(CellSample::panel(vec![], &arms[0], &arms[1]))
}

/// One draw of the design as a covariate-free panel dataset.
pub fn simulate_dgp<R: Rng + ?Sized>(spec: &DgpSpec, rng: &mut R) -> Result<PanelDataset> {
    let cell = simulate_cell(spec, rng)?;
    let arm = |pre: &[f64], post: &[f64], treated: bool, tag: &str| -> Vec<PanelUnit> {
        pre.iter()
            .zip(post)
            .enumerate()
            .map(|(i, (&a, &b))| PanelUnit::new(format!("{tag}{i}"), a, b, treated, vec![]))
            .collect()
    };
    let mut units = arm(&cell.control_pre, &cell.control_post, false, "c");
    units.extend(arm(&cell.treated_pre, &cell.treated_post, true, "t"));
    Ok(PanelDataset::new(units))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McConfig {
    pub reps: usize,
    pub taus: Vec<f64>,
    pub estimators: Vec<Estimator>,
    /// `None` skips inference (bias and RMSE only).
    pub bootstrap: Option<BootstrapConfig>,
    /// Effect under the tested null.
    pub null_effect: f64,
    pub seed: u64,
}

impl McConfig {
    pub fn new(reps: usize, seed: u64) -> Self {
        Self {
            reps,
            taus: vec![0.1, 0.5, 0.9],
            estimators: vec![Estimator::Ddid, Estimator::Cic],
            bootstrap: None,
            null_effect: 0.0,
            seed,
        }
    }

    pub fn with_bootstrap(mut self, iterations: usize, alpha: f64) -> Self {
        self.bootstrap = Some(BootstrapConfig {
            iterations,
            alpha,
            seed: self.seed,
            ..Default::default()
        });
        self
    }

    pub fn with_estimators(mut self, estimators: &[Estimator]) -> Self {
        self.estimators = estimators.to_vec();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McRow {
    pub estimator: Estimator,
    pub tau: f64,
    pub bias: f64,
    pub rmse: f64,
    /// Pointwise rejection frequency; absent without bootstrap.
    pub rejection: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McResult {
    pub spec: DgpSpec,
    pub reps: usize,
    pub seed: u64,
    pub bootstrap: Option<BootstrapConfig>,
    pub arm_split: &'static str,
    pub rows: Vec<McRow>,
}

impl McResult {
    pub fn row(&self, estimator: Estimator, tau: f64) -> Option<&McRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && (r.tau - tau).abs() < 1e-12)
    }
}

struct RepOutcome {
    /// `[estimator][tau]` estimate.
    estimates: Vec<Vec<f64>>,
    rejects: Option<Vec<Vec<bool>>>,
}

fn run_rep(spec: &DgpSpec, config: &McConfig, grid: &TauGrid, rep: usize) -> Result<RepOutcome> {
    let mut rng = substream(config.seed, 0, rep as u64);
    let sample = simulate_cell(spec, &mut rng)?;
    let n = 2 * spec.n_per_arm;
    let estimates = config
        .estimators
        .iter()
        .map(|e| e.estimate(&sample, None, grid, n).map(|p| p.values))
        .collect::<Result<Vec<_>>>()?;
    let rejects = match &config.bootstrap {
        None => None,
        Some(boot) => {
            let draws = bootstrap_processes(&sample, &config.estimators, grid, n, boot, rep as u64 + 1)?;
            let flags = estimates
                .iter()
                .zip(&draws)
                .map(|(est, d)| {
                    let crit = pointwise_critical_values(est, d, boot.alpha)?;
                    Ok(est
                        .iter()
                        .zip(crit)
                        .map(|(v, c)| (v - config.null_effect).abs() > c)
                        .collect())
                })
                .collect::<Result<Vec<Vec<bool>>>>()?;
            Some(flags)
        }
    };
    Ok(RepOutcome { estimates, rejects })
}

/// Repeats simulate-estimate-test `reps` times. Replication `r` draws its
/// data from stream 0 and its bootstrap from stream `r + 1`, so results are
/// independent of scheduling.
pub fn run_mc(spec: &DgpSpec, config: &McConfig) -> Result<McResult> {
    spec.validate()?;
    if config.reps == 0 {
        return Err(Error::Config("at least one replication is required".into()));
    }
    if config.estimators.is_empty() {
        return Err(Error::Config("no estimators selected".into()));
    }
    if let Some(b) = &config.bootstrap {
        b.validate()?;
    }
    let grid = TauGrid::new(config.taus.clone())?;
    let outcomes = (0..config.reps)
        .into_par_iter()
        .map(|rep| run_rep(spec, config, &grid, rep))
        .collect::<Result<Vec<_>>>()?;

    let reps = config.reps as f64;
    let mut rows = Vec::new();
    for (e, &estimator) in config.estimators.iter().enumerate() {
        for (k, &tau) in config.taus.iter().enumerate() {
            let errors: Vec<f64> = outcomes.iter().map(|o| o.estimates[e][k] - spec.te).collect();
            let bias = errors.iter().sum::<f64>() / reps;
            let rmse = (errors.iter().map(|x| x * x).sum::<f64>() / reps).sqrt();
            let rejection = config.bootstrap.as_ref().map(|_| {
                outcomes
                    .iter()
                    .filter(|o| o.rejects.as_ref().is_some_and(|r| r[e][k]))
                    .count() as f64
                    / reps
            });
            rows.push(McRow {
                estimator,
                tau,
                bias,
                rmse,
                rejection,
            });
        }
    }
    Ok(McResult {
        spec: *spec,
        reps: config.reps,
        seed: config.seed,
        bootstrap: config.bootstrap,
        arm_split: "equal arms, N units each",
        rows,
    })
}

fn tau_label(tau: f64) -> String {
    format!("{tau}")
}

/// Design-1 layout: one row per (TE, statistic, N), one column per
/// (estimator, tau).
pub fn table1_csv(results: &[McResult]) -> String {
    let mut out = String::new();
    let Some(first) = results.first() else {
        return out;
    };
    let columns: Vec<(Estimator, f64)> = first.rows.iter().map(|r| (r.estimator, r.tau)).collect();
    out.push_str("te,statistic,n");
    for (e, t) in &columns {
        let _ = write!(out, ",{}_{}", e.label(), tau_label(*t));
    }
    out.push('\n');
    let mut tes: Vec<f64> = results.iter().map(|r| r.spec.te).collect();
    tes.dedup();
    for te in tes {
        let group: Vec<&McResult> = results.iter().filter(|r| r.spec.te == te).collect();
        let stats: [(&str, fn(&McRow) -> Option<f64>); 2] = [
            ("bias", |r| Some(r.bias)),
            ("rej_prob", |r| r.rejection),
        ];
        for (name, pick) in stats {
            for res in &group {
                let _ = write!(out, "{te},{name},{}", res.spec.n_per_arm);
                for (e, t) in &columns {
                    let cell = res.row(*e, *t).and_then(pick);
                    match cell {
                        Some(v) => {
                            let _ = write!(out, ",{v}");
                        }
                        None => out.push(','),
                    }
                }
                out.push('\n');
            }
        }
    }
    out
}

/// Design-2 layout: one row per (statistic, rho_bar), one column per
/// (TE, tau) for the first estimator in each result.
pub fn table2_csv(results: &[McResult]) -> String {
    let mut out = String::new();
    let mut tes: Vec<f64> = results.iter().map(|r| r.spec.te).collect();
    tes.sort_by(f64::total_cmp);
    tes.dedup();
    let mut rhos: Vec<f64> = results
        .iter()
        .filter_map(|r| match r.spec.design {
            Design::Dgp2 { rho_bar } => Some(rho_bar),
            Design::Dgp1 => None,
        })
        .collect();
    rhos.sort_by(f64::total_cmp);
    rhos.dedup();
    let Some(first) = results.first() else {
        return out;
    };
    let estimator = first.rows[0].estimator;
    let taus: Vec<f64> = first
        .rows
        .iter()
        .filter(|r| r.estimator == estimator)
        .map(|r| r.tau)
        .collect();
    out.push_str("statistic,rho_bar");
    for te in &tes {
        for t in &taus {
            let _ = write!(out, ",TE={te}_{}", tau_label(*t));
        }
    }
    out.push('\n');
    let stats: [(&str, fn(&McRow) -> f64); 2] = [("bias", |r| r.bias), ("rmse", |r| r.rmse)];
    for (name, pick) in stats {
        for rho in &rhos {
            let _ = write!(out, "{name},{rho}");
            for te in &tes {
                let res = results.iter().find(|r| {
                    r.spec.te == *te && matches!(r.spec.design, Design::Dgp2 { rho_bar } if rho_bar == *rho)
                });
                for t in &taus {
                    match res.and_then(|r| r.row(estimator, *t)) {
                        Some(row) => {
                            let _ = write!(out, ",{}", pick(row));
                        }
                        None => out.push(','),
                    }
                }
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn dgp1_moments() {
        let spec = DgpSpec::dgp1(50_000, 0.0);
        let s = simulate_cell(&spec, &mut substream(3, 0, 0)).unwrap();
        let change: Vec<f64> = s.control_post.iter().zip(&s.control_pre).map(|(b, a)| b - a).collect();
        let (m, _) = mean_var(&change);
        assert!(m.abs() < 0.02, "control mean change {m}");
        let (m0, v0) = mean_var(&s.control_pre);
        let (m1, v1) = mean_var(&s.treated_pre);
        assert!((m0 - 1.0).abs() < 0.03 && (m1 - 2.0).abs() < 0.03);
        assert!((v0 - 2.0).abs() < 0.06 && (v1 - 2.0).abs() < 0.06);
    }

    #[test]
    fn te_shifts_treated_post_only() {
        let a = simulate_cell(&DgpSpec::dgp1(20, 0.0), &mut substream(1, 0, 0)).unwrap();
        let b = simulate_cell(&DgpSpec::dgp1(20, 1.0), &mut substream(1, 0, 0)).unwrap();
        assert_eq!(a.control_pre, b.control_pre);
        assert_eq!(a.control_post, b.control_post);
        assert_eq!(a.treated_pre, b.treated_pre);
        for (x, y) in a.treated_post.iter().zip(&b.treated_post) {
            assert!((y - x - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dgp2_arms_identical_at_zero_rho() {
        assert_eq!(dgp2_covariance(0, 0.0), dgp2_covariance(1, 0.0));
    }

    #[test]
    fn dgp2_rejects_non_pd() {
        assert!(DgpSpec::dgp2(10, 0.0, 0.5).validate().is_ok());
        assert!(matches!(DgpSpec::dgp2(10, 0.0, 0.9).validate(), Err(Error::Config(_))));
    }

    #[test]
    fn cholesky_reconstructs() {
        let m = dgp2_covariance(1, 0.1);
        let l = cholesky3(&m).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| l[i][k] * l[j][k]).sum();
                assert!((v - m[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn single_rep_reports_single_error() {
        let spec = DgpSpec::dgp1(30, 0.0);
        let config = McConfig::new(1, 5).with_bootstrap(20, 0.05);
        let res = run_mc(&spec, &config).unwrap();
        let grid = TauGrid::new(config.taus.clone()).unwrap();
        let s = simulate_cell(&spec, &mut substream(5, 0, 0)).unwrap();
        let est = Estimator::Ddid.estimate(&s, None, &grid, 60).unwrap();
        for (k, tau) in config.taus.iter().enumerate() {
            let row = res.row(Estimator::Ddid, *tau).unwrap();
            assert_eq!(row.bias, est.values[k]);
            assert_eq!(row.rmse, est.values[k].abs());
            let r = row.rejection.unwrap();
            assert!(r == 0.0 || r == 1.0);
        }
    }

    #[test]
    fn mc_is_reproducible_and_rmse_dominates_bias() {
        let spec = DgpSpec::dgp2(40, 1.0, 0.1);
        let config = McConfig::new(12, 77).with_bootstrap(15, 0.05);
        let a = run_mc(&spec, &config).unwrap();
        let b = run_mc(&spec, &config).unwrap();
        assert_eq!(a, b);
        for row in &a.rows {
            assert!(row.rmse >= row.bias.abs());
            let r = row.rejection.unwrap();
            assert!((0.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn tables_have_expected_shape() {
        let config = McConfig::new(2, 1);
        let t1: Vec<McResult> = [100, 200]
            .iter()
            .map(|&n| run_mc(&DgpSpec::dgp1(n, 0.0), &config).unwrap())
            .collect();
        let csv = table1_csv(&t1);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "te,statistic,n,DDID_0.1,DDID_0.5,DDID_0.9,CIC_0.1,CIC_0.5,CIC_0.9");
        assert_eq!(lines.len(), 1 + 4);
        assert!(lines[1].starts_with("0,bias,100,"));
        assert!(lines[3].starts_with("0,rej_prob,100,,"));

        let ddid = McConfig::new(2, 1).with_estimators(&[Estimator::Ddid]);
        let t2: Vec<McResult> = [0.0, 0.5]
            .iter()
            .flat_map(|&rho| [0.0, 1.0].map(|te| run_mc(&DgpSpec::dgp2(50, te, rho), &ddid).unwrap()))
            .collect();
        let csv = table2_csv(&t2);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "statistic,rho_bar,TE=0_0.1,TE=0_0.5,TE=0_0.9,TE=1_0.1,TE=1_0.5,TE=1_0.9");
        assert_eq!(lines.len(), 1 + 4);
        assert!(lines[3].starts_with("rmse,0,"));
    }
}
