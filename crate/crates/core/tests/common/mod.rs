//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use qdid::CellSample;
use rand::seq::SliceRandom;
use rand::Rng;

/// Brute-force panel counterfactual on integer data, with explicit ECDF
/// lookup tables and exact rational comparisons. Control units are
/// `(pre, change)` pairs. Returns transformed value -> multiplicity.
pub fn brute_force_panel(control: &[(i64, i64)], treated_pre: &[i64]) -> BTreeMap<i64, u64> {
    let n0 = control.len() as i64;
    let n1 = treated_pre.len() as i64;
    // F_{pre|0}(y) numerators for every control pre value
    let control_table: BTreeMap<i64, i64> = control
        .iter()
        .map(|&(y, _)| (y, control.iter().filter(|(p, _)| *p <= y).count() as i64))
        .collect();
    // F_{pre|1}(b) numerators for every treated pre value
    let treated_table: Vec<(i64, i64)> = treated_pre
        .iter()
        .map(|&b| (b, treated_pre.iter().filter(|&&c| c <= b).count() as i64))
        .collect();
    let mut out = BTreeMap::new();
    for &(pre, change) in control {
        let k = control_table[&pre];
        // inf { b : F1(b) >= k / n0 }  <=>  count1(b) * n0 >= k * n1
        let q = treated_table
            .iter()
            .filter(|(_, c)| c * n0 >= k * n1)
            .map(|(b, _)| *b)
            .min()
            .expect("F1 reaches one");
        *out.entry(change + q).or_insert(0) += 1;
    }
    out
}

/// Random tiny integer panel: 2-6 units per arm.
pub fn tiny_integer_panel<R: Rng>(rng: &mut R) -> (Vec<(i64, i64)>, Vec<(i64, i64)>) {
    let n0 = rng.random_range(2..=6);
    let n1 = rng.random_range(2..=6);
    let control = (0..n0)
        .map(|_| (rng.random_range(-5..=5), rng.random_range(-3..=3)))
        .collect();
    let treated = (0..n1)
        .map(|_| (rng.random_range(-5..=5), rng.random_range(-8..=8)))
        .collect();
    (control, treated)
}

pub fn as_sample(control: &[(i64, i64)], treated: &[(i64, i64)]) -> CellSample {
    let c: Vec<(f64, f64)> = control
        .iter()
        .map(|&(pre, d)| (pre as f64, (pre + d) as f64))
        .collect();
    let t: Vec<(f64, f64)> = treated.iter().map(|&(a, b)| (a as f64, b as f64)).collect();
    CellSample::panel(vec![], &c, &t)
}

/// Panel whose control units keep their rank from pre to post (distinct
/// values, post a strictly increasing function of pre), together with the
/// same data as unlinked cross sections (control post sample shuffled).
pub fn rank_invariant_pair<R: Rng>(rng: &mut R) -> (CellSample, CellSample) {
    let n0 = rng.random_range(2..=40);
    let n1 = rng.random_range(2..=40);
    let mut pre: Vec<f64> = Vec::new();
    while pre.len() < n0 {
        let v = rng.random::<f64>() * 20.0 - 10.0;
        if !pre.contains(&v) {
            pre.push(v);
        }
    }
    let mut order: Vec<usize> = (0..n0).collect();
    order.sort_by(|&a, &b| pre[a].total_cmp(&pre[b]));
    // increasing post levels assigned in pre-rank order
    let mut post_levels: Vec<f64> = Vec::new();
    let mut level = rng.random::<f64>() * 5.0 - 2.0;
    for _ in 0..n0 {
        level += 0.01 + rng.random::<f64>() * 2.0;
        post_levels.push(level);
    }
    let mut post = vec![0.0; n0];
    for (rank, &i) in order.iter().enumerate() {
        post[i] = post_levels[rank];
    }
    let treated_pre: Vec<f64> = (0..n1).map(|_| rng.random::<f64>() * 12.0 - 4.0).collect();
    let treated_post: Vec<f64> = (0..n1).map(|_| rng.random::<f64>() * 12.0 - 1.0).collect();

    let control: Vec<(f64, f64)> = pre.iter().copied().zip(post.iter().copied()).collect();
    let treated: Vec<(f64, f64)> = treated_pre
        .iter()
        .copied()
        .zip(treated_post.iter().copied())
        .collect();
    let panel = CellSample::panel(vec![], &control, &treated);

    let mut shuffled = post.clone();
    shuffled.shuffle(rng);
    let rcs = CellSample::rcs(vec![], pre, shuffled, treated_pre, treated_post);
    (panel, rcs)
}
