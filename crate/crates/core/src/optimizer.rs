//! Parameter selection.
//!
//! Real-valued closed forms give the optimal splits and loads under the
//! balanced-split relaxation. [`integer_search`] enumerates integer
//! partitions and recovery profiles and scores them by exact expected load.

use serde::{Deserialize, Serialize};

use crate::construct::RecoveryProfile;
use crate::cost::{expected_load, CommModel, LoadProfile, ProblemDims, StragglerDist};
use crate::epcode::PartitionParams;
use crate::error::{Error, Result};

/// Slack allowed when comparing a storage value against the budget.
pub const STORAGE_TOLERANCE: f64 = 1e-12;

/// A real-valued `(p, m, n)` triple.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealPartition {
    pub p: f64,
    pub m: f64,
    pub n: f64,
}

impl RealPartition {
    /// Splits `m * n = (threshold + 1) / p - 1` so that `lambda * n = mu * m`.
    fn balanced(dims: &ProblemDims, threshold: f64, p: f64) -> Self {
        let mn = (threshold + 1.0) / p - 1.0;
        Self {
            p,
            m: (mn * dims.lambda / dims.mu).sqrt(),
            n: (mn * dims.mu / dims.lambda).sqrt(),
        }
    }
}

fn check_inputs(dims: &ProblemDims, storage: f64) -> Result<()> {
    if !(dims.lambda > 0.0 && dims.kappa > 0.0 && dims.mu > 0.0) {
        return Err(Error::InvalidArgument("dimensions must be positive".into()));
    }
    if !(storage > 0.0 && storage.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "storage budget must be positive, got {storage}"
        )));
    }
    Ok(())
}

/// `lambda * kappa^2 * mu`.
fn kk(dims: &ProblemDims) -> f64 {
    dims.lambda * dims.kappa * dims.kappa * dims.mu
}

/// Smallest storage budget admitting a single EP code with threshold `r`.
pub fn ep_min_storage(dims: &ProblemDims, r: usize) -> f64 {
    4.0 * dims.kappa * (dims.lambda * dims.mu).sqrt() / (1.0 + r as f64)
}

/// Smallest storage budget admitting the two-layer construction `(r1, r2)`.
pub fn flex2_min_storage(dims: &ProblemDims, r1: usize, r2: usize) -> f64 {
    let (r1, r2) = (r1 as f64, r2 as f64);
    4.0 * dims.kappa * (dims.lambda * dims.mu).sqrt() * (2.0 * r1 - r2 + 1.0)
        / ((1.0 + r2) * (1.0 + r1))
}

/// Real optimum of a single EP code.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpOptimum {
    pub partition: RealPartition,
    pub load: f64,
}

pub fn ep_optimum(dims: &ProblemDims, threshold: usize, storage: f64) -> Result<EpOptimum> {
    check_inputs(dims, storage)?;
    let rp1 = threshold as f64 + 1.0;
    let k = kk(dims);
    let min = ep_min_storage(dims, threshold);
    let disc = rp1 * rp1 - 16.0 * k / (storage * storage);
    if storage < min || disc < 0.0 {
        return Err(Error::Infeasible { required: min });
    }
    let p = 0.5 * rp1 - 0.5 * disc.sqrt();
    let load = 2.0 * storage * dims.lambda * dims.kappa * dims.mu
        / (storage * rp1 + (storage * storage * rp1 * rp1 - 16.0 * k).max(0.0).sqrt());
    Ok(EpOptimum {
        partition: RealPartition::balanced(dims, threshold as f64, p),
        load,
    })
}

/// Real optimum of the two-layer construction under the one-round model,
/// scored by the first-layer load.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flex2Optimum {
    pub first: RealPartition,
    pub second: RealPartition,
    pub load: f64,
}

pub fn flex2_optimum(
    dims: &ProblemDims,
    r1: usize,
    r2: usize,
    storage: f64,
) -> Result<Flex2Optimum> {
    check_inputs(dims, storage)?;
    if r1 < r2 || r2 == 0 {
        return Err(Error::InvalidProfile(format!(
            "need R_1 >= R_2 >= 1, got ({r1}, {r2})"
        )));
    }
    let (a, b) = (r1 as f64 + 1.0, r2 as f64 + 1.0);
    let w = 2.0 * r1 as f64 - r2 as f64 + 1.0;
    let k = kk(dims);
    let min = flex2_min_storage(dims, r1, r2);
    let disc = a * a - 16.0 * k * w * w / (storage * storage * b * b);
    if storage < min || disc < 0.0 {
        return Err(Error::Infeasible { required: min });
    }
    let p1 = 0.5 * a - 0.5 * disc.sqrt();
    let load = 2.0 * storage * b * dims.lambda * dims.kappa * dims.mu
        / (storage * a * b
            + (storage * storage * a * a * b * b - 16.0 * k * w * w)
                .max(0.0)
                .sqrt());
    Ok(Flex2Optimum {
        first: RealPartition::balanced(dims, r1 as f64, p1),
        second: RealPartition {
            p: 0.5 * b,
            m: 1.0,
            n: 1.0,
        },
        load,
    })
}

/// Which regime the optimal first threshold falls into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum R1Regime {
    /// Storage is ample: use every server.
    AllServers,
    /// Interior optimum.
    Interior,
    /// Storage is tight: the flexible code degenerates to EP.
    FixedEp,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct R1Choice {
    pub r1: f64,
    pub regime: R1Regime,
}

/// Real-valued optimal `R_1` for the two-layer one-round construction.
pub fn best_r1_one_round(
    dims: &ProblemDims,
    r2: usize,
    storage: f64,
    n_servers: usize,
) -> Result<R1Choice> {
    check_inputs(dims, storage)?;
    if r2 == 0 || r2 > n_servers {
        return Err(Error::InvalidProfile(format!(
            "need 1 <= R <= N, got R = {r2}, N = {n_servers}"
        )));
    }
    let b = r2 as f64 + 1.0;
    let root = dims.kappa * (dims.lambda * dims.mu).sqrt();
    let upper = 8.0 * root / b;
    let lower = 8.0 * dims.kappa / b * (dims.lambda * dims.mu / 3.0).sqrt();
    if storage >= upper {
        return Ok(R1Choice {
            r1: n_servers as f64,
            regime: R1Regime::AllServers,
        });
    }
    if storage <= lower {
        return Ok(R1Choice {
            r1: r2 as f64,
            regime: R1Regime::FixedEp,
        });
    }
    if r2 < 2 {
        // the stationary point is only known to be a maximum for R >= 2
        let best = (r2..=n_servers)
            .filter_map(|r1| {
                flex2_optimum(dims, r1, r2, storage)
                    .ok()
                    .map(|o| (r1, o.load))
            })
            .min_by(|x, y| x.1.total_cmp(&y.1));
        let r1 = best.map(|(r1, _)| r1).unwrap_or(r2);
        return Ok(R1Choice {
            r1: r1 as f64,
            regime: if r1 == r2 {
                R1Regime::FixedEp
            } else {
                R1Regime::Interior
            },
        });
    }
    let k = kk(dims);
    let cb2 = storage * storage * b * b;
    let stationary =
        (cb2 * (r2 as f64 + 3.0) + 64.0 * k * (r2 as f64 - 1.0)) / (2.0 * (64.0 * k - cb2));
    Ok(R1Choice {
        r1: stationary.min(n_servers as f64),
        regime: R1Regime::Interior,
    })
}

/// Real optimum per layer under the multi-round model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiRoundOptimum {
    pub layers: Vec<RealPartition>,
    pub layer_loads: Vec<f64>,
}

impl MultiRoundOptimum {
    /// Load when `available` servers respond.
    pub fn load_at(&self, profile: &RecoveryProfile, available: usize) -> Result<f64> {
        let j = profile.band(available)?;
        let l1 = self.layer_loads[0];
        if j == 1 {
            return Ok(l1);
        }
        let (rj, rprev) = (profile.threshold(j) as f64, profile.threshold(j - 1) as f64);
        Ok(profile.top() as f64 * (rj + rprev - available as f64) / (rprev * rj) * l1)
    }
}

pub fn multi_round_optimum(
    dims: &ProblemDims,
    profile: &RecoveryProfile,
    storage: f64,
) -> Result<MultiRoundOptimum> {
    let first = ep_optimum(dims, profile.top(), storage)?;
    let r = profile.thresholds();
    let mut layers = vec![first.partition];
    let mut layer_loads = vec![first.load];
    for j in 1..r.len() {
        layers.push(RealPartition {
            p: 1.0,
            m: r[j] as f64,
            n: 1.0,
        });
        layer_loads
            .push(r[0] as f64 * (r[j - 1] - r[j]) as f64 / (r[j - 1] * r[j]) as f64 * first.load);
    }
    Ok(MultiRoundOptimum {
        layers,
        layer_loads,
    })
}

/// `q_0 > sum_{j>=1} q_j / (N - j)`: the full ladder from `N` is optimal.
pub fn all_servers_condition(dist: &StragglerDist) -> bool {
    let n = dist.n_servers;
    let tail: f64 = dist
        .probs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(j, q)| q / (n - j) as f64)
        .sum();
    dist.probs[0] > tail
}

/// Expected load of the full ladder `(r1, r1-1, ..., R)` at its real optimum.
pub fn ladder_expected_load(
    dims: &ProblemDims,
    dist: &StragglerDist,
    r1: usize,
    storage: f64,
) -> Result<f64> {
    check_inputs(dims, storage)?;
    let (n, r) = (dist.n_servers, dist.min_available);
    if r1 < r || r1 > n {
        return Err(Error::InvalidProfile(format!(
            "R_1 = {r1} outside [{r}, {n}]"
        )));
    }
    let base = 16.0 * kk(dims) / (storage * storage * (1.0 + r1 as f64).powi(2));
    if base > 1.0 {
        return Err(Error::Infeasible {
            required: ep_min_storage(dims, r1),
        });
    }
    let eta = 2.0 / (1.0 + (1.0 - base).sqrt());
    let rr = r1 as f64;
    let mut h = 0.0;
    for (j, &q) in dist.probs.iter().enumerate() {
        if j + r1 < n {
            h += q / (1.0 + rr);
        } else {
            h += q * rr / ((n - j) as f64 * (1.0 + rr));
        }
    }
    Ok(dims.lambda * dims.kappa * dims.mu * eta * h)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiRoundChoice {
    pub r1: usize,
    pub expected_load: f64,
    /// Whether the all-servers sufficient condition held.
    pub condition_holds: bool,
    /// Expected load for every feasible `R_1`.
    pub sweep: Vec<(usize, f64)>,
}

pub fn best_r1_multi_round(
    dims: &ProblemDims,
    dist: &StragglerDist,
    storage: f64,
) -> Result<MultiRoundChoice> {
    let (n, r) = (dist.n_servers, dist.min_available);
    let sweep: Vec<(usize, f64)> = (r..=n)
        .filter_map(|r1| {
            ladder_expected_load(dims, dist, r1, storage)
                .ok()
                .map(|e| (r1, e))
        })
        .collect();
    if sweep.is_empty() {
        return Err(Error::Infeasible {
            required: ep_min_storage(dims, n),
        });
    }
    let condition_holds = all_servers_condition(dist);
    let (r1, expected) = if condition_holds {
        *sweep
            .last()
            .expect("R_1 = N is feasible whenever any R_1 is")
    } else {
        *sweep
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .unwrap()
    };
    Ok(MultiRoundChoice {
        r1,
        expected_load: expected,
        condition_holds,
        sweep,
    })
}

/// Inputs of the exhaustive integer search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchInput {
    pub dims: ProblemDims,
    pub n_servers: usize,
    pub min_available: usize,
    pub storage: f64,
    pub model: CommModel,
    pub dist: StragglerDist,
    /// Largest number of layers allowed; `None` means no limit.
    pub max_layers: Option<usize>,
}

/// One integer parameter choice with its scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub profile: RecoveryProfile,
    pub partitions: Vec<PartitionParams>,
    pub expected_load: f64,
    /// First-layer load, the load when nobody straggles.
    pub approx_load: f64,
    /// Storage under the searched model.
    pub storage: f64,
    pub loads: LoadProfile,
}

impl Candidate {
    fn key(&self) -> (Vec<usize>, Vec<[usize; 3]>) {
        (
            self.profile.thresholds().to_vec(),
            self.partitions.iter().map(|&p| p.into()).collect(),
        )
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
}

/// Total order used to pick the winner: expected load, then storage, then
/// first-layer `p`, then lexicographic on thresholds and partitions.
fn better(a: &Candidate, b: &Candidate) -> bool {
    if !close(a.expected_load, b.expected_load) {
        return a.expected_load < b.expected_load;
    }
    if !close(a.storage, b.storage) {
        return a.storage < b.storage;
    }
    if a.partitions[0].p != b.partitions[0].p {
        return a.partitions[0].p < b.partitions[0].p;
    }
    a.key() < b.key()
}

fn pick_best(cands: impl IntoIterator<Item = Candidate>) -> Option<Candidate> {
    let mut best: Option<Candidate> = None;
    for c in cands {
        if best.as_ref().is_none_or(|b| better(&c, b)) {
            best = Some(c);
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Decision {
    Infeasible { min_storage: f64 },
    FixedEp,
    Flexible { r1: usize },
}

/// Relaxed optimum matching the chosen scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealOptimum {
    pub layers: Vec<RealPartition>,
    /// First-layer load at the relaxation.
    pub load: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub input: SearchInput,
    pub decision: Decision,
    pub best: Option<Candidate>,
    /// Best single-layer code, for comparison.
    pub fixed_ep: Option<Candidate>,
    pub real_optimum: Option<RealOptimum>,
    /// `best.approx_load - real_optimum.load`, never negative.
    pub relaxation_gap: Option<f64>,
    /// Closed-form real-valued `R_1` (one-round only).
    pub real_r1: Option<R1Choice>,
    /// Constraints that hold with equality at the chosen integer point.
    pub binding_constraints: Vec<String>,
    /// Smallest storage any enumerated candidate needs.
    pub min_storage: f64,
}

fn score(
    input: &SearchInput,
    profile: RecoveryProfile,
    partitions: Vec<PartitionParams>,
) -> Result<Candidate> {
    let loads = LoadProfile::build(&input.dims, input.n_servers, &profile, &partitions)?;
    Ok(Candidate {
        expected_load: expected_load(&loads, &input.dist)?,
        approx_load: loads.layer_loads[0],
        storage: loads.storage(input.model),
        profile,
        partitions,
        loads,
    })
}

fn fits(storage: f64, budget: f64) -> bool {
    storage <= budget + STORAGE_TOLERANCE
}

/// Subsets of the ladder strictly between `top` and `bottom` with `inner` elements,
/// each completed with the two end points.
fn sub_profiles(top: usize, bottom: usize, layers: usize) -> Result<Vec<RecoveryProfile>> {
    if top == bottom {
        return Ok(vec![RecoveryProfile::new(vec![top])?]);
    }
    let middle: Vec<usize> = (bottom + 1..top).rev().collect();
    let inner = layers.saturating_sub(2).min(middle.len());
    let mut count: f64 = 1.0;
    for i in 0..inner {
        count *= (middle.len() - i) as f64 / (i + 1) as f64;
    }
    if count > 200_000.0 {
        return Err(Error::InvalidArgument(format!(
            "{count:.0} recovery profiles between {top} and {bottom}; raise or drop the layer limit"
        )));
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..inner).collect();
    loop {
        let mut t = vec![top];
        t.extend(idx.iter().map(|&i| middle[i]));
        t.push(bottom);
        out.push(RecoveryProfile::new(t)?);
        // next combination
        let mut i = inner;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            if idx[i] < middle.len() - inner + i {
                idx[i] += 1;
                for k in i + 1..inner {
                    idx[k] = idx[k - 1] + 1;
                }
                break;
            }
        }
    }
}

fn one_round_candidates(input: &SearchInput) -> Result<(Vec<Candidate>, f64)> {
    let (n, r, c) = (input.n_servers, input.min_available, input.storage);
    let two_layers = input.max_layers.is_none_or(|k| k >= 2);
    let bottom = PartitionParams::with_threshold(r);
    let max_p = bottom.iter().map(|t| t.p).max().unwrap_or(1);
    let near: Vec<PartitionParams> = bottom.iter().copied().filter(|t| t.p == max_p).collect();
    let mut feasible = Vec::new();
    let mut min_storage = f64::INFINITY;
    for &t in &bottom {
        let cand = score(input, RecoveryProfile::new(vec![r])?, vec![t])?;
        min_storage = min_storage.min(cand.storage);
        if fits(cand.storage, c) {
            feasible.push(cand);
        }
    }
    if !two_layers {
        return Ok((feasible, min_storage));
    }
    for r1 in r + 1..=n {
        let profile = RecoveryProfile::new(vec![r1, r])?;
        let top = PartitionParams::with_threshold(r1);
        let mut found = Vec::new();
        for seconds in [&near, &bottom] {
            for &t1 in &top {
                for &t2 in seconds.iter() {
                    let cand = score(input, profile.clone(), vec![t1, t2])?;
                    min_storage = min_storage.min(cand.storage);
                    if fits(cand.storage, c) {
                        found.push(cand);
                    }
                }
            }
            if !found.is_empty() {
                break;
            }
        }
        feasible.extend(found);
    }
    Ok((feasible, min_storage))
}

fn multi_round_candidates(input: &SearchInput) -> Result<(Vec<Candidate>, f64)> {
    let (n, r, c) = (input.n_servers, input.min_available, input.storage);
    let limit = input.max_layers.unwrap_or(usize::MAX).max(1);
    let mut feasible = Vec::new();
    let mut min_storage = f64::INFINITY;
    for r1 in r..=n {
        if limit == 1 && r1 != r {
            continue;
        }
        let profiles = sub_profiles(r1, r, limit)?;
        for t1 in PartitionParams::with_threshold(r1) {
            for profile in &profiles {
                let mut parts = vec![t1];
                parts.extend(profile.thresholds()[1..].iter().map(|&t| PartitionParams {
                    p: 1,
                    m: t,
                    n: 1,
                }));
                let cand = score(input, profile.clone(), parts)?;
                min_storage = min_storage.min(cand.storage);
                if fits(cand.storage, c) {
                    feasible.push(cand);
                }
            }
        }
    }
    Ok((feasible, min_storage))
}

/// Exhaustive search over integer partitions and recovery profiles.
///
/// One-round: at most two layers. For each `R_1` the second layer is first
/// drawn from the triples with the largest `p` (the neighbourhood of the real
/// optimum); the full set is used only if none of those fits the budget.
/// Multi-round: ladder profiles, with layers above the first at `p = 1`.
pub fn integer_search(input: &SearchInput) -> Result<OptimizationReport> {
    check_inputs(&input.dims, input.storage)?;
    let (n, r) = (input.n_servers, input.min_available);
    if input.dist.n_servers != n || input.dist.min_available != r {
        return Err(Error::InvalidDistribution(format!(
            "distribution is for (N, R) = ({}, {}), search is for ({n}, {r})",
            input.dist.n_servers, input.dist.min_available
        )));
    }
    if input.max_layers == Some(0) {
        return Err(Error::InvalidArgument(
            "at least one layer is required".into(),
        ));
    }
    let (feasible, min_storage) = match input.model {
        CommModel::OneRound => one_round_candidates(input)?,
        CommModel::MultiRound => multi_round_candidates(input)?,
    };
    let fixed_ep = pick_best(
        feasible
            .iter()
            .filter(|c| c.profile.layer_count() == 1)
            .cloned(),
    );
    let best = pick_best(feasible);
    let Some(best) = best else {
        return Ok(OptimizationReport {
            input: input.clone(),
            decision: Decision::Infeasible { min_storage },
            best: None,
            fixed_ep: None,
            real_optimum: None,
            relaxation_gap: None,
            real_r1: None,
            binding_constraints: Vec::new(),
            min_storage,
        });
    };
    let decision = if best.profile.layer_count() == 1 {
        Decision::FixedEp
    } else {
        Decision::Flexible {
            r1: best.profile.top(),
        }
    };

    let real_optimum = match input.model {
        CommModel::OneRound if best.profile.layer_count() == 2 => {
            flex2_optimum(&input.dims, best.profile.top(), r, input.storage)
                .ok()
                .map(|o| RealOptimum {
                    layers: vec![o.first, o.second],
                    load: o.load,
                })
        }
        CommModel::OneRound => {
            ep_optimum(&input.dims, r, input.storage)
                .ok()
                .map(|o| RealOptimum {
                    layers: vec![o.partition],
                    load: o.load,
                })
        }
        CommModel::MultiRound => multi_round_optimum(&input.dims, &best.profile, input.storage)
            .ok()
            .map(|o| RealOptimum {
                load: o.layer_loads[0],
                layers: o.layers,
            }),
    };
    let relaxation_gap = real_optimum
        .as_ref()
        .map(|o| (best.approx_load - o.load).max(0.0));
    let real_r1 = match input.model {
        CommModel::OneRound => best_r1_one_round(&input.dims, r, input.storage, n).ok(),
        CommModel::MultiRound => None,
    };
    let mut binding_constraints = Vec::new();
    if (input.storage - best.storage).abs() <= 1e-9 * input.storage.max(1.0) {
        binding_constraints.push(format!("storage ({} model)", input.model));
    }
    Ok(OptimizationReport {
        input: input.clone(),
        decision,
        best: Some(best),
        fixed_ep,
        real_optimum,
        relaxation_gap,
        real_r1,
        binding_constraints,
        min_storage,
    })
}

/// One storage budget of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub storage: f64,
    pub decision: Decision,
    /// Expected load of the best single-layer code.
    pub ep_load: Option<f64>,
    pub flex_expected: Option<f64>,
    pub flex_approx: Option<f64>,
}

/// `from, from + step, ...` up to `to` (inclusive up to rounding), each value
/// rounded to 12 decimals so that e.g. `0.33 + 57 * 0.01` is exactly `0.9`.
pub fn storage_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && from.is_finite() && to.is_finite() && from <= to) {
        return Err(Error::InvalidArgument(format!(
            "bad storage grid from {from} to {to} step {step}"
        )));
    }
    let count = ((to - from) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| ((from + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

/// Runs [`integer_search`] at every storage budget of `grid`.
pub fn storage_sweep(base: &SearchInput, grid: &[f64]) -> Result<Vec<SweepRow>> {
    use rayon::prelude::*;
    grid.par_iter()
        .map(|&c| {
            let report = integer_search(&SearchInput {
                storage: c,
                ..base.clone()
            })?;
            Ok(SweepRow {
                storage: c,
                ep_load: report.fixed_ep.as_ref().map(|e| e.expected_load),
                flex_expected: report.best.as_ref().map(|b| b.expected_load),
                flex_approx: report.best.as_ref().map(|b| b.approx_load),
                decision: report.decision,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> ProblemDims {
        ProblemDims::unit()
    }

    fn pp(p: usize, m: usize, n: usize) -> PartitionParams {
        PartitionParams::new(p, m, n).unwrap()
    }

    fn one_round(n: usize, r: usize, c: f64, eps: f64) -> SearchInput {
        SearchInput {
            dims: unit(),
            n_servers: n,
            min_available: r,
            storage: c,
            model: CommModel::OneRound,
            dist: StragglerDist::truncated_binomial(n, r, eps).unwrap(),
            max_layers: None,
        }
    }

    #[test]
    fn ep_closed_form_example() {
        let o = ep_optimum(&unit(), 11, 0.9).unwrap();
        assert!((o.load - 0.0864).abs() < 5e-5);
        assert!((o.partition.p - 0.4264).abs() < 1e-3);
        // storage constraint is active and the split is balanced
        let s = (1.0 / o.partition.m + 1.0 / o.partition.n) / o.partition.p;
        assert!((s - 0.9).abs() < 1e-9);
        assert!((o.partition.m - o.partition.n).abs() < 1e-12);
        assert!((o.load - 1.0 / (12.0 - o.partition.p)).abs() < 1e-12);
    }

    #[test]
    fn ep_boundary_and_infeasible() {
        let c = ep_min_storage(&unit(), 11);
        let o = ep_optimum(&unit(), 11, c).unwrap();
        assert!((o.partition.p - 6.0).abs() < 1e-6);
        match ep_optimum(&unit(), 11, 0.3) {
            Err(Error::Infeasible { required }) => assert!((required - 1.0 / 3.0).abs() < 1e-12),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn flex2_degenerates_to_ep() {
        let dims = ProblemDims::new(2.0, 3.0, 5.0).unwrap();
        for r in [3, 7, 11] {
            let ep = ep_optimum(&dims, r, 20.0).unwrap();
            let f = flex2_optimum(&dims, r, r, 20.0).unwrap();
            assert!((ep.load - f.load).abs() <= 1e-12 * ep.load);
            assert!((ep.partition.p - f.first.p).abs() < 1e-9);
        }
        assert!(matches!(
            flex2_optimum(&unit(), 15, 11, 0.3),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn flex2_storage_is_active() {
        let dims = ProblemDims::new(1.0, 2.0, 3.0).unwrap();
        let (r1, r2, c) = (15usize, 11usize, 12.0);
        let o = flex2_optimum(&dims, r1, r2, c).unwrap();
        let (f, s) = (o.first, o.second);
        let st = (dims.lambda * dims.kappa / f.m + dims.kappa * dims.mu / f.n) / f.p
            + (r1 - r2) as f64 / (f.p * s.p)
                * (dims.lambda * dims.kappa / (f.m * s.m) + dims.kappa * dims.mu / (f.n * s.n));
        assert!((st - c).abs() < 1e-9 * c);
        assert!((dims.lambda * dims.kappa * f.n - dims.kappa * dims.mu * f.m).abs() < 1e-9);
    }

    #[test]
    fn r1_regimes() {
        let d = unit();
        assert_eq!(best_r1_one_round(&d, 11, 0.7, 16).unwrap().r1, 16.0);
        assert_eq!(
            best_r1_one_round(&d, 11, 0.667, 16).unwrap().regime,
            R1Regime::AllServers
        );
        let low = best_r1_one_round(&d, 11, 0.38, 16).unwrap();
        assert_eq!((low.r1, low.regime), (11.0, R1Regime::FixedEp));
        let mid = best_r1_one_round(&d, 11, 0.5, 16).unwrap();
        assert_eq!(mid.regime, R1Regime::Interior);
        assert!(mid.r1 > 11.0 && mid.r1 <= 16.0);
        // the stationary point maximizes the closed-form load's denominator
        let r1 = mid.r1;
        let load_at = |x: f64| {
            let (a, b, w) = (x + 1.0, 12.0, 2.0 * x - 11.0 + 1.0);
            2.0 * 0.5 * b / (0.5 * a * b + (0.25 * a * a * b * b - 16.0 * w * w).sqrt())
        };
        if r1 < 16.0 {
            assert!(load_at(r1) <= load_at(r1 - 0.01) && load_at(r1) <= load_at(r1 + 0.01));
        }
        let tiny = best_r1_one_round(&d, 1, 2.5, 6).unwrap();
        assert!(tiny.r1 >= 1.0 && tiny.r1 <= 6.0);
    }

    #[test]
    fn multi_round_closed_form() {
        let d = unit();
        let prof = RecoveryProfile::new(vec![5, 3]).unwrap();
        let o = multi_round_optimum(&d, &prof, 2.0).unwrap();
        assert!((o.layer_loads[1] - 2.0 / 3.0 * o.layer_loads[0]).abs() < 1e-12);
        let ladder = RecoveryProfile::ladder(9, 5).unwrap();
        let o = multi_round_optimum(&d, &ladder, 2.0).unwrap();
        for avail in 5..=9 {
            let sum: f64 = o.layer_loads[..=9 - avail].iter().sum();
            assert!((sum - 9.0 / avail as f64 * o.layer_loads[0]).abs() < 1e-12);
            assert!((o.load_at(&ladder, avail).unwrap() - sum).abs() < 1e-12);
        }
        let single = multi_round_optimum(&d, &RecoveryProfile::new(vec![7]).unwrap(), 2.0).unwrap();
        assert_eq!(
            single.layer_loads,
            vec![ep_optimum(&d, 7, 2.0).unwrap().load]
        );
    }

    #[test]
    fn multi_round_r1_choice() {
        let d = unit();
        let point = StragglerDist::point_mass(10, 6, 0).unwrap();
        let c = best_r1_multi_round(&d, &point, 1.0).unwrap();
        assert!(c.condition_holds);
        assert_eq!(c.r1, 10);
        // heavy straggling breaks the condition; the choice is the sweep argmin
        let heavy = StragglerDist::new(10, 6, vec![0.05, 0.05, 0.1, 0.3, 0.5]).unwrap();
        let c = best_r1_multi_round(&d, &heavy, 1.0).unwrap();
        assert!(!c.condition_holds);
        let brute = (6..=10)
            .map(|r1| (r1, ladder_expected_load(&d, &heavy, r1, 1.0).unwrap()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert_eq!(c.r1, brute.0);
    }

    #[test]
    fn eight_server_integer_search() {
        let input = SearchInput {
            dims: unit(),
            n_servers: 8,
            min_available: 7,
            storage: 8.0 / 7.0,
            model: CommModel::OneRound,
            dist: StragglerDist::new(8, 7, vec![0.9, 0.1]).unwrap(),
            max_layers: None,
        };
        let rep = integer_search(&input).unwrap();
        let best = rep.best.unwrap();
        assert_eq!(rep.decision, Decision::Flexible { r1: 8 });
        assert_eq!(best.partitions, vec![pp(1, 2, 4), pp(4, 1, 1)]);
        assert!((best.storage - 15.0 / 16.0).abs() < 1e-12);
        assert!((best.expected_load - 0.128125).abs() < 1e-12);
        assert_eq!(rep.fixed_ep.unwrap().partitions, vec![pp(1, 1, 7)]);
    }

    #[test]
    fn sixteen_server_points() {
        let rep = integer_search(&one_round(16, 11, 0.9, 0.05)).unwrap();
        assert_eq!(rep.decision, Decision::Flexible { r1: 15 });
        let best = rep.best.as_ref().unwrap();
        assert_eq!(best.partitions, vec![pp(1, 3, 5), pp(6, 1, 1)]);
        assert!((best.expected_load - 0.069).abs() < 1e-3);
        assert!((best.approx_load - 0.067).abs() < 1e-3);
        let ep = rep.fixed_ep.as_ref().unwrap();
        assert_eq!(ep.partitions, vec![pp(2, 1, 5)]);
        assert!((ep.expected_load - 0.1).abs() < 1e-12);
        assert!(rep.relaxation_gap.unwrap() >= 0.0);

        let low = integer_search(&one_round(16, 11, 0.40, 0.05)).unwrap();
        assert_eq!(low.decision, Decision::FixedEp);

        let none = integer_search(&one_round(16, 11, 0.33, 0.05)).unwrap();
        match none.decision {
            Decision::Infeasible { min_storage } => {
                assert!((min_storage - 1.0 / 3.0).abs() < 1e-12)
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn multi_round_search_uses_ladders() {
        let mut input = one_round(10, 7, 0.8, 0.05);
        input.model = CommModel::MultiRound;
        let rep = integer_search(&input).unwrap();
        let best = rep.best.unwrap();
        let t = best.profile.thresholds();
        assert!(t.windows(2).all(|w| w[0] == w[1] + 1));
        assert!(best.partitions[1..].iter().all(|q| q.p == 1));
        input.max_layers = Some(2);
        let rep = integer_search(&input).unwrap();
        assert!(rep.best.unwrap().profile.layer_count() <= 2);
        input.max_layers = Some(1);
        let rep = integer_search(&input).unwrap();
        assert_eq!(rep.decision, Decision::FixedEp);
    }

    #[test]
    fn profile_subsets() {
        let all = sub_profiles(6, 2, 3).unwrap();
        assert_eq!(all.len(), 3);
        assert!(all
            .iter()
            .all(|p| p.top() == 6 && p.bottom() == 2 && p.layer_count() == 3));
        assert_eq!(sub_profiles(6, 2, usize::MAX).unwrap().len(), 1);
        assert_eq!(sub_profiles(6, 2, 2).unwrap()[0].thresholds(), &[6, 2]);
        assert_eq!(sub_profiles(4, 4, 3).unwrap()[0].thresholds(), &[4]);
    }

    #[test]
    fn sweep_matches_single_calls() {
        let grid = storage_grid(0.33, 1.0, 0.01).unwrap();
        assert_eq!(grid.len(), 68);
        assert_eq!(grid[57], 0.9);
        assert_eq!(*grid.last().unwrap(), 1.0);
        let base = one_round(16, 11, 0.9, 0.05);
        let rows = storage_sweep(&base, &grid[55..59]).unwrap();
        let single = integer_search(&base).unwrap();
        let row = rows.iter().find(|r| r.storage == 0.9).unwrap();
        assert_eq!(row.flex_expected, Some(single.best.unwrap().expected_load));
        assert_eq!(row.ep_load, Some(single.fixed_ep.unwrap().expected_load));
        assert!(storage_grid(1.0, 0.5, 0.1).is_err());
    }
}
