//! Closed-form load and storage analytics.
//!
//! Loads count scalar multiplications per server and storage counts field
//! entries per server. Every formula is generic over [`Quantity`], so the
//! same code runs on `f64` for optimization and on exact rationals for
//! checks against counted multiplications.

use num_rational::Ratio;
use num_traits::{Num, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::construct::RecoveryProfile;
use crate::epcode::PartitionParams;
use crate::error::{Error, Result};

/// Number type the formulas are evaluated in.
pub trait Quantity: Num + Clone + PartialOrd + std::fmt::Debug {
    fn from_count(n: usize) -> Self;
    fn to_f64(&self) -> f64;
}

impl Quantity for f64 {
    fn from_count(n: usize) -> Self {
        n as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Quantity for Ratio<i128> {
    fn from_count(n: usize) -> Self {
        Ratio::from_integer(n as i128)
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// `A` is `lambda x kappa`, `B` is `kappa x mu`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemDims<Q = f64> {
    pub lambda: Q,
    pub kappa: Q,
    pub mu: Q,
}

impl<Q: Quantity> ProblemDims<Q> {
    pub fn new(lambda: Q, kappa: Q, mu: Q) -> Result<Self> {
        let zero = Q::zero();
        if !(lambda > zero && kappa > zero && mu > zero) {
            return Err(Error::InvalidArgument(format!(
                "dimensions must be positive, got ({lambda:?}, {kappa:?}, {mu:?})"
            )));
        }
        Ok(Self { lambda, kappa, mu })
    }

    /// Load of direct multiplication, `lambda * kappa * mu`.
    pub fn direct_load(&self) -> Q {
        self.lambda.clone() * self.kappa.clone() * self.mu.clone()
    }
}

impl ProblemDims<f64> {
    pub fn unit() -> Self {
        Self {
            lambda: 1.0,
            kappa: 1.0,
            mu: 1.0,
        }
    }
}

impl ProblemDims<Ratio<i128>> {
    pub fn exact(lambda: i128, kappa: i128, mu: i128) -> Result<Self> {
        Self::new(
            Ratio::from_integer(lambda),
            Ratio::from_integer(kappa),
            Ratio::from_integer(mu),
        )
    }
}

/// Communication model that the storage budget applies to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommModel {
    /// Every coded pair is delivered up front; storage is their sum.
    OneRound,
    /// Pairs arrive on demand; storage is the largest pair.
    MultiRound,
}

impl std::str::FromStr for CommModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one-round" => Ok(Self::OneRound),
            "multi-round" => Ok(Self::MultiRound),
            other => Err(Error::InvalidArgument(format!(
                "unknown model {other:?}, expected one-round or multi-round"
            ))),
        }
    }
}

impl std::fmt::Display for CommModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::OneRound => "one-round",
            Self::MultiRound => "multi-round",
        })
    }
}

fn check_layers(profile: &RecoveryProfile, partitions: &[PartitionParams]) -> Result<()> {
    if partitions.len() != profile.layer_count() {
        return Err(Error::InvalidPartition(format!(
            "{} partitions for {} layers",
            partitions.len(),
            profile.layer_count()
        )));
    }
    Ok(())
}

fn q<Q: Quantity>(n: usize) -> Q {
    Q::from_count(n)
}

fn sum<Q: Quantity>(xs: &[Q]) -> Q {
    xs.iter().cloned().fold(Q::zero(), |a, b| a + b)
}

/// Per-layer loads: all tasks of layer `j` together, per server.
pub fn layer_loads<Q: Quantity>(
    dims: &ProblemDims<Q>,
    profile: &RecoveryProfile,
    partitions: &[PartitionParams],
) -> Result<Vec<Q>> {
    check_layers(profile, partitions)?;
    let r = profile.thresholds();
    let mut loads: Vec<Q> = Vec::with_capacity(r.len());
    for (j, part) in partitions.iter().enumerate() {
        let split: Q = q(part.p * part.m * part.n);
        let load = if j == 0 {
            dims.direct_load() / split
        } else {
            q::<Q>(r[j - 1] - r[j]) / split * sum(&loads)
        };
        loads.push(load);
    }
    Ok(loads)
}

/// Load per server when exactly `available` servers respond.
pub fn total_load<Q: Quantity>(
    dims: &ProblemDims<Q>,
    profile: &RecoveryProfile,
    partitions: &[PartitionParams],
    available: usize,
) -> Result<Q> {
    let loads = layer_loads(dims, profile, partitions)?;
    let j = profile.band(available)?;
    if j == 1 {
        return Ok(loads[0].clone());
    }
    let part = partitions[j - 1];
    let below = sum(&loads[..j - 1]);
    let extra = q::<Q>(profile.threshold(j - 1) - available) / q(part.p * part.m * part.n);
    Ok((Q::one() + extra) * below)
}

/// [`total_load`] when every layer above the first has `p = 1` and
/// `m * n = R_j`.
pub fn total_load_special<Q: Quantity>(
    dims: &ProblemDims<Q>,
    profile: &RecoveryProfile,
    first: PartitionParams,
    available: usize,
) -> Result<Q> {
    if first.recovery_threshold() != profile.top() {
        return Err(Error::ThresholdMismatch {
            layer: 1,
            threshold: profile.top(),
            expected: first.recovery_threshold(),
        });
    }
    let l1 = dims.direct_load() / q(first.p * first.m * first.n);
    let j = profile.band(available)?;
    if j == 1 {
        return Ok(l1);
    }
    let (rj, rprev) = (profile.threshold(j), profile.threshold(j - 1));
    Ok(q::<Q>(profile.top()) * q(rj + rprev - available) / q(rprev * rj) * l1)
}

/// Storage per layer, split by side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StorageBreakdown<Q = f64> {
    pub a_side: Vec<Q>,
    pub b_side: Vec<Q>,
}

impl<Q: Quantity> StorageBreakdown<Q> {
    /// `C_j = C_{j,A} + C_{j,B}`.
    pub fn per_layer(&self) -> Vec<Q> {
        self.a_side
            .iter()
            .zip(&self.b_side)
            .map(|(a, b)| a.clone() + b.clone())
            .collect()
    }

    pub fn total(&self, model: CommModel) -> Q {
        let per_layer = self.per_layer();
        match model {
            CommModel::OneRound => sum(&per_layer),
            CommModel::MultiRound => per_layer[0].clone(),
        }
    }
}

pub fn layer_storage<Q: Quantity>(
    dims: &ProblemDims<Q>,
    profile: &RecoveryProfile,
    partitions: &[PartitionParams],
) -> Result<StorageBreakdown<Q>> {
    check_layers(profile, partitions)?;
    let r = profile.thresholds();
    let mut a_side: Vec<Q> = Vec::with_capacity(r.len());
    let mut b_side: Vec<Q> = Vec::with_capacity(r.len());
    for (j, part) in partitions.iter().enumerate() {
        let (pm, pn): (Q, Q) = (q(part.p * part.m), q(part.p * part.n));
        if j == 0 {
            a_side.push(dims.lambda.clone() * dims.kappa.clone() / pm);
            b_side.push(dims.kappa.clone() * dims.mu.clone() / pn);
        } else {
            let gap: Q = q(r[j - 1] - r[j]);
            a_side.push(gap.clone() / pm * sum(&a_side));
            b_side.push(gap / pn * sum(&b_side));
        }
    }
    Ok(StorageBreakdown { a_side, b_side })
}

pub fn storage<Q: Quantity>(
    dims: &ProblemDims<Q>,
    profile: &RecoveryProfile,
    partitions: &[PartitionParams],
    model: CommModel,
) -> Result<Q> {
    Ok(layer_storage(dims, profile, partitions)?.total(model))
}

/// Probabilities `q_j = P(exactly j stragglers)` for `j = 0..=N-R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StragglerDist {
    pub n_servers: usize,
    pub min_available: usize,
    pub probs: Vec<f64>,
}

impl StragglerDist {
    pub fn new(n_servers: usize, min_available: usize, probs: Vec<f64>) -> Result<Self> {
        if min_available == 0 || min_available > n_servers {
            return Err(Error::InvalidDistribution(format!(
                "need 1 <= R <= N, got N = {n_servers}, R = {min_available}"
            )));
        }
        if probs.len() != n_servers - min_available + 1 {
            return Err(Error::InvalidDistribution(format!(
                "expected {} probabilities, got {}",
                n_servers - min_available + 1,
                probs.len()
            )));
        }
        if probs.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::InvalidDistribution(
                "probabilities must be non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self {
            n_servers,
            min_available,
            probs,
        })
    }

    /// All mass on exactly `stragglers` stragglers.
    pub fn point_mass(n_servers: usize, min_available: usize, stragglers: usize) -> Result<Self> {
        let mut probs = vec![0.0; (n_servers + 1).saturating_sub(min_available)];
        if stragglers >= probs.len() {
            return Err(Error::InvalidDistribution(format!(
                "{stragglers} stragglers exceeds N - R = {}",
                n_servers.saturating_sub(min_available)
            )));
        }
        probs[stragglers] = 1.0;
        Self::new(n_servers, min_available, probs)
    }

    /// Independent failures with probability `epsilon`, conditioned on at
    /// most `N - R` failures.
    pub fn truncated_binomial(
        n_servers: usize,
        min_available: usize,
        epsilon: f64,
    ) -> Result<Self> {
        let raw = binomial_head(n_servers, min_available, epsilon)?;
        let theta: f64 = raw.iter().sum();
        let mut probs: Vec<f64> = raw.iter().map(|p| p / theta).collect();
        // absorb rounding so the sum check is exact to machine precision
        let total: f64 = probs.iter().sum();
        probs[0] += 1.0 - total;
        Self::new(n_servers, min_available, probs)
    }

    /// `P(R_hat = N - j)`.
    pub fn prob(&self, stragglers: usize) -> f64 {
        self.probs[stragglers]
    }
}

/// Binomial probability mass kept by the truncation (`theta`).
pub fn truncated_binomial_mass(
    n_servers: usize,
    min_available: usize,
    epsilon: f64,
) -> Result<f64> {
    Ok(binomial_head(n_servers, min_available, epsilon)?
        .iter()
        .sum())
}

fn binomial_head(n_servers: usize, min_available: usize, epsilon: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::InvalidDistribution(format!(
            "failure probability must lie in [0, 1), got {epsilon}"
        )));
    }
    if min_available == 0 || min_available > n_servers {
        return Err(Error::InvalidDistribution(format!(
            "need 1 <= R <= N, got N = {n_servers}, R = {min_available}"
        )));
    }
    let max_stragglers = n_servers - min_available;
    if epsilon == 0.0 {
        let mut out = vec![0.0; max_stragglers + 1];
        out[0] = 1.0;
        return Ok(out);
    }
    let n = n_servers as f64;
    let (ln_eps, ln_keep) = (epsilon.ln(), (-epsilon).ln_1p());
    let mut ln_choose = 0.0f64;
    let mut out = Vec::with_capacity(max_stragglers + 1);
    for j in 0..=max_stragglers {
        if j > 0 {
            ln_choose += ((n - j as f64 + 1.0) / j as f64).ln();
        }
        out.push((ln_choose + (n - j as f64) * ln_keep + j as f64 * ln_eps).exp());
    }
    Ok(out)
}

/// Loads and storage of one parameter choice, tabulated for reporting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadProfile {
    pub n_servers: usize,
    /// `(available servers, load per server)` from `R_a` up to `N`.
    pub by_available: Vec<(usize, f64)>,
    pub layer_loads: Vec<f64>,
    pub layer_storage: Vec<f64>,
    pub one_round_storage: f64,
    pub multi_round_storage: f64,
}

impl LoadProfile {
    pub fn build(
        dims: &ProblemDims<f64>,
        n_servers: usize,
        profile: &RecoveryProfile,
        partitions: &[PartitionParams],
    ) -> Result<Self> {
        if n_servers < profile.top() {
            return Err(Error::InvalidProfile(format!(
                "R_1 = {} exceeds the {n_servers} servers",
                profile.top()
            )));
        }
        let by_available = (profile.bottom()..=n_servers)
            .map(|avail| Ok((avail, total_load(dims, profile, partitions, avail)?)))
            .collect::<Result<_>>()?;
        let st = layer_storage(dims, profile, partitions)?;
        Ok(Self {
            n_servers,
            by_available,
            layer_loads: layer_loads(dims, profile, partitions)?,
            layer_storage: st.per_layer(),
            one_round_storage: st.total(CommModel::OneRound),
            multi_round_storage: st.total(CommModel::MultiRound),
        })
    }

    pub fn load_at(&self, available: usize) -> Option<f64> {
        self.by_available
            .iter()
            .find(|(a, _)| *a == available)
            .map(|(_, l)| *l)
    }

    pub fn storage(&self, model: CommModel) -> f64 {
        match model {
            CommModel::OneRound => self.one_round_storage,
            CommModel::MultiRound => self.multi_round_storage,
        }
    }
}

/// `sum_j q_j * L(N - j)`.
pub fn expected_load(profile: &LoadProfile, dist: &StragglerDist) -> Result<f64> {
    if dist.n_servers != profile.n_servers {
        return Err(Error::InvalidDistribution(format!(
            "distribution is for N = {}, loads for N = {}",
            dist.n_servers, profile.n_servers
        )));
    }
    let mut total = 0.0;
    for (j, &qj) in dist.probs.iter().enumerate() {
        let available = dist.n_servers - j;
        match profile.load_at(available) {
            Some(load) => total += qj * load,
            None if qj == 0.0 => {}
            None => {
                return Err(Error::InsufficientServers {
                    available,
                    need: profile.by_available[0].0,
                })
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type Exact = Ratio<i128>;

    fn r(n: i128, d: i128) -> Exact {
        Ratio::new(n, d)
    }

    fn pp(p: usize, m: usize, n: usize) -> PartitionParams {
        PartitionParams::new(p, m, n).unwrap()
    }

    fn profile(t: &[usize]) -> RecoveryProfile {
        RecoveryProfile::new(t.to_vec()).unwrap()
    }

    #[test]
    fn worked_example_loads() {
        let d = ProblemDims::exact(6, 6, 6).unwrap();
        let prof = profile(&[5, 3]);
        let parts = [pp(3, 1, 1), pp(2, 1, 1)];
        let l = d.direct_load();
        assert_eq!(layer_loads(&d, &prof, &parts).unwrap(), vec![l / 3, l / 3]);
        let got: Vec<Exact> = (3..=5)
            .map(|a| total_load(&d, &prof, &parts, a).unwrap())
            .collect();
        assert_eq!(got, vec![l * r(2, 3), l * r(1, 2), l * r(1, 3)]);
        assert!(total_load(&d, &prof, &parts, 2).is_err());
        let single = layer_loads(&d, &profile(&[1]), &[pp(1, 1, 1)]).unwrap();
        assert_eq!(single, vec![l]);
    }

    #[test]
    fn worked_example_storage() {
        let d = ProblemDims::exact(7, 9, 5).unwrap();
        let st = storage(
            &d,
            &profile(&[5, 3]),
            &[pp(3, 1, 1), pp(2, 1, 1)],
            CommModel::OneRound,
        )
        .unwrap();
        assert_eq!(st, r(2 * 7 * 9, 3) + r(2 * 9 * 5, 3));
        let single = storage(&d, &profile(&[11]), &[pp(2, 1, 5)], CommModel::OneRound).unwrap();
        assert_eq!(single, r(1, 2) * (r(63, 1) + r(45, 5)));
        let eight = ProblemDims::exact(1, 1, 1).unwrap();
        let st = storage(
            &eight,
            &profile(&[8, 7]),
            &[pp(1, 2, 4), pp(4, 1, 1)],
            CommModel::OneRound,
        )
        .unwrap();
        assert_eq!(st, r(15, 16));
        let multi = storage(
            &eight,
            &profile(&[8, 7]),
            &[pp(1, 2, 4), pp(4, 1, 1)],
            CommModel::MultiRound,
        )
        .unwrap();
        assert_eq!(multi, r(3, 4));
    }

    #[test]
    fn special_case_examples() {
        let d = ProblemDims::exact(1, 1, 1).unwrap();
        let first = pp(1, 1, 5);
        let l1 = r(1, 5);
        let prof = profile(&[5, 3]);
        assert_eq!(total_load_special(&d, &prof, first, 5).unwrap(), l1);
        assert_eq!(
            total_load_special(&d, &prof, first, 4).unwrap(),
            l1 * r(4, 3)
        );
        assert_eq!(
            total_load_special(&d, &prof, first, 4).unwrap(),
            total_load(&d, &prof, &[first, pp(1, 3, 1)], 4).unwrap()
        );
        let ladder = RecoveryProfile::ladder(9, 4).unwrap();
        let parts: Vec<_> = ladder.thresholds().iter().map(|&t| pp(1, t, 1)).collect();
        for k in 0..=5 {
            let got = total_load(&d, &ladder, &parts, 9 - k).unwrap();
            assert_eq!(got, r(9, 9 - k as i128) * r(1, 9));
        }
    }

    #[test]
    fn eight_server_expected_load() {
        let d = ProblemDims::unit();
        let lp = LoadProfile::build(&d, 8, &profile(&[8, 7]), &[pp(1, 2, 4), pp(4, 1, 1)]).unwrap();
        assert_eq!(lp.load_at(8), Some(0.125));
        assert_eq!(lp.load_at(7), Some(0.125 + 1.0 / 32.0));
        let dist = StragglerDist::new(8, 7, vec![0.9, 0.1]).unwrap();
        assert!((expected_load(&lp, &dist).unwrap() - 0.128125).abs() < 1e-12);
        let none = StragglerDist::point_mass(8, 7, 0).unwrap();
        assert_eq!(expected_load(&lp, &none).unwrap(), 0.125);
    }

    #[test]
    fn distribution_validation() {
        assert!(StragglerDist::new(5, 3, vec![0.5, 0.5]).is_err());
        assert!(StragglerDist::new(5, 3, vec![0.5, 0.6, -0.1]).is_err());
        assert!(StragglerDist::new(5, 3, vec![0.5, 0.4, 0.05]).is_err());
        assert!(StragglerDist::truncated_binomial(5, 3, 1.0).is_err());
        assert!(StragglerDist::truncated_binomial(5, 3, -0.1).is_err());
        let zero = StragglerDist::truncated_binomial(16, 11, 0.0).unwrap();
        assert_eq!(zero.probs[0], 1.0);
        let kept = truncated_binomial_mass(16, 11, 0.05).unwrap();
        assert!(1.0 - kept < 1e-4);
        assert!(1.0 - kept > 0.0);
    }

    #[test]
    fn binomial_against_direct_formula() {
        let (n, rr, eps) = (10usize, 6usize, 0.2f64);
        let choose = |n: u64, k: u64| -> f64 {
            (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
        };
        let raw: Vec<f64> = (0..=n - rr)
            .map(|j| {
                choose(n as u64, j as u64) * (1.0 - eps).powi((n - j) as i32) * eps.powi(j as i32)
            })
            .collect();
        let theta: f64 = raw.iter().sum();
        let dist = StragglerDist::truncated_binomial(n, rr, eps).unwrap();
        for (a, b) in dist.probs.iter().zip(&raw) {
            assert!((a - b / theta).abs() < 1e-12);
        }
    }

    #[test]
    fn comm_model_parsing() {
        assert_eq!(
            "one-round".parse::<CommModel>().unwrap(),
            CommModel::OneRound
        );
        assert_eq!(
            "multi-round".parse::<CommModel>().unwrap(),
            CommModel::MultiRound
        );
        assert!("two".parse::<CommModel>().is_err());
        assert_eq!(CommModel::MultiRound.to_string(), "multi-round");
    }

    fn strategy_profile() -> impl Strategy<Value = Vec<usize>> {
        proptest::collection::btree_set(1usize..30, 1..5)
            .prop_map(|s| s.into_iter().rev().collect::<Vec<_>>())
    }

    proptest! {
        #[test]
        fn special_formula_matches_general(t in strategy_profile(), extra in 0usize..4) {
            let prof = profile(&t);
            let first = pp(1, t[0], 1);
            let mut parts = vec![first];
            parts.extend(t[1..].iter().map(|&x| pp(1, 1, x)));
            let d = ProblemDims::exact(3, 5, 7).unwrap();
            for avail in prof.bottom()..=t[0] + extra {
                prop_assert_eq!(
                    total_load_special(&d, &prof, first, avail).unwrap(),
                    total_load(&d, &prof, &parts, avail).unwrap()
                );
            }
        }

        #[test]
        fn load_is_monotone_and_storage_ordered(t in strategy_profile(), seed in any::<u64>()) {
            let prof = profile(&t);
            // any valid partition per layer
            let parts: Vec<PartitionParams> = t.iter().enumerate().map(|(i, &x)| {
                let all = PartitionParams::with_threshold(x);
                all[(seed as usize).wrapping_add(i * 7) % all.len()]
            }).collect();
            let d = ProblemDims::exact(2, 3, 5).unwrap();
            let mut prev: Option<Exact> = None;
            for avail in prof.bottom()..=t[0] + 2 {
                let cur = total_load(&d, &prof, &parts, avail).unwrap();
                if let Some(p) = prev {
                    prop_assert!(cur <= p);
                }
                prev = Some(cur);
            }
            prop_assert!(storage(&d, &prof, &parts, CommModel::OneRound).unwrap()
                >= storage(&d, &prof, &parts, CommModel::MultiRound).unwrap());
        }
    }
}
