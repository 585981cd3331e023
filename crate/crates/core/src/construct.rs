//! Multi-layer flexible construction.
//!
//! Layer 1 is a plain EP code on `(A, B)`. Layer `j >= 2` encodes, with its
//! own EP parameters, extra parities of the lower layers: the evaluations of
//! lower-layer encodings at the points `alpha_{N+t}` that no server holds.
//! Decoding a layer-`j` task therefore yields one extra evaluation of a
//! lower-layer task polynomial.
//!
//! Server ids, layer numbers, task indices and parity indices are all
//! 1-based in the public API.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::epcode::{encode_a, encode_b, partition, BlockGrid, PartitionParams};
use crate::error::{Error, Result};
use crate::gf::{FieldMatrix, PrimeField};

/// Strictly decreasing recovery thresholds `R_1 > R_2 > ... > R_a`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct RecoveryProfile {
    thresholds: Vec<usize>,
}

impl TryFrom<Vec<usize>> for RecoveryProfile {
    type Error = Error;

    fn try_from(thresholds: Vec<usize>) -> Result<Self> {
        Self::new(thresholds)
    }
}

impl From<RecoveryProfile> for Vec<usize> {
    fn from(profile: RecoveryProfile) -> Self {
        profile.thresholds
    }
}

impl std::fmt::Display for RecoveryProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.thresholds.iter().map(|r| r.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

impl RecoveryProfile {
    pub fn new(thresholds: Vec<usize>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::InvalidProfile(
                "at least one layer is required".into(),
            ));
        }
        if thresholds[thresholds.len() - 1] == 0 {
            return Err(Error::InvalidProfile("thresholds must be positive".into()));
        }
        if thresholds.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidProfile(format!(
                "thresholds must be strictly decreasing, got {thresholds:?}"
            )));
        }
        Ok(Self { thresholds })
    }

    /// The ladder `(top, top-1, ..., bottom)`.
    pub fn ladder(top: usize, bottom: usize) -> Result<Self> {
        if bottom == 0 || bottom > top {
            return Err(Error::InvalidProfile(format!(
                "empty ladder {top}..{bottom}"
            )));
        }
        Self::new((bottom..=top).rev().collect())
    }

    pub fn thresholds(&self) -> &[usize] {
        &self.thresholds
    }

    pub fn layer_count(&self) -> usize {
        self.thresholds.len()
    }

    /// `R_1`.
    pub fn top(&self) -> usize {
        self.thresholds[0]
    }

    /// `R_a`, the fewest servers that can ever finish.
    pub fn bottom(&self) -> usize {
        *self.thresholds.last().unwrap()
    }

    /// Threshold of `layer` (1-based).
    pub fn threshold(&self, layer: usize) -> usize {
        self.thresholds[layer - 1]
    }

    /// The layer whose band `R_j <= available < R_{j-1}` contains `available`,
    /// or 1 when `available >= R_1`.
    pub fn band(&self, available: usize) -> Result<usize> {
        if available < self.bottom() {
            return Err(Error::InsufficientServers {
                available,
                need: self.bottom(),
            });
        }
        Ok(1 + self.thresholds.iter().filter(|&&r| r > available).count())
    }
}

/// Number of tasks per layer: `1`, then `(R_{j-1} - R_j) * (tasks in all lower layers)`.
pub fn gamma_counts(profile: &RecoveryProfile) -> Vec<usize> {
    let r = profile.thresholds();
    let mut gammas = Vec::with_capacity(r.len());
    let mut below = 0usize;
    for j in 0..r.len() {
        let g = if j == 0 { 1 } else { (r[j - 1] - r[j]) * below };
        gammas.push(g);
        below += g;
    }
    gammas
}

/// Where a layer-`j` task comes from: the extra parity with index
/// `parity_index` of task `source_task` in layer `source_layer`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSource {
    pub source_layer: usize,
    pub source_task: usize,
    pub parity_index: usize,
}

/// Routing for every layer; entry 0 (layer 1) is always empty.
///
/// Layer `j` enumerates parity indices `t` from `R_j - R_a + 1` to
/// `R_{j-1} - R_a`, then lower layers `J`, then their tasks.
pub fn enumerate_routing(profile: &RecoveryProfile) -> Vec<Vec<TaskSource>> {
    let r = profile.thresholds();
    let ra = profile.bottom();
    let gammas = gamma_counts(profile);
    let mut routing = vec![Vec::new()];
    for j in 1..r.len() {
        let mut layer = Vec::with_capacity(gammas[j]);
        for t in (r[j] - ra + 1)..=(r[j - 1] - ra) {
            for (source, &g) in gammas.iter().enumerate().take(j) {
                for delta in 1..=g {
                    layer.push(TaskSource {
                        source_layer: source + 1,
                        source_task: delta,
                        parity_index: t,
                    });
                }
            }
        }
        routing.push(layer);
    }
    routing
}

/// Tasks a server must finish when `available` servers respond.
pub fn tasks_required_for(profile: &RecoveryProfile, available: usize) -> Result<usize> {
    let j = profile.band(available)?;
    if j == 1 {
        return Ok(1);
    }
    let below: usize = gamma_counts(profile)[..j - 1].iter().sum();
    Ok(below + (profile.threshold(j - 1) - available) * below)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub threshold: usize,
    pub partition: PartitionParams,
    pub task_count: usize,
}

/// Shapes of the (uncoded) matrix pair a task encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskShape {
    pub a: (usize, usize),
    pub b: (usize, usize),
}

/// Everything needed to encode, compute and decode.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemePlan {
    pub n_servers: usize,
    pub profile: RecoveryProfile,
    pub layers: Vec<LayerSpec>,
    pub field: PrimeField,
    /// `alpha_1 .. alpha_{N + R_1 - R_a}`.
    pub points: Vec<u64>,
    /// Per layer, the source of each task (empty for layer 1).
    pub routing: Vec<Vec<TaskSource>>,
    /// `(rows of A, shared dimension, cols of B)`.
    pub dims: (usize, usize, usize),
    /// `dims` rounded up so every routing chain splits evenly.
    pub padded_dims: (usize, usize, usize),
    /// Per layer, per task, the shapes of the matrices being encoded.
    pub task_shapes: Vec<Vec<TaskShape>>,
}

fn round_up(x: usize, multiple: usize) -> usize {
    x.div_ceil(multiple) * multiple
}

/// Validates parameters and builds the full plan.
pub fn build_plan(
    n_servers: usize,
    profile: RecoveryProfile,
    partitions: &[PartitionParams],
    dims: (usize, usize, usize),
    field: PrimeField,
) -> Result<SchemePlan> {
    if partitions.len() != profile.layer_count() {
        return Err(Error::InvalidPartition(format!(
            "{} partitions for {} layers",
            partitions.len(),
            profile.layer_count()
        )));
    }
    for (j, (params, &r)) in partitions.iter().zip(profile.thresholds()).enumerate() {
        if params.recovery_threshold() != r {
            return Err(Error::ThresholdMismatch {
                layer: j + 1,
                threshold: r,
                expected: params.recovery_threshold(),
            });
        }
    }
    if n_servers < profile.top() {
        return Err(Error::InvalidProfile(format!(
            "R_1 = {} exceeds the {n_servers} servers",
            profile.top()
        )));
    }
    if dims.0 == 0 || dims.1 == 0 || dims.2 == 0 {
        return Err(Error::ShapeMismatch(format!(
            "dimensions must be positive, got {dims:?}"
        )));
    }
    let points = field.eval_points(n_servers + profile.top() - profile.bottom())?;

    let row_split: usize = partitions.iter().map(|q| q.m).product();
    let inner_split: usize = partitions.iter().map(|q| q.p).product();
    let col_split: usize = partitions.iter().map(|q| q.n).product();
    let padded_dims = (
        round_up(dims.0, row_split),
        round_up(dims.1, inner_split),
        round_up(dims.2, col_split),
    );

    let gammas = gamma_counts(&profile);
    let routing = enumerate_routing(&profile);
    let mut task_shapes: Vec<Vec<TaskShape>> = vec![vec![TaskShape {
        a: (padded_dims.0, padded_dims.1),
        b: (padded_dims.1, padded_dims.2),
    }]];
    for layer in routing.iter().skip(1) {
        let shapes = layer
            .iter()
            .map(|src| {
                let s = task_shapes[src.source_layer - 1][src.source_task - 1];
                let q = partitions[src.source_layer - 1];
                TaskShape {
                    a: (s.a.0 / q.m, s.a.1 / q.p),
                    b: (s.b.0 / q.p, s.b.1 / q.n),
                }
            })
            .collect();
        task_shapes.push(shapes);
    }

    let layers = partitions
        .iter()
        .zip(profile.thresholds())
        .zip(&gammas)
        .map(|((&partition, &threshold), &task_count)| LayerSpec {
            threshold,
            partition,
            task_count,
        })
        .collect();

    Ok(SchemePlan {
        n_servers,
        profile,
        layers,
        field,
        points,
        routing,
        dims,
        padded_dims,
        task_shapes,
    })
}

/// Like [`build_plan`] with the smallest prime field that has enough points.
pub fn build_plan_auto(
    n_servers: usize,
    profile: RecoveryProfile,
    partitions: &[PartitionParams],
    dims: (usize, usize, usize),
) -> Result<SchemePlan> {
    let needed = n_servers + profile.top().min(n_servers) - profile.bottom().min(n_servers);
    let field = PrimeField::smallest_at_least(needed as u64)?;
    build_plan(n_servers, profile, partitions, dims, field)
}

impl SchemePlan {
    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// Total tasks per server.
    pub fn total_tasks(&self) -> usize {
        self.layers.iter().map(|l| l.task_count).sum()
    }

    /// Evaluation point of server `server` (1-based).
    pub fn server_point(&self, server: usize) -> u64 {
        self.points[server - 1]
    }

    /// Point of the extra parity with index `t` (1-based).
    pub fn parity_point(&self, t: usize) -> u64 {
        self.points[self.n_servers + t - 1]
    }

    /// Number of extra parities each task of `layer` produces: `R_j - R_a`.
    pub fn parity_count(&self, layer: usize) -> usize {
        self.profile.threshold(layer) - self.profile.bottom()
    }

    /// Global task index (1-based) of task `task` in `layer`.
    pub fn task_index(&self, layer: usize, task: usize) -> usize {
        self.layers[..layer - 1]
            .iter()
            .map(|l| l.task_count)
            .sum::<usize>()
            + task
    }

    /// `(layer, task)` of a global 1-based task index.
    pub fn task_position(&self, index: usize) -> Option<(usize, usize)> {
        if index == 0 {
            return None;
        }
        let mut rest = index;
        for (j, layer) in self.layers.iter().enumerate() {
            if rest <= layer.task_count {
                return Some((j + 1, rest));
            }
            rest -= layer.task_count;
        }
        None
    }

    pub fn partition(&self, layer: usize) -> PartitionParams {
        self.layers[layer - 1].partition
    }

    pub fn task_shape(&self, layer: usize, task: usize) -> TaskShape {
        self.task_shapes[layer - 1][task - 1]
    }

    /// Shape of the product a server returns for this task.
    pub fn result_shape(&self, layer: usize, task: usize) -> (usize, usize) {
        let s = self.task_shape(layer, task);
        let q = self.partition(layer);
        (s.a.0 / q.m, s.b.1 / q.n)
    }

    /// Shape of `A^(layer,task) * B^(layer,task)`.
    pub fn product_shape(&self, layer: usize, task: usize) -> (usize, usize) {
        let s = self.task_shape(layer, task);
        (s.a.0, s.b.1)
    }

    /// Scalar multiplications a server spends on one task.
    pub fn task_multiplications(&self, layer: usize, task: usize) -> u64 {
        let s = self.task_shape(layer, task);
        let q = self.partition(layer);
        ((s.a.0 / q.m) * (s.a.1 / q.p) * (s.b.1 / q.n)) as u64
    }

    pub fn tasks_required(&self, available: usize) -> Result<usize> {
        if available > self.n_servers {
            return Err(Error::InvalidArgument(format!(
                "{available} available servers exceeds N = {}",
                self.n_servers
            )));
        }
        tasks_required_for(&self.profile, available)
    }
}

/// One server's share: its coded matrix pairs in task order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerShare {
    pub server_id: usize,
    pub coded_pairs: Vec<(FieldMatrix, FieldMatrix)>,
}

/// Extra parities `(f_J(alpha_{N+t}; .), g_J(alpha_{N+t}; .))` produced
/// while encoding, indexed `[layer-1][task-1][t-1]`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParityStore {
    pub parities: Vec<Vec<Vec<(FieldMatrix, FieldMatrix)>>>,
}

impl ParityStore {
    pub fn get(&self, layer: usize, task: usize, t: usize) -> &(FieldMatrix, FieldMatrix) {
        &self.parities[layer - 1][task - 1][t - 1]
    }
}

/// The product one server computed for one task.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskResult {
    pub server_id: usize,
    pub task_index: usize,
    pub value: FieldMatrix,
}

/// Encodes `A` and `B` into one share per server.
pub fn generate_shares(
    plan: &SchemePlan,
    a: &FieldMatrix,
    b: &FieldMatrix,
) -> Result<(Vec<ServerShare>, ParityStore)> {
    let (lambda, kappa, mu) = plan.dims;
    if a.shape() != (lambda, kappa) || b.shape() != (kappa, mu) {
        return Err(Error::ShapeMismatch(format!(
            "plan expects A {lambda}x{kappa} and B {kappa}x{mu}, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    for m in [a, b] {
        if m.field() != plan.field {
            return Err(Error::FieldMismatch {
                expected: plan.field.modulus(),
                found: m.field().modulus(),
            });
        }
    }
    let (pl, pk, pm) = plan.padded_dims;

    // grids[j][delta] holds the split A^(j,delta) and B^(j,delta)
    let mut grids: Vec<Vec<(BlockGrid, BlockGrid)>> = Vec::with_capacity(plan.layer_count());
    let mut store = ParityStore::default();
    for layer in 1..=plan.layer_count() {
        let q = plan.partition(layer);
        let sources: Vec<(FieldMatrix, FieldMatrix)> = if layer == 1 {
            vec![(a.padded(pl, pk), b.padded(pk, pm))]
        } else {
            plan.routing[layer - 1]
                .iter()
                .map(|src| {
                    store
                        .get(src.source_layer, src.source_task, src.parity_index)
                        .clone()
                })
                .collect()
        };
        let layer_grids: Vec<(BlockGrid, BlockGrid)> = sources
            .iter()
            .map(|(x, y)| Ok((partition(x, q.m, q.p)?, partition(y, q.p, q.n)?)))
            .collect::<Result<_>>()?;
        let parity_points: Vec<u64> = (1..=plan.parity_count(layer))
            .map(|t| plan.parity_point(t))
            .collect();
        let layer_parities = layer_grids
            .par_iter()
            .map(|(ga, gb)| {
                parity_points
                    .iter()
                    .map(|&x| Ok((encode_a(ga, q, x)?, encode_b(gb, q, x)?)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        store.parities.push(layer_parities);
        grids.push(layer_grids);
    }

    let shares = (1..=plan.n_servers)
        .into_par_iter()
        .map(|server| {
            let x = plan.server_point(server);
            let mut coded_pairs = Vec::with_capacity(plan.total_tasks());
            for (j, layer_grids) in grids.iter().enumerate() {
                let q = plan.partition(j + 1);
                for (ga, gb) in layer_grids {
                    coded_pairs.push((encode_a(ga, q, x)?, encode_b(gb, q, x)?));
                }
            }
            Ok(ServerShare {
                server_id: server,
                coded_pairs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((shares, store))
}

/// Computes the first `up_to` tasks of a share. Also returns the number of
/// scalar multiplications a schoolbook product spends on them.
pub fn compute_tasks(share: &ServerShare, up_to: usize) -> Result<(Vec<TaskResult>, u64)> {
    if up_to > share.coded_pairs.len() {
        return Err(Error::InvalidArgument(format!(
            "requested {up_to} tasks, share holds {}",
            share.coded_pairs.len()
        )));
    }
    let mut multiplications = 0u64;
    let mut results = Vec::with_capacity(up_to);
    for (k, (x, y)) in share.coded_pairs[..up_to].iter().enumerate() {
        multiplications += (x.rows() * x.cols() * y.cols()) as u64;
        results.push(TaskResult {
            server_id: share.server_id,
            task_index: k + 1,
            value: x.matmul(y)?,
        });
    }
    Ok((results, multiplications))
}
