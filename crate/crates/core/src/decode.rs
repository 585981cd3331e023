//! Recursive decoder.
//!
//! Layers are decoded top-down. Each decoded task of layer `l >= 2` is the
//! product of an extra parity pair, which equals its source task polynomial
//! evaluated at `alpha_{N+t}`. That value becomes one more evaluation for
//! the source layer, until layer 1 has enough points to recover `A*B`.

use std::collections::BTreeSet;

use crate::construct::{SchemePlan, TaskResult};
use crate::epcode::ep_decode;
use crate::error::{Error, Result};
use crate::gf::FieldMatrix;

/// Product together with some bookkeeping about how it was obtained.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodeOutcome {
    pub product: FieldMatrix,
    /// Deepest layer whose tasks were needed.
    pub deepest_layer: usize,
    /// Tasks each available server had to supply.
    pub tasks_per_server: usize,
}

/// Recovers `A*B` (cropped to the original shape) from the results of the
/// `available` servers.
pub fn decode(
    plan: &SchemePlan,
    results: &[TaskResult],
    available: &[usize],
) -> Result<FieldMatrix> {
    decode_detailed(plan, results, available).map(|o| o.product)
}

pub fn decode_detailed(
    plan: &SchemePlan,
    results: &[TaskResult],
    available: &[usize],
) -> Result<DecodeOutcome> {
    let servers: BTreeSet<usize> = available.iter().copied().collect();
    if servers.len() != available.len() {
        return Err(Error::InvalidArgument(
            "available servers contain duplicates".into(),
        ));
    }
    if let Some(&bad) = servers.iter().find(|&&s| s == 0 || s > plan.n_servers) {
        return Err(Error::UnknownServer(bad));
    }
    let required = plan.tasks_required(servers.len())?;
    let deepest_layer = plan.profile.band(servers.len())?;
    for &server in &servers {
        let have: BTreeSet<usize> = results
            .iter()
            .filter(|r| r.server_id == server)
            .map(|r| r.task_index)
            .collect();
        if let Some(task) = (1..=required).find(|k| !have.contains(k)) {
            return Err(Error::MissingTask { server, task });
        }
    }
    let used: Vec<TaskResult> = results
        .iter()
        .filter(|r| servers.contains(&r.server_id))
        .cloned()
        .collect();
    let product = decode_with_tasks(plan, &used)?;
    Ok(DecodeOutcome {
        product,
        deepest_layer,
        tasks_per_server: required,
    })
}

/// Decodes from whatever task results are present, without assuming any
/// per-server task count. Tasks of layers `>= 2` with too few evaluations
/// are skipped; layer 1 failing is reported as
/// [`Error::InsufficientEvaluations`].
pub fn decode_with_tasks(plan: &SchemePlan, results: &[TaskResult]) -> Result<FieldMatrix> {
    let mut evals: Vec<Vec<Vec<(u64, FieldMatrix)>>> = plan
        .layers
        .iter()
        .map(|l| vec![Vec::new(); l.task_count])
        .collect();
    for r in results {
        if r.server_id == 0 || r.server_id > plan.n_servers {
            return Err(Error::UnknownServer(r.server_id));
        }
        let (layer, task) = plan.task_position(r.task_index).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "task index {} outside 1..={}",
                r.task_index,
                plan.total_tasks()
            ))
        })?;
        if r.value.field() != plan.field {
            return Err(Error::FieldMismatch {
                expected: plan.field.modulus(),
                found: r.value.field().modulus(),
            });
        }
        let expected = plan.result_shape(layer, task);
        if r.value.shape() != expected {
            return Err(Error::ShapeMismatch(format!(
                "server {} task {}: result is {:?}, expected {expected:?}",
                r.server_id,
                r.task_index,
                r.value.shape()
            )));
        }
        evals[layer - 1][task - 1].push((plan.server_point(r.server_id), r.value.clone()));
    }

    for layer in (2..=plan.layer_count()).rev() {
        let need = plan.profile.threshold(layer);
        let params = plan.partition(layer);
        let (upper, lower) = evals.split_at_mut(layer - 1);
        for (task, samples) in lower[0].iter().enumerate() {
            if samples.len() < need {
                continue;
            }
            let value = ep_decode(samples, params, plan.product_shape(layer, task + 1))?;
            let src = plan.routing[layer - 1][task];
            let point = plan.parity_point(src.parity_index);
            upper[src.source_layer - 1][src.source_task - 1].push((point, value));
        }
    }

    let samples = &evals[0][0];
    let need = plan.profile.top();
    if samples.len() < need {
        return Err(Error::InsufficientEvaluations {
            layer: 1,
            task: 1,
            have: samples.len(),
            need,
        });
    }
    ep_decode(samples, plan.partition(1), (plan.dims.0, plan.dims.2))
}

/// Parity points each lower-layer task gains when `available` servers
/// respond, indexed `[layer-1][task-1]`.
pub fn extra_evaluation_ledger(plan: &SchemePlan, available: usize) -> Result<Vec<Vec<Vec<u64>>>> {
    let required = plan.tasks_required(available)?;
    let mut ledger: Vec<Vec<Vec<u64>>> = plan
        .layers
        .iter()
        .map(|l| vec![Vec::new(); l.task_count])
        .collect();
    for k in 1..=required {
        let (layer, task) = plan.task_position(k).expect("within total tasks");
        if layer == 1 {
            continue;
        }
        let src = plan.routing[layer - 1][task - 1];
        ledger[src.source_layer - 1][src.source_task - 1].push(plan.parity_point(src.parity_index));
    }
    for per_task in ledger.iter_mut() {
        for points in per_task.iter_mut() {
            points.sort_unstable();
        }
    }
    Ok(ledger)
}
