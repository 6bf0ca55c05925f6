//! Synchronous multi-sensor filtering rounds.
//!
//! One [`step`] runs every node's local predict/update, then `L` consensus
//! iterations in which each node fuses the current beliefs of its
//! neighborhood (itself included) and adopts the result. Beliefs exchanged in
//! an iteration are snapshots taken before any node overwrites its own.

use std::collections::HashMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::densities::{Gaussian, Moments, StudentT};
use crate::error::{Error, Result};
use crate::filter::{
    kf_predict, kf_update, stkf_predict, stkf_update, MeasurementModel, ProcessModel,
};
use crate::fusion::{
    aa_fuse, am_stack, ci_fuse, ci_fuse_t, ci_weights, gaussian_aa_fuse, FusionKind, FusionMethod,
    WeightVector,
};
use crate::linalg::check_dim;

/// A node's current estimate.
#[derive(Debug, Clone, PartialEq)]
pub enum Belief {
    T(StudentT),
    G(Gaussian),
}

impl Belief {
    pub fn mean(&self) -> &DVector<f64> {
        match self {
            Belief::T(t) => t.mean(),
            Belief::G(g) => g.mean(),
        }
    }

    pub fn covariance(&self) -> nalgebra::DMatrix<f64> {
        match self {
            Belief::T(t) => t.covariance(),
            Belief::G(g) => g.covariance(),
        }
    }

    pub fn dof(&self) -> Option<f64> {
        match self {
            Belief::T(t) => Some(t.dof()),
            Belief::G(_) => None,
        }
    }

    pub fn kind(&self) -> FilterKind {
        match self {
            Belief::T(_) => FilterKind::StKF,
            Belief::G(_) => FilterKind::KF,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FilterKind {
    StKF,
    KF,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FusionConfig {
    pub method: FusionMethod,
    pub filter_kind: FilterKind,
}

#[derive(Debug, Clone)]
pub struct SensorNode {
    pub id: usize,
    pub belief: Belief,
    pub measurement_model: MeasurementModel,
    pub process_model: ProcessModel,
    /// Set when the last local update failed and the prediction was kept.
    pub faulted: bool,
    /// Weights used by the node's most recent fusion, in neighbor order.
    pub last_weights: Option<WeightVector>,
}

impl SensorNode {
    pub fn new(
        id: usize,
        belief: Belief,
        measurement_model: MeasurementModel,
        process_model: ProcessModel,
    ) -> Result<Self> {
        check_dim("sensor node belief", process_model.state_dim(), belief.mean().len())?;
        check_dim("sensor node measurement model", process_model.state_dim(), measurement_model.state_dim())?;
        Ok(Self {
            id,
            belief,
            measurement_model,
            process_model,
            faulted: false,
            last_weights: None,
        })
    }
}

/// Communication topology. Every node always hears itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorGraph {
    adjacency: Vec<Vec<bool>>,
    consensus_iterations: usize,
}

impl SensorGraph {
    pub fn new(adjacency: Vec<Vec<bool>>, consensus_iterations: usize) -> Result<Self> {
        let s = adjacency.len();
        if s == 0 {
            return Err(Error::Empty("sensor graph"));
        }
        if consensus_iterations == 0 {
            return Err(Error::InvalidParameter("consensus iterations must be at least 1".into()));
        }
        for (i, row) in adjacency.iter().enumerate() {
            check_dim("adjacency row", s, row.len())?;
            for (j, &edge) in row.iter().enumerate() {
                if edge != adjacency[j][i] {
                    return Err(Error::InvalidParameter(format!(
                        "adjacency is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self {
            adjacency,
            consensus_iterations,
        })
    }

    pub fn complete(sensors: usize, consensus_iterations: usize) -> Result<Self> {
        Self::new(vec![vec![true; sensors]; sensors], consensus_iterations)
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn consensus_iterations(&self) -> usize {
        self.consensus_iterations
    }

    /// Neighborhood of `node` in ascending order, including `node` itself.
    pub fn neighborhood(&self, node: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&j| j == node || self.adjacency[node][j])
            .collect()
    }
}

fn local_filter(node: &SensorNode, z: &DVector<f64>) -> Result<(Belief, bool)> {
    match &node.belief {
        Belief::T(t) => {
            let pred = stkf_predict(t, &node.process_model)?;
            match stkf_update(&pred, &node.measurement_model, z) {
                Ok(post) => Ok((Belief::T(post), false)),
                Err(Error::NotPositiveDefinite { .. }) => Ok((Belief::T(pred), true)),
                Err(e) => Err(e),
            }
        }
        Belief::G(g) => {
            let pred = kf_predict(g, &node.process_model)?;
            match kf_update(&pred, &node.measurement_model, z) {
                Ok(post) => Ok((Belief::G(post), false)),
                Err(Error::NotPositiveDefinite { .. }) => Ok((Belief::G(pred), true)),
                Err(e) => Err(e),
            }
        }
    }
}

/// Fuses a neighborhood's beliefs, which must all be of one filter kind.
pub fn fuse_beliefs(beliefs: &[&Belief], method: FusionMethod) -> Result<(Belief, WeightVector)> {
    let first = beliefs.first().ok_or(Error::Empty("neighborhood"))?;
    match first {
        Belief::T(_) => {
            let ts = beliefs
                .iter()
                .map(|b| match b {
                    Belief::T(t) => Ok(t.clone()),
                    Belief::G(_) => Err(Error::InvalidParameter("mixed belief kinds".into())),
                })
                .collect::<Result<Vec<_>>>()?;
            match method.kind {
                FusionKind::Ci => {
                    let w = ci_weights(&ts)?;
                    Ok((Belief::T(ci_fuse_t(&ts, &w, method.dof_rule)?), w))
                }
                _ => {
                    let fused = aa_fuse(&ts, method)?;
                    Ok((Belief::T(fused.density), fused.weights))
                }
            }
        }
        Belief::G(_) => {
            let gs = beliefs
                .iter()
                .map(|b| match b {
                    Belief::G(g) => Ok(g.clone()),
                    Belief::T(_) => Err(Error::InvalidParameter("mixed belief kinds".into())),
                })
                .collect::<Result<Vec<_>>>()?;
            match method.kind {
                FusionKind::Ci => {
                    let w = ci_weights(&gs)?;
                    Ok((Belief::G(ci_fuse(&gs, &w)?), w))
                }
                kind => {
                    let fused = gaussian_aa_fuse(&gs, kind)?;
                    Ok((Belief::G(fused.density), fused.weights))
                }
            }
        }
    }
}

fn central_step(nodes: &[SensorNode], measurements: &[DVector<f64>]) -> Result<Vec<SensorNode>> {
    let models: Vec<MeasurementModel> = nodes.iter().map(|n| n.measurement_model.clone()).collect();
    let stacked = am_stack(&models)?;
    let total = measurements.iter().map(|z| z.len()).sum();
    let z = DVector::from_iterator(total, measurements.iter().flat_map(|z| z.iter().cloned()));
    let hub = SensorNode {
        measurement_model: stacked,
        ..nodes[0].clone()
    };
    let (belief, faulted) = local_filter(&hub, &z)?;
    Ok(nodes
        .iter()
        .map(|n| SensorNode {
            belief: belief.clone(),
            faulted,
            last_weights: None,
            ..n.clone()
        })
        .collect())
}

/// One synchronous filtering round over all nodes.
///
/// Augmented-measurement fusion runs a single central filter on the stacked
/// model, seeded from node 0's belief, and hands the result to every node.
pub fn step(
    nodes: &[SensorNode],
    graph: &SensorGraph,
    cfg: &FusionConfig,
    measurements: &[DVector<f64>],
) -> Result<Vec<SensorNode>> {
    if nodes.is_empty() {
        return Err(Error::Empty("sensor nodes"));
    }
    check_dim("sensor graph", nodes.len(), graph.len())?;
    check_dim("measurements per step", nodes.len(), measurements.len())?;
    if nodes.iter().any(|n| n.belief.kind() != cfg.filter_kind) {
        return Err(Error::InvalidParameter(
            "node beliefs do not match the configured filter kind".into(),
        ));
    }

    if cfg.method.kind == FusionKind::Am {
        return central_step(nodes, measurements);
    }

    let mut out = nodes
        .iter()
        .zip(measurements)
        .map(|(node, z)| {
            let (belief, faulted) = local_filter(node, z)?;
            Ok(SensorNode {
                belief,
                faulted,
                last_weights: None,
                ..node.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;

    if nodes.len() == 1 {
        return Ok(out);
    }

    for _ in 0..graph.consensus_iterations() {
        let snapshot: Vec<Belief> = out.iter().map(|n| n.belief.clone()).collect();
        // Nodes with the same neighborhood fuse the same inputs.
        let mut fused: HashMap<Vec<usize>, (Belief, WeightVector)> = HashMap::new();
        for (s, node) in out.iter_mut().enumerate() {
            let hood = graph.neighborhood(s);
            if !fused.contains_key(&hood) {
                let inputs: Vec<&Belief> = hood.iter().map(|&j| &snapshot[j]).collect();
                let result = fuse_beliefs(&inputs, cfg.method)?;
                fused.insert(hood.clone(), result);
            }
            let (belief, weights) = fused[&hood].clone();
            node.belief = belief;
            node.last_weights = Some(weights);
        }
    }
    Ok(out)
}

/// Per-node, per-time record of a filtering run.
#[derive(Debug, Clone)]
pub struct SequenceHistory {
    /// `beliefs[k][s]`: node `s` after step `k`.
    pub beliefs: Vec<Vec<Belief>>,
    pub weights: Vec<Vec<Option<WeightVector>>>,
    pub faults: Vec<Vec<bool>>,
}

/// Folds [`step`] over a measurement sequence (`measurements[k][s]`).
pub fn run_sequence(
    nodes: &[SensorNode],
    graph: &SensorGraph,
    cfg: &FusionConfig,
    measurements: &[Vec<DVector<f64>>],
) -> Result<SequenceHistory> {
    if measurements.is_empty() {
        return Err(Error::Empty("measurement sequence"));
    }
    let mut current = nodes.to_vec();
    let mut history = SequenceHistory {
        beliefs: Vec::with_capacity(measurements.len()),
        weights: Vec::with_capacity(measurements.len()),
        faults: Vec::with_capacity(measurements.len()),
    };
    for z in measurements {
        current = step(&current, graph, cfg, z)?;
        history.beliefs.push(current.iter().map(|n| n.belief.clone()).collect());
        history.weights.push(current.iter().map(|n| n.last_weights.clone()).collect());
        history.faults.push(current.iter().map(|n| n.faulted).collect());
    }
    Ok(history)
}
