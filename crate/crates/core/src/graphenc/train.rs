use std::collections::BTreeSet;
use std::rc::Rc;

use rand::seq::SliceRandom;

use super::adjacency::{normalize_adjacency, sample_negative_tree};
use super::model::{js_mi_loss, Fusion, GraphMode, GraphModel, GraphShape};
use crate::error::{Error, Result};
use crate::feeder::Split;
use crate::numerics::rng;
use crate::numerics::{AdamConfig, AdamState, Tape, Tensor};
use crate::temporal::EventFeatures;

#[derive(Clone, Debug, PartialEq)]
pub struct GraphTrainConfig {
    pub hidden1: usize,
    pub hidden2: usize,
    pub disc_hidden: usize,
    pub fusion: Fusion,
    pub mode: GraphMode,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub patience: usize,
    pub seed: u64,
    /// Draw each event's negative tree once instead of every epoch.
    pub fixed_negatives: bool,
}

impl Default for GraphTrainConfig {
    fn default() -> Self {
        GraphTrainConfig {
            hidden1: 128,
            hidden2: 64,
            disc_hidden: 32,
            fusion: Fusion::Product,
            mode: GraphMode::NodeGraph,
            epochs: 100,
            batch: 32,
            lr: 1e-3,
            patience: 5,
            seed: 0,
            fixed_negatives: false,
        }
    }
}

impl GraphTrainConfig {
    pub fn shape(&self, input: usize) -> GraphShape {
        GraphShape {
            input,
            hidden1: self.hidden1,
            hidden2: self.hidden2,
            disc_hidden: self.disc_hidden,
            fusion: self.fusion,
            mode: self.mode,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphEpoch {
    pub epoch: usize,
    /// Mean Î over the epoch's training batches.
    pub train_mi: f64,
    pub eval_mi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphTrainReport {
    pub curve: Vec<GraphEpoch>,
    pub best_epoch: usize,
    pub train_event_ids: BTreeSet<u64>,
    pub eval_event_ids: BTreeSet<u64>,
}

fn check_features(features: &[&EventFeatures], n: usize) -> Result<usize> {
    let first = features
        .first()
        .ok_or_else(|| Error::Validation("no events to encode".into()))?;
    let f = first.features.cols();
    for e in features {
        if e.features.shape() != [n, f] {
            return Err(Error::Validation(format!(
                "event {} has node features {:?}, expected [{n}, {f}]",
                e.event_id,
                e.features.shape()
            )));
        }
    }
    Ok(f)
}

fn stack(events: &[&EventFeatures]) -> Result<Tensor> {
    let (n, f) = (events[0].features.rows(), events[0].features.cols());
    let data = events.iter().flat_map(|e| e.features.data().iter().copied()).collect();
    Tensor::new(vec![events.len() * n, f], data)
}

/// Normalised random-tree adjacencies for a batch; the tree of an event is
/// a pure function of (seed, stream name, event id).
fn negatives(events: &[&EventFeatures], n: usize, seed: u64, stream: &str) -> Result<Vec<Tensor>> {
    events
        .iter()
        .map(|e| {
            normalize_adjacency(&sample_negative_tree(
                n,
                &mut rng::stream_indexed(seed, stream, e.event_id),
            )?)
        })
        .collect()
}

/// Positive and negative logits of a set of events under fixed parameters.
pub fn event_scores(
    model: &GraphModel,
    events: &[&EventFeatures],
    adjacency: &Tensor,
    seed: u64,
    stream: &str,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = adjacency.rows();
    check_features(events, n)?;
    let pos_adj = Rc::new(vec![normalize_adjacency(adjacency)?]);
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for chunk in events.chunks(64) {
        let mut tape = Tape::new();
        let b = model.bind(&mut tape, false);
        let x = tape.constant(stack(chunk)?);
        let neg_adj = Rc::new(negatives(chunk, n, seed, stream)?);
        let (p, q) = b.batch_scores(&mut tape, pos_adj.clone(), neg_adj, x, n)?;
        pos.extend_from_slice(tape.value(p).data());
        neg.extend_from_slice(tape.value(q).data());
    }
    Ok((pos, neg))
}

/// Fraction of positive logits above zero and negative logits below.
pub fn discriminator_accuracy(
    model: &GraphModel,
    events: &[&EventFeatures],
    adjacency: &Tensor,
    seed: u64,
) -> Result<f64> {
    let (pos, neg) = event_scores(model, events, adjacency, seed, "negative-holdout")?;
    let right = pos.iter().filter(|&&s| s > 0.0).count() + neg.iter().filter(|&&s| s < 0.0).count();
    Ok(right as f64 / (pos.len() + neg.len()) as f64)
}

/// Trains encoder and discriminator jointly on `-Î` with Adam, stopping
/// early on the eval-split estimate; returns the best-eval parameters.
pub fn train_graph_encoder(
    features: &[EventFeatures],
    adjacency: &Tensor,
    config: &GraphTrainConfig,
) -> Result<(GraphModel, GraphTrainReport)> {
    let n = adjacency.rows();
    let train: Vec<&EventFeatures> = features.iter().filter(|e| e.split == Split::Train).collect();
    let eval: Vec<&EventFeatures> = features.iter().filter(|e| e.split == Split::Eval).collect();
    if train.is_empty() {
        return Err(Error::Validation("no training events for the graph encoder".into()));
    }
    if config.epochs == 0 || config.batch == 0 {
        return Err(Error::contract("epochs and batch must be positive"));
    }
    let f = check_features(&train, n)?;
    let pos_adj = Rc::new(vec![normalize_adjacency(adjacency)?]);
    let mut model = GraphModel::init(config.shape(f), config.seed)?;
    let mut adam = AdamState::new(
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
        &model.params,
    );
    let mut report = GraphTrainReport {
        curve: Vec::new(),
        best_epoch: 0,
        train_event_ids: train.iter().map(|e| e.event_id).collect(),
        eval_event_ids: eval.iter().map(|e| e.event_id).collect(),
    };
    let mut best: Option<(f64, GraphModel)> = None;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng::stream_indexed(config.seed, "graph-epoch", epoch as u64));
        let stream = if config.fixed_negatives {
            "negative-tree".to_string()
        } else {
            format!("negative-tree-{epoch}")
        };
        let mut total = 0.0;
        for chunk in order.chunks(config.batch) {
            let events: Vec<&EventFeatures> = chunk.iter().map(|&i| train[i]).collect();
            let mut tape = Tape::new();
            let b = model.bind(&mut tape, true);
            let x = tape.constant(stack(&events)?);
            let neg_adj = Rc::new(negatives(&events, n, config.seed, &stream)?);
            let (pos, neg) = b.batch_scores(&mut tape, pos_adj.clone(), neg_adj, x, n)?;
            let loss = b.neg_mi(&mut tape, pos, neg)?;
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::Numeric(format!("graph loss diverged at epoch {epoch}")));
            }
            total -= value * events.len() as f64;
            let grads = tape.backward(loss)?;
            adam.step(&mut model.params, &grads)?;
        }
        let train_mi = total / train.len() as f64;
        let eval_mi = if eval.is_empty() {
            train_mi
        } else {
            let (p, q) = event_scores(&model, &eval, adjacency, config.seed, "negative-eval")?;
            js_mi_loss(&p, &q)?
        };
        report.curve.push(GraphEpoch {
            epoch,
            train_mi,
            eval_mi,
        });
        if best.as_ref().is_none_or(|(b, _)| eval_mi > *b) {
            best = Some((eval_mi, model.clone()));
            report.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    let (_, model) = best.expect("at least one epoch ran");
    Ok((model, report))
}

/// Graph-level representation of every event on the actual topology.
pub fn encode_events(
    model: &GraphModel,
    features: &[EventFeatures],
    adjacency: &Tensor,
    mode: GraphMode,
) -> Result<Vec<Vec<f64>>> {
    if model.shape.mode != mode {
        return Err(Error::Validation(format!(
            "model was trained in {} mode, {} requested",
            model.shape.mode.as_str(),
            mode.as_str()
        )));
    }
    let n = adjacency.rows();
    let refs: Vec<&EventFeatures> = features.iter().collect();
    check_features(&refs, n)?;
    let adj = Rc::new(vec![normalize_adjacency(adjacency)?]);
    let mut out = Vec::with_capacity(features.len());
    for chunk in refs.chunks(64) {
        let mut tape = Tape::new();
        let b = model.bind(&mut tape, false);
        let x = tape.constant(stack(chunk)?);
        let (_, g) = b.encode(&mut tape, adj.clone(), x, n)?;
        let g = tape.value(g);
        out.extend((0..chunk.len()).map(|i| g.row_slice(i).to_vec()));
    }
    Ok(out)
}
