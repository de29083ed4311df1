use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use super::aed::{AedParams, AedShape};
use crate::error::{Error, Result};
use crate::feeder::{flat_series, nominal_load_flow, order_slot, Dataset, FeederTopology, Split};
use crate::numerics::rng;
use crate::numerics::{AdamConfig, AdamState, Tape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct AedTrainConfig {
    pub shape: AedShape,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    /// Epochs without eval improvement before stopping.
    pub patience: usize,
    /// Sensor windows drawn per epoch (all of them when `None`).
    pub max_windows_per_epoch: Option<usize>,
    /// Eval windows used for early stopping (all of them when `None`).
    pub max_eval_windows: Option<usize>,
}

impl Default for AedTrainConfig {
    fn default() -> Self {
        AedTrainConfig {
            shape: AedShape::standard(),
            epochs: 50,
            batch: 32,
            lr: 1e-3,
            seed: 0,
            patience: 5,
            max_windows_per_epoch: None,
            max_eval_windows: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_mse: f64,
    pub eval_mse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AedTrainReport {
    pub curve: Vec<EpochLoss>,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: usize,
    pub train_event_ids: BTreeSet<u64>,
    pub eval_event_ids: BTreeSet<u64>,
}

/// Normalised windows of one harmonic order.
#[derive(Clone, Debug)]
pub struct WindowPool {
    /// Sensor windows of the train split, then (fundamental only) one flat
    /// window per unsensored bus.
    pub train: Vec<Tensor>,
    pub train_ids: Vec<u64>,
    pub flat: Vec<Tensor>,
    pub eval: Vec<Tensor>,
    pub eval_ids: Vec<u64>,
}

fn split_windows(dataset: &Dataset, split: Split, slot: usize, order: u8) -> Result<(Vec<Tensor>, Vec<u64>)> {
    let mut windows = Vec::new();
    let mut ids = Vec::new();
    for rec in dataset.split(split) {
        for block in &rec.blocks {
            windows.push(dataset.norm.normalize(order, &block.orders[slot])?);
            ids.push(rec.event_id);
        }
    }
    Ok((windows, ids))
}

pub fn window_pool(dataset: &Dataset, topology: &FeederTopology, order: u8) -> Result<WindowPool> {
    let slot = order_slot(order)?;
    if dataset.feeder_hash != topology.hash() {
        return Err(Error::Validation(format!(
            "dataset was generated for feeder {}, not {}",
            dataset.feeder_hash,
            topology.hash()
        )));
    }
    let (train, train_ids) = split_windows(dataset, Split::Train, slot, order)?;
    let (eval, eval_ids) = split_windows(dataset, Split::Eval, slot, order)?;
    if train.is_empty() {
        return Err(Error::Validation(format!(
            "no training windows for harmonic order {order}"
        )));
    }
    let mut flat = Vec::new();
    if order == 1 {
        let op = nominal_load_flow(topology);
        for bus in (0..topology.num_buses()).filter(|&b| !topology.is_sensor(b)) {
            flat.push(dataset.norm.normalize(1, &flat_series(&op, bus, 1, dataset.window)?)?);
        }
    }
    Ok(WindowPool {
        train,
        train_ids,
        flat,
        eval,
        eval_ids,
    })
}

/// Trains one autoencoder on the windows of `order` with Adam and early
/// stopping on eval reconstruction error; returns the best-eval parameters.
pub fn train_aed(
    dataset: &Dataset,
    topology: &FeederTopology,
    order: u8,
    config: &AedTrainConfig,
) -> Result<(AedParams, AedTrainReport)> {
    let pool = window_pool(dataset, topology, order)?;
    train_on_pool(&pool, order, config)
}

pub fn train_on_pool(pool: &WindowPool, order: u8, config: &AedTrainConfig) -> Result<(AedParams, AedTrainReport)> {
    if config.epochs == 0 || config.batch == 0 {
        return Err(Error::contract("epochs and batch must be positive"));
    }
    if pool.train.is_empty() {
        return Err(Error::Validation("empty training pool".into()));
    }
    let mut params = AedParams::init(config.shape, order, config.seed)?;
    let mut adam = AdamState::new(
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
        &params.params,
    );

    let mut eval_idx: Vec<usize> = (0..pool.eval.len()).collect();
    eval_idx.shuffle(&mut rng::stream_indexed(config.seed, "aed-eval", u64::from(order)));
    eval_idx.truncate(config.max_eval_windows.unwrap_or(usize::MAX));
    eval_idx.sort_unstable();
    let eval: Vec<&Tensor> = eval_idx.iter().map(|&i| &pool.eval[i]).collect();

    let mut report = AedTrainReport {
        curve: Vec::new(),
        best_epoch: 0,
        train_event_ids: BTreeSet::new(),
        eval_event_ids: eval_idx.iter().map(|&i| pool.eval_ids[i]).collect(),
    };
    let mut best: Option<(f64, AedParams)> = None;
    let mut stale = 0;
    let n_sensor = pool.train.len();
    for epoch in 1..=config.epochs {
        let mut r = rng::stream_indexed(config.seed, &format!("aed-epoch-{order}"), epoch as u64);
        let mut idx: Vec<usize> = (0..n_sensor).collect();
        idx.shuffle(&mut r);
        idx.truncate(config.max_windows_per_epoch.unwrap_or(usize::MAX));
        report.train_event_ids.extend(idx.iter().map(|&i| pool.train_ids[i]));
        idx.extend(n_sensor..n_sensor + pool.flat.len());
        idx.shuffle(&mut r);

        let mut total = 0.0;
        for chunk in idx.chunks(config.batch) {
            let windows: Vec<&Tensor> = chunk
                .iter()
                .map(|&i| {
                    if i < n_sensor {
                        &pool.train[i]
                    } else {
                        &pool.flat[i - n_sensor]
                    }
                })
                .collect();
            let x = params.batch(&windows)?;
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape, true);
            let xv = tape.constant(x);
            let loss = bound.loss(&mut tape, xv, windows.len())?;
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                return Err(Error::Numeric(format!("autoencoder loss diverged at epoch {epoch}")));
            }
            total += value * windows.len() as f64;
            let grads = tape.backward(loss)?;
            adam.step(&mut params.params, &grads)?;
        }
        let train_mse = total / idx.len() as f64;
        let eval_mse = if eval.is_empty() {
            train_mse
        } else {
            params.reconstruction_mse(&eval, 64)?
        };
        report.curve.push(EpochLoss {
            epoch,
            train_mse,
            eval_mse,
        });
        if best.as_ref().is_none_or(|(b, _)| eval_mse < *b) {
            best = Some((eval_mse, params.clone()));
            report.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    let (_, params) = best.expect("at least one epoch ran");
    Ok((params, report))
}
