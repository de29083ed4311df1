use std::collections::BTreeMap;

use super::aed::AedParams;
use crate::error::{Error, Result};
use crate::feeder::{flat_series, nominal_load_flow, random_loading, Dataset, FeederTopology, Split, HARMONIC_ORDERS};
use crate::numerics::Tensor;

/// Which operating point supplies the flat series of unsensored buses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlatLoading {
    Nominal,
    /// Per-event random loading drawn from this seed.
    Random {
        seed: u64,
    },
}

/// Node features of one event: one row per feeder bus, in topology order.
#[derive(Clone, Debug, PartialEq)]
pub struct EventFeatures {
    pub event_id: u64,
    pub class: u8,
    pub split: Split,
    pub features: Tensor,
}

const ENCODE_BATCH: usize = 64;

fn encode_all(aed: &AedParams, windows: &[Tensor]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(ENCODE_BATCH) {
        let refs: Vec<&Tensor> = chunk.iter().collect();
        let em = aed.encode_batch(&refs)?;
        out.extend((0..chunk.len()).map(|i| em.row_slice(i).to_vec()));
    }
    Ok(out)
}

/// Per-bus feature vectors for every event of the dataset.
///
/// Sensor buses get the embedding of their own window (fundamental, or
/// fundamental ‖ 3rd ‖ 5th with `use_harmonics`); unsensored buses get the
/// embedding of their flat fundamental series with zero harmonic slots.
pub fn embed_dataset(
    aeds: &BTreeMap<u8, AedParams>,
    dataset: &Dataset,
    topology: &FeederTopology,
    use_harmonics: bool,
    loading: FlatLoading,
) -> Result<Vec<EventFeatures>> {
    let orders: &[u8] = if use_harmonics {
        &HARMONIC_ORDERS
    } else {
        &HARMONIC_ORDERS[..1]
    };
    for &h in orders {
        match aeds.get(&h) {
            Some(a) if a.order == h => {}
            Some(a) => {
                return Err(Error::Validation(format!(
                    "autoencoder stored under order {h} was trained for order {}",
                    a.order
                )))
            }
            None => return Err(Error::MissingArtifact(format!("autoencoder for harmonic order {h}"))),
        }
    }
    if dataset.feeder_hash != topology.hash() {
        return Err(Error::Validation("dataset and topology disagree on the feeder".into()));
    }
    let dim = aeds[&1].shape.embed;
    let width = dim * orders.len();
    let n = topology.num_buses();
    let sensors = topology.sensors();

    // Sensor embeddings, order by order, in record/block order.
    let mut sensor_em: Vec<Vec<Vec<f64>>> = Vec::new();
    for (slot, &h) in orders.iter().enumerate() {
        let windows = dataset
            .records
            .iter()
            .flat_map(|r| r.blocks.iter().map(move |b| &b.orders[slot]))
            .map(|w| dataset.norm.normalize(h, w))
            .collect::<Result<Vec<_>>>()?;
        sensor_em.push(encode_all(&aeds[&h], &windows)?);
    }

    let unsensored: Vec<usize> = (0..n).filter(|&b| !topology.is_sensor(b)).collect();
    let flat_windows = |op| -> Result<Vec<Tensor>> {
        unsensored
            .iter()
            .map(|&b| dataset.norm.normalize(1, &flat_series(&op, b, 1, dataset.window)?))
            .collect()
    };
    let nominal = match loading {
        FlatLoading::Nominal => Some(encode_all(&aeds[&1], &flat_windows(nominal_load_flow(topology))?)?),
        FlatLoading::Random { .. } => None,
    };

    let mut out = Vec::with_capacity(dataset.len());
    for (ri, rec) in dataset.records.iter().enumerate() {
        let mut features = Tensor::zeros(&[n, width]);
        let data = features.data_mut();
        for (bi, &bus) in sensors.iter().enumerate() {
            for (slot, ems) in sensor_em.iter().enumerate() {
                let em = &ems[ri * sensors.len() + bi];
                data[bus * width + slot * dim..bus * width + (slot + 1) * dim].copy_from_slice(em);
            }
        }
        let flats = match (&nominal, loading) {
            (Some(f), _) => f.clone(),
            (None, FlatLoading::Random { seed }) => {
                encode_all(&aeds[&1], &flat_windows(random_loading(topology, seed, rec.event_id)?)?)?
            }
            (None, FlatLoading::Nominal) => unreachable!("nominal flats are precomputed"),
        };
        for (&bus, em) in unsensored.iter().zip(&flats) {
            data[bus * width..bus * width + dim].copy_from_slice(em);
        }
        out.push(EventFeatures {
            event_id: rec.event_id,
            class: rec.class,
            split: rec.split,
            features,
        });
    }
    Ok(out)
}
