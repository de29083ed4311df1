use super::events::{
    augment, order_slot, sample_spec, synth_event, EventRecord, GeneratorConfig, Split, CHANNELS, NUM_CLASSES,
};
use super::{nominal_load_flow, FeederTopology, OperatingPoint};
use crate::error::{Error, Result};
use crate::numerics::rng::{self, Rng};
use crate::numerics::Tensor;
use rand::Rng as _;

/// Events per class in each split.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitCounts {
    pub train: usize,
    pub eval: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Eval => self.eval,
            Split::Test => self.test,
        }
    }
}

/// Per-order, per-channel z-score statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mean: [[f64; CHANNELS]; 3],
    pub std: [[f64; CHANNELS]; 3],
}

impl NormStats {
    pub fn identity() -> Self {
        NormStats {
            mean: [[0.0; CHANNELS]; 3],
            std: [[1.0; CHANNELS]; 3],
        }
    }

    /// Statistics over every row of every sensor window in `records`.
    /// Channels with zero spread get std 1.
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a EventRecord>) -> Self {
        let mut sum = [[0.0; CHANNELS]; 3];
        let mut sq = [[0.0; CHANNELS]; 3];
        let mut n = 0usize;
        for rec in records {
            for block in &rec.blocks {
                n += block.orders[0].rows();
                for (slot, w) in block.orders.iter().enumerate() {
                    for row in w.data().chunks(CHANNELS) {
                        for (c, &v) in row.iter().enumerate() {
                            sum[slot][c] += v;
                            sq[slot][c] += v * v;
                        }
                    }
                }
            }
        }
        let mut stats = NormStats::identity();
        if n == 0 {
            return stats;
        }
        let n = n as f64;
        for slot in 0..3 {
            for c in 0..CHANNELS {
                let mean = sum[slot][c] / n;
                let var = (sq[slot][c] / n - mean * mean).max(0.0);
                stats.mean[slot][c] = mean;
                stats.std[slot][c] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
            }
        }
        stats
    }

    pub fn normalize(&self, order: u8, window: &Tensor) -> Result<Tensor> {
        let slot = order_slot(order)?;
        if window.rank() != 2 || window.cols() != CHANNELS {
            return Err(Error::Shape {
                op: "normalize",
                left: window.shape().to_vec(),
                right: vec![0, CHANNELS],
            });
        }
        let (mean, std) = (&self.mean[slot], &self.std[slot]);
        let mut out = window.clone();
        for row in out.data_mut().chunks_mut(CHANNELS) {
            for c in 0..CHANNELS {
                row[c] = (row[c] - mean[c]) / std[c];
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub feeder_hash: String,
    pub window: usize,
    pub sensors: Vec<String>,
    pub records: Vec<EventRecord>,
    pub norm: NormStats,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &EventRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn count(&self, split: Split, class: u8) -> usize {
        self.split(split).filter(|r| r.class == class).count()
    }

    /// Copy keeping only the sensors of `topology`, which must be a subset
    /// of this dataset's sensors on the same feeder. Normalisation is
    /// recomputed from the kept train windows.
    pub fn restrict_sensors(&self, topology: &FeederTopology) -> Result<Dataset> {
        let keep = topology.sensor_labels();
        if let Some(b) = keep.iter().find(|b| !self.sensors.contains(b)) {
            return Err(Error::Validation(format!("bus {b} is not a sensor of this dataset")));
        }
        let records: Vec<EventRecord> = self
            .records
            .iter()
            .map(|r| EventRecord {
                blocks: keep
                    .iter()
                    .map(|b| r.blocks.iter().find(|w| &w.bus == b).expect("checked above").clone())
                    .collect(),
                ..r.clone()
            })
            .collect();
        let norm = NormStats::from_records(records.iter().filter(|r| r.split == Split::Train));
        let d = Dataset {
            feeder_hash: topology.hash(),
            window: self.window,
            sensors: keep,
            records,
            norm,
        };
        d.validate()?;
        Ok(d)
    }

    /// Checks record shapes, sensor coverage and split/class invariants.
    pub fn validate(&self) -> Result<()> {
        let mut ids = std::collections::BTreeSet::new();
        for rec in &self.records {
            if !ids.insert(rec.event_id) {
                return Err(Error::Schema {
                    event_id: rec.event_id,
                    msg: "duplicate event id".into(),
                });
            }
            if !(1..=NUM_CLASSES).contains(&rec.class) {
                return Err(Error::Schema {
                    event_id: rec.event_id,
                    msg: format!("class {} outside 1..=9", rec.class),
                });
            }
            let buses: Vec<&str> = rec.blocks.iter().map(|b| b.bus.as_str()).collect();
            if buses != self.sensors.iter().map(String::as_str).collect::<Vec<_>>() {
                return Err(Error::Schema {
                    event_id: rec.event_id,
                    msg: format!("sensor blocks {buses:?} do not match {:?}", self.sensors),
                });
            }
            for block in &rec.blocks {
                for w in &block.orders {
                    if w.shape() != [self.window, CHANNELS] || !w.is_finite() {
                        return Err(Error::Schema {
                            event_id: rec.event_id,
                            msg: format!("bad window at bus {}", block.bus),
                        });
                    }
                }
            }
        }
        for split in Split::ALL {
            for class in 1..=NUM_CLASSES {
                if self.count(split, class) == 0 {
                    return Err(Error::Validation(format!(
                        "class {class} missing from {} split",
                        split.as_str()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Draws the randomized per-event loading used by the RL ablation: every
/// bus load scaled by an independent factor in [0.5, 1.5].
pub fn random_loading(topology: &FeederTopology, seed: u64, event_id: u64) -> Result<OperatingPoint> {
    let mut r: Rng = rng::stream_indexed(seed, "random-loading", event_id);
    let loads = topology
        .loads()
        .iter()
        .map(|&(p, q)| {
            let f = r.random_range(0.5..=1.5);
            (p * f, q * f)
        })
        .collect();
    Ok(nominal_load_flow(&topology.with_loads(loads)?))
}

/// Generates a labelled, augmented dataset. Event ids run split by split
/// (train, eval, test); each event has its own random stream.
pub fn generate_dataset(
    topology: &FeederTopology,
    counts: SplitCounts,
    seed: u64,
    config: &GeneratorConfig,
) -> Result<Dataset> {
    for split in Split::ALL {
        if counts.get(split) == 0 {
            return Err(Error::Validation(format!(
                "need at least one event per class in the {} split",
                split.as_str()
            )));
        }
    }
    let classes: Vec<u8> = config.catalogue.iter().map(|p| p.class).collect();
    for class in 1..=NUM_CLASSES {
        if classes.iter().filter(|&&c| c == class).count() != 1 {
            return Err(Error::Validation(format!(
                "catalogue must list class {class} exactly once"
            )));
        }
    }
    let op = nominal_load_flow(topology);
    let mut records = Vec::new();
    let mut event_id = 0u64;
    for split in Split::ALL {
        for _ in 0..counts.get(split) {
            for profile in &config.catalogue {
                let mut r = rng::stream_indexed(seed, "event", event_id);
                let spec = sample_spec(profile, topology, config.window, &mut r)?;
                let raw = synth_event(topology, &op, &spec, config, &mut r)?;
                let mut rec = augment(&raw, config.shift_range, config.augment_noise, &mut r)?;
                rec.event_id = event_id;
                rec.split = split;
                records.push(rec);
                event_id += 1;
            }
        }
    }
    let norm = NormStats::from_records(records.iter().filter(|r| r.split == Split::Train));
    let dataset = Dataset {
        feeder_hash: topology.hash(),
        window: config.window,
        sensors: topology.sensor_labels(),
        records,
        norm,
    };
    dataset.validate()?;
    Ok(dataset)
}
