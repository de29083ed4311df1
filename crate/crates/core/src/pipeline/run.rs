use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::rc::Rc;

use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::variant::Variant;
use crate::checkpoint::Checkpoint;
use crate::cluster::{gmm_fit, pca_project, projection_csv, ClusterReport, GmmConfig};
use crate::error::{Error, Result};
use crate::feeder::{
    flat_series, generate_dataset, nominal_load_flow, order_slot, Dataset, FeederTopology, Split, HARMONIC_ORDERS,
};
use crate::graphenc::{encode_events, train_graph_encoder, GraphModel, GraphTrainReport};
use crate::numerics::Tensor;
use crate::temporal::{embed_dataset, train_aed, AedParams, AedTrainReport, EventFeatures, FlatLoading};

pub type AedSet = BTreeMap<u8, AedParams>;

/// Trained autoencoders of one seed, the train ids they consumed, and the
/// nominal-loading node features already computed with them.
pub struct Encoders {
    pub aeds: AedSet,
    pub audits: Vec<StageAudit>,
    cache: RefCell<BTreeMap<(String, bool), Rc<Vec<EventFeatures>>>>,
}

impl Encoders {
    pub fn new(aeds: AedSet, audits: Vec<StageAudit>) -> Self {
        Encoders {
            aeds,
            audits,
            cache: RefCell::new(BTreeMap::new()),
        }
    }

    /// Node features of every bus under nominal loading, computed once per
    /// feeder and harmonic mode.
    pub fn nominal(
        &self,
        topology: &FeederTopology,
        dataset: &Dataset,
        use_harmonics: bool,
    ) -> Result<Rc<Vec<EventFeatures>>> {
        let key = (dataset.feeder_hash.clone(), use_harmonics);
        if let Some(f) = self.cache.borrow().get(&key) {
            return Ok(f.clone());
        }
        let f = Rc::new(embed_dataset(
            &self.aeds,
            dataset,
            topology,
            use_harmonics,
            FlatLoading::Nominal,
        )?);
        self.cache.borrow_mut().insert(key, f.clone());
        Ok(f)
    }
}

pub fn generate(config: &RunConfig, seed: u64) -> Result<(FeederTopology, Dataset)> {
    let topology = config.load_topology()?;
    let dataset = generate_dataset(&topology, config.counts, seed, &config.generator())?;
    Ok((topology, dataset))
}

/// Harmonic orders whose autoencoders a variant needs.
pub fn required_orders(variant: Variant, use_harmonics: bool) -> Vec<u8> {
    match (variant.uses_aed(), use_harmonics) {
        (false, _) => Vec::new(),
        (true, false) => vec![1],
        (true, true) => HARMONIC_ORDERS.to_vec(),
    }
}

pub fn train_aed_order(
    config: &RunConfig,
    topology: &FeederTopology,
    dataset: &Dataset,
    order: u8,
    seed: u64,
) -> Result<(AedParams, AedTrainReport)> {
    train_aed(dataset, topology, order, &config.aed_train(seed))
}

/// Inputs of the graph stage: node features per event and the graph they
/// live on.
#[derive(Clone, Debug)]
pub struct GraphInputs {
    pub features: Vec<EventFeatures>,
    pub adjacency: Tensor,
}

fn check_aeds(aeds: &AedSet, orders: &[u8]) -> Result<()> {
    for h in orders {
        if !aeds.contains_key(h) {
            return Err(Error::MissingArtifact(format!("autoencoder for harmonic order {h}")));
        }
    }
    Ok(())
}

fn select_rows(features: &[EventFeatures], rows: &[usize]) -> Vec<EventFeatures> {
    features
        .iter()
        .map(|e| {
            let w = e.features.cols();
            let data = rows.iter().flat_map(|&r| e.features.row_slice(r).to_vec()).collect();
            EventFeatures {
                event_id: e.event_id,
                class: e.class,
                split: e.split,
                features: Tensor::new(vec![rows.len(), w], data).expect("row selection keeps shape"),
            }
        })
        .collect()
}

/// Per-event embeddings of the sensor buses only, `[sensors, width]`.
pub fn sensor_embeddings(
    encoders: &Encoders,
    topology: &FeederTopology,
    dataset: &Dataset,
    use_harmonics: bool,
) -> Result<Vec<EventFeatures>> {
    check_aeds(&encoders.aeds, &required_orders(Variant::Aed, use_harmonics))?;
    let all = encoders.nominal(topology, dataset, use_harmonics)?;
    Ok(select_rows(&all, topology.sensors()))
}

/// Raw normalised series as node features: every bus gets its flattened
/// window (flat series at unsensored buses), harmonic orders concatenated.
fn raw_features(topology: &FeederTopology, dataset: &Dataset, use_harmonics: bool) -> Result<Vec<EventFeatures>> {
    if dataset.feeder_hash != topology.hash() {
        return Err(Error::Validation("dataset and topology disagree on the feeder".into()));
    }
    let orders: &[u8] = if use_harmonics {
        &HARMONIC_ORDERS
    } else {
        &HARMONIC_ORDERS[..1]
    };
    let n = topology.num_buses();
    let per = dataset.window * crate::feeder::CHANNELS;
    let width = per * orders.len();
    let op = nominal_load_flow(topology);
    // Unsensored buses carry their flat fundamental; harmonic slots stay zero.
    let mut flats: BTreeMap<usize, Tensor> = BTreeMap::new();
    for bus in (0..n).filter(|&b| !topology.is_sensor(b)) {
        flats.insert(
            bus,
            dataset.norm.normalize(1, &flat_series(&op, bus, 1, dataset.window)?)?,
        );
    }
    dataset
        .records
        .iter()
        .map(|rec| {
            let mut data = vec![0.0; n * width];
            for bus in 0..n {
                for (k, &h) in orders.iter().enumerate() {
                    let dst = &mut data[bus * width + k * per..bus * width + (k + 1) * per];
                    if topology.is_sensor(bus) {
                        let label = topology.bus_label(bus);
                        let block = rec
                            .blocks
                            .iter()
                            .find(|b| b.bus == label)
                            .ok_or_else(|| Error::Schema {
                                event_id: rec.event_id,
                                msg: format!("no window for sensor {label}"),
                            })?;
                        let w = dataset.norm.normalize(h, &block.orders[order_slot(h)?])?;
                        dst.copy_from_slice(w.data());
                    } else if h == 1 {
                        dst.copy_from_slice(flats[&bus].data());
                    }
                }
            }
            Ok(EventFeatures {
                event_id: rec.event_id,
                class: rec.class,
                split: rec.split,
                features: Tensor::new(vec![n, width], data)?,
            })
        })
        .collect()
}

/// Node features and adjacency of a graph variant.
pub fn graph_inputs(
    variant: Variant,
    encoders: &Encoders,
    topology: &FeederTopology,
    dataset: &Dataset,
    use_harmonics: bool,
    seed: u64,
) -> Result<GraphInputs> {
    check_aeds(&encoders.aeds, &required_orders(variant, use_harmonics))?;
    let nominal = || encoders.nominal(topology, dataset, use_harmonics);
    match variant {
        Variant::Aed => Err(Error::Validation("variant `aed` has no graph stage".into())),
        Variant::TsNgNl => Ok(GraphInputs {
            features: raw_features(topology, dataset, use_harmonics)?,
            adjacency: topology.adjacency(),
        }),
        Variant::AedNg => Ok(GraphInputs {
            features: select_rows(&nominal()?, topology.sensors()),
            adjacency: topology.sensor_subgraph(),
        }),
        Variant::AedNgRl => Ok(GraphInputs {
            features: embed_dataset(
                &encoders.aeds,
                dataset,
                topology,
                use_harmonics,
                FlatLoading::Random { seed },
            )?,
            adjacency: topology.adjacency(),
        }),
        Variant::AedGNl | Variant::GraphPmu => Ok(GraphInputs {
            features: nominal()?.as_ref().clone(),
            adjacency: topology.adjacency(),
        }),
    }
}

pub fn train_graph_stage(
    config: &RunConfig,
    variant: Variant,
    inputs: &GraphInputs,
    seed: u64,
) -> Result<(GraphModel, GraphTrainReport)> {
    train_graph_encoder(&inputs.features, &inputs.adjacency, &config.graph_train(variant, seed))
}

/// Graph checkpoint tagged with the variant and harmonic mode it serves.
pub fn graph_checkpoint(model: &GraphModel, variant: Variant, use_harmonics: bool) -> Checkpoint {
    let mut c = model.to_checkpoint();
    c.meta.push(("variant".into(), variant.as_str().into()));
    c.meta.push(("use_harmonics".into(), use_harmonics.to_string()));
    c
}

/// Loads a graph checkpoint and checks it was trained for this run.
pub fn graph_from_checkpoint(c: &Checkpoint, variant: Variant, use_harmonics: bool) -> Result<GraphModel> {
    let (v, h) = (c.require("variant")?, c.require("use_harmonics")?);
    if v != variant.as_str() || h != use_harmonics.to_string() {
        return Err(Error::Validation(format!(
            "graph checkpoint was trained for variant {v} with use_harmonics={h}"
        )));
    }
    GraphModel::from_checkpoint(c)
}

/// Final event vectors: concatenated sensor embeddings for `aed`, graph
/// readouts otherwise. Rows follow dataset order.
pub fn event_vectors(
    variant: Variant,
    sensor_em: Option<&[EventFeatures]>,
    graph: Option<(&GraphModel, &GraphInputs)>,
) -> Result<Vec<Vec<f64>>> {
    match (variant, sensor_em, graph) {
        (Variant::Aed, Some(em), _) => Ok(em.iter().map(|e| e.features.data().to_vec()).collect()),
        (Variant::Aed, None, _) => Err(Error::MissingArtifact("sensor embeddings".into())),
        (_, _, Some((model, inputs))) => encode_events(model, &inputs.features, &inputs.adjacency, model.shape.mode),
        (_, _, None) => Err(Error::MissingArtifact("graph encoder checkpoint".into())),
    }
}

/// Event metadata in dataset order.
#[derive(Clone, Debug, PartialEq)]
pub struct EventIndex {
    pub ids: Vec<u64>,
    pub classes: Vec<u8>,
    pub splits: Vec<Split>,
}

impl EventIndex {
    pub fn of(dataset: &Dataset) -> Self {
        EventIndex {
            ids: dataset.records.iter().map(|r| r.event_id).collect(),
            classes: dataset.records.iter().map(|r| r.class).collect(),
            splits: dataset.records.iter().map(|r| r.split).collect(),
        }
    }

    fn rows(&self, split: Split) -> Vec<usize> {
        (0..self.ids.len()).filter(|&i| self.splits[i] == split).collect()
    }
}

/// Fits the mixture on train vectors and scores the test split.
pub fn cluster_events(
    label: &str,
    index: &EventIndex,
    vectors: &[Vec<f64>],
    config: &RunConfig,
    seed: u64,
) -> Result<(ClusterReport, BTreeSet<u64>)> {
    if vectors.len() != index.ids.len() {
        return Err(Error::contract("one vector per event is required"));
    }
    for v in vectors {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite event representation".into()));
        }
    }
    let train = index.rows(Split::Train);
    let test = index.rows(Split::Test);
    let fit: Vec<Vec<f64>> = train.iter().map(|&i| vectors[i].clone()).collect();
    let gmm = gmm_fit(
        &fit,
        config.k,
        &GmmConfig {
            restarts: config.gmm_restarts,
            seed,
            ..GmmConfig::default()
        },
    )?;
    let targets: Vec<Vec<f64>> = test.iter().map(|&i| vectors[i].clone()).collect();
    let report = ClusterReport::new(
        label,
        seed,
        config.k,
        test.iter().map(|&i| index.ids[i]).collect(),
        test.iter().map(|&i| index.classes[i]).collect(),
        gmm.assign(&targets)?,
        config.to_pairs(),
    )?;
    Ok((report, train.iter().map(|&i| index.ids[i]).collect()))
}

/// PCA projection of the test-split vectors as CSV.
pub fn projection(index: &EventIndex, vectors: &[Vec<f64>]) -> Result<String> {
    let test = index.rows(Split::Test);
    let targets: Vec<Vec<f64>> = test.iter().map(|&i| vectors[i].clone()).collect();
    let p = pca_project(&targets, 2)?;
    let ids: Vec<u64> = test.iter().map(|&i| index.ids[i]).collect();
    let classes: Vec<u8> = test.iter().map(|&i| index.classes[i]).collect();
    projection_csv(&ids, &classes, &p)
}

/// Sensor embeddings in the model container: one `[events, width]` tensor
/// per sensor bus.
pub fn embeddings_checkpoint(sensors: &[String], em: &[EventFeatures]) -> Result<Checkpoint> {
    let mut params = crate::numerics::ParamSet::new();
    let width = em.first().map_or(0, |e| e.features.cols());
    for (s, bus) in sensors.iter().enumerate() {
        let data = em.iter().flat_map(|e| e.features.row_slice(s).to_vec()).collect();
        params.push(format!("bus.{bus}"), Tensor::new(vec![em.len(), width], data)?);
    }
    Ok(Checkpoint {
        meta: vec![
            ("kind".into(), "embeddings".into()),
            ("events".into(), em.len().to_string()),
        ],
        params,
    })
}

/// Event ids a training stage consumed.
#[derive(Clone, Debug, PartialEq)]
pub struct StageAudit {
    pub stage: String,
    pub ids: BTreeSet<u64>,
}

pub fn ids_digest(ids: &BTreeSet<u64>) -> String {
    let mut h = Sha256::new();
    for id in ids {
        h.update(id.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Fails when any audited stage consumed a non-train event.
pub fn check_no_leak(dataset: &Dataset, audits: &[StageAudit]) -> Result<()> {
    let train: BTreeSet<u64> = dataset.split(Split::Train).map(|r| r.event_id).collect();
    for a in audits {
        if let Some(id) = a.ids.iter().find(|id| !train.contains(id)) {
            return Err(Error::Validation(format!(
                "stage {} trained on event {id}, which is not in the train split",
                a.stage
            )));
        }
    }
    Ok(())
}

pub fn audit_csv(audits: &[StageAudit]) -> String {
    let mut s = String::from("stage,events,sha256\n");
    for a in audits {
        writeln!(s, "{},{},{}", a.stage, a.ids.len(), ids_digest(&a.ids)).expect("string write");
    }
    s
}

pub fn aed_curve_csv(report: &AedTrainReport) -> String {
    let mut s = String::from("epoch,train_mse,eval_mse\n");
    for e in &report.curve {
        writeln!(s, "{},{:.9},{:.9}", e.epoch, e.train_mse, e.eval_mse).expect("string write");
    }
    s
}

pub fn graph_curve_csv(report: &GraphTrainReport) -> String {
    let mut s = String::from("epoch,train_mi,eval_mi\n");
    for e in &report.curve {
        writeln!(s, "{},{:.9},{:.9}", e.epoch, e.train_mi, e.eval_mi).expect("string write");
    }
    s
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}
