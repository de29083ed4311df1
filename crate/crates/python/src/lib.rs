//! Python bindings: feeder, dataset, configuration, autoencoders, clustering
//! kernels and the ablation and sweep harnesses.

use std::path::PathBuf;

use graphpmu_core::checkpoint::Checkpoint;
use graphpmu_core::cluster::{ari as core_ari, gmm_fit, kmeans_baseline, pca_project, GmmConfig};
use graphpmu_core::feeder::{
    generate_dataset, read_dataset, write_dataset, Dataset, FeederTopology, GeneratorConfig, SplitCounts, WINDOW_LEN,
};
use graphpmu_core::graphenc::js_mi_loss as core_js_mi_loss;
use graphpmu_core::numerics::Tensor;
use graphpmu_core::pipeline::{self, RunConfig, Variant, CONFIG_KEYS};
use graphpmu_core::temporal::AedParams;
use graphpmu_core::Error;
use pyo3::exceptions::{PyArithmeticError, PyFileNotFoundError, PyOSError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::MissingArtifact(_) => PyFileNotFoundError::new_err(e.to_string()),
        Error::Numeric(_) => PyArithmeticError::new_err(e.to_string()),
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Tensor> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    let n = rows.len();
    Tensor::new(vec![n, cols], rows.into_iter().flatten().collect()).map_err(py_err)
}

fn nested(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row_slice(r).to_vec()).collect()
}

/// Radial feeder with its sensor set.
#[pyclass(name = "Topology", frozen, module = "graphpmu")]
struct PyTopology {
    inner: FeederTopology,
}

#[pymethods]
impl PyTopology {
    /// The bundled 34-bus feeder with its default sensors.
    #[staticmethod]
    fn ieee34() -> Self {
        PyTopology {
            inner: FeederTopology::ieee34(),
        }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        FeederTopology::load(path)
            .map(|inner| PyTopology { inner })
            .map_err(py_err)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        FeederTopology::parse(text)
            .map(|inner| PyTopology { inner })
            .map_err(py_err)
    }

    #[getter]
    fn buses(&self) -> Vec<String> {
        self.inner.bus_ids().to_vec()
    }

    #[getter]
    fn sensors(&self) -> Vec<String> {
        self.inner.sensor_labels()
    }

    fn with_sensors(&self, sensors: Vec<String>) -> PyResult<Self> {
        self.inner
            .with_sensors(&sensors)
            .map(|inner| PyTopology { inner })
            .map_err(py_err)
    }

    fn adjacency(&self) -> Vec<Vec<f64>> {
        nested(&self.inner.adjacency())
    }

    /// Tree over the sensor buses contracted from the feeder.
    fn sensor_subgraph(&self) -> Vec<Vec<f64>> {
        nested(&self.inner.sensor_subgraph())
    }

    /// Farthest-point placement of `count` sensors starting at bus `start`.
    fn dispersed_sensors(&self, count: usize, start: &str) -> PyResult<Vec<String>> {
        let idx = self
            .inner
            .bus_index(start)
            .ok_or_else(|| PyValueError::new_err(format!("unknown bus {start}")))?;
        self.inner.dispersed_sensors(count, idx).map_err(py_err)
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!(
            "Topology(buses={}, sensors=[{}])",
            self.inner.num_buses(),
            self.inner.sensor_labels().join(", ")
        )
    }
}

/// Labelled event windows split into train, eval and test.
#[pyclass(name = "Dataset", frozen, module = "graphpmu")]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    #[pyo3(signature = (topology, seed, train_per_class=200, eval_per_class=50, test_per_class=50, window=WINDOW_LEN))]
    fn generate(
        topology: &PyTopology,
        seed: u64,
        train_per_class: usize,
        eval_per_class: usize,
        test_per_class: usize,
        window: usize,
    ) -> PyResult<Self> {
        let counts = SplitCounts {
            train: train_per_class,
            eval: eval_per_class,
            test: test_per_class,
        };
        let config = GeneratorConfig {
            window,
            ..GeneratorConfig::default()
        };
        generate_dataset(&topology.inner, counts, seed, &config)
            .map(|inner| PyDataset { inner })
            .map_err(py_err)
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        read_dataset(path).map(|inner| PyDataset { inner }).map_err(py_err)
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        write_dataset(&self.inner, path).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn sensors(&self) -> Vec<String> {
        self.inner.sensors.clone()
    }

    #[getter]
    fn window(&self) -> usize {
        self.inner.window
    }

    #[getter]
    fn event_ids(&self) -> Vec<u64> {
        self.inner.records.iter().map(|r| r.event_id).collect()
    }

    #[getter]
    fn classes(&self) -> Vec<u8> {
        self.inner.records.iter().map(|r| r.class).collect()
    }

    #[getter]
    fn splits(&self) -> Vec<&'static str> {
        self.inner.records.iter().map(|r| r.split.as_str()).collect()
    }

    /// Window `[T, 9]` of one event at one sensor bus and harmonic order.
    #[pyo3(signature = (event_id, bus, order=1, normalized=false))]
    fn event_window(&self, event_id: u64, bus: &str, order: u8, normalized: bool) -> PyResult<Vec<Vec<f64>>> {
        let rec = self
            .inner
            .records
            .iter()
            .find(|r| r.event_id == event_id)
            .ok_or_else(|| PyValueError::new_err(format!("no event {event_id}")))?;
        let w = rec
            .window(bus, order)
            .ok_or_else(|| PyValueError::new_err(format!("no window for bus {bus}, order {order}")))?;
        if normalized {
            Ok(nested(&self.inner.norm.normalize(order, w).map_err(py_err)?))
        } else {
            Ok(nested(w))
        }
    }

    /// The same events observed at a subset of the sensors.
    fn restrict_sensors(&self, topology: &PyTopology) -> PyResult<Self> {
        self.inner
            .restrict_sensors(&topology.inner)
            .map(|inner| PyDataset { inner })
            .map_err(py_err)
    }
}

/// Flat key-value run configuration.
#[pyclass(name = "RunConfig", module = "graphpmu")]
struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (text=None))]
    fn new(text: Option<&str>) -> PyResult<Self> {
        let inner = match text {
            Some(t) => RunConfig::parse(t).map_err(py_err)?,
            None => RunConfig::default(),
        };
        Ok(PyConfig { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        RunConfig::load(path).map(|inner| PyConfig { inner }).map_err(py_err)
    }

    /// Every key with its description.
    #[staticmethod]
    fn keys() -> Vec<(&'static str, &'static str)> {
        CONFIG_KEYS.to_vec()
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value).map_err(py_err)
    }

    fn get(&self, key: &str) -> PyResult<String> {
        self.inner
            .to_pairs()
            .into_iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v)
            .ok_or_else(|| PyValueError::new_err(format!("unknown key {key}")))
    }

    fn topology(&self) -> PyResult<PyTopology> {
        self.inner
            .load_topology()
            .map(|inner| PyTopology { inner })
            .map_err(py_err)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }
}

/// Recurrent autoencoder of one harmonic order.
#[pyclass(name = "Autoencoder", frozen, module = "graphpmu")]
struct PyAutoencoder {
    inner: AedParams,
}

#[pymethods]
impl PyAutoencoder {
    /// Trains on the dataset's train split; returns the model and its
    /// `(epoch, train_mse, eval_mse)` curve.
    #[staticmethod]
    fn train(
        py: Python<'_>,
        config: &PyConfig,
        dataset: &PyDataset,
        order: u8,
        seed: u64,
    ) -> PyResult<(Self, Vec<(usize, f64, f64)>)> {
        let config = config.inner.clone();
        let topology = config.load_topology().map_err(py_err)?;
        let data = &dataset.inner;
        let (inner, report) = py
            .detach(|| pipeline::train_aed_order(&config, &topology, data, order, seed))
            .map_err(py_err)?;
        let curve = report
            .curve
            .iter()
            .map(|e| (e.epoch, e.train_mse, e.eval_mse))
            .collect();
        Ok((PyAutoencoder { inner }, curve))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let c = Checkpoint::load(path).map_err(py_err)?;
        AedParams::from_checkpoint(&c)
            .map(|inner| PyAutoencoder { inner })
            .map_err(py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.to_checkpoint().save(path).map_err(py_err)
    }

    #[getter]
    fn order(&self) -> u8 {
        self.inner.order
    }

    /// Embedding of one normalised `[T, 9]` window.
    fn encode(&self, window: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.inner.encode(&matrix(window)?).map_err(py_err)
    }

    fn decode(&self, embedding: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        self.inner.decode(&embedding).map(|t| nested(&t)).map_err(py_err)
    }

    fn reconstruction_mse(&self, windows: Vec<Vec<Vec<f64>>>) -> PyResult<f64> {
        let ws = windows.into_iter().map(matrix).collect::<PyResult<Vec<_>>>()?;
        let refs: Vec<&Tensor> = ws.iter().collect();
        self.inner.reconstruction_mse(&refs, 64).map_err(py_err)
    }
}

/// Adjusted Rand index of two labelings.
#[pyfunction]
fn ari(truth: Vec<usize>, pred: Vec<usize>) -> PyResult<f64> {
    core_ari(&truth, &pred).map_err(py_err)
}

/// Fits a diagonal Gaussian mixture and returns the component of each vector.
#[pyfunction]
#[pyo3(signature = (vectors, k, seed, restarts=10))]
fn gmm_cluster(vectors: Vec<Vec<f64>>, k: usize, seed: u64, restarts: usize) -> PyResult<Vec<usize>> {
    let config = GmmConfig {
        restarts,
        seed,
        ..GmmConfig::default()
    };
    let model = gmm_fit(&vectors, k, &config).map_err(py_err)?;
    model.assign(&vectors).map_err(py_err)
}

/// k-means with k-means++ restarts: `(assignments, inertia)`.
#[pyfunction]
fn kmeans(vectors: Vec<Vec<f64>>, k: usize, seed: u64) -> PyResult<(Vec<usize>, f64)> {
    kmeans_baseline(&vectors, k, seed)
        .map(|r| (r.assignments, r.inertia))
        .map_err(py_err)
}

/// Principal-component coordinates of the vectors.
#[pyfunction]
#[pyo3(signature = (vectors, dims=2))]
fn pca(vectors: Vec<Vec<f64>>, dims: usize) -> PyResult<Vec<Vec<f64>>> {
    pca_project(&vectors, dims).map(|p| p.projected).map_err(py_err)
}

/// Jensen-Shannon mutual-information estimate from positive and negative logits.
#[pyfunction]
fn js_mi_loss(pos: Vec<f64>, neg: Vec<f64>) -> PyResult<f64> {
    core_js_mi_loss(&pos, &neg).map_err(py_err)
}

fn variants(names: &[String]) -> PyResult<Vec<Variant>> {
    names
        .iter()
        .map(|n| Variant::parse(n).ok_or_else(|| PyValueError::new_err(format!("unknown variant {n}"))))
        .collect()
}

/// Runs variants over seeds on one dataset. Returns `(variant, seed, ari)`
/// rows and `(variant, median_ari)` pairs.
#[pyfunction]
#[pyo3(signature = (config, variant_names, seeds, data_seed, harmonics=vec![false], out=None))]
#[allow(clippy::type_complexity)]
fn ablate(
    py: Python<'_>,
    config: &PyConfig,
    variant_names: Vec<String>,
    seeds: Vec<u64>,
    data_seed: u64,
    harmonics: Vec<bool>,
    out: Option<PathBuf>,
) -> PyResult<(Vec<(String, u64, f64)>, Vec<(String, f64)>)> {
    let vs = variants(&variant_names)?;
    let config = config.inner.clone();
    let result = py
        .detach(|| pipeline::ablate(&config, &vs, &harmonics, &seeds, data_seed, out.as_deref(), &mut |_| {}))
        .map_err(py_err)?;
    let rows = result
        .reports
        .iter()
        .map(|r| (r.variant.clone(), r.seed, r.ari))
        .collect();
    Ok((rows, result.medians))
}

/// GraphPMU across sensor counts and both harmonic modes. Returns
/// `(sensors, use_harmonics, median_ari, buses)` rows.
#[pyfunction]
#[pyo3(signature = (config, counts, seeds, data_seed, out=None))]
fn sweep(
    py: Python<'_>,
    config: &PyConfig,
    counts: Vec<usize>,
    seeds: Vec<u64>,
    data_seed: u64,
    out: Option<PathBuf>,
) -> PyResult<Vec<(usize, bool, f64, Vec<String>)>> {
    let config = config.inner.clone();
    let rows = py
        .detach(|| pipeline::sweep(&config, &counts, &seeds, data_seed, out.as_deref(), &mut |_| {}))
        .map_err(py_err)?;
    Ok(rows
        .into_iter()
        .map(|r| (r.sensors, r.use_harmonics, r.median, r.buses))
        .collect())
}

#[pymodule]
fn graphpmu(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTopology>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyAutoencoder>()?;
    m.add_function(wrap_pyfunction!(ari, m)?)?;
    m.add_function(wrap_pyfunction!(gmm_cluster, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(pca, m)?)?;
    m.add_function(wrap_pyfunction!(js_mi_loss, m)?)?;
    m.add_function(wrap_pyfunction!(ablate, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add("VARIANTS", Variant::ALL.iter().map(|v| v.as_str()).collect::<Vec<_>>())?;
    Ok(())
}
