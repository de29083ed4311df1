use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng as _;

use super::config::RunConfig;
use super::run::{
    aed_curve_csv, audit_csv, check_no_leak, cluster_events, embeddings_checkpoint, event_vectors, generate,
    graph_checkpoint, graph_curve_csv, graph_inputs, median, required_orders, sensor_embeddings, train_aed_order,
    train_graph_stage, AedSet, Encoders, EventIndex, StageAudit,
};
use super::variant::Variant;
use crate::checkpoint::Checkpoint;
use crate::cluster::ClusterReport;
use crate::error::{Error, Result};
use crate::feeder::{write_atomic, write_dataset, Dataset, FeederTopology, HARMONIC_ORDERS};
use crate::graphenc::{GraphModel, GraphTrainReport};
use crate::numerics::rng;
use crate::temporal::{AedParams, EventFeatures};

pub const DATASET_FILE: &str = "dataset.gpmu";
pub const GRAPH_FILE: &str = "graph.model";
pub const GRAPH_CURVE_FILE: &str = "graph-curve.csv";
pub const REPORT_FILE: &str = "assignments.csv";
pub const PROJECTION_FILE: &str = "projection.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.model";
pub const AUDIT_FILE: &str = "training-ids.csv";

pub fn aed_file(order: u8) -> String {
    format!("aed-order{order}.model")
}

pub fn aed_curve_file(order: u8) -> String {
    format!("aed-order{order}-curve.csv")
}

pub fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed-{seed}"))
}

/// Receives one line per completed step.
pub type Progress<'a> = &'a mut dyn FnMut(&str);

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_atomic(&dir.join(name), bytes)
}

/// Everything one variant run produced.
pub struct VariantRun {
    pub label: String,
    pub report: ClusterReport,
    pub graph: Option<(GraphModel, GraphTrainReport)>,
    pub sensor_embeddings: Option<Vec<EventFeatures>>,
    pub vectors: Vec<Vec<f64>>,
    pub audits: Vec<StageAudit>,
}

impl VariantRun {
    /// Writes the report, training audit and, where present, the graph
    /// checkpoint, its loss curve and the sensor embeddings.
    pub fn write(&self, dir: &Path, variant: Variant, use_harmonics: bool, sensors: &[String]) -> Result<()> {
        write(dir, REPORT_FILE, self.report.to_csv().as_bytes())?;
        write(dir, AUDIT_FILE, audit_csv(&self.audits).as_bytes())?;
        if let Some((model, report)) = &self.graph {
            write(
                dir,
                GRAPH_FILE,
                &graph_checkpoint(model, variant, use_harmonics).to_bytes(),
            )?;
            write(dir, GRAPH_CURVE_FILE, graph_curve_csv(report).as_bytes())?;
        }
        if let Some(em) = &self.sensor_embeddings {
            write(dir, EMBEDDINGS_FILE, &embeddings_checkpoint(sensors, em)?.to_bytes())?;
        }
        Ok(())
    }
}

/// Runs one variant end to end on trained autoencoders: features, graph
/// training where applicable, mixture clustering of the test split.
pub fn run_variant(
    config: &RunConfig,
    variant: Variant,
    use_harmonics: bool,
    topology: &FeederTopology,
    dataset: &Dataset,
    encoders: &Encoders,
    seed: u64,
) -> Result<VariantRun> {
    let index = EventIndex::of(dataset);
    let mut audits: Vec<StageAudit> = Vec::new();
    let orders = required_orders(variant, use_harmonics);
    audits.extend(
        encoders
            .audits
            .iter()
            .filter(|a| orders.iter().any(|h| a.stage == format!("aed-order{h}")))
            .cloned(),
    );
    let sensor_em = if variant.uses_aed() {
        Some(sensor_embeddings(encoders, topology, dataset, use_harmonics)?)
    } else {
        None
    };
    let (graph, vectors) = if variant.uses_graph() {
        let inputs = graph_inputs(variant, encoders, topology, dataset, use_harmonics, seed)?;
        let (model, report) = train_graph_stage(config, variant, &inputs, seed)?;
        audits.push(StageAudit {
            stage: "graph".into(),
            ids: report.train_event_ids.clone(),
        });
        let vectors = event_vectors(variant, None, Some((&model, &inputs)))?;
        (Some((model, report)), vectors)
    } else {
        (None, event_vectors(variant, sensor_em.as_deref(), None)?)
    };
    let label = variant.label(use_harmonics);
    let (report, fit_ids) = cluster_events(&label, &index, &vectors, config, seed)?;
    audits.push(StageAudit {
        stage: "gmm".into(),
        ids: fit_ids,
    });
    check_no_leak(dataset, &audits)?;
    Ok(VariantRun {
        label,
        report,
        graph,
        sensor_embeddings: sensor_em,
        vectors,
        audits,
    })
}

/// Autoencoders of `orders` for one seed: loaded from `aed_dir` where a
/// checkpoint exists, trained otherwise. With `out`, every model (and the
/// curve of every trained one) is written to it.
pub fn train_aeds(
    config: &RunConfig,
    topology: &FeederTopology,
    dataset: &Dataset,
    orders: &[u8],
    seed: u64,
    out: Option<&Path>,
    progress: Progress,
) -> Result<Encoders> {
    let mut aeds = AedSet::new();
    let mut audits = Vec::new();
    for &h in orders {
        let stored = config
            .aed_dir
            .as_ref()
            .map(|d| seed_dir(d, seed))
            .filter(|d| d.join(aed_file(h)).exists());
        let params = if let Some(dir) = stored {
            let params = load_aeds(&dir, &[h])?.remove(&h).expect("loaded");
            progress(&format!(
                "seed {seed}: autoencoder order {h} loaded from {}",
                dir.display()
            ));
            params
        } else {
            let (params, report) = train_aed_order(config, topology, dataset, h, seed)?;
            if let Some(dir) = out {
                write(dir, &aed_curve_file(h), aed_curve_csv(&report).as_bytes())?;
            }
            progress(&format!(
                "seed {seed}: autoencoder order {h} kept epoch {} (eval mse {:.4})",
                report.best_epoch,
                report.curve[report.best_epoch - 1].eval_mse
            ));
            audits.push(StageAudit {
                stage: format!("aed-order{h}"),
                ids: report.train_event_ids.clone(),
            });
            params
        };
        if let Some(dir) = out {
            write(dir, &aed_file(h), &params.to_checkpoint().to_bytes())?;
        }
        aeds.insert(h, params);
    }
    Ok(Encoders::new(aeds, audits))
}

/// Loads `seed-<s>/aed-order<h>.model` files from `dir`.
pub fn load_aeds(dir: &Path, orders: &[u8]) -> Result<AedSet> {
    let mut aeds = AedSet::new();
    for &h in orders {
        let c = Checkpoint::load(dir.join(aed_file(h)))?;
        let p = AedParams::from_checkpoint(&c)?;
        if p.order != h {
            return Err(Error::Validation(format!("{} holds order {}", aed_file(h), p.order)));
        }
        aeds.insert(h, p);
    }
    Ok(aeds)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationResult {
    /// Seed-major, then variant, then harmonic mode.
    pub reports: Vec<ClusterReport>,
    /// `(label, median ARI)` in first-seen order.
    pub medians: Vec<(String, f64)>,
}

impl AblationResult {
    pub fn median_of(&self, label: &str) -> Option<f64> {
        self.medians.iter().find(|(l, _)| l == label).map(|(_, m)| *m)
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("variant,ari,seed\n");
        for r in &self.reports {
            s.push_str(&r.summary_line());
            s.push('\n');
        }
        s
    }

    /// One row per variant: the median and every seed's ARI.
    pub fn table_csv(&self) -> String {
        let seeds: Vec<u64> = self
            .reports
            .iter()
            .map(|r| r.seed)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut s = String::from("variant,median_ari");
        for seed in &seeds {
            write!(s, ",seed_{seed}").expect("string write");
        }
        s.push('\n');
        for (label, m) in &self.medians {
            write!(s, "{label},{m:.6}").expect("string write");
            for seed in &seeds {
                let ari = self
                    .reports
                    .iter()
                    .find(|r| &r.variant == label && r.seed == *seed)
                    .map(|r| r.ari);
                write!(s, ",{:.6}", ari.unwrap_or(f64::NAN)).expect("string write");
            }
            s.push('\n');
        }
        s
    }
}

fn medians(reports: &[ClusterReport]) -> Vec<(String, f64)> {
    let mut labels: Vec<String> = Vec::new();
    for r in reports {
        if !labels.contains(&r.variant) {
            labels.push(r.variant.clone());
        }
    }
    labels
        .into_iter()
        .map(|l| {
            let aris: Vec<f64> = reports.iter().filter(|r| r.variant == l).map(|r| r.ari).collect();
            (l, median(&aris))
        })
        .collect()
}

/// Configuration text for the run record, without the destination directory.
fn recorded_config(config: &RunConfig) -> String {
    config
        .to_text()
        .lines()
        .filter(|l| !l.starts_with("out_dir ="))
        .map(|l| format!("{l}\n"))
        .collect()
}

/// Runs every (variant, harmonic mode) pair for every seed on one dataset
/// generated from `data_seed`. Autoencoders are trained once per seed and
/// shared by all variants of that seed.
pub fn ablate(
    config: &RunConfig,
    variants: &[Variant],
    harmonic_modes: &[bool],
    seeds: &[u64],
    data_seed: u64,
    out: Option<&Path>,
    progress: Progress,
) -> Result<AblationResult> {
    if variants.is_empty() || seeds.is_empty() || harmonic_modes.is_empty() {
        return Err(Error::config(
            "variants",
            "need at least one variant, seed and harmonic mode",
        ));
    }
    let (topology, dataset) = generate(config, data_seed)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_dataset(&dataset, dir.join(DATASET_FILE))?;
        write(dir, "config.txt", recorded_config(config).as_bytes())?;
    }
    progress(&format!("dataset: {} events", dataset.len()));
    let mut orders: BTreeSet<u8> = BTreeSet::new();
    for &v in variants {
        for &h in harmonic_modes {
            orders.extend(required_orders(v, h));
        }
    }
    let orders: Vec<u8> = orders.into_iter().collect();
    let mut reports = Vec::new();
    for &seed in seeds {
        let sdir = out.map(|d| seed_dir(d, seed));
        let encoders = train_aeds(config, &topology, &dataset, &orders, seed, sdir.as_deref(), progress)?;
        for &variant in variants {
            for &h in harmonic_modes {
                let run = run_variant(config, variant, h, &topology, &dataset, &encoders, seed)?;
                if let Some(d) = &sdir {
                    run.write(&d.join(&run.label), variant, h, &topology.sensor_labels())?;
                }
                progress(&format!("seed {seed}: {} ari {:.4}", run.label, run.report.ari));
                reports.push(run.report);
            }
        }
    }
    let result = AblationResult {
        medians: medians(&reports),
        reports,
    };
    if let Some(dir) = out {
        write(dir, "summary.csv", result.summary_csv().as_bytes())?;
        write(dir, "table.csv", result.table_csv().as_bytes())?;
    }
    Ok(result)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub sensors: usize,
    pub use_harmonics: bool,
    pub buses: Vec<String>,
    /// `(seed, ARI)` per seed.
    pub aris: Vec<(u64, f64)>,
    pub median: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("sensors,harmonics,median_ari");
    if let Some(r) = rows.first() {
        for (seed, _) in &r.aris {
            write!(s, ",seed_{seed}").expect("string write");
        }
    }
    s.push_str(",buses\n");
    for r in rows {
        write!(s, "{},{},{:.6}", r.sensors, r.use_harmonics, r.median).expect("string write");
        for (_, a) in &r.aris {
            write!(s, ",{a:.6}").expect("string write");
        }
        writeln!(s, ",{}", r.buses.join(" ")).expect("string write");
    }
    s
}

/// Farthest-point placement of `count` sensors from a start bus drawn from
/// `seed`; smaller counts are prefixes of larger ones.
pub fn sweep_placement(topology: &FeederTopology, count: usize, seed: u64) -> Result<(String, Vec<String>)> {
    let start = rng::stream(seed, "placement").random_range(0..topology.num_buses());
    let buses = topology.dispersed_sensors(count, start)?;
    Ok((topology.bus_label(start).to_string(), buses))
}

/// GraphPMU for each sensor count and harmonic mode. One dataset carries the
/// largest placement; smaller counts use its nested prefixes. Autoencoders
/// missing from `aed_dir` are trained per seed on the largest placement.
pub fn sweep(
    config: &RunConfig,
    counts: &[usize],
    seeds: &[u64],
    data_seed: u64,
    out: Option<&Path>,
    progress: Progress,
) -> Result<Vec<SweepRow>> {
    if counts.is_empty() || seeds.is_empty() {
        return Err(Error::config("sensors", "need at least one sensor count and seed"));
    }
    let base = config.load_topology()?;
    let max = *counts.iter().max().expect("non-empty");
    if let Some(&c) = counts.iter().find(|&&c| c == 0 || c > base.num_buses()) {
        return Err(Error::config(
            "sensors",
            format!("sensor count {c} outside 1..={}", base.num_buses()),
        ));
    }
    let (start, placement) = sweep_placement(&base, max, data_seed)?;
    let full = base.with_sensors(&placement)?;
    let dataset = crate::feeder::generate_dataset(&full, config.counts, data_seed, &config.generator())?;
    progress(&format!("sweep placement from bus {start}: {}", placement.join(" ")));
    if let Some(dir) = out {
        let mut meta = format!("rule=farthest-point-hops\nstart={start}\n");
        for &c in counts {
            writeln!(meta, "sensors_{c}={}", placement[..c].join(",")).expect("string write");
        }
        write(dir, "placement.txt", meta.as_bytes())?;
    }
    let mut rows: Vec<SweepRow> = Vec::new();
    let modes = [false, true];
    for &c in counts {
        for &h in &modes {
            rows.push(SweepRow {
                sensors: c,
                use_harmonics: h,
                buses: placement[..c].to_vec(),
                aris: Vec::new(),
                median: f64::NAN,
            });
        }
    }
    for &seed in seeds {
        let sdir = out.map(|d| seed_dir(d, seed));
        let encoders = train_aeds(
            config,
            &full,
            &dataset,
            &HARMONIC_ORDERS,
            seed,
            sdir.as_deref(),
            progress,
        )?;
        for row in rows.iter_mut() {
            let topo = base.with_sensors(&row.buses)?;
            let ds = dataset.restrict_sensors(&topo)?;
            let run = run_variant(
                config,
                Variant::GraphPmu,
                row.use_harmonics,
                &topo,
                &ds,
                &encoders,
                seed,
            )?;
            if let Some(dir) = out {
                let d = seed_dir(dir, seed)
                    .join(format!("sensors-{}", row.sensors))
                    .join(&run.label);
                write(&d, REPORT_FILE, run.report.to_csv().as_bytes())?;
            }
            progress(&format!(
                "seed {seed}: {} sensors, harmonics {}: ari {:.4}",
                row.sensors, row.use_harmonics, run.report.ari
            ));
            row.aris.push((seed, run.report.ari));
        }
    }
    for row in rows.iter_mut() {
        row.median = median(&row.aris.iter().map(|(_, a)| *a).collect::<Vec<_>>());
    }
    if let Some(dir) = out {
        write(dir, "summary.csv", sweep_csv(&rows).as_bytes())?;
    }
    Ok(rows)
}
