//! End-to-end wiring: configuration, the per-stage operations behind the
//! command-line tool, the ablation harness and the sensor-count sweep.

mod config;
mod harness;
mod run;
mod variant;

pub use config::{RunConfig, CONFIG_KEYS};
pub use harness::{
    ablate, aed_curve_file, aed_file, load_aeds, run_variant, seed_dir, sweep, sweep_csv, sweep_placement, train_aeds,
    AblationResult, Progress, SweepRow, VariantRun, AUDIT_FILE, DATASET_FILE, EMBEDDINGS_FILE, GRAPH_CURVE_FILE,
    GRAPH_FILE, PROJECTION_FILE, REPORT_FILE,
};
pub use run::{
    aed_curve_csv, audit_csv, check_no_leak, cluster_events, embeddings_checkpoint, event_vectors, generate,
    graph_checkpoint, graph_curve_csv, graph_from_checkpoint, graph_inputs, ids_digest, median, projection,
    required_orders, sensor_embeddings, train_aed_order, train_graph_stage, AedSet, Encoders, EventIndex, GraphInputs,
    StageAudit,
};
pub use variant::Variant;
