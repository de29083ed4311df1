//! Radial feeder model, nominal load flow, synthetic events and datasets.

mod dataset;
mod events;
mod io;
mod loadflow;
mod topology;

pub use dataset::{generate_dataset, random_loading, Dataset, NormStats, SplitCounts};
pub use events::{
    attenuation_factor, augment, default_catalogue, flat_series, order_slot, sample_spec, shift_and_noise, synth_event,
    template, BusWindows, ClassProfile, EventKind, EventRecord, EventSpec, GeneratorConfig, Phases, Signature, Split,
    CHANNELS, HARMONIC_ORDERS, NUM_CLASSES, WINDOW_LEN,
};
pub use io::{
    dataset_to_string, decode_f64s, encode_f64s, parse_dataset, read_dataset, write_atomic, write_dataset,
    DATASET_MAGIC,
};
pub use loadflow::{nominal_load_flow, OperatingPoint};
pub use topology::{FeederTopology, Line, IEEE34, TOPOLOGY_MAGIC};
