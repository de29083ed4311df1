use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use graphpmu_core::checkpoint::Checkpoint;
use graphpmu_core::feeder::{read_dataset, write_atomic, write_dataset, Dataset, FeederTopology, Split, NUM_CLASSES};
use graphpmu_core::pipeline::{
    ablate, aed_curve_csv, aed_curve_file, aed_file, cluster_events, embeddings_checkpoint, event_vectors, generate,
    graph_checkpoint, graph_curve_csv, graph_from_checkpoint, graph_inputs, load_aeds, projection, required_orders,
    sensor_embeddings, sweep, sweep_csv, train_aed_order, train_graph_stage, Encoders, EventIndex, RunConfig, Variant,
    CONFIG_KEYS, DATASET_FILE, EMBEDDINGS_FILE, GRAPH_CURVE_FILE, GRAPH_FILE, PROJECTION_FILE, REPORT_FILE,
};
use graphpmu_core::Error;

#[derive(Parser)]
#[command(
    name = "gpmu",
    version,
    about = "Unsupervised clustering of feeder events from sparse phasor measurements"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Seed for every random draw of the command.
    #[arg(long)]
    seed: u64,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (config key `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Pipeline variant (config key `variant`).
    #[arg(long)]
    variant: Option<String>,
    /// Feed harmonic embeddings to the graph stage (config key `use_harmonics`).
    #[arg(long)]
    use_harmonics: Option<bool>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Harmonics {
    Off,
    On,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic event dataset.
    Generate(Common),
    /// Train the autoencoder of one harmonic order.
    TrainAed {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = ["1", "3", "5"])]
        order: String,
    },
    /// Train the graph encoder of the configured variant.
    TrainGraph(Common),
    /// Cluster the test events and write the assignment report.
    Cluster(Common),
    /// Export 2-D PCA coordinates of the test-event vectors.
    Project(Common),
    /// Run variants over several seeds; `--seed` seeds the dataset.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated variant names, or `all`.
        #[arg(long, value_delimiter = ',', default_value = "all")]
        variants: Vec<String>,
        /// Comma-separated model seeds; one run per seed.
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        /// Graph-stage inputs: fundamental only, with harmonics, or both.
        #[arg(long, value_enum, default_value = "off")]
        harmonics: Harmonics,
    },
    /// GraphPMU across sensor counts, with and without harmonics; `--seed` seeds the dataset and placement.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated sensor counts.
        #[arg(long, value_delimiter = ',', required = true)]
        sensors: Vec<usize>,
        /// Comma-separated model seeds; one run per seed.
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
    },
    /// Print every configuration key with its default value.
    Keys,
}

/// An error with the process exit code it maps to.
struct Failure {
    code: u8,
    error: Error,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = match &error {
            Error::Config { .. } => 2,
            Error::MissingArtifact(_) => 3,
            Error::Numeric(_) => 4,
            _ => 1,
        };
        Failure { code, error }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn usage(error: Error) -> Failure {
    Failure { code: 2, error }
}

fn load_config(c: &Common) -> Outcome<RunConfig> {
    let mut config = match &c.config {
        None => RunConfig::default(),
        Some(p) if !p.exists() => {
            return Err(usage(Error::Config {
                key: "--config".into(),
                msg: format!("{} does not exist", p.display()),
            }))
        }
        Some(p) => RunConfig::load(p).map_err(usage)?,
    };
    for kv in &c.sets {
        let (k, v) = kv.split_once('=').ok_or_else(|| {
            usage(Error::Config {
                key: kv.clone(),
                msg: "expected KEY=VALUE".into(),
            })
        })?;
        config.set(k.trim(), v.trim()).map_err(usage)?;
    }
    if let Some(out) = &c.out {
        config.out_dir = out.clone();
    }
    if let Some(v) = &c.variant {
        config.set("variant", v).map_err(usage)?;
    }
    if let Some(h) = c.use_harmonics {
        config.use_harmonics = h;
    }
    Ok(config)
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Outcome<()> {
    Ok(write_atomic(&dir.join(name), bytes)?)
}

fn load_inputs(config: &RunConfig) -> Outcome<(FeederTopology, Dataset)> {
    let topology = config.load_topology().map_err(|e| match e {
        Error::MissingArtifact(_) => Failure::from(e),
        e => usage(e),
    })?;
    let dataset = read_dataset(config.out_dir.join(DATASET_FILE))?;
    if dataset.feeder_hash != topology.hash() {
        return Err(usage(Error::Config {
            key: "topology".into(),
            msg: format!("{DATASET_FILE} was generated for a different feeder or sensor set"),
        }));
    }
    Ok((topology, dataset))
}

fn encoders(config: &RunConfig) -> Outcome<Encoders> {
    let orders = required_orders(config.variant, config.use_harmonics);
    Ok(Encoders::new(load_aeds(&config.out_dir, &orders)?, Vec::new()))
}

fn cmd_generate(config: &RunConfig, seed: u64) -> Outcome<()> {
    let (_, dataset) = generate(config, seed).map_err(|e| match e {
        Error::Config { .. } => usage(e),
        e => Failure::from(e),
    })?;
    write_dataset(&dataset, config.out_dir.join(DATASET_FILE))?;
    println!("class,train,eval,test");
    for class in 1..=NUM_CLASSES {
        let n = |s| dataset.count(s, class);
        println!("{class},{},{},{}", n(Split::Train), n(Split::Eval), n(Split::Test));
    }
    Ok(())
}

fn cmd_train_aed(config: &RunConfig, seed: u64, order: u8) -> Outcome<()> {
    let (topology, dataset) = load_inputs(config)?;
    let (params, report) = train_aed_order(config, &topology, &dataset, order, seed)?;
    write(&config.out_dir, &aed_file(order), &params.to_checkpoint().to_bytes())?;
    write(
        &config.out_dir,
        &aed_curve_file(order),
        aed_curve_csv(&report).as_bytes(),
    )?;
    let best = &report.curve[report.best_epoch - 1];
    println!(
        "order {order}: {} epochs, kept epoch {} with eval mse {:.6}",
        report.curve.len(),
        report.best_epoch,
        best.eval_mse
    );
    Ok(())
}

fn cmd_train_graph(config: &RunConfig, seed: u64) -> Outcome<()> {
    if !config.variant.uses_graph() {
        return Err(usage(Error::Config {
            key: "variant".into(),
            msg: format!("variant {} has no graph stage", config.variant.as_str()),
        }));
    }
    let (topology, dataset) = load_inputs(config)?;
    let enc = encoders(config)?;
    let inputs = graph_inputs(config.variant, &enc, &topology, &dataset, config.use_harmonics, seed)?;
    let (model, report) = train_graph_stage(config, config.variant, &inputs, seed)?;
    let checkpoint = graph_checkpoint(&model, config.variant, config.use_harmonics);
    write(&config.out_dir, GRAPH_FILE, &checkpoint.to_bytes())?;
    write(&config.out_dir, GRAPH_CURVE_FILE, graph_curve_csv(&report).as_bytes())?;
    let best = &report.curve[report.best_epoch - 1];
    println!(
        "{}: {} epochs, kept epoch {} with eval mi {:.6}",
        config.variant.as_str(),
        report.curve.len(),
        report.best_epoch,
        best.eval_mi
    );
    Ok(())
}

/// Event index and final vectors of the configured variant from stored
/// artifacts; writes the sensor embeddings when the variant has them.
fn event_space(config: &RunConfig, seed: u64) -> Outcome<(EventIndex, Vec<Vec<f64>>)> {
    let (topology, dataset) = load_inputs(config)?;
    let enc = encoders(config)?;
    let (variant, h) = (config.variant, config.use_harmonics);
    if variant.uses_aed() {
        let em = sensor_embeddings(&enc, &topology, &dataset, h)?;
        let c = embeddings_checkpoint(&topology.sensor_labels(), &em)?;
        write(&config.out_dir, EMBEDDINGS_FILE, &c.to_bytes())?;
        if !variant.uses_graph() {
            return Ok((EventIndex::of(&dataset), event_vectors(variant, Some(&em), None)?));
        }
    }
    let model = graph_from_checkpoint(&Checkpoint::load(config.out_dir.join(GRAPH_FILE))?, variant, h)?;
    let inputs = graph_inputs(variant, &enc, &topology, &dataset, h, seed)?;
    Ok((
        EventIndex::of(&dataset),
        event_vectors(variant, None, Some((&model, &inputs)))?,
    ))
}

fn cmd_cluster(config: &RunConfig, seed: u64) -> Outcome<()> {
    let (index, vectors) = event_space(config, seed)?;
    let label = config.variant.label(config.use_harmonics);
    let (report, _) = cluster_events(&label, &index, &vectors, config, seed)?;
    write(&config.out_dir, REPORT_FILE, report.to_csv().as_bytes())?;
    println!("variant,ari,seed");
    println!("{}", report.summary_line());
    Ok(())
}

fn cmd_project(config: &RunConfig, seed: u64) -> Outcome<()> {
    let (index, vectors) = event_space(config, seed)?;
    write(
        &config.out_dir,
        PROJECTION_FILE,
        projection(&index, &vectors)?.as_bytes(),
    )?;
    let rows = index.splits.iter().filter(|&&s| s == Split::Test).count();
    println!(
        "{rows} test events projected to {}",
        config.out_dir.join(PROJECTION_FILE).display()
    );
    Ok(())
}

fn parse_variants(names: &[String]) -> Outcome<Vec<Variant>> {
    if names.iter().any(|n| n == "all") {
        return Ok(Variant::ALL.to_vec());
    }
    names
        .iter()
        .map(|n| {
            Variant::parse(n).ok_or_else(|| {
                usage(Error::Config {
                    key: "--variants".into(),
                    msg: format!("unknown variant `{n}`"),
                })
            })
        })
        .collect()
}

fn progress(line: &str) {
    eprintln!("{line}");
}

fn run(cli: Cli) -> Outcome<()> {
    match cli.command {
        Command::Keys => {
            let pairs = RunConfig::default().to_pairs();
            for ((key, value), (_, doc)) in pairs.iter().zip(CONFIG_KEYS) {
                println!("# {doc}\n{key} = {value}");
            }
            Ok(())
        }
        Command::Generate(c) => cmd_generate(&load_config(&c)?, c.seed),
        Command::TrainAed { common, order } => cmd_train_aed(
            &load_config(&common)?,
            common.seed,
            order.parse().expect("validated by clap"),
        ),
        Command::TrainGraph(c) => cmd_train_graph(&load_config(&c)?, c.seed),
        Command::Cluster(c) => cmd_cluster(&load_config(&c)?, c.seed),
        Command::Project(c) => cmd_project(&load_config(&c)?, c.seed),
        Command::Ablate {
            common,
            variants,
            seeds,
            harmonics,
        } => {
            let config = load_config(&common)?;
            let variants = parse_variants(&variants)?;
            let modes: &[bool] = match harmonics {
                Harmonics::Off => &[false],
                Harmonics::On => &[true],
                Harmonics::Both => &[false, true],
            };
            let result = ablate(
                &config,
                &variants,
                modes,
                &seeds,
                common.seed,
                Some(&config.out_dir),
                &mut progress,
            )?;
            print!("{}", result.table_csv());
            Ok(())
        }
        Command::Sweep { common, sensors, seeds } => {
            let config = load_config(&common)?;
            let rows = sweep(
                &config,
                &sensors,
                &seeds,
                common.seed,
                Some(&config.out_dir),
                &mut progress,
            )
            .map_err(|e| match e {
                Error::Config { .. } => usage(e),
                e => Failure::from(e),
            })?;
            print!("{}", sweep_csv(&rows));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}
