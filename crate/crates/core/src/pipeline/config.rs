use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::variant::Variant;
use crate::error::{Error, Result};
use crate::feeder::{FeederTopology, GeneratorConfig, SplitCounts, CHANNELS, HARMONIC_ORDERS, WINDOW_LEN};
use crate::graphenc::{Fusion, GraphMode, GraphTrainConfig};
use crate::temporal::{AedShape, AedTrainConfig, DecoderSeed};

/// Every configuration key with a one-line description, in file order.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    (
        "topology",
        "feeder file in the GPMU-TOPO format, or `ieee34` for the bundled feeder",
    ),
    (
        "sensors",
        "comma-separated sensor buses overriding the feeder file's set",
    ),
    ("train_per_class", "train events per class"),
    ("eval_per_class", "eval events per class"),
    ("test_per_class", "test events per class"),
    ("window", "samples per event window"),
    ("channels", "channels per window (fixed at 9)"),
    ("harmonics", "harmonic orders carried by the dataset (fixed at 1,3,5)"),
    (
        "variant",
        "pipeline variant: aed, ts-ng-nl, aed-ng, aed-ng-rl, aed-g-nl or graphpmu",
    ),
    (
        "use_harmonics",
        "feed 3rd and 5th harmonic embeddings to the graph stage (true/false)",
    ),
    ("k", "number of mixture components"),
    ("gmm_restarts", "EM restarts per fit"),
    ("aed.epochs", "autoencoder epoch limit"),
    ("aed.batch", "autoencoder mini-batch size"),
    ("aed.lr", "autoencoder Adam step size"),
    ("aed.patience", "autoencoder early-stop patience in epochs"),
    (
        "aed.windows_per_epoch",
        "sensor windows drawn per autoencoder epoch, or `all`",
    ),
    (
        "aed.eval_windows",
        "eval windows scored per autoencoder epoch, or `all`",
    ),
    ("aed.decoder", "decoder seeding: per-step or tiled"),
    ("graph.epochs", "graph-encoder epoch limit"),
    ("graph.batch", "graph-encoder mini-batch size in events"),
    ("graph.lr", "graph-encoder Adam step size"),
    ("graph.patience", "graph-encoder early-stop patience in epochs"),
    ("graph.hidden1", "first GCN layer width"),
    ("graph.hidden2", "second GCN layer width"),
    ("graph.disc_hidden", "discriminator hidden width"),
    ("graph.fusion", "discriminator pair fusion: product or bilinear"),
    (
        "graph.fixed_negatives",
        "draw each event's negative tree once (true/false)",
    ),
    (
        "aed_dir",
        "directory whose seed-<s>/aed-order<h>.model files are reused instead of training",
    ),
    ("out_dir", "directory receiving every artifact"),
];

/// Flat key-value run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub topology: Option<PathBuf>,
    pub sensors: Option<Vec<String>>,
    pub counts: SplitCounts,
    pub window: usize,
    pub variant: Variant,
    pub use_harmonics: bool,
    pub k: usize,
    pub gmm_restarts: usize,
    pub aed_epochs: usize,
    pub aed_batch: usize,
    pub aed_lr: f64,
    pub aed_patience: usize,
    pub aed_windows_per_epoch: Option<usize>,
    pub aed_eval_windows: Option<usize>,
    pub aed_decoder: DecoderSeed,
    pub graph: GraphTrainConfig,
    pub aed_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            topology: None,
            sensors: None,
            counts: SplitCounts {
                train: 200,
                eval: 50,
                test: 50,
            },
            window: WINDOW_LEN,
            variant: Variant::GraphPmu,
            use_harmonics: false,
            k: 9,
            gmm_restarts: 10,
            aed_epochs: 50,
            aed_batch: 32,
            aed_lr: 1e-3,
            aed_patience: 5,
            aed_windows_per_epoch: Some(1280),
            aed_eval_windows: Some(512),
            aed_decoder: DecoderSeed::PerStep,
            graph: GraphTrainConfig::default(),
            aed_dir: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("`{value}` is not a valid number")))
}

fn parse_positive(key: &str, value: &str) -> Result<usize> {
    let v: usize = parse_num(key, value)?;
    if v == 0 {
        return Err(Error::config(key, "must be positive"));
    }
    Ok(v)
}

fn parse_rate(key: &str, value: &str) -> Result<f64> {
    let v: f64 = parse_num(key, value)?;
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::config(key, "must be a positive finite number"));
    }
    Ok(v)
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::config(key, format!("expected true or false, got `{value}`"))),
    }
}

fn parse_limit(key: &str, value: &str) -> Result<Option<usize>> {
    if value == "all" {
        Ok(None)
    } else {
        parse_positive(key, value).map(Some)
    }
}

fn show_limit(v: Option<usize>) -> String {
    v.map_or("all".into(), |n| n.to_string())
}

impl RunConfig {
    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: "expected `key = value`".into(),
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::config(key, format!("set twice (line {})", i + 1)));
            }
            config.set(key, value.trim())?;
        }
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(format!("config file {}", path.display())),
            _ => Error::Io(e),
        })?;
        RunConfig::parse(&text)
    }

    /// Sets one key; flags and config files share this path.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "topology" => self.topology = (value != "ieee34").then(|| PathBuf::from(value)),
            "sensors" => {
                let list: Vec<String> = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                if list.is_empty() {
                    return Err(Error::config(key, "needs at least one bus"));
                }
                self.sensors = Some(list);
            }
            "train_per_class" => self.counts.train = parse_positive(key, value)?,
            "eval_per_class" => self.counts.eval = parse_positive(key, value)?,
            "test_per_class" => self.counts.test = parse_positive(key, value)?,
            "window" => {
                let w = parse_positive(key, value)?;
                if w <= 2 * GeneratorConfig::default().shift_range {
                    return Err(Error::config(key, "window must exceed twice the augmentation shift"));
                }
                self.window = w;
            }
            "channels" => {
                if parse_num::<usize>(key, value)? != CHANNELS {
                    return Err(Error::config(key, format!("only {CHANNELS} channels are supported")));
                }
            }
            "harmonics" => {
                let orders: Vec<u8> = value
                    .split(',')
                    .map(|s| parse_num(key, s.trim()))
                    .collect::<Result<_>>()?;
                if orders != HARMONIC_ORDERS {
                    return Err(Error::config(key, "only the orders 1,3,5 are supported"));
                }
            }
            "variant" => {
                self.variant =
                    Variant::parse(value).ok_or_else(|| Error::config(key, format!("unknown variant `{value}`")))?
            }
            "use_harmonics" => self.use_harmonics = parse_bool(key, value)?,
            "k" => self.k = parse_positive(key, value)?,
            "gmm_restarts" => self.gmm_restarts = parse_positive(key, value)?,
            "aed.epochs" => self.aed_epochs = parse_positive(key, value)?,
            "aed.batch" => self.aed_batch = parse_positive(key, value)?,
            "aed.lr" => self.aed_lr = parse_rate(key, value)?,
            "aed.patience" => self.aed_patience = parse_positive(key, value)?,
            "aed.windows_per_epoch" => self.aed_windows_per_epoch = parse_limit(key, value)?,
            "aed.eval_windows" => self.aed_eval_windows = parse_limit(key, value)?,
            "aed.decoder" => {
                self.aed_decoder =
                    DecoderSeed::parse(value).ok_or_else(|| Error::config(key, format!("unknown decoder `{value}`")))?
            }
            "graph.epochs" => self.graph.epochs = parse_positive(key, value)?,
            "graph.batch" => self.graph.batch = parse_positive(key, value)?,
            "graph.lr" => self.graph.lr = parse_rate(key, value)?,
            "graph.patience" => self.graph.patience = parse_positive(key, value)?,
            "graph.hidden1" => self.graph.hidden1 = parse_positive(key, value)?,
            "graph.hidden2" => self.graph.hidden2 = parse_positive(key, value)?,
            "graph.disc_hidden" => self.graph.disc_hidden = parse_positive(key, value)?,
            "graph.fusion" => {
                self.graph.fusion =
                    Fusion::parse(value).ok_or_else(|| Error::config(key, format!("unknown fusion `{value}`")))?
            }
            "graph.fixed_negatives" => self.graph.fixed_negatives = parse_bool(key, value)?,
            "aed_dir" => self.aed_dir = Some(PathBuf::from(value)),
            "out_dir" => self.out_dir = PathBuf::from(value),
            _ => return Err(Error::config(key, "unknown configuration key")),
        }
        Ok(())
    }

    /// Ordered snapshot of every key, as written next to run artifacts.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let g = &self.graph;
        let pairs: Vec<(&str, String)> = vec![
            (
                "topology",
                self.topology
                    .as_ref()
                    .map_or("ieee34".into(), |p| p.display().to_string()),
            ),
            ("sensors", self.sensors.as_ref().map_or(String::new(), |s| s.join(","))),
            ("train_per_class", self.counts.train.to_string()),
            ("eval_per_class", self.counts.eval.to_string()),
            ("test_per_class", self.counts.test.to_string()),
            ("window", self.window.to_string()),
            ("channels", CHANNELS.to_string()),
            ("harmonics", "1,3,5".into()),
            ("variant", self.variant.as_str().into()),
            ("use_harmonics", self.use_harmonics.to_string()),
            ("k", self.k.to_string()),
            ("gmm_restarts", self.gmm_restarts.to_string()),
            ("aed.epochs", self.aed_epochs.to_string()),
            ("aed.batch", self.aed_batch.to_string()),
            ("aed.lr", format!("{:?}", self.aed_lr)),
            ("aed.patience", self.aed_patience.to_string()),
            ("aed.windows_per_epoch", show_limit(self.aed_windows_per_epoch)),
            ("aed.eval_windows", show_limit(self.aed_eval_windows)),
            ("aed.decoder", self.aed_decoder.as_str().into()),
            ("graph.epochs", g.epochs.to_string()),
            ("graph.batch", g.batch.to_string()),
            ("graph.lr", format!("{:?}", g.lr)),
            ("graph.patience", g.patience.to_string()),
            ("graph.hidden1", g.hidden1.to_string()),
            ("graph.hidden2", g.hidden2.to_string()),
            ("graph.disc_hidden", g.disc_hidden.to_string()),
            ("graph.fusion", g.fusion.as_str().into()),
            ("graph.fixed_negatives", g.fixed_negatives.to_string()),
            (
                "aed_dir",
                self.aed_dir.as_ref().map_or(String::new(), |p| p.display().to_string()),
            ),
            ("out_dir", self.out_dir.display().to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Config-file text; keys left empty are omitted so the text re-parses.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_pairs() {
            if !v.is_empty() {
                writeln!(s, "{k} = {v}").expect("string write");
            }
        }
        s
    }

    /// Feeder with the configured sensor override applied.
    pub fn load_topology(&self) -> Result<FeederTopology> {
        let base = match &self.topology {
            None => FeederTopology::ieee34(),
            Some(p) if !p.exists() => return Err(Error::MissingArtifact(format!("topology file {}", p.display()))),
            Some(p) => FeederTopology::load(p)?,
        };
        match &self.sensors {
            None => Ok(base),
            Some(s) => base
                .with_sensors(s)
                .map_err(|e| Error::config("sensors", e.to_string())),
        }
    }

    pub fn generator(&self) -> GeneratorConfig {
        GeneratorConfig {
            window: self.window,
            ..GeneratorConfig::default()
        }
    }

    pub fn aed_train(&self, seed: u64) -> AedTrainConfig {
        AedTrainConfig {
            shape: AedShape {
                window: self.window,
                decoder: self.aed_decoder,
                ..AedShape::standard()
            },
            epochs: self.aed_epochs,
            batch: self.aed_batch,
            lr: self.aed_lr,
            seed,
            patience: self.aed_patience,
            max_windows_per_epoch: self.aed_windows_per_epoch,
            max_eval_windows: self.aed_eval_windows,
        }
    }

    pub fn graph_train(&self, variant: Variant, seed: u64) -> GraphTrainConfig {
        GraphTrainConfig {
            mode: if variant == Variant::AedGNl {
                GraphMode::GraphOnly
            } else {
                GraphMode::NodeGraph
            },
            seed,
            ..self.graph.clone()
        }
    }
}
