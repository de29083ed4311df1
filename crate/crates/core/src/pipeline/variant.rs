/// Pipeline variants of the ablation study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    /// Sensor embeddings clustered directly.
    Aed,
    /// Raw normalised series as node features on the full feeder graph.
    TsNgNl,
    /// Embeddings on the contracted sensor-only graph.
    AedNg,
    /// Full feeder graph with per-event random loading for flat buses.
    AedNgRl,
    /// Full feeder graph trained on graph-level scores only.
    AedGNl,
    /// Full feeder graph, node/graph scores, nominal loading.
    GraphPmu,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::TsNgNl,
        Variant::AedNg,
        Variant::AedNgRl,
        Variant::AedGNl,
        Variant::Aed,
        Variant::GraphPmu,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Aed => "aed",
            Variant::TsNgNl => "ts-ng-nl",
            Variant::AedNg => "aed-ng",
            Variant::AedNgRl => "aed-ng-rl",
            Variant::AedGNl => "aed-g-nl",
            Variant::GraphPmu => "graphpmu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Variant::ALL.into_iter().find(|v| v.as_str() == s)
    }

    /// Whether the variant trains a graph encoder.
    pub fn uses_graph(self) -> bool {
        self != Variant::Aed
    }

    /// Whether node features come from the autoencoders.
    pub fn uses_aed(self) -> bool {
        self != Variant::TsNgNl
    }

    /// Label used in reports; harmonic runs carry a suffix.
    pub fn label(self, use_harmonics: bool) -> String {
        if use_harmonics {
            format!("{}+harmonics", self.as_str())
        } else {
            self.as_str().to_string()
        }
    }
}
