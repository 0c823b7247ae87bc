//! Run configuration: one TOML table per subcommand plus global settings.
//!
//! Every field has a default, so an empty file is a valid config and
//! `--print-config` shows everything that can be set.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use latentprobe::bench::{BipartiteSpec, Perturbation, WorldSpec};
use latentprobe::erase::EraseOptions;
use latentprobe::graph::SplitFractions;
use latentprobe::recommend::TopicAggregation;
use latentprobe::scaling::HomophilyConfig;
use latentprobe::transe::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every randomized stage derives its own seed from it.
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub deterministic: bool,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub ingest: IngestBlock,
    pub synth: WorldSpec,
    pub train: TrainBlock,
    pub sweep: SweepBlock,
    pub eval: EvalBlock,
    pub probe: ProbeBlock,
    pub erase: EraseBlock,
    pub recommend: RecommendBlock,
    pub scale: ScaleBlock,
    pub robustness: RobustnessBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestBlock {
    /// Tab-separated `source relation target` file.
    pub input: Option<PathBuf>,
    /// Optional entity list, one name per line, fixing entity order.
    pub registry: Option<PathBuf>,
    pub wtf_supersedes_follow: bool,
    /// Extra relation tokens, e.g. `{ rec = "WTF" }`.
    pub aliases: BTreeMap<String, String>,
}

impl Default for IngestBlock {
    fn default() -> Self {
        IngestBlock {
            input: None,
            registry: None,
            wtf_supersedes_follow: true,
            aliases: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainBlock {
    pub edges: Option<PathBuf>,
    pub entities: Option<PathBuf>,
    pub split: SplitFractions,
    /// Model settings; `seed` and `deterministic` are taken from the run.
    pub model: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepBlock {
    pub alphas: Vec<f64>,
    pub replicates: usize,
}

impl Default for SweepBlock {
    fn default() -> Self {
        SweepBlock {
            alphas: vec![0.0, 0.25, 0.5, 0.626, 0.75, 1.0],
            replicates: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalBlock {
    pub embedding: Option<PathBuf>,
    pub test_edges: Option<PathBuf>,
    pub pool_size: usize,
    pub k: usize,
    /// Label permutations for the random-scorer p-value.
    pub n_perm: usize,
}

impl Default for EvalBlock {
    fn default() -> Self {
        EvalBlock {
            embedding: None,
            test_edges: None,
            pool_size: 100,
            k: 3,
            n_perm: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeBlock {
    pub embedding: Option<PathBuf>,
    pub attributes_file: Option<PathBuf>,
    /// Attributes to probe; all columns when empty.
    pub attributes: Vec<String>,
    pub n_perm: usize,
    pub ridge: Option<f64>,
    pub standardize: bool,
}

impl Default for ProbeBlock {
    fn default() -> Self {
        ProbeBlock {
            embedding: None,
            attributes_file: None,
            attributes: Vec::new(),
            n_perm: 1000,
            ridge: None,
            standardize: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EraseBlock {
    pub embedding: Option<PathBuf>,
    pub attributes_file: Option<PathBuf>,
    /// Required unless the attribute file has a single column.
    pub attribute: Option<String>,
    /// `seed` is taken from the run.
    pub options: EraseOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecommendBlock {
    pub control: Option<PathBuf>,
    pub treatment: Option<PathBuf>,
    pub attributes_file: Option<PathBuf>,
    /// Topic mixtures; `topics.csv` in the output directory is used when
    /// present.
    pub topics_file: Option<PathBuf>,
    pub diversity_attribute: Option<String>,
    pub interest_attribute: Option<String>,
    pub k: usize,
    pub bootstrap: usize,
    /// Random sample of users to recommend for; everyone when unset.
    pub n_users: Option<usize>,
    pub topic_aggregation: TopicAggregation,
}

impl Default for RecommendBlock {
    fn default() -> Self {
        RecommendBlock {
            control: None,
            treatment: None,
            attributes_file: None,
            topics_file: None,
            diversity_attribute: None,
            interest_attribute: None,
            k: 50,
            bootstrap: 1000,
            n_users: None,
            topic_aggregation: TopicAggregation::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleBlock {
    /// `user_id,mp_id` follow list.
    pub follows: Option<PathBuf>,
    /// `mp_id,party`.
    pub parties: Option<PathBuf>,
    /// `party,position[,...]`; alternatively give `anchors` inline.
    pub reference: Option<PathBuf>,
    pub anchors: BTreeMap<String, Vec<f64>>,
    pub model: HomophilyConfig,
    /// Generate a bipartite world instead of reading `follows`/`parties`.
    pub synthetic: Option<BipartiteSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationRun {
    pub kind: Perturbation,
    pub magnitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessBlock {
    /// Reference embedding of the unperturbed graph; trained when absent.
    pub reference: Option<PathBuf>,
    pub perturbations: Vec<PerturbationRun>,
}

impl Default for RobustnessBlock {
    fn default() -> Self {
        RobustnessBlock {
            reference: None,
            perturbations: vec![
                PerturbationRun {
                    kind: Perturbation::RemoveFollow,
                    magnitude: 0.369,
                },
                PerturbationRun {
                    kind: Perturbation::AddArtificialWtf,
                    magnitude: 0.196,
                },
                PerturbationRun {
                    kind: Perturbation::PartitionHalf,
                    magnitude: 0.5,
                },
            ],
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("bad config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable as TOML")
    }

    /// SHA-256 over everything that can change results; the output
    /// directory and thread count are excluded.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = None;
        canonical.threads = 0;
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        format!("{:x}", Sha256::digest(bytes))
    }
}
