//! Train/validation/test splits.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{AttributedGraph, MaskRole, NodeMasks, NodePartition};
use crate::error::{Error, Result};
use crate::numerics::rng::{stream, stream_rng};

/// Share of tail nodes used for validation under the tail protocol.
pub const VALID_SHARE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Train on head nodes; tail nodes split 1:4 into validation and test.
    Tail,
    /// Fixed masks shipped with the bundle.
    Public,
}

impl std::str::FromStr for SplitMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tail" => Ok(Self::Tail),
            "public" => Ok(Self::Public),
            other => Err(Error::Config(format!(
                "unknown split '{other}' (tail|public)"
            ))),
        }
    }
}

impl std::fmt::Display for SplitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Tail => "tail",
            Self::Public => "public",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    pub mode: SplitMode,
}

/// Builds the split. `masks` are keyed by bundle id and only needed in
/// public mode; nodes removed by preprocessing are skipped.
pub fn make_splits(
    g: &AttributedGraph,
    partition: &NodePartition,
    mode: SplitMode,
    seed: u64,
    masks: Option<&NodeMasks>,
) -> Result<DatasetSplit> {
    match mode {
        SplitMode::Tail => {
            let mut tail = partition.tail_nodes.clone();
            tail.shuffle(&mut stream_rng(seed, stream::SPLIT));
            let n_valid = (tail.len() as f64 * VALID_SHARE).round() as usize;
            let mut valid = tail[..n_valid].to_vec();
            let mut test = tail[n_valid..].to_vec();
            valid.sort_unstable();
            test.sort_unstable();
            Ok(DatasetSplit {
                train: partition.head_nodes.clone(),
                valid,
                test,
                mode,
            })
        }
        SplitMode::Public => {
            let masks = masks.ok_or_else(|| {
                Error::InvalidArgument("public split needs masks.tsv in the bundle".into())
            })?;
            let mut split = DatasetSplit {
                train: Vec::new(),
                valid: Vec::new(),
                test: Vec::new(),
                mode,
            };
            for (v, orig) in g.original_ids().iter().enumerate() {
                match masks.get(orig) {
                    Some(MaskRole::Train) => split.train.push(v),
                    Some(MaskRole::Valid) => split.valid.push(v),
                    Some(MaskRole::Test) => split.test.push(v),
                    None => {}
                }
            }
            Ok(split)
        }
    }
}
