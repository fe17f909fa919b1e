//! The semantic role labeler: subword composition, predicate flag,
//! bi-LSTM labeling and softmax output.

mod labeler;
mod params;

use serde::{Deserialize, Serialize};

pub use labeler::{apply_predictions, FrameDistribution, Labeler, MODEL_MAGIC};
pub use params::{apply_sgd, build_inputs, param_shapes, Composition, Gradients, Instance, ModelParams};

use crate::corpus::ColumnMode;
use crate::error::{Error, Result};
use crate::subword::Rho;
use crate::textio::{serde_str, KeyValues};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(with = "serde_str")]
    pub rho: Rho,
    /// Gold or predicted LEMMA/FEAT columns (morph only).
    #[serde(with = "serde_str")]
    pub column_mode: ColumnMode,
    pub embedding_size: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub predicate_flag_size: usize,
    /// Units seen fewer times than this in training map to unknown.
    pub min_freq: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            rho: Rho::Char,
            column_mode: ColumnMode::Gold,
            embedding_size: 200,
            hidden_size: 200,
            num_layers: 1,
            predicate_flag_size: 1,
            min_freq: 1,
            seed: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("embedding_size", self.embedding_size),
            ("hidden_size", self.hidden_size),
            ("num_layers", self.num_layers),
            ("predicate_flag_size", self.predicate_flag_size),
            ("min_freq", self.min_freq),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{} must be at least 1", name)));
            }
        }
        Ok(())
    }

    pub fn to_header(&self, kv: &mut KeyValues) {
        kv.push("rho", self.rho);
        kv.push("column_mode", self.column_mode);
        kv.push("embedding_size", self.embedding_size);
        kv.push("hidden_size", self.hidden_size);
        kv.push("num_layers", self.num_layers);
        kv.push("predicate_flag_size", self.predicate_flag_size);
        kv.push("min_freq", self.min_freq);
        kv.push("seed", self.seed);
    }

    pub fn from_header(kv: &KeyValues) -> Result<Self> {
        let config = ModelConfig {
            rho: kv.require("rho")?.parse()?,
            column_mode: kv.require("column_mode")?.parse()?,
            embedding_size: kv.parsed("embedding_size")?,
            hidden_size: kv.parsed("hidden_size")?,
            num_layers: kv.parsed("num_layers")?,
            predicate_flag_size: kv.parsed("predicate_flag_size")?,
            min_freq: kv.parsed("min_freq")?,
            seed: kv.parsed("seed")?,
        };
        config.validate()?;
        Ok(config)
    }
}
