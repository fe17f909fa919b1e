//! Run configuration: a TOML file with `[model]` and `[train]` tables,
//! overridden by command-line flags.

use std::fs;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use srl_core::model::ModelConfig;
use srl_core::trainer::TrainConfig;

use crate::{Overrides, UsageError};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn resolve(o: &Overrides) -> Result<Self> {
        let mut rc = match &o.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
                toml::from_str(&text)
                    .map_err(|e| UsageError(format!("config {}: {}", path.display(), e.message())))?
            }
            None => RunConfig::default(),
        };
        let m = &mut rc.model;
        let t = &mut rc.train;
        if let Some(v) = o.rho {
            m.rho = v;
        }
        if let Some(v) = o.column_mode {
            m.column_mode = v;
        }
        if let Some(v) = o.embedding_size {
            m.embedding_size = v;
        }
        if let Some(v) = o.hidden_size {
            m.hidden_size = v;
        }
        if let Some(v) = o.layers {
            m.num_layers = v;
        }
        if let Some(v) = o.flag_size {
            m.predicate_flag_size = v;
        }
        if let Some(v) = o.min_freq {
            m.min_freq = v;
        }
        if let Some(v) = o.lr {
            t.initial_lr = v;
        }
        if let Some(v) = o.max_epochs {
            t.max_epochs = v;
        }
        if let Some(v) = o.lr_halving_patience {
            t.lr_halving_patience = v;
        }
        if let Some(v) = o.early_stop_patience {
            t.early_stop_patience = v;
        }
        if let Some(v) = o.clip_norm {
            t.clip_norm = v;
        }
        if let Some(v) = o.seed {
            m.seed = v;
            t.seed = v;
        }
        rc.model.validate()?;
        rc.train.validate()?;
        Ok(rc)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

#[cfg(test)]
mod tests {
    use srl_core::subword::Rho;

    use super::*;

    #[test]
    fn flags_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "[model]\nrho = \"char3\"\nhidden_size = 7\n[train]\nmax_epochs = 4\n").unwrap();
        let o = Overrides {
            config: Some(path),
            hidden_size: Some(9),
            seed: Some(5),
            ..Overrides::default()
        };
        let rc = RunConfig::resolve(&o).unwrap();
        assert_eq!(rc.model.rho, Rho::Char3);
        assert_eq!(rc.model.hidden_size, 9);
        assert_eq!(rc.train.max_epochs, 4);
        assert_eq!((rc.model.seed, rc.train.seed), (5, 5));
        let back: RunConfig = toml::from_str(&rc.to_toml()).unwrap();
        assert_eq!(back, rc);
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "[model]\nhiden_size = 7\n").unwrap();
        let err = RunConfig::resolve(&Overrides {
            config: Some(path),
            ..Overrides::default()
        })
        .unwrap_err();
        assert!(err.is::<UsageError>());
    }
}
