use serde::{Deserialize, Serialize};

use super::Stage;
use crate::error::{Error, Result};

/// `word_only_epochs` word-only epochs followed by word-and-phrase epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSplit {
    pub word_only_epochs: usize,
}

impl Default for StageSplit {
    fn default() -> Self {
        StageSplit { word_only_epochs: 2 }
    }
}

pub fn stage_schedule(epoch_index: usize, total_epochs: usize, split: &StageSplit) -> Result<Stage> {
    if total_epochs == 0 {
        return Err(Error::contract("stage schedule needs at least one epoch"));
    }
    if epoch_index >= total_epochs {
        return Err(Error::contract(format!("epoch {epoch_index} outside a {total_epochs}-epoch run")));
    }
    Ok(if epoch_index < split.word_only_epochs {
        Stage::WordOnly
    } else {
        Stage::WordAndPhrase
    })
}
