//! Single-file checkpoints.
//!
//! Layout: the 8-byte magic `FINLMCKP`, a little-endian `u32` format
//! version, a little-endian `u64` header length, a JSON header, then every
//! parameter tensor as little-endian `f64` in header order, followed by the
//! optimizer's first and then second moments in the same order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layers::Tensors;
use super::pretrain::{PretrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::lexicon::{Lexicon, LexiconFile};
use crate::masking::MaskingPolicy;
use crate::tokenizer::Tokenizer;

pub const MAGIC: &[u8; 8] = b"FINLMCKP";
pub const FORMAT_VERSION: u32 = 1;

/// A training state with everything needed to reuse it on new text.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub state: TrainState,
    pub tokenizer: Tokenizer,
    pub lexicon: Lexicon,
    pub policy: MaskingPolicy,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: PretrainConfig,
    epoch: usize,
    adam_step: u64,
    policy: MaskingPolicy,
    policy_digest: String,
    tokenizer: Vec<String>,
    lexicon: LexiconFile,
    tensors: Vec<TensorEntry>,
}

fn put(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    let state = &ckpt.state;
    let tensors = state.model.tensors();
    let header = Header {
        config: state.config.clone(),
        epoch: state.epoch,
        adam_step: state.adam.step,
        policy: ckpt.policy.clone(),
        policy_digest: ckpt.policy.digest(),
        tokenizer: ckpt.tokenizer.tokens().to_vec(),
        lexicon: ckpt.lexicon.to_file(),
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                len: t.len(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, t) in &tensors {
        put(&mut buf, t);
    }
    for m in &state.adam.m {
        put(&mut buf, m);
    }
    for v in &state.adam.v {
        put(&mut buf, v);
    }
    // write beside the target, then rename into place
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(&buf).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |detail: String| Error::format("checkpoint", path, detail);
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = bytes.get(20..20 + header_len).ok_or_else(|| bad("truncated header".into()))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| bad(e.to_string()))?;
    let policy_digest = header.policy.digest();
    if policy_digest != header.policy_digest {
        return Err(bad("masking policy digest mismatch".into()));
    }
    let tokenizer = Tokenizer::from_tokens(header.tokenizer)?;
    let lexicon = Lexicon::from_file(header.lexicon)?;

    let vocab = header.config.encoder.vocab_size;
    let mut state = TrainState::init(&header.config, vocab, header.policy.max_span)?;
    let expected: Vec<(String, usize)> = state.model.tensors().iter().map(|(n, t)| (n.clone(), t.len())).collect();
    if expected.len() != header.tensors.len()
        || expected.iter().zip(&header.tensors).any(|((n, l), e)| *n != e.name || *l != e.len)
    {
        return Err(bad("tensor list does not match the configuration".into()));
    }
    let total: usize = expected.iter().map(|(_, l)| l).sum();
    let data = &bytes[20 + header_len..];
    if data.len() != 3 * total * 8 {
        return Err(bad(format!("expected {} tensor bytes, found {}", 3 * total * 8, data.len())));
    }
    let mut values = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for (_, t) in state.model.tensors_mut() {
        t.iter_mut().for_each(|v| *v = values.next().unwrap());
    }
    for m in state.adam.m.iter_mut().chain(state.adam.v.iter_mut()) {
        m.iter_mut().for_each(|v| *v = values.next().unwrap());
    }
    state.adam.step = header.adam_step;
    state.epoch = header.epoch;
    Ok(Checkpoint {
        state,
        tokenizer,
        lexicon,
        policy: header.policy,
    })
}
