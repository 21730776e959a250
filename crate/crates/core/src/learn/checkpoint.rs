//! Self-describing checkpoint file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "DSIMCKPT"
//! version      u32
//! header_len   u32
//! header       header_len bytes of UTF-8 JSON (see `Header`)
//! arrays       f64 little-endian, concatenated in the order of `header.arrays`
//! ```
//!
//! Array order: `policy`, `log_std`, `value`, `target_value`, `norm_mean`,
//! `norm_var`, `actor_m`, `actor_v`, `critic_m`, `critic_v`, `scalars`.
//! `scalars` holds the optimizer hyper-parameters and normalizer count/clip.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Adam, AgentState, Mlp, RunningNorm};

pub const MAGIC: &[u8; 8] = b"DSIMCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("truncated checkpoint: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub algorithm: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    pub config_hash: String,
    pub env_steps: u64,
    pub iteration: u64,
    pub faults: u64,
    pub actor_t: u64,
    pub critic_t: u64,
    pub arrays: Vec<ArrayEntry>,
}

/// Contents of a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub algorithm: String,
    pub config_hash: String,
    pub agent: AgentState,
}

fn hidden(net: &Mlp) -> Vec<usize> {
    net.sizes[1..net.sizes.len() - 1].to_vec()
}

pub fn to_bytes(ck: &Checkpoint) -> Vec<u8> {
    let a = &ck.agent;
    let scalars = vec![
        a.actor_opt.lr,
        a.actor_opt.beta1,
        a.actor_opt.beta2,
        a.actor_opt.eps,
        a.critic_opt.lr,
        a.critic_opt.beta1,
        a.critic_opt.beta2,
        a.critic_opt.eps,
        a.norm.count,
        a.norm.clip,
    ];
    let arrays: Vec<(&str, &[f64])> = vec![
        ("policy", &a.policy),
        ("log_std", &a.log_std),
        ("value", &a.value),
        ("target_value", &a.target_value),
        ("norm_mean", &a.norm.mean),
        ("norm_var", &a.norm.var),
        ("actor_m", &a.actor_opt.m),
        ("actor_v", &a.actor_opt.v),
        ("critic_m", &a.critic_opt.m),
        ("critic_v", &a.critic_opt.v),
        ("scalars", &scalars),
    ];
    let header = Header {
        format_version: FORMAT_VERSION,
        algorithm: ck.algorithm.clone(),
        obs_dim: a.obs_dim(),
        act_dim: a.act_dim(),
        policy_hidden: hidden(&a.policy_net),
        value_hidden: hidden(&a.value_net),
        config_hash: ck.config_hash.clone(),
        env_steps: a.env_steps,
        iteration: a.iteration,
        faults: a.faults,
        actor_t: a.actor_opt.t,
        critic_t: a.critic_opt.t,
        arrays: arrays
            .iter()
            .map(|(n, v)| ArrayEntry {
                name: (*n).to_string(),
                len: v.len(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + 8 * arrays.iter().map(|a| a.1.len()).sum::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, v) in &arrays {
        for x in v.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < 16 {
        if bytes.len() >= 8 && &bytes[..8] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        return Err(CheckpointError::Truncated {
            expected: 16,
            found: bytes.len(),
        });
    }
    if &bytes[..8] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if bytes.len() < 16 + hlen {
        return Err(CheckpointError::Truncated {
            expected: 16 + hlen,
            found: bytes.len(),
        });
    }
    let header: Header = serde_json::from_slice(&bytes[16..16 + hlen])
        .map_err(|e| CheckpointError::Malformed(format!("header: {e}")))?;
    let total: usize = header.arrays.iter().map(|a| a.len).sum();
    let expected = 16 + hlen + 8 * total;
    if bytes.len() < expected {
        return Err(CheckpointError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(CheckpointError::Malformed(format!(
            "{} trailing bytes",
            bytes.len() - expected
        )));
    }
    let mut off = 16 + hlen;
    let mut take = |name: &str, len: usize| -> Result<Vec<f64>, CheckpointError> {
        let entry = header
            .arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| CheckpointError::Malformed(format!("missing array {name}")))?;
        if entry.len != len {
            return Err(CheckpointError::Malformed(format!(
                "array {name} has length {}, expected {len}",
                entry.len
            )));
        }
        let v = bytes[off..off + 8 * len]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        off += 8 * len;
        Ok(v)
    };
    let names: Vec<&str> = header.arrays.iter().map(|a| a.name.as_str()).collect();
    let order = [
        "policy",
        "log_std",
        "value",
        "target_value",
        "norm_mean",
        "norm_var",
        "actor_m",
        "actor_v",
        "critic_m",
        "critic_v",
        "scalars",
    ];
    if names != order {
        return Err(CheckpointError::Malformed(format!("unexpected array order {names:?}")));
    }
    let policy_net = Mlp::new(header.obs_dim, &header.policy_hidden, header.act_dim, true);
    let value_net = Mlp::new(header.obs_dim, &header.value_hidden, 1, false);
    let (np, nv, na, no) = (
        policy_net.n_params(),
        value_net.n_params(),
        header.act_dim,
        header.obs_dim,
    );
    let policy = take("policy", np)?;
    let log_std = take("log_std", na)?;
    let value = take("value", nv)?;
    let target_value = take("target_value", nv)?;
    let norm_mean = take("norm_mean", no)?;
    let norm_var = take("norm_var", no)?;
    let actor_m = take("actor_m", np + na)?;
    let actor_v = take("actor_v", np + na)?;
    let critic_m = take("critic_m", nv)?;
    let critic_v = take("critic_v", nv)?;
    let s = take("scalars", 10)?;
    let agent = AgentState {
        policy_net,
        value_net,
        policy,
        log_std,
        value,
        target_value,
        norm: RunningNorm {
            mean: norm_mean,
            var: norm_var,
            count: s[8],
            clip: s[9],
        },
        actor_opt: Adam {
            lr: s[0],
            beta1: s[1],
            beta2: s[2],
            eps: s[3],
            m: actor_m,
            v: actor_v,
            t: header.actor_t,
        },
        critic_opt: Adam {
            lr: s[4],
            beta1: s[5],
            beta2: s[6],
            eps: s[7],
            m: critic_m,
            v: critic_v,
            t: header.critic_t,
        },
        env_steps: header.env_steps,
        iteration: header.iteration,
        faults: header.faults,
    };
    Ok(Checkpoint {
        algorithm: header.algorithm,
        config_hash: header.config_hash,
        agent,
    })
}

/// Writes to a sibling temporary file and renames it into place.
pub fn save(ck: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    let bytes = to_bytes(ck);
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    from_bytes(&std::fs::read(path)?)
}
