//! GLFS binary design files and their JSON group sidecar.
//!
//! Layout (all little-endian): `"GLFS"`, version `u32 = 1`, `N u64`, `P u64`,
//! the response as `N` doubles, then the matrix as `N * P` doubles row-major.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::design::GroupedDesign;
use crate::error::{Error, Result};
use crate::partition::{make_partition, GroupPartition, WeightRule};

pub const GLFS_MAGIC: &[u8; 4] = b"GLFS";
pub const GLFS_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

pub fn encode_glfs(design: &GroupedDesign) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * (design.rows() * (design.cols() + 1)));
    out.extend_from_slice(GLFS_MAGIC);
    out.extend_from_slice(&GLFS_VERSION.to_le_bytes());
    out.extend_from_slice(&(design.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(design.cols() as u64).to_le_bytes());
    for v in design.response().iter().chain(design.matrix()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_glfs(bytes: &[u8]) -> Result<GroupedDesign> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format("GLFS header truncated".into()));
    }
    if &bytes[..4] != GLFS_MAGIC {
        return Err(Error::Format("bad GLFS magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != GLFS_VERSION {
        return Err(Error::Format(format!("unsupported GLFS version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let p = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let expected = n
        .checked_mul(p)
        .and_then(|np| np.checked_add(n))
        .and_then(|c| c.checked_mul(8))
        .and_then(|b| usize::try_from(b).ok())
        .ok_or_else(|| Error::Format("GLFS dimensions overflow".into()))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != expected {
        return Err(Error::Format(format!("GLFS body has {} bytes, expected {expected}", body.len())));
    }
    let mut values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let n = n as usize;
    let response: Vec<f64> = values.by_ref().take(n).collect();
    let matrix: Vec<f64> = values.collect();
    GroupedDesign::new(n, p as usize, matrix, response)
}

pub fn write_glfs(path: &Path, design: &GroupedDesign) -> Result<()> {
    std::fs::write(path, encode_glfs(design))?;
    Ok(())
}

pub fn read_glfs(path: &Path) -> Result<GroupedDesign> {
    decode_glfs(&std::fs::read(path)?)
}

/// Group metadata stored next to a GLFS file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub group_sizes: Vec<usize>,
    /// `unit`, `sqrt_size` or `explicit`.
    pub weight_rule: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_ids: Option<Vec<String>>,
}

impl Sidecar {
    pub fn new(group_sizes: Vec<usize>, rule: &WeightRule, feature_ids: Option<Vec<String>>) -> Self {
        let weights = match rule {
            WeightRule::Explicit(w) => Some(w.clone()),
            _ => None,
        };
        Self {
            group_sizes,
            weight_rule: rule.name().into(),
            weights,
            feature_ids,
        }
    }

    pub fn rule(&self) -> Result<WeightRule> {
        match (self.weight_rule.as_str(), &self.weights) {
            ("unit", _) => Ok(WeightRule::Unit),
            ("sqrt_size", _) => Ok(WeightRule::SqrtSize),
            ("explicit", Some(w)) => Ok(WeightRule::Explicit(w.clone())),
            ("explicit", None) => Err(Error::Format("explicit weight rule without weights".into())),
            (other, _) => Err(Error::Format(format!("unknown weight rule {other:?}"))),
        }
    }

    pub fn partition(&self) -> Result<GroupPartition> {
        make_partition(&self.group_sizes, &self.rule()?)
    }
}

/// `data.glfs` → `data.glfs.json`.
pub fn sidecar_path(data: &Path) -> PathBuf {
    let mut s = data.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save_dataset(path: &Path, design: &GroupedDesign, sidecar: &Sidecar) -> Result<()> {
    let total: usize = sidecar.group_sizes.iter().sum();
    if total != design.cols() {
        return Err(Error::SizeMismatch {
            expected: design.cols(),
            got: total,
        });
    }
    write_glfs(path, design)?;
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(sidecar)?)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<(GroupedDesign, Sidecar)> {
    let design = read_glfs(path)?;
    let sidecar: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    if let Some(ids) = &sidecar.feature_ids {
        if ids.len() != design.cols() {
            return Err(Error::Format(format!("{} feature ids for {} columns", ids.len(), design.cols())));
        }
    }
    design.check_partition(&sidecar.partition()?)?;
    Ok((design, sidecar))
}
