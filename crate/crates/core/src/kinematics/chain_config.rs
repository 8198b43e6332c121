use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{Joint, KinematicChain};
use crate::config::{parse_toml, read_toml, TransformConfig};
use crate::error::Result;

/// The bundled 7-DOF reference arm (about 0.92 m reach from the shoulder).
pub const REFERENCE_CHAIN_TOML: &str = include_str!("../../config/reference_chain.toml");

/// On-disk chain description. See `config/reference_chain.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    #[serde(default)]
    pub name: String,
    #[serde(rename = "joint")]
    pub joints: Vec<JointConfig>,
    #[serde(default)]
    pub tool: TransformConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointConfig {
    #[serde(default)]
    pub name: String,
    pub axis: [f64; 3],
    #[serde(default)]
    pub origin: TransformConfig,
}

impl ChainConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        read_toml(path)
    }

    pub fn reference() -> Self {
        parse_toml(REFERENCE_CHAIN_TOML, Path::new("reference_chain.toml"))
            .expect("bundled chain config parses")
    }

    pub fn build(&self) -> Result<KinematicChain> {
        let joints = self
            .joints
            .iter()
            .map(|j| {
                let [x, y, z] = j.axis;
                Joint::new(j.name.clone(), Vector3::new(x, y, z), j.origin.to_isometry()?)
            })
            .collect::<Result<Vec<_>>>()?;
        KinematicChain::new(joints, self.tool.to_isometry()?)
    }
}

impl KinematicChain {
    /// The bundled reference arm.
    pub fn reference() -> Self {
        ChainConfig::reference()
            .build()
            .expect("bundled chain config is valid")
    }

    pub fn from_config_file(path: &Path) -> Result<Self> {
        ChainConfig::from_path(path)?.build()
    }
}
