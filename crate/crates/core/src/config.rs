//! Shared pieces of the TOML configuration schema.

use std::path::Path;

use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the norm of a quaternion written in a config file.
pub const UNIT_QUATERNION_TOL: f64 = 1e-12;

/// A rigid transform as written in config files.
///
/// Rotation is given either as roll/pitch/yaw (radians, applied as
/// `Rz(yaw) * Ry(pitch) * Rx(roll)`) or as a `[w, x, y, z]` quaternion,
/// which must already be unit norm. Neither means identity.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformConfig {
    #[serde(default)]
    pub translation: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rpy: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quaternion: Option<[f64; 4]>,
}

impl TransformConfig {
    pub fn to_isometry(&self) -> Result<Isometry3<f64>> {
        let rotation = match (self.rpy, self.quaternion) {
            (Some(_), Some(_)) => {
                return Err(Error::invalid(
                    "transform",
                    "give either `rpy` or `quaternion`, not both",
                ))
            }
            (Some([r, p, y]), None) => UnitQuaternion::from_euler_angles(r, p, y),
            (None, Some([w, x, y, z])) => {
                let raw = Quaternion::new(w, x, y, z);
                let norm = raw.norm();
                if (norm - 1.0).abs() > UNIT_QUATERNION_TOL {
                    return Err(Error::invalid(
                        "transform",
                        format!("quaternion norm {norm} is not 1"),
                    ));
                }
                UnitQuaternion::new_unchecked(raw)
            }
            (None, None) => UnitQuaternion::identity(),
        };
        let [x, y, z] = self.translation;
        Ok(Isometry3::from_parts(Translation3::new(x, y, z), rotation))
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        let q = iso.rotation.quaternion();
        let t = iso.translation.vector;
        TransformConfig {
            translation: [t.x, t.y, t.z],
            rpy: None,
            quaternion: Some([q.w, q.i, q.j, q.k]),
        }
    }
}

/// Parses a TOML document, naming the source file in any error.
pub fn parse_toml<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        message: e.to_string().trim_end().to_string(),
    })
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_toml(&text, path)
}
