use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::canny::CannyParams;
use super::hints::HintParams;
use crate::error::{Error, Result};
use crate::image::InputMode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub path: PathBuf,
    pub scene: u64,
}

/// Ordered frame list with the synthesis settings. Frames sharing a scene
/// id are consecutive and temporally ordered.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub frames: Vec<FrameEntry>,
    pub mode: InputMode,
    #[serde(default)]
    pub canny: CannyParams,
    #[serde(default)]
    pub hints: HintParams,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        self.canny.validate()?;
        let mut seen = std::collections::HashSet::new();
        let mut last = None;
        for f in &self.frames {
            if last != Some(f.scene) && !seen.insert(f.scene) {
                return Err(Error::InvalidInput(format!(
                    "scene {} is not contiguous in the manifest",
                    f.scene
                )));
            }
            last = Some(f.scene);
        }
        Ok(())
    }

    /// Loads a manifest; relative frame paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest = serde_json::from_slice(&bytes)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for f in &mut m.frames {
            if f.path.is_relative() {
                f.path = base.join(&f.path);
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}
