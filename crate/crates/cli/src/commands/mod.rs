pub mod dataset;
pub mod eval;
pub mod infer;
pub mod serve;
pub mod train;

use std::path::{Path, PathBuf};

use hintcolor::dataset::{build_samples, DatasetManifest, SequenceSample};

use crate::CliError;

/// PNG files directly inside `dir`, sorted by file name.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries =
        std::fs::read_dir(dir).map_err(|e| CliError::user(format!("cannot read {}: {e}", dir.display())))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::user(format!("cannot read {}: {e}", dir.display())))?.path();
        let is_png = path.extension().is_some_and(|x| x.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(CliError::user(format!("no PNG frames in {}", dir.display())));
    }
    paths.sort();
    Ok(paths)
}

/// Accepts a manifest file or a dataset directory holding `manifest.json`.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, CliError> {
    let file = if path.is_dir() { path.join("manifest.json") } else { path.to_path_buf() };
    if !file.is_file() {
        return Err(CliError::user(format!("no manifest at {}", file.display())));
    }
    Ok(DatasetManifest::load(&file)?)
}

/// All samples of a manifest; the first failing pair aborts.
pub fn collect_samples(manifest: &DatasetManifest) -> Result<Vec<SequenceSample<f32>>, CliError> {
    let samples = build_samples::<f32>(manifest).collect::<hintcolor::Result<Vec<_>>>()?;
    if samples.is_empty() {
        return Err(CliError::user("the dataset has no consecutive frame pairs"));
    }
    Ok(samples)
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::user(format!("cannot create {}: {e}", dir.display())))
}
