use std::fs;
use std::path::Path;

use vigxray::imaging::{GridCoord, GRID_SIDE, NUM_PATCHES};
use vigxray::model::{load_weights, ModelConfig};
use vigxray::Weights;

use crate::error::CliError;
use crate::NeighborArgs;

pub fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Io(format!("{what} {} does not exist", path.display())))
    }
}

pub fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))
}

pub fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

pub fn load(path: &Path) -> Result<Weights, CliError> {
    require_file(path, "weights file")?;
    Ok(load_weights(path)?)
}

/// The weights' config with neighbor overrides applied and validated.
pub fn run_config(base: &ModelConfig, n: &NeighborArgs) -> Result<ModelConfig, CliError> {
    let mut cfg = base.clone();
    if let Some(k) = n.k {
        cfg.k = k;
    }
    match n.k_end {
        Some(0) => cfg.k_end = None,
        Some(k) => cfg.k_end = Some(k),
        None => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `row,col` or a flat patch index.
pub fn parse_patch(s: &str) -> Result<usize, CliError> {
    let bad = || CliError::Validation(format!("patch {s:?}: expected `row,col` (0..14) or an index (0..196)"));
    let idx = match s.split_once(',') {
        Some((r, c)) => {
            let row: usize = r.trim().parse().map_err(|_| bad())?;
            let col: usize = c.trim().parse().map_err(|_| bad())?;
            if row >= GRID_SIDE || col >= GRID_SIDE {
                return Err(bad());
            }
            GridCoord { row, col }.index()
        }
        None => s.trim().parse().map_err(|_| bad())?,
    };
    if idx >= NUM_PATCHES {
        return Err(bad());
    }
    Ok(idx)
}

pub fn read_class_names(path: &Path, classes: usize) -> Result<Vec<String>, CliError> {
    require_file(path, "classes file")?;
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let names: Vec<String> = text.lines().map(|l| l.trim().to_string()).collect();
    if names.len() < classes {
        return Err(CliError::Validation(format!(
            "{} lists {} names, the model has {classes} classes",
            path.display(),
            names.len()
        )));
    }
    Ok(names)
}
