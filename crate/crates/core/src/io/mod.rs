//! File formats: datasets, checkpoints, trajectories, replan scripts and SVG plots.

mod checkpoint;
mod dataset;
mod svg;
mod trajectory;

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub use checkpoint::{
    load_checkpoint, save_checkpoint, CheckpointFile, MatrixRecord, CHECKPOINT_VERSION,
};
pub use dataset::{
    c_curve, gen_pouring, gen_toy_jc, j_control_polygon, j_curve, pouring_can, pouring_cup,
    pouring_orientation, pouring_position, DatasetFile, DatasetHeader, DemoRecord, PouringConfig,
    ToyJcConfig, DATASET_VERSION, POURING_BRANCHES, POURING_GRASP, POURING_HUB,
};
pub use svg::{latent_raster, plot_latent, render_svg, PlotMode, PlotOptions, Raster};
pub use trajectory::{
    load_script, load_trajectory, parse_obstacle, parse_pose, save_script, save_timing_report,
    save_trajectory, trajectory_csv,
};

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        Error::format(
            format!("{}: {field}", path.display()),
            e.into_inner().to_string(),
        )
    })
}
