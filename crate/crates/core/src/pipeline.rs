//! Preprocessing from measured responses to grid-sampled magnitudes, in a
//! fixed order: onset alignment, interpolation onto the cubed-sphere cell
//! directions, then magnitude extraction and tensor packing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barycentric::{barycentric_upsample, BarycentricError, WeightMode};
use crate::cubesphere::{set_from_grid, CubeSphereError, PanelTensor};
use crate::data::HrirSet;
use crate::itd::{align_set, detect_onsets, ItdError, KalmanOverrides};
use crate::projection::CubedSphereGrid;
use crate::spectra::{extract_magnitudes, MagnitudeHrtf, SpectraError, DEFAULT_NFFT};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("align: {0}")]
    Align(#[from] ItdError),
    #[error("interpolate: {0}")]
    Interpolate(#[from] BarycentricError),
    #[error("magnitudes: {0}")]
    Magnitudes(#[from] SpectraError),
    #[error("project: {0}")]
    Project(#[from] CubeSphereError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub nfft: usize,
    /// Samples kept ahead of each detected onset.
    pub pre_roll: usize,
    /// Length of the aligned responses; `None` keeps as many samples as fit
    /// after every onset, capped at `nfft`.
    pub length_out: Option<usize>,
    pub skip_align: bool,
    pub weight_mode: WeightMode,
    pub kalman: KalmanOverrides,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            nfft: DEFAULT_NFFT,
            pre_roll: 8,
            length_out: None,
            skip_align: false,
            weight_mode: WeightMode::Spherical,
            kalman: KalmanOverrides::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    /// Aligned responses interpolated to the grid cell directions.
    pub grid_set: HrirSet,
    pub magnitudes: MagnitudeHrtf,
    pub tensor: PanelTensor,
}

fn aligned(set: &HrirSet, cfg: &PreprocessConfig) -> Result<HrirSet, PipelineError> {
    if cfg.skip_align {
        return Ok(set.clone());
    }
    let length = match cfg.length_out {
        Some(l) => l,
        None => {
            let onsets = detect_onsets(set, &cfg.kalman)?;
            let latest = onsets.iter().map(|o| o.sample).max().unwrap_or(0);
            (set.taps() + cfg.pre_roll).saturating_sub(latest).min(cfg.nfft)
        }
    };
    Ok(align_set(set, &cfg.kalman, cfg.pre_roll, length)?.0)
}

pub fn preprocess(set: &HrirSet, grid: &CubedSphereGrid, cfg: &PreprocessConfig) -> Result<Preprocessed, PipelineError> {
    let aligned = aligned(set, cfg)?;
    let grid_set = barycentric_upsample(&aligned, grid, cfg.weight_mode)?;
    let magnitudes = extract_magnitudes(&grid_set, cfg.nfft)?;
    let tensor = set_from_grid(&magnitudes, grid)?;
    Ok(Preprocessed {
        grid_set,
        magnitudes,
        tensor,
    })
}
