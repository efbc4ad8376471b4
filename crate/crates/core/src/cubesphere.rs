//! Magnitude spectra laid out on the cubed-sphere grid, with seam-aware
//! padding and spatial downsampling.
//!
//! Cell `(i, j)` of a panel has `i` along the panel x axis and `j` along y.
//! Edges are named from that layout: `Left` is `i = 0`, `Right` is
//! `i = W−1`, `Bottom` is `j = 0` and `Top` is `j = W−1`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{read_container, write_container, DataError, SphericalDirection};
use crate::projection::{
    cell_angle, inverse_project_unbounded, make_grid, panel_of, CubedSphereGrid, PanelCoordinate,
    ProjectionError, PANELS, TOP_PANEL,
};
use crate::spectra::{MagnitudeHrtf, SpectraError};

pub const TENSOR_MAGIC: &str = "CSTEN1";

#[derive(Debug, Error)]
pub enum CubeSphereError {
    #[error("tensor holds {found} values, expected {expected} for {channels}×5×{width}×{width}")]
    Shape {
        channels: usize,
        width: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite or negative value {value} at flat index {index}")]
    InvalidValue { index: usize, value: f64 },
    #[error("position {index} does not match grid cell direction")]
    GridMismatch { index: usize },
    #[error("{positions} positions but the grid has {cells} cells")]
    GridSize { positions: usize, cells: usize },
    #[error("tensor has {channels} channels but magnitudes need {expected}")]
    ChannelMismatch { channels: usize, expected: usize },
    #[error("padding {pad} exceeds panel width {width}")]
    PadTooLarge { pad: usize, width: usize },
    #[error("downsampling factor {factor} must be a power of two dividing width {width}")]
    BadFactor { factor: usize, width: usize },
    #[error("adjacency derivation failed: {0}")]
    Adjacency(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top];

    pub fn index(self) -> usize {
        self as usize
    }

    /// In-panel cell at `depth` rows from this edge and `along` cells along it.
    fn cell(self, width: usize, depth: usize, along: usize) -> (usize, usize) {
        match self {
            Edge::Left => (depth, along),
            Edge::Right => (width - 1 - depth, along),
            Edge::Bottom => (along, depth),
            Edge::Top => (along, width - 1 - depth),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeLink {
    /// Continues onto `edge` of `panel`; `reversed` when the along-edge
    /// index runs the opposite way there.
    Panel {
        panel: usize,
        edge: Edge,
        reversed: bool,
    },
    /// No neighbour (the removed bottom face): repeat the nearest row.
    Replicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdjacencyTable {
    links: [[EdgeLink; 4]; PANELS],
}

const fn link(panel: usize, edge: Edge, reversed: bool) -> EdgeLink {
    EdgeLink::Panel {
        panel,
        edge,
        reversed,
    }
}

/// Seam table of the five retained faces. Regenerated from the projection
/// geometry by [`AdjacencyTable::derive`] in the tests.
pub const ADJACENCY: AdjacencyTable = AdjacencyTable {
    links: [
        // panel 1: left, right, bottom, top
        [
            link(4, Edge::Right, false),
            link(2, Edge::Left, false),
            EdgeLink::Replicate,
            link(5, Edge::Bottom, false),
        ],
        [
            link(1, Edge::Right, false),
            link(3, Edge::Left, false),
            EdgeLink::Replicate,
            link(5, Edge::Right, false),
        ],
        [
            link(2, Edge::Right, false),
            link(4, Edge::Left, false),
            EdgeLink::Replicate,
            link(5, Edge::Top, true),
        ],
        [
            link(3, Edge::Right, false),
            link(1, Edge::Left, false),
            EdgeLink::Replicate,
            link(5, Edge::Left, true),
        ],
        [
            link(4, Edge::Top, true),
            link(2, Edge::Top, false),
            link(1, Edge::Top, false),
            link(3, Edge::Top, true),
        ],
    ],
};

impl AdjacencyTable {
    pub fn link(&self, panel: usize, edge: Edge) -> EdgeLink {
        self.links[panel - 1][edge.index()]
    }

    /// Recomputes the table by projecting the first row of virtual cells
    /// beyond each edge back onto the sphere and locating the nearest grid
    /// cell.
    pub fn derive() -> Result<Self, CubeSphereError> {
        let width = 8;
        let grid = make_grid(width, 1.0)?;
        let vectors: Vec<[f64; 3]> = grid.directions().iter().map(|d| d.unit_vector()).collect();
        let mut links = [[EdgeLink::Replicate; 4]; PANELS];
        for panel in 1..=PANELS {
            for edge in Edge::ALL {
                let probe = |along: usize| -> Result<Option<(usize, Edge, usize)>, CubeSphereError> {
                    let a = along as isize;
                    let (i, j) = match edge {
                        Edge::Left => (-1, a),
                        Edge::Right => (width as isize, a),
                        Edge::Bottom => (a, -1),
                        Edge::Top => (a, width as isize),
                    };
                    let pc = PanelCoordinate {
                        panel,
                        x: cell_angle(i, width),
                        y: cell_angle(j, width),
                    };
                    let dir = inverse_project_unbounded(&pc, 1.0)?;
                    if panel_of(&dir).is_err() {
                        return Ok(None);
                    }
                    let v = dir.unit_vector();
                    let best = (0..vectors.len())
                        .max_by(|&x, &y| dot(vectors[x], v).total_cmp(&dot(vectors[y], v)))
                        .expect("non-empty grid");
                    let (p, bi, bj) = grid.cell(best);
                    let (e, al) = if bi == 0 {
                        (Edge::Left, bj)
                    } else if bi == width - 1 {
                        (Edge::Right, bj)
                    } else if bj == 0 {
                        (Edge::Bottom, bi)
                    } else if bj == width - 1 {
                        (Edge::Top, bi)
                    } else {
                        return Err(CubeSphereError::Adjacency(format!(
                            "panel {panel} {edge:?}: nearest cell ({p},{bi},{bj}) is interior"
                        )));
                    };
                    Ok(Some((p, e, al)))
                };
                let (first, last) = (probe(1)?, probe(width - 2)?);
                links[panel - 1][edge.index()] = match (first, last) {
                    (None, None) => EdgeLink::Replicate,
                    (Some((p1, e1, a1)), Some((p2, e2, a2))) if p1 == p2 && e1 == e2 && p1 != panel => {
                        if a1 == 1 && a2 == width - 2 {
                            link(p1, e1, false)
                        } else if a1 == width - 2 && a2 == 1 {
                            link(p1, e1, true)
                        } else {
                            return Err(CubeSphereError::Adjacency(format!(
                                "panel {panel} {edge:?}: along indices {a1}, {a2}"
                            )));
                        }
                    }
                    other => {
                        return Err(CubeSphereError::Adjacency(format!(
                            "panel {panel} {edge:?}: inconsistent neighbours {other:?}"
                        )))
                    }
                };
            }
        }
        Ok(Self { links })
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Dense `C×5×W×W` array, laid out `[c][panel][i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelTensor {
    channels: usize,
    width: usize,
    data: Vec<f64>,
}

impl PanelTensor {
    pub fn new(channels: usize, width: usize, data: Vec<f64>) -> Result<Self, CubeSphereError> {
        let expected = channels * PANELS * width * width;
        if data.len() != expected || width == 0 {
            return Err(CubeSphereError::Shape {
                channels,
                width,
                expected,
                found: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(CubeSphereError::InvalidValue {
                index,
                value: data[index],
            });
        }
        Ok(Self {
            channels,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn index(&self, c: usize, panel: usize, i: usize, j: usize) -> usize {
        ((c * PANELS + panel - 1) * self.width + i) * self.width + j
    }

    pub fn get(&self, c: usize, panel: usize, i: usize, j: usize) -> f64 {
        self.data[self.index(c, panel, i, j)]
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CubeSphereError> {
        let header = TensorHeader {
            magic: TENSOR_MAGIC.into(),
            channels: self.channels,
            width: self.width,
            height: self.width,
        };
        write_container(path.as_ref(), &header, self.data.iter().map(|&v| v as f32))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CubeSphereError> {
        let path = path.as_ref();
        let (header, values): (TensorHeader, _) =
            read_container(path, |h: &TensorHeader| h.channels * PANELS * h.width * h.height)?;
        crate::data::check_magic(path, &header.magic, TENSOR_MAGIC)?;
        if header.width != header.height {
            return Err(DataError::MalformedHeader {
                path: path.to_path_buf(),
                reason: format!("W {} != H {}", header.width, header.height),
            }
            .into());
        }
        Self::new(
            header.channels,
            header.width,
            values.into_iter().map(f64::from).collect(),
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorHeader {
    magic: String,
    #[serde(rename = "C")]
    channels: usize,
    #[serde(rename = "W")]
    width: usize,
    #[serde(rename = "H")]
    height: usize,
}

/// Tensor with channels `0..B` holding left-ear bins and `B..2B` right-ear
/// bins, one spatial cell per grid direction.
pub fn set_from_grid(mags: &MagnitudeHrtf, grid: &CubedSphereGrid) -> Result<PanelTensor, CubeSphereError> {
    check_positions(mags.positions(), grid.directions())?;
    let bins = mags.bins_per_ear();
    let cells = grid.len();
    let mut data = vec![0.0; 2 * bins * cells];
    for cell in 0..cells {
        for ear in 0..2 {
            for (b, &m) in mags.ear(cell, ear).iter().enumerate() {
                data[(ear * bins + b) * cells + cell] = m;
            }
        }
    }
    PanelTensor::new(2 * bins, grid.width(), data)
}

fn check_positions(positions: &[SphericalDirection], grid: &[SphericalDirection]) -> Result<(), CubeSphereError> {
    if positions.len() != grid.len() {
        return Err(CubeSphereError::GridSize {
            positions: positions.len(),
            cells: grid.len(),
        });
    }
    for (index, (p, g)) in positions.iter().zip(grid).enumerate() {
        if p.angular_distance(g) > 1e-9 {
            return Err(CubeSphereError::GridMismatch { index });
        }
    }
    Ok(())
}

/// Inverse of [`set_from_grid`]; `positions` label the spatial cells in
/// `[panel][i][j]` order.
pub fn to_magnitudes(
    t: &PanelTensor,
    positions: &[SphericalDirection],
    subject_id: &str,
    sample_rate_hz: u32,
) -> Result<MagnitudeHrtf, CubeSphereError> {
    let cells = PANELS * t.width * t.width;
    if positions.len() != cells {
        return Err(CubeSphereError::GridSize {
            positions: positions.len(),
            cells,
        });
    }
    if !t.channels.is_multiple_of(2) {
        return Err(CubeSphereError::ChannelMismatch {
            channels: t.channels,
            expected: t.channels + 1,
        });
    }
    let bins = t.channels / 2;
    let mut mags = Vec::with_capacity(t.data.len());
    for cell in 0..cells {
        for c in 0..t.channels {
            mags.push(t.data[c * cells + cell]);
        }
    }
    Ok(MagnitudeHrtf::new(
        subject_id,
        sample_rate_hz,
        2 * bins,
        positions.to_vec(),
        mags,
    )?)
}

/// Source cell for every padded cell of one channel, as flat indices into
/// `[panel][i][j]`. Shared by [`pad`] and the network's padding layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PadPlan {
    width: usize,
    pad: usize,
    sources: Vec<usize>,
}

impl PadPlan {
    pub fn new(width: usize, pad: usize) -> Result<Self, CubeSphereError> {
        if pad > width {
            return Err(CubeSphereError::PadTooLarge { pad, width });
        }
        let (w, p) = (width as isize, pad as isize);
        let padded = width + 2 * pad;
        let flat = |panel: usize, (i, j): (usize, usize)| ((panel - 1) * width + i) * width + j;
        let clamp = |v: isize| v.clamp(0, w - 1) as usize;
        // Follow `edge` of `panel` outward by `depth` cells (depth ≥ 1).
        let follow = |panel: usize, edge: Edge, depth: usize, along: usize| match ADJACENCY.link(panel, edge) {
            EdgeLink::Replicate => flat(panel, edge.cell(width, 0, along)),
            EdgeLink::Panel {
                panel: q,
                edge: e,
                reversed,
            } => {
                let a = if reversed { width - 1 - along } else { along };
                flat(q, e.cell(width, depth - 1, a))
            }
        };
        let mut sources = Vec::with_capacity(PANELS * padded * padded);
        for panel in 1..=PANELS {
            for pi in 0..padded as isize {
                for pj in 0..padded as isize {
                    let (i, j) = (pi - p, pj - p);
                    let in_i = (0..w).contains(&i);
                    let in_j = (0..w).contains(&j);
                    let src = match (in_i, in_j) {
                        (true, true) => flat(panel, (i as usize, j as usize)),
                        (false, true) => {
                            let (edge, depth) = if i < 0 { (Edge::Left, -i) } else { (Edge::Right, i - w + 1) };
                            follow(panel, edge, depth as usize, j as usize)
                        }
                        (true, false) => {
                            let (edge, depth) = if j < 0 { (Edge::Bottom, -j) } else { (Edge::Top, j - w + 1) };
                            follow(panel, edge, depth as usize, i as usize)
                        }
                        (false, false) => {
                            if panel != TOP_PANEL && j >= w {
                                // Corner touching the top face: nearest top-panel edge cell.
                                follow(panel, Edge::Top, (j - w + 1) as usize, clamp(i))
                            } else {
                                flat(panel, (clamp(i), clamp(j)))
                            }
                        }
                    };
                    sources.push(src);
                }
            }
        }
        Ok(Self { width, pad, sources })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    pub fn padded_width(&self) -> usize {
        self.width + 2 * self.pad
    }

    /// Source index for each padded cell in `[panel][I][J]` order.
    pub fn sources(&self) -> &[usize] {
        &self.sources
    }
}

/// Padded copy `C×5×(W+2p)×(W+2p)`, laid out `[c][panel][I][J]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedTensor {
    pub channels: usize,
    pub padded_width: usize,
    pub data: Vec<f64>,
}

pub fn pad(t: &PanelTensor, p: usize) -> Result<PaddedTensor, CubeSphereError> {
    let plan = PadPlan::new(t.width, p)?;
    let cells = PANELS * t.width * t.width;
    let mut data = Vec::with_capacity(t.channels * plan.sources.len());
    for c in 0..t.channels {
        let chan = &t.data[c * cells..(c + 1) * cells];
        data.extend(plan.sources.iter().map(|&s| chan[s]));
    }
    Ok(PaddedTensor {
        channels: t.channels,
        padded_width: plan.padded_width(),
        data,
    })
}

/// Which cell of each `r×r` block survives downsampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DownsampleOffset {
    /// `floor((r−1)/2)`, the cell nearest the block centre.
    #[default]
    Centered,
    First,
    Last,
}

impl DownsampleOffset {
    pub fn offset(self, factor: usize) -> usize {
        match self {
            DownsampleOffset::Centered => (factor - 1) / 2,
            DownsampleOffset::First => 0,
            DownsampleOffset::Last => factor - 1,
        }
    }
}

fn check_factor(width: usize, factor: usize) -> Result<(), CubeSphereError> {
    if factor == 0 || !factor.is_power_of_two() || !width.is_multiple_of(factor) {
        return Err(CubeSphereError::BadFactor { factor, width });
    }
    Ok(())
}

/// Flat `[panel][i][j]` indices of the cells kept when downsampling a
/// width-`width` grid by `factor`, in low-resolution order.
pub fn downsample_indices(
    width: usize,
    factor: usize,
    offset: DownsampleOffset,
) -> Result<Vec<usize>, CubeSphereError> {
    check_factor(width, factor)?;
    let (lw, o) = (width / factor, offset.offset(factor));
    let mut out = Vec::with_capacity(PANELS * lw * lw);
    for panel in 0..PANELS {
        for i in 0..lw {
            for j in 0..lw {
                out.push((panel * width + factor * i + o) * width + factor * j + o);
            }
        }
    }
    Ok(out)
}

pub fn downsample(t: &PanelTensor, factor: usize) -> Result<PanelTensor, CubeSphereError> {
    downsample_with(t, factor, DownsampleOffset::Centered)
}

pub fn downsample_with(
    t: &PanelTensor,
    factor: usize,
    offset: DownsampleOffset,
) -> Result<PanelTensor, CubeSphereError> {
    let keep = downsample_indices(t.width, factor, offset)?;
    let cells = PANELS * t.width * t.width;
    let mut data = Vec::with_capacity(t.channels * keep.len());
    for c in 0..t.channels {
        data.extend(keep.iter().map(|&k| t.data[c * cells + k]));
    }
    PanelTensor::new(t.channels, t.width / factor, data)
}
