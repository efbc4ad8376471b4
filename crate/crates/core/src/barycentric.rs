//! Spherical barycentric interpolation of impulse responses.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{great_circle, DataError, HrirSet, SphericalDirection, StereoIr};
use crate::projection::CubedSphereGrid;

/// Weights may dip this far below zero and still count as enclosing.
pub const ENCLOSURE_TOLERANCE: f64 = 1e-9;
/// Number of nearest measurements searched for an enclosing triangle.
pub const SEARCH_NEIGHBOURS: usize = 12;
const MIN_EXCESS: f64 = 1e-15;
const RELATIVE_EXCESS: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum BarycentricError {
    #[error("triangle search needs at least 3 positions, got {0}")]
    TooFewPositions(usize),
    #[error("degenerate triangle (spherical excess {0:e})")]
    DegenerateTriangle(f64),
    #[error("vertices are collinear in the azimuth/elevation plane")]
    Collinear,
    #[error("impulse responses differ in length: {0:?}")]
    LengthMismatch([usize; 3]),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub vertex_indices: [usize; 3],
}

impl TriangleWeights {
    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    pub fn encloses(&self) -> bool {
        self.as_array().iter().all(|w| *w >= -ENCLOSURE_TOLERANCE)
    }

    fn with_indices(self, vertex_indices: [usize; 3]) -> Self {
        Self {
            vertex_indices,
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Excess {
    pub value: f64,
    pub degenerate: bool,
}

/// Spherical excess of a triangle with the given side arcs (L'Huilier).
pub fn spherical_excess(a: f64, b: f64, c: f64) -> Excess {
    let s = 0.5 * (a + b + c);
    let t = |v: f64| (0.5 * v).tan();
    let product = t(s) * t(s - a) * t(s - b) * t(s - c);
    if product.is_nan() || product <= 0.0 {
        return Excess {
            value: 0.0,
            degenerate: true,
        };
    }
    Excess {
        value: 4.0 * product.sqrt().atan(),
        degenerate: false,
    }
}

fn excess_of(p: [f64; 3], q: [f64; 3], r: [f64; 3]) -> f64 {
    spherical_excess(great_circle(q, r), great_circle(p, r), great_circle(p, q)).value
}

fn triple(p: [f64; 3], q: [f64; 3], r: [f64; 3]) -> f64 {
    p[0] * (q[1] * r[2] - q[2] * r[1]) - p[1] * (q[0] * r[2] - q[2] * r[0])
        + p[2] * (q[0] * r[1] - q[1] * r[0])
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Area-ratio weights using spherical excess. Sub-triangle areas carry the
/// orientation sign, so a target outside the triangle gets a negative weight.
pub fn spherical_weights(
    target: &SphericalDirection,
    v1: &SphericalDirection,
    v2: &SphericalDirection,
    v3: &SphericalDirection,
) -> Result<TriangleWeights, BarycentricError> {
    let (t, p1, p2, p3) = (
        target.unit_vector(),
        v1.unit_vector(),
        v2.unit_vector(),
        v3.unit_vector(),
    );
    let full = excess_of(p1, p2, p3);
    let orientation = sign(triple(p1, p2, p3));
    // Near-collinear vertices leave only rounding noise in the excess.
    let perimeter = great_circle(p1, p2) + great_circle(p2, p3) + great_circle(p1, p3);
    if full <= MIN_EXCESS || full <= RELATIVE_EXCESS * perimeter * perimeter || orientation == 0.0 {
        return Err(BarycentricError::DegenerateTriangle(full));
    }
    let alpha = sign(triple(t, p2, p3)) * orientation * excess_of(t, p2, p3) / full;
    let beta = sign(triple(p1, t, p3)) * orientation * excess_of(p1, t, p3) / full;
    Ok(TriangleWeights {
        alpha,
        beta,
        gamma: 1.0 - alpha - beta,
        vertex_indices: [0, 1, 2],
    })
}

/// Weights treating (elevation, azimuth) as plane coordinates. Azimuths are
/// unwrapped to within π of the target first.
pub fn planar_weights(
    target: &SphericalDirection,
    v1: &SphericalDirection,
    v2: &SphericalDirection,
    v3: &SphericalDirection,
) -> Result<TriangleWeights, BarycentricError> {
    let t0 = target.azimuth_rad();
    let unwrap = |d: &SphericalDirection| {
        let mut a = d.azimuth_rad() - t0;
        a = (a + PI).rem_euclid(TAU) - PI;
        (d.elevation_rad(), t0 + a)
    };
    let (pi_, ti) = (target.elevation_rad(), t0);
    let ((p1, t1), (p2, t2), (p3, t3)) = (unwrap(v1), unwrap(v2), unwrap(v3));
    let den = (p2 - p3) * (t1 - t3) + (t3 - t2) * (p1 - p3);
    if den.abs() < 1e-300 {
        return Err(BarycentricError::Collinear);
    }
    let alpha = ((p2 - p3) * (ti - t3) + (t3 - t2) * (pi_ - p3)) / den;
    let beta = ((p3 - p1) * (ti - t3) + (t1 - t3) * (pi_ - p3)) / den;
    Ok(TriangleWeights {
        alpha,
        beta,
        gamma: 1.0 - alpha - beta,
        vertex_indices: [0, 1, 2],
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub weights: TriangleWeights,
    /// False when no enclosing triangle was found among the nearest
    /// neighbours and the three closest points were used instead.
    pub enclosing: bool,
}

/// Indices of `positions` sorted by great-circle distance to `target`
/// (ties broken by index), with the distances.
fn nearest(target: [f64; 3], positions: &[[f64; 3]], k: usize) -> Vec<(usize, f64)> {
    let mut d: Vec<(usize, f64)> = positions
        .iter()
        .enumerate()
        .map(|(i, p)| (i, great_circle(target, *p)))
        .collect();
    d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    d.truncate(k);
    d
}

pub fn find_enclosing_triangle(
    target: &SphericalDirection,
    positions: &[SphericalDirection],
) -> Result<Triangle, BarycentricError> {
    let vectors: Vec<[f64; 3]> = positions.iter().map(|p| p.unit_vector()).collect();
    find_in(target, positions, &vectors)
}

fn find_in(
    target: &SphericalDirection,
    positions: &[SphericalDirection],
    vectors: &[[f64; 3]],
) -> Result<Triangle, BarycentricError> {
    if positions.len() < 3 {
        return Err(BarycentricError::TooFewPositions(positions.len()));
    }
    let near = nearest(target.unit_vector(), vectors, SEARCH_NEIGHBOURS);
    let k = near.len();
    let mut triples = Vec::with_capacity(k * (k - 1) * (k - 2) / 6);
    for a in 0..k {
        for b in a + 1..k {
            for c in b + 1..k {
                triples.push((near[a].1 + near[b].1 + near[c].1, [a, b, c]));
            }
        }
    }
    // Stable sort keeps lexicographic order among equal sums.
    triples.sort_by(|x, y| x.0.total_cmp(&y.0));
    for (_, [a, b, c]) in &triples {
        let idx = [near[*a].0, near[*b].0, near[*c].0];
        let Ok(w) = spherical_weights(target, &positions[idx[0]], &positions[idx[1]], &positions[idx[2]])
        else {
            continue;
        };
        if w.encloses() {
            return Ok(Triangle {
                weights: w.with_indices(idx),
                enclosing: true,
            });
        }
    }
    let idx = [near[0].0, near[1].0, near[2].0];
    let weights = match spherical_weights(target, &positions[idx[0]], &positions[idx[1]], &positions[idx[2]]) {
        Ok(w) => {
            let clamped = w.as_array().map(|v| v.max(0.0));
            let total: f64 = clamped.iter().sum();
            if total > 0.0 {
                [clamped[0] / total, clamped[1] / total, clamped[2] / total]
            } else {
                [1.0, 0.0, 0.0]
            }
        }
        Err(_) => [1.0, 0.0, 0.0],
    };
    Ok(Triangle {
        weights: TriangleWeights {
            alpha: weights[0],
            beta: weights[1],
            gamma: weights[2],
            vertex_indices: idx,
        },
        enclosing: false,
    })
}

/// Per-sample `α·h1 + β·h2 + γ·h3` on both ears.
pub fn interpolate_hrir(weights: &TriangleWeights, hrirs: [&StereoIr; 3]) -> Result<StereoIr, BarycentricError> {
    let lens = hrirs.map(|h| h.left.len());
    if lens.iter().any(|&l| l != lens[0]) || hrirs.iter().any(|h| h.right.len() != lens[0]) {
        return Err(BarycentricError::LengthMismatch(lens));
    }
    let w = weights.as_array();
    let blend = |get: fn(&StereoIr) -> &[f32]| -> Vec<f32> {
        (0..lens[0])
            .map(|n| {
                (w[0] * get(hrirs[0])[n] as f64
                    + w[1] * get(hrirs[1])[n] as f64
                    + w[2] * get(hrirs[2])[n] as f64) as f32
            })
            .collect()
    };
    Ok(StereoIr::new(blend(|h| &h.left), blend(|h| &h.right)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    #[default]
    Spherical,
    /// Planar weights on the spherically chosen triangle; falls back to
    /// spherical weights where the planar ones are undefined.
    Planar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interpolated {
    pub set: HrirSet,
    pub triangles: Vec<Triangle>,
}

impl Interpolated {
    pub fn fallback_count(&self) -> usize {
        self.triangles.iter().filter(|t| !t.enclosing).count()
    }
}

/// Interpolates `set` at arbitrary target directions.
pub fn interpolate_to(
    set: &HrirSet,
    targets: &[SphericalDirection],
    mode: WeightMode,
) -> Result<Interpolated, BarycentricError> {
    let positions = set.positions();
    let vectors: Vec<[f64; 3]> = positions.iter().map(|p| p.unit_vector()).collect();
    let mut irs = Vec::with_capacity(targets.len());
    let mut triangles = Vec::with_capacity(targets.len());
    for target in targets {
        let mut tri = find_in(target, positions, &vectors)?;
        if mode == WeightMode::Planar && tri.enclosing {
            let [a, b, c] = tri.weights.vertex_indices;
            if let Ok(w) = planar_weights(target, &positions[a], &positions[b], &positions[c]) {
                tri.weights = w.with_indices([a, b, c]);
            }
        }
        let [a, b, c] = tri.weights.vertex_indices;
        irs.push(interpolate_hrir(&tri.weights, [&set.irs()[a], &set.irs()[b], &set.irs()[c]])?);
        triangles.push(tri);
    }
    let set = HrirSet::new(set.subject_id(), set.sample_rate_hz(), targets.to_vec(), irs)?;
    Ok(Interpolated { set, triangles })
}

/// One interpolated response per grid direction, computed on the sphere.
pub fn barycentric_upsample(
    set: &HrirSet,
    grid: &CubedSphereGrid,
    mode: WeightMode,
) -> Result<HrirSet, BarycentricError> {
    Ok(interpolate_to(set, grid.directions(), mode)?.set)
}
