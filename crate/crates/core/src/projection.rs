//! Gnomonic equiangular (cubed-sphere) projection restricted to the four
//! equatorial panels and the top panel.
//!
//! Panel `n` in `1..=4` is centred on azimuth `(n−1)·π/2`; panel 5 is the top
//! face. Seams between equatorial panels sit at odd multiples of π/4, with
//! the seam itself belonging to the panel counter-clockwise of it.
//! Directions on the (removed) bottom face are rejected.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};
use std::fmt::Write as _;

use thiserror::Error;

use crate::data::{DataError, SphericalDirection};

pub const PANELS: usize = 5;
pub const TOP_PANEL: usize = 5;

/// Slack allowed on face bounds for points produced by rounding.
const FACE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("direction (az {azimuth_rad:.6}, el {elevation_rad:.6}) is below cube equator band")]
    BelowEquatorBand {
        azimuth_rad: f64,
        elevation_rad: f64,
    },
    #[error("panel {0} is not one of 1..=5")]
    InvalidPanel(usize),
    #[error("coordinate ({x}, {y}) lies outside panel {panel} (|x|, |y| must be <= R·π/4)")]
    OutsideFace { panel: usize, x: f64, y: f64 },
    #[error("grid width {0} must be a power of two and at least 2")]
    InvalidWidth(usize),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Position on one panel's tangent plane, scaled by the sphere radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelCoordinate {
    pub panel: usize,
    pub x: f64,
    pub y: f64,
}

fn panel_centre_azimuth(panel: usize) -> f64 {
    (panel as f64 - 1.0) * FRAC_PI_2
}

/// Wraps an angle into `[−π, π)`.
fn wrap_pi(a: f64) -> f64 {
    (a + PI).rem_euclid(TAU) - PI
}

pub fn panel_of(dir: &SphericalDirection) -> Result<usize, ProjectionError> {
    let [x, y, z] = dir.unit_vector();
    let horizontal = x.abs().max(y.abs());
    if z > 0.0 && horizontal <= z {
        return Ok(TOP_PANEL);
    }
    if z < 0.0 && horizontal <= -z {
        return Err(ProjectionError::BelowEquatorBand {
            azimuth_rad: dir.azimuth_rad(),
            elevation_rad: dir.elevation_rad(),
        });
    }
    let quarter = ((dir.azimuth_rad() + FRAC_PI_4).rem_euclid(TAU) / FRAC_PI_2).floor() as usize;
    Ok(1 + quarter.min(3))
}

pub fn forward_project(dir: &SphericalDirection) -> Result<PanelCoordinate, ProjectionError> {
    let panel = panel_of(dir)?;
    let r = dir.radius_m();
    let (theta, phi) = (dir.azimuth_rad(), dir.elevation_rad());
    let (x, y) = if panel == TOP_PANEL {
        let cot = phi.cos() / phi.sin();
        (
            r * (theta.sin() * cot).atan(),
            r * (-theta.cos() * cot).atan(),
        )
    } else {
        let offset = wrap_pi(theta - panel_centre_azimuth(panel));
        (r * offset, r * (phi.tan() / offset.cos()).atan())
    };
    Ok(PanelCoordinate { panel, x, y })
}

pub fn inverse_project(pc: &PanelCoordinate, radius_m: f64) -> Result<SphericalDirection, ProjectionError> {
    if !(1..=PANELS).contains(&pc.panel) {
        return Err(ProjectionError::InvalidPanel(pc.panel));
    }
    let bound = radius_m * (FRAC_PI_4 + FACE_TOLERANCE);
    if !(pc.x.abs() <= bound && pc.y.abs() <= bound) {
        return Err(ProjectionError::OutsideFace {
            panel: pc.panel,
            x: pc.x,
            y: pc.y,
        });
    }
    inverse_project_unbounded(pc, radius_m)
}

/// Inverse of the panel equations without the face-bound check, so tangent
/// coordinates beyond a panel edge map to directions on the neighbouring
/// faces. Used to reason about geometry across seams.
pub fn inverse_project_unbounded(
    pc: &PanelCoordinate,
    radius_m: f64,
) -> Result<SphericalDirection, ProjectionError> {
    let (u, v) = (pc.x / radius_m, pc.y / radius_m);
    match pc.panel {
        TOP_PANEL => {
            let (a, b) = (u.tan(), v.tan());
            if a == 0.0 && b == 0.0 {
                return Ok(SphericalDirection::new(0.0, FRAC_PI_2, radius_m)?);
            }
            Ok(SphericalDirection::from_vector([-b, a, 1.0], radius_m)?)
        }
        1..=4 => {
            let azimuth = u + panel_centre_azimuth(pc.panel);
            let elevation = (v.tan() * u.cos()).atan();
            Ok(SphericalDirection::new(azimuth, elevation, radius_m)?)
        }
        other => Err(ProjectionError::InvalidPanel(other)),
    }
}

/// Panel angle of cell `i` (may be outside `0..width` for virtual cells).
pub fn cell_angle(i: isize, width: usize) -> f64 {
    -FRAC_PI_4 + (i as f64 + 0.5) * FRAC_PI_2 / width as f64
}

/// Equiangular cell centres of the five retained panels.
#[derive(Debug, Clone, PartialEq)]
pub struct CubedSphereGrid {
    width: usize,
    radius_m: f64,
    directions: Vec<SphericalDirection>,
}

pub fn make_grid(width: usize, radius_m: f64) -> Result<CubedSphereGrid, ProjectionError> {
    if width < 2 || !width.is_power_of_two() {
        return Err(ProjectionError::InvalidWidth(width));
    }
    let mut directions = Vec::with_capacity(PANELS * width * width);
    for panel in 1..=PANELS {
        for i in 0..width {
            for j in 0..width {
                let pc = PanelCoordinate {
                    panel,
                    x: radius_m * cell_angle(i as isize, width),
                    y: radius_m * cell_angle(j as isize, width),
                };
                directions.push(inverse_project(&pc, radius_m)?);
            }
        }
    }
    Ok(CubedSphereGrid {
        width,
        radius_m,
        directions,
    })
}

impl CubedSphereGrid {
    pub fn width(&self) -> usize {
        self.width
    }

    /// Equal to the width; panels are square.
    pub fn height(&self) -> usize {
        self.width
    }

    pub fn radius_m(&self) -> f64 {
        self.radius_m
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Directions in `[panel][i][j]` order, `i` along x and `j` along y.
    pub fn directions(&self) -> &[SphericalDirection] {
        &self.directions
    }

    /// Flat index of cell `(panel, i, j)`, panel counted from 1.
    pub fn index(&self, panel: usize, i: usize, j: usize) -> usize {
        ((panel - 1) * self.width + i) * self.width + j
    }

    pub fn cell(&self, index: usize) -> (usize, usize, usize) {
        let w = self.width;
        (index / (w * w) + 1, (index / w) % w, index % w)
    }

    pub fn direction(&self, panel: usize, i: usize, j: usize) -> SphericalDirection {
        self.directions[self.index(panel, i, j)]
    }

    /// CSV with columns `panel,i,j,azimuth_rad,elevation_rad`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("panel,i,j,azimuth_rad,elevation_rad\n");
        for (k, d) in self.directions.iter().enumerate() {
            let (p, i, j) = self.cell(k);
            let _ = writeln!(out, "{p},{i},{j},{},{}", d.azimuth_rad(), d.elevation_rad());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dir(az: f64, el: f64) -> SphericalDirection {
        SphericalDirection::unit(az, el)
    }

    #[test]
    fn origin_and_pole() {
        let pc = forward_project(&dir(0.0, 0.0)).unwrap();
        assert_eq!((pc.panel, pc.x, pc.y), (1, 0.0, 0.0));
        let pc = forward_project(&dir(0.0, FRAC_PI_2 - 1e-12)).unwrap();
        assert_eq!(pc.panel, 5);
        assert!(pc.x.abs() < 1e-11 && pc.y.abs() < 1e-11);
    }

    #[test]
    fn equatorial_formula_by_hand() {
        let (t, p) = (PI / 6.0, PI / 8.0);
        let pc = forward_project(&dir(t, p)).unwrap();
        assert_eq!(pc.panel, 1);
        assert!((pc.x - t).abs() < 1e-15);
        let expect = ((PI / 8.0).tan() / (PI / 6.0).cos()).atan();
        assert!((pc.y - expect).abs() < 1e-15);
    }

    #[test]
    fn panel_assignment() {
        assert_eq!(panel_of(&dir(0.0, 0.0)).unwrap(), 1);
        assert_eq!(panel_of(&dir(FRAC_PI_2, 0.0)).unwrap(), 2);
        assert_eq!(panel_of(&dir(PI, 0.0)).unwrap(), 3);
        assert_eq!(panel_of(&dir(1.5 * PI, 0.0)).unwrap(), 4);
        assert_eq!(panel_of(&dir(TAU - 0.1, 0.0)).unwrap(), 1);
        // seam at π/4 belongs to the counter-clockwise panel
        assert_eq!(panel_of(&dir(FRAC_PI_4, 0.0)).unwrap(), 2);
        // top face: |atan(sinθ cotφ)|, |atan(−cosθ cotφ)| ≤ π/4
        let d = dir(0.3, 1.4);
        let cot = 1.4f64.cos() / 1.4f64.sin();
        assert!((0.3f64.sin() * cot).atan().abs() <= FRAC_PI_4);
        assert!((-(0.3f64.cos()) * cot).atan().abs() <= FRAC_PI_4);
        assert_eq!(panel_of(&d).unwrap(), 5);
    }

    #[test]
    fn bottom_face_is_rejected() {
        for d in [dir(0.0, -0.8), dir(1.0, -1.5), dir(0.0, -FRAC_PI_2)] {
            let e = forward_project(&d).unwrap_err();
            assert!(e.to_string().contains("below cube equator band"));
        }
        // corner of an equatorial face dips below −π/4 elevation but is kept
        let corner = dir(FRAC_PI_4 - 0.01, -0.6);
        assert!(panel_of(&corner).is_ok());
    }

    #[test]
    fn inverse_special_points() {
        let d = inverse_project(&PanelCoordinate { panel: 1, x: 0.0, y: 0.0 }, 1.0).unwrap();
        assert_eq!((d.azimuth_rad(), d.elevation_rad()), (0.0, 0.0));
        let d = inverse_project(&PanelCoordinate { panel: 5, x: 0.0, y: 0.0 }, 1.0).unwrap();
        assert!((d.elevation_rad() - FRAC_PI_2).abs() < 1e-15);
        assert!(inverse_project(&PanelCoordinate { panel: 2, x: 0.9, y: 0.0 }, 1.0).is_err());
        assert!(inverse_project(&PanelCoordinate { panel: 6, x: 0.0, y: 0.0 }, 1.0).is_err());
    }

    #[test]
    fn random_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let radius = 1.3;
        let lim = radius * FRAC_PI_4 * (1.0 - 1e-9);
        for _ in 0..10_000 {
            let pc = PanelCoordinate {
                panel: rng.random_range(1..=5),
                x: rng.random_range(-lim..lim),
                y: rng.random_range(-lim..lim),
            };
            let d = inverse_project(&pc, radius).unwrap();
            let back = forward_project(&d).unwrap();
            assert_eq!(back.panel, pc.panel);
            assert!((back.x - pc.x).abs() < 1e-9 && (back.y - pc.y).abs() < 1e-9);
            assert!(back.x.abs() <= radius * FRAC_PI_4 + 1e-9);
        }
    }

    #[test]
    fn equatorial_x_is_linear_in_azimuth() {
        for k in 0..50 {
            let t = -0.7 + 0.028 * k as f64;
            for n in 1..=4usize {
                let az = t + (n as f64 - 1.0) * FRAC_PI_2;
                let pc = forward_project(&SphericalDirection::new(az, 0.2, 2.0).unwrap()).unwrap();
                assert_eq!(pc.panel, n);
                assert!((pc.x - 2.0 * t).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grid_counts_and_consistency() {
        let g = make_grid(16, 1.0).unwrap();
        assert_eq!(g.len(), 1280);
        for (k, d) in g.directions().iter().enumerate() {
            let (p, i, j) = g.cell(k);
            assert_eq!(g.index(p, i, j), k);
            assert_eq!(panel_of(d).unwrap(), p);
        }
        let small = make_grid(2, 1.0).unwrap();
        assert_eq!(small.len(), 20);
        crate::data::check_distinct(small.directions()).unwrap();
        crate::data::check_distinct(g.directions()).unwrap();
        assert!(make_grid(12, 1.0).is_err());
        assert!(make_grid(1, 1.0).is_err());
    }

    #[test]
    fn grid_cells_round_trip_into_their_cell() {
        let g = make_grid(8, 1.0).unwrap();
        let step = FRAC_PI_2 / 8.0;
        for (k, d) in g.directions().iter().enumerate() {
            let (p, i, j) = g.cell(k);
            let pc = forward_project(d).unwrap();
            assert_eq!(pc.panel, p);
            assert_eq!(((pc.x + FRAC_PI_4) / step).floor() as usize, i);
            assert_eq!(((pc.y + FRAC_PI_4) / step).floor() as usize, j);
        }
    }

    #[test]
    fn csv_export() {
        let g = make_grid(2, 1.0).unwrap();
        let csv = g.to_csv();
        assert_eq!(csv.lines().count(), 21);
        assert!(csv.starts_with("panel,i,j,azimuth_rad,elevation_rad\n1,0,0,"));
    }
}
