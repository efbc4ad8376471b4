//! HRIR measurement sets: the portable on-disk format, a synthetic subject
//! generator with analytic ground truth, and subject-level dataset splits.
//!
//! The HRIRSET container is a single JSON header line terminated by `\n`
//! followed by a raw little-endian `f32` payload laid out as
//! `[position][ear][tap]` with left = 0 and right = 1.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::itd;

/// Magic tag of the time-domain container.
pub const HRIRSET_MAGIC: &str = "HRIRSET1";

/// Minimum number of taps an impulse response may have.
pub const MIN_TAPS: usize = 8;

/// Two positions closer than this (radians) are considered duplicates.
pub const DUPLICATE_TOLERANCE_RAD: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("payload size mismatch in {path}: header declares {expected} bytes, found {found}")]
    PayloadSizeMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("duplicate position: indices {first} and {second} are {distance_rad:e} rad apart")]
    DuplicatePosition {
        first: usize,
        second: usize,
        distance_rad: f64,
    },
    #[error("empty position list")]
    EmptyPositions,
    #[error("impulse responses have {taps} taps, at least {MIN_TAPS} required")]
    TooFewTaps { taps: usize },
    #[error("length mismatch at position {position}: expected {expected} taps, found {found}")]
    LengthMismatch {
        position: usize,
        expected: usize,
        found: usize,
    },
    #[error("{positions} positions but {responses} impulse responses")]
    CountMismatch { positions: usize, responses: usize },
    #[error("invalid direction: {0}")]
    InvalidDirection(String),
    #[error("invalid sample rate {0}")]
    InvalidSampleRate(u32),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
}

/// A measurement direction: azimuth counter-clockwise from the front
/// (positive towards the listener's left), elevation above the horizontal
/// plane, and distance from the head centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalDirection {
    azimuth_rad: f64,
    elevation_rad: f64,
    radius_m: f64,
}

impl SphericalDirection {
    /// Azimuth is wrapped into `[0, 2π)`. Elevations that overshoot `±π/2`
    /// by less than 1e-12 (rounding) are clamped; anything further is an error.
    pub fn new(azimuth_rad: f64, elevation_rad: f64, radius_m: f64) -> Result<Self, DataError> {
        if !azimuth_rad.is_finite() || !elevation_rad.is_finite() {
            return Err(DataError::InvalidDirection(format!(
                "non-finite angle ({azimuth_rad}, {elevation_rad})"
            )));
        }
        if !(radius_m.is_finite() && radius_m > 0.0) {
            return Err(DataError::InvalidDirection(format!(
                "radius must be positive, got {radius_m}"
            )));
        }
        if elevation_rad.abs() > FRAC_PI_2 + 1e-12 {
            return Err(DataError::InvalidDirection(format!(
                "elevation {elevation_rad} outside [-pi/2, pi/2]"
            )));
        }
        Ok(Self {
            azimuth_rad: wrap_azimuth(azimuth_rad),
            elevation_rad: elevation_rad.clamp(-FRAC_PI_2, FRAC_PI_2),
            radius_m,
        })
    }

    /// Unit-radius direction; panics on non-finite or out-of-range elevation.
    pub fn unit(azimuth_rad: f64, elevation_rad: f64) -> Self {
        Self::new(azimuth_rad, elevation_rad, 1.0).expect("valid direction")
    }

    pub fn azimuth_rad(&self) -> f64 {
        self.azimuth_rad
    }

    pub fn elevation_rad(&self) -> f64 {
        self.elevation_rad
    }

    pub fn radius_m(&self) -> f64 {
        self.radius_m
    }

    pub fn with_radius(self, radius_m: f64) -> Result<Self, DataError> {
        Self::new(self.azimuth_rad, self.elevation_rad, radius_m)
    }

    /// Unit vector with x to the front, y to the left and z up.
    pub fn unit_vector(&self) -> [f64; 3] {
        let (st, ct) = self.azimuth_rad.sin_cos();
        let (sp, cp) = self.elevation_rad.sin_cos();
        [cp * ct, cp * st, sp]
    }

    /// Direction of a (not necessarily normalised) non-zero vector.
    pub fn from_vector(v: [f64; 3], radius_m: f64) -> Result<Self, DataError> {
        let horizontal = v[0].hypot(v[1]);
        let elevation = v[2].atan2(horizontal);
        let azimuth = if horizontal == 0.0 { 0.0 } else { v[1].atan2(v[0]) };
        Self::new(azimuth, elevation, radius_m)
    }

    /// Great-circle angle to `other`, via `2·asin(chord/2)` for accuracy near 0.
    pub fn angular_distance(&self, other: &Self) -> f64 {
        great_circle(self.unit_vector(), other.unit_vector())
    }

    /// Mirror image across the median plane (azimuth θ → 2π − θ).
    pub fn mirrored(&self) -> Self {
        Self {
            azimuth_rad: wrap_azimuth(TAU - self.azimuth_rad),
            ..*self
        }
    }
}

fn wrap_azimuth(az: f64) -> f64 {
    let w = az.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Great-circle angle between two unit vectors.
pub(crate) fn great_circle(a: [f64; 3], b: [f64; 3]) -> f64 {
    let chord = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    2.0 * (chord / 2.0).min(1.0).asin()
}

/// Left and right impulse responses of one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoIr {
    pub left: Vec<f32>,
    pub right: Vec<f32>,
}

impl StereoIr {
    pub fn new(left: Vec<f32>, right: Vec<f32>) -> Self {
        Self { left, right }
    }

    pub fn ear(&self, ear: Ear) -> &[f32] {
        match ear {
            Ear::Left => &self.left,
            Ear::Right => &self.right,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ear {
    Left,
    Right,
}

impl Ear {
    pub const BOTH: [Ear; 2] = [Ear::Left, Ear::Right];

    pub fn index(self) -> usize {
        match self {
            Ear::Left => 0,
            Ear::Right => 1,
        }
    }
}

impl std::fmt::Display for Ear {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Ear::Left => "left",
            Ear::Right => "right",
        })
    }
}

/// A subject's complete set of stereo impulse responses.
#[derive(Debug, Clone, PartialEq)]
pub struct HrirSet {
    subject_id: String,
    sample_rate_hz: u32,
    positions: Vec<SphericalDirection>,
    irs: Vec<StereoIr>,
}

impl HrirSet {
    pub fn new(
        subject_id: impl Into<String>,
        sample_rate_hz: u32,
        positions: Vec<SphericalDirection>,
        irs: Vec<StereoIr>,
    ) -> Result<Self, DataError> {
        if sample_rate_hz == 0 {
            return Err(DataError::InvalidSampleRate(sample_rate_hz));
        }
        if positions.is_empty() {
            return Err(DataError::EmptyPositions);
        }
        if positions.len() != irs.len() {
            return Err(DataError::CountMismatch {
                positions: positions.len(),
                responses: irs.len(),
            });
        }
        let taps = irs[0].left.len();
        if taps < MIN_TAPS {
            return Err(DataError::TooFewTaps { taps });
        }
        for (position, ir) in irs.iter().enumerate() {
            for found in [ir.left.len(), ir.right.len()] {
                if found != taps {
                    return Err(DataError::LengthMismatch {
                        position,
                        expected: taps,
                        found,
                    });
                }
            }
        }
        check_distinct(&positions)?;
        Ok(Self {
            subject_id: subject_id.into(),
            sample_rate_hz,
            positions,
            irs,
        })
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn positions(&self) -> &[SphericalDirection] {
        &self.positions
    }

    pub fn irs(&self) -> &[StereoIr] {
        &self.irs
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn taps(&self) -> usize {
        self.irs[0].left.len()
    }

    /// Subset of positions, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self, DataError> {
        let positions = indices.iter().map(|&i| self.positions[i]).collect();
        let irs = indices.iter().map(|&i| self.irs[i].clone()).collect();
        Self::new(self.subject_id.clone(), self.sample_rate_hz, positions, irs)
    }
}

/// Rejects position lists containing two directions closer than
/// [`DUPLICATE_TOLERANCE_RAD`].
pub fn check_distinct(positions: &[SphericalDirection]) -> Result<(), DataError> {
    let vectors: Vec<[f64; 3]> = positions.iter().map(|p| p.unit_vector()).collect();
    for i in 0..vectors.len() {
        for j in (i + 1)..vectors.len() {
            let distance_rad = great_circle(vectors[i], vectors[j]);
            if distance_rad <= DUPLICATE_TOLERANCE_RAD {
                return Err(DataError::DuplicatePosition {
                    first: i,
                    second: j,
                    distance_rad,
                });
            }
        }
    }
    Ok(())
}

/// Header shared by the HRIRSET and HRTFMAG containers. For magnitude files
/// `taps` holds the number of bins per ear and `nfft` the transform size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct SetHeader {
    pub magic: String,
    pub subject_id: String,
    pub sample_rate_hz: u32,
    pub num_positions: usize,
    pub taps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nfft: Option<usize>,
    pub positions: Vec<[f64; 3]>,
}

impl SetHeader {
    pub fn directions(&self, path: &Path) -> Result<Vec<SphericalDirection>, DataError> {
        if self.positions.len() != self.num_positions {
            return Err(DataError::MalformedHeader {
                path: path.to_path_buf(),
                reason: format!(
                    "num_positions = {} but {} positions listed",
                    self.num_positions,
                    self.positions.len()
                ),
            });
        }
        self.positions
            .iter()
            .enumerate()
            .map(|(i, p)| {
                SphericalDirection::new(p[0], p[1], p[2]).map_err(|e| DataError::MalformedHeader {
                    path: path.to_path_buf(),
                    reason: format!("position {i}: {e}"),
                })
            })
            .collect()
    }
}

pub(crate) fn encode_positions(positions: &[SphericalDirection]) -> Vec<[f64; 3]> {
    positions
        .iter()
        .map(|p| [p.azimuth_rad, p.elevation_rad, p.radius_m])
        .collect()
}

/// Writes `header` as one JSON line followed by the little-endian payload.
pub(crate) fn write_container<H: Serialize>(
    path: &Path,
    header: &H,
    payload: impl Iterator<Item = f32>,
) -> Result<(), DataError> {
    let io = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut bytes = serde_json::to_vec(header).map_err(|e| DataError::MalformedHeader {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    bytes.push(b'\n');
    for v in payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(io)?;
    file.write_all(&bytes).map_err(io)?;
    Ok(())
}

/// Splits a container file into its parsed header and `f32` payload,
/// checking the payload holds exactly `expected_values(header)` floats.
pub(crate) fn read_container<H: for<'de> Deserialize<'de>>(
    path: &Path,
    expected_values: impl FnOnce(&H) -> usize,
) -> Result<(H, Vec<f32>), DataError> {
    let bytes = fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| DataError::MalformedHeader {
            path: path.to_path_buf(),
            reason: "no header line terminator".into(),
        })?;
    let header: H =
        serde_json::from_slice(&bytes[..newline]).map_err(|e| DataError::MalformedHeader {
            path: path.to_path_buf(),
            reason: format!("line 1, column {}: {e}", e.column()),
        })?;
    let payload = &bytes[newline + 1..];
    let expected = expected_values(&header) * 4;
    if payload.len() != expected {
        return Err(DataError::PayloadSizeMismatch {
            path: path.to_path_buf(),
            expected,
            found: payload.len(),
        });
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((header, values))
}

fn expect_magic(path: &Path, found: &str, wanted: &str) -> Result<(), DataError> {
    if found != wanted {
        return Err(DataError::MalformedHeader {
            path: path.to_path_buf(),
            reason: format!("magic {found:?}, expected {wanted:?}"),
        });
    }
    Ok(())
}

pub(crate) fn check_magic(path: &Path, found: &str, wanted: &str) -> Result<(), DataError> {
    expect_magic(path, found, wanted)
}

pub fn save_hrir_set(set: &HrirSet, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    // Sets built through `HrirSet::new` are never empty; guard anyway since
    // the payload layout relies on `taps` from the first response.
    if set.positions.is_empty() {
        return Err(DataError::EmptyPositions);
    }
    let header = SetHeader {
        magic: HRIRSET_MAGIC.into(),
        subject_id: set.subject_id.clone(),
        sample_rate_hz: set.sample_rate_hz,
        num_positions: set.positions.len(),
        taps: set.taps(),
        nfft: None,
        positions: encode_positions(&set.positions),
    };
    let payload = set
        .irs
        .iter()
        .flat_map(|ir| ir.left.iter().chain(ir.right.iter()).copied());
    write_container(path, &header, payload)
}

pub fn load_hrir_set(path: impl AsRef<Path>) -> Result<HrirSet, DataError> {
    let path = path.as_ref();
    let (header, values): (SetHeader, _) =
        read_container(path, |h: &SetHeader| h.num_positions * 2 * h.taps)?;
    expect_magic(path, &header.magic, HRIRSET_MAGIC)?;
    let positions = header.directions(path)?;
    let taps = header.taps;
    if taps == 0 {
        return Err(DataError::TooFewTaps { taps });
    }
    let irs = values
        .chunks_exact(2 * taps)
        .map(|c| StereoIr::new(c[..taps].to_vec(), c[taps..].to_vec()))
        .collect();
    HrirSet::new(header.subject_id, header.sample_rate_hz, positions, irs)
}

/// Parameters of the synthetic subject generator.
///
/// Each ear's log-magnitude response is a short cosine series in frequency
/// (a real cepstrum truncated at [`SynthParams::cepstral_order`]) whose
/// coefficients are low-order spherical-harmonic mixtures of the direction.
/// The mixture weights are a fixed population mean plus a per-subject
/// deviation drawn from the seed. Because the log spectrum is a finite
/// cepstrum, the minimum-phase impulse response follows exactly from the
/// power-series expansion of `exp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub cepstral_order: usize,
    /// Standard deviation of the per-subject deviation, relative to the
    /// population coefficient scale.
    pub subject_spread: f64,
    /// Gaussian measurement noise added to every tap (0 = noise free).
    pub noise_floor: f64,
    pub head_radius_m: f64,
    pub speed_of_sound_m_s: f64,
    /// Onset of the leading ear is `base_delay - ITD/2`; `None` picks a
    /// delay that leaves 16 silent samples before the earliest onset.
    pub base_delay: Option<usize>,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            cepstral_order: 10,
            subject_spread: 0.35,
            noise_floor: 0.0,
            head_radius_m: itd::DEFAULT_HEAD_RADIUS_M,
            speed_of_sound_m_s: itd::DEFAULT_SPEED_OF_SOUND_M_S,
            base_delay: None,
        }
    }
}

const SH_TERMS: usize = 9;
const POPULATION_SEED: u64 = 0x5eed_4e7f;

/// Real spherical harmonics up to degree 2 (unnormalised) at a unit vector.
fn sh_basis(v: [f64; 3]) -> [f64; SH_TERMS] {
    let [x, y, z] = v;
    [
        1.0,
        x,
        y,
        z,
        x * y,
        y * z,
        x * z,
        x * x - y * y,
        1.5 * z * z - 0.5,
    ]
}

/// Cepstral coefficient scale for quefrency `q`.
fn coefficient_scale(q: usize) -> f64 {
    if q == 0 {
        0.45
    } else {
        0.3 / (1.0 + q as f64)
    }
}

fn population_mean(order: usize) -> Vec<[f64; SH_TERMS]> {
    let mut rng = ChaCha8Rng::seed_from_u64(POPULATION_SEED);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (0..=order)
        .map(|q| {
            let mut row = [0.0; SH_TERMS];
            for (k, c) in row.iter_mut().enumerate() {
                *c = coefficient_scale(q) * normal.sample(&mut rng);
                if q == 0 && k == 0 {
                    *c = 0.0;
                }
            }
            if q == 0 {
                // Ipsilateral boost: left ear louder for sources on the left (+y).
                row[2] = 0.6;
            }
            row
        })
        .collect()
}

/// Log-magnitude cepstrum `a_q` of one ear at unit vector `v`.
fn ear_cepstrum(coeffs: &[[f64; SH_TERMS]], v: [f64; 3]) -> Vec<f64> {
    let basis = sh_basis(v);
    coeffs
        .iter()
        .map(|row| row.iter().zip(basis.iter()).map(|(c, b)| c * b).sum())
        .collect()
}

/// Minimum-phase impulse response of `exp(Σ_q a_q e^{-iqω})`, i.e. the
/// power-series coefficients of the exponential of a polynomial.
fn min_phase_from_cepstrum(a: &[f64], taps: usize) -> Vec<f64> {
    let mut h = vec![0.0; taps];
    if taps == 0 {
        return h;
    }
    h[0] = a[0].exp();
    for n in 1..taps {
        let top = n.min(a.len() - 1);
        let acc: f64 = (1..=top).map(|k| k as f64 * a[k] * h[n - k]).sum();
        h[n] = acc / n as f64;
    }
    h
}

/// Log-magnitude of the synthetic response for one ear at normalised angular
/// frequency `omega` (radians/sample). Exposed for tests that need the exact
/// underlying spectrum.
pub fn synth_log_magnitude(cepstrum: &[f64], omega: f64) -> f64 {
    cepstrum
        .iter()
        .enumerate()
        .map(|(q, a)| a * (q as f64 * omega).cos())
        .sum()
}

/// Per-subject, per-ear cepstra at the given positions.
pub fn synth_cepstra(
    seed: u64,
    positions: &[SphericalDirection],
    params: &SynthParams,
) -> Vec<[Vec<f64>; 2]> {
    let mean = population_mean(params.cepstral_order);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let coeffs: Vec<[f64; SH_TERMS]> = mean
        .iter()
        .enumerate()
        .map(|(q, row)| {
            let mut out = *row;
            for c in out.iter_mut() {
                *c += params.subject_spread * coefficient_scale(q) * normal.sample(&mut rng);
            }
            out
        })
        .collect();
    positions
        .iter()
        .map(|p| {
            [
                ear_cepstrum(&coeffs, p.unit_vector()),
                ear_cepstrum(&coeffs, p.mirrored().unit_vector()),
            ]
        })
        .collect()
}

pub fn synth_subject(
    seed: u64,
    positions: &[SphericalDirection],
    sample_rate_hz: u32,
    taps: usize,
) -> Result<HrirSet, DataError> {
    synth_subject_with(seed, positions, sample_rate_hz, taps, &SynthParams::default())
}

pub fn synth_subject_with(
    seed: u64,
    positions: &[SphericalDirection],
    sample_rate_hz: u32,
    taps: usize,
    params: &SynthParams,
) -> Result<HrirSet, DataError> {
    let fs = sample_rate_hz as f64;
    let max_itd = itd::max_itd_s(params.head_radius_m, params.speed_of_sound_m_s);
    let base = params
        .base_delay
        .unwrap_or(16 + (max_itd * fs / 2.0).ceil() as usize) as i64;
    let cepstra = synth_cepstra(seed, positions, params);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let noise = Normal::new(0.0, params.noise_floor.max(0.0)).expect("non-negative sigma");

    let irs = positions
        .iter()
        .zip(cepstra.iter())
        .map(|(dir, [left_c, right_c])| {
            let itd_s = itd::itd_model(dir, params.head_radius_m, params.speed_of_sound_m_s);
            let lag = (itd_s * fs).round() as i64;
            let left_delay = base - lag.div_euclid(2);
            let right_delay = left_delay + lag;
            let mut render = |cep: &[f64], delay: i64| -> Vec<f32> {
                let delay = delay.max(0) as usize;
                let body = min_phase_from_cepstrum(cep, taps.saturating_sub(delay));
                let mut out = vec![0.0f64; taps];
                out[delay.min(taps)..].copy_from_slice(&body);
                if params.noise_floor > 0.0 {
                    for v in out.iter_mut() {
                        *v += noise.sample(&mut noise_rng);
                    }
                }
                out.into_iter().map(|v| v as f32).collect()
            };
            let left = render(left_c, left_delay);
            let right = render(right_c, right_delay);
            StereoIr::new(left, right)
        })
        .collect();
    HrirSet::new(format!("synth-{seed}"), sample_rate_hz, positions.to_vec(), irs)
}

/// Measurement layout loosely modelled on a turntable rig: rings of constant
/// elevation from `elevation_min_deg` to `elevation_max_deg` in `step_deg`
/// increments, with azimuth spacing that widens towards the pole.
pub fn ring_layout(
    elevation_min_deg: f64,
    elevation_max_deg: f64,
    step_deg: f64,
    equator_count: usize,
) -> Vec<SphericalDirection> {
    let mut out = Vec::new();
    let mut el = elevation_min_deg;
    while el <= elevation_max_deg + 1e-9 {
        let count = ((equator_count as f64) * el.to_radians().cos()).round().max(1.0) as usize;
        for k in 0..count {
            let az = TAU * k as f64 / count as f64;
            out.push(SphericalDirection::unit(az, el.to_radians()));
        }
        el += step_deg;
    }
    out
}

/// Near-uniform Fibonacci lattice of `n` unit directions over the whole sphere.
pub fn fibonacci_positions(n: usize) -> Vec<SphericalDirection> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|k| {
            let z = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
            SphericalDirection::unit(golden * k as f64, z.asin())
        })
        .collect()
}

/// Train/validation partition of subject identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_subjects: Vec<String>,
    pub validation_subjects: Vec<String>,
}

/// Seeded subject-level split. The training set receives
/// `floor(train_fraction · N)` subjects, clamped so neither side is empty.
/// Both ears of a subject always travel together.
pub fn split_subjects(
    subject_ids: &[String],
    train_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit, DataError> {
    if subject_ids.len() < 2 {
        return Err(DataError::InvalidSplit(format!(
            "need at least 2 subjects, got {}",
            subject_ids.len()
        )));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::InvalidSplit(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let mut ids = subject_ids.to_vec();
    ids.sort();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(DataError::InvalidSplit(format!("duplicate subject {:?}", w[0])));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n = ids.len();
    let n_train = ((train_fraction * n as f64 + 1e-9).floor() as usize).clamp(1, n - 1);
    let validation_subjects = ids.split_off(n_train);
    Ok(DatasetSplit {
        train_subjects: ids,
        validation_subjects,
    })
}
