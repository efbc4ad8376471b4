//! Interaural time differences: Kalman-filter onset detection, ITD removal
//! by per-ear time alignment, and the spherical-head ITD model used when
//! reconstructing upsampled sets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Ear, HrirSet, SphericalDirection, StereoIr};

pub const DEFAULT_HEAD_RADIUS_M: f64 = 0.0875;
pub const DEFAULT_SPEED_OF_SOUND_M_S: f64 = 343.0;

/// Number of leading samples used to estimate the noise floor.
pub const NOISE_WINDOW: usize = 8;

#[derive(Debug, Error)]
pub enum ItdError {
    #[error("no onset detected")]
    NoOnset,
    #[error("no onset detected at position {position}, {ear} ear")]
    NoOnsetAt { position: usize, ear: Ear },
    #[error("impulse response too short for onset detection ({0} samples)")]
    TooShort(usize),
    #[error(
        "trim window out of bounds at position {position}, {ear} ear: onset {onset}, \
         pre-roll {pre_roll}, length {length_out}, available {taps}"
    )]
    TrimOutOfBounds {
        position: usize,
        ear: Ear,
        onset: usize,
        pre_roll: usize,
        length_out: usize,
        taps: usize,
    },
    #[error("delay of {delay} samples exceeds impulse response length {len}")]
    DelayTooLong { delay: usize, len: usize },
    #[error("left/right lengths differ ({left} vs {right})")]
    EarLengthMismatch { left: usize, right: usize },
    #[error("invalid Kalman configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Scalar random-walk Kalman filter parameters (amplitude units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanConfig {
    pub process_variance: f64,
    pub measurement_variance: f64,
    pub threshold: f64,
    pub initial_state: f64,
    pub initial_variance: f64,
}

impl KalmanConfig {
    pub fn validate(&self) -> Result<(), ItdError> {
        let ok = self.process_variance > 0.0
            && self.measurement_variance > 0.0
            && self.threshold > 0.0
            && self.initial_variance >= 0.0
            && self.initial_state.is_finite();
        if ok {
            Ok(())
        } else {
            Err(ItdError::InvalidConfig(format!("{self:?}")))
        }
    }

    /// Data-driven defaults: the measurement noise is estimated from the
    /// first [`NOISE_WINDOW`] samples (median absolute value scaled to a
    /// Gaussian σ, floored at 1e-9 of the peak), σw² = σv²/10 and the
    /// detection threshold is 20σv.
    pub fn from_ir(ir: &[f32]) -> Self {
        Self::from_ir_with(ir, &KalmanOverrides::default())
    }

    pub fn from_ir_with(ir: &[f32], overrides: &KalmanOverrides) -> Self {
        let sigma_v = overrides.sigma_v.unwrap_or_else(|| noise_floor_estimate(ir));
        let measurement_variance = sigma_v * sigma_v;
        let process_variance = overrides
            .sigma_w
            .map(|s| s * s)
            .unwrap_or(measurement_variance / 10.0);
        Self {
            process_variance,
            measurement_variance,
            threshold: overrides.gamma.unwrap_or(20.0 * sigma_v),
            initial_state: ir.first().map_or(0.0, |v| v.abs() as f64),
            initial_variance: measurement_variance,
        }
    }
}

/// Optional user overrides applied on top of [`KalmanConfig::from_ir`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KalmanOverrides {
    pub sigma_v: Option<f64>,
    pub sigma_w: Option<f64>,
    pub gamma: Option<f64>,
}

fn noise_floor_estimate(ir: &[f32]) -> f64 {
    let mut head: Vec<f64> = ir
        .iter()
        .take(NOISE_WINDOW)
        .map(|v| v.abs() as f64)
        .collect();
    head.sort_by(f64::total_cmp);
    let median = match head.len() {
        0 => 0.0,
        n if n % 2 == 1 => head[n / 2],
        n => 0.5 * (head[n / 2 - 1] + head[n / 2]),
    };
    // median(|v|) of N(0, σ²) is 0.6745σ
    let sigma = median / 0.674_489_750_196_081_7;
    let peak = ir.iter().fold(0.0f64, |m, v| m.max(v.abs() as f64));
    sigma.max(1e-9 * peak).max(f64::MIN_POSITIVE.sqrt())
}

/// Filter state after an update, plus the intermediate quantities of that step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    pub estimate: f64,
    pub variance: f64,
    pub innovation_variance: f64,
    pub gain: f64,
    pub residual: f64,
}

impl KalmanState {
    pub fn initial(cfg: &KalmanConfig) -> Self {
        Self {
            estimate: cfg.initial_state,
            variance: cfg.initial_variance,
            innovation_variance: 0.0,
            gain: 0.0,
            residual: 0.0,
        }
    }
}

/// One predict/update cycle. Returns the new state and the post-update
/// residual `z − x̂_{n|n}`.
pub fn kalman_step(state: &KalmanState, z: f64, cfg: &KalmanConfig) -> (KalmanState, f64) {
    let predicted = state.estimate;
    let predicted_variance = state.variance + cfg.process_variance;
    let innovation_variance = predicted_variance + cfg.measurement_variance;
    let gain = predicted_variance / innovation_variance;
    let estimate = predicted + gain * (z - predicted);
    let variance = (1.0 - gain).powi(2) * predicted_variance + gain * gain * cfg.measurement_variance;
    let residual = z - estimate;
    (
        KalmanState {
            estimate,
            variance,
            innovation_variance,
            gain,
            residual,
        },
        residual,
    )
}

/// Index of the first sample whose post-update residual magnitude exceeds
/// the threshold, filtering `|ir[n]|`.
pub fn detect_onset(ir: &[f32], cfg: &KalmanConfig) -> Result<usize, ItdError> {
    if ir.len() < 2 {
        return Err(ItdError::TooShort(ir.len()));
    }
    cfg.validate()?;
    let mut state = KalmanState::initial(cfg);
    for (n, v) in ir.iter().enumerate() {
        let (next, residual) = kalman_step(&state, v.abs() as f64, cfg);
        if residual.abs() > cfg.threshold {
            return Ok(n);
        }
        state = next;
    }
    Err(ItdError::NoOnset)
}

/// Detected onset of one impulse response in a set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Onset {
    pub position: usize,
    pub ear: Ear,
    pub sample: usize,
}

/// Onsets of every IR in the set, ordered by position then ear.
pub fn detect_onsets(set: &HrirSet, overrides: &KalmanOverrides) -> Result<Vec<Onset>, ItdError> {
    let mut out = Vec::with_capacity(2 * set.len());
    for (position, ir) in set.irs().iter().enumerate() {
        for ear in Ear::BOTH {
            let samples = ir.ear(ear);
            let cfg = KalmanConfig::from_ir_with(samples, overrides);
            let sample = detect_onset(samples, &cfg).map_err(|e| match e {
                ItdError::NoOnset => ItdError::NoOnsetAt { position, ear },
                other => other,
            })?;
            out.push(Onset {
                position,
                ear,
                sample,
            });
        }
    }
    Ok(out)
}

/// Trim every IR so its detected onset lands at `pre_roll`, keeping
/// `length_out` samples. Each ear is aligned independently, which removes
/// the ITD entirely.
pub fn align_set(
    set: &HrirSet,
    overrides: &KalmanOverrides,
    pre_roll: usize,
    length_out: usize,
) -> Result<(HrirSet, Vec<Onset>), ItdError> {
    let onsets = detect_onsets(set, overrides)?;
    let taps = set.taps();
    let mut crops = onsets.iter().map(|o| {
        let start = o.sample.checked_sub(pre_roll);
        match start {
            Some(start) if start + length_out <= taps => {
                Ok(set.irs()[o.position].ear(o.ear)[start..start + length_out].to_vec())
            }
            _ => Err(ItdError::TrimOutOfBounds {
                position: o.position,
                ear: o.ear,
                onset: o.sample,
                pre_roll,
                length_out,
                taps,
            }),
        }
    });
    let mut irs = Vec::with_capacity(set.len());
    for _ in 0..set.len() {
        let left = crops.next().expect("two onsets per position")?;
        let right = crops.next().expect("two onsets per position")?;
        irs.push(StereoIr::new(left, right));
    }
    let aligned = HrirSet::new(
        set.subject_id(),
        set.sample_rate_hz(),
        set.positions().to_vec(),
        irs,
    )?;
    Ok((aligned, onsets))
}

/// Spherical-head ITD in seconds. Positive when the right ear lags, i.e. for
/// sources on the left (azimuth in (0, π)).
pub fn itd_model(dir: &SphericalDirection, head_radius_m: f64, speed_m_s: f64) -> f64 {
    let lateral = dir.azimuth_rad().sin() * dir.elevation_rad().cos();
    // sin(π) and cos(π/2) are not zero in floating point; snap round-off so
    // the median plane and the poles give exactly zero.
    if lateral.abs() < 1e-15 {
        return 0.0;
    }
    let interaural = lateral.clamp(-1.0, 1.0).asin();
    head_radius_m / speed_m_s * (interaural + interaural.sin())
}

/// Largest |ITD| the model produces (fully lateral source).
pub fn max_itd_s(head_radius_m: f64, speed_m_s: f64) -> f64 {
    head_radius_m / speed_m_s * (std::f64::consts::FRAC_PI_2 + 1.0)
}

/// Delay the lagging ear by `round(|itd|·fs)` samples (zero-filled front,
/// truncated tail). Positive ITD delays the right ear.
pub fn apply_itd(
    left: &[f32],
    right: &[f32],
    itd_s: f64,
    sample_rate_hz: u32,
) -> Result<StereoIr, ItdError> {
    if left.len() != right.len() {
        return Err(ItdError::EarLengthMismatch {
            left: left.len(),
            right: right.len(),
        });
    }
    let delay = (itd_s.abs() * sample_rate_hz as f64).round() as usize;
    let len = left.len();
    if delay >= len && delay > 0 {
        return Err(ItdError::DelayTooLong { delay, len });
    }
    let shifted = |x: &[f32]| delay_by(x, delay);
    Ok(if itd_s > 0.0 {
        StereoIr::new(left.to_vec(), shifted(right))
    } else if itd_s < 0.0 {
        StereoIr::new(shifted(left), right.to_vec())
    } else {
        StereoIr::new(left.to_vec(), right.to_vec())
    })
}

pub(crate) fn delay_by(x: &[f32], delay: usize) -> Vec<f32> {
    let mut out = vec![0.0; x.len()];
    if delay < x.len() {
        out[delay..].copy_from_slice(&x[..x.len() - delay]);
    }
    out
}
