//! Magnitude spectra of impulse responses and minimum-phase reconstruction.

use std::path::Path;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::data::{
    encode_positions, read_container, write_container, DataError, HrirSet, SetHeader,
    SphericalDirection,
};
use crate::itd::{self, ItdError};

pub const HRTFMAG_MAGIC: &str = "HRTFMAG1";
pub const DEFAULT_NFFT: usize = 256;
/// Magnitudes are clamped to this before taking logarithms.
pub const MAGNITUDE_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SpectraError {
    #[error("nfft {nfft} must be even and at least the IR length {taps}")]
    BadTransformSize { nfft: usize, taps: usize },
    #[error("expected {expected} magnitude bins, found {found}")]
    BinCount { expected: usize, found: usize },
    #[error("negative or non-finite magnitude {value} at position {position}")]
    InvalidMagnitude { position: usize, value: f64 },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Itd(#[from] ItdError),
}

/// Per-position, per-ear magnitude responses at bins `1..=nfft/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeHrtf {
    subject_id: String,
    sample_rate_hz: u32,
    nfft: usize,
    positions: Vec<SphericalDirection>,
    /// `[position][ear][bin]`
    magnitudes: Vec<f64>,
}

impl MagnitudeHrtf {
    pub fn new(
        subject_id: impl Into<String>,
        sample_rate_hz: u32,
        nfft: usize,
        positions: Vec<SphericalDirection>,
        magnitudes: Vec<f64>,
    ) -> Result<Self, SpectraError> {
        if nfft < 2 || !nfft.is_multiple_of(2) {
            return Err(SpectraError::BadTransformSize { nfft, taps: 0 });
        }
        if positions.is_empty() {
            return Err(DataError::EmptyPositions.into());
        }
        let bins = nfft / 2;
        let expected = positions.len() * 2 * bins;
        if magnitudes.len() != expected {
            return Err(SpectraError::BinCount {
                expected,
                found: magnitudes.len(),
            });
        }
        if let Some(k) = magnitudes.iter().position(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(SpectraError::InvalidMagnitude {
                position: k / (2 * bins),
                value: magnitudes[k],
            });
        }
        Ok(Self {
            subject_id: subject_id.into(),
            sample_rate_hz,
            nfft,
            positions,
            magnitudes,
        })
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn nfft(&self) -> usize {
        self.nfft
    }

    pub fn bins_per_ear(&self) -> usize {
        self.nfft / 2
    }

    pub fn positions(&self) -> &[SphericalDirection] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    /// Bins of one ear (0 = left, 1 = right) at one position.
    pub fn ear(&self, position: usize, ear: usize) -> &[f64] {
        let w = self.bins_per_ear();
        let start = (position * 2 + ear) * w;
        &self.magnitudes[start..start + w]
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self, SpectraError> {
        let w = 2 * self.bins_per_ear();
        let positions = indices.iter().map(|&i| self.positions[i]).collect();
        let magnitudes = indices
            .iter()
            .flat_map(|&i| self.magnitudes[i * w..(i + 1) * w].iter().copied())
            .collect();
        Self::new(
            self.subject_id.clone(),
            self.sample_rate_hz,
            self.nfft,
            positions,
            magnitudes,
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SpectraError> {
        let header = SetHeader {
            magic: HRTFMAG_MAGIC.into(),
            subject_id: self.subject_id.clone(),
            sample_rate_hz: self.sample_rate_hz,
            num_positions: self.positions.len(),
            taps: self.bins_per_ear(),
            nfft: Some(self.nfft),
            positions: encode_positions(&self.positions),
        };
        write_container(
            path.as_ref(),
            &header,
            self.magnitudes.iter().map(|&m| m as f32),
        )?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SpectraError> {
        let path = path.as_ref();
        let (header, values): (SetHeader, _) =
            read_container(path, |h: &SetHeader| h.num_positions * 2 * h.taps)?;
        crate::data::check_magic(path, &header.magic, HRTFMAG_MAGIC)?;
        let nfft = header.nfft.unwrap_or(2 * header.taps);
        if nfft / 2 != header.taps {
            return Err(DataError::MalformedHeader {
                path: path.to_path_buf(),
                reason: format!("nfft {nfft} does not match {} bins", header.taps),
            }
            .into());
        }
        let positions = header.directions(path)?;
        Self::new(
            header.subject_id,
            header.sample_rate_hz,
            nfft,
            positions,
            values.into_iter().map(f64::from).collect(),
        )
    }
}

fn check_size(nfft: usize, taps: usize) -> Result<(), SpectraError> {
    if nfft < 2 || !nfft.is_multiple_of(2) || nfft < taps {
        return Err(SpectraError::BadTransformSize { nfft, taps });
    }
    Ok(())
}

/// `|DFT_nfft(ir)|` at bins `1..=nfft/2`, zero-padding the input.
pub fn magnitude_spectrum<T: Copy + Into<f64>>(ir: &[T], nfft: usize) -> Result<Vec<f64>, SpectraError> {
    check_size(nfft, ir.len())?;
    let mut buf: Vec<Complex64> = (0..nfft)
        .map(|n| Complex64::new(ir.get(n).map_or(0.0, |&v| v.into()), 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);
    Ok(buf[1..=nfft / 2].iter().map(|c| c.norm()).collect())
}

/// Minimum-phase impulse response with the given magnitudes at bins
/// `1..=nfft/2`. The DC magnitude, which the bin set omits, is taken equal to
/// bin 1. Phase comes from folding the real cepstrum of `ln|H|`.
pub fn minimum_phase_ir(mags: &[f64], nfft: usize, taps_out: usize) -> Result<Vec<f64>, SpectraError> {
    check_size(nfft, 0)?;
    let half = nfft / 2;
    if mags.len() != half {
        return Err(SpectraError::BinCount {
            expected: half,
            found: mags.len(),
        });
    }
    let log = |m: f64| m.max(MAGNITUDE_FLOOR).ln();
    let mut spec = vec![Complex64::new(0.0, 0.0); nfft];
    spec[0].re = log(mags[0]);
    for k in 1..=half {
        spec[k].re = log(mags[k - 1]);
        spec[nfft - k].re = spec[k].re;
    }
    let mut planner = FftPlanner::new();
    let inverse = planner.plan_fft_inverse(nfft);
    let forward = planner.plan_fft_forward(nfft);
    inverse.process(&mut spec);
    let scale = 1.0 / nfft as f64;
    // Fold the (real, even) cepstrum onto non-negative quefrencies.
    let mut cep = vec![Complex64::new(0.0, 0.0); nfft];
    cep[0].re = spec[0].re * scale;
    for n in 1..half {
        cep[n].re = 2.0 * spec[n].re * scale;
    }
    cep[half].re = spec[half].re * scale;
    forward.process(&mut cep);
    for c in cep.iter_mut() {
        *c = c.exp();
    }
    inverse.process(&mut cep);
    Ok((0..taps_out)
        .map(|n| if n < nfft { cep[n].re * scale } else { 0.0 })
        .collect())
}

/// Magnitudes of both ears at every position of `set`.
pub fn extract_magnitudes(set: &HrirSet, nfft: usize) -> Result<MagnitudeHrtf, SpectraError> {
    let mut magnitudes = Vec::with_capacity(set.len() * nfft);
    for ir in set.irs() {
        magnitudes.extend(magnitude_spectrum(&ir.left, nfft)?);
        magnitudes.extend(magnitude_spectrum(&ir.right, nfft)?);
    }
    MagnitudeHrtf::new(
        set.subject_id(),
        set.sample_rate_hz(),
        nfft,
        set.positions().to_vec(),
        magnitudes,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructConfig {
    pub taps: usize,
    /// Samples of silence before the leading ear's response.
    pub base_delay: usize,
    pub head_radius_m: f64,
    pub speed_of_sound_m_s: f64,
}

impl ReconstructConfig {
    pub fn new(taps: usize) -> Self {
        Self {
            taps,
            base_delay: 0,
            head_radius_m: itd::DEFAULT_HEAD_RADIUS_M,
            speed_of_sound_m_s: itd::DEFAULT_SPEED_OF_SOUND_M_S,
        }
    }
}

/// Minimum-phase IR per ear followed by the spherical-head ITD.
pub fn reconstruct_set(mags: &MagnitudeHrtf, cfg: &ReconstructConfig) -> Result<HrirSet, SpectraError> {
    let body_taps = cfg.taps.saturating_sub(cfg.base_delay);
    let mut irs = Vec::with_capacity(mags.len());
    for (p, dir) in mags.positions().iter().enumerate() {
        let render = |ear: usize| -> Result<Vec<f32>, SpectraError> {
            let h = minimum_phase_ir(mags.ear(p, ear), mags.nfft(), body_taps)?;
            let mut out = vec![0.0f32; cfg.taps];
            for (o, v) in out[cfg.base_delay.min(cfg.taps)..].iter_mut().zip(h) {
                *o = v as f32;
            }
            Ok(out)
        };
        let (left, right) = (render(0)?, render(1)?);
        let itd_s = itd::itd_model(dir, cfg.head_radius_m, cfg.speed_of_sound_m_s);
        irs.push(itd::apply_itd(&left, &right, itd_s, mags.sample_rate_hz())?);
    }
    Ok(HrirSet::new(
        mags.subject_id(),
        mags.sample_rate_hz(),
        mags.positions().to_vec(),
        irs,
    )?)
}
