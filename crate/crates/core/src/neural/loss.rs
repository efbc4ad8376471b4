//! Spectral distortion, level-difference and adversarial losses.
//!
//! Spectral tensors hold the left-ear bins in channels `0..B` and the right
//! ear in `B..2B`. Magnitudes are floored at [`MAGNITUDE_FLOOR`] before any
//! logarithm; gradients through the floor are zero.

use std::f64::consts::LN_10;

use super::layers::sigmoid;
use super::tensor::Act;
use super::NeuralError;
use crate::cubesphere::PanelTensor;
use crate::spectra::MAGNITUDE_FLOOR;

/// Clamp applied to probabilities inside the cross-entropy logarithms.
pub const BCE_EPS: f64 = 1e-7;

const DB: f64 = 20.0 / LN_10;

fn check_pair(reference: &Act, test: &Act) -> Result<(), NeuralError> {
    if !reference.same_shape(test) {
        return Err(NeuralError::Shape(format!(
            "reference {}×{}×w{} vs test {}×{}×w{}",
            reference.n, reference.c, reference.width, test.n, test.c, test.width
        )));
    }
    if test.c == 0 || !test.c.is_multiple_of(2) {
        return Err(NeuralError::Shape(format!("{} channels cannot split into two ears", test.c)));
    }
    Ok(())
}

fn floored(v: f64) -> (f64, bool) {
    if v > MAGNITUDE_FLOOR {
        (v, true)
    } else {
        (MAGNITUDE_FLOOR, false)
    }
}

fn single(t: &PanelTensor) -> Act {
    Act::from_vec(1, t.channels(), t.width(), t.data().to_vec())
}

/// Mean over positions of the RMS dB log-ratio across all bins of both
/// ears, with the gradient with respect to `test`. Batches average over
/// every position of every sample.
pub fn lsd_batch(reference: &Act, test: &Act) -> Result<(f64, Act), NeuralError> {
    check_pair(reference, test)?;
    let (n, c, cells) = (test.n, test.c, test.spatial());
    let positions = (n * cells) as f64;
    let mut grad = Act::zeros(n, c, test.width);
    let mut total = 0.0;
    let mut d = vec![0.0; c];
    for s in 0..n {
        let base = s * c * cells;
        for cell in 0..cells {
            let mut sq = 0.0;
            for (ch, dv) in d.iter_mut().enumerate() {
                let k = base + ch * cells + cell;
                let (r, _) = floored(reference.data[k]);
                let (t, _) = floored(test.data[k]);
                *dv = DB * (r / t).ln();
                sq += *dv * *dv;
            }
            let l = (sq / c as f64).sqrt();
            total += l;
            if l > 0.0 {
                for (ch, dv) in d.iter().enumerate() {
                    let k = base + ch * cells + cell;
                    let (t, live) = floored(test.data[k]);
                    if live {
                        grad.data[k] = -DB * dv / (c as f64 * l * t * positions);
                    }
                }
            }
        }
    }
    Ok((total / positions, grad))
}

/// Mean absolute difference of interaural dB level ratios, averaged over
/// bins and positions, with the gradient with respect to `test`.
pub fn ild_batch(reference: &Act, test: &Act) -> Result<(f64, Act), NeuralError> {
    check_pair(reference, test)?;
    let (n, c, cells) = (test.n, test.c, test.spatial());
    let bins = c / 2;
    let scale = (n * cells * bins) as f64;
    let mut grad = Act::zeros(n, c, test.width);
    let mut total = 0.0;
    for s in 0..n {
        let base = s * c * cells;
        for b in 0..bins {
            for cell in 0..cells {
                let kl = base + b * cells + cell;
                let kr = base + (bins + b) * cells + cell;
                let ild_ref = DB * (floored(reference.data[kl]).0 / floored(reference.data[kr]).0).ln();
                let (tl, live_l) = floored(test.data[kl]);
                let (tr, live_r) = floored(test.data[kr]);
                let diff = ild_ref - DB * (tl / tr).ln();
                total += diff.abs();
                let sign = if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                if live_l {
                    grad.data[kl] = -sign * DB / (tl * scale);
                }
                if live_r {
                    grad.data[kr] = sign * DB / (tr * scale);
                }
            }
        }
    }
    Ok((total / scale, grad))
}

/// Log-spectral distortion in dB between two spectral tensors.
pub fn lsd(reference: &PanelTensor, test: &PanelTensor) -> Result<f64, NeuralError> {
    Ok(lsd_batch(&single(reference), &single(test))?.0)
}

/// Interaural level difference error in dB between two spectral tensors.
pub fn ild(reference: &PanelTensor, test: &PanelTensor) -> Result<f64, NeuralError> {
    Ok(ild_batch(&single(reference), &single(test))?.0)
}

/// `LSD/c_LSD + ILD/c_ILD`, with both constants frozen from the first batch
/// it sees. A term that is zero on that batch keeps a constant of 1.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContentLoss {
    pub c_lsd: Option<f64>,
    pub c_ild: Option<f64>,
}

impl ContentLoss {
    pub fn frozen(c_lsd: f64, c_ild: f64) -> Self {
        Self {
            c_lsd: Some(c_lsd),
            c_ild: Some(c_ild),
        }
    }

    pub fn is_initialised(&self) -> bool {
        self.c_lsd.is_some() && self.c_ild.is_some()
    }

    /// Freezes the constants from this batch if they are not yet set, then
    /// evaluates the loss.
    pub fn initialise_and_eval(&mut self, reference: &Act, test: &Act) -> Result<(f64, Act), NeuralError> {
        if !self.is_initialised() {
            let (l, _) = lsd_batch(reference, test)?;
            let (i, _) = ild_batch(reference, test)?;
            let nz = |v: f64| if v > 0.0 { v } else { 1.0 };
            self.c_lsd = Some(nz(l));
            self.c_ild = Some(nz(i));
        }
        self.eval(reference, test)
    }

    /// Normalised loss and its gradient with respect to `test`.
    pub fn eval(&self, reference: &Act, test: &Act) -> Result<(f64, Act), NeuralError> {
        let (Some(cl), Some(ci)) = (self.c_lsd, self.c_ild) else {
            return Err(NeuralError::Uninitialised);
        };
        let (l, gl) = lsd_batch(reference, test)?;
        let (i, gi) = ild_batch(reference, test)?;
        let mut grad = gl;
        for (g, h) in grad.data.iter_mut().zip(&gi.data) {
            *g = *g / cl + h / ci;
        }
        Ok((l / cl + i / ci, grad))
    }
}

/// Binary cross-entropy `−(1/M)Σ[y log p + (1−y) log(1−p)]` with `p`
/// clamped to `[ε, 1−ε]`.
pub fn adversarial_loss(probabilities: &[f64], labels: &[f64]) -> Result<f64, NeuralError> {
    if probabilities.len() != labels.len() || probabilities.is_empty() {
        return Err(NeuralError::Shape(format!(
            "{} probabilities for {} labels",
            probabilities.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (index, (&p, &y)) in probabilities.iter().zip(labels).enumerate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(NeuralError::Probability { index, value: p });
        }
        let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    Ok(total / probabilities.len() as f64)
}

/// Cross-entropy of `sigmoid(logits)` against one label, with the gradient
/// with respect to the logits.
pub fn bce_logits(logits: &Act, label: f64) -> (f64, Act) {
    let m = logits.data.len() as f64;
    let probs: Vec<f64> = logits.data.iter().map(|&z| sigmoid(z)).collect();
    let labels = vec![label; probs.len()];
    let loss = adversarial_loss(&probs, &labels).expect("sigmoid output is a probability");
    let mut grad = logits.clone();
    for (g, p) in grad.data.iter_mut().zip(&probs) {
        *g = (p - label) / m;
    }
    (loss, grad)
}
