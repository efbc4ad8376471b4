use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::discriminator::Discriminator;
use super::generator::Generator;
use super::layers::Layer;
use super::loss::{bce_logits, lsd_batch, ContentLoss};
use super::param::{Adam, Param};
use super::tensor::Act;
use super::NeuralError;
use crate::cubesphere::{to_magnitudes, PanelTensor};
use crate::projection::CubedSphereGrid;
use crate::spectra::MagnitudeHrtf;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanConfig {
    pub epochs: usize,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub lambda_content: f64,
    pub lambda_adversarial: f64,
    pub batch_size: usize,
    pub residual_blocks: usize,
    pub hidden_features: usize,
    pub factor: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub d_updates_per_g: usize,
    pub kernel: usize,
    pub leaky_slope: f64,
    pub bn_momentum: f64,
}

impl GanConfig {
    /// Published settings for each upsampling factor (2, 4, 8 or 16).
    pub fn published(factor: usize) -> Option<Self> {
        let (lr_g, lambda_c, lambda_a) = match factor {
            2 => (2.0e-4, 0.1, 0.001),
            4 => (8.0e-4, 0.01, 0.1),
            8 => (2.0e-4, 0.001, 0.001),
            16 => (2.0e-4, 0.01, 0.01),
            _ => return None,
        };
        Some(Self {
            epochs: 300,
            lr_generator: lr_g,
            lr_discriminator: 1.5e-6,
            lambda_content: lambda_c,
            lambda_adversarial: lambda_a,
            batch_size: 8,
            residual_blocks: 8,
            hidden_features: 512,
            factor,
            beta1: 0.9,
            beta2: 0.999,
            d_updates_per_g: 4,
            kernel: 3,
            leaky_slope: 0.2,
            bn_momentum: 0.9,
        })
    }

    /// Desk-scale settings: 32 hidden features, 2 residual blocks,
    /// 100 epochs of batch 4.
    pub fn toy(factor: usize) -> Self {
        Self {
            epochs: 100,
            lr_generator: 2.0e-3,
            lr_discriminator: 1.5e-6,
            lambda_content: 1.0,
            lambda_adversarial: 0.001,
            batch_size: 4,
            residual_blocks: 2,
            hidden_features: 32,
            factor,
            beta1: 0.9,
            beta2: 0.999,
            d_updates_per_g: 4,
            kernel: 3,
            leaky_slope: 0.2,
            bn_momentum: 0.9,
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |m: &str| Err(NeuralError::Config(m.into()));
        if !self.factor.is_power_of_two() {
            return bad("factor must be a power of two");
        }
        if !(self.lr_generator > 0.0 && self.lr_discriminator > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.lambda_content >= 0.0 && self.lambda_adversarial >= 0.0) {
            return bad("loss weights must be non-negative");
        }
        if self.batch_size == 0 || self.hidden_features == 0 {
            return bad("batch size and hidden features must be positive");
        }
        if self.kernel.is_multiple_of(2) {
            return bad("kernel size must be odd");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.bn_momentum) {
            return bad("batch-norm momentum must lie in [0, 1)");
        }
        if !self.leaky_slope.is_finite() {
            return bad("leaky slope must be finite");
        }
        Ok(())
    }
}

/// Low-resolution input and its high-resolution target.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub low: PanelTensor,
    pub high: PanelTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub generator_loss: f64,
    pub content_loss: f64,
    pub adversarial_loss: f64,
    pub discriminator_loss: f64,
    pub validation_content_loss: Option<f64>,
    pub validation_lsd_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: GanConfig,
    pub seed: u64,
    pub content_norm_lsd: f64,
    pub content_norm_ild: f64,
    pub epochs: Vec<EpochRecord>,
    pub final_validation_lsd_db: Option<f64>,
}

fn check_pairs(pairs: &[TrainingPair], cfg: &GanConfig) -> Result<(usize, usize), NeuralError> {
    let first = pairs
        .first()
        .ok_or_else(|| NeuralError::Shape("training set is empty".into()))?;
    let (c, w) = (first.low.channels(), first.low.width());
    for (k, p) in pairs.iter().enumerate() {
        if p.low.channels() != c || p.low.width() != w {
            return Err(NeuralError::Shape(format!("pair {k}: low-resolution tensor shape differs")));
        }
        if p.high.channels() != c || p.high.width() != w * cfg.factor {
            return Err(NeuralError::Shape(format!(
                "pair {k}: target is {}×w{}, expected {c}×w{}",
                p.high.channels(),
                p.high.width(),
                w * cfg.factor
            )));
        }
    }
    Ok((c, w))
}

fn batch<'a>(items: impl Iterator<Item = &'a PanelTensor>) -> Act {
    Act::stack(items.map(|t| (t.channels(), t.width(), t.data())))
}

fn finite(v: f64, what: &str, epoch: usize, step: usize) -> Result<f64, NeuralError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(NeuralError::NonFinite {
            what: what.into(),
            epoch,
            step,
        })
    }
}

fn zero_grads(params: &mut [&mut Param]) {
    params.iter_mut().for_each(|p| p.zero_grad());
}

/// Adversarial training: for every batch, `d_updates_per_g` discriminator
/// steps on real (label 1) and generated (label 0) targets, then one
/// generator step on `λ_C·content + λ_A·adversarial`. The content loss
/// normalisation is frozen from the first batch. Validation metrics are
/// computed with batch-norm running statistics after every epoch.
pub fn train(
    pairs: &[TrainingPair],
    validation: &[TrainingPair],
    cfg: &GanConfig,
    seed: u64,
) -> Result<(Generator, TrainReport), NeuralError> {
    cfg.validate()?;
    let (channels, low_width) = check_pairs(pairs, cfg)?;
    if !validation.is_empty() {
        let shape = check_pairs(validation, cfg)?;
        if shape != (channels, low_width) {
            return Err(NeuralError::Shape("validation pairs differ from training pairs".into()));
        }
    }
    let high_width = low_width * cfg.factor;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gen = Generator::new(
        channels,
        cfg.hidden_features,
        cfg.residual_blocks,
        cfg.factor,
        cfg.kernel,
        cfg.bn_momentum,
        &mut rng,
    );
    let mut disc = Discriminator::new(
        channels,
        high_width,
        cfg.hidden_features,
        cfg.kernel,
        cfg.leaky_slope,
        cfg.bn_momentum,
        &mut rng,
    );
    let mut opt_g = Adam::new(cfg.lr_generator, cfg.beta1, cfg.beta2);
    let mut opt_d = Adam::new(cfg.lr_discriminator, cfg.beta1, cfg.beta2);
    let mut content = ContentLoss::default();
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut step = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum_g, mut sum_c, mut sum_a, mut sum_d) = (0.0, 0.0, 0.0, 0.0);
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            step += 1;
            let low = batch(chunk.iter().map(|&k| &pairs[k].low));
            let high = batch(chunk.iter().map(|&k| &pairs[k].high));
            let fake = gen.forward(&low, true);

            let mut d_loss = 0.0;
            for _ in 0..cfg.d_updates_per_g {
                zero_grads(&mut disc.params());
                let real_logits = disc.forward(&high, true);
                let (lr, gr) = bce_logits(&real_logits, 1.0);
                disc.backward(&gr);
                let fake_logits = disc.forward(&fake, true);
                let (lf, gf) = bce_logits(&fake_logits, 0.0);
                disc.backward(&gf);
                opt_d.step(&mut disc.params());
                d_loss += 0.5 * (lr + lf);
            }
            if cfg.d_updates_per_g > 0 {
                d_loss /= cfg.d_updates_per_g as f64;
            }

            let logits = disc.forward(&fake, true);
            let (adv, g_adv_logits) = bce_logits(&logits, 1.0);
            let g_adv = disc.backward(&g_adv_logits);
            zero_grads(&mut disc.params());
            let (con, g_con) = content.initialise_and_eval(&high, &fake)?;
            let total = cfg.lambda_content * con + cfg.lambda_adversarial * adv;
            finite(total, "generator loss", epoch, step)?;
            finite(d_loss, "discriminator loss", epoch, step)?;
            let mut grad = g_con;
            for (g, a) in grad.data.iter_mut().zip(&g_adv.data) {
                *g = cfg.lambda_content * *g + cfg.lambda_adversarial * a;
            }
            zero_grads(&mut gen.params());
            gen.backward(&grad);
            opt_g.step(&mut gen.params());

            sum_g += total;
            sum_c += con;
            sum_a += adv;
            sum_d += d_loss;
            batches += 1;
        }
        let b = batches as f64;
        let (validation_content_loss, validation_lsd_db) = if validation.is_empty() {
            (None, None)
        } else {
            let low = batch(validation.iter().map(|p| &p.low));
            let high = batch(validation.iter().map(|p| &p.high));
            let out = gen.forward(&low, false);
            let (vc, _) = content.eval(&high, &out)?;
            let (vl, _) = lsd_batch(&high, &out)?;
            (
                Some(finite(vc, "validation content loss", epoch, step)?),
                Some(finite(vl, "validation LSD", epoch, step)?),
            )
        };
        records.push(EpochRecord {
            epoch,
            generator_loss: sum_g / b,
            content_loss: sum_c / b,
            adversarial_loss: sum_a / b,
            discriminator_loss: sum_d / b,
            validation_content_loss,
            validation_lsd_db,
        });
    }

    let report = TrainReport {
        config: *cfg,
        seed,
        content_norm_lsd: content.c_lsd.unwrap_or(1.0),
        content_norm_ild: content.c_ild.unwrap_or(1.0),
        final_validation_lsd_db: records.last().and_then(|r| r.validation_lsd_db),
        epochs: records,
    };
    Ok((gen, report))
}

/// Runs the generator in inference mode on one low-resolution tensor.
pub fn upsample(low: &PanelTensor, gen: &mut Generator) -> Result<PanelTensor, NeuralError> {
    if low.channels() != gen.channels {
        return Err(NeuralError::Shape(format!(
            "input has {} channels, generator expects {}",
            low.channels(),
            gen.channels
        )));
    }
    let out = gen.forward(&Act::from_vec(1, low.channels(), low.width(), low.data().to_vec()), false);
    Ok(PanelTensor::new(out.c, out.width, out.data)?)
}

/// [`upsample`], unpacked onto the cells of `grid`.
pub fn upsample_magnitudes(
    low: &PanelTensor,
    gen: &mut Generator,
    grid: &CubedSphereGrid,
    subject_id: &str,
    sample_rate_hz: u32,
) -> Result<MagnitudeHrtf, NeuralError> {
    let high = upsample(low, gen)?;
    if high.width() != grid.width() {
        return Err(NeuralError::Shape(format!(
            "generator output width {} but grid width {}",
            high.width(),
            grid.width()
        )));
    }
    Ok(to_magnitudes(&high, grid.directions(), subject_id, sample_rate_hz)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cubesphere::downsample;
    use crate::projection::make_grid;
    use rand::Rng;

    /// Smooth positive fields: low-order harmonics of the cell direction
    /// with per-subject coefficients.
    fn dataset(subjects: usize, channels: usize, width: usize, factor: usize, seed: u64) -> Vec<TrainingPair> {
        let grid = make_grid(width, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..subjects)
            .map(|_| {
                let coef: Vec<[f64; 3]> = (0..channels)
                    .map(|_| [rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4)])
                    .collect();
                let mut data = Vec::with_capacity(channels * grid.len());
                for c in &coef {
                    for d in grid.directions() {
                        let u = d.unit_vector();
                        data.push((c[0] * u[0] + c[1] * u[1] + c[2] * u[2]).exp());
                    }
                }
                let high = PanelTensor::new(channels, width, data).unwrap();
                let low = downsample(&high, factor).unwrap();
                TrainingPair { low, high }
            })
            .collect()
    }

    fn tiny(factor: usize) -> GanConfig {
        GanConfig {
            epochs: 3,
            hidden_features: 4,
            residual_blocks: 1,
            batch_size: 2,
            ..GanConfig::toy(factor)
        }
    }

    #[test]
    fn presets() {
        let p = GanConfig::published(8).unwrap();
        assert_eq!((p.lr_generator, p.lr_discriminator, p.lambda_content, p.lambda_adversarial), (2.0e-4, 1.5e-6, 0.001, 0.001));
        assert_eq!((p.epochs, p.beta1, p.beta2, p.d_updates_per_g), (300, 0.9, 0.999, 4));
        assert!(GanConfig::published(3).is_none());
        for r in [2, 4, 8, 16] {
            GanConfig::published(r).unwrap().validate().unwrap();
        }
        assert!(GanConfig { factor: 3, ..GanConfig::toy(2) }.validate().is_err());
        assert!(GanConfig { lr_generator: 0.0, ..GanConfig::toy(2) }.validate().is_err());
        assert!(GanConfig { lambda_adversarial: -1.0, ..GanConfig::toy(2) }.validate().is_err());
    }

    #[test]
    fn same_seed_same_report() {
        let data = dataset(4, 4, 4, 2, 1);
        let cfg = tiny(2);
        let (mut g1, r1) = train(&data[..3], &data[3..], &cfg, 9).unwrap();
        let (mut g2, r2) = train(&data[..3], &data[3..], &cfg, 9).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.epochs.len(), 3);
        let a: Vec<Vec<f64>> = g1.params().iter().map(|p| p.value.clone()).collect();
        let b: Vec<Vec<f64>> = g2.params().iter().map(|p| p.value.clone()).collect();
        assert_eq!(a, b);
        let (_, r3) = train(&data[..3], &data[3..], &cfg, 10).unwrap();
        assert_ne!(r1, r3);
    }

    #[test]
    fn rejects_inconsistent_pairs() {
        let data = dataset(2, 4, 4, 2, 2);
        let other = dataset(1, 2, 4, 2, 3);
        let mixed = vec![data[0].clone(), other[0].clone()];
        assert!(matches!(train(&mixed, &[], &tiny(2), 0), Err(NeuralError::Shape(_))));
        assert!(matches!(train(&data, &[], &tiny(4), 0), Err(NeuralError::Shape(_))));
        assert!(matches!(train(&[], &[], &tiny(2), 0), Err(NeuralError::Shape(_))));
    }

    #[test]
    fn non_finite_loss_aborts_with_location() {
        let data = dataset(2, 4, 4, 2, 4);
        let cfg = GanConfig {
            lambda_content: f64::INFINITY,
            ..tiny(2)
        };
        match train(&data, &[], &cfg, 0) {
            Err(NeuralError::NonFinite { epoch, step, .. }) => assert_eq!((epoch, step), (1, 1)),
            other => panic!("expected a non-finite abort, got {other:?}"),
        }
    }

    #[test]
    fn content_regression_decreases() {
        let data = dataset(2, 4, 4, 2, 5);
        let cfg = GanConfig {
            epochs: 60,
            lambda_adversarial: 0.0,
            lr_generator: 1e-3,
            ..tiny(2)
        };
        let (_, report) = train(&data, &[], &cfg, 3).unwrap();
        let losses: Vec<f64> = report.epochs.iter().map(|r| r.content_loss).collect();
        let smooth: Vec<f64> = losses.windows(10).map(|w| w.iter().sum::<f64>() / 10.0).collect();
        for w in smooth.windows(2) {
            assert!(w[1] < w[0], "smoothed content loss rose: {w:?}");
        }
    }

    #[test]
    fn upsample_shapes() {
        let data = dataset(1, 4, 8, 2, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g = Generator::new(4, 4, 1, 2, 3, 0.9, &mut rng);
        let grid = make_grid(8, 1.2).unwrap();
        let out = upsample_magnitudes(&data[0].low, &mut g, &grid, "s", 48_000).unwrap();
        assert_eq!(out.len(), 320);
        assert!(out.magnitudes().iter().all(|v| *v > 0.0));
        let high = upsample(&data[0].low, &mut g).unwrap();
        assert_eq!(downsample(&high, 2).unwrap().width(), data[0].low.width());
        let wrong = dataset(1, 2, 8, 2, 7);
        assert!(upsample(&wrong[0].low, &mut g).is_err());
    }
}
