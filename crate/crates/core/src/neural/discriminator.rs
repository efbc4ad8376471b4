use rand_chacha::ChaCha8Rng;

use super::layers::{sigmoid, BatchNorm, Dense, Layer, LeakyRelu, PanelConv};
use super::param::Param;
use super::tensor::Act;

#[derive(Debug, Clone)]
struct ConvUnit {
    conv: PanelConv,
    bn: Option<BatchNorm>,
    act: LeakyRelu,
}

/// Eight panel convolutions, two dense layers, one logit per sample.
/// `forward` returns logits; [`Discriminator::probability`] applies the
/// sigmoid.
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub width: usize,
    units: Vec<ConvUnit>,
    dense1: Dense,
    act: LeakyRelu,
    dense2: Dense,
}

impl Discriminator {
    /// Channels run `h/8, h/8, h/4, h/4, h/2, h/2, h, h` (at least 1);
    /// every second layer has stride 2.
    pub fn new(
        channels: usize,
        width: usize,
        hidden: usize,
        kernel: usize,
        slope: f64,
        bn_momentum: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let widths = [8, 8, 4, 4, 2, 2, 1, 1].map(|d| (hidden / d).max(1));
        let mut units = Vec::with_capacity(8);
        let mut cin = channels;
        let mut w = width;
        for (l, &cout) in widths.iter().enumerate() {
            let stride = if l % 2 == 1 { 2 } else { 1 };
            let conv = PanelConv::new(&format!("d.conv{l}"), cin, cout, kernel, stride, rng);
            w = conv.output_width(w);
            let bn = (l > 0).then(|| BatchNorm::new(&format!("d.bn{l}"), cout, bn_momentum));
            units.push(ConvUnit {
                conv,
                bn,
                act: LeakyRelu::new(slope),
            });
            cin = cout;
        }
        let flat = cin * 5 * w * w;
        let dense_width = 2 * hidden.max(1);
        Self {
            width,
            units,
            dense1: Dense::new("d.dense1", flat, dense_width, rng),
            act: LeakyRelu::new(slope),
            dense2: Dense::new("d.dense2", dense_width, 1, rng),
        }
    }

    pub fn probability(&mut self, x: &Act, train: bool) -> Vec<f64> {
        self.forward(x, train).data.iter().map(|&z| sigmoid(z)).collect()
    }
}

impl Layer for Discriminator {
    fn forward(&mut self, x: &Act, train: bool) -> Act {
        assert_eq!(x.width, self.width, "discriminator input width");
        let mut h = x.clone();
        for u in &mut self.units {
            h = u.conv.forward(&h, train);
            if let Some(bn) = &mut u.bn {
                h = bn.forward(&h, train);
            }
            h = u.act.forward(&h, train);
        }
        h = self.dense1.forward(&h, train);
        h = self.act.forward(&h, train);
        self.dense2.forward(&h, train)
    }

    fn backward(&mut self, grad: &Act) -> Act {
        let mut g = self.dense2.backward(grad);
        g = self.act.backward(&g);
        g = self.dense1.backward(&g);
        for u in self.units.iter_mut().rev() {
            g = u.act.backward(&g);
            if let Some(bn) = &mut u.bn {
                g = bn.backward(&g);
            }
            g = u.conv.backward(&g);
        }
        g
    }

    fn params(&mut self) -> Vec<&mut Param> {
        let mut p = Vec::new();
        for u in &mut self.units {
            p.extend(u.conv.params());
            if let Some(bn) = &mut u.bn {
                p.extend(bn.params());
            }
        }
        p.extend(self.dense1.params());
        p.extend(self.dense2.params());
        p
    }
}
