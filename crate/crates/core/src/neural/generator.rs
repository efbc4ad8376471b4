use rand_chacha::ChaCha8Rng;

use super::layers::{BatchNorm, DepthToSpace, Layer, PRelu, PanelConv, Softplus};
use super::param::Param;
use super::tensor::Act;

/// `x + BN(conv(PReLU(BN(conv(x)))))`.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub conv1: PanelConv,
    pub bn1: BatchNorm,
    pub act: PRelu,
    pub conv2: PanelConv,
    pub bn2: BatchNorm,
}

impl ResidualBlock {
    fn new(name: &str, hidden: usize, kernel: usize, momentum: f64, rng: &mut ChaCha8Rng) -> Self {
        Self {
            conv1: PanelConv::new(&format!("{name}.conv1"), hidden, hidden, kernel, 1, rng),
            bn1: BatchNorm::new(&format!("{name}.bn1"), hidden, momentum),
            act: PRelu::new(&format!("{name}.prelu")),
            conv2: PanelConv::new(&format!("{name}.conv2"), hidden, hidden, kernel, 1, rng),
            bn2: BatchNorm::new(&format!("{name}.bn2"), hidden, momentum),
        }
    }
}

impl Layer for ResidualBlock {
    fn forward(&mut self, x: &Act, train: bool) -> Act {
        let h = self.conv1.forward(x, train);
        let h = self.bn1.forward(&h, train);
        let h = self.act.forward(&h, train);
        let h = self.conv2.forward(&h, train);
        let mut y = self.bn2.forward(&h, train);
        y.data.iter_mut().zip(&x.data).for_each(|(a, b)| *a += b);
        y
    }

    fn backward(&mut self, grad: &Act) -> Act {
        let g = self.bn2.backward(grad);
        let g = self.conv2.backward(&g);
        let g = self.act.backward(&g);
        let g = self.bn1.backward(&g);
        let mut dx = self.conv1.backward(&g);
        dx.data.iter_mut().zip(&grad.data).for_each(|(a, b)| *a += b);
        dx
    }

    fn params(&mut self) -> Vec<&mut Param> {
        let mut p = self.conv1.params();
        p.extend(self.bn1.params());
        p.extend(self.act.params());
        p.extend(self.conv2.params());
        p.extend(self.bn2.params());
        p
    }
}

/// `PReLU(depth_to_space(conv(x)))`, doubling the panel width.
#[derive(Debug, Clone)]
pub struct UpsampleBlock {
    pub conv: PanelConv,
    pub shuffle: DepthToSpace,
    pub act: PRelu,
}

impl Layer for UpsampleBlock {
    fn forward(&mut self, x: &Act, train: bool) -> Act {
        let h = self.conv.forward(x, train);
        let h = self.shuffle.forward(&h, train);
        self.act.forward(&h, train)
    }

    fn backward(&mut self, grad: &Act) -> Act {
        let g = self.act.backward(grad);
        let g = self.shuffle.backward(&g);
        self.conv.backward(&g)
    }

    fn params(&mut self) -> Vec<&mut Param> {
        let mut p = self.conv.params();
        p.extend(self.act.params());
        p
    }
}

/// Maps a `C×5×(W/r)×(W/r)` spectral tensor to `C×5×W×W` with strictly
/// positive output.
#[derive(Debug, Clone)]
pub struct Generator {
    pub channels: usize,
    pub hidden: usize,
    pub factor: usize,
    pub conv_in: PanelConv,
    pub act_in: PRelu,
    pub blocks: Vec<ResidualBlock>,
    pub upsample: Vec<UpsampleBlock>,
    pub conv_out: PanelConv,
    pub out: Softplus,
}

impl Generator {
    /// `factor` must be a power of two; `log2(factor)` upsample blocks are
    /// built.
    pub fn new(
        channels: usize,
        hidden: usize,
        blocks: usize,
        factor: usize,
        kernel: usize,
        bn_momentum: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(factor.is_power_of_two(), "upsampling factor must be a power of two");
        let conv_in = PanelConv::new("g.conv_in", channels, hidden, kernel, 1, rng);
        let blocks = (0..blocks)
            .map(|b| ResidualBlock::new(&format!("g.res{b}"), hidden, kernel, bn_momentum, rng))
            .collect();
        let upsample = (0..factor.trailing_zeros())
            .map(|u| UpsampleBlock {
                conv: PanelConv::new(&format!("g.up{u}.conv"), hidden, 4 * hidden, kernel, 1, rng),
                shuffle: DepthToSpace,
                act: PRelu::new(&format!("g.up{u}.prelu")),
            })
            .collect();
        let conv_out = PanelConv::new("g.conv_out", hidden, channels, kernel, 1, rng);
        Self {
            channels,
            hidden,
            factor,
            conv_in,
            act_in: PRelu::new("g.prelu_in"),
            blocks,
            upsample,
            conv_out,
            out: Softplus::default(),
        }
    }
}

impl Layer for Generator {
    fn forward(&mut self, x: &Act, train: bool) -> Act {
        let mut h = self.conv_in.forward(x, train);
        h = self.act_in.forward(&h, train);
        for b in &mut self.blocks {
            h = b.forward(&h, train);
        }
        for u in &mut self.upsample {
            h = u.forward(&h, train);
        }
        h = self.conv_out.forward(&h, train);
        self.out.forward(&h, train)
    }

    fn backward(&mut self, grad: &Act) -> Act {
        let mut g = self.out.backward(grad);
        g = self.conv_out.backward(&g);
        for u in self.upsample.iter_mut().rev() {
            g = u.backward(&g);
        }
        for b in self.blocks.iter_mut().rev() {
            g = b.backward(&g);
        }
        g = self.act_in.backward(&g);
        self.conv_in.backward(&g)
    }

    fn params(&mut self) -> Vec<&mut Param> {
        let mut p = self.conv_in.params();
        p.extend(self.act_in.params());
        for b in &mut self.blocks {
            p.extend(b.params());
        }
        for u in &mut self.upsample {
            p.extend(u.params());
        }
        p.extend(self.conv_out.params());
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::layers::tests::{gradient_check, random_act};
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn output_shapes() {
        let mut g = Generator::new(6, 4, 1, 4, 3, 0.9, &mut rng(1));
        let y = g.forward(&random_act(2, 6, 2, 2), true);
        assert_eq!((y.n, y.c, y.width), (2, 6, 8));
        let mut same = Generator::new(4, 4, 1, 1, 3, 0.9, &mut rng(3));
        assert!(same.upsample.is_empty());
        let y = same.forward(&random_act(1, 4, 4, 4), false);
        assert_eq!((y.c, y.width), (4, 4));
    }

    #[test]
    fn full_size_shape_for_factor_four() {
        let mut g = Generator::new(256, 2, 0, 4, 3, 0.9, &mut rng(5));
        let y = g.forward(&Act::zeros(1, 256, 4), false);
        assert_eq!((y.c, y.width, y.data.len()), (256, 16, 256 * 5 * 16 * 16));
    }

    #[test]
    fn outputs_strictly_positive() {
        for seed in 0..5 {
            let mut g = Generator::new(2, 3, 1, 2, 3, 0.9, &mut rng(seed));
            for p in g.params() {
                p.value.iter_mut().for_each(|v| *v *= 40.0);
            }
            let mut x = random_act(2, 2, 2, seed + 10);
            x.data.iter_mut().for_each(|v| *v *= 50.0);
            let y = g.forward(&x, true);
            assert!(y.data.iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn zero_second_conv_gives_identity_plus_prelu_path() {
        let mut block = ResidualBlock::new("r", 3, 3, 0.9, &mut rng(6));
        block.conv2.weight_eq.value.iter_mut().for_each(|v| *v = 0.0);
        block.conv2.weight_top.value.iter_mut().for_each(|v| *v = 0.0);
        block.conv2.bias_top.value = block.conv2.bias_eq.value.clone();
        block.bn2.beta.value = vec![0.25, -0.5, 1.0];
        let x = random_act(2, 3, 2, 7);
        let y = block.forward(&x, true);
        // a constant branch normalises to zero, leaving the skip plus beta
        let cells = 20;
        for (k, (a, b)) in y.data.iter().zip(&x.data).enumerate() {
            let c = (k / cells) % 3;
            assert!((a - b - block.bn2.beta.value[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn generator_gradients() {
        let mut g = Generator::new(2, 2, 1, 2, 3, 0.9, &mut rng(8));
        let x = random_act(2, 2, 1, 9);
        assert!(gradient_check(&mut g, &x, 10) < 1e-4);
        let mut block = ResidualBlock::new("r", 2, 3, 0.9, &mut rng(11));
        assert!(gradient_check(&mut block, &random_act(2, 2, 2, 12), 13) < 1e-4);
    }
}
