//! Network layers with explicit forward caches and analytic backward passes.

use rand_chacha::ChaCha8Rng;

use super::param::Param;
use super::tensor::Act;
use crate::cubesphere::PadPlan;
use crate::projection::{PANELS, TOP_PANEL};

pub trait Layer {
    /// Forward pass; caches what `backward` needs.
    fn forward(&mut self, x: &Act, train: bool) -> Act;
    /// Accumulates parameter gradients and returns the input gradient for
    /// the most recent `forward`.
    fn backward(&mut self, grad: &Act) -> Act;
    fn params(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }
}

/// Convolution over the five panels with seam-aware padding. Panels 1–4
/// share one weight set; the top panel has its own. Each weight set is
/// applied as a single matrix product over gathered patches.
#[derive(Debug, Clone)]
pub struct PanelConv {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub weight_eq: Param,
    pub bias_eq: Param,
    pub weight_top: Param,
    pub bias_top: Param,
    /// Source cell for `[panel][tap][output cell]`.
    gather: Vec<usize>,
    gather_width: usize,
    cols: [Vec<f64>; 2],
    in_shape: (usize, usize),
}

/// Panel ranges sharing a weight set: equatorial, then top.
const GROUPS: [(usize, usize); 2] = [(0, TOP_PANEL - 1), (TOP_PANEL - 1, PANELS)];

/// `c ← a·b + beta·c` on strided row-major views.
#[allow(clippy::too_many_arguments)]
fn gemm(
    (m, k, n): (usize, usize, usize),
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |r: usize, cs: usize, rows: usize, colsn: usize| (rows - 1) * r + (colsn - 1) * cs;
    assert!(c.len() > last(rsc, csc, m, n), "gemm output bounds");
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    assert!(a.len() > last(rsa, csa, m, k), "gemm lhs bounds");
    assert!(b.len() > last(rsb, csb, k, n), "gemm rhs bounds");
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

impl PanelConv {
    pub fn new(name: &str, cin: usize, cout: usize, kernel: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(kernel % 2 == 1, "kernel must be odd");
        assert!(stride >= 1);
        let fan_in = cin * kernel * kernel;
        let shape = vec![cout, cin, kernel, kernel];
        Self {
            cin,
            cout,
            kernel,
            stride,
            weight_eq: Param::uniform(format!("{name}.weight_eq"), shape.clone(), fan_in, rng),
            bias_eq: Param::uniform(format!("{name}.bias_eq"), vec![cout], fan_in, rng),
            weight_top: Param::uniform(format!("{name}.weight_top"), shape, fan_in, rng),
            bias_top: Param::uniform(format!("{name}.bias_top"), vec![cout], fan_in, rng),
            gather: Vec::new(),
            gather_width: 0,
            cols: [Vec::new(), Vec::new()],
            in_shape: (0, 0),
        }
    }

    pub fn output_width(&self, width: usize) -> usize {
        width.div_ceil(self.stride)
    }

    fn build_gather(&mut self, width: usize) {
        if self.gather_width == width {
            return;
        }
        let (k, s) = (self.kernel, self.stride);
        let plan = PadPlan::new(width, k / 2).expect("padding no wider than the panel");
        let (wp, ow) = (plan.padded_width(), self.output_width(width));
        let oc = ow * ow;
        let src = plan.sources();
        let mut gather = vec![0; PANELS * k * k * oc];
        for p in 0..PANELS {
            for di in 0..k {
                for dj in 0..k {
                    let base = (p * k * k + di * k + dj) * oc;
                    for io in 0..ow {
                        for jo in 0..ow {
                            gather[base + io * ow + jo] = src[(p * wp + s * io + di) * wp + s * jo + dj];
                        }
                    }
                }
            }
        }
        self.gather = gather;
        self.gather_width = width;
    }

    fn group(&self, g: usize) -> (&Param, &Param) {
        if g == 0 {
            (&self.weight_eq, &self.bias_eq)
        } else {
            (&self.weight_top, &self.bias_top)
        }
    }
}

impl Layer for PanelConv {
    fn forward(&mut self, x: &Act, _train: bool) -> Act {
        assert_eq!(x.c, self.cin, "panel conv channel mismatch");
        assert!(x.width > 0, "panel conv needs panel-shaped input");
        let (n, w) = (x.n, x.width);
        self.build_gather(w);
        let kk = self.kernel * self.kernel;
        let ow = self.output_width(w);
        let (oc, cells, rows) = (ow * ow, PANELS * w * w, self.cin * kk);
        let mut out = Act::zeros(n, self.cout, ow);
        for (g, &(p0, p1)) in GROUPS.iter().enumerate() {
            let np = p1 - p0;
            let ncol = n * np * oc;
            let mut cols = vec![0.0; rows * ncol];
            for ci in 0..self.cin {
                for t in 0..kk {
                    let row = &mut cols[(ci * kk + t) * ncol..(ci * kk + t + 1) * ncol];
                    for nn in 0..n {
                        let xs = &x.data[(nn * self.cin + ci) * cells..(nn * self.cin + ci + 1) * cells];
                        for pi in 0..np {
                            let gat = &self.gather[((p0 + pi) * kk + t) * oc..][..oc];
                            let dst = &mut row[(nn * np + pi) * oc..][..oc];
                            for (d, &si) in dst.iter_mut().zip(gat) {
                                *d = xs[si];
                            }
                        }
                    }
                }
            }
            let (wt, b) = self.group(g);
            let mut y = vec![0.0; self.cout * ncol];
            gemm((self.cout, rows, ncol), &wt.value, (rows, 1), &cols, (ncol, 1), 0.0, &mut y, (ncol, 1));
            for co in 0..self.cout {
                for nn in 0..n {
                    for pi in 0..np {
                        let src = &y[co * ncol + (nn * np + pi) * oc..][..oc];
                        let dst = &mut out.data[((nn * self.cout + co) * PANELS + p0 + pi) * oc..][..oc];
                        for (d, v) in dst.iter_mut().zip(src) {
                            *d = v + b.value[co];
                        }
                    }
                }
            }
            self.cols[g] = cols;
        }
        self.in_shape = (n, w);
        out
    }

    fn backward(&mut self, grad: &Act) -> Act {
        let (n, w) = self.in_shape;
        let kk = self.kernel * self.kernel;
        let ow = self.output_width(w);
        assert_eq!((grad.n, grad.c, grad.width), (n, self.cout, ow), "panel conv grad shape");
        let (oc, cells, rows) = (ow * ow, PANELS * w * w, self.cin * kk);
        let mut dx = Act::zeros(n, self.cin, w);
        for (g, &(p0, p1)) in GROUPS.iter().enumerate() {
            let np = p1 - p0;
            let ncol = n * np * oc;
            let mut gm = vec![0.0; self.cout * ncol];
            for co in 0..self.cout {
                for nn in 0..n {
                    for pi in 0..np {
                        gm[co * ncol + (nn * np + pi) * oc..][..oc]
                            .copy_from_slice(&grad.data[((nn * self.cout + co) * PANELS + p0 + pi) * oc..][..oc]);
                    }
                }
            }
            let cols = &self.cols[g];
            let (weight, bias) = if g == 0 {
                (&mut self.weight_eq, &mut self.bias_eq)
            } else {
                (&mut self.weight_top, &mut self.bias_top)
            };
            for (co, gb) in bias.grad.iter_mut().enumerate() {
                *gb += gm[co * ncol..(co + 1) * ncol].iter().sum::<f64>();
            }
            gemm((self.cout, ncol, rows), &gm, (ncol, 1), cols, (1, ncol), 1.0, &mut weight.grad, (rows, 1));
            let mut dcols = vec![0.0; rows * ncol];
            gemm((rows, self.cout, ncol), &weight.value, (1, rows), &gm, (ncol, 1), 0.0, &mut dcols, (ncol, 1));
            for ci in 0..self.cin {
                for t in 0..kk {
                    let row = &dcols[(ci * kk + t) * ncol..(ci * kk + t + 1) * ncol];
                    for nn in 0..n {
                        let xs = &mut dx.data[(nn * self.cin + ci) * cells..(nn * self.cin + ci + 1) * cells];
                        for pi in 0..np {
                            let gat = &self.gather[((p0 + pi) * kk + t) * oc..][..oc];
                            for (v, &si) in row[(nn * np + pi) * oc..][..oc].iter().zip(gat) {
                                xs[si] += v;
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    fn params(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight_eq, &mut self.bias_eq, &mut self.weight_top, &mut self.bias_top]
    }
}

/// Per-channel batch normalisation over batch and all spatial cells.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    pub momentum: f64,
    pub eps: f64,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    trained: bool,
}

impl BatchNorm {
    pub fn new(name: &str, channels: usize, momentum: f64) -> Self {
        Self {
            gamma: Param::filled(format!("{name}.gamma"), vec![channels], 1.0),
            beta: Param::filled(format!("{name}.beta"), vec![channels], 0.0),
            running_mean: Param::buffer(format!("{name}.running_mean"), vec![channels], 0.0),
            running_var: Param::buffer(format!("{name}.running_var"), vec![channels], 1.0),
            momentum,
            eps: 1e-5,
            xhat: Vec::new(),
            inv_std: Vec::new(),
            trained: false,
        }
    }
}

impl Layer for BatchNorm {
    fn forward(&mut self, x: &Act, train: bool) -> Act {
        let (n, c, sp) = (x.n, x.c, x.spatial());
        assert_eq!(c, self.gamma.len(), "batch norm channel mismatch");
        let count = (n * sp) as f64;
        let mut out = x.clone();
        self.xhat = vec![0.0; x.data.len()];
        self.inv_std = vec![0.0; c];
        self.trained = train;
        for ch in 0..c {
            let (mean, var) = if train {
                let mut sum = 0.0;
                for nn in 0..n {
                    let b = (nn * c + ch) * sp;
                    sum += x.data[b..b + sp].iter().sum::<f64>();
                }
                let mean = sum / count;
                let mut sq = 0.0;
                for nn in 0..n {
                    let b = (nn * c + ch) * sp;
                    sq += x.data[b..b + sp].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
                }
                let var = sq / count;
                let m = self.momentum;
                self.running_mean.value[ch] = m * self.running_mean.value[ch] + (1.0 - m) * mean;
                self.running_var.value[ch] = m * self.running_var.value[ch] + (1.0 - m) * var;
                (mean, var)
            } else {
                (self.running_mean.value[ch], self.running_var.value[ch])
            };
            let inv = 1.0 / (var + self.eps).sqrt();
            self.inv_std[ch] = inv;
            let (g, b) = (self.gamma.value[ch], self.beta.value[ch]);
            for nn in 0..n {
                let base = (nn * c + ch) * sp;
                for k in base..base + sp {
                    let xh = (x.data[k] - mean) * inv;
                    self.xhat[k] = xh;
                    out.data[k] = g * xh + b;
                }
            }
        }
        out
    }

    fn backward(&mut self, grad: &Act) -> Act {
        let (n, c, sp) = (grad.n, grad.c, grad.spatial());
        let count = (n * sp) as f64;
        let mut dx = grad.clone();
        for ch in 0..c {
            let (mut sg, mut sgx) = (0.0, 0.0);
            for nn in 0..n {
                let base = (nn * c + ch) * sp;
                for k in base..base + sp {
                    sg += grad.data[k];
                    sgx += grad.data[k] * self.xhat[k];
                }
            }
            self.beta.grad[ch] += sg;
            self.gamma.grad[ch] += sgx;
            let scale = self.gamma.value[ch] * self.inv_std[ch];
            for nn in 0..n {
                let base = (nn * c + ch) * sp;
                for k in base..base + sp {
                    dx.data[k] = if self.trained {
                        scale * (grad.data[k] - sg / count - self.xhat[k] * sgx / count)
                    } else {
                        scale * grad.data[k]
                    };
                }
            }
        }
        dx
    }

    fn params(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta, &mut self.running_mean, &mut self.running_var]
    }
}

/// `max(a·x, x)` with a single learned slope.
#[derive(Debug, Clone)]
pub struct PRelu {
    pub slope: Param,
    input: Vec<f64>,
}

impl PRelu {
    pub fn new(name: &str) -> Self {
        Self {
            slope: Param::filled(format!("{name}.slope"), vec![1], 0.25),
            input: Vec::new(),
        }
    }
}

impl Layer for PRelu {
    fn forward(&mut self, x: &Act, _train: bool) -> Act {
        self.input = x.data.clone();
        let a = self.slope.value[0];
        let mut out = x.clone();
        out.data.iter_mut().for_each(|v| *v = leaky(*v, a));
        out
    }

    fn backward(&mut self, grad: &Act) -> Act {
        let a = self.slope.value[0];
        let mut dx = grad.clone();
        let mut ga = 0.0;
        for ((d, g), x) in dx.data.iter_mut().zip(&grad.data).zip(&self.input) {
            if *x <= 0.0 {
                ga += g * x;
                *d = a * g;
            }
        }
        self.slope.grad[0] += ga;
        dx
    }

    fn params(&mut self) -> Vec<&mut Param> {
        vec![&mut self.slope]
    }
}

pub fn leaky(x: f64, a: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        a * x
    }
}

/// `max(a·x, x)` with a fixed slope.
#[derive(Debug, Clone)]
pub struct LeakyRelu {
    pub slope: f64,
    input: Vec<f64>,
}

impl LeakyRelu {
    pub fn new(slope: f64) -> Self {
        Self {
            slope,
            input: Vec::new(),
        }
    }
}

impl Layer for LeakyRelu {
    fn forward(&mut self, x: &Act, _train: bool) -> Act {
        self.input = x.data.clone();
        let mut out = x.clone();
        out.data.iter_mut().for_each(|v| *v = leaky(*v, self.slope));
        out
    }

    fn backward(&mut self, grad: &Act) -> Act {
        let mut dx = grad.clone();
        for (d, x) in dx.data.iter_mut().zip(&self.input) {
            if *x <= 0.0 {
                *d *= self.slope;
            }
        }
        dx
    }
}

/// `ln(1 + eˣ)`, kept at or above the smallest normal `f64` so that the
/// output stays strictly positive where `eˣ` underflows.
pub fn softplus(x: f64) -> f64 {
    (x.max(0.0) + (-x.abs()).exp().ln_1p()).max(f64::MIN_POSITIVE)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Softplus {
    input: Vec<f64>,
}

impl Layer for Softplus {
    fn forward(&mut self, x: &Act, _train: bool) -> Act {
        self.input = x.data.clone();
        let mut out = x.clone();
        out.data.iter_mut().for_each(|v| *v = softplus(*v));
        out
    }

    fn backward(&mut self, grad: &Act) -> Act {
        let mut dx = grad.clone();
        for (d, x) in dx.data.iter_mut().zip(&self.input) {
            *d *= sigmoid(*x);
        }
        dx
    }
}

/// Rearranges `4C` channels into `C` channels at twice the width, channel
/// `4c + 2a + b` landing at offset `(a, b)` of each 2×2 block.
#[derive(Debug, Clone, Default)]
pub struct DepthToSpace;

impl Layer for DepthToSpace {
    fn forward(&mut self, x: &Act, _train: bool) -> Act {
        assert!(x.c.is_multiple_of(4) && x.width > 0, "depth-to-space shape");
        let (n, c, w) = (x.n, x.c / 4, x.width);
        let w2 = 2 * w;
        let mut out = Act::zeros(n, c, w2);
        for nn in 0..n {
            for ch in 0..c {
                for panel in 0..PANELS {
                    for a in 0..2 {
                        for b in 0..2 {
                            let src = ((nn * 4 * c + 4 * ch + 2 * a + b) * PANELS + panel) * w * w;
                            let dst = ((nn * c + ch) * PANELS + panel) * w2 * w2;
                            for i in 0..w {
                                for j in 0..w {
                                    out.data[dst + (2 * i + a) * w2 + 2 * j + b] = x.data[src + i * w + j];
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn backward(&mut self, grad: &Act) -> Act {
        let (n, c, w2) = (grad.n, grad.c, grad.width);
        let w = w2 / 2;
        let mut dx = Act::zeros(n, 4 * c, w);
        for nn in 0..n {
            for ch in 0..c {
                for panel in 0..PANELS {
                    for a in 0..2 {
                        for b in 0..2 {
                            let dst = ((nn * 4 * c + 4 * ch + 2 * a + b) * PANELS + panel) * w * w;
                            let src = ((nn * c + ch) * PANELS + panel) * w2 * w2;
                            for i in 0..w {
                                for j in 0..w {
                                    dx.data[dst + i * w + j] = grad.data[src + (2 * i + a) * w2 + 2 * j + b];
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

/// Fully connected layer over the flattened sample.
#[derive(Debug, Clone)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Param,
    pub bias: Param,
    input: Act,
}

impl Dense {
    pub fn new(name: &str, inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            inputs,
            outputs,
            weight: Param::uniform(format!("{name}.weight"), vec![outputs, inputs], inputs, rng),
            bias: Param::uniform(format!("{name}.bias"), vec![outputs], inputs, rng),
            input: Act::zeros(0, 0, 0),
        }
    }
}

impl Layer for Dense {
    fn forward(&mut self, x: &Act, _train: bool) -> Act {
        assert_eq!(x.sample_len(), self.inputs, "dense input size");
        let mut out = Act::zeros(x.n, self.outputs, 0);
        for nn in 0..x.n {
            let xs = x.sample(nn);
            for o in 0..self.outputs {
                let row = &self.weight.value[o * self.inputs..(o + 1) * self.inputs];
                out.data[nn * self.outputs + o] =
                    self.bias.value[o] + row.iter().zip(xs).map(|(w, v)| w * v).sum::<f64>();
            }
        }
        self.input = x.clone();
        out
    }

    fn backward(&mut self, grad: &Act) -> Act {
        let x = &self.input;
        let mut dx = Act::zeros(x.n, x.c, x.width);
        for nn in 0..x.n {
            let xs = &x.data[nn * self.inputs..(nn + 1) * self.inputs];
            let dxs = &mut dx.data[nn * self.inputs..(nn + 1) * self.inputs];
            for o in 0..self.outputs {
                let g = grad.data[nn * self.outputs + o];
                self.bias.grad[o] += g;
                let row = o * self.inputs..(o + 1) * self.inputs;
                for ((gw, w), (xv, d)) in self.weight.grad[row.clone()]
                    .iter_mut()
                    .zip(&self.weight.value[row])
                    .zip(xs.iter().zip(dxs.iter_mut()))
                {
                    *gw += g * xv;
                    *d += g * w;
                }
            }
        }
        dx
    }

    fn params(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    pub(crate) fn random_act(n: usize, c: usize, w: usize, seed: u64) -> Act {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = n * c * super::super::tensor::spatial(w);
        Act::from_vec(n, c, w, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    fn dot(a: &Act, b: &[f64]) -> f64 {
        a.data.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    /// Largest relative error between analytic and central-difference
    /// gradients of `Σ g·layer(x)` over every input and parameter entry.
    pub(crate) fn gradient_check<L: Layer>(layer: &mut L, x: &Act, seed: u64) -> f64 {
        let h = 1e-5;
        let y = layer.forward(x, true);
        let g = random_act(y.n, y.c, y.width, seed).data;
        for p in layer.params() {
            p.zero_grad();
        }
        let dx = layer.backward(&Act::from_vec(y.n, y.c, y.width, g.clone()));
        let mut worst: f64 = 0.0;
        for k in 0..x.data.len() {
            let mut xp = x.clone();
            xp.data[k] += h;
            let fp = dot(&layer.forward(&xp, true), &g);
            xp.data[k] -= 2.0 * h;
            let fm = dot(&layer.forward(&xp, true), &g);
            worst = worst.max(rel(dx.data[k], (fp - fm) / (2.0 * h)));
        }
        let counts: Vec<(usize, bool)> = layer.params().iter().map(|p| (p.len(), p.trainable)).collect();
        for (pi, (len, trainable)) in counts.into_iter().enumerate() {
            if !trainable {
                continue;
            }
            for k in 0..len {
                let analytic = layer.params()[pi].grad[k];
                let orig = layer.params()[pi].value[k];
                layer.params()[pi].value[k] = orig + h;
                let fp = dot(&layer.forward(x, true), &g);
                layer.params()[pi].value[k] = orig - h;
                let fm = dot(&layer.forward(x, true), &g);
                layer.params()[pi].value[k] = orig;
                worst = worst.max(rel(analytic, (fp - fm) / (2.0 * h)));
            }
        }
        worst
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn conv_gradients() {
        let x = random_act(2, 2, 4, 1);
        let mut conv = PanelConv::new("c", 2, 3, 3, 1, &mut rng(2));
        assert!(gradient_check(&mut conv, &x, 3) < 1e-4);
        let mut strided = PanelConv::new("s", 2, 2, 3, 2, &mut rng(4));
        assert!(gradient_check(&mut strided, &x, 5) < 1e-4);
        let tiny = random_act(2, 2, 1, 6);
        let mut c1 = PanelConv::new("t", 2, 2, 3, 1, &mut rng(7));
        assert!(gradient_check(&mut c1, &tiny, 8) < 1e-4);
    }

    #[test]
    fn batchnorm_gradients() {
        let x = random_act(3, 2, 2, 10);
        let mut bn = BatchNorm::new("bn", 2, 0.9);
        bn.gamma.value = vec![1.3, 0.7];
        bn.beta.value = vec![0.1, -0.2];
        assert!(gradient_check(&mut bn, &x, 11) < 1e-4);
    }

    #[test]
    fn elementwise_gradients() {
        let x = random_act(2, 3, 2, 12);
        assert!(gradient_check(&mut PRelu::new("p"), &x, 13) < 1e-4);
        assert!(gradient_check(&mut LeakyRelu::new(0.2), &x, 14) < 1e-4);
        assert!(gradient_check(&mut Softplus::default(), &x, 15) < 1e-4);
        let x4 = random_act(2, 8, 2, 16);
        assert!(gradient_check(&mut DepthToSpace, &x4, 17) < 1e-4);
        let mut dense = Dense::new("d", 3 * 20, 4, &mut rng(18));
        assert!(gradient_check(&mut dense, &x, 19) < 1e-4);
    }

    #[test]
    fn identity_kernel() {
        let x = random_act(1, 2, 4, 20);
        let mut conv = PanelConv::new("id", 2, 2, 1, 1, &mut rng(0));
        for w in [&mut conv.weight_eq, &mut conv.weight_top] {
            w.value = vec![1.0, 0.0, 0.0, 1.0];
        }
        conv.bias_eq.value = vec![0.0; 2];
        conv.bias_top.value = vec![0.0; 2];
        assert_eq!(conv.forward(&x, false), x);
    }

    #[test]
    fn ones_kernel_sees_seam_values() {
        let x = Act::from_vec(1, 1, 4, vec![1.0; 80]);
        let mut conv = PanelConv::new("o", 1, 1, 3, 1, &mut rng(0));
        conv.weight_eq.value = vec![1.0; 9];
        conv.weight_top.value = vec![1.0; 9];
        conv.bias_eq.value = vec![0.5];
        conv.bias_top.value = vec![0.5];
        let y = conv.forward(&x, false);
        assert!(y.data.iter().all(|v| *v == 9.5));
    }

    #[test]
    fn top_panel_uses_its_own_weights() {
        let x = random_act(1, 1, 4, 21);
        let mut conv = PanelConv::new("m", 1, 1, 3, 1, &mut rng(22));
        let before = conv.forward(&x, false);
        conv.weight_top.value = vec![0.0; 9];
        conv.bias_top.value = vec![0.0];
        let after = conv.forward(&x, false);
        assert!(after.data[64..80].iter().all(|v| *v == 0.0));
        assert_eq!(before.data[..64], after.data[..64]);
    }

    #[test]
    fn conv_gradient_sum_rules() {
        let x = random_act(2, 1, 4, 23);
        let mut conv = PanelConv::new("g", 1, 2, 3, 1, &mut rng(24));
        let y = conv.forward(&x, true);
        let dx = conv.backward(&Act::zeros(y.n, y.c, y.width));
        assert!(dx.data.iter().all(|v| *v == 0.0));
        assert!(conv.weight_eq.grad.iter().all(|v| *v == 0.0));
        conv.forward(&x, true);
        conv.backward(&Act::from_vec(y.n, y.c, y.width, vec![1.0; y.data.len()]));
        // two samples, 16 cells per panel: 4 equatorial panels vs 1 top
        assert_eq!(conv.bias_eq.grad, vec![2.0 * 64.0; 2]);
        assert_eq!(conv.bias_top.grad, vec![2.0 * 16.0; 2]);
    }

    #[test]
    fn strided_output_width() {
        let conv = PanelConv::new("s", 1, 1, 3, 2, &mut rng(0));
        assert_eq!(conv.output_width(8), 4);
        assert_eq!(conv.output_width(1), 1);
        assert_eq!(conv.output_width(3), 2);
    }

    #[test]
    fn activations_match_definitions() {
        assert_eq!(leaky(-1.0, 0.2), -0.2);
        assert_eq!(leaky(2.0, 0.2), 2.0);
        let x = random_act(1, 2, 2, 25);
        let mut p = PRelu::new("p");
        p.slope.value[0] = 0.2;
        assert_eq!(p.forward(&x, false), LeakyRelu::new(0.2).forward(&x, false));
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!(softplus(-800.0) > 0.0 && softplus(800.0) == 800.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn depth_to_space_layout() {
        let x = Act::from_vec(1, 4, 1, (0..20).map(|v| v as f64).collect());
        let y = DepthToSpace.forward(&x, false);
        assert_eq!(y.width, 2);
        // panel 0: channels 0..4 contribute values 0, 5, 10, 15
        assert_eq!(&y.data[0..4], &[0.0, 5.0, 10.0, 15.0]);
    }

    #[test]
    fn batchnorm_inference_uses_running_stats() {
        let x = random_act(4, 1, 2, 26);
        let mut bn = BatchNorm::new("bn", 1, 0.9);
        for _ in 0..200 {
            bn.forward(&x, true);
        }
        let train = bn.forward(&x, true);
        let eval = bn.forward(&x, false);
        for (a, b) in train.data.iter().zip(&eval.data) {
            assert!((a - b).abs() < 1e-3);
        }
    }
}
