use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A named parameter array with its gradient and Adam moments. Buffers that
/// are saved but never optimised (batch-norm running statistics) have
/// `trainable == false`.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub trainable: bool,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, value: Vec<f64>) -> Self {
        let len = shape.iter().product();
        assert_eq!(value.len(), len, "parameter size");
        Self {
            name: name.into(),
            shape,
            value,
            grad: vec![0.0; len],
            trainable: true,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn filled(name: impl Into<String>, shape: Vec<usize>, v: f64) -> Self {
        let len = shape.iter().product();
        Self::new(name, shape, vec![v; len])
    }

    pub fn buffer(name: impl Into<String>, shape: Vec<usize>, v: f64) -> Self {
        let mut p = Self::filled(name, shape, v);
        p.trainable = false;
        p
    }

    /// `U(−1/√fan_in, 1/√fan_in)`.
    pub fn uniform(name: impl Into<String>, shape: Vec<usize>, fan_in: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let len = shape.iter().product();
        let value = (0..len).map(|_| rng.random_range(-bound..bound)).collect();
        Self::new(name, shape, value)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut Param]) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for p in params.iter_mut().filter(|p| p.trainable) {
            for k in 0..p.value.len() {
                let g = p.grad[k];
                p.m[k] = self.beta1 * p.m[k] + (1.0 - self.beta1) * g;
                p.v[k] = self.beta2 * p.v[k] + (1.0 - self.beta2) * g * g;
                let mh = p.m[k] / c1;
                let vh = p.v[k] / c2;
                p.value[k] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}
