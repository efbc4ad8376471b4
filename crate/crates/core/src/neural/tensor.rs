use crate::projection::PANELS;

/// Batched activation. Panel-shaped values are laid out
/// `[n][c][panel][i][j]` with `width > 0`; flat feature vectors use
/// `width == 0` and layout `[n][c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Act {
    pub n: usize,
    pub c: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Act {
    pub fn zeros(n: usize, c: usize, width: usize) -> Self {
        let len = n * c * spatial(width);
        Self {
            n,
            c,
            width,
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(n: usize, c: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * c * spatial(width), "activation size");
        Self { n, c, width, data }
    }

    pub fn spatial(&self) -> usize {
        spatial(self.width)
    }

    /// Values per sample.
    pub fn sample_len(&self) -> usize {
        self.c * self.spatial()
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        let l = self.sample_len();
        &self.data[k * l..(k + 1) * l]
    }

    pub fn same_shape(&self, other: &Act) -> bool {
        self.n == other.n && self.c == other.c && self.width == other.width
    }

    /// Stacks single-sample panel tensors into a batch.
    pub fn stack<'a>(samples: impl IntoIterator<Item = (usize, usize, &'a [f64])>) -> Self {
        let mut n = 0;
        let mut shape = None;
        let mut data = Vec::new();
        for (c, w, values) in samples {
            match shape {
                None => shape = Some((c, w)),
                Some(s) => assert_eq!(s, (c, w), "inconsistent batch shapes"),
            }
            data.extend_from_slice(values);
            n += 1;
        }
        let (c, width) = shape.expect("non-empty batch");
        Self::from_vec(n, c, width, data)
    }
}

pub(crate) fn spatial(width: usize) -> usize {
    if width == 0 {
        1
    } else {
        PANELS * width * width
    }
}
