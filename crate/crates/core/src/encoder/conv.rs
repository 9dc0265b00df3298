use rand::Rng;
use serde::{Deserialize, Serialize};

/// Valid (unpadded) 2-D convolution followed by a rectifier.
///
/// Weights are laid out `[out_channel][in_channel][row][col]`; activations
/// are `[channel][row][col]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn output_hw(in_h: usize, in_w: usize, kernel: usize, stride: usize) -> Option<(usize, usize)> {
        if kernel == 0 || stride == 0 || kernel > in_h || kernel > in_w {
            return None;
        }
        Some(((in_h - kernel) / stride + 1, (in_w - kernel) / stride + 1))
    }

    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        in_h: usize,
        in_w: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = (in_channels * kernel * kernel) as f64;
        let bound = 1.0 / fan_in.sqrt();
        let n_w = out_channels * in_channels * kernel * kernel;
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            in_h,
            in_w,
            weight: (0..n_w).map(|_| rng.random_range(-bound..bound)).collect(),
            bias: (0..out_channels).map(|_| rng.random_range(-bound..bound)).collect(),
        }
    }

    pub fn out_h(&self) -> usize {
        (self.in_h - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w - self.kernel) / self.stride + 1
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.in_h * self.in_w
    }

    pub fn output_len(&self) -> usize {
        self.out_channels * self.out_h() * self.out_w()
    }

    #[inline]
    fn w_idx(&self, o: usize, c: usize, i: usize, j: usize) -> usize {
        ((o * self.in_channels + c) * self.kernel + i) * self.kernel + j
    }

    /// Returns the rectified output.
    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let (oh, ow) = (self.out_h(), self.out_w());
        let mut out = vec![0.0; self.output_len()];
        for o in 0..self.out_channels {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = self.bias[o];
                    for c in 0..self.in_channels {
                        for i in 0..self.kernel {
                            let row = (c * self.in_h + y * self.stride + i) * self.in_w + x * self.stride;
                            for j in 0..self.kernel {
                                acc += self.weight[self.w_idx(o, c, i, j)] * input[row + j];
                            }
                        }
                    }
                    out[(o * oh + y) * ow + x] = acc.max(0.0);
                }
            }
        }
        out
    }

    /// Backward through rectifier and convolution. `output` is the rectified
    /// forward output. Accumulates into `grad_w`/`grad_b` and returns the
    /// input gradient.
    pub fn backward(
        &self,
        input: &[f64],
        output: &[f64],
        grad_out: &[f64],
        grad_w: &mut [f64],
        grad_b: &mut [f64],
    ) -> Vec<f64> {
        let (oh, ow) = (self.out_h(), self.out_w());
        let mut grad_in = vec![0.0; self.input_len()];
        for (o, gb) in grad_b.iter_mut().enumerate() {
            for y in 0..oh {
                for x in 0..ow {
                    let idx = (o * oh + y) * ow + x;
                    if output[idx] <= 0.0 {
                        continue;
                    }
                    let delta = grad_out[idx];
                    if delta == 0.0 {
                        continue;
                    }
                    *gb += delta;
                    for c in 0..self.in_channels {
                        for i in 0..self.kernel {
                            let row = (c * self.in_h + y * self.stride + i) * self.in_w + x * self.stride;
                            for j in 0..self.kernel {
                                let wi = self.w_idx(o, c, i, j);
                                grad_w[wi] += delta * input[row + j];
                                grad_in[row + j] += delta * self.weight[wi];
                            }
                        }
                    }
                }
            }
        }
        grad_in
    }
}
