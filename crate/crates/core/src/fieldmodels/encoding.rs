use crate::diffcore::{Real, Tensor};

/// Sinusoidal lifting of coordinates with `levels` octaves per component.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PositionalEncoder {
    pub levels: usize,
    pub in_dim: usize,
}

impl PositionalEncoder {
    pub fn new(levels: usize, in_dim: usize) -> Self {
        Self { levels, in_dim }
    }

    pub fn out_dim(&self) -> usize {
        self.in_dim * 2 * self.levels
    }

    /// Per component `x`: `[sin(2⁰πx), cos(2⁰πx), …, sin(2^(L-1)πx), cos(2^(L-1)πx)]`,
    /// components concatenated in column order. Raw coordinates are not kept.
    pub fn encode<T: Real>(&self, coords: &Tensor<T>) -> Tensor<T> {
        let n = coords.rows();
        let mut out = Vec::with_capacity(n * self.out_dim());
        for r in 0..n {
            for &x in coords.row(r) {
                let x = x.as_f64();
                let mut freq = std::f64::consts::PI;
                for _ in 0..self.levels {
                    let (s, c) = (freq * x).sin_cos();
                    out.push(T::lit(s));
                    out.push(T::lit(c));
                    freq *= 2.0;
                }
            }
        }
        Tensor::matrix(n, self.out_dim(), out).expect("encoder output shape")
    }
}

/// Convenience wrapper over [`PositionalEncoder::encode`].
pub fn encode_pe<T: Real>(coords: &Tensor<T>, levels: usize) -> Tensor<T> {
    PositionalEncoder::new(levels, coords.cols()).encode(coords)
}
