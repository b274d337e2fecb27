//! 2-D convolution (cross-correlation) lowered to GEMM through im2col.

use super::gemm::{gemm, Layout};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Filter bank of a convolution layer.
#[derive(Clone, PartialEq, Debug)]
pub struct ConvParams {
    /// `(out_channels, in_channels, kernel_h, kernel_w)`.
    pub weights: Tensor,
    pub bias: Vec<f64>,
    pub pad: usize,
    pub stride: usize,
}

impl ConvParams {
    pub fn new(weights: Tensor, bias: Vec<f64>, pad: usize, stride: usize) -> Result<Self> {
        let p = ConvParams {
            weights,
            bias,
            pad,
            stride,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(out_c: usize, in_c: usize, kh: usize, kw: usize, pad: usize, stride: usize) -> Self {
        ConvParams {
            weights: Tensor::zeros(Shape::new(out_c, in_c, kh, kw)),
            bias: vec![0.0; out_c],
            pad,
            stride,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape().n
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape().c
    }

    fn validate(&self) -> Result<()> {
        let s = self.weights.shape();
        if s.h == 0 || s.w == 0 {
            return Err(Error::invalid("convolution", format!("kernel {}x{} is empty", s.h, s.w)));
        }
        if self.stride == 0 {
            return Err(Error::invalid("convolution", "stride must be >= 1"));
        }
        if self.bias.len() != s.n {
            return Err(Error::dim(
                "conv2d",
                format!("bias has {} entries for {} filters", self.bias.len(), s.n),
            ));
        }
        Ok(())
    }

    /// Output shape for `input`, checking channel and spatial compatibility.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        self.validate()?;
        let k = self.weights.shape();
        if input.c != k.c {
            return Err(Error::dim(
                "conv2d",
                format!("input channels {} != filter in-channels {}", input.c, k.c),
            ));
        }
        let padded_h = input.h + 2 * self.pad;
        let padded_w = input.w + 2 * self.pad;
        if padded_h < k.h || padded_w < k.w {
            return Err(Error::dim(
                "conv2d",
                format!(
                    "kernel {}x{} larger than padded input {}x{} (height/width axes)",
                    k.h, k.w, padded_h, padded_w
                ),
            ));
        }
        if !(padded_h - k.h).is_multiple_of(self.stride) || !(padded_w - k.w).is_multiple_of(self.stride) {
            return Err(Error::dim(
                "conv2d",
                format!(
                    "stride {} does not tile padded input {}x{} with kernel {}x{}",
                    self.stride, padded_h, padded_w, k.h, k.w
                ),
            ));
        }
        Ok(Shape::new(
            input.n,
            k.n,
            (padded_h - k.h) / self.stride + 1,
            (padded_w - k.w) / self.stride + 1,
        ))
    }
}

/// Parameter (and optionally input) gradients of a convolution.
#[derive(Clone, PartialEq, Debug)]
pub struct ConvGrads {
    pub weights: Tensor,
    pub bias: Vec<f64>,
    pub input: Option<Tensor>,
}

struct Geometry {
    in_c: usize,
    in_h: usize,
    in_w: usize,
    kh: usize,
    kw: usize,
    out_h: usize,
    out_w: usize,
    pad: usize,
    stride: usize,
}

impl Geometry {
    fn new(input: Shape, out: Shape, p: &ConvParams) -> Self {
        let k = p.weights.shape();
        Geometry {
            in_c: input.c,
            in_h: input.h,
            in_w: input.w,
            kh: k.h,
            kw: k.w,
            out_h: out.h,
            out_w: out.w,
            pad: p.pad,
            stride: p.stride,
        }
    }

    fn col_rows(&self) -> usize {
        self.in_c * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Source pixel of output position `o` for kernel tap `k`, if inside the image.
    #[inline]
    fn source(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + k).checked_sub(self.pad)?;
        (pos < extent).then_some(pos)
    }

    /// Unrolls one sample into a `(C·KH·KW) × (OH·OW)` matrix.
    fn im2col(&self, sample: &[f64], cols: &mut [f64]) {
        let p = self.col_cols();
        for c in 0..self.in_c {
            let plane = &sample[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for s in 0..self.kh {
                for t in 0..self.kw {
                    let row = ((c * self.kh + s) * self.kw + t) * p;
                    for oy in 0..self.out_h {
                        let dst = &mut cols[row + oy * self.out_w..row + (oy + 1) * self.out_w];
                        match self.source(oy, s, self.in_h) {
                            None => dst.fill(0.0),
                            Some(y) => {
                                for (ox, d) in dst.iter_mut().enumerate() {
                                    *d = match self.source(ox, t, self.in_w) {
                                        Some(x) => plane[y * self.in_w + x],
                                        None => 0.0,
                                    };
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Geometry::im2col`]: scatters-and-adds columns into a sample.
    fn col2im(&self, cols: &[f64], sample: &mut [f64]) {
        sample.fill(0.0);
        let p = self.col_cols();
        for c in 0..self.in_c {
            let base = c * self.in_h * self.in_w;
            for s in 0..self.kh {
                for t in 0..self.kw {
                    let row = ((c * self.kh + s) * self.kw + t) * p;
                    for oy in 0..self.out_h {
                        let Some(y) = self.source(oy, s, self.in_h) else {
                            continue;
                        };
                        for ox in 0..self.out_w {
                            if let Some(x) = self.source(ox, t, self.in_w) {
                                sample[base + y * self.in_w + x] += cols[row + oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `out[n,k,p,q] = b[k] + Σ w[k,c,s,t] · in_padded[n,c,p·stride+s,q·stride+t]`.
pub fn conv2d_forward(input: &Tensor, p: &ConvParams) -> Result<Tensor> {
    let out_shape = p.output_shape(input.shape())?;
    let g = Geometry::new(input.shape(), out_shape, p);
    let (rows, cols_n) = (g.col_rows(), g.col_cols());
    let k = p.out_channels();
    let mut cols = vec![0.0; rows * cols_n];
    let mut out = Tensor::zeros(out_shape);
    for n in 0..input.shape().n {
        g.im2col(input.sample(n), &mut cols);
        let dst = out.sample_mut(n);
        for (kk, plane) in dst.chunks_exact_mut(cols_n).enumerate() {
            plane.fill(p.bias[kk]);
        }
        gemm(
            k,
            rows,
            cols_n,
            p.weights.data(),
            Layout::row_major(rows),
            &cols,
            Layout::row_major(cols_n),
            1.0,
            dst,
        );
    }
    Ok(out)
}

/// Exact adjoint of [`conv2d_forward`] for upstream gradient `upstream`.
pub fn conv2d_backward(input: &Tensor, p: &ConvParams, upstream: &Tensor) -> Result<ConvGrads> {
    conv2d_backward_with(input, p, upstream, true)
}

/// As [`conv2d_backward`], optionally skipping the input gradient.
pub fn conv2d_backward_with(
    input: &Tensor,
    p: &ConvParams,
    upstream: &Tensor,
    want_input: bool,
) -> Result<ConvGrads> {
    let out_shape = p.output_shape(input.shape())?;
    upstream.expect_shape("conv2d_backward", out_shape)?;
    let g = Geometry::new(input.shape(), out_shape, p);
    let (rows, cols_n) = (g.col_rows(), g.col_cols());
    let k = p.out_channels();

    let mut dw = Tensor::zeros(p.weights.shape());
    let mut db = vec![0.0; k];
    let mut dx = want_input.then(|| Tensor::zeros(input.shape()));
    let mut cols = vec![0.0; rows * cols_n];
    let mut dcols = vec![0.0; rows * cols_n];

    for n in 0..input.shape().n {
        let up = upstream.sample(n);
        for (kk, plane) in up.chunks_exact(cols_n).enumerate() {
            db[kk] += plane.iter().sum::<f64>();
        }
        g.im2col(input.sample(n), &mut cols);
        // dW += dOut_n · cols_nᵀ
        gemm(
            k,
            cols_n,
            rows,
            up,
            Layout::row_major(cols_n),
            &cols,
            Layout::transposed(cols_n),
            1.0,
            dw.data_mut(),
        );
        if let Some(dx) = dx.as_mut() {
            // dcols = Wᵀ · dOut_n
            gemm(
                rows,
                k,
                cols_n,
                p.weights.data(),
                Layout::transposed(rows),
                up,
                Layout::row_major(cols_n),
                0.0,
                &mut dcols,
            );
            g.col2im(&dcols, dx.sample_mut(n));
        }
    }
    Ok(ConvGrads {
        weights: dw,
        bias: db,
        input: dx,
    })
}
