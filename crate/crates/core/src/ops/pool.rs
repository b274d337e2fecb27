//! 2×2 non-overlapping max pooling.

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Argmax bookkeeping from a pooling forward pass.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PoolIndices {
    pub input_shape: Shape,
    /// Flat input index of the winning element, one per output cell.
    pub argmax: Vec<usize>,
}

/// Window maximum; ties go to the first element in row-major window order.
pub fn maxpool2_forward(x: &Tensor) -> Result<(Tensor, PoolIndices)> {
    let s = x.shape();
    if !s.h.is_multiple_of(2) || !s.w.is_multiple_of(2) {
        return Err(Error::dim(
            "maxpool2",
            format!("height {} and width {} must both be even", s.h, s.w),
        ));
    }
    let out_shape = Shape::new(s.n, s.c, s.h / 2, s.w / 2);
    let mut out = Vec::with_capacity(out_shape.len());
    let mut argmax = Vec::with_capacity(out_shape.len());
    let data = x.data();
    for plane in 0..s.n * s.c {
        let base = plane * s.plane();
        for oy in 0..out_shape.h {
            for ox in 0..out_shape.w {
                let top = base + 2 * oy * s.w + 2 * ox;
                let window = [top, top + 1, top + s.w, top + s.w + 1];
                let mut best = window[0];
                for &i in &window[1..] {
                    if data[i] > data[best] {
                        best = i;
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
    }
    Ok((
        Tensor::from_vec(out_shape, out)?,
        PoolIndices {
            input_shape: s,
            argmax,
        },
    ))
}

/// Routes each upstream value to its window's argmax; zero elsewhere.
pub fn maxpool2_backward(indices: &PoolIndices, upstream: &Tensor) -> Result<Tensor> {
    let s = indices.input_shape;
    upstream.expect_shape("maxpool2_backward", Shape::new(s.n, s.c, s.h / 2, s.w / 2))?;
    let mut dx = Tensor::zeros(s);
    let d = dx.data_mut();
    for (&i, &g) in indices.argmax.iter().zip(upstream.data()) {
        d[i] += g;
    }
    Ok(dx)
}
