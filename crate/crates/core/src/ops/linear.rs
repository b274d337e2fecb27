use super::gemm::{gemm, Layout};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Fully-connected layer `y = W·x + b`.
#[derive(Clone, PartialEq, Debug)]
pub struct LinearParams {
    /// `(out_features, in_features)` matrix.
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

impl LinearParams {
    pub fn new(weights: Tensor, bias: Vec<f64>) -> Result<Self> {
        let s = weights.shape();
        if s.h != 1 || s.w != 1 {
            return Err(Error::dim("linear", format!("weights must be a matrix, got {s}")));
        }
        if bias.len() != s.n {
            return Err(Error::dim(
                "linear",
                format!("bias has {} entries for {} outputs", bias.len(), s.n),
            ));
        }
        Ok(LinearParams { weights, bias })
    }

    pub fn zeros(in_features: usize, out_features: usize) -> Self {
        LinearParams {
            weights: Tensor::zeros(Shape::matrix(out_features, in_features)),
            bias: vec![0.0; out_features],
        }
    }

    pub fn in_features(&self) -> usize {
        self.weights.shape().c
    }

    pub fn out_features(&self) -> usize {
        self.weights.shape().n
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape().per_sample() != self.in_features() {
            return Err(Error::dim(
                "linear",
                format!(
                    "input has {} features per sample, layer expects {}",
                    x.shape().per_sample(),
                    self.in_features()
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, PartialEq, Debug)]
pub struct LinearGrads {
    pub weights: Tensor,
    pub bias: Vec<f64>,
    /// Shaped like the forward input (not flattened).
    pub input: Option<Tensor>,
}

/// Applies the layer per sample; `x` is flattened implicitly.
pub fn linear_forward(x: &Tensor, p: &LinearParams) -> Result<Tensor> {
    p.check_input(x)?;
    let (n, fin, fout) = (x.shape().n, p.in_features(), p.out_features());
    let mut y = Tensor::zeros(Shape::matrix(n, fout));
    for row in y.data_mut().chunks_exact_mut(fout) {
        row.copy_from_slice(&p.bias);
    }
    gemm(
        n,
        fin,
        fout,
        x.data(),
        Layout::row_major(fin),
        p.weights.data(),
        Layout::transposed(fin),
        1.0,
        y.data_mut(),
    );
    Ok(y)
}

pub fn linear_backward(x: &Tensor, p: &LinearParams, upstream: &Tensor) -> Result<LinearGrads> {
    linear_backward_with(x, p, upstream, true)
}

pub fn linear_backward_with(
    x: &Tensor,
    p: &LinearParams,
    upstream: &Tensor,
    want_input: bool,
) -> Result<LinearGrads> {
    p.check_input(x)?;
    let (n, fin, fout) = (x.shape().n, p.in_features(), p.out_features());
    upstream.expect_shape("linear_backward", Shape::matrix(n, fout))?;

    let mut dw = Tensor::zeros(p.weights.shape());
    gemm(
        fout,
        n,
        fin,
        upstream.data(),
        Layout::transposed(fout),
        x.data(),
        Layout::row_major(fin),
        0.0,
        dw.data_mut(),
    );
    let mut db = vec![0.0; fout];
    for row in upstream.data().chunks_exact(fout) {
        for (b, g) in db.iter_mut().zip(row) {
            *b += g;
        }
    }
    let dx = if want_input {
        let mut dx = Tensor::zeros(x.shape());
        gemm(
            n,
            fout,
            fin,
            upstream.data(),
            Layout::row_major(fout),
            p.weights.data(),
            Layout::row_major(fin),
            0.0,
            dx.data_mut(),
        );
        Some(dx)
    } else {
        None
    };
    Ok(LinearGrads {
        weights: dw,
        bias: db,
        input: dx,
    })
}
