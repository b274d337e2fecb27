use crate::error::Result;
use crate::tensor::Tensor;

pub fn relu_forward(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Passes `upstream` where `x > 0`; the subgradient at exactly 0 is 0.
pub fn relu_backward(x: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    upstream.expect_shape("relu_backward", x.shape())?;
    let data = x
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn forward_and_backward_on_kink() {
        let x = Tensor::matrix(1, 3, vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);
        let up = Tensor::matrix(1, 3, vec![5.0; 3]).unwrap();
        assert_eq!(relu_backward(&x, &up).unwrap().data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn backward_rejects_shape_mismatch() {
        let x = Tensor::zeros(Shape::matrix(1, 3));
        assert!(relu_backward(&x, &Tensor::zeros(Shape::matrix(3, 1))).is_err());
    }
}
