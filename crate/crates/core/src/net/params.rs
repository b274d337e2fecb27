use crate::error::{Error, Result};
use crate::ops::{sgd_update, ConvParams, LinearParams};
use crate::sampler::Rng;
use crate::tensor::{Shape, Tensor};

pub const IMAGE_CHANNELS: usize = 3;
pub const IMAGE_SIZE: usize = 32;
pub const NUM_CLASSES: usize = 10;
pub const CONV1_CHANNELS: usize = 32;
pub const CONV2_CHANNELS: usize = 64;
pub const KERNEL: usize = 3;
pub const HIDDEN_UNITS: usize = 512;
/// Flattened size after the second pool: 64 × 8 × 8.
pub const FLAT_FEATURES: usize = CONV2_CHANNELS * (IMAGE_SIZE / 4) * (IMAGE_SIZE / 4);

/// Shape of one input batch of `n` images.
pub const fn image_shape(n: usize) -> Shape {
    Shape::new(n, IMAGE_CHANNELS, IMAGE_SIZE, IMAGE_SIZE)
}

/// Learnable parameters of the reference CNN:
/// conv(3→32) → pool → conv(32→64) → pool → fc(4096→512) → fc(512→10).
#[derive(Clone, PartialEq, Debug)]
pub struct ModelParams {
    pub conv1: ConvParams,
    pub conv2: ConvParams,
    pub fc1: LinearParams,
    pub fc2: LinearParams,
}

/// Names and dimensions of every parameter array, in checkpoint order.
pub fn param_layout() -> [(&'static str, Vec<usize>); 8] {
    [
        ("conv1.weight", vec![CONV1_CHANNELS, IMAGE_CHANNELS, KERNEL, KERNEL]),
        ("conv1.bias", vec![CONV1_CHANNELS]),
        ("conv2.weight", vec![CONV2_CHANNELS, CONV1_CHANNELS, KERNEL, KERNEL]),
        ("conv2.bias", vec![CONV2_CHANNELS]),
        ("fc1.weight", vec![HIDDEN_UNITS, FLAT_FEATURES]),
        ("fc1.bias", vec![HIDDEN_UNITS]),
        ("fc2.weight", vec![NUM_CLASSES, HIDDEN_UNITS]),
        ("fc2.bias", vec![NUM_CLASSES]),
    ]
}

impl ModelParams {
    pub fn zeros() -> Self {
        ModelParams {
            conv1: ConvParams::zeros(CONV1_CHANNELS, IMAGE_CHANNELS, KERNEL, KERNEL, 1, 1),
            conv2: ConvParams::zeros(CONV2_CHANNELS, CONV1_CHANNELS, KERNEL, KERNEL, 1, 1),
            fc1: LinearParams::zeros(FLAT_FEATURES, HIDDEN_UNITS),
            fc2: LinearParams::zeros(HIDDEN_UNITS, NUM_CLASSES),
        }
    }

    /// He-normal weights (`std = sqrt(2 / fan_in)`) and zero biases.
    pub fn init(rng: &mut Rng) -> Self {
        let mut m = ModelParams::zeros();
        let conv_std = |p: &ConvParams| {
            let s = p.weights.shape();
            (2.0 / (s.c * s.h * s.w) as f64).sqrt()
        };
        let fc_std = |p: &LinearParams| (2.0 / p.in_features() as f64).sqrt();

        let std = conv_std(&m.conv1);
        rng.fill_normal(m.conv1.weights.data_mut(), std);
        let std = conv_std(&m.conv2);
        rng.fill_normal(m.conv2.weights.data_mut(), std);
        let std = fc_std(&m.fc1);
        rng.fill_normal(m.fc1.weights.data_mut(), std);
        let std = fc_std(&m.fc2);
        rng.fill_normal(m.fc2.weights.data_mut(), std);
        m
    }

    /// Parameter arrays paired with their names, in checkpoint order.
    pub fn arrays(&self) -> [(&'static str, &[f64]); 8] {
        [
            ("conv1.weight", self.conv1.weights.data()),
            ("conv1.bias", &self.conv1.bias),
            ("conv2.weight", self.conv2.weights.data()),
            ("conv2.bias", &self.conv2.bias),
            ("fc1.weight", self.fc1.weights.data()),
            ("fc1.bias", &self.fc1.bias),
            ("fc2.weight", self.fc2.weights.data()),
            ("fc2.bias", &self.fc2.bias),
        ]
    }

    pub fn arrays_mut(&mut self) -> [(&'static str, &mut [f64]); 8] {
        [
            ("conv1.weight", self.conv1.weights.data_mut()),
            ("conv1.bias", &mut self.conv1.bias),
            ("conv2.weight", self.conv2.weights.data_mut()),
            ("conv2.bias", &mut self.conv2.bias),
            ("fc1.weight", self.fc1.weights.data_mut()),
            ("fc1.bias", &mut self.fc1.bias),
            ("fc2.weight", self.fc2.weights.data_mut()),
            ("fc2.bias", &mut self.fc2.bias),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.arrays().iter().all(|(_, a)| a.iter().all(|v| v.is_finite()))
    }

    /// SGD update; weight decay applies to weight arrays only, never biases.
    pub fn sgd_step(&mut self, grads: &ModelGrads, lr: f64, weight_decay: f64) {
        for ((name, w), (_, g)) in self.arrays_mut().into_iter().zip(grads.arrays()) {
            let wd = if name.ends_with(".bias") { 0.0 } else { weight_decay };
            sgd_update(w, g, lr, wd);
        }
    }

    pub(crate) fn check_input(x: &Tensor) -> Result<()> {
        let s = x.shape();
        if s.c != IMAGE_CHANNELS || s.h != IMAGE_SIZE || s.w != IMAGE_SIZE {
            return Err(Error::dim(
                "model input",
                format!("expected (n, {IMAGE_CHANNELS}, {IMAGE_SIZE}, {IMAGE_SIZE}), got {s}"),
            ));
        }
        Ok(())
    }
}

/// Weight/bias gradient of one layer.
#[derive(Clone, PartialEq, Debug)]
pub struct LayerGrad {
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

impl LayerGrad {
    fn zeros(weights: Shape, bias: usize) -> Self {
        LayerGrad {
            weights: Tensor::zeros(weights),
            bias: vec![0.0; bias],
        }
    }

    pub(crate) fn accumulate(&mut self, weights: &Tensor, bias: &[f64]) {
        for (a, b) in self.weights.data_mut().iter_mut().zip(weights.data()) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(bias) {
            *a += b;
        }
    }
}

/// Gradients for every array of [`ModelParams`], shape-matched.
#[derive(Clone, PartialEq, Debug)]
pub struct ModelGrads {
    pub conv1: LayerGrad,
    pub conv2: LayerGrad,
    pub fc1: LayerGrad,
    pub fc2: LayerGrad,
}

impl ModelGrads {
    pub fn zeros_like(m: &ModelParams) -> Self {
        ModelGrads {
            conv1: LayerGrad::zeros(m.conv1.weights.shape(), m.conv1.bias.len()),
            conv2: LayerGrad::zeros(m.conv2.weights.shape(), m.conv2.bias.len()),
            fc1: LayerGrad::zeros(m.fc1.weights.shape(), m.fc1.bias.len()),
            fc2: LayerGrad::zeros(m.fc2.weights.shape(), m.fc2.bias.len()),
        }
    }

    pub fn arrays(&self) -> [(&'static str, &[f64]); 8] {
        [
            ("conv1.weight", self.conv1.weights.data()),
            ("conv1.bias", &self.conv1.bias),
            ("conv2.weight", self.conv2.weights.data()),
            ("conv2.bias", &self.conv2.bias),
            ("fc1.weight", self.fc1.weights.data()),
            ("fc1.bias", &self.fc1.bias),
            ("fc2.weight", self.fc2.weights.data()),
            ("fc2.bias", &self.fc2.bias),
        ]
    }
}
