use rand::Rng;

use crate::diff::{DiffError, Param, Tape, Tensor, Var};

use super::Module;

/// Fully connected layer `y = x·W + b`, `W: [in, out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    /// Uniform fan-in initialization on `[-1/√in, 1/√in]` for weight and bias.
    pub fn new<R: Rng + ?Sized>(name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(-bound..=bound)).collect::<Vec<_>>();
        let w = Tensor::new(input, output, draw(input * output)).expect("positive dims");
        let b = Tensor::new(1, output, draw(output)).expect("positive dims");
        Self {
            weight: Param::new(format!("{name}.weight"), w),
            bias: Param::new(format!("{name}.bias"), b),
        }
    }

    /// Layer with given weight `[in, out]` and bias `[1, out]`.
    pub fn from_tensors(name: &str, weight: Tensor, bias: Tensor) -> Result<Self, DiffError> {
        if bias.rows() != 1 || bias.cols() != weight.cols() {
            return Err(DiffError::ShapeMismatch {
                op: "linear",
                left: weight.shape(),
                right: bias.shape(),
            });
        }
        Ok(Self {
            weight: Param::new(format!("{name}.weight"), weight),
            bias: Param::new(format!("{name}.bias"), bias),
        })
    }

    /// Identity map on `dim` features.
    pub fn identity(name: &str, dim: usize) -> Self {
        let mut w = Tensor::zeros(dim, dim);
        for i in 0..dim {
            w.data_mut()[i * dim + i] = 1.0;
        }
        Self::from_tensors(name, w, Tensor::zeros(1, dim)).expect("square identity")
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value().rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value().cols()
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var, DiffError> {
        let w = tape.param(&self.weight);
        let b = tape.param(&self.bias);
        tape.affine(x, w, b)
    }
}

/// Multi-layer perceptron with relu between layers. The output is linear
/// unless `output_relu` is set, which turns the whole stack into
/// `[linear-relu] × n` (the encoder shape).
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Linear>,
    output_relu: bool,
}

impl Mlp {
    /// `dims = [input, hidden..., output]`.
    pub fn new<R: Rng + ?Sized>(name: &str, dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least input and output dims");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| Linear::new(&format!("{name}.{i}"), d[0], d[1], rng))
            .collect();
        Self {
            layers,
            output_relu: false,
        }
    }

    pub fn from_layers(layers: Vec<Linear>) -> Self {
        assert!(!layers.is_empty(), "an MLP needs at least one layer");
        for pair in layers.windows(2) {
            assert_eq!(pair[0].output_dim(), pair[1].input_dim(), "layer dims must chain");
        }
        Self {
            layers,
            output_relu: false,
        }
    }

    pub fn with_output_relu(mut self) -> Self {
        self.output_relu = true;
        self
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var, DiffError> {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, h)?;
            if i < last || self.output_relu {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }
}

impl Module for Mlp {
    fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parameter_count_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = Mlp::new("m", &[6, 256, 256, 256, 1], &mut rng);
        assert_eq!(m.num_params(), 6 * 256 + 256 + 2 * (256 * 256 + 256) + 257);
    }

    #[test]
    fn init_is_within_fan_in_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = Linear::new("l", 16, 8, &mut rng);
        let bound = 0.25;
        assert!(l.weight.value().data().iter().all(|w| w.abs() <= bound));
        assert!(l.bias.value().data().iter().all(|w| w.abs() <= bound));
        let mean: f64 = l.weight.value().data().iter().sum::<f64>() / 128.0;
        assert!(mean.abs() < 0.05);
    }

    #[test]
    fn input_dim_mismatch_names_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = Mlp::new("m", &[3, 4, 1], &mut rng);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(2, 5));
        let err = m.forward(&mut tape, x).unwrap_err();
        assert!(matches!(err, DiffError::ShapeMismatch { op: "affine", .. }));
    }
}
