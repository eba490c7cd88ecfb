use nalgebra::{DMatrix, DVector};
use rand::Rng;

const LAYER_NORM_EPS: f64 = 1e-5;

/// Affine map applied to row vectors: `y = x·Wᵀ + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `out × in`
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: DMatrix::zeros(output, input),
            bias: DVector::zeros(output),
        }
    }

    pub(crate) fn random(input: usize, output: usize, bound: f64, rng: &mut impl Rng) -> Self {
        Self {
            weight: DMatrix::from_fn(output, input, |_, _| rng.random_range(-bound..=bound)),
            bias: DVector::from_fn(output, |_, _| rng.random_range(-bound..=bound)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    /// Applies the map to every row of `x`.
    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = x * self.weight.transpose();
        for mut row in y.row_iter_mut() {
            row += self.bias.transpose();
        }
        y
    }
}

/// Multi-layer perceptron with rectified-linear activations between layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut h = x.clone();
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h);
            if i < last {
                h.apply(|v| *v = v.max(0.0));
            }
        }
        h
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Linear::output_dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormParams {
    pub scale: DVector<f64>,
    pub shift: DVector<f64>,
}

impl NormParams {
    pub fn identity(dim: usize) -> Self {
        Self {
            scale: DVector::from_element(dim, 1.0),
            shift: DVector::zeros(dim),
        }
    }
}

/// Row-wise layer normalization with learned scale and shift.
pub fn layer_norm(x: &DMatrix<f64>, norm: &NormParams) -> DMatrix<f64> {
    let d = x.ncols() as f64;
    let mut out = x.clone();
    for mut row in out.row_iter_mut() {
        let mean = row.sum() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - mean) * inv * norm.scale[j] + norm.shift[j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_applies_rows() {
        let lin = Linear {
            weight: DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 1.0]),
            bias: DVector::from_vec(vec![0.5, -1.0]),
        };
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.0, 4.0]);
        let y = lin.forward(&x);
        assert_eq!(y, DMatrix::from_row_slice(2, 2, &[1.5, 4.0, -0.5, 3.0]));
    }

    #[test]
    fn mlp_rectifies_hidden_only() {
        let neg = Linear {
            weight: DMatrix::from_element(1, 1, -1.0),
            bias: DVector::zeros(1),
        };
        let mlp = Mlp {
            layers: vec![neg.clone(), neg],
        };
        let x = DMatrix::from_element(1, 1, 2.0);
        // hidden: relu(-2) = 0, output: -0 = 0
        assert_eq!(mlp.forward(&x)[(0, 0)], 0.0);
        let x = DMatrix::from_element(1, 1, -2.0);
        assert_eq!(mlp.forward(&x)[(0, 0)], -2.0);
    }

    #[test]
    fn layer_norm_zero_mean_unit_var() {
        let x = DMatrix::from_row_slice(1, 4, &[1.0, 2.0, 3.0, 10.0]);
        let y = layer_norm(&x, &NormParams::identity(4));
        let mean = y.row(0).sum() / 4.0;
        let var = y.row(0).iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4);
    }
}
