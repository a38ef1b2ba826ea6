use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::error::{check_dim, Result};

/// Fully connected layer `y = W x + b` with `W` of shape `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseParams {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl DenseParams {
    pub fn zeros(input_dim: usize, output_dim: usize) -> Self {
        Self {
            w: Array2::zeros((output_dim, input_dim)),
            b: Array1::zeros(output_dim),
        }
    }

    pub fn init<R: Rng + ?Sized>(input_dim: usize, output_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input_dim as f64).sqrt();
        let mut p = Self::zeros(input_dim, output_dim);
        p.w.mapv_inplace(|_| rng.gen_range(-bound..=bound));
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(self.b.iter()).all(|v| v.is_finite())
    }
}

pub fn dense_forward(params: &DenseParams, input: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    check_dim("dense input", params.input_dim(), input.len())?;
    Ok(params.w.dot(&input) + &params.b)
}

/// Batched forward: `input` is `rows × in`, result `rows × out`.
pub fn dense_forward_batch(params: &DenseParams, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    check_dim("dense input width", params.input_dim(), input.ncols())?;
    let mut out = Array2::zeros((input.nrows(), params.output_dim()));
    out += &params.b;
    general_mat_mul(1.0, &input, &params.w.t(), 1.0, &mut out);
    Ok(out)
}

/// Accumulates parameter gradients and returns `∂L/∂input`.
pub fn dense_backward_into(
    params: &DenseParams,
    input: ArrayView2<'_, f64>,
    d_out: ArrayView2<'_, f64>,
    grads: &mut DenseParams,
) -> Result<Array2<f64>> {
    check_dim("dense upstream rows", input.nrows(), d_out.nrows())?;
    check_dim("dense upstream width", params.output_dim(), d_out.ncols())?;
    general_mat_mul(1.0, &d_out.t(), &input, 1.0, &mut grads.w);
    grads.b += &d_out.sum_axis(Axis(0));
    Ok(d_out.dot(&params.w))
}
