//! The quantile forecaster: a residual stack of LSTM layers fed with
//! `[x_κ, α]` at every lag step, followed by a dense head on the last output.
//!
//! Layer 1 maps the two input features to `H` hidden units. Every deeper
//! layer adds its input back to its LSTM output (identity skip). State starts
//! at zero for every window.

mod checkpoint;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numkernel::{
    dense_backward_into, dense_forward_batch, lstm_step_backward_into, lstm_step_batch,
    BatchState, DenseParams, LayerState, LstmLayerParams, StepCache,
};

/// Features fed to the first layer at each lag step: value and α.
pub const INPUT_FEATURES: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Number of stacked LSTM layers.
    pub layers: usize,
    /// Hidden size shared by all layers.
    pub hidden: usize,
    /// Lag window length in time steps.
    pub lag: usize,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.lag == 0 {
            return Err(Error::Config(format!(
                "architecture needs at least one layer, unit and lag step: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForecasterParams {
    pub arch: Architecture,
    pub layers: Vec<LstmLayerParams>,
    pub head: DenseParams,
}

impl ForecasterParams {
    pub fn zeros(arch: Architecture) -> Self {
        let layers = (0..arch.layers)
            .map(|k| {
                let d_in = if k == 0 { INPUT_FEATURES } else { arch.hidden };
                LstmLayerParams::zeros(d_in, arch.hidden)
            })
            .collect();
        Self {
            arch,
            layers,
            head: DenseParams::zeros(arch.hidden, 1),
        }
    }

    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let layers = (0..arch.layers)
            .map(|k| {
                let d_in = if k == 0 { INPUT_FEATURES } else { arch.hidden };
                LstmLayerParams::init(d_in, arch.hidden, rng)
            })
            .collect();
        Ok(Self {
            arch,
            layers,
            head: DenseParams::init(arch.hidden, 1, rng),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.arch)
    }

    /// Parameter tensors in canonical order: for each layer `w_x, w_h, w_c,
    /// b`, then head `w, b`.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(4 * self.layers.len() + 2);
        for l in &self.layers {
            out.push(l.w_x.as_slice().expect("standard layout"));
            out.push(l.w_h.as_slice().expect("standard layout"));
            out.push(l.w_c.as_slice().expect("standard layout"));
            out.push(l.b.as_slice().expect("standard layout"));
        }
        out.push(self.head.w.as_slice().expect("standard layout"));
        out.push(self.head.b.as_slice().expect("standard layout"));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(4 * self.layers.len() + 2);
        for l in &mut self.layers {
            out.push(l.w_x.as_slice_mut().expect("standard layout"));
            out.push(l.w_h.as_slice_mut().expect("standard layout"));
            out.push(l.w_c.as_slice_mut().expect("standard layout"));
            out.push(l.b.as_slice_mut().expect("standard layout"));
        }
        out.push(self.head.w.as_slice_mut().expect("standard layout"));
        out.push(self.head.b.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        check_dim("flat parameter vector", self.param_count(), flat.len())?;
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        check_dim("layer count", self.arch.layers, self.layers.len())?;
        for (k, l) in self.layers.iter().enumerate() {
            let d_in = if k == 0 { INPUT_FEATURES } else { self.arch.hidden };
            check_dim("layer input width", d_in, l.input_dim())?;
            check_dim("layer hidden size", self.arch.hidden, l.hidden())?;
        }
        check_dim("head input", self.arch.hidden, self.head.input_dim())?;
        check_dim("head output", 1, self.head.output_dim())
    }
}

/// Everything the backward pass needs from one batched forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// `caches[layer][κ]`.
    caches: Vec<Vec<StepCache>>,
    /// `outputs[layer][κ]`, each `rows × H`, after the residual add.
    outputs: Vec<Vec<Array2<f64>>>,
    /// Final `(h, c)` per layer.
    pub final_states: Vec<BatchState>,
    /// Head output, one scalar per row.
    pub y: Array1<f64>,
}

impl ForwardTrace {
    pub fn layer_output(&self, layer: usize, step: usize) -> ArrayView2<'_, f64> {
        self.outputs[layer][step].view()
    }

    pub fn rows(&self) -> usize {
        self.y.len()
    }
}

/// Batched forward pass. `windows` is `rows × lag`, `alphas` one per row.
pub fn forward_batch(
    params: &ForecasterParams,
    windows: ArrayView2<'_, f64>,
    alphas: ArrayView1<'_, f64>,
) -> Result<ForwardTrace> {
    params.validate()?;
    let arch = params.arch;
    let rows = windows.nrows();
    check_dim("window length", arch.lag, windows.ncols())?;
    check_dim("alpha count", rows, alphas.len())?;
    if windows.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract(
            "window contains a missing or non-finite value; impute before forecasting",
        ));
    }
    if alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(Error::contract("nominal proportion must lie in (0, 1)"));
    }

    let mut caches = Vec::with_capacity(arch.layers);
    let mut outputs: Vec<Vec<Array2<f64>>> = Vec::with_capacity(arch.layers);
    let mut final_states = Vec::with_capacity(arch.layers);
    for (k, layer) in params.layers.iter().enumerate() {
        let mut state = BatchState::zeros(rows, arch.hidden);
        let mut layer_caches = Vec::with_capacity(arch.lag);
        let mut layer_out = Vec::with_capacity(arch.lag);
        for step in 0..arch.lag {
            let (next, cache) = if k == 0 {
                let mut x = Array2::<f64>::zeros((rows, INPUT_FEATURES));
                x.column_mut(0).assign(&windows.column(step));
                x.column_mut(1).assign(&alphas);
                lstm_step_batch(layer, x.view(), &state)?
            } else {
                lstm_step_batch(layer, outputs[k - 1][step].view(), &state)?
            };
            let out = if k == 0 {
                next.h.clone()
            } else {
                &outputs[k - 1][step] + &next.h
            };
            layer_out.push(out);
            layer_caches.push(cache);
            state = next;
        }
        caches.push(layer_caches);
        outputs.push(layer_out);
        final_states.push(state);
    }
    let top = &outputs[arch.layers - 1][arch.lag - 1];
    let y = dense_forward_batch(&params.head, top.view())?
        .index_axis_move(Axis(1), 0);
    Ok(ForwardTrace {
        caches,
        outputs,
        final_states,
        y,
    })
}

/// Backpropagates `d_y` (one entry per row) through a traced forward pass.
/// Parameter gradients accumulate into `grads`; returns `∂L/∂window`,
/// `rows × lag`.
pub fn backward_batch(
    params: &ForecasterParams,
    trace: &ForwardTrace,
    d_y: ArrayView1<'_, f64>,
    grads: &mut ForecasterParams,
) -> Result<Array2<f64>> {
    let arch = params.arch;
    let rows = trace.rows();
    check_dim("output gradient", rows, d_y.len())?;
    if trace.caches.len() != arch.layers || trace.caches.iter().any(|c| c.len() != arch.lag) {
        return Err(Error::contract("forward trace does not match the architecture"));
    }

    let top = trace.outputs[arch.layers - 1][arch.lag - 1].view();
    let d_y2 = d_y.insert_axis(Axis(1));
    let d_top = dense_backward_into(&params.head, top, d_y2, &mut grads.head)?;

    // Gradient w.r.t. each layer's outputs, indexed by lag step.
    let mut d_out: Vec<Array2<f64>> = (0..arch.lag)
        .map(|_| Array2::zeros((rows, arch.hidden)))
        .collect();
    d_out[arch.lag - 1] += &d_top;

    let mut d_windows = Array2::<f64>::zeros((rows, arch.lag));
    for k in (0..arch.layers).rev() {
        let layer = &params.layers[k];
        let mut d_in: Vec<Array2<f64>> = Vec::with_capacity(arch.lag);
        let mut d_h_next = Array2::<f64>::zeros((rows, arch.hidden));
        let mut d_c_next = Array2::<f64>::zeros((rows, arch.hidden));
        for step in (0..arch.lag).rev() {
            let d_h = &d_out[step] + &d_h_next;
            let (d_x, d_prev) = lstm_step_backward_into(
                layer,
                &trace.caches[k][step],
                d_h.view(),
                d_c_next.view(),
                &mut grads.layers[k],
            )?;
            d_h_next = d_prev.h;
            d_c_next = d_prev.c;
            if k == 0 {
                d_windows.column_mut(step).assign(&d_x.column(0));
                d_in.push(d_x);
            } else {
                d_in.push(d_x + &d_out[step]);
            }
        }
        d_in.reverse();
        d_out = d_in;
    }
    Ok(d_windows)
}

/// Single-window forward pass. Returns the quantile forecast and the final
/// `(h, c)` of every layer.
pub fn forward(
    params: &ForecasterParams,
    window: &[f64],
    alpha: f64,
) -> Result<(f64, Vec<LayerState>)> {
    let w = ArrayView2::from_shape((1, window.len()), window)
        .map_err(|e| Error::contract(e.to_string()))?;
    let a = [alpha];
    let trace = forward_batch(params, w, ArrayView1::from(&a[..]))?;
    let states = trace
        .final_states
        .iter()
        .map(|s| LayerState {
            h: s.h.row(0).to_vec(),
            c: s.c.row(0).to_vec(),
        })
        .collect();
    Ok((trace.y[0], states))
}

pub fn median_forecast(params: &ForecasterParams, window: &[f64]) -> Result<f64> {
    forward(params, window, 0.5).map(|(y, _)| y)
}

/// Forecasted quantiles for one origin, ordered by nominal proportion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileFan {
    pub origin: usize,
    pub lead: usize,
    pub levels: Vec<f64>,
    pub values: Vec<f64>,
}

impl QuantileFan {
    pub fn new(origin: usize, levels: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_dim("fan values", levels.len(), values.len())?;
        Ok(Self {
            origin,
            lead: 1,
            levels,
            values,
        })
    }

    pub fn get(&self, alpha: f64) -> Option<f64> {
        self.levels
            .iter()
            .position(|a| level_eq(*a, alpha))
            .map(|i| self.values[i])
    }

    /// Quantile-crossing repair: sort the values and hand them back out in
    /// level order. Assumes `levels` is sorted ascending.
    pub fn monotonize(&mut self) {
        self.values.sort_by(f64::total_cmp);
    }

    pub fn is_monotone(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }
}

/// Levels are compared with a small absolute tolerance so that `0.1` built
/// as `2 × 0.05` and as a literal match.
pub fn level_eq(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

pub fn validate_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::Config("quantile set is empty".into()));
    }
    if levels.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(Error::Config(format!(
            "quantile levels must lie in (0, 1): {levels:?}"
        )));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "quantile levels must be strictly increasing: {levels:?}"
        )));
    }
    Ok(())
}

pub fn forecast_fan(params: &ForecasterParams, window: &[f64], levels: &[f64]) -> Result<QuantileFan> {
    validate_levels(levels)?;
    let rows = levels.len();
    let w = ArrayView1::from(window);
    let windows = w.broadcast((rows, window.len())).ok_or_else(|| {
        Error::contract("window cannot be broadcast to the quantile rows")
    })?;
    let alphas = ArrayView1::from(levels);
    let trace = forward_batch(params, windows, alphas)?;
    let mut fan = QuantileFan::new(0, levels.to_vec(), trace.y.to_vec())?;
    fan.monotonize();
    Ok(fan)
}

/// Anything that maps `(window, α)` rows to quantile forecasts. The trained
/// network implements it; tests plug in stubs.
pub trait QuantileModel {
    fn lag(&self) -> usize;

    /// One forecast per row of `windows` (`rows × lag`) at the matching α.
    fn predict(&self, windows: ArrayView2<'_, f64>, alphas: ArrayView1<'_, f64>) -> Result<Array1<f64>>;
}

impl QuantileModel for ForecasterParams {
    fn lag(&self) -> usize {
        self.arch.lag
    }

    fn predict(&self, windows: ArrayView2<'_, f64>, alphas: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        Ok(forward_batch(self, windows, alphas)?.y)
    }
}

/// Zeroes the α column of the first layer's input weights.
#[doc(hidden)]
pub fn detach_alpha(params: &mut ForecasterParams) {
    params.layers[0].w_x.slice_mut(s![.., 1]).fill(0.0);
}
