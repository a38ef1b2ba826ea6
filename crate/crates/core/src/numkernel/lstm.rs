//! Peephole LSTM layer: one recurrent step forward and backward.
//!
//! Gate pre-activations for a row `x` with previous state `(h, c)`:
//!
//! ```text
//! i = σ(W_ix x + W_ih h + W_ic c + b_i)
//! f = σ(W_fx x + W_fh h + W_fc c + b_f)
//! g = tanh(W_cx x + W_ch h + b_c)
//! c' = f ⊙ c + i ⊙ g
//! o = σ(W_ox x + W_oh h + W_oc c + b_o)
//! h' = o ⊙ tanh(c')
//! ```
//!
//! The output gate peeks at the *previous* cell state, like the other two
//! gates. Weights are stored stacked by gate so that a whole batch of rows is
//! handled by three matrix products per step.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::error::{check_dim, Error, Result};

/// Row blocks of the stacked gate matrices.
pub const GATE_I: usize = 0;
pub const GATE_F: usize = 1;
pub const GATE_G: usize = 2;
pub const GATE_O: usize = 3;

/// Parameters of one LSTM layer.
///
/// `w_x` is `4H × D_in` and `w_h` is `4H × H`, with row blocks in gate order
/// input, forget, cell candidate, output. `w_c` is `3H × H` and holds the
/// peephole maps for input, forget and output gates (the cell candidate has
/// none). `b` is `4H`, same block order as `w_x`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayerParams {
    pub w_x: Array2<f64>,
    pub w_h: Array2<f64>,
    pub w_c: Array2<f64>,
    pub b: Array1<f64>,
}

/// Hidden and cell vector of a single sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LayerState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Hidden and cell state for a batch of rows, each `rows × H`.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchState {
    pub h: Array2<f64>,
    pub c: Array2<f64>,
}

impl BatchState {
    pub fn zeros(rows: usize, hidden: usize) -> Self {
        Self {
            h: Array2::zeros((rows, hidden)),
            c: Array2::zeros((rows, hidden)),
        }
    }

    pub fn rows(&self) -> usize {
        self.h.nrows()
    }
}

/// Forward intermediates kept for the backward pass of one step.
#[derive(Clone, Debug)]
pub struct StepCache {
    pub input: Array2<f64>,
    pub prev: BatchState,
    /// Activated gates `[i | f | g | o]`, `rows × 4H`.
    pub gates: Array2<f64>,
    pub c: Array2<f64>,
    pub tanh_c: Array2<f64>,
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl LstmLayerParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            w_x: Array2::zeros((4 * hidden, input_dim)),
            w_h: Array2::zeros((4 * hidden, hidden)),
            w_c: Array2::zeros((3 * hidden, hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }

    /// Uniform in `[-1/√H, 1/√H]`, forget-gate bias set to one.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut p = Self::zeros(input_dim, hidden);
        for w in [&mut p.w_x, &mut p.w_h, &mut p.w_c] {
            w.mapv_inplace(|_| rng.gen_range(-bound..=bound));
        }
        p.b.mapv_inplace(|_| rng.gen_range(-bound..=bound));
        p.b.slice_mut(s![GATE_F * hidden..(GATE_F + 1) * hidden])
            .fill(1.0);
        p
    }

    pub fn hidden(&self) -> usize {
        self.w_h.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.ncols()
    }

    fn gate_rows(&self, gate: usize) -> std::ops::Range<usize> {
        let h = self.hidden();
        gate * h..(gate + 1) * h
    }

    pub fn w_ix(&self) -> ArrayView2<'_, f64> {
        self.w_x.slice(s![self.gate_rows(GATE_I), ..])
    }
    pub fn w_fx(&self) -> ArrayView2<'_, f64> {
        self.w_x.slice(s![self.gate_rows(GATE_F), ..])
    }
    pub fn w_cx(&self) -> ArrayView2<'_, f64> {
        self.w_x.slice(s![self.gate_rows(GATE_G), ..])
    }
    pub fn w_ox(&self) -> ArrayView2<'_, f64> {
        self.w_x.slice(s![self.gate_rows(GATE_O), ..])
    }
    pub fn w_ih(&self) -> ArrayView2<'_, f64> {
        self.w_h.slice(s![self.gate_rows(GATE_I), ..])
    }
    pub fn w_fh(&self) -> ArrayView2<'_, f64> {
        self.w_h.slice(s![self.gate_rows(GATE_F), ..])
    }
    pub fn w_ch(&self) -> ArrayView2<'_, f64> {
        self.w_h.slice(s![self.gate_rows(GATE_G), ..])
    }
    pub fn w_oh(&self) -> ArrayView2<'_, f64> {
        self.w_h.slice(s![self.gate_rows(GATE_O), ..])
    }
    pub fn w_ic(&self) -> ArrayView2<'_, f64> {
        self.w_c.slice(s![self.gate_rows(0), ..])
    }
    pub fn w_fc(&self) -> ArrayView2<'_, f64> {
        self.w_c.slice(s![self.gate_rows(1), ..])
    }
    pub fn w_oc(&self) -> ArrayView2<'_, f64> {
        self.w_c.slice(s![self.gate_rows(2), ..])
    }
    pub fn b_i(&self) -> ArrayView1<'_, f64> {
        self.b.slice(s![self.gate_rows(GATE_I)])
    }
    pub fn b_f(&self) -> ArrayView1<'_, f64> {
        self.b.slice(s![self.gate_rows(GATE_F)])
    }
    pub fn b_c(&self) -> ArrayView1<'_, f64> {
        self.b.slice(s![self.gate_rows(GATE_G)])
    }
    pub fn b_o(&self) -> ArrayView1<'_, f64> {
        self.b.slice(s![self.gate_rows(GATE_O)])
    }

    pub fn param_count(&self) -> usize {
        self.w_x.len() + self.w_h.len() + self.w_c.len() + self.b.len()
    }

    pub fn is_finite(&self) -> bool {
        [&self.w_x, &self.w_h, &self.w_c]
            .iter()
            .all(|w| w.iter().all(|v| v.is_finite()))
            && self.b.iter().all(|v| v.is_finite())
    }

    fn check_shapes(&self) -> Result<()> {
        let h = self.hidden();
        check_dim("w_x rows", 4 * h, self.w_x.nrows())?;
        check_dim("w_h rows", 4 * h, self.w_h.nrows())?;
        check_dim("w_c rows", 3 * h, self.w_c.nrows())?;
        check_dim("w_c cols", h, self.w_c.ncols())?;
        check_dim("bias length", 4 * h, self.b.len())
    }
}

/// Forward step for a batch of rows. Returns the new state and the cache
/// needed by [`lstm_step_backward_into`].
pub fn lstm_step_batch(
    params: &LstmLayerParams,
    input: ArrayView2<'_, f64>,
    prev: &BatchState,
) -> Result<(BatchState, StepCache)> {
    params.check_shapes()?;
    let hd = params.hidden();
    let rows = input.nrows();
    check_dim("lstm input width", params.input_dim(), input.ncols())?;
    check_dim("previous hidden rows", rows, prev.h.nrows())?;
    check_dim("previous cell rows", rows, prev.c.nrows())?;
    check_dim("previous hidden width", hd, prev.h.ncols())?;
    check_dim("previous cell width", hd, prev.c.ncols())?;

    let mut pre = Array2::<f64>::zeros((rows, 4 * hd));
    pre += &params.b;
    general_mat_mul(1.0, &input, &params.w_x.t(), 1.0, &mut pre);
    general_mat_mul(1.0, &prev.h, &params.w_h.t(), 1.0, &mut pre);
    let mut peep = Array2::<f64>::zeros((rows, 3 * hd));
    general_mat_mul(1.0, &prev.c, &params.w_c.t(), 0.0, &mut peep);

    let mut gates = pre;
    let mut c = Array2::<f64>::zeros((rows, hd));
    let mut tanh_c = Array2::<f64>::zeros((rows, hd));
    let mut h = Array2::<f64>::zeros((rows, hd));
    for r in 0..rows {
        let mut g_row = gates.row_mut(r);
        let p_row = peep.row(r);
        for j in 0..hd {
            let ai = g_row[j] + p_row[j];
            let af = g_row[hd + j] + p_row[hd + j];
            let ag = g_row[2 * hd + j];
            let ao = g_row[3 * hd + j] + p_row[2 * hd + j];
            let i = sigmoid(ai);
            let f = sigmoid(af);
            let g = ag.tanh();
            let o = sigmoid(ao);
            g_row[j] = i;
            g_row[hd + j] = f;
            g_row[2 * hd + j] = g;
            g_row[3 * hd + j] = o;
            let cv = f * prev.c[[r, j]] + i * g;
            let tc = cv.tanh();
            c[[r, j]] = cv;
            tanh_c[[r, j]] = tc;
            h[[r, j]] = o * tc;
        }
    }
    let next = BatchState {
        h,
        c: c.clone(),
    };
    let cache = StepCache {
        input: input.to_owned(),
        prev: prev.clone(),
        gates,
        c,
        tanh_c,
    };
    Ok((next, cache))
}

/// Single-sequence forward step.
pub fn lstm_step(params: &LstmLayerParams, input: &[f64], prev: &LayerState) -> Result<LayerState> {
    check_dim("lstm input", params.input_dim(), input.len())?;
    let hd = params.hidden();
    check_dim("previous hidden", hd, prev.h.len())?;
    check_dim("previous cell", hd, prev.c.len())?;
    let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
    let state = BatchState {
        h: Array2::from_shape_vec((1, hd), prev.h.clone()).expect("row"),
        c: Array2::from_shape_vec((1, hd), prev.c.clone()).expect("row"),
    };
    let (next, _) = lstm_step_batch(params, x, &state)?;
    Ok(LayerState {
        h: next.h.into_raw_vec_and_offset().0,
        c: next.c.into_raw_vec_and_offset().0,
    })
}

/// Gradients of one step: parameters, input and previous state.
#[derive(Clone, Debug)]
pub struct StepGrads {
    pub params: LstmLayerParams,
    pub input: Array2<f64>,
    pub prev: BatchState,
}

/// Backward step given upstream gradients w.r.t. the new `h` and `c`.
pub fn lstm_step_backward(
    params: &LstmLayerParams,
    cache: &StepCache,
    d_h: ArrayView2<'_, f64>,
    d_c: ArrayView2<'_, f64>,
) -> Result<StepGrads> {
    let mut grads = LstmLayerParams::zeros(params.input_dim(), params.hidden());
    let (input, prev) = lstm_step_backward_into(params, cache, d_h, d_c, &mut grads)?;
    Ok(StepGrads {
        params: grads,
        input,
        prev,
    })
}

/// Backward step that accumulates parameter gradients into `grads`.
/// Returns `(∂L/∂input, ∂L/∂prev-state)`.
pub fn lstm_step_backward_into(
    params: &LstmLayerParams,
    cache: &StepCache,
    d_h: ArrayView2<'_, f64>,
    d_c: ArrayView2<'_, f64>,
    grads: &mut LstmLayerParams,
) -> Result<(Array2<f64>, BatchState)> {
    let hd = params.hidden();
    let rows = cache.input.nrows();
    if cache.gates.dim() != (rows, 4 * hd)
        || cache.c.dim() != (rows, hd)
        || cache.tanh_c.dim() != (rows, hd)
        || cache.prev.rows() != rows
    {
        return Err(Error::contract(
            "step cache does not match layer shape or batch size",
        ));
    }
    check_dim("upstream hidden gradient rows", rows, d_h.nrows())?;
    check_dim("upstream cell gradient rows", rows, d_c.nrows())?;
    check_dim("upstream hidden gradient width", hd, d_h.ncols())?;
    check_dim("upstream cell gradient width", hd, d_c.ncols())?;

    let mut d_pre = Array2::<f64>::zeros((rows, 4 * hd));
    let mut d_peep = Array2::<f64>::zeros((rows, 3 * hd));
    let mut d_c_prev = Array2::<f64>::zeros((rows, hd));
    for r in 0..rows {
        let g = cache.gates.row(r);
        for j in 0..hd {
            let (i, f, gc, o) = (g[j], g[hd + j], g[2 * hd + j], g[3 * hd + j]);
            let tc = cache.tanh_c[[r, j]];
            let dh = d_h[[r, j]];
            let dct = d_c[[r, j]] + dh * o * (1.0 - tc * tc);
            let da_o = dh * tc * o * (1.0 - o);
            let da_i = dct * gc * i * (1.0 - i);
            let da_g = dct * i * (1.0 - gc * gc);
            let da_f = dct * cache.prev.c[[r, j]] * f * (1.0 - f);
            d_pre[[r, j]] = da_i;
            d_pre[[r, hd + j]] = da_f;
            d_pre[[r, 2 * hd + j]] = da_g;
            d_pre[[r, 3 * hd + j]] = da_o;
            d_peep[[r, j]] = da_i;
            d_peep[[r, hd + j]] = da_f;
            d_peep[[r, 2 * hd + j]] = da_o;
            d_c_prev[[r, j]] = dct * f;
        }
    }

    general_mat_mul(1.0, &d_pre.t(), &cache.input, 1.0, &mut grads.w_x);
    general_mat_mul(1.0, &d_pre.t(), &cache.prev.h, 1.0, &mut grads.w_h);
    general_mat_mul(1.0, &d_peep.t(), &cache.prev.c, 1.0, &mut grads.w_c);
    grads.b += &d_pre.sum_axis(Axis(0));

    let mut d_input = Array2::<f64>::zeros((rows, params.input_dim()));
    general_mat_mul(1.0, &d_pre, &params.w_x, 0.0, &mut d_input);
    let mut d_h_prev = Array2::<f64>::zeros((rows, hd));
    general_mat_mul(1.0, &d_pre, &params.w_h, 0.0, &mut d_h_prev);
    general_mat_mul(1.0, &d_peep, &params.w_c, 1.0, &mut d_c_prev);

    Ok((
        d_input,
        BatchState {
            h: d_h_prev,
            c: d_c_prev,
        },
    ))
}
