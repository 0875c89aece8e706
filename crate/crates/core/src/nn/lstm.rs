use ndarray::{s, Array2, Array3, ArrayView2, Axis, Ix1, Ix2, Zip};
use rand::Rng;

use super::{sigmoid, NnError, Param, ParamMut, ParamRef};

/// Recurrent state for one layer, `batch × hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Array2<f64>,
    pub c: Array2<f64>,
}

impl LstmState {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        Self {
            h: Array2::zeros((batch, hidden)),
            c: Array2::zeros((batch, hidden)),
        }
    }
}

/// One LSTM layer. Gate blocks are stacked in the order input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    /// `4·hidden × input`
    pub w_x: Param<Ix2>,
    /// `4·hidden × hidden`
    pub w_h: Param<Ix2>,
    /// `4·hidden`
    pub bias: Param<Ix1>,
}

#[derive(Debug, Clone)]
struct StepCache {
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    /// activated gates `[i, f, g, o]`, `batch × 4·hidden`
    gates: Array2<f64>,
    tanh_c: Array2<f64>,
}

/// Activations kept by the forward pass for exact BPTT.
#[derive(Debug, Clone)]
pub struct LstmCache {
    inputs: Array3<f64>,
    steps: Vec<StepCache>,
}

#[derive(Debug, Clone)]
pub struct LstmOutput {
    /// `time × batch × hidden`
    pub hidden: Array3<f64>,
    pub state: LstmState,
    pub cache: LstmCache,
}

impl LstmLayer {
    /// All-zero layer.
    pub fn zeros(prefix: &str, input_size: usize, hidden_size: usize) -> Self {
        Self {
            w_x: Param::zeros(format!("{prefix}.w_x"), (4 * hidden_size, input_size)),
            w_h: Param::zeros(format!("{prefix}.w_h"), (4 * hidden_size, hidden_size)),
            bias: Param::zeros(format!("{prefix}.bias"), 4 * hidden_size),
        }
    }

    /// Weights from `uniform(-1/√h, 1/√h)`, zero biases except the forget gate at 1.
    pub fn init<R: Rng>(prefix: &str, input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (hidden_size as f64).sqrt();
        let mut layer = Self {
            w_x: Param::uniform(format!("{prefix}.w_x"), (4 * hidden_size, input_size), scale, rng),
            w_h: Param::uniform(format!("{prefix}.w_h"), (4 * hidden_size, hidden_size), scale, rng),
            bias: Param::zeros(format!("{prefix}.bias"), 4 * hidden_size),
        };
        layer.bias.value.slice_mut(s![hidden_size..2 * hidden_size]).fill(1.0);
        layer
    }

    pub fn input_size(&self) -> usize {
        self.w_x.value.ncols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_h.value.ncols()
    }

    pub fn params(&self) -> [ParamRef<'_>; 3] {
        [self.w_x.as_ref(), self.w_h.as_ref(), self.bias.as_ref()]
    }

    pub fn params_mut(&mut self) -> [ParamMut<'_>; 3] {
        [self.w_x.as_mut(), self.w_h.as_mut(), self.bias.as_mut()]
    }

    /// Activated gates `[i, f, g, o]` for one time step.
    fn gates(&self, x: ArrayView2<f64>, h_prev: &Array2<f64>) -> Array2<f64> {
        let h = self.hidden_size();
        let mut gates = x.dot(&self.w_x.value.t()) + h_prev.dot(&self.w_h.value.t()) + &self.bias.value;
        gates.slice_mut(s![.., 0..2 * h]).mapv_inplace(sigmoid);
        gates.slice_mut(s![.., 2 * h..3 * h]).mapv_inplace(f64::tanh);
        gates.slice_mut(s![.., 3 * h..]).mapv_inplace(sigmoid);
        gates
    }

    /// Runs the recurrence over `inputs` (`time × batch × input`).
    pub fn forward(&self, inputs: &Array3<f64>, state: &LstmState) -> Result<LstmOutput, NnError> {
        let (steps, batch, input) = inputs.dim();
        let hidden = self.hidden_size();
        if input != self.input_size() {
            return Err(NnError::Shape(format!(
                "LSTM input width {input}, layer expects {}",
                self.input_size()
            )));
        }
        if state.h.dim() != (batch, hidden) || state.c.dim() != (batch, hidden) {
            return Err(NnError::Shape(format!(
                "LSTM state is {:?}/{:?}, expected ({batch}, {hidden})",
                state.h.dim(),
                state.c.dim()
            )));
        }
        let mut out = Array3::zeros((steps, batch, hidden));
        let mut cache = Vec::with_capacity(steps);
        let mut h = state.h.clone();
        let mut c = state.c.clone();
        for t in 0..steps {
            let gates = self.gates(inputs.index_axis(Axis(0), t), &h);
            let c_new = &gates.slice(s![.., hidden..2 * hidden]) * &c
                + &gates.slice(s![.., 0..hidden]) * &gates.slice(s![.., 2 * hidden..3 * hidden]);
            let tanh_c = c_new.mapv(f64::tanh);
            let h_new = &gates.slice(s![.., 3 * hidden..]) * &tanh_c;
            out.index_axis_mut(Axis(0), t).assign(&h_new);
            cache.push(StepCache {
                h_prev: std::mem::replace(&mut h, h_new),
                c_prev: std::mem::replace(&mut c, c_new),
                gates,
                tanh_c,
            });
        }
        Ok(LstmOutput {
            hidden: out,
            state: LstmState { h, c },
            cache: LstmCache {
                inputs: inputs.clone(),
                steps: cache,
            },
        })
    }

    /// Backpropagates `d_hidden` (`time × batch × hidden`) through the cached
    /// window, accumulating parameter gradients. The final state is treated as
    /// detached. Returns the gradient with respect to the inputs.
    pub fn backward(&mut self, cache: &LstmCache, d_hidden: &Array3<f64>) -> Array3<f64> {
        let (steps, batch, _) = cache.inputs.dim();
        let h = self.hidden_size();
        let mut d_inputs = Array3::zeros(cache.inputs.raw_dim());
        let mut dh_next: Array2<f64> = Array2::zeros((batch, h));
        let mut dc_next: Array2<f64> = Array2::zeros((batch, h));
        let mut dz = Array2::zeros((batch, 4 * h));
        for t in (0..steps).rev() {
            let sc = &cache.steps[t];
            let dh = &d_hidden.index_axis(Axis(0), t) + &dh_next;
            let gi = sc.gates.slice(s![.., 0..h]);
            let gf = sc.gates.slice(s![.., h..2 * h]);
            let gg = sc.gates.slice(s![.., 2 * h..3 * h]);
            let go = sc.gates.slice(s![.., 3 * h..]);

            let mut dc = dc_next;
            Zip::from(&mut dc)
                .and(&dh)
                .and(&go)
                .and(&sc.tanh_c)
                .for_each(|dc, &dh, &o, &tc| *dc += dh * o * (1.0 - tc * tc));

            Zip::from(dz.slice_mut(s![.., 0..h]))
                .and(&dc)
                .and(&gi)
                .and(&gg)
                .for_each(|dz, &dc, &i, &g| *dz = dc * g * i * (1.0 - i));
            Zip::from(dz.slice_mut(s![.., h..2 * h]))
                .and(&dc)
                .and(&gf)
                .and(&sc.c_prev)
                .for_each(|dz, &dc, &f, &cp| *dz = dc * cp * f * (1.0 - f));
            Zip::from(dz.slice_mut(s![.., 2 * h..3 * h]))
                .and(&dc)
                .and(&gi)
                .and(&gg)
                .for_each(|dz, &dc, &i, &g| *dz = dc * i * (1.0 - g * g));
            Zip::from(dz.slice_mut(s![.., 3 * h..]))
                .and(&dh)
                .and(&go)
                .and(&sc.tanh_c)
                .for_each(|dz, &dh, &o, &tc| *dz = dh * tc * o * (1.0 - o));

            let x = cache.inputs.index_axis(Axis(0), t);
            self.w_x.grad += &dz.t().dot(&x);
            self.w_h.grad += &dz.t().dot(&sc.h_prev);
            self.bias.grad += &dz.sum_axis(Axis(0));
            d_inputs.index_axis_mut(Axis(0), t).assign(&dz.dot(&self.w_x.value));
            dh_next = dz.dot(&self.w_h.value);
            dc_next = &dc * &gf;
        }
        d_inputs
    }
}
