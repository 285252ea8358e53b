use super::params::BlockParams;
use super::{leaky_relu, sigmoid, BlockConfig, BlockError, ConditioningMode};
use crate::tensor::{add_row_bias, gemm, matmul, matmul_into, Mat, Real, View};

/// Frame-by-frame evaluation of a causal block for `batch` independent
/// streams. Each layer keeps a ring of its past inputs, so one step costs
/// one frame's worth of work regardless of how far generation has gone.
#[derive(Debug, Clone)]
pub struct IncrementalState<T> {
    batch: usize,
    t: usize,
    /// `history[l][slot]` is `[batch × R]`; slot `t mod span_l` holds frame `t`.
    history: Vec<Vec<Mat<T>>>,
}

impl<T: Real> IncrementalState<T> {
    pub fn new(config: &BlockConfig, batch: usize) -> Result<Self, BlockError> {
        if !config.causal {
            return Err(BlockError::NotCausal);
        }
        config.validate()?;
        let r = config.residual_channels;
        let history = config
            .dilations
            .iter()
            .map(|&d| (0..(config.kernel_size - 1) * d).map(|_| Mat::zeros(batch, r)).collect())
            .collect();
        Ok(IncrementalState { batch, t: 0, history })
    }

    /// Frames consumed so far.
    pub fn position(&self) -> usize {
        self.t
    }

    /// Consumes frame `t` (`x: [batch × in_dim]`) and returns the block output
    /// for that frame, identical to row `t` of the parallel forward pass.
    pub fn step(
        &mut self,
        params: &BlockParams<T>,
        config: &BlockConfig,
        x: &Mat<T>,
        cond: Option<&Mat<T>>,
    ) -> Result<Mat<T>, BlockError> {
        if x.rows != self.batch || x.cols != config.in_dim {
            return Err(BlockError::Shape(format!(
                "step input {:?}, expected ({}, {})",
                x.shape(),
                self.batch,
                config.in_dim
            )));
        }
        if let Some(c) = cond {
            if c.rows != self.batch || c.cols != config.cond_dim {
                return Err(BlockError::Shape(format!("step conditioning {:?}", c.shape())));
            }
        } else if config.cond_dim > 0 {
            return Err(BlockError::Shape("missing conditioning".into()));
        }
        let b = self.batch;
        let r = config.residual_channels;
        let k = config.kernel_size;
        let (input, layer_cond) = match (config.cond_mode, cond) {
            (ConditioningMode::InputConcat, Some(c)) => (x.hcat(c), None),
            (_, c) => (x.clone(), c),
        };
        let mut h = matmul(&input, &params.input_w);
        add_row_bias(&mut h, &params.input_b.data);
        let mut skip = Mat::zeros(b, config.skip_channels);

        for (l, lp) in params.layers.iter().enumerate() {
            let d = config.dilations[l];
            let span = (k - 1) * d;
            let mut z = Mat::zeros(b, 2 * r);
            add_row_bias(&mut z, &lp.conv_b.data);
            for j in 0..k {
                let back = (k - 1 - j) * d;
                let src = if back == 0 { &h } else { &self.history[l][(self.t + span - back) % span] };
                let w_j = View::row_major(&lp.conv_w.data[j * r * 2 * r..(j + 1) * r * 2 * r], r, 2 * r);
                gemm(T::one(), src.view(), w_j, T::one(), &mut z.data, 2 * r);
            }
            if let (Some(w), Some(c)) = (&lp.cond_w, layer_cond) {
                matmul_into(c, w, &mut z, true);
            }
            let mut a = Mat::zeros(b, r);
            for s in 0..b {
                for i in 0..r {
                    a.data[s * r + i] = z.data[s * 2 * r + i].tanh() * sigmoid(z.data[s * 2 * r + r + i]);
                }
            }
            matmul_into(&a, &lp.skip_w, &mut skip, true);
            add_row_bias(&mut skip, &lp.skip_b.data);
            let next = match (&lp.res_w, &lp.res_b) {
                (Some(w), Some(bias)) => {
                    let mut nh = h.clone();
                    matmul_into(&a, w, &mut nh, true);
                    add_row_bias(&mut nh, &bias.data);
                    Some(nh)
                }
                _ => None,
            };
            let slot = self.t % span;
            self.history[l][slot] = h;
            match next {
                Some(nh) => h = nh,
                None => break,
            }
        }
        self.t += 1;

        let [o1, o2] = config.output_stack;
        let skip = skip.map(leaky_relu);
        let mut hidden = matmul(&skip, &params.out1_w);
        add_row_bias(&mut hidden, &params.out1_b.data);
        let hidden = hidden.map(|v| o1.activation.apply(v));
        let mut out = matmul(&hidden, &params.out2_w);
        add_row_bias(&mut out, &params.out2_b.data);
        Ok(out.map(|v| o2.activation.apply(v)))
    }
}
