use super::params::BlockParams;
use super::{leaky_relu, leaky_relu_grad, sigmoid, BlockConfig, BlockError, ConditioningMode};
use crate::tensor::{accumulate_col_sums, add_row_bias, gemm, matmul, matmul_into, Mat, Real, View};

/// Gradients share the parameter layout.
pub type BlockGrads<T> = BlockParams<T>;

/// Activations kept from the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct BlockCache<T> {
    input: Mat<T>,
    cond: Option<Mat<T>>,
    layer_in: Vec<Mat<T>>,
    filt: Vec<Mat<T>>,
    gate: Vec<Mat<T>>,
    act: Vec<Mat<T>>,
    skip_sum: Mat<T>,
    skip_act: Mat<T>,
    hidden_pre: Mat<T>,
    hidden: Mat<T>,
    out_pre: Mat<T>,
    out: Mat<T>,
    in_dim: usize,
}

/// Row range `[t0, t1)` of outputs whose tap `offset` reads inside `[0, n)`.
#[inline]
fn tap_rows(n: usize, offset: isize) -> (usize, usize) {
    let t0 = (-offset).max(0) as usize;
    let t1 = (n as isize - offset.max(0)).max(0) as usize;
    (t0.min(n), t1.max(t0.min(n)))
}

/// `out[t] += Σ_j h[t + off_j] · W_j`.
fn conv_forward<T: Real>(h: &Mat<T>, w: &Mat<T>, offsets: &[isize], out: &mut Mat<T>) {
    let r = h.cols;
    let n = h.rows;
    let oc = out.cols;
    for (j, &off) in offsets.iter().enumerate() {
        let (t0, t1) = tap_rows(n, off);
        if t1 <= t0 {
            continue;
        }
        let src = (t0 as isize + off) as usize;
        let a = View::row_major(&h.data[src * r..], t1 - t0, r);
        let b = View::row_major(&w.data[j * r * oc..(j + 1) * r * oc], r, oc);
        gemm(T::one(), a, b, T::one(), &mut out.data[t0 * oc..], oc);
    }
}

/// Accumulates `dW_j += h_shift^T dz` and `dh[t + off_j] += dz[t] W_j^T`.
fn conv_backward<T: Real>(h: &Mat<T>, w: &Mat<T>, offsets: &[isize], dz: &Mat<T>, dw: &mut Mat<T>, dh: &mut Mat<T>) {
    let r = h.cols;
    let n = h.rows;
    let oc = dz.cols;
    for (j, &off) in offsets.iter().enumerate() {
        let (t0, t1) = tap_rows(n, off);
        if t1 <= t0 {
            continue;
        }
        let src = (t0 as isize + off) as usize;
        let m = t1 - t0;
        let h_shift = View::row_major(&h.data[src * r..], m, r);
        let dz_rows = View::row_major(&dz.data[t0 * oc..], m, oc);
        gemm(T::one(), h_shift.t(), dz_rows, T::one(), &mut dw.data[j * r * oc..(j + 1) * r * oc], oc);
        let w_j = View::row_major(&w.data[j * r * oc..(j + 1) * r * oc], r, oc);
        gemm(T::one(), dz_rows, w_j.t(), T::one(), &mut dh.data[src * r..], r);
    }
}

fn check_inputs<T: Real>(
    config: &BlockConfig,
    x: &Mat<T>,
    cond: Option<&Mat<T>>,
) -> Result<(), BlockError> {
    if x.cols != config.in_dim {
        return Err(BlockError::Shape(format!("input has {} channels, block expects {}", x.cols, config.in_dim)));
    }
    match (cond, config.cond_dim) {
        (None, 0) => Ok(()),
        (Some(c), d) if d > 0 => {
            if c.cols != d {
                Err(BlockError::Shape(format!("conditioning has {} channels, block expects {d}", c.cols)))
            } else if c.rows != x.rows {
                Err(BlockError::Shape(format!("conditioning has {} frames, input has {}", c.rows, x.rows)))
            } else {
                Ok(())
            }
        }
        (None, d) => Err(BlockError::Shape(format!("block expects {d} conditioning channels, none given"))),
        (Some(_), _) => Err(BlockError::Shape("block takes no conditioning".into())),
    }
}

/// Runs the block over a whole sequence `x: [frames × in_dim]`, returning
/// `[frames × out_dim]` together with the activations needed by
/// [`block_backward`].
pub fn block_forward_cached<T: Real>(
    params: &BlockParams<T>,
    config: &BlockConfig,
    x: &Mat<T>,
    cond: Option<&Mat<T>>,
) -> Result<(Mat<T>, BlockCache<T>), BlockError> {
    check_inputs(config, x, cond)?;
    let n = x.rows;
    let r = config.residual_channels;
    let (input, layer_cond) = match (config.cond_mode, cond) {
        (ConditioningMode::InputConcat, Some(c)) => (x.hcat(c), None),
        (_, c) => (x.clone(), c.cloned()),
    };

    let mut h = matmul(&input, &params.input_w);
    add_row_bias(&mut h, &params.input_b.data);

    let mut skip = Mat::zeros(n, config.skip_channels);
    let mut layer_in = Vec::with_capacity(config.n_layers());
    let mut filt = Vec::with_capacity(config.n_layers());
    let mut gate = Vec::with_capacity(config.n_layers());
    let mut act = Vec::with_capacity(config.n_layers());
    for (l, lp) in params.layers.iter().enumerate() {
        let mut z = Mat::zeros(n, 2 * r);
        add_row_bias(&mut z, &lp.conv_b.data);
        conv_forward(&h, &lp.conv_w, &config.tap_offsets(l), &mut z);
        if let (Some(w), Some(c)) = (&lp.cond_w, &layer_cond) {
            matmul_into(c, w, &mut z, true);
        }
        let mut f = Mat::zeros(n, r);
        let mut g = Mat::zeros(n, r);
        let mut a = Mat::zeros(n, r);
        for t in 0..n {
            let zr = z.row(t);
            for i in 0..r {
                let ft = zr[i].tanh();
                let gt = sigmoid(zr[r + i]);
                f.data[t * r + i] = ft;
                g.data[t * r + i] = gt;
                a.data[t * r + i] = ft * gt;
            }
        }
        matmul_into(&a, &lp.skip_w, &mut skip, true);
        add_row_bias(&mut skip, &lp.skip_b.data);
        let next = match (&lp.res_w, &lp.res_b) {
            (Some(w), Some(b)) => {
                let mut nh = h.clone();
                matmul_into(&a, w, &mut nh, true);
                add_row_bias(&mut nh, &b.data);
                Some(nh)
            }
            _ => None,
        };
        layer_in.push(h);
        filt.push(f);
        gate.push(g);
        act.push(a);
        match next {
            Some(nh) => h = nh,
            None => h = Mat::zeros(0, r),
        }
    }

    let skip_act = skip.map(leaky_relu);
    let [o1, o2] = config.output_stack;
    let mut hidden_pre = matmul(&skip_act, &params.out1_w);
    add_row_bias(&mut hidden_pre, &params.out1_b.data);
    let hidden = hidden_pre.map(|v| o1.activation.apply(v));
    let mut out_pre = matmul(&hidden, &params.out2_w);
    add_row_bias(&mut out_pre, &params.out2_b.data);
    let out = out_pre.map(|v| o2.activation.apply(v));

    let cache = BlockCache {
        input,
        cond: layer_cond,
        layer_in,
        filt,
        gate,
        act,
        skip_sum: skip,
        skip_act,
        hidden_pre,
        hidden,
        out_pre,
        out: out.clone(),
        in_dim: config.in_dim,
    };
    Ok((out, cache))
}

/// Forward pass without keeping activations.
pub fn block_forward<T: Real>(
    params: &BlockParams<T>,
    config: &BlockConfig,
    x: &Mat<T>,
    cond: Option<&Mat<T>>,
) -> Result<Mat<T>, BlockError> {
    block_forward_cached(params, config, x, cond).map(|(y, _)| y)
}

/// Backpropagates `d_out = ∂L/∂output`. Parameter gradients are added into
/// `grads`; returns `(∂L/∂x, ∂L/∂cond)`.
pub fn block_backward<T: Real>(
    params: &BlockParams<T>,
    config: &BlockConfig,
    cache: &BlockCache<T>,
    d_out: &Mat<T>,
    grads: &mut BlockGrads<T>,
) -> Result<(Mat<T>, Option<Mat<T>>), BlockError> {
    if d_out.shape() != cache.out.shape() {
        return Err(BlockError::Shape(format!(
            "output gradient {:?} does not match output {:?}",
            d_out.shape(),
            cache.out.shape()
        )));
    }
    let n = d_out.rows;
    let r = config.residual_channels;
    let [o1, o2] = config.output_stack;

    let mut dy2 = d_out.clone();
    for (d, (x, y)) in dy2.data.iter_mut().zip(cache.out_pre.data.iter().zip(&cache.out.data)) {
        *d *= o2.activation.derivative(*x, *y);
    }
    gemm(T::one(), cache.hidden.view().t(), dy2.view(), T::one(), &mut grads.out2_w.data, grads.out2_w.cols);
    accumulate_col_sums(&dy2, &mut grads.out2_b.data);
    let mut dy1 = Mat::zeros(n, o1.channels);
    gemm(T::one(), dy2.view(), params.out2_w.view().t(), T::zero(), &mut dy1.data, o1.channels);
    for (d, (x, y)) in dy1.data.iter_mut().zip(cache.hidden_pre.data.iter().zip(&cache.hidden.data)) {
        *d *= o1.activation.derivative(*x, *y);
    }
    gemm(T::one(), cache.skip_act.view().t(), dy1.view(), T::one(), &mut grads.out1_w.data, grads.out1_w.cols);
    accumulate_col_sums(&dy1, &mut grads.out1_b.data);
    let mut d_skip = Mat::zeros(n, config.skip_channels);
    gemm(T::one(), dy1.view(), params.out1_w.view().t(), T::zero(), &mut d_skip.data, config.skip_channels);
    for (d, s) in d_skip.data.iter_mut().zip(&cache.skip_sum.data) {
        *d *= leaky_relu_grad(*s);
    }

    let mut d_cond = cache.cond.as_ref().map(|c| Mat::zeros(c.rows, c.cols));
    // Gradient flowing into the residual stream above the current layer.
    let mut dh_next: Option<Mat<T>> = None;
    for l in (0..config.n_layers()).rev() {
        let lp = &params.layers[l];
        let gl = &mut grads.layers[l];
        let a = &cache.act[l];

        let mut da = Mat::zeros(n, r);
        gemm(T::one(), d_skip.view(), lp.skip_w.view().t(), T::zero(), &mut da.data, r);
        gemm(T::one(), a.view().t(), d_skip.view(), T::one(), &mut gl.skip_w.data, gl.skip_w.cols);
        accumulate_col_sums(&d_skip, &mut gl.skip_b.data);
        if let (Some(w), Some(gw), Some(gb), Some(dh)) = (&lp.res_w, &mut gl.res_w, &mut gl.res_b, &dh_next) {
            gemm(T::one(), dh.view(), w.view().t(), T::one(), &mut da.data, r);
            gemm(T::one(), a.view().t(), dh.view(), T::one(), &mut gw.data, gw.cols);
            accumulate_col_sums(dh, &mut gb.data);
        }

        let (f, g) = (&cache.filt[l], &cache.gate[l]);
        let mut dz = Mat::zeros(n, 2 * r);
        for t in 0..n {
            for i in 0..r {
                let k = t * r + i;
                let (ft, gt, dat) = (f.data[k], g.data[k], da.data[k]);
                dz.data[t * 2 * r + i] = dat * gt * (T::one() - ft * ft);
                dz.data[t * 2 * r + r + i] = dat * ft * gt * (T::one() - gt);
            }
        }
        accumulate_col_sums(&dz, &mut gl.conv_b.data);
        if let (Some(w), Some(gw), Some(c), Some(dc)) = (&lp.cond_w, &mut gl.cond_w, &cache.cond, &mut d_cond) {
            gemm(T::one(), c.view().t(), dz.view(), T::one(), &mut gw.data, gw.cols);
            gemm(T::one(), dz.view(), w.view().t(), T::one(), &mut dc.data, dc.cols);
        }
        // The residual path is an identity from this layer's input to the next.
        let mut dh = dh_next.take().unwrap_or_else(|| Mat::zeros(n, r));
        conv_backward(&cache.layer_in[l], &lp.conv_w, &config.tap_offsets(l), &dz, &mut gl.conv_w, &mut dh);
        dh_next = Some(dh);
    }

    let dh0 = dh_next.expect("block has at least one layer");
    gemm(T::one(), cache.input.view().t(), dh0.view(), T::one(), &mut grads.input_w.data, grads.input_w.cols);
    accumulate_col_sums(&dh0, &mut grads.input_b.data);
    let mut d_input = Mat::zeros(n, cache.input.cols);
    gemm(T::one(), dh0.view(), params.input_w.view().t(), T::zero(), &mut d_input.data, cache.input.cols);

    if config.cond_mode == ConditioningMode::InputConcat && config.cond_dim > 0 {
        let (dx, dc) = d_input.hsplit(cache.in_dim);
        return Ok((dx, Some(dc)));
    }
    Ok((d_input, d_cond))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::{init_params, Activation, OutputLayer};
    use rand::{Rng, SeedableRng};

    fn cfg(causal: bool, cond_dim: usize, mode: ConditioningMode) -> BlockConfig {
        BlockConfig {
            in_dim: 3,
            kernel_size: if causal { 2 } else { 3 },
            dilations: vec![1, 2, 4],
            residual_channels: 5,
            skip_channels: 4,
            causal,
            output_stack: [
                OutputLayer { channels: 6, activation: Activation::LeakyRelu },
                OutputLayer { channels: 2, activation: Activation::Tanh },
            ],
            cond_dim,
            cond_mode: mode,
        }
    }

    fn random(rows: usize, cols: usize, seed: u64) -> Mat<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn output_has_input_frame_count() {
        let c = cfg(false, 2, ConditioningMode::PerLayer);
        let p = init_params::<f64>(&c, 1);
        let y = block_forward(&p, &c, &random(17, 3, 2), Some(&random(17, 2, 3))).unwrap();
        assert_eq!(y.shape(), (17, 2));
    }

    #[test]
    fn zero_weights_give_a_constant_output() {
        let c = cfg(true, 0, ConditioningMode::PerLayer);
        let mut p = init_params::<f64>(&c, 1);
        let names = p.names();
        for (name, m) in names.iter().zip(p.tensors_mut()) {
            if name.ends_with("_w") {
                m.fill(0.0);
            } else {
                m.fill(0.3);
            }
        }
        let y = block_forward(&p, &c, &random(12, 3, 2), None).unwrap();
        for t in 1..12 {
            assert_eq!(y.row(t), y.row(0));
        }
    }

    #[test]
    fn shape_errors() {
        let c = cfg(false, 2, ConditioningMode::PerLayer);
        let p = init_params::<f64>(&c, 1);
        assert!(block_forward(&p, &c, &random(5, 4, 0), Some(&random(5, 2, 0))).is_err());
        assert!(block_forward(&p, &c, &random(5, 3, 0), Some(&random(6, 2, 0))).is_err());
        assert!(block_forward(&p, &c, &random(5, 3, 0), None).is_err());
        let (y, cache) = block_forward_cached(&p, &c, &random(5, 3, 0), Some(&random(5, 2, 0))).unwrap();
        let mut g = p.zeros_like();
        assert!(block_backward(&p, &c, &cache, &Mat::zeros(y.rows + 1, y.cols), &mut g).is_err());
    }

    #[test]
    fn causal_outputs_ignore_the_future() {
        let c = cfg(true, 2, ConditioningMode::PerLayer);
        let p = init_params::<f64>(&c, 4);
        let x = random(30, 3, 1);
        let cond = random(30, 2, 2);
        let base = block_forward(&p, &c, &x, Some(&cond)).unwrap();
        let mut x2 = x.clone();
        x2.set(20, 1, 5.0);
        let mut c2 = cond.clone();
        c2.set(22, 0, -3.0);
        let y = block_forward(&p, &c, &x2, Some(&c2)).unwrap();
        for t in 0..20 {
            assert_eq!(y.row(t), base.row(t));
        }
        assert_ne!(y.row(20), base.row(20));
    }

    #[test]
    fn input_concat_mode_routes_conditioning_gradient() {
        let c = cfg(false, 2, ConditioningMode::InputConcat);
        let p = init_params::<f64>(&c, 4);
        let x = random(9, 3, 1);
        let cond = random(9, 2, 2);
        let (y, cache) = block_forward_cached(&p, &c, &x, Some(&cond)).unwrap();
        let mut g = p.zeros_like();
        let (dx, dc) = block_backward(&p, &c, &cache, &y, &mut g).unwrap();
        assert_eq!(dx.shape(), (9, 3));
        assert_eq!(dc.unwrap().shape(), (9, 2));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(40))]
        #[test]
        fn perturbations_stay_inside_the_receptive_field(
            causal in proptest::bool::ANY,
            dilations in proptest::collection::vec(1usize..5, 1..4),
            t in 0usize..40,
            seed in 0u64..1000,
        ) {
            let c = BlockConfig { dilations, ..cfg(causal, 2, ConditioningMode::PerLayer) };
            let rf = crate::blocks::receptive_field(&c);
            let p = init_params::<f64>(&c, seed);
            let x = random(40, 3, seed + 1);
            let cond = random(40, 2, seed + 2);
            let base = block_forward(&p, &c, &x, Some(&cond)).unwrap();
            let mut x2 = x.clone();
            x2.set(t, 0, x.get(t, 0) + 1.0);
            let y = block_forward(&p, &c, &x2, Some(&cond)).unwrap();
            for s in 0..40 {
                let inside = s + rf.future >= t && s <= t + rf.past;
                if !inside {
                    proptest::prop_assert_eq!(y.row(s), base.row(s), "frame {} moved", s);
                }
            }
            proptest::prop_assert_ne!(y.row(t), base.row(t));
        }
    }
}
