use rand::Rng;

use super::BlockConfig;
use crate::rng::{domain, stream};
use crate::tensor::{Mat, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    /// `[(kernel · R) × 2R]`; rows `j·R .. (j+1)·R` belong to tap `j`.
    /// Columns `0..R` feed the filter, `R..2R` the gate.
    pub conv_w: Mat<T>,
    pub conv_b: Mat<T>,
    /// `[cond × 2R]` when the block injects conditioning per layer.
    pub cond_w: Option<Mat<T>>,
    pub skip_w: Mat<T>,
    pub skip_b: Mat<T>,
    /// Absent on the last layer, whose residual output would be unused.
    pub res_w: Option<Mat<T>>,
    pub res_b: Option<Mat<T>>,
}

/// All trainable weights of one block. Biases are `[1 × n]` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams<T> {
    pub input_w: Mat<T>,
    pub input_b: Mat<T>,
    pub layers: Vec<LayerParams<T>>,
    pub out1_w: Mat<T>,
    pub out1_b: Mat<T>,
    pub out2_w: Mat<T>,
    pub out2_b: Mat<T>,
}

impl<T: Real> BlockParams<T> {
    /// Parameters with every entry zero and shapes dictated by `config`.
    pub fn zeros(config: &BlockConfig) -> Self {
        let r = config.residual_channels;
        let s = config.skip_channels;
        let n = config.n_layers();
        let layers = (0..n)
            .map(|l| LayerParams {
                conv_w: Mat::zeros(config.kernel_size * r, 2 * r),
                conv_b: Mat::zeros(1, 2 * r),
                cond_w: (config.layer_cond_dim() > 0).then(|| Mat::zeros(config.layer_cond_dim(), 2 * r)),
                skip_w: Mat::zeros(r, s),
                skip_b: Mat::zeros(1, s),
                res_w: (l + 1 < n).then(|| Mat::zeros(r, r)),
                res_b: (l + 1 < n).then(|| Mat::zeros(1, r)),
            })
            .collect();
        let [o1, o2] = config.output_stack;
        BlockParams {
            input_w: Mat::zeros(config.effective_in_dim(), r),
            input_b: Mat::zeros(1, r),
            layers,
            out1_w: Mat::zeros(s, o1.channels),
            out1_b: Mat::zeros(1, o1.channels),
            out2_w: Mat::zeros(o1.channels, o2.channels),
            out2_b: Mat::zeros(1, o2.channels),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Mat<T>| Mat::zeros(m.rows, m.cols);
        BlockParams {
            input_w: z(&self.input_w),
            input_b: z(&self.input_b),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    conv_w: z(&l.conv_w),
                    conv_b: z(&l.conv_b),
                    cond_w: l.cond_w.as_ref().map(z),
                    skip_w: z(&l.skip_w),
                    skip_b: z(&l.skip_b),
                    res_w: l.res_w.as_ref().map(z),
                    res_b: l.res_b.as_ref().map(z),
                })
                .collect(),
            out1_w: z(&self.out1_w),
            out1_b: z(&self.out1_b),
            out2_w: z(&self.out2_w),
            out2_b: z(&self.out2_b),
        }
    }

    /// Tensor names in the same order as [`tensors`](Self::tensors).
    pub fn names(&self) -> Vec<String> {
        let mut out = vec!["input_w".to_string(), "input_b".to_string()];
        for (i, l) in self.layers.iter().enumerate() {
            out.push(format!("layer{i}.conv_w"));
            out.push(format!("layer{i}.conv_b"));
            if l.cond_w.is_some() {
                out.push(format!("layer{i}.cond_w"));
            }
            out.push(format!("layer{i}.skip_w"));
            out.push(format!("layer{i}.skip_b"));
            if l.res_w.is_some() {
                out.push(format!("layer{i}.res_w"));
                out.push(format!("layer{i}.res_b"));
            }
        }
        out.extend(["out1_w", "out1_b", "out2_w", "out2_b"].map(String::from));
        out
    }

    pub fn tensors(&self) -> Vec<&Mat<T>> {
        let mut out = vec![&self.input_w, &self.input_b];
        for l in &self.layers {
            out.push(&l.conv_w);
            out.push(&l.conv_b);
            if let Some(w) = &l.cond_w {
                out.push(w);
            }
            out.push(&l.skip_w);
            out.push(&l.skip_b);
            if let (Some(w), Some(b)) = (&l.res_w, &l.res_b) {
                out.push(w);
                out.push(b);
            }
        }
        out.extend([&self.out1_w, &self.out1_b, &self.out2_w, &self.out2_b]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Mat<T>> {
        let mut out = vec![&mut self.input_w, &mut self.input_b];
        for l in &mut self.layers {
            out.push(&mut l.conv_w);
            out.push(&mut l.conv_b);
            if let Some(w) = &mut l.cond_w {
                out.push(w);
            }
            out.push(&mut l.skip_w);
            out.push(&mut l.skip_b);
            if let (Some(w), Some(b)) = (&mut l.res_w, &mut l.res_b) {
                out.push(w);
                out.push(b);
            }
        }
        out.extend([&mut self.out1_w, &mut self.out1_b, &mut self.out2_w, &mut self.out2_b]);
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|m| m.data.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> BlockParams<U> {
        let c = |m: &Mat<T>| m.cast::<U>();
        BlockParams {
            input_w: c(&self.input_w),
            input_b: c(&self.input_b),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    conv_w: c(&l.conv_w),
                    conv_b: c(&l.conv_b),
                    cond_w: l.cond_w.as_ref().map(c),
                    skip_w: c(&l.skip_w),
                    skip_b: c(&l.skip_b),
                    res_w: l.res_w.as_ref().map(c),
                    res_b: l.res_b.as_ref().map(c),
                })
                .collect(),
            out1_w: c(&self.out1_w),
            out1_b: c(&self.out1_b),
            out2_w: c(&self.out2_w),
            out2_b: c(&self.out2_b),
        }
    }

    /// Verifies that every tensor has the shape `config` prescribes.
    pub fn matches(&self, config: &BlockConfig) -> bool {
        let reference = Self::zeros(config);
        reference.names() == self.names()
            && reference.tensors().iter().zip(self.tensors()).all(|(a, b)| a.shape() == b.shape())
    }
}

/// Uniform initialisation in `±sqrt(3 / fan_in)` (variance `1 / fan_in`)
/// for weights, zero biases. Values are drawn in f64 so that f32 and f64
/// parameter sets from the same seed agree.
pub fn init_params<T: Real>(config: &BlockConfig, seed: u64) -> BlockParams<T> {
    let mut params = BlockParams::<T>::zeros(config);
    let mut rng = stream(seed, domain::INIT, 0);
    let names = params.names();
    for (name, m) in names.iter().zip(params.tensors_mut()) {
        if name.ends_with("_b") {
            continue;
        }
        // Rows are the fan-in for every weight, including the stacked conv taps.
        let fan_in = m.rows.max(1);
        let bound = (3.0 / fan_in as f64).sqrt();
        for v in m.data.iter_mut() {
            *v = T::from_f64_lossy(rng.random_range(-bound..bound));
        }
    }
    params
}
