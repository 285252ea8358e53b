use crate::tensor::{gemm, Mat, View};

/// Multinomial logistic regression on frame embeddings, fitted by
/// full-batch Adam from zero weights (so fitting is deterministic).
/// Features are standardised with the training statistics first, so the
/// result does not depend on the embedding scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// `[(dim + 1) × classes]`; the last row is the bias.
    weights: Mat<f64>,
}

const LEARNING_RATE: f64 = 0.05;
const L2: f64 = 1e-4;

fn standardised_with_bias(x: &Mat<f32>, mean: &[f64], scale: &[f64]) -> Mat<f64> {
    Mat::from_fn(x.rows, x.cols + 1, |t, j| if j < x.cols { (x.get(t, j) as f64 - mean[j]) * scale[j] } else { 1.0 })
}

/// Per-column mean and inverse standard deviation; constant columns get
/// scale 0 so they stay exactly zero.
fn column_stats(x: &Mat<f32>) -> (Vec<f64>, Vec<f64>) {
    let n = x.rows.max(1) as f64;
    let mut mean = vec![0.0; x.cols];
    for t in 0..x.rows {
        for (m, &v) in mean.iter_mut().zip(x.row(t)) {
            *m += v as f64 / n;
        }
    }
    let mut var = vec![0.0; x.cols];
    for t in 0..x.rows {
        for ((s, &v), m) in var.iter_mut().zip(x.row(t)).zip(&mean) {
            *s += (v as f64 - m).powi(2) / n;
        }
    }
    let scale = var.iter().map(|&v| if v > 1e-24 { 1.0 / v.sqrt() } else { 0.0 }).collect();
    (mean, scale)
}

fn softmax_rows(z: &mut Mat<f64>) {
    for t in 0..z.rows {
        let row = z.row_mut(t);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
}

impl LinearProbe {
    pub fn fit(x: &Mat<f32>, labels: &[usize], n_classes: usize, iterations: usize) -> LinearProbe {
        assert_eq!(x.rows, labels.len(), "one label per frame");
        let (mean, scale) = column_stats(x);
        let xb = standardised_with_bias(x, &mean, &scale);
        let (n, d) = (xb.rows, xb.cols);
        let mut w = Mat::<f64>::zeros(d, n_classes);
        let mut m = Mat::<f64>::zeros(d, n_classes);
        let mut v = Mat::<f64>::zeros(d, n_classes);
        let mut probs = Mat::<f64>::zeros(n, n_classes);
        let mut grad = Mat::<f64>::zeros(d, n_classes);
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        for it in 1..=iterations {
            gemm(1.0, xb.view(), w.view(), 0.0, &mut probs.data, n_classes);
            softmax_rows(&mut probs);
            for (t, &y) in labels.iter().enumerate() {
                probs.data[t * n_classes + y] -= 1.0;
            }
            gemm(1.0 / n as f64, xb.view().t(), probs.view(), 0.0, &mut grad.data, n_classes);
            for i in 0..grad.data.len() {
                let g = grad.data[i] + L2 * w.data[i];
                m.data[i] = b1 * m.data[i] + (1.0 - b1) * g;
                v.data[i] = b2 * v.data[i] + (1.0 - b2) * g * g;
                let mh = m.data[i] / (1.0 - b1.powi(it as i32));
                let vh = v.data[i] / (1.0 - b2.powi(it as i32));
                w.data[i] -= LEARNING_RATE * mh / (vh.sqrt() + eps);
            }
        }
        LinearProbe { mean, scale, weights: w }
    }

    pub fn predict(&self, x: &Mat<f32>) -> Vec<usize> {
        let xb = standardised_with_bias(x, &self.mean, &self.scale);
        let c = self.weights.cols;
        let mut z = vec![0.0; xb.rows * c];
        gemm(1.0, xb.view(), View::row_major(&self.weights.data, self.weights.rows, c), 0.0, &mut z, c);
        z.chunks(c)
            .map(|row| row.iter().enumerate().fold(0, |best, (j, &v)| if v > row[best] { j } else { best }))
            .collect()
    }

    pub fn accuracy(&self, x: &Mat<f32>, labels: &[usize]) -> f64 {
        if labels.is_empty() {
            return 0.0;
        }
        let hits = self.predict(x).iter().zip(labels).filter(|(p, y)| p == y).count();
        hits as f64 / labels.len() as f64
    }
}
