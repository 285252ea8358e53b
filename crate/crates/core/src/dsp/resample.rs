//! Band-limited resampling with a tabulated Blackman-windowed sinc kernel.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Zero crossings of the sinc on each side of the kernel centre.
pub(crate) const ZERO_CROSSINGS: usize = 16;
/// Table entries per zero crossing.
const OVERSAMPLE: usize = 512;

fn kernel_table() -> &'static [f32] {
    static TABLE: OnceLock<Vec<f32>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = ZERO_CROSSINGS * OVERSAMPLE + 2;
        (0..n)
            .map(|i| {
                let u = i as f64 / OVERSAMPLE as f64;
                if u >= ZERO_CROSSINGS as f64 {
                    return 0.0;
                }
                let sinc = if u == 0.0 { 1.0 } else { (PI * u).sin() / (PI * u) };
                // Blackman window over [-Z, Z], evaluated at u >= 0.
                let x = 0.5 + 0.5 * u / ZERO_CROSSINGS as f64;
                let w = 0.42 - 0.5 * (2.0 * PI * x).cos() + 0.08 * (4.0 * PI * x).cos();
                (sinc * w) as f32
            })
            .collect()
    })
}

/// Blackman-windowed sinc with unit cutoff, `u` in input samples.
#[inline]
pub(crate) fn kernel(u: f64) -> f32 {
    let table = kernel_table();
    let pos = u.abs() * OVERSAMPLE as f64;
    let i = pos as usize;
    if i + 1 >= table.len() {
        return 0.0;
    }
    let frac = (pos - i as f64) as f32;
    table[i] + frac * (table[i + 1] - table[i])
}

/// Reads `samples` at positions `m · factor`, so that playing the result at the
/// original rate scales every frequency by `factor` and the duration by
/// `1 / factor`. For `factor > 1` the kernel cutoff is lowered to `1 / factor`
/// of Nyquist to suppress aliasing.
pub fn resample(samples: &[f32], factor: f64) -> Vec<f32> {
    assert!(factor > 0.0 && factor.is_finite(), "resample factor must be positive");
    if factor == 1.0 || samples.is_empty() {
        return samples.to_vec();
    }
    let n_out = ((samples.len() - 1) as f64 / factor).floor() as usize + 1;
    let cutoff = (1.0 / factor).min(1.0);
    let half_width = ZERO_CROSSINGS as f64 / cutoff;
    let gain = cutoff as f32;
    let n = samples.len() as isize;
    (0..n_out)
        .map(|m| {
            let pos = m as f64 * factor;
            let lo = ((pos - half_width).ceil() as isize).max(0);
            let hi = ((pos + half_width).floor() as isize).min(n - 1);
            let mut acc = 0.0f32;
            for j in lo..=hi {
                acc += samples[j as usize] * kernel((pos - j as f64) * cutoff);
            }
            acc * gain
        })
        .collect()
}
