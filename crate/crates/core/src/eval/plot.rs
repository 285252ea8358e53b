use std::path::Path;

use image::{Rgb, RgbImage};

use super::EvalError;
use crate::dsp::MelSpectrogram;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotOptions {
    /// Pixels per frame along the time axis.
    pub frame_px: u32,
    /// Pixels per band along the frequency axis.
    pub band_px: u32,
}

impl Default for PlotOptions {
    fn default() -> Self {
        PlotOptions { frame_px: 1, band_px: 3 }
    }
}

const ANCHORS: [[f32; 3]; 5] = [
    [13.0, 8.0, 135.0],
    [126.0, 3.0, 168.0],
    [204.0, 71.0, 120.0],
    [248.0, 149.0, 64.0],
    [240.0, 249.0, 33.0],
];

fn colormap(x: f32) -> Rgb<u8> {
    let p = x.clamp(0.0, 1.0) * (ANCHORS.len() - 1) as f32;
    let i = (p.floor() as usize).min(ANCHORS.len() - 2);
    let w = p - i as f32;
    let (a, b) = (ANCHORS[i], ANCHORS[i + 1]);
    Rgb([0, 1, 2].map(|c| (a[c] + w * (b[c] - a[c])).round() as u8))
}

/// One pixel per (frame, band); low bands at the bottom. Colours span the
/// value range of `mel`, so a constant input gives a uniform image.
pub fn render_heatmap(mel: &MelSpectrogram) -> RgbImage {
    let (frames, bands) = (mel.n_frames() as u32, mel.n_bands() as u32);
    let (lo, hi) = mel.values.data.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let span = hi - lo;
    RgbImage::from_fn(frames, bands, |x, y| {
        let v = mel.values.get(x as usize, (bands - 1 - y) as usize);
        colormap(if span > 0.0 { (v - lo) / span } else { 0.0 })
    })
}

/// 5×7 bitmaps, one byte per row, high bit on the left.
fn glyph(c: char) -> [u8; 7] {
    match c {
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        '(' => [0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02],
        ')' => [0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08],
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'D' => [0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        _ => [0; 7],
    }
}

const INK: Rgb<u8> = Rgb([0, 0, 0]);
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);

fn text_width(s: &str) -> u32 {
    s.chars().count() as u32 * 6
}

fn draw_text(img: &mut RgbImage, x: u32, y: u32, s: &str) {
    for (i, c) in s.chars().enumerate() {
        for (row, bits) in glyph(c).iter().enumerate() {
            for col in 0..5 {
                if bits & (0x10 >> col) != 0 {
                    let (px, py) = (x + i as u32 * 6 + col, y + row as u32);
                    if px < img.width() && py < img.height() {
                        img.put_pixel(px, py, INK);
                    }
                }
            }
        }
    }
}

/// Smallest 1-2-5 step whose ticks are at least `min_px` apart.
fn tick_step(px_per_unit: f64, min_px: f64) -> f64 {
    let mut base = 1e-3;
    loop {
        for m in [1.0, 2.0, 5.0] {
            if base * m * px_per_unit >= min_px {
                return base * m;
            }
        }
        base *= 10.0;
    }
}

fn format_tick(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 { 0 } else { (-step.log10()).ceil() as usize };
    format!("{v:.decimals$}")
}

/// Heatmap with a time axis in seconds and a mel-band axis.
pub fn plot_mel(
    mel: &MelSpectrogram,
    frame_rate: f64,
    options: &PlotOptions,
    path: impl AsRef<Path>,
) -> Result<(), EvalError> {
    let heat = render_heatmap(mel);
    let (fw, bw) = (options.frame_px.max(1), options.band_px.max(1));
    let (w, h) = (heat.width() * fw, heat.height() * bw);
    let (left, top, right, bottom) = (40u32, 16u32, 16u32, 30u32);
    let mut img = RgbImage::from_pixel(left + w + right, top + h + bottom, BACKGROUND);
    for y in 0..h {
        for x in 0..w {
            img.put_pixel(left + x, top + y, *heat.get_pixel(x / fw, y / bw));
        }
    }
    for x in left - 1..=left + w {
        img.put_pixel(x, top + h, INK);
    }
    for y in top..=top + h {
        img.put_pixel(left - 1, y, INK);
    }
    let px_per_s = frame_rate * fw as f64;
    let step = tick_step(px_per_s, 50.0);
    let duration = mel.n_frames() as f64 / frame_rate;
    let mut t = 0.0;
    while t <= duration + 1e-9 {
        let x = left + (t * px_per_s).round() as u32;
        for dy in 1..=3 {
            img.put_pixel(x.min(img.width() - 1), top + h + dy, INK);
        }
        let label = format_tick(t, step);
        draw_text(&mut img, x.saturating_sub(text_width(&label) / 2), top + h + 6, &label);
        t += step;
    }
    let band_step = tick_step(bw as f64, 20.0).max(1.0) as usize;
    for b in (0..mel.n_bands()).step_by(band_step) {
        let y = top + h - (b as u32 * bw) - bw / 2 - 1;
        for dx in 2..=4 {
            img.put_pixel(left - dx, y, INK);
        }
        let label = b.to_string();
        draw_text(&mut img, (left - 6).saturating_sub(text_width(&label)), y.saturating_sub(3), &label);
    }
    let xlabel = "TIME (S)";
    draw_text(&mut img, left + w / 2 - text_width(xlabel).min(w) / 2, top + h + 18, xlabel);
    draw_text(&mut img, 2, 4, "MEL BAND");
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}
