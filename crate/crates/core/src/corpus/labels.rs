//! Plain-text inputs for inference on arbitrary material:
//! phone timings (`phone start_s end_s`) and F0 curves (`time_s f0_hz`).
//! Blank lines and lines starting with `#` are ignored.

use std::path::Path;

use super::phones::PhoneInventory;
use super::{CorpusError, LinguisticFrames};
use crate::dsp::F0Track;

#[derive(Debug, Clone, PartialEq)]
pub struct PhoneInterval {
    pub phone: usize,
    pub start: f64,
    pub end: f64,
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim();
        (!l.is_empty() && !l.starts_with('#')).then(|| (i + 1, l.split_whitespace().collect()))
    })
}

fn parse_f64(tok: &str, line: usize) -> Result<f64, CorpusError> {
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CorpusError::Parse { line, message: format!("`{tok}` is not a number") })
}

pub fn phones_from_text(text: &str, inventory: &PhoneInventory) -> Result<Vec<PhoneInterval>, CorpusError> {
    let mut out = Vec::new();
    for (line, toks) in data_lines(text) {
        if toks.len() != 3 {
            return Err(CorpusError::Parse { line, message: "expected `phone start_s end_s`".into() });
        }
        let phone = inventory.id_of(toks[0])?;
        let start = parse_f64(toks[1], line)?;
        let end = parse_f64(toks[2], line)?;
        if end <= start || start < 0.0 {
            return Err(CorpusError::Parse { line, message: format!("bad interval [{start}, {end}]") });
        }
        out.push(PhoneInterval { phone, start, end });
    }
    if out.is_empty() {
        return Err(CorpusError::Parse { line: 0, message: "no phone intervals".into() });
    }
    Ok(out)
}

pub fn read_phone_timing_file(path: impl AsRef<Path>, inventory: &PhoneInventory) -> Result<Vec<PhoneInterval>, CorpusError> {
    phones_from_text(&std::fs::read_to_string(path)?, inventory)
}

/// Frame labels for `n_frames` frames; boundaries round to the nearest
/// frame and gaps are filled with silence.
pub fn intervals_to_frames(
    intervals: &[PhoneInterval],
    n_frames: usize,
    frame_rate: f64,
    silence: usize,
) -> LinguisticFrames {
    let mut phone_id = vec![silence as u16; n_frames];
    for iv in intervals {
        let a = ((iv.start * frame_rate).round() as usize).min(n_frames);
        let b = ((iv.end * frame_rate).round() as usize).min(n_frames);
        phone_id[a..b].iter_mut().for_each(|p| *p = iv.phone as u16);
    }
    // The final frame sits exactly on the end time; it belongs to the last phone.
    if let Some(last) = intervals.iter().max_by(|x, y| x.end.total_cmp(&y.end)) {
        let b = (last.end * frame_rate).round() as usize;
        if b < n_frames && b + 1 == n_frames {
            phone_id[b] = last.phone as u16;
        }
    }
    LinguisticFrames { phone_id }
}

pub fn f0_from_text(text: &str) -> Result<Vec<(f64, f64)>, CorpusError> {
    let mut points = Vec::new();
    for (line, toks) in data_lines(text) {
        if toks.len() != 2 {
            return Err(CorpusError::Parse { line, message: "expected `time_s f0_hz`".into() });
        }
        let t = parse_f64(toks[0], line)?;
        let f = parse_f64(toks[1], line)?;
        if let Some(&(prev, _)) = points.last() {
            if t <= prev {
                return Err(CorpusError::Parse { line, message: "times must increase".into() });
            }
        }
        points.push((t, f.max(0.0)));
    }
    if points.is_empty() {
        return Err(CorpusError::Parse { line: 0, message: "no F0 points".into() });
    }
    Ok(points)
}

pub fn read_f0_file(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>, CorpusError> {
    f0_from_text(&std::fs::read_to_string(path)?)
}

/// Samples an F0 curve at frame times: linear between two voiced points,
/// otherwise the nearest point.
pub fn f0_points_to_track(points: &[(f64, f64)], n_frames: usize, frame_rate: f64) -> F0Track {
    let mut f0 = Vec::with_capacity(n_frames);
    let mut j = 0;
    for t in 0..n_frames {
        let time = t as f64 / frame_rate;
        while j + 1 < points.len() && points[j + 1].0 <= time {
            j += 1;
        }
        let (t0, f0a) = points[j];
        let v = if j + 1 < points.len() && time >= t0 {
            let (t1, f0b) = points[j + 1];
            if f0a > 0.0 && f0b > 0.0 {
                f0a + (f0b - f0a) * (time - t0) / (t1 - t0)
            } else if time - t0 <= t1 - time {
                f0a
            } else {
                f0b
            }
        } else {
            f0a
        };
        f0.push(v as f32);
    }
    F0Track::from_hz(f0)
}

/// Duration covered by the last phone interval.
pub fn phones_end(intervals: &[PhoneInterval]) -> f64 {
    intervals.iter().map(|i| i.end).fold(0.0, f64::max)
}
