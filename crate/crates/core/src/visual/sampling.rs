use super::{RenderError, SamplingMode};
use crate::model::{AnnotationTrack, FrameAnnotation};

/// Indices `round(i * (n - 1) / 5)` for `i = 0..6`.
pub fn grid6_indices(n: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    // (n - 1) * i / 5 never lands on .5, so half-up rounding is exact.
    (0..6).map(|i| (2 * i * (n - 1) + 5) / 10).collect()
}

fn nearest(frames: &[FrameAnnotation], target: f64) -> Option<&FrameAnnotation> {
    let mut best: Option<&FrameAnnotation> = None;
    for f in frames {
        let better = match best {
            None => true,
            Some(b) => (f.timestamp - target).abs() < (b.timestamp - target).abs(),
        };
        if better {
            best = Some(f);
        }
    }
    best
}

/// Samples frames within `[t0, t1]` from a timestamp-sorted slice.
///
/// `PerSecond(f)` splits the span into `max(1, floor(duration * f))` bins of
/// width `1/f` (the last bin absorbs the remainder up to `t1`) and keeps the
/// frame nearest each bin midpoint; bins without frames are skipped.
/// `Grid6` returns exactly six frames, repeating some when fewer exist.
pub fn sample_frame_slice(
    frames: &[FrameAnnotation],
    span: (f64, f64),
    mode: SamplingMode,
) -> Result<Vec<FrameAnnotation>, RenderError> {
    let (t0, t1) = span;
    if !(t0 <= t1) || !t0.is_finite() || !t1.is_finite() {
        return Err(RenderError::BadSpan(t0, t1));
    }
    let lo = frames.partition_point(|f| f.timestamp < t0);
    let hi = frames.partition_point(|f| f.timestamp <= t1).max(lo);
    let in_span = &frames[lo..hi];
    if in_span.is_empty() {
        return Err(RenderError::EmptySpan(t0, t1));
    }
    match mode {
        SamplingMode::Grid6 => Ok(grid6_indices(in_span.len()).into_iter().map(|i| in_span[i].clone()).collect()),
        SamplingMode::PerSecond { fps } => {
            if !(fps > 0.0) || !fps.is_finite() {
                return Err(RenderError::BadFps);
            }
            let bin = 1.0 / fps;
            let bins = (((t1 - t0) * fps + 1e-9).floor() as usize).max(1);
            let mut out = Vec::with_capacity(bins);
            for b in 0..bins {
                let start = t0 + b as f64 * bin;
                let last = b + 1 == bins;
                let end = if last { t1 } else { t0 + (b + 1) as f64 * bin };
                let members: Vec<FrameAnnotation> = in_span
                    .iter()
                    .filter(|f| f.timestamp >= start && (f.timestamp < end || (last && f.timestamp <= end)))
                    .cloned()
                    .collect();
                let mid = if last { (start + end) / 2.0 } else { start + bin / 2.0 };
                if let Some(f) = nearest(&members, mid) {
                    out.push(f.clone());
                }
            }
            Ok(out)
        }
    }
}

pub fn sample_frames(
    track: &AnnotationTrack,
    span: (f64, f64),
    mode: SamplingMode,
) -> Result<Vec<FrameAnnotation>, RenderError> {
    sample_frame_slice(track.frames(), span, mode)
}
