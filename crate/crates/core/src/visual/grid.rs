use image::{GenericImage, Rgb, RgbImage};

use super::RenderError;

pub const GRID_COLS: u32 = 3;
pub const GRID_ROWS: u32 = 2;
pub const GRID_CELLS: usize = (GRID_COLS * GRID_ROWS) as usize;
const SEPARATOR: u32 = 2;

/// Tiles six equal-size frames into a 3×2 image, row-major, with 2-px black
/// separators centred on the interior cell boundaries.
pub fn compose_grid(frames: &[RgbImage]) -> Result<RgbImage, RenderError> {
    if frames.len() != GRID_CELLS {
        return Err(RenderError::GridCount(frames.len()));
    }
    let (w, h) = frames[0].dimensions();
    if frames.iter().any(|f| f.dimensions() != (w, h)) {
        return Err(RenderError::GridSize);
    }
    if w == 0 || h == 0 {
        return Err(RenderError::ZeroArea);
    }
    let mut out = RgbImage::new(w * GRID_COLS, h * GRID_ROWS);
    for (i, frame) in frames.iter().enumerate() {
        let (r, c) = (i as u32 / GRID_COLS, i as u32 % GRID_COLS);
        out.copy_from(frame, c * w, r * h).expect("cell fits");
    }
    let black = Rgb([0, 0, 0]);
    for c in 1..GRID_COLS {
        let x_mid = c * w;
        for x in x_mid.saturating_sub(SEPARATOR / 2)..(x_mid + SEPARATOR / 2).min(out.width()) {
            for y in 0..out.height() {
                out.put_pixel(x, y, black);
            }
        }
    }
    for r in 1..GRID_ROWS {
        let y_mid = r * h;
        for y in y_mid.saturating_sub(SEPARATOR / 2)..(y_mid + SEPARATOR / 2).min(out.height()) {
            for x in 0..out.width() {
                out.put_pixel(x, y, black);
            }
        }
    }
    Ok(out)
}
