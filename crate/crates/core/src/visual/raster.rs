//! Integer rasterization of overlay primitives.

use image::{Rgb, RgbImage};

use super::font;

/// A drawable element. Coordinates are pixels; rectangles are half-open.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Primitive {
    FillRect {
        x0: i64,
        y0: i64,
        x1: i64,
        y1: i64,
        color: [u8; 3],
    },
    /// Outline drawn inward from the rectangle edge.
    StrokeRect {
        x0: i64,
        y0: i64,
        x1: i64,
        y1: i64,
        width: i64,
        color: [u8; 3],
    },
    Disc {
        cx: i64,
        cy: i64,
        radius: i64,
        color: [u8; 3],
    },
    Segment {
        a: (i64, i64),
        b: (i64, i64),
        width: i64,
        color: [u8; 3],
    },
    Text {
        x: i64,
        y: i64,
        scale: u32,
        text: String,
        color: [u8; 3],
    },
}

impl Primitive {
    /// Half-open bounding box `(x0, y0, x1, y1)` of every pixel the primitive may touch.
    pub fn bounds(&self) -> (i64, i64, i64, i64) {
        match self {
            Primitive::FillRect { x0, y0, x1, y1, .. } | Primitive::StrokeRect { x0, y0, x1, y1, .. } => {
                (*x0, *y0, *x1, *y1)
            }
            Primitive::Disc { cx, cy, radius, .. } => (cx - radius, cy - radius, cx + radius + 1, cy + radius + 1),
            Primitive::Segment { a, b, width, .. } => {
                let r = (width + 1) / 2;
                (a.0.min(b.0) - r, a.1.min(b.1) - r, a.0.max(b.0) + r + 1, a.1.max(b.1) + r + 1)
            }
            Primitive::Text { x, y, scale, text, .. } => {
                let w = font::text_width(text, *scale) as i64;
                let h = (font::GLYPH_H * scale) as i64;
                (*x, *y, x + w, y + h)
            }
        }
    }

    pub fn paint(&self, img: &mut RgbImage) {
        match self {
            Primitive::FillRect { x0, y0, x1, y1, color } => fill(img, *x0, *y0, *x1, *y1, *color),
            Primitive::StrokeRect { x0, y0, x1, y1, width, color } => {
                let w = (*width).max(1);
                fill(img, *x0, *y0, *x1, (*y0 + w).min(*y1), *color);
                fill(img, *x0, (*y1 - w).max(*y0), *x1, *y1, *color);
                fill(img, *x0, *y0, (*x0 + w).min(*x1), *y1, *color);
                fill(img, (*x1 - w).max(*x0), *y0, *x1, *y1, *color);
            }
            Primitive::Disc { cx, cy, radius, color } => {
                let r2 = radius * radius;
                let (x0, y0, x1, y1) = self.bounds();
                for_each_clipped(img, x0, y0, x1, y1, |x, y| {
                    let (dx, dy) = (x - cx, y - cy);
                    dx * dx + dy * dy <= r2
                }, *color);
            }
            Primitive::Segment { a, b, width, color } => {
                let (x0, y0, x1, y1) = self.bounds();
                let w = (*width).max(1);
                for_each_clipped(img, x0, y0, x1, y1, |x, y| within_segment(*a, *b, (x, y), w), *color);
            }
            Primitive::Text { x, y, scale, text, color } => {
                let s = *scale as i64;
                for (i, c) in text.chars().enumerate() {
                    let rows = font::glyph(c);
                    let gx = x + i as i64 * font::ADVANCE as i64 * s;
                    for (ry, bits) in rows.iter().enumerate() {
                        for rx in 0..font::GLYPH_W as i64 {
                            if bits & (1 << (font::GLYPH_W as i64 - 1 - rx)) != 0 {
                                let px = gx + rx * s;
                                let py = y + ry as i64 * s;
                                fill(img, px, py, px + s, py + s, *color);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Whether pixel `p` lies within `width / 2` of segment `a`–`b`.
fn within_segment(a: (i64, i64), b: (i64, i64), p: (i64, i64), width: i64) -> bool {
    let (dx, dy) = ((b.0 - a.0) as i128, (b.1 - a.1) as i128);
    let (px, py) = ((p.0 - a.0) as i128, (p.1 - a.1) as i128);
    let len2 = dx * dx + dy * dy;
    let w2 = (width as i128) * (width as i128);
    // compare 4 * dist^2 <= width^2
    let dot = px * dx + py * dy;
    if len2 == 0 || dot <= 0 {
        return 4 * (px * px + py * py) <= w2;
    }
    if dot >= len2 {
        let (qx, qy) = ((p.0 - b.0) as i128, (p.1 - b.1) as i128);
        return 4 * (qx * qx + qy * qy) <= w2;
    }
    let cross = px * dy - py * dx;
    4 * cross * cross <= w2 * len2
}

fn clip(img: &RgbImage, x0: i64, y0: i64, x1: i64, y1: i64) -> (u32, u32, u32, u32) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    (
        x0.clamp(0, w) as u32,
        y0.clamp(0, h) as u32,
        x1.clamp(0, w) as u32,
        y1.clamp(0, h) as u32,
    )
}

fn fill(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, color: [u8; 3]) {
    let (x0, y0, x1, y1) = clip(img, x0, y0, x1, y1);
    for y in y0..y1 {
        for x in x0..x1 {
            img.put_pixel(x, y, Rgb(color));
        }
    }
}

fn for_each_clipped(
    img: &mut RgbImage,
    x0: i64,
    y0: i64,
    x1: i64,
    y1: i64,
    inside: impl Fn(i64, i64) -> bool,
    color: [u8; 3],
) {
    let (cx0, cy0, cx1, cy1) = clip(img, x0, y0, x1, y1);
    for y in cy0..cy1 {
        for x in cx0..cx1 {
            if inside(x as i64, y as i64) {
                img.put_pixel(x, y, Rgb(color));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const WHITE: [u8; 3] = [255, 255, 255];

    fn count_painted(img: &RgbImage) -> usize {
        img.pixels().filter(|p| p.0 == WHITE).count()
    }

    #[test]
    fn disc_radius_one_is_a_plus() {
        let mut img = RgbImage::new(5, 5);
        Primitive::Disc { cx: 2, cy: 2, radius: 1, color: WHITE }.paint(&mut img);
        assert_eq!(count_painted(&img), 5);
    }

    #[test]
    fn stroke_rect_is_hollow() {
        let mut img = RgbImage::new(10, 10);
        Primitive::StrokeRect { x0: 1, y0: 1, x1: 9, y1: 9, width: 2, color: WHITE }.paint(&mut img);
        assert_eq!(img.get_pixel(1, 1).0, WHITE);
        assert_eq!(img.get_pixel(2, 5).0, WHITE);
        assert_eq!(img.get_pixel(3, 3).0, [0, 0, 0]);
        assert_eq!(count_painted(&img), 64 - 16);
    }

    #[test]
    fn horizontal_segment_width() {
        let mut img = RgbImage::new(20, 9);
        Primitive::Segment { a: (2, 4), b: (17, 4), width: 3, color: WHITE }.paint(&mut img);
        for x in 2..=17 {
            assert_eq!(img.get_pixel(x, 3).0, WHITE);
            assert_eq!(img.get_pixel(x, 5).0, WHITE);
            assert_eq!(img.get_pixel(x, 6).0, [0, 0, 0]);
        }
    }

    #[test]
    fn clipping_never_panics() {
        let mut img = RgbImage::new(4, 4);
        Primitive::Disc { cx: -3, cy: 10, radius: 5, color: WHITE }.paint(&mut img);
        Primitive::Text { x: 2, y: 2, scale: 3, text: "Player5".into(), color: WHITE }.paint(&mut img);
        Primitive::Segment { a: (-100, -100), b: (100, 100), width: 1, color: WHITE }.paint(&mut img);
        assert!(count_painted(&img) > 0);
    }

    #[test]
    fn painting_stays_inside_bounds() {
        let prims = [
            Primitive::Disc { cx: 10, cy: 12, radius: 4, color: WHITE },
            Primitive::Segment { a: (3, 20), b: (25, 5), width: 3, color: WHITE },
            Primitive::Text { x: 1, y: 1, scale: 2, text: "Player3".into(), color: WHITE },
        ];
        for p in prims {
            let mut img = RgbImage::new(120, 40);
            p.paint(&mut img);
            let (x0, y0, x1, y1) = p.bounds();
            for (x, y, px) in img.enumerate_pixels() {
                if px.0 == WHITE {
                    let (x, y) = (x as i64, y as i64);
                    assert!(x >= x0 && x < x1 && y >= y0 && y < y1, "{p:?} at {x},{y}");
                }
            }
        }
    }
}
