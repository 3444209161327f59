use image::RgbImage;

use super::raster::Primitive;
use super::{font, ColorMap, OverlayOptions, RenderError};
use crate::model::{BBox, FrameAnnotation, Keypoint, PersonAnnotation};

/// COCO-17 limb connections, zero-based joint indices.
pub const COCO_SKELETON: [(usize, usize); 19] = [
    (15, 13),
    (13, 11),
    (16, 14),
    (14, 12),
    (11, 12),
    (5, 11),
    (6, 12),
    (5, 6),
    (5, 7),
    (6, 8),
    (7, 9),
    (8, 10),
    (1, 2),
    (0, 1),
    (0, 2),
    (1, 3),
    (2, 4),
    (3, 5),
    (4, 6),
];

/// Stroke sizes derived from image height; 3/4/16 px at 360 px.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverlayStyle {
    pub stroke: i64,
    pub radius: i64,
    pub label_height: i64,
}

impl OverlayStyle {
    pub fn for_height(height: u32) -> Self {
        let h = height as i64;
        let scaled = |reference: i64| (reference * h + 180) / 360;
        OverlayStyle {
            stroke: scaled(3).max(1),
            radius: scaled(4).max(1),
            label_height: scaled(16).max(9),
        }
    }

    fn font_scale(&self) -> i64 {
        ((self.label_height - 2) / font::GLYPH_H as i64).max(1)
    }
}

/// Rescales annotation coordinates by `(sx, sy)`.
pub fn scale_annotation(frame: &FrameAnnotation, sx: f64, sy: f64) -> FrameAnnotation {
    let persons = frame
        .persons
        .iter()
        .map(|p| PersonAnnotation {
            player: p.player,
            bbox: BBox {
                x: p.bbox.x * sx,
                y: p.bbox.y * sy,
                width: p.bbox.width * sx,
                height: p.bbox.height * sy,
            },
            keypoints: p
                .keypoints
                .iter()
                .map(|k| Keypoint {
                    x: k.x * sx,
                    y: k.y * sy,
                    confidence: k.confidence,
                })
                .collect(),
        })
        .collect();
    FrameAnnotation {
        timestamp: frame.timestamp,
        frame_ref: frame.frame_ref.clone(),
        persons,
    }
}

fn backing_for(color: [u8; 3]) -> [u8; 3] {
    let luma = 299 * color[0] as u32 + 587 * color[1] as u32 + 114 * color[2] as u32;
    if luma >= 128_000 {
        [0, 0, 0]
    } else {
        [255, 255, 255]
    }
}

/// Drawing list for one frame, in paint order.
pub fn plan_overlay(
    width: u32,
    height: u32,
    annotation: &FrameAnnotation,
    colors: &ColorMap,
    opts: &OverlayOptions,
) -> Result<Vec<Primitive>, RenderError> {
    if width == 0 || height == 0 {
        return Err(RenderError::ZeroArea);
    }
    if !(0.0..=1.0).contains(&opts.keypoint_confidence_threshold) {
        return Err(RenderError::BadThreshold);
    }
    let mut persons: Vec<&PersonAnnotation> = annotation.persons.iter().collect();
    persons.sort_by_key(|p| p.player);
    for p in &persons {
        colors.rgb(p.player).ok_or(RenderError::MissingColor(p.player))?;
    }
    if persons.is_empty() {
        return Ok(Vec::new());
    }
    if !opts.any() {
        return Err(RenderError::NoOverlay);
    }

    let style = OverlayStyle::for_height(height);
    let (w, h) = (width as i64, height as i64);
    let clamp_x = |v: f64| (v.round() as i64).clamp(0, w);
    let clamp_y = |v: f64| (v.round() as i64).clamp(0, h);
    let mut out = Vec::new();

    for person in persons {
        let color = colors.rgb(person.player).expect("checked above");
        let b = &person.bbox;
        let (x0, y0) = (clamp_x(b.x), clamp_y(b.y));
        let (x1, y1) = (clamp_x(b.x + b.width), clamp_y(b.y + b.height));

        if opts.rect && x1 > x0 && y1 > y0 {
            out.push(Primitive::StrokeRect { x0, y0, x1, y1, width: style.stroke, color });
        }

        if opts.point {
            let visible = |k: &Keypoint| k.confidence >= opts.keypoint_confidence_threshold;
            let at = |k: &Keypoint| ((k.x.round() as i64).clamp(0, w - 1), (k.y.round() as i64).clamp(0, h - 1));
            for &(i, j) in &COCO_SKELETON {
                let (ki, kj) = (&person.keypoints[i], &person.keypoints[j]);
                if visible(ki) && visible(kj) {
                    out.push(Primitive::Segment { a: at(ki), b: at(kj), width: style.stroke, color });
                }
            }
            for k in person.keypoints.iter().filter(|k| visible(k)) {
                let (cx, cy) = at(k);
                out.push(Primitive::Disc { cx, cy, radius: style.radius, color });
            }
        }

        if opts.text {
            let label = person.player.label();
            let scale = style.font_scale();
            let strip_h = style.label_height;
            let strip_w = font::text_width(&label, scale as u32) as i64 + 2 * scale;
            let sx = x0.min((w - strip_w).max(0));
            let sy = if y0 >= strip_h { y0 - strip_h } else { y0.min((h - strip_h).max(0)) };
            out.push(Primitive::FillRect {
                x0: sx,
                y0: sy,
                x1: sx + strip_w,
                y1: sy + strip_h,
                color: backing_for(color),
            });
            out.push(Primitive::Text {
                x: sx + scale,
                y: sy + (strip_h - font::GLYPH_H as i64 * scale) / 2,
                scale: scale as u32,
                text: label,
                color,
            });
        }
    }
    Ok(out)
}

/// Draws the enabled overlay elements for every annotated person.
pub fn render_overlay(
    frame_image: &RgbImage,
    annotation: &FrameAnnotation,
    colors: &ColorMap,
    opts: &OverlayOptions,
) -> Result<RgbImage, RenderError> {
    let plan = plan_overlay(frame_image.width(), frame_image.height(), annotation, colors, opts)?;
    let mut out = frame_image.clone();
    for primitive in &plan {
        primitive.paint(&mut out);
    }
    Ok(out)
}
