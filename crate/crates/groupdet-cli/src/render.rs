//! Box overlay rendering for qualitative figures.

use image::{Rgb, RgbImage};

use groupdet_core::Detection;

const BOX_COLOR: Rgb<u8> = Rgb([230, 57, 70]);
const LABEL_COLOR: Rgb<u8> = Rgb([255, 255, 255]);
const LABEL_BG: Rgb<u8> = Rgb([230, 57, 70]);

/// 3x5 bitmaps for '0'..'9' and '.', row-major, one bit per pixel.
const GLYPHS: [(char, [u8; 5]); 11] = [
    ('0', [0b111, 0b101, 0b101, 0b101, 0b111]),
    ('1', [0b010, 0b110, 0b010, 0b010, 0b111]),
    ('2', [0b111, 0b001, 0b111, 0b100, 0b111]),
    ('3', [0b111, 0b001, 0b111, 0b001, 0b111]),
    ('4', [0b101, 0b101, 0b111, 0b001, 0b001]),
    ('5', [0b111, 0b100, 0b111, 0b001, 0b111]),
    ('6', [0b111, 0b100, 0b111, 0b101, 0b111]),
    ('7', [0b111, 0b001, 0b010, 0b010, 0b010]),
    ('8', [0b111, 0b101, 0b111, 0b101, 0b111]),
    ('9', [0b111, 0b101, 0b111, 0b001, 0b111]),
    ('.', [0b000, 0b000, 0b000, 0b000, 0b010]),
];

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

fn draw_rect_outline(img: &mut RgbImage, b: [f64; 4], thickness: i64, color: Rgb<u8>) {
    let (x0, y0) = (b[0].round() as i64, b[1].round() as i64);
    let (x1, y1) = ((b[0] + b[2]).round() as i64, (b[1] + b[3]).round() as i64);
    for t in 0..thickness {
        for x in x0..=x1 {
            put(img, x, y0 + t, color);
            put(img, x, y1 - t, color);
        }
        for y in y0..=y1 {
            put(img, x0 + t, y, color);
            put(img, x1 - t, y, color);
        }
    }
}

fn draw_label(img: &mut RgbImage, x: i64, y: i64, text: &str, scale: i64) {
    let w = text.chars().count() as i64 * 4 * scale + 2;
    let h = 5 * scale + 2;
    for dy in 0..h {
        for dx in 0..w {
            put(img, x + dx, y + dy, LABEL_BG);
        }
    }
    let mut cx = x + 1;
    for ch in text.chars() {
        if let Some((_, rows)) = GLYPHS.iter().find(|(g, _)| *g == ch) {
            for (ry, row) in rows.iter().enumerate() {
                for rx in 0..3 {
                    if row & (0b100 >> rx) != 0 {
                        for sy in 0..scale {
                            for sx in 0..scale {
                                put(
                                    img,
                                    cx + rx as i64 * scale + sx,
                                    y + 1 + ry as i64 * scale + sy,
                                    LABEL_COLOR,
                                );
                            }
                        }
                    }
                }
            }
        }
        cx += 4 * scale;
    }
}

/// Draw detection rectangles with their scores onto a copy of the image.
pub fn render_detections(image: &RgbImage, detections: &[Detection]) -> RgbImage {
    let mut out = image.clone();
    for det in detections {
        draw_rect_outline(&mut out, det.bbox, 2, BOX_COLOR);
        let label = format!("{:.2}", det.score);
        let y = (det.bbox[1].round() as i64 - 12).max(0);
        draw_label(&mut out, det.bbox[0].round() as i64, y, &label, 2);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_marks_box_corners() {
        let img = RgbImage::from_pixel(64, 64, Rgb([0, 0, 0]));
        let dets = vec![Detection { bbox: [10.0, 20.0, 30.0, 20.0], score: 0.9, category_id: 1 }];
        let out = render_detections(&img, &dets);
        assert_eq!(*out.get_pixel(10, 20), BOX_COLOR);
        assert_eq!(*out.get_pixel(40, 40), BOX_COLOR);
        // interior untouched
        assert_eq!(*out.get_pixel(25, 30), Rgb([0, 0, 0]));
    }
}
