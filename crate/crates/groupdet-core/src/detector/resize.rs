//! Input resizing: short side to target, long side capped, aspect preserved.

use image::{imageops, RgbImage};
use ndarray::Array3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResizePlan {
    pub in_w: u32,
    pub in_h: u32,
    pub out_w: u32,
    pub out_h: u32,
}

impl ResizePlan {
    pub fn new(in_w: u32, in_h: u32, short_target: u32, long_cap: u32) -> Self {
        let short = in_w.min(in_h) as f64;
        let long = in_w.max(in_h) as f64;
        let scale = (short_target as f64 / short).min(long_cap as f64 / long);
        let out_w = ((in_w as f64 * scale).round() as u32).max(1);
        let out_h = ((in_h as f64 * scale).round() as u32).max(1);
        ResizePlan { in_w, in_h, out_w, out_h }
    }

    pub fn scale_x(&self) -> f64 {
        self.out_w as f64 / self.in_w as f64
    }

    pub fn scale_y(&self) -> f64 {
        self.out_h as f64 / self.in_h as f64
    }

    /// Map an original-coordinates box into resized coordinates.
    pub fn scale_box(&self, b: [f64; 4]) -> [f64; 4] {
        [
            b[0] * self.scale_x(),
            b[1] * self.scale_y(),
            b[2] * self.scale_x(),
            b[3] * self.scale_y(),
        ]
    }

    /// Map a resized-coordinates box back to the original image.
    pub fn unscale_box(&self, b: [f64; 4]) -> [f64; 4] {
        [
            b[0] / self.scale_x(),
            b[1] / self.scale_y(),
            b[2] / self.scale_x(),
            b[3] / self.scale_y(),
        ]
    }
}

/// Resize and convert to a `(3, H, W)` array with values in `[-1, 1]`.
pub fn image_to_input(img: &RgbImage, plan: &ResizePlan) -> Array3<f64> {
    let resized = if plan.out_w == plan.in_w && plan.out_h == plan.in_h {
        img.clone()
    } else {
        imageops::resize(img, plan.out_w, plan.out_h, imageops::FilterType::Triangle)
    };
    let (w, h) = (plan.out_w as usize, plan.out_h as usize);
    let mut out = Array3::<f64>::zeros((3, h, w));
    for (x, y, px) in resized.enumerate_pixels() {
        for c in 0..3 {
            out[(c, y as usize, x as usize)] = px.0[c] as f64 / 127.5 - 1.0;
        }
    }
    out
}
