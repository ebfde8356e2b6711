//! Shared geometry and sample types used across the pipeline.

use image::RgbImage;
use serde::{Deserialize, Serialize};

/// Axis-aligned rectangle in pixel coordinates, top-left origin, y down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Rect { x, y, w, h }
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Smallest rectangle containing both `self` and `other`.
    pub fn union(&self, other: &Rect) -> Rect {
        let x0 = self.x.min(other.x);
        let y0 = self.y.min(other.y);
        let x1 = self.right().max(other.right());
        let y1 = self.bottom().max(other.bottom());
        Rect::new(x0, y0, x1 - x0, y1 - y0)
    }

    /// Overlapping region, if the rectangles overlap with positive area.
    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if x1 > x0 && y1 > y0 {
            Some(Rect::new(x0, y0, x1 - x0, y1 - y0))
        } else {
            None
        }
    }

    /// Clip to `[0,w] x [0,h]`; the result may have zero area.
    pub fn clip(&self, w: f64, h: f64) -> Rect {
        let x0 = self.x.clamp(0.0, w);
        let y0 = self.y.clamp(0.0, h);
        let x1 = self.right().clamp(0.0, w);
        let y1 = self.bottom().clamp(0.0, h);
        Rect::new(x0, y0, (x1 - x0).max(0.0), (y1 - y0).max(0.0))
    }

    /// True when `inner` lies entirely inside `self` (boundary inclusive).
    pub fn contains_rect(&self, inner: &Rect) -> bool {
        self.x <= inner.x
            && self.y <= inner.y
            && inner.right() <= self.right()
            && inner.bottom() <= self.bottom()
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Rect {
        Rect::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    /// Corner form `[x_min, y_min, x_max, y_max]`.
    pub fn to_xyxy(&self) -> [f64; 4] {
        [self.x, self.y, self.right(), self.bottom()]
    }

    pub fn from_xyxy(b: [f64; 4]) -> Rect {
        Rect::new(b[0], b[1], b[2] - b[0], b[3] - b[1])
    }
}

/// Box in normalized coordinates, each coordinate in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl NormBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        NormBox { x_min, y_min, x_max, y_max }
    }

    pub fn is_valid(&self) -> bool {
        0.0 <= self.x_min
            && self.x_min <= self.x_max
            && self.x_max <= 1.0
            && 0.0 <= self.y_min
            && self.y_min <= self.y_max
            && self.y_max <= 1.0
    }

    /// Scale into a pixel-space rectangle of the given extent.
    pub fn to_rect(&self, width: f64, height: f64) -> Rect {
        Rect::new(
            self.x_min * width,
            self.y_min * height,
            (self.x_max - self.x_min) * width,
            (self.y_max - self.y_min) * height,
        )
    }
}

/// One text layer: its content and normalized position on the screen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextLayerRecord {
    pub content: String,
    pub bbox: NormBox,
}

/// Ground-truth group annotation in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupLabel {
    pub bbox: Rect,
    pub category_id: u32,
}

impl GroupLabel {
    pub fn new(bbox: Rect) -> Self {
        GroupLabel { bbox, category_id: crate::GROUP_CATEGORY_ID }
    }
}

/// One rendered UI screen with its text records and group annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreenSample {
    pub sample_id: String,
    pub package_id: String,
    pub width: u32,
    pub height: u32,
    pub image: RgbImage,
    pub texts: Vec<TextLayerRecord>,
    pub groups: Vec<GroupLabel>,
}

/// A scored detection in pixel coordinates, bbox as `[x, y, w, h]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: [f64; 4],
    pub score: f64,
    pub category_id: u32,
}

impl Detection {
    pub fn rect(&self) -> Rect {
        Rect::new(self.bbox[0], self.bbox[1], self.bbox[2], self.bbox[3])
    }
}
