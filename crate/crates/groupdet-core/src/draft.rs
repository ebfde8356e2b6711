//! Design-draft ingestion.
//!
//! Parses draft JSON documents (artboards with nested layer trees) into
//! [`DesignDraft`] values, and extracts per-artboard [`ScreenSample`]s with
//! normalized text records and group annotations. Input frames are
//! parent-relative; parsing converts them to absolute artboard coordinates.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{GroupLabel, NormBox, Rect, ScreenSample, TextLayerRecord};

pub const GROUP_MARKER: &str = "#group#";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Text,
    Shape,
    Bitmap,
    GroupContainer,
}

/// A layer with its frame resolved to absolute artboard coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub id: String,
    pub kind: LayerKind,
    pub name: String,
    pub frame: Rect,
    pub text_content: Option<String>,
    pub children: Vec<Layer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artboard {
    pub id: String,
    pub name: String,
    pub width: u32,
    pub height: u32,
    pub image_ref: String,
    pub layers: Vec<Layer>,
}

impl Artboard {
    pub fn rect(&self) -> Rect {
        Rect::new(0.0, 0.0, self.width as f64, self.height as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignDraft {
    pub package_id: String,
    pub artboards: Vec<Artboard>,
}

// Wire schema. Frames here are parent-relative.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDraft {
    package_id: String,
    artboards: Vec<RawArtboard>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArtboard {
    id: String,
    name: String,
    width: i64,
    height: i64,
    image_ref: String,
    layers: Vec<RawLayer>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    id: String,
    kind: String,
    name: String,
    frame: [f64; 4],
    #[serde(skip_serializing_if = "Option::is_none")]
    content: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    children: Option<Vec<RawLayer>>,
}

fn convert_layer(raw: RawLayer, origin: (f64, f64)) -> Result<Layer> {
    let kind = match raw.kind.as_str() {
        "text" => LayerKind::Text,
        "shape" => LayerKind::Shape,
        "bitmap" => LayerKind::Bitmap,
        "group" => LayerKind::GroupContainer,
        other => {
            return Err(Error::Schema(format!(
                "layer {}: unknown kind {other:?}",
                raw.id
            )))
        }
    };
    let [x, y, w, h] = raw.frame;
    if !(w >= 0.0 && h >= 0.0) {
        return Err(Error::Schema(format!(
            "layer {}: frame has negative extent [{x}, {y}, {w}, {h}]",
            raw.id
        )));
    }
    match (kind, &raw.content) {
        (LayerKind::Text, None) => {
            return Err(Error::Schema(format!(
                "layer {}: kind=text requires content",
                raw.id
            )))
        }
        (LayerKind::Text, Some(_)) => {}
        (_, Some(_)) => {
            return Err(Error::Schema(format!(
                "layer {}: content only allowed on text layers",
                raw.id
            )))
        }
        (_, None) => {}
    }
    let children_raw = raw.children.unwrap_or_default();
    if kind != LayerKind::GroupContainer && !children_raw.is_empty() {
        return Err(Error::Schema(format!(
            "layer {}: children only allowed on group containers",
            raw.id
        )));
    }
    let frame = Rect::new(origin.0 + x, origin.1 + y, w, h);
    let children = children_raw
        .into_iter()
        .map(|c| convert_layer(c, (frame.x, frame.y)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Layer {
        id: raw.id,
        kind,
        name: raw.name,
        frame,
        text_content: raw.content,
        children,
    })
}

/// Parse a draft JSON document. Frames come back absolute.
pub fn parse_draft(document: &[u8]) -> Result<DesignDraft> {
    let raw: RawDraft =
        serde_json::from_slice(document).map_err(|e| Error::Schema(e.to_string()))?;
    if raw.artboards.is_empty() {
        return Err(Error::EmptyDraft);
    }
    let mut seen = std::collections::HashSet::new();
    let mut artboards = Vec::with_capacity(raw.artboards.len());
    for ab in raw.artboards {
        if !seen.insert(ab.id.clone()) {
            return Err(Error::Schema(format!("duplicate artboard id {:?}", ab.id)));
        }
        if ab.width <= 0 || ab.height <= 0 {
            return Err(Error::Schema(format!(
                "artboard {}: non-positive size {}x{}",
                ab.id, ab.width, ab.height
            )));
        }
        let layers = ab
            .layers
            .into_iter()
            .map(|l| convert_layer(l, (0.0, 0.0)))
            .collect::<Result<Vec<_>>>()?;
        artboards.push(Artboard {
            id: ab.id,
            name: ab.name,
            width: ab.width as u32,
            height: ab.height as u32,
            image_ref: ab.image_ref,
            layers,
        });
    }
    Ok(DesignDraft {
        package_id: raw.package_id,
        artboards,
    })
}

fn layer_to_raw(layer: &Layer, origin: (f64, f64)) -> RawLayer {
    let rel = layer.frame.translate(-origin.0, -origin.1);
    RawLayer {
        id: layer.id.clone(),
        kind: match layer.kind {
            LayerKind::Text => "text",
            LayerKind::Shape => "shape",
            LayerKind::Bitmap => "bitmap",
            LayerKind::GroupContainer => "group",
        }
        .to_string(),
        name: layer.name.clone(),
        frame: [rel.x, rel.y, rel.w, rel.h],
        content: layer.text_content.clone(),
        children: if layer.children.is_empty() {
            None
        } else {
            Some(
                layer
                    .children
                    .iter()
                    .map(|c| layer_to_raw(c, (layer.frame.x, layer.frame.y)))
                    .collect(),
            )
        },
    }
}

/// Serialize back to the wire schema (frames converted to parent-relative).
pub fn serialize_draft(draft: &DesignDraft) -> Vec<u8> {
    let raw = RawDraft {
        package_id: draft.package_id.clone(),
        artboards: draft
            .artboards
            .iter()
            .map(|ab| RawArtboard {
                id: ab.id.clone(),
                name: ab.name.clone(),
                width: ab.width as i64,
                height: ab.height as i64,
                image_ref: ab.image_ref.clone(),
                layers: ab.layers.iter().map(|l| layer_to_raw(l, (0.0, 0.0))).collect(),
            })
            .collect(),
    };
    serde_json::to_vec_pretty(&raw).expect("draft serialization cannot fail")
}

fn walk<'a>(layers: &'a [Layer], f: &mut impl FnMut(&'a Layer)) {
    for layer in layers {
        f(layer);
        walk(&layer.children, f);
    }
}

fn leaf_frames(layer: &Layer, out: &mut Vec<Rect>) {
    if layer.kind == LayerKind::GroupContainer {
        for c in &layer.children {
            leaf_frames(c, out);
        }
    } else {
        out.push(layer.frame);
    }
}

/// Collect one [`GroupLabel`] per layer whose name carries the group marker.
///
/// The label box is the union of the container's leaf descendant frames,
/// clipped to the artboard. Container frames themselves are not trusted.
/// Containers with no leaf descendants, or whose union ends up outside the
/// artboard, are skipped and reported in the warnings list.
pub fn collect_group_labels(artboard: &Artboard) -> (Vec<GroupLabel>, Vec<String>) {
    let mut labels = Vec::new();
    let mut warnings = Vec::new();
    let bounds = artboard.rect();
    walk(&artboard.layers, &mut |layer| {
        if !layer.name.contains(GROUP_MARKER) {
            return;
        }
        let mut frames = Vec::new();
        for c in &layer.children {
            leaf_frames(c, &mut frames);
        }
        let Some(first) = frames.first().copied() else {
            warnings.push(format!(
                "group container {:?} ({}) has no descendants, skipped",
                layer.name, layer.id
            ));
            return;
        };
        let union = frames.iter().skip(1).fold(first, |acc, r| acc.union(r));
        let clipped = union.clip(bounds.w, bounds.h);
        if clipped.area() <= 0.0 {
            warnings.push(format!(
                "group container {:?} ({}) lies outside the artboard, skipped",
                layer.name, layer.id
            ));
            return;
        }
        labels.push(GroupLabel::new(clipped));
    });
    (labels, warnings)
}

/// Why an artboard produced no sample.
#[derive(Debug)]
pub enum SkipReason {
    MissingImage(std::path::PathBuf),
}

#[derive(Debug, Default)]
pub struct IngestReport {
    pub skipped_artboards: Vec<(String, SkipReason)>,
    pub warnings: Vec<String>,
}

/// Load one [`ScreenSample`] per artboard whose bitmap exists on disk.
///
/// `root` resolves relative `image_ref` paths. Artboards without a bitmap are
/// skipped (reported), a bitmap with the wrong size is an error. Text layers
/// fully outside the artboard are dropped; partially outside are clamped.
pub fn extract_screen_samples(
    draft: &DesignDraft,
    root: &Path,
) -> Result<(Vec<ScreenSample>, IngestReport)> {
    let mut report = IngestReport::default();
    let mut samples = Vec::new();
    for ab in &draft.artboards {
        let path = root.join(&ab.image_ref);
        if !path.is_file() {
            report
                .skipped_artboards
                .push((ab.id.clone(), SkipReason::MissingImage(path)));
            continue;
        }
        let image = image::open(&path)?.to_rgb8();
        if image.width() != ab.width || image.height() != ab.height {
            return Err(Error::ImageMismatch {
                path,
                artboard: ab.id.clone(),
                got_w: image.width(),
                got_h: image.height(),
                want_w: ab.width,
                want_h: ab.height,
            });
        }
        let (w, h) = (ab.width as f64, ab.height as f64);
        let bounds = ab.rect();
        let mut texts = Vec::new();
        walk(&ab.layers, &mut |layer| {
            if layer.kind != LayerKind::Text {
                return;
            }
            if layer.frame.intersect(&bounds).is_none() {
                return;
            }
            let bbox = NormBox::new(
                (layer.frame.x / w).clamp(0.0, 1.0),
                (layer.frame.y / h).clamp(0.0, 1.0),
                (layer.frame.right() / w).clamp(0.0, 1.0),
                (layer.frame.bottom() / h).clamp(0.0, 1.0),
            );
            texts.push(TextLayerRecord {
                content: layer.text_content.clone().unwrap_or_default(),
                bbox,
            });
        });
        let (groups, warnings) = collect_group_labels(ab);
        report.warnings.extend(warnings);
        samples.push(ScreenSample {
            sample_id: format!("{}-{}", draft.package_id, ab.id),
            package_id: draft.package_id.clone(),
            width: ab.width,
            height: ab.height,
            image,
            texts,
            groups,
        });
    }
    Ok((samples, report))
}
