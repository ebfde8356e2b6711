//! COCO-style dataset manifest with a text sidecar.
//!
//! On disk a dataset directory holds `annotations.json` (images, annotations,
//! categories), `texts.json` (per-image normalized text records), and an
//! `images/` directory of PNG slices.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::slicer::SliceSample;
use crate::types::NormBox;

pub const ANNOTATIONS_FILE: &str = "annotations.json";
pub const TEXTS_FILE: &str = "texts.json";
pub const IMAGES_DIR: &str = "images";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CocoImage {
    pub id: i64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CocoAnnotation {
    pub id: i64,
    pub image_id: i64,
    pub category_id: u32,
    /// `[x, y, w, h]` in pixels.
    pub bbox: [f64; 4],
    pub area: f64,
    pub iscrowd: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CocoCategory {
    pub id: u32,
    pub name: String,
}

/// One sidecar text record: content plus normalized `[x_min,y_min,x_max,y_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextRecordJson {
    pub content: String,
    pub bbox: [f64; 4],
}

impl TextRecordJson {
    pub fn norm_box(&self) -> NormBox {
        NormBox::new(self.bbox[0], self.bbox[1], self.bbox[2], self.bbox[3])
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
    #[serde(skip)]
    pub texts: BTreeMap<i64, Vec<TextRecordJson>>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let image_ids: HashSet<i64> = self.images.iter().map(|i| i.id).collect();
        if image_ids.len() != self.images.len() {
            return Err(Error::Schema("duplicate image ids".into()));
        }
        let mut ann_ids = HashSet::new();
        for ann in &self.annotations {
            if !ann_ids.insert(ann.id) {
                return Err(Error::Schema(format!("duplicate annotation id {}", ann.id)));
            }
            if !image_ids.contains(&ann.image_id) {
                return Err(Error::Schema(format!(
                    "annotation {} references unknown image {}",
                    ann.id, ann.image_id
                )));
            }
        }
        for id in self.texts.keys() {
            if !image_ids.contains(id) {
                return Err(Error::Schema(format!("texts reference unknown image {id}")));
            }
        }
        Ok(())
    }
}

pub fn slice_file_name(slice: &SliceSample) -> String {
    format!("{}_{}.png", slice.parent_id, slice.window.offset)
}

/// Assemble a manifest from slices, assigning sequential ids from 1.
pub fn build_manifest(slices: &[SliceSample]) -> DatasetManifest {
    let mut manifest = DatasetManifest {
        categories: vec![CocoCategory {
            id: crate::GROUP_CATEGORY_ID,
            name: "group".to_string(),
        }],
        ..Default::default()
    };
    let mut ann_id = 1i64;
    for (idx, slice) in slices.iter().enumerate() {
        let image_id = idx as i64 + 1;
        manifest.images.push(CocoImage {
            id: image_id,
            file_name: slice_file_name(slice),
            width: slice.window.side,
            height: slice.window.side,
        });
        for group in &slice.groups {
            manifest.annotations.push(CocoAnnotation {
                id: ann_id,
                image_id,
                category_id: group.category_id,
                bbox: [group.bbox.x, group.bbox.y, group.bbox.w, group.bbox.h],
                area: group.bbox.w * group.bbox.h,
                iscrowd: 0,
            });
            ann_id += 1;
        }
        let records: Vec<TextRecordJson> = slice
            .texts
            .iter()
            .map(|t| TextRecordJson {
                content: t.content.clone(),
                bbox: [t.bbox.x_min, t.bbox.y_min, t.bbox.x_max, t.bbox.y_max],
            })
            .collect();
        if !records.is_empty() {
            manifest.texts.insert(image_id, records);
        }
    }
    manifest
}

/// Write `annotations.json` and `texts.json` into `dir`.
pub fn write_coco(manifest: &DatasetManifest, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let ann = serde_json::to_vec_pretty(&manifest)?;
    fs::write(dir.join(ANNOTATIONS_FILE), ann)?;
    let texts = serde_json::to_vec_pretty(&manifest.texts)?;
    fs::write(dir.join(TEXTS_FILE), texts)?;
    Ok(())
}

/// Read a manifest back; inverse of [`write_coco`].
pub fn read_coco(dir: &Path) -> Result<DatasetManifest> {
    let ann = fs::read(dir.join(ANNOTATIONS_FILE))?;
    let mut manifest: DatasetManifest =
        serde_json::from_slice(&ann).map_err(|e| Error::Schema(e.to_string()))?;
    let texts_path = dir.join(TEXTS_FILE);
    if texts_path.is_file() {
        let texts = fs::read(texts_path)?;
        manifest.texts =
            serde_json::from_slice(&texts).map_err(|e| Error::Schema(e.to_string()))?;
    }
    manifest.validate()?;
    Ok(manifest)
}

/// Write slices as a full dataset directory: PNGs plus both JSON files.
pub fn export_split(slices: &[SliceSample], dir: &Path) -> Result<DatasetManifest> {
    let manifest = build_manifest(slices);
    let img_dir = dir.join(IMAGES_DIR);
    fs::create_dir_all(&img_dir)?;
    for slice in slices {
        slice.image.save(img_dir.join(slice_file_name(slice)))?;
    }
    write_coco(&manifest, dir)?;
    Ok(manifest)
}

/// A manifest together with decoded slice pixels, ready for training.
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub images: Vec<RgbImage>,
}

impl LoadedDataset {
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest = read_coco(dir)?;
        let mut images = Vec::with_capacity(manifest.images.len());
        for info in &manifest.images {
            let path = dir.join(IMAGES_DIR).join(&info.file_name);
            if !path.is_file() {
                return Err(Error::MissingImage(path));
            }
            images.push(image::open(path)?.to_rgb8());
        }
        Ok(LoadedDataset { manifest, images })
    }

    /// Build directly from in-memory slices (used by tests and small runs).
    pub fn from_slices(slices: &[SliceSample]) -> Self {
        LoadedDataset {
            manifest: build_manifest(slices),
            images: slices.iter().map(|s| s.image.clone()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = DatasetManifest {
            categories: vec![CocoCategory { id: 1, name: "group".into() }],
            ..Default::default()
        };
        write_coco(&manifest, dir.path()).unwrap();
        let back = read_coco(dir.path()).unwrap();
        assert_eq!(manifest, back);
        assert!(back.annotations.is_empty());
    }

    #[test]
    fn area_is_width_times_height() {
        let ann = CocoAnnotation {
            id: 1,
            image_id: 1,
            category_id: 1,
            bbox: [0.0, 0.0, 10.0, 20.0],
            area: 200.0,
            iscrowd: 0,
        };
        assert_eq!(ann.area, ann.bbox[2] * ann.bbox[3]);
    }

    #[test]
    fn unknown_annotation_image_rejected() {
        let manifest = DatasetManifest {
            images: vec![CocoImage { id: 1, file_name: "a.png".into(), width: 8, height: 8 }],
            annotations: vec![CocoAnnotation {
                id: 1,
                image_id: 99,
                category_id: 1,
                bbox: [0.0, 0.0, 1.0, 1.0],
                area: 1.0,
                iscrowd: 0,
            }],
            categories: vec![],
            texts: BTreeMap::new(),
        };
        assert!(manifest.validate().is_err());
    }
}
