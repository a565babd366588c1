use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{codec, rasterize_polygons, BinaryMask, ImageFrame, PolygonAnnotation};

pub const METADATA_FILE: &str = "metadata.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gesture {
    Exhibiting,
    Pointing,
    Presenting,
    Touching,
}

impl Gesture {
    pub const ALL: [Gesture; 4] = [Gesture::Exhibiting, Gesture::Pointing, Gesture::Presenting, Gesture::Touching];

    pub fn as_str(self) -> &'static str {
        match self {
            Gesture::Exhibiting => "exhibiting",
            Gesture::Pointing => "pointing",
            Gesture::Presenting => "presenting",
            Gesture::Touching => "touching",
        }
    }
}

impl fmt::Display for Gesture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gesture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Gesture::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown gesture {s:?}")))
    }
}

/// Ground truth of a record: a mask image or polygons in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaskSource {
    Path(PathBuf),
    Polygon(PolygonAnnotation),
}

/// One entry of `metadata.json`; paths are relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataEntry {
    pub image: PathBuf,
    pub mask: Option<MaskSource>,
    pub participant: String,
    pub gesture: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HuTicsRecord {
    pub image_path: PathBuf,
    /// Image path relative to `images/` without extension, e.g.
    /// `p001/pointing_0`; frames load with it as their source id.
    pub frame_id: String,
    pub mask: Option<MaskSource>,
    pub participant_id: String,
    pub gesture: Gesture,
}

impl HuTicsRecord {
    /// Identifier used in reports and error messages.
    pub fn id(&self) -> String {
        self.image_path.display().to_string()
    }

    pub fn load_frame(&self) -> Result<ImageFrame> {
        codec::load_frame(&self.image_path, self.frame_id.clone())
    }

    /// The object mask at `width` x `height`.
    pub fn load_mask(&self, width: u32, height: u32) -> Result<BinaryMask> {
        match &self.mask {
            None => Err(Error::Validation {
                item: self.id(),
                reason: "record has no object mask".into(),
            }),
            Some(MaskSource::Path(p)) => {
                let m = codec::load_mask(p)?;
                if m.dims() != (width, height) {
                    return Err(Error::Validation {
                        item: self.id(),
                        reason: format!("mask is {:?}, image is {:?}", m.dims(), (width, height)),
                    });
                }
                Ok(m)
            }
            Some(MaskSource::Polygon(poly)) => {
                rasterize_polygons(&poly.clone().for_record(self.id()), width, height)
            }
        }
    }

    /// Frame and object mask, checked against each other.
    pub fn load_pair(&self) -> Result<(ImageFrame, BinaryMask)> {
        let frame = self.load_frame()?;
        let mask = self.load_mask(frame.width(), frame.height())?;
        Ok((frame, mask))
    }
}

/// One rejected entry of `metadata.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationIssue {
    pub item: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadReport {
    pub records: Vec<HuTicsRecord>,
    pub issues: Vec<ValidationIssue>,
    pub per_participant: BTreeMap<String, usize>,
    pub per_gesture: BTreeMap<Gesture, usize>,
}

impl LoadReport {
    pub fn participants(&self) -> usize {
        self.per_participant.len()
    }
}

fn frame_id_of(image: &Path) -> String {
    let rel = image.strip_prefix("images").unwrap_or(image);
    rel.with_extension("")
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn check_entry(root: &Path, index: usize, entry: MetadataEntry) -> std::result::Result<HuTicsRecord, ValidationIssue> {
    let item = format!("entry {index} ({})", entry.image.display());
    let issue = |reason: String| ValidationIssue {
        item: item.clone(),
        reason,
    };
    let gesture: Gesture = entry.gesture.parse().map_err(|e: Error| issue(e.to_string()))?;
    if entry.participant.is_empty() {
        return Err(issue("empty participant id".into()));
    }
    let mask = match entry.mask {
        Some(MaskSource::Path(p)) => Some(MaskSource::Path(root.join(p))),
        other => other,
    };
    let record = HuTicsRecord {
        image_path: root.join(&entry.image),
        frame_id: frame_id_of(&entry.image),
        mask,
        participant_id: entry.participant,
        gesture,
    };
    record.load_pair().map_err(|e| issue(e.to_string()))?;
    Ok(record)
}

/// Reads `root/metadata.json` and validates every entry (files exist and
/// decode, gesture known, mask matches the image). Invalid entries are
/// reported, not fatal; only an empty result is an error. Records come back
/// sorted by participant, then image path.
pub fn load_hutics(root: &Path) -> Result<LoadReport> {
    let meta_path = root.join(METADATA_FILE);
    if !meta_path.is_file() {
        return Err(Error::Dataset(format!("no records: {} not found", meta_path.display())));
    }
    let entries: Vec<MetadataEntry> = serde_json::from_slice(&codec::read_file(&meta_path)?)?;
    let checked: Vec<_> = entries
        .into_par_iter()
        .enumerate()
        .map(|(i, e)| check_entry(root, i, e))
        .collect();
    let mut records = Vec::new();
    let mut issues = Vec::new();
    for c in checked {
        match c {
            Ok(r) => records.push(r),
            Err(i) => issues.push(i),
        }
    }
    for i in &issues {
        log::warn!("skipping {}: {}", i.item, i.reason);
    }
    if records.is_empty() {
        return Err(Error::Dataset(format!("no records: {} entries rejected", issues.len())));
    }
    records.sort_by(|a, b| {
        a.participant_id
            .cmp(&b.participant_id)
            .then_with(|| a.image_path.cmp(&b.image_path))
    });
    let mut per_participant = BTreeMap::new();
    let mut per_gesture = BTreeMap::new();
    for r in &records {
        *per_participant.entry(r.participant_id.clone()).or_insert(0) += 1;
        *per_gesture.entry(r.gesture).or_insert(0) += 1;
    }
    Ok(LoadReport {
        records,
        issues,
        per_participant,
        per_gesture,
    })
}

/// Canonical relative paths for a record.
pub fn canonical_paths(participant: &str, gesture: Gesture, k: usize) -> (PathBuf, PathBuf) {
    (
        PathBuf::from(format!("images/{participant}/{gesture}_{k}.jpg")),
        PathBuf::from(format!("masks/{participant}/{gesture}_{k}.png")),
    )
}

/// Writes a dataset in the canonical layout. Images are JPEG at quality 95,
/// or PNG with a `.png` suffix when `lossless` is set.
pub fn write_hutics(root: &Path, items: &[(String, Gesture, ImageFrame, BinaryMask)], lossless: bool) -> Result<()> {
    let mut counters: BTreeMap<(String, Gesture), usize> = BTreeMap::new();
    let mut entries = Vec::with_capacity(items.len());
    for (pid, gesture, frame, mask) in items {
        let k = counters.entry((pid.clone(), *gesture)).or_insert(0);
        let (mut img, mask_rel) = canonical_paths(pid, *gesture, *k);
        *k += 1;
        let bytes = if lossless {
            img.set_extension("png");
            codec::encode_frame_png(frame)?
        } else {
            codec::encode_frame_jpeg(frame, 95)?
        };
        codec::write_atomic(&root.join(&img), &bytes)?;
        codec::write_atomic(&root.join(&mask_rel), &codec::encode_mask_png(mask)?)?;
        entries.push(MetadataEntry {
            image: img,
            mask: Some(MaskSource::Path(mask_rel)),
            participant: pid.clone(),
            gesture: gesture.to_string(),
        });
    }
    codec::write_atomic(&root.join(METADATA_FILE), serde_json::to_string_pretty(&entries)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(pid: &str, g: Gesture) -> (String, Gesture, ImageFrame, BinaryMask) {
        (
            pid.to_string(),
            g,
            ImageFrame::filled(8, 6, [10, 20, 30], "x").unwrap(),
            BinaryMask::from_fn(8, 6, |x, _| x < 3),
        )
    }

    #[test]
    fn empty_directory_has_no_records() {
        let dir = tempfile::tempdir().unwrap();
        match load_hutics(dir.path()) {
            Err(Error::Dataset(m)) => assert!(m.contains("no records")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn loads_sorted_and_reports_bad_entries() {
        let dir = tempfile::tempdir().unwrap();
        write_hutics(
            dir.path(),
            &[item("p2", Gesture::Pointing), item("p1", Gesture::Touching), item("p1", Gesture::Exhibiting)],
            true,
        )
        .unwrap();
        let meta_path = dir.path().join(METADATA_FILE);
        let mut entries: Vec<serde_json::Value> = serde_json::from_slice(&std::fs::read(&meta_path).unwrap()).unwrap();
        entries.push(serde_json::json!({"image": "images/p3/x.png", "mask": "masks/p3/x.png", "participant": "p3", "gesture": "pointing"}));
        entries.push(serde_json::json!({"image": entries[0]["image"], "mask": null, "participant": "p4", "gesture": "waving"}));
        entries.push(serde_json::json!({"image": entries[0]["image"], "mask": {"rings": [[[0.0, 0.0], [4.0, 0.0], [4.0, 6.0]]]}, "participant": "p5", "gesture": "presenting"}));
        std::fs::write(&meta_path, serde_json::to_vec(&entries).unwrap()).unwrap();

        let a = load_hutics(dir.path()).unwrap();
        assert_eq!(a.records.len(), 4);
        assert_eq!(a.issues.len(), 2);
        let order: Vec<_> = a.records.iter().map(|r| (r.participant_id.as_str(), r.gesture)).collect();
        assert_eq!(
            order,
            vec![
                ("p1", Gesture::Exhibiting),
                ("p1", Gesture::Touching),
                ("p2", Gesture::Pointing),
                ("p5", Gesture::Presenting)
            ]
        );
        assert_eq!(a.per_participant["p1"], 2);
        assert!(matches!(a.records[3].mask, Some(MaskSource::Polygon(_))));
        assert_eq!(a.records[0].frame_id, "p1/exhibiting_0");
        assert_eq!(a.records[0].load_frame().unwrap().source_id(), "p1/exhibiting_0");
        let b = load_hutics(dir.path()).unwrap();
        assert_eq!(a.records, b.records);
    }

    #[test]
    fn gesture_parsing() {
        assert_eq!("touching".parse::<Gesture>().unwrap(), Gesture::Touching);
        assert!("waving".parse::<Gesture>().is_err());
    }
}
