use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sample::TeachingSample;
use crate::error::{Error, Result};
use crate::imaging::codec;
use crate::teachtrain::{validate_classes, ClassDef};

pub const SESSION_MANIFEST: &str = "session.json";

/// The persisted part of a teaching session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionSnapshot {
    pub session_id: String,
    pub classes: Vec<ClassDef>,
    pub samples: Vec<TeachingSample>,
}

impl SessionSnapshot {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            classes: Vec::new(),
            samples: Vec::new(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestClass {
    id: usize,
    label: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestSample {
    id: String,
    class_id: usize,
    frame: String,
    mask_soft: Option<String>,
    mask_bin: Option<String>,
    captured_at: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    session_id: String,
    classes: Vec<ManifestClass>,
    samples: Vec<ManifestSample>,
}

fn check_id(id: &str) -> Result<()> {
    let ok = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if !ok {
        return Err(Error::Validation {
            item: id.to_string(),
            reason: "ids used as file names may only contain ASCII letters, digits, '-' and '_'".into(),
        });
    }
    Ok(())
}

fn frame_rel(id: &str) -> String {
    format!("frames/{id}.png")
}

fn soft_rel(id: &str) -> String {
    format!("masks/{id}.soft.png")
}

fn bin_rel(id: &str) -> String {
    format!("masks/{id}.bin.png")
}

/// Writes the frame and mask PNGs of one sample under `root`.
pub fn write_sample_files(root: &Path, sample: &TeachingSample) -> Result<()> {
    let id = sample.sample_id();
    check_id(id)?;
    codec::write_atomic(&root.join(frame_rel(id)), &codec::encode_frame_png(sample.frame())?)?;
    if let (Some(soft), Some(bin)) = (sample.highlight_soft(), sample.highlight_bin()) {
        codec::write_atomic(&root.join(soft_rel(id)), &codec::encode_soft_png(soft)?)?;
        codec::write_atomic(&root.join(bin_rel(id)), &codec::encode_mask_png(bin)?)?;
    }
    Ok(())
}

/// Rewrites `session.json` for `snapshot`; sample files must already exist.
pub fn write_manifest(root: &Path, snapshot: &SessionSnapshot) -> Result<PathBuf> {
    let manifest = Manifest {
        session_id: snapshot.session_id.clone(),
        classes: snapshot
            .classes
            .iter()
            .map(|c| ManifestClass {
                id: c.class_id,
                label: c.label.clone(),
            })
            .collect(),
        samples: snapshot
            .samples
            .iter()
            .map(|s| {
                let id = s.sample_id();
                let masked = s.highlight_soft().is_some();
                ManifestSample {
                    id: id.to_string(),
                    class_id: s.class_id(),
                    frame: frame_rel(id),
                    mask_soft: masked.then(|| soft_rel(id)),
                    mask_bin: masked.then(|| bin_rel(id)),
                    captured_at: s.captured_at(),
                }
            })
            .collect(),
    };
    let path = root.join(SESSION_MANIFEST);
    codec::write_atomic(&path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(path)
}

/// Writes every sample and the manifest; returns the manifest path.
pub fn save_session(snapshot: &SessionSnapshot, root: &Path) -> Result<PathBuf> {
    check_id(&snapshot.session_id)?;
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    for s in &snapshot.samples {
        write_sample_files(root, s)?;
    }
    write_manifest(root, snapshot)
}

/// Reads one sample's files back from `root`.
pub fn load_sample(
    root: &Path,
    sample_id: &str,
    class_id: usize,
    masked: bool,
    captured_at: u64,
    session_id: &str,
) -> Result<TeachingSample> {
    check_id(sample_id)?;
    let frame = codec::load_frame(&root.join(frame_rel(sample_id)), sample_id)?;
    let masks = if masked {
        Some((
            codec::decode_soft_png(&codec::read_file(&root.join(soft_rel(sample_id)))?)?,
            codec::load_mask(&root.join(bin_rel(sample_id)))?,
        ))
    } else {
        None
    };
    TeachingSample::from_parts(sample_id, class_id, frame, masks, captured_at, session_id)
}

pub fn load_session(root: &Path) -> Result<SessionSnapshot> {
    let path = root.join(SESSION_MANIFEST);
    let manifest: Manifest = serde_json::from_slice(&codec::read_file(&path)?).map_err(|e| Error::Validation {
        item: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut classes: Vec<ClassDef> = manifest
        .classes
        .into_iter()
        .map(|c| ClassDef::new(c.id, c.label))
        .collect();
    validate_classes(&classes)?;
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for m in manifest.samples {
        check_id(&m.id)?;
        let Some(class) = classes.get_mut(m.class_id) else {
            return Err(Error::Validation {
                item: format!("samples[{}].class_id", m.id),
                reason: format!("class {} is not declared", m.class_id),
            });
        };
        class.sample_count += 1;
        let masked = match (&m.mask_soft, &m.mask_bin) {
            (Some(s), Some(b)) if *s == soft_rel(&m.id) && *b == bin_rel(&m.id) => true,
            (None, None) => false,
            _ => {
                return Err(Error::Validation {
                    item: format!("samples[{}]", m.id),
                    reason: "mask_soft and mask_bin must be both present at their canonical paths or both absent".into(),
                })
            }
        };
        if m.frame != frame_rel(&m.id) {
            return Err(Error::Validation {
                item: format!("samples[{}].frame", m.id),
                reason: format!("expected {}", frame_rel(&m.id)),
            });
        }
        samples.push(load_sample(root, &m.id, m.class_id, masked, m.captured_at, &manifest.session_id)?);
    }
    Ok(SessionSnapshot {
        session_id: manifest.session_id,
        classes,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{ImageFrame, SoftMask};

    fn snapshot() -> SessionSnapshot {
        let mut s = SessionSnapshot::new("sess-1");
        s.classes = vec![ClassDef::new(0, "cup"), ClassDef::new(1, "book")];
        for i in 0..4 {
            let mut f = ImageFrame::filled(5, 4, [i as u8 * 40, 7, 200], "raw").unwrap();
            f.set_pixel(1, 1, [1, 2, 3]);
            let soft = SoftMask::new(5, 4, (0..20).map(|k| k as f32 / 19.0).collect()).unwrap();
            let hl = (i != 3).then_some(soft);
            s.samples.push(TeachingSample::new(format!("s{i}"), i % 2, f, hl, "sess-1").unwrap());
        }
        s.classes[0].sample_count = 2;
        s.classes[1].sample_count = 2;
        s
    }

    #[test]
    fn roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let s = snapshot();
        let manifest = save_session(&s, dir.path()).unwrap();
        assert!(manifest.ends_with(SESSION_MANIFEST));
        assert_eq!(load_session(dir.path()).unwrap(), s);
    }

    #[test]
    fn empty_session_has_only_manifest() {
        let dir = tempfile::tempdir().unwrap();
        save_session(&SessionSnapshot::new("empty"), dir.path()).unwrap();
        let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from(SESSION_MANIFEST)]);
    }

    #[test]
    fn corrupt_manifest_names_the_field() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(SESSION_MANIFEST), br#"{"session_id": "x", "samples": []}"#).unwrap();
        match load_session(dir.path()) {
            Err(Error::Validation { reason, .. }) => assert!(reason.contains("classes"), "{reason}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unsafe_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(save_session(&SessionSnapshot::new("../x"), dir.path()).is_err());
    }
}
