use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::imaging::BinaryMask;

/// The 20-class human-parsing taxonomy (LIP) published by the parser backends.
pub const LIP_LABELS: [&str; 20] = [
    "background",
    "hat",
    "hair",
    "glove",
    "sunglasses",
    "upper-clothes",
    "dress",
    "coat",
    "socks",
    "pants",
    "jumpsuits",
    "scarf",
    "skirt",
    "face",
    "left-arm",
    "right-arm",
    "left-leg",
    "right-leg",
    "left-shoe",
    "right-shoe",
];

pub fn lip_label_names() -> BTreeMap<u8, String> {
    LIP_LABELS.iter().enumerate().map(|(i, n)| (i as u8, n.to_string())).collect()
}

/// Looks up the numeric id a name table assigns to `name`.
pub fn label_id(names: &BTreeMap<u8, String>, name: &str) -> Option<u8> {
    names.iter().find(|(_, n)| n.as_str() == name).map(|(id, _)| *id)
}

/// Per-pixel body-part labels with the name table that interprets them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BodyPartLabelMap {
    width: u32,
    height: u32,
    labels: Vec<u8>,
    label_names: BTreeMap<u8, String>,
}

impl BodyPartLabelMap {
    pub fn new(width: u32, height: u32, labels: Vec<u8>, label_names: BTreeMap<u8, String>) -> Result<Self> {
        if labels.len() != width as usize * height as usize {
            return Err(Error::shape(
                format!("{} labels", width as usize * height as usize),
                format!("{} labels", labels.len()),
            ));
        }
        if label_names.get(&0).map(String::as_str) != Some("background") {
            return Err(Error::Argument("label 0 must be named \"background\"".into()));
        }
        if let Some(l) = labels.iter().find(|l| !label_names.contains_key(l)) {
            return Err(Error::Argument(format!("label {l} missing from the name table")));
        }
        Ok(Self {
            width,
            height,
            labels,
            label_names,
        })
    }

    pub fn background(width: u32, height: u32, label_names: BTreeMap<u8, String>) -> Result<Self> {
        Self::new(width, height, vec![0; width as usize * height as usize], label_names)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label_names(&self) -> &BTreeMap<u8, String> {
        &self.label_names
    }
}

/// Hard mask of every pixel whose label name is in `arm_label_names`.
pub fn extract_hand_mask(map: &BodyPartLabelMap, arm_label_names: &BTreeSet<String>) -> Result<BinaryMask> {
    let missing: Vec<&String> = arm_label_names
        .iter()
        .filter(|n| label_id(&map.label_names, n).is_none())
        .collect();
    if !missing.is_empty() {
        let valid: Vec<&str> = map.label_names.values().map(String::as_str).collect();
        return Err(Error::Config(format!(
            "arm labels {missing:?} not published by the parser; valid names: {}",
            valid.join(", ")
        )));
    }
    let mut selected = [false; 256];
    for n in arm_label_names {
        if let Some(id) = label_id(&map.label_names, n) {
            selected[id as usize] = true;
        }
    }
    BinaryMask::new(
        map.width,
        map.height,
        map.labels.iter().map(|l| selected[*l as usize] as u8).collect(),
    )
}
