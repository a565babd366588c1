//! Procedural scenes for tests, examples and desk-scale runs: flat-colored
//! disks and squares on a noisy background, with arm-shaped hand masks that
//! reach up from the bottom edge to touch one object.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datamgmt::{write_hutics, Gesture};
use crate::error::Result;
use crate::handseg::OracleParser;
use crate::imaging::{codec, BinaryMask, ImageFrame};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Disk { cx: f64, cy: f64, r: f64 },
    Square { cx: f64, cy: f64, half: f64 },
}

impl Shape {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Disk { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            Shape::Square { cx, cy, half } => (x - cx).abs() <= half && (y - cy).abs() <= half,
        }
    }

    pub fn center(&self) -> (f64, f64) {
        match *self {
            Shape::Disk { cx, cy, .. } | Shape::Square { cx, cy, .. } => (cx, cy),
        }
    }

    pub fn extent(&self) -> f64 {
        match *self {
            Shape::Disk { r, .. } => r,
            Shape::Square { half, .. } => half,
        }
    }

    /// Pixels whose centers fall inside the shape.
    pub fn mask(&self, width: u32, height: u32) -> BinaryMask {
        BinaryMask::from_fn(width, height, |x, y| self.contains(x as f64 + 0.5, y as f64 + 0.5))
    }
}

/// A frame with its objects and, for each object, a hand mask touching it.
#[derive(Debug, Clone)]
pub struct Scene {
    pub frame: ImageFrame,
    pub objects: Vec<BinaryMask>,
    pub hands: Vec<BinaryMask>,
}

fn background(rng: &mut ChaCha8Rng, width: u32, height: u32, id: &str) -> ImageFrame {
    let base: [i32; 3] = [rng.random_range(60..120), rng.random_range(60..120), rng.random_range(60..120)];
    let pixels = (0..width * height)
        .flat_map(|_| {
            let n: i32 = rng.random_range(-12..=12);
            base.map(|c| (c + n).clamp(0, 255) as u8)
        })
        .collect();
    ImageFrame::new(width, height, pixels, id).expect("dimensions match buffer")
}

fn paint(frame: &mut ImageFrame, mask: &BinaryMask, rgb: [u8; 3]) {
    for y in 0..frame.height() {
        for x in 0..frame.width() {
            if mask.get(x, y) {
                frame.set_pixel(x, y, rgb);
            }
        }
    }
}

fn bright_color(rng: &mut ChaCha8Rng) -> [u8; 3] {
    let mut c = [rng.random_range(0..90u8), rng.random_range(0..90u8), rng.random_range(0..90u8)];
    c[rng.random_range(0..3)] = rng.random_range(190..=255);
    c
}

/// Arm from the bottom edge up to (and slightly into) the shape.
pub fn hand_touching(shape: &Shape, width: u32, height: u32) -> BinaryMask {
    let (cx, cy) = shape.center();
    let half_w = (width as f64 / 16.0).max(1.0);
    let top = cy + shape.extent() - 2.0;
    BinaryMask::from_fn(width, height, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        (px - cx).abs() <= half_w && py >= top
    })
}

fn random_shape(rng: &mut ChaCha8Rng, cx: f64, cy: f64, size: f64, disk: bool) -> Shape {
    if disk {
        Shape::Disk { cx, cy, r: size }
    } else {
        Shape::Square {
            cx,
            cy,
            half: size * 0.85,
        }
    }
    .jitter(rng)
}

impl Shape {
    fn jitter(self, rng: &mut ChaCha8Rng) -> Shape {
        let f = rng.random_range(0.85..1.15);
        match self {
            Shape::Disk { cx, cy, r } => Shape::Disk { cx, cy, r: r * f },
            Shape::Square { cx, cy, half } => Shape::Square { cx, cy, half: half * f },
        }
    }
}

/// Two objects side by side (one per horizontal half) in random colors and
/// shapes; `hands[i]` touches `objects[i]`. The hand is not drawn in the frame.
pub fn two_object_scene(rng: &mut ChaCha8Rng, width: u32, height: u32, id: &str) -> Scene {
    let (w, h) = (width as f64, height as f64);
    let size = w.min(h) * 0.13;
    let mut frame = background(rng, width, height, id);
    let mut objects = Vec::new();
    let mut hands = Vec::new();
    for side in 0..2 {
        let cx = w * (0.25 + 0.5 * side as f64) + rng.random_range(-0.06..0.06) * w;
        let cy = h * rng.random_range(0.25..0.45);
        let disk = rng.random_bool(0.5);
        let shape = random_shape(rng, cx, cy, size, disk);
        let mask = shape.mask(width, height);
        paint(&mut frame, &mask, bright_color(rng));
        hands.push(hand_touching(&shape, width, height));
        objects.push(mask);
    }
    Scene { frame, objects, hands }
}

/// `n` two-object scenes; scene `i` targets object `i % 2`.
pub fn gesture_scenes(n: usize, width: u32, height: u32, seed: u64) -> Vec<(Scene, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| (two_object_scene(&mut rng, width, height, &format!("scene-{i}")), i % 2))
        .collect()
}

/// Class palette: class k gets a distinctive hue and alternates shape.
pub fn class_color(class_id: usize) -> [u8; 3] {
    const PALETTE: [[u8; 3]; 6] = [
        [230, 40, 40],
        [40, 80, 230],
        [40, 200, 60],
        [230, 200, 30],
        [200, 40, 220],
        [30, 210, 220],
    ];
    PALETTE[class_id % PALETTE.len()]
}

/// One object of class `class_id` at a random position, its mask, and a
/// hand touching it.
pub fn class_object_frame(rng: &mut ChaCha8Rng, class_id: usize, width: u32, height: u32, id: &str) -> Scene {
    let (w, h) = (width as f64, height as f64);
    let size = w.min(h) * rng.random_range(0.16..0.24);
    let cx = w * rng.random_range(0.3..0.7);
    let cy = h * rng.random_range(0.3..0.55);
    let shape = random_shape(rng, cx, cy, size, class_id % 2 == 0);
    let mut frame = background(rng, width, height, id);
    let mask = shape.mask(width, height);
    let jitter = |c: u8, rng: &mut ChaCha8Rng| (c as i32 + rng.random_range(-20..=20)).clamp(0, 255) as u8;
    let base = class_color(class_id);
    let color = [jitter(base[0], rng), jitter(base[1], rng), jitter(base[2], rng)];
    paint(&mut frame, &mask, color);
    Scene {
        frame,
        hands: vec![hand_touching(&shape, width, height)],
        objects: vec![mask],
    }
}

/// Writes a canonical-layout dataset of `participants` x 12 two-object
/// images (3 per gesture) under `root`, plus oracle hand fixtures under
/// `root/hands` named after each frame id.
pub fn write_synthetic_hutics(root: &Path, participants: usize, width: u32, height: u32, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::new();
    let hands_dir = root.join("hands");
    for p in 0..participants {
        let pid = format!("p{p:03}");
        for g in Gesture::ALL {
            for k in 0..3 {
                let frame_id = format!("{pid}/{g}_{k}");
                let scene = two_object_scene(&mut rng, width, height, &frame_id);
                let target = rng.random_range(0..2);
                codec::write_atomic(
                    &OracleParser::fixture_path(&hands_dir, &frame_id),
                    &codec::encode_mask_png(&scene.hands[target])?,
                )?;
                items.push((pid.clone(), g, scene.frame, scene.objects[target].clone()));
            }
        }
    }
    write_hutics(root, &items, true)
}
