use serde::{Deserialize, Serialize};

use super::mask::BinaryMask;
use crate::error::{Error, Result};

/// Polygon-based object annotation: one or more rings of `(x, y)` vertices in
/// pixel coordinates, where pixel `(i, j)` covers `[i, i+1) x [j, j+1)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PolygonAnnotation {
    pub rings: Vec<Vec<(f64, f64)>>,
    /// Record this annotation belongs to, used in error messages.
    #[serde(skip)]
    pub record: Option<String>,
}

impl PolygonAnnotation {
    pub fn new(rings: Vec<Vec<(f64, f64)>>) -> Self {
        Self { rings, record: None }
    }

    pub fn for_record(mut self, record: impl Into<String>) -> Self {
        self.record = Some(record.into());
        self
    }

    fn record_name(&self) -> String {
        self.record.clone().unwrap_or_else(|| "<unnamed>".into())
    }

    /// Checks ring sizes and that every vertex lies inside `[0, width] x [0, height]`.
    pub fn validate(&self, width: u32, height: u32) -> Result<()> {
        for (i, ring) in self.rings.iter().enumerate() {
            if ring.len() < 3 {
                return Err(Error::MalformedAnnotation {
                    record: self.record_name(),
                    reason: format!("ring {i} has {} vertices, need at least 3", ring.len()),
                });
            }
            for &(x, y) in ring {
                if !(0.0..=width as f64).contains(&x) || !(0.0..=height as f64).contains(&y) {
                    return Err(Error::MalformedAnnotation {
                        record: self.record_name(),
                        reason: format!("vertex ({x}, {y}) of ring {i} outside {width}x{height}"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Signed area test: > 0 when `p` is left of the directed line `a -> b`.
fn is_left(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (p.0 - a.0) * (b.1 - a.1)
}

/// Winding number of `ring` around `p`, half-open in y so shared edges are
/// counted once.
fn winding_number(ring: &[(f64, f64)], p: (f64, f64)) -> i32 {
    let mut wn = 0;
    for (i, &a) in ring.iter().enumerate() {
        let b = ring[(i + 1) % ring.len()];
        if a.1 <= p.1 {
            if b.1 > p.1 && is_left(a, b, p) > 0.0 {
                wn += 1;
            }
        } else if b.1 <= p.1 && is_left(a, b, p) < 0.0 {
            wn -= 1;
        }
    }
    wn
}

/// Rasterizes the union of all rings: a pixel is set iff its center lies
/// inside some ring under the nonzero winding rule.
pub fn rasterize_polygons(polys: &PolygonAnnotation, width: u32, height: u32) -> Result<BinaryMask> {
    for (i, ring) in polys.rings.iter().enumerate() {
        if ring.len() < 3 {
            return Err(Error::MalformedAnnotation {
                record: polys.record_name(),
                reason: format!("ring {i} has {} vertices, need at least 3", ring.len()),
            });
        }
    }
    let mut mask = BinaryMask::zeros(width, height);
    for ring in &polys.rings {
        // Only scan the ring's bounding box.
        let (min_x, max_x, min_y, max_y) = ring.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
        );
        let x0 = (min_x - 0.5).floor().max(0.0) as u32;
        let y0 = (min_y - 0.5).floor().max(0.0) as u32;
        let x1 = ((max_x - 0.5).ceil().max(0.0) as u32).min(width.saturating_sub(1));
        let y1 = ((max_y - 0.5).ceil().max(0.0) as u32).min(height.saturating_sub(1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                if mask.get(x, y) {
                    continue;
                }
                let center = (x as f64 + 0.5, y as f64 + 0.5);
                if winding_number(ring, center) != 0 {
                    mask.set(x, y, true);
                }
            }
        }
    }
    Ok(mask)
}
