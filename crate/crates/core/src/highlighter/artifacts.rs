use std::path::{Path, PathBuf};

use super::model::HighlighterModel;
use super::train::HighlightExample;
use crate::error::{Error, Result};
use crate::evalbench::EvalReport;
use crate::imaging::{codec, overlay_highlight, ImageFrame, SoftMask};

pub const REPORT_FILE: &str = "report.json";
pub const WORST_CASES_DIR: &str = "worst_cases";

const HAND_TINT: [u8; 3] = [40, 120, 255];
const HIGHLIGHT_TINT: [u8; 3] = [255, 40, 40];

/// Four panels left to right: frame with the hand mask, predicted soft mask,
/// ground-truth mask, and the prediction tinted over the frame.
pub fn failure_panel(frame: &ImageFrame, hand: &SoftMask, pred: &SoftMask, target: &SoftMask) -> Result<ImageFrame> {
    let (w, h) = frame.dims();
    let with_hand = overlay_highlight(frame, hand, HAND_TINT, 0.6)?;
    let with_pred = overlay_highlight(frame, pred, HIGHLIGHT_TINT, 0.6)?;
    let gray = |m: &SoftMask, x, y| {
        let v = (m.get(x, y).clamp(0.0, 1.0) * 255.0).round() as u8;
        [v, v, v]
    };
    let mut out = ImageFrame::filled(4 * w, h, [0, 0, 0], frame.source_id())?;
    for y in 0..h {
        for x in 0..w {
            out.set_pixel(x, y, with_hand.pixel(x, y));
            out.set_pixel(w + x, y, gray(pred, x, y));
            out.set_pixel(2 * w + x, y, gray(target, x, y));
            out.set_pixel(3 * w + x, y, with_pred.pixel(x, y));
        }
    }
    Ok(out)
}

/// Writes a panel for each of the `k` lowest-IoU examples of `report` into
/// `dir`, named `<rank>_<iou>_<id>.png`.
pub fn write_worst_cases(
    dir: &Path,
    model: &HighlighterModel,
    examples: &[HighlightExample],
    report: &EvalReport,
    k: usize,
) -> Result<Vec<PathBuf>> {
    if report.per_image_iou.len() != examples.len() {
        return Err(Error::shape(
            format!("{} per-image scores", examples.len()),
            report.per_image_iou.len(),
        ));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (rank, i) in report.worst_indices(k).into_iter().enumerate() {
        let ex = &examples[i];
        let pred = model.predict_highlight(&ex.frame, &ex.hand)?;
        let panel = failure_panel(&ex.frame, &ex.hand.to_soft(), &pred, &ex.target.to_soft())?;
        let safe: String = ex
            .id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        let path = dir.join(format!("{rank:03}_{:.3}_{safe}.png", report.per_image_iou[i]));
        codec::write_atomic(&path, &codec::encode_frame_png(&panel)?)?;
        written.push(path);
    }
    Ok(written)
}

/// Saves the model, `report.json` and the worst-case panels under `out`.
pub fn save_training_outputs(
    out: &Path,
    model: &HighlighterModel,
    report: &EvalReport,
    examples: &[HighlightExample],
    worst_k: usize,
) -> Result<()> {
    model.save(out)?;
    codec::write_atomic(&out.join(REPORT_FILE), report.to_json()?.as_bytes())?;
    write_worst_cases(&out.join(WORST_CASES_DIR), model, examples, report, worst_k)?;
    Ok(())
}
