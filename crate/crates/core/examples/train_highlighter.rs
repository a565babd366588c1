// Usage: cargo run --release --example train_highlighter [-- <epochs>]
//
// Overfits a tiny highlighter on synthetic two-object scenes, then moves the
// hand to the other object to see whether the highlight follows it.

use deictic::evalbench::iou;
use deictic::highlighter::{lr_at_epoch, train_on_examples, HighlightExample, HighlighterTrainConfig};
use deictic::imaging::{binarize, codec, overlay_highlight};
use deictic::nn::{BackboneId, DecoderId, ModelSpec};
use deictic::synth::gesture_scenes;

fn main() -> deictic::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let scenes = gesture_scenes(12, 64, 64, 7);
    let examples = scenes
        .iter()
        .enumerate()
        .map(|(i, (s, t))| HighlightExample::new(format!("scene-{i}"), s.frame.clone(), s.hands[*t].clone(), s.objects[*t].clone()))
        .collect::<deictic::Result<Vec<_>>>()?;

    let config = HighlighterTrainConfig {
        epochs,
        lr_initial: 3e-3,
        lr_final: 3e-4,
        lr_hold_head: epochs / 4,
        lr_hold_tail: epochs / 4,
        input_size: (64, 64),
        ..Default::default()
    };
    println!(
        "lr: {:.1e} at start, {:.1e} halfway, {:.1e} at the end",
        lr_at_epoch(&config, 0)?,
        lr_at_epoch(&config, epochs / 2)?,
        lr_at_epoch(&config, epochs - 1)?
    );

    let spec = ModelSpec::new(BackboneId::TinyCnn, DecoderId::Unet);
    let t0 = std::time::Instant::now();
    let (model, report) = train_on_examples(&examples, &[], spec, &config, |e, loss| {
        if e % 20 == 0 {
            println!("epoch {e:3} loss {loss:.4}");
        }
    })?;
    println!("{} trained in {:.0?}: train mIoU {:.3}", model.describe(), t0.elapsed(), report.miou);

    let mut followed = 0;
    for (scene, target) in &scenes {
        let other = 1 - target;
        let pred = binarize(&model.predict_highlight(&scene.frame, &scene.hands[other])?, 0.5)?;
        followed += (iou(&pred, &scene.objects[other])? > iou(&pred, &scene.objects[*target])?) as usize;
    }
    println!("highlight follows the moved hand in {followed}/12 scenes");

    let out = std::env::temp_dir().join("deictic-highlight.png");
    let (scene, target) = &scenes[0];
    let shown = overlay_highlight(&scene.frame, &model.predict_highlight(&scene.frame, &scene.hands[*target])?, [255, 255, 0], 0.6)?;
    codec::write_atomic(&out, &codec::encode_frame_png(&shown)?)?;
    println!("overlay written to {}", out.display());
    Ok(())
}
