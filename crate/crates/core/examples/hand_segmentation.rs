// Usage: cargo run --example hand_segmentation
//
// The three hand segmentation backends on a synthetic frame: constant
// (empty mask), oracle (fixture replay) and a seeded human parser.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use deictic::evalbench::iou;
use deictic::handseg::{
    write_initialized_parser_weights, HandSegmentor, HandSegmentorConfig, OracleParser, REGISTERED_BACKENDS,
};
use deictic::imaging::codec;
use deictic::synth::two_object_scene;

fn main() -> deictic::Result<()> {
    let dir = std::env::temp_dir().join(format!("deictic-handseg-{}", std::process::id()));
    let fixtures = dir.join("hands");

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let scene = two_object_scene(&mut rng, 96, 72, "demo-frame");
    let truth = &scene.hands[0];
    codec::write_atomic(
        &OracleParser::fixture_path(&fixtures, scene.frame.source_id()),
        &codec::encode_mask_png(truth)?,
    )?;
    println!("registered backends: {REGISTERED_BACKENDS:?}");

    let weights = dir.join("parser.safetensors");
    write_initialized_parser_weights(&weights, 0)?;

    for config in [
        HandSegmentorConfig::constant(),
        HandSegmentorConfig::oracle(&fixtures),
        HandSegmentorConfig::pretrained(&weights),
    ] {
        let backend = config.backend_id.clone();
        let seg = HandSegmentor::new(config)?;
        let t0 = std::time::Instant::now();
        let mask = seg.hand_mask(&scene.frame)?;
        println!(
            "{backend:>18}: {:4} hand pixels, IoU with truth {:.3}, {:.1} ms",
            mask.count_ones(),
            iou(&mask, truth)?,
            t0.elapsed().as_secs_f64() * 1e3
        );
    }

    let labels = HandSegmentor::new(HandSegmentorConfig::oracle(&fixtures))?.parse_human(&scene.frame)?;
    let arm = labels.labels().iter().filter(|l| **l != 0).count();
    println!("oracle label map: {}x{}, {arm} non-background labels", labels.width(), labels.height());

    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}
