// Usage: cargo run --release --example compare_architectures
//
// Trains each decoder on the same synthetic split, tabulates mIoU and fps,
// and renders the worst test cases of the best model.

use deictic::datamgmt::{load_hutics, split_by_participant};
use deictic::evalbench::{benchmark_fps_detailed, benchmark_frames, compare_architectures, FPS_WARMUP};
use deictic::handseg::{HandSegmentor, HandSegmentorConfig};
use deictic::highlighter::{evaluate_highlighter, examples_from_records, train_highlighter, write_worst_cases, HighlighterTrainConfig};
use deictic::nn::{BackboneId, DecoderId, ModelSpec};
use deictic::synth::write_synthetic_hutics;

fn main() -> deictic::Result<()> {
    let root = std::env::temp_dir().join(format!("deictic-compare-{}", std::process::id()));
    write_synthetic_hutics(&root, 4, 64, 64, 1)?;
    let split = split_by_participant(&load_hutics(&root)?.records, 0.8, 0)?;
    let handseg = HandSegmentorConfig::oracle(root.join("hands"));
    let config = HighlighterTrainConfig {
        epochs: 16,
        lr_initial: 3e-3,
        lr_final: 3e-4,
        lr_hold_head: 4,
        lr_hold_tail: 4,
        input_size: (64, 64),
        ..Default::default()
    };

    let specs: Vec<ModelSpec> = DecoderId::ALL.iter().map(|d| ModelSpec::new(BackboneId::TinyCnn, *d)).collect();
    let table = compare_architectures(&split, &specs, &config, &handseg)?;
    print!("{}", table.render());

    let best: ModelSpec = table.rows[0].spec.parse()?;
    let (model, report) = train_highlighter(&split, best, &config, &handseg, |_, _| {})?;
    let fps = benchmark_fps_detailed(&model, &handseg, &benchmark_frames(&split)?, FPS_WARMUP)?;
    println!(
        "{best}: median {:.1} fps over {} frames on {} threads",
        fps.fps,
        fps.per_frame_ms.len(),
        fps.threads
    );

    let test = examples_from_records(&split.test, &HandSegmentor::new(handseg)?)?;
    let eval = evaluate_highlighter(&model, &test)?;
    assert_eq!(eval.miou, report.miou);
    for path in write_worst_cases(&root.join("worst_cases"), &model, &test, &eval, 3)? {
        println!("worst case: {}", path.display());
    }
    Ok(())
}
