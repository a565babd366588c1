// Usage: cargo run --example dataset_split [-- <dataset root>]
//
// Loads a canonical dataset (a synthetic one is written when no root is
// given), reports per-participant and per-gesture counts, then makes a
// seeded participant-disjoint split.

use std::path::PathBuf;

use deictic::datamgmt::{load_hutics, split_by_participant, train_participant_count};
use deictic::synth::write_synthetic_hutics;

fn main() -> deictic::Result<()> {
    let root = match std::env::args().nth(1) {
        Some(p) => PathBuf::from(p),
        None => {
            let root = std::env::temp_dir().join(format!("deictic-dataset-{}", std::process::id()));
            write_synthetic_hutics(&root, 10, 96, 72, 0)?;
            println!("wrote a synthetic dataset to {}", root.display());
            root
        }
    };

    let report = load_hutics(&root)?;
    println!("{} records from {} participants", report.records.len(), report.participants());
    for (gesture, n) in &report.per_gesture {
        println!("  {:<11} {n}", gesture.as_str());
    }
    for issue in &report.issues {
        println!("  skipped {}: {}", issue.item, issue.reason);
    }

    let ratio = 0.8;
    for seed in [0, 1] {
        let split = split_by_participant(&report.records, ratio, seed)?;
        let train: Vec<_> = split.train_participants().into_iter().collect();
        let test: Vec<_> = split.test_participants().into_iter().collect();
        println!(
            "seed {seed}: {} train / {} test images, test participants {test:?}",
            split.train.len(),
            split.test.len()
        );
        assert_eq!(train.len(), train_participant_count(report.participants(), ratio));
        assert!(train.iter().all(|p| !test.contains(p)));
    }
    println!("170 participants at {ratio} -> {} train", train_participant_count(170, ratio));

    let first = &report.records[0];
    let (frame, mask) = first.load_pair()?;
    println!(
        "{}: {}x{} frame, {} object pixels ({})",
        first.id(),
        frame.width(),
        frame.height(),
        mask.count_ones(),
        first.gesture
    );
    Ok(())
}
