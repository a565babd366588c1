//! Gesture-guided object segmentation: a frame plus a hand mask in, a soft
//! mask of the indicated object out.

mod artifacts;
mod model;
mod schedule;
mod train;

pub use artifacts::{failure_panel, save_training_outputs, write_worst_cases, REPORT_FILE, WORST_CASES_DIR};
pub use model::{prepare_input, HighlighterModel, ModelInput, INPUT_CHANNELS, META_FILE, WEIGHTS_FILE};
pub use schedule::{lr_at_epoch, HighlighterTrainConfig};
pub use train::{
    evaluate_highlighter, examples_from_records, train_highlighter, train_on_examples, HighlightExample,
    HighlighterTrainer,
};
