//! Dataset ingestion and splitting, and persistence of teaching sessions.

mod hutics;
mod sample;
mod split;
mod store;

pub use hutics::{
    canonical_paths, load_hutics, write_hutics, Gesture, HuTicsRecord, LoadReport, MaskSource, MetadataEntry,
    ValidationIssue, METADATA_FILE,
};
pub use sample::{now_millis, TeachingSample};
pub use split::{split_by_participant, train_participant_count, DatasetSplit, Participant, Split};
pub use store::{load_sample, load_session, save_session, write_manifest, write_sample_files, SessionSnapshot, SESSION_MANIFEST};
