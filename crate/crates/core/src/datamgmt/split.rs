use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::hutics::HuTicsRecord;
use crate::error::{Error, Result};

/// Anything that belongs to one participant.
pub trait Participant {
    fn participant_id(&self) -> &str;
}

impl Participant for HuTicsRecord {
    fn participant_id(&self) -> &str {
        &self.participant_id
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub test: Vec<T>,
    pub seed: u64,
    pub ratio: f64,
}

pub type DatasetSplit = Split<HuTicsRecord>;

impl<T: Participant> Split<T> {
    pub fn train_participants(&self) -> BTreeSet<&str> {
        self.train.iter().map(|r| r.participant_id()).collect()
    }

    pub fn test_participants(&self) -> BTreeSet<&str> {
        self.test.iter().map(|r| r.participant_id()).collect()
    }
}

/// Number of training participants: floor(ratio * P), with a small tolerance
/// so products such as 0.29 * 100 are not pushed down by rounding error.
pub fn train_participant_count(participants: usize, ratio: f64) -> usize {
    (ratio * participants as f64 + 1e-9).floor() as usize
}

/// Shuffles the sorted participant ids with a seeded permutation and sends
/// the first floor(ratio * P) participants to train, the rest to test.
/// Record order within each half follows the input order.
pub fn split_by_participant<T: Participant + Clone>(records: &[T], ratio: f64, seed: u64) -> Result<Split<T>> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Argument(format!("split ratio {ratio} outside (0, 1)")));
    }
    let ids: BTreeSet<&str> = records.iter().map(|r| r.participant_id()).collect();
    if ids.len() < 2 {
        return Err(Error::Dataset(format!(
            "splitting needs at least 2 participants, found {}",
            ids.len()
        )));
    }
    let mut ids: Vec<&str> = ids.into_iter().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = train_participant_count(ids.len(), ratio);
    let train_ids: BTreeSet<&str> = ids[..n_train].iter().copied().collect();
    let (train, test) = records
        .iter()
        .cloned()
        .partition(|r| train_ids.contains(r.participant_id()));
    Ok(Split {
        train,
        test,
        seed,
        ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    struct R(String, usize);

    impl Participant for R {
        fn participant_id(&self) -> &str {
            &self.0
        }
    }

    fn records(p: usize, per: usize) -> Vec<R> {
        (0..p)
            .flat_map(|i| (0..per).map(move |k| R(format!("p{i:03}"), k)))
            .collect()
    }

    #[test]
    fn full_dataset_counts() {
        let s = split_by_participant(&records(170, 12), 0.8, 7).unwrap();
        assert_eq!(s.train_participants().len(), 136);
        assert_eq!(s.train.len(), 1632);
        assert_eq!(s.test.len(), 408);
    }

    #[test]
    fn two_participants_floor() {
        let s = split_by_participant(&records(2, 3), 0.8, 0).unwrap();
        assert_eq!(s.train_participants().len(), 1);
        assert_eq!(s.test_participants().len(), 1);
    }

    #[test]
    fn errors_and_determinism() {
        assert!(matches!(split_by_participant(&records(1, 5), 0.8, 0), Err(Error::Dataset(_))));
        assert!(split_by_participant(&records(3, 1), 1.0, 0).is_err());
        let r = records(20, 2);
        assert_eq!(split_by_participant(&r, 0.5, 9).unwrap(), split_by_participant(&r, 0.5, 9).unwrap());
        assert_eq!(train_participant_count(100, 0.29), 29);
    }
}
