//! The four standard 20-class benchmark splits: each split holds out five
//! classes for evaluation and trains on the remaining fifteen.

use crate::error::{Error, Result};

/// Test classes per split, in split order. The four rows partition the 20
/// class names.
const TEST_SETS: [[&str; 5]; 4] = [
    ["aeroplane", "bicycle", "bird", "boat", "bottle"],
    ["bus", "car", "cat", "chair", "cow"],
    ["diningtable", "dog", "horse", "motorbike", "person"],
    ["potted plant", "sheep", "sofa", "train", "tv/monitor"],
];

/// Returns `(train, test)` class names for split `i` in 0..=3: the split's
/// five classes are the test set and the other fifteen are the training
/// set, kept in canonical table order.
pub fn pascal5i_split(i: usize) -> Result<(Vec<String>, Vec<String>)> {
    if i >= TEST_SETS.len() {
        return Err(Error::InvalidSplit(i));
    }
    let test: Vec<String> = TEST_SETS[i].iter().map(|s| s.to_string()).collect();
    let train: Vec<String> = TEST_SETS
        .iter()
        .enumerate()
        .filter(|&(row, _)| row != i)
        .flat_map(|(_, names)| names.iter().map(|s| s.to_string()))
        .collect();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn split_sizes_and_contents() {
        let (train, test) = pascal5i_split(1).unwrap();
        assert_eq!(train.len(), 15);
        assert_eq!(test, ["bus", "car", "cat", "chair", "cow"]);
        assert!(!train.contains(&"cat".to_string()));
        assert!(train.contains(&"aeroplane".to_string()));

        let (_, test2) = pascal5i_split(2).unwrap();
        assert_eq!(
            test2,
            ["diningtable", "dog", "horse", "motorbike", "person"]
        );
        let (_, test0) = pascal5i_split(0).unwrap();
        assert_eq!(test0[0], "aeroplane");
        let (_, test3) = pascal5i_split(3).unwrap();
        assert_eq!(test3[4], "tv/monitor");
    }

    #[test]
    fn splits_partition_twenty_distinct_names() {
        let mut all = BTreeSet::new();
        for i in 0..4 {
            let (train, test) = pascal5i_split(i).unwrap();
            let union: BTreeSet<_> = train.iter().chain(test.iter()).cloned().collect();
            assert_eq!(union.len(), 20, "split {i} must cover 20 distinct names");
            for t in &test {
                assert!(!train.contains(t), "{t} leaked into training in split {i}");
                assert!(all.insert(t.clone()), "{t} appears in two test sets");
            }
        }
        assert_eq!(all.len(), 20);
    }

    #[test]
    fn out_of_range_split_is_rejected() {
        assert!(matches!(pascal5i_split(4), Err(Error::InvalidSplit(4))));
        assert!(matches!(pascal5i_split(9), Err(Error::InvalidSplit(9))));
    }
}
