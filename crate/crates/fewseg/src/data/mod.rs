//! Datasets and file formats.
//!
//! A [`Dataset`] is a list of named classes, each holding (image, mask)
//! pairs. Submodules cover the benchmark split table ([`splits`]), the
//! seeded synthetic-shapes generator ([`synth`]), netpbm image IO
//! ([`netpbm`]), and the FST1 tensor container ([`fst`]).
//!
//! On-disk layout of a dataset directory:
//!
//! ```text
//! <root>/<class>/<index>.ppm        color image
//! <root>/<class>/<index>_mask.pgm   binary mask (0 or 255)
//! ```

pub mod fst;
pub mod netpbm;
pub mod splits;
pub mod synth;

pub use fst::{load_params, read_tensors, save_params, write_tensors, TensorRecord};
pub use netpbm::{load_image, load_mask, save_image, save_map, save_mask};
pub use splits::pascal5i_split;
pub use synth::{generate_synthetic_dataset, ShapeKind, SynthConfig};

use crate::error::{Error, Result};
use crate::features::Image;
use crate::transform::Mask;
use std::collections::BTreeMap;
use std::path::Path;

/// One class: a name and its annotated image pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassRecord {
    pub name: String,
    pub pairs: Vec<(Image, Mask)>,
}

/// An episodic segmentation dataset. Every mask matches its image's
/// dimensions and is non-empty; both are enforced on load and by the
/// generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub classes: Vec<ClassRecord>,
}

impl Dataset {
    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn total_pairs(&self) -> usize {
        self.classes.iter().map(|c| c.pairs.len()).sum()
    }

    /// Splits by holding out class `i` for evaluation and keeping the rest
    /// for training, mirroring the benchmark protocol of rotating one
    /// held-out subset.
    pub fn split_holdout(&self, i: usize) -> Result<(Dataset, Dataset)> {
        if i >= self.classes.len() {
            return Err(Error::InvalidSplit(i));
        }
        let mut train = Vec::with_capacity(self.classes.len() - 1);
        let mut test = Vec::with_capacity(1);
        for (idx, class) in self.classes.iter().enumerate() {
            if idx == i {
                test.push(class.clone());
            } else {
                train.push(class.clone());
            }
        }
        Ok((Dataset { classes: train }, Dataset { classes: test }))
    }

    /// Writes `<root>/<class>/<index>.ppm` + `<index>_mask.pgm` for every
    /// pair, creating directories as needed.
    pub fn save_to_dir(&self, root: &Path) -> Result<()> {
        for class in &self.classes {
            let dir = root.join(&class.name);
            std::fs::create_dir_all(&dir)?;
            for (i, (img, mask)) in class.pairs.iter().enumerate() {
                netpbm::save_image(&dir.join(format!("{i}.ppm")), img)?;
                netpbm::save_mask(&dir.join(format!("{i}_mask.pgm")), mask)?;
            }
        }
        Ok(())
    }

    /// Loads a directory written in the layout above. Classes are ordered
    /// by name and pairs by numeric index, so loading is deterministic
    /// regardless of filesystem iteration order. Masks use the lenient
    /// reading (pixel ≥ 128 is foreground).
    pub fn load_from_dir(root: &Path) -> Result<Dataset> {
        let mut class_dirs: Vec<(String, std::path::PathBuf)> = Vec::new();
        for entry in std::fs::read_dir(root)? {
            let entry = entry?;
            if entry.file_type()?.is_dir() {
                let name = entry.file_name().to_string_lossy().into_owned();
                class_dirs.push((name, entry.path()));
            }
        }
        if class_dirs.is_empty() {
            return Err(Error::Format(format!(
                "{}: no class directories found",
                root.display()
            )));
        }
        class_dirs.sort_by(|a, b| a.0.cmp(&b.0));

        let mut classes = Vec::with_capacity(class_dirs.len());
        for (name, dir) in class_dirs {
            let mut indexed: BTreeMap<usize, std::path::PathBuf> = BTreeMap::new();
            for entry in std::fs::read_dir(&dir)? {
                let path = entry?.path();
                let Some(file) = path.file_name().and_then(|f| f.to_str()) else {
                    continue;
                };
                if let Some(stem) = file.strip_suffix(".ppm") {
                    if let Ok(idx) = stem.parse::<usize>() {
                        indexed.insert(idx, path.clone());
                    }
                }
            }
            if indexed.is_empty() {
                return Err(Error::Format(format!(
                    "{}: class {name:?} has no <index>.ppm images",
                    dir.display()
                )));
            }
            let mut pairs = Vec::with_capacity(indexed.len());
            for (idx, img_path) in indexed {
                let mask_path = dir.join(format!("{idx}_mask.pgm"));
                if !mask_path.exists() {
                    return Err(Error::Format(format!(
                        "{}: missing mask for image index {idx}",
                        dir.display()
                    )));
                }
                let img = netpbm::load_image(&img_path)?;
                let mask = netpbm::load_mask(&mask_path, false)?;
                if (mask.height(), mask.width()) != (img.height(), img.width()) {
                    return Err(Error::DimensionMismatch {
                        context: "dataset mask vs image",
                        expected: (img.height(), img.width()),
                        got: (mask.height(), mask.width()),
                    });
                }
                if mask.foreground_count() == 0 {
                    return Err(Error::Format(format!(
                        "{}: mask for index {idx} has no foreground pixels",
                        dir.display()
                    )));
                }
                pairs.push((img, mask));
            }
            classes.push(ClassRecord { name, pairs });
        }
        Ok(Dataset { classes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn tiny() -> Dataset {
        let cfg = SynthConfig {
            size: 12,
            classes: vec![ShapeKind::Circle, ShapeKind::Square, ShapeKind::Bar],
            per_class: 3,
            noise: 0.1,
            seed: 5,
        };
        generate_synthetic_dataset(&cfg).unwrap()
    }

    fn dir_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in std::fs::read_dir(&dir).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    let rel = path.strip_prefix(root).unwrap().display().to_string();
                    out.push((rel, std::fs::read(&path).unwrap()));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn directory_round_trip_is_stable_after_quantization() {
        let ds = tiny();
        let tmp = tempdir().unwrap();
        let a = tmp.path().join("a");
        let b = tmp.path().join("b");
        ds.save_to_dir(&a).unwrap();
        let loaded = Dataset::load_from_dir(&a).unwrap();
        // Loading orders classes by name, not generator order.
        let mut expected_names = ds.class_names();
        expected_names.sort();
        assert_eq!(loaded.class_names(), expected_names);
        assert_eq!(loaded.total_pairs(), ds.total_pairs());
        // Masks are lossless; images re-save byte-identically because the
        // u8 quantization applied on the first save is idempotent.
        loaded.save_to_dir(&b).unwrap();
        assert_eq!(dir_bytes(&a), dir_bytes(&b));
        for c_back in &loaded.classes {
            let c_orig = ds
                .classes
                .iter()
                .find(|c| c.name == c_back.name)
                .expect("class survives the round trip");
            for ((_, m_orig), (_, m_back)) in c_orig.pairs.iter().zip(&c_back.pairs) {
                assert_eq!(m_orig, m_back);
            }
        }
    }

    #[test]
    fn classes_load_sorted_by_name_and_index() {
        let ds = tiny();
        let tmp = tempdir().unwrap();
        ds.save_to_dir(tmp.path()).unwrap();
        let loaded = Dataset::load_from_dir(tmp.path()).unwrap();
        let mut names = loaded.class_names();
        let sorted = {
            names.sort();
            names
        };
        assert_eq!(loaded.class_names(), sorted);
    }

    #[test]
    fn holdout_split_partitions_classes() {
        let ds = tiny();
        let (train, test) = ds.split_holdout(1).unwrap();
        assert_eq!(train.classes.len(), 2);
        assert_eq!(test.classes.len(), 1);
        assert_eq!(test.classes[0].name, ds.classes[1].name);
        for c in &train.classes {
            assert_ne!(c.name, test.classes[0].name);
        }
        assert!(matches!(ds.split_holdout(3), Err(Error::InvalidSplit(3))));
    }

    #[test]
    fn load_rejects_empty_mask() {
        let ds = tiny();
        let tmp = tempdir().unwrap();
        ds.save_to_dir(tmp.path()).unwrap();
        let victim = tmp
            .path()
            .join(&ds.classes[0].name)
            .join("0_mask.pgm");
        let zero = Mask::zeros(12, 12);
        netpbm::save_mask(&victim, &zero).unwrap();
        assert!(matches!(
            Dataset::load_from_dir(tmp.path()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn load_rejects_missing_mask() {
        let ds = tiny();
        let tmp = tempdir().unwrap();
        ds.save_to_dir(tmp.path()).unwrap();
        std::fs::remove_file(tmp.path().join(&ds.classes[0].name).join("1_mask.pgm")).unwrap();
        assert!(matches!(
            Dataset::load_from_dir(tmp.path()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn load_rejects_empty_root() {
        let tmp = tempdir().unwrap();
        assert!(matches!(
            Dataset::load_from_dir(tmp.path()),
            Err(Error::Format(_))
        ));
    }
}
