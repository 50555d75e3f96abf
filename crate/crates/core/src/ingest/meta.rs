use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Published shape of a benchmark dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetMeta {
    pub name: &'static str,
    pub num_instances: u64,
    pub num_attributes: usize,
    pub num_classes: usize,
    /// Lower-case file stems the dataset is commonly distributed under.
    pub aliases: &'static [&'static str],
}

/// The real-world benchmark streams.
pub const TABLE: [DatasetMeta; 4] = [
    DatasetMeta {
        name: "PowerSupply",
        num_instances: 29_928,
        num_attributes: 2,
        num_classes: 2,
        aliases: &["powersupply", "power_supply"],
    },
    DatasetMeta {
        name: "Airlines",
        num_instances: 539_383,
        num_attributes: 7,
        num_classes: 2,
        aliases: &["airlines", "airline"],
    },
    DatasetMeta {
        name: "ElectricNorm",
        num_instances: 45_312,
        num_attributes: 8,
        num_classes: 2,
        aliases: &[
            "electricnorm",
            "elecnormnew",
            "elecnorm",
            "electricity",
            "elec",
        ],
    },
    DatasetMeta {
        name: "Sensor",
        num_instances: 2_219_803,
        num_attributes: 5,
        num_classes: 58,
        aliases: &["sensor"],
    },
];

impl DatasetMeta {
    /// Case-insensitive lookup by name or alias.
    pub fn lookup(name: &str) -> Option<&'static DatasetMeta> {
        let key = name.to_ascii_lowercase();
        TABLE
            .iter()
            .find(|m| m.name.eq_ignore_ascii_case(&key) || m.aliases.contains(&key.as_str()))
    }

    /// First `.arff` or `.csv` file in `dir` whose stem matches an alias.
    pub fn find_in(&self, dir: &Path) -> Option<PathBuf> {
        let entries = std::fs::read_dir(dir).ok()?;
        let mut hits: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                let ext = p
                    .extension()
                    .and_then(|e| e.to_str())
                    .map(str::to_ascii_lowercase);
                let stem = p
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .map(str::to_ascii_lowercase);
                matches!(ext.as_deref(), Some("arff" | "csv"))
                    && stem.is_some_and(|s| self.aliases.contains(&s.as_str()))
            })
            .collect();
        hits.sort();
        hits.into_iter().next()
    }

    /// Checks parsed dimensions against the published ones.
    pub fn validate(&self, instances: u64, attributes: usize, classes: usize) -> Result<()> {
        let expected = (self.num_instances, self.num_attributes, self.num_classes);
        if (instances, attributes, classes) != expected {
            return Err(Error::StructuralMismatch(format!(
                "{}: expected {} instances / {} attributes / {} classes, parsed {instances} / {attributes} / {classes}",
                self.name, expected.0, expected.1, expected.2
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_by_name_and_alias() {
        assert_eq!(
            DatasetMeta::lookup("electricnorm").unwrap().num_instances,
            45_312
        );
        assert_eq!(
            DatasetMeta::lookup("elecNormNew").unwrap().name,
            "ElectricNorm"
        );
        assert_eq!(DatasetMeta::lookup("SENSOR").unwrap().num_classes, 58);
        assert!(DatasetMeta::lookup("iris").is_none());
    }

    #[test]
    fn validation() {
        let m = DatasetMeta::lookup("Airlines").unwrap();
        assert!(m.validate(539_383, 7, 2).is_ok());
        assert!(m.validate(539_382, 7, 2).is_err());
    }

    #[test]
    fn finds_files_by_alias() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("elecNormNew.arff"), "").unwrap();
        std::fs::write(dir.path().join("notes.txt"), "").unwrap();
        let m = DatasetMeta::lookup("ElectricNorm").unwrap();
        assert_eq!(
            m.find_in(dir.path()).unwrap(),
            dir.path().join("elecNormNew.arff")
        );
        assert!(DatasetMeta::lookup("Sensor")
            .unwrap()
            .find_in(dir.path())
            .is_none());
    }
}
