use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDef {
    pub name: String,
    pub classes: usize,
}

/// One legal attribute tuple and the action number it denotes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Combination {
    pub sas: Vec<usize>,
    pub label: usize,
}

/// Semantic attributes of a sport plus its table of legal attribute combinations.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub attributes: Vec<AttributeDef>,
    pub action_labels: usize,
    pub combinations: Vec<Combination>,
}

pub const TAKE_OFF: usize = 0;
pub const ARM_STAND: usize = 1;
pub const TWIST: usize = 2;
pub const SOMERSAULT: usize = 3;
pub const POSITION: usize = 4;

impl AttributeSchema {
    /// Synthetic diving schema: take-off (4), arm-stand (2), twist (5), somersault (10),
    /// position (4), with 40 legal dives.
    ///
    /// Every (take-off, somersault) pair is legal exactly once; twist, arm-stand and
    /// position follow from it, so each action number has one attribute tuple.
    pub fn diving() -> Self {
        let attributes = [
            ("take_off", 4),
            ("arm_stand", 2),
            ("twist", 5),
            ("somersault", 10),
            ("position", 4),
        ]
        .into_iter()
        .map(|(name, classes)| AttributeDef {
            name: name.to_string(),
            classes,
        })
        .collect();
        let mut combinations = Vec::new();
        for take_off in 0..4 {
            for somersault in 0..10 {
                let twist = (somersault + 2 * take_off) % 5;
                let arm_stand = (somersault / 2 + take_off) % 2;
                let position = (take_off + 3 * somersault) % 4;
                combinations.push(Combination {
                    sas: vec![take_off, arm_stand, twist, somersault, position],
                    label: combinations.len(),
                });
            }
        }
        AttributeSchema {
            attributes,
            action_labels: combinations.len(),
            combinations,
        }
    }

    pub fn num_attributes(&self) -> usize {
        self.attributes.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.attributes.iter().map(|a| a.classes).collect()
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.attributes.is_empty() {
            return Err(Error::InvalidSchema("no attributes".into()));
        }
        for a in &self.attributes {
            if a.classes < 2 {
                return Err(Error::InvalidSchema(format!(
                    "attribute {} has {} classes, need at least 2",
                    a.name, a.classes
                )));
            }
        }
        if self.action_labels < 1 {
            return Err(Error::InvalidSchema("no action labels".into()));
        }
        let mut covered = vec![false; self.action_labels];
        let mut seen = HashMap::new();
        for c in &self.combinations {
            self.check_sas(&c.sas)?;
            if c.label >= self.action_labels {
                return Err(Error::InvalidSchema(format!(
                    "combination label {} out of range {}",
                    c.label, self.action_labels
                )));
            }
            if let Some(prev) = seen.insert(c.sas.clone(), c.label) {
                if prev != c.label {
                    return Err(Error::InvalidSchema(format!(
                        "attribute tuple {:?} maps to both {prev} and {}",
                        c.sas, c.label
                    )));
                }
            }
            covered[c.label] = true;
        }
        if let Some(missing) = covered.iter().position(|c| !c) {
            return Err(Error::InvalidSchema(format!(
                "action {missing} has no attribute combination"
            )));
        }
        Ok(())
    }

    /// Checks arity and per-attribute class ranges of an attribute tuple.
    pub fn check_sas(&self, sas: &[usize]) -> Result<()> {
        if sas.len() != self.attributes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.attributes.len(),
                got: sas.len(),
            });
        }
        for (a, &v) in self.attributes.iter().zip(sas) {
            if v >= a.classes {
                return Err(Error::IndexOutOfRange {
                    what: format!("attribute {}", a.name),
                    index: v,
                    len: a.classes,
                });
            }
        }
        Ok(())
    }

    /// Action number of a legal attribute tuple.
    pub fn action_for(&self, sas: &[usize]) -> Option<usize> {
        self.combinations
            .iter()
            .find(|c| c.sas == sas)
            .map(|c| c.label)
    }

    pub fn is_legal(&self, sas: &[usize], label: usize) -> bool {
        self.combinations
            .iter()
            .any(|c| c.sas == sas && c.label == label)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: AttributeSchema = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diving_schema_is_valid_and_covers_every_class() {
        let s = AttributeSchema::diving();
        s.validate().unwrap();
        assert_eq!(s.class_counts(), vec![4, 2, 5, 10, 4]);
        for (i, a) in s.attributes.iter().enumerate() {
            for class in 0..a.classes {
                assert!(
                    s.combinations.iter().any(|c| c.sas[i] == class),
                    "{} class {class} unused",
                    a.name
                );
            }
        }
        let c = &s.combinations[17];
        assert_eq!(s.action_for(&c.sas), Some(17));
    }

    #[test]
    fn rejects_bad_schemas() {
        let mut s = AttributeSchema::diving();
        s.attributes[1].classes = 1;
        assert!(s.validate().is_err());

        let mut s = AttributeSchema::diving();
        s.action_labels += 1;
        assert!(s.validate().is_err());

        let mut s = AttributeSchema::diving();
        s.combinations[0].sas[3] = 10;
        assert!(s.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = AttributeSchema::diving();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(AttributeSchema::from_json(&text).unwrap(), s);
    }
}
