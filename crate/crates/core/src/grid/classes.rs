use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NUM_CLASSES: usize = 18;
pub const FREE_CLASS: u8 = 0;
pub const GENERAL_OBJECT_CLASS: u8 = 17;

const OCC3D_NAMES: [&str; DEFAULT_NUM_CLASSES] = [
    "free",
    "barrier",
    "bicycle",
    "bus",
    "car",
    "construction_vehicle",
    "motorcycle",
    "pedestrian",
    "traffic_cone",
    "trailer",
    "truck",
    "driveable_surface",
    "other_flat",
    "sidewalk",
    "terrain",
    "manmade",
    "vegetation",
    "general_object",
];

/// Class names plus the subset that counts toward mIoU.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTable {
    names: Vec<String>,
    evaluable: Vec<bool>,
}

impl Default for ClassTable {
    /// Free space, the 16 named driving categories, and a general-object
    /// class. Only the 16 named categories are evaluable.
    fn default() -> Self {
        let names = OCC3D_NAMES.iter().map(|s| s.to_string()).collect();
        let evaluable = (0..DEFAULT_NUM_CLASSES)
            .map(|i| i != FREE_CLASS as usize && i != GENERAL_OBJECT_CLASS as usize)
            .collect();
        Self { names, evaluable }
    }
}

impl ClassTable {
    pub fn new(names: Vec<String>, evaluable: Vec<bool>) -> Result<Self> {
        if names.len() != evaluable.len() {
            return Err(Error::InvalidMetadata(format!(
                "{} class names but {} evaluable flags",
                names.len(),
                evaluable.len()
            )));
        }
        if names.is_empty() || names.len() > 256 {
            return Err(Error::InvalidMetadata(format!(
                "class count {} outside 1..=256",
                names.len()
            )));
        }
        if evaluable[FREE_CLASS as usize] {
            return Err(Error::InvalidMetadata(
                "the free class cannot be evaluable".into(),
            ));
        }
        Ok(Self { names, evaluable })
    }

    /// Unnamed table (`class_<i>`) with every non-free class evaluable.
    pub fn generic(num_classes: usize) -> Result<Self> {
        let names = (0..num_classes).map(|i| format!("class_{i}")).collect();
        let evaluable = (0..num_classes).map(|i| i != 0).collect();
        Self::new(names, evaluable)
    }

    pub fn num_classes(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, class: u8) -> Option<&str> {
        self.names.get(class as usize).map(String::as_str)
    }

    pub fn is_evaluable(&self, class: u8) -> bool {
        self.evaluable.get(class as usize).copied().unwrap_or(false)
    }

    pub fn evaluable_classes(&self) -> Vec<u8> {
        (0..self.names.len())
            .filter(|&i| self.evaluable[i])
            .map(|i| i as u8)
            .collect()
    }

    pub fn set_evaluable(&mut self, class: u8, evaluable: bool) -> Result<()> {
        if class == FREE_CLASS && evaluable {
            return Err(Error::InvalidMetadata(
                "the free class cannot be evaluable".into(),
            ));
        }
        let slot = self
            .evaluable
            .get_mut(class as usize)
            .ok_or_else(|| Error::InvalidMetadata(format!("no class {class}")))?;
        *slot = evaluable;
        Ok(())
    }
}
