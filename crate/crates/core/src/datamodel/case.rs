use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::grid::VoxelGrid;
use super::roi::RoiLabel;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Split {
    Train,
    Validate,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "TRAIN",
            Split::Validate => "VALIDATE",
            Split::Test => "TEST",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "TRAIN" => Ok(Split::Train),
            "VALIDATE" | "VALIDATION" | "VAL" => Ok(Split::Validate),
            "TEST" => Ok(Split::Test),
            _ => Err(Error::data("split", format!("unknown split {s:?}"))),
        }
    }
}

/// One treatment plan.
#[derive(Clone, Debug, PartialEq)]
pub struct Case {
    pub id: String,
    pub ct: VoxelGrid,
    pub roi_masks: BTreeMap<RoiLabel, VoxelGrid>,
    pub possible_dose_mask: VoxelGrid,
    pub dose: VoxelGrid,
    pub split: Split,
}

impl Case {
    /// Checks that grids agree in geometry and hold valid values.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Error::data(format!("case {}", self.id), msg);
        let grids = std::iter::once(("possible_dose_mask".to_string(), &self.possible_dose_mask))
            .chain(std::iter::once(("dose".to_string(), &self.dose)))
            .chain(self.roi_masks.iter().map(|(l, g)| (l.name(), g)));
        for (name, grid) in grids {
            if !grid.same_geometry(&self.ct) {
                return Err(bad(format!("{name} geometry differs from ct")));
            }
        }
        for (label, mask) in &self.roi_masks {
            if !mask.is_binary() {
                return Err(bad(format!("{label} mask is not binary")));
            }
        }
        if !self.possible_dose_mask.is_binary() {
            return Err(bad("possible_dose_mask is not binary".into()));
        }
        if let Some(v) = self.dose.values().iter().find(|v| v.is_nan() || **v < 0.0) {
            return Err(bad(format!("dose contains invalid value {v}")));
        }
        Ok(())
    }
}
