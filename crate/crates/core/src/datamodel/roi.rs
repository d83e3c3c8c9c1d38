use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The seven head-and-neck organs at risk, named as in the OpenKBP release.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Oar {
    Brainstem,
    SpinalCord,
    RightParotid,
    LeftParotid,
    Esophagus,
    Larynx,
    Mandible,
}

impl Oar {
    pub const ALL: [Oar; 7] = [
        Oar::Brainstem,
        Oar::SpinalCord,
        Oar::RightParotid,
        Oar::LeftParotid,
        Oar::Esophagus,
        Oar::Larynx,
        Oar::Mandible,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Oar::Brainstem => "Brainstem",
            Oar::SpinalCord => "SpinalCord",
            Oar::RightParotid => "RightParotid",
            Oar::LeftParotid => "LeftParotid",
            Oar::Esophagus => "Esophagus",
            Oar::Larynx => "Larynx",
            Oar::Mandible => "Mandible",
        }
    }
}

/// Target prescription levels, in Gy over 35 fractions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Prescription {
    Gy70,
    Gy63,
    Gy56,
}

impl Prescription {
    pub const ALL: [Prescription; 3] = [Prescription::Gy70, Prescription::Gy63, Prescription::Gy56];

    pub fn gy(self) -> f64 {
        match self {
            Prescription::Gy70 => 70.0,
            Prescription::Gy63 => 63.0,
            Prescription::Gy56 => 56.0,
        }
    }

    pub fn from_gy(gy: f64) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.gy() == gy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RoiKind {
    Oar,
    Target,
}

/// A labelled region of interest: an organ at risk or a prescription target.
///
/// Ordering puts organs first (in [`Oar::ALL`] order) and then targets from
/// the highest prescription down, which is also the model's input channel order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RoiLabel {
    Oar(Oar),
    Target(Prescription),
}

impl RoiLabel {
    /// Every label in channel order.
    pub fn all() -> impl Iterator<Item = RoiLabel> {
        Oar::ALL.into_iter().map(RoiLabel::Oar).chain(Prescription::ALL.into_iter().map(RoiLabel::Target))
    }

    pub fn name(&self) -> String {
        match self {
            RoiLabel::Oar(o) => o.name().to_string(),
            RoiLabel::Target(p) => format!("PTV{}", p.gy() as u32),
        }
    }

    pub fn kind(&self) -> RoiKind {
        match self {
            RoiLabel::Oar(_) => RoiKind::Oar,
            RoiLabel::Target(_) => RoiKind::Target,
        }
    }

    pub fn prescription_gy(&self) -> Option<f64> {
        match self {
            RoiLabel::Oar(_) => None,
            RoiLabel::Target(p) => Some(p.gy()),
        }
    }
}

impl fmt::Display for RoiLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for RoiLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RoiLabel::all()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::data("roi label", format!("unknown ROI name {s:?}")))
    }
}
