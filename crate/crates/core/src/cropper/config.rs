use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Crop sampling parameters shared by every strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CropConfig {
    /// Side of the square output views.
    pub target: u32,
    pub scale_lo: f64,
    pub scale_hi: f64,
    pub ratio_lo: f64,
    pub ratio_hi: f64,
    /// Dilation as a fraction of the image size, split half per side.
    pub delta: f64,
    pub shift_lo: f64,
    pub shift_hi: f64,
    /// Replaces the dataset-level s_min when set.
    pub s_min_override: Option<f64>,
    /// Boxes smaller than this are grown (and recentred) before cropping.
    /// `None` means `target`.
    pub min_crop_side: Option<u32>,
    pub flip_prob: f64,
}

impl Default for CropConfig {
    fn default() -> Self {
        CropConfig {
            target: 32,
            scale_lo: 0.2,
            scale_hi: 1.0,
            ratio_lo: 3.0 / 4.0,
            ratio_hi: 4.0 / 3.0,
            delta: 0.1,
            shift_lo: 80.0,
            shift_hi: 100.0,
            s_min_override: None,
            min_crop_side: None,
            flip_prob: 0.5,
        }
    }
}

impl CropConfig {
    pub fn min_crop_side(&self) -> u32 {
        self.min_crop_side.unwrap_or(self.target)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.target == 0 {
            return bad("target must be positive");
        }
        if !(self.scale_lo > 0.0 && self.scale_lo <= self.scale_hi && self.scale_hi <= 1.0) {
            return bad("need 0 < scale_lo <= scale_hi <= 1");
        }
        if !(self.ratio_lo > 0.0 && self.ratio_lo <= self.ratio_hi) {
            return bad("need 0 < ratio_lo <= ratio_hi");
        }
        if !(self.delta >= 0.0) {
            return bad("delta must be >= 0");
        }
        if !(self.shift_lo >= 0.0 && self.shift_lo <= self.shift_hi) {
            return bad("need 0 <= shift_lo <= shift_hi");
        }
        if let Some(s) = self.s_min_override {
            if !(s > 0.0 && s <= 1.0) {
                return bad("s_min_override must be in (0, 1]");
            }
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return bad("flip_prob must be in [0, 1]");
        }
        Ok(())
    }
}

/// How the two views of an image are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    SceneScene,
    ObjScene,
    ObjObjDilate,
    ObjObjShift,
    DilateDilate,
    GtScene,
    GtDilate,
}

/// Where a strategy takes its boxes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxSource {
    None,
    Proposals,
    GroundTruth,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::SceneScene,
        Strategy::ObjScene,
        Strategy::ObjObjDilate,
        Strategy::ObjObjShift,
        Strategy::DilateDilate,
        Strategy::GtScene,
        Strategy::GtDilate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::SceneScene => "SceneScene",
            Strategy::ObjScene => "ObjScene",
            Strategy::ObjObjDilate => "ObjObjDilate",
            Strategy::ObjObjShift => "ObjObjShift",
            Strategy::DilateDilate => "DilateDilate",
            Strategy::GtScene => "GtScene",
            Strategy::GtDilate => "GtDilate",
        }
    }

    pub fn box_source(self) -> BoxSource {
        match self {
            Strategy::SceneScene => BoxSource::None,
            Strategy::GtScene | Strategy::GtDilate => BoxSource::GroundTruth,
            _ => BoxSource::Proposals,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Accepts `ObjObjDilate`, `obj_obj_dilate`, `objobjdilate`, ...
impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| *c != '_' && *c != '-')
            .collect::<String>()
            .to_ascii_lowercase();
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().to_ascii_lowercase() == norm)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown strategy {s:?}")))
    }
}

/// Which projection head a view is routed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Object,
    Context,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names_parse() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!("obj_obj_dilate".parse::<Strategy>().unwrap(), Strategy::ObjObjDilate);
        assert!("objobj".parse::<Strategy>().is_err());
    }

    #[test]
    fn default_config_is_valid() {
        CropConfig::default().validate().unwrap();
        let bad = CropConfig {
            scale_lo: 0.5,
            scale_hi: 0.4,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
