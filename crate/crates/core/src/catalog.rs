//! Mapping from weight deltas to the part (and so the intention class) that
//! left a tray.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub class_id: u32,
    pub name: String,
    pub sensor_id: String,
    pub expected_delta_g: f64,
    pub tolerance_g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartCatalog {
    pub parts: Vec<Part>,
}

impl PartCatalog {
    pub fn new(parts: Vec<Part>) -> Result<Self> {
        let catalog = PartCatalog { parts };
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for p in &self.parts {
            if p.class_id == 0 {
                return Err(Error::Validation(format!(
                    "part {} uses reserved class 0",
                    p.name
                )));
            }
            if !seen.insert(p.class_id) {
                return Err(Error::Validation(format!(
                    "duplicate class_id {} in catalog",
                    p.class_id
                )));
            }
            if !(p.tolerance_g > 0.0) {
                return Err(Error::Validation(format!(
                    "part {} has non-positive tolerance",
                    p.name
                )));
            }
            if p.expected_delta_g == 0.0 || !p.expected_delta_g.is_finite() {
                return Err(Error::Validation(format!(
                    "part {} has zero expected delta",
                    p.name
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let catalog: PartCatalog = io::read_json(path)?;
        catalog.validate()?;
        Ok(catalog)
    }

    /// Highest intention class id; class 0 is the non-intention class.
    pub fn num_intentions(&self) -> u32 {
        self.parts.iter().map(|p| p.class_id).max().unwrap_or(0)
    }

    pub fn get(&self, class_id: u32) -> Option<&Part> {
        self.parts.iter().find(|p| p.class_id == class_id)
    }

    /// The part on `sensor_id` whose expected delta is nearest to `delta_g`,
    /// if that part's tolerance admits it.
    pub fn classify(&self, sensor_id: &str, delta_g: f64) -> Option<u32> {
        self.parts
            .iter()
            .filter(|p| p.sensor_id == sensor_id)
            .map(|p| (p, (delta_g - p.expected_delta_g).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .filter(|(p, err)| *err <= p.tolerance_g)
            .map(|(p, _)| p.class_id)
    }

    /// The chair-assembly layout: 13 parts, eight on the wooden tray and
    /// five on the plastic tray, in SOP order.
    pub fn chair_default() -> Self {
        const LAYOUT: [(&str, &str, f64, f64); 13] = [
            ("seat_plate", "wood", -145.0, 6.0),
            ("dowel_1", "wood", -40.0, 6.0),
            ("floor_joint_1", "plastic", -30.0, 5.0),
            ("leg_1", "wood", -85.0, 6.0),
            ("dowel_2", "wood", -55.0, 6.0),
            ("floor_joint_2", "plastic", -42.0, 5.0),
            ("leg_2", "wood", -100.0, 6.0),
            ("back_rail", "wood", -70.0, 6.0),
            ("corner_joint_1", "plastic", -54.0, 5.0),
            ("leg_3", "wood", -115.0, 6.0),
            ("corner_joint_2", "plastic", -66.0, 5.0),
            ("back_plate", "wood", -130.0, 6.0),
            ("cap_joint", "plastic", -78.0, 5.0),
        ];
        PartCatalog {
            parts: LAYOUT
                .iter()
                .enumerate()
                .map(|(i, &(name, sensor, delta, tol))| Part {
                    class_id: i as u32 + 1,
                    name: name.into(),
                    sensor_id: sensor.into(),
                    expected_delta_g: delta,
                    tolerance_g: tol,
                })
                .collect(),
        }
    }
}
