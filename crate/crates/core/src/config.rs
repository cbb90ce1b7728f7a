//! Pipeline configuration file.
//!
//! A TOML document with one table per stage. Every key is optional; missing
//! keys take the defaults below.
//!
//! ```toml
//! [mask]
//! offset_px = 20.0
//! side_rule = "auto_from_arm"     # or "keep_left_of_wrist" / "keep_right_of_wrist"
//!
//! [matching]
//! ratio_threshold = 0.3
//! epipolar_tolerance_px = 2.0
//! min_disparity_px = 1.0
//!
//! [pointing]
//! scale_factor = 3.0
//! z_gap_max = 0.5
//! tie_break = "closest_z"         # or "lowest_index"
//! shoulder_filter = true
//!
//! [evaluation]
//! association_radius_px = 10.0
//!
//! [run]
//! seed = 0
//! jobs = 0                        # 0 = one per CPU
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidates::{MaskConfig, MatchConfig};
use crate::eval::{EvalConfig, DEFAULT_ASSOCIATION_RADIUS_PX};
use crate::pointing::{PointingConfig, ResolveConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub association_radius_px: f64,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            association_radius_px: DEFAULT_ASSOCIATION_RADIUS_PX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub jobs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mask: MaskConfig,
    pub matching: MatchConfig,
    pub pointing: PointingConfig,
    pub evaluation: EvaluationSection,
    pub run: RunSection,
}

impl PipelineConfig {
    pub fn from_toml(document: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(document).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.resolve_config()
            .validate()
            .map_err(ConfigError::Invalid)?;
        let r = self.evaluation.association_radius_px;
        if !(r >= 0.0) || !r.is_finite() {
            return Err(ConfigError::Invalid(format!(
                "evaluation.association_radius_px must be >= 0, got {r}"
            )));
        }
        Ok(())
    }

    pub fn resolve_config(&self) -> ResolveConfig {
        ResolveConfig {
            mask: self.mask,
            matching: self.matching,
            pointing: self.pointing,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            resolve: self.resolve_config(),
            association_radius_px: self.evaluation.association_radius_px,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::SideRule;
    use crate::pointing::TieBreak;

    #[test]
    fn defaults() {
        let cfg = PipelineConfig::from_toml("").unwrap();
        assert_eq!(cfg.mask.offset_px, 20.0);
        assert_eq!(cfg.mask.side_rule, SideRule::AutoFromArm);
        assert_eq!(cfg.matching.ratio_threshold, 0.3);
        assert_eq!(cfg.matching.epipolar_tolerance_px, 2.0);
        assert_eq!(cfg.matching.min_disparity_px, 1.0);
        assert_eq!(cfg.pointing.scale_factor, 3.0);
        assert_eq!(cfg.pointing.z_gap_max, 0.5);
        assert_eq!(cfg.pointing.tie_break, TieBreak::ClosestZ);
        assert!(cfg.pointing.shoulder_filter);
    }

    #[test]
    fn partial_override() {
        let cfg = PipelineConfig::from_toml(
            "[matching]\nratio_threshold = 0.5\n[pointing]\ntie_break = \"lowest_index\"\n",
        )
        .unwrap();
        assert_eq!(cfg.matching.ratio_threshold, 0.5);
        assert_eq!(cfg.matching.epipolar_tolerance_px, 2.0);
        assert_eq!(cfg.pointing.tie_break, TieBreak::LowestIndex);
    }

    #[test]
    fn rejects_bad_values_and_keys() {
        assert!(matches!(
            PipelineConfig::from_toml("[matching]\nratio_threshold = 1.5\n"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            PipelineConfig::from_toml("[matching]\nratio = 0.3\n"),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = PipelineConfig::default();
        cfg.pointing.scale_factor = 10.0;
        cfg.run.seed = 99;
        assert_eq!(PipelineConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
