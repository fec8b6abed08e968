use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scheduler::{DEFAULT_STEPS, TRAIN_STEPS};

pub const MIN_GUIDANCE_SCALE: f64 = 0.0;
pub const MAX_GUIDANCE_SCALE: f64 = 20.0;
pub const DEFAULT_GUIDANCE_SCALE: f64 = 7.0;

/// The inputs that fully determine a trajectory (together with the engine).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub prompt: String,
    pub seed: u64,
    pub guidance_scale: f64,
    pub num_steps: usize,
}

#[derive(Serialize)]
struct Canonical<'a> {
    engine: &'a str,
    guidance_scale: f64,
    num_steps: usize,
    prompt: &'a str,
    seed: u64,
}

impl GenerationConfig {
    /// A validated 50-step configuration.
    pub fn new(prompt: impl Into<String>, seed: u64, guidance_scale: f64) -> Result<Self> {
        let cfg = Self {
            prompt: prompt.into(),
            seed,
            guidance_scale,
            num_steps: DEFAULT_STEPS,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Overrides the step count; short runs are for debugging and tests.
    pub fn with_steps(mut self, num_steps: usize) -> Result<Self> {
        self.num_steps = num_steps;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_GUIDANCE_SCALE..=MAX_GUIDANCE_SCALE).contains(&self.guidance_scale) {
            return Err(Error::invalid(format!(
                "guidance scale must be in [{MIN_GUIDANCE_SCALE}, {MAX_GUIDANCE_SCALE}], got {}",
                self.guidance_scale
            )));
        }
        if !(1..=TRAIN_STEPS).contains(&self.num_steps) {
            return Err(Error::invalid(format!(
                "num_steps must be in [1, {TRAIN_STEPS}], got {}",
                self.num_steps
            )));
        }
        Ok(())
    }

    /// Key-sorted compact JSON of the config and engine version.
    pub fn canonical_bytes(&self, engine_version: &str) -> Vec<u8> {
        // -0.0 and 0.0 are the same request.
        let scale = if self.guidance_scale == 0.0 { 0.0 } else { self.guidance_scale };
        serde_json::to_vec(&Canonical {
            engine: engine_version,
            guidance_scale: scale,
            num_steps: self.num_steps,
            prompt: &self.prompt,
            seed: self.seed,
        })
        .expect("canonical config serializes")
    }

    /// Hex SHA-256 of [`canonical_bytes`](Self::canonical_bytes).
    pub fn trajectory_id(&self, engine_version: &str) -> String {
        hex::encode(Sha256::digest(self.canonical_bytes(engine_version)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_bounds() {
        assert!(GenerationConfig::new("x", 1, 0.0).is_ok());
        assert!(GenerationConfig::new("x", 1, 20.0).is_ok());
        assert!(GenerationConfig::new("x", 1, 25.0).is_err());
        assert!(GenerationConfig::new("x", 1, -0.5).is_err());
        assert!(GenerationConfig::new("x", 1, f64::NAN).is_err());
        assert!(GenerationConfig::new("x", 1, 7.0).unwrap().with_steps(0).is_err());
    }

    #[test]
    fn canonical_form_is_stable() {
        let cfg = GenerationConfig::new("a \"quoted\" prompt", u64::MAX, 7.0).unwrap();
        assert_eq!(
            String::from_utf8(cfg.canonical_bytes("v1")).unwrap(),
            r#"{"engine":"v1","guidance_scale":7.0,"num_steps":50,"prompt":"a \"quoted\" prompt","seed":18446744073709551615}"#
        );
        let id = cfg.trajectory_id("v1");
        assert_eq!(id.len(), 64);
        assert_eq!(id, cfg.clone().trajectory_id("v1"));
        assert_ne!(id, cfg.trajectory_id("v2"));
        let neg = GenerationConfig { guidance_scale: -0.0, ..cfg.clone() };
        let pos = GenerationConfig { guidance_scale: 0.0, ..cfg };
        assert_eq!(neg.trajectory_id("v1"), pos.trajectory_id("v1"));
    }
}
