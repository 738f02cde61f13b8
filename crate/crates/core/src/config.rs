use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::flatten::DEFAULT_BLOCK;
use crate::gptq::DEFAULT_DAMPING;
use crate::quantize::DEFAULT_BINS;

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_BETA: f64 = 1.3;
pub const DEFAULT_GAMMA: f64 = 1.86;
pub const DEFAULT_SEED: u64 = 42;

/// Quantization level.
///
/// * `O1`: every layer INT8.
/// * `O2`: INT4/INT8 mixed by KL ratio, round-to-nearest weights.
/// * `O3`: as `O2`, with GPTQ weight rounding on the flattened weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    O1,
    #[default]
    O2,
    O3,
}

impl Mode {
    pub fn mixed_precision(self) -> bool {
        !matches!(self, Mode::O1)
    }

    pub fn uses_gptq(self) -> bool {
        matches!(self, Mode::O3)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::O1 => "o1",
            Mode::O2 => "o2",
            Mode::O3 => "o3",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "o1" => Ok(Mode::O1),
            "o2" => Ok(Mode::O2),
            "o3" => Ok(Mode::O3),
            other => Err(Error::InvalidParameter(format!(
                "unknown mode '{other}', expected o1, o2 or o3"
            ))),
        }
    }
}

/// Per-layer quantization settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantConfig {
    pub mode: Mode,
    /// Migration strength of the smoothing stage.
    pub alpha: f64,
    /// Threshold multiplier on the mean clipped channel maximum.
    pub beta: f64,
    /// KL-ratio tolerance for INT4.
    pub gamma: f64,
    pub block: usize,
    pub bins: usize,
    pub damping: f64,
    pub smoothing: bool,
    pub clip_outliers: bool,
}

impl Default for QuantConfig {
    fn default() -> Self {
        Self {
            mode: Mode::default(),
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            gamma: DEFAULT_GAMMA,
            block: DEFAULT_BLOCK,
            bins: DEFAULT_BINS,
            damping: DEFAULT_DAMPING,
            smoothing: true,
            clip_outliers: true,
        }
    }
}

impl QuantConfig {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.beta > 0.0) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.gamma >= 0.0) {
            return bad(format!("gamma must be non-negative, got {}", self.gamma));
        }
        if self.block == 0 {
            return bad("block must be positive".into());
        }
        if self.bins < crate::quantize::MIN_BINS {
            return bad(format!("bins must be at least {}, got {}", crate::quantize::MIN_BINS, self.bins));
        }
        if !(self.damping > 0.0) {
            return bad(format!("damping must be positive, got {}", self.damping));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = QuantConfig::default();
        assert_eq!((c.alpha, c.beta, c.gamma, c.block), (0.5, 1.3, 1.86, 32));
        assert_eq!((c.bins, c.damping), (DEFAULT_BINS, 0.01));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("O3".parse::<Mode>().unwrap(), Mode::O3);
        assert!("o4".parse::<Mode>().is_err());
        assert_eq!(serde_json::to_string(&Mode::O1).unwrap(), "\"o1\"");
        assert!(!Mode::O1.mixed_precision() && Mode::O3.uses_gptq());
    }

    #[test]
    fn validation() {
        let mut c = QuantConfig::default();
        c.alpha = 1.5;
        assert!(c.validate().is_err());
        let c = QuantConfig { bins: 8, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
