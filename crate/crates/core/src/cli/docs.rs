//! JSON documents written and read by the command-line tools.

use serde::{Deserialize, Serialize};

use crate::calibration::TruncationPolicy;
use crate::config::QuantConfig;
use crate::error::{Error, Result};
use crate::flatten::FlattenPlan;
use crate::pipeline::{LayerCalibration, LayerQuantConfig, ModelReport, SweepParam, SweepRow};
use crate::quantize::{BitWidth, KlRatio, QuantParams, QuantizedTensor};
use crate::smoothing::SmoothingScales;
use crate::synth::SyntheticConfig;
use crate::tensor_io::IntMatrix;

pub const SCHEMA_VERSION: u32 = 1;

/// Floats written as shortest round-trip decimal strings.
pub mod decimal {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(|_| D::Error::custom(format!("invalid decimal '{s}'")))
    }

    pub mod vec {
        use serde::{de::Error as _, ser::SerializeSeq, Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for x in v {
                seq.serialize_element(&x.to_string())?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Vec::<String>::deserialize(d)?
                .iter()
                .map(|s| s.parse().map_err(|_| D::Error::custom(format!("invalid decimal '{s}'"))))
                .collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenDoc {
    pub schema_version: u32,
    pub config: SyntheticConfig,
    pub layers: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    pub layer: String,
    #[serde(flatten)]
    pub calibration: LayerCalibration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsDoc {
    pub schema_version: u32,
    pub config: QuantConfig,
    pub layers: Vec<LayerStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub layer: String,
    pub plan: FlattenPlan,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanDoc {
    pub schema_version: u32,
    pub config: QuantConfig,
    pub layers: Vec<LayerPlan>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalesRecord {
    #[serde(with = "decimal")]
    pub alpha: f64,
    #[serde(with = "decimal::vec")]
    pub s: Vec<f64>,
    #[serde(with = "decimal")]
    pub mu_x: f64,
    #[serde(with = "decimal")]
    pub sigma_x: f64,
    #[serde(with = "decimal")]
    pub mu_w: f64,
    #[serde(with = "decimal")]
    pub sigma_w: f64,
}

impl From<&SmoothingScales> for ScalesRecord {
    fn from(s: &SmoothingScales) -> Self {
        Self {
            alpha: s.alpha,
            s: s.s.clone(),
            mu_x: s.mu_x,
            sigma_x: s.sigma_x,
            mu_w: s.mu_w,
            sigma_w: s.sigma_w,
        }
    }
}

impl From<&ScalesRecord> for SmoothingScales {
    fn from(r: &ScalesRecord) -> Self {
        Self {
            alpha: r.alpha,
            s: r.s.clone(),
            mu_x: r.mu_x,
            sigma_x: r.sigma_x,
            mu_w: r.mu_w,
            sigma_w: r.sigma_w,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlRecord {
    #[serde(with = "decimal")]
    pub kl_int4: f64,
    #[serde(with = "decimal")]
    pub kl_int8: f64,
    #[serde(with = "decimal")]
    pub ratio: f64,
}

impl From<KlRatio> for KlRecord {
    fn from(k: KlRatio) -> Self {
        Self {
            kl_int4: k.kl_int4,
            kl_int8: k.kl_int8,
            ratio: k.ratio,
        }
    }
}

impl From<KlRecord> for KlRatio {
    fn from(k: KlRecord) -> Self {
        Self {
            kl_int4: k.kl_int4,
            kl_int8: k.kl_int8,
            ratio: k.ratio,
        }
    }
}

/// Everything needed to rebuild a quantized layer, apart from the integer
/// weight codes stored in the quantized archive under `weight_tensor`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRecipe {
    pub layer: String,
    #[serde(flatten)]
    pub config: QuantConfig,
    pub gptq: bool,
    pub in_features: usize,
    pub out_features: usize,
    pub bits: BitWidth,
    pub smooth_scales: ScalesRecord,
    pub truncation: TruncationPolicy,
    pub weight_truncation: TruncationPolicy,
    pub plan_x: FlattenPlan,
    pub plan_w: FlattenPlan,
    #[serde(with = "decimal")]
    pub act_scale: f64,
    #[serde(with = "decimal")]
    pub weight_scale: f64,
    pub weight_tensor: String,
    pub kl_ratio_act: KlRecord,
    pub kl_ratio_w: KlRecord,
}

impl LayerRecipe {
    pub fn from_layer(name: &str, q: &LayerQuantConfig) -> Self {
        Self {
            layer: name.to_string(),
            config: q.config.clone(),
            gptq: q.gptq(),
            in_features: q.in_features,
            out_features: q.out_features,
            bits: q.bits,
            smooth_scales: (&q.smooth_scales).into(),
            truncation: q.truncation.clone(),
            weight_truncation: q.weight_truncation.clone(),
            plan_x: q.plan_x.clone(),
            plan_w: q.plan_w.clone(),
            act_scale: q.act_scale,
            weight_scale: q.weight_q.params.scale,
            weight_tensor: name.to_string(),
            kl_ratio_act: q.kl_ratio_act.into(),
            kl_ratio_w: q.kl_ratio_w.into(),
        }
    }

    pub fn to_layer(&self, codes: &IntMatrix) -> Result<LayerQuantConfig> {
        let bad = |m: String| Err(Error::Recipe(format!("layer {}: {m}", self.layer)));
        if (codes.rows(), codes.cols()) != (self.plan_w.padded_width(), self.out_features) {
            return bad(format!(
                "weight codes are {}x{}, recipe expects {}x{}",
                codes.rows(),
                codes.cols(),
                self.plan_w.padded_width(),
                self.out_features
            ));
        }
        if self.smooth_scales.s.len() != self.in_features || self.plan_x.channels() != self.in_features {
            return bad("smoothing scales or activation plan do not match in_features".into());
        }
        if self.plan_w.channels() != self.plan_x.padded_width() {
            return bad("weight plan does not cover the activation plan's padded width".into());
        }
        if self.gptq != self.config.mode.uses_gptq() {
            return bad(format!("gptq flag disagrees with mode {}", self.config.mode));
        }
        let weight_q = QuantizedTensor::new(codes.clone(), QuantParams::new(self.bits, self.weight_scale)?)?;
        Ok(LayerQuantConfig {
            config: self.config.clone(),
            in_features: self.in_features,
            out_features: self.out_features,
            bits: self.bits,
            smooth_scales: (&self.smooth_scales).into(),
            truncation: self.truncation.clone(),
            weight_truncation: self.weight_truncation.clone(),
            plan_x: self.plan_x.clone(),
            plan_w: self.plan_w.clone(),
            weight_q,
            act_scale: self.act_scale,
            kl_ratio_act: self.kl_ratio_act.into(),
            kl_ratio_w: self.kl_ratio_w.into(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecipeDoc {
    pub schema_version: u32,
    pub config: QuantConfig,
    pub layers: Vec<LayerRecipe>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub schema_version: u32,
    pub config: QuantConfig,
    #[serde(flatten)]
    pub report: ModelReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepDoc {
    pub schema_version: u32,
    pub config: QuantConfig,
    pub param: SweepParam,
    pub rows: Vec<SweepRow>,
}

pub fn to_json<T: Serialize>(doc: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(doc)?;
    s.push('\n');
    Ok(s)
}

pub fn check_schema(found: u32) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::Recipe(format!(
            "schema_version {found} is not supported, expected {SCHEMA_VERSION}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct D(#[serde(with = "decimal")] f64);

    #[test]
    fn decimals_round_trip_exactly() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 123456.789e10, -0.0, 5e-324] {
            let json = serde_json::to_string(&D(v)).unwrap();
            assert!(json.starts_with('"'));
            let back: D = serde_json::from_str(&json).unwrap();
            assert_eq!(back.0.to_bits(), v.to_bits());
        }
        assert!(serde_json::from_str::<D>("\"abc\"").is_err());
    }
}
