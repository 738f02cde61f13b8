//! Per-tensor symmetric quantization, KL-based bit-width selection and the
//! simulated integer GEMM.

mod gemm;
mod histogram;

use serde::{Deserialize, Serialize};

pub use gemm::{int_matmul, integer_gemm, max_safe_inner_dim};
pub use histogram::{
    build_histogram, build_histogram_in_range, kl_divergence, kl_ratio, select_bit_width,
    BitSelection, HistogramDistribution, KlRatio, DEFAULT_BINS, EPSILON, KL_FLOOR, MIN_BINS,
};

use crate::error::{Error, Result};
use crate::tensor_io::{IntMatrix, Matrix};

/// Supported integer widths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum BitWidth {
    Int4,
    Int8,
}

impl BitWidth {
    pub fn bits(self) -> u32 {
        match self {
            BitWidth::Int4 => 4,
            BitWidth::Int8 => 8,
        }
    }

    /// `2^(bits - 1) - 1`.
    pub fn qmax(self) -> i32 {
        (1 << (self.bits() - 1)) - 1
    }
}

impl TryFrom<u8> for BitWidth {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            4 => Ok(BitWidth::Int4),
            8 => Ok(BitWidth::Int8),
            other => Err(format!("unsupported bit width {other}, expected 4 or 8")),
        }
    }
}

impl From<BitWidth> for u8 {
    fn from(b: BitWidth) -> u8 {
        b.bits() as u8
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub bits: BitWidth,
    pub scale: f64,
}

impl QuantParams {
    pub fn new(bits: BitWidth, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidParameter(format!("scale must be positive, got {scale}")));
        }
        Ok(Self { bits, scale })
    }

    /// Scale that maps `max_abs` onto `qmax`.
    pub fn for_max(bits: BitWidth, max_abs: f64) -> Result<Self> {
        if !(max_abs > 0.0) {
            return Err(Error::DegenerateScale);
        }
        Self::new(bits, max_abs / bits.qmax() as f64)
    }

    pub fn qmax(&self) -> i32 {
        self.bits.qmax()
    }

    /// `clamp(round(v / s), -qmax, qmax)`, rounding half away from zero.
    #[inline]
    pub fn quantize_value(&self, v: f64) -> i32 {
        let q = self.qmax() as f64;
        (v / self.scale).round().clamp(-q, q) as i32
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedTensor {
    pub q: IntMatrix,
    pub params: QuantParams,
}

impl QuantizedTensor {
    pub fn new(q: IntMatrix, params: QuantParams) -> Result<Self> {
        if q.max_abs() > params.qmax() {
            return Err(Error::InvalidParameter(format!(
                "integer code {} outside [-{q}, {q}]",
                q.max_abs(),
                q = params.qmax()
            )));
        }
        Ok(Self { q, params })
    }
}

pub fn quantize_per_tensor(m: &Matrix, bits: BitWidth, scale_override: Option<f64>) -> Result<QuantizedTensor> {
    let params = match scale_override {
        Some(s) => QuantParams::new(bits, s)?,
        None => QuantParams::for_max(bits, m.max_abs())?,
    };
    Ok(quantize_with(m, params))
}

pub(crate) fn quantize_with(m: &Matrix, params: QuantParams) -> QuantizedTensor {
    let data = m.data().iter().map(|&v| params.quantize_value(v)).collect();
    QuantizedTensor {
        q: IntMatrix::new(m.rows(), m.cols(), data).expect("shape preserved"),
        params,
    }
}

pub fn dequantize(qt: &QuantizedTensor) -> Matrix {
    let s = qt.params.scale;
    let data = qt.q.data().iter().map(|&q| q as f64 * s).collect();
    Matrix::new(qt.q.rows(), qt.q.cols(), data).expect("dequantized values are finite")
}

/// Quantize then dequantize with the tensor's own max scale. A zero tensor
/// comes back unchanged.
pub fn fake_quantize(m: &Matrix, bits: BitWidth) -> Matrix {
    match quantize_per_tensor(m, bits, None) {
        Ok(qt) => dequantize(&qt),
        Err(_) => m.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn qmax_values() {
        assert_eq!(BitWidth::Int4.qmax(), 7);
        assert_eq!(BitWidth::Int8.qmax(), 127);
        assert!(BitWidth::try_from(3).is_err());
        assert_eq!(serde_json::to_string(&BitWidth::Int4).unwrap(), "4");
    }

    #[test]
    fn int4_unit_range() {
        let m = Matrix::from_rows(&[vec![-1.0, 0.0, 1.0]]).unwrap();
        let qt = quantize_per_tensor(&m, BitWidth::Int4, None).unwrap();
        assert_eq!(qt.params.scale, 1.0 / 7.0);
        assert_eq!(qt.q.data(), &[-7, 0, 7]);
        let back = dequantize(&qt);
        assert!(back.max_abs_diff(&m) < 1e-15);
    }

    #[test]
    fn int8_unit_scale_is_exact_on_integers() {
        let m = Matrix::from_rows(&[vec![-127.0, -3.0, 0.0, 64.0, 127.0]]).unwrap();
        let qt = quantize_per_tensor(&m, BitWidth::Int8, None).unwrap();
        assert_eq!(qt.params.scale, 1.0);
        assert_eq!(dequantize(&qt), m);
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        let p = QuantParams::new(BitWidth::Int8, 1.0).unwrap();
        assert_eq!(p.quantize_value(2.5), 3);
        assert_eq!(p.quantize_value(-2.5), -3);
        assert_eq!(p.quantize_value(500.0), 127);
        assert_eq!(p.quantize_value(-500.0), -127);
    }

    #[test]
    fn degenerate_scale() {
        let z = Matrix::zeros(2, 2);
        assert!(matches!(
            quantize_per_tensor(&z, BitWidth::Int8, None),
            Err(Error::DegenerateScale)
        ));
        let qt = quantize_per_tensor(&z, BitWidth::Int8, Some(0.5)).unwrap();
        assert_eq!(dequantize(&qt), z);
    }

    #[test]
    fn override_scale_keeps_flattened_values_in_range() {
        let t = 2.0;
        let plan = crate::flatten::build_flatten_plan(&[9.0, 1.0], t, 4).unwrap();
        let x = Matrix::from_rows(&[vec![9.0, -1.0], vec![-8.3, 0.4]]).unwrap();
        let flat = crate::flatten::flatten_tensor(&x, &plan).unwrap();
        let qt = quantize_per_tensor(&flat, BitWidth::Int4, Some(t / 7.0)).unwrap();
        // no element needs clamping because every flattened value is <= T
        for (q, v) in qt.q.data().iter().zip(flat.data()) {
            assert_eq!(*q, (v / (t / 7.0)).round() as i32);
        }
    }

    proptest! {
        #[test]
        fn round_trip_error_is_half_a_step(v in prop::collection::vec(-1e3f64..1e3, 1..64)) {
            let m = Matrix::new(1, v.len(), v).unwrap();
            prop_assume!(m.max_abs() > 0.0);
            for bits in [BitWidth::Int4, BitWidth::Int8] {
                let qt = quantize_per_tensor(&m, bits, None).unwrap();
                let s = qt.params.scale;
                prop_assert!(dequantize(&qt).max_abs_diff(&m) <= s / 2.0 + 1e-12 * m.max_abs());
                prop_assert!(qt.q.max_abs() <= bits.qmax());
            }
        }
    }
}
