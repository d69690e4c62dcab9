//! binary16 rounding emulation.

use half::f16;

use crate::error::Result;
use crate::tensor::{DType, TensorBlob};

/// Largest finite binary16 value.
pub const F16_MAX: f32 = 65504.0;

/// Rounds to the nearest binary16 value (ties to even) and widens back.
/// Finite values that would overflow saturate to `±65504`; NaN stays NaN.
pub fn round_f16(x: f32) -> f32 {
    let y = f16::from_f32(x).to_f32();
    if y.is_infinite() && x.is_finite() {
        F16_MAX.copysign(x)
    } else {
        y
    }
}

pub fn round_f16_slice(values: &mut [f32]) {
    for v in values {
        *v = round_f16(*v);
    }
}

/// Element-wise [`round_f16`] over an F32 tensor. The result stays F32.
pub fn round_fp16(t: &TensorBlob) -> Result<TensorBlob> {
    t.expect_dtype(DType::F32)?;
    let mut values = t.to_f32_vec()?;
    round_f16_slice(&mut values);
    TensorBlob::from_f32(t.name(), t.shape().to_vec(), &values)
}
