use crate::error::{Error, Result};

/// A bfloat16 value: the top 16 bits of an IEEE-754 binary32.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[repr(transparent)]
pub struct Bf16(pub u16);

impl Bf16 {
    #[inline]
    pub fn to_bits(self) -> u16 {
        self.0
    }

    #[inline]
    pub fn from_bits(bits: u16) -> Self {
        Bf16(bits)
    }

    /// Zero-extend back to binary32. Exact.
    #[inline]
    pub fn to_f32(self) -> f32 {
        f32::from_bits((self.0 as u32) << 16)
    }

    /// Round-to-nearest-even without the finiteness check. Finite values
    /// beyond the bf16 range round to infinity.
    #[inline]
    pub fn from_f32_unchecked(x: f32) -> Self {
        let bits = x.to_bits();
        let lsb = (bits >> 16) & 1;
        Bf16((bits.wrapping_add(0x7fff + lsb) >> 16) as u16)
    }
}

/// Nearest bfloat16 to `x`, ties to even.
pub fn quantize_bf16(x: f32) -> Result<Bf16> {
    if !x.is_finite() {
        return Err(Error::NonFinite {
            context: "quantize_bf16",
        });
    }
    Ok(Bf16::from_f32_unchecked(x))
}

#[inline]
pub fn dequantize_bf16(v: Bf16) -> f32 {
    v.to_f32()
}
