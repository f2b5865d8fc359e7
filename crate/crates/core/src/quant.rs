//! Mid-riser uniform quantizer and bit-exact index packing.
//!
//! `[lower, upper]` is split into `2^bits` equal cells; each cell is
//! reconstructed at its midpoint, so there is never a level at `lower` or
//! `upper` (nor at zero for a symmetric interval). Values outside the interval
//! map to the nearest extreme cell.
//!
//! The named constructors cover every use in the protocols:
//!
//! | use                               | interval              | bits      |
//! |-----------------------------------|-----------------------|-----------|
//! | fixed-time `V` block              | `[-T·φ, T·φ]`         | `R_k`     |
//! | level-triggered `V` overshoot     | `[0, φ]`              | `r_V - 1` |
//! | level-triggered `U` overshoot     | `[0, θ]`              | `r_U`     |
//! | uniform `U` increment             | `[0, T_U·θ]`          | `r_U`     |
//! | uniform `V` increment             | `[-T_V·φ, T_V·φ]`     | `r_V`     |

use bitvec::prelude::*;

use crate::error::{Error, Result};

/// Widest index any message carries.
pub const MAX_BITS: u8 = 16;

pub type Bits = BitVec<u8, Msb0>;
pub type BitsRef = BitSlice<u8, Msb0>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MidRiserQuantizer {
    lower: f64,
    upper: f64,
    bits: u8,
    step: f64,
}

/// Quantization cell index, carried on the wire in exactly `bit_width` bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantIndex {
    value: u32,
    bit_width: u8,
}

impl QuantIndex {
    pub fn new(value: u32, bit_width: u8) -> Result<Self> {
        if bit_width > MAX_BITS {
            return Err(Error::protocol(format!(
                "bit width {bit_width} exceeds {MAX_BITS}"
            )));
        }
        if u64::from(value) >= 1u64 << bit_width {
            return Err(Error::protocol(format!(
                "index {value} does not fit in {bit_width} bits"
            )));
        }
        Ok(Self { value, bit_width })
    }

    pub fn value(self) -> u32 {
        self.value
    }

    pub fn bit_width(self) -> u8 {
        self.bit_width
    }

    /// Appends the index big-endian (most significant bit first).
    pub fn write(self, out: &mut Bits) {
        for i in (0..self.bit_width).rev() {
            out.push((self.value >> i) & 1 == 1);
        }
    }

    /// Reads a `bit_width`-bit index from the front of `bits`.
    pub fn read(bits: &BitsRef, bit_width: u8) -> Result<Self> {
        if bits.len() < usize::from(bit_width) {
            return Err(Error::protocol(format!(
                "need {bit_width} bits, {} available",
                bits.len()
            )));
        }
        let value = bits[..usize::from(bit_width)]
            .iter()
            .fold(0u32, |acc, b| (acc << 1) | u32::from(*b));
        Self::new(value, bit_width)
    }
}

impl MidRiserQuantizer {
    pub fn new(lower: f64, upper: f64, bits: u8) -> Result<Self> {
        if bits < 1 {
            return Err(Error::config("quantizer needs at least one bit"));
        }
        Self::with_bits(lower, upper, bits)
    }

    /// One-cell quantizer: every value reconstructs to the interval midpoint
    /// and nothing is transmitted. Used for the overshoot when `r_V = 1`.
    pub fn single_level(lower: f64, upper: f64) -> Result<Self> {
        Self::with_bits(lower, upper, 0)
    }

    fn with_bits(lower: f64, upper: f64, bits: u8) -> Result<Self> {
        if bits > MAX_BITS {
            return Err(Error::config(format!(
                "quantizer bit width {bits} exceeds {MAX_BITS}"
            )));
        }
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::config(format!(
                "degenerate quantizer interval [{lower}, {upper}]"
            )));
        }
        let levels = f64::from(1u32 << bits);
        Ok(Self {
            lower,
            upper,
            bits,
            step: (upper - lower) / levels,
        })
    }

    /// `V` at a fixed stop time `T`: `[-T·φ, T·φ]` with `R` bits.
    pub fn fixed_time_block(stop_time: u64, phi: f64, bits: u8) -> Result<Self> {
        let span = stop_time as f64 * phi;
        Self::new(-span, span, bits)
    }

    /// Level-triggered `V` overshoot: `[0, φ]` with `r_V - 1` bits.
    pub fn lt_v_overshoot(phi: f64, bits_v: u8) -> Result<Self> {
        if bits_v < 1 {
            return Err(Error::config("r_V must be at least 1 (the sign bit)"));
        }
        Self::with_bits(0.0, phi, bits_v - 1)
    }

    /// Level-triggered `U` overshoot: `[0, θ]` with `r_U` bits.
    pub fn lt_u_overshoot(theta: f64, bits_u: u8) -> Result<Self> {
        Self::new(0.0, theta, bits_u)
    }

    /// Uniform `U` increment over one period: `[0, T_U·θ]` with `r_U` bits.
    pub fn uniform_u(period: u64, theta: f64, bits_u: u8) -> Result<Self> {
        Self::new(0.0, period as f64 * theta, bits_u)
    }

    /// Uniform `V` increment over one period: `[-T_V·φ, T_V·φ]` with `r_V` bits.
    pub fn uniform_v(period: u64, phi: f64, bits_v: u8) -> Result<Self> {
        let span = period as f64 * phi;
        Self::new(-span, span, bits_v)
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn level_count(&self) -> u32 {
        1 << self.bits
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Cell index of `value`; cells are `[l, l + step)` with the top one
    /// closed, and out-of-range values clamp to the extreme cells.
    pub fn quantize(&self, value: f64) -> Result<QuantIndex> {
        if value.is_nan() {
            return Err(Error::InvalidInput("cannot quantize NaN".into()));
        }
        let top = self.level_count() - 1;
        let cell = ((value - self.lower) / self.step).floor();
        let index = if cell <= 0.0 {
            0
        } else if cell >= f64::from(top) {
            top
        } else {
            cell as u32
        };
        Ok(QuantIndex {
            value: index,
            bit_width: self.bits,
        })
    }

    pub fn dequantize(&self, index: QuantIndex) -> Result<f64> {
        if index.value >= self.level_count() {
            return Err(Error::protocol(format!(
                "quantizer index {} out of range 0..{}",
                index.value,
                self.level_count()
            )));
        }
        Ok(self.level(index.value))
    }

    #[inline]
    fn level(&self, index: u32) -> f64 {
        self.lower + (f64::from(index) + 0.5) * self.step
    }

    /// Convenience: `dequantize(quantize(value))`.
    pub fn reconstruct(&self, value: f64) -> Result<f64> {
        let q = self.quantize(value)?;
        Ok(self.level(q.value))
    }

    /// Largest reconstruction level, `upper - step/2`.
    pub fn max_level(&self) -> f64 {
        self.level(self.level_count() - 1)
    }
}
