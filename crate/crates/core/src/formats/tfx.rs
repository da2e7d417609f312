//! Tapered fixed-point: `TFX(n, IS, SC)`.
//!
//! Bit layout, MSB first: the sign bit `s`, whose complement `i = !s` is the
//! first digit of a unary run; further copies of `i`; a terminating `!i` bit
//! unless the run has reached `IS` digits; then `fs` fraction bits. With run
//! length `m` the integer part is `m - 1` when `i = 1` and `-m` when `i = 0`,
//! and the value is `(I + f / 2^fs) * 2^SC`.

use core::fmt;

use super::{Code, FormatError};
use crate::dyadic::Dyadic;

pub const MIN_BITS: u32 = 2;
pub const MAX_BITS: u32 = 16;
pub const MIN_SCALE: i32 = -4;
pub const MAX_SCALE: i32 = 0;

/// Format descriptor `TFX(n, IS, SC)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(into = "alloc::string::String", try_from = "alloc::string::String"))]
pub struct TfxConfig {
    n: u32,
    is_max: u32,
    sc: i32,
}

impl TfxConfig {
    pub fn new(n: u32, is_max: u32, sc: i32) -> Result<Self, FormatError> {
        if !(MIN_BITS..=MAX_BITS).contains(&n) {
            return Err(FormatError::UnsupportedWidth(n));
        }
        if !(1..=n).contains(&is_max) {
            return Err(FormatError::InvalidRunLimit { n, is_max });
        }
        if !(MIN_SCALE..=MAX_SCALE).contains(&sc) {
            return Err(FormatError::InvalidScale(sc));
        }
        Ok(TfxConfig { n, is_max, sc })
    }

    #[inline]
    pub fn bits(&self) -> u32 {
        self.n
    }

    #[inline]
    pub fn is_max(&self) -> u32 {
        self.is_max
    }

    #[inline]
    pub fn scale(&self) -> i32 {
        self.sc
    }

    /// Widest fraction field of the format: `n - 1` when `IS = 1`, else `n - 2`.
    #[inline]
    pub fn max_frac_bits(&self) -> u32 {
        if self.is_max == 1 {
            self.n - 1
        } else {
            self.n - 2
        }
    }

    /// Fraction width when the run saturates at `IS` digits.
    #[inline]
    pub fn saturated_frac_bits(&self) -> u32 {
        self.n - self.is_max
    }

    fn frac_bits_for_run(&self, m: u32) -> u32 {
        let terminator = u32::from(m < self.is_max);
        self.n - m - terminator
    }

    /// Splits a code into its fields.
    pub fn unpack(&self, code: Code) -> UnpackedTfx {
        let n = self.n;
        let bits = u32::from(code.bits()) & mask(n);
        let sign_bit = (bits >> (n - 1)) & 1;
        let run_digit = sign_bit ^ 1;
        let mut m = 1;
        // Next bit to examine, counted from the LSB.
        let mut pos = n - 1;
        while m < self.is_max && pos > 0 {
            if (bits >> (pos - 1)) & 1 == run_digit {
                m += 1;
                pos -= 1;
            } else {
                break;
            }
        }
        let fs = self.frac_bits_for_run(m);
        let f = bits & mask(fs);
        let int_value = if run_digit == 1 {
            m as i32 - 1
        } else {
            -(m as i32)
        };
        UnpackedTfx {
            negative: sign_bit == 1,
            int_value,
            frac_numerator: f,
            frac_bits: fs,
            run_length: m,
        }
    }

    /// Inverse of [`TfxConfig::unpack`].
    pub fn pack(&self, u: &UnpackedTfx) -> Result<Code, FormatError> {
        let m = u.run_length;
        if m == 0 || m > self.is_max {
            return Err(FormatError::RunTooLong {
                run: m,
                is_max: self.is_max,
            });
        }
        let expected_int = if u.negative {
            -(m as i32)
        } else {
            m as i32 - 1
        };
        if u.int_value != expected_int {
            return Err(FormatError::InconsistentFields);
        }
        let fs = self.frac_bits_for_run(m);
        if u.frac_bits != fs {
            return Err(FormatError::InconsistentFields);
        }
        if u.frac_bits < 32 && u.frac_numerator >> u.frac_bits != 0 {
            return Err(FormatError::FractionTooWide {
                f: u.frac_numerator,
                fs: u.frac_bits,
            });
        }
        let n = self.n;
        let sign_bit = u32::from(u.negative);
        let run_digit = sign_bit ^ 1;
        let mut bits = sign_bit << (n - 1);
        // Digits 2..=m of the run follow the sign.
        let run_tail = m - 1;
        if run_digit == 1 {
            bits |= mask(run_tail) << (n - m);
        }
        if m < self.is_max {
            bits |= (run_digit ^ 1) << (n - m - 1);
        }
        bits |= u.frac_numerator;
        Ok(Code::from_raw(bits as u16))
    }

    /// Exact value of a code.
    pub fn value(&self, code: Code) -> Dyadic {
        self.unpack(code).to_dyadic(self.sc)
    }

    /// Largest positive value: `(IS - 1) + (1 - 2^-fs_sat)`, scaled.
    pub fn max_pos(&self) -> Dyadic {
        let fs = self.saturated_frac_bits();
        let mant = ((self.is_max as i128 - 1) << fs) + ((1i128 << fs) - 1);
        Dyadic::new(mant, self.sc - fs as i32)
    }

    /// Most negative value: `-IS`, scaled.
    pub fn min_neg(&self) -> Dyadic {
        Dyadic::new(-(self.is_max as i128), self.sc)
    }

    /// Smallest positive value: `2^-(widest fraction)`, scaled.
    pub fn min_pos(&self) -> Dyadic {
        Dyadic::new(1, self.sc - self.max_frac_bits() as i32)
    }
}

impl fmt::Display for TfxConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tfx:{}/{}/{}", self.n, self.is_max, self.sc)
    }
}

/// The decoded fields of a TFX code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnpackedTfx {
    /// Sign bit `s`.
    pub negative: bool,
    /// Integer part `I`.
    pub int_value: i32,
    /// Fraction numerator `f`, `0 <= f < 2^fs`.
    pub frac_numerator: u32,
    /// Fraction width `fs`.
    pub frac_bits: u32,
    /// Unary run length `m`, including the complemented sign bit.
    pub run_length: u32,
}

impl UnpackedTfx {
    pub fn sign(&self) -> i32 {
        if self.negative {
            -1
        } else {
            1
        }
    }

    /// `(I + f / 2^fs) * 2^sc` as an exact dyadic.
    pub fn to_dyadic(&self, sc: i32) -> Dyadic {
        let mant = ((self.int_value as i128) << self.frac_bits) + self.frac_numerator as i128;
        Dyadic::new(mant, sc - self.frac_bits as i32)
    }

    pub fn to_real(&self, sc: i32) -> f64 {
        self.to_dyadic(sc).to_f64()
    }
}

#[inline]
pub(crate) fn mask(bits: u32) -> u32 {
    if bits >= 32 {
        u32::MAX
    } else {
        (1u32 << bits) - 1
    }
}
