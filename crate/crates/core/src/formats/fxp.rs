//! Two's-complement fixed-point: an `n`-bit integer scaled by `2^-frac_bits`.

use core::fmt;

use super::{Code, FormatError};
use crate::dyadic::Dyadic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(into = "alloc::string::String", try_from = "alloc::string::String"))]
pub struct FxpConfig {
    n: u32,
    frac_bits: u32,
}

impl FxpConfig {
    pub fn new(n: u32, frac_bits: u32) -> Result<Self, FormatError> {
        if !(super::tfx::MIN_BITS..=super::tfx::MAX_BITS).contains(&n) {
            return Err(FormatError::UnsupportedWidth(n));
        }
        if !(1..n).contains(&frac_bits) {
            return Err(FormatError::InvalidFracBits { n, frac_bits });
        }
        Ok(FxpConfig { n, frac_bits })
    }

    #[inline]
    pub fn bits(&self) -> u32 {
        self.n
    }

    #[inline]
    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    /// The stored integer, sign-extended.
    #[inline]
    pub fn integer(&self, code: Code) -> i32 {
        let shift = 32 - self.n;
        ((u32::from(code.bits()) << shift) as i32) >> shift
    }

    pub fn value(&self, code: Code) -> Dyadic {
        Dyadic::new(self.integer(code) as i128, -(self.frac_bits as i32))
    }

    pub fn max_pos(&self) -> Dyadic {
        Dyadic::new((1i128 << (self.n - 1)) - 1, -(self.frac_bits as i32))
    }

    pub fn min_neg(&self) -> Dyadic {
        Dyadic::new(-(1i128 << (self.n - 1)), -(self.frac_bits as i32))
    }

    pub fn min_pos(&self) -> Dyadic {
        Dyadic::new(1, -(self.frac_bits as i32))
    }
}

impl fmt::Display for FxpConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fxp:{}/{}", self.n, self.frac_bits)
    }
}
