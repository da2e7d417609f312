//! Exact dyadic rationals `mant * 2^exp`.
//!
//! Every value in both number formats, every midpoint between neighbours and
//! every quire state is a dyadic rational, so rounding decisions are made by
//! exact integer comparison.

use core::cmp::Ordering;

/// The value `mant * 2^exp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dyadic {
    pub mant: i128,
    pub exp: i32,
}

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic { mant: 0, exp: 0 };

    pub const fn new(mant: i128, exp: i32) -> Self {
        Dyadic { mant, exp }
    }

    /// Converts to `f64`. Exact whenever `|mant| < 2^53` and the result is a
    /// normal number, which holds for every format value in this crate.
    pub fn to_f64(self) -> f64 {
        libm::ldexp(self.mant as f64, self.exp)
    }

    /// Exact conversion of a finite `f64`. Returns `None` for NaN/infinity.
    pub fn from_f64(x: f64) -> Option<Self> {
        if !x.is_finite() {
            return None;
        }
        if x == 0.0 {
            return Some(Dyadic::ZERO);
        }
        let bits = x.to_bits();
        let sign = if bits >> 63 == 1 { -1i128 } else { 1 };
        let biased = ((bits >> 52) & 0x7ff) as i32;
        let frac = (bits & ((1u64 << 52) - 1)) as i128;
        let (mant, exp) = if biased == 0 {
            (frac, -1074)
        } else {
            (frac | (1i128 << 52), biased - 1075)
        };
        Some(Dyadic::new(sign * mant, exp).normalized())
    }

    /// Strips trailing zero bits from the mantissa.
    pub fn normalized(self) -> Self {
        if self.mant == 0 {
            return Dyadic::ZERO;
        }
        let tz = self.mant.trailing_zeros();
        Dyadic::new(self.mant >> tz, self.exp + tz as i32)
    }

    pub fn is_zero(self) -> bool {
        self.mant == 0
    }

    pub fn signum(self) -> i32 {
        self.mant.signum() as i32
    }

    /// Exact midpoint of two values.
    pub fn midpoint(self, other: Dyadic) -> Dyadic {
        let e = self.exp.min(other.exp);
        let a = shl_exact(self.mant, (self.exp - e) as u32).expect("midpoint overflow");
        let b = shl_exact(other.mant, (other.exp - e) as u32).expect("midpoint overflow");
        Dyadic::new(a + b, e - 1)
    }

    /// Exact sum. Panics only if the aligned mantissas overflow `i128`.
    pub fn exact_add(self, other: Dyadic) -> Dyadic {
        let e = self.exp.min(other.exp);
        let a = shl_exact(self.mant, (self.exp - e) as u32).expect("sum overflow");
        let b = shl_exact(other.mant, (other.exp - e) as u32).expect("sum overflow");
        Dyadic::new(a.checked_add(b).expect("sum overflow"), e)
    }
}

/// `v << s` if no bits are lost, else `None`.
pub(crate) fn shl_exact(v: i128, s: u32) -> Option<i128> {
    if v == 0 {
        return Some(0);
    }
    if s >= 127 {
        return None;
    }
    let r = v << s;
    if r >> s == v {
        Some(r)
    } else {
        None
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let (sa, sb) = (self.mant.signum(), other.mant.signum());
        if sa != sb || sa == 0 {
            return sa.cmp(&sb);
        }
        let e = self.exp.min(other.exp);
        match (
            shl_exact(self.mant, (self.exp - e) as u32),
            shl_exact(other.mant, (other.exp - e) as u32),
        ) {
            (Some(a), Some(b)) => a.cmp(&b),
            // Only the operand with the larger exponent can overflow, and an
            // overflowing value dominates the other in magnitude.
            (None, _) => {
                if sa > 0 {
                    Ordering::Greater
                } else {
                    Ordering::Less
                }
            }
            (_, None) => {
                if sa > 0 {
                    Ordering::Less
                } else {
                    Ordering::Greater
                }
            }
        }
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
