//! Number formats: tapered fixed-point and two's-complement fixed-point.
//!
//! Both formats are finite lattices of at most `2^16` dyadic values. Codes,
//! read as `n`-bit two's-complement integers, are ordered exactly like the
//! values they encode, so nearest-value rounding is a binary search over code
//! indices followed by one exact midpoint comparison.

mod fxp;
mod table;
mod tfx;

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

pub use fxp::FxpConfig;
pub use table::RoundingTable;
pub use tfx::{TfxConfig, UnpackedTfx, MAX_BITS, MAX_SCALE, MIN_BITS, MIN_SCALE};

use crate::dyadic::Dyadic;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormatError {
    #[error("unsupported bit width {0} (expected 2..=16)")]
    UnsupportedWidth(u32),
    #[error("IS = {is_max} outside 1..={n}")]
    InvalidRunLimit { n: u32, is_max: u32 },
    #[error("SC = {0} outside -4..=0")]
    InvalidScale(i32),
    #[error("fraction bits {frac_bits} outside 1..{n}")]
    InvalidFracBits { n: u32, frac_bits: u32 },
    #[error("run length {run} exceeds IS = {is_max}")]
    RunTooLong { run: u32, is_max: u32 },
    #[error("fraction {f} does not fit in {fs} bits")]
    FractionTooWide { f: u32, fs: u32 },
    #[error("sign, integer, run length and fraction width disagree")]
    InconsistentFields,
    #[error("code {bits:#x} has bits above the {n}-bit width")]
    CodeTooWide { bits: u32, n: u32 },
    #[error("cannot quantize NaN")]
    NotANumber,
    #[error("malformed format descriptor `{0}`")]
    BadDescriptor(alloc::string::String),
}

/// An `n`-bit pattern holding one quantized scalar. Only the low `n` bits of a
/// code produced by this crate are ever set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Code(u16);

pub type TfxCode = Code;
pub type FxpCode = Code;

impl Code {
    pub const ZERO: Code = Code(0);

    /// Checked constructor.
    pub fn new(bits: u32, n: u32) -> Result<Self, FormatError> {
        if n > 16 || bits >> n != 0 {
            return Err(FormatError::CodeTooWide { bits, n });
        }
        Ok(Code(bits as u16))
    }

    #[inline]
    pub const fn from_raw(bits: u16) -> Self {
        Code(bits)
    }

    #[inline]
    pub const fn bits(self) -> u16 {
        self.0
    }

    /// The pattern read as an `n`-bit two's-complement integer.
    #[inline]
    pub fn signed(self, n: u32) -> i32 {
        let shift = 32 - n;
        ((u32::from(self.0) << shift) as i32) >> shift
    }

    #[inline]
    pub(crate) fn from_signed(k: i32, n: u32) -> Self {
        Code((k as u32 & tfx::mask(n)) as u16)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FormatKind {
    Tfx,
    Fxp,
}

impl fmt::Display for FormatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FormatKind::Tfx => "tfx",
            FormatKind::Fxp => "fxp",
        })
    }
}

/// Either number format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(into = "String", try_from = "String"))]
pub enum Format {
    Tfx(TfxConfig),
    Fxp(FxpConfig),
}

impl From<TfxConfig> for Format {
    fn from(c: TfxConfig) -> Self {
        Format::Tfx(c)
    }
}

impl From<FxpConfig> for Format {
    fn from(c: FxpConfig) -> Self {
        Format::Fxp(c)
    }
}

/// Exact clip bounds of a format.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormatExtremes {
    pub max_pos: f64,
    pub min_neg: f64,
    /// Smallest positive nonzero value.
    pub min_pos: f64,
}

/// Largest magnitude over smallest positive magnitude, kept as the pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicRange {
    pub max: f64,
    pub min: f64,
}

impl DynamicRange {
    pub fn ratio(&self) -> f64 {
        self.max / self.min
    }
}

impl Format {
    pub fn kind(&self) -> FormatKind {
        match self {
            Format::Tfx(_) => FormatKind::Tfx,
            Format::Fxp(_) => FormatKind::Fxp,
        }
    }

    pub fn bits(&self) -> u32 {
        match self {
            Format::Tfx(c) => c.bits(),
            Format::Fxp(c) => c.bits(),
        }
    }

    /// Exact value of `code`.
    pub fn value(&self, code: Code) -> Dyadic {
        match self {
            Format::Tfx(c) => c.value(code),
            Format::Fxp(c) => c.value(code),
        }
    }

    pub fn to_real(&self, code: Code) -> f64 {
        self.value(code).to_f64()
    }

    fn max_pos_exact(&self) -> Dyadic {
        match self {
            Format::Tfx(c) => c.max_pos(),
            Format::Fxp(c) => c.max_pos(),
        }
    }

    fn min_neg_exact(&self) -> Dyadic {
        match self {
            Format::Tfx(c) => c.min_neg(),
            Format::Fxp(c) => c.min_neg(),
        }
    }

    fn min_pos_exact(&self) -> Dyadic {
        match self {
            Format::Tfx(c) => c.min_pos(),
            Format::Fxp(c) => c.min_pos(),
        }
    }

    pub fn extremes(&self) -> FormatExtremes {
        FormatExtremes {
            max_pos: self.max_pos_exact().to_f64(),
            min_neg: self.min_neg_exact().to_f64(),
            min_pos: self.min_pos_exact().to_f64(),
        }
    }

    /// `|min_neg| / min_pos`; independent of any power-of-two scale.
    pub fn dynamic_range(&self) -> DynamicRange {
        let e = self.extremes();
        DynamicRange {
            max: -e.min_neg,
            min: e.min_pos,
        }
    }

    /// `log2` of the dynamic-range ratio. The ratio is always a power of two
    /// times a small integer, so this is `ceil(log2(ratio))` computed exactly.
    pub fn dynamic_range_log2_ceil(&self) -> u32 {
        let max_mag = (-self.min_neg_exact().mant) as u128;
        let min_pos = self.min_pos_exact();
        let neg = self.min_neg_exact();
        // ratio = max_mag * 2^(neg.exp - min_pos.exp) with min_pos.mant == 1
        let shift = (neg.exp - min_pos.exp) as u32;
        let ratio = max_mag << shift;
        ceil_log2(ratio as u64)
    }

    /// Fractional places of the exact integer numerator produced by
    /// [`Format::numerator`]: the widest fraction field plus `|SC|`.
    pub fn frac_places(&self) -> u32 {
        match self {
            Format::Tfx(c) => c.max_frac_bits() + c.scale().unsigned_abs(),
            Format::Fxp(c) => c.frac_bits(),
        }
    }

    /// Signed integer `v` with `value(code) = v * 2^-frac_places()`.
    pub fn numerator(&self, code: Code) -> i64 {
        let d = self.value(code);
        let shift = d.exp + self.frac_places() as i32;
        debug_assert!(shift >= 0);
        (d.mant << shift) as i64
    }

    pub fn zero_code(&self) -> Code {
        Code::ZERO
    }

    fn code_at(&self, k: i32) -> Code {
        Code::from_signed(k, self.bits())
    }

    /// Every code with its exact value, ascending by value.
    pub fn enumerate_values(&self) -> Vec<(Code, f64)> {
        let n = self.bits();
        let lo = -(1i32 << (n - 1));
        let hi = (1i32 << (n - 1)) - 1;
        (lo..=hi)
            .map(|k| {
                let c = self.code_at(k);
                (c, self.to_real(c))
            })
            .collect()
    }

    /// Rounds a real to the nearest code: clip to `[min_neg, max_pos]`, then
    /// nearest value with ties going to the code whose LSB is zero.
    pub fn quantize(&self, x: f64) -> Result<Code, FormatError> {
        if x.is_nan() {
            return Err(FormatError::NotANumber);
        }
        // All lattice values and midpoints are exactly representable in f64.
        Ok(self.nearest_by(|d| {
            let v = d.to_f64();
            if x < v {
                Ordering::Less
            } else if x > v {
                Ordering::Greater
            } else {
                Ordering::Equal
            }
        }))
    }

    /// Same rounding as [`Format::quantize`] for an exact dyadic input.
    pub fn quantize_exact(&self, x: Dyadic) -> Code {
        self.nearest_by(|d| x.cmp(&d))
    }

    /// Rounds the exact rational `x / den` (`den >= 1`).
    pub fn quantize_ratio(&self, x: Dyadic, den: u64) -> Code {
        assert!(den >= 1, "denominator must be positive");
        self.nearest_by(|d| {
            let scaled = d
                .mant
                .checked_mul(den as i128)
                .expect("lattice value times denominator overflowed");
            x.cmp(&Dyadic::new(scaled, d.exp))
        })
    }

    /// `target_vs(d)` reports how the rounding target compares with `d`.
    fn nearest_by<F: Fn(Dyadic) -> Ordering>(&self, target_vs: F) -> Code {
        let n = self.bits();
        let mut lo = -(1i32 << (n - 1));
        let mut hi = (1i32 << (n - 1)) - 1;
        if target_vs(self.value(self.code_at(lo))) != Ordering::Greater {
            return self.code_at(lo);
        }
        if target_vs(self.value(self.code_at(hi))) != Ordering::Less {
            return self.code_at(hi);
        }
        // value(lo) < target < value(hi)
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            match target_vs(self.value(self.code_at(mid))) {
                Ordering::Equal => return self.code_at(mid),
                Ordering::Greater => lo = mid,
                Ordering::Less => hi = mid,
            }
        }
        let (below, above) = (self.code_at(lo), self.code_at(hi));
        let midpoint = self.value(below).midpoint(self.value(above));
        match target_vs(midpoint) {
            Ordering::Less => below,
            Ordering::Greater => above,
            Ordering::Equal => {
                if below.bits() & 1 == 0 {
                    below
                } else {
                    above
                }
            }
        }
    }
}

fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Format::Tfx(c) => c.fmt(f),
            Format::Fxp(c) => c.fmt(f),
        }
    }
}

/// Parses `tfx:n/IS/SC` or `fxp:n/frac`.
impl FromStr for Format {
    type Err = FormatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || FormatError::BadDescriptor(s.into());
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let mut fields = rest.split('/');
        let mut next_u32 = || -> Result<u32, FormatError> {
            fields
                .next()
                .and_then(|v| v.trim().parse::<u32>().ok())
                .ok_or_else(bad)
        };
        let fmt = match kind.trim() {
            "tfx" => {
                let n = next_u32()?;
                let is = next_u32()?;
                let sc = fields
                    .next()
                    .and_then(|v| v.trim().parse::<i32>().ok())
                    .ok_or_else(bad)?;
                Format::Tfx(TfxConfig::new(n, is, sc)?)
            }
            "fxp" => {
                let n = next_u32()?;
                let frac = next_u32()?;
                Format::Fxp(FxpConfig::new(n, frac)?)
            }
            _ => return Err(bad()),
        };
        if fields.next().is_some() {
            return Err(bad());
        }
        Ok(fmt)
    }
}

impl From<Format> for String {
    fn from(f: Format) -> String {
        alloc::format!("{f}")
    }
}

impl TryFrom<String> for Format {
    type Error = FormatError;

    fn try_from(s: String) -> Result<Self, FormatError> {
        s.parse()
    }
}

impl From<TfxConfig> for String {
    fn from(c: TfxConfig) -> String {
        alloc::format!("{c}")
    }
}

impl TryFrom<String> for TfxConfig {
    type Error = FormatError;

    fn try_from(s: String) -> Result<Self, FormatError> {
        match s.parse()? {
            Format::Tfx(c) => Ok(c),
            Format::Fxp(_) => Err(FormatError::BadDescriptor(s)),
        }
    }
}

impl From<FxpConfig> for String {
    fn from(c: FxpConfig) -> String {
        alloc::format!("{c}")
    }
}

impl TryFrom<String> for FxpConfig {
    type Error = FormatError;

    fn try_from(s: String) -> Result<Self, FormatError> {
        match s.parse()? {
            Format::Fxp(c) => Ok(c),
            Format::Tfx(_) => Err(FormatError::BadDescriptor(s)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn tfx(n: u32, is: u32, sc: i32) -> Format {
        Format::Tfx(TfxConfig::new(n, is, sc).unwrap())
    }

    #[test]
    fn dynamic_range_examples() {
        let d = tfx(5, 2, 0).dynamic_range();
        assert_eq!((d.max, d.min), (2.0, 0.125));
        let d = tfx(5, 1, 0).dynamic_range();
        assert_eq!((d.max, d.min), (1.0, 1.0 / 16.0));
        let d = tfx(5, 5, 0).dynamic_range();
        assert_eq!((d.max, d.min), (5.0, 0.125));
    }

    #[test]
    fn enumerate_extremes_match_closed_forms() {
        for n in 2..=8 {
            for is in 1..=n {
                for sc in -4..=0 {
                    let f = tfx(n, is, sc);
                    let vals = f.enumerate_values();
                    let e = f.extremes();
                    assert_eq!(vals.first().unwrap().1, e.min_neg);
                    assert_eq!(vals.last().unwrap().1, e.max_pos);
                    let min_pos = vals.iter().map(|v| v.1).filter(|v| *v > 0.0).fold(f64::MAX, f64::min);
                    assert_eq!(min_pos, e.min_pos);
                }
            }
        }
    }

    #[test]
    fn fig1_widest_tent() {
        let e = tfx(5, 5, -1).extremes();
        assert_eq!((e.min_neg, e.max_pos), (-2.5, 2.0));
        let vals = tfx(5, 1, -1).enumerate_values();
        assert_eq!(vals.len(), 32);
        for (i, w) in vals.windows(2).enumerate() {
            assert_eq!(w[1].1 - w[0].1, 1.0 / 32.0, "step {i}");
        }
        assert_eq!((vals[0].1, vals[31].1), (-0.5, 0.46875));
    }

    #[test]
    fn clip_and_ties() {
        let f = tfx(8, 8, 0);
        let seven = f.quantize(7.0).unwrap();
        assert_eq!(f.quantize(12.0).unwrap(), seven);
        assert_eq!(f.quantize(f64::INFINITY).unwrap(), seven);
        assert_eq!(f.to_real(f.quantize(f64::NEG_INFINITY).unwrap()), -8.0);
        let four = f.quantize(3.9375).unwrap();
        assert_eq!(f.to_real(four), 4.0);
        assert_eq!(four.bits() & 1, 0);
        assert!(matches!(f.quantize(f64::NAN), Err(FormatError::NotANumber)));
    }

    #[test]
    fn fxp_rounding_is_rne() {
        let f = Format::Fxp(FxpConfig::new(8, 2).unwrap());
        assert_eq!(f.to_real(f.quantize(0.125).unwrap()), 0.0);
        assert_eq!(f.to_real(f.quantize(0.375).unwrap()), 0.5);
        assert_eq!(f.to_real(f.quantize(-0.375).unwrap()), -0.5);
    }

    #[test]
    fn quantize_ratio_matches_real() {
        let f = tfx(8, 4, 0);
        for num in -300i128..300 {
            let q = f.quantize_ratio(Dyadic::new(num, -3), 9);
            let r = f.quantize(num as f64 / 8.0 / 9.0).unwrap();
            assert_eq!(q, r, "num {num}");
        }
    }

    #[test]
    fn numerator_alignment() {
        let f = tfx(8, 8, 0);
        let c = f.quantize(3.875).unwrap();
        assert_eq!((f.numerator(c), f.frac_places()), (248, 6));
        let f = tfx(5, 5, 0);
        assert_eq!(f.numerator(Code::from_raw(0b10000)), -40);
        let f = tfx(6, 1, -2);
        assert_eq!(f.frac_places(), 7);
    }

    #[test]
    fn descriptor_round_trip() {
        for s in ["tfx:8/3/-1", "tfx:5/5/0", "fxp:8/7"] {
            let f: Format = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        for s in ["tfx:8/3", "fxp:8/8", "tfx:8/3/1", "posit:8/1", "tfx:8/3/0/1", "fxp"] {
            assert!(s.parse::<Format>().is_err(), "{s}");
        }
    }

    #[test]
    fn code_width_check() {
        assert!(Code::new(0x100, 8).is_err());
        assert_eq!(Code::new(0xff, 8).unwrap().signed(8), -1);
    }
}
