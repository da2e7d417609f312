//! Exact dot products through a wide accumulator (quire).
//!
//! Operands are decoded to a sign and an unsigned integer numerator at the
//! format's fractional places. Products of numerators are accumulated without
//! rounding; the only rounding happens once, when the finished sum is encoded
//! into the output format.

use crate::dyadic::{shl_exact, Dyadic};
use crate::formats::{Code, Format, RoundingTable};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DotError {
    #[error("operand lengths differ ({weights} weights, {activations} activations)")]
    LengthMismatch { weights: usize, activations: usize },
    #[error("quire declared for {declared} products, got more")]
    TooManyTerms { declared: usize },
    #[error("accumulator exceeded its {width}-bit width")]
    Overflow { width: u32 },
    #[error("operand fractional places {found} do not match the quire's {expected}")]
    MisalignedOperand { expected: u32, found: u32 },
    #[error("quire needs at least one product")]
    NoTerms,
}

/// Quire width for `m_mults` products:
/// `ceil(log2 m) + 2 * ceil(log2(max/min)) + 2`, using the larger dynamic
/// range ratio when weight and activation formats differ.
pub fn quire_width(m_mults: usize, weight: Format, activation: Format) -> u32 {
    let m_bits = if m_mults <= 1 {
        0
    } else {
        usize::BITS - (m_mults - 1).leading_zeros()
    };
    let range_bits = weight
        .dynamic_range_log2_ceil()
        .max(activation.dynamic_range_log2_ceil());
    m_bits + 2 * range_bits + 2
}

/// A decoded operand: `value = ±magnitude * 2^-frac_places`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodedOperand {
    pub negative: bool,
    pub magnitude: u32,
    pub frac_places: u32,
}

impl DecodedOperand {
    #[inline]
    pub fn signed(&self) -> i64 {
        if self.negative {
            -(self.magnitude as i64)
        } else {
            self.magnitude as i64
        }
    }
}

/// Decodes a code to an exact integer numerator.
///
/// Tapered fixed-point numerators sit at `n - 2` fractional places (`n - 1`
/// for `IS = 1`, whose fraction field is one bit wider), plus `|SC|`.
pub fn decode_operand(code: Code, format: Format) -> DecodedOperand {
    let v = format.numerator(code);
    DecodedOperand {
        negative: v < 0,
        magnitude: v.unsigned_abs() as u32,
        frac_places: format.frac_places(),
    }
}

/// Exact accumulator of `sum(w_i * a_i)` at a fixed binary point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Quire {
    width: u32,
    max_terms: usize,
    terms: usize,
    acc: i128,
    frac_places: u32,
}

impl Quire {
    /// A quire sized for `m_mults` products of the given operand formats.
    pub fn new(m_mults: usize, weight: Format, activation: Format) -> Result<Self, DotError> {
        if m_mults == 0 {
            return Err(DotError::NoTerms);
        }
        Ok(Self::with_width(
            quire_width(m_mults, weight, activation),
            m_mults,
            weight.frac_places() + activation.frac_places(),
        ))
    }

    /// A quire with an explicit width, term budget and binary point.
    pub fn with_width(width: u32, max_terms: usize, frac_places: u32) -> Self {
        assert!((1..=127).contains(&width), "quire width must fit in i128");
        Quire {
            width,
            max_terms,
            terms: 0,
            acc: 0,
            frac_places,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn frac_places(&self) -> u32 {
        self.frac_places
    }

    pub fn terms(&self) -> usize {
        self.terms
    }

    /// Raw accumulator; the exact sum is `acc * 2^-frac_places`.
    pub fn acc(&self) -> i128 {
        self.acc
    }

    pub fn value(&self) -> Dyadic {
        Dyadic::new(self.acc, -(self.frac_places as i32))
    }

    fn check_width(&self, acc: i128) -> Result<i128, DotError> {
        let limit = 1i128 << (self.width - 1);
        if acc.unsigned_abs() >= limit as u128 {
            Err(DotError::Overflow { width: self.width })
        } else {
            Ok(acc)
        }
    }

    /// Adds the exact product of two decoded operands.
    #[inline]
    pub fn mac_decoded(&mut self, w: DecodedOperand, a: DecodedOperand) -> Result<(), DotError> {
        let places = w.frac_places + a.frac_places;
        if places != self.frac_places {
            return Err(DotError::MisalignedOperand {
                expected: self.frac_places,
                found: places,
            });
        }
        self.mac_numerators(w.signed(), a.signed())
    }

    /// Adds `w * a` where both are numerators already at the quire's places.
    #[inline]
    pub fn mac_numerators(&mut self, w: i64, a: i64) -> Result<(), DotError> {
        if self.terms >= self.max_terms {
            return Err(DotError::TooManyTerms {
                declared: self.max_terms,
            });
        }
        // Sign of the product is the XOR of the operand signs.
        let product = w as i128 * a as i128;
        self.acc = self.check_width(self.acc + product)?;
        self.terms += 1;
        Ok(())
    }

    pub fn mac(&mut self, w: Code, a: Code, weight: Format, activation: Format) -> Result<(), DotError> {
        self.mac_decoded(decode_operand(w, weight), decode_operand(a, activation))
    }

    /// Adds an integer already aligned to the quire's binary point (e.g. a
    /// bias). Does not count against the product budget.
    pub fn add_aligned(&mut self, v: i128) -> Result<(), DotError> {
        let sum = self
            .acc
            .checked_add(v)
            .ok_or(DotError::Overflow { width: self.width })?;
        self.acc = self.check_width(sum)?;
        Ok(())
    }

    /// Adds an exact dyadic value, aligning it to the binary point. Fails if
    /// the value has bits below the binary point.
    pub fn add_exact(&mut self, v: Dyadic) -> Result<(), DotError> {
        let shift = v.exp + self.frac_places as i32;
        let aligned = if shift >= 0 {
            shl_exact(v.mant, shift as u32).ok_or(DotError::Overflow { width: self.width })?
        } else {
            let s = shift.unsigned_abs();
            if v.mant & ((1i128 << s) - 1) != 0 {
                return Err(DotError::MisalignedOperand {
                    expected: self.frac_places,
                    found: (-v.exp) as u32,
                });
            }
            v.mant >> s
        };
        self.add_aligned(aligned)
    }

    /// Single rounding of the exact sum into `out` (clip, then nearest with
    /// ties to the even code).
    pub fn finalize(&self, out: Format) -> Code {
        out.quantize_exact(self.value())
    }

    /// [`Quire::finalize`] through a precomputed table of the output format.
    pub fn finalize_with(&self, table: &RoundingTable) -> Code {
        table.round(self.acc, self.frac_places)
    }
}

/// `round(sum(w_i * a_i))` into `out` with a single rounding.
pub fn dot(
    weights: &[Code],
    activations: &[Code],
    weight: Format,
    activation: Format,
    out: Format,
) -> Result<Code, DotError> {
    if weights.len() != activations.len() {
        return Err(DotError::LengthMismatch {
            weights: weights.len(),
            activations: activations.len(),
        });
    }
    if weights.is_empty() {
        return Ok(out.zero_code());
    }
    let mut q = Quire::new(weights.len(), weight, activation)?;
    for (&w, &a) in weights.iter().zip(activations) {
        q.mac(w, a, weight, activation)?;
    }
    Ok(q.finalize(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::{FxpConfig, TfxConfig};

    fn tfx(n: u32, is: u32, sc: i32) -> Format {
        Format::Tfx(TfxConfig::new(n, is, sc).unwrap())
    }

    #[test]
    fn quire_width_examples() {
        assert_eq!(quire_width(16, tfx(8, 8, 0), tfx(8, 8, 0)), 24);
        assert_eq!(quire_width(1, tfx(5, 1, 0), tfx(5, 1, 0)), 10);
        assert_eq!(quire_width(256, tfx(8, 8, 0), tfx(8, 8, 0)), 28);
        // The wider range wins for mixed formats.
        assert_eq!(quire_width(16, tfx(8, 1, 0), tfx(8, 8, 0)), 24);
    }

    #[test]
    fn decode_examples() {
        let f = tfx(8, 8, 0);
        let d = decode_operand(f.quantize(3.875).unwrap(), f);
        assert_eq!((d.negative, d.magnitude, d.frac_places), (false, 248, 6));
        let d = decode_operand(Code::ZERO, f);
        assert_eq!(d.magnitude, 0);
        let d = decode_operand(Code::from_raw(0b10000), tfx(5, 5, 0));
        assert_eq!((d.negative, d.magnitude, d.frac_places), (true, 40, 3));
    }

    #[test]
    fn mac_examples() {
        let f = tfx(8, 8, 0);
        let one = f.quantize(1.0).unwrap();
        let mut q = Quire::new(4, f, f).unwrap();
        q.mac(Code::ZERO, one, f, f).unwrap();
        assert_eq!(q.acc(), 0);
        q.mac(one, one, f, f).unwrap();
        assert_eq!(q.acc(), 1 << 12);
        let minus = f.quantize(-1.5).unwrap();
        q.mac(minus, one, f, f).unwrap();
        assert_eq!(q.acc(), (1 << 12) - 96 * 64);
        q.mac(one, one, f, f).unwrap();
        assert!(matches!(q.mac(one, one, f, f), Err(DotError::TooManyTerms { declared: 4 })));
    }

    #[test]
    fn finalize_examples() {
        let (w_fmt, a_fmt, out) = (tfx(8, 1, 0), tfx(8, 8, 0), tfx(8, 8, 0));
        let w = [w_fmt.quantize(0.5).unwrap(), w_fmt.quantize(-1.0).unwrap()];
        let a = [a_fmt.quantize(1.0).unwrap(); 2];
        let r = dot(&w, &a, w_fmt, a_fmt, out).unwrap();
        assert_eq!(out.to_real(r), -0.5);

        let big = tfx(16, 16, 0);
        let mut q = Quire::with_width(64, 1, big.frac_places() * 2);
        q.add_exact(Dyadic::new(1000, 0)).unwrap();
        assert_eq!(out.to_real(q.finalize(out)), 7.0);
    }

    #[test]
    fn empty_and_mismatch() {
        let f = tfx(6, 3, 0);
        assert_eq!(dot(&[], &[], f, f, f).unwrap(), Code::ZERO);
        assert!(matches!(
            dot(&[Code::ZERO], &[], f, f, f),
            Err(DotError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn scaled_weights_and_fxp_operands() {
        let w_fmt = tfx(8, 1, -2);
        let a_fmt = Format::Fxp(FxpConfig::new(8, 4).unwrap());
        let out = tfx(8, 4, 0);
        let w = [w_fmt.quantize(0.2).unwrap(), w_fmt.quantize(-0.1).unwrap()];
        let a = [a_fmt.quantize(3.0).unwrap(), a_fmt.quantize(2.5).unwrap()];
        let exact = w_fmt.to_real(w[0]) * 3.0 - w_fmt.to_real(w[1]).abs() * 2.5;
        let r = dot(&w, &a, w_fmt, a_fmt, out).unwrap();
        assert_eq!(r, out.quantize(exact).unwrap());
    }

    #[test]
    fn misaligned_operand_is_rejected() {
        let f = tfx(8, 8, 0);
        let g = tfx(8, 8, -1);
        let mut q = Quire::new(2, f, f).unwrap();
        let d = decode_operand(Code::ZERO, g);
        assert!(matches!(
            q.mac_decoded(d, decode_operand(Code::ZERO, f)),
            Err(DotError::MisalignedOperand { .. })
        ));
    }
}
