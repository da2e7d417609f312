//! Reference models written straight from the format rules, sharing no code
//! with the library: bit-string decoding, exact rationals, linear-scan rounding.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

#[derive(Clone, Copy, Debug)]
pub enum Fmt {
    Tfx { n: u32, is: u32, sc: i32 },
    Fxp { n: u32, frac: u32 },
}

impl Fmt {
    pub fn n(&self) -> u32 {
        match *self {
            Fmt::Tfx { n, .. } | Fmt::Fxp { n, .. } => n,
        }
    }
}

pub fn pow2(e: i32) -> BigRational {
    let two = BigRational::from_integer(BigInt::from(2));
    if e >= 0 {
        num_traits::pow(two, e as usize)
    } else {
        BigRational::one() / num_traits::pow(two, (-e) as usize)
    }
}

/// Value of an `n`-bit pattern.
pub fn decode(bits: u32, fmt: Fmt) -> BigRational {
    match fmt {
        Fmt::Tfx { n, is, sc } => {
            let digits: Vec<bool> = (0..n).rev().map(|k| (bits >> k) & 1 == 1).collect();
            let sign = digits[0];
            let run_digit = !sign;
            let mut m = 1u32;
            let mut idx = 1usize;
            while m < is && idx < digits.len() && digits[idx] == run_digit {
                m += 1;
                idx += 1;
            }
            if m < is {
                // terminator
                idx += 1;
            }
            let frac_digits = &digits[idx.min(digits.len())..];
            let fs = frac_digits.len() as i32;
            let mut f = BigInt::zero();
            for &d in frac_digits {
                f = f * 2 + if d { 1 } else { 0 };
            }
            let int = if run_digit { m as i64 - 1 } else { -(m as i64) };
            (BigRational::from_integer(BigInt::from(int)) + BigRational::from_integer(f) * pow2(-fs))
                * pow2(sc)
        }
        Fmt::Fxp { n, frac } => {
            let mut v = bits as i64;
            if bits >> (n - 1) & 1 == 1 {
                v -= 1i64 << n;
            }
            BigRational::from_integer(BigInt::from(v)) * pow2(-(frac as i32))
        }
    }
}

/// All (bits, value) pairs, ascending by value.
pub fn table(fmt: Fmt) -> Vec<(u32, BigRational)> {
    let mut t: Vec<_> = (0..1u32 << fmt.n()).map(|b| (b, decode(b, fmt))).collect();
    t.sort_by(|a, b| a.1.cmp(&b.1));
    t
}

/// Clip to the extremes, otherwise nearest value, ties to the even pattern.
pub fn round(x: &BigRational, table: &[(u32, BigRational)]) -> u32 {
    let first = &table[0];
    let last = &table[table.len() - 1];
    if *x <= first.1 {
        return first.0;
    }
    if *x >= last.1 {
        return last.0;
    }
    let mut best = table[0].0;
    let mut best_dist: Option<BigRational> = None;
    for (b, v) in table {
        let d = (v - x).abs();
        match &best_dist {
            None => {
                best = *b;
                best_dist = Some(d);
            }
            Some(bd) => {
                if d < *bd || (d == *bd && b & 1 == 0) {
                    best = *b;
                    best_dist = Some(d);
                }
            }
        }
    }
    best
}

pub fn from_f64(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

pub fn to_f64(x: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    x.to_f64().unwrap()
}

/// Every tapered fixed-point config with `n` in the given range.
pub fn tfx_configs(ns: std::ops::RangeInclusive<u32>) -> Vec<Fmt> {
    let mut v = Vec::new();
    for n in ns {
        for is in 1..=n {
            for sc in -4..=0 {
                v.push(Fmt::Tfx { n, is, sc });
            }
        }
    }
    v
}

pub fn to_lib(fmt: Fmt) -> tent_core::Format {
    match fmt {
        Fmt::Tfx { n, is, sc } => tent_core::TfxConfig::new(n, is, sc).unwrap().into(),
        Fmt::Fxp { n, frac } => tent_core::FxpConfig::new(n, frac).unwrap().into(),
    }
}
