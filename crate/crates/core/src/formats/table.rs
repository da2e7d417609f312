//! Precomputed value tables for fast exact rounding of fixed-point integers.

use alloc::vec::Vec;
use core::cmp::Ordering;

use super::{Code, Format};
use crate::dyadic::{shl_exact, Dyadic};

/// Every value of a format as an integer numerator at `frac_places`,
/// indexed by signed code order (ascending by value).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundingTable {
    format: Format,
    places: u32,
    values: Vec<i64>,
}

impl RoundingTable {
    pub fn new(format: Format) -> Self {
        let n = format.bits();
        let lo = -(1i32 << (n - 1));
        let values = (0..1u32 << n)
            .map(|i| format.numerator(Code::from_signed(lo + i as i32, n)))
            .collect();
        RoundingTable {
            format,
            places: format.frac_places(),
            values,
        }
    }

    pub fn format(&self) -> Format {
        self.format
    }

    fn code(&self, index: usize) -> Code {
        let n = self.format.bits();
        Code::from_signed(index as i32 - (1i32 << (n - 1)), n)
    }

    /// Rounds `acc * 2^-acc_places` into the format: clip, nearest, ties to
    /// the even code. Equal to `format.quantize_exact` on the same value.
    pub fn round(&self, acc: i128, acc_places: u32) -> Code {
        let common = acc_places.max(self.places);
        let (Some(x), Some(_)) = (
            shl_exact(acc, common - acc_places),
            shl_exact(i64::MAX as i128, common - self.places),
        ) else {
            return self.format.quantize_exact(Dyadic::new(acc, -(acc_places as i32)));
        };
        let t_shift = common - self.places;
        let at = |i: usize| (self.values[i] as i128) << t_shift;
        // First index whose value is >= x.
        let idx = self.values.partition_point(|&v| ((v as i128) << t_shift) < x);
        if idx == 0 {
            return self.code(0);
        }
        if idx == self.values.len() {
            return self.code(idx - 1);
        }
        let (below, above) = (at(idx - 1), at(idx));
        if above == x {
            return self.code(idx);
        }
        match (x - below).cmp(&(above - x)) {
            Ordering::Less => self.code(idx - 1),
            Ordering::Greater => self.code(idx),
            Ordering::Equal => {
                let b = self.code(idx - 1);
                if b.bits() & 1 == 0 {
                    b
                } else {
                    self.code(idx)
                }
            }
        }
    }
}
