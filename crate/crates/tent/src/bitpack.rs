//! Dense packing of `n`-bit codes.
//!
//! Code `i` occupies stream bits `i*n .. (i+1)*n`, least significant bit
//! first, and stream bit `j` is bit `j % 8` of byte `j / 8`. The final byte is
//! zero-padded.

use tent_core::Code;

pub fn packed_len(count: usize, bits: u32) -> usize {
    (count * bits as usize).div_ceil(8)
}

pub fn pack(codes: &[Code], bits: u32) -> Vec<u8> {
    assert!((1..=16).contains(&bits));
    let mut out = vec![0u8; packed_len(codes.len(), bits)];
    let mut pos = 0usize;
    for c in codes {
        let v = c.bits() as u32;
        debug_assert!(v >> bits == 0, "code wider than {bits} bits");
        for b in 0..bits {
            if (v >> b) & 1 == 1 {
                out[pos / 8] |= 1 << (pos % 8);
            }
            pos += 1;
        }
    }
    out
}

/// Inverse of [`pack`]. Returns `None` if `bytes` has the wrong length or
/// nonzero padding.
pub fn unpack(bytes: &[u8], count: usize, bits: u32) -> Option<Vec<Code>> {
    if !(1..=16).contains(&bits) || bytes.len() != packed_len(count, bits) {
        return None;
    }
    let bit = |j: usize| (bytes[j / 8] >> (j % 8)) & 1;
    let mut codes = Vec::with_capacity(count);
    for i in 0..count {
        let mut v = 0u16;
        for b in 0..bits as usize {
            v |= (bit(i * bits as usize + b) as u16) << b;
        }
        codes.push(Code::from_raw(v));
    }
    let used = count * bits as usize;
    if (used..bytes.len() * 8).any(|j| bit(j) != 0) {
        return None;
    }
    Some(codes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_lsb_first() {
        let codes = [Code::from_raw(0b101), Code::from_raw(0b011), Code::from_raw(0b111)];
        // stream: 1 0 1 | 1 1 0 | 1 1 1 -> byte0 = 0b11011101, byte1 = 0b1
        assert_eq!(pack(&codes, 3), vec![0b1101_1101, 0b1]);
        assert_eq!(unpack(&[0b1101_1101, 0b1], 3, 3).unwrap(), codes);
        assert!(unpack(&[0b1101_1101, 0b11], 3, 3).is_none());
        assert!(unpack(&[0], 3, 3).is_none());
    }

    #[test]
    fn sixteen_bit_codes_are_little_endian() {
        assert_eq!(pack(&[Code::from_raw(0xABCD)], 16), vec![0xCD, 0xAB]);
    }
}
