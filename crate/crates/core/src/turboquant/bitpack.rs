//! Fixed-width code packing: LSB-first within a little-endian byte stream.

/// Bytes needed for `count` codes of `bits` bits.
pub fn packed_len(count: usize, bits: u8) -> usize {
    (count * bits as usize).div_ceil(8)
}

pub fn pack(codes: &[u8], bits: u8) -> Vec<u8> {
    assert!((1..=8).contains(&bits), "code width must be 1..=8 bits");
    let mut out = vec![0u8; packed_len(codes.len(), bits)];
    let mut pos = 0usize;
    for &c in codes {
        debug_assert!(bits == 8 || c < (1u8 << bits), "code {c} exceeds {bits} bits");
        let v = (c as u16) << (pos % 8);
        out[pos / 8] |= v as u8;
        if (pos % 8) + bits as usize > 8 {
            out[pos / 8 + 1] |= (v >> 8) as u8;
        }
        pos += bits as usize;
    }
    out
}

pub fn unpack(bytes: &[u8], bits: u8, count: usize) -> Vec<u8> {
    assert!((1..=8).contains(&bits), "code width must be 1..=8 bits");
    assert!(bytes.len() >= packed_len(count, bits), "packed buffer too short");
    let mask = ((1u16 << bits) - 1) as u16;
    let mut out = Vec::with_capacity(count);
    let mut pos = 0usize;
    for _ in 0..count {
        let lo = bytes[pos / 8] as u16;
        let hi = bytes.get(pos / 8 + 1).copied().unwrap_or(0) as u16;
        out.push((((lo | (hi << 8)) >> (pos % 8)) & mask) as u8);
        pos += bits as usize;
    }
    out
}

/// Packs sign bits (`true` for non-negative) 8 per byte.
pub fn pack_signs(signs: &[bool]) -> Vec<u8> {
    let codes: Vec<u8> = signs.iter().map(|&s| s as u8).collect();
    pack(&codes, 1)
}

pub fn unpack_signs(bytes: &[u8], count: usize) -> Vec<bool> {
    unpack(bytes, 1, count).into_iter().map(|c| c == 1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_bit_layout() {
        // 0b101, 0b011, 0b111 -> bits 101 | 011 << 3 | 111 << 6
        let packed = pack(&[5, 3, 7], 3);
        assert_eq!(packed, vec![0b1101_1101, 0b0000_0001]);
        assert_eq!(unpack(&packed, 3, 3), vec![5, 3, 7]);
    }

    #[test]
    fn signs_pack_eight_per_byte() {
        let s = [true, false, false, false, false, false, false, true, true];
        let p = pack_signs(&s);
        assert_eq!(p, vec![0b1000_0001, 0b0000_0001]);
        assert_eq!(unpack_signs(&p, 9), s);
    }

    proptest! {
        #[test]
        fn round_trip(bits in 1u8..=8, raw in proptest::collection::vec(any::<u8>(), 0..300)) {
            let codes: Vec<u8> = raw.iter().map(|c| if bits == 8 { *c } else { c & ((1u8 << bits) - 1) }).collect();
            let packed = pack(&codes, bits);
            prop_assert_eq!(packed.len(), packed_len(codes.len(), bits));
            prop_assert_eq!(unpack(&packed, bits, codes.len()), codes);
        }
    }
}
