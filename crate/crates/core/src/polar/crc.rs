//! CRC-32 (reflected 0x04C11DB7, init and final xor 0xFFFFFFFF) over bit
//! sequences. Bits are consumed in order, which matches the byte-wise
//! reflected CRC when bytes are unpacked least significant bit first.

pub const CRC_WIDTH: usize = 32;

const POLY_REFLECTED: u32 = 0xEDB8_8320;

pub fn crc32_bits(bits: &[u8]) -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for &b in bits {
        crc ^= (b & 1) as u32;
        crc = if crc & 1 != 0 {
            (crc >> 1) ^ POLY_REFLECTED
        } else {
            crc >> 1
        };
    }
    !crc
}

/// Unpacks bytes into bits, least significant bit first.
pub fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    bytes
        .iter()
        .flat_map(|&byte| (0..8).map(move |i| (byte >> i) & 1))
        .collect()
}

pub fn value_to_bits(value: u32) -> Vec<u8> {
    (0..CRC_WIDTH).map(|i| ((value >> i) & 1) as u8).collect()
}

pub fn bits_to_value(bits: &[u8]) -> u32 {
    bits.iter()
        .take(CRC_WIDTH)
        .enumerate()
        .fold(0, |acc, (i, &b)| acc | (((b & 1) as u32) << i))
}

/// Returns `payload` followed by its 32 CRC bits.
pub fn crc_attach(payload: &[u8]) -> Vec<u8> {
    let mut out = payload.to_vec();
    out.extend(value_to_bits(crc32_bits(payload)));
    out
}

/// Checks a payload-plus-CRC sequence produced by [`crc_attach`].
pub fn crc_check(bits: &[u8]) -> bool {
    if bits.len() < CRC_WIDTH {
        return false;
    }
    let (payload, tail) = bits.split_at(bits.len() - CRC_WIDTH);
    crc32_bits(payload) == bits_to_value(tail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn standard_check_value() {
        assert_eq!(crc32_bits(&bytes_to_bits(b"123456789")), 0xCBF4_3926);
        assert_eq!(crc32_bits(&[]), 0);
    }

    #[test]
    fn short_input_fails_check() {
        assert!(!crc_check(&[1, 0, 1]));
    }

    proptest! {
        #[test]
        fn attach_check_roundtrip(payload in proptest::collection::vec(0u8..2, 0..300)) {
            prop_assert!(crc_check(&crc_attach(&payload)));
        }

        #[test]
        fn single_flip_detected(payload in proptest::collection::vec(0u8..2, 1..300), pos in any::<prop::sample::Index>()) {
            let mut bits = crc_attach(&payload);
            let i = pos.index(bits.len());
            bits[i] ^= 1;
            prop_assert!(!crc_check(&bits));
        }
    }
}
