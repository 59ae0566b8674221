//! Carry-less binary field arithmetic GF(2^S) for tag computation.
//!
//! One generic code path covers the production 64-bit field and the reduced
//! 8/16-bit variants used by brute-force and Monte-Carlo oracles. Addition
//! is XOR; multiplication is a branch-free shift/mask peasant loop reduced
//! on the fly by the field's pentanomial.

use num_traits::ops::wrapping::WrappingNeg;
use num_traits::PrimInt;
use serde::{de::DeserializeOwned, Serialize};

/// An unsigned machine word acting as a GF(2^BITS) element.
///
/// `REDUCTION` holds the low part of the irreducible reduction polynomial
/// (the implicit `x^BITS` term dropped).
pub trait GfWord:
    PrimInt
    + WrappingNeg
    + Serialize
    + DeserializeOwned
    + core::fmt::Debug
    + core::fmt::Display
    + core::hash::Hash
    + Send
    + Sync
    + 'static
{
    const BITS: u32;
    const REDUCTION: Self;

    /// Big-endian bytes, BITS/8 wide.
    fn to_be_vec(self) -> Vec<u8>;
    /// Parse exactly BITS/8 big-endian bytes.
    fn from_be_slice(bytes: &[u8]) -> Option<Self>;
    /// Truncating conversion from a u128 bit pattern.
    fn from_u128_lossy(v: u128) -> Self;
    fn into_u128(self) -> u128;

    fn byte_len() -> usize {
        (Self::BITS / 8) as usize
    }
}

macro_rules! impl_gf_word {
    ($ty:ty, $bits:expr, $red:expr) => {
        impl GfWord for $ty {
            const BITS: u32 = $bits;
            const REDUCTION: Self = $red;

            fn to_be_vec(self) -> Vec<u8> {
                self.to_be_bytes().to_vec()
            }

            fn from_be_slice(bytes: &[u8]) -> Option<Self> {
                let arr: [u8; $bits / 8] = bytes.try_into().ok()?;
                Some(<$ty>::from_be_bytes(arr))
            }

            fn from_u128_lossy(v: u128) -> Self {
                v as $ty
            }

            fn into_u128(self) -> u128 {
                self as u128
            }
        }
    };
}

// Low-weight irreducible polynomials; x^64 + x^4 + x^3 + x + 1 is the fixed
// production choice, the others are the standard table entries.
impl_gf_word!(u8, 8, 0x1B);
impl_gf_word!(u16, 16, 0x2B);
impl_gf_word!(u32, 32, 0x8D);
impl_gf_word!(u64, 64, 0x1B);
impl_gf_word!(u128, 128, 0x87);

/// Field addition (XOR).
#[inline]
pub fn gf_add<W: GfWord>(a: W, b: W) -> W {
    a ^ b
}

/// Field multiplication: carry-less multiply with interleaved reduction.
pub fn gf_mul<W: GfWord>(mut a: W, mut b: W) -> W {
    let one = W::one();
    let top = one << (W::BITS - 1) as usize;
    let mut acc = W::zero();
    for _ in 0..W::BITS {
        // accumulate a whenever the low bit of b is set, without branching
        let lsb_mask = (b & one).wrapping_neg();
        acc = acc ^ (a & lsb_mask);
        b = b >> 1;
        // multiply a by x, folding the carry back through the reduction poly
        let carry_mask = ((a & top) >> (W::BITS - 1) as usize).wrapping_neg();
        a = (a << 1) ^ (W::REDUCTION & carry_mask);
    }
    acc
}

/// `base^exp` by square-and-multiply.
pub fn gf_pow<W: GfWord>(mut base: W, mut exp: u64) -> W {
    let mut acc = W::one();
    while exp > 0 {
        if exp & 1 == 1 {
            acc = gf_mul(acc, base);
        }
        base = gf_mul(base, base);
        exp >>= 1;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn golden_vectors_u8() {
        // AES-field classics: 0x53 and 0xCA are multiplicative inverses
        assert_eq!(gf_mul(0x53u8, 0xCA), 0x01);
        assert_eq!(gf_mul(0x02u8, 0x80), 0x1B);
        assert_eq!(gf_mul(0xFFu8, 0xFF), 0x13);
        assert_eq!(gf_mul(0x01u8, 0xAB), 0xAB);
    }

    #[test]
    fn golden_vectors_u16_u64_u128() {
        assert_eq!(gf_mul(0x1234u16, 0x5678), 0x19A7);
        assert_eq!(gf_mul(0x8000u16, 0x0002), 0x002B);
        assert_eq!(gf_mul(0xFFFFu16, 0xFFFF), 0xABFA);
        assert_eq!(
            gf_mul(0x0123456789ABCDEFu64, 0xFEDCBA9876543210),
            0x48827AB55D976FA0
        );
        assert_eq!(gf_mul(0x8000000000000000u64, 2), 0x1B);
        assert_eq!(
            gf_mul(0xFFFFFFFFFFFFFFFFu64, 0xFFFFFFFFFFFFFFFF),
            0x5555555555555513
        );
        assert_eq!(
            gf_mul(0x0123456789ABCDEF0123456789ABCDEFu128, 2),
            0x02468ACF13579BDE02468ACF13579BDE
        );
        assert_eq!(
            gf_mul((1u128 << 127) | 1, (1u128 << 127) | 1),
            0xC0000000000000000000000000001066
        );
    }

    #[test]
    fn pow_small_cases() {
        assert_eq!(gf_pow(0x02u8, 0), 1);
        assert_eq!(gf_pow(0x02u8, 1), 2);
        assert_eq!(gf_pow(0x02u8, 8), 0x1B); // x^8 = reduction poly
        assert_eq!(gf_pow(0x00u8, 5), 0);
        assert_eq!(gf_pow(0x00u8, 0), 1);
    }

    #[test]
    fn u8_field_has_no_zero_divisors() {
        // exhaustive over the whole field
        for a in 1..=255u8 {
            for b in 1..=255u8 {
                assert_ne!(gf_mul(a, b), 0, "{a:#x} * {b:#x}");
            }
        }
    }

    #[test]
    fn u8_multiplicative_order_divides_255() {
        for a in 2..=255u8 {
            assert_eq!(gf_pow(a, 255), 1, "a = {a:#x}");
        }
    }

    fn axioms<W: GfWord>(a: W, b: W, c: W) {
        assert_eq!(gf_mul(a, b), gf_mul(b, a));
        assert_eq!(gf_mul(gf_mul(a, b), c), gf_mul(a, gf_mul(b, c)));
        assert_eq!(gf_mul(a, b ^ c), gf_mul(a, b) ^ gf_mul(a, c));
        assert_eq!(gf_mul(a, W::one()), a);
        assert_eq!(gf_mul(a, W::zero()), W::zero());
    }

    proptest! {
        #[test]
        fn field_axioms_u16(a: u16, b: u16, c: u16) { axioms(a, b, c); }

        #[test]
        fn field_axioms_u64(a: u64, b: u64, c: u64) { axioms(a, b, c); }

        #[test]
        fn field_axioms_u128(a: u128, b: u128, c: u128) { axioms(a, b, c); }

        #[test]
        fn be_bytes_round_trip(a: u64) {
            let bytes = a.to_be_vec();
            prop_assert_eq!(bytes.len(), 8);
            prop_assert_eq!(u64::from_be_slice(&bytes), Some(a));
        }
    }

    #[test]
    fn be_slice_rejects_wrong_width() {
        assert_eq!(u64::from_be_slice(&[0u8; 7]), None);
        assert_eq!(u16::from_be_slice(&[0u8; 4]), None);
    }
}
