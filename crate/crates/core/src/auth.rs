//! Wegman-Carter one-time authentication: polynomial AXU hash ⊕ OTP key.
//!
//! A tag is `h_k(M || ctr) ⊕ k_otp` where `h_k` evaluates the message blocks
//! as a polynomial over GF(2^S) with every term carrying at least one factor
//! of the key (zero constant term), plus a trailing length block to bind the
//! message size. Forgery probability is bounded by `blocks / 2^S` per
//! attempt no matter the adversary's compute. The OTP half of the pair is
//! consumable exactly once; the guard is enforced here, because a reused
//! pad leaks `h(M1) ⊕ h(M2)` through XOR linearity.
//!
//! A transaction is vouched for by a vector of such tags, one slot per
//! network peer, with an all-zero placeholder at the sender's own index.

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf::{gf_mul, GfWord};

/// Maximum hashed message length in bits (2^20).
pub const MAX_MESSAGE_BITS: u64 = 1 << 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AuthError {
    #[error("message exceeds {MAX_MESSAGE_BITS} bits")]
    MessageTooLong,
    #[error("one-time key already consumed")]
    OtpConsumed,
    #[error("expected {expected} peer key pairs, got {got}")]
    WrongKeyCount { expected: usize, got: usize },
    #[error("sender index {sender} out of range for {nodes} nodes")]
    SenderOutOfRange { sender: u32, nodes: u32 },
}

/// Secret key selecting the hash function from the AXU family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashKey<W>(pub W);

/// One-time pad key; consumable exactly once, erased on use.
#[derive(Debug, PartialEq, Eq)]
pub struct OtpKey<W> {
    value: W,
    consumed: bool,
}

impl<W: GfWord> OtpKey<W> {
    pub fn new(value: W) -> Self {
        Self {
            value,
            consumed: false,
        }
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    /// Yield the pad and erase it. Second calls are a one-time violation.
    pub fn consume(&mut self) -> Result<W, AuthError> {
        if self.consumed {
            return Err(AuthError::OtpConsumed);
        }
        self.consumed = true;
        let v = self.value;
        self.value = W::zero();
        Ok(v)
    }
}

/// S_key-bit authentication tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AuthTag<W>(pub W);

impl<W: GfWord> AuthTag<W> {
    pub fn zero() -> Self {
        Self(W::zero())
    }

    pub fn to_be_vec(self) -> Vec<u8> {
        self.0.to_be_vec()
    }
}

/// Per-transaction tag vector, one slot per node, zero at the sender.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthVector<W> {
    pub sender: u32,
    pub tags: Vec<AuthTag<W>>,
}

impl<W: GfWord> AuthVector<W> {
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn slot(&self, node: u32) -> Option<&AuthTag<W>> {
        self.tags.get(node as usize)
    }

    /// Structural invariant: N slots with a zero placeholder at the sender.
    pub fn shape_ok(&self, nodes: u32) -> bool {
        self.tags.len() == nodes as usize
            && (self.sender as usize) < self.tags.len()
            && self.tags[self.sender as usize].0 == W::zero()
    }

    /// Wire layout: 4-byte big-endian sender index, then N tags in node
    /// order, each S_key/8 big-endian bytes.
    pub fn to_be_vec(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.tags.len() * W::byte_len());
        out.extend_from_slice(&self.sender.to_be_bytes());
        for tag in &self.tags {
            out.extend_from_slice(&tag.to_be_vec());
        }
        out
    }

    pub fn from_be_slice(bytes: &[u8], nodes: u32) -> Option<Self> {
        let width = W::byte_len();
        if bytes.len() != 4 + nodes as usize * width {
            return None;
        }
        let sender = u32::from_be_bytes(bytes[..4].try_into().ok()?);
        let tags = bytes[4..]
            .chunks_exact(width)
            .map(|c| W::from_be_slice(c).map(AuthTag))
            .collect::<Option<Vec<_>>>()?;
        Some(Self { sender, tags })
    }
}

/// Number of field blocks hashed for a message of this byte length
/// (zero-padded data blocks plus the trailing length block).
pub fn hashed_block_count<W: GfWord>(msg_len_bytes: usize) -> u64 {
    (msg_len_bytes as u64).div_ceil(W::byte_len() as u64) + 1
}

/// Polynomial AXU hash: Horner evaluation of the padded message blocks and
/// the length block, every term carrying at least one factor of the key.
pub fn axu_hash<W: GfWord>(key: &HashKey<W>, message: &[u8]) -> Result<W, AuthError> {
    if (message.len() as u64) * 8 > MAX_MESSAGE_BITS {
        return Err(AuthError::MessageTooLong);
    }
    let width = W::byte_len();
    let mut acc = W::zero();
    for chunk in message.chunks(width) {
        let block = if chunk.len() == width {
            W::from_be_slice(chunk).expect("exact chunk")
        } else {
            let mut padded = vec![0u8; width];
            padded[..chunk.len()].copy_from_slice(chunk);
            W::from_be_slice(&padded).expect("padded chunk")
        };
        acc = gf_mul(acc ^ block, key.0);
    }
    let length_block = W::from_u128_lossy((message.len() as u128) * 8);
    acc = gf_mul(acc ^ length_block, key.0);
    Ok(acc)
}

fn message_with_counter(message: &[u8], ctr: u64) -> Vec<u8> {
    let mut buf = Vec::with_capacity(message.len() + 8);
    buf.extend_from_slice(message);
    buf.extend_from_slice(&ctr.to_be_bytes());
    buf
}

/// `tag = h(M || ctr) ⊕ k_otp`, consuming the pad. The counter is appended
/// as 64-bit big-endian so the tag binds the transaction instance.
pub fn make_tag<W: GfWord>(
    k_hash: &HashKey<W>,
    k_otp: &mut OtpKey<W>,
    message: &[u8],
    ctr: u64,
) -> Result<AuthTag<W>, AuthError> {
    let hashed = axu_hash(k_hash, &message_with_counter(message, ctr))?;
    let pad = k_otp.consume()?;
    Ok(AuthTag(hashed ^ pad))
}

/// Recompute-and-compare verification. The verifier's pad is consumed no
/// matter the outcome; a consumed or oversize input rejects rather than
/// erroring, since reject is a value here.
pub fn verify_tag<W: GfWord>(
    k_hash: &HashKey<W>,
    k_otp: &mut OtpKey<W>,
    message: &[u8],
    ctr: u64,
    tag: &AuthTag<W>,
) -> bool {
    match make_tag(k_hash, k_otp, message, ctr) {
        Ok(expected) => expected.0 ^ tag.0 == W::zero(),
        Err(_) => false,
    }
}

/// Verification from raw disclosed key material (the public audit path).
pub fn verify_tag_raw<W: GfWord>(
    k_hash: W,
    k_otp: W,
    message: &[u8],
    ctr: u64,
    tag: &AuthTag<W>,
) -> bool {
    match axu_hash(&HashKey(k_hash), &message_with_counter(message, ctr)) {
        Ok(hashed) => (hashed ^ k_otp) ^ tag.0 == W::zero(),
        Err(_) => false,
    }
}

/// Build the full tag vector for one transaction: `peer_keys` holds one
/// fresh pair per peer in ascending node order with the sender skipped.
/// All N-1 pads are consumed.
pub fn build_vector<W: GfWord>(
    nodes: u32,
    sender: u32,
    peer_keys: Vec<(HashKey<W>, OtpKey<W>)>,
    message: &[u8],
    ctr: u64,
) -> Result<AuthVector<W>, AuthError> {
    if sender >= nodes {
        return Err(AuthError::SenderOutOfRange { sender, nodes });
    }
    let expected = nodes as usize - 1;
    if peer_keys.len() != expected {
        return Err(AuthError::WrongKeyCount {
            expected,
            got: peer_keys.len(),
        });
    }
    let mut tags = Vec::with_capacity(nodes as usize);
    let mut keys = peer_keys.into_iter();
    for node in 0..nodes {
        if node == sender {
            tags.push(AuthTag::zero());
        } else {
            let (k_hash, mut k_otp) = keys.next().expect("count checked");
            tags.push(make_tag(&k_hash, &mut k_otp, message, ctr)?);
        }
    }
    Ok(AuthVector { sender, tags })
}

/// Exact forgery bound `L / 2^S_key` for messages up to `max_message_bits`.
pub fn forgery_bound(s_key_bits: u32, max_message_bits: u64) -> BigRational {
    BigRational::new(
        BigInt::from(max_message_bits),
        BigInt::from(1) << s_key_bits as usize,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::ToPrimitive;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn zero_key_annihilates() {
        assert_eq!(axu_hash(&HashKey(0u64), b"any message").unwrap(), 0);
        assert_eq!(axu_hash(&HashKey(0u16), b"").unwrap(), 0);
    }

    #[test]
    fn unit_key_single_block_is_message_xor_length() {
        // k = 1 makes every power collapse, leaving XOR of the blocks
        let m = u64::from_be_bytes(*b"a\0\0\0\0\0\0\0");
        assert_eq!(axu_hash(&HashKey(1u64), b"a").unwrap(), m ^ 8);
        let m8 = 0x61u8; // 'a'
        assert_eq!(axu_hash(&HashKey(1u8), b"a").unwrap(), m8 ^ 8);
    }

    #[test]
    fn golden_hash_vectors() {
        // frozen from the scratchpad oracle
        assert_eq!(axu_hash(&HashKey(0x02u8), b"ab").unwrap(), 0x96);
        assert_eq!(axu_hash(&HashKey(0x01u8), b"a").unwrap(), 0x69);
        assert_eq!(
            axu_hash(&HashKey(3u64), b"hello world").unwrap(),
            0xE1CC926674E2FFB0
        );
        assert_eq!(axu_hash(&HashKey(0x0101u16), b"xyz").unwrap(), 0xA80D);
    }

    #[test]
    fn oversize_message_rejected() {
        let big = vec![0u8; (MAX_MESSAGE_BITS / 8) as usize + 1];
        assert_eq!(
            axu_hash(&HashKey(7u64), &big),
            Err(AuthError::MessageTooLong)
        );
        let exact = vec![0u8; (MAX_MESSAGE_BITS / 8) as usize];
        assert!(axu_hash(&HashKey(7u64), &exact).is_ok());
    }

    #[test]
    fn blockwise_linearity_in_the_message() {
        // fixed key: h is additive over single-block messages up to the
        // (identical) length term, so the cross terms cancel
        let k = HashKey(0xDEADBEEFu64);
        let a = [0x12u8, 0x34, 0, 0, 0, 0, 0, 0];
        let b = [0x56u8, 0x00, 0x78, 0, 0, 0, 0, 0];
        let xored: Vec<u8> = a.iter().zip(b.iter()).map(|(x, y)| x ^ y).collect();
        let zero = [0u8; 8];
        let h = |m: &[u8]| axu_hash(&k, m).unwrap();
        assert_eq!(h(&a) ^ h(&b) ^ h(&zero), h(&xored));
    }

    #[test]
    fn tag_round_trip_and_zero_hash_key() {
        let k_hash = HashKey(0x1234_5678_9ABC_DEF0u64);
        let mut otp = OtpKey::new(0x1111_2222_3333_4444u64);
        let tag = make_tag(&k_hash, &mut otp, b"payload", 7).unwrap();
        let mut otp2 = OtpKey::new(0x1111_2222_3333_4444u64);
        assert!(verify_tag(&k_hash, &mut otp2, b"payload", 7, &tag));

        // zero hash key leaks exactly the pad
        let mut otp3 = OtpKey::new(0xAAAAu64);
        let tag = make_tag(&HashKey(0u64), &mut otp3, b"whatever", 99).unwrap();
        assert_eq!(tag.0, 0xAAAA);
    }

    #[test]
    fn mismatched_counter_or_tampered_tag_rejects() {
        let k_hash = HashKey(0xABCDu64);
        let mut otp = OtpKey::new(0x9999u64);
        let tag = make_tag(&k_hash, &mut otp, b"msg", 5).unwrap();
        let fresh = || OtpKey::new(0x9999u64);
        assert!(!verify_tag(&k_hash, &mut fresh(), b"msg", 6, &tag));
        // exhaustive single-bit flips of the tag all reject
        for bit in 0..64 {
            let bad = AuthTag(tag.0 ^ (1u64 << bit));
            assert!(!verify_tag(&k_hash, &mut fresh(), b"msg", 5, &bad));
        }
        assert!(verify_tag(&k_hash, &mut fresh(), b"msg", 5, &tag));
    }

    #[test]
    fn otp_single_use_enforced() {
        let k_hash = HashKey(0x77u64);
        let mut otp = OtpKey::new(0x1234u64);
        assert!(!otp.is_consumed());
        make_tag(&k_hash, &mut otp, b"first", 0).unwrap();
        assert!(otp.is_consumed());
        assert_eq!(
            make_tag(&k_hash, &mut otp, b"second", 1),
            Err(AuthError::OtpConsumed)
        );
        // and the pad is erased
        assert_eq!(otp.consume(), Err(AuthError::OtpConsumed));
    }

    #[test]
    fn reused_pad_leaks_hash_xor() {
        // the attack the one-time guard exists to block: with a deliberately
        // duplicated pad, Tag1 ^ Tag2 reveals h(M1) ^ h(M2) exactly
        let k_hash = HashKey(0xFEED_FACE_CAFE_BEEFu64);
        let pad = 0x0F0F_F0F0_1234_5678u64;
        let mut otp_a = OtpKey::new(pad);
        let mut otp_b = OtpKey::new(pad);
        let t1 = make_tag(&k_hash, &mut otp_a, b"message one", 1).unwrap();
        let t2 = make_tag(&k_hash, &mut otp_b, b"message two", 2).unwrap();
        let h1 = axu_hash(&k_hash, &message_with_counter(b"message one", 1)).unwrap();
        let h2 = axu_hash(&k_hash, &message_with_counter(b"message two", 2)).unwrap();
        assert_eq!(t1.0 ^ t2.0, h1 ^ h2);
    }

    #[test]
    fn vector_shape_and_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let keys: Vec<(HashKey<u64>, OtpKey<u64>)> = (0..3)
            .map(|_| (HashKey(rng.gen()), OtpKey::new(rng.gen())))
            .collect();
        let material: Vec<(u64, u64)> = keys.iter().map(|(h, o)| (h.0, o.value)).collect();
        let vector = build_vector(4, 1, keys, b"tx payload", 42).unwrap();
        assert!(vector.shape_ok(4));
        assert_eq!(vector.tags[1], AuthTag::zero());

        // every peer can verify its own slot independently
        for (slot, (h, o)) in [(0usize, material[0]), (2, material[1]), (3, material[2])] {
            assert!(verify_tag_raw(h, o, b"tx payload", 42, &vector.tags[slot]));
        }

        let bytes = vector.to_be_vec();
        assert_eq!(bytes.len(), 4 + 4 * 8);
        let back = AuthVector::<u64>::from_be_slice(&bytes, 4).unwrap();
        assert_eq!(back, vector);
        assert!(AuthVector::<u64>::from_be_slice(&bytes[1..], 4).is_none());
    }

    #[test]
    fn vector_two_nodes_is_zero_then_tag() {
        let keys = vec![(HashKey(5u64), OtpKey::new(9u64))];
        let v = build_vector(2, 0, keys, b"m", 0).unwrap();
        assert_eq!(v.tags[0], AuthTag::zero());
        assert_ne!(v.tags[1], AuthTag::zero());
    }

    #[test]
    fn vector_errors() {
        let keys = vec![(HashKey(5u64), OtpKey::new(9u64))];
        assert_eq!(
            build_vector(4, 1, keys, b"m", 0),
            Err(AuthError::WrongKeyCount {
                expected: 3,
                got: 1
            })
        );
        assert_eq!(
            build_vector::<u64>(4, 4, vec![], b"m", 0),
            Err(AuthError::SenderOutOfRange { sender: 4, nodes: 4 })
        );
    }

    #[test]
    fn forgery_bound_values() {
        let b = forgery_bound(64, 1 << 20);
        let expected = BigRational::new(BigInt::from(1), BigInt::from(1u64) << 44);
        assert_eq!(b, expected);
        assert!((b.to_f64().unwrap() - 5.684341886080802e-14).abs() < 1e-25);
        // one block minimum
        assert_eq!(
            forgery_bound(64, 1),
            BigRational::new(BigInt::from(1), BigInt::from(1) << 64)
        );
        assert_eq!(
            forgery_bound(16, 1 << 4),
            BigRational::new(BigInt::from(1), BigInt::from(1) << 12)
        );
        // 128-bit tags need the extended precision path
        let b128 = forgery_bound(128, 1 << 20);
        assert_eq!(
            b128,
            BigRational::new(BigInt::from(1), BigInt::from(1) << 108)
        );
    }

    #[test]
    fn bit_flip_changes_tag_with_overwhelming_probability() {
        // 16-bit variant, 10^4 trials: unchanged tags happen only on an AXU
        // collision, bounded by blocks/2^16 per trial
        let mut rng = ChaCha20Rng::seed_from_u64(20_001);
        let trials = 10_000;
        let mut changed = 0u32;
        for _ in 0..trials {
            let k = HashKey(rng.gen::<u16>());
            let mut msg = [0u8; 4];
            rng.fill(&mut msg);
            let h1 = axu_hash(&k, &msg).unwrap();
            let bit = rng.gen_range(0..32);
            let mut tampered = msg;
            tampered[bit / 8] ^= 1 << (bit % 8);
            if axu_hash(&k, &tampered).unwrap() != h1 {
                changed += 1;
            }
        }
        let bound = hashed_block_count::<u16>(4) as f64 / 65536.0;
        let min_changed = ((trials as f64) * (1.0 - 3.0 * bound)) as u32;
        assert!(changed >= min_changed, "{changed} < {min_changed}");
    }
}
