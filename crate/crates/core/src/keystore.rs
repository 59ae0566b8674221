//! Lifecycle management of pairwise one-time key pools.
//!
//! Each ordered node pair (sender, receiver) owns one pool, stratified into
//! an *evidence* stream (transaction MAC vectors, disclosed after block
//! finalization) and a *consensus* stream (votes and headers, never
//! disclosed, erased after use). Both endpoints construct the pool from the
//! same pair-derived seed, so material minted at equal indices is identical
//! on both sides — the QKD symmetric-key property.
//!
//! Indices are reserved strictly monotonically and never reused. The pool
//! keeps an exact bit ledger: every bit that ever entered the pool is
//! accounted as reserved, still available, or withheld for bootstrap
//! (post-processing authentication), which the conservation check enforces
//! at any point in time.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::auth::{HashKey, OtpKey};
use crate::gf::GfWord;
use crate::NodeId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeyError {
    #[error("key pool exhausted ({stratum:?} stream of pair {pair:?})")]
    Exhausted {
        pair: (NodeId, NodeId),
        stratum: Stratum,
    },
    #[error("non-monotonic counter: stream head {head}, requested {requested}")]
    NonMonotonicCounter { head: u64, requested: u64 },
    #[error("index {index} erased (watermark {erased_below})")]
    Erased { index: u64, erased_below: u64 },
    #[error("block {height} not finalized locally")]
    NotFinalized { height: u64 },
    #[error("consensus-stratum key cannot enter an evidence payload")]
    StratumViolation,
    #[error("counter {ctr} has no in-flight reservation")]
    NotInFlight { ctr: u64 },
    #[error("no pool for peer {peer}")]
    UnknownPeer { peer: NodeId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    Evidence,
    Consensus,
}

/// A freshly reserved one-time pair, tagged with its origin stratum.
#[derive(Debug)]
pub struct ReservedPair<W> {
    pub stratum: Stratum,
    pub index: u64,
    pub hash_key: HashKey<W>,
    pub otp_key: OtpKey<W>,
}

/// Pool sizing and accounting policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    /// Pre-shared seed material per pool, bits.
    pub initial_seed_bits: u64,
    /// Replenishment priority threshold, bits.
    pub low_watermark_bits: u64,
    /// Share of every replenishment withheld to authenticate future QKD
    /// post-processing, in parts per million.
    pub bootstrap_ppm: u32,
    /// Evidence-vs-consensus split weights; the demand model gives
    /// K_con/K_tx = PN/B, so evidence gets B/(B+PN) of each replenishment.
    pub evidence_weight: u64,
    pub consensus_weight: u64,
    /// Bill both halves of a pair (hash + OTP key) instead of S_key only.
    pub count_hash_keys: bool,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            initial_seed_bits: 1_000_000,
            low_watermark_bits: 50_000,
            bootstrap_ppm: 10_000,
            evidence_weight: 2500,
            consensus_weight: 60,
            count_hash_keys: false,
        }
    }
}

impl PoolConfig {
    /// Split weights implied by the demand model for a given network shape.
    pub fn with_demand_split(mut self, block_size: u64, rounds: u64, nodes: u64) -> Self {
        self.evidence_weight = block_size.max(1);
        self.consensus_weight = (rounds * nodes).max(1);
        self
    }
}

/// Out-of-order tolerance for receiver-side consensus fetches.
const REORDER_WINDOW: u64 = 4096;

#[derive(Debug)]
struct StreamState<W> {
    stratum: Stratum,
    head: u64,
    available_bits: u64,
    reserved_bits: u64,
    reserved_pairs: u64,
    erased_below: u64,
    /// Indices minted because a later index was fetched first; each is
    /// already billed and can be taken exactly once.
    minted_ahead: BTreeMap<u64, (W, W)>,
    /// Counter-mode keystream: material at index i sits at a fixed word
    /// offset, so both endpoints derive identical pairs with random access.
    rng: ChaCha20Rng,
    _word: std::marker::PhantomData<W>,
}

impl<W: GfWord> StreamState<W> {
    fn new(stratum: Stratum, seed: [u8; 32]) -> Self {
        Self {
            stratum,
            head: 0,
            available_bits: 0,
            reserved_bits: 0,
            reserved_pairs: 0,
            erased_below: 0,
            minted_ahead: BTreeMap::new(),
            rng: ChaCha20Rng::from_seed(seed),
            _word: std::marker::PhantomData,
        }
    }

    fn words_per_key() -> u128 {
        W::byte_len().div_ceil(4) as u128
    }

    /// Pure keystream lookup; no accounting state is touched.
    fn material_at(&mut self, index: u64) -> (W, W) {
        let stride = 2 * Self::words_per_key();
        let mut draw = |pos: u128| -> W {
            self.rng.set_word_pos(pos);
            let mut buf = vec![0u8; W::byte_len()];
            self.rng.fill_bytes(&mut buf);
            W::from_be_slice(&buf).expect("exact width")
        };
        let base = index as u128 * stride;
        let hash_key = draw(base);
        let otp_key = draw(base + Self::words_per_key());
        (hash_key, otp_key)
    }

    /// Mint the pair at the current head, debiting `cost` bits.
    fn mint(&mut self, pair: (NodeId, NodeId), cost: u64) -> Result<(u64, W, W), KeyError> {
        if self.available_bits < cost {
            return Err(KeyError::Exhausted {
                pair,
                stratum: self.stratum,
            });
        }
        self.available_bits -= cost;
        self.reserved_bits += cost;
        self.reserved_pairs += 1;
        let index = self.head;
        self.head += 1;
        let (hash_key, otp_key) = self.material_at(index);
        Ok((index, hash_key, otp_key))
    }
}

/// Closed, disclosed index ranges for the snapshot format.
fn compact_ranges(indices: impl IntoIterator<Item = u64>) -> Vec<(u64, u64)> {
    let mut out: Vec<(u64, u64)> = Vec::new();
    for i in indices {
        match out.last_mut() {
            Some((_, hi)) if *hi + 1 == i => *hi = i,
            _ => out.push((i, i)),
        }
    }
    out
}

/// One-time key material for one ordered node pair.
#[derive(Debug)]
pub struct PairwiseKeyPool<W> {
    pair: (NodeId, NodeId),
    config: PoolConfig,
    evidence: StreamState<W>,
    consensus: StreamState<W>,
    /// Evidence pairs reserved but not yet disclosed or retired (kept so the
    /// sender can aggregate them into the evidence payload).
    in_flight: BTreeMap<u64, (W, W)>,
    disclosed: Vec<u64>,
    generated_bits: u64,
    bootstrap_reserve_bits: u64,
}

impl<W: GfWord> PairwiseKeyPool<W> {
    /// Both endpoints of `pair` derive identical pools from the same
    /// network seed; the stream key is bound to (seed, pair, stratum).
    pub fn new(pair: (NodeId, NodeId), network_seed: u64, config: PoolConfig) -> Self {
        let stream_seed = |tag: u8| -> [u8; 32] {
            let mut h = Sha256::new();
            h.update(b"tfq-pool");
            h.update(network_seed.to_be_bytes());
            h.update(pair.0.to_be_bytes());
            h.update(pair.1.to_be_bytes());
            h.update([tag]);
            h.finalize().into()
        };
        let mut pool = Self {
            pair,
            config,
            evidence: StreamState::new(Stratum::Evidence, stream_seed(0)),
            consensus: StreamState::new(Stratum::Consensus, stream_seed(1)),
            in_flight: BTreeMap::new(),
            disclosed: Vec::new(),
            generated_bits: 0,
            bootstrap_reserve_bits: 0,
        };
        pool.replenish(config.initial_seed_bits);
        pool
    }

    pub fn pair(&self) -> (NodeId, NodeId) {
        self.pair
    }

    /// Bits billed per reserved pair.
    pub fn cost_per_pair(&self) -> u64 {
        let s = W::BITS as u64;
        if self.config.count_hash_keys {
            2 * s
        } else {
            s
        }
    }

    /// Add freshly generated bits: withhold the bootstrap share, then split
    /// the rest between the strata by the configured demand weights.
    pub fn replenish(&mut self, bits: u64) {
        if bits == 0 {
            return;
        }
        self.generated_bits += bits;
        let bootstrap = ((bits as u128 * self.config.bootstrap_ppm as u128) / 1_000_000) as u64;
        self.bootstrap_reserve_bits += bootstrap;
        let rest = bits - bootstrap;
        let ew = self.config.evidence_weight as u128;
        let cw = self.config.consensus_weight as u128;
        let evidence = ((rest as u128 * ew) / (ew + cw)) as u64;
        self.evidence.available_bits += evidence;
        self.consensus.available_bits += rest - evidence;
    }

    pub fn is_below_watermark(&self) -> bool {
        self.evidence.available_bits + self.consensus.available_bits
            < self.config.low_watermark_bits
    }

    pub fn available_bits(&self) -> (u64, u64) {
        (self.evidence.available_bits, self.consensus.available_bits)
    }

    /// Whether a strictly-monotonic evidence reservation at `ctr` would
    /// succeed right now (used for atomic multi-pool reservations).
    pub fn can_reserve_evidence(&self, ctr: u64) -> bool {
        self.evidence.head == ctr && self.evidence.available_bits >= self.cost_per_pair()
    }

    /// Reserve the evidence pair at `ctr`, which must equal the stream head.
    /// The material stays in flight until disclosure or retirement.
    pub fn reserve_evidence(&mut self, ctr: u64) -> Result<ReservedPair<W>, KeyError> {
        if ctr != self.evidence.head {
            return Err(KeyError::NonMonotonicCounter {
                head: self.evidence.head,
                requested: ctr,
            });
        }
        let cost = self.cost_per_pair();
        let (index, hash, otp) = self.evidence.mint(self.pair, cost)?;
        self.in_flight.insert(index, (hash, otp));
        Ok(ReservedPair {
            stratum: Stratum::Evidence,
            index,
            hash_key: HashKey(hash),
            otp_key: OtpKey::new(otp),
        })
    }

    /// Reserve the next consensus pair (sender side).
    pub fn reserve_consensus(&mut self) -> Result<ReservedPair<W>, KeyError> {
        let cost = self.cost_per_pair();
        let (index, hash, otp) = self.consensus.mint(self.pair, cost)?;
        Ok(ReservedPair {
            stratum: Stratum::Consensus,
            index,
            hash_key: HashKey(hash),
            otp_key: OtpKey::new(otp),
        })
    }

    /// Fetch the consensus pair at `index` (receiver side), exactly once
    /// per index. Reordered delivery within a bounded window is tolerated:
    /// skipped indices are minted (and billed) into a pending buffer so the
    /// earlier message can still verify when it arrives. A second fetch of
    /// any index, or one at or below the erasure watermark, fails.
    pub fn take_consensus_at(&mut self, index: u64) -> Result<(W, W), KeyError> {
        if index < self.consensus.erased_below {
            return Err(KeyError::Erased {
                index,
                erased_below: self.consensus.erased_below,
            });
        }
        if let Some(material) = self.consensus.minted_ahead.remove(&index) {
            return Ok(material);
        }
        if index < self.consensus.head {
            return Err(KeyError::NonMonotonicCounter {
                head: self.consensus.head,
                requested: index,
            });
        }
        if index - self.consensus.head > REORDER_WINDOW {
            return Err(KeyError::NonMonotonicCounter {
                head: self.consensus.head,
                requested: index,
            });
        }
        let cost = self.cost_per_pair();
        while self.consensus.head < index {
            let (i, hash, otp) = self.consensus.mint(self.pair, cost)?;
            self.consensus.minted_ahead.insert(i, (hash, otp));
        }
        let (_, hash, otp) = self.consensus.mint(self.pair, cost)?;
        Ok((hash, otp))
    }

    /// Read the evidence pair at `index` without consuming it — the
    /// receiver-side verification path. Indices behind the head were
    /// already consumed and cannot be read back.
    pub fn peek_evidence(&mut self, index: u64) -> Result<(W, W), KeyError> {
        if index < self.evidence.head {
            return Err(KeyError::NonMonotonicCounter {
                head: self.evidence.head,
                requested: index,
            });
        }
        Ok(self.evidence.material_at(index))
    }

    /// Consume evidence indices up to and including `index` (receiver-side
    /// accept). Skipped indices are billed and retired, never reused.
    pub fn consume_evidence_to(&mut self, index: u64) -> Result<(), KeyError> {
        if index < self.evidence.head {
            return Err(KeyError::NonMonotonicCounter {
                head: self.evidence.head,
                requested: index,
            });
        }
        let cost = self.cost_per_pair();
        while self.evidence.head <= index {
            self.evidence.mint(self.pair, cost)?;
        }
        Ok(())
    }

    /// Zero-disclosure erasure: all consensus indices below `up_to_index`
    /// become permanently unreadable, including any still buffered for
    /// reordered delivery. Idempotent.
    pub fn erase_consensus_keys(&mut self, up_to_index: u64) {
        self.consensus.erased_below = self.consensus.erased_below.max(up_to_index);
        let erased = self.consensus.erased_below;
        self.consensus.minted_ahead.retain(|&i, _| i >= erased);
    }

    pub fn consensus_head(&self) -> u64 {
        self.consensus.head
    }

    pub fn evidence_head(&self) -> u64 {
        self.evidence.head
    }

    /// Pull an in-flight evidence pair for disclosure.
    fn disclose_in_flight(&mut self, ctr: u64) -> Result<(W, W), KeyError> {
        let material = self
            .in_flight
            .remove(&ctr)
            .ok_or(KeyError::NotInFlight { ctr })?;
        self.disclosed.push(ctr);
        Ok(material)
    }

    /// Drop an in-flight pair without disclosure (aborted transaction or a
    /// receiver copy done verifying). The bits stay billed; one-time safety
    /// beats efficiency.
    pub fn retire_in_flight(&mut self, ctr: u64) -> Option<(W, W)> {
        self.in_flight.remove(&ctr)
    }

    /// Exact accounting identity over everything that ever entered the pool.
    pub fn conservation_ok(&self) -> bool {
        self.generated_bits
            == self.evidence.reserved_bits
                + self.consensus.reserved_bits
                + self.evidence.available_bits
                + self.consensus.available_bits
                + self.bootstrap_reserve_bits
    }

    pub fn generated_bits(&self) -> u64 {
        self.generated_bits
    }

    pub fn reserved_bits(&self) -> (u64, u64) {
        (self.evidence.reserved_bits, self.consensus.reserved_bits)
    }

    pub fn reserved_pairs(&self) -> (u64, u64) {
        (self.evidence.reserved_pairs, self.consensus.reserved_pairs)
    }

    pub fn snapshot(&self) -> PoolSnapshot {
        PoolSnapshot {
            pair: self.pair,
            evidence_head: self.evidence.head,
            consensus_head: self.consensus.head,
            evidence_bits: self.evidence.available_bits,
            consensus_bits: self.consensus.available_bits,
            reserved_evidence_bits: self.evidence.reserved_bits,
            reserved_consensus_bits: self.consensus.reserved_bits,
            bootstrap_reserve_bits: self.bootstrap_reserve_bits,
            generated_bits: self.generated_bits,
            consensus_erased_below: self.consensus.erased_below,
            disclosed_ranges: {
                let mut sorted = self.disclosed.clone();
                sorted.sort_unstable();
                compact_ranges(sorted)
            },
        }
    }
}

/// JSON snapshot of one pool, the `simulate` metrics format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSnapshot {
    pub pair: (NodeId, NodeId),
    pub evidence_head: u64,
    pub consensus_head: u64,
    pub evidence_bits: u64,
    pub consensus_bits: u64,
    pub reserved_evidence_bits: u64,
    pub reserved_consensus_bits: u64,
    pub bootstrap_reserve_bits: u64,
    pub generated_bits: u64,
    pub consensus_erased_below: u64,
    pub disclosed_ranges: Vec<(u64, u64)>,
}

/// Disclosed key pair for one (sender, peer) slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisclosedKeys<W> {
    pub peer: NodeId,
    pub hash_key: W,
    pub otp_key: W,
}

/// All keys one sender consumed for one transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxEvidence<W> {
    pub sender: NodeId,
    pub ctr: u64,
    pub keys: Vec<DisclosedKeys<W>>,
}

/// Aggregated evidence-stratum keys for every transaction of one block,
/// carried in the body of the *next* block (commit-then-reveal).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidencePayload<W> {
    pub block_height: u64,
    pub entries: Vec<TxEvidence<W>>,
}

impl<W: GfWord> EvidencePayload<W> {
    pub fn empty(block_height: u64) -> Self {
        Self {
            block_height,
            entries: Vec::new(),
        }
    }

    /// Append a transaction's consumed pairs. Rejects any pair that is not
    /// evidence-stratum: consensus keys must never appear in a disclosure.
    pub fn push_tx(
        &mut self,
        sender: NodeId,
        ctr: u64,
        pairs: &[(NodeId, Stratum, W, W)],
    ) -> Result<(), KeyError> {
        if pairs.iter().any(|(_, s, _, _)| *s != Stratum::Evidence) {
            return Err(KeyError::StratumViolation);
        }
        self.entries.push(TxEvidence {
            sender,
            ctr,
            keys: pairs
                .iter()
                .map(|&(peer, _, hash_key, otp_key)| DisclosedKeys {
                    peer,
                    hash_key,
                    otp_key,
                })
                .collect(),
        });
        Ok(())
    }

    /// Merge per-sender contributions into one deterministic payload.
    pub fn merge(block_height: u64, contributions: Vec<TxEvidence<W>>) -> Self {
        let mut entries = contributions;
        entries.sort_by_key(|e| (e.sender, e.ctr));
        Self {
            block_height,
            entries,
        }
    }

    pub fn find(&self, sender: NodeId, ctr: u64) -> Option<&TxEvidence<W>> {
        self.entries
            .iter()
            .find(|e| e.sender == sender && e.ctr == ctr)
    }

    /// Canonical length-prefixed big-endian serialization (digest input).
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.block_height.to_be_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_be_bytes());
        for e in &self.entries {
            out.extend_from_slice(&e.sender.to_be_bytes());
            out.extend_from_slice(&e.ctr.to_be_bytes());
            out.extend_from_slice(&(e.keys.len() as u32).to_be_bytes());
            for k in &e.keys {
                out.extend_from_slice(&k.peer.to_be_bytes());
                out.extend_from_slice(&k.hash_key.to_be_vec());
                out.extend_from_slice(&k.otp_key.to_be_vec());
            }
        }
        out
    }

    /// Parse back from canonical bytes, returning the byte count consumed.
    pub fn from_be_slice(bytes: &[u8]) -> Option<(Self, usize)> {
        let width = W::byte_len();
        let mut at = 0usize;
        fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize) -> Option<&'a [u8]> {
            let s = bytes.get(*at..*at + n)?;
            *at += n;
            Some(s)
        }
        let block_height = u64::from_be_bytes(take(bytes, &mut at, 8)?.try_into().ok()?);
        let n_entries = u32::from_be_bytes(take(bytes, &mut at, 4)?.try_into().ok()?);
        let mut entries = Vec::with_capacity(n_entries as usize);
        for _ in 0..n_entries {
            let sender = u32::from_be_bytes(take(bytes, &mut at, 4)?.try_into().ok()?);
            let ctr = u64::from_be_bytes(take(bytes, &mut at, 8)?.try_into().ok()?);
            let n_keys = u32::from_be_bytes(take(bytes, &mut at, 4)?.try_into().ok()?);
            let mut keys = Vec::with_capacity(n_keys as usize);
            for _ in 0..n_keys {
                let peer = u32::from_be_bytes(take(bytes, &mut at, 4)?.try_into().ok()?);
                let hash_key = W::from_be_slice(take(bytes, &mut at, width)?)?;
                let otp_key = W::from_be_slice(take(bytes, &mut at, width)?)?;
                keys.push(DisclosedKeys {
                    peer,
                    hash_key,
                    otp_key,
                });
            }
            entries.push(TxEvidence { sender, ctr, keys });
        }
        Some((
            Self {
                block_height,
                entries,
            },
            at,
        ))
    }
}

/// One node's view of every pairwise pool it participates in.
///
/// `send` pools cover ordered pairs (self, peer); `recv` pools mirror
/// (peer, self). A node and its peer construct the same ordered-pair pool
/// from the same network seed, so tags made on one side verify against
/// material fetched on the other.
#[derive(Debug)]
pub struct NodeKeyStore<W> {
    node: NodeId,
    nodes: u32,
    send: BTreeMap<NodeId, PairwiseKeyPool<W>>,
    recv: BTreeMap<NodeId, PairwiseKeyPool<W>>,
    finalized_height: Option<u64>,
}

impl<W: GfWord> NodeKeyStore<W> {
    pub fn new(node: NodeId, nodes: u32, network_seed: u64, config: PoolConfig) -> Self {
        let mut send = BTreeMap::new();
        let mut recv = BTreeMap::new();
        for peer in 0..nodes {
            if peer == node {
                continue;
            }
            send.insert(
                peer,
                PairwiseKeyPool::new((node, peer), network_seed, config),
            );
            recv.insert(
                peer,
                PairwiseKeyPool::new((peer, node), network_seed, config),
            );
        }
        Self {
            node,
            nodes,
            send,
            recv,
            finalized_height: None,
        }
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn nodes(&self) -> u32 {
        self.nodes
    }

    pub fn peers(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.send.keys().copied()
    }

    pub fn send_pool(&self, peer: NodeId) -> Option<&PairwiseKeyPool<W>> {
        self.send.get(&peer)
    }

    pub fn send_pool_mut(&mut self, peer: NodeId) -> Option<&mut PairwiseKeyPool<W>> {
        self.send.get_mut(&peer)
    }

    pub fn recv_pool(&self, peer: NodeId) -> Option<&PairwiseKeyPool<W>> {
        self.recv.get(&peer)
    }

    pub fn recv_pool_mut(&mut self, peer: NodeId) -> Option<&mut PairwiseKeyPool<W>> {
        self.recv.get_mut(&peer)
    }

    /// Atomically reserve the evidence pair at `ctr` from every send pool
    /// (one per peer, ascending order) for a new transaction vector.
    pub fn reserve_vector_keys(&mut self, ctr: u64) -> Result<Vec<ReservedPair<W>>, KeyError> {
        if let Some((peer, pool)) = self
            .send
            .iter()
            .find(|(_, pool)| !pool.can_reserve_evidence(ctr))
            .map(|(p, pool)| (*p, pool))
        {
            return if pool.evidence_head() != ctr {
                Err(KeyError::NonMonotonicCounter {
                    head: pool.evidence_head(),
                    requested: ctr,
                })
            } else {
                Err(KeyError::Exhausted {
                    pair: (self.node, peer),
                    stratum: Stratum::Evidence,
                })
            };
        }
        let mut out = Vec::with_capacity(self.send.len());
        for pool in self.send.values_mut() {
            out.push(pool.reserve_evidence(ctr).expect("pre-checked"));
        }
        Ok(out)
    }

    /// Receiver-side read of the sender's evidence pair at `ctr` for slot
    /// verification. Non-consuming: a forged transaction must not burn the
    /// real sender's key index.
    pub fn peek_recv_evidence(&mut self, sender: NodeId, ctr: u64) -> Result<(W, W), KeyError> {
        self.recv
            .get_mut(&sender)
            .ok_or(KeyError::UnknownPeer { peer: sender })?
            .peek_evidence(ctr)
    }

    /// Mark the sender's evidence indices up to `ctr` consumed on this
    /// mirror after an accepted verification.
    pub fn consume_recv_evidence(&mut self, sender: NodeId, ctr: u64) -> Result<(), KeyError> {
        self.recv
            .get_mut(&sender)
            .ok_or(KeyError::UnknownPeer { peer: sender })?
            .consume_evidence_to(ctr)
    }

    pub fn reserve_consensus(&mut self, peer: NodeId) -> Result<ReservedPair<W>, KeyError> {
        self.send
            .get_mut(&peer)
            .ok_or(KeyError::UnknownPeer { peer })?
            .reserve_consensus()
    }

    pub fn take_consensus_at(&mut self, sender: NodeId, index: u64) -> Result<(W, W), KeyError> {
        self.recv
            .get_mut(&sender)
            .ok_or(KeyError::UnknownPeer { peer: sender })?
            .take_consensus_at(index)
    }

    /// Erase every consensus index consumed so far, on both directions of
    /// every pair (post-finalization hygiene).
    pub fn erase_all_consensus(&mut self) {
        for pool in self.send.values_mut().chain(self.recv.values_mut()) {
            pool.erase_consensus_keys(pool.consensus_head());
        }
    }

    pub fn note_finalized(&mut self, height: u64) {
        self.finalized_height = Some(self.finalized_height.map_or(height, |h| h.max(height)));
    }

    /// Aggregate this node's disclosed keys for its transactions (given by
    /// counter) in a finalized block. Refuses until the block is finalized
    /// locally — keys for block N travel only after N is hash-locked.
    pub fn extract_evidence_payload(
        &mut self,
        block_height: u64,
        own_tx_ctrs: &[u64],
    ) -> Result<Vec<TxEvidence<W>>, KeyError> {
        if self.finalized_height.is_none() || self.finalized_height.unwrap() < block_height {
            return Err(KeyError::NotFinalized {
                height: block_height,
            });
        }
        let mut out = Vec::with_capacity(own_tx_ctrs.len());
        for &ctr in own_tx_ctrs {
            let mut keys = Vec::with_capacity(self.send.len());
            for (&peer, pool) in self.send.iter_mut() {
                let (hash_key, otp_key) = pool.disclose_in_flight(ctr)?;
                keys.push(DisclosedKeys {
                    peer,
                    hash_key,
                    otp_key,
                });
            }
            out.push(TxEvidence {
                sender: self.node,
                ctr,
                keys,
            });
        }
        Ok(out)
    }

    pub fn replenish_send(&mut self, peer: NodeId, bits: u64) {
        if let Some(pool) = self.send.get_mut(&peer) {
            pool.replenish(bits);
        }
    }

    pub fn replenish_recv(&mut self, peer: NodeId, bits: u64) {
        if let Some(pool) = self.recv.get_mut(&peer) {
            pool.replenish(bits);
        }
    }

    pub fn conservation_ok(&self) -> bool {
        self.send
            .values()
            .chain(self.recv.values())
            .all(|p| p.conservation_ok())
    }

    pub fn snapshots(&self) -> Vec<PoolSnapshot> {
        self.send
            .values()
            .chain(self.recv.values())
            .map(|p| p.snapshot())
            .collect()
    }

    /// Minimum available bits over all send-direction pools, per stratum.
    pub fn min_send_available(&self) -> (u64, u64) {
        self.send.values().fold((u64::MAX, u64::MAX), |acc, p| {
            let (e, c) = p.available_bits();
            (acc.0.min(e), acc.1.min(c))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auth;
    use proptest::prelude::*;

    fn test_config() -> PoolConfig {
        PoolConfig {
            initial_seed_bits: 10_000,
            low_watermark_bits: 1_000,
            bootstrap_ppm: 10_000,
            evidence_weight: 2500,
            consensus_weight: 60,
            count_hash_keys: false,
        }
    }

    #[test]
    fn fresh_pool_serves_index_zero_then_rejects_replay() {
        let mut pool: PairwiseKeyPool<u64> = PairwiseKeyPool::new((0, 1), 7, test_config());
        let r = pool.reserve_evidence(0).unwrap();
        assert_eq!(r.index, 0);
        assert_eq!(r.stratum, Stratum::Evidence);
        assert_eq!(
            pool.reserve_evidence(0).unwrap_err(),
            KeyError::NonMonotonicCounter {
                head: 1,
                requested: 0
            }
        );
        assert!(pool.reserve_evidence(1).is_ok());
        // skipping ahead is rejected too
        assert!(matches!(
            pool.reserve_evidence(5),
            Err(KeyError::NonMonotonicCounter { .. })
        ));
    }

    #[test]
    fn drained_pool_reports_exhaustion() {
        let mut cfg = test_config();
        cfg.initial_seed_bits = 200; // under two 64-bit evidence pairs after split
        let mut pool: PairwiseKeyPool<u64> = PairwiseKeyPool::new((0, 1), 7, cfg);
        let mut served = 0;
        loop {
            match pool.reserve_evidence(served) {
                Ok(_) => served += 1,
                Err(KeyError::Exhausted { stratum, .. }) => {
                    assert_eq!(stratum, Stratum::Evidence);
                    break;
                }
                Err(e) => panic!("unexpected {e:?}"),
            }
        }
        assert!(served <= 3);
        assert!(pool.conservation_ok());
    }

    #[test]
    fn both_endpoints_mint_identical_material() {
        let mut alice: PairwiseKeyPool<u64> = PairwiseKeyPool::new((0, 1), 99, test_config());
        let mut bob: PairwiseKeyPool<u64> = PairwiseKeyPool::new((0, 1), 99, test_config());
        for ctr in 0..5 {
            let a = alice.reserve_evidence(ctr).unwrap();
            let mut b = bob.reserve_evidence(ctr).unwrap();
            // end-to-end: a tag made with Alice's copy verifies with Bob's
            let mut a_otp = a.otp_key;
            let tag = auth::make_tag(&a.hash_key, &mut a_otp, b"payload", ctr).unwrap();
            assert!(auth::verify_tag(
                &b.hash_key,
                &mut b.otp_key,
                b"payload",
                ctr,
                &tag
            ));
        }
        // a different direction derives different material
        let mut ba: PairwiseKeyPool<u64> = PairwiseKeyPool::new((1, 0), 99, test_config());
        let x = ba.reserve_evidence(0).unwrap();
        let mut fresh: PairwiseKeyPool<u64> = PairwiseKeyPool::new((0, 1), 99, test_config());
        let y = fresh.reserve_evidence(0).unwrap();
        assert_ne!(x.hash_key, y.hash_key);
    }

    #[test]
    fn consensus_stream_round_trip_and_reorder() {
        let mut sender: PairwiseKeyPool<u64> = PairwiseKeyPool::new((0, 1), 5, test_config());
        let mut receiver: PairwiseKeyPool<u64> = PairwiseKeyPool::new((0, 1), 5, test_config());
        let r0 = sender.reserve_consensus().unwrap();
        let r1 = sender.reserve_consensus().unwrap();
        assert_eq!((r0.index, r1.index), (0, 1));
        // out-of-order delivery: index 1 first, then 0 still works once
        let (h1, o1) = receiver.take_consensus_at(1).unwrap();
        assert_eq!(HashKey(h1), r1.hash_key);
        let mut otp = OtpKey::new(o1);
        let mut r1_otp = r1.otp_key;
        let tag = auth::make_tag(&r1.hash_key, &mut r1_otp, b"vote", 1).unwrap();
        assert!(auth::verify_tag(&HashKey(h1), &mut otp, b"vote", 1, &tag));
        let (h0, _) = receiver.take_consensus_at(0).unwrap();
        assert_eq!(HashKey(h0), r0.hash_key);
        // but never twice: a replayed index is caught by the counter
        assert!(matches!(
            receiver.take_consensus_at(0),
            Err(KeyError::NonMonotonicCounter { .. })
        ));
        assert!(matches!(
            receiver.take_consensus_at(1),
            Err(KeyError::NonMonotonicCounter { .. })
        ));
        // far-future indices beyond the reorder window are refused
        assert!(matches!(
            receiver.take_consensus_at(10_000),
            Err(KeyError::NonMonotonicCounter { .. })
        ));
        assert!(sender.conservation_ok() && receiver.conservation_ok());
    }

    #[test]
    fn peek_matches_reserved_material_and_survives_bad_probes() {
        let mut sender: PairwiseKeyPool<u64> = PairwiseKeyPool::new((0, 1), 77, test_config());
        let mut mirror: PairwiseKeyPool<u64> = PairwiseKeyPool::new((0, 1), 77, test_config());
        let r = sender.reserve_evidence(0).unwrap();
        // peeking repeatedly returns identical material without consuming
        let (h1, o1) = mirror.peek_evidence(0).unwrap();
        let (h2, o2) = mirror.peek_evidence(0).unwrap();
        assert_eq!((h1, o1), (h2, o2));
        assert_eq!(HashKey(h1), r.hash_key);
        assert_eq!(mirror.evidence_head(), 0);
        // consuming advances the head; reads behind it then fail
        mirror.consume_evidence_to(0).unwrap();
        assert_eq!(mirror.evidence_head(), 1);
        assert!(matches!(
            mirror.peek_evidence(0),
            Err(KeyError::NonMonotonicCounter { .. })
        ));
        // skipped indices are billed and retired
        mirror.consume_evidence_to(3).unwrap();
        assert_eq!(mirror.evidence_head(), 4);
        assert!(mirror.conservation_ok());
    }

    #[test]
    fn erase_is_irreversible_and_idempotent() {
        let mut pool: PairwiseKeyPool<u64> = PairwiseKeyPool::new((2, 3), 5, test_config());
        pool.reserve_consensus().unwrap();
        pool.reserve_consensus().unwrap();
        pool.erase_consensus_keys(2);
        assert!(matches!(
            pool.take_consensus_at(1),
            Err(KeyError::Erased { .. })
        ));
        pool.erase_consensus_keys(2); // idempotent
        pool.erase_consensus_keys(1); // never rolls back
        assert!(matches!(
            pool.take_consensus_at(0),
            Err(KeyError::Erased { .. })
        ));
        // indices at the watermark are still mintable
        assert!(pool.take_consensus_at(2).is_ok());
    }

    #[test]
    fn interleaved_strata_never_collide_and_conserve() {
        let mut cfg = test_config();
        cfg.initial_seed_bits = 20_000;
        cfg.evidence_weight = 2;
        cfg.consensus_weight = 1;
        let mut pool: PairwiseKeyPool<u64> = PairwiseKeyPool::new((0, 1), 123, cfg);
        let mut seen = std::collections::BTreeSet::new();
        let mut ctr = 0u64;
        for step in 0..60u64 {
            if step % 3 == 0 {
                let r = pool.reserve_consensus().unwrap();
                assert!(seen.insert((Stratum::Consensus, r.index)));
            } else {
                let r = pool.reserve_evidence(ctr).unwrap();
                assert!(seen.insert((Stratum::Evidence, r.index)));
                ctr += 1;
            }
            assert!(pool.conservation_ok());
        }
    }

    #[test]
    fn replenish_split_and_bootstrap_are_exact() {
        let mut cfg = test_config();
        cfg.initial_seed_bits = 0;
        cfg.bootstrap_ppm = 10_000; // 1%
        let mut pool: PairwiseKeyPool<u64> = PairwiseKeyPool::new((0, 1), 1, cfg);
        assert_eq!(pool.available_bits(), (0, 0));
        pool.replenish(1_000_000);
        let bootstrap = 10_000u64;
        let rest = 1_000_000 - bootstrap;
        let evidence = rest * 2500 / 2560;
        assert_eq!(pool.available_bits(), (evidence, rest - evidence));
        assert!(pool.conservation_ok());
        pool.replenish(0); // no-op
        assert_eq!(pool.generated_bits(), 1_000_000);
        let snap = pool.snapshot();
        assert_eq!(snap.bootstrap_reserve_bits, bootstrap);
    }

    #[test]
    fn watermark_flags_low_pools() {
        let mut cfg = test_config();
        cfg.initial_seed_bits = 0;
        cfg.low_watermark_bits = 500;
        let mut pool: PairwiseKeyPool<u64> = PairwiseKeyPool::new((0, 1), 1, cfg);
        assert!(pool.is_below_watermark());
        pool.replenish(10_000);
        assert!(!pool.is_below_watermark());
    }

    #[test]
    fn consensus_keys_rejected_from_evidence_payload() {
        let mut pool: PairwiseKeyPool<u64> = PairwiseKeyPool::new((0, 1), 5, test_config());
        let r = pool.reserve_consensus().unwrap();
        let mut payload = EvidencePayload::empty(3);
        let err = payload
            .push_tx(0, 0, &[(1, r.stratum, r.hash_key.0, 0u64)])
            .unwrap_err();
        assert_eq!(err, KeyError::StratumViolation);
        let e = pool.reserve_evidence(0).unwrap();
        assert!(payload
            .push_tx(0, 0, &[(1, e.stratum, e.hash_key.0, 0u64)])
            .is_ok());
    }

    #[test]
    fn extraction_requires_finalization_and_discloses_once() {
        let mut store: NodeKeyStore<u64> = NodeKeyStore::new(0, 4, 11, test_config());
        let reserved = store.reserve_vector_keys(0).unwrap();
        assert_eq!(reserved.len(), 3);
        assert_eq!(
            store.extract_evidence_payload(1, &[0]).unwrap_err(),
            KeyError::NotFinalized { height: 1 }
        );
        store.note_finalized(1);
        let entries = store.extract_evidence_payload(1, &[0]).unwrap();
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].keys.len(), 3);
        // double disclosure fails: the pairs left flight already
        assert_eq!(
            store.extract_evidence_payload(1, &[0]).unwrap_err(),
            KeyError::NotInFlight { ctr: 0 }
        );
        // zero own transactions produce an empty contribution
        assert!(store.extract_evidence_payload(1, &[]).unwrap().is_empty());
    }

    #[test]
    fn vector_reservation_is_atomic_on_failure() {
        let mut store: NodeKeyStore<u64> = NodeKeyStore::new(0, 3, 11, test_config());
        // desync peer 2's send pool so the group reservation must fail
        store.send_pool_mut(2).unwrap().reserve_evidence(0).unwrap();
        let err = store.reserve_vector_keys(0).unwrap_err();
        assert!(matches!(err, KeyError::NonMonotonicCounter { .. }));
        // peer 1's pool untouched by the failed attempt
        assert_eq!(store.send_pool(1).unwrap().evidence_head(), 0);
    }

    #[test]
    fn payload_canonical_bytes_round_trip() {
        let payload = EvidencePayload::<u64> {
            block_height: 9,
            entries: vec![TxEvidence {
                sender: 2,
                ctr: 5,
                keys: vec![DisclosedKeys {
                    peer: 0,
                    hash_key: 0xAABB,
                    otp_key: 0xCCDD,
                }],
            }],
        };
        let bytes = payload.canonical_bytes();
        let (back, used) = EvidencePayload::<u64>::from_be_slice(&bytes).unwrap();
        assert_eq!(back, payload);
        assert_eq!(used, bytes.len());
        assert!(EvidencePayload::<u64>::from_be_slice(&bytes[..bytes.len() - 1]).is_none());
    }

    proptest! {
        /// One-time discipline over random interleavings: the multiset of
        /// (pair, stratum, index) reservations never holds a duplicate, and
        /// the bit ledger conserves at every step.
        #[test]
        fn randomized_reservation_trace(ops in prop::collection::vec(0u8..4, 1..300), seed in 0u64..1000) {
            let mut store: NodeKeyStore<u16> = NodeKeyStore::new(0, 3, seed, PoolConfig {
                initial_seed_bits: 2_000,
                ..test_config()
            });
            let mut seen = std::collections::BTreeSet::new();
            let mut ctr = 0u64;
            for op in ops {
                match op {
                    0 => {
                        if let Ok(rs) = store.reserve_vector_keys(ctr) {
                            for (peer, r) in store.peers().collect::<Vec<_>>().iter().zip(&rs) {
                                prop_assert!(seen.insert(((0u32, *peer), r.stratum, r.index)));
                            }
                            ctr += 1;
                        }
                    }
                    1 => {
                        if let Ok(r) = store.reserve_consensus(1) {
                            prop_assert!(seen.insert(((0u32, 1u32), r.stratum, r.index)));
                        }
                    }
                    2 => {
                        if let Ok(r) = store.reserve_consensus(2) {
                            prop_assert!(seen.insert(((0u32, 2u32), r.stratum, r.index)));
                        }
                    }
                    _ => store.replenish_send(1, 512),
                }
                prop_assert!(store.conservation_ok());
            }
        }
    }

    #[test]
    fn compact_ranges_behaviour() {
        assert_eq!(
            compact_ranges([0, 1, 2, 5, 7, 8]),
            vec![(0, 2), (5, 5), (7, 8)]
        );
        assert!(compact_ranges([]).is_empty());
    }
}
