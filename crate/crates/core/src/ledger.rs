//! Transaction and block data model, hash chaining, validation and the
//! public audit verifier.
//!
//! Validation is the paper's twofold check: the verifier's MAC-vector slot
//! is recomputed from its pairwise pool first, then the semantics (balance,
//! counter) are checked against local state. Blocks chain by SHA-256 header
//! hashes; each block body embeds the evidence payload disclosing the keys
//! of the *previous* block, which is what makes finalized history publicly
//! auditable without any secret state.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::auth::{verify_tag_raw, AuthVector};
use crate::gf::GfWord;
use crate::keystore::{EvidencePayload, KeyError, NodeKeyStore};
use crate::NodeId;

pub type Digest32 = [u8; 32];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LedgerError {
    #[error("height {got} does not extend chain tip {tip}")]
    HeightMismatch { tip: u64, got: u64 },
    #[error("previous-hash link broken at height {height}")]
    BrokenLink { height: u64 },
    #[error("stored body digest does not match body at height {height}")]
    BodyDigestMismatch { height: u64 },
    #[error("evidence payload references height {payload} inside block {height}")]
    EvidenceHeightMismatch { height: u64, payload: u64 },
    #[error("transaction rejected: {0:?}")]
    InvalidTransaction(RejectReason),
    #[error("malformed transaction structure: {0}")]
    Malformed(String),
    #[error("block at height {0} missing")]
    MissingBlock(u64),
}

/// Transfer payload carried by a transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxPayload {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub amount: u64,
    pub timestamp_us: u64,
}

impl TxPayload {
    /// Canonical big-endian layout; this is the authenticated message M.
    pub fn canonical_bytes(&self) -> [u8; 24] {
        let mut out = [0u8; 24];
        out[..4].copy_from_slice(&self.sender.to_be_bytes());
        out[4..8].copy_from_slice(&self.receiver.to_be_bytes());
        out[8..16].copy_from_slice(&self.amount.to_be_bytes());
        out[16..24].copy_from_slice(&self.timestamp_us.to_be_bytes());
        out
    }
}

/// The transaction request unit: sender id, per-sender counter, payload and
/// the MAC vector binding it to every peer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction<W> {
    pub sender: NodeId,
    pub ctr: u64,
    pub payload: TxPayload,
    pub vector: AuthVector<W>,
}

impl<W: GfWord> Transaction<W> {
    /// Structural well-formedness (decode-time guard, not semantic validity).
    pub fn structure_ok(&self, nodes: u32) -> bool {
        self.payload.sender == self.sender
            && self.vector.sender == self.sender
            && self.vector.shape_ok(nodes)
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.sender.to_be_bytes());
        out.extend_from_slice(&self.ctr.to_be_bytes());
        out.extend_from_slice(&self.payload.canonical_bytes());
        out.extend_from_slice(&self.vector.to_be_vec());
        out
    }

    pub fn content_digest(&self) -> Digest32 {
        let mut h = Sha256::new();
        h.update(b"TFQT");
        h.update(self.canonical_bytes());
        h.finalize().into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub height: u64,
    #[serde(with = "hex_digest")]
    pub prev_hash: Digest32,
    #[serde(with = "hex_digest")]
    pub body_digest: Digest32,
    pub proposer: NodeId,
    pub view: u64,
}

mod hex_digest {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        let mut out = String::with_capacity(64);
        for b in d {
            out.push_str(&format!("{b:02x}"));
        }
        s.serialize_str(&out)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        if s.len() != 64 {
            return Err(D::Error::custom("digest must be 64 hex chars"));
        }
        let mut out = [0u8; 32];
        for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
            let hi = char::from(chunk[0]).to_digit(16).ok_or_else(|| D::Error::custom("hex"))?;
            let lo = char::from(chunk[1]).to_digit(16).ok_or_else(|| D::Error::custom("hex"))?;
            out[i] = (hi * 16 + lo) as u8;
        }
        Ok(out)
    }
}

/// SHA-256 over the canonical header layout.
pub fn header_hash(header: &BlockHeader) -> Digest32 {
    let mut h = Sha256::new();
    h.update(b"TFQH");
    h.update(header.height.to_be_bytes());
    h.update(header.prev_hash);
    h.update(header.body_digest);
    h.update(header.proposer.to_be_bytes());
    h.update(header.view.to_be_bytes());
    h.finalize().into()
}

/// SHA-256 over the transaction list plus the embedded evidence payload.
pub fn body_digest<W: GfWord>(
    transactions: &[Transaction<W>],
    evidence: &EvidencePayload<W>,
) -> Digest32 {
    let mut h = Sha256::new();
    h.update(b"TFQB");
    h.update((transactions.len() as u32).to_be_bytes());
    for tx in transactions {
        let bytes = tx.canonical_bytes();
        h.update((bytes.len() as u32).to_be_bytes());
        h.update(&bytes);
    }
    h.update(evidence.canonical_bytes());
    h.finalize().into()
}

/// Hash-chained ledger unit; the body carries the previous block's
/// disclosed evidence keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block<W> {
    pub header: BlockHeader,
    pub transactions: Vec<Transaction<W>>,
    pub evidence_for_previous: EvidencePayload<W>,
}

impl<W: GfWord> Block<W> {
    pub fn new(
        height: u64,
        prev_hash: Digest32,
        proposer: NodeId,
        view: u64,
        transactions: Vec<Transaction<W>>,
        evidence_for_previous: EvidencePayload<W>,
    ) -> Self {
        let body = body_digest(&transactions, &evidence_for_previous);
        Self {
            header: BlockHeader {
                height,
                prev_hash,
                body_digest: body,
                proposer,
                view,
            },
            transactions,
            evidence_for_previous,
        }
    }

    pub fn genesis() -> Self {
        Self::new(0, [0u8; 32], 0, 0, Vec::new(), EvidencePayload::empty(0))
    }

    pub fn hash(&self) -> Digest32 {
        header_hash(&self.header)
    }

    /// Body digest recomputation and the evidence height link.
    pub fn integrity_ok(&self) -> bool {
        let digest_ok =
            body_digest(&self.transactions, &self.evidence_for_previous) == self.header.body_digest;
        let evidence_ok = if self.header.height == 0 {
            self.evidence_for_previous.entries.is_empty()
        } else {
            self.evidence_for_previous.block_height == self.header.height - 1
        };
        digest_ok && evidence_ok
    }
}

/// Enumerated rejection reasons for the dual verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    BadTag,
    MissingTag,
    Replay,
    InsufficientBalance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxVerdict {
    Accept,
    Reject(RejectReason),
}

impl TxVerdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, TxVerdict::Accept)
    }
}

/// Replicated account state: balances plus the expected next counter per
/// sender. All maps are ordered so state digests are deterministic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountState {
    pub balances: BTreeMap<NodeId, u64>,
    pub next_ctr: BTreeMap<NodeId, u64>,
    pub height: u64,
}

impl AccountState {
    pub fn genesis(nodes: u32, initial_balance: u64) -> Self {
        Self {
            balances: (0..nodes).map(|n| (n, initial_balance)).collect(),
            next_ctr: (0..nodes).map(|n| (n, 0)).collect(),
            height: 0,
        }
    }

    pub fn balance(&self, node: NodeId) -> u64 {
        self.balances.get(&node).copied().unwrap_or(0)
    }

    pub fn expected_ctr(&self, node: NodeId) -> u64 {
        self.next_ctr.get(&node).copied().unwrap_or(0)
    }

    pub fn total_balance(&self) -> u64 {
        self.balances.values().sum()
    }

    pub fn digest(&self) -> Digest32 {
        let mut h = Sha256::new();
        h.update(b"TFQS");
        h.update(self.height.to_be_bytes());
        for (node, bal) in &self.balances {
            h.update(node.to_be_bytes());
            h.update(bal.to_be_bytes());
        }
        for (node, ctr) in &self.next_ctr {
            h.update(node.to_be_bytes());
            h.update(ctr.to_be_bytes());
        }
        h.finalize().into()
    }
}

/// Outcome of the cryptographic half of validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotCheck {
    Ok,
    BadTag,
    MissingTag,
    /// The verifier-side key index was already consumed.
    ReplayedIndex,
}

/// Per-replica memo of slot-verification outcomes keyed by transaction
/// content, so re-proposals across views never redo the key lookups.
#[derive(Debug, Default)]
pub struct VerdictCache {
    verdicts: BTreeMap<(NodeId, u64, Digest32), SlotCheck>,
}

impl VerdictCache {
    pub fn get(&self, sender: NodeId, ctr: u64, digest: &Digest32) -> Option<SlotCheck> {
        self.verdicts.get(&(sender, ctr, *digest)).copied()
    }

    pub fn put(&mut self, sender: NodeId, ctr: u64, digest: Digest32, check: SlotCheck) {
        self.verdicts.insert((sender, ctr, digest), check);
    }
}

/// Step 1 of the twofold validation: recompute the authentication tag for
/// the verifier's own vector slot from its pairwise pool.
///
/// Key material is only read (never consumed) here; the caller consumes the
/// verifier-side index when the surrounding block commits, so a forgery
/// cannot burn the honest sender's index. The sender's own slot is the zero
/// placeholder and is vacuously fine.
pub fn check_vector_slot<W: GfWord>(
    tx: &Transaction<W>,
    verifier: NodeId,
    keystore: &mut NodeKeyStore<W>,
    cache: &mut VerdictCache,
) -> SlotCheck {
    if !tx.structure_ok(keystore.nodes()) {
        return SlotCheck::MissingTag;
    }
    if tx.sender == verifier {
        return SlotCheck::Ok;
    }
    let digest = tx.content_digest();
    if let Some(check) = cache.get(tx.sender, tx.ctr, &digest) {
        return check;
    }
    let check = check_slot_uncached(tx, verifier, keystore);
    // index-consumption outcomes depend on pool heads, so only stable
    // verdicts are memoized
    if check != SlotCheck::ReplayedIndex {
        cache.put(tx.sender, tx.ctr, digest, check);
    }
    check
}

fn check_slot_uncached<W: GfWord>(
    tx: &Transaction<W>,
    verifier: NodeId,
    keystore: &mut NodeKeyStore<W>,
) -> SlotCheck {
    let Some(tag) = tx.vector.slot(verifier) else {
        return SlotCheck::MissingTag;
    };
    let (hash_key, otp_key) = match keystore.peek_recv_evidence(tx.sender, tx.ctr) {
        Ok(pair) => pair,
        Err(KeyError::NonMonotonicCounter { .. }) => return SlotCheck::ReplayedIndex,
        Err(_) => return SlotCheck::MissingTag,
    };
    if verify_tag_raw(
        hash_key,
        otp_key,
        &tx.payload.canonical_bytes(),
        tx.ctr,
        tag,
    ) {
        SlotCheck::Ok
    } else {
        SlotCheck::BadTag
    }
}

/// Step 2: semantic screening against an (expected counter, balance) view.
pub fn semantic_check<W: GfWord>(tx: &Transaction<W>, expected_ctr: u64, balance: u64) -> TxVerdict {
    if tx.ctr != expected_ctr {
        return TxVerdict::Reject(RejectReason::Replay);
    }
    if balance < tx.payload.amount {
        return TxVerdict::Reject(RejectReason::InsufficientBalance);
    }
    TxVerdict::Accept
}

/// The rigorous twofold validation of a single transaction against the
/// committed state: cryptographic slot verification first, then semantics.
pub fn validate_transaction<W: GfWord>(
    state: &AccountState,
    tx: &Transaction<W>,
    verifier: NodeId,
    keystore: &mut NodeKeyStore<W>,
    cache: &mut VerdictCache,
) -> TxVerdict {
    match check_vector_slot(tx, verifier, keystore, cache) {
        SlotCheck::Ok => {}
        SlotCheck::BadTag => return TxVerdict::Reject(RejectReason::BadTag),
        SlotCheck::MissingTag => return TxVerdict::Reject(RejectReason::MissingTag),
        SlotCheck::ReplayedIndex => return TxVerdict::Reject(RejectReason::Replay),
    }
    semantic_check(tx, state.expected_ctr(tx.sender), state.balance(tx.sender))
}

/// Validate every transaction of a candidate block with a provisional state
/// walk (two transfers from one sender inside one block must both clear).
/// Returns the index and reason of the first offender.
pub fn validate_block_txs<W: GfWord>(
    state: &AccountState,
    block: &Block<W>,
    verifier: NodeId,
    keystore: &mut NodeKeyStore<W>,
    cache: &mut VerdictCache,
) -> Result<(), (usize, RejectReason)> {
    let mut balances = state.balances.clone();
    let mut ctrs = state.next_ctr.clone();
    for (i, tx) in block.transactions.iter().enumerate() {
        match check_vector_slot(tx, verifier, keystore, cache) {
            SlotCheck::Ok => {}
            SlotCheck::BadTag => return Err((i, RejectReason::BadTag)),
            SlotCheck::MissingTag => return Err((i, RejectReason::MissingTag)),
            SlotCheck::ReplayedIndex => return Err((i, RejectReason::Replay)),
        }
        let expected = ctrs.get(&tx.sender).copied().unwrap_or(0);
        let balance = balances.get(&tx.payload.sender).copied().unwrap_or(0);
        match semantic_check(tx, expected, balance) {
            TxVerdict::Accept => {}
            TxVerdict::Reject(reason) => return Err((i, reason)),
        }
        *balances.entry(tx.payload.sender).or_insert(0) -= tx.payload.amount;
        *balances.entry(tx.payload.receiver).or_insert(0) += tx.payload.amount;
        *ctrs.entry(tx.sender).or_insert(0) = expected + 1;
    }
    Ok(())
}

/// Deterministic state transition. The block must already be validated;
/// any violation makes the whole application refuse.
pub fn apply_block<W: GfWord>(state: &mut AccountState, block: &Block<W>) -> Result<(), LedgerError> {
    if block.header.height != state.height + 1 {
        return Err(LedgerError::HeightMismatch {
            tip: state.height,
            got: block.header.height,
        });
    }
    if !block.integrity_ok() {
        return Err(LedgerError::BodyDigestMismatch {
            height: block.header.height,
        });
    }
    // dry-run the semantics so a bad transaction cannot half-apply
    let mut balances = state.balances.clone();
    let mut ctrs = state.next_ctr.clone();
    for tx in &block.transactions {
        let expected = ctrs.get(&tx.sender).copied().unwrap_or(0);
        if tx.ctr != expected {
            return Err(LedgerError::InvalidTransaction(RejectReason::Replay));
        }
        let from = balances.get(&tx.payload.sender).copied().unwrap_or(0);
        if from < tx.payload.amount {
            return Err(LedgerError::InvalidTransaction(
                RejectReason::InsufficientBalance,
            ));
        }
        *balances.entry(tx.payload.sender).or_insert(0) -= tx.payload.amount;
        *balances.entry(tx.payload.receiver).or_insert(0) += tx.payload.amount;
        *ctrs.entry(tx.sender).or_insert(0) = expected + 1;
    }
    state.balances = balances;
    state.next_ctr = ctrs;
    state.height = block.header.height;
    Ok(())
}

/// A finalized hash chain plus the synthetic epilogue record carrying the
/// tip block's evidence (so offline audits can cover the last block).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chain<W> {
    pub blocks: Vec<Block<W>>,
    pub epilogue: Option<EvidencePayload<W>>,
}

impl<W: GfWord> Chain<W> {
    pub fn new() -> Self {
        Self {
            blocks: vec![Block::genesis()],
            epilogue: None,
        }
    }

    pub fn tip(&self) -> &Block<W> {
        self.blocks.last().expect("chain never empty")
    }

    pub fn height(&self) -> u64 {
        self.tip().header.height
    }

    pub fn block_at(&self, height: u64) -> Option<&Block<W>> {
        self.blocks.get(height as usize)
    }

    /// Append a block, enforcing the chain link and body integrity.
    pub fn append(&mut self, block: Block<W>) -> Result<(), LedgerError> {
        if block.header.height != self.height() + 1 {
            return Err(LedgerError::HeightMismatch {
                tip: self.height(),
                got: block.header.height,
            });
        }
        if block.header.prev_hash != self.tip().hash() {
            return Err(LedgerError::BrokenLink {
                height: block.header.height,
            });
        }
        if !block.integrity_ok() {
            return Err(LedgerError::BodyDigestMismatch {
                height: block.header.height,
            });
        }
        self.epilogue = None;
        self.blocks.push(block);
        Ok(())
    }

    /// Recompute every link and digest; true only if the stored chain is
    /// byte-for-byte reproducible.
    pub fn immutable_ok(&self) -> bool {
        if self.blocks.is_empty() || self.blocks[0].header.height != 0 {
            return false;
        }
        let mut prev: Option<Digest32> = None;
        for (i, block) in self.blocks.iter().enumerate() {
            if block.header.height != i as u64 || !block.integrity_ok() {
                return false;
            }
            if let Some(p) = prev {
                if block.header.prev_hash != p {
                    return false;
                }
            }
            prev = Some(block.hash());
        }
        true
    }

    /// Evidence payload covering the block at `height`: embedded in the
    /// next block, or the epilogue when the block is the tip.
    pub fn evidence_for(&self, height: u64) -> Option<&EvidencePayload<W>> {
        if let Some(next) = self.block_at(height + 1) {
            return Some(&next.evidence_for_previous);
        }
        match &self.epilogue {
            Some(p) if p.block_height == height => Some(p),
            _ => None,
        }
    }
}

impl<W: GfWord> Default for Chain<W> {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditVerdict {
    Pass,
    Fail,
    Unauditable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxAuditResult {
    pub sender: NodeId,
    pub ctr: u64,
    pub pass: bool,
    pub detail: String,
}

/// Public audit output for one block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub height: u64,
    pub verdict: AuditVerdict,
    pub chain_link_ok: bool,
    pub body_digest_ok: bool,
    pub tx_results: Vec<TxAuditResult>,
}

/// Re-verify every MAC vector of block `height` against the keys disclosed
/// in the following block. Needs no secret state: an external auditor with
/// nothing but the chain runs exactly this.
pub fn audit_block<W: GfWord>(chain: &Chain<W>, height: u64) -> AuditReport {
    let Some(block) = chain.block_at(height) else {
        return AuditReport {
            height,
            verdict: AuditVerdict::Unauditable,
            chain_link_ok: false,
            body_digest_ok: false,
            tx_results: Vec::new(),
        };
    };
    let body_digest_ok = block.integrity_ok();
    let chain_link_ok = if height == 0 {
        block.header.prev_hash == [0u8; 32]
    } else {
        chain
            .block_at(height - 1)
            .is_some_and(|prev| prev.hash() == block.header.prev_hash)
    };
    let evidence = chain.evidence_for(height);
    let Some(evidence) = evidence else {
        // nothing to re-verify in an empty block; otherwise the audit is
        // impossible without the disclosed keys
        let verdict = if block.transactions.is_empty() && chain_link_ok && body_digest_ok {
            AuditVerdict::Pass
        } else {
            AuditVerdict::Unauditable
        };
        return AuditReport {
            height,
            verdict,
            chain_link_ok,
            body_digest_ok,
            tx_results: Vec::new(),
        };
    };
    let mut tx_results = Vec::with_capacity(block.transactions.len());
    let mut all_pass = true;
    for tx in &block.transactions {
        let result = audit_transaction(tx, evidence);
        all_pass &= result.pass;
        tx_results.push(result);
    }
    let verdict = if all_pass && chain_link_ok && body_digest_ok {
        AuditVerdict::Pass
    } else {
        AuditVerdict::Fail
    };
    AuditReport {
        height,
        verdict,
        chain_link_ok,
        body_digest_ok,
        tx_results,
    }
}

fn audit_transaction<W: GfWord>(
    tx: &Transaction<W>,
    evidence: &EvidencePayload<W>,
) -> TxAuditResult {
    let fail = |detail: &str| TxAuditResult {
        sender: tx.sender,
        ctr: tx.ctr,
        pass: false,
        detail: detail.to_string(),
    };
    let Some(entry) = evidence.find(tx.sender, tx.ctr) else {
        return fail("no disclosed keys for this transaction");
    };
    let message = tx.payload.canonical_bytes();
    for (slot, tag) in tx.vector.tags.iter().enumerate() {
        let slot = slot as NodeId;
        if slot == tx.sender {
            if tag.0 != W::zero() {
                return fail("sender placeholder slot not zero");
            }
            continue;
        }
        let Some(keys) = entry.keys.iter().find(|k| k.peer == slot) else {
            return fail("missing disclosed key for a peer slot");
        };
        if !verify_tag_raw(keys.hash_key, keys.otp_key, &message, tx.ctr, tag) {
            return fail(&format!("slot {slot} tag does not verify"));
        }
    }
    TxAuditResult {
        sender: tx.sender,
        ctr: tx.ctr,
        pass: true,
        detail: "ok".to_string(),
    }
}
