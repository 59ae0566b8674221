//! Quantum-secured BFT replica state machine.
//!
//! Three network-wide rounds finalize a block: the view leader disseminates
//! a candidate (proposal), replicas that validate every transaction endorse
//! it (prepare), and a quorum of endorsements triggers the commit round.
//! `n - f` votes (equal to 2f+1 at the n = 3f+1 design point) finalize.
//! Every consensus message is authenticated with a fresh consensus-stratum
//! pair from the sender's pairwise pool — the paper's broadcast is realized
//! as pairwise point-to-point sends, since ITS MACs are inherently
//! pairwise — and the keys are erased right after finalization, which is
//! what denies long-range forgers any verifiable history.
//!
//! The replica is a pure state machine: `(state, message | timeout)` maps
//! to `(state, outbound messages, timer request)`. All timing and ordering
//! nondeterminism lives in the surrounding harness.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auth::{make_tag, verify_tag_raw, AuthTag};
use crate::gf::GfWord;
use crate::keystore::{EvidencePayload, NodeKeyStore, TxEvidence};
use crate::ledger::{
    apply_block, check_vector_slot, semantic_check, validate_block_txs, Block, Chain,
    Digest32, RejectReason, SlotCheck, Transaction, TxVerdict, VerdictCache,
};
use crate::NodeId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConsensusError {
    #[error("replica count {n} violates n >= 3f+1 for f = {f}")]
    FaultBoundViolated { n: u32, f: u32 },
    #[error("invalid consensus parameter: {0}")]
    InvalidParam(String),
}

/// Static consensus parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusConfig {
    /// Replica count n.
    pub n: u32,
    /// Fault bound f.
    pub f: u32,
    /// Base finalization timeout, sim microseconds.
    pub base_timeout_us: u64,
    /// Timeout multiplier per consecutive failed view.
    pub timeout_backoff: f64,
    /// Propose a partial block once the oldest pending tx is this stale.
    pub batch_timeout_us: u64,
    /// Transactions per block B.
    pub block_size: u32,
    /// Grace period to wait for evidence of the previous block before
    /// proposing without it.
    pub evidence_grace_us: u64,
    /// Permit configurations that violate n >= 3f+1 (bound-tightness demos).
    pub allow_unsafe: bool,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            n: 4,
            f: 1,
            base_timeout_us: 500_000,
            timeout_backoff: 2.0,
            batch_timeout_us: 200_000,
            block_size: 2500,
            evidence_grace_us: 100_000,
            allow_unsafe: false,
        }
    }
}

impl ConsensusConfig {
    pub fn validate(&self) -> Result<(), ConsensusError> {
        if self.n < 3 * self.f + 1 && !self.allow_unsafe {
            return Err(ConsensusError::FaultBoundViolated {
                n: self.n,
                f: self.f,
            });
        }
        if self.n < 2 || self.base_timeout_us == 0 || self.timeout_backoff < 1.0 {
            return Err(ConsensusError::InvalidParam(
                "need n >= 2, positive timeout, backoff >= 1".to_string(),
            ));
        }
        Ok(())
    }

    /// Vote quorum: n - f, which equals the canonical 2f+1 at n = 3f+1.
    pub fn quorum(&self) -> usize {
        (self.n - self.f) as usize
    }

    /// Deterministic leader rotation.
    pub fn leader(&self, view: u64) -> NodeId {
        (view % self.n as u64) as NodeId
    }

    pub fn timeout_after_failures(&self, failures: u32) -> u64 {
        let factor = self.timeout_backoff.powi(failures.min(16) as i32);
        (self.base_timeout_us as f64 * factor) as u64
    }

    /// Any two quorums intersect in at least f+1 replicas, hence at least
    /// one honest one.
    pub fn quorum_intersection_ok(&self) -> bool {
        let q = self.quorum() as i64;
        2 * q - self.n as i64 >= self.f as i64 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MsgKind {
    Proposal,
    Prepare,
    Commit,
    ViewChange,
    NewView,
    BlockFetchReq,
    BlockFetchResp,
    Evidence,
    TxGossip,
}

impl MsgKind {
    fn code(self) -> u8 {
        match self {
            MsgKind::Proposal => 1,
            MsgKind::Prepare => 2,
            MsgKind::Commit => 3,
            MsgKind::ViewChange => 4,
            MsgKind::NewView => 5,
            MsgKind::BlockFetchReq => 6,
            MsgKind::BlockFetchResp => 7,
            MsgKind::Evidence => 8,
            MsgKind::TxGossip => 9,
        }
    }

    /// Consensus-stratum authentication applies to the protocol votes;
    /// fetches are content-addressed by digest, evidence is self-verifying
    /// against the chain, and transactions carry their own MAC vectors.
    pub fn authenticated(self) -> bool {
        matches!(
            self,
            MsgKind::Proposal
                | MsgKind::Prepare
                | MsgKind::Commit
                | MsgKind::ViewChange
                | MsgKind::NewView
        )
    }
}

/// Highest prepared certificate a replica carries into a view change.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreparedInfo {
    pub view: u64,
    pub height: u64,
    #[serde(skip)]
    pub digest: Digest32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload<W> {
    Proposal { block: Block<W> },
    Prepare,
    Commit,
    ViewChange { prepared: Option<(PreparedInfo, Block<W>)> },
    NewView { block: Block<W> },
    BlockFetchReq,
    BlockFetchResp { block: Block<W> },
    Evidence { entries: Vec<TxEvidence<W>> },
    TxGossip { tx: Transaction<W> },
}

impl<W> Payload<W> {
    pub fn kind(&self) -> MsgKind {
        match self {
            Payload::Proposal { .. } => MsgKind::Proposal,
            Payload::Prepare => MsgKind::Prepare,
            Payload::Commit => MsgKind::Commit,
            Payload::ViewChange { .. } => MsgKind::ViewChange,
            Payload::NewView { .. } => MsgKind::NewView,
            Payload::BlockFetchReq => MsgKind::BlockFetchReq,
            Payload::BlockFetchResp { .. } => MsgKind::BlockFetchResp,
            Payload::Evidence { .. } => MsgKind::Evidence,
            Payload::TxGossip { .. } => MsgKind::TxGossip,
        }
    }
}

/// One point-to-point consensus message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope<W> {
    pub from: NodeId,
    pub to: NodeId,
    pub view: u64,
    pub height: u64,
    pub digest: Digest32,
    /// Consensus-stream key index and tag, present on authenticated kinds.
    pub auth: Option<(u64, AuthTag<W>)>,
    pub payload: Payload<W>,
}

impl<W: GfWord> Envelope<W> {
    /// Canonical bytes covered by the authenticator.
    fn auth_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + 8 + 8 + 32 + 4 + 4);
        out.push(self.payload.kind().code());
        out.extend_from_slice(&self.view.to_be_bytes());
        out.extend_from_slice(&self.height.to_be_bytes());
        out.extend_from_slice(&self.digest);
        out.extend_from_slice(&self.from.to_be_bytes());
        out.extend_from_slice(&self.to.to_be_bytes());
        out
    }
}

/// JSON-lines trace record of one state transition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time_us: u64,
    pub replica: NodeId,
    pub event: String,
    pub view: u64,
    pub height: u64,
    pub digest: String,
}

fn digest_prefix(d: &Digest32) -> String {
    d[..6].iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything a replica step emits for the harness to act on.
#[derive(Debug)]
pub struct StepOutput<W> {
    pub messages: Vec<Envelope<W>>,
    pub events: Vec<TraceEvent>,
    /// Heights finalized during this step.
    pub finalized: Vec<u64>,
}

impl<W> Default for StepOutput<W> {
    fn default() -> Self {
        Self {
            messages: Vec::new(),
            events: Vec::new(),
            finalized: Vec::new(),
        }
    }
}

impl<W> StepOutput<W> {
    fn merge(&mut self, other: StepOutput<W>) {
        self.messages.extend(other.messages);
        self.events.extend(other.events);
        self.finalized.extend(other.finalized);
    }
}

/// Counters the harness folds into run metrics.
#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaMetrics {
    pub dropped_unverified: u64,
    pub verified_messages: u64,
    pub view_changes: u64,
    pub equivocations_detected: u64,
    pub deferred_proposals: u64,
    pub key_starved_sends: u64,
    pub rejected_txs: u64,
    pub fetches: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    /// Proposal validated, prepare broadcast.
    Prepared,
    /// Prepare quorum seen, commit broadcast.
    Committing,
}

struct PendingTx<W> {
    arrival_us: u64,
    tx: Transaction<W>,
}

/// One BFT replica: ledger, key store, vote ledgers and timers.
pub struct Replica<W> {
    id: NodeId,
    cfg: ConsensusConfig,
    view: u64,
    phase: Phase,
    chain: Chain<W>,
    state: crate::ledger::AccountState,
    keystore: NodeKeyStore<W>,
    cache: VerdictCache,
    mempool: VecDeque<PendingTx<W>>,
    /// Current candidate at (view, height): digest and full block.
    candidate: Option<(Digest32, Block<W>)>,
    prepare_votes: BTreeMap<(u64, u64, Digest32), BTreeSet<NodeId>>,
    commit_votes: BTreeMap<(u64, u64, Digest32), BTreeSet<NodeId>>,
    sent_prepare: BTreeSet<(u64, u64)>,
    sent_commit: BTreeSet<(u64, u64)>,
    /// Prepared lock: highest (view, digest, block) with a prepare quorum.
    locked: Option<(u64, Digest32, Block<W>)>,
    view_change_votes: BTreeMap<u64, BTreeSet<NodeId>>,
    view_change_locks: BTreeMap<u64, Vec<(u64, Block<W>)>>,
    new_view_sent: BTreeSet<u64>,
    /// First proposal digest seen per (view, height), for equivocation
    /// detection.
    first_proposal: BTreeMap<(u64, u64), Digest32>,
    flagged: BTreeSet<NodeId>,
    committed: BTreeMap<u64, Digest32>,
    /// Commit-quorum digests whose block content we still need.
    pending_fetch: BTreeMap<Digest32, (u64, u64)>,
    /// Evidence contributions received per finalized height.
    evidence_pool: BTreeMap<u64, BTreeMap<(NodeId, u64), TxEvidence<W>>>,
    /// Time each height finalized (drives the evidence grace window).
    finalized_at: BTreeMap<u64, u64>,
    own_next_ctr: u64,
    consecutive_failures: u32,
    /// When the current candidate entered the pipeline (leader side).
    candidate_since_us: Option<u64>,
    /// When the last timeout fired, so backoff measures from there.
    last_timeout_us: Option<u64>,
    deadline_us: Option<u64>,
    /// Leader-side censorship injection (adversary harness hook): drop this
    /// sender's transactions at assembly.
    pub censor_sender: Option<NodeId>,
    pub metrics: ReplicaMetrics,
}

impl<W: GfWord> Replica<W> {
    pub fn new(
        id: NodeId,
        cfg: ConsensusConfig,
        keystore: NodeKeyStore<W>,
        genesis_balance: u64,
    ) -> Result<Self, ConsensusError> {
        cfg.validate()?;
        Ok(Self {
            id,
            cfg,
            view: 0,
            phase: Phase::Idle,
            chain: Chain::new(),
            state: crate::ledger::AccountState::genesis(cfg.n, genesis_balance),
            keystore,
            cache: VerdictCache::default(),
            mempool: VecDeque::new(),
            candidate: None,
            prepare_votes: BTreeMap::new(),
            commit_votes: BTreeMap::new(),
            sent_prepare: BTreeSet::new(),
            sent_commit: BTreeSet::new(),
            locked: None,
            view_change_votes: BTreeMap::new(),
            view_change_locks: BTreeMap::new(),
            new_view_sent: BTreeSet::new(),
            first_proposal: BTreeMap::new(),
            flagged: BTreeSet::new(),
            committed: BTreeMap::new(),
            pending_fetch: BTreeMap::new(),
            evidence_pool: BTreeMap::new(),
            finalized_at: BTreeMap::new(),
            own_next_ctr: 0,
            consecutive_failures: 0,
            candidate_since_us: None,
            last_timeout_us: None,
            deadline_us: None,
            censor_sender: None,
            metrics: ReplicaMetrics::default(),
        })
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn view(&self) -> u64 {
        self.view
    }

    pub fn is_leader(&self) -> bool {
        self.cfg.leader(self.view) == self.id
    }

    pub fn chain(&self) -> &Chain<W> {
        self.chain_ref()
    }

    fn chain_ref(&self) -> &Chain<W> {
        &self.chain
    }

    pub fn chain_mut(&mut self) -> &mut Chain<W> {
        &mut self.chain
    }

    pub fn state(&self) -> &crate::ledger::AccountState {
        &self.state
    }

    pub fn keystore(&self) -> &NodeKeyStore<W> {
        &self.keystore
    }

    pub fn keystore_mut(&mut self) -> &mut NodeKeyStore<W> {
        &mut self.keystore
    }

    pub fn committed(&self) -> &BTreeMap<u64, Digest32> {
        &self.committed
    }

    pub fn mempool_len(&self) -> usize {
        self.mempool.len()
    }

    pub fn deadline(&self) -> Option<u64> {
        self.deadline_us
    }

    fn trace(&self, now: u64, event: &str, height: u64, digest: &Digest32) -> TraceEvent {
        TraceEvent {
            time_us: now,
            replica: self.id,
            event: event.to_string(),
            view: self.view,
            height,
            digest: digest_prefix(digest),
        }
    }

    /// The liveness window is anchored to the oldest unserviced work item
    /// (oldest pending transaction or the open round), so a leader that
    /// finalizes other traffic while censoring one sender still times out.
    fn rearm_timer(&mut self) {
        let oldest_pending = self.mempool.front().map(|p| p.arrival_us);
        let anchor = match (oldest_pending, self.candidate_since_us) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.deadline_us = anchor.map(|a| {
            let base = self.last_timeout_us.map_or(a, |t| t.max(a));
            base + self.cfg.timeout_after_failures(self.consecutive_failures)
        });
    }

    /// Authenticated envelope to one peer; returns None when the consensus
    /// stream has run dry (the message is withheld, never sent bare).
    fn sealed(
        &mut self,
        to: NodeId,
        view: u64,
        height: u64,
        digest: Digest32,
        payload: Payload<W>,
    ) -> Option<Envelope<W>> {
        let mut env = Envelope {
            from: self.id,
            to,
            view,
            height,
            digest,
            auth: None,
            payload,
        };
        let reserved = match self.keystore.reserve_consensus(to) {
            Ok(r) => r,
            Err(_) => {
                self.metrics.key_starved_sends += 1;
                return None;
            }
        };
        let mut otp = reserved.otp_key;
        let tag = make_tag(&reserved.hash_key, &mut otp, &env.auth_bytes(), reserved.index)
            .expect("fresh otp");
        env.auth = Some((reserved.index, tag));
        Some(env)
    }

    fn broadcast(
        &mut self,
        view: u64,
        height: u64,
        digest: Digest32,
        payload: Payload<W>,
    ) -> Vec<Envelope<W>> {
        let peers: Vec<NodeId> = (0..self.cfg.n).filter(|&p| p != self.id).collect();
        peers
            .into_iter()
            .filter_map(|p| self.sealed(p, view, height, digest, payload.clone()))
            .collect()
    }

    /// Unauthenticated envelope (content-addressed or self-verifying kinds).
    fn bare(
        &self,
        to: NodeId,
        view: u64,
        height: u64,
        digest: Digest32,
        payload: Payload<W>,
    ) -> Envelope<W> {
        Envelope {
            from: self.id,
            to,
            view,
            height,
            digest,
            auth: None,
            payload,
        }
    }

    /// Create, locally enqueue and gossip one of this node's transactions.
    /// Returns None (and no messages) when evidence keys are exhausted.
    pub fn submit_transaction(
        &mut self,
        receiver: NodeId,
        amount: u64,
        now: u64,
    ) -> (Option<Transaction<W>>, StepOutput<W>) {
        let mut out = StepOutput::default();
        let ctr = self.own_next_ctr;
        let payload = crate::ledger::TxPayload {
            sender: self.id,
            receiver,
            amount,
            timestamp_us: now,
        };
        let reserved = match self.keystore.reserve_vector_keys(ctr) {
            Ok(r) => r,
            Err(_) => return (None, out),
        };
        let keys = reserved
            .into_iter()
            .map(|r| (r.hash_key, r.otp_key))
            .collect();
        let vector = crate::auth::build_vector(
            self.cfg.n,
            self.id,
            keys,
            &payload.canonical_bytes(),
            ctr,
        )
        .expect("key count matches peer count");
        self.own_next_ctr += 1;
        let tx = Transaction {
            sender: self.id,
            ctr,
            payload,
            vector,
        };
        self.enqueue_tx(tx.clone(), now);
        self.rearm_timer();
        for peer in 0..self.cfg.n {
            if peer != self.id {
                out.messages.push(self.bare(
                    peer,
                    self.view,
                    0,
                    [0u8; 32],
                    Payload::TxGossip { tx: tx.clone() },
                ));
            }
        }
        (Some(tx), out)
    }

    fn enqueue_tx(&mut self, tx: Transaction<W>, now: u64) {
        // drop stale or duplicate entries early
        if tx.ctr < self.state.expected_ctr(tx.sender) {
            return;
        }
        let digest = tx.content_digest();
        if self
            .mempool
            .iter()
            .any(|p| p.tx.sender == tx.sender && p.tx.ctr == tx.ctr && p.tx.content_digest() == digest)
        {
            return;
        }
        self.mempool.push_back(PendingTx {
            arrival_us: now,
            tx,
        });
    }

    /// FIFO block assembly with a provisional state walk; gaps in a
    /// sender's counter sequence stay pending, invalid entries drop.
    fn assemble_block(&mut self, now: u64) -> Option<Block<W>> {
        let height = self.chain.height() + 1;
        let evidence = self.evidence_payload_for(height - 1);
        let mut balances = self.state.balances.clone();
        let mut ctrs = self.state.next_ctr.clone();
        let mut chosen: Vec<Transaction<W>> = Vec::new();
        let mut keep: VecDeque<PendingTx<W>> = VecDeque::new();
        while let Some(pending) = self.mempool.pop_front() {
            if chosen.len() >= self.cfg.block_size as usize {
                keep.push_back(pending);
                continue;
            }
            let tx = &pending.tx;
            if self.censor_sender == Some(tx.sender) {
                keep.push_back(pending);
                continue;
            }
            let slot = check_vector_slot(tx, self.id, &mut self.keystore, &mut self.cache);
            if slot != SlotCheck::Ok {
                self.metrics.rejected_txs += 1;
                continue;
            }
            let expected = ctrs.get(&tx.sender).copied().unwrap_or(0);
            let balance = balances.get(&tx.payload.sender).copied().unwrap_or(0);
            match semantic_check(tx, expected, balance) {
                TxVerdict::Accept => {
                    *balances.entry(tx.payload.sender).or_insert(0) -= tx.payload.amount;
                    *balances.entry(tx.payload.receiver).or_insert(0) += tx.payload.amount;
                    *ctrs.entry(tx.sender).or_insert(0) = expected + 1;
                    chosen.push(pending.tx);
                }
                TxVerdict::Reject(RejectReason::Replay) if tx.ctr > expected => {
                    // counter gap: an earlier tx is still in flight
                    keep.push_back(pending);
                }
                TxVerdict::Reject(_) => {
                    self.metrics.rejected_txs += 1;
                }
            }
        }
        self.mempool = keep;
        if chosen.is_empty() && now == 0 {
            return None;
        }
        Some(Block::new(
            height,
            self.chain.tip().hash(),
            self.id,
            self.view,
            chosen,
            evidence,
        ))
    }

    fn evidence_payload_for(&self, height: u64) -> EvidencePayload<W> {
        let entries = self
            .evidence_pool
            .get(&height)
            .map(|m| m.values().cloned().collect())
            .unwrap_or_default();
        EvidencePayload::merge(height, entries)
    }

    /// Whether every transaction of the finalized block at `height` has
    /// disclosed keys in the local evidence pool.
    fn evidence_complete_for(&self, height: u64) -> bool {
        let Some(block) = self.chain.block_at(height) else {
            return true;
        };
        let pool = self.evidence_pool.get(&height);
        block.transactions.iter().all(|tx| {
            pool.is_some_and(|m| m.contains_key(&(tx.sender, tx.ctr)))
        })
    }

    /// Leader-side proposal pump; the harness calls this after every event.
    pub fn maybe_propose(&mut self, now: u64) -> StepOutput<W> {
        let mut out = StepOutput::default();
        if !self.is_leader() || self.candidate.is_some() || self.mempool.is_empty() {
            return out;
        }
        let oldest = self.mempool.front().map(|p| p.arrival_us).unwrap_or(now);
        let full = self.mempool.len() >= self.cfg.block_size as usize;
        let stale = now >= oldest + self.cfg.batch_timeout_us;
        if !(full || stale) {
            return out;
        }
        // commit-then-reveal: give the previous block's evidence a grace
        // window to arrive before proposing without it
        let prev = self.chain.height();
        if prev > 0 && !self.evidence_complete_for(prev) {
            let finalized_at = self.finalized_at.get(&prev).copied().unwrap_or(now);
            if now < finalized_at + self.cfg.evidence_grace_us {
                self.metrics.deferred_proposals += 1;
                return out;
            }
        }
        let Some(block) = self.assemble_block(now) else {
            return out;
        };
        if block.transactions.is_empty() && self.mempool.is_empty() {
            // nothing admissible yet
            return out;
        }
        let digest = block.hash();
        let height = block.header.height;
        out.events.push(self.trace(now, "propose", height, &digest));
        self.first_proposal.insert((self.view, height), digest);
        let msgs = self.broadcast(
            self.view,
            height,
            digest,
            Payload::Proposal {
                block: block.clone(),
            },
        );
        if msgs.len() < (self.cfg.n - 1) as usize {
            self.metrics.deferred_proposals += 1;
        }
        out.messages.extend(msgs);
        self.candidate = Some((digest, block));
        self.candidate_since_us = Some(now);
        self.rearm_timer();
        // leader endorses its own candidate
        let own = self.cast_prepare(self.view, height, digest, now);
        out.merge(own);
        out
    }

    /// Verify the consensus-stratum authenticator of an inbound envelope.
    fn verify_envelope(&mut self, env: &Envelope<W>) -> bool {
        if !env.payload.kind().authenticated() {
            return true;
        }
        let Some((index, tag)) = env.auth else {
            return false;
        };
        let Ok((hash_key, otp_key)) = self.keystore.take_consensus_at(env.from, index) else {
            return false;
        };
        verify_tag_raw(hash_key, otp_key, &env.auth_bytes(), index, &tag)
    }

    /// Main dispatch: verify, then act. Unverified messages are dropped and
    /// counted; nothing below the verification gate ever touches state.
    pub fn handle_message(&mut self, env: Envelope<W>, now: u64) -> StepOutput<W> {
        if env.to != self.id {
            return StepOutput::default();
        }
        if !self.verify_envelope(&env) {
            self.metrics.dropped_unverified += 1;
            return StepOutput::default();
        }
        if env.payload.kind().authenticated() {
            self.metrics.verified_messages += 1;
        }
        match env.payload.clone() {
            Payload::TxGossip { tx } => {
                let mut out = StepOutput::default();
                if tx.structure_ok(self.cfg.n) {
                    self.enqueue_tx(tx, now);
                    self.rearm_timer();
                }
                out.merge(self.maybe_propose(now));
                out
            }
            Payload::Proposal { block } | Payload::NewView { block } => {
                self.on_proposal(env, block, now)
            }
            Payload::Prepare => self.on_prepare(env, now),
            Payload::Commit => self.on_commit(env, now),
            Payload::ViewChange { prepared } => self.on_view_change(env, prepared, now),
            Payload::BlockFetchReq => self.on_fetch_req(env),
            Payload::BlockFetchResp { block } => self.on_fetch_resp(block, now),
            Payload::Evidence { entries } => {
                self.absorb_evidence(entries);
                StepOutput::default()
            }
        }
    }

    fn absorb_evidence(&mut self, entries: Vec<TxEvidence<W>>) {
        for entry in entries {
            // only keep evidence for transactions that are actually in the
            // finalized chain at that sender/ctr
            let Some(height) = self.committed_height_of(entry.sender, entry.ctr) else {
                continue;
            };
            self.evidence_pool
                .entry(height)
                .or_default()
                .entry((entry.sender, entry.ctr))
                .or_insert(entry);
        }
    }

    fn committed_height_of(&self, sender: NodeId, ctr: u64) -> Option<u64> {
        // scan back a few blocks; evidence always refers to recent history
        let tip = self.chain.height();
        let mut h = tip;
        loop {
            if let Some(block) = self.chain.block_at(h) {
                if block
                    .transactions
                    .iter()
                    .any(|t| t.sender == sender && t.ctr == ctr)
                {
                    return Some(h);
                }
            }
            if h == 0 || tip - h >= 8 {
                return None;
            }
            h -= 1;
        }
    }

    fn on_proposal(&mut self, env: Envelope<W>, block: Block<W>, now: u64) -> StepOutput<W> {
        let mut out = StepOutput::default();
        let is_new_view = matches!(env.payload.kind(), MsgKind::NewView);
        // a new-view message moves us into the announced view
        if is_new_view && env.view > self.view {
            self.enter_view(env.view, now, &mut out);
        }
        if env.view != self.view || self.cfg.leader(env.view) != env.from {
            return out;
        }
        let height = self.chain.height() + 1;
        if block.header.height != height || env.height != height {
            return out;
        }
        let digest = block.hash();
        if digest != env.digest {
            return out;
        }
        // equivocation: a second, different candidate for the same slot
        match self.first_proposal.get(&(env.view, height)) {
            Some(first) if *first != digest => {
                self.metrics.equivocations_detected += 1;
                self.flagged.insert(env.from);
                out.events.push(self.trace(now, "equivocation", height, &digest));
                return out;
            }
            Some(_) => return out, // duplicate of the same candidate
            None => {
                self.first_proposal.insert((env.view, height), digest);
            }
        }
        if !block.integrity_ok() || block.header.prev_hash != self.chain.tip().hash() {
            out.events.push(self.trace(now, "reject_block", height, &digest));
            return out;
        }
        // honor a prepared lock: within this view only the locked digest
        // may be endorsed at this height
        if let Some((_, locked_digest, _)) = &self.locked {
            if self
                .locked
                .as_ref()
                .is_some_and(|(_, _, b)| b.header.height == height)
                && *locked_digest != digest
            {
                out.events.push(self.trace(now, "locked_conflict", height, &digest));
                return out;
            }
        }
        // dual verification of every constituent transaction
        if let Err((idx, reason)) = validate_block_txs(
            &self.state,
            &block,
            self.id,
            &mut self.keystore,
            &mut self.cache,
        ) {
            self.metrics.rejected_txs += 1;
            out.events.push(self.trace(
                now,
                &format!("reject_tx{idx}_{reason:?}"),
                height,
                &digest,
            ));
            return out;
        }
        self.candidate = Some((digest, block));
        self.candidate_since_us = Some(now);
        self.rearm_timer();
        out.events.push(self.trace(now, "validated", height, &digest));
        out.merge(self.cast_prepare(env.view, height, digest, now));
        out
    }

    fn cast_prepare(&mut self, view: u64, height: u64, digest: Digest32, now: u64) -> StepOutput<W> {
        let mut out = StepOutput::default();
        if !self.sent_prepare.insert((view, height)) {
            return out;
        }
        out.events.push(self.trace(now, "prepare", height, &digest));
        let msgs = self.broadcast(view, height, digest, Payload::Prepare);
        out.messages.extend(msgs);
        // count our own endorsement
        out.merge(self.tally_prepare(view, height, digest, self.id, now));
        out
    }

    fn on_prepare(&mut self, env: Envelope<W>, now: u64) -> StepOutput<W> {
        self.tally_prepare(env.view, env.height, env.digest, env.from, now)
    }

    fn tally_prepare(
        &mut self,
        view: u64,
        height: u64,
        digest: Digest32,
        voter: NodeId,
        now: u64,
    ) -> StepOutput<W> {
        let mut out = StepOutput::default();
        if height <= self.chain.height() {
            return out;
        }
        let votes = self
            .prepare_votes
            .entry((view, height, digest))
            .or_default();
        votes.insert(voter);
        if votes.len() < self.cfg.quorum() {
            return out;
        }
        // prepared: lock on this candidate if we hold its content
        if let Some((cand_digest, block)) = &self.candidate {
            if *cand_digest == digest {
                let newer = self
                    .locked
                    .as_ref()
                    .map_or(true, |(lv, _, _)| view >= *lv);
                if newer {
                    self.locked = Some((view, digest, block.clone()));
                }
            }
        }
        if !self.sent_commit.insert((view, height)) {
            return out;
        }
        self.phase = Phase::Committing;
        out.events.push(self.trace(now, "commit", height, &digest));
        let msgs = self.broadcast(view, height, digest, Payload::Commit);
        out.messages.extend(msgs);
        out.merge(self.tally_commit(view, height, digest, self.id, now));
        out
    }

    fn on_commit(&mut self, env: Envelope<W>, now: u64) -> StepOutput<W> {
        self.tally_commit(env.view, env.height, env.digest, env.from, now)
    }

    fn tally_commit(
        &mut self,
        view: u64,
        height: u64,
        digest: Digest32,
        voter: NodeId,
        now: u64,
    ) -> StepOutput<W> {
        let mut out = StepOutput::default();
        if height <= self.chain.height() {
            return out;
        }
        let votes = self.commit_votes.entry((view, height, digest)).or_default();
        votes.insert(voter);
        if votes.len() < self.cfg.quorum() {
            return out;
        }
        let voters: BTreeSet<NodeId> = votes.clone();
        // committed digest with content at hand finalizes immediately;
        // otherwise fetch the block from any voter
        let block = match &self.candidate {
            Some((d, b)) if *d == digest => Some(b.clone()),
            _ => match &self.locked {
                Some((_, d, b)) if *d == digest => Some(b.clone()),
                _ => None,
            },
        };
        match block {
            Some(block) => out.merge(self.finalize(block, digest, voters, now)),
            None => {
                if self.pending_fetch.insert(digest, (view, height)).is_none() {
                    self.metrics.fetches += 1;
                    let target = voters
                        .iter()
                        .copied()
                        .find(|v| *v != self.id)
                        .unwrap_or(self.cfg.leader(view));
                    out.events.push(self.trace(now, "fetch", height, &digest));
                    out.messages
                        .push(self.bare(target, view, height, digest, Payload::BlockFetchReq));
                }
            }
        }
        out
    }

    fn on_fetch_req(&mut self, env: Envelope<W>) -> StepOutput<W> {
        let mut out = StepOutput::default();
        // serve from the finalized chain or the current candidate
        let block = self
            .chain
            .block_at(env.height)
            .cloned()
            .filter(|b| b.hash() == env.digest)
            .or_else(|| match &self.candidate {
                Some((d, b)) if *d == env.digest => Some(b.clone()),
                _ => None,
            })
            .or_else(|| match &self.locked {
                Some((_, d, b)) if *d == env.digest => Some(b.clone()),
                _ => None,
            });
        if let Some(block) = block {
            out.messages.push(self.bare(
                env.from,
                env.view,
                env.height,
                env.digest,
                Payload::BlockFetchResp { block },
            ));
        }
        out
    }

    fn on_fetch_resp(&mut self, block: Block<W>, now: u64) -> StepOutput<W> {
        let mut out = StepOutput::default();
        let digest = block.hash();
        let Some((view, height)) = self.pending_fetch.get(&digest).copied() else {
            return out;
        };
        if block.header.height != height || !block.integrity_ok() {
            return out;
        }
        let Some(voters) = self.commit_votes.get(&(view, height, digest)).cloned() else {
            return out;
        };
        if voters.len() < self.cfg.quorum() {
            return out;
        }
        // content is digest-bound; validate transactions before applying
        if block.header.prev_hash != self.chain.tip().hash() {
            return out;
        }
        if validate_block_txs(
            &self.state,
            &block,
            self.id,
            &mut self.keystore,
            &mut self.cache,
        )
        .is_err()
        {
            out.events.push(self.trace(now, "fetch_invalid", height, &digest));
            return out;
        }
        out.merge(self.finalize(block, digest, voters, now));
        out
    }

    /// Finalization: apply, append, erase consensus keys, disclose own
    /// evidence, and reset the round.
    fn finalize(
        &mut self,
        block: Block<W>,
        digest: Digest32,
        voters: BTreeSet<NodeId>,
        now: u64,
    ) -> StepOutput<W> {
        let mut out = StepOutput::default();
        let height = block.header.height;
        if self.committed.contains_key(&height) || height != self.chain.height() + 1 {
            return out;
        }
        debug_assert!(voters.len() >= self.cfg.quorum());
        if apply_block(&mut self.state, &block).is_err() {
            out.events.push(self.trace(now, "apply_refused", height, &digest));
            return out;
        }
        // consume the verifier-side evidence indices of every applied tx
        for tx in &block.transactions {
            if tx.sender != self.id {
                let _ = self.keystore.consume_recv_evidence(tx.sender, tx.ctr);
            }
        }
        self.chain.append(block.clone()).expect("validated block");
        self.committed.insert(height, digest);
        self.finalized_at.insert(height, now);
        self.keystore.note_finalized(height);
        // zero-disclosure hygiene before any further proposal is processed
        self.keystore.erase_all_consensus();
        // commit-then-reveal: broadcast our own consumed evidence keys
        let own_ctrs: Vec<u64> = block
            .transactions
            .iter()
            .filter(|t| t.sender == self.id)
            .map(|t| t.ctr)
            .collect();
        if let Ok(entries) = self.keystore.extract_evidence_payload(height, &own_ctrs) {
            if !entries.is_empty() {
                let pool = self.evidence_pool.entry(height).or_default();
                for e in &entries {
                    pool.insert((e.sender, e.ctr), e.clone());
                }
                for peer in 0..self.cfg.n {
                    if peer != self.id {
                        out.messages.push(self.bare(
                            peer,
                            self.view,
                            height,
                            digest,
                            Payload::Evidence {
                                entries: entries.clone(),
                            },
                        ));
                    }
                }
            }
        }
        // drop finalized txs from the mempool
        let state = &self.state;
        self.mempool
            .retain(|p| p.tx.ctr >= state.expected_ctr(p.tx.sender));
        // round reset
        self.candidate = None;
        self.candidate_since_us = None;
        self.phase = Phase::Idle;
        self.locked = None;
        self.pending_fetch.remove(&digest);
        self.consecutive_failures = 0;
        self.last_timeout_us = None;
        self.prepare_votes.retain(|(_, h, _), _| *h > height);
        self.commit_votes.retain(|(_, h, _), _| *h > height);
        self.sent_prepare.retain(|(_, h)| *h > height);
        self.sent_commit.retain(|(_, h)| *h > height);
        self.first_proposal.retain(|(_, h), _| *h > height);
        self.evidence_pool.retain(|h, _| height.saturating_sub(*h) < 8);
        out.events.push(self.trace(now, "finalize", height, &digest));
        out.finalized.push(height);
        self.rearm_timer();
        out
    }

    /// Timeout: liveness degraded, vote to replace the leader.
    pub fn handle_timeout(&mut self, now: u64) -> StepOutput<W> {
        let mut out = StepOutput::default();
        let Some(deadline) = self.deadline_us else {
            return out;
        };
        if now < deadline {
            return out;
        }
        if self.mempool.is_empty() && self.candidate.is_none() {
            self.deadline_us = None;
            return out;
        }
        let target = self.view + 1;
        self.metrics.view_changes += 1;
        self.consecutive_failures += 1;
        self.last_timeout_us = Some(now);
        self.rearm_timer();
        out.events
            .push(self.trace(now, "timeout", self.chain.height() + 1, &[0u8; 32]));
        let prepared = self
            .locked
            .clone()
            .map(|(view, digest, block)| {
                (
                    PreparedInfo {
                        view,
                        height: block.header.height,
                        digest,
                    },
                    block,
                )
            });
        let msgs = self.broadcast(
            target,
            self.chain.height() + 1,
            [0u8; 32],
            Payload::ViewChange {
                prepared: prepared.clone(),
            },
        );
        out.messages.extend(msgs);
        // count own vote
        out.merge(self.tally_view_change(target, self.id, prepared, now));
        out
    }

    fn on_view_change(
        &mut self,
        env: Envelope<W>,
        prepared: Option<(PreparedInfo, Block<W>)>,
        now: u64,
    ) -> StepOutput<W> {
        self.tally_view_change(env.view, env.from, prepared, now)
    }

    fn tally_view_change(
        &mut self,
        target_view: u64,
        voter: NodeId,
        prepared: Option<(PreparedInfo, Block<W>)>,
        now: u64,
    ) -> StepOutput<W> {
        let mut out = StepOutput::default();
        if target_view <= self.view {
            return out;
        }
        let votes = self.view_change_votes.entry(target_view).or_default();
        votes.insert(voter);
        if let Some((info, block)) = prepared {
            if block.hash() == info.digest {
                self.view_change_locks
                    .entry(target_view)
                    .or_default()
                    .push((info.view, block));
            }
        }
        if self.view_change_votes[&target_view].len() < self.cfg.quorum() {
            return out;
        }
        self.enter_view(target_view, now, &mut out);
        // the new leader re-proposes the highest prepared block, or fresh
        if self.cfg.leader(target_view) == self.id && self.new_view_sent.insert(target_view) {
            let height = self.chain.height() + 1;
            let carried = self
                .view_change_locks
                .get(&target_view)
                .and_then(|locks| {
                    locks
                        .iter()
                        .filter(|(_, b)| b.header.height == height)
                        .max_by_key(|(v, _)| *v)
                        .cloned()
                })
                .map(|(_, b)| b)
                .or_else(|| match &self.locked {
                    Some((_, _, b)) if b.header.height == height => Some(b.clone()),
                    _ => None,
                });
            let block = match carried {
                Some(mut b) => {
                    // the re-proposal keeps the payload but carries the new
                    // view in its header
                    b.header.view = target_view;
                    let refreshed = Block::new(
                        b.header.height,
                        b.header.prev_hash,
                        b.header.proposer,
                        target_view,
                        b.transactions,
                        b.evidence_for_previous,
                    );
                    Some(refreshed)
                }
                None => self.assemble_block(now),
            };
            if let Some(block) = block {
                if !block.transactions.is_empty() || !self.mempool.is_empty() {
                    let digest = block.hash();
                    out.events.push(self.trace(now, "new_view", height, &digest));
                    self.first_proposal.insert((target_view, height), digest);
                    self.candidate = Some((digest, block.clone()));
                    let msgs =
                        self.broadcast(target_view, height, digest, Payload::NewView { block });
                    out.messages.extend(msgs);
                    out.merge(self.cast_prepare(target_view, height, digest, now));
                }
            }
        }
        out
    }

    fn enter_view(&mut self, view: u64, now: u64, out: &mut StepOutput<W>) {
        if view <= self.view {
            return;
        }
        self.view = view;
        self.candidate = None;
        self.candidate_since_us = None;
        self.phase = Phase::Idle;
        out.events
            .push(self.trace(now, "enter_view", self.chain.height() + 1, &[0u8; 32]));
        self.view_change_votes.retain(|v, _| *v > view);
        self.view_change_locks.retain(|v, _| *v > view);
        let _ = now;
        self.rearm_timer();
    }

    /// Seal an arbitrary envelope with this replica's own consensus keys.
    /// Adversary harnesses use this: a Byzantine node can only authenticate
    /// with material it legitimately holds.
    pub fn seal_envelope(
        &mut self,
        to: NodeId,
        view: u64,
        height: u64,
        digest: Digest32,
        payload: Payload<W>,
    ) -> Option<Envelope<W>> {
        self.sealed(to, view, height, digest, payload)
    }

    /// Per-sender counters the liveness checks read.
    pub fn own_next_ctr(&self) -> u64 {
        self.own_next_ctr
    }

    pub fn flagged(&self) -> &BTreeSet<NodeId> {
        &self.flagged
    }

    pub fn evidence_pool_for(&self, height: u64) -> Option<Vec<TxEvidence<W>>> {
        self.evidence_pool
            .get(&height)
            .map(|m| m.values().cloned().collect())
    }
}

/// Post-run safety verdict across honest replicas.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyVerdict {
    pub ok: bool,
    pub violations: Vec<String>,
}

/// No two honest replicas may commit different digests at any height, and
/// their chains must be prefix-consistent.
pub fn finality_check<W: GfWord>(replicas: &[&Replica<W>], honest: &[bool]) -> SafetyVerdict {
    let mut violations = Vec::new();
    let mut per_height: BTreeMap<u64, BTreeMap<Digest32, Vec<NodeId>>> = BTreeMap::new();
    for (i, replica) in replicas.iter().enumerate() {
        if !honest.get(i).copied().unwrap_or(true) {
            continue;
        }
        for (height, digest) in replica.committed() {
            per_height
                .entry(*height)
                .or_default()
                .entry(*digest)
                .or_default()
                .push(replica.id());
        }
        if !replica.chain().immutable_ok() {
            violations.push(format!("replica {} chain fails recomputation", replica.id()));
        }
    }
    for (height, digests) in &per_height {
        if digests.len() > 1 {
            violations.push(format!(
                "height {height}: conflicting commits {:?}",
                digests
                    .iter()
                    .map(|(d, who)| (digest_prefix(d), who.clone()))
                    .collect::<Vec<_>>()
            ));
        }
    }
    SafetyVerdict {
        ok: violations.is_empty(),
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keystore::PoolConfig;

    fn quorum_configs() {
        for f in 1..5u32 {
            let cfg = ConsensusConfig {
                n: 3 * f + 1,
                f,
                ..ConsensusConfig::default()
            };
            assert_eq!(cfg.quorum(), (2 * f + 1) as usize);
            assert!(cfg.quorum_intersection_ok());
        }
    }

    #[test]
    fn quorum_arithmetic() {
        quorum_configs();
        let cfg = ConsensusConfig {
            n: 4,
            f: 1,
            ..ConsensusConfig::default()
        };
        assert_eq!(cfg.leader(0), 0);
        assert_eq!(cfg.leader(5), 1);
        assert!(cfg.validate().is_ok());
        let bad = ConsensusConfig {
            n: 3,
            f: 1,
            ..ConsensusConfig::default()
        };
        assert_eq!(
            bad.validate(),
            Err(ConsensusError::FaultBoundViolated { n: 3, f: 1 })
        );
        let demo = ConsensusConfig {
            n: 3,
            f: 1,
            allow_unsafe: true,
            ..ConsensusConfig::default()
        };
        assert!(demo.validate().is_ok());
        assert!(!demo.quorum_intersection_ok());
    }

    #[test]
    fn timeout_backoff_doubles() {
        let cfg = ConsensusConfig::default();
        assert_eq!(cfg.timeout_after_failures(0), 500_000);
        assert_eq!(cfg.timeout_after_failures(1), 1_000_000);
        assert_eq!(cfg.timeout_after_failures(3), 4_000_000);
    }

    fn make_replicas(n: u32, seed: u64) -> Vec<Replica<u64>> {
        let cfg = ConsensusConfig {
            n,
            f: (n - 1) / 3,
            base_timeout_us: 500_000,
            batch_timeout_us: 0,
            block_size: 100,
            ..ConsensusConfig::default()
        };
        (0..n)
            .map(|id| {
                let ks = NodeKeyStore::new(
                    id,
                    n,
                    seed,
                    PoolConfig {
                        initial_seed_bits: 1_000_000,
                        evidence_weight: 1,
                        consensus_weight: 1,
                        ..PoolConfig::default()
                    },
                );
                Replica::new(id, cfg, ks, 1_000_000).unwrap()
            })
            .collect()
    }

    /// Synchronous message pump: drain all outputs until quiescent.
    fn pump(replicas: &mut [Replica<u64>], mut queue: Vec<Envelope<u64>>, now: u64) {
        let mut steps = 0;
        while let Some(env) = queue.pop() {
            steps += 1;
            assert!(steps < 100_000, "message storm");
            let to = env.to as usize;
            let out = replicas[to].handle_message(env, now);
            queue.extend(out.messages);
            let extra = replicas[to].maybe_propose(now);
            queue.extend(extra.messages);
        }
    }

    #[test]
    fn happy_path_finalizes_on_all_replicas() {
        let mut replicas = make_replicas(4, 900);
        let (tx, out) = replicas[1].submit_transaction(2, 25, 1_000);
        assert!(tx.is_some());
        pump(&mut replicas, out.messages, 1_000);
        for r in &replicas {
            assert_eq!(r.chain().height(), 1, "replica {}", r.id());
            assert_eq!(r.state().balance(1), 1_000_000 - 25);
            assert_eq!(r.state().balance(2), 1_000_000 + 25);
        }
        let refs: Vec<&Replica<u64>> = replicas.iter().collect();
        assert!(finality_check(&refs, &[true; 4]).ok);
        // all replicas erased the consensus indices they consumed
        for r in &replicas {
            for peer in r.keystore().peers() {
                let snap = r.keystore().send_pool(peer).unwrap().snapshot();
                assert_eq!(snap.consensus_erased_below, snap.consensus_head);
            }
        }
    }

    #[test]
    fn non_leader_never_proposes() {
        let mut replicas = make_replicas(4, 901);
        let (_, out) = replicas[2].submit_transaction(3, 1, 0);
        // replica 2 gossips but must not propose (leader of view 0 is 0)
        assert!(out
            .messages
            .iter()
            .all(|m| m.payload.kind() == MsgKind::TxGossip));
        let own = replicas[2].maybe_propose(0);
        assert!(own.messages.is_empty());
    }

    #[test]
    fn duplicate_votes_count_once() {
        let mut replicas = make_replicas(4, 902);
        let (_, out) = replicas[0].submit_transaction(1, 1, 0);
        // deliver gossip to the leader only; let it propose
        let gossip: Vec<_> = out.messages;
        let mut proposals = Vec::new();
        for env in gossip {
            let to = env.to as usize;
            let o = replicas[to].handle_message(env, 0);
            proposals.extend(o.messages);
            let p = replicas[to].maybe_propose(0);
            proposals.extend(p.messages);
        }
        let leader_out = replicas[0].maybe_propose(0);
        proposals.extend(leader_out.messages);
        // find one prepare destined to replica 3 and deliver it twice
        let prepare = proposals
            .iter()
            .find(|m| m.payload.kind() == MsgKind::Prepare && m.to == 3)
            .cloned();
        if let Some(p) = prepare {
            let before = replicas[3].prepare_votes.len();
            let _ = replicas[3].handle_message(p.clone(), 1);
            // replayed envelope fails key lookup and is dropped
            let dropped_before = replicas[3].metrics.dropped_unverified;
            let _ = replicas[3].handle_message(p, 1);
            assert_eq!(replicas[3].metrics.dropped_unverified, dropped_before + 1);
            let _ = before;
        }
    }

    #[test]
    fn unauthenticated_vote_is_dropped() {
        let mut replicas = make_replicas(4, 903);
        let env = Envelope {
            from: 1,
            to: 0,
            view: 0,
            height: 1,
            digest: [7u8; 32],
            auth: None,
            payload: Payload::<u64>::Prepare,
        };
        let out = replicas[0].handle_message(env, 0);
        assert!(out.messages.is_empty());
        assert_eq!(replicas[0].metrics.dropped_unverified, 1);
        assert!(replicas[0].prepare_votes.is_empty());
        // forged tag also drops
        let env = Envelope {
            from: 1,
            to: 0,
            view: 0,
            height: 1,
            digest: [7u8; 32],
            auth: Some((0, AuthTag(0xDEAD))),
            payload: Payload::<u64>::Prepare,
        };
        let out = replicas[0].handle_message(env, 0);
        assert!(out.messages.is_empty());
        assert_eq!(replicas[0].metrics.dropped_unverified, 2);
    }

    #[test]
    fn timeout_triggers_view_change_and_rotation() {
        let mut replicas = make_replicas(4, 904);
        // a tx arrives everywhere, but the leader (0) stays silent
        let (_, out) = replicas[1].submit_transaction(2, 5, 0);
        let mut queue = Vec::new();
        for env in out.messages {
            if env.to != 0 {
                let to = env.to as usize;
                let o = replicas[to].handle_message(env, 0);
                queue.extend(o.messages);
            }
        }
        assert!(queue.is_empty());
        // replicas 1..3 time out
        let deadline = replicas[1].deadline().unwrap();
        let mut vc_msgs = Vec::new();
        for r in replicas.iter_mut().skip(1) {
            let o = r.handle_timeout(deadline);
            vc_msgs.extend(o.messages);
        }
        assert!(vc_msgs
            .iter()
            .all(|m| m.payload.kind() == MsgKind::ViewChange));
        // deliver view changes among replicas 1..3 (leader 0 crashed)
        let deliverable: Vec<_> = vc_msgs.into_iter().filter(|m| m.to != 0).collect();
        pump(&mut replicas, deliverable, deadline + 1);
        // view advanced to 1; leader(1) = replica 1 re-proposed; block final
        for r in replicas.iter().skip(1) {
            assert_eq!(r.view(), 1, "replica {}", r.id());
            assert_eq!(r.chain().height(), 1, "replica {}", r.id());
        }
        let refs: Vec<&Replica<u64>> = replicas.iter().skip(1).collect();
        assert!(finality_check(&refs, &[true; 3]).ok);
    }

    #[test]
    fn no_timeout_when_blocks_flow() {
        let mut replicas = make_replicas(4, 905);
        let (_, out) = replicas[1].submit_transaction(2, 5, 0);
        pump(&mut replicas, out.messages, 0);
        for r in &replicas {
            assert_eq!(r.metrics.view_changes, 0);
            assert_eq!(r.deadline(), None, "timer cleared after finalization");
        }
    }
}
