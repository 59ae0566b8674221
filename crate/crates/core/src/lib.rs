//! Quantum-secured consortium blockchain toolkit.
//!
//! The crate models a consortium network in which pairwise
//! information-theoretically secure keys produced by a twin-field QKD star
//! topology replace digital signatures, and a quorum BFT protocol with
//! commit-then-reveal key disclosure replaces proof-of-work. It provides:
//!
//! * [`qkd`] — the asymptotic TF-QKD secret-key-rate model and the PLOB
//!   repeaterless bound (pure functions, generic over the float type);
//! * [`planner`] — the key supply/demand capacity planner (demand model,
//!   equilibrium radius, feasibility grids, sensitivity sweeps);
//! * [`gf`] / [`auth`] — carry-less GF(2^S) arithmetic and Wegman-Carter
//!   one-time authentication (polynomial AXU hash ⊕ OTP), generic over the
//!   tag width so reduced 8/16-bit variants share the production code path;
//! * [`keystore`] — stratified one-time key pools (evidence vs consensus
//!   streams) with counter-indexed reservation and disclosure tracking;
//! * [`ledger`] — transactions, hash-chained blocks, evidence payload
//!   embedding and the public post-disclosure auditor;
//! * [`consensus`] — the deterministic BFT replica state machine;
//! * [`simnet`] — the seeded discrete-event simulator binding it all
//!   together, with adversary injection and metrics collection.
//!
//! The numeric core is generic over the scalar type via `num-traits`; the
//! aliases below fix the default `f64` instantiations used by the simulator
//! and the CLI.

pub mod auth;
pub mod chainfile;
pub mod config;
pub mod consensus;
pub mod gf;
pub mod keystore;
pub mod ledger;
pub mod planner;
pub mod qkd;
pub mod scalar;
pub mod simnet;

pub use scalar::Real;

/// Terminal-node identifier (also the slot position in MAC vectors).
pub type NodeId = u32;

/// Default scalar for the rate model and planner.
pub type Scalar = f64;
/// Default tag word: 64-bit field elements, the production tag width.
pub type Word = u64;

pub type ChannelParams = qkd::ChannelParams<Scalar>;
pub type LinkGeometry = qkd::LinkGeometry<Scalar>;
pub type RateBreakdown = qkd::RateBreakdown<Scalar>;
pub type DemandParams = planner::DemandParams<Scalar>;
pub type EquilibriumResult = planner::EquilibriumResult<Scalar>;

pub type HashKey = auth::HashKey<Word>;
pub type OtpKey = auth::OtpKey<Word>;
pub type AuthTag = auth::AuthTag<Word>;
pub type AuthVector = auth::AuthVector<Word>;
