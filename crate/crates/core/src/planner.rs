//! Key supply/demand capacity planner.
//!
//! Demand side: the network consumes `K = T (N-1) S_key (1 + P N / B)`
//! bits/s of one-time key material — `T (N-1) S_key` for transaction MAC
//! vectors plus `(T/B) P N (N-1) S_key` for consensus votes. Supply side:
//! the per-pair TF-QKD rate from [`crate::qkd`], evaluated at twice the
//! network radius (users sit one radius from the relay), under the parallel
//! generation assumption; a `tdm` flag derates it by the unordered pair
//! count for the conservative shared-relay variant. Every routine here is a
//! deterministic pure function, so grid cells can be evaluated in any order.

use serde::{Deserialize, Serialize};

use crate::qkd::{secret_key_rate, ChannelParams, LinkGeometry, ModelError};
use crate::scalar::Real;

/// Blockchain-layer parameters feeding the demand model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandParams<F> {
    /// Node count N >= 2.
    pub nodes: u32,
    /// Target throughput, transactions/s.
    pub tps: F,
    /// Transactions per block B >= 1.
    pub block_size: u32,
    /// Consensus broadcast rounds P >= 1.
    pub consensus_rounds: u32,
    /// Authentication tag length, bits.
    pub s_key_bits: u32,
    /// Apply the dual-key stratification overhead correction (~1/B).
    #[serde(default)]
    pub stratification_overhead: bool,
}

impl<F: Real> DemandParams<F> {
    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: &str| Err(ModelError::InvalidParam(m.to_string()));
        if self.nodes < 2 {
            return err("node count must be >= 2");
        }
        if !(self.tps >= F::zero()) {
            return err("target TPS must be >= 0");
        }
        if self.block_size < 1 {
            return err("block size must be >= 1");
        }
        if self.consensus_rounds < 1 {
            return err("consensus rounds must be >= 1");
        }
        if self.s_key_bits < 1 {
            return err("tag length must be >= 1 bit");
        }
        Ok(())
    }
}

/// Result of a supply/demand equilibrium search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult<F> {
    /// Maximum feasible network radius, km.
    pub r_max_km: F,
    /// Supply at that radius, bits/s.
    pub supply_at_rmax: F,
    /// Demand the search equated against, bits/s.
    pub demand: F,
    pub converged: bool,
}

/// Planner-side supply conventions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupplyOptions {
    /// Divide the per-pair rate by N(N-1)/2 (shared relay, time division).
    pub tdm: bool,
}

impl Default for SupplyOptions {
    fn default() -> Self {
        Self { tdm: false }
    }
}

const BISECT_HI_KM: f64 = 500.0;
const BISECT_MAX_ITERS: u32 = 200;
const BISECT_REL_TOL: f64 = 1e-6;

/// Total key consumption, bits/s: `T (N-1) S_key (1 + P N / B)`, optionally
/// multiplied by `(1 + 1/B)` for the stratification overhead.
pub fn key_demand<F: Real>(d: &DemandParams<F>) -> F {
    let n = F::of(d.nodes as f64);
    let b = F::of(d.block_size as f64);
    let p = F::of(d.consensus_rounds as f64);
    let s = F::of(d.s_key_bits as f64);
    let mut demand = d.tps * (n - F::one()) * s * (F::one() + p * n / b);
    if d.stratification_overhead {
        demand = demand * (F::one() + F::one() / b);
    }
    demand
}

/// Network key supply at a given radius, bits/s.
pub fn supply_at_radius<F: Real>(
    p: &ChannelParams<F>,
    radius_km: F,
    nodes: u32,
    opts: SupplyOptions,
) -> F {
    let g = LinkGeometry::from_radius_km(radius_km).expect("radius >= 0");
    let rate = secret_key_rate(p, &g).rate_bps;
    if opts.tdm {
        let pairs = F::of((nodes as f64) * (nodes as f64 - 1.0) / 2.0);
        rate / pairs
    } else {
        rate
    }
}

/// Bisect the equilibrium radius where supply meets demand.
///
/// Supply is monotone non-increasing in the radius, so the root is unique.
/// Fails to converge (returning `r_max = 0`) when the demand is not positive
/// or already exceeds supply at zero distance.
pub fn max_radius<F: Real>(
    p: &ChannelParams<F>,
    d: &DemandParams<F>,
    opts: SupplyOptions,
) -> EquilibriumResult<F> {
    let demand = key_demand(d);
    let supply0 = supply_at_radius(p, F::zero(), d.nodes, opts);
    if !(demand > F::zero()) || supply0 <= demand {
        return EquilibriumResult {
            r_max_km: F::zero(),
            supply_at_rmax: supply0,
            demand,
            converged: false,
        };
    }
    let mut lo = F::zero();
    let mut hi = F::of(BISECT_HI_KM);
    let tol = F::of(BISECT_REL_TOL);
    let mut mid = lo;
    let mut supply_mid = supply0;
    for _ in 0..BISECT_MAX_ITERS {
        mid = (lo + hi) / F::of(2.0);
        supply_mid = supply_at_radius(p, mid, d.nodes, opts);
        if ((supply_mid - demand) / demand).abs() < tol {
            return EquilibriumResult {
                r_max_km: mid,
                supply_at_rmax: supply_mid,
                demand,
                converged: true,
            };
        }
        if supply_mid > demand {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    EquilibriumResult {
        r_max_km: mid,
        supply_at_rmax: supply_mid,
        demand,
        converged: false,
    }
}

/// Maximum sustainable throughput at a radius: the algebraic inversion of
/// the demand model, `T_max = supply / ((N-1) S_key (1 + P N / B))`.
pub fn max_tps<F: Real>(
    p: &ChannelParams<F>,
    radius_km: F,
    nodes: u32,
    block_size: u32,
    consensus_rounds: u32,
    s_key_bits: u32,
    opts: SupplyOptions,
) -> F {
    let supply = supply_at_radius(p, radius_km, nodes, opts);
    let n = F::of(nodes as f64);
    let b = F::of(block_size as f64);
    let rounds = F::of(consensus_rounds as f64);
    let s = F::of(s_key_bits as f64);
    let denom = (n - F::one()) * s * (F::one() + rounds * n / b);
    (supply / denom).max(F::zero())
}

/// One cell of the feasibility grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityCell<F> {
    pub radius_km: F,
    pub nodes: u32,
    pub max_tps: F,
    /// log10 of the cell throughput; `None` marks an infeasible cell.
    pub log10_tps: Option<F>,
}

/// Element-wise `max_tps` over the (radius, nodes) grid, row-major in the
/// radius grid. Zero-TPS cells are marked infeasible.
pub fn feasibility_grid<F: Real>(
    p: &ChannelParams<F>,
    r_grid: &[F],
    n_grid: &[u32],
    block_size: u32,
    consensus_rounds: u32,
    s_key_bits: u32,
    opts: SupplyOptions,
) -> Result<Vec<FeasibilityCell<F>>, ModelError> {
    if r_grid.is_empty() || n_grid.is_empty() {
        return Err(ModelError::InvalidParam("grids must be non-empty".into()));
    }
    if r_grid.windows(2).any(|w| w[1] <= w[0]) || n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ModelError::InvalidParam(
            "grids must be strictly ascending".into(),
        ));
    }
    let mut cells = Vec::with_capacity(r_grid.len() * n_grid.len());
    for &r in r_grid {
        for &n in n_grid {
            let t = max_tps(p, r, n, block_size, consensus_rounds, s_key_bits, opts);
            cells.push(FeasibilityCell {
                radius_km: r,
                nodes: n,
                max_tps: t,
                log10_tps: (t > F::zero()).then(|| t.log10()),
            });
        }
    }
    Ok(cells)
}

/// Which error parameter a sensitivity sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    SigmaPhi,
    /// Sweeps the baseline misalignment error e_opt.
    IntrinsicQber,
}

fn with_axis<F: Real>(p: &ChannelParams<F>, axis: SweepAxis, value: F) -> ChannelParams<F> {
    let mut q = *p;
    match axis {
        SweepAxis::SigmaPhi => q.sigma_phi = value,
        SweepAxis::IntrinsicQber => q.e_opt = value,
    }
    q
}

/// Throughput curve along one physical-error axis.
pub fn sensitivity_sweep<F: Real>(
    p: &ChannelParams<F>,
    radius_km: F,
    nodes: u32,
    block_size: u32,
    consensus_rounds: u32,
    s_key_bits: u32,
    axis: SweepAxis,
    values: &[F],
    opts: SupplyOptions,
) -> Result<Vec<(F, F)>, ModelError> {
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ModelError::InvalidParam(
            "sweep values must be strictly ascending".into(),
        ));
    }
    Ok(values
        .iter()
        .map(|&v| {
            let q = with_axis(p, axis, v);
            let t = max_tps(
                &q,
                radius_km,
                nodes,
                block_size,
                consensus_rounds,
                s_key_bits,
                opts,
            );
            (v, t)
        })
        .collect())
}

/// Joint (sigma_phi, e_opt) throughput surface, row-major in sigma_phi.
pub fn joint_sensitivity<F: Real>(
    p: &ChannelParams<F>,
    radius_km: F,
    nodes: u32,
    block_size: u32,
    consensus_rounds: u32,
    s_key_bits: u32,
    sigma_values: &[F],
    qber_values: &[F],
    opts: SupplyOptions,
) -> Result<Vec<(F, F, F)>, ModelError> {
    let mut out = Vec::with_capacity(sigma_values.len() * qber_values.len());
    for &s in sigma_values {
        for &e in qber_values {
            let mut q = *p;
            q.sigma_phi = s;
            q.e_opt = e;
            let t = max_tps(
                &q,
                radius_km,
                nodes,
                block_size,
                consensus_rounds,
                s_key_bits,
                opts,
            );
            out.push((s, e, t));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Mesh,
    Star,
}

/// Quantum-link count for an N-node network: full mesh N(N-1)/2 vs star N.
pub fn link_count(nodes: u64, topology: Topology) -> u64 {
    match topology {
        Topology::Mesh => nodes * nodes.saturating_sub(1) / 2,
        Topology::Star => nodes,
    }
}
