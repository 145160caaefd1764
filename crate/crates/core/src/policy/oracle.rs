//! QoS-penalized allocator used both as the training target and as a test
//! oracle.
//!
//! For an allocation `m`, with `r_u` the Shannon rate of user `u` under the
//! snapshot channel, the objective is
//!
//! ```text
//!   sum_{u in eMBB}  r_u
//! + w * sum_{u in URLLC} min(r_u, q_u)
//! - P * max(0, zeta*lambda - R_u)
//! - P * sum_{u in eMBB} max(0, min_rate - r_u)
//! ```
//!
//! where `q_u` is the URLLC backlog, `R_u` the URLLC sum rate, `w` the URLLC
//! priority and `P` the penalty weight. Terms are accumulated in exactly that
//! order, users by id and blocks by index.

use ndarray::Array2;

use super::{PolicyDecision, PolicyKind, SchedulingContext};
use crate::domain::{AllocationMatrix, ServiceClass, UserId};
use crate::envsim::block_rate;
use crate::error::{Error, Result};
use crate::twin::TwinSnapshot;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMode {
    /// Exhaustive when the search space fits under the cap, else greedy.
    Auto,
    Exhaustive,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub mode: OracleMode,
    /// Largest `users^num_rbs` the exhaustive search accepts.
    pub exhaustive_cap: u64,
    /// `None` means 10x the largest per-block rate in the snapshot.
    pub penalty_weight: Option<f64>,
    /// Weight of drained URLLC backlog relative to eMBB throughput.
    pub urllc_priority: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            mode: OracleMode::Auto,
            exhaustive_cap: 4096,
            penalty_weight: None,
            urllc_priority: 2.0,
        }
    }
}

/// The objective bound to one snapshot.
#[derive(Debug, Clone)]
pub struct Objective {
    /// Bits/slot of block `b` if given to user `u`.
    block_rates: Array2<f64>,
    class: Vec<ServiceClass>,
    queue: Vec<f64>,
    urllc_load: f64,
    min_bits: f64,
    penalty: f64,
    priority: f64,
}

impl Objective {
    pub fn new(
        snapshot: &TwinSnapshot,
        ctx: &SchedulingContext<'_>,
        cfg: &OracleConfig,
    ) -> Result<Self> {
        let ch = snapshot.channel();
        if ch.num_users() != ctx.users.len() || ch.num_rbs() != ctx.grid.num_rbs() {
            return Err(Error::Dimension {
                what: "oracle channel",
                expected: ctx.users.len() * ctx.grid.num_rbs(),
                actual: ch.snr().len(),
            });
        }
        let block_rates = ch
            .snr()
            .mapv(|s| block_rate(s, ctx.grid, ctx.slot_duration));
        let penalty = cfg
            .penalty_weight
            .unwrap_or_else(|| 10.0 * block_rates.iter().cloned().fold(0.0, f64::max));
        let qos = snapshot.qos();
        Ok(Self {
            block_rates,
            class: ctx.users.iter().map(|u| u.class).collect(),
            queue: snapshot.traffic().urllc_queue.clone(),
            urllc_load: qos.urllc_load(snapshot.traffic().lambda),
            min_bits: qos.embb_min_rate * ctx.slot_duration,
            penalty,
            priority: cfg.urllc_priority,
        })
    }

    pub fn num_users(&self) -> usize {
        self.class.len()
    }

    pub fn num_rbs(&self) -> usize {
        self.block_rates.ncols()
    }

    pub fn block_rate(&self, user: usize, rb: usize) -> f64 {
        self.block_rates[[user, rb]]
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    pub fn urllc_load(&self) -> f64 {
        self.urllc_load
    }

    pub fn rates(&self, m: &AllocationMatrix) -> Vec<f64> {
        let mut rates = vec![0.0; self.num_users()];
        for (b, a) in m.as_slice().iter().enumerate() {
            if let Some(u) = a {
                rates[u.index()] += self.block_rates[[u.index(), b]];
            }
        }
        rates
    }

    /// Predicted URLLC sum rate R_u.
    pub fn urllc_rate(&self, rates: &[f64]) -> f64 {
        rates
            .iter()
            .zip(&self.class)
            .filter(|(_, c)| **c == ServiceClass::Urllc)
            .map(|(r, _)| r)
            .sum()
    }

    fn utility(&self, u: usize, rate: f64) -> f64 {
        match self.class[u] {
            ServiceClass::Embb => rate,
            ServiceClass::Urllc => self.priority * rate.min(self.queue[u]),
        }
    }

    fn embb_deficit(&self, u: usize, rate: f64) -> f64 {
        match self.class[u] {
            ServiceClass::Embb => (self.min_bits - rate).max(0.0),
            ServiceClass::Urllc => 0.0,
        }
    }

    pub fn value_of_rates(&self, rates: &[f64]) -> f64 {
        let mut total = 0.0;
        for (u, r) in rates.iter().enumerate() {
            total += self.utility(u, *r);
        }
        total -= self.penalty * (self.urllc_load - self.urllc_rate(rates)).max(0.0);
        let mut embb = 0.0;
        for (u, r) in rates.iter().enumerate() {
            embb += self.embb_deficit(u, *r);
        }
        total - self.penalty * embb
    }

    pub fn value(&self, m: &AllocationMatrix) -> f64 {
        self.value_of_rates(&self.rates(m))
    }

    /// Change in objective from adding `rb` to `user`, given current rates.
    fn marginal(&self, rates: &[f64], urllc_rate: f64, user: usize, rb: usize) -> f64 {
        let old = rates[user];
        let new = old + self.block_rates[[user, rb]];
        let mut d = self.utility(user, new) - self.utility(user, old);
        d += self.penalty * (self.embb_deficit(user, old) - self.embb_deficit(user, new));
        if self.class[user] == ServiceClass::Urllc {
            let before = (self.urllc_load - urllc_rate).max(0.0);
            let after = (self.urllc_load - urllc_rate - self.block_rates[[user, rb]]).max(0.0);
            d += self.penalty * (before - after);
        }
        d
    }

    /// Assign blocks one at a time by best marginal objective, then polish
    /// with [`Objective::improve`]. Ties go to the lowest block index, then
    /// the lowest user id.
    pub fn greedy(&self) -> AllocationMatrix {
        let mut m = self.greedy_fill();
        self.improve(&mut m);
        m
    }

    fn greedy_fill(&self) -> AllocationMatrix {
        let (nu, nb) = (self.num_users(), self.num_rbs());
        let mut m = AllocationMatrix::unassigned(nb);
        let mut rates = vec![0.0; nu];
        let mut urllc_rate = 0.0;
        for _ in 0..nb {
            let mut best: Option<(f64, usize, usize)> = None;
            for b in (0..nb).filter(|b| m.get(*b).is_none()) {
                for u in 0..nu {
                    let d = self.marginal(&rates, urllc_rate, u, b);
                    if best.is_none_or(|(bd, _, _)| d > bd) {
                        best = Some((d, b, u));
                    }
                }
            }
            let (_, b, u) = best.expect("a free block remains");
            m.set(b, Some(UserId(u as u32)));
            rates[u] += self.block_rates[[u, b]];
            if self.class[u] == ServiceClass::Urllc {
                urllc_rate += self.block_rates[[u, b]];
            }
        }
        m
    }

    /// Change in objective when the users in `changes` move to new rates.
    fn delta(&self, rates: &[f64], urllc_rate: f64, changes: &[(usize, f64)]) -> f64 {
        let mut d = 0.0;
        let mut urllc = urllc_rate;
        for &(u, r) in changes {
            d += self.utility(u, r) - self.utility(u, rates[u]);
            d -= self.penalty * (self.embb_deficit(u, r) - self.embb_deficit(u, rates[u]));
            if self.class[u] == ServiceClass::Urllc {
                urllc += r - rates[u];
            }
        }
        let before = (self.urllc_load - urllc_rate).max(0.0);
        let after = (self.urllc_load - urllc).max(0.0);
        d - self.penalty * (after - before)
    }

    /// Steepest-ascent local search over single-block reassignments and
    /// pairwise block swaps, until no move gains more than a relative 1e-12.
    /// Moves are scanned block-major, reassignments before swaps; the first
    /// best move wins.
    pub fn improve(&self, m: &mut AllocationMatrix) {
        let (nu, nb) = (self.num_users(), self.num_rbs());
        let rate = |u: Option<usize>, b: usize| u.map_or(0.0, |u| self.block_rates[[u, b]]);
        for _ in 0..4 * nb * nu {
            let rates = self.rates(m);
            let urllc_rate = self.urllc_rate(&rates);
            let value = self.value_of_rates(&rates);
            // (gain, first block, its new holder, second block and its new holder)
            let mut best: Option<(f64, usize, Option<usize>, Option<(usize, Option<usize>)>)> =
                None;
            let mut consider = |g: f64, b, u, swap| {
                if best.is_none_or(|(bg, ..)| g > bg) {
                    best = Some((g, b, u, swap));
                }
            };
            for b in 0..nb {
                let holder = m.get(b).map(|u| u.index());
                for u in (0..nu).filter(|u| Some(*u) != holder) {
                    let gained = (u, rates[u] + self.block_rates[[u, b]]);
                    let g = match holder {
                        Some(h) => self.delta(
                            &rates,
                            urllc_rate,
                            &[(h, rates[h] - rate(holder, b)), gained],
                        ),
                        None => self.delta(&rates, urllc_rate, &[gained]),
                    };
                    consider(g, b, Some(u), None);
                }
                for c in b + 1..nb {
                    let other = m.get(c).map(|u| u.index());
                    if other == holder {
                        continue;
                    }
                    let mut changes = [(0, 0.0); 2];
                    let mut n = 0;
                    if let Some(h) = holder {
                        changes[n] = (h, rates[h] + rate(holder, c) - rate(holder, b));
                        n += 1;
                    }
                    if let Some(o) = other {
                        changes[n] = (o, rates[o] + rate(other, b) - rate(other, c));
                        n += 1;
                    }
                    consider(
                        self.delta(&rates, urllc_rate, &changes[..n]),
                        b,
                        other,
                        Some((c, holder)),
                    );
                }
            }
            match best {
                Some((g, b, u, swap)) if g > 1e-12 * value.abs().max(1.0) => {
                    m.set(b, u.map(|u| UserId(u as u32)));
                    if let Some((c, h)) = swap {
                        m.set(c, h.map(|u| UserId(u as u32)));
                    }
                }
                _ => break,
            }
        }
    }

    /// Best of all `users^num_rbs` full assignments, enumerated in
    /// lexicographic order (block 0 most significant); the first maximum wins.
    pub fn exhaustive(&self, cap: u64) -> Result<AllocationMatrix> {
        let (nu, nb) = (self.num_users(), self.num_rbs());
        let candidates = (nu as f64).powi(nb as i32);
        if candidates > cap as f64 {
            return Err(Error::SearchCapExceeded { candidates, cap });
        }
        let mut digits = vec![0usize; nb];
        let mut best: Option<(f64, Vec<usize>)> = None;
        loop {
            let m = to_matrix(&digits);
            let v = self.value(&m);
            if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                best = Some((v, digits.clone()));
            }
            // increment, last block fastest
            let mut i = nb;
            loop {
                if i == 0 {
                    let (_, d) = best.expect("at least one candidate");
                    return Ok(to_matrix(&d));
                }
                i -= 1;
                digits[i] += 1;
                if digits[i] < nu {
                    break;
                }
                digits[i] = 0;
            }
        }
    }
}

fn to_matrix(digits: &[usize]) -> AllocationMatrix {
    AllocationMatrix::new(digits.iter().map(|u| Some(UserId(*u as u32))).collect())
}

pub fn oracle_allocate(
    snapshot: &TwinSnapshot,
    ctx: &SchedulingContext<'_>,
    cfg: &OracleConfig,
) -> Result<PolicyDecision> {
    let obj = Objective::new(snapshot, ctx, cfg)?;
    let fits = (obj.num_users() as f64).powi(obj.num_rbs() as i32) <= cfg.exhaustive_cap as f64;
    let allocation = match cfg.mode {
        OracleMode::Exhaustive => obj.exhaustive(cfg.exhaustive_cap)?,
        OracleMode::Auto if fits => obj.exhaustive(cfg.exhaustive_cap)?,
        OracleMode::Auto | OracleMode::Greedy => obj.greedy(),
    };
    Ok(PolicyDecision {
        objective_estimate: obj.value(&allocation),
        allocation,
        policy: PolicyKind::Oracle,
        repair_exhausted: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ChannelState, QosRequirement, ResourceGrid, TrafficState, UserSet};
    use crate::envsim::{Fading, LinkBudget};
    use ndarray::{array, Array2};

    fn users(embb: usize, urllc: usize) -> UserSet {
        UserSet::from_counts(embb, urllc, |_, _| LinkBudget::new(0.0, Fading::Rayleigh)).unwrap()
    }

    fn snapshot(snr: Array2<f64>, lambda: f64) -> TwinSnapshot {
        let n = snr.nrows();
        TwinSnapshot::new(
            0,
            0,
            ChannelState::new(snr).unwrap(),
            TrafficState::new(lambda, n),
            QosRequirement::default(),
        )
        .unwrap()
    }

    #[test]
    fn single_user_takes_everything() {
        let us = users(1, 0);
        let grid = ResourceGrid::new(5, 1.0).unwrap();
        let ctx = SchedulingContext {
            grid: &grid,
            users: &us,
            slot_duration: 1.0,
        };
        let snap = snapshot(Array2::from_elem((1, 5), 2.0), 0.0);
        for mode in [OracleMode::Exhaustive, OracleMode::Greedy] {
            let cfg = OracleConfig {
                mode,
                ..Default::default()
            };
            let d = oracle_allocate(&snap, &ctx, &cfg).unwrap();
            assert!(d
                .allocation
                .as_slice()
                .iter()
                .all(|a| *a == Some(UserId(0))));
        }
    }

    #[test]
    fn two_by_two_follows_channel() {
        // Candidate objectives (eMBB only, no binding penalty):
        //   [u0,u0] = log2 10 + log2 2 = 4.32
        //   [u0,u1] = log2 10 + log2 10 = 6.64  <- best
        //   [u1,u0] = log2 2 + log2 2 = 2.0
        //   [u1,u1] = log2 2 + log2 10 = 4.32
        let us = users(2, 0);
        let grid = ResourceGrid::new(2, 1.0).unwrap();
        let ctx = SchedulingContext {
            grid: &grid,
            users: &us,
            slot_duration: 1.0,
        };
        let snap = snapshot(array![[9.0, 1.0], [1.0, 9.0]], 0.0);
        let cfg = OracleConfig {
            mode: OracleMode::Exhaustive,
            ..Default::default()
        };
        let d = oracle_allocate(&snap, &ctx, &cfg).unwrap();
        assert_eq!(d.allocation.as_slice(), &[Some(UserId(0)), Some(UserId(1))]);
        assert!((d.objective_estimate - 2.0 * 10f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn cap_is_enforced() {
        let us = users(4, 0);
        let grid = ResourceGrid::new(7, 1.0).unwrap();
        let ctx = SchedulingContext {
            grid: &grid,
            users: &us,
            slot_duration: 1.0,
        };
        let snap = snapshot(Array2::from_elem((4, 7), 1.0), 0.0);
        let cfg = OracleConfig {
            mode: OracleMode::Exhaustive,
            ..Default::default()
        };
        assert!(matches!(
            oracle_allocate(&snap, &ctx, &cfg),
            Err(Error::SearchCapExceeded { .. })
        ));
        // auto falls back to greedy
        let cfg = OracleConfig::default();
        oracle_allocate(&snap, &ctx, &cfg).unwrap();
    }

    #[test]
    fn urllc_load_is_served_first() {
        // u0 eMBB has the better channel everywhere, but u1 must carry 256*lambda bits.
        let us = users(1, 1);
        let grid = ResourceGrid::new(4, 100.0).unwrap();
        let ctx = SchedulingContext {
            grid: &grid,
            users: &us,
            slot_duration: 1.0,
        };
        // block rate for u1 at snr 3 is 200 bits; need 256 * 1 bits -> two blocks
        let snap = snapshot(array![[15.0, 15.0, 15.0, 15.0], [3.0, 3.0, 3.0, 3.0]], 1.0);
        for mode in [OracleMode::Exhaustive, OracleMode::Greedy] {
            let cfg = OracleConfig {
                mode,
                ..Default::default()
            };
            let d = oracle_allocate(&snap, &ctx, &cfg).unwrap();
            let urllc = d.allocation.blocks_of(UserId(1)).count();
            assert_eq!(urllc, 2, "{mode:?}: {}", d.allocation);
        }
    }

    #[test]
    fn ties_prefer_lowest_user() {
        let us = users(3, 0);
        let grid = ResourceGrid::new(2, 1.0).unwrap();
        let ctx = SchedulingContext {
            grid: &grid,
            users: &us,
            slot_duration: 1.0,
        };
        let snap = snapshot(Array2::from_elem((3, 2), 1.0), 0.0);
        for mode in [OracleMode::Exhaustive, OracleMode::Greedy] {
            let cfg = OracleConfig {
                mode,
                ..Default::default()
            };
            let d = oracle_allocate(&snap, &ctx, &cfg).unwrap();
            assert_eq!(d.allocation.as_slice(), &[Some(UserId(0)), Some(UserId(0))]);
        }
    }
}
