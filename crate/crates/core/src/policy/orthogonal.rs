use std::collections::BTreeSet;

use super::{Objective, OracleConfig, PolicyDecision, PolicyKind, SchedulingContext};
use crate::domain::{AllocationMatrix, ServiceClass, UserId};
use crate::twin::TwinSnapshot;

/// Fixed split: the first `floor(urllc_fraction * num_rbs)` blocks belong to
/// URLLC, the rest to eMBB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthogonalConfig {
    pub urllc_fraction: f64,
}

impl Default for OrthogonalConfig {
    fn default() -> Self {
        Self {
            urllc_fraction: 0.5,
        }
    }
}

impl OrthogonalConfig {
    pub fn urllc_blocks(&self, num_rbs: usize) -> usize {
        ((self.urllc_fraction * num_rbs as f64).floor() as usize).min(num_rbs)
    }
}

/// Within each partition, users of the owning class take turns picking their
/// best remaining block (lowest index on ties). The turn order rotates by one
/// user every slot. A partition with no users of its class stays idle.
pub fn orthogonal_allocate(
    snapshot: &TwinSnapshot,
    cfg: &OrthogonalConfig,
    ctx: &SchedulingContext<'_>,
) -> PolicyDecision {
    let nb = ctx.grid.num_rbs();
    let split = cfg.urllc_blocks(nb);
    let mut m = AllocationMatrix::unassigned(nb);
    let ch = snapshot.channel();
    let slot = snapshot.delivered_at();

    for (class, blocks) in [
        (ServiceClass::Urllc, 0..split),
        (ServiceClass::Embb, split..nb),
    ] {
        let members: Vec<UserId> = ctx.users.of_class(class).collect();
        if members.is_empty() {
            continue;
        }
        let mut free: BTreeSet<usize> = blocks.collect();
        let start = (slot % members.len() as u64) as usize;
        let mut turn = 0;
        while !free.is_empty() {
            let u = members[(start + turn) % members.len()];
            let mut best = None::<(f64, usize)>;
            for &b in &free {
                let s = ch.get(u, b);
                if best.is_none_or(|(bs, _)| s > bs) {
                    best = Some((s, b));
                }
            }
            let (_, b) = best.expect("free is nonempty");
            free.remove(&b);
            m.set(b, Some(u));
            turn += 1;
        }
    }

    let objective_estimate = Objective::new(snapshot, ctx, &OracleConfig::default())
        .map(|o| o.value(&m))
        .unwrap_or(f64::NAN);
    PolicyDecision {
        allocation: m,
        objective_estimate,
        policy: PolicyKind::Orthogonal,
        repair_exhausted: false,
    }
}
