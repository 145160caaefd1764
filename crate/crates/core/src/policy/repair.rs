use super::{Objective, OracleConfig, PolicyDecision, SchedulingContext};
use crate::domain::{ServiceClass, UserId};
use crate::twin::TwinSnapshot;

/// Move eMBB blocks to URLLC users until the predicted URLLC rate covers
/// ζ·λ. Each step takes the eMBB block where some URLLC user would gain the
/// most and hands it to that user (ties: lowest block, then lowest user).
/// URLLC-held and idle blocks are never touched.
///
/// Predictions use the snapshot channel, stale or not.
pub fn priority_repair(
    mut decision: PolicyDecision,
    snapshot: &TwinSnapshot,
    ctx: &SchedulingContext<'_>,
    oracle: &OracleConfig,
) -> PolicyDecision {
    let Ok(obj) = Objective::new(snapshot, ctx, oracle) else {
        return decision;
    };
    let urllc: Vec<UserId> = ctx.users.of_class(ServiceClass::Urllc).collect();
    let need = obj.urllc_load();
    let mut predicted = obj.urllc_rate(&obj.rates(&decision.allocation));
    let mut changed = false;

    while predicted < need {
        let mut best: Option<(f64, usize, UserId)> = None;
        for (b, a) in decision.allocation.as_slice().iter().enumerate() {
            let Some(holder) = a else { continue };
            if ctx.users.class_of(*holder) != ServiceClass::Embb {
                continue;
            }
            for &u in &urllc {
                let gain = obj.block_rate(u.index(), b);
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, b, u));
                }
            }
        }
        match best {
            Some((gain, b, u)) => {
                decision.allocation.set(b, Some(u));
                predicted += gain;
                changed = true;
            }
            None => {
                decision.repair_exhausted = true;
                break;
            }
        }
    }

    if changed {
        decision.objective_estimate = obj.value(&decision.allocation);
    }
    decision.policy = match decision.policy {
        super::PolicyKind::Dnn => super::PolicyKind::DnnRepair,
        other => other,
    };
    decision
}
