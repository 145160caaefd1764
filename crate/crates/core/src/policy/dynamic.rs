use super::{Objective, OracleConfig, PolicyDecision, PolicyKind, SchedulingContext};
use crate::domain::validate_allocation;
use crate::error::Result;
use crate::nn::{decode_output, encode_features, Allocator};
use crate::twin::TwinSnapshot;

/// Encode the snapshot, run the network and take the per-block argmax.
pub fn dynamic_allocate(
    snapshot: &TwinSnapshot,
    allocator: &Allocator,
    ctx: &SchedulingContext<'_>,
    oracle: &OracleConfig,
) -> Result<PolicyDecision> {
    let x = encode_features(snapshot, ctx, snapshot.qos(), &allocator.features)?;
    let y = allocator.net.forward(&x)?;
    let allocation = decode_output(&y);
    validate_allocation(&allocation, ctx.grid, ctx.users)?;
    let objective_estimate = Objective::new(snapshot, ctx, oracle)?.value(&allocation);
    Ok(PolicyDecision {
        allocation,
        objective_estimate,
        policy: PolicyKind::Dnn,
        repair_exhausted: false,
    })
}
