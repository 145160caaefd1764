//! Allocation strategies.
//!
//! Every policy is a pure function of a [`TwinSnapshot`] and its own
//! parameters, so runs can evaluate them concurrently.

mod dynamic;
mod oracle;
mod orthogonal;
mod repair;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

pub use dynamic::dynamic_allocate;
pub use oracle::{oracle_allocate, Objective, OracleConfig, OracleMode};
pub use orthogonal::{orthogonal_allocate, OrthogonalConfig};
pub use repair::priority_repair;

use crate::domain::{AllocationMatrix, ResourceGrid, UserSet};
use crate::error::{Error, Result};
use crate::nn::Allocator;
use crate::twin::TwinSnapshot;

/// Static facts a policy needs besides the snapshot.
#[derive(Debug, Clone, Copy)]
pub struct SchedulingContext<'a> {
    pub grid: &'a ResourceGrid,
    pub users: &'a UserSet,
    pub slot_duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    Orthogonal,
    Oracle,
    Dnn,
    DnnRepair,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Orthogonal,
        PolicyKind::Oracle,
        PolicyKind::Dnn,
        PolicyKind::DnnRepair,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            PolicyKind::Orthogonal => "orthogonal",
            PolicyKind::Oracle => "oracle",
            PolicyKind::Dnn => "dnn",
            PolicyKind::DnnRepair => "dnn+repair",
        }
    }

    pub fn needs_weights(&self) -> bool {
        matches!(self, PolicyKind::Dnn | PolicyKind::DnnRepair)
    }

    /// Safe for use in file names (`dnn+repair` becomes `dnn-repair`).
    pub fn file_stem(&self) -> String {
        self.id().replace('+', "-")
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown policy `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDecision {
    pub allocation: AllocationMatrix,
    /// Oracle objective of `allocation` evaluated on the snapshot.
    pub objective_estimate: f64,
    pub policy: PolicyKind,
    /// Repair ran out of eMBB blocks before the URLLC load was covered.
    pub repair_exhausted: bool,
}

/// A configured policy ready to make decisions.
#[derive(Debug, Clone)]
pub enum Policy {
    Orthogonal(OrthogonalConfig),
    Oracle(OracleConfig),
    Dnn {
        allocator: Arc<Allocator>,
        repair: bool,
        oracle: OracleConfig,
    },
}

impl Policy {
    pub fn kind(&self) -> PolicyKind {
        match self {
            Policy::Orthogonal(_) => PolicyKind::Orthogonal,
            Policy::Oracle(_) => PolicyKind::Oracle,
            Policy::Dnn { repair: false, .. } => PolicyKind::Dnn,
            Policy::Dnn { repair: true, .. } => PolicyKind::DnnRepair,
        }
    }

    pub fn decide(
        &self,
        snapshot: &TwinSnapshot,
        ctx: &SchedulingContext<'_>,
    ) -> Result<PolicyDecision> {
        match self {
            Policy::Orthogonal(cfg) => Ok(orthogonal_allocate(snapshot, cfg, ctx)),
            Policy::Oracle(cfg) => oracle_allocate(snapshot, ctx, cfg),
            Policy::Dnn {
                allocator,
                repair,
                oracle,
            } => {
                let d = dynamic_allocate(snapshot, allocator, ctx, oracle)?;
                Ok(if *repair {
                    priority_repair(d, snapshot, ctx, oracle)
                } else {
                    d
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for k in PolicyKind::ALL {
            assert_eq!(k.id().parse::<PolicyKind>().unwrap(), k);
        }
        assert_eq!(PolicyKind::DnnRepair.file_stem(), "dnn-repair");
        assert!("random".parse::<PolicyKind>().is_err());
    }
}
