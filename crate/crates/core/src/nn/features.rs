use crate::domain::{AllocationMatrix, QosRequirement, ServiceClass, UserId};
use crate::error::{Error, Result};
use crate::policy::SchedulingContext;
use crate::twin::TwinSnapshot;

use super::OutputTensor;

/// Reference scales for feature normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    /// Linear SNR mapped to 1.0.
    pub ref_snr: f64,
    /// Arrival rate (packets/slot) mapped to 1.0.
    pub ref_lambda: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            ref_snr: crate::envsim::db_to_linear(2.0),
            ref_lambda: 150.0,
        }
    }
}

/// `users * rbs` SNRs, two traffic entries per user and three QoS entries.
pub fn input_dim(num_users: usize, num_rbs: usize) -> usize {
    num_users * num_rbs + 2 * num_users + 3
}

/// Layout: SNR row-major by user, then `(λ, backlog)` per user (zero for
/// eMBB), then `(min rate, ζλ, ε_max)`. SNRs scale by `ref_snr`, λ by
/// `ref_lambda`, bit quantities by `ζ * ref_lambda`.
pub fn encode_features(
    snapshot: &TwinSnapshot,
    ctx: &SchedulingContext<'_>,
    qos: &QosRequirement,
    cfg: &FeatureConfig,
) -> Result<Vec<f64>> {
    let ch = snapshot.channel();
    let (nu, nb) = (ctx.users.len(), ctx.grid.num_rbs());
    if ch.num_users() != nu || ch.num_rbs() != nb {
        return Err(Error::Dimension {
            what: "feature channel",
            expected: nu * nb,
            actual: ch.snr().len(),
        });
    }
    let bits_scale = qos.urllc_packet_bits * cfg.ref_lambda;
    let traffic = snapshot.traffic();
    let mut x = Vec::with_capacity(input_dim(nu, nb));
    x.extend(ch.snr().iter().map(|s| s / cfg.ref_snr));
    for u in ctx.users.iter() {
        match u.class {
            ServiceClass::Embb => x.extend([0.0, 0.0]),
            ServiceClass::Urllc => x.extend([
                traffic.lambda / cfg.ref_lambda,
                traffic.queue(u.id) / bits_scale,
            ]),
        }
    }
    x.extend([
        qos.embb_min_rate * ctx.slot_duration / bits_scale,
        qos.urllc_load(traffic.lambda) / bits_scale,
        qos.urllc_outage_threshold,
    ]);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature vector".to_string()));
    }
    Ok(x)
}

/// Per-block argmax; ties go to the lowest user id.
pub fn decode_output(y: &OutputTensor) -> AllocationMatrix {
    let assignment = y
        .probs()
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (u, p) in row.iter().enumerate() {
                if *p > row[best] {
                    best = u;
                }
            }
            Some(UserId(best as u32))
        })
        .collect();
    AllocationMatrix::new(assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ChannelState, ResourceGrid, TrafficState, UserSet};
    use crate::envsim::{Fading, LinkBudget};
    use ndarray::{array, Array2};

    fn ctx_parts() -> (UserSet, ResourceGrid) {
        (
            UserSet::from_counts(1, 2, |_, _| LinkBudget::new(0.0, Fading::Rayleigh)).unwrap(),
            ResourceGrid::new(2, 1.0).unwrap(),
        )
    }

    fn snap(snr: Array2<f64>, lambda: f64, q: f64) -> TwinSnapshot {
        TwinSnapshot::new(
            0,
            0,
            ChannelState::new(snr).unwrap(),
            TrafficState {
                lambda,
                urllc_queue: vec![0.0, q, q],
            },
            QosRequirement::default(),
        )
        .unwrap()
    }

    #[test]
    fn zero_snapshot_keeps_only_constants() {
        let (us, grid) = ctx_parts();
        let ctx = SchedulingContext {
            grid: &grid,
            users: &us,
            slot_duration: 1.0,
        };
        let qos = QosRequirement {
            embb_min_rate: 256.0,
            ..Default::default()
        };
        let cfg = FeatureConfig {
            ref_snr: 1.0,
            ref_lambda: 1.0,
        };
        let x = encode_features(&snap(Array2::zeros((3, 2)), 0.0, 0.0), &ctx, &qos, &cfg).unwrap();
        assert_eq!(x.len(), input_dim(3, 2));
        let n = x.len();
        assert!(x[..n - 3].iter().all(|v| *v == 0.0));
        assert_eq!(&x[n - 3..], &[1.0, 0.0, 0.07]);
    }

    #[test]
    fn snr_slice_is_linear() {
        let (us, grid) = ctx_parts();
        let ctx = SchedulingContext {
            grid: &grid,
            users: &us,
            slot_duration: 1.0,
        };
        let cfg = FeatureConfig::default();
        let qos = QosRequirement::default();
        let snr = array![[1.0, 2.0], [3.0, 4.0], [0.5, 9.0]];
        let a = encode_features(&snap(snr.clone(), 10.0, 512.0), &ctx, &qos, &cfg).unwrap();
        let b = encode_features(&snap(snr.clone() * 2.0, 10.0, 512.0), &ctx, &qos, &cfg).unwrap();
        for i in 0..6 {
            assert!((b[i] - 2.0 * a[i]).abs() < 1e-15);
        }
        assert_eq!(&a[6..], &b[6..]);
        assert_eq!(
            a,
            encode_features(&snap(snr, 10.0, 512.0), &ctx, &qos, &cfg).unwrap()
        );
    }

    #[test]
    fn argmax_decoding() {
        let y = OutputTensor::new(array![[0.1, 0.9], [0.5, 0.5], [0.7, 0.3]]);
        let m = decode_output(&y);
        assert_eq!(
            m.as_slice(),
            &[Some(UserId(1)), Some(UserId(0)), Some(UserId(0))]
        );
    }

    #[test]
    fn decoding_is_column_equivariant() {
        let y = array![[0.2, 0.5, 0.3], [0.6, 0.1, 0.3]];
        // swap user columns 0 and 1
        let perm = [1usize, 0, 2];
        let swapped = Array2::from_shape_fn((2, 3), |(r, c)| y[[r, perm[c]]]);
        let a = decode_output(&OutputTensor::new(y));
        let b = decode_output(&OutputTensor::new(swapped));
        for (x, z) in a.as_slice().iter().zip(b.as_slice()) {
            assert_eq!(perm[z.unwrap().index()], x.unwrap().index());
        }
    }
}
