//! Physical layer: fading channels, URLLC arrivals and realized rates.
//!
//! The channel for user `u` on block `b` is `linear(mean_snr_db[u]) * g`,
//! where `g` is an i.i.d. unit-mean power gain drawn every slot for every
//! block. Rates are Shannon capacity per block.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};

use crate::domain::{
    AllocationMatrix, ChannelState, QosRequirement, ResourceGrid, ServiceClass, SlotClock,
    TrafficState, UserId, UserSet,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fading {
    Rayleigh,
    /// `k_factor = f64::INFINITY` is a pure line-of-sight channel.
    Rician {
        k_factor: f64,
    },
}

impl Fading {
    /// Unit-mean power gain `|h|^2`.
    pub fn sample_gain<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Fading::Rayleigh => Exp1.sample(rng),
            Fading::Rician { k_factor } if k_factor.is_infinite() => 1.0,
            Fading::Rician { k_factor } => {
                let los = (k_factor / (k_factor + 1.0)).sqrt();
                let sigma = (0.5 / (k_factor + 1.0)).sqrt();
                let x: f64 = StandardNormal.sample(rng);
                let y: f64 = StandardNormal.sample(rng);
                let re = los + sigma * x;
                let im = sigma * y;
                re * re + im * im
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub mean_snr_db: f64,
    pub fading: Fading,
}

impl LinkBudget {
    pub fn new(mean_snr_db: f64, fading: Fading) -> Self {
        Self {
            mean_snr_db,
            fading,
        }
    }

    pub fn mean_snr_linear(&self) -> f64 {
        db_to_linear(self.mean_snr_db)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// How the slice-wide URLLC arrival rate λ(t) evolves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSchedule {
    Constant(f64),
    /// λ(t) drawn uniformly from `[low, high]` each slot.
    Uniform {
        low: f64,
        high: f64,
    },
}

impl LambdaSchedule {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            LambdaSchedule::Constant(l) => l,
            LambdaSchedule::Uniform { low, high } if low == high => low,
            LambdaSchedule::Uniform { low, high } => rng.random_range(low..=high),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LambdaSchedule::Constant(l) => l >= 0.0 && l.is_finite(),
            LambdaSchedule::Uniform { low, high } => low >= 0.0 && high >= low && high.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("invalid lambda schedule {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalState {
    pub clock: SlotClock,
    pub channel: ChannelState,
    pub traffic: TrafficState,
    pub qos: QosRequirement,
}

/// What happened in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub t: u64,
    pub lambda: f64,
    /// Shannon capacity granted to each user, bits/slot.
    pub rates: Vec<f64>,
    /// Bits actually delivered: full capacity for eMBB, drained backlog for URLLC.
    pub delivered: Vec<f64>,
    /// New URLLC packets per user.
    pub arrivals: Vec<u64>,
    /// R_u(t): sum capacity of URLLC users.
    pub urllc_rate: f64,
    pub embb_rate: f64,
}

impl SlotOutcome {
    pub fn total_delivered(&self) -> f64 {
        self.delivered.iter().sum()
    }
}

pub fn step_channel<R: Rng + ?Sized>(
    rng: &mut R,
    users: &UserSet,
    grid: &ResourceGrid,
) -> ChannelState {
    let mut snr = Array2::zeros((users.len(), grid.num_rbs()));
    for (u, mut row) in users.iter().zip(snr.rows_mut()) {
        let mean = u.link.mean_snr_linear();
        for v in row.iter_mut() {
            *v = mean * u.link.fading.sample_gain(rng);
        }
    }
    ChannelState::new(snr).expect("fading draws are finite and nonnegative")
}

/// Poisson packet count with mean `lambda`.
pub fn urllc_arrivals<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let d = Poisson::new(lambda).expect("positive finite lambda");
    d.sample(rng) as u64
}

/// Bits per slot a single block carries at the given linear SNR.
pub fn block_rate(snr: f64, grid: &ResourceGrid, slot_duration: f64) -> f64 {
    grid.rb_bandwidth() * (1.0 + snr).log2() * slot_duration
}

/// Shannon rate of `user` under `m`, bits/slot.
pub fn user_rate(
    m: &AllocationMatrix,
    ch: &ChannelState,
    user: UserId,
    grid: &ResourceGrid,
    slot_duration: f64,
) -> f64 {
    m.blocks_of(user)
        .map(|b| block_rate(ch.get(user, b), grid, slot_duration))
        .sum()
}

/// Rates of every user, in id order.
pub fn all_rates(
    m: &AllocationMatrix,
    ch: &ChannelState,
    users: &UserSet,
    grid: &ResourceGrid,
    slot_duration: f64,
) -> Vec<f64> {
    users
        .iter()
        .map(|u| user_rate(m, ch, u.id, grid, slot_duration))
        .collect()
}

/// Static description of the physical network.
#[derive(Debug, Clone)]
pub struct Environment {
    pub users: UserSet,
    pub grid: ResourceGrid,
    pub qos: QosRequirement,
    pub slot_duration: f64,
    pub lambda: LambdaSchedule,
}

impl Environment {
    /// State at slot 0 with empty queues.
    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PhysicalState> {
        let clock = SlotClock::new(self.slot_duration)?;
        let lambda = self.lambda.sample(rng);
        let channel = step_channel(rng, &self.users, &self.grid);
        Ok(PhysicalState {
            clock,
            channel,
            traffic: TrafficState::new(lambda, self.users.len()),
            qos: self.qos,
        })
    }

    /// Apply `decision` to `state`: serve, drain queues, add arrivals and
    /// draw the next slot's λ and channel.
    pub fn advance<R: Rng + ?Sized>(
        &self,
        state: &PhysicalState,
        decision: &AllocationMatrix,
        rng: &mut R,
    ) -> (PhysicalState, SlotOutcome) {
        debug_assert!(
            crate::domain::validate_allocation(decision, &self.grid, &self.users).is_ok()
        );
        let rates = all_rates(
            decision,
            &state.channel,
            &self.users,
            &self.grid,
            state.clock.slot_duration(),
        );
        let n_urllc = self.users.count(ServiceClass::Urllc);
        let per_user_lambda = if n_urllc > 0 {
            state.traffic.lambda / n_urllc as f64
        } else {
            0.0
        };

        let mut queue = state.traffic.urllc_queue.clone();
        let mut delivered = vec![0.0; self.users.len()];
        let mut arrivals = vec![0u64; self.users.len()];
        let (mut urllc_rate, mut embb_rate) = (0.0, 0.0);
        for u in self.users.iter() {
            let i = u.id.index();
            match u.class {
                ServiceClass::Embb => {
                    delivered[i] = rates[i];
                    embb_rate += rates[i];
                }
                ServiceClass::Urllc => {
                    urllc_rate += rates[i];
                    let served = rates[i].min(queue[i]);
                    delivered[i] = served;
                    queue[i] -= served;
                    arrivals[i] = urllc_arrivals(rng, per_user_lambda);
                    queue[i] += arrivals[i] as f64 * state.qos.urllc_packet_bits;
                }
            }
        }

        let outcome = SlotOutcome {
            t: state.clock.t,
            lambda: state.traffic.lambda,
            rates,
            delivered,
            arrivals,
            urllc_rate,
            embb_rate,
        };

        let mut clock = state.clock;
        clock.tick();
        let lambda = self.lambda.sample(rng);
        let channel = step_channel(rng, &self.users, &self.grid);
        let next = PhysicalState {
            clock,
            channel,
            traffic: TrafficState {
                lambda,
                urllc_queue: queue,
            },
            qos: state.qos,
        };
        (next, outcome)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env(embb: usize, urllc: usize, rbs: usize, fading: Fading, lambda: f64) -> Environment {
        Environment {
            users: UserSet::from_counts(embb, urllc, |_, k| {
                LinkBudget::new(5.0 + k as f64, fading)
            })
            .unwrap(),
            grid: ResourceGrid::new(rbs, 10.0).unwrap(),
            qos: QosRequirement::default(),
            slot_duration: 1.0,
            lambda: LambdaSchedule::Constant(lambda),
        }
    }

    #[test]
    fn los_limit_has_no_fading() {
        let e = env(
            2,
            1,
            4,
            Fading::Rician {
                k_factor: f64::INFINITY,
            },
            0.0,
        );
        let ch = step_channel(&mut ChaCha8Rng::seed_from_u64(1), &e.users, &e.grid);
        for u in e.users.iter() {
            for b in 0..4 {
                assert_eq!(ch.get(u.id, b), u.link.mean_snr_linear());
            }
        }
    }

    #[test]
    fn rayleigh_mean_matches_link_budget() {
        // Monte-Carlo: E[|h|^2] = 1 so the sample mean approaches 10 (10 dB).
        let users =
            UserSet::from_counts(1, 0, |_, _| LinkBudget::new(10.0, Fading::Rayleigh)).unwrap();
        let grid = ResourceGrid::new(1000, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut sum = 0.0;
        for _ in 0..1000 {
            sum += step_channel(&mut rng, &users, &grid).snr().sum();
        }
        let mean = sum / 1e6;
        assert!((mean - 10.0).abs() / 10.0 < 0.02, "mean {mean}");
    }

    #[test]
    fn rician_gain_has_unit_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = Fading::Rician { k_factor: 3.0 };
        let n = 200_000;
        let mean: f64 = (0..n).map(|_| f.sample_gain(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn channel_is_seed_deterministic() {
        let e = env(3, 2, 6, Fading::Rayleigh, 0.0);
        let a = step_channel(&mut ChaCha8Rng::seed_from_u64(42), &e.users, &e.grid);
        let b = step_channel(&mut ChaCha8Rng::seed_from_u64(42), &e.users, &e.grid);
        assert_eq!(a, b);
    }

    #[test]
    fn zero_rate_source_is_silent() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..1000).all(|_| urllc_arrivals(&mut rng, 0.0) == 0));
    }

    #[test]
    fn poisson_mean_and_dispersion() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..10_000)
            .map(|_| urllc_arrivals(&mut rng, 100.0) as f64)
            .collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((98.0..=102.0).contains(&mean), "mean {mean}");

        let ys: Vec<f64> = (0..10_000)
            .map(|_| urllc_arrivals(&mut rng, 200.0) as f64)
            .collect();
        let m = ys.iter().sum::<f64>() / ys.len() as f64;
        let var = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (ys.len() - 1) as f64;
        let d = var / m;
        assert!((0.9..=1.1).contains(&d), "dispersion {d}");
    }

    #[test]
    fn rate_closed_forms() {
        let grid = ResourceGrid::new(1, 1.0).unwrap();
        let ch = ChannelState::new(ndarray::array![[1.0], [1.0]]).unwrap();
        let m = AllocationMatrix::new(vec![Some(UserId(0))]);
        assert_eq!(user_rate(&m, &ch, UserId(0), &grid, 1.0), 1.0);
        assert_eq!(user_rate(&m, &ch, UserId(1), &grid, 1.0), 0.0);

        let grid = ResourceGrid::new(2, 10.0).unwrap();
        let ch = ChannelState::new(ndarray::array![[3.0, 7.0], [0.0, 0.0]]).unwrap();
        let m = AllocationMatrix::new(vec![Some(UserId(0)), Some(UserId(0))]);
        assert_eq!(user_rate(&m, &ch, UserId(0), &grid, 1.0), 50.0);
    }

    #[test]
    fn null_step_changes_nothing_but_time() {
        let e = env(1, 1, 3, Fading::Rayleigh, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut s = e.initial_state(&mut rng).unwrap();
        s.traffic.urllc_queue[1] = 700.0;
        let (next, out) = e.advance(&s, &AllocationMatrix::unassigned(3), &mut rng);
        assert_eq!(next.traffic.urllc_queue, s.traffic.urllc_queue);
        assert!(out.rates.iter().all(|r| *r == 0.0));
        assert_eq!(next.clock.t, 1);
    }

    #[test]
    fn queue_bookkeeping() {
        // one URLLC user; a single block with snr such that it carries 300 bits
        let users =
            UserSet::from_counts(0, 1, |_, _| LinkBudget::new(0.0, Fading::Rayleigh)).unwrap();
        let grid = ResourceGrid::new(1, 100.0).unwrap();
        let e = Environment {
            users,
            grid,
            qos: QosRequirement::default(),
            slot_duration: 1.0,
            lambda: LambdaSchedule::Constant(0.0),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = e.initial_state(&mut rng).unwrap();
        s.channel = ChannelState::new(ndarray::array![[7.0]]).unwrap(); // log2(8) * 100 = 300
        s.traffic.urllc_queue[0] = 500.0;
        let (next, out) = e.advance(&s, &AllocationMatrix::new(vec![Some(UserId(0))]), &mut rng);
        assert_eq!(out.delivered[0], 300.0);
        assert_eq!(next.traffic.urllc_queue[0], 200.0);
        assert_eq!(out.urllc_rate, 300.0);
    }

    #[test]
    fn short_run_is_reproducible() {
        let e = env(2, 2, 4, Fading::Rayleigh, 3.0);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let mut s = e.initial_state(&mut rng).unwrap();
            let m = AllocationMatrix::new((0..4).map(|b| Some(UserId(b as u32))).collect());
            let mut outs = Vec::new();
            for _ in 0..3 {
                let (n, o) = e.advance(&s, &m, &mut rng);
                s = n;
                outs.push(o);
            }
            outs
        };
        assert_eq!(run(), run());
    }
}
